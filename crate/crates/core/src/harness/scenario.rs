//! Running a scenario file end to end and writing its artifacts.
//!
//! Output directory layout:
//!
//! ```text
//! manifest.json            what ran, with the resolved config
//! environment.map          copy of the map
//! records/<agent>-s<seed>-<condition>-r<run>.csv
//! models/aif-s<seed>.json  final map of each AIF agent
//! ```
//!
//! Each record file starts with a `#schema=run_record/v1 ...` line carrying
//! the run's identity, followed by an ordinary CSV table with a header.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::agent::{AgentParams, AifAgent};
use super::config::{AgentKind, ScenarioConfig};
use super::obstacle::{run_obstacle_scenario, ObstacleSpec};
use super::run::{run_aif_episode, run_frontier_episode, EpisodeOutcome, EpisodeSpec, StepRecord};
use super::tolman::{classify_route, route_labels};
use crate::error::{Error, Result};
use crate::model::export::to_json;
use crate::model::GenerativeModel;
use crate::sim::{Cell, EventSchedule, FrontierAgent, GridEnv, SimConfig, Simulator};

pub const RECORD_SCHEMA: &str = "run_record/v1";
pub const MANIFEST_SCHEMA: &str = "manifest/v1";

/// One run of one agent under one condition.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub agent: AgentKind,
    pub seed: u64,
    pub condition: String,
    pub run: usize,
    pub temperature: f64,
    pub reached_goal: bool,
    pub rows: Vec<StepRecord>,
}

impl RunRecord {
    pub fn file_name(&self) -> String {
        format!(
            "{}-s{}-{}-r{:02}.csv",
            self.agent.as_str(),
            self.seed,
            self.condition,
            self.run
        )
    }

    fn header_line(&self) -> String {
        format!(
            "#schema={RECORD_SCHEMA} agent={} seed={} condition={} run={} temperature={} reached_goal={}",
            self.agent.as_str(),
            self.seed,
            self.condition,
            self.run,
            self.temperature,
            self.reached_goal
        )
    }

    /// Cells visited, starting from `start`.
    pub fn trail(&self, env: &GridEnv, start: Cell) -> Vec<Cell> {
        let mut t = vec![start];
        for r in &self.rows {
            if let Some(c) = env.pose_cell(&crate::model::Pose::new(r.true_x, r.true_y)) {
                t.push(c);
            }
        }
        t
    }

    pub fn to_csv(&self) -> Result<String> {
        for r in &self.rows {
            let vals = [
                r.true_x,
                r.true_y,
                r.believed_x,
                r.believed_y,
                r.learning_gain,
                r.inference_gain,
                r.collision_cost,
                r.preference_value,
                r.efe_total,
                r.surprise,
                r.coverage,
                r.distance,
            ];
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "non-finite value at step {}",
                    r.step
                )));
            }
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        if self.rows.is_empty() {
            w.write_record(STEP_COLUMNS)?;
        }
        let body = String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
            .expect("csv writes utf-8");
        Ok(format!("{}\n{}", self.header_line(), body))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let (first, body) = text.split_once('\n').unwrap_or((text, ""));
        let meta: BTreeMap<&str, &str> = first
            .strip_prefix('#')
            .ok_or_else(|| Error::InvalidArgument("record file lacks its #schema line".into()))?
            .split_whitespace()
            .filter_map(|kv| kv.split_once('='))
            .collect();
        if meta.get("schema") != Some(&RECORD_SCHEMA) {
            return Err(Error::InvalidArgument(format!(
                "unsupported record schema {:?}",
                meta.get("schema")
            )));
        }
        let get = |k: &str| {
            meta.get(k)
                .copied()
                .ok_or_else(|| Error::InvalidArgument(format!("record header lacks `{k}`")))
        };
        let bad = |k: &str| Error::InvalidArgument(format!("bad `{k}` in record header"));
        let mut rows = Vec::new();
        for r in csv::Reader::from_reader(body.as_bytes()).deserialize() {
            rows.push(r?);
        }
        Ok(Self {
            agent: get("agent")?.parse()?,
            seed: get("seed")?.parse().map_err(|_| bad("seed"))?,
            condition: get("condition")?.to_string(),
            run: get("run")?.parse().map_err(|_| bad("run"))?,
            temperature: get("temperature")?
                .parse()
                .map_err(|_| bad("temperature"))?,
            reached_goal: get("reached_goal")?
                .parse()
                .map_err(|_| bad("reached_goal"))?,
            rows,
        })
    }
}

const STEP_COLUMNS: [&str; 19] = [
    "step",
    "true_x",
    "true_y",
    "believed_x",
    "believed_y",
    "node",
    "num_nodes",
    "action",
    "succeeded",
    "learning_gain",
    "inference_gain",
    "collision_cost",
    "preference_value",
    "efe_total",
    "surprise",
    "kidnap_suspected",
    "teleported",
    "coverage",
    "distance",
];

/// Summary of the moved-obstacle experiment for one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSummary {
    pub seed: u64,
    pub blocked_node: Option<usize>,
    pub edges_into_blocked: usize,
    pub worst_ratio: Option<f64>,
    pub new_nodes_near_former: Vec<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct ScenarioResult {
    pub records: Vec<RunRecord>,
    /// Final model of each AIF agent, by seed.
    pub models: BTreeMap<u64, GenerativeModel>,
    pub obstacle: Vec<ObstacleSummary>,
}

/// A block of runs under fixed events.
#[derive(Clone, Debug)]
pub struct Condition {
    pub name: String,
    pub events: EventSchedule,
}

/// One agent through every condition in order, learning throughout.
#[derive(Clone, Debug)]
pub struct SequenceSpec {
    pub runs_per_condition: usize,
    pub episode: EpisodeSpec,
    pub sim: SimConfig,
    pub params: AgentParams,
    pub conditions: Vec<Condition>,
}

enum Runner {
    Aif(Box<AifAgent>),
    Frontier(FrontierAgent),
}

/// Run one agent through a condition sequence. Each condition starts from a
/// fresh copy of the map; each run starts with an unannounced move back to
/// the start cell. The frontier baseline always moves one cell per step.
pub fn run_sequence(
    env: &GridEnv,
    spec: &SequenceSpec,
    kind: AgentKind,
    seed: u64,
) -> Result<(Vec<RunRecord>, Option<GenerativeModel>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_e7e4);
    let mut runner: Option<Runner> = None;
    let mut out = Vec::new();
    let mut sim_cfg = spec.sim.clone();
    sim_cfg.noise_seed ^= seed;
    if kind == AgentKind::Frontier {
        // the baseline plans on the cell grid
        sim_cfg.step_length = 1.0;
    }
    for cond in &spec.conditions {
        let mut sim = Simulator::new(env.clone(), sim_cfg.clone())?;
        for run in 0..spec.runs_per_condition {
            sim.reset_to(env.start())?;
            let r = match &mut runner {
                Some(r) => r,
                None => runner.insert(match kind {
                    AgentKind::Aif => Runner::Aif(Box::new(AifAgent::new(
                        &sim.sense(),
                        env.num_symbols(),
                        spec.params.clone(),
                        seed,
                    )?)),
                    AgentKind::Frontier => Runner::Frontier(FrontierAgent::new(&sim)),
                }),
            };
            let mut rows = Vec::new();
            let ep: EpisodeOutcome = match r {
                Runner::Aif(a) => run_aif_episode(
                    &mut sim,
                    a,
                    &cond.events,
                    &spec.episode,
                    &mut rng,
                    &mut rows,
                )?,
                Runner::Frontier(f) => run_frontier_episode(
                    &mut sim,
                    f,
                    &cond.events,
                    &spec.episode,
                    &mut rng,
                    &mut rows,
                )?,
            };
            out.push(RunRecord {
                agent: kind,
                seed,
                condition: cond.name.clone(),
                run,
                temperature: spec.params.planner.temperature,
                reached_goal: ep.reached_goal,
                rows,
            });
        }
    }
    let model = match runner {
        Some(Runner::Aif(a)) => Some(a.model().clone()),
        _ => None,
    };
    Ok((out, model))
}

/// Everything a scenario file describes, with seeds run in parallel.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioResult> {
    let env = GridEnv::parse(&std::fs::read_to_string(&cfg.map)?)?;
    if let Some(o) = &cfg.obstacle {
        let spec = ObstacleSpec {
            sim: cfg.sim.clone(),
            params: cfg.params(),
            first: o.first,
            second: o.second,
            move_step: o.move_step,
            steps: cfg.steps,
        };
        let outcomes: Vec<_> = cfg
            .seeds
            .par_iter()
            .map(|&seed| run_obstacle_scenario(&env, &spec, seed).map(|o| (seed, o)))
            .collect::<Result<_>>()?;
        let mut res = ScenarioResult::default();
        for (seed, o) in outcomes {
            res.obstacle.push(ObstacleSummary {
                seed,
                blocked_node: o.blocked_node,
                edges_into_blocked: o.edges.len(),
                worst_ratio: o.worst_ratio(),
                new_nodes_near_former: o.new_nodes_near_former.clone(),
            });
            res.records.push(RunRecord {
                agent: AgentKind::Aif,
                seed,
                condition: "obstacle".into(),
                run: 0,
                temperature: cfg.planner.temperature,
                reached_goal: false,
                rows: o.records,
            });
            res.models.insert(seed, o.after);
        }
        return Ok(res);
    }

    let spec = SequenceSpec {
        runs_per_condition: cfg.runs_per_condition,
        episode: EpisodeSpec {
            steps: cfg.steps,
            stop_at_goal: cfg.stop_at_goal,
            kidnap_every: cfg.kidnap_every,
        },
        sim: cfg.sim.clone(),
        params: cfg.params(),
        conditions: cfg
            .load_conditions()?
            .into_iter()
            .map(|(name, events)| Condition { name, events })
            .collect(),
    };
    let jobs: Vec<(AgentKind, u64)> = cfg
        .agents
        .iter()
        .flat_map(|&k| cfg.seeds.iter().map(move |&s| (k, s)))
        .collect();
    let done: Vec<_> = jobs
        .par_iter()
        .map(|&(kind, seed)| run_sequence(&env, &spec, kind, seed).map(|r| (seed, r)))
        .collect::<Result<_>>()?;
    let mut res = ScenarioResult::default();
    for (seed, (records, model)) in done {
        res.records.extend(records);
        if let Some(m) = model {
            res.models.insert(seed, m);
        }
    }
    Ok(res)
}

/// Route taken by each completed run, when the map has both junctions.
pub fn routes(env: &GridEnv, records: &[RunRecord]) -> Option<Vec<Option<u8>>> {
    let labels = route_labels(env).ok()?;
    let goal = env.goal()?;
    Some(
        records
            .iter()
            .map(|r| {
                if r.reached_goal {
                    classify_route(&labels, &r.trail(env, env.start()), goal)
                } else {
                    None
                }
            })
            .collect(),
    )
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub agent: AgentKind,
    pub seed: u64,
    pub condition: String,
    pub run: usize,
    pub steps: usize,
    pub reached_goal: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub name: String,
    pub crate_version: String,
    pub environment: String,
    pub config: ScenarioConfig,
    pub records: Vec<ManifestEntry>,
    pub models: Vec<String>,
    #[serde(default)]
    pub obstacle: Vec<ObstacleSummary>,
}

/// Write `contents` to `path` via a temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|s| s.to_str()).unwrap_or("out")
    ));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Write records, models, the map copy and the manifest under `out`.
pub fn write_artifacts(out: &Path, cfg: &ScenarioConfig, res: &ScenarioResult) -> Result<Manifest> {
    let map_text = std::fs::read_to_string(&cfg.map)?;
    write_atomic(&out.join("environment.map"), map_text.as_bytes())?;
    let mut entries = Vec::new();
    for r in &res.records {
        let file = format!("records/{}", r.file_name());
        write_atomic(&out.join(&file), r.to_csv()?.as_bytes())?;
        entries.push(ManifestEntry {
            file,
            agent: r.agent,
            seed: r.seed,
            condition: r.condition.clone(),
            run: r.run,
            steps: r.rows.len(),
            reached_goal: r.reached_goal,
        });
    }
    let mut models = Vec::new();
    for (seed, m) in &res.models {
        let file = format!("models/aif-s{seed}.json");
        write_atomic(&out.join(&file), to_json(m).as_bytes())?;
        models.push(file);
    }
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA.to_string(),
        name: cfg.name.clone(),
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        environment: "environment.map".into(),
        config: cfg.clone(),
        records: entries,
        models,
        obstacle: res.obstacle.clone(),
    };
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    write_atomic(&out.join("manifest.json"), json.as_bytes())?;
    Ok(manifest)
}

/// Everything `report` and `--check` need from a records directory.
#[derive(Clone, Debug)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub env: GridEnv,
    pub records: Vec<RunRecord>,
}

pub fn load_run_dir(dir: &Path) -> Result<LoadedRun> {
    let manifest: Manifest =
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
    if manifest.schema != MANIFEST_SCHEMA {
        return Err(Error::InvalidArgument(format!(
            "unsupported manifest schema {}",
            manifest.schema
        )));
    }
    let env = GridEnv::parse(&std::fs::read_to_string(dir.join(&manifest.environment))?)?;
    let records = manifest
        .records
        .iter()
        .map(|e| RunRecord::from_csv(&std::fs::read_to_string(dir.join(&e.file))?))
        .collect::<Result<_>>()?;
    Ok(LoadedRun {
        dir: dir.to_path_buf(),
        manifest,
        env,
        records,
    })
}
