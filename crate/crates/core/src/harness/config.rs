//! Scenario files.
//!
//! A scenario is one TOML file. `extends = "base.toml"` pulls in another file
//! first and overlays this one on top of it: tables merge key by key, every
//! other value (arrays included) is replaced. Paths are resolved relative to
//! the file that mentions them.
//!
//! ```toml
//! extends = "tolman.toml"
//! name = "tolman-quick"
//! seeds = [0, 1]
//!
//! [planner]
//! beam = 8
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::agent::{AgentConfig, AgentParams};
use crate::error::{Error, Result};
use crate::inference::InferenceConfig;
use crate::planner::PlannerConfig;
use crate::sim::{Cell, Event, EventSchedule, SimConfig};
use crate::structure::StructureConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Aif,
    Frontier,
}

impl AgentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Aif => "aif",
            AgentKind::Frontier => "frontier",
        }
    }
}

impl std::str::FromStr for AgentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aif" => Ok(AgentKind::Aif),
            "frontier" => Ok(AgentKind::Frontier),
            other => Err(Error::Config(format!("unknown agent kind `{other}`"))),
        }
    }
}

/// Events layered on the base map for a block of runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionConfig {
    pub name: String,
    /// Sidecar events file.
    #[serde(default)]
    pub events: Option<PathBuf>,
    /// Events written directly in the scenario.
    #[serde(default)]
    pub inline: Vec<Event>,
}

/// The moved-obstacle experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleConfig {
    pub first: Cell,
    pub second: Cell,
    pub move_step: usize,
}

/// Acceptance thresholds checked by `run --check`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CheckConfig {
    /// `expected[i]` is the route that should be modal in condition `i`.
    Tolman { expected: Vec<u8>, min_share: f64 },
    /// The AIF agent's median distance to `target` coverage must be within
    /// `max_ratio` of the frontier agent's; every run must end at or above
    /// `min_final`.
    Coverage {
        target: f64,
        max_ratio: f64,
        min_final: f64,
    },
    /// Every edge into the blocked node must fall below `max_ratio` of its
    /// value before the move, and a node must be grown near the old cell.
    Obstacle { max_ratio: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub map: PathBuf,
    #[serde(default = "default_agents")]
    pub agents: Vec<AgentKind>,
    pub seeds: Vec<u64>,
    pub steps: usize,
    #[serde(default = "one")]
    pub runs_per_condition: usize,
    #[serde(default)]
    pub stop_at_goal: bool,
    #[serde(default)]
    pub kidnap_every: Option<usize>,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default)]
    pub inference: InferenceConfig,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub structure: StructureConfig,
    #[serde(default)]
    pub conditions: Vec<ConditionConfig>,
    #[serde(default)]
    pub obstacle: Option<ObstacleConfig>,
    #[serde(default)]
    pub check: Option<CheckConfig>,
}

fn default_agents() -> Vec<AgentKind> {
    vec![AgentKind::Aif]
}

fn one() -> usize {
    1
}

impl ScenarioConfig {
    /// Read a scenario file, following `extends`.
    pub fn load(path: &Path) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let value = load_merged(path, &mut seen)?;
        let cfg: ScenarioConfig = value.try_into().map_err(|e: toml::de::Error| {
            Error::Config(format!("{}: {}", path.display(), e.message()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse a single scenario text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut table = parse_table(text, "<inline>")?;
        if table.contains_key("extends") {
            return Err(Error::Config(
                "`extends` needs a file on disk; use ScenarioConfig::load".into(),
            ));
        }
        resolve_paths(&mut table, base);
        let cfg: ScenarioConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.agents.is_empty() {
            return Err(Error::Config("at least one agent kind is required".into()));
        }
        if self.steps == 0 || self.runs_per_condition == 0 {
            return Err(Error::Config(
                "steps and runs_per_condition must be positive".into(),
            ));
        }
        if !self.map.is_file() {
            return Err(Error::Config(format!(
                "map file {} not found",
                self.map.display()
            )));
        }
        for c in &self.conditions {
            if let Some(p) = &c.events {
                if !p.is_file() {
                    return Err(Error::Config(format!(
                        "events file {} not found",
                        p.display()
                    )));
                }
            }
        }
        if let Some(o) = &self.obstacle {
            if o.move_step == 0 || o.move_step >= self.steps {
                return Err(Error::Config(
                    "obstacle.move_step must fall inside the run".into(),
                ));
            }
        }
        self.params().inference.validate()?;
        self.params().planner.validate()?;
        if !(self.sim.step_length > 0.0 && self.sim.lidar_range > 0.0) {
            return Err(Error::Config(
                "sim.step_length and sim.lidar_range must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn params(&self) -> AgentParams {
        AgentParams {
            agent: self.agent.clone(),
            inference: self.inference.clone(),
            planner: self.planner.clone(),
            structure: self.structure.clone(),
        }
    }

    /// Conditions with their event files read; a scenario without any has a
    /// single event-free condition.
    pub fn load_conditions(&self) -> Result<Vec<(String, EventSchedule)>> {
        if self.conditions.is_empty() {
            return Ok(vec![("default".to_string(), EventSchedule::default())]);
        }
        self.conditions
            .iter()
            .map(|c| {
                let mut sched = match &c.events {
                    Some(p) => EventSchedule::parse(&std::fs::read_to_string(p)?)?,
                    None => EventSchedule::default(),
                };
                sched.extend(c.inline.iter().cloned())?;
                Ok((c.name.clone(), sched))
            })
            .collect()
    }
}

fn parse_table(text: &str, origin: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>().map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
            .unwrap_or(0);
        Error::Config(format!("{origin}:{line}: {}", e.message()))
    })
}

fn load_merged(path: &Path, seen: &mut BTreeSet<PathBuf>) -> Result<toml::Value> {
    let canonical = path
        .canonicalize()
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if !seen.insert(canonical.clone()) {
        return Err(Error::Config(format!(
            "`extends` cycle through {}",
            path.display()
        )));
    }
    let text = std::fs::read_to_string(&canonical)?;
    let mut table = parse_table(&text, &path.display().to_string())?;
    let dir = canonical.parent().unwrap_or(Path::new(".")).to_path_buf();
    resolve_paths(&mut table, &dir);
    let base = match table.remove("extends") {
        Some(toml::Value::String(parent)) => Some(load_merged(&dir.join(parent), seen)?),
        Some(_) => {
            return Err(Error::Config(format!(
                "{}: `extends` must be a string",
                path.display()
            )))
        }
        None => None,
    };
    let mut value = toml::Value::Table(table);
    if let Some(mut base) = base {
        merge(&mut base, value);
        value = base;
    }
    Ok(value)
}

fn resolve_paths(table: &mut toml::Table, dir: &Path) {
    let fix = |v: &mut toml::Value| {
        if let toml::Value::String(s) = v {
            let p = Path::new(s.as_str());
            if p.is_relative() {
                *s = dir.join(p).to_string_lossy().into_owned();
            }
        }
    };
    if let Some(v) = table.get_mut("map") {
        fix(v);
    }
    if let Some(toml::Value::Array(conds)) = table.get_mut("conditions") {
        for c in conds {
            if let Some(v) = c.as_table_mut().and_then(|t| t.get_mut("events")) {
                fix(v);
            }
        }
    }
}

/// Overlay `top` onto `base`.
fn merge(base: &mut toml::Value, top: toml::Value) {
    match (base, top) {
        (toml::Value::Table(b), toml::Value::Table(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
