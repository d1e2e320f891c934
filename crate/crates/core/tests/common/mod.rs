//! Shared fixtures, independent oracles and the acceptance checks.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use aif_nav::harness::config::{CheckConfig, ScenarioConfig};
use aif_nav::harness::report::{all_passed, evaluate_checks, tolman_report};
use aif_nav::harness::scenario::{run_scenario, RunRecord, ScenarioResult};
use aif_nav::harness::{AgentParams, AifAgent};
use aif_nav::inference::{infer_joint, learn_observation, predict_pose};
use aif_nav::model::export::{MapDocument, MapEdge, MapNode, MAP_SCHEMA_VERSION};
use aif_nav::model::{
    Action, Belief, GenerativeModel, ObservationSymbol, Pose, FLOOR, HEADINGS, MAX_NEIGHBOURS,
};
use aif_nav::planner::{
    efe_policy, learn_transition, plan, policy_distribution, predicted_transition_sweep,
    select_policy, MotionOutcome, PlannerConfig, Policy, RayScan,
};
use aif_nav::sim::{Cell, GridEnv, SimConfig, Simulator};
use aif_nav::structure::{apply_link, grow_in_place, propose_candidates, StructureConfig};
use petgraph::algo::{ford_fulkerson, has_path_connecting};
use petgraph::graph::{DiGraph, NodeIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
}

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub fn load_env(fixture: &str) -> GridEnv {
    GridEnv::parse(&std::fs::read_to_string(fixture_path(fixture)).unwrap()).unwrap()
}

// ---------------------------------------------------------------------------
// Random models

/// Raw parameters of a model built from scratch, kept so oracles never have
/// to read them back through the code under test.
pub struct RawModel {
    pub anchors: Vec<(f64, f64)>,
    pub visited: Vec<bool>,
    pub obs: Vec<Vec<f64>>,
    /// (action, from, to, count)
    pub edges: Vec<(Action, usize, usize, f64)>,
    pub spacing: f64,
}

impl RawModel {
    pub fn random(rng: &mut impl Rng, n: usize, symbols: usize, edge_p: f64) -> Self {
        let mut lattice: Vec<(f64, f64)> =
            (0..9).map(|i| ((i % 3) as f64, (i / 3) as f64)).collect();
        lattice.shuffle(rng);
        let anchors = lattice[..n].to_vec();
        let visited = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let obs = (0..n)
            .map(|_| (0..symbols).map(|_| rng.random_range(FLOOR..4.0)).collect())
            .collect();
        let mut edges = Vec::new();
        for a in Action::ALL {
            for from in 0..n {
                for to in 0..n {
                    if rng.random_bool(edge_p) {
                        edges.push((a, from, to, rng.random_range(FLOOR..6.0)));
                    }
                }
            }
        }
        Self {
            anchors,
            visited,
            obs,
            edges,
            spacing: 1.0,
        }
    }

    pub fn n(&self) -> usize {
        self.anchors.len()
    }

    pub fn symbols(&self) -> usize {
        self.obs[0].len()
    }

    pub fn build(&self) -> GenerativeModel {
        let doc = MapDocument {
            version: MAP_SCHEMA_VERSION,
            spacing: self.spacing,
            resolution: None,
            num_symbols: self.symbols(),
            confidence: 1.0,
            nodes: (0..self.n())
                .map(|i| MapNode {
                    id: i,
                    anchor: [self.anchors[i].0, self.anchors[i].1],
                    visited: self.visited[i],
                    obs_mode: 0,
                    obs_counts: self.obs[i].clone(),
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|&(a, from, to, count)| MapEdge {
                    action: a.label(),
                    from,
                    to,
                    count,
                    prob: 0.0,
                })
                .collect(),
        };
        doc.into_model().unwrap()
    }

    /// Dense `P(to | from, a)`; a row without a stored self entry carries an
    /// implicit floor count there.
    pub fn transition(&self, a: Action) -> Vec<Vec<f64>> {
        let n = self.n();
        let mut m = vec![vec![0.0; n]; n];
        let mut has_self = vec![false; n];
        for &(b, from, to, c) in &self.edges {
            if b == a {
                m[from][to] = c;
                has_self[from] |= from == to;
            }
        }
        for (j, row) in m.iter_mut().enumerate() {
            if !has_self[j] {
                row[j] = FLOOR;
            }
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= s);
        }
        m
    }

    pub fn obs_prob(&self, node: usize, symbol: usize) -> f64 {
        self.obs[node][symbol] / self.obs[node].iter().sum::<f64>()
    }

    pub fn neighbours(&self, node: usize) -> usize {
        self.edges
            .iter()
            .filter(|e| e.1 == node && e.2 != node)
            .map(|e| e.2)
            .collect::<BTreeSet<_>>()
            .len()
    }
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|x| x * x.ln())
        .sum::<f64>()
}

fn normalised(v: &[f64]) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}

// ---------------------------------------------------------------------------
// Criterion 1: the filter against enumeration of every state sequence

fn oracle_predict(
    q_p: &[(Pose, f64)],
    a: Action,
    spacing: f64,
    pc: &dyn Fn(&Pose) -> f64,
) -> Vec<(Pose, f64)> {
    let mut out: Vec<(Pose, f64)> = Vec::new();
    let mut push = |p: Pose, w: f64| {
        if w <= 0.0 {
            return;
        }
        if let Some(e) = out
            .iter_mut()
            .find(|(q, _)| (q.x - p.x).abs() <= 1e-9 && (q.y - p.y).abs() <= 1e-9)
        {
            e.1 += w;
        } else {
            out.push((p, w));
        }
    };
    for &(pose, w) in q_p {
        match a {
            Action::Stay => push(pose, w),
            _ => {
                let th = (a.index() as f64 * 30.0).to_radians();
                let c = pc(&pose).clamp(0.0, 1.0);
                push(
                    Pose::new(pose.x + spacing * th.cos(), pose.y + spacing * th.sin()),
                    w * (1.0 - c),
                );
                push(pose, w * c);
            }
        }
    }
    out
}

fn gauss(raw: &RawModel, i: usize, p: &Pose) -> f64 {
    let sd = raw.spacing / 2.0;
    let (ax, ay) = raw.anchors[i];
    (-((ax - p.x).powi(2) + (ay - p.y).powi(2)) / (2.0 * sd * sd)).exp()
}

/// One random model and trajectory. Returns the worst absolute deviation.
/// Time spent inside the filter itself is added to `spent`.
pub fn filter_case(rng: &mut ChaCha8Rng, spent: &mut Duration) -> Result<f64, String> {
    let n = rng.random_range(1..=5);
    let k = rng.random_range(1..=4);
    let steps = rng.random_range(1..=10);
    let raw = RawModel::random(rng, n, k, 0.45);
    let model = raw.build();
    let pc = |p: &Pose| ((1.7 * p.x + 2.3 * p.y).sin() * 0.8 + 0.5).clamp(0.0, 1.0);

    let q0 = normalised(
        &(0..n)
            .map(|_| rng.random_range(0.0..1.0))
            .collect::<Vec<_>>(),
    );
    let m0 = rng.random_range(1..=3);
    let p0: Vec<(Pose, f64)> = (0..m0)
        .map(|_| {
            (
                Pose::new(rng.random_range(-0.5..2.5), rng.random_range(-0.5..2.5)),
                rng.random_range(0.1..1.0),
            )
        })
        .collect();
    let p0_total: f64 = p0.iter().map(|e| e.1).sum();
    let p0: Vec<(Pose, f64)> = p0.into_iter().map(|(p, w)| (p, w / p0_total)).collect();

    let mut belief = Belief {
        q_s: q0.clone(),
        q_p: p0.clone(),
    };
    // Oracle state: the weight of every state sequence so far, indexed in
    // base n with the latest state as the lowest digit.
    let mut seqs = q0;
    let mut o_qp = p0;
    let mut worst: f64 = 0.0;
    for t in 0..steps {
        let a = Action::ALL[rng.random_range(0..Action::ALL.len())];
        let o = rng.random_range(0..k);
        let obs = ObservationSymbol::new(o as u32);

        let t0 = Instant::now();
        let predicted = predict_pose(&belief, a, &model, pc);
        let post =
            infer_joint(&obs, &predicted, &belief.q_s, a, &model).map_err(|e| e.to_string())?;
        *spent += t0.elapsed();

        let o_pred = oracle_predict(&o_qp, a, raw.spacing, &pc);
        let w: Vec<f64> = (0..n)
            .map(|i| {
                o_pred
                    .iter()
                    .map(|(p, q)| {
                        let z: f64 = (0..n).map(|j| gauss(&raw, j, p)).sum();
                        q * gauss(&raw, i, p) / z
                    })
                    .sum()
            })
            .collect();
        let b = raw.transition(a);
        let mut next = vec![0.0; seqs.len() * n];
        for (idx, &wt) in seqs.iter().enumerate() {
            let last = idx % n;
            for s in 0..n {
                next[idx * n + s] = wt * b[last][s] * raw.obs_prob(s, o) * w[s];
            }
        }
        seqs = next;
        let mut marg = vec![0.0; n];
        for (idx, &wt) in seqs.iter().enumerate() {
            marg[idx % n] += wt;
        }
        let marg = normalised(&marg);

        let mut o_new: Vec<(Pose, f64)> = o_pred
            .iter()
            .map(|(p, q)| {
                (
                    *p,
                    q * (0..n).map(|i| marg[i] * gauss(&raw, i, p)).sum::<f64>(),
                )
            })
            .collect();
        if o_new.len() > n + 1 {
            let mut idx: Vec<usize> = (0..o_new.len()).collect();
            idx.sort_by(|&x, &y| o_new[y].1.total_cmp(&o_new[x].1).then(x.cmp(&y)));
            idx.truncate(n + 1);
            idx.sort_unstable();
            o_new = idx.into_iter().map(|i| o_new[i]).collect();
        }
        let tot: f64 = o_new.iter().map(|e| e.1).sum();
        o_new.iter_mut().for_each(|e| e.1 /= tot);

        for i in 0..n {
            worst = worst.max((post.belief.q_s[i] - marg[i]).abs());
        }
        if post.belief.q_p.len() != o_new.len() {
            return Err(format!(
                "step {t}: {} pose candidates, oracle has {}",
                post.belief.q_p.len(),
                o_new.len()
            ));
        }
        for ((p, q), (op, oq)) in post.belief.q_p.iter().zip(&o_new) {
            if p.distance(op) > 1e-9 {
                return Err(format!("step {t}: pose {p} vs oracle {op}"));
            }
            worst = worst.max((q - oq).abs());
        }
        belief = post.belief;
        o_qp = o_new;
    }
    Ok(worst)
}

pub fn filter_oracle(models: usize, seed: u64) -> Verdict {
    let mut spent = Duration::ZERO;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for m in 0..models {
        match filter_case(&mut rng, &mut spent) {
            Ok(w) => worst = worst.max(w),
            Err(e) => return Verdict::new("filter oracle", false, format!("model {m}: {e}")),
        }
    }
    let secs = spent.as_secs_f64();
    Verdict::new(
        "filter oracle",
        worst <= 1e-9 && secs < 10.0,
        format!("{models} models, worst deviation {worst:.2e} (<= 1e-9), filter time {secs:.3}s (< 10s)"),
    )
}

// ---------------------------------------------------------------------------
// Criterion 2: transition learning in closed form

fn two_node_model(forward: f64, reverse: f64) -> GenerativeModel {
    let mut raw = RawModel {
        anchors: vec![(0.0, 0.0), (1.0, 0.0)],
        visited: vec![true, true],
        obs: vec![vec![1.0, FLOOR], vec![FLOOR, 1.0]],
        edges: vec![],
        spacing: 1.0,
    };
    raw.edges.push((Action::heading(0), 0, 1, forward));
    raw.edges.push((Action::heading(6), 1, 0, reverse));
    raw.build()
}

/// One cell of the learning-rate table: forward and reverse counts after a
/// single update from B = 4 with Q = 0.125.
fn table_cell(attempted: bool, possible: bool) -> (f64, f64) {
    let mut m = two_node_model(4.0, 4.0);
    let outcome = MotionOutcome {
        intended: Action::heading(0),
        succeeded: possible,
        physically_attempted: attempted,
        resulting_pose: Pose::new(1.0, 0.0),
    };
    let u = learn_transition(&mut m, 0, 1, &outcome, 0.125).unwrap();
    (u.forward.unwrap().1, u.reverse.unwrap().1)
}

pub fn transition_closed_form() -> Verdict {
    // B + Q·B·λ with B = 4, Q = 1/8: λ = ±7 → 4 ± 3.5, ±5 → 4 ± 2.5, ±3 → 4 ± 1.5
    let cases = [
        ("attempted possible", true, true, 7.5, 6.5),
        ("attempted impossible", true, false, 0.5, 1.5),
        ("predicted possible", false, true, 6.5, 5.5),
        ("predicted impossible", false, false, 1.5, 2.5),
    ];
    let mut bad = Vec::new();
    for (name, attempted, possible, fwd, rev) in cases {
        let got = table_cell(attempted, possible);
        if got != (fwd, rev) {
            bad.push(format!("{name}: got {got:?}, want ({fwd}, {rev})"));
        }
    }
    // B = 0.5, Q = 1, λ = 7 → 4
    let mut m = two_node_model(0.5, 1.0);
    let go = MotionOutcome {
        intended: Action::heading(0),
        succeeded: true,
        physically_attempted: true,
        resulting_pose: Pose::new(1.0, 0.0),
    };
    let u = learn_transition(&mut m, 0, 1, &go, 1.0).unwrap();
    if u.forward != Some((0.5, 4.0)) {
        bad.push(format!("B=0.5 Q=1 λ=7: got {:?}", u.forward));
    }
    // B = 4, Q = 0.25, λ = -7 → -3 → floor
    let mut m = two_node_model(4.0, 4.0);
    let blocked = MotionOutcome {
        succeeded: false,
        ..go
    };
    let u = learn_transition(&mut m, 0, 1, &blocked, 0.25).unwrap();
    if u.forward != Some((4.0, 1e-3)) {
        bad.push(format!("clamp case: got {:?}", u.forward));
    }
    // the removed mass lands on the blocked self entry
    if m.self_count(Action::heading(0), 0) != FLOOR + (4.0 - 1e-3) {
        bad.push(format!(
            "self entry after clamp: {}",
            m.self_count(Action::heading(0), 0)
        ));
    }
    Verdict::new(
        "transition learning closed form",
        bad.is_empty(),
        if bad.is_empty() {
            "8 rate cells, B=0.5/Q=1/λ=7 → 4, clamp 4/0.25/−7 → 1e-3, exact".to_string()
        } else {
            bad.join("; ")
        },
    )
}

// ---------------------------------------------------------------------------
// Criterion 3: route preferences, plus graph search on the maze fixture

fn grid_graph(env: &GridEnv, removed: &[Cell]) -> (DiGraph<Cell, u32>, Vec<Option<NodeIndex>>) {
    let mut g = DiGraph::new();
    let w = env.width();
    let mut idx = vec![None; w * env.height()];
    for c in env.free_cells() {
        if !removed.contains(&c) {
            idx[c.0 * w + c.1] = Some(g.add_node(c));
        }
    }
    for c in env.free_cells() {
        let Some(a) = idx[c.0 * w + c.1] else {
            continue;
        };
        for (dr, dc) in [(0i64, 1i64), (1, 0)] {
            let (r, k) = (c.0 as i64 + dr, c.1 as i64 + dc);
            if !env.in_bounds(r, k) {
                continue;
            }
            if let Some(b) = idx[r as usize * w + k as usize] {
                g.add_edge(a, b, 1);
                g.add_edge(b, a, 1);
            }
        }
    }
    (g, idx)
}

fn max_routes(env: &GridEnv, removed: &[Cell]) -> u32 {
    let (g, idx) = grid_graph(env, removed);
    let w = env.width();
    let at = |c: Cell| idx[c.0 * w + c.1].unwrap();
    ford_fulkerson(&g, at(env.start()), at(env.goal().unwrap())).0
}

fn connected(env: &GridEnv, removed: &[Cell], from: Cell, to: Cell) -> bool {
    let (g, idx) = grid_graph(env, removed);
    let w = env.width();
    match (idx[from.0 * w + from.1], idx[to.0 * w + to.1]) {
        (Some(a), Some(b)) => has_path_connecting(&g, a, b, None),
        _ => false,
    }
}

/// A start→goal walk through `via` that avoids the cells in `avoid`.
fn route_through(env: &GridEnv, via: Cell, avoid: &[Cell]) -> bool {
    let (s, g) = (env.start(), env.goal().unwrap());
    let mut first: Vec<Cell> = avoid.to_vec();
    first.push(g);
    let mut second: Vec<Cell> = avoid.to_vec();
    second.push(s);
    connected(env, &first, s, via) && connected(env, &second, via, g)
}

pub fn tolman_fixture_routes() -> Verdict {
    let env = load_env("tolman.map");
    let (a, b) = (env.junction('A').unwrap(), env.junction('B').unwrap());
    let (s, g) = (env.start(), env.goal().unwrap());
    let open = max_routes(&env, &[]);
    let checks = [
        ("3 edge-disjoint routes", open == 3),
        ("open: route 1 via A", route_through(&env, a, &[b])),
        ("open: route 2 via B", route_through(&env, b, &[a])),
        (
            "open: route 3 avoiding A and B",
            connected(&env, &[a, b], s, g),
        ),
        ("A blocked: 2 routes", max_routes(&env, &[a]) == 2),
        ("A blocked: route 2 kept", route_through(&env, b, &[a])),
        ("A blocked: route 3 kept", connected(&env, &[a, b], s, g)),
        ("B blocked: 2 routes", max_routes(&env, &[b]) == 2),
        ("B blocked: route 1 kept", route_through(&env, a, &[b])),
        ("B blocked: route 3 kept", connected(&env, &[a, b], s, g)),
        ("A and B blocked: 1 route", max_routes(&env, &[a, b]) == 1),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    Verdict::new(
        "maze fixture graph search",
        failed.is_empty(),
        if failed.is_empty() {
            format!(
                "{} routes open; blocking A or B removes exactly its own route",
                open
            )
        } else {
            format!("failed: {}", failed.join(", "))
        },
    )
}

pub fn run_config(name: &str) -> (ScenarioConfig, ScenarioResult, Duration) {
    let cfg = ScenarioConfig::load(&scenario_path(name)).unwrap();
    cfg.validate().unwrap();
    let t = Instant::now();
    let res = run_scenario(&cfg).unwrap();
    (cfg, res, t.elapsed())
}

pub fn check_lines(cfg: &ScenarioConfig, res: &ScenarioResult) -> Vec<String> {
    let env = GridEnv::parse(&std::fs::read_to_string(&cfg.map).unwrap()).unwrap();
    let lines = evaluate_checks(
        cfg.check.as_ref().unwrap(),
        &env,
        &res.records,
        &res.obstacle,
    )
    .unwrap();
    assert!(!lines.is_empty());
    let mut out: Vec<String> = lines.iter().map(|l| l.to_string()).collect();
    if !all_passed(&lines) {
        out.insert(0, "FAILED".into());
    }
    out
}

pub fn tolman_routes(cfg: &ScenarioConfig, res: &ScenarioResult, elapsed: Duration) -> Verdict {
    let env = GridEnv::parse(&std::fs::read_to_string(&cfg.map).unwrap()).unwrap();
    let rep = tolman_report(&env, &res.records).unwrap();
    let Some(CheckConfig::Tolman {
        expected,
        min_share,
    }) = &cfg.check
    else {
        panic!("tolman scenario lacks its check");
    };
    let mut ok = rep.conditions.len() == 3 && res.records.len() == 10 * 12 * 3;
    let mut parts = Vec::new();
    for (c, want) in rep.conditions.iter().zip(expected) {
        let share = c.completion_shares[*want as usize - 1];
        let sum: f64 = c.shares.iter().sum();
        ok &= c.modal == Some(*want) && share >= *min_share && (sum - 1.0).abs() < 1e-12;
        parts.push(format!(
            "({}) {:?}+{} incomplete, route {want} {:.0}%",
            c.condition,
            c.counts,
            c.incomplete,
            share * 100.0
        ));
    }
    let secs = elapsed.as_secs_f64();
    ok &= secs < 300.0;
    Verdict::new(
        "route preferences",
        ok,
        format!(
            "{} runs; {}; {secs:.1}s (< 300s)",
            res.records.len(),
            parts.join(", ")
        ),
    )
}

// ---------------------------------------------------------------------------
// Criterion 4: kidnap recovery

/// (recovered, events) over mid-run teleports and unannounced returns to the
/// start between runs.
pub fn kidnap_recovery(records: &[RunRecord], window: usize) -> (usize, usize) {
    let mut events = 0;
    let mut recovered = 0;
    let mut seen_agent: BTreeSet<(String, u64)> = BTreeSet::new();
    for r in records {
        let first_run = seen_agent.insert((r.agent.as_str().to_string(), r.seed));
        let mut starts: Vec<usize> = r
            .rows
            .iter()
            .enumerate()
            .filter(|(_, x)| x.teleported)
            .map(|(i, _)| i)
            .collect();
        if !first_run {
            starts.insert(0, 0);
        }
        for k in starts {
            events += 1;
            let ok = r.rows[k..(k + window).min(r.rows.len())].iter().any(|x| {
                Pose::new(x.true_x, x.true_y).distance(&Pose::new(x.believed_x, x.believed_y))
                    <= 1.0 + 1e-9
            });
            recovered += ok as usize;
        }
    }
    (recovered, events)
}

pub fn kidnap_verdict(records: &[RunRecord]) -> Verdict {
    let (ok, n) = kidnap_recovery(records, 10);
    let rate = ok as f64 / n.max(1) as f64;
    Verdict::new(
        "kidnap recovery",
        n > 0 && rate >= 0.8,
        format!(
            "{ok}/{n} events within 1 cell inside 10 steps ({:.1}%, need >= 80%)",
            rate * 100.0
        ),
    )
}

// ---------------------------------------------------------------------------
// Criteria 5 and 6: scenario checks

pub fn scenario_verdict(name: &str, file: &str, limit: Option<f64>) -> Verdict {
    let (cfg, res, elapsed) = run_config(file);
    let lines = check_lines(&cfg, &res);
    let secs = elapsed.as_secs_f64();
    let mut ok = lines[0] != "FAILED";
    let mut detail: Vec<String> = lines.into_iter().filter(|l| l != "FAILED").collect();
    if let Some(limit) = limit {
        ok &= secs < limit;
        detail.push(format!("{secs:.1}s (< {limit:.0}s)"));
    }
    Verdict::new(name, ok, detail.join("; "))
}

// ---------------------------------------------------------------------------
// Criterion 7: structural invariants under random operations

fn random_scan(rng: &mut impl Rng) -> RayScan {
    let range = 3.0;
    let collision: [bool; HEADINGS] = std::array::from_fn(|_| rng.random_bool(0.3));
    let free_distance = std::array::from_fn(|h| {
        if collision[h] {
            rng.random_range(0.0..1.0)
        } else {
            rng.random_range(1.0..=range)
        }
    });
    RayScan {
        collision,
        free_distance,
        range,
    }
}

fn check_model(m: &GenerativeModel, anchors: &[Pose]) -> Result<(), String> {
    m.check_invariants()?;
    if m.len() < anchors.len() {
        return Err("node count decreased".into());
    }
    for (i, a) in anchors.iter().enumerate() {
        if m.anchor(i) != *a {
            return Err(format!("anchor {i} moved"));
        }
    }
    for j in 0..m.len() {
        if m.neighbours(j).len() > MAX_NEIGHBOURS {
            return Err(format!("node {j} over the neighbour cap"));
        }
    }
    Ok(())
}

/// Random grow / link / learn / infer / sweep operations on one model.
fn model_sequence(rng: &mut ChaCha8Rng, ops: usize) -> Result<(), String> {
    let k = rng.random_range(2..=5);
    let start = ObservationSymbol::new(rng.random_range(0..k) as u32);
    let mut m =
        GenerativeModel::new(&start, Pose::new(0.0, 0.0), 1.0, k).map_err(|e| e.to_string())?;
    let mut belief = Belief::point(1, 0, Pose::new(0.0, 0.0));
    let cfg = StructureConfig::default();
    for op in 0..ops {
        let snapshot: Vec<Pose> = (0..m.len()).map(|i| m.anchor(i)).collect();
        let node = rng.random_range(0..m.len());
        let what = rng.random_range(0..5);
        match what {
            0 => {
                let col: [f64; HEADINGS] =
                    std::array::from_fn(|_| [0.0, 0.3, 1.0][rng.random_range(0..3)]);
                let p = propose_candidates(&m, node, &col, &cfg).map_err(|e| e.to_string())?;
                for l in &p.links {
                    apply_link(&mut m, node, l, &cfg).map_err(|e| e.to_string())?;
                }
                if !p.candidates.is_empty() {
                    let c = &p.candidates[rng.random_range(0..p.candidates.len())];
                    // spacing or cap refusals are allowed; corruption is not
                    let _ = grow_in_place(&mut m, c, node, &cfg);
                }
            }
            1 => {
                let to = rng.random_range(0..m.len());
                let outcome = MotionOutcome {
                    intended: Action::ALL[rng.random_range(0..Action::ALL.len())],
                    succeeded: rng.random_bool(0.5),
                    physically_attempted: rng.random_bool(0.5),
                    resulting_pose: m.anchor(to),
                };
                learn_transition(&mut m, node, to, &outcome, rng.random_range(0.0..=1.0))
                    .map_err(|e| e.to_string())?;
            }
            2 => {
                belief.resize(m.len());
                let a = Action::ALL[rng.random_range(0..Action::ALL.len())];
                let pc = rng.random_range(0.0..=1.0);
                let pred = predict_pose(&belief, a, &m, |_| pc);
                let mass: f64 = pred.iter().map(|e| e.1).sum();
                if (mass - 1.0).abs() > 1e-9 {
                    return Err(format!("op {op}: predicted pose mass {mass}"));
                }
                let obs = ObservationSymbol::new(rng.random_range(0..k) as u32);
                let post =
                    infer_joint(&obs, &pred, &belief.q_s, a, &m).map_err(|e| e.to_string())?;
                if !post.belief.is_valid(1e-9) || post.belief.q_s.len() != m.len() {
                    return Err(format!("op {op}: invalid belief {:?}", post.belief));
                }
                belief = post.belief;
            }
            3 => {
                predicted_transition_sweep(
                    &mut m,
                    node,
                    &random_scan(rng),
                    8,
                    rng.random_range(0.0..=1.0),
                )
                .map_err(|e| e.to_string())?;
            }
            _ => {
                let obs = ObservationSymbol::new(rng.random_range(0..k) as u32);
                learn_observation(&mut m, node, &obs, rng.random_range(0.1..2.0), true)
                    .map_err(|e| e.to_string())?;
            }
        }
        check_model(&m, &snapshot).map_err(|e| format!("op {op} ({what}): {e}"))?;
    }
    Ok(())
}

/// An agent wandering the maze with random teleports. Returns how many steps
/// were taken under suspicion, all of which must leave the model untouched.
fn agent_sequence(rng: &mut ChaCha8Rng, env: &GridEnv, steps: usize) -> Result<usize, String> {
    let mut sim = Simulator::new(
        env.clone(),
        SimConfig {
            step_length: 1.0,
            lidar_range: 1.0,
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let free: Vec<Cell> = env.free_cells().collect();
    let mut agent = AifAgent::new(
        &sim.sense(),
        env.num_symbols(),
        AgentParams::default(),
        rng.random(),
    )
    .map_err(|e| e.to_string())?;
    let mut frozen = 0;
    for t in 0..steps {
        if rng.random_bool(0.15) {
            sim.teleport(free[rng.random_range(0..free.len())])
                .map_err(|e| e.to_string())?;
        }
        let a = Action::ALL[rng.random_range(0..Action::ALL.len())];
        let before = agent.model().fingerprint();
        let anchors: Vec<Pose> = (0..agent.model().len())
            .map(|i| agent.model().anchor(i))
            .collect();
        let step = sim.step(a);
        let rep = agent
            .observe(a, &step, &sim.sense())
            .map_err(|e| e.to_string())?;
        if rep.kidnap_suspected && rep.permission {
            return Err(format!(
                "step {t}: suspected kidnap still granted permission"
            ));
        }
        if !rep.permission {
            frozen += 1;
            if agent.model().fingerprint() != before {
                return Err(format!("step {t}: model changed while updates were frozen"));
            }
        }
        check_model(agent.model(), &anchors).map_err(|e| format!("agent step {t}: {e}"))?;
        if !agent.belief().is_valid(1e-9) {
            return Err(format!("agent step {t}: invalid belief"));
        }
    }
    Ok(frozen)
}

pub fn invariant_suite(sequences: usize, seed: u64) -> Verdict {
    let env = load_env("tolman.map");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frozen = 0;
    let mut agents = 0;
    for s in 0..sequences {
        let r = if s % 4 == 3 {
            agents += 1;
            agent_sequence(&mut rng, &env, 12).map(|f| frozen += f)
        } else {
            model_sequence(&mut rng, 20)
        };
        if let Err(e) = r {
            return Verdict::new("structural invariants", false, format!("sequence {s}: {e}"));
        }
    }
    Verdict::new(
        "structural invariants",
        frozen > 0,
        format!(
            "{sequences} sequences ({} model, {agents} agent), {frozen} frozen steps left the model unchanged",
            sequences - agents
        ),
    )
}

// ---------------------------------------------------------------------------
// Criterion 8: planner properties

pub fn shift_invariance(cases: usize, seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let n = rng.random_range(1..=20);
        let totals: Vec<f64> = (0..n).map(|_| rng.random_range(-20.0..20.0)).collect();
        let c = rng.random_range(-1e3..1e3);
        let shifted: Vec<f64> = totals.iter().map(|g| g + c).collect();
        let temp = rng.random_range(0.05..5.0);
        let p = policy_distribution(&totals, temp).map_err(|e| e.to_string())?;
        let q = policy_distribution(&shifted, temp).map_err(|e| e.to_string())?;
        for (a, b) in p.iter().zip(&q) {
            worst = worst.max((a - b).abs());
        }
        let scored = |t: &[f64]| -> Vec<aif_nav::planner::ScoredPolicy> {
            t.iter()
                .map(|&g| aif_nav::planner::ScoredPolicy {
                    policy: Policy::new(vec![Action::Stay]),
                    efe: aif_nav::planner::EFEBreakdown {
                        total: g,
                        ..Default::default()
                    },
                })
                .collect()
        };
        let s: u64 = rng.random();
        let i = select_policy(&scored(&totals), temp, &mut ChaCha8Rng::seed_from_u64(s))
            .map_err(|e| e.to_string())?;
        let j = select_policy(&scored(&shifted), temp, &mut ChaCha8Rng::seed_from_u64(s))
            .map_err(|e| e.to_string())?;
        let close = p[..i].iter().sum::<f64>() - q[..i].iter().sum::<f64>();
        if i != j && close.abs() > 1e-12 {
            return Err(format!("shift changed the sampled policy: {i} vs {j}"));
        }
    }
    Ok(worst)
}

/// A visited node with peaked observations surrounded by a mix of visited
/// and unvisited neighbours, one target per heading.
fn frontier_model(rng: &mut ChaCha8Rng) -> (RawModel, usize) {
    let k = rng.random_range(2..=5);
    let spots: Vec<(f64, f64)> = (0..HEADINGS)
        .map(|h| {
            let th = (h as f64 * 30.0).to_radians();
            (th.cos(), th.sin())
        })
        .collect();
    let mut order: Vec<usize> = (0..HEADINGS).collect();
    order.shuffle(rng);
    let m = rng.random_range(1..=4);
    // headings spaced at least 60 degrees apart keep anchors one spacing apart
    let mut chosen: Vec<usize> = Vec::new();
    for h in order {
        if chosen.iter().all(|&c| {
            let d = (h as i64 - c as i64).rem_euclid(12);
            d.min(12 - d) >= 2
        }) {
            chosen.push(h);
        }
        if chosen.len() == m {
            break;
        }
    }
    let mut raw = RawModel {
        anchors: vec![(0.0, 0.0)],
        visited: vec![true],
        obs: vec![],
        edges: vec![],
        spacing: 1.0,
    };
    for &h in &chosen {
        raw.anchors.push(spots[h]);
        raw.visited.push(rng.random_bool(0.5));
    }
    let n = raw.anchors.len();
    if raw.visited[1..].iter().all(|v| *v) {
        raw.visited[1] = false;
    }
    for i in 0..n {
        let mut col = vec![FLOOR; k];
        if raw.visited[i] {
            col[rng.random_range(0..k)] = 30.0;
        }
        raw.obs.push(col);
    }
    for (idx, &h) in chosen.iter().enumerate() {
        let to = idx + 1;
        let a = Action::heading(h);
        let count = rng.random_range(1.0..6.0);
        raw.edges.push((a, 0, to, count));
        if rng.random_bool(0.5) {
            raw.edges.push((a, 0, 0, rng.random_range(FLOOR..count)));
        }
        raw.edges
            .push((a.opposite(), to, 0, rng.random_range(1.0..4.0)));
    }
    for h in 0..HEADINGS {
        if !chosen.contains(&h) && rng.random_bool(0.5) {
            raw.edges
                .push((Action::heading(h), 0, 0, rng.random_range(1.0..5.0)));
        }
    }
    for i in 0..n {
        raw.edges.push((Action::Stay, i, i, 1.0));
    }
    // guarantee one collision-free route to an unvisited neighbour
    let u = (1..n).find(|&i| !raw.visited[i]).unwrap();
    let hu = Action::heading(chosen[u - 1]);
    raw.edges.retain(|e| !(e.0 == hu && e.1 == 0 && e.2 == 0));
    (raw, u)
}

pub fn exploration_drive(models: usize, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = PlannerConfig {
        horizon: 1,
        temperature: 0.0,
        ..Default::default()
    };
    for i in 0..models {
        let (raw, _) = frontier_model(&mut rng);
        let m = raw.build();
        let mut q = vec![0.0; m.len()];
        q[0] = 1.0;
        let scored = plan(&m, &q, &cfg).map_err(|e| e.to_string())?;
        let best = select_policy(&scored, 0.0, &mut rng).map_err(|e| e.to_string())?;
        let a = scored[best].policy.first();
        match m.predicted_target(a, 0) {
            Some(t) if !m.is_visited(t) => {}
            other => {
                return Err(format!(
                    "model {i}: argmin {a} leads to {other:?}, not an unvisited node"
                ))
            }
        }
    }
    Ok(())
}

/// Every term of the breakdown by enumerating all state sequences.
pub fn efe_oracle(
    raw: &RawModel,
    q: &[f64],
    policy: &[Action],
    pref: Option<usize>,
    w: f64,
) -> [f64; 5] {
    let n = raw.n();
    let k = raw.symbols();
    let per_slot = 0.5 * (k as f64).ln();
    let novelty: Vec<f64> = (0..n)
        .map(|i| {
            let h = entropy(&(0..k).map(|s| raw.obs_prob(i, s)).collect::<Vec<_>>());
            if raw.visited[i] {
                h
            } else {
                h + (MAX_NEIGHBOURS - raw.neighbours(i)) as f64 * per_slot
            }
        })
        .collect();
    let q = normalised(q);
    let bs: Vec<Vec<Vec<f64>>> = policy.iter().map(|&a| raw.transition(a)).collect();
    let horizon = policy.len();
    let mut learning = 0.0;
    // joint[t][i][c]
    let mut joint = vec![vec![[0.0f64; 2]; n]; horizon];
    let total = n.pow(horizon as u32 + 1);
    for code in 0..total {
        let mut seq = Vec::with_capacity(horizon + 1);
        let mut c = code;
        for _ in 0..=horizon {
            seq.push(c % n);
            c /= n;
        }
        let mut p = q[seq[0]];
        for t in 0..horizon {
            p *= bs[t][seq[t]][seq[t + 1]];
        }
        if p == 0.0 {
            continue;
        }
        for t in 1..=horizon {
            if !seq[..t].contains(&seq[t]) {
                learning += p * novelty[seq[t]];
            }
            let blocked = !policy[t - 1].is_stay() && seq[t] == seq[t - 1];
            joint[t - 1][seq[t]][blocked as usize] += p;
        }
    }
    let (mut inference, mut collision, mut preference) = (0.0, 0.0, 0.0);
    for jt in &joint {
        let marg: Vec<f64> = jt.iter().map(|c| c[0] + c[1]).collect();
        let mut cond = 0.0;
        let mut pc = 0.0;
        for c in 0..2 {
            let col: Vec<f64> = jt.iter().map(|x| x[c]).collect();
            let m: f64 = col.iter().sum();
            if m > 0.0 {
                cond += m * entropy(&normalised(&col));
            }
            if c == 1 {
                pc = m;
            }
        }
        inference += (entropy(&marg) - cond).max(0.0);
        collision += -((1.0 - pc + 1e-6) / (1.0 + 1e-6)).ln();
        if let Some(s) = pref {
            preference += (0..n).map(|i| marg[i] * raw.obs_prob(i, s)).sum::<f64>();
        }
    }
    let total = -learning - inference + collision - w * preference;
    [learning, inference, collision, preference, total]
}

pub fn efe_oracle_check(
    cases: usize,
    seed: u64,
    nodes: usize,
    max_horizon: usize,
) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let k = rng.random_range(1..=4);
        let raw = RawModel::random(&mut rng, nodes, k, 0.4);
        let m = raw.build();
        let mut q: Vec<f64> = (0..nodes)
            .map(|_| {
                if rng.random_bool(0.7) {
                    rng.random_range(0.0..1.0)
                } else {
                    0.0
                }
            })
            .collect();
        if q.iter().all(|x| *x == 0.0) {
            q[0] = 1.0;
        }
        let horizon = rng.random_range(1..=max_horizon);
        let policy: Vec<Action> = (0..horizon)
            .map(|_| Action::ALL[rng.random_range(0..Action::ALL.len())])
            .collect();
        let pref = rng.random_bool(0.5).then(|| rng.random_range(0..k));
        let w = if pref.is_some() { 2.0 } else { 0.0 };
        let cfg = PlannerConfig {
            utility_weight: w,
            preferred_symbol: pref.map(|s| s as u32),
            particle_floor: 0.0,
            max_particles: usize::MAX,
            ..Default::default()
        };
        let got =
            efe_policy(&Policy::new(policy.clone()), &m, &q, &cfg).map_err(|e| e.to_string())?;
        let want = efe_oracle(&raw, &q, &policy, pref, w);
        let got = [
            got.learning_gain,
            got.inference_gain,
            got.collision_cost,
            got.preference_value,
            got.total,
        ];
        for (g, o) in got.iter().zip(&want) {
            let d = (g - o).abs();
            if d > 1e-9 {
                return Err(format!("case {case}: terms {got:?} vs oracle {want:?}"));
            }
            worst = worst.max(d);
        }
    }
    Ok(worst)
}

/// Utility weight 2 lowers the total of every policy that ends on a node
/// whose expected observation is the preferred symbol.
pub fn preference_helps(cases: usize, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    for case in 0..cases {
        let k = rng.random_range(2..=4);
        let raw = RawModel::random(&mut rng, 3, k, 0.5);
        let m = raw.build();
        let horizon = rng.random_range(1..=4);
        let policy: Vec<Action> = (0..horizon)
            .map(|_| Action::ALL[rng.random_range(0..Action::ALL.len())])
            .collect();
        let q = vec![1.0, 0.0, 0.0];
        let plain = efe_policy(
            &Policy::new(policy.clone()),
            &m,
            &q,
            &PlannerConfig::default(),
        )
        .map_err(|e| e.to_string())?;
        // preferred symbol: the observation mode of the most likely terminal node
        let mut belief = q.clone();
        for &a in &policy {
            let b = raw.transition(a);
            belief = (0..3)
                .map(|i| (0..3).map(|j| belief[j] * b[j][i]).sum())
                .collect();
        }
        let end = (0..3)
            .max_by(|&a, &b| belief[a].total_cmp(&belief[b]))
            .unwrap();
        let sym = (0..k)
            .max_by(|&a, &b| raw.obs[end][a].total_cmp(&raw.obs[end][b]))
            .unwrap();
        let cfg = PlannerConfig {
            utility_weight: 2.0,
            preferred_symbol: Some(sym as u32),
            ..Default::default()
        };
        let with = efe_policy(&Policy::new(policy), &m, &q, &cfg).map_err(|e| e.to_string())?;
        if !(with.total < plain.total) {
            return Err(format!(
                "case {case}: {} not below {}",
                with.total, plain.total
            ));
        }
        checked += 1;
    }
    Ok(checked)
}

pub fn planner_properties() -> Verdict {
    let mut parts = Vec::new();
    let mut ok = true;
    match shift_invariance(1000, 8) {
        Ok(w) => {
            ok &= w <= 1e-12;
            parts.push(format!("shift invariance worst {w:.1e} (<= 1e-12)"));
        }
        Err(e) => {
            ok = false;
            parts.push(e);
        }
    }
    match exploration_drive(50, 9) {
        Ok(()) => parts.push("exploration drive on 50 frontier models".into()),
        Err(e) => {
            ok = false;
            parts.push(e);
        }
    }
    match efe_oracle_check(300, 10, 3, 3)
        .and_then(|a| efe_oracle_check(100, 11, 4, 3).map(|b| a.max(b)))
    {
        Ok(w) => {
            ok &= w <= 1e-9;
            parts.push(format!("EFE vs exhaustive oracle worst {w:.1e} (<= 1e-9)"));
        }
        Err(e) => {
            ok = false;
            parts.push(e);
        }
    }
    match preference_helps(200, 12) {
        Ok(n) => parts.push(format!("preference lowers G in {n}/200")),
        Err(e) => {
            ok = false;
            parts.push(e);
        }
    }
    Verdict::new("planner properties", ok, parts.join("; "))
}
