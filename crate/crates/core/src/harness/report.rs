//! Summaries computed from run records: route shares for the maze, coverage
//! curves for exploration, and the pass/fail checks a scenario declares.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use super::config::{AgentKind, CheckConfig};
use super::scenario::{routes, LoadedRun, ObstacleSummary, RunRecord};
use crate::error::{Error, Result};
use crate::sim::GridEnv;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionRoutes {
    pub condition: String,
    /// Runs per route 1, 2, 3.
    pub counts: [usize; 3],
    /// Runs that did not reach the goal or took no recognisable route.
    pub incomplete: usize,
    /// Shares of all runs over routes 1, 2, 3 and incomplete; they sum to 1.
    pub shares: [f64; 4],
    /// Shares among completed runs only.
    pub completion_shares: [f64; 3],
    pub modal: Option<u8>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TolmanReport {
    pub conditions: Vec<ConditionRoutes>,
    /// (condition, row, col, visits)
    pub heatmap: Vec<(String, usize, usize, usize)>,
}

fn condition_order(records: &[RunRecord]) -> Vec<String> {
    let mut order: Vec<String> = Vec::new();
    for r in records {
        if !order.contains(&r.condition) {
            order.push(r.condition.clone());
        }
    }
    order
}

pub fn tolman_report(env: &GridEnv, records: &[RunRecord]) -> Result<TolmanReport> {
    let taken = routes(env, records).ok_or_else(|| {
        Error::InvalidArgument("map lacks the S, G, A and B cells of the route maze".into())
    })?;
    let mut conditions = Vec::new();
    let mut heat: BTreeMap<(String, usize, usize), usize> = BTreeMap::new();
    for name in condition_order(records) {
        let mut counts = [0usize; 3];
        let mut incomplete = 0;
        for (r, route) in records
            .iter()
            .zip(&taken)
            .filter(|(r, _)| r.condition == name)
        {
            match route {
                Some(k @ 1..=3) => counts[*k as usize - 1] += 1,
                _ => incomplete += 1,
            }
            for (row, col) in r.trail(env, env.start()) {
                *heat.entry((name.clone(), row, col)).or_default() += 1;
            }
        }
        let total: usize = counts.iter().sum();
        let completion_shares = counts.map(|c| {
            if total == 0 {
                0.0
            } else {
                c as f64 / total as f64
            }
        });
        let runs = (total + incomplete).max(1) as f64;
        let shares = [counts[0], counts[1], counts[2], incomplete].map(|c| c as f64 / runs);
        let modal = (total > 0).then(|| {
            // ties go to the lower route number
            (0..3)
                .max_by_key(|&i| (counts[i], std::cmp::Reverse(i)))
                .unwrap() as u8
                + 1
        });
        conditions.push(ConditionRoutes {
            condition: name,
            counts,
            incomplete,
            shares,
            completion_shares,
            modal,
        });
    }
    let heatmap = heat
        .into_iter()
        .map(|((c, r, k), v)| (c, r, k, v))
        .collect();
    Ok(TolmanReport {
        conditions,
        heatmap,
    })
}

impl TolmanReport {
    pub fn routes_csv(&self) -> String {
        let mut s = String::from(
            "condition,route1,route2,route3,incomplete,share1,share2,share3,share_incomplete,completion_share1,completion_share2,completion_share3,modal\n",
        );
        for c in &self.conditions {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
                c.condition,
                c.counts[0],
                c.counts[1],
                c.counts[2],
                c.incomplete,
                c.shares[0],
                c.shares[1],
                c.shares[2],
                c.shares[3],
                c.completion_shares[0],
                c.completion_shares[1],
                c.completion_shares[2],
                c.modal.map(|m| m.to_string()).unwrap_or_default()
            );
        }
        s
    }

    pub fn heatmap_csv(&self) -> String {
        let mut s = String::from("condition,row,col,visits\n");
        for (c, r, k, v) in &self.heatmap {
            let _ = writeln!(s, "{c},{r},{k},{v}");
        }
        s
    }
}

/// Distance travelled when coverage first reached `target`, interpolated
/// linearly between the two records that straddle it.
pub fn distance_to_coverage(rows: &[super::run::StepRecord], target: f64) -> Option<f64> {
    let i = rows.iter().position(|r| r.coverage >= target)?;
    if i == 0 {
        return Some(rows[0].distance);
    }
    let (a, b) = (&rows[i - 1], &rows[i]);
    let t = (target - a.coverage) / (b.coverage - a.coverage);
    Some(a.distance + t * (b.distance - a.distance))
}

/// Coverage after travelling `d`, holding the last value past the end.
pub fn coverage_at(rows: &[super::run::StepRecord], d: f64) -> f64 {
    let Some(first) = rows.first() else {
        return 0.0;
    };
    if d <= first.distance {
        return first.coverage;
    }
    for w in rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if d <= b.distance {
            if b.distance == a.distance {
                return b.coverage;
            }
            return a.coverage
                + (d - a.distance) / (b.distance - a.distance) * (b.coverage - a.coverage);
        }
    }
    rows.last().unwrap().coverage
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AgentCoverage {
    pub agent: AgentKind,
    /// (seed, distance to target, final coverage)
    pub runs: Vec<(u64, Option<f64>, f64)>,
    /// Median over runs; `None` if any run never reached the target.
    pub median_distance: Option<f64>,
    /// (distance, median, min, max) of coverage across runs.
    pub band: Vec<(f64, f64, f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoverageReport {
    pub target: f64,
    pub agents: Vec<AgentCoverage>,
}

pub fn coverage_report(records: &[RunRecord], target: f64, checkpoints: usize) -> CoverageReport {
    let max_d = records
        .iter()
        .filter_map(|r| r.rows.last())
        .map(|r| r.distance)
        .fold(0.0, f64::max);
    let grid: Vec<f64> = (0..=checkpoints.max(1))
        .map(|i| max_d * i as f64 / checkpoints.max(1) as f64)
        .collect();
    let mut agents = Vec::new();
    for kind in [AgentKind::Aif, AgentKind::Frontier] {
        let runs: Vec<&RunRecord> = records.iter().filter(|r| r.agent == kind).collect();
        if runs.is_empty() {
            continue;
        }
        let summary: Vec<_> = runs
            .iter()
            .map(|r| {
                let fin = r.rows.last().map_or(0.0, |x| x.coverage);
                (r.seed, distance_to_coverage(&r.rows, target), fin)
            })
            .collect();
        let reached: Option<Vec<f64>> = summary.iter().map(|s| s.1).collect();
        let band = grid
            .iter()
            .map(|&d| {
                let cs: Vec<f64> = runs.iter().map(|r| coverage_at(&r.rows, d)).collect();
                let lo = cs.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = cs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (d, median(&cs).unwrap(), lo, hi)
            })
            .collect();
        agents.push(AgentCoverage {
            agent: kind,
            runs: summary,
            median_distance: reached.and_then(|v| median(&v)),
            band,
        });
    }
    CoverageReport { target, agents }
}

impl CoverageReport {
    pub fn agent(&self, kind: AgentKind) -> Option<&AgentCoverage> {
        self.agents.iter().find(|a| a.agent == kind)
    }

    pub fn runs_csv(&self) -> String {
        let mut s = String::from("agent,seed,distance_to_target,final_coverage\n");
        for a in &self.agents {
            for (seed, d, fin) in &a.runs {
                let d = d.map(|d| format!("{d:.3}")).unwrap_or_default();
                let _ = writeln!(s, "{},{seed},{d},{fin:.6}", a.agent.as_str());
            }
        }
        s
    }

    pub fn bands_csv(&self) -> String {
        let mut s = String::from("agent,distance,median,min,max\n");
        for a in &self.agents {
            for (d, m, lo, hi) in &a.band {
                let _ = writeln!(s, "{},{d:.3},{m:.6},{lo:.6},{hi:.6}", a.agent.as_str());
            }
        }
        s
    }

    /// Coverage against distance: a shaded min/max band and a median line
    /// per agent, with the target as a dashed rule.
    pub fn svg(&self) -> String {
        let (w, h, m) = (640.0, 400.0, 50.0);
        let max_d = self
            .agents
            .iter()
            .flat_map(|a| a.band.last())
            .map(|b| b.0)
            .fold(1.0, f64::max);
        let x = |d: f64| m + (w - 2.0 * m) * d / max_d;
        let y = |c: f64| h - m - (h - 2.0 * m) * c;
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
        );
        let _ = writeln!(
            s,
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n<line x1=\"{m}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n<line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{}\" stroke=\"black\"/>",
            h - m,
            w - m,
            h - m,
            h - m
        );
        let _ = writeln!(
            s,
            "<line x1=\"{m}\" y1=\"{ty:.1}\" x2=\"{}\" y2=\"{ty:.1}\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>",
            w - m,
            ty = y(self.target)
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">distance</text>\n<text x=\"12\" y=\"{}\" transform=\"rotate(-90 12 {})\" text-anchor=\"middle\">coverage</text>",
            w / 2.0,
            h - 12.0,
            h / 2.0,
            h / 2.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{m}\" y=\"{}\" text-anchor=\"middle\">0</text>",
            h - m + 16.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{max_d:.0}</text>",
            w - m,
            h - m + 16.0
        );
        for (i, a) in self.agents.iter().enumerate() {
            let colour = if a.agent == AgentKind::Aif {
                "#1f77b4"
            } else {
                "#d62728"
            };
            let mut band: Vec<String> = a
                .band
                .iter()
                .map(|b| format!("{:.1},{:.1}", x(b.0), y(b.3)))
                .collect();
            band.extend(
                a.band
                    .iter()
                    .rev()
                    .map(|b| format!("{:.1},{:.1}", x(b.0), y(b.2))),
            );
            let line: Vec<String> = a
                .band
                .iter()
                .map(|b| format!("{:.1},{:.1}", x(b.0), y(b.1)))
                .collect();
            let _ = writeln!(
                s,
                "<polygon points=\"{}\" fill=\"{colour}\" fill-opacity=\"0.2\" stroke=\"none\"/>\n<polyline points=\"{}\" fill=\"none\" stroke=\"{colour}\" stroke-width=\"2\"/>",
                band.join(" "),
                line.join(" ")
            );
            let _ = writeln!(
                s,
                "<text x=\"{}\" y=\"{}\" fill=\"{colour}\">{}</text>",
                w - m - 80.0,
                h - m - 20.0 - 16.0 * i as f64,
                a.agent.as_str()
            );
        }
        let _ = write!(
            s,
            "<!-- data\n{}-->\n",
            self.bands_csv().replace("--", "- -")
        );
        s.push_str("</svg>\n");
        s
    }
}

/// One line of a check verdict.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for CheckLine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: {}", self.name, self.detail)
    }
}

pub fn all_passed(lines: &[CheckLine]) -> bool {
    lines.iter().all(|l| l.passed)
}

pub fn evaluate_checks(
    check: &CheckConfig,
    env: &GridEnv,
    records: &[RunRecord],
    obstacle: &[ObstacleSummary],
) -> Result<Vec<CheckLine>> {
    let mut out = Vec::new();
    match check {
        CheckConfig::Tolman {
            expected,
            min_share,
        } => {
            let rep = tolman_report(env, records)?;
            if rep.conditions.len() != expected.len() {
                return Err(Error::Config(format!(
                    "check expects {} conditions, records have {}",
                    expected.len(),
                    rep.conditions.len()
                )));
            }
            for (c, &want) in rep.conditions.iter().zip(expected) {
                let share = c.completion_shares[(want as usize).clamp(1, 3) - 1];
                out.push(CheckLine {
                    name: format!("condition {} modal route", c.condition),
                    passed: c.modal == Some(want) && share >= *min_share,
                    detail: format!(
                        "counts {:?}, modal {:?}, share of route {want} {share:.3} (need {want} with >= {min_share})",
                        c.counts, c.modal
                    ),
                });
            }
        }
        CheckConfig::Coverage {
            target,
            max_ratio,
            min_final,
        } => {
            let rep = coverage_report(records, *target, 1);
            let (Some(aif), Some(fr)) = (rep.agent(AgentKind::Aif), rep.agent(AgentKind::Frontier))
            else {
                return Err(Error::Config(
                    "coverage check needs both aif and frontier agents".into(),
                ));
            };
            let ratio = match (aif.median_distance, fr.median_distance) {
                (Some(a), Some(f)) if f > 0.0 => Some(a / f),
                _ => None,
            };
            out.push(CheckLine {
                name: format!("median distance to {:.0}% coverage", target * 100.0),
                passed: ratio.is_some_and(|r| r <= *max_ratio),
                detail: format!(
                    "aif {}, frontier {}, ratio {} (need <= {max_ratio})",
                    fmt_opt(aif.median_distance, 1),
                    fmt_opt(fr.median_distance, 1),
                    fmt_opt(ratio, 3)
                ),
            });
            for a in [aif, fr] {
                let worst = a.runs.iter().map(|r| r.2).fold(f64::INFINITY, f64::min);
                out.push(CheckLine {
                    name: format!("{} final coverage", a.agent.as_str()),
                    passed: worst >= *min_final,
                    detail: format!("lowest {worst:.3} (need >= {min_final})"),
                });
            }
        }
        CheckConfig::Obstacle { max_ratio } => {
            if obstacle.is_empty() {
                return Err(Error::Config(
                    "obstacle check needs an [obstacle] section".into(),
                ));
            }
            for o in obstacle {
                out.push(CheckLine {
                    name: format!("seed {} edges into blocked node", o.seed),
                    passed: o.edges_into_blocked > 0
                        && o.worst_ratio.is_some_and(|r| r < *max_ratio),
                    detail: format!(
                        "node {}, {} edges, worst ratio {} (need < {max_ratio})",
                        o.blocked_node.map_or("none".into(), |n| n.to_string()),
                        o.edges_into_blocked,
                        fmt_opt(o.worst_ratio, 4)
                    ),
                });
                out.push(CheckLine {
                    name: format!("seed {} node grown at former cell", o.seed),
                    passed: !o.new_nodes_near_former.is_empty(),
                    detail: format!("new nodes {:?}", o.new_nodes_near_former),
                });
            }
        }
    }
    Ok(out)
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or("n/a".into(), |v| format!("{v:.digits$}"))
}

/// Checks for a run directory written earlier.
pub fn check_run_dir(run: &LoadedRun) -> Result<Vec<CheckLine>> {
    let check = run
        .manifest
        .config
        .check
        .as_ref()
        .ok_or_else(|| Error::Config("scenario declares no [check] section".into()))?;
    evaluate_checks(check, &run.env, &run.records, &run.manifest.obstacle)
}
