//! Scripted environment events and the `aifevents v1` file format.
//!
//! ```text
//! aifevents v1
//! [
//!   {"step": 20, "kind": "kidnap", "args": {"to": "start"}},
//!   {"step": 0, "kind": "block_junction", "args": {"name": "A"}},
//!   {"step": 40, "kind": "place_obstacle", "args": {"cell": [3, 4]}}
//! ]
//! ```
//!
//! Kidnap targets are `"start"`, `"random"` (a uniformly drawn free cell) or
//! a `[row, col]` pair.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Cell, Simulator};
use crate::error::{Error, Result};

pub const EVENTS_HEADER: &str = "aifevents v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Kidnap,
    PlaceObstacle,
    RemoveObstacle,
    BlockJunction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub step: usize,
    pub kind: EventKind,
    #[serde(default)]
    pub args: serde_json::Value,
}

impl Event {
    pub fn kidnap_to_start(step: usize) -> Self {
        Self {
            step,
            kind: EventKind::Kidnap,
            args: serde_json::json!({"to": "start"}),
        }
    }

    pub fn block_junction(step: usize, name: char) -> Self {
        Self {
            step,
            kind: EventKind::BlockJunction,
            args: serde_json::json!({"name": name.to_string()}),
        }
    }

    pub fn obstacle(step: usize, cell: Cell, place: bool) -> Self {
        Self {
            step,
            kind: if place {
                EventKind::PlaceObstacle
            } else {
                EventKind::RemoveObstacle
            },
            args: serde_json::json!({"cell": [cell.0, cell.1]}),
        }
    }

    fn cell_arg(&self, key: &str) -> Result<Cell> {
        serde_json::from_value::<(usize, usize)>(self.args.get(key).cloned().unwrap_or_default())
            .map_err(|_| Error::Event(format!("step {}: `{key}` must be [row, col]", self.step)))
    }

    fn validate(&self) -> Result<()> {
        match self.kind {
            EventKind::Kidnap => match self.args.get("to") {
                Some(serde_json::Value::String(s)) if s == "start" || s == "random" => Ok(()),
                Some(_) => self.cell_arg("to").map(|_| ()),
                None => Err(Error::Event(format!(
                    "step {}: kidnap needs `to`",
                    self.step
                ))),
            },
            EventKind::PlaceObstacle | EventKind::RemoveObstacle => {
                self.cell_arg("cell").map(|_| ())
            }
            EventKind::BlockJunction => match self.args.get("name").and_then(|v| v.as_str()) {
                Some("A") | Some("B") => Ok(()),
                _ => Err(Error::Event(format!(
                    "step {}: junction name must be A or B",
                    self.step
                ))),
            },
        }
    }
}

/// Events sorted by step, stable within a step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EventSchedule {
    events: Vec<Event>,
}

impl EventSchedule {
    pub fn new(mut events: Vec<Event>) -> Result<Self> {
        for e in &events {
            e.validate()?;
        }
        events.sort_by_key(|e| e.step);
        Ok(Self { events })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim_start();
        let body = text
            .strip_prefix(EVENTS_HEADER)
            .ok_or_else(|| Error::Event(format!("expected `{EVENTS_HEADER}` header")))?;
        let events: Vec<Event> = serde_json::from_str(body)
            .map_err(|e| Error::Event(format!("bad events body: {e}")))?;
        Self::new(events)
    }

    pub fn to_text(&self) -> String {
        format!(
            "{EVENTS_HEADER}\n{}\n",
            serde_json::to_string_pretty(&self.events).expect("events serialise")
        )
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn at(&self, step: usize) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.step == step)
    }

    pub fn extend(&mut self, more: impl IntoIterator<Item = Event>) -> Result<()> {
        let mut all = std::mem::take(&mut self.events);
        all.extend(more);
        *self = Self::new(all)?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AppliedEvent {
    pub kind: EventKind,
    pub cell: Cell,
}

/// Apply every event scheduled for `step`.
pub fn apply_events<R: Rng + ?Sized>(
    sim: &mut Simulator,
    schedule: &EventSchedule,
    step: usize,
    rng: &mut R,
) -> Result<Vec<AppliedEvent>> {
    let mut applied = Vec::new();
    for e in schedule.at(step) {
        let cell = match e.kind {
            EventKind::Kidnap => {
                let target = match e.args.get("to").and_then(|v| v.as_str()) {
                    Some("start") => sim.env().start(),
                    Some(_) => {
                        let free: Vec<Cell> = sim
                            .env()
                            .free_cells()
                            .filter(|&c| !sim.is_blocked(c))
                            .collect();
                        free[rng.random_range(0..free.len())]
                    }
                    None => e.cell_arg("to")?,
                };
                sim.teleport(target)?;
                target
            }
            EventKind::PlaceObstacle => {
                let c = e.cell_arg("cell")?;
                sim.set_blocked(c, true)?;
                c
            }
            EventKind::RemoveObstacle => {
                let c = e.cell_arg("cell")?;
                sim.set_blocked(c, false)?;
                c
            }
            EventKind::BlockJunction => {
                let name = e.args["name"]
                    .as_str()
                    .and_then(|s| s.chars().next())
                    .unwrap_or('A');
                let c = sim
                    .env()
                    .junction(name)
                    .ok_or_else(|| Error::Event(format!("map has no junction {name}")))?;
                sim.set_blocked(c, true)?;
                c
            }
        };
        applied.push(AppliedEvent { kind: e.kind, cell });
    }
    Ok(applied)
}
