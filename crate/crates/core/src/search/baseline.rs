//! Uninformed baseline strategies: random and sequential expansion
//! orders in breadth-first and depth-first settings.
//!
//! Localization, confidence thresholds, and leaf criteria are identical
//! to the guided search — only the order in which sub-images are explored
//! differs. Sequential strategies visit children in reverse raster order
//! (bottom-right first); random strategies shuffle them with a seeded
//! generator. Cue heatmaps still arrive with every localization but are
//! ignored for ordering, and no contextual queries are made.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{subdivide, Rect};
use crate::perception::{PerceptionBackend, TargetQuery};

use super::trace::{
    ChildRecord, CueKind, Outcome, SearchAborted, SearchOutcome, SearchTrace, TraceStep,
};
use super::SearchParams;

/// Baseline expansion orders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    RandomBfs,
    RandomDfs,
    SequentialBfs,
    SequentialDfs,
}

impl Strategy {
    fn breadth_first(self) -> bool {
        matches!(self, Strategy::RandomBfs | Strategy::SequentialBfs)
    }

    fn random(self) -> bool {
        matches!(self, Strategy::RandomBfs | Strategy::RandomDfs)
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Strategy::RandomBfs => "random_bfs",
            Strategy::RandomDfs => "random_dfs",
            Strategy::SequentialBfs => "sequential_bfs",
            Strategy::SequentialDfs => "sequential_dfs",
        };
        f.write_str(name)
    }
}

struct FrontierEntry {
    patch: Rect,
    level: u32,
    priority: f64,
}

/// Runs a baseline search. `seed` drives the random strategies and is
/// ignored by the sequential ones.
pub fn baseline_search<B: PerceptionBackend + ?Sized>(
    strategy: Strategy,
    backend: &B,
    root: &Rect,
    target: &str,
    params: &SearchParams,
    seed: u64,
) -> std::result::Result<SearchOutcome, SearchAborted> {
    let mut trace = SearchTrace::new(target, *params);

    macro_rules! try_or_abort {
        ($expr:expr) => {
            match $expr {
                Ok(v) => v,
                Err(error) => return Err(SearchAborted { error, trace }),
            }
        };
    }

    try_or_abort!(params.validate());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frontier: VecDeque<FrontierEntry> = VecDeque::new();
    frontier.push_back(FrontierEntry {
        patch: *root,
        level: 0,
        priority: f64::INFINITY,
    });
    let mut best: Option<(Rect, f64, usize)> = None;

    while let Some(entry) = if strategy.breadth_first() {
        frontier.pop_front()
    } else {
        frontier.pop_back()
    } {
        let step_index = trace.steps.len();
        let query = TargetQuery::new(target, entry.patch);
        trace.counters.locate_calls += 1;
        let loc = try_or_abort!(backend.locate_target(&query));

        if loc.confidence >= params.high_conf {
            if let Some(bbox) = loc.bbox {
                trace.steps.push(TraceStep {
                    patch: entry.patch,
                    level: entry.level,
                    priority: entry.priority,
                    cue_kind: CueKind::None,
                    confidence: loc.confidence,
                    children: Vec::new(),
                });
                trace.outcome = Outcome::Found {
                    bbox,
                    confidence: loc.confidence,
                    step_index,
                };
                return Ok(SearchOutcome {
                    located: Some((bbox, loc.confidence)),
                    trace,
                });
            }
        }
        if let Some(bbox) = loc.bbox {
            if best.is_none_or(|(_, c, _)| loc.confidence > c) {
                best = Some((bbox, loc.confidence, step_index));
            }
        }

        // Visit order: reverse raster for sequential, seeded shuffle for
        // random.
        let mut children = subdivide(&entry.patch, params.min_side);
        if strategy.random() {
            children.shuffle(&mut rng);
        } else {
            children.reverse();
        }

        let n = children.len();
        let records: Vec<ChildRecord> = children
            .iter()
            .enumerate()
            .map(|(i, &patch)| ChildRecord {
                patch,
                // Ordinal stand-in so the trace still reflects the
                // intended visit order.
                priority: (n - i) as f64,
            })
            .collect();
        if strategy.breadth_first() {
            for (i, &patch) in children.iter().enumerate() {
                frontier.push_back(FrontierEntry {
                    patch,
                    level: entry.level + 1,
                    priority: (n - i) as f64,
                });
            }
        } else {
            // Stack semantics: push in reverse visit order so the first
            // child comes off first and its subtree completes before the
            // next sibling starts.
            for (i, &patch) in children.iter().enumerate().rev() {
                frontier.push_back(FrontierEntry {
                    patch,
                    level: entry.level + 1,
                    priority: (n - i) as f64,
                });
            }
        }
        trace.steps.push(TraceStep {
            patch: entry.patch,
            level: entry.level,
            priority: entry.priority,
            cue_kind: CueKind::None,
            confidence: loc.confidence,
            children: records,
        });
    }

    match best {
        Some((bbox, confidence, step_index)) if confidence >= params.low_conf => {
            trace.outcome = Outcome::BestEffort {
                bbox,
                confidence,
                step_index,
            };
            Ok(SearchOutcome {
                located: Some((bbox, confidence)),
                trace,
            })
        }
        _ => {
            trace.outcome = Outcome::NotFound;
            Ok(SearchOutcome {
                located: None,
                trace,
            })
        }
    }
}
