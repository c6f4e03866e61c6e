//! Guided best-first visual search over an image patch hierarchy.
//!
//! The search keeps one max-priority queue seeded with the root image at
//! unbounded priority. Popping a node asks the backend to localize the
//! target in that patch; a hit above the high-confidence threshold ends
//! the search. Otherwise the node's cue heatmap prices its four children
//! and the loop continues with the best patch anywhere in the tree. When
//! the target-specific cue is weak — its peak falls below a
//! level-dependent prominence threshold — the search falls back to a
//! contextual cue: the backend names the most likely location and that
//! expression is localized into a fresh heatmap.
//!
//! This is a special case of A* on the patch tree with a constant
//! per-node cost and heuristic equal to the negated priority score; only
//! the number of expansions matters, not path cost.

use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{subdivide, Rect};
use crate::heatmap::Heatmap;
use crate::perception::{PerceptionBackend, TargetQuery};

mod baseline;
mod trace;

pub use baseline::{baseline_search, Strategy};
pub use trace::{
    search_length, ChildRecord, Counters, CueKind, Outcome, SearchAborted, SearchOutcome,
    SearchTrace, TraceStep,
};

/// Thresholds and stopping parameters of a search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchParams {
    /// Confidence ending the search immediately.
    pub high_conf: f64,
    /// Fallback acceptance threshold applied after exhaustion.
    pub low_conf: f64,
    /// Cue-prominence threshold at level 0.
    pub delta_base: f64,
    /// Per-level decay of the prominence threshold.
    pub delta_decay: f64,
    /// Lower bound of the prominence threshold.
    pub delta_floor: f64,
    /// Patches whose children would fall below this side length are
    /// leaves.
    pub min_side: u32,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            high_conf: 0.5,
            low_conf: 0.3,
            delta_base: 6.0,
            delta_decay: 0.7,
            delta_floor: 3.0,
            min_side: 224,
        }
    }
}

impl SearchParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.low_conf > 0.0 && self.low_conf <= self.high_conf && self.high_conf <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "low_conf/high_conf",
                value: self.low_conf,
            });
        }
        if !(self.delta_decay > 0.0 && self.delta_decay < 1.0) {
            return Err(Error::InvalidParameter {
                name: "delta_decay",
                value: self.delta_decay,
            });
        }
        if !(self.delta_floor > 0.0 && self.delta_floor.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "delta_floor",
                value: self.delta_floor,
            });
        }
        if !(self.delta_base.is_finite() && self.delta_base >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "delta_base",
                value: self.delta_base,
            });
        }
        if self.min_side == 0 {
            return Err(Error::InvalidParameter {
                name: "min_side",
                value: 0.0,
            });
        }
        Ok(())
    }
}

/// Cue-prominence threshold at a subdivision level:
/// `max(delta_floor, delta_base * delta_decay^level)`.
pub fn cue_threshold(level: u32, params: &SearchParams) -> f64 {
    params
        .delta_floor
        .max(params.delta_base * params.delta_decay.powi(level as i32))
}

/// Which cues the search may use; disabling one reproduces the
/// corresponding ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CuePolicy {
    /// When false the target-specific heatmap is replaced by flat zeros,
    /// forcing the contextual branch everywhere.
    pub use_target_cue: bool,
    /// When false a failed prominence check yields a flat heatmap instead
    /// of a contextual lookup.
    pub use_contextual_fallback: bool,
}

impl Default for CuePolicy {
    fn default() -> Self {
        Self {
            use_target_cue: true,
            use_contextual_fallback: true,
        }
    }
}

struct QueueEntry {
    priority: f64,
    insertion: u64,
    patch: Rect,
    level: u32,
}

impl PartialEq for QueueEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}

impl Eq for QueueEntry {}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Max-heap on priority; FIFO among equal priorities.
        self.priority
            .total_cmp(&other.priority)
            .then_with(|| other.insertion.cmp(&self.insertion))
    }
}

/// Runs the guided search with the default cue policy.
pub fn vstar_search<B: PerceptionBackend + ?Sized>(
    backend: &B,
    root: &Rect,
    target: &str,
    params: &SearchParams,
) -> std::result::Result<SearchOutcome, SearchAborted> {
    vstar_search_with(backend, root, target, params, &CuePolicy::default())
}

/// Runs the guided search with an explicit cue policy.
pub fn vstar_search_with<B: PerceptionBackend + ?Sized>(
    backend: &B,
    root: &Rect,
    target: &str,
    params: &SearchParams,
    policy: &CuePolicy,
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

    let mut queue = BinaryHeap::new();
    queue.push(QueueEntry {
        priority: f64::INFINITY,
        insertion: 0,
        patch: *root,
        level: 0,
    });
    let mut insertion = 1u64;
    let mut best: Option<(Rect, f64, usize)> = None;

    while let Some(entry) = queue.pop() {
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

        let target_cue = if policy.use_target_cue {
            loc.cue
        } else {
            Heatmap::zeros(loc.cue.width(), loc.cue.height(), entry.patch)
        };
        let delta = cue_threshold(entry.level, params);
        let cue_max = try_or_abort!(target_cue.max_value());
        let (cue_kind, cue_map) = if cue_max >= delta {
            (CueKind::TargetSpecific, target_cue)
        } else if policy.use_contextual_fallback {
            trace.counters.cue_calls += 1;
            let cue_text = try_or_abort!(backend.contextual_cue(&query));
            let map = try_or_abort!(backend.locate_cue(&cue_text, &entry.patch));
            (CueKind::Contextual, map)
        } else {
            (
                CueKind::None,
                Heatmap::zeros(target_cue.width(), target_cue.height(), entry.patch),
            )
        };

        let children = subdivide(&entry.patch, params.min_side);
        let mut records = Vec::with_capacity(children.len());
        for child in children {
            let priority = try_or_abort!(cue_map.patch_priority(&child));
            records.push(ChildRecord {
                patch: child,
                priority,
            });
            queue.push(QueueEntry {
                priority,
                insertion,
                patch: child,
                level: entry.level + 1,
            });
            insertion += 1;
        }
        trace.steps.push(TraceStep {
            patch: entry.patch,
            level: entry.level,
            priority: entry.priority,
            cue_kind,
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
