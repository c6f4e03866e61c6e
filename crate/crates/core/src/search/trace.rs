//! Search traces: the ordered record of every node a search popped, the
//! cue used to price its children, and the final outcome. Traces
//! serialize with a fixed field order so byte-for-byte golden comparisons
//! are meaningful.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Rect;
use crate::search::SearchParams;

/// Which heatmap priced a step's children. `None` marks steps that
/// assigned no informative priorities: terminal pops and disabled
/// fallbacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CueKind {
    TargetSpecific,
    Contextual,
    None,
}

/// A child pushed onto the queue, with the priority it was assigned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChildRecord {
    pub patch: Rect,
    pub priority: f64,
}

/// One popped node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub patch: Rect,
    pub level: u32,
    /// Priority the node carried when popped. The root is unbounded and
    /// serializes as `null`.
    #[serde(with = "priority_serde")]
    pub priority: f64,
    pub cue_kind: CueKind,
    pub confidence: f64,
    pub children: Vec<ChildRecord>,
}

/// Final result of a search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    /// A localization cleared the high-confidence threshold.
    Found {
        #[serde(rename = "box")]
        bbox: Rect,
        confidence: f64,
        step_index: usize,
    },
    /// Nothing cleared the high threshold; the best box seen cleared the
    /// low one.
    BestEffort {
        #[serde(rename = "box")]
        bbox: Rect,
        confidence: f64,
        step_index: usize,
    },
    NotFound,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    /// Localization requests, one per popped node.
    pub locate_calls: u64,
    /// Contextual-cue fetches (each pairs a location question with a cue
    /// localization).
    pub cue_calls: u64,
}

/// Ordered record of a whole search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub target: String,
    pub params: SearchParams,
    pub steps: Vec<TraceStep>,
    pub outcome: Outcome,
    pub counters: Counters,
}

impl SearchTrace {
    pub(crate) fn new(target: &str, params: SearchParams) -> Self {
        Self {
            target: target.to_string(),
            params,
            steps: Vec::new(),
            outcome: Outcome::NotFound,
            counters: Counters::default(),
        }
    }

    /// Index of the step that located the target.
    pub fn locating_step(&self) -> Option<usize> {
        match self.outcome {
            Outcome::Found { step_index, .. } | Outcome::BestEffort { step_index, .. } => {
                Some(step_index)
            }
            Outcome::NotFound => None,
        }
    }

    /// Number of sub-image pops strictly after the root until the target
    /// was located: the per-sample search length. Root-level success
    /// yields 0 (such samples are excluded from benchmark averages).
    /// Undefined for unsuccessful searches.
    pub fn search_length(&self) -> Result<usize> {
        self.locating_step().ok_or_else(|| {
            Error::DataFormat("search length is undefined for an unsuccessful search".into())
        })
    }

    /// True when the target was located on the initial image itself.
    pub fn root_success(&self) -> bool {
        self.locating_step() == Some(0)
    }
}

/// Number of post-root pops up to the locating step.
pub fn search_length(trace: &SearchTrace) -> Result<usize> {
    trace.search_length()
}

/// Result of a completed search: the trace plus the located box, present
/// for found and best-effort outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub trace: SearchTrace,
    pub located: Option<(Rect, f64)>,
}

/// A search cut short by a backend failure; carries everything recorded
/// up to the failing call.
#[derive(Debug)]
pub struct SearchAborted {
    pub error: Error,
    pub trace: SearchTrace,
}

impl std::fmt::Display for SearchAborted {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "search for '{}' aborted after {} steps: {}",
            self.trace.target,
            self.trace.steps.len(),
            self.error
        )
    }
}

impl std::error::Error for SearchAborted {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

mod priority_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_none()
        } else {
            s.serialize_some(v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}
