//! The full answer pipeline: reason about which targets are missing,
//! search for each of them, accumulate results in a visual working
//! memory, and hand the rendered memory to the answering model.
//!
//! The working memory has four blocks — question, global image, searched
//! target crops, and target locations — and renders to a byte-stable
//! prompt, so pipeline behavior can be pinned with golden files.

use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::geometry::Rect;
use crate::perception::PerceptionBackend;
use crate::search::{vstar_search, SearchParams, SearchTrace};

/// Reference to the image under question: an identifier (usually a file
/// path) plus its pixel extent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub id: String,
    pub extent: Rect,
}

/// One search result held in working memory. Absent targets carry
/// neither a located box nor a crop.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchedTarget {
    pub name: String,
    /// Located box in root coordinates, rendered into the prompt.
    pub located: Option<Rect>,
    /// Margin-expanded crop region around the located box.
    pub crop: Option<Rect>,
    pub present: bool,
}

/// Four-block working memory: question, global image, searched targets,
/// and their locations (derived from the searched targets).
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct VisualWorkingMemory {
    pub question: String,
    pub global_image: ImageRef,
    pub searched_targets: Vec<SearchedTarget>,
}

impl VisualWorkingMemory {
    pub fn new(question: impl Into<String>, global_image: ImageRef) -> Self {
        Self {
            question: question.into(),
            global_image,
            searched_targets: Vec::new(),
        }
    }

    /// Corner-form boxes of the present targets, in memory order.
    pub fn target_locations(&self) -> Vec<Rect> {
        self.searched_targets
            .iter()
            .filter_map(|t| t.located)
            .collect()
    }

    /// Number of targets actually found, which drives the projection
    /// policy.
    pub fn num_found(&self) -> usize {
        self.searched_targets.iter().filter(|t| t.present).count()
    }
}

impl Serialize for VisualWorkingMemory {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("VisualWorkingMemory", 4)?;
        s.serialize_field("question", &self.question)?;
        s.serialize_field("global_image", &self.global_image)?;
        s.serialize_field("searched_targets", &self.searched_targets)?;
        s.serialize_field("target_locations", &self.target_locations())?;
        s.end()
    }
}

/// Visual-feature projection module for one memory slot. The linear
/// projection keeps all 256 visual tokens; the resampler condenses them
/// to 32.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Projection {
    Linear,
    Resampler,
}

impl Projection {
    pub fn token_count(self) -> usize {
        match self {
            Projection::Linear => 256,
            Projection::Resampler => 32,
        }
    }
}

/// Per-slot projection assignment for the global image and each found
/// target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectionChoice {
    pub global: Projection,
    pub targets: Vec<Projection>,
}

impl ProjectionChoice {
    pub fn token_total(&self) -> usize {
        self.global.token_count()
            + self
                .targets
                .iter()
                .map(|p| p.token_count())
                .sum::<usize>()
    }
}

/// Which projection-switching rule to apply. `MainText` is the inference
/// policy; `TrainingAppendix` is the variant used during training, kept
/// behind this switch for comparison.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionVariant {
    #[default]
    MainText,
    TrainingAppendix,
}

/// Projection switching: with no found targets the global image keeps
/// all tokens; with one or two the targets keep full tokens while the
/// global image is condensed; with more, everything is condensed.
pub fn projection_policy(num_found_targets: usize) -> ProjectionChoice {
    projection_policy_variant(num_found_targets, ProjectionVariant::MainText)
}

pub fn projection_policy_variant(
    num_found_targets: usize,
    variant: ProjectionVariant,
) -> ProjectionChoice {
    let n = num_found_targets;
    match variant {
        ProjectionVariant::MainText => match n {
            0 => ProjectionChoice {
                global: Projection::Linear,
                targets: Vec::new(),
            },
            1 | 2 => ProjectionChoice {
                global: Projection::Resampler,
                targets: vec![Projection::Linear; n],
            },
            _ => ProjectionChoice {
                global: Projection::Resampler,
                targets: vec![Projection::Resampler; n],
            },
        },
        // Training-time rule: a target keeps full tokens only when it is
        // alone; otherwise the global image does.
        ProjectionVariant::TrainingAppendix => match n {
            0 => ProjectionChoice {
                global: Projection::Linear,
                targets: Vec::new(),
            },
            1 => ProjectionChoice {
                global: Projection::Resampler,
                targets: vec![Projection::Linear],
            },
            _ => ProjectionChoice {
                global: Projection::Linear,
                targets: vec![Projection::Resampler; n],
            },
        },
    }
}

/// Renders the working memory into the exact prompt consumed by the
/// answering model. With no searched targets the middle section is
/// omitted entirely.
pub fn render_vwm_prompt(vwm: &VisualWorkingMemory) -> String {
    let mut prompt = String::from("<Image>\n");
    if !vwm.searched_targets.is_empty() {
        prompt.push_str("Additional visual information to focus on: \n");
        for t in &vwm.searched_targets {
            match t.located {
                Some(b) => {
                    let [x1, y1, x2, y2] = b.corners();
                    prompt.push_str(&format!(
                        "{} <Object> at location [{x1}, {y1}, {x2}, {y2}]; \n",
                        t.name
                    ));
                }
                None => {
                    prompt.push_str(&format!("{} not existent in the image; \n", t.name));
                }
            }
        }
    }
    prompt.push_str(&vwm.question);
    prompt
}

/// Crop region around a located box: the box expanded by `margin_frac`
/// of its size on each side, clipped to the image extent.
pub fn crop_target(extent: &Rect, bbox: &Rect, margin_frac: f64) -> Result<Rect> {
    bbox.expand_within(margin_frac, extent)
}

/// The answering model's two capabilities: enumerate the target objects
/// that are needed but missing, and answer a rendered prompt.
pub trait VqaBackend {
    /// Empty when the question is answerable from the global view alone.
    fn list_missing_targets(&self, image: &ImageRef, question: &str) -> Result<Vec<String>>;

    fn answer(&self, prompt: &str) -> Result<String>;
}

/// Scripted stand-in for the answering model, driving the pipeline in
/// tests and offline runs.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScriptedVqa {
    #[serde(default)]
    pub missing_targets: Vec<String>,
    #[serde(default)]
    pub canned_answer: String,
}

impl VqaBackend for ScriptedVqa {
    fn list_missing_targets(&self, _image: &ImageRef, _question: &str) -> Result<Vec<String>> {
        Ok(self.missing_targets.clone())
    }

    fn answer(&self, _prompt: &str) -> Result<String> {
        Ok(self.canned_answer.clone())
    }
}

#[derive(Debug, Clone)]
pub struct SealOptions {
    /// Crop margin around located boxes.
    pub margin_frac: f64,
    /// Run the per-target searches on separate threads. Results are
    /// still recorded in request order.
    pub concurrent: bool,
    pub projection_variant: ProjectionVariant,
}

impl Default for SealOptions {
    fn default() -> Self {
        Self {
            margin_frac: 0.2,
            concurrent: false,
            projection_variant: ProjectionVariant::MainText,
        }
    }
}

/// A per-target search failure recorded without aborting the pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TargetSearchError {
    pub target: String,
    pub message: String,
}

#[derive(Debug)]
pub struct SealResult {
    pub response: String,
    pub vwm: VisualWorkingMemory,
    pub traces: Vec<SearchTrace>,
    pub projection: ProjectionChoice,
    pub prompt: String,
    pub search_errors: Vec<TargetSearchError>,
}

/// A pipeline abort (answering-model failure), carrying whatever was
/// accumulated.
#[derive(Debug)]
pub struct SealError {
    pub error: Error,
    pub vwm: VisualWorkingMemory,
    pub traces: Vec<SearchTrace>,
}

impl std::fmt::Display for SealError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "pipeline aborted: {}", self.error)
    }
}

impl std::error::Error for SealError {}

/// Runs the pipeline with default options.
pub fn seal_answer<B, V>(
    vqa: &V,
    search_backend: &B,
    image: ImageRef,
    question: &str,
    params: &SearchParams,
) -> std::result::Result<SealResult, SealError>
where
    B: PerceptionBackend + ?Sized,
    V: VqaBackend + ?Sized,
{
    seal_answer_with(
        vqa,
        search_backend,
        image,
        question,
        params,
        &SealOptions::default(),
    )
}

/// Full pipeline: ask the answering model which targets are missing, run
/// one fresh search per target, record each result (or its absence) in
/// the working memory, then answer from the rendered memory. Per-target
/// search failures are recorded without aborting the remaining targets;
/// an answering-model failure aborts with the partial state attached.
pub fn seal_answer_with<B, V>(
    vqa: &V,
    search_backend: &B,
    image: ImageRef,
    question: &str,
    params: &SearchParams,
    options: &SealOptions,
) -> std::result::Result<SealResult, SealError>
where
    B: PerceptionBackend + ?Sized,
    V: VqaBackend + ?Sized,
{
    let mut vwm = VisualWorkingMemory::new(question, image);
    let extent = vwm.global_image.extent;

    let targets = vqa
        .list_missing_targets(&vwm.global_image, question)
        .map_err(|error| SealError {
            error,
            vwm: vwm.clone(),
            traces: Vec::new(),
        })?;

    let results: Vec<std::result::Result<crate::search::SearchOutcome, crate::search::SearchAborted>> =
        if options.concurrent && targets.len() > 1 {
            std::thread::scope(|scope| {
                let handles: Vec<_> = targets
                    .iter()
                    .map(|target| {
                        scope.spawn(move || vstar_search(search_backend, &extent, target, params))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("search thread panicked"))
                    .collect()
            })
        } else {
            targets
                .iter()
                .map(|target| vstar_search(search_backend, &extent, target, params))
                .collect()
        };

    let mut traces = Vec::with_capacity(results.len());
    let mut search_errors = Vec::new();
    for (target, result) in targets.iter().zip(results) {
        match result {
            Ok(outcome) => {
                traces.push(outcome.trace);
                match outcome.located {
                    Some((bbox, _)) => {
                        let crop = crop_target(&extent, &bbox, options.margin_frac)
                            .expect("located box lies inside the extent");
                        vwm.searched_targets.push(SearchedTarget {
                            name: target.clone(),
                            located: Some(bbox),
                            crop: Some(crop),
                            present: true,
                        });
                    }
                    None => vwm.searched_targets.push(SearchedTarget {
                        name: target.clone(),
                        located: None,
                        crop: None,
                        present: false,
                    }),
                }
            }
            Err(aborted) => {
                search_errors.push(TargetSearchError {
                    target: target.clone(),
                    message: aborted.error.to_string(),
                });
                traces.push(aborted.trace);
                vwm.searched_targets.push(SearchedTarget {
                    name: target.clone(),
                    located: None,
                    crop: None,
                    present: false,
                });
            }
        }
    }

    let prompt = render_vwm_prompt(&vwm);
    let response = vqa.answer(&prompt).map_err(|error| SealError {
        error,
        vwm: vwm.clone(),
        traces: traces.clone(),
    })?;
    let projection = projection_policy_variant(vwm.num_found(), options.projection_variant);

    Ok(SealResult {
        response,
        vwm,
        traces,
        projection,
        prompt,
        search_errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heatmap::Heatmap;
    use crate::perception::{
        LocalizationResult, OracleBackend, SceneTarget, SyntheticScene, TargetQuery,
    };
    use std::collections::BTreeMap;

    fn rect(x: u32, y: u32, w: u32, h: u32) -> Rect {
        Rect::new(x, y, w, h).unwrap()
    }

    #[test]
    fn projection_policy_table() {
        let p0 = projection_policy(0);
        assert_eq!(p0.global, Projection::Linear);
        assert!(p0.targets.is_empty());
        assert_eq!(p0.token_total(), 256);

        for n in [1, 2] {
            let p = projection_policy(n);
            assert_eq!(p.global, Projection::Resampler);
            assert_eq!(p.targets, vec![Projection::Linear; n]);
        }
        assert_eq!(projection_policy(2).token_total(), 32 + 512);

        for n in [3, 5, 9] {
            let p = projection_policy(n);
            assert_eq!(p.global, Projection::Resampler);
            assert_eq!(p.targets, vec![Projection::Resampler; n]);
        }
    }

    #[test]
    fn projection_policy_training_variant() {
        let v = ProjectionVariant::TrainingAppendix;
        assert_eq!(
            projection_policy_variant(1, v),
            ProjectionChoice {
                global: Projection::Resampler,
                targets: vec![Projection::Linear],
            }
        );
        assert_eq!(
            projection_policy_variant(2, v),
            ProjectionChoice {
                global: Projection::Linear,
                targets: vec![Projection::Resampler; 2],
            }
        );
        assert_eq!(projection_policy_variant(0, v).global, Projection::Linear);
    }

    #[test]
    fn prompt_with_no_targets_is_image_plus_question() {
        let vwm = VisualWorkingMemory::new(
            "What color is the mug?",
            ImageRef {
                id: "img".into(),
                extent: rect(0, 0, 100, 100),
            },
        );
        assert_eq!(render_vwm_prompt(&vwm), "<Image>\nWhat color is the mug?");
    }

    #[test]
    fn prompt_renders_present_and_absent_targets() {
        let mut vwm = VisualWorkingMemory::new(
            "Where are the keys?",
            ImageRef {
                id: "img".into(),
                extent: rect(0, 0, 2048, 2048),
            },
        );
        vwm.searched_targets.push(SearchedTarget {
            name: "keys".into(),
            located: Some(rect(510, 510, 40, 40)),
            crop: Some(rect(502, 502, 56, 56)),
            present: true,
        });
        vwm.searched_targets.push(SearchedTarget {
            name: "flag".into(),
            located: None,
            crop: None,
            present: false,
        });
        let prompt = render_vwm_prompt(&vwm);
        assert_eq!(
            prompt,
            "<Image>\nAdditional visual information to focus on: \n\
             keys <Object> at location [510, 510, 550, 550]; \n\
             flag not existent in the image; \n\
             Where are the keys?"
        );
    }

    #[test]
    fn crop_target_examples() {
        let extent = rect(0, 0, 4096, 4096);
        assert_eq!(
            crop_target(&extent, &rect(100, 100, 50, 50), 0.2).unwrap(),
            rect(90, 90, 70, 70)
        );
        assert_eq!(
            crop_target(&extent, &rect(0, 0, 50, 50), 0.2).unwrap(),
            rect(0, 0, 60, 60)
        );
        assert_eq!(
            crop_target(&extent, &rect(100, 100, 50, 50), 0.0).unwrap(),
            rect(100, 100, 50, 50)
        );
        assert!(crop_target(&extent, &rect(100, 100, 50, 50), -0.1).is_err());
    }

    fn test_scene() -> SyntheticScene {
        let extent = rect(0, 0, 2048, 2048);
        let mut context_regions = BTreeMap::new();
        context_regions.insert("keys".to_string(), rect(1024, 1024, 1024, 1024));
        SyntheticScene {
            extent,
            targets: vec![SceneTarget {
                name: "keys".to_string(),
                bbox: rect(1500, 1500, 100, 100),
                detectability: 0.9,
            }],
            context_regions,
            cue_fidelity: 1.0,
            noise_level: 0.0,
            seed: 11,
            confidence_jitter: 0.0,
        }
    }

    fn image() -> ImageRef {
        ImageRef {
            id: "scene.png".into(),
            extent: rect(0, 0, 2048, 2048),
        }
    }

    #[test]
    fn no_missing_targets_runs_zero_searches() {
        let vqa = ScriptedVqa {
            missing_targets: vec![],
            canned_answer: "It is blue.".into(),
        };
        let oracle = OracleBackend::new(test_scene()).unwrap();
        let result = seal_answer(
            &vqa,
            &oracle,
            image(),
            "What color is the sky?",
            &SearchParams::default(),
        )
        .unwrap();
        assert_eq!(result.response, "It is blue.");
        assert!(result.traces.is_empty());
        assert!(result.vwm.searched_targets.is_empty());
        assert_eq!(result.projection.global, Projection::Linear);
        assert_eq!(result.prompt, "<Image>\nWhat color is the sky?");
    }

    #[test]
    fn found_target_lands_in_memory_with_ground_truth_box() {
        let vqa = ScriptedVqa {
            missing_targets: vec!["keys".into()],
            canned_answer: "On the desk.".into(),
        };
        let oracle = OracleBackend::new(test_scene()).unwrap();
        let result = seal_answer(
            &vqa,
            &oracle,
            image(),
            "Where are the keys?",
            &SearchParams::default(),
        )
        .unwrap();
        assert_eq!(result.traces.len(), 1);
        let entry = &result.vwm.searched_targets[0];
        assert!(entry.present);
        assert_eq!(entry.located, Some(rect(1500, 1500, 100, 100)));
        assert_eq!(entry.crop, Some(rect(1480, 1480, 140, 140)));
        assert!(result
            .prompt
            .contains("keys <Object> at location [1500, 1500, 1600, 1600]; "));
        assert_eq!(result.projection.targets, vec![Projection::Linear]);
    }

    #[test]
    fn absent_target_renders_not_existent() {
        let vqa = ScriptedVqa {
            missing_targets: vec!["dragon".into()],
            canned_answer: "There is no dragon.".into(),
        };
        let oracle = OracleBackend::new(test_scene()).unwrap();
        let result = seal_answer(
            &vqa,
            &oracle,
            image(),
            "What color is the dragon?",
            &SearchParams::default(),
        )
        .unwrap();
        assert_eq!(result.traces.len(), 1);
        assert!(!result.vwm.searched_targets[0].present);
        assert!(result.prompt.contains("dragon not existent in the image; "));
        assert_eq!(result.vwm.num_found(), 0);
    }

    /// Backend that fails transport on a specific target name.
    struct FlakyBackend {
        inner: OracleBackend,
        poison: String,
    }

    impl PerceptionBackend for FlakyBackend {
        fn locate_target(&self, query: &TargetQuery) -> crate::error::Result<LocalizationResult> {
            if query.name == self.poison {
                return Err(Error::Transport("connection reset".into()));
            }
            self.inner.locate_target(query)
        }

        fn contextual_cue(&self, query: &TargetQuery) -> crate::error::Result<String> {
            self.inner.contextual_cue(query)
        }

        fn locate_cue(&self, cue_text: &str, patch: &Rect) -> crate::error::Result<Heatmap> {
            self.inner.locate_cue(cue_text, patch)
        }
    }

    #[test]
    fn per_target_failures_do_not_abort_the_rest() {
        let vqa = ScriptedVqa {
            missing_targets: vec!["ghost".into(), "keys".into()],
            canned_answer: "Done.".into(),
        };
        let backend = FlakyBackend {
            inner: OracleBackend::new(test_scene()).unwrap(),
            poison: "ghost".into(),
        };
        let result = seal_answer(
            &vqa,
            &backend,
            image(),
            "Where are the keys and the ghost?",
            &SearchParams::default(),
        )
        .unwrap();
        assert_eq!(result.search_errors.len(), 1);
        assert_eq!(result.search_errors[0].target, "ghost");
        assert_eq!(result.traces.len(), 2);
        assert!(!result.vwm.searched_targets[0].present);
        assert!(result.vwm.searched_targets[1].present);
    }

    #[test]
    fn concurrent_mode_matches_sequential_output() {
        let vqa = ScriptedVqa {
            missing_targets: vec!["keys".into(), "dragon".into()],
            canned_answer: "ok".into(),
        };
        let oracle = OracleBackend::new(test_scene()).unwrap();
        let sequential = seal_answer(
            &vqa,
            &oracle,
            image(),
            "Where?",
            &SearchParams::default(),
        )
        .unwrap();
        let concurrent = seal_answer_with(
            &vqa,
            &oracle,
            image(),
            "Where?",
            &SearchParams::default(),
            &SealOptions {
                concurrent: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(concurrent.vwm, sequential.vwm);
        assert_eq!(concurrent.prompt, sequential.prompt);
        assert_eq!(concurrent.traces, sequential.traces);
    }

    #[test]
    fn vwm_serializes_four_blocks() {
        let mut vwm = VisualWorkingMemory::new("q", image());
        vwm.searched_targets.push(SearchedTarget {
            name: "keys".into(),
            located: Some(rect(1, 1, 2, 2)),
            crop: Some(rect(0, 0, 4, 4)),
            present: true,
        });
        let json = serde_json::to_string(&vwm).unwrap();
        let order: Vec<usize> = [
            "\"question\"",
            "\"global_image\"",
            "\"searched_targets\"",
            "\"target_locations\"",
        ]
        .iter()
        .map(|k| json.find(k).unwrap())
        .collect();
        assert!(order.windows(2).all(|w| w[0] < w[1]));
        assert!(json.contains(r#""target_locations":[[1,1,3,3]]"#));
    }
}
