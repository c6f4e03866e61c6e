//! HTTP backend speaking the JSON wire protocol.
//!
//! Two endpoints: `POST /v1/locate` answers localization requests (for
//! the target itself or for a contextual-cue expression) and returns a
//! box, a confidence, and a heatmap; `POST /v1/cue` answers the
//! most-likely-location question with free text. Transient failures
//! (connection errors, 5xx) are retried with exponential backoff.

use std::time::Duration;

use crate::error::{Error, Result};
use crate::geometry::Rect;
use crate::heatmap::Heatmap;

use super::{LocalizationResult, PerceptionBackend, TargetQuery};

/// Retries after the first attempt.
pub const DEFAULT_RETRIES: u32 = 2;

const BACKOFF_BASE: Duration = Duration::from_millis(50);
const REQUEST_TIMEOUT: Duration = Duration::from_secs(30);

/// Wire messages and the fixed-format instruction strings.
pub mod wire {
    use serde::{Deserialize, Serialize};

    use super::Rect;

    pub fn locate_instruction(target: &str) -> String {
        format!("Please locate the {target} in the image.")
    }

    pub fn cue_instruction(target: &str) -> String {
        format!("What is the most likely location of the {target} in the image?")
    }

    pub fn locate_cue_instruction(cue_text: &str) -> String {
        format!("Please locate the '{cue_text}' in the image.")
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct LocateRequest {
        /// Encoded patch pixels, when the caller has them; servers keyed
        /// by patch coordinates accept `null`.
        pub image: Option<String>,
        pub patch: Rect,
        pub instruction: String,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct HeatmapMsg {
        pub width: usize,
        pub height: usize,
        pub values: Vec<f64>,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct LocateResponse {
        #[serde(rename = "box")]
        pub bbox: Option<Rect>,
        pub confidence: f64,
        pub heatmap: HeatmapMsg,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct CueRequest {
        pub patch: Rect,
        pub instruction: String,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct CueResponse {
        pub text: String,
    }
}

pub struct RemoteBackend {
    base_url: String,
    client: reqwest::blocking::Client,
    retries: u32,
}

impl RemoteBackend {
    pub fn new(base_url: impl Into<String>) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(REQUEST_TIMEOUT)
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            client,
            retries: DEFAULT_RETRIES,
        })
    }

    pub fn with_retries(mut self, retries: u32) -> Self {
        self.retries = retries;
        self
    }

    fn post<Req: serde::Serialize, Resp: serde::de::DeserializeOwned>(
        &self,
        path: &str,
        request: &Req,
    ) -> Result<Resp> {
        let url = format!("{}{}", self.base_url, path);
        let mut last_err = String::new();
        for attempt in 0..=self.retries {
            if attempt > 0 {
                std::thread::sleep(BACKOFF_BASE * 2u32.pow(attempt - 1));
            }
            match self.client.post(&url).json(request).send() {
                Ok(response) => {
                    let status = response.status();
                    if status.is_success() {
                        return response
                            .json::<Resp>()
                            .map_err(|e| Error::WireFormat(e.to_string()));
                    }
                    last_err = format!("{url}: status {status}");
                    if !status.is_server_error() {
                        // Client errors will not improve on retry.
                        return Err(Error::Transport(last_err));
                    }
                }
                Err(e) => last_err = format!("{url}: {e}"),
            }
        }
        Err(Error::Transport(last_err))
    }

    fn heatmap_from_wire(msg: wire::HeatmapMsg, patch: &Rect) -> Result<Heatmap> {
        Heatmap::new(msg.width, msg.height, *patch, msg.values)
            .map_err(|e| Error::WireFormat(format!("bad heatmap in response: {e}")))
    }
}

impl PerceptionBackend for RemoteBackend {
    fn locate_target(&self, query: &TargetQuery) -> Result<LocalizationResult> {
        let request = wire::LocateRequest {
            image: None,
            patch: query.patch,
            instruction: wire::locate_instruction(&query.name),
        };
        let response: wire::LocateResponse = self.post("/v1/locate", &request)?;
        if !(0.0..=1.0).contains(&response.confidence) {
            return Err(Error::WireFormat(format!(
                "confidence {} outside [0, 1]",
                response.confidence
            )));
        }
        if let Some(bbox) = &response.bbox {
            if bbox.intersect(&query.patch).is_none() {
                return Err(Error::WireFormat(format!(
                    "returned box {bbox} does not intersect patch {}",
                    query.patch
                )));
            }
        }
        Ok(LocalizationResult {
            bbox: response.bbox,
            confidence: response.confidence,
            cue: Self::heatmap_from_wire(response.heatmap, &query.patch)?,
        })
    }

    fn contextual_cue(&self, query: &TargetQuery) -> Result<String> {
        let request = wire::CueRequest {
            patch: query.patch,
            instruction: wire::cue_instruction(&query.name),
        };
        let response: wire::CueResponse = self.post("/v1/cue", &request)?;
        Ok(response.text)
    }

    fn locate_cue(&self, cue_text: &str, patch: &Rect) -> Result<Heatmap> {
        let request = wire::LocateRequest {
            image: None,
            patch: *patch,
            instruction: wire::locate_cue_instruction(cue_text),
        };
        let response: wire::LocateResponse = self.post("/v1/locate", &request)?;
        Self::heatmap_from_wire(response.heatmap, patch)
    }
}
