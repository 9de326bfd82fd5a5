//! HTTP client for a hosted model server.
//!
//! Endpoints (JSON in, JSON out):
//!
//! * `POST {base}/v1/text`   `{messages, seed}` → `{text}`
//! * `POST {base}/v1/images` `{prompt, guidance_weight, temperature, seed}` → `{image_b64, token_ids?}`
//! * `POST {base}/v1/vqa`    `{image_b64, question}` → `{p_yes, p_no}`
//!
//! Connection failures, timeouts, 429 and 5xx responses are retried with
//! exponential backoff; other 4xx responses fail immediately.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Backend, BackendError, ChatMessage, ImageArtifact, ImagePayload, ImageRequest};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub base_url: String,
    /// Environment variable holding a bearer token, if the server needs one.
    pub auth_token_env: Option<String>,
    pub timeout_secs: u64,
    pub max_attempts: usize,
    pub max_in_flight: usize,
    pub initial_backoff_ms: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8000".into(),
            auth_token_env: None,
            timeout_secs: 120,
            max_attempts: 4,
            max_in_flight: 8,
            initial_backoff_ms: 500,
        }
    }
}

/// Counting semaphore bounding concurrent requests.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn acquire(&self) -> GatePass<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        GatePass(self)
    }
}

struct GatePass<'a>(&'a Gate);

impl Drop for GatePass<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
    token: Option<String>,
    gate: Gate,
}

enum Failure {
    Retry(String),
    Fatal(BackendError),
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, BackendError> {
        if config.max_attempts == 0 || config.max_in_flight == 0 {
            return Err(BackendError::InvalidRequest(
                "max_attempts and max_in_flight must be positive".into(),
            ));
        }
        let token = match &config.auth_token_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                BackendError::Unavailable(format!("auth token variable {var} is not set"))
            })?),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            gate: Gate {
                free: Mutex::new(config.max_in_flight),
                cv: Condvar::new(),
            },
            config,
            agent,
            token,
        })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn post<T: DeserializeOwned>(&self, path: &str, body: &serde_json::Value) -> Result<T, BackendError> {
        let url = format!("{}{}", self.config.base_url.trim_end_matches('/'), path);
        let mut backoff = Duration::from_millis(self.config.initial_backoff_ms);
        let mut last = String::new();
        let mut timed_out = false;
        for attempt in 1..=self.config.max_attempts {
            let outcome = {
                let _pass = self.gate.acquire();
                self.attempt(&url, body)
            };
            match outcome {
                Ok(value) => return Ok(value),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retry(reason)) => {
                    timed_out = reason.starts_with("timeout");
                    last = reason;
                }
            }
            if attempt < self.config.max_attempts {
                thread::sleep(backoff);
                backoff *= 2;
            }
        }
        if timed_out {
            Err(BackendError::Timeout {
                attempts: self.config.max_attempts,
            })
        } else {
            Err(BackendError::Unavailable(format!(
                "{url} failed after {} attempt(s): {last}",
                self.config.max_attempts
            )))
        }
    }

    fn attempt<T: DeserializeOwned>(&self, url: &str, body: &serde_json::Value) -> Result<T, Failure> {
        let mut request = self.agent.post(url);
        if let Some(token) = &self.token {
            request = request.header("Authorization", &format!("Bearer {token}"));
        }
        let mut response = request.send_json(body).map_err(|e| match e {
            ureq::Error::Timeout(_) => Failure::Retry(format!("timeout: {e}")),
            other => Failure::Retry(other.to_string()),
        })?;
        let status = response.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(Failure::Retry(format!("status {status}")));
        }
        if status >= 400 {
            let body = response.body_mut().read_to_string().unwrap_or_default();
            return Err(Failure::Fatal(BackendError::RemoteRejected { status, body }));
        }
        response
            .body_mut()
            .read_json::<T>()
            .map_err(|e| Failure::Fatal(BackendError::Protocol(e.to_string())))
    }
}

#[derive(Deserialize)]
struct TextReply {
    text: String,
}

#[derive(Deserialize)]
struct ImageReply {
    image_b64: String,
    #[serde(default)]
    token_ids: Option<Vec<u32>>,
}

#[derive(Deserialize)]
struct VqaReply {
    p_yes: f64,
    p_no: f64,
}

impl Backend for RemoteBackend {
    fn text_complete(&self, messages: &[ChatMessage], seed: u64) -> Result<String, BackendError> {
        let reply: TextReply = self.post("/v1/text", &json!({ "messages": messages, "seed": seed }))?;
        Ok(reply.text)
    }

    fn generate_image(&self, request: &ImageRequest<'_>) -> Result<ImageArtifact, BackendError> {
        request.decode.validate()?;
        let body = json!({
            "prompt": request.text,
            "guidance_weight": request.decode.guidance_weight,
            "temperature": request.decode.temperature,
            "seed": request.decode.seed,
        });
        let reply: ImageReply = self.post("/v1/images", &body)?;
        if reply.image_b64.is_empty() {
            return Err(BackendError::Protocol("empty image payload".into()));
        }
        Ok(ImageArtifact {
            id: request.id.to_string(),
            source_prompt_id: request.source_prompt_id.to_string(),
            decode: request.decode,
            corruption: request.corruption,
            payload: ImagePayload::Bytes {
                image_b64: reply.image_b64,
                token_ids: reply.token_ids,
            },
        })
    }

    fn vqa_probe(&self, image: &ImageArtifact, question: &str) -> Result<(f64, f64), BackendError> {
        let ImagePayload::Bytes { image_b64, .. } = &image.payload else {
            return Err(BackendError::InvalidRequest(format!(
                "image {} has no encoded bytes for a remote probe",
                image.id
            )));
        };
        let reply: VqaReply = self.post("/v1/vqa", &json!({ "image_b64": image_b64, "question": question }))?;
        let valid = |p: f64| p.is_finite() && (0.0..=1.0).contains(&p);
        if !valid(reply.p_yes) || !valid(reply.p_no) {
            return Err(BackendError::Protocol(format!(
                "probabilities out of range: yes={} no={}",
                reply.p_yes, reply.p_no
            )));
        }
        Ok((reply.p_yes, reply.p_no))
    }
}
