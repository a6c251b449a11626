//! Client for the `LMScore v1` wire protocol.
//!
//! `POST {endpoint}/v1/score` with `{"prefix": str, "suffixes": [str]}`,
//! answered by `{"log_probs": [float], "token_counts": [int]}`. Errors come
//! back as HTTP 4xx/5xx with `{"error": str}`.

use std::io::{self, Read};
use std::time::Duration;

use serde::Deserialize;

use super::{LmBackend, LmError, ScoreRequest, ScoreResponse};
use crate::tokenization::Tokenizer;

pub const SCORE_PATH: &str = "/v1/score";
pub const ENDPOINT_ENV: &str = "LATFUSE_LM_ENDPOINT";

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    /// Base URL such as `http://127.0.0.1:8080`.
    pub endpoint: String,
    pub timeout: Duration,
    /// Extra attempts after a transport failure, timeout or 5xx.
    pub retries: u32,
    /// Largest number of suffixes sent in one HTTP request.
    pub max_batch: usize,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout: Duration::from_secs(30),
            retries: 1,
            max_batch: 256,
        }
    }

    /// Reads the endpoint from `LATFUSE_LM_ENDPOINT`.
    pub fn from_env() -> Option<Self> {
        std::env::var(ENDPOINT_ENV).ok().map(Self::new)
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
    url: String,
    tokenizer: Option<Tokenizer>,
}

#[derive(Deserialize)]
struct ErrorBody {
    error: String,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, LmError> {
        if config.max_batch == 0 {
            return Err(LmError::Validation("max_batch must be >= 1".into()));
        }
        let url = format!("{}{}", config.endpoint.trim_end_matches('/'), SCORE_PATH);
        let agent = ureq::AgentBuilder::new().timeout(config.timeout).build();
        Ok(Self {
            config,
            agent,
            url,
            tokenizer: None,
        })
    }

    /// Declares the server's vocabulary so the engine can check it locally.
    pub fn with_tokenizer(mut self, tokenizer: Tokenizer) -> Self {
        self.tokenizer = Some(tokenizer);
        self
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn post_once(&self, req: &ScoreRequest) -> Result<ScoreResponse, LmError> {
        let result = self.agent.post(&self.url).send_json(req);
        let resp = match result {
            Ok(resp) => resp,
            Err(ureq::Error::Status(status, resp)) => {
                let body = resp.into_string().unwrap_or_default();
                let message = serde_json::from_str::<ErrorBody>(&body)
                    .map(|b| b.error)
                    .unwrap_or(body);
                return Err(LmError::Server { status, message });
            }
            Err(ureq::Error::Transport(t)) => return Err(classify_transport(&t)),
        };
        let mut body = String::new();
        resp.into_reader()
            .read_to_string(&mut body)
            .map_err(|e| io_error(&e))?;
        let parsed: ScoreResponse = serde_json::from_str(&body)
            .map_err(|e| LmError::Malformed(format!("{e}: {}", truncate(&body))))?;
        parsed.conform(req)
    }

    fn post_with_retries(&self, req: &ScoreRequest) -> Result<ScoreResponse, LmError> {
        let mut attempt = 0;
        loop {
            match self.post_once(req) {
                Err(e) if attempt < self.config.retries && retryable(&e) => attempt += 1,
                other => return other,
            }
        }
    }
}

impl LmBackend for RemoteBackend {
    fn score_suffixes(&self, req: &ScoreRequest) -> Result<ScoreResponse, LmError> {
        req.validate()?;
        let mut out = ScoreResponse {
            log_probs: Vec::with_capacity(req.suffixes.len()),
            token_counts: Vec::with_capacity(req.suffixes.len()),
        };
        for chunk in req.suffixes.chunks(self.config.max_batch) {
            let part = ScoreRequest {
                prefix: req.prefix.clone(),
                suffixes: chunk.to_vec(),
            };
            let resp = self.post_with_retries(&part)?;
            out.log_probs.extend(resp.log_probs);
            out.token_counts.extend(resp.token_counts);
        }
        Ok(out)
    }

    fn tokenizer(&self) -> Option<&Tokenizer> {
        self.tokenizer.as_ref()
    }
}

fn retryable(e: &LmError) -> bool {
    match e {
        LmError::Transport(_) | LmError::Timeout(_) => true,
        LmError::Server { status, .. } => *status >= 500,
        _ => false,
    }
}

fn io_error(e: &io::Error) -> LmError {
    match e.kind() {
        io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock => LmError::Timeout(e.to_string()),
        _ => LmError::Transport(e.to_string()),
    }
}

fn classify_transport(t: &ureq::Transport) -> LmError {
    let mut source = std::error::Error::source(t);
    while let Some(err) = source {
        if let Some(ioe) = err.downcast_ref::<io::Error>() {
            return io_error(ioe);
        }
        source = err.source();
    }
    let text = t.to_string();
    if text.contains("timed out") {
        LmError::Timeout(text)
    } else {
        LmError::Transport(text)
    }
}

fn truncate(s: &str) -> &str {
    match s.char_indices().nth(200) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}
