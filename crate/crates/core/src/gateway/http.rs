use std::sync::OnceLock;
use std::time::Duration;

use serde::de::DeserializeOwned;
use ureq::Agent;

use super::{validate_profile, Gateway, GatewayError, GenerationParams, ModelInfo, ProfileRequest, Query, ResponseProfile};
use super::{DEFAULT_CONCURRENCY, PROTOCOL_HEADER, PROTOCOL_VERSION};

/// Environment variable holding the bearer token for the remote backend.
pub const AUTH_TOKEN_ENV: &str = "VARSEARCH_GATEWAY_TOKEN";

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub base_url: String,
    pub token: Option<String>,
    pub timeout: Duration,
    /// Total attempts per request, including the first.
    pub attempts: u32,
    /// Delay before the second attempt; doubles afterwards.
    pub backoff: Duration,
    pub concurrency: usize,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            token: std::env::var(AUTH_TOKEN_ENV).ok().filter(|t| !t.is_empty()),
            timeout: Duration::from_secs(300),
            attempts: 3,
            backoff: Duration::from_millis(250),
            concurrency: DEFAULT_CONCURRENCY,
        }
    }
}

/// Client for a remote profile backend.
pub struct HttpGateway {
    cfg: HttpConfig,
    agent: Agent,
    info: OnceLock<ModelInfo>,
}

impl HttpGateway {
    pub fn new(cfg: HttpConfig) -> Self {
        let agent: Agent = Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(cfg.timeout))
            .build()
            .into();
        Self {
            cfg,
            agent,
            info: OnceLock::new(),
        }
    }

    fn with_retry<T>(&self, mut call: impl FnMut() -> Result<T, GatewayError>) -> Result<T, GatewayError> {
        let mut delay = self.cfg.backoff;
        let mut attempt = 1;
        loop {
            match call() {
                Err(e) if e.is_retryable() && attempt < self.cfg.attempts.max(1) => {
                    std::thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    fn finish<T: DeserializeOwned>(resp: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> Result<T, GatewayError> {
        let mut resp = resp.map_err(|e| GatewayError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if status != 200 {
            let body = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(GatewayError::Status { status, body });
        }
        let version = resp
            .headers()
            .get(PROTOCOL_HEADER)
            .and_then(|v| v.to_str().ok())
            .unwrap_or("<missing>")
            .to_string();
        if version != PROTOCOL_VERSION {
            return Err(GatewayError::VersionMismatch {
                expected: PROTOCOL_VERSION.into(),
                found: version,
            });
        }
        resp.body_mut()
            .read_json()
            .map_err(|e| GatewayError::Malformed(e.to_string()))
    }

    fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, GatewayError> {
        self.with_retry(|| {
            let mut req = self
                .agent
                .get(format!("{}{path}", self.cfg.base_url))
                .header(PROTOCOL_HEADER, PROTOCOL_VERSION);
            if let Some(t) = &self.cfg.token {
                req = req.header("Authorization", format!("Bearer {t}"));
            }
            Self::finish(req.call())
        })
    }

    fn post<T: DeserializeOwned>(&self, path: &str, body: &ProfileRequest) -> Result<T, GatewayError> {
        self.with_retry(|| {
            let mut req = self
                .agent
                .post(format!("{}{path}", self.cfg.base_url))
                .header(PROTOCOL_HEADER, PROTOCOL_VERSION);
            if let Some(t) = &self.cfg.token {
                req = req.header("Authorization", format!("Bearer {t}"));
            }
            Self::finish(req.send_json(body))
        })
    }
}

impl Gateway for HttpGateway {
    fn info(&self) -> Result<ModelInfo, GatewayError> {
        if let Some(i) = self.info.get() {
            return Ok(i.clone());
        }
        let info: ModelInfo = self.get("/v1/info")?;
        Ok(self.info.get_or_init(|| info).clone())
    }

    fn profile(&self, q: &Query, params: &GenerationParams) -> Result<ResponseProfile, GatewayError> {
        if q.prompt.is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        let info = self.info()?;
        let body = ProfileRequest {
            prompt: q.prompt.to_string(),
            layer_fraction: params.layer_fraction,
            topk: params.topk,
            max_tokens: params.max_tokens,
        };
        let p: ResponseProfile = self.post("/v1/profile", &body)?;
        if p.model_id != info.model_id {
            return Err(GatewayError::InvalidProfile(format!(
                "model_id `{}` differs from `{}`",
                p.model_id, info.model_id
            )));
        }
        validate_profile(&p, params.topk, Some((info.hidden_dim, info.embedding_dim)))?;
        Ok(p)
    }

    fn concurrency(&self) -> usize {
        self.cfg.concurrency
    }
}
