//! Thin typed client for the tension service. One async method per
//! endpoint; errors carry the service's error kind so callers can map them
//! to exit codes.

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use tension_api as api;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport error: {0}")]
    Transport(#[from] reqwest::Error),

    #[error("{kind:?} error{}: {message}", param.as_ref().map(|p| format!(" on `{p}`")).unwrap_or_default())]
    Api { kind: api::ApiErrorKind, param: Option<String>, message: String },
}

impl ClientError {
    pub fn kind(&self) -> Option<api::ApiErrorKind> {
        match self {
            ClientError::Api { kind, .. } => Some(*kind),
            ClientError::Transport(_) => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct TensionClient {
    base: String,
    http: reqwest::Client,
}

impl TensionClient {
    pub fn new(base: impl Into<String>) -> Self {
        let mut base = base.into();
        while base.ends_with('/') {
            base.pop();
        }
        TensionClient { base, http: reqwest::Client::new() }
    }

    async fn post<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        path: &str,
        req: &Req,
    ) -> Result<Resp> {
        let url = format!("{}{}", self.base, path);
        let resp = self.http.post(url).json(req).send().await?;
        if resp.status().is_success() {
            Ok(resp.json().await?)
        } else {
            let body: api::ApiErrorBody = resp.json().await?;
            Err(ClientError::Api {
                kind: body.error.kind,
                param: body.error.param,
                message: body.error.message,
            })
        }
    }

    pub async fn health(&self) -> Result<bool> {
        let url = format!("{}{}", self.base, api::paths::HEALTH);
        Ok(self.http.get(url).send().await?.status().is_success())
    }

    pub async fn enumerate(&self, req: &api::EnumerateRequest) -> Result<api::EnumerateResponse> {
        self.post(api::paths::ENUMERATE, req).await
    }

    pub async fn tension(&self, req: &api::TensionRequest) -> Result<api::TensionResponse> {
        self.post(api::paths::TENSION, req).await
    }

    pub async fn sweep(&self, req: &api::SweepRequest) -> Result<api::SweepResponse> {
        self.post(api::paths::SWEEP, req).await
    }

    pub async fn sandwich(
        &self,
        req: &api::SandwichRequest,
    ) -> Result<tension_core::tension::SandwichReport> {
        self.post(api::paths::SANDWICH, req).await
    }

    pub async fn superadd(&self, req: &api::SuperaddRequest) -> Result<api::SuperaddResponse> {
        self.post(api::paths::SUPERADD, req).await
    }

    pub async fn cover(&self, req: &api::CoverRequest) -> Result<api::CoverResponse> {
        self.post(api::paths::COVER, req).await
    }

    pub async fn gamma(&self, req: &api::GammaRequest) -> Result<api::GammaResponse> {
        self.post(api::paths::GAMMA, req).await
    }

    pub async fn sample(&self, req: &api::SampleRequest) -> Result<api::SampleResponse> {
        self.post(api::paths::SAMPLE, req).await
    }

    pub async fn concentrate(
        &self,
        req: &api::ConcentrateRequest,
    ) -> Result<tension_core::sampler::ConcentrationReport> {
        self.post(api::paths::CONCENTRATE, req).await
    }

    pub async fn tabulate(
        &self,
        req: &api::TabulateRequest,
    ) -> Result<tension_core::tension::SurfaceTensionTable> {
        self.post(api::paths::TABULATE, req).await
    }

    pub async fn solve(&self, req: &api::SolveRequest) -> Result<api::SolveResponse> {
        self.post(api::paths::SOLVE, req).await
    }

    pub async fn validate(&self, req: &api::ValidateRequest) -> Result<api::ValidateResponse> {
        self.post(api::paths::VALIDATE, req).await
    }
}
