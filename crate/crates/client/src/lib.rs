//! Thin async client for the authority service. One method per endpoint.

use reqwest::{Response, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;
use stegokey_api::{
    BatchRequest, EmbedRequest, EmbedResponse, ErrorBody, ExtractRequest, ExtractResponse, InspectRequest, KeyListing,
    PayloadDto, PeerMessageRequest, PeerOpenRequest, SealedMessage, Status, WavInfo,
};
use stegokey_core::hierarchy::{ClassId, MembershipEvent, RekeyEntry, RekeyLog, UserId};
use stegokey_core::poly_keys::{ClassKey, UserKey};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Http(#[from] reqwest::Error),
    #[error("{message} ({status}, {code})")]
    Api { status: StatusCode, code: String, message: String },
}

impl ClientError {
    /// Machine-readable code from the service, if it answered at all.
    pub fn code(&self) -> Option<&str> {
        match self {
            Self::Api { code, .. } => Some(code),
            Self::Http(_) => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the service root, e.g. `http://127.0.0.1:7878`.
    pub fn new(base: impl Into<String>) -> Self {
        let base = base.into().trim_end_matches('/').to_owned();
        Self { base, http: reqwest::Client::new() }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}/v1/{path}", self.base)
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        let resp = self.http.get(self.url(path)).send().await?;
        Ok(check(resp).await?.json().await?)
    }

    async fn get_text(&self, path: &str) -> Result<String> {
        let resp = self.http.get(self.url(path)).send().await?;
        Ok(check(resp).await?.text().await?)
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        let resp = self.http.post(self.url(path)).json(body).send().await?;
        Ok(check(resp).await?.json().await?)
    }

    pub async fn status(&self) -> Result<Status> {
        self.get("status").await
    }

    /// The authority's current configuration in the text config format.
    pub async fn config_text(&self) -> Result<String> {
        self.get_text("config").await
    }

    pub async fn keys(&self) -> Result<KeyListing> {
        self.get("keys").await
    }

    pub async fn class_key(&self, class: ClassId) -> Result<ClassKey> {
        self.get(&format!("classes/{}/key", class.0)).await
    }

    pub async fn derive(&self, ancestor: ClassId, target: ClassId) -> Result<ClassKey> {
        self.get(&format!("classes/{}/derive/{}", ancestor.0, target.0)).await
    }

    pub async fn user_key(&self, user: UserId) -> Result<UserKey> {
        self.get(&format!("users/{user}/key")).await
    }

    pub async fn apply_batch(&self, events: Vec<MembershipEvent>) -> Result<RekeyEntry> {
        self.post("membership", &BatchRequest { events }).await
    }

    pub async fn rekey_log(&self) -> Result<RekeyLog> {
        self.get("rekey-log").await
    }

    pub async fn rekey_log_csv(&self) -> Result<String> {
        self.get_text("rekey-log/csv").await
    }

    pub async fn embed(&self, req: &EmbedRequest) -> Result<EmbedResponse> {
        self.post("embed", req).await
    }

    pub async fn extract(&self, req: &ExtractRequest) -> Result<ExtractResponse> {
        self.post("extract", req).await
    }

    pub async fn inspect_wav(&self, req: &InspectRequest) -> Result<WavInfo> {
        self.post("inspect-wav", req).await
    }

    pub async fn peer_message(&self, req: &PeerMessageRequest) -> Result<SealedMessage> {
        self.post("peer-messages", req).await
    }

    pub async fn open_peer_message(&self, req: &PeerOpenRequest) -> Result<PayloadDto> {
        self.post("peer-messages/open", req).await
    }
}

async fn check(resp: Response) -> Result<Response> {
    let status = resp.status();
    if status.is_success() {
        return Ok(resp);
    }
    let text = resp.text().await?;
    let (code, message) = match serde_json::from_str::<ErrorBody>(&text) {
        Ok(body) => (body.code, body.error),
        Err(_) => ("unknown".to_owned(), text),
    };
    Err(ClientError::Api { status, code, message })
}
