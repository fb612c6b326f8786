//! HTTP/JSON service for the central authority.
//!
//! The authority is held as an immutable snapshot behind a lock. Readers grab
//! the current `Arc` and work without holding the lock; a membership batch is
//! applied to a clone and swapped in only if it succeeds.

mod error;

use std::sync::{Arc, RwLock};

use axum::extract::{DefaultBodyLimit, FromRequest, Path, State};
use axum::http::header;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use stegokey_api::{
    BatchRequest, ClassKeys, ClassSummary, EmbedRequest, EmbedResponse, ExtractRequest, ExtractResponse,
    InspectRequest, KeyListing, PayloadDto, PeerMessageRequest, PeerOpenRequest, SealedMessage, Status,
    UserKeyEntry, WavInfo,
};
use stegokey_core::hierarchy::{ClassId, RekeyEntry, RekeyLog, UserId};
use stegokey_core::payload::Payload;
use stegokey_core::poly_keys::{ClassKey, UserKey};
use stegokey_core::stego_wav::WavAudio;
use stegokey_core::transport::{self, ReceiverProfile, WireFrame};
use stegokey_core::{Authority, Config};
use tokio::net::TcpListener;

pub use error::ApiError;

/// Large enough for a 64 MiB WAV after base64 inflation.
pub const MAX_REQUEST_BYTES: usize = 128 * 1024 * 1024;

#[derive(Debug)]
pub struct AppState {
    authority: RwLock<Arc<Authority>>,
}

pub type SharedState = Arc<AppState>;

impl AppState {
    pub fn new(config: Config) -> SharedState {
        Arc::new(Self { authority: RwLock::new(Arc::new(Authority::new(config))) })
    }

    pub fn snapshot(&self) -> Arc<Authority> {
        Arc::clone(&self.authority.read().expect("authority lock poisoned"))
    }

    fn apply(&self, req: &BatchRequest) -> Result<RekeyEntry, ApiError> {
        let mut guard = self.authority.write().expect("authority lock poisoned");
        let mut next = Authority::clone(&guard);
        let entry = next.apply_batch(&req.events).map_err(ApiError::Batch)?;
        *guard = Arc::new(next);
        Ok(entry)
    }
}

#[derive(FromRequest)]
#[from_request(via(axum::Json), rejection(ApiError))]
struct ApiJson<T>(T);

type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn router(state: SharedState) -> Router {
    Router::new()
        .route("/v1/status", get(status))
        .route("/v1/config", get(config_text))
        .route("/v1/keys", get(keys))
        .route("/v1/classes/{class}/key", get(class_key))
        .route("/v1/classes/{class}/derive/{target}", get(derive))
        .route("/v1/users/{user}/key", get(user_key))
        .route("/v1/membership", post(membership))
        .route("/v1/rekey-log", get(rekey_log))
        .route("/v1/rekey-log/csv", get(rekey_log_csv))
        .route("/v1/embed", post(embed))
        .route("/v1/extract", post(extract))
        .route("/v1/inspect-wav", post(inspect_wav))
        .route("/v1/peer-messages", post(peer_message))
        .route("/v1/peer-messages/open", post(open_peer_message))
        .layer(DefaultBodyLimit::max(MAX_REQUEST_BYTES))
        .with_state(state)
}

pub async fn serve(listener: TcpListener, state: SharedState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

/// Runs CPU-bound key and codec work off the async workers.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::Internal(format!("worker failed: {e}")))?
}

fn parse_class(s: &str) -> Result<ClassId, ApiError> {
    s.parse().map_err(|_| ApiError::BadRequest(format!("bad class id {s:?}")))
}

async fn status(State(state): State<SharedState>) -> Json<Status> {
    let ca = state.snapshot();
    let cfg = ca.config();
    let classes = cfg
        .hierarchy
        .classes()
        .map(|c| ClassSummary {
            class: c.id,
            public_param: c.public_param,
            parents: c.parents.iter().copied().collect(),
            users: c.users.iter().copied().collect(),
        })
        .collect();
    Json(Status {
        epoch: ca.epoch(),
        t: cfg.scheme.t(),
        m: cfg.scheme.m(),
        p: cfg.scheme.p(),
        frame_len: cfg.frame_len,
        classes,
    })
}

async fn config_text(State(state): State<SharedState>) -> impl IntoResponse {
    ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], state.snapshot().config().render())
}

async fn keys(State(state): State<SharedState>) -> ApiResult<KeyListing> {
    let ca = state.snapshot();
    blocking(move || {
        let mut classes = Vec::new();
        for node in ca.config().hierarchy.classes() {
            let key = ca.class_key(node.id)?;
            let users = node
                .users
                .iter()
                .map(|&u| Ok(UserKeyEntry { user: u, key: key.user_key(u)?.value }))
                .collect::<Result<_, ApiError>>()?;
            classes.push(ClassKeys { class: node.id, key: key.value, users });
        }
        Ok(Json(KeyListing { epoch: ca.epoch(), classes }))
    })
    .await
}

async fn class_key(State(state): State<SharedState>, Path(class): Path<String>) -> ApiResult<ClassKey> {
    let class = parse_class(&class)?;
    let ca = state.snapshot();
    blocking(move || Ok(Json(ca.class_key(class)?))).await
}

async fn derive(State(state): State<SharedState>, Path((class, target)): Path<(String, String)>) -> ApiResult<ClassKey> {
    let (class, target) = (parse_class(&class)?, parse_class(&target)?);
    let ca = state.snapshot();
    blocking(move || Ok(Json(ca.derive(class, target)?))).await
}

async fn user_key(State(state): State<SharedState>, Path(user): Path<UserId>) -> ApiResult<UserKey> {
    let ca = state.snapshot();
    blocking(move || Ok(Json(ca.user_key(user)?))).await
}

async fn membership(State(state): State<SharedState>, ApiJson(req): ApiJson<BatchRequest>) -> ApiResult<RekeyEntry> {
    let entry = state.apply(&req)?;
    tracing::info!(
        epoch = entry.epoch,
        joins = entry.joins,
        leaves = entry.leaves,
        "applied membership batch"
    );
    Ok(Json(entry))
}

async fn rekey_log(State(state): State<SharedState>) -> Json<RekeyLog> {
    Json(state.snapshot().log().clone())
}

async fn rekey_log_csv(State(state): State<SharedState>) -> impl IntoResponse {
    ([(header::CONTENT_TYPE, "text/csv")], state.snapshot().log().to_csv())
}

async fn embed(State(state): State<SharedState>, ApiJson(req): ApiJson<EmbedRequest>) -> ApiResult<EmbedResponse> {
    let ca = state.snapshot();
    blocking(move || {
        let cover = WavAudio::parse(&req.cover)?;
        let payload = Payload::from(req.payload);
        let sealed_len = payload.sealed_len();
        let stego = transport::seal_into_cover(ca.config(), req.class, &payload, &cover)?;
        Ok(Json(EmbedResponse { class: req.class, epoch: ca.epoch(), sealed_len, stego: stego.to_bytes() }))
    })
    .await
}

async fn extract(State(state): State<SharedState>, ApiJson(req): ApiJson<ExtractRequest>) -> ApiResult<ExtractResponse> {
    let ca = state.snapshot();
    blocking(move || {
        let profile = ReceiverProfile { class: req.class, user_id: req.user };
        let frame = WireFrame::new(req.stego, false);
        let (class, payload) = match req.intended {
            Some(intended) => (intended, transport::try_open_as(ca.config(), &profile, &frame, intended)?),
            None => transport::open_any(ca.config(), &profile, &frame)?,
        };
        Ok(Json(ExtractResponse { class, payload: payload.into() }))
    })
    .await
}

async fn inspect_wav(State(state): State<SharedState>, ApiJson(req): ApiJson<InspectRequest>) -> ApiResult<WavInfo> {
    let ca = state.snapshot();
    blocking(move || {
        let wav = WavAudio::parse(&req.wav)?;
        let info = WavInfo::new(&wav, ca.config().frame_len);
        Ok(Json(match req.class {
            Some(class) => {
                let key = ca.class_key(class)?;
                info.with_key(&wav, class, key.value)
            }
            None => info,
        }))
    })
    .await
}

async fn peer_message(State(state): State<SharedState>, ApiJson(req): ApiJson<PeerMessageRequest>) -> ApiResult<SealedMessage> {
    let ca = state.snapshot();
    blocking(move || {
        let sender = ReceiverProfile { class: req.sender_class, user_id: req.sender };
        let sealed = transport::peer_message(ca.config(), &sender, req.recipient, &req.payload.into())?;
        Ok(Json(SealedMessage { sealed }))
    })
    .await
}

async fn open_peer_message(State(state): State<SharedState>, ApiJson(req): ApiJson<PeerOpenRequest>) -> ApiResult<PayloadDto> {
    let ca = state.snapshot();
    blocking(move || {
        let profile = ReceiverProfile { class: req.class, user_id: req.user };
        Ok(Json(transport::open_peer_message(ca.config(), &profile, &req.sealed)?.into()))
    })
    .await
}
