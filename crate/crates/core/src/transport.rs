//! Multi-receiver stego transport and receiver-side access control.
//!
//! Frames on the wire:
//!
//! ```text
//! "SPAS" | flags: u8 (bit 0 = service message) | length: u32 BE | body (stego WAV bytes)
//! ```
//!
//! The intended class never travels with the frame. A receiver tries its own
//! class key first, then the keys it can derive for each descendant class.

use std::net::SocketAddr;

use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;
use tokio::task::JoinSet;
use thiserror::Error;

use crate::config::Config;
use crate::hierarchy::{ClassId, HierarchyError, UserId};
use crate::payload::{self, Payload, PayloadError};
use crate::poly_keys::{ClassKey, KeyError};
use crate::stego_wav::{self, StegoError, WavAudio};

pub const WIRE_MAGIC: [u8; 4] = *b"SPAS";
pub const FLAG_SERVICE: u8 = 0b0000_0001;
pub const HEADER_LEN: usize = 9;
pub const DEFAULT_MAX_FRAME: usize = 64 * 1024 * 1024;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("bad frame magic")]
    BadMagic,
    #[error("frame of {len} bytes exceeds the {max}-byte cap")]
    FrameTooLarge { len: usize, max: usize },
    #[error("frame truncated: expected {expected} bytes, got {got}")]
    TruncatedFrame { expected: usize, got: usize },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for WireError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireFrame {
    pub flags: u8,
    pub body: Vec<u8>,
}

impl WireFrame {
    pub fn new(body: Vec<u8>, service: bool) -> Self {
        Self { flags: if service { FLAG_SERVICE } else { 0 }, body }
    }

    pub fn is_service(&self) -> bool {
        self.flags & FLAG_SERVICE != 0
    }

    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        let len = u32::try_from(self.body.len())
            .map_err(|_| WireError::FrameTooLarge { len: self.body.len(), max: u32::MAX as usize })?;
        let mut out = Vec::with_capacity(HEADER_LEN + self.body.len());
        out.extend_from_slice(&WIRE_MAGIC);
        out.push(self.flags);
        out.extend_from_slice(&len.to_be_bytes());
        out.extend_from_slice(&self.body);
        Ok(out)
    }

    /// Decodes exactly one frame occupying all of `bytes`.
    pub fn decode(bytes: &[u8], max: usize) -> Result<Self, WireError> {
        if bytes.len() < HEADER_LEN {
            return Err(WireError::TruncatedFrame { expected: HEADER_LEN, got: bytes.len() });
        }
        let len = check_header(bytes[..HEADER_LEN].try_into().expect("9 bytes"), max)?;
        let body = &bytes[HEADER_LEN..];
        if body.len() != len {
            return Err(WireError::TruncatedFrame { expected: len, got: body.len() });
        }
        Ok(Self { flags: bytes[4], body: body.to_vec() })
    }

    /// Reads the next frame; `Ok(None)` on a clean end of stream.
    pub async fn read_from<R: AsyncRead + Unpin>(r: &mut R, max: usize) -> Result<Option<Self>, WireError> {
        let mut header = [0u8; HEADER_LEN];
        let got = read_full(r, &mut header).await?;
        if got == 0 {
            return Ok(None);
        }
        if got < HEADER_LEN {
            return Err(WireError::TruncatedFrame { expected: HEADER_LEN, got });
        }
        let len = check_header(&header, max)?;
        let mut body = vec![0u8; len];
        let got = read_full(r, &mut body).await?;
        if got < len {
            return Err(WireError::TruncatedFrame { expected: len, got });
        }
        Ok(Some(Self { flags: header[4], body }))
    }

    pub async fn write_to<W: AsyncWrite + Unpin>(&self, w: &mut W) -> Result<(), WireError> {
        w.write_all(&self.encode()?).await?;
        w.flush().await?;
        Ok(())
    }
}

fn check_header(header: &[u8; HEADER_LEN], max: usize) -> Result<usize, WireError> {
    if header[..4] != WIRE_MAGIC {
        return Err(WireError::BadMagic);
    }
    let len = u32::from_be_bytes([header[5], header[6], header[7], header[8]]) as usize;
    if len > max {
        return Err(WireError::FrameTooLarge { len, max });
    }
    Ok(len)
}

async fn read_full<R: AsyncRead + Unpin>(r: &mut R, buf: &mut [u8]) -> Result<usize, WireError> {
    let mut filled = 0;
    while filled < buf.len() {
        let n = r.read(&mut buf[filled..]).await?;
        if n == 0 {
            break;
        }
        filled += n;
    }
    Ok(filled)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub target: String,
    pub result: Result<(), String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeliveryReport {
    pub deliveries: Vec<Delivery>,
}

impl DeliveryReport {
    pub fn successes(&self) -> usize {
        self.deliveries.iter().filter(|d| d.result.is_ok()).count()
    }

    pub fn failures(&self) -> usize {
        self.deliveries.len() - self.successes()
    }

    pub fn all_delivered(&self) -> bool {
        self.failures() == 0
    }
}

/// Fans the frame out to every target concurrently. A failing target is
/// recorded in the report and never stops the others. Report order follows
/// `targets`.
pub async fn send(targets: &[String], frame: &WireFrame) -> DeliveryReport {
    let bytes = match frame.encode() {
        Ok(b) => b,
        Err(e) => {
            let deliveries = targets.iter().map(|t| Delivery { target: t.clone(), result: Err(e.to_string()) }).collect();
            return DeliveryReport { deliveries };
        }
    };
    let mut tasks = JoinSet::new();
    for (i, target) in targets.iter().enumerate() {
        let target = target.clone();
        let bytes = bytes.clone();
        tasks.spawn(async move {
            let result = async {
                let mut stream = TcpStream::connect(&target).await?;
                stream.write_all(&bytes).await?;
                stream.shutdown().await?;
                Ok::<_, std::io::Error>(())
            }
            .await
            .map_err(|e| format!("connection failed: {e}"));
            (i, Delivery { target, result })
        });
    }
    let mut deliveries: Vec<Option<Delivery>> = vec![None; targets.len()];
    while let Some(joined) = tasks.join_next().await {
        let (i, d) = joined.expect("delivery task panicked");
        deliveries[i] = Some(d);
    }
    DeliveryReport { deliveries: deliveries.into_iter().map(|d| d.expect("every target reported")).collect() }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Received {
    pub peer: SocketAddr,
    pub frame: Result<WireFrame, WireError>,
}

/// Accepts connections on `listener` and yields frames in arrival order.
/// Each connection is served on its own task and may carry several frames;
/// a malformed frame is yielded as an error and ends that connection.
pub fn receive(listener: TcpListener, max_frame: usize) -> mpsc::Receiver<Received> {
    let (tx, rx) = mpsc::channel(64);
    tokio::spawn(async move {
        loop {
            let (mut stream, peer) = match listener.accept().await {
                Ok(conn) => conn,
                Err(e) => {
                    tracing::warn!("accept failed: {e}");
                    continue;
                }
            };
            if tx.is_closed() {
                break;
            }
            let conn_tx = tx.clone();
            tokio::spawn(async move {
                loop {
                    let frame = match WireFrame::read_from(&mut stream, max_frame).await {
                        Ok(Some(f)) => Ok(f),
                        Ok(None) => break,
                        Err(e) => Err(e),
                    };
                    let stop = frame.is_err();
                    if conn_tx.send(Received { peer, frame }).await.is_err() || stop {
                        break;
                    }
                }
            });
        }
    });
    rx
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AccessError {
    #[error("{class} cannot derive the key of {target}")]
    AccessDenied { class: ClassId, target: ClassId },
    #[error("no key available to {0} opens this message")]
    NoMatchingKey(ClassId),
    #[error("user {user} is not a member of {class}")]
    NotInClass { user: UserId, class: ClassId },
    #[error("users {sender} and {recipient} are not in the same class")]
    NotSameClass { sender: UserId, recipient: UserId },
    #[error(transparent)]
    Key(#[from] KeyError),
    #[error(transparent)]
    Stego(#[from] StegoError),
    #[error(transparent)]
    Payload(#[from] PayloadError),
}

impl From<HierarchyError> for AccessError {
    fn from(e: HierarchyError) -> Self {
        Self::Key(KeyError::Hierarchy(e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReceiverProfile {
    pub class: ClassId,
    pub user_id: UserId,
}

impl ReceiverProfile {
    pub fn validate(&self, cfg: &Config) -> Result<(), AccessError> {
        let node = cfg.hierarchy.class(self.class)?;
        if !node.users.contains(&self.user_id) {
            return Err(AccessError::NotInClass { user: self.user_id, class: self.class });
        }
        Ok(())
    }
}

/// Key `profile` would use for messages addressed to `target`, if any.
pub fn key_for(cfg: &Config, profile: &ReceiverProfile, target: ClassId) -> Result<ClassKey, AccessError> {
    let (scheme, h) = (&cfg.scheme, &cfg.hierarchy);
    if target == profile.class {
        return Ok(scheme.compute_class_key(h, target)?);
    }
    if h.is_ancestor(profile.class, target)? {
        return Ok(scheme.derive_descendant_key(h, profile.class, target)?);
    }
    Err(AccessError::AccessDenied { class: profile.class, target })
}

fn open_stego(cfg: &Config, key: &ClassKey, stego: &WavAudio) -> Result<Payload, AccessError> {
    let sealed = stego_wav::extract(stego, key, cfg.frame_len)?;
    Ok(payload::open(&sealed, key)?)
}

/// Hides a payload for `class` inside `cover`.
pub fn seal_into_cover(cfg: &Config, class: ClassId, payload: &Payload, cover: &WavAudio) -> Result<WavAudio, AccessError> {
    let key = cfg.scheme.compute_class_key(&cfg.hierarchy, class)?;
    let sealed = payload::seal(payload, key)?;
    Ok(stego_wav::embed(cover, &sealed, key, cfg.frame_len)?)
}

/// Opens a frame addressed to `intended` as `profile`, when the hierarchy allows it.
pub fn try_open_as(
    cfg: &Config,
    profile: &ReceiverProfile,
    frame: &WireFrame,
    intended: ClassId,
) -> Result<Payload, AccessError> {
    profile.validate(cfg)?;
    let key = key_for(cfg, profile, intended)?;
    let stego = WavAudio::parse(&frame.body)?;
    open_stego(cfg, &key, &stego)
}

/// Opens a frame without knowing who it was for: own class first, then each
/// descendant in topological order. Returns the class whose key worked.
pub fn open_any(cfg: &Config, profile: &ReceiverProfile, frame: &WireFrame) -> Result<(ClassId, Payload), AccessError> {
    profile.validate(cfg)?;
    let stego = WavAudio::parse(&frame.body)?;
    let candidates = std::iter::once(profile.class).chain(cfg.hierarchy.descendants(profile.class)?);
    for class in candidates {
        let key = key_for(cfg, profile, class)?;
        match open_stego(cfg, &key, &stego) {
            Ok(p) => return Ok((class, p)),
            Err(AccessError::Payload(_) | AccessError::Stego(StegoError::TruncatedEnvelope { .. })) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(AccessError::NoMatchingKey(profile.class))
}

/// Seals a message between two members of the same class under the
/// recipient's private key.
pub fn peer_message(
    cfg: &Config,
    sender: &ReceiverProfile,
    recipient: UserId,
    payload: &Payload,
) -> Result<Vec<u8>, AccessError> {
    sender.validate(cfg)?;
    let recipient_class = cfg.hierarchy.class_of_user(recipient)?;
    if recipient_class != sender.class {
        return Err(AccessError::NotSameClass { sender: sender.user_id, recipient });
    }
    let key = cfg.scheme.compute_class_key(&cfg.hierarchy, sender.class)?.user_key(recipient)?;
    Ok(payload::seal(payload, key)?)
}

pub fn open_peer_message(cfg: &Config, profile: &ReceiverProfile, sealed: &[u8]) -> Result<Payload, AccessError> {
    profile.validate(cfg)?;
    let key = cfg.scheme.compute_class_key(&cfg.hierarchy, profile.class)?.user_key(profile.user_id)?;
    Ok(payload::open(sealed, key)?)
}
