//! Wire types for the authority's HTTP/JSON interface.
//!
//! Binary fields (WAV files, payload bodies, sealed envelopes) travel as
//! standard base64 strings.

use serde::{Deserialize, Serialize};
use stegokey_core::hierarchy::{ClassId, MembershipEvent, UserId};
use stegokey_core::payload::{Payload, PayloadKind};
use stegokey_core::stego_wav::{self, ChunkSlot, WavAudio};

pub mod b64 {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = <&str>::deserialize(d)?;
        STANDARD.decode(text).map_err(serde::de::Error::custom)
    }
}

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub class: ClassId,
    pub public_param: u64,
    pub parents: Vec<ClassId>,
    pub users: Vec<UserId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Status {
    pub epoch: u64,
    pub t: u32,
    pub m: usize,
    pub p: u64,
    pub frame_len: usize,
    pub classes: Vec<ClassSummary>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserKeyEntry {
    pub user: UserId,
    pub key: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassKeys {
    pub class: ClassId,
    pub key: u64,
    pub users: Vec<UserKeyEntry>,
}

/// Every class key and user private key at one epoch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyListing {
    pub epoch: u64,
    pub classes: Vec<ClassKeys>,
}

impl KeyListing {
    /// `class,user,epoch,key` rows; the class key itself has an empty user column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,user,epoch,key\n");
        for c in &self.classes {
            out.push_str(&format!("{},,{},{}\n", c.class, self.epoch, c.key));
            for u in &c.users {
                out.push_str(&format!("{},{},{},{}\n", c.class, u.user, self.epoch, u.key));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchRequest {
    pub events: Vec<MembershipEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayloadDto {
    pub kind: PayloadKind,
    pub name: String,
    #[serde(with = "b64")]
    pub body: Vec<u8>,
}

impl From<Payload> for PayloadDto {
    fn from(p: Payload) -> Self {
        Self { kind: p.kind, name: p.name, body: p.body }
    }
}

impl From<PayloadDto> for Payload {
    fn from(p: PayloadDto) -> Self {
        Payload { kind: p.kind, name: p.name, body: p.body }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub class: ClassId,
    pub payload: PayloadDto,
    #[serde(with = "b64")]
    pub cover: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub class: ClassId,
    pub epoch: u64,
    pub sealed_len: usize,
    #[serde(with = "b64")]
    pub stego: Vec<u8>,
}

/// With `intended` set, only that class's key is tried; otherwise the
/// receiver's own class and then each descendant in topological order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractRequest {
    pub class: ClassId,
    pub user: UserId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intended: Option<ClassId>,
    #[serde(with = "b64")]
    pub stego: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractResponse {
    /// Class whose key opened the envelope.
    pub class: ClassId,
    pub payload: PayloadDto,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerMessageRequest {
    pub sender_class: ClassId,
    pub sender: UserId,
    pub recipient: UserId,
    pub payload: PayloadDto,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SealedMessage {
    #[serde(with = "b64")]
    pub sealed: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerOpenRequest {
    pub class: ClassId,
    pub user: UserId,
    #[serde(with = "b64")]
    pub sealed: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InspectRequest {
    #[serde(with = "b64")]
    pub wav: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<ClassId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    pub class: ClassId,
    pub start_frame: usize,
    pub loc1: u8,
    pub loc2: u8,
    /// Envelope bits that fit from this class's start frame on.
    pub usable_bits: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WavInfo {
    pub format_tag: u16,
    pub channels: u16,
    pub sample_rate: u32,
    pub byte_rate: u32,
    pub block_align: u16,
    pub bits_per_sample: u16,
    pub frames: usize,
    pub data_bytes: usize,
    pub riff_size: u32,
    /// Ids of chunks other than `fmt ` and `data`, in file order.
    pub other_chunks: Vec<String>,
    pub trailing_bytes: usize,
    pub frame_len: usize,
    pub total_frames: usize,
    /// Bits available to every key, whatever its start frame.
    pub capacity_bits: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<Geometry>,
}

impl WavInfo {
    pub fn new(wav: &WavAudio, frame_len: usize) -> Self {
        let f = &wav.format;
        let other_chunks = wav
            .chunks
            .iter()
            .filter_map(|c| match c {
                ChunkSlot::Other { id, .. } => Some(String::from_utf8_lossy(id).into_owned()),
                _ => None,
            })
            .collect();
        Self {
            format_tag: f.format_tag,
            channels: f.channels,
            sample_rate: f.sample_rate,
            byte_rate: f.byte_rate,
            block_align: f.block_align,
            bits_per_sample: f.bits_per_sample,
            frames: wav.frames(),
            data_bytes: wav.data_len(),
            riff_size: wav.riff_size,
            other_chunks,
            trailing_bytes: wav.trailing.len(),
            frame_len,
            total_frames: stego_wav::total_frames(wav, frame_len),
            capacity_bits: stego_wav::capacity(wav, frame_len),
            geometry: None,
        }
    }

    /// Adds the embedding geometry a class key selects; `None` if the cover
    /// is too small to carry anything.
    pub fn with_key(mut self, wav: &WavAudio, class: ClassId, key_value: u64) -> Self {
        self.geometry = stego_wav::derive_geometry(key_value, self.total_frames, self.frame_len).ok().map(|g| Geometry {
            class,
            start_frame: g.start_frame,
            loc1: g.loc1,
            loc2: g.loc2,
            usable_bits: (self.total_frames - g.start_frame) * wav.channels() * 2,
        });
        self
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "format tag      {:#06x}\nchannels        {}\nsample rate     {} Hz\nbyte rate       {} B/s\nblock align     {}\nbits per sample {}\n\
             frames          {}\ndata bytes      {}\nriff size       {}\n",
            self.format_tag,
            self.channels,
            self.sample_rate,
            self.byte_rate,
            self.block_align,
            self.bits_per_sample,
            self.frames,
            self.data_bytes,
            self.riff_size,
        );
        if !self.other_chunks.is_empty() {
            out.push_str(&format!("other chunks    {}\n", self.other_chunks.join(" ")));
        }
        if self.trailing_bytes > 0 {
            out.push_str(&format!("trailing bytes  {}\n", self.trailing_bytes));
        }
        out.push_str(&format!(
            "frame length    {}\nstego frames    {}\ncapacity        {} bits ({} bytes)\n",
            self.frame_len,
            self.total_frames,
            self.capacity_bits,
            self.capacity_bits / 8
        ));
        if let Some(g) = &self.geometry {
            out.push_str(&format!(
                "{} start frame  {}\n{} bit slots   {}, {}\n{} usable      {} bits ({} bytes)\n",
                g.class,
                g.start_frame,
                g.class,
                g.loc1,
                g.loc2,
                g.class,
                g.usable_bits,
                g.usable_bits / 8
            ));
        }
        out
    }
}
