//! Keyed WAV steganography.
//!
//! The cover's PCM samples are cut into fixed-length frames. The class key
//! picks a starting frame and two bit positions, one in the low nibble and one
//! in the high nibble of the low byte. From the starting frame on, the first
//! sample of every channel in every frame carries two payload bits, each XORed
//! with the next bit of the key's binary expansion. Nothing else in the file
//! changes, so the stego file is exactly as long as the cover.

mod codec;
mod riff;

pub use codec::{
    capacity, clear_masks, derive_geometry, embed, extract, total_frames, BitMasks, StegoGeometry,
    DEFAULT_FRAME_LEN,
};
pub use riff::{ChunkSlot, WavAudio, WavFormat, WAVE_FORMAT_EXTENSIBLE, WAVE_FORMAT_PCM};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StegoError {
    #[error("not a RIFF file")]
    NotRiff,
    #[error("RIFF file is not WAVE")]
    NotWave,
    #[error("missing fmt chunk")]
    MissingFmt,
    #[error("missing data chunk")]
    MissingData,
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("malformed WAV: {0}")]
    Malformed(&'static str),
    #[error("cover has {frames} frames, need at least 2")]
    CoverTooSmall { frames: usize },
    #[error("bit positions {0} and {1} must differ and lie in 0..16")]
    BadBitPosition(u8, u8),
    #[error("frame length must be positive")]
    BadFrameLength,
    #[error("payload needs {need} bits, cover holds {available} from the key's start frame")]
    PayloadTooLarge { need: usize, available: usize },
    #[error("envelope declares {need} bytes but only {available} fit in the cover")]
    TruncatedEnvelope { need: usize, available: usize },
}

pub type Result<T, E = StegoError> = std::result::Result<T, E>;
