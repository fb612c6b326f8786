use super::{Result, StegoError, WavAudio};
use crate::payload::{self, StreamKey, PREFIX_LEN};

/// Samples per channel per frame.
pub const DEFAULT_FRAME_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StegoGeometry {
    pub frame_len: usize,
    pub start_frame: usize,
    pub loc1: u8,
    pub loc2: u8,
    /// Binary expansion of the key value, least significant bit first; used cyclically.
    pub keybits: Vec<bool>,
}

impl StegoGeometry {
    pub fn keybit(&self, n: usize) -> bool {
        self.keybits[n % self.keybits.len()]
    }

    pub fn masks(&self) -> BitMasks {
        clear_masks(self.loc1, self.loc2).expect("geometry positions are distinct")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BitMasks {
    pub cmask1: u16,
    pub cmask2: u16,
    pub cmask: u16,
}

pub fn clear_masks(loc1: u8, loc2: u8) -> Result<BitMasks> {
    if loc1 == loc2 || loc1 > 15 || loc2 > 15 {
        return Err(StegoError::BadBitPosition(loc1, loc2));
    }
    let cmask1 = !(1u16 << loc1);
    let cmask2 = !(1u16 << loc2);
    Ok(BitMasks { cmask1, cmask2, cmask: cmask1 & cmask2 })
}

pub fn total_frames(cover: &WavAudio, frame_len: usize) -> usize {
    if frame_len == 0 {
        return 0;
    }
    cover.frames() / frame_len
}

pub fn derive_geometry(key_value: u64, total_frames: usize, frame_len: usize) -> Result<StegoGeometry> {
    if frame_len == 0 {
        return Err(StegoError::BadFrameLength);
    }
    if total_frames < 2 {
        return Err(StegoError::CoverTooSmall { frames: total_frames });
    }
    let half = (total_frames / 2) as u64;
    let width = (u64::BITS - key_value.leading_zeros()).max(1);
    Ok(StegoGeometry {
        frame_len,
        start_frame: (key_value % half) as usize,
        loc1: (key_value % 4) as u8,
        loc2: 4 + ((key_value / 4) % 4) as u8,
        keybits: (0..width).map(|i| (key_value >> i) & 1 == 1).collect(),
    })
}

/// Bits guaranteed to fit whatever the key: frames from the latest possible
/// start frame (`total/2 - 1`) to the end, times channels, times two.
pub fn capacity(cover: &WavAudio, frame_len: usize) -> usize {
    let total = total_frames(cover, frame_len);
    if total < 2 {
        return 0;
    }
    let usable = total - (total / 2 - 1);
    usable * cover.channels() * 2
}

fn available_bits(cover: &WavAudio, geo: &StegoGeometry) -> usize {
    let total = total_frames(cover, geo.frame_len);
    (total - geo.start_frame) * cover.channels() * 2
}

/// Maps payload bit `n` to `(channel, sample index, bit position)`.
fn bit_slot(geo: &StegoGeometry, channels: usize, n: usize) -> (usize, usize, u8) {
    let per_frame = channels * 2;
    let frame = geo.start_frame + n / per_frame;
    let channel = (n % per_frame) / 2;
    let loc = if n.is_multiple_of(2) { geo.loc1 } else { geo.loc2 };
    (channel, frame * geo.frame_len, loc)
}

pub fn embed(cover: &WavAudio, sealed: &[u8], key: impl Into<StreamKey>, frame_len: usize) -> Result<WavAudio> {
    let key = key.into();
    let geo = derive_geometry(key.value, total_frames(cover, frame_len), frame_len)?;
    let need = sealed.len() * 8;
    let available = available_bits(cover, &geo);
    if need > available {
        return Err(StegoError::PayloadTooLarge { need, available });
    }
    let mut stego = cover.clone();
    let channels = cover.channels();
    let masks = geo.masks();
    // each designated sample takes its loc1 bit and its loc2 bit in turn
    for (n, bit) in bits_msb_first(sealed).enumerate() {
        let (ch, idx, loc) = bit_slot(&geo, channels, n);
        let value = bit ^ geo.keybit(n);
        let sample = &mut stego.samples[ch][idx];
        let mut raw = *sample as u16;
        if n % 2 == 0 {
            raw &= masks.cmask;
        }
        raw |= u16::from(value) << loc;
        *sample = raw as i16;
    }
    Ok(stego)
}

fn read_bits(stego: &WavAudio, geo: &StegoGeometry, byte_range: std::ops::Range<usize>, out: &mut Vec<u8>) {
    let channels = stego.channels();
    for byte in byte_range {
        let mut acc = 0u8;
        for i in 0..8 {
            let n = byte * 8 + i;
            let (ch, idx, loc) = bit_slot(geo, channels, n);
            let bit = (stego.samples[ch][idx] as u16 >> loc) & 1 == 1;
            acc = (acc << 1) | u8::from(bit ^ geo.keybit(n));
        }
        out.push(acc);
    }
}

/// Recovers the sealed envelope. The header is read and decrypted first to
/// learn the envelope length; if the decrypted magic is wrong (wrong key, or
/// nothing embedded) the raw header bytes are returned and opening them fails.
pub fn extract(stego: &WavAudio, key: impl Into<StreamKey>, frame_len: usize) -> Result<Vec<u8>> {
    let key = key.into();
    let geo = derive_geometry(key.value, total_frames(stego, frame_len), frame_len)?;
    let available = available_bits(stego, &geo) / 8;
    let truncated = |need| StegoError::TruncatedEnvelope { need, available };

    let mut sealed = Vec::new();
    if available < PREFIX_LEN {
        return Err(truncated(PREFIX_LEN));
    }
    read_bits(stego, &geo, 0..PREFIX_LEN, &mut sealed);
    let mut plain = sealed.clone();
    payload::apply_keystream(key, 0, &mut plain);
    if plain[..4] != payload::MAGIC {
        return Ok(sealed);
    }
    let header_len = PREFIX_LEN + usize::from(plain[6]) + 4;
    if available < header_len {
        return Err(truncated(header_len));
    }
    read_bits(stego, &geo, PREFIX_LEN..header_len, &mut sealed);
    let mut plain = sealed.clone();
    payload::apply_keystream(key, 0, &mut plain);
    let total = payload::envelope_len(&plain).expect("full header was read");
    if available < total {
        return Err(truncated(total));
    }
    read_bits(stego, &geo, header_len..total, &mut sealed);
    Ok(sealed)
}

fn bits_msb_first(bytes: &[u8]) -> impl Iterator<Item = bool> + '_ {
    bytes.iter().flat_map(|b| (0..8).rev().map(move |i| (b >> i) & 1 == 1))
}
