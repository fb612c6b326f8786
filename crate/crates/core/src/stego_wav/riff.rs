use super::{Result, StegoError};

pub const WAVE_FORMAT_PCM: u16 = 1;
pub const WAVE_FORMAT_EXTENSIBLE: u16 = 0xFFFE;

/// `fmt ` chunk fields. `extra` holds anything past the 16 standard bytes
/// (cbSize and friends) so it can be written back verbatim.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WavFormat {
    pub format_tag: u16,
    pub channels: u16,
    pub sample_rate: u32,
    pub byte_rate: u32,
    pub block_align: u16,
    pub bits_per_sample: u16,
    pub extra: Vec<u8>,
}

impl WavFormat {
    pub fn pcm16(channels: u16, sample_rate: u32) -> Self {
        let block_align = channels * 2;
        Self {
            format_tag: WAVE_FORMAT_PCM,
            channels,
            sample_rate,
            byte_rate: sample_rate * u32::from(block_align),
            block_align,
            bits_per_sample: 16,
            extra: Vec::new(),
        }
    }

    fn parse(body: &[u8]) -> Result<Self> {
        if body.len() < 16 {
            return Err(StegoError::Malformed("fmt chunk shorter than 16 bytes"));
        }
        let fmt = Self {
            format_tag: u16_le(body, 0),
            channels: u16_le(body, 2),
            sample_rate: u32_le(body, 4),
            byte_rate: u32_le(body, 8),
            block_align: u16_le(body, 12),
            bits_per_sample: u16_le(body, 14),
            extra: body[16..].to_vec(),
        };
        if !fmt.is_pcm() {
            return Err(StegoError::UnsupportedFormat(format!("format tag {:#06x} is not PCM", fmt.format_tag)));
        }
        if fmt.bits_per_sample != 16 {
            return Err(StegoError::UnsupportedFormat(format!("{} bits per sample", fmt.bits_per_sample)));
        }
        if fmt.channels == 0 || fmt.block_align != fmt.channels * 2 {
            return Err(StegoError::UnsupportedFormat(format!(
                "block align {} does not match {} channels",
                fmt.block_align, fmt.channels
            )));
        }
        Ok(fmt)
    }

    /// Plain PCM, or the extensible header whose sub-format GUID starts with the PCM tag.
    pub fn is_pcm(&self) -> bool {
        match self.format_tag {
            WAVE_FORMAT_PCM => true,
            // extra: cbSize(2) validBits(2) channelMask(4) subFormat GUID(16)
            WAVE_FORMAT_EXTENSIBLE => self.extra.len() >= 24 && self.extra[8..10] == WAVE_FORMAT_PCM.to_le_bytes(),
            _ => false,
        }
    }

    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.format_tag.to_le_bytes());
        out.extend_from_slice(&self.channels.to_le_bytes());
        out.extend_from_slice(&self.sample_rate.to_le_bytes());
        out.extend_from_slice(&self.byte_rate.to_le_bytes());
        out.extend_from_slice(&self.block_align.to_le_bytes());
        out.extend_from_slice(&self.bits_per_sample.to_le_bytes());
        out.extend_from_slice(&self.extra);
    }

    fn body_len(&self) -> usize {
        16 + self.extra.len()
    }
}

/// Position of each chunk in the file, so unknown chunks keep their order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChunkSlot {
    Format { pad: Option<u8> },
    Data { pad: Option<u8> },
    Other { id: [u8; 4], body: Vec<u8>, pad: Option<u8> },
}

/// A parsed RIFF/WAVE file with 16-bit PCM samples split per channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WavAudio {
    pub format: WavFormat,
    /// `samples[channel][frame]`
    pub samples: Vec<Vec<i16>>,
    /// Bytes of a trailing partial sample frame in the data chunk.
    pub data_tail: Vec<u8>,
    pub chunks: Vec<ChunkSlot>,
    /// RIFF size field as declared in the file.
    pub riff_size: u32,
    /// Bytes after the end of the RIFF chunk.
    pub trailing: Vec<u8>,
}

impl WavAudio {
    /// Builds a canonical 44-byte-header PCM file.
    pub fn from_samples(sample_rate: u32, samples: Vec<Vec<i16>>) -> Result<Self> {
        let channels = u16::try_from(samples.len())
            .ok()
            .filter(|&c| c > 0)
            .ok_or_else(|| StegoError::UnsupportedFormat(format!("{} channels", samples.len())))?;
        if samples.iter().any(|c| c.len() != samples[0].len()) {
            return Err(StegoError::Malformed("channels have different lengths"));
        }
        let mut wav = Self {
            format: WavFormat::pcm16(channels, sample_rate),
            samples,
            data_tail: Vec::new(),
            chunks: vec![ChunkSlot::Format { pad: None }, ChunkSlot::Data { pad: None }],
            riff_size: 0,
            trailing: Vec::new(),
        };
        wav.riff_size = wav.computed_riff_size();
        Ok(wav)
    }

    pub fn channels(&self) -> usize {
        usize::from(self.format.channels)
    }

    /// Sample frames per channel.
    pub fn frames(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn data_len(&self) -> usize {
        self.frames() * usize::from(self.format.block_align) + self.data_tail.len()
    }

    fn chunk_body_len(&self, slot: &ChunkSlot) -> usize {
        match slot {
            ChunkSlot::Format { .. } => self.format.body_len(),
            ChunkSlot::Data { .. } => self.data_len(),
            ChunkSlot::Other { body, .. } => body.len(),
        }
    }

    pub fn computed_riff_size(&self) -> u32 {
        let chunks: usize = self
            .chunks
            .iter()
            .map(|slot| {
                let len = self.chunk_body_len(slot);
                8 + len + (len % 2)
            })
            .sum();
        (4 + chunks) as u32
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[0..4] != b"RIFF" {
            return Err(StegoError::NotRiff);
        }
        if &bytes[8..12] != b"WAVE" {
            return Err(StegoError::NotWave);
        }
        let riff_size = u32_le(bytes, 4);
        let riff_end = (8 + riff_size as usize).min(bytes.len());

        let mut format = None;
        let mut data: Option<&[u8]> = None;
        let mut chunks = Vec::new();
        let mut pos = 12;
        while pos + 8 <= riff_end {
            let id: [u8; 4] = bytes[pos..pos + 4].try_into().expect("4 bytes");
            let len = u32_le(bytes, pos + 4) as usize;
            let start = pos + 8;
            let end = start.checked_add(len).filter(|&e| e <= bytes.len()).ok_or(StegoError::Malformed("chunk runs past end of file"))?;
            let body = &bytes[start..end];
            let pad = (len % 2 == 1 && end < riff_end).then(|| bytes[end]);
            match &id {
                b"fmt " if format.is_none() => {
                    format = Some(WavFormat::parse(body)?);
                    chunks.push(ChunkSlot::Format { pad });
                }
                b"data" if data.is_none() => {
                    data = Some(body);
                    chunks.push(ChunkSlot::Data { pad });
                }
                _ => chunks.push(ChunkSlot::Other { id, body: body.to_vec(), pad }),
            }
            pos = end + usize::from(pad.is_some());
        }
        let trailing = bytes[pos..].to_vec();

        let format = format.ok_or(StegoError::MissingFmt)?;
        let data = data.ok_or(StegoError::MissingData)?;
        let channels = usize::from(format.channels);
        let align = usize::from(format.block_align);
        let frames = data.len() / align;
        let mut samples = vec![Vec::with_capacity(frames); channels];
        for frame in data.chunks_exact(align) {
            for (c, s) in frame.chunks_exact(2).enumerate() {
                samples[c].push(i16::from_le_bytes([s[0], s[1]]));
            }
        }
        let data_tail = data[frames * align..].to_vec();

        Ok(Self { format, samples, data_tail, chunks, riff_size, trailing })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.computed_riff_size() as usize);
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&self.riff_size.to_le_bytes());
        out.extend_from_slice(b"WAVE");
        for slot in &self.chunks {
            let (id, pad): (&[u8], _) = match slot {
                ChunkSlot::Format { pad } => (b"fmt ", pad),
                ChunkSlot::Data { pad } => (b"data", pad),
                ChunkSlot::Other { id, pad, .. } => (id, pad),
            };
            out.extend_from_slice(id);
            out.extend_from_slice(&(self.chunk_body_len(slot) as u32).to_le_bytes());
            match slot {
                ChunkSlot::Format { .. } => self.format.write(&mut out),
                ChunkSlot::Data { .. } => {
                    for f in 0..self.frames() {
                        for ch in &self.samples {
                            out.extend_from_slice(&ch[f].to_le_bytes());
                        }
                    }
                    out.extend_from_slice(&self.data_tail);
                }
                ChunkSlot::Other { body, .. } => out.extend_from_slice(body),
            }
            if let Some(b) = pad {
                out.push(*b);
            }
        }
        out.extend_from_slice(&self.trailing);
        out
    }
}

fn u16_le(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_le(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}
