#![allow(dead_code)]

use std::io::Cursor;

use num_bigint::BigUint;
use rand::Rng;
use stegokey_core::hierarchy::{ClassNode, DummyParams, Hierarchy};
use stegokey_core::SymmetricPolynomialScheme;

/// Direct evaluation of `P` with big integers: one nested loop per variable,
/// exponentiation by repeated multiplication, a single reduction at the end.
pub fn naive_eval(scheme: &SymmetricPolynomialScheme, params: &[u64]) -> u64 {
    fn walk(
        scheme: &SymmetricPolynomialScheme,
        params: &[u64],
        index: &mut Vec<u32>,
        acc: &mut BigUint,
    ) {
        if index.len() == params.len() {
            let mut term = BigUint::from(scheme.coefficient(index).unwrap());
            for (&x, &e) in params.iter().zip(index.iter()) {
                for _ in 0..e {
                    term *= x;
                }
            }
            *acc += term;
            return;
        }
        for e in 0..=scheme.t() {
            index.push(e);
            walk(scheme, params, index, acc);
            index.pop();
        }
    }
    let mut acc = BigUint::from(0u32);
    walk(scheme, params, &mut Vec::new(), &mut acc);
    let r = acc % BigUint::from(scheme.p());
    r.to_u64_digits().first().copied().unwrap_or(0)
}

/// Random DAG: class `i` may only take parents among classes `< i`.
/// Parameters are distinct and disjoint from the dummies.
pub fn random_dag(rng: &mut impl Rng, n: u32, edge_prob: f64) -> Hierarchy {
    let mut values: Vec<u64> = Vec::new();
    while values.len() < (n as usize) * 2 + 1 {
        let v = rng.gen_range(2..1_000_000u64);
        if !values.contains(&v) {
            values.push(v);
        }
    }
    let dummies = values.split_off(n as usize);
    let classes = (1..=n).map(|i| {
        let parents: Vec<u32> = (1..i).filter(|_| rng.gen_bool(edge_prob)).collect();
        ClassNode::new(i, values[(i - 1) as usize], parents)
    });
    Hierarchy::new(classes, DummyParams(dummies), None, false).expect("random DAG is valid")
}

/// A 16-bit PCM file written by `hound`, independent of the crate's writer.
pub fn hound_wav(channels: u16, sample_rate: u32, frames: usize, seed: u64) -> Vec<u8> {
    let spec = hound::WavSpec { channels, sample_rate, bits_per_sample: 16, sample_format: hound::SampleFormat::Int };
    let mut buf = Cursor::new(Vec::new());
    {
        let mut w = hound::WavWriter::new(&mut buf, spec).unwrap();
        let mut x = seed;
        for _ in 0..frames * channels as usize {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            w.write_sample((x >> 48) as i16).unwrap();
        }
        w.finalize().unwrap();
    }
    buf.into_inner()
}

/// First 44 bytes of the reference stereo 11025 Hz file (81920 data bytes declared).
pub const PUBLISHED_HEADER: [u8; 44] = [
    0x52, 0x49, 0x46, 0x46, 0x24, 0x40, 0x01, 0x00, 0x57, 0x41, 0x56, 0x45, 0x66, 0x6D, 0x74, 0x20, //
    0x10, 0x00, 0x00, 0x00, 0x01, 0x00, 0x02, 0x00, 0x11, 0x2B, 0x00, 0x00, 0x44, 0xAC, 0x00, 0x00, //
    0x04, 0x00, 0x10, 0x00, 0x64, 0x61, 0x74, 0x61, 0x00, 0x40, 0x01, 0x00,
];

pub fn published_file() -> Vec<u8> {
    let mut file = PUBLISHED_HEADER.to_vec();
    file.extend((0..81920u32).map(|i| (i.wrapping_mul(2654435761) >> 13) as u8));
    file
}

fn chunk(id: &[u8; 4], body: &[u8], pad: Option<u8>) -> Vec<u8> {
    let mut out = id.to_vec();
    out.extend_from_slice(&(body.len() as u32).to_le_bytes());
    out.extend_from_slice(body);
    out.extend(pad);
    out
}

/// Hand-assembled file with an extended fmt chunk, a LIST chunk before the
/// data, an odd-length chunk with a non-zero pad byte, a partial sample frame
/// and junk after the RIFF chunk.
pub fn odd_layout_file() -> Vec<u8> {
    let mut fmt = Vec::new();
    fmt.extend_from_slice(&1u16.to_le_bytes());
    fmt.extend_from_slice(&2u16.to_le_bytes());
    fmt.extend_from_slice(&22050u32.to_le_bytes());
    fmt.extend_from_slice(&88200u32.to_le_bytes());
    fmt.extend_from_slice(&4u16.to_le_bytes());
    fmt.extend_from_slice(&16u16.to_le_bytes());
    fmt.extend_from_slice(&0u16.to_le_bytes()); // cbSize

    let data: Vec<u8> = (0..4 * 300 + 3).map(|i| (i * 37 % 256) as u8).collect();
    let mut body = b"WAVE".to_vec();
    body.extend(chunk(b"LIST", b"INFOISFT\x05\x00\x00\x00test\x00\x00", None));
    body.extend(chunk(b"fmt ", &fmt, None));
    body.extend(chunk(b"note", b"odd", Some(0x7a)));
    body.extend(chunk(b"data", &data, Some(0)));

    let mut file = b"RIFF".to_vec();
    file.extend_from_slice(&(body.len() as u32).to_le_bytes());
    file.extend(body);
    file.extend_from_slice(b"JUNK!");
    file
}

pub fn fixture_corpus() -> Vec<(String, Vec<u8>)> {
    let mut corpus = vec![
        ("published-header".to_owned(), published_file()),
        ("odd-layout".to_owned(), odd_layout_file()),
    ];
    for (ch, rate, frames) in [(1u16, 8000u32, 0usize), (1, 44100, 1000), (2, 32000, 4096), (2, 11025, 777), (3, 48000, 100)] {
        corpus.push((format!("hound-{ch}ch-{rate}-{frames}"), hound_wav(ch, rate, frames, u64::from(rate) + frames as u64)));
    }
    corpus
}
