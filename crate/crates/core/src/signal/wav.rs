//! RIFF/WAVE reading (PCM 16-bit and IEEE float 32-bit, mono or stereo)
//! and 16-bit PCM mono writing.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use super::Waveform;

const FORMAT_PCM: u16 = 0x0001;
const FORMAT_IEEE_FLOAT: u16 = 0x0003;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Error)]
pub enum WavError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: malformed header: {reason}")]
    Malformed { path: String, reason: String },
    #[error("{path}: unsupported encoding (format tag {tag:#06x}, {bits} bits)")]
    Unsupported { path: String, tag: u16, bits: u16 },
    #[error("{path}: unsupported channel count {channels} (mono or stereo only)")]
    Channels { path: String, channels: u16 },
    #[error("{path}: data chunk is empty")]
    Empty { path: String },
}

struct Format {
    tag: u16,
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

fn u16_at(b: &[u8], i: usize) -> u16 {
    u16::from_le_bytes([b[i], b[i + 1]])
}

fn u32_at(b: &[u8], i: usize) -> u32 {
    u32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]])
}

/// Reads a WAV file, downmixing stereo by averaging and scaling integer
/// samples by 1/32768.
pub fn read(path: impl AsRef<Path>) -> Result<Waveform, WavError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| WavError::Io { path: path.display().to_string(), source })?;
    decode(&bytes, &path.display().to_string())
}

pub fn decode(bytes: &[u8], path: &str) -> Result<Waveform, WavError> {
    let malformed = |reason: &str| WavError::Malformed { path: path.to_string(), reason: reason.to_string() };
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(malformed("missing RIFF/WAVE signature"));
    }
    let mut format = None;
    let mut data = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body = pos + 8;
        let end = body.checked_add(size).ok_or_else(|| malformed("chunk size overflow"))?;
        if end > bytes.len() {
            return Err(malformed(&format!("chunk '{}' truncated", String::from_utf8_lossy(id))));
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(malformed("fmt chunk shorter than 16 bytes"));
                }
                let b = &bytes[body..end];
                let mut tag = u16_at(b, 0);
                if tag == FORMAT_EXTENSIBLE {
                    if size < 40 {
                        return Err(malformed("extensible fmt chunk shorter than 40 bytes"));
                    }
                    // First two bytes of the sub-format GUID carry the codec.
                    tag = u16_at(b, 24);
                }
                format = Some(Format { tag, channels: u16_at(b, 2), sample_rate: u32_at(b, 4), bits: u16_at(b, 14) });
            }
            b"data" => data = Some(&bytes[body..end]),
            _ => {}
        }
        // Chunks are word aligned.
        pos = end + (size & 1);
    }
    let format = format.ok_or_else(|| malformed("no fmt chunk"))?;
    let data = data.ok_or_else(|| malformed("no data chunk"))?;
    if format.sample_rate == 0 {
        return Err(malformed("sample rate is zero"));
    }
    if !(1..=2).contains(&format.channels) {
        return Err(WavError::Channels { path: path.to_string(), channels: format.channels });
    }
    let width = match (format.tag, format.bits) {
        (FORMAT_PCM, 16) => 2,
        (FORMAT_IEEE_FLOAT, 32) => 4,
        (tag, bits) => return Err(WavError::Unsupported { path: path.to_string(), tag, bits }),
    };
    let frame = width * format.channels as usize;
    let frames = data.len() / frame;
    if frames == 0 {
        return Err(WavError::Empty { path: path.to_string() });
    }
    let sample = |i: usize| -> f64 {
        let o = i * width;
        if width == 2 {
            i16::from_le_bytes([data[o], data[o + 1]]) as f64 / 32768.0
        } else {
            f32::from_le_bytes([data[o], data[o + 1], data[o + 2], data[o + 3]]) as f64
        }
    };
    let ch = format.channels as usize;
    let mut samples = Vec::with_capacity(frames);
    for f in 0..frames {
        let sum: f64 = (0..ch).map(|c| sample(f * ch + c)).sum();
        let v = sum / ch as f64;
        if !v.is_finite() {
            return Err(malformed(&format!("non-finite sample at frame {f}")));
        }
        samples.push(v);
    }
    Ok(Waveform::new(samples, format.sample_rate).expect("validated rate and samples"))
}

/// Quantises to 16-bit PCM: `round(x · 32768)` clamped to the i16 range.
pub fn encode_pcm16(w: &Waveform) -> Vec<u8> {
    let data_len = w.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&w.sample_rate().to_le_bytes());
    out.extend_from_slice(&(w.sample_rate() * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &x in w.samples() {
        let q = (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

pub fn write(path: impl AsRef<Path>, w: &Waveform) -> Result<(), WavError> {
    let path = path.as_ref();
    let io_err = |source| WavError::Io { path: path.display().to_string(), source };
    let mut f = fs::File::create(path).map_err(io_err)?;
    f.write_all(&encode_pcm16(w)).map_err(io_err)?;
    Ok(())
}
