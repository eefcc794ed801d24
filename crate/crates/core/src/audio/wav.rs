//! RIFF/WAVE reading (PCM16 and IEEE float32) and PCM16 writing.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::AudioClip;

const FORMAT_PCM: u16 = 0x0001;
const FORMAT_IEEE_FLOAT: u16 = 0x0003;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Error)]
pub enum WavError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("malformed RIFF/WAVE data: {0}")]
    Malformed(String),
    #[error("unsupported WAV encoding: {0}")]
    Unsupported(String),
}

pub(crate) fn pcm16_from_f32(s: f32) -> i16 {
    (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Reads a WAV file, mixing multi-channel audio down to mono.
pub fn read(path: impl AsRef<Path>) -> Result<AudioClip, WavError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| WavError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode(&bytes)
}

/// Writes a clip as a mono 16-bit PCM WAV file.
pub fn write(path: impl AsRef<Path>, clip: &AudioClip) -> Result<(), WavError> {
    let path = path.as_ref();
    fs::write(path, encode_pcm16(clip)).map_err(|source| WavError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn encode_pcm16(clip: &AudioClip) -> Vec<u8> {
    let data_len = clip.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate().to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate() * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in clip.samples() {
        out.extend_from_slice(&pcm16_from_f32(s).to_le_bytes());
    }
    out
}

struct Format {
    tag: u16,
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Parses an in-memory WAV image.
pub fn decode(bytes: &[u8]) -> Result<AudioClip, WavError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(WavError::Malformed("missing RIFF/WAVE signature".into()));
    }
    let mut pos = 12;
    let mut format: Option<Format> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .ok_or_else(|| WavError::Malformed("chunk size overflow".into()))?;
        if id == b"fmt " {
            if size < 16 || body_end > bytes.len() {
                return Err(WavError::Malformed("fmt chunk too short".into()));
            }
            let body = &bytes[body_start..body_end];
            let mut tag = u16_at(body, 0);
            if tag == FORMAT_EXTENSIBLE {
                if size < 40 {
                    return Err(WavError::Malformed("extensible fmt chunk too short".into()));
                }
                tag = u16_at(body, 24);
            }
            format = Some(Format {
                tag,
                channels: u16_at(body, 2),
                sample_rate: u32_at(body, 4),
                bits: u16_at(body, 14),
            });
        } else if id == b"data" {
            // Streamed writers sometimes leave the size at 0 or past EOF.
            let end = body_end.min(bytes.len());
            data = Some(&bytes[body_start..end]);
            if format.is_some() {
                break;
            }
        }
        pos = body_end + (size & 1);
    }
    let format = format.ok_or_else(|| WavError::Malformed("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| WavError::Malformed("no data chunk".into()))?;
    if format.channels == 0 {
        return Err(WavError::Malformed("zero channels".into()));
    }
    if format.sample_rate == 0 {
        return Err(WavError::Malformed("zero sample rate".into()));
    }
    let channels = format.channels as usize;
    let frame_values: Vec<f32> = match (format.tag, format.bits) {
        (FORMAT_PCM, 16) => data
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f32 / 32768.0)
            .collect(),
        (FORMAT_IEEE_FLOAT, 32) => data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
        (tag, bits) => {
            return Err(WavError::Unsupported(format!(
                "format tag {tag:#06x} with {bits} bits per sample"
            )))
        }
    };
    let samples = frame_values
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f32>() / channels as f32)
        .collect();
    Ok(AudioClip::new(format.sample_rate, samples))
}
