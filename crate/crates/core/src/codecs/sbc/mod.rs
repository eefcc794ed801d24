//! Bluetooth A2DP SBC, mono only.
//!
//! Frames follow the A2DP layout bit for bit (sync byte, header, CRC-8, 4-bit
//! scale factors, packed samples). The filterbank is a pseudo-QMF design of
//! the same order and delay structure as the reference bank.

mod alloc;
mod filterbank;
pub(crate) mod frame;

use super::bits::{BitReader, BitWriter};
use super::{CodecError, CodecFamily, CodecSpec, DecodeError, EncodedStream};
use crate::AudioClip;

pub(crate) use alloc::{frequency_index, max_bitpool};
pub use alloc::{sbc_bit_allocation, Allocation};
use filterbank::Filterbank;
use frame::{frame_crc, Header, SYNC};

/// Scale applied to samples before quantisation (Q15 fixed point).
const Q15: f64 = 32768.0;

/// Resolved SBC parameters for one clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SbcConfig {
    pub sample_rate: u32,
    pub subbands: usize,
    pub blocks: usize,
    pub allocation: Allocation,
    pub bitpool: u8,
}

impl SbcConfig {
    /// Resolves spec parameters; without an explicit bitpool, picks the one whose
    /// frame-length bitrate is closest to the requested rate (lower on ties).
    pub fn from_spec(spec: &CodecSpec, sample_rate: u32) -> Result<SbcConfig, CodecError> {
        let param = |key: &str, reason: String| CodecError::Param {
            family: CodecFamily::Sbc.to_string(),
            key: key.into(),
            reason,
        };
        let fs_index = frequency_index(sample_rate).ok_or(CodecError::UnsupportedRate {
            family: CodecFamily::Sbc.to_string(),
            rate: sample_rate,
        })?;
        let subbands = match spec.param("subbands").unwrap_or("8") {
            "4" => 4,
            "8" => 8,
            other => return Err(param("subbands", format!("{other:?}, expected 4 or 8"))),
        };
        let blocks = match spec.param("blocks").unwrap_or("16") {
            "4" => 4,
            "8" => 8,
            "12" => 12,
            "16" => 16,
            other => {
                return Err(param(
                    "blocks",
                    format!("{other:?}, expected 4, 8, 12 or 16"),
                ))
            }
        };
        let allocation = match spec.param("allocation").unwrap_or("loudness") {
            "loudness" => Allocation::Loudness,
            "snr" => Allocation::Snr,
            other => {
                return Err(param(
                    "allocation",
                    format!("{other:?}, expected snr or loudness"),
                ))
            }
        };
        let max = max_bitpool(subbands);
        let mut config = SbcConfig {
            sample_rate,
            subbands,
            blocks,
            allocation,
            bitpool: 2,
        };
        debug_assert_eq!(frequency_index(config.sample_rate), Some(fs_index));
        if let Some(text) = spec.param("bitpool") {
            let bp: u32 = text
                .parse()
                .map_err(|_| param("bitpool", format!("{text:?} is not an integer")))?;
            if !(2..=250).contains(&bp) {
                return Err(param("bitpool", format!("{bp} outside 2..250")));
            }
            if bp > max {
                return Err(param(
                    "bitpool",
                    format!("{bp} exceeds the mono limit {max}"),
                ));
            }
            config.bitpool = bp as u8;
            return Ok(config);
        }
        let target = spec.bitrate_kbps * 1000.0;
        let rate_of = |bp: u32| {
            SbcConfig {
                bitpool: bp as u8,
                ..config
            }
            .bitrate_bps()
        };
        let best = (2..=max)
            .min_by(|&a, &b| {
                (rate_of(a) - target)
                    .abs()
                    .total_cmp(&(rate_of(b) - target).abs())
            })
            .expect("non-empty range");
        let achieved = rate_of(best);
        if (achieved - target).abs() > 0.05 * target {
            return Err(CodecError::Bitrate {
                family: CodecFamily::Sbc.to_string(),
                kbps: spec.bitrate_kbps,
                reason: format!(
                    "bitpools 2..{max} give {:.1}..{:.1} kbps at {sample_rate} Hz",
                    rate_of(2) / 1000.0,
                    rate_of(max) / 1000.0
                ),
            });
        }
        config.bitpool = best as u8;
        Ok(config)
    }

    fn header(&self) -> Header {
        Header {
            fs_index: frequency_index(self.sample_rate).expect("validated rate"),
            blocks: self.blocks,
            channel_mode: 0,
            allocation: self.allocation,
            subbands: self.subbands,
            bitpool: self.bitpool,
        }
    }

    pub fn frame_len(&self) -> usize {
        self.header().frame_len()
    }

    pub fn samples_per_frame(&self) -> usize {
        self.subbands * self.blocks
    }

    /// `8 * frame_len * fs / (subbands * blocks)`.
    pub fn bitrate_bps(&self) -> f64 {
        8.0 * self.frame_len() as f64 * self.sample_rate as f64 / self.samples_per_frame() as f64
    }
}

fn scale_factor(peak_q15: f64) -> u8 {
    (0..16u8)
        .find(|&sf| peak_q15 < f64::from(2u32 << sf))
        .unwrap_or(15)
}

fn quantize(x: f64, sf: u8, bits: u8) -> u64 {
    let levels = ((1u64 << bits) - 1) as f64;
    let scale = f64::from(2u32 << sf);
    let q = ((x / scale + 1.0) * levels / 2.0).floor();
    q.clamp(0.0, levels - 1.0) as u64
}

fn dequantize(q: u64, sf: u8, bits: u8) -> f64 {
    let levels = ((1u64 << bits) - 1) as f64;
    f64::from(2u32 << sf) * ((2.0 * q as f64 + 1.0) / levels - 1.0)
}

pub(crate) fn encode(spec: &CodecSpec, clip: &AudioClip) -> Result<EncodedStream, CodecError> {
    let config = SbcConfig::from_spec(spec, clip.sample_rate())?;
    Ok(encode_with(spec.clone(), &config, clip))
}

pub(crate) fn encode_with(spec: CodecSpec, config: &SbcConfig, clip: &AudioClip) -> EncodedStream {
    let bank = Filterbank::get(config.subbands);
    let per_frame = config.samples_per_frame();
    let frame_count = (clip.len() + bank.delay()).div_ceil(per_frame).max(1);
    let mut x = vec![0.0f64; frame_count * per_frame];
    for (d, &s) in x.iter_mut().zip(clip.samples()) {
        *d = s as f64 * Q15;
    }
    let blocks = bank.analyze(&x);
    let header = config.header();
    let config_byte = header.config_byte();
    let fs_index = header.fs_index;
    let frame_len = header.frame_len();
    let mut payload = Vec::with_capacity(frame_count * frame_len);
    for frame_blocks in blocks.chunks(config.blocks) {
        let sfs: Vec<u8> = (0..config.subbands)
            .map(|sb| scale_factor(frame_blocks.iter().map(|b| b[sb].abs()).fold(0.0, f64::max)))
            .collect();
        let bits = alloc::allocate(&sfs, config.bitpool as i32, config.allocation, fs_index);
        let mut w = BitWriter::new();
        w.write(SYNC as u64, 8);
        w.write(config_byte as u64, 8);
        w.write(config.bitpool as u64, 8);
        w.write(frame_crc(config_byte, config.bitpool, &sfs) as u64, 8);
        for &sf in &sfs {
            w.write(sf as u64, 4);
        }
        for block in frame_blocks {
            for sb in 0..config.subbands {
                if bits[sb] > 0 {
                    w.write(quantize(block[sb], sfs[sb], bits[sb]), bits[sb] as u32);
                }
            }
        }
        let mut bytes = w.finish();
        bytes.resize(frame_len, 0);
        payload.extend_from_slice(&bytes);
    }
    EncodedStream {
        spec,
        sample_rate: config.sample_rate,
        frame_count,
        payload,
        original_length: clip.len(),
    }
}

fn decode_frames(payload: &[u8]) -> Result<(Header, Vec<Vec<f64>>), DecodeError> {
    let mut pos = 0;
    let mut frame = 0;
    let mut first: Option<Header> = None;
    let mut blocks = Vec::new();
    while pos < payload.len() {
        let rest = &payload[pos..];
        if rest[0] != SYNC {
            return Err(DecodeError::SyncMismatch {
                frame,
                found: rest[0],
            });
        }
        if rest.len() < 4 {
            return Err(DecodeError::Truncated { frame });
        }
        let header = Header::from_bytes(rest[1], rest[2]);
        if header.channel_mode != 0 {
            return Err(DecodeError::Invalid {
                frame,
                reason: format!("channel mode {} is not mono", header.channel_mode),
            });
        }
        if header.bitpool as u32 > max_bitpool(header.subbands) {
            return Err(DecodeError::Invalid {
                frame,
                reason: format!("bitpool {} exceeds mono limit", header.bitpool),
            });
        }
        match first {
            None => first = Some(header),
            Some(h) if (h.fs_index, h.subbands) != (header.fs_index, header.subbands) => {
                return Err(DecodeError::Invalid {
                    frame,
                    reason: "sampling frequency or subband count changed mid-stream".into(),
                })
            }
            Some(_) => {}
        }
        let frame_len = header.frame_len();
        if rest.len() < frame_len {
            return Err(DecodeError::Truncated { frame });
        }
        let mut r = BitReader::new(&rest[4..frame_len]);
        let sfs: Vec<u8> = (0..header.subbands)
            .map(|_| r.read(4).expect("length checked") as u8)
            .collect();
        let computed = frame_crc(rest[1], rest[2], &sfs);
        if computed != rest[3] {
            return Err(DecodeError::Crc {
                frame,
                stored: rest[3],
                computed,
            });
        }
        let bits = alloc::allocate(
            &sfs,
            header.bitpool as i32,
            header.allocation,
            header.fs_index,
        );
        for _ in 0..header.blocks {
            let block = (0..header.subbands)
                .map(|sb| match bits[sb] {
                    0 => 0.0,
                    b => dequantize(r.read(b as u32).expect("length checked"), sfs[sb], b),
                })
                .collect();
            blocks.push(block);
        }
        pos += frame_len;
        frame += 1;
    }
    let header = first.ok_or(DecodeError::Truncated { frame: 0 })?;
    Ok((header, blocks))
}

pub(crate) fn decode(stream: &EncodedStream) -> Result<AudioClip, CodecError> {
    let (header, blocks) = decode_frames(&stream.payload)?;
    let bank = Filterbank::get(header.subbands);
    let y = bank.synthesize(&blocks);
    let available = y.len().saturating_sub(bank.delay());
    if stream.original_length > available {
        return Err(DecodeError::Invalid {
            frame: blocks.len() / header.blocks,
            reason: format!(
                "stream holds {available} samples, {} expected",
                stream.original_length
            ),
        }
        .into());
    }
    let samples = y[bank.delay()..bank.delay() + stream.original_length]
        .iter()
        .map(|&v| (v / Q15) as f32)
        .collect();
    Ok(AudioClip::new(header.sample_rate(), samples))
}
