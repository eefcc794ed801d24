use crate::codecs::CodecError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Allocation {
    Loudness,
    Snr,
}

impl Allocation {
    pub fn as_str(self) -> &'static str {
        match self {
            Allocation::Loudness => "loudness",
            Allocation::Snr => "snr",
        }
    }
}

const OFFSET4: [[i32; 4]; 4] = [[-1, 0, 0, 0], [-2, 0, 0, 1], [-2, 0, 0, 1], [-2, 0, 0, 1]];

const OFFSET8: [[i32; 8]; 4] = [
    [-2, 0, 0, 0, 0, 0, 0, 1],
    [-3, 0, 0, 0, 0, 0, 1, 2],
    [-4, 0, 0, 0, 0, 0, 1, 2],
    [-4, 0, 0, 0, 0, 0, 1, 2],
];

/// Header index of a supported sampling frequency.
pub(crate) fn frequency_index(sample_rate: u32) -> Option<usize> {
    match sample_rate {
        16_000 => Some(0),
        32_000 => Some(1),
        44_100 => Some(2),
        48_000 => Some(3),
        _ => None,
    }
}

/// Largest bitpool a mono frame can spend.
pub(crate) fn max_bitpool(subbands: usize) -> u32 {
    (16 * subbands as u32).min(250)
}

/// Per-subband bit counts for one mono frame, following the A2DP reference
/// allocation loop (bit slicing from the largest need downwards, then two
/// passes distributing the remainder in subband order).
///
/// `scale_factors.len()` selects 4 or 8 subbands.
pub fn sbc_bit_allocation(
    scale_factors: &[u8],
    bitpool: u32,
    allocation: Allocation,
    sample_rate: u32,
) -> Result<Vec<u8>, CodecError> {
    let subbands = scale_factors.len();
    let param = |key: &str, reason: String| CodecError::Param {
        family: "sbc".into(),
        key: key.into(),
        reason,
    };
    if subbands != 4 && subbands != 8 {
        return Err(param(
            "subbands",
            format!("{subbands} scale factors, expected 4 or 8"),
        ));
    }
    if let Some(sf) = scale_factors.iter().find(|&&s| s > 15) {
        return Err(param("scale_factor", format!("{sf} exceeds 15")));
    }
    if bitpool > max_bitpool(subbands) {
        return Err(param(
            "bitpool",
            format!("{bitpool} exceeds {} for mono", max_bitpool(subbands)),
        ));
    }
    let fs = frequency_index(sample_rate).ok_or(CodecError::UnsupportedRate {
        family: "sbc".into(),
        rate: sample_rate,
    })?;
    Ok(allocate(scale_factors, bitpool as i32, allocation, fs))
}

pub(crate) fn allocate(
    scale_factors: &[u8],
    bitpool: i32,
    allocation: Allocation,
    fs: usize,
) -> Vec<u8> {
    let subbands = scale_factors.len();
    let bitneed: Vec<i32> = scale_factors
        .iter()
        .enumerate()
        .map(|(sb, &sf)| {
            let sf = sf as i32;
            match allocation {
                Allocation::Snr => sf,
                Allocation::Loudness if sf == 0 => -5,
                Allocation::Loudness => {
                    let offset = if subbands == 4 {
                        OFFSET4[fs][sb]
                    } else {
                        OFFSET8[fs][sb]
                    };
                    let loudness = sf - offset;
                    if loudness > 0 {
                        loudness / 2
                    } else {
                        loudness
                    }
                }
            }
        })
        .collect();
    let max_bitneed = *bitneed.iter().max().expect("non-empty");

    let mut bitcount = 0;
    let mut slicecount = 0;
    let mut bitslice = max_bitneed + 1;
    loop {
        bitslice -= 1;
        bitcount += slicecount;
        slicecount = 0;
        for &need in &bitneed {
            if need > bitslice + 1 && need < bitslice + 16 {
                slicecount += 1;
            } else if need == bitslice + 1 {
                slicecount += 2;
            }
        }
        if bitcount + slicecount >= bitpool {
            break;
        }
    }
    if bitcount + slicecount == bitpool {
        bitcount += slicecount;
        bitslice -= 1;
    }

    let mut bits: Vec<i32> = bitneed
        .iter()
        .map(|&need| {
            if need < bitslice + 2 {
                0
            } else {
                (need - bitslice).min(16)
            }
        })
        .collect();

    let mut sb = 0;
    while bitcount < bitpool && sb < subbands {
        if bits[sb] >= 2 && bits[sb] < 16 {
            bits[sb] += 1;
            bitcount += 1;
        } else if bitneed[sb] == bitslice + 1 && bitpool > bitcount + 1 {
            bits[sb] = 2;
            bitcount += 2;
        }
        sb += 1;
    }
    sb = 0;
    while bitcount < bitpool && sb < subbands {
        if bits[sb] < 16 {
            bits[sb] += 1;
            bitcount += 1;
        }
        sb += 1;
    }
    bits.into_iter().map(|b| b as u8).collect()
}
