//! A2DP SBC frame header and CRC-8.

use super::alloc::Allocation;

pub(crate) const SYNC: u8 = 0x9C;
const BLOCKS: [usize; 4] = [4, 8, 12, 16];
const RATES: [u32; 4] = [16_000, 32_000, 44_100, 48_000];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Header {
    pub fs_index: usize,
    pub blocks: usize,
    /// 0 = mono; other channel modes are parsed but not decoded.
    pub channel_mode: u8,
    pub allocation: Allocation,
    pub subbands: usize,
    pub bitpool: u8,
}

impl Header {
    pub fn sample_rate(&self) -> u32 {
        RATES[self.fs_index]
    }

    /// Byte 1 of the frame.
    pub fn config_byte(&self) -> u8 {
        let blocks = BLOCKS
            .iter()
            .position(|&b| b == self.blocks)
            .expect("valid block count") as u8;
        let alloc = match self.allocation {
            Allocation::Loudness => 0,
            Allocation::Snr => 1,
        };
        let sb = u8::from(self.subbands == 8);
        (self.fs_index as u8) << 6 | blocks << 4 | self.channel_mode << 2 | alloc << 1 | sb
    }

    pub fn from_bytes(config: u8, bitpool: u8) -> Header {
        Header {
            fs_index: (config >> 6) as usize,
            blocks: BLOCKS[((config >> 4) & 3) as usize],
            channel_mode: (config >> 2) & 3,
            allocation: if (config >> 1) & 1 == 1 {
                Allocation::Snr
            } else {
                Allocation::Loudness
            },
            subbands: if config & 1 == 1 { 8 } else { 4 },
            bitpool,
        }
    }

    /// Mono frame length in bytes.
    pub fn frame_len(&self) -> usize {
        4 + (4 * self.subbands) / 8 + (self.blocks * self.bitpool as usize).div_ceil(8)
    }
}

/// CRC-8 (polynomial x^8 + x^4 + x^3 + x^2 + 1, initial value 0x0F) over
/// `bits` bits of `data`, most significant bit first.
pub(crate) fn crc8(data: &[u8], bits: usize) -> u8 {
    let mut crc: u8 = 0x0F;
    for i in 0..bits {
        let bit = (data[i / 8] >> (7 - i % 8)) & 1;
        let top = crc >> 7;
        crc <<= 1;
        if top ^ bit == 1 {
            crc ^= 0x1D;
        }
    }
    crc
}

/// CRC of a mono frame: config byte, bitpool byte, then the 4-bit scale factors.
pub(crate) fn frame_crc(config: u8, bitpool: u8, scale_factors: &[u8]) -> u8 {
    let mut data = vec![config, bitpool];
    for pair in scale_factors.chunks(2) {
        data.push(pair[0] << 4 | pair.get(1).copied().unwrap_or(0));
    }
    crc8(&data, 16 + 4 * scale_factors.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_byte_round_trip() {
        for fs_index in 0..4 {
            for blocks in BLOCKS {
                for allocation in [Allocation::Snr, Allocation::Loudness] {
                    for subbands in [4, 8] {
                        let h = Header {
                            fs_index,
                            blocks,
                            channel_mode: 0,
                            allocation,
                            subbands,
                            bitpool: 31,
                        };
                        assert_eq!(Header::from_bytes(h.config_byte(), 31), h);
                    }
                }
            }
        }
    }

    #[test]
    fn default_frame_length() {
        let h = Header::from_bytes(0b10_11_00_0_1, 8);
        assert_eq!(h.sample_rate(), 44_100);
        assert_eq!((h.blocks, h.subbands), (16, 8));
        assert_eq!(h.frame_len(), 8 + 2 * 8);
    }

    #[test]
    fn crc_matches_bytewise_table_form() {
        // Table-driven reference over whole bytes.
        let table: Vec<u8> = (0..=255u8)
            .map(|b| {
                let mut c = b;
                for _ in 0..8 {
                    c = if c & 0x80 != 0 {
                        (c << 1) ^ 0x1D
                    } else {
                        c << 1
                    };
                }
                c
            })
            .collect();
        let data = [0xB1u8, 0x23, 0x45, 0x67];
        let mut crc = 0x0Fu8;
        for &b in &data {
            crc = table[(crc ^ b) as usize];
        }
        assert_eq!(crc8(&data, 32), crc);
    }
}
