/// 32 bytes viewed as two 16-byte lanes: lane 0 is bytes `0..16`, lane 1
/// is bytes `16..32`. Shuffles never move data across the lane boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[repr(C, align(32))]
pub struct Reg32(pub [u8; 32]);

impl Reg32 {
    pub const LANE: usize = 16;

    pub fn from_lanes(lo: [u8; 16], hi: [u8; 16]) -> Self {
        let mut bytes = [0u8; 32];
        bytes[..16].copy_from_slice(&lo);
        bytes[16..].copy_from_slice(&hi);
        Reg32(bytes)
    }

    /// Both lanes hold `lane`.
    pub fn splat_lane(lane: [u8; 16]) -> Self {
        Self::from_lanes(lane, lane)
    }

    pub fn splat(byte: u8) -> Self {
        Reg32([byte; 32])
    }

    pub fn lane(&self, i: usize) -> &[u8; 16] {
        self.0[i * 16..(i + 1) * 16].try_into().unwrap()
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}
