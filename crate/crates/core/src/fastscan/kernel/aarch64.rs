//! NEON kernels: each 32-byte operation runs as a pair of 128-bit table
//! lookups (`vqtbl1q_u8`), one per lane.

use std::arch::aarch64::*;

use crate::fastscan::Reg32;

#[inline]
#[target_feature(enable = "neon")]
unsafe fn load_lanes(r: &Reg32) -> uint8x16x2_t {
    vld1q_u8_x2(r.0.as_ptr())
}

#[target_feature(enable = "neon")]
pub unsafe fn lane_pair_shuffle_neon(table: &Reg32, idx: &Reg32) -> Reg32 {
    let t = load_lanes(table);
    let i = load_lanes(idx);
    // vqtbl1q_u8 zeroes any index >= 16; keeping bit 7 and the low nibble
    // reproduces the x86 shuffle rule.
    let keep = vdupq_n_u8(0x8f);
    let lo = vqtbl1q_u8(t.0, vandq_u8(i.0, keep));
    let hi = vqtbl1q_u8(t.1, vandq_u8(i.1, keep));
    let mut out = Reg32::default();
    vst1q_u8_x2(out.0.as_mut_ptr(), uint8x16x2_t(lo, hi));
    out
}

#[inline]
#[target_feature(enable = "neon")]
unsafe fn movemask16(v: uint8x16_t) -> u32 {
    const WEIGHTS: [u8; 16] = [1, 2, 4, 8, 16, 32, 64, 128, 1, 2, 4, 8, 16, 32, 64, 128];
    let msb = vshrq_n_u8::<7>(v);
    let bits = vmulq_u8(msb, vld1q_u8(WEIGHTS.as_ptr()));
    let lo = vaddv_u8(vget_low_u8(bits)) as u32;
    let hi = vaddv_u8(vget_high_u8(bits)) as u32;
    lo | (hi << 8)
}

#[target_feature(enable = "neon")]
pub unsafe fn movemask32_neon(v: &Reg32) -> u32 {
    let r = load_lanes(v);
    movemask16(r.0) | (movemask16(r.1) << 16)
}

#[target_feature(enable = "neon")]
pub unsafe fn block_accumulate_neon(tables: &[u8], block: &[u8]) -> [u16; 32] {
    debug_assert_eq!(tables.len(), block.len());
    let mask = vdupq_n_u8(0x0f);
    let mut acc0 = vdupq_n_u16(0);
    let mut acc1 = vdupq_n_u16(0);
    let mut acc2 = vdupq_n_u16(0);
    let mut acc3 = vdupq_n_u16(0);
    let groups = tables.len() / 16;
    for j in 0..groups {
        let row = vld1q_u8(tables.as_ptr().add(j * 16));
        let codes = vld1q_u8(block.as_ptr().add(j * 16));
        let lo = vqtbl1q_u8(row, vandq_u8(codes, mask));
        let hi = vqtbl1q_u8(row, vshrq_n_u8::<4>(codes));
        acc0 = vaddw_u8(acc0, vget_low_u8(lo));
        acc1 = vaddw_high_u8(acc1, lo);
        acc2 = vaddw_u8(acc2, vget_low_u8(hi));
        acc3 = vaddw_high_u8(acc3, hi);
    }
    let mut out = [0u16; 32];
    vst1q_u16(out.as_mut_ptr(), acc0);
    vst1q_u16(out.as_mut_ptr().add(8), acc1);
    vst1q_u16(out.as_mut_ptr().add(16), acc2);
    vst1q_u16(out.as_mut_ptr().add(24), acc3);
    out
}
