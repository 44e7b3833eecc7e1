//! SSSE3 (two 128-bit lanes) and AVX2 (one 256-bit register) kernels.
//!
//! Callers must have verified CPU support; see `Kernel::new`.

#[cfg(target_arch = "x86")]
use std::arch::x86::*;
#[cfg(target_arch = "x86_64")]
use std::arch::x86_64::*;

use crate::fastscan::Reg32;

#[inline]
#[target_feature(enable = "ssse3")]
unsafe fn load_lanes(r: &Reg32) -> (__m128i, __m128i) {
    let p = r.0.as_ptr() as *const __m128i;
    (_mm_loadu_si128(p), _mm_loadu_si128(p.add(1)))
}

#[inline]
#[target_feature(enable = "ssse3")]
unsafe fn store_lanes(lo: __m128i, hi: __m128i) -> Reg32 {
    let mut out = Reg32::default();
    let p = out.0.as_mut_ptr() as *mut __m128i;
    _mm_storeu_si128(p, lo);
    _mm_storeu_si128(p.add(1), hi);
    out
}

/// Two 128-bit byte shuffles, one per lane.
#[target_feature(enable = "ssse3")]
pub unsafe fn lane_pair_shuffle_ssse3(table: &Reg32, idx: &Reg32) -> Reg32 {
    let (t0, t1) = load_lanes(table);
    let (i0, i1) = load_lanes(idx);
    store_lanes(_mm_shuffle_epi8(t0, i0), _mm_shuffle_epi8(t1, i1))
}

#[target_feature(enable = "ssse3")]
pub unsafe fn movemask32_ssse3(v: &Reg32) -> u32 {
    let (lo, hi) = load_lanes(v);
    let lo = _mm_movemask_epi8(lo) as u32 & 0xffff;
    let hi = _mm_movemask_epi8(hi) as u32 & 0xffff;
    lo | (hi << 16)
}

#[target_feature(enable = "ssse3")]
pub unsafe fn block_accumulate_ssse3(tables: &[u8], block: &[u8]) -> [u16; 32] {
    debug_assert_eq!(tables.len(), block.len());
    let mask = _mm_set1_epi8(0x0f);
    let zero = _mm_setzero_si128();
    // Accumulators hold vectors 0..8, 8..16, 16..24, 24..32.
    let mut acc0 = _mm_setzero_si128();
    let mut acc1 = _mm_setzero_si128();
    let mut acc2 = _mm_setzero_si128();
    let mut acc3 = _mm_setzero_si128();
    let groups = tables.len() / 16;
    let tp = tables.as_ptr() as *const __m128i;
    let bp = block.as_ptr() as *const __m128i;
    for j in 0..groups {
        let row = _mm_loadu_si128(tp.add(j));
        let codes = _mm_loadu_si128(bp.add(j));
        let lo = _mm_and_si128(codes, mask);
        let hi = _mm_and_si128(_mm_srli_epi16(codes, 4), mask);
        let r_lo = _mm_shuffle_epi8(row, lo);
        let r_hi = _mm_shuffle_epi8(row, hi);
        acc0 = _mm_add_epi16(acc0, _mm_unpacklo_epi8(r_lo, zero));
        acc1 = _mm_add_epi16(acc1, _mm_unpackhi_epi8(r_lo, zero));
        acc2 = _mm_add_epi16(acc2, _mm_unpacklo_epi8(r_hi, zero));
        acc3 = _mm_add_epi16(acc3, _mm_unpackhi_epi8(r_hi, zero));
    }
    let mut out = [0u16; 32];
    let op = out.as_mut_ptr() as *mut __m128i;
    _mm_storeu_si128(op, acc0);
    _mm_storeu_si128(op.add(1), acc1);
    _mm_storeu_si128(op.add(2), acc2);
    _mm_storeu_si128(op.add(3), acc3);
    out
}

#[target_feature(enable = "avx2")]
pub unsafe fn lane_pair_shuffle_avx2(table: &Reg32, idx: &Reg32) -> Reg32 {
    let t = _mm256_loadu_si256(table.0.as_ptr() as *const __m256i);
    let i = _mm256_loadu_si256(idx.0.as_ptr() as *const __m256i);
    let mut out = Reg32::default();
    _mm256_storeu_si256(
        out.0.as_mut_ptr() as *mut __m256i,
        _mm256_shuffle_epi8(t, i),
    );
    out
}

#[target_feature(enable = "avx2")]
pub unsafe fn movemask32_avx2(v: &Reg32) -> u32 {
    _mm256_movemask_epi8(_mm256_loadu_si256(v.0.as_ptr() as *const __m256i)) as u32
}

#[target_feature(enable = "avx2")]
pub unsafe fn block_accumulate_avx2(tables: &[u8], block: &[u8]) -> [u16; 32] {
    debug_assert_eq!(tables.len(), block.len());
    let mask = _mm256_set1_epi8(0x0f);
    let zero = _mm256_setzero_si256();
    // acc_a: vectors [0..8 | 16..24], acc_b: [8..16 | 24..32]
    let mut acc_a = _mm256_setzero_si256();
    let mut acc_b = _mm256_setzero_si256();
    let groups = tables.len() / 16;
    let tp = tables.as_ptr() as *const __m128i;
    let bp = block.as_ptr() as *const __m128i;
    for j in 0..groups {
        let row = _mm256_broadcastsi128_si256(_mm_loadu_si128(tp.add(j)));
        let codes = _mm_loadu_si128(bp.add(j));
        // low nibbles in lane 0, high nibbles in lane 1
        let both =
            _mm256_inserti128_si256::<1>(_mm256_castsi128_si256(codes), _mm_srli_epi16(codes, 4));
        let idx = _mm256_and_si256(both, mask);
        let vals = _mm256_shuffle_epi8(row, idx);
        acc_a = _mm256_add_epi16(acc_a, _mm256_unpacklo_epi8(vals, zero));
        acc_b = _mm256_add_epi16(acc_b, _mm256_unpackhi_epi8(vals, zero));
    }
    let first = _mm256_permute2x128_si256::<0x20>(acc_a, acc_b);
    let second = _mm256_permute2x128_si256::<0x31>(acc_a, acc_b);
    let mut out = [0u16; 32];
    let op = out.as_mut_ptr() as *mut __m256i;
    _mm256_storeu_si256(op, first);
    _mm256_storeu_si256(op.add(1), second);
    out
}
