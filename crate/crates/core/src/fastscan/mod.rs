//! 4-bit PQ scan with register-resident lookup tables.
//!
//! Each float ADC row (16 entries for K=16) is scalar-quantized to 16 bytes
//! so that it fits one 128-bit register. Codes are packed 32 vectors per
//! block; for every subquantizer the block's 16 code bytes are split into
//! low and high nibbles and looked up with one 32-byte lane-pair shuffle,
//! then widened into 16-bit accumulators.

mod kernel;
mod lut;
mod pack;
mod reg;

pub use kernel::{active_backend_name, scalar, Backend, Kernel, BACKEND_ENV};
pub use lut::{quantize_lut, QuantizedLUT};
pub use pack::{pack_codes, PackedCodeBlocks, BLOCK_SIZE};
pub use reg::Reg32;

use crate::error::{Error, Result};
use crate::topk::{Neighbor, TopK};

/// Largest `m` for which `m * 255` fits a `u16` accumulator.
pub const MAX_SUBQUANTIZERS: usize = 256;

/// [`Kernel::lane_pair_shuffle`] on the process-wide kernel.
pub fn lane_pair_shuffle(table: &Reg32, idx: &Reg32) -> Reg32 {
    Kernel::active().lane_pair_shuffle(table, idx)
}

/// [`Kernel::movemask32`] on the process-wide kernel.
pub fn movemask32(v: &Reg32) -> u32 {
    Kernel::active().movemask32(v)
}

fn check_shapes(qlut: &QuantizedLUT, packed: &PackedCodeBlocks) -> Result<()> {
    if qlut.m() != packed.m() {
        return Err(Error::argument(format!(
            "table has m={}, codes have m={}",
            qlut.m(),
            packed.m()
        )));
    }
    if qlut.m() > MAX_SUBQUANTIZERS {
        return Err(Error::argument(format!(
            "m={} exceeds {MAX_SUBQUANTIZERS}; 16-bit accumulators could overflow",
            qlut.m()
        )));
    }
    Ok(())
}

/// Accumulators for the 32 slots of block `b`: entry `p` is the sum over
/// subquantizers of the table byte selected by vector `32b + p`. Padding
/// slots are included (their codes are zero).
pub fn block_accumulate_with(
    kernel: Kernel,
    qlut: &QuantizedLUT,
    packed: &PackedCodeBlocks,
    b: usize,
) -> Result<[u16; 32]> {
    check_shapes(qlut, packed)?;
    if b >= packed.n_blocks() {
        return Err(Error::argument(format!(
            "block {b} out of range ({} blocks)",
            packed.n_blocks()
        )));
    }
    Ok(kernel.block_accumulate_raw(qlut.as_bytes(), packed.block(b)))
}

pub fn block_accumulate(
    qlut: &QuantizedLUT,
    packed: &PackedCodeBlocks,
    b: usize,
) -> Result<[u16; 32]> {
    block_accumulate_with(Kernel::active(), qlut, packed, b)
}

/// Scans every real vector of `packed`, pushing `(id_of(i), f(acc_i))` into `top`.
pub fn scan_into(
    kernel: Kernel,
    qlut: &QuantizedLUT,
    packed: &PackedCodeBlocks,
    id_of: impl Fn(usize) -> u64,
    top: &mut TopK,
) -> Result<()> {
    check_shapes(qlut, packed)?;
    let tables = qlut.as_bytes();
    for b in 0..packed.n_blocks() {
        let acc = kernel.block_accumulate_raw(tables, packed.block(b));
        let base = b * BLOCK_SIZE;
        for (p, &a) in acc.iter().enumerate().take(packed.valid_count(b)) {
            let dist = qlut.dequantize(a as u32);
            if let Some(worst) = top.threshold() {
                if dist > worst.distance {
                    continue;
                }
            }
            top.push(id_of(base + p), dist);
        }
    }
    Ok(())
}

/// Flat fast scan: returns the `topk` smallest approximate distances
/// (clamped to the number of vectors), ascending, ties by lower id.
pub fn fastscan_search_with(
    kernel: Kernel,
    qlut: &QuantizedLUT,
    packed: &PackedCodeBlocks,
    topk: usize,
) -> Result<Vec<Neighbor>> {
    if topk == 0 {
        return Err(Error::argument("topk must be at least 1"));
    }
    let mut top = TopK::new(topk.min(packed.len()));
    scan_into(kernel, qlut, packed, |i| i as u64, &mut top)?;
    Ok(top.into_sorted_vec())
}

pub fn fastscan_search(
    qlut: &QuantizedLUT,
    packed: &PackedCodeBlocks,
    topk: usize,
) -> Result<Vec<Neighbor>> {
    fastscan_search_with(Kernel::active(), qlut, packed, topk)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pq::{LutF, PQCodes};

    fn kernels() -> Vec<Kernel> {
        Backend::available()
            .into_iter()
            .map(|b| Kernel::new(b).unwrap())
            .collect()
    }

    fn counting_reg() -> Reg32 {
        let mut r = Reg32::default();
        for (i, b) in r.0.iter_mut().enumerate() {
            *b = (i * 7 + 3) as u8;
        }
        r
    }

    #[test]
    fn identity_indices_copy_each_lane() {
        let table = counting_reg();
        let mut idx = Reg32::default();
        for i in 0..32 {
            idx.0[i] = (i % 16) as u8;
        }
        for k in kernels() {
            assert_eq!(k.lane_pair_shuffle(&table, &idx), table, "{}", k.name());
        }
    }

    #[test]
    fn high_bit_indices_zero_output() {
        let table = counting_reg();
        for k in kernels() {
            let out = k.lane_pair_shuffle(&table, &Reg32::splat(0x80));
            assert_eq!(out, Reg32::default(), "{}", k.name());
            // 0x8f also has bit 7 set
            let out = k.lane_pair_shuffle(&table, &Reg32::splat(0x8f));
            assert_eq!(out, Reg32::default(), "{}", k.name());
        }
    }

    #[test]
    fn lanes_use_their_own_table() {
        let t1 = [10u8; 16];
        let t2 = [20u8; 16];
        let table = Reg32::from_lanes(t1, t2);
        for k in kernels() {
            let out = k.lane_pair_shuffle(&table, &Reg32::splat(0x35));
            assert!(out.lane(0).iter().all(|&b| b == 10));
            assert!(out.lane(1).iter().all(|&b| b == 20));
        }
    }

    #[test]
    fn movemask_extremes() {
        for k in kernels() {
            assert_eq!(k.movemask32(&Reg32::splat(0x80)), u32::MAX);
            assert_eq!(k.movemask32(&Reg32::splat(0x7f)), 0);
            let mut r = Reg32::default();
            r.0[0] = 0xff;
            r.0[31] = 0x80;
            r.0[17] = 0x81;
            assert_eq!(k.movemask32(&r), (1 << 0) | (1 << 17) | (1 << 31));
        }
    }

    fn packed_random(n: usize, m: usize, seed: u64) -> PackedCodeBlocks {
        let mut rng = crate::rng::SeededRng::new(seed);
        let codes: Vec<u8> = (0..n * m).map(|_| rng.below(16) as u8).collect();
        pack_codes(&PQCodes::new(m, 16, codes).unwrap()).unwrap()
    }

    #[test]
    fn constant_tables_count_subquantizers() {
        let m = 16;
        let packed = packed_random(40, m, 1);
        let ones = QuantizedLUT::from_parts(m, vec![1; m * 16], 0.0, 1.0).unwrap();
        let zeros = QuantizedLUT::from_parts(m, vec![0; m * 16], 0.0, 1.0).unwrap();
        for k in kernels() {
            for b in 0..packed.n_blocks() {
                assert_eq!(
                    block_accumulate_with(k, &ones, &packed, b).unwrap(),
                    [m as u16; 32]
                );
                assert_eq!(
                    block_accumulate_with(k, &zeros, &packed, b).unwrap(),
                    [0; 32]
                );
            }
        }
    }

    #[test]
    fn max_m_all_255_does_not_wrap() {
        let m = MAX_SUBQUANTIZERS;
        let packed = packed_random(32, m, 2);
        let full = QuantizedLUT::from_parts(m, vec![255; m * 16], 0.0, 1.0).unwrap();
        for k in kernels() {
            let acc = block_accumulate_with(k, &full, &packed, 0).unwrap();
            assert_eq!(acc, [(m * 255) as u16; 32], "{}", k.name());
        }
    }

    #[test]
    fn oversized_m_rejected() {
        let m = MAX_SUBQUANTIZERS + 1;
        let packed = packed_random(1, m, 3);
        let q = QuantizedLUT::from_parts(m, vec![0; m * 16], 0.0, 1.0).unwrap();
        assert!(block_accumulate(&q, &packed, 0).is_err());
        assert!(fastscan_search(&q, &packed, 1).is_err());
    }

    #[test]
    fn per_row_minima_give_bias() {
        let lut = LutF::new(
            2,
            16,
            (0..32).map(|i| ((i * 5) % 17) as f32 + 1.0).collect(),
        )
        .unwrap();
        let q = quantize_lut(&lut).unwrap();
        let argmin = |j: usize| {
            (0..16)
                .min_by(|&a, &b| lut.get(j, a).total_cmp(&lut.get(j, b)))
                .unwrap() as u8
        };
        let codes = PQCodes::new(2, 16, vec![argmin(0), argmin(1)]).unwrap();
        let packed = pack_codes(&codes).unwrap();
        let hits = fastscan_search(&q, &packed, 1).unwrap();
        assert_eq!(hits[0].id, 0);
        assert_eq!(hits[0].distance, q.bias());
    }

    #[test]
    fn padded_slots_never_returned() {
        let m = 4;
        let packed = packed_random(37, m, 4);
        // Put the minimum of every row at nibble 0, which padding also selects.
        let mut bytes = vec![200u8; m * 16];
        for j in 0..m {
            bytes[j * 16] = 0;
        }
        let q = QuantizedLUT::from_parts(m, bytes, 0.0, 1.0).unwrap();
        let hits = fastscan_search(&q, &packed, 100).unwrap();
        assert_eq!(hits.len(), 37);
        assert!(hits.iter().all(|h| h.id < 37));
    }
}
