//! Reference semantics for every kernel. Other backends must match these
//! bit for bit.

use crate::fastscan::Reg32;

pub fn lane_pair_shuffle(table: &Reg32, idx: &Reg32) -> Reg32 {
    let mut out = [0u8; 32];
    for (i, slot) in out.iter_mut().enumerate() {
        let sel = idx.0[i];
        if sel & 0x80 == 0 {
            *slot = table.0[16 * (i / 16) + (sel & 0x0f) as usize];
        }
    }
    Reg32(out)
}

pub fn movemask32(v: &Reg32) -> u32 {
    v.0.iter()
        .enumerate()
        .fold(0u32, |mask, (i, &b)| mask | (((b >> 7) as u32) << i))
}

/// `tables` is `m` rows of 16 bytes, `block` is `m` groups of 16 code bytes.
pub fn block_accumulate(tables: &[u8], block: &[u8]) -> [u16; 32] {
    let mut acc = [0u16; 32];
    for (row, group) in tables.chunks_exact(16).zip(block.chunks_exact(16)) {
        for (p, &byte) in group.iter().enumerate() {
            acc[p] += row[(byte & 0x0f) as usize] as u16;
            acc[16 + p] += row[(byte >> 4) as usize] as u16;
        }
    }
    acc
}
