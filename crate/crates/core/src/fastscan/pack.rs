//! Blocked nibble layout.
//!
//! Codes are grouped in blocks of 32 vectors. Block `b` holds `m` groups of
//! 16 bytes, one per subquantizer; byte `p` of group `j` carries the code of
//! vector `32b + p` in its low nibble and of vector `32b + 16 + p` in its high
//! nibble. Slots past the last vector are zero.

use crate::error::{Error, Result};
use crate::pq::PQCodes;

pub const BLOCK_SIZE: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedCodeBlocks {
    n: usize,
    m: usize,
    data: Vec<u8>,
}

#[inline]
fn slot(p: usize) -> (usize, u32) {
    if p < 16 {
        (p, 0)
    } else {
        (p - 16, 4)
    }
}

impl PackedCodeBlocks {
    pub fn new(m: usize) -> Self {
        assert!(m > 0, "m must be at least 1");
        Self {
            n: 0,
            m,
            data: Vec::new(),
        }
    }

    /// Rebuilds from raw block bytes, rejecting non-zero padding.
    pub fn from_raw(n: usize, m: usize, data: Vec<u8>) -> Result<Self> {
        if m == 0 {
            return Err(Error::argument("m must be at least 1"));
        }
        let expected = n.div_ceil(BLOCK_SIZE) * m * 16;
        if data.len() != expected {
            return Err(Error::Corruption(format!(
                "{n} vectors of m={m} need {expected} packed bytes, got {}",
                data.len()
            )));
        }
        let packed = Self { n, m, data };
        let tail = n % BLOCK_SIZE;
        if tail != 0 {
            let b = packed.n_blocks() - 1;
            for p in tail..BLOCK_SIZE {
                for j in 0..m {
                    if packed.code(b * BLOCK_SIZE + p, j) != 0 {
                        return Err(Error::Corruption(format!(
                            "padding slot {p} of block {b}, group {j} is not zero"
                        )));
                    }
                }
            }
        }
        Ok(packed)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n_blocks(&self) -> usize {
        self.n.div_ceil(BLOCK_SIZE)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn block_bytes(&self) -> usize {
        self.m * 16
    }

    /// The `m * 16` bytes of block `b`.
    #[inline]
    pub fn block(&self, b: usize) -> &[u8] {
        let len = self.block_bytes();
        &self.data[b * len..(b + 1) * len]
    }

    /// Number of real vectors in block `b`.
    pub fn valid_count(&self, b: usize) -> usize {
        (self.n - b * BLOCK_SIZE).min(BLOCK_SIZE)
    }

    /// Code of vector `i` for subquantizer `j`.
    pub fn code(&self, i: usize, j: usize) -> u8 {
        let (b, p) = (i / BLOCK_SIZE, i % BLOCK_SIZE);
        let (byte, shift) = slot(p);
        (self.data[b * self.block_bytes() + j * 16 + byte] >> shift) & 0x0f
    }

    /// Appends one vector's codes, opening a zeroed block when needed.
    pub fn push(&mut self, code: &[u8]) -> Result<()> {
        if code.len() != self.m {
            return Err(Error::argument(format!(
                "code row has {} entries, expected {}",
                code.len(),
                self.m
            )));
        }
        if let Some(&c) = code.iter().find(|&&c| c >= 16) {
            return Err(Error::argument(format!("code {c} does not fit in 4 bits")));
        }
        let p = self.n % BLOCK_SIZE;
        if p == 0 {
            self.data.resize(self.data.len() + self.block_bytes(), 0);
        }
        let base = (self.n / BLOCK_SIZE) * self.block_bytes();
        let (byte, shift) = slot(p);
        for (j, &c) in code.iter().enumerate() {
            self.data[base + j * 16 + byte] |= c << shift;
        }
        self.n += 1;
        Ok(())
    }

    pub fn unpack(&self) -> PQCodes {
        let mut codes = Vec::with_capacity(self.n * self.m);
        for i in 0..self.n {
            for j in 0..self.m {
                codes.push(self.code(i, j));
            }
        }
        // every nibble is < 16 by construction
        PQCodes::new(self.m, 16, codes).unwrap()
    }
}

pub fn pack_codes(codes: &PQCodes) -> Result<PackedCodeBlocks> {
    let mut packed = PackedCodeBlocks::new(codes.m());
    packed
        .data
        .reserve(codes.len().div_ceil(BLOCK_SIZE) * codes.m() * 16);
    for row in codes.rows() {
        packed.push(row)?;
    }
    Ok(packed)
}
