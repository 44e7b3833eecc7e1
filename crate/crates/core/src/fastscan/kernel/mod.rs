//! Kernel backends and dispatch.
//!
//! The scalar backend is always available and defines the semantics. The
//! `simd128x2` backend runs every 32-byte operation as two 128-bit shuffles
//! (SSSE3 on x86, NEON on aarch64); `simd256` uses a single AVX2 register.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::fastscan::Reg32;

#[cfg(target_arch = "aarch64")]
mod aarch64;
pub mod scalar;
#[cfg(any(target_arch = "x86", target_arch = "x86_64"))]
mod x86;

/// Environment variable that forces the backend used by [`Kernel::active`].
pub const BACKEND_ENV: &str = "NIBBLESCAN_BACKEND";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Backend {
    Scalar,
    Simd128x2,
    Simd256,
}

impl Backend {
    pub const ALL: [Backend; 3] = [Backend::Scalar, Backend::Simd128x2, Backend::Simd256];

    pub fn name(self) -> &'static str {
        match self {
            Backend::Scalar => "scalar",
            Backend::Simd128x2 => "simd128x2",
            Backend::Simd256 => "simd256",
        }
    }

    pub fn is_simd(self) -> bool {
        self != Backend::Scalar
    }

    /// Whether this CPU can run the backend.
    pub fn is_available(self) -> bool {
        match self {
            Backend::Scalar => true,
            Backend::Simd128x2 => simd128x2_available(),
            Backend::Simd256 => simd256_available(),
        }
    }

    pub fn available() -> Vec<Backend> {
        Self::ALL.into_iter().filter(|b| b.is_available()).collect()
    }

    /// Widest available backend.
    pub fn best() -> Backend {
        *Self::available().last().unwrap()
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::argument(format!("unknown backend {s:?}")))
    }
}

#[cfg(any(target_arch = "x86", target_arch = "x86_64"))]
fn simd128x2_available() -> bool {
    std::is_x86_feature_detected!("ssse3")
}

#[cfg(target_arch = "aarch64")]
fn simd128x2_available() -> bool {
    std::arch::is_aarch64_feature_detected!("neon")
}

#[cfg(not(any(target_arch = "x86", target_arch = "x86_64", target_arch = "aarch64")))]
fn simd128x2_available() -> bool {
    false
}

#[cfg(any(target_arch = "x86", target_arch = "x86_64"))]
fn simd256_available() -> bool {
    std::is_x86_feature_detected!("avx2")
}

#[cfg(not(any(target_arch = "x86", target_arch = "x86_64")))]
fn simd256_available() -> bool {
    false
}

/// A backend verified to run on this CPU. Only [`Kernel::new`] constructs
/// one, which is what makes the `unsafe` feature-gated calls below sound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Kernel {
    backend: Backend,
}

impl Kernel {
    pub fn new(backend: Backend) -> Result<Self> {
        if !backend.is_available() {
            return Err(Error::argument(format!(
                "backend {backend} is not supported on this CPU"
            )));
        }
        Ok(Self { backend })
    }

    pub fn scalar() -> Self {
        Self {
            backend: Backend::Scalar,
        }
    }

    pub fn best() -> Self {
        Self {
            backend: Backend::best(),
        }
    }

    /// Resolves `NIBBLESCAN_BACKEND` (`scalar`, `simd128x2`, `simd256` or
    /// `auto`; unset means `auto`).
    pub fn from_env() -> Result<Self> {
        match std::env::var(BACKEND_ENV) {
            Err(_) => Ok(Self::best()),
            Ok(v) if v.is_empty() || v == "auto" => Ok(Self::best()),
            Ok(v) => Self::new(v.parse()?),
        }
    }

    /// Process-wide kernel, resolved once from the environment. An invalid or
    /// unsupported request falls back to the best available backend; callers
    /// that need to reject it should use [`Kernel::from_env`].
    pub fn active() -> Self {
        static ACTIVE: OnceLock<Kernel> = OnceLock::new();
        *ACTIVE.get_or_init(|| Self::from_env().unwrap_or_else(|_| Self::best()))
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn name(&self) -> &'static str {
        self.backend.name()
    }

    /// Each output byte selects from its own lane of `table` using the low
    /// nibble of the index byte; an index byte with bit 7 set yields zero.
    #[inline]
    pub fn lane_pair_shuffle(&self, table: &Reg32, idx: &Reg32) -> Reg32 {
        match self.backend {
            Backend::Scalar => scalar::lane_pair_shuffle(table, idx),
            #[cfg(any(target_arch = "x86", target_arch = "x86_64"))]
            Backend::Simd128x2 => unsafe { x86::lane_pair_shuffle_ssse3(table, idx) },
            #[cfg(target_arch = "aarch64")]
            Backend::Simd128x2 => unsafe { aarch64::lane_pair_shuffle_neon(table, idx) },
            #[cfg(any(target_arch = "x86", target_arch = "x86_64"))]
            Backend::Simd256 => unsafe { x86::lane_pair_shuffle_avx2(table, idx) },
            #[allow(unreachable_patterns)]
            _ => unreachable!("backend {} constructed without CPU support", self.backend),
        }
    }

    /// Bit `i` of the result is the top bit of byte `i`.
    #[inline]
    pub fn movemask32(&self, v: &Reg32) -> u32 {
        match self.backend {
            Backend::Scalar => scalar::movemask32(v),
            #[cfg(any(target_arch = "x86", target_arch = "x86_64"))]
            Backend::Simd128x2 => unsafe { x86::movemask32_ssse3(v) },
            #[cfg(target_arch = "aarch64")]
            Backend::Simd128x2 => unsafe { aarch64::movemask32_neon(v) },
            #[cfg(any(target_arch = "x86", target_arch = "x86_64"))]
            Backend::Simd256 => unsafe { x86::movemask32_avx2(v) },
            #[allow(unreachable_patterns)]
            _ => unreachable!("backend {} constructed without CPU support", self.backend),
        }
    }

    /// 16-bit sums for the 32 vectors of one packed block. `tables` holds
    /// `m` rows of 16 bytes and `block` the matching `m` groups of 16 code
    /// bytes; `m <= 256` keeps every sum below 65 536.
    #[inline]
    pub(crate) fn block_accumulate_raw(&self, tables: &[u8], block: &[u8]) -> [u16; 32] {
        assert_eq!(tables.len(), block.len());
        assert!(tables.len().is_multiple_of(16) && tables.len() / 16 <= super::MAX_SUBQUANTIZERS);
        match self.backend {
            Backend::Scalar => scalar::block_accumulate(tables, block),
            #[cfg(any(target_arch = "x86", target_arch = "x86_64"))]
            Backend::Simd128x2 => unsafe { x86::block_accumulate_ssse3(tables, block) },
            #[cfg(target_arch = "aarch64")]
            Backend::Simd128x2 => unsafe { aarch64::block_accumulate_neon(tables, block) },
            #[cfg(any(target_arch = "x86", target_arch = "x86_64"))]
            Backend::Simd256 => unsafe { x86::block_accumulate_avx2(tables, block) },
            #[allow(unreachable_patterns)]
            _ => unreachable!("backend {} constructed without CPU support", self.backend),
        }
    }
}

/// Name of the backend used by the process-wide kernel.
pub fn active_backend_name() -> &'static str {
    Kernel::active().name()
}
