//! Product quantization: codebook training, encoding, decoding and the
//! float lookup-table scan used as the accuracy and speed baseline.

use crate::dataset::VectorSet;
use crate::distance::l2_sq;
use crate::error::{Error, Result};
use crate::kmeans::{self, KMeansParams};
use crate::topk::{Neighbor, TopK};

/// `m` sub-codebooks of `k` centroids, each of dimension `dsub`.
///
/// Centroid `t` of subquantizer `j` lives at
/// `centroids[(j * k + t) * dsub..][..dsub]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    m: usize,
    k: usize,
    dsub: usize,
    centroids: Vec<f32>,
}

impl Codebook {
    pub fn new(m: usize, k: usize, dsub: usize, centroids: Vec<f32>) -> Result<Self> {
        if m == 0 || dsub == 0 {
            return Err(Error::argument("codebook needs m >= 1 and dsub >= 1"));
        }
        if !(1..=256).contains(&k) {
            return Err(Error::argument(format!("k must be in 1..=256, got {k}")));
        }
        if centroids.len() != m * k * dsub {
            return Err(Error::argument(format!(
                "codebook of {m}x{k}x{dsub} needs {} floats, got {}",
                m * k * dsub,
                centroids.len()
            )));
        }
        Ok(Self {
            m,
            k,
            dsub,
            centroids,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dsub(&self) -> usize {
        self.dsub
    }

    pub fn dim(&self) -> usize {
        self.m * self.dsub
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.centroids
    }

    /// The `k x dsub` centroids of subquantizer `j`.
    pub fn sub_codebook(&self, j: usize) -> &[f32] {
        let len = self.k * self.dsub;
        &self.centroids[j * len..(j + 1) * len]
    }

    pub fn centroid(&self, j: usize, t: usize) -> &[f32] {
        let start = (j * self.k + t) * self.dsub;
        &self.centroids[start..start + self.dsub]
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::argument(format!(
                "vector dimension {len} differs from codebook dimension {}",
                self.dim()
            )));
        }
        Ok(())
    }
}

/// `n x m` matrix of codes, one byte per entry in memory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PQCodes {
    n: usize,
    m: usize,
    k: usize,
    codes: Vec<u8>,
}

impl PQCodes {
    pub fn new(m: usize, k: usize, codes: Vec<u8>) -> Result<Self> {
        if m == 0 {
            return Err(Error::argument("codes need m >= 1"));
        }
        if !(1..=256).contains(&k) {
            return Err(Error::argument(format!("k must be in 1..=256, got {k}")));
        }
        if !codes.len().is_multiple_of(m) {
            return Err(Error::argument(format!(
                "{} codes do not form rows of {m}",
                codes.len()
            )));
        }
        if let Some((i, &c)) = codes.iter().enumerate().find(|(_, &c)| c as usize >= k) {
            return Err(Error::Corruption(format!(
                "code {c} at entry {i} is not below k={k}"
            )));
        }
        Ok(Self {
            n: codes.len() / m,
            m,
            k,
            codes,
        })
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

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.codes
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[u8] {
        &self.codes[i * self.m..(i + 1) * self.m]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[u8]> + '_ {
        self.codes.chunks_exact(self.m)
    }

    fn bits_per_code(&self) -> usize {
        if self.k <= 16 {
            4
        } else {
            8
        }
    }

    /// Size of [`PQCodes::to_bytes`]: `ceil(n * m * log2(k) / 8)` with
    /// `log2(k)` rounded up to 4 or 8 bits.
    pub fn serialized_len(&self) -> usize {
        (self.n * self.m * self.bits_per_code()).div_ceil(8)
    }

    /// Compact row-major serialization. With `k <= 16` two consecutive codes
    /// share a byte, the earlier one in the low nibble; otherwise one byte
    /// per code.
    pub fn to_bytes(&self) -> Vec<u8> {
        if self.bits_per_code() == 8 {
            return self.codes.clone();
        }
        self.codes
            .chunks(2)
            .map(|pair| pair[0] | (pair.get(1).copied().unwrap_or(0) << 4))
            .collect()
    }

    pub fn from_bytes(n: usize, m: usize, k: usize, bytes: &[u8]) -> Result<Self> {
        let probe = PQCodes {
            n,
            m,
            k,
            codes: Vec::new(),
        };
        if bytes.len() != probe.serialized_len() {
            return Err(Error::format(
                bytes.len().min(probe.serialized_len()) as u64,
                format!(
                    "expected {} code bytes, got {}",
                    probe.serialized_len(),
                    bytes.len()
                ),
            ));
        }
        let codes = if probe.bits_per_code() == 8 {
            bytes.to_vec()
        } else {
            (0..n * m)
                .map(|i| (bytes[i / 2] >> ((i % 2) * 4)) & 0x0f)
                .collect()
        };
        Self::new(m, k, codes)
    }
}

/// Float ADC table: `values[j * k + t]` is the squared distance between
/// slice `j` of the query and centroid `t` of subquantizer `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct LutF {
    m: usize,
    k: usize,
    values: Vec<f32>,
}

impl LutF {
    pub fn new(m: usize, k: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != m * k {
            return Err(Error::argument(format!(
                "table of {m}x{k} needs {} values, got {}",
                m * k,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::argument(format!(
                "table entries must be finite and non-negative, found {v}"
            )));
        }
        Ok(Self { m, k, values })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn row(&self, j: usize) -> &[f32] {
        &self.values[j * self.k..(j + 1) * self.k]
    }

    #[inline]
    pub fn get(&self, j: usize, t: usize) -> f32 {
        self.values[j * self.k + t]
    }

    /// Sum of the table entries selected by `code`.
    #[inline]
    pub fn distance(&self, code: &[u8]) -> f32 {
        debug_assert_eq!(code.len(), self.m);
        let mut sum = 0.0f32;
        for (row, &c) in self.values.chunks_exact(self.k).zip(code) {
            sum += row[c as usize];
        }
        sum
    }
}

/// Trains one k-means per `d / m`-dimensional slice of `training`.
/// Every slice uses the same `seed`.
pub fn train_pq(training: &VectorSet, m: usize, k: usize, seed: u64) -> Result<Codebook> {
    let d = training.dim();
    if m == 0 || d == 0 || !d.is_multiple_of(m) {
        return Err(Error::argument(format!(
            "dimension {d} is not divisible into {m} subquantizers"
        )));
    }
    if training.len() < k {
        return Err(Error::argument(format!(
            "training needs at least k={k} vectors, got {}",
            training.len()
        )));
    }
    let dsub = d / m;
    let params = KMeansParams::new(k, seed);
    let mut centroids = Vec::with_capacity(m * k * dsub);
    for j in 0..m {
        let slice = training.column_slice(j * dsub, (j + 1) * dsub);
        centroids.extend_from_slice(kmeans::kmeans(&slice, &params)?.as_slice());
    }
    Codebook::new(m, k, dsub, centroids)
}

/// Nearest codeword per subquantizer, ties to the lower index.
pub fn encode(cb: &Codebook, x: &[f32]) -> Result<Vec<u8>> {
    cb.check_dim(x.len())?;
    let mut out = vec![0u8; cb.m];
    encode_into(cb, x, &mut out);
    Ok(out)
}

fn encode_into(cb: &Codebook, x: &[f32], out: &mut [u8]) {
    for (j, (slot, sub)) in out.iter_mut().zip(x.chunks_exact(cb.dsub)).enumerate() {
        *slot = kmeans::nearest(cb.sub_codebook(j), cb.dsub, sub).0 as u8;
    }
}

pub fn encode_all(cb: &Codebook, set: &VectorSet) -> Result<PQCodes> {
    if !set.is_empty() {
        cb.check_dim(set.dim())?;
    }
    let mut codes = vec![0u8; set.len() * cb.m];
    for (x, out) in set.rows().zip(codes.chunks_exact_mut(cb.m)) {
        encode_into(cb, x, out);
    }
    PQCodes::new(cb.m, cb.k, codes)
}

/// Concatenates the selected codewords of every row.
pub fn decode(cb: &Codebook, codes: &PQCodes) -> Result<VectorSet> {
    if codes.m != cb.m {
        return Err(Error::argument(format!(
            "codes have m={}, codebook has m={}",
            codes.m, cb.m
        )));
    }
    let mut data = Vec::with_capacity(codes.n * cb.dim());
    for (i, row) in codes.rows().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c as usize >= cb.k {
                return Err(Error::Corruption(format!(
                    "code {c} of vector {i}, subquantizer {j} is not below k={}",
                    cb.k
                )));
            }
            data.extend_from_slice(cb.centroid(j, c as usize));
        }
    }
    VectorSet::new(cb.dim(), data)
}

pub fn build_lut(cb: &Codebook, q: &[f32]) -> Result<LutF> {
    cb.check_dim(q.len())?;
    let mut values = Vec::with_capacity(cb.m * cb.k);
    for (j, sub) in q.chunks_exact(cb.dsub).enumerate() {
        values.extend(
            cb.sub_codebook(j)
                .chunks_exact(cb.dsub)
                .map(|c| l2_sq(sub, c)),
        );
    }
    Ok(LutF {
        m: cb.m,
        k: cb.k,
        values,
    })
}

/// Table-lookup scan over row-major codes. Returns the `topk` smallest
/// distances (clamped to the number of codes), ascending, ties by lower id.
pub fn adc_scan(lut: &LutF, codes: &PQCodes, topk: usize) -> Result<Vec<Neighbor>> {
    if codes.m != lut.m {
        return Err(Error::argument(format!(
            "codes have m={}, table has m={}",
            codes.m, lut.m
        )));
    }
    if topk == 0 {
        return Err(Error::argument("topk must be at least 1"));
    }
    if codes.k > lut.k {
        return Err(Error::argument(format!(
            "codes use k={}, table only covers k={}",
            codes.k, lut.k
        )));
    }
    let mut top = TopK::new(topk.min(codes.n));
    for (i, code) in codes.rows().enumerate() {
        top.push(i as u64, lut.distance(code));
    }
    Ok(top.into_sorted_vec())
}
