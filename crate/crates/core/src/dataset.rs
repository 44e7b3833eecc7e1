//! Vector sets, the `fvecs`/`ivecs`/`bvecs` file formats, synthetic data and
//! exact ground truth.
//!
//! All three formats are a sequence of records `[i32 LE dim][dim x payload]`
//! with the payload being `f32 LE`, `i32 LE` or `u8` respectively.

use std::fs;
use std::path::Path;

use crate::distance::l2_sq;
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::topk::TopK;

/// Standard deviation of the per-point noise added by [`gen_synthetic`].
pub const SYNTHETIC_NOISE_SIGMA: f64 = 0.05;

/// Dense row-major matrix of `n` vectors of dimension `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSet {
    n: usize,
    d: usize,
    data: Vec<f32>,
}

impl VectorSet {
    pub fn new(d: usize, data: Vec<f32>) -> Result<Self> {
        if d == 0 {
            if !data.is_empty() {
                return Err(Error::argument("dimension 0 with non-empty data"));
            }
            return Ok(Self::empty());
        }
        if !data.len().is_multiple_of(d) {
            return Err(Error::argument(format!(
                "data length {} is not a multiple of dimension {d}",
                data.len()
            )));
        }
        Ok(Self {
            n: data.len() / d,
            d,
            data,
        })
    }

    pub fn empty() -> Self {
        Self {
            n: 0,
            d: 0,
            data: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        // chunks_exact(0) panics, so an empty set yields an empty iterator.
        self.data.chunks_exact(self.d.max(1)).take(self.n)
    }

    /// Rows `start..end` as a new set.
    pub fn slice(&self, start: usize, end: usize) -> VectorSet {
        assert!(start <= end && end <= self.n);
        VectorSet {
            n: end - start,
            d: self.d,
            data: self.data[start * self.d..end * self.d].to_vec(),
        }
    }

    /// Columns `start..end` of every row.
    pub fn column_slice(&self, start: usize, end: usize) -> VectorSet {
        assert!(start <= end && end <= self.d);
        let width = end - start;
        let mut data = Vec::with_capacity(self.n * width);
        for row in self.rows() {
            data.extend_from_slice(&row[start..end]);
        }
        VectorSet {
            n: self.n,
            d: width,
            data,
        }
    }
}

/// Integer matrix as stored in `ivecs` files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntMatrix {
    pub n: usize,
    pub d: usize,
    pub data: Vec<i32>,
}

impl IntMatrix {
    pub fn row(&self, i: usize) -> &[i32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }
}

/// Exact nearest-neighbor ids per query, each row ordered by ascending
/// distance with ties broken toward the lower id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    nq: usize,
    k: usize,
    ids: Vec<u32>,
}

impl GroundTruth {
    pub fn new(nq: usize, k: usize, ids: Vec<u32>) -> Result<Self> {
        if ids.len() != nq * k {
            return Err(Error::argument(format!(
                "ground truth needs {} ids, got {}",
                nq * k,
                ids.len()
            )));
        }
        Ok(Self { nq, k, ids })
    }

    pub fn num_queries(&self) -> usize {
        self.nq
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.ids[i * self.k..(i + 1) * self.k]
    }

    pub fn from_matrix(m: &IntMatrix) -> Result<Self> {
        let mut ids = Vec::with_capacity(m.data.len());
        for (i, &v) in m.data.iter().enumerate() {
            let id = u32::try_from(v).map_err(|_| {
                Error::argument(format!("negative ground-truth id {v} at entry {i}"))
            })?;
            ids.push(id);
        }
        Self::new(m.n, m.d, ids)
    }

    pub fn to_matrix(&self) -> IntMatrix {
        IntMatrix {
            n: self.nq,
            d: self.k,
            data: self.ids.iter().map(|&id| id as i32).collect(),
        }
    }

    /// Fraction of queries whose true nearest neighbor is ranked first in
    /// `results[i]`.
    pub fn recall_at_1<I>(&self, results: I) -> f64
    where
        I: IntoIterator,
        I::Item: AsRef<[u64]>,
    {
        if self.nq == 0 || self.k == 0 {
            return 0.0;
        }
        let mut hits = 0usize;
        let mut count = 0usize;
        for (i, ranked) in results.into_iter().enumerate().take(self.nq) {
            count += 1;
            if ranked.as_ref().first() == Some(&(self.row(i)[0] as u64)) {
                hits += 1;
            }
        }
        debug_assert_eq!(count, self.nq);
        hits as f64 / self.nq as f64
    }
}

struct Records<'a> {
    n: usize,
    d: usize,
    payloads: Vec<&'a [u8]>,
}

fn parse_records(bytes: &[u8], elem_size: usize) -> Result<Records<'_>> {
    let mut offset = 0usize;
    let mut d: Option<usize> = None;
    let mut payloads = Vec::new();
    while offset < bytes.len() {
        if bytes.len() - offset < 4 {
            return Err(Error::format(offset as u64, "truncated record header"));
        }
        let raw = i32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap());
        if raw <= 0 {
            return Err(Error::format(
                offset as u64,
                format!("record dimension {raw} must be positive"),
            ));
        }
        let dim = raw as usize;
        match d {
            None => d = Some(dim),
            Some(expected) if expected != dim => {
                return Err(Error::format(
                    offset as u64,
                    format!("record dimension {dim} differs from first record's {expected}"),
                ))
            }
            Some(_) => {}
        }
        let body = offset + 4;
        let len = dim * elem_size;
        if bytes.len() - body < len {
            return Err(Error::format(
                body as u64,
                format!(
                    "truncated record: need {len} payload bytes, {} left",
                    bytes.len() - body
                ),
            ));
        }
        payloads.push(&bytes[body..body + len]);
        offset = body + len;
    }
    Ok(Records {
        n: payloads.len(),
        d: d.unwrap_or(0),
        payloads,
    })
}

pub fn parse_fvecs(bytes: &[u8]) -> Result<VectorSet> {
    let records = parse_records(bytes, 4)?;
    let mut data = Vec::with_capacity(records.n * records.d);
    let record_len = 4 + records.d * 4;
    for (r, payload) in records.payloads.iter().enumerate() {
        for (i, chunk) in payload.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                let offset = r * record_len + 4 + i * 4;
                return Err(Error::format(
                    offset as u64,
                    format!("non-finite value {v}"),
                ));
            }
            data.push(v);
        }
    }
    Ok(VectorSet {
        n: records.n,
        d: records.d,
        data,
    })
}

pub fn parse_ivecs(bytes: &[u8]) -> Result<IntMatrix> {
    let records = parse_records(bytes, 4)?;
    let data = records
        .payloads
        .iter()
        .flat_map(|p| p.chunks_exact(4))
        .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(IntMatrix {
        n: records.n,
        d: records.d,
        data,
    })
}

pub fn parse_bvecs(bytes: &[u8]) -> Result<VectorSet> {
    let records = parse_records(bytes, 1)?;
    let data = records
        .payloads
        .iter()
        .flat_map(|p| p.iter())
        .map(|&b| b as f32)
        .collect();
    Ok(VectorSet {
        n: records.n,
        d: records.d,
        data,
    })
}

fn encode_records<T: Copy>(
    n: usize,
    d: usize,
    data: &[T],
    elem: impl Fn(T, &mut Vec<u8>),
) -> Vec<u8> {
    let elem_size = std::mem::size_of::<T>();
    let mut out = Vec::with_capacity(n * (4 + d * elem_size));
    for r in 0..n {
        out.extend_from_slice(&(d as i32).to_le_bytes());
        for &v in &data[r * d..(r + 1) * d] {
            elem(v, &mut out);
        }
    }
    out
}

pub fn encode_fvecs(set: &VectorSet) -> Vec<u8> {
    encode_records(set.n, set.d, &set.data, |v: f32, out| {
        out.extend_from_slice(&v.to_le_bytes())
    })
}

pub fn encode_ivecs(m: &IntMatrix) -> Vec<u8> {
    encode_records(m.n, m.d, &m.data, |v: i32, out| {
        out.extend_from_slice(&v.to_le_bytes())
    })
}

/// Fails if any value is not an integer in `0..=255`.
pub fn encode_bvecs(set: &VectorSet) -> Result<Vec<u8>> {
    if let Some((i, v)) = set
        .data
        .iter()
        .enumerate()
        .find(|(_, v)| !(0.0..=255.0).contains(*v) || v.fract() != 0.0)
    {
        return Err(Error::argument(format!(
            "value {v} at index {i} is not representable as u8"
        )));
    }
    Ok(encode_records(set.n, set.d, &set.data, |v: f32, out| {
        out.push(v as u8)
    }))
}

pub fn read_fvecs(path: impl AsRef<Path>) -> Result<VectorSet> {
    parse_fvecs(&fs::read(path)?)
}

pub fn read_ivecs(path: impl AsRef<Path>) -> Result<IntMatrix> {
    parse_ivecs(&fs::read(path)?)
}

pub fn read_bvecs(path: impl AsRef<Path>) -> Result<VectorSet> {
    parse_bvecs(&fs::read(path)?)
}

pub fn write_fvecs(path: impl AsRef<Path>, set: &VectorSet) -> Result<()> {
    fs::write(path, encode_fvecs(set))?;
    Ok(())
}

pub fn write_ivecs(path: impl AsRef<Path>, m: &IntMatrix) -> Result<()> {
    fs::write(path, encode_ivecs(m))?;
    Ok(())
}

pub fn write_bvecs(path: impl AsRef<Path>, set: &VectorSet) -> Result<()> {
    fs::write(path, encode_bvecs(set)?)?;
    Ok(())
}

/// Clustered synthetic vectors.
///
/// Draw order from a [`SeededRng`] seeded with `seed`: first the
/// `n_clusters x d` center coordinates, uniform in `[0, 1)`; then, per point,
/// its cluster via `below(n_clusters)` followed by `d` Gaussian offsets of
/// standard deviation [`SYNTHETIC_NOISE_SIGMA`]. Values are computed in `f64`
/// and rounded to `f32`. Because points are drawn sequentially, the first `n`
/// rows of `gen_synthetic(n + extra, ..)` equal `gen_synthetic(n, ..)`.
pub fn gen_synthetic(n: usize, d: usize, n_clusters: usize, seed: u64) -> Result<VectorSet> {
    if n == 0 || d == 0 {
        return Err(Error::argument("synthetic data needs n >= 1 and d >= 1"));
    }
    if n_clusters == 0 || n_clusters > n {
        return Err(Error::argument(format!(
            "n_clusters must be in 1..={n}, got {n_clusters}"
        )));
    }
    let mut rng = SeededRng::new(seed);
    let centers: Vec<f64> = (0..n_clusters * d).map(|_| rng.next_f64()).collect();
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let c = rng.below(n_clusters);
        let center = &centers[c * d..(c + 1) * d];
        for &x in center {
            data.push((x + SYNTHETIC_NOISE_SIGMA * rng.next_gaussian()) as f32);
        }
    }
    Ok(VectorSet { n, d, data })
}

/// Base and query sets drawn from the same synthetic distribution: the first
/// `n_base` rows of `gen_synthetic(n_base + n_queries, ..)` and the rest.
pub fn gen_synthetic_split(
    n_base: usize,
    n_queries: usize,
    d: usize,
    n_clusters: usize,
    seed: u64,
) -> Result<(VectorSet, VectorSet)> {
    if n_clusters > n_base {
        return Err(Error::argument(format!(
            "n_clusters must be in 1..={n_base}, got {n_clusters}"
        )));
    }
    let all = gen_synthetic(n_base + n_queries, d, n_clusters, seed)?;
    let total = all.len();
    Ok((all.slice(0, n_base), all.slice(n_base, total)))
}

/// Exact k nearest neighbors by linear scan.
pub fn ground_truth(base: &VectorSet, queries: &VectorSet, k: usize) -> Result<GroundTruth> {
    if !queries.is_empty() && base.dim() != queries.dim() {
        return Err(Error::argument(format!(
            "base dimension {} differs from query dimension {}",
            base.dim(),
            queries.dim()
        )));
    }
    if k == 0 || k > base.len() {
        return Err(Error::argument(format!(
            "k must be in 1..={}, got {k}",
            base.len()
        )));
    }
    let mut ids = Vec::with_capacity(queries.len() * k);
    for q in queries.rows() {
        let mut top = TopK::new(k);
        for (i, x) in base.rows().enumerate() {
            top.push(i as u64, l2_sq(q, x));
        }
        ids.extend(top.into_sorted_vec().into_iter().map(|nb| nb.id as u32));
    }
    GroundTruth::new(queries.len(), k, ids)
}
