//! Inverted-file index over fast-scan codes.
//!
//! Vectors are partitioned by nearest coarse centroid. A query is compared
//! against every centroid, the `nprobe` closest lists are selected, and their
//! codes are scored with one quantized table built for the query. Codes
//! encode the raw vectors (no residuals), so the same table serves every
//! probed list.
//!
//! # File format
//!
//! Little-endian throughout:
//!
//! ```text
//! "PQFS"  u32 version (=1)
//! u32 d  u32 nlist  u32 m  u32 k
//! nlist * d  f32      coarse centroids
//! m * k * (d/m) f32   PQ codebook
//! per list: u64 count, count * u64 ids, ceil(count/32) * m * 16 packed bytes
//! ```

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::dataset::VectorSet;
use crate::distance::l2_sq;
use crate::error::{Error, Result};
use crate::fastscan::{self, quantize_lut, Kernel, PackedCodeBlocks};
use crate::kmeans::{self, KMeansParams};
use crate::pq::{self, Codebook, PQCodes};
use crate::topk::{Neighbor, TopK};

pub const MAGIC: &[u8; 4] = b"PQFS";
pub const FORMAT_VERSION: u32 = 1;

/// Codewords per subquantizer used by the index.
const K: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchParams {
    pub nprobe: usize,
    pub topk: usize,
}

impl SearchParams {
    pub fn new(nprobe: usize, topk: usize) -> Self {
        Self { nprobe, topk }
    }
}

/// First search stage: choosing which lists to visit.
pub trait CoarseQuantizer {
    fn nlist(&self) -> usize;
    fn dim(&self) -> usize;
    /// List that a database vector belongs to.
    fn assign(&self, x: &[f32]) -> usize;
    /// The `nprobe` lists nearest to `q`, closest first.
    fn probe(&self, q: &[f32], nprobe: usize) -> Vec<usize>;
}

/// Exact linear scan over all centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatCoarseQuantizer {
    centroids: VectorSet,
}

impl FlatCoarseQuantizer {
    pub fn new(centroids: VectorSet) -> Result<Self> {
        if centroids.is_empty() {
            return Err(Error::argument(
                "coarse quantizer needs at least one centroid",
            ));
        }
        Ok(Self { centroids })
    }

    pub fn centroids(&self) -> &VectorSet {
        &self.centroids
    }
}

impl CoarseQuantizer for FlatCoarseQuantizer {
    fn nlist(&self) -> usize {
        self.centroids.len()
    }

    fn dim(&self) -> usize {
        self.centroids.dim()
    }

    fn assign(&self, x: &[f32]) -> usize {
        kmeans::nearest(self.centroids.as_slice(), self.centroids.dim(), x).0
    }

    fn probe(&self, q: &[f32], nprobe: usize) -> Vec<usize> {
        let mut top = TopK::new(nprobe);
        for (i, c) in self.centroids.rows().enumerate() {
            top.push(i as u64, l2_sq(q, c));
        }
        top.into_sorted_vec()
            .into_iter()
            .map(|n| n.id as usize)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvertedList {
    ids: Vec<u64>,
    packed: PackedCodeBlocks,
}

impl InvertedList {
    fn new(m: usize) -> Self {
        Self {
            ids: Vec::new(),
            packed: PackedCodeBlocks::new(m),
        }
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn packed(&self) -> &PackedCodeBlocks {
        &self.packed
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug)]
pub struct IvfIndex {
    coarse: FlatCoarseQuantizer,
    codebook: Codebook,
    lists: Vec<InvertedList>,
    lut_builds: AtomicU64,
}

impl Clone for IvfIndex {
    fn clone(&self) -> Self {
        Self {
            coarse: self.coarse.clone(),
            codebook: self.codebook.clone(),
            lists: self.lists.clone(),
            lut_builds: AtomicU64::new(0),
        }
    }
}

/// Compares index contents; the instrumentation counter is ignored.
impl PartialEq for IvfIndex {
    fn eq(&self, other: &Self) -> bool {
        self.coarse == other.coarse && self.codebook == other.codebook && self.lists == other.lists
    }
}

/// Trains the coarse centroids and a K=16 codebook on `training`, both
/// seeded with `seed`. The returned index has empty lists.
pub fn train_ivf(training: &VectorSet, nlist: usize, m: usize, seed: u64) -> Result<IvfIndex> {
    if nlist == 0 || training.len() < nlist {
        return Err(Error::argument(format!(
            "nlist must be in 1..={}, got {nlist}",
            training.len()
        )));
    }
    let centroids = kmeans::kmeans(training, &KMeansParams::new(nlist, seed))?;
    let codebook = pq::train_pq(training, m, K, seed)?;
    IvfIndex::new(FlatCoarseQuantizer::new(centroids)?, codebook)
}

impl IvfIndex {
    pub fn new(coarse: FlatCoarseQuantizer, codebook: Codebook) -> Result<Self> {
        if codebook.k() != K {
            return Err(Error::argument(format!(
                "index codebook needs k={K}, got {}",
                codebook.k()
            )));
        }
        if codebook.dim() != coarse.dim() {
            return Err(Error::argument(format!(
                "codebook dimension {} differs from centroid dimension {}",
                codebook.dim(),
                coarse.dim()
            )));
        }
        let lists = (0..coarse.nlist())
            .map(|_| InvertedList::new(codebook.m()))
            .collect();
        Ok(Self {
            coarse,
            codebook,
            lists,
            lut_builds: AtomicU64::new(0),
        })
    }

    pub fn nlist(&self) -> usize {
        self.lists.len()
    }

    pub fn dim(&self) -> usize {
        self.codebook.dim()
    }

    pub fn m(&self) -> usize {
        self.codebook.m()
    }

    pub fn len(&self) -> usize {
        self.lists.iter().map(InvertedList::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coarse(&self) -> &FlatCoarseQuantizer {
        &self.coarse
    }

    pub fn codebook(&self) -> &Codebook {
        &self.codebook
    }

    pub fn lists(&self) -> &[InvertedList] {
        &self.lists
    }

    /// Number of query tables built by searches so far.
    pub fn lut_builds(&self) -> u64 {
        self.lut_builds.load(Ordering::Relaxed)
    }

    /// Appends `vectors` with ids `base_id, base_id + 1, ...`.
    pub fn add(&mut self, vectors: &VectorSet, base_id: u64) -> Result<()> {
        if vectors.is_empty() {
            return Ok(());
        }
        if vectors.dim() != self.dim() {
            return Err(Error::argument(format!(
                "vector dimension {} differs from index dimension {}",
                vectors.dim(),
                self.dim()
            )));
        }
        for (i, x) in vectors.rows().enumerate() {
            let list = &mut self.lists[self.coarse.assign(x)];
            let code = pq::encode(&self.codebook, x)?;
            list.packed.push(&code)?;
            list.ids.push(base_id + i as u64);
        }
        Ok(())
    }

    pub fn search(&self, q: &[f32], params: &SearchParams) -> Result<Vec<Neighbor>> {
        self.search_with(Kernel::active(), q, params)
    }

    pub fn search_with(
        &self,
        kernel: Kernel,
        q: &[f32],
        params: &SearchParams,
    ) -> Result<Vec<Neighbor>> {
        if params.nprobe == 0 || params.nprobe > self.nlist() {
            return Err(Error::argument(format!(
                "nprobe must be in 1..={}, got {}",
                self.nlist(),
                params.nprobe
            )));
        }
        if params.topk == 0 {
            return Err(Error::argument("topk must be at least 1"));
        }
        if q.len() != self.dim() {
            return Err(Error::argument(format!(
                "query dimension {} differs from index dimension {}",
                q.len(),
                self.dim()
            )));
        }
        let probed = self.coarse.probe(q, params.nprobe);
        let qlut = quantize_lut(&pq::build_lut(&self.codebook, q)?)?;
        self.lut_builds.fetch_add(1, Ordering::Relaxed);

        let mut top = TopK::new(params.topk);
        for list in probed {
            let list = &self.lists[list];
            fastscan::scan_into(kernel, &qlut, &list.packed, |p| list.ids[p], &mut top)?;
        }
        Ok(top.into_sorted_vec())
    }

    /// All stored codes ordered by id, with the matching ids.
    pub fn flat_codes(&self) -> (Vec<u64>, PQCodes) {
        let mut rows: Vec<(u64, usize, usize)> = Vec::with_capacity(self.len());
        for (l, list) in self.lists.iter().enumerate() {
            rows.extend(list.ids.iter().enumerate().map(|(p, &id)| (id, l, p)));
        }
        rows.sort_unstable();
        let m = self.m();
        let mut codes = Vec::with_capacity(rows.len() * m);
        for &(_, l, p) in &rows {
            let packed = &self.lists[l].packed;
            codes.extend((0..m).map(|j| packed.code(p, j)));
        }
        let ids = rows.into_iter().map(|(id, _, _)| id).collect();
        (ids, PQCodes::new(m, K, codes).unwrap())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, FORMAT_VERSION);
        put_u32(&mut out, self.dim() as u32);
        put_u32(&mut out, self.nlist() as u32);
        put_u32(&mut out, self.m() as u32);
        put_u32(&mut out, self.codebook.k() as u32);
        for &v in self.coarse.centroids.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for &v in self.codebook.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for list in &self.lists {
            out.extend_from_slice(&(list.ids.len() as u64).to_le_bytes());
            for &id in &list.ids {
                out.extend_from_slice(&id.to_le_bytes());
            }
            out.extend_from_slice(list.packed.as_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4, "magic")? != MAGIC {
            return Err(Error::format(0, "bad magic, not an index file"));
        }
        let version = r.u32("format version")?;
        if version != FORMAT_VERSION {
            return Err(Error::format(
                4,
                format!("unsupported format version {version}"),
            ));
        }
        let header_at = r.offset();
        let d = r.u32("dimension")? as usize;
        let nlist = r.u32("nlist")? as usize;
        let m = r.u32("m")? as usize;
        let k = r.u32("k")? as usize;
        if d == 0 || nlist == 0 || m == 0 || !d.is_multiple_of(m) || k != K {
            return Err(Error::format(
                header_at,
                format!("invalid parameters d={d} nlist={nlist} m={m} k={k}"),
            ));
        }
        let centroids = r.f32s(nlist * d, "coarse centroids")?;
        let codebook = r.f32s(m * k * (d / m), "codebook")?;
        let coarse = FlatCoarseQuantizer::new(VectorSet::new(d, centroids)?)?;
        let codebook = Codebook::new(m, k, d / m, codebook)?;
        let mut index = IvfIndex::new(coarse, codebook)?;
        for l in 0..nlist {
            let count = r.u64("list length")? as usize;
            let ids_at = r.offset();
            if count > r.remaining() / 8 {
                return Err(Error::format(
                    ids_at,
                    format!("list {l} claims {count} ids"),
                ));
            }
            let ids = (0..count)
                .map(|_| r.u64("list ids"))
                .collect::<Result<Vec<_>>>()?;
            let packed_at = r.offset();
            let raw = r.take(
                count.div_ceil(fastscan::BLOCK_SIZE) * m * 16,
                "packed codes",
            )?;
            let packed = PackedCodeBlocks::from_raw(count, m, raw.to_vec())
                .map_err(|e| Error::format(packed_at, e.to_string()))?;
            index.lists[l] = InvertedList { ids, packed };
        }
        if r.remaining() != 0 {
            return Err(Error::format(r.offset(), "trailing bytes after last list"));
        }
        Ok(index)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn offset(&self) -> u64 {
        self.pos as u64
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < len {
            return Err(Error::format(
                self.offset(),
                format!(
                    "truncated {what}: need {len} bytes, {} left",
                    self.remaining()
                ),
            ));
        }
        let out = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f32s(&mut self, count: usize, what: &str) -> Result<Vec<f32>> {
        let raw = self.take(count * 4, what)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}
