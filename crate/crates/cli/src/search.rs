use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nibblescan::dataset::{self, GroundTruth, IntMatrix, VectorSet};
use nibblescan::fastscan::{self, pack_codes, quantize_lut, PackedCodeBlocks};
use nibblescan::pq::{self, PQCodes};
use nibblescan::{IvfIndex, Kernel, Neighbor, SearchParams};

use crate::{CliError, CliResult, Method, SearchArgs};

pub const CSV_HEADER: &str = "method,m,k,nlist,nprobe,recall_at_1,ms_per_query,qps,backend";

/// One row of the recall/latency table.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub method: Method,
    pub m: usize,
    pub k: usize,
    pub nlist: usize,
    pub nprobe: usize,
    pub recall_at_1: f64,
    pub queries_per_second: f64,
    pub ms_per_query: f64,
    pub backend: &'static str,
}

impl BenchResult {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.method.name(),
            self.m,
            self.k,
            self.nlist,
            self.nprobe,
            self.recall_at_1,
            self.ms_per_query,
            self.queries_per_second,
            self.backend
        )
    }
}

/// Flat candidates shared by the two exhaustive methods.
struct Flat {
    ids: Vec<u64>,
    codes: PQCodes,
    packed: PackedCodeBlocks,
}

enum Runner<'a> {
    PqAdc(&'a IvfIndex, &'a Flat),
    Fastscan(&'a IvfIndex, &'a Flat, Kernel),
    Ivf(&'a IvfIndex, Kernel, SearchParams),
}

impl Runner<'_> {
    fn query(&self, q: &[f32], topk: usize) -> nibblescan::Result<Vec<u64>> {
        match *self {
            Runner::PqAdc(index, flat) => {
                let lut = pq::build_lut(index.codebook(), q)?;
                Ok(flat.map_ids(pq::adc_scan(&lut, &flat.codes, topk)?))
            }
            Runner::Fastscan(index, flat, kernel) => {
                let qlut = quantize_lut(&pq::build_lut(index.codebook(), q)?)?;
                Ok(flat.map_ids(fastscan::fastscan_search_with(
                    kernel,
                    &qlut,
                    &flat.packed,
                    topk,
                )?))
            }
            Runner::Ivf(index, kernel, params) => Ok(index
                .search_with(kernel, q, &params)?
                .into_iter()
                .map(|n| n.id)
                .collect()),
        }
    }
}

impl Flat {
    fn map_ids(&self, hits: Vec<Neighbor>) -> Vec<u64> {
        hits.into_iter().map(|n| self.ids[n.id as usize]).collect()
    }
}

/// Number of OS threads in this process, where the platform exposes it.
pub fn thread_count() -> Option<usize> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    status
        .lines()
        .find_map(|l| l.strip_prefix("Threads:"))
        .and_then(|v| v.trim().parse().ok())
}

/// Runs one warmup pass and `trials` timed passes over all queries.
/// Returns the last pass's ids and the mean seconds per pass.
fn timed(
    runner: &Runner,
    queries: &VectorSet,
    topk: usize,
    trials: usize,
) -> CliResult<(Vec<Vec<u64>>, f64)> {
    let threads_before = thread_count();
    let mut results = Vec::new();
    let mut total = 0.0;
    for trial in 0..=trials {
        let start = Instant::now();
        let pass: Vec<Vec<u64>> = queries
            .rows()
            .map(|q| runner.query(q, topk))
            .collect::<nibblescan::Result<_>>()?;
        let secs = start.elapsed().as_secs_f64();
        if trial > 0 {
            total += secs;
        }
        results = pass;
    }
    let threads_after = thread_count();
    if let (Some(before), Some(after)) = (threads_before, threads_after) {
        if after > before {
            return Err(CliError::Property(format!(
                "timed loop is not single-threaded: {before} threads before, {after} after"
            )));
        }
    }
    Ok((results, total / trials as f64))
}

fn load_ground_truth(path: Option<&Path>, nq: usize) -> CliResult<GroundTruth> {
    let path =
        path.ok_or_else(|| CliError::Evaluation("--gt is required to compute recall".into()))?;
    let matrix = dataset::read_ivecs(path)
        .map_err(|e| CliError::Evaluation(format!("{}: {e}", path.display())))?;
    let gt = GroundTruth::from_matrix(&matrix).map_err(|e| CliError::Evaluation(e.to_string()))?;
    if nq > 0 && (gt.num_queries() < nq || gt.k() == 0) {
        return Err(CliError::Evaluation(format!(
            "ground truth has {} rows of width {}, need {nq} non-empty rows",
            gt.num_queries(),
            gt.k()
        )));
    }
    let ids: Vec<u32> = (0..nq).flat_map(|i| gt.row(i).iter().copied()).collect();
    Ok(GroundTruth::new(nq, if nq == 0 { 0 } else { gt.k() }, ids)?)
}

fn dump_ids(
    dir: &Path,
    method: Method,
    nprobe: usize,
    topk: usize,
    results: &[Vec<u64>],
) -> CliResult<()> {
    std::fs::create_dir_all(dir)?;
    let mut data = Vec::with_capacity(results.len() * topk);
    for row in results {
        data.extend((0..topk).map(|r| row.get(r).map_or(-1, |&id| id as i32)));
    }
    let matrix = IntMatrix {
        n: results.len(),
        d: topk,
        data,
    };
    let path = dir.join(format!("{}-nprobe{nprobe}.ivecs", method.name()));
    dataset::write_ivecs(path, &matrix)?;
    Ok(())
}

pub fn cmd_search(args: &SearchArgs, out: &mut impl Write) -> CliResult<()> {
    let kernel = Kernel::from_env().map_err(|e| CliError::Usage(e.to_string()))?;
    if args.trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    if args.topk == 0 {
        return Err(CliError::Usage("--topk must be at least 1".into()));
    }
    let index = IvfIndex::load(&args.index)?;
    let queries = dataset::read_fvecs(&args.queries)?;
    if !queries.is_empty() && queries.dim() != index.dim() {
        return Err(CliError::Data(format!(
            "queries have d={}, index has d={}",
            queries.dim(),
            index.dim()
        )));
    }
    if let Some(&bad) = args.nprobe.iter().find(|&&p| p == 0 || p > index.nlist()) {
        return Err(CliError::Usage(format!(
            "nprobe {bad} outside 1..={}",
            index.nlist()
        )));
    }
    let gt = load_ground_truth(args.gt.as_deref(), queries.len())?;

    writeln!(out, "{CSV_HEADER}")?;
    if queries.is_empty() {
        return Ok(());
    }

    let flat = if args.method.iter().any(|&m| m != Method::IvfFastscan) {
        let (ids, codes) = index.flat_codes();
        let packed = pack_codes(&codes)?;
        Some(Flat { ids, codes, packed })
    } else {
        None
    };

    for &method in &args.method {
        let configs: Vec<(usize, usize, Runner)> = match method {
            Method::PqAdc => vec![(1, 1, Runner::PqAdc(&index, flat.as_ref().unwrap()))],
            Method::Fastscan => vec![(
                1,
                1,
                Runner::Fastscan(&index, flat.as_ref().unwrap(), kernel),
            )],
            Method::IvfFastscan => args
                .nprobe
                .iter()
                .map(|&p| {
                    (
                        index.nlist(),
                        p,
                        Runner::Ivf(&index, kernel, SearchParams::new(p, args.topk)),
                    )
                })
                .collect(),
        };
        for (nlist, nprobe, runner) in configs {
            let (results, secs) = timed(&runner, &queries, args.topk, args.trials)?;
            if let Some(dir) = &args.dump_ids {
                dump_ids(dir, method, nprobe, args.topk, &results)?;
            }
            let qps = queries.len() as f64 / secs;
            let row = BenchResult {
                method,
                m: index.m(),
                k: 16,
                nlist,
                nprobe,
                recall_at_1: gt.recall_at_1(&results),
                queries_per_second: qps,
                ms_per_query: 1000.0 / qps,
                backend: match method {
                    Method::PqAdc => "scalar",
                    _ => kernel.name(),
                },
            };
            writeln!(out, "{}", row.csv_row())?;
            out.flush()?;
        }
    }
    Ok(())
}
