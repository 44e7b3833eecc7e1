//! Exit criteria for the library. Run with
//! `cargo test -p nibblescan --test acceptance`; one PASS/FAIL line is
//! printed per criterion and the process fails if any criterion fails.

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nibblescan::dataset::{self, gen_synthetic_split, GroundTruth, IntMatrix, VectorSet};
use nibblescan::fastscan::{self, pack_codes, quantize_lut, Backend, Kernel, QuantizedLUT, Reg32};
use nibblescan::ivf::{train_ivf, CoarseQuantizer, IvfIndex, SearchParams};
use nibblescan::pq::{self, PQCodes};
use nibblescan::rng::SeededRng;

type Outcome = Result<String, String>;

/// Cluster density of the recall datasets. With about ten points per
/// cluster a query's nearest neighbor is usually a cluster sibling, which
/// 4-bit codes can resolve; far denser clusters push Recall@1 toward zero and
/// leave nothing to compare.
const POINTS_PER_CLUSTER: usize = 10;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn within(elapsed: Duration, limit_s: f64) -> Outcome {
    if elapsed.as_secs_f64() < limit_s {
        Ok(String::new())
    } else {
        Err(format!(
            "took {:.1}s, limit {limit_s}s",
            elapsed.as_secs_f64()
        ))
    }
}

fn random_reg(rng: &mut SeededRng) -> Reg32 {
    let mut r = Reg32::default();
    r.0.iter_mut().for_each(|b| *b = rng.next_u64() as u8);
    r
}

fn random_codes(rng: &mut SeededRng, n: usize, m: usize) -> PQCodes {
    PQCodes::new(m, 16, (0..n * m).map(|_| rng.below(16) as u8).collect()).unwrap()
}

/// Mean wall time of `trials` runs of `f`, after one discarded warmup run.
fn mean_trial(trials: usize, mut f: impl FnMut()) -> Duration {
    f();
    let start = Instant::now();
    for _ in 0..trials {
        f();
    }
    start.elapsed() / trials as u32
}

fn kernel_bit_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = SeededRng::new(0xA1);
    let reference = Kernel::scalar();
    let simd: Vec<Kernel> = Backend::available()
        .into_iter()
        .filter(|b| b.is_simd())
        .map(|b| Kernel::new(b).unwrap())
        .collect();
    let m = 16;
    for case in 0..10_000 {
        let table = random_reg(&mut rng);
        let idx = random_reg(&mut rng);
        let codes = random_codes(&mut rng, 32, m);
        let packed = pack_codes(&codes).unwrap();
        let bytes: Vec<u8> = (0..m * 16).map(|_| rng.next_u64() as u8).collect();
        let qlut = QuantizedLUT::from_parts(m, bytes, 0.0, 1.0).unwrap();
        let want_shuffle = reference.lane_pair_shuffle(&table, &idx);
        let want_mask = reference.movemask32(&table);
        let want_acc = fastscan::block_accumulate_with(reference, &qlut, &packed, 0).unwrap();
        for k in &simd {
            ensure!(
                k.lane_pair_shuffle(&table, &idx) == want_shuffle,
                "{} shuffle differs at case {case}",
                k.name()
            );
            ensure!(
                k.movemask32(&table) == want_mask,
                "{} movemask differs at case {case}",
                k.name()
            );
            ensure!(
                fastscan::block_accumulate_with(*k, &qlut, &packed, 0).unwrap() == want_acc,
                "{} block_accumulate differs at case {case}",
                k.name()
            );
        }
    }
    within(start.elapsed(), 10.0)?;
    let names: Vec<&str> = simd.iter().map(|k| k.name()).collect();
    Ok(format!("10000 cases, backends {names:?} vs scalar"))
}

fn l2_f64(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (*x as f64 - *y as f64).powi(2))
        .sum()
}

fn adc_equivalence() -> Outcome {
    let start = Instant::now();
    let (base, queries) = gen_synthetic_split(1_000, 20, 32, 16, 0xA2).unwrap();
    let cb = pq::train_pq(&base, 8, 16, 1).unwrap();
    let codes = pq::encode_all(&cb, &base).unwrap();
    let decoded = pq::decode(&cb, &codes).unwrap();
    let mut worst = 0.0f64;
    for (qi, q) in queries.rows().enumerate() {
        let lut = pq::build_lut(&cb, q).unwrap();
        let hits = pq::adc_scan(&lut, &codes, codes.len()).unwrap();
        let exact: Vec<f64> = decoded.rows().map(|x| l2_f64(q, x)).collect();
        for h in &hits {
            let e = exact[h.id as usize];
            let rel = (h.distance as f64 - e).abs() / e.max(f64::MIN_POSITIVE);
            worst = worst.max(rel);
            ensure!(
                rel <= 1e-4 || (h.distance as f64 - e).abs() <= 1e-10,
                "query {qi} id {}: adc {} vs exact {e}",
                h.id,
                h.distance
            );
        }
        let mut order: Vec<usize> = (0..exact.len()).collect();
        order.sort_by(|&a, &b| exact[a].total_cmp(&exact[b]).then(a.cmp(&b)));
        let ranked: Vec<usize> = hits.iter().map(|h| h.id as usize).collect();
        ensure!(
            ranked == order,
            "query {qi}: ranking differs from decode-then-scan"
        );
    }
    within(start.elapsed(), 5.0)?;
    Ok(format!(
        "20 queries x 1000 vectors, max rel err {worst:.2e}"
    ))
}

fn quantization_error_bound() -> Outcome {
    let start = Instant::now();
    let (base, queries) = gen_synthetic_split(10_000, 100, 32, 32, 0xA3).unwrap();
    let cb = pq::train_pq(&base, 16, 16, 2).unwrap();
    let codes = pq::encode_all(&cb, &base).unwrap();
    let packed = pack_codes(&codes).unwrap();
    let mut worst_ratio = 0.0f64;
    for (qi, q) in queries.rows().enumerate() {
        let lut = pq::build_lut(&cb, q).unwrap();
        let qlut = quantize_lut(&lut).unwrap();
        // no entry may need clamping: the unrounded scaled value stays <= 255.5
        for j in 0..16 {
            let row = lut.row(j);
            let lo = row.iter().copied().fold(f32::INFINITY, f32::min);
            for &v in row {
                ensure!(
                    ((v - lo) * qlut.scale()) < 255.5,
                    "query {qi}: entry {v} would clip"
                );
            }
        }
        let bound = 0.5 * 16.0 / qlut.scale() as f64;
        for b in 0..packed.n_blocks() {
            let acc = fastscan::block_accumulate(&qlut, &packed, b).unwrap();
            for (p, &a) in acc.iter().enumerate().take(packed.valid_count(b)) {
                let n = b * 32 + p;
                let exact: f64 = codes
                    .row(n)
                    .iter()
                    .enumerate()
                    .map(|(j, &c)| lut.get(j, c as usize) as f64)
                    .sum();
                let err = (qlut.dequantize(a as u32) as f64 - exact).abs();
                worst_ratio = worst_ratio.max(err / bound);
                ensure!(
                    err <= bound,
                    "query {qi} vector {n}: error {err} > bound {bound}"
                );
            }
        }
    }
    within(start.elapsed(), 10.0)?;
    Ok(format!(
        "100 queries x 10000 vectors, worst error {:.1}% of bound",
        worst_ratio * 100.0
    ))
}

fn flat_recalls(base: &VectorSet, queries: &VectorSet, gt: &GroundTruth, m: usize) -> (f64, f64) {
    let cb = pq::train_pq(base, m, 16, 3).unwrap();
    let codes = pq::encode_all(&cb, base).unwrap();
    let packed = pack_codes(&codes).unwrap();
    let mut adc = Vec::with_capacity(queries.len());
    let mut fast = Vec::with_capacity(queries.len());
    for q in queries.rows() {
        let lut = pq::build_lut(&cb, q).unwrap();
        adc.push(
            pq::adc_scan(&lut, &codes, 1)
                .unwrap()
                .iter()
                .map(|h| h.id)
                .collect::<Vec<_>>(),
        );
        let qlut = quantize_lut(&lut).unwrap();
        fast.push(
            fastscan::fastscan_search(&qlut, &packed, 1)
                .unwrap()
                .iter()
                .map(|h| h.id)
                .collect::<Vec<_>>(),
        );
    }
    (gt.recall_at_1(&adc), gt.recall_at_1(&fast))
}

fn accuracy_parity() -> Outcome {
    let start = Instant::now();
    let (base, queries) =
        gen_synthetic_split(50_000, 1_000, 32, 50_000 / POINTS_PER_CLUSTER, 0xA4).unwrap();
    let gt = dataset::ground_truth(&base, &queries, 1).unwrap();
    let mut report = Vec::new();
    for m in [8, 16] {
        let (adc, fast) = flat_recalls(&base, &queries, &gt, m);
        report.push(format!("M={m}: pq-adc {adc:.3} fastscan {fast:.3}"));
        ensure!((adc - fast).abs() <= 0.02, "M={m}: |{adc} - {fast}| > 0.02");
    }
    within(start.elapsed(), 120.0)?;
    Ok(report.join(", "))
}

fn speedup() -> Outcome {
    let kernel = Kernel::active();
    let mut rng = SeededRng::new(0xA5);
    let (train, queries) = gen_synthetic_split(5_000, 10, 32, 32, 0xA5).unwrap();
    let cb = pq::train_pq(&train, 16, 16, 4).unwrap();
    let codes = random_codes(&mut rng, 1_000_000, 16);
    let packed = pack_codes(&codes).unwrap();
    let topk = 10;

    let mut sink = 0u64;
    let adc = mean_trial(5, || {
        for q in queries.rows() {
            let lut = pq::build_lut(&cb, q).unwrap();
            sink ^= pq::adc_scan(&lut, &codes, topk).unwrap()[0].id;
        }
    });
    let fast = mean_trial(5, || {
        for q in queries.rows() {
            let qlut = quantize_lut(&pq::build_lut(&cb, q).unwrap()).unwrap();
            sink ^= fastscan::fastscan_search_with(kernel, &qlut, &packed, topk).unwrap()[0].id;
        }
    });
    std::hint::black_box(sink);
    let ratio = adc.as_secs_f64() / fast.as_secs_f64();
    let required = if kernel.backend().is_simd() { 3.0 } else { 1.0 };
    let per_query = |d: Duration| d.as_secs_f64() * 1e3 / queries.len() as f64;
    let msg = format!(
        "backend {}: pq-adc {:.2} ms/query, fastscan {:.3} ms/query, {ratio:.1}x (need {required}x)",
        kernel.name(),
        per_query(adc),
        per_query(fast)
    );
    ensure!(ratio >= required, "{msg}");
    Ok(msg)
}

fn ivf_trend() -> Outcome {
    let start = Instant::now();
    let (base, queries) =
        gen_synthetic_split(100_000, 1_000, 32, 100_000 / POINTS_PER_CLUSTER, 0xA6).unwrap();
    let gt = dataset::ground_truth(&base, &queries, 1).unwrap();
    let nlist = 316;
    let mut index = train_ivf(&base, nlist, 16, 5).unwrap();
    index.add(&base, 0).unwrap();

    let mut rows = Vec::new();
    for nprobe in [1, 2, 4, 8] {
        let params = SearchParams::new(nprobe, 1);
        let mut results = Vec::new();
        let elapsed = mean_trial(5, || {
            results.clear();
            for q in queries.rows() {
                let hits = index.search(q, &params).unwrap();
                results.push(hits.iter().map(|h| h.id).collect::<Vec<_>>());
            }
        });
        let ms = elapsed.as_secs_f64() * 1e3 / queries.len() as f64;
        rows.push((nprobe, gt.recall_at_1(&results), ms));
    }
    let table: Vec<String> = rows
        .iter()
        .map(|(p, r, ms)| format!("nprobe={p}: R@1 {r:.3} {ms:.4} ms"))
        .collect();
    for w in rows.windows(2) {
        ensure!(w[1].1 >= w[0].1, "recall decreased: {table:?}");
        ensure!(w[1].2 >= w[0].2, "ms/query decreased: {table:?}");
    }

    // Candidate pools grow with nprobe, and so does the share of queries
    // whose true neighbor is among the candidates.
    let mut covered_prev = 0usize;
    for nprobe in [1, 2, 4, 8] {
        let mut covered = 0usize;
        for (qi, q) in queries.rows().enumerate() {
            let lists = index.coarse().probe(q, nprobe);
            let wider = index.coarse().probe(q, nprobe * 2);
            ensure!(
                lists.iter().all(|l| wider.contains(l)),
                "query {qi}: probe sets not nested"
            );
            let nn = gt.row(qi)[0] as u64;
            if lists.iter().any(|&l| index.lists()[l].ids().contains(&nn)) {
                covered += 1;
            }
        }
        ensure!(
            covered >= covered_prev,
            "candidate coverage decreased at nprobe={nprobe}"
        );
        covered_prev = covered;
    }

    let (ids, codes) = index.flat_codes();
    ensure!(
        ids == (0..base.len() as u64).collect::<Vec<_>>(),
        "ids are not 0..n"
    );
    let packed = pack_codes(&codes).unwrap();
    for (qi, q) in queries.rows().enumerate().take(200) {
        let qlut = quantize_lut(&pq::build_lut(index.codebook(), q).unwrap()).unwrap();
        let flat = fastscan::fastscan_search(&qlut, &packed, 10).unwrap();
        let full = index.search(q, &SearchParams::new(nlist, 10)).unwrap();
        ensure!(
            flat == full,
            "query {qi}: nprobe=nlist differs from flat fast scan"
        );
    }
    within(start.elapsed(), 180.0)?;
    Ok(table.join(", "))
}

fn persistence() -> Outcome {
    let start = Instant::now();
    let (base, queries) = gen_synthetic_split(20_000, 100, 32, 32, 0xA7).unwrap();
    let mut index = train_ivf(&base, 141, 16, 6).unwrap();
    index.add(&base, 0).unwrap();
    let params = SearchParams::new(4, 10);
    let before: Vec<_> = queries
        .rows()
        .map(|q| index.search(q, &params).unwrap())
        .collect();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("index.pqfs");
    index.save(&path).map_err(|e| e.to_string())?;
    let loaded = IvfIndex::load(&path).map_err(|e| e.to_string())?;
    ensure!(loaded == index, "loaded index contents differ");
    let after: Vec<_> = queries
        .rows()
        .map(|q| loaded.search(q, &params).unwrap())
        .collect();
    ensure!(before == after, "search results differ after reload");
    within(start.elapsed(), 30.0)?;
    Ok("100 queries identical after save/load".into())
}

fn format_round_trips() -> Outcome {
    let mut rng = SeededRng::new(0xA8);
    for case in 0..1_000 {
        let n = rng.below(8);
        let d = 1 + rng.below(16);
        let floats: Vec<f32> = (0..n * d)
            .map(|_| (rng.next_gaussian() * 100.0) as f32)
            .collect();
        let set = VectorSet::new(d, floats).unwrap();
        let bytes = dataset::encode_fvecs(&set);
        let back = dataset::parse_fvecs(&bytes).map_err(|e| e.to_string())?;
        ensure!(dataset::encode_fvecs(&back) == bytes, "fvecs case {case}");

        let ints = IntMatrix {
            n,
            d,
            data: (0..n * d).map(|_| rng.next_u64() as i32).collect(),
        };
        let bytes = dataset::encode_ivecs(&ints);
        let back = dataset::parse_ivecs(&bytes).map_err(|e| e.to_string())?;
        ensure!(n == 0 || back == ints, "ivecs case {case}");
        ensure!(dataset::encode_ivecs(&back) == bytes, "ivecs case {case}");

        let raw: Vec<f32> = (0..n * d).map(|_| rng.below(256) as f32).collect();
        let set = VectorSet::new(d, raw).unwrap();
        let bytes = dataset::encode_bvecs(&set).map_err(|e| e.to_string())?;
        let back = dataset::parse_bvecs(&bytes).map_err(|e| e.to_string())?;
        ensure!(n == 0 || back == set, "bvecs case {case}");

        let m = 1 + rng.below(16);
        let count = rng.below(200);
        let codes = random_codes(&mut rng, count, m);
        ensure!(
            pack_codes(&codes).unwrap().unpack() == codes,
            "pack case {case}"
        );
    }
    // one pass through the filesystem as well
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let set = VectorSet::new(3, vec![1.0, -2.5, 3.25, 0.0, 7.0, 8.0]).unwrap();
    dataset::write_fvecs(dir.path().join("a.fvecs"), &set).map_err(|e| e.to_string())?;
    ensure!(
        dataset::read_fvecs(dir.path().join("a.fvecs")).unwrap() == set,
        "fvecs file"
    );
    Ok("1000 cases per format".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 kernel bit-equivalence", kernel_bit_equivalence),
        ("2 ADC equivalence", adc_equivalence),
        ("3 quantization error bound", quantization_error_bound),
        ("4 accuracy parity", accuracy_parity),
        ("5 speedup", speedup),
        ("6 IVF nprobe trend", ivf_trend),
        ("7 persistence", persistence),
        ("8 format round trips", format_round_trips),
    ];
    println!("active backend: {}", fastscan::active_backend_name());
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|e| Err(format!("panicked: {:?}", e.downcast_ref::<String>())));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] criterion {name} ({secs:.1}s) {detail}"),
            Err(why) => {
                failed += 1;
                println!("[FAIL] criterion {name} ({secs:.1}s) {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
