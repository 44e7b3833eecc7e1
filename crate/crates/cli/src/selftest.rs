use std::io::Write;

use nibblescan::fastscan::{self, pack_codes, quantize_lut, PackedCodeBlocks};
use nibblescan::rng::SeededRng;
use nibblescan::{Backend, Kernel, LutF, PQCodes, QuantizedLUT, Reg32};

use crate::{CliError, CliResult, SelftestArgs};

type Suite = Result<String, String>;

fn random_reg(rng: &mut SeededRng) -> Reg32 {
    let mut r = Reg32::default();
    r.0.iter_mut().for_each(|b| *b = rng.next_u64() as u8);
    r
}

fn random_codes(rng: &mut SeededRng, n: usize, m: usize) -> PQCodes {
    PQCodes::new(m, 16, (0..n * m).map(|_| rng.below(16) as u8).collect()).unwrap()
}

fn kernel_equivalence(kernels: &[Kernel], cases: usize, rng: &mut SeededRng) -> Suite {
    let reference = Kernel::scalar();
    for case in 0..cases {
        let table = random_reg(rng);
        let idx = random_reg(rng);
        let m = 1 + rng.below(32);
        let codes = random_codes(rng, 32, m);
        let packed = pack_codes(&codes).map_err(|e| e.to_string())?;
        let bytes: Vec<u8> = (0..m * 16).map(|_| rng.next_u64() as u8).collect();
        let qlut = QuantizedLUT::from_parts(m, bytes, 0.0, 1.0).map_err(|e| e.to_string())?;

        let want_shuffle = reference.lane_pair_shuffle(&table, &idx);
        let want_mask = reference.movemask32(&table);
        let want_acc = fastscan::block_accumulate_with(reference, &qlut, &packed, 0).unwrap();
        for k in kernels {
            let got = k.lane_pair_shuffle(&table, &idx);
            if got != want_shuffle {
                return Err(format!(
                    "case {case}: {} lane_pair_shuffle(table={:?}, idx={:?}) = {:?}, scalar = {:?}",
                    k.name(),
                    table.0,
                    idx.0,
                    got.0,
                    want_shuffle.0
                ));
            }
            let got = k.movemask32(&table);
            if got != want_mask {
                return Err(format!(
                    "case {case}: {} movemask32({:?}) = {got:#010x}, scalar = {want_mask:#010x}",
                    k.name(),
                    table.0
                ));
            }
            let got = fastscan::block_accumulate_with(*k, &qlut, &packed, 0).unwrap();
            if got != want_acc {
                let p = (0..32).find(|&p| got[p] != want_acc[p]).unwrap();
                return Err(format!(
                    "case {case}: {} block_accumulate (m={m}) slot {p} = {}, scalar = {}",
                    k.name(),
                    got[p],
                    want_acc[p]
                ));
            }
        }
    }
    let names: Vec<&str> = kernels.iter().map(|k| k.name()).collect();
    Ok(format!("{cases} cases, [{}] vs scalar", names.join(", ")))
}

fn pack_round_trip(cases: usize, rng: &mut SeededRng, inject: bool) -> Suite {
    let mut injected = false;
    for case in 0..cases {
        let n = rng.below(200);
        let m = 1 + rng.below(32);
        let codes = random_codes(rng, n, m);
        let packed = pack_codes(&codes).map_err(|e| e.to_string())?;
        let mut blob = packed.as_bytes().to_vec();
        if inject && !injected && n > 0 {
            // vector 0, subquantizer 0 lives in the low nibble of the first byte
            blob[0] ^= 0x01;
            injected = true;
        }
        let restored = PackedCodeBlocks::from_raw(n, m, blob)
            .map_err(|e| format!("case {case} (n={n}, m={m}): packed blob rejected: {e}"))?;
        let unpacked = restored.unpack();
        for i in 0..n {
            let (want, got) = (codes.row(i), unpacked.row(i));
            if let Some(j) = (0..m).find(|&j| want[j] != got[j]) {
                return Err(format!(
                    "case {case} (n={n}, m={m}): vector {i} subquantizer {j} packed {} unpacked {}",
                    want[j], got[j]
                ));
            }
        }
    }
    Ok(format!("{cases} cases"))
}

/// Checks `|f(acc) - table sum| <= 0.5 m / scale`, plus `(m + 2)` f32 ulps of
/// the distance for the final dequantization, which happens in f32.
fn error_bound(kernel: Kernel, cases: usize, rng: &mut SeededRng) -> Suite {
    let mut worst = 0.0f64;
    for case in 0..cases {
        let m = 1 + rng.below(32);
        let n = 1 + rng.below(64);
        let range = 0.01 + 100.0 * rng.next_f64();
        let values: Vec<f32> = (0..m * 16)
            .map(|_| (range * rng.next_f64()) as f32)
            .collect();
        let lut = LutF::new(m, 16, values).map_err(|e| e.to_string())?;
        let qlut = quantize_lut(&lut).map_err(|e| e.to_string())?;
        let codes = random_codes(rng, n, m);
        let packed = pack_codes(&codes).map_err(|e| e.to_string())?;
        let bound = qlut.error_bound() as f64;
        for b in 0..packed.n_blocks() {
            let acc = fastscan::block_accumulate_with(kernel, &qlut, &packed, b).unwrap();
            for (p, &a) in acc.iter().enumerate().take(packed.valid_count(b)) {
                let i = b * 32 + p;
                let exact: f64 = codes
                    .row(i)
                    .iter()
                    .enumerate()
                    .map(|(j, &c)| lut.get(j, c as usize) as f64)
                    .sum();
                let approx = qlut.dequantize(a as u32) as f64;
                let err = (approx - exact).abs();
                let slack = (m + 2) as f64 * f32::EPSILON as f64 * exact.abs();
                if err > bound + slack {
                    return Err(format!(
                        "case {case} (m={m}): vector {i} f(acc)={approx} table sum={exact} error {err} > bound {bound} + {slack:.1e}"
                    ));
                }
                worst = worst.max(err / bound);
            }
        }
    }
    Ok(format!(
        "{cases} cases on {}, worst error {:.1}% of bound",
        kernel.name(),
        worst * 100.0
    ))
}

pub fn cmd_selftest(args: &SelftestArgs, out: &mut impl Write) -> CliResult<()> {
    let active = Kernel::from_env().map_err(|e| CliError::Usage(e.to_string()))?;
    let kernels: Vec<Kernel> = match &args.backend {
        Some(name) => {
            let backend: Backend = name
                .parse()
                .map_err(|e: nibblescan::Error| CliError::Usage(e.to_string()))?;
            vec![Kernel::new(backend).map_err(|e| CliError::Usage(e.to_string()))?]
        }
        None => Backend::available()
            .into_iter()
            .filter(|b| b.is_simd())
            .map(|b| Kernel::new(b).unwrap())
            .collect(),
    };
    writeln!(out, "active backend: {}", active.name())?;

    let mut rng = SeededRng::new(args.seed);
    let suites: [(&str, Suite); 3] = [
        (
            "kernel equivalence",
            kernel_equivalence(&kernels, args.cases, &mut rng),
        ),
        (
            "pack round trip",
            pack_round_trip(args.cases, &mut rng, args.inject_corruption),
        ),
        (
            "error bound",
            error_bound(
                if args.backend.is_some() {
                    kernels[0]
                } else {
                    active
                },
                args.cases,
                &mut rng,
            ),
        ),
    ];
    let mut first_failure = None;
    for (name, outcome) in suites {
        match outcome {
            Ok(detail) => writeln!(out, "PASS {name}: {detail}")?,
            Err(counterexample) => {
                writeln!(out, "FAIL {name}: {counterexample}")?;
                first_failure.get_or_insert(format!("{name}: {counterexample}"));
            }
        }
    }
    match first_failure {
        Some(msg) => Err(CliError::Property(msg)),
        None => Ok(()),
    }
}
