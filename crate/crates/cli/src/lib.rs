//! Command-line harness: synthetic data generation, index training, timed
//! search with recall evaluation, and a kernel self-test.

use std::ffi::OsString;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub mod error;
pub mod search;
pub mod selftest;
pub mod train;

pub use error::{CliError, CliResult};
pub use search::BenchResult;

#[derive(Debug, Parser)]
#[command(
    name = "nibblescan",
    version,
    about = "4-bit PQ fast-scan benchmark harness"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset (and optionally queries and ground truth) as fvecs/ivecs.
    Gen(GenArgs),
    /// Train an IVF fast-scan index and write it to disk.
    Train(TrainArgs),
    /// Run timed searches and print recall/latency rows as CSV.
    Search(SearchArgs),
    /// Check SIMD kernels against the scalar reference on seeded random inputs.
    Selftest(SelftestArgs),
}

/// `n,d,clusters` for the synthetic generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub clusters: usize,
}

impl FromStr for SyntheticSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(',').collect();
        let [n, d, clusters] = parts[..] else {
            return Err(format!("expected n,d,clusters, got {s:?}"));
        };
        let num = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
        Ok(SyntheticSpec {
            n: num(n)?,
            d: num(d)?,
            clusters: num(clusters)?,
        })
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Dataset shape as n,d,clusters.
    #[arg(long)]
    pub synthetic: SyntheticSpec,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output fvecs file for the base vectors.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of query vectors drawn from the same distribution.
    #[arg(long, default_value_t = 0, requires = "query_out")]
    pub queries: usize,
    #[arg(long)]
    pub query_out: Option<PathBuf>,
    /// Output ivecs file with exact nearest neighbors of the queries.
    #[arg(long, requires = "query_out")]
    pub gt_out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub gt_k: usize,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["data", "synthetic"])))]
pub struct TrainArgs {
    /// Base vectors in fvecs format.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Generate base vectors instead: n,d,clusters (same stream as `gen`).
    #[arg(long)]
    pub synthetic: Option<SyntheticSpec>,
    /// Subquantizers per code.
    #[arg(long, default_value_t = 16)]
    pub m: usize,
    /// Inverted lists; defaults to round(sqrt(N)).
    #[arg(long)]
    pub nlist: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train on the first N base vectors only.
    #[arg(long)]
    pub train_size: Option<usize>,
    /// Output index file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    /// Float lookup-table scan over all codes.
    #[value(name = "pq-adc")]
    PqAdc,
    /// Flat 4-bit fast scan over all codes.
    #[value(name = "fastscan")]
    Fastscan,
    /// Inverted index with fast scan inside the probed lists.
    #[value(name = "ivf-fastscan")]
    IvfFastscan,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::PqAdc => "pq-adc",
            Method::Fastscan => "fastscan",
            Method::IvfFastscan => "ivf-fastscan",
        }
    }
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// Query vectors in fvecs format.
    #[arg(long)]
    pub queries: PathBuf,
    /// Ground truth in ivecs format (first column is the true nearest neighbor).
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Methods to run, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "ivf-fastscan")]
    pub method: Vec<Method>,
    /// nprobe values for ivf-fastscan, comma separated. Flat methods emit one row.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub nprobe: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    pub topk: usize,
    /// Timed trials averaged per row (one extra warmup trial is discarded).
    #[arg(long, default_value_t = 5)]
    pub trials: usize,
    /// Directory receiving `<method>-nprobe<p>.ivecs` with the returned ids.
    #[arg(long)]
    pub dump_ids: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    /// Compare only this backend against the scalar reference.
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long, default_value_t = 2000)]
    pub cases: usize,
    #[arg(long, default_value_t = 0x5eed)]
    pub seed: u64,
    /// Corrupt a packed blob before the round-trip check.
    #[arg(long, hide = true)]
    pub inject_corruption: bool,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut out = std::io::stdout().lock();
    let result = match cli.command {
        Command::Gen(a) => train::cmd_gen(&a, &mut out),
        Command::Train(a) => train::cmd_train(&a, &mut out),
        Command::Search(a) => search::cmd_search(&a, &mut out),
        Command::Selftest(a) => selftest::cmd_selftest(&a, &mut out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("nibblescan: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_spec_parses_three_fields() {
        let s: SyntheticSpec = "50000, 32,64".parse().unwrap();
        assert_eq!(
            s,
            SyntheticSpec {
                n: 50000,
                d: 32,
                clusters: 64
            }
        );
        assert!("50000,32".parse::<SyntheticSpec>().is_err());
        assert!("1,2,3,4".parse::<SyntheticSpec>().is_err());
        assert!("a,2,3".parse::<SyntheticSpec>().is_err());
    }

    #[test]
    fn method_names_round_trip_through_clap() {
        for m in [Method::PqAdc, Method::Fastscan, Method::IvfFastscan] {
            assert_eq!(<Method as ValueEnum>::from_str(m.name(), false).unwrap(), m);
        }
    }

    #[test]
    fn help_goes_to_stdout_and_bad_flags_to_stderr() {
        let help = Cli::try_parse_from(["nibblescan", "--help"]).unwrap_err();
        assert!(!help.use_stderr());
        for bad in [
            &["nibblescan", "train", "--synthetic", "10,4,2"][..],
            &["nibblescan", "frobnicate"],
        ] {
            assert!(Cli::try_parse_from(bad).unwrap_err().use_stderr());
        }
    }
}
