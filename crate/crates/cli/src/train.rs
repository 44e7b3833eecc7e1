use std::io::Write;
use std::time::Instant;

use nibblescan::dataset::{self, gen_synthetic, gen_synthetic_split, VectorSet};
use nibblescan::ivf::{train_ivf, InvertedList};

use crate::{CliError, CliResult, GenArgs, TrainArgs};

pub fn cmd_gen(args: &GenArgs, out: &mut impl Write) -> CliResult<()> {
    let spec = args.synthetic;
    let (base, queries) =
        gen_synthetic_split(spec.n, args.queries, spec.d, spec.clusters, args.seed)?;
    dataset::write_fvecs(&args.out, &base)?;
    writeln!(
        out,
        "wrote {} base vectors (d={}) to {}",
        base.len(),
        spec.d,
        args.out.display()
    )?;
    if let Some(path) = &args.query_out {
        dataset::write_fvecs(path, &queries)?;
        writeln!(out, "wrote {} queries to {}", queries.len(), path.display())?;
    }
    if let Some(path) = &args.gt_out {
        let gt = if queries.is_empty() {
            dataset::GroundTruth::new(0, args.gt_k, Vec::new())?
        } else {
            dataset::ground_truth(&base, &queries, args.gt_k)?
        };
        dataset::write_ivecs(path, &gt.to_matrix())?;
        writeln!(
            out,
            "wrote ground truth (k={}) to {}",
            args.gt_k,
            path.display()
        )?;
    }
    Ok(())
}

fn load_base(args: &TrainArgs) -> CliResult<VectorSet> {
    match (&args.data, args.synthetic) {
        (Some(path), _) => Ok(dataset::read_fvecs(path)?),
        (None, Some(spec)) => Ok(gen_synthetic(spec.n, spec.d, spec.clusters, args.seed)?),
        (None, None) => Err(CliError::Usage(
            "one of --data or --synthetic is required".into(),
        )),
    }
}

pub fn cmd_train(args: &TrainArgs, out: &mut impl Write) -> CliResult<()> {
    let base = load_base(args)?;
    if base.is_empty() {
        return Err(CliError::Data("base set is empty".into()));
    }
    let nlist = args
        .nlist
        .unwrap_or_else(|| ((base.len() as f64).sqrt().round() as usize).max(1));
    let train_n = args.train_size.unwrap_or(base.len()).min(base.len());
    let training = base.slice(0, train_n);

    let start = Instant::now();
    let mut index = train_ivf(&training, nlist, args.m, args.seed)?;
    let train_s = start.elapsed().as_secs_f64();
    let start = Instant::now();
    index.add(&base, 0)?;
    let add_s = start.elapsed().as_secs_f64();
    index.save(&args.out)?;

    let sizes: Vec<usize> = index.lists().iter().map(InvertedList::len).collect();
    let empty = sizes.iter().filter(|&&s| s == 0).count();
    writeln!(
        out,
        "vectors      {} (d={}, trained on {train_n})",
        base.len(),
        base.dim()
    )?;
    writeln!(
        out,
        "code         m={} k=16, {} bits/vector",
        args.m,
        4 * args.m
    )?;
    writeln!(
        out,
        "lists        nlist={nlist}, sizes min={} max={} empty={empty}",
        sizes.iter().min().unwrap(),
        sizes.iter().max().unwrap()
    )?;
    writeln!(out, "train time   {train_s:.2}s, add time {add_s:.2}s")?;
    writeln!(out, "index        {}", args.out.display())?;
    Ok(())
}
