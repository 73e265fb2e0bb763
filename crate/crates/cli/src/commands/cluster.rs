use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use gwasms::cluster::{cluster_snps, deduplicate, DEFAULT_WINDOW};
use gwasms::ClusterAssignment;
use serde::Serialize;

use crate::manifest::{now, Manifest};
use crate::output::OutputDir;
use crate::{usage, InputArgs};

#[derive(Debug, Args, Serialize)]
pub struct ClusterArgs {
    #[arg(long)]
    genotypes: PathBuf,
    #[arg(long)]
    meta: Option<PathBuf>,
    /// SNPs join a representative when |R| exceeds this.
    #[arg(long)]
    threshold: f64,
    /// Maximum distance in file positions between a SNP and its representative.
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    window: usize,
    /// Merge identical columns before clustering.
    #[arg(long)]
    dedup: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct Effective {
    threshold: f64,
    window: usize,
    n_snps: usize,
    duplicates_removed: usize,
    effective_count: usize,
}

/// Expands an assignment of the deduplicated columns to every original column.
fn expand(
    reduced: &ClusterAssignment,
    kept: &[usize],
    removed: &std::collections::BTreeMap<usize, usize>,
    p: usize,
) -> ClusterAssignment {
    let mut cluster_id = vec![0; p];
    let mut degenerate = vec![false; p];
    for (r, &j) in kept.iter().enumerate() {
        cluster_id[j] = reduced.cluster_id[r];
        degenerate[j] = reduced.degenerate[r];
    }
    for (&j, &k) in removed {
        cluster_id[j] = cluster_id[k];
        degenerate[j] = degenerate[k];
    }
    ClusterAssignment {
        cluster_id,
        representatives: reduced.representatives.iter().map(|&r| kept[r]).collect(),
        effective_count: reduced.effective_count,
        degenerate,
    }
}

pub fn run(args: ClusterArgs) -> Result<()> {
    let started = now();
    if !(args.threshold > 0.0 && args.threshold <= 1.0) {
        return Err(usage(format!("--threshold {} is outside (0, 1]", args.threshold)));
    }
    let input = InputArgs {
        genotypes: args.genotypes.clone(),
        meta: args.meta.clone(),
        trait_values: None,
        covariates: None,
    };
    let ds = input.load()?;
    if !ds.genotypes.is_complete() {
        return Err(usage("genotypes contain missing values; run `gwasms impute` first"));
    }
    let p = ds.n_snps();
    let (assignment, n_removed) = if args.dedup {
        let (reduced, removed) = deduplicate(&ds)?;
        let kept: Vec<usize> = (0..p).filter(|j| !removed.contains_key(j)).collect();
        let a = cluster_snps(&reduced.genotypes, args.threshold, args.window)?;
        (expand(&a, &kept, &removed, p), removed.len())
    } else {
        (cluster_snps(&ds.genotypes, args.threshold, args.window)?, 0)
    };
    let summary = Effective {
        threshold: args.threshold,
        window: args.window,
        n_snps: p,
        duplicates_removed: n_removed,
        effective_count: assignment.effective_count,
    };

    let mut out = OutputDir::create(&args.out)?;
    out.write("clusters.tsv", |buf| assignment.write_tsv(buf, &ds.meta))?;
    out.write_json("effective.json", &summary)?;
    let mut manifest = Manifest::new("cluster", serde_json::to_value(&args)?, started);
    manifest.add_inputs(input.paths())?;
    out.finish(manifest)
}
