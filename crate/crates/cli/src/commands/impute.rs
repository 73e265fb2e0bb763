use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use gwasms::genotype::{impute_missing, write_genotypes};
use serde::Serialize;

use crate::manifest::{now, Manifest};
use crate::output::OutputDir;
use crate::usage;

#[derive(Debug, Args, Serialize)]
pub struct ImputeArgs {
    #[arg(long)]
    genotypes: PathBuf,
    #[arg(long)]
    meta: Option<PathBuf>,
    /// Neighbourhood searched for predictors, in file positions either side.
    #[arg(long, default_value_t = 500)]
    window: usize,
    /// Number of predictor SNPs matched per missing entry.
    #[arg(long, default_value_t = 4)]
    predictors: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: ImputeArgs) -> Result<()> {
    let started = now();
    if args.window == 0 || args.predictors == 0 {
        return Err(usage("--window and --predictors must be at least 1"));
    }
    let input = crate::InputArgs {
        genotypes: args.genotypes.clone(),
        meta: args.meta.clone(),
        trait_values: None,
        covariates: None,
    };
    let ds = input.load()?;
    let filled = impute_missing(&ds, args.window, args.predictors)?;

    let mut out = OutputDir::create(&args.out)?;
    out.write("genotypes.tsv", |buf| write_genotypes(buf, &filled))?;
    out.write_json(
        "imputation.json",
        &serde_json::json!({
            "n_individuals": ds.n_individuals(),
            "n_snps": ds.n_snps(),
            "imputed_entries": ds.genotypes.missing_count(),
        }),
    )?;
    let mut manifest = Manifest::new("impute", serde_json::to_value(&args)?, started);
    manifest.add_inputs(input.paths())?;
    out.finish(manifest)
}
