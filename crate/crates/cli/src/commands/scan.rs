use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use gwasms::mtest::{bonferroni_threshold, single_marker_scan};
use serde::Serialize;

use super::ids;
use crate::manifest::{now, Manifest};
use crate::output::OutputDir;
use crate::{usage, InputArgs};

#[derive(Debug, Args, Serialize)]
pub struct ScanArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Family-wise (Bonferroni) and false-discovery (BH) level.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Number of tests for Bonferroni (default: number of SNPs).
    #[arg(long)]
    p_effective: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct Rejections {
    alpha: f64,
    p_effective: u64,
    bonferroni_threshold: f64,
    bonferroni: Vec<String>,
    benjamini_hochberg: Vec<String>,
}

pub fn run(args: ScanArgs) -> Result<()> {
    let started = now();
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(usage(format!("--alpha {} is outside (0, 1)", args.alpha)));
    }
    let ds = args.input.load()?;
    if ds.trait_values.is_none() {
        return Err(usage("scan needs --trait"));
    }
    let p_eff = args.p_effective.unwrap_or(ds.n_snps() as u64);
    if p_eff == 0 {
        return Err(usage("--p-effective must be at least 1"));
    }
    let scan = single_marker_scan(&ds)?;
    let rejections = Rejections {
        alpha: args.alpha,
        p_effective: p_eff,
        bonferroni_threshold: bonferroni_threshold(args.alpha, p_eff)?,
        bonferroni: ids(&ds, &scan.bonferroni(args.alpha, p_eff)?),
        benjamini_hochberg: ids(&ds, &scan.benjamini_hochberg(args.alpha)?),
    };

    let mut out = OutputDir::create(&args.out)?;
    out.write("scan.tsv", |buf| scan.write_tsv(buf, &ds.meta))?;
    out.write_json("rejections.json", &rejections)?;
    let mut manifest = Manifest::new("scan", serde_json::to_value(&args)?, started);
    manifest.add_inputs(args.input.paths())?;
    out.finish(manifest)
}
