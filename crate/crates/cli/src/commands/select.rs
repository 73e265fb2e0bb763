use std::collections::HashMap;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use gwasms::criteria::DEFAULT_D;
use gwasms::regress::Design;
use gwasms::search::select_model_design;
use gwasms::{CriterionConfig, CriterionKind, SearchConfig};
use serde::Serialize;

use crate::manifest::{now, Manifest};
use crate::output::OutputDir;
use crate::{usage, InputArgs};

#[derive(Debug, Args, Serialize)]
pub struct SelectArgs {
    #[command(flatten)]
    input: InputArgs,
    /// bic, mbic, mbic2 or ebic.
    #[arg(long, default_value = "mbic2")]
    criterion: CriterionKind,
    /// Additive constant of the mBIC penalty.
    #[arg(long, default_value_t = DEFAULT_D, allow_hyphen_values = true)]
    d: f64,
    /// EBIC weight in [0, 1].
    #[arg(long, default_value_t = gwasms::criteria::DEFAULT_KAPPA)]
    kappa: f64,
    /// Known error standard deviation; estimated from the residuals when absent.
    #[arg(long)]
    sigma: Option<f64>,
    /// Marker count in the penalty (default: number of SNPs).
    #[arg(long)]
    p_effective: Option<u64>,
    /// Screening p-value cutoff.
    #[arg(long, default_value_t = 0.15)]
    screen: f64,
    #[arg(long, default_value_t = 140)]
    max_forward: usize,
    #[arg(long, default_value_t = 1000)]
    max_stepwise: usize,
    /// SNP ids, one per line, added to the final subset search.
    #[arg(long)]
    refine_extras: Option<PathBuf>,
    /// Skip the final subset search.
    #[arg(long)]
    no_refine: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct Term {
    snp_id: String,
    index: usize,
    effect: f64,
    std_error: f64,
}

#[derive(Serialize)]
struct ModelReport {
    criterion: CriterionKind,
    criterion_value: f64,
    n: usize,
    p_effective: u64,
    snps: Vec<Term>,
    intercept: f64,
    covariate_effects: Vec<f64>,
    rss: f64,
    mss: f64,
    f_statistic: f64,
    p_value: f64,
    df_model: usize,
    df_resid: usize,
    truncated: bool,
}

fn read_extras(path: &std::path::Path, ds: &gwasms::Dataset) -> Result<Vec<usize>> {
    if !path.is_file() {
        return Err(usage(format!("input file {} does not exist", path.display())));
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let by_id: HashMap<&str, usize> = ds.meta.iter().enumerate().map(|(j, m)| (m.snp_id.as_str(), j)).collect();
    text.split_whitespace()
        .map(|id| {
            by_id
                .get(id)
                .copied()
                .ok_or_else(|| usage(format!("unknown SNP id {id:?} in {}", path.display())))
        })
        .collect()
}

pub fn run(args: SelectArgs) -> Result<()> {
    let started = now();
    let ds = args.input.load()?;
    if ds.trait_values.is_none() {
        return Err(usage("select needs --trait"));
    }
    let extras = match &args.refine_extras {
        Some(p) => read_extras(p, &ds)?,
        None => Vec::new(),
    };
    let n = ds.n_individuals();
    let p_eff = args.p_effective.unwrap_or(ds.n_snps() as u64);
    let mut config = SearchConfig::new(
        CriterionConfig::new(args.criterion, n, p_eff)
            .with_d(args.d)
            .with_kappa(args.kappa)
            .with_sigma(args.sigma),
    );
    config.screen_threshold = args.screen;
    config.max_forward_size = args.max_forward;
    config.max_stepwise_iterations = args.max_stepwise;
    config.refine = !args.no_refine;
    config.validate().map_err(usage)?;

    let design = Design::from_dataset(&ds)?;
    let sel = select_model_design(design, &design.all_covariates(), &config, &extras)?;
    let fit = &sel.fit;
    let snps = sel
        .model
        .snp_indices()
        .iter()
        .enumerate()
        .map(|(k, &j)| Term {
            snp_id: ds.snp_id(j).to_string(),
            index: j,
            effect: fit.coefficients.snps[k],
            std_error: fit.std_errors.snps[k],
        })
        .collect();
    let report = ModelReport {
        criterion: args.criterion,
        criterion_value: sel.criterion_value,
        n,
        p_effective: p_eff,
        snps,
        intercept: fit.coefficients.intercept,
        covariate_effects: fit.coefficients.covariates.clone(),
        rss: fit.rss,
        mss: fit.mss,
        f_statistic: fit.f_statistic,
        p_value: fit.p_value,
        df_model: fit.df_model,
        df_resid: fit.df_resid,
        truncated: sel.trace.truncated,
    };

    let mut out = OutputDir::create(&args.out)?;
    out.write_json("model.json", &report)?;
    out.write("trace.jsonl", |buf| sel.trace.write_jsonl(buf, &ds.meta))?;
    let mut manifest = Manifest::new("select", serde_json::to_value(&args)?, started);
    manifest.add_inputs(args.input.paths().into_iter().chain(args.refine_extras.as_deref()))?;
    out.finish(manifest)
}
