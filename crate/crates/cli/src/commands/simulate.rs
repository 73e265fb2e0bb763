use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use gwasms::genotype::DatasetFiles;
use gwasms::simulate::{
    choose_causal, effect_grid, individual_heritability, ncp_terms, run_study_with,
    StudyOptions, SyntheticGenotypes,
};
use gwasms::{Dataset, Method, SimulationConfig};
use serde::{Deserialize, Serialize};

use crate::manifest::{now, Manifest};
use crate::output::OutputDir;
use crate::usage;

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Study description in JSON.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured number of replicates.
    #[arg(long)]
    replicates: Option<usize>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated methods, e.g. `bonferroni:0.05,bh:0.05,mbic,mbic2`.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Comma-separated |R| thresholds for true positives.
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum GenotypeSource {
    Synthetic(SyntheticGenotypes),
    File { path: PathBuf, meta: Option<PathBuf> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum CausalSpec {
    Indices(Vec<usize>),
    Random { k: usize, maf_min: f64, maf_max: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum EffectSpec {
    Values(Vec<f64>),
    Grid { lo: f64, hi: f64 },
}

fn default_methods() -> Vec<String> {
    ["bonferroni:0.05", "bh:0.05", "mbic", "mbic2"].map(String::from).to_vec()
}

fn default_thresholds() -> Vec<f64> {
    vec![0.7, 0.9]
}

fn default_sigma() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StudyFile {
    genotypes: GenotypeSource,
    causal: CausalSpec,
    effects: EffectSpec,
    #[serde(default = "default_sigma")]
    sigma: f64,
    replicates: usize,
    seed: u64,
    #[serde(default = "default_methods")]
    methods: Vec<String>,
    #[serde(default = "default_thresholds")]
    thresholds: Vec<f64>,
    #[serde(default)]
    options: StudyOptions,
}

/// Relative paths in the study file are taken from its directory.
fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn load_genotypes(source: &GenotypeSource, base: &Path, seed: u64, inputs: &mut Vec<PathBuf>) -> Result<Dataset> {
    match source {
        GenotypeSource::Synthetic(s) => Ok(Dataset::from_genotypes(s.generate(seed).map_err(usage)?)),
        GenotypeSource::File { path, meta } => {
            let files = DatasetFiles {
                genotypes: resolve(base, path),
                meta: meta.as_ref().map(|m| resolve(base, m)),
                ..Default::default()
            };
            for p in std::iter::once(&files.genotypes).chain(files.meta.as_ref()) {
                if !p.is_file() {
                    return Err(usage(format!("input file {} does not exist", p.display())));
                }
                inputs.push(p.clone());
            }
            files.load().map_err(usage)
        }
    }
}

pub fn run(args: SimulateArgs) -> Result<()> {
    let started = now();
    if !args.config.is_file() {
        return Err(usage(format!("config file {} does not exist", args.config.display())));
    }
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut study: StudyFile =
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", args.config.display())))?;
    if let Some(r) = args.replicates {
        study.replicates = r;
    }
    if let Some(s) = args.seed {
        study.seed = s;
    }
    if let Some(m) = &args.methods {
        study.methods = m.clone();
    }
    if let Some(t) = &args.thresholds {
        study.thresholds = t.clone();
    }
    let methods: Vec<Method> = study
        .methods
        .iter()
        .map(|m| m.parse().map_err(usage))
        .collect::<Result<_>>()?;

    let base = args.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut inputs = vec![args.config.clone()];
    let ds = load_genotypes(&study.genotypes, &base, study.seed, &mut inputs)?;
    let g = &ds.genotypes;
    let causal = match &study.causal {
        CausalSpec::Indices(v) => v.clone(),
        CausalSpec::Random { k, maf_min, maf_max } => {
            choose_causal(g, *k, *maf_min, *maf_max, study.seed).map_err(usage)?
        }
    };
    let effects = match &study.effects {
        EffectSpec::Values(v) => v.clone(),
        EffectSpec::Grid { lo, hi } => effect_grid(causal.len(), *lo, *hi),
    };
    let mut config = SimulationConfig::new(causal, effects, study.replicates, study.seed);
    config.sigma = study.sigma;
    config.tp_thresholds = study.thresholds.clone();
    config.validate(g).map_err(usage)?;

    let report = run_study_with(g, &config, &methods, &study.options)?;
    let terms = ncp_terms(g, &config)?;
    let h2: Vec<f64> = (0..config.k())
        .map(|l| individual_heritability(g, &config, l))
        .collect::<Result<_, _>>()?;

    let mut out = OutputDir::create(&args.out)?;
    out.write_json("report.json", &report)?;
    out.write("power.tsv", |buf| report.write_power_tsv(buf, &ds.meta))?;
    out.write("fp.tsv", |buf| report.write_fp_tsv(buf, &ds.meta))?;
    out.write("ncp.tsv", |buf| {
        writeln!(buf, "snp_id\teffect\tsqrt_nu_m\town\tcross\th2")?;
        for (l, &j) in config.causal_indices.iter().enumerate() {
            let (own, cross) = terms[l];
            writeln!(
                buf,
                "{}\t{}\t{}\t{}\t{}\t{}",
                ds.snp_id(j),
                config.effects[l],
                (own + cross).abs(),
                own,
                cross,
                h2[l]
            )?;
        }
        Ok(())
    })?;

    let resolved = serde_json::json!({ "arguments": &args, "study": &study, "simulation": &config });
    let mut manifest = Manifest::new("simulate", resolved, started);
    manifest.seed = Some(study.seed);
    manifest.add_inputs(inputs.iter().map(PathBuf::as_path))?;
    out.finish(manifest)
}
