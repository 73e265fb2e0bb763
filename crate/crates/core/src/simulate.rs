//! Trait simulation, heritability, detection classification and
//! power/FDR studies.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Binomial, ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::criteria::{CriterionConfig, CriterionKind, DEFAULT_D};
use crate::dist::{f_upper_quantile, noncentral_f_upper_tail, NoncentralChiSquared};
use crate::genotype::{genotype_correlation, minor_allele_frequency, GenotypeError, GenotypeMatrix, SnpMeta};
use crate::mtest::{benjamini_hochberg, bonferroni, scan_design, MtestError};
use crate::regress::{ncp_decomposition, noncentrality_single_marker, Design, EffectModel, RegressError};
use crate::rng::{stream, Purpose};
use crate::search::{finish_selection, multiple_forward_search, screen, SearchConfig, SearchError, SearchTrace};

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("invalid simulation configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Genotype(#[from] GenotypeError),
    #[error(transparent)]
    Regress(#[from] RegressError),
    #[error(transparent)]
    Mtest(#[from] MtestError),
    #[error(transparent)]
    Search(#[from] SearchError),
}

pub type Result<T, E = SimulateError> = std::result::Result<T, E>;

/// Independent SNP columns in Hardy-Weinberg proportions, each with a MAF
/// drawn uniformly from `[maf_min, maf_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticGenotypes {
    pub n: usize,
    pub p: usize,
    pub maf_min: f64,
    pub maf_max: f64,
}

impl SyntheticGenotypes {
    pub fn generate(&self, seed: u64) -> Result<GenotypeMatrix> {
        if !(0.0 < self.maf_min && self.maf_min <= self.maf_max && self.maf_max <= 0.5) {
            return Err(SimulateError::InvalidConfig(format!(
                "MAF range [{}, {}] must lie within (0, 0.5]",
                self.maf_min, self.maf_max
            )));
        }
        let mut rng = stream(seed, 0, Purpose::Genotypes);
        let columns = (0..self.p)
            .map(|_| {
                let maf = rng.random_range(self.maf_min..=self.maf_max);
                let b = Binomial::new(2, maf).expect("valid probability");
                (0..self.n).map(|_| b.sample(&mut rng) as i8 - 1).collect()
            })
            .collect();
        Ok(GenotypeMatrix::from_columns(columns)?)
    }
}

/// `k` equally spaced effects from `lo` to `hi` inclusive.
pub fn effect_grid(k: usize, lo: f64, hi: f64) -> Vec<f64> {
    match k {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..k)
            .map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64)
            .collect(),
    }
}

/// Picks `k` complete SNP columns with MAF in `[maf_min, maf_max]`, sorted.
pub fn choose_causal(
    g: &GenotypeMatrix,
    k: usize,
    maf_min: f64,
    maf_max: f64,
    seed: u64,
) -> Result<Vec<usize>> {
    let eligible: Vec<usize> = (0..g.n_snps())
        .filter(|&j| !g.column_has_missing(j))
        .filter(|&j| {
            let m = minor_allele_frequency(g.column(j));
            m >= maf_min && m <= maf_max
        })
        .collect();
    if eligible.len() < k {
        return Err(SimulateError::InvalidConfig(format!(
            "only {} SNPs have MAF in [{maf_min}, {maf_max}], {k} requested",
            eligible.len()
        )));
    }
    let mut rng = stream(seed, 0, Purpose::CausalChoice);
    let mut chosen: Vec<usize> = sample(&mut rng, eligible.len(), k)
        .into_iter()
        .map(|i| eligible[i])
        .collect();
    chosen.sort_unstable();
    Ok(chosen)
}

fn default_sigma() -> f64 {
    1.0
}

fn default_thresholds() -> Vec<f64> {
    vec![0.7, 0.9]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub causal_indices: Vec<usize>,
    pub effects: Vec<f64>,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    pub n_replicates: usize,
    pub seed: u64,
    #[serde(default = "default_thresholds")]
    pub tp_thresholds: Vec<f64>,
}

impl SimulationConfig {
    pub fn new(causal_indices: Vec<usize>, effects: Vec<f64>, n_replicates: usize, seed: u64) -> Self {
        Self {
            causal_indices,
            effects,
            sigma: 1.0,
            n_replicates,
            seed,
            tp_thresholds: default_thresholds(),
        }
    }

    pub fn validate(&self, g: &GenotypeMatrix) -> Result<()> {
        let bad = |m: String| Err(SimulateError::InvalidConfig(m));
        if !self.causal_indices.windows(2).all(|w| w[0] < w[1]) {
            return bad("causal indices must be strictly increasing".into());
        }
        if let Some(&j) = self.causal_indices.iter().find(|&&j| j >= g.n_snps()) {
            return bad(format!("causal index {j} is out of range"));
        }
        if let Some(&j) = self.causal_indices.iter().find(|&&j| g.column_has_missing(j)) {
            return bad(format!("causal SNP {j} has missing genotypes"));
        }
        if self.effects.len() != self.causal_indices.len() {
            return bad(format!(
                "{} effects for {} causal SNPs",
                self.effects.len(),
                self.causal_indices.len()
            ));
        }
        if self.effects.iter().any(|b| !b.is_finite()) {
            return bad("effects must be finite".into());
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma {} must be positive", self.sigma));
        }
        if let Some(t) = self.tp_thresholds.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
            return bad(format!("threshold {t} is outside (0, 1]"));
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.causal_indices.len()
    }

    /// `n beta_l^2 / sigma^2`, the noncentrality of causal SNP `l` under an
    /// orthogonal design.
    pub fn tau(&self, l: usize, n: usize) -> f64 {
        n as f64 * self.effects[l].powi(2) / self.sigma.powi(2)
    }

    fn effect_model(&self) -> EffectModel {
        EffectModel {
            snp_indices: self.causal_indices.clone(),
            effects: self.effects.clone(),
        }
    }
}

/// Genetic component `X beta` (no intercept).
fn genetic_values(g: &GenotypeMatrix, config: &SimulationConfig) -> Vec<f64> {
    let mut xb = vec![0.0; g.n_individuals()];
    for (&j, &b) in config.causal_indices.iter().zip(&config.effects) {
        for (v, &x) in xb.iter_mut().zip(g.column(j)) {
            *v += b * x as f64;
        }
    }
    xb
}

fn variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Trait for one replicate: `X beta + eps`, `eps ~ N(0, sigma^2)`.
pub fn simulate_trait(g: &GenotypeMatrix, config: &SimulationConfig, replicate: u64) -> Result<Vec<f64>> {
    config.validate(g)?;
    let mut rng = stream(config.seed, replicate, Purpose::Trait);
    let mut y = genetic_values(g, config);
    for v in y.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v += config.sigma * z;
    }
    Ok(y)
}

/// `Var(X beta) / (sigma^2 + Var(X beta))` with sample variance.
pub fn overall_heritability(g: &GenotypeMatrix, config: &SimulationConfig) -> Result<f64> {
    config.validate(g)?;
    let v = variance(&genetic_values(g, config));
    Ok(v / (config.sigma.powi(2) + v))
}

/// `beta_l^2 Var(x_l) / (sigma^2 + Var(X beta))` for causal position `l`.
pub fn individual_heritability(g: &GenotypeMatrix, config: &SimulationConfig, l: usize) -> Result<f64> {
    config.validate(g)?;
    if l >= config.k() {
        return Err(SimulateError::InvalidConfig(format!("no causal SNP at position {l}")));
    }
    let v = variance(&genetic_values(g, config));
    let x = g.column_f64(config.causal_indices[l]);
    Ok(config.effects[l].powi(2) * variance(&x) / (config.sigma.powi(2) + v))
}

/// A detection that matched no causal SNP above the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FalsePositive {
    pub snp: usize,
    pub max_abs_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub tp_count: usize,
    /// Per causal position: matched by at least one detection.
    pub detected_causal: Vec<bool>,
    /// False positives; detections with identical genotype columns appear
    /// once.
    pub false_positives: Vec<FalsePositive>,
}

impl Classification {
    /// `FP / (TP + FP)`, zero without detections.
    pub fn fdr(&self) -> f64 {
        let fp = self.false_positives.len();
        let total = self.tp_count + fp;
        if total == 0 {
            0.0
        } else {
            fp as f64 / total as f64
        }
    }
}

/// Matches each detection to the causal SNP of largest `|R|`. It is a true
/// positive if that `|R|` exceeds `threshold`; every causal SNP counts at
/// most once. Constant columns have `|R| = 0`.
pub fn classify_detections(
    detected: &[usize],
    g: &GenotypeMatrix,
    causal: &[usize],
    threshold: f64,
) -> Classification {
    let mut detected_causal = vec![false; causal.len()];
    let mut false_positives: Vec<FalsePositive> = Vec::new();
    let mut seen: HashSet<&[i8]> = HashSet::new();
    let mut sorted = detected.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    for &d in &sorted {
        let mut best: Option<(usize, f64)> = None;
        for (l, &c) in causal.iter().enumerate() {
            let r = genotype_correlation(g.column(d), g.column(c)).map_or(0.0, f64::abs);
            if best.is_none_or(|(_, br)| r > br) {
                best = Some((l, r));
            }
        }
        match best {
            Some((l, r)) if r > threshold => detected_causal[l] = true,
            _ => {
                if seen.insert(g.column(d)) {
                    false_positives.push(FalsePositive {
                        snp: d,
                        max_abs_r: best.map_or(0.0, |b| b.1),
                    });
                }
            }
        }
    }
    Classification {
        tp_count: detected_causal.iter().filter(|&&b| b).count(),
        detected_causal,
        false_positives,
    }
}

/// A detection procedure compared in a study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Method {
    Bonferroni { alpha: f64 },
    Bh { alpha: f64 },
    Mbic { d: f64 },
    Mbic2 { d: f64 },
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Bonferroni { alpha } => write!(f, "bonferroni:{alpha}"),
            Method::Bh { alpha } => write!(f, "bh:{alpha}"),
            Method::Mbic { d } => write!(f, "mbic:{d}"),
            Method::Mbic2 { d } => write!(f, "mbic2:{d}"),
        }
    }
}

impl FromStr for Method {
    type Err = SimulateError;

    /// `bonferroni[:alpha]`, `bh[:alpha]`, `mbic[:d]` or `mbic2[:d]`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((a, b)) => (a, Some(b)),
            None => (s, None),
        };
        let value = |default: f64| -> Result<f64> {
            match arg {
                None => Ok(default),
                Some(a) => a
                    .trim()
                    .parse()
                    .map_err(|_| SimulateError::InvalidConfig(format!("bad number in method '{s}'"))),
            }
        };
        match name.trim().to_ascii_lowercase().as_str() {
            "bonferroni" => Ok(Method::Bonferroni { alpha: value(0.05)? }),
            "bh" => Ok(Method::Bh { alpha: value(0.05)? }),
            "mbic" => Ok(Method::Mbic { d: value(DEFAULT_D)? }),
            "mbic2" => Ok(Method::Mbic2 { d: value(DEFAULT_D)? }),
            _ => Err(SimulateError::InvalidConfig(format!("unknown method '{s}'"))),
        }
    }
}

/// Search settings shared by the model-selection methods of a study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyOptions {
    pub screen_threshold: f64,
    pub max_forward_size: usize,
    pub max_stepwise_iterations: usize,
    pub refine: bool,
    /// Marker count in the penalty; the number of SNPs when absent.
    pub p_effective: Option<u64>,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            screen_threshold: 0.15,
            max_forward_size: 140,
            max_stepwise_iterations: 1000,
            refine: false,
            p_effective: None,
        }
    }
}

/// Detections of every method in one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub replicate: u64,
    /// Per method, ascending SNP indices.
    pub detected: Vec<Vec<usize>>,
}

/// Runs one replicate: simulate the trait, then apply every method.
pub fn run_replicate(
    g: &GenotypeMatrix,
    config: &SimulationConfig,
    methods: &[Method],
    options: &StudyOptions,
    replicate: u64,
) -> Result<ReplicateOutcome> {
    let y = simulate_trait(g, config, replicate)?;
    let design = Design::new(g, &y, &[])?;
    let scan = scan_design(design, &[])?;
    let p = g.n_snps() as u64;
    let p_eff = options.p_effective.unwrap_or(p);
    let needs_search = methods
        .iter()
        .any(|m| matches!(m, Method::Mbic { .. } | Method::Mbic2 { .. }));
    let search_config = |kind: CriterionKind, d: f64| {
        let mut c = SearchConfig::new(CriterionConfig::new(kind, g.n_individuals(), p_eff).with_d(d));
        c.screen_threshold = options.screen_threshold;
        c.max_forward_size = options.max_forward_size;
        c.max_stepwise_iterations = options.max_stepwise_iterations;
        c.refine = options.refine;
        c
    };
    let mut forward = None;
    if needs_search {
        let candidates = screen(&scan, options.screen_threshold);
        let mut trace = SearchTrace::default();
        let model = multiple_forward_search(
            design,
            &[],
            &candidates,
            &search_config(CriterionKind::Bic, DEFAULT_D),
            &mut trace,
        )?;
        forward = Some((candidates, model, trace));
    }
    let mut detected = Vec::with_capacity(methods.len());
    for m in methods {
        let hits = match *m {
            Method::Bonferroni { alpha } => bonferroni(&scan.p_values, alpha, p_eff)?,
            Method::Bh { alpha } => benjamini_hochberg(&scan.p_values, alpha)?,
            Method::Mbic { d } | Method::Mbic2 { d } => {
                let kind = if matches!(m, Method::Mbic { .. }) {
                    CriterionKind::Mbic
                } else {
                    CriterionKind::Mbic2
                };
                let (candidates, model, trace) = forward.as_ref().expect("forward stage ran");
                let sel = finish_selection(
                    design,
                    model.clone(),
                    candidates,
                    &search_config(kind, d),
                    &[],
                    trace.clone(),
                )?;
                sel.model.snp_indices().to_vec()
            }
        };
        detected.push(hits);
    }
    Ok(ReplicateOutcome { replicate, detected })
}

/// One row of a false-positive frequency table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FpEntry {
    pub snp: usize,
    /// Number of replicates in which the SNP was a false positive.
    pub count: usize,
    pub max_abs_r: f64,
}

/// Results of one method at one `|R|` threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub threshold: f64,
    /// Per causal SNP, fraction of replicates in which it was detected.
    pub power: Vec<f64>,
    pub mean_power: f64,
    /// Per replicate, in replicate order.
    pub fdr: Vec<f64>,
    pub mean_fdr: f64,
    /// Fraction of replicates with at least one false positive.
    pub fwer: f64,
    /// Sorted by count (descending), then SNP index.
    pub fp_table: Vec<FpEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub causal_indices: Vec<usize>,
    pub n_replicates: usize,
    pub replicates: Vec<ReplicateOutcome>,
    pub summaries: Vec<MethodSummary>,
}

impl DetectionReport {
    pub fn summary(&self, method: &Method, threshold: f64) -> Option<&MethodSummary> {
        self.summaries
            .iter()
            .find(|s| s.method == *method && s.threshold == threshold)
    }

    /// False-positive table: `method, threshold, snp_id, frequency, max_abs_r`.
    pub fn write_fp_tsv<W: Write>(&self, mut out: W, meta: &[SnpMeta]) -> io::Result<()> {
        writeln!(out, "method\tthreshold\tsnp_id\tfrequency\tmax_abs_r")?;
        for s in &self.summaries {
            for e in &s.fp_table {
                let id = meta.get(e.snp).map_or_else(|| format!("snp{}", e.snp + 1), |m| m.snp_id.clone());
                writeln!(out, "{}\t{}\t{}\t{}\t{}", s.method, s.threshold, id, e.count, e.max_abs_r)?;
            }
        }
        Ok(())
    }

    /// Per-causal-SNP power: `method, threshold, snp_id, power`.
    pub fn write_power_tsv<W: Write>(&self, mut out: W, meta: &[SnpMeta]) -> io::Result<()> {
        writeln!(out, "method\tthreshold\tsnp_id\tpower")?;
        for s in &self.summaries {
            for (&j, p) in self.causal_indices.iter().zip(&s.power) {
                let id = meta.get(j).map_or_else(|| format!("snp{}", j + 1), |m| m.snp_id.clone());
                writeln!(out, "{}\t{}\t{}\t{}", s.method, s.threshold, id, p)?;
            }
        }
        Ok(())
    }
}

/// Builds the report from replicate outcomes in any order.
pub fn aggregate(
    g: &GenotypeMatrix,
    config: &SimulationConfig,
    methods: &[Method],
    mut outcomes: Vec<ReplicateOutcome>,
) -> DetectionReport {
    outcomes.sort_by_key(|o| o.replicate);
    let reps = outcomes.len();
    let k = config.k();
    let mut summaries = Vec::new();
    for (mi, method) in methods.iter().enumerate() {
        for &threshold in &config.tp_thresholds {
            let mut hits = vec![0usize; k];
            let mut fdr = Vec::with_capacity(reps);
            let mut with_fp = 0;
            let mut fp_counts: HashMap<usize, FpEntry> = HashMap::new();
            for o in &outcomes {
                let c = classify_detections(&o.detected[mi], g, &config.causal_indices, threshold);
                for (h, &d) in hits.iter_mut().zip(&c.detected_causal) {
                    *h += d as usize;
                }
                fdr.push(c.fdr());
                if !c.false_positives.is_empty() {
                    with_fp += 1;
                }
                for fp in &c.false_positives {
                    fp_counts
                        .entry(fp.snp)
                        .or_insert(FpEntry {
                            snp: fp.snp,
                            count: 0,
                            max_abs_r: fp.max_abs_r,
                        })
                        .count += 1;
                }
            }
            let denom = reps.max(1) as f64;
            let power: Vec<f64> = hits.iter().map(|&h| h as f64 / denom).collect();
            let mean_power = if k == 0 { 0.0 } else { power.iter().sum::<f64>() / k as f64 };
            let mean_fdr = fdr.iter().sum::<f64>() / denom;
            let mut fp_table: Vec<FpEntry> = fp_counts.into_values().collect();
            fp_table.sort_by(|a, b| b.count.cmp(&a.count).then(a.snp.cmp(&b.snp)));
            summaries.push(MethodSummary {
                method: *method,
                threshold,
                power,
                mean_power,
                fdr,
                mean_fdr,
                fwer: with_fp as f64 / denom,
                fp_table,
            });
        }
    }
    DetectionReport {
        causal_indices: config.causal_indices.clone(),
        n_replicates: reps,
        replicates: outcomes,
        summaries,
    }
}

/// Simulates `config.n_replicates` traits on `g` and evaluates every method.
pub fn run_study(g: &GenotypeMatrix, config: &SimulationConfig, methods: &[Method]) -> Result<DetectionReport> {
    run_study_with(g, config, methods, &StudyOptions::default())
}

pub fn run_study_with(
    g: &GenotypeMatrix,
    config: &SimulationConfig,
    methods: &[Method],
    options: &StudyOptions,
) -> Result<DetectionReport> {
    config.validate(g)?;
    if !g.is_complete() {
        return Err(SimulateError::Regress(RegressError::Incomplete));
    }
    let outcomes = (0..config.n_replicates as u64)
        .into_par_iter()
        .map(|r| run_replicate(g, config, methods, options, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(g, config, methods, outcomes))
}

/// Monte Carlo power of the single-marker F test at one `(k, tau)` point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub k: usize,
    pub tau: f64,
    pub power: f64,
    /// Monte Carlo standard error of `power`.
    pub se: f64,
    /// Exact noncentral F power, available for `k = 1`.
    pub analytic: Option<f64>,
}

/// Power of the single-marker test when `k` equal effects of size `tau`
/// share an orthogonal design: `MSS ~ chi2(1, tau)`,
/// `RSS ~ chi2(n - 2, (k - 1) tau)`, rejecting when
/// `(n - 2) MSS / RSS` exceeds the upper `alpha` quantile of `F(1, n - 2)`.
pub fn power_curve_noncentral(
    k_values: &[usize],
    tau_grid: &[f64],
    n: usize,
    alpha: f64,
    n_draws: usize,
    seed: u64,
) -> Result<Vec<PowerPoint>> {
    if n < 3 {
        return Err(SimulateError::InvalidConfig("n must be at least 3".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SimulateError::InvalidConfig(format!("alpha {alpha} is outside (0, 1)")));
    }
    if let Some(&k) = k_values.iter().find(|&&k| k < 1) {
        return Err(SimulateError::InvalidConfig(format!("k = {k} must be at least 1")));
    }
    if let Some(t) = tau_grid.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
        return Err(SimulateError::InvalidConfig(format!("tau {t} must be non-negative")));
    }
    let df2 = (n - 2) as f64;
    let crit = f_upper_quantile(alpha, 1.0, df2);
    let points: Vec<(usize, f64)> = k_values
        .iter()
        .flat_map(|&k| tau_grid.iter().map(move |&t| (k, t)))
        .collect();
    Ok(points
        .par_iter()
        .enumerate()
        .map(|(i, &(k, tau))| {
            let mut rng = stream(seed, i as u64, Purpose::PowerCurve);
            let mss = NoncentralChiSquared::new(1.0, tau);
            let lambda_r = (k - 1) as f64 * tau;
            let rss_central = ChiSquared::new(df2).expect("positive df");
            let rss_shifted = NoncentralChiSquared::new(df2, lambda_r);
            let mut hits = 0usize;
            for _ in 0..n_draws {
                let m = mss.sample(&mut rng);
                let r = if lambda_r > 0.0 {
                    rss_shifted.sample(&mut rng)
                } else {
                    rss_central.sample(&mut rng)
                };
                if df2 * m / r > crit {
                    hits += 1;
                }
            }
            let power = hits as f64 / n_draws.max(1) as f64;
            PowerPoint {
                k,
                tau,
                power,
                se: (power * (1.0 - power) / n_draws.max(1) as f64).sqrt(),
                analytic: (k == 1).then(|| noncentral_f_upper_tail(crit, 1.0, df2, tau)),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcpRow {
    pub snp: usize,
    pub sqrt_nu_m: f64,
    pub h2: f64,
    pub power: f64,
}

/// Joins per-SNP power with `sqrt(nu_m)` and individual heritability.
/// `snp_set` must list causal SNPs; `power` is aligned with
/// `config.causal_indices`.
pub fn ncp_diagnostics(
    g: &GenotypeMatrix,
    config: &SimulationConfig,
    power: &[f64],
    snp_set: &[usize],
) -> Result<Vec<NcpRow>> {
    config.validate(g)?;
    if power.len() != config.k() {
        return Err(SimulateError::InvalidConfig(format!(
            "{} power values for {} causal SNPs",
            power.len(),
            config.k()
        )));
    }
    let truth = config.effect_model();
    snp_set
        .iter()
        .map(|&j| {
            let l = config.causal_indices.binary_search(&j).map_err(|_| {
                SimulateError::InvalidConfig(format!("SNP {j} is not causal"))
            })?;
            let pair = noncentrality_single_marker(g, &truth, config.sigma, j)?;
            Ok(NcpRow {
                snp: j,
                sqrt_nu_m: pair.nu_m.sqrt(),
                h2: individual_heritability(g, config, l)?,
                power: power[l],
            })
        })
        .collect()
}

/// `sqrt(nu_m)` split into own and cross terms for each causal SNP.
pub fn ncp_terms(g: &GenotypeMatrix, config: &SimulationConfig) -> Result<Vec<(f64, f64)>> {
    let truth = config.effect_model();
    config
        .causal_indices
        .iter()
        .map(|&j| {
            let d = ncp_decomposition(g, &truth, config.sigma, j)?;
            Ok((d.own, d.cross))
        })
        .collect()
}

/// Average ranks (1-based), ties sharing the mean rank.
fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &t in &idx[i..=j] {
            r[t] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation; NaN when either input is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "inputs must have equal length");
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_inclusive() {
        let g = effect_grid(40, 0.27, 0.66);
        assert_eq!(g.len(), 40);
        assert_eq!(g[0], 0.27);
        assert!((g[39] - 0.66).abs() < 1e-15);
        assert_eq!(effect_grid(1, 0.27, 0.66), vec![0.27]);
    }

    #[test]
    fn single_snp_heritability_by_hand() {
        // Var(x) = 0.5 with n - 1 denominator: (-1, 0, 0, 1, 0) has sum of
        // squares 2 over 4.
        let g = GenotypeMatrix::from_columns(vec![vec![-1, 0, 0, 1, 0]]).unwrap();
        let c = SimulationConfig::new(vec![0], vec![1.0], 1, 0);
        let h = overall_heritability(&g, &c).unwrap();
        assert!((h - 1.0 / 3.0).abs() < 1e-15);
        assert!((individual_heritability(&g, &c, 0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn duplicate_detections_count_once() {
        let x = vec![-1, 0, 1, 1, 0, -1, 1, 0];
        let g = GenotypeMatrix::from_columns(vec![x.clone(), x.clone(), x]).unwrap();
        let c = classify_detections(&[1, 2], &g, &[0], 0.9);
        assert_eq!(c.tp_count, 1);
        assert!(c.false_positives.is_empty());
    }

    #[test]
    fn identical_false_positives_count_once() {
        let causal = vec![-1, 0, 1, 1, 0, -1, 1, 0];
        let noise = vec![0, 1, 0, -1, 1, 0, 0, -1];
        let g = GenotypeMatrix::from_columns(vec![causal, noise.clone(), noise]).unwrap();
        let c = classify_detections(&[1, 2], &g, &[0], 0.7);
        assert_eq!(c.tp_count, 0);
        assert_eq!(c.false_positives.len(), 1);
        assert_eq!(c.fdr(), 1.0);
    }

    #[test]
    fn empty_detection_has_zero_fdr() {
        let g = GenotypeMatrix::from_columns(vec![vec![-1, 0, 1]]).unwrap();
        assert_eq!(classify_detections(&[], &g, &[0], 0.7).fdr(), 0.0);
    }

    #[test]
    fn method_parsing() {
        assert_eq!("bh".parse::<Method>().unwrap(), Method::Bh { alpha: 0.05 });
        assert_eq!(
            "bonferroni:0.02".parse::<Method>().unwrap(),
            Method::Bonferroni { alpha: 0.02 }
        );
        assert_eq!("mbic2".parse::<Method>().unwrap(), Method::Mbic2 { d: DEFAULT_D });
        assert!("aic".parse::<Method>().is_err());
        assert!("bh:x".parse::<Method>().is_err());
        let m = Method::Mbic { d: -1.5 };
        assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
    }

    #[test]
    fn spearman_basics() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 35.0]) - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-15);
        assert_eq!(ranks(&[5.0, 1.0, 5.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn synthetic_genotypes_are_reproducible() {
        let s = SyntheticGenotypes {
            n: 50,
            p: 20,
            maf_min: 0.1,
            maf_max: 0.5,
        };
        let a = s.generate(3).unwrap();
        assert_eq!(a, s.generate(3).unwrap());
        assert_ne!(a, s.generate(4).unwrap());
        assert_eq!((a.n_individuals(), a.n_snps()), (50, 20));
    }
}
