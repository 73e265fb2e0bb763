//! Single-marker scan with Bonferroni and Benjamini-Hochberg corrections.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::f_upper_tail;
use crate::genotype::{Dataset, SnpMeta};
use crate::regress::{Design, FitWorkspace, RegressError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MtestError {
    #[error("significance level {0} is outside (0, 1)")]
    InvalidAlpha(f64),
    #[error("number of tests must be at least 1")]
    NoTests,
    #[error(transparent)]
    Regress(#[from] RegressError),
}

pub type Result<T, E = MtestError> = std::result::Result<T, E>;

/// Per-SNP F tests of `beta_j = 0` in the model with intercept, forced
/// covariates and SNP `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub p_values: Vec<f64>,
    pub f_statistics: Vec<f64>,
    /// SNP indices by ascending p-value, ties by index.
    pub order: Vec<usize>,
    /// SNPs with no variation left after the intercept and covariates; their
    /// p-value is 1.
    pub degenerate: Vec<bool>,
    pub df_resid: usize,
}

impl ScanResult {
    /// Builds a scan from precomputed statistics.
    pub fn from_parts(p_values: Vec<f64>, f_statistics: Vec<f64>, df_resid: usize) -> Self {
        let degenerate = vec![false; p_values.len()];
        let order = ascending_order(&p_values);
        Self {
            p_values,
            f_statistics,
            order,
            degenerate,
            df_resid,
        }
    }

    pub fn len(&self) -> usize {
        self.p_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_values.is_empty()
    }

    /// 1-based rank of each SNP in `order`.
    pub fn ranks(&self) -> Vec<usize> {
        let mut ranks = vec![0; self.order.len()];
        for (r, &j) in self.order.iter().enumerate() {
            ranks[j] = r + 1;
        }
        ranks
    }

    pub fn bonferroni(&self, alpha: f64, p_effective: u64) -> Result<Vec<usize>> {
        bonferroni(&self.p_values, alpha, p_effective)
    }

    pub fn benjamini_hochberg(&self, alpha: f64) -> Result<Vec<usize>> {
        benjamini_hochberg(&self.p_values, alpha)
    }

    /// Tab-separated `snp_id, f, p, rank`, one row per SNP in file order.
    pub fn write_tsv<W: Write>(&self, mut out: W, meta: &[SnpMeta]) -> io::Result<()> {
        writeln!(out, "snp_id\tf\tp\trank")?;
        let ranks = self.ranks();
        for j in 0..self.len() {
            let id = meta.get(j).map_or_else(|| format!("snp{}", j + 1), |m| m.snp_id.clone());
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                id, self.f_statistics[j], self.p_values[j], ranks[j]
            )?;
        }
        Ok(())
    }
}

fn ascending_order(p: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    order
}

/// Scan of every SNP in `dataset`, forcing in all of its covariates.
pub fn single_marker_scan(dataset: &Dataset) -> Result<ScanResult> {
    let design = Design::from_dataset(dataset)?;
    scan_design(design, &design.all_covariates())
}

/// Scan against an explicit design and forced-covariate set.
pub fn scan_design(design: Design<'_>, forced: &[usize]) -> Result<ScanResult> {
    let null = FitWorkspace::new(design, forced)?;
    let n = design.n();
    let fixed = null.n_columns();
    if fixed + 1 >= n {
        return Err(RegressError::InvalidModel(
            "single-marker models leave no residual degrees of freedom".into(),
        )
        .into());
    }
    let df_resid = n - fixed - 1;
    let rss_null = null.rss_null();
    let signal = null.has_signal();

    let stats: Vec<(f64, f64, bool)> = (0..design.n_snps())
        .into_par_iter()
        .map(|j| match null.snp_add_gain(j) {
            None => (0.0, 1.0, true),
            Some(_) if !signal => (0.0, 1.0, false),
            Some(gain) => {
                let rss = (rss_null - gain).max(0.0);
                if rss <= 1e-20 * rss_null {
                    (f64::INFINITY, 0.0, false)
                } else {
                    let f = df_resid as f64 * gain / rss;
                    (f, f_upper_tail(f, 1.0, df_resid as f64), false)
                }
            }
        })
        .collect();

    let f_statistics = stats.iter().map(|s| s.0).collect();
    let p_values: Vec<f64> = stats.iter().map(|s| s.1).collect();
    let degenerate = stats.iter().map(|s| s.2).collect();
    let order = ascending_order(&p_values);
    Ok(ScanResult {
        p_values,
        f_statistics,
        order,
        degenerate,
        df_resid,
    })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(MtestError::InvalidAlpha(alpha))
    }
}

/// Per-test level of the Bonferroni correction.
pub fn bonferroni_threshold(alpha: f64, p_effective: u64) -> Result<f64> {
    check_alpha(alpha)?;
    if p_effective == 0 {
        return Err(MtestError::NoTests);
    }
    Ok(alpha / p_effective as f64)
}

/// Indices (ascending) with `p <= alpha / p_effective`.
pub fn bonferroni(p_values: &[f64], alpha: f64, p_effective: u64) -> Result<Vec<usize>> {
    let t = bonferroni_threshold(alpha, p_effective)?;
    Ok((0..p_values.len()).filter(|&j| p_values[j] <= t).collect())
}

/// Benjamini-Hochberg step-up rejections (ascending indices) with
/// `m = p_values.len()`. Every p-value tied with the cutoff is rejected.
pub fn benjamini_hochberg(p_values: &[f64], alpha: f64) -> Result<Vec<usize>> {
    check_alpha(alpha)?;
    let m = p_values.len();
    if m == 0 {
        return Ok(Vec::new());
    }
    let order = ascending_order(p_values);
    let cutoff = order
        .iter()
        .enumerate()
        .rev()
        .find(|&(i, &j)| p_values[j] <= (i + 1) as f64 * alpha / m as f64)
        .map(|(_, &j)| p_values[j]);
    Ok(match cutoff {
        Some(c) => (0..m).filter(|&j| p_values[j] <= c).collect(),
        None => Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bh_hand_example() {
        let p = [0.001, 0.02, 0.03, 0.9];
        assert_eq!(benjamini_hochberg(&p, 0.05).unwrap(), vec![0, 1, 2]);
        assert!(benjamini_hochberg(&[0.2, 0.5], 0.05).unwrap().is_empty());
    }

    #[test]
    fn single_test_matches_bonferroni() {
        for &p in &[0.01, 0.05, 0.07] {
            assert_eq!(
                benjamini_hochberg(&[p], 0.05).unwrap(),
                bonferroni(&[p], 0.05, 1).unwrap()
            );
        }
    }

    #[test]
    fn bh_rejects_ties_at_cutoff() {
        let p = [0.04, 0.01, 0.04, 0.04];
        assert_eq!(benjamini_hochberg(&p, 0.05).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn bonferroni_edges() {
        assert!(bonferroni(&[1.0; 5], 0.05, 5).unwrap().is_empty());
        assert_eq!(bonferroni(&[0.04], 0.05, 1).unwrap(), vec![0]);
        assert!(bonferroni(&[0.04], 1.0, 1).is_err());
        assert!(bonferroni(&[0.04], 0.05, 0).is_err());
    }

    #[test]
    fn order_breaks_ties_by_index() {
        let s = ScanResult::from_parts(vec![0.5, 0.1, 0.5, 0.1], vec![0.0; 4], 10);
        assert_eq!(s.order, vec![1, 3, 0, 2]);
        assert_eq!(s.ranks(), vec![3, 1, 4, 2]);
    }
}
