//! Correlation clustering of SNPs for an effective marker count, and removal
//! of duplicated columns.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::genotype::{Dataset, GenotypeMatrix, SnpMeta};

/// Default look-around for cluster representatives, in file positions.
pub const DEFAULT_WINDOW: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("correlation threshold {0} is outside (0, 1]")]
    InvalidThreshold(f64),
    #[error("SNP {0} has missing genotypes; impute first")]
    Incomplete(usize),
}

pub type Result<T, E = ClusterError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    /// Cluster of each SNP; clusters are numbered in order of foundation.
    pub cluster_id: Vec<usize>,
    /// Founding SNP of each cluster.
    pub representatives: Vec<usize>,
    pub effective_count: usize,
    /// SNPs with zero sample variance, each left in its own cluster.
    pub degenerate: Vec<bool>,
}

impl ClusterAssignment {
    /// Tab-separated `snp_id, cluster_id, representative_id`.
    pub fn write_tsv<W: Write>(&self, mut out: W, meta: &[SnpMeta]) -> io::Result<()> {
        let id = |j: usize| meta.get(j).map_or_else(|| format!("snp{}", j + 1), |m| m.snp_id.clone());
        writeln!(out, "snp_id\tcluster_id\trepresentative_id")?;
        for (j, &c) in self.cluster_id.iter().enumerate() {
            writeln!(out, "{}\t{}\t{}", id(j), c, id(self.representatives[c]))?;
        }
        Ok(())
    }
}

/// Column sums for fast pairwise correlations in exact integer arithmetic.
struct ColumnStats {
    sum: i64,
    /// `n * sum x^2 - (sum x)^2`
    centered: i64,
}

fn column_stats(x: &[i8]) -> ColumnStats {
    let n = x.len() as i64;
    let sum: i64 = x.iter().map(|&v| v as i64).sum();
    let sq: i64 = x.iter().map(|&v| (v as i64) * (v as i64)).sum();
    ColumnStats {
        sum,
        centered: n * sq - sum * sum,
    }
}

fn abs_correlation(a: &[i8], b: &[i8], sa: &ColumnStats, sb: &ColumnStats) -> f64 {
    let n = a.len() as i64;
    let cross: i64 = a.iter().zip(b).map(|(&x, &y)| (x as i64) * (y as i64)).sum();
    let cov = (n * cross - sa.sum * sb.sum) as f64;
    (cov.abs() / ((sa.centered as f64) * (sb.centered as f64)).sqrt()).min(1.0)
}

/// Greedy leader clustering in file order. Each SNP joins the earliest
/// cluster whose representative lies within `window` positions and has
/// `|R| > c_threshold` with it; otherwise it founds a cluster.
pub fn cluster_snps(g: &GenotypeMatrix, c_threshold: f64, window: usize) -> Result<ClusterAssignment> {
    if !(c_threshold > 0.0 && c_threshold <= 1.0) {
        return Err(ClusterError::InvalidThreshold(c_threshold));
    }
    let p = g.n_snps();
    if let Some(j) = (0..p).find(|&j| g.column_has_missing(j)) {
        return Err(ClusterError::Incomplete(j));
    }
    let stats: Vec<ColumnStats> = (0..p).map(|j| column_stats(g.column(j))).collect();
    let mut cluster_id = vec![0; p];
    let mut representatives: Vec<usize> = Vec::new();
    // Representatives that other SNPs may join, ascending by position.
    let mut leaders: Vec<(usize, usize)> = Vec::new();
    let mut degenerate = vec![false; p];
    for j in 0..p {
        if stats[j].centered == 0 {
            degenerate[j] = true;
            cluster_id[j] = representatives.len();
            representatives.push(j);
            continue;
        }
        let start = leaders.partition_point(|&(r, _)| r + window < j);
        let joined = leaders[start..].iter().find(|&&(r, _)| {
            abs_correlation(g.column(r), g.column(j), &stats[r], &stats[j]) > c_threshold
        });
        match joined {
            Some(&(_, c)) => cluster_id[j] = c,
            None => {
                let c = representatives.len();
                cluster_id[j] = c;
                representatives.push(j);
                leaders.push((j, c));
            }
        }
    }
    Ok(ClusterAssignment {
        effective_count: representatives.len(),
        cluster_id,
        representatives,
        degenerate,
    })
}

/// Drops every column identical to an earlier one. Returns the reduced
/// dataset and a map from each removed index to the index it duplicates
/// (both in the original numbering).
pub fn deduplicate(dataset: &Dataset) -> Result<(Dataset, BTreeMap<usize, usize>)> {
    let g = &dataset.genotypes;
    if let Some(j) = (0..g.n_snps()).find(|&j| g.column_has_missing(j)) {
        return Err(ClusterError::Incomplete(j));
    }
    let mut first: HashMap<&[i8], usize> = HashMap::new();
    let mut kept = Vec::new();
    let mut removed = BTreeMap::new();
    for j in 0..g.n_snps() {
        match first.get(g.column(j)) {
            Some(&k) => {
                removed.insert(j, k);
            }
            None => {
                first.insert(g.column(j), j);
                kept.push(j);
            }
        }
    }
    Ok((dataset.select_snps(&kept), removed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(cols: &[&[i8]]) -> GenotypeMatrix {
        GenotypeMatrix::from_columns(cols.iter().map(|c| c.to_vec()).collect()).unwrap()
    }

    #[test]
    fn identical_columns_form_one_cluster() {
        let c: &[i8] = &[-1, 0, 1, 1, 0];
        let a = cluster_snps(&matrix(&[c, c, c]), 0.7, 10).unwrap();
        assert_eq!(a.effective_count, 1);
        assert_eq!(a.cluster_id, vec![0, 0, 0]);
    }

    #[test]
    fn duplicate_pairs_collapse() {
        let a: &[i8] = &[-1, 0, 1, 1, 0, -1, 0, 1];
        let b: &[i8] = &[1, 1, -1, 0, 0, -1, 1, 0];
        let c: &[i8] = &[0, -1, 0, 1, -1, 1, 1, -1];
        let d: &[i8] = &[1, -1, -1, 0, 1, 0, 0, 0];
        let g = matrix(&[a, b, a, c, b, d]);
        let res = cluster_snps(&g, 0.7, 100).unwrap();
        assert_eq!(res.effective_count, 4);
        assert_eq!(res.cluster_id, vec![0, 1, 0, 2, 1, 3]);
    }

    #[test]
    fn window_limits_joining() {
        let c: &[i8] = &[-1, 0, 1, 1, 0];
        let res = cluster_snps(&matrix(&[c, c, c]), 0.7, 1).unwrap();
        // SNP 2 is two positions from the only representative.
        assert_eq!(res.effective_count, 2);
    }

    #[test]
    fn constant_columns_are_singletons() {
        let c: &[i8] = &[0, 0, 0, 0];
        let res = cluster_snps(&matrix(&[c, c]), 0.7, 10).unwrap();
        assert_eq!(res.effective_count, 2);
        assert_eq!(res.degenerate, vec![true, true]);
    }

    #[test]
    fn lower_threshold_can_split_a_chain() {
        // B is close to A, C and D; A is far from C and D. At 0.6 B joins A
        // and leaves C and D to found their own clusters.
        let a: &[i8] = &[1, -1, 0, 1, -1, 1, 0, -1, 1, -1];
        let b: &[i8] = &[1, -1, 0, 1, 1, 1, -1, 0, 1, -1];
        let c: &[i8] = &[-1, -1, 0, 1, 1, 1, -1, 0, 1, -1];
        let d: &[i8] = &[1, -1, 0, 1, 1, -1, -1, 0, 1, -1];
        let g = matrix(&[a, b, c, d]);
        assert_eq!(cluster_snps(&g, 0.7, 10).unwrap().effective_count, 2);
        assert_eq!(cluster_snps(&g, 0.6, 10).unwrap().effective_count, 3);
    }

    #[test]
    fn dedup_maps_to_first_copy() {
        let a: &[i8] = &[-1, 0, 1];
        let b: &[i8] = &[1, 0, 1];
        let ds = Dataset::from_genotypes(matrix(&[a, b, a, b, a]));
        let (reduced, map) = deduplicate(&ds).unwrap();
        assert_eq!(reduced.n_snps(), 2);
        assert_eq!(map.into_iter().collect::<Vec<_>>(), vec![(2, 0), (3, 1), (4, 0)]);
    }

    #[test]
    fn rejects_bad_threshold() {
        let a: &[i8] = &[-1, 0, 1];
        assert!(cluster_snps(&matrix(&[a]), 0.0, 1).is_err());
        assert!(cluster_snps(&matrix(&[a]), 1.5, 1).is_err());
    }
}
