#![allow(dead_code)]

use gwasms::GenotypeMatrix;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent Hardy-Weinberg columns with MAF uniform on `[lo, hi]`.
pub fn hwe_columns(rng: &mut impl Rng, n: usize, p: usize, lo: f64, hi: f64) -> Vec<Vec<i8>> {
    (0..p)
        .map(|_| {
            let f: f64 = rng.random_range(lo..=hi);
            (0..n)
                .map(|_| (rng.random_bool(f) as i8) + (rng.random_bool(f) as i8) - 1)
                .collect()
        })
        .collect()
}

/// Columns where each SNP copies an earlier one with some entries redrawn,
/// giving local correlation.
pub fn ld_columns(rng: &mut impl Rng, n: usize, p: usize) -> Vec<Vec<i8>> {
    let mut cols: Vec<Vec<i8>> = Vec::with_capacity(p);
    for _ in 0..p {
        if !cols.is_empty() && rng.random_bool(0.6) {
            let from = rng.random_range(cols.len().saturating_sub(3)..cols.len());
            let redraw: f64 = rng.random_range(0.0..0.6);
            let mut c = cols[from].clone();
            for v in c.iter_mut() {
                if rng.random_bool(redraw) {
                    *v = rng.random_range(-1..=1);
                }
            }
            cols.push(c);
        } else {
            cols.push((0..n).map(|_| rng.random_range(-1..=1)).collect());
        }
    }
    cols
}

/// Makes every column non-constant by flipping one entry.
pub fn ensure_variation(cols: &mut [Vec<i8>]) {
    for c in cols.iter_mut() {
        if c.iter().all(|&v| v == c[0]) {
            c[0] = if c[0] == 1 { 0 } else { c[0] + 1 };
        }
    }
}

pub fn matrix(cols: Vec<Vec<i8>>) -> GenotypeMatrix {
    GenotypeMatrix::from_columns(cols).unwrap()
}

pub fn normals(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// `sum_l beta_l x_l + sigma * eps`.
pub fn trait_from(g: &GenotypeMatrix, causal: &[usize], beta: &[f64], sigma: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut y: Vec<f64> = normals(rng, g.n_individuals()).into_iter().map(|e| sigma * e).collect();
    for (&j, &b) in causal.iter().zip(beta) {
        for (v, &x) in y.iter_mut().zip(g.column(j)) {
            *v += b * x as f64;
        }
    }
    y
}

/// Design `[1 | covariates | selected SNPs]` as a dense matrix.
pub fn dense_design(g: &GenotypeMatrix, covariates: &[Vec<f64>], snps: &[usize]) -> DMatrix<f64> {
    let n = g.n_individuals();
    let m = 1 + covariates.len() + snps.len();
    DMatrix::from_fn(n, m, |i, k| {
        if k == 0 {
            1.0
        } else if k <= covariates.len() {
            covariates[k - 1][i]
        } else {
            g.column(snps[k - 1 - covariates.len()])[i] as f64
        }
    })
}

/// Least-squares RSS and coefficients through an SVD solve.
pub fn ols(x: &DMatrix<f64>, y: &[f64]) -> (f64, DVector<f64>) {
    let yv = DVector::from_column_slice(y);
    let svd = x.clone().svd(true, true);
    let beta = svd.solve(&yv, 1e-12).unwrap();
    let r = &yv - x * &beta;
    (r.dot(&r), beta)
}

/// `ln q!` by direct summation.
pub fn ln_fact(q: usize) -> f64 {
    (2..=q).map(|i| (i as f64).ln()).sum()
}
