//! Least-squares fits of additive models, F tests and noncentrality
//! parameters.
//!
//! Every fit goes through [`FitWorkspace`], a thin QR factorisation kept as
//! an explicit orthonormal basis. The intercept and forced covariates come
//! first, SNP columns follow in insertion order. Adding a column costs one
//! re-orthogonalised Gram-Schmidt step, `O(n m)`; dropping one costs a sweep
//! of Givens rotations, `O(n m + m^2)`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::f_upper_tail;
use crate::genotype::{Dataset, GenotypeMatrix};

/// Relative residual norm below which a column counts as collinear.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Identifies a design-matrix column in errors and traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ColumnRef {
    Intercept,
    Covariate(usize),
    Snp(usize),
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnRef::Intercept => write!(f, "intercept"),
            ColumnRef::Covariate(c) => write!(f, "covariate {c}"),
            ColumnRef::Snp(j) => write!(f, "SNP {j}"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegressError {
    #[error("dataset has no trait values")]
    MissingTrait,
    #[error("genotypes contain missing values; impute first")]
    Incomplete,
    #[error("{column} is collinear with the columns already in the model")]
    Collinear { column: ColumnRef },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("{0}")]
    InvalidArgument(String),
    #[error("{column} has zero sample variance")]
    DegenerateColumn { column: ColumnRef },
}

pub type Result<T, E = RegressError> = std::result::Result<T, E>;

/// Borrowed view of the regression inputs: complete genotypes, a trait and
/// the covariate columns that models may force in.
#[derive(Debug, Clone, Copy)]
pub struct Design<'a> {
    genotypes: &'a GenotypeMatrix,
    y: &'a [f64],
    covariates: &'a [Vec<f64>],
}

impl<'a> Design<'a> {
    pub fn new(
        genotypes: &'a GenotypeMatrix,
        y: &'a [f64],
        covariates: &'a [Vec<f64>],
    ) -> Result<Self> {
        if !genotypes.is_complete() {
            return Err(RegressError::Incomplete);
        }
        let n = genotypes.n_individuals();
        if y.len() != n {
            return Err(RegressError::InvalidArgument(format!(
                "trait has {} values for {n} individuals",
                y.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(RegressError::InvalidArgument("trait has non-finite values".into()));
        }
        if covariates.iter().any(|c| c.len() != n) {
            return Err(RegressError::InvalidArgument(
                "covariate column length differs from sample size".into(),
            ));
        }
        Ok(Self {
            genotypes,
            y,
            covariates,
        })
    }

    pub fn from_dataset(dataset: &'a Dataset) -> Result<Self> {
        let y = dataset
            .trait_values
            .as_deref()
            .ok_or(RegressError::MissingTrait)?;
        let covariates = dataset.covariates.as_deref().unwrap_or(&[]);
        Self::new(&dataset.genotypes, y, covariates)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn n_snps(&self) -> usize {
        self.genotypes.n_snps()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.len()
    }

    pub fn y(&self) -> &'a [f64] {
        self.y
    }

    pub fn genotypes(&self) -> &'a GenotypeMatrix {
        self.genotypes
    }

    pub fn snp_column(&self, j: usize) -> Vec<f64> {
        self.genotypes.column_f64(j)
    }

    /// Indices of all covariate columns, the usual forced set.
    pub fn all_covariates(&self) -> Vec<usize> {
        (0..self.covariates.len()).collect()
    }

    fn column(&self, c: ColumnRef) -> Vec<f64> {
        match c {
            ColumnRef::Intercept => vec![1.0; self.n()],
            ColumnRef::Covariate(k) => self.covariates[k].clone(),
            ColumnRef::Snp(j) => self.snp_column(j),
        }
    }
}

/// The multi-index of a model: selected SNP columns plus forced covariates.
/// The intercept is always included.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ModelSpec {
    snp_indices: Vec<usize>,
    forced_indices: Vec<usize>,
}

fn strictly_increasing(v: &[usize]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

impl ModelSpec {
    pub fn new(snp_indices: Vec<usize>, forced_indices: Vec<usize>) -> Result<Self> {
        if !strictly_increasing(&snp_indices) {
            return Err(RegressError::InvalidModel(
                "SNP indices must be strictly increasing".into(),
            ));
        }
        if !strictly_increasing(&forced_indices) {
            return Err(RegressError::InvalidModel(
                "forced covariate indices must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            snp_indices,
            forced_indices,
        })
    }

    /// Sorts and de-duplicates the inputs.
    pub fn from_unsorted(mut snps: Vec<usize>, mut forced: Vec<usize>) -> Self {
        snps.sort_unstable();
        snps.dedup();
        forced.sort_unstable();
        forced.dedup();
        Self {
            snp_indices: snps,
            forced_indices: forced,
        }
    }

    pub fn null(forced_indices: Vec<usize>) -> Self {
        Self::from_unsorted(Vec::new(), forced_indices)
    }

    pub fn snp_indices(&self) -> &[usize] {
        &self.snp_indices
    }

    pub fn forced_indices(&self) -> &[usize] {
        &self.forced_indices
    }

    /// Number of selected SNPs.
    pub fn q(&self) -> usize {
        self.snp_indices.len()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.snp_indices.binary_search(&j).is_ok()
    }

    pub fn with_snp(&self, j: usize) -> Self {
        let mut s = self.snp_indices.clone();
        if let Err(pos) = s.binary_search(&j) {
            s.insert(pos, j);
        }
        Self {
            snp_indices: s,
            forced_indices: self.forced_indices.clone(),
        }
    }

    pub fn without_snp(&self, j: usize) -> Self {
        Self {
            snp_indices: self.snp_indices.iter().copied().filter(|&k| k != j).collect(),
            forced_indices: self.forced_indices.clone(),
        }
    }
}

/// Estimates attached to each design column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub intercept: f64,
    /// Aligned with the model's forced indices.
    pub covariates: Vec<f64>,
    /// Aligned with the model's (sorted) SNP indices.
    pub snps: Vec<f64>,
}

/// Result of one least-squares fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelSpec,
    pub rss: f64,
    /// Sum of squares explained beyond the intercept-plus-covariates model.
    pub mss: f64,
    pub coefficients: Coefficients,
    pub std_errors: Coefficients,
    /// F statistic for the joint nullity of the SNP coefficients.
    pub f_statistic: f64,
    pub p_value: f64,
    pub df_model: usize,
    pub df_resid: usize,
    pub perfect_fit: bool,
}

/// Upper-tail p-value of the central F distribution.
///
/// `f = +inf` gives 0; NaN, negative `f` or zero degrees of freedom are
/// errors.
pub fn f_pvalue(f: f64, df1: usize, df2: usize) -> Result<f64> {
    if f.is_nan() {
        return Err(RegressError::InvalidArgument("F statistic is NaN".into()));
    }
    if f < 0.0 {
        return Err(RegressError::InvalidArgument(format!(
            "F statistic {f} is negative"
        )));
    }
    if df1 == 0 || df2 == 0 {
        return Err(RegressError::InvalidArgument(
            "degrees of freedom must be positive".into(),
        ));
    }
    Ok(f_upper_tail(f, df1 as f64, df2 as f64))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Columns whose projections onto the basis are kept current, so the RSS
/// reduction of adding any of them is `O(m)` to evaluate.
#[derive(Debug, Clone)]
struct Tracked {
    indices: Vec<usize>,
    columns: Vec<Vec<f64>>,
    norm2: Vec<f64>,
    xty: Vec<f64>,
    proj: Vec<Vec<f64>>,
}

/// Incrementally updated QR fit of one model against a [`Design`].
#[derive(Debug, Clone)]
pub struct FitWorkspace<'a> {
    design: Design<'a>,
    columns: Vec<ColumnRef>,
    n_fixed: usize,
    forced: Vec<usize>,
    q: Vec<Vec<f64>>,
    /// `r[k]` is column `k` of the triangular factor, entries `0..=k`.
    r: Vec<Vec<f64>>,
    qty: Vec<f64>,
    resid: Vec<f64>,
    yty: f64,
    rss_null: f64,
    tracked: Option<Tracked>,
}

impl<'a> FitWorkspace<'a> {
    /// Workspace holding the intercept and the given forced covariates.
    pub fn new(design: Design<'a>, forced: &[usize]) -> Result<Self> {
        if !strictly_increasing(forced) {
            return Err(RegressError::InvalidModel(
                "forced covariate indices must be strictly increasing".into(),
            ));
        }
        if let Some(&c) = forced.iter().find(|&&c| c >= design.n_covariates()) {
            return Err(RegressError::InvalidModel(format!(
                "covariate {c} does not exist"
            )));
        }
        let y = design.y();
        let mut ws = Self {
            design,
            columns: Vec::new(),
            n_fixed: 0,
            forced: forced.to_vec(),
            q: Vec::new(),
            r: Vec::new(),
            qty: Vec::new(),
            resid: y.to_vec(),
            yty: dot(y, y),
            rss_null: 0.0,
            tracked: None,
        };
        ws.push_column(ColumnRef::Intercept)?;
        for &c in forced {
            ws.push_column(ColumnRef::Covariate(c))?;
        }
        ws.n_fixed = ws.columns.len();
        ws.rss_null = ws.rss();
        Ok(ws)
    }

    pub fn from_model(design: Design<'a>, model: &ModelSpec) -> Result<Self> {
        let mut ws = Self::new(design, model.forced_indices())?;
        for &j in model.snp_indices() {
            ws.add_snp(j)?;
        }
        Ok(ws)
    }

    pub fn design(&self) -> Design<'a> {
        self.design
    }

    pub fn rss(&self) -> f64 {
        dot(&self.resid, &self.resid)
    }

    /// RSS of the intercept-plus-forced-covariates model.
    pub fn rss_null(&self) -> f64 {
        self.rss_null
    }

    /// False when the trait is (numerically) explained by the intercept and
    /// forced covariates alone, so no SNP can carry signal.
    pub fn has_signal(&self) -> bool {
        self.rss_null > 1e-20 * self.yty
    }

    /// Number of SNP columns in the model.
    pub fn q(&self) -> usize {
        self.columns.len() - self.n_fixed
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn forced(&self) -> &[usize] {
        &self.forced
    }

    pub fn contains_snp(&self, j: usize) -> bool {
        self.columns[self.n_fixed..].contains(&ColumnRef::Snp(j))
    }

    /// SNP indices in insertion order.
    pub fn snps(&self) -> Vec<usize> {
        self.columns[self.n_fixed..]
            .iter()
            .map(|c| match c {
                ColumnRef::Snp(j) => *j,
                _ => unreachable!("only SNP columns follow the fixed block"),
            })
            .collect()
    }

    pub fn model(&self) -> ModelSpec {
        ModelSpec::from_unsorted(self.snps(), self.forced.clone())
    }

    /// Projection of `x` onto the residual space of the model, computed with
    /// two Gram-Schmidt passes. Returns the residual vector and `Q'x`.
    fn orthogonalize(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut v = x.to_vec();
        let mut coef = vec![0.0; self.q.len()];
        for _ in 0..2 {
            for (k, qk) in self.q.iter().enumerate() {
                let c = dot(qk, &v);
                coef[k] += c;
                axpy(-c, qk, &mut v);
            }
        }
        (v, coef)
    }

    fn push_column(&mut self, column: ColumnRef) -> Result<()> {
        if self.columns.len() + 1 >= self.design.n() {
            return Err(RegressError::InvalidModel(format!(
                "adding {column} leaves no residual degrees of freedom"
            )));
        }
        let x = self.design.column(column);
        let norm = dot(&x, &x).sqrt();
        let (mut v, coef) = self.orthogonalize(&x);
        let vnorm = dot(&v, &v).sqrt();
        if !(vnorm > RANK_TOLERANCE * norm) || norm == 0.0 {
            return Err(RegressError::Collinear { column });
        }
        v.iter_mut().for_each(|e| *e /= vnorm);
        let qty_new = dot(&v, &self.resid);
        axpy(-qty_new, &v, &mut self.resid);
        if let Some(t) = self.tracked.as_mut() {
            for (proj, col) in t.proj.iter_mut().zip(&t.columns) {
                proj.push(dot(&v, col));
            }
        }
        let mut rcol = coef;
        rcol.push(vnorm);
        self.r.push(rcol);
        self.q.push(v);
        self.qty.push(qty_new);
        self.columns.push(column);
        Ok(())
    }

    /// Adds SNP `j`. Collinear columns are rejected and leave the workspace
    /// unchanged.
    pub fn add_snp(&mut self, j: usize) -> Result<()> {
        if j >= self.design.n_snps() {
            return Err(RegressError::InvalidModel(format!("SNP {j} does not exist")));
        }
        if self.contains_snp(j) {
            return Err(RegressError::InvalidModel(format!(
                "SNP {j} is already in the model"
            )));
        }
        self.push_column(ColumnRef::Snp(j))
    }

    /// Removes SNP `j`, restoring the triangular factor with Givens
    /// rotations.
    pub fn drop_snp(&mut self, j: usize) -> Result<()> {
        let pos = self.columns[self.n_fixed..]
            .iter()
            .position(|&c| c == ColumnRef::Snp(j))
            .map(|p| p + self.n_fixed)
            .ok_or_else(|| RegressError::InvalidModel(format!("SNP {j} is not in the model")))?;
        self.columns.remove(pos);
        self.r.remove(pos);
        let m = self.q.len();
        // Columns pos.. of r now carry one sub-diagonal entry each.
        for i in pos..m - 1 {
            let a = self.r[i][i];
            let b = self.r[i][i + 1];
            let h = a.hypot(b);
            let (c, s) = if h == 0.0 { (1.0, 0.0) } else { (a / h, b / h) };
            for col in self.r[i..].iter_mut() {
                let (u, w) = (col[i], col[i + 1]);
                col[i] = c * u + s * w;
                col[i + 1] = -s * u + c * w;
            }
            self.r[i].truncate(i + 1);
            let (left, right) = self.q.split_at_mut(i + 1);
            let (qi, qn) = (&mut left[i], &mut right[0]);
            for (u, w) in qi.iter_mut().zip(qn.iter_mut()) {
                let (a0, b0) = (*u, *w);
                *u = c * a0 + s * b0;
                *w = -s * a0 + c * b0;
            }
            let (u, w) = (self.qty[i], self.qty[i + 1]);
            self.qty[i] = c * u + s * w;
            self.qty[i + 1] = -s * u + c * w;
            if let Some(t) = self.tracked.as_mut() {
                for p in t.proj.iter_mut() {
                    let (u, w) = (p[i], p[i + 1]);
                    p[i] = c * u + s * w;
                    p[i + 1] = -s * u + c * w;
                }
            }
        }
        let q_last = self.q.pop().expect("non-empty basis");
        let qty_last = self.qty.pop().expect("non-empty basis");
        axpy(qty_last, &q_last, &mut self.resid);
        if let Some(t) = self.tracked.as_mut() {
            for p in t.proj.iter_mut() {
                p.pop();
            }
        }
        if let Some(last) = self.r.last_mut() {
            last.truncate(self.q.len());
        }
        Ok(())
    }

    /// Reduction in RSS from adding column `x`, or `None` when `x` is
    /// collinear with the model.
    pub fn add_gain(&self, x: &[f64]) -> Option<f64> {
        let norm2 = dot(x, x);
        if norm2 == 0.0 {
            return None;
        }
        let proj: Vec<f64> = self.q.iter().map(|qk| dot(qk, x)).collect();
        let v2 = norm2 - dot(&proj, &proj);
        if v2 > 1e-8 * norm2 {
            let xr = dot(x, &self.resid);
            return Some(xr * xr / v2);
        }
        let (v, _) = self.orthogonalize(x);
        let v2 = dot(&v, &v);
        if !(v2.sqrt() > RANK_TOLERANCE * norm2.sqrt()) {
            return None;
        }
        let vr = dot(&v, &self.resid);
        Some(vr * vr / v2)
    }

    /// Current residual vector `y - X beta`.
    pub fn residuals(&self) -> &[f64] {
        &self.resid
    }

    /// Component of `x` orthogonal to every column of the model.
    pub fn residualize(&self, x: &[f64]) -> Vec<f64> {
        self.orthogonalize(x).0
    }

    /// RSS reduction of adding SNP `j` (`None` if collinear).
    pub fn snp_add_gain(&self, j: usize) -> Option<f64> {
        self.add_gain(&self.design.snp_column(j))
    }

    /// Keeps projections of the listed SNP columns current through later
    /// adds and drops, for fast [`Self::tracked_gains`].
    pub fn track(&mut self, indices: &[usize]) {
        let columns: Vec<Vec<f64>> = indices.iter().map(|&j| self.design.snp_column(j)).collect();
        let norm2 = columns.iter().map(|c| dot(c, c)).collect();
        let y = self.design.y();
        let xty = columns.iter().map(|c| dot(c, y)).collect();
        let proj = columns
            .iter()
            .map(|c| self.q.iter().map(|qk| dot(qk, c)).collect())
            .collect();
        self.tracked = Some(Tracked {
            indices: indices.to_vec(),
            columns,
            norm2,
            xty,
            proj,
        });
    }

    /// RSS reduction for each tracked SNP not in the model; `None` marks a
    /// collinear candidate.
    pub fn tracked_gains(&self) -> Vec<(usize, Option<f64>)> {
        let Some(t) = self.tracked.as_ref() else {
            return Vec::new();
        };
        let in_model: std::collections::HashSet<usize> = self.snps().into_iter().collect();
        let mut out = Vec::with_capacity(t.indices.len());
        for k in 0..t.indices.len() {
            let j = t.indices[k];
            if in_model.contains(&j) {
                continue;
            }
            let norm2 = t.norm2[k];
            let v2 = norm2 - dot(&t.proj[k], &t.proj[k]);
            let gain = if norm2 > 0.0 && v2 > 1e-8 * norm2 {
                let xr = t.xty[k] - dot(&t.proj[k], &self.qty);
                Some(xr * xr / v2)
            } else {
                self.add_gain(&t.columns[k])
            };
            out.push((j, gain));
        }
        out
    }

    /// Solves `R beta = Q'y`; coefficients in workspace column order.
    fn beta(&self) -> Vec<f64> {
        let m = self.q.len();
        let mut beta = self.qty.clone();
        for i in (0..m).rev() {
            let mut s = beta[i];
            for k in i + 1..m {
                s -= self.r[k][i] * beta[k];
            }
            beta[i] = s / self.r[i][i];
        }
        beta
    }

    /// Row `k` of `R^{-1}` (entries `k..m`).
    fn rinv_row(&self, k: usize) -> Vec<f64> {
        let m = self.q.len();
        let mut z = vec![0.0; m];
        z[k] = 1.0 / self.r[k][k];
        for l in k + 1..m {
            let mut s = 0.0;
            for i in k..l {
                s += z[i] * self.r[l][i];
            }
            z[l] = -s / self.r[l][l];
        }
        z
    }

    /// RSS increase from dropping each SNP, as `(index, loss)` in insertion
    /// order.
    pub fn drop_losses(&self) -> Vec<(usize, f64)> {
        let beta = self.beta();
        (self.n_fixed..self.q.len())
            .map(|k| {
                let z = self.rinv_row(k);
                let w = dot(&z[k..], &z[k..]);
                let j = match self.columns[k] {
                    ColumnRef::Snp(j) => j,
                    _ => unreachable!(),
                };
                (j, beta[k] * beta[k] / w)
            })
            .collect()
    }

    /// Full fit summary for the current model.
    pub fn result(&self) -> FitResult {
        let n = self.design.n();
        let m = self.q.len();
        let rss = self.rss();
        let df_model = self.q();
        let df_resid = n - m;
        let beta = self.beta();
        let sigma2 = rss / df_resid as f64;
        let se: Vec<f64> = (0..m)
            .map(|k| {
                let z = self.rinv_row(k);
                (sigma2 * dot(&z[k..], &z[k..])).sqrt()
            })
            .collect();

        let no_signal = !self.has_signal();
        let mss = if no_signal {
            0.0
        } else {
            (self.rss_null - rss).max(0.0)
        };
        let perfect_fit = !no_signal && df_model > 0 && rss <= 1e-20 * self.rss_null;
        let (f_statistic, p_value) = if no_signal || df_model == 0 {
            (0.0, 1.0)
        } else if perfect_fit {
            (f64::INFINITY, 0.0)
        } else {
            let f = df_resid as f64 * mss / (df_model as f64 * rss);
            (f, f_upper_tail(f, df_model as f64, df_resid as f64))
        };

        let model = self.model();
        let split = |v: &[f64]| {
            let covariates = v[1..self.n_fixed].to_vec();
            let mut snps: Vec<(usize, f64)> = self.snps().into_iter().zip(v[self.n_fixed..].iter().copied()).collect();
            snps.sort_by_key(|&(j, _)| j);
            Coefficients {
                intercept: v[0],
                covariates,
                snps: snps.into_iter().map(|(_, b)| b).collect(),
            }
        };
        FitResult {
            coefficients: split(&beta),
            std_errors: split(&se),
            model,
            rss,
            mss,
            f_statistic,
            p_value,
            df_model,
            df_resid,
            perfect_fit,
        }
    }

    /// Adds SNP `j` and returns the updated fit.
    pub fn refit_add(&mut self, j: usize) -> Result<FitResult> {
        self.add_snp(j)?;
        Ok(self.result())
    }

    /// Drops SNP `j` and returns the updated fit.
    pub fn refit_drop(&mut self, j: usize) -> Result<FitResult> {
        self.drop_snp(j)?;
        Ok(self.result())
    }
}

/// Least-squares fit of `model` on `design`.
pub fn fit_design(design: Design<'_>, model: &ModelSpec) -> Result<FitResult> {
    Ok(FitWorkspace::from_model(design, model)?.result())
}

/// Least-squares fit of `model` on the dataset's trait.
pub fn fit(dataset: &Dataset, model: &ModelSpec) -> Result<FitResult> {
    fit_design(Design::from_dataset(dataset)?, model)
}

/// Partial F test for removing the covariate `block` from `model`.
/// Returns `(f, p_value)`.
pub fn block_f_test(dataset: &Dataset, model: &ModelSpec, block: &[usize]) -> Result<(f64, f64)> {
    block_f_test_design(Design::from_dataset(dataset)?, model, block)
}

pub fn block_f_test_design(
    design: Design<'_>,
    model: &ModelSpec,
    block: &[usize],
) -> Result<(f64, f64)> {
    if block.is_empty() {
        return Err(RegressError::InvalidArgument("block is empty".into()));
    }
    if let Some(c) = block.iter().find(|c| !model.forced_indices().contains(c)) {
        return Err(RegressError::InvalidArgument(format!(
            "covariate {c} is not forced into the model"
        )));
    }
    let full = FitWorkspace::from_model(design, model)?;
    let reduced_forced: Vec<usize> = model
        .forced_indices()
        .iter()
        .copied()
        .filter(|c| !block.contains(c))
        .collect();
    let reduced = FitWorkspace::from_model(
        design,
        &ModelSpec::new(model.snp_indices().to_vec(), reduced_forced)?,
    )?;
    let rss_full = full.rss();
    let df_resid = design.n() - full.n_columns();
    let extra = (reduced.rss() - rss_full).max(0.0);
    let df1 = block.len();
    if rss_full <= 1e-20 * reduced.rss() {
        return Ok(if extra > 0.0 { (f64::INFINITY, 0.0) } else { (0.0, 1.0) });
    }
    let f = (extra / df1 as f64) / (rss_full / df_resid as f64);
    Ok((f, f_upper_tail(f, df1 as f64, df_resid as f64)))
}

/// Causal SNPs and their effects: a generating additive model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectModel {
    pub snp_indices: Vec<usize>,
    pub effects: Vec<f64>,
}

impl EffectModel {
    pub fn new(snp_indices: Vec<usize>, effects: Vec<f64>) -> Result<Self> {
        if snp_indices.len() != effects.len() {
            return Err(RegressError::InvalidArgument(format!(
                "{} causal SNPs but {} effects",
                snp_indices.len(),
                effects.len()
            )));
        }
        if effects.iter().any(|b| !b.is_finite()) {
            return Err(RegressError::InvalidArgument("effects must be finite".into()));
        }
        Ok(Self {
            snp_indices,
            effects,
        })
    }
}

/// Noncentrality parameters of the model and residual sums of squares of a
/// single-marker F test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoncentralityPair {
    pub nu_m: f64,
    pub nu_r: f64,
}

/// The two additive pieces of `sqrt(nu_m)`: the tested SNP's own effect and
/// the effects that leak in through its sample covariance with the causal
/// SNPs. `sqrt(nu_m) = |own + cross|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NcpDecomposition {
    pub own: f64,
    pub cross: f64,
}

/// Centered cross-product `sum (a - mean a)(b - mean b)` of two code columns,
/// exact in integer arithmetic.
fn centered_cross(a: &[i8], b: &[i8]) -> f64 {
    let n = a.len() as i64;
    let (mut sa, mut sb, mut sab) = (0i64, 0i64, 0i64);
    for (&x, &y) in a.iter().zip(b) {
        sa += x as i64;
        sb += y as i64;
        sab += x as i64 * y as i64;
    }
    (n * sab - sa * sb) as f64 / n as f64
}

fn check_truth(g: &GenotypeMatrix, truth: &EffectModel, sigma: f64, j: usize) -> Result<()> {
    if !(sigma > 0.0) {
        return Err(RegressError::InvalidArgument("sigma must be positive".into()));
    }
    if j >= g.n_snps() || truth.snp_indices.iter().any(|&l| l >= g.n_snps()) {
        return Err(RegressError::InvalidArgument("SNP index out of range".into()));
    }
    if std::iter::once(&j)
        .chain(&truth.snp_indices)
        .any(|&l| g.column_has_missing(l))
    {
        return Err(RegressError::Incomplete);
    }
    Ok(())
}

/// Noncentrality parameters of `MSS_j / sigma^2` and `RSS_j / sigma^2` for
/// the single-marker model of SNP `j` when `truth` generates the trait.
///
/// With sample covariances `Cov` and variances `Var` (denominator `n - 1`):
///
/// ```text
/// nu_m = (n-1) (sum_l b_l Cov(x_j, x_l))^2 / (sigma^2 Var(x_j))
/// nu_r = (n-1) sum_{l,r != j} b_l b_r (Cov(x_l, x_r) - Cov(x_l, x_j) Cov(x_r, x_j) / Var(x_j)) / sigma^2
/// ```
///
/// which equal `b'X'(P_j - E/n)Xb / sigma^2` and `b'X'(I - P_j)Xb / sigma^2`.
pub fn noncentrality_single_marker(
    g: &GenotypeMatrix,
    truth: &EffectModel,
    sigma: f64,
    j: usize,
) -> Result<NoncentralityPair> {
    check_truth(g, truth, sigma, j)?;
    let xj = g.column(j);
    let sjj = centered_cross(xj, xj);
    if sjj <= 0.0 {
        return Err(RegressError::DegenerateColumn {
            column: ColumnRef::Snp(j),
        });
    }
    let s2 = sigma * sigma;
    let sjl: Vec<f64> = truth
        .snp_indices
        .iter()
        .map(|&l| centered_cross(xj, g.column(l)))
        .collect();
    let signal: f64 = truth.effects.iter().zip(&sjl).map(|(b, s)| b * s).sum();
    let nu_m = signal * signal / (s2 * sjj);

    let others: Vec<usize> = (0..truth.snp_indices.len())
        .filter(|&a| truth.snp_indices[a] != j)
        .collect();
    let mut nu_r = 0.0;
    for &a in &others {
        let xa = g.column(truth.snp_indices[a]);
        for &b in &others {
            let slr = centered_cross(xa, g.column(truth.snp_indices[b]));
            nu_r += truth.effects[a] * truth.effects[b] * (slr - sjl[a] * sjl[b] / sjj);
        }
    }
    nu_r /= s2;
    Ok(NoncentralityPair {
        nu_m: nu_m.max(0.0),
        nu_r: nu_r.max(0.0),
    })
}

/// Splits `sqrt(nu_m)` for SNP `j` into own-effect and cross-correlation
/// terms.
pub fn ncp_decomposition(
    g: &GenotypeMatrix,
    truth: &EffectModel,
    sigma: f64,
    j: usize,
) -> Result<NcpDecomposition> {
    check_truth(g, truth, sigma, j)?;
    let xj = g.column(j);
    let sjj = centered_cross(xj, xj);
    if sjj <= 0.0 {
        return Err(RegressError::DegenerateColumn {
            column: ColumnRef::Snp(j),
        });
    }
    let mut own = 0.0;
    let mut cross = 0.0;
    for (&l, &b) in truth.snp_indices.iter().zip(&truth.effects) {
        if l == j {
            own += b * sjj.sqrt() / sigma;
        } else {
            cross += b * centered_cross(xj, g.column(l)) / (sigma * sjj.sqrt());
        }
    }
    Ok(NcpDecomposition { own, cross })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (GenotypeMatrix, Vec<f64>) {
        let g = GenotypeMatrix::from_columns(vec![vec![-1, 0, 0, 1], vec![-1, 0, 0, 1]]).unwrap();
        (g, vec![1.0, 2.0, 3.0, 4.0])
    }

    #[test]
    fn hand_computed_single_snp_fit() {
        let (g, y) = toy();
        let d = Design::new(&g, &y, &[]).unwrap();
        let fit = fit_design(d, &ModelSpec::new(vec![0], vec![]).unwrap()).unwrap();
        assert!((fit.coefficients.intercept - 2.5).abs() < 1e-14);
        assert!((fit.coefficients.snps[0] - 1.5).abs() < 1e-14);
        assert!((fit.rss - 0.5).abs() < 1e-13);
        assert!((fit.mss - 4.5).abs() < 1e-13);
        assert!((fit.f_statistic - 18.0).abs() < 1e-11);
        assert!((fit.p_value - 0.051_316_701_949_486_2).abs() < 1e-10);
        assert_eq!((fit.df_model, fit.df_resid), (1, 2));
    }

    #[test]
    fn constant_trait_has_no_signal() {
        let (g, _) = toy();
        let y = vec![3.0; 4];
        let d = Design::new(&g, &y, &[]).unwrap();
        let fit = fit_design(d, &ModelSpec::new(vec![0], vec![]).unwrap()).unwrap();
        assert_eq!(fit.mss, 0.0);
        assert_eq!(fit.f_statistic, 0.0);
        assert_eq!(fit.p_value, 1.0);
    }

    #[test]
    fn duplicated_column_is_collinear() {
        let (g, y) = toy();
        let d = Design::new(&g, &y, &[]).unwrap();
        let err = fit_design(d, &ModelSpec::new(vec![0, 1], vec![]).unwrap()).unwrap_err();
        assert_eq!(
            err,
            RegressError::Collinear {
                column: ColumnRef::Snp(1)
            }
        );
        let mut ws = FitWorkspace::from_model(d, &ModelSpec::new(vec![0], vec![]).unwrap()).unwrap();
        assert!(ws.add_snp(1).is_err());
        // The failed add leaves the workspace usable.
        assert_eq!(ws.q(), 1);
        assert!((ws.rss() - 0.5).abs() < 1e-13);
    }

    #[test]
    fn perfect_fit_flagged() {
        let g = GenotypeMatrix::from_columns(vec![vec![-1, 0, 1, 0, 1]]).unwrap();
        let y: Vec<f64> = g.column_f64(0).iter().map(|x| 2.0 * x + 1.0).collect();
        let d = Design::new(&g, &y, &[]).unwrap();
        let fit = fit_design(d, &ModelSpec::new(vec![0], vec![]).unwrap()).unwrap();
        assert!(fit.perfect_fit);
        assert_eq!(fit.p_value, 0.0);
    }

    #[test]
    fn f_pvalue_contract() {
        assert_eq!(f_pvalue(0.0, 3, 10).unwrap(), 1.0);
        assert_eq!(f_pvalue(f64::INFINITY, 3, 10).unwrap(), 0.0);
        assert!(f_pvalue(f64::NAN, 3, 10).is_err());
        assert!(f_pvalue(1.0, 0, 10).is_err());
        let p = f_pvalue(18.0, 1, 2).unwrap();
        assert!((p - 0.051_316_701_949_486_2).abs() < 1e-12);
    }

    #[test]
    fn model_spec_validation() {
        assert!(ModelSpec::new(vec![2, 1], vec![]).is_err());
        assert!(ModelSpec::new(vec![1, 1], vec![]).is_err());
        let m = ModelSpec::from_unsorted(vec![5, 1, 5], vec![]);
        assert_eq!(m.snp_indices(), &[1, 5]);
        assert_eq!(m.with_snp(3).snp_indices(), &[1, 3, 5]);
        assert_eq!(m.without_snp(1).snp_indices(), &[5]);
    }

    #[test]
    fn oversized_model_rejected() {
        let (g, y) = toy();
        let covs = vec![vec![0.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 0.0]];
        let d = Design::new(&g, &y, &covs).unwrap();
        let err = fit_design(d, &ModelSpec::new(vec![0], vec![0, 1]).unwrap()).unwrap_err();
        assert!(matches!(err, RegressError::InvalidModel(_)));
    }

    #[test]
    fn null_noncentrality_is_zero() {
        let g = GenotypeMatrix::from_columns(vec![vec![-1, 0, 1, 0, 1], vec![1, 1, 0, -1, 0]]).unwrap();
        let truth = EffectModel::new(vec![0, 1], vec![0.0, 0.0]).unwrap();
        let pair = noncentrality_single_marker(&g, &truth, 1.0, 0).unwrap();
        assert_eq!(pair, NoncentralityPair { nu_m: 0.0, nu_r: 0.0 });
    }

    #[test]
    fn degenerate_tested_column() {
        let g = GenotypeMatrix::from_columns(vec![vec![0, 0, 0], vec![1, 0, -1]]).unwrap();
        let truth = EffectModel::new(vec![1], vec![1.0]).unwrap();
        assert!(matches!(
            noncentrality_single_marker(&g, &truth, 1.0, 0),
            Err(RegressError::DegenerateColumn { .. })
        ));
    }
}
