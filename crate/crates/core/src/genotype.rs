//! Genotype datasets: loading, validation, imputation and column statistics.
//!
//! Genotypes are coded `x = (minor allele count) - 1`, so every observed
//! entry is one of -1, 0 or 1. Matrices are stored column-major because every
//! consumer (scans, regressions, clustering) walks SNP columns.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tokens read as a missing genotype.
pub const MISSING_TOKENS: [&str; 2] = ["NA", "."];

#[derive(Debug, Error)]
pub enum GenotypeError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{what}, line {line}: {message}")]
    Parse {
        what: &'static str,
        line: usize,
        message: String,
    },
    #[error("{what} is empty")]
    Empty { what: &'static str },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid genotype code {value} at individual {individual}, SNP {snp}")]
    InvalidCode {
        individual: usize,
        snp: usize,
        value: i64,
    },
    #[error("SNP {snp} has missing genotypes; impute first")]
    Incomplete { snp: String },
    #[error("SNP {snp} has no observed genotypes, cannot impute")]
    Imputation { snp: String },
    #[error("column {column} has zero sample variance")]
    DegenerateColumn { column: usize },
    #[error("{0}")]
    InvalidArgument(String),
}

pub type Result<T, E = GenotypeError> = std::result::Result<T, E>;

/// An `n x p` matrix of genotype codes with a missing-value mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenotypeMatrix {
    n: usize,
    p: usize,
    // Column-major; missing entries hold 0.
    values: Vec<i8>,
    missing: Vec<bool>,
}

impl GenotypeMatrix {
    /// Builds a complete matrix from SNP columns.
    pub fn from_columns(columns: Vec<Vec<i8>>) -> Result<Self> {
        let options = columns
            .into_iter()
            .map(|c| c.into_iter().map(Some).collect())
            .collect();
        Self::from_column_options(options)
    }

    /// Builds a matrix from SNP columns where `None` marks a missing entry.
    pub fn from_column_options(columns: Vec<Vec<Option<i8>>>) -> Result<Self> {
        let p = columns.len();
        if p == 0 {
            return Err(GenotypeError::Empty { what: "genotype matrix" });
        }
        let n = columns[0].len();
        if n < 2 {
            return Err(GenotypeError::Dimension(format!(
                "need at least 2 individuals, got {n}"
            )));
        }
        let mut values = Vec::with_capacity(n * p);
        let mut missing = Vec::with_capacity(n * p);
        for (j, col) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(GenotypeError::Dimension(format!(
                    "SNP column {j} has {} entries, expected {n}",
                    col.len()
                )));
            }
            for (i, v) in col.iter().enumerate() {
                match v {
                    Some(code @ -1..=1) => {
                        values.push(*code);
                        missing.push(false);
                    }
                    Some(other) => {
                        return Err(GenotypeError::InvalidCode {
                            individual: i,
                            snp: j,
                            value: *other as i64,
                        })
                    }
                    None => {
                        values.push(0);
                        missing.push(true);
                    }
                }
            }
        }
        Ok(Self {
            n,
            p,
            values,
            missing,
        })
    }

    /// Builds a matrix from individual rows.
    pub fn from_rows(rows: &[Vec<Option<i8>>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(GenotypeError::Empty { what: "genotype matrix" });
        }
        let p = rows[0].len();
        if let Some((i, _)) = rows.iter().enumerate().find(|(_, r)| r.len() != p) {
            return Err(GenotypeError::Dimension(format!(
                "row {i} has {} entries, expected {p}",
                rows[i].len()
            )));
        }
        let columns = (0..p)
            .map(|j| rows.iter().map(|r| r[j]).collect())
            .collect();
        Self::from_column_options(columns)
    }

    pub fn n_individuals(&self) -> usize {
        self.n
    }

    pub fn n_snps(&self) -> usize {
        self.p
    }

    pub fn get(&self, individual: usize, snp: usize) -> Option<i8> {
        let k = snp * self.n + individual;
        if self.missing[k] {
            None
        } else {
            Some(self.values[k])
        }
    }

    /// Raw codes of column `j`; missing entries read as 0.
    pub fn column(&self, j: usize) -> &[i8] {
        &self.values[j * self.n..(j + 1) * self.n]
    }

    pub fn missing_column(&self, j: usize) -> &[bool] {
        &self.missing[j * self.n..(j + 1) * self.n]
    }

    pub fn column_has_missing(&self, j: usize) -> bool {
        self.missing_column(j).iter().any(|&m| m)
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    pub fn is_complete(&self) -> bool {
        !self.missing.iter().any(|&m| m)
    }

    /// Column `j` as floating point. Missing entries read as 0.
    pub fn column_f64(&self, j: usize) -> Vec<f64> {
        self.column(j).iter().map(|&v| v as f64).collect()
    }

    /// Keeps the listed columns, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Self {
        let mut values = Vec::with_capacity(columns.len() * self.n);
        let mut missing = Vec::with_capacity(columns.len() * self.n);
        for &j in columns {
            values.extend_from_slice(self.column(j));
            missing.extend_from_slice(self.missing_column(j));
        }
        Self {
            n: self.n,
            p: columns.len(),
            values,
            missing,
        }
    }

    /// Minor allele frequency of a complete column.
    pub fn minor_allele_frequency(&self, j: usize) -> Result<f64> {
        if self.column_has_missing(j) {
            return Err(GenotypeError::Incomplete {
                snp: format!("column {j}"),
            });
        }
        Ok(minor_allele_frequency(self.column(j)))
    }

    /// Pearson correlation of two complete columns.
    pub fn correlation(&self, a: usize, b: usize) -> Result<f64> {
        let mask_a = self.missing_column(a);
        let mask_b = self.missing_column(b);
        if mask_a.iter().any(|&m| m) {
            return Err(GenotypeError::Incomplete {
                snp: format!("column {a}"),
            });
        }
        if mask_b.iter().any(|&m| m) {
            return Err(GenotypeError::Incomplete {
                snp: format!("column {b}"),
            });
        }
        let stats = PairSums::complete(self.column(a), self.column(b));
        stats
            .correlation()
            .ok_or(GenotypeError::DegenerateColumn {
                column: if stats.var_a() <= 0.0 { a } else { b },
            })
    }
}

/// Minor allele frequency of a complete column of codes.
///
/// With `f = (sum(x) + n) / (2n)` the allele frequency implied by the coding,
/// returns `min(f, 1 - f)`.
pub fn minor_allele_frequency(column: &[i8]) -> f64 {
    let n = column.len() as f64;
    let sum: i64 = column.iter().map(|&v| v as i64).sum();
    let f = (sum as f64 + n) / (2.0 * n);
    f.min(1.0 - f)
}

/// Sample variance with the `n - 1` denominator.
pub fn sample_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Sample covariance with the `n - 1` denominator.
pub fn sample_covariance(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - mx) * (b - my))
        .sum::<f64>()
        / (n - 1.0)
}

/// Pearson correlation of two complete columns.
///
/// Errors with [`GenotypeError::DegenerateColumn`] (index 0 or 1 for the
/// first or second argument) when either has zero variance.
pub fn sample_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(GenotypeError::Dimension(format!(
            "columns have {} and {} entries",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        saa += dx * dx;
        sbb += dy * dy;
        sab += dx * dy;
    }
    // Rounding can leave a tiny positive sum for a constant column.
    let tol = 1e-24 * n;
    if saa <= tol * ma.abs().max(1.0).powi(2) {
        return Err(GenotypeError::DegenerateColumn { column: 0 });
    }
    if sbb <= tol * mb.abs().max(1.0).powi(2) {
        return Err(GenotypeError::DegenerateColumn { column: 1 });
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Exact integer sums for a pair of genotype columns.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct PairSums {
    n: i64,
    sa: i64,
    sb: i64,
    saa: i64,
    sbb: i64,
    sab: i64,
}

impl PairSums {
    pub(crate) fn complete(a: &[i8], b: &[i8]) -> Self {
        let mut s = Self {
            n: a.len() as i64,
            ..Self::default()
        };
        for (&x, &y) in a.iter().zip(b) {
            let (x, y) = (x as i64, y as i64);
            s.sa += x;
            s.sb += y;
            s.saa += x * x;
            s.sbb += y * y;
            s.sab += x * y;
        }
        s
    }

    /// Sums over individuals observed in both columns.
    fn pairwise(a: &[i8], ma: &[bool], b: &[i8], mb: &[bool]) -> Self {
        let mut s = Self::default();
        for i in 0..a.len() {
            if ma[i] || mb[i] {
                continue;
            }
            let (x, y) = (a[i] as i64, b[i] as i64);
            s.n += 1;
            s.sa += x;
            s.sb += y;
            s.saa += x * x;
            s.sbb += y * y;
            s.sab += x * y;
        }
        s
    }

    // n * centered sums of squares, exact in integers.
    fn var_a(&self) -> f64 {
        (self.n * self.saa - self.sa * self.sa) as f64
    }

    fn var_b(&self) -> f64 {
        (self.n * self.sbb - self.sb * self.sb) as f64
    }

    pub(crate) fn correlation(&self) -> Option<f64> {
        if self.n < 2 {
            return None;
        }
        let va = self.var_a();
        let vb = self.var_b();
        if va <= 0.0 || vb <= 0.0 {
            return None;
        }
        let cov = (self.n * self.sab - self.sa * self.sb) as f64;
        Some((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
    }
}

/// Pearson correlation of two complete genotype columns, `None` when either
/// column is constant.
pub fn genotype_correlation(a: &[i8], b: &[i8]) -> Option<f64> {
    PairSums::complete(a, b).correlation()
}

/// Metadata for one SNP column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnpMeta {
    pub snp_id: String,
    pub chromosome: String,
    pub position: u64,
    pub file_order_index: usize,
}

impl SnpMeta {
    /// Placeholder metadata for column `j` of a file without a sidecar.
    pub fn placeholder(j: usize) -> Self {
        Self {
            snp_id: format!("snp{}", j + 1),
            chromosome: ".".to_string(),
            position: j as u64,
            file_order_index: j,
        }
    }
}

/// Genotypes with SNP metadata, an optional trait and optional forced-in
/// covariate columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub genotypes: GenotypeMatrix,
    pub meta: Vec<SnpMeta>,
    pub trait_values: Option<Vec<f64>>,
    /// Covariate columns, each of length `n`.
    pub covariates: Option<Vec<Vec<f64>>>,
}

impl Dataset {
    pub fn new(genotypes: GenotypeMatrix, meta: Vec<SnpMeta>) -> Result<Self> {
        if meta.len() != genotypes.n_snps() {
            return Err(GenotypeError::Dimension(format!(
                "{} metadata records for {} SNPs",
                meta.len(),
                genotypes.n_snps()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for m in &meta {
            if m.snp_id.is_empty() {
                return Err(GenotypeError::InvalidArgument("empty SNP id".into()));
            }
            if !seen.insert(m.file_order_index) {
                return Err(GenotypeError::InvalidArgument(format!(
                    "duplicate file order index {}",
                    m.file_order_index
                )));
            }
        }
        Ok(Self {
            genotypes,
            meta,
            trait_values: None,
            covariates: None,
        })
    }

    /// Dataset with placeholder metadata.
    pub fn from_genotypes(genotypes: GenotypeMatrix) -> Self {
        let meta = (0..genotypes.n_snps()).map(SnpMeta::placeholder).collect();
        Self {
            genotypes,
            meta,
            trait_values: None,
            covariates: None,
        }
    }

    pub fn with_trait(mut self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.n_individuals() {
            return Err(GenotypeError::Dimension(format!(
                "trait has {} values for {} individuals",
                values.len(),
                self.n_individuals()
            )));
        }
        self.trait_values = Some(values);
        Ok(self)
    }

    pub fn with_covariates(mut self, columns: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(c) = columns.iter().find(|c| c.len() != self.n_individuals()) {
            return Err(GenotypeError::Dimension(format!(
                "covariate column has {} values for {} individuals",
                c.len(),
                self.n_individuals()
            )));
        }
        self.covariates = if columns.is_empty() {
            None
        } else {
            Some(columns)
        };
        Ok(self)
    }

    pub fn n_individuals(&self) -> usize {
        self.genotypes.n_individuals()
    }

    pub fn n_snps(&self) -> usize {
        self.genotypes.n_snps()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.as_ref().map_or(0, Vec::len)
    }

    pub fn snp_id(&self, j: usize) -> &str {
        &self.meta[j].snp_id
    }

    /// Keeps the listed SNP columns (metadata follows; trait and covariates
    /// are kept as is).
    pub fn select_snps(&self, columns: &[usize]) -> Self {
        Self {
            genotypes: self.genotypes.select_columns(columns),
            meta: columns.iter().map(|&j| self.meta[j].clone()).collect(),
            trait_values: self.trait_values.clone(),
            covariates: self.covariates.clone(),
        }
    }
}

fn is_missing_token(tok: &str) -> bool {
    MISSING_TOKENS.contains(&tok)
}

fn parse_code(tok: &str) -> Option<i8> {
    match tok {
        "-1" => Some(-1),
        "0" => Some(0),
        "1" => Some(1),
        _ => None,
    }
}

/// Parsed genotype text: the matrix plus header ids, if present.
#[derive(Debug, Clone)]
pub struct GenotypeText {
    pub matrix: GenotypeMatrix,
    pub header: Option<Vec<String>>,
}

/// Parses the whitespace-separated genotype format.
///
/// The first line is a header of SNP ids when none of its tokens is a
/// genotype code and not all of them are missing tokens. Tokens other than
/// -1/0/1 in data rows become missing entries.
pub fn parse_genotypes(text: &str) -> Result<GenotypeText> {
    const WHAT: &str = "genotype file";
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .peekable();
    let Some(&(_, first)) = lines.peek() else {
        return Err(GenotypeError::Empty { what: WHAT });
    };
    let first_tokens: Vec<&str> = first.split_whitespace().collect();
    let is_header = first_tokens.iter().all(|t| parse_code(t).is_none())
        && !first_tokens.iter().all(|t| is_missing_token(t));
    let header = if is_header {
        lines.next();
        Some(first_tokens.iter().map(|s| s.to_string()).collect::<Vec<_>>())
    } else {
        None
    };
    let width = header.as_ref().map(Vec::len);
    let mut rows: Vec<Vec<Option<i8>>> = Vec::new();
    let mut expected = width;
    for (idx, line) in lines {
        let row: Vec<Option<i8>> = line.split_whitespace().map(parse_code).collect();
        match expected {
            None => expected = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(GenotypeError::Parse {
                    what: WHAT,
                    line: idx + 1,
                    message: format!("expected {w} genotype columns, found {}", row.len()),
                })
            }
            _ => {}
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(GenotypeError::Empty { what: WHAT });
    }
    let matrix = GenotypeMatrix::from_rows(&rows)?;
    Ok(GenotypeText { matrix, header })
}

/// Parses the metadata sidecar: `snp_id chromosome position` per line.
pub fn parse_meta(text: &str) -> Result<Vec<SnpMeta>> {
    const WHAT: &str = "SNP metadata file";
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() != 3 {
            return Err(GenotypeError::Parse {
                what: WHAT,
                line: idx + 1,
                message: format!("expected 3 fields, found {}", toks.len()),
            });
        }
        let position = toks[2].parse::<u64>().map_err(|e| GenotypeError::Parse {
            what: WHAT,
            line: idx + 1,
            message: format!("bad position {:?}: {e}", toks[2]),
        })?;
        out.push(SnpMeta {
            snp_id: toks[0].to_string(),
            chromosome: toks[1].to_string(),
            position,
            file_order_index: out.len(),
        });
    }
    if out.is_empty() {
        return Err(GenotypeError::Empty { what: WHAT });
    }
    Ok(out)
}

/// Parses a trait file: one real number per line.
pub fn parse_trait(text: &str) -> Result<Vec<f64>> {
    const WHAT: &str = "trait file";
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let tok = line.trim();
        if tok.is_empty() {
            continue;
        }
        let v = tok.parse::<f64>().map_err(|e| GenotypeError::Parse {
            what: WHAT,
            line: idx + 1,
            message: format!("bad value {tok:?}: {e}"),
        })?;
        if !v.is_finite() {
            return Err(GenotypeError::Parse {
                what: WHAT,
                line: idx + 1,
                message: "value is not finite".into(),
            });
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err(GenotypeError::Empty { what: WHAT });
    }
    Ok(out)
}

/// Parses a covariate file: `c` reals per line. Returns columns.
pub fn parse_covariates(text: &str) -> Result<Vec<Vec<f64>>> {
    const WHAT: &str = "covariate file";
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        let row = toks
            .iter()
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| GenotypeError::Parse {
                        what: WHAT,
                        line: idx + 1,
                        message: format!("bad value {t:?}"),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(GenotypeError::Parse {
                    what: WHAT,
                    line: idx + 1,
                    message: format!("expected {} values, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(GenotypeError::Empty { what: WHAT });
    }
    let c = rows[0].len();
    Ok((0..c).map(|k| rows.iter().map(|r| r[k]).collect()).collect())
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| GenotypeError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Input files for [`DatasetFiles::load`].
#[derive(Debug, Clone, Default)]
pub struct DatasetFiles {
    pub genotypes: PathBuf,
    pub meta: Option<PathBuf>,
    pub trait_values: Option<PathBuf>,
    pub covariates: Option<PathBuf>,
}

impl DatasetFiles {
    pub fn load(&self) -> Result<Dataset> {
        let parsed = parse_genotypes(&read(&self.genotypes)?)?;
        let p = parsed.matrix.n_snps();
        let meta = match (&self.meta, &parsed.header) {
            (Some(path), header) => {
                let meta = parse_meta(&read(path)?)?;
                if let Some(h) = header {
                    if let Some(j) = (0..p.min(meta.len())).find(|&j| h[j] != meta[j].snp_id) {
                        return Err(GenotypeError::Dimension(format!(
                            "header id {:?} disagrees with metadata id {:?} at column {}",
                            h[j],
                            meta[j].snp_id,
                            j + 1
                        )));
                    }
                }
                meta
            }
            (None, Some(h)) => h
                .iter()
                .enumerate()
                .map(|(j, id)| SnpMeta {
                    snp_id: id.clone(),
                    chromosome: ".".into(),
                    position: j as u64,
                    file_order_index: j,
                })
                .collect(),
            (None, None) => (0..p).map(SnpMeta::placeholder).collect(),
        };
        let mut ds = Dataset::new(parsed.matrix, meta)?;
        if let Some(path) = &self.trait_values {
            ds = ds.with_trait(parse_trait(&read(path)?)?)?;
        }
        if let Some(path) = &self.covariates {
            ds = ds.with_covariates(parse_covariates(&read(path)?)?)?;
        }
        Ok(ds)
    }
}

/// Loads a dataset from a genotype file and optional trait and covariate files.
pub fn load_dataset(
    genotype_path: &Path,
    trait_path: Option<&Path>,
    covariate_path: Option<&Path>,
) -> Result<Dataset> {
    DatasetFiles {
        genotypes: genotype_path.to_path_buf(),
        meta: None,
        trait_values: trait_path.map(Path::to_path_buf),
        covariates: covariate_path.map(Path::to_path_buf),
    }
    .load()
}

/// Writes genotypes in the text format, with a header row of SNP ids.
pub fn write_genotypes<W: Write>(mut out: W, dataset: &Dataset) -> io::Result<()> {
    let g = &dataset.genotypes;
    let ids: Vec<&str> = dataset.meta.iter().map(|m| m.snp_id.as_str()).collect();
    writeln!(out, "{}", ids.join("\t"))?;
    let mut line = String::new();
    for i in 0..g.n_individuals() {
        line.clear();
        for j in 0..g.n_snps() {
            if j > 0 {
                line.push('\t');
            }
            match g.get(i, j) {
                Some(v) => line.push_str(&v.to_string()),
                None => line.push_str("NA"),
            }
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Fills every missing genotype from correlated neighbouring SNPs.
///
/// For a missing `x_ij`, the `n_predictors` SNPs within `window` file
/// positions of `j` that are observed for individual `i` and have the largest
/// absolute (pairwise-complete) correlation with SNP `j` are chosen. Among
/// individuals matching `i` on all of them, the most frequent observed value
/// of SNP `j` is imputed; with no match, the column's most frequent value.
/// Ties between genotype values go to the smaller code; ties between
/// predictors go to the nearer SNP, then the smaller index. All statistics
/// come from the input matrix, never from values imputed in the same pass.
pub fn impute_missing(dataset: &Dataset, window: usize, n_predictors: usize) -> Result<Dataset> {
    if window == 0 || n_predictors == 0 {
        return Err(GenotypeError::InvalidArgument(
            "window and n_predictors must be at least 1".into(),
        ));
    }
    let g = &dataset.genotypes;
    if g.is_complete() {
        return Ok(dataset.clone());
    }
    let p = g.n_snps();
    let fills: Vec<Vec<(usize, i8)>> = (0..p)
        .into_par_iter()
        .map(|j| impute_column(g, j, window, n_predictors).map_err(|()| j))
        .collect::<std::result::Result<_, usize>>()
        .map_err(|j| GenotypeError::Imputation {
            snp: dataset.meta[j].snp_id.clone(),
        })?;
    let mut out = dataset.clone();
    let n = g.n_individuals();
    for (j, col) in fills.into_iter().enumerate() {
        for (i, v) in col {
            out.genotypes.values[j * n + i] = v;
            out.genotypes.missing[j * n + i] = false;
        }
    }
    Ok(out)
}

/// Most frequent code in `counts` (indexed by code + 1); ties go to the
/// smaller code. `None` when all counts are zero.
fn mode(counts: [usize; 3]) -> Option<i8> {
    let mut best: Option<(usize, i8)> = None;
    for (k, &c) in counts.iter().enumerate() {
        if c > 0 && best.is_none_or(|(bc, _)| c > bc) {
            best = Some((c, k as i8 - 1));
        }
    }
    best.map(|(_, v)| v)
}

fn impute_column(
    g: &GenotypeMatrix,
    j: usize,
    window: usize,
    n_predictors: usize,
) -> std::result::Result<Vec<(usize, i8)>, ()> {
    let col = g.column(j);
    let mask = g.missing_column(j);
    if !mask.iter().any(|&m| m) {
        return Ok(Vec::new());
    }
    let mut column_counts = [0usize; 3];
    for (v, m) in col.iter().zip(mask) {
        if !m {
            column_counts[(*v + 1) as usize] += 1;
        }
    }
    let column_mode = mode(column_counts).ok_or(())?;

    let lo = j.saturating_sub(window);
    let hi = (j + window).min(g.n_snps() - 1);
    // (|r|, distance, index) for neighbours with a defined correlation.
    let mut neighbours: Vec<(f64, usize, usize)> = (lo..=hi)
        .filter(|&l| l != j)
        .filter_map(|l| {
            PairSums::pairwise(col, mask, g.column(l), g.missing_column(l))
                .correlation()
                .map(|r| (r.abs(), l.abs_diff(j), l))
        })
        .collect();
    neighbours.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });

    let n = g.n_individuals();
    let mut fills = Vec::new();
    let mut predictors = Vec::with_capacity(n_predictors);
    for i in (0..n).filter(|&i| mask[i]) {
        predictors.clear();
        predictors.extend(
            neighbours
                .iter()
                .filter(|&&(_, _, l)| !g.missing_column(l)[i])
                .take(n_predictors)
                .map(|&(_, _, l)| l),
        );
        let mut counts = [0usize; 3];
        for other in (0..n).filter(|&o| !mask[o]) {
            let matches = predictors
                .iter()
                .all(|&l| !g.missing_column(l)[other] && g.column(l)[other] == g.column(l)[i]);
            if matches {
                counts[(col[other] + 1) as usize] += 1;
            }
        }
        fills.push((i, mode(counts).unwrap_or(column_mode)));
    }
    Ok(fills)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(text: &[&[Option<i8>]]) -> Vec<Vec<Option<i8>>> {
        text.iter().map(|r| r.to_vec()).collect()
    }

    #[test]
    fn parses_tokens_and_missing() {
        let parsed = parse_genotypes("-1 0\n1 NA\n0 0\n").unwrap();
        let g = parsed.matrix;
        assert!(parsed.header.is_none());
        assert_eq!((g.n_individuals(), g.n_snps()), (3, 2));
        assert_eq!(g.missing_count(), 1);
        assert_eq!(g.get(1, 1), None);
        assert_eq!(g.get(0, 0), Some(-1));
    }

    #[test]
    fn unknown_tokens_become_missing() {
        let g = parse_genotypes("0\t2\n1\t.\nx 0\n").unwrap().matrix;
        assert_eq!(g.missing_count(), 3);
    }

    #[test]
    fn header_row_is_detected() {
        let parsed = parse_genotypes("rs1 rs2\n0 1\n1 -1\n").unwrap();
        assert_eq!(parsed.header.unwrap(), vec!["rs1", "rs2"]);
        assert_eq!(parsed.matrix.n_individuals(), 2);
        // An all-missing first row is data.
        let parsed = parse_genotypes("NA NA\n0 1\n").unwrap();
        assert!(parsed.header.is_none());
    }

    #[test]
    fn ragged_row_reports_line() {
        let err = parse_genotypes("0 1\n1\n0 0\n").unwrap_err();
        match err {
            GenotypeError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_genotype_file_is_error() {
        assert!(matches!(
            parse_genotypes("\n  \n"),
            Err(GenotypeError::Empty { .. })
        ));
    }

    #[test]
    fn trait_length_mismatch() {
        let g = parse_genotypes("0\n1\n-1\n0\n").unwrap().matrix;
        let ds = Dataset::from_genotypes(g);
        let err = ds.with_trait(vec![1.0; 5]).unwrap_err();
        assert!(matches!(err, GenotypeError::Dimension(_)));
    }

    #[test]
    fn load_from_files() {
        let dir = tempfile::tempdir().unwrap();
        let gp = dir.path().join("g.txt");
        let tp = dir.path().join("y.txt");
        let cp = dir.path().join("c.txt");
        fs::write(&gp, "a b\n-1 0\n1 NA\n0 0\n").unwrap();
        fs::write(&tp, "1.5\n2\n-0.25\n").unwrap();
        fs::write(&cp, "1 0\n0 1\n0 0\n").unwrap();
        let ds = load_dataset(&gp, Some(&tp), Some(&cp)).unwrap();
        assert_eq!(ds.snp_id(1), "b");
        assert_eq!(ds.trait_values.as_ref().unwrap()[2], -0.25);
        assert_eq!(ds.n_covariates(), 2);

        fs::write(&tp, "1\n2\n3\n4\n5\n").unwrap();
        assert!(matches!(
            load_dataset(&gp, Some(&tp), None),
            Err(GenotypeError::Dimension(_))
        ));
        assert!(matches!(
            load_dataset(&dir.path().join("nope"), None, None),
            Err(GenotypeError::Io { .. })
        ));
    }

    #[test]
    fn meta_sidecar() {
        let meta = parse_meta("rs1 1 100\nrs2 1 250\n").unwrap();
        assert_eq!(meta[1].position, 250);
        assert_eq!(meta[1].file_order_index, 1);
        assert!(parse_meta("rs1 1\n").is_err());
    }

    #[test]
    fn write_then_parse_preserves_matrix() {
        let g = parse_genotypes("-1 0\n1 NA\n0 0\n").unwrap().matrix;
        let ds = Dataset::from_genotypes(g.clone());
        let mut buf = Vec::new();
        write_genotypes(&mut buf, &ds).unwrap();
        let back = parse_genotypes(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.matrix, g);
        assert_eq!(back.header.unwrap(), vec!["snp1", "snp2"]);
    }

    #[test]
    fn maf_examples() {
        assert_eq!(minor_allele_frequency(&[0, 0, 0, 0]), 0.5);
        assert_eq!(minor_allele_frequency(&[-1, -1, -1]), 0.0);
        assert_eq!(minor_allele_frequency(&[-1, -1, 0, 1]), 0.375);
        let g = GenotypeMatrix::from_column_options(vec![vec![Some(0), None]]).unwrap();
        assert!(matches!(
            g.minor_allele_frequency(0),
            Err(GenotypeError::Incomplete { .. })
        ));
    }

    #[test]
    fn correlation_examples() {
        let a = [-1.0, 0.0, 1.0, 0.0];
        assert!((sample_correlation(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        let r = sample_correlation(&[-1.0, 1.0, -1.0, 1.0], &[1.0, -1.0, 1.0, -1.0]).unwrap();
        assert!((r + 1.0).abs() < 1e-15);
        let r = sample_correlation(&a, &[-1.0, 1.0, 0.0, 0.0]).unwrap();
        assert!((r - 0.5).abs() < 1e-15);
        assert!(matches!(
            sample_correlation(&[1.0, 1.0, 1.0], &a[..3]),
            Err(GenotypeError::DegenerateColumn { column: 0 })
        ));
        assert_eq!(genotype_correlation(&[-1, 0, 1, 0], &[-1, 1, 0, 0]), Some(0.5));
        assert_eq!(genotype_correlation(&[1, 1, 1], &[-1, 1, 0]), None);
    }

    #[test]
    fn impute_complete_dataset_is_identity() {
        let g = GenotypeMatrix::from_columns(vec![vec![0, 1, -1], vec![1, 1, 0]]).unwrap();
        let ds = Dataset::from_genotypes(g);
        assert_eq!(impute_missing(&ds, 500, 4).unwrap(), ds);
    }

    #[test]
    fn impute_unanimous_neighbours() {
        // SNP 0 missing for individual 0; everyone shares the predictor
        // genotypes and all observed values of SNP 0 are 1.
        let r = rows(&[
            &[None, Some(0), Some(1)],
            &[Some(1), Some(0), Some(1)],
            &[Some(1), Some(0), Some(1)],
            &[Some(1), Some(0), Some(1)],
        ]);
        let ds = Dataset::from_genotypes(GenotypeMatrix::from_rows(&r).unwrap());
        let out = impute_missing(&ds, 500, 4).unwrap();
        assert_eq!(out.genotypes.get(0, 0), Some(1));
        assert!(out.genotypes.is_complete());
    }

    /// 4 individuals x 6 SNPs. Individual 3 is missing SNP 0; its genotype on
    /// the best predictors matches nobody, so the column mode of the observed
    /// values (1, 1, 0) is used: 1.
    #[test]
    fn impute_falls_back_to_column_mode() {
        let r = rows(&[
            &[Some(1), Some(1), Some(1), Some(0), Some(0), Some(-1)],
            &[Some(1), Some(1), Some(1), Some(0), Some(1), Some(-1)],
            &[Some(0), Some(0), Some(0), Some(1), Some(0), Some(0)],
            &[None, Some(-1), Some(-1), Some(-1), Some(-1), Some(1)],
        ]);
        let ds = Dataset::from_genotypes(GenotypeMatrix::from_rows(&r).unwrap());
        let out = impute_missing(&ds, 500, 4).unwrap();
        assert_eq!(out.genotypes.get(3, 0), Some(1));
    }

    #[test]
    fn impute_prefers_smaller_code_on_tie() {
        // Only one predictor (SNP 1) and both matching individuals disagree.
        let r = rows(&[
            &[None, Some(0)],
            &[Some(1), Some(0)],
            &[Some(-1), Some(0)],
            &[Some(0), Some(1)],
        ]);
        let ds = Dataset::from_genotypes(GenotypeMatrix::from_rows(&r).unwrap());
        let out = impute_missing(&ds, 500, 4).unwrap();
        assert_eq!(out.genotypes.get(0, 0), Some(-1));
    }

    #[test]
    fn impute_all_missing_column_is_error() {
        let r = rows(&[&[None, Some(0)], &[None, Some(1)]]);
        let ds = Dataset::from_genotypes(GenotypeMatrix::from_rows(&r).unwrap());
        match impute_missing(&ds, 500, 4) {
            Err(GenotypeError::Imputation { snp }) => assert_eq!(snp, "snp1"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
