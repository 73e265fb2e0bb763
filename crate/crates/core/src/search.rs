//! Staged model search: p-value screen, multiple forward search under BIC,
//! backward elimination and stepwise selection under the chosen criterion,
//! and a final subset refinement.
//!
//! Ties on the criterion prefer the smaller model, then the lexicographically
//! smaller index set.

use std::collections::HashSet;
use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::criteria::{CriterionConfig, CriterionError, CriterionKind};
use crate::genotype::{Dataset, SnpMeta};
use crate::mtest::{scan_design, MtestError, ScanResult};
use crate::regress::{Design, FitResult, FitWorkspace, ModelSpec, RegressError, RANK_TOLERANCE};

/// Most subsets the refinement step will evaluate.
pub const SUBSET_BUDGET: usize = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error(transparent)]
    Regress(#[from] RegressError),
    #[error(transparent)]
    Criterion(#[from] CriterionError),
    #[error(transparent)]
    Mtest(#[from] MtestError),
    #[error("invalid search configuration: {0}")]
    InvalidConfig(String),
    #[error("subset refinement needs more than {limit} evaluations; lower the exhaustive size cap or the refinement trigger")]
    Budget { limit: usize },
}

pub type Result<T, E = SearchError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub screen_threshold: f64,
    pub max_forward_size: usize,
    pub criterion: CriterionConfig,
    pub refinement_trigger: usize,
    pub exhaustive_size_cap: usize,
    pub max_stepwise_iterations: usize,
    /// Run the subset-refinement stage at the end of [`select_model`].
    pub refine: bool,
}

impl SearchConfig {
    pub fn new(criterion: CriterionConfig) -> Self {
        Self {
            screen_threshold: 0.15,
            max_forward_size: 140,
            criterion,
            refinement_trigger: 25,
            exhaustive_size_cap: 5,
            max_stepwise_iterations: 1000,
            refine: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.criterion.validate()?;
        if !(self.screen_threshold > 0.0 && self.screen_threshold <= 1.0) {
            return Err(SearchError::InvalidConfig(format!(
                "screen threshold {} is outside (0, 1]",
                self.screen_threshold
            )));
        }
        if self.max_forward_size < 1 {
            return Err(SearchError::InvalidConfig(
                "max_forward_size must be at least 1".into(),
            ));
        }
        if self.exhaustive_size_cap > self.refinement_trigger {
            return Err(SearchError::InvalidConfig(
                "exhaustive_size_cap must not exceed refinement_trigger".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    Start,
    Seed,
    Add,
    Drop,
    SkipCollinear,
    Truncated,
    Fallback,
    Refine,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant");
        f.write_str(s.as_str().unwrap_or_default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub stage: String,
    pub action: Action,
    pub snp: Option<usize>,
    pub criterion_value: f64,
    pub model_size: usize,
}

/// Log of the search, one record per accepted move or notable event.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub records: Vec<TraceRecord>,
    /// Set when stepwise selection stopped at its iteration cap.
    pub truncated: bool,
}

#[derive(Serialize)]
struct TraceLine<'a> {
    stage: &'a str,
    action: Action,
    snp_id: Option<&'a str>,
    criterion_value: f64,
    model_size: usize,
}

impl SearchTrace {
    fn push(&mut self, stage: &str, action: Action, snp: Option<usize>, value: f64, size: usize) {
        self.records.push(TraceRecord {
            stage: stage.to_string(),
            action,
            snp,
            criterion_value: value,
            model_size: size,
        });
    }

    /// Records belonging to `stage`, in order.
    pub fn stage<'a>(&'a self, stage: &'a str) -> impl Iterator<Item = &'a TraceRecord> + 'a {
        self.records.iter().filter(move |r| r.stage == stage)
    }

    /// One JSON object per line. SNPs are named by `meta` when available.
    /// Infinite criterion values (saturated fits) are written as null.
    pub fn write_jsonl<W: Write>(&self, mut out: W, meta: &[SnpMeta]) -> io::Result<()> {
        let fallback: Vec<String> = self
            .records
            .iter()
            .map(|r| r.snp.map(|j| format!("snp{}", j + 1)).unwrap_or_default())
            .collect();
        for (r, fb) in self.records.iter().zip(&fallback) {
            let snp_id = r
                .snp
                .map(|j| meta.get(j).map_or(fb.as_str(), |m| m.snp_id.as_str()));
            let line = TraceLine {
                stage: &r.stage,
                action: r.action,
                snp_id,
                criterion_value: r.criterion_value,
                model_size: r.model_size,
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Criterion value with saturated fits mapped to `-inf` rather than an
/// error, so the search can still rank them.
fn criterion_value(c: &CriterionConfig, rss: f64, q: usize) -> Result<f64> {
    match c.evaluate(rss, q) {
        Ok(v) => Ok(v),
        Err(CriterionError::PerfectFit { .. }) => Ok(f64::NEG_INFINITY),
        Err(e) => Err(e.into()),
    }
}

fn clean_rss(rss: f64, rss_null: f64) -> f64 {
    if rss <= 1e-20 * rss_null {
        0.0
    } else {
        rss
    }
}

fn ws_value(ws: &FitWorkspace<'_>, c: &CriterionConfig) -> Result<f64> {
    criterion_value(c, clean_rss(ws.rss(), ws.rss_null()), ws.q())
}

/// Screened SNPs: `p < threshold`, by ascending p then index.
pub fn screen(scan: &ScanResult, threshold: f64) -> Vec<usize> {
    scan.order
        .iter()
        .copied()
        .filter(|&j| scan.p_values[j] < threshold)
        .collect()
}

fn check_n(design: &Design<'_>, config: &SearchConfig) -> Result<()> {
    config.validate()?;
    if config.criterion.n != design.n() {
        return Err(SearchError::InvalidConfig(format!(
            "criterion configured for n = {} but the data have n = {}",
            config.criterion.n,
            design.n()
        )));
    }
    Ok(())
}

/// One pass over `candidates` in order, starting from the first usable one
/// and adding each later candidate that lowers BIC (sigma unknown).
pub fn multiple_forward_search(
    design: Design<'_>,
    forced: &[usize],
    candidates: &[usize],
    config: &SearchConfig,
    trace: &mut SearchTrace,
) -> Result<ModelSpec> {
    check_n(&design, config)?;
    const STAGE: &str = "forward";
    let bic = config
        .criterion
        .with_kind(CriterionKind::Bic)
        .with_sigma(None);
    let mut ws = FitWorkspace::new(design, forced)?;
    let mut current = ws_value(&ws, &bic)?;
    trace.push(STAGE, Action::Start, None, current, 0);
    let n = design.n();
    for &j in candidates {
        if ws.q() >= config.max_forward_size || ws.n_columns() + 1 >= n {
            break;
        }
        if ws.contains_snp(j) {
            continue;
        }
        if ws.q() == 0 {
            match ws.add_snp(j) {
                Ok(()) => {
                    current = ws_value(&ws, &bic)?;
                    trace.push(STAGE, Action::Seed, Some(j), current, ws.q());
                }
                Err(RegressError::Collinear { .. }) => {
                    trace.push(STAGE, Action::SkipCollinear, Some(j), current, ws.q());
                }
                Err(e) => return Err(e.into()),
            }
            continue;
        }
        let Some(gain) = ws.snp_add_gain(j) else {
            trace.push(STAGE, Action::SkipCollinear, Some(j), current, ws.q());
            continue;
        };
        let rss = clean_rss(ws.rss() - gain, ws.rss_null());
        let value = criterion_value(&bic, rss.max(0.0), ws.q() + 1)?;
        if value < current {
            match ws.add_snp(j) {
                Ok(()) => {
                    current = ws_value(&ws, &bic)?;
                    trace.push(STAGE, Action::Add, Some(j), current, ws.q());
                }
                Err(RegressError::Collinear { .. }) => {
                    trace.push(STAGE, Action::SkipCollinear, Some(j), current, ws.q());
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(ws.model())
}

/// Best single drop as `(snp, criterion after the drop)`; ties drop the
/// larger index.
fn best_drop(ws: &FitWorkspace<'_>, c: &CriterionConfig) -> Result<Option<(usize, f64)>> {
    let mut best: Option<(usize, f64)> = None;
    let q = ws.q();
    for (j, loss) in ws.drop_losses() {
        let rss = clean_rss(ws.rss() + loss, ws.rss_null());
        let v = criterion_value(c, rss, q - 1)?;
        best = match best {
            Some((bj, bv)) if bv < v || (bv == v && bj > j) => Some((bj, bv)),
            _ => Some((j, v)),
        };
    }
    Ok(best)
}

/// Best single add among tracked candidates; ties add the smaller index.
fn best_add(
    ws: &FitWorkspace<'_>,
    c: &CriterionConfig,
    collinear: &mut Vec<usize>,
) -> Result<Option<(usize, f64)>> {
    if ws.n_columns() + 1 >= ws.design().n() {
        return Ok(None);
    }
    let mut best: Option<(usize, f64)> = None;
    let q = ws.q();
    for (j, gain) in ws.tracked_gains() {
        let Some(gain) = gain else {
            collinear.push(j);
            continue;
        };
        let rss = clean_rss((ws.rss() - gain).max(0.0), ws.rss_null());
        let v = criterion_value(c, rss, q + 1)?;
        best = match best {
            Some((bj, bv)) if bv < v || (bv == v && bj < j) => Some((bj, bv)),
            _ => Some((j, v)),
        };
    }
    Ok(best)
}

fn backward_ws(
    ws: &mut FitWorkspace<'_>,
    c: &CriterionConfig,
    trace: &mut SearchTrace,
    stage: &str,
) -> Result<()> {
    let mut current = ws_value(ws, c)?;
    trace.push(stage, Action::Start, None, current, ws.q());
    while ws.q() > 0 {
        let Some((j, v)) = best_drop(ws, c)? else { break };
        if !(v < current) {
            break;
        }
        ws.drop_snp(j)?;
        current = ws_value(ws, c)?;
        trace.push(stage, Action::Drop, Some(j), current, ws.q());
    }
    Ok(())
}

/// Repeatedly drops the SNP whose removal lowers the criterion most, until
/// no drop lowers it.
pub fn backward_elimination(
    design: Design<'_>,
    model: &ModelSpec,
    config: &SearchConfig,
    trace: &mut SearchTrace,
) -> Result<ModelSpec> {
    check_n(&design, config)?;
    let mut ws = FitWorkspace::from_model(design, model)?;
    backward_ws(&mut ws, &config.criterion, trace, "backward")?;
    Ok(ws.model())
}

/// Alternates the best single add (over `candidates`) and the best single
/// drop, accepting only strict decreases, until a pass makes no move or the
/// iteration cap is reached.
pub fn stepwise(
    design: Design<'_>,
    model: &ModelSpec,
    candidates: &[usize],
    config: &SearchConfig,
    trace: &mut SearchTrace,
) -> Result<ModelSpec> {
    check_n(&design, config)?;
    const STAGE: &str = "stepwise";
    let c = &config.criterion;
    let mut ws = FitWorkspace::from_model(design, model)?;
    ws.track(candidates);
    let mut current = ws_value(&ws, c)?;
    trace.push(STAGE, Action::Start, None, current, ws.q());
    let mut moves = 0;
    let mut noted: HashSet<usize> = HashSet::new();
    let mut collinear = Vec::new();
    'outer: loop {
        let mut moved = false;
        for adding in [true, false] {
            let proposal = if adding {
                collinear.clear();
                let best = best_add(&ws, c, &mut collinear)?;
                for &j in &collinear {
                    if noted.insert(j) {
                        trace.push(STAGE, Action::SkipCollinear, Some(j), current, ws.q());
                    }
                }
                best
            } else if ws.q() > 0 {
                best_drop(&ws, c)?
            } else {
                None
            };
            let Some((j, v)) = proposal else { continue };
            if !(v < current) {
                continue;
            }
            if moves >= config.max_stepwise_iterations {
                trace.truncated = true;
                trace.push(STAGE, Action::Truncated, None, current, ws.q());
                break 'outer;
            }
            if adding {
                match ws.add_snp(j) {
                    Ok(()) => {}
                    Err(RegressError::Collinear { .. }) => {
                        if noted.insert(j) {
                            trace.push(STAGE, Action::SkipCollinear, Some(j), current, ws.q());
                        }
                        continue;
                    }
                    Err(e) => return Err(e.into()),
                }
            } else {
                ws.drop_snp(j)?;
            }
            moves += 1;
            moved = true;
            current = ws_value(&ws, c)?;
            let action = if adding { Action::Add } else { Action::Drop };
            trace.push(STAGE, action, Some(j), current, ws.q());
        }
        if !moved {
            break;
        }
    }
    Ok(ws.model())
}

/// Criterion values of arbitrary subsets of a fixed SNP set, from the Gram
/// matrix of the SNP columns after projecting out the intercept and forced
/// covariates.
struct SubsetEvaluator<'c> {
    snps: Vec<usize>,
    gram: Vec<Vec<f64>>,
    xty: Vec<f64>,
    yty: f64,
    raw_norm2: Vec<f64>,
    max_size: usize,
    criterion: &'c CriterionConfig,
    evaluations: usize,
}

impl<'c> SubsetEvaluator<'c> {
    fn new(
        design: Design<'_>,
        forced: &[usize],
        snps: Vec<usize>,
        criterion: &'c CriterionConfig,
    ) -> Result<Self> {
        let null = FitWorkspace::new(design, forced)?;
        let yr = null.residuals();
        let raw: Vec<Vec<f64>> = snps.iter().map(|&j| design.snp_column(j)).collect();
        let raw_norm2 = raw.iter().map(|x| x.iter().map(|v| v * v).sum()).collect();
        let cols: Vec<Vec<f64>> = raw.iter().map(|x| null.residualize(x)).collect();
        let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
        let m = cols.len();
        let mut gram = vec![vec![0.0; m]; m];
        for a in 0..m {
            for b in a..m {
                let g = dot(&cols[a], &cols[b]);
                gram[a][b] = g;
                gram[b][a] = g;
            }
        }
        let xty = cols.iter().map(|x| dot(x, yr)).collect();
        let max_size = design.n().saturating_sub(null.n_columns() + 2);
        Ok(Self {
            snps,
            gram,
            xty,
            yty: null.rss(),
            raw_norm2,
            max_size,
            criterion,
            evaluations: 0,
        })
    }

    /// RSS of the model with the SNPs at `positions`; `None` if the columns
    /// are collinear or leave no residual degrees of freedom.
    fn rss(&mut self, positions: &[usize]) -> Result<Option<f64>> {
        self.evaluations += 1;
        if self.evaluations > SUBSET_BUDGET {
            return Err(SearchError::Budget {
                limit: SUBSET_BUDGET,
            });
        }
        let s = positions.len();
        if s > self.max_size {
            return Ok(None);
        }
        let mut l = vec![vec![0.0; s]; s];
        let mut z = vec![0.0; s];
        for a in 0..s {
            let pa = positions[a];
            for b in 0..=a {
                let pb = positions[b];
                let mut v = self.gram[pa][pb];
                for k in 0..b {
                    v -= l[a][k] * l[b][k];
                }
                if a == b {
                    if !(v.max(0.0).sqrt() > RANK_TOLERANCE * self.raw_norm2[pa].sqrt()) {
                        return Ok(None);
                    }
                    l[a][a] = v.sqrt();
                } else {
                    l[a][b] = v / l[b][b];
                }
            }
            let mut v = self.xty[pa];
            for k in 0..a {
                v -= l[a][k] * z[k];
            }
            z[a] = v / l[a][a];
        }
        let explained: f64 = z.iter().map(|v| v * v).sum();
        Ok(Some(clean_rss((self.yty - explained).max(0.0), self.yty)))
    }

    fn value(&mut self, positions: &[usize]) -> Result<Option<f64>> {
        match self.rss(positions)? {
            Some(rss) => Ok(Some(criterion_value(self.criterion, rss, positions.len())?)),
            None => Ok(None),
        }
    }
}

#[derive(Debug, Clone)]
struct Best {
    value: f64,
    incumbent: bool,
    set: Vec<usize>,
}

impl Best {
    fn offer(&mut self, value: f64, incumbent: bool, set: &[usize]) {
        let better = value < self.value
            || (value == self.value
                && !self.incumbent
                && (incumbent
                    || set.len() < self.set.len()
                    || (set.len() == self.set.len() && set < self.set.as_slice())));
        if better {
            self.value = value;
            self.incumbent = incumbent;
            self.set = set.to_vec();
        }
    }
}

/// Calls `f` on every `s`-subset of `0..m` in lexicographic order.
fn for_each_combination(
    m: usize,
    s: usize,
    f: &mut dyn FnMut(&[usize]) -> Result<()>,
) -> Result<()> {
    if s > m {
        return Ok(());
    }
    let mut idx: Vec<usize> = (0..s).collect();
    loop {
        f(&idx)?;
        let mut i = s;
        loop {
            if i == 0 {
                return Ok(());
            }
            i -= 1;
            if idx[i] < m - s + i {
                break;
            }
            if i == 0 {
                return Ok(());
            }
        }
        if idx[i] >= m - s + i {
            return Ok(());
        }
        idx[i] += 1;
        for k in i + 1..s {
            idx[k] = idx[k - 1] + 1;
        }
    }
}

fn n_choose_k_upto(m: usize, cap: usize) -> f64 {
    let mut total = 0.0;
    let mut c = 1.0;
    for s in 0..=cap.min(m) {
        if s > 0 {
            c = c * (m - s + 1) as f64 / s as f64;
        }
        total += c;
    }
    total
}

/// Offers every subset of `pool` (positions into the evaluator) of size at
/// most `cap`.
fn small_subsets(
    ev: &mut SubsetEvaluator<'_>,
    pool: &[usize],
    cap: usize,
    incumbent: &[usize],
    best: &mut Best,
) -> Result<()> {
    if n_choose_k_upto(pool.len(), cap) > SUBSET_BUDGET as f64 {
        return Err(SearchError::Budget {
            limit: SUBSET_BUDGET,
        });
    }
    for s in 0..=cap.min(pool.len()) {
        for_each_combination(pool.len(), s, &mut |idx| {
            let positions: Vec<usize> = idx.iter().map(|&i| pool[i]).collect();
            if let Some(v) = ev.value(&positions)? {
                let set: Vec<usize> = positions.iter().map(|&p| ev.snps[p]).collect();
                best.offer(v, set == incumbent, &set);
            }
            Ok(())
        })?;
    }
    Ok(())
}

/// Exact minimum over all subsets of `pool` by branch and bound. A subset
/// `S` with `inside ⊆ S ⊆ T` has RSS at least `RSS(T)`, so its criterion is
/// bounded below by `base(RSS(T)) + min pen(|inside|..=|T|)`.
fn all_subsets(
    ev: &mut SubsetEvaluator<'_>,
    pool: &[usize],
    incumbent: &[usize],
    best: &mut Best,
) -> Result<()> {
    let m = pool.len();
    let mut pen = Vec::with_capacity(m + 1);
    for s in 0..=m {
        pen.push(ev.criterion.penalty(s)?);
    }
    fn recurse(
        ev: &mut SubsetEvaluator<'_>,
        pool: &[usize],
        pen: &[f64],
        incumbent: &[usize],
        inside: &mut Vec<usize>,
        upper: Vec<usize>,
        rss_upper: Option<f64>,
        pos: usize,
        best: &mut Best,
    ) -> Result<()> {
        let Some(rss_upper) = rss_upper else {
            return Ok(());
        };
        let lower_pen = pen[inside.len()..=upper.len()]
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let base = criterion_value(ev.criterion, rss_upper, 0)?;
        if base + lower_pen > best.value {
            return Ok(());
        }
        if pos == pool.len() {
            let set: Vec<usize> = inside.iter().map(|&p| ev.snps[p]).collect();
            best.offer(base + pen[inside.len()], set == incumbent, &set);
            return Ok(());
        }
        inside.push(pool[pos]);
        recurse(ev, pool, pen, incumbent, inside, upper.clone(), Some(rss_upper), pos + 1, best)?;
        inside.pop();
        let without: Vec<usize> = upper.iter().copied().filter(|&p| p != pool[pos]).collect();
        let rss = ev.rss(&without)?;
        recurse(ev, pool, pen, incumbent, inside, without, rss, pos + 1, best)
    }
    let rss = ev.rss(pool)?;
    recurse(ev, pool, &pen, incumbent, &mut Vec::new(), pool.to_vec(), rss, 0, best)
}

/// Subset refinement over the incumbent model and extra candidates.
///
/// When the combined set has at most `refinement_trigger` SNPs, every subset
/// of it with at most `exhaustive_size_cap` SNPs and every subset of the
/// incumbent is evaluated. Otherwise the combined model is first reduced by
/// backward elimination, and the reduced set, its subsets smaller than the
/// cap and the incumbent are compared. The incumbent wins ties.
pub fn refine_subsets(
    design: Design<'_>,
    model: &ModelSpec,
    extra_candidates: &[usize],
    config: &SearchConfig,
    trace: &mut SearchTrace,
) -> Result<ModelSpec> {
    check_n(&design, config)?;
    const STAGE: &str = "refine";
    let forced = model.forced_indices();
    let c = &config.criterion;
    let mut combined: Vec<usize> = model
        .snp_indices()
        .iter()
        .chain(extra_candidates)
        .copied()
        .collect();
    combined.sort_unstable();
    combined.dedup();
    if let Some(&j) = combined.iter().find(|&&j| j >= design.n_snps()) {
        return Err(RegressError::InvalidModel(format!("SNP {j} does not exist")).into());
    }
    let incumbent = model.snp_indices().to_vec();

    let (pool, small_cap) = if combined.len() <= config.refinement_trigger {
        (combined.clone(), config.exhaustive_size_cap)
    } else {
        // Reduce the combined model first; collinear or surplus columns are
        // left out.
        let mut ws = FitWorkspace::new(design, forced)?;
        for &j in &combined {
            match ws.add_snp(j) {
                Ok(()) => {}
                Err(RegressError::Collinear { .. }) | Err(RegressError::InvalidModel(_)) => {
                    trace.push(STAGE, Action::SkipCollinear, Some(j), f64::NAN, ws.q());
                }
                Err(e) => return Err(e.into()),
            }
        }
        let v = ws_value(&ws, c)?;
        trace.push(STAGE, Action::Fallback, None, v, ws.q());
        backward_ws(&mut ws, c, trace, "refine-backward")?;
        let mut reduced = ws.snps();
        reduced.sort_unstable();
        (reduced, config.exhaustive_size_cap.saturating_sub(1))
    };

    let mut universe = pool.clone();
    universe.extend(incumbent.iter().copied());
    universe.sort_unstable();
    universe.dedup();
    let mut ev = SubsetEvaluator::new(design, forced, universe.clone(), c)?;
    let pos = |set: &[usize]| -> Vec<usize> {
        set.iter()
            .map(|j| universe.binary_search(j).expect("member of universe"))
            .collect()
    };
    let pool_pos = pos(&pool);
    let inc_pos = pos(&incumbent);

    let inc_value = ev.value(&inc_pos)?.ok_or_else(|| {
        SearchError::Regress(RegressError::InvalidModel(
            "incumbent model is rank deficient".into(),
        ))
    })?;
    trace.push(STAGE, Action::Start, None, inc_value, incumbent.len());
    let mut best = Best {
        value: inc_value,
        incumbent: true,
        set: incumbent.clone(),
    };
    small_subsets(&mut ev, &pool_pos, small_cap, &incumbent, &mut best)?;
    if combined.len() <= config.refinement_trigger {
        all_subsets(&mut ev, &inc_pos, &incumbent, &mut best)?;
    } else if let Some(v) = ev.value(&pool_pos)? {
        best.offer(v, pool == incumbent, &pool);
    }

    if !best.incumbent {
        trace.push(STAGE, Action::Refine, None, best.value, best.set.len());
    }
    Ok(ModelSpec::new(best.set, forced.to_vec())?)
}

/// Output of [`select_model`].
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub model: ModelSpec,
    pub fit: FitResult,
    pub criterion_value: f64,
    pub trace: SearchTrace,
}

/// Full pipeline on a dataset, forcing in all its covariates.
pub fn select_model(dataset: &Dataset, config: &SearchConfig) -> Result<Selection> {
    let design = Design::from_dataset(dataset)?;
    select_model_design(design, &design.all_covariates(), config, &[])
}

/// Full pipeline: scan, screen, forward, backward, stepwise, refinement
/// (with `extras` as additional candidates), then a final comparison with
/// the null model.
pub fn select_model_design(
    design: Design<'_>,
    forced: &[usize],
    config: &SearchConfig,
    extras: &[usize],
) -> Result<Selection> {
    check_n(&design, config)?;
    let scan = scan_design(design, forced)?;
    let candidates = screen(&scan, config.screen_threshold);
    let mut trace = SearchTrace::default();
    let forward = multiple_forward_search(design, forced, &candidates, config, &mut trace)?;
    finish_selection(design, forward, &candidates, config, extras, trace)
}

/// Stages after the forward search. Separate so callers comparing several
/// criteria can share one forward model.
pub fn finish_selection(
    design: Design<'_>,
    forward: ModelSpec,
    candidates: &[usize],
    config: &SearchConfig,
    extras: &[usize],
    mut trace: SearchTrace,
) -> Result<Selection> {
    let c = &config.criterion;
    let model = backward_elimination(design, &forward, config, &mut trace)?;
    let mut model = stepwise(design, &model, candidates, config, &mut trace)?;
    if config.refine {
        model = refine_subsets(design, &model, extras, config, &mut trace)?;
    }
    let mut ws = FitWorkspace::from_model(design, &model)?;
    let mut value = ws_value(&ws, c)?;
    let null = FitWorkspace::new(design, model.forced_indices())?;
    let null_value = ws_value(&null, c)?;
    if ws.q() > 0 && null_value <= value {
        trace.push("final", Action::Fallback, None, null_value, 0);
        ws = null;
        value = null_value;
        model = ws.model();
    }
    Ok(Selection {
        fit: ws.result(),
        model,
        criterion_value: value,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genotype::GenotypeMatrix;

    fn combos(m: usize, s: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for_each_combination(m, s, &mut |c| {
            out.push(c.to_vec());
            Ok(())
        })
        .unwrap();
        out
    }

    #[test]
    fn combinations_are_lexicographic() {
        assert_eq!(combos(4, 2), vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
        assert_eq!(combos(3, 0), vec![Vec::<usize>::new()]);
        assert_eq!(combos(3, 3), vec![vec![0, 1, 2]]);
        assert!(combos(2, 3).is_empty());
        assert_eq!(combos(10, 4).len(), 210);
    }

    #[test]
    fn screen_boundary_is_strict() {
        let scan = ScanResult::from_parts(vec![0.01, 0.149_99, 0.15], vec![0.0; 3], 10);
        assert_eq!(screen(&scan, 0.15), vec![0, 1]);
        let scan = ScanResult::from_parts(vec![0.5; 4], vec![0.0; 4], 10);
        assert!(screen(&scan, 0.15).is_empty());
    }

    #[test]
    fn empty_candidates_give_null_model() {
        let g = GenotypeMatrix::from_columns(vec![vec![-1, 0, 1, 0, 1, -1]]).unwrap();
        let y = vec![0.1, 0.5, -0.2, 0.3, 0.0, 0.9];
        let d = Design::new(&g, &y, &[]).unwrap();
        let config = SearchConfig::new(CriterionConfig::new(CriterionKind::Mbic, 6, 1));
        let mut trace = SearchTrace::default();
        let m = multiple_forward_search(d, &[], &[], &config, &mut trace).unwrap();
        assert_eq!(m.q(), 0);
    }

    #[test]
    fn config_validation() {
        let mut c = SearchConfig::new(CriterionConfig::new(CriterionKind::Mbic, 100, 10));
        assert!(c.validate().is_ok());
        c.screen_threshold = 0.0;
        assert!(c.validate().is_err());
        c.screen_threshold = 0.15;
        c.exhaustive_size_cap = 30;
        assert!(c.validate().is_err());
    }

    #[test]
    fn action_names() {
        assert_eq!(Action::SkipCollinear.to_string(), "skip-collinear");
        assert_eq!(Action::Start.to_string(), "start");
    }
}
