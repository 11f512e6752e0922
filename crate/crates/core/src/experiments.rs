//! Experiment drivers: condition sweeps over random mask families, ratings
//! ingestion, core and closure curves, and variance heatmaps. All outputs
//! are plain CSV with a header row; `NA` marks values not computed and `-1`
//! marks entries that are not completable.

use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::completability::completable_closure;
use crate::completion::{minor_closure_mask, MinorClosureOptions};
use crate::error::{Error, Result};
use crate::graph::{edge_connectivity_at_least, k_core, min_degree_at_least};
use crate::jacobian::RankBackend;
use crate::mask::{Mask, NoiseModel, Position};
use crate::random_masks::{monotone_order, regular_plus_order, rowwise_regular_order, EdgeOrdering};
use crate::rank_one::predict_variance;
use crate::rng::derive_seed;

/// Written into the `schema` column of per-trial records.
pub const RECORD_SCHEMA: &str = "trial-v1";

/// Which of the expensive checks to run.
#[derive(Debug, Clone)]
pub struct CheckConfig {
    pub r: usize,
    pub backend: RankBackend,
    pub minor_closure: bool,
    /// Node budget per biclique search.
    pub node_budget: Option<u64>,
    /// Wall-clock budget per mask for the minor closure.
    pub time_budget: Option<Duration>,
}

impl CheckConfig {
    pub fn new(r: usize) -> Self {
        CheckConfig {
            r,
            backend: RankBackend::FloatSvd,
            minor_closure: true,
            node_budget: None,
            time_budget: None,
        }
    }
}

/// Per-mask conditions. `None` means the check was skipped or ran out of budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConditionVector {
    pub min_degree: bool,
    pub edge_connected: bool,
    pub completable: Option<bool>,
    pub minor_closable: Option<bool>,
    pub one_step_closable: Option<bool>,
    /// Closure positions with an endpoint outside the `r`-core.
    pub core_violations: usize,
}

impl ConditionVector {
    /// Names of the implications that fail on this record.
    pub fn violations(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.completable == Some(true) && !self.edge_connected {
            out.push("completable => edge-connected");
        }
        if self.edge_connected && !self.min_degree {
            out.push("edge-connected => min-degree");
        }
        if self.minor_closable == Some(true) && self.completable == Some(false) {
            out.push("minor-closable => completable");
        }
        if self.one_step_closable == Some(true) && self.minor_closable == Some(false) {
            out.push("one-step => minor-closable");
        }
        if self.core_violations > 0 {
            out.push("closure inside r-core");
        }
        out
    }
}

/// Wall time per check, in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CheckTimes {
    pub degree_us: u64,
    pub connectivity_us: u64,
    pub closure_us: u64,
    pub minor_us: u64,
}

/// Runs every configured check on one mask.
pub fn evaluate_conditions(mask: &Mask, cfg: &CheckConfig, seed: u64) -> (ConditionVector, CheckTimes) {
    let r = cfg.r;
    let mut times = CheckTimes::default();
    let t = Instant::now();
    let min_degree = min_degree_at_least(mask, r);
    times.degree_us = t.elapsed().as_micros() as u64;

    let t = Instant::now();
    let view = mask.bipartite();
    let edge_connected = min_degree && edge_connectivity_at_least(&view, r);
    times.connectivity_us = t.elapsed().as_micros() as u64;

    let t = Instant::now();
    let (completable, core_violations) = match completable_closure(mask, r, cfg.backend, seed) {
        Ok(res) => {
            let core = k_core(&view, r);
            let bad = res
                .added()
                .iter()
                .filter(|p| !core.contains_row(p.row) || !core.contains_col(p.col))
                .count();
            (Some(res.is_everything()), bad)
        }
        Err(e) => {
            log::warn!("closure check failed: {e}");
            (None, 0)
        }
    };
    times.closure_us = t.elapsed().as_micros() as u64;

    let (mut minor_closable, mut one_step_closable) = (None, None);
    if cfg.minor_closure {
        let t = Instant::now();
        let opts = MinorClosureOptions {
            max_steps: None,
            node_budget: cfg.node_budget,
            deadline: cfg.time_budget.map(|d| Instant::now() + d),
        };
        let mc = minor_closure_mask(mask, r, &opts);
        let complete = mc.is_complete();
        // an exhausted search can only hide additions
        if complete || mc.exhausted_searches == 0 {
            minor_closable = Some(complete);
            one_step_closable = Some(complete && mc.steps <= 1);
        }
        times.minor_us = t.elapsed().as_micros() as u64;
    }
    (
        ConditionVector {
            min_degree,
            edge_connected,
            completable,
            minor_closable,
            one_step_closable,
            core_violations,
        },
        times,
    )
}

/// One mask of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub model: String,
    pub m: usize,
    pub n: usize,
    pub r: usize,
    /// Offset from the ordering's marker, for the regular families.
    pub offset: Option<i64>,
    pub trial: usize,
    pub seed: u64,
    pub edges: usize,
    pub conditions: ConditionVector,
    pub times: CheckTimes,
}

fn opt_bool(b: Option<bool>) -> String {
    b.map_or("NA".into(), |b| (b as u8).to_string())
}

/// Writes per-trial records. Timing columns are included only on request,
/// since they differ between reruns.
pub fn write_records<W: Write>(records: &[TrialRecord], with_times: bool, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "schema", "model", "m", "n", "r", "offset", "trial", "seed", "edges", "min_degree", "edge_connected",
        "completable", "nuclear_norm", "minor_closable", "one_step", "core_violations",
    ];
    if with_times {
        header.extend(["degree_us", "connectivity_us", "closure_us", "minor_us"]);
    }
    w.write_record(&header)?;
    for rec in records {
        let c = &rec.conditions;
        let mut row = vec![
            RECORD_SCHEMA.to_string(),
            rec.model.clone(),
            rec.m.to_string(),
            rec.n.to_string(),
            rec.r.to_string(),
            rec.offset.map_or("NA".into(), |o| o.to_string()),
            rec.trial.to_string(),
            rec.seed.to_string(),
            rec.edges.to_string(),
            (c.min_degree as u8).to_string(),
            (c.edge_connected as u8).to_string(),
            opt_bool(c.completable),
            "NA".into(),
            opt_bool(c.minor_closable),
            opt_bool(c.one_step_closable),
            c.core_violations.to_string(),
        ];
        if with_times {
            let t = &rec.times;
            row.extend([t.degree_us, t.connectivity_us, t.closure_us, t.minor_us].map(|x| x.to_string()));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Success frequencies of each condition at one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyRow {
    pub model: String,
    pub offset: Option<i64>,
    pub edges: usize,
    pub trials: usize,
    pub min_degree: f64,
    pub edge_connected: f64,
    pub completable: f64,
    pub minor_closable: Option<f64>,
    pub one_step: Option<f64>,
    /// Trials where some requested check had no verdict.
    pub missing: usize,
}

fn frequencies(model: &str, offset: Option<i64>, edges: usize, recs: &[&TrialRecord], minor: bool) -> FrequencyRow {
    let t = recs.len().max(1) as f64;
    let count = |f: &dyn Fn(&ConditionVector) -> bool| recs.iter().filter(|r| f(&r.conditions)).count() as f64 / t;
    let missing = recs
        .iter()
        .filter(|r| {
            let c = &r.conditions;
            c.completable.is_none() || (minor && c.minor_closable.is_none())
        })
        .count();
    FrequencyRow {
        model: model.to_string(),
        offset,
        edges,
        trials: recs.len(),
        min_degree: count(&|c| c.min_degree),
        edge_connected: count(&|c| c.edge_connected),
        completable: count(&|c| c.completable == Some(true)),
        minor_closable: minor.then(|| count(&|c| c.minor_closable == Some(true))),
        one_step: minor.then(|| count(&|c| c.one_step_closable == Some(true))),
        missing,
    }
}

pub fn write_frequencies<W: Write>(rows: &[FrequencyRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "model", "offset", "edges", "trials", "min_degree", "edge_connected", "completable", "nuclear_norm",
        "minor_closable", "one_step", "missing",
    ])?;
    let f = |x: Option<f64>| x.map_or("NA".into(), |x| format!("{x:.4}"));
    for row in rows {
        w.write_record([
            row.model.clone(),
            row.offset.map_or("NA".into(), |o| o.to_string()),
            row.edges.to_string(),
            row.trials.to_string(),
            f(Some(row.min_degree)),
            f(Some(row.edge_connected)),
            f(Some(row.completable)),
            "NA".into(),
            f(row.minor_closable),
            f(row.one_step),
            row.missing.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub records: Vec<TrialRecord>,
    pub rows: Vec<FrequencyRow>,
}

impl SweepResult {
    /// Records breaking any implication.
    pub fn violations(&self) -> Vec<(&TrialRecord, Vec<&'static str>)> {
        self.records
            .iter()
            .map(|r| (r, r.conditions.violations()))
            .filter(|(_, v)| !v.is_empty())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct DensitySweep {
    pub m: usize,
    pub n: usize,
    pub edge_counts: Vec<usize>,
    pub trials: usize,
    pub seed_base: u64,
    pub checks: CheckConfig,
}

/// Conditions along the prefixes of one random ordering per trial.
pub fn sweep_density(cfg: &DensitySweep) -> Result<SweepResult> {
    if cfg.edge_counts.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("edge counts must be ascending".into()));
    }
    let records: Vec<Vec<TrialRecord>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = cfg.seed_base + trial as u64;
            let order = monotone_order(cfg.m, cfg.n, derive_seed(seed, 0));
            cfg.edge_counts
                .iter()
                .map(|&k| {
                    let mask = order.prefix(k);
                    let (conditions, times) = evaluate_conditions(&mask, &cfg.checks, derive_seed(seed, 1 + k as u64));
                    TrialRecord {
                        model: "density".into(),
                        m: cfg.m,
                        n: cfg.n,
                        r: cfg.checks.r,
                        offset: None,
                        trial,
                        seed,
                        edges: mask.len(),
                        conditions,
                        times,
                    }
                })
                .collect()
        })
        .collect();
    let records: Vec<TrialRecord> = records.into_iter().flatten().collect();
    let rows = cfg
        .edge_counts
        .iter()
        .map(|&k| {
            let recs: Vec<&TrialRecord> = records.iter().filter(|r| r.edges == k.min(cfg.m * cfg.n)).collect();
            frequencies("density", None, k, &recs, cfg.checks.minor_closure)
        })
        .collect();
    Ok(SweepResult { records, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegularFamily {
    RegularPlus,
    Rowwise,
}

impl RegularFamily {
    pub fn name(self) -> &'static str {
        match self {
            RegularFamily::RegularPlus => "regular-plus",
            RegularFamily::Rowwise => "rowwise",
        }
    }

    fn ordering(self, n: usize, r: usize, seed: u64) -> Result<EdgeOrdering> {
        match self {
            RegularFamily::RegularPlus => regular_plus_order(n, r, seed),
            RegularFamily::Rowwise => rowwise_regular_order(n, r, seed),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RegularSweep {
    pub n: usize,
    pub offsets: Vec<i64>,
    pub trials: usize,
    pub seed_base: u64,
    pub families: Vec<RegularFamily>,
    pub checks: CheckConfig,
}

/// Conditions at `2 r n + i` edges of the regular orderings.
pub fn sweep_regular(cfg: &RegularSweep) -> Result<SweepResult> {
    let (n, r) = (cfg.n, cfg.checks.r);
    let lo = -((2 * r * n) as i64);
    let hi = (n * n) as i64 - (2 * r * n) as i64;
    if let Some(bad) = cfg.offsets.iter().find(|&&o| o < lo || o > hi) {
        return Err(Error::InvalidArgument(format!("offset {bad} outside [{lo}, {hi}]")));
    }
    let mut records = Vec::new();
    let mut rows = Vec::new();
    for &family in &cfg.families {
        let per_trial: Vec<Result<Vec<TrialRecord>>> = (0..cfg.trials)
            .into_par_iter()
            .map(|trial| {
                let seed = cfg.seed_base + trial as u64;
                let order = family.ordering(n, r, derive_seed(seed, 0))?;
                Ok(cfg
                    .offsets
                    .iter()
                    .map(|&i| {
                        let mask = order.prefix_at_offset(i).expect("offset checked");
                        let (conditions, times) =
                            evaluate_conditions(&mask, &cfg.checks, derive_seed(seed, 1 + (i - lo) as u64));
                        TrialRecord {
                            model: family.name().into(),
                            m: n,
                            n,
                            r,
                            offset: Some(i),
                            trial,
                            seed,
                            edges: mask.len(),
                            conditions,
                            times,
                        }
                    })
                    .collect())
            })
            .collect();
        let mut fam = Vec::new();
        for t in per_trial {
            fam.extend(t?);
        }
        for &i in &cfg.offsets {
            let recs: Vec<&TrialRecord> = fam.iter().filter(|rec| rec.offset == Some(i)).collect();
            let edges = (2 * r * n) as i64 + i;
            rows.push(frequencies(family.name(), Some(i), edges as usize, &recs, cfg.checks.minor_closure));
        }
        records.extend(fam);
    }
    Ok(SweepResult { records, rows })
}

/// First `x` at which `y` reaches `level`, interpolating linearly between
/// sweep points; `None` if it never does.
pub fn crossing(xs: &[f64], ys: &[f64], level: f64) -> Option<f64> {
    let k = ys.iter().position(|&y| y >= level)?;
    if k == 0 {
        return Some(xs[0]);
    }
    let (x0, x1, y0, y1) = (xs[k - 1], xs[k], ys[k - 1], ys[k]);
    Some(x0 + (level - y0) * (x1 - x0) / (y1 - y0))
}

/// A ratings file re-indexed to dense rows (users) and columns (items).
#[derive(Debug, Clone, PartialEq)]
pub struct RatingsTable {
    /// Original id of each row, ascending.
    pub user_ids: Vec<u64>,
    /// Original id of each column, ascending.
    pub item_ids: Vec<u64>,
    pub mask: Mask,
    /// Values aligned with `mask.positions()`, when every line had one.
    pub values: Option<Vec<f64>>,
}

impl RatingsTable {
    /// Builds a table from `(user, item, value)` triples; later duplicates win.
    pub fn from_triples(triples: &[(u64, u64, Option<f64>)]) -> Result<Self> {
        let mut users: Vec<u64> = triples.iter().map(|t| t.0).collect();
        let mut items: Vec<u64> = triples.iter().map(|t| t.1).collect();
        users.sort_unstable();
        users.dedup();
        items.sort_unstable();
        items.dedup();
        let (m, n) = (users.len(), items.len());
        let mut cells: std::collections::BTreeMap<Position, Option<f64>> = std::collections::BTreeMap::new();
        for &(u, it, v) in triples {
            let p = Position::new(
                users.binary_search(&u).expect("collected"),
                items.binary_search(&it).expect("collected"),
            );
            if cells.insert(p, v).is_some() {
                log::warn!("duplicate rating for user {u}, item {it}; keeping the last");
            }
        }
        let mask = Mask::new(m, n, cells.keys().copied())?;
        let values = cells.values().copied().collect::<Option<Vec<f64>>>();
        Ok(RatingsTable {
            user_ids: users,
            item_ids: items,
            mask,
            values,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut triples = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .collect();
            let err = |msg: String| Error::Parse { line: k + 1, msg };
            if toks.len() < 2 {
                return Err(err(format!("expected 'user item [value]', found '{line}'")));
            }
            let id = |t: &str| match t.parse::<u64>() {
                Ok(v) if v > 0 => Ok(v),
                _ => Err(err(format!("bad id '{t}'"))),
            };
            let value = match toks.get(2) {
                Some(t) => Some(t.parse::<f64>().map_err(|_| err(format!("bad value '{t}'")))?),
                None => None,
            };
            triples.push((id(toks[0])?, id(toks[1])?, value));
        }
        Self::from_triples(&triples)
    }
}

/// Reads `user item [value ...]` lines separated by whitespace, tabs or commas.
pub fn ingest_ratings(path: &Path) -> Result<RatingsTable> {
    RatingsTable::parse(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoreRow {
    pub r: usize,
    pub rows: usize,
    pub cols: usize,
    pub entries: usize,
}

/// Size of the `r`-core for `r = 1..=r_max`, stopping after the first empty core.
pub fn rcore_curve(mask: &Mask, r_max: usize) -> Vec<CoreRow> {
    let view = mask.bipartite();
    let mut out = Vec::new();
    for r in 1..=r_max {
        let core = k_core(&view, r);
        out.push(CoreRow {
            r,
            rows: core.rows.len(),
            cols: core.cols.len(),
            entries: core.positions.len(),
        });
        if core.positions.is_empty() {
            break;
        }
    }
    out
}

pub fn write_core_curve<W: Write>(rows: &[CoreRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["r", "rows", "cols", "entries"])?;
    for row in rows {
        w.write_record([row.r, row.rows, row.cols, row.entries].map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// How the closure of a core is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClosurePipeline {
    /// The Jacobian closure alone.
    Closure,
    /// Jacobian closure, then minor closure treating its positions as observed.
    ClosureThenMinor,
    /// Jacobian closure and minor closure of the core run separately; their union.
    ClosureAndMinor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosureCountRow {
    pub r: usize,
    pub core_rows: usize,
    pub core_cols: usize,
    pub core_entries: usize,
    /// `None` when the budget ran out.
    pub new_positions: Option<usize>,
    /// New positions over the core's missing positions.
    pub fraction: Option<f64>,
}

/// New positions completable within the `r`-core, per `r`.
pub fn completable_count_curve(
    mask: &Mask,
    r_list: &[usize],
    backend: RankBackend,
    pipeline: ClosurePipeline,
    budget: Option<Duration>,
    seed: u64,
) -> Vec<ClosureCountRow> {
    let start = Instant::now();
    let view = mask.bipartite();
    r_list
        .iter()
        .map(|&r| {
            let core = k_core(&view, r);
            let sub = mask.restrict(&core.rows, &core.cols);
            let mut row = ClosureCountRow {
                r,
                core_rows: core.rows.len(),
                core_cols: core.cols.len(),
                core_entries: sub.len(),
                new_positions: None,
                fraction: None,
            };
            if budget.is_some_and(|b| start.elapsed() >= b) {
                return row;
            }
            let deadline = budget.map(|b| start + b);
            let count = closure_count(&sub, r, backend, pipeline, deadline, derive_seed(seed, r as u64));
            if let Some(new) = count {
                let missing = core.rows.len() * core.cols.len() - sub.len();
                row.new_positions = Some(new);
                row.fraction = Some(if missing == 0 { 0.0 } else { new as f64 / missing as f64 });
            }
            row
        })
        .collect()
}

fn closure_count(
    sub: &Mask,
    r: usize,
    backend: RankBackend,
    pipeline: ClosurePipeline,
    deadline: Option<Instant>,
    seed: u64,
) -> Option<usize> {
    if sub.is_empty() {
        return Some(0);
    }
    let closure = completable_closure(sub, r, backend, seed).ok()?.closure;
    let opts = MinorClosureOptions {
        deadline,
        ..Default::default()
    };
    let total = match pipeline {
        ClosurePipeline::Closure => closure,
        ClosurePipeline::ClosureThenMinor => {
            let mc = minor_closure_mask(&closure, r, &opts);
            if mc.exhausted_searches > 0 {
                return None;
            }
            mc.closure
        }
        ClosurePipeline::ClosureAndMinor => {
            let mc = minor_closure_mask(sub, r, &opts);
            if mc.exhausted_searches > 0 {
                return None;
            }
            closure.union(&mc.closure).ok()?
        }
    };
    Some(total.len() - sub.len())
}

pub fn write_closure_counts<W: Write>(rows: &[ClosureCountRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["r", "core_rows", "core_cols", "core_entries", "new_positions", "fraction", "status"])?;
    for row in rows {
        w.write_record([
            row.r.to_string(),
            row.core_rows.to_string(),
            row.core_cols.to_string(),
            row.core_entries.to_string(),
            row.new_positions.map_or("NA".into(), |x| x.to_string()),
            row.fraction.map_or("NA".into(), |x| format!("{x:.6}")),
            if row.new_positions.is_some() { "OK" } else { "INDETERMINATE" }.into(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Predicted rank-one log-variance per position.
///
/// Missing positions get the variance of their best estimate. Observed
/// positions are held out, estimated from the rest, and the estimate is
/// combined with the observation itself. Positions on no cycle get `-1`.
pub fn variance_heatmap(mask: &Mask, noise: &NoiseModel) -> Result<DMatrix<f64>> {
    if noise.mask() != mask {
        return Err(Error::DimensionMismatch("noise model must cover exactly the mask".into()));
    }
    let (m, n) = (mask.rows(), mask.cols());
    let cells: Vec<Result<f64>> = (0..m * n)
        .into_par_iter()
        .map(|k| {
            let p = Position::new(k / n, k % n);
            match noise.sigma_sq(p) {
                None => match predict_variance(mask, noise, p) {
                    Ok(v) => Ok(v),
                    Err(Error::NotCompletable { .. }) => Ok(-1.0),
                    Err(e) => Err(e),
                },
                Some(own) => {
                    let held = mask.without(p);
                    let held_noise = noise.restrict_to(&held)?;
                    match predict_variance(&held, &held_noise, p) {
                        Ok(v) if v == 0.0 || own == 0.0 => Ok(0.0),
                        Ok(v) => Ok(1.0 / (1.0 / v + 1.0 / own)),
                        Err(Error::NotCompletable { .. }) => Ok(-1.0),
                        Err(e) => Err(e),
                    }
                }
            }
        })
        .collect();
    let mut out = DMatrix::zeros(m, n);
    for (k, c) in cells.into_iter().enumerate() {
        out[(k / n, k % n)] = c?;
    }
    Ok(out)
}

/// Writes a matrix as CSV with a `c1..cn` header.
pub fn write_matrix<W: Write>(a: &DMatrix<f64>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record((1..=a.ncols()).map(|j| format!("c{j}")))?;
    for i in 0..a.nrows() {
        w.write_record((0..a.ncols()).map(|j| {
            let x = a[(i, j)];
            if x == -1.0 {
                "-1".to_string()
            } else {
                format!("{x:.6}")
            }
        }))?;
    }
    w.flush()?;
    Ok(())
}
