//! Entry reconstruction by minor closure, k-step closability, and the
//! first-order variance of a minor-based reconstruction.

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{find_a_biclique_on, Biclique, BudgetExhausted, SearchBudget};
use crate::mask::{Mask, NoiseModel, PartialMatrix, Position};

/// A witness block `A_{I',J'}` whose smallest singular value is below this
/// fraction of its largest is rejected.
pub const BLOCK_CONDITION_CUTOFF: f64 = 1e-10;

#[derive(Debug, Clone, Default)]
pub struct MinorClosureOptions {
    /// Stop after this many rounds.
    pub max_steps: Option<usize>,
    /// Node budget for each biclique search.
    pub node_budget: Option<u64>,
    /// Wall-clock limit shared by all searches.
    pub deadline: Option<Instant>,
}

impl MinorClosureOptions {
    fn budget(&self) -> SearchBudget {
        SearchBudget::new(self.node_budget, self.deadline)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Observed,
    Reconstructed { step: usize },
}

/// One reconstructed entry and the witness used for it.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub position: Position,
    pub value: f64,
    /// 1-based round in which the entry was added.
    pub step: usize,
    pub witness: Biclique,
    /// First-order variance, when a noise model was supplied.
    pub variance: Option<f64>,
    /// Set when the witness used reconstructed entries, whose variances are
    /// themselves first-order estimates.
    pub approximate: bool,
}

#[derive(Debug, Clone)]
pub struct MinorClosureResult {
    pub completed: PartialMatrix,
    pub closure_mask: Mask,
    /// Rounds executed.
    pub steps: usize,
    pub reconstructions: Vec<Reconstruction>,
    /// Searches cut short by the node budget or deadline.
    pub exhausted_searches: usize,
    /// Missing entries whose only witnesses were numerically singular.
    pub singular_skips: usize,
}

impl MinorClosureResult {
    pub fn provenance(&self, p: Position) -> Option<Provenance> {
        if !self.closure_mask.contains(p) {
            return None;
        }
        Some(
            self.reconstructions
                .iter()
                .find(|rec| rec.position == p)
                .map_or(Provenance::Observed, |rec| Provenance::Reconstructed { step: rec.step }),
        )
    }

    pub fn is_complete(&self) -> bool {
        self.closure_mask.is_full()
    }
}

/// Mask-only minor closure.
#[derive(Debug, Clone)]
pub struct MaskClosure {
    pub closure: Mask,
    pub steps: usize,
    pub exhausted_searches: usize,
}

impl MaskClosure {
    pub fn is_complete(&self) -> bool {
        self.closure.is_full()
    }
}

/// Minor closure of observed values with default options.
pub fn minor_closure(data: &PartialMatrix, r: usize) -> Result<MinorClosureResult> {
    minor_closure_with(data, None, r, &MinorClosureOptions::default())
}

/// Minor closure; with `noise`, every reconstruction also carries its
/// first-order variance, and reconstructed entries feed later rounds with
/// that variance.
pub fn minor_closure_with(
    data: &PartialMatrix,
    noise: Option<&NoiseModel>,
    r: usize,
    opts: &MinorClosureOptions,
) -> Result<MinorClosureResult> {
    if r == 0 {
        return Err(Error::InvalidArgument("rank must be at least 1".into()));
    }
    let mask0 = data.mask();
    let (m, n) = (mask0.rows(), mask0.cols());
    if let Some(noise) = noise {
        if noise.mask() != mask0 {
            return Err(Error::DimensionMismatch("noise model must cover exactly the observed positions".into()));
        }
    }
    let mut values: Vec<Option<f64>> = vec![None; m * n];
    let mut variances: Vec<f64> = vec![0.0; m * n];
    let mut synthetic = vec![false; m * n];
    for (k, (p, v)) in data.iter().enumerate() {
        values[p.row * n + p.col] = Some(v);
        if let Some(noise) = noise {
            variances[p.row * n + p.col] = noise.values()[k];
        }
    }
    let mut mask = mask0.clone();
    let mut steps = 0;
    let mut reconstructions = Vec::new();
    let mut exhausted_searches = 0;
    let mut singular_skips = 0;
    while !mask.is_full() && opts.max_steps.is_none_or(|k| steps < k) {
        steps += 1;
        let view = mask.bipartite();
        let found: Vec<(Position, SearchOutcome)> = mask
            .complement()
            .into_par_iter()
            .map(|p| {
                let mut budget = opts.budget();
                let mut saw_singular = false;
                let rows = view.col_neighbors(p.col).to_vec();
                let cols = view.row_neighbors(p.row).to_vec();
                let res = find_a_biclique_on(&mask, rows, cols, r, r, &mut budget, &mut |b| {
                    let ok = block_well_conditioned(&values, n, b);
                    saw_singular |= !ok;
                    ok
                });
                let outcome = match res {
                    Ok(Some(b)) => SearchOutcome::Found(b),
                    Ok(None) if saw_singular => SearchOutcome::Singular,
                    Ok(None) => SearchOutcome::None,
                    Err(BudgetExhausted) => SearchOutcome::Exhausted,
                };
                (p, outcome)
            })
            .collect();
        let mut staged = Vec::new();
        for (p, outcome) in found {
            match outcome {
                SearchOutcome::Found(b) => {
                    let value = pinv_entry(&values, n, &b, p);
                    let approximate = witness_cells(&b, p).any(|(i, j)| synthetic[i * n + j]);
                    let variance = match noise {
                        Some(_) => {
                            let (minor, sig) = witness_minor(&values, &variances, n, &b, p, value);
                            Some(first_order_variance(&minor, &sig)?)
                        }
                        None => None,
                    };
                    staged.push(Reconstruction {
                        position: p,
                        value,
                        step: steps,
                        witness: b,
                        variance,
                        approximate,
                    });
                }
                SearchOutcome::Singular => {
                    log::warn!("only singular witnesses for {:?}; left missing", p.to_one_based());
                    singular_skips += 1;
                }
                SearchOutcome::Exhausted => exhausted_searches += 1,
                SearchOutcome::None => {}
            }
        }
        if staged.is_empty() {
            break;
        }
        for rec in &staged {
            let k = rec.position.row * n + rec.position.col;
            values[k] = Some(rec.value);
            variances[k] = rec.variance.unwrap_or(0.0);
            synthetic[k] = true;
        }
        mask = Mask::new(m, n, mask.iter().chain(staged.iter().map(|rec| rec.position)))?;
        reconstructions.extend(staged);
    }
    let completed_values = mask.iter().map(|p| values[p.row * n + p.col].expect("value on mask")).collect();
    Ok(MinorClosureResult {
        completed: PartialMatrix::new(mask.clone(), completed_values)?,
        closure_mask: mask,
        steps,
        reconstructions,
        exhausted_searches,
        singular_skips,
    })
}

enum SearchOutcome {
    Found(Biclique),
    Singular,
    Exhausted,
    None,
}

fn witness_cells(b: &Biclique, p: Position) -> impl Iterator<Item = (usize, usize)> + '_ {
    let rows = b.rows.iter().copied().chain(std::iter::once(p.row));
    rows.flat_map(move |i| {
        b.cols
            .iter()
            .copied()
            .chain(std::iter::once(p.col))
            .map(move |j| (i, j))
    })
    .filter(move |&(i, j)| (i, j) != (p.row, p.col))
}

fn block(values: &[Option<f64>], n: usize, b: &Biclique) -> DMatrix<f64> {
    DMatrix::from_fn(b.rows.len(), b.cols.len(), |a, c| {
        values[b.rows[a] * n + b.cols[c]].expect("biclique lies in the mask")
    })
}

fn block_well_conditioned(values: &[Option<f64>], n: usize, b: &Biclique) -> bool {
    let sv = crate::linalg::singular_values(&block(values, n, b));
    let max = sv.max();
    max > 0.0 && sv.min() >= BLOCK_CONDITION_CUTOFF * max
}

/// `A_{i,J'} A_{I',J'}^+ A_{I',j}`.
fn pinv_entry(values: &[Option<f64>], n: usize, b: &Biclique, p: Position) -> f64 {
    let a = block(values, n, b);
    let pinv = crate::linalg::pseudo_inverse(&a, BLOCK_CONDITION_CUTOFF);
    let row = DMatrix::from_fn(1, b.cols.len(), |_, c| values[p.row * n + b.cols[c]].expect("observed"));
    let col = DMatrix::from_fn(b.rows.len(), 1, |a, _| values[b.rows[a] * n + p.col].expect("observed"));
    (row * pinv * col)[(0, 0)]
}

/// The `(r+1) x (r+1)` minor with the target last, and per-cell variances.
fn witness_minor(
    values: &[Option<f64>],
    variances: &[f64],
    n: usize,
    b: &Biclique,
    p: Position,
    target: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let rows: Vec<usize> = b.rows.iter().copied().chain([p.row]).collect();
    let cols: Vec<usize> = b.cols.iter().copied().chain([p.col]).collect();
    let k = rows.len();
    let minor = DMatrix::from_fn(k, k, |a, c| {
        if a == k - 1 && c == k - 1 {
            target
        } else {
            values[rows[a] * n + cols[c]].expect("observed")
        }
    });
    let sig = DMatrix::from_fn(k, k, |a, c| {
        if a == k - 1 && c == k - 1 {
            0.0
        } else {
            variances[rows[a] * n + cols[c]]
        }
    });
    (minor, sig)
}

/// Mask-only minor closure: entries are added whenever an `r x r`
/// biclique completes an almost-complete `(r+1) x (r+1)` pattern.
pub fn minor_closure_mask(mask: &Mask, r: usize, opts: &MinorClosureOptions) -> MaskClosure {
    let (m, n) = (mask.rows(), mask.cols());
    let mut cur = mask.clone();
    let mut steps = 0;
    let mut exhausted_searches = 0;
    while !cur.is_full() && opts.max_steps.is_none_or(|k| steps < k) {
        steps += 1;
        let view = cur.bipartite();
        let outcomes: Vec<(Position, Option<bool>)> = cur
            .complement()
            .into_par_iter()
            .map(|p| {
                let mut budget = opts.budget();
                let rows = view.col_neighbors(p.col).to_vec();
                let cols = view.row_neighbors(p.row).to_vec();
                let res = find_a_biclique_on(&cur, rows, cols, r, r, &mut budget, &mut |_| true);
                (p, res.ok().map(|b| b.is_some()))
            })
            .collect();
        exhausted_searches += outcomes.iter().filter(|(_, o)| o.is_none()).count();
        let added: Vec<Position> = outcomes.into_iter().filter(|(_, o)| *o == Some(true)).map(|(p, _)| p).collect();
        if added.is_empty() {
            break;
        }
        cur = Mask::new(m, n, cur.iter().chain(added)).expect("positions in bounds");
    }
    MaskClosure {
        closure: cur,
        steps,
        exhausted_searches,
    }
}

/// Whether one round of the minor-closure map reaches every position.
pub fn is_one_step_closable(mask: &Mask, r: usize) -> bool {
    let opts = MinorClosureOptions {
        max_steps: Some(1),
        ..Default::default()
    };
    minor_closure_mask(mask, r, &opts).is_complete()
}

/// Whether the minor closure reaches every position within `k` rounds.
pub fn is_k_step_closable(mask: &Mask, r: usize, k: usize) -> bool {
    let opts = MinorClosureOptions {
        max_steps: Some(k),
        ..Default::default()
    };
    minor_closure_mask(mask, r, &opts).is_complete()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntryVarianceEstimate {
    pub position: Position,
    pub estimate: f64,
    pub first_order_variance: f64,
}

/// Gradient of `det` at `a`: the cofactor matrix, computed from minors so it
/// stays valid when `a` is singular.
pub fn determinant_gradient(a: &DMatrix<f64>) -> DMatrix<f64> {
    let k = a.nrows();
    assert_eq!(k, a.ncols(), "square matrix expected");
    if k == 1 {
        return DMatrix::from_element(1, 1, 1.0);
    }
    DMatrix::from_fn(k, k, |p, q| {
        let minor = a.clone().remove_row(p).remove_column(q);
        let sign = if (p + q) % 2 == 0 { 1.0 } else { -1.0 };
        sign * minor.determinant()
    })
}

/// `Var(A_hat) = sum_e (dθ/dA_e)^2 A_e^2 σ_e^2 / (dθ/dA_target)^2` for the
/// minor `a` with the target at the bottom-right corner.
fn first_order_variance(a: &DMatrix<f64>, sigma_sq: &DMatrix<f64>) -> Result<f64> {
    let k = a.nrows();
    let grad = determinant_gradient(a);
    let g_target = grad[(k - 1, k - 1)];
    let scale = a.iter().fold(0.0f64, |s, x| s.max(x.abs())).powi(k as i32 - 1);
    if g_target == 0.0 || g_target.abs() <= 1e-14 * scale {
        return Err(Error::DegenerateMinor);
    }
    let mut acc = 0.0;
    for p in 0..k {
        for q in 0..k {
            if (p, q) != (k - 1, k - 1) {
                let t = grad[(p, q)] * a[(p, q)];
                acc += t * t * sigma_sq[(p, q)];
            }
        }
    }
    Ok(acc / (g_target * g_target))
}

/// Reconstructs `pos` from the `(r+1) x (r+1)` minor on `witness.rows + {k}`
/// by `witness.cols + {l}` and propagates the observation variances to first
/// order, with multiplicative noise `δA_e ≈ A_e δB_e`, `Var(δB_e) = σ_e^2`.
pub fn minor_variance(
    data: &PartialMatrix,
    noise: &NoiseModel,
    witness: &Biclique,
    pos: Position,
) -> Result<EntryVarianceEstimate> {
    if witness.rows.len() != witness.cols.len() {
        return Err(Error::InvalidArgument("witness must be square".into()));
    }
    let rows: Vec<usize> = witness.rows.iter().copied().chain([pos.row]).collect();
    let cols: Vec<usize> = witness.cols.iter().copied().chain([pos.col]).collect();
    let k = rows.len();
    let mut a = DMatrix::zeros(k, k);
    let mut sig = DMatrix::zeros(k, k);
    for p in 0..k {
        for q in 0..k {
            if (p, q) == (k - 1, k - 1) {
                continue;
            }
            let e = Position::new(rows[p], cols[q]);
            let (i, j) = e.to_one_based();
            a[(p, q)] = data.get(e).ok_or(Error::NotCompletable { row: i, col: j })?;
            sig[(p, q)] = noise.sigma_sq(e).ok_or(Error::NotCompletable { row: i, col: j })?;
        }
    }
    // det is affine in the target: det = c x + d
    let c = determinant_gradient(&a)[(k - 1, k - 1)];
    let d = a.determinant();
    let scale = a.iter().fold(0.0f64, |s, x| s.max(x.abs())).powi(k as i32 - 1);
    if c == 0.0 || c.abs() <= 1e-14 * scale {
        return Err(Error::DegenerateMinor);
    }
    let estimate = -d / c;
    a[(k - 1, k - 1)] = estimate;
    Ok(EntryVarianceEstimate {
        position: pos,
        estimate,
        first_order_variance: first_order_variance(&a, &sig)?,
    })
}
