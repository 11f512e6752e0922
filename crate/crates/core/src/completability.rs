//! Finitely completable closure, single-entry completability, stresses and
//! the stress-rank uniqueness certificate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::field::EchelonBasis;
use crate::jacobian::{
    build_field_jacobian, build_jacobian, FactorPair, FieldFactors, FieldJacobian, RankBackend, MAX_RESAMPLES,
};
use crate::mask::{ambient_dimension, Mask, Position};
use crate::rng::derive_seed;

/// Relative cutoff for the rank of a reshaped stress.
pub const STRESS_RANK_CUTOFF: f64 = 1e-9;
/// Independent stress draws per [`stress_rank`] call; the maximum rank is kept.
pub const STRESS_TRIES: u64 = 2;

/// Verdict for one missing position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub position: Position,
    pub member: bool,
    /// Projection residual; `None` for the modular backend.
    pub residual: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ClosureResult {
    pub closure: Mask,
    /// One entry per position outside the input mask, in row-major order.
    pub probes: Vec<Probe>,
    pub backend: RankBackend,
    /// `rank_r(E)` as seen by the deciding factor sample(s).
    pub rank: usize,
    /// Factor resamples caused by ill-conditioned float verdicts.
    pub resamples: usize,
}

impl ClosureResult {
    pub fn added(&self) -> Vec<Position> {
        self.probes.iter().filter(|p| p.member).map(|p| p.position).collect()
    }

    pub fn is_everything(&self) -> bool {
        self.closure.is_full()
    }
}

/// `cl_r(E)`: every position whose Jacobian row lies in the row span of `J_E`.
pub fn completable_closure(mask: &Mask, r: usize, backend: RankBackend, seed: u64) -> Result<ClosureResult> {
    let missing = mask.complement();
    probe_positions(mask, r, backend, seed, &missing)
}

/// Whether `pos` lies in `cl_r(E)`. Positions already in `E` trivially do.
pub fn is_finitely_completable(mask: &Mask, r: usize, pos: Position, backend: RankBackend, seed: u64) -> Result<bool> {
    if pos.row >= mask.rows() || pos.col >= mask.cols() {
        let (i, j) = pos.to_one_based();
        return Err(Error::OutOfBounds {
            row: i,
            col: j,
            m: mask.rows(),
            n: mask.cols(),
        });
    }
    if mask.contains(pos) {
        return Ok(true);
    }
    let res = probe_positions(mask, r, backend, seed, &[pos])?;
    Ok(res.probes[0].member)
}

/// Whether `cl_r(E)` is everything, decided by `rank_r(E) = d_r(m, n)`.
pub fn is_completable(mask: &Mask, r: usize, backend: RankBackend, seed: u64) -> Result<bool> {
    let d = ambient_dimension(mask.rows(), mask.cols(), r);
    if mask.len() < d {
        return Ok(false);
    }
    Ok(crate::jacobian::rank_of(mask, r, backend, seed)? == d)
}

fn probe_positions(mask: &Mask, r: usize, backend: RankBackend, seed: u64, probes: &[Position]) -> Result<ClosureResult> {
    if r == 0 {
        return Err(Error::InvalidArgument("rank must be at least 1".into()));
    }
    let (m, n) = (mask.rows(), mask.cols());
    match backend {
        RankBackend::FloatSvd => {
            for attempt in 0..=MAX_RESAMPLES {
                let factors = FactorPair::sample(m, n, r, derive_seed(seed, attempt as u64));
                let view = build_jacobian(&factors, mask)?;
                let space = view.row_space();
                let mut ill = space.is_ill_conditioned();
                let mut out = Vec::with_capacity(probes.len());
                if !ill {
                    for &p in probes {
                        let t = space.test_sparse(&view.row_entries(p));
                        if t.borderline {
                            ill = true;
                            break;
                        }
                        out.push(Probe {
                            position: p,
                            member: t.member,
                            residual: Some(t.residual),
                        });
                    }
                }
                if ill {
                    log::debug!("ill-conditioned closure verdict, resampling (attempt {attempt})");
                    continue;
                }
                return Ok(assemble(mask, out, backend, space.rank(), attempt));
            }
            Err(Error::IllConditioned {
                attempts: MAX_RESAMPLES + 1,
            })
        }
        RankBackend::ModP { prime, samples } => {
            let p = prime.prime_for(m, n);
            let mut bases: Vec<(FieldJacobian, EchelonBasis)> = Vec::new();
            for s in 0..samples.max(1) {
                let f = FieldFactors::sample(m, n, r, p, derive_seed(seed, s as u64));
                let jac = build_field_jacobian(&f, mask)?;
                let echelon = jac.echelon();
                bases.push((jac, echelon));
            }
            let rank = bases.iter().map(|(_, b)| b.rank()).max().unwrap_or(0);
            // a sample below the maximum rank is degenerate and cannot vote
            let voters: Vec<&(FieldJacobian, EchelonBasis)> = bases.iter().filter(|(_, b)| b.rank() == rank).collect();
            let out = probes
                .iter()
                .map(|&pos| Probe {
                    position: pos,
                    member: voters.iter().all(|(j, b)| b.contains(&j.row(pos))),
                    residual: None,
                })
                .collect();
            Ok(assemble(mask, out, backend, rank, 0))
        }
    }
}

fn assemble(mask: &Mask, probes: Vec<Probe>, backend: RankBackend, rank: usize, resamples: usize) -> ClosureResult {
    let added = probes.iter().filter(|p| p.member).map(|p| p.position);
    let closure = Mask::new(mask.rows(), mask.cols(), mask.iter().chain(added)).expect("positions in bounds");
    ClosureResult {
        closure,
        probes,
        backend,
        rank,
        resamples,
    }
}

/// An `m x n` matrix supported on `E` whose vectorization is in the left
/// kernel of `J_E` at `factors`.
#[derive(Debug, Clone)]
pub struct Stress {
    pub entries: DMatrix<f64>,
    /// The left-kernel vector, indexed by the mask's row-major positions.
    pub kernel_vector: DVector<f64>,
    pub factors: FactorPair,
}

impl Stress {
    /// `(|U^T S|, |S V|)` relative to `|U| |S|` and `|S| |V|` (Frobenius).
    pub fn factor_residuals(&self) -> (f64, f64) {
        let s = self.entries.norm();
        if s == 0.0 {
            return (0.0, 0.0);
        }
        let u = self.factors.u();
        let v = self.factors.v();
        let left = (u.transpose() * &self.entries).norm() / (u.norm() * s);
        let right = (&self.entries * v).norm() / (s * v.norm());
        (left, right)
    }

    /// `|k^T J_E| / (|k| |J_E|)`.
    pub fn kernel_residual(&self, mask: &Mask) -> f64 {
        let j = build_jacobian(&self.factors, mask).expect("stress built from this mask").to_dense();
        let k = &self.kernel_vector;
        let denom = k.norm() * j.norm();
        if denom == 0.0 {
            return 0.0;
        }
        (j.tr_mul(k)).norm() / denom
    }

    pub fn rank(&self) -> usize {
        numerical_rank(&self.entries, STRESS_RANK_CUTOFF)
    }
}

fn numerical_rank(a: &DMatrix<f64>, rel: f64) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = crate::linalg::singular_values(a);
    let max = sv.max();
    if max <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel * max).count()
}

/// A random stress of `E`, or `None` when `J_E` has full row rank.
pub fn sample_stress(mask: &Mask, r: usize, seed: u64) -> Result<Option<Stress>> {
    let factors = FactorPair::sample(mask.rows(), mask.cols(), r, derive_seed(seed, 0));
    let view = build_jacobian(&factors, mask)?;
    let Some(k) = view.left_kernel_vector(derive_seed(seed, 1)) else {
        return Ok(None);
    };
    let mut entries = DMatrix::zeros(mask.rows(), mask.cols());
    for (idx, p) in mask.iter().enumerate() {
        entries[(p.row, p.col)] = k[idx];
    }
    Ok(Some(Stress {
        entries,
        kernel_vector: k,
        factors,
    }))
}

/// The generic stress rank `rho(E)`, as the maximum over [`STRESS_TRIES`] draws.
pub fn stress_rank(mask: &Mask, r: usize, seed: u64) -> Result<usize> {
    let mut best = 0;
    for t in 0..STRESS_TRIES {
        if let Some(s) = sample_stress(mask, r, derive_seed(seed, 100 + t))? {
            best = best.max(s.rank());
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    CertifiedUnique,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UniquenessVerdict {
    pub stress_rank: usize,
    pub threshold: usize,
    pub verdict: Verdict,
}

/// Certifies `cl_r(E) = ucl_r(E)` when `rho(E) >= min(m, n) - r`.
/// `Inconclusive` says nothing about non-uniqueness.
pub fn uniqueness_certificate(mask: &Mask, r: usize, seed: u64) -> Result<UniquenessVerdict> {
    let threshold = mask.rows().min(mask.cols()).saturating_sub(r);
    let rho = stress_rank(mask, r, seed)?;
    Ok(UniquenessVerdict {
        stress_rank: rho,
        threshold,
        verdict: if rho >= threshold {
            Verdict::CertifiedUnique
        } else {
            Verdict::Inconclusive
        },
    })
}
