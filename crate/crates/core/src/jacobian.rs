//! The masked Jacobian of `(U, V) -> (U V^T)_E` and the rank queries on it.
//!
//! The row of position `(i, j)` is `(e_i ⊗ v_j^T, e_j ⊗ u_i^T)`: the `r`
//! entries of `v_j` sit in the U-block at columns `i*r .. i*r + r`, and the
//! `r` entries of `u_i` in the V-block at columns `m*r + j*r ..`. Rows follow
//! the mask's row-major position order.
//!
//! Two interchangeable backends answer rank and span queries: a floating
//! SVD at a Gaussian point, and exact elimination over `Z/pZ` at a uniform
//! point.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::field::{next_prime_above, EchelonBasis, PrimeField, MERSENNE_61};
use crate::mask::{Mask, Position};
use crate::rng::{derive_seed, rng_from_seed};

/// Singular values at or below this fraction of the largest count as zero.
pub const SINGULAR_VALUE_CUTOFF: f64 = 1e-12;
/// A probe row is in the row span when its projection residual is at most this.
pub const RESIDUAL_CUTOFF: f64 = 1e-8;
/// Verdicts with a singular value in `(CUTOFF/10, CUTOFF*BAND]` (relative) or a
/// residual within a factor `BAND` of [`RESIDUAL_CUTOFF`] are ill-conditioned.
pub const ILL_CONDITIONING_BAND: f64 = 1e3;
/// Above this many dense entries the row space is built by incremental
/// orthogonalization instead of an SVD.
pub const DENSE_ENTRY_LIMIT: usize = 50_000_000;

/// Number of independent field samples drawn by [`RankBackend::modp`].
pub const DEFAULT_MODP_SAMPLES: usize = 2;

/// Gaussian factor matrices standing in for a generic rank-`r` point.
#[derive(Debug, Clone)]
pub struct FactorPair {
    u: DMatrix<f64>,
    v: DMatrix<f64>,
    seed: u64,
}

impl FactorPair {
    /// Samples `U` (`m x r`) and `V` (`n x r`) with i.i.d. standard normal
    /// entries, resampling in the measure-zero event that either factor
    /// misses full column rank.
    pub fn sample(m: usize, n: usize, r: usize, seed: u64) -> Self {
        let mut attempt = 0;
        loop {
            let s = if attempt == 0 { seed } else { derive_seed(seed, attempt) };
            let mut rng = rng_from_seed(s);
            let u = DMatrix::from_fn(m, r, |_, _| rng.sample::<f64, _>(StandardNormal));
            let v = DMatrix::from_fn(n, r, |_, _| rng.sample::<f64, _>(StandardNormal));
            if well_conditioned(&u) && well_conditioned(&v) {
                return FactorPair { u, v, seed: s };
            }
            attempt += 1;
        }
    }

    pub fn from_matrices(u: DMatrix<f64>, v: DMatrix<f64>) -> Result<Self> {
        if u.ncols() != v.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "U has {} columns, V has {}",
                u.ncols(),
                v.ncols()
            )));
        }
        Ok(FactorPair { u, v, seed: 0 })
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `U V^T`.
    pub fn product(&self) -> DMatrix<f64> {
        &self.u * self.v.transpose()
    }
}

fn well_conditioned(a: &DMatrix<f64>) -> bool {
    if a.nrows() < a.ncols() || a.ncols() == 0 {
        return true;
    }
    let sv = crate::linalg::singular_values(a);
    let max = sv.max();
    let min = sv.min();
    max > 0.0 && min > 1e-9 * max
}

/// Which prime the modular backend works over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrimeChoice {
    /// Smallest prime above `4 (m + n)^2`.
    Auto,
    /// `2^61 - 1`.
    Mersenne61,
    Fixed(u64),
}

impl PrimeChoice {
    pub fn prime_for(self, m: usize, n: usize) -> u64 {
        match self {
            PrimeChoice::Auto => {
                let s = (m + n) as u64;
                next_prime_above(4 * s * s)
            }
            PrimeChoice::Mersenne61 => MERSENNE_61,
            PrimeChoice::Fixed(p) => p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankBackend {
    FloatSvd,
    /// Exact elimination mod `p` at `samples` independent uniform points.
    /// Ranks take the maximum over samples; a probe counts as dependent
    /// only if it is dependent at every sample attaining that maximum.
    ModP { prime: PrimeChoice, samples: usize },
}

impl RankBackend {
    pub fn modp() -> Self {
        RankBackend::ModP {
            prime: PrimeChoice::Auto,
            samples: DEFAULT_MODP_SAMPLES,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RankBackend::FloatSvd => "svd",
            RankBackend::ModP { .. } => "modp",
        }
    }
}

/// Column layout shared by both scalar types.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub m: usize,
    pub n: usize,
    pub r: usize,
}

impl Layout {
    pub fn width(&self) -> usize {
        self.r * (self.m + self.n)
    }

    pub fn u_block(&self, i: usize) -> usize {
        i * self.r
    }

    pub fn v_block(&self, j: usize) -> usize {
        self.m * self.r + j * self.r
    }
}

/// Outcome of a row-span membership test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpanTest {
    pub member: bool,
    pub residual: f64,
    /// The residual fell within the ill-conditioning band.
    pub borderline: bool,
}

/// The floating-point Jacobian `J_E(U, V)`, stored implicitly through its factors.
#[derive(Debug, Clone)]
pub struct JacobianView {
    layout: Layout,
    positions: Vec<Position>,
    factors: FactorPair,
}

pub fn build_jacobian(factors: &FactorPair, mask: &Mask) -> Result<JacobianView> {
    if factors.u.nrows() != mask.rows() || factors.v.nrows() != mask.cols() {
        return Err(Error::DimensionMismatch(format!(
            "factors for {}x{}, mask {}x{}",
            factors.u.nrows(),
            factors.v.nrows(),
            mask.rows(),
            mask.cols()
        )));
    }
    Ok(JacobianView {
        layout: Layout {
            m: mask.rows(),
            n: mask.cols(),
            r: factors.rank(),
        },
        positions: mask.positions().to_vec(),
        factors: factors.clone(),
    })
}

impl JacobianView {
    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn nrows(&self) -> usize {
        self.positions.len()
    }

    pub fn ncols(&self) -> usize {
        self.layout.width()
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    pub fn factors(&self) -> &FactorPair {
        &self.factors
    }

    /// The `2r` structural nonzeros of the row for `p`, which need not be in the mask.
    pub fn row_entries(&self, p: Position) -> Vec<(usize, f64)> {
        let Layout { r, .. } = self.layout;
        let ub = self.layout.u_block(p.row);
        let vb = self.layout.v_block(p.col);
        let mut out = Vec::with_capacity(2 * r);
        for k in 0..r {
            out.push((ub + k, self.factors.v[(p.col, k)]));
        }
        for k in 0..r {
            out.push((vb + k, self.factors.u[(p.row, k)]));
        }
        out
    }

    pub fn probe_row(&self, p: Position) -> DVector<f64> {
        let mut row = DVector::zeros(self.ncols());
        for (c, x) in self.row_entries(p) {
            row[c] = x;
        }
        row
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.nrows(), self.ncols());
        for (k, &p) in self.positions.iter().enumerate() {
            for (c, x) in self.row_entries(p) {
                j[(k, c)] = x;
            }
        }
        j
    }

    /// Orthonormal basis of the row space.
    pub fn row_space(&self) -> RowSpace {
        if self.nrows() * self.ncols() <= DENSE_ENTRY_LIMIT {
            RowSpace::dense(self)
        } else {
            RowSpace::incremental(self)
        }
    }

    /// Numerical rank; errors when the verdict is ill-conditioned.
    pub fn rank(&self) -> Result<usize> {
        let rs = self.row_space();
        if rs.ill_conditioned {
            return Err(Error::IllConditioned { attempts: 1 });
        }
        Ok(rs.rank())
    }

    pub fn in_row_span(&self, probe: &DVector<f64>) -> Result<SpanTest> {
        if probe.len() != self.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "probe of length {}, Jacobian width {}",
                probe.len(),
                self.ncols()
            )));
        }
        let rs = self.row_space();
        if rs.ill_conditioned {
            return Err(Error::IllConditioned { attempts: 1 });
        }
        Ok(rs.test_dense(probe))
    }

    /// A Gaussian combination of an orthonormal basis of the left kernel, or
    /// `None` when `J_E` has full row rank.
    pub fn left_kernel_vector(&self, seed: u64) -> Option<DVector<f64>> {
        let rs = RowSpace::dense(self);
        let e = self.nrows();
        if rs.rank() >= e {
            return None;
        }
        // column space as J B, with B the row-space basis; SVD left vectors
        // for null singular values are not reliable
        let left = (self.to_dense() * &rs.basis).qr().q();
        let mut rng = rng_from_seed(seed);
        let mut g = DVector::from_fn(e, |_, _| rng.sample::<f64, _>(StandardNormal));
        // projecting twice keeps the result orthogonal to working precision
        for _ in 0..2 {
            let c = left.tr_mul(&g);
            g -= &left * c;
        }
        Some(g)
    }
}

/// Row space of a floating Jacobian as an orthonormal basis (columns of `basis`).
#[derive(Debug, Clone)]
pub struct RowSpace {
    basis: DMatrix<f64>,
    singular_values: Vec<f64>,
    ill_conditioned: bool,
}

impl RowSpace {
    fn dense(view: &JacobianView) -> Self {
        let e = view.nrows();
        let c = view.ncols();
        if e == 0 || c == 0 {
            return RowSpace {
                basis: DMatrix::zeros(c, 0),
                singular_values: Vec::new(),
                ill_conditioned: false,
            };
        }
        let j = view.to_dense();
        let svd = if e > c {
            // reduce to a square problem first
            crate::linalg::svd(&j.qr().r())
        } else {
            crate::linalg::svd(&j)
        };
        let (sv, v_t) = (svd.singular_values, svd.v_t);
        let max = sv.max();
        let cut = SINGULAR_VALUE_CUTOFF * max;
        let keep: Vec<usize> = (0..sv.len()).filter(|&k| max > 0.0 && sv[k] > cut).collect();
        let ill = sv
            .iter()
            .any(|&s| s > cut / 10.0 && s <= cut * ILL_CONDITIONING_BAND);
        let basis = DMatrix::from_fn(c, keep.len(), |row, k| v_t[(keep[k], row)]);
        let mut singular_values: Vec<f64> = sv.iter().copied().collect();
        singular_values.sort_by(|a, b| b.total_cmp(a));
        RowSpace {
            basis,
            singular_values,
            ill_conditioned: ill,
        }
    }

    /// Classical Gram-Schmidt with reorthogonalization over the rows in order.
    fn incremental(view: &JacobianView) -> Self {
        let c = view.ncols();
        let mut cols: Vec<DVector<f64>> = Vec::new();
        let mut ill = false;
        for &p in view.positions() {
            let mut x = view.probe_row(p);
            for _ in 0..2 {
                for b in &cols {
                    let d = b.dot(&x);
                    x.axpy(-d, b, 1.0);
                }
            }
            let res = x.norm();
            if residual_borderline(res) {
                ill = true;
            }
            if res > RESIDUAL_CUTOFF {
                cols.push(x / res);
            }
        }
        let basis = if cols.is_empty() {
            DMatrix::zeros(c, 0)
        } else {
            DMatrix::from_columns(&cols)
        };
        RowSpace {
            basis,
            singular_values: Vec::new(),
            ill_conditioned: ill,
        }
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn is_ill_conditioned(&self) -> bool {
        self.ill_conditioned
    }

    /// Singular values in descending order (empty for the incremental build).
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// Membership test for a sparse row given as `(column, value)` pairs.
    pub fn test_sparse(&self, entries: &[(usize, f64)]) -> SpanTest {
        let k = self.rank();
        let mut coeff = DVector::zeros(k);
        for &(c, x) in entries {
            coeff.axpy(x, &self.basis.row(c).transpose(), 1.0);
        }
        let mut resid = &self.basis * coeff;
        resid.neg_mut();
        for &(c, x) in entries {
            resid[c] += x;
        }
        span_test(resid.norm())
    }

    pub fn test_dense(&self, probe: &DVector<f64>) -> SpanTest {
        let coeff = self.basis.tr_mul(probe);
        let resid = probe - &self.basis * coeff;
        span_test(resid.norm())
    }
}

fn residual_borderline(res: f64) -> bool {
    res > RESIDUAL_CUTOFF / ILL_CONDITIONING_BAND && res < RESIDUAL_CUTOFF * ILL_CONDITIONING_BAND
}

fn span_test(residual: f64) -> SpanTest {
    SpanTest {
        member: residual <= RESIDUAL_CUTOFF,
        residual,
        borderline: residual_borderline(residual),
    }
}

/// Factors with entries drawn uniformly from `Z/pZ`.
#[derive(Debug, Clone)]
pub struct FieldFactors {
    field: PrimeField,
    m: usize,
    n: usize,
    r: usize,
    u: Vec<u64>,
    v: Vec<u64>,
}

impl FieldFactors {
    pub fn sample(m: usize, n: usize, r: usize, prime: u64, seed: u64) -> Self {
        let field = PrimeField::new(prime);
        let mut rng = rng_from_seed(seed);
        let u = (0..m * r).map(|_| rng.random_range(0..prime)).collect();
        let v = (0..n * r).map(|_| rng.random_range(0..prime)).collect();
        FieldFactors {
            field,
            m,
            n,
            r,
            u,
            v,
        }
    }

    pub fn field(&self) -> PrimeField {
        self.field
    }
}

/// The Jacobian over `Z/pZ`.
#[derive(Debug, Clone)]
pub struct FieldJacobian {
    layout: Layout,
    positions: Vec<Position>,
    factors: FieldFactors,
}

pub fn build_field_jacobian(factors: &FieldFactors, mask: &Mask) -> Result<FieldJacobian> {
    if factors.m != mask.rows() || factors.n != mask.cols() {
        return Err(Error::DimensionMismatch(format!(
            "factors for {}x{}, mask {}x{}",
            factors.m,
            factors.n,
            mask.rows(),
            mask.cols()
        )));
    }
    Ok(FieldJacobian {
        layout: Layout {
            m: factors.m,
            n: factors.n,
            r: factors.r,
        },
        positions: mask.positions().to_vec(),
        factors: factors.clone(),
    })
}

impl FieldJacobian {
    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn field(&self) -> PrimeField {
        self.factors.field
    }

    pub fn row(&self, p: Position) -> Vec<u64> {
        let Layout { r, .. } = self.layout;
        let mut row = vec![0u64; self.layout.width()];
        let ub = self.layout.u_block(p.row);
        let vb = self.layout.v_block(p.col);
        for k in 0..r {
            row[ub + k] = self.factors.v[p.col * r + k];
            row[vb + k] = self.factors.u[p.row * r + k];
        }
        row
    }

    pub fn echelon(&self) -> EchelonBasis {
        let mut basis = EchelonBasis::new(self.factors.field, self.layout.width());
        for &p in &self.positions {
            basis.insert(self.row(p));
        }
        basis
    }

    pub fn rank(&self) -> usize {
        self.echelon().rank()
    }

    /// Whether appending `probe` leaves the rank unchanged.
    pub fn in_row_span(&self, probe: &[u64]) -> bool {
        self.echelon().contains(probe)
    }
}

/// Maximum number of factor resamples after an ill-conditioned float verdict.
pub const MAX_RESAMPLES: usize = 3;

/// `rank_r(E)`, with fresh factors on ill-conditioned float verdicts.
pub fn rank_of(mask: &Mask, r: usize, backend: RankBackend, seed: u64) -> Result<usize> {
    match backend {
        RankBackend::FloatSvd => {
            for attempt in 0..=MAX_RESAMPLES {
                let f = FactorPair::sample(mask.rows(), mask.cols(), r, derive_seed(seed, attempt as u64));
                let rs = build_jacobian(&f, mask)?.row_space();
                if !rs.is_ill_conditioned() {
                    return Ok(rs.rank());
                }
                log::debug!("ill-conditioned rank verdict, resampling (attempt {attempt})");
            }
            Err(Error::IllConditioned {
                attempts: MAX_RESAMPLES + 1,
            })
        }
        RankBackend::ModP { prime, samples } => {
            let p = prime.prime_for(mask.rows(), mask.cols());
            let mut best = 0;
            for s in 0..samples.max(1) {
                let f = FieldFactors::sample(mask.rows(), mask.cols(), r, p, derive_seed(seed, s as u64));
                best = best.max(build_field_jacobian(&f, mask)?.rank());
            }
            Ok(best)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::ambient_dimension;

    fn pos(i: usize, j: usize) -> Position {
        Position::one_based(i, j)
    }

    #[test]
    fn two_by_two_row_layout() {
        let u = DMatrix::from_row_slice(2, 1, &[2.0, 3.0]);
        let v = DMatrix::from_row_slice(2, 1, &[5.0, 7.0]);
        let f = FactorPair::from_matrices(u, v).unwrap();
        let jac = build_jacobian(&f, &Mask::full(2, 2)).unwrap();
        let j = jac.to_dense();
        assert_eq!(j.shape(), (4, 4));
        // row (1,2) = (v2, 0, 0, u1)
        assert_eq!(j.row(1).iter().copied().collect::<Vec<_>>(), vec![7.0, 0.0, 0.0, 2.0]);
        for k in 0..4 {
            assert_eq!(j.row(k).iter().filter(|x| **x != 0.0).count(), 2);
        }
    }

    #[test]
    fn full_mask_rank_is_ambient_dimension() {
        for (m, n, r) in [(5, 5, 2), (4, 6, 1), (6, 3, 3), (7, 5, 2)] {
            let mask = Mask::full(m, n);
            let d = ambient_dimension(m, n, r);
            assert_eq!(rank_of(&mask, r, RankBackend::FloatSvd, 1).unwrap(), d);
            assert_eq!(rank_of(&mask, r, RankBackend::modp(), 1).unwrap(), d);
        }
        assert_eq!(rank_of(&Mask::full(5, 5), 2, RankBackend::FloatSvd, 9).unwrap(), 16);
    }

    #[test]
    fn empty_mask_rank_zero() {
        let mask = Mask::empty(3, 4);
        assert_eq!(rank_of(&mask, 2, RankBackend::FloatSvd, 0).unwrap(), 0);
        assert_eq!(rank_of(&mask, 2, RankBackend::modp(), 0).unwrap(), 0);
    }

    #[test]
    fn probe_membership() {
        let mask = Mask::from_one_based(2, 2, &[(1, 1), (1, 2), (2, 1)]).unwrap();
        let f = FactorPair::sample(2, 2, 1, 3);
        let jac = build_jacobian(&f, &mask).unwrap();
        let t = jac.in_row_span(&jac.probe_row(pos(1, 2))).unwrap();
        assert!(t.member && t.residual < 1e-12);
        assert!(jac.in_row_span(&jac.probe_row(pos(2, 2))).unwrap().member);

        let single = Mask::from_one_based(2, 2, &[(1, 1)]).unwrap();
        let jac = build_jacobian(&f, &single).unwrap();
        let t = jac.in_row_span(&jac.probe_row(pos(2, 2))).unwrap();
        assert!(!t.member && !t.borderline);

        let ff = FieldFactors::sample(2, 2, 1, 101, 5);
        let fj = build_field_jacobian(&ff, &single).unwrap();
        assert!(!fj.in_row_span(&fj.row(pos(2, 2))));
    }

    #[test]
    fn left_kernel_dimensions() {
        let f = FactorPair::sample(3, 3, 1, 11);
        let jac = build_jacobian(&f, &Mask::full(3, 3)).unwrap();
        let rs = RowSpace::dense(&jac);
        assert_eq!(9 - rs.rank(), 4);
        let k = jac.left_kernel_vector(2).unwrap();
        assert_eq!(k.len(), 9);

        let f = FactorPair::sample(2, 2, 1, 4);
        let jac = build_jacobian(&f, &Mask::full(2, 2)).unwrap();
        let k = jac.left_kernel_vector(8).unwrap();
        let j = jac.to_dense();
        let resid = (k.transpose() * &j).norm();
        assert!(resid <= 1e-8 * k.norm() * j.norm());

        // an independent set has a trivial left kernel
        let mask = Mask::from_one_based(2, 2, &[(1, 1), (1, 2), (2, 1)]).unwrap();
        let jac = build_jacobian(&f, &mask).unwrap();
        assert!(jac.left_kernel_vector(1).is_none());
    }

    #[test]
    fn incremental_matches_dense() {
        let mask = Mask::from_one_based(
            5,
            5,
            &[(1, 1), (1, 2), (1, 3), (2, 1), (2, 2), (2, 3), (3, 1), (3, 2), (3, 4), (3, 5), (4, 3), (4, 4), (4, 5), (5, 3), (5, 4), (5, 5)],
        )
        .unwrap();
        let f = FactorPair::sample(5, 5, 2, 17);
        let jac = build_jacobian(&f, &mask).unwrap();
        let dense = RowSpace::dense(&jac);
        let inc = RowSpace::incremental(&jac);
        assert_eq!(dense.rank(), 15);
        assert_eq!(inc.rank(), 15);
        for p in mask.complement() {
            let a = dense.test_sparse(&jac.row_entries(p));
            let b = inc.test_sparse(&jac.row_entries(p));
            assert_eq!(a.member, b.member);
        }
    }

    #[test]
    fn modp_rank_with_large_prime() {
        let backend = RankBackend::ModP {
            prime: PrimeChoice::Mersenne61,
            samples: 1,
        };
        assert_eq!(rank_of(&Mask::full(4, 5), 2, backend, 3).unwrap(), 14);
    }
}
