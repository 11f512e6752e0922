//! Observation masks, partial matrices and per-entry noise levels.
//!
//! Positions are 0-based inside the crate. The text formats read and write
//! 1-based indices:
//!
//! ```text
//! m n
//! i j            # mask
//! i j value      # partial matrix / noise model
//! ```

use std::fmt::Write as _;

use fixedbitset::FixedBitSet;

use crate::error::{Error, Result};

/// A matrix position `(row, col)`, 0-based. The derived ordering is row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Position {
    pub row: usize,
    pub col: usize,
}

impl Position {
    pub const fn new(row: usize, col: usize) -> Self {
        Position { row, col }
    }

    /// Builds a position from 1-based indices.
    pub fn one_based(row: usize, col: usize) -> Self {
        Position::new(row - 1, col - 1)
    }

    pub fn to_one_based(self) -> (usize, usize) {
        (self.row + 1, self.col + 1)
    }
}

impl From<(usize, usize)> for Position {
    fn from((row, col): (usize, usize)) -> Self {
        Position::new(row, col)
    }
}

/// The dimension `d_r(m, n)` of the variety of `m x n` matrices of rank at most `r`.
pub fn ambient_dimension(m: usize, n: usize, r: usize) -> usize {
    if m >= r && n >= r {
        r * (m + n - r)
    } else {
        m * n
    }
}

/// A set of observed positions of an `m x n` matrix, kept in row-major order.
#[derive(Clone, PartialEq, Eq)]
pub struct Mask {
    m: usize,
    n: usize,
    positions: Vec<Position>,
    bits: FixedBitSet,
}

impl std::fmt::Debug for Mask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Mask")
            .field("m", &self.m)
            .field("n", &self.n)
            .field("positions", &self.positions)
            .finish()
    }
}

impl Mask {
    /// Builds a mask from 0-based positions. Duplicates are dropped.
    pub fn new(m: usize, n: usize, positions: impl IntoIterator<Item = Position>) -> Result<Self> {
        let mut bits = FixedBitSet::with_capacity(m * n);
        for p in positions {
            if p.row >= m || p.col >= n {
                return Err(Error::OutOfBounds {
                    row: p.row + 1,
                    col: p.col + 1,
                    m,
                    n,
                });
            }
            bits.insert(p.row * n + p.col);
        }
        Ok(Self::from_bits(m, n, bits))
    }

    /// Builds a mask from 1-based `(row, col)` pairs.
    pub fn from_one_based(m: usize, n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut positions = Vec::with_capacity(pairs.len());
        for &(i, j) in pairs {
            if i == 0 || j == 0 || i > m || j > n {
                return Err(Error::OutOfBounds { row: i, col: j, m, n });
            }
            positions.push(Position::one_based(i, j));
        }
        Self::new(m, n, positions)
    }

    fn from_bits(m: usize, n: usize, bits: FixedBitSet) -> Self {
        let positions = bits.ones().map(|k| Position::new(k / n, k % n)).collect();
        Mask {
            m,
            n,
            positions,
            bits,
        }
    }

    pub fn empty(m: usize, n: usize) -> Self {
        Self::from_bits(m, n, FixedBitSet::with_capacity(m * n))
    }

    pub fn full(m: usize, n: usize) -> Self {
        let mut bits = FixedBitSet::with_capacity(m * n);
        bits.insert_range(..);
        Self::from_bits(m, n, bits)
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.positions.len() == self.m * self.n
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    pub fn iter(&self) -> impl Iterator<Item = Position> + '_ {
        self.positions.iter().copied()
    }

    pub fn contains(&self, p: Position) -> bool {
        p.row < self.m && p.col < self.n && self.bits.contains(p.row * self.n + p.col)
    }

    /// Index of `p` in the row-major position list; this is also its row in the Jacobian.
    pub fn index_of(&self, p: Position) -> Option<usize> {
        self.positions.binary_search(&p).ok()
    }

    /// Unobserved positions in row-major order.
    pub fn complement(&self) -> Vec<Position> {
        let mut out = Vec::with_capacity(self.m * self.n - self.len());
        for k in 0..self.m * self.n {
            if !self.bits.contains(k) {
                out.push(Position::new(k / self.n, k % self.n));
            }
        }
        out
    }

    pub fn with(&self, p: Position) -> Self {
        let mut bits = self.bits.clone();
        bits.insert(p.row * self.n + p.col);
        Self::from_bits(self.m, self.n, bits)
    }

    pub fn without(&self, p: Position) -> Self {
        let mut bits = self.bits.clone();
        bits.set(p.row * self.n + p.col, false);
        Self::from_bits(self.m, self.n, bits)
    }

    pub fn union(&self, other: &Mask) -> Result<Self> {
        self.check_same_shape(other)?;
        let mut bits = self.bits.clone();
        bits.union_with(&other.bits);
        Ok(Self::from_bits(self.m, self.n, bits))
    }

    pub fn intersection(&self, other: &Mask) -> Result<Self> {
        self.check_same_shape(other)?;
        let mut bits = self.bits.clone();
        bits.intersect_with(&other.bits);
        Ok(Self::from_bits(self.m, self.n, bits))
    }

    pub fn is_subset(&self, other: &Mask) -> bool {
        self.m == other.m && self.n == other.n && self.bits.is_subset(&other.bits)
    }

    fn check_same_shape(&self, other: &Mask) -> Result<()> {
        if self.m != other.m || self.n != other.n {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.m, self.n, other.m, other.n
            )));
        }
        Ok(())
    }

    pub fn row_degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.m];
        for p in &self.positions {
            d[p.row] += 1;
        }
        d
    }

    pub fn col_degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for p in &self.positions {
            d[p.col] += 1;
        }
        d
    }

    /// The submask on the given rows and columns, re-indexed densely in the
    /// order the indices are listed.
    pub fn restrict(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut bits = FixedBitSet::with_capacity(rows.len() * cols.len());
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                if self.contains(Position::new(i, j)) {
                    bits.insert(a * cols.len() + b);
                }
            }
        }
        Self::from_bits(rows.len(), cols.len(), bits)
    }

    pub fn bipartite(&self) -> BipartiteView {
        BipartiteView::new(self)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.m, self.n);
        for p in &self.positions {
            let _ = writeln!(s, "{} {}", p.row + 1, p.col + 1);
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let (m, n, records) = parse_records(text, false)?;
        let pairs: Vec<(usize, usize)> = records.iter().map(|r| (r.row, r.col)).collect();
        Self::from_one_based(m, n, &pairs)
    }
}

/// The bipartite graph `G(E)` with row vertices `[m]` and column vertices `[n]`.
///
/// Adjacency is stored for the whole ambient vertex set; `row_vertices` and
/// `col_vertices` list only the vertices with at least one incident position.
#[derive(Debug, Clone)]
pub struct BipartiteView {
    m: usize,
    n: usize,
    row_adj: Vec<Vec<usize>>,
    col_adj: Vec<Vec<usize>>,
    edges: usize,
}

impl BipartiteView {
    pub fn new(mask: &Mask) -> Self {
        let mut row_adj = vec![Vec::new(); mask.rows()];
        let mut col_adj = vec![Vec::new(); mask.cols()];
        // row-major iteration keeps both lists sorted
        for p in mask.iter() {
            row_adj[p.row].push(p.col);
            col_adj[p.col].push(p.row);
        }
        BipartiteView {
            m: mask.rows(),
            n: mask.cols(),
            row_adj,
            col_adj,
            edges: mask.len(),
        }
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }

    pub fn row_neighbors(&self, i: usize) -> &[usize] {
        &self.row_adj[i]
    }

    pub fn col_neighbors(&self, j: usize) -> &[usize] {
        &self.col_adj[j]
    }

    pub fn row_vertices(&self) -> Vec<usize> {
        (0..self.m).filter(|&i| !self.row_adj[i].is_empty()).collect()
    }

    pub fn col_vertices(&self) -> Vec<usize> {
        (0..self.n).filter(|&j| !self.col_adj[j].is_empty()).collect()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.row_adj[i].binary_search(&j).is_ok()
    }
}

/// Observed values on a mask; `values[k]` belongs to `mask.positions()[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialMatrix {
    mask: Mask,
    values: Vec<f64>,
}

impl PartialMatrix {
    pub fn new(mask: Mask, values: Vec<f64>) -> Result<Self> {
        if values.len() != mask.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} positions",
                values.len(),
                mask.len()
            )));
        }
        Ok(PartialMatrix { mask, values })
    }

    /// Applies the masking projection to a full matrix.
    pub fn observe(full: &nalgebra::DMatrix<f64>, mask: &Mask) -> Result<Self> {
        if full.nrows() != mask.rows() || full.ncols() != mask.cols() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix, {}x{} mask",
                full.nrows(),
                full.ncols(),
                mask.rows(),
                mask.cols()
            )));
        }
        let values = mask.iter().map(|p| full[(p.row, p.col)]).collect();
        Ok(PartialMatrix {
            mask: mask.clone(),
            values,
        })
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, p: Position) -> Option<f64> {
        self.mask.index_of(p).map(|k| self.values[k])
    }

    pub fn iter(&self) -> impl Iterator<Item = (Position, f64)> + '_ {
        self.mask.iter().zip(self.values.iter().copied())
    }

    pub fn to_text(&self) -> String {
        write_triples(&self.mask, &self.values)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let (mask, values) = parse_triples(text)?;
        Self::new(mask, values)
    }
}

/// Per-position variances of multiplicative log-scale noise.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    mask: Mask,
    sigma_sq: Vec<f64>,
}

impl NoiseModel {
    pub fn new(mask: Mask, sigma_sq: Vec<f64>) -> Result<Self> {
        if sigma_sq.len() != mask.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} variances for {} positions",
                sigma_sq.len(),
                mask.len()
            )));
        }
        if let Some((p, s)) = mask
            .iter()
            .zip(&sigma_sq)
            .find(|(_, s)| !(**s >= 0.0 && s.is_finite()))
        {
            let (i, j) = p.to_one_based();
            return Err(Error::InvalidArgument(format!(
                "variance {s} at ({i}, {j}) is not a finite nonnegative number"
            )));
        }
        Ok(NoiseModel { mask, sigma_sq })
    }

    pub fn uniform(mask: &Mask, sigma_sq: f64) -> Result<Self> {
        Self::new(mask.clone(), vec![sigma_sq; mask.len()])
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn sigma_sq(&self, p: Position) -> Option<f64> {
        self.mask.index_of(p).map(|k| self.sigma_sq[k])
    }

    pub fn values(&self) -> &[f64] {
        &self.sigma_sq
    }

    /// Keeps the variances of the positions in `mask`, which must be covered.
    pub fn restrict_to(&self, mask: &Mask) -> Result<Self> {
        let mut out = Vec::with_capacity(mask.len());
        for p in mask.iter() {
            match self.sigma_sq(p) {
                Some(s) => out.push(s),
                None => {
                    let (i, j) = p.to_one_based();
                    return Err(Error::DimensionMismatch(format!(
                        "noise model has no variance for ({i}, {j})"
                    )));
                }
            }
        }
        Self::new(mask.clone(), out)
    }

    pub fn to_text(&self) -> String {
        write_triples(&self.mask, &self.sigma_sq)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let (mask, values) = parse_triples(text)?;
        Self::new(mask, values)
    }
}

struct Record {
    row: usize,
    col: usize,
    value: Option<f64>,
}

fn parse_usize(tok: &str, line: usize, what: &str) -> Result<usize> {
    tok.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("bad {what} '{tok}'"),
    })
}

fn parse_records(text: &str, with_values: bool) -> Result<(usize, usize, Vec<Record>)> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let (hline, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "missing 'm n' header".into(),
    })?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 2 {
        return Err(Error::Parse {
            line: hline,
            msg: "header must be 'm n'".into(),
        });
    }
    let m = parse_usize(toks[0], hline, "row count")?;
    let n = parse_usize(toks[1], hline, "column count")?;
    let want = if with_values { 3 } else { 2 };
    let mut records = Vec::new();
    for (line, l) in lines {
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != want {
            return Err(Error::Parse {
                line,
                msg: format!("expected {want} fields, found {}", toks.len()),
            });
        }
        let row = parse_usize(toks[0], line, "row index")?;
        let col = parse_usize(toks[1], line, "column index")?;
        let value = if with_values {
            Some(toks[2].parse::<f64>().map_err(|_| Error::Parse {
                line,
                msg: format!("bad value '{}'", toks[2]),
            })?)
        } else {
            None
        };
        if row == 0 || col == 0 || row > m || col > n {
            return Err(Error::Parse {
                line,
                msg: format!("position ({row}, {col}) outside {m}x{n}"),
            });
        }
        records.push(Record {
            row,
            col,
            value,
        });
    }
    Ok((m, n, records))
}

fn parse_triples(text: &str) -> Result<(Mask, Vec<f64>)> {
    let (m, n, records) = parse_records(text, true)?;
    let mut dense: Vec<Option<f64>> = vec![None; m * n];
    for r in &records {
        dense[(r.row - 1) * n + (r.col - 1)] = r.value;
    }
    let mut positions = Vec::new();
    let mut values = Vec::new();
    for (k, v) in dense.into_iter().enumerate() {
        if let Some(v) = v {
            positions.push(Position::new(k / n, k % n));
            values.push(v);
        }
    }
    Ok((Mask::new(m, n, positions)?, values))
}

fn write_triples(mask: &Mask, values: &[f64]) -> String {
    let mut s = format!("{} {}\n", mask.rows(), mask.cols());
    for (p, v) in mask.iter().zip(values) {
        let _ = writeln!(s, "{} {} {}", p.row + 1, p.col + 1, v);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m2() -> Mask {
        Mask::from_one_based(3, 3, &[(1, 1), (1, 3), (2, 2), (3, 1), (3, 3)]).unwrap()
    }

    #[test]
    fn builds_first_example_mask() {
        let m1 = Mask::from_one_based(3, 3, &[(1, 1), (1, 3), (2, 1), (2, 2), (3, 1)]).unwrap();
        assert_eq!(m1.len(), 5);
        assert!(m1.contains(Position::one_based(2, 2)));
        assert!(!m1.contains(Position::one_based(3, 3)));
    }

    #[test]
    fn empty_and_duplicates() {
        assert_eq!(Mask::from_one_based(2, 2, &[]).unwrap().len(), 0);
        assert_eq!(Mask::from_one_based(2, 2, &[(1, 1), (1, 1)]).unwrap().len(), 1);
    }

    #[test]
    fn out_of_bounds_reports_pair() {
        match Mask::from_one_based(2, 3, &[(1, 1), (3, 2)]) {
            Err(Error::OutOfBounds { row: 3, col: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(Mask::from_one_based(2, 3, &[(0, 1)]).is_err());
    }

    #[test]
    fn complement_examples() {
        let c: Vec<_> = m2().complement().into_iter().map(Position::to_one_based).collect();
        assert_eq!(c, vec![(1, 2), (2, 1), (2, 3), (3, 2)]);
        assert!(Mask::full(2, 2).complement().is_empty());
        let c: Vec<_> = Mask::empty(1, 2).complement().into_iter().map(Position::to_one_based).collect();
        assert_eq!(c, vec![(1, 1), (1, 2)]);
    }

    #[test]
    fn ambient_dimension_examples() {
        assert_eq!(ambient_dimension(5, 5, 2), 16);
        assert_eq!(ambient_dimension(3, 5, 4), 15);
        assert_eq!(ambient_dimension(100, 100, 3), 591);
    }

    #[test]
    fn row_major_order_regardless_of_insertion() {
        let a = Mask::from_one_based(2, 2, &[(2, 1), (1, 2), (1, 1)]).unwrap();
        let v: Vec<_> = a.iter().map(Position::to_one_based).collect();
        assert_eq!(v, vec![(1, 1), (1, 2), (2, 1)]);
    }

    #[test]
    fn bipartite_view_degrees() {
        let g = m2().bipartite();
        assert_eq!(g.row_vertices(), vec![0, 1, 2]);
        let rs: usize = (0..3).map(|i| g.row_neighbors(i).len()).sum();
        let cs: usize = (0..3).map(|j| g.col_neighbors(j).len()).sum();
        assert_eq!(rs, 5);
        assert_eq!(cs, 5);
        let lone = Mask::from_one_based(3, 3, &[(1, 1)]).unwrap().bipartite();
        assert_eq!(lone.row_vertices(), vec![0]);
        assert_eq!(lone.col_vertices(), vec![0]);
    }

    #[test]
    fn text_formats() {
        let mask = Mask::parse("3 3\n1 1\n# comment\n1 3\n\n2 2\n3 1\n3 3\n").unwrap();
        assert_eq!(mask, m2());
        assert_eq!(Mask::parse(&mask.to_text()).unwrap(), mask);
        match Mask::parse("2 2\n1 1\n3 1\n") {
            Err(Error::Parse { line: 3, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let pm = PartialMatrix::parse("2 2\n2 1 -3.5\n1 1 2\n").unwrap();
        assert_eq!(pm.get(Position::new(1, 0)), Some(-3.5));
        assert_eq!(pm.values(), &[2.0, -3.5]);
        assert!(PartialMatrix::parse("2 2\n1 1\n").is_err());
    }

    #[test]
    fn noise_rejects_negative() {
        let mask = Mask::full(1, 2);
        assert!(NoiseModel::new(mask.clone(), vec![0.1, -1.0]).is_err());
        let nm = NoiseModel::uniform(&mask, 0.5).unwrap();
        let sub = nm.restrict_to(&mask.without(Position::new(0, 0))).unwrap();
        assert_eq!(sub.values(), &[0.5]);
    }

    fn arb_mask() -> impl Strategy<Value = Mask> {
        (1usize..8, 1usize..8).prop_flat_map(|(m, n)| {
            proptest::collection::vec((0..m, 0..n), 0..m * n + 3).prop_map(move |pairs| {
                Mask::new(m, n, pairs.into_iter().map(Position::from)).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn roundtrip_and_complement_size(mask in arb_mask()) {
            let again = Mask::new(mask.rows(), mask.cols(), mask.iter()).unwrap();
            prop_assert_eq!(&again, &mask);
            prop_assert_eq!(Mask::parse(&mask.to_text()).unwrap(), mask.clone());
            prop_assert_eq!(mask.complement().len() + mask.len(), mask.rows() * mask.cols());
        }

        #[test]
        fn ambient_dimension_symmetric_monotone(m in 0usize..30, n in 0usize..30, r in 0usize..10) {
            prop_assert_eq!(ambient_dimension(m, n, r), ambient_dimension(n, m, r));
            if r <= m.min(n) {
                prop_assert!(ambient_dimension(m, n + 1, r) >= ambient_dimension(m, n, r));
                prop_assert!(ambient_dimension(m + 1, n, r) >= ambient_dimension(m, n, r));
                if r < m.min(n) {
                    prop_assert!(ambient_dimension(m, n, r + 1) >= ambient_dimension(m, n, r));
                }
            }
        }
    }
}
