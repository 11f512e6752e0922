//! Rank-one completion through cycle circuits.
//!
//! A missing entry `(k, l)` of a rank-one matrix is determined by any simple
//! cycle of `G(E + (k,l))` through it. After taking `B = log|A|`, each cycle
//! gives an unbiased estimate of `B_kl`; these are combined with weights
//! minimizing the variance under independent per-entry log-noise.
//!
//! Vertices are numbered `0..m` for rows and `m..m+n` for columns.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::mask::{Mask, NoiseModel, PartialMatrix, Position};

/// Path-kernel condition number above which a ridge is added.
pub const MAX_KERNEL_CONDITION: f64 = 1e12;
/// Ridge added to an ill-conditioned path kernel, relative to its trace.
pub const KERNEL_RIDGE: f64 = 1e-12;

/// A simple cycle `(i1,j1), (i1,j2), (i2,j2), ..., (iL,jL), (iL,j1)`.
///
/// Positions `(i_v, j_v)` carry sign `+1`, positions `(i_v, j_{v+1})` sign
/// `-1`. Circuits built here put the target at `(i1, j1)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleCircuit {
    rows: Vec<usize>,
    cols: Vec<usize>,
}

impl CycleCircuit {
    pub fn new(rows: Vec<usize>, cols: Vec<usize>) -> Result<Self> {
        let l = rows.len();
        if l < 2 || cols.len() != l {
            return Err(Error::InvalidArgument("a cycle needs L >= 2 rows and L columns".into()));
        }
        let distinct = |v: &[usize]| {
            let mut s = v.to_vec();
            s.sort_unstable();
            s.windows(2).all(|w| w[0] != w[1])
        };
        if !distinct(&rows) || !distinct(&cols) {
            return Err(Error::InvalidArgument("cycle rows and columns must be distinct".into()));
        }
        Ok(CycleCircuit { rows, cols })
    }

    /// Half the cycle length.
    pub fn half_len(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    /// The `2L` positions in walk order with their signs.
    pub fn signed_positions(&self) -> Vec<(Position, i8)> {
        let l = self.rows.len();
        let mut out = Vec::with_capacity(2 * l);
        for v in 0..l {
            out.push((Position::new(self.rows[v], self.cols[v]), 1));
            out.push((Position::new(self.rows[v], self.cols[(v + 1) % l]), -1));
        }
        out
    }

    pub fn positions(&self) -> Vec<Position> {
        self.signed_positions().into_iter().map(|(p, _)| p).collect()
    }

    pub fn sign_of(&self, p: Position) -> i8 {
        self.signed_positions()
            .into_iter()
            .find(|&(q, _)| q == p)
            .map_or(0, |(_, s)| s)
    }

    pub fn contains(&self, p: Position) -> bool {
        self.sign_of(p) != 0
    }

    /// Builds the circuit closed by `pos` from a vertex path running from row
    /// `pos.row` to column `pos.col` in `G(E)`.
    fn from_path(path: &[usize], m: usize) -> Self {
        debug_assert!(path.len() >= 4 && path.len() % 2 == 0);
        let l = path.len() / 2;
        let rows = (0..l).map(|t| path[2 * t]).collect();
        let last_col = path[path.len() - 1] - m;
        let cols = std::iter::once(last_col)
            .chain((0..l - 1).map(|t| path[2 * t + 1] - m))
            .collect();
        CycleCircuit { rows, cols }
    }
}

/// A basis of the completing circuits of `pos`, all passing through `pos`.
///
/// The path parts of the returned circuits affinely span every unit flow
/// from `pos.row` to `pos.col` inside the block of `G(E + pos)` that
/// contains `pos`, so the minimum-variance combination over this basis is
/// the minimum over all completing circuits. Empty when `pos` closes no
/// cycle.
pub fn completing_circuit_basis(mask: &Mask, pos: Position) -> Result<Vec<CycleCircuit>> {
    circuit_basis_impl(mask, pos, None)
}

/// As [`completing_circuit_basis`], with search orders shuffled by `seed`.
/// Different seeds generally give different bases of the same space.
pub fn completing_circuit_basis_seeded(mask: &Mask, pos: Position, seed: u64) -> Result<Vec<CycleCircuit>> {
    circuit_basis_impl(mask, pos, Some(seed))
}

struct Graph {
    /// `(neighbor, edge id)`.
    adj: Vec<Vec<(usize, usize)>>,
    ends: Vec<(usize, usize)>,
}

impl Graph {
    fn other(&self, e: usize, v: usize) -> usize {
        let (a, b) = self.ends[e];
        if a == v {
            b
        } else {
            a
        }
    }
}

fn circuit_basis_impl(mask: &Mask, pos: Position, seed: Option<u64>) -> Result<Vec<CycleCircuit>> {
    let (m, n) = (mask.rows(), mask.cols());
    if pos.row >= m || pos.col >= n {
        let (i, j) = pos.to_one_based();
        return Err(Error::OutOfBounds { row: i, col: j, m, n });
    }
    if mask.contains(pos) {
        return Err(Error::InvalidArgument("position is already observed".into()));
    }
    let mut rng = seed.map(crate::rng::rng_from_seed);
    let k = pos.row;
    let l = m + pos.col;

    // G(E + pos); edge 0 is pos
    let mut ends = vec![(k, l)];
    ends.extend(mask.iter().map(|p| (p.row, m + p.col)));
    let mut adj = vec![Vec::new(); m + n];
    for (e, &(a, b)) in ends.iter().enumerate() {
        adj[a].push((b, e));
        adj[b].push((a, e));
    }
    if let Some(rng) = rng.as_mut() {
        for list in &mut adj {
            list.shuffle(rng);
        }
    }
    let g = Graph { adj, ends };

    let Some(block) = block_of_edge(&g, 0) else {
        return Ok(Vec::new());
    };
    let mut in_block = vec![false; g.ends.len()];
    for &e in &block {
        in_block[e] = true;
    }

    // first cycle: pos plus a shortest path from l to k avoiding pos
    let Some(p0) = bfs_path(&g, l, |v| v == k, |e, _| in_block[e] && e != 0) else {
        return Ok(Vec::new());
    };
    let mut in_sub = vec![false; m + n];
    let mut edge_used = vec![false; g.ends.len()];
    edge_used[0] = true;
    for w in p0.windows(2) {
        let e = edge_between(&g, w[0], w[1], &edge_used, &in_block);
        edge_used[e] = true;
    }
    for &v in &p0 {
        in_sub[v] = true;
    }
    let mut first: Vec<usize> = p0.clone();
    first.reverse();
    let mut circuits = vec![CycleCircuit::from_path(&first, m)];

    let mut order: Vec<usize> = block.clone();
    order.sort_unstable();
    if let Some(rng) = rng.as_mut() {
        order.shuffle(rng);
    }
    loop {
        // an unused block edge touching the current subgraph starts the next ear
        let start = order.iter().copied().find_map(|e| {
            if edge_used[e] {
                return None;
            }
            let (a, b) = g.ends[e];
            if in_sub[a] {
                Some((e, a))
            } else if in_sub[b] {
                Some((e, b))
            } else {
                None
            }
        });
        let Some((e0, u)) = start else { break };
        let w = g.other(e0, u);
        let ear: Vec<usize> = if in_sub[w] {
            vec![u, w]
        } else {
            let tail = bfs_path(&g, w, |z| in_sub[z] && z != u, |e, y| in_block[e] && !edge_used[e] && y != u)
                .expect("blocks are 2-connected");
            std::iter::once(u).chain(tail).collect()
        };
        let (x, y) = (ear[0], ear[ear.len() - 1]);
        let (to_x, to_y) = disjoint_terminal_paths(&g, &edge_used, &in_sub, k, l, x, y)
            .expect("a 2-connected subgraph links {k, l} to any two of its vertices");
        // to_x runs from k or l to x; orient so the walk starts at k
        let path: Vec<usize> = if to_x[0] == k {
            let mut p = to_x;
            p.extend(ear[1..].iter().copied());
            p.extend(to_y.iter().rev().skip(1).copied());
            p
        } else {
            let mut p = to_y;
            p.extend(ear.iter().rev().skip(1).copied());
            p.extend(to_x.iter().rev().skip(1).copied());
            p
        };
        debug_assert_eq!(path[0], k);
        debug_assert_eq!(path[path.len() - 1], l);
        circuits.push(CycleCircuit::from_path(&path, m));
        for win in ear.windows(2) {
            let e = edge_between(&g, win[0], win[1], &edge_used, &in_block);
            edge_used[e] = true;
        }
        for &v in &ear {
            in_sub[v] = true;
        }
    }
    Ok(circuits)
}

/// An unused block edge joining `a` and `b`.
fn edge_between(g: &Graph, a: usize, b: usize, used: &[bool], in_block: &[bool]) -> usize {
    g.adj[a]
        .iter()
        .find(|&&(w, e)| w == b && !used[e] && in_block[e])
        .map(|&(_, e)| e)
        .expect("path edge exists")
}

/// Shortest path from `src` to the first vertex satisfying `stop`,
/// traversing edges accepted by `edge_ok(edge, next_vertex)`.
fn bfs_path(
    g: &Graph,
    src: usize,
    stop: impl Fn(usize) -> bool,
    edge_ok: impl Fn(usize, usize) -> bool,
) -> Option<Vec<usize>> {
    let nv = g.adj.len();
    let mut pred = vec![usize::MAX; nv];
    let mut seen = vec![false; nv];
    seen[src] = true;
    let mut queue = VecDeque::from([src]);
    while let Some(v) = queue.pop_front() {
        for &(w, e) in &g.adj[v] {
            if seen[w] || !edge_ok(e, w) {
                continue;
            }
            seen[w] = true;
            pred[w] = v;
            if stop(w) {
                let mut path = vec![w];
                let mut x = w;
                while x != src {
                    x = pred[x];
                    path.push(x);
                }
                path.reverse();
                return Some(path);
            }
            queue.push_back(w);
        }
    }
    None
}

/// Edge ids of the biconnected component containing edge `target`, or
/// `None` when `target` is a bridge.
fn block_of_edge(g: &Graph, target: usize) -> Option<Vec<usize>> {
    const UNSET: usize = usize::MAX;
    let nv = g.adj.len();
    let mut disc = vec![UNSET; nv];
    let mut low = vec![0; nv];
    let mut time = 0;
    let root = g.ends[target].0;
    let mut edge_stack: Vec<usize> = Vec::new();
    // (vertex, edge to parent, next adjacency index)
    let mut stack: Vec<(usize, usize, usize)> = vec![(root, UNSET, 0)];
    disc[root] = time;
    low[root] = time;
    time += 1;
    while let Some(top) = stack.last_mut() {
        let (v, pe) = (top.0, top.1);
        if top.2 < g.adj[v].len() {
            let (w, e) = g.adj[v][top.2];
            top.2 += 1;
            if e == pe {
                continue;
            }
            if disc[w] == UNSET {
                edge_stack.push(e);
                disc[w] = time;
                low[w] = time;
                time += 1;
                stack.push((w, e, 0));
            } else if disc[w] < disc[v] {
                edge_stack.push(e);
                low[v] = low[v].min(disc[w]);
            }
        } else {
            stack.pop();
            if let Some(parent) = stack.last() {
                let u = parent.0;
                low[u] = low[u].min(low[v]);
                if low[v] >= disc[u] {
                    let mut comp = Vec::new();
                    while let Some(e) = edge_stack.pop() {
                        comp.push(e);
                        if e == pe {
                            break;
                        }
                    }
                    if comp.contains(&target) {
                        return (comp.len() > 1).then_some(comp);
                    }
                }
            }
        }
    }
    None
}

/// Two vertex-disjoint paths in the current subgraph without edge 0, one
/// from `{k, l}` to `x` and one to `y`; returned as (path to x, path to y),
/// each starting at `k` or `l`.
fn disjoint_terminal_paths(
    g: &Graph,
    edge_used: &[bool],
    in_sub: &[bool],
    k: usize,
    l: usize,
    x: usize,
    y: usize,
) -> Option<(Vec<usize>, Vec<usize>)> {
    let nv = g.adj.len();
    // node 2v is v_in, 2v+1 is v_out; source 2nv, sink 2nv+1
    let source = 2 * nv;
    let sink = 2 * nv + 1;
    let mut head: Vec<usize> = Vec::new();
    let mut cap: Vec<i32> = Vec::new();
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); 2 * nv + 2];
    let mut arc = |a: usize, b: usize, c: i32, head: &mut Vec<usize>, cap: &mut Vec<i32>| {
        let id = head.len();
        head.push(b);
        cap.push(c);
        head.push(a);
        cap.push(0);
        out[a].push(id);
        out[b].push(id + 1);
    };
    for v in 0..nv {
        if in_sub[v] {
            arc(2 * v, 2 * v + 1, 1, &mut head, &mut cap);
        }
    }
    for (e, &(a, b)) in g.ends.iter().enumerate() {
        if e != 0 && edge_used[e] {
            arc(2 * a + 1, 2 * b, 1, &mut head, &mut cap);
            arc(2 * b + 1, 2 * a, 1, &mut head, &mut cap);
        }
    }
    arc(source, 2 * k, 1, &mut head, &mut cap);
    arc(source, 2 * l, 1, &mut head, &mut cap);
    arc(2 * x + 1, sink, 1, &mut head, &mut cap);
    arc(2 * y + 1, sink, 1, &mut head, &mut cap);

    for _ in 0..2 {
        let mut pred = vec![usize::MAX; 2 * nv + 2];
        let mut queue = VecDeque::from([source]);
        let mut seen = vec![false; 2 * nv + 2];
        seen[source] = true;
        while let Some(a) = queue.pop_front() {
            for &id in &out[a] {
                let b = head[id];
                if cap[id] > 0 && !seen[b] {
                    seen[b] = true;
                    pred[b] = id;
                    queue.push_back(b);
                }
            }
        }
        if !seen[sink] {
            return None;
        }
        let mut b = sink;
        while b != source {
            let id = pred[b];
            cap[id] -= 1;
            cap[id ^ 1] += 1;
            b = head[id ^ 1];
        }
    }
    // forward arcs (even ids) with no residual capacity carry flow
    let flows = |a: usize| -> Vec<usize> {
        out[a]
            .iter()
            .copied()
            .filter(|&id| id % 2 == 0 && cap[id] == 0)
            .map(|id| head[id])
            .collect()
    };
    let mut paths = Vec::new();
    for start in flows(source) {
        let mut path = vec![start / 2];
        let mut node = start;
        loop {
            // node is v_in; move to v_out, then along the outgoing flow arc
            let next = flows(node)[0];
            debug_assert_eq!(next, node + 1);
            let after = flows(next)[0];
            if after == sink {
                break;
            }
            path.push(after / 2);
            node = after;
        }
        paths.push(path);
    }
    let (a, b) = (paths.pop()?, paths.pop()?);
    if *a.last()? == x {
        Some((a, b))
    } else {
        Some((b, a))
    }
}

/// One circuit's estimate of `log|A_kl|` and the sign it implies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogEstimate {
    pub value: f64,
    pub sign_parity: i8,
}

/// Solves the circuit relation for the entry at `pos`.
pub fn circuit_solve(data: &PartialMatrix, circuit: &CycleCircuit, pos: Position) -> Result<LogEstimate> {
    if circuit.sign_of(pos) == 0 {
        return Err(Error::InvalidArgument("circuit does not pass through the position".into()));
    }
    // with pos signed +1, B_pos = -sum_{e != pos} s(e) B_e; flip otherwise
    let orient = circuit.sign_of(pos) as f64;
    let mut b = 0.0;
    let mut parity = 1i8;
    for (e, s) in circuit.signed_positions() {
        if e == pos {
            continue;
        }
        let (i, j) = e.to_one_based();
        let a = data.get(e).ok_or(Error::NotCompletable { row: i, col: j })?;
        if a == 0.0 {
            return Err(Error::ZeroEntry { row: i, col: j });
        }
        b -= orient * s as f64 * a.abs().ln();
        if a < 0.0 {
            parity = -parity;
        }
    }
    Ok(LogEstimate {
        value: b,
        sign_parity: parity,
    })
}

/// Covariance of the circuit log-estimates under independent log-noise.
#[derive(Debug, Clone, PartialEq)]
pub struct PathKernel {
    pub sigma: DMatrix<f64>,
}

/// `Sigma_ab = sum_{e != pos} s_a(e) s_b(e) sigma_e^2`.
pub fn path_kernel(circuits: &[CycleCircuit], noise: &NoiseModel, pos: Position) -> Result<PathKernel> {
    let mask = noise.mask();
    let nc = circuits.len();
    let mut s = DMatrix::zeros(nc, mask.len());
    for (a, c) in circuits.iter().enumerate() {
        let orient = c.sign_of(pos) as f64;
        for (e, sg) in c.signed_positions() {
            if e == pos {
                continue;
            }
            let idx = mask.index_of(e).ok_or_else(|| {
                let (i, j) = e.to_one_based();
                Error::NotCompletable { row: i, col: j }
            })?;
            s[(a, idx)] = orient * sg as f64;
        }
    }
    let d = DVector::from_column_slice(noise.values());
    let sd = DMatrix::from_fn(nc, mask.len(), |a, e| s[(a, e)] * d[e]);
    Ok(PathKernel {
        sigma: sd * s.transpose(),
    })
}

/// Minimum-variance weights for a path kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Combination {
    /// Normalized weights, summing to one.
    pub weights: DVector<f64>,
    /// `w^T Sigma w`.
    pub log_variance: f64,
    /// A ridge was added before solving.
    pub regularized: bool,
}

/// `alpha = Sigma^-1 1`, normalized.
pub fn combine(kernel: &PathKernel) -> Result<Combination> {
    let sigma = &kernel.sigma;
    let nc = sigma.nrows();
    if nc == 0 {
        return Err(Error::InvalidArgument("empty circuit basis".into()));
    }
    let trace = sigma.trace();
    if trace <= 0.0 {
        return Ok(Combination {
            weights: DVector::from_element(nc, 1.0 / nc as f64),
            log_variance: 0.0,
            regularized: false,
        });
    }
    let sv = crate::linalg::singular_values(sigma);
    let cond = sv.max() / sv.min();
    let regularized = !(cond <= MAX_KERNEL_CONDITION);
    let mut work = sigma.clone();
    if regularized {
        log::debug!("path kernel condition {cond:e}; adding ridge");
        for i in 0..nc {
            work[(i, i)] += KERNEL_RIDGE * trace;
        }
    }
    let ones = DVector::from_element(nc, 1.0);
    let alpha = match work.clone().cholesky() {
        Some(ch) => ch.solve(&ones),
        None => work
            .lu()
            .solve(&ones)
            .ok_or_else(|| Error::InvalidArgument("singular path kernel".into()))?,
    };
    let weights = &alpha / alpha.sum();
    let log_variance = (weights.transpose() * sigma * &weights)[(0, 0)].max(0.0);
    Ok(Combination {
        weights,
        log_variance,
        regularized,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankOneEstimate {
    pub position: Position,
    pub value: f64,
    /// Combined estimate of `log|A_kl|`.
    pub log_value: f64,
    pub log_variance: f64,
    /// `value * (exp(log_variance) - 1)`.
    pub standard_error: f64,
    pub sign: i8,
    /// Circuits disagreed on the sign; the majority was used.
    pub sign_disagreement: bool,
    pub regularized: bool,
    pub circuits: usize,
}

fn basis_or_err(mask: &Mask, pos: Position) -> Result<Vec<CycleCircuit>> {
    let basis = completing_circuit_basis(mask, pos)?;
    if basis.is_empty() {
        let (i, j) = pos.to_one_based();
        return Err(Error::NotCompletable { row: i, col: j });
    }
    Ok(basis)
}

/// Minimum-variance estimate of the missing entry `pos`.
pub fn estimate_entry(data: &PartialMatrix, noise: &NoiseModel, pos: Position) -> Result<RankOneEstimate> {
    if noise.mask() != data.mask() {
        return Err(Error::DimensionMismatch("noise model must cover exactly the observed positions".into()));
    }
    let basis = basis_or_err(data.mask(), pos)?;
    estimate_with_basis(data, noise, pos, &basis)
}

/// [`estimate_entry`] over a caller-supplied basis of completing circuits.
pub fn estimate_with_basis(
    data: &PartialMatrix,
    noise: &NoiseModel,
    pos: Position,
    basis: &[CycleCircuit],
) -> Result<RankOneEstimate> {
    let comb = combine(&path_kernel(basis, noise, pos)?)?;
    let mut log_value = 0.0;
    let mut votes = 0i64;
    for (c, w) in basis.iter().zip(comb.weights.iter()) {
        let est = circuit_solve(data, c, pos)?;
        log_value += w * est.value;
        votes += est.sign_parity as i64;
    }
    let sign_disagreement = votes.unsigned_abs() as usize != basis.len();
    let sign: i8 = if votes >= 0 { 1 } else { -1 };
    let value = sign as f64 * log_value.exp();
    Ok(RankOneEstimate {
        position: pos,
        value,
        log_value,
        log_variance: comb.log_variance,
        standard_error: value * (comb.log_variance.exp() - 1.0),
        sign,
        sign_disagreement,
        regularized: comb.regularized,
        circuits: basis.len(),
    })
}

/// The log-variance [`estimate_entry`] would report, from the mask and noise
/// alone.
pub fn predict_variance(mask: &Mask, noise: &NoiseModel, pos: Position) -> Result<f64> {
    if noise.mask() != mask {
        return Err(Error::DimensionMismatch("noise model must cover exactly the mask".into()));
    }
    let basis = basis_or_err(mask, pos)?;
    Ok(combine(&path_kernel(&basis, noise, pos)?)?.log_variance)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(i: usize, j: usize) -> Position {
        Position::one_based(i, j)
    }

    fn check_circuit(c: &CycleCircuit, mask: &Mask, pos: Position) {
        assert_eq!(c.sign_of(pos), 1);
        let signed = c.signed_positions();
        assert_eq!(signed.iter().map(|&(_, s)| s as i32).sum::<i32>(), 0);
        for (e, _) in signed {
            assert!(e == pos || mask.contains(e), "{e:?} not observed");
        }
        assert!(CycleCircuit::new(c.rows().to_vec(), c.cols().to_vec()).is_ok());
    }

    #[test]
    fn single_four_cycle() {
        let mask = Mask::from_one_based(2, 2, &[(1, 1), (1, 2), (2, 1)]).unwrap();
        let basis = completing_circuit_basis(&mask, p(2, 2)).unwrap();
        assert_eq!(basis.len(), 1);
        assert_eq!(basis[0].half_len(), 2);
        check_circuit(&basis[0], &mask, p(2, 2));
    }

    #[test]
    fn disconnected_gives_empty_basis() {
        let mask = Mask::from_one_based(3, 3, &[(1, 1), (1, 2), (1, 3), (2, 1), (2, 2), (2, 3)]).unwrap();
        assert!(completing_circuit_basis(&mask, p(3, 3)).unwrap().is_empty());
        let data = PartialMatrix::new(mask.clone(), vec![1.0; 6]).unwrap();
        let noise = NoiseModel::uniform(&mask, 1.0).unwrap();
        assert!(matches!(estimate_entry(&data, &noise, p(3, 3)), Err(Error::NotCompletable { row: 3, col: 3 })));
    }

    #[test]
    fn three_by_three_minus_corner_spans_block() {
        // block has 9 edges on 6 vertices: cycle space of dimension 4
        let mask = Mask::full(3, 3).without(p(3, 3));
        let basis = completing_circuit_basis(&mask, p(3, 3)).unwrap();
        assert_eq!(basis.len(), 4);
        for c in &basis {
            check_circuit(c, &mask, p(3, 3));
        }
    }

    #[test]
    fn cycle_solve_examples() {
        let mask = Mask::from_one_based(2, 2, &[(1, 1), (1, 2), (2, 1)]).unwrap();
        let data = PartialMatrix::new(mask.clone(), vec![2.0, 4.0, 3.0]).unwrap();
        let c = &completing_circuit_basis(&mask, p(2, 2)).unwrap()[0];
        let est = circuit_solve(&data, c, p(2, 2)).unwrap();
        assert!((est.value - 6f64.ln()).abs() < 1e-14);
        assert_eq!(est.sign_parity, 1);
        let ones = PartialMatrix::new(mask.clone(), vec![1.0; 3]).unwrap();
        assert_eq!(circuit_solve(&ones, c, p(2, 2)).unwrap().value, 0.0);
        let neg = PartialMatrix::new(mask.clone(), vec![2.0, -4.0, 3.0]).unwrap();
        assert_eq!(circuit_solve(&neg, c, p(2, 2)).unwrap().sign_parity, -1);
        let zero = PartialMatrix::new(mask, vec![2.0, 0.0, 3.0]).unwrap();
        assert!(matches!(circuit_solve(&zero, c, p(2, 2)), Err(Error::ZeroEntry { .. })));
    }

    #[test]
    fn kernel_examples() {
        let s = 0.5;
        let mask = Mask::from_one_based(2, 2, &[(1, 1), (1, 2), (2, 1)]).unwrap();
        let noise = NoiseModel::uniform(&mask, s).unwrap();
        let basis = completing_circuit_basis(&mask, p(2, 2)).unwrap();
        let k = path_kernel(&basis, &noise, p(2, 2)).unwrap();
        assert_eq!(k.sigma.shape(), (1, 1));
        assert!((k.sigma[(0, 0)] - 3.0 * s).abs() < 1e-15);
        assert!((predict_variance(&mask, &noise, p(2, 2)).unwrap() - 3.0 * s).abs() < 1e-15);

        // two edge-disjoint 4-cycles through (1,1): via row 2/col 2 and row 3/col 3
        let two = Mask::from_one_based(3, 3, &[(1, 2), (2, 1), (2, 2), (1, 3), (3, 1), (3, 3)]).unwrap();
        let noise = NoiseModel::uniform(&two, s).unwrap();
        let basis = completing_circuit_basis(&two, p(1, 1)).unwrap();
        assert_eq!(basis.len(), 2);
        let k = path_kernel(&basis, &noise, p(1, 1)).unwrap();
        assert!((k.sigma[(0, 1)]).abs() < 1e-15);
        assert!((k.sigma[(0, 0)] - 3.0 * s).abs() < 1e-15);
        assert!((predict_variance(&two, &noise, p(1, 1)).unwrap() - 1.5 * s).abs() < 1e-14);

        // shared edge with equal sign: off-diagonal s
        let circuits = vec![
            CycleCircuit::new(vec![0, 1], vec![0, 1]).unwrap(),
            CycleCircuit::new(vec![0, 1], vec![0, 2]).unwrap(),
        ];
        let mask = Mask::from_one_based(2, 3, &[(1, 2), (1, 3), (2, 1), (2, 2), (2, 3)]).unwrap();
        let noise = NoiseModel::uniform(&mask, s).unwrap();
        let k = path_kernel(&circuits, &noise, p(1, 1)).unwrap();
        assert!((k.sigma[(0, 1)] - s).abs() < 1e-15);
    }

    #[test]
    fn zero_noise_is_exact() {
        let u = [1.5, -2.0, 0.7];
        let v = [0.3, 1.1, -4.0];
        let full = nalgebra::DMatrix::from_fn(3, 3, |i, j| u[i] * v[j]);
        let mask = Mask::full(3, 3).without(p(2, 3));
        let data = PartialMatrix::observe(&full, &mask).unwrap();
        let noise = NoiseModel::uniform(&mask, 0.0).unwrap();
        let est = estimate_entry(&data, &noise, p(2, 3)).unwrap();
        assert_eq!(est.log_variance, 0.0);
        assert!((est.value - full[(1, 2)]).abs() < 1e-12 * full[(1, 2)].abs());
        assert!(!est.sign_disagreement);
    }
}
