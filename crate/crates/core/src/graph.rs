//! Combinatorics of the bipartite mask graph: cores, biclique search, edge
//! connectivity, degree conditions and rank-`r` sparsity.

use std::collections::VecDeque;
use std::time::Instant;

use crate::mask::{ambient_dimension, BipartiteView, Mask, Position};

/// Constant-time (or near) edge membership.
pub trait EdgeSet {
    fn has_edge(&self, row: usize, col: usize) -> bool;
}

impl EdgeSet for Mask {
    fn has_edge(&self, row: usize, col: usize) -> bool {
        self.contains(Position::new(row, col))
    }
}

impl EdgeSet for BipartiteView {
    fn has_edge(&self, row: usize, col: usize) -> bool {
        BipartiteView::has_edge(self, row, col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Vertex {
    Row(usize),
    Col(usize),
}

/// A vertex-induced subgraph left after peeling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoreSubgraph {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub positions: Vec<Position>,
    /// Vertices in the order they were removed.
    pub peel_trace: Vec<Vertex>,
}

impl CoreSubgraph {
    fn induced<E: EdgeSet>(edges: &E, mut rows: Vec<usize>, mut cols: Vec<usize>, peel_trace: Vec<Vertex>) -> Self {
        rows.sort_unstable();
        cols.sort_unstable();
        let mut positions = Vec::new();
        for &i in &rows {
            for &j in &cols {
                if edges.has_edge(i, j) {
                    positions.push(Position::new(i, j));
                }
            }
        }
        CoreSubgraph {
            rows,
            cols,
            positions,
            peel_trace,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty() && self.cols.is_empty()
    }

    pub fn contains_row(&self, i: usize) -> bool {
        self.rows.binary_search(&i).is_ok()
    }

    pub fn contains_col(&self, j: usize) -> bool {
        self.cols.binary_search(&j).is_ok()
    }

    /// The retained positions as a mask of the ambient shape.
    pub fn to_mask(&self, m: usize, n: usize) -> Mask {
        Mask::new(m, n, self.positions.iter().copied()).expect("core positions lie in the ambient shape")
    }
}

/// The `k`-core by queue-based peeling over the non-isolated vertices.
pub fn k_core(graph: &BipartiteView, k: usize) -> CoreSubgraph {
    let m = graph.rows();
    let n = graph.cols();
    let mut deg: Vec<usize> = (0..m)
        .map(|i| graph.row_neighbors(i).len())
        .chain((0..n).map(|j| graph.col_neighbors(j).len()))
        .collect();
    let mut alive: Vec<bool> = deg.iter().map(|&d| d > 0).collect();
    let mut queue: VecDeque<usize> = (0..m + n).filter(|&v| alive[v] && deg[v] < k).collect();
    let mut queued: Vec<bool> = (0..m + n).map(|v| alive[v] && deg[v] < k).collect();
    let mut trace = Vec::new();
    while let Some(v) = queue.pop_front() {
        alive[v] = false;
        let nbrs: Vec<usize> = if v < m {
            trace.push(Vertex::Row(v));
            graph.row_neighbors(v).iter().map(|&j| m + j).collect()
        } else {
            trace.push(Vertex::Col(v - m));
            graph.col_neighbors(v - m).to_vec()
        };
        for w in nbrs {
            if alive[w] {
                deg[w] -= 1;
                if deg[w] < k && !queued[w] {
                    queued[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    let rows = (0..m).filter(|&i| alive[i]).collect();
    let cols = (0..n).filter(|&j| alive[m + j]).collect();
    CoreSubgraph::induced(graph, rows, cols, trace)
}

/// Simultaneous peeling of rows with degree `< row_min` and columns with
/// degree `< col_min`, restricted to the given vertex sets.
pub fn find_core_on<E: EdgeSet>(
    edges: &E,
    mut rows: Vec<usize>,
    mut cols: Vec<usize>,
    row_min: usize,
    col_min: usize,
    trace: &mut Vec<Vertex>,
) -> (Vec<usize>, Vec<usize>) {
    loop {
        let dead_rows: Vec<usize> = rows
            .iter()
            .copied()
            .filter(|&v| cols.iter().filter(|&&w| edges.has_edge(v, w)).count() < row_min)
            .collect();
        let dead_cols: Vec<usize> = cols
            .iter()
            .copied()
            .filter(|&w| rows.iter().filter(|&&v| edges.has_edge(v, w)).count() < col_min)
            .collect();
        if dead_rows.is_empty() && dead_cols.is_empty() {
            return (rows, cols);
        }
        rows.retain(|v| !dead_rows.contains(v));
        cols.retain(|w| !dead_cols.contains(w));
        trace.extend(dead_rows.into_iter().map(Vertex::Row));
        trace.extend(dead_cols.into_iter().map(Vertex::Col));
    }
}

/// Maximal subgraph where rows have degree `>= d1` and columns `>= d2`.
pub fn find_core(graph: &BipartiteView, d1: usize, d2: usize) -> CoreSubgraph {
    let mut trace = Vec::new();
    let (rows, cols) = find_core_on(graph, graph.row_vertices(), graph.col_vertices(), d1, d2, &mut trace);
    CoreSubgraph::induced(graph, rows, cols, trace)
}

/// Rows `I` and columns `J` with `I x J` contained in the edge set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Biclique {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

impl Biclique {
    pub fn is_complete_in<E: EdgeSet>(&self, edges: &E) -> bool {
        self.rows
            .iter()
            .all(|&i| self.cols.iter().all(|&j| edges.has_edge(i, j)))
    }
}

/// Node-expansion and wall-clock limits for exponential searches.
#[derive(Debug, Clone, Default)]
pub struct SearchBudget {
    pub max_nodes: Option<u64>,
    pub deadline: Option<Instant>,
    used: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BudgetExhausted;

impl SearchBudget {
    pub fn unlimited() -> Self {
        Self::default()
    }

    pub fn new(max_nodes: Option<u64>, deadline: Option<Instant>) -> Self {
        SearchBudget {
            max_nodes,
            deadline,
            used: 0,
        }
    }

    pub fn nodes(max: u64) -> Self {
        SearchBudget {
            max_nodes: Some(max),
            ..Self::default()
        }
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn tick(&mut self) -> Result<(), BudgetExhausted> {
        self.used += 1;
        if self.max_nodes.is_some_and(|max| self.used > max) {
            return Err(BudgetExhausted);
        }
        // clock reads are not free; check every 1024 nodes
        if self.used % 1024 == 0 && self.deadline.is_some_and(|d| Instant::now() >= d) {
            return Err(BudgetExhausted);
        }
        Ok(())
    }
}

/// Some `d1 x d2` biclique, or `None`.
///
/// Follows the row-wise recursion: prune to the core where rows have degree
/// `>= d2` and columns `>= d1`, then for each row `v` in ascending order
/// either finish (when `d1 = 1`) or recurse on the later rows restricted to
/// `N(v)`. The column set of a witness is the first `d2` columns of the
/// final neighborhood.
pub fn find_a_biclique(graph: &BipartiteView, d1: usize, d2: usize) -> Option<Biclique> {
    let mut budget = SearchBudget::unlimited();
    find_a_biclique_on(graph, graph.row_vertices(), graph.col_vertices(), d1, d2, &mut budget, &mut |_| true)
        .expect("unlimited budget")
}

/// Biclique search restricted to `rows x cols`. `accept` may reject a
/// witness, in which case the search continues with the next candidate.
pub fn find_a_biclique_on<E: EdgeSet>(
    edges: &E,
    rows: Vec<usize>,
    cols: Vec<usize>,
    d1: usize,
    d2: usize,
    budget: &mut SearchBudget,
    accept: &mut dyn FnMut(&Biclique) -> bool,
) -> Result<Option<Biclique>, BudgetExhausted> {
    if d1 == 0 || d2 == 0 {
        let b = Biclique {
            rows: Vec::new(),
            cols: Vec::new(),
        };
        return Ok(accept(&b).then_some(b));
    }
    let mut chosen = Vec::with_capacity(d1);
    search(edges, rows, cols, d1, d2, budget, &mut chosen, accept)
}

#[allow(clippy::too_many_arguments)]
fn search<E: EdgeSet>(
    edges: &E,
    rows: Vec<usize>,
    cols: Vec<usize>,
    d1: usize,
    d2: usize,
    budget: &mut SearchBudget,
    chosen: &mut Vec<usize>,
    accept: &mut dyn FnMut(&Biclique) -> bool,
) -> Result<Option<Biclique>, BudgetExhausted> {
    budget.tick()?;
    let mut trace = Vec::new();
    let (rows, cols) = find_core_on(edges, rows, cols, d2, d1, &mut trace);
    if rows.len() < d1 || cols.len() < d2 {
        return Ok(None);
    }
    let mut remaining = rows.clone();
    for &v in &rows {
        budget.tick()?;
        let nv: Vec<usize> = cols.iter().copied().filter(|&w| edges.has_edge(v, w)).collect();
        remaining.retain(|&x| x != v);
        if d1 == 1 {
            if nv.len() >= d2 {
                let mut combo: Vec<usize> = (0..d2).collect();
                loop {
                    budget.tick()?;
                    let mut brows = chosen.clone();
                    brows.push(v);
                    brows.sort_unstable();
                    let b = Biclique {
                        rows: brows,
                        cols: combo.iter().map(|&k| nv[k]).collect(),
                    };
                    if accept(&b) {
                        return Ok(Some(b));
                    }
                    if !next_combination(&mut combo, nv.len()) {
                        break;
                    }
                }
            }
            continue;
        }
        chosen.push(v);
        let found = search(edges, remaining.clone(), nv, d1 - 1, d2, budget, chosen, accept)?;
        chosen.pop();
        if found.is_some() {
            return Ok(found);
        }
    }
    Ok(None)
}

/// Advances `combo` (a sorted k-subset of `0..n`) lexicographically.
fn next_combination(combo: &mut [usize], n: usize) -> bool {
    let k = combo.len();
    for idx in (0..k).rev() {
        if combo[idx] < n - k + idx {
            combo[idx] += 1;
            for t in idx + 1..k {
                combo[t] = combo[t - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Whether every one of the `m + n` ambient rows and columns has degree `>= r`.
pub fn min_degree_at_least(mask: &Mask, r: usize) -> bool {
    mask.row_degrees().iter().all(|&d| d >= r) && mask.col_degrees().iter().all(|&d| d >= r)
}

/// Whether every edge cut of `G(E)` separating the ambient vertex set has at
/// least `r` edges. Isolated rows or columns make the graph disconnected.
///
/// Runs unit-capacity max-flow from row 0 to every other vertex, stopping
/// after `r` augmenting paths.
pub fn edge_connectivity_at_least(graph: &BipartiteView, r: usize) -> bool {
    if r == 0 {
        return true;
    }
    let m = graph.rows();
    let n = graph.cols();
    let nv = m + n;
    if nv <= 1 {
        return true;
    }
    let degree_ok = (0..m).all(|i| graph.row_neighbors(i).len() >= r)
        && (0..n).all(|j| graph.col_neighbors(j).len() >= r);
    if !degree_ok {
        return false;
    }
    // arcs 2e and 2e+1 are the two directions of edge e
    let mut head = Vec::with_capacity(2 * graph.edge_count());
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nv];
    for i in 0..m {
        for &j in graph.row_neighbors(i) {
            let a = head.len();
            head.push(m + j);
            head.push(i);
            adj[i].push(a);
            adj[m + j].push(a + 1);
        }
    }
    let source = 0;
    let mut cap = vec![1i32; head.len()];
    let mut pred = vec![usize::MAX; nv];
    for sink in 1..nv {
        cap.iter_mut().for_each(|c| *c = 1);
        let mut paths = 0;
        while paths < r {
            pred.iter_mut().for_each(|p| *p = usize::MAX);
            let mut queue = VecDeque::from([source]);
            let mut seen = vec![false; nv];
            seen[source] = true;
            while let Some(x) = queue.pop_front() {
                if x == sink {
                    break;
                }
                for &a in &adj[x] {
                    let y = head[a];
                    if cap[a] > 0 && !seen[y] {
                        seen[y] = true;
                        pred[y] = a;
                        queue.push_back(y);
                    }
                }
            }
            if !seen[sink] {
                break;
            }
            let mut y = sink;
            while y != source {
                let a = pred[y];
                cap[a] -= 1;
                cap[a ^ 1] += 1;
                y = head[a ^ 1];
            }
            paths += 1;
        }
        if paths < r {
            return false;
        }
    }
    true
}

/// A vertex-induced subgraph with more edges than `d_r` of its vertex counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityWitness {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub edges: usize,
    pub bound: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SparsityVerdict {
    Verified,
    Violation(SparsityWitness),
    Indeterminate,
}

/// Exhaustive enumeration is used while `2^min(m,n) * max(m,n)` stays below this.
pub const EXACT_SPARSITY_WORK: u64 = 1 << 27;

/// Checks `|E'| <= d_r(|V'|, |W'|)` on every vertex-induced subgraph.
///
/// Exact when one side is small enough to enumerate its subsets: for a fixed
/// subset of the small side, the densest choice of `w` vertices on the other
/// side takes the `w` largest neighbor counts. Otherwise runs a randomized
/// search for up to `budget` subgraph evaluations.
pub fn rank_r_sparse(mask: &Mask, r: usize, budget: u64, seed: u64) -> SparsityVerdict {
    let (m, n) = (mask.rows(), mask.cols());
    let small = m.min(n);
    let large = m.max(n);
    if small < 63 && (1u64 << small).saturating_mul(large.max(1) as u64) <= EXACT_SPARSITY_WORK {
        exact_sparsity(mask, r)
    } else {
        search_sparsity(mask, r, budget, seed)
    }
}

fn exact_sparsity(mask: &Mask, r: usize) -> SparsityVerdict {
    let rows_small = mask.rows() <= mask.cols();
    let (small, large) = if rows_small {
        (mask.rows(), mask.cols())
    } else {
        (mask.cols(), mask.rows())
    };
    // neighbor set in the small side of each large-side vertex
    let mut nbr = vec![0u64; large];
    for p in mask.iter() {
        let (s, l) = if rows_small { (p.row, p.col) } else { (p.col, p.row) };
        nbr[l] |= 1 << s;
    }
    let mut counts: Vec<(u32, usize)> = vec![(0, 0); large];
    for subset in 1u64..(1u64 << small) {
        let a = subset.count_ones() as usize;
        for (l, c) in counts.iter_mut().enumerate() {
            *c = ((nbr[l] & subset).count_ones(), l);
        }
        counts.sort_unstable_by(|x, y| y.0.cmp(&x.0));
        let mut total = 0usize;
        for (w, &(c, _)) in counts.iter().enumerate() {
            if c == 0 {
                break;
            }
            total += c as usize;
            let bound = ambient_dimension(a, w + 1, r);
            if total > bound {
                let small_set: Vec<usize> = (0..small).filter(|&s| subset >> s & 1 == 1).collect();
                let mut large_set: Vec<usize> = counts[..=w].iter().map(|&(_, l)| l).collect();
                large_set.sort_unstable();
                let (rows, cols) = if rows_small {
                    (small_set, large_set)
                } else {
                    (large_set, small_set)
                };
                return SparsityVerdict::Violation(SparsityWitness {
                    rows,
                    cols,
                    edges: total,
                    bound,
                });
            }
        }
    }
    SparsityVerdict::Verified
}

fn induced_edges(mask: &Mask, rows: &[bool], cols: &[bool]) -> usize {
    mask.iter().filter(|p| rows[p.row] && cols[p.col]).count()
}

fn search_sparsity(mask: &Mask, r: usize, budget: u64, seed: u64) -> SparsityVerdict {
    use rand::Rng as _;
    let (m, n) = (mask.rows(), mask.cols());
    let witness = |rows: &[bool], cols: &[bool]| {
        let e = induced_edges(mask, rows, cols);
        let a = rows.iter().filter(|&&x| x).count();
        let b = cols.iter().filter(|&&x| x).count();
        let bound = ambient_dimension(a, b, r);
        (e > bound).then(|| SparsityWitness {
            rows: (0..m).filter(|&i| rows[i]).collect(),
            cols: (0..n).filter(|&j| cols[j]).collect(),
            edges: e,
            bound,
        })
    };
    let mut spent = 0u64;

    // greedy: repeatedly drop a minimum-degree vertex
    let mut rows = vec![true; m];
    let mut cols = vec![true; n];
    let mut rdeg = mask.row_degrees();
    let mut cdeg = mask.col_degrees();
    for _ in 0..m + n {
        spent += 1;
        if let Some(w) = witness(&rows, &cols) {
            return SparsityVerdict::Violation(w);
        }
        let best_row = (0..m).filter(|&i| rows[i]).min_by_key(|&i| rdeg[i]);
        let best_col = (0..n).filter(|&j| cols[j]).min_by_key(|&j| cdeg[j]);
        match (best_row, best_col) {
            (Some(i), Some(j)) if rdeg[i] <= cdeg[j] => {
                rows[i] = false;
                for jj in 0..n {
                    if cols[jj] && mask.contains(Position::new(i, jj)) {
                        cdeg[jj] -= 1;
                    }
                }
            }
            (_, Some(j)) => {
                cols[j] = false;
                for ii in 0..m {
                    if rows[ii] && mask.contains(Position::new(ii, j)) {
                        rdeg[ii] -= 1;
                    }
                }
            }
            (Some(i), None) => rows[i] = false,
            (None, None) => break,
        }
    }

    // random restarts with single-vertex flips that do not lower the excess
    let mut rng = crate::rng::rng_from_seed(seed);
    let excess = |rows: &[bool], cols: &[bool]| {
        let a = rows.iter().filter(|&&x| x).count();
        let b = cols.iter().filter(|&&x| x).count();
        induced_edges(mask, rows, cols) as i64 - ambient_dimension(a, b, r) as i64
    };
    while spent < budget {
        let p = rng.random_range(0.2..0.9);
        let mut rows: Vec<bool> = (0..m).map(|_| rng.random_bool(p)).collect();
        let mut cols: Vec<bool> = (0..n).map(|_| rng.random_bool(p)).collect();
        let mut cur = excess(&rows, &cols);
        for _ in 0..4 * (m + n) {
            spent += 1;
            if cur > 0 {
                break;
            }
            let v = rng.random_range(0..m + n);
            let flip = |rows: &mut Vec<bool>, cols: &mut Vec<bool>| {
                if v < m {
                    rows[v] = !rows[v];
                } else {
                    cols[v - m] = !cols[v - m];
                }
            };
            flip(&mut rows, &mut cols);
            let next = excess(&rows, &cols);
            if next >= cur {
                cur = next;
            } else {
                flip(&mut rows, &mut cols);
            }
            if spent >= budget {
                break;
            }
        }
        if cur > 0 {
            if let Some(w) = witness(&rows, &cols) {
                return SparsityVerdict::Violation(w);
            }
        }
    }
    SparsityVerdict::Indeterminate
}
