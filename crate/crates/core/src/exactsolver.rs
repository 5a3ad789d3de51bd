//! Exhaustive analysis at small n: enumeration of the state space, the exact
//! transition matrix of M, stationarity checks, tail masses and the counting
//! bounds on the partition function.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use num_bigint::BigUint;
use rustc_hash::{FxHashMap, FxHashSet};
use thiserror::Error;

use crate::configuration::Configuration;
use crate::dynamics::{acceptance, move_targets};
use crate::lattice::{Cell, Direction};

/// Largest n accepted by the enumerators.
pub const MAX_ENUM_N: usize = 10;

/// Connected hole-free configurations with 50 particles.
pub const N50: &str = "2430068453031180290203185942420933";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SolverError {
    #[error("n = {0} is outside the enumerable range 1..={MAX_ENUM_N}")]
    OutOfRange(usize),
}

pub fn n50() -> BigUint {
    N50.parse().expect("constant is a decimal integer")
}

/// `(2 N₅₀)^(1/100)`, the base of the strongest partition-function bound.
pub fn jensen_base() -> f64 {
    let twice: f64 = (n50() * 2u32).to_string().parse().expect("decimal digits parse as f64");
    (twice.ln() / 100.0).exp()
}

/// Connective constant of the hexagonal lattice, `√(2+√2)`.
pub fn mu_hex() -> f64 {
    (2.0 + 2f64.sqrt()).sqrt()
}

/// Bias above which α-compression is guaranteed: `(2+√2)^(α/(α−1))`.
pub fn compression_threshold(alpha: f64) -> f64 {
    (2.0 + 2f64.sqrt()).powf(alpha / (alpha - 1.0))
}

#[derive(Clone, Debug)]
pub struct StateSpace {
    pub n: usize,
    pub states: Vec<Configuration>,
    pub keys: Vec<Vec<Cell>>,
    pub index: FxHashMap<Vec<Cell>, usize>,
    pub perimeters: Vec<usize>,
    pub triangles: Vec<usize>,
    pub edges: Vec<usize>,
    /// Perimeter histogram: perimeter → number of states.
    pub m_k: BTreeMap<usize, usize>,
}

impl StateSpace {
    pub fn from_keys(n: usize, mut keys: Vec<Vec<Cell>>) -> StateSpace {
        keys.sort();
        let states: Vec<Configuration> = keys
            .iter()
            .map(|k| Configuration::from_cells(k.iter().copied()).expect("distinct cells"))
            .collect();
        let index = keys.iter().enumerate().map(|(i, k)| (k.clone(), i)).collect();
        let perimeters: Vec<usize> = states.iter().map(|s| s.perimeter_walk_unchecked().len).collect();
        let mut m_k = BTreeMap::new();
        for &p in &perimeters {
            *m_k.entry(p).or_insert(0) += 1;
        }
        StateSpace {
            n,
            triangles: states.iter().map(|s| s.triangle_count()).collect(),
            edges: states.iter().map(|s| s.edge_count()).collect(),
            states,
            keys,
            index,
            perimeters,
            m_k,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, cfg: &Configuration) -> Option<usize> {
        self.index.get(&cfg.canonical_key()).copied()
    }

    pub fn p_min(&self) -> usize {
        *self.perimeters.iter().min().expect("nonempty")
    }

    pub fn p_max(&self) -> usize {
        2 * self.n - 2
    }

    /// One snapshot block per state, blocks separated by blank lines.
    pub fn dump(&self) -> String {
        self.states.iter().map(|s| s.to_snapshot()).collect::<Vec<_>>().join("\n")
    }

    pub fn histogram_csv(&self) -> String {
        let mut s = String::from("k,m_k\n");
        for (k, m) in &self.m_k {
            let _ = writeln!(s, "{k},{m}");
        }
        s
    }
}

fn in_half_plane(c: Cell) -> bool {
    c.r > 0 || (c.r == 0 && c.q >= 0)
}

/// Redelmeier-style growth of connected cell sets whose anchor is the origin,
/// keeping the hole-free ones.
pub fn enumerate(n: usize) -> Result<StateSpace, SolverError> {
    if n == 0 || n > MAX_ENUM_N {
        return Err(SolverError::OutOfRange(n));
    }
    let mut keys = Vec::new();
    let mut current = Vec::with_capacity(n);
    let mut marked = FxHashSet::default();
    marked.insert(Cell::ORIGIN);
    grow(n, &mut current, vec![Cell::ORIGIN], &mut marked, &mut keys);
    Ok(StateSpace::from_keys(n, keys))
}

fn grow(
    n: usize,
    current: &mut Vec<Cell>,
    mut untried: Vec<Cell>,
    marked: &mut FxHashSet<Cell>,
    out: &mut Vec<Vec<Cell>>,
) {
    while let Some(c) = untried.pop() {
        current.push(c);
        if current.len() == n {
            let cfg = Configuration::from_cells(current.iter().copied()).expect("distinct");
            if !cfg.has_hole() {
                let mut key = current.clone();
                key.sort_unstable();
                out.push(key);
            }
        } else {
            let fresh: Vec<Cell> = c
                .neighbors()
                .into_iter()
                .filter(|&x| in_half_plane(x) && marked.insert(x))
                .collect();
            let mut next = untried.clone();
            next.extend(fresh.iter().copied());
            grow(n, current, next, marked, out);
            for x in fresh {
                marked.remove(&x);
            }
        }
        current.pop();
    }
}

/// Second, independent enumeration: every connected set inside the window of
/// radius `n−1` around the origin is reached by adding one neighboring cell at
/// a time; translates are merged through canonical keys, and holed sets are
/// dropped only at the final size.
pub fn enumerate_by_extension(n: usize) -> Result<StateSpace, SolverError> {
    if n == 0 || n > MAX_ENUM_N {
        return Err(SolverError::OutOfRange(n));
    }
    let radius = n as i32 - 1;
    let mut level: FxHashSet<Vec<Cell>> = FxHashSet::default();
    level.insert(vec![Cell::ORIGIN]);
    for _ in 1..n {
        let mut next = FxHashSet::default();
        for set in &level {
            let members: FxHashSet<Cell> = set.iter().copied().collect();
            for &c in set {
                for x in c.neighbors() {
                    if members.contains(&x) || x.distance(Cell::ORIGIN) > radius {
                        continue;
                    }
                    let cfg = Configuration::from_cells(set.iter().copied().chain([x])).expect("distinct");
                    next.insert(cfg.canonical_key());
                }
            }
        }
        level = next;
    }
    let keys = level
        .into_iter()
        .filter(|k| !Configuration::from_cells(k.iter().copied()).expect("distinct").has_hole())
        .collect();
    Ok(StateSpace::from_keys(n, keys))
}

/// Transition structure of M on a state space, independent of λ: for each
/// state the other states reachable in one valid move, with the number of
/// moves reaching them and their triangle change.
#[derive(Clone, Debug)]
pub struct Kernel {
    pub n: usize,
    pub rows: Vec<Vec<(usize, u32, i32)>>,
}

pub fn build_kernel(space: &StateSpace) -> Kernel {
    let rows = space
        .states
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut row: Vec<(usize, u32, i32)> = move_targets(s)
                .into_iter()
                .map(|(key, (count, dt))| (*space.index.get(&key).expect("moves stay in the state space"), count, dt))
                .filter(|&(j, _, _)| j != i)
                .collect();
            row.sort_unstable();
            row
        })
        .collect();
    Kernel { n: space.n, rows }
}

/// Row-stochastic matrix in sparse form: off-diagonal entries plus diagonal.
#[derive(Clone, Debug)]
pub struct TransitionMatrix {
    pub rows: Vec<Vec<(usize, f64)>>,
    pub diag: Vec<f64>,
}

impl TransitionMatrix {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diag[i];
        }
        self.rows[i].iter().find(|e| e.0 == j).map_or(0.0, |e| e.1)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let m = self.len();
        let mut d = vec![vec![0.0; m]; m];
        for i in 0..m {
            d[i][i] = self.diag[i];
            for &(j, p) in &self.rows[i] {
                d[i][j] = p;
            }
        }
        d
    }

    /// `π P`.
    pub fn left_multiply(&self, pi: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = pi.iter().zip(&self.diag).map(|(a, b)| a * b).collect();
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, p) in row {
                out[j] += pi[i] * p;
            }
        }
        out
    }
}

pub fn matrix_from_kernel(kernel: &Kernel, lambda: f64) -> TransitionMatrix {
    let scale = 1.0 / (6.0 * kernel.n as f64);
    let rows: Vec<Vec<(usize, f64)>> = kernel
        .rows
        .iter()
        .map(|row| row.iter().map(|&(j, c, dt)| (j, c as f64 * scale * acceptance(lambda, dt))).collect())
        .collect();
    let diag = rows.iter().map(|row| 1.0 - row.iter().map(|e| e.1).sum::<f64>()).collect();
    TransitionMatrix { rows, diag }
}

pub fn build_matrix(space: &StateSpace, lambda: f64) -> TransitionMatrix {
    matrix_from_kernel(&build_kernel(space), lambda)
}

fn normalized(w: Vec<f64>) -> Vec<f64> {
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

/// `π(σ) = λ^(−p(σ)) / Z`.
pub fn stationary(space: &StateSpace, lambda: f64) -> Vec<f64> {
    normalized(space.perimeters.iter().map(|&p| lambda.powi(-(p as i32))).collect())
}

/// `λ^(t(σ))` normalized.
pub fn stationary_triangle_form(space: &StateSpace, lambda: f64) -> Vec<f64> {
    normalized(space.triangles.iter().map(|&t| lambda.powi(t as i32)).collect())
}

/// `λ^(e(σ))` normalized.
pub fn stationary_edge_form(space: &StateSpace, lambda: f64) -> Vec<f64> {
    normalized(space.edges.iter().map(|&e| lambda.powi(e as i32)).collect())
}

pub fn partition_function(space: &StateSpace, lambda: f64) -> f64 {
    space.perimeters.iter().map(|&p| lambda.powi(-(p as i32))).sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StationarityReport {
    /// `‖πP − π‖∞`.
    pub residual: f64,
    /// Largest `|π(σ)P(σ,τ) − π(τ)P(τ,σ)|`.
    pub balance_residual: f64,
    /// Largest relative balance error over pairs with positive flow.
    pub balance_relative: f64,
}

pub fn verify_stationary_with(matrix: &TransitionMatrix, pi: &[f64]) -> StationarityReport {
    let pip = matrix.left_multiply(pi);
    let residual = pip.iter().zip(pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let mut balance_residual: f64 = 0.0;
    let mut balance_relative: f64 = 0.0;
    for (i, row) in matrix.rows.iter().enumerate() {
        for &(j, p) in row {
            let fwd = pi[i] * p;
            let back = pi[j] * matrix.get(j, i);
            let diff = (fwd - back).abs();
            balance_residual = balance_residual.max(diff);
            balance_relative = balance_relative.max(diff / fwd.max(back));
        }
    }
    StationarityReport { residual, balance_residual, balance_relative }
}

pub fn verify_stationary(space: &StateSpace, lambda: f64) -> StationarityReport {
    verify_stationary_with(&build_matrix(space, lambda), &stationary(space, lambda))
}

fn reachable(adj: &[Vec<usize>]) -> usize {
    if adj.is_empty() {
        return 0;
    }
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    let mut count = 1;
    while let Some(i) = queue.pop_front() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                count += 1;
                queue.push_back(j);
            }
        }
    }
    count
}

/// Strong connectivity of the positive-probability digraph.
pub fn verify_irreducible(matrix: &TransitionMatrix) -> bool {
    let m = matrix.len();
    let mut fwd = vec![Vec::new(); m];
    let mut back = vec![Vec::new(); m];
    for (i, row) in matrix.rows.iter().enumerate() {
        for &(j, p) in row {
            if p > 0.0 {
                fwd[i].push(j);
                back[j].push(i);
            }
        }
    }
    reachable(&fwd) == m && reachable(&back) == m
}

/// `P(σ,τ) > 0 ⇔ P(τ,σ) > 0`.
pub fn support_symmetric(matrix: &TransitionMatrix) -> bool {
    matrix
        .rows
        .iter()
        .enumerate()
        .all(|(i, row)| row.iter().all(|&(j, p)| (p > 0.0) == (matrix.get(j, i) > 0.0)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Tail {
    /// Mass of `{σ : p(σ) ≥ α·p_min}`.
    Compression(f64),
    /// Mass of `{σ : p(σ) ≤ β·p_max}`.
    Expansion(f64),
}

pub fn tail_probability(space: &StateSpace, lambda: f64, tail: Tail) -> f64 {
    let pi = stationary(space, lambda);
    let (p_min, p_max) = (space.p_min() as f64, space.p_max() as f64);
    let hit = |p: usize| match tail {
        Tail::Compression(alpha) => p as f64 >= alpha * p_min,
        Tail::Expansion(beta) => p as f64 <= beta * p_max,
    };
    space.perimeters.iter().zip(&pi).filter(|(&p, _)| hit(p)).map(|(_, w)| w).sum()
}

/// Exact tail mass for an integer bias as `(numerator, denominator)`:
/// `Σ_{p in tail} m_p λ^(p_max - p)` over the same sum taken over all `p`.
pub fn tail_probability_exact(space: &StateSpace, lambda: u32, tail: Tail) -> (BigUint, BigUint) {
    let (p_min, p_max) = (space.p_min() as f64, space.p_max() as f64);
    let hit = |p: usize| match tail {
        Tail::Compression(alpha) => p as f64 >= alpha * p_min,
        Tail::Expansion(beta) => p as f64 <= beta * p_max,
    };
    let top = space.p_max();
    let mut num = BigUint::from(0u32);
    let mut den = BigUint::from(0u32);
    for (&p, &m) in &space.m_k {
        let w = BigUint::from(m) * BigUint::from(lambda).pow((top - p) as u32);
        if hit(p) {
            num += &w;
        }
        den += w;
    }
    (num, den)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub lambda: f64,
    pub n: usize,
    pub z_exact: f64,
    pub z_lb_sqrt2: f64,
    /// Present when λ ≥ 1.
    pub z_lb_167: Option<f64>,
    /// Present when λ > 1.
    pub z_lb_217: Option<f64>,
    /// Self-avoiding polygon counts on the hexagonal lattice keyed by length.
    pub saw_counts: BTreeMap<usize, u64>,
}

impl BoundReport {
    pub fn holds(&self) -> bool {
        self.z_lb_sqrt2 <= self.z_exact
            && self.z_lb_167.is_none_or(|b| b <= self.z_exact)
            && self.z_lb_217.is_none_or(|b| b <= self.z_exact)
    }
}

pub fn bounds_report(space: &StateSpace, lambda: f64) -> BoundReport {
    let pmax = space.p_max() as i32;
    BoundReport {
        lambda,
        n: space.n,
        z_exact: partition_function(space, lambda),
        z_lb_sqrt2: (2f64.sqrt() / lambda).powi(pmax),
        z_lb_167: (lambda >= 1.0).then(|| 0.12 * (1.67 / lambda).powi(pmax)),
        z_lb_217: (lambda > 1.0).then(|| 0.13 * (2.17 / lambda).powi(pmax)),
        saw_counts: BTreeMap::new(),
    }
}

/// Paths whose every step goes up-right or up-left: `2^(n−1)` induced trees.
pub fn zigzag_paths(n: usize) -> Vec<Configuration> {
    (0..1u64 << (n - 1))
        .map(|bits| {
            let mut c = Cell::ORIGIN;
            let mut cells = vec![c];
            for i in 0..n - 1 {
                c = c.neighbor(if bits >> i & 1 == 0 { Direction::NE } else { Direction::NW });
                cells.push(c);
            }
            Configuration::from_cells(cells).expect("path cells are distinct")
        })
        .collect()
}

/// Top row, rightmost cell.
fn top_right(cells: &[Cell]) -> Cell {
    *cells.iter().max_by_key(|c| (c.r, c.q)).expect("nonempty")
}

/// Top row, leftmost cell.
fn top_left(cells: &[Cell]) -> Cell {
    *cells.iter().max_by_key(|c| (c.r, -c.q)).expect("nonempty")
}

/// Bottom row, rightmost cell.
fn bottom_right(cells: &[Cell]) -> Cell {
    *cells.iter().max_by_key(|c| (-c.r, c.q)).expect("nonempty")
}

/// Bottom row, leftmost cell.
fn bottom_left(cells: &[Cell]) -> Cell {
    *cells.iter().min_by_key(|c| (c.r, c.q)).expect("nonempty")
}

/// Configurations built from one particle by repeatedly stacking one of the
/// three-particle states above the current top row, either with its bottom
/// row's rightmost cell up-left of the top row's leftmost cell, or with its
/// bottom row's leftmost cell up-right of the top row's rightmost cell. The
/// `(n−1) mod 3` leftover particles continue straight up-right. Produces
/// `22^⌊(n−1)/3⌋` configurations.
pub fn attachment_construction(n: usize) -> Vec<Configuration> {
    let triples = enumerate(3).expect("n = 3 is enumerable");
    let mut built: Vec<Vec<Cell>> = vec![vec![Cell::ORIGIN]];
    for _ in 0..(n - 1) / 3 {
        let mut next = Vec::with_capacity(built.len() * 22);
        for base in &built {
            for piece in &triples.keys {
                let q = top_left(base);
                let h = bottom_right(piece);
                let shift = q.neighbor(Direction::NW) - h;
                next.push(base.iter().copied().chain(piece.iter().map(|c| *c + shift)).collect());
                let p = top_right(base);
                let l = bottom_left(piece);
                let shift = p.neighbor(Direction::NE) - l;
                next.push(base.iter().copied().chain(piece.iter().map(|c| *c + shift)).collect());
            }
        }
        built = next;
    }
    built
        .into_iter()
        .map(|mut cells| {
            while cells.len() < n {
                let p = top_right(&cells);
                cells.push(p.neighbor(Direction::NE));
            }
            Configuration::from_cells(cells).expect("attachments do not overlap")
        })
        .collect()
}

/// A vertex of the hexagonal lattice, i.e. a triangular face of the particle
/// lattice: `{c, c+e0, c+e1}` when `up`, `{c, c+e1, c+e2}` otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Face {
    pub cell: Cell,
    pub up: bool,
}

impl Face {
    pub fn from_triangle(t: [Cell; 3]) -> Face {
        let r0 = t.iter().map(|c| c.r).min().expect("three cells");
        let low: Vec<Cell> = t.iter().copied().filter(|c| c.r == r0).collect();
        if low.len() == 2 {
            Face { cell: *low.iter().min_by_key(|c| c.q).expect("two"), up: true }
        } else {
            Face { cell: low[0], up: false }
        }
    }

    pub fn neighbors(self) -> [Face; 3] {
        let Cell { q, r } = self.cell;
        let f = |q, r, up| Face { cell: Cell::new(q, r), up };
        if self.up {
            [f(q, r, false), f(q + 1, r - 1, false), f(q + 1, r, false)]
        } else {
            [f(q, r, true), f(q - 1, r, true), f(q - 1, r + 1, true)]
        }
    }

    pub fn centroid(self) -> (f64, f64) {
        let c = self.cell;
        let t = if self.up {
            [c, c.neighbor(Direction::E), c.neighbor(Direction::NE)]
        } else {
            [c, c.neighbor(Direction::NE), c.neighbor(Direction::NW)]
        };
        let pts = t.map(|x| x.embed());
        ((pts[0].0 + pts[1].0 + pts[2].0) / 3.0, (pts[0].1 + pts[1].1 + pts[2].1) / 3.0)
    }
}

/// Boundary of the union of hexagons dual to the occupied cells, returned as
/// a closed vertex cycle. `None` if the boundary is not one simple cycle.
pub fn dual_polygon(cfg: &Configuration) -> Option<Vec<Face>> {
    let mut adj: FxHashMap<Face, Vec<Face>> = FxHashMap::default();
    let mut edges = 0;
    for &c in cfg.cells() {
        for d in Direction::ALL {
            let x = c.neighbor(d);
            if cfg.contains(x) {
                continue;
            }
            let a = Face::from_triangle([c, x, c.neighbor(d.rotate(1))]);
            let b = Face::from_triangle([c, x, c.neighbor(d.rotate(-1))]);
            adj.entry(a).or_default().push(b);
            adj.entry(b).or_default().push(a);
            edges += 1;
        }
    }
    if adj.values().any(|v| v.len() != 2) {
        return None;
    }
    let start = *adj.keys().min().expect("a particle has boundary edges");
    let mut cycle = vec![start];
    let (mut prev, mut cur) = (start, adj[&start][0]);
    while cur != start {
        cycle.push(cur);
        let nb = &adj[&cur];
        let next = if nb[0] == prev { nb[1] } else { nb[0] };
        prev = cur;
        cur = next;
    }
    (cycle.len() == edges).then_some(cycle)
}

/// Self-avoiding polygons of length `len` on the hexagonal lattice, counted
/// up to translation.
pub fn sap_count(len: usize) -> u64 {
    if len < 6 || len % 2 == 1 {
        return 0;
    }
    let origin = Face { cell: Cell::ORIGIN, up: true };
    let o = origin.centroid();
    let step = 1.0 / 3f64.sqrt();
    let mut path = vec![origin];
    let mut closed = 0u64;
    sap_dfs(&mut path, len, o, step, &mut closed);
    // Each polygon has len/2 vertices of the origin's class and two directions.
    closed / len as u64
}

fn sap_dfs(path: &mut Vec<Face>, len: usize, o: (f64, f64), step: f64, closed: &mut u64) {
    let cur = *path.last().expect("nonempty");
    let left = len - (path.len() - 1);
    for nb in cur.neighbors() {
        if nb == path[0] {
            if left == 1 {
                *closed += 1;
            }
            continue;
        }
        if left == 1 || path.contains(&nb) {
            continue;
        }
        let (x, y) = nb.centroid();
        let dist = ((x - o.0).powi(2) + (y - o.1).powi(2)).sqrt();
        if dist > (left - 1) as f64 * step + 1e-9 {
            continue;
        }
        path.push(nb);
        sap_dfs(path, len, o, step, closed);
        path.pop();
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SawCheck {
    /// `(k, m_k, SAP(2k+6))` for each observed perimeter.
    pub rows: Vec<(usize, usize, u64)>,
    /// Every state's dual boundary is a simple cycle of length `2k+6`.
    pub dual_ok: bool,
}

impl SawCheck {
    pub fn holds(&self) -> bool {
        self.dual_ok && self.rows.iter().all(|&(_, m, s)| m as u64 <= s)
    }
}

/// Check the dual-polygon identity on every state of `space` and compare the
/// perimeter histogram against hexagonal polygon counts, for perimeters up
/// to `kmax`.
pub fn saw_bound_check(space: &StateSpace, kmax: usize) -> SawCheck {
    let dual_ok = space.states.iter().zip(&space.perimeters).all(|(s, &k)| {
        if s.n() == 1 {
            return dual_polygon(s).map(|c| c.len()) == Some(6);
        }
        dual_polygon(s).map(|c| c.len()) == Some(2 * k + 6)
    });
    let rows = space
        .m_k
        .iter()
        .filter(|(&k, _)| k <= kmax)
        .map(|(&k, &m)| (k, m, sap_count(2 * k + 6)))
        .collect();
    SawCheck { rows, dual_ok }
}
