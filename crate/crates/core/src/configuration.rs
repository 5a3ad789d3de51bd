//! Occupied-cell sets and their static metrics: edges, triangles, the
//! perimeter walk, connectivity, holes, gaps and anchors.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::Rng;
use rustc_hash::{FxHashMap, FxHashSet};
use thiserror::Error;

use crate::lattice::{Cell, Direction};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("configuration has no particles")]
    Empty,
    #[error("cell {0} listed twice")]
    Duplicate(Cell),
    #[error("configuration is disconnected")]
    Disconnected,
    #[error("configuration has a hole")]
    HasHole,
    #[error("cell {0} is occupied")]
    Occupied(Cell),
    #[error("cell {0} is not occupied")]
    NotOccupied(Cell),
    #[error("operation needs at least two particles")]
    TooSmall,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// A finite set of occupied cells with cached edge and triangle counts.
///
/// Particles keep a stable slot index so that a uniformly random particle can
/// be drawn in O(1).
#[derive(Clone, Debug)]
pub struct Configuration {
    cells: Vec<Cell>,
    slot: FxHashMap<Cell, usize>,
    edges: usize,
    triangles: usize,
}

impl PartialEq for Configuration {
    fn eq(&self, other: &Self) -> bool {
        self.n() == other.n() && self.cells.iter().all(|c| other.contains(*c))
    }
}

impl Eq for Configuration {}

/// Clockwise walk around the external boundary, starting and ending at the
/// anchor. `cells` repeats the start at the end, so it holds `len + 1` cells
/// when `n ≥ 2` and a single cell otherwise.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PerimeterWalk {
    pub cells: Vec<Cell>,
    pub len: usize,
}

impl PerimeterWalk {
    /// Exterior angle in degrees at each vertex of the closed walk, in walk
    /// order beginning at the anchor.
    pub fn exterior_angles(&self) -> Vec<u32> {
        if self.len == 0 {
            return Vec::new();
        }
        let m = self.len;
        (0..m)
            .map(|i| {
                let c = self.cells[i];
                let prev = self.cells[(i + m - 1) % m];
                let next = self.cells[i + 1];
                let back = c.direction_to(prev).expect("walk steps are adjacent");
                let out = c.direction_to(next).expect("walk steps are adjacent");
                let k = (back.index() as i32 - out.index() as i32).rem_euclid(6);
                60 * if k == 0 { 6 } else { k as u32 }
            })
            .collect()
    }
}

impl Configuration {
    pub fn from_cells<I: IntoIterator<Item = Cell>>(cells: I) -> Result<Self, ConfigError> {
        let mut cfg = Configuration {
            cells: Vec::new(),
            slot: FxHashMap::default(),
            edges: 0,
            triangles: 0,
        };
        for c in cells {
            if cfg.slot.insert(c, cfg.cells.len()).is_some() {
                return Err(ConfigError::Duplicate(c));
            }
            cfg.cells.push(c);
        }
        if cfg.cells.is_empty() {
            return Err(ConfigError::Empty);
        }
        cfg.edges = cfg.count_edges();
        cfg.triangles = cfg.count_triangles();
        Ok(cfg)
    }

    /// `n` cells starting at the origin and stepping in direction `d`.
    pub fn line(n: usize, d: Direction) -> Self {
        let mut c = Cell::ORIGIN;
        let mut cells = Vec::with_capacity(n);
        for _ in 0..n {
            cells.push(c);
            c = c.neighbor(d);
        }
        Configuration::from_cells(cells).expect("line of at least one cell")
    }

    pub fn n(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn contains(&self, c: Cell) -> bool {
        self.slot.contains_key(&c)
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles
    }

    /// Occupied neighbors of `c`, treating `ignore` as empty.
    pub fn degree_ignoring(&self, c: Cell, ignore: Option<Cell>) -> usize {
        c.neighbors()
            .into_iter()
            .filter(|&x| Some(x) != ignore && self.contains(x))
            .count()
    }

    pub fn degree(&self, c: Cell) -> usize {
        self.degree_ignoring(c, None)
    }

    /// Triangles that a particle at `c` would close with two occupied
    /// corners, treating `ignore` as empty.
    pub fn triangles_at_ignoring(&self, c: Cell, ignore: Option<Cell>) -> usize {
        let occ = |x: Cell| Some(x) != ignore && self.contains(x);
        let nb = c.neighbors();
        (0..6).filter(|&d| occ(nb[d]) && occ(nb[(d + 1) % 6])).count()
    }

    fn count_edges(&self) -> usize {
        self.cells
            .iter()
            .map(|&c| (0..3).filter(|&d| self.contains(c.neighbor(Direction::new(d)))).count())
            .sum()
    }

    fn count_triangles(&self) -> usize {
        self.cells
            .iter()
            .map(|&c| {
                let e = self.contains(c.neighbor(Direction::E));
                let ne = self.contains(c.neighbor(Direction::NE));
                let nw = self.contains(c.neighbor(Direction::NW));
                (e && ne) as usize + (ne && nw) as usize
            })
            .sum()
    }

    /// Recompute edge and triangle counts from scratch and compare with the
    /// cached values.
    pub fn audit_cache(&self) -> bool {
        self.count_edges() == self.edges && self.count_triangles() == self.triangles
    }

    /// Relocate the particle at `from` to the empty cell `to`, updating the
    /// cached counts locally. No validity check is made.
    pub fn move_particle(&mut self, from: Cell, to: Cell) -> Result<(), ConfigError> {
        if self.contains(to) {
            return Err(ConfigError::Occupied(to));
        }
        let i = *self.slot.get(&from).ok_or(ConfigError::NotOccupied(from))?;
        let e_old = self.degree(from);
        let t_old = self.triangles_at_ignoring(from, None);
        let e_new = self.degree_ignoring(to, Some(from));
        let t_new = self.triangles_at_ignoring(to, Some(from));
        self.slot.remove(&from);
        self.slot.insert(to, i);
        self.cells[i] = to;
        self.edges = self.edges + e_new - e_old;
        self.triangles = self.triangles + t_new - t_old;
        Ok(())
    }

    pub fn insert(&mut self, c: Cell) -> Result<(), ConfigError> {
        if self.contains(c) {
            return Err(ConfigError::Occupied(c));
        }
        self.edges += self.degree(c);
        self.triangles += self.triangles_at_ignoring(c, None);
        self.slot.insert(c, self.cells.len());
        self.cells.push(c);
        Ok(())
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = FxHashSet::default();
        let mut queue = VecDeque::new();
        seen.insert(self.cells[0]);
        queue.push_back(self.cells[0]);
        while let Some(c) = queue.pop_front() {
            for x in c.neighbors() {
                if self.contains(x) && seen.insert(x) {
                    queue.push_back(x);
                }
            }
        }
        seen.len() == self.n()
    }

    fn bounds(&self) -> (i32, i32, i32, i32) {
        let mut b = (i32::MAX, i32::MIN, i32::MAX, i32::MIN);
        for c in &self.cells {
            b.0 = b.0.min(c.q);
            b.1 = b.1.max(c.q);
            b.2 = b.2.min(c.r);
            b.3 = b.3.max(c.r);
        }
        b
    }

    pub fn has_hole(&self) -> bool {
        self.has_hole_with(None)
    }

    /// Flood fill the empty cells of the bounding box inflated by one, with
    /// `extra` counted as occupied. Any empty cell left unreached is enclosed.
    fn has_hole_with(&self, extra: Option<Cell>) -> bool {
        let (mut q0, mut q1, mut r0, mut r1) = self.bounds();
        if let Some(e) = extra {
            q0 = q0.min(e.q);
            q1 = q1.max(e.q);
            r0 = r0.min(e.r);
            r1 = r1.max(e.r);
        }
        let (q0, r0) = (q0 - 1, r0 - 1);
        let w = (q1 + 1 - q0 + 1) as usize;
        let h = (r1 + 1 - r0 + 1) as usize;
        let at = |c: Cell| (c.r - r0) as usize * w + (c.q - q0) as usize;
        let mut blocked = vec![false; w * h];
        for &c in &self.cells {
            blocked[at(c)] = true;
        }
        if let Some(e) = extra {
            blocked[at(e)] = true;
        }
        let occupied = self.n() + extra.is_some() as usize;
        let mut seen = vec![false; w * h];
        let mut stack = vec![Cell::new(q0, r0)];
        seen[0] = true;
        let mut reached = 1;
        while let Some(c) = stack.pop() {
            for x in c.neighbors() {
                if x.q < q0 || x.r < r0 || x.q >= q0 + w as i32 || x.r >= r0 + h as i32 {
                    continue;
                }
                let i = at(x);
                if !blocked[i] && !seen[i] {
                    seen[i] = true;
                    reached += 1;
                    stack.push(x);
                }
            }
        }
        reached + occupied < w * h
    }

    /// Whether occupying the empty cell `l` would enclose a hole.
    pub fn is_gap(&self, l: Cell) -> Result<bool, ConfigError> {
        if self.contains(l) {
            return Err(ConfigError::Occupied(l));
        }
        Ok(self.has_hole_with(Some(l)))
    }

    /// Local shortcut for `is_gap` on hole-free configurations: a cell whose
    /// occupied neighbors form at most one contiguous arc cannot close a hole.
    pub fn creates_hole(&self, l: Cell) -> bool {
        let nb = l.neighbors().map(|c| self.contains(c));
        let arcs = (0..6).filter(|&i| nb[i] && !nb[(i + 1) % 6]).count();
        arcs > 1 && self.has_hole_with(Some(l))
    }

    /// Lowest cell, leftmost among the lowest.
    pub fn anchor(&self) -> Cell {
        *self.cells.iter().min_by_key(|c| c.height_key()).expect("nonempty")
    }

    /// First occupied cell in a scan of the anchor's neighbors beginning at
    /// east and turning counterclockwise.
    pub fn first_neighbor(&self) -> Result<Cell, ConfigError> {
        if self.n() < 2 {
            return Err(ConfigError::TooSmall);
        }
        let s = self.anchor();
        s.neighbors()
            .into_iter()
            .find(|&c| self.contains(c))
            .ok_or(ConfigError::Disconnected)
    }

    /// Clockwise boundary walk from the anchor.
    pub fn perimeter(&self) -> Result<PerimeterWalk, ConfigError> {
        if !self.is_connected() {
            return Err(ConfigError::Disconnected);
        }
        if self.has_hole() {
            return Err(ConfigError::HasHole);
        }
        Ok(self.perimeter_walk_unchecked())
    }

    /// The boundary walk without the connectivity and hole checks.
    pub fn perimeter_walk_unchecked(&self) -> PerimeterWalk {
        let s = self.anchor();
        if self.n() == 1 {
            return PerimeterWalk { cells: vec![s], len: 0 };
        }
        // The anchor's west neighbor is empty, so pretend the walk arrived
        // from there.
        let first = self.next_on_boundary(s, Direction::W);
        let mut cells = vec![s, first];
        let (mut prev, mut cur) = (s, first);
        loop {
            let back = cur.direction_to(prev).expect("adjacent");
            let next = self.next_on_boundary(cur, back);
            if cur == s && next == first {
                break;
            }
            cells.push(next);
            prev = cur;
            cur = next;
        }
        let len = cells.len() - 1;
        PerimeterWalk { cells, len }
    }

    /// Scan clockwise from just past `back` for the next occupied neighbor.
    fn next_on_boundary(&self, c: Cell, back: Direction) -> Cell {
        (1..=6)
            .map(|k| c.neighbor(back.rotate(-k)))
            .find(|&x| self.contains(x))
            .expect("particle has an occupied neighbor")
    }

    /// Perimeter from the triangle count, valid for connected hole-free
    /// configurations.
    pub fn perimeter_from_triangles(&self) -> usize {
        2 * self.n() - 2 - self.triangles
    }

    /// Translate so the anchor sits at the origin.
    pub fn canonicalize(&self) -> Configuration {
        let a = self.anchor();
        Configuration::from_cells(self.cells.iter().map(|c| *c - a)).expect("translation is injective")
    }

    /// Sorted cells of the canonical translate; equal keys mean equal
    /// configurations.
    pub fn canonical_key(&self) -> Vec<Cell> {
        let a = self.anchor();
        let mut key: Vec<Cell> = self.cells.iter().map(|c| *c - a).collect();
        key.sort_unstable();
        key
    }

    pub fn sorted_cells(&self) -> Vec<Cell> {
        let mut v = self.cells.clone();
        v.sort_unstable();
        v
    }

    pub fn to_snapshot(&self) -> String {
        let mut s = String::new();
        for c in self.sorted_cells() {
            let _ = writeln!(s, "{} {}", c.q, c.r);
        }
        s
    }

    pub fn from_snapshot(text: &str) -> Result<Configuration, ConfigError> {
        let mut cells = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| ConfigError::Parse { line: i + 1, msg };
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 2 {
                return Err(err(format!("expected two integers, got {line:?}")));
            }
            let q = parts[0].parse::<i32>().map_err(|e| err(format!("{e}: {:?}", parts[0])))?;
            let r = parts[1].parse::<i32>().map_err(|e| err(format!("{e}: {:?}", parts[1])))?;
            cells.push((i + 1, Cell::new(q, r)));
        }
        let mut seen = FxHashSet::default();
        for &(line, c) in &cells {
            if !seen.insert(c) {
                return Err(ConfigError::Parse { line, msg: format!("duplicate cell {c}") });
            }
        }
        Configuration::from_cells(cells.into_iter().map(|(_, c)| c))
    }

    /// Connected and hole-free.
    pub fn is_valid(&self) -> bool {
        self.is_connected() && !self.has_hole()
    }

    /// Random connected hole-free configuration grown one cell at a time from
    /// the origin. Each step picks a random particle and direction and
    /// occupies that neighbor unless it is taken or would close a hole.
    pub fn random_hole_free<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Configuration {
        assert!(n >= 1);
        let mut cfg = Configuration::from_cells([Cell::ORIGIN]).expect("one cell");
        while cfg.n() < n {
            let c = cfg.cells[rng.gen_range(0..cfg.n())];
            let x = c.neighbor(Direction::new(rng.gen_range(0..6)));
            if !cfg.contains(x) && !cfg.creates_hole(x) {
                cfg.insert(x).expect("empty cell");
            }
        }
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(cells: &[(i32, i32)]) -> Configuration {
        Configuration::from_cells(cells.iter().map(|&(q, r)| Cell::new(q, r))).unwrap()
    }

    fn hexagon() -> Configuration {
        let mut v = vec![Cell::ORIGIN];
        v.extend(Cell::ORIGIN.neighbors());
        Configuration::from_cells(v).unwrap()
    }

    fn ring() -> Configuration {
        Configuration::from_cells(Cell::ORIGIN.neighbors()).unwrap()
    }

    /// Edge count by checking every unordered pair.
    fn edges_by_pairs(c: &Configuration) -> usize {
        let v = c.cells();
        let mut e = 0;
        for i in 0..v.len() {
            for j in (i + 1)..v.len() {
                e += v[i].is_adjacent(v[j]) as usize;
            }
        }
        e
    }

    /// Triangle count by checking every unordered triple.
    fn triangles_by_triples(c: &Configuration) -> usize {
        let v = c.cells();
        let mut t = 0;
        for i in 0..v.len() {
            for j in (i + 1)..v.len() {
                for k in (j + 1)..v.len() {
                    t += (v[i].is_adjacent(v[j]) && v[j].is_adjacent(v[k]) && v[i].is_adjacent(v[k]))
                        as usize;
                }
            }
        }
        t
    }

    #[test]
    fn small_shapes() {
        let single = cfg(&[(4, 4)]);
        assert_eq!((single.edge_count(), single.triangle_count()), (0, 0));
        assert_eq!(single.perimeter().unwrap().len, 0);

        let domino = cfg(&[(0, 0), (1, 0)]);
        let w = domino.perimeter().unwrap();
        assert_eq!(w.len, 2);
        assert_eq!(w.cells, vec![Cell::new(0, 0), Cell::new(1, 0), Cell::new(0, 0)]);

        let tri = cfg(&[(0, 0), (1, 0), (0, 1)]);
        assert_eq!(tri.triangle_count(), 1);
        assert_eq!(tri.perimeter().unwrap().len, 3);

        let hex = hexagon();
        assert_eq!(hex.edge_count(), 12);
        assert_eq!(hex.perimeter().unwrap().len, 6);
        assert_eq!(hex.triangle_count(), 2 * 7 - 6 - 2);
    }

    #[test]
    fn lines_are_trees_with_maximal_perimeter() {
        for n in 1..30 {
            for d in Direction::ALL {
                let l = Configuration::line(n, d);
                assert_eq!(l.edge_count(), n - 1);
                assert_eq!(l.triangle_count(), 0);
                assert_eq!(l.perimeter().unwrap().len, 2 * n - 2);
            }
        }
    }

    #[test]
    fn connectivity_and_holes() {
        assert!(!cfg(&[(0, 0), (2, 0)]).is_connected());
        assert!(cfg(&[(9, -9)]).is_connected());
        assert!(ring().has_hole());
        assert!(!hexagon().has_hole());
        assert!(!Configuration::line(10, Direction::E).has_hole());
        assert_eq!(ring().perimeter(), Err(ConfigError::HasHole));
        assert_eq!(cfg(&[(0, 0), (2, 0)]).perimeter(), Err(ConfigError::Disconnected));
    }

    #[test]
    fn gap_examples() {
        let mut cells: Vec<Cell> = Cell::ORIGIN.neighbors().to_vec();
        let missing = cells.remove(2);
        let open_ring = Configuration::from_cells(cells).unwrap();
        assert!(!open_ring.has_hole());
        assert!(open_ring.is_gap(missing).unwrap());
        assert!(open_ring.creates_hole(missing));
        assert!(!open_ring.is_gap(Cell::ORIGIN).unwrap());

        let domino = cfg(&[(0, 0), (1, 0)]);
        for c in [Cell::ORIGIN.neighbors(), Cell::new(1, 0).neighbors()].concat() {
            if !domino.contains(c) {
                assert!(!domino.is_gap(c).unwrap());
            }
        }
        assert_eq!(domino.is_gap(Cell::ORIGIN), Err(ConfigError::Occupied(Cell::ORIGIN)));
    }

    #[test]
    fn gap_matches_hole_after_insertion() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..10_000 {
            let n = 2 + trial % 25;
            let c = Configuration::random_hole_free(n, &mut rng);
            let p = c.cells()[rng.gen_range(0..n)];
            let l = p.neighbor(Direction::new(rng.gen_range(0..6)));
            if c.contains(l) {
                continue;
            }
            let mut bigger = c.clone();
            bigger.insert(l).unwrap();
            assert_eq!(c.is_gap(l).unwrap(), bigger.has_hole());
            assert_eq!(c.creates_hole(l), bigger.has_hole());
        }
    }

    #[test]
    fn anchor_and_first_neighbor() {
        let domino = cfg(&[(3, 2), (4, 2)]);
        assert_eq!(domino.anchor(), Cell::new(3, 2));
        assert_eq!(domino.first_neighbor().unwrap(), Cell::new(4, 2));
        let upright = cfg(&[(0, 0), (0, 1), (-1, 1)]);
        assert_eq!(upright.first_neighbor().unwrap(), Cell::new(0, 1));
        let upleft = cfg(&[(0, 0), (-1, 1)]);
        assert_eq!(upleft.anchor(), Cell::ORIGIN);
        assert_eq!(upleft.first_neighbor().unwrap(), Cell::new(-1, 1));
        assert_eq!(cfg(&[(0, 0)]).first_neighbor(), Err(ConfigError::TooSmall));
    }

    #[test]
    fn canonical_forms() {
        let c = cfg(&[(0, 0), (1, 0), (1, 1), (2, -1)]);
        let moved = Configuration::from_cells(c.cells().iter().map(|x| x.offset(7, -3))).unwrap();
        assert_eq!(c.canonical_key(), moved.canonical_key());
        let canon = c.canonicalize();
        assert_eq!(canon.anchor(), Cell::ORIGIN);
        assert_eq!(canon.canonicalize(), canon);
        let rotated = Configuration::from_cells(c.cells().iter().map(|x| x.rotate60())).unwrap();
        assert_ne!(c.canonical_key(), rotated.canonical_key());
    }

    #[test]
    fn snapshot_roundtrip_and_errors() {
        let c = hexagon();
        let text = c.to_snapshot();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "-1 0");
        let back = Configuration::from_snapshot(&format!("# header\n\n{text}")).unwrap();
        assert_eq!(back, c);
        match Configuration::from_snapshot("0 0\n1 x\n") {
            Err(ConfigError::Parse { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match Configuration::from_snapshot("0 0\n0 0\n") {
            Err(ConfigError::Parse { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(Configuration::from_snapshot("# nothing\n"), Err(ConfigError::Empty));
    }

    #[test]
    fn incremental_moves_track_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut c = Configuration::random_hole_free(40, &mut rng);
        for _ in 0..5000 {
            let from = c.cells()[rng.gen_range(0..c.n())];
            let to = from.neighbor(Direction::new(rng.gen_range(0..6)));
            if c.contains(to) {
                continue;
            }
            c.move_particle(from, to).unwrap();
            assert!(c.audit_cache());
        }
    }

    fn arb_config() -> impl Strategy<Value = Configuration> {
        (1usize..40, any::<u64>()).prop_map(|(n, seed)| {
            Configuration::random_hole_free(n, &mut ChaCha8Rng::seed_from_u64(seed))
        })
    }

    proptest! {
        #[test]
        fn perimeter_identities(c in arb_config()) {
            let n = c.n();
            let w = c.perimeter().unwrap();
            let p = w.len;
            prop_assert_eq!(c.triangle_count() + p + 2, 2 * n);
            prop_assert_eq!(c.edge_count() + p + 3, 3 * n);
            prop_assert_eq!(c.triangle_count() + n - 1, c.edge_count());
            prop_assert_eq!(c.perimeter_from_triangles(), p);
            prop_assert_eq!(c.edge_count(), edges_by_pairs(&c));
            prop_assert_eq!(c.triangle_count(), triangles_by_triples(&c));
            if n >= 2 {
                prop_assert!((p * p) as f64 >= n as f64);
                prop_assert!(p <= 2 * n - 2);
                let total: u32 = w.exterior_angles().iter().sum();
                prop_assert_eq!(total as usize, 180 * p + 360);
            }
        }

        #[test]
        fn walk_keeps_exterior_on_the_left(c in arb_config()) {
            let w = c.perimeter().unwrap();
            prop_assert_eq!(w.cells.first(), w.cells.last());
            for pair in w.cells.windows(2) {
                let d = pair[0].direction_to(pair[1]).unwrap();
                prop_assert!(c.contains(pair[0]) && c.contains(pair[1]));
                prop_assert!(!c.contains(pair[0].neighbor(d.rotate(1))));
            }
            for a in w.exterior_angles() {
                prop_assert!((120..=360).contains(&a));
            }
        }

        #[test]
        fn translation_invariance(c in arb_config(), dq in -20i32..20, dr in -20i32..20) {
            let t = Configuration::from_cells(c.cells().iter().map(|x| x.offset(dq, dr))).unwrap();
            prop_assert_eq!(t.canonical_key(), c.canonical_key());
            prop_assert_eq!(t.perimeter().unwrap().len, c.perimeter().unwrap().len);
            prop_assert_eq!(t.canonicalize().canonicalize(), t.canonicalize());
        }
    }
}
