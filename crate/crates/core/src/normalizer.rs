//! Constructive ergodicity: drive any connected hole-free configuration to
//! the straight line that grows south-west from its anchor, using only moves
//! that pass [`is_valid_move`].
//!
//! Orientation follows the mirrored frame used throughout the crate: what a
//! column-drawn picture calls "up" is east here, "below and left" is
//! south-west, and a clockwise scan there is a counterclockwise scan here.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rustc_hash::{FxHashMap, FxHashSet};
use thiserror::Error;

use crate::configuration::Configuration;
use crate::dynamics::{acceptance, audit, is_valid_move, valid_moves, Move};
use crate::lattice::{Cell, Direction};

/// Direction in which eliminated particles are parked.
pub const LINE_DIRECTION: Direction = Direction::SW;

/// Depth of the preparatory-move search used when no particle can be
/// eliminated directly.
const PREP_DEPTH: usize = 2;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NormalizeError {
    #[error("configuration is not connected and hole-free")]
    InvalidInput,
    #[error("particle at {0} cannot reach the line")]
    Unreachable(Cell),
    #[error("no elimination found with {0} particles left")]
    Stuck(usize),
    #[error("emitted move {0:?} failed the validity audit")]
    InvalidMove(Move),
}

#[derive(Clone, Debug)]
pub struct NormalizerState {
    pub config: Configuration,
    pub anchor: Cell,
    pub eliminated: usize,
    pub moves: Vec<Move>,
    /// Slot index of the mover for each logged move.
    pub movers: Vec<usize>,
    slots: FxHashMap<Cell, usize>,
}

impl NormalizerState {
    pub fn new(config: Configuration) -> NormalizerState {
        let anchor = config.anchor();
        let slots = config.cells().iter().enumerate().map(|(i, &c)| (c, i)).collect();
        NormalizerState { config, anchor, eliminated: 0, moves: Vec::new(), movers: Vec::new(), slots }
    }

    /// The `k`-th parking cell, `k ≥ 1`.
    pub fn line_cell(&self, k: usize) -> Cell {
        let (dq, dr) = LINE_DIRECTION.offset();
        self.anchor.offset(dq * k as i32, dr * k as i32)
    }

    pub fn on_line(&self, c: Cell) -> bool {
        (1..=self.eliminated).any(|k| self.line_cell(k) == c)
    }

    pub fn is_fixed(&self, c: Cell) -> bool {
        c == self.anchor || self.on_line(c)
    }

    /// Particles that are neither the anchor nor parked.
    pub fn remaining(&self) -> usize {
        self.config.n() - 1 - self.eliminated
    }

    fn apply(&mut self, from: Cell, to: Cell) -> Result<(), NormalizeError> {
        let m = Move::new(&self.config, from, to);
        if !is_valid_move(&self.config, from, to) {
            return Err(NormalizeError::InvalidMove(m));
        }
        self.config.move_particle(from, to).expect("target is empty");
        let slot = self.slots.remove(&from).expect("tracked particle");
        self.slots.insert(to, slot);
        self.moves.push(m);
        self.movers.push(slot);
        debug_assert!(audit(&self.config).is_ok());
        Ok(())
    }

    /// Assert the parked particles are exactly the first `eliminated` line
    /// cells and nothing else sits on the line beyond them.
    pub fn line_intact(&self) -> bool {
        (1..=self.eliminated).all(|k| self.config.contains(self.line_cell(k)))
    }
}

/// If the anchor's first neighbor is its north-west cell, move the anchor one
/// step west so that this neighbor becomes its north-east cell.
pub fn initialize_anchor(st: &mut NormalizerState) -> Result<bool, NormalizeError> {
    if st.config.n() < 2 {
        return Ok(false);
    }
    let s = st.anchor;
    let t = st.config.first_neighbor().expect("n ≥ 2");
    if t != s.neighbor(Direction::NW) {
        return Ok(false);
    }
    let target = s.neighbor(Direction::W);
    st.apply(s, target)?;
    st.anchor = target;
    Ok(true)
}

/// The base-gap case: first neighbor north-east of the anchor, the east cell
/// `ℓ` a gap because a particle `Q` sits two cells east while the cell east
/// of the first neighbor is empty. `Q` hops into `ℓ`; the caller then routes
/// it to the line.
pub fn clear_base_gap(st: &mut NormalizerState) -> Result<Option<Cell>, NormalizeError> {
    let s = st.anchor;
    let cfg = &st.config;
    let l = s.neighbor(Direction::E);
    let q = l.neighbor(Direction::E);
    let t = s.neighbor(Direction::NE);
    if st.eliminated > 0 && !cfg.contains(t) {
        return Ok(None);
    }
    let shape = cfg.contains(t)
        && !cfg.contains(l)
        && cfg.contains(q)
        && !cfg.contains(t.neighbor(Direction::E))
        && cfg.is_gap(l).expect("empty");
    if !shape || !is_valid_move(cfg, q, l) {
        return Ok(None);
    }
    st.apply(q, l)?;
    Ok(Some(l))
}

/// Breadth-first search over positions of the particle at `v`, all other
/// particles fixed, for a sequence of valid moves ending at `goal`.
fn route(cfg: &Configuration, v: Cell, goal: Cell) -> Option<Vec<Cell>> {
    if cfg.contains(goal) {
        return None;
    }
    let mut scratch = cfg.clone();
    let mut at = v;
    let mut parent: FxHashMap<Cell, Cell> = FxHashMap::default();
    parent.insert(v, v);
    let mut queue = VecDeque::from([v]);
    let mut found = false;
    'bfs: while let Some(c) = queue.pop_front() {
        scratch.move_particle(at, c).ok();
        at = c;
        for next in c.neighbors() {
            if parent.contains_key(&next) || scratch.contains(next) || !is_valid_move(&scratch, c, next) {
                continue;
            }
            parent.insert(next, c);
            if next == goal {
                found = true;
                break 'bfs;
            }
            queue.push_back(next);
        }
    }
    if !found {
        return None;
    }
    let mut path = vec![goal];
    while *path.last().expect("nonempty") != v {
        path.push(parent[path.last().expect("nonempty")]);
    }
    path.reverse();
    Some(path)
}

/// Move the particle at `v` onto the next parking cell.
pub fn eliminate(st: &mut NormalizerState, v: Cell) -> Result<(), NormalizeError> {
    if st.is_fixed(v) || !st.config.contains(v) {
        return Err(NormalizeError::Unreachable(v));
    }
    let goal = st.line_cell(st.eliminated + 1);
    let path = route(&st.config, v, goal).ok_or(NormalizeError::Unreachable(v))?;
    for w in path.windows(2) {
        st.apply(w[0], w[1])?;
    }
    st.eliminated += 1;
    debug_assert!(st.line_intact());
    Ok(())
}

/// Boundary walk that keeps the exterior on the right (clockwise in the
/// mirrored frame), starting at the anchor with its first neighbor and
/// ignoring parked particles.
pub fn boundary_walk(st: &NormalizerState) -> Vec<Cell> {
    let occ = |c: Cell| st.config.contains(c) && !st.on_line(c);
    let s = st.anchor;
    let step = |c: Cell, back: Direction| (1..=6).map(|k| c.neighbor(back.rotate(k))).find(|&x| occ(x));
    let first = match step(s, LINE_DIRECTION) {
        Some(f) => f,
        None => return vec![s],
    };
    let mut walk = vec![s, first];
    let (mut prev, mut cur) = (s, first);
    loop {
        let back = cur.direction_to(prev).expect("adjacent");
        let next = step(cur, back).expect("connected");
        if cur == s && next == first {
            break;
        }
        walk.push(next);
        prev = cur;
        cur = next;
        if walk.len() > 4 * st.config.n() + 8 {
            break;
        }
    }
    walk
}

/// Occupied neighbors of `v` form one contiguous arc and number at most four.
pub fn locally_eliminable(cfg: &Configuration, v: Cell) -> bool {
    let nb = v.neighbors().map(|c| cfg.contains(c));
    let count = nb.iter().filter(|&&o| o).count();
    let arcs = (0..6).filter(|&i| nb[i] && !nb[(i + 1) % 6]).count();
    (1..=4).contains(&count) && arcs == 1
}

/// If the walk visits some particle twice, the particles strictly between the
/// two visits of the innermost such repeat, in walk order.
pub fn innermost_repeat(walk: &[Cell]) -> Option<Vec<Cell>> {
    let body = &walk[..walk.len().saturating_sub(1)];
    let mut best: Option<(usize, usize)> = None;
    let mut last: FxHashMap<Cell, usize> = FxHashMap::default();
    for (j, &c) in body.iter().enumerate() {
        if let Some(&i) = last.get(&c) {
            if best.is_none_or(|(a, b)| j - i < b - a) {
                best = Some((i, j));
            }
        }
        last.insert(c, j);
    }
    best.map(|(i, j)| body[i + 1..j].to_vec())
}

/// Candidates for elimination in preference order: particles between the
/// innermost repeated visit first, then the rest of the walk; locally
/// eliminable particles before others within each group.
fn candidates(st: &NormalizerState) -> Vec<Cell> {
    let walk = boundary_walk(st);
    let mut seen = FxHashSet::default();
    let mut ordered = Vec::new();
    let push_group = |group: &[Cell], seen: &mut FxHashSet<Cell>, ordered: &mut Vec<Cell>| {
        let mut good = Vec::new();
        let mut rest = Vec::new();
        for &c in group {
            if st.is_fixed(c) || !seen.insert(c) {
                continue;
            }
            if locally_eliminable(&st.config, c) {
                good.push(c);
            } else {
                rest.push(c);
            }
        }
        ordered.extend(good);
        ordered.extend(rest);
    };
    if let Some(inner) = innermost_repeat(&walk) {
        push_group(&inner, &mut seen, &mut ordered);
    }
    push_group(&walk, &mut seen, &mut ordered);
    let interior: Vec<Cell> = st.config.cells().to_vec();
    push_group(&interior, &mut seen, &mut ordered);
    ordered
}

/// Eliminate the first candidate that can reach the line on its own.
fn eliminate_any(st: &mut NormalizerState) -> Result<bool, NormalizeError> {
    for v in candidates(st) {
        match eliminate(st, v) {
            Ok(()) => return Ok(true),
            Err(NormalizeError::Unreachable(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(false)
}

fn can_eliminate_some(st: &NormalizerState) -> bool {
    let goal = st.line_cell(st.eliminated + 1);
    candidates(st).into_iter().any(|v| route(&st.config, v, goal).is_some())
}

/// When no particle can be eliminated alone, search for up to `PREP_DEPTH`
/// preparatory moves of unparked particles after which one can. Returns
/// whether such moves were found and applied.
pub fn resolve_gap(st: &mut NormalizerState) -> Result<bool, NormalizeError> {
    for depth in 1..=PREP_DEPTH {
        if let Some(plan) = prep_search(st, depth) {
            for (from, to) in plan {
                st.apply(from, to)?;
            }
            return Ok(true);
        }
    }
    Ok(false)
}

fn prep_search(st: &NormalizerState, depth: usize) -> Option<Vec<(Cell, Cell)>> {
    if depth == 0 {
        return can_eliminate_some(st).then(Vec::new);
    }
    let mut trial = st.clone();
    for m in valid_moves(&st.config) {
        if st.is_fixed(m.from) {
            continue;
        }
        trial.config.move_particle(m.from, m.to).expect("valid move");
        let found = prep_search(&trial, depth - 1);
        trial.config.move_particle(m.to, m.from).expect("undo");
        if let Some(mut rest) = found {
            rest.insert(0, (m.from, m.to));
            return Some(rest);
        }
    }
    None
}

#[derive(Clone, Debug)]
pub struct Normalized {
    pub initial: Configuration,
    pub moves: Vec<Move>,
    pub movers: Vec<usize>,
    pub final_config: Configuration,
    pub anchor: Cell,
    /// Preparatory searches that were needed.
    pub prep_rounds: usize,
}

impl Normalized {
    /// Move log in the trace schema without the time column.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("particle,action,q,dir,flag\n");
        for (m, slot) in self.moves.iter().zip(&self.movers) {
            let d = m.from.direction_to(m.to).expect("adjacent").index();
            let _ = writeln!(s, "{slot},contract_head,,{d},true");
        }
        s
    }
}

/// Transform `cfg` into the south-west line from its anchor.
pub fn normalize(cfg: &Configuration) -> Result<Normalized, NormalizeError> {
    if !cfg.is_valid() {
        return Err(NormalizeError::InvalidInput);
    }
    let mut st = NormalizerState::new(cfg.clone());
    initialize_anchor(&mut st)?;
    let mut prep_rounds = 0;
    let limit = 2 * cfg.n() * cfg.n() + 2;
    while st.remaining() > 0 {
        if eliminate_any(&mut st)? {
            continue;
        }
        if let Some(q) = clear_base_gap(&mut st)? {
            eliminate(&mut st, q)?;
            continue;
        }
        prep_rounds += 1;
        if prep_rounds > limit || !resolve_gap(&mut st)? {
            return Err(NormalizeError::Stuck(st.remaining()));
        }
    }
    Ok(Normalized {
        initial: cfg.clone(),
        final_config: st.config,
        anchor: st.anchor,
        moves: st.moves,
        movers: st.movers,
        prep_rounds,
    })
}

/// Outcome of replaying and checking a normalization.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuditReport {
    pub moves: usize,
    pub all_valid: bool,
    pub reaches_line: bool,
    pub reversible: bool,
}

impl AuditReport {
    pub fn ok(&self) -> bool {
        self.all_valid && self.reaches_line && self.reversible
    }
}

/// Replay the log from the initial configuration, checking each move's
/// validity, the end state, and that each reversed move has positive
/// probability under M for bias `lambda`.
pub fn audit_log(result: &Normalized, lambda: f64) -> AuditReport {
    let mut cfg = result.initial.clone();
    let n = cfg.n() as f64;
    let mut all_valid = true;
    let mut reversible = true;
    for m in &result.moves {
        if !is_valid_move(&cfg, m.from, m.to) {
            all_valid = false;
            break;
        }
        cfg.move_particle(m.from, m.to).expect("valid move");
        let back = if is_valid_move(&cfg, m.to, m.from) {
            acceptance(lambda, -m.delta_t) / (6.0 * n)
        } else {
            0.0
        };
        reversible &= back > 0.0 && audit(&cfg).is_ok();
    }
    let line = Configuration::line(cfg.n(), LINE_DIRECTION);
    AuditReport {
        moves: result.moves.len(),
        all_valid,
        reaches_line: cfg.canonical_key() == line.canonical_key() && cfg == result.final_config,
        reversible,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::transition_probability;
    use crate::exactsolver::enumerate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(cells: &[(i32, i32)]) -> Configuration {
        Configuration::from_cells(cells.iter().map(|&(q, r)| Cell::new(q, r))).unwrap()
    }

    #[test]
    fn anchor_moves_west_when_first_neighbor_is_north_west() {
        let mut st = NormalizerState::new(cfg(&[(0, 0), (-1, 1)]));
        assert!(initialize_anchor(&mut st).unwrap());
        assert_eq!(st.anchor, Cell::new(-1, 0));
        assert_eq!(st.config.first_neighbor().unwrap(), st.anchor.neighbor(Direction::NE));
        assert_eq!(st.moves.len(), 1);
        let mut st = NormalizerState::new(cfg(&[(0, 0), (1, 0)]));
        assert!(!initialize_anchor(&mut st).unwrap());
        assert!(st.moves.is_empty());
    }

    #[test]
    fn base_gap_is_cleared() {
        // Anchor (0,0), first neighbor (0,1); (1,0) is a gap because (2,0)
        // closes it off while (1,1) is empty. The remaining particles join
        // (2,0) to (0,1) around the far side.
        let c = cfg(&[(0, 0), (0, 1), (2, 0), (-1, 2), (0, 2), (1, 2), (2, 1)]);
        assert!(c.is_valid());
        let l = Cell::new(1, 0);
        assert!(c.is_gap(l).unwrap());
        let mut st = NormalizerState::new(c.clone());
        assert_eq!(clear_base_gap(&mut st).unwrap(), Some(l));
        assert!(st.config.contains(l) && !st.config.contains(Cell::new(2, 0)));
        eliminate(&mut st, l).unwrap();
        assert_eq!(st.eliminated, 1);
        assert!(st.config.contains(Cell::new(0, -1)));
        let r = normalize(&c).unwrap();
        assert!(audit_log(&r, 2.0).ok());
    }

    #[test]
    fn lines_and_small_shapes_normalize() {
        for n in 1..12 {
            for d in Direction::ALL {
                let r = normalize(&Configuration::line(n, d)).unwrap();
                assert!(audit_log(&r, 4.0).ok(), "n={n} d={d:?}");
            }
        }
    }

    #[test]
    fn every_small_state_normalizes() {
        for n in 1..=6 {
            for st in &enumerate(n).unwrap().states {
                let r = normalize(st).unwrap();
                let report = audit_log(&r, 4.0);
                assert!(report.ok(), "{:?}", st.cells());
                // Exact reverse probabilities along the log.
                if n > 5 {
                    continue;
                }
                let mut cur = st.clone();
                for m in &r.moves {
                    let before = cur.clone();
                    cur.move_particle(m.from, m.to).unwrap();
                    assert!(transition_probability(&cur, &before, 4.0) > 0.0);
                }
            }
        }
    }

    #[test]
    fn three_particle_states_share_one_line() {
        let line = Configuration::line(3, LINE_DIRECTION).canonical_key();
        for st in &enumerate(3).unwrap().states {
            assert_eq!(normalize(st).unwrap().final_config.canonical_key(), line);
        }
    }

    #[test]
    fn random_states_normalize() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut prep = 0;
        for i in 0..200 {
            let c = Configuration::random_hole_free(2 + i % 29, &mut rng);
            let r = normalize(&c).unwrap();
            prep += r.prep_rounds;
            assert!(audit_log(&r, 2.0).ok());
        }
        eprintln!("preparatory rounds over 200 states: {prep}");
    }

    #[test]
    fn repeated_visits_are_found() {
        // Two lobes joined by a one-cell bridge: the walk crosses it twice.
        let w = vec![
            Cell::new(0, 0),
            Cell::new(1, 0),
            Cell::new(2, 0),
            Cell::new(1, 0),
            Cell::new(0, 0),
        ];
        assert_eq!(innermost_repeat(&w), Some(vec![Cell::new(2, 0)]));
        let dumbbell = cfg(&[(0, 0), (1, 0), (0, 1), (2, 0), (3, 0), (4, -1), (4, 0)]);
        assert!(dumbbell.is_valid());
        let st = NormalizerState::new(dumbbell.clone());
        let walk = boundary_walk(&st);
        let inner = innermost_repeat(&walk).expect("bridge is crossed twice");
        assert!(!inner.is_empty());
        let r = normalize(&dumbbell).unwrap();
        assert!(audit_log(&r, 1.0).ok());
    }

    #[test]
    fn preparatory_moves_are_valid() {
        let c = cfg(&[(0, 0), (1, 0), (2, 0), (0, 1), (1, 1)]);
        let mut st = NormalizerState::new(c);
        assert!(resolve_gap(&mut st).unwrap());
        assert!(!st.moves.is_empty() && st.eliminated == 0);
        assert!(st.config.is_valid());
        assert!(st.movers.iter().all(|&m| m < 5));
        let r = Normalized {
            initial: cfg(&[(0, 0), (1, 0), (2, 0), (0, 1), (1, 1)]),
            moves: st.moves.clone(),
            movers: st.movers.clone(),
            final_config: st.config.clone(),
            anchor: st.anchor,
            prep_rounds: 1,
        };
        let report = audit_log(&r, 2.0);
        assert!(report.all_valid && report.reversible);
    }

    #[test]
    fn csv_export() {
        let r = normalize(&cfg(&[(0, 0), (1, 0)])).unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with("particle,action,q,dir,flag\n"));
        assert_eq!(csv.lines().count(), r.moves.len() + 1);
    }
}
