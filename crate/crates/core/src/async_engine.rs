//! Discrete-event emulation of the asynchronous local algorithm.
//!
//! Each particle carries a Poisson clock of rate 1. A contracted particle that
//! fires picks a direction and a uniform `q`, and expands if the target is
//! empty and no expanded particle touches it; it raises its flag when no
//! expanded particle touches either end. An expanded particle that fires
//! contracts onto its head only with the flag raised and the chain's
//! conditions met against its local view, otherwise back onto its tail.
//!
//! Decisions are made by [`decide_contracted`] and [`decide_expanded`] from a
//! [`LocalView`] alone. The engine owns global state purely for bookkeeping.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use ordered_float::OrderedFloat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rustc_hash::FxHashMap;
use thiserror::Error;

use crate::configuration::Configuration;
use crate::dynamics::{is_valid_move, Move};
use crate::lattice::{extended_neighborhood, Cell, Direction};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Contracted(Cell),
    Expanded { tail: Cell, head: Cell },
}

#[derive(Clone, Debug)]
pub struct ParticleState {
    /// Monitor-side identity; never part of a [`LocalView`].
    pub id: usize,
    pub shape: Shape,
    pub flag: bool,
    /// The coin drawn at expansion, kept until contraction.
    pub q: f64,
    pub next_activation: f64,
}

impl ParticleState {
    pub fn tail(&self) -> Cell {
        match self.shape {
            Shape::Contracted(c) => c,
            Shape::Expanded { tail, .. } => tail,
        }
    }

    pub fn footprint(&self) -> Vec<Cell> {
        match self.shape {
            Shape::Contracted(c) => vec![c],
            Shape::Expanded { tail, head } => vec![tail, head],
        }
    }
}

/// What a particle can observe in one adjacent cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Empty,
    Contracted,
    Tail,
    Head,
}

impl Slot {
    fn expanded(self) -> bool {
        matches!(self, Slot::Tail | Slot::Head)
    }

    /// Occupied once heads are ignored.
    fn settled(self) -> bool {
        matches!(self, Slot::Contracted | Slot::Tail)
    }
}

/// The cells around a (prospective) move from `ℓ` to `ℓ'`: the eight-cell
/// ring of [`extended_neighborhood`] and the target itself. Ring indices 0
/// and 4 are the shared neighbors; 4..=7,0 surround `ℓ` and 0..=4 surround
/// `ℓ'`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LocalView {
    pub ring: [Slot; 8],
    pub target: Slot,
}

const AROUND_L: [usize; 5] = [4, 5, 6, 7, 0];
const AROUND_LP: [usize; 5] = [0, 1, 2, 3, 4];

impl LocalView {
    /// Move validity (no five-neighbor source, Property 1 or 2) and the
    /// triangle change, with heads ignored.
    /// Returns `None` when the move is not valid.
    pub fn evaluate(&self) -> Option<i32> {
        let occ = self.ring.map(Slot::settled);
        if AROUND_L.iter().filter(|&&i| occ[i]).count() == 5 {
            return None;
        }
        let p1 = || {
            if !(occ[0] || occ[4]) {
                return false;
            }
            // Every occupied arc of the cycle must contain a shared neighbor.
            (0..8).all(|i| {
                if !occ[i] {
                    return true;
                }
                let reach = |step: usize| {
                    let mut j = i;
                    for _ in 0..8 {
                        if !occ[j] {
                            return false;
                        }
                        if j == 0 || j == 4 {
                            return true;
                        }
                        j = (j + step) % 8;
                    }
                    false
                };
                reach(1) || reach(7)
            })
        };
        let p2 = || {
            let contiguous = |cells: [usize; 3]| {
                let bits = cells.map(|i| occ[i]);
                bits.iter().any(|&b| b) && bits != [true, false, true]
            };
            !occ[0] && !occ[4] && contiguous([5, 6, 7]) && contiguous([1, 2, 3])
        };
        if !(p1() || p2()) {
            return None;
        }
        let path_triangles = |path: [usize; 5]| path.windows(2).filter(|w| occ[w[0]] && occ[w[1]]).count() as i32;
        Some(path_triangles(AROUND_LP) - path_triangles(AROUND_L))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ContractedDecision {
    Stay,
    Expand { flag: bool },
}

/// Expansion rule for a contracted particle that chose the viewed direction.
pub fn decide_contracted(view: &LocalView) -> ContractedDecision {
    if view.target != Slot::Empty {
        return ContractedDecision::Stay;
    }
    if AROUND_L.iter().any(|&i| view.ring[i].expanded()) {
        return ContractedDecision::Stay;
    }
    ContractedDecision::Expand { flag: !view.ring.iter().any(|s| s.expanded()) }
}

/// Contraction rule for an expanded particle: `true` means onto the head.
pub fn decide_expanded(view: &LocalView, flag: bool, q: f64, lambda: f64) -> bool {
    if !flag {
        return false;
    }
    match view.evaluate() {
        Some(dt) => q < lambda.powi(dt),
        None => false,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    Expand,
    ContractHead,
    ContractTail,
    Noop,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::Expand => "expand",
            Action::ContractHead => "contract_head",
            Action::ContractTail => "contract_tail",
            Action::Noop => "noop",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActionRecord {
    pub time: f64,
    pub particle: usize,
    pub action: Action,
    pub q: f64,
    pub dir: Direction,
    /// Flag value at the event; `None` for a particle that stayed contracted.
    pub flag: Option<bool>,
}

#[derive(Clone, Debug, Default)]
pub struct Trace {
    /// Cell of each particle at time zero, indexed by particle id.
    pub initial: Vec<Cell>,
    pub records: Vec<ActionRecord>,
}

impl Trace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("time,particle,action,q,dir,flag\n");
        for r in &self.records {
            let flag = r.flag.map(|f| f.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{:.9},{},{},{:.9},{},{}", r.time, r.particle, r.action.as_str(), r.q, r.dir.index(), flag);
        }
        s
    }

    pub fn count(&self, action: Action) -> usize {
        self.records.iter().filter(|r| r.action == action).count()
    }
}

/// Pending activations ordered by `(time, particle id)`.
#[derive(Clone, Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<(OrderedFloat<f64>, usize)>>,
}

impl EventQueue {
    pub fn push(&mut self, time: f64, id: usize) {
        self.heap.push(Reverse((OrderedFloat(time), id)));
    }

    pub fn pop(&mut self) -> Option<(f64, usize)> {
        self.heap.pop().map(|Reverse((t, id))| (t.0, id))
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|Reverse((t, _))| t.0)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

/// Draw the next activation time of `p` after `now`.
pub fn schedule<R: Rng + ?Sized>(p: &mut ParticleState, now: f64, rng: &mut R) -> f64 {
    let gap: f64 = rng.sample(Exp1);
    p.next_activation = now + gap;
    p.next_activation
}

#[derive(Debug, Error, PartialEq)]
pub enum AsyncError {
    #[error("flagged particles {0} and {1} are within distance one at t={2}")]
    Overlap(usize, usize, f64),
    #[error("settled configuration invalid at t={0}")]
    Invariant(f64),
    #[error("move {index} ({from} -> {to}) is not valid during replay")]
    InvalidReplay { index: usize, from: Cell, to: Cell },
    #[error("replay ends in a different configuration")]
    Mismatch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Part {
    Whole,
    Tail,
    Head,
}

pub struct AsyncEngine {
    particles: Vec<ParticleState>,
    occ: FxHashMap<Cell, (usize, Part)>,
    queue: EventQueue,
    rng: ChaCha8Rng,
    lambda: f64,
    now: f64,
    events: u64,
    trace: Trace,
    /// Check the flagged-footprint separation after every event.
    pub check_separation: bool,
}

impl AsyncEngine {
    pub fn new(config: &Configuration, lambda: f64, seed: u64) -> AsyncEngine {
        AsyncEngine::with_rng(config, lambda, ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn with_rng(config: &Configuration, lambda: f64, mut rng: ChaCha8Rng) -> AsyncEngine {
        assert!(lambda > 0.0, "bias must be positive");
        let mut queue = EventQueue::default();
        let mut occ = FxHashMap::default();
        let particles = config
            .cells()
            .iter()
            .enumerate()
            .map(|(id, &c)| {
                let mut p = ParticleState { id, shape: Shape::Contracted(c), flag: false, q: 0.0, next_activation: 0.0 };
                queue.push(schedule(&mut p, 0.0, &mut rng), id);
                occ.insert(c, (id, Part::Whole));
                p
            })
            .collect();
        let trace = Trace { initial: config.cells().to_vec(), records: Vec::new() };
        AsyncEngine { particles, occ, queue, rng, lambda, now: 0.0, events: 0, trace, check_separation: true }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn particles(&self) -> &[ParticleState] {
        &self.particles
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn into_trace(self) -> Trace {
        self.trace
    }

    fn slot(&self, c: Cell) -> Slot {
        match self.occ.get(&c) {
            None => Slot::Empty,
            Some((_, Part::Whole)) => Slot::Contracted,
            Some((_, Part::Tail)) => Slot::Tail,
            Some((_, Part::Head)) => Slot::Head,
        }
    }

    /// What a particle at `l` sees when considering `lp`.
    pub fn view(&self, l: Cell, lp: Cell) -> LocalView {
        let ring = extended_neighborhood(l, lp).expect("adjacent cells");
        LocalView { ring: ring.map(|c| self.slot(c)), target: self.slot(lp) }
    }

    /// Contracted particles plus tails of expanded ones.
    pub fn settled_configuration(&self) -> Configuration {
        Configuration::from_cells(self.particles.iter().map(ParticleState::tail)).expect("settled cells are valid")
    }

    /// Process the earliest pending activation.
    pub fn step(&mut self) -> Result<ActionRecord, AsyncError> {
        let (time, id) = self.queue.pop().expect("every particle is always scheduled");
        self.now = time;
        let record = self.activate(id);
        let next = schedule(&mut self.particles[id], time, &mut self.rng);
        self.queue.push(next, id);
        self.events += 1;
        self.trace.records.push(record);
        if self.check_separation {
            self.check_flagged_separation()?;
        }
        Ok(record)
    }

    fn activate(&mut self, id: usize) -> ActionRecord {
        let p = &self.particles[id];
        match p.shape {
            Shape::Contracted(l) => {
                let dir = Direction::new(self.rng.gen_range(0..6));
                let q: f64 = self.rng.gen();
                let lp = l.neighbor(dir);
                let decision = decide_contracted(&self.view(l, lp));
                let mut record = ActionRecord { time: self.now, particle: id, action: Action::Noop, q, dir, flag: None };
                if let ContractedDecision::Expand { flag } = decision {
                    let p = &mut self.particles[id];
                    p.shape = Shape::Expanded { tail: l, head: lp };
                    p.flag = flag;
                    p.q = q;
                    self.occ.insert(l, (id, Part::Tail));
                    self.occ.insert(lp, (id, Part::Head));
                    record.action = Action::Expand;
                    record.flag = Some(flag);
                }
                record
            }
            Shape::Expanded { tail, head } => {
                let (flag, q) = (p.flag, p.q);
                let dir = tail.direction_to(head).expect("adjacent");
                let to_head = decide_expanded(&self.view(tail, head), flag, q, self.lambda);
                let (keep, drop, action) =
                    if to_head { (head, tail, Action::ContractHead) } else { (tail, head, Action::ContractTail) };
                self.occ.remove(&drop);
                self.occ.insert(keep, (id, Part::Whole));
                let p = &mut self.particles[id];
                p.shape = Shape::Contracted(keep);
                p.flag = false;
                ActionRecord { time: self.now, particle: id, action, q, dir, flag: Some(flag) }
            }
        }
    }

    /// Every flagged expanded particle's footprint is disjoint from the
    /// closed neighborhood of every other one.
    pub fn check_flagged_separation(&self) -> Result<(), AsyncError> {
        for p in &self.particles {
            let Shape::Expanded { tail, head } = p.shape else { continue };
            if !p.flag {
                continue;
            }
            for c in [tail, head].into_iter().flat_map(|c| c.neighbors()) {
                if let Some(&(other, _)) = self.occ.get(&c) {
                    let o = &self.particles[other];
                    if other != p.id && o.flag && matches!(o.shape, Shape::Expanded { .. }) {
                        return Err(AsyncError::Overlap(p.id, other, self.now));
                    }
                }
            }
        }
        Ok(())
    }

    /// Run `events` activations, auditing the settled configuration every
    /// `audit_every` events (0 disables).
    pub fn run_events(&mut self, events: u64, audit_every: u64) -> Result<(), AsyncError> {
        for k in 1..=events {
            self.step()?;
            if audit_every > 0 && k % audit_every == 0 && !self.settled_configuration().is_valid() {
                return Err(AsyncError::Invariant(self.now));
            }
        }
        Ok(())
    }

    /// Run until the next activation would come after `horizon`.
    pub fn run_until(&mut self, horizon: f64) -> Result<(), AsyncError> {
        while self.queue.peek_time().is_some_and(|t| t <= horizon) {
            self.step()?;
        }
        Ok(())
    }
}

/// Completed relocations in order, as chain moves.
pub fn reduce_to_chain_trace(trace: &Trace) -> Vec<Move> {
    let mut pos = trace.initial.clone();
    let mut cfg = Configuration::from_cells(pos.iter().copied()).expect("initial configuration");
    let mut moves = Vec::new();
    for r in trace.records.iter().filter(|r| r.action == Action::ContractHead) {
        let from = pos[r.particle];
        let to = from.neighbor(r.dir);
        moves.push(Move::new(&cfg, from, to));
        cfg.move_particle(from, to).expect("relocation into an empty cell");
        pos[r.particle] = to;
    }
    moves
}

/// Apply `moves` to `initial`, checking each with [`is_valid_move`].
pub fn replay(initial: &Configuration, moves: &[Move]) -> Result<Configuration, AsyncError> {
    let mut cfg = initial.clone();
    for (index, m) in moves.iter().enumerate() {
        if !is_valid_move(&cfg, m.from, m.to) {
            return Err(AsyncError::InvalidReplay { index, from: m.from, to: m.to });
        }
        cfg.move_particle(m.from, m.to).expect("valid move");
    }
    Ok(cfg)
}

/// Summary of one audited run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunCheck {
    pub events: u64,
    pub relocations: usize,
    pub aborted: usize,
}

/// Run `events` activations with separation checks, then reduce, replay and
/// compare against the engine's settled configuration.
pub fn audited_run(config: &Configuration, lambda: f64, seed: u64, events: u64) -> Result<RunCheck, AsyncError> {
    let mut engine = AsyncEngine::new(config, lambda, seed);
    engine.run_events(events, 1000)?;
    let settled = engine.settled_configuration();
    if !settled.is_valid() {
        return Err(AsyncError::Invariant(engine.now()));
    }
    let trace = engine.into_trace();
    let moves = reduce_to_chain_trace(&trace);
    let replayed = replay(config, &moves)?;
    if replayed.sorted_cells() != settled.sorted_cells() {
        return Err(AsyncError::Mismatch);
    }
    Ok(RunCheck { events, relocations: moves.len(), aborted: trace.count(Action::ContractTail) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::delta_t;
    use proptest::prelude::*;

    fn cfg(cells: &[(i32, i32)]) -> Configuration {
        Configuration::from_cells(cells.iter().map(|&(q, r)| Cell::new(q, r))).unwrap()
    }

    #[test]
    fn exponential_gaps() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = ParticleState { id: 0, shape: Shape::Contracted(Cell::ORIGIN), flag: false, q: 0.0, next_activation: 0.0 };
        let samples = 100_000;
        let mut sum = 0.0;
        for _ in 0..samples {
            let t = schedule(&mut p, 5.0, &mut rng);
            assert!(t > 5.0);
            sum += t - 5.0;
        }
        let mean = sum / samples as f64;
        assert!((0.99..=1.01).contains(&mean), "mean {mean}");

        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut p = p.clone();
            (0..10).map(|_| schedule(&mut p, 0.0, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
    }

    #[test]
    fn queue_orders_by_time_then_id() {
        let mut q = EventQueue::default();
        q.push(2.0, 0);
        q.push(1.0, 5);
        q.push(1.0, 2);
        assert_eq!(q.pop(), Some((1.0, 2)));
        assert_eq!(q.pop(), Some((1.0, 5)));
        assert_eq!(q.pop(), Some((2.0, 0)));
        assert!(q.is_empty());
    }

    #[test]
    fn occupied_target_means_no_shape_change() {
        let mut view = LocalView { ring: [Slot::Empty; 8], target: Slot::Contracted };
        assert_eq!(decide_contracted(&view), ContractedDecision::Stay);
        view.target = Slot::Head;
        assert_eq!(decide_contracted(&view), ContractedDecision::Stay);
    }

    #[test]
    fn expanded_neighbor_blocks_expansion_and_flag() {
        let mut view = LocalView { ring: [Slot::Empty; 8], target: Slot::Empty };
        view.ring[0] = Slot::Contracted;
        assert_eq!(decide_contracted(&view), ContractedDecision::Expand { flag: true });
        // An expanded particle next to the target only lowers the flag.
        view.ring[2] = Slot::Head;
        assert_eq!(decide_contracted(&view), ContractedDecision::Expand { flag: false });
        // Next to the particle itself it blocks expansion.
        view.ring[6] = Slot::Tail;
        assert_eq!(decide_contracted(&view), ContractedDecision::Stay);
    }

    #[test]
    fn unflagged_particle_contracts_home() {
        let mut view = LocalView { ring: [Slot::Empty; 8], target: Slot::Head };
        view.ring[0] = Slot::Contracted;
        assert!(decide_expanded(&view, true, 0.0, 1.0));
        assert!(!decide_expanded(&view, false, 0.0, 1.0));
    }

    #[test]
    fn later_neighbor_expansion_returns_home() {
        // Two particles side by side; drive the engine by hand.
        let c = cfg(&[(0, 0), (1, 0)]);
        let mut e = AsyncEngine::new(&c, 1.0, 0);
        let a = Cell::new(0, 0);
        let b = Cell::new(1, 0);
        // a expands north-east with its flag raised.
        let ahead = a.neighbor(Direction::NE);
        assert_eq!(decide_contracted(&e.view(a, ahead)), ContractedDecision::Expand { flag: true });
        e.particles[0].shape = Shape::Expanded { tail: a, head: ahead };
        e.particles[0].flag = true;
        e.occ.insert(a, (0, Part::Tail));
        e.occ.insert(ahead, (0, Part::Head));
        // b, adjacent to a's tail, cannot expand at all.
        for d in Direction::ALL {
            let lp = b.neighbor(d);
            assert_eq!(decide_contracted(&e.view(b, lp)), ContractedDecision::Stay, "{d:?}");
        }
        // A particle two cells away may still expand next to a's head, but
        // then with its flag lowered, so it always retreats.
        let c3 = cfg(&[(0, 0), (1, 0), (2, 0)]);
        let mut e = AsyncEngine::new(&c3, 1.0, 0);
        e.particles[0].shape = Shape::Expanded { tail: a, head: ahead };
        e.particles[0].flag = true;
        e.occ.insert(a, (0, Part::Tail));
        e.occ.insert(ahead, (0, Part::Head));
        let q = Cell::new(2, 0);
        let into = q.neighbor(Direction::NW);
        assert!(into.is_adjacent(ahead));
        assert_eq!(decide_contracted(&e.view(q, into)), ContractedDecision::Expand { flag: false });
        let flagged = decide_contracted(&e.view(q, q.neighbor(Direction::E)));
        assert_eq!(flagged, ContractedDecision::Expand { flag: true });
        e.particles[2].shape = Shape::Expanded { tail: q, head: into };
        e.occ.insert(q, (2, Part::Tail));
        e.occ.insert(into, (2, Part::Head));
        assert!(e.check_flagged_separation().is_ok());
        assert!(!decide_expanded(&e.view(q, into), false, 0.0, 1.0));
        // a ignores that head and still completes its move.
        assert!(decide_expanded(&e.view(a, ahead), true, 0.0, 1.0));
    }

    #[test]
    fn only_aborted_expansions_reduce_to_nothing() {
        let trace = Trace {
            initial: vec![Cell::ORIGIN, Cell::new(1, 0)],
            records: vec![
                ActionRecord { time: 0.5, particle: 0, action: Action::Expand, q: 0.3, dir: Direction::NE, flag: Some(true) },
                ActionRecord { time: 0.9, particle: 0, action: Action::ContractTail, q: 0.3, dir: Direction::NE, flag: Some(true) },
            ],
        };
        assert!(reduce_to_chain_trace(&trace).is_empty());
    }

    #[test]
    fn runs_replay_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for seed in 0..6 {
            let c = Configuration::random_hole_free(12 + seed as usize, &mut rng);
            let check = audited_run(&c, [1.0, 4.0, 0.5][seed as usize % 3], seed, 20_000).unwrap();
            assert!(check.relocations > 0);
        }
        let check = audited_run(&Configuration::line(30, Direction::E), 4.0, 1, 30_000).unwrap();
        assert!(check.relocations > 0 && check.aborted > 0);
    }

    #[test]
    fn deterministic_traces_and_csv() {
        let c = Configuration::line(8, Direction::E);
        let run = |seed| {
            let mut e = AsyncEngine::new(&c, 2.0, seed);
            e.run_events(2000, 0).unwrap();
            e.into_trace().to_csv()
        };
        let a = run(4);
        assert_eq!(a, run(4));
        assert_ne!(a, run(5));
        assert!(a.starts_with("time,particle,action,q,dir,flag\n"));
        assert_eq!(a.lines().count(), 2001);
        let times: Vec<f64> = a.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
        assert!(times.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn run_until_respects_horizon() {
        let c = Configuration::line(5, Direction::E);
        let mut e = AsyncEngine::new(&c, 2.0, 1);
        e.run_until(50.0).unwrap();
        assert!(e.now() <= 50.0);
        // Five rate-one clocks over 50 time units.
        assert!((150..=350).contains(&e.events()), "{}", e.events());
    }

    #[test]
    fn flagged_particles_can_sit_two_apart() {
        // Separation is distance two between footprints, not disjoint rings.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let c = Configuration::random_hole_free(40, &mut rng);
        let mut e = AsyncEngine::new(&c, 4.0, 2);
        let mut closest = i32::MAX;
        for _ in 0..50_000 {
            e.step().unwrap();
            let flagged: Vec<Vec<Cell>> =
                e.particles().iter().filter(|p| p.flag).map(ParticleState::footprint).collect();
            for (i, a) in flagged.iter().enumerate() {
                for b in &flagged[i + 1..] {
                    let d = a.iter().flat_map(|x| b.iter().map(move |y| x.distance(*y))).min().unwrap();
                    closest = closest.min(d);
                }
            }
        }
        assert_eq!(closest, 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn local_view_agrees_with_chain_predicates(n in 2usize..25, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = Configuration::random_hole_free(n, &mut rng);
            let e = AsyncEngine::new(&c, 1.0, 0);
            for &l in c.cells() {
                for lp in l.neighbors() {
                    if c.contains(lp) {
                        continue;
                    }
                    let got = e.view(l, lp).evaluate();
                    let valid = is_valid_move(&c, l, lp);
                    prop_assert_eq!(got.is_some(), valid, "{} -> {}", l, lp);
                    if valid {
                        prop_assert_eq!(got.unwrap(), delta_t(&c, l, lp));
                    }
                }
            }
        }
    }
}
