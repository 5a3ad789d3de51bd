//! Move legality and the sequential Markov chain M.
//!
//! All local predicates treat both `l` and `l'` as empty, i.e. they look at
//! the configuration with the mover removed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;

use crate::configuration::Configuration;
use crate::lattice::{extended_neighborhood, neighbors_except, Cell, Direction};

/// A relocation of one particle to an adjacent cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Move {
    pub from: Cell,
    pub to: Cell,
    /// Triangles the mover closes at `to` minus those it closes at `from`.
    pub delta_t: i32,
}

impl Move {
    pub fn new(cfg: &Configuration, from: Cell, to: Cell) -> Move {
        Move { from, to, delta_t: delta_t(cfg, from, to) }
    }

    pub fn reversed(self) -> Move {
        Move { from: self.to, to: self.from, delta_t: -self.delta_t }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChainParams {
    pub lambda: f64,
    pub seed: u64,
}

fn occupied_except(cfg: &Configuration, c: Cell, l: Cell, lp: Cell) -> bool {
    c != l && c != lp && cfg.contains(c)
}

/// Every occupied cell of `window` reaches one of `seeds` through occupied
/// cells of `window`.
fn window_connected(window: &[Cell], occ: &[bool], seeds: &[usize]) -> bool {
    let mut seen = vec![false; window.len()];
    let mut stack: Vec<usize> = seeds.iter().copied().filter(|&i| occ[i]).collect();
    for &i in &stack {
        seen[i] = true;
    }
    while let Some(i) = stack.pop() {
        for j in 0..window.len() {
            if occ[j] && !seen[j] && window[i].is_adjacent(window[j]) {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    (0..window.len()).all(|i| !occ[i] || seen[i])
}

/// Number of occupied common neighbors of `l` and `l'`.
pub fn shared_count(cfg: &Configuration, l: Cell, lp: Cell) -> usize {
    let ring = extended_neighborhood(l, lp).expect("adjacent cells");
    cfg.contains(ring[0]) as usize + cfg.contains(ring[4]) as usize
}

pub fn satisfies_property1(cfg: &Configuration, l: Cell, lp: Cell) -> bool {
    let ring = match extended_neighborhood(l, lp) {
        Ok(r) => r,
        Err(_) => return false,
    };
    let occ = ring.map(|c| occupied_except(cfg, c, l, lp));
    let shared = occ[0] as usize + occ[4] as usize;
    (1..=2).contains(&shared) && window_connected(&ring, &occ, &[0, 4])
}

pub fn satisfies_property2(cfg: &Configuration, l: Cell, lp: Cell) -> bool {
    let ring = match extended_neighborhood(l, lp) {
        Ok(r) => r,
        Err(_) => return false,
    };
    if cfg.contains(ring[0]) || cfg.contains(ring[4]) {
        return false;
    }
    let side_ok = |a: Cell, b: Cell| {
        let five = neighbors_except(a, b).expect("adjacent cells");
        let occ = five.map(|c| occupied_except(cfg, c, l, lp));
        match occ.iter().position(|&o| o) {
            Some(first) => window_connected(&five, &occ, &[first]),
            None => false,
        }
    };
    side_ok(l, lp) && side_ok(lp, l)
}

/// Triangles closed at `lp` minus triangles closed at `l`, counting only
/// particles other than the one at `l`.
pub fn delta_t(cfg: &Configuration, l: Cell, lp: Cell) -> i32 {
    cfg.triangles_at_ignoring(lp, Some(l)) as i32 - cfg.triangles_at_ignoring(l, Some(lp)) as i32
}

/// Move validity: `l` is occupied, `lp` is an empty
/// neighbor, `l` does not have five other neighbors, and Property 1 or
/// Property 2 holds. The acceptance coin is not part of validity.
pub fn is_valid_move(cfg: &Configuration, l: Cell, lp: Cell) -> bool {
    if !cfg.contains(l) || cfg.contains(lp) || !l.is_adjacent(lp) {
        return false;
    }
    cfg.degree(l) != 5 && (satisfies_property1(cfg, l, lp) || satisfies_property2(cfg, l, lp))
}

/// All valid moves of `cfg`, in particle-slot then direction order.
pub fn valid_moves(cfg: &Configuration) -> Vec<Move> {
    let mut out = Vec::new();
    for &from in cfg.cells() {
        for to in from.neighbors() {
            if is_valid_move(cfg, from, to) {
                out.push(Move::new(cfg, from, to));
            }
        }
    }
    out
}

/// `λ^k` for `k ∈ [-6, 6]`, indexed by `k + 6`.
pub fn power_table(lambda: f64) -> [f64; 13] {
    std::array::from_fn(|i| lambda.powi(i as i32 - 6))
}

pub fn acceptance(lambda: f64, delta_t: i32) -> f64 {
    lambda.powi(delta_t).min(1.0)
}

/// One-step transition probability of M between translation classes.
/// Several moves can reach the same class; their contributions add up.
pub fn transition_probability(sigma: &Configuration, tau: &Configuration, lambda: f64) -> f64 {
    if sigma.n() != tau.n() {
        return 0.0;
    }
    let n = sigma.n() as f64;
    let target = tau.canonical_key();
    let own = sigma.canonical_key();
    let mut to_target = 0.0;
    let mut leaving = 0.0;
    let mut scratch = sigma.clone();
    for m in valid_moves(sigma) {
        let p = acceptance(lambda, m.delta_t) / (6.0 * n);
        scratch.move_particle(m.from, m.to).expect("valid move");
        let key = scratch.canonical_key();
        scratch.move_particle(m.to, m.from).expect("undo");
        if key == target {
            to_target += p;
        }
        if key != own {
            leaving += p;
        }
    }
    if target == own {
        1.0 - leaving
    } else {
        to_target
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    /// The chosen neighbor was occupied.
    Blocked,
    /// The move is not valid.
    Invalid,
    /// Valid, but the Metropolis coin declined it.
    Declined,
    Moved(Move),
}

/// The sequential chain M on a single configuration.
#[derive(Clone, Debug)]
pub struct Chain {
    pub config: Configuration,
    lambda: f64,
    powers: [f64; 13],
    rng: ChaCha8Rng,
    steps: u64,
}

impl Chain {
    pub fn new(config: Configuration, params: ChainParams) -> Chain {
        assert!(params.lambda > 0.0, "lambda must be positive");
        Chain::with_rng(config, params.lambda, ChaCha8Rng::seed_from_u64(params.seed))
    }

    pub fn with_rng(config: Configuration, lambda: f64, rng: ChaCha8Rng) -> Chain {
        Chain { config, lambda, powers: power_table(lambda), rng, steps: 0 }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self) -> StepOutcome {
        self.steps += 1;
        let cfg = &self.config;
        let from = cfg.cells()[self.rng.gen_range(0..cfg.n())];
        let to = from.neighbor(Direction::new(self.rng.gen_range(0..6)));
        let q: f64 = self.rng.gen();
        if cfg.contains(to) {
            return StepOutcome::Blocked;
        }
        if !is_valid_move(cfg, from, to) {
            return StepOutcome::Invalid;
        }
        let dt = delta_t(cfg, from, to);
        if q >= self.powers[(dt + 6) as usize] {
            return StepOutcome::Declined;
        }
        self.config.move_particle(from, to).expect("target is empty");
        StepOutcome::Moved(Move { from, to, delta_t: dt })
    }

    pub fn run(&mut self, steps: u64) -> u64 {
        (0..steps).filter(|_| matches!(self.step(), StepOutcome::Moved(_))).count() as u64
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    Disconnected,
    Hole,
    StaleCache,
    TriangleIdentity { t: usize, p: usize },
    EdgeIdentity { e: usize, p: usize },
}

/// Full recomputation of connectivity, holes and the perimeter identities.
/// Returns the perimeter on success.
pub fn audit(cfg: &Configuration) -> Result<usize, Violation> {
    if !cfg.is_connected() {
        return Err(Violation::Disconnected);
    }
    if cfg.has_hole() {
        return Err(Violation::Hole);
    }
    if !cfg.audit_cache() {
        return Err(Violation::StaleCache);
    }
    let p = cfg.perimeter_walk_unchecked().len;
    let n = cfg.n();
    let (t, e) = (cfg.triangle_count(), cfg.edge_count());
    if t + p + 2 != 2 * n {
        return Err(Violation::TriangleIdentity { t, p });
    }
    if e + p + 3 != 3 * n {
        return Err(Violation::EdgeIdentity { e, p });
    }
    Ok(p)
}

/// Tally of the moves leaving `cfg`, grouped by the canonical key they reach.
pub fn move_targets(cfg: &Configuration) -> FxHashMap<Vec<Cell>, (u32, i32)> {
    let mut out: FxHashMap<Vec<Cell>, (u32, i32)> = FxHashMap::default();
    let mut scratch = cfg.clone();
    for m in valid_moves(cfg) {
        scratch.move_particle(m.from, m.to).expect("valid move");
        let entry = out.entry(scratch.canonical_key()).or_insert((0, m.delta_t));
        debug_assert_eq!(entry.1, m.delta_t);
        entry.0 += 1;
        scratch.move_particle(m.to, m.from).expect("undo");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(cells: &[(i32, i32)]) -> Configuration {
        Configuration::from_cells(cells.iter().map(|&(q, r)| Cell::new(q, r))).unwrap()
    }

    fn c(q: i32, r: i32) -> Cell {
        Cell::new(q, r)
    }

    #[test]
    fn property_examples() {
        // Mover at (1,0) slides around (0,0) to (0,1): one shared neighbor.
        let domino = cfg(&[(0, 0), (1, 0)]);
        assert!(satisfies_property1(&domino, c(1, 0), c(0, 1)));
        assert!(!satisfies_property2(&domino, c(1, 0), c(0, 1)));
        assert!(is_valid_move(&domino, c(1, 0), c(0, 1)));
        // Moving straight away leaves no shared neighbor and an isolated target.
        assert!(!satisfies_property1(&domino, c(1, 0), c(2, 0)));
        assert!(!satisfies_property2(&domino, c(1, 0), c(2, 0)));
        assert!(!is_valid_move(&domino, c(1, 0), c(2, 0)));
    }

    #[test]
    fn property2_jump_across_a_notch() {
        // The mover at (0,0) hops east to (1,0) with both common cells empty;
        // the two sides are joined by a path below.
        let u = cfg(&[(0, 0), (-1, 0), (0, -1), (1, -2), (2, -2), (3, -2), (3, -1), (2, 0)]);
        assert!(audit(&u).is_ok());
        assert_eq!(shared_count(&u, c(0, 0), c(1, 0)), 0);
        assert!(!satisfies_property1(&u, c(0, 0), c(1, 0)));
        assert!(satisfies_property2(&u, c(0, 0), c(1, 0)));
        assert!(is_valid_move(&u, c(0, 0), c(1, 0)));
        // Same hop from a mover whose remaining neighbors split in two fails.
        let split = cfg(&[(0, 0), (-1, 1), (0, -1), (1, -2), (2, -2), (3, -2), (3, -1), (2, 0), (-1, 2), (0, 2)]);
        assert!(!satisfies_property2(&split, c(0, 0), c(1, 0)));
        // A target with no other neighbor fails.
        let lonely = cfg(&[(0, 0), (-1, 0)]);
        assert!(!satisfies_property2(&lonely, c(0, 0), c(0, -1)) || shared_count(&lonely, c(0, 0), c(0, -1)) > 0);
        assert!(!satisfies_property2(&lonely, c(0, 0), c(1, 0)));
    }

    #[test]
    fn five_neighbors_blocks_every_move() {
        let mut cells: Vec<Cell> = Cell::ORIGIN.neighbors().to_vec();
        cells.remove(0);
        cells.push(Cell::ORIGIN);
        let cup = Configuration::from_cells(cells).unwrap();
        assert_eq!(cup.degree(Cell::ORIGIN), 5);
        assert!(!is_valid_move(&cup, Cell::ORIGIN, c(1, 0)));
    }

    #[test]
    fn triangle_closing_move_on_three_particles() {
        let bent = cfg(&[(0, 0), (1, 0), (1, 1)]);
        assert!(bent.triangle_count() == 0);
        // (1,1) slides to (0,1) and closes the triangle with (0,0), (1,0).
        assert!(is_valid_move(&bent, c(1, 1), c(0, 1)));
        assert_eq!(delta_t(&bent, c(1, 1), c(0, 1)), 1);
        assert_eq!(delta_t(&bent, c(1, 1), c(2, 0)), 0);
    }

    #[test]
    fn transition_probability_examples() {
        let tri = cfg(&[(0, 0), (1, 0), (0, 1)]);
        let opened = cfg(&[(0, 0), (1, 0), (1, 1)]);
        assert!(is_valid_move(&tri, c(0, 1), c(1, 1)));
        assert_eq!(delta_t(&tri, c(0, 1), c(1, 1)), -1);
        let p = transition_probability(&tri, &opened, 4.0);
        assert!((p - 1.0 / 72.0).abs() < 1e-15, "{p}");
        let back = transition_probability(&opened, &tri, 4.0);
        assert!((back - 1.0 / 18.0).abs() < 1e-15, "{back}");
        let far = cfg(&[(0, 0), (1, 0), (2, 0)]);
        assert_eq!(transition_probability(&tri, &far, 4.0), 0.0);
    }

    #[test]
    fn blocked_step_changes_nothing() {
        let full = Configuration::line(2, Direction::E);
        let mut chain = Chain::new(full.clone(), ChainParams { lambda: 1.0, seed: 3 });
        for _ in 0..200 {
            let before = chain.config.clone();
            if chain.step() == StepOutcome::Blocked {
                assert_eq!(chain.config, before);
            }
        }
    }

    #[test]
    fn unit_bias_accepts_every_valid_move() {
        let mut chain = Chain::new(Configuration::line(12, Direction::E), ChainParams { lambda: 1.0, seed: 5 });
        for _ in 0..20_000 {
            assert_ne!(chain.step(), StepOutcome::Declined);
        }
    }

    #[test]
    fn same_seed_same_trajectory() {
        let start = Configuration::line(20, Direction::E);
        let mut a = Chain::new(start.clone(), ChainParams { lambda: 3.0, seed: 99 });
        let mut b = Chain::new(start, ChainParams { lambda: 3.0, seed: 99 });
        for _ in 0..10_000 {
            assert_eq!(a.step(), b.step());
        }
        assert_eq!(a.config.sorted_cells(), b.config.sorted_cells());
    }

    #[test]
    fn chain_preserves_invariants() {
        let mut chain = Chain::new(Configuration::line(30, Direction::E), ChainParams { lambda: 4.0, seed: 1 });
        for _ in 0..200 {
            chain.run(500);
            audit(&chain.config).unwrap();
        }
    }

    fn arb_config() -> impl Strategy<Value = Configuration> {
        (2usize..25, any::<u64>()).prop_map(|(n, seed)| {
            Configuration::random_hole_free(n, &mut ChaCha8Rng::seed_from_u64(seed))
        })
    }

    proptest! {
        #[test]
        fn properties_are_exclusive_and_symmetric(c in arb_config()) {
            for &l in c.cells() {
                for lp in l.neighbors() {
                    if c.contains(lp) { continue; }
                    let p1 = satisfies_property1(&c, l, lp);
                    let p2 = satisfies_property2(&c, l, lp);
                    prop_assert!(!(p1 && p2));
                    prop_assert_eq!(p1, satisfies_property1(&c, lp, l));
                    prop_assert_eq!(p2, satisfies_property2(&c, lp, l));
                }
            }
        }

        #[test]
        fn valid_moves_keep_configurations_valid_and_reversible(c in arb_config()) {
            for m in valid_moves(&c) {
                let mut next = c.clone();
                next.move_particle(m.from, m.to).unwrap();
                prop_assert!(audit(&next).is_ok());
                prop_assert!(is_valid_move(&next, m.to, m.from));
                prop_assert_eq!(delta_t(&next, m.to, m.from), -m.delta_t);
                prop_assert_eq!(
                    next.triangle_count() as i32 - c.triangle_count() as i32,
                    m.delta_t
                );
            }
        }
    }
}
