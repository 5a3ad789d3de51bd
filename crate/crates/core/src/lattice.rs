//! Geometry of the infinite triangular lattice in axial coordinates.
//!
//! Direction 0 points east and indices increase counterclockwise. The
//! standard embedding puts cell `(q, r)` at `x = q + r/2`, `y = r·√3/2`.

use std::fmt;
use std::ops::{Add, Sub};

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LatticeError {
    #[error("cells {0} and {1} coincide")]
    SameCell(Cell, Cell),
    #[error("cells {0} and {1} are not adjacent")]
    NotAdjacent(Cell, Cell),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Cell {
    pub q: i32,
    pub r: i32,
}

impl Cell {
    pub const ORIGIN: Cell = Cell { q: 0, r: 0 };

    pub const fn new(q: i32, r: i32) -> Self {
        Cell { q, r }
    }

    pub fn neighbor(self, d: Direction) -> Cell {
        let (dq, dr) = OFFSETS[d.index()];
        Cell::new(self.q + dq, self.r + dr)
    }

    pub fn neighbors(self) -> [Cell; 6] {
        Direction::ALL.map(|d| self.neighbor(d))
    }

    pub fn offset(self, dq: i32, dr: i32) -> Cell {
        Cell::new(self.q + dq, self.r + dr)
    }

    /// Number of lattice steps between two cells.
    pub fn distance(self, other: Cell) -> i32 {
        let dq = self.q - other.q;
        let dr = self.r - other.r;
        (dq.abs() + dr.abs() + (dq + dr).abs()) / 2
    }

    pub fn is_adjacent(self, other: Cell) -> bool {
        self.direction_to(other).is_some()
    }

    /// The direction `d` with `self.neighbor(d) == other`, if any.
    pub fn direction_to(self, other: Cell) -> Option<Direction> {
        let delta = (other.q - self.q, other.r - self.r);
        OFFSETS.iter().position(|&o| o == delta).map(|i| Direction(i as u8))
    }

    /// Rotate by 60° counterclockwise about the origin.
    pub fn rotate60(self) -> Cell {
        Cell::new(-self.r, self.q + self.r)
    }

    /// Cartesian position in the standard embedding.
    pub fn embed(self) -> (f64, f64) {
        let x = self.q as f64 + self.r as f64 / 2.0;
        let y = self.r as f64 * 3f64.sqrt() / 2.0;
        (x, y)
    }

    /// Integer key ordering cells bottom-to-top, then left-to-right.
    /// `2x = 2q + r` keeps the comparison exact.
    pub fn height_key(self) -> (i32, i32) {
        (self.r, 2 * self.q + self.r)
    }
}

impl Add for Cell {
    type Output = Cell;

    fn add(self, other: Cell) -> Cell {
        Cell::new(self.q + other.q, self.r + other.r)
    }
}

impl Sub for Cell {
    type Output = Cell;

    fn sub(self, other: Cell) -> Cell {
        Cell::new(self.q - other.q, self.r - other.r)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.q, self.r)
    }
}

const OFFSETS: [(i32, i32); 6] = [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Direction(u8);

impl Direction {
    pub const E: Direction = Direction(0);
    pub const NE: Direction = Direction(1);
    pub const NW: Direction = Direction(2);
    pub const W: Direction = Direction(3);
    pub const SW: Direction = Direction(4);
    pub const SE: Direction = Direction(5);

    pub const ALL: [Direction; 6] = [
        Direction(0),
        Direction(1),
        Direction(2),
        Direction(3),
        Direction(4),
        Direction(5),
    ];

    /// Panics unless `i < 6`.
    pub fn new(i: usize) -> Direction {
        assert!(i < 6, "direction index {i} out of range");
        Direction(i as u8)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn opposite(self) -> Direction {
        self.rotate(3)
    }

    /// Rotate by `k` sixths of a turn counterclockwise (negative is clockwise).
    pub fn rotate(self, k: i32) -> Direction {
        Direction((self.0 as i32 + k).rem_euclid(6) as u8)
    }

    pub fn offset(self) -> (i32, i32) {
        OFFSETS[self.index()]
    }
}

pub fn neighbor(c: Cell, d: Direction) -> Cell {
    c.neighbor(d)
}

pub fn opposite(d: Direction) -> Direction {
    d.opposite()
}

/// Cells adjacent to both `a` and `b`. At most two.
pub fn common_neighbors(a: Cell, b: Cell) -> Result<Vec<Cell>, LatticeError> {
    if a == b {
        return Err(LatticeError::SameCell(a, b));
    }
    if let Some(d) = a.direction_to(b) {
        return Ok(vec![a.neighbor(d.rotate(1)), a.neighbor(d.rotate(-1))]);
    }
    Ok(a.neighbors().into_iter().filter(|c| c.is_adjacent(b)).collect())
}

/// The eight cells of `n(a) ∪ n(b) \ {a, b}` for adjacent `a`, `b`, listed
/// counterclockwise starting at the common neighbor `a + e_{d+1}`, where
/// `b = a + e_d`.
pub fn extended_neighborhood(a: Cell, b: Cell) -> Result<[Cell; 8], LatticeError> {
    let d = a.direction_to(b).ok_or(LatticeError::NotAdjacent(a, b))?;
    Ok([
        a.neighbor(d.rotate(1)),
        b.neighbor(d.rotate(1)),
        b.neighbor(d),
        b.neighbor(d.rotate(-1)),
        a.neighbor(d.rotate(-1)),
        a.neighbor(d.rotate(-2)),
        a.neighbor(d.rotate(3)),
        a.neighbor(d.rotate(2)),
    ])
}

/// The five neighbors of `a` other than `b`, in counterclockwise order
/// starting just after `b`.
pub fn neighbors_except(a: Cell, b: Cell) -> Result<[Cell; 5], LatticeError> {
    let d = a.direction_to(b).ok_or(LatticeError::NotAdjacent(a, b))?;
    Ok([1, 2, 3, 4, 5].map(|k| a.neighbor(d.rotate(k))))
}

/// The triangular faces incident to `c`: `{c, c+e_d, c+e_{d+1}}` for each `d`.
pub fn incident_triangles(c: Cell) -> [[Cell; 3]; 6] {
    Direction::ALL.map(|d| [c, c.neighbor(d), c.neighbor(d.rotate(1))])
}
