use super::{Grid, GridPos, WorldError};

/// Integer coordinate on the node lattice (spacing `d_n`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct LatticePos {
    pub i: i32,
    pub j: i32,
}

impl LatticePos {
    pub const fn new(i: i32, j: i32) -> Self {
        Self { i, j }
    }

    pub fn chebyshev(self, o: LatticePos) -> i32 {
        (self.i - o.i).abs().max((self.j - o.j).abs())
    }
}

/// Node lattice laid over a map grid: lattice point `(i, j)` sits on map
/// cell `(i * step, j * step)` where `step = d_n / d_m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice {
    pub d_n: f64,
    pub d_m: f64,
    pub step: usize,
    pub nx: usize,
    pub ny: usize,
}

impl Lattice {
    pub fn new(grid: &Grid, d_n: f64) -> Result<Self, WorldError> {
        let d_m = grid.resolution();
        let ratio = d_n / d_m;
        let step = ratio.round();
        if step < 1.0 || (ratio - step).abs() > 1e-6 {
            return Err(WorldError::Sizing(format!(
                "node resolution {d_n} is not a multiple of map resolution {d_m}"
            )));
        }
        let step = step as usize;
        Ok(Self {
            d_n,
            d_m,
            step,
            nx: (grid.width() - 1) / step + 1,
            ny: (grid.height() - 1) / step + 1,
        })
    }

    pub fn contains(&self, p: LatticePos) -> bool {
        p.i >= 0 && p.j >= 0 && (p.i as usize) < self.nx && (p.j as usize) < self.ny
    }

    pub fn cell(&self, p: LatticePos) -> GridPos {
        GridPos::new(p.i * self.step as i32, p.j * self.step as i32)
    }

    /// Metric position of a lattice point (the centre of its map cell).
    pub fn pos_m(&self, p: LatticePos) -> (f64, f64) {
        (
            (p.i as f64 * self.step as f64 + 0.5) * self.d_m,
            (p.j as f64 * self.step as f64 + 0.5) * self.d_m,
        )
    }

    /// Nearest lattice point to a metric position, clamped into the lattice.
    pub fn nearest(&self, x_m: f64, y_m: f64) -> LatticePos {
        let fi = (x_m / self.d_m - 0.5) / self.step as f64;
        let fj = (y_m / self.d_m - 0.5) / self.step as f64;
        LatticePos::new(
            (fi.round() as i32).clamp(0, self.nx as i32 - 1),
            (fj.round() as i32).clamp(0, self.ny as i32 - 1),
        )
    }

    pub fn points(&self) -> impl Iterator<Item = LatticePos> + '_ {
        let nx = self.nx as i32;
        (0..self.ny as i32).flat_map(move |j| (0..nx).map(move |i| LatticePos::new(i, j)))
    }

    pub fn dist_m(&self, a: LatticePos, b: LatticePos) -> f64 {
        let di = (a.i - b.i) as f64;
        let dj = (a.j - b.j) as f64;
        (di * di + dj * dj).sqrt() * self.d_n
    }
}
