use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Cell, Grid, GridPos, GroundTruthMap, WorldError};

/// Carver knobs. The generator lays a recursive-backtracker maze on a coarse
/// lattice of corridor cells, merges random blocks of corridor cells into
/// rooms and opens a fraction of the remaining walls to create loops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MazeParams {
    pub width_m: f64,
    pub height_m: f64,
    pub d_m: f64,
    pub corridor_w: usize,
    /// Rooms per coarse cell.
    pub room_rate: f64,
    /// Fraction of remaining interior walls opened.
    pub loop_fraction: f64,
}

impl MazeParams {
    pub fn new(width_m: f64, height_m: f64, d_m: f64, corridor_w: usize) -> Self {
        Self {
            width_m,
            height_m,
            d_m,
            corridor_w,
            room_rate: 0.06,
            loop_fraction: 0.1,
        }
    }

    pub fn wall_w(&self) -> usize {
        ((2 * self.corridor_w + 2) / 3).max(1)
    }

    pub fn pitch(&self) -> usize {
        self.corridor_w + self.wall_w()
    }
}

fn cells_for(len_m: f64, d_m: f64) -> Result<usize, WorldError> {
    let n = (len_m / d_m).round();
    if n < 1.0 || ((len_m / d_m) - n).abs() > 1e-6 {
        return Err(WorldError::Sizing(format!(
            "{len_m} m is not a multiple of d_m = {d_m}"
        )));
    }
    Ok(n as usize)
}

struct Layout {
    pitch: i32,
    half: i32,
    cw: i32,
    nx: usize,
    ny: usize,
}

impl Layout {
    /// Cell span [lo, hi) of coarse interior k along one axis.
    fn span(&self, k: usize) -> (i32, i32) {
        let lo = self.pitch * (k as i32 + 1) - self.half;
        (lo, lo + self.cw)
    }
}

fn carve(g: &mut Grid, x: (i32, i32), y: (i32, i32)) {
    for yy in y.0..y.1 {
        for xx in x.0..x.1 {
            g.set(GridPos::new(xx, yy), Cell::Free);
        }
    }
}

/// Same arguments produce the same map bit for bit.
pub fn generate_maze(
    seed: u64,
    width_m: f64,
    height_m: f64,
    d_m: f64,
    corridor_w: usize,
) -> Result<GroundTruthMap, WorldError> {
    generate_maze_with(seed, &MazeParams::new(width_m, height_m, d_m, corridor_w))
}

pub fn generate_maze_with(seed: u64, p: &MazeParams) -> Result<GroundTruthMap, WorldError> {
    if p.corridor_w == 0 {
        return Err(WorldError::Sizing("corridor width must be at least one cell".into()));
    }
    let w = cells_for(p.width_m, p.d_m)?;
    let h = cells_for(p.height_m, p.d_m)?;
    let lay = {
        let pitch = p.pitch() as i32;
        let half = p.corridor_w as i32 / 2;
        let cw = p.corridor_w as i32;
        let count = |n: usize| -> usize {
            let mut k = 0;
            while pitch * (k as i32 + 1) - half + cw <= n as i32 - 1 {
                k += 1;
            }
            k
        };
        Layout {
            pitch,
            half,
            cw,
            nx: count(w),
            ny: count(h),
        }
    };
    if lay.nx == 0 || lay.ny == 0 {
        return Err(WorldError::Sizing(format!(
            "{w}x{h} cells cannot hold a corridor of width {} (needs at least {} cells per side)",
            p.corridor_w,
            p.pitch() * 2 - p.corridor_w / 2 + 1
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Grid::filled(w, h, p.d_m, Cell::Occupied);
    let (nx, ny) = (lay.nx, lay.ny);
    let id = |x: usize, y: usize| y * nx + x;

    for y in 0..ny {
        for x in 0..nx {
            carve(&mut g, lay.span(x), lay.span(y));
        }
    }

    // Walls between horizontally adjacent coarse cells: east[id], vertical: north[id].
    let mut east_open = vec![false; nx * ny];
    let mut north_open = vec![false; nx * ny];
    let mut seen = vec![false; nx * ny];
    let start = (rng.gen_range(0..nx), rng.gen_range(0..ny));
    let mut stack = vec![start];
    seen[id(start.0, start.1)] = true;
    while let Some(&(x, y)) = stack.last() {
        let mut options: Vec<(usize, usize)> = Vec::with_capacity(4);
        if x + 1 < nx && !seen[id(x + 1, y)] {
            options.push((x + 1, y));
        }
        if x > 0 && !seen[id(x - 1, y)] {
            options.push((x - 1, y));
        }
        if y + 1 < ny && !seen[id(x, y + 1)] {
            options.push((x, y + 1));
        }
        if y > 0 && !seen[id(x, y - 1)] {
            options.push((x, y - 1));
        }
        match options.choose(&mut rng) {
            None => {
                stack.pop();
            }
            Some(&(qx, qy)) => {
                if qy == y {
                    east_open[id(x.min(qx), y)] = true;
                } else {
                    north_open[id(x, y.min(qy))] = true;
                }
                seen[id(qx, qy)] = true;
                stack.push((qx, qy));
            }
        }
    }

    let rooms = (p.room_rate * (nx * ny) as f64).round() as usize;
    if nx >= 2 && ny >= 2 {
        for _ in 0..rooms {
            let rw = rng.gen_range(2..=3usize).min(nx);
            let rh = rng.gen_range(2..=3usize).min(ny);
            let x0 = rng.gen_range(0..=nx - rw);
            let y0 = rng.gen_range(0..=ny - rh);
            for y in y0..y0 + rh {
                for x in x0..x0 + rw {
                    if x + 1 < x0 + rw {
                        east_open[id(x, y)] = true;
                    }
                    if y + 1 < y0 + rh {
                        north_open[id(x, y)] = true;
                    }
                }
            }
            let (xl, _) = lay.span(x0);
            let (_, xh) = lay.span(x0 + rw - 1);
            let (yl, _) = lay.span(y0);
            let (_, yh) = lay.span(y0 + rh - 1);
            carve(&mut g, (xl, xh), (yl, yh));
        }
    }

    let mut closed: Vec<(bool, usize, usize)> = Vec::new();
    for y in 0..ny {
        for x in 0..nx {
            if x + 1 < nx && !east_open[id(x, y)] {
                closed.push((true, x, y));
            }
            if y + 1 < ny && !north_open[id(x, y)] {
                closed.push((false, x, y));
            }
        }
    }
    closed.shuffle(&mut rng);
    let n_loops = (p.loop_fraction * closed.len() as f64).round() as usize;
    for &(east, x, y) in &closed[..n_loops] {
        if east {
            east_open[id(x, y)] = true;
        } else {
            north_open[id(x, y)] = true;
        }
    }

    for y in 0..ny {
        for x in 0..nx {
            if x + 1 < nx && east_open[id(x, y)] {
                carve(&mut g, (lay.span(x).1, lay.span(x + 1).0), lay.span(y));
            }
            if y + 1 < ny && north_open[id(x, y)] {
                carve(&mut g, lay.span(x), (lay.span(y).1, lay.span(y + 1).0));
            }
        }
    }

    let sx = rng.gen_range(0..nx);
    let sy = rng.gen_range(0..ny);
    let start = GridPos::new(lay.pitch * (sx as i32 + 1), lay.pitch * (sy as i32 + 1));
    Ok(GroundTruthMap { grid: g, seed, start })
}
