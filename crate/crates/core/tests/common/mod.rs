#![allow(dead_code)]

use std::cmp::Ordering;

use guide_core::world::{Cell, Grid, GridPos, GroundTruthMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exact rational t = num / den with den > 0.
#[derive(Clone, Copy, Debug)]
struct Q(i64, i64);

impl Q {
    fn new(num: i64, den: i64) -> Q {
        if den < 0 {
            Q(-num, -den)
        } else {
            Q(num, den)
        }
    }
    fn cmp(self, o: Q) -> Ordering {
        ((self.0 as i128) * (o.1 as i128)).cmp(&((o.0 as i128) * (self.1 as i128)))
    }
    fn max(self, o: Q) -> Q {
        if self.cmp(o) == Ordering::Less {
            o
        } else {
            self
        }
    }
    fn min(self, o: Q) -> Q {
        if self.cmp(o) == Ordering::Greater {
            o
        } else {
            self
        }
    }
}

/// Parameter interval where the segment between cell centres lies inside the
/// closed square of `c`, in doubled integer coordinates.
fn clip(a: GridPos, b: GridPos, c: GridPos) -> Option<(Q, Q)> {
    let x0 = 2 * a.x as i64 + 1;
    let y0 = 2 * a.y as i64 + 1;
    let dx = 2 * (b.x - a.x) as i64;
    let dy = 2 * (b.y - a.y) as i64;
    let mut lo = Q(0, 1);
    let mut hi = Q(1, 1);
    for (p0, d, cmin) in [(x0, dx, 2 * c.x as i64), (y0, dy, 2 * c.y as i64)] {
        let cmax = cmin + 2;
        if d == 0 {
            if p0 < cmin || p0 > cmax {
                return None;
            }
        } else {
            let t1 = Q::new(cmin - p0, d);
            let t2 = Q::new(cmax - p0, d);
            let (e, x) = if t1.cmp(t2) == Ordering::Greater {
                (t2, t1)
            } else {
                (t1, t2)
            };
            lo = lo.max(e);
            hi = hi.min(x);
        }
    }
    if lo.cmp(hi) == Ordering::Greater {
        None
    } else {
        Some((lo, hi))
    }
}

/// Brute-force supercover: every cell in the bounding box whose closed square
/// meets the segment, ordered by (entry, exit, x, y).
pub fn naive_supercover(a: GridPos, b: GridPos) -> Vec<GridPos> {
    let mut hits = Vec::new();
    for y in a.y.min(b.y) - 1..=a.y.max(b.y) + 1 {
        for x in a.x.min(b.x) - 1..=a.x.max(b.x) + 1 {
            let c = GridPos::new(x, y);
            if let Some(iv) = clip(a, b, c) {
                hits.push((iv, c));
            }
        }
    }
    hits.sort_by(|(p, c), (q, d)| p.0.cmp(q.0).then(p.1.cmp(q.1)).then(c.x.cmp(&d.x)).then(c.y.cmp(&d.y)));
    hits.into_iter().map(|(_, c)| c).collect()
}

pub fn naive_raycast(g: &Grid, a: GridPos, b: GridPos) -> Option<GridPos> {
    naive_supercover(a, b).into_iter().find(|&c| {
        c.x < 0
            || c.y < 0
            || c.x >= g.width() as i32
            || c.y >= g.height() as i32
            || g.cells()[c.y as usize * g.width() + c.x as usize] == Cell::Occupied
    })
}

/// Random Free/Occupied world with an Occupied border.
pub fn random_world(rng: &mut ChaCha8Rng, n: usize, p_occ: f64) -> GroundTruthMap {
    let mut g = Grid::filled(n, n, 0.4, Cell::Free);
    for y in 0..n as i32 {
        for x in 0..n as i32 {
            let border = x == 0 || y == 0 || x == n as i32 - 1 || y == n as i32 - 1;
            if border || rng.gen_bool(p_occ) {
                g.set(GridPos::new(x, y), Cell::Occupied);
            }
        }
    }
    let start = GridPos::new(n as i32 / 2, n as i32 / 2);
    g.set(start, Cell::Free);
    GroundTruthMap {
        grid: g,
        seed: 0,
        start,
    }
}

/// Random tri-valued grid.
pub fn random_belief(rng: &mut ChaCha8Rng, n: usize, probs: [f64; 3]) -> Grid {
    let mut g = Grid::filled(n, n, 0.4, Cell::Unknown);
    for y in 0..n as i32 {
        for x in 0..n as i32 {
            let u: f64 = rng.gen();
            let c = if u < probs[0] {
                Cell::Free
            } else if u < probs[0] + probs[1] {
                Cell::Occupied
            } else {
                Cell::Unknown
            };
            g.set(GridPos::new(x, y), c);
        }
    }
    g
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A one-corridor world 40 m long at 0.4 m cells: rows 8..=12 are free
/// between the end walls. The start sits a few cells from the left end, or
/// from the right end when `mirrored`.
pub fn corridor_world(start_offset: i32, mirrored: bool) -> GroundTruthMap {
    let (w, h) = (100usize, 25usize);
    let mut g = Grid::filled(w, h, 0.4, Cell::Occupied);
    for y in 8..=12 {
        for x in 1..w as i32 - 1 {
            g.set(GridPos::new(x, y), Cell::Free);
        }
    }
    let x = if mirrored {
        w as i32 - 1 - start_offset
    } else {
        start_offset
    };
    GroundTruthMap {
        grid: g,
        seed: 0,
        start: GridPos::new(x, 10),
    }
}

/// A walled square room of `side` free cells inside a map of `side + 10`
/// cells, with the start on the lattice point nearest its centre.
pub fn room_world(side: usize) -> GroundTruthMap {
    let n = side + 10;
    let mut g = Grid::filled(n, n, 0.4, Cell::Occupied);
    for y in 5..5 + side as i32 {
        for x in 5..5 + side as i32 {
            g.set(GridPos::new(x, y), Cell::Free);
        }
    }
    let c = (5 + side as i32 / 2) / 5 * 5;
    GroundTruthMap {
        grid: g,
        seed: 0,
        start: GridPos::new(c, c),
    }
}
