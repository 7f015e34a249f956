use super::{Cell, Grid, GridPos};

/// Supercover walk between two cell centres: every cell whose closed square
/// the segment touches, in order of entry. When the segment passes exactly
/// through a cell corner, the two side cells are emitted (x-major order)
/// before the diagonal cell.
#[derive(Debug, Clone)]
pub struct Supercover {
    x: i32,
    y: i32,
    sx: i32,
    sy: i32,
    nx: i64,
    ny: i64,
    ix: i64,
    iy: i64,
    queue: [GridPos; 3],
    head: usize,
    tail: usize,
    started: bool,
}

impl Supercover {
    pub fn new(from: GridPos, to: GridPos) -> Self {
        let dx = (to.x - from.x) as i64;
        let dy = (to.y - from.y) as i64;
        Self {
            x: from.x,
            y: from.y,
            sx: dx.signum() as i32,
            sy: dy.signum() as i32,
            nx: dx.abs(),
            ny: dy.abs(),
            ix: 0,
            iy: 0,
            queue: [GridPos::default(); 3],
            head: 0,
            tail: 0,
            started: false,
        }
    }
}

impl Iterator for Supercover {
    type Item = GridPos;

    fn next(&mut self) -> Option<GridPos> {
        if !self.started {
            self.started = true;
            return Some(GridPos::new(self.x, self.y));
        }
        if self.head < self.tail {
            let p = self.queue[self.head];
            self.head += 1;
            return Some(p);
        }
        if self.ix == self.nx && self.iy == self.ny {
            return None;
        }
        // Compare the parameters of the next vertical and horizontal boundary
        // crossings: (0.5 + ix) / nx against (0.5 + iy) / ny.
        let lhs = (1 + 2 * self.ix) * self.ny;
        let rhs = (1 + 2 * self.iy) * self.nx;
        if lhs == rhs {
            let a = GridPos::new(self.x + self.sx, self.y);
            let b = GridPos::new(self.x, self.y + self.sy);
            let (first, second) = if a < b { (a, b) } else { (b, a) };
            self.x += self.sx;
            self.y += self.sy;
            self.ix += 1;
            self.iy += 1;
            self.queue = [second, GridPos::new(self.x, self.y), GridPos::default()];
            self.head = 0;
            self.tail = 2;
            Some(first)
        } else if lhs < rhs {
            self.x += self.sx;
            self.ix += 1;
            Some(GridPos::new(self.x, self.y))
        } else {
            self.y += self.sy;
            self.iy += 1;
            Some(GridPos::new(self.x, self.y))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RayHit {
    Clear,
    Blocked(GridPos),
}

/// First Occupied (or out-of-bounds) cell on the line `from -> to`.
/// Unknown cells do not block.
pub fn raycast(grid: &Grid, from: GridPos, to: GridPos) -> RayHit {
    for p in Supercover::new(from, to) {
        if grid.get(p) == Cell::Occupied {
            return RayHit::Blocked(p);
        }
    }
    RayHit::Clear
}
