use std::fmt;

/// Cell states, with the byte encoding used by the map file format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Cell {
    Occupied = 0,
    Unknown = 128,
    Free = 255,
}

impl Cell {
    pub fn from_byte(b: u8) -> Option<Cell> {
        match b {
            0 => Some(Cell::Occupied),
            128 => Some(Cell::Unknown),
            255 => Some(Cell::Free),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct GridPos {
    pub x: i32,
    pub y: i32,
}

impl GridPos {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn neighbors4(self) -> [GridPos; 4] {
        [
            GridPos::new(self.x + 1, self.y),
            GridPos::new(self.x - 1, self.y),
            GridPos::new(self.x, self.y + 1),
            GridPos::new(self.x, self.y - 1),
        ]
    }

    pub fn dist2(self, o: GridPos) -> i64 {
        let dx = (self.x - o.x) as i64;
        let dy = (self.y - o.y) as i64;
        dx * dx + dy * dy
    }
}

impl fmt::Display for GridPos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Row-major cell raster at a fixed resolution (meters per cell).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    width: usize,
    height: usize,
    resolution: f64,
    cells: Vec<Cell>,
}

impl Grid {
    pub fn filled(width: usize, height: usize, resolution: f64, c: Cell) -> Self {
        Self {
            width,
            height,
            resolution,
            cells: vec![c; width * height],
        }
    }

    pub fn from_cells(width: usize, height: usize, resolution: f64, cells: Vec<Cell>) -> Self {
        assert_eq!(cells.len(), width * height);
        Self {
            width,
            height,
            resolution,
            cells,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    #[inline]
    pub fn in_bounds(&self, p: GridPos) -> bool {
        p.x >= 0 && p.y >= 0 && (p.x as usize) < self.width && (p.y as usize) < self.height
    }

    #[inline]
    pub fn index(&self, p: GridPos) -> usize {
        p.y as usize * self.width + p.x as usize
    }

    /// Out-of-bounds positions read as Occupied (closed world).
    #[inline]
    pub fn get(&self, p: GridPos) -> Cell {
        if self.in_bounds(p) {
            self.cells[self.index(p)]
        } else {
            Cell::Occupied
        }
    }

    #[inline]
    pub fn set(&mut self, p: GridPos, c: Cell) {
        let i = self.index(p);
        self.cells[i] = c;
    }

    pub fn count(&self, c: Cell) -> usize {
        self.cells.iter().filter(|&&x| x == c).count()
    }

    /// Cell containing a metric position.
    pub fn cell_at(&self, x_m: f64, y_m: f64) -> GridPos {
        GridPos::new(
            (x_m / self.resolution + 1e-9).floor() as i32,
            (y_m / self.resolution + 1e-9).floor() as i32,
        )
    }

    pub fn center_m(&self, p: GridPos) -> (f64, f64) {
        (
            (p.x as f64 + 0.5) * self.resolution,
            (p.y as f64 + 0.5) * self.resolution,
        )
    }

    pub fn positions(&self) -> impl Iterator<Item = GridPos> + '_ {
        let w = self.width as i32;
        (0..self.height as i32).flat_map(move |y| (0..w).map(move |x| GridPos::new(x, y)))
    }
}

/// Closed-world ground truth of Free/Occupied cells.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthMap {
    pub grid: Grid,
    pub seed: u64,
    pub start: GridPos,
}

impl GroundTruthMap {
    pub fn width_m(&self) -> f64 {
        self.grid.width() as f64 * self.grid.resolution()
    }

    pub fn height_m(&self) -> f64 {
        self.grid.height() as f64 * self.grid.resolution()
    }

    pub fn free_ratio(&self) -> f64 {
        self.grid.count(Cell::Free) as f64 / self.grid.cells().len() as f64
    }

    pub fn is_free(&self, p: GridPos) -> bool {
        self.grid.get(p) == Cell::Free
    }

    /// Free cells 4-connected to `from` (flood fill).
    pub fn reachable_from(&self, from: GridPos) -> Vec<bool> {
        let g = &self.grid;
        let mut seen = vec![false; g.cells().len()];
        if g.get(from) != Cell::Free {
            return seen;
        }
        let mut stack = vec![from];
        seen[g.index(from)] = true;
        while let Some(p) = stack.pop() {
            for n in p.neighbors4() {
                if g.get(n) == Cell::Free && !seen[g.index(n)] {
                    seen[g.index(n)] = true;
                    stack.push(n);
                }
            }
        }
        seen
    }
}

/// The robot's belief: each cell Free, Occupied or Unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMap {
    grid: Grid,
    pub step_counter: u64,
}

impl OccupancyMap {
    pub fn unknown_like(gt: &GroundTruthMap) -> Self {
        Self {
            grid: Grid::filled(gt.grid.width(), gt.grid.height(), gt.grid.resolution(), Cell::Unknown),
            step_counter: 0,
        }
    }

    pub fn from_grid(grid: Grid) -> Self {
        Self { grid, step_counter: 0 }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn get(&self, p: GridPos) -> Cell {
        self.grid.get(p)
    }

    pub fn unknown_count(&self) -> usize {
        self.grid.count(Cell::Unknown)
    }

    /// Reveals `p` to its ground-truth value. Returns true if the cell changed.
    /// Known cells never change, so a belief can only gain information.
    pub fn reveal(&mut self, p: GridPos, truth: Cell) -> bool {
        debug_assert!(truth != Cell::Unknown);
        if self.grid.in_bounds(p) && self.grid.get(p) == Cell::Unknown {
            self.grid.set(p, truth);
            true
        } else {
            false
        }
    }
}

/// Continuous robot position in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(&self, x: f64, y: f64) -> f64 {
        ((self.x - x).powi(2) + (self.y - y).powi(2)).sqrt()
    }
}
