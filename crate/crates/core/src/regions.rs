//! Fixed-size region decomposition, labeling and region scoring.

use std::fmt;
use std::io::Write;

use thiserror::Error;

use crate::world::{frontiers, Cell, GridPos, OccupancyMap, Pose};
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegionError {
    #[error("region size {s_g} m is not a positive multiple of the map resolution {d_m} m")]
    Size { s_g: f64, d_m: f64 },
    #[error("region {0} is Explored and cannot be scored")]
    NotScorable(usize),
    #[error("io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegionLabel {
    Explored,
    Boundary,
    Unobserved,
}

impl fmt::Display for RegionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegionLabel::Explored => "explored",
            RegionLabel::Boundary => "boundary",
            RegionLabel::Unobserved => "unobserved",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region<T> {
    pub id: usize,
    /// Half-open cell bounds `[x0, x1) x [y0, y1)`.
    pub x0: i32,
    pub y0: i32,
    pub x1: i32,
    pub y1: i32,
    pub centroid: (T, T),
    pub label: RegionLabel,
    pub score: Option<T>,
    pub frontierless: bool,
}

impl<T> Region<T> {
    pub fn contains(&self, p: GridPos) -> bool {
        p.x >= self.x0 && p.x < self.x1 && p.y >= self.y0 && p.y < self.y1
    }

    pub fn cell_count(&self) -> usize {
        ((self.x1 - self.x0) * (self.y1 - self.y0)) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionGrid<T> {
    pub size_m: f64,
    pub size_cells: usize,
    pub cols: usize,
    pub rows: usize,
    pub regions: Vec<Region<T>>,
}

impl<T: Scalar> RegionGrid<T> {
    pub fn region_of(&self, p: GridPos) -> usize {
        let c = p.x as usize / self.size_cells;
        let r = p.y as usize / self.size_cells;
        r * self.cols + c
    }

    /// Centroids of Unobserved regions (the grid-node placeholder set).
    pub fn unobserved_centroids(&self) -> Vec<(usize, (T, T))> {
        self.regions
            .iter()
            .filter(|g| g.label == RegionLabel::Unobserved)
            .map(|g| (g.id, g.centroid))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionScoreParams<T> {
    pub omega_f: T,
    pub omega_r: T,
    pub k: usize,
}

impl<T: Scalar> RegionScoreParams<T> {
    pub fn new(omega_f: T, omega_r: T, k: usize) -> Self {
        assert!(
            omega_f > T::zero() && omega_r > T::zero() && k >= 1,
            "invalid region score params"
        );
        Self { omega_f, omega_r, k }
    }
}

impl<T: Scalar> Default for RegionScoreParams<T> {
    fn default() -> Self {
        Self::new(T::one(), T::one(), 5)
    }
}

pub fn decompose<T: Scalar>(o: &OccupancyMap, s_g: f64) -> Result<RegionGrid<T>, RegionError> {
    let f = frontiers(o);
    decompose_with_frontiers(o, s_g, &f)
}

/// As [`decompose`] with a precomputed frontier set.
pub fn decompose_with_frontiers<T: Scalar>(
    o: &OccupancyMap,
    s_g: f64,
    frontier_cells: &[GridPos],
) -> Result<RegionGrid<T>, RegionError> {
    let g = o.grid();
    let d_m = g.resolution();
    let ratio = s_g / d_m;
    let size = ratio.round();
    if size < 1.0 || (ratio - size).abs() > 1e-6 {
        return Err(RegionError::Size { s_g, d_m });
    }
    let size = size as usize;
    let cols = g.width().div_ceil(size);
    let rows = g.height().div_ceil(size);
    let n = cols * rows;
    let mut known = vec![0usize; n];
    let mut has_frontier = vec![false; n];
    for y in 0..g.height() {
        for x in 0..g.width() {
            if g.cells()[y * g.width() + x] != Cell::Unknown {
                known[(y / size) * cols + x / size] += 1;
            }
        }
    }
    for p in frontier_cells {
        has_frontier[(p.y as usize / size) * cols + p.x as usize / size] = true;
    }
    let mut regions = Vec::with_capacity(n);
    for r in 0..rows {
        for c in 0..cols {
            let id = r * cols + c;
            let x0 = (c * size) as i32;
            let y0 = (r * size) as i32;
            let x1 = ((c + 1) * size).min(g.width()) as i32;
            let y1 = ((r + 1) * size).min(g.height()) as i32;
            let label = if has_frontier[id] {
                RegionLabel::Boundary
            } else if known[id] == 0 {
                RegionLabel::Unobserved
            } else {
                RegionLabel::Explored
            };
            let half = T::of(0.5);
            let dm = T::of(d_m);
            regions.push(Region {
                id,
                x0,
                y0,
                x1,
                y1,
                centroid: (
                    T::of_usize((x0 + x1) as usize) * half * dm,
                    T::of_usize((y0 + y1) as usize) * half * dm,
                ),
                label,
                score: None,
                frontierless: false,
            });
        }
    }
    Ok(RegionGrid {
        size_m: s_g,
        size_cells: size,
        cols,
        rows,
        regions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreOutcome<T> {
    pub score: T,
    pub frontierless: bool,
}

/// `omega_f / d_f + omega_r / d_r`, with `d_f` the mean distance from the
/// centroid to its K nearest frontier points (metric positions) and `d_r`
/// the distance to the robot. Both distances are floored at `d_floor`.
pub fn score_region<T: Scalar>(
    g: &Region<T>,
    frontier_pts: &[(T, T)],
    robot: Pose,
    p: &RegionScoreParams<T>,
    d_floor: T,
) -> Result<ScoreOutcome<T>, RegionError> {
    if g.label == RegionLabel::Explored {
        return Err(RegionError::NotScorable(g.id));
    }
    let (cx, cy) = g.centroid;
    let d_r = ((cx - T::of(robot.x)).powi(2) + (cy - T::of(robot.y)).powi(2))
        .sqrt()
        .max(d_floor);
    let robot_term = p.omega_r / d_r;
    if frontier_pts.is_empty() {
        return Ok(ScoreOutcome {
            score: robot_term,
            frontierless: true,
        });
    }
    let mut d: Vec<T> = frontier_pts
        .iter()
        .map(|&(fx, fy)| ((fx - cx).powi(2) + (fy - cy).powi(2)).sqrt())
        .collect();
    let k = p.k.min(d.len());
    if k < d.len() {
        d.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).expect("finite distance"));
        d.truncate(k);
    }
    d.sort_by(|a, b| a.partial_cmp(b).expect("finite distance"));
    let d_f = (d.iter().copied().sum::<T>() / T::of_usize(k)).max(d_floor);
    Ok(ScoreOutcome {
        score: p.omega_f / d_f + robot_term,
        frontierless: false,
    })
}

/// Scores every Boundary and Unobserved region in place.
pub fn score_regions<T: Scalar>(
    grid: &mut RegionGrid<T>,
    frontier_cells: &[GridPos],
    d_m: f64,
    robot: Pose,
    p: &RegionScoreParams<T>,
    d_floor: T,
) {
    let pts: Vec<(T, T)> = frontier_cells
        .iter()
        .map(|c| (T::of((c.x as f64 + 0.5) * d_m), T::of((c.y as f64 + 0.5) * d_m)))
        .collect();
    for g in &mut grid.regions {
        match score_region(g, &pts, robot, p, d_floor) {
            Ok(s) => {
                g.score = Some(s.score);
                g.frontierless = s.frontierless;
            }
            Err(_) => {
                g.score = None;
                g.frontierless = false;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdMode {
    /// Keep regions scoring at least the mean score.
    Mean,
    /// Keep the top `q` fraction (at least one region).
    TopQuantile(f64),
}

/// Ids of retained regions, ascending.
pub fn select_high_score<T: Scalar>(regions: &[Region<T>], mode: ThresholdMode) -> Vec<usize> {
    let scored: Vec<(usize, T)> = regions.iter().filter_map(|g| g.score.map(|s| (g.id, s))).collect();
    if scored.is_empty() {
        return Vec::new();
    }
    let mut out: Vec<usize> = match mode {
        ThresholdMode::Mean => {
            let mean = scored.iter().map(|&(_, s)| s).sum::<T>() / T::of_usize(scored.len());
            // Summation order can push the mean a few ulps above a score equal to it.
            let tol = mean.abs() * T::of(1e-9);
            scored
                .iter()
                .filter(|&&(_, s)| s >= mean - tol)
                .map(|&(id, _)| id)
                .collect()
        }
        ThresholdMode::TopQuantile(q) => {
            let keep = ((q * scored.len() as f64).ceil() as usize).clamp(1, scored.len());
            let mut ranked = rank_regions(regions);
            ranked.truncate(keep);
            ranked
        }
    };
    out.sort_unstable();
    out
}

/// Scored region ids, best first. Scores within a relative 1e-9 of each
/// other tie and fall back to the lower id, which keeps the order stable
/// under uniform rescaling of the weights.
pub fn rank_regions<T: Scalar>(regions: &[Region<T>]) -> Vec<usize> {
    let scored: Vec<(usize, f64)> = regions
        .iter()
        .filter_map(|g| g.score.map(|s| (g.id, s.as_f64())))
        .collect();
    let top = scored.iter().map(|&(_, s)| s.abs()).fold(0.0, f64::max);
    if top == 0.0 {
        return scored.into_iter().map(|(id, _)| id).collect();
    }
    let mut keyed: Vec<(i64, usize)> = scored
        .into_iter()
        .map(|(id, s)| (-((s / top) * 1e9).round() as i64, id))
        .collect();
    keyed.sort_unstable();
    keyed.into_iter().map(|(_, id)| id).collect()
}

/// `region_id,label,score,centroid_x,centroid_y`; unscored regions leave the
/// score empty.
pub fn write_regions_csv<T: Scalar, W: Write>(w: &mut W, grid: &RegionGrid<T>) -> Result<(), RegionError> {
    let io = |e: std::io::Error| RegionError::Io(e.to_string());
    writeln!(w, "region_id,label,score,centroid_x,centroid_y").map_err(io)?;
    for g in &grid.regions {
        let score = g.score.map(|s| format!("{:.6}", s.as_f64())).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{:.3},{:.3}",
            g.id,
            g.label,
            score,
            g.centroid.0.as_f64(),
            g.centroid.1.as_f64()
        )
        .map_err(io)?;
    }
    Ok(())
}
