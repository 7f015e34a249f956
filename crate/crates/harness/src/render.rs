//! PPM snapshots of an episode: belief, regions, unknown nodes, plan and
//! trajectory.

use std::io::Write;
use std::path::{Path, PathBuf};

use guide_core::planner::{EpisodeConfig, Explorer, Models, StepView};
use guide_core::regions::RegionLabel;
use guide_core::world::{Cell, GridPos, Lattice, LatticePos, OccupancyMap, Supercover};

use crate::{create_file, io_err, HarnessError};

pub type Rgb = [u8; 3];

const UNKNOWN: Rgb = [128, 128, 128];
const FREE: Rgb = [255, 255, 255];
const OCCUPIED: Rgb = [0, 0, 0];
const BOUNDARY: Rgb = [255, 190, 0];
const UNOBSERVED: Rgb = [70, 130, 255];
const REGION_EDGE: Rgb = [200, 200, 200];
const UNKNOWN_NODE: Rgb = [230, 0, 230];
const PLAN: Rgb = [0, 170, 0];
const TRAJECTORY: Rgb = [220, 0, 0];

/// RGB raster with `scale` pixels per map cell and north up.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Rgb>,
    scale: usize,
    cells_h: usize,
}

impl Image {
    pub fn new(cells_w: usize, cells_h: usize, scale: usize) -> Self {
        Self {
            width: cells_w * scale,
            height: cells_h * scale,
            pixels: vec![UNKNOWN; cells_w * cells_h * scale * scale],
            scale,
            cells_h,
        }
    }

    fn blend(a: Rgb, b: Rgb, t: f32) -> Rgb {
        std::array::from_fn(|i| (a[i] as f32 * (1.0 - t) + b[i] as f32 * t).round() as u8)
    }

    pub fn cell_pixel(&self, c: GridPos) -> (usize, usize) {
        (
            c.x as usize * self.scale,
            (self.cells_h - 1 - c.y as usize) * self.scale,
        )
    }

    fn paint_cell(&mut self, c: GridPos, f: impl Fn(Rgb) -> Rgb) {
        if c.x < 0 || c.y < 0 || c.y as usize >= self.cells_h || (c.x as usize + 1) * self.scale > self.width {
            return;
        }
        let (px, py) = self.cell_pixel(c);
        for y in py..py + self.scale {
            for x in px..px + self.scale {
                let p = &mut self.pixels[y * self.width + x];
                *p = f(*p);
            }
        }
    }

    fn line(&mut self, a: GridPos, b: GridPos, color: Rgb) {
        for c in Supercover::new(a, b) {
            self.paint_cell(c, |_| color);
        }
    }

    pub fn write_ppm<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        write!(w, "P6\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self.pixels.iter().flatten().copied().collect();
        w.write_all(&bytes)
    }
}

/// Layers, back to front: occupancy, region tint by label with region
/// outlines, unknown nodes, planned path, executed trajectory.
pub fn render_step(
    o: &OccupancyMap,
    lattice: &Lattice,
    view: &StepView,
    plan: &[LatticePos],
    trajectory: &[LatticePos],
    scale: usize,
) -> Image {
    let g = o.grid();
    let mut img = Image::new(g.width(), g.height(), scale.max(1));
    for p in g.positions() {
        let base = match o.get(p) {
            Cell::Unknown => UNKNOWN,
            Cell::Free => FREE,
            Cell::Occupied => OCCUPIED,
        };
        let r = &view.regions.regions[view.regions.region_of(p)];
        let color = match r.label {
            RegionLabel::Explored => base,
            RegionLabel::Boundary => Image::blend(base, BOUNDARY, 0.35),
            RegionLabel::Unobserved => Image::blend(base, UNOBSERVED, 0.35),
        };
        let edge = p.x == r.x0 || p.y == r.y0;
        img.paint_cell(p, |_| {
            if edge {
                Image::blend(color, REGION_EDGE, 0.5)
            } else {
                color
            }
        });
    }
    for u in &view.vu {
        let c = lattice.cell(u.coord);
        for dy in -1..=1 {
            for dx in -1..=1 {
                img.paint_cell(
                    GridPos {
                        x: c.x + dx,
                        y: c.y + dy,
                    },
                    |_| UNKNOWN_NODE,
                );
            }
        }
    }
    let mut draw_path = |path: &[LatticePos], color: Rgb| {
        for w in path.windows(2) {
            img.line(lattice.cell(w[0]), lattice.cell(w[1]), color);
        }
    };
    draw_path(plan, PLAN);
    draw_path(trajectory, TRAJECTORY);
    img
}

/// Output of [`render_episode`].
#[derive(Debug, Clone, Default)]
pub struct RenderOutput {
    pub images: Vec<PathBuf>,
    pub dumps: Vec<PathBuf>,
}

/// Runs one episode and writes a snapshot at each requested planning step,
/// optionally with the region table and graph of that step.
pub fn render_episode(
    cfg: &EpisodeConfig,
    models: &Models,
    steps: &[usize],
    out: &Path,
    dump_regions: bool,
    dump_graph: bool,
) -> Result<RenderOutput, HarnessError> {
    let mut ex = Explorer::new(cfg.clone(), models.clone())?;
    ex.record_view = true;
    let last = steps.iter().copied().max().unwrap_or(0);
    let mut res = RenderOutput::default();
    let stem = format!("{}_{}", cfg.policy, cfg.world_seed);
    for s in 0..=last {
        let want = steps.contains(&s);
        let before = want.then(|| ex.o.clone());
        ex.last_view = None;
        if !ex.step()? {
            break;
        }
        let (Some(o), Some(view)) = (before, ex.last_view.take()) else {
            continue;
        };
        let plan = &ex.trace.steps[s].plan;
        let mut path_plan = vec![ex.trace.steps[s].robot];
        path_plan.extend(plan);
        let positions = ex.trace.positions();
        let upto: usize = 1 + ex.trace.steps[..s].iter().map(|r| r.executed.len()).sum::<usize>();
        let img = render_step(&o, &ex.lattice, &view, &path_plan, &positions[..upto], 3);
        let path = out.join(format!("{stem}_{s:04}.ppm"));
        img.write_ppm(&mut create_file(&path)?).map_err(io_err(&path))?;
        res.images.push(path);
        if dump_regions {
            let path = out.join(format!("{stem}_{s:04}_regions.csv"));
            guide_core::regions::write_regions_csv(&mut create_file(&path)?, &view.regions)?;
            res.dumps.push(path);
        }
        if dump_graph {
            for (kind, write) in [("nodes", true), ("edges", false)] {
                let path = out.join(format!("{stem}_{s:04}_{kind}.csv"));
                let mut f = create_file(&path)?;
                if write {
                    view.graph.write_nodes_csv(&mut f)?;
                } else {
                    view.graph.write_edges_csv(&mut f)?;
                }
                res.dumps.push(path);
            }
        }
    }
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_header_and_size() {
        let img = Image::new(4, 3, 2);
        let mut buf = Vec::new();
        img.write_ppm(&mut buf).unwrap();
        let header = b"P6\n8 6\n255\n";
        assert_eq!(&buf[..header.len()], header);
        assert_eq!(buf.len(), header.len() + 8 * 6 * 3);
    }

    #[test]
    fn north_is_up() {
        let mut img = Image::new(4, 3, 1);
        img.paint_cell(GridPos { x: 1, y: 2 }, |_| PLAN);
        assert_eq!(img.pixels[1], PLAN);
        img.paint_cell(GridPos { x: 9, y: 0 }, |_| PLAN);
    }
}
