//! Predicting free nodes in unobserved space: rasterize the observed node
//! lattice, inpaint the unknown mask, threshold, prune and keep only the
//! predictions that fall in credible regions.

mod dataset;
mod heuristic;
mod train;
mod unet;

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use guide_neuralkit::NnError;

use crate::nodegraph::UnknownNode;
use crate::regions::{RegionGrid, RegionLabel};
use crate::world::{Cell, GroundTruthMap, Lattice, LatticePos};
use crate::Scalar;

pub use dataset::{read_dataset, read_record, write_dataset, write_record, PredictionRecord};
pub use heuristic::HeuristicParams;
pub use train::{train_predictor, PredictorTrainConfig, TrainReport};
pub use unet::InpaintNet;

pub const SUPPORTED_SIZES: [usize; 3] = [32, 40, 48];
pub const FREE: u8 = 255;
pub const OCCUPIED: u8 = 0;
pub const MASKED: u8 = 128;

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("lattice of {nx}x{ny} nodes exceeds the largest supported raster ({max}x{max}); increase d_n or shrink the world")]
    TooLarge { nx: usize, ny: usize, max: usize },
    #[error("image size {0} is not supported by this model")]
    UnsupportedShape(usize),
    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: usize, loss: f64 },
    #[error("dataset needs at least {need} records, got {got}")]
    DatasetTooSmall { need: usize, got: usize },
    #[error("malformed dataset: {0}")]
    Format(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for PredictError {
    fn from(e: std::io::Error) -> Self {
        PredictError::Io(e.to_string())
    }
}

/// Tri-valued square raster over the node lattice. Pixel `(x, y)` shows
/// lattice point `offset + (x, y)`; only the top-left `extent_w x extent_h`
/// block lies inside the world, the rest is padding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeImage {
    pub size: usize,
    pub extent_w: usize,
    pub extent_h: usize,
    pub offset: LatticePos,
    pub pixels: Vec<u8>,
}

impl NodeImage {
    pub fn blank(size: usize, extent_w: usize, extent_h: usize) -> Self {
        Self {
            size,
            extent_w,
            extent_h,
            offset: LatticePos::new(0, 0),
            pixels: vec![MASKED; size * size],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.size + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.size + x] = v;
    }

    #[inline]
    pub fn in_extent(&self, x: usize, y: usize) -> bool {
        x < self.extent_w && y < self.extent_h
    }

    pub fn lattice_of(&self, x: usize, y: usize) -> LatticePos {
        LatticePos::new(self.offset.i + x as i32, self.offset.j + y as i32)
    }

    pub fn pixel_of(&self, p: LatticePos) -> Option<(usize, usize)> {
        let x = p.i - self.offset.i;
        let y = p.j - self.offset.j;
        (x >= 0 && y >= 0 && (x as usize) < self.size && (y as usize) < self.size).then(|| (x as usize, y as usize))
    }

    pub fn mask_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p == MASKED).count()
    }
}

/// Per-pixel free probability, same geometry as the source image.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbImage {
    pub size: usize,
    pub values: Vec<f32>,
}

impl ProbImage {
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.size + x]
    }
}

pub fn padded_size(nx: usize, ny: usize) -> Result<usize, PredictError> {
    let need = nx.max(ny);
    SUPPORTED_SIZES
        .iter()
        .copied()
        .find(|&s| s >= need)
        .ok_or(PredictError::TooLarge {
            nx,
            ny,
            max: SUPPORTED_SIZES[SUPPORTED_SIZES.len() - 1],
        })
}

/// Free nodes become 255, obstacle nodes 0, everything else 128.
pub fn rasterize(vf: &[LatticePos], vo: &[LatticePos], lattice: &Lattice) -> Result<NodeImage, PredictError> {
    let size = padded_size(lattice.nx, lattice.ny)?;
    let mut img = NodeImage::blank(size, lattice.nx, lattice.ny);
    for (set, v) in [(vf, FREE), (vo, OCCUPIED)] {
        for &p in set {
            if let Some((x, y)) = img.pixel_of(p) {
                img.set(x, y, v);
            }
        }
    }
    Ok(img)
}

/// Ground-truth target: 255 on free lattice points, 0 elsewhere inside the
/// world, 128 on padding.
pub fn rasterize_truth(gt: &GroundTruthMap, lattice: &Lattice) -> Result<NodeImage, PredictError> {
    let size = padded_size(lattice.nx, lattice.ny)?;
    let mut img = NodeImage::blank(size, lattice.nx, lattice.ny);
    for p in lattice.points() {
        let v = if gt.grid.get(lattice.cell(p)) == Cell::Free {
            FREE
        } else {
            OCCUPIED
        };
        img.set(p.i as usize, p.j as usize, v);
    }
    Ok(img)
}

#[derive(Debug, Clone)]
pub enum PredictorModel {
    Heuristic(HeuristicParams),
    Learned(Box<InpaintNet<f32>>),
    /// Every masked pixel predicted free; a reference floor for accuracy.
    AllFree,
}

impl PredictorModel {
    pub fn kind_name(&self) -> &'static str {
        match self {
            PredictorModel::Heuristic(_) => "heuristic",
            PredictorModel::Learned(_) => "learned",
            PredictorModel::AllFree => "all-free",
        }
    }
}

/// Fills masked pixels with free probabilities; known pixels pass through
/// as 0.0 / 1.0. Masked padding outside the world extent is reported as 0.
pub fn inpaint(m: &PredictorModel, img: &NodeImage) -> Result<ProbImage, PredictError> {
    if !SUPPORTED_SIZES.contains(&img.size) {
        return Err(PredictError::UnsupportedShape(img.size));
    }
    let mut values = match m {
        PredictorModel::Heuristic(p) => heuristic::inpaint(p, img),
        PredictorModel::Learned(net) => net.predict(img)?,
        PredictorModel::AllFree => vec![1.0; img.pixels.len()],
    };
    for y in 0..img.size {
        for x in 0..img.size {
            let i = y * img.size + x;
            match img.pixels[i] {
                FREE => values[i] = 1.0,
                OCCUPIED => values[i] = 0.0,
                _ if !img.in_extent(x, y) => values[i] = 0.0,
                _ => values[i] = values[i].clamp(0.0, 1.0),
            }
        }
    }
    Ok(ProbImage { size: img.size, values })
}

/// Masked in-world pixels with probability at least `tau`.
pub fn binarize(p: &ProbImage, img: &NodeImage, tau: f32) -> Vec<LatticePos> {
    let mut out = Vec::new();
    for y in 0..img.extent_h {
        for x in 0..img.extent_w {
            if img.get(x, y) == MASKED && p.get(x, y) >= tau {
                out.push(img.lattice_of(x, y));
            }
        }
    }
    out
}

fn neighbors8(p: LatticePos) -> impl Iterator<Item = LatticePos> {
    (-1..=1)
        .flat_map(move |dj| (-1..=1).map(move |di| (di, dj)))
        .filter(|&(di, dj)| di != 0 || dj != 0)
        .map(move |(di, dj)| LatticePos::new(p.i + di, p.j + dj))
}

/// Drops predictions with no 8-neighbour among predictions or known-free
/// nodes, then 8-connected prediction components smaller than `c_min` that
/// touch no known-free node.
pub fn prune_isolated(vp: &[LatticePos], vf: &[LatticePos], c_min: usize) -> Vec<LatticePos> {
    let free: HashSet<LatticePos> = vf.iter().copied().collect();
    let all: HashSet<LatticePos> = vp.iter().copied().chain(vf.iter().copied()).collect();
    let kept: Vec<LatticePos> = vp
        .iter()
        .copied()
        .filter(|&p| neighbors8(p).any(|q| all.contains(&q)))
        .collect();
    let index: HashMap<LatticePos, usize> = kept.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    let mut comp = vec![usize::MAX; kept.len()];
    let mut keep = vec![false; kept.len()];
    let mut n_comp = 0;
    for s in 0..kept.len() {
        if comp[s] != usize::MAX {
            continue;
        }
        let mut members = vec![s];
        comp[s] = n_comp;
        let mut head = 0;
        let mut touches = false;
        while head < members.len() {
            let p = kept[members[head]];
            head += 1;
            for q in neighbors8(p) {
                if free.contains(&q) {
                    touches = true;
                }
                if let Some(&qi) = index.get(&q) {
                    if comp[qi] == usize::MAX {
                        comp[qi] = n_comp;
                        members.push(qi);
                    }
                }
            }
        }
        let ok = touches || members.len() >= c_min;
        for m in members {
            keep[m] = ok;
        }
        n_comp += 1;
    }
    kept.into_iter().zip(keep).filter(|&(_, k)| k).map(|(p, _)| p).collect()
}

/// Lattice points whose map cell falls inside region `id`.
fn region_lattice_points<T: Scalar>(regions: &RegionGrid<T>, id: usize, lattice: &Lattice) -> Vec<LatticePos> {
    let g = &regions.regions[id];
    let s = lattice.step as i32;
    let i0 = (g.x0 + s - 1) / s;
    let j0 = (g.y0 + s - 1) / s;
    let i1 = (g.x1 - 1) / s;
    let j1 = (g.y1 - 1) / s;
    let mut out = Vec::new();
    for j in j0..=j1 {
        for i in i0..=i1 {
            out.push(LatticePos::new(i, j));
        }
    }
    out
}

/// Lattice point inside the region nearest to its centroid.
pub fn centroid_node<T: Scalar>(regions: &RegionGrid<T>, id: usize, lattice: &Lattice) -> Option<LatticePos> {
    let (cx, cy) = regions.regions[id].centroid;
    let (cx, cy) = (cx.as_f64(), cy.as_f64());
    region_lattice_points(regions, id, lattice).into_iter().min_by(|a, b| {
        let da = {
            let (x, y) = lattice.pos_m(*a);
            (x - cx).powi(2) + (y - cy).powi(2)
        };
        let db = {
            let (x, y) = lattice.pos_m(*b);
            (x - cx).powi(2) + (y - cy).powi(2)
        };
        da.total_cmp(&db).then(a.cmp(b))
    })
}

/// Keeps predictions of retained Unobserved regions whose prediction density
/// reaches `rho_min`, adding each such region's centroid node.
pub fn region_filter<T: Scalar>(
    vp: &[LatticePos],
    regions: &RegionGrid<T>,
    retained: &[usize],
    rho_min: f64,
    lattice: &Lattice,
) -> Vec<UnknownNode> {
    let mut by_region: HashMap<usize, Vec<LatticePos>> = HashMap::new();
    for &p in vp {
        let id = regions.region_of(lattice.cell(p));
        by_region.entry(id).or_default().push(p);
    }
    let mut out = Vec::new();
    for &id in retained {
        if regions.regions[id].label != RegionLabel::Unobserved {
            continue;
        }
        let capacity = region_lattice_points(regions, id, lattice).len();
        let preds = by_region.get(&id).map(Vec::as_slice).unwrap_or(&[]);
        if capacity == 0 || preds.is_empty() || (preds.len() as f64) < rho_min * capacity as f64 {
            continue;
        }
        out.extend(preds.iter().map(|&coord| UnknownNode { coord, centroid: false }));
        if let Some(c) = centroid_node(regions, id, lattice) {
            match out.iter_mut().find(|u| u.coord == c) {
                Some(u) => u.centroid = true,
                None => out.push(UnknownNode {
                    coord: c,
                    centroid: true,
                }),
            }
        }
    }
    out.sort_by_key(|u| (u.coord.j, u.coord.i));
    out
}

/// Fraction of nodes on ground-truth free cells; `None` for an empty set.
pub fn accuracy(vu: &[LatticePos], gt: &GroundTruthMap, lattice: &Lattice) -> Option<f64> {
    if vu.is_empty() {
        return None;
    }
    let hits = vu.iter().filter(|&&p| gt.is_free(lattice.cell(p))).count();
    Some(hits as f64 / vu.len() as f64)
}

/// Knobs of the prediction pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictParams {
    pub tau: f32,
    pub c_min: usize,
    pub rho_min: f64,
}

impl Default for PredictParams {
    fn default() -> Self {
        Self {
            tau: 0.5,
            c_min: 3,
            rho_min: 0.25,
        }
    }
}

/// Rasterize, inpaint, binarize and prune: the candidate prediction set.
pub fn predict_nodes(
    m: &PredictorModel,
    vf: &[LatticePos],
    vo: &[LatticePos],
    lattice: &Lattice,
    p: &PredictParams,
) -> Result<Vec<LatticePos>, PredictError> {
    let img = rasterize(vf, vo, lattice)?;
    let prob = inpaint(m, &img)?;
    let raw = binarize(&prob, &img, p.tau);
    Ok(prune_isolated(&raw, vf, p.c_min))
}
