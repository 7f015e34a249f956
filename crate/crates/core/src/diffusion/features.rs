use guide_neuralkit::Tensor;

use crate::nodegraph::{GlobalGraph, NodeKind};
use crate::world::{Cell, OccupancyMap, Pose};
use crate::Scalar;

use super::{DiffusionError, PolicyConfig};

pub const NODE_FEATURES: usize = 10;
pub const CROP_CHANNELS: usize = 2;
const UNREACHABLE: f64 = 2.0;

/// Raw encoder inputs for one planning step: a `[N, 8]` node feature matrix
/// and a `[2, S, S]` egocentric crop (occupied and unknown fractions).
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyInput<T> {
    pub nodes: Tensor<T>,
    pub crop: Tensor<T>,
}

impl<T: Scalar> PolicyInput<T> {
    pub fn node_count(&self) -> usize {
        self.nodes.rows()
    }

    pub fn cast<U: Scalar>(&self) -> PolicyInput<U> {
        PolicyInput {
            nodes: self.nodes.cast(),
            crop: self.crop.cast(),
        }
    }
}

/// Node ids fed to the encoder: everything when under the cap, otherwise the
/// robot node, every unknown node and the highest-utility known nodes.
pub fn select_nodes<G: Scalar>(g: &GlobalGraph<G>, cap: usize) -> Vec<usize> {
    if g.len() <= cap {
        return (0..g.len()).collect();
    }
    let mut keep: Vec<usize> = (0..g.len())
        .filter(|&i| i == g.robot || g.nodes[i].kind == NodeKind::Unknown)
        .collect();
    let mut known: Vec<usize> = (0..g.len())
        .filter(|&i| i != g.robot && g.nodes[i].kind == NodeKind::KnownFree)
        .collect();
    known.sort_by(|&a, &b| {
        g.nodes[b]
            .utility
            .partial_cmp(&g.nodes[a].utility)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let room = cap.saturating_sub(keep.len());
    keep.extend(known.into_iter().take(room));
    keep.truncate(cap.max(1));
    keep.sort_unstable();
    keep
}

/// Robot-relative node features: offset, geodesic distance, unknown flag,
/// scaled utility, visited and centroid flags, the direction of the first
/// move on the shortest path to the node, and the robot flag last.
pub fn node_features<T: Scalar, G: Scalar>(
    g: &GlobalGraph<G>,
    cfg: &PolicyConfig,
) -> Result<Tensor<T>, DiffusionError> {
    if g.is_empty() {
        return Err(DiffusionError::EmptyGraph);
    }
    let ids = select_nodes(g, cfg.node_cap);
    let sp = g.dijkstra(g.robot);
    let hop = first_hops(&sp, g.robot);
    let (rx, ry) = g.pos_m(g.robot);
    let d_n = g.lattice.d_n;
    let s = cfg.pos_scale_m;
    let mut data = Vec::with_capacity(ids.len() * NODE_FEATURES);
    for &i in &ids {
        let n = &g.nodes[i];
        let (x, y) = g.pos_m(i);
        let geo = sp.dist[i].as_f64();
        let geo = if geo.is_finite() {
            (geo / (2.0 * s)).min(UNREACHABLE)
        } else {
            UNREACHABLE
        };
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        let (hx, hy) = match hop[i] {
            Some(h) => {
                let (x, y) = g.pos_m(h);
                ((x - rx) / d_n, (y - ry) / d_n)
            }
            None => (0.0, 0.0),
        };
        let row = [
            (x - rx) / s,
            (y - ry) / s,
            geo,
            flag(n.kind == NodeKind::Unknown),
            n.utility.as_f64() / cfg.utility_scale,
            flag(n.visited),
            flag(n.centroid),
            hx,
            hy,
            flag(i == g.robot),
        ];
        data.extend(row.iter().map(|&v| T::of(v)));
    }
    Ok(Tensor::from_vec(&[ids.len(), NODE_FEATURES], data)?)
}

/// Neighbor of the source that starts the shortest path to each node.
fn first_hops<T: Scalar>(sp: &crate::nodegraph::ShortestPaths<T>, source: usize) -> Vec<Option<usize>> {
    let mut order: Vec<usize> = (0..sp.dist.len()).filter(|&v| sp.reachable(v) && v != source).collect();
    order.sort_by(|&a, &b| sp.dist[a].partial_cmp(&sp.dist[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut hop = vec![None; sp.dist.len()];
    for v in order {
        let p = sp.prev[v];
        hop[v] = if p == source {
            Some(v)
        } else {
            hop.get(p).copied().flatten()
        };
    }
    hop
}

/// Egocentric crop of side `crop_side_m` centred on the pose. Each output
/// pixel averages a 2x2 grid of point samples; outside the map reads Occupied.
pub fn observation_crop<T: Scalar>(o: &OccupancyMap, pose: Pose, cfg: &PolicyConfig) -> Tensor<T> {
    let px = cfg.crop_px;
    let side = cfg.crop_side_m;
    let cell_m = side / px as f64;
    let (x0, y0) = (pose.x - side / 2.0, pose.y - side / 2.0);
    let grid = o.grid();
    let mut data = vec![T::zero(); CROP_CHANNELS * px * px];
    let quarter = T::of(0.25);
    for v in 0..px {
        for u in 0..px {
            for (su, sv) in [(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)] {
                let x = x0 + (u as f64 + su) * cell_m;
                let y = y0 + (v as f64 + sv) * cell_m;
                match grid.get(grid.cell_at(x, y)) {
                    Cell::Occupied => data[v * px + u] += quarter,
                    Cell::Unknown => data[px * px + v * px + u] += quarter,
                    Cell::Free => {}
                }
            }
        }
    }
    Tensor::from_vec(&[CROP_CHANNELS, px, px], data).expect("crop shape")
}

pub fn policy_input<T: Scalar, G: Scalar>(
    g: &GlobalGraph<G>,
    o: &OccupancyMap,
    cfg: &PolicyConfig,
) -> Result<PolicyInput<T>, DiffusionError> {
    let nodes = node_features(g, cfg)?;
    let (x, y) = g.pos_m(g.robot);
    Ok(PolicyInput {
        nodes,
        crop: observation_crop(o, Pose::new(x, y), cfg),
    })
}
