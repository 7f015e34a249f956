use crate::diffusion::{
    policy_input, project_actions, sample_actions, Conditioning, DiffusionError, DiffusionPolicy, NoiseSchedule,
};
use crate::nodegraph::{GlobalGraph, NodeKind};
use crate::world::{GridPos, OccupancyMap};

use super::expert::TWO_OPT_PASSES;
use super::tsp::solve_open_tsp;

/// Path (excluding the robot node) from the robot to `target`, or `None` if
/// unreachable.
fn path_to(g: &GlobalGraph<f64>, target: usize) -> Option<Vec<usize>> {
    let sp = g.dijkstra(g.robot);
    sp.reachable(target)
        .then(|| sp.path_to(target).into_iter().skip(1).collect())
}

fn open(g: &GlobalGraph<f64>, i: usize) -> bool {
    i != g.robot && !g.nodes[i].visited
}

/// Unvisited node maximizing utility over geodesic distance; if no node has
/// positive utility, the nearest reachable unknown node.
pub fn utility_fallback(g: &GlobalGraph<f64>) -> Option<Vec<usize>> {
    let sp = g.dijkstra(g.robot);
    let best = (0..g.len())
        .filter(|&i| open(g, i) && sp.reachable(i) && g.nodes[i].utility > 0.0)
        .max_by(|&a, &b| {
            let ra = g.nodes[a].utility / sp.dist[a];
            let rb = g.nodes[b].utility / sp.dist[b];
            ra.total_cmp(&rb).then(b.cmp(&a))
        })
        .or_else(|| {
            (0..g.len())
                .filter(|&i| open(g, i) && sp.reachable(i) && g.nodes[i].kind == NodeKind::Unknown)
                .min_by(|&a, &b| sp.dist[a].total_cmp(&sp.dist[b]).then(a.cmp(&b)))
        })?;
    Some(sp.path_to(best).into_iter().skip(1).collect())
}

/// Last resort for every planner: the reachable unvisited known node closest
/// to any frontier cell (ties by geodesic distance).
pub fn frontier_fallback(g: &GlobalGraph<f64>, frontier_cells: &[GridPos]) -> Option<Vec<usize>> {
    if frontier_cells.is_empty() {
        return None;
    }
    let sp = g.dijkstra(g.robot);
    let best = (0..g.len())
        .filter(|&i| open(g, i) && sp.reachable(i) && g.nodes[i].kind == NodeKind::KnownFree)
        .map(|i| {
            let c = g.lattice.cell(g.nodes[i].coord);
            let near = frontier_cells.iter().map(|f| f.dist2(c)).min().unwrap_or(i64::MAX);
            (near, sp.dist[i], i)
        })
        .min_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)))?;
    path_to(g, best.2)
}

/// Nearest (geodesic) unvisited known node with positive utility.
pub fn plan_nearest_frontier(g: &GlobalGraph<f64>) -> Option<Vec<usize>> {
    let sp = g.dijkstra(g.robot);
    let best = (0..g.len())
        .filter(|&i| {
            open(g, i) && sp.reachable(i) && g.nodes[i].kind == NodeKind::KnownFree && g.nodes[i].utility > 0.0
        })
        .min_by(|&a, &b| sp.dist[a].total_cmp(&sp.dist[b]).then(a.cmp(&b)))?;
    Some(sp.path_to(best).into_iter().skip(1).collect())
}

/// Candidates are unvisited nodes with positive utility plus unknown-region
/// centroids; they are ordered by nearest-neighbour + 2-opt over graph
/// geodesics and the path to the first one is returned.
pub fn plan_graph_tsp(g: &GlobalGraph<f64>) -> Option<Vec<usize>> {
    let root = g.dijkstra(g.robot);
    let cands: Vec<usize> = (0..g.len())
        .filter(|&i| open(g, i) && root.reachable(i) && (g.nodes[i].utility > 0.0 || g.nodes[i].centroid))
        .collect();
    if cands.is_empty() {
        return None;
    }
    let mut pts = vec![g.robot];
    pts.extend(&cands);
    let trees: Vec<_> = std::iter::once(root)
        .chain(cands.iter().map(|&c| g.dijkstra(c)))
        .collect();
    let m: Vec<Vec<f64>> = trees.iter().map(|t| pts.iter().map(|&q| t.dist[q]).collect()).collect();
    let order = solve_open_tsp(&m, TWO_OPT_PASSES);
    let first = pts[order[1]];
    Some(trees[0].path_to(first).into_iter().skip(1).collect())
}

/// Output of one diffusion planning call.
#[derive(Debug, Clone)]
pub struct GuidePlan {
    pub path: Vec<usize>,
    /// This step's encoding, kept as history for the next call.
    pub embedding: Vec<f32>,
    pub fallback: bool,
}

/// Samples an action sequence from the policy, projects it onto the graph and
/// falls back to the utility rule when the projection is empty.
pub fn plan_guide(
    g: &GlobalGraph<f64>,
    o: &OccupancyMap,
    policy: &DiffusionPolicy<f32>,
    sched: &NoiseSchedule<f32>,
    history: &[Vec<f32>],
    seed: u64,
) -> Result<GuidePlan, DiffusionError> {
    let cfg = policy.config();
    let input = policy_input::<f32, f64>(g, o, cfg)?;
    let z = policy.embed(&input)?;
    let cond = Conditioning::new(z.clone(), history, cfg.t_o).flat();
    let actions = sample_actions(policy, &cond, sched, seed)?;
    let path = project_actions(&actions, g);
    if path.is_empty() {
        return Ok(GuidePlan {
            path: utility_fallback(g).unwrap_or_default(),
            embedding: z,
            fallback: true,
        });
    }
    Ok(GuidePlan {
        path,
        embedding: z,
        fallback: false,
    })
}
