use std::collections::{BinaryHeap, HashSet};

use crate::nodegraph::{assemble_graph, sample_free_nodes, GlobalGraph, GraphInputs};
use crate::world::{
    sense_and_update, Cell, GroundTruthMap, Lattice, LatticePos, OccupancyMap, Pose, SensingMode, SensorModel,
};

use super::tsp::solve_open_tsp;
use super::PlanError;

pub const TWO_OPT_PASSES: usize = 500;

/// Ground-truth coverage tour.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertPlan {
    /// Chosen view nodes in visiting order, excluding the start.
    pub views: Vec<LatticePos>,
    /// Expanded lattice path, starting at the start node.
    pub path: Vec<LatticePos>,
    pub length_m: f64,
}

impl ExpertPlan {
    pub fn moves(&self) -> usize {
        self.path.len().saturating_sub(1)
    }
}

/// Every lattice point on ground-truth free space, with edges whose cells
/// are all free.
pub fn ground_truth_graph(
    gt: &GroundTruthMap,
    lattice: &Lattice,
    start: LatticePos,
) -> Result<GlobalGraph<f64>, PlanError> {
    let full = OccupancyMap::from_grid(gt.grid.clone());
    let vf = sample_free_nodes(&full, lattice);
    let (x, y) = lattice.pos_m(start);
    let visited = HashSet::new();
    Ok(assemble_graph(&GraphInputs {
        o: &full,
        lattice: *lattice,
        vf: &vf,
        vu: &[],
        r_m: lattice.d_n,
        robot: Pose::new(x, y),
        visited: &visited,
    })?)
}

/// Cells visible from a lattice point under per-cell visibility at range `r_m`.
pub fn visible_cells(gt: &GroundTruthMap, lattice: &Lattice, v: LatticePos, r_m: f64) -> Vec<usize> {
    let mut o = OccupancyMap::unknown_like(gt);
    let (x, y) = lattice.pos_m(v);
    let s = SensorModel::new(r_m, 360).with_mode(SensingMode::PerCell);
    sense_and_update(gt, &mut o, Pose::new(x, y), &s)
        .map(|cells| cells.into_iter().map(|c| gt.grid.index(c)).collect())
        .unwrap_or_default()
}

/// Greedy set cover of the reachable free cells by view nodes, then a
/// nearest-neighbour + 2-opt ordering over ground-truth geodesics, expanded
/// into a lattice path from `start`.
pub fn expert_trajectory(gt: &GroundTruthMap, start: LatticePos, d_n: f64, r_m: f64) -> Result<ExpertPlan, PlanError> {
    let lattice = Lattice::new(&gt.grid, d_n)?;
    let g = ground_truth_graph(gt, &lattice, start)?;
    let start_id = g.node_at(start).ok_or(PlanError::StartNotFree(start))?;
    let reachable = gt.reachable_from(lattice.cell(start));
    let from_start = g.dijkstra(start_id);

    let candidates: Vec<usize> = (0..g.len()).filter(|&i| from_start.reachable(i)).collect();
    let useful = |c: usize| reachable[c] && gt.grid.cells()[c] == Cell::Free;
    let sets: Vec<Vec<usize>> = candidates
        .iter()
        .map(|&i| {
            visible_cells(gt, &lattice, g.nodes[i].coord, r_m)
                .into_iter()
                .filter(|&c| useful(c))
                .collect()
        })
        .collect();
    let mut covered = vec![false; gt.grid.cells().len()];
    if let Some(k) = candidates.iter().position(|&i| i == start_id) {
        for &c in &sets[k] {
            covered[c] = true;
        }
    }
    // Lazy greedy: stored gains are upper bounds, re-evaluated on pop.
    let mut heap: BinaryHeap<(usize, std::cmp::Reverse<usize>)> = sets
        .iter()
        .enumerate()
        .map(|(k, s)| (s.iter().filter(|&&c| !covered[c]).count(), std::cmp::Reverse(k)))
        .filter(|&(gain, _)| gain > 0)
        .collect();
    let mut chosen = Vec::new();
    while let Some((gain, std::cmp::Reverse(k))) = heap.pop() {
        let fresh = sets[k].iter().filter(|&&c| !covered[c]).count();
        if fresh == 0 {
            continue;
        }
        if fresh < gain {
            heap.push((fresh, std::cmp::Reverse(k)));
            continue;
        }
        for &c in &sets[k] {
            covered[c] = true;
        }
        chosen.push(candidates[k]);
    }

    let mut pts = vec![start_id];
    pts.extend(chosen.iter().copied().filter(|&v| v != start_id));
    let trees: Vec<_> = pts.iter().map(|&p| g.dijkstra(p)).collect();
    let m: Vec<Vec<f64>> = trees.iter().map(|t| pts.iter().map(|&q| t.dist[q]).collect()).collect();
    let order = solve_open_tsp(&m, TWO_OPT_PASSES);

    let mut path = vec![start];
    let mut length_m = 0.0;
    for w in order.windows(2) {
        let seg = trees[w[0]].path_to(pts[w[1]]);
        length_m += m[w[0]][w[1]];
        path.extend(seg.into_iter().skip(1).map(|i| g.nodes[i].coord));
    }
    Ok(ExpertPlan {
        views: order.iter().skip(1).map(|&k| g.nodes[pts[k]].coord).collect(),
        path,
        length_m,
    })
}

/// Re-plans the ground-truth coverage tour from arbitrary states: greedy set
/// cover of the reachable free cells still unknown in a belief, ordered from
/// the robot's node. The first view node of the last plan stays first while
/// it still has something to reveal, which keeps successive plans
/// consistent. Visibility sets are computed once per world.
pub struct ExpertRelabeler {
    graph: GlobalGraph<f64>,
    sets: Vec<Vec<usize>>,
    target: Option<usize>,
}

impl ExpertRelabeler {
    pub fn new(gt: &GroundTruthMap, lattice: &Lattice, start: LatticePos, r_m: f64) -> Result<Self, PlanError> {
        let graph = ground_truth_graph(gt, lattice, start)?;
        let reachable = gt.reachable_from(lattice.cell(start));
        let sets = graph
            .nodes
            .iter()
            .map(|n| {
                visible_cells(gt, lattice, n.coord, r_m)
                    .into_iter()
                    .filter(|&c| reachable[c] && gt.grid.cells()[c] == Cell::Free)
                    .collect()
            })
            .collect();
        Ok(Self {
            graph,
            sets,
            target: None,
        })
    }

    /// Lattice path (excluding `from`) through the view nodes that cover what
    /// `o` has not observed yet. Empty when nothing is left to see.
    pub fn plan_from(&mut self, from: LatticePos, o: &OccupancyMap) -> Vec<LatticePos> {
        let Some(root) = self.graph.node_at(from) else {
            return Vec::new();
        };
        let g = &self.graph;
        let sp = g.dijkstra(root);
        let cells = o.grid().cells();
        let mut covered: Vec<bool> = cells.iter().map(|&c| c != Cell::Unknown).collect();
        let fresh = |i: usize, covered: &[bool]| self.sets[i].iter().filter(|&&c| !covered[c]).count();
        let commit = self
            .target
            .filter(|&t| t != root && sp.reachable(t) && fresh(t, &covered) > 0);
        let mut chosen = Vec::new();
        if let Some(t) = commit {
            for &c in &self.sets[t] {
                covered[c] = true;
            }
            chosen.push(t);
        }
        let mut heap: BinaryHeap<(usize, std::cmp::Reverse<usize>)> = (0..self.sets.len())
            .filter(|&i| sp.reachable(i))
            .map(|i| (fresh(i, &covered), std::cmp::Reverse(i)))
            .filter(|&(gain, _)| gain > 0)
            .collect();
        while let Some((gain, std::cmp::Reverse(i))) = heap.pop() {
            let f = fresh(i, &covered);
            if f == 0 {
                continue;
            }
            if f < gain {
                heap.push((f, std::cmp::Reverse(i)));
                continue;
            }
            for &c in &self.sets[i] {
                covered[c] = true;
            }
            chosen.push(i);
        }
        if chosen.is_empty() {
            self.target = None;
            return Vec::new();
        }
        // With a commitment the tour is solved from the committed node.
        let head = if commit.is_some() { chosen[0] } else { root };
        let mut pts = vec![head];
        pts.extend(chosen.iter().copied().filter(|&v| v != head && v != root));
        let trees: Vec<_> = pts.iter().map(|&p| g.dijkstra(p)).collect();
        let m: Vec<Vec<f64>> = trees.iter().map(|t| pts.iter().map(|&q| t.dist[q]).collect()).collect();
        let order: Vec<usize> = solve_open_tsp(&m, TWO_OPT_PASSES).into_iter().map(|k| pts[k]).collect();
        let mut stops = Vec::with_capacity(order.len() + 1);
        if commit.is_some() {
            stops.push(root);
        }
        stops.extend(order);
        self.target = stops.get(1).copied();
        let mut path = Vec::new();
        for w in stops.windows(2) {
            let t = if w[0] == root {
                &sp
            } else {
                &trees[pts.iter().position(|&p| p == w[0]).unwrap()]
            };
            path.extend(t.path_to(w[1]).into_iter().skip(1).map(|i| g.nodes[i].coord));
        }
        path
    }
}
