//! The global graph: known-free and predicted nodes, node utility and
//! feasibility edges.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::io::Write;

use thiserror::Error;

use crate::world::{frontiers, raycast, Cell, GridPos, Lattice, LatticePos, OccupancyMap, Pose, RayHit, Supercover};
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("no known-free node within {radius_m} m of the robot at ({x:.2}, {y:.2})")]
    RobotUnsnapped { x: f64, y: f64, radius_m: f64 },
    #[error("io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    KnownFree,
    Unknown,
}

/// A member of the unknown node set, remembering whether it stands for a
/// region centroid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct UnknownNode {
    pub coord: LatticePos,
    pub centroid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node<T> {
    pub coord: LatticePos,
    pub kind: NodeKind,
    pub centroid: bool,
    pub visited: bool,
    pub neighbors: Vec<usize>,
    pub utility: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge<T> {
    pub a: usize,
    pub b: usize,
    pub length: T,
}

#[derive(Debug, Clone)]
pub struct GlobalGraph<T> {
    pub nodes: Vec<Node<T>>,
    pub edges: Vec<Edge<T>>,
    pub robot: usize,
    pub lattice: Lattice,
    index: HashMap<LatticePos, usize>,
}

/// One node per lattice point whose map cell is Free.
pub fn sample_free_nodes(o: &OccupancyMap, lattice: &Lattice) -> Vec<LatticePos> {
    lattice
        .points()
        .filter(|&p| o.get(lattice.cell(p)) == Cell::Free)
        .collect()
}

/// Lattice points on observed Occupied cells.
pub fn obstacle_nodes(o: &OccupancyMap, lattice: &Lattice) -> Vec<LatticePos> {
    lattice
        .points()
        .filter(|&p| o.get(lattice.cell(p)) == Cell::Occupied)
        .collect()
}

/// Number of cells on the midpoint circle of `radius` cells.
pub fn circle_cell_count(radius: i32) -> usize {
    if radius <= 0 {
        return 1;
    }
    let mut pts = HashSet::new();
    let (mut x, mut y, mut err) = (radius, 0i32, 1 - radius);
    while x >= y {
        for (a, b) in [(x, y), (y, x), (-y, x), (-x, y), (-x, -y), (-y, -x), (y, -x), (x, -y)] {
            pts.insert((a, b));
        }
        y += 1;
        if err < 0 {
            err += 2 * y + 1;
        } else {
            x -= 1;
            err += 2 * (y - x) + 1;
        }
    }
    pts.len()
}

/// Precomputed inputs shared by every utility evaluation at one step.
pub struct UtilityContext<'a> {
    o: &'a OccupancyMap,
    lattice: Lattice,
    frontier: Vec<bool>,
    unknown_nodes: HashSet<LatticePos>,
    cell_disc: Vec<(i32, i32)>,
    node_disc: Vec<(i32, i32)>,
    pub f_max: usize,
}

impl<'a> UtilityContext<'a> {
    pub fn new(o: &'a OccupancyMap, lattice: Lattice, vu: &[UnknownNode], r_m: f64) -> Self {
        let g = o.grid();
        let mut frontier = vec![false; g.cells().len()];
        for p in frontiers(o) {
            frontier[g.index(p)] = true;
        }
        let rc = r_m / g.resolution();
        let ri = rc.ceil() as i32;
        let mut cell_disc = Vec::new();
        for dy in -ri..=ri {
            for dx in -ri..=ri {
                if ((dx * dx + dy * dy) as f64) <= rc * rc + 1e-9 {
                    cell_disc.push((dx, dy));
                }
            }
        }
        let rn = r_m / lattice.d_n;
        let ni = rn.ceil() as i32;
        let mut node_disc = Vec::new();
        for dj in -ni..=ni {
            for di in -ni..=ni {
                if ((di * di + dj * dj) as f64) <= rn * rn + 1e-9 {
                    node_disc.push((di, dj));
                }
            }
        }
        Self {
            o,
            lattice,
            frontier,
            unknown_nodes: vu.iter().map(|u| u.coord).collect(),
            cell_disc,
            node_disc,
            f_max: circle_cell_count(rc.round() as i32),
        }
    }

    /// Frontier cells within r with an unobstructed line from `v`.
    pub fn visible_frontiers(&self, v: LatticePos) -> usize {
        let g = self.o.grid();
        let c = self.lattice.cell(v);
        self.cell_disc
            .iter()
            .map(|&(dx, dy)| GridPos::new(c.x + dx, c.y + dy))
            .filter(|&p| g.in_bounds(p) && self.frontier[g.index(p)])
            .filter(|&p| raycast(g, c, p) == RayHit::Clear)
            .count()
    }

    /// (unknown nodes within r, lattice points on Unknown cells within r, floored at 1).
    pub fn prediction_counts(&self, v: LatticePos) -> (usize, usize) {
        let mut n_p = 0;
        let mut n_pm = 0;
        for &(di, dj) in &self.node_disc {
            let q = LatticePos::new(v.i + di, v.j + dj);
            if !self.lattice.contains(q) {
                continue;
            }
            if self.unknown_nodes.contains(&q) {
                n_p += 1;
            }
            if self.o.get(self.lattice.cell(q)) == Cell::Unknown {
                n_pm += 1;
            }
        }
        (n_p, n_pm.max(1))
    }

    pub fn utility<T: Scalar>(&self, v: LatticePos, kind: NodeKind) -> T {
        if kind == NodeKind::Unknown {
            return T::zero();
        }
        let f = self.visible_frontiers(v);
        let (n_p, n_pm) = self.prediction_counts(v);
        utility_formula(self.f_max, f, n_p, n_pm)
    }
}

/// `min(F_m, F * (1 + N_p / N_pm))`.
pub fn utility_formula<T: Scalar>(f_max: usize, f: usize, n_p: usize, n_pm: usize) -> T {
    let v = T::of_usize(f) * (T::one() + T::of_usize(n_p) / T::of_usize(n_pm.max(1)));
    v.min(T::of_usize(f_max))
}

pub fn node_utility<T: Scalar>(
    v: LatticePos,
    kind: NodeKind,
    o: &OccupancyMap,
    lattice: Lattice,
    vu: &[UnknownNode],
    r_m: f64,
) -> T {
    UtilityContext::new(o, lattice, vu, r_m).utility(v, kind)
}

/// Keeps known-free utilities between steps and recomputes only nodes whose
/// inputs may have changed: nodes within `scope_m` of a changed cell and
/// nodes within r of an added or removed unknown node.
#[derive(Debug, Clone, Default)]
pub struct UtilityCache<T> {
    util: HashMap<LatticePos, T>,
    unknown: HashSet<LatticePos>,
    primed: bool,
    pub recomputed: usize,
}

impl<T: Scalar> UtilityCache<T> {
    pub fn new() -> Self {
        Self {
            util: HashMap::new(),
            unknown: HashSet::new(),
            primed: false,
            recomputed: 0,
        }
    }

    pub fn update(
        &mut self,
        ctx: &UtilityContext<'_>,
        vf: &[LatticePos],
        changed_cells: &[GridPos],
        scope_m: f64,
    ) -> Vec<T> {
        let lat = ctx.lattice;
        let mut dirty = vec![!self.primed; lat.nx * lat.ny];
        let at = |p: LatticePos| p.j as usize * lat.nx + p.i as usize;
        if self.primed {
            let sc = scope_m / lat.d_m;
            let span = (scope_m / lat.d_n).ceil() as i32 + 1;
            for &c in changed_cells {
                let ci = c.x / lat.step as i32;
                let cj = c.y / lat.step as i32;
                for j in (cj - span).max(0)..=(cj + span).min(lat.ny as i32 - 1) {
                    for i in (ci - span).max(0)..=(ci + span).min(lat.nx as i32 - 1) {
                        let q = LatticePos::new(i, j);
                        if lat.cell(q).dist2(c) as f64 <= sc * sc + 1e-9 {
                            dirty[at(q)] = true;
                        }
                    }
                }
            }
            let flipped: Vec<LatticePos> = ctx.unknown_nodes.symmetric_difference(&self.unknown).copied().collect();
            for u in flipped {
                for &(di, dj) in &ctx.node_disc {
                    let q = LatticePos::new(u.i + di, u.j + dj);
                    if lat.contains(q) {
                        dirty[at(q)] = true;
                    }
                }
            }
        }
        let mut next = HashMap::with_capacity(vf.len());
        let mut out = Vec::with_capacity(vf.len());
        for &v in vf {
            let u = match self.util.get(&v) {
                Some(&u) if !dirty[at(v)] => u,
                _ => {
                    self.recomputed += 1;
                    ctx.utility(v, NodeKind::KnownFree)
                }
            };
            next.insert(v, u);
            out.push(u);
        }
        self.util = next;
        self.unknown = ctx.unknown_nodes.clone();
        self.primed = true;
        out
    }
}

fn edge_clear(o: &OccupancyMap, a: GridPos, b: GridPos, both_known: bool) -> bool {
    Supercover::new(a, b).all(|p| match o.get(p) {
        Cell::Free => true,
        Cell::Unknown => !both_known,
        Cell::Occupied => false,
    })
}

const FORWARD: [(i32, i32); 4] = [(1, 0), (-1, 1), (0, 1), (1, 1)];

/// Edges between lattice-adjacent nodes (Chebyshev distance 1).
pub fn build_edges<T: Scalar>(nodes: &[(LatticePos, NodeKind)], o: &OccupancyMap, lattice: &Lattice) -> Vec<Edge<T>> {
    let index: HashMap<LatticePos, usize> = nodes.iter().enumerate().map(|(i, n)| (n.0, i)).collect();
    let mut edges = Vec::new();
    for (a, &(pa, ka)) in nodes.iter().enumerate() {
        for (di, dj) in FORWARD {
            let pb = LatticePos::new(pa.i + di, pa.j + dj);
            let Some(&b) = index.get(&pb) else { continue };
            let both_known = ka == NodeKind::KnownFree && nodes[b].1 == NodeKind::KnownFree;
            if edge_clear(o, lattice.cell(pa), lattice.cell(pb), both_known) {
                edges.push(Edge {
                    a: a.min(b),
                    b: a.max(b),
                    length: T::of(lattice.dist_m(pa, pb)),
                });
            }
        }
    }
    edges
}

pub struct GraphInputs<'a> {
    pub o: &'a OccupancyMap,
    pub lattice: Lattice,
    pub vf: &'a [LatticePos],
    pub vu: &'a [UnknownNode],
    pub r_m: f64,
    pub robot: Pose,
    pub visited: &'a HashSet<LatticePos>,
}

/// Builds the graph, computing every utility from scratch.
pub fn assemble_graph<T: Scalar>(inp: &GraphInputs<'_>) -> Result<GlobalGraph<T>, GraphError> {
    let ctx = UtilityContext::new(inp.o, inp.lattice, inp.vu, inp.r_m);
    let utils: Vec<T> = inp.vf.iter().map(|&v| ctx.utility(v, NodeKind::KnownFree)).collect();
    assemble_with_utilities(inp, &utils)
}

/// Builds the graph reusing cached utilities where their inputs are unchanged.
pub fn assemble_graph_cached<T: Scalar>(
    inp: &GraphInputs<'_>,
    cache: &mut UtilityCache<T>,
    changed_cells: &[GridPos],
    scope_m: f64,
) -> Result<GlobalGraph<T>, GraphError> {
    let ctx = UtilityContext::new(inp.o, inp.lattice, inp.vu, inp.r_m);
    let utils = cache.update(&ctx, inp.vf, changed_cells, scope_m);
    assemble_with_utilities(inp, &utils)
}

fn assemble_with_utilities<T: Scalar>(inp: &GraphInputs<'_>, utils: &[T]) -> Result<GlobalGraph<T>, GraphError> {
    let mut nodes: Vec<Node<T>> = Vec::with_capacity(inp.vf.len() + inp.vu.len());
    let mut index = HashMap::new();
    for (&v, &u) in inp.vf.iter().zip(utils) {
        if index.contains_key(&v) {
            continue;
        }
        index.insert(v, nodes.len());
        nodes.push(Node {
            coord: v,
            kind: NodeKind::KnownFree,
            centroid: false,
            visited: inp.visited.contains(&v),
            neighbors: Vec::new(),
            utility: u,
        });
    }
    for u in inp.vu {
        if index.contains_key(&u.coord) {
            continue;
        }
        index.insert(u.coord, nodes.len());
        nodes.push(Node {
            coord: u.coord,
            kind: NodeKind::Unknown,
            centroid: u.centroid,
            visited: inp.visited.contains(&u.coord),
            neighbors: Vec::new(),
            utility: T::zero(),
        });
    }

    let lat = inp.lattice;
    let reach = 2.0 * lat.d_n + 1e-9;
    let mut robot = None;
    let mut best = f64::INFINITY;
    for (i, n) in nodes.iter().enumerate() {
        if n.kind != NodeKind::KnownFree {
            continue;
        }
        let (x, y) = lat.pos_m(n.coord);
        let d = inp.robot.dist(x, y);
        if d <= reach && d < best {
            best = d;
            robot = Some(i);
        }
    }
    let robot = robot.ok_or(GraphError::RobotUnsnapped {
        x: inp.robot.x,
        y: inp.robot.y,
        radius_m: 2.0 * lat.d_n,
    })?;

    let pairs: Vec<(LatticePos, NodeKind)> = nodes.iter().map(|n| (n.coord, n.kind)).collect();
    let edges = build_edges::<T>(&pairs, inp.o, &lat);
    for e in &edges {
        nodes[e.a].neighbors.push(e.b);
        nodes[e.b].neighbors.push(e.a);
    }
    for n in &mut nodes {
        n.neighbors.sort_unstable();
    }
    Ok(GlobalGraph {
        nodes,
        edges,
        robot,
        lattice: lat,
        index,
    })
}

#[derive(PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

/// Single-source shortest paths over the graph edges.
#[derive(Debug, Clone)]
pub struct ShortestPaths<T> {
    pub source: usize,
    pub dist: Vec<T>,
    pub prev: Vec<usize>,
}

impl<T: Scalar> ShortestPaths<T> {
    pub fn reachable(&self, v: usize) -> bool {
        self.dist[v].is_finite()
    }

    /// Node sequence from the source to `v`, both included; empty if unreachable.
    pub fn path_to(&self, v: usize) -> Vec<usize> {
        if !self.reachable(v) {
            return Vec::new();
        }
        let mut path = vec![v];
        let mut cur = v;
        while cur != self.source {
            cur = self.prev[cur];
            path.push(cur);
        }
        path.reverse();
        path
    }
}

impl<T: Scalar> GlobalGraph<T> {
    pub fn node_at(&self, p: LatticePos) -> Option<usize> {
        self.index.get(&p).copied()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn pos_m(&self, i: usize) -> (f64, f64) {
        self.lattice.pos_m(self.nodes[i].coord)
    }

    /// Drops the edge between `a` and `b` if present.
    pub fn remove_edge(&mut self, a: usize, b: usize) {
        self.edges
            .retain(|e| !((e.a == a && e.b == b) || (e.a == b && e.b == a)));
        self.nodes[a].neighbors.retain(|&n| n != b);
        self.nodes[b].neighbors.retain(|&n| n != a);
    }

    pub fn edge_length(&self, a: usize, b: usize) -> T {
        T::of(self.lattice.dist_m(self.nodes[a].coord, self.nodes[b].coord))
    }

    pub fn dijkstra(&self, source: usize) -> ShortestPaths<T> {
        let n = self.nodes.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut prev = vec![usize::MAX; n];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(HeapItem(0.0, source));
        while let Some(HeapItem(d, u)) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &v in &self.nodes[u].neighbors {
                let nd = d + self.lattice.dist_m(self.nodes[u].coord, self.nodes[v].coord);
                if nd < dist[v] {
                    dist[v] = nd;
                    prev[v] = u;
                    heap.push(HeapItem(nd, v));
                }
            }
        }
        ShortestPaths {
            source,
            dist: dist.into_iter().map(T::of).collect(),
            prev,
        }
    }

    /// Node ids within `hops` edges of `from`, with their hop counts, in BFS order.
    pub fn bfs(&self, from: usize, hops: usize) -> Vec<(usize, usize)> {
        let mut seen = HashMap::new();
        seen.insert(from, 0usize);
        let mut order = vec![(from, 0)];
        let mut head = 0;
        while head < order.len() {
            let (u, h) = order[head];
            head += 1;
            if h == hops {
                continue;
            }
            for &v in &self.nodes[u].neighbors {
                if let std::collections::hash_map::Entry::Vacant(e) = seen.entry(v) {
                    e.insert(h + 1);
                    order.push((v, h + 1));
                }
            }
        }
        order
    }

    /// Nodes: `id,x,y,kind,utility`.
    pub fn write_nodes_csv<W: Write>(&self, w: &mut W) -> Result<(), GraphError> {
        let io = |e: std::io::Error| GraphError::Io(e.to_string());
        writeln!(w, "id,x,y,kind,utility").map_err(io)?;
        for (i, n) in self.nodes.iter().enumerate() {
            let (x, y) = self.lattice.pos_m(n.coord);
            let kind = match n.kind {
                NodeKind::KnownFree => "free",
                NodeKind::Unknown => "unknown",
            };
            writeln!(w, "{i},{x:.3},{y:.3},{kind},{:.6}", n.utility.as_f64()).map_err(io)?;
        }
        Ok(())
    }

    /// Edges: `id_a,id_b,length`.
    pub fn write_edges_csv<W: Write>(&self, w: &mut W) -> Result<(), GraphError> {
        let io = |e: std::io::Error| GraphError::Io(e.to_string());
        writeln!(w, "id_a,id_b,length").map_err(io)?;
        for e in &self.edges {
            writeln!(w, "{},{},{:.6}", e.a, e.b, e.length.as_f64()).map_err(io)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::Grid;

    fn lattice(g: &Grid) -> Lattice {
        Lattice::new(g, 2.0).unwrap()
    }

    #[test]
    fn midpoint_circle_counts() {
        assert_eq!(circle_cell_count(0), 1);
        assert_eq!(circle_cell_count(1), 4);
        assert_eq!(circle_cell_count(2), 12);
        assert_eq!(circle_cell_count(13), 72);
    }

    #[test]
    fn formula_cases() {
        assert_eq!(utility_formula::<f64>(72, 10, 0, 7), 10.0);
        assert_eq!(utility_formula::<f64>(72, 30, 7, 7), 60.0);
        assert_eq!(utility_formula::<f64>(72, 50, 7, 7), 72.0);
        assert_eq!(utility_formula::<f64>(72, 0, 7, 7), 0.0);
    }

    #[test]
    fn unknown_nodes_have_zero_utility() {
        let o = OccupancyMap::from_grid(Grid::filled(30, 30, 0.4, Cell::Unknown));
        let u: f64 = node_utility(
            LatticePos::new(2, 2),
            NodeKind::Unknown,
            &o,
            lattice(o.grid()),
            &[],
            5.0,
        );
        assert_eq!(u, 0.0);
    }

    #[test]
    fn wall_between_known_nodes_blocks_edge_but_unknown_passes() {
        let mut g = Grid::filled(11, 6, 0.4, Cell::Free);
        g.set(GridPos::new(2, 0), Cell::Occupied);
        for x in 6..11 {
            g.set(GridPos::new(x, 0), Cell::Unknown);
        }
        let o = OccupancyMap::from_grid(g);
        let lat = lattice(o.grid());
        let nodes = vec![
            (LatticePos::new(0, 0), NodeKind::KnownFree),
            (LatticePos::new(1, 0), NodeKind::Unknown),
            (LatticePos::new(2, 0), NodeKind::Unknown),
        ];
        let e = build_edges::<f64>(&nodes, &o, &lat);
        assert_eq!(e.len(), 1);
        assert_eq!((e[0].a, e[0].b), (1, 2));
        assert_eq!(e[0].length, 2.0);
    }

    #[test]
    fn dedup_prefers_known_free_and_snaps_robot() {
        let o = OccupancyMap::from_grid(Grid::filled(11, 11, 0.4, Cell::Free));
        let lat = lattice(o.grid());
        let vf = sample_free_nodes(&o, &lat);
        assert_eq!(vf.len(), 9);
        let vu = [UnknownNode {
            coord: LatticePos::new(1, 1),
            centroid: true,
        }];
        let visited = HashSet::new();
        let inp = GraphInputs {
            o: &o,
            lattice: lat,
            vf: &vf,
            vu: &vu,
            r_m: 5.0,
            robot: Pose::new(2.3, 2.1),
            visited: &visited,
        };
        let g = assemble_graph::<f64>(&inp).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g.nodes[g.robot].coord, LatticePos::new(1, 1));
        assert_eq!(g.nodes[g.robot].kind, NodeKind::KnownFree);
        assert!(g.nodes.iter().all(|n| n.utility == 0.0));
        assert_eq!(g.edges.len(), 20);
        let sp = g.dijkstra(0);
        assert!((sp.dist[8] - 2.0 * 8f64.sqrt()).abs() < 1e-9);
        assert_eq!(sp.path_to(8), vec![0, 4, 8]);
    }

    #[test]
    fn unsnapped_robot_faults() {
        let o = OccupancyMap::from_grid(Grid::filled(30, 30, 0.4, Cell::Unknown));
        let lat = lattice(o.grid());
        let visited = HashSet::new();
        let inp = GraphInputs {
            o: &o,
            lattice: lat,
            vf: &[],
            vu: &[],
            r_m: 5.0,
            robot: Pose::new(5.0, 5.0),
            visited: &visited,
        };
        assert!(matches!(
            assemble_graph::<f32>(&inp),
            Err(GraphError::RobotUnsnapped { .. })
        ));
    }

    #[test]
    fn csv_dumps() {
        let o = OccupancyMap::from_grid(Grid::filled(6, 1, 0.4, Cell::Free));
        let lat = lattice(o.grid());
        let vf = sample_free_nodes(&o, &lat);
        let visited = HashSet::new();
        let inp = GraphInputs {
            o: &o,
            lattice: lat,
            vf: &vf,
            vu: &[],
            r_m: 5.0,
            robot: Pose::new(0.2, 0.2),
            visited: &visited,
        };
        let g = assemble_graph::<f64>(&inp).unwrap();
        let mut n = Vec::new();
        let mut e = Vec::new();
        g.write_nodes_csv(&mut n).unwrap();
        g.write_edges_csv(&mut e).unwrap();
        assert_eq!(
            String::from_utf8(n).unwrap(),
            "id,x,y,kind,utility\n0,0.200,0.200,free,0.000000\n1,2.200,0.200,free,0.000000\n"
        );
        assert_eq!(String::from_utf8(e).unwrap(), "id_a,id_b,length\n0,1,2.000000\n");
    }
}
