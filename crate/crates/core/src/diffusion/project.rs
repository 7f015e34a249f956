use std::collections::HashMap;

use crate::nodegraph::GlobalGraph;
use crate::Scalar;

use super::ActionSequence;

pub const SNAP_HOPS: usize = 3;
const SNAP_RADIUS: f64 = 1.5;

/// Turns waypoint displacements into a node path. Waypoints accumulate from
/// the robot's lattice position; each one snaps to the closest node within
/// three hops of the previous snapped node, and the hop path between them is
/// appended. A waypoint farther than 1.5 lattice units from every candidate
/// ends the path. The result excludes the robot node and has at most `T_p`
/// entries.
pub fn project_actions<T: Scalar, G: Scalar>(a: &ActionSequence<T>, g: &GlobalGraph<G>) -> Vec<usize> {
    let t_p = a.steps.len();
    let start = g.nodes[g.robot].coord;
    let (mut x, mut y) = (start.i as f64, start.j as f64);
    let mut prev = g.robot;
    let mut path: Vec<usize> = Vec::new();
    for step in &a.steps {
        x += step[0].as_f64();
        y += step[1].as_f64();
        let reach = g.bfs(prev, SNAP_HOPS);
        let mut best: Option<(f64, usize, usize)> = None;
        for &(v, h) in &reach {
            let c = g.nodes[v].coord;
            let d = ((c.i as f64 - x).powi(2) + (c.j as f64 - y).powi(2)).sqrt();
            let better = match best {
                None => true,
                Some((bd, bh, bv)) => d < bd - 1e-12 || ((d - bd).abs() <= 1e-12 && (h, v) < (bh, bv)),
            };
            if better {
                best = Some((d, h, v));
            }
        }
        let Some((d, _, target)) = best else { break };
        if d > SNAP_RADIUS {
            break;
        }
        if target != prev {
            path.extend(hop_path(g, &reach, prev, target));
            prev = target;
        }
        if path.len() >= t_p {
            break;
        }
    }
    path.truncate(t_p);
    path
}

/// BFS path from `from` to `to` (excluding `from`), using the hop counts of a
/// breadth-first sweep rooted at `from`.
fn hop_path<G: Scalar>(g: &GlobalGraph<G>, reach: &[(usize, usize)], from: usize, to: usize) -> Vec<usize> {
    let hops: HashMap<usize, usize> = reach.iter().copied().collect();
    let mut out = vec![to];
    let mut cur = to;
    while cur != from {
        let h = hops[&cur];
        cur = *g.nodes[cur]
            .neighbors
            .iter()
            .filter(|n| hops.get(n) == Some(&(h - 1)))
            .min()
            .expect("bfs parent");
        if cur != from {
            out.push(cur);
        }
    }
    out.reverse();
    out
}
