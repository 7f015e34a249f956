//! Open-path TSP heuristics over a dense distance matrix whose index 0 is the
//! fixed start. Unreachable pairs carry `f64::INFINITY` and are treated as a
//! large finite penalty.

const UNREACHABLE: f64 = 1e12;

fn d(m: &[Vec<f64>], a: usize, b: usize) -> f64 {
    let v = m[a][b];
    if v.is_finite() {
        v
    } else {
        UNREACHABLE
    }
}

/// Greedy tour from index 0; ties go to the lower index.
pub fn nearest_neighbor_order(m: &[Vec<f64>]) -> Vec<usize> {
    let n = m.len();
    if n == 0 {
        return Vec::new();
    }
    let mut used = vec![false; n];
    used[0] = true;
    let mut order = vec![0];
    for _ in 1..n {
        let cur = *order.last().unwrap();
        let next = (0..n)
            .filter(|&j| !used[j])
            .min_by(|&a, &b| d(m, cur, a).total_cmp(&d(m, cur, b)).then(a.cmp(&b)))
            .unwrap();
        used[next] = true;
        order.push(next);
    }
    order
}

pub fn path_length(order: &[usize], m: &[Vec<f64>]) -> f64 {
    order.windows(2).map(|w| d(m, w[0], w[1])).sum()
}

/// First-improvement 2-opt on an open path with a fixed first element.
/// Returns the number of passes made (at most `max_passes`).
pub fn two_opt(order: &mut [usize], m: &[Vec<f64>], max_passes: usize) -> usize {
    let n = order.len();
    let mut passes = 0;
    while passes < max_passes {
        passes += 1;
        let mut improved = false;
        for i in 1..n.saturating_sub(1) {
            for j in i + 1..n {
                let (a, b, c) = (order[i - 1], order[i], order[j]);
                let mut delta = d(m, a, c) - d(m, a, b);
                if j + 1 < n {
                    let e = order[j + 1];
                    delta += d(m, b, e) - d(m, c, e);
                }
                if delta < -1e-9 {
                    order[i..=j].reverse();
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    passes
}

/// Nearest-neighbour construction followed by 2-opt.
pub fn solve_open_tsp(m: &[Vec<f64>], max_passes: usize) -> Vec<usize> {
    let mut order = nearest_neighbor_order(m);
    two_opt(&mut order, m, max_passes);
    order
}
