use std::io::{BufRead, Write};

use crate::world::{Lattice, LatticePos};

use super::EpisodeTrace;

/// One line per step, `step,x,y,unknown_count,cum_distance`, then
/// `TOTAL,distance,time,coverage,steps`.
pub fn write_trace<W: Write>(w: &mut W, t: &EpisodeTrace) -> std::io::Result<()> {
    writeln!(w, "step,x,y,unknown_count,cum_distance")?;
    for s in &t.steps {
        writeln!(
            w,
            "{},{:.3},{:.3},{},{:.6}",
            s.step, s.x, s.y, s.unknown_count, s.cum_distance
        )?;
    }
    writeln!(
        w,
        "TOTAL,{:.6},{:.6},{:.6},{}",
        t.distance,
        t.time_s,
        t.coverage,
        t.steps.len()
    )
}

/// Robot positions recovered from a trace file, in meters, with the reported
/// total distance.
pub fn read_trace_moves<R: BufRead>(r: R) -> std::io::Result<(Vec<(f64, f64)>, f64)> {
    let mut pts = Vec::new();
    let mut total = f64::NAN;
    for line in r.lines() {
        let line = line?;
        let f: Vec<&str> = line.split(',').collect();
        if f.first() == Some(&"TOTAL") {
            total = f.get(1).and_then(|v| v.parse().ok()).unwrap_or(f64::NAN);
        } else if let (Some(x), Some(y)) = (
            f.get(1).and_then(|v| v.parse().ok()),
            f.get(2).and_then(|v| v.parse().ok()),
        ) {
            pts.push((x, y));
        }
    }
    Ok((pts, total))
}

/// Path length re-derived from consecutive positions.
pub fn replay_distance(start: LatticePos, moves: &[LatticePos], lattice: &Lattice) -> f64 {
    let mut cur = start;
    let mut d = 0.0;
    for &m in moves {
        d += lattice.dist_m(cur, m);
        cur = m;
    }
    d
}
