use super::{raycast, Cell, GridPos, GroundTruthMap, OccupancyMap, Pose, RayHit, Supercover, WorldError};

/// How revealed cells are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SensingMode {
    /// Every cell within range whose line of sight from the robot cell is
    /// unobstructed before the cell itself.
    #[default]
    PerCell,
    /// `beam_count` evenly spaced rays, revealing traversed cells up to and
    /// including the first obstacle.
    Beams,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorModel {
    pub range_m: f64,
    pub beam_count: usize,
    pub mode: SensingMode,
}

impl SensorModel {
    pub fn new(range_m: f64, beam_count: usize) -> Self {
        assert!(range_m > 0.0 && beam_count >= 8, "invalid sensor model");
        Self {
            range_m,
            beam_count,
            mode: SensingMode::PerCell,
        }
    }

    pub fn with_mode(mut self, mode: SensingMode) -> Self {
        self.mode = mode;
        self
    }
}

impl Default for SensorModel {
    fn default() -> Self {
        Self::new(10.0, 360)
    }
}

/// Reveals the cells seen from `pose`. Returns the newly revealed cells.
pub fn sense_and_update(
    gt: &GroundTruthMap,
    o: &mut OccupancyMap,
    pose: Pose,
    s: &SensorModel,
) -> Result<Vec<GridPos>, WorldError> {
    let g = &gt.grid;
    let origin = g.cell_at(pose.x, pose.y);
    if g.get(origin) != Cell::Free {
        return Err(WorldError::PoseInObstacle(origin));
    }
    let mut changed = Vec::new();
    let d_m = g.resolution();
    let r2 = s.range_m * s.range_m;
    let rc = (s.range_m / d_m).ceil() as i32 + 1;
    let in_range = |p: GridPos| {
        let (cx, cy) = g.center_m(p);
        (cx - pose.x).powi(2) + (cy - pose.y).powi(2) <= r2 + 1e-9
    };
    match s.mode {
        SensingMode::PerCell => {
            for y in (origin.y - rc).max(0)..=(origin.y + rc).min(g.height() as i32 - 1) {
                for x in (origin.x - rc).max(0)..=(origin.x + rc).min(g.width() as i32 - 1) {
                    let p = GridPos::new(x, y);
                    if !in_range(p) || o.get(p) != Cell::Unknown {
                        continue;
                    }
                    let visible = match raycast(g, origin, p) {
                        RayHit::Clear => true,
                        RayHit::Blocked(at) => at == p,
                    };
                    if visible && o.reveal(p, g.get(p)) {
                        changed.push(p);
                    }
                }
            }
        }
        SensingMode::Beams => {
            let (ox, oy) = g.center_m(origin);
            for b in 0..s.beam_count {
                let th = std::f64::consts::TAU * b as f64 / s.beam_count as f64;
                let end = g.cell_at(ox + s.range_m * th.cos(), oy + s.range_m * th.sin());
                for p in Supercover::new(origin, end) {
                    if !g.in_bounds(p) || !in_range(p) {
                        break;
                    }
                    let truth = g.get(p);
                    if o.reveal(p, truth) {
                        changed.push(p);
                    }
                    if truth == Cell::Occupied {
                        break;
                    }
                }
            }
        }
    }
    o.step_counter += 1;
    Ok(changed)
}
