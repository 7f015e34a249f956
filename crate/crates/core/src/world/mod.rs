//! Ground-truth environments, the simulated range sensor and the robot's
//! tri-valued occupancy belief.

mod grid;
mod io;
mod lattice;
mod maze;
mod raycast;
mod sensor;

pub use grid::{Cell, Grid, GridPos, GroundTruthMap, OccupancyMap, Pose};
pub use io::{read_map, write_map};
pub use lattice::{Lattice, LatticePos};
pub use maze::{generate_maze, generate_maze_with, MazeParams};
pub use raycast::{raycast, RayHit, Supercover};
pub use sensor::{sense_and_update, SensingMode, SensorModel};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("world too small: {0}")]
    Sizing(String),
    #[error("pose {0:?} lies in an occupied ground-truth cell")]
    PoseInObstacle(GridPos),
    #[error("malformed map file: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for WorldError {
    fn from(e: std::io::Error) -> Self {
        WorldError::Io(e.to_string())
    }
}

/// Free cells with at least one Unknown 4-neighbour.
pub fn frontiers(o: &OccupancyMap) -> Vec<GridPos> {
    let g = o.grid();
    let mut out = Vec::new();
    for y in 0..g.height() as i32 {
        for x in 0..g.width() as i32 {
            let p = GridPos::new(x, y);
            if g.get(p) == Cell::Free
                && p.neighbors4()
                    .iter()
                    .any(|&n| g.in_bounds(n) && g.get(n) == Cell::Unknown)
            {
                out.push(p);
            }
        }
    }
    out
}
