use super::{NodeImage, FREE, MASKED, OCCUPIED};

/// Axis-run structure propagation. Each masked pixel looks along the four
/// axis directions for the first known pixel; a free one votes free and an
/// occupied one votes occupied, each with weight `decay^(distance - 1)`.
/// The prior enters as one more vote of weight `prior_weight`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeuristicParams {
    pub prior: f32,
    pub prior_weight: f32,
    pub decay: f32,
}

impl Default for HeuristicParams {
    fn default() -> Self {
        Self {
            prior: 0.5,
            prior_weight: 0.5,
            decay: 0.8,
        }
    }
}

const DIRS: [(i32, i32); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

pub(super) fn inpaint(p: &HeuristicParams, img: &NodeImage) -> Vec<f32> {
    let mut out = vec![0.0f32; img.pixels.len()];
    for y in 0..img.extent_h {
        for x in 0..img.extent_w {
            if img.get(x, y) != MASKED {
                continue;
            }
            let mut free_w = 0.0f32;
            let mut total_w = 0.0f32;
            for (dx, dy) in DIRS {
                let (mut cx, mut cy) = (x as i32, y as i32);
                let mut w = 1.0f32;
                loop {
                    cx += dx;
                    cy += dy;
                    if cx < 0 || cy < 0 || !img.in_extent(cx as usize, cy as usize) {
                        break;
                    }
                    match img.get(cx as usize, cy as usize) {
                        FREE => {
                            free_w += w;
                            total_w += w;
                            break;
                        }
                        OCCUPIED => {
                            total_w += w;
                            break;
                        }
                        _ => w *= p.decay,
                    }
                }
            }
            out[y * img.size + x] = (p.prior * p.prior_weight + free_w) / (p.prior_weight + total_w);
        }
    }
    out
}
