//! Exploration planning over a partially observed occupancy grid: region
//! evaluation, predicted-structure graphs and a graph-conditioned diffusion
//! policy, with the expert and baseline planners used to benchmark it.

pub mod diffusion;
pub mod nodegraph;
pub mod planner;
pub mod predictor;
pub mod regions;
pub mod world;

pub use guide_neuralkit::Scalar;

pub type GlobalGraphF32 = nodegraph::GlobalGraph<f32>;
pub type GlobalGraphF64 = nodegraph::GlobalGraph<f64>;
pub type RegionGridF32 = regions::RegionGrid<f32>;
pub type RegionGridF64 = regions::RegionGrid<f64>;
pub type NoiseScheduleF32 = diffusion::NoiseSchedule<f32>;
pub type NoiseScheduleF64 = diffusion::NoiseSchedule<f64>;
pub type DiffusionPolicyF32 = diffusion::DiffusionPolicy<f32>;
pub type DiffusionPolicyF64 = diffusion::DiffusionPolicy<f64>;
pub type InpaintNetF32 = predictor::InpaintNet<f32>;
pub type InpaintNetF64 = predictor::InpaintNet<f64>;
