//! Graph-conditioned diffusion policy: noise schedule, conditioning
//! encoders, the ancestral sampler, behavior-cloning loss and the projection
//! of sampled waypoints onto the global graph.

mod dataset;
mod features;
mod model;
mod project;
mod sampler;
mod schedule;
mod train;

pub use dataset::{read_expert_dataset, write_expert_dataset, ExpertSample};
pub use features::{
    node_features, observation_crop, policy_input, select_nodes, PolicyInput, CROP_CHANNELS, NODE_FEATURES,
};
pub use model::{time_embedding, DiffusionPolicy, GDIFF_MAGIC, TIME_FEATURES};
pub use project::{project_actions, SNAP_HOPS};
pub use sampler::{bc_loss, denoise_step, sample_actions, NoiseModel};
pub use schedule::{cosine_f, make_schedule, NoiseSchedule, COSINE_OFFSET};
pub use train::{bc_loss_backward, history, train_policy, PolicyTrainConfig, PolicyTrainReport};

use guide_neuralkit::NnError;
use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Error)]
pub enum DiffusionError {
    #[error("cannot encode an empty graph")]
    EmptyGraph,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("denoising produced a non-finite value at step {k}")]
    NonFinite { k: usize },
    #[error("training diverged at step {step} (loss {loss})")]
    Diverged { step: usize, loss: f64 },
    #[error("expert dataset has {got} samples, need at least {need}")]
    DatasetTooSmall { got: usize, need: usize },
    #[error("bad policy file: {0}")]
    Format(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Architecture and feature scaling of a [`DiffusionPolicy`].
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub d_model: usize,
    pub heads: usize,
    pub ffn: usize,
    pub blocks: usize,
    pub obs_dim: usize,
    pub crop_px: usize,
    pub crop_side_m: f64,
    pub pos_scale_m: f64,
    pub utility_scale: f64,
    pub node_cap: usize,
    pub eps_width: usize,
    pub eps_blocks: usize,
    pub t_o: usize,
    pub t_p: usize,
    pub max_step: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            d_model: 32,
            heads: 2,
            ffn: 64,
            blocks: 2,
            obs_dim: 64,
            crop_px: 25,
            crop_side_m: 20.0,
            pos_scale_m: 20.0,
            utility_scale: 72.0,
            node_cap: 512,
            eps_width: 512,
            eps_blocks: 3,
            t_o: 2,
            t_p: 8,
            max_step: 2.0,
        }
    }
}

impl PolicyConfig {
    /// Width of one step's encoding.
    /// Mean-pooled graph features, the robot node's token and the crop code.
    pub fn embed_dim(&self) -> usize {
        2 * self.d_model + self.obs_dim
    }

    pub fn cond_dim(&self) -> usize {
        self.t_o * self.embed_dim()
    }

    pub fn action_dim(&self) -> usize {
        2 * self.t_p
    }

    pub fn eps_input_dim(&self) -> usize {
        self.cond_dim() + self.action_dim() + TIME_FEATURES
    }

    pub(crate) fn header(&self) -> String {
        format!(
            "diffusion-policy d={} heads={} ffn={} blocks={} obs={} crop={} crop_m={} pos_m={} util={} cap={} width={} res={} to={} tp={} step={}",
            self.d_model,
            self.heads,
            self.ffn,
            self.blocks,
            self.obs_dim,
            self.crop_px,
            self.crop_side_m,
            self.pos_scale_m,
            self.utility_scale,
            self.node_cap,
            self.eps_width,
            self.eps_blocks,
            self.t_o,
            self.t_p,
            self.max_step
        )
    }

    pub(crate) fn from_header(h: &str) -> Result<Self, DiffusionError> {
        let mut words = h.split_whitespace();
        if words.next() != Some("diffusion-policy") {
            return Err(DiffusionError::Format(format!("unrecognised header {h:?}")));
        }
        let mut c = Self::default();
        for kv in words {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| DiffusionError::Format(format!("bad header field {kv:?}")))?;
            let bad = || DiffusionError::Format(format!("bad value in {kv:?}"));
            let u = || v.parse::<usize>().map_err(|_| bad());
            let f = || v.parse::<f64>().map_err(|_| bad());
            match k {
                "d" => c.d_model = u()?,
                "heads" => c.heads = u()?,
                "ffn" => c.ffn = u()?,
                "blocks" => c.blocks = u()?,
                "obs" => c.obs_dim = u()?,
                "crop" => c.crop_px = u()?,
                "crop_m" => c.crop_side_m = f()?,
                "pos_m" => c.pos_scale_m = f()?,
                "util" => c.utility_scale = f()?,
                "cap" => c.node_cap = u()?,
                "width" => c.eps_width = u()?,
                "res" => c.eps_blocks = u()?,
                "to" => c.t_o = u()?,
                "tp" => c.t_p = u()?,
                "step" => c.max_step = f()?,
                _ => return Err(DiffusionError::Format(format!("unknown header field {k:?}"))),
            }
        }
        Ok(c)
    }
}

/// Current step's encoding followed by the previous `T_o - 1` encodings,
/// most recent first. Missing history repeats the current encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditioning<T> {
    pub current: Vec<T>,
    pub history: Vec<Vec<T>>,
}

impl<T: Scalar> Conditioning<T> {
    pub fn new(current: Vec<T>, previous: &[Vec<T>], t_o: usize) -> Self {
        let history = (0..t_o.saturating_sub(1))
            .map(|i| previous.get(i).unwrap_or(&current).clone())
            .collect();
        Self { current, history }
    }

    pub fn flat(&self) -> Vec<T> {
        let mut v = self.current.clone();
        for h in &self.history {
            v.extend_from_slice(h);
        }
        v
    }
}

/// `T_p` waypoint displacements in lattice units.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSequence<T> {
    pub steps: Vec<[T; 2]>,
}

impl<T: Scalar> ActionSequence<T> {
    pub fn from_normalized(a: &[T], max_step: f64) -> Self {
        let s = T::of(max_step);
        Self {
            steps: a.chunks(2).map(|c| [c[0] * s, c[1] * s]).collect(),
        }
    }

    pub fn normalized(&self, max_step: f64) -> Vec<T> {
        let s = T::of(max_step);
        self.steps.iter().flat_map(|p| [p[0] / s, p[1] / s]).collect()
    }
}
