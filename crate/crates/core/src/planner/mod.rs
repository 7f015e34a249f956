//! Closed-loop exploration episodes for the diffusion policy, its two
//! ablations, a nearest-frontier baseline and the ground-truth expert.

mod expert;
mod policies;
mod trace;
mod tsp;

pub use expert::{expert_trajectory, ground_truth_graph, visible_cells, ExpertPlan, ExpertRelabeler, TWO_OPT_PASSES};
pub use policies::{frontier_fallback, plan_graph_tsp, plan_guide, plan_nearest_frontier, utility_fallback, GuidePlan};
pub use trace::{read_trace_moves, replay_distance, write_trace};
pub use tsp::{nearest_neighbor_order, path_length, solve_open_tsp, two_opt};

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use thiserror::Error;

use crate::diffusion::{
    make_schedule, policy_input, DiffusionError, DiffusionPolicy, ExpertSample, NoiseSchedule, COSINE_OFFSET,
};
use crate::nodegraph::{
    assemble_graph_cached, obstacle_nodes, sample_free_nodes, GlobalGraph, GraphError, GraphInputs, UnknownNode,
    UtilityCache,
};
use crate::predictor::{
    predict_nodes, rasterize, rasterize_truth, region_filter, PredictError, PredictParams, PredictionRecord,
    PredictorModel,
};
use crate::regions::{
    decompose_with_frontiers, score_regions, select_high_score, RegionError, RegionGrid, RegionScoreParams,
    ThresholdMode,
};
use crate::world::{
    frontiers, generate_maze, sense_and_update, Cell, GridPos, GroundTruthMap, Lattice, LatticePos, OccupancyMap, Pose,
    SensorModel, Supercover, WorldError,
};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("policy {0} needs a {1} model; run `guide {2}` first")]
    MissingModel(PolicyKind, &'static str, &'static str),
    #[error("start node {0:?} is not on free space")]
    StartNotFree(LatticePos),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Region(#[from] RegionError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyKind {
    Guide,
    GuideNoRegionEval,
    GraphTsp,
    NearestFrontier,
    ExpertOracle,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::Guide,
        PolicyKind::GuideNoRegionEval,
        PolicyKind::GraphTsp,
        PolicyKind::NearestFrontier,
        PolicyKind::ExpertOracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Guide => "guide",
            PolicyKind::GuideNoRegionEval => "no-region-eval",
            PolicyKind::GraphTsp => "graph-tsp",
            PolicyKind::NearestFrontier => "nearest-frontier",
            PolicyKind::ExpertOracle => "expert",
        }
    }

    pub fn needs_predictor(self) -> bool {
        matches!(
            self,
            PolicyKind::Guide | PolicyKind::GuideNoRegionEval | PolicyKind::GraphTsp
        )
    }

    pub fn needs_policy(self) -> bool {
        matches!(self, PolicyKind::Guide | PolicyKind::GuideNoRegionEval)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown policy {s:?}"))
    }
}

/// Everything an episode depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
    pub world_seed: u64,
    pub width_m: f64,
    pub height_m: f64,
    pub d_m: f64,
    pub corridor_w: usize,
    pub sensor: SensorModel,
    pub d_n: f64,
    pub s_g: f64,
    pub utility_radius_m: f64,
    pub score: RegionScoreParams<f64>,
    pub threshold: ThresholdMode,
    pub predict: PredictParams,
    pub policy: PolicyKind,
    pub k_steps: usize,
    pub t_a: usize,
    pub coverage_stop: f64,
    pub v_max: f64,
    pub step_cap_factor: usize,
    /// Overrides the expert-derived move cap when set.
    pub max_moves: Option<usize>,
    pub plan_seed: u64,
    /// Planning steps without new information before the learned policy is
    /// overridden by the utility fallback.
    pub stall_steps: usize,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            world_seed: 1,
            width_m: 50.0,
            height_m: 50.0,
            d_m: 0.4,
            corridor_w: 6,
            sensor: SensorModel::default(),
            d_n: 2.0,
            s_g: 8.0,
            utility_radius_m: 5.0,
            score: RegionScoreParams::default(),
            threshold: ThresholdMode::Mean,
            predict: PredictParams::default(),
            policy: PolicyKind::NearestFrontier,
            k_steps: 30,
            t_a: 2,
            coverage_stop: 0.99,
            v_max: 1.0,
            step_cap_factor: 20,
            max_moves: None,
            plan_seed: 0,
            stall_steps: 6,
        }
    }
}

impl EpisodeConfig {
    pub fn world(&self) -> Result<GroundTruthMap, WorldError> {
        generate_maze(self.world_seed, self.width_m, self.height_m, self.d_m, self.corridor_w)
    }
}

/// Shared read-only models.
#[derive(Debug, Clone, Default)]
pub struct Models {
    pub predictor: Option<Arc<PredictorModel>>,
    pub policy: Option<Arc<DiffusionPolicy<f32>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    /// Robot node at the start of the step.
    pub robot: LatticePos,
    pub plan: Vec<LatticePos>,
    pub executed: Vec<LatticePos>,
    /// Robot position after the step.
    pub x: f64,
    pub y: f64,
    pub unknown_count: usize,
    pub cum_distance: f64,
    pub coverage: f64,
    pub fallback: bool,
    pub aborted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub policy: PolicyKind,
    pub world_seed: u64,
    pub start: LatticePos,
    pub steps: Vec<StepRecord>,
    pub distance: f64,
    pub time_s: f64,
    pub coverage: f64,
    pub complete: bool,
    /// Milliseconds spent inside the planning call, one entry per step.
    pub plan_ms: Vec<f64>,
}

impl EpisodeTrace {
    /// Every node the robot occupied, starting with the start node.
    pub fn positions(&self) -> Vec<LatticePos> {
        let mut out = vec![self.start];
        for s in &self.steps {
            out.extend(&s.executed);
        }
        out
    }
}

/// Products of the per-step sense-decompose-predict-assemble pipeline.
#[derive(Debug, Clone)]
pub struct StepView {
    pub frontiers: Vec<GridPos>,
    pub regions: RegionGrid<f64>,
    pub retained: Vec<usize>,
    pub vp: Vec<LatticePos>,
    pub vu: Vec<UnknownNode>,
    pub graph: GlobalGraph<f64>,
}

fn mix(seed: u64, step: u64) -> u64 {
    let mut z = seed ^ step.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Step-by-step episode runner.
pub struct Explorer {
    pub cfg: EpisodeConfig,
    pub gt: GroundTruthMap,
    pub o: OccupancyMap,
    pub lattice: Lattice,
    pub robot: LatticePos,
    pub visited: HashSet<LatticePos>,
    models: Models,
    sched: Option<NoiseSchedule<f32>>,
    reachable: Vec<bool>,
    reachable_free: usize,
    cache: UtilityCache<f64>,
    changed: Vec<GridPos>,
    blocked: HashSet<(LatticePos, LatticePos)>,
    history: Vec<Vec<f32>>,
    expert: Option<ExpertPlan>,
    expert_cursor: usize,
    max_moves: usize,
    moves: usize,
    stall: usize,
    last_unknown: usize,
    pub trace: EpisodeTrace,
    /// Keep the view each planning step was made on in `last_view`.
    pub record_view: bool,
    pub last_view: Option<StepView>,
    done: bool,
}

impl Explorer {
    pub fn new(cfg: EpisodeConfig, models: Models) -> Result<Self, PlanError> {
        let gt = cfg.world()?;
        Self::with_world(cfg, gt, models)
    }

    pub fn with_world(cfg: EpisodeConfig, gt: GroundTruthMap, models: Models) -> Result<Self, PlanError> {
        if cfg.policy.needs_predictor() && models.predictor.is_none() {
            return Err(PlanError::MissingModel(cfg.policy, "predictor", "train-predictor"));
        }
        if cfg.policy.needs_policy() && models.policy.is_none() {
            return Err(PlanError::MissingModel(cfg.policy, "policy", "train-policy"));
        }
        let lattice = Lattice::new(&gt.grid, cfg.d_n)?;
        let (sx, sy) = gt.grid.center_m(gt.start);
        let start = lattice.nearest(sx, sy);
        if !gt.is_free(lattice.cell(start)) {
            return Err(PlanError::StartNotFree(start));
        }
        let reachable = gt.reachable_from(lattice.cell(start));
        let reachable_free = reachable.iter().filter(|&&r| r).count();
        let need_expert = cfg.policy == PolicyKind::ExpertOracle || cfg.max_moves.is_none();
        let expert = if need_expert {
            Some(expert_trajectory(&gt, start, cfg.d_n, cfg.sensor.range_m)?)
        } else {
            None
        };
        let max_moves = cfg
            .max_moves
            .unwrap_or_else(|| cfg.step_cap_factor * expert.as_ref().map_or(1, |e| e.moves()).max(1));
        let sched = cfg
            .policy
            .needs_policy()
            .then(|| make_schedule(cfg.k_steps, COSINE_OFFSET));
        let mut o = OccupancyMap::unknown_like(&gt);
        let (px, py) = lattice.pos_m(start);
        let changed = sense_and_update(&gt, &mut o, Pose::new(px, py), &cfg.sensor)?;
        let last_unknown = o.unknown_count();
        let trace = EpisodeTrace {
            policy: cfg.policy,
            world_seed: cfg.world_seed,
            start,
            steps: Vec::new(),
            distance: 0.0,
            time_s: 0.0,
            coverage: 0.0,
            complete: false,
            plan_ms: Vec::new(),
        };
        let mut ex = Self {
            visited: HashSet::from([start]),
            robot: start,
            cfg,
            gt,
            o,
            lattice,
            models,
            sched,
            reachable,
            reachable_free,
            cache: UtilityCache::new(),
            changed,
            blocked: HashSet::new(),
            history: Vec::new(),
            expert,
            expert_cursor: 0,
            max_moves,
            moves: 0,
            stall: 0,
            last_unknown,
            trace,
            record_view: false,
            last_view: None,
            done: false,
        };
        ex.trace.coverage = ex.coverage();
        Ok(ex)
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn max_moves(&self) -> usize {
        self.max_moves
    }

    pub fn expert(&self) -> Option<&ExpertPlan> {
        self.expert.as_ref()
    }

    pub fn pose(&self) -> Pose {
        let (x, y) = self.lattice.pos_m(self.robot);
        Pose::new(x, y)
    }

    /// Known free cells over ground-truth free cells reachable from the start.
    pub fn coverage(&self) -> f64 {
        let known = self
            .o
            .grid()
            .cells()
            .iter()
            .zip(&self.reachable)
            .filter(|(&c, &r)| r && c == Cell::Free)
            .count();
        known as f64 / self.reachable_free.max(1) as f64
    }

    fn predicted(
        &self,
        model: &PredictorModel,
        vf: &[LatticePos],
        vo: &[LatticePos],
    ) -> Result<Vec<LatticePos>, PlanError> {
        Ok(predict_nodes(model, vf, vo, &self.lattice, &self.cfg.predict)?)
    }

    /// Region-filtered unknown nodes `model` would add at the current belief.
    pub fn region_evaluated_nodes(&self, model: &PredictorModel) -> Result<Vec<UnknownNode>, PlanError> {
        let f = frontiers(&self.o);
        let (regions, retained) = self.regions(&f)?;
        let vf = sample_free_nodes(&self.o, &self.lattice);
        let vo = obstacle_nodes(&self.o, &self.lattice);
        let vp = self.predicted(model, &vf, &vo)?;
        Ok(region_filter(
            &vp,
            &regions,
            &retained,
            self.cfg.predict.rho_min,
            &self.lattice,
        ))
    }

    fn regions(&self, f: &[GridPos]) -> Result<(RegionGrid<f64>, Vec<usize>), PlanError> {
        let mut regions = decompose_with_frontiers::<f64>(&self.o, self.cfg.s_g, f)?;
        score_regions(
            &mut regions,
            f,
            self.lattice.d_m,
            self.pose(),
            &self.cfg.score,
            self.cfg.d_n,
        );
        let retained = select_high_score(&regions.regions, self.cfg.threshold);
        Ok((regions, retained))
    }

    /// Runs the perception pipeline for the current belief and assembles the
    /// global graph. Unknown nodes depend on the policy: region-filtered
    /// predictions, all pruned predictions, or none.
    pub fn view(&mut self) -> Result<StepView, PlanError> {
        let f = frontiers(&self.o);
        let (regions, retained) = self.regions(&f)?;
        let vf = sample_free_nodes(&self.o, &self.lattice);
        let vo = obstacle_nodes(&self.o, &self.lattice);
        let predictor = match self.cfg.policy {
            PolicyKind::NearestFrontier => None,
            _ => self.models.predictor.clone(),
        };
        let (vp, vu) = match predictor {
            None => (Vec::new(), Vec::new()),
            Some(m) => {
                let vp = self.predicted(&m, &vf, &vo)?;
                let vu = if self.cfg.policy == PolicyKind::GuideNoRegionEval {
                    vp.iter().map(|&coord| UnknownNode { coord, centroid: false }).collect()
                } else {
                    region_filter(&vp, &regions, &retained, self.cfg.predict.rho_min, &self.lattice)
                };
                (vp, vu)
            }
        };
        let inputs = GraphInputs {
            o: &self.o,
            lattice: self.lattice,
            vf: &vf,
            vu: &vu,
            r_m: self.cfg.utility_radius_m,
            robot: self.pose(),
            visited: &self.visited,
        };
        let changed = std::mem::take(&mut self.changed);
        let mut graph = assemble_graph_cached(&inputs, &mut self.cache, &changed, self.cfg.sensor.range_m)?;
        self.drop_blocked_edges(&mut graph);
        Ok(StepView {
            frontiers: f,
            regions,
            retained,
            vp,
            vu,
            graph,
        })
    }

    fn segment_free(&self, a: LatticePos, b: LatticePos) -> bool {
        Supercover::new(self.lattice.cell(a), self.lattice.cell(b)).all(|c| self.o.get(c) == Cell::Free)
    }

    fn drop_blocked_edges(&mut self, g: &mut GlobalGraph<f64>) {
        let still: Vec<(LatticePos, LatticePos)> = self
            .blocked
            .iter()
            .copied()
            .filter(|&(a, b)| !self.segment_free(a, b))
            .collect();
        self.blocked = still.iter().copied().collect();
        for (a, b) in still {
            if let (Some(i), Some(j)) = (g.node_at(a), g.node_at(b)) {
                g.remove_edge(i, j);
            }
        }
    }

    fn finish(&mut self, complete: bool) {
        self.done = true;
        self.trace.complete = complete;
        self.trace.coverage = self.coverage();
        self.trace.time_s = self.trace.distance / self.cfg.v_max;
    }

    fn move_to(&mut self, p: LatticePos) -> Result<(), PlanError> {
        self.trace.distance += self.lattice.dist_m(self.robot, p);
        self.robot = p;
        self.moves += 1;
        self.visited.insert(p);
        let pose = self.pose();
        let changed = sense_and_update(&self.gt, &mut self.o, pose, &self.cfg.sensor)?;
        self.changed.extend(changed);
        Ok(())
    }

    /// Follows up to `T_a` nodes of `path`. A move whose segment is not fully
    /// known-free is refused; the edge is excluded from later graphs until
    /// its cells are all observed free.
    pub fn execute(&mut self, path: &[LatticePos]) -> Result<(Vec<LatticePos>, bool), PlanError> {
        let mut done = Vec::new();
        for &p in path.iter().take(self.cfg.t_a) {
            if self.lattice.dist_m(self.robot, p) > self.lattice.d_n * 1.5 || !self.segment_free(self.robot, p) {
                self.blocked.insert((self.robot, p));
                self.blocked.insert((p, self.robot));
                return Ok((done, true));
            }
            self.move_to(p)?;
            done.push(p);
        }
        Ok((done, false))
    }

    /// One planning step. Returns false once the episode has ended.
    pub fn step(&mut self) -> Result<bool, PlanError> {
        if self.done {
            return Ok(false);
        }
        let f = frontiers(&self.o);
        if f.is_empty() || self.coverage() >= self.cfg.coverage_stop {
            self.finish(true);
            return Ok(false);
        }
        if self.moves >= self.max_moves || self.trace.steps.len() >= self.max_moves {
            self.finish(false);
            return Ok(false);
        }
        let start = self.robot;
        let (plan, ms, fallback) = if self.cfg.policy == PolicyKind::ExpertOracle {
            let e = self.expert.as_ref().expect("expert plan");
            let rest: Vec<LatticePos> = e.path[self.expert_cursor + 1..].to_vec();
            if rest.is_empty() {
                self.finish(true);
                return Ok(false);
            }
            (rest, 0.0, false)
        } else {
            let view = self.view()?;
            let t0 = Instant::now();
            let planned = self.plan(&view)?;
            let ms = t0.elapsed().as_secs_f64() * 1e3;
            if self.record_view {
                self.last_view = Some(view.clone());
            }
            match planned {
                None => {
                    self.finish(true);
                    return Ok(false);
                }
                Some((ids, fb)) => (ids.iter().map(|&i| view.graph.nodes[i].coord).collect(), ms, fb),
            }
        };
        let (executed, aborted) = if self.cfg.policy == PolicyKind::ExpertOracle {
            let take: Vec<LatticePos> = plan.iter().take(self.cfg.t_a).copied().collect();
            for &p in &take {
                self.move_to(p)?;
            }
            self.expert_cursor += take.len();
            (take, false)
        } else {
            self.execute(&plan)?
        };
        let unknown = self.o.unknown_count();
        if unknown < self.last_unknown {
            self.stall = 0;
        } else {
            self.stall += 1;
        }
        self.last_unknown = unknown;
        let pose = self.pose();
        let coverage = self.coverage();
        self.trace.plan_ms.push(ms);
        self.trace.steps.push(StepRecord {
            step: self.trace.steps.len(),
            robot: start,
            plan,
            executed,
            x: pose.x,
            y: pose.y,
            unknown_count: unknown,
            cum_distance: self.trace.distance,
            coverage,
            fallback,
            aborted,
        });
        self.trace.coverage = coverage;
        Ok(true)
    }

    /// Node-id path for the configured policy, with the fallback flag;
    /// `None` signals that nothing is left to explore.
    fn plan(&mut self, view: &StepView) -> Result<Option<(Vec<usize>, bool)>, PlanError> {
        let g = &view.graph;
        let primary = match self.cfg.policy {
            PolicyKind::Guide | PolicyKind::GuideNoRegionEval => {
                let policy = self.models.policy.clone().expect("checked at construction");
                let sched = self.sched.as_ref().expect("schedule");
                let seed = mix(
                    self.cfg.plan_seed ^ self.cfg.world_seed.rotate_left(32),
                    self.trace.steps.len() as u64,
                );
                let p = plan_guide(g, &self.o, &policy, sched, &self.history, seed)?;
                self.history.insert(0, p.embedding);
                self.history.truncate(policy.config().t_o.saturating_sub(1));
                if self.stall >= self.cfg.stall_steps {
                    utility_fallback(g).map(|p| (p, true))
                } else if p.path.is_empty() {
                    None
                } else {
                    Some((p.path, p.fallback))
                }
            }
            PolicyKind::GraphTsp => plan_graph_tsp(g).map(|p| (p, false)),
            PolicyKind::NearestFrontier => plan_nearest_frontier(g).map(|p| (p, false)),
            PolicyKind::ExpertOracle => unreachable!("expert does not plan on the graph"),
        };
        Ok(primary
            .filter(|(p, _)| !p.is_empty())
            .or_else(|| frontier_fallback(g, &view.frontiers).map(|p| (p, true)))
            .filter(|(p, _)| !p.is_empty()))
    }

    /// Encoder inputs for the current step, built on the Guide graph.
    pub fn policy_input(
        &mut self,
        pcfg: &crate::diffusion::PolicyConfig,
    ) -> Result<crate::diffusion::PolicyInput<f32>, PlanError> {
        let view = self.view()?;
        Ok(policy_input::<f32, f64>(&view.graph, &self.o, pcfg)?)
    }
}

/// Runs an episode to termination.
pub fn run_episode(cfg: &EpisodeConfig, models: &Models) -> Result<EpisodeTrace, PlanError> {
    let mut ex = Explorer::new(cfg.clone(), models.clone())?;
    while ex.step()? {}
    Ok(ex.trace)
}

/// Behaviour mix used while collecting demonstrations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollectParams {
    /// Chance per step of handing control to the graph-TSP planner.
    pub perturb_prob: f64,
    /// Longest perturbation, in planning steps.
    pub perturb_max: usize,
    pub seed: u64,
}

impl Default for CollectParams {
    fn default() -> Self {
        Self {
            perturb_prob: 0.15,
            perturb_max: 4,
            seed: 0,
        }
    }
}

/// Drives an episode with the re-planning expert, occasionally handing
/// control to the graph-TSP planner for a few steps, and records at every
/// step the Guide encoder inputs with the expert's next `T_p` moves from that
/// state as normalized displacements. `prev` indices are relative to the
/// returned vector.
pub fn collect_expert_samples(
    cfg: &EpisodeConfig,
    predictor: Arc<PredictorModel>,
    pcfg: &crate::diffusion::PolicyConfig,
    episode: u32,
    params: &CollectParams,
) -> Result<Vec<ExpertSample>, PlanError> {
    let gt = cfg.world()?;
    collect_expert_samples_in(gt, cfg, predictor, pcfg, episode, params)
}

/// [`collect_expert_samples`] on a given world.
pub fn collect_expert_samples_in(
    gt: GroundTruthMap,
    cfg: &EpisodeConfig,
    predictor: Arc<PredictorModel>,
    pcfg: &crate::diffusion::PolicyConfig,
    episode: u32,
    params: &CollectParams,
) -> Result<Vec<ExpertSample>, PlanError> {
    use rand::{Rng, SeedableRng};
    let mut c = cfg.clone();
    // Graph-TSP builds the same region-filtered graph as Guide.
    c.policy = PolicyKind::GraphTsp;
    c.max_moves = Some(usize::MAX);
    let lattice = Lattice::new(&gt.grid, c.d_n)?;
    let (sx, sy) = gt.grid.center_m(gt.start);
    let start = lattice.nearest(sx, sy);
    let cap = 3 * expert_trajectory(&gt, start, c.d_n, c.sensor.range_m)?.moves().max(1);
    let mut relabel = ExpertRelabeler::new(&gt, &lattice, start, c.sensor.range_m)?;
    let models = Models {
        predictor: Some(predictor),
        policy: None,
    };
    let mut ex = Explorer::with_world(c, gt, models)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(mix(params.seed, cfg.world_seed));
    let mut perturb = 0usize;
    let mut out: Vec<ExpertSample> = Vec::new();
    while ex.moves < cap {
        let f = frontiers(&ex.o);
        if f.is_empty() || ex.coverage() >= ex.cfg.coverage_stop {
            break;
        }
        let label = relabel.plan_from(ex.robot, &ex.o);
        if label.is_empty() {
            break;
        }
        let view = ex.view()?;
        let input = policy_input::<f32, f64>(&view.graph, &ex.o, pcfg)?;
        let mut actions = Vec::with_capacity(pcfg.action_dim());
        let mut cur = ex.robot;
        for k in 0..pcfg.t_p {
            match label.get(k) {
                Some(&p) => {
                    actions.push(((p.i - cur.i) as f64 / pcfg.max_step) as f32);
                    actions.push(((p.j - cur.j) as f64 / pcfg.max_step) as f32);
                    cur = p;
                }
                None => actions.extend([0.0, 0.0]),
            }
        }
        let step = out.len();
        out.push(ExpertSample {
            episode,
            step: step as u32,
            prev: step.checked_sub(1),
            input,
            actions,
        });
        if perturb == 0 && params.perturb_max > 0 && rng.gen_bool(params.perturb_prob.clamp(0.0, 1.0)) {
            perturb = rng.gen_range(1..=params.perturb_max);
        }
        let detour = if perturb > 0 {
            perturb -= 1;
            plan_graph_tsp(&view.graph)
                .filter(|p| !p.is_empty())
                .map(|p| p.iter().map(|&i| view.graph.nodes[i].coord).collect::<Vec<_>>())
        } else {
            None
        };
        match detour {
            Some(path) => {
                let (done, _) = ex.execute(&path)?;
                if done.is_empty() {
                    perturb = 0;
                }
            }
            None => {
                for &p in label.iter().take(ex.cfg.t_a) {
                    ex.move_to(p)?;
                }
            }
        }
    }
    Ok(out)
}

/// Runs a nearest-frontier episode and records an (observed, ground-truth)
/// raster pair every `every` planning steps, up to `max_records`.
pub fn collect_prediction_records(
    cfg: &EpisodeConfig,
    episode: u64,
    every: usize,
    max_records: usize,
) -> Result<Vec<PredictionRecord>, PlanError> {
    let mut c = cfg.clone();
    c.policy = PolicyKind::NearestFrontier;
    let mut ex = Explorer::new(c, Models::default())?;
    let target = rasterize_truth(&ex.gt, &ex.lattice)?;
    let every = every.max(1);
    let mut out = Vec::new();
    let mut step = 0usize;
    loop {
        if step % every == 0 {
            let vf = sample_free_nodes(&ex.o, &ex.lattice);
            let vo = obstacle_nodes(&ex.o, &ex.lattice);
            out.push(PredictionRecord {
                input: rasterize(&vf, &vo, &ex.lattice)?,
                target: target.clone(),
                episode,
                step: step as u64,
                d_n: ex.lattice.d_n,
            });
            if out.len() >= max_records {
                break;
            }
        }
        if !ex.step()? {
            break;
        }
        step += 1;
    }
    Ok(out)
}
