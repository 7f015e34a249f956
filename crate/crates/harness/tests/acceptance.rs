//! Acceptance suite: one PASS/FAIL line per criterion. Criteria run in order
//! on one thread so the timing checks are not disturbed. Pass criterion
//! numbers as arguments to run a subset.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use guide_core::diffusion::*;
use guide_core::nodegraph::*;
use guide_core::planner::{
    collect_expert_samples_in, collect_prediction_records, CollectParams, EpisodeConfig, Explorer, Models, PolicyKind,
};
use guide_core::predictor::{train_predictor, HeuristicParams, InpaintNet, PredictorModel, PredictorTrainConfig};
use guide_core::regions::*;
use guide_core::world::*;
use guide_harness::eval::{aggregate, run_benchmark, EvalModels, MetricsRow};
use guide_harness::pipeline;
use guide_harness::{BenchmarkSpec, Config};
use guide_neuralkit::Tensor;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

type Outcome = Result<String, String>;

macro_rules! req {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

/// Desk-scale training and evaluation setup shared by criteria 4, 5 and 8-10.
const ARTIFACT_CONFIG: &str = "
nodes.episodes = 50
nodes.first_seed = 10000
nodes.every = 3
nodes.per_episode = 20
expert.episodes = 400
expert.first_seed = 20000
";

struct Artifacts {
    config: Config,
    log: Vec<String>,
}

fn artifact_dir() -> PathBuf {
    use std::hash::{Hash, Hasher};
    let mut h = std::collections::hash_map::DefaultHasher::new();
    let c = Config::parse_str(ARTIFACT_CONFIG).expect("artifact config");
    format!(
        "{c:?} {:?} {:?} {:?} {:?} {:?}",
        c.episode().unwrap(),
        c.policy().unwrap(),
        c.policy_training().unwrap(),
        c.predictor_training().unwrap(),
        c.collect().unwrap()
    )
    .hash(&mut h);
    NODE_FEATURES.hash(&mut h);
    Path::new(env!("CARGO_TARGET_TMPDIR")).join(format!("acceptance-{:016x}", h.finish()))
}

/// Builds the datasets and both models once, reusing files from earlier runs
/// with the same configuration.
fn artifacts() -> &'static Artifacts {
    static A: OnceLock<Artifacts> = OnceLock::new();
    A.get_or_init(|| {
        let dir = artifact_dir();
        let mut config = Config::parse_str(ARTIFACT_CONFIG).expect("artifact config");
        config.set("paths.out", dir.to_str().unwrap()).unwrap();
        let mut log = Vec::new();
        let mut stage = |path: PathBuf, name: &str, run: &dyn Fn() -> String| {
            if path.exists() {
                log.push(format!("{name}: reused {}", path.display()));
            } else {
                let t = Instant::now();
                let what = run();
                log.push(format!("{name}: {what} in {:.0} s", t.elapsed().as_secs_f64()));
            }
        };
        let c = &config;
        stage(pipeline::nodes_path(c), "collect-nodes", &|| {
            format!("{} records", pipeline::cmd_collect_nodes(c, None, 1).unwrap())
        });
        stage(pipeline::predictor_path(c), "train-predictor", &|| {
            let v = pipeline::cmd_train_predictor(c).unwrap();
            format!("val loss {:.4} -> {:.4}", v[0], v[v.len() - 1])
        });
        stage(pipeline::expert_path(c), "collect-expert", &|| {
            format!("{} samples", pipeline::cmd_collect_expert(c, None, 1).unwrap())
        });
        stage(pipeline::policy_path(c), "train-policy", &|| {
            let (a, b) = pipeline::cmd_train_policy(c).unwrap();
            format!("eval loss {a:.4} -> {b:.4}")
        });
        for l in &log {
            println!("  [artifacts] {l}");
        }
        Artifacts { config, log }
    })
}

fn eval_config(suite: &str, seeds: &str, policies: &str) -> Config {
    let mut c = artifacts().config.clone();
    c.set("eval.suite", suite).unwrap();
    c.set("eval.seeds", seeds).unwrap();
    c.set("eval.policies", policies).unwrap();
    c
}

fn run_suite(c: &Config) -> Result<(Vec<MetricsRow>, Duration), String> {
    let spec = BenchmarkSpec::from_config(c).map_err(|e| e.to_string())?;
    let models = pipeline::eval_models(c, &spec).map_err(|e| e.to_string())?;
    let t = Instant::now();
    let rows = run_benchmark(&spec, &models, 1).map_err(|e| e.to_string())?;
    Ok((rows, t.elapsed()))
}

fn gauss(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let mut r = common::rng(101);
    for _ in 0..200 {
        let g = common::random_belief(&mut r, 32, [0.4, 0.2, 0.4]);
        let o = OccupancyMap::from_grid(g.clone());
        let mut want = Vec::new();
        for y in 0..32i32 {
            for x in 0..32i32 {
                let p = GridPos::new(x, y);
                let unknown = |dx: i32, dy: i32| {
                    let (nx, ny) = (x + dx, y + dy);
                    (0..32).contains(&nx) && (0..32).contains(&ny) && g.get(GridPos::new(nx, ny)) == Cell::Unknown
                };
                if g.get(p) == Cell::Free && (unknown(-1, 0) || unknown(1, 0) || unknown(0, -1) || unknown(0, 1)) {
                    want.push(p);
                }
            }
        }
        req!(frontiers(&o) == want, "frontiers differ from the scan");
    }
    for _ in 0..200 {
        let gt = common::random_world(&mut r, 32, 0.2);
        for _ in 0..5 {
            let a = GridPos::new(r.gen_range(0..32), r.gen_range(0..32));
            let b = GridPos::new(r.gen_range(0..32), r.gen_range(0..32));
            let want = match common::naive_raycast(&gt.grid, a, b) {
                None => RayHit::Clear,
                Some(c) => RayHit::Blocked(c),
            };
            req!(raycast(&gt.grid, a, b) == want, "raycast {a} -> {b}");
        }
    }
    for _ in 0..200 {
        let gt = common::random_world(&mut r, 32, 0.15);
        let (px, py) = gt.grid.center_m(gt.start);
        let range = r.gen_range(2.0..9.0);
        let mut o = OccupancyMap::unknown_like(&gt);
        sense_and_update(&gt, &mut o, Pose::new(px, py), &SensorModel::new(range, 64)).map_err(|e| e.to_string())?;
        for c in gt.grid.positions() {
            let (cx, cy) = gt.grid.center_m(c);
            let within = (cx - px).powi(2) + (cy - py).powi(2) <= range * range + 1e-9;
            let visible = within && common::naive_raycast(&gt.grid, gt.start, c).map_or(true, |hit| hit == c);
            let want = if visible { gt.grid.get(c) } else { Cell::Unknown };
            req!(o.get(c) == want, "sensing at {c}");
        }
    }
    for _ in 0..200 {
        let g = common::random_belief(&mut r, 32, [0.55, 0.1, 0.35]);
        let o = OccupancyMap::from_grid(g.clone());
        let lat = Lattice::new(&g, 0.8).map_err(|e| e.to_string())?;
        let mut want = Vec::new();
        for j in 0..16 {
            for i in 0..16 {
                if g.cells()[(2 * j) * 32 + 2 * i] == Cell::Free {
                    want.push(LatticePos::new(i as i32, j as i32));
                }
            }
        }
        let vf = sample_free_nodes(&o, &lat);
        req!(vf == want, "free nodes differ from the scan");
        let mut nodes: Vec<(LatticePos, NodeKind)> = vf.into_iter().map(|p| (p, NodeKind::KnownFree)).collect();
        for p in lat.points() {
            if g.get(lat.cell(p)) == Cell::Unknown && r.gen_bool(0.5) {
                nodes.push((p, NodeKind::Unknown));
            }
        }
        nodes.shuffle(&mut r);
        let got: HashSet<(usize, usize)> = build_edges::<f64>(&nodes, &o, &lat)
            .iter()
            .map(|e| (e.a, e.b))
            .collect();
        let mut want = HashSet::new();
        for a in 0..nodes.len() {
            for b in a + 1..nodes.len() {
                let ((pa, ka), (pb, kb)) = (nodes[a], nodes[b]);
                if (pa.i - pb.i).abs() > 1 || (pa.j - pb.j).abs() > 1 {
                    continue;
                }
                let line = common::naive_supercover(lat.cell(pa), lat.cell(pb));
                let ok = if ka == NodeKind::KnownFree && kb == NodeKind::KnownFree {
                    line.iter().all(|&c| g.get(c) == Cell::Free)
                } else {
                    line.iter().all(|&c| g.get(c) != Cell::Occupied)
                };
                if ok {
                    want.insert((a, b));
                }
            }
        }
        req!(got == want, "edges differ from the pairwise check");
    }
    let secs = t.elapsed().as_secs_f64();
    req!(secs < 60.0, "took {secs:.1} s");
    Ok(format!("200 instances per oracle, {secs:.1} s"))
}

fn criterion_2() -> Outcome {
    let mut r = common::rng(102);
    let mut configs = 0;
    while configs < 10_000 {
        let o = OccupancyMap::from_grid(common::random_belief(&mut r, 32, [0.45, 0.1, 0.45]));
        let lat = Lattice::new(o.grid(), 0.8).map_err(|e| e.to_string())?;
        let vf = sample_free_nodes(&o, &lat);
        let mut vu: Vec<UnknownNode> = lat
            .points()
            .filter(|&q| o.get(lat.cell(q)) == Cell::Unknown && r.gen_bool(0.2))
            .map(|coord| UnknownNode { coord, centroid: false })
            .collect();
        let radius = r.gen_range(1.0..4.0);
        let ctx = UtilityContext::new(&o, lat, &vu, radius);
        for u in &vu {
            req!(
                ctx.utility::<f64>(u.coord, NodeKind::Unknown) == 0.0,
                "nonzero utility on an unknown node"
            );
        }
        let Some(&v) = vf.choose(&mut r) else { continue };
        let mut prev = ctx.utility::<f64>(v, NodeKind::KnownFree);
        req!(
            prev >= 0.0 && prev <= ctx.f_max as f64,
            "utility {prev} above F_m {}",
            ctx.f_max
        );
        configs += 1;
        let mut extra: Vec<LatticePos> = lat
            .points()
            .filter(|&q| {
                o.get(lat.cell(q)) == Cell::Unknown && !vu.iter().any(|u| u.coord == q) && lat.dist_m(q, v) <= radius
            })
            .collect();
        extra.shuffle(&mut r);
        for q in extra {
            vu.push(UnknownNode {
                coord: q,
                centroid: false,
            });
            let ctx = UtilityContext::new(&o, lat, &vu, radius);
            let u = ctx.utility::<f64>(v, NodeKind::KnownFree);
            req!(u >= prev, "utility fell from {prev} to {u} when N_p grew");
            req!(u <= ctx.f_max as f64, "utility {u} above F_m {}", ctx.f_max);
            prev = u;
            configs += 1;
        }
    }
    Ok(format!("{configs} configurations"))
}

fn region_layout(seed: u64) -> (OccupancyMap, Pose) {
    let mut r = common::rng(seed);
    let mut g = Grid::filled(60, 60, 0.4, Cell::Unknown);
    let (cx, cy, rad) = (r.gen_range(5..55), r.gen_range(5..55), r.gen_range(3..15));
    for y in 0..60 {
        for x in 0..60 {
            if (x - cx) * (x - cx) + (y - cy) * (y - cy) <= rad * rad {
                g.set(
                    GridPos::new(x, y),
                    if r.gen_bool(0.15) { Cell::Occupied } else { Cell::Free },
                );
            }
        }
    }
    g.set(GridPos::new(cx, cy), Cell::Free);
    let (px, py) = g.center_m(GridPos::new(cx, cy));
    (OccupancyMap::from_grid(g), Pose::new(px, py))
}

fn criterion_3() -> Outcome {
    let mut checked = 0;
    for seed in 0..100 {
        let (o, robot) = region_layout(seed);
        let f = frontiers(&o);
        let pts: Vec<(f64, f64)> = f.iter().map(|c| o.grid().center_m(*c)).collect();
        let k = 1 + seed as usize % 7;
        let (wf, wr) = (1.3, 0.7);
        let mut grid = decompose::<f64>(&o, 4.0).map_err(|e| e.to_string())?;
        score_regions(&mut grid, &f, 0.4, robot, &RegionScoreParams::new(wf, wr, k), 2.0);
        for g in grid.regions.iter().filter(|g| g.label != RegionLabel::Explored) {
            let mut d: Vec<f64> = pts
                .iter()
                .map(|p| (p.0 - g.centroid.0).hypot(p.1 - g.centroid.1))
                .collect();
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let kk = k.min(d.len());
            let d_f = (d[..kk].iter().sum::<f64>() / kk as f64).max(2.0);
            let d_r = (robot.x - g.centroid.0).hypot(robot.y - g.centroid.1).max(2.0);
            let want = wf / d_f + wr / d_r;
            let got = g.score.ok_or("scored region without a score")?;
            req!((got - want).abs() < 1e-9, "region {} score {got} vs {want}", g.id);
            checked += 1;
        }
    }
    for seed in 0..100 {
        let (o, robot) = region_layout(1000 + seed);
        let f = frontiers(&o);
        let mut r = common::rng(seed);
        let (wf, wr, c) = (r.gen_range(0.1..3.0), r.gen_range(0.1..3.0), r.gen_range(0.01..50.0));
        let rank = |s: f64| -> Result<(Vec<usize>, Vec<usize>), String> {
            let mut grid = decompose::<f64>(&o, 4.0).map_err(|e| e.to_string())?;
            score_regions(
                &mut grid,
                &f,
                0.4,
                robot,
                &RegionScoreParams::new(wf * s, wr * s, 5),
                2.0,
            );
            Ok((
                rank_regions(&grid.regions),
                select_high_score(&grid.regions, ThresholdMode::Mean),
            ))
        };
        req!(
            rank(1.0)? == rank(c)?,
            "ranking changed under weight scale {c} (layout {seed})"
        );
    }
    Ok(format!("{checked} region scores, 100 scaled layouts"))
}

fn criterion_4() -> Outcome {
    let c = &artifacts().config;
    let models = Models {
        predictor: Some(pipeline::load_learned_predictor(c).map_err(|e| e.to_string())?),
        policy: None,
    };
    let base = c.episode().map_err(|e| e.to_string())?;
    let (mut steps, mut nodes) = (0, 0);
    for seed in 101..=130 {
        let cfg = EpisodeConfig {
            world_seed: seed,
            policy: PolicyKind::GraphTsp,
            ..base.clone()
        };
        let mut ex = Explorer::new(cfg, models.clone()).map_err(|e| e.to_string())?;
        ex.record_view = true;
        loop {
            let o = ex.o.clone();
            ex.last_view = None;
            if !ex.step().map_err(|e| e.to_string())? {
                break;
            }
            let Some(view) = ex.last_view.take() else { continue };
            let vf: HashSet<LatticePos> = sample_free_nodes(&o, &ex.lattice).into_iter().collect();
            let mut seen = HashSet::new();
            for u in &view.vu {
                req!(
                    o.get(ex.lattice.cell(u.coord)) != Cell::Occupied,
                    "seed {seed}: unknown node on an obstacle"
                );
                req!(
                    !vf.contains(&u.coord),
                    "seed {seed}: unknown node duplicates a free node"
                );
                req!(seen.insert(u.coord), "seed {seed}: repeated unknown node");
            }
            steps += 1;
            nodes += view.vu.len();
        }
        req!(ex.is_done(), "seed {seed} did not terminate");
    }
    Ok(format!("30 episodes, {steps} steps, {nodes} unknown nodes checked"))
}

fn criterion_5() -> Outcome {
    let a = artifacts();
    let mut c = eval_config("accuracy", "1-20", "");
    c.set("eval.predictors", "learned,heuristic,all-free").unwrap();
    let (rows, took) = run_suite(&c)?;
    let aggs = aggregate(&rows);
    let acc = |p: &str| {
        aggs.iter()
            .find(|x| x.policy == p)
            .map(|x| x.acc_mean.clone())
            .unwrap_or_default()
    };
    let fmt = |v: &[Option<f64>]| {
        v.iter()
            .map(|x| x.map_or("-".into(), |a| format!("{a:.3}")))
            .collect::<Vec<_>>()
            .join("/")
    };
    let (learned, heuristic, free) = (acc("learned"), acc("heuristic"), acc("all-free"));
    let latency = aggs
        .iter()
        .find(|x| x.policy == "learned")
        .map_or(f64::NAN, |x| x.plan_time_ms_mean);

    let spec = BenchmarkSpec::from_config(&c).map_err(|e| e.to_string())?;
    let untrained = EvalModels {
        learned: Some(Arc::new(PredictorModel::Learned(Box::new(InpaintNet::new(1))))),
        ..EvalModels::default()
    };
    let mut uspec = spec.clone();
    uspec.predictors = vec!["learned".into()];
    let urows = run_benchmark(&uspec, &untrained, 1).map_err(|e| e.to_string())?;
    let uacc = aggregate(&urows)[0].acc_mean.clone();
    let train_log = a
        .log
        .iter()
        .find(|l| l.starts_with("train-predictor"))
        .cloned()
        .unwrap_or_default();
    let detail = format!(
        "acc@15/30/45/60 learned {} heuristic {} all-free {} untrained {}; latency {latency:.2} ms; eval {:.0} s; {train_log}",
        fmt(&learned),
        fmt(&heuristic),
        fmt(&free),
        fmt(&uacc),
        took.as_secs_f64()
    );
    for (i, m) in spec.milestones.iter().enumerate() {
        let v = learned.get(i).copied().flatten();
        req!(
            v.is_some_and(|v| v >= 0.60),
            "learned accuracy at step {m} is {v:?}: {detail}"
        );
    }
    let last = |v: &[Option<f64>]| v.last().copied().flatten().unwrap_or(0.0);
    req!(
        last(&learned) > last(&heuristic),
        "learned not above heuristic at step 60: {detail}"
    );
    req!(
        last(&learned) > last(&free),
        "learned not above all-free at step 60: {detail}"
    );
    req!(latency < 10.0, "latency {latency:.2} ms: {detail}");
    req!(
        took < Duration::from_secs(600),
        "evaluation took {:.0} s: {detail}",
        took.as_secs_f64()
    );
    Ok(detail)
}

fn small_policy_config() -> PolicyConfig {
    PolicyConfig {
        d_model: 8,
        heads: 2,
        ffn: 16,
        blocks: 1,
        obs_dim: 4,
        crop_px: 9,
        eps_width: 16,
        eps_blocks: 1,
        t_p: 2,
        ..PolicyConfig::default()
    }
}

struct Fixed(Vec<f64>);

impl NoiseModel<f64> for Fixed {
    fn predict_noise(&self, _: &[f64], _: &[f64], _: f64) -> Result<Vec<f64>, DiffusionError> {
        Ok(self.0.clone())
    }

    fn action_dim(&self) -> usize {
        self.0.len()
    }
}

fn criterion_6() -> Outcome {
    let mut rng = common::rng(106);
    let mut worst_recovery = 0.0f64;
    for k in [1, 10, 30, 100] {
        let s = make_schedule::<f64>(k, COSINE_OFFSET);
        req!(
            s.a_bar.windows(2).all(|w| w[1] < w[0]),
            "a_bar not strictly decreasing for K={k}"
        );
        for _ in 0..20 {
            let a0 = gauss(&mut rng, 16);
            let eps = gauss(&mut rng, 16);
            let ab = s.a_bar(1);
            let a1: Vec<f64> = a0
                .iter()
                .zip(&eps)
                .map(|(a, e)| ab.sqrt() * a + (1.0 - ab).sqrt() * e)
                .collect();
            let z = gauss(&mut rng, 16);
            let out = denoise_step(&a1, 1, &[], &s, &Fixed(eps), &z).map_err(|e| e.to_string())?;
            for (o, a) in out.iter().zip(&a0) {
                worst_recovery = worst_recovery.max((o - a).abs());
            }
        }
    }
    req!(worst_recovery < 1e-5, "recovery error {worst_recovery:e}");

    let cfg = small_policy_config();
    let mut m = DiffusionPolicy::<f64>::new(cfg.clone(), 4);
    for p in m.params_mut() {
        for v in p.data_mut() {
            *v += rng.gen_range(-0.05..0.05);
        }
    }
    let n = 5;
    let robot = rng.gen_range(0..n);
    let nodes: Vec<f64> = (0..n * NODE_FEATURES)
        .map(|i| match i % NODE_FEATURES == NODE_FEATURES - 1 {
            true => f64::from(i / NODE_FEATURES == robot),
            false => rng.gen_range(-1.0..1.0),
        })
        .collect();
    let crop_len = CROP_CHANNELS * cfg.crop_px * cfg.crop_px;
    let inp = PolicyInput {
        nodes: Tensor::from_vec(&[n, NODE_FEATURES], nodes).unwrap(),
        crop: Tensor::from_vec(
            &[CROP_CHANNELS, cfg.crop_px, cfg.crop_px],
            (0..crop_len).map(|_| rng.gen_range(0.0..1.0)).collect(),
        )
        .unwrap(),
    };
    let hist = vec![(0..cfg.embed_dim())
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect::<Vec<f64>>()];
    let a0 = gauss(&mut rng, cfg.action_dim());
    let s = make_schedule::<f64>(20, COSINE_OFFSET);
    let draws: Vec<(usize, Vec<f64>)> = [3, 11, 20]
        .iter()
        .map(|&k| (k, gauss(&mut rng, cfg.action_dim())))
        .collect();
    let loss = |m: &DiffusionPolicy<f64>| {
        let z = m.embed(&inp).unwrap();
        let cond = Conditioning::new(z, &hist, m.config().t_o).flat();
        draws
            .iter()
            .map(|(k, e)| bc_loss(m, &cond, &a0, &s, *k, e).unwrap())
            .sum::<f64>()
            / draws.len() as f64
    };
    m.zero_grad();
    bc_loss_backward(&mut m, &inp, &hist, &a0, &s, &draws, 1.0).map_err(|e| e.to_string())?;
    let analytic: Vec<Vec<f64>> = m.params().iter().map(|p| p.grad().unwrap_or(&[]).to_vec()).collect();
    let (h, mut worst, mut checked) = (1e-6, 0.0f64, 0);
    for (pi, grad) in analytic.iter().enumerate() {
        for idx in [0, grad.len() / 2, grad.len() - 1] {
            let orig = m.params()[pi].data()[idx];
            m.params_mut()[pi].data_mut()[idx] = orig + h;
            let up = loss(&m);
            m.params_mut()[pi].data_mut()[idx] = orig - h;
            let down = loss(&m);
            m.params_mut()[pi].data_mut()[idx] = orig;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max((grad[idx] - numeric).abs() / (grad[idx].abs() + numeric.abs()).max(1e-4));
            checked += 1;
        }
    }
    req!(worst < 1e-3, "worst gradient relative error {worst:e}");
    Ok(format!(
        "recovery error {worst_recovery:.1e}, {checked} gradient entries, worst relative error {worst:.1e}"
    ))
}

fn criterion_7() -> Outcome {
    let pcfg = PolicyConfig {
        d_model: 16,
        heads: 2,
        ffn: 32,
        blocks: 1,
        obs_dim: 8,
        crop_px: 9,
        eps_width: 64,
        eps_blocks: 2,
        t_p: 4,
        ..PolicyConfig::default()
    };
    let predictor = Arc::new(PredictorModel::Heuristic(HeuristicParams::default()));
    let params = CollectParams {
        perturb_prob: 0.0,
        ..CollectParams::default()
    };
    let mut samples: Vec<ExpertSample> = Vec::new();
    for (e, (offset, mirrored)) in [5, 10, 15, 20]
        .iter()
        .flat_map(|&o| [(o, false), (o, true)])
        .enumerate()
    {
        let gt = common::corridor_world(offset, mirrored);
        let base = samples.len();
        let v = collect_expert_samples_in(
            gt,
            &EpisodeConfig::default(),
            predictor.clone(),
            &pcfg,
            e as u32,
            &params,
        )
        .map_err(|e| e.to_string())?;
        samples.extend(v.into_iter().map(|mut s| {
            s.prev = s.prev.map(|p| p + base);
            s
        }));
    }
    let tcfg = PolicyTrainConfig {
        steps: 2000,
        warmup: 20,
        k_train: 30,
        eval_every: 50,
        stop_ratio: Some(0.5),
        eval_samples: 32,
        ..PolicyTrainConfig::default()
    };
    let (_, report) = train_policy(&samples, pcfg, &tcfg).map_err(|e| e.to_string())?;
    req!(
        report.final_eval <= 0.5 * report.initial_eval && report.steps <= 2000,
        "bc loss {:.4} -> {:.4} after {} steps",
        report.initial_eval,
        report.final_eval,
        report.steps
    );

    let cfg = EpisodeConfig {
        world_seed: 3,
        width_m: 30.0,
        height_m: 30.0,
        ..EpisodeConfig::default()
    };
    let rec = collect_prediction_records(&cfg, 0, 1, 6)
        .map_err(|e| e.to_string())?
        .pop()
        .ok_or("no record")?;
    let pcfg = PredictorTrainConfig {
        epochs: 6,
        augment: false,
        ..PredictorTrainConfig::default()
    };
    let (_, pr) = train_predictor(&vec![rec; 100], &pcfg).map_err(|e| e.to_string())?;
    req!(
        pr.val_loss.windows(2).all(|w| w[1] < w[0]),
        "predictor validation loss not monotone: {:?}",
        pr.val_loss
    );
    Ok(format!(
        "bc loss {:.4} -> {:.4} in {} steps on {} samples; predictor val loss {:.4} -> {:.4} over {} epochs",
        report.initial_eval,
        report.final_eval,
        report.steps,
        samples.len(),
        pr.val_loss[0],
        pr.val_loss[pr.val_loss.len() - 1],
        pr.val_loss.len() - 1
    ))
}

/// Ablation rows on seeds 1-30, shared by criteria 8 and 9.
fn ablation() -> &'static Result<(Vec<MetricsRow>, Duration), String> {
    static R: OnceLock<Result<(Vec<MetricsRow>, Duration), String>> = OnceLock::new();
    R.get_or_init(|| {
        run_suite(&eval_config(
            "ablation",
            "1-30",
            "guide,no-region-eval,graph-tsp,expert",
        ))
    })
}

fn criterion_8() -> Outcome {
    let (rows, took) = ablation().as_ref().map_err(|e| e.clone())?;
    let aggs = aggregate(rows);
    let get = |p: PolicyKind| aggs.iter().find(|a| a.policy == p.name()).ok_or(format!("no {p} rows"));
    let (g, n, t) = (
        get(PolicyKind::Guide)?,
        get(PolicyKind::GuideNoRegionEval)?,
        get(PolicyKind::GraphTsp)?,
    );
    let gap = |a: &guide_harness::Aggregate| a.gap_mean.unwrap_or(f64::NAN);
    let detail = format!(
        "mean distance guide {:.1} m ({:.1}%), no-region-eval {:.1} m ({:.1}%), graph-tsp {:.1} m ({:.1}%); {:.0} s",
        g.distance_mean,
        gap(g),
        n.distance_mean,
        gap(n),
        t.distance_mean,
        gap(t),
        took.as_secs_f64()
    );
    req!(
        g.distance_mean <= n.distance_mean,
        "guide above no-region-eval: {detail}"
    );
    req!(
        n.distance_mean <= t.distance_mean,
        "no-region-eval above graph-tsp: {detail}"
    );
    req!(gap(g) <= 25.0, "guide gap above 25%: {detail}");
    req!(*took <= Duration::from_secs(7200), "runtime above 2 h: {detail}");
    Ok(detail)
}

fn criterion_9() -> Outcome {
    let (rows, _) = ablation().as_ref().map_err(|e| e.clone())?;
    let mut c = eval_config("denoise-sweep", "1-30", "guide");
    c.set("eval.k_values", "100").unwrap();
    let (slow, _) = run_suite(&c)?;
    let fast: Vec<MetricsRow> = rows
        .iter()
        .filter(|r| r.policy == PolicyKind::Guide.name())
        .cloned()
        .collect();
    let (a, b) = (&aggregate(&fast)[0], &aggregate(&slow)[0]);
    // Per-step plan time pooled over all steps of all episodes.
    let per_step = |rs: &[MetricsRow]| {
        rs.iter().map(|r| r.plan_time_ms * r.steps as f64).sum::<f64>()
            / rs.iter().map(|r| r.steps).sum::<usize>().max(1) as f64
    };
    let (ta, tb) = (per_step(&fast), per_step(&slow));
    let rel = (a.distance_mean - b.distance_mean).abs() / b.distance_mean;
    let detail = format!(
        "K=30 {:.1} m, {ta:.1} ms/step; K=100 {:.1} m, {tb:.1} ms/step; distance differs by {:.2}%, time ratio {:.3}",
        a.distance_mean,
        b.distance_mean,
        100.0 * rel,
        ta / tb
    );
    req!(rel <= 0.05, "path length not within 5%: {detail}");
    req!(ta <= 0.4 * tb, "plan time ratio above 0.4: {detail}");
    Ok(detail)
}

fn criterion_10() -> Outcome {
    let a = artifacts();
    let mut bytes = Vec::new();
    for run in 0..2 {
        let mut c = eval_config("gap", "1-3", "guide,graph-tsp,no-region-eval,expert");
        let out = artifact_dir().join(format!("determinism-{run}"));
        let paths: [(&str, fn(&Config) -> PathBuf); 4] = [
            ("paths.nodes", pipeline::nodes_path),
            ("paths.predictor", pipeline::predictor_path),
            ("paths.expert", pipeline::expert_path),
            ("paths.policy", pipeline::policy_path),
        ];
        for (key, path) in paths {
            c.set(key, path(&a.config).to_str().unwrap()).unwrap();
        }
        c.set("paths.out", out.to_str().unwrap()).unwrap();
        let o = pipeline::cmd_eval(&c, 1 + 2 * run).map_err(|e| e.to_string())?;
        bytes.push(std::fs::read(&o.csv).map_err(|e| e.to_string())?);
    }
    req!(bytes[0] == bytes[1], "CSV bytes differ between runs");
    Ok(format!("{} identical bytes over two runs", bytes[0].len()))
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let only: Vec<usize> = args.iter().filter_map(|a| a.parse().ok()).collect();
    let strict = args.iter().any(|a| a == "--strict") || std::env::var_os("ACCEPTANCE_STRICT").is_some();
    let criteria: [(usize, fn() -> Outcome); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let mut failed = Vec::new();
    let mut lines = Vec::new();
    for (n, f) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let res = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or(p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let line = match res {
            Ok(d) => format!("criterion {n}: PASS ({d}) [{:.0} s]", t.elapsed().as_secs_f64()),
            Err(d) => {
                failed.push(n);
                format!("criterion {n}: FAIL ({d}) [{:.0} s]", t.elapsed().as_secs_f64())
            }
        };
        println!("{line}");
        lines.push(line);
    }
    let total = lines.len();
    lines.push(if failed.is_empty() {
        format!("acceptance: {total}/{total} criteria passed")
    } else {
        format!(
            "acceptance: {}/{total} criteria passed; failed {failed:?}",
            total - failed.len()
        )
    });
    println!("{}", lines[total]);
    let summary = artifact_dir().join("summary.txt");
    let _ = std::fs::create_dir_all(artifact_dir());
    let _ = std::fs::write(&summary, lines.join("\n") + "\n");
    if strict && !failed.is_empty() {
        std::process::exit(1);
    }
}
