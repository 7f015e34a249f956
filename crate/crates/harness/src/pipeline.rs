//! Dataset, training, evaluation and render commands. Each reads its
//! prerequisites from the configured artifact paths and rewrites its own
//! outputs deterministically.

use std::path::PathBuf;
use std::sync::Arc;

use guide_core::diffusion::{read_expert_dataset, train_policy, write_expert_dataset, DiffusionPolicy, ExpertSample};
use guide_core::planner::{collect_expert_samples, collect_prediction_records, EpisodeConfig, Models, PolicyKind};
use guide_core::predictor::{
    read_dataset, train_predictor, write_dataset, HeuristicParams, InpaintNet, PredictionRecord, PredictorModel,
};
use guide_core::world::write_map;

use crate::config::{parse_seeds, Config};
use crate::eval::{
    check_thresholds, run_benchmark, write_metrics_csv, write_timing_csv, BenchmarkSpec, EvalModels, MetricsRow,
};
use crate::render::{render_episode, RenderOutput};
use crate::{create_file, io_err, open_artifact, run_parallel, HarnessError};

pub fn predictor_path(c: &Config) -> PathBuf {
    c.artifact("paths.predictor", "predictor.gpred")
}

pub fn policy_path(c: &Config) -> PathBuf {
    c.artifact("paths.policy", "policy.gdiff")
}

pub fn nodes_path(c: &Config) -> PathBuf {
    c.artifact("paths.nodes", "nodes.gpd")
}

pub fn expert_path(c: &Config) -> PathBuf {
    c.artifact("paths.expert", "expert.gexp")
}

fn seeds_or(c: &Config, seeds: Option<&[u64]>, first: &str, count: &str) -> Result<Vec<u64>, HarnessError> {
    match seeds {
        Some(s) => Ok(s.to_vec()),
        None => {
            let first: u64 = c.get(first)?;
            let n: u64 = c.get(count)?;
            Ok((first..first + n).collect())
        }
    }
}

/// Writes `worlds/world_<seed>.map` plus an index of start cells.
pub fn cmd_gen_worlds(c: &Config, seeds: Option<&[u64]>) -> Result<Vec<PathBuf>, HarnessError> {
    let seeds = seeds_or(c, seeds, "worlds.first_seed", "worlds.count")?;
    let base = c.episode()?;
    let dir = c.out_dir().join("worlds");
    let mut index = String::from("seed,start_x,start_y,free_cells\n");
    let mut out = Vec::new();
    for s in seeds {
        let gt = EpisodeConfig {
            world_seed: s,
            ..base.clone()
        }
        .world()?;
        let path = dir.join(format!("world_{s}.map"));
        write_map(&mut create_file(&path)?, &gt.grid)?;
        let free = gt
            .grid
            .cells()
            .iter()
            .filter(|&&c| c == guide_core::world::Cell::Free)
            .count();
        index.push_str(&format!("{s},{},{},{free}\n", gt.start.x, gt.start.y));
        out.push(path);
    }
    let path = dir.join("index.csv");
    std::fs::write(&path, index).map_err(io_err(&path))?;
    Ok(out)
}

/// Nearest-frontier episodes recording (observed, ground-truth) raster pairs.
pub fn cmd_collect_nodes(c: &Config, seeds: Option<&[u64]>, jobs: usize) -> Result<usize, HarnessError> {
    let seeds = seeds_or(c, seeds, "nodes.first_seed", "nodes.episodes")?;
    let base = c.episode()?;
    let every: usize = c.get("nodes.every")?;
    let per: usize = c.get("nodes.per_episode")?;
    let parts = run_parallel(seeds.len(), jobs, |i| {
        let cfg = EpisodeConfig {
            world_seed: seeds[i],
            ..base.clone()
        };
        collect_prediction_records(&cfg, i as u64, every, per)
    });
    let mut records: Vec<PredictionRecord> = Vec::new();
    for p in parts {
        records.extend(p?);
    }
    let path = nodes_path(c);
    write_dataset(&mut create_file(&path)?, &records)?;
    Ok(records.len())
}

pub fn load_node_dataset(c: &Config) -> Result<Vec<PredictionRecord>, HarnessError> {
    let path = nodes_path(c);
    Ok(read_dataset(&mut open_artifact(
        &path,
        "node dataset",
        "collect-nodes",
    )?)?)
}

/// Trains the inpainting predictor; returns per-epoch validation losses.
pub fn cmd_train_predictor(c: &Config) -> Result<Vec<f64>, HarnessError> {
    let records = load_node_dataset(c)?;
    let (model, report) = train_predictor(&records, &c.predictor_training()?)?;
    let PredictorModel::Learned(net) = model else {
        unreachable!("training yields a learned model")
    };
    let path = predictor_path(c);
    net.write_to(&mut create_file(&path)?)?;
    Ok(report.val_loss)
}

pub fn load_learned_predictor(c: &Config) -> Result<Arc<PredictorModel>, HarnessError> {
    let path = predictor_path(c);
    let net = InpaintNet::<f32>::read_from(&mut open_artifact(&path, "predictor model", "train-predictor")?)?;
    Ok(Arc::new(PredictorModel::Learned(Box::new(net))))
}

/// The predictor named by `models.predictor`.
pub fn load_predictor(c: &Config) -> Result<Arc<PredictorModel>, HarnessError> {
    match c.raw("models.predictor") {
        "learned" => load_learned_predictor(c),
        "heuristic" => Ok(Arc::new(PredictorModel::Heuristic(HeuristicParams::default()))),
        "all-free" => Ok(Arc::new(PredictorModel::AllFree)),
        p => Err(HarnessError::Config(format!(
            "models.predictor `{p}`: expected learned, heuristic or all-free"
        ))),
    }
}

pub fn load_policy(c: &Config) -> Result<Arc<DiffusionPolicy<f32>>, HarnessError> {
    let path = policy_path(c);
    let p = DiffusionPolicy::<f32>::read_from(&mut open_artifact(&path, "policy model", "train-policy")?)?;
    Ok(Arc::new(p))
}

/// Expert demonstrations on the Guide graph, one episode per seed.
pub fn cmd_collect_expert(c: &Config, seeds: Option<&[u64]>, jobs: usize) -> Result<usize, HarnessError> {
    let seeds = seeds_or(c, seeds, "expert.first_seed", "expert.episodes")?;
    let predictor = load_predictor(c)?;
    let base = c.episode()?;
    let pcfg = c.policy()?;
    let params = c.collect()?;
    let parts = run_parallel(seeds.len(), jobs, |i| {
        let cfg = EpisodeConfig {
            world_seed: seeds[i],
            ..base.clone()
        };
        collect_expert_samples(&cfg, predictor.clone(), &pcfg, i as u32, &params)
    });
    let mut samples: Vec<ExpertSample> = Vec::new();
    for p in parts {
        let mut v = p?;
        let off = samples.len();
        for s in &mut v {
            s.prev = s.prev.map(|p| p + off);
        }
        samples.extend(v);
    }
    let path = expert_path(c);
    write_expert_dataset(&mut create_file(&path)?, &samples)?;
    Ok(samples.len())
}

pub fn load_expert_dataset(c: &Config) -> Result<Vec<ExpertSample>, HarnessError> {
    let path = expert_path(c);
    Ok(read_expert_dataset(&mut open_artifact(
        &path,
        "expert dataset",
        "collect-expert",
    )?)?)
}

/// Behavior cloning; returns the evaluation loss before and after.
pub fn cmd_train_policy(c: &Config) -> Result<(f64, f64), HarnessError> {
    let data = load_expert_dataset(c)?;
    let (policy, report) = train_policy(&data, c.policy()?, &c.policy_training()?)?;
    let path = policy_path(c);
    policy.write_to(&mut create_file(&path)?)?;
    Ok((report.initial_eval, report.final_eval))
}

/// Loads exactly the models the benchmark needs.
pub fn eval_models(c: &Config, spec: &BenchmarkSpec) -> Result<EvalModels, HarnessError> {
    let mut m = EvalModels::default();
    let variants = spec.variants();
    if variants.iter().any(|(p, _)| p.needs_predictor()) {
        m.models.predictor = Some(load_predictor(c)?);
    }
    if variants.iter().any(|(p, _)| p.needs_policy()) {
        m.models.policy = Some(load_policy(c)?);
    }
    if spec.predictors.iter().any(|p| p == "learned") && spec.suite == crate::Suite::Accuracy {
        m.learned = Some(load_learned_predictor(c)?);
    }
    Ok(m)
}

/// Result of [`cmd_eval`].
#[derive(Debug, Clone)]
pub struct EvalOutput {
    pub rows: Vec<MetricsRow>,
    pub csv: PathBuf,
    pub timing: PathBuf,
    /// Threshold failures; empty when every check passes.
    pub failures: Vec<String>,
}

pub fn cmd_eval(c: &Config, jobs: usize) -> Result<EvalOutput, HarnessError> {
    let spec = BenchmarkSpec::from_config(c)?;
    let models = eval_models(c, &spec)?;
    let rows = run_benchmark(&spec, &models, jobs)?;
    let csv = spec.csv_path();
    let mut f = create_file(&csv)?;
    write_metrics_csv(
        &mut f,
        &rows,
        if spec.suite == crate::Suite::Accuracy {
            &spec.milestones
        } else {
            &[]
        },
    )
    .map_err(io_err(&csv))?;
    drop(f);
    let timing = spec.timing_path();
    write_timing_csv(&mut create_file(&timing)?, &rows).map_err(io_err(&timing))?;
    let failures = check_thresholds(&spec, &rows);
    Ok(EvalOutput {
        rows,
        csv,
        timing,
        failures,
    })
}

/// Snapshots of one episode per seed under `<out>/render`.
pub fn cmd_render(
    c: &Config,
    seeds: &[u64],
    policy: PolicyKind,
    dump_regions: bool,
    dump_graph: bool,
) -> Result<RenderOutput, HarnessError> {
    let base = c.episode()?;
    let steps: Vec<usize> = c.list("eval.render_steps")?;
    let mut models = Models::default();
    if policy.needs_predictor() {
        models.predictor = Some(load_predictor(c)?);
    }
    if policy.needs_policy() {
        models.policy = Some(load_policy(c)?);
    }
    let dir = c.out_dir().join("render");
    let mut all = RenderOutput::default();
    for &s in seeds {
        let cfg = EpisodeConfig {
            world_seed: s,
            policy,
            ..base.clone()
        };
        let r = render_episode(&cfg, &models, &steps, &dir, dump_regions, dump_graph)?;
        all.images.extend(r.images);
        all.dumps.extend(r.dumps);
    }
    Ok(all)
}

/// `--seed` for the dataset commands.
pub fn seed_override(spec: Option<&str>) -> Result<Option<Vec<u64>>, HarnessError> {
    spec.map(parse_seeds).transpose()
}
