//! Benchmark suites, per-episode metrics and the CSV writers.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use guide_core::planner::{run_episode, EpisodeConfig, EpisodeTrace, Explorer, Models, PolicyKind};
use guide_core::predictor::{accuracy, HeuristicParams, PredictorModel};

use crate::config::{parse_seeds, Config};
use crate::{run_parallel, HarnessError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Suite {
    Accuracy,
    Gap,
    Ablation,
    DenoiseSweep,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Accuracy => "accuracy",
            Suite::Gap => "gap",
            Suite::Ablation => "ablation",
            Suite::DenoiseSweep => "denoise-sweep",
        }
    }

    pub fn default_policies(self) -> Vec<PolicyKind> {
        match self {
            Suite::Accuracy => Vec::new(),
            Suite::Gap | Suite::Ablation => vec![
                PolicyKind::Guide,
                PolicyKind::GraphTsp,
                PolicyKind::GuideNoRegionEval,
                PolicyKind::ExpertOracle,
            ],
            Suite::DenoiseSweep => vec![PolicyKind::Guide],
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Suite::Accuracy, Suite::Gap, Suite::Ablation, Suite::DenoiseSweep]
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown suite `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSpec {
    pub suite: Suite,
    pub seeds: Vec<u64>,
    pub episode: EpisodeConfig,
    pub policies: Vec<PolicyKind>,
    /// Denoising step counts swept by the denoise-sweep suite.
    pub k_values: Vec<usize>,
    /// Planning steps at which the accuracy suite scores predictors.
    pub milestones: Vec<usize>,
    pub predictors: Vec<String>,
    pub out: PathBuf,
}

impl BenchmarkSpec {
    pub fn from_config(c: &Config) -> Result<Self, HarnessError> {
        let suite: Suite = c.get("eval.suite")?;
        let mut policies: Vec<PolicyKind> = c.list("eval.policies")?;
        if policies.is_empty() {
            policies = suite.default_policies();
        }
        let spec = Self {
            suite,
            seeds: parse_seeds(c.raw("eval.seeds"))?,
            episode: c.episode()?,
            policies,
            k_values: c.list("eval.k_values")?,
            milestones: c.list("eval.milestones")?,
            predictors: c.list("eval.predictors")?,
            out: c.out_dir(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.seeds.is_empty() {
            return bad("seed range is empty");
        }
        match self.suite {
            Suite::Accuracy => {
                if self.milestones.is_empty() || self.predictors.is_empty() {
                    return bad("accuracy suite needs milestones and predictors");
                }
                if let Some(p) = self
                    .predictors
                    .iter()
                    .find(|p| !["heuristic", "learned", "all-free"].contains(&p.as_str()))
                {
                    return Err(HarnessError::Config(format!("unknown predictor `{p}`")));
                }
            }
            Suite::DenoiseSweep if self.k_values.is_empty() || self.k_values.contains(&0) => {
                return bad("denoise-sweep needs positive k values");
            }
            _ if self.policies.is_empty() => return bad("no policies to evaluate"),
            _ => {}
        }
        Ok(())
    }

    pub fn csv_path(&self) -> PathBuf {
        self.out.join(format!("{}.csv", self.suite))
    }

    pub fn timing_path(&self) -> PathBuf {
        self.out.join(format!("{}_timing.csv", self.suite))
    }

    /// `(policy, K)` episode variants evaluated per seed.
    pub fn variants(&self) -> Vec<(PolicyKind, usize)> {
        match self.suite {
            Suite::Accuracy => Vec::new(),
            Suite::DenoiseSweep => self
                .policies
                .iter()
                .flat_map(|&p| {
                    let ks = if p.needs_policy() {
                        self.k_values.clone()
                    } else {
                        vec![self.episode.k_steps]
                    };
                    ks.into_iter().map(move |k| (p, k))
                })
                .collect(),
            _ => self.policies.iter().map(|&p| (p, self.episode.k_steps)).collect(),
        }
    }
}

/// One episode's metrics. Floats are quantized to the precision written to
/// CSV so that aggregates can be recomputed exactly from the file.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub suite: Suite,
    pub policy: String,
    /// Denoising steps, for the learned policies.
    pub k: Option<usize>,
    pub seed: u64,
    pub distance_m: f64,
    pub time_s: f64,
    pub coverage: f64,
    pub complete: bool,
    /// Percent excess distance over the same seed's expert run.
    pub gap_pct: Option<f64>,
    pub acc_by_step: Vec<Option<f64>>,
    /// Mean per-step planning time; for the accuracy suite, mean prediction
    /// latency.
    pub plan_time_ms: f64,
    pub steps: usize,
}

pub const DECIMALS: i32 = 6;

pub fn quantize(x: f64) -> f64 {
    let s = 10f64.powi(DECIMALS);
    (x * s).round() / s
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Sample standard deviation; zero below two values.
fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

pub fn gap_pct(distance: f64, expert: f64) -> f64 {
    100.0 * (distance - expert) / expert
}

/// Per-`(policy, k)` summary over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub suite: Suite,
    pub policy: String,
    pub k: Option<usize>,
    pub n: usize,
    pub distance_mean: f64,
    pub distance_std: f64,
    pub time_mean: f64,
    pub time_std: f64,
    pub coverage_mean: f64,
    pub complete: usize,
    pub gap_mean: Option<f64>,
    pub gap_std: Option<f64>,
    pub acc_mean: Vec<Option<f64>>,
    pub plan_time_ms_mean: f64,
}

/// Groups rows by `(policy, k)` in order of first appearance.
pub fn aggregate(rows: &[MetricsRow]) -> Vec<Aggregate> {
    let mut order: Vec<(String, Option<usize>)> = Vec::new();
    let mut groups: HashMap<(String, Option<usize>), Vec<&MetricsRow>> = HashMap::new();
    for r in rows {
        let key = (r.policy.clone(), r.k);
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let g = &groups[&key];
            let col = |f: &dyn Fn(&MetricsRow) -> f64| g.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let gaps: Vec<f64> = g.iter().filter_map(|r| r.gap_pct).collect();
            let n_acc = g.iter().map(|r| r.acc_by_step.len()).max().unwrap_or(0);
            let acc_mean = (0..n_acc)
                .map(|i| {
                    let v: Vec<f64> = g
                        .iter()
                        .filter_map(|r| r.acc_by_step.get(i).copied().flatten())
                        .collect();
                    (!v.is_empty()).then(|| mean(&v))
                })
                .collect();
            let d = col(&|r| r.distance_m);
            let t = col(&|r| r.time_s);
            Aggregate {
                suite: g[0].suite,
                policy: key.0.clone(),
                k: key.1,
                n: g.len(),
                distance_mean: mean(&d),
                distance_std: std_dev(&d),
                time_mean: mean(&t),
                time_std: std_dev(&t),
                coverage_mean: mean(&col(&|r| r.coverage)),
                complete: g.iter().filter(|r| r.complete).count(),
                gap_mean: (!gaps.is_empty()).then(|| mean(&gaps)),
                gap_std: (!gaps.is_empty()).then(|| std_dev(&gaps)),
                acc_mean,
                plan_time_ms_mean: mean(&col(&|r| r.plan_time_ms)),
            }
        })
        .collect()
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map(|x| format!("{x:.prec$}")).unwrap_or_default()
}

fn opt_k(k: Option<usize>) -> String {
    k.map(|k| k.to_string()).unwrap_or_default()
}

/// Per-episode rows, then a `# aggregate` block. Timing is excluded so the
/// file is reproducible byte for byte.
pub fn write_metrics_csv<W: Write>(w: &mut W, rows: &[MetricsRow], milestones: &[usize]) -> std::io::Result<()> {
    let p = DECIMALS as usize;
    let acc_head: String = milestones.iter().map(|m| format!(",acc_{m}")).collect();
    writeln!(
        w,
        "suite,policy,k,seed,distance_m,time_s,coverage,complete,gap_pct{acc_head}"
    )?;
    for r in rows {
        let acc: String = (0..milestones.len())
            .map(|i| format!(",{}", opt(r.acc_by_step.get(i).copied().flatten(), p)))
            .collect();
        writeln!(
            w,
            "{},{},{},{},{:.p$},{:.p$},{:.p$},{},{}{acc}",
            r.suite,
            r.policy,
            opt_k(r.k),
            r.seed,
            r.distance_m,
            r.time_s,
            r.coverage,
            r.complete as u8,
            opt(r.gap_pct, p),
        )?;
    }
    let acc_head: String = milestones.iter().map(|m| format!(",acc_{m}_mean")).collect();
    writeln!(w, "# aggregate")?;
    writeln!(
        w,
        "suite,policy,k,n,distance_mean,distance_std,time_mean,time_std,coverage_mean,complete,gap_mean,gap_std{acc_head}"
    )?;
    for a in aggregate(rows) {
        let acc: String = (0..milestones.len())
            .map(|i| format!(",{}", opt(a.acc_mean.get(i).copied().flatten(), 10)))
            .collect();
        writeln!(
            w,
            "{},{},{},{},{:.10},{:.10},{:.10},{:.10},{:.10},{},{},{}{acc}",
            a.suite,
            a.policy,
            opt_k(a.k),
            a.n,
            a.distance_mean,
            a.distance_std,
            a.time_mean,
            a.time_std,
            a.coverage_mean,
            a.complete,
            opt(a.gap_mean, 10),
            opt(a.gap_std, 10),
        )?;
    }
    Ok(())
}

/// Wall-clock planning times, kept apart from the reproducible metrics.
pub fn write_timing_csv<W: Write>(w: &mut W, rows: &[MetricsRow]) -> std::io::Result<()> {
    writeln!(w, "suite,policy,k,seed,steps,plan_time_ms")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{:.3}",
            r.suite,
            r.policy,
            opt_k(r.k),
            r.seed,
            r.steps,
            r.plan_time_ms
        )?;
    }
    Ok(())
}

fn row_from_trace(suite: Suite, t: &EpisodeTrace, k: usize, expert: Option<f64>) -> MetricsRow {
    MetricsRow {
        suite,
        policy: t.policy.name().to_string(),
        k: t.policy.needs_policy().then_some(k),
        seed: t.world_seed,
        distance_m: quantize(t.distance),
        time_s: quantize(t.time_s),
        coverage: quantize(t.coverage),
        complete: t.complete,
        gap_pct: expert.map(|e| quantize(gap_pct(quantize(t.distance), quantize(e)))),
        acc_by_step: Vec::new(),
        plan_time_ms: mean(&t.plan_ms),
        steps: t.steps.len(),
    }
}

/// Models available to a benchmark run.
#[derive(Debug, Clone, Default)]
pub struct EvalModels {
    pub models: Models,
    /// Learned predictor for the accuracy suite, independent of `models`.
    pub learned: Option<Arc<PredictorModel>>,
}

/// Runs every episode of the benchmark on up to `jobs` threads. Rows come back in
/// seed-major, variant-minor order regardless of scheduling.
pub fn run_benchmark(spec: &BenchmarkSpec, m: &EvalModels, jobs: usize) -> Result<Vec<MetricsRow>, HarnessError> {
    spec.validate()?;
    if spec.suite == Suite::Accuracy {
        return run_accuracy(spec, m, jobs);
    }
    let variants = spec.variants();
    for &(p, _) in &variants {
        if p.needs_predictor() && m.models.predictor.is_none() {
            return Err(HarnessError::Missing {
                what: "predictor model",
                path: PathBuf::from("<paths.predictor>"),
                command: "train-predictor",
            });
        }
        if p.needs_policy() && m.models.policy.is_none() {
            return Err(HarnessError::Missing {
                what: "policy model",
                path: PathBuf::from("<paths.policy>"),
                command: "train-policy",
            });
        }
    }
    let per_seed = variants.len() + 1;
    let n = spec.seeds.len() * per_seed;
    let traces = run_parallel(n, jobs, |i| {
        let seed = spec.seeds[i / per_seed];
        let (policy, k) = match i % per_seed {
            0 => (PolicyKind::ExpertOracle, spec.episode.k_steps),
            v => variants[v - 1],
        };
        let cfg = EpisodeConfig {
            world_seed: seed,
            policy,
            k_steps: k,
            ..spec.episode.clone()
        };
        run_episode(&cfg, &m.models)
    });
    let mut rows = Vec::with_capacity(spec.seeds.len() * variants.len());
    let mut traces = traces.into_iter();
    for _ in &spec.seeds {
        let expert = traces.next().expect("expert trace")?;
        for &(_, k) in &variants {
            let t = traces.next().expect("variant trace")?;
            rows.push(row_from_trace(spec.suite, &t, k, Some(expert.distance)));
        }
    }
    Ok(rows)
}

fn predictor_for(name: &str, m: &EvalModels) -> Result<Arc<PredictorModel>, HarnessError> {
    match name {
        "heuristic" => Ok(Arc::new(PredictorModel::Heuristic(HeuristicParams::default()))),
        "all-free" => Ok(Arc::new(PredictorModel::AllFree)),
        _ => m.learned.clone().ok_or(HarnessError::Missing {
            what: "learned predictor",
            path: PathBuf::from("<paths.predictor>"),
            command: "train-predictor",
        }),
    }
}

/// Drives a nearest-frontier episode per seed and scores each predictor's
/// region-evaluated nodes at the milestone steps. Every predictor sees the
/// same beliefs.
fn run_accuracy(spec: &BenchmarkSpec, m: &EvalModels, jobs: usize) -> Result<Vec<MetricsRow>, HarnessError> {
    let predictors = spec
        .predictors
        .iter()
        .map(|p| predictor_for(p, m))
        .collect::<Result<Vec<_>, _>>()?;
    let last = spec.milestones.iter().copied().max().unwrap_or(0);
    let per_seed = run_parallel(spec.seeds.len(), jobs, |i| -> Result<Vec<MetricsRow>, HarnessError> {
        let cfg = EpisodeConfig {
            world_seed: spec.seeds[i],
            policy: PolicyKind::NearestFrontier,
            ..spec.episode.clone()
        };
        let mut ex = Explorer::new(cfg, Models::default())?;
        let mut acc = vec![vec![None; spec.milestones.len()]; predictors.len()];
        let mut latency = vec![Vec::new(); predictors.len()];
        let mut step = 0;
        loop {
            for (mi, _) in spec.milestones.iter().enumerate().filter(|(_, &s)| s == step) {
                for (pi, p) in predictors.iter().enumerate() {
                    let t0 = Instant::now();
                    let vu = ex.region_evaluated_nodes(p)?;
                    latency[pi].push(t0.elapsed().as_secs_f64() * 1e3);
                    let coords: Vec<_> = vu.iter().map(|u| u.coord).collect();
                    acc[pi][mi] = accuracy(&coords, &ex.gt, &ex.lattice).map(quantize);
                }
            }
            if step >= last || !ex.step()? {
                break;
            }
            step += 1;
        }
        let t = &ex.trace;
        Ok(spec
            .predictors
            .iter()
            .enumerate()
            .map(|(pi, name)| MetricsRow {
                suite: Suite::Accuracy,
                policy: name.clone(),
                k: None,
                seed: t.world_seed,
                distance_m: quantize(t.distance),
                time_s: quantize(t.distance / spec.episode.v_max),
                coverage: quantize(ex.coverage()),
                complete: ex.is_done() && t.complete,
                gap_pct: None,
                acc_by_step: acc[pi].clone(),
                plan_time_ms: mean(&latency[pi]),
                steps: latency[pi].len(),
            })
            .collect())
    });
    let mut by_seed = Vec::new();
    for r in per_seed {
        by_seed.push(r?);
    }
    // Predictor-major order keeps each predictor's rows together.
    Ok((0..spec.predictors.len())
        .flat_map(|pi| by_seed.iter().map(move |rows| rows[pi].clone()))
        .collect())
}

/// Threshold checks behind `eval --assert`; one message per failure.
pub fn check_thresholds(spec: &BenchmarkSpec, rows: &[MetricsRow]) -> Vec<String> {
    let aggs = aggregate(rows);
    let find = |p: &str, k: Option<usize>| aggs.iter().find(|a| a.policy == p && (k.is_none() || a.k == k));
    let mut fails = Vec::new();
    match spec.suite {
        Suite::Accuracy => {
            let get = |p: &str| find(p, None);
            if let Some(l) = get("learned") {
                for (i, m) in spec.milestones.iter().enumerate() {
                    match l.acc_mean.get(i).copied().flatten() {
                        Some(a) if a >= 0.60 => {}
                        a => fails.push(format!("learned accuracy at step {m} is {a:?}, below 0.60")),
                    }
                }
                let at_last = |a: &Aggregate| a.acc_mean.last().copied().flatten().unwrap_or(0.0);
                for other in ["all-free", "heuristic"] {
                    if let Some(o) = get(other) {
                        if at_last(l) <= at_last(o) {
                            fails.push(format!(
                                "learned accuracy does not exceed {other} at the last milestone"
                            ));
                        }
                    }
                }
                if l.plan_time_ms_mean >= 10.0 {
                    fails.push(format!(
                        "learned prediction latency {:.2} ms is not under 10 ms",
                        l.plan_time_ms_mean
                    ));
                }
            }
        }
        Suite::Gap | Suite::Ablation => {
            let d = |p: PolicyKind| find(p.name(), None).map(|a| a.distance_mean);
            if let Some(g) = find(PolicyKind::Guide.name(), None) {
                if g.gap_mean.unwrap_or(f64::INFINITY) > 25.0 {
                    fails.push(format!(
                        "guide mean gap {:.2}% exceeds 25%",
                        g.gap_mean.unwrap_or(f64::NAN)
                    ));
                }
            }
            if spec.suite == Suite::Ablation {
                let chain = [PolicyKind::Guide, PolicyKind::GuideNoRegionEval, PolicyKind::GraphTsp];
                for w in chain.windows(2) {
                    if let (Some(a), Some(b)) = (d(w[0]), d(w[1])) {
                        if a > b {
                            fails.push(format!("mean distance {} {a:.3} exceeds {} {b:.3}", w[0], w[1]));
                        }
                    }
                }
            }
        }
        Suite::DenoiseSweep => {
            let mut ks = spec.k_values.clone();
            ks.sort_unstable();
            if let (Some(&lo), Some(&hi)) = (ks.first(), ks.last()) {
                let name = PolicyKind::Guide.name();
                if let (Some(a), Some(b)) = (find(name, Some(lo)), find(name, Some(hi))) {
                    let rel = (a.distance_mean - b.distance_mean).abs() / b.distance_mean;
                    if rel > 0.05 {
                        fails.push(format!("K={lo} distance differs from K={hi} by {:.2}%", 100.0 * rel));
                    }
                    let ratio = a.plan_time_ms_mean / b.plan_time_ms_mean;
                    if ratio > 0.4 {
                        fails.push(format!("K={lo} plan time is {ratio:.3} of K={hi}"));
                    }
                }
            }
        }
    }
    fails
}
