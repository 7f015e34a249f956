//! Line-oriented `key = value` configuration with includes.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use guide_core::diffusion::{PolicyConfig, PolicyTrainConfig};
use guide_core::planner::{CollectParams, EpisodeConfig, PolicyKind};
use guide_core::predictor::{PredictParams, PredictorTrainConfig};
use guide_core::regions::{RegionScoreParams, ThresholdMode};
use guide_core::world::{SensingMode, SensorModel};

use crate::HarnessError;

/// Every recognized key with its default value.
pub const DEFAULTS: &[(&str, &str)] = &[
    ("world.width_m", "50"),
    ("world.height_m", "50"),
    ("world.d_m", "0.4"),
    ("world.corridor_w", "6"),
    ("sensor.range_m", "10"),
    ("sensor.beams", "360"),
    ("sensor.mode", "per-cell"),
    ("graph.d_n", "2"),
    ("graph.utility_radius_m", "5"),
    ("regions.s_g", "8"),
    ("regions.omega_f", "1"),
    ("regions.omega_r", "1"),
    ("regions.k", "5"),
    ("regions.threshold", "mean"),
    ("predict.tau", "0.5"),
    ("predict.c_min", "3"),
    ("predict.rho_min", "0.25"),
    ("episode.k_steps", "30"),
    ("episode.t_a", "2"),
    ("episode.coverage_stop", "0.99"),
    ("episode.v_max", "1"),
    ("episode.step_cap_factor", "20"),
    ("episode.stall_steps", "6"),
    ("episode.plan_seed", "0"),
    ("worlds.count", "30"),
    ("worlds.first_seed", "1"),
    ("nodes.episodes", "50"),
    ("nodes.first_seed", "10000"),
    ("nodes.every", "3"),
    ("nodes.per_episode", "20"),
    ("predictor.epochs", "20"),
    ("predictor.lr", "0.002"),
    ("predictor.batch", "8"),
    ("predictor.seed", "1"),
    ("predictor.augment", "true"),
    ("expert.episodes", "400"),
    ("expert.first_seed", "20000"),
    ("expert.perturb_prob", "0.15"),
    ("expert.perturb_max", "4"),
    ("expert.seed", "0"),
    ("policy.d_model", "32"),
    ("policy.heads", "2"),
    ("policy.ffn", "64"),
    ("policy.blocks", "2"),
    ("policy.obs_dim", "64"),
    ("policy.node_cap", "512"),
    ("policy.eps_width", "512"),
    ("policy.eps_blocks", "3"),
    ("policy.t_o", "2"),
    ("policy.t_p", "8"),
    ("policy.max_step", "2"),
    ("train.steps", "4000"),
    ("train.batch", "8"),
    ("train.draws", "8"),
    ("train.lr", "0.001"),
    ("train.warmup", "100"),
    ("train.k_train", "100"),
    ("train.ema", "0.995"),
    ("train.seed", "1"),
    ("models.predictor", "learned"),
    ("eval.suite", "gap"),
    ("eval.seeds", "1-30"),
    ("eval.policies", ""),
    ("eval.k_values", "30,100"),
    ("eval.milestones", "15,30,45,60"),
    ("eval.predictors", "heuristic,learned,all-free"),
    ("eval.render_steps", "10,30,60"),
    ("paths.out", "out"),
    ("paths.predictor", ""),
    ("paths.policy", ""),
    ("paths.nodes", ""),
    ("paths.expert", ""),
];

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            values: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl Config {
    /// Defaults overlaid with the file at `path` and everything it includes.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let mut c = Self::default();
        c.merge_file(path, &mut Vec::new())?;
        Ok(c)
    }

    pub fn parse_str(text: &str) -> Result<Self, HarnessError> {
        let mut c = Self::default();
        c.merge_text(text, Path::new("."), "<string>", &mut Vec::new())?;
        Ok(c)
    }

    fn merge_file(&mut self, path: &Path, stack: &mut Vec<PathBuf>) -> Result<(), HarnessError> {
        let canon = path
            .canonicalize()
            .map_err(|e| HarnessError::Io(path.display().to_string(), e))?;
        if stack.contains(&canon) {
            return Err(HarnessError::Config(format!(
                "include cycle through {}",
                path.display()
            )));
        }
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(path.display().to_string(), e))?;
        stack.push(canon);
        let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        self.merge_text(&text, &dir, &path.display().to_string(), stack)?;
        stack.pop();
        Ok(())
    }

    fn merge_text(&mut self, text: &str, dir: &Path, name: &str, stack: &mut Vec<PathBuf>) -> Result<(), HarnessError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(HarnessError::Config(format!(
                    "{name}:{}: expected `key = value`",
                    n + 1
                )));
            };
            let (k, v) = (k.trim(), v.trim());
            if k == "include" {
                self.merge_file(&dir.join(v), stack)?;
            } else {
                self.set(k, v)
                    .map_err(|e| HarnessError::Config(format!("{name}:{}: {e}", n + 1)))?;
            }
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        if !self.values.contains_key(key) {
            return Err(HarnessError::Config(format!("unknown key `{key}`")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, HarnessError>
    where
        T::Err: Display,
    {
        let v = self.raw(key);
        v.parse()
            .map_err(|e| HarnessError::Config(format!("`{key} = {v}`: {e}")))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, HarnessError>
    where
        T::Err: Display,
    {
        self.raw(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|e| HarnessError::Config(format!("`{key}` entry `{s}`: {e}")))
            })
            .collect()
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.raw("paths.out"))
    }

    /// Artifact path: the configured value, or `default` inside the output
    /// directory.
    pub fn artifact(&self, key: &str, default: &str) -> PathBuf {
        match self.raw(key) {
            "" => self.out_dir().join(default),
            p => PathBuf::from(p),
        }
    }

    pub fn episode(&self) -> Result<EpisodeConfig, HarnessError> {
        let mode = match self.raw("sensor.mode") {
            "per-cell" => SensingMode::PerCell,
            "beams" => SensingMode::Beams,
            m => {
                return Err(HarnessError::Config(format!(
                    "sensor.mode `{m}`: expected per-cell or beams"
                )))
            }
        };
        let threshold = match self.raw("regions.threshold") {
            "mean" => ThresholdMode::Mean,
            t => match t.strip_prefix("top:").and_then(|q| q.parse::<f64>().ok()) {
                Some(q) if q > 0.0 && q <= 1.0 => ThresholdMode::TopQuantile(q),
                _ => {
                    return Err(HarnessError::Config(format!(
                        "regions.threshold `{t}`: expected mean or top:<q>"
                    )))
                }
            },
        };
        let omega_f: f64 = self.get("regions.omega_f")?;
        let omega_r: f64 = self.get("regions.omega_r")?;
        let k: usize = self.get("regions.k")?;
        if omega_f <= 0.0 || omega_r <= 0.0 || k == 0 {
            return Err(HarnessError::Config(
                "region weights must be positive and k at least 1".into(),
            ));
        }
        let cfg = EpisodeConfig {
            world_seed: 1,
            width_m: self.get("world.width_m")?,
            height_m: self.get("world.height_m")?,
            d_m: self.get("world.d_m")?,
            corridor_w: self.get("world.corridor_w")?,
            sensor: SensorModel::new(self.get("sensor.range_m")?, self.get("sensor.beams")?).with_mode(mode),
            d_n: self.get("graph.d_n")?,
            s_g: self.get("regions.s_g")?,
            utility_radius_m: self.get("graph.utility_radius_m")?,
            score: RegionScoreParams::new(omega_f, omega_r, k),
            threshold,
            predict: PredictParams {
                tau: self.get("predict.tau")?,
                c_min: self.get("predict.c_min")?,
                rho_min: self.get("predict.rho_min")?,
            },
            policy: PolicyKind::NearestFrontier,
            k_steps: self.get("episode.k_steps")?,
            t_a: self.get("episode.t_a")?,
            coverage_stop: self.get("episode.coverage_stop")?,
            v_max: self.get("episode.v_max")?,
            step_cap_factor: self.get("episode.step_cap_factor")?,
            max_moves: None,
            plan_seed: self.get("episode.plan_seed")?,
            stall_steps: self.get("episode.stall_steps")?,
        };
        if !(cfg.predict.tau > 0.0 && cfg.predict.tau < 1.0) {
            return Err(HarnessError::Config("predict.tau must lie in (0, 1)".into()));
        }
        if cfg.t_a == 0 || cfg.k_steps == 0 || cfg.v_max <= 0.0 {
            return Err(HarnessError::Config(
                "episode.t_a, episode.k_steps and episode.v_max must be positive".into(),
            ));
        }
        Ok(cfg)
    }

    pub fn policy(&self) -> Result<PolicyConfig, HarnessError> {
        Ok(PolicyConfig {
            d_model: self.get("policy.d_model")?,
            heads: self.get("policy.heads")?,
            ffn: self.get("policy.ffn")?,
            blocks: self.get("policy.blocks")?,
            obs_dim: self.get("policy.obs_dim")?,
            node_cap: self.get("policy.node_cap")?,
            eps_width: self.get("policy.eps_width")?,
            eps_blocks: self.get("policy.eps_blocks")?,
            t_o: self.get("policy.t_o")?,
            t_p: self.get("policy.t_p")?,
            max_step: self.get("policy.max_step")?,
            ..PolicyConfig::default()
        })
    }

    pub fn policy_training(&self) -> Result<PolicyTrainConfig, HarnessError> {
        Ok(PolicyTrainConfig {
            steps: self.get("train.steps")?,
            batch: self.get("train.batch")?,
            draws: self.get("train.draws")?,
            lr: self.get("train.lr")?,
            warmup: self.get("train.warmup")?,
            k_train: self.get("train.k_train")?,
            ema: self.get("train.ema")?,
            seed: self.get("train.seed")?,
            ..PolicyTrainConfig::default()
        })
    }

    pub fn predictor_training(&self) -> Result<PredictorTrainConfig, HarnessError> {
        Ok(PredictorTrainConfig {
            epochs: self.get("predictor.epochs")?,
            lr: self.get("predictor.lr")?,
            batch: self.get("predictor.batch")?,
            seed: self.get("predictor.seed")?,
            augment: self.get("predictor.augment")?,
            ..PredictorTrainConfig::default()
        })
    }

    pub fn collect(&self) -> Result<CollectParams, HarnessError> {
        Ok(CollectParams {
            perturb_prob: self.get("expert.perturb_prob")?,
            perturb_max: self.get("expert.perturb_max")?,
            seed: self.get("expert.seed")?,
        })
    }
}

/// `N`, `A-B` (inclusive) or a comma list of either.
pub fn parse_seeds(spec: &str) -> Result<Vec<u64>, HarnessError> {
    let bad = || HarnessError::Config(format!("seed spec `{spec}`: expected N, A-B or a comma list"));
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (
                    a.trim().parse().map_err(|_| bad())?,
                    b.trim().parse().map_err(|_| bad())?,
                );
                if b < a {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_build_valid_configs() {
        let c = Config::default();
        let e = c.episode().unwrap();
        assert_eq!(
            e,
            EpisodeConfig {
                world_seed: 1,
                ..EpisodeConfig::default()
            }
        );
        assert_eq!(c.policy().unwrap(), PolicyConfig::default());
    }

    #[test]
    fn includes_are_resolved_relative_and_later_keys_win() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("sub")).unwrap();
        std::fs::write(
            dir.path().join("sub/base.cfg"),
            "world.width_m = 30\ngraph.d_n = 1 # comment\n",
        )
        .unwrap();
        std::fs::write(
            dir.path().join("main.cfg"),
            "include = sub/base.cfg\nworld.width_m = 40\n",
        )
        .unwrap();
        let c = Config::load(&dir.path().join("main.cfg")).unwrap();
        assert_eq!(c.get::<f64>("world.width_m").unwrap(), 40.0);
        assert_eq!(c.get::<f64>("graph.d_n").unwrap(), 1.0);
    }

    #[test]
    fn include_cycles_and_unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.cfg"), "include = b.cfg\n").unwrap();
        std::fs::write(dir.path().join("b.cfg"), "include = a.cfg\n").unwrap();
        assert!(matches!(
            Config::load(&dir.path().join("a.cfg")),
            Err(HarnessError::Config(_))
        ));
        assert!(Config::parse_str("world.bogus = 1").is_err());
        assert!(Config::parse_str("no equals sign").is_err());
        assert!(Config::parse_str("predict.tau = 1.5").unwrap().episode().is_err());
    }

    #[test]
    fn seed_specs() {
        assert_eq!(parse_seeds("3").unwrap(), vec![3]);
        assert_eq!(parse_seeds("1-3,7").unwrap(), vec![1, 2, 3, 7]);
        assert!(parse_seeds("5-2").is_err());
        assert!(parse_seeds("").is_err());
    }
}
