//! Dataset generation, training, benchmark suites and rendering for the
//! exploration planner.

pub mod config;
pub mod eval;
pub mod pipeline;
pub mod render;

use std::path::{Path, PathBuf};

use thiserror::Error;

use guide_core::diffusion::DiffusionError;
use guide_core::nodegraph::GraphError;
use guide_core::planner::PlanError;
use guide_core::predictor::PredictError;
use guide_core::regions::RegionError;
use guide_core::world::WorldError;

pub use config::{parse_seeds, Config};
pub use eval::{aggregate, run_benchmark, Aggregate, BenchmarkSpec, MetricsRow, Suite};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{what} not found at {path}; run `guide {command}` first")]
    Missing {
        what: &'static str,
        path: PathBuf,
        command: &'static str,
    },
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Region(#[from] RegionError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |e| HarnessError::Io(path.display().to_string(), e)
}

pub(crate) fn create_file(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(std::io::BufWriter::new(
        std::fs::File::create(path).map_err(io_err(path))?,
    ))
}

/// Opens a prerequisite artifact, naming the command that produces it when
/// it is absent.
pub(crate) fn open_artifact(
    path: &Path,
    what: &'static str,
    command: &'static str,
) -> Result<std::io::BufReader<std::fs::File>, HarnessError> {
    match std::fs::File::open(path) {
        Ok(f) => Ok(std::io::BufReader::new(f)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(HarnessError::Missing {
            what,
            path: path.to_path_buf(),
            command,
        }),
        Err(e) => Err(HarnessError::Io(path.display().to_string(), e)),
    }
}

/// Runs `f(0..n)` on up to `jobs` threads; results keep index order.
pub fn run_parallel<T, F>(n: usize, jobs: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, n.max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = f(i);
                slots.lock().expect("collector lock")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("collector lock")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}
