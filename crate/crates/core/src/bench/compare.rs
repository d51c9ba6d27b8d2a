use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use super::config::ScenarioConfig;
use super::metrics::{read_summary, SummaryFile};
use super::runner::{run_logical, RunError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Throughput,
    Backlog,
    Stall,
    All,
}

impl FromStr for Metric {
    type Err = CompareError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "throughput" => Ok(Metric::Throughput),
            "backlog" => Ok(Metric::Backlog),
            "stall" => Ok(Metric::Stall),
            "all" => Ok(Metric::All),
            other => Err(CompareError::UnknownMetric(other.to_string())),
        }
    }
}

#[derive(Debug, Error)]
pub enum CompareError {
    #[error("unknown metric {0:?}; expected throughput, backlog, stall or all")]
    UnknownMetric(String),
    #[error("comparison needs at least two runs, got {0}")]
    TooFewRuns(usize),
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Run(#[from] RunError),
}

impl CompareError {
    pub fn is_config(&self) -> bool {
        match self {
            CompareError::Run(e) => e.is_config(),
            CompareError::Read { .. } => false,
            _ => true,
        }
    }
}

const COLUMNS: [(&str, Metric); 3] = [
    ("avg_throughput_mbps", Metric::Throughput),
    ("mean_total_backlog_mb", Metric::Backlog),
    ("stall_total_s", Metric::Stall),
];

fn value(s: &SummaryFile, m: Metric) -> f64 {
    match m {
        Metric::Throughput => s.summary.avg_throughput_mbps,
        Metric::Backlog => s.summary.mean_total_backlog_mb,
        Metric::Stall => s.summary.stall_total_s,
        Metric::All => unreachable!(),
    }
}

/// One row per run.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub metric: Metric,
    pub runs: Vec<SummaryFile>,
}

/// Loads a run: a directory holding `summary.json`, or a scenario file that is
/// run in logical mode.
pub fn load_run(path: &Path) -> Result<SummaryFile, CompareError> {
    if path.is_dir() {
        return read_summary(path).map_err(|source| CompareError::Read {
            path: path.to_path_buf(),
            source,
        });
    }
    let cfg = ScenarioConfig::load(path).map_err(RunError::from)?;
    Ok(run_logical(&cfg)?.summary_file())
}

pub fn compare(paths: &[PathBuf], metric: &str) -> Result<Comparison, CompareError> {
    let metric: Metric = metric.parse()?;
    if paths.len() < 2 {
        return Err(CompareError::TooFewRuns(paths.len()));
    }
    let runs = paths
        .iter()
        .map(|p| load_run(p))
        .collect::<Result<_, _>>()?;
    Ok(Comparison { metric, runs })
}

impl Comparison {
    fn columns(&self) -> Vec<(&'static str, Metric)> {
        COLUMNS
            .iter()
            .copied()
            .filter(|(_, m)| self.metric == Metric::All || *m == self.metric)
            .collect()
    }

    /// Values of `metric` in run order.
    pub fn column(&self, metric: Metric) -> Vec<f64> {
        self.runs.iter().map(|r| value(r, metric)).collect()
    }

    pub fn to_csv(&self) -> String {
        let cols = self.columns();
        let mut s = String::from("run,policy,delay_ttis,seed");
        for (name, _) in &cols {
            let _ = write!(s, ",{name}");
        }
        s.push('\n');
        for r in &self.runs {
            let _ = write!(s, "{},{},{},{}", r.name, r.policy, r.delay_ttis, r.seed);
            for (_, m) in &cols {
                let _ = write!(s, ",{}", value(r, *m));
            }
            s.push('\n');
        }
        s
    }

    pub fn to_table(&self) -> String {
        let cols = self.columns();
        let label = |r: &SummaryFile| format!("{} [{} +{} TTI]", r.name, r.policy, r.delay_ttis);
        let width = self
            .runs
            .iter()
            .map(|r| label(r).len())
            .max()
            .unwrap_or(0)
            .max(3);
        let mut s = format!("{:width$}", "run");
        for (name, _) in &cols {
            let _ = write!(s, "  {name:>22}");
        }
        s.push('\n');
        for r in &self.runs {
            let _ = write!(s, "{:width$}", label(r));
            for (_, m) in &cols {
                let _ = write!(s, "  {:>22.3}", value(r, *m));
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_names() {
        assert_eq!("stall".parse::<Metric>().unwrap(), Metric::Stall);
        assert!(matches!(
            "latency".parse::<Metric>(),
            Err(CompareError::UnknownMetric(_))
        ));
    }

    #[test]
    fn needs_two_runs() {
        assert!(matches!(
            compare(&[PathBuf::from("a")], "all"),
            Err(CompareError::TooFewRuns(1))
        ));
    }
}
