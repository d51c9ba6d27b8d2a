use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tracing::info;

use ricworld::bench::compare::compare;
use ricworld::bench::config::{ConfigError, RunMode, ScenarioConfig, ENV_OUT};
use ricworld::bench::env::{serve, EnvSession};
use ricworld::bench::runner::{ric_process_main, run_scenario, RunError, RunOptions};
use ricworld::edgeric::{PolicyKind, DEFAULT_EWMA_ALPHA};
use ricworld::policy_format::{Normalization, PolicyNetwork, StateLayout, DEFAULT_HIDDEN};

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

#[derive(Parser)]
#[command(
    name = "ricworld",
    version,
    about = "TTI-clocked RAN emulator with a realtime RIC"
)]
struct Cli {
    /// Log verbosity: -v info, -vv debug.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
#[value(rename_all = "snake_case")]
enum PolicyName {
    CqiFair,
    PropFair,
    MaxWeight,
    Neural,
    FixedEqual,
}

#[derive(Subcommand)]
enum Cmd {
    /// Runs one scenario and writes its metrics.
    Run {
        config: PathBuf,
        #[arg(long)]
        mode: Option<RunMode>,
        #[arg(long)]
        policy: Option<PolicyName>,
        /// EWMA factor for prop_fair.
        #[arg(long)]
        alpha: Option<f64>,
        /// Network file for the neural policy.
        #[arg(long)]
        policy_file: Option<PathBuf>,
        /// One-way RAN/RIC delay in TTIs.
        #[arg(long)]
        delay: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        duration: Option<u64>,
        /// Output directory; defaults to `runs/<name>`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        ric_exe: Option<PathBuf>,
        /// Kills the RIC process at this TTI (realtime_process mode).
        #[arg(long)]
        kill_ric_at: Option<u64>,
    },
    /// Tabulates runs given as output directories or scenario files.
    Compare {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// throughput, backlog, stall or all.
        #[arg(long, default_value = "all")]
        metric: String,
        /// Also writes the table as CSV here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Serves the scenario as a reset/step environment on a Unix socket.
    ServeEnv {
        config: PathBuf,
        #[arg(long, env = "RICWORLD_SOCKET")]
        socket: Option<PathBuf>,
        /// Exits after the first client disconnects.
        #[arg(long)]
        once: bool,
    },
    /// Writes a randomly initialized policy network.
    InitPolicy {
        #[arg(long)]
        n_ues: usize,
        #[arg(long, default_value = "throughput")]
        layout: LayoutName,
        #[arg(long, default_value_t = 3_000_000.0)]
        backlog_scale: f32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// RIC side of realtime_process mode.
    #[command(hide = true)]
    Ric {
        #[arg(long)]
        socket: PathBuf,
        #[arg(long)]
        policy_json: String,
        #[arg(long, default_value_t = 0)]
        slow_us: u64,
        #[arg(long, default_value_t = 0)]
        start_delay_ms: u64,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LayoutName {
    Throughput,
    Video,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn policy_override(
    base: &PolicyKind,
    name: Option<PolicyName>,
    alpha: Option<f64>,
    file: Option<PathBuf>,
) -> Result<PolicyKind, Failure> {
    let current_alpha = match base {
        PolicyKind::PropFair { alpha } => *alpha,
        _ => DEFAULT_EWMA_ALPHA,
    };
    let kind = match name {
        None => match (base, alpha) {
            (PolicyKind::PropFair { .. }, Some(a)) => PolicyKind::PropFair { alpha: a },
            (_, Some(_)) => return Err(Failure::Config("--alpha needs prop_fair".into())),
            (b, None) => b.clone(),
        },
        Some(PolicyName::CqiFair) => PolicyKind::CqiFair,
        Some(PolicyName::PropFair) => PolicyKind::PropFair {
            alpha: alpha.unwrap_or(current_alpha),
        },
        Some(PolicyName::MaxWeight) => PolicyKind::MaxWeight,
        Some(PolicyName::FixedEqual) => PolicyKind::FixedEqual,
        Some(PolicyName::Neural) => {
            let path = match (file.clone(), base) {
                (Some(p), _) => std::env::current_dir()
                    .map(|d| d.join(p))
                    .map_err(|e| Failure::Runtime(e.to_string()))?,
                (None, PolicyKind::Neural { path }) => path.clone(),
                _ => {
                    return Err(Failure::Config(
                        "--policy neural needs --policy-file".into(),
                    ))
                }
            };
            PolicyKind::Neural { path }
        }
    };
    if file.is_some() && !matches!(kind, PolicyKind::Neural { .. }) {
        return Err(Failure::Config(
            "--policy-file needs the neural policy".into(),
        ));
    }
    Ok(kind)
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    config: &Path,
    mode: Option<RunMode>,
    policy: Option<PolicyName>,
    alpha: Option<f64>,
    policy_file: Option<PathBuf>,
    delay: Option<u64>,
    seed: Option<u64>,
    duration: Option<u64>,
    out: Option<PathBuf>,
    opts: RunOptions,
) -> Result<(), Failure> {
    let mut cfg = ScenarioConfig::load(config)?;
    cfg.apply_env();
    cfg.ric.policy = policy_override(&cfg.ric.policy, policy, alpha, policy_file)?;
    if let Some(m) = mode {
        cfg.mode = m;
    }
    if let Some(d) = delay {
        cfg.ric.delay_ttis = d;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(d) = duration {
        cfg.duration_ttis = d;
    }
    let out = out
        .or_else(|| cfg.io.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name));
    info!(scenario = %cfg.name, mode = ?cfg.mode, "running");
    let log = run_scenario(&cfg, &opts)?;
    log.write_all(&out)
        .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", out.display())))?;
    let s = log.summarize();
    println!(
        "{}: {:.3} Mbps, mean backlog {:.4} MB, stalls {:.3} s -> {}",
        cfg.name,
        s.avg_throughput_mbps,
        s.mean_total_backlog_mb,
        s.stall_total_s,
        out.display()
    );
    if let Some(t) = &log.timing {
        println!(
            "rtt median {:.1} us, p99 {:.1} us, in-TTI {:.4}, overruns {}",
            t.rtt_median_us, t.rtt_p99_us, t.in_tti_fraction, t.overruns
        );
    }
    Ok(())
}

fn dispatch(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Run {
            config,
            mode,
            policy,
            alpha,
            policy_file,
            delay,
            seed,
            duration,
            out,
            ric_exe,
            kill_ric_at,
        } => {
            let out = out.or_else(|| std::env::var_os(ENV_OUT).map(PathBuf::from));
            let opts = RunOptions {
                ric_exe,
                kill_ric_at,
                ..RunOptions::default()
            };
            cmd_run(
                &config,
                mode,
                policy,
                alpha,
                policy_file,
                delay,
                seed,
                duration,
                out,
                opts,
            )
        }
        Cmd::Compare { runs, metric, csv } => {
            let c = compare(&runs, &metric).map_err(|e| {
                if e.is_config() {
                    Failure::Config(e.to_string())
                } else {
                    Failure::Runtime(e.to_string())
                }
            })?;
            print!("{}", c.to_table());
            if let Some(path) = csv {
                std::fs::write(&path, c.to_csv())
                    .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
            }
            Ok(())
        }
        Cmd::ServeEnv {
            config,
            socket,
            once,
        } => {
            let mut cfg = ScenarioConfig::load(&config)?;
            cfg.apply_env();
            let socket = socket
                .or_else(|| cfg.io.socket.clone())
                .unwrap_or_else(|| std::env::temp_dir().join("ricworld-env.sock"));
            let mut session = EnvSession::new(cfg)?;
            serve(&mut session, &socket, once).map_err(|e| Failure::Runtime(e.to_string()))
        }
        Cmd::InitPolicy {
            n_ues,
            layout,
            backlog_scale,
            seed,
            out,
        } => {
            let layout = match layout {
                LayoutName::Throughput => StateLayout::Throughput,
                LayoutName::Video => StateLayout::Video,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = PolicyNetwork::random(
                n_ues,
                layout,
                Normalization::new(backlog_scale),
                &DEFAULT_HIDDEN,
                &mut rng,
            )
            .map_err(|e| Failure::Config(e.to_string()))?;
            net.save(&out).map_err(|e| Failure::Runtime(e.to_string()))
        }
        Cmd::Ric {
            socket,
            policy_json,
            slow_us,
            start_delay_ms,
        } => {
            let policy: PolicyKind = serde_json::from_str(&policy_json)
                .map_err(|e| Failure::Config(format!("policy: {e}")))?;
            ric_process_main(
                &socket,
                &policy,
                Duration::from_micros(slow_us),
                Duration::from_millis(start_delay_ms),
            )?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => tracing::Level::WARN,
        1 => tracing::Level::INFO,
        _ => tracing::Level::DEBUG,
    };
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .init();
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
