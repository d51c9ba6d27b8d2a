use std::collections::BTreeMap;
use std::io::{self, BufRead, BufReader, Read};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::app_sim::UplinkDelay;
use crate::edgeric::{
    ric_loop, DelayLine, DelayLineConfig, EdgeRic, EdgeRicError, PolicyKind, RicStats, Scheduler,
};
use crate::ran_emu::{RanEmulator, RanError};
use crate::rt_e2::{
    connect_ric, in_process_link, AppStateMsg, LinkError, RanEndpoint, Rnti, SeqPacketListener, Tti,
};

use super::config::{ConfigError, RunMode, ScenarioConfig, ENV_RIC_EXE};
use super::metrics::{EventKind, MetricsLog, TimingStats};

const TTI: Duration = Duration::from_millis(1);

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("ric: {0}")]
    Ric(#[from] EdgeRicError),
    #[error("emulator: {0}")]
    Ran(#[from] RanError),
    #[error("link: {0}")]
    Link(#[from] LinkError),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("ric process: {0}")]
    RicProcess(String),
    #[error("ric thread panicked")]
    RicPanicked,
}

impl RunError {
    /// Whether the failure stems from the scenario definition rather than
    /// from running it.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            RunError::Config(_)
                | RunError::Ric(
                    EdgeRicError::Network(_)
                        | EdgeRicError::BadAlpha(_)
                        | EdgeRicError::UeCount { .. }
                )
        )
    }
}

/// Knobs that do not belong in a scenario file.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// RIC executable for process mode; defaults to `$RICWORLD_RIC_EXE` and
    /// then to the current executable.
    pub ric_exe: Option<PathBuf>,
    /// Kills the RIC process at the start of this TTI.
    pub kill_ric_at: Option<Tti>,
    /// Holds the RIC back for this long after the RAN starts.
    pub ric_start_delay: Duration,
}

fn ric_base_dir(cfg: &ScenarioConfig) -> Option<PathBuf> {
    cfg.base_dir.clone()
}

/// Builds the scheduler and checks a neural network against the scenario.
pub fn build_scheduler(cfg: &ScenarioConfig) -> Result<Scheduler, RunError> {
    let s = Scheduler::from_kind(&cfg.ric.policy, ric_base_dir(cfg).as_deref())?;
    if let Scheduler::Neural { net, .. } = &s {
        if net.n_ues() != cfg.ues.len() {
            return Err(EdgeRicError::UeCount {
                network: net.n_ues(),
                report: cfg.ues.len(),
            }
            .into());
        }
    }
    Ok(s)
}

fn policy_label(kind: &PolicyKind) -> String {
    match kind {
        PolicyKind::CqiFair => "cqi_fair".into(),
        PolicyKind::PropFair { alpha } => format!("prop_fair(alpha={alpha})"),
        PolicyKind::MaxWeight => "max_weight".into(),
        PolicyKind::Neural { path } => format!("neural({})", path.display()),
        PolicyKind::FixedEqual => "fixed_equal".into(),
    }
}

fn new_log(cfg: &ScenarioConfig, ran: &RanEmulator) -> MetricsLog {
    let mut log = MetricsLog::new(&cfg.name, cfg.seed, cfg.mode, ran.rntis().collect());
    log.policy = policy_label(&cfg.ric.policy);
    log.delay_ttis = cfg.ric.delay_ttis;
    log.reserve(cfg.duration_ttis as usize);
    log
}

fn collect_app_states(ran: &RanEmulator, uplink: &mut UplinkDelay) {
    for u in &ran.last_record().ues {
        if let Some(a) = u.video.and_then(|v| v.app_state) {
            uplink.push(a);
        }
    }
}

pub fn run_scenario(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<MetricsLog, RunError> {
    cfg.validate()?;
    match cfg.mode {
        RunMode::Logical => run_logical(cfg),
        RunMode::RealtimeThread => run_realtime_thread(cfg, opts),
        RunMode::RealtimeProcess => run_realtime_process(cfg, opts),
    }
}

/// Lockstep run: the RIC answers every report it sees before the next TTI.
pub fn run_logical(cfg: &ScenarioConfig) -> Result<MetricsLog, RunError> {
    let mut ran = cfg.build_emulator(cfg.seed)?;
    let mut ric = EdgeRic::new(build_scheduler(cfg)?).untimed();
    let mut delay = DelayLine::new(DelayLineConfig {
        one_way_delay_ttis: cfg.ric.delay_ttis,
    });
    let mut uplink = UplinkDelay::new(cfg.uplink_delay_ttis() + cfg.ric.delay_ttis);
    let mut log = new_log(cfg, &ran);
    let mut released = Vec::new();
    let mut pending: BTreeMap<Rnti, AppStateMsg> = BTreeMap::new();
    let mut app_states = Vec::new();
    for t in 0..cfg.duration_ttis {
        match delay.pop_policy(t) {
            Some(p) => {
                ran.deliver_policy(p);
                log.sync.policies_applied += 1;
            }
            None => log.sync.ran_lazy_ric_ttis += 1,
        }
        let report = ran.serve_tti()?;
        log.record(ran.last_record());
        collect_app_states(&ran, &mut uplink);
        released.clear();
        uplink.release(t, &mut released);
        for a in released.drain(..) {
            pending.insert(a.rnti, a);
        }
        if let Some(r) = delay.push_report(report) {
            app_states.clear();
            app_states.extend(std::mem::take(&mut pending).into_values());
            if let Some(p) = ric.handle_report(&r, &app_states)? {
                delay.push_policy(p, t + 1);
            }
        }
    }
    log.sync.ric = Some(ric.stats());
    Ok(log)
}

fn set_timer_slack() {
    // SAFETY: PR_SET_TIMERSLACK only changes this thread's timer slack.
    unsafe {
        libc::prctl(libc::PR_SET_TIMERSLACK, 1000 as libc::c_ulong);
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let i = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[i]
}

/// Paced RAN loop shared by both realtime modes.
fn realtime_ran_loop<E: RanEndpoint>(
    cfg: &ScenarioConfig,
    ran: &mut RanEmulator,
    ep: &mut E,
    log: &mut MetricsLog,
    mut kill: Option<(Tti, &mut dyn FnMut())>,
) -> Result<TimingStats, RunError> {
    set_timer_slack();
    let n = cfg.duration_ttis as usize;
    let mut delay = DelayLine::new(DelayLineConfig {
        one_way_delay_ttis: cfg.ric.delay_ttis,
    });
    let mut uplink = UplinkDelay::new(cfg.uplink_delay_ttis() + cfg.ric.delay_ttis);
    let mut released = Vec::new();
    let mut published_at: Vec<Option<Instant>> = vec![None; n];
    let mut rtts = Vec::with_capacity(n);
    let mut compute = Vec::with_capacity(n);
    let mut timing = TimingStats::default();
    let mut ric_alive = true;
    let lost_ric = |log: &mut MetricsLog, t: Tti, alive: &mut bool| {
        if *alive {
            *alive = false;
            log.push_event(t, EventKind::RicLost, None);
        }
    };

    let start = Instant::now();
    for t in 0..cfg.duration_ttis {
        if let Some((at, f)) = kill.as_mut() {
            if *at == t {
                f();
            }
        }
        if ric_alive {
            match ep.poll_policy() {
                Ok(Some(rcv)) => {
                    let rt = rcv.msg.ric_time();
                    if let Some(Some(sent)) = published_at.get(rt as usize) {
                        rtts.push(rcv.at.saturating_duration_since(*sent).as_secs_f64() * 1e6);
                        if rcv.at <= start + TTI * (rt as u32 + 1) {
                            timing.decisions_in_tti += 1;
                        }
                    }
                    delay.push_policy(rcv.msg, t);
                }
                Ok(None) => {}
                Err(LinkError::Closed) => lost_ric(log, t, &mut ric_alive),
                Err(e) => return Err(e.into()),
            }
        }
        match delay.pop_policy(t) {
            Some(p) => {
                ran.deliver_policy(p);
                log.sync.policies_applied += 1;
            }
            None => log.sync.ran_lazy_ric_ttis += 1,
        }

        let work = Instant::now();
        let report = ran.serve_tti()?;
        collect_app_states(ran, &mut uplink);
        released.clear();
        uplink.release(t, &mut released);
        if ric_alive {
            for a in released.drain(..) {
                if let Err(LinkError::Closed) = ep.publish_app_state(a) {
                    lost_ric(log, t, &mut ric_alive);
                    break;
                }
            }
        }
        if let Some(r) = delay.push_report(report) {
            if ric_alive {
                let rt = r.ran_time() as usize;
                match ep.publish_report(r) {
                    Ok(()) => {
                        published_at[rt] = Some(Instant::now());
                        timing.reports_published += 1;
                    }
                    Err(LinkError::Closed) => lost_ric(log, t, &mut ric_alive),
                    Err(e) => return Err(e.into()),
                }
            }
        }
        compute.push(work.elapsed().as_secs_f64() * 1e6);
        log.record(ran.last_record());

        let deadline = start + TTI * (t as u32 + 1);
        let now = Instant::now();
        if now > deadline {
            timing.overruns += 1;
            let late = (now - deadline).as_secs_f64() * 1e6;
            timing.max_lateness_us = timing.max_lateness_us.max(late);
        }
        ep.wait_until(deadline)?;
    }
    // a policy answering the last report may still be in flight
    if ric_alive {
        ep.wait_until(Instant::now() + TTI)?;
        if let Ok(Some(rcv)) = ep.poll_policy() {
            let rt = rcv.msg.ric_time();
            if let Some(Some(sent)) = published_at.get(rt as usize) {
                rtts.push(rcv.at.saturating_duration_since(*sent).as_secs_f64() * 1e6);
                if rcv.at <= start + TTI * (rt as u32 + 1) {
                    timing.decisions_in_tti += 1;
                }
            }
        }
    }

    rtts.sort_by(f64::total_cmp);
    compute.sort_by(f64::total_cmp);
    timing.ttis = cfg.duration_ttis;
    timing.rtt_samples = rtts.len() as u64;
    timing.rtt_median_us = percentile(&rtts, 0.5);
    timing.rtt_p99_us = percentile(&rtts, 0.99);
    timing.rtt_max_us = rtts.last().copied().unwrap_or(0.0);
    timing.tti_compute_p99_us = percentile(&compute, 0.99);
    timing.in_tti_fraction = if timing.reports_published == 0 {
        0.0
    } else {
        timing.decisions_in_tti as f64 / timing.reports_published as f64
    };
    Ok(timing)
}

pub fn run_realtime_thread(
    cfg: &ScenarioConfig,
    opts: &RunOptions,
) -> Result<MetricsLog, RunError> {
    let mut ran = cfg.build_emulator(cfg.seed)?;
    let slow = Duration::from_micros(cfg.ric.slow_decision_us);
    let mut ric = EdgeRic::new(build_scheduler(cfg)?).with_slow_decision(slow);
    let mut log = new_log(cfg, &ran);
    let (mut ran_ep, mut ric_ep) = in_process_link();
    let start_delay = opts.ric_start_delay;
    let handle = thread::Builder::new()
        .name("edgeric".into())
        .spawn(move || {
            thread::sleep(start_delay);
            ric_loop(&mut ric_ep, &mut ric)
        })?;
    let result = realtime_ran_loop(cfg, &mut ran, &mut ran_ep, &mut log, None);
    ran_ep.close();
    let ric_stats = handle.join().map_err(|_| RunError::RicPanicked)?;
    let timing = result?;
    log.sync.ric = Some(ric_stats?);
    log.timing = Some(timing);
    Ok(log)
}

fn default_socket_path() -> PathBuf {
    let nanos = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.subsec_nanos())
        .unwrap_or(0);
    std::env::temp_dir().join(format!("ricworld-{}-{nanos}.sock", std::process::id()))
}

fn resolve_ric_exe(opts: &RunOptions) -> io::Result<PathBuf> {
    if let Some(p) = &opts.ric_exe {
        return Ok(p.clone());
    }
    if let Some(p) = std::env::var_os(ENV_RIC_EXE) {
        return Ok(p.into());
    }
    std::env::current_exe()
}

/// Policy description handed to the RIC process, with paths made absolute.
fn absolute_policy(cfg: &ScenarioConfig) -> PolicyKind {
    match &cfg.ric.policy {
        PolicyKind::Neural { path } if path.is_relative() => PolicyKind::Neural {
            path: cfg
                .base_dir
                .as_deref()
                .map(|b| b.join(path))
                .unwrap_or_else(|| path.clone()),
        },
        p => p.clone(),
    }
}

struct RicChild(Child);

impl Drop for RicChild {
    fn drop(&mut self) {
        if matches!(self.0.try_wait(), Ok(None)) {
            let _ = self.0.kill();
            let _ = self.0.wait();
        }
    }
}

pub fn run_realtime_process(
    cfg: &ScenarioConfig,
    opts: &RunOptions,
) -> Result<MetricsLog, RunError> {
    let mut ran = cfg.build_emulator(cfg.seed)?;
    build_scheduler(cfg)?;
    let mut log = new_log(cfg, &ran);
    let socket = cfg.io.socket.clone().unwrap_or_else(default_socket_path);
    let listener = SeqPacketListener::bind(&socket)?;
    let policy_json = serde_json::to_string(&absolute_policy(cfg))
        .map_err(|e| RunError::RicProcess(e.to_string()))?;
    let exe = resolve_ric_exe(opts)?;
    let child = Command::new(&exe)
        .arg("ric")
        .arg("--socket")
        .arg(&socket)
        .arg("--policy-json")
        .arg(&policy_json)
        .arg("--slow-us")
        .arg(cfg.ric.slow_decision_us.to_string())
        .arg("--start-delay-ms")
        .arg(opts.ric_start_delay.as_millis().to_string())
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .spawn()
        .map_err(|e| RunError::RicProcess(format!("cannot start {}: {e}", exe.display())))?;
    let mut child = RicChild(child);
    let mut ran_ep = listener.accept_ran(Duration::from_secs(10))?;

    let mut killed = false;
    let result = {
        let mut kill_fn = || {
            let _ = child.0.kill();
            let _ = child.0.wait();
            killed = true;
        };
        let kill = opts
            .kill_ric_at
            .map(|t| (t, &mut kill_fn as &mut dyn FnMut()));
        realtime_ran_loop(cfg, &mut ran, &mut ran_ep, &mut log, kill)
    };
    ran_ep.close();
    let timing = result?;
    log.timing = Some(timing);
    if let Some(t) = log.timing.as_mut() {
        t.dropped_sends = ran_ep.dropped_sends();
    }
    if !killed {
        let mut out = String::new();
        if let Some(mut stdout) = child.0.stdout.take() {
            stdout.read_to_string(&mut out)?;
        }
        let status = child.0.wait()?;
        if !status.success() {
            return Err(RunError::RicProcess(format!("exited with {status}")));
        }
        let stats = BufReader::new(out.as_bytes())
            .lines()
            .map_while(Result::ok)
            .filter_map(|l| serde_json::from_str::<RicStats>(&l).ok())
            .last();
        log.sync.ric = stats;
    }
    Ok(log)
}

/// Entry point of the RIC child process. Prints its statistics as one JSON
/// line on stdout when the RAN closes the link.
pub fn ric_process_main(
    socket: &Path,
    policy: &PolicyKind,
    slow: Duration,
    start_delay: Duration,
) -> Result<RicStats, RunError> {
    let scheduler = Scheduler::from_kind(policy, None)?;
    let mut ep = connect_ric(socket, Duration::from_secs(10))?;
    thread::sleep(start_delay);
    let mut ric = EdgeRic::new(scheduler).with_slow_decision(slow);
    let stats = ric_loop(&mut ep, &mut ric)?;
    println!(
        "{}",
        serde_json::to_string(&stats).map_err(|e| RunError::RicProcess(e.to_string()))?
    );
    Ok(stats)
}
