//! Regenerates the bundled mobility-flavored CQI traces.
//!
//! cargo run --example gen_traces -- traces
//!
//! Each trace covers 120 s at one sample every 2 TTIs and replays cyclically.

use std::f64::consts::TAU;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ricworld::channel_models::{write_trace_csv, CqiTrace};
use ricworld::rt_e2::Cqi;

const PERIOD: u64 = 2;
const LEN_TTIS: u64 = 120_000;

fn clamp(x: f64) -> Cqi {
    Cqi::saturating(x.round() as i64)
}

/// Rotating platform: good channel with a deep dip once per revolution.
fn turntable(rng: &mut ChaCha8Rng, t: u64) -> f64 {
    let phase = (t % 4000) as f64 / 4000.0;
    let dip = (-((phase - 0.5) / 0.06).powi(2)).exp();
    13.5 - 9.0 * dip + rng.gen_range(-1.0..1.0)
}

/// Hovering drone: swings of several CQI steps within a few milliseconds.
fn drone(rng: &mut ChaCha8Rng, t: u64) -> f64 {
    let fast = (TAU * t as f64 / 8.0).sin();
    let slow = (TAU * t as f64 / 3000.0).sin();
    9.0 + 4.0 * fast + 2.0 * slow + rng.gen_range(-1.5..1.5)
}

/// Passing car: slow smooth rise and fall of channel quality.
fn car(rng: &mut ChaCha8Rng, t: u64) -> f64 {
    let s = t as f64 / 1000.0;
    8.0 + 5.5 * (TAU * s / 20.0).sin() + 1.0 * (TAU * s / 7.0).sin() + rng.gen_range(-0.5..0.5)
}

struct Robot {
    blocked_until: u64,
}

/// Indoor robot: good line of sight interrupted by blockages.
fn robot(state: &mut Robot, rng: &mut ChaCha8Rng, t: u64) -> f64 {
    if t >= state.blocked_until && rng.gen_bool(0.0008) {
        state.blocked_until = t + rng.gen_range(200..800);
    }
    if t < state.blocked_until {
        3.0 + rng.gen_range(-1.0..1.0)
    } else {
        12.5 + rng.gen_range(-1.5..1.5)
    }
}

fn build(mut f: impl FnMut(u64) -> f64) -> CqiTrace {
    let samples = (0..LEN_TTIS)
        .step_by(PERIOD as usize)
        .map(|t| (t, clamp(f(t))))
        .collect();
    CqiTrace::new(samples).expect("generated trace is valid")
}

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "traces".into()));
    std::fs::create_dir_all(&dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let tt = build(|t| turntable(&mut rng, t));
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let dr = build(|t| drone(&mut rng, t));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ca = build(|t| car(&mut rng, t));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut st = Robot { blocked_until: 0 };
    let ro = build(|t| robot(&mut st, &mut rng, t));
    for (name, trace) in [("turntable", tt), ("drone", dr), ("car", ca), ("robot", ro)] {
        let path = dir.join(format!("{name}.csv"));
        std::fs::write(&path, write_trace_csv(&trace))?;
        println!("{}: {} samples", path.display(), trace.samples().len());
    }
    Ok(())
}
