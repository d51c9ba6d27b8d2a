//! CQI sources: seeded synthetic generators and cyclic trace replay.

mod trace;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::rt_e2::{Cqi, Tti};

pub use trace::{load_trace, parse_trace, write_trace_csv, CqiTrace, TraceError};

pub const DEFAULT_HOLD_TTIS: Tti = 2;
pub const RANDOM_WALK_START: u8 = 8;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CqiModel {
    /// Uniform over 1..=15.
    UniformFull,
    /// Uniform over 8..=15.
    UniformGood,
    /// Uniform over 1..=7.
    UniformPoor,
    /// Starts at `start`, then moves by -1, 0 or +1 with equal probability at
    /// every hold boundary, clamped to 1..=15.
    RandomWalk {
        #[serde(default = "default_walk_start")]
        start: u8,
    },
    Constant {
        value: u8,
    },
    /// Replays a trace file; `phase_ttis` shifts the replay start.
    TraceFile {
        path: PathBuf,
        #[serde(default)]
        phase_ttis: Tti,
    },
}

fn default_walk_start() -> u8 {
    RANDOM_WALK_START
}

fn default_hold() -> Tti {
    DEFAULT_HOLD_TTIS
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CqiGeneratorSpec {
    #[serde(flatten)]
    pub model: CqiModel,
    /// Overrides the seed the scenario derives for this UE.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// TTIs between value changes of synthetic generators. Traces carry their
    /// own spacing and ignore it.
    #[serde(default = "default_hold")]
    pub hold_ttis: Tti,
}

impl CqiGeneratorSpec {
    pub fn new(model: CqiModel) -> Self {
        CqiGeneratorSpec {
            model,
            seed: None,
            hold_ttis: DEFAULT_HOLD_TTIS,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CqiSpecError {
    #[error("hold_ttis must be positive")]
    ZeroHold,
    #[error("cqi {0} is outside 1..=15")]
    OutOfRange(u8),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

#[derive(Clone, Debug)]
enum Generator {
    Uniform { lo: u8, hi: u8 },
    Walk { start: Cqi },
    Constant(Cqi),
    Trace { trace: Arc<CqiTrace>, phase: Tti },
}

/// Per-UE CQI source. The value for a TTI depends only on the generator
/// settings, the seed and the TTI; sequential queries cost O(1) each.
#[derive(Clone, Debug)]
pub struct CqiSource {
    generator: Generator,
    hold: Tti,
    seed: u64,
    rng: ChaCha8Rng,
    block: Tti,
    current: Cqi,
}

impl CqiSource {
    /// Builds a source. Relative trace paths are resolved against `base_dir`.
    pub fn build(
        spec: &CqiGeneratorSpec,
        default_seed: u64,
        base_dir: Option<&Path>,
    ) -> Result<Self, CqiSpecError> {
        if spec.hold_ttis == 0 {
            return Err(CqiSpecError::ZeroHold);
        }
        let checked = |v: u8| Cqi::new(v).ok_or(CqiSpecError::OutOfRange(v));
        let generator = match &spec.model {
            CqiModel::UniformFull => Generator::Uniform { lo: 1, hi: 15 },
            CqiModel::UniformGood => Generator::Uniform { lo: 8, hi: 15 },
            CqiModel::UniformPoor => Generator::Uniform { lo: 1, hi: 7 },
            CqiModel::RandomWalk { start } => Generator::Walk {
                start: checked(*start)?,
            },
            CqiModel::Constant { value } => Generator::Constant(checked(*value)?),
            CqiModel::TraceFile { path, phase_ttis } => {
                let full = match base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.clone(),
                };
                Generator::Trace {
                    trace: Arc::new(load_trace(&full)?),
                    phase: *phase_ttis,
                }
            }
        };
        Ok(Self::with_generator(
            generator,
            spec.hold_ttis,
            spec.seed.unwrap_or(default_seed),
        ))
    }

    pub fn from_trace(trace: Arc<CqiTrace>, phase: Tti) -> Self {
        Self::with_generator(Generator::Trace { trace, phase }, 1, 0)
    }

    pub fn constant(cqi: Cqi) -> Self {
        Self::with_generator(Generator::Constant(cqi), 1, 0)
    }

    fn with_generator(generator: Generator, hold: Tti, seed: u64) -> Self {
        let mut s = CqiSource {
            generator,
            hold,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            block: 0,
            current: Cqi::saturating(1),
        };
        s.rewind();
        s
    }

    fn rewind(&mut self) {
        self.rng = ChaCha8Rng::seed_from_u64(self.seed);
        self.block = 0;
        self.current = match self.generator {
            Generator::Uniform { lo, hi } => Cqi::saturating(self.rng.gen_range(lo..=hi).into()),
            Generator::Walk { start } => start,
            Generator::Constant(c) => c,
            Generator::Trace { ref trace, phase } => trace.at(phase),
        };
    }

    fn advance_block(&mut self) {
        self.block += 1;
        match self.generator {
            Generator::Uniform { lo, hi } => {
                self.current = Cqi::saturating(self.rng.gen_range(lo..=hi).into());
            }
            Generator::Walk { .. } => {
                let step: i64 = self.rng.gen_range(-1..=1);
                self.current = Cqi::saturating(i64::from(self.current.get()) + step);
            }
            Generator::Constant(_) | Generator::Trace { .. } => {}
        }
    }

    /// CQI in effect during `tti`.
    pub fn next_cqi(&mut self, tti: Tti) -> Cqi {
        if let Generator::Trace { ref trace, phase } = self.generator {
            return trace.at(tti.wrapping_add(phase));
        }
        let block = tti / self.hold;
        if block < self.block {
            self.rewind();
        }
        while self.block < block {
            self.advance_block();
        }
        self.current
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn source(model: CqiModel, seed: u64) -> CqiSource {
        CqiSource::build(&CqiGeneratorSpec::new(model), seed, None).unwrap()
    }

    #[test]
    fn ranges_hold() {
        for (model, lo, hi) in [
            (CqiModel::UniformFull, 1, 15),
            (CqiModel::UniformGood, 8, 15),
            (CqiModel::UniformPoor, 1, 7),
        ] {
            let mut s = source(model, 3);
            let mut seen = [false; 16];
            for t in 0..100_000 {
                let c = s.next_cqi(t).get();
                assert!((lo..=hi).contains(&c));
                seen[c as usize] = true;
            }
            assert!((lo..=hi).all(|c| seen[c as usize]));
        }
    }

    #[test]
    fn changes_only_at_hold_boundaries() {
        let mut spec = CqiGeneratorSpec::new(CqiModel::UniformFull);
        spec.hold_ttis = 5;
        let mut s = CqiSource::build(&spec, 1, None).unwrap();
        let v: Vec<Cqi> = (0..1000).map(|t| s.next_cqi(t)).collect();
        for t in 1..1000 {
            if t % 5 != 0 {
                assert_eq!(v[t], v[t - 1]);
            }
        }
    }

    #[test]
    fn rewind_replays() {
        let mut s = source(CqiModel::RandomWalk { start: 8 }, 9);
        let a: Vec<Cqi> = (0..500).map(|t| s.next_cqi(t)).collect();
        let b: Vec<Cqi> = (0..500).map(|t| s.next_cqi(t)).collect();
        assert_eq!(a, b);
        assert_eq!(a[0].get(), 8);
        assert_eq!(s.next_cqi(77), a[77]);
    }

    #[test]
    fn sparse_queries_match_dense() {
        let mut dense = source(CqiModel::UniformGood, 4);
        let v: Vec<Cqi> = (0..3000).map(|t| dense.next_cqi(t)).collect();
        let mut sparse = source(CqiModel::UniformGood, 4);
        for t in (0..3000).step_by(37) {
            assert_eq!(sparse.next_cqi(t), v[t as usize]);
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = CqiGeneratorSpec::new(CqiModel::Constant { value: 0 });
        assert!(matches!(
            CqiSource::build(&spec, 0, None),
            Err(CqiSpecError::OutOfRange(0))
        ));
        spec.model = CqiModel::UniformFull;
        spec.hold_ttis = 0;
        assert!(matches!(
            CqiSource::build(&spec, 0, None),
            Err(CqiSpecError::ZeroHold)
        ));
    }

    #[test]
    fn spec_from_toml() {
        let s: CqiGeneratorSpec =
            toml::from_str("kind = \"trace_file\"\npath = \"drone.csv\"\nphase_ttis = 7\n")
                .unwrap();
        assert_eq!(
            s.model,
            CqiModel::TraceFile {
                path: "drone.csv".into(),
                phase_ttis: 7
            }
        );
        assert_eq!(s.hold_ttis, DEFAULT_HOLD_TTIS);
        let s: CqiGeneratorSpec = toml::from_str("kind = \"random_walk\"\nseed = 4\n").unwrap();
        assert_eq!(s.model, CqiModel::RandomWalk { start: 8 });
        assert_eq!(s.seed, Some(4));
    }
}
