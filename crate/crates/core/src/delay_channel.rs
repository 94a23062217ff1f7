//! Bounded time-varying communication delay and the dense signal history the
//! simulator interpolates into.
//!
//! A delay value is always clipped to `[0, d_bar]`. No slope constraint is
//! imposed, so retrieval times `t - d(t)` may be non-monotone; the history
//! sampler tolerates that as long as the query stays inside the retained
//! window.

use std::collections::VecDeque;

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// Configuration of one delay direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayProfile {
    /// Maximum delay in seconds; every sampled value is clipped to `[0, d_bar]`.
    pub d_bar: f64,
    #[serde(flatten)]
    pub kind: DelayKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DelayKind {
    /// `d(t) = delay` for all `t`.
    Constant { delay: f64 },
    /// `d(t) = mean + amplitude * sin(2 pi frequency_hz t)`.
    Sinusoidal {
        mean: f64,
        amplitude: f64,
        frequency_hz: f64,
    },
    /// Seeded random walk on a uniform grid: every `step_interval` seconds
    /// the delay moves by `uniform(-step_bound, step_bound)`, clipped; values
    /// between grid points are interpolated linearly. The walk starts at
    /// `d_bar / 2`.
    UniformRandomWalk {
        step_interval: f64,
        step_bound: f64,
        seed: u64,
    },
}

impl DelayProfile {
    pub fn constant(delay: f64, d_bar: f64) -> Self {
        DelayProfile {
            d_bar,
            kind: DelayKind::Constant { delay },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d_bar >= 0.0 && self.d_bar.is_finite()) {
            return Err(Error::input(format!(
                "delay bound d_bar must be finite and nonnegative, got {}",
                self.d_bar
            )));
        }
        match &self.kind {
            DelayKind::Constant { delay } => {
                if !delay.is_finite() {
                    return Err(Error::input("constant delay must be finite"));
                }
            }
            DelayKind::Sinusoidal {
                mean,
                amplitude,
                frequency_hz,
            } => {
                if ![*mean, *amplitude, *frequency_hz]
                    .iter()
                    .all(|v| v.is_finite())
                {
                    return Err(Error::input("sinusoidal delay parameters must be finite"));
                }
            }
            DelayKind::UniformRandomWalk {
                step_interval,
                step_bound,
                ..
            } => {
                if !(*step_interval > 0.0) {
                    return Err(Error::input("random walk step_interval must be positive"));
                }
                if !(*step_bound >= 0.0) {
                    return Err(Error::input("random walk step_bound must be nonnegative"));
                }
            }
        }
        Ok(())
    }

    /// Seed recorded in trace metadata, if the profile is randomized.
    pub fn seed(&self) -> Option<u64> {
        match self.kind {
            DelayKind::UniformRandomWalk { seed, .. } => Some(seed),
            _ => None,
        }
    }

    /// Replace the seed of a randomized profile (CLI seed override).
    pub fn reseed(&mut self, seed: u64) {
        if let DelayKind::UniformRandomWalk { seed: s, .. } = &mut self.kind {
            *s = seed;
        }
    }
}

/// Evaluates a [`DelayProfile`] at arbitrary times. Random-walk profiles are
/// rolled out over the requested horizon at construction so that evaluation
/// is a pure, order-independent function of time.
#[derive(Debug, Clone)]
pub struct DelaySampler {
    d_bar: f64,
    kind: SamplerKind,
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Constant(f64),
    Sinusoidal {
        mean: f64,
        amplitude: f64,
        omega: f64,
    },
    Walk {
        dt: f64,
        values: Vec<f64>,
    },
}

impl DelaySampler {
    /// Build a sampler valid on `[0, horizon]`.
    pub fn new(profile: &DelayProfile, horizon: f64) -> Result<Self> {
        profile.validate()?;
        if !(horizon >= 0.0) {
            return Err(Error::input("sampler horizon must be nonnegative"));
        }
        let d_bar = profile.d_bar;
        let clip = |v: f64| v.clamp(0.0, d_bar);
        let kind = match &profile.kind {
            DelayKind::Constant { delay } => SamplerKind::Constant(clip(*delay)),
            DelayKind::Sinusoidal {
                mean,
                amplitude,
                frequency_hz,
            } => SamplerKind::Sinusoidal {
                mean: *mean,
                amplitude: *amplitude,
                omega: 2.0 * std::f64::consts::PI * frequency_hz,
            },
            DelayKind::UniformRandomWalk {
                step_interval,
                step_bound,
                seed,
            } => {
                let steps = (horizon / step_interval).ceil() as usize + 2;
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut values = Vec::with_capacity(steps + 1);
                let mut current = clip(d_bar / 2.0);
                values.push(current);
                for _ in 0..steps {
                    let incr = (rng.random::<f64>() * 2.0 - 1.0) * step_bound;
                    current = clip(current + incr);
                    values.push(current);
                }
                SamplerKind::Walk {
                    dt: *step_interval,
                    values,
                }
            }
        };
        Ok(DelaySampler { d_bar, kind })
    }

    pub fn d_bar(&self) -> f64 {
        self.d_bar
    }

    /// Delay at time `t >= 0`, clipped to `[0, d_bar]`. Queries past the
    /// construction horizon hold the last rolled-out walk value.
    pub fn delay_at(&self, t: f64) -> f64 {
        let raw = match &self.kind {
            SamplerKind::Constant(d) => *d,
            SamplerKind::Sinusoidal {
                mean,
                amplitude,
                omega,
            } => mean + amplitude * (omega * t).sin(),
            SamplerKind::Walk { dt, values } => {
                let pos = (t / dt).max(0.0);
                let idx = pos.floor() as usize;
                if idx + 1 >= values.len() {
                    *values.last().expect("walk has at least one value")
                } else {
                    let frac = pos - idx as f64;
                    values[idx] * (1.0 - frac) + values[idx + 1] * frac
                }
            }
        };
        raw.clamp(0.0, self.d_bar)
    }
}

/// Dense history of a vector signal with a constant initial-history function
/// on `[-d_bar, 0]` and linear interpolation between stored samples.
///
/// Single writer; readers see a consistent snapshot between pushes.
#[derive(Debug, Clone)]
pub struct SignalHistory {
    d_bar: f64,
    max_step: f64,
    initial: DVector<f64>,
    samples: VecDeque<(f64, DVector<f64>)>,
}

impl SignalHistory {
    /// `initial` is the constant initial-history value on `[-d_bar, 0]`.
    pub fn new(d_bar: f64, max_step: f64, initial: DVector<f64>) -> Result<Self> {
        if !(d_bar >= 0.0) || !(max_step > 0.0) {
            return Err(Error::input(
                "signal history requires d_bar >= 0 and max_step > 0",
            ));
        }
        Ok(SignalHistory {
            d_bar,
            max_step,
            initial,
            samples: VecDeque::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.initial.len()
    }

    pub fn last_time(&self) -> Option<f64> {
        self.samples.back().map(|(t, _)| *t)
    }

    pub fn last_value(&self) -> Option<&DVector<f64>> {
        self.samples.back().map(|(_, v)| v)
    }

    /// Timestamps of the retained samples, oldest first.
    pub fn sample_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|(t, _)| *t)
    }

    /// Append a sample at time `t`; timestamps must increase strictly.
    /// Samples older than `t - d_bar - 2 * max_step` are evicted.
    pub fn push(&mut self, t: f64, value: DVector<f64>) -> Result<()> {
        if value.len() != self.initial.len() {
            return Err(Error::dim(format!(
                "history sample has dimension {}, expected {}",
                value.len(),
                self.initial.len()
            )));
        }
        match self.last_time() {
            Some(last) if t <= last => {
                return Err(Error::input(format!(
                    "history timestamps must increase strictly: {t} after {last}"
                )));
            }
            None if t < 0.0 => {
                return Err(Error::input("first history sample must not precede t = 0"));
            }
            _ => {}
        }
        self.samples.push_back((t, value));
        let cutoff = t - self.d_bar - 2.0 * self.max_step;
        while let Some((front, _)) = self.samples.front() {
            if *front < cutoff && self.samples.len() > 1 {
                self.samples.pop_front();
            } else {
                break;
            }
        }
        Ok(())
    }

    /// Value at `t - d`, linearly interpolated; times at or before the first
    /// stored sample fall back to the initial-history function.
    pub fn sample_delayed(&self, t: f64, d: f64) -> Result<DVector<f64>> {
        if !(0.0..=self.d_bar + 1e-12).contains(&d) {
            return Err(Error::input(format!(
                "delay {d} outside [0, {}]",
                self.d_bar
            )));
        }
        let tr = t - d;
        if tr < -self.d_bar - 1e-12 {
            return Err(Error::input(format!(
                "query at {tr} precedes the initial history start {}",
                -self.d_bar
            )));
        }
        let first = match self.samples.front() {
            None => return Ok(self.initial.clone()),
            Some((t0, _)) => *t0,
        };
        if tr <= first {
            // Covers the initial-history window and any gap before a late
            // first sample.
            return Ok(self.initial.clone());
        }
        let last = self.last_time().expect("nonempty");
        if tr > last + 1e-12 {
            return Err(Error::input(format!(
                "query at {tr} is beyond the stored history (last sample {last})"
            )));
        }
        let tr = tr.min(last);
        // Binary search over the deque for the bracketing pair.
        let (mut lo, mut hi) = (0usize, self.samples.len() - 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.samples[mid].0 <= tr {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (t0, v0) = &self.samples[lo];
        let (t1, v1) = &self.samples[hi];
        if tr <= *t0 {
            return Ok(v0.clone());
        }
        let w = (tr - t0) / (t1 - t0);
        Ok(v0 * (1.0 - w) + v1 * w)
    }
}
