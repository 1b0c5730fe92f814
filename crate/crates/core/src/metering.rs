//! Energy for a measured phase, from a sampled power trace or from an
//! analytical device power model.

use std::cell::Cell;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Current resolution of the instrument, amperes.
pub const CURRENT_STEP_A: f64 = 100e-6;
/// Voltage resolution of the instrument, volts.
pub const VOLTAGE_STEP_V: f64 = 4e-3;

/// Base operation rate of a profile with `throughput_scale == 1`, used by
/// [`ModelClock::Work`] when no rate is configured.
pub const DEFAULT_OPS_PER_SECOND: f64 = 5.0e7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSample {
    pub t_s: f64,
    pub volts: f64,
    pub amps: f64,
}

/// Timestamped voltage/current stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTrace {
    samples: Vec<PowerSample>,
    pub nominal_rate_hz: f64,
}

impl PowerTrace {
    pub fn new(samples: Vec<PowerSample>, nominal_rate_hz: f64) -> Result<Self> {
        if samples.windows(2).any(|w| !(w[1].t_s > w[0].t_s)) {
            return Err(Error::InvalidInput("trace timestamps must be strictly increasing".into()));
        }
        if samples.iter().any(|s| !(s.volts >= 0.0 && s.amps >= 0.0)) {
            return Err(Error::InvalidInput("trace voltage and current must be >= 0".into()));
        }
        Ok(Self {
            samples,
            nominal_rate_hz,
        })
    }

    /// Uniformly sampled trace at `rate_hz` over `[0, duration_s]`.
    pub fn from_fn(rate_hz: f64, duration_s: f64, f: impl Fn(f64) -> (f64, f64)) -> Result<Self> {
        let n = (duration_s * rate_hz).round() as usize;
        let samples = (0..=n)
            .map(|i| {
                let t = i as f64 / rate_hz;
                let (volts, amps) = f(t);
                PowerSample { t_s: t, volts, amps }
            })
            .collect();
        Self::new(samples, rate_hz)
    }

    pub fn samples(&self) -> &[PowerSample] {
        &self.samples
    }

    pub fn span(&self) -> Option<(f64, f64)> {
        Some((self.samples.first()?.t_s, self.samples.last()?.t_s))
    }

    /// Reads CSV `t_s,volts,amps` with a header row. The nominal rate is
    /// inferred from the mean sample spacing.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path)?;
        let mut samples = Vec::new();
        for (i, rec) in rdr.deserialize::<PowerSample>().enumerate() {
            let s = rec.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                reason: e.to_string(),
            })?;
            samples.push(s);
        }
        let rate = match (samples.first(), samples.last()) {
            (Some(a), Some(b)) if samples.len() > 1 => (samples.len() - 1) as f64 / (b.t_s - a.t_s),
            _ => 0.0,
        };
        Self::new(samples, rate)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for s in &self.samples {
            w.serialize(s)?;
        }
        w.flush().map_err(|e| Error::InvalidInput(e.to_string()))
    }
}

fn quantize(v: f64, step_inv: f64) -> f64 {
    (v * step_inv).round() / step_inv
}

pub fn quantize_current(amps: f64) -> f64 {
    quantize(amps, 1.0 / CURRENT_STEP_A)
}

pub fn quantize_voltage(volts: f64) -> f64 {
    quantize(volts, 1.0 / VOLTAGE_STEP_V)
}

/// Energy in joules over `[t_start, t_stop]`. Samples are snapped to the
/// instrument grid, multiplied into power, and the piecewise-linear power
/// curve is integrated with the trapezoidal rule (window edges interpolate).
pub fn integrate_trace(trace: &PowerTrace, t_start: f64, t_stop: f64) -> Result<f64> {
    if !(t_start < t_stop) {
        return Err(Error::Meter(format!("empty window [{t_start}, {t_stop}]")));
    }
    let (lo, hi) = trace
        .span()
        .ok_or_else(|| Error::Meter("trace has no samples".into()))?;
    if t_start < lo || t_stop > hi {
        return Err(Error::Meter(format!(
            "window [{t_start}, {t_stop}] outside trace span [{lo}, {hi}]"
        )));
    }
    let s = &trace.samples;
    let inside = s.iter().filter(|p| p.t_s >= t_start && p.t_s <= t_stop).count();
    if inside < 2 {
        return Err(Error::Meter(format!(
            "window [{t_start}, {t_stop}] holds {inside} sample(s), need 2"
        )));
    }
    let power = |p: &PowerSample| quantize_voltage(p.volts) * quantize_current(p.amps);

    let mut energy = 0.0;
    for w in s.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let (ta, tb) = (a.t_s.max(t_start), b.t_s.min(t_stop));
        if tb <= ta {
            continue;
        }
        let (pa, pb) = (power(a), power(b));
        let at = |t: f64| pa + (pb - pa) * (t - a.t_s) / (b.t_s - a.t_s);
        let (p0, p1) = (
            if ta == a.t_s { pa } else { at(ta) },
            if tb == b.t_s { pb } else { at(tb) },
        );
        energy += 0.5 * (p0 + p1) * (tb - ta);
    }
    Ok(energy)
}

/// Analytical board power model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub name: String,
    pub cores: usize,
    pub idle_power_w: f64,
    pub active_power_per_core_w: f64,
    /// Relative operation rate; scales [`ModelClock::Work`].
    pub throughput_scale: f64,
}

impl DeviceProfile {
    /// Quad-core board at 1.2 GHz. Wattages are calibration inputs.
    pub fn rpi3() -> Self {
        Self {
            name: "rpi3".into(),
            cores: 4,
            idle_power_w: 0.5,
            active_power_per_core_w: 1.5,
            throughput_scale: 1.2,
        }
    }

    /// Single-core board at 1 GHz.
    pub fn bbb() -> Self {
        Self {
            name: "bbb".into(),
            cores: 1,
            idle_power_w: 0.5,
            active_power_per_core_w: 1.5,
            throughput_scale: 1.0,
        }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "rpi3" => Some(Self::rpi3()),
            "bbb" => Some(Self::bbb()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cores == 0 {
            return Err(Error::config("cores", "must be >= 1"));
        }
        if !(self.idle_power_w >= 0.0) {
            return Err(Error::config("idle_power_w", "must be >= 0"));
        }
        if !(self.active_power_per_core_w >= 0.0) {
            return Err(Error::config("active_power_per_core_w", "must be >= 0"));
        }
        if !(self.throughput_scale > 0.0) {
            return Err(Error::config("throughput_scale", "must be > 0"));
        }
        Ok(())
    }

    /// Parses a TOML profile file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let p: Self = toml::from_str(&text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn power_w(&self, active_cores: usize) -> f64 {
        self.idle_power_w + active_cores as f64 * self.active_power_per_core_w
    }
}

/// `(idle + active_cores * per_core) * duration`.
pub fn model_energy(profile: &DeviceProfile, duration_s: f64, active_cores: usize) -> Result<f64> {
    if active_cores == 0 || active_cores > profile.cores {
        return Err(Error::config(
            "active_cores",
            format!("{active_cores} outside 1..={} for `{}`", profile.cores, profile.name),
        ));
    }
    if !(duration_s >= 0.0) {
        return Err(Error::config("duration_s", format!("{duration_s} must be >= 0")));
    }
    Ok(profile.power_w(active_cores) * duration_s)
}

/// Work performed inside a metered phase, in abstract operations
/// (multiply-adds, comparisons, element copies).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Work {
    /// Every operation on every worker.
    pub total_ops: u64,
    /// Operations on the longest dependency chain: serial work plus the
    /// busiest worker of each parallel section.
    pub critical_ops: u64,
}

impl Work {
    pub fn add(&mut self, ops: u64) {
        self.total_ops += ops;
        self.critical_ops += ops;
    }

    /// Records one parallel section given the operation count of each worker.
    pub fn add_parallel(&mut self, per_worker: &[u64]) {
        self.total_ops += per_worker.iter().sum::<u64>();
        self.critical_ops += per_worker.iter().copied().max().unwrap_or(0);
    }
}

/// How the analytical meter obtains a phase duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelClock {
    /// Measured wall-clock time.
    Wall,
    /// `critical_ops / (ops_per_second * throughput_scale)`: deterministic
    /// for a given workload.
    Work { ops_per_second: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnergySource {
    Trace(PowerTrace),
    Model { profile: DeviceProfile, clock: ModelClock },
}

/// Result of one metered phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub duration_s: f64,
    pub energy_j: f64,
    /// Wall-clock seconds, whatever the source.
    pub wall_s: f64,
    pub work: Work,
    /// Trace timeline window, for trace meters.
    pub window: Option<(f64, f64)>,
}

/// A meter owns one energy source and runs non-overlapping sessions.
#[derive(Debug)]
pub struct Meter {
    source: EnergySource,
    cursor: Cell<f64>,
    active: Cell<bool>,
}

impl Meter {
    pub fn new(source: EnergySource) -> Result<Self> {
        let cursor = match &source {
            EnergySource::Trace(t) => t
                .span()
                .ok_or_else(|| Error::Meter("trace has no samples".into()))?
                .0,
            EnergySource::Model { profile, clock } => {
                profile.validate()?;
                if let ModelClock::Work { ops_per_second } = clock {
                    if !(*ops_per_second > 0.0) {
                        return Err(Error::config("ops_per_second", "must be > 0"));
                    }
                }
                0.0
            }
        };
        Ok(Self {
            source,
            cursor: Cell::new(cursor),
            active: Cell::new(false),
        })
    }

    pub fn model(profile: DeviceProfile, clock: ModelClock) -> Result<Self> {
        Self::new(EnergySource::Model { profile, clock })
    }

    pub fn trace(trace: PowerTrace) -> Result<Self> {
        Self::new(EnergySource::Trace(trace))
    }

    pub fn source(&self) -> &EnergySource {
        &self.source
    }

    /// Cores available on the metered device; traces carry no such limit.
    pub fn max_cores(&self) -> Option<usize> {
        match &self.source {
            EnergySource::Model { profile, .. } => Some(profile.cores),
            EnergySource::Trace(_) => None,
        }
    }

    /// Runs `phase` between start and stop markers. Trace meters consume
    /// consecutive windows of their timeline, one per session.
    pub fn session<R>(&self, active_cores: usize, phase: impl FnOnce(&mut Work) -> R) -> Result<(Measurement, R)> {
        if self.active.replace(true) {
            return Err(Error::Meter("nested session on one meter".into()));
        }
        let _guard = SessionGuard(&self.active);
        if let EnergySource::Model { profile, .. } = &self.source {
            // validate before spending time on the phase
            model_energy(profile, 0.0, active_cores)?;
        }

        let mut work = Work::default();
        let start = Instant::now();
        let out = phase(&mut work);
        let wall_s = start.elapsed().as_secs_f64();

        let m = match &self.source {
            EnergySource::Model { profile, clock } => {
                let duration_s = match clock {
                    ModelClock::Wall => wall_s,
                    ModelClock::Work { ops_per_second } => {
                        work.critical_ops as f64 / (ops_per_second * profile.throughput_scale)
                    }
                };
                Measurement {
                    duration_s,
                    energy_j: model_energy(profile, duration_s, active_cores)?,
                    wall_s,
                    work,
                    window: None,
                }
            }
            EnergySource::Trace(trace) => {
                let a = self.cursor.get();
                let b = a + wall_s;
                let energy_j = integrate_trace(trace, a, b)?;
                self.cursor.set(b);
                Measurement {
                    duration_s: wall_s,
                    energy_j,
                    wall_s,
                    work,
                    window: Some((a, b)),
                }
            }
        };
        Ok((m, out))
    }
}

struct SessionGuard<'a>(&'a Cell<bool>);

impl Drop for SessionGuard<'_> {
    fn drop(&mut self) {
        self.0.set(false);
    }
}
