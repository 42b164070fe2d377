//! Local-oscillator pulse physics.
//!
//! A [`Waveform`] is a sampled LO intensity trace. Bob's clock circuit turns it
//! into a trigger ([`trigger_time`]), his power monitor turns it into a scalar
//! ([`measure_power`]), and the trigger position relative to the homodyne
//! integration window sets the detector gain ([`detector_gain`]). The lab
//! calibration maps LO power to shot-noise variance ([`CalibrationLine`]).
//!
//! Because the trigger and the power reading are two different linear
//! functionals of the same trace, a pulse can be reshaped so that the power is
//! unchanged while the trigger moves: [`craft_equal_power_pulse`].
//!
//! All predicates are evaluated per sample; there is no sub-sample
//! interpolation.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng;

/// Relative tolerance used when comparing sample grids read from disk.
const GRID_TOL: f64 = 1e-6;

/// A sampled, nonnegative LO intensity trace.
///
/// Sample `i` covers the bin starting at `t0 + i * dt`, so the trace lasts
/// `len * dt` nanoseconds.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    dt: f64,
    t0: f64,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, dt: f64, t0: f64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::invalid("waveform needs at least 2 samples"));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid(format!("dt must be > 0, got {dt}")));
        }
        if !t0.is_finite() {
            return Err(Error::invalid("t0 must be finite"));
        }
        if let Some((i, s)) = samples
            .iter()
            .enumerate()
            .find(|(_, s)| !(s.is_finite() && **s >= 0.0))
        {
            return Err(Error::invalid(format!(
                "sample {i} must be finite and >= 0, got {s}"
            )));
        }
        Ok(Waveform { samples, dt, t0 })
    }

    /// Trapezoidal pulse of total `width_ns` with linear edges of `edge_ns`,
    /// unit plateau, starting at t = 0.
    pub fn trapezoid(width_ns: f64, edge_ns: f64, dt: f64) -> Result<Self> {
        if !(width_ns > 0.0 && edge_ns >= 0.0 && 2.0 * edge_ns <= width_ns) {
            return Err(Error::invalid(
                "trapezoid needs width > 0 and 0 <= edge <= width / 2",
            ));
        }
        let n = (width_ns / dt).round() as usize;
        let samples = (0..n)
            .map(|i| {
                // bin centre
                let t = (i as f64 + 0.5) * dt;
                let rise = if edge_ns > 0.0 { t / edge_ns } else { 1.0 };
                let fall = if edge_ns > 0.0 {
                    (width_ns - t) / edge_ns
                } else {
                    1.0
                };
                rise.min(fall).clamp(0.0, 1.0)
            })
            .collect();
        Waveform::new(samples, dt, 0.0)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 * self.dt
    }

    pub fn time_at(&self, index: usize) -> f64 {
        self.t0 + index as f64 * self.dt
    }

    /// Multiplies every sample by `factor` (must be >= 0).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Waveform::new(
            self.samples.iter().map(|s| s * factor).collect(),
            self.dt,
            self.t0,
        )
    }

    /// Writes `time_ns,intensity` rows with a one-line header.
    pub fn to_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["time_ns", "intensity"])?;
        for (i, s) in self.samples.iter().enumerate() {
            wtr.write_record([self.time_at(i).to_string(), s.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut times = Vec::new();
        let mut samples = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != 2 {
                return Err(Error::invalid(format!(
                    "row {}: expected 2 columns, got {}",
                    row + 1,
                    record.len()
                )));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::invalid(format!("row {}: cannot parse `{s}`", row + 1)))
            };
            times.push(parse(&record[0])?);
            samples.push(parse(&record[1])?);
        }
        if times.len() < 2 {
            return Err(Error::invalid("waveform csv needs at least 2 rows"));
        }
        let dt = times[1] - times[0];
        if !(dt > 0.0) {
            return Err(Error::invalid("time column must be increasing"));
        }
        for (i, pair) in times.windows(2).enumerate() {
            if ((pair[1] - pair[0]) - dt).abs() > GRID_TOL * dt {
                return Err(Error::invalid(format!(
                    "row {}: non-uniform sample spacing",
                    i + 2
                )));
            }
        }
        Waveform::new(samples, dt, times[0])
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_writer(std::fs::File::create(path)?)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Waveform::from_reader(std::fs::File::open(path)?)
    }
}

/// Which trigger law the clock circuit implements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TriggerKind {
    /// Fires when the intensity exceeds `threshold`.
    Threshold { threshold: f64 },
    /// Fires when the intensity exceeds its own value one pulse duration
    /// earlier. Insensitive to the overall signal level.
    Differential { pulse_duration_ns: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriggerConfig {
    pub kind: TriggerKind,
    /// Fixed delay added to the detected edge, ns.
    pub delay_ns: f64,
}

impl TriggerConfig {
    pub fn threshold(threshold: f64, delay_ns: f64) -> Result<Self> {
        let cfg = TriggerConfig {
            kind: TriggerKind::Threshold { threshold },
            delay_ns,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn differential(pulse_duration_ns: f64, delay_ns: f64) -> Result<Self> {
        let cfg = TriggerConfig {
            kind: TriggerKind::Differential { pulse_duration_ns },
            delay_ns,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delay_ns.is_finite() && self.delay_ns >= 0.0) {
            return Err(Error::invalid("trigger delay must be >= 0"));
        }
        match self.kind {
            TriggerKind::Threshold { threshold } if !(threshold > 0.0) => {
                Err(Error::invalid("threshold must be > 0"))
            }
            TriggerKind::Differential { pulse_duration_ns } if !(pulse_duration_ns > 0.0) => {
                Err(Error::invalid("pulse duration must be > 0"))
            }
            _ => Ok(()),
        }
    }
}

/// Exponentially weighted trailing-window power monitor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerMeterConfig {
    pub window_ns: f64,
    /// Weight base per ns; a sample `s` ns before the end of the window has
    /// weight `decay_base^-s`. 1 means uniform weighting.
    pub decay_base: f64,
}

impl PowerMeterConfig {
    pub fn new(window_ns: f64, decay_base: f64) -> Result<Self> {
        if !(window_ns.is_finite() && window_ns > 0.0) {
            return Err(Error::invalid("power window must be > 0"));
        }
        if !(decay_base.is_finite() && decay_base >= 1.0) {
            return Err(Error::invalid("decay base must be >= 1"));
        }
        Ok(PowerMeterConfig {
            window_ns,
            decay_base,
        })
    }

    pub fn uniform(window_ns: f64) -> Result<Self> {
        PowerMeterConfig::new(window_ns, 1.0)
    }

    /// Per-sample weights over a waveform with `len` samples of spacing `dt`.
    /// Samples outside the trailing window get weight 0.
    fn weights(&self, len: usize, dt: f64) -> Result<Vec<f64>> {
        let n_w = (self.window_ns / dt).round() as usize;
        if n_w == 0 {
            return Err(Error::invalid("power window shorter than one sample"));
        }
        if n_w > len {
            return Err(Error::invalid(format!(
                "power window {} ns exceeds waveform duration {} ns",
                self.window_ns,
                len as f64 * dt
            )));
        }
        let mut w = vec![0.0; len];
        for j in 0..n_w {
            w[len - 1 - j] = dt * self.decay_base.powf(-(j as f64) * dt);
        }
        Ok(w)
    }
}

/// Weighted integral of the final `window_ns` of the waveform.
pub fn measure_power(w: &Waveform, cfg: &PowerMeterConfig) -> Result<f64> {
    let weights = cfg.weights(w.len(), w.dt())?;
    Ok(w.samples().iter().zip(&weights).map(|(s, k)| s * k).sum())
}

/// First time the trigger predicate holds, or `None` if it never fires.
pub fn trigger_time(w: &Waveform, cfg: &TriggerConfig) -> Option<f64> {
    let s = w.samples();
    let index = match cfg.kind {
        TriggerKind::Threshold { threshold } => s.iter().position(|&v| v > threshold),
        TriggerKind::Differential { pulse_duration_ns } => {
            let lag = ((pulse_duration_ns / w.dt()).round() as usize).max(1);
            // the trace is zero before t0
            (0..s.len()).find(|&i| {
                let earlier = if i >= lag { s[i - lag] } else { 0.0 };
                s[i] - earlier > 0.0
            })
        }
    };
    index.map(|i| w.time_at(i) + cfg.delay_ns)
}

/// Homodyne detector timing model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorModel {
    /// Integration window Δ, ns.
    pub integration_ns: f64,
    /// Integrator discharge time constant τ, ns.
    pub discharge_ns: f64,
    /// Calibrated shot-noise variance per unit LO power.
    pub slope_cal: f64,
    /// Electronic noise variance, SNU.
    pub v_el: f64,
}

/// Discharge constant for which a trigger delayed by `delay_ns` past the end
/// of integration divides the measured variance by `ratio`.
pub fn calibrated_discharge_ns(delay_ns: f64, ratio: f64) -> f64 {
    2.0 * delay_ns / ratio.ln()
}

impl DetectorModel {
    pub fn new(integration_ns: f64, discharge_ns: f64, slope_cal: f64, v_el: f64) -> Result<Self> {
        let det = DetectorModel {
            integration_ns,
            discharge_ns,
            slope_cal,
            v_el,
        };
        det.validate()?;
        Ok(det)
    }

    /// Δ = 100 ns, τ ≈ 49.33 ns (a 10 ns delay gives N0'/N0 = 1.5), unit slope.
    pub fn reference(v_el: f64) -> Self {
        DetectorModel {
            integration_ns: 100.0,
            discharge_ns: calibrated_discharge_ns(10.0, 1.5),
            slope_cal: 1.0,
            v_el,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.integration_ns > 0.0 && self.integration_ns.is_finite()) {
            return Err(Error::invalid("integration window must be > 0"));
        }
        if !(self.discharge_ns > 0.0 && self.discharge_ns.is_finite()) {
            return Err(Error::invalid("discharge constant must be > 0"));
        }
        if !(self.slope_cal > 0.0 && self.slope_cal.is_finite()) {
            return Err(Error::invalid("calibration slope must be > 0"));
        }
        if !(self.v_el >= 0.0 && self.v_el.is_finite()) {
            return Err(Error::invalid("electronic noise must be >= 0"));
        }
        Ok(())
    }

    /// Gain seen when the trigger is delayed by `delay_ns` from its nominal
    /// position at the end of the integration window.
    pub fn gain_for_delay(&self, delay_ns: f64) -> Result<f64> {
        if !(delay_ns >= 0.0) {
            return Err(Error::invalid("trigger delay must be >= 0"));
        }
        detector_gain(self.integration_ns + delay_ns, self)
    }
}

/// Variance gain of the homodyne output sampled `t_m` ns after pulse start.
///
/// The integrated amplitude ramps linearly up to Δ and then decays with the
/// discharge constant, so the variance gain is `(t_m/Δ)²` before Δ and
/// `exp(-2(t_m-Δ)/τ)` after.
pub fn detector_gain(t_m: f64, det: &DetectorModel) -> Result<f64> {
    if !(t_m > 0.0 && t_m.is_finite()) {
        return Err(Error::invalid(format!(
            "measurement time must be > 0, got {t_m}"
        )));
    }
    let delta = det.integration_ns;
    Ok(if t_m <= delta {
        (t_m / delta).powi(2)
    } else {
        (-2.0 * (t_m - delta) / det.discharge_ns).exp()
    })
}

/// Least-squares line of measured variance against LO power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationLine {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope (0 for exactly two points).
    pub slope_stderr: f64,
}

impl CalibrationLine {
    /// Total variance predicted at `power`.
    pub fn predict(&self, power: f64) -> f64 {
        self.slope * power + self.intercept
    }

    /// Shot-noise part of the prediction (the intercept is electronic noise).
    pub fn shot_noise(&self, power: f64) -> f64 {
        self.slope * power
    }
}

pub fn fit_calibration_line(points: &[(f64, f64)]) -> Result<CalibrationLine> {
    if points.len() < 2 {
        return Err(Error::Degenerate(
            "calibration fit needs at least 2 points".into(),
        ));
    }
    let n = points.len() as f64;
    let mean_p = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_v = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_p).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_p) * (p.1 - mean_v)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Degenerate(
            "all calibration powers are identical".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = mean_v - slope * mean_p;
    let slope_stderr = if points.len() > 2 {
        let rss: f64 = points
            .iter()
            .map(|p| (p.1 - slope * p.0 - intercept).powi(2))
            .sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    if !(slope > 0.0) {
        return Err(Error::Degenerate(format!(
            "fitted calibration slope {slope} is not positive"
        )));
    }
    Ok(CalibrationLine {
        slope,
        intercept,
        slope_stderr,
    })
}

/// Simulated lab calibration: at each power the detector variance
/// `gain * slope_cal * P + v_el` is estimated from `samples_per_point`
/// vacuum samples (Gaussian estimator noise of relative size `sqrt(2/k)`).
///
/// The electronic noise is not affected by `gain`.
pub fn synthetic_calibration(
    det: &DetectorModel,
    powers: &[f64],
    gain: f64,
    samples_per_point: u64,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if samples_per_point < 2 {
        return Err(Error::invalid(
            "need at least 2 samples per calibration point",
        ));
    }
    if !(gain > 0.0) {
        return Err(Error::invalid("gain must be > 0"));
    }
    let rel = (2.0 / samples_per_point as f64).sqrt();
    let mut rng = rng::block_rng(rng::derive_seed(seed, "calibration"), 0);
    Ok(powers
        .iter()
        .map(|&p| {
            let var = gain * det.slope_cal * p + det.v_el;
            let z: f64 = rng.sample(StandardNormal);
            (p, var * (1.0 + rel * z))
        })
        .collect())
}

/// `count` evenly spaced powers on `[lo, hi]`.
pub fn power_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// Scales the first `k_ns` of the trace by `alpha`.
///
/// With `preserve_power`, the rest of the trace is rescaled by the unique
/// factor that keeps [`measure_power`] unchanged.
pub fn attenuate_leading_edge(
    w: &Waveform,
    alpha: f64,
    k_ns: f64,
    preserve_power: bool,
    pm: &PowerMeterConfig,
) -> Result<Waveform> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!(
            "alpha must be in [0, 1], got {alpha}"
        )));
    }
    if !(k_ns >= 0.0 && k_ns <= w.duration() + 1e-9 * w.dt()) {
        return Err(Error::invalid(format!(
            "attenuated span {k_ns} ns outside [0, {}]",
            w.duration()
        )));
    }
    if alpha == 1.0 {
        return Ok(w.clone());
    }
    // bins whose start lies in [t0, t0 + k)
    let n_k = ((k_ns / w.dt() - 1e-9).ceil().max(0.0) as usize).min(w.len());
    let mut out = w.samples().to_vec();
    for s in &mut out[..n_k] {
        *s *= alpha;
    }
    if preserve_power {
        let weights = pm.weights(w.len(), w.dt())?;
        let head: f64 = w.samples()[..n_k]
            .iter()
            .zip(&weights[..n_k])
            .map(|(s, k)| s * k)
            .sum();
        let tail: f64 = w.samples()[n_k..]
            .iter()
            .zip(&weights[n_k..])
            .map(|(s, k)| s * k)
            .sum();
        let total = head + tail;
        if !(tail > 1e-12 * total.max(f64::MIN_POSITIVE)) {
            return Err(Error::Infeasible(
                "no power-meter weight remains after the attenuated span".into(),
            ));
        }
        let factor = (total - alpha * head) / tail;
        for s in &mut out[n_k..] {
            *s *= factor;
        }
    }
    Waveform::new(out, w.dt(), w.t0())
}

/// Relative power mismatch accepted by [`craft_equal_power_pulse`].
pub const POWER_MATCH_TOL: f64 = 1e-6;

/// Grid step for the attenuation factor searched by
/// [`craft_equal_power_pulse`].
pub const ALPHA_STEP: f64 = 0.05;

/// Builds a pulse with the same measured power as `base` whose trigger fires
/// at least `shift_ns` later.
///
/// Searches attenuated spans `k` (in sample steps, shortest first) and, for
/// each, attenuation factors from 0.95 down to 0 in steps of 0.05, with the
/// power-preserving tail rescale. Every candidate is checked against both
/// postconditions before it is returned.
pub fn craft_equal_power_pulse(
    base: &Waveform,
    shift_ns: f64,
    trig: &TriggerConfig,
    pm: &PowerMeterConfig,
) -> Result<Waveform> {
    if !(shift_ns >= 0.0 && shift_ns.is_finite()) {
        return Err(Error::invalid("trigger shift must be >= 0"));
    }
    trig.validate()?;
    if shift_ns == 0.0 {
        return Ok(base.clone());
    }
    let t_base = trigger_time(base, trig)
        .ok_or_else(|| Error::Infeasible("base pulse never triggers".into()))?;
    let p_base = measure_power(base, pm)?;
    let steps = (1.0 / ALPHA_STEP).round() as usize;

    for n in 1..=base.len() {
        let k = n as f64 * base.dt();
        for step in (0..steps).rev() {
            let alpha = step as f64 * ALPHA_STEP;
            let candidate = match attenuate_leading_edge(base, alpha, k, true, pm) {
                Ok(c) => c,
                Err(Error::Infeasible(_)) => continue,
                Err(e) => return Err(e),
            };
            let Some(t) = trigger_time(&candidate, trig) else {
                continue;
            };
            if t - t_base < shift_ns - 1e-9 {
                continue;
            }
            let p = measure_power(&candidate, pm)?;
            if (p - p_base).abs() <= POWER_MATCH_TOL * p_base.abs() {
                return Ok(candidate);
            }
        }
    }
    Err(Error::Infeasible(format!(
        "no (alpha, k) grid point delays the trigger by {shift_ns} ns at equal power"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn step_wave() -> Waveform {
        let mut s = vec![0.0; 20];
        for v in &mut s[5..] {
            *v = 1.0;
        }
        Waveform::new(s, 1.0, 0.0).unwrap()
    }

    #[test]
    fn waveform_rejects_bad_input() {
        assert!(Waveform::new(vec![1.0], 1.0, 0.0).is_err());
        assert!(Waveform::new(vec![1.0, -0.1], 1.0, 0.0).is_err());
        assert!(Waveform::new(vec![1.0, f64::NAN], 1.0, 0.0).is_err());
        assert!(Waveform::new(vec![1.0, 1.0], 0.0, 0.0).is_err());
    }

    #[test]
    fn power_of_zero_waveform() {
        let w = Waveform::new(vec![0.0; 50], 1.0, 0.0).unwrap();
        let pm = PowerMeterConfig::new(20.0, 1.1).unwrap();
        assert_eq!(measure_power(&w, &pm).unwrap(), 0.0);
    }

    #[test]
    fn power_of_constant_waveform() {
        let w = Waveform::new(vec![1.0; 100], 1.0, 0.0).unwrap();
        let pm = PowerMeterConfig::uniform(100.0).unwrap();
        assert_relative_eq!(measure_power(&w, &pm).unwrap(), 100.0, max_relative = 1e-12);
    }

    #[test]
    fn power_window_longer_than_waveform() {
        let w = Waveform::new(vec![1.0; 10], 1.0, 0.0).unwrap();
        let pm = PowerMeterConfig::uniform(11.0).unwrap();
        assert!(matches!(
            measure_power(&w, &pm),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn power_meter_config_bounds() {
        assert!(PowerMeterConfig::new(0.0, 1.0).is_err());
        assert!(PowerMeterConfig::new(10.0, 0.99).is_err());
    }

    #[test]
    fn threshold_trigger_below_threshold() {
        let w = Waveform::new(vec![0.2; 10], 1.0, 0.0).unwrap();
        let trig = TriggerConfig::threshold(0.5, 0.0).unwrap();
        assert_eq!(trigger_time(&w, &trig), None);
    }

    #[test]
    fn threshold_trigger_on_step() {
        let trig = TriggerConfig::threshold(0.5, 2.0).unwrap();
        assert_eq!(trigger_time(&step_wave(), &trig), Some(7.0));
    }

    #[test]
    fn differential_trigger_is_scale_invariant() {
        let w = Waveform::trapezoid(100.0, 10.0, 0.5).unwrap();
        let trig = TriggerConfig::differential(100.0, 3.0).unwrap();
        let t = trigger_time(&w, &trig);
        assert!(t.is_some());
        for c in [1e-3, 0.5, 7.0, 1e4] {
            assert_eq!(trigger_time(&w.scaled(c).unwrap(), &trig), t);
        }
    }

    #[test]
    fn trigger_config_validation() {
        assert!(TriggerConfig::threshold(0.0, 0.0).is_err());
        assert!(TriggerConfig::threshold(0.5, -1.0).is_err());
        assert!(TriggerConfig::differential(0.0, 0.0).is_err());
    }

    #[test]
    fn gain_reference_points() {
        let det = DetectorModel::reference(0.0);
        assert_eq!(detector_gain(100.0, &det).unwrap(), 1.0);
        assert_relative_eq!(
            detector_gain(50.0, &det).unwrap(),
            0.25,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            detector_gain(110.0, &det).unwrap(),
            1.0 / 1.5,
            max_relative = 1e-12
        );
        assert!((det.discharge_ns - 49.33).abs() < 0.01);
        assert!(detector_gain(0.0, &det).is_err());
        assert!(detector_gain(-5.0, &det).is_err());
    }

    #[test]
    fn gain_is_continuous_at_integration_end() {
        let det = DetectorModel::reference(0.0);
        let eps = 1e-9;
        let below = detector_gain(100.0 - eps, &det).unwrap();
        let above = detector_gain(100.0 + eps, &det).unwrap();
        assert!((below - 1.0).abs() < 1e-9 && (above - 1.0).abs() < 1e-9);
    }

    #[test]
    fn collinear_calibration_fit() {
        let pts: Vec<_> = (0..5).map(|i| (i as f64, 2.0 * i as f64 + 0.01)).collect();
        let line = fit_calibration_line(&pts).unwrap();
        assert_relative_eq!(line.slope, 2.0, max_relative = 1e-12);
        assert_relative_eq!(line.intercept, 0.01, max_relative = 1e-9);
        assert!(line.slope_stderr < 1e-12);
    }

    #[test]
    fn degenerate_calibration_fit() {
        let pts = vec![(1.0, 2.0), (1.0, 2.1), (1.0, 1.9)];
        assert!(matches!(
            fit_calibration_line(&pts),
            Err(Error::Degenerate(_))
        ));
        assert!(fit_calibration_line(&[(1.0, 1.0)]).is_err());
    }

    #[test]
    fn noisy_calibration_slope_within_four_se() {
        let det = DetectorModel::reference(0.01);
        let powers = power_grid(0.1, 2.0, 1000);
        let pts = synthetic_calibration(&det, &powers, 1.0, 10_000, 11).unwrap();
        let line = fit_calibration_line(&pts).unwrap();
        assert!((line.slope - det.slope_cal).abs() < 4.0 * line.slope_stderr);
    }

    #[test]
    fn attenuate_identity() {
        let w = Waveform::trapezoid(100.0, 5.0, 1.0).unwrap();
        let pm = PowerMeterConfig::uniform(100.0).unwrap();
        assert_eq!(attenuate_leading_edge(&w, 1.0, 30.0, true, &pm).unwrap(), w);
    }

    #[test]
    fn attenuate_delays_threshold_trigger() {
        let w = Waveform::trapezoid(100.0, 10.0, 0.5).unwrap();
        let pm = PowerMeterConfig::uniform(100.0).unwrap();
        let trig = TriggerConfig::threshold(0.5, 0.0).unwrap();
        let t0 = trigger_time(&w, &trig).unwrap();
        let shaped = attenuate_leading_edge(&w, 0.0, t0 + 5.0, false, &pm).unwrap();
        assert!(trigger_time(&shaped, &trig).unwrap() > t0);
    }

    #[test]
    fn attenuate_preserves_power() {
        let w = Waveform::trapezoid(100.0, 10.0, 0.5).unwrap();
        let pm = PowerMeterConfig::new(100.0, 1.02).unwrap();
        let shaped = attenuate_leading_edge(&w, 0.3, 20.0, true, &pm).unwrap();
        let (p0, p1) = (
            measure_power(&w, &pm).unwrap(),
            measure_power(&shaped, &pm).unwrap(),
        );
        assert!((p0 - p1).abs() <= 1e-9 * p0);
    }

    #[test]
    fn attenuate_whole_pulse_is_infeasible() {
        let w = Waveform::trapezoid(100.0, 10.0, 1.0).unwrap();
        let pm = PowerMeterConfig::uniform(100.0).unwrap();
        assert!(matches!(
            attenuate_leading_edge(&w, 0.5, 100.0, true, &pm),
            Err(Error::Infeasible(_))
        ));
        assert!(attenuate_leading_edge(&w, 1.5, 10.0, true, &pm).is_err());
        assert!(attenuate_leading_edge(&w, 0.5, 101.0, true, &pm).is_err());
    }

    #[test]
    fn craft_zero_shift_returns_base() {
        let w = Waveform::trapezoid(100.0, 5.0, 0.5).unwrap();
        let pm = PowerMeterConfig::uniform(100.0).unwrap();
        let trig = TriggerConfig::threshold(0.5, 0.0).unwrap();
        assert_eq!(craft_equal_power_pulse(&w, 0.0, &trig, &pm).unwrap(), w);
    }

    #[test]
    fn craft_ten_ns_shift() {
        let w = Waveform::trapezoid(100.0, 5.0, 0.5).unwrap();
        let pm = PowerMeterConfig::uniform(100.0).unwrap();
        let trig = TriggerConfig::threshold(0.5, 0.0).unwrap();
        let crafted = craft_equal_power_pulse(&w, 10.0, &trig, &pm).unwrap();
        let p0 = measure_power(&w, &pm).unwrap();
        let p1 = measure_power(&crafted, &pm).unwrap();
        assert!((p0 - p1).abs() <= 1e-6 * p0);
        let shift = trigger_time(&crafted, &trig).unwrap() - trigger_time(&w, &trig).unwrap();
        assert!(shift >= 10.0 - 1e-9, "shift {shift}");
    }

    #[test]
    fn craft_beyond_pulse_is_infeasible() {
        let w = Waveform::trapezoid(100.0, 5.0, 0.5).unwrap();
        let pm = PowerMeterConfig::uniform(100.0).unwrap();
        let trig = TriggerConfig::threshold(0.5, 0.0).unwrap();
        assert!(matches!(
            craft_equal_power_pulse(&w, 150.0, &trig, &pm),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let w = Waveform::new(vec![0.0, 0.25, 1.0, 0.5], 0.5, 10.0).unwrap();
        let mut buf = Vec::new();
        w.to_writer(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("time_ns,intensity\n"));
        assert_eq!(Waveform::from_reader(buf.as_slice()).unwrap(), w);
    }

    #[test]
    fn csv_rejects_irregular_grid() {
        let text = "time_ns,intensity\n0,1\n1,1\n3,1\n";
        assert!(Waveform::from_reader(text.as_bytes()).is_err());
    }
}
