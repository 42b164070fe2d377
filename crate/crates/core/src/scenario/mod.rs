//! End-to-end experiments: calibrate, attack, estimate, monitor, and rate.

mod config;
mod report;

pub use config::{CalibrationConfig, CountermeasureConfig, ScenarioConfig, SweepConfig};
pub use report::{ScenarioReport, ShotNoiseSection, Verdict};

use std::io::Write;

use rand::seq::index;
use rayon::prelude::*;

use crate::countermeasure::{self, effective_eta};
use crate::error::{Error, Result};
use crate::estimation::{self, EstimationReport};
use crate::keyrate::{self, KeyRateParams, SweepPoint, SweepSystem};
use crate::protocol::{self, ChannelParams, LoMixture, Monitoring, PulseRecord};
use crate::pulse::{self, CalibrationLine, PowerMeterConfig, TriggerConfig, Waveform};
use crate::rng;

/// Output of [`run_scenario_with_samples`].
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub report: ScenarioReport,
    /// Every pulse, including monitoring and key pulses.
    pub records: Vec<PulseRecord>,
    /// Sorted indices into `records` of the pulses used for estimation.
    pub estimation_indices: Vec<usize>,
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioReport> {
    run_scenario_with_samples(cfg).map(|r| r.report)
}

/// Runs the full pipeline for one configuration.
///
/// Alice's quadratures are referred to the shot-noise scale of Bob's detector
/// during the run before estimation, so that the fitted slope is the physical
/// `√(ηT)` and the LO attack shows up purely as a shot-noise mismatch.
pub fn run_scenario_with_samples(cfg: &ScenarioConfig) -> Result<ScenarioRun> {
    cfg.channel.validate().map_err(Error::at_stage("config"))?;
    cfg.attack.validate().map_err(Error::at_stage("config"))?;
    cfg.detector.validate().map_err(Error::at_stage("config"))?;

    // lab calibration: variance against LO power with a nominal trigger
    let cal = &cfg.calibration;
    let line = calibration_line(cfg, 1.0).map_err(Error::at_stage("calibration"))?;
    let n0_line = line.shot_noise(cal.lo_power);

    let plan = cfg
        .countermeasure
        .as_ref()
        .map(|cm| countermeasure::plan_monitor(cfg.pulses, cm.fraction, cfg.seed))
        .transpose()
        .map_err(Error::at_stage("monitor"))?;

    let eta = match &cfg.countermeasure {
        Some(cm) => effective_eta(cfg.channel.eta, cm.switch.loss_db),
        None => cfg.channel.eta,
    };
    let channel = ChannelParams { eta, ..cfg.channel };

    let x = protocol::generate_alice(cfg.pulses, channel.va, cfg.seed)
        .map_err(Error::at_stage("alice"))?;
    let monitoring = match (&plan, &cfg.countermeasure) {
        (Some(p), Some(cm)) => Some(Monitoring {
            mask: &p.mask,
            extinction: cm.switch.extinction,
        }),
        _ => None,
    };
    let records = protocol::simulate_bob_monitored(
        &x,
        &channel,
        &cfg.attack,
        &cfg.detector,
        monitoring,
        cfg.seed,
    )
    .map_err(Error::at_stage("bob"))?;
    drop(x);

    // seeded estimation/key split of the non-monitoring pulses
    let usable: Vec<usize> = match &plan {
        Some(p) => (0..cfg.pulses).filter(|&i| !p.mask[i]).collect(),
        None => (0..cfg.pulses).collect(),
    };
    let n_key = (cfg.key_fraction * usable.len() as f64).round() as usize;
    let m = usable.len().saturating_sub(n_key);
    if m < 2 || n_key == 0 {
        return Err(Error::at_stage("partition")(Error::invalid(format!(
            "{} usable pulses cannot be split into key and estimation sets",
            usable.len()
        ))));
    }
    let mut split_rng = rng::block_rng(rng::derive_seed(cfg.seed, "partition"), 0);
    let mut picked = index::sample(&mut split_rng, usable.len(), m).into_vec();
    picked.sort_unstable();
    let estimation_idx: Vec<usize> = picked.into_iter().map(|j| usable[j]).collect();

    let mixture =
        LoMixture::new(&cfg.attack, &cfg.detector).map_err(Error::at_stage("estimation"))?;
    let scale = mixture.mean_gain.sqrt();
    let (x_est, y_est): (Vec<f64>, Vec<f64>) = estimation_idx
        .iter()
        .map(|&i| (records[i].x * scale, records[i].y))
        .unzip();
    let est = estimation::ml_estimate(&x_est, &y_est).map_err(Error::at_stage("estimation"))?;

    let shot_noise = match (&plan, &cfg.countermeasure) {
        (Some(p), Some(cm)) => {
            let closed: Vec<f64> = (0..cfg.pulses)
                .filter(|&i| p.mask[i])
                .map(|i| records[i].y)
                .collect();
            let sn = countermeasure::realtime_shot_noise_from_samples(
                &y_est,
                &closed,
                cm.switch.extinction,
                cfg.channel.v_el,
            )
            .map_err(Error::at_stage("countermeasure"))?;
            let decision =
                countermeasure::detect_attack(sn.n0_rt, n0_line, sn.m_closed, cm.z_threshold)
                    .map_err(Error::at_stage("countermeasure"))?;
            Some(ShotNoiseSection {
                n0_rt: sn.n0_rt,
                n0_line,
                alarm: decision.alarm,
                statistic: decision.statistic,
                m_monitor: sn.m_closed,
            })
        }
        _ => None,
    };

    let n0_used = shot_noise.as_ref().map_or(n0_line, |s| s.n0_rt);
    let xi_stderr_snu =
        estimation::xi_standard_error(&x_est, &y_est, &est, n0_used + cfg.channel.v_el) / n0_used;
    let estimation = EstimationReport::build(est, n0_used, eta, cfg.channel.v_el, cfg.epsilon)
        .map_err(Error::at_stage("estimation"))?;

    let discount = 1.0 - cfg.countermeasure.as_ref().map_or(0.0, |cm| cm.fraction);
    let n0 = cfg.channel.n0;
    let estimated = KeyRateParams {
        va: estimation.estimates.va_hat / n0_used,
        transmittance: estimation.transmittance.clamp(0.0, 1.0),
        eta,
        // unphysical negative estimates are rated as zero excess noise
        xi: estimation.xi_snu().max(0.0),
        v_el: cfg.channel.v_el / n0_used,
        beta: cfg.beta,
    };
    let xi_true_snu = estimation::xi_pir(cfg.channel.xi / n0, cfg.attack.mu);
    let truth = KeyRateParams {
        va: cfg.channel.va / n0,
        transmittance: cfg.channel.transmittance,
        eta,
        xi: xi_true_snu,
        v_el: cfg.channel.v_el / n0,
        beta: cfg.beta,
    };
    let k_estimated = keyrate::secret_key_rate(&estimated)
        .map_err(Error::at_stage("keyrate"))?
        .k
        * discount;
    let k_true = keyrate::secret_key_rate(&truth)
        .map_err(Error::at_stage("keyrate"))?
        .k
        * discount;

    let alarm = shot_noise.as_ref().is_some_and(|s| s.alarm);
    let verdict = Verdict::decide(alarm, k_estimated, k_true);

    Ok(ScenarioRun {
        report: ScenarioReport {
            estimation,
            n0_line,
            n0_run: mixture.run_shot_noise(&cfg.channel),
            shot_noise,
            xi_true_snu,
            xi_stderr_snu,
            k_estimated,
            k_true,
            verdict,
            seed: cfg.seed,
            config_hash: cfg.hash(),
        },
        records,
        estimation_indices: estimation_idx,
    })
}

/// Lab calibration line fitted with the detector gain fixed at `gain`.
pub fn calibration_line(cfg: &ScenarioConfig, gain: f64) -> Result<CalibrationLine> {
    let pts = calibration_points(cfg, gain)?;
    pulse::fit_calibration_line(&pts)
}

fn calibration_points(cfg: &ScenarioConfig, gain: f64) -> Result<Vec<(f64, f64)>> {
    let cal = &cfg.calibration;
    let powers = pulse::power_grid(cal.power_min, cal.power_max, cal.points);
    // same seed for every gain: the delayed line differs only by the gain
    pulse::synthetic_calibration(
        &cfg.detector,
        &powers,
        gain,
        cal.samples_per_point,
        cfg.seed,
    )
}

/// Calibration lines with the nominal trigger and with the configured delay.
#[derive(Debug, Clone)]
pub struct CalibrationOutput {
    pub gain: f64,
    pub points_nominal: Vec<(f64, f64)>,
    pub points_delayed: Vec<(f64, f64)>,
    pub line_nominal: CalibrationLine,
    pub line_delayed: CalibrationLine,
}

impl CalibrationOutput {
    pub fn slope_ratio(&self) -> f64 {
        self.line_delayed.slope / self.line_nominal.slope
    }

    /// `power,variance_nominal,variance_delayed` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["power", "variance_nominal", "variance_delayed"])?;
        for (a, b) in self.points_nominal.iter().zip(&self.points_delayed) {
            wtr.write_record([a.0.to_string(), a.1.to_string(), b.1.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub fn calibrate(cfg: &ScenarioConfig) -> Result<CalibrationOutput> {
    let gain = cfg.detector.gain_for_delay(cfg.attack.delay_ns)?;
    let points_nominal = calibration_points(cfg, 1.0)?;
    let points_delayed = calibration_points(cfg, gain)?;
    Ok(CalibrationOutput {
        gain,
        line_nominal: pulse::fit_calibration_line(&points_nominal)?,
        line_delayed: pulse::fit_calibration_line(&points_delayed)?,
        points_nominal,
        points_delayed,
    })
}

/// Two key-rate curves on a shared distance grid.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub baseline: Vec<SweepPoint>,
    pub countermeasure: Vec<SweepPoint>,
    pub baseline_max_km: f64,
    pub countermeasure_max_km: f64,
}

impl SweepConfig {
    pub fn baseline_system(&self) -> SweepSystem {
        SweepSystem {
            base: self.base,
            link: self.link,
            snr: self.snr,
            monitor_fraction: 0.0,
            switch: None,
        }
    }

    pub fn countermeasure_system(&self) -> SweepSystem {
        SweepSystem {
            monitor_fraction: self.cm_fraction,
            switch: Some(self.switch),
            ..self.baseline_system()
        }
    }

    pub fn distances(&self) -> Vec<f64> {
        let n = (self.d_max_km / self.d_step_km).round() as usize;
        (0..=n).map(|i| i as f64 * self.d_step_km).collect()
    }
}

pub fn sweep_keyrate(cfg: &SweepConfig) -> Result<SweepResult> {
    let distances = cfg.distances();
    let curve = |sys: SweepSystem| -> Result<Vec<SweepPoint>> {
        distances.par_iter().map(|&d| sys.at(d)).collect()
    };
    Ok(SweepResult {
        baseline: curve(cfg.baseline_system())?,
        countermeasure: curve(cfg.countermeasure_system())?,
        baseline_max_km: keyrate::max_secure_distance(&cfg.baseline_system())?,
        countermeasure_max_km: keyrate::max_secure_distance(&cfg.countermeasure_system())?,
    })
}

/// `d_km,T,V_A,i_ab,chi_be,K` rows.
pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["d_km", "T", "V_A", "i_ab", "chi_be", "K"])?;
    for p in points {
        wtr.write_record([
            p.distance_km.to_string(),
            p.transmittance.to_string(),
            p.va.to_string(),
            p.breakdown.i_ab.to_string(),
            p.breakdown.chi_be.to_string(),
            p.k.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

impl SweepResult {
    /// Both curves in one table, `curve` column first (`baseline` or `countermeasure`).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["curve", "d_km", "T", "V_A", "i_ab", "chi_be", "K"])?;
        for (name, points) in [
            ("baseline", &self.baseline),
            ("countermeasure", &self.countermeasure),
        ] {
            for p in points {
                wtr.write_record([
                    name.to_string(),
                    p.distance_km.to_string(),
                    p.transmittance.to_string(),
                    p.va.to_string(),
                    p.breakdown.i_ab.to_string(),
                    p.breakdown.chi_be.to_string(),
                    p.k.to_string(),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Two pulses with the same measured power and different trigger times.
#[derive(Debug, Clone)]
pub struct PulseDemo {
    pub base: Waveform,
    pub crafted: Waveform,
    pub power_base: f64,
    pub power_crafted: f64,
    pub trigger_base: f64,
    pub trigger_crafted: f64,
}

impl PulseDemo {
    /// `time_ns,base,crafted` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["time_ns", "base", "crafted"])?;
        for (i, (a, b)) in self
            .base
            .samples()
            .iter()
            .zip(self.crafted.samples())
            .enumerate()
        {
            wtr.write_record([
                self.base.time_at(i).to_string(),
                a.to_string(),
                b.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// 100 ns trapezoidal LO pulse (5 ns edges, 0.5 ns sampling), threshold
/// trigger at half amplitude, uniform 100 ns power window.
pub fn pulse_demo(shift_ns: f64) -> Result<PulseDemo> {
    let base = Waveform::trapezoid(100.0, 5.0, 0.5)?;
    let trig = TriggerConfig::threshold(0.5, 0.0)?;
    let pm = PowerMeterConfig::uniform(100.0)?;
    let crafted = pulse::craft_equal_power_pulse(&base, shift_ns, &trig, &pm)?;
    let never = || Error::Infeasible("pulse does not trigger".into());
    Ok(PulseDemo {
        power_base: pulse::measure_power(&base, &pm)?,
        power_crafted: pulse::measure_power(&crafted, &pm)?,
        trigger_base: pulse::trigger_time(&base, &trig).ok_or_else(never)?,
        trigger_crafted: pulse::trigger_time(&crafted, &trig).ok_or_else(never)?,
        base,
        crafted,
    })
}
