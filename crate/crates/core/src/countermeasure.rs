//! Real-time shot-noise measurement.
//!
//! Two techniques are modelled. With an optical switch on Bob's signal path,
//! a random subset of pulses is measured with the signal blocked, and the
//! open/closed variances give the shot noise through a 2×2 linear system.
//! With a second homodyne detector on a tap of the LO, the shot noise follows
//! from its variance and the calibrated relative sensitivity.
//!
//! [`detect_attack`] compares the real-time value with the calibration-line
//! prediction.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{self, BLOCK_LEN};

/// Which pulses are sacrificed to shot-noise monitoring.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitorPlan {
    pub mask: Vec<bool>,
    pub fraction: f64,
}

impl MonitorPlan {
    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }
}

/// I.i.d. Bernoulli(`fraction`) mask over `n` pulses.
pub fn plan_monitor(n: usize, fraction: f64, seed: u64) -> Result<MonitorPlan> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::invalid(format!(
            "monitor fraction must be in [0, 1], got {fraction}"
        )));
    }
    let seed = rng::derive_seed(seed, "monitor");
    let mut mask = vec![false; n];
    mask.par_chunks_mut(BLOCK_LEN)
        .enumerate()
        .for_each(|(block, chunk)| {
            let mut rng = rng::block_rng(seed, block as u64);
            for b in chunk {
                *b = rng.random::<f64>() < fraction;
            }
        });
    Ok(MonitorPlan { mask, fraction })
}

/// Optical switch on Bob's signal path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchModel {
    pub loss_db: f64,
    /// Residual signal-variance transmission when closed.
    pub extinction: f64,
}

impl SwitchModel {
    pub fn new(loss_db: f64, extinction: f64) -> Result<Self> {
        if !(loss_db >= 0.0 && loss_db.is_finite()) {
            return Err(Error::invalid("switch loss must be >= 0 dB"));
        }
        if !(0.0..1.0).contains(&extinction) {
            return Err(Error::invalid("extinction must be in [0, 1)"));
        }
        Ok(SwitchModel {
            loss_db,
            extinction,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShotNoiseEstimate {
    pub n0_rt: f64,
    /// Signal-plus-excess variance on open pulses.
    pub signal: f64,
    pub m_open: usize,
    pub m_closed: usize,
}

/// Solves
///
/// ```text
/// var_open   =   S + N0 + v_el
/// var_closed = ε·S + N0 + v_el
/// ```
///
/// for `(S, N0)`. Returns `(N0, S)`.
pub fn realtime_shot_noise(
    var_open: f64,
    var_closed: f64,
    extinction: f64,
    v_el: f64,
) -> Result<(f64, f64)> {
    if extinction == 1.0 {
        return Err(Error::Singular(
            "open and closed measurements coincide at unit extinction".into(),
        ));
    }
    let signal = (var_open - var_closed) / (1.0 - extinction);
    let n0 = var_closed - extinction * signal - v_el;
    Ok((n0, signal))
}

/// [`realtime_shot_noise`] from raw open/closed outcome samples.
pub fn realtime_shot_noise_from_samples(
    open: &[f64],
    closed: &[f64],
    extinction: f64,
    v_el: f64,
) -> Result<ShotNoiseEstimate> {
    if open.len() < 2 || closed.len() < 2 {
        return Err(Error::invalid("need at least 2 open and 2 closed samples"));
    }
    let second_moment = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>() / v.len() as f64;
    let (n0_rt, signal) =
        realtime_shot_noise(second_moment(open), second_moment(closed), extinction, v_el)?;
    Ok(ShotNoiseEstimate {
        n0_rt,
        signal,
        m_open: open.len(),
        m_closed: closed.len(),
    })
}

/// Shot noise on the main detector's scale from a second detector:
/// `κ·(var_hd2 − v_el2)`. The flag is set when the estimate is negative.
pub fn second_hd_shot_noise(var_hd2: f64, kappa: f64, v_el2: f64) -> Result<(f64, bool)> {
    if !(kappa > 0.0) {
        return Err(Error::invalid("relative sensitivity must be > 0"));
    }
    Ok((kappa * (var_hd2 - v_el2), var_hd2 < v_el2))
}

/// Detection efficiency after an insertion loss of `loss_db`.
pub fn effective_eta(eta: f64, loss_db: f64) -> f64 {
    eta * 10f64.powf(-loss_db / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackDecision {
    pub alarm: bool,
    pub statistic: f64,
}

/// One-sided test of `n0_line > n0_rt`:
/// statistic `(n0_line − n0_rt)/(n0_rt·√(2/m))`, alarm above `z_threshold`.
pub fn detect_attack(
    n0_rt: f64,
    n0_line: f64,
    m_monitor: usize,
    z_threshold: f64,
) -> Result<AttackDecision> {
    if m_monitor < 2 {
        return Err(Error::invalid("need at least 2 monitoring pulses"));
    }
    let se = n0_rt * (2.0 / m_monitor as f64).sqrt();
    let statistic = (n0_line - n0_rt) / se;
    Ok(AttackDecision {
        alarm: statistic > z_threshold,
        statistic,
    })
}
