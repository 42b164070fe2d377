//! Pulse-level Monte Carlo of Gaussian-modulated coherent-state CV-QKD under
//! a partial intercept-resend attack combined with LO shaping.
//!
//! Per pulse, Bob's outcome is
//!
//! ```text
//! y = √g · (√(ηT)·(x + w) + z_exc + z_shot) + z_el
//! ```
//!
//! with `w ~ N(0, 2·N0)` only on intercepted pulses, `z_exc ~ N(0, ηTξ)`,
//! `z_shot ~ N(0, N0)` and `z_el ~ N(0, v_el)`. The detector gain `g` is
//! below 1 on pulses whose LO was shaped by Eve. Electronic noise is added
//! after the gain: it does not depend on the LO.
//!
//! Randomness is drawn in fixed-size blocks, each with its own stream, so
//! results do not depend on the number of worker threads.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pulse::{self, DetectorModel, PowerMeterConfig, TriggerConfig, Waveform};
use crate::rng::{self, BLOCK_LEN};

/// True protocol parameters, in shot-noise units of the unattacked detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    /// Alice's modulation variance V_A.
    pub va: f64,
    /// Channel transmittance T.
    pub transmittance: f64,
    /// Homodyne efficiency η.
    pub eta: f64,
    /// Excess noise ξ, referred to the channel input.
    pub xi: f64,
    pub v_el: f64,
    /// Shot noise N0 of the unattacked detector.
    pub n0: f64,
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        let ok = |cond: bool, what: &str| {
            if cond {
                Ok(())
            } else {
                Err(Error::invalid(what.to_string()))
            }
        };
        ok(self.va >= 0.0 && self.va.is_finite(), "V_A must be >= 0")?;
        ok(
            (0.0..=1.0).contains(&self.transmittance),
            "T must be in [0, 1]",
        )?;
        ok(self.eta > 0.0 && self.eta <= 1.0, "eta must be in (0, 1]")?;
        ok(self.xi >= 0.0 && self.xi.is_finite(), "xi must be >= 0")?;
        ok(
            self.v_el >= 0.0 && self.v_el.is_finite(),
            "v_el must be >= 0",
        )?;
        ok(self.n0 > 0.0 && self.n0.is_finite(), "N0 must be > 0")
    }

    pub fn eta_t(&self) -> f64 {
        self.eta * self.transmittance
    }
}

/// Eve's knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackParams {
    /// Fraction of signal pulses measured and resent.
    pub mu: f64,
    /// Fraction of LO pulses reshaped.
    pub nu: f64,
    /// Leading-edge attenuation applied to reshaped LO pulses.
    pub alpha: f64,
    /// Trigger delay caused by the reshaping, ns.
    pub delay_ns: f64,
}

impl AttackParams {
    pub const NONE: AttackParams = AttackParams {
        mu: 0.0,
        nu: 0.0,
        alpha: 1.0,
        delay_ns: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("mu", self.mu), ("nu", self.nu), ("alpha", self.alpha)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        if !(self.delay_ns >= 0.0 && self.delay_ns.is_finite()) {
            return Err(Error::invalid("delay must be >= 0"));
        }
        Ok(())
    }

    /// Derives the trigger delay from a power-preserving attenuation of the
    /// first `k_ns` of `lo_pulse` by `alpha`.
    pub fn from_pulse_shaping(
        mu: f64,
        nu: f64,
        alpha: f64,
        k_ns: f64,
        lo_pulse: &Waveform,
        trig: &TriggerConfig,
        pm: &PowerMeterConfig,
    ) -> Result<Self> {
        let before = pulse::trigger_time(lo_pulse, trig)
            .ok_or_else(|| Error::Infeasible("nominal LO pulse never triggers".into()))?;
        let shaped = pulse::attenuate_leading_edge(lo_pulse, alpha, k_ns, true, pm)?;
        let after = pulse::trigger_time(&shaped, trig)
            .ok_or_else(|| Error::Infeasible("shaped LO pulse never triggers".into()))?;
        let atk = AttackParams {
            mu,
            nu,
            alpha,
            delay_ns: (after - before).max(0.0),
        };
        atk.validate()?;
        Ok(atk)
    }
}

/// One exchanged pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseRecord {
    pub x: f64,
    pub y: f64,
    pub intercepted: bool,
    pub lo_attacked: bool,
}

/// Closed-switch pulses used for real-time shot-noise monitoring.
#[derive(Debug, Clone, Copy)]
pub struct Monitoring<'a> {
    /// `true` marks a pulse whose signal path is blocked.
    pub mask: &'a [bool],
    /// Residual signal-variance transmission of the closed switch.
    pub extinction: f64,
}

/// Population moments of the LO-gain mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoMixture {
    /// Gain on reshaped pulses.
    pub gain: f64,
    /// E[g]
    pub mean_gain: f64,
    /// E[√g]
    pub mean_amplitude: f64,
}

impl LoMixture {
    pub fn new(atk: &AttackParams, det: &DetectorModel) -> Result<Self> {
        let gain = det.gain_for_delay(atk.delay_ns)?;
        Ok(LoMixture {
            gain,
            mean_gain: atk.nu * gain + (1.0 - atk.nu),
            mean_amplitude: atk.nu * gain.sqrt() + (1.0 - atk.nu),
        })
    }

    /// True shot noise during the run, averaged over pulses.
    pub fn run_shot_noise(&self, ch: &ChannelParams) -> f64 {
        self.mean_gain * ch.n0
    }

    /// Population Cov(x, y) with `x` in Alice's units.
    pub fn covariance(&self, ch: &ChannelParams) -> f64 {
        self.mean_amplitude * ch.eta_t().sqrt() * ch.va
    }

    /// Population Var(y).
    pub fn variance_y(&self, ch: &ChannelParams, atk: &AttackParams) -> f64 {
        let eta_t = ch.eta_t();
        self.mean_gain * (eta_t * (ch.va + 2.0 * atk.mu * ch.n0 + ch.xi) + ch.n0) + ch.v_el
    }

    /// Excess noise, in units of the run's shot noise, that an estimator
    /// knowing the true shot noise would find.
    ///
    /// Equals `ξ/N0 + 2μ` when every pulse sees the same gain; a partial LO
    /// attack (0 < ν < 1) adds the spread of `√g` as apparent noise.
    pub fn excess_noise_snu(&self, ch: &ChannelParams, atk: &AttackParams) -> f64 {
        let a2 = self.mean_amplitude.powi(2);
        let spread = ch.va * (self.mean_gain - a2);
        (spread + self.mean_gain * (ch.xi + 2.0 * atk.mu * ch.n0)) / (a2 * ch.n0)
    }
}

/// I.i.d. centred Gaussian quadratures of variance `va`.
pub fn generate_alice(n: usize, va: f64, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("need at least one pulse"));
    }
    if !(va >= 0.0 && va.is_finite()) {
        return Err(Error::invalid("V_A must be >= 0"));
    }
    let seed = rng::derive_seed(seed, "alice");
    let sd = va.sqrt();
    let mut out = vec![0.0; n];
    out.par_chunks_mut(BLOCK_LEN)
        .enumerate()
        .for_each(|(block, chunk)| {
            let mut rng = rng::block_rng(seed, block as u64);
            for v in chunk {
                let z: f64 = rng.sample(StandardNormal);
                *v = sd * z;
            }
        });
    Ok(out)
}

/// Bob's outcomes for Alice's quadratures `x`.
pub fn simulate_bob(
    x: &[f64],
    ch: &ChannelParams,
    atk: &AttackParams,
    det: &DetectorModel,
    seed: u64,
) -> Result<Vec<PulseRecord>> {
    simulate_bob_monitored(x, ch, atk, det, None, seed)
}

/// As [`simulate_bob`], with a switch that blocks the signal path on the
/// pulses flagged in `monitor`.
pub fn simulate_bob_monitored(
    x: &[f64],
    ch: &ChannelParams,
    atk: &AttackParams,
    det: &DetectorModel,
    monitor: Option<Monitoring<'_>>,
    seed: u64,
) -> Result<Vec<PulseRecord>> {
    ch.validate()?;
    atk.validate()?;
    det.validate()?;
    if let Some(m) = &monitor {
        if m.mask.len() != x.len() {
            return Err(Error::invalid(
                "monitor mask length differs from pulse count",
            ));
        }
        if !(0.0..1.0).contains(&m.extinction) {
            return Err(Error::invalid("extinction must be in [0, 1)"));
        }
    }
    let gain_amp = det.gain_for_delay(atk.delay_ns)?.sqrt();
    let t_amp = ch.eta_t().sqrt();
    let w_sd = (2.0 * ch.n0).sqrt();
    let exc_sd = (ch.eta_t() * ch.xi).sqrt();
    let shot_sd = ch.n0.sqrt();
    let el_sd = ch.v_el.sqrt();
    let closed_amp = monitor.map(|m| m.extinction.sqrt()).unwrap_or(1.0);
    let seed = rng::derive_seed(seed, "bob");

    let mut out = vec![
        PulseRecord {
            x: 0.0,
            y: 0.0,
            intercepted: false,
            lo_attacked: false,
        };
        x.len()
    ];
    out.par_chunks_mut(BLOCK_LEN)
        .enumerate()
        .for_each(|(block, chunk)| {
            let mut rng = rng::block_rng(seed, block as u64);
            let base = block * BLOCK_LEN;
            for (j, rec) in chunk.iter_mut().enumerate() {
                let i = base + j;
                let u_int: f64 = rng.random();
                let u_lo: f64 = rng.random();
                let n_w: f64 = rng.sample(StandardNormal);
                let n_exc: f64 = rng.sample(StandardNormal);
                let n_shot: f64 = rng.sample(StandardNormal);
                let n_el: f64 = rng.sample(StandardNormal);

                let intercepted = u_int < atk.mu;
                let lo_attacked = u_lo < atk.nu;
                let w = if intercepted { w_sd * n_w } else { 0.0 };
                let mut signal = t_amp * (x[i] + w) + exc_sd * n_exc;
                if monitor.is_some_and(|m| m.mask[i]) {
                    signal *= closed_amp;
                }
                let amp = if lo_attacked { gain_amp } else { 1.0 };
                *rec = PulseRecord {
                    x: x[i],
                    y: amp * (signal + shot_sd * n_shot) + el_sd * n_el,
                    intercepted,
                    lo_attacked,
                };
            }
        });
    Ok(out)
}

/// Writes `index,x,y,intercepted,lo_attacked` rows.
pub fn write_samples_csv<W: Write>(records: &[PulseRecord], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["index", "x", "y", "intercepted", "lo_attacked"])?;
    for (i, r) in records.iter().enumerate() {
        wtr.write_record([
            i.to_string(),
            r.x.to_string(),
            r.y.to_string(),
            u8::from(r.intercepted).to_string(),
            u8::from(r.lo_attacked).to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
