//! `key=value` configuration files.
//!
//! One assignment per line, `#` starts a comment, blank lines are ignored.
//! Unknown and duplicate keys are rejected, and every value is range-checked
//! at parse time. Errors carry the offending line number; a missing required
//! key is reported at the line just past the end of the input.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use sha2::{Digest, Sha256};

use crate::countermeasure::SwitchModel;
use crate::error::{Error, Result};
use crate::keyrate::{LinkModel, SweepBase};
use crate::protocol::{AttackParams, ChannelParams};
use crate::pulse::{calibrated_discharge_ns, DetectorModel};

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

/// Parsed assignments, consumed key by key.
struct Fields {
    entries: BTreeMap<String, Entry>,
    end_line: usize,
}

type Check = fn(f64) -> bool;

impl Fields {
    fn parse(text: &str, known: &[&str]) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut end_line = 1;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            end_line = line + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(Error::Config {
                    line,
                    message: format!("expected `key=value`, got `{content}`"),
                });
            };
            let key = key.trim();
            if !known.contains(&key) {
                return Err(Error::Config {
                    line,
                    message: format!("unknown key `{key}`"),
                });
            }
            let entry = Entry {
                value: value.trim().to_string(),
                line,
            };
            if let Some(prev) = entries.insert(key.to_string(), entry) {
                return Err(Error::Config {
                    line,
                    message: format!("duplicate key `{key}` (first set on line {})", prev.line),
                });
            }
        }
        Ok(Fields { entries, end_line })
    }

    fn line_of(&self, key: &str) -> usize {
        self.entries.get(key).map_or(self.end_line, |e| e.line)
    }

    fn raw(&self, key: &str) -> Option<&Entry> {
        self.entries.get(key)
    }

    fn missing(&self, key: &str) -> Error {
        Error::Config {
            line: self.end_line,
            message: format!("missing required key `{key}`"),
        }
    }

    fn f64_or(&self, key: &str, default: Option<f64>, check: Check, range: &str) -> Result<f64> {
        let (value, line) = match self.raw(key) {
            Some(e) => {
                let v = e.value.parse::<f64>().map_err(|_| Error::Config {
                    line: e.line,
                    message: format!("`{key}`: cannot parse `{}` as a number", e.value),
                })?;
                (v, e.line)
            }
            None => match default {
                Some(d) => return Ok(d),
                None => return Err(self.missing(key)),
            },
        };
        if !value.is_finite() || !check(value) {
            return Err(Error::Config {
                line,
                message: format!("`{key}` must be {range}, got {value}"),
            });
        }
        Ok(value)
    }

    fn u64_or(&self, key: &str, default: u64, min: u64) -> Result<u64> {
        let Some(e) = self.raw(key) else {
            return Ok(default);
        };
        let v = e.value.parse::<u64>().map_err(|_| Error::Config {
            line: e.line,
            message: format!("`{key}`: cannot parse `{}` as an unsigned integer", e.value),
        })?;
        if v < min {
            return Err(Error::Config {
                line: e.line,
                message: format!("`{key}` must be >= {min}, got {v}"),
            });
        }
        Ok(v)
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        let Some(e) = self.raw(key) else {
            return Ok(default);
        };
        match e.value.as_str() {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            other => Err(Error::Config {
                line: e.line,
                message: format!("`{key}`: expected true or false, got `{other}`"),
            }),
        }
    }
}

fn nonneg(v: f64) -> bool {
    v >= 0.0
}
fn positive(v: f64) -> bool {
    v > 0.0
}
fn unit(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}
fn open_unit(v: f64) -> bool {
    v > 0.0 && v < 1.0
}
fn half_open_unit(v: f64) -> bool {
    v > 0.0 && v <= 1.0
}
fn unit_excl_one(v: f64) -> bool {
    (0.0..1.0).contains(&v)
}

/// Switch-based real-time shot-noise monitoring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountermeasureConfig {
    pub fraction: f64,
    pub switch: SwitchModel,
    pub z_threshold: f64,
}

/// Simulated lab calibration of the variance/LO-power line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationConfig {
    pub points: usize,
    pub samples_per_point: u64,
    pub power_min: f64,
    pub power_max: f64,
    /// LO power measured at Bob's input during the run.
    pub lo_power: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub channel: ChannelParams,
    pub attack: AttackParams,
    pub detector: DetectorModel,
    pub calibration: CalibrationConfig,
    pub countermeasure: Option<CountermeasureConfig>,
    /// Total pulses N.
    pub pulses: usize,
    /// n/N, the share of usable pulses kept for the key.
    pub key_fraction: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
}

const SCENARIO_KEYS: &[&str] = &[
    "va",
    "transmittance",
    "eta",
    "xi",
    "v_el",
    "mu",
    "nu",
    "alpha",
    "delay_ns",
    "integration_ns",
    "discharge_ns",
    "slope_cal",
    "lo_power",
    "cal_points",
    "cal_samples",
    "cal_power_min",
    "cal_power_max",
    "countermeasure",
    "cm_fraction",
    "cm_loss_db",
    "cm_extinction",
    "cm_z",
    "pulses",
    "key_fraction",
    "beta",
    "epsilon",
    "seed",
    "out_dir",
];

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let f = Fields::parse(text, SCENARIO_KEYS)?;

        let v_el = f.f64_or("v_el", Some(0.01), nonneg, ">= 0")?;
        let detector = DetectorModel {
            integration_ns: f.f64_or("integration_ns", Some(100.0), positive, "> 0")?,
            discharge_ns: f.f64_or(
                "discharge_ns",
                Some(calibrated_discharge_ns(10.0, 1.5)),
                positive,
                "> 0",
            )?,
            slope_cal: f.f64_or("slope_cal", Some(1.0), positive, "> 0")?,
            v_el,
        };

        let power_min = f.f64_or("cal_power_min", Some(0.1), nonneg, ">= 0")?;
        let power_max = f.f64_or("cal_power_max", Some(2.0), positive, "> 0")?;
        if power_max <= power_min {
            return Err(Error::Config {
                line: f.line_of("cal_power_max"),
                message: format!(
                    "`cal_power_max` must exceed `cal_power_min` ({power_max} <= {power_min})"
                ),
            });
        }
        let calibration = CalibrationConfig {
            points: f.u64_or("cal_points", 1000, 2)? as usize,
            samples_per_point: f.u64_or("cal_samples", 10_000, 2)?,
            power_min,
            power_max,
            lo_power: f.f64_or("lo_power", Some(1.0), positive, "> 0")?,
        };

        let channel = ChannelParams {
            va: f.f64_or("va", None, nonneg, ">= 0")?,
            transmittance: f.f64_or("transmittance", None, unit, "in [0, 1]")?,
            eta: f.f64_or("eta", None, half_open_unit, "in (0, 1]")?,
            xi: f.f64_or("xi", None, nonneg, ">= 0")?,
            v_el,
            n0: detector.slope_cal * calibration.lo_power,
        };

        let attack = AttackParams {
            mu: f.f64_or("mu", Some(0.0), unit, "in [0, 1]")?,
            nu: f.f64_or("nu", Some(0.0), unit, "in [0, 1]")?,
            alpha: f.f64_or("alpha", Some(1.0), unit, "in [0, 1]")?,
            delay_ns: f.f64_or("delay_ns", Some(0.0), nonneg, ">= 0")?,
        };

        let cm_fraction = f.f64_or("cm_fraction", Some(0.1), open_unit, "in (0, 1)")?;
        let cm_loss = f.f64_or("cm_loss_db", Some(2.7), nonneg, ">= 0")?;
        let cm_ext = f.f64_or("cm_extinction", Some(0.0), unit_excl_one, "in [0, 1)")?;
        let cm_z = f.f64_or("cm_z", Some(5.0), positive, "> 0")?;
        let countermeasure = if f.bool_or("countermeasure", false)? {
            Some(CountermeasureConfig {
                fraction: cm_fraction,
                switch: SwitchModel::new(cm_loss, cm_ext)?,
                z_threshold: cm_z,
            })
        } else {
            None
        };

        let cfg = ScenarioConfig {
            channel,
            attack,
            detector,
            calibration,
            countermeasure,
            pulses: f.u64_or("pulses", 2_000_000, 8)? as usize,
            key_fraction: f.f64_or("key_fraction", Some(0.5), open_unit, "in (0, 1)")?,
            beta: f.f64_or("beta", Some(0.948), half_open_unit, "in (0, 1]")?,
            epsilon: f.f64_or("epsilon", Some(1e-10), open_unit, "in (0, 1)")?,
            seed: f.u64_or("seed", 1, 0)?,
            out_dir: f.raw("out_dir").map(|e| PathBuf::from(&e.value)),
        };
        Ok(cfg)
    }

    /// Text that [`ScenarioConfig::parse`] maps back to `self`.
    pub fn to_config_text(&self) -> String {
        let mut s = String::new();
        let c = &self.channel;
        let a = &self.attack;
        let d = &self.detector;
        let cal = &self.calibration;
        let _ = writeln!(s, "# channel");
        let _ = writeln!(s, "va={}", c.va);
        let _ = writeln!(s, "transmittance={}", c.transmittance);
        let _ = writeln!(s, "eta={}", c.eta);
        let _ = writeln!(s, "xi={}", c.xi);
        let _ = writeln!(s, "v_el={}", c.v_el);
        let _ = writeln!(s, "# attack");
        let _ = writeln!(s, "mu={}", a.mu);
        let _ = writeln!(s, "nu={}", a.nu);
        let _ = writeln!(s, "alpha={}", a.alpha);
        let _ = writeln!(s, "delay_ns={}", a.delay_ns);
        let _ = writeln!(s, "# detector and calibration");
        let _ = writeln!(s, "integration_ns={}", d.integration_ns);
        let _ = writeln!(s, "discharge_ns={}", d.discharge_ns);
        let _ = writeln!(s, "slope_cal={}", d.slope_cal);
        let _ = writeln!(s, "lo_power={}", cal.lo_power);
        let _ = writeln!(s, "cal_points={}", cal.points);
        let _ = writeln!(s, "cal_samples={}", cal.samples_per_point);
        let _ = writeln!(s, "cal_power_min={}", cal.power_min);
        let _ = writeln!(s, "cal_power_max={}", cal.power_max);
        let _ = writeln!(s, "# countermeasure");
        let _ = writeln!(s, "countermeasure={}", self.countermeasure.is_some());
        if let Some(cm) = &self.countermeasure {
            let _ = writeln!(s, "cm_fraction={}", cm.fraction);
            let _ = writeln!(s, "cm_loss_db={}", cm.switch.loss_db);
            let _ = writeln!(s, "cm_extinction={}", cm.switch.extinction);
            let _ = writeln!(s, "cm_z={}", cm.z_threshold);
        }
        let _ = writeln!(s, "# run");
        let _ = writeln!(s, "pulses={}", self.pulses);
        let _ = writeln!(s, "key_fraction={}", self.key_fraction);
        let _ = writeln!(s, "beta={}", self.beta);
        let _ = writeln!(s, "epsilon={}", self.epsilon);
        let _ = writeln!(s, "seed={}", self.seed);
        if let Some(dir) = &self.out_dir {
            let _ = writeln!(s, "out_dir={}", dir.display());
        }
        s
    }

    /// SHA-256 of the canonical config text, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_config_text().as_bytes()))
    }
}

/// Key-rate sweep settings. Every key is optional; defaults reproduce the
/// reference system (η = 0.6, ξ_Bob = 0.001, v_el = 0.01, β = 0.948,
/// SNR = 0.075, 0.2 dB/km; countermeasure: 2.7 dB switch, 10 % monitoring).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    pub base: SweepBase,
    pub link: LinkModel,
    pub snr: f64,
    pub cm_fraction: f64,
    pub switch: SwitchModel,
    pub d_max_km: f64,
    pub d_step_km: f64,
}

const SWEEP_KEYS: &[&str] = &[
    "eta",
    "xi_bob",
    "v_el",
    "beta",
    "snr",
    "loss_db_per_km",
    "cm_fraction",
    "cm_loss_db",
    "cm_extinction",
    "d_max_km",
    "d_step_km",
];

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            base: SweepBase::REFERENCE,
            link: LinkModel::STANDARD_FIBRE,
            snr: 0.075,
            cm_fraction: 0.1,
            switch: SwitchModel {
                loss_db: 2.7,
                extinction: 0.0,
            },
            d_max_km: 120.0,
            d_step_km: 1.0,
        }
    }
}

impl SweepConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let f = Fields::parse(text, SWEEP_KEYS)?;
        let d = SweepConfig::default();
        Ok(SweepConfig {
            base: SweepBase {
                eta: f.f64_or("eta", Some(d.base.eta), half_open_unit, "in (0, 1]")?,
                xi_bob: f.f64_or("xi_bob", Some(d.base.xi_bob), nonneg, ">= 0")?,
                v_el: f.f64_or("v_el", Some(d.base.v_el), nonneg, ">= 0")?,
                beta: f.f64_or("beta", Some(d.base.beta), half_open_unit, "in (0, 1]")?,
            },
            link: LinkModel {
                loss_db_per_km: f.f64_or(
                    "loss_db_per_km",
                    Some(d.link.loss_db_per_km),
                    positive,
                    "> 0",
                )?,
            },
            snr: f.f64_or("snr", Some(d.snr), positive, "> 0")?,
            cm_fraction: f.f64_or(
                "cm_fraction",
                Some(d.cm_fraction),
                unit_excl_one,
                "in [0, 1)",
            )?,
            switch: SwitchModel::new(
                f.f64_or("cm_loss_db", Some(d.switch.loss_db), nonneg, ">= 0")?,
                f.f64_or("cm_extinction", Some(0.0), unit_excl_one, "in [0, 1)")?,
            )?,
            d_max_km: f.f64_or("d_max_km", Some(d.d_max_km), nonneg, ">= 0")?,
            d_step_km: f.f64_or("d_step_km", Some(d.d_step_km), positive, "> 0")?,
        })
    }
}
