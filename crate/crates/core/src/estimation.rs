//! Maximum-likelihood parameter estimation for the normal linear model
//! `y = t·x + z`, `z ~ N(0, σ²)`, and the excess-noise bias introduced by a
//! wrong shot-noise reference.
//!
//! Sums are taken sequentially in sample order so results are reproducible
//! bit for bit.

use std::fmt::Write as _;

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Above this many samples χ² quantiles use the Wilson–Hilferty normal
/// approximation instead of the exact inverse CDF.
pub const EXACT_QUANTILE_MAX_M: usize = 10_000;

/// Non-fatal findings about the input data.
#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    /// Sample mean more than 5 standard errors from zero; the estimators
    /// assume centred variables and do not remove it.
    NotCentred {
        variable: &'static str,
        mean: f64,
        stderr: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlEstimates {
    pub t_hat: f64,
    pub sigma2_hat: f64,
    pub va_hat: f64,
    pub m: usize,
    /// Σ xᵢ², needed for the spread of `t_hat`.
    pub sum_x2: f64,
    pub diagnostics: Vec<Diagnostic>,
}

fn centring_check(variable: &'static str, v: &[f64], out: &mut Vec<Diagnostic>) {
    let m = v.len() as f64;
    let mean = v.iter().sum::<f64>() / m;
    let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / m;
    let stderr = (var / m).sqrt();
    if mean.abs() > 5.0 * stderr {
        out.push(Diagnostic::NotCentred {
            variable,
            mean,
            stderr,
        });
    }
}

/// `t̂ = Σxy/Σx²`, `σ̂² = (1/m)Σ(y − t̂x)²`, `V̂_A = (1/m)Σx²`.
pub fn ml_estimate(x: &[f64], y: &[f64]) -> Result<MlEstimates> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "x and y lengths differ ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::invalid("need at least 2 samples"));
    }
    let m = x.len();
    let sum_x2: f64 = x.iter().map(|a| a * a).sum();
    if !(sum_x2 > 0.0) {
        return Err(Error::Degenerate("Σx² = 0, t̂ is undefined".into()));
    }
    let sum_xy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let t_hat = sum_xy / sum_x2;
    let sigma2_hat = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - t_hat * a).powi(2))
        .sum::<f64>()
        / m as f64;

    let mut diagnostics = Vec::new();
    centring_check("x", x, &mut diagnostics);
    centring_check("y", y, &mut diagnostics);

    Ok(MlEstimates {
        t_hat,
        sigma2_hat,
        va_hat: sum_x2 / m as f64,
        m,
        sum_x2,
        diagnostics,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.low <= v && v <= self.high
    }

    pub fn width(&self) -> f64 {
        self.high - self.low
    }

    /// Smallest interval holding both `self` and `point`.
    fn including(self, point: f64) -> Self {
        Interval {
            low: self.low.min(point),
            high: self.high.max(point),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceIntervals {
    pub epsilon: f64,
    pub t: Interval,
    pub sigma2: Interval,
    pub va: Interval,
}

fn standard_normal() -> Normal {
    Normal::standard()
}

fn chi2_quantile(df: usize, p: f64) -> f64 {
    if df <= EXACT_QUANTILE_MAX_M {
        ChiSquared::new(df as f64).expect("df >= 1").inverse_cdf(p)
    } else {
        let k = df as f64;
        let z = standard_normal().inverse_cdf(p);
        let c = 2.0 / (9.0 * k);
        k * (1.0 - c + z * c.sqrt()).powi(3)
    }
}

/// Two-sided intervals at confidence `1 − ε`.
///
/// `t` uses `t̂ ~ N(t, σ²/Σx²)` with σ² replaced by its estimate; σ² and V_A
/// use `m·σ̂²/σ² ~ χ²(m−1)` (and likewise for V̂_A).
pub fn confidence_bounds(est: &MlEstimates, epsilon: f64) -> Result<ConfidenceIntervals> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid(format!(
            "epsilon must be in (0, 1), got {epsilon}"
        )));
    }
    let z = standard_normal().inverse_cdf(1.0 - epsilon / 2.0);
    let half = z * (est.sigma2_hat / est.sum_x2).sqrt();
    let t = Interval {
        low: est.t_hat - half,
        high: est.t_hat + half,
    };

    let df = est.m - 1;
    let q_lo = chi2_quantile(df, epsilon / 2.0);
    let q_hi = chi2_quantile(df, 1.0 - epsilon / 2.0);
    let m = est.m as f64;
    let scaled = |point: f64| {
        Interval {
            low: m * point / q_hi,
            high: m * point / q_lo,
        }
        .including(point)
    };
    Ok(ConfidenceIntervals {
        epsilon,
        t,
        sigma2: scaled(est.sigma2_hat),
        va: scaled(est.va_hat),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelEstimate {
    pub transmittance: f64,
    /// Excess noise in absolute variance units (divide by N0' for SNU).
    pub xi: f64,
}

/// `T̂ = t̂²/η`, `ξ̂ = (σ̂² − N0' − v_el)/t̂²`.
pub fn infer_channel(
    est: &MlEstimates,
    n0_assumed: f64,
    eta: f64,
    v_el: f64,
) -> Result<ChannelEstimate> {
    if !(eta > 0.0) {
        return Err(Error::invalid("eta must be > 0"));
    }
    let t2 = est.t_hat * est.t_hat;
    if t2 == 0.0 {
        return Err(Error::Degenerate("t̂ = 0, excess noise is undefined".into()));
    }
    Ok(ChannelEstimate {
        transmittance: t2 / eta,
        xi: (est.sigma2_hat - n0_assumed - v_el) / t2,
    })
}

/// Excess noise (in units of the assumed shot noise N0') reported when the
/// true shot noise is N0 but N0' is used.
///
/// `xi_snu` is the excess noise in units of the true N0, `n0_ratio = N0'/N0`,
/// `t2 = t̂²`:
///
/// ```text
/// ξ̂_calib/N0' = (N0/N0')·[ξ̂/N0 + (1/t̂²)·(1 − N0'/N0)]
/// ```
pub fn xi_under_calibration(xi_snu: f64, n0_ratio: f64, t2: f64) -> f64 {
    debug_assert!(n0_ratio > 0.0 && t2 > 0.0);
    (xi_snu + (1.0 - n0_ratio) / t2) / n0_ratio
}

/// Excess noise after a partial intercept-resend attack on a fraction `mu`
/// of the pulses, in SNU.
pub fn xi_pir(xi_snu: f64, mu: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&mu));
    xi_snu + 2.0 * mu
}

/// Standard error of `ξ̂ = (σ̂² − c)/t̂²` from the samples, with the spread
/// of σ̂² taken from the empirical fourth moment of the residuals and that of
/// t̂ from a heteroskedasticity-robust sandwich. `c = N0' + v_el`.
pub fn xi_standard_error(x: &[f64], y: &[f64], est: &MlEstimates, c: f64) -> f64 {
    let m = est.m as f64;
    let mut m4 = 0.0;
    let mut meat = 0.0;
    for (a, b) in x.iter().zip(y) {
        let r2 = (b - est.t_hat * a).powi(2);
        m4 += r2 * r2;
        meat += a * a * r2;
    }
    m4 /= m;
    let var_sigma2 = (m4 - est.sigma2_hat.powi(2)).max(0.0) / m;
    let var_t = meat / (est.sum_x2 * est.sum_x2);
    let t2 = est.t_hat * est.t_hat;
    let d_t = 2.0 * (est.sigma2_hat - c) / (t2 * est.t_hat);
    (var_sigma2 / (t2 * t2) + d_t * d_t * var_t).sqrt()
}

/// Estimates, derived channel parameters and their intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationReport {
    pub estimates: MlEstimates,
    pub transmittance: f64,
    /// Absolute excess noise.
    pub xi: f64,
    /// Shot-noise reference used (N0').
    pub n0_assumed: f64,
    pub intervals: ConfidenceIntervals,
    pub transmittance_interval: Interval,
    pub xi_interval: Interval,
}

impl EstimationReport {
    pub fn build(
        est: MlEstimates,
        n0_assumed: f64,
        eta: f64,
        v_el: f64,
        epsilon: f64,
    ) -> Result<Self> {
        let ch = infer_channel(&est, n0_assumed, eta, v_el)?;
        let intervals = confidence_bounds(&est, epsilon)?;

        // worst cases over the (t, σ²) box
        let t2_low = if intervals.t.contains(0.0) {
            0.0
        } else {
            intervals.t.low.abs().min(intervals.t.high.abs()).powi(2)
        };
        let t2_high = intervals.t.low.abs().max(intervals.t.high.abs()).powi(2);
        let transmittance_interval = Interval {
            low: t2_low / eta,
            high: t2_high / eta,
        }
        .including(ch.transmittance);

        let c = n0_assumed + v_el;
        let corners = [intervals.sigma2.low, intervals.sigma2.high]
            .iter()
            .flat_map(|s| [t2_low, t2_high].map(|t2| (s - c) / t2))
            .collect::<Vec<_>>();
        let xi_interval = Interval {
            low: corners.iter().cloned().fold(f64::INFINITY, f64::min),
            high: corners.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }
        .including(ch.xi);

        Ok(EstimationReport {
            estimates: est,
            transmittance: ch.transmittance,
            xi: ch.xi,
            n0_assumed,
            intervals,
            transmittance_interval,
            xi_interval,
        })
    }

    /// Excess noise in units of the assumed shot noise.
    pub fn xi_snu(&self) -> f64 {
        self.xi / self.n0_assumed
    }

    fn fields(&self) -> Vec<(&'static str, String)> {
        let e = &self.estimates;
        let iv = &self.intervals;
        vec![
            ("m", e.m.to_string()),
            ("t_hat", e.t_hat.to_string()),
            ("sigma2_hat", e.sigma2_hat.to_string()),
            ("va_hat", e.va_hat.to_string()),
            ("transmittance_hat", self.transmittance.to_string()),
            ("xi_hat", self.xi.to_string()),
            ("xi_hat_snu", self.xi_snu().to_string()),
            ("n0_assumed", self.n0_assumed.to_string()),
            ("epsilon", iv.epsilon.to_string()),
            ("t_low", iv.t.low.to_string()),
            ("t_high", iv.t.high.to_string()),
            ("sigma2_low", iv.sigma2.low.to_string()),
            ("sigma2_high", iv.sigma2.high.to_string()),
            ("va_low", iv.va.low.to_string()),
            ("va_high", iv.va.high.to_string()),
            (
                "transmittance_low",
                self.transmittance_interval.low.to_string(),
            ),
            (
                "transmittance_high",
                self.transmittance_interval.high.to_string(),
            ),
            ("xi_low", self.xi_interval.low.to_string()),
            ("xi_high", self.xi_interval.high.to_string()),
            ("diagnostics", e.diagnostics.len().to_string()),
        ]
    }

    /// `key=value` lines.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.fields() {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn csv_header(&self) -> String {
        self.fields()
            .iter()
            .map(|(k, _)| *k)
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn csv_row(&self) -> String {
        self.fields()
            .into_iter()
            .map(|(_, v)| v)
            .collect::<Vec<_>>()
            .join(",")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exact_linear_data() {
        let x = vec![1.0, -2.0, 0.5, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let est = ml_estimate(&x, &y).unwrap();
        assert_relative_eq!(est.t_hat, 2.0, max_relative = 1e-15);
        assert!(est.sigma2_hat.abs() < 1e-28);
        assert_relative_eq!(est.va_hat, (1.0 + 4.0 + 0.25 + 9.0) / 4.0);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            ml_estimate(&[0.0, 0.0], &[1.0, 2.0]),
            Err(Error::Degenerate(_))
        ));
        assert!(ml_estimate(&[1.0], &[1.0]).is_err());
        assert!(ml_estimate(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn offset_data_flags_centring() {
        let x: Vec<f64> = (0..1000).map(|i| 5.0 + (i % 7) as f64).collect();
        let y = x.clone();
        let est = ml_estimate(&x, &y).unwrap();
        assert!(!est.diagnostics.is_empty());
    }

    #[test]
    fn zero_residual_gives_zero_width_t_interval() {
        let x = vec![1.0, -1.0, 2.0];
        let y: Vec<f64> = x.iter().map(|v| 0.5 * v).collect();
        let ci = confidence_bounds(&ml_estimate(&x, &y).unwrap(), 0.05).unwrap();
        assert_eq!(ci.t.width(), 0.0);
    }

    #[test]
    fn epsilon_domain() {
        let est = ml_estimate(&[1.0, 2.0, 3.0], &[1.0, 2.5, 2.9]).unwrap();
        assert!(confidence_bounds(&est, 0.0).is_err());
        assert!(confidence_bounds(&est, 1.0).is_err());
    }

    #[test]
    fn quantile_regimes_agree_at_threshold() {
        let exact = chi2_quantile(EXACT_QUANTILE_MAX_M, 0.001);
        let approx = chi2_quantile(EXACT_QUANTILE_MAX_M + 1, 0.001);
        assert!((exact - approx).abs() / exact < 1e-3);
    }

    #[test]
    fn channel_inference_arithmetic() {
        let est = MlEstimates {
            t_hat: 0.5,
            sigma2_hat: 1.01,
            va_hat: 1.0,
            m: 10,
            sum_x2: 10.0,
            diagnostics: vec![],
        };
        let ch = infer_channel(&est, 1.0, 0.5, 0.01).unwrap();
        assert_relative_eq!(ch.transmittance, 0.5);
        assert!(ch.xi.abs() < 1e-12);
        let zero = MlEstimates { t_hat: 0.0, ..est };
        assert!(infer_channel(&zero, 1.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn calibration_bias_examples() {
        assert_eq!(xi_under_calibration(0.37, 1.0, 0.25), 0.37);
        assert_relative_eq!(
            xi_under_calibration(2.1, 1.5, 0.25),
            (2.1 - 2.0) / 1.5,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            xi_under_calibration(0.1, 1.5, 0.25),
            -1.9 / 1.5,
            max_relative = 1e-12
        );
    }

    #[test]
    fn pir_examples() {
        assert_eq!(xi_pir(0.3, 0.0), 0.3);
        assert_relative_eq!(xi_pir(0.1, 1.0), 2.1);
        assert_eq!(xi_pir(0.0, 0.5), 1.0);
    }

    #[test]
    fn report_intervals_hold_point() {
        let x: Vec<f64> = (0..200).map(|i| ((i * 37) % 19) as f64 - 9.0).collect();
        let y: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, v)| 0.4 * v + (((i * 11) % 7) as f64 - 3.0) * 0.3)
            .collect();
        for eps in [1e-10, 0.05, 0.9, 0.999] {
            let est = ml_estimate(&x, &y).unwrap();
            let r = EstimationReport::build(est, 0.5, 0.5, 0.01, eps).unwrap();
            assert!(r.intervals.t.contains(r.estimates.t_hat));
            assert!(r.intervals.sigma2.contains(r.estimates.sigma2_hat));
            assert!(r.intervals.va.contains(r.estimates.va_hat));
            assert!(r.transmittance_interval.contains(r.transmittance));
            assert!(r.xi_interval.contains(r.xi));
        }
    }

    #[test]
    fn report_serialisation_shapes() {
        let est = ml_estimate(&[1.0, -1.0, 2.0], &[0.6, -0.4, 1.1]).unwrap();
        let r = EstimationReport::build(est, 1.0, 0.5, 0.0, 0.05).unwrap();
        let kv = r.to_key_value();
        assert!(kv.lines().all(|l| l.contains('=')));
        assert!(kv.contains("xi_hat_snu="));
        assert_eq!(
            r.csv_header().split(',').count(),
            r.csv_row().split(',').count()
        );
    }
}
