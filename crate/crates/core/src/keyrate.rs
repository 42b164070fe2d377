//! Asymptotic secret key rate against collective attacks, reverse
//! reconciliation, homodyne detection, trusted-detector ("realistic") model.
//!
//! All noises are in shot-noise units. With `V = V_A + 1`:
//!
//! ```text
//! χ_line = 1/T − 1 + ξ
//! χ_hom  = (1 + v_el)/η − 1
//! χ_tot  = χ_line + χ_hom/T
//! I_AB   = ½·log2((V + χ_tot)/(1 + χ_tot))
//! ```
//!
//! Eve's information χ_BE is the Holevo bound computed from the symplectic
//! eigenvalues λ₁,λ₂ of Alice–Bob's state and λ₃,λ₄ of Alice's state
//! conditioned on Bob's measurement. The key rate is `K = β·I_AB − χ_BE`.

use crate::countermeasure::{effective_eta, SwitchModel};
use crate::error::{Error, Result};

/// Discriminants down to this (scaled) value are clamped to 0.
const DISCRIMINANT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRateParams {
    pub va: f64,
    pub transmittance: f64,
    pub eta: f64,
    pub xi: f64,
    pub v_el: f64,
    /// Reconciliation efficiency β.
    pub beta: f64,
}

impl KeyRateParams {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.va >= 0.0 && self.va.is_finite(), "V_A must be >= 0"),
            (
                (0.0..=1.0).contains(&self.transmittance),
                "T must be in [0, 1]",
            ),
            (self.eta > 0.0 && self.eta <= 1.0, "eta must be in (0, 1]"),
            (self.xi.is_finite(), "xi must be finite"),
            (
                self.v_el >= 0.0 && self.v_el.is_finite(),
                "v_el must be >= 0",
            ),
            (
                self.beta >= 0.0 && self.beta <= 1.0,
                "beta must be in [0, 1]",
            ),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::invalid(*msg)),
            None => Ok(()),
        }
    }

    fn chi_line(&self) -> f64 {
        1.0 / self.transmittance - 1.0 + self.xi
    }

    fn chi_hom(&self) -> f64 {
        (1.0 + self.v_el) / self.eta - 1.0
    }

    fn chi_tot(&self) -> f64 {
        self.chi_line() + self.chi_hom() / self.transmittance
    }
}

/// Fibre link; `T = 10^(−loss·d/10)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkModel {
    pub loss_db_per_km: f64,
}

impl LinkModel {
    pub const STANDARD_FIBRE: LinkModel = LinkModel {
        loss_db_per_km: 0.2,
    };

    pub fn transmittance(&self, distance_km: f64) -> f64 {
        10f64.powf(-self.loss_db_per_km * distance_km / 10.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRateBreakdown {
    pub i_ab: f64,
    pub chi_be: f64,
    pub k: f64,
    pub eigenvalues: [f64; 4],
}

/// Shannon information between Alice and Bob, bits per pulse. Zero at T = 0.
pub fn mutual_information(p: &KeyRateParams) -> Result<f64> {
    p.validate()?;
    if p.transmittance == 0.0 {
        return Ok(0.0);
    }
    let v = p.va + 1.0;
    let chi_tot = p.chi_tot();
    Ok(0.5 * ((v + chi_tot) / (1.0 + chi_tot)).log2())
}

/// Entropy function of a thermal state with mean photon number `x`.
pub fn g(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (x + 1.0) * (x + 1.0).log2() - x * x.log2()
    }
}

/// Roots of `λ⁴ − a·λ² + b = 0`, larger first.
fn symplectic_pair(a: f64, b: f64) -> Result<(f64, f64)> {
    let mut disc = a * a - 4.0 * b;
    if disc < 0.0 {
        if disc < -DISCRIMINANT_TOL * a.abs().max(1.0).powi(2) {
            return Err(Error::NumericalDomain(format!(
                "negative discriminant {disc} (a = {a}, b = {b})"
            )));
        }
        disc = 0.0;
    }
    let root = disc.sqrt();
    let hi = (0.5 * (a + root)).sqrt();
    let lo = (0.5 * (a - root)).max(0.0).sqrt();
    Ok((hi, lo))
}

/// Holevo bound χ_BE and the symplectic eigenvalues λ₁..λ₄.
pub fn holevo_bound(p: &KeyRateParams) -> Result<(f64, [f64; 4])> {
    p.validate()?;
    let t = p.transmittance;
    if !(t > 0.0) {
        return Err(Error::invalid("Holevo bound needs T > 0"));
    }
    let v = p.va + 1.0;
    let chi_line = p.chi_line();
    let chi_hom = p.chi_hom();
    let chi_tot = p.chi_tot();

    let a = v * v * (1.0 - 2.0 * t) + 2.0 * t + t * t * (v + chi_line).powi(2);
    let b = t * t * (v * chi_line + 1.0).powi(2);
    let sqrt_b = b.sqrt();
    let denom = t * (v + chi_tot);
    let c = (a * chi_hom + v * sqrt_b + t * (v + chi_line)) / denom;
    let d = sqrt_b * (v + sqrt_b * chi_hom) / denom;

    let (l1, l2) = symplectic_pair(a, b)?;
    let (l3, l4) = symplectic_pair(c, d)?;
    let h = |l: f64| g((l - 1.0) / 2.0);
    let chi_be = h(l1) + h(l2) - h(l3) - h(l4);
    Ok((chi_be, [l1, l2, l3, l4]))
}

/// `K = β·I_AB − χ_BE`; negative values are returned as-is. At T = 0 the
/// rate is 0.
pub fn secret_key_rate(p: &KeyRateParams) -> Result<KeyRateBreakdown> {
    p.validate()?;
    if p.transmittance == 0.0 {
        return Ok(KeyRateBreakdown {
            i_ab: 0.0,
            chi_be: 0.0,
            k: 0.0,
            eigenvalues: [1.0; 4],
        });
    }
    let i_ab = mutual_information(p)?;
    let (chi_be, eigenvalues) = holevo_bound(p)?;
    Ok(KeyRateBreakdown {
        i_ab,
        chi_be,
        k: p.beta * i_ab - chi_be,
        eigenvalues,
    })
}

/// Modulation variance giving `snr = ηT·V_A/(1 + v_el + ηTξ)`.
pub fn va_for_snr(snr: f64, transmittance: f64, eta: f64, xi: f64, v_el: f64) -> Result<f64> {
    let eta_t = eta * transmittance;
    if !(eta_t > 0.0) {
        return Err(Error::Infeasible(
            "ηT = 0, no modulation reaches the SNR".into(),
        ));
    }
    Ok(snr * (1.0 + v_el + eta_t * xi) / eta_t)
}

/// Detector-side parameters shared by every point of a distance sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepBase {
    pub eta: f64,
    /// Excess noise referred to Bob's input: `ηTξ = xi_bob` at every distance.
    pub xi_bob: f64,
    pub v_el: f64,
    pub beta: f64,
}

impl SweepBase {
    /// The system without countermeasure from the reference key-rate plot.
    pub const REFERENCE: SweepBase = SweepBase {
        eta: 0.6,
        xi_bob: 0.001,
        v_el: 0.01,
        beta: 0.948,
    };
}

/// A key-rate system: base parameters, link, SNR target, and optional
/// switch-based monitoring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSystem {
    pub base: SweepBase,
    pub link: LinkModel,
    pub snr: f64,
    pub monitor_fraction: f64,
    pub switch: Option<SwitchModel>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub distance_km: f64,
    pub transmittance: f64,
    pub va: f64,
    pub breakdown: KeyRateBreakdown,
    /// Key rate after the monitoring discount.
    pub k: f64,
}

impl SweepSystem {
    pub fn reference(snr: f64) -> Self {
        SweepSystem {
            base: SweepBase::REFERENCE,
            link: LinkModel::STANDARD_FIBRE,
            snr,
            monitor_fraction: 0.0,
            switch: None,
        }
    }

    pub fn eta(&self) -> f64 {
        match &self.switch {
            Some(s) => effective_eta(self.base.eta, s.loss_db),
            None => self.base.eta,
        }
    }

    pub fn at(&self, distance_km: f64) -> Result<SweepPoint> {
        let t = self.link.transmittance(distance_km);
        let eta = self.eta();
        let xi = self.base.xi_bob / (eta * t);
        let va = va_for_snr(self.snr, t, eta, xi, self.base.v_el)?;
        let breakdown = secret_key_rate(&KeyRateParams {
            va,
            transmittance: t,
            eta,
            xi,
            v_el: self.base.v_el,
            beta: self.base.beta,
        })?;
        Ok(SweepPoint {
            distance_km,
            transmittance: t,
            va,
            k: breakdown.k * (1.0 - self.monitor_fraction),
            breakdown,
        })
    }
}

/// Upper end of the bisection bracket, km.
pub const MAX_DISTANCE_BRACKET_KM: f64 = 500.0;

/// Bisection resolution, km.
pub const DISTANCE_RESOLUTION_KM: f64 = 0.1;

/// Largest distance with a positive key rate, by bisection on
/// `[0, 500] km` to 0.1 km. Returns the bracket end if the rate is still
/// positive there.
pub fn max_secure_distance(system: &SweepSystem) -> Result<f64> {
    if !(system.snr > 0.0) {
        return Err(Error::invalid("SNR target must be > 0"));
    }
    if !(0.0..=1.0).contains(&system.monitor_fraction) {
        return Err(Error::invalid("monitor fraction must be in [0, 1]"));
    }
    if system.at(0.0)?.k <= 0.0 {
        return Err(Error::NoSecureDistance);
    }
    let (mut lo, mut hi) = (0.0, MAX_DISTANCE_BRACKET_KM);
    if system.at(hi)?.k > 0.0 {
        return Ok(hi);
    }
    while hi - lo > DISTANCE_RESOLUTION_KM {
        let mid = 0.5 * (lo + hi);
        if system.at(mid)?.k > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}
