use cvqkd_lo::estimation::{confidence_bounds, ml_estimate, MlEstimates};
use cvqkd_lo::rng::block_rng;
use rand::Rng;
use rand_distr::StandardNormal;

const T: f64 = 0.5;
const SIGMA2: f64 = 1.2;
const VA: f64 = 4.0;

fn trial(m: usize, seed: u64) -> (Vec<f64>, MlEstimates) {
    let mut rng = block_rng(seed, 0);
    let x: Vec<f64> = (0..m)
        .map(|_| VA.sqrt() * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let y: Vec<f64> = x
        .iter()
        .map(|&a| T * a + SIGMA2.sqrt() * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let est = ml_estimate(&x, &y).unwrap();
    (x, est)
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

#[test]
fn residual_variance_is_chi_square() {
    let m = 1000;
    let trials = 500;
    let stats: Vec<f64> = (0..trials)
        .map(|s| m as f64 * trial(m, s).1.sigma2_hat / SIGMA2)
        .collect();
    let (mean, var) = mean_var(&stats);
    let df = (m - 1) as f64;
    // χ²(df) has mean df and variance 2·df
    let se = (2.0 * df / trials as f64).sqrt();
    assert!((mean - df).abs() < 4.0 * se, "mean {mean}");
    assert!((var / (2.0 * df) - 1.0).abs() < 0.25, "var {var}");
}

#[test]
fn slope_spread_matches_fisher_information() {
    let m = 1000;
    let trials = 800;
    let mut t = Vec::new();
    let mut predicted = 0.0;
    for s in 0..trials {
        let (_, est) = trial(m, 10_000 + s);
        predicted += SIGMA2 / est.sum_x2;
        t.push(est.t_hat);
    }
    predicted /= trials as f64;
    let (mean, var) = mean_var(&t);
    assert!((mean - T).abs() < 4.0 * (predicted / trials as f64).sqrt());
    assert!((var / predicted - 1.0).abs() < 0.15, "{var} vs {predicted}");
}

#[test]
fn interval_widths_shrink_as_inverse_root_m() {
    let width = |m: usize| {
        let (_, est) = trial(m, 77);
        let ci = confidence_bounds(&est, 1e-10).unwrap();
        (ci.t.width(), ci.sigma2.width())
    };
    let (t1, s1) = width(10_000);
    let (t4, s4) = width(40_000);
    assert!((t1 / t4 - 2.0).abs() < 0.1, "{}", t1 / t4);
    assert!((s1 / s4 - 2.0).abs() < 0.1, "{}", s1 / s4);
}

#[test]
fn coverage_at_loose_confidence() {
    let m = 2000;
    let trials = 1000;
    let eps = 0.1;
    let mut hits = [0usize; 3];
    for s in 0..trials {
        let (_, est) = trial(m, 50_000 + s);
        let ci = confidence_bounds(&est, eps).unwrap();
        hits[0] += ci.t.contains(T) as usize;
        hits[1] += ci.sigma2.contains(SIGMA2) as usize;
        hits[2] += ci.va.contains(VA) as usize;
    }
    let p = 1.0 - eps;
    let sd = (p * (1.0 - p) / trials as f64).sqrt();
    for h in hits {
        let rate = h as f64 / trials as f64;
        assert!((rate - p).abs() < 3.0 * sd, "coverage {rate}");
    }
}

#[test]
fn slope_and_residual_variance_are_uncorrelated() {
    let m = 500;
    let trials = 2000;
    let (t, s): (Vec<f64>, Vec<f64>) = (0..trials)
        .map(|k| {
            let (_, e) = trial(m, 90_000 + k);
            (e.t_hat, e.sigma2_hat)
        })
        .unzip();
    let (mt, vt) = mean_var(&t);
    let (ms, vs) = mean_var(&s);
    let cov = t
        .iter()
        .zip(&s)
        .map(|(a, b)| (a - mt) * (b - ms))
        .sum::<f64>()
        / (trials as f64 - 1.0);
    let corr = cov / (vt * vs).sqrt();
    assert!(corr.abs() < 4.0 / (trials as f64).sqrt(), "corr {corr}");
}
