use std::fmt::Write;

use crate::estimation::EstimationReport;

/// Outcome of a scenario run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// Estimated and true key rates are both positive.
    Secure,
    /// Alice and Bob stop: the monitor fired or the estimated rate is not positive.
    Abort,
    /// Alice and Bob accept a key whose true rate is not positive.
    Breached,
}

impl Verdict {
    pub fn decide(alarm: bool, k_estimated: f64, k_true: f64) -> Self {
        if alarm || !(k_estimated > 0.0) {
            Verdict::Abort
        } else if !(k_true > 0.0) {
            Verdict::Breached
        } else {
            Verdict::Secure
        }
    }

    /// Process exit code: 0 secure, 2 abort, 3 breached.
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Secure => 0,
            Verdict::Abort => 2,
            Verdict::Breached => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Secure => "secure",
            Verdict::Abort => "abort",
            Verdict::Breached => "breached",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Real-time shot-noise measurement and alarm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShotNoiseSection {
    pub n0_rt: f64,
    pub n0_line: f64,
    pub alarm: bool,
    pub statistic: f64,
    pub m_monitor: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioReport {
    pub estimation: EstimationReport,
    /// Shot noise predicted by the lab calibration line.
    pub n0_line: f64,
    /// True shot noise during the run.
    pub n0_run: f64,
    pub shot_noise: Option<ShotNoiseSection>,
    /// True excess noise including Eve's intercept-resend noise, SNU.
    pub xi_true_snu: f64,
    /// Standard error of the excess-noise estimate, SNU.
    pub xi_stderr_snu: f64,
    pub k_estimated: f64,
    pub k_true: f64,
    pub verdict: Verdict,
    pub seed: u64,
    pub config_hash: String,
}

impl ScenarioReport {
    fn fields(&self) -> Vec<(&'static str, String)> {
        let mut f = vec![
            ("seed", self.seed.to_string()),
            ("config_sha256", self.config_hash.clone()),
            ("verdict", self.verdict.to_string()),
            ("k_estimated", self.k_estimated.to_string()),
            ("k_true", self.k_true.to_string()),
            ("xi_true_snu", self.xi_true_snu.to_string()),
            ("xi_stderr_snu", self.xi_stderr_snu.to_string()),
            ("n0_line", self.n0_line.to_string()),
            ("n0_run", self.n0_run.to_string()),
        ];
        let sn = self.shot_noise.as_ref();
        let opt = |v: Option<String>| v.unwrap_or_default();
        f.extend([
            ("n0_rt", opt(sn.map(|s| s.n0_rt.to_string()))),
            ("monitor_pulses", opt(sn.map(|s| s.m_monitor.to_string()))),
            (
                "monitor_statistic",
                opt(sn.map(|s| s.statistic.to_string())),
            ),
            ("alarm", sn.is_some_and(|s| s.alarm).to_string()),
        ]);
        f
    }

    /// `key=value` lines: run summary followed by the estimation block.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.fields() {
            let _ = writeln!(out, "{k}={v}");
        }
        out.push_str(&self.estimation.to_key_value());
        out
    }

    pub fn csv_header(&self) -> String {
        let own: Vec<&str> = self.fields().iter().map(|(k, _)| *k).collect();
        format!("{},{}", own.join(","), self.estimation.csv_header())
    }

    pub fn csv_row(&self) -> String {
        let own: Vec<String> = self.fields().into_iter().map(|(_, v)| v).collect();
        format!("{},{}", own.join(","), self.estimation.csv_row())
    }
}
