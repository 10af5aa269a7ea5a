//! Experiment configuration: strict TOML schema with one canonical encoding.

use std::fmt;
use std::path::PathBuf;

use erasure_fcs::fock::DEFAULT_ORACLE_CAP;
use erasure_fcs::model::{validate_protocol, DriveProtocol};
use erasure_fcs::stats::{AlphaAxis, AlphaGrid};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Oracle,
    #[default]
    Quasifree,
    Both,
}

impl Engine {
    pub fn uses_oracle(self) -> bool {
        matches!(self, Engine::Oracle | Engine::Both)
    }

    pub fn uses_quasifree(self) -> bool {
        matches!(self, Engine::Quasifree | Engine::Both)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub engine: Engine,
    pub l: usize,
    pub t: f64,
    /// Integrator steps; the default rule applies when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default = "default_cap")]
    pub oracle_cap: usize,
}

fn default_cap() -> usize {
    DEFAULT_ORACLE_CAP
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaSection {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    #[serde(default = "real_axis")]
    pub axis: AlphaAxis,
}

fn real_axis() -> AlphaAxis {
    AlphaAxis::Real
}

impl Default for AlphaSection {
    fn default() -> Self {
        Self {
            min: 0.0,
            max: 1.0,
            count: 21,
            axis: AlphaAxis::Real,
        }
    }
}

impl AlphaSection {
    pub fn grid(&self) -> AlphaGrid {
        AlphaGrid::linspace(self.min, self.max, self.count, self.axis)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WrongOrderSection {
    pub l: usize,
    pub t: f64,
    pub lambda_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub l: Vec<usize>,
    pub t: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wrong_order: Option<WrongOrderSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Figure3Section {
    pub d: usize,
    /// Curves at `eps = 10^-k`.
    pub exponents: Vec<u32>,
    pub alpha_over_beta_max: f64,
    pub count: usize,
}

impl Default for Figure3Section {
    fn default() -> Self {
        Self {
            d: 2,
            exponents: vec![1, 2, 3, 4, 5],
            alpha_over_beta_max: 1.5,
            count: 151,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleCheckSection {
    pub l: Vec<usize>,
    pub t: Vec<f64>,
    pub tolerance: f64,
}

impl Default for OracleCheckSection {
    fn default() -> Self {
        Self {
            l: vec![2, 3, 4],
            t: vec![1.0, 5.0],
            tolerance: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Also write a JSON mirror of every table.
    #[serde(default)]
    pub json: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub protocol: DriveProtocol,
    pub run: RunSection,
    #[serde(default)]
    pub alpha: AlphaSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub figure3: Figure3Section,
    #[serde(default)]
    pub oracle_check: OracleCheckSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigIssue {
    pub path: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub struct ConfigError {
    pub issues: Vec<ConfigIssue>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .issues
            .iter()
            .map(|i| format!("{}: {}", i.path, i.reason))
            .collect();
        write!(f, "invalid config: {}", parts.join("; "))
    }
}

impl ConfigError {
    fn single(path: &str, reason: impl Into<String>) -> Self {
        Self {
            issues: vec![ConfigIssue {
                path: path.into(),
                reason: reason.into(),
            }],
        }
    }
}

/// Parses and validates; every rejection carries a key path.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let config = ExperimentConfig::from_toml(text)?;
    config.validate()?;
    Ok(config)
}

impl ExperimentConfig {
    /// Schema check only; call [`ExperimentConfig::validate`] afterwards.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::parse(text)
            .map_err(|e| ConfigError::single("<document>", e.message()))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::single(
                if path == "." { "<root>" } else { &path },
                e.into_inner().message(),
            )
        })
    }
}

impl ExperimentConfig {
    /// A small valid configuration.
    pub fn minimal() -> Self {
        Self {
            protocol: DriveProtocol::erasure(1.0, 1.0, 0.5, [0.9, 0.1]),
            run: RunSection {
                engine: Engine::Quasifree,
                l: 64,
                t: 100.0,
                steps: None,
                oracle_cap: DEFAULT_ORACLE_CAP,
            },
            alpha: AlphaSection::default(),
            sweep: None,
            figure3: Figure3Section::default(),
            oracle_check: OracleCheckSection::default(),
            output: OutputSection::default(),
        }
    }

    /// The canonical text; parsing it back gives an equal config.
    pub fn to_canonical_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut issues = Vec::new();
        let mut push = |path: &str, reason: String| {
            issues.push(ConfigIssue {
                path: path.into(),
                reason,
            })
        };

        match validate_protocol(&self.protocol) {
            Ok(report) => {
                for w in report.warnings() {
                    log::warn!("protocol check {}: {}", w.check, w.message);
                }
            }
            Err(e) => push("protocol", e.to_string()),
        }
        if self.run.l == 0 {
            push("run.l", "chain length must be at least 1".into());
        }
        if !(self.run.t.is_finite() && self.run.t >= 0.0) {
            push(
                "run.t",
                format!(
                    "adiabatic time must be finite and non-negative, got {}",
                    self.run.t
                ),
            );
        }
        if self.run.steps == Some(0) {
            push("run.steps", "integrator needs at least one step".into());
        }
        if self.run.engine.uses_oracle() && self.run.l > self.run.oracle_cap {
            push(
                "run.l",
                format!(
                    "L = {} exceeds the oracle cap {}",
                    self.run.l, self.run.oracle_cap
                ),
            );
        }
        if let Err(e) = self.alpha.grid().validate() {
            push("alpha", e.to_string());
        }
        if self.alpha.count == 0 {
            push("alpha.count", "need at least one point".into());
        }
        if let Some(sweep) = &self.sweep {
            if sweep.l.is_empty() || sweep.l.contains(&0) {
                push("sweep.l", "need positive chain lengths".into());
            }
            if sweep.t.is_empty() || sweep.t.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
                push("sweep.t", "need finite non-negative times".into());
            }
            if let Some(w) = &sweep.wrong_order {
                if w.l == 0 || w.l > self.run.oracle_cap {
                    push(
                        "sweep.wrong_order.l",
                        format!("need 1 <= L <= oracle cap {}", self.run.oracle_cap),
                    );
                }
                if !(w.t.is_finite() && w.t >= 0.0)
                    || !(w.lambda_max.is_finite() && w.lambda_max >= 0.0)
                {
                    push(
                        "sweep.wrong_order",
                        "time and coupling must be finite and non-negative".into(),
                    );
                }
            }
        }
        let f3 = &self.figure3;
        if f3.d < 2 {
            push("figure3.d", "need d >= 2".into());
        }
        if f3.exponents.is_empty() || f3.exponents.contains(&0) {
            push(
                "figure3.exponents",
                "need exponents k >= 1 so that eps = 10^-k < 1/2".into(),
            );
        }
        if !(f3.alpha_over_beta_max.is_finite() && f3.alpha_over_beta_max > 0.0) || f3.count < 2 {
            push(
                "figure3",
                "need alpha_over_beta_max > 0 and count >= 2".into(),
            );
        }
        let oc = &self.oracle_check;
        if oc.l.is_empty() || oc.l.iter().any(|&l| l == 0 || l > self.run.oracle_cap) {
            push(
                "oracle_check.l",
                format!("need 1 <= L <= oracle cap {}", self.run.oracle_cap),
            );
        }
        if oc.t.is_empty() || oc.t.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            push("oracle_check.t", "need finite non-negative times".into());
        }
        if !(oc.tolerance.is_finite() && oc.tolerance > 0.0) {
            push("oracle_check.tolerance", "must be positive".into());
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { issues })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[protocol]
beta = 1.0
kappa = 1.0
lambda_max = 0.5
target_probs = [0.9, 0.1]

[run]
l = 64
t = 100.0
"#;

    #[test]
    fn minimal_config_is_valid() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c, ExperimentConfig::minimal());
    }

    #[test]
    fn canonical_round_trip() {
        let c = parse_config(MINIMAL).unwrap();
        let text = c.to_canonical_string();
        let again = parse_config(&text).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.to_canonical_string(), text);
    }

    #[test]
    fn bad_probabilities_are_rejected() {
        let err = parse_config(&MINIMAL.replace("[0.9, 0.1]", "[0.9, 0.2]")).unwrap_err();
        assert_eq!(err.issues[0].path, "protocol");
        assert!(
            err.to_string().contains("probabilities must sum to 1"),
            "{err}"
        );
    }

    #[test]
    fn negative_kappa_is_rejected() {
        let err = parse_config(&MINIMAL.replace("kappa = 1.0", "kappa = -1.0")).unwrap_err();
        assert!(err.to_string().contains("kappa"), "{err}");
    }

    #[test]
    fn unknown_keys_report_their_path() {
        let err = parse_config(&MINIMAL.replace("t = 100.0", "t = 100.0\ntypo = 3")).unwrap_err();
        assert_eq!(err.issues[0].path, "run.typo");
        assert!(err.issues[0].reason.contains("unknown field"), "{err}");
        let err = parse_config(&format!("{MINIMAL}\n[extra]\nx = 1\n")).unwrap_err();
        assert!(err.issues[0].reason.contains("extra"), "{err}");
    }

    #[test]
    fn type_mismatch_reports_its_path() {
        let err = parse_config(&MINIMAL.replace("l = 64", "l = \"big\"")).unwrap_err();
        assert_eq!(err.issues[0].path, "run.l");
    }

    #[test]
    fn oracle_cap_is_checked_up_front() {
        let err =
            parse_config(&MINIMAL.replace("l = 64", "l = 64\nengine = \"oracle\"")).unwrap_err();
        assert_eq!(err.issues[0].path, "run.l");
    }

    #[test]
    fn several_issues_are_collected() {
        let text = MINIMAL
            .replace("l = 64", "l = 0")
            .replace("t = 100.0", "t = -1.0");
        let err = parse_config(&text).unwrap_err();
        assert_eq!(err.issues.len(), 2);
    }
}
