//! Run configuration: a TOML file with dotted section keys.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    FreeParticle,
    Relaxation,
    Burgers,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Linearized,
    Taylor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndpointMode {
    Free,
    Reweighted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub name: ModelName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cubic: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi_scale: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub m: usize,
    pub step_dt: f64,
    pub prefactor_tau: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionSection {
    pub variant: Variant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    pub samples: usize,
    #[serde(default)]
    pub burn_in: usize,
    pub seed: u64,
    #[serde(default = "one")]
    pub chains: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointSection {
    pub mode: EndpointMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trial_samples: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub binary: bool,
    #[serde(default)]
    pub dump_ladder: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: default_dir(),
            binary: false,
            dump_ladder: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub initial_condition: Vec<f64>,
    pub model: ModelSection,
    pub grid: GridSection,
    pub action: ActionSection,
    pub chain: ChainSection,
    pub endpoint: EndpointSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn one() -> usize {
    1
}

fn default_dir() -> PathBuf {
    PathBuf::from("output")
}

fn usage(key: &str, message: impl Into<String>) -> CliError {
    CliError::Usage {
        key: key.into(),
        message: message.into(),
    }
}

impl RunConfig {
    /// Parses and validates a configuration file's contents.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: RunConfig = toml::from_str(text).map_err(|e| {
            let message = e.message().to_string();
            let key = offending_line_key(text, e.span())
                .filter(|_| message.contains("unknown field"))
                .or_else(|| quoted_field(&message))
                .unwrap_or_else(|| "config".into());
            usage(&key, message)
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Resolved configuration as TOML; parses back to an equal value.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// State dimension implied by the model section.
    pub fn dimension(&self) -> usize {
        match self.model.name {
            ModelName::Burgers => 2 * self.model.mode_count.unwrap_or(0),
            _ => self.model.dimension.unwrap_or(0),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let m = &self.model;
        let (required, allowed): (&[&str], &[&str]) = match m.name {
            ModelName::FreeParticle => (&["dimension"], &["dimension"]),
            ModelName::Relaxation => (
                &["dimension", "gamma"],
                &["dimension", "gamma", "cubic", "phi"],
            ),
            ModelName::Burgers => (&["mode_count", "psi_scale"], &["mode_count", "psi_scale"]),
        };
        let present = [
            ("dimension", m.dimension.is_some()),
            ("gamma", m.gamma.is_some()),
            ("cubic", m.cubic.is_some()),
            ("phi", m.phi.is_some()),
            ("mode_count", m.mode_count.is_some()),
            ("psi_scale", m.psi_scale.is_some()),
        ];
        for (key, set) in present {
            if set && !allowed.contains(&key) {
                return Err(usage(
                    &format!("model.{key}"),
                    format!("not a parameter of model {:?}", m.name),
                ));
            }
            if !set && required.contains(&key) {
                return Err(usage(&format!("model.{key}"), "required for this model"));
            }
        }
        if m.dimension == Some(0) {
            return Err(usage("model.dimension", "must be at least 1"));
        }
        if m.mode_count == Some(0) {
            return Err(usage("model.mode_count", "must be at least 1"));
        }
        for (key, v) in [("model.gamma", m.gamma), ("model.cubic", m.cubic)] {
            if v.is_some_and(|v| !v.is_finite()) {
                return Err(usage(key, "must be finite"));
            }
        }
        for (key, v) in [("model.phi", m.phi), ("model.psi_scale", m.psi_scale)] {
            if v.is_some_and(|v| !(v >= 0.0 && v.is_finite())) {
                return Err(usage(key, "must be finite and non-negative"));
            }
        }

        let g = &self.grid;
        if g.m == 0 || g.m > 20 {
            return Err(usage("grid.m", "must be between 1 and 20"));
        }
        if !(g.step_dt > 0.0 && g.step_dt.is_finite()) {
            return Err(usage("grid.step_dt", "must be positive"));
        }
        if !(g.prefactor_tau > 0.0 && g.prefactor_tau.is_finite()) {
            return Err(usage("grid.prefactor_tau", "must be positive"));
        }

        let c = &self.chain;
        if c.samples == 0 {
            return Err(usage("chain.samples", "must be at least 1"));
        }
        if c.chains == 0 || c.chains > c.samples {
            return Err(usage("chain.chains", "must be between 1 and chain.samples"));
        }

        if self.initial_condition.len() != self.dimension() {
            return Err(usage(
                "initial_condition",
                format!(
                    "has {} components but the model dimension is {}",
                    self.initial_condition.len(),
                    self.dimension()
                ),
            ));
        }
        if self.initial_condition.iter().any(|v| !v.is_finite()) {
            return Err(usage("initial_condition", "must be finite"));
        }

        match (self.endpoint.mode, self.endpoint.trial_samples) {
            (EndpointMode::Reweighted, None) => {
                return Err(usage(
                    "endpoint.trial_samples",
                    "required in reweighted mode",
                ))
            }
            (EndpointMode::Reweighted, Some(0)) => {
                return Err(usage("endpoint.trial_samples", "must be at least 1"))
            }
            (EndpointMode::Free, Some(_)) => {
                return Err(usage(
                    "endpoint.trial_samples",
                    "only used in reweighted mode",
                ))
            }
            _ => {}
        }
        Ok(())
    }
}

fn quoted_field(message: &str) -> Option<String> {
    let start = message.find('`')? + 1;
    let end = start + message[start..].find('`')?;
    (message.contains("unknown field") || message.contains("missing field"))
        .then(|| message[start..end].to_string())
}

/// Key written on the line where a parse error points.
fn offending_line_key(text: &str, span: Option<std::ops::Range<usize>>) -> Option<String> {
    let at = span?.start.min(text.len());
    let line_start = text[..at].rfind('\n').map_or(0, |i| i + 1);
    let line = text[line_start..].lines().next()?;
    let key = line.split('=').next()?.trim();
    (!key.is_empty() && !key.starts_with('[')).then(|| key.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    const FREE: &str = r#"
initial_condition = [0.0]
model.name = "free_particle"
model.dimension = 1
grid.m = 3
grid.step_dt = 0.1
grid.prefactor_tau = 1.0
action.variant = "linearized"
chain.samples = 100
chain.seed = 7
endpoint.mode = "free"
"#;

    fn key_of(text: &str) -> String {
        match RunConfig::parse(text) {
            Err(CliError::Usage { key, .. }) => key,
            other => panic!("expected usage error, got {other:?}"),
        }
    }

    #[test]
    fn parses_with_defaults() {
        let c = RunConfig::parse(FREE).unwrap();
        assert_eq!(c.chain.chains, 1);
        assert_eq!(c.chain.burn_in, 0);
        assert_eq!(c.output, OutputSection::default());
        assert_eq!(c.dimension(), 1);
    }

    #[test]
    fn resolved_config_round_trips() {
        let mut c = RunConfig::parse(FREE).unwrap();
        c.output.binary = true;
        let again = RunConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn zero_levels_names_grid_m() {
        assert_eq!(key_of(&FREE.replace("grid.m = 3", "grid.m = 0")), "grid.m");
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = FREE.replace("grid.m = 3", "grid.m = 3\ngrid.mm = 3");
        assert_eq!(key_of(&text), "grid.mm");
    }

    #[test]
    fn missing_key_is_reported() {
        assert_eq!(key_of(&FREE.replace("chain.seed = 7\n", "")), "seed");
    }

    #[test]
    fn model_parameters_are_checked() {
        assert_eq!(
            key_of(&FREE.replace(
                "model.dimension = 1",
                "model.dimension = 1\nmodel.gamma = 1.0"
            )),
            "model.gamma"
        );
        let relax = FREE.replace(r#""free_particle""#, r#""relaxation""#);
        assert_eq!(key_of(&relax), "model.gamma");
        let burgers = FREE.replace(r#""free_particle""#, r#""burgers""#).replace(
            "model.dimension = 1",
            "model.mode_count = 2\nmodel.psi_scale = 0.1",
        );
        assert_eq!(key_of(&burgers), "initial_condition");
    }

    #[test]
    fn reweighted_mode_needs_trial_samples() {
        let text = FREE.replace(
            r#"endpoint.mode = "free""#,
            r#"endpoint.mode = "reweighted""#,
        );
        assert_eq!(key_of(&text), "endpoint.trial_samples");
        assert!(RunConfig::parse(&format!("{text}endpoint.trial_samples = 5\n")).is_ok());
    }

    #[test]
    fn chains_bounded_by_samples() {
        let text = FREE.replace("chain.samples = 100", "chain.samples = 2\nchain.chains = 3");
        assert_eq!(key_of(&text), "chain.chains");
    }
}
