//! Experiment configuration: JSON, unknown keys rejected.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use pvi_core::bsde::{IncreasingPart, PenaltyTreatment};
use pvi_core::pde::{FdBoundary, ProjectionMode};
use serde::de::{self, MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::CliError;

pub const DEFAULT_ALPHAS: [f64; 4] = [16.0, 64.0, 256.0, 1024.0];
pub const DEFAULT_N_PATHS: usize = 10_000;
pub const DEFAULT_RESIDUAL_TOL: f64 = 0.25;
pub const DEFAULT_M_VALUES: [f64; 3] = [0.0, 10.0, 100.0];
pub const DEFAULT_SKOROHOD_EPS: f64 = 1e-3;
pub const DEFAULT_OUTPUT_DIR: &str = "output";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub method: Method,
    pub grid: GridConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<SchemeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub analyses: Vec<Analysis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis_options: Option<AnalysisOptions>,
    /// Relative paths resolve against the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// Catalog problem and its parameters.
///
/// Accepts either `"obstacle_put"` or `{"name": ..., "params": {...}}`; a
/// missing parameter map is filled with the benchmark defaults.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProblemConfig {
    pub name: String,
    pub params: BTreeMap<String, f64>,
}

pub fn benchmark_params(name: &str) -> BTreeMap<String, f64> {
    let pairs: &[(&str, f64)] = match name {
        "unconstrained_linear" | "obstacle_put" => &[("rate", 0.05), ("strike", 100.0), ("vol", 0.2)],
        "z_constraint" => &[("slope", 0.5)],
        _ => &[],
    };
    pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemObject {
    name: String,
    #[serde(default)]
    params: Option<BTreeMap<String, f64>>,
}

impl<'de> Deserialize<'de> for ProblemConfig {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = ProblemConfig;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a catalog name or {name, params}")
            }

            fn visit_str<E: de::Error>(self, name: &str) -> Result<ProblemConfig, E> {
                Ok(ProblemConfig {
                    name: name.to_string(),
                    params: benchmark_params(name),
                })
            }

            fn visit_map<A: MapAccess<'de>>(self, map: A) -> Result<ProblemConfig, A::Error> {
                let obj = ProblemObject::deserialize(de::value::MapAccessDeserializer::new(map))?;
                let params = obj.params.unwrap_or_else(|| benchmark_params(&obj.name));
                Ok(ProblemConfig { name: obj.name, params })
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Lsmc,
    Chain,
    Fd,
    Projected,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Lsmc => "lsmc",
            Method::Chain => "chain",
            Method::Fd => "fd",
            Method::Projected => "projected",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_space: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_paths: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis_degree: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub picard_iters: Option<usize>,
    /// `with_driver` accumulates `(g + alpha Phi^-) dt` into `A` for comparison.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub increasing_part: Option<IncreasingPart>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty_treatment: Option<PenaltyTreatment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<FdBoundary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection: Option<ProjectionMode>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    Residual,
    SupersolutionFamily,
    Dominance,
    Skorohod,
    Refine,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisOptions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skorohod_eps: Option<f64>,
}

fn invalid(key: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        key: Some(key.to_string()),
        message: message.into(),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let message = inner.to_string();
            let key = offending_key(&path, &message);
            CliError::Config { key, message }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn alphas(&self) -> Vec<f64> {
        match self.method {
            Method::Projected => Vec::new(),
            _ => self
                .sweep
                .as_ref()
                .and_then(|s| s.alphas.clone())
                .unwrap_or_else(|| DEFAULT_ALPHAS.to_vec()),
        }
    }

    pub fn mc(&self) -> McConfig {
        self.mc.clone().unwrap_or_default()
    }

    pub fn scheme(&self) -> SchemeConfig {
        self.scheme.clone().unwrap_or_default()
    }

    pub fn options(&self) -> AnalysisOptions {
        self.analysis_options.clone().unwrap_or_default()
    }

    pub fn wants(&self, a: Analysis) -> bool {
        self.analyses.contains(&a)
    }

    pub fn output_dir(&self, config_dir: &Path) -> PathBuf {
        let dir = self
            .output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
        if dir.is_absolute() {
            dir
        } else {
            config_dir.join(dir)
        }
    }

    /// Method-specific requirements beyond the schema.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.grid.n_steps == 0 {
            return Err(invalid("grid.n_steps", "must be positive"));
        }
        let grid_based = self.method != Method::Lsmc;
        if grid_based {
            let n = self
                .grid
                .n_space
                .ok_or_else(|| invalid("grid.n_space", format!("required for method `{}`", self.method.label())))?;
            if n < 4 {
                return Err(invalid("grid.n_space", "must be at least 4"));
            }
            let lo = self
                .grid
                .x_min
                .ok_or_else(|| invalid("grid.x_min", format!("required for method `{}`", self.method.label())))?;
            let hi = self
                .grid
                .x_max
                .ok_or_else(|| invalid("grid.x_max", format!("required for method `{}`", self.method.label())))?;
            if !(lo < hi) {
                return Err(invalid("grid.x_max", "must exceed grid.x_min"));
            }
        }
        if self.method == Method::Lsmc {
            let mc = self.mc();
            if mc.seed.is_none() {
                return Err(invalid("mc.seed", "required for method `lsmc`"));
            }
            if mc.n_paths == Some(0) {
                return Err(invalid("mc.n_paths", "must be positive"));
            }
            if mc.picard_iters == Some(0) {
                return Err(invalid("mc.picard_iters", "must be positive"));
            }
        }
        if let Some(theta) = self.scheme().theta {
            if !(0.0..=1.0).contains(&theta) {
                return Err(invalid("scheme.theta", "must lie in [0, 1]"));
            }
        }
        if let Some(alphas) = self.sweep.as_ref().and_then(|s| s.alphas.as_ref()) {
            if self.method == Method::Projected {
                return Err(invalid("sweep.alphas", "method `projected` takes no penalization levels"));
            }
            if alphas.is_empty() {
                return Err(invalid("sweep.alphas", "must not be empty"));
            }
            if alphas.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
                return Err(invalid("sweep.alphas", "must be finite and nonnegative"));
            }
            if alphas.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(invalid("sweep.alphas", "must be strictly increasing"));
            }
        }
        let opts = self.options();
        if let Some(tol) = opts.residual_tol {
            if !(tol >= 0.0) {
                return Err(invalid("analysis_options.residual_tol", "must be nonnegative"));
            }
        }
        if let Some(eps) = opts.skorohod_eps {
            if !(eps > 0.0) {
                return Err(invalid("analysis_options.skorohod_eps", "must be positive"));
            }
        }
        for a in &self.analyses {
            let ok = match a {
                Analysis::Residual | Analysis::SupersolutionFamily => grid_based,
                Analysis::Dominance => matches!(self.method, Method::Fd | Method::Chain),
                Analysis::Skorohod => self.method != Method::Projected,
                Analysis::Refine => self.method == Method::Fd,
            };
            if !ok {
                return Err(invalid(
                    "analyses",
                    format!("analysis `{}` is not available for method `{}`", analysis_label(*a), self.method.label()),
                ));
            }
        }
        Ok(())
    }
}

pub fn analysis_label(a: Analysis) -> &'static str {
    match a {
        Analysis::Residual => "residual",
        Analysis::SupersolutionFamily => "supersolution_family",
        Analysis::Dominance => "dominance",
        Analysis::Skorohod => "skorohod",
        Analysis::Refine => "refine",
    }
}

fn offending_key(path: &str, message: &str) -> Option<String> {
    let field = ["unknown field `", "missing field `", "unknown variant `"]
        .iter()
        .find_map(|prefix| message.strip_prefix(prefix))
        .and_then(|rest| rest.split('`').next());
    let base = if path == "." { "" } else { path };
    match (field, message.starts_with("unknown variant")) {
        (Some(f), false) if base.is_empty() => Some(f.to_string()),
        (Some(f), false) if base.rsplit('.').next() == Some(f) => Some(base.to_string()),
        (Some(f), false) => Some(format!("{base}.{f}")),
        _ if base.is_empty() => None,
        _ => Some(base.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "problem": "unconstrained_linear",
        "method": "chain",
        "grid": {"n_steps": 50, "n_space": 100, "x_min": 20, "x_max": 500},
        "sweep": {"alphas": [1]}
    }"#;

    #[test]
    fn minimal_config_parses_with_benchmark_params() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.problem.params["strike"], 100.0);
        assert_eq!(c.alphas(), vec![1.0]);
        assert!(c.analyses.is_empty());
    }

    #[test]
    fn echo_reparses_to_the_same_config() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        let echo = serde_json::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::from_json(&echo).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_named() {
        let text = MINIMAL.replace("\"n_steps\"", "\"n_stepz\"");
        match ExperimentConfig::from_json(&text).unwrap_err() {
            CliError::Config { key, .. } => assert_eq!(key.as_deref(), Some("grid.n_stepz")),
            e => panic!("unexpected {e:?}"),
        }
        let text = MINIMAL.replace("\"sweep\"", "\"swep\"");
        match ExperimentConfig::from_json(&text).unwrap_err() {
            CliError::Config { key, .. } => assert_eq!(key.as_deref(), Some("swep")),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn literal_increasing_part_is_selectable() {
        let text = MINIMAL
            .replace("\"chain\"", "\"lsmc\"")
            .replace("\"sweep\"", "\"mc\": {\"seed\": 1, \"increasing_part\": \"with_driver\"}, \"sweep\"");
        let c = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(c.mc().increasing_part, Some(IncreasingPart::WithDriver));
        assert!(ExperimentConfig::from_json(&text.replace("with_driver", "driver")).is_err());
    }

    #[test]
    fn method_requirements_are_enforced() {
        let lsmc = MINIMAL.replace("\"chain\"", "\"lsmc\"");
        match ExperimentConfig::from_json(&lsmc).unwrap_err() {
            CliError::Config { key, .. } => assert_eq!(key.as_deref(), Some("mc.seed")),
            e => panic!("unexpected {e:?}"),
        }
        let no_space = MINIMAL.replace("\"n_space\": 100, ", "");
        assert!(ExperimentConfig::from_json(&no_space).is_err());
        let bad = MINIMAL.replace("[1]", "[4, 1]");
        match ExperimentConfig::from_json(&bad).unwrap_err() {
            CliError::Config { key, .. } => assert_eq!(key.as_deref(), Some("sweep.alphas")),
            e => panic!("unexpected {e:?}"),
        }
        let refine = MINIMAL.replace("\"sweep\"", "\"analyses\": [\"refine\"], \"sweep\"");
        assert!(ExperimentConfig::from_json(&refine).is_err());
    }
}
