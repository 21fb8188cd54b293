//! Experiment configuration files.
//!
//! A configuration is a TOML document with a `name`, one or more `[[curve]]`
//! tables and a `[sweep]` table. Unknown keys are rejected.

use std::path::Path;

use linop_pep::classes::{FunctionClass, OperatorClass};
use linop_pep::methods::{ChambollePockParams, CriterionSpec, GradientObjective};
use serde::Deserialize;

use crate::error::{CliError, Result};

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub backend: BackendOptions,
    #[serde(rename = "curve")]
    pub curves: Vec<CurveConfig>,
    pub sweep: SweepConfig,
    #[serde(default)]
    pub verify: VerifyOptions,
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BackendOptions {
    /// Solver tolerance; `--tol` takes precedence.
    pub tol: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct VerifyOptions {
    /// Largest accepted `|SDP - closed form|`.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Offset added to `mu_g` inside the closed form only.
    #[serde(default)]
    pub mu_g_offset: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            threshold: default_threshold(),
            mu_g_offset: 0.0,
        }
    }
}

fn default_threshold() -> f64 {
    1e-4
}

fn default_radius() -> f64 {
    1.0
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CurveConfig {
    pub label: String,
    pub criteria: Vec<String>,
    pub problem: ProblemConfig,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(tag = "method", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemConfig {
    /// Plain when `f` is given, composed `g(Mx)` when `g` and `operator` are.
    Gradient {
        f: Option<FunctionSpec>,
        g: Option<FunctionSpec>,
        operator: Option<OperatorSpec>,
        #[serde(default = "default_radius")]
        r: f64,
    },
    ChambollePock {
        f: FunctionSpec,
        g: FunctionSpec,
        operator: OperatorSpec,
        tau: f64,
        sigma: f64,
        #[serde(default = "default_radius")]
        r_x: f64,
        #[serde(default = "default_radius")]
        r_u: f64,
    },
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(tag = "class", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FunctionSpec {
    /// `L`-smooth `mu`-strongly convex; `l = inf` allowed.
    Smooth {
        mu: f64,
        l: f64,
    },
    Convex,
    BoundedSubgradient {
        s: f64,
    },
    Quadratic {
        mu: f64,
        l: f64,
    },
}

impl FunctionSpec {
    pub fn to_class(self) -> FunctionClass {
        match self {
            FunctionSpec::Smooth { mu, l } => FunctionClass::SmoothStronglyConvex { mu, l },
            FunctionSpec::Convex => FunctionClass::Convex,
            FunctionSpec::BoundedSubgradient { s } => FunctionClass::ConvexBoundedSubgradient { s },
            FunctionSpec::Quadratic { mu, l } => FunctionClass::Quadratic { mu, l },
        }
    }

    fn with_mu(self, value: f64) -> Result<Self> {
        match self {
            FunctionSpec::Smooth { l, .. } => Ok(FunctionSpec::Smooth { mu: value, l }),
            FunctionSpec::Quadratic { l, .. } => Ok(FunctionSpec::Quadratic { mu: value, l }),
            other => Err(CliError::Config(format!(
                "mu_g sweep needs a class with mu, got {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(tag = "class", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OperatorSpec {
    General { l: f64 },
    Unbounded,
    Symmetric { mu: f64, l: f64 },
    Skew { l: f64 },
}

impl OperatorSpec {
    pub fn to_class(self) -> OperatorClass {
        match self {
            OperatorSpec::General { l } => OperatorClass::GeneralBounded { l },
            OperatorSpec::Unbounded => OperatorClass::GeneralUnbounded,
            OperatorSpec::Symmetric { mu, l } => OperatorClass::Symmetric { mu, l },
            OperatorSpec::Skew { l } => OperatorClass::SkewSymmetric { l },
        }
    }

    fn with_mu(self, value: f64) -> Result<Self> {
        match self {
            OperatorSpec::Symmetric { l, .. } => Ok(OperatorSpec::Symmetric { mu: value, l }),
            // the lower spectral bound does not constrain a general operator
            OperatorSpec::General { .. } if value == 0.0 => Ok(self),
            other => Err(CliError::Config(format!(
                "mu_m = {value} needs a symmetric operator, got {other:?}"
            ))),
        }
    }
}

/// List of values or an inclusive arithmetic range.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl Grid {
    pub fn values(&self) -> Result<Vec<f64>> {
        let values = match *self {
            Grid::List(ref v) => v.clone(),
            Grid::Range { start, stop, step } => {
                if !(step > 0.0 && step.is_finite() && start <= stop) {
                    return Err(CliError::Config(format!(
                        "invalid range {start}..{stop} step {step}"
                    )));
                }
                let count = ((stop - start) / step + 1e-9).floor() as usize;
                (0..=count).map(|k| start + k as f64 * step).collect()
            }
        };
        if values.is_empty() {
            return Err(CliError::Config("empty grid".into()));
        }
        Ok(values)
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Normalized steps of the gradient method.
    pub h: Option<Grid>,
    /// Iteration counts.
    pub n: Vec<usize>,
    /// Strong convexity of `f` (plain) or `g` (composed).
    pub mu_g: Option<Grid>,
    /// Lower spectral bound of a symmetric operator.
    pub mu_m: Option<Grid>,
}

/// Fully specified problem at one grid point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Problem {
    Gradient {
        objective: GradientObjective,
        h: f64,
        n: usize,
        r: f64,
    },
    ChambollePock {
        f: FunctionClass,
        g: FunctionClass,
        m: OperatorClass,
        params: ChambollePockParams,
    },
}

/// One row of a sweep: a curve, a criterion and the swept parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    pub index: usize,
    pub label: String,
    pub criterion: CriterionSpec,
    pub mu_g: Option<f64>,
    pub mu_m: Option<f64>,
    pub h: Option<f64>,
    pub n: usize,
    pub problem: ProblemConfig,
}

impl Point {
    pub fn method_name(&self) -> &'static str {
        match self.problem {
            ProblemConfig::Gradient { .. } => "gradient",
            ProblemConfig::ChambollePock { .. } => "chambolle-pock",
        }
    }

    /// Problem with the grid values substituted.
    pub fn resolve(&self) -> Result<Problem> {
        match self.problem {
            ProblemConfig::Gradient { f, g, operator, r } => {
                let h = self
                    .h
                    .ok_or_else(|| CliError::Config("gradient method needs an h grid".into()))?;
                let objective = match (f, g, operator) {
                    (Some(f), None, None) => {
                        let f = match self.mu_g {
                            Some(mu) => f.with_mu(mu)?,
                            None => f,
                        };
                        if self.mu_m.is_some() {
                            return Err(CliError::Config("mu_m sweep needs an operator".into()));
                        }
                        GradientObjective::Plain(f.to_class())
                    }
                    (None, Some(g), Some(m)) => {
                        let g = match self.mu_g {
                            Some(mu) => g.with_mu(mu)?,
                            None => g,
                        };
                        let m = match self.mu_m {
                            Some(mu) => m.with_mu(mu)?,
                            None => m,
                        };
                        GradientObjective::Composed {
                            g: g.to_class(),
                            m: m.to_class(),
                        }
                    }
                    _ => {
                        return Err(CliError::Config(
                            "gradient problem needs either f, or g with an operator".into(),
                        ))
                    }
                };
                Ok(Problem::Gradient {
                    objective,
                    h,
                    n: self.n,
                    r,
                })
            }
            ProblemConfig::ChambollePock {
                f,
                g,
                operator,
                tau,
                sigma,
                r_x,
                r_u,
            } => {
                if self.mu_g.is_some() || self.mu_m.is_some() || self.h.is_some() {
                    return Err(CliError::Config(
                        "Chambolle-Pock curves only sweep n".into(),
                    ));
                }
                Ok(Problem::ChambollePock {
                    f: f.to_class(),
                    g: g.to_class(),
                    m: operator.to_class(),
                    params: ChambollePockParams {
                        tau,
                        sigma,
                        n: self.n,
                        r_x,
                        r_u,
                    },
                })
            }
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.curves.is_empty() {
            return Err(CliError::Config(
                "at least one [[curve]] is required".into(),
            ));
        }
        if self.sweep.n.is_empty() {
            return Err(CliError::Config("empty grid: sweep.n".into()));
        }
        for grid in [&self.sweep.h, &self.sweep.mu_g, &self.sweep.mu_m]
            .into_iter()
            .flatten()
        {
            grid.values()?;
        }
        for curve in &self.curves {
            if curve.criteria.is_empty() {
                return Err(CliError::Config(format!(
                    "curve `{}` has no criteria",
                    curve.label
                )));
            }
            for c in &curve.criteria {
                CriterionSpec::parse(c).ok_or_else(|| {
                    CliError::Config(format!(
                        "unknown criterion `{c}` in curve `{}`",
                        curve.label
                    ))
                })?;
            }
        }
        for point in self.points()? {
            point.resolve()?;
        }
        Ok(())
    }

    /// Grid points in a fixed order: curve, criterion, `mu_g`, `mu_m`, `n`,
    /// `h`. Axes that do not apply to a curve are skipped.
    pub fn points(&self) -> Result<Vec<Point>> {
        let opt = |g: &Option<Grid>| -> Result<Vec<Option<f64>>> {
            Ok(match g {
                Some(g) => g.values()?.into_iter().map(Some).collect(),
                None => vec![None],
            })
        };
        let mu_g = opt(&self.sweep.mu_g)?;
        let mu_m = opt(&self.sweep.mu_m)?;
        let h = opt(&self.sweep.h)?;
        let mut points = Vec::new();
        for curve in &self.curves {
            let gradient = matches!(curve.problem, ProblemConfig::Gradient { .. });
            let composed = matches!(
                curve.problem,
                ProblemConfig::Gradient {
                    operator: Some(_),
                    ..
                }
            );
            let none = [None];
            let mu_g_axis: &[Option<f64>] = if gradient { &mu_g } else { &none };
            let mu_m_axis: &[Option<f64>] = if composed { &mu_m } else { &none };
            let h_axis: &[Option<f64>] = if gradient { &h } else { &none };
            for crit in &curve.criteria {
                let criterion = CriterionSpec::parse(crit)
                    .ok_or_else(|| CliError::Config(format!("unknown criterion `{crit}`")))?;
                for &g in mu_g_axis {
                    for &m in mu_m_axis {
                        if !self.mu_m_applies(curve, m) {
                            continue;
                        }
                        for &n in &self.sweep.n {
                            for &step in h_axis {
                                points.push(Point {
                                    index: points.len(),
                                    label: curve.label.clone(),
                                    criterion,
                                    mu_g: g,
                                    mu_m: m,
                                    h: step,
                                    n,
                                    problem: curve.problem,
                                });
                            }
                        }
                    }
                }
            }
        }
        Ok(points)
    }

    /// A general operator only takes part in the `mu_m = 0` slice.
    fn mu_m_applies(&self, curve: &CurveConfig, mu_m: Option<f64>) -> bool {
        match (curve.problem, mu_m) {
            (
                ProblemConfig::Gradient {
                    operator: Some(OperatorSpec::General { .. }),
                    ..
                },
                Some(m),
            ) => m == 0.0,
            _ => true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const STEP_SWEEP: &str = r#"
name = "step_sweep"

[[curve]]
label = "F_0"
criteria = ["last"]
problem = { method = "gradient", f = { class = "smooth", mu = 0.0, l = 1.0 } }

[[curve]]
label = "C_0.1,0"
criteria = ["last"]
[curve.problem]
method = "gradient"
g = { class = "smooth", mu = 0.1, l = 1.0 }
operator = { class = "symmetric", mu = 0.0, l = 1.0 }

[sweep]
h = { start = 0.05, stop = 2.0, step = 0.05 }
n = [10]
"#;

    #[test]
    fn parses_and_expands_in_order() {
        let config = ExperimentConfig::from_toml(STEP_SWEEP).unwrap();
        let points = config.points().unwrap();
        assert_eq!(points.len(), 80);
        assert_eq!(points[0].label, "F_0");
        assert!((points[39].h.unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(points[40].label, "C_0.1,0");
        assert!(points.iter().enumerate().all(|(k, p)| p.index == k));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = STEP_SWEEP.replace("n = [10]", "n = [10]\nbogus = 1");
        assert!(matches!(
            ExperimentConfig::from_toml(&bad),
            Err(CliError::Config(_))
        ));
        let bad = STEP_SWEEP.replace("mu = 0.0, l = 1.0 } }", "mu = 0.0, l = 1.0, k = 2 } }");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn empty_grid_is_an_error() {
        let bad = STEP_SWEEP.replace("n = [10]", "n = []");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
        let bad = STEP_SWEEP.replace("h = { start = 0.05, stop = 2.0, step = 0.05 }", "h = []");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn general_operator_only_joins_zero_mu_m() {
        let text = r#"
name = "c"
[[curve]]
label = "general"
criteria = ["last"]
[curve.problem]
method = "gradient"
g = { class = "smooth", mu = 0.1, l = 1.0 }
operator = { class = "general", l = 1.0 }
[sweep]
h = [1.0]
n = [1, 2]
mu_m = [0.0, 0.5]
"#;
        let config = ExperimentConfig::from_toml(text).unwrap();
        let points = config.points().unwrap();
        assert_eq!(points.len(), 2);
        assert!(points.iter().all(|p| p.mu_m == Some(0.0)));
    }

    #[test]
    fn range_includes_endpoint() {
        let g = Grid::Range {
            start: 0.0,
            stop: 2.0,
            step: 0.05,
        };
        let v = g.values().unwrap();
        assert_eq!(v.len(), 41);
        assert!((v[40] - 2.0).abs() < 1e-12);
    }
}
