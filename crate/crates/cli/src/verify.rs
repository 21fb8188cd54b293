//! Agreement of solved worst cases with the conjectured composed rate.

use linop_pep::classes::{FunctionClass, OperatorClass};
use linop_pep::closedform::{composed_lower_bound, RateParams};
use linop_pep::methods::GradientObjective;

use crate::config::{ExperimentConfig, Point, Problem};
use crate::error::Result;
use crate::run::{closed_form, run_points, ResultRow};

/// Slack of the lower-bound check, in the units of the worst case.
pub const LOWER_BOUND_SLACK: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyEntry {
    pub row: ResultRow,
    /// Closed form evaluated with the configured `mu_g` offset.
    pub closed_form: Option<f64>,
    /// `|SDP - closed form|`; `None` when either is missing.
    pub diff: Option<f64>,
    /// Final gap of the method on the one-dimensional worst-case functions.
    pub lower_bound: Option<f64>,
}

impl VerifyEntry {
    pub fn lower_bound_holds(&self) -> bool {
        match (self.lower_bound, self.row.value) {
            (Some(lb), Some(v)) => lb >= v - LOWER_BOUND_SLACK,
            _ => true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyReport {
    pub entries: Vec<VerifyEntry>,
    pub threshold: f64,
    /// Largest `|SDP - closed form|`; infinite when some point has no value.
    pub max_diff: f64,
    pub lower_bound_failures: usize,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        !self.entries.is_empty()
            && self.max_diff <= self.threshold
            && self.lower_bound_failures == 0
    }

    pub fn summary(&self) -> String {
        format!(
            "{}: {} points, max |SDP - closed form| = {:e} (threshold {:e}), {} lower-bound failures",
            if self.passed() { "PASS" } else { "FAIL" },
            self.entries.len(),
            self.max_diff,
            self.threshold,
            self.lower_bound_failures
        )
    }
}

/// Lower bound for composed problems whose closed form is known, in the
/// problem's units.
fn lower_bound(problem: &Problem) -> Option<f64> {
    let Problem::Gradient {
        objective:
            GradientObjective::Composed {
                g: FunctionClass::SmoothStronglyConvex { mu, l },
                m,
            },
        h,
        n,
        r,
    } = *problem
    else {
        return None;
    };
    let (mu_m, l_m) = match m {
        OperatorClass::Symmetric { mu, l } if mu >= 0.0 => (mu / l, l),
        OperatorClass::GeneralBounded { l } => (0.0, l),
        _ => return None,
    };
    let params = RateParams {
        mu_g: mu / l,
        mu_m,
        h,
        n,
    };
    composed_lower_bound(&params)
        .ok()
        .map(|v| l * l_m * l_m * r * r * v)
}

/// Compares solved rows with the closed form shifted by `mu_g_offset`.
pub fn verify_rows(
    points: &[Point],
    rows: &[ResultRow],
    threshold: f64,
    mu_g_offset: f64,
) -> VerifyReport {
    let mut entries = Vec::new();
    for (point, row) in points.iter().zip(rows) {
        let Ok(problem) = point.resolve() else {
            continue;
        };
        let Some(cf) = closed_form(&problem, point.criterion, mu_g_offset) else {
            continue;
        };
        let cf = cf.ok().map(|c| c.value);
        let diff = match (row.value, cf) {
            (Some(v), Some(c)) => Some((v - c).abs()),
            _ => None,
        };
        entries.push(VerifyEntry {
            row: row.clone(),
            closed_form: cf,
            diff,
            lower_bound: lower_bound(&problem),
        });
    }
    let max_diff = entries
        .iter()
        .map(|e| e.diff.unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    let lower_bound_failures = entries.iter().filter(|e| !e.lower_bound_holds()).count();
    VerifyReport {
        entries,
        threshold,
        max_diff,
        lower_bound_failures,
    }
}

/// Solves every point of `config` and checks it against the closed form.
pub fn verify_conjecture(config: &ExperimentConfig, tol: f64, jobs: usize) -> Result<VerifyReport> {
    let points = config.points()?;
    let rows = run_points(&points, tol, jobs)?;
    Ok(verify_rows(
        &points,
        &rows,
        config.verify.threshold,
        config.verify.mu_g_offset,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use linop_pep::sdp::DEFAULT_TOLERANCE;

    const ONE_POINT: &str = r#"
name = "one"
[[curve]]
label = "C"
criteria = ["last"]
[curve.problem]
method = "gradient"
g = { class = "smooth", mu = 0.1, l = 1.0 }
operator = { class = "symmetric", mu = 0.5, l = 1.0 }
[sweep]
h = [1.0]
n = [2]
"#;

    #[test]
    fn single_point_grid_gives_one_entry() {
        let config = ExperimentConfig::from_toml(ONE_POINT).unwrap();
        let report = verify_conjecture(&config, DEFAULT_TOLERANCE, 1).unwrap();
        assert_eq!(report.entries.len(), 1);
        assert!(report.passed(), "{}", report.summary());
        assert!(report.entries[0].lower_bound.is_some());
    }

    #[test]
    fn corrupted_closed_form_fails() {
        let text = format!("{ONE_POINT}\n[verify]\nmu_g_offset = 0.01\n");
        let config = ExperimentConfig::from_toml(&text).unwrap();
        let report = verify_conjecture(&config, DEFAULT_TOLERANCE, 1).unwrap();
        assert!(!report.passed(), "{}", report.summary());
    }
}
