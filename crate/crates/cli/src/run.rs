//! Solving grid points and cross-checking closed forms.

use linop_pep::classes::{FunctionClass, OperatorClass};
use linop_pep::closedform::{
    composed_branches, rate_quadratic, smooth_convex_branches, ActiveBranch, RateParams,
};
use linop_pep::methods::{CriterionSpec, GradientObjective};
use linop_pep::sdp::{ClarabelBackend, SolveStatus};
use linop_pep::worstcase::{chambolle_pock_worst_case, gradient_worst_case, WorstCase};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Point, Problem};
use crate::error::{CliError, Result};

/// Outcome of one grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub index: usize,
    pub label: String,
    pub method: &'static str,
    pub criterion: &'static str,
    pub mu_g: Option<f64>,
    pub mu_m: Option<f64>,
    pub h: Option<f64>,
    pub n: usize,
    /// SDP worst case; present for optimal and inaccurate solves.
    pub value: Option<f64>,
    pub status: String,
    pub closed_form: Option<f64>,
    /// `|value - closed_form|`, present only when both are.
    pub gap: Option<f64>,
    pub branch: Option<&'static str>,
    pub error: Option<String>,
    /// Solver wall time in seconds.
    pub solve_time: f64,
}

/// Closed-form worst case of the last iterate together with the branch
/// attaining it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClosedForm {
    pub value: f64,
    pub branch: Option<ActiveBranch>,
}

/// Closed form of a resolved problem, with `mu_offset` added to the strong
/// convexity of `f` or `g`. `None` when no closed form is known.
pub fn closed_form(
    problem: &Problem,
    criterion: CriterionSpec,
    mu_offset: f64,
) -> Option<Result<ClosedForm>> {
    if criterion != CriterionSpec::ObjectiveGapLast {
        return None;
    }
    let Problem::Gradient { objective, h, n, r } = *problem else {
        return None;
    };
    let value = match objective {
        GradientObjective::Plain(FunctionClass::SmoothStronglyConvex { mu, l }) => {
            smooth_convex_branches((mu + mu_offset) / l, h, n).map(|b| ClosedForm {
                value: l * r * r * b.value(),
                branch: Some(b.active()),
            })
        }
        GradientObjective::Plain(FunctionClass::Quadratic { mu, l }) => {
            rate_quadratic(mu + mu_offset, l, h, n, r).map(|v| ClosedForm {
                value: v,
                branch: None,
            })
        }
        GradientObjective::Composed {
            g: FunctionClass::SmoothStronglyConvex { mu, l },
            m,
        } => {
            let (mu_m, l_m) = match m {
                OperatorClass::Symmetric { mu, l } if mu >= 0.0 => (mu / l, l),
                OperatorClass::GeneralBounded { l } => (0.0, l),
                _ => return None,
            };
            let params = RateParams {
                mu_g: (mu + mu_offset) / l,
                mu_m,
                h,
                n,
            };
            composed_branches(&params).map(|b| ClosedForm {
                value: l * l_m * l_m * r * r * b.value(),
                branch: Some(b.active()),
            })
        }
        _ => return None,
    };
    Some(value.map_err(CliError::from))
}

/// Solves the worst case of a resolved problem.
pub fn solve_problem(problem: &Problem, criterion: CriterionSpec, tol: f64) -> Result<WorstCase> {
    let backend = ClarabelBackend::default();
    let wc = match *problem {
        Problem::Gradient { objective, h, n, r } => {
            gradient_worst_case(&objective, h, n, r, criterion, &backend, tol)?
        }
        Problem::ChambollePock { f, g, m, params } => {
            chambolle_pock_worst_case(f, g, m, &params, criterion, &backend, tol)?
        }
    };
    Ok(wc)
}

/// Solves one grid point; failures are recorded in the row.
pub fn solve_point(point: &Point, tol: f64) -> ResultRow {
    let mut row = ResultRow {
        index: point.index,
        label: point.label.clone(),
        method: point.method_name(),
        criterion: point.criterion.name(),
        mu_g: point.mu_g,
        mu_m: point.mu_m,
        h: point.h,
        n: point.n,
        value: None,
        status: "error".into(),
        closed_form: None,
        gap: None,
        branch: None,
        error: None,
        solve_time: 0.0,
    };
    let problem = match point.resolve() {
        Ok(p) => p,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    match closed_form(&problem, point.criterion, 0.0) {
        Some(Ok(cf)) => {
            row.closed_form = Some(cf.value);
            row.branch = cf.branch.map(ActiveBranch::as_str);
        }
        Some(Err(e)) => log::warn!("point {}: closed form undefined: {e}", point.index),
        None => {}
    }
    match solve_problem(&problem, point.criterion, tol) {
        Ok(wc) => {
            row.status = wc.status.as_str().into();
            row.solve_time = wc.solve_time;
            if matches!(wc.status, SolveStatus::Optimal | SolveStatus::Inaccurate) {
                row.value = Some(wc.value);
            }
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    if let (Some(v), Some(c)) = (row.value, row.closed_form) {
        row.gap = Some((v - c).abs());
    }
    row
}

/// Solves every grid point of `config` on `jobs` worker threads. Rows come
/// back in grid order.
pub fn run_sweep(config: &ExperimentConfig, tol: f64, jobs: usize) -> Result<Vec<ResultRow>> {
    let points = config.points()?;
    run_points(&points, tol, jobs)
}

pub fn run_points(points: &[Point], tol: f64, jobs: usize) -> Result<Vec<ResultRow>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| points.par_iter().map(|p| solve_point(p, tol)).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use linop_pep::sdp::DEFAULT_TOLERANCE;

    fn config(h: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml(&format!(
            r#"
name = "t"
[[curve]]
label = "F_0"
criteria = ["last"]
problem = {{ method = "gradient", f = {{ class = "smooth", mu = 0.0, l = 1.0 }} }}
[sweep]
h = {h}
n = [1, 2]
"#
        ))
        .unwrap()
    }

    #[test]
    fn rows_follow_grid_order_and_match_closed_form() {
        let rows = run_sweep(&config("[0.5, 1.0]"), DEFAULT_TOLERANCE, 2).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().enumerate().all(|(k, r)| r.index == k));
        assert_eq!(rows[1].h, Some(1.0));
        assert_eq!(rows[2].n, 2);
        for r in &rows {
            assert_eq!(r.status, "optimal");
            assert!(r.gap.unwrap() < 1e-6, "{r:?}");
        }
    }

    #[test]
    fn invalid_step_is_recorded_in_row() {
        let rows = run_sweep(&config("[0.0, 1.0]"), DEFAULT_TOLERANCE, 1).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].status, "error");
        assert!(rows[0].value.is_none() && rows[0].gap.is_none());
        assert!(rows[0].error.is_some());
        assert!((rows[0].closed_form.unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(rows[1].status, "optimal");
    }

    #[test]
    fn closed_form_scales_with_constants() {
        let problem = Problem::Gradient {
            objective: GradientObjective::Composed {
                g: FunctionClass::SmoothStronglyConvex { mu: 0.2, l: 2.0 },
                m: OperatorClass::Symmetric { mu: 1.0, l: 2.0 },
            },
            h: 1.0,
            n: 3,
            r: 1.5,
        };
        let cf = closed_form(&problem, CriterionSpec::ObjectiveGapLast, 0.0)
            .unwrap()
            .unwrap();
        let unit = composed_branches(&RateParams {
            mu_g: 0.1,
            mu_m: 0.5,
            h: 1.0,
            n: 3,
        })
        .unwrap()
        .value();
        assert!((cf.value - 2.0 * 4.0 * 2.25 * unit).abs() < 1e-12);
        assert!(closed_form(&problem, CriterionSpec::DistanceLast, 0.0).is_none());
    }
}
