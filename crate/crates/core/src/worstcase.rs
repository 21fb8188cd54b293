//! End-to-end worst-case computations: build a trajectory, attach a
//! criterion, assemble and solve.
//!
//! Gradient-method problems are normalized to `L_F = 1`, `R = 1` before
//! solving and rescaled afterwards.

use crate::classes::{FunctionClass, OperatorClass};
use crate::error::{PepError, Result};
use crate::expr::ScalarExpr;
use crate::methods::{
    attach_criterion, build_chambolle_pock, build_gradient_method, ChambollePockParams, Criterion,
    CriterionSpec, GradientObjective, Trajectory,
};
use crate::sdp::{assemble, ConicBackend, PepProblem, SolveResult, SolveStatus};

/// Outcome of a worst-case computation.
#[derive(Clone, Debug)]
pub struct WorstCase {
    pub status: SolveStatus,
    /// Worst-case criterion value in the caller's units.
    pub value: f64,
    /// Factor from solved (normalized) units to caller units.
    pub scale: f64,
    pub trajectory: Trajectory,
    /// Problem whose solution attains `value` (for `best`, the maximizing
    /// candidate).
    pub problem: PepProblem,
    pub result: SolveResult,
    pub criterion: ScalarExpr,
    /// Total solver time over all solves, seconds.
    pub solve_time: f64,
}

/// Solves the SDP of `traj` for `crit`, in the trajectory's own units.
pub fn solve_trajectory(
    mut traj: Trajectory,
    crit: CriterionSpec,
    backend: &dyn ConicBackend,
    tol: f64,
) -> Result<WorstCase> {
    let criterion = attach_criterion(&mut traj, crit)?;
    match criterion {
        Criterion::Expr(obj) => {
            let problem = assemble(&mut traj, &obj)?;
            let result = problem.solve(backend, tol)?;
            Ok(WorstCase {
                status: result.status,
                value: result.objective,
                scale: 1.0,
                solve_time: result.solve_time,
                trajectory: traj,
                problem,
                result,
                criterion: obj,
            })
        }
        Criterion::MinOf(candidates) => {
            let base = assemble(&mut traj, &ScalarExpr::zero())?;
            let mut best: Option<(PepProblem, SolveResult, ScalarExpr)> = None;
            let mut statuses = Vec::new();
            let mut solve_time = 0.0;
            for (k, gap_k) in candidates.iter().enumerate() {
                let mut problem = base.clone();
                for (i, gap_i) in candidates.iter().enumerate() {
                    if i != k {
                        problem.add_inequality(gap_k - gap_i);
                    }
                }
                problem.set_objective(gap_k.clone());
                let result = problem.solve(backend, tol)?;
                solve_time += result.solve_time;
                statuses.push(result.status);
                let better = match &best {
                    None => true,
                    Some((_, r, _)) => {
                        usable(result.status)
                            && (!usable(r.status) || result.objective > r.objective)
                    }
                };
                if better {
                    best = Some((problem, result, gap_k.clone()));
                }
            }
            let (problem, result, obj) = best.ok_or_else(|| PepError::IncompatibleCriterion {
                criterion: crit.name().into(),
                reason: "no candidate iterates".into(),
            })?;
            let status = if statuses.contains(&SolveStatus::Unbounded) {
                SolveStatus::Unbounded
            } else if statuses.iter().all(|s| *s == SolveStatus::Infeasible) {
                SolveStatus::Infeasible
            } else if statuses
                .iter()
                .all(|s| matches!(s, SolveStatus::Optimal | SolveStatus::Infeasible))
            {
                SolveStatus::Optimal
            } else {
                SolveStatus::Inaccurate
            };
            Ok(WorstCase {
                status,
                value: result.objective,
                scale: 1.0,
                solve_time,
                trajectory: traj,
                problem,
                result,
                criterion: obj,
            })
        }
    }
}

fn usable(s: SolveStatus) -> bool {
    matches!(s, SolveStatus::Optimal | SolveStatus::Inaccurate)
}

/// Copy of `objective` rescaled so that `L_F = 1`, together with `L_F`.
pub fn normalize_objective(objective: &GradientObjective) -> Result<(GradientObjective, f64)> {
    let lf = objective.smoothness();
    if !(lf.is_finite() && lf > 0.0) {
        return Err(PepError::InvalidClass(format!(
            "normalization needs a finite positive smoothness constant, got {lf}"
        )));
    }
    let scale_function = |f: &FunctionClass| match *f {
        FunctionClass::SmoothStronglyConvex { mu, l } => {
            FunctionClass::SmoothStronglyConvex { mu: mu / l, l: 1.0 }
        }
        FunctionClass::Quadratic { mu, l } => FunctionClass::Quadratic { mu: mu / l, l: 1.0 },
        other => other,
    };
    let normalized = match objective {
        GradientObjective::Plain(f) => GradientObjective::Plain(scale_function(f)),
        GradientObjective::Composed { g, m } => {
            let lm = m.norm_bound().unwrap_or(1.0);
            let m = match *m {
                OperatorClass::GeneralBounded { .. } => OperatorClass::GeneralBounded { l: 1.0 },
                OperatorClass::SkewSymmetric { .. } => OperatorClass::SkewSymmetric { l: 1.0 },
                OperatorClass::Symmetric { mu, l } => OperatorClass::Symmetric {
                    mu: mu / lm,
                    l: l / lm,
                },
                OperatorClass::GeneralUnbounded => OperatorClass::GeneralUnbounded,
            };
            GradientObjective::Composed {
                g: scale_function(g),
                m,
            }
        }
    };
    Ok((normalized, lf))
}

/// Worst case of `N` gradient steps `x_{k+1} = x_k - (h / L_F) grad F(x_k)`
/// from `||x_0 - x*|| <= r`, solved in normalized units.
pub fn gradient_worst_case(
    objective: &GradientObjective,
    h: f64,
    n: usize,
    r: f64,
    crit: CriterionSpec,
    backend: &dyn ConicBackend,
    tol: f64,
) -> Result<WorstCase> {
    let (normalized, lf) = normalize_objective(objective)?;
    let traj = build_gradient_method(&normalized, h, n, 1.0)?;
    let mut wc = solve_trajectory(traj, crit, backend, tol)?;
    let scale = match crit {
        CriterionSpec::DistanceLast => r * r,
        CriterionSpec::GradNormLast => lf * lf * r * r,
        _ => lf * r * r,
    };
    wc.scale = scale;
    wc.value *= scale;
    Ok(wc)
}

/// Worst case of Chambolle-Pock, solved in the given units.
pub fn chambolle_pock_worst_case(
    f: FunctionClass,
    g: FunctionClass,
    m: OperatorClass,
    params: &ChambollePockParams,
    crit: CriterionSpec,
    backend: &dyn ConicBackend,
    tol: f64,
) -> Result<WorstCase> {
    let traj = build_chambolle_pock(f, g, m, params)?;
    solve_trajectory(traj, crit, backend, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::{ClarabelBackend, DEFAULT_TOLERANCE};

    fn plain(mu: f64, l: f64) -> GradientObjective {
        GradientObjective::Plain(FunctionClass::SmoothStronglyConvex { mu, l })
    }

    fn gm(obj: &GradientObjective, h: f64, n: usize) -> WorstCase {
        gradient_worst_case(
            obj,
            h,
            n,
            1.0,
            CriterionSpec::ObjectiveGapLast,
            &ClarabelBackend::default(),
            DEFAULT_TOLERANCE,
        )
        .unwrap()
    }

    #[test]
    fn one_step_convex_rate() {
        let wc = gm(&plain(0.0, 1.0), 1.0, 1);
        assert_eq!(wc.status, SolveStatus::Optimal);
        assert!((wc.value - 1.0 / 6.0).abs() < 1e-6, "{}", wc.value);
    }

    #[test]
    fn long_step_hits_quadratic_branch() {
        let wc = gm(&plain(0.0, 1.0), 1.8, 1);
        assert!(
            (wc.value - 0.5 * 0.8f64.powi(2)).abs() < 1e-6,
            "{}",
            wc.value
        );
    }

    #[test]
    fn homogeneity_in_smoothness_and_radius() {
        let (mu, l, r, h, n) = (0.3, 4.0, 2.5, 1.2, 3);
        let normalized = gm(&plain(mu / l, 1.0), h, n).value * l * r * r;
        let traj = build_gradient_method(&plain(mu, l), h / l, n, r).unwrap();
        let raw = solve_trajectory(
            traj,
            CriterionSpec::ObjectiveGapLast,
            &ClarabelBackend::default(),
            DEFAULT_TOLERANCE,
        )
        .unwrap();
        assert!((normalized - raw.value).abs() < 5e-6 * normalized.max(1.0));
    }

    #[test]
    fn worst_case_is_nonincreasing_in_n() {
        let values: Vec<f64> = (1..=4)
            .map(|n| gm(&plain(0.0, 1.0), 1.0, n).value)
            .collect();
        assert!(values.windows(2).all(|w| w[1] <= w[0] + 1e-7), "{values:?}");
    }

    #[test]
    fn identity_operator_recovers_plain_class() {
        let g = FunctionClass::SmoothStronglyConvex { mu: 0.1, l: 1.0 };
        let composed = GradientObjective::Composed {
            g,
            m: OperatorClass::Symmetric { mu: 1.0, l: 1.0 },
        };
        let a = gm(&composed, 1.0, 3).value;
        let b = gm(&GradientObjective::Plain(g), 1.0, 3).value;
        assert!((a - b).abs() < 5e-6, "{a} vs {b}");
    }

    #[test]
    fn quadratic_class_one_step() {
        let obj = GradientObjective::Plain(FunctionClass::Quadratic { mu: 0.0, l: 1.0 });
        let wc = gm(&obj, 1.0, 1);
        assert!((wc.value - 2.0 / 27.0).abs() < 1e-6, "{}", wc.value);
    }

    #[test]
    fn distance_criterion_never_grows() {
        let wc = gradient_worst_case(
            &plain(0.0, 1.0),
            1.0,
            2,
            1.0,
            CriterionSpec::DistanceLast,
            &ClarabelBackend::default(),
            DEFAULT_TOLERANCE,
        )
        .unwrap();
        assert!((wc.value - 1.0).abs() < 1e-5, "{}", wc.value);
    }

    #[test]
    fn unbounded_subgradients_make_chambolle_pock_unbounded() {
        let params = ChambollePockParams {
            tau: 1.0,
            sigma: 1.0,
            n: 2,
            r_x: 1.0,
            r_u: 1.0,
        };
        let wc = chambolle_pock_worst_case(
            FunctionClass::Convex,
            FunctionClass::Convex,
            OperatorClass::GeneralBounded { l: 1.0 },
            &params,
            CriterionSpec::ObjectiveGapLast,
            &ClarabelBackend::default(),
            DEFAULT_TOLERANCE,
        )
        .unwrap();
        assert_eq!(
            wc.status,
            SolveStatus::Unbounded,
            "{} {}",
            wc.result.diagnostics,
            wc.value
        );
    }

    #[test]
    fn best_iterate_is_no_worse_than_last() {
        let params = ChambollePockParams {
            tau: 1.0,
            sigma: 1.0,
            n: 3,
            r_x: 1.0,
            r_u: 1.0,
        };
        let s = FunctionClass::ConvexBoundedSubgradient { s: 1.0 };
        let m = OperatorClass::GeneralBounded { l: 1.0 };
        let backend = ClarabelBackend::default();
        let run = |crit| {
            chambolle_pock_worst_case(s, s, m, &params, crit, &backend, DEFAULT_TOLERANCE).unwrap()
        };
        let last = run(CriterionSpec::ObjectiveGapLast);
        let best = run(CriterionSpec::ObjectiveGapBest);
        assert_eq!(last.status, SolveStatus::Optimal);
        assert_eq!(best.status, SolveStatus::Optimal);
        assert!(
            best.value <= last.value + 1e-6,
            "{} > {}",
            best.value,
            last.value
        );
        assert!(best.value > 0.0);
    }
}
