//! Optimal step sizes of the gradient method.

use std::collections::BTreeSet;

use linop_pep::classes::{FunctionClass, OperatorClass};
use linop_pep::closedform::{
    composed_branches, optimal_step, smooth_convex_branches, RateParams, StepClass,
};
use linop_pep::methods::GradientObjective;

use crate::config::{ExperimentConfig, Problem};
use crate::error::Result;
use crate::output::format_number;

#[derive(Clone, Debug, PartialEq)]
pub struct StepRow {
    pub label: String,
    /// Normalized strong convexity of `f` or `g`.
    pub mu: f64,
    /// Normalized lower spectral bound of the operator, for composed curves.
    pub mu_m: Option<f64>,
    pub n: usize,
    pub h_star: f64,
    /// Normalized rate at `h_star`.
    pub rate: f64,
    /// `|huber - quadratic|` at `h_star`.
    pub branch_gap: f64,
}

fn step_class(objective: &GradientObjective) -> Option<StepClass> {
    match *objective {
        GradientObjective::Plain(FunctionClass::SmoothStronglyConvex { mu, l }) => {
            Some(StepClass::Plain { mu_f: mu / l })
        }
        GradientObjective::Composed {
            g: FunctionClass::SmoothStronglyConvex { mu, l },
            m,
        } => {
            let mu_m = match m {
                OperatorClass::Symmetric { mu: lo, l: hi } if lo >= 0.0 => lo / hi,
                OperatorClass::GeneralBounded { .. } => 0.0,
                _ => return None,
            };
            Some(StepClass::Composed { mu_g: mu / l, mu_m })
        }
        _ => None,
    }
}

/// Optimal step of every distinct (curve, `mu_g`, `mu_m`, `N`) in the grid
/// whose class has a closed form. The `h` axis is ignored.
pub fn optimal_steps(config: &ExperimentConfig) -> Result<Vec<StepRow>> {
    let mut seen = BTreeSet::new();
    let mut rows = Vec::new();
    for point in config.points()? {
        let Problem::Gradient { objective, n, .. } = point.resolve()? else {
            continue;
        };
        let Some(class) = step_class(&objective) else {
            continue;
        };
        let key = (point.label.clone(), format!("{class:?}"), n);
        if !seen.insert(key) {
            continue;
        }
        let h_star = optimal_step(class, n)?;
        let (mu, mu_m, branches) = match class {
            StepClass::Plain { mu_f } => (mu_f, None, smooth_convex_branches(mu_f, h_star, n)?),
            StepClass::Composed { mu_g, mu_m } => (
                mu_g,
                Some(mu_m),
                composed_branches(&RateParams {
                    mu_g,
                    mu_m,
                    h: h_star,
                    n,
                })?,
            ),
        };
        rows.push(StepRow {
            label: point.label.clone(),
            mu,
            mu_m,
            n,
            h_star,
            rate: branches.value(),
            branch_gap: (branches.huber.unwrap_or(0.0) - branches.quadratic).abs(),
        });
    }
    Ok(rows)
}

pub fn write_steps<W: std::io::Write>(rows: &[StepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["label", "mu", "mu_m", "n", "h_star", "rate", "branch_gap"])?;
    for r in rows {
        w.write_record([
            r.label.clone(),
            format_number(r.mu),
            r.mu_m.map(format_number).unwrap_or_default(),
            r.n.to_string(),
            format_number(r.h_star),
            format_number(r.rate),
            format_number(r.branch_gap),
        ])?;
    }
    w.flush()?;
    Ok(())
}
