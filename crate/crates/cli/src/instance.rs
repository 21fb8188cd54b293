//! Worst-case instances of single grid points.

use std::path::{Path, PathBuf};

use linop_pep::reconstruct::{recover_instance, WorstCaseInstance};
use linop_pep::sdp::{ClarabelBackend, SolveStatus};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::run::solve_problem;

/// Replay of a recovered instance against the solver value.
#[derive(Clone, Debug)]
pub struct ReplayReport {
    pub index: usize,
    /// SDP worst case in the problem's units.
    pub sdp_value: f64,
    /// Criterion evaluated on the recovered instance, same units.
    pub replayed_value: f64,
    /// `|replayed - sdp| / (1 + |sdp|)`
    pub relative_gap: f64,
    pub instance: WorstCaseInstance,
    pub path: Option<PathBuf>,
}

impl ReplayReport {
    pub fn summary(&self) -> String {
        let inst = &self.instance;
        format!(
            "point {}: sdp {:.12e}, replayed {:.12e}, relative gap {:e}, operator {} \
             (sigma_max {:e}, residuals {:e} / {:e}), function residual {:e}",
            self.index,
            self.sdp_value,
            self.replayed_value,
            self.relative_gap,
            inst.source.as_str(),
            inst.sigma_max,
            inst.forward_residual,
            inst.adjoint_residual,
            inst.function_residual,
        )
    }
}

/// Solves grid point `index`, recovers a worst-case instance and writes it
/// to `<out>/<name>_point<index>.txt` when `out` is given.
pub fn reconstruct_point(
    config: &ExperimentConfig,
    index: usize,
    tol: f64,
    out: Option<&Path>,
) -> Result<ReplayReport> {
    let points = config.points()?;
    let point = points.get(index).ok_or_else(|| {
        CliError::Config(format!(
            "point {index} out of range (grid has {} points)",
            points.len()
        ))
    })?;
    let problem = point.resolve()?;
    let wc = solve_problem(&problem, point.criterion, tol)?;
    if wc.status != SolveStatus::Optimal {
        return Err(CliError::Pep(linop_pep::PepError::NotOptimal(
            wc.status.as_str().into(),
        )));
    }
    let instance = recover_instance(&wc, &ClarabelBackend::default(), tol)?;
    let replayed_value = instance.replayed_objective * wc.scale;
    let relative_gap = (replayed_value - wc.value).abs() / (1.0 + wc.value.abs());
    let path = match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join(format!("{}_point{index}.txt", config.name));
            instance.export(&path)?;
            Some(path)
        }
        None => None,
    };
    Ok(ReplayReport {
        index,
        sdp_value: wc.value,
        replayed_value,
        relative_gap,
        instance,
        path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use linop_pep::sdp::DEFAULT_TOLERANCE;

    fn config(h: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml(&format!(
            r#"
name = "r"
[[curve]]
label = "C"
criteria = ["last"]
[curve.problem]
method = "gradient"
g = {{ class = "smooth", mu = 0.1, l = 1.0 }}
operator = {{ class = "symmetric", mu = 0.0, l = 1.0 }}
[sweep]
h = {h}
n = [3]
"#
        ))
        .unwrap()
    }

    #[test]
    fn composed_point_replays() {
        let report = reconstruct_point(&config("[1.0]"), 0, DEFAULT_TOLERANCE, None).unwrap();
        assert!(report.relative_gap <= 1e-5, "{}", report.summary());
    }

    #[test]
    fn failed_point_is_an_error() {
        assert!(reconstruct_point(&config("[0.0]"), 0, DEFAULT_TOLERANCE, None).is_err());
        assert!(reconstruct_point(&config("[1.0]"), 5, DEFAULT_TOLERANCE, None).is_err());
    }
}
