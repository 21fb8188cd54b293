//! Conic assembly of performance estimation problems and solver backends.
//!
//! Decision variables are, in order: the upper triangle (column-major) of the
//! Gram matrix of every space, the function values, and the auxiliary
//! scalars. Constraints are laid out as one zero cone for equalities, one
//! nonnegative cone for inequalities and auxiliary signs, then one PSD cone
//! per Gram matrix and per LMI.

use std::collections::BTreeMap;
use std::f64::consts::SQRT_2;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use nalgebra::DMatrix;

use crate::classes::ClassConstraintSet;
use crate::error::{PepError, Result};
use crate::expr::{LmiConstraint, PepBuilder, ScalarExpr, ValueId};
use crate::methods::Trajectory;

/// Objective values above this are reported as unbounded.
pub const UNBOUNDED_THRESHOLD: f64 = 1e9;

/// Trace bounds, relative to the largest constant in the problem data, used
/// to tell an unbounded problem from a numerical failure.
const TRACE_PROBES: [f64; 2] = [1e2, 1e4];
/// Growth of the bounded optimum across `TRACE_PROBES` treated as divergence.
const TRACE_GROWTH: f64 = 3.0;

pub const DEFAULT_TOLERANCE: f64 = 1e-8;

/// Duality-gap tolerance relative to the feasibility tolerance. Interior
/// point iterates on these problems stall with a relative gap near `1e-8`
/// because optimal Gram matrices are low rank.
pub const GAP_TOLERANCE_FACTOR: f64 = 10.0;

/// Solves that stall short of the requested tolerance but within this
/// multiple of it are reported as [`SolveStatus::Inaccurate`].
pub const REDUCED_ACCURACY_FACTOR: f64 = 100.0;

/// Full description of a performance estimation SDP (maximization).
#[derive(Clone, Debug)]
pub struct PepProblem {
    builder: PepBuilder,
    pub equalities: Vec<ScalarExpr>,
    pub inequalities: Vec<ScalarExpr>,
    pub lmis: Vec<LmiConstraint>,
    pub objective: ScalarExpr,
}

impl PepProblem {
    pub fn new(builder: PepBuilder) -> Self {
        Self {
            builder,
            equalities: Vec::new(),
            inequalities: Vec::new(),
            lmis: Vec::new(),
            objective: ScalarExpr::zero(),
        }
    }

    pub fn builder(&self) -> &PepBuilder {
        &self.builder
    }

    pub fn add_constraints(&mut self, set: ClassConstraintSet) {
        self.equalities.extend(set.equalities);
        self.inequalities.extend(set.inequalities);
        self.lmis.extend(set.lmis);
    }

    pub fn add_equality(&mut self, e: ScalarExpr) {
        self.equalities.push(e);
    }

    /// Adds `e <= 0`.
    pub fn add_inequality(&mut self, e: ScalarExpr) {
        self.inequalities.push(e);
    }

    pub fn add_lmi(&mut self, lmi: LmiConstraint) {
        self.lmis.push(lmi);
    }

    pub fn set_objective(&mut self, e: ScalarExpr) {
        self.objective = e;
    }

    /// Side of each Gram block, indexed by space.
    pub fn gram_sides(&self) -> Vec<usize> {
        self.builder
            .spaces()
            .map(|s| self.builder.gram_dim(s))
            .collect()
    }

    fn expressions(&self) -> impl Iterator<Item = &ScalarExpr> + '_ {
        self.equalities
            .iter()
            .chain(&self.inequalities)
            .chain(self.lmis.iter().flat_map(|l| l.rows().iter().flatten()))
            .chain(std::iter::once(&self.objective))
    }

    /// Checks that every expression references declared symbols, and that
    /// Gram entries pair vectors of the same space.
    pub fn validate(&self) -> Result<()> {
        let vectors = self.builder.vectors();
        for e in self.expressions() {
            for &(a, b) in e.gram_terms().keys() {
                let (va, vb) = match (vectors.get(a), vectors.get(b)) {
                    (Some(va), Some(vb)) => (va, vb),
                    _ => {
                        return Err(PepError::DanglingReference(format!(
                            "basis vector pair ({a}, {b})"
                        )))
                    }
                };
                if va.space != vb.space {
                    return Err(PepError::DanglingReference(format!(
                        "cross-space Gram entry ({a}, {b})"
                    )));
                }
            }
            if let Some(k) = e
                .value_terms()
                .keys()
                .find(|k| k.index() >= self.builder.num_values())
            {
                return Err(PepError::DanglingReference(format!("value f{}", k.index())));
            }
            if let Some(k) = e
                .aux_terms()
                .keys()
                .find(|k| k.index() >= self.builder.num_aux())
            {
                return Err(PepError::DanglingReference(format!("aux s{}", k.index())));
            }
        }
        Ok(())
    }

    /// Lowers the problem to `min q'x  s.t.  Ax + s = b, s in K`.
    pub fn to_conic(&self) -> Result<ConicProgram> {
        self.validate()?;
        let layout = VarLayout::new(&self.builder);
        let mut prog = ConicProgram {
            num_vars: layout.num_vars,
            q: vec![0.0; layout.num_vars],
            rows: Vec::new(),
            cols: Vec::new(),
            vals: Vec::new(),
            b: Vec::new(),
            cones: Vec::new(),
        };
        let (obj, _) = layout.linearize(&self.objective);
        for (j, c) in obj {
            prog.q[j] -= c;
        }

        for e in &self.equalities {
            let (row, c) = layout.linearize(e);
            prog.push_row(&row, 1.0, -c);
        }
        prog.push_cone(Cone::Zero(self.equalities.len()));

        let mut nonneg = 0;
        for e in &self.inequalities {
            let (row, c) = layout.linearize(e);
            prog.push_row(&row, 1.0, -c);
            nonneg += 1;
        }
        for k in 0..self.builder.num_aux() {
            prog.push_row(&[(layout.aux_offset + k, 1.0)], -1.0, 0.0);
            nonneg += 1;
        }
        // scalar LMIs are plain inequalities
        for lmi in self.lmis.iter().filter(|l| l.size() == 1) {
            let (row, c) = layout.linearize(lmi.entry(0, 0));
            prog.push_row(&row, -1.0, c);
            nonneg += 1;
        }
        prog.push_cone(Cone::Nonneg(nonneg));

        for (space, &n) in layout.gram_sides.iter().enumerate() {
            if n == 0 {
                continue;
            }
            let off = layout.gram_offset[space];
            for j in 0..n {
                for i in 0..=j {
                    let scale = if i == j { 1.0 } else { SQRT_2 };
                    prog.push_row(&[(off + svec_index(i, j), 1.0)], -scale, 0.0);
                }
            }
            prog.push_cone(Cone::Psd(n));
        }

        let mut forced = Vec::new();
        for lmi in self.lmis.iter().filter(|l| l.size() > 1) {
            let keep = lmi_support(lmi);
            for i in (0..lmi.size()).filter(|i| !keep.contains(i)) {
                forced.extend((0..lmi.size()).filter(|&j| j != i).map(|j| lmi.entry(i, j)));
            }
            for (b, &j) in keep.iter().enumerate() {
                for &i in &keep[..=b] {
                    let scale = if i == j { 1.0 } else { SQRT_2 };
                    let (row, c) = layout.linearize(lmi.entry(i, j));
                    prog.push_row(&row, -scale, scale * c);
                }
            }
            prog.push_cone(Cone::Psd(keep.len()));
        }
        for e in &forced {
            let (row, c) = layout.linearize(e);
            prog.push_row(&row, 1.0, -c);
        }
        prog.push_cone(Cone::Zero(forced.len()));
        Ok(prog)
    }

    /// Solves with `backend` at feasibility/optimality tolerance `tol`.
    pub fn solve(&self, backend: &dyn ConicBackend, tol: f64) -> Result<SolveResult> {
        let prog = self.to_conic()?;
        let sol = backend.solve(&prog, tol)?;
        let layout = VarLayout::new(&self.builder);

        let grams = layout
            .gram_sides
            .iter()
            .enumerate()
            .map(|(space, &n)| {
                let off = layout.gram_offset[space];
                DMatrix::from_fn(n, n, |i, j| sol.x[off + svec_index(i.min(j), i.max(j))])
            })
            .collect();
        let values = sol.x[layout.value_offset..layout.aux_offset].to_vec();
        let aux = sol.x[layout.aux_offset..].to_vec();
        let objective = self.objective_at(&layout, &sol.x);

        let mut status = match sol.status {
            BackendStatus::Solved => SolveStatus::Optimal,
            BackendStatus::AlmostSolved => SolveStatus::Inaccurate,
            BackendStatus::PrimalInfeasible => SolveStatus::Infeasible,
            BackendStatus::DualInfeasible => SolveStatus::Unbounded,
            BackendStatus::Failed(_) => SolveStatus::Inaccurate,
        };
        if matches!(status, SolveStatus::Optimal | SolveStatus::Inaccurate)
            && objective > UNBOUNDED_THRESHOLD
        {
            status = SolveStatus::Unbounded;
        }
        if matches!(sol.status, BackendStatus::Failed(_))
            && self.diverges_under_trace_bounds(&prog, &layout, backend, tol)?
        {
            status = SolveStatus::Unbounded;
        }
        let diagnostics = match &sol.status {
            BackendStatus::Failed(msg) => msg.clone(),
            other => format!("{other:?}"),
        };
        let duals = matches!(status, SolveStatus::Optimal | SolveStatus::Inaccurate)
            .then(|| self.unpack_duals(&prog, &sol.z));

        Ok(SolveResult {
            status,
            objective,
            grams,
            values,
            aux,
            basis: layout.basis,
            duals,
            iterations: sol.iterations,
            solve_time: sol.solve_time,
            diagnostics,
        })
    }

    fn objective_at(&self, layout: &VarLayout, x: &[f64]) -> f64 {
        self.objective.evaluate(
            |a, b| layout.gram_value(x, a, b),
            |k| x[layout.value_offset + k.index()],
            |k| x[layout.aux_offset + k.index()],
        )
    }

    /// Re-solves with `trace(G) <= t` for two widely separated `t`. A
    /// bounded problem gives the same optimum for both once `t` exceeds the
    /// trace of an optimal Gram matrix; an unbounded one keeps growing.
    fn diverges_under_trace_bounds(
        &self,
        prog: &ConicProgram,
        layout: &VarLayout,
        backend: &dyn ConicBackend,
        tol: f64,
    ) -> Result<bool> {
        let diagonal: Vec<(usize, f64)> = layout
            .gram_sides
            .iter()
            .enumerate()
            .flat_map(|(space, &n)| {
                (0..n).map(move |i| (layout.gram_offset[space] + svec_index(i, i), 1.0))
            })
            .collect();
        let unit = prog.b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut values = Vec::with_capacity(TRACE_PROBES.len());
        for t in TRACE_PROBES.map(|t| t * unit) {
            let mut bounded = prog.clone();
            bounded.push_row(&diagonal, 1.0, t);
            bounded.push_cone(Cone::Nonneg(1));
            let sol = backend.solve(&bounded, tol)?;
            if !matches!(
                sol.status,
                BackendStatus::Solved | BackendStatus::AlmostSolved
            ) {
                return Ok(false);
            }
            values.push(self.objective_at(layout, &sol.x));
        }
        let (small, large) = (values[0], values[1]);
        Ok(large > TRACE_GROWTH * small.abs().max(1.0))
    }

    fn unpack_duals(&self, prog: &ConicProgram, z: &[f64]) -> DualMultipliers {
        let n_eq = self.equalities.len();
        let n_ineq = self.inequalities.len();
        let equalities = z[..n_eq].to_vec();
        let inequalities = z[n_eq..n_eq + n_ineq].to_vec();
        let n_aux = self.builder.num_aux();
        let mut scalar_lmi = z[n_eq + n_ineq + n_aux..].iter();
        let mut offset = 0;
        let mut psd = Vec::new();
        for cone in &prog.cones {
            match *cone {
                Cone::Zero(k) | Cone::Nonneg(k) => offset += k,
                Cone::Psd(n) => {
                    psd.push(unpack_svec(&z[offset..offset + n * (n + 1) / 2], n));
                    offset += n * (n + 1) / 2;
                }
            }
        }
        let mut psd_iter = psd.into_iter();
        let grams = self
            .gram_sides()
            .iter()
            .map(|&n| {
                if n > 0 {
                    psd_iter.next().unwrap_or_else(|| DMatrix::zeros(n, n))
                } else {
                    DMatrix::zeros(0, 0)
                }
            })
            .collect();
        let lmis = self
            .lmis
            .iter()
            .map(|l| {
                if l.size() == 1 {
                    return DMatrix::from_element(1, 1, scalar_lmi.next().copied().unwrap_or(0.0));
                }
                let keep = lmi_support(l);
                let mut full = DMatrix::zeros(l.size(), l.size());
                if keep.is_empty() {
                    return full;
                }
                if let Some(reduced) = psd_iter.next() {
                    for (a, &i) in keep.iter().enumerate() {
                        for (b, &j) in keep.iter().enumerate() {
                            full[(i, j)] = reduced[(a, b)];
                        }
                    }
                }
                full
            })
            .collect();
        DualMultipliers {
            equalities,
            inequalities,
            lmis,
            grams,
        }
    }
}

/// Builds the SDP of a trajectory: every class constraint and initial
/// condition, with `objective` to maximize.
pub fn assemble(traj: &mut Trajectory, objective: &ScalarExpr) -> Result<PepProblem> {
    let set = traj.constraints()?;
    let mut problem = PepProblem::new(traj.builder.clone());
    problem.add_constraints(set);
    problem.set_objective(objective.clone());
    problem.validate()?;
    Ok(problem)
}

/// Indices of an LMI whose diagonal entry is not identically zero. A PSD
/// matrix with a zero diagonal entry has a zero row there, so the other
/// indices become equalities.
fn lmi_support(lmi: &LmiConstraint) -> Vec<usize> {
    (0..lmi.size())
        .filter(|&i| !lmi.entry(i, i).is_zero())
        .collect()
}

/// Index of `(i, j)`, `i <= j`, in the column-major upper triangle.
pub(crate) fn svec_index(i: usize, j: usize) -> usize {
    j * (j + 1) / 2 + i
}

fn unpack_svec(v: &[f64], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| {
        let k = svec_index(i.min(j), i.max(j));
        if i == j {
            v[k]
        } else {
            v[k] / SQRT_2
        }
    })
}

#[derive(Clone, Debug)]
struct VarLayout {
    gram_sides: Vec<usize>,
    gram_offset: Vec<usize>,
    /// basis id -> (space index, position in that space's Gram block)
    basis: Vec<(usize, usize)>,
    value_offset: usize,
    aux_offset: usize,
    num_vars: usize,
}

impl VarLayout {
    fn new(builder: &PepBuilder) -> Self {
        let mut counts = vec![0; builder.num_spaces()];
        let basis = builder
            .vectors()
            .iter()
            .map(|v| {
                let s = v.space.index();
                counts[s] += 1;
                (s, counts[s] - 1)
            })
            .collect();
        let mut gram_offset = Vec::with_capacity(counts.len());
        let mut next = 0;
        for &n in &counts {
            gram_offset.push(next);
            next += n * (n + 1) / 2;
        }
        let value_offset = next;
        let aux_offset = value_offset + builder.num_values();
        Self {
            gram_sides: counts,
            gram_offset,
            basis,
            value_offset,
            aux_offset,
            num_vars: aux_offset + builder.num_aux(),
        }
    }

    fn gram_var(&self, a: usize, b: usize) -> usize {
        let (space, i) = self.basis[a];
        let (_, j) = self.basis[b];
        self.gram_offset[space] + svec_index(i.min(j), i.max(j))
    }

    fn gram_value(&self, x: &[f64], a: usize, b: usize) -> f64 {
        x[self.gram_var(a, b)]
    }

    /// Sparse coefficients and constant of an affine expression.
    fn linearize(&self, e: &ScalarExpr) -> (Vec<(usize, f64)>, f64) {
        let mut row: BTreeMap<usize, f64> = BTreeMap::new();
        for (&(a, b), &c) in e.gram_terms() {
            *row.entry(self.gram_var(a, b)).or_insert(0.0) += c;
        }
        for (&k, &c) in e.value_terms() {
            *row.entry(self.value_offset + k.index()).or_insert(0.0) += c;
        }
        for (&k, &c) in e.aux_terms() {
            *row.entry(self.aux_offset + k.index()).or_insert(0.0) += c;
        }
        (row.into_iter().collect(), e.constant_term())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cone {
    Zero(usize),
    Nonneg(usize),
    /// PSD cone on `n x n` matrices in scaled upper-triangle form.
    Psd(usize),
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Zero(k) | Cone::Nonneg(k) => k,
            Cone::Psd(n) => n * (n + 1) / 2,
        }
    }
}

/// Standard-form data `min q'x  s.t.  Ax + s = b, s in K` with `A` in
/// triplet form.
#[derive(Clone, Debug, Default)]
pub struct ConicProgram {
    pub num_vars: usize,
    pub q: Vec<f64>,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
    pub b: Vec<f64>,
    pub cones: Vec<Cone>,
}

impl ConicProgram {
    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    pub(crate) fn push_row(&mut self, coeffs: &[(usize, f64)], scale: f64, rhs: f64) {
        let r = self.b.len();
        for &(j, c) in coeffs {
            self.rows.push(r);
            self.cols.push(j);
            self.vals.push(scale * c);
        }
        self.b.push(rhs);
    }

    pub(crate) fn push_cone(&mut self, cone: Cone) {
        if cone.dim() > 0 {
            self.cones.push(cone);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BackendStatus {
    Solved,
    AlmostSolved,
    PrimalInfeasible,
    DualInfeasible,
    Failed(String),
}

#[derive(Clone, Debug)]
pub struct ConicSolution {
    pub status: BackendStatus,
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    pub z: Vec<f64>,
    pub iterations: u32,
    pub solve_time: f64,
}

/// A conic solver able to handle zero, nonnegative and PSD cones.
pub trait ConicBackend: Sync {
    fn name(&self) -> &str;

    fn supports_psd(&self) -> bool;

    fn solve(&self, prog: &ConicProgram, tol: f64) -> Result<ConicSolution>;
}

/// Interior-point backend built on Clarabel.
#[derive(Clone, Debug)]
pub struct ClarabelBackend {
    pub max_iter: u32,
    pub verbose: bool,
}

impl Default for ClarabelBackend {
    fn default() -> Self {
        Self {
            max_iter: 400,
            verbose: false,
        }
    }
}

/// Settings tried in order until one run reaches full accuracy. Stronger
/// static regularization and shorter steps help when the optimal Gram
/// matrices are rank deficient.
const RETRY_PROFILES: [(f64, f64); 4] = [(1e-8, 0.99), (1e-6, 0.95), (1e-5, 0.99), (1e-7, 0.9)];

impl ClarabelBackend {
    fn solve_once(
        &self,
        prog: &ConicProgram,
        a: &CscMatrix<f64>,
        cones: &[SupportedConeT<f64>],
        tol: f64,
        (regularization, step): (f64, f64),
    ) -> Result<ConicSolution> {
        let n = prog.num_vars;
        let p = CscMatrix::<f64>::zeros((n, n));
        let settings = DefaultSettings {
            verbose: self.verbose,
            max_iter: self.max_iter,
            tol_gap_abs: GAP_TOLERANCE_FACTOR * tol,
            tol_gap_rel: GAP_TOLERANCE_FACTOR * tol,
            tol_feas: tol,
            reduced_tol_gap_abs: REDUCED_ACCURACY_FACTOR * tol,
            reduced_tol_gap_rel: REDUCED_ACCURACY_FACTOR * tol,
            reduced_tol_feas: REDUCED_ACCURACY_FACTOR * tol,
            static_regularization_constant: regularization,
            max_step_fraction: step,
            ..DefaultSettings::default()
        };
        let mut solver = DefaultSolver::new(&p, &prog.q, a, &prog.b, cones, settings)
            .map_err(|e| PepError::Backend(e.to_string()))?;
        solver.solve();
        let sol = &solver.solution;
        let status = match sol.status {
            SolverStatus::Solved => BackendStatus::Solved,
            SolverStatus::AlmostSolved => BackendStatus::AlmostSolved,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                BackendStatus::PrimalInfeasible
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                BackendStatus::DualInfeasible
            }
            other => BackendStatus::Failed(format!("{other:?}")),
        };
        Ok(ConicSolution {
            status,
            x: sol.x.clone(),
            s: sol.s.clone(),
            z: sol.z.clone(),
            iterations: sol.iterations,
            solve_time: sol.solve_time,
        })
    }
}

impl ConicBackend for ClarabelBackend {
    fn name(&self) -> &str {
        "clarabel"
    }

    fn supports_psd(&self) -> bool {
        true
    }

    fn solve(&self, prog: &ConicProgram, tol: f64) -> Result<ConicSolution> {
        let a = CscMatrix::new_from_triplets(
            prog.num_rows(),
            prog.num_vars,
            prog.rows.clone(),
            prog.cols.clone(),
            prog.vals.clone(),
        );
        let cones: Vec<SupportedConeT<f64>> = prog
            .cones
            .iter()
            .map(|c| match *c {
                Cone::Zero(k) => SupportedConeT::ZeroConeT(k),
                Cone::Nonneg(k) => SupportedConeT::NonnegativeConeT(k),
                Cone::Psd(k) => SupportedConeT::PSDTriangleConeT(k),
            })
            .collect();
        let mut first: Option<ConicSolution> = None;
        let mut elapsed = 0.0;
        let mut iterations = 0;
        for profile in RETRY_PROFILES {
            let mut sol = self.solve_once(prog, &a, &cones, tol, profile)?;
            elapsed += sol.solve_time;
            iterations += sol.iterations;
            let settled = matches!(
                sol.status,
                BackendStatus::Solved
                    | BackendStatus::PrimalInfeasible
                    | BackendStatus::DualInfeasible
            );
            if settled {
                sol.solve_time = elapsed;
                sol.iterations = iterations;
                return Ok(sol);
            }
            let keep = match &first {
                None => true,
                Some(prev) => {
                    matches!(prev.status, BackendStatus::Failed(_))
                        && sol.status == BackendStatus::AlmostSolved
                }
            };
            if keep {
                first = Some(sol);
            }
        }
        let mut sol = first.expect("at least one profile");
        sol.solve_time = elapsed;
        sol.iterations = iterations;
        Ok(sol)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Unbounded,
    Infeasible,
    Inaccurate,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Inaccurate => "inaccurate",
        }
    }
}

/// Lagrange multipliers, aligned with the constraint lists of the problem.
#[derive(Clone, Debug, PartialEq)]
pub struct DualMultipliers {
    pub equalities: Vec<f64>,
    /// Nonnegative multipliers of `e <= 0`.
    pub inequalities: Vec<f64>,
    /// PSD multipliers of the LMIs.
    pub lmis: Vec<DMatrix<f64>>,
    /// PSD multipliers of the Gram blocks, indexed by space.
    pub grams: Vec<DMatrix<f64>>,
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub objective: f64,
    /// Gram matrix of every space, indexed by `SpaceId::index`.
    pub grams: Vec<DMatrix<f64>>,
    pub values: Vec<f64>,
    pub aux: Vec<f64>,
    basis: Vec<(usize, usize)>,
    duals: Option<DualMultipliers>,
    pub iterations: u32,
    pub solve_time: f64,
    pub diagnostics: String,
}

impl SolveResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn value(&self, id: ValueId) -> f64 {
        self.values[id.index()]
    }

    pub fn gram_entry(&self, a: usize, b: usize) -> f64 {
        let (space, i) = self.basis[a];
        let (_, j) = self.basis[b];
        self.grams[space][(i, j)]
    }

    /// Position of basis vector `id` inside its space's Gram block.
    pub fn gram_position(&self, id: usize) -> (usize, usize) {
        self.basis[id]
    }

    /// Value of an expression at the primal solution.
    pub fn eval(&self, e: &ScalarExpr) -> f64 {
        e.evaluate(
            |a, b| self.gram_entry(a, b),
            |k| self.values[k.index()],
            |k| self.aux[k.index()],
        )
    }
}

/// Multipliers of an optimal (or near-optimal) solve.
pub fn dual_multipliers(result: &SolveResult) -> Result<&DualMultipliers> {
    result
        .duals
        .as_ref()
        .ok_or_else(|| PepError::NoDual(format!("solve status {}", result.status.as_str())))
}
