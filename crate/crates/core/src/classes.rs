//! Interpolation conditions for function and linear-operator classes.
//!
//! Each generator turns a list of evaluation points into a
//! [`ClassConstraintSet`]: scalar equalities (`e = 0`), scalar inequalities
//! (`e <= 0`) and LMIs on Gram entries. The conditions are necessary and
//! sufficient for the points to be interpolated by a member of the class.

use nalgebra::DMatrix;

use crate::linalg::SymmetricEigen;

use crate::error::{PepError, Result};
use crate::expr::{
    dot, lmi_block, sqnorm, Assignment, AuxId, LmiConstraint, PepBuilder, ScalarExpr, SpaceId,
    SymbolicVector,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FunctionClass {
    /// `L`-smooth `mu`-strongly convex; `l = f64::INFINITY` is allowed.
    SmoothStronglyConvex {
        mu: f64,
        l: f64,
    },
    Convex,
    /// Convex with subgradient norms bounded by `s`.
    ConvexBoundedSubgradient {
        s: f64,
    },
    /// Homogeneous quadratics `x^T Q x / 2` with `mu I <= Q <= L I`.
    Quadratic {
        mu: f64,
        l: f64,
    },
}

impl FunctionClass {
    pub fn validate(&self) -> Result<()> {
        match *self {
            FunctionClass::SmoothStronglyConvex { mu, l } => {
                if !(mu >= 0.0) || !(mu <= l) || l.is_nan() {
                    return Err(PepError::InvalidClass(format!(
                        "smooth strongly convex needs 0 <= mu <= L, got mu={mu}, L={l}"
                    )));
                }
            }
            FunctionClass::Convex => {}
            FunctionClass::ConvexBoundedSubgradient { s } => {
                if !(s >= 0.0) {
                    return Err(PepError::InvalidClass(format!(
                        "subgradient bound must be >= 0, got {s}"
                    )));
                }
            }
            FunctionClass::Quadratic { mu, l } => {
                if !mu.is_finite() || !l.is_finite() || mu > l {
                    return Err(PepError::InvalidClass(format!(
                        "quadratic class needs -inf < mu <= L < inf, got mu={mu}, L={l}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Whether the class is closed under `f(x - a) + c`, so that a minimizer
    /// can be placed at the origin with value zero.
    pub fn is_translation_invariant(&self) -> bool {
        !matches!(self, FunctionClass::Quadratic { .. })
    }

    /// Smoothness constant, infinite for nonsmooth classes.
    pub fn smoothness(&self) -> f64 {
        match *self {
            FunctionClass::SmoothStronglyConvex { l, .. } | FunctionClass::Quadratic { l, .. } => l,
            FunctionClass::Convex | FunctionClass::ConvexBoundedSubgradient { .. } => f64::INFINITY,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OperatorClass {
    /// `sigma_max(M) <= l`.
    GeneralBounded { l: f64 },
    /// Symmetric with spectrum in `[mu, l]`.
    Symmetric { mu: f64, l: f64 },
    /// Skew-symmetric with `sigma_max(M) <= l`.
    SkewSymmetric { l: f64 },
    /// Arbitrary singular values; allocates an auxiliary `s = L^2`.
    GeneralUnbounded,
}

impl OperatorClass {
    pub fn validate(&self) -> Result<()> {
        match *self {
            OperatorClass::GeneralBounded { l } | OperatorClass::SkewSymmetric { l } => {
                if !(l >= 0.0) || !l.is_finite() {
                    return Err(PepError::InvalidClass(format!(
                        "operator bound must be finite and >= 0, got {l}"
                    )));
                }
            }
            OperatorClass::Symmetric { mu, l } => {
                if !mu.is_finite() || !l.is_finite() || mu > l {
                    return Err(PepError::InvalidClass(format!(
                        "symmetric operator needs finite mu <= L, got mu={mu}, L={l}"
                    )));
                }
            }
            OperatorClass::GeneralUnbounded => {}
        }
        Ok(())
    }

    /// Whether inputs and outputs share one space (`M` square and acting on
    /// a single space).
    pub fn is_square(&self) -> bool {
        matches!(
            self,
            OperatorClass::Symmetric { .. } | OperatorClass::SkewSymmetric { .. }
        )
    }

    /// Upper bound on `sigma_max`, if any.
    pub fn norm_bound(&self) -> Option<f64> {
        match *self {
            OperatorClass::GeneralBounded { l } | OperatorClass::SkewSymmetric { l } => Some(l),
            OperatorClass::Symmetric { mu, l } => Some(mu.abs().max(l.abs())),
            OperatorClass::GeneralUnbounded => None,
        }
    }
}

/// Triplet `(x, g, f)` sampled from a function.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionPoint {
    pub x: SymbolicVector,
    pub g: SymbolicVector,
    pub f: ScalarExpr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// `output = M input`.
    Forward,
    /// `output = M^T input`.
    Adjoint,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OperatorPoint {
    pub direction: Direction,
    pub input: SymbolicVector,
    pub output: SymbolicVector,
}

impl OperatorPoint {
    pub fn forward(input: SymbolicVector, output: SymbolicVector) -> Self {
        Self {
            direction: Direction::Forward,
            input,
            output,
        }
    }

    pub fn adjoint(input: SymbolicVector, output: SymbolicVector) -> Self {
        Self {
            direction: Direction::Adjoint,
            input,
            output,
        }
    }
}

/// Constraints produced by a class: `equalities[k] = 0`,
/// `inequalities[k] <= 0`, every LMI PSD.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClassConstraintSet {
    pub equalities: Vec<ScalarExpr>,
    pub inequalities: Vec<ScalarExpr>,
    pub lmis: Vec<LmiConstraint>,
    pub aux_vars: Vec<AuxId>,
}

/// Worst violation of a constraint set under a concrete assignment.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Violation {
    /// max |e| over equalities
    pub equality: f64,
    /// max(e, 0) over inequalities
    pub inequality: f64,
    /// max(-lambda_min, 0) over LMIs
    pub lmi: f64,
}

impl Violation {
    pub fn max(&self) -> f64 {
        self.equality.max(self.inequality).max(self.lmi)
    }
}

impl ClassConstraintSet {
    pub fn extend(&mut self, other: ClassConstraintSet) {
        self.equalities.extend(other.equalities);
        self.inequalities.extend(other.inequalities);
        self.lmis.extend(other.lmis);
        self.aux_vars.extend(other.aux_vars);
    }

    fn push_eq(&mut self, e: ScalarExpr) {
        if !e.is_zero() {
            self.equalities.push(e);
        }
    }

    pub fn violation(&self, asg: &Assignment) -> Violation {
        let equality = self
            .equalities
            .iter()
            .map(|e| asg.eval(e).abs())
            .fold(0.0, f64::max);
        let inequality = self
            .inequalities
            .iter()
            .map(|e| asg.eval(e).max(0.0))
            .fold(0.0, f64::max);
        let lmi = self
            .lmis
            .iter()
            .map(|l| {
                let n = l.size();
                let m = DMatrix::from_fn(n, n, |i, j| asg.eval(l.entry(i, j)));
                let min = SymmetricEigen::new(m).eigenvalues.min();
                (-min).max(0.0)
            })
            .fold(0.0, f64::max);
        Violation {
            equality,
            inequality,
            lmi,
        }
    }
}

fn square_lmi(n: usize, entry: impl Fn(usize, usize) -> ScalarExpr) -> Result<LmiConstraint> {
    lmi_block(
        (0..n)
            .map(|i| (0..n).map(|j| entry(i, j)).collect())
            .collect(),
    )
}

fn check_space(v: &SymbolicVector, space: SpaceId, what: &str) -> Result<()> {
    if v.space() != space {
        return Err(PepError::SpaceMismatch {
            left: format!("{what} in #{}", v.space().index()),
            right: format!("#{}", space.index()),
        });
    }
    Ok(())
}

fn check_function_points(points: &[FunctionPoint]) -> Result<()> {
    if let Some(p0) = points.first() {
        let space = p0.x.space();
        for p in points {
            check_space(&p.x, space, "point")?;
            check_space(&p.g, space, "gradient")?;
        }
    }
    Ok(())
}

/// Vector identity `d = 0` written as `<d, e_k> = 0` for every basis vector
/// in the support of `d` (which forces `||d||^2 = 0`).
fn vector_zero(d: &SymbolicVector) -> Vec<ScalarExpr> {
    d.terms()
        .keys()
        .map(|&k| {
            d.terms()
                .iter()
                .map(|(&j, &c)| ScalarExpr::gram_entry(j, k, c))
                .fold(ScalarExpr::zero(), |acc, e| acc + e)
        })
        .collect()
}

/// Smooth strongly convex interpolation, one inequality per ordered pair:
/// `f_j - f_i + <g_j, x_i - x_j> + (||g_i - g_j||^2 / L + mu ||x_i - x_j||^2
///  - 2 mu/L <g_i - g_j, x_i - x_j>) / (2 (1 - mu/L)) <= 0`.
///
/// `L = inf` uses the limit `f_j - f_i + <g_j, x_i - x_j> + mu/2 ||x_i - x_j||^2 <= 0`;
/// `mu = L` uses the quadratic limit (affine gradient, exact value identity).
pub fn smooth_convex_conditions(
    mu: f64,
    l: f64,
    points: &[FunctionPoint],
) -> Result<ClassConstraintSet> {
    FunctionClass::SmoothStronglyConvex { mu, l }.validate()?;
    check_function_points(points)?;
    let mut set = ClassConstraintSet::default();
    let n = points.len();
    if l.is_finite() && mu == l {
        for i in 0..n {
            for j in (i + 1)..n {
                let (pi, pj) = (&points[i], &points[j]);
                let dx = &pi.x - &pj.x;
                let d = &(&pi.g - &pj.g) - &(mu * &dx);
                for e in vector_zero(&d) {
                    set.push_eq(e);
                }
                let e = &(&pi.f - &pj.f) - &(dot(&pj.g, &dx) + (0.5 * l) * sqnorm(&dx));
                set.push_eq(e);
            }
        }
        return Ok(set);
    }
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (pi, pj) = (&points[i], &points[j]);
            let dx = &pi.x - &pj.x;
            let lin = &(&pj.f - &pi.f) + &dot(&pj.g, &dx);
            let quad = if l.is_infinite() {
                (0.5 * mu) * sqnorm(&dx)
            } else {
                let dg = &pi.g - &pj.g;
                let q = (1.0 / l) * sqnorm(&dg) + mu * sqnorm(&dx) - (2.0 * mu / l) * dot(&dg, &dx);
                (1.0 / (2.0 * (1.0 - mu / l))) * q
            };
            set.inequalities.push(lin + quad);
        }
    }
    Ok(set)
}

/// Convex interpolation `f_j - f_i + <g_j, x_i - x_j> <= 0`, plus
/// `||g_i||^2 <= S^2` when a subgradient bound is given.
pub fn convex_bounded_subgradient_conditions(
    bound: Option<f64>,
    points: &[FunctionPoint],
) -> Result<ClassConstraintSet> {
    if let Some(s) = bound {
        FunctionClass::ConvexBoundedSubgradient { s }.validate()?;
    }
    check_function_points(points)?;
    let mut set = ClassConstraintSet::default();
    for (i, pi) in points.iter().enumerate() {
        for (j, pj) in points.iter().enumerate() {
            if i != j {
                let dx = &pi.x - &pj.x;
                set.inequalities.push(&(&pj.f - &pi.f) + &dot(&pj.g, &dx));
            }
        }
    }
    if let Some(s) = bound {
        for p in points {
            set.inequalities
                .push(sqnorm(&p.g) - ScalarExpr::constant(s * s));
        }
    }
    Ok(set)
}

/// Homogeneous quadratic interpolation: symmetric-operator conditions on the
/// pairs `(x_i, g_i)` plus `f_i = <x_i, g_i> / 2`.
pub fn quadratic_conditions(
    mu: f64,
    l: f64,
    points: &[FunctionPoint],
) -> Result<ClassConstraintSet> {
    FunctionClass::Quadratic { mu, l }.validate()?;
    check_function_points(points)?;
    let pairs: Vec<_> = points
        .iter()
        .map(|p| OperatorPoint::forward(p.x.clone(), p.g.clone()))
        .collect();
    let mut set = operator_symmetric_conditions(mu, l, &pairs)?;
    for p in points {
        set.push_eq(&p.f - &(0.5 * dot(&p.x, &p.g)));
    }
    Ok(set)
}

/// Dispatches to the generator of `class`.
pub fn function_conditions(
    class: &FunctionClass,
    points: &[FunctionPoint],
) -> Result<ClassConstraintSet> {
    match *class {
        FunctionClass::SmoothStronglyConvex { mu, l } => smooth_convex_conditions(mu, l, points),
        FunctionClass::Convex => convex_bounded_subgradient_conditions(None, points),
        FunctionClass::ConvexBoundedSubgradient { s } => {
            convex_bounded_subgradient_conditions(Some(s), points)
        }
        FunctionClass::Quadratic { mu, l } => quadratic_conditions(mu, l, points),
    }
}

/// Splits points into `(X, Y)` and `(U, V)` columns, checking that forward
/// pairs map input space to output space and adjoint pairs the reverse.
fn split_rectangular(
    points: &[OperatorPoint],
) -> Result<(Vec<&OperatorPoint>, Vec<&OperatorPoint>)> {
    let fwd: Vec<_> = points
        .iter()
        .filter(|p| p.direction == Direction::Forward)
        .collect();
    let adj: Vec<_> = points
        .iter()
        .filter(|p| p.direction == Direction::Adjoint)
        .collect();
    let (n_space, m_space) = match (fwd.first(), adj.first()) {
        (Some(p), _) => (p.input.space(), p.output.space()),
        (None, Some(p)) => (p.output.space(), p.input.space()),
        (None, None) => return Ok((fwd, adj)),
    };
    for p in &fwd {
        check_space(&p.input, n_space, "forward input")?;
        check_space(&p.output, m_space, "forward output")?;
    }
    for p in &adj {
        check_space(&p.input, m_space, "adjoint input")?;
        check_space(&p.output, n_space, "adjoint output")?;
    }
    Ok((fwd, adj))
}

/// `X^T V = Y^T U` entrywise.
fn coupling_equalities(
    set: &mut ClassConstraintSet,
    fwd: &[&OperatorPoint],
    adj: &[&OperatorPoint],
) {
    for f in fwd {
        for a in adj {
            set.push_eq(dot(&f.input, &a.output) - dot(&f.output, &a.input));
        }
    }
}

/// `sigma_max(M) <= L`: `X^T V = Y^T U`, `L^2 X^T X - Y^T Y >= 0`,
/// `L^2 U^T U - V^T V >= 0`.
pub fn operator_general_conditions(l: f64, points: &[OperatorPoint]) -> Result<ClassConstraintSet> {
    OperatorClass::GeneralBounded { l }.validate()?;
    let (fwd, adj) = split_rectangular(points)?;
    let mut set = ClassConstraintSet::default();
    coupling_equalities(&mut set, &fwd, &adj);
    let l2 = l * l;
    for group in [&fwd, &adj] {
        if !group.is_empty() {
            set.lmis.push(square_lmi(group.len(), |i, j| {
                l2 * dot(&group[i].input, &group[j].input) - dot(&group[i].output, &group[j].output)
            })?);
        }
    }
    Ok(set)
}

/// Pairs `(x, Qx)` for a square class; adjoint points are mapped through
/// `Q^T = sign * Q`.
fn square_pairs(
    points: &[OperatorPoint],
    adjoint_sign: f64,
) -> Result<Vec<(SymbolicVector, SymbolicVector)>> {
    let pairs: Vec<_> = points
        .iter()
        .map(|p| match p.direction {
            Direction::Forward => (p.input.clone(), p.output.clone()),
            Direction::Adjoint => (p.input.clone(), p.output.scaled(adjoint_sign)),
        })
        .collect();
    if let Some((x0, _)) = pairs.first() {
        let space = x0.space();
        for (x, y) in &pairs {
            check_space(x, space, "input")?;
            check_space(y, space, "output")?;
        }
    }
    Ok(pairs)
}

/// Symmetric spectrum in `[mu, L]`: `X^T Y = Y^T X` and the symmetric part of
/// `(Y - mu X)^T (L X - Y)` PSD.
pub fn operator_symmetric_conditions(
    mu: f64,
    l: f64,
    points: &[OperatorPoint],
) -> Result<ClassConstraintSet> {
    OperatorClass::Symmetric { mu, l }.validate()?;
    let pairs = square_pairs(points, 1.0)?;
    let mut set = ClassConstraintSet::default();
    for i in 0..pairs.len() {
        for j in (i + 1)..pairs.len() {
            set.push_eq(dot(&pairs[i].0, &pairs[j].1) - dot(&pairs[i].1, &pairs[j].0));
        }
    }
    if !pairs.is_empty() {
        let low: Vec<_> = pairs.iter().map(|(x, y)| y - &(mu * x)).collect();
        let high: Vec<_> = pairs.iter().map(|(x, y)| &(l * x) - y).collect();
        set.lmis.push(square_lmi(pairs.len(), |i, j| {
            0.5 * (dot(&low[i], &high[j]) + dot(&high[i], &low[j]))
        })?);
    }
    Ok(set)
}

/// Skew-symmetric with `sigma_max <= L`: `X^T Y = -Y^T X` (diagonal
/// included) and `L^2 X^T X - Y^T Y >= 0`.
pub fn operator_skew_conditions(l: f64, points: &[OperatorPoint]) -> Result<ClassConstraintSet> {
    OperatorClass::SkewSymmetric { l }.validate()?;
    let pairs = square_pairs(points, -1.0)?;
    let mut set = ClassConstraintSet::default();
    for i in 0..pairs.len() {
        for j in i..pairs.len() {
            set.push_eq(dot(&pairs[i].0, &pairs[j].1) + dot(&pairs[i].1, &pairs[j].0));
        }
    }
    if !pairs.is_empty() {
        let l2 = l * l;
        set.lmis.push(square_lmi(pairs.len(), |i, j| {
            l2 * dot(&pairs[i].0, &pairs[j].0) - dot(&pairs[i].1, &pairs[j].1)
        })?);
    }
    Ok(set)
}

/// Unbounded singular values: `X^T V = Y^T U` and, with an auxiliary
/// `s = L^2`, `[[X^T X, Y^T Y], [Y^T Y, s I]] >= 0` and the same for `(U, V)`.
pub fn operator_unbounded_conditions(
    builder: &mut PepBuilder,
    points: &[OperatorPoint],
) -> Result<ClassConstraintSet> {
    let (fwd, adj) = split_rectangular(points)?;
    let mut set = ClassConstraintSet::default();
    coupling_equalities(&mut set, &fwd, &adj);
    if fwd.is_empty() && adj.is_empty() {
        return Ok(set);
    }
    let s = builder.declare_aux("operator norm squared");
    set.aux_vars.push(s);
    for group in [&fwd, &adj] {
        let n = group.len();
        if n == 0 {
            continue;
        }
        set.lmis
            .push(square_lmi(2 * n, |i, j| match (i < n, j < n) {
                (true, true) => dot(&group[i].input, &group[j].input),
                (true, false) => dot(&group[i].output, &group[j - n].output),
                (false, true) => dot(&group[i - n].output, &group[j].output),
                (false, false) if i == j => ScalarExpr::aux(s),
                (false, false) => ScalarExpr::zero(),
            })?);
    }
    Ok(set)
}

/// Dispatches to the generator of `class`.
pub fn operator_conditions(
    builder: &mut PepBuilder,
    class: &OperatorClass,
    points: &[OperatorPoint],
) -> Result<ClassConstraintSet> {
    match *class {
        OperatorClass::GeneralBounded { l } => operator_general_conditions(l, points),
        OperatorClass::Symmetric { mu, l } => operator_symmetric_conditions(mu, l, points),
        OperatorClass::SkewSymmetric { l } => operator_skew_conditions(l, points),
        OperatorClass::GeneralUnbounded => operator_unbounded_conditions(builder, points),
    }
}
