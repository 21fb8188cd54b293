//! Symbolic trajectories of fixed-step methods.
//!
//! A trajectory declares the vectors a method produces, registers every
//! gradient, subgradient and operator evaluation with the class it must be
//! interpolated by, and records the initial conditions. Criteria are then
//! attached as scalar expressions to maximize.

use crate::classes::{
    function_conditions, operator_conditions, ClassConstraintSet, FunctionClass, FunctionPoint,
    OperatorClass, OperatorPoint,
};
use crate::error::{PepError, Result};
use crate::expr::{sqnorm, PepBuilder, ScalarExpr, SpaceId, SymbolicVector};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MethodSpec {
    /// `x_{k+1} = x_k - step * grad F(x_k)` with an absolute step.
    GradientMethod {
        step: f64,
        n: usize,
    },
    ChambollePock {
        tau: f64,
        sigma: f64,
        n: usize,
    },
}

impl MethodSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            MethodSpec::GradientMethod { step, n } => step > 0.0 && step.is_finite() && n >= 1,
            MethodSpec::ChambollePock { tau, sigma, n } => {
                tau > 0.0 && sigma > 0.0 && tau.is_finite() && sigma.is_finite() && n >= 1
            }
        };
        if ok {
            Ok(())
        } else {
            Err(PepError::InvalidMethod(format!("{self:?}")))
        }
    }

    pub fn iterations(&self) -> usize {
        match *self {
            MethodSpec::GradientMethod { n, .. } | MethodSpec::ChambollePock { n, .. } => n,
        }
    }
}

/// Objective minimized by the gradient method.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GradientObjective {
    Plain(FunctionClass),
    /// `F(x) = g(Mx)`.
    Composed {
        g: FunctionClass,
        m: OperatorClass,
    },
}

impl GradientObjective {
    /// Smoothness constant `L_F` of the objective (`L_g L_M^2` when composed).
    pub fn smoothness(&self) -> f64 {
        match self {
            GradientObjective::Plain(f) => f.smoothness(),
            GradientObjective::Composed { g, m } => match m.norm_bound() {
                Some(lm) => g.smoothness() * lm * lm,
                None => f64::INFINITY,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GradientObjective::Plain(f) => f.validate(),
            GradientObjective::Composed { g, m } => {
                g.validate()?;
                m.validate()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CriterionSpec {
    ObjectiveGapLast,
    /// Gap at the average of `x_1, ..., x_N`.
    ObjectiveGapAverage,
    /// Smallest gap over `x_1, ..., x_N`.
    ObjectiveGapBest,
    DistanceLast,
    GradNormLast,
}

impl CriterionSpec {
    pub fn name(&self) -> &'static str {
        match self {
            CriterionSpec::ObjectiveGapLast => "last",
            CriterionSpec::ObjectiveGapAverage => "average",
            CriterionSpec::ObjectiveGapBest => "best",
            CriterionSpec::DistanceLast => "distance",
            CriterionSpec::GradNormLast => "gradnorm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "last" => CriterionSpec::ObjectiveGapLast,
            "average" => CriterionSpec::ObjectiveGapAverage,
            "best" => CriterionSpec::ObjectiveGapBest,
            "distance" => CriterionSpec::DistanceLast,
            "gradnorm" => CriterionSpec::GradNormLast,
            _ => return None,
        })
    }

    /// Whether the criterion scales like a function value (`L R^2`).
    pub fn is_objective_gap(&self) -> bool {
        matches!(
            self,
            CriterionSpec::ObjectiveGapLast
                | CriterionSpec::ObjectiveGapAverage
                | CriterionSpec::ObjectiveGapBest
        )
    }
}

/// Expression(s) to maximize. `MinOf` is the smallest of several
/// expressions, maximized by one solve per candidate.
#[derive(Clone, Debug, PartialEq)]
pub enum Criterion {
    Expr(ScalarExpr),
    MinOf(Vec<ScalarExpr>),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChambollePockParams {
    pub tau: f64,
    pub sigma: f64,
    pub n: usize,
    pub r_x: f64,
    pub r_u: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Shape {
    GradientPlain,
    GradientComposed,
    ChambollePock,
}

/// Registers operator applications, or substitutes `y = mu x` when the
/// operator class pins `M = mu I`.
#[derive(Clone, Debug)]
struct OperatorChain {
    input: SpaceId,
    output: SpaceId,
    pinned: Option<f64>,
}

impl OperatorChain {
    fn new(builder: &mut PepBuilder, primal: SpaceId, m: &OperatorClass) -> Result<Self> {
        let (output, pinned) = match *m {
            OperatorClass::Symmetric { mu, l } if mu == l => (primal, Some(mu)),
            _ if m.is_square() => (primal, None),
            _ => (builder.add_space("image")?, None),
        };
        Ok(Self {
            input: primal,
            output,
            pinned,
        })
    }

    fn forward(
        &self,
        builder: &mut PepBuilder,
        points: &mut Vec<OperatorPoint>,
        x: &SymbolicVector,
        label: &str,
    ) -> Result<SymbolicVector> {
        if let Some(mu) = self.pinned {
            return Ok(x.scaled(mu));
        }
        let y = builder.new_vector(self.output, label)?;
        points.push(OperatorPoint::forward(x.clone(), y.clone()));
        Ok(y)
    }

    fn adjoint(
        &self,
        builder: &mut PepBuilder,
        points: &mut Vec<OperatorPoint>,
        u: &SymbolicVector,
        label: &str,
    ) -> Result<SymbolicVector> {
        if let Some(mu) = self.pinned {
            return Ok(u.scaled(mu));
        }
        let v = builder.new_vector(self.input, label)?;
        points.push(OperatorPoint::adjoint(u.clone(), v.clone()));
        Ok(v)
    }
}

/// Symbolic run of a method together with all registered evaluations.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub method: MethodSpec,
    pub builder: PepBuilder,
    pub primal: SpaceId,
    /// Output space of the operator; equals `primal` without operator or
    /// for square operator classes.
    pub image: SpaceId,
    /// `x_0, ..., x_N`.
    pub iterates: Vec<SymbolicVector>,
    pub x_star: SymbolicVector,
    /// `M x_i` for every iterate (composed gradient method and Chambolle-Pock).
    pub images: Vec<SymbolicVector>,
    pub y_star: Option<SymbolicVector>,
    /// Dual iterates `u_0, ..., u_N` and `u*` (Chambolle-Pock).
    pub dual_iterates: Vec<SymbolicVector>,
    pub u_star: Option<SymbolicVector>,
    pub f_class: Option<FunctionClass>,
    pub f_points: Vec<FunctionPoint>,
    pub g_class: Option<FunctionClass>,
    pub g_points: Vec<FunctionPoint>,
    pub m_class: Option<OperatorClass>,
    pub op_points: Vec<OperatorPoint>,
    /// Expressions required to be `<= 0`.
    pub initial_conditions: Vec<ScalarExpr>,
    /// `grad F(x_i)` for the gradient method, `i = 0..=N`.
    pub gradients: Vec<SymbolicVector>,
    shape: Shape,
    /// `f(x_i)` (or `g(Mx_i)` when composed) where already registered.
    f_values: Vec<Option<ScalarExpr>>,
    g_values: Vec<Option<ScalarExpr>>,
    optimal_value: ScalarExpr,
}

impl Trajectory {
    pub fn iterations(&self) -> usize {
        self.iterates.len() - 1
    }

    /// Interpolation constraints of every registered class plus the initial
    /// conditions.
    pub fn constraints(&mut self) -> Result<ClassConstraintSet> {
        let mut set = ClassConstraintSet::default();
        if let Some(f) = &self.f_class {
            set.extend(function_conditions(f, &self.f_points)?);
        }
        if let Some(g) = &self.g_class {
            set.extend(function_conditions(g, &self.g_points)?);
        }
        if let Some(m) = &self.m_class {
            set.extend(operator_conditions(&mut self.builder, m, &self.op_points)?);
        }
        set.inequalities
            .extend(self.initial_conditions.iter().cloned());
        Ok(set)
    }

    fn new_f_point(&mut self, x: SymbolicVector, label: &str) -> Result<ScalarExpr> {
        let g = self
            .builder
            .new_vector(x.space(), &format!("subgradient of f at {label}"))?;
        let v = ScalarExpr::value(self.builder.declare_value(&format!("f({label})")));
        self.f_points.push(FunctionPoint { x, g, f: v.clone() });
        Ok(v)
    }

    fn new_g_point(&mut self, y: SymbolicVector, label: &str) -> Result<ScalarExpr> {
        let u = self
            .builder
            .new_vector(y.space(), &format!("gradient of g at {label}"))?;
        let v = ScalarExpr::value(self.builder.declare_value(&format!("g({label})")));
        self.g_points.push(FunctionPoint {
            x: y,
            g: u,
            f: v.clone(),
        });
        Ok(v)
    }

    /// `F(x_i)`, registering missing evaluations.
    fn objective_at(&mut self, i: usize) -> Result<ScalarExpr> {
        match self.shape {
            Shape::GradientPlain => Ok(self.f_values[i].clone().expect("registered")),
            Shape::GradientComposed => Ok(self.g_values[i].clone().expect("registered")),
            Shape::ChambollePock => {
                if i == 0 {
                    return Err(PepError::IncompatibleCriterion {
                        criterion: "objective at x_0".into(),
                        reason: "the starting point carries no subgradient of f".into(),
                    });
                }
                let f = self.f_values[i].clone().expect("registered");
                let g = match self.g_values[i].clone() {
                    Some(g) => g,
                    None => {
                        let g = self.new_g_point(self.images[i].clone(), &format!("y{i}"))?;
                        self.g_values[i] = Some(g.clone());
                        g
                    }
                };
                Ok(f + g)
            }
        }
    }

    /// `F` at the average of `x_1, ..., x_N`, registered as a new evaluation.
    fn objective_at_average(&mut self) -> Result<ScalarExpr> {
        let n = self.iterations();
        let w = 1.0 / n as f64;
        let avg = |vs: &[SymbolicVector]| {
            vs[1..]
                .iter()
                .fold(SymbolicVector::zero(vs[0].space()), |acc, v| {
                    &acc + &(w * v)
                })
        };
        let x_bar = avg(&self.iterates);
        match self.shape {
            Shape::GradientPlain => self.new_f_point(x_bar, "x_avg"),
            Shape::GradientComposed => {
                let y_bar = avg(&self.images);
                self.new_g_point(y_bar, "y_avg")
            }
            Shape::ChambollePock => {
                let y_bar = avg(&self.images);
                let f = self.new_f_point(x_bar, "x_avg")?;
                let g = self.new_g_point(y_bar, "y_avg")?;
                Ok(f + g)
            }
        }
    }
}

/// Optimal value variable, or the constant zero when the minimizer is
/// anchored at the origin.
fn optimal_value(builder: &mut PepBuilder, anchored: bool, label: &str) -> ScalarExpr {
    if anchored {
        ScalarExpr::zero()
    } else {
        ScalarExpr::value(builder.declare_value(label))
    }
}

/// Gradient method with absolute step `step` on `objective`, started with
/// `||x_0 - x*||^2 <= r^2`.
pub fn build_gradient_method(
    objective: &GradientObjective,
    step: f64,
    n: usize,
    r: f64,
) -> Result<Trajectory> {
    let method = MethodSpec::GradientMethod { step, n };
    method.validate()?;
    objective.validate()?;
    let mut b = PepBuilder::new();
    let primal = b.add_space("primal")?;
    let anchored = match objective {
        GradientObjective::Plain(f) => f.is_translation_invariant(),
        GradientObjective::Composed { g, .. } => g.is_translation_invariant(),
    };
    let x0 = b.new_vector(primal, "x0")?;
    let x_star = if anchored {
        SymbolicVector::zero(primal)
    } else {
        b.new_vector(primal, "x*")?
    };

    let mut traj = Trajectory {
        method,
        builder: b,
        primal,
        image: primal,
        iterates: vec![x0.clone()],
        x_star: x_star.clone(),
        images: Vec::new(),
        y_star: None,
        dual_iterates: Vec::new(),
        u_star: None,
        f_class: None,
        f_points: Vec::new(),
        g_class: None,
        g_points: Vec::new(),
        m_class: None,
        op_points: Vec::new(),
        initial_conditions: vec![sqnorm(&(&x0 - &x_star)) - ScalarExpr::constant(r * r)],
        gradients: Vec::new(),
        shape: Shape::GradientPlain,
        f_values: Vec::new(),
        g_values: Vec::new(),
        optimal_value: ScalarExpr::zero(),
    };

    match *objective {
        GradientObjective::Plain(f) => {
            traj.f_class = Some(f);
            for i in 0..=n {
                let x = traj.iterates[i].clone();
                let g = traj.builder.new_vector(primal, &format!("g{i}"))?;
                let v = ScalarExpr::value(traj.builder.declare_value(&format!("f{i}")));
                traj.f_points.push(FunctionPoint {
                    x: x.clone(),
                    g: g.clone(),
                    f: v.clone(),
                });
                traj.f_values.push(Some(v));
                if i < n {
                    traj.iterates.push(&x - &(step * &g));
                }
                traj.gradients.push(g);
            }
            let f_star = optimal_value(&mut traj.builder, anchored, "f*");
            traj.f_points.push(FunctionPoint {
                x: x_star,
                g: SymbolicVector::zero(primal),
                f: f_star.clone(),
            });
            traj.optimal_value = f_star;
        }
        GradientObjective::Composed { g, m } => {
            traj.shape = Shape::GradientComposed;
            traj.g_class = Some(g);
            traj.m_class = Some(m);
            let chain = OperatorChain::new(&mut traj.builder, primal, &m)?;
            traj.image = chain.output;
            let mut ops = Vec::new();
            for i in 0..=n {
                let x = traj.iterates[i].clone();
                let y = chain.forward(&mut traj.builder, &mut ops, &x, &format!("y{i}"))?;
                let u = traj.builder.new_vector(chain.output, &format!("u{i}"))?;
                let gv = ScalarExpr::value(traj.builder.declare_value(&format!("g{i}")));
                traj.g_points.push(FunctionPoint {
                    x: y.clone(),
                    g: u.clone(),
                    f: gv.clone(),
                });
                let v = chain.adjoint(&mut traj.builder, &mut ops, &u, &format!("v{i}"))?;
                if i < n {
                    traj.iterates.push(&x - &(step * &v));
                }
                traj.images.push(y);
                traj.g_values.push(Some(gv));
                traj.gradients.push(v);
            }
            let y_star = if anchored {
                SymbolicVector::zero(chain.output)
            } else {
                chain.forward(&mut traj.builder, &mut ops, &x_star, "y*")?
            };
            let u_star = match chain.pinned {
                // M^T u* = mu u* = 0
                Some(mu) if mu != 0.0 => SymbolicVector::zero(chain.output),
                _ => traj.builder.new_vector(chain.output, "u*")?,
            };
            if chain.pinned.is_none() {
                ops.push(OperatorPoint::adjoint(
                    u_star.clone(),
                    SymbolicVector::zero(primal),
                ));
            }
            let g_star = optimal_value(&mut traj.builder, anchored, "g*");
            traj.g_points.push(FunctionPoint {
                x: y_star.clone(),
                g: u_star.clone(),
                f: g_star.clone(),
            });
            traj.op_points = ops;
            traj.y_star = Some(y_star);
            traj.u_star = Some(u_star);
            traj.optimal_value = g_star;
        }
    }
    Ok(traj)
}

/// Chambolle-Pock on `min_x f(x) + g(Mx)`:
/// `x_{i+1} = prox_{tau f}(x_i - tau M^T u_i)`,
/// `u_{i+1} = prox_{sigma g*}(u_i + sigma M (2 x_{i+1} - x_i))`.
///
/// The dual step is written through the Moreau identity so that only `g`
/// is interpolated: `u_{i+1}` is a gradient of `g` at
/// `(u_i + sigma M(2x_{i+1} - x_i) - u_{i+1}) / sigma`.
pub fn build_chambolle_pock(
    f: FunctionClass,
    g: FunctionClass,
    m: OperatorClass,
    params: &ChambollePockParams,
) -> Result<Trajectory> {
    let method = MethodSpec::ChambollePock {
        tau: params.tau,
        sigma: params.sigma,
        n: params.n,
    };
    method.validate()?;
    f.validate()?;
    g.validate()?;
    m.validate()?;
    let (tau, sigma, n) = (params.tau, params.sigma, params.n);

    let mut b = PepBuilder::new();
    let primal = b.add_space("primal")?;
    let chain = OperatorChain::new(&mut b, primal, &m)?;
    let dual = chain.output;
    let mut ops = Vec::new();

    let anchored = f.is_translation_invariant() && g.is_translation_invariant();
    let x_star = if anchored {
        SymbolicVector::zero(primal)
    } else {
        b.new_vector(primal, "x*")?
    };
    let u_star = b.new_vector(dual, "u*")?;
    let v_star = chain.adjoint(&mut b, &mut ops, &u_star, "v*")?;
    let y_star = if anchored {
        SymbolicVector::zero(dual)
    } else {
        chain.forward(&mut b, &mut ops, &x_star, "y*")?
    };
    let f_star = optimal_value(&mut b, anchored, "f*");
    let g_star = optimal_value(&mut b, anchored, "g*");
    let mut f_points = vec![FunctionPoint {
        x: x_star.clone(),
        g: -&v_star,
        f: f_star.clone(),
    }];
    let mut g_points = vec![FunctionPoint {
        x: y_star.clone(),
        g: u_star.clone(),
        f: g_star.clone(),
    }];

    let x0 = b.new_vector(primal, "x0")?;
    let u0 = b.new_vector(dual, "u0")?;
    let y0 = chain.forward(&mut b, &mut ops, &x0, "y0")?;
    let mut xs = vec![x0.clone()];
    let mut us = vec![u0.clone()];
    let mut ys = vec![y0];
    let mut f_values = vec![None];

    for i in 0..n {
        let v = chain.adjoint(&mut b, &mut ops, &us[i], &format!("v{i}"))?;
        let s = b.new_vector(primal, &format!("s{}", i + 1))?;
        let x_next = &(&xs[i] - &(tau * &v)) - &(tau * &s);
        let fv = ScalarExpr::value(b.declare_value(&format!("f{}", i + 1)));
        f_points.push(FunctionPoint {
            x: x_next.clone(),
            g: s,
            f: fv.clone(),
        });
        let y_next = chain.forward(&mut b, &mut ops, &x_next, &format!("y{}", i + 1))?;
        let z = &us[i] + &(sigma * &(&(2.0 * &y_next) - &ys[i]));
        let u_next = b.new_vector(dual, &format!("u{}", i + 1))?;
        let p = (1.0 / sigma) * &(&z - &u_next);
        let gv = ScalarExpr::value(b.declare_value(&format!("g(p{})", i + 1)));
        g_points.push(FunctionPoint {
            x: p,
            g: u_next.clone(),
            f: gv,
        });
        xs.push(x_next);
        us.push(u_next);
        ys.push(y_next);
        f_values.push(Some(fv));
    }

    let initial_conditions = vec![
        sqnorm(&(&x0 - &x_star)) - ScalarExpr::constant(params.r_x * params.r_x),
        sqnorm(&(&u0 - &u_star)) - ScalarExpr::constant(params.r_u * params.r_u),
    ];
    Ok(Trajectory {
        method,
        builder: b,
        primal,
        image: dual,
        iterates: xs,
        x_star,
        images: ys,
        y_star: Some(y_star),
        dual_iterates: us,
        u_star: Some(u_star),
        f_class: Some(f),
        f_points,
        g_class: Some(g),
        g_points,
        m_class: Some(m),
        op_points: ops,
        initial_conditions,
        gradients: Vec::new(),
        shape: Shape::ChambollePock,
        f_values,
        g_values: vec![None; n + 1],
        optimal_value: f_star + g_star,
    })
}

/// Registers whatever evaluations `crit` needs and returns the expression
/// to maximize.
pub fn attach_criterion(traj: &mut Trajectory, crit: CriterionSpec) -> Result<Criterion> {
    let n = traj.iterations();
    match crit {
        CriterionSpec::ObjectiveGapLast => {
            let v = traj.objective_at(n)?;
            Ok(Criterion::Expr(v - traj.optimal_value.clone()))
        }
        CriterionSpec::ObjectiveGapAverage => {
            let v = traj.objective_at_average()?;
            Ok(Criterion::Expr(v - traj.optimal_value.clone()))
        }
        CriterionSpec::ObjectiveGapBest => {
            let gaps = (1..=n)
                .map(|i| Ok(traj.objective_at(i)? - traj.optimal_value.clone()))
                .collect::<Result<Vec<_>>>()?;
            Ok(Criterion::MinOf(gaps))
        }
        CriterionSpec::DistanceLast => {
            Ok(Criterion::Expr(sqnorm(&(&traj.iterates[n] - &traj.x_star))))
        }
        CriterionSpec::GradNormLast => match traj.gradients.get(n) {
            Some(g) => Ok(Criterion::Expr(sqnorm(g))),
            None => Err(PepError::IncompatibleCriterion {
                criterion: crit.name().into(),
                reason: "the method does not evaluate gradients of the objective".into(),
            }),
        },
    }
}
