//! Symbolic algebra over abstract vectors.
//!
//! Every vector manipulated by a method is a linear combination of *basis
//! vectors* declared on a [`PepBuilder`]. Basis vectors of one inner-product
//! space are the columns whose pairwise inner products form that space's Gram
//! matrix, which becomes a PSD variable of the semidefinite program. Scalar
//! quantities ([`ScalarExpr`]) are affine in Gram entries, function-value
//! variables and auxiliary scalars.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::DVector;

use crate::error::{PepError, Result};

/// Handle of an inner-product space registered on a [`PepBuilder`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpaceId(pub(crate) usize);

impl SpaceId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Function-value variable (`f_i` in interpolation conditions).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ValueId(pub(crate) usize);

impl ValueId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Auxiliary nonnegative scalar variable (e.g. the squared operator norm of
/// an unbounded operator class).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AuxId(pub(crate) usize);

impl AuxId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BasisVector {
    pub id: usize,
    pub space: SpaceId,
    /// Role tag, metadata only.
    pub label: String,
}

/// Symbol table of a performance estimation problem.
///
/// Single writer: methods and classes declare vectors and variables here
/// while a trajectory is being built.
#[derive(Clone, Debug, Default)]
pub struct PepBuilder {
    spaces: Vec<String>,
    vectors: Vec<BasisVector>,
    values: Vec<String>,
    aux: Vec<String>,
}

impl PepBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_space(&mut self, name: &str) -> Result<SpaceId> {
        if self.spaces.iter().any(|s| s == name) {
            return Err(PepError::DuplicateSpace(name.to_string()));
        }
        self.spaces.push(name.to_string());
        Ok(SpaceId(self.spaces.len() - 1))
    }

    pub fn space(&self, name: &str) -> Option<SpaceId> {
        self.spaces.iter().position(|s| s == name).map(SpaceId)
    }

    pub fn space_name(&self, space: SpaceId) -> &str {
        self.spaces.get(space.0).map(String::as_str).unwrap_or("?")
    }

    pub fn num_spaces(&self) -> usize {
        self.spaces.len()
    }

    pub fn spaces(&self) -> impl Iterator<Item = SpaceId> + '_ {
        (0..self.spaces.len()).map(SpaceId)
    }

    /// Declares a fresh basis vector; the Gram matrix of `space` grows by one.
    pub fn declare_vector(&mut self, space: SpaceId, label: &str) -> Result<BasisVector> {
        if space.0 >= self.spaces.len() {
            return Err(PepError::UnknownSpace(format!("#{}", space.0)));
        }
        let v = BasisVector {
            id: self.vectors.len(),
            space,
            label: label.to_string(),
        };
        self.vectors.push(v.clone());
        Ok(v)
    }

    /// Declares a basis vector and returns it as a symbolic vector.
    pub fn new_vector(&mut self, space: SpaceId, label: &str) -> Result<SymbolicVector> {
        self.declare_vector(space, label)
            .map(|b| SymbolicVector::basis(&b))
    }

    pub fn declare_value(&mut self, label: &str) -> ValueId {
        self.values.push(label.to_string());
        ValueId(self.values.len() - 1)
    }

    pub fn declare_aux(&mut self, label: &str) -> AuxId {
        self.aux.push(label.to_string());
        AuxId(self.aux.len() - 1)
    }

    pub fn vectors(&self) -> &[BasisVector] {
        &self.vectors
    }

    pub fn vector(&self, id: usize) -> Option<&BasisVector> {
        self.vectors.get(id)
    }

    /// Basis vectors of `space` in declaration order.
    pub fn vectors_in(&self, space: SpaceId) -> impl Iterator<Item = &BasisVector> + '_ {
        self.vectors.iter().filter(move |v| v.space == space)
    }

    pub fn gram_dim(&self, space: SpaceId) -> usize {
        self.vectors_in(space).count()
    }

    pub fn num_values(&self) -> usize {
        self.values.len()
    }

    pub fn value_label(&self, id: ValueId) -> &str {
        &self.values[id.0]
    }

    pub fn num_aux(&self) -> usize {
        self.aux.len()
    }

    pub fn aux_label(&self, id: AuxId) -> &str {
        &self.aux[id.0]
    }
}

/// Linear combination of basis vectors of a single space.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolicVector {
    space: SpaceId,
    terms: BTreeMap<usize, f64>,
}

impl SymbolicVector {
    pub fn zero(space: SpaceId) -> Self {
        Self {
            space,
            terms: BTreeMap::new(),
        }
    }

    pub fn basis(b: &BasisVector) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(b.id, 1.0);
        Self {
            space: b.space,
            terms,
        }
    }

    pub fn space(&self) -> SpaceId {
        self.space
    }

    pub fn terms(&self) -> &BTreeMap<usize, f64> {
        &self.terms
    }

    pub fn coeff(&self, id: usize) -> f64 {
        self.terms.get(&id).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// `self + alpha * other`, failing on mismatched spaces.
    pub fn try_axpy(&self, alpha: f64, other: &SymbolicVector) -> Result<SymbolicVector> {
        if self.space != other.space {
            return Err(PepError::SpaceMismatch {
                left: format!("#{}", self.space.0),
                right: format!("#{}", other.space.0),
            });
        }
        let mut out = self.clone();
        for (&id, &c) in &other.terms {
            *out.terms.entry(id).or_insert(0.0) += alpha * c;
        }
        out.prune();
        Ok(out)
    }

    pub fn scaled(&self, alpha: f64) -> SymbolicVector {
        let mut out = SymbolicVector::zero(self.space);
        if alpha != 0.0 {
            out.terms = self.terms.iter().map(|(&k, &c)| (k, alpha * c)).collect();
            out.prune();
        }
        out
    }

    fn prune(&mut self) {
        self.terms.retain(|_, c| *c != 0.0);
    }
}

impl Add for &SymbolicVector {
    type Output = SymbolicVector;

    /// Panics when the operands live in different spaces.
    fn add(self, rhs: &SymbolicVector) -> SymbolicVector {
        self.try_axpy(1.0, rhs)
            .expect("vector addition across spaces")
    }
}

impl Add for SymbolicVector {
    type Output = SymbolicVector;
    fn add(self, rhs: SymbolicVector) -> SymbolicVector {
        &self + &rhs
    }
}

impl Sub for &SymbolicVector {
    type Output = SymbolicVector;
    fn sub(self, rhs: &SymbolicVector) -> SymbolicVector {
        self.try_axpy(-1.0, rhs)
            .expect("vector subtraction across spaces")
    }
}

impl Sub for SymbolicVector {
    type Output = SymbolicVector;
    fn sub(self, rhs: SymbolicVector) -> SymbolicVector {
        &self - &rhs
    }
}

impl Neg for &SymbolicVector {
    type Output = SymbolicVector;
    fn neg(self) -> SymbolicVector {
        self.scaled(-1.0)
    }
}

impl Neg for SymbolicVector {
    type Output = SymbolicVector;
    fn neg(self) -> SymbolicVector {
        self.scaled(-1.0)
    }
}

impl Mul<&SymbolicVector> for f64 {
    type Output = SymbolicVector;
    fn mul(self, rhs: &SymbolicVector) -> SymbolicVector {
        rhs.scaled(self)
    }
}

impl Mul<SymbolicVector> for f64 {
    type Output = SymbolicVector;
    fn mul(self, rhs: SymbolicVector) -> SymbolicVector {
        rhs.scaled(self)
    }
}

/// Canonical key of a Gram entry: `(min, max)` of the two basis ids.
fn pair(a: usize, b: usize) -> (usize, usize) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Affine expression in Gram entries, function values and auxiliary scalars.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScalarExpr {
    gram: BTreeMap<(usize, usize), f64>,
    values: BTreeMap<ValueId, f64>,
    aux: BTreeMap<AuxId, f64>,
    constant: f64,
}

impl ScalarExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            ..Self::default()
        }
    }

    pub fn value(id: ValueId) -> Self {
        let mut e = Self::default();
        e.values.insert(id, 1.0);
        e
    }

    pub fn aux(id: AuxId) -> Self {
        let mut e = Self::default();
        e.aux.insert(id, 1.0);
        e
    }

    /// Single Gram entry `<e_a, e_b>` with coefficient `c`.
    pub fn gram_entry(a: usize, b: usize, c: f64) -> Self {
        let mut e = Self::default();
        if c != 0.0 {
            e.gram.insert(pair(a, b), c);
        }
        e
    }

    pub fn gram_terms(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.gram
    }

    pub fn value_terms(&self) -> &BTreeMap<ValueId, f64> {
        &self.values
    }

    pub fn aux_terms(&self) -> &BTreeMap<AuxId, f64> {
        &self.aux
    }

    pub fn constant_term(&self) -> f64 {
        self.constant
    }

    pub fn is_zero(&self) -> bool {
        self.gram.is_empty()
            && self.values.is_empty()
            && self.aux.is_empty()
            && self.constant == 0.0
    }

    pub fn scaled(&self, alpha: f64) -> ScalarExpr {
        let mut out = self.clone();
        out.gram.values_mut().for_each(|c| *c *= alpha);
        out.values.values_mut().for_each(|c| *c *= alpha);
        out.aux.values_mut().for_each(|c| *c *= alpha);
        out.constant *= alpha;
        out.prune();
        out
    }

    fn add_scaled(&mut self, alpha: f64, other: &ScalarExpr) {
        for (&k, &c) in &other.gram {
            *self.gram.entry(k).or_insert(0.0) += alpha * c;
        }
        for (&k, &c) in &other.values {
            *self.values.entry(k).or_insert(0.0) += alpha * c;
        }
        for (&k, &c) in &other.aux {
            *self.aux.entry(k).or_insert(0.0) += alpha * c;
        }
        self.constant += alpha * other.constant;
        self.prune();
    }

    fn prune(&mut self) {
        self.gram.retain(|_, c| *c != 0.0);
        self.values.retain(|_, c| *c != 0.0);
        self.aux.retain(|_, c| *c != 0.0);
    }

    /// Largest absolute coefficient difference with `other`.
    pub fn max_abs_diff(&self, other: &ScalarExpr) -> f64 {
        let d = self - other;
        d.gram
            .values()
            .chain(d.values.values())
            .chain(d.aux.values())
            .chain(std::iter::once(&d.constant))
            .fold(0.0_f64, |m, c| m.max(c.abs()))
    }

    /// Largest absolute coefficient, constant included.
    pub fn max_abs_coeff(&self) -> f64 {
        self.max_abs_diff(&ScalarExpr::zero())
    }

    /// Evaluates the expression given Gram entries, values and aux scalars.
    pub fn evaluate(
        &self,
        gram: impl Fn(usize, usize) -> f64,
        value: impl Fn(ValueId) -> f64,
        aux: impl Fn(AuxId) -> f64,
    ) -> f64 {
        self.constant
            + self
                .gram
                .iter()
                .map(|(&(a, b), &c)| c * gram(a, b))
                .sum::<f64>()
            + self.values.iter().map(|(&k, &c)| c * value(k)).sum::<f64>()
            + self.aux.iter().map(|(&k, &c)| c * aux(k)).sum::<f64>()
    }

    /// Iterates over the basis ids referenced by the Gram part.
    pub fn referenced_vectors(&self) -> impl Iterator<Item = usize> + '_ {
        self.gram.keys().flat_map(|&(a, b)| [a, b])
    }
}

impl fmt::Display for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        let mut term = |f: &mut fmt::Formatter<'_>, c: f64, name: String| -> fmt::Result {
            if first {
                first = false;
                write!(f, "{c}*{name}")
            } else if c < 0.0 {
                write!(f, " - {}*{name}", -c)
            } else {
                write!(f, " + {c}*{name}")
            }
        };
        for (&(a, b), &c) in &self.gram {
            term(f, c, format!("<{a},{b}>"))?;
        }
        for (&k, &c) in &self.values {
            term(f, c, format!("f{}", k.0))?;
        }
        for (&k, &c) in &self.aux {
            term(f, c, format!("s{}", k.0))?;
        }
        if first {
            write!(f, "{}", self.constant)
        } else if self.constant != 0.0 {
            write!(f, " + {}", self.constant)
        } else {
            Ok(())
        }
    }
}

impl Add for &ScalarExpr {
    type Output = ScalarExpr;
    fn add(self, rhs: &ScalarExpr) -> ScalarExpr {
        let mut out = self.clone();
        out.add_scaled(1.0, rhs);
        out
    }
}

impl Add for ScalarExpr {
    type Output = ScalarExpr;
    fn add(mut self, rhs: ScalarExpr) -> ScalarExpr {
        self.add_scaled(1.0, &rhs);
        self
    }
}

impl AddAssign<&ScalarExpr> for ScalarExpr {
    fn add_assign(&mut self, rhs: &ScalarExpr) {
        self.add_scaled(1.0, rhs);
    }
}

impl Sub for &ScalarExpr {
    type Output = ScalarExpr;
    fn sub(self, rhs: &ScalarExpr) -> ScalarExpr {
        let mut out = self.clone();
        out.add_scaled(-1.0, rhs);
        out
    }
}

impl Sub for ScalarExpr {
    type Output = ScalarExpr;
    fn sub(mut self, rhs: ScalarExpr) -> ScalarExpr {
        self.add_scaled(-1.0, &rhs);
        self
    }
}

impl Neg for ScalarExpr {
    type Output = ScalarExpr;
    fn neg(self) -> ScalarExpr {
        self.scaled(-1.0)
    }
}

impl Mul<&ScalarExpr> for f64 {
    type Output = ScalarExpr;
    fn mul(self, rhs: &ScalarExpr) -> ScalarExpr {
        rhs.scaled(self)
    }
}

impl Mul<ScalarExpr> for f64 {
    type Output = ScalarExpr;
    fn mul(self, rhs: ScalarExpr) -> ScalarExpr {
        rhs.scaled(self)
    }
}

/// Bilinear expansion `<u, v>` at the Gram level.
pub fn inner_product(u: &SymbolicVector, v: &SymbolicVector) -> Result<ScalarExpr> {
    if u.space != v.space {
        return Err(PepError::SpaceMismatch {
            left: format!("#{}", u.space.0),
            right: format!("#{}", v.space.0),
        });
    }
    let mut out = ScalarExpr::zero();
    for (&a, &ca) in &u.terms {
        for (&b, &cb) in &v.terms {
            *out.gram.entry(pair(a, b)).or_insert(0.0) += ca * cb;
        }
    }
    out.prune();
    Ok(out)
}

/// `<u, v>` for vectors known to share a space (panics otherwise).
pub(crate) fn dot(u: &SymbolicVector, v: &SymbolicVector) -> ScalarExpr {
    inner_product(u, v).expect("inner product across spaces")
}

/// `||u||^2`.
pub(crate) fn sqnorm(u: &SymbolicVector) -> ScalarExpr {
    dot(u, u)
}

/// Constraint asserting that a symmetric matrix of affine expressions is PSD.
#[derive(Clone, Debug, PartialEq)]
pub struct LmiConstraint {
    entries: Vec<Vec<ScalarExpr>>,
}

impl LmiConstraint {
    pub fn size(&self) -> usize {
        self.entries.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> &ScalarExpr {
        &self.entries[i][j]
    }

    pub fn rows(&self) -> &[Vec<ScalarExpr>] {
        &self.entries
    }
}

/// Validates a square, symmetric arrangement of expressions as an LMI.
pub fn lmi_block(entries: Vec<Vec<ScalarExpr>>) -> Result<LmiConstraint> {
    let n = entries.len();
    for (row, r) in entries.iter().enumerate() {
        if r.len() != n {
            return Err(PepError::NonSquareLmi {
                row,
                len: r.len(),
                expected: n,
            });
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let scale = 1.0
                + entries[i][j]
                    .max_abs_coeff()
                    .max(entries[j][i].max_abs_coeff());
            if entries[i][j].max_abs_diff(&entries[j][i]) > 1e-12 * scale {
                return Err(PepError::AsymmetricLmi(i, j));
            }
        }
    }
    Ok(LmiConstraint { entries })
}

/// Concrete values for the symbols of a builder, used to evaluate
/// expressions numerically.
#[derive(Clone, Debug, Default)]
pub struct Assignment {
    vectors: BTreeMap<usize, DVector<f64>>,
    dims: BTreeMap<SpaceId, usize>,
    values: BTreeMap<ValueId, f64>,
    aux: BTreeMap<AuxId, f64>,
}

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_vector(&mut self, b: &BasisVector, v: DVector<f64>) {
        self.dims.insert(b.space, v.len());
        self.vectors.insert(b.id, v);
    }

    pub fn set_value(&mut self, id: ValueId, v: f64) {
        self.values.insert(id, v);
    }

    pub fn set_aux(&mut self, id: AuxId, v: f64) {
        self.aux.insert(id, v);
    }

    pub fn vector(&self, id: usize) -> Option<&DVector<f64>> {
        self.vectors.get(&id)
    }

    /// Concrete coordinates of a symbolic vector.
    pub fn eval_vector(&self, v: &SymbolicVector) -> DVector<f64> {
        let dim = self.dims.get(&v.space).copied().unwrap_or(0);
        let mut out = DVector::zeros(dim);
        for (&id, &c) in &v.terms {
            out.axpy(c, &self.vectors[&id], 1.0);
        }
        out
    }

    pub fn eval(&self, e: &ScalarExpr) -> f64 {
        e.evaluate(
            |a, b| self.vectors[&a].dot(&self.vectors[&b]),
            |k| self.values.get(&k).copied().unwrap_or(0.0),
            |k| self.aux.get(&k).copied().unwrap_or(0.0),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (PepBuilder, SpaceId) {
        let mut b = PepBuilder::new();
        let s = b.add_space("primal").unwrap();
        (b, s)
    }

    #[test]
    fn first_declaration_has_id_zero() {
        let (mut b, s) = setup();
        let v = b.declare_vector(s, "iterate").unwrap();
        assert_eq!(v.id, 0);
        assert_eq!(b.gram_dim(s), 1);
    }

    #[test]
    fn declarations_get_distinct_ids() {
        let (mut b, s) = setup();
        let v0 = b.declare_vector(s, "x0").unwrap();
        let v1 = b.declare_vector(s, "g0").unwrap();
        assert_eq!((v0.id, v1.id), (0, 1));
    }

    #[test]
    fn unregistered_space_is_rejected() {
        let (mut b, _) = setup();
        let err = b.declare_vector(SpaceId(7), "x").unwrap_err();
        assert!(matches!(err, PepError::UnknownSpace(_)));
    }

    #[test]
    fn inner_product_of_basis_with_itself() {
        let (mut b, s) = setup();
        let e0 = b.new_vector(s, "e0").unwrap();
        let ip = inner_product(&e0, &e0).unwrap();
        assert_eq!(ip, ScalarExpr::gram_entry(0, 0, 1.0));
    }

    #[test]
    fn inner_product_is_bilinear() {
        let (mut b, s) = setup();
        let e0 = b.new_vector(s, "e0").unwrap();
        let e1 = b.new_vector(s, "e1").unwrap();
        let u = &(2.0 * &e0) - &e1;
        let ip = inner_product(&u, &e1).unwrap();
        let expected = ScalarExpr::gram_entry(0, 1, 2.0) + ScalarExpr::gram_entry(1, 1, -1.0);
        assert_eq!(ip, expected);
        // symmetric keying
        assert_eq!(ip, inner_product(&e1, &u).unwrap());
    }

    #[test]
    fn inner_product_with_zero_is_zero() {
        let (mut b, s) = setup();
        let e0 = b.new_vector(s, "e0").unwrap();
        let z = SymbolicVector::zero(s);
        assert!(inner_product(&z, &e0).unwrap().is_zero());
    }

    #[test]
    fn inner_product_across_spaces_fails() {
        let (mut b, s) = setup();
        let t = b.add_space("dual").unwrap();
        let x = b.new_vector(s, "x").unwrap();
        let y = b.new_vector(t, "y").unwrap();
        assert!(matches!(
            inner_product(&x, &y),
            Err(PepError::SpaceMismatch { .. })
        ));
    }

    #[test]
    fn cancellation_yields_empty_terms() {
        let (mut b, s) = setup();
        let x = b.new_vector(s, "x").unwrap();
        assert!((&x - &x).is_zero());
    }

    #[test]
    fn scalar_lmi_is_accepted() {
        let (mut b, s) = setup();
        let x = b.new_vector(s, "x").unwrap();
        let y = b.new_vector(s, "y").unwrap();
        let l2 = 4.0;
        let entry = (l2 * sqnorm(&x)) - sqnorm(&y);
        let lmi = lmi_block(vec![vec![entry]]).unwrap();
        assert_eq!(lmi.size(), 1);
    }

    #[test]
    fn two_by_two_symmetric_operator_block() {
        // (Y - mu X)^T (L X - Y), symmetrized, on two pairs.
        let (mut b, s) = setup();
        let (mu, l) = (0.5, 2.0);
        let xs: Vec<_> = (0..2)
            .map(|i| b.new_vector(s, &format!("x{i}")).unwrap())
            .collect();
        let ys: Vec<_> = (0..2)
            .map(|i| b.new_vector(s, &format!("y{i}")).unwrap())
            .collect();
        let entry = |i: usize, j: usize| {
            let a = &ys[i] - &(mu * &xs[i]);
            let c = &(l * &xs[j]) - &ys[j];
            let a2 = &ys[j] - &(mu * &xs[j]);
            let c2 = &(l * &xs[i]) - &ys[i];
            0.5 * (dot(&a, &c) + dot(&c2, &a2))
        };
        let rows = (0..2)
            .map(|i| (0..2).map(|j| entry(i, j)).collect())
            .collect();
        assert!(lmi_block(rows).is_ok());
    }

    #[test]
    fn non_square_lmi_is_rejected() {
        let rows = vec![vec![ScalarExpr::zero(); 3]; 2];
        assert!(matches!(
            lmi_block(rows),
            Err(PepError::NonSquareLmi { .. })
        ));
    }

    #[test]
    fn asymmetric_lmi_is_rejected() {
        let rows = vec![
            vec![ScalarExpr::zero(), ScalarExpr::constant(1.0)],
            vec![ScalarExpr::constant(2.0), ScalarExpr::zero()],
        ];
        assert!(matches!(
            lmi_block(rows),
            Err(PepError::AsymmetricLmi(0, 1))
        ));
    }

    #[test]
    fn assignment_evaluates_values_and_aux() {
        let (mut b, s) = setup();
        let x = b.declare_vector(s, "x").unwrap();
        let f = b.declare_value("f");
        let a = b.declare_aux("s");
        let mut asg = Assignment::new();
        asg.set_vector(&x, DVector::from_vec(vec![3.0, 4.0]));
        asg.set_value(f, 2.0);
        asg.set_aux(a, -1.0);
        let xv = SymbolicVector::basis(&x);
        let e = sqnorm(&xv)
            + 3.0 * ScalarExpr::value(f)
            + ScalarExpr::aux(a)
            + ScalarExpr::constant(0.5);
        assert_eq!(asg.eval(&e), 25.0 + 6.0 - 1.0 + 0.5);
    }
}
