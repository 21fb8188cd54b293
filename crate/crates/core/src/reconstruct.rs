//! Explicit worst-case instances from solved Gram matrices.
//!
//! Gram blocks are factored into concrete vectors, and an operator matching
//! every recorded pair is built in a reduced basis, completed to the
//! required norm bound by a small auxiliary SDP, and rotated onto the
//! recovered vectors.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::classes::{function_conditions, Direction, FunctionClass, FunctionPoint, OperatorClass};
use crate::error::{PepError, Result};
use crate::expr::Assignment;
use crate::linalg::{sigma_max, Svd, SymmetricEigen};
use crate::sdp::{svec_index, BackendStatus, Cone, ConicBackend, ConicProgram, SolveStatus};
use crate::worstcase::WorstCase;

/// Eigenvalues below this multiple of the largest are treated as zero.
pub const RANK_TOLERANCE: f64 = 1e-9;
/// Most negative eigenvalue, relative to the trace, accepted as noise.
pub const INDEFINITE_TOLERANCE: f64 = 1e-7;
/// Relative slack allowed between the completion value and the bound.
pub const COMPLETION_SLACK: f64 = 1e-6;
/// Multiple of the solver tolerance below which eigenvalues of a solved Gram
/// matrix are treated as noise.
pub const SOLVER_NOISE_FACTOR: f64 = 10.0;
/// Relative residual above which a recovered instance is rejected.
pub const RESIDUAL_TOLERANCE: f64 = 1e-6;
/// Multiple of `eps * cond * lambda_max` below which eigenvalues of a Schur
/// complement are treated as rounding error.
pub const SCHUR_NOISE_FACTOR: f64 = 100.0;

/// Applies `f` to the eigenvalues of symmetric `a`, sending eigenvalues
/// below `RANK_TOLERANCE * lambda_max` to zero.
fn spectral_map(a: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    if a.nrows() == 0 {
        return DMatrix::zeros(0, 0);
    }
    spectral_map_cut(a, RANK_TOLERANCE * lambda_max(a).max(0.0), f)
}

/// Square root of the Schur complement `parent - B^T inverted^+ B`, with the
/// cut set by the rounding error of forming it.
fn schur_sqrt(
    schur: &DMatrix<f64>,
    parent: &DMatrix<f64>,
    inverted: &DMatrix<f64>,
) -> DMatrix<f64> {
    let eig = SymmetricEigen::new((inverted + inverted.transpose()) * 0.5).eigenvalues;
    let top = eig.iter().fold(0.0f64, |m, &v| m.max(v));
    let bottom = eig
        .iter()
        .filter(|&&v| v > RANK_TOLERANCE * top)
        .fold(top, |m, &v| m.min(v));
    let cond = if bottom > 0.0 { top / bottom } else { 1.0 };
    let scale = SCHUR_NOISE_FACTOR * f64::EPSILON * cond * lambda_max(parent);
    spectral_map_cut(schur, scale, f64::sqrt)
}

/// Applies `f` to the eigenvalues of symmetric `a` above `cut`.
fn spectral_map_cut(a: &DMatrix<f64>, cut: f64, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let n = a.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let eig = SymmetricEigen::new((a + a.transpose()) * 0.5);
    let mapped = eig
        .eigenvalues
        .map(|v| if v > cut && v > 0.0 { f(v) } else { 0.0 });
    &eig.eigenvectors * DMatrix::from_diagonal(&mapped) * eig.eigenvectors.transpose()
}

/// Square root of a PSD matrix.
pub fn psd_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    spectral_map(a, f64::sqrt)
}

/// Moore-Penrose pseudo-inverse of a PSD matrix.
pub fn psd_pinv(a: &DMatrix<f64>) -> DMatrix<f64> {
    spectral_map(a, |v| 1.0 / v)
}

/// Square root of the pseudo-inverse of a PSD matrix.
pub fn psd_pinv_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    spectral_map(a, |v| 1.0 / v.sqrt())
}

fn lambda_max(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new((a + a.transpose()) * 0.5)
        .eigenvalues
        .max()
}

/// Columns `P` (one per Gram index) with `P^T P = G`, one row per numerically
/// nonzero eigenvalue. Negative eigenvalues within `rank_tol * trace` are
/// clipped.
pub fn factor_gram(g: &DMatrix<f64>, rank_tol: f64) -> Result<DMatrix<f64>> {
    factor_gram_truncated(g, rank_tol, RANK_TOLERANCE)
}

/// As `factor_gram`, also dropping eigenvalues below `cut * lambda_max`.
pub fn factor_gram_truncated(g: &DMatrix<f64>, rank_tol: f64, cut: f64) -> Result<DMatrix<f64>> {
    let n = g.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new((g + g.transpose()) * 0.5);
    let trace = g.trace().abs();
    let min = eig.eigenvalues.min();
    if min < -rank_tol * trace.max(f64::MIN_POSITIVE) && min < -f64::EPSILON * trace {
        return Err(PepError::Indefinite {
            min_eig: min,
            trace,
        });
    }
    let top = eig.eigenvalues.max().max(0.0);
    let keep: Vec<usize> = (0..n)
        .filter(|&k| eig.eigenvalues[k] > cut * top && eig.eigenvalues[k] > 0.0)
        .collect();
    Ok(DMatrix::from_fn(keep.len(), n, |r, c| {
        let k = keep[r];
        eig.eigenvalues[k].sqrt() * eig.eigenvectors[(c, k)]
    }))
}

/// Gram blocks of forward pairs `(X, Y)` and adjoint pairs `(U, V)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GramBlocks {
    /// `X^T X`
    pub a1: DMatrix<f64>,
    /// `X^T V`, equal to `Y^T U` under the interpolation conditions.
    pub b: DMatrix<f64>,
    /// `V^T V`
    pub c1: DMatrix<f64>,
    /// `Y^T Y`
    pub a2: DMatrix<f64>,
    /// `U^T U`
    pub c2: DMatrix<f64>,
}

impl GramBlocks {
    pub fn from_vectors(
        x: &DMatrix<f64>,
        y: &DMatrix<f64>,
        u: &DMatrix<f64>,
        v: &DMatrix<f64>,
    ) -> Self {
        Self {
            a1: x.transpose() * x,
            b: x.transpose() * v,
            c1: v.transpose() * v,
            a2: y.transpose() * y,
            c2: u.transpose() * u,
        }
    }

    pub fn n_forward(&self) -> usize {
        self.a1.nrows()
    }

    pub fn n_adjoint(&self) -> usize {
        self.c2.nrows()
    }

    /// `C1 - B^T A1^+ B`
    pub fn s1(&self) -> DMatrix<f64> {
        &self.c1 - self.b.transpose() * psd_pinv(&self.a1) * &self.b
    }

    /// `A2 - B C2^+ B^T`
    pub fn s2(&self) -> DMatrix<f64> {
        &self.a2 - &self.b * psd_pinv(&self.c2) * self.b.transpose()
    }

    /// Smallest `L` with `A2 <= L^2 A1` and `C1 <= L^2 C2`.
    pub fn minimal_bound(&self) -> f64 {
        let forward = {
            let r = psd_pinv_sqrt(&self.a1);
            lambda_max(&(&r * &self.a2 * &r))
        };
        let adjoint = {
            let r = psd_pinv_sqrt(&self.c2);
            lambda_max(&(&r * &self.c1 * &r))
        };
        forward.max(adjoint).max(0.0).sqrt()
    }
}

/// Structure imposed on the interpolating operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flavor {
    General,
    Symmetric,
    Skew,
}

/// `[[M1, M2], [M3, W]]` with `W` minimizing the spectral norm.
#[derive(Clone, Debug)]
pub struct Completion {
    pub matrix: DMatrix<f64>,
    pub w: DMatrix<f64>,
    /// Optimal norm reported by the solver.
    pub t_star: f64,
}

/// Chooses `W` (symmetric or skew-symmetric when asked) minimizing
/// `||[[M1, M2], [M3, W]]||` through the SDP `min t` subject to
/// `[[t I, M], [M^T, t I]] >= 0`.
pub fn complete_norm(
    m1: &DMatrix<f64>,
    m2: &DMatrix<f64>,
    m3: &DMatrix<f64>,
    flavor: Flavor,
    backend: &dyn ConicBackend,
    tol: f64,
) -> Result<Completion> {
    let (top, left) = (m1.nrows(), m1.ncols());
    let (bottom, right) = (m3.nrows(), m2.ncols());
    if m2.nrows() != top || m3.ncols() != left {
        return Err(PepError::Backend(
            "completion blocks are not conformable".into(),
        ));
    }
    if flavor != Flavor::General && (bottom != right || top != left) {
        return Err(PepError::Backend(
            "structured completion needs square blocks".into(),
        ));
    }
    let assemble = |w: &DMatrix<f64>| {
        let mut m = DMatrix::zeros(top + bottom, left + right);
        m.view_mut((0, 0), (top, left)).copy_from(m1);
        m.view_mut((0, left), (top, right)).copy_from(m2);
        m.view_mut((top, 0), (bottom, left)).copy_from(m3);
        m.view_mut((top, left), (bottom, right)).copy_from(w);
        m
    };

    if (top + bottom) * (left + right) == 0 {
        return Ok(Completion {
            matrix: assemble(&DMatrix::zeros(bottom, right)),
            w: DMatrix::zeros(bottom, right),
            t_star: 0.0,
        });
    }

    let (w_terms, num_w) = structured_terms(bottom, right, flavor, 0);
    let t = num_w;
    let mut prog = ConicProgram {
        num_vars: num_w + 1,
        q: vec![0.0; num_w + 1],
        ..ConicProgram::default()
    };
    prog.q[t] = 1.0;
    let fixed = assemble(&DMatrix::zeros(bottom, right));
    let m = AffineMatrix::from_fn(top + bottom, left + right, |r, c| {
        if r >= top && c >= left {
            (w_terms[(r - top) + (c - left) * bottom].clone(), 0.0)
        } else {
            (Vec::new(), fixed[(r, c)])
        }
    });
    push_norm_bound(&mut prog, &m, (vec![(t, 1.0)], 0.0));

    let sol = backend.solve(&prog, tol)?;
    if !matches!(
        sol.status,
        BackendStatus::Solved | BackendStatus::AlmostSolved
    ) {
        return Err(PepError::NotOptimal(format!(
            "norm completion: {:?}",
            sol.status
        )));
    }
    let w = DMatrix::from_fn(bottom, right, |i, j| {
        w_terms[i + j * bottom]
            .iter()
            .map(|&(k, c)| c * sol.x[k])
            .sum()
    });
    Ok(Completion {
        matrix: assemble(&w),
        w,
        t_star: sol.x[t],
    })
}

/// Affine function of the decision variables: `(terms, constant)`.
type Affine = (Vec<(usize, f64)>, f64);

/// Matrix whose entries are affine in the decision variables, column-major.
#[derive(Clone, Debug)]
struct AffineMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Affine>,
}

impl AffineMatrix {
    fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> Affine) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for c in 0..cols {
            for r in 0..rows {
                entries.push(f(r, c));
            }
        }
        Self {
            rows,
            cols,
            entries,
        }
    }

    fn get(&self, r: usize, c: usize) -> &Affine {
        &self.entries[r + c * self.rows]
    }

    /// `self * b - target`
    fn times_minus(&self, b: &DMatrix<f64>, target: &DMatrix<f64>) -> AffineMatrix {
        AffineMatrix::from_fn(self.rows, b.ncols(), |r, c| {
            let mut terms = Vec::new();
            let mut constant = -target[(r, c)];
            for k in 0..self.cols {
                let (t, k0) = self.get(r, k);
                let w = b[(k, c)];
                terms.extend(t.iter().map(|&(j, v)| (j, v * w)));
                constant += k0 * w;
            }
            (terms, constant)
        })
    }

    fn transpose(&self) -> AffineMatrix {
        AffineMatrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r).clone())
    }
}

/// Variable terms for every entry of a `rows x cols` matrix, free, symmetric
/// or skew-symmetric, using variables from `offset` on. Returns the terms in
/// column-major order and the number of variables used.
fn structured_terms(
    rows: usize,
    cols: usize,
    flavor: Flavor,
    offset: usize,
) -> (Vec<Vec<(usize, f64)>>, usize) {
    let mut terms: Vec<Vec<(usize, f64)>> = vec![Vec::new(); rows * cols];
    let mut count = 0;
    match flavor {
        Flavor::General => {
            for (k, t) in terms.iter_mut().enumerate() {
                t.push((offset + k, 1.0));
            }
            count = rows * cols;
        }
        Flavor::Symmetric | Flavor::Skew => {
            let skew = flavor == Flavor::Skew;
            for j in 0..cols {
                for i in 0..=j {
                    if skew && i == j {
                        continue;
                    }
                    terms[i + j * rows].push((offset + count, 1.0));
                    if i != j {
                        terms[j + i * rows].push((offset + count, if skew { -1.0 } else { 1.0 }));
                    }
                    count += 1;
                }
            }
        }
    }
    (terms, count)
}

/// Requires the symmetric matrix with upper entries `entry(i, j)` to be PSD.
fn push_psd(prog: &mut ConicProgram, size: usize, entry: impl Fn(usize, usize) -> Affine) {
    if size == 0 {
        return;
    }
    for j in 0..size {
        for i in 0..=j {
            let scale = if i == j {
                1.0
            } else {
                std::f64::consts::SQRT_2
            };
            let (coeffs, c) = entry(i, j);
            prog.push_row(&coeffs, -scale, scale * c);
        }
    }
    prog.push_cone(Cone::Psd(size));
    debug_assert_eq!(svec_index(size - 1, size - 1) + 1, size * (size + 1) / 2);
}

/// `||m|| <= bound` as `[[bound I, m], [m^T, bound I]] >= 0`.
fn push_norm_bound(prog: &mut ConicProgram, m: &AffineMatrix, bound: Affine) {
    let rows = m.rows;
    push_psd(prog, m.rows + m.cols, |i, j| {
        if i == j {
            bound.clone()
        } else if i < rows && j >= rows {
            m.get(i, j - rows).clone()
        } else {
            (Vec::new(), 0.0)
        }
    });
}

/// Operator acting on a reduced basis with the same Gram matrices as the
/// original pairs.
#[derive(Clone, Debug)]
pub struct ReducedInterpolant {
    pub m_r: DMatrix<f64>,
    pub x_r: DMatrix<f64>,
    pub y_r: DMatrix<f64>,
    pub u_r: DMatrix<f64>,
    pub v_r: DMatrix<f64>,
    pub t_star: f64,
}

/// Builds `M_R = [[C2^+^(1/2) B^T A1^+^(1/2), C2^+^(1/2) S1^(1/2)],
/// [S2^(1/2) A1^+^(1/2), W]]` with `X_R = [A1^(1/2); 0]`,
/// `U_R = [C2^(1/2); 0]`, and completes `W` so that `||M_R|| <= l`.
pub fn build_interpolant(
    blocks: &GramBlocks,
    l: f64,
    flavor: Flavor,
    backend: &dyn ConicBackend,
    tol: f64,
) -> Result<ReducedInterpolant> {
    let (n1, n2) = (blocks.n_forward(), blocks.n_adjoint());
    let a1_pinv_sqrt = psd_pinv_sqrt(&blocks.a1);
    let c2_pinv_sqrt = psd_pinv_sqrt(&blocks.c2);
    let m1 = &c2_pinv_sqrt * blocks.b.transpose() * &a1_pinv_sqrt;
    let m2 = &c2_pinv_sqrt * schur_sqrt(&blocks.s1(), &blocks.c1, &blocks.a1);
    let mut m3 = schur_sqrt(&blocks.s2(), &blocks.a2, &blocks.c2) * &a1_pinv_sqrt;
    if flavor == Flavor::Skew {
        m3 = -m3;
    }
    let completion = complete_norm(&m1, &m2, &m3, flavor, backend, tol)?;
    if completion.t_star > l * (1.0 + COMPLETION_SLACK) + COMPLETION_SLACK {
        return Err(PepError::CompletionFailed {
            t_star: completion.t_star,
            bound: l,
        });
    }
    let m_r = completion.matrix;
    let mut x_r = DMatrix::zeros(n1 + n2, n1);
    x_r.view_mut((0, 0), (n1, n1))
        .copy_from(&psd_sqrt(&blocks.a1));
    let mut u_r = DMatrix::zeros(n2 + n1, n2);
    u_r.view_mut((0, 0), (n2, n2))
        .copy_from(&psd_sqrt(&blocks.c2));
    let y_r = &m_r * &x_r;
    let v_r = m_r.transpose() * &u_r;
    Ok(ReducedInterpolant {
        m_r,
        x_r,
        y_r,
        u_r,
        v_r,
        t_star: completion.t_star,
    })
}

fn pad_rows(a: &DMatrix<f64>, rows: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows, a.ncols());
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out
}

fn hstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows().max(b.nrows()), a.ncols() + b.ncols());
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out.view_mut((0, a.ncols()), (b.nrows(), b.ncols()))
        .copy_from(b);
    out
}

/// Orthogonal `Q` minimizing `||Q P - P_R||_F`.
fn procrustes(p: &DMatrix<f64>, p_r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = p.nrows();
    if d == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let svd = Svd::new(p_r * p.transpose())
        .ok_or_else(|| PepError::Backend("Procrustes SVD did not converge".into()))?;
    Ok(svd.u * svd.v_t)
}

/// Rotates a reduced interpolant onto the original pairs: returns the
/// `m x n` operator `(V_H^T M_R V_G)` restricted to the leading block, where
/// `V_G` maps `[X V]` onto `[X_R V_R]` and `V_H` maps `[Y U]` onto
/// `[Y_R U_R]`. With `same_rotation`, `V_H = V_G`.
pub fn align(
    reduced: &ReducedInterpolant,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    same_rotation: bool,
) -> Result<DMatrix<f64>> {
    let (n, m) = (x.nrows(), y.nrows());
    let (n_r, m_r) = (reduced.m_r.ncols(), reduced.m_r.nrows());
    let d_n = n.max(n_r);
    let d_m = m.max(m_r);
    let left = pad_rows(&hstack(x, v), d_n);
    let left_r = pad_rows(&hstack(&reduced.x_r, &reduced.v_r), d_n);
    let v_g = procrustes(&left, &left_r)?;
    let v_h = if same_rotation {
        v_g.clone()
    } else {
        let right = pad_rows(&hstack(y, u), d_m);
        let right_r = pad_rows(&hstack(&reduced.y_r, &reduced.u_r), d_m);
        procrustes(&right, &right_r)?
    };
    let mut padded = DMatrix::zeros(d_m, d_n);
    padded.view_mut((0, 0), (m_r, n_r)).copy_from(&reduced.m_r);
    let full = v_h.transpose() * padded * v_g;
    Ok(full.view((0, 0), (m, n)).into_owned())
}

/// Operator of `class` with `M X = Y` and `M^T U = V`. For square classes
/// the adjoint pairs are folded into forward pairs; a symmetric class is
/// shifted to a ball of radius `(L - mu) / 2` around `(L + mu) / 2`.
pub fn interpolate_operator(
    class: &OperatorClass,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    backend: &dyn ConicBackend,
    tol: f64,
) -> Result<DMatrix<f64>> {
    class.validate()?;
    match *class {
        OperatorClass::GeneralBounded { l } => {
            let blocks = GramBlocks::from_vectors(x, y, u, v);
            let reduced = build_interpolant(&blocks, l, Flavor::General, backend, tol)?;
            align(&reduced, x, y, u, v, false)
        }
        OperatorClass::GeneralUnbounded => {
            let blocks = GramBlocks::from_vectors(x, y, u, v);
            let l = blocks.minimal_bound();
            let reduced = build_interpolant(&blocks, l, Flavor::General, backend, tol)?;
            align(&reduced, x, y, u, v, false)
        }
        OperatorClass::Symmetric { mu, l } => {
            let xs = hstack(x, u);
            let ys = hstack(y, v);
            let center = 0.5 * (l + mu);
            let radius = 0.5 * (l - mu);
            let n = xs.nrows();
            if radius == 0.0 || xs.ncols() == 0 {
                return Ok(DMatrix::identity(n, n) * center);
            }
            let shifted = &ys - &xs * center;
            let blocks = GramBlocks::from_vectors(&xs, &shifted, &xs, &shifted);
            let reduced = build_interpolant(&blocks, radius, Flavor::Symmetric, backend, tol)?;
            let m = align(&reduced, &xs, &shifted, &xs, &shifted, true)?;
            Ok(symmetrize(&m) + DMatrix::identity(n, n) * center)
        }
        OperatorClass::SkewSymmetric { l } => {
            let xs = hstack(x, u);
            let ys = hstack(y, &-v);
            let n = xs.nrows();
            if xs.ncols() == 0 {
                return Ok(DMatrix::zeros(n, n));
            }
            let neg = -&ys;
            let blocks = GramBlocks::from_vectors(&xs, &ys, &xs, &neg);
            let reduced = build_interpolant(&blocks, l, Flavor::Skew, backend, tol)?;
            let m = align(&reduced, &xs, &ys, &xs, &neg, true)?;
            Ok((&m - m.transpose()) * 0.5)
        }
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn shifted(a: &Affine, scale: f64, shift: f64) -> Affine {
    (
        a.0.iter().map(|&(j, v)| (j, scale * v)).collect(),
        scale * a.1 + shift,
    )
}

/// Operator of `class` minimizing the larger of `||M X - Y||` and
/// `||M^T U - V||` (spectral norms). Used when the pairs satisfy the
/// interpolation conditions only up to solver accuracy.
pub fn fit_operator(
    class: &OperatorClass,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    backend: &dyn ConicBackend,
    tol: f64,
) -> Result<DMatrix<f64>> {
    class.validate()?;
    let (n, m) = (x.nrows(), y.nrows());
    let flavor = match class {
        OperatorClass::Symmetric { .. } => Flavor::Symmetric,
        OperatorClass::SkewSymmetric { .. } => Flavor::Skew,
        _ => Flavor::General,
    };
    let (terms, count) = structured_terms(m, n, flavor, 0);
    if m * n == 0 {
        return Ok(DMatrix::zeros(m, n));
    }
    let r = count;
    let mut prog = ConicProgram {
        num_vars: count + 1,
        q: vec![0.0; count + 1],
        ..ConicProgram::default()
    };
    prog.q[r] = 1.0;
    let op = AffineMatrix {
        rows: m,
        cols: n,
        entries: terms.into_iter().map(|t| (t, 0.0)).collect(),
    };
    let residual_bound = (vec![(r, 1.0)], 0.0);
    push_norm_bound(&mut prog, &op.times_minus(x, y), residual_bound.clone());
    push_norm_bound(&mut prog, &op.transpose().times_minus(u, v), residual_bound);
    match *class {
        OperatorClass::GeneralBounded { l } | OperatorClass::SkewSymmetric { l } => {
            push_norm_bound(&mut prog, &op, (Vec::new(), l));
        }
        OperatorClass::GeneralUnbounded => {
            let l = GramBlocks::from_vectors(x, y, u, v).minimal_bound();
            push_norm_bound(&mut prog, &op, (Vec::new(), l));
        }
        OperatorClass::Symmetric { mu, l } => {
            let delta = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
            push_psd(&mut prog, n, |i, j| {
                shifted(op.get(i, j), 1.0, -mu * delta(i, j))
            });
            push_psd(&mut prog, n, |i, j| {
                shifted(op.get(i, j), -1.0, l * delta(i, j))
            });
        }
    }
    let sol = backend.solve(&prog, tol)?;
    if !matches!(
        sol.status,
        BackendStatus::Solved | BackendStatus::AlmostSolved
    ) {
        return Err(PepError::NotOptimal(format!(
            "operator fit: {:?}",
            sol.status
        )));
    }
    let fitted = DMatrix::from_fn(m, n, |i, j| {
        op.get(i, j).0.iter().map(|&(k, c)| c * sol.x[k]).sum()
    });
    Ok(match flavor {
        Flavor::General => fitted,
        Flavor::Symmetric => symmetrize(&fitted),
        Flavor::Skew => (&fitted - fitted.transpose()) * 0.5,
    })
}

/// How the operator of a recovered instance was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperatorSource {
    /// No operator in the problem.
    Absent,
    /// Block construction with norm completion.
    Construction,
    /// Least-residual fit under the class constraints.
    LeastResidual,
}

impl OperatorSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            OperatorSource::Absent => "absent",
            OperatorSource::Construction => "construction",
            OperatorSource::LeastResidual => "least-residual",
        }
    }
}

/// Concrete vectors, operator and residuals of a solved worst case.
#[derive(Clone, Debug)]
pub struct WorstCaseInstance {
    /// Coordinates of every basis vector, by basis id.
    pub basis: Vec<DVector<f64>>,
    pub iterates: Vec<DVector<f64>>,
    pub x_star: DVector<f64>,
    /// Forward pair inputs and outputs and adjoint pair inputs and outputs,
    /// one column per pair.
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub operator: Option<DMatrix<f64>>,
    pub source: OperatorSource,
    /// Norm bound the operator was built for.
    pub operator_bound: Option<f64>,
    pub sigma_max: f64,
    /// `||Y - M X||_F`
    pub forward_residual: f64,
    /// `||V - M^T U||_F`
    pub adjoint_residual: f64,
    /// Worst violation of the function interpolation conditions at the
    /// recovered points.
    pub function_residual: f64,
    /// `Q` of every homogeneous quadratic `x^T Q x / 2` in the problem, with
    /// `Q x_i = g_i` at the recovered points.
    pub hessians: Vec<DMatrix<f64>>,
    /// Relative eigenvalue cut used when factoring the Gram matrices.
    pub rank_cut: f64,
    /// Criterion evaluated on the recovered vectors, in solved units.
    pub replayed_objective: f64,
    /// Solver objective, in solved units.
    pub solver_objective: f64,
}

/// Relative residual accepted from a least-residual fit, as a multiple of
/// the square root of the solver tolerance.
pub const FIT_RESIDUAL_FACTOR: f64 = 10.0;
/// Relative gap accepted between the replayed and the solver objective.
pub const REPLAY_TOLERANCE: f64 = 1e-5;

/// Factors the optimal Gram matrices of `wc` into vectors, builds an
/// interpolating operator and checks every residual.
///
/// The block construction is tried first with increasingly aggressive
/// truncation of solver noise in the Gram matrices. When every attempt
/// fails its checks, the operator is fitted by least residual and accepted
/// up to `FIT_RESIDUAL_FACTOR * sqrt(tol)`.
pub fn recover_instance(
    wc: &WorstCase,
    backend: &dyn ConicBackend,
    tol: f64,
) -> Result<WorstCaseInstance> {
    if wc.result.status != SolveStatus::Optimal {
        return Err(PepError::NotOptimal(wc.result.status.as_str().into()));
    }
    let mut cuts = vec![RANK_TOLERANCE];
    for cut in [SOLVER_NOISE_FACTOR * tol, 1e3 * tol] {
        if cut > *cuts.last().unwrap() {
            cuts.push(cut);
        }
    }
    let mut last = None;
    let primary = if wc.trajectory.m_class.is_some() {
        OperatorSource::Construction
    } else {
        OperatorSource::Absent
    };
    for &cut in &cuts {
        match recover_with(wc, backend, tol, cut, primary, RESIDUAL_TOLERANCE) {
            Ok(inst) => return Ok(inst),
            Err(e) => last = Some(e),
        }
    }
    if primary == OperatorSource::Construction {
        let relaxed = RESIDUAL_TOLERANCE.max(FIT_RESIDUAL_FACTOR * tol.sqrt());
        for &cut in &cuts {
            match recover_with(
                wc,
                backend,
                tol,
                cut,
                OperatorSource::LeastResidual,
                relaxed,
            ) {
                Ok(inst) => return Ok(inst),
                Err(e) => last = Some(e),
            }
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Symmetric `Q` with spectrum in `[mu, l]` mapping every recovered point to
/// its gradient.
fn recover_hessian(
    mu: f64,
    l: f64,
    points: &[FunctionPoint],
    asg: &Assignment,
    backend: &dyn ConicBackend,
    tol: f64,
    residual_tol: f64,
) -> Result<DMatrix<f64>> {
    let xs: Vec<DVector<f64>> = points.iter().map(|p| asg.eval_vector(&p.x)).collect();
    let gs: Vec<DVector<f64>> = points.iter().map(|p| asg.eval_vector(&p.g)).collect();
    let dim = xs.first().map_or(0, |v| v.len());
    let stack = |cols: &[DVector<f64>]| {
        if cols.is_empty() {
            DMatrix::zeros(dim, 0)
        } else {
            DMatrix::from_columns(cols)
        }
    };
    let (x, g) = (stack(&xs), stack(&gs));
    let empty = DMatrix::zeros(dim, 0);
    let class = OperatorClass::Symmetric { mu, l };
    let q = match interpolate_operator(&class, &x, &g, &empty, &empty, backend, tol) {
        Ok(q) if (&g - &q * &x).norm() <= residual_tol * (1.0 + x.norm()) => q,
        _ => fit_operator(&class, &x, &g, &empty, &empty, backend, tol)?,
    };
    let residual = (&g - &q * &x).norm();
    if residual > residual_tol.max(FIT_RESIDUAL_FACTOR * tol.sqrt()) * (1.0 + x.norm()) {
        return Err(PepError::ResidualCheck {
            what: "||G - Q X||".into(),
            value: residual,
        });
    }
    Ok(q)
}

fn recover_with(
    wc: &WorstCase,
    backend: &dyn ConicBackend,
    tol: f64,
    cut: f64,
    source: OperatorSource,
    residual_tol: f64,
) -> Result<WorstCaseInstance> {
    let result = &wc.result;
    let builder = wc.problem.builder();
    let factors = result
        .grams
        .iter()
        .map(|g| factor_gram_truncated(g, INDEFINITE_TOLERANCE, cut))
        .collect::<Result<Vec<_>>>()?;

    let mut asg = Assignment::new();
    let mut basis = Vec::with_capacity(builder.vectors().len());
    for b in builder.vectors() {
        let (space, pos) = result.gram_position(b.id);
        let coords = factors[space].column(pos).into_owned();
        asg.set_vector(b, coords.clone());
        basis.push(coords);
    }
    for (k, &v) in result.values.iter().enumerate() {
        asg.set_value(crate::expr::ValueId(k), v);
    }
    for (k, &v) in result.aux.iter().enumerate() {
        asg.set_aux(crate::expr::AuxId(k), v);
    }

    let replayed_objective = asg.eval(&wc.criterion);
    let solver_objective = result.objective;
    if (replayed_objective - solver_objective).abs()
        > REPLAY_TOLERANCE * (1.0 + solver_objective.abs())
    {
        return Err(PepError::ResidualCheck {
            what: "replayed objective".into(),
            value: replayed_objective - solver_objective,
        });
    }

    let traj = &wc.trajectory;
    let dim = |space: crate::expr::SpaceId| factors[space.index()].nrows();
    let columns = |dir: Direction, input: bool, rows: usize| {
        let cols: Vec<DVector<f64>> = traj
            .op_points
            .iter()
            .filter(|p| p.direction == dir)
            .map(|p| asg.eval_vector(if input { &p.input } else { &p.output }))
            .collect();
        let mut m = DMatrix::zeros(rows, cols.len());
        for (k, c) in cols.iter().enumerate() {
            m.view_mut((0, k), (c.len(), 1)).copy_from(c);
        }
        m
    };
    let (n, m) = (dim(traj.primal), dim(traj.image));
    let x = columns(Direction::Forward, true, n);
    let y = columns(Direction::Forward, false, m);
    let u = columns(Direction::Adjoint, true, m);
    let v = columns(Direction::Adjoint, false, n);

    let (operator, operator_bound) = match &traj.m_class {
        None => (None, None),
        Some(class) => {
            let op = match source {
                OperatorSource::LeastResidual => fit_operator(class, &x, &y, &u, &v, backend, tol)?,
                _ => interpolate_operator(class, &x, &y, &u, &v, backend, tol)?,
            };
            let bound = match class.norm_bound() {
                Some(l) => l,
                None => GramBlocks::from_vectors(&x, &y, &u, &v).minimal_bound(),
            };
            (Some(op), Some(bound))
        }
    };
    let (sigma, forward_residual, adjoint_residual) = match &operator {
        Some(op) => (
            sigma_max(op),
            (&y - op * &x).norm(),
            (&v - op.transpose() * &u).norm(),
        ),
        None => (0.0, 0.0, 0.0),
    };
    if forward_residual > residual_tol * (1.0 + x.norm()) {
        return Err(PepError::ResidualCheck {
            what: "||Y - M X||".into(),
            value: forward_residual,
        });
    }
    if adjoint_residual > residual_tol * (1.0 + u.norm()) {
        return Err(PepError::ResidualCheck {
            what: "||V - M^T U||".into(),
            value: adjoint_residual,
        });
    }
    if let Some(l) = operator_bound {
        if sigma > l + RESIDUAL_TOLERANCE * (1.0 + l) {
            return Err(PepError::ResidualCheck {
                what: "sigma_max(M) - L".into(),
                value: sigma - l,
            });
        }
    }

    let mut function_residual: f64 = 0.0;
    let mut hessians = Vec::new();
    for (class, points) in [
        (&traj.f_class, &traj.f_points),
        (&traj.g_class, &traj.g_points),
    ] {
        if let Some(class) = class {
            let set = function_conditions(class, points)?;
            function_residual = function_residual.max(set.violation(&asg).max());
            if let FunctionClass::Quadratic { mu, l } = *class {
                hessians.push(recover_hessian(
                    mu,
                    l,
                    points,
                    &asg,
                    backend,
                    tol,
                    residual_tol,
                )?);
            }
        }
    }

    Ok(WorstCaseInstance {
        iterates: traj.iterates.iter().map(|v| asg.eval_vector(v)).collect(),
        x_star: asg.eval_vector(&traj.x_star),
        basis,
        x,
        y,
        u,
        v,
        operator,
        source,
        operator_bound,
        sigma_max: sigma,
        forward_residual,
        adjoint_residual,
        function_residual,
        hessians,
        rank_cut: cut,
        replayed_objective,
        solver_objective,
    })
}

fn write_matrix(out: &mut String, name: &str, m: &DMatrix<f64>) {
    let _ = writeln!(out, "{name} {} {}", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .map(|j| format!("{:.16e}", m[(i, j)]))
            .collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
}

impl WorstCaseInstance {
    /// Plain-text dump: a `key value` header followed by matrices, each
    /// introduced by `name rows cols` and written row-major with 17
    /// significant digits.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "solver_objective {:.16e}", self.solver_objective);
        let _ = writeln!(out, "replayed_objective {:.16e}", self.replayed_objective);
        if let Some(l) = self.operator_bound {
            let _ = writeln!(out, "operator_bound {l:.16e}");
        }
        let _ = writeln!(out, "operator_source {}", self.source.as_str());
        let _ = writeln!(out, "rank_cut {:.16e}", self.rank_cut);
        let _ = writeln!(out, "sigma_max {:.16e}", self.sigma_max);
        let _ = writeln!(out, "forward_residual {:.16e}", self.forward_residual);
        let _ = writeln!(out, "adjoint_residual {:.16e}", self.adjoint_residual);
        let _ = writeln!(out, "function_residual {:.16e}", self.function_residual);
        let iterates = if self.iterates.is_empty() {
            DMatrix::zeros(self.x_star.len(), 0)
        } else {
            DMatrix::from_columns(&self.iterates)
        };
        write_matrix(&mut out, "iterates", &iterates);
        write_matrix(
            &mut out,
            "x_star",
            &DMatrix::from_column_slice(self.x_star.len(), 1, self.x_star.as_slice()),
        );
        write_matrix(&mut out, "X", &self.x);
        write_matrix(&mut out, "Y", &self.y);
        write_matrix(&mut out, "U", &self.u);
        write_matrix(&mut out, "V", &self.v);
        if let Some(m) = &self.operator {
            write_matrix(&mut out, "M", m);
        }
        for (k, q) in self.hessians.iter().enumerate() {
            write_matrix(&mut out, &format!("Q{k}"), q);
        }
        out
    }

    pub fn export(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())
            .map_err(|e| PepError::Io(format!("{}: {e}", path.display())))
    }
}
