//! Problem abstraction: the residual map `f`, its Jacobian, the domain it is
//! defined on, and the iteration-matrix policy `M(x)`.

use std::cell::Cell;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Axis-aligned box standing in for the open domain `U`. Bounds may be
/// infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DomainBox {
    pub fn unbounded(n: usize) -> Self {
        Self { lower: vec![f64::NEG_INFINITY; n], upper: vec![f64::INFINITY; n] }
    }

    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), got: upper.len() });
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::InvalidArgument("domain box lower bound must be below upper bound".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.lower.len()
            && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    pub fn check(&self, x: &[f64]) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::DomainViolation { point: x.to_vec() })
        }
    }
}

/// A nonlinear system `f(x) = 0` on a subset of `R^n`.
pub trait Problem {
    fn dim(&self) -> usize;

    fn eval_f(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Writes `f(x)` into `out`; override to avoid the allocation in hot loops.
    fn eval_f_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let f = self.eval_f(x)?;
        if f.len() != out.len() {
            return Err(Error::DimensionMismatch { expected: out.len(), got: f.len() });
        }
        out.copy_from_slice(&f);
        Ok(())
    }

    fn eval_jacobian(&self, x: &[f64]) -> Result<Matrix>;

    fn domain(&self) -> &DomainBox;

    /// Zeros used to classify experiment outcomes. Empty when unknown.
    fn known_zeros(&self) -> &[Vec<f64>] {
        &[]
    }

    /// Points where the Jacobian is singular, when they are isolated and known.
    fn singular_points(&self) -> &[Vec<f64>] {
        &[]
    }

    /// `Some(d)` for `z^d - 1` in real form, whose continuous Newton flow
    /// partitions the plane into `d` angular sectors. `known_zeros()[k]`
    /// must then be the root at angle `2 pi k / d`.
    fn angular_sectors(&self) -> Option<usize> {
        None
    }

    fn name(&self) -> &str {
        "anonymous"
    }
}

impl<P: Problem + ?Sized> Problem for &P {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval_f(&self, x: &[f64]) -> Result<Vec<f64>> {
        (**self).eval_f(x)
    }
    fn eval_f_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        (**self).eval_f_into(x, out)
    }
    fn eval_jacobian(&self, x: &[f64]) -> Result<Matrix> {
        (**self).eval_jacobian(x)
    }
    fn domain(&self) -> &DomainBox {
        (**self).domain()
    }
    fn known_zeros(&self) -> &[Vec<f64>] {
        (**self).known_zeros()
    }
    fn singular_points(&self) -> &[Vec<f64>] {
        (**self).singular_points()
    }
    fn angular_sectors(&self) -> Option<usize> {
        (**self).angular_sectors()
    }
    fn name(&self) -> &str {
        (**self).name()
    }
}

impl<P: Problem + ?Sized> Problem for Box<P> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval_f(&self, x: &[f64]) -> Result<Vec<f64>> {
        (**self).eval_f(x)
    }
    fn eval_f_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        (**self).eval_f_into(x, out)
    }
    fn eval_jacobian(&self, x: &[f64]) -> Result<Matrix> {
        (**self).eval_jacobian(x)
    }
    fn domain(&self) -> &DomainBox {
        (**self).domain()
    }
    fn known_zeros(&self) -> &[Vec<f64>] {
        (**self).known_zeros()
    }
    fn singular_points(&self) -> &[Vec<f64>] {
        (**self).singular_points()
    }
    fn angular_sectors(&self) -> Option<usize> {
        (**self).angular_sectors()
    }
    fn name(&self) -> &str {
        (**self).name()
    }
}

/// Which matrix `M(x)` defines the Newton-type correction `-M(x)^-1 f(x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum MatrixPolicy {
    /// `M(x) = Id` (Picard iteration).
    Identity,
    /// `M(x) = J_f(x)` (damped Newton).
    CurrentJacobian,
    /// `M(x) = J_f(x_s)` for a fixed base point (simplified Newton).
    FrozenJacobian { base: Vec<f64>, matrix: Matrix },
}

impl MatrixPolicy {
    pub fn frozen_at<P: Problem + ?Sized>(problem: &P, base: &[f64]) -> Result<Self> {
        let matrix = problem.eval_jacobian(base)?;
        Ok(MatrixPolicy::FrozenJacobian { base: base.to_vec(), matrix })
    }

    /// Evaluates `M(x)`.
    pub fn matrix_at<P: Problem + ?Sized>(&self, problem: &P, x: &[f64]) -> Result<Matrix> {
        match self {
            MatrixPolicy::Identity => Ok(Matrix::identity(problem.dim())),
            MatrixPolicy::CurrentJacobian => problem.eval_jacobian(x),
            MatrixPolicy::FrozenJacobian { matrix, .. } => Ok(matrix.clone()),
        }
    }

    /// Builds `M(x)` from an already evaluated Jacobian at `x`.
    pub fn matrix_from_jacobian(&self, jac_at_x: &Matrix) -> Matrix {
        match self {
            MatrixPolicy::Identity => Matrix::identity(jac_at_x.dim()),
            MatrixPolicy::CurrentJacobian => jac_at_x.clone(),
            MatrixPolicy::FrozenJacobian { matrix, .. } => matrix.clone(),
        }
    }
}

/// Central-difference Jacobian, column by column.
pub fn finite_difference_jacobian<P: Problem + ?Sized>(problem: &P, x: &[f64], h: f64) -> Result<Matrix> {
    let n = problem.dim();
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("finite-difference step must be positive, got {h}")));
    }
    let mut jac = Matrix::zeros(n);
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    for j in 0..n {
        xp[j] = x[j] + h;
        xm[j] = x[j] - h;
        problem.domain().check(&xp)?;
        problem.domain().check(&xm)?;
        let fp = problem.eval_f(&xp)?;
        let fm = problem.eval_f(&xm)?;
        for i in 0..n {
            jac.set(i, j, (fp[i] - fm[i]) / (2.0 * h));
        }
        xp[j] = x[j];
        xm[j] = x[j];
    }
    Ok(jac)
}

/// `eps^(1/3) * max(1, ||x||)`
pub fn default_fd_step(x: &[f64]) -> f64 {
    f64::EPSILON.cbrt() * crate::linalg::norm2(x).max(1.0)
}

/// `z^d - 1` on `C = R^2`, split into real and imaginary parts.
#[derive(Debug, Clone)]
pub struct RootsOfUnity {
    degree: u32,
    id: String,
    domain: DomainBox,
    zeros: Vec<Vec<f64>>,
    singular: Vec<Vec<f64>>,
}

impl RootsOfUnity {
    pub fn new(degree: u32) -> Self {
        assert!(degree >= 2, "degree must be at least 2");
        let zeros = (0..degree)
            .map(|k| {
                let theta = 2.0 * PI * k as f64 / degree as f64;
                vec![round_tiny(theta.cos()), round_tiny(theta.sin())]
            })
            .collect();
        Self {
            degree,
            id: format!("z{degree}m1"),
            domain: DomainBox::unbounded(2),
            zeros,
            singular: vec![vec![0.0, 0.0]],
        }
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }
}

// cos(pi/2) and friends come out as 6e-17; snap them so the listed zeros are exact
fn round_tiny(v: f64) -> f64 {
    if v.abs() < 1e-15 {
        0.0
    } else {
        v
    }
}

#[inline]
fn cpow(re: f64, im: f64, k: u32) -> (f64, f64) {
    // square-and-multiply keeps the dependency chain at O(log k)
    let (mut pr, mut pi) = (1.0, 0.0);
    let (mut br, mut bi) = (re, im);
    let mut e = k;
    while e > 0 {
        if e & 1 == 1 {
            let t = pr * br - pi * bi;
            pi = pr * bi + pi * br;
            pr = t;
        }
        e >>= 1;
        if e > 0 {
            let t = br * br - bi * bi;
            bi *= 2.0 * br;
            br = t;
        }
    }
    (pr, pi)
}

impl Problem for RootsOfUnity {
    fn dim(&self) -> usize {
        2
    }

    fn eval_f(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: x.len() });
        }
        let (re, im) = cpow(x[0], x[1], self.degree);
        Ok(vec![re - 1.0, im])
    }

    fn eval_f_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != 2 || out.len() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: x.len().max(out.len()) });
        }
        let (re, im) = cpow(x[0], x[1], self.degree);
        out[0] = re - 1.0;
        out[1] = im;
        Ok(())
    }

    fn eval_jacobian(&self, x: &[f64]) -> Result<Matrix> {
        if x.len() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: x.len() });
        }
        // Cauchy-Riemann: J = [[a, -b], [b, a]] with a + ib = d z^(d-1)
        let (re, im) = cpow(x[0], x[1], self.degree - 1);
        let d = self.degree as f64;
        let (a, b) = (d * re, d * im);
        Matrix::from_row_major(2, vec![a, -b, b, a])
    }

    fn domain(&self) -> &DomainBox {
        &self.domain
    }

    fn known_zeros(&self) -> &[Vec<f64>] {
        &self.zeros
    }

    fn singular_points(&self) -> &[Vec<f64>] {
        &self.singular
    }

    fn angular_sectors(&self) -> Option<usize> {
        Some(self.degree as usize)
    }

    fn name(&self) -> &str {
        &self.id
    }
}

/// Intersection of the circle `x^2 + y^2 = 2` with the diagonal `x = y`.
/// Zeros at `(1, 1)` and `(-1, -1)`; the Jacobian is singular on `x = -y`.
#[derive(Debug, Clone)]
pub struct CircleDiagonal {
    domain: DomainBox,
    zeros: Vec<Vec<f64>>,
}

impl Default for CircleDiagonal {
    fn default() -> Self {
        Self { domain: DomainBox::unbounded(2), zeros: vec![vec![1.0, 1.0], vec![-1.0, -1.0]] }
    }
}

impl Problem for CircleDiagonal {
    fn dim(&self) -> usize {
        2
    }

    fn eval_f(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: x.len() });
        }
        Ok(vec![x[0] * x[0] + x[1] * x[1] - 2.0, x[0] - x[1]])
    }

    fn eval_f_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != 2 || out.len() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: x.len().max(out.len()) });
        }
        out[0] = x[0] * x[0] + x[1] * x[1] - 2.0;
        out[1] = x[0] - x[1];
        Ok(())
    }

    fn eval_jacobian(&self, x: &[f64]) -> Result<Matrix> {
        if x.len() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: x.len() });
        }
        Matrix::from_row_major(2, vec![2.0 * x[0], 2.0 * x[1], 1.0, -1.0])
    }

    fn domain(&self) -> &DomainBox {
        &self.domain
    }

    fn known_zeros(&self) -> &[Vec<f64>] {
        &self.zeros
    }

    fn name(&self) -> &str {
        "circle"
    }
}

/// Problem assembled from closures. Mostly useful for tests and small
/// experiments.
pub struct FnProblem<F, J> {
    n: usize,
    f: F,
    jac: J,
    domain: DomainBox,
    zeros: Vec<Vec<f64>>,
    name: String,
}

impl<F, J> FnProblem<F, J>
where
    F: Fn(&[f64]) -> Vec<f64>,
    J: Fn(&[f64]) -> Matrix,
{
    pub fn new(n: usize, f: F, jac: J) -> Self {
        Self { n, f, jac, domain: DomainBox::unbounded(n), zeros: Vec::new(), name: "fn".into() }
    }

    pub fn with_domain(mut self, domain: DomainBox) -> Self {
        self.domain = domain;
        self
    }

    pub fn with_zeros(mut self, zeros: Vec<Vec<f64>>) -> Self {
        self.zeros = zeros;
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

impl<F, J> Problem for FnProblem<F, J>
where
    F: Fn(&[f64]) -> Vec<f64>,
    J: Fn(&[f64]) -> Matrix,
{
    fn dim(&self) -> usize {
        self.n
    }

    fn eval_f(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: x.len() });
        }
        self.domain.check(x)?;
        Ok((self.f)(x))
    }

    fn eval_jacobian(&self, x: &[f64]) -> Result<Matrix> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: x.len() });
        }
        self.domain.check(x)?;
        Ok((self.jac)(x))
    }

    fn domain(&self) -> &DomainBox {
        &self.domain
    }

    fn known_zeros(&self) -> &[Vec<f64>] {
        &self.zeros
    }

    fn name(&self) -> &str {
        &self.name
    }
}

/// Identifiers accepted by [`builtin`].
pub const BUILTIN_PROBLEMS: &[&str] = &["z6m1", "z3m1", "circle"];

pub type SharedProblem = Box<dyn Problem + Send + Sync>;

pub fn builtin(id: &str) -> Result<SharedProblem> {
    match id {
        "z6m1" => Ok(Box::new(RootsOfUnity::new(6))),
        "z3m1" => Ok(Box::new(RootsOfUnity::new(3))),
        "circle" => Ok(Box::new(CircleDiagonal::default())),
        other => Err(Error::UnknownProblem(other.to_string())),
    }
}

/// Wraps a problem and counts residual and Jacobian evaluations.
pub struct Counted<'a, P: ?Sized> {
    inner: &'a P,
    f_evals: Cell<u64>,
    j_evals: Cell<u64>,
}

impl<'a, P: Problem + ?Sized> Counted<'a, P> {
    pub fn new(inner: &'a P) -> Self {
        Self { inner, f_evals: Cell::new(0), j_evals: Cell::new(0) }
    }

    pub fn f_evals(&self) -> u64 {
        self.f_evals.get()
    }

    pub fn j_evals(&self) -> u64 {
        self.j_evals.get()
    }
}

impl<P: Problem + ?Sized> Problem for Counted<'_, P> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval_f(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.f_evals.set(self.f_evals.get() + 1);
        self.inner.eval_f(x)
    }

    fn eval_f_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.f_evals.set(self.f_evals.get() + 1);
        self.inner.eval_f_into(x, out)
    }

    fn eval_jacobian(&self, x: &[f64]) -> Result<Matrix> {
        self.j_evals.set(self.j_evals.get() + 1);
        self.inner.eval_jacobian(x)
    }

    fn domain(&self) -> &DomainBox {
        self.inner.domain()
    }

    fn known_zeros(&self) -> &[Vec<f64>] {
        self.inner.known_zeros()
    }

    fn singular_points(&self) -> &[Vec<f64>] {
        self.inner.singular_points()
    }

    fn angular_sectors(&self) -> Option<usize> {
        self.inner.angular_sectors()
    }

    fn name(&self) -> &str {
        self.inner.name()
    }
}
