//! Dense linear-algebra and integration kernels.
//!
//! Everything here is a pure function of its inputs. Matrices and vectors are
//! `nalgebra` dense types of `f64`; [`checked_matrix`] and [`checked_vector`]
//! enforce the finite-entry invariant at construction boundaries.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use thiserror::Error;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative tolerance used when deciding whether a Lyapunov/Riccati solution
/// is accurate enough.
pub const RESIDUAL_TOL: f64 = 1e-9;

/// Tolerance used by eigenvalue-based checks.
pub const EIGEN_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },
    #[error("non-finite entry in {0}")]
    NotFinite(&'static str),
    #[error("infeasible: spectral radius {spectral_radius} is not below 1")]
    Infeasible { spectral_radius: f64 },
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("{op} did not converge after {iterations} iterations")]
    NoConvergence { op: &'static str, iterations: usize },
    #[error("integration blew up at t = {time}")]
    BlowUp { time: f64 },
    #[error("step {step} does not divide span length {length}")]
    StepMismatch { step: f64, length: f64 },
}

pub type Result<T> = std::result::Result<T, NumericsError>;

fn dim_err<T>(op: &'static str, detail: impl Into<String>) -> Result<T> {
    Err(NumericsError::Dimension {
        op,
        detail: detail.into(),
    })
}

/// Builds a matrix from row-major entries, rejecting empty shapes and
/// non-finite values.
pub fn checked_matrix(rows: usize, cols: usize, row_major: &[f64]) -> Result<Matrix> {
    if rows == 0 || cols == 0 || row_major.len() != rows * cols {
        return dim_err(
            "checked_matrix",
            format!("{rows}x{cols} from {} entries", row_major.len()),
        );
    }
    if row_major.iter().any(|v| !v.is_finite()) {
        return Err(NumericsError::NotFinite("matrix"));
    }
    Ok(Matrix::from_row_slice(rows, cols, row_major))
}

pub fn checked_vector(entries: &[f64]) -> Result<Vector> {
    if entries.is_empty() {
        return dim_err("checked_vector", "empty vector");
    }
    if entries.iter().any(|v| !v.is_finite()) {
        return Err(NumericsError::NotFinite("vector"));
    }
    Ok(Vector::from_column_slice(entries))
}

/// Builds a matrix from nested rows (the JSON-friendly shape).
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return dim_err("matrix_from_rows", "ragged rows");
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    checked_matrix(r, c, &flat)
}

pub fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// ∞-norm of a vector (max abs entry) or induced ∞-norm of a matrix
/// (max absolute row sum).
pub trait InfNorm {
    fn inf_norm(&self) -> f64;
}

impl InfNorm for Vector {
    fn inf_norm(&self) -> f64 {
        self.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

impl InfNorm for Matrix {
    fn inf_norm(&self) -> f64 {
        self.row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

fn require_square(op: &'static str, m: &Matrix) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return dim_err(op, format!("expected square, got {}x{}", m.nrows(), m.ncols()));
    }
    Ok(m.nrows())
}

const PADE_ORDER: usize = 6;

/// Matrix exponential `e^{A t}` by scaling and squaring around a diagonal
/// Padé [6/6] approximant.
///
/// The argument is scaled by `2^-s` until its ∞-norm is at most 1/2; at that
/// radius the [6/6] truncation error is below 1e-16, so accuracy is limited
/// by rounding in the squaring phase.
pub fn mat_exp(a: &Matrix, t: f64) -> Result<Matrix> {
    let n = require_square("mat_exp", a)?;
    if !t.is_finite() || t < 0.0 {
        return Err(NumericsError::ContractViolation(format!(
            "mat_exp time must be finite and nonnegative, got {t}"
        )));
    }
    let at = a * t;
    let norm = at.inf_norm();
    if !norm.is_finite() {
        return Err(NumericsError::NotFinite("mat_exp argument"));
    }
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = at * 2f64.powi(-squarings);

    // c_j = (2p - j)! p! / ((2p)! j! (p - j)!), built incrementally.
    let p = PADE_ORDER;
    let mut coeffs = vec![1.0; p + 1];
    for j in 1..=p {
        coeffs[j] = coeffs[j - 1] * (p + 1 - j) as f64 / (j * (2 * p + 1 - j)) as f64;
    }

    let id = Matrix::identity(n, n);
    let mut numer = id.clone() * coeffs[0];
    let mut denom = id.clone() * coeffs[0];
    let mut power = id.clone();
    for (j, c) in coeffs.iter().enumerate().skip(1) {
        power = &power * &scaled;
        numer += &power * *c;
        if j % 2 == 0 {
            denom += &power * *c;
        } else {
            denom -= &power * *c;
        }
    }
    let mut result = denom
        .lu()
        .solve(&numer)
        .ok_or_else(|| NumericsError::ContractViolation("singular Padé denominator".into()))?;
    for _ in 0..squarings {
        result = &result * &result;
    }
    if result.iter().any(|v| !v.is_finite()) {
        return Err(NumericsError::NotFinite("mat_exp result"));
    }
    Ok(result)
}

/// Zero-order-hold discretization: `(e^{AT}, ∫₀ᵀ e^{As} ds B)`, both read off
/// the exponential of the augmented matrix `[[A, B], [0, 0]]·T`.
pub fn discretize(a: &Matrix, b: &Matrix, period: f64) -> Result<(Matrix, Matrix)> {
    let n = require_square("discretize", a)?;
    if b.nrows() != n {
        return dim_err("discretize", format!("A is {n}x{n} but B has {} rows", b.nrows()));
    }
    if !(period > 0.0) {
        return Err(NumericsError::ContractViolation(format!(
            "sampling period must be positive, got {period}"
        )));
    }
    let m = b.ncols();
    let mut aug = Matrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(a);
    aug.view_mut((0, n), (n, m)).copy_from(b);
    let e = mat_exp(&aug, period)?;
    let a_tilde = e.view((0, 0), (n, n)).into_owned();
    let b_tilde = e.view((0, n), (n, m)).into_owned();
    Ok((a_tilde, b_tilde))
}

/// Largest eigenvalue modulus, from a real Schur decomposition.
pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    require_square("spectral_radius", m)?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(NumericsError::NotFinite("spectral_radius input"));
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 10_000).ok_or(NumericsError::NoConvergence {
        op: "spectral_radius",
        iterations: 10_000,
    })?;
    Ok(schur.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// `(λmin, λmax)` of a symmetric matrix.
pub fn symmetric_eigen_range(m: &Matrix) -> Result<(f64, f64)> {
    require_square("symmetric_eigen_range", m)?;
    let eig = SymmetricEigen::new(m.clone());
    let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((lo, hi))
}

fn is_symmetric(m: &Matrix) -> bool {
    let tol = 1e-12 * (1.0 + max_abs(m));
    (m - m.transpose()).iter().all(|v| v.abs() <= tol)
}

/// Solves `Fᵀ P F − P = −Q` for symmetric `P ≻ 0` by the vectorized system
/// `(I − Fᵀ⊗Fᵀ) vec(P) = vec(Q)`.
pub fn solve_discrete_lyapunov(f: &Matrix, q: &Matrix) -> Result<Matrix> {
    let n = require_square("solve_discrete_lyapunov", f)?;
    if q.shape() != (n, n) {
        return dim_err(
            "solve_discrete_lyapunov",
            format!("F is {n}x{n} but Q is {}x{}", q.nrows(), q.ncols()),
        );
    }
    if !is_symmetric(q) {
        return Err(NumericsError::ContractViolation("Q must be symmetric".into()));
    }
    let rho = spectral_radius(f)?;
    if rho >= 1.0 {
        return Err(NumericsError::Infeasible { spectral_radius: rho });
    }
    let ft = f.transpose();
    let system = Matrix::identity(n * n, n * n) - ft.kronecker(&ft);
    let rhs = Vector::from_column_slice(q.as_slice());
    let vec_p = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| NumericsError::ContractViolation("singular Lyapunov operator".into()))?;
    let p = Matrix::from_column_slice(n, n, vec_p.as_slice());
    let p = (&p + p.transpose()) * 0.5;

    let residual = max_abs(&(&ft * &p * f - &p + q));
    if residual > RESIDUAL_TOL * (1.0 + max_abs(&p)) {
        return Err(NumericsError::NoConvergence {
            op: "solve_discrete_lyapunov",
            iterations: 1,
        });
    }
    Ok(p)
}

/// Riccati fixed-point iteration cap used by [`dlqr`].
pub const DLQR_MAX_ITER: usize = 100_000;

/// Discrete-time LQR gain with the `u = K x` sign convention:
/// `K = −(R + B̃ᵀSB̃)⁻¹ B̃ᵀ S Ã` at the Riccati fixed point `S`.
pub fn dlqr(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<Matrix> {
    let n = require_square("dlqr", a)?;
    let m = b.ncols();
    if b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return dim_err("dlqr", "A n×n, B n×m, Q n×n, R m×m required");
    }
    if !is_symmetric(q) || !is_symmetric(r) {
        return Err(NumericsError::ContractViolation("Q and R must be symmetric".into()));
    }
    let at = a.transpose();
    let bt = b.transpose();
    let gain_of = |s: &Matrix| -> Result<Matrix> {
        let inner = r + &bt * s * b;
        inner
            .lu()
            .solve(&(&bt * s * a))
            .map(|g| -g)
            .ok_or_else(|| NumericsError::ContractViolation("R + BᵀSB is singular".into()))
    };

    let mut s = q.clone();
    let mut converged = false;
    for _ in 0..DLQR_MAX_ITER {
        let k = gain_of(&s)?;
        // S⁺ = Q + Aᵀ S (A + B K)
        let next = q + &at * &s * (a + b * &k);
        let next = (&next + next.transpose()) * 0.5;
        if next.iter().any(|v| !v.is_finite()) {
            break;
        }
        let delta = max_abs(&(&next - &s));
        s = next;
        if delta <= 1e-13 * (1.0 + max_abs(&s)) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(NumericsError::NoConvergence {
            op: "dlqr",
            iterations: DLQR_MAX_ITER,
        });
    }
    let k = gain_of(&s)?;
    let closed = a + b * &k;
    let residual = max_abs(&(q + &at * &s * &closed - &s));
    if residual > RESIDUAL_TOL * (1.0 + max_abs(&s)) {
        return Err(NumericsError::NoConvergence {
            op: "dlqr",
            iterations: DLQR_MAX_ITER,
        });
    }
    let rho = spectral_radius(&closed)?;
    if rho >= 1.0 {
        return Err(NumericsError::Infeasible { spectral_radius: rho });
    }
    Ok(k)
}

/// States of a fixed-step integration at every grid time, endpoints included.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
}

impl Trajectory {
    pub fn endpoint(&self) -> &Vector {
        self.states.last().expect("trajectory has at least one state")
    }
}

fn step_count(span: (f64, f64), step: f64) -> Result<usize> {
    let length = span.1 - span.0;
    if !(step > 0.0) || !(length >= 0.0) || !length.is_finite() {
        return Err(NumericsError::StepMismatch { step, length });
    }
    if length == 0.0 {
        return Ok(0);
    }
    let count = (length / step).round();
    if count < 1.0 || (count * step - length).abs() > 1e-9 * length.max(step) {
        return Err(NumericsError::StepMismatch { step, length });
    }
    Ok(count as usize)
}

fn rk4_step<F>(field: &F, t: f64, x: &Vector, h: f64) -> Vector
where
    F: Fn(f64, &Vector) -> Vector,
{
    let k1 = field(t, x);
    let k2 = field(t + 0.5 * h, &(x + &k1 * (0.5 * h)));
    let k3 = field(t + 0.5 * h, &(x + &k2 * (0.5 * h)));
    let k4 = field(t + h, &(x + &k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

fn integrate_with<F, S>(field: F, x0: &Vector, span: (f64, f64), step: f64, mut sink: S) -> Result<Vector>
where
    F: Fn(f64, &Vector) -> Vector,
    S: FnMut(f64, &Vector),
{
    let count = step_count(span, step)?;
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(NumericsError::BlowUp { time: span.0 });
    }
    let h = if count == 0 {
        0.0
    } else {
        (span.1 - span.0) / count as f64
    };
    let mut x = x0.clone();
    sink(span.0, &x);
    for i in 0..count {
        let t = span.0 + i as f64 * h;
        x = rk4_step(&field, t, &x, h);
        let t_next = if i + 1 == count {
            span.1
        } else {
            span.0 + (i + 1) as f64 * h
        };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(NumericsError::BlowUp { time: t_next });
        }
        sink(t_next, &x);
    }
    Ok(x)
}

/// Classical fixed-step RK4 over `span`, returning the state at every grid
/// time. The step is adjusted to divide the span exactly; a step that does
/// not divide it to within rounding is rejected.
pub fn integrate_ode<F>(field: F, x0: &Vector, span: (f64, f64), step: f64) -> Result<Trajectory>
where
    F: Fn(f64, &Vector) -> Vector,
{
    let mut out = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
    };
    integrate_with(field, x0, span, step, |t, x| {
        out.times.push(t);
        out.states.push(x.clone());
    })?;
    Ok(out)
}

/// Same integration as [`integrate_ode`] keeping only the endpoint.
pub fn integrate_ode_endpoint<F>(field: F, x0: &Vector, span: (f64, f64), step: f64) -> Result<Vector>
where
    F: Fn(f64, &Vector) -> Vector,
{
    integrate_with(field, x0, span, step, |_, _| {})
}
