//! Continuous-time plant models `ẋ = f(x, u)` with an equilibrium at the
//! origin, their linearization and zero-order-hold flow maps.

use std::fmt;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{self, InfNorm, Matrix, NumericsError, Vector};

/// Central finite-difference step for numerical Jacobians.
pub const JACOBIAN_STEP: f64 = 1e-6;

/// Tolerance on `‖f(0, 0)‖∞`.
pub const EQUILIBRIUM_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("plant {0}: f(0,0) is not zero (‖f(0,0)‖∞ = {1})")]
    NotAnEquilibrium(String, f64),
    #[error("plant {name}: invalid parameter {field}: {reason}")]
    InvalidParameter {
        name: String,
        field: &'static str,
        reason: String,
    },
    #[error("plant {0}: dynamics produced a non-finite value")]
    NonFinite(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Dynamics = Arc<dyn Fn(&Vector, &Vector) -> Vector + Send + Sync>;

/// A plant with its Lipschitz metadata: `L` holds on the region
/// `𝒟 = {‖x‖∞ < rho}` for any input.
#[derive(Clone)]
pub struct PlantModel {
    name: String,
    state_dim: usize,
    input_dim: usize,
    dynamics: Dynamics,
    lipschitz: f64,
    region_radius: f64,
    analytic_jacobian: Option<(Matrix, Matrix)>,
    linearization: OnceLock<(Matrix, Matrix)>,
}

impl fmt::Debug for PlantModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PlantModel")
            .field("name", &self.name)
            .field("state_dim", &self.state_dim)
            .field("input_dim", &self.input_dim)
            .field("lipschitz", &self.lipschitz)
            .field("region_radius", &self.region_radius)
            .finish_non_exhaustive()
    }
}

impl PlantModel {
    pub fn new(
        name: impl Into<String>,
        state_dim: usize,
        input_dim: usize,
        dynamics: Dynamics,
        lipschitz: f64,
        region_radius: f64,
    ) -> Result<Self, PlantError> {
        let name = name.into();
        let invalid = |field, reason: String| PlantError::InvalidParameter {
            name: name.clone(),
            field,
            reason,
        };
        if state_dim == 0 || input_dim == 0 {
            return Err(invalid("dims", "state and input dimensions must be positive".into()));
        }
        if !(lipschitz >= 0.0) || !lipschitz.is_finite() {
            return Err(invalid("lipschitz", format!("must be finite and ≥ 0, got {lipschitz}")));
        }
        if !(region_radius > 0.0) {
            return Err(invalid("rho", format!("must be > 0, got {region_radius}")));
        }
        let at_origin = dynamics(&Vector::zeros(state_dim), &Vector::zeros(input_dim));
        if at_origin.len() != state_dim {
            return Err(invalid(
                "dynamics",
                format!("returned {} components for n = {state_dim}", at_origin.len()),
            ));
        }
        let residual = at_origin.inf_norm();
        if !(residual <= EQUILIBRIUM_TOL) {
            return Err(PlantError::NotAnEquilibrium(name, residual));
        }
        Ok(Self {
            name,
            state_dim,
            input_dim,
            dynamics,
            lipschitz,
            region_radius,
            analytic_jacobian: None,
            linearization: OnceLock::new(),
        })
    }

    /// Supplies exact Jacobians at the origin; they override finite differences.
    pub fn with_jacobian(mut self, a: Matrix, b: Matrix) -> Result<Self, PlantError> {
        if a.shape() != (self.state_dim, self.state_dim) || b.shape() != (self.state_dim, self.input_dim) {
            return Err(PlantError::InvalidParameter {
                name: self.name.clone(),
                field: "jacobian",
                reason: format!("expected A {0}x{0} and B {0}x{1}", self.state_dim, self.input_dim),
            });
        }
        self.analytic_jacobian = Some((a, b));
        self.linearization = OnceLock::new();
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn region_radius(&self) -> f64 {
        self.region_radius
    }

    pub fn eval(&self, x: &Vector, u: &Vector) -> Vector {
        (self.dynamics)(x, u)
    }

    /// `(∂f/∂x, ∂f/∂u)` at the origin.
    pub fn linearize(&self) -> Result<(Matrix, Matrix), PlantError> {
        if let Some(lin) = self.linearization.get() {
            return Ok(lin.clone());
        }
        let lin = match &self.analytic_jacobian {
            Some(j) => j.clone(),
            None => self.finite_difference_jacobian()?,
        };
        Ok(self.linearization.get_or_init(|| lin).clone())
    }

    fn finite_difference_jacobian(&self) -> Result<(Matrix, Matrix), PlantError> {
        let (n, m) = (self.state_dim, self.input_dim);
        let x0 = Vector::zeros(n);
        let u0 = Vector::zeros(m);
        let h = JACOBIAN_STEP;
        let mut a = Matrix::zeros(n, n);
        let mut b = Matrix::zeros(n, m);
        for j in 0..n {
            let mut xp = x0.clone();
            let mut xm = x0.clone();
            xp[j] = h;
            xm[j] = -h;
            let col = (self.eval(&xp, &u0) - self.eval(&xm, &u0)) / (2.0 * h);
            a.set_column(j, &col);
        }
        for j in 0..m {
            let mut up = u0.clone();
            let mut um = u0.clone();
            up[j] = h;
            um[j] = -h;
            let col = (self.eval(&x0, &up) - self.eval(&x0, &um)) / (2.0 * h);
            b.set_column(j, &col);
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(PlantError::NonFinite(self.name.clone()));
        }
        Ok((a, b))
    }

    /// Remainder of the linear approximation, `g(x,u) = f(x,u) − A x − B u`.
    pub fn remainder(&self, x: &Vector, u: &Vector) -> Result<Vector, PlantError> {
        let (a, b) = self.linearize()?;
        Ok(self.eval(x, u) - a * x - b * u)
    }

    pub fn linearized(&self, period: f64) -> Result<LinearizedModel, PlantError> {
        let (a, b) = self.linearize()?;
        let (a_tilde, b_tilde) = numerics::discretize(&a, &b, period)?;
        Ok(LinearizedModel {
            a,
            b,
            a_tilde,
            b_tilde,
            period,
        })
    }

    /// `φ_T(x̄, ū)`: the state after `period` under the constant input `ū`.
    pub fn flow_map(&self, xbar: &Vector, ubar: &Vector, period: f64, step: f64) -> Result<Vector, PlantError> {
        let dynamics = &self.dynamics;
        Ok(numerics::integrate_ode_endpoint(
            |_, x| dynamics(x, ubar),
            xbar,
            (0.0, period),
            step,
        )?)
    }

    /// Like [`flow_map`](Self::flow_map) but over `span`, keeping every grid state.
    pub fn flow_trajectory(
        &self,
        xbar: &Vector,
        ubar: &Vector,
        span: (f64, f64),
        step: f64,
    ) -> Result<numerics::Trajectory, PlantError> {
        let dynamics = &self.dynamics;
        Ok(numerics::integrate_ode(|_, x| dynamics(x, ubar), xbar, span, step)?)
    }

    /// Largest observed `‖f(y,u) − f(z,u)‖∞ / ‖y − z‖∞` over random pairs in
    /// `𝒟` (a cube of radius 1 when `𝒟` is unbounded) and random inputs in
    /// `[-input_scale, input_scale]^m`.
    pub fn empirical_lipschitz(&self, samples: usize, input_scale: f64, seed: u64) -> f64 {
        let radius = if self.region_radius.is_finite() {
            self.region_radius
        } else {
            1.0
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cube = |r: f64, dim: usize, rng: &mut ChaCha8Rng| Vector::from_fn(dim, |_, _| rng.random_range(-r..r));
        let mut best: f64 = 0.0;
        for _ in 0..samples {
            let y = cube(radius, self.state_dim, &mut rng);
            let z = cube(radius, self.state_dim, &mut rng);
            let u = if input_scale > 0.0 {
                cube(input_scale, self.input_dim, &mut rng)
            } else {
                Vector::zeros(self.input_dim)
            };
            let dist = (&y - &z).inf_norm();
            if dist > 0.0 {
                best = best.max((self.eval(&y, &u) - self.eval(&z, &u)).inf_norm() / dist);
            }
        }
        best
    }
}

/// Linearization at the origin and its zero-order-hold discretization.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedModel {
    pub a: Matrix,
    pub b: Matrix,
    pub a_tilde: Matrix,
    pub b_tilde: Matrix,
    pub period: f64,
}

/// Default region radius for the Liénard benchmark; it covers the plotted
/// region of attraction.
pub const LIENARD_RHO: f64 = 1.5;

/// Lipschitz constant quoted for the Liénard benchmark.
pub const LIENARD_LIPSCHITZ: f64 = 10.0;

/// The Liénard oscillator `ẋ₁ = x₂ + x₁ + a x₁³ − b x₁⁵`, `ẋ₂ = −x₁ + u`.
/// Uncontrolled, the origin is unstable and surrounded by a stable limit
/// cycle.
pub fn lienard_plant(a: f64, b: f64) -> PlantModel {
    lienard_plant_with(a, b, LIENARD_LIPSCHITZ, LIENARD_RHO).expect("Liénard dynamics vanish at the origin")
}

pub fn lienard_plant_with(a: f64, b: f64, lipschitz: f64, rho: f64) -> Result<PlantModel, PlantError> {
    let dynamics: Dynamics = Arc::new(move |x: &Vector, u: &Vector| {
        let x1 = x[0];
        let x1_3 = x1 * x1 * x1;
        Vector::from_vec(vec![x[1] + x1 + a * x1_3 - b * x1_3 * x1 * x1, -x1 + u[0]])
    });
    let jac_a = Matrix::from_row_slice(2, 2, &[1.0, 1.0, -1.0, 0.0]);
    let jac_b = Matrix::from_row_slice(2, 1, &[0.0, 1.0]);
    PlantModel::new("lienard", 2, 1, dynamics, lipschitz, rho)?.with_jacobian(jac_a, jac_b)
}

/// `ẋ = A₀x + B₀u`. `L` defaults to `‖A₀‖∞`, which bounds the Lipschitz
/// constant globally, and `𝒟` to all of ℝⁿ.
pub fn linear_plant(a: Matrix, b: Matrix, lipschitz: Option<f64>, rho: Option<f64>) -> Result<PlantModel, PlantError> {
    let n = a.nrows();
    let m = b.ncols();
    let bad = |reason: String| PlantError::InvalidParameter {
        name: "linear".into(),
        field: "matrices",
        reason,
    };
    if a.ncols() != n || b.nrows() != n {
        return Err(bad(format!(
            "A is {}x{}, B is {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let lipschitz = lipschitz.unwrap_or_else(|| a.inf_norm());
    let (fa, fb) = (a.clone(), b.clone());
    let dynamics: Dynamics = Arc::new(move |x: &Vector, u: &Vector| &fa * x + &fb * u);
    PlantModel::new("linear", n, m, dynamics, lipschitz, rho.unwrap_or(f64::INFINITY))?.with_jacobian(a, b)
}

/// One monomial `coeff · Π xᵢ^{x_pow[i]} · Π uⱼ^{u_pow[j]}` contributing to
/// component `component` of `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyTerm {
    pub component: usize,
    pub coeff: f64,
    #[serde(default)]
    pub x_pow: Vec<u32>,
    #[serde(default)]
    pub u_pow: Vec<u32>,
}

/// User-defined polynomial dynamics. Constant terms are rejected by the
/// equilibrium check.
pub fn polynomial_plant(
    name: impl Into<String>,
    state_dim: usize,
    input_dim: usize,
    terms: Vec<PolyTerm>,
    lipschitz: f64,
    rho: f64,
) -> Result<PlantModel, PlantError> {
    let name = name.into();
    for t in &terms {
        if t.component >= state_dim || t.x_pow.len() > state_dim || t.u_pow.len() > input_dim || !t.coeff.is_finite() {
            return Err(PlantError::InvalidParameter {
                name,
                field: "terms",
                reason: format!("term {t:?} does not fit n = {state_dim}, m = {input_dim}"),
            });
        }
    }
    let dynamics: Dynamics = Arc::new(move |x: &Vector, u: &Vector| {
        let mut out = Vector::zeros(state_dim);
        for t in &terms {
            let mut v = t.coeff;
            for (i, p) in t.x_pow.iter().enumerate() {
                v *= x[i].powi(*p as i32);
            }
            for (j, p) in t.u_pow.iter().enumerate() {
                v *= u[j].powi(*p as i32);
            }
            out[t.component] += v;
        }
        out
    });
    PlantModel::new(name, state_dim, input_dim, dynamics, lipschitz, rho)
}

/// Name-keyed plant description, as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantSpec {
    Lienard {
        #[serde(default = "default_lienard_a")]
        a: f64,
        #[serde(default = "default_lienard_b")]
        b: f64,
        #[serde(default = "default_lienard_l")]
        lipschitz: f64,
        #[serde(default = "default_lienard_rho")]
        rho: f64,
    },
    Linear {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        #[serde(default)]
        lipschitz: Option<f64>,
        #[serde(default)]
        rho: Option<f64>,
    },
    Polynomial {
        #[serde(default = "default_poly_name")]
        name: String,
        n: usize,
        m: usize,
        terms: Vec<PolyTerm>,
        lipschitz: f64,
        rho: f64,
    },
}

fn default_lienard_a() -> f64 {
    1.0 / 3.0
}
fn default_lienard_b() -> f64 {
    1.0 / 50.0
}
fn default_lienard_l() -> f64 {
    LIENARD_LIPSCHITZ
}
fn default_lienard_rho() -> f64 {
    LIENARD_RHO
}
fn default_poly_name() -> String {
    "polynomial".into()
}

impl PlantSpec {
    pub fn build(&self) -> Result<PlantModel, PlantError> {
        match self {
            PlantSpec::Lienard { a, b, lipschitz, rho } => lienard_plant_with(*a, *b, *lipschitz, *rho),
            PlantSpec::Linear { a, b, lipschitz, rho } => linear_plant(
                numerics::matrix_from_rows(a)?,
                numerics::matrix_from_rows(b)?,
                *lipschitz,
                *rho,
            ),
            PlantSpec::Polynomial {
                name,
                n,
                m,
                terms,
                lipschitz,
                rho,
            } => polynomial_plant(name.clone(), *n, *m, terms.clone(), *lipschitz, *rho),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(e: &[f64]) -> Vector {
        Vector::from_column_slice(e)
    }

    fn close(a: &Matrix, b: &Matrix, tol: f64) -> bool {
        (a - b).iter().all(|x| x.abs() <= tol)
    }

    fn cubic_on_linear() -> PlantModel {
        // ẋ₁ = x₂ + 2x₁³, ẋ₂ = −x₁ + 0.5x₂ + u + x₁x₂²
        polynomial_plant(
            "cubic",
            2,
            1,
            vec![
                PolyTerm {
                    component: 0,
                    coeff: 1.0,
                    x_pow: vec![0, 1],
                    u_pow: vec![],
                },
                PolyTerm {
                    component: 0,
                    coeff: 2.0,
                    x_pow: vec![3, 0],
                    u_pow: vec![],
                },
                PolyTerm {
                    component: 1,
                    coeff: -1.0,
                    x_pow: vec![1],
                    u_pow: vec![],
                },
                PolyTerm {
                    component: 1,
                    coeff: 0.5,
                    x_pow: vec![0, 1],
                    u_pow: vec![],
                },
                PolyTerm {
                    component: 1,
                    coeff: 1.0,
                    x_pow: vec![],
                    u_pow: vec![1],
                },
                PolyTerm {
                    component: 1,
                    coeff: 1.0,
                    x_pow: vec![1, 2],
                    u_pow: vec![],
                },
            ],
            5.0,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn lienard_linearization_by_hand() {
        let p = lienard_plant(1.0 / 3.0, 1.0 / 50.0);
        let (a, b) = p.linearize().unwrap();
        assert_eq!(a, Matrix::from_row_slice(2, 2, &[1.0, 1.0, -1.0, 0.0]));
        assert_eq!(b, Matrix::from_row_slice(2, 1, &[0.0, 1.0]));
    }

    #[test]
    fn lienard_finite_difference_agrees_with_analytic() {
        let p = lienard_plant(1.0 / 3.0, 1.0 / 50.0);
        let (a, b) = p.finite_difference_jacobian().unwrap();
        assert!(close(&a, &Matrix::from_row_slice(2, 2, &[1.0, 1.0, -1.0, 0.0]), 1e-8));
        assert!(close(&b, &Matrix::from_row_slice(2, 1, &[0.0, 1.0]), 1e-8));
    }

    #[test]
    fn linear_plant_linearizes_to_itself() {
        let a0 = Matrix::from_row_slice(2, 2, &[0.3, -1.2, 0.7, 0.1]);
        let b0 = Matrix::from_row_slice(2, 1, &[0.4, -0.9]);
        let p = linear_plant(a0.clone(), b0.clone(), None, None).unwrap();
        assert!(close(&p.finite_difference_jacobian().unwrap().0, &a0, 1e-8));
        assert!(close(&p.finite_difference_jacobian().unwrap().1, &b0, 1e-8));
    }

    #[test]
    fn cubic_terms_do_not_change_the_jacobian() {
        let (a, b) = cubic_on_linear().linearize().unwrap();
        assert!(close(&a, &Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.5]), 1e-8));
        assert!(close(&b, &Matrix::from_row_slice(2, 1, &[0.0, 1.0]), 1e-8));
    }

    #[test]
    fn flow_map_equilibrium_and_linear_oracle() {
        let p = lienard_plant(1.0 / 3.0, 1.0 / 50.0);
        assert_eq!(
            p.flow_map(&v(&[0.0, 0.0]), &v(&[0.0]), 0.1, 1e-3).unwrap(),
            v(&[0.0, 0.0])
        );

        let a0 = Matrix::from_row_slice(2, 2, &[0.3, -1.2, 0.7, 0.1]);
        let b0 = Matrix::from_row_slice(2, 1, &[0.4, -0.9]);
        let lin = linear_plant(a0, b0, None, None).unwrap();
        let model = lin.linearized(0.1).unwrap();
        let (x, u) = (v(&[0.5, -0.25]), v(&[0.8]));
        let got = lin.flow_map(&x, &u, 0.1, 1e-3).unwrap();
        let want = &model.a_tilde * &x + &model.b_tilde * &u;
        assert!((got - want).inf_norm() < 1e-8);
    }

    #[test]
    fn flow_map_step_halving() {
        let p = lienard_plant(1.0 / 3.0, 1.0 / 50.0);
        let x = v(&[0.1, 0.1]);
        let u = v(&[0.0]);
        let coarse = p.flow_map(&x, &u, 0.1, 1e-2).unwrap();
        let fine = p.flow_map(&x, &u, 0.1, 5e-3).unwrap();
        assert!(coarse.iter().all(|c| c.is_finite()));
        assert!((coarse - fine).inf_norm() < 1e-7);
    }

    #[test]
    fn remainder_examples() {
        let (a, b) = (1.0 / 3.0, 1.0 / 50.0);
        let p = lienard_plant(a, b);
        assert_eq!(p.remainder(&v(&[0.0, 0.0]), &v(&[0.0])).unwrap(), v(&[0.0, 0.0]));
        for x1 in [0.1, -0.7, 1.3] {
            let g = p.remainder(&v(&[x1, 0.0]), &v(&[0.0])).unwrap();
            let want = a * x1.powi(3) - b * x1.powi(5);
            assert!((g[0] - want).abs() < 1e-15 && g[1] == 0.0);
        }
        let lin = linear_plant(Matrix::identity(2, 2), Matrix::identity(2, 1), None, None).unwrap();
        assert_eq!(lin.remainder(&v(&[3.0, -2.0]), &v(&[1.0])).unwrap(), v(&[0.0, 0.0]));
    }

    #[test]
    fn lienard_plug_in() {
        let (a, b) = (1.0 / 3.0, 1.0 / 50.0);
        let p = lienard_plant(a, b);
        assert_eq!(p.eval(&v(&[0.0, 0.0]), &v(&[0.0])), v(&[0.0, 0.0]));
        let f = p.eval(&v(&[1.0, 0.0]), &v(&[0.0]));
        assert!((f[0] - (1.0 + a - b)).abs() < 1e-15 && f[1] == -1.0);
    }

    #[test]
    fn uncontrolled_lienard_settles_on_a_bounded_cycle() {
        let p = lienard_plant(1.0 / 3.0, 1.0 / 50.0);
        let traj = p
            .flow_trajectory(&v(&[2.0, 0.0]), &v(&[0.0]), (0.0, 100.0), 1e-2)
            .unwrap();
        let tail = &traj.states[traj.states.len() / 2..];
        let peak = tail.iter().map(|s| s.inf_norm()).fold(0.0, f64::max);
        let trough = tail.iter().map(|s| s.inf_norm()).fold(f64::INFINITY, f64::min);
        assert!(peak < 20.0, "peak {peak}");
        assert!(trough > 0.1, "trajectory decayed to {trough}");
    }

    #[test]
    fn vanishing_perturbation_ratio_decreases() {
        let p = lienard_plant(1.0 / 3.0, 1.0 / 50.0);
        let ratios: Vec<f64> = (1..=6)
            .map(|e| {
                let r = 10f64.powi(-e);
                let x = v(&[r, r]);
                p.remainder(&x, &v(&[0.0])).unwrap().inf_norm() / x.inf_norm()
            })
            .collect();
        assert!(ratios.windows(2).all(|w| w[1] < w[0]), "{ratios:?}");
    }

    #[test]
    fn construction_errors() {
        let shifted: Dynamics = Arc::new(|x: &Vector, _u: &Vector| x.map(|v| v + 1.0));
        assert!(matches!(
            PlantModel::new("bad", 1, 1, shifted, 1.0, 1.0),
            Err(PlantError::NotAnEquilibrium(..))
        ));
        let zero: Dynamics = Arc::new(|x: &Vector, _u: &Vector| x * 0.0);
        assert!(PlantModel::new("bad", 1, 1, zero.clone(), -1.0, 1.0).is_err());
        assert!(PlantModel::new("bad", 1, 1, zero, 1.0, 0.0).is_err());
        assert!(polynomial_plant(
            "p",
            1,
            1,
            vec![PolyTerm {
                component: 0,
                coeff: 1.0,
                x_pow: vec![],
                u_pow: vec![]
            }],
            1.0,
            1.0
        )
        .is_err());
    }

    #[test]
    fn plant_spec_parses_registry_names() {
        let spec: PlantSpec = serde_json::from_str(r#"{"kind":"lienard"}"#).unwrap();
        assert_eq!(spec.build().unwrap().lipschitz(), 10.0);
        let spec: PlantSpec = serde_json::from_str(r#"{"kind":"linear","a":[[0.5]],"b":[[1.0]]}"#).unwrap();
        assert_eq!(spec.build().unwrap().lipschitz(), 0.5);
    }

    #[test]
    fn empirical_lipschitz_is_within_quoted_constant() {
        let p = lienard_plant(1.0 / 3.0, 1.0 / 50.0);
        let est = p.empirical_lipschitz(20_000, 1.0, 7);
        assert!(est > 1.0 && est <= p.lipschitz(), "{est}");
    }

    proptest! {
        #[test]
        fn remainder_reconstructs_f(x1 in -1.5f64..1.5, x2 in -1.5f64..1.5, u in -3.0f64..3.0) {
            let p = lienard_plant(1.0 / 3.0, 1.0 / 50.0);
            let (a, b) = p.linearize().unwrap();
            let (x, u) = (v(&[x1, x2]), v(&[u]));
            let f = p.eval(&x, &u);
            let rebuilt = p.remainder(&x, &u).unwrap() + &a * &x + &b * &u;
            prop_assert!((rebuilt - &f).inf_norm() <= 1e-14 * (1.0 + f.inf_norm()));
        }

        #[test]
        fn lipschitz_bound_holds_in_region(
            y in proptest::collection::vec(-1.499f64..1.499, 2),
            z in proptest::collection::vec(-1.499f64..1.499, 2),
            u in -5.0f64..5.0,
        ) {
            let p = lienard_plant(1.0 / 3.0, 1.0 / 50.0);
            let (y, z, u) = (Vector::from_vec(y), Vector::from_vec(z), v(&[u]));
            let lhs = (p.eval(&y, &u) - p.eval(&z, &u)).inf_norm();
            prop_assert!(lhs <= p.lipschitz() * (&y - &z).inf_norm() + 1e-15);
        }
    }
}
