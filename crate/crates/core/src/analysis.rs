//! Stability certificate for the quantized loop under DoS.
//!
//! The pipeline runs from the plant's linearization through the mode Lyapunov
//! matrices to the switched function `W_p(ξ, E) = ξᵀP_pξ + η_pE²`, then
//! evaluates the average-rate stability condition and the resulting bound on
//! the initial quantizer radius. The search for the free parameters
//! `(φ₀, φ₁, γ, ε, η₀, η₁)` and the sampled estimates of `d` and `δ` are
//! numerical choices of this crate, recorded in the certificate's provenance.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::dos::DoSParams;
use crate::numerics::{self, InfNorm, Matrix, NumericsError, Vector};
use crate::plant::{PlantError, PlantModel};
use crate::quantizer::{QuantizerError, QuantizerState, Transmission};
use crate::simloop::{self, SimConfig, SimStatus, SimTrace};

/// Relative slack for the empirical decay checks.
pub const DECAY_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("mode {mode} Lyapunov inequality infeasible: {detail}")]
    Infeasible { mode: u8, detail: String },
    #[error("φ̂₀ = {phi0_hat} ≥ 1; choose a smaller γ")]
    GammaTooLarge { phi0_hat: f64 },
    #[error("no feasible tuning in the search ranges: {0}")]
    TuningFailed(String),
    #[error("remainder bound fails at every sampled radius down to {r_min}")]
    Model { r_min: f64 },
    #[error("invalid analysis input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Quantizer(#[from] QuantizerError),
    #[error(transparent)]
    Sim(#[from] simloop::SimError),
    #[error("output: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

/// `Λ = e^{LT}`.
pub fn compute_lambda(lipschitz: f64, period: f64) -> f64 {
    (lipschitz * period).exp()
}

/// `R = n log₂(M) / T`, bits per second.
pub fn data_rate(n: usize, levels: u32, period: f64) -> f64 {
    n as f64 * (levels as f64).log2() / period
}

/// `(c₀, c₁)` bounding the inter-sample growth in the two modes.
pub fn compute_c_constants(a: &Matrix, b: &Matrix, k: &Matrix, period: f64) -> (f64, f64) {
    let c1 = (period * (a.inf_norm() + 1.0)).exp();
    let c0 = (1.0 + period * ((b * k).inf_norm() + k.inf_norm())) * c1;
    (c0, c1)
}

/// `(γ₀, γ₁)` bounding the discretized remainder in the two modes.
pub fn compute_gamma_constants(gamma: f64, c0: f64, k: &Matrix, a: &Matrix, period: f64, c1: f64) -> (f64, f64) {
    let tail = gamma * period * (period * a.inf_norm()).exp();
    ((c0 + k.inf_norm()) * tail, c1 * tail)
}

/// `λmax(FᵀPF − φP)`.
pub fn lyapunov_residual(f: &Matrix, p: &Matrix, phi: f64) -> Result<f64> {
    let r = f.transpose() * p * f - p * phi;
    let sym = (&r + r.transpose()) * 0.5;
    Ok(numerics::symmetric_eigen_range(&sym)?.1)
}

fn mode_lyapunov(f: &Matrix, phi: f64, mode: u8) -> Result<Matrix> {
    let radius = numerics::spectral_radius(f)?;
    if !(radius < phi.sqrt()) {
        return Err(AnalysisError::Infeasible {
            mode,
            detail: format!("spectral radius {radius} is not below √φ = {}", phi.sqrt()),
        });
    }
    let scaled = f / phi.sqrt();
    let n = f.nrows();
    numerics::solve_discrete_lyapunov(&scaled, &Matrix::identity(n, n)).map_err(|e| match e {
        NumericsError::Infeasible { spectral_radius } => AnalysisError::Infeasible {
            mode,
            detail: format!("scaled spectral radius {spectral_radius}"),
        },
        other => other.into(),
    })
}

/// `P₀` for `φ₀^{-1/2}(Ã + B̃K)` and `P₁` for `φ₁^{-1/2}Ã`, both with `Q = I`.
pub fn solve_mode_lyapunov(
    a_tilde: &Matrix,
    b_tilde: &Matrix,
    k: &Matrix,
    phi0: f64,
    phi1: f64,
) -> Result<(Matrix, Matrix)> {
    let closed = a_tilde + b_tilde * k;
    Ok((mode_lyapunov(&closed, phi0, 0)?, mode_lyapunov(a_tilde, phi1, 1)?))
}

/// `α = ½ min_p{λmin(P_p), η_p}`, `β = max_p{n λmax(P_p), η_p}`.
pub fn compute_alpha_beta(p0: &Matrix, p1: &Matrix, eta0: f64, eta1: f64, n: usize) -> Result<(f64, f64)> {
    let (lo0, hi0) = numerics::symmetric_eigen_range(p0)?;
    let (lo1, hi1) = numerics::symmetric_eigen_range(p1)?;
    let alpha = 0.5 * lo0.min(eta0).min(lo1).min(eta1);
    let beta = (n as f64 * hi0).max(eta0).max(n as f64 * hi1).max(eta1);
    Ok((alpha, beta))
}

/// Floored at 1: the switching envelope charges `μ₀μ₁` per attack, which
/// only covers a lone `1 → 0` switch when each factor is at least 1.
fn mu_from_spectra(s0: (f64, f64), s1: (f64, f64), eta0: f64, eta1: f64) -> (f64, f64) {
    (
        (s1.1 / s0.0).max(eta1 / eta0).max(1.0),
        (s0.1 / s1.0).max(eta0 / eta1).max(1.0),
    )
}

/// `μ₀ = max{1, λmax(P₁)/λmin(P₀), η₁/η₀}`, `μ₁ = max{1, λmax(P₀)/λmin(P₁), η₀/η₁}`.
pub fn compute_mu(p0: &Matrix, p1: &Matrix, eta0: f64, eta1: f64) -> Result<(f64, f64)> {
    let s0 = numerics::symmetric_eigen_range(p0)?;
    let s1 = numerics::symmetric_eigen_range(p1)?;
    Ok(mu_from_spectra(s0, s1, eta0, eta1))
}

/// `ν₀ = max{φ₀, Λ²/M²}`, `ν₁ = max{φ₁, Λ²}`.
pub fn compute_nu(phi0: f64, phi1: f64, lambda: f64, levels: u32) -> (f64, f64) {
    let m = levels as f64;
    (phi0.max(lambda * lambda / (m * m)), phi1.max(lambda * lambda))
}

pub struct OmegaInputs<'a> {
    pub phi0: f64,
    pub phi1: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub p0: &'a Matrix,
    pub p1: &'a Matrix,
    pub gain: &'a Matrix,
    pub a_tilde: &'a Matrix,
    pub b_tilde: &'a Matrix,
    pub eta0: f64,
    pub eta1: f64,
    pub epsilon: f64,
    pub lambda: f64,
    pub levels: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OmegaTerms {
    pub phi0_hat: f64,
    pub phi0_tilde: f64,
    pub vartheta: f64,
    pub phi1_hat: f64,
    pub omega0: f64,
    pub omega1: f64,
}

/// Norms and spectra of a mode, shared by every `(γ, ε, η)` evaluation.
#[derive(Debug, Clone, Copy)]
struct ModeData {
    p_norm: f64,
    p_phi_norm: f64,
    lambda_min: f64,
    lambda_max: f64,
}

impl ModeData {
    fn new(p: &Matrix, phi_matrix: &Matrix) -> Result<Self> {
        let (lambda_min, lambda_max) = numerics::symmetric_eigen_range(p)?;
        Ok(Self {
            p_norm: p.inf_norm(),
            p_phi_norm: (p * phi_matrix).inf_norm(),
            lambda_min,
            lambda_max,
        })
    }

    /// `φ + (2γ‖PΦ‖∞ + γ²‖P‖∞)/λmin(P)`.
    fn phi_hat(&self, phi: f64, gamma: f64) -> f64 {
        phi + (2.0 * gamma * self.p_phi_norm + gamma * gamma * self.p_norm) / self.lambda_min
    }
}

#[derive(Debug, Clone, Copy)]
struct PartialOmega0 {
    phi0_hat: f64,
    phi0_tilde: f64,
    vartheta: f64,
}

fn partial_omega0(mode0: &ModeData, phi0: f64, gamma0: f64, epsilon: f64) -> PartialOmega0 {
    let phi0_hat = mode0.phi_hat(phi0, gamma0);
    PartialOmega0 {
        phi0_hat,
        phi0_tilde: phi0_hat + mode0.p_norm / (epsilon * mode0.lambda_min),
        vartheta: (1.0 + epsilon) * mode0.p_norm,
    }
}

fn omega_terms(part: PartialOmega0, phi1_hat: f64, eta0: f64, lambda: f64, levels: u32) -> OmegaTerms {
    let m = levels as f64;
    let lm2 = lambda * lambda / (m * m);
    let frac = ((m - 1.0) / m).powi(2);
    OmegaTerms {
        phi0_hat: part.phi0_hat,
        phi0_tilde: part.phi0_tilde,
        vartheta: part.vartheta,
        phi1_hat,
        omega0: part.phi0_tilde.max(part.vartheta / eta0 * frac + lm2),
        omega1: phi1_hat.max(lambda * lambda),
    }
}

/// `ω₀ = max{φ̃₀, (ϑ/η₀)((M−1)/M)² + Λ²/M²}` and `ω₁ = max{φ̂₁, Λ²}` with the
/// intermediate `φ̂₀`, `φ̃₀`, `ϑ`, `φ̂₁`.
pub fn compute_omega(inp: &OmegaInputs<'_>) -> Result<OmegaTerms> {
    let closed = inp.a_tilde + inp.b_tilde * inp.gain;
    let mode0 = ModeData::new(inp.p0, &closed)?;
    let mode1 = ModeData::new(inp.p1, inp.a_tilde)?;
    let part = partial_omega0(&mode0, inp.phi0, inp.gamma0, inp.epsilon);
    if part.phi0_hat >= 1.0 {
        return Err(AnalysisError::GammaTooLarge {
            phi0_hat: part.phi0_hat,
        });
    }
    Ok(omega_terms(
        part,
        mode1.phi_hat(inp.phi1, inp.gamma1),
        inp.eta0,
        inp.lambda,
        inp.levels,
    ))
}

/// `η₀` making both arguments of the `ω₀` maximum equal when `φ̃₀ > Λ²/M²`;
/// otherwise the second argument is pinned just above `Λ²/M²`.
pub fn eta0_rule(phi0_tilde: f64, vartheta: f64, lambda: f64, levels: u32) -> f64 {
    let m = levels as f64;
    let lm2 = lambda * lambda / (m * m);
    let target = phi0_tilde.max((1.0 + 1e-3) * lm2);
    vartheta * ((m - 1.0) / m).powi(2) / (target - lm2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Theorem1Verdict {
    pub pass: bool,
    /// `ρ_F T ln μ₀μ₁ + (1 − ρ_D*) ln ν₀ + ρ_D* ln ν₁`; negative passes.
    pub margin: f64,
    pub rho_d_star: f64,
    /// Set when `ρ_D* ≥ 1`, which fails regardless of the margin.
    pub degenerate: bool,
}

pub fn theorem1_margin(p: &DoSParams, period: f64, mu0: f64, mu1: f64, nu0: f64, nu1: f64) -> f64 {
    let rho_d_star = p.rho_d_star(period);
    p.rho_f * period * (mu0 * mu1).ln() + (1.0 - rho_d_star) * nu0.ln() + rho_d_star * nu1.ln()
}

pub fn check_stability_condition(
    p: &DoSParams,
    period: f64,
    mu0: f64,
    mu1: f64,
    nu0: f64,
    nu1: f64,
) -> Theorem1Verdict {
    let rho_d_star = p.rho_d_star(period);
    let margin = theorem1_margin(p, period, mu0, mu1, nu0, nu1);
    let degenerate = rho_d_star >= 1.0;
    Theorem1Verdict {
        pass: !degenerate && margin < 0.0,
        margin,
        rho_d_star,
        degenerate,
    }
}

/// Largest `ρ_D` passing the condition for a given `ρ_F` (the zero level set
/// of the margin), or `None` if even `ρ_D = 0` fails.
pub fn theorem1_boundary_rho_d(rho_f: f64, period: f64, mu_product: f64, nu0: f64, nu1: f64) -> Option<f64> {
    let rho_d_star = -(rho_f * period * mu_product.ln() + nu0.ln()) / (nu1.ln() - nu0.ln());
    let rho_d = rho_d_star - rho_f * period;
    (rho_d >= 0.0).then_some(rho_d)
}

/// `(μ₀μ₁)^{−κ_F/2} (ω₀/ω₁)^{κ_D*/(2T)} δ√(α/β)`, a strict upper bound on `E₀`.
#[allow(clippy::too_many_arguments)]
pub fn max_e0(
    delta: f64,
    alpha: f64,
    beta: f64,
    mu0: f64,
    mu1: f64,
    omega0: f64,
    omega1: f64,
    p: &DoSParams,
    period: f64,
) -> f64 {
    let delta_star = delta * (alpha / beta).sqrt();
    (mu0 * mu1).powf(-p.kappa_f / 2.0) * (omega0 / omega1).powf(p.kappa_d_star(period) / (2.0 * period)) * delta_star
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepCell {
    pub rho_f: f64,
    pub rho_d: f64,
    pub margin: f64,
    pub pass: bool,
}

/// Condition verdict on the `ρ_F × ρ_D` grid, `ρ_D` varying fastest.
pub fn sweep_stability_region(
    period: f64,
    mu0: f64,
    mu1: f64,
    nu0: f64,
    nu1: f64,
    rho_f_grid: &[f64],
    rho_d_grid: &[f64],
) -> Vec<SweepCell> {
    let mut cells = Vec::with_capacity(rho_f_grid.len() * rho_d_grid.len());
    for &rho_f in rho_f_grid {
        for &rho_d in rho_d_grid {
            let p = DoSParams {
                kappa_f: 0.0,
                rho_f,
                kappa_d: 0.0,
                rho_d,
            };
            let v = check_stability_condition(&p, period, mu0, mu1, nu0, nu1);
            cells.push(SweepCell {
                rho_f,
                rho_d,
                margin: v.margin,
                pass: v.pass,
            });
        }
    }
    cells
}

/// Pairs `(pass cell, fail cell)` where the failing cell is componentwise
/// below the passing one. Empty for a downward-closed region.
pub fn downward_closure_violations(cells: &[SweepCell]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (i, a) in cells.iter().enumerate().filter(|(_, c)| c.pass) {
        for (j, b) in cells.iter().enumerate().filter(|(_, c)| !c.pass) {
            if b.rho_f <= a.rho_f && b.rho_d <= a.rho_d {
                out.push((i, j));
            }
        }
    }
    out
}

pub fn write_sweep_csv<W: Write>(cells: &[SweepCell], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rhoF", "rhoD", "margin", "pass"])?;
    for c in cells {
        w.write_record([
            format!("{:.16e}", c.rho_f),
            format!("{:.16e}", c.rho_d),
            format!("{:.16e}", c.margin),
            c.pass.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Inclusive grid `start, start + step, …` up to `stop` (within rounding).
pub fn grid_axis(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(start.is_finite() && stop.is_finite() && step > 0.0 && stop >= start) {
        return Err(AnalysisError::Invalid(format!("bad grid {start}:{stop}:{step}")));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|i| start + i as f64 * step).collect())
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_axis(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Sampling plan behind the `d` and `δ` estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingBudget {
    pub samples_per_level: usize,
    pub levels_per_octave: usize,
    pub r_max: f64,
    pub r_min: f64,
}

impl Default for SamplingBudget {
    fn default() -> Self {
        Self {
            samples_per_level: 256,
            levels_per_octave: 8,
            r_max: 10.0,
            r_min: 1e-12,
        }
    }
}

impl SamplingBudget {
    fn radii(&self) -> Vec<f64> {
        let ratio = 2f64.powf(-1.0 / self.levels_per_octave as f64);
        let mut out = vec![self.r_max];
        loop {
            let next = out[out.len() - 1] * ratio;
            if next < self.r_min {
                break;
            }
            out.push(next);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadiusEstimate {
    /// The constant itself (`d` or `δ`).
    pub value: f64,
    /// Largest grid radius below every sampled failure (the primed constant).
    pub raw_radius: f64,
    /// `raw_radius`, halved when some sample failed.
    pub radius: f64,
    /// No sample failed, so the bound held on the whole grid.
    pub vacuous: bool,
    /// `√(c₀² + ‖K‖∞²)`.
    pub scale: f64,
    pub samples: usize,
    pub seed: u64,
}

fn unit_inf_direction(dim: usize, rng: &mut ChaCha8Rng) -> Vector {
    let mut w = Vector::from_fn(dim, |_, _| rng.random_range(-1.0..=1.0));
    let i = rng.random_range(0..dim);
    w[i] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    w
}

/// Largest grid radius `r` such that every sample `(x, u)` with
/// `√(‖x‖∞² + ‖u‖∞²) < r` satisfies `‖g(x,u)‖∞ ≤ bound(‖x‖∞, ‖u‖∞)`.
///
/// Each grid level draws its own seeded stream of points inside its ball, so
/// a larger budget only adds points and can only shrink the result.
fn sampled_radius<B>(plant: &PlantModel, bound: B, budget: &SamplingBudget, seed: u64) -> Result<(f64, bool, usize)>
where
    B: Fn(f64, f64) -> f64 + Sync,
{
    let (n, m) = (plant.state_dim(), plant.input_dim());
    let radii = budget.radii();
    let failures: Vec<f64> = radii
        .par_iter()
        .enumerate()
        .map(|(level, &r)| -> Result<f64> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(level as u64);
            let mut worst = f64::INFINITY;
            for _ in 0..budget.samples_per_level {
                let rho = r * rng.random::<f64>().powf(0.25);
                let angle = rng.random::<f64>() * std::f64::consts::FRAC_PI_2;
                let x = unit_inf_direction(n, &mut rng) * (rho * angle.cos());
                let u = if m > 0 {
                    unit_inf_direction(m, &mut rng) * (rho * angle.sin())
                } else {
                    Vector::zeros(0)
                };
                let (xn, un) = (x.inf_norm(), u.inf_norm());
                let g = plant.remainder(&x, &u)?;
                if g.inf_norm() > bound(xn, un) {
                    worst = worst.min(xn.hypot(un));
                }
            }
            Ok(worst)
        })
        .collect::<Result<Vec<_>>>()?;
    let samples = radii.len() * budget.samples_per_level;
    let first_failure = failures.into_iter().fold(f64::INFINITY, f64::min);
    if first_failure.is_infinite() {
        return Ok((budget.r_max, true, samples));
    }
    match radii.iter().find(|&&r| r <= first_failure) {
        Some(&r) => Ok((r, false, samples)),
        None => Err(AnalysisError::Model { r_min: budget.r_min }),
    }
}

fn gain_scale(c0: f64, k: &Matrix) -> f64 {
    c0.hypot(k.inf_norm())
}

/// `d = d′/√(c₀² + ‖K‖∞²)` with `d′` the sampled radius where
/// `‖g(x,u)‖∞ ≤ ‖x‖∞ + ‖u‖∞`.
pub fn estimate_d(
    plant: &PlantModel,
    k: &Matrix,
    c0: f64,
    budget: &SamplingBudget,
    seed: u64,
) -> Result<RadiusEstimate> {
    let (raw, vacuous, samples) = sampled_radius(plant, |xn, un| xn + un, budget, seed)?;
    let radius = if vacuous { raw } else { raw / 2.0 };
    let scale = gain_scale(c0, k);
    Ok(RadiusEstimate {
        value: radius / scale,
        raw_radius: raw,
        radius,
        vacuous,
        scale,
        samples,
        seed,
    })
}

/// `δ = min{d, δ′/√(c₀² + ‖K‖∞²)}` with `δ′` the sampled radius where
/// `‖g(x,u)‖∞ ≤ γ(‖x‖∞ + ‖u‖∞)`.
pub fn estimate_delta(
    plant: &PlantModel,
    k: &Matrix,
    gamma: f64,
    d: f64,
    c0: f64,
    budget: &SamplingBudget,
    seed: u64,
) -> Result<RadiusEstimate> {
    if !(gamma > 0.0) {
        return Err(AnalysisError::Invalid(format!("γ must be positive, got {gamma}")));
    }
    let (raw, vacuous, samples) = sampled_radius(plant, |xn, un| gamma * (xn + un), budget, seed)?;
    let radius = if vacuous { raw } else { raw / 2.0 };
    let scale = gain_scale(c0, k);
    Ok(RadiusEstimate {
        value: d.min(radius / scale),
        raw_radius: raw,
        radius,
        vacuous,
        scale,
        samples,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningRanges {
    pub phi0: Vec<f64>,
    pub phi1: Vec<f64>,
    pub gamma: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub eta1: f64,
}

impl Default for TuningRanges {
    fn default() -> Self {
        let steps = |lo: f64, count: usize| (0..count).map(|i| lo + 0.05 * i as f64).collect::<Vec<_>>();
        Self {
            phi0: steps(0.30, 14),
            phi1: steps(1.05, 60),
            gamma: log_axis(1e-4, 1e-1, 7),
            epsilon: log_axis(1.0, 1e3, 7),
            eta1: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tuning {
    pub phi0: f64,
    pub phi1: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub eta0: f64,
    pub eta1: f64,
}

/// Everything the tuning search holds fixed.
#[derive(Debug, Clone)]
pub struct TuningProblem {
    pub a: Matrix,
    pub a_tilde: Matrix,
    pub b_tilde: Matrix,
    pub gain: Matrix,
    pub c0: f64,
    pub c1: f64,
    pub period: f64,
    pub lambda: f64,
    pub levels: u32,
    pub params: DoSParams,
}

/// `ln ω = ρ_F T ln μ₀μ₁ + (1 − ρ_D*) ln ω₀ + ρ_D* ln ω₁`.
fn log_omega(p: &DoSParams, period: f64, mu0: f64, mu1: f64, omega0: f64, omega1: f64) -> f64 {
    let rho_d_star = p.rho_d_star(period);
    p.rho_f * period * (mu0 * mu1).ln() + (1.0 - rho_d_star) * omega0.ln() + rho_d_star * omega1.ln()
}

/// Exhaustive grid search minimizing `ln ω`, the per-step contraction of the
/// Lyapunov envelope. `η₀` follows [`eta0_rule`]; `η₁` is fixed by the ranges.
/// Ties keep the first point in grid order.
pub fn choose_tuning(prob: &TuningProblem, ranges: &TuningRanges) -> Result<Tuning> {
    if [&ranges.phi0, &ranges.phi1, &ranges.gamma, &ranges.epsilon]
        .iter()
        .any(|r| r.is_empty())
    {
        return Err(AnalysisError::TuningFailed("empty search range".into()));
    }
    if !(ranges.eta1 > 0.0) {
        return Err(AnalysisError::TuningFailed(format!(
            "η₁ must be positive, got {}",
            ranges.eta1
        )));
    }
    let closed = &prob.a_tilde + &prob.b_tilde * &prob.gain;
    let mut rejected_phi0 = 0;
    let mut rejected_phi1 = 0;
    let mut modes0 = Vec::new();
    for &phi0 in &ranges.phi0 {
        if !(phi0 > 0.0 && phi0 < 1.0) {
            rejected_phi0 += 1;
            continue;
        }
        match mode_lyapunov(&closed, phi0, 0) {
            Ok(p0) => modes0.push((phi0, ModeData::new(&p0, &closed)?)),
            Err(AnalysisError::Infeasible { .. }) => rejected_phi0 += 1,
            Err(e) => return Err(e),
        }
    }
    let mut modes1 = Vec::new();
    for &phi1 in &ranges.phi1 {
        if !(phi1 > 1.0) {
            rejected_phi1 += 1;
            continue;
        }
        match mode_lyapunov(&prob.a_tilde, phi1, 1) {
            Ok(p1) => modes1.push((phi1, ModeData::new(&p1, &prob.a_tilde)?)),
            Err(AnalysisError::Infeasible { .. }) => rejected_phi1 += 1,
            Err(e) => return Err(e),
        }
    }

    let mut best: Option<(f64, Tuning)> = None;
    let mut rejected_gamma = 0usize;
    for &(phi0, m0) in &modes0 {
        for &gamma in &ranges.gamma {
            let (gamma0, gamma1) = compute_gamma_constants(gamma, prob.c0, &prob.gain, &prob.a, prob.period, prob.c1);
            for &epsilon in &ranges.epsilon {
                let part = partial_omega0(&m0, phi0, gamma0, epsilon);
                if part.phi0_hat >= 1.0 || part.phi0_tilde >= 1.0 {
                    rejected_gamma += 1;
                    continue;
                }
                let eta0 = eta0_rule(part.phi0_tilde, part.vartheta, prob.lambda, prob.levels);
                for &(phi1, m1) in &modes1 {
                    let terms = omega_terms(part, m1.phi_hat(phi1, gamma1), eta0, prob.lambda, prob.levels);
                    if !(terms.omega0 < 1.0) {
                        continue;
                    }
                    let (mu0, mu1) = mu_from_spectra(
                        (m0.lambda_min, m0.lambda_max),
                        (m1.lambda_min, m1.lambda_max),
                        eta0,
                        ranges.eta1,
                    );
                    let score = log_omega(&prob.params, prob.period, mu0, mu1, terms.omega0, terms.omega1);
                    if score.is_finite() && best.is_none_or(|(s, _)| score < s) {
                        best = Some((
                            score,
                            Tuning {
                                phi0,
                                phi1,
                                gamma,
                                epsilon,
                                eta0,
                                eta1: ranges.eta1,
                            },
                        ));
                    }
                }
            }
        }
    }
    best.map(|(_, t)| t).ok_or_else(|| {
        AnalysisError::TuningFailed(format!(
            "{} of {} φ₀ values infeasible, {} of {} φ₁ values infeasible, {rejected_gamma} (φ₀, γ, ε) points with φ̃₀ ≥ 1",
            rejected_phi0,
            ranges.phi0.len(),
            rejected_phi1,
            ranges.phi1.len()
        ))
    })
}

/// Inputs to [`build_certificate`] beyond the plant.
#[derive(Debug, Clone)]
pub struct CertificateConfig {
    pub period: f64,
    pub levels: u32,
    pub gain: Matrix,
    pub params: DoSParams,
    pub ranges: TuningRanges,
    /// Skips the search when set.
    pub tuning: Option<Tuning>,
    pub budget: SamplingBudget,
    pub seed: u64,
}

impl CertificateConfig {
    pub fn new(period: f64, levels: u32, gain: Matrix, params: DoSParams) -> Self {
        Self {
            period,
            levels,
            gain,
            params,
            ranges: TuningRanges::default(),
            tuning: None,
            budget: SamplingBudget::default(),
            seed: 0,
        }
    }
}

fn ser_matrix<S: Serializer>(m: &Matrix, s: S) -> std::result::Result<S::Ok, S::Error> {
    numerics::matrix_to_rows(m).serialize(s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub plant: String,
    pub lipschitz: f64,
    pub region_radius: f64,
    pub empirical_lipschitz: f64,
    pub period: f64,
    pub levels: u32,
    #[serde(serialize_with = "ser_matrix")]
    pub gain: Matrix,
    pub params: DoSParams,
    pub tuning_source: &'static str,
    pub ranges: TuningRanges,
    pub lyapunov_q: &'static str,
    pub budget: SamplingBudget,
    pub d_estimate: RadiusEstimate,
    pub delta_estimate: RadiusEstimate,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdicts {
    pub theorem1: Theorem1Verdict,
    /// Strict upper bound on `E₀`; absent when the stability condition fails.
    pub theorem2_e0_bound: Option<f64>,
    /// `ω < 1`, i.e. the Lyapunov envelope contracts.
    pub envelope_contracts: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityCertificate {
    pub lambda: f64,
    pub c0: f64,
    pub c1: f64,
    pub gamma: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub phi0: f64,
    pub phi1: f64,
    #[serde(serialize_with = "ser_matrix")]
    pub p0: Matrix,
    #[serde(serialize_with = "ser_matrix")]
    pub p1: Matrix,
    pub lyapunov_residual0: f64,
    pub lyapunov_residual1: f64,
    pub eta0: f64,
    pub eta1: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub beta: f64,
    pub mu0: f64,
    pub mu1: f64,
    pub nu0: f64,
    pub nu1: f64,
    pub phi0_hat: f64,
    pub phi0_tilde: f64,
    pub vartheta: f64,
    pub phi1_hat: f64,
    pub omega0: f64,
    pub omega1: f64,
    pub d: f64,
    pub delta: f64,
    pub delta_star: f64,
    pub kappa_d_star: f64,
    pub rho_d_star: f64,
    pub c_w: f64,
    pub omega: f64,
    pub data_rate: f64,
    pub verdicts: Verdicts,
    pub provenance: Provenance,
}

fn c_w(mu0: f64, mu1: f64, omega0: f64, omega1: f64, kappa_f: f64, kappa_d_star: f64, period: f64) -> f64 {
    (mu0 * mu1).powf(kappa_f) * (omega1 / omega0).powf(kappa_d_star / period)
}

fn envelope_rate(mu0: f64, mu1: f64, omega0: f64, omega1: f64, rho_f: f64, rho_d_star: f64, period: f64) -> f64 {
    (mu0 * mu1).powf(rho_f * period) * omega0.powf(1.0 - rho_d_star) * omega1.powf(rho_d_star)
}

pub fn build_certificate(plant: &PlantModel, cfg: &CertificateConfig) -> Result<StabilityCertificate> {
    let n = plant.state_dim();
    if cfg.gain.shape() != (plant.input_dim(), n) {
        return Err(AnalysisError::Invalid(format!(
            "K is {:?}, expected ({}, {n})",
            cfg.gain.shape(),
            plant.input_dim()
        )));
    }
    if !(cfg.period > 0.0) || cfg.levels < 2 {
        return Err(AnalysisError::Invalid(format!(
            "need T > 0 and M ≥ 2, got T = {}, M = {}",
            cfg.period, cfg.levels
        )));
    }
    cfg.params
        .validate()
        .map_err(|e| AnalysisError::Invalid(e.to_string()))?;
    let lin = plant.linearized(cfg.period)?;
    let lambda = compute_lambda(plant.lipschitz(), cfg.period);
    let (c0, c1) = compute_c_constants(&lin.a, &lin.b, &cfg.gain, cfg.period);
    let (tuning, tuning_source) = match cfg.tuning {
        Some(t) => (t, "fixed"),
        None => {
            let prob = TuningProblem {
                a: lin.a.clone(),
                a_tilde: lin.a_tilde.clone(),
                b_tilde: lin.b_tilde.clone(),
                gain: cfg.gain.clone(),
                c0,
                c1,
                period: cfg.period,
                lambda,
                levels: cfg.levels,
                params: cfg.params,
            };
            (choose_tuning(&prob, &cfg.ranges)?, "grid_search")
        }
    };
    let (gamma0, gamma1) = compute_gamma_constants(tuning.gamma, c0, &cfg.gain, &lin.a, cfg.period, c1);
    let (p0, p1) = solve_mode_lyapunov(&lin.a_tilde, &lin.b_tilde, &cfg.gain, tuning.phi0, tuning.phi1)?;
    let closed = &lin.a_tilde + &lin.b_tilde * &cfg.gain;
    let lyapunov_residual0 = lyapunov_residual(&closed, &p0, tuning.phi0)?;
    let lyapunov_residual1 = lyapunov_residual(&lin.a_tilde, &p1, tuning.phi1)?;
    let omega = compute_omega(&OmegaInputs {
        phi0: tuning.phi0,
        phi1: tuning.phi1,
        gamma0,
        gamma1,
        p0: &p0,
        p1: &p1,
        gain: &cfg.gain,
        a_tilde: &lin.a_tilde,
        b_tilde: &lin.b_tilde,
        eta0: tuning.eta0,
        eta1: tuning.eta1,
        epsilon: tuning.epsilon,
        lambda,
        levels: cfg.levels,
    })?;
    let (alpha, beta) = compute_alpha_beta(&p0, &p1, tuning.eta0, tuning.eta1, n)?;
    let (mu0, mu1) = compute_mu(&p0, &p1, tuning.eta0, tuning.eta1)?;
    let (nu0, nu1) = compute_nu(tuning.phi0, tuning.phi1, lambda, cfg.levels);

    let d_estimate = estimate_d(plant, &cfg.gain, c0, &cfg.budget, cfg.seed)?;
    let delta_estimate = estimate_delta(
        plant,
        &cfg.gain,
        tuning.gamma,
        d_estimate.value,
        c0,
        &cfg.budget,
        cfg.seed,
    )?;
    let delta = delta_estimate.value;
    let delta_star = delta * (alpha / beta).sqrt();

    let p = cfg.params;
    let kappa_d_star = p.kappa_d_star(cfg.period);
    let rho_d_star = p.rho_d_star(cfg.period);
    let cw = c_w(
        mu0,
        mu1,
        omega.omega0,
        omega.omega1,
        p.kappa_f,
        kappa_d_star,
        cfg.period,
    );
    let rate = envelope_rate(mu0, mu1, omega.omega0, omega.omega1, p.rho_f, rho_d_star, cfg.period);
    let theorem1 = check_stability_condition(&p, cfg.period, mu0, mu1, nu0, nu1);
    let theorem2_e0_bound = theorem1
        .pass
        .then(|| max_e0(delta, alpha, beta, mu0, mu1, omega.omega0, omega.omega1, &p, cfg.period));

    Ok(StabilityCertificate {
        lambda,
        c0,
        c1,
        gamma: tuning.gamma,
        gamma0,
        gamma1,
        phi0: tuning.phi0,
        phi1: tuning.phi1,
        p0,
        p1,
        lyapunov_residual0,
        lyapunov_residual1,
        eta0: tuning.eta0,
        eta1: tuning.eta1,
        epsilon: tuning.epsilon,
        alpha,
        beta,
        mu0,
        mu1,
        nu0,
        nu1,
        phi0_hat: omega.phi0_hat,
        phi0_tilde: omega.phi0_tilde,
        vartheta: omega.vartheta,
        phi1_hat: omega.phi1_hat,
        omega0: omega.omega0,
        omega1: omega.omega1,
        d: d_estimate.value,
        delta,
        delta_star,
        kappa_d_star,
        rho_d_star,
        c_w: cw,
        omega: rate,
        data_rate: data_rate(n, cfg.levels, cfg.period),
        verdicts: Verdicts {
            theorem1,
            theorem2_e0_bound,
            envelope_contracts: rate < 1.0,
        },
        provenance: Provenance {
            plant: plant.name().to_string(),
            lipschitz: plant.lipschitz(),
            region_radius: plant.region_radius(),
            empirical_lipschitz: plant.empirical_lipschitz(4096, 1.0, cfg.seed),
            period: cfg.period,
            levels: cfg.levels,
            gain: cfg.gain.clone(),
            params: p,
            tuning_source,
            ranges: cfg.ranges.clone(),
            lyapunov_q: "identity",
            budget: cfg.budget,
            d_estimate,
            delta_estimate,
            seed: cfg.seed,
        },
    })
}

impl StabilityCertificate {
    /// `W_p(ξ, E) = ξᵀP_pξ + η_pE²`.
    pub fn lyapunov_value(&self, mode: u8, xi: &Vector, e: f64) -> f64 {
        let (p, eta) = if mode == 0 {
            (&self.p0, self.eta0)
        } else {
            (&self.p1, self.eta1)
        };
        xi.dot(&(p * xi)) + eta * e * e
    }

    /// Factor bounding `W_{θ⁺}(ξ⁺,E⁺) / W_θ(ξ,E)` for the transition `θ → θ⁺`.
    pub fn step_factor(&self, from: u8, to: u8) -> f64 {
        let (omega, mu) = if from == 0 {
            (self.omega0, self.mu0)
        } else {
            (self.omega1, self.mu1)
        };
        if from == to {
            omega
        } else {
            mu * omega
        }
    }

    /// Violated internal identities and ranges; empty for a sound certificate.
    pub fn consistency_errors(&self) -> Vec<String> {
        let p = &self.provenance.params;
        let period = self.provenance.period;
        let mut errs = Vec::new();
        let mut check = |ok: bool, what: &str| {
            if !ok {
                errs.push(what.to_string());
            }
        };
        check(self.nu0 <= self.omega0 && self.omega0 < 1.0, "ν₀ ≤ ω₀ < 1");
        check(self.nu1 <= self.omega1, "ν₁ ≤ ω₁");
        check(self.mu0 >= 1.0 && self.mu1 >= 1.0, "μ₀, μ₁ ≥ 1");
        check(self.alpha <= self.beta, "α ≤ β");
        check(
            self.phi0 > 0.0 && self.phi0 < 1.0 && self.phi1 > 1.0,
            "φ₀ ∈ (0,1), φ₁ > 1",
        );
        check(
            self.kappa_d_star == p.kappa_d + p.kappa_f * period,
            "κ_D* = κ_D + κ_F T",
        );
        check(self.rho_d_star == p.rho_d + p.rho_f * period, "ρ_D* = ρ_D + ρ_F T");
        check(
            self.c_w
                == c_w(
                    self.mu0,
                    self.mu1,
                    self.omega0,
                    self.omega1,
                    p.kappa_f,
                    self.kappa_d_star,
                    period,
                ),
            "c_W recomputation",
        );
        check(
            self.omega
                == envelope_rate(
                    self.mu0,
                    self.mu1,
                    self.omega0,
                    self.omega1,
                    p.rho_f,
                    self.rho_d_star,
                    period,
                ),
            "ω recomputation",
        );
        check(self.delta > 0.0 && self.delta <= self.d, "0 < δ ≤ d");
        check(
            self.lyapunov_residual0 < 0.0 && self.lyapunov_residual1 < 0.0,
            "Lyapunov residuals negative",
        );
        let finite = [
            self.lambda,
            self.c0,
            self.c1,
            self.gamma0,
            self.gamma1,
            self.eta0,
            self.alpha,
            self.beta,
            self.mu0,
            self.mu1,
            self.omega0,
            self.omega1,
            self.d,
            self.delta,
            self.delta_star,
            self.c_w,
            self.omega,
        ];
        check(finite.iter().all(|v| v.is_finite()), "finite constants");
        check(
            self.p0.iter().chain(self.p1.iter()).all(|v| v.is_finite()),
            "finite P₀, P₁",
        );
        errs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lemma3Report {
    pub pass: bool,
    pub steps_checked: usize,
    /// Samples with `‖ξ_k‖∞ + E_k > δ`, outside the lemma's region.
    pub excluded: Vec<usize>,
    pub first_step_violation: Option<usize>,
    pub first_envelope_violation: Option<usize>,
    /// Largest observed `W_{k+1} / (factor·W_k)`.
    pub worst_step_ratio: f64,
    /// Largest observed `W_k / (c_W ωᵏ W₀)`.
    pub worst_envelope_ratio: f64,
}

fn ratio(value: f64, bound: f64) -> f64 {
    if bound > 0.0 {
        value / bound
    } else if value > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Evaluates `W_{θ_k}(ξ_k, E_k)` along a trace and checks both the per-step
/// decay factors and the cumulative envelope `c_W ωᵏ W_{θ₀}(ξ₀, E₀)`.
pub fn check_lemma3_decay(trace: &SimTrace, cert: &StabilityCertificate) -> Lemma3Report {
    let records = &trace.records;
    let w: Vec<f64> = records
        .iter()
        .map(|r| cert.lyapunov_value(r.theta, &r.xi, r.e))
        .collect();
    let inside: Vec<bool> = records.iter().map(|r| r.xi.inf_norm() + r.e <= cert.delta).collect();
    let excluded = inside
        .iter()
        .enumerate()
        .filter(|(_, ok)| !**ok)
        .map(|(k, _)| k)
        .collect();
    let mut report = Lemma3Report {
        pass: true,
        steps_checked: 0,
        excluded,
        first_step_violation: None,
        first_envelope_violation: None,
        worst_step_ratio: 0.0,
        worst_envelope_ratio: 0.0,
    };
    let Some(&w0) = w.first() else {
        return report;
    };
    for k in 0..records.len() {
        if !inside[k] {
            continue;
        }
        let env = ratio(w[k], cert.c_w * cert.omega.powi(k as i32) * w0);
        report.worst_envelope_ratio = report.worst_envelope_ratio.max(env);
        if env > 1.0 + DECAY_SLACK && report.first_envelope_violation.is_none() {
            report.first_envelope_violation = Some(k);
        }
        if k + 1 < records.len() {
            report.steps_checked += 1;
            let factor = cert.step_factor(records[k].theta, records[k + 1].theta);
            let step = ratio(w[k + 1], factor * w[k]);
            report.worst_step_ratio = report.worst_step_ratio.max(step);
            if step > 1.0 + DECAY_SLACK && report.first_step_violation.is_none() {
                report.first_step_violation = Some(k);
            }
        }
    }
    report.pass = report.first_step_violation.is_none() && report.first_envelope_violation.is_none();
    report
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpotCheck {
    pub checked: usize,
    pub violations: usize,
    pub worst_ratio: f64,
}

/// One-step decay at random `(ξ, E)` with `‖ξ‖∞ + E ≤ δ` and a random state in
/// the quantization region, through every mode transition.
pub fn lemma3_spot_check(
    plant: &PlantModel,
    cert: &StabilityCertificate,
    samples: usize,
    seed: u64,
) -> Result<SpotCheck> {
    let period = cert.provenance.period;
    let gain = &cert.provenance.gain;
    let step = period / simloop::DEFAULT_SUBSTEPS as f64;
    let flow = |x: &Vector, u: &Vector| plant.flow_map(x, u, period, step);
    let n = plant.state_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SpotCheck {
        checked: 0,
        violations: 0,
        worst_ratio: 0.0,
    };
    for _ in 0..samples {
        let e = cert.delta * rng.random_range(0.0..1.0);
        let xi = unit_inf_direction(n, &mut rng) * ((cert.delta - e) * rng.random::<f64>());
        let state = QuantizerState::new(xi.clone(), e, cert.provenance.levels)?;
        let x = &xi + Vector::from_fn(n, |_, _| e * rng.random_range(-1.0..=1.0));
        for from in [0u8, 1] {
            let next = if from == 0 {
                let q = state.decode(state.encode(&x)?)?;
                state.zoom_update(Transmission::Received, Some(&q), &flow, gain, cert.lambda)?
            } else {
                state.zoom_update(Transmission::Lost, None, &flow, gain, cert.lambda)?
            };
            let before = cert.lyapunov_value(from, &xi, e);
            for to in [0u8, 1] {
                let after = cert.lyapunov_value(to, next.center(), next.radius());
                let r = ratio(after, cert.step_factor(from, to) * before);
                out.checked += 1;
                out.worst_ratio = out.worst_ratio.max(r);
                if r > 1.0 + DECAY_SLACK {
                    out.violations += 1;
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoaPoint {
    pub x0: Vec<f64>,
    pub converged: bool,
    pub final_norm: f64,
    pub status: SimStatus,
}

/// Runs the template loop from every grid point. The initial radius is
/// enlarged to `‖x₀‖∞` where needed so each run starts without saturation.
/// A run that ends because the quantizer exhausted float precision still
/// counts as converged if its recorded tail is within `tol`.
pub fn estimate_roa(template: &SimConfig, grid: &[Vector], tol: f64, tail: usize) -> Result<Vec<RoaPoint>> {
    grid.par_iter()
        .map(|x0| {
            let mut cfg = template.clone();
            cfg.x0 = x0.clone();
            cfg.e0 = cfg.e0.max(x0.inf_norm());
            cfg.record_dense = false;
            let trace = simloop::run_closed_loop(&cfg)?;
            Ok(RoaPoint {
                x0: x0.iter().copied().collect(),
                converged: (trace.status == SimStatus::Completed || trace.precision_exhausted())
                    && simloop::converged(&trace, tol, tail),
                final_norm: trace.records.last().map_or(f64::NAN, |r| r.x.inf_norm()),
                status: trace.status,
            })
        })
        .collect()
}

/// Cartesian product of per-axis grids, first axis varying slowest.
pub fn grid_points(axes: &[Vec<f64>]) -> Vec<Vector> {
    let mut points = vec![Vec::new()];
    for axis in axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    points.into_iter().map(Vector::from_vec).collect()
}

pub fn write_roa_csv<W: Write>(points: &[RoaPoint], n: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=n).map(|i| format!("x0_{i}")).collect();
    header.extend(["converged", "final_norm", "status"].map(String::from));
    w.write_record(&header)?;
    for p in points {
        let mut row: Vec<String> = p.x0.iter().map(|v| format!("{v:.16e}")).collect();
        row.push(p.converged.to_string());
        row.push(format!("{:.16e}", p.final_norm));
        row.push(serde_plain_status(p.status).into());
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn serde_plain_status(s: SimStatus) -> &'static str {
    match s {
        SimStatus::Completed => "completed",
        SimStatus::Saturated => "saturated",
        SimStatus::BlowUp => "blow_up",
    }
}
