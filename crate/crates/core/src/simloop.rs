//! Closed-loop simulation of the sampled plant behind a lossy channel.
//!
//! Each sampling instant `t_k = kT`:
//!
//! 1. `θ_k` is read off the DoS schedule (an attack active at `t_k` drops the packet).
//! 2. On delivery the encoder's symbol for `x_k ∈ 𝒬(ξ_k, E_k)` reaches the
//!    decoder, which applies `u = K q_k`; a lost packet leaves `u = 0`.
//! 3. The plant runs for one period under the held input.
//! 4. Encoder and decoder replicas both apply the zoom update with the
//!    acknowledged `θ_k`.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::analysis;
use crate::dos::{self, DoSParams, DoSSchedule};
use crate::numerics::{InfNorm, Matrix, NumericsError, Vector};
use crate::plant::{PlantError, PlantModel};
use crate::quantizer::{EncodedSymbol, QuantizerError, QuantizerState, Transmission, SATURATION_SLACK};

/// `‖x‖∞` beyond which a run is declared divergent.
pub const DEFAULT_BLOWUP: f64 = 1e6;

/// Integrator steps per sampling period unless configured otherwise.
pub const DEFAULT_SUBSTEPS: usize = 100;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Quantizer(#[from] QuantizerError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error("trace output: {0}")]
    Csv(#[from] csv::Error),
    #[error("trace output: {0}")]
    Io(#[from] std::io::Error),
}

/// Out-of-assumption settings that are allowed to run.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "warning", rename_all = "snake_case")]
pub enum SimWarning {
    /// `M ≤ Λ`: the quantizer cannot contract even without attacks.
    LevelsNotAboveLambda { levels: u32, lambda: f64 },
    /// `‖x₀‖∞ > E₀`: the initial state is outside the initial region.
    InitialStateOutsideRegion { norm: f64, e0: f64 },
    /// The schedule violates the declared DoS budget.
    ScheduleOutsideBudget { verdict: dos::Verdict },
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub plant: PlantModel,
    pub gain: Matrix,
    pub period: f64,
    pub levels: u32,
    pub e0: f64,
    pub x0: Vector,
    pub schedule: DoSSchedule,
    pub params: DoSParams,
    pub steps: usize,
    pub ode_step: f64,
    /// Carried into summaries; the loop itself draws no randomness.
    pub seed: u64,
    pub blowup: f64,
    /// Keep the integrator-resolution states between samples.
    pub record_dense: bool,
}

impl SimConfig {
    /// Attack-free configuration with default integrator step and blow-up level.
    pub fn new(plant: PlantModel, gain: Matrix, period: f64, levels: u32, e0: f64, x0: Vector, steps: usize) -> Self {
        Self {
            plant,
            gain,
            period,
            levels,
            e0,
            x0,
            schedule: DoSSchedule::empty(),
            params: DoSParams::none(),
            steps,
            ode_step: period / DEFAULT_SUBSTEPS as f64,
            seed: 0,
            blowup: DEFAULT_BLOWUP,
            record_dense: false,
        }
    }

    pub fn with_schedule(mut self, schedule: DoSSchedule, params: DoSParams) -> Self {
        self.schedule = schedule;
        self.params = params;
        self
    }

    pub fn lambda(&self) -> f64 {
        analysis::compute_lambda(self.plant.lipschitz(), self.period)
    }

    pub fn horizon(&self) -> f64 {
        self.steps as f64 * self.period
    }

    /// Hard errors for unusable configs, warnings for assumption violations.
    pub fn validate(&self) -> Result<Vec<SimWarning>, SimError> {
        let n = self.plant.state_dim();
        let m = self.plant.input_dim();
        if self.gain.shape() != (m, n) {
            return Err(SimError::Config(format!(
                "K is {:?}, expected ({m}, {n})",
                self.gain.shape()
            )));
        }
        if self.x0.len() != n {
            return Err(SimError::Config(format!(
                "x0 has length {}, expected {n}",
                self.x0.len()
            )));
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(SimError::Config(format!("T must be positive, got {}", self.period)));
        }
        if !(self.ode_step > 0.0 && self.ode_step <= self.period) {
            return Err(SimError::Config(format!(
                "ode_step must lie in (0, T], got {}",
                self.ode_step
            )));
        }
        let substeps = (self.period / self.ode_step).round();
        if (substeps * self.ode_step - self.period).abs() > 1e-9 * self.period {
            return Err(SimError::Config(format!(
                "ode_step {} does not divide T = {}",
                self.ode_step, self.period
            )));
        }
        if !(self.blowup > 0.0) {
            return Err(SimError::Config(format!(
                "blow-up threshold must be positive, got {}",
                self.blowup
            )));
        }
        if self.gain.iter().chain(self.x0.iter()).any(|v| !v.is_finite()) {
            return Err(SimError::Config("K and x0 must be finite".into()));
        }
        // Surfaces bad M / E0 with the quantizer's own message.
        QuantizerState::at_origin(n, self.e0, self.levels)?;
        self.params.validate().map_err(|e| SimError::Config(e.to_string()))?;

        let mut warnings = Vec::new();
        let lambda = self.lambda();
        if self.levels as f64 <= lambda {
            warnings.push(SimWarning::LevelsNotAboveLambda {
                levels: self.levels,
                lambda,
            });
        }
        let norm = self.x0.inf_norm();
        if norm > self.e0 {
            warnings.push(SimWarning::InitialStateOutsideRegion { norm, e0: self.e0 });
        }
        let verdict = dos::verify_constraints(&self.schedule, &self.params, self.horizon());
        if !verdict.passed() {
            warnings.push(SimWarning::ScheduleOutsideBudget { verdict });
        }
        Ok(warnings)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub k: usize,
    pub t: f64,
    pub x: Vector,
    pub theta: u8,
    /// Delivered symbol; absent on a lost sample.
    pub symbol: Option<u64>,
    /// Decoded value; absent on a lost sample.
    pub q: Option<Vector>,
    /// Quantizer center and radius in force at `t_k`.
    pub xi: Vector,
    pub e: f64,
    pub u: Vector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SimStatus {
    Completed,
    Saturated,
    BlowUp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub records: Vec<SampleRecord>,
    /// `(t, x(t))` at integrator resolution, when requested.
    pub dense: Vec<(f64, Vector)>,
    pub status: SimStatus,
    /// Time at which an early termination was detected.
    pub terminated_at: Option<f64>,
    pub warnings: Vec<SimWarning>,
    pub lambda: f64,
    pub levels: u32,
    pub period: f64,
    pub e0: f64,
    /// Largest encoder/decoder disagreement in `(ξ, E)`, expected to be 0.
    pub replica_mismatch: f64,
}

impl SimTrace {
    /// Losses among samples `0..k`, i.e. the ones that shaped `E_k`.
    pub fn losses_before(&self, k: usize) -> usize {
        self.records[..k].iter().filter(|r| r.theta == 1).count()
    }

    pub fn loss_count(&self) -> usize {
        self.records.iter().filter(|r| r.theta == 1).count()
    }

    /// Saturation with `E_k` already below the floating-point resolution of
    /// `ξ_k`. The state has not escaped; the quantizer has run out of digits.
    pub fn precision_exhausted(&self) -> bool {
        self.status == SimStatus::Saturated
            && self
                .records
                .last()
                .is_some_and(|r| r.e < SATURATION_SLACK * r.xi.inf_norm())
    }
}

/// Runs the loop for `cfg.steps` periods, recording `steps + 1` samples unless
/// the encoder saturates or the state blows up first. Saturation is only
/// detected at delivered samples, since a lost symbol is never used.
pub fn run_closed_loop(cfg: &SimConfig) -> Result<SimTrace, SimError> {
    let warnings = cfg.validate()?;
    let n = cfg.plant.state_dim();
    let m = cfg.plant.input_dim();
    let lambda = cfg.lambda();
    let plant = &cfg.plant;
    let (period, ode_step) = (cfg.period, cfg.ode_step);
    let flow = |x: &Vector, u: &Vector| plant.flow_map(x, u, period, ode_step);

    let mut encoder = QuantizerState::at_origin(n, cfg.e0, cfg.levels)?;
    let mut decoder = encoder.clone();
    let mut x = cfg.x0.clone();
    let mut trace = SimTrace {
        records: Vec::with_capacity(cfg.steps + 1),
        dense: Vec::new(),
        status: SimStatus::Completed,
        terminated_at: None,
        warnings,
        lambda,
        levels: cfg.levels,
        period,
        e0: cfg.e0,
        replica_mismatch: 0.0,
    };
    if cfg.record_dense {
        trace.dense.push((0.0, x.clone()));
    }

    for k in 0..=cfg.steps {
        let t = k as f64 * period;
        let outcome = Transmission::from_loss_flag(cfg.schedule.is_active(t));
        let symbol = match outcome {
            Transmission::Lost => None,
            Transmission::Received => match encoder.encode(&x) {
                Ok(s) => Some(s),
                Err(QuantizerError::Saturation { .. }) => {
                    trace.records.push(SampleRecord {
                        k,
                        t,
                        x: x.clone(),
                        theta: 0,
                        symbol: None,
                        q: None,
                        xi: encoder.center().clone(),
                        e: encoder.radius(),
                        u: Vector::zeros(m),
                    });
                    trace.status = SimStatus::Saturated;
                    trace.terminated_at = Some(t);
                    return Ok(trace);
                }
                Err(e) => return Err(e.into()),
            },
        };
        let (q_enc, q_dec) = match symbol {
            Some(s) => (Some(encoder.decode(s)?), Some(decoder.decode(s)?)),
            None => (None, None),
        };
        let u = match &q_dec {
            Some(q) => &cfg.gain * q,
            None => Vector::zeros(m),
        };
        trace.records.push(SampleRecord {
            k,
            t,
            x: x.clone(),
            theta: outcome.theta(),
            symbol: symbol.map(|EncodedSymbol(s)| s),
            q: q_dec.clone(),
            xi: decoder.center().clone(),
            e: decoder.radius(),
            u: u.clone(),
        });
        if k == cfg.steps {
            break;
        }

        let next = if cfg.record_dense {
            plant.flow_trajectory(&x, &u, (0.0, period), ode_step).map(|traj| {
                for (s, state) in traj.times.iter().zip(&traj.states).skip(1) {
                    trace.dense.push((t + s, state.clone()));
                }
                traj.states.last().cloned().unwrap_or_else(|| x.clone())
            })
        } else {
            plant.flow_map(&x, &u, period, ode_step)
        };
        x = match next {
            Ok(v) if v.iter().all(|c| c.is_finite()) && v.inf_norm() <= cfg.blowup => v,
            Ok(_) | Err(PlantError::Numerics(NumericsError::BlowUp { .. })) => {
                trace.status = SimStatus::BlowUp;
                trace.terminated_at = Some(t + period);
                return Ok(trace);
            }
            Err(e) => return Err(e.into()),
        };

        let updated = encoder
            .zoom_update(outcome, q_enc.as_ref(), &flow, &cfg.gain, lambda)
            .and_then(|enc| {
                Ok((
                    enc,
                    decoder.zoom_update(outcome, q_dec.as_ref(), &flow, &cfg.gain, lambda)?,
                ))
            });
        (encoder, decoder) = match updated {
            Ok(pair) => pair,
            // The predicted center can diverge before the state does.
            Err(QuantizerError::Flow(PlantError::Numerics(NumericsError::BlowUp { .. }))) => {
                trace.status = SimStatus::BlowUp;
                trace.terminated_at = Some(t + period);
                return Ok(trace);
            }
            Err(e) => return Err(e.into()),
        };
        let gap = (encoder.center() - decoder.center())
            .inf_norm()
            .max((encoder.radius() - decoder.radius()).abs());
        trace.replica_mismatch = trace.replica_mismatch.max(gap);
    }
    Ok(trace)
}

/// Whether `‖x_k − ξ_k‖∞ ≤ E_k + 1e-12·(E_k + ‖ξ_k‖∞)` at every recorded
/// sample, the encoder's own acceptance test.
pub fn check_no_saturation(trace: &SimTrace) -> bool {
    trace
        .records
        .iter()
        .all(|r| (&r.x - &r.xi).inf_norm() <= r.e + SATURATION_SLACK * (r.e + r.xi.inf_norm()))
}

/// Whether the last `tail` recorded samples all have `‖x_k‖∞ ≤ tol`.
/// Traces shorter than `tail` never count as converged.
pub fn converged(trace: &SimTrace, tol: f64, tail: usize) -> bool {
    let len = trace.records.len();
    len >= tail && trace.records[len - tail..].iter().all(|r| r.x.inf_norm() <= tol)
}

/// Largest relative deviation of the recorded `E_k` from
/// `Λ^{χ_k} (Λ/M)^{k−χ_k} E₀`.
pub fn radius_law_deviation(trace: &SimTrace) -> f64 {
    let shrink = trace.lambda / trace.levels as f64;
    let mut lost = 0i32;
    let mut worst: f64 = 0.0;
    for (k, r) in trace.records.iter().enumerate() {
        let expected = trace.lambda.powi(lost) * shrink.powi(k as i32 - lost) * trace.e0;
        let dev = if expected == 0.0 {
            r.e.abs()
        } else {
            (r.e - expected).abs() / expected
        };
        worst = worst.max(dev);
        lost += r.theta as i32;
    }
    worst
}

fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Per-sample CSV: `t,x1..xn,theta,symbol,q1..qn,xi1..xin,E,u1..um`.
/// Lost samples leave `symbol` and `q` empty.
pub fn write_trace_csv<W: Write>(trace: &SimTrace, n: usize, m: usize, out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.push("theta".into());
    header.push("symbol".into());
    header.extend((1..=n).map(|i| format!("q{i}")));
    header.extend((1..=n).map(|i| format!("xi{i}")));
    header.push("E".into());
    header.extend((1..=m).map(|i| format!("u{i}")));
    w.write_record(&header)?;
    for r in &trace.records {
        let mut row = vec![fmt_num(r.t)];
        row.extend(r.x.iter().map(|v| fmt_num(*v)));
        row.push(r.theta.to_string());
        row.push(r.symbol.map(|s| s.to_string()).unwrap_or_default());
        match &r.q {
            Some(q) => row.extend(q.iter().map(|v| fmt_num(*v))),
            None => row.extend(std::iter::repeat_n(String::new(), n)),
        }
        row.extend(r.xi.iter().map(|v| fmt_num(*v)));
        row.push(fmt_num(r.e));
        row.extend(r.u.iter().map(|v| fmt_num(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Dense CSV: `t,x1..xn`.
pub fn write_dense_csv<W: Write>(trace: &SimTrace, n: usize, out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    for (t, x) in &trace.dense {
        let mut row = vec![fmt_num(*t)];
        row.extend(x.iter().map(|v| fmt_num(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimSummary {
    pub status: SimStatus,
    pub terminated_at: Option<f64>,
    pub samples: usize,
    pub losses: usize,
    pub final_state_norm: Option<f64>,
    pub max_state_norm: f64,
    pub initial_radius: f64,
    pub final_radius: Option<f64>,
    pub min_radius: Option<f64>,
    pub max_radius: Option<f64>,
    pub lambda: f64,
    pub levels: u32,
    pub data_rate_bits_per_second: f64,
    pub no_saturation: bool,
    pub precision_exhausted: bool,
    pub converged: bool,
    pub converged_tol: f64,
    pub converged_tail: usize,
    pub replica_mismatch: f64,
    pub seed: u64,
    pub warnings: Vec<SimWarning>,
}

pub fn summarize(trace: &SimTrace, cfg: &SimConfig, tol: f64, tail: usize) -> SimSummary {
    let radii = trace.records.iter().map(|r| r.e);
    SimSummary {
        status: trace.status,
        terminated_at: trace.terminated_at,
        samples: trace.records.len(),
        losses: trace.loss_count(),
        final_state_norm: trace.records.last().map(|r| r.x.inf_norm()),
        max_state_norm: trace.records.iter().map(|r| r.x.inf_norm()).fold(0.0, f64::max),
        initial_radius: trace.e0,
        final_radius: trace.records.last().map(|r| r.e),
        min_radius: radii.clone().reduce(f64::min),
        max_radius: radii.reduce(f64::max),
        lambda: trace.lambda,
        levels: trace.levels,
        data_rate_bits_per_second: analysis::data_rate(cfg.plant.state_dim(), cfg.levels, cfg.period),
        no_saturation: check_no_saturation(trace),
        precision_exhausted: trace.precision_exhausted(),
        converged: converged(trace, tol, tail),
        converged_tol: tol,
        converged_tail: tail,
        replica_mismatch: trace.replica_mismatch,
        seed: cfg.seed,
        warnings: trace.warnings.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dos::{generate_constrained, Attack, Strategy};
    use crate::numerics::matrix_from_rows;
    use crate::plant::{lienard_plant, linear_plant};
    use proptest::prelude::*;

    fn v(e: &[f64]) -> Vector {
        Vector::from_column_slice(e)
    }

    fn lienard_cfg(x0: &[f64], steps: usize) -> SimConfig {
        let k = matrix_from_rows(&[vec![-1.81, -1.90]]).unwrap();
        SimConfig::new(lienard_plant(1.0 / 3.0, 1.0 / 50.0), k, 0.1, 6, 0.15, v(x0), steps)
    }

    fn always_lost(steps: usize, period: f64) -> DoSSchedule {
        DoSSchedule::new(vec![Attack {
            start: 0.0,
            duration: steps as f64 * period + 1.0,
        }])
        .unwrap()
    }

    #[test]
    fn origin_stays_put() {
        let mut cfg = lienard_cfg(&[0.0, 0.0], 50);
        cfg.e0 = 0.0;
        let p = DoSParams::new(1.0, 0.5, 0.5, 0.25).unwrap();
        let sched = generate_constrained(&p, 0.1, 5.0, Strategy::Periodic, 0).unwrap();
        let trace = run_closed_loop(&cfg.with_schedule(sched, p)).unwrap();
        assert_eq!(trace.status, SimStatus::Completed);
        assert_eq!(trace.records.len(), 51);
        for r in &trace.records {
            assert_eq!(r.x.inf_norm(), 0.0);
            assert_eq!(r.e, 0.0);
            assert_eq!(r.u.inf_norm(), 0.0);
        }
        assert!(check_no_saturation(&trace));
        assert!(converged(&trace, 1e-300, 51));
    }

    #[test]
    fn all_lost_runs_open_loop_with_growing_radius() {
        let steps = 15;
        let cfg = lienard_cfg(&[0.01, 0.0], steps);
        let lambda = cfg.lambda();
        let e0 = cfg.e0;
        let cfg = cfg.with_schedule(always_lost(steps, 0.1), DoSParams::new(1.0, 0.0, 10.0, 0.0).unwrap());
        let trace = run_closed_loop(&cfg).unwrap();
        assert_eq!(trace.status, SimStatus::Completed);
        let open_loop = cfg
            .plant
            .flow_map(&cfg.x0, &v(&[0.0]), 0.1 * steps as f64, 1e-3)
            .unwrap();
        for (k, r) in trace.records.iter().enumerate() {
            assert_eq!(r.theta, 1);
            assert!(r.symbol.is_none() && r.q.is_none());
            assert_eq!(r.u.inf_norm(), 0.0);
            let expected = lambda.powi(k as i32) * e0;
            assert!((r.e - expected).abs() <= 1e-12 * expected, "k = {k}");
        }
        let last = &trace.records[steps].x;
        assert!((last - &open_loop).inf_norm() < 1e-9);
    }

    #[test]
    fn lienard_converges_under_sparse_attacks() {
        // One 0.5 s burst every 5 s, the first at t = 5.
        let p = DoSParams::new(0.0, 0.2, 0.5, 0.1).unwrap();
        let sched = generate_constrained(&p, 0.1, 30.0, Strategy::Periodic, 0).unwrap();
        let trace = run_closed_loop(&lienard_cfg(&[0.1, 0.1], 300).with_schedule(sched, p)).unwrap();
        assert_eq!(trace.status, SimStatus::Completed);
        assert!(trace.warnings.is_empty(), "{:?}", trace.warnings);
        assert!(check_no_saturation(&trace));
        assert!(converged(&trace, 1e-3, 50));
        assert!(trace.loss_count() > 0);
        assert_eq!(trace.replica_mismatch, 0.0);
        assert!(radius_law_deviation(&trace) <= 1e-12);
    }

    #[test]
    fn control_law_and_record_layout() {
        let p = DoSParams::new(1.0, 0.5, 0.5, 0.25).unwrap();
        let sched = generate_constrained(&p, 0.1, 10.0, Strategy::Periodic, 0).unwrap();
        let cfg = lienard_cfg(&[0.05, -0.05], 100).with_schedule(sched.clone(), p);
        let trace = run_closed_loop(&cfg).unwrap();
        for r in &trace.records {
            assert_eq!(r.theta == 1, sched.is_active(r.t));
            match &r.q {
                Some(q) => assert!((&r.u - &cfg.gain * q).inf_norm() == 0.0),
                None => assert_eq!(r.u.inf_norm(), 0.0),
            }
        }
    }

    #[test]
    fn radius_strictly_decreases_without_attacks() {
        let trace = run_closed_loop(&lienard_cfg(&[0.1, 0.1], 60)).unwrap();
        assert!(trace.records.windows(2).all(|w| w[1].e < w[0].e));
    }

    #[test]
    fn saturation_is_reported() {
        let mut cfg = lienard_cfg(&[0.5, 0.0], 10);
        cfg.e0 = 0.1;
        let trace = run_closed_loop(&cfg).unwrap();
        assert_eq!(trace.status, SimStatus::Saturated);
        assert_eq!(trace.terminated_at, Some(0.0));
        assert!(!check_no_saturation(&trace));
        assert!(trace
            .warnings
            .iter()
            .any(|w| matches!(w, SimWarning::InitialStateOutsideRegion { .. })));
        assert!(!trace.precision_exhausted());
    }

    #[test]
    fn long_attack_free_run_exhausts_precision() {
        // E shrinks by Λ/M ≈ 0.45 per sample while x decays by about 0.95, so
        // E eventually drops below the rounding error between x and ξ.
        let mut cfg = lienard_cfg(&[0.1, 0.1], 200);
        cfg.e0 = 0.1;
        let trace = run_closed_loop(&cfg).unwrap();
        assert_eq!(trace.status, SimStatus::Saturated);
        assert!(trace.precision_exhausted());
        let last = trace.records.last().unwrap();
        assert!(last.e < 1e-40 && last.x.inf_norm() < 1e-2, "{last:?}");
        assert!(radius_law_deviation(&trace) <= 1e-12);
    }

    #[test]
    fn open_loop_unstable_linear_plant_blows_up() {
        let a = matrix_from_rows(&[vec![3.0]]).unwrap();
        let b = matrix_from_rows(&[vec![1.0]]).unwrap();
        let plant = linear_plant(a, b, None, None).unwrap();
        let mut cfg = SimConfig::new(
            plant,
            matrix_from_rows(&[vec![0.0]]).unwrap(),
            1.0,
            64,
            2.0,
            v(&[1.0]),
            20,
        )
        .with_schedule(always_lost(20, 1.0), DoSParams::new(1.0, 0.0, 50.0, 0.0).unwrap());
        cfg.blowup = 1e4;
        let trace = run_closed_loop(&cfg).unwrap();
        assert_eq!(trace.status, SimStatus::BlowUp);
        assert!(!converged(&trace, 1e-2, 5));
    }

    #[test]
    fn warnings_do_not_stop_the_run() {
        let mut cfg = lienard_cfg(&[0.01, 0.01], 5);
        cfg.levels = 2;
        let trace = run_closed_loop(&cfg).unwrap();
        assert!(trace
            .warnings
            .iter()
            .any(|w| matches!(w, SimWarning::LevelsNotAboveLambda { .. })));
    }

    #[test]
    fn config_errors() {
        let mut cfg = lienard_cfg(&[0.0, 0.0], 5);
        cfg.x0 = v(&[0.0]);
        assert!(matches!(run_closed_loop(&cfg), Err(SimError::Config(_))));
        let mut cfg = lienard_cfg(&[0.0, 0.0], 5);
        cfg.levels = 1;
        assert!(run_closed_loop(&cfg).is_err());
        let mut cfg = lienard_cfg(&[0.0, 0.0], 5);
        cfg.ode_step = 0.03;
        assert!(run_closed_loop(&cfg).is_err());
    }

    #[test]
    fn hand_built_trace_outside_region() {
        let mut trace = run_closed_loop(&lienard_cfg(&[0.1, 0.1], 3)).unwrap();
        assert!(check_no_saturation(&trace));
        trace.records[2].x = &trace.records[2].xi + v(&[2.0 * trace.records[2].e, 0.0]);
        assert!(!check_no_saturation(&trace));
    }

    #[test]
    fn dense_states_line_up_with_samples() {
        let mut cfg = lienard_cfg(&[0.1, 0.1], 10);
        cfg.record_dense = true;
        let trace = run_closed_loop(&cfg).unwrap();
        assert_eq!(trace.dense.len(), 10 * DEFAULT_SUBSTEPS + 1);
        for r in &trace.records {
            let (t, x) = &trace.dense[r.k * DEFAULT_SUBSTEPS];
            assert!((t - r.t).abs() < 1e-12);
            assert_eq!(x, &r.x);
        }
    }

    #[test]
    fn trace_csv_layout() {
        let p = DoSParams::new(1.0, 0.5, 0.5, 0.25).unwrap();
        let sched = generate_constrained(&p, 0.1, 1.0, Strategy::Periodic, 0).unwrap();
        let trace = run_closed_loop(&lienard_cfg(&[0.1, 0.1], 10).with_schedule(sched, p)).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&trace, 2, 1, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,x1,x2,theta,symbol,q1,q2,xi1,xi2,E,u1"));
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first.len(), 11);
        assert_eq!(first[3], "1");
        assert_eq!((first[4], first[5], first[6]), ("", "", ""));
        assert_eq!(text.lines().count(), 12);
        let e: f64 = first[9].parse().unwrap();
        assert_eq!(e, trace.records[0].e);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn runs_are_deterministic_and_follow_the_radius_law(seed in any::<u64>(), x1 in -0.1f64..0.1, x2 in -0.1f64..0.1) {
            let p = DoSParams::new(1.0, 0.4, 0.3, 0.2).unwrap();
            let sched = generate_constrained(&p, 0.1, 8.0, Strategy::Random, seed).unwrap();
            let cfg = lienard_cfg(&[x1, x2], 80).with_schedule(sched, p);
            let a = run_closed_loop(&cfg).unwrap();
            let b = run_closed_loop(&cfg).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(radius_law_deviation(&a) <= 1e-12);
            prop_assert_eq!(a.replica_mismatch, 0.0);
            for r in &a.records {
                prop_assert!(r.theta <= 1);
            }
            if a.status == SimStatus::Completed {
                prop_assert_eq!(a.records.len(), 81);
                prop_assert!(check_no_saturation(&a));
            }
        }
    }
}
