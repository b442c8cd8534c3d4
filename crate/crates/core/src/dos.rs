//! Denial-of-Service schedules and their average frequency/duration budget.
//!
//! A schedule is a finite list of closed intervals `[aᵢ, aᵢ + τᵢ]`
//! (`τᵢ = 0` is an impulsive attack hitting exactly `aᵢ`). The budget is
//! `N(t) ≤ κ_F + ρ_F t` on attack starts and `|𝒜(t)| ≤ κ_D + ρ_D t` on the
//! measure of the attacked set.
//!
//! # Verification on a finite set
//!
//! `N(t) − ρ_F t` only jumps up at attack starts and decreases in between,
//! so its supremum over `[0, h]` is attained at some start. `|𝒜(t)| − ρ_D t`
//! has slope `1 − ρ_D > 0` while an attack is active and `−ρ_D ≤ 0`
//! otherwise, so its supremum is attained at a right endpoint of a merged
//! attack interval (clipped to the horizon) or at `t = 0`, where it is 0.
//! Checking those points is therefore exact up to the horizon; nothing is
//! claimed beyond it.

use std::fmt;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative slack `1e-12·(1 + bound)` applied before reporting a violation.
pub const VERIFY_SLACK: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum DosError {
    #[error("invalid DoS parameters: {0}")]
    InvalidParams(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("cannot generate a {strategy} schedule: {reason}")]
    Infeasible { strategy: Strategy, reason: String },
    #[error("schedule file: {0}")]
    Csv(#[from] csv::Error),
    #[error("schedule file: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attack {
    pub start: f64,
    pub duration: f64,
}

impl Attack {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<Attack>", into = "Vec<Attack>")]
pub struct DoSSchedule {
    attacks: Vec<Attack>,
}

impl TryFrom<Vec<Attack>> for DoSSchedule {
    type Error = DosError;

    fn try_from(attacks: Vec<Attack>) -> Result<Self, DosError> {
        DoSSchedule::new(attacks)
    }
}

impl From<DoSSchedule> for Vec<Attack> {
    fn from(s: DoSSchedule) -> Self {
        s.attacks
    }
}

impl DoSSchedule {
    /// Validates nonnegative finite entries and nondecreasing starts.
    pub fn new(attacks: Vec<Attack>) -> Result<Self, DosError> {
        for (i, a) in attacks.iter().enumerate() {
            if !(a.start >= 0.0 && a.start.is_finite() && a.duration >= 0.0 && a.duration.is_finite()) {
                return Err(DosError::InvalidSchedule(format!(
                    "attack {i} has start {} duration {}",
                    a.start, a.duration
                )));
            }
        }
        if let Some(i) = attacks.windows(2).position(|w| w[1].start < w[0].start) {
            return Err(DosError::InvalidSchedule(format!(
                "attack {} starts before attack {i}",
                i + 1
            )));
        }
        Ok(Self { attacks })
    }

    /// Sorts by start time before validating.
    pub fn from_unsorted(mut attacks: Vec<Attack>) -> Result<Self, DosError> {
        attacks.sort_by(|a, b| a.start.total_cmp(&b.start));
        Self::new(attacks)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn attacks(&self) -> &[Attack] {
        &self.attacks
    }

    pub fn len(&self) -> usize {
        self.attacks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attacks.is_empty()
    }

    /// Whether `t` lies in some closed attack interval.
    pub fn is_active(&self, t: f64) -> bool {
        self.attacks.iter().take_while(|a| a.start <= t).any(|a| t <= a.end())
    }

    /// `N(t)`, the number of attacks starting in `[0, t]`.
    pub fn count_attacks(&self, t: f64) -> usize {
        self.attacks.partition_point(|a| a.start <= t)
    }

    /// Union of the attack intervals as disjoint closed intervals.
    pub fn merged_intervals(&self) -> Vec<(f64, f64)> {
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for a in &self.attacks {
            match merged.last_mut() {
                Some(last) if a.start <= last.1 => last.1 = last.1.max(a.end()),
                _ => merged.push((a.start, a.end())),
            }
        }
        merged
    }

    /// `|𝒜(t)|`, the measure of the attacked set within `[0, t]`.
    pub fn duration(&self, t: f64) -> f64 {
        self.merged_intervals()
            .iter()
            .take_while(|(s, _)| *s <= t)
            .map(|(s, e)| e.min(t) - s)
            .sum()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), DosError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["start", "duration"])?;
        for a in &self.attacks {
            w.write_record([format!("{:.16e}", a.start), format!("{:.16e}", a.duration)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the `start,duration` CSV format. Rows may be in any order and
    /// lines starting with `#` are skipped.
    pub fn read_csv<R: Read>(input: R) -> Result<Self, DosError> {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
        let headers = r.headers()?.clone();
        if headers.iter().map(str::trim).ne(["start", "duration"]) {
            return Err(DosError::InvalidSchedule(format!(
                "expected header start,duration, got {headers:?}"
            )));
        }
        let mut attacks = Vec::new();
        for row in r.deserialize::<Attack>() {
            attacks.push(row?);
        }
        Self::from_unsorted(attacks)
    }
}

/// `(κ_F, ρ_F, κ_D, ρ_D)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoSParams {
    pub kappa_f: f64,
    pub rho_f: f64,
    pub kappa_d: f64,
    pub rho_d: f64,
}

impl DoSParams {
    pub fn new(kappa_f: f64, rho_f: f64, kappa_d: f64, rho_d: f64) -> Result<Self, DosError> {
        let p = Self {
            kappa_f,
            rho_f,
            kappa_d,
            rho_d,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn none() -> Self {
        Self {
            kappa_f: 0.0,
            rho_f: 0.0,
            kappa_d: 0.0,
            rho_d: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), DosError> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !(finite_nonneg(self.kappa_f) && finite_nonneg(self.rho_f) && finite_nonneg(self.kappa_d)) {
            return Err(DosError::InvalidParams(format!(
                "κ_F, ρ_F, κ_D must be finite and ≥ 0: {self:?}"
            )));
        }
        if !(self.rho_d >= 0.0 && self.rho_d < 1.0) {
            return Err(DosError::InvalidParams(format!(
                "ρ_D must lie in [0, 1), got {}",
                self.rho_d
            )));
        }
        Ok(())
    }

    /// `κ_D* = κ_D + κ_F T`.
    pub fn kappa_d_star(&self, period: f64) -> f64 {
        self.kappa_d + self.kappa_f * period
    }

    /// `ρ_D* = ρ_D + ρ_F T`.
    pub fn rho_d_star(&self, period: f64) -> f64 {
        self.rho_d + self.rho_f * period
    }

    /// Upper bound on the number of lost samples in `[0, t]`:
    /// `(κ_D* + ρ_D* t)/T`.
    pub fn loss_bound(&self, period: f64, t: f64) -> f64 {
        (self.kappa_d_star(period) + self.rho_d_star(period) * t) / period
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assumption {
    Frequency,
    Duration,
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Assumption::Frequency => "frequency",
            Assumption::Duration => "duration",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    /// Both bounds hold on `[0, horizon]`.
    Pass { horizon: f64 },
    /// Earliest violation found.
    Violation {
        time: f64,
        assumption: Assumption,
        observed: f64,
        bound: f64,
    },
}

impl Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Pass { .. })
    }
}

fn exceeds(observed: f64, bound: f64) -> bool {
    observed > bound + VERIFY_SLACK * (1.0 + bound.abs())
}

/// Checks both budget inequalities on `[0, horizon]` at the finite set of
/// critical times described in the module docs.
pub fn verify_constraints(sched: &DoSSchedule, p: &DoSParams, horizon: f64) -> Verdict {
    let mut first: Option<Verdict> = None;
    let mut consider = |v: Verdict| {
        if let (Verdict::Violation { time, .. }, Some(Verdict::Violation { time: best, .. })) = (&v, &first) {
            if time >= best {
                return;
            }
        }
        first = Some(v);
    };

    let attacks = sched.attacks();
    let mut i = 0;
    while i < attacks.len() && attacks[i].start <= horizon {
        let t = attacks[i].start;
        let count = sched.count_attacks(t);
        let bound = p.kappa_f + p.rho_f * t;
        if exceeds(count as f64, bound) {
            consider(Verdict::Violation {
                time: t,
                assumption: Assumption::Frequency,
                observed: count as f64,
                bound,
            });
            break;
        }
        i = count;
    }

    let mut covered = 0.0;
    for (s, e) in sched.merged_intervals() {
        if s > horizon {
            break;
        }
        let t = e.min(horizon);
        covered += t - s;
        let bound = p.kappa_d + p.rho_d * t;
        if exceeds(covered, bound) {
            // The violation begins where the active segment crosses the bound.
            let crossing = ((p.kappa_d + p.rho_d * s - (covered - (t - s))) / (1.0 - p.rho_d)).max(0.0);
            let time = (s + crossing).min(t);
            consider(Verdict::Violation {
                time,
                assumption: Assumption::Duration,
                observed: sched.duration(time),
                bound: p.kappa_d + p.rho_d * time,
            });
            break;
        }
    }

    first.unwrap_or(Verdict::Pass { horizon })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Evenly spaced bursts at rate `ρ_F` with duty `ρ_D`, phased so the
    /// initial budget is never exceeded.
    Periodic,
    /// One maximal burst as early as the budget allows, then periodic bursts.
    FrontLoaded,
    /// Seeded uniform proposals on the sampling grid, kept only if the
    /// schedule stays admissible.
    Random,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Periodic => "periodic",
            Strategy::FrontLoaded => "front_loaded",
            Strategy::Random => "random",
        })
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "periodic" => Ok(Strategy::Periodic),
            "front_loaded" | "front-loaded" => Ok(Strategy::FrontLoaded),
            "random" => Ok(Strategy::Random),
            other => Err(format!("unknown strategy {other:?} (periodic, front_loaded, random)")),
        }
    }
}

/// Produces a schedule on `[0, horizon]` that is admissible under `p`.
pub fn generate_constrained(
    p: &DoSParams,
    period: f64,
    horizon: f64,
    strategy: Strategy,
    seed: u64,
) -> Result<DoSSchedule, DosError> {
    p.validate()?;
    if !(period > 0.0) || !(horizon > 0.0) || !horizon.is_finite() {
        return Err(DosError::InvalidParams(format!(
            "need T > 0 and a finite horizon > 0, got T = {period}, horizon = {horizon}"
        )));
    }
    // No attack can ever start.
    if p.kappa_f + p.rho_f * horizon < 1.0 {
        return Ok(DoSSchedule::empty());
    }
    let attacks = match strategy {
        Strategy::Periodic => periodic(p, horizon, None)?,
        Strategy::FrontLoaded => front_loaded(p, horizon)?,
        Strategy::Random => random(p, period, horizon, seed),
    };
    let sched = DoSSchedule::new(attacks)?;
    match verify_constraints(&sched, p, horizon) {
        Verdict::Pass { .. } => Ok(sched),
        Verdict::Violation { time, assumption, .. } => Err(DosError::Infeasible {
            strategy,
            reason: format!("constructed schedule violates the {assumption} bound at t = {time}"),
        }),
    }
}

/// Earliest time an attack numbered `count` (1-based) may start.
fn earliest_start(p: &DoSParams, count: f64) -> f64 {
    if p.kappa_f >= count {
        0.0
    } else {
        (count - p.kappa_f) / p.rho_f
    }
}

/// Bursts of length `ρ_D/ρ_F` every `1/ρ_F`. With `after = Some((t₀, used, n₀))`
/// the train starts once `t₀` has passed, with `used` attacked time and `n₀`
/// attacks already spent.
fn periodic(p: &DoSParams, horizon: f64, after: Option<(f64, f64, usize)>) -> Result<Vec<Attack>, DosError> {
    if p.rho_f == 0.0 {
        if after.is_some() {
            return Ok(Vec::new());
        }
        return Err(DosError::Infeasible {
            strategy: Strategy::Periodic,
            reason: "a sustained attack train needs ρ_F > 0".into(),
        });
    }
    let spacing = 1.0 / p.rho_f;
    let length = p.rho_d * spacing;
    let (t0, used, spent) = after.unwrap_or((0.0, 0.0, 0));
    // j-th burst (0-based) starts at t0 + phase + j·spacing. Frequency needs
    // spent + j + 1 ≤ κ_F + ρ_F(t0 + phase) + j; duration at the burst's end
    // needs used + (j + 1)ℓ ≤ κ_D + ρ_D(t0 + phase + j·spacing + ℓ).
    let freq_phase = earliest_start(p, spent as f64 + 1.0) - t0;
    let dur_phase = if p.rho_d > 0.0 {
        (used + length * (1.0 - p.rho_d) - p.kappa_d - p.rho_d * t0) / p.rho_d
    } else {
        0.0
    };
    let phase = freq_phase.max(dur_phase).max(0.0);
    let mut attacks = Vec::new();
    let mut j = 0usize;
    loop {
        let start = t0 + phase + j as f64 * spacing;
        if start > horizon {
            break;
        }
        attacks.push(Attack {
            start,
            duration: length,
        });
        j += 1;
    }
    Ok(attacks)
}

fn front_loaded(p: &DoSParams, horizon: f64) -> Result<Vec<Attack>, DosError> {
    let start = earliest_start(p, 1.0);
    // Longest burst with ℓ(1 − ρ_D) ≤ κ_D + ρ_D·start.
    let length = (p.kappa_d + p.rho_d * start) / (1.0 - p.rho_d);
    let mut attacks = vec![Attack {
        start,
        duration: length,
    }];
    let end = start + length;
    attacks.extend(periodic(p, horizon, Some((end, length, 1)))?);
    Ok(attacks)
}

fn random(p: &DoSParams, period: f64, horizon: f64, seed: u64) -> Vec<Attack> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slots = (horizon / period).floor() as u64;
    let typical = if p.rho_f > 0.0 { p.rho_d / p.rho_f } else { horizon };
    let max_len = (p.kappa_d + 2.0 * typical).min(horizon);
    let max_len_slots = (max_len / period).floor() as u64;
    let budget = (p.kappa_f + p.rho_f * horizon).ceil() as usize;
    let proposals = (8 * budget + 8).min(10_000);

    let mut accepted: Vec<Attack> = Vec::new();
    for _ in 0..proposals {
        let start = rng.random_range(0..=slots) as f64 * period;
        let duration = if rng.random_bool(0.2) {
            0.0
        } else {
            rng.random_range(0..=max_len_slots) as f64 * period
        };
        let mut trial = accepted.clone();
        let at = trial.partition_point(|a| a.start <= start);
        trial.insert(at, Attack { start, duration });
        let sched = DoSSchedule { attacks: trial };
        if verify_constraints(&sched, p, horizon).passed() {
            accepted = sched.attacks;
        }
    }
    accepted
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, prop_oneof, proptest, Just};
    use proptest::strategy::Strategy as _;

    fn sched(pairs: &[(f64, f64)]) -> DoSSchedule {
        DoSSchedule::from_unsorted(
            pairs
                .iter()
                .map(|&(start, duration)| Attack { start, duration })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn activity_on_closed_intervals() {
        assert!(!DoSSchedule::empty().is_active(3.0));
        let s = sched(&[(1.0, 0.5)]);
        assert!(s.is_active(1.5) && s.is_active(1.0));
        assert!(!s.is_active(1.5 + 1e-12) && !s.is_active(0.999));
        let imp = sched(&[(0.3, 0.0)]);
        assert!(imp.is_active(0.3));
        assert!(!imp.is_active(0.3 + 1e-9) && !imp.is_active(0.3 - 1e-9));
    }

    #[test]
    fn attack_counts() {
        assert_eq!(DoSSchedule::empty().count_attacks(10.0), 0);
        assert_eq!(sched(&[(0.5, 0.1), (1.5, 0.1), (2.5, 0.1)]).count_attacks(2.0), 2);
        assert_eq!(sched(&[(1.0, 0.1), (1.0, 0.3)]).count_attacks(1.0), 2);
    }

    #[test]
    fn attacked_measure() {
        assert_eq!(sched(&[(1.0, 0.5)]).duration(2.0), 0.5);
        assert_eq!(sched(&[(0.0, 1.0), (0.5, 1.0)]).duration(2.0), 1.5);
        assert_eq!(sched(&[(0.0, 2.0), (0.5, 1.0)]).duration(2.0), 2.0);
        assert_eq!(sched(&[(0.2, 0.0), (0.7, 0.0)]).duration(1.0), 0.0);
        assert!((sched(&[(1.0, 0.5)]).duration(1.2) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn invalid_schedules_are_rejected() {
        assert!(DoSSchedule::new(vec![
            Attack {
                start: 1.0,
                duration: 0.1
            },
            Attack {
                start: 0.5,
                duration: 0.1
            }
        ])
        .is_err());
        assert!(DoSSchedule::new(vec![Attack {
            start: -1.0,
            duration: 0.1
        }])
        .is_err());
        assert!(DoSSchedule::new(vec![Attack {
            start: 0.0,
            duration: f64::NAN
        }])
        .is_err());
        assert!(DoSParams::new(0.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn verify_examples() {
        let any = DoSParams::new(0.0, 0.0, 0.0, 0.0).unwrap();
        assert!(verify_constraints(&DoSSchedule::empty(), &any, 100.0).passed());

        let p = DoSParams::new(5.0, 0.0, 0.0, 0.5).unwrap();
        match verify_constraints(&sched(&[(0.0, 1.0)]), &p, 10.0) {
            Verdict::Violation {
                assumption: Assumption::Duration,
                time,
                ..
            } => assert!(time <= 1.0),
            other => panic!("{other:?}"),
        }

        // An impulsive attack at every sampling instant.
        let period = 0.1;
        let every: Vec<(f64, f64)> = (0..100).map(|k| (k as f64 * period, 0.0)).collect();
        let p = DoSParams::new(1.0, 1.0 / period, 0.0, 0.0).unwrap();
        assert!(verify_constraints(&sched(&every), &p, 10.0).passed());
        let tight = DoSParams::new(0.5, 1.0 / period, 0.0, 0.0).unwrap();
        match verify_constraints(&sched(&every), &tight, 10.0) {
            Verdict::Violation {
                assumption: Assumption::Frequency,
                time,
                ..
            } => assert_eq!(time, 0.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn verify_reports_the_earliest_violation() {
        // Frequency fails at t = 2 (three starts), duration only later.
        let s = sched(&[(0.0, 0.1), (1.0, 0.1), (2.0, 0.1), (3.0, 3.0)]);
        let p = DoSParams::new(1.5, 0.5, 0.5, 0.2).unwrap();
        match verify_constraints(&s, &p, 10.0) {
            Verdict::Violation {
                assumption: Assumption::Frequency,
                time,
                ..
            } => assert_eq!(time, 2.0),
            other => panic!("{other:?}"),
        }
        // Outside the horizon nothing is checked.
        assert!(verify_constraints(&s, &p, 1.5).passed());
    }

    #[test]
    fn zero_budget_generates_nothing() {
        let p = DoSParams::none();
        for strategy in [Strategy::Periodic, Strategy::FrontLoaded, Strategy::Random] {
            assert!(generate_constrained(&p, 0.1, 30.0, strategy, 1).unwrap().is_empty());
        }
    }

    #[test]
    fn periodic_construction() {
        let p = DoSParams::new(1.0, 0.5, 0.5, 0.25).unwrap();
        let s = generate_constrained(&p, 0.1, 10.0, Strategy::Periodic, 0).unwrap();
        let starts: Vec<f64> = s.attacks().iter().map(|a| a.start).collect();
        assert_eq!(starts, vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        assert!(s.attacks().iter().all(|a| a.duration == 0.5));
        assert!(verify_constraints(&s, &p, 10.0).passed());
    }

    #[test]
    fn periodic_without_rate_is_infeasible() {
        let p = DoSParams::new(2.0, 0.0, 1.0, 0.0).unwrap();
        assert!(matches!(
            generate_constrained(&p, 0.1, 10.0, Strategy::Periodic, 0),
            Err(DosError::Infeasible { .. })
        ));
    }

    #[test]
    fn front_loaded_spends_the_initial_budget() {
        let p = DoSParams::new(1.0, 0.2, 1.9, 0.05).unwrap();
        let s = generate_constrained(&p, 0.1, 30.0, Strategy::FrontLoaded, 0).unwrap();
        let first = s.attacks()[0];
        assert_eq!(first.start, 0.0);
        assert!((first.duration - 1.9 / 0.95).abs() < 1e-12);
        assert!(s.len() > 1);
    }

    #[test]
    fn random_is_reproducible() {
        let p = DoSParams::new(2.0, 0.3, 0.5, 0.2).unwrap();
        let a = generate_constrained(&p, 0.1, 30.0, Strategy::Random, 42).unwrap();
        let b = generate_constrained(&p, 0.1, 30.0, Strategy::Random, 42).unwrap();
        assert_eq!(a, b);
        assert!(!a.is_empty());
    }

    #[test]
    fn csv_round_trip() {
        let s = sched(&[(0.1, 0.0), (1.0 / 3.0, 0.25), (2.0, 1e-17)]);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("start,duration\n"));
        assert_eq!(DoSSchedule::read_csv(buf.as_slice()).unwrap(), s);
        assert!(DoSSchedule::read_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    fn params() -> impl proptest::strategy::Strategy<Value = DoSParams> {
        (0.0f64..3.0, 0.0f64..2.0, 0.0f64..2.0, 0.0f64..0.9).prop_map(|(kf, rf, kd, rd)| DoSParams {
            kappa_f: kf,
            rho_f: rf,
            kappa_d: kd,
            rho_d: rd,
        })
    }

    fn strategy() -> impl proptest::strategy::Strategy<Value = super::Strategy> {
        prop_oneof![
            Just(super::Strategy::Periodic),
            Just(super::Strategy::FrontLoaded),
            Just(super::Strategy::Random)
        ]
    }

    proptest! {
        #[test]
        fn generated_schedules_verify(p in params(), strat in strategy(), seed in any::<u64>()) {
            match generate_constrained(&p, 0.1, 20.0, strat, seed) {
                Ok(s) => prop_assert!(verify_constraints(&s, &p, 20.0).passed()),
                Err(DosError::Infeasible { .. }) => prop_assert!(p.rho_f == 0.0),
                Err(e) => prop_assert!(false, "{e}"),
            }
        }

        #[test]
        fn counts_and_measure_are_monotone(p in params(), seed in any::<u64>(), t1 in 0.0f64..20.0, dt in 0.0f64..5.0) {
            let s = generate_constrained(&p, 0.1, 25.0, super::Strategy::Random, seed).unwrap();
            let t2 = t1 + dt;
            prop_assert!(s.count_attacks(t1) <= s.count_attacks(t2));
            prop_assert!(s.duration(t1) <= s.duration(t2) + 1e-12);
            prop_assert!(s.duration(t2) <= t2 + 1e-12);
        }

        #[test]
        fn lost_samples_respect_the_loss_bound(p in params(), strat in strategy(), seed in any::<u64>()) {
            let period = 0.1;
            if let Ok(s) = generate_constrained(&p, period, 20.0, strat, seed) {
                let mut lost = 0usize;
                for k in 0..=200 {
                    let t = k as f64 * period;
                    lost += s.is_active(t) as usize;
                    prop_assert!(lost as f64 <= p.loss_bound(period, t) + 1e-9, "k = {k}: {lost} losses");
                }
            }
        }
    }
}
