//! Sparsity schedules and convergence-bound evaluators.
//!
//! A run of `T` rounds with average sparsity `k` has a per-round coefficient
//!
//! ```text
//! coefficient(t) = (alpha/t + beta) * B^(T-1-t)
//! ```
//!
//! weighting how much the gradient kept (or dropped) at round `t` affects the
//! final optimality gap. `alpha/t + beta` is the envelope on the expected
//! squared gradient norm and `B = 1 - eta*mu*k/d` is the per-round
//! contraction of the gap. The coefficient is unimodal: it falls until the
//! transition point `t_hat` and rises afterwards, so the budget-preserving
//! schedule spends `k + m` coordinates on a prefix and a suffix and `k - m`
//! on the middle block around `t_hat`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),
}

/// Constants feeding every bound evaluator.
///
/// `l` and `mu` are the smoothness and gradient-dominance constants of the
/// loss, `sigma_sq` bounds the stochastic-gradient noise variance, `k` is the
/// average per-round sparsity `K/T`, and `f0`/`f_star` are the initial and
/// optimal loss values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub l: f64,
    pub mu: f64,
    pub sigma_sq: f64,
    pub eta: f64,
    pub d: usize,
    pub k: usize,
    pub rounds: usize,
    pub f0: f64,
    pub f_star: f64,
}

impl BoundParams {
    /// Checks every invariant the bound formulas rely on, including the
    /// stepsize precondition `eta <= 1/L` and `0 < B < 1`.
    pub fn validate(&self) -> Result<(), ScheduleError> {
        let fail = |msg: String| Err(ScheduleError::InvalidConfiguration(msg));
        if !(self.l > 0.0) || !self.l.is_finite() {
            return fail(format!("L must be positive and finite, got {}", self.l));
        }
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return fail(format!("mu must be positive and finite, got {}", self.mu));
        }
        if !(self.sigma_sq >= 0.0) || !self.sigma_sq.is_finite() {
            return fail(format!("sigma^2 must be >= 0, got {}", self.sigma_sq));
        }
        if self.d == 0 {
            return fail("dimension d must be >= 1".into());
        }
        if self.k == 0 || self.k > self.d {
            return fail(format!("k = {} must lie in [1, d = {}]", self.k, self.d));
        }
        if self.rounds == 0 {
            return fail("round count T must be >= 1".into());
        }
        if !(self.eta > 0.0) || self.eta > 1.0 / self.l {
            return fail(format!(
                "stepsize eta = {} must lie in (0, 1/L = {}]",
                self.eta,
                1.0 / self.l
            ));
        }
        if !self.f0.is_finite() || !self.f_star.is_finite() || self.f0 < self.f_star {
            return fail(format!(
                "initial loss {} must be finite and >= optimal loss {}",
                self.f0, self.f_star
            ));
        }
        let shrink = self.eta * self.mu * self.k as f64 / self.d as f64;
        if !(shrink > 0.0 && shrink < 1.0) {
            return fail(format!(
                "eta*mu*k/d = {shrink} must lie strictly inside (0, 1)"
            ));
        }
        Ok(())
    }
}

/// Envelope coefficients: `alpha = 2*d*F(w0)/(k*eta)` and
/// `beta = (d*sigma^2/k)*(eta*L + 1)`.
pub fn alpha_beta(p: &BoundParams) -> (f64, f64) {
    let d = p.d as f64;
    let k = p.k as f64;
    let alpha = 2.0 * d * p.f0 / (k * p.eta);
    let beta = (d * p.sigma_sq / k) * (p.eta * p.l + 1.0);
    (alpha, beta)
}

/// Per-round contraction factor `B = 1 - eta*mu*k/d`, strictly inside (0, 1).
pub fn contraction(p: &BoundParams) -> Result<f64, ScheduleError> {
    let shrink = p.eta * p.mu * p.k as f64 / p.d as f64;
    if !(shrink > 0.0 && shrink < 1.0) {
        return Err(ScheduleError::InvalidConfiguration(format!(
            "eta*mu*k/d = {shrink} leaves no contraction factor in (0, 1)"
        )));
    }
    Ok(1.0 - shrink)
}

/// The round weight `(alpha/t + beta) * B^(T-1-t)` for `1 <= t <= T-1`.
pub fn coefficient(
    t: usize,
    alpha: f64,
    beta: f64,
    b: f64,
    rounds: usize,
) -> Result<f64, ScheduleError> {
    if t == 0 || t >= rounds {
        return Err(ScheduleError::InvalidArgument(format!(
            "round index t = {t} must lie in [1, T-1 = {}]",
            rounds.saturating_sub(1)
        )));
    }
    Ok((alpha / t as f64 + beta) * b.powi((rounds - 1 - t) as i32))
}

/// Envelope on the expected squared gradient norm at round `t >= 1`.
pub fn lemma2_envelope(t: usize, alpha: f64, beta: f64) -> Result<f64, ScheduleError> {
    if t == 0 {
        return Err(ScheduleError::InvalidArgument(
            "envelope is undefined at t = 0".into(),
        ));
    }
    Ok(alpha / t as f64 + beta)
}

/// Where the coefficient stops falling and starts rising.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionPoint {
    /// Interior minimum at this round.
    At(usize),
    /// `beta = 0`: the coefficient decreases over the whole horizon.
    Monotone,
}

/// Closed-form minimizer of the coefficient:
/// `t_hat = floor((-alpha + sqrt(Delta)) / (2*beta))` with
/// `Delta = alpha^2 - 4*alpha*beta/ln(B)`. Since `ln(B) < 0`, the
/// discriminant exceeds `alpha^2` and the root is positive.
pub fn transition_point(alpha: f64, beta: f64, b: f64) -> Result<TransitionPoint, ScheduleError> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(ScheduleError::InvalidArgument(format!(
            "alpha = {alpha} must be positive and finite"
        )));
    }
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(ScheduleError::InvalidArgument(format!(
            "beta = {beta} must be >= 0 and finite"
        )));
    }
    if !(b > 0.0 && b < 1.0) {
        return Err(ScheduleError::InvalidArgument(format!(
            "contraction B = {b} must lie strictly inside (0, 1)"
        )));
    }
    if beta == 0.0 {
        return Ok(TransitionPoint::Monotone);
    }
    let delta = alpha * alpha - 4.0 * alpha * beta / b.ln();
    let root = (-alpha + delta.sqrt()) / (2.0 * beta);
    Ok(TransitionPoint::At(root.floor() as usize))
}

/// A two-level per-round sparsity plan: `k + m` on `[0, low_start)` and
/// `[low_end, T)`, `k - m` on the middle block `[low_start, low_end)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsitySchedule {
    pub per_round_k: Vec<usize>,
    /// Total coordinate budget `T * k`; the plan never exceeds it.
    pub budget: usize,
    pub gamma: f64,
    /// Transition point the blocks were derived from (clamped to `T - 1`).
    pub t_hat: usize,
    /// Adjustment magnitude `m = floor(gamma * k)`.
    pub adjustment: usize,
    pub low_start: usize,
    pub low_end: usize,
}

impl SparsitySchedule {
    /// Flat schedule: every round sends exactly `k` coordinates.
    pub fn constant(rounds: usize, k: usize) -> Self {
        Self {
            per_round_k: vec![k; rounds],
            budget: rounds * k,
            gamma: 0.0,
            t_hat: 0,
            adjustment: 0,
            low_start: 0,
            low_end: 0,
        }
    }

    pub fn rounds(&self) -> usize {
        self.per_round_k.len()
    }

    /// Average sparsity level `K/T` the budget was set from.
    pub fn average_k(&self) -> usize {
        if self.per_round_k.is_empty() {
            0
        } else {
            self.budget / self.per_round_k.len()
        }
    }

    pub fn total(&self) -> usize {
        self.per_round_k.iter().sum()
    }

    /// Signed deviation `n_t = k_t - k` at round `t`.
    pub fn deviation(&self, t: usize) -> i64 {
        self.per_round_k[t] as i64 - self.average_k() as i64
    }
}

/// Builds the two-level schedule around `t_hat`.
///
/// The high-k prefix ends at `floor(t_hat/2)` and the high-k suffix starts at
/// `floor((t_hat + T)/2)`. When the integer boundaries leave more high
/// rounds than low rounds, the low block is extended (first into the prefix,
/// then into the suffix) until the budget `sum k_t <= T*k` holds exactly.
pub fn build_schedule(
    rounds: usize,
    k: usize,
    gamma: f64,
    t_hat: usize,
    d: usize,
) -> Result<SparsitySchedule, ScheduleError> {
    if rounds == 0 {
        return Err(ScheduleError::InvalidArgument(
            "round count T must be >= 1".into(),
        ));
    }
    if k == 0 || k > d {
        return Err(ScheduleError::InvalidArgument(format!(
            "k = {k} must lie in [1, d = {d}]"
        )));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(ScheduleError::InvalidArgument(format!(
            "gamma = {gamma} must lie in [0, 1)"
        )));
    }
    let m = (gamma * k as f64).floor() as usize;
    if k + m > d {
        return Err(ScheduleError::InvalidConfiguration(format!(
            "high level k + m = {} exceeds dimension {d}",
            k + m
        )));
    }
    // An interior minimum at or beyond T-1 degenerates to "decreasing over
    // the whole run"; clamp so the blocks stay meaningful.
    let t_hat = t_hat.min(rounds - 1);
    let mut low_start = (t_hat / 2).min(rounds);
    let mut low_end = ((t_hat + rounds) / 2).clamp(low_start, rounds);
    loop {
        let low = low_end - low_start;
        let high = rounds - low;
        if high <= low {
            break;
        }
        if low_start > 0 {
            low_start -= 1;
        } else if low_end < rounds {
            low_end += 1;
        } else {
            break;
        }
    }
    let per_round_k: Vec<usize> = (0..rounds)
        .map(|t| {
            if t >= low_start && t < low_end {
                k - m
            } else {
                k + m
            }
        })
        .collect();
    Ok(SparsitySchedule {
        per_round_k,
        budget: rounds * k,
        gamma,
        t_hat,
        adjustment: m,
        low_start,
        low_end,
    })
}

fn vanilla_terms(p: &BoundParams, b: f64) -> (f64, f64) {
    let bt = b.powi(p.rounds as i32);
    let m_term = bt * (p.f0 - p.f_star);
    let d = p.d as f64;
    let k = p.k as f64;
    let n_term = (d * p.sigma_sq / (2.0 * k * p.mu)) * (1.0 - k / d + p.eta * p.l) * (1.0 - bt);
    (m_term, n_term)
}

/// Optimality-gap bound for the flat schedule: `M(k) + N(k)` with
/// `M(k) = B^T (F(w0) - F*)` and
/// `N(k) = (d*sigma^2 / (2*k*mu)) * (1 - k/d + eta*L) * (1 - B^T)`.
pub fn vanilla_bound(p: &BoundParams) -> Result<f64, ScheduleError> {
    p.validate()?;
    let b = contraction(p)?;
    let (m_term, n_term) = vanilla_terms(p, b);
    Ok(m_term + n_term)
}

/// The schedule-dependent correction to the flat-schedule bound, with the
/// gradient norms replaced by their envelope `alpha/t + beta`:
///
/// ```text
/// (eta*m / (2d)) * (sum_low coef(t) - sum_prefix coef(t) - sum_suffix coef(t))
/// ```
///
/// The `t = 0` term is excluded from every sum (the envelope diverges
/// there; round 0 always belongs to the high-k phase). Negative values mean
/// the two-level schedule improves on the flat one.
pub fn adaptive_gap_term(
    sched: &SparsitySchedule,
    alpha: f64,
    beta: f64,
    b: f64,
    eta: f64,
    d: usize,
) -> f64 {
    if sched.adjustment == 0 {
        return 0.0;
    }
    let rounds = sched.rounds();
    let mut low_sum = 0.0;
    let mut high_sum = 0.0;
    for t in 1..rounds {
        let coef = (alpha / t as f64 + beta) * b.powi((rounds - 1 - t) as i32);
        if t >= sched.low_start && t < sched.low_end {
            low_sum += coef;
        } else {
            high_sum += coef;
        }
    }
    (eta * sched.adjustment as f64 / (2.0 * d as f64)) * (low_sum - high_sum)
}

/// Full optimality-gap bound for a run: `M(k) + N(k)` minus the weighted sum
/// of observed squared gradient norms over the schedule's deviations `n_t`.
pub fn theorem1_bound(
    p: &BoundParams,
    sched: &SparsitySchedule,
    grad_norms_sq: &[f64],
) -> Result<f64, ScheduleError> {
    p.validate()?;
    if grad_norms_sq.len() != p.rounds || sched.rounds() != p.rounds {
        return Err(ScheduleError::InvalidArgument(format!(
            "expected {} per-round gradient norms and schedule entries, got {} and {}",
            p.rounds,
            grad_norms_sq.len(),
            sched.rounds()
        )));
    }
    let b = contraction(p)?;
    let (m_term, n_term) = vanilla_terms(p, b);
    let d = p.d as f64;
    let mut correction = 0.0;
    for t in 0..p.rounds {
        let n_t = sched.per_round_k[t] as f64 - p.k as f64;
        correction +=
            (p.eta * n_t / (2.0 * d)) * grad_norms_sq[t] * b.powi((p.rounds - 1 - t) as i32);
    }
    Ok(m_term + n_term - correction)
}
