//! Round-based distributed-SGD simulation.
//!
//! Each round: every worker draws a minibatch from its shard, computes a
//! stochastic gradient, (optionally) adds its error-compensation residual,
//! compresses to the round's sparsity level, and the server aggregates the
//! sparse gradients in worker order and applies
//! `w <- w - (eta/M) * sum_i C[g_i]`.
//!
//! Workers may run on a thread pool; every floating-point reduction happens
//! in a fixed order, so results are bit-identical regardless of thread count.

use std::time::Instant;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problems::{Problem, ProblemError};
use crate::schedule::{
    self, BoundParams, ScheduleError, SparsitySchedule, TransitionPoint,
};
use crate::sparsify::{ec_compress, top_k, ErrorMemory, SparseGradient, SparsifyError};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("problem provides {shards} shards but config requests {workers} workers")]
    WorkerShardMismatch { shards: usize, workers: usize },
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Sparsify(#[from] SparsifyError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("constant estimation failed: {0}")]
    Estimation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Compressor {
    /// Dense updates; every coordinate is sent each round.
    None,
    /// Top-K at the constant average level k every round.
    TopkFixed,
    /// Top-K at the two-level schedule derived from the coefficient minimum.
    Adaptopk,
}

impl std::fmt::Display for Compressor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Compressor::None => write!(f, "none"),
            Compressor::TopkFixed => write!(f, "topk_fixed"),
            Compressor::Adaptopk => write!(f, "adaptopk"),
        }
    }
}

impl std::str::FromStr for Compressor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Compressor::None),
            "topk_fixed" => Ok(Compressor::TopkFixed),
            "adaptopk" => Ok(Compressor::Adaptopk),
            other => Err(format!(
                "unknown compressor '{other}' (expected none | topk_fixed | adaptopk)"
            )),
        }
    }
}

fn default_rounds() -> usize {
    3000
}
fn default_workers() -> usize {
    8
}
fn default_eta() -> f64 {
    0.1
}
fn default_batch() -> usize {
    32
}
fn default_gamma() -> f64 {
    0.5
}
fn default_ratio() -> f64 {
    128.0
}
fn default_seed() -> u64 {
    1
}
fn default_eval_every() -> usize {
    100
}
fn default_warmup() -> usize {
    20
}
fn default_kappa() -> f64 {
    100.0
}
fn default_probe() -> usize {
    2048
}

/// One training run's knobs. Defaults follow the reference experimental
/// setting (eta 0.1, batch 32, 8 workers, gamma 0.5, ratio 128).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_compressor")]
    pub compressor: Compressor,
    #[serde(default)]
    pub error_compensation: bool,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Compression ratio d/k; the per-round average k is derived from it.
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Rounds between test-accuracy evaluations; 0 evaluates only at the end.
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    /// Uncompressed rounds used to estimate constants when the problem does
    /// not know them.
    #[serde(default = "default_warmup")]
    pub warmup_rounds: usize,
    /// Gradient-dominance constant override; defaults to L_hat / kappa.
    #[serde(default)]
    pub mu_override: Option<f64>,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    /// Total examples used by the smoothness probe during estimation.
    #[serde(default = "default_probe")]
    pub probe_examples: usize,
}

fn default_compressor() -> Compressor {
    Compressor::Adaptopk
}

impl Default for TrainConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults are total")
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let fail = |msg: String| Err(EngineError::InvalidConfig(msg));
        if self.rounds == 0 {
            return fail("rounds must be >= 1".into());
        }
        if self.workers == 0 {
            return fail("workers must be >= 1".into());
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return fail(format!("eta = {} must be positive", self.eta));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1".into());
        }
        if !(self.ratio >= 1.0) || !self.ratio.is_finite() {
            return fail(format!("ratio = {} must be >= 1", self.ratio));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return fail(format!("gamma = {} must lie in [0, 1)", self.gamma));
        }
        if self.warmup_rounds < 2 {
            return fail("warmup_rounds must be >= 2".into());
        }
        if !(self.kappa > 0.0) {
            return fail(format!("kappa = {} must be positive", self.kappa));
        }
        Ok(())
    }

    /// Per-round average sparsity `k = max(1, round(d / ratio))`, capped at d.
    pub fn sparsity_k(&self, d: usize) -> usize {
        (((d as f64 / self.ratio).round() as usize).max(1)).min(d)
    }
}

/// Simulation state carried between rounds.
pub struct TrainState {
    pub params: Vec<f64>,
    pub round: usize,
    workers: Vec<WorkerCtx>,
}

struct WorkerCtx {
    rng: ChaCha8Rng,
    memory: Option<ErrorMemory>,
}

const SALT_INIT: u64 = 0x01;
const SALT_WORKER: u64 = 0x1000;
const SALT_ESTIMATE: u64 = 0x2000;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn derive_rng(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(salt)))
}

impl TrainState {
    /// Fresh state at round 0: seeded initial parameters, one RNG stream per
    /// worker, and zeroed error memories when compensation is on.
    pub fn new(cfg: &TrainConfig, problem: &dyn Problem) -> Self {
        let mut init_rng = derive_rng(cfg.seed, SALT_INIT);
        let params = problem.initial_params(&mut init_rng);
        let d = params.len();
        let workers = (0..cfg.workers)
            .map(|i| WorkerCtx {
                rng: derive_rng(cfg.seed, SALT_WORKER + i as u64),
                memory: cfg.error_compensation.then(|| ErrorMemory::zeros(d)),
            })
            .collect();
        Self {
            params,
            round: 0,
            workers,
        }
    }
}

/// Coordinate-wise sum of sparse gradients, accumulated in worker order.
pub fn aggregate(sparse_grads: &[SparseGradient]) -> Result<Vec<f64>, EngineError> {
    let first = sparse_grads
        .first()
        .ok_or_else(|| EngineError::InvalidConfig("no gradients to aggregate".into()))?;
    let d = first.dim();
    let mut out = vec![0.0; d];
    for s in sparse_grads {
        if s.dim() != d {
            return Err(EngineError::Sparsify(SparsifyError::DimMismatch {
                expected: d,
                got: s.dim(),
            }));
        }
        for &(idx, value) in s.entries() {
            out[idx] += value;
        }
    }
    Ok(out)
}

/// One per-round record; `test_acc` only on evaluation rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub t: usize,
    pub k_t: usize,
    /// Mean worker minibatch loss at the round's starting parameters.
    pub loss: f64,
    /// Squared norm of the aggregated pre-compression gradient.
    pub grad_norm_sq: f64,
    pub coords_sent: u64,
    pub bits_sent: u64,
    pub test_acc: Option<f64>,
    /// Across-worker empirical gradient variance (diagnostic, not persisted).
    pub worker_grad_var: f64,
}

/// Everything a finished run reports.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub records: Vec<RoundRecord>,
    pub schedule: SparsitySchedule,
    /// Bound constants the schedule was derived from, when available.
    pub bound_params: Option<BoundParams>,
    /// Full training loss at the final parameters.
    pub final_loss: f64,
    pub final_accuracy: Option<f64>,
    pub total_coords: u64,
    pub total_bits: u64,
    pub wall_secs: f64,
}

fn ceil_log2(d: usize) -> u32 {
    if d <= 1 {
        0
    } else {
        usize::BITS - (d - 1).leading_zeros()
    }
}

fn bits_per_coordinate(d: usize) -> u64 {
    32 + ceil_log2(d) as u64
}

/// Advances the simulation by one round and returns its record.
pub fn run_round(
    state: &mut TrainState,
    cfg: &TrainConfig,
    sched: &SparsitySchedule,
    problem: &dyn Problem,
) -> Result<RoundRecord, EngineError> {
    let t = state.round;
    let rounds = sched.rounds();
    if t >= rounds {
        return Err(EngineError::InvalidConfig(format!(
            "round {t} past the {rounds}-round schedule"
        )));
    }
    let k_t = sched.per_round_k[t];
    let d = problem.dim();
    let params = &state.params;
    let batch = cfg.batch_size;
    let outputs: Vec<Result<(f64, Vec<f64>, SparseGradient), EngineError>> = state
        .workers
        .par_iter_mut()
        .enumerate()
        .map(|(i, ctx)| {
            let (loss, grad) = problem.stochastic_loss_gradient(params, i, batch, &mut ctx.rng)?;
            let sparse = match ctx.memory.as_mut() {
                Some(mem) => {
                    let (out, next) = ec_compress(&grad, mem, k_t)?;
                    *mem = next;
                    out
                }
                None => top_k(&grad, k_t)?,
            };
            Ok((loss, grad, sparse))
        })
        .collect();

    let m = cfg.workers as f64;
    let mut mean_loss = 0.0;
    let mut mean_grad = vec![0.0; d];
    let mut grads = Vec::with_capacity(cfg.workers);
    let mut sparse_grads = Vec::with_capacity(cfg.workers);
    for out in outputs {
        let (loss, grad, sparse) = out?;
        mean_loss += loss / m;
        for (acc, g) in mean_grad.iter_mut().zip(&grad) {
            *acc += g / m;
        }
        grads.push(grad);
        sparse_grads.push(sparse);
    }
    let grad_norm_sq: f64 = mean_grad.iter().map(|x| x * x).sum();
    let worker_grad_var = grads
        .iter()
        .map(|g| {
            g.iter()
                .zip(&mean_grad)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum::<f64>()
        / m;

    let agg = aggregate(&sparse_grads)?;
    let step = cfg.eta / m;
    for (w, g) in state.params.iter_mut().zip(&agg) {
        *w -= step * g;
    }
    state.round += 1;

    let is_last = state.round == rounds;
    let eval_due = cfg.eval_every > 0 && state.round % cfg.eval_every == 0;
    let test_acc = if eval_due || is_last {
        problem.test_accuracy(&state.params)
    } else {
        None
    };

    let coords_sent = (cfg.workers * k_t) as u64;
    Ok(RoundRecord {
        t,
        k_t,
        loss: mean_loss,
        grad_norm_sq,
        coords_sent,
        bits_sent: coords_sent * bits_per_coordinate(d),
        test_acc,
        worker_grad_var,
    })
}

/// Constants recovered from a short uncompressed warmup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatedConstants {
    pub l: f64,
    pub mu: f64,
    pub sigma_sq: f64,
    pub f0: f64,
}

/// Runs `warmup_rounds` uncompressed rounds on a scratch copy of the state
/// and extracts:
///
/// - `f0`: full training loss at the initial parameters,
/// - `sigma_sq`: mean across-worker empirical gradient variance,
/// - `l`: largest secant ratio of probe-gradient change to parameter change,
/// - `mu`: the configured override, else `l / kappa`.
pub fn estimate_constants(
    problem: &dyn Problem,
    cfg: &TrainConfig,
    warmup_rounds: usize,
) -> Result<EstimatedConstants, EngineError> {
    if warmup_rounds < 2 {
        return Err(EngineError::InvalidConfig(
            "warmup_rounds must be >= 2".into(),
        ));
    }
    let mut init_rng = derive_rng(cfg.seed, SALT_INIT);
    let w0 = problem.initial_params(&mut init_rng);
    let d = w0.len();
    let f0 = problem.full_loss(&w0);
    let per_shard_cap = cfg.probe_examples.div_ceil(cfg.workers).max(1);

    let mut rngs: Vec<ChaCha8Rng> = (0..cfg.workers)
        .map(|i| derive_rng(cfg.seed, SALT_ESTIMATE + i as u64))
        .collect();
    let mut w = w0;
    let mut prev_probe = problem.probe_gradient(&w, per_shard_cap);
    let m = cfg.workers as f64;
    let mut var_sum = 0.0;
    let mut l_max: Option<f64> = None;
    for _ in 0..warmup_rounds {
        let grads: Vec<Result<Vec<f64>, EngineError>> = rngs
            .par_iter_mut()
            .enumerate()
            .map(|(i, rng)| {
                let (_, g) = problem.stochastic_loss_gradient(&w, i, cfg.batch_size, rng)?;
                Ok(g)
            })
            .collect();
        let mut mean_grad = vec![0.0; d];
        let mut collected = Vec::with_capacity(cfg.workers);
        for g in grads {
            let g = g?;
            for (acc, gi) in mean_grad.iter_mut().zip(&g) {
                *acc += gi / m;
            }
            collected.push(g);
        }
        var_sum += collected
            .iter()
            .map(|g| {
                g.iter()
                    .zip(&mean_grad)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            })
            .sum::<f64>()
            / m;

        let w_next: Vec<f64> = w
            .iter()
            .zip(&mean_grad)
            .map(|(wi, gi)| wi - cfg.eta * gi)
            .collect();
        let probe = problem.probe_gradient(&w_next, per_shard_cap);
        let move_norm: f64 = w_next
            .iter()
            .zip(&w)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if move_norm > 0.0 {
            let grad_change: f64 = probe
                .iter()
                .zip(&prev_probe)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let ratio = grad_change / move_norm;
            if ratio.is_finite() {
                l_max = Some(l_max.map_or(ratio, |cur| cur.max(ratio)));
            }
        }
        w = w_next;
        prev_probe = probe;
    }
    let l = l_max.ok_or_else(|| {
        EngineError::Estimation("no parameter movement during warmup".into())
    })?;
    let sigma_sq = var_sum / warmup_rounds as f64;
    let mu = cfg.mu_override.unwrap_or(l / cfg.kappa);
    Ok(EstimatedConstants {
        l,
        mu,
        sigma_sq,
        f0,
    })
}

/// Resolves the constants feeding the adaptive schedule: known by
/// construction when the problem has them, otherwise estimated from warmup.
fn resolve_bound_params(
    cfg: &TrainConfig,
    problem: &dyn Problem,
    w0: &[f64],
    k: usize,
) -> Result<BoundParams, EngineError> {
    let d = problem.dim();
    let (l, mu, sigma_sq, f_star, f0) = match problem.known_constants() {
        Some(c) => (c.l, c.mu, c.sigma_sq, c.f_star, problem.full_loss(w0)),
        None => {
            let est = estimate_constants(problem, cfg, cfg.warmup_rounds)?;
            // Optimal loss unknown on learning problems: default to 0.
            (est.l, est.mu, est.sigma_sq, 0.0, est.f0)
        }
    };
    Ok(BoundParams {
        l,
        mu,
        sigma_sq,
        eta: cfg.eta,
        d,
        k,
        rounds: cfg.rounds,
        f0,
        f_star,
    })
}

/// Builds the schedule an arm will train under, plus the constants used
/// (when any were needed or known).
pub fn plan_schedule(
    cfg: &TrainConfig,
    problem: &dyn Problem,
) -> Result<(SparsitySchedule, Option<BoundParams>), EngineError> {
    cfg.validate()?;
    let d = problem.dim();
    let k = cfg.sparsity_k(d);
    let mut init_rng = derive_rng(cfg.seed, SALT_INIT);
    let w0 = problem.initial_params(&mut init_rng);
    match cfg.compressor {
        Compressor::None => {
            let params = problem
                .known_constants()
                .map(|c| BoundParams {
                    l: c.l,
                    mu: c.mu,
                    sigma_sq: c.sigma_sq,
                    eta: cfg.eta,
                    d,
                    k: d,
                    rounds: cfg.rounds,
                    f0: problem.full_loss(&w0),
                    f_star: c.f_star,
                });
            Ok((SparsitySchedule::constant(cfg.rounds, d), params))
        }
        Compressor::TopkFixed => {
            let params = problem
                .known_constants()
                .map(|c| BoundParams {
                    l: c.l,
                    mu: c.mu,
                    sigma_sq: c.sigma_sq,
                    eta: cfg.eta,
                    d,
                    k,
                    rounds: cfg.rounds,
                    f0: problem.full_loss(&w0),
                    f_star: c.f_star,
                });
            Ok((SparsitySchedule::constant(cfg.rounds, k), params))
        }
        Compressor::Adaptopk => {
            let params = resolve_bound_params(cfg, problem, &w0, k)?;
            let (alpha, beta) = schedule::alpha_beta(&params);
            let b = schedule::contraction(&params)?;
            let t_hat = match schedule::transition_point(alpha, beta, b)? {
                TransitionPoint::At(t) => t,
                TransitionPoint::Monotone => cfg.rounds - 1,
            };
            let sched = schedule::build_schedule(cfg.rounds, k, cfg.gamma, t_hat, d)?;
            Ok((sched, Some(params)))
        }
    }
}

/// Runs the full simulation: schedule construction, `rounds` rounds, and
/// metric assembly. Deterministic for a fixed config and seed.
pub fn run_training(cfg: &TrainConfig, problem: &dyn Problem) -> Result<RunMetrics, EngineError> {
    let start = Instant::now();
    cfg.validate()?;
    if let Some(shards) = problem.shard_count() {
        if shards != cfg.workers {
            return Err(EngineError::WorkerShardMismatch {
                shards,
                workers: cfg.workers,
            });
        }
    }
    let (sched, bound_params) = plan_schedule(cfg, problem)?;
    let mut state = TrainState::new(cfg, problem);
    let mut records = Vec::with_capacity(cfg.rounds);
    for _ in 0..cfg.rounds {
        records.push(run_round(&mut state, cfg, &sched, problem)?);
    }
    let final_loss = problem.full_loss(&state.params);
    let final_accuracy = records.last().and_then(|r| r.test_acc);
    let total_coords = records.iter().map(|r| r.coords_sent).sum();
    let total_bits = records.iter().map(|r| r.bits_sent).sum();
    Ok(RunMetrics {
        records,
        schedule: sched,
        bound_params,
        final_loss,
        final_accuracy,
        total_coords,
        total_bits,
        wall_secs: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::QuadraticProblem;
    use approx::assert_relative_eq;

    fn quadratic_cfg() -> TrainConfig {
        TrainConfig {
            rounds: 50,
            workers: 1,
            eta: 0.5,
            batch_size: 1,
            compressor: Compressor::None,
            error_compensation: false,
            gamma: 0.0,
            ratio: 1.0,
            seed: 7,
            eval_every: 0,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn aggregate_examples() {
        let a = top_k(&[2.0, 0.0], 1).unwrap();
        let b = top_k(&[0.0, 4.0], 1).unwrap();
        assert_eq!(aggregate(&[a.clone(), b]).unwrap(), vec![2.0, 4.0]);
        // M identical gradients sum to M times one of them.
        assert_eq!(aggregate(&[a.clone(), a.clone(), a]).unwrap(), vec![6.0, 0.0]);
        // Overlapping indices cancel.
        let p = top_k(&[1.0, 0.0], 1).unwrap();
        let n = top_k(&[-1.0, 0.0], 1).unwrap();
        assert_eq!(aggregate(&[p, n]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn aggregate_rejects_dim_mismatch() {
        let a = top_k(&[1.0, 2.0], 1).unwrap();
        let b = top_k(&[1.0, 2.0, 3.0], 1).unwrap();
        assert!(aggregate(&[a, b]).is_err());
    }

    #[test]
    fn exact_gradient_step_on_quadratic() {
        // One worker, no noise, eta 0.5, lambda 1: w = [2, 0] -> [1, 0].
        let problem = QuadraticProblem::new(2, 1.0, 0.0, 0);
        let cfg = quadratic_cfg();
        let sched = SparsitySchedule::constant(1, 2);
        let mut state = TrainState::new(&cfg, &problem);
        state.params = vec![
            2.0 + problem.w_star()[0],
            problem.w_star()[1],
        ];
        let before = state.params.clone();
        run_round(&mut state, &cfg, &sched, &problem).unwrap();
        assert_relative_eq!(state.params[0], before[0] - 1.0, max_relative = 1e-14);
        assert_relative_eq!(state.params[1], before[1], max_relative = 1e-14);
    }

    #[test]
    fn gd_contracts_loss_geometrically() {
        let problem = QuadraticProblem::new(12, 1.0, 0.0, 3);
        let cfg = quadratic_cfg();
        let metrics = run_training(&cfg, &problem).unwrap();
        let f0 = problem.full_loss(&vec![0.0; 12]);
        let factor = (1.0 - cfg.eta).powi(2 * cfg.rounds as i32);
        assert_relative_eq!(metrics.final_loss, factor * f0, max_relative = 1e-9);
    }

    #[test]
    fn full_k_matches_dense_bitwise() {
        let problem = QuadraticProblem::new(16, 1.0, 0.25, 3);
        let dense = TrainConfig {
            workers: 3,
            rounds: 40,
            ..quadratic_cfg()
        };
        let topk_full = TrainConfig {
            compressor: Compressor::TopkFixed,
            ratio: 1.0,
            ..dense.clone()
        };
        let a = run_training(&dense, &problem).unwrap();
        let b = run_training(&topk_full, &problem).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.final_loss, b.final_loss);
    }

    #[test]
    fn two_equal_workers_match_single_worker_without_noise() {
        let problem = QuadraticProblem::new(10, 2.0, 0.0, 9);
        let single = TrainConfig {
            eta: 0.25,
            rounds: 25,
            ..quadratic_cfg()
        };
        let double = TrainConfig {
            workers: 2,
            ..single.clone()
        };
        let a = run_training(&single, &problem).unwrap();
        let b = run_training(&double, &problem).unwrap();
        assert_eq!(a.final_loss, b.final_loss);
    }

    #[test]
    fn gamma_zero_adaptive_equals_fixed() {
        let problem = QuadraticProblem::new(32, 1.0, 0.5, 2);
        let fixed = TrainConfig {
            compressor: Compressor::TopkFixed,
            workers: 2,
            rounds: 60,
            ratio: 8.0,
            gamma: 0.0,
            ..quadratic_cfg()
        };
        let adaptive = TrainConfig {
            compressor: Compressor::Adaptopk,
            ..fixed.clone()
        };
        let a = run_training(&fixed, &problem).unwrap();
        let b = run_training(&adaptive, &problem).unwrap();
        assert_eq!(a.records, b.records);
    }

    #[test]
    fn determinism_across_thread_counts() {
        let problem = QuadraticProblem::new(64, 1.0, 0.5, 11);
        let cfg = TrainConfig {
            compressor: Compressor::Adaptopk,
            workers: 4,
            rounds: 30,
            ratio: 8.0,
            gamma: 0.5,
            ..quadratic_cfg()
        };
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run_training(&cfg, &problem).unwrap());
        let multi = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| run_training(&cfg, &problem).unwrap());
        assert_eq!(single.records, multi.records);
        assert_eq!(single.final_loss, multi.final_loss);
    }

    #[test]
    fn estimate_constants_on_quadratic_is_exact() {
        let problem = QuadraticProblem::new(24, 3.0, 0.0, 5);
        let cfg = TrainConfig {
            eta: 0.1,
            workers: 2,
            ..quadratic_cfg()
        };
        let est = estimate_constants(&problem, &cfg, 5).unwrap();
        assert_relative_eq!(est.l, 3.0, max_relative = 1e-9);
        assert_eq!(est.sigma_sq, 0.0);
        assert_relative_eq!(
            est.f0,
            problem.full_loss(&vec![0.0; 24]),
            max_relative = 1e-12
        );
    }

    #[test]
    fn estimate_rejects_short_warmup() {
        let problem = QuadraticProblem::new(4, 1.0, 0.0, 5);
        let cfg = quadratic_cfg();
        assert!(estimate_constants(&problem, &cfg, 1).is_err());
    }

    #[test]
    fn communication_accounting_matches_schedule() {
        let problem = QuadraticProblem::new(64, 1.0, 0.5, 11);
        let cfg = TrainConfig {
            compressor: Compressor::Adaptopk,
            workers: 4,
            rounds: 31,
            ratio: 8.0,
            gamma: 0.5,
            ..quadratic_cfg()
        };
        let metrics = run_training(&cfg, &problem).unwrap();
        let from_records: usize = metrics.records.iter().map(|r| r.k_t).sum();
        assert_eq!(from_records, metrics.schedule.total());
        assert!(metrics.schedule.total() <= metrics.schedule.budget);
        let d = 64;
        let per_coord = 32 + 6; // ceil(log2 64) = 6
        assert_eq!(
            metrics.total_bits,
            metrics.total_coords * per_coord as u64
        );
        let _ = d;
    }

    #[test]
    fn shard_mismatch_is_rejected() {
        use crate::problems::{shard_dataset, Dataset, LogisticProblem};
        let ds = Dataset::new(vec![0.0, 1.0, 0.5, 0.25], 1, vec![0, 1, 0, 1]).unwrap();
        let problem =
            LogisticProblem::new(shard_dataset(&ds, 2, 0).unwrap(), 2, None).unwrap();
        let cfg = TrainConfig {
            workers: 3,
            ..quadratic_cfg()
        };
        assert!(matches!(
            run_training(&cfg, &problem),
            Err(EngineError::WorkerShardMismatch { .. })
        ));
    }
}
