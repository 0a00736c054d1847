//! Proximal gradient descent on `f(x) + λ‖x‖₁` with central-difference
//! gradients, plain gradient descent, and the two-phase PG → GD protocol.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Smooth part of the objective.
///
/// `value_and_gradient` defaults to [`fd_gradient`]; implementors may
/// override it with any evaluation that computes the same central
/// differences.
pub trait Objective: Sync {
    fn value(&self, x: &[f64]) -> Result<f64>;

    fn value_and_gradient(&self, x: &[f64], epsilon: f64) -> Result<(f64, Vec<f64>)> {
        let v = self.value(x)?;
        let g = fd_gradient(|y| self.value(y), x, epsilon)?;
        Ok((v, g))
    }
}

impl<F> Objective for F
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    fn value(&self, x: &[f64]) -> Result<f64> {
        self(x)
    }
}

pub(crate) fn check_finite_value(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::EvaluationFailed(format!("{what} is not finite ({v})")))
    }
}

/// Central difference `[f(x + εe_i) - f(x - εe_i)] / 2ε` for every `i`.
///
/// The `2·len(x)` evaluations run on the rayon pool; each component is
/// formed from its own pair, so the result does not depend on scheduling.
pub fn fd_gradient<F>(f: F, x: &[f64], epsilon: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidConfig(format!("epsilon must be positive, got {epsilon}")));
    }
    (0..x.len())
        .into_par_iter()
        .map(|i| {
            let mut y = x.to_vec();
            y[i] = x[i] + epsilon;
            let plus = check_finite_value(f(&y)?, "objective")?;
            y[i] = x[i] - epsilon;
            let minus = check_finite_value(f(&y)?, "objective")?;
            Ok((plus - minus) / (2.0 * epsilon))
        })
        .collect()
}

/// Proximal operator of `t·|·|`. The dead zone returns exactly `0.0`.
#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

pub fn gd_step(x: &[f64], gradient: &[f64], eta: f64) -> Vec<f64> {
    debug_assert_eq!(x.len(), gradient.len());
    x.iter().zip(gradient).map(|(xi, gi)| xi - eta * gi).collect()
}

pub fn pg_step(x: &[f64], gradient: &[f64], eta: f64, lambda: f64) -> Vec<f64> {
    let t = lambda * eta;
    gd_step(x, gradient, eta)
        .into_iter()
        .map(|z| soft_threshold(z, t))
        .collect()
}

pub fn l1_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

pub fn zero_count(x: &[f64]) -> usize {
    x.iter().filter(|&&v| v == 0.0).count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub eta: f64,
    pub epsilon: f64,
    pub lambda: f64,
    pub iterations: usize,
    /// `(PG iterations, plain GD iterations)` for [`run_hybrid`].
    pub hybrid_split: Option<(usize, usize)>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            eta: 0.008,
            epsilon: 1e-3,
            lambda: 0.0,
            iterations: 300,
            hybrid_split: None,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("lambda must be nonnegative, got {}", self.lambda));
        }
        if let Some((a, b)) = self.hybrid_split {
            if a + b != self.iterations {
                return bad(format!(
                    "hybrid split {a}+{b} does not sum to {} iterations",
                    self.iterations
                ));
            }
        }
        Ok(())
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            lambda,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub x: Vec<f64>,
    /// Smooth objective `f(x)`.
    pub objective: f64,
    /// `f(x) + λ‖x‖₁` with the λ in force for that iteration.
    pub regularized: f64,
    pub zeros: usize,
}

impl IterationRecord {
    fn new(x: Vec<f64>, objective: f64, lambda: f64) -> Self {
        let regularized = objective + lambda * l1_norm(&x);
        let zeros = zero_count(&x);
        Self {
            x,
            objective,
            regularized,
            zeros,
        }
    }
}

/// Iterates `x_0 … x_K`. Hybrid runs switch to the compacted parameter
/// vector after `phase_boundary`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub records: Vec<IterationRecord>,
    pub phase_boundary: Option<usize>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    pub fn final_x(&self) -> &[f64] {
        self.records.last().map(|r| r.x.as_slice()).unwrap_or(&[])
    }
}

/// A run that stopped on an evaluation failure.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("optimization aborted after {} iterates: {error}", partial.len())]
pub struct Aborted {
    pub partial: Trajectory,
    pub error: Error,
}

impl From<Aborted> for Error {
    fn from(a: Aborted) -> Self {
        a.error
    }
}

fn run_steps<O, S>(objective: &O, x0: &[f64], cfg: &OptimizerConfig, lambda: f64, step: S) -> Result<Trajectory, Aborted>
where
    O: Objective + ?Sized,
    S: Fn(&[f64], &[f64]) -> Vec<f64>,
{
    let mut traj = Trajectory::default();
    let abort = |traj: Trajectory, error| Aborted { partial: traj, error };
    if let Err(e) = cfg.validate() {
        return Err(abort(traj, e));
    }
    let mut x = x0.to_vec();
    for _ in 0..cfg.iterations {
        let (f, g) = match objective
            .value_and_gradient(&x, cfg.epsilon)
            .and_then(|(f, g)| Ok((check_finite_value(f, "objective")?, g)))
        {
            Ok(v) => v,
            Err(e) => return Err(abort(traj, e)),
        };
        let next = step(&x, &g);
        traj.records.push(IterationRecord::new(x, f, lambda));
        x = next;
    }
    match objective.value(&x).and_then(|f| check_finite_value(f, "objective")) {
        Ok(f) => traj.records.push(IterationRecord::new(x, f, lambda)),
        Err(e) => return Err(abort(traj, e)),
    }
    Ok(traj)
}

/// Proximal gradient descent: `x ← S_{λη}(x - η∇f(x))`, `K` times.
///
/// Parameters are never frozen: a zero entry re-enters whenever its
/// gradient step leaves the dead zone `[-λη, λη]`.
pub fn run_pg<O: Objective + ?Sized>(objective: &O, x0: &[f64], cfg: &OptimizerConfig) -> Result<Trajectory, Aborted> {
    run_steps(objective, x0, cfg, cfg.lambda, |x, g| pg_step(x, g, cfg.eta, cfg.lambda))
}

/// Plain gradient descent `x ← x - η∇f(x)`; `cfg.lambda` only enters the
/// recorded regularized values.
pub fn run_gd<O: Objective + ?Sized>(objective: &O, x0: &[f64], cfg: &OptimizerConfig) -> Result<Trajectory, Aborted> {
    run_steps(objective, x0, cfg, cfg.lambda, |x, g| gd_step(x, g, cfg.eta))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridOutcome {
    /// `K_pg + K_gd + 1` iterates; entries after the boundary are compacted.
    pub trajectory: Trajectory,
    /// Last PG iterate before compaction.
    pub phase1_x: Vec<f64>,
    pub phase1_objective: f64,
    /// Compacted vector after plain descent.
    pub final_x: Vec<f64>,
    /// Objective without the regularization term.
    pub final_objective: f64,
}

/// PG for `K_pg` iterations, then plain GD for `K_gd` iterations on the
/// vector produced by `reduce` (which drops pruned entries) with λ removed.
pub fn run_hybrid<O, P, R>(objective: &O, x0: &[f64], cfg: &OptimizerConfig, reduce: R) -> Result<HybridOutcome, Aborted>
where
    O: Objective + ?Sized,
    P: Objective,
    R: FnOnce(&[f64]) -> Result<(P, Vec<f64>)>,
{
    let (k_pg, k_gd) = cfg.hybrid_split.ok_or_else(|| Aborted {
        partial: Trajectory::default(),
        error: Error::InvalidConfig("hybrid run requires a split".into()),
    })?;
    if let Err(error) = cfg.validate() {
        return Err(Aborted {
            partial: Trajectory::default(),
            error,
        });
    }
    let phase1_cfg = OptimizerConfig {
        iterations: k_pg,
        hybrid_split: None,
        ..cfg.clone()
    };
    let mut traj = run_pg(objective, x0, &phase1_cfg)?;
    let last = traj.last().expect("at least x0").clone();
    traj.phase_boundary = Some(k_pg);

    let (reduced, y0) = match reduce(&last.x) {
        Ok(v) => v,
        Err(error) => return Err(Aborted { partial: traj, error }),
    };
    let phase2_cfg = OptimizerConfig {
        lambda: 0.0,
        iterations: k_gd,
        hybrid_split: None,
        ..cfg.clone()
    };
    let phase2 = match run_gd(&reduced, &y0, &phase2_cfg) {
        Ok(t) => t,
        Err(a) => {
            traj.records.extend(a.partial.records.into_iter().skip(1));
            return Err(Aborted {
                partial: traj,
                error: a.error,
            });
        }
    };
    let end = phase2.last().expect("at least y0").clone();
    traj.records.extend(phase2.records.into_iter().skip(1));
    Ok(HybridOutcome {
        trajectory: traj,
        phase1_x: last.x,
        phase1_objective: last.objective,
        final_x: end.x,
        final_objective: end.objective,
    })
}
