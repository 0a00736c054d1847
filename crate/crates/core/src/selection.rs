//! Depth selection: brute-force extrema, approximation ratios, operation
//! merging, the shrinking-λ sweep and the exhaustive depth baseline.

use rayon::prelude::*;

use crate::dynamics::{plus_state_vector, qaoa_tags, ControlSchedule, GeneratorTag, Step, UnitaryOracle};
use crate::error::{Error, Result};
use crate::operators::{check_qubits, ComplexMatrix, DiagonalObservable, MAX_ENUMERATION_QUBITS};
use crate::optimizer::{run_gd, run_hybrid, run_pg, OptimizerConfig, Trajectory};
use crate::problems::Graph;
use crate::qaoa::QaoaInstance;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutExtrema {
    pub c_min: f64,
    pub c_max: f64,
    /// Basis index attaining `c_min` (bit k = qubit k).
    pub argmin: usize,
    pub argmax: usize,
}

impl CutExtrema {
    pub fn bitstring(index: usize, n_qubits: usize) -> String {
        (0..n_qubits).rev().map(|k| if (index >> k) & 1 == 1 { '1' } else { '0' }).collect()
    }
}

/// Enumerates all `2^N` spin assignments. Ties go to the smallest index.
pub fn brute_force_extrema(graph: &Graph) -> Result<CutExtrema> {
    let n = graph.n_nodes();
    check_qubits(n, MAX_ENUMERATION_QUBITS)?;
    let mut best = CutExtrema {
        c_min: f64::INFINITY,
        c_max: f64::NEG_INFINITY,
        argmin: 0,
        argmax: 0,
    };
    for b in 0..1usize << n {
        let s = |k: usize| if (b >> k) & 1 == 0 { 1.0 } else { -1.0 };
        let mut c = 0.0;
        for e in graph.edges() {
            c += s(e.i) * s(e.j) * e.weight;
        }
        if c < best.c_min {
            best.c_min = c;
            best.argmin = b;
        }
        if c > best.c_max {
            best.c_max = c;
            best.argmax = b;
        }
    }
    Ok(best)
}

/// `1 - (value - c_min)/(c_max - c_min)`, unclamped.
pub fn approximation_ratio(value: f64, extrema: &CutExtrema) -> Result<f64> {
    let span = extrema.c_max - extrema.c_min;
    if !(span > 0.0) {
        return Err(Error::DegenerateExtrema(extrema.c_min));
    }
    Ok(1.0 - (value - extrema.c_min) / span)
}

pub fn clamp_ratio(r: f64) -> f64 {
    r.clamp(0.0, 1.0)
}

/// Drops zero durations and folds neighbours that share a generator. A fold
/// that cancels to zero is dropped too, so its neighbours may fold in turn.
pub fn merge_operations(schedule: &ControlSchedule) -> ControlSchedule {
    let mut out: Vec<Step> = Vec::with_capacity(schedule.len());
    for &step in schedule.steps() {
        if step.duration == 0.0 {
            continue;
        }
        match out.last_mut() {
            Some(top) if top.tag == step.tag => {
                top.duration += step.duration;
                if top.duration == 0.0 {
                    out.pop();
                }
            }
            _ => out.push(step),
        }
    }
    ControlSchedule::from_steps(out)
}

/// Whether both schedules send `|s⟩` to the same noiseless final state
/// (max entry difference ≤ 1e-10). Generators are used as given.
pub fn invariance_check_merge(
    schedule: &ControlSchedule,
    merged: &ControlSchedule,
    problem: &DiagonalObservable,
    mixer: &ComplexMatrix,
) -> Result<bool> {
    let oracle = UnitaryOracle::new(problem, mixer)?;
    let n = problem.dim().trailing_zeros() as usize;
    let psi0 = plus_state_vector(n)?;
    let a = oracle.apply(&psi0, schedule)?;
    let b = oracle.apply(&psi0, merged)?;
    let diff = a.iter().zip(&b).map(|(u, v)| (u - v).norm()).fold(0.0, f64::max);
    Ok(diff <= 1e-10)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaSchedule {
    pub initial: f64,
    pub factor: f64,
    pub max_rounds: usize,
    pub plateau_tol: f64,
}

impl Default for LambdaSchedule {
    fn default() -> Self {
        Self {
            initial: 6.0,
            factor: 0.6,
            max_rounds: 8,
            plateau_tol: 0.01,
        }
    }
}

impl LambdaSchedule {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.initial.is_finite() && self.initial > 0.0) {
            return bad(format!("initial lambda must be positive, got {}", self.initial));
        }
        if !(self.factor > 0.0 && self.factor < 1.0) {
            return bad(format!("lambda factor must lie in (0, 1), got {}", self.factor));
        }
        if self.max_rounds == 0 {
            return bad("at least one round is required".into());
        }
        if !(self.plateau_tol >= 0.0) {
            return bad(format!("plateau tolerance must be nonnegative, got {}", self.plateau_tol));
        }
        Ok(())
    }

    /// `initial · factor^k` for `k < max_rounds`.
    pub fn values(&self) -> Vec<f64> {
        (0..self.max_rounds)
            .map(|k| self.initial * self.factor.powi(k as i32))
            .collect()
    }

    /// Stop check made after each completed round, on the scores of the
    /// successful rounds so far. A finite tolerance needs two consecutive
    /// scores within `plateau_tol` after the scores have risen at least
    /// `plateau_tol` above the first round; otherwise a run of fully pruned
    /// arms at large λ would read as a plateau. An infinite tolerance stops
    /// after the first round.
    pub fn plateau_reached(&self, scores: &[f64]) -> bool {
        if self.plateau_tol.is_infinite() {
            return !scores.is_empty();
        }
        match scores {
            [first, .., prev, last] => (last - prev).abs() < self.plateau_tol && prev - first >= self.plateau_tol,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySummary {
    pub iterations: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub final_regularized: f64,
}

impl TrajectorySummary {
    fn of(t: &Trajectory) -> Self {
        let first = t.records.first();
        let last = t.records.last();
        Self {
            iterations: t.len().saturating_sub(1),
            initial_objective: first.map_or(f64::NAN, |r| r.objective),
            final_objective: last.map_or(f64::NAN, |r| r.objective),
            final_regularized: last.map_or(f64::NAN, |r| r.regularized),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub lambda: f64,
    /// Nonzero entries after the proximal phase.
    pub selected_params: usize,
    /// Operation count after merging.
    pub effective_depth: usize,
    /// Ratio at the end of the proximal phase.
    pub ratio: f64,
    /// Ratio after the plain-descent refinement (hybrid runs only).
    pub phase2_ratio: Option<f64>,
    /// Final parameters; for hybrid runs, the merged vector on `final_tags`.
    pub final_x: Vec<f64>,
    pub final_tags: Vec<GeneratorTag>,
    pub summary: TrajectorySummary,
    pub stopped_early: bool,
    pub failure: Option<String>,
}

impl ExperimentRecord {
    /// Ratio that ranks arms: the final accuracy of the protocol.
    pub fn score(&self) -> f64 {
        self.phase2_ratio.unwrap_or(self.ratio)
    }

    pub fn is_failed(&self) -> bool {
        self.failure.is_some()
    }

    fn failed(lambda: f64, error: &Error, partial: &Trajectory) -> Self {
        Self {
            lambda,
            selected_params: 0,
            effective_depth: 0,
            ratio: f64::NAN,
            phase2_ratio: None,
            final_x: Vec::new(),
            final_tags: Vec::new(),
            summary: TrajectorySummary::of(partial),
            stopped_early: false,
            failure: Some(error.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub records: Vec<ExperimentRecord>,
    pub best: Option<usize>,
}

/// One λ arm: PG, or PG followed by plain descent when a split is set.
pub fn run_arm(instance: &QaoaInstance, x0: &[f64], cfg: &OptimizerConfig) -> ExperimentRecord {
    let p = x0.len() / 2;
    let objective = instance.qaoa_objective(p);
    let tags = qaoa_tags(p);
    let merged_of = |x: &[f64]| -> Result<ControlSchedule> { Ok(merge_operations(&ControlSchedule::with_tags(&tags, x)?)) };

    if cfg.hybrid_split.is_some() {
        let out = run_hybrid(&objective, x0, cfg, |x| {
            let merged = merged_of(x)?;
            Ok((instance.objective(merged.tags()), merged.durations()))
        });
        let out = match out {
            Ok(o) => o,
            Err(a) => return ExperimentRecord::failed(cfg.lambda, &a.error, &a.partial),
        };
        let finish = || -> Result<ExperimentRecord> {
            let merged = merged_of(&out.phase1_x)?;
            Ok(ExperimentRecord {
                lambda: cfg.lambda,
                selected_params: out.phase1_x.iter().filter(|v| **v != 0.0).count(),
                effective_depth: merged.len(),
                ratio: instance.ratio(out.phase1_objective)?,
                phase2_ratio: Some(instance.ratio(out.final_objective)?),
                final_x: out.final_x.clone(),
                final_tags: merged.tags(),
                summary: TrajectorySummary::of(&out.trajectory),
                stopped_early: false,
                failure: None,
            })
        };
        return finish().unwrap_or_else(|e| ExperimentRecord::failed(cfg.lambda, &e, &out.trajectory));
    }

    let traj = match run_pg(&objective, x0, cfg) {
        Ok(t) => t,
        Err(a) => return ExperimentRecord::failed(cfg.lambda, &a.error, &a.partial),
    };
    let finish = || -> Result<ExperimentRecord> {
        let last = traj.last().expect("trajectory holds x0");
        Ok(ExperimentRecord {
            lambda: cfg.lambda,
            selected_params: last.x.len() - last.zeros,
            effective_depth: merged_of(&last.x)?.len(),
            ratio: instance.ratio(last.objective)?,
            phase2_ratio: None,
            final_x: last.x.clone(),
            final_tags: tags.clone(),
            summary: TrajectorySummary::of(&traj),
            stopped_early: false,
            failure: None,
        })
    };
    finish().unwrap_or_else(|e| ExperimentRecord::failed(cfg.lambda, &e, &traj))
}

/// Best arm among successful records: within `plateau_tol` of the top score
/// (exact top if the tolerance is infinite), fewest selected parameters,
/// then larger λ.
pub fn choose_best(records: &[ExperimentRecord], plateau_tol: f64) -> Option<usize> {
    let top = records
        .iter()
        .filter(|r| !r.is_failed())
        .map(|r| r.score())
        .fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return None;
    }
    let window = if plateau_tol.is_finite() { plateau_tol } else { 0.0 };
    let mut best: Option<usize> = None;
    for (i, r) in records.iter().enumerate() {
        if r.is_failed() || r.score() < top - window {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(j) => {
                let b = &records[j];
                let better = (r.selected_params, std::cmp::Reverse(ordered(r.lambda)))
                    < (b.selected_params, std::cmp::Reverse(ordered(b.lambda)));
                Some(if better { i } else { j })
            }
        };
    }
    best
}

fn ordered(v: f64) -> i64 {
    // total order on finite λ values
    let bits = v.to_bits() as i64;
    if bits < 0 {
        bits ^ i64::MAX
    } else {
        bits
    }
}

/// Runs the λ arms in order and stops at the first plateau. In parallel mode
/// every arm runs and the list is cut at the same point afterwards, so both
/// modes return identical records.
pub fn run_lambda_sweep(
    instance: &QaoaInstance,
    x0: &[f64],
    cfg: &OptimizerConfig,
    schedule: &LambdaSchedule,
    parallel: bool,
) -> Result<SweepOutcome> {
    schedule.validate()?;
    cfg.validate()?;
    if x0.is_empty() || x0.len() % 2 != 0 {
        return Err(Error::InvalidConfig(format!(
            "initial vector needs an even positive length, got {}",
            x0.len()
        )));
    }
    let lambdas = schedule.values();
    let arm = |lambda: f64| run_arm(instance, x0, &cfg.with_lambda(lambda));

    let mut records: Vec<ExperimentRecord> = Vec::new();
    let mut scores = Vec::new();
    let mut feed = |mut rec: ExperimentRecord, round: usize| -> bool {
        if !rec.is_failed() {
            scores.push(rec.score());
        }
        let stop = !rec.is_failed() && schedule.plateau_reached(&scores) && round + 1 < lambdas.len();
        rec.stopped_early = stop;
        records.push(rec);
        stop
    };
    if parallel {
        let all: Vec<ExperimentRecord> = lambdas.par_iter().map(|&l| arm(l)).collect();
        for (k, rec) in all.into_iter().enumerate() {
            if feed(rec, k) {
                break;
            }
        }
    } else {
        for (k, &l) in lambdas.iter().enumerate() {
            if feed(arm(l), k) {
                break;
            }
        }
    }
    let best = choose_best(&records, schedule.plateau_tol);
    Ok(SweepOutcome { records, best })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRow {
    pub p: usize,
    pub params: usize,
    pub ratio: f64,
    pub objective: f64,
    /// `Σ|x_i|` of the optimized schedule.
    pub control_time: f64,
    pub final_x: Vec<f64>,
}

/// Plain gradient descent from `x0 = (init, …, init)` at each depth.
pub fn exhaustive_depth_baseline(
    instance: &QaoaInstance,
    cfg: &OptimizerConfig,
    p_range: &[usize],
    init: f64,
    parallel: bool,
) -> Result<Vec<BaselineRow>> {
    if p_range.is_empty() {
        return Err(Error::EmptyRange);
    }
    if p_range.contains(&0) {
        return Err(Error::InvalidConfig("depth p must be positive".into()));
    }
    let cfg = OptimizerConfig {
        lambda: 0.0,
        hybrid_split: None,
        ..cfg.clone()
    };
    cfg.validate()?;
    let row = |p: usize| -> Result<BaselineRow> {
        let traj = run_gd(&instance.qaoa_objective(p), &vec![init; 2 * p], &cfg)?;
        let last = traj.last().expect("trajectory holds x0");
        Ok(BaselineRow {
            p,
            params: 2 * p,
            ratio: instance.ratio(last.objective)?,
            objective: last.objective,
            control_time: last.x.iter().map(|v| v.abs()).sum(),
            final_x: last.x.clone(),
        })
    };
    if parallel {
        p_range.par_iter().map(|&p| row(p)).collect()
    } else {
        p_range.iter().map(|&p| row(p)).collect()
    }
}

/// Index of the first row with the highest ratio.
pub fn baseline_argmax(rows: &[BaselineRow]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in rows.iter().enumerate() {
        if best.map_or(true, |j| r.ratio > rows[j].ratio) {
            best = Some(i);
        }
    }
    best
}
