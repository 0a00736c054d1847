//! Self-check suite behind the `verify` command. Each check exercises the
//! numerics against an independent reference and reports its worst error.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{
    evolve_segment, initial_plus_state, plus_state_vector, qaoa_tags, ControlSchedule, DensityMatrix,
    IntegrationMethod, IntegratorConfig, UnitaryOracle,
};
use crate::error::Result;
use crate::operators::{
    build_maxcut_hamiltonian, build_mixer, pauli, ComplexMatrix, Hamiltonian, NoiseModel, Pauli, ScaleFactor,
};
use crate::optimizer::{fd_gradient, run_gd, run_pg, soft_threshold, Objective, OptimizerConfig};
use crate::problems::{max_edges, random_graph};
use crate::qaoa::QaoaInstance;
use crate::selection::{brute_force_extrema, invariance_check_merge, merge_operations};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifySettings {
    pub integrator: IntegratorConfig,
    pub scale: ScaleFactor,
    pub seed: u64,
}

type Check = fn(&VerifySettings) -> Result<(bool, String)>;

pub const CHECKS: &[(&str, Check)] = &[
    ("noiseless-equivalence", noiseless_equivalence),
    ("state-validity", state_validity),
    ("dephasing-analytic", dephasing_analytic),
    ("rabi-analytic", rabi_analytic),
    ("rk4-order", rk4_order),
    ("soft-threshold-branches", soft_threshold_branches),
    ("pg-reduces-to-gd", pg_reduces_to_gd),
    ("lasso-closed-form", lasso_closed_form),
    ("extrema-oracle", extrema_oracle),
    ("merge-invariance", merge_invariance),
    ("segment-gradient", segment_gradient),
];

pub fn run_checks(settings: &VerifySettings) -> Vec<CheckResult> {
    CHECKS
        .iter()
        .map(|(name, check)| match check(settings) {
            Ok((passed, detail)) => CheckResult { name, passed, detail },
            Err(e) => CheckResult {
                name,
                passed: false,
                detail: format!("error: {e}"),
            },
        })
        .collect()
}

pub fn format_table(results: &[CheckResult]) -> String {
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut s = String::new();
    for r in results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        s.push_str(&format!("{:<width$}  {status}  {}\n", r.name, r.detail));
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    s.push_str(&format!("{} checks, {failed} failed\n", results.len()));
    s
}

struct RandomCase {
    instance: QaoaInstance,
    schedule: ControlSchedule,
}

fn random_case(rng: &mut ChaCha8Rng, settings: &VerifySettings, noise: NoiseModel, lo: f64) -> Result<RandomCase> {
    let n = rng.gen_range(2..=5);
    let m = rng.gen_range(1..=max_edges(n));
    let graph = random_graph(n, m, (0.1, 1.0), rng.gen())?;
    let p = rng.gen_range(1..=4);
    let x: Vec<f64> = (0..2 * p).map(|_| rng.gen_range(lo..=0.3)).collect();
    Ok(RandomCase {
        instance: QaoaInstance::new(graph, noise, settings.scale, settings.integrator)?,
        schedule: ControlSchedule::qaoa(&x)?,
    })
}

fn noiseless_cases(settings: &VerifySettings) -> Result<Vec<(RandomCase, DensityMatrix)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    (0..50)
        .map(|_| {
            let case = random_case(&mut rng, settings, NoiseModel::none(), -0.3)?;
            let rho = case.instance.evolve(&case.schedule)?;
            Ok((case, rho))
        })
        .collect()
}

fn noiseless_equivalence(settings: &VerifySettings) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for (case, rho) in noiseless_cases(settings)? {
        let lindblad = crate::dynamics::expectation(case.instance.cost(), &rho)?;
        let psi0 = plus_state_vector(case.instance.n_qubits())?;
        let psi = case.instance.oracle()?.apply(&psi0, &case.schedule)?;
        let reference = UnitaryOracle::expectation(case.instance.cost(), &psi);
        worst = worst.max((lindblad - reference).abs());
    }
    Ok((worst <= 1e-5, format!("50 schedules, max |Δ| = {worst:.3e} (tol 1e-5)")))
}

fn state_validity(settings: &VerifySettings) -> Result<(bool, String)> {
    let mut states: Vec<DensityMatrix> = noiseless_cases(settings)?.into_iter().map(|(_, r)| r).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed ^ 0x5eed);
    for k in 0..20 {
        let coupling = rng.gen_range(0.1..=0.5);
        let noise = if k % 2 == 0 {
            NoiseModel::relaxation(coupling)?
        } else {
            NoiseModel::dephasing(coupling)?
        };
        let case = random_case(&mut rng, settings, noise, 0.0)?;
        states.push(case.instance.evolve(&case.schedule)?);
    }
    let (mut tr, mut herm, mut eig) = (0.0f64, 0.0f64, f64::INFINITY);
    for rho in &states {
        let d = rho.diagnostics();
        tr = tr.max(d.trace_error);
        herm = herm.max(d.hermiticity_error);
        eig = eig.min(d.min_eigenvalue);
    }
    let ok = tr <= 1e-8 && herm <= 1e-8 && eig >= -1e-7;
    Ok((
        ok,
        format!("{} states, |tr-1| {tr:.1e}, herm {herm:.1e}, min eig {eig:.1e}", states.len()),
    ))
}

fn dephasing_analytic(settings: &VerifySettings) -> Result<(bool, String)> {
    let rho0 = initial_plus_state(1)?;
    let h = Hamiltonian::Dense(ComplexMatrix::zeros(2));
    let mut worst = 0.0f64;
    for (gamma, t) in [(0.2, 0.5), (0.4, 1.0), (0.3, 2.0)] {
        let out = evolve_segment(&rho0, &h, t, &NoiseModel::dephasing(gamma)?, &settings.integrator)?;
        worst = worst.max((out.matrix()[(0, 1)].re - 0.5 * (-2.0 * gamma * t).exp()).abs());
    }
    Ok((worst <= 1e-6, format!("max |Δ| = {worst:.3e} (tol 1e-6)")))
}

fn rabi_error(t: f64, cfg: &IntegratorConfig) -> Result<f64> {
    // |0⟩ = (0, 1)ᵀ is basis index 1
    let rho0 = DensityMatrix::basis(2, 1)?;
    let h = Hamiltonian::Dense(pauli(Pauli::X));
    let out = evolve_segment(&rho0, &h, t, &NoiseModel::none(), cfg)?;
    Ok((out.matrix()[(0, 0)].re - t.sin().powi(2)).abs())
}

fn rabi_analytic(settings: &VerifySettings) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for t in [0.3, 0.9, 1.7] {
        worst = worst.max(rabi_error(t, &settings.integrator)?);
    }
    Ok((worst <= 1e-6, format!("max |Δ| = {worst:.3e} (tol 1e-6)")))
}

fn rk4_order(_: &VerifySettings) -> Result<(bool, String)> {
    let coarse = rabi_error(1.0, &IntegratorConfig::new(0.1)?)?;
    let fine = rabi_error(1.0, &IntegratorConfig::new(0.05)?)?;
    let rate = coarse / fine;
    Ok((rate >= 8.0, format!("error ratio {rate:.2} on step halving (min 8)")))
}

fn soft_threshold_branches(_: &VerifySettings) -> Result<(bool, String)> {
    let ok = soft_threshold(0.5, 0.2) == 0.5 - 0.2
        && soft_threshold(-0.1, 0.2).to_bits() == 0.0f64.to_bits()
        && soft_threshold(-0.5, 0.2) == -0.5 + 0.2;
    Ok((ok, "three branches, exact".into()))
}

fn pg_reduces_to_gd(_: &VerifySettings) -> Result<(bool, String)> {
    let f = |x: &[f64]| -> Result<f64> { Ok((x[0] - 0.3).powi(2) * (1.0 + x[1].powi(2)) + x[1].sin()) };
    let cfg = OptimizerConfig {
        eta: 0.05,
        iterations: 100,
        ..Default::default()
    };
    let a = run_pg(&f, &[1.0, -0.5], &cfg)?;
    let b = run_gd(&f, &[1.0, -0.5], &cfg)?;
    let worst = a
        .records
        .iter()
        .zip(&b.records)
        .flat_map(|(u, v)| u.x.iter().zip(&v.x).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max);
    Ok((worst <= 1e-12, format!("max |Δx| = {worst:.1e} over 100 iterations")))
}

fn lasso_closed_form(_: &VerifySettings) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for (a, lambda) in [(1.5, 0.4), (-0.8, 0.3), (0.2, 0.5)] {
        let f = move |x: &[f64]| -> Result<f64> { Ok(0.5 * (x[0] - a).powi(2)) };
        let cfg = OptimizerConfig {
            eta: 0.5,
            epsilon: 1e-4,
            lambda,
            iterations: 200,
            hybrid_split: None,
        };
        let t = run_pg(&f, &[2.0], &cfg)?;
        worst = worst.max((t.final_x()[0] - soft_threshold(a, lambda)).abs());
    }
    Ok((worst <= 1e-6, format!("max |Δ| = {worst:.1e} (tol 1e-6)")))
}

fn extrema_oracle(settings: &VerifySettings) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed ^ 0xe87);
    let mut mismatches = 0;
    for _ in 0..100 {
        let n = rng.gen_range(2..=8);
        let m = rng.gen_range(1..=max_edges(n));
        let g = random_graph(n, m, (0.1, 1.0), rng.gen())?;
        let e = brute_force_extrema(&g)?;
        let h = build_maxcut_hamiltonian(&g)?;
        if e.c_min != h.min() || e.c_max != h.max() {
            mismatches += 1;
        }
    }
    Ok((mismatches == 0, format!("100 graphs, {mismatches} mismatches")))
}

fn merge_invariance(settings: &VerifySettings) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed ^ 0x3e9);
    let mut failures = 0;
    for _ in 0..20 {
        let n = rng.gen_range(2..=5);
        let g = random_graph(n, rng.gen_range(1..=max_edges(n)), (0.1, 1.0), rng.gen())?;
        let s = settings.scale.value();
        let h = build_maxcut_hamiltonian(&g)?.scaled(s);
        let mixer = build_mixer(n)?.scale(Complex64::new(s, 0.0));
        let p = rng.gen_range(2..=8);
        let x: Vec<f64> = (0..2 * p)
            .map(|_| if rng.gen_bool(0.4) { 0.0 } else { rng.gen_range(-0.3..0.3) })
            .collect();
        let schedule = ControlSchedule::with_tags(&qaoa_tags(p), &x)?;
        if !invariance_check_merge(&schedule, &merge_operations(&schedule), &h, &mixer)? {
            failures += 1;
        }
    }
    Ok((failures == 0, format!("20 schedules, {failures} mismatches (tol 1e-10)")))
}

fn segment_gradient(settings: &VerifySettings) -> Result<(bool, String)> {
    let g = random_graph(3, 3, (0.1, 1.0), settings.seed)?;
    let cfg = IntegratorConfig::new(settings.integrator.step().max(1e-2))?.with_method(IntegrationMethod::Rk4);
    let inst = QaoaInstance::new(g, NoiseModel::relaxation(0.3)?, settings.scale, cfg)?;
    let obj = inst.qaoa_objective(2);
    let x = [0.1, 0.05, -0.08, 0.12];
    let (_, cached) = obj.value_and_gradient(&x, 1e-3)?;
    let plain = fd_gradient(|y| obj.value(y), &x, 1e-3)?;
    let worst = cached.iter().zip(&plain).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok((worst <= 1e-10, format!("max |Δ| = {worst:.1e} vs full re-evaluation")))
}
