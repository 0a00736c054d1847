//! Density-matrix evolution through an alternating control schedule.
//!
//! Each schedule step evolves the state under one generator for a literal
//! duration:
//!
//! ```text
//! dρ/dt = -i[H, ρ] + Σ_n γ (L_n ρ L_n† - ½{L_n† L_n, ρ})
//! ```
//!
//! Steps are integrated with classical fixed-step RK4. For a time-invariant
//! linear generator one RK4 step equals the degree-4 Taylor polynomial of
//! `exp(hL)`, which is what [`SegmentGenerator::propagate`] evaluates in
//! nested form. A negative duration runs the Hamiltonian backwards for
//! `|t|` while the dissipator still acts for `|t|`.
//!
//! The Heisenberg-picture (adjoint) propagation uses the same polynomial in
//! the dual generator, so `tr(O · Φ(ρ)) = tr(Φ†(O) · ρ)` holds up to
//! rounding for the discrete maps themselves.

use nalgebra::{DMatrix, Matrix4, SymmetricEigen, Vector4};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::operators::{
    build_noise_operators, check_qubits, pauli, ComplexMatrix, DiagonalObservable, Hamiltonian, NoiseKind,
    NoiseModel, Pauli, MAX_DENSE_QUBITS, ZERO,
};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Trace-one Hermitian state.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(ComplexMatrix);

/// Distances of a state from the density-matrix invariants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDiagnostics {
    pub trace_error: f64,
    pub hermiticity_error: f64,
    pub min_eigenvalue: f64,
}

impl StateDiagnostics {
    pub fn is_valid(&self, trace_tol: f64, herm_tol: f64, eig_floor: f64) -> bool {
        self.trace_error <= trace_tol && self.hermiticity_error <= herm_tol && self.min_eigenvalue >= eig_floor
    }
}

impl DensityMatrix {
    /// Wraps a matrix without checking the state invariants.
    pub fn from_matrix(m: ComplexMatrix) -> Self {
        Self(m)
    }

    pub fn from_pure(state: &[Complex64]) -> Result<Self> {
        Ok(Self(ComplexMatrix::outer(state)?))
    }

    /// Computational basis state `|b⟩⟨b|`.
    pub fn basis(dim: usize, b: usize) -> Result<Self> {
        if b >= dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: b,
            });
        }
        let mut diag = vec![0.0; dim];
        diag[b] = 1.0;
        Ok(Self(ComplexMatrix::from_diagonal(&diag)?))
    }

    #[inline]
    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    /// `tr(ρ²)`.
    pub fn purity(&self) -> f64 {
        // tr(ρρ) = Σ ρ_ab ρ_ba = Σ |ρ_ab|² for Hermitian ρ
        let d = self.dim();
        let mut acc = 0.0;
        for a in 0..d {
            for b in 0..d {
                acc += (self.0[(a, b)] * self.0[(b, a)]).re;
            }
        }
        acc
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let d = self.dim();
        let m = DMatrix::from_fn(d, d, |r, c| (self.0[(r, c)] + self.0[(c, r)].conj()) * 0.5);
        SymmetricEigen::new(m)
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn diagnostics(&self) -> StateDiagnostics {
        StateDiagnostics {
            trace_error: (self.trace() - 1.0).norm(),
            hermiticity_error: self.0.hermiticity_error(),
            min_eigenvalue: self.min_eigenvalue(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GeneratorTag {
    Problem,
    Mixer,
}

impl GeneratorTag {
    pub fn as_str(self) -> &'static str {
        match self {
            GeneratorTag::Problem => "problem",
            GeneratorTag::Mixer => "mixer",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub tag: GeneratorTag,
    pub duration: f64,
}

impl Step {
    pub fn new(tag: GeneratorTag, duration: f64) -> Self {
        Self { tag, duration }
    }
}

/// Sequence of generator applications in execution order.
///
/// The QAOA form `(γ_1, β_1, …, γ_p, β_p)` alternates Problem and Mixer
/// steps; compacted schedules may start or end with either tag.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ControlSchedule {
    steps: Vec<Step>,
}

impl ControlSchedule {
    pub fn from_steps(steps: Vec<Step>) -> Self {
        Self { steps }
    }

    /// Interleaved parameter vector `(γ_1, β_1, …, γ_p, β_p)`.
    pub fn qaoa(params: &[f64]) -> Result<Self> {
        if params.len() % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "QAOA parameter vector must have even length, got {}",
                params.len()
            )));
        }
        Ok(Self::with_tags(&qaoa_tags(params.len() / 2), params).expect("lengths agree"))
    }

    pub fn uniform(p: usize, value: f64) -> Self {
        Self::qaoa(&vec![value; 2 * p]).expect("even length")
    }

    pub fn with_tags(tags: &[GeneratorTag], durations: &[f64]) -> Result<Self> {
        if tags.len() != durations.len() {
            return Err(Error::DimensionMismatch {
                expected: tags.len(),
                actual: durations.len(),
            });
        }
        Ok(Self {
            steps: tags.iter().zip(durations).map(|(&t, &d)| Step::new(t, d)).collect(),
        })
    }

    #[inline]
    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn tags(&self) -> Vec<GeneratorTag> {
        self.steps.iter().map(|s| s.tag).collect()
    }

    pub fn durations(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.duration).collect()
    }

    pub fn nonzero_count(&self) -> usize {
        self.steps.iter().filter(|s| s.duration != 0.0).count()
    }

    /// `Σ |t_i|`, the time the register is exposed to noise.
    pub fn total_duration(&self) -> f64 {
        self.steps.iter().map(|s| s.duration.abs()).sum()
    }
}

pub fn qaoa_tags(p: usize) -> Vec<GeneratorTag> {
    (0..2 * p)
        .map(|i| {
            if i % 2 == 0 {
                GeneratorTag::Problem
            } else {
                GeneratorTag::Mixer
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IntegrationMethod {
    /// Fixed-step RK4 for every segment.
    Rk4,
    /// Exact propagators where the generator factorizes: mixer segments
    /// (per-qubit terms commute) and diagonal segments without relaxation.
    /// Diagonal segments under relaxation fall back to RK4.
    Factorized,
}

impl IntegrationMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            IntegrationMethod::Rk4 => "rk4",
            IntegrationMethod::Factorized => "factorized",
        }
    }
}

impl std::str::FromStr for IntegrationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rk4" => Ok(IntegrationMethod::Rk4),
            "factorized" => Ok(IntegrationMethod::Factorized),
            other => Err(Error::InvalidConfig(format!("unknown integrator '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    step: f64,
    method: IntegrationMethod,
}

impl IntegratorConfig {
    pub fn new(step: f64) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::InvalidConfig(format!("integrator step must be positive, got {step}")));
        }
        Ok(Self {
            step,
            method: IntegrationMethod::Rk4,
        })
    }

    pub fn with_method(self, method: IntegrationMethod) -> Self {
        Self { method, ..self }
    }

    #[inline]
    pub fn step(&self) -> f64 {
        self.step
    }

    #[inline]
    pub fn method(&self) -> IntegrationMethod {
        self.method
    }

    /// Uniform sub-steps used for a segment of length `|duration|`.
    pub fn substeps(&self, duration: f64) -> usize {
        ((duration.abs() / self.step).ceil() as usize).max(1)
    }
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            method: IntegrationMethod::Rk4,
        }
    }
}

/// `|s⟩⟨s|` with `|s⟩ = |+⟩^⊗N`.
pub fn initial_plus_state(n_qubits: usize) -> Result<DensityMatrix> {
    check_qubits(n_qubits, MAX_DENSE_QUBITS)?;
    let d = 1usize << n_qubits;
    let v = Complex64::new(1.0 / d as f64, 0.0);
    Ok(DensityMatrix(ComplexMatrix::from_vec(d, vec![v; d * d])?))
}

pub fn plus_state_vector(n_qubits: usize) -> Result<Vec<Complex64>> {
    check_qubits(n_qubits, MAX_DENSE_QUBITS)?;
    let d = 1usize << n_qubits;
    Ok(vec![Complex64::new((d as f64).sqrt().recip(), 0.0); d])
}

/// Dense right-hand side of the Lindblad equation.
pub fn lindblad_rhs(
    rho: &ComplexMatrix,
    h: &ComplexMatrix,
    noise: &[(ComplexMatrix, f64)],
) -> Result<ComplexMatrix> {
    let comm = h.matmul(rho)?.add(&rho.matmul(h)?.scale(Complex64::new(-1.0, 0.0)))?;
    let mut out = comm.scale(-I);
    for (l, gamma) in noise {
        let ld = l.adjoint();
        let ldl = ld.matmul(l)?;
        let jump = l.matmul(rho)?.matmul(&ld)?;
        let anti = ldl.matmul(rho)?.add(&rho.matmul(&ldl)?)?;
        let term = jump.add(&anti.scale(Complex64::new(-0.5, 0.0)))?;
        out = out.add(&term.scale(Complex64::new(*gamma, 0.0)))?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Picture {
    /// Evolves states.
    Schrodinger,
    /// Evolves observables with the dual generator.
    Heisenberg,
}

/// Structured Lindblad generator for one Hamiltonian, sign and picture.
#[derive(Debug, Clone)]
pub(crate) struct SegmentGenerator {
    dim: usize,
    n_qubits: usize,
    /// Elementwise part: diagonal Hamiltonian phases plus dissipative decay.
    coef: Vec<Complex64>,
    /// Prefactor of `Σ_k (v[a^k, b] - v[a, b^k])`, zero when absent.
    field: Complex64,
    /// Prefactor of `(H v - v H)` for dense Hamiltonians.
    dense: Option<(ComplexMatrix, Complex64)>,
    /// Relaxation coupling feeding population between basis states.
    relax: f64,
    picture: Picture,
    /// Single-qubit generator on `(ρ_00, ρ_01, ρ_10, ρ_11)` of one bit pair,
    /// present for transverse-field segments.
    local: Option<Matrix4<Complex64>>,
}

impl SegmentGenerator {
    fn new(h: &Hamiltonian, noise: &NoiseModel, sign: f64, picture: Picture) -> Result<Self> {
        let dim = h.dim();
        if !dim.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(dim));
        }
        let n_qubits = dim.trailing_zeros() as usize;
        check_qubits(n_qubits, MAX_DENSE_QUBITS)?;
        // -i[H, ·] in the Schrödinger picture, +i[H, ·] in the Heisenberg picture
        let phase = match picture {
            Picture::Schrodinger => -I * sign,
            Picture::Heisenberg => I * sign,
        };
        let mut coef = vec![ZERO; dim * dim];
        let mut field = ZERO;
        let mut dense = None;
        match h {
            Hamiltonian::Diagonal(diag) => {
                let hd = diag.diagonal();
                for a in 0..dim {
                    for b in 0..dim {
                        coef[a * dim + b] = phase * (hd[a] - hd[b]);
                    }
                }
            }
            Hamiltonian::TransverseField { strength, .. } => field = phase * *strength,
            Hamiltonian::Dense(m) => dense = Some((m.clone(), phase)),
        }
        let gamma = if noise.is_noiseless() { 0.0 } else { noise.coupling() };
        let local = match h {
            Hamiltonian::TransverseField { strength, .. } => Some(local_generator(strength * sign, noise, picture)?),
            _ => None,
        };
        let mut relax = 0.0;
        match noise.kind() {
            NoiseKind::None => {}
            NoiseKind::Relaxation => {
                // L†L projects onto the cleared bit
                for a in 0..dim {
                    let za = n_qubits - a.count_ones() as usize;
                    for b in 0..dim {
                        let zb = n_qubits - b.count_ones() as usize;
                        coef[a * dim + b] -= 0.5 * gamma * (za + zb) as f64;
                    }
                }
                relax = gamma;
            }
            NoiseKind::Dephasing => {
                for a in 0..dim {
                    for b in 0..dim {
                        coef[a * dim + b] -= 2.0 * gamma * (a ^ b).count_ones() as f64;
                    }
                }
            }
        }
        Ok(Self {
            dim,
            n_qubits,
            coef,
            field,
            dense,
            relax,
            picture,
            local,
        })
    }

    /// `out = base + c · L(v)` with `scoef = c · coef`.
    fn apply_affine(&self, v: &[Complex64], c: f64, scoef: &[Complex64], base: &[Complex64], out: &mut [Complex64]) {
        let d = self.dim;
        let field = self.field * c;
        let relax = self.relax * c;
        let mut acc = vec![ZERO; d];
        for a in 0..d {
            let row = a * d;
            let out_row = &mut out[row..row + d];
            let v_row = &v[row..row + d];
            for ((o, (&bs, &sc)), &x) in out_row
                .iter_mut()
                .zip(base[row..row + d].iter().zip(&scoef[row..row + d]))
                .zip(v_row)
            {
                *o = bs + sc * x;
            }
            if field != ZERO {
                // acc[b] = Σ_k v[a^k, b] - v[a, b^k]
                acc.fill(ZERO);
                for k in 0..self.n_qubits {
                    let s = 1usize << k;
                    let src = &v[(a ^ s) * d..(a ^ s) * d + d];
                    for (x, &y) in acc.iter_mut().zip(src) {
                        *x += y;
                    }
                    for (blk_acc, blk_v) in acc.chunks_exact_mut(2 * s).zip(v_row.chunks_exact(2 * s)) {
                        let (lo_acc, hi_acc) = blk_acc.split_at_mut(s);
                        let (lo_v, hi_v) = blk_v.split_at(s);
                        for (x, &y) in lo_acc.iter_mut().zip(hi_v) {
                            *x -= y;
                        }
                        for (x, &y) in hi_acc.iter_mut().zip(lo_v) {
                            *x -= y;
                        }
                    }
                }
                for (o, &x) in out_row.iter_mut().zip(acc.iter()) {
                    *o += field * x;
                }
            }
            if relax != 0.0 {
                for k in 0..self.n_qubits {
                    let s = 1usize << k;
                    match self.picture {
                        Picture::Schrodinger => {
                            // (σ_- v σ_+)[a, b] = v[a^k, b^k] when bit k is set in both
                            if a & s == 0 {
                                continue;
                            }
                            let src = &v[(a ^ s) * d..(a ^ s) * d + d];
                            for b in (0..d).filter(|b| b & s != 0) {
                                out_row[b] += relax * src[b ^ s];
                            }
                        }
                        Picture::Heisenberg => {
                            // (σ_+ v σ_-)[a, b] = v[a|k, b|k] when bit k is clear in both
                            if a & s != 0 {
                                continue;
                            }
                            let src = &v[(a | s) * d..(a | s) * d + d];
                            for b in (0..d).filter(|b| b & s == 0) {
                                out_row[b] += relax * src[b | s];
                            }
                        }
                    }
                }
            }
            if let Some((hm, phase)) = &self.dense {
                let pref = phase * c;
                let hm = hm.as_slice();
                for b in 0..d {
                    let mut acc = ZERO;
                    for k in 0..d {
                        acc += hm[row + k] * v[k * d + b] - v_row[k] * hm[k * d + b];
                    }
                    out_row[b] += pref * acc;
                }
            }
        }
    }

    /// Propagates `state` for `duration >= 0` with the configured method.
    fn propagate(&self, state: &mut Vec<Complex64>, duration: f64, cfg: &IntegratorConfig) -> Result<()> {
        match cfg.method() {
            IntegrationMethod::Rk4 => self.propagate_rk4(state, duration, cfg),
            IntegrationMethod::Factorized => {
                if let Some(g) = &self.local {
                    self.propagate_local(state, g, duration)
                } else if self.relax == 0.0 && self.dense.is_none() {
                    for (x, c) in state.iter_mut().zip(&self.coef) {
                        *x *= (c * duration).exp();
                    }
                    check_finite(state)
                } else {
                    self.propagate_rk4(state, duration, cfg)
                }
            }
        }
    }

    /// `Π_k exp(t L_k)` over qubits; the single-qubit terms commute.
    fn propagate_local(&self, state: &mut [Complex64], g: &Matrix4<Complex64>, duration: f64) -> Result<()> {
        let prop = (g * Complex64::new(duration, 0.0)).exp();
        let d = self.dim;
        for k in 0..self.n_qubits {
            let s = 1usize << k;
            for a in (0..d).filter(|a| a & s == 0) {
                for b in (0..d).filter(|b| b & s == 0) {
                    let idx = [a * d + b, a * d + (b | s), (a | s) * d + b, (a | s) * d + (b | s)];
                    let v = Vector4::new(state[idx[0]], state[idx[1]], state[idx[2]], state[idx[3]]);
                    let w = prop * v;
                    for (i, &j) in idx.iter().enumerate() {
                        state[j] = w[i];
                    }
                }
            }
        }
        check_finite(state)
    }

    /// Applies `P(hL)^m` for `m = substeps` sub-steps covering `duration`.
    fn propagate_rk4(&self, state: &mut Vec<Complex64>, duration: f64, cfg: &IntegratorConfig) -> Result<()> {
        let m = cfg.substeps(duration);
        let h = duration / m as f64;
        let factors = [h / 4.0, h / 3.0, h / 2.0, h];
        let scaled: Vec<Vec<Complex64>> = factors
            .iter()
            .map(|&c| self.coef.iter().map(|v| v * c).collect())
            .collect();
        let mut buf_a = vec![ZERO; state.len()];
        let mut buf_b = vec![ZERO; state.len()];
        for _ in 0..m {
            self.apply_affine(state, factors[0], &scaled[0], state, &mut buf_a);
            self.apply_affine(&buf_a, factors[1], &scaled[1], state, &mut buf_b);
            self.apply_affine(&buf_b, factors[2], &scaled[2], state, &mut buf_a);
            self.apply_affine(&buf_a, factors[3], &scaled[3], state, &mut buf_b);
            std::mem::swap(state, &mut buf_b);
        }
        check_finite(state)
    }

    #[cfg(test)]
    pub(crate) fn rhs(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; v.len()];
        let base = vec![ZERO; v.len()];
        self.apply_affine(v, 1.0, &self.coef, &base, &mut out);
        out
    }
}

fn check_finite(state: &[Complex64]) -> Result<()> {
    if state.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::IntegrationDiverged);
    }
    Ok(())
}

/// Generator of one qubit under `field · σ_x` plus its jump operator, as a
/// 4x4 matrix on the row-major entries of the 2x2 local block.
fn local_generator(field: f64, noise: &NoiseModel, picture: Picture) -> Result<Matrix4<Complex64>> {
    let h = pauli(Pauli::X).scale(Complex64::new(field, 0.0));
    let jumps = build_noise_operators(noise, 1)?;
    let mut g = Matrix4::zeros();
    for col in 0..4 {
        let mut e = ComplexMatrix::zeros(2);
        e.as_mut_slice()[col] = Complex64::new(1.0, 0.0);
        let out = lindblad_rhs(&e, &h, &jumps)?;
        for row in 0..4 {
            g[(row, col)] = out.as_slice()[row];
        }
    }
    // the dual generator is the Hilbert-Schmidt adjoint
    Ok(match picture {
        Picture::Schrodinger => g,
        Picture::Heisenberg => g.adjoint(),
    })
}

/// Evolves states and observables through schedules for a fixed pair of
/// generators. Construct once per experiment; it is immutable afterwards.
#[derive(Debug, Clone)]
pub struct Evolver {
    dim: usize,
    cfg: IntegratorConfig,
    // [tag][sign][picture]
    generators: [[[SegmentGenerator; 2]; 2]; 2],
}

impl Evolver {
    pub fn new(problem: &Hamiltonian, mixer: &Hamiltonian, noise: &NoiseModel, cfg: IntegratorConfig) -> Result<Self> {
        if problem.dim() != mixer.dim() {
            return Err(Error::DimensionMismatch {
                expected: problem.dim(),
                actual: mixer.dim(),
            });
        }
        let build = |h: &Hamiltonian| -> Result<[[SegmentGenerator; 2]; 2]> {
            let g = |sign, pic| SegmentGenerator::new(h, noise, sign, pic);
            Ok([
                [g(1.0, Picture::Schrodinger)?, g(1.0, Picture::Heisenberg)?],
                [g(-1.0, Picture::Schrodinger)?, g(-1.0, Picture::Heisenberg)?],
            ])
        };
        Ok(Self {
            dim: problem.dim(),
            cfg,
            generators: [build(problem)?, build(mixer)?],
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn integrator(&self) -> &IntegratorConfig {
        &self.cfg
    }

    fn generator(&self, tag: GeneratorTag, duration: f64, picture: Picture) -> &SegmentGenerator {
        let t = match tag {
            GeneratorTag::Problem => 0,
            GeneratorTag::Mixer => 1,
        };
        let s = if duration < 0.0 { 1 } else { 0 };
        let p = match picture {
            Picture::Schrodinger => 0,
            Picture::Heisenberg => 1,
        };
        &self.generators[t][s][p]
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim * self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim * self.dim,
                actual: len,
            });
        }
        Ok(())
    }

    /// Evolves a state (row-major buffer) through one step in place.
    pub fn step_state(&self, state: &mut Vec<Complex64>, step: Step) -> Result<()> {
        self.check_dim(state.len())?;
        if step.duration == 0.0 {
            return Ok(());
        }
        if !step.duration.is_finite() {
            return Err(Error::EvaluationFailed(format!("non-finite duration {}", step.duration)));
        }
        self.generator(step.tag, step.duration, Picture::Schrodinger)
            .propagate(state, step.duration.abs(), &self.cfg)
    }

    /// Pulls an observable back through one step in place (dual map).
    pub fn step_observable(&self, obs: &mut Vec<Complex64>, step: Step) -> Result<()> {
        self.check_dim(obs.len())?;
        if step.duration == 0.0 {
            return Ok(());
        }
        if !step.duration.is_finite() {
            return Err(Error::EvaluationFailed(format!("non-finite duration {}", step.duration)));
        }
        self.generator(step.tag, step.duration, Picture::Heisenberg)
            .propagate(obs, step.duration.abs(), &self.cfg)
    }

    pub fn evolve(&self, rho0: &DensityMatrix, schedule: &ControlSchedule) -> Result<DensityMatrix> {
        let mut state = rho0.matrix().as_slice().to_vec();
        for &step in schedule.steps() {
            self.step_state(&mut state, step)?;
        }
        Ok(DensityMatrix(ComplexMatrix::from_vec(self.dim, state)?))
    }
}

/// Evolves `rho` for `duration` under a single Hamiltonian.
pub fn evolve_segment(
    rho: &DensityMatrix,
    h: &Hamiltonian,
    duration: f64,
    noise: &NoiseModel,
    cfg: &IntegratorConfig,
) -> Result<DensityMatrix> {
    if h.dim() != rho.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            actual: h.dim(),
        });
    }
    if !duration.is_finite() {
        return Err(Error::EvaluationFailed(format!("non-finite duration {duration}")));
    }
    if duration == 0.0 {
        return Ok(rho.clone());
    }
    let sign = duration.signum();
    let gen = SegmentGenerator::new(h, noise, sign, Picture::Schrodinger)?;
    let mut state = rho.matrix().as_slice().to_vec();
    gen.propagate(&mut state, duration.abs(), cfg)?;
    Ok(DensityMatrix(ComplexMatrix::from_vec(rho.dim(), state)?))
}

/// Applies every schedule step in execution order, skipping zero durations.
pub fn evolve_schedule(
    rho0: &DensityMatrix,
    schedule: &ControlSchedule,
    problem: &Hamiltonian,
    mixer: &Hamiltonian,
    noise: &NoiseModel,
    cfg: &IntegratorConfig,
) -> Result<DensityMatrix> {
    if problem.dim() != rho0.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho0.dim(),
            actual: problem.dim(),
        });
    }
    Evolver::new(problem, mixer, noise, *cfg)?.evolve(rho0, schedule)
}

/// `tr(O ρ)` for a diagonal observable.
pub fn expectation(obs: &DiagonalObservable, rho: &DensityMatrix) -> Result<f64> {
    if obs.dim() != rho.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            actual: obs.dim(),
        });
    }
    let (mut re, mut im) = (0.0, 0.0);
    for (b, &w) in obs.diagonal().iter().enumerate() {
        let z = rho.matrix()[(b, b)];
        re += w * z.re;
        im += w * z.im;
    }
    if im.abs() > 1e-9 {
        return Err(Error::EvaluationFailed(format!("imaginary expectation residue {im:e}")));
    }
    Ok(re)
}

/// `Re tr(O ρ)` for row-major buffers.
pub(crate) fn trace_product(obs: &[Complex64], state: &[Complex64], dim: usize) -> f64 {
    let mut acc = 0.0;
    for a in 0..dim {
        for b in 0..dim {
            acc += (obs[a * dim + b] * state[b * dim + a]).re;
        }
    }
    acc
}

/// Noiseless state-vector reference path using exact exponentials.
#[derive(Debug, Clone)]
pub struct UnitaryOracle {
    problem: Vec<f64>,
    mixer_eigenvalues: Vec<f64>,
    mixer_eigenvectors: DMatrix<Complex64>,
}

impl UnitaryOracle {
    /// `problem` and `mixer` are taken as given (already scaled).
    pub fn new(problem: &DiagonalObservable, mixer: &ComplexMatrix) -> Result<Self> {
        if problem.dim() != mixer.dim() {
            return Err(Error::DimensionMismatch {
                expected: problem.dim(),
                actual: mixer.dim(),
            });
        }
        let d = mixer.dim();
        let m = DMatrix::from_fn(d, d, |r, c| mixer[(r, c)]);
        let eig = SymmetricEigen::new(m);
        Ok(Self {
            problem: problem.diagonal().to_vec(),
            mixer_eigenvalues: eig.eigenvalues.iter().copied().collect(),
            mixer_eigenvectors: eig.eigenvectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.problem.len()
    }

    pub fn apply(&self, state: &[Complex64], schedule: &ControlSchedule) -> Result<Vec<Complex64>> {
        let d = self.dim();
        if state.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: state.len(),
            });
        }
        let mut psi = nalgebra::DVector::from_column_slice(state);
        for step in schedule.steps() {
            if step.duration == 0.0 {
                continue;
            }
            match step.tag {
                GeneratorTag::Problem => {
                    for (v, &e) in psi.iter_mut().zip(&self.problem) {
                        *v *= (-I * e * step.duration).exp();
                    }
                }
                GeneratorTag::Mixer => {
                    let u = &self.mixer_eigenvectors;
                    let mut coeffs = u.adjoint() * &psi;
                    for (c, &e) in coeffs.iter_mut().zip(&self.mixer_eigenvalues) {
                        *c *= (-I * e * step.duration).exp();
                    }
                    psi = u * coeffs;
                }
            }
        }
        Ok(psi.iter().copied().collect())
    }

    /// `⟨ψ|O|ψ⟩` for a diagonal observable.
    pub fn expectation(obs: &DiagonalObservable, psi: &[Complex64]) -> f64 {
        obs.diagonal().iter().zip(psi).map(|(w, z)| w * z.norm_sqr()).sum()
    }
}

/// Standalone entry point mirroring [`UnitaryOracle::apply`].
pub fn unitary_oracle(
    state: &[Complex64],
    schedule: &ControlSchedule,
    problem: &DiagonalObservable,
    mixer: &ComplexMatrix,
) -> Result<Vec<Complex64>> {
    UnitaryOracle::new(problem, mixer)?.apply(state, schedule)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{build_maxcut_hamiltonian, build_mixer};
    use crate::problems::random_graph;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn random_state(n: usize, rng: &mut ChaCha8Rng) -> DensityMatrix {
        // mixture of two random pure states
        let d = 1 << n;
        let mut m = ComplexMatrix::zeros(d);
        for w in [0.7, 0.3] {
            let v: Vec<Complex64> = (0..d)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let v: Vec<_> = v.iter().map(|z| z / norm).collect();
            m = m.add(&ComplexMatrix::outer(&v).unwrap().scale(c(w))).unwrap();
        }
        DensityMatrix::from_matrix(m)
    }

    #[test]
    fn plus_state() {
        let r1 = initial_plus_state(1).unwrap();
        assert!(r1.matrix().as_slice().iter().all(|&z| z == c(0.5)));
        let r2 = initial_plus_state(2).unwrap();
        assert!(r2.matrix().as_slice().iter().all(|&z| z == c(0.25)));
        for n in 1..=5 {
            assert!((initial_plus_state(n).unwrap().purity() - 1.0).abs() < 1e-12);
        }
        assert!(initial_plus_state(13).is_err());
    }

    #[test]
    fn rhs_commuting_case_is_zero() {
        let g = random_graph(3, 3, (0.1, 1.0), 1).unwrap();
        let h = build_maxcut_hamiltonian(&g).unwrap().to_dense().unwrap();
        let rho = ComplexMatrix::from_diagonal(&[0.1, 0.2, 0.05, 0.15, 0.1, 0.1, 0.2, 0.1]).unwrap();
        let out = lindblad_rhs(&rho, &h, &[]).unwrap();
        assert!(out.as_slice().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn rhs_is_traceless() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in [NoiseKind::None, NoiseKind::Relaxation, NoiseKind::Dephasing] {
            let rho = random_state(3, &mut rng);
            let noise = build_noise_operators(&NoiseModel::new(kind, 0.3).unwrap(), 3).unwrap();
            let h = build_mixer(3).unwrap();
            let out = lindblad_rhs(rho.matrix(), &h, &noise).unwrap();
            assert!(out.trace().norm() < 1e-12);
        }
    }

    #[test]
    fn rhs_dephasing_coherence_rate() {
        let gamma = 0.37;
        let rho = ComplexMatrix::from_vec(2, vec![c(0.6), Complex64::new(0.2, 0.1), Complex64::new(0.2, -0.1), c(0.4)])
            .unwrap();
        let out = lindblad_rhs(&rho, &ComplexMatrix::zeros(2), &[(pauli(Pauli::Z), gamma)]).unwrap();
        assert!((out[(0, 1)] - rho[(0, 1)] * (-2.0 * gamma)).norm() < 1e-15);
        assert_eq!(out[(0, 0)], ZERO);
    }

    #[test]
    fn rhs_dimension_mismatch() {
        assert!(lindblad_rhs(&ComplexMatrix::zeros(2), &ComplexMatrix::zeros(4), &[]).is_err());
    }

    /// The structured kernels must agree with the dense reference.
    #[test]
    fn structured_generator_matches_dense_rhs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 3;
        let g = random_graph(n, 3, (0.1, 1.0), 2).unwrap();
        let cost = build_maxcut_hamiltonian(&g).unwrap().scaled(1.7);
        let hams = [
            Hamiltonian::Diagonal(cost.clone()),
            Hamiltonian::TransverseField {
                n_qubits: n,
                strength: 1.3,
            },
            Hamiltonian::Dense(build_mixer(n).unwrap().add(&cost.to_dense().unwrap()).unwrap()),
        ];
        for h in &hams {
            for kind in [NoiseKind::None, NoiseKind::Relaxation, NoiseKind::Dephasing] {
                let noise = NoiseModel::new(kind, 0.45).unwrap();
                let ops = build_noise_operators(&noise, n).unwrap();
                for sign in [1.0, -1.0] {
                    let rho = random_state(n, &mut rng);
                    let hd = h.to_dense().unwrap().scale(c(sign));
                    let dense = lindblad_rhs(rho.matrix(), &hd, &ops).unwrap();
                    let gen = SegmentGenerator::new(h, &noise, sign, Picture::Schrodinger).unwrap();
                    let fast = ComplexMatrix::from_vec(8, gen.rhs(rho.matrix().as_slice())).unwrap();
                    assert!(fast.max_abs_diff(&dense).unwrap() < 1e-12, "{kind:?} {sign}");

                    // dual generator: tr(O L(ρ)) = tr(L†(O) ρ)
                    let obs = random_state(n, &mut rng);
                    let dual = SegmentGenerator::new(h, &noise, sign, Picture::Heisenberg).unwrap();
                    let lhs = trace_product(obs.matrix().as_slice(), dense.as_slice(), 8);
                    let rhs = trace_product(&dual.rhs(obs.matrix().as_slice()), rho.matrix().as_slice(), 8);
                    assert!((lhs - rhs).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_duration_is_identity() {
        let rho = initial_plus_state(2).unwrap();
        let h = Hamiltonian::mixer(2, Default::default()).unwrap();
        let out = evolve_segment(&rho, &h, 0.0, &NoiseModel::relaxation(0.2).unwrap(), &Default::default()).unwrap();
        assert_eq!(out, rho);
    }

    #[test]
    fn rabi_population() {
        let rho0 = DensityMatrix::basis(2, 1).unwrap(); // |0⟩ = (0, 1)ᵀ
        let h = Hamiltonian::Dense(pauli(Pauli::X));
        for t in [0.1, 0.5, 1.3, 2.0] {
            let out = evolve_segment(&rho0, &h, t, &NoiseModel::none(), &Default::default()).unwrap();
            let pop1 = out.matrix()[(0, 0)].re;
            assert!((pop1 - t.sin().powi(2)).abs() < 1e-6, "t={t}");
        }
    }

    #[test]
    fn dephasing_coherence_decay() {
        let rho0 = initial_plus_state(1).unwrap();
        let h = Hamiltonian::Dense(ComplexMatrix::zeros(2));
        for gamma in [0.2, 0.4] {
            for t in [0.3, 1.0, 2.5] {
                let noise = NoiseModel::dephasing(gamma).unwrap();
                let out = evolve_segment(&rho0, &h, t, &noise, &Default::default()).unwrap();
                let expected = 0.5 * (-2.0 * gamma * t).exp();
                assert!((out.matrix()[(0, 1)].re - expected).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn relaxation_drains_toward_set_bit() {
        // σ_- moves matrix index 0 to 1
        let rho0 = DensityMatrix::basis(2, 0).unwrap();
        let h = Hamiltonian::Dense(ComplexMatrix::zeros(2));
        let out = evolve_segment(&rho0, &h, 1.0, &NoiseModel::relaxation(0.5).unwrap(), &Default::default()).unwrap();
        assert!((out.matrix()[(0, 0)].re - (-0.5f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn purity_decays_monotonically_under_dephasing() {
        let n = 2;
        let mut rho = initial_plus_state(n).unwrap();
        let h = Hamiltonian::Diagonal(DiagonalObservable::new(vec![0.0; 4]).unwrap());
        let noise = NoiseModel::dephasing(0.4).unwrap();
        let mut last = rho.purity();
        for _ in 0..20 {
            rho = evolve_segment(&rho, &h, 0.05, &noise, &Default::default()).unwrap();
            let p = rho.purity();
            assert!(p <= last + 1e-14);
            last = p;
        }
        assert!(last < 0.5);
    }

    #[test]
    fn oracle_sigma_x_rotation() {
        let obs = DiagonalObservable::new(vec![0.0, 0.0]).unwrap();
        let oracle = UnitaryOracle::new(&obs, &pauli(Pauli::X)).unwrap();
        let schedule = ControlSchedule::from_steps(vec![Step::new(GeneratorTag::Mixer, std::f64::consts::FRAC_PI_2)]);
        let out = oracle.apply(&[ZERO, c(1.0)], &schedule).unwrap();
        // e^{-iσ_x π/2} = -iσ_x
        assert!((out[0] - Complex64::new(0.0, -1.0)).norm() < 1e-12);
        assert!(out[1].norm() < 1e-12);
    }

    #[test]
    fn oracle_empty_schedule_and_norm() {
        let g = random_graph(3, 3, (0.1, 1.0), 4).unwrap();
        let cost = build_maxcut_hamiltonian(&g).unwrap();
        let oracle = UnitaryOracle::new(&cost, &build_mixer(3).unwrap()).unwrap();
        let psi = plus_state_vector(3).unwrap();
        assert_eq!(oracle.apply(&psi, &ControlSchedule::default()).unwrap(), psi);
        let out = oracle.apply(&psi, &ControlSchedule::qaoa(&[0.4, -1.2, 2.0, 0.3]).unwrap()).unwrap();
        let norm: f64 = out.iter().map(|z| z.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn expectation_examples() {
        let g = random_graph(4, 5, (0.1, 1.0), 8).unwrap();
        let cost = build_maxcut_hamiltonian(&g).unwrap();
        assert!(expectation(&cost, &initial_plus_state(4).unwrap()).unwrap().abs() < 1e-12);

        let ones = DiagonalObservable::new(vec![1.0; 16]).unwrap();
        assert!((expectation(&ones, &initial_plus_state(4).unwrap()).unwrap() - 1.0).abs() < 1e-12);

        let point = DensityMatrix::basis(16, 5).unwrap();
        assert_eq!(expectation(&cost, &point).unwrap(), cost.diagonal()[5]);

        assert!(expectation(&ones, &initial_plus_state(3).unwrap()).is_err());
    }

    #[test]
    fn schedule_all_zero_returns_input() {
        let n = 3;
        let g = random_graph(n, 3, (0.1, 1.0), 4).unwrap();
        let cost = build_maxcut_hamiltonian(&g).unwrap();
        let rho0 = initial_plus_state(n).unwrap();
        let out = evolve_schedule(
            &rho0,
            &ControlSchedule::uniform(3, 0.0),
            &Hamiltonian::problem(&cost, Default::default()),
            &Hamiltonian::mixer(n, Default::default()).unwrap(),
            &NoiseModel::relaxation(0.5).unwrap(),
            &Default::default(),
        )
        .unwrap();
        assert_eq!(out, rho0);
    }

    #[test]
    fn p1_objective_matches_state_vector() {
        let n = 4;
        let g = random_graph(n, 5, (0.1, 1.0), 21).unwrap();
        let cost = build_maxcut_hamiltonian(&g).unwrap();
        let schedule = ControlSchedule::qaoa(&[0.13, 0.27]).unwrap();
        let rho = evolve_schedule(
            &initial_plus_state(n).unwrap(),
            &schedule,
            &Hamiltonian::Diagonal(cost.clone()),
            &Hamiltonian::mixer(n, crate::operators::ScaleFactor::new(1.0).unwrap()).unwrap(),
            &NoiseModel::none(),
            &Default::default(),
        )
        .unwrap();
        // direct state vector: phases then Π_k (cos β I - i sin β σ_x^k)
        let d = 1 << n;
        let (gamma, beta): (f64, f64) = (0.13, 0.27);
        let mut psi: Vec<Complex64> = (0..d)
            .map(|b| (-I * cost.diagonal()[b] * gamma).exp() / (d as f64).sqrt())
            .collect();
        for k in 0..n {
            let s = 1 << k;
            let old = psi.clone();
            for b in 0..d {
                psi[b] = old[b] * beta.cos() - I * beta.sin() * old[b ^ s];
            }
        }
        let direct: f64 = UnitaryOracle::expectation(&cost, &psi);
        assert!((expectation(&cost, &rho).unwrap() - direct).abs() < 1e-9);
    }

    #[test]
    fn negative_duration_reverses_noiseless_evolution() {
        let n = 2;
        let rho0 = initial_plus_state(n).unwrap();
        let h = Hamiltonian::Dense(build_mixer(n).unwrap().add(&ComplexMatrix::from_diagonal(&[1.0, -0.5, 0.3, 0.2]).unwrap()).unwrap());
        let cfg = IntegratorConfig::default();
        let fwd = evolve_segment(&rho0, &h, 0.4, &NoiseModel::none(), &cfg).unwrap();
        let back = evolve_segment(&fwd, &h, -0.4, &NoiseModel::none(), &cfg).unwrap();
        assert!(back.matrix().max_abs_diff(rho0.matrix()).unwrap() < 1e-10);
    }

    #[test]
    fn negative_duration_under_noise_still_dissipates() {
        let rho0 = initial_plus_state(1).unwrap();
        let h = Hamiltonian::Dense(ComplexMatrix::zeros(2));
        let noise = NoiseModel::dephasing(0.3).unwrap();
        let out = evolve_segment(&rho0, &h, -1.0, &noise, &Default::default()).unwrap();
        assert!((out.matrix()[(0, 1)].re - 0.5 * (-0.6f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn factorized_matches_rk4() {
        let n = 3;
        let g = random_graph(n, 3, (0.1, 1.0), 6).unwrap();
        let cost = build_maxcut_hamiltonian(&g).unwrap();
        let scale = crate::operators::ScaleFactor::default();
        let problem = Hamiltonian::problem(&cost, scale);
        let mixer = Hamiltonian::mixer(n, scale).unwrap();
        let rk4 = IntegratorConfig::default();
        let fact = rk4.with_method(IntegrationMethod::Factorized);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for kind in [NoiseKind::None, NoiseKind::Relaxation, NoiseKind::Dephasing] {
            let noise = NoiseModel::new(kind, 0.5).unwrap();
            let a = Evolver::new(&problem, &mixer, &noise, rk4).unwrap();
            let b = Evolver::new(&problem, &mixer, &noise, fact).unwrap();
            let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-0.3..0.3)).collect();
            let schedule = ControlSchedule::qaoa(&x).unwrap();
            let rho0 = random_state(n, &mut rng);
            let ra = a.evolve(&rho0, &schedule).unwrap();
            let rb = b.evolve(&rho0, &schedule).unwrap();
            let diff = ra.matrix().max_abs_diff(rb.matrix()).unwrap();
            // RK4 truncation error at the default step
            assert!(diff < 1e-6, "{kind:?}: {diff:e}");
            if kind == NoiseKind::None {
                let oracle = UnitaryOracle::new(&cost.scaled(6.0), &build_mixer(n).unwrap().scale(Complex64::new(6.0, 0.0))).unwrap();
                let psi = oracle.apply(&plus_state_vector(n).unwrap(), &schedule).unwrap();
                let exact = DensityMatrix::from_pure(&psi).unwrap();
                let plus = initial_plus_state(n).unwrap();
                let rb = b.evolve(&plus, &schedule).unwrap();
                assert!(rb.matrix().max_abs_diff(exact.matrix()).unwrap() < 1e-11);
            }

            let mut oa = random_state(n, &mut rng).into_matrix().into_vec();
            let mut ob = oa.clone();
            for &step in schedule.steps().iter().rev() {
                a.step_observable(&mut oa, step).unwrap();
                b.step_observable(&mut ob, step).unwrap();
            }
            let diff = oa.iter().zip(&ob).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            assert!(diff < 1e-6, "{kind:?} adjoint: {diff:e}");
        }
    }

    #[test]
    fn heisenberg_duality_holds_for_schedules() {
        let n = 3;
        let g = random_graph(n, 3, (0.1, 1.0), 6).unwrap();
        let cost = build_maxcut_hamiltonian(&g).unwrap();
        let scale = crate::operators::ScaleFactor::default();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for method in [IntegrationMethod::Rk4, IntegrationMethod::Factorized] {
            let cfg = IntegratorConfig::default().with_method(method);
            let ev = Evolver::new(
                &Hamiltonian::problem(&cost, scale),
                &Hamiltonian::mixer(n, scale).unwrap(),
                &NoiseModel::relaxation(0.3).unwrap(),
                cfg,
            )
            .unwrap();
            let schedule = ControlSchedule::qaoa(&[0.1, 0.2, -0.05, 0.15]).unwrap();
            let rho0 = random_state(n, &mut rng);
            let obs = random_state(n, &mut rng).into_matrix();
            let rho = ev.evolve(&rho0, &schedule).unwrap();
            let mut o = obs.as_slice().to_vec();
            for &step in schedule.steps().iter().rev() {
                ev.step_observable(&mut o, step).unwrap();
            }
            let lhs = trace_product(obs.as_slice(), rho.matrix().as_slice(), 8);
            let rhs = trace_product(&o, rho0.matrix().as_slice(), 8);
            assert!((lhs - rhs).abs() < 1e-12, "{method:?}");
        }
    }

    #[test]
    fn halving_the_step_cuts_error_by_at_least_eight() {
        let rho0 = DensityMatrix::basis(2, 1).unwrap();
        let h = Hamiltonian::Dense(pauli(Pauli::X).add(&pauli(Pauli::Z)).unwrap());
        let noise = NoiseModel::relaxation(0.3).unwrap();
        let run = |dt: f64| evolve_segment(&rho0, &h, 1.2, &noise, &IntegratorConfig::new(dt).unwrap()).unwrap();
        let reference = run(1e-4);
        let coarse = run(0.1).matrix().max_abs_diff(reference.matrix()).unwrap();
        let fine = run(0.05).matrix().max_abs_diff(reference.matrix()).unwrap();
        assert!(coarse / fine >= 8.0, "{coarse:e} / {fine:e}");
    }

    #[test]
    fn substep_count() {
        let cfg = IntegratorConfig::new(0.1).unwrap();
        assert_eq!(cfg.substeps(0.25), 3);
        assert_eq!(cfg.substeps(-0.3), 3);
        assert!(IntegratorConfig::new(0.0).is_err());
    }
}
