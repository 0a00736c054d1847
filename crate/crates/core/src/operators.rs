//! Dense operators on `n` qubits.
//!
//! Basis convention: bit `k` of a basis index (least significant bit =
//! qubit 0) is the matrix index of qubit `k`. Matrix index 0 is the `+1`
//! eigenvector of `σ_z = diag(1, -1)`, so the spin read from bit `k` is
//! `+1` for a cleared bit and `-1` for a set bit. In Kronecker order qubit 0
//! is the rightmost factor.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::problems::Graph;

/// Hard cap for dense `2^N x 2^N` matrices.
pub const MAX_DENSE_QUBITS: usize = 12;

/// Cap for real diagonals and exhaustive enumeration.
pub const MAX_ENUMERATION_QUBITS: usize = 24;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Spin value `±1` of qubit `k` in basis state `b`.
#[inline]
pub fn spin(b: usize, k: usize) -> f64 {
    if (b >> k) & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

pub(crate) fn check_qubits(n_qubits: usize, limit: usize) -> Result<()> {
    if n_qubits == 0 {
        return Err(Error::InvalidConfig("at least one qubit is required".into()));
    }
    if n_qubits > limit {
        return Err(Error::TooManyQubits {
            requested: n_qubits,
            limit,
        });
    }
    Ok(())
}

/// Square dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = ONE;
        }
        m
    }

    /// Builds a matrix from row-major data. `dim` must be a power of two.
    pub fn from_vec(dim: usize, data: Vec<Complex64>) -> Result<Self> {
        if !dim.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(dim));
        }
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                actual: data.len(),
            });
        }
        Ok(Self { dim, data })
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            data.extend(row.iter().map(|&v| Complex64::new(v, 0.0)));
        }
        Self::from_vec(dim, data)
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        let dim = diag.len();
        let mut data = vec![ZERO; dim * dim];
        for (i, &v) in diag.iter().enumerate() {
            data[i * dim + i] = Complex64::new(v, 0.0);
        }
        Self::from_vec(dim, data)
    }

    /// Outer product `|ψ⟩⟨ψ|`.
    pub fn outer(state: &[Complex64]) -> Result<Self> {
        let dim = state.len();
        let mut data = Vec::with_capacity(dim * dim);
        for a in state {
            for b in state {
                data.push(a * b.conj());
            }
        }
        Self::from_vec(dim, data)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn adjoint(&self) -> Self {
        let d = self.dim;
        let mut out = Self::zeros(d);
        for a in 0..d {
            for b in 0..d {
                out[(b, a)] = self[(a, b)].conj();
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        self.check_same_dim(rhs)?;
        let d = self.dim;
        let mut out = Self::zeros(d);
        for a in 0..d {
            for c in 0..d {
                let l = self[(a, c)];
                if l == ZERO {
                    continue;
                }
                let row = &rhs.data[c * d..(c + 1) * d];
                let dst = &mut out.data[a * d..(a + 1) * d];
                for (o, r) in dst.iter_mut().zip(row) {
                    *o += l * r;
                }
            }
        }
        Ok(out)
    }

    pub fn kron(&self, rhs: &Self) -> Self {
        let (m, n) = (self.dim, rhs.dim);
        let d = m * n;
        let mut out = Self::zeros(d);
        for a in 0..m {
            for b in 0..m {
                let s = self[(a, b)];
                if s == ZERO {
                    continue;
                }
                for c in 0..n {
                    for e in 0..n {
                        out[(a * n + c, b * n + e)] = s * rhs[(c, e)];
                    }
                }
            }
        }
        out
    }

    pub fn add(&self, rhs: &Self) -> Result<Self> {
        self.check_same_dim(rhs)?;
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect();
        Ok(Self {
            dim: self.dim,
            data,
        })
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn max_abs_diff(&self, rhs: &Self) -> Result<f64> {
        self.check_same_dim(rhs)?;
        Ok(self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    /// `max |M - M†|`.
    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim;
        let mut worst = 0.0f64;
        for a in 0..d {
            for b in a..d {
                worst = worst.max((self[(a, b)] - self[(b, a)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    pub fn apply(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: v.len(),
            });
        }
        let d = self.dim;
        Ok((0..d)
            .map(|a| {
                self.data[a * d..(a + 1) * d]
                    .iter()
                    .zip(v)
                    .map(|(m, x)| m * x)
                    .sum()
            })
            .collect())
    }

    fn check_same_dim(&self, rhs: &Self) -> Result<()> {
        if self.dim != rhs.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: rhs.dim,
            });
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.dim + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.dim + c]
    }
}

/// Real observable that is diagonal in the computational basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalObservable {
    diagonal: Vec<f64>,
}

impl DiagonalObservable {
    pub fn new(diagonal: Vec<f64>) -> Result<Self> {
        if !diagonal.len().is_power_of_two() {
            return Err(Error::NotPowerOfTwo(diagonal.len()));
        }
        Ok(Self { diagonal })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    #[inline]
    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            diagonal: self.diagonal.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn min(&self) -> f64 {
        self.diagonal.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.diagonal.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_dense(&self) -> Result<ComplexMatrix> {
        ComplexMatrix::from_diagonal(&self.diagonal)
    }
}

/// Multiplier applied to both the problem and mixer Hamiltonians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleFactor(f64);

impl ScaleFactor {
    pub fn new(value: f64) -> Result<Self> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "scale factor must be positive, got {value}"
            )));
        }
        Ok(Self(value))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for ScaleFactor {
    fn default() -> Self {
        Self(6.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pauli {
    Z,
    X,
    /// Lowering operator `[[0, 0], [1, 0]]`.
    Minus,
}

pub fn pauli(kind: Pauli) -> ComplexMatrix {
    let rows: [[f64; 2]; 2] = match kind {
        Pauli::Z => [[1.0, 0.0], [0.0, -1.0]],
        Pauli::X => [[0.0, 1.0], [1.0, 0.0]],
        Pauli::Minus => [[0.0, 0.0], [1.0, 0.0]],
    };
    ComplexMatrix::from_real_rows(&[&rows[0], &rows[1]]).expect("2x2 literal")
}

/// `I ⊗ … ⊗ op ⊗ … ⊗ I` with `op` acting on bit `qubit` of the basis index.
pub fn embed_single_qubit(op: &ComplexMatrix, qubit: usize, n_qubits: usize) -> Result<ComplexMatrix> {
    check_qubits(n_qubits, MAX_DENSE_QUBITS)?;
    if op.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            actual: op.dim(),
        });
    }
    if qubit >= n_qubits {
        return Err(Error::QubitOutOfRange { qubit, n_qubits });
    }
    let d = 1usize << n_qubits;
    let mask = 1usize << qubit;
    let mut out = ComplexMatrix::zeros(d);
    for a in 0..d {
        let rest = a & !mask;
        let ra = (a >> qubit) & 1;
        for rb in 0..2 {
            let v = op[(ra, rb)];
            if v != ZERO {
                out[(a, rest | (rb << qubit))] = v;
            }
        }
    }
    Ok(out)
}

/// Diagonal of `Σ_(i,j) ω_ij σ_z^i σ_z^j`.
pub fn build_maxcut_hamiltonian(graph: &Graph) -> Result<DiagonalObservable> {
    let n = graph.n_nodes();
    check_qubits(n, MAX_ENUMERATION_QUBITS)?;
    let d = 1usize << n;
    let mut diag = vec![0.0; d];
    for e in graph.edges() {
        let w = e.weight;
        for (b, v) in diag.iter_mut().enumerate() {
            // spins agree iff the two bits are equal
            if ((b >> e.i) ^ (b >> e.j)) & 1 == 0 {
                *v += w;
            } else {
                *v -= w;
            }
        }
    }
    DiagonalObservable::new(diag)
}

/// `Σ_n σ_x^(n)` as a dense matrix.
pub fn build_mixer(n_qubits: usize) -> Result<ComplexMatrix> {
    check_qubits(n_qubits, MAX_DENSE_QUBITS)?;
    let d = 1usize << n_qubits;
    let mut out = ComplexMatrix::zeros(d);
    for a in 0..d {
        for k in 0..n_qubits {
            out[(a, a ^ (1 << k))] = ONE;
        }
    }
    Ok(out)
}

/// Hamiltonian in the form used by the evolution kernels.
#[derive(Debug, Clone, PartialEq)]
pub enum Hamiltonian {
    Dense(ComplexMatrix),
    Diagonal(DiagonalObservable),
    /// `strength · Σ_n σ_x^(n)`.
    TransverseField { n_qubits: usize, strength: f64 },
}

impl Hamiltonian {
    pub fn mixer(n_qubits: usize, scale: ScaleFactor) -> Result<Self> {
        check_qubits(n_qubits, MAX_DENSE_QUBITS)?;
        Ok(Hamiltonian::TransverseField {
            n_qubits,
            strength: scale.value(),
        })
    }

    pub fn problem(cost: &DiagonalObservable, scale: ScaleFactor) -> Self {
        Hamiltonian::Diagonal(cost.scaled(scale.value()))
    }

    pub fn dim(&self) -> usize {
        match self {
            Hamiltonian::Dense(m) => m.dim(),
            Hamiltonian::Diagonal(d) => d.dim(),
            Hamiltonian::TransverseField { n_qubits, .. } => 1 << n_qubits,
        }
    }

    pub fn to_dense(&self) -> Result<ComplexMatrix> {
        match self {
            Hamiltonian::Dense(m) => Ok(m.clone()),
            Hamiltonian::Diagonal(d) => d.to_dense(),
            Hamiltonian::TransverseField { n_qubits, strength } => {
                Ok(build_mixer(*n_qubits)?.scale(Complex64::new(*strength, 0.0)))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseKind {
    None,
    /// Amplitude damping through `σ_-`.
    Relaxation,
    /// Pure dephasing through `σ_z`.
    Dephasing,
}

impl NoiseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseKind::None => "none",
            NoiseKind::Relaxation => "relaxation",
            NoiseKind::Dephasing => "dephasing",
        }
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(NoiseKind::None),
            "relaxation" => Ok(NoiseKind::Relaxation),
            "dephasing" => Ok(NoiseKind::Dephasing),
            other => Err(Error::InvalidConfig(format!("unknown noise kind '{other}'"))),
        }
    }
}

/// Uniform per-qubit Lindblad channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    kind: NoiseKind,
    coupling: f64,
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, coupling: f64) -> Result<Self> {
        if !(coupling.is_finite() && coupling >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "coupling must be nonnegative, got {coupling}"
            )));
        }
        Ok(Self { kind, coupling })
    }

    pub fn none() -> Self {
        Self {
            kind: NoiseKind::None,
            coupling: 0.0,
        }
    }

    pub fn relaxation(coupling: f64) -> Result<Self> {
        Self::new(NoiseKind::Relaxation, coupling)
    }

    pub fn dephasing(coupling: f64) -> Result<Self> {
        Self::new(NoiseKind::Dephasing, coupling)
    }

    #[inline]
    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    #[inline]
    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    /// True when the evolution is exactly unitary.
    pub fn is_noiseless(&self) -> bool {
        self.kind == NoiseKind::None || self.coupling == 0.0
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::none()
    }
}

/// Embedded per-qubit jump operators, each paired with the coupling.
pub fn build_noise_operators(model: &NoiseModel, n_qubits: usize) -> Result<Vec<(ComplexMatrix, f64)>> {
    let single = match model.kind() {
        NoiseKind::None => return Ok(Vec::new()),
        NoiseKind::Relaxation => pauli(Pauli::Minus),
        NoiseKind::Dephasing => pauli(Pauli::Z),
    };
    (0..n_qubits)
        .map(|k| Ok((embed_single_qubit(&single, k, n_qubits)?, model.coupling())))
        .collect()
}
