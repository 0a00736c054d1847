//! A Max-Cut instance bound to a noise model and integrator, and the
//! objective `x ↦ tr(H_o ρ(x))` over a fixed sequence of generator tags.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::dynamics::{
    initial_plus_state, trace_product, ControlSchedule, DensityMatrix, Evolver, GeneratorTag, IntegratorConfig,
    Step, UnitaryOracle,
};
use crate::error::{Error, Result};
use crate::operators::{
    build_maxcut_hamiltonian, build_mixer, DiagonalObservable, Hamiltonian, NoiseModel, ScaleFactor,
};
use crate::optimizer::{check_finite_value, Objective};
use crate::problems::Graph;
use crate::selection::{approximation_ratio, brute_force_extrema, CutExtrema};

#[derive(Debug, Clone)]
pub struct QaoaInstance {
    graph: Graph,
    cost: DiagonalObservable,
    extrema: CutExtrema,
    scale: ScaleFactor,
    noise: NoiseModel,
    evolver: Evolver,
    initial: DensityMatrix,
}

impl QaoaInstance {
    /// Both generators are multiplied by `scale` for the dynamics; the
    /// measured observable is the unscaled cost Hamiltonian. The integrator
    /// step is in scaled time, so a duration `x` takes `scale·|x| / dt` steps.
    pub fn new(graph: Graph, noise: NoiseModel, scale: ScaleFactor, integrator: IntegratorConfig) -> Result<Self> {
        let n = graph.n_nodes();
        let cost = build_maxcut_hamiltonian(&graph)?;
        let extrema = brute_force_extrema(&graph)?;
        let problem = Hamiltonian::problem(&cost, scale);
        let mixer = Hamiltonian::mixer(n, scale)?;
        let scaled_step = IntegratorConfig::new(integrator.step() / scale.value())?.with_method(integrator.method());
        let evolver = Evolver::new(&problem, &mixer, &noise, scaled_step)?;
        let initial = initial_plus_state(n)?;
        Ok(Self {
            graph,
            cost,
            extrema,
            scale,
            noise,
            evolver,
            initial,
        })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn cost(&self) -> &DiagonalObservable {
        &self.cost
    }

    pub fn extrema(&self) -> &CutExtrema {
        &self.extrema
    }

    pub fn scale(&self) -> ScaleFactor {
        self.scale
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn n_qubits(&self) -> usize {
        self.graph.n_nodes()
    }

    pub fn evolve(&self, schedule: &ControlSchedule) -> Result<DensityMatrix> {
        self.evolver.evolve(&self.initial, schedule)
    }

    /// `tr(H_o ρ)` after running `schedule` from `|s⟩⟨s|`.
    pub fn energy(&self, schedule: &ControlSchedule) -> Result<f64> {
        let rho = self.evolve(schedule)?;
        check_finite_value(crate::dynamics::expectation(&self.cost, &rho)?, "energy")
    }

    pub fn ratio(&self, energy: f64) -> Result<f64> {
        approximation_ratio(energy, &self.extrema)
    }

    /// Objective over durations laid out on `tags`.
    pub fn objective(&self, tags: Vec<GeneratorTag>) -> QaoaObjective<'_> {
        QaoaObjective { instance: self, tags }
    }

    /// Standard alternating objective over `2p` parameters.
    pub fn qaoa_objective(&self, p: usize) -> QaoaObjective<'_> {
        self.objective(crate::dynamics::qaoa_tags(p))
    }

    /// Exact noiseless reference with the same scaled generators.
    pub fn oracle(&self) -> Result<UnitaryOracle> {
        let mixer = build_mixer(self.n_qubits())?.scale(Complex64::new(self.scale.value(), 0.0));
        UnitaryOracle::new(&self.cost.scaled(self.scale.value()), &mixer)
    }
}

#[derive(Debug, Clone)]
pub struct QaoaObjective<'a> {
    instance: &'a QaoaInstance,
    tags: Vec<GeneratorTag>,
}

impl QaoaObjective<'_> {
    pub fn tags(&self) -> &[GeneratorTag] {
        &self.tags
    }

    pub fn schedule(&self, x: &[f64]) -> Result<ControlSchedule> {
        ControlSchedule::with_tags(&self.tags, x)
    }

    fn observable_buffer(&self) -> Vec<Complex64> {
        let d = self.instance.cost.dim();
        let mut obs = vec![Complex64::new(0.0, 0.0); d * d];
        for (b, &w) in self.instance.cost.diagonal().iter().enumerate() {
            obs[b * d + b] = Complex64::new(w, 0.0);
        }
        obs
    }
}

impl Objective for QaoaObjective<'_> {
    fn value(&self, x: &[f64]) -> Result<f64> {
        self.instance.energy(&self.schedule(x)?)
    }

    /// Same central differences as `fd_gradient`, but each perturbed
    /// evaluation only re-integrates the perturbed segment: the state before
    /// it comes from one forward pass and the observable after it from one
    /// backward (dual) pass, using `tr(O Φ(ρ)) = tr(Φ†(O) ρ)`.
    fn value_and_gradient(&self, x: &[f64], epsilon: f64) -> Result<(f64, Vec<f64>)> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!("epsilon must be positive, got {epsilon}")));
        }
        let schedule = self.schedule(x)?;
        let steps = schedule.steps();
        let evolver = &self.instance.evolver;
        let d = evolver.dim();

        let mut before = Vec::with_capacity(steps.len());
        let mut state = self.instance.initial.matrix().as_slice().to_vec();
        for &step in steps {
            before.push(state.clone());
            evolver.step_state(&mut state, step)?;
        }
        let obs_final = self.observable_buffer();
        let value = check_finite_value(trace_product(&obs_final, &state, d), "objective")?;

        let mut after = vec![Vec::new(); steps.len()];
        let mut obs = obs_final;
        for (i, &step) in steps.iter().enumerate().rev() {
            after[i] = obs.clone();
            evolver.step_observable(&mut obs, step)?;
        }

        let gradient = (0..steps.len())
            .into_par_iter()
            .map(|i| {
                let eval = |duration: f64| -> Result<f64> {
                    let mut s = before[i].clone();
                    evolver.step_state(&mut s, Step::new(steps[i].tag, duration))?;
                    check_finite_value(trace_product(&after[i], &s, d), "objective")
                };
                let plus = eval(x[i] + epsilon)?;
                let minus = eval(x[i] - epsilon)?;
                Ok((plus - minus) / (2.0 * epsilon))
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok((value, gradient))
    }
}
