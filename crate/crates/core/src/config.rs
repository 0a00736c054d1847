//! Run configuration: defaults, flat `key = value` files, overrides, and the
//! canonical text form that is hashed and persisted next to every output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::dynamics::{IntegrationMethod, IntegratorConfig};
use crate::error::{Error, Result};
use crate::operators::{NoiseKind, NoiseModel, ScaleFactor};
use crate::optimizer::OptimizerConfig;
use crate::problems::{parse_graph, random_graph, serialize_graph, Graph};
use crate::selection::LambdaSchedule;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Graph file; when absent the graph is generated from `seed`.
    pub graph: Option<PathBuf>,
    pub nodes: usize,
    pub edges: usize,
    pub weight_min: f64,
    pub weight_max: f64,
    pub seed: u64,
    pub noise: NoiseKind,
    pub coupling: f64,
    /// Largest depth; sweeps start from `2p` parameters.
    pub p: usize,
    /// Smallest depth of the baseline ladder.
    pub p_min: usize,
    pub x0: f64,
    pub scale: f64,
    pub eta: f64,
    pub epsilon: f64,
    pub iters: usize,
    pub hybrid_pg: usize,
    pub hybrid_gd: usize,
    pub lambda_init: f64,
    pub lambda_factor: f64,
    pub rounds: usize,
    pub plateau_tol: f64,
    pub dt: f64,
    pub integrator: IntegrationMethod,
    pub out: PathBuf,
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let opt = OptimizerConfig::default();
        let lam = LambdaSchedule::default();
        Self {
            graph: None,
            nodes: 5,
            edges: 8,
            weight_min: 0.1,
            weight_max: 1.0,
            seed: 1,
            noise: NoiseKind::Relaxation,
            coupling: 0.2,
            p: 8,
            p_min: 1,
            x0: 0.1,
            scale: ScaleFactor::default().value(),
            eta: opt.eta,
            epsilon: opt.epsilon,
            iters: opt.iterations,
            hybrid_pg: 200,
            hybrid_gd: 100,
            lambda_init: lam.initial,
            lambda_factor: lam.factor,
            rounds: lam.max_rounds,
            plateau_tol: lam.plateau_tol,
            dt: IntegratorConfig::default().step(),
            integrator: IntegrationMethod::Rk4,
            out: PathBuf::from("out"),
            jobs: 1,
        }
    }
}

/// Every accepted key, in canonical order.
pub const KEYS: &[&str] = &[
    "graph",
    "nodes",
    "edges",
    "weight-min",
    "weight-max",
    "seed",
    "noise",
    "coupling",
    "p",
    "p-min",
    "x0",
    "scale",
    "eta",
    "epsilon",
    "iters",
    "hybrid-pg",
    "hybrid-gd",
    "lambda-init",
    "lambda-factor",
    "rounds",
    "plateau-tol",
    "dt",
    "integrator",
    "out",
    "jobs",
];

// keys that do not change results
const UNHASHED: &[&str] = &["out", "jobs"];

fn invalid(key: &str, value: &str, what: &str) -> Error {
    Error::InvalidConfig(format!("{key}: expected {what}, got '{value}'"))
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str, what: &str) -> Result<T> {
    value.parse::<T>().map_err(|_| invalid(key, value, what))
}

impl RunConfig {
    /// Sets one key; `_` and `-` are interchangeable in key names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        match key.as_str() {
            "graph" => self.graph = if value.is_empty() { None } else { Some(PathBuf::from(value)) },
            "nodes" => self.nodes = parse_num(&key, value, "an integer")?,
            "edges" => self.edges = parse_num(&key, value, "an integer")?,
            "weight-min" => self.weight_min = parse_num(&key, value, "a number")?,
            "weight-max" => self.weight_max = parse_num(&key, value, "a number")?,
            "seed" => self.seed = parse_num(&key, value, "an unsigned integer")?,
            "noise" => self.noise = value.parse().map_err(|_| invalid(&key, value, "none, relaxation or dephasing"))?,
            "coupling" => self.coupling = parse_num(&key, value, "a number")?,
            "p" => self.p = parse_num(&key, value, "an integer")?,
            "p-min" => self.p_min = parse_num(&key, value, "an integer")?,
            "x0" => self.x0 = parse_num(&key, value, "a number")?,
            "scale" => self.scale = parse_num(&key, value, "a number")?,
            "eta" => self.eta = parse_num(&key, value, "a number")?,
            "epsilon" => self.epsilon = parse_num(&key, value, "a number")?,
            "iters" => self.iters = parse_num(&key, value, "an integer")?,
            "hybrid-pg" => self.hybrid_pg = parse_num(&key, value, "an integer")?,
            "hybrid-gd" => self.hybrid_gd = parse_num(&key, value, "an integer")?,
            "lambda-init" => self.lambda_init = parse_num(&key, value, "a number")?,
            "lambda-factor" => self.lambda_factor = parse_num(&key, value, "a number")?,
            "rounds" => self.rounds = parse_num(&key, value, "an integer")?,
            "plateau-tol" => self.plateau_tol = parse_num(&key, value, "a number")?,
            "dt" => self.dt = parse_num(&key, value, "a number")?,
            "integrator" => self.integrator = value.parse().map_err(|_| invalid(&key, value, "rk4 or factorized"))?,
            "out" => self.out = PathBuf::from(value),
            "jobs" => self.jobs = parse_num(&key, value, "an integer")?,
            _ => return Err(Error::InvalidConfig(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Applies a `key = value` file on top of `self`. Relative graph paths
    /// resolve against the file's directory.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("{}:{}: expected key = value", path.display(), idx + 1))
            })?;
            self.set(k, v)
                .map_err(|e| Error::InvalidConfig(format!("{}:{}: {e}", path.display(), idx + 1)))?;
            if k.trim() == "graph" {
                if let Some(g) = &self.graph {
                    if g.is_relative() {
                        self.graph = Some(base.join(g));
                    }
                }
            }
        }
        Ok(())
    }

    fn value_of(&self, key: &str) -> String {
        // `{:?}` prints the shortest representation that parses back exactly
        match key {
            "graph" => self.graph.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            "nodes" => self.nodes.to_string(),
            "edges" => self.edges.to_string(),
            "weight-min" => format!("{:?}", self.weight_min),
            "weight-max" => format!("{:?}", self.weight_max),
            "seed" => self.seed.to_string(),
            "noise" => self.noise.as_str().to_string(),
            "coupling" => format!("{:?}", self.coupling),
            "p" => self.p.to_string(),
            "p-min" => self.p_min.to_string(),
            "x0" => format!("{:?}", self.x0),
            "scale" => format!("{:?}", self.scale),
            "eta" => format!("{:?}", self.eta),
            "epsilon" => format!("{:?}", self.epsilon),
            "iters" => self.iters.to_string(),
            "hybrid-pg" => self.hybrid_pg.to_string(),
            "hybrid-gd" => self.hybrid_gd.to_string(),
            "lambda-init" => format!("{:?}", self.lambda_init),
            "lambda-factor" => format!("{:?}", self.lambda_factor),
            "rounds" => self.rounds.to_string(),
            "plateau-tol" => format!("{:?}", self.plateau_tol),
            "dt" => format!("{:?}", self.dt),
            "integrator" => self.integrator.as_str().to_string(),
            "out" => self.out.display().to_string(),
            "jobs" => self.jobs.to_string(),
            _ => unreachable!("unknown key {key}"),
        }
    }

    /// One `key = value` line per key in [`KEYS`] order.
    pub fn to_canonical(&self) -> String {
        let mut s = String::new();
        for k in KEYS {
            writeln!(s, "{k} = {}", self.value_of(k)).unwrap();
        }
        s
    }

    pub fn to_map(&self) -> BTreeMap<&'static str, String> {
        KEYS.iter().map(|&k| (k, self.value_of(k))).collect()
    }

    /// SHA-256 over the result-relevant keys and the graph actually used,
    /// truncated to 16 hex digits. The graph path itself is not hashed.
    pub fn hash(&self, graph: &Graph) -> String {
        let mut h = Sha256::new();
        for k in KEYS {
            if UNHASHED.contains(k) || *k == "graph" {
                continue;
            }
            h.update(format!("{k} = {}\n", self.value_of(k)));
        }
        h.update("graph:\n");
        h.update(serialize_graph(graph));
        hex::encode(h.finalize())[..16].to_string()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.p == 0 || self.p_min == 0 {
            return bad("p and p-min must be positive".into());
        }
        if self.jobs == 0 {
            return bad("jobs must be at least 1".into());
        }
        if !(self.x0.is_finite()) {
            return bad(format!("x0 must be finite, got {}", self.x0));
        }
        if !(self.coupling.is_finite() && self.coupling >= 0.0) {
            return bad(format!("coupling must be nonnegative, got {}", self.coupling));
        }
        ScaleFactor::new(self.scale)?;
        IntegratorConfig::new(self.dt)?;
        self.optimizer(false).validate()?;
        self.lambda_schedule().validate()?;
        Ok(())
    }

    pub fn noise_model(&self) -> Result<NoiseModel> {
        NoiseModel::new(self.noise, self.coupling)
    }

    pub fn integrator_config(&self) -> Result<IntegratorConfig> {
        Ok(IntegratorConfig::new(self.dt)?.with_method(self.integrator))
    }

    pub fn optimizer(&self, hybrid: bool) -> OptimizerConfig {
        OptimizerConfig {
            eta: self.eta,
            epsilon: self.epsilon,
            lambda: 0.0,
            iterations: self.iters,
            hybrid_split: hybrid.then_some((self.hybrid_pg, self.hybrid_gd)),
        }
    }

    pub fn lambda_schedule(&self) -> LambdaSchedule {
        LambdaSchedule {
            initial: self.lambda_init,
            factor: self.lambda_factor,
            max_rounds: self.rounds,
            plateau_tol: self.plateau_tol,
        }
    }

    /// Depth ladder `p-min ..= p`.
    pub fn p_range(&self) -> Result<Vec<usize>> {
        if self.p_min > self.p {
            return Err(Error::EmptyRange);
        }
        Ok((self.p_min..=self.p).collect())
    }

    /// Reads the graph file, or generates the seeded random instance.
    pub fn load_graph(&self) -> Result<Graph> {
        match &self.graph {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::InvalidConfig(format!("cannot read graph {}: {e}", path.display())))?;
                parse_graph(&text)
            }
            None => random_graph(self.nodes, self.edges, (self.weight_min, self.weight_max), self.seed),
        }
    }
}
