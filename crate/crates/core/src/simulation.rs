//! Monte Carlo harness: a data-generating process read from a key-value
//! config, reproducible replications and a summary of the variance, bound
//! containment, normality and moment-bias checks.
//!
//! Randomness comes from ChaCha8 seeded with `seed`. Stream 0 draws the
//! fixture (α, X, per-edge variances); replication r uses stream r + 1, so
//! results do not depend on how replications are scheduled across threads.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NetError, Result};
use crate::estimator::Estimator;
use crate::generators;
use crate::graph::{largest_component, Graph};
use crate::inference::{sigma2_hat, standard_errors, vertex_variance_bounds, Network, SeMode};
use crate::moments::{sample_variance_of, variance_traces};
use crate::stats::ks_test_standard_normal;

pub const RNG_NAME: &str = "ChaCha8 (stream 0: fixture, stream r+1: replication r)";

/// Largest n for which the full empirical covariance is accumulated.
const FULL_COV_MAX_N: usize = 500;
/// Largest m·n for which the exact heteroskedastic variance is formed.
const SANDWICH_MAX_ENTRIES: usize = 50_000_000;
const CHUNK: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Hypercube,
    ExtendedHypercube,
    Star,
    Wheel,
    Complete,
    ErdosRenyi,
    RandomConnected,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorModel {
    /// var(u_e) = σ²
    Homoskedastic,
    /// var(u_e) = σ²(0.5 + |z_e|), z_e standard normal, fixed per fixture
    Heteroskedastic,
    /// u = 0
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    Normal,
    /// symmetric uniform with matching variance
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeChoice {
    Plugin,
    PluginUnscaled,
    Homoskedastic,
}

impl From<SeChoice> for SeMode {
    fn from(s: SeChoice) -> Self {
        match s {
            SeChoice::Plugin => SeMode::Plugin,
            SeChoice::PluginUnscaled => SeMode::PluginUnscaled,
            SeChoice::Homoskedastic => SeMode::Homoskedastic,
        }
    }
}

fn default_beta() -> f64 {
    1.0
}
fn default_sigma2() -> f64 {
    1.0
}
fn default_errors() -> ErrorModel {
    ErrorModel::Homoskedastic
}
fn default_distribution() -> Distribution {
    Distribution::Normal
}
fn default_se() -> SeChoice {
    SeChoice::PluginUnscaled
}
fn default_reps() -> usize {
    1000
}
fn default_ks_vertices() -> usize {
    5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DGPConfig {
    pub family: Family,
    /// N for the hypercube families, n otherwise.
    pub size: usize,
    /// Edge probability for `erdos_renyi`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_prob: Option<f64>,
    /// Extra random chords for `random_connected`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra_edges: Option<usize>,
    /// Seed of the random graph; defaults to `seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_seed: Option<u64>,
    #[serde(default)]
    pub covariates: usize,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_errors")]
    pub errors: ErrorModel,
    #[serde(default = "default_distribution")]
    pub distribution: Distribution,
    #[serde(default = "default_sigma2")]
    pub sigma2: f64,
    #[serde(default = "default_se")]
    pub se: SeChoice,
    pub seed: u64,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_ks_vertices")]
    pub ks_vertices: usize,
}

const KNOWN_KEYS: &[&str] = &[
    "family",
    "size",
    "edge_prob",
    "extra_edges",
    "graph_seed",
    "covariates",
    "beta",
    "errors",
    "distribution",
    "sigma2",
    "se",
    "seed",
    "reps",
    "ks_vertices",
];

impl DGPConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| NetError::Config(e.to_string()))?;
        let mut unknown: Vec<String> = table
            .keys()
            .filter(|k| !KNOWN_KEYS.contains(&k.as_str()))
            .cloned()
            .collect();
        if !unknown.is_empty() {
            unknown.sort();
            return Err(NetError::UnknownConfigKeys(unknown));
        }
        let cfg: DGPConfig = table.try_into().map_err(|e: toml::de::Error| NetError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_config_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(NetError::Config(m.to_string()));
        if self.errors != ErrorModel::None && !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return bad("sigma2 must be positive");
        }
        if self.reps == 0 {
            return bad("reps must be at least 1");
        }
        if self.family == Family::ErdosRenyi && self.edge_prob.is_none() {
            return bad("erdos_renyi requires edge_prob");
        }
        Ok(())
    }

    /// Builds the graph and reduces it to its largest component.
    pub fn graph(&self) -> Result<Graph> {
        let gseed = self.graph_seed.unwrap_or(self.seed);
        let g = match self.family {
            Family::Hypercube => generators::hypercube(self.size)?,
            Family::ExtendedHypercube => generators::extended_hypercube(self.size)?,
            Family::Star => generators::star(self.size)?,
            Family::Wheel => generators::wheel(self.size)?,
            Family::Complete => generators::complete(self.size)?,
            Family::ErdosRenyi => generators::erdos_renyi(self.size, self.edge_prob.unwrap_or(0.0), gseed)?,
            Family::RandomConnected => {
                generators::random_connected(self.size, self.extra_edges.unwrap_or(self.size), gseed)?
            }
        };
        Ok(largest_component(&g).graph)
    }
}

/// The fixed part of the design: graph, true α, X, β and per-edge error sd.
#[derive(Clone, Debug)]
pub struct Fixture {
    pub graph: Graph,
    pub alpha: DVector<f64>,
    pub x: DMatrix<f64>,
    pub beta: DVector<f64>,
    pub edge_sd: DVector<f64>,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// α ~ N(0, I) projected onto d′α = 0.
pub fn d_projected_normal(d: &DVector<f64>, rng: &mut impl Rng) -> DVector<f64> {
    let raw = DVector::from_fn(d.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let shift = d.dot(&raw) / d.sum();
    raw.add_scalar(-shift)
}

impl Fixture {
    pub fn draw(cfg: &DGPConfig) -> Result<Self> {
        cfg.validate()?;
        let graph = cfg.graph()?;
        let m = graph.m();
        let mut rng = stream_rng(cfg.seed, 0);
        let alpha = d_projected_normal(&graph.degrees(), &mut rng);
        let x = DMatrix::from_fn(m, cfg.covariates, |_, _| rng.sample(StandardNormal));
        let edge_sd = match cfg.errors {
            ErrorModel::Homoskedastic => DVector::from_element(m, cfg.sigma2.sqrt()),
            ErrorModel::Heteroskedastic => DVector::from_fn(m, |_, _| {
                let z: f64 = rng.sample(StandardNormal);
                (cfg.sigma2 * (0.5 + z.abs())).sqrt()
            }),
            ErrorModel::None => DVector::zeros(m),
        };
        Ok(Self {
            graph,
            alpha,
            beta: DVector::from_element(cfg.covariates, cfg.beta),
            x,
            edge_sd,
        })
    }

    pub fn signal(&self) -> DVector<f64> {
        self.graph.matrices().b.mul_vec(&self.alpha) + &self.x * &self.beta
    }
}

/// A configured simulation; `outcome(r)` is the r-th replication's y.
pub struct Simulation {
    pub config: DGPConfig,
    pub fixture: Fixture,
    pub estimator: Estimator,
    signal: DVector<f64>,
}

/// Per-replication quantities retained for the summary.
#[derive(Clone, Debug)]
struct RepOutput {
    err: DVector<f64>,
    z_ks: Vec<f64>,
    beta: DVector<f64>,
    sample_var: f64,
    corrected: Option<f64>,
    square_bias_hat: f64,
}

impl Simulation {
    pub fn new(config: DGPConfig) -> Result<Self> {
        let fixture = Fixture::draw(&config)?;
        let estimator = Estimator::new(&fixture.graph, &fixture.x)?;
        let signal = fixture.signal();
        Ok(Self {
            config,
            fixture,
            estimator,
            signal,
        })
    }

    pub fn outcome(&self, rep: usize) -> DVector<f64> {
        let mut rng = stream_rng(self.config.seed, rep as u64 + 1);
        let m = self.signal.len();
        let sd = &self.fixture.edge_sd;
        match (self.config.errors, self.config.distribution) {
            (ErrorModel::None, _) => self.signal.clone(),
            (_, Distribution::Normal) => {
                DVector::from_fn(m, |e, _| self.signal[e] + sd[e] * rng.sample::<f64, _>(StandardNormal))
            }
            (_, Distribution::Uniform) => {
                let half = 3f64.sqrt();
                DVector::from_fn(m, |e, _| self.signal[e] + sd[e] * rng.random_range(-half..half))
            }
        }
    }

    fn ks_vertex_list(&self) -> Vec<usize> {
        let n = self.fixture.graph.n();
        let k = self.config.ks_vertices.min(n);
        (0..k).map(|t| t * n / k).collect()
    }

    fn replicate(&self, rep: usize, ks: &[usize], trace_centered: f64) -> Result<RepOutput> {
        let y = self.outcome(rep);
        let fit = self.estimator.fit(&y)?;
        let err = &fit.alpha - &self.fixture.alpha;
        let ses = standard_errors(&self.estimator, &fit, self.config.se.into());
        let z_ks = match &ses {
            Ok(s) => ks.iter().map(|&i| err[i] / s.se[i]).collect(),
            Err(_) => Vec::new(),
        };
        let square_bias_hat = match standard_errors(&self.estimator, &fit, SeMode::PluginUnscaled) {
            Ok(s) => s.se.iter().map(|v| v * v).sum::<f64>() / s.se.len() as f64,
            Err(_) => f64::NAN,
        };
        let sample_var = sample_variance_of(&fit.alpha)?;
        let corrected = sigma2_hat(&fit).ok().map(|s2| sample_var - s2 * trace_centered);
        Ok(RepOutput {
            err,
            z_ks,
            beta: fit.beta,
            sample_var,
            corrected,
            square_bias_hat,
        })
    }

    /// Exact per-vertex variance of α̌ under the configured error model, and
    /// the full covariance when n is small. `None` when too large to form.
    pub fn theoretical_variance(&self) -> Result<(Option<DVector<f64>>, Option<DMatrix<f64>>)> {
        let est = &self.estimator;
        let gm = est.matrices();
        let (n, m) = (gm.n, gm.m);
        if m * n > SANDWICH_MAX_ENTRIES {
            if self.config.errors == ErrorModel::Homoskedastic {
                return Ok((Some(est.variance_diag()? * self.config.sigma2), None));
            }
            return Ok((None, None));
        }
        // T′ = B L* − (X − B G) W G′ so that α̌ − α = T u
        let ls = est.solver().lstar_dense()?;
        let mut tt = gm.b.mul_dense(&ls);
        if est.covariates().ncols() > 0 {
            let g = est.g();
            let mbx = est.covariates() - gm.b.mul_dense(g);
            tt -= mbx * est.xmx_inverse() * g.transpose();
        }
        let var_e = self.fixture.edge_sd.map(|s| s * s);
        let diag = DVector::from_fn(n, |i, _| (0..m).map(|e| tt[(e, i)] * tt[(e, i)] * var_e[e]).sum());
        let full = (n <= FULL_COV_MAX_N).then(|| {
            let scaled = DMatrix::from_fn(m, n, |e, i| tt[(e, i)] * var_e[e]);
            tt.transpose() * scaled
        });
        Ok((Some(diag), full))
    }

    pub fn run(&self) -> Result<SimulationSummary> {
        let cfg = &self.config;
        let n = self.fixture.graph.n();
        let m = self.fixture.graph.m();
        let p = cfg.covariates;
        let reps = cfg.reps;
        let ks = self.ks_vertex_list();
        let traces = variance_traces(&self.estimator)?;
        let full_cov = n <= FULL_COV_MAX_N;

        let mut sum = DVector::<f64>::zeros(n);
        let mut sumsq = DVector::<f64>::zeros(n);
        let mut cross = full_cov.then(|| DMatrix::<f64>::zeros(n, n));
        let mut beta_sum = DVector::<f64>::zeros(p);
        let mut z_cols: Vec<Vec<f64>> = vec![Vec::with_capacity(reps); ks.len()];
        let mut sv = Vec::with_capacity(reps);
        let mut corr = Vec::with_capacity(reps);
        let mut sq_bias = Vec::with_capacity(reps);
        let mut max_abs_err: f64 = 0.0;

        let mut start = 0;
        while start < reps {
            let end = (start + CHUNK).min(reps);
            let outs: Vec<RepOutput> = (start..end)
                .into_par_iter()
                .map(|r| self.replicate(r, &ks, traces.centered_trace))
                .collect::<Result<_>>()?;
            for o in outs {
                sum += &o.err;
                sumsq += o.err.component_mul(&o.err);
                if let Some(c) = cross.as_mut() {
                    c.ger(1.0, &o.err, &o.err, 1.0);
                }
                beta_sum += &o.beta;
                for (col, z) in z_cols.iter_mut().zip(&o.z_ks) {
                    col.push(*z);
                }
                max_abs_err = max_abs_err.max(o.err.amax());
                sv.push(o.sample_var);
                if let Some(c) = o.corrected {
                    corr.push(c);
                }
                sq_bias.push(o.square_bias_hat);
            }
            start = end;
        }

        let r = reps as f64;
        let denom = (r - 1.0).max(1.0);
        let mean_err = &sum / r;
        let emp_var = DVector::from_fn(n, |i, _| (sumsq[i] - r * mean_err[i] * mean_err[i]) / denom);
        let (theo, theo_full) = self.theoretical_variance()?;

        let rel_frob = match (&cross, &theo_full) {
            (Some(c), Some(t)) => {
                let emp = (c - &mean_err * mean_err.transpose() * r) / denom;
                Some((emp - t).norm() / t.norm())
            }
            _ => None,
        };

        let bounds = if cfg.errors == ErrorModel::Homoskedastic && p == 0 {
            let net = Network::new(&self.fixture.graph)?;
            let b = vertex_variance_bounds(&net, cfg.sigma2)?;
            let inside = |v: &[f64]| {
                v.iter()
                    .enumerate()
                    .filter(|&(i, &x)| b.lower[i] <= x + 1e-12 && x <= b.upper[i] + 1e-12)
                    .count() as f64
                    / n as f64
            };
            Some(BoundContainment {
                exact_rate: inside(&b.exact),
                empirical_rate: inside(emp_var.as_slice()),
                lower: b.lower.clone(),
                upper: b.upper.clone(),
            })
        } else {
            None
        };

        let ks_out = ks
            .iter()
            .zip(&z_cols)
            .filter(|(_, col)| col.len() == reps && reps >= 2)
            .map(|(&v, col)| {
                let (d, pv) = ks_test_standard_normal(col);
                KsResult {
                    vertex: self.fixture.graph.label(v).to_string(),
                    statistic: d,
                    p_value: pv,
                }
            })
            .collect();

        let true_var = sample_variance_of(&self.fixture.alpha)?;
        let sigma2_eff = match cfg.errors {
            ErrorModel::Homoskedastic => Some(cfg.sigma2),
            ErrorModel::None => Some(0.0),
            ErrorModel::Heteroskedastic => None,
        };
        let moments = MomentSummary {
            true_sample_variance: true_var,
            mean_sample_variance: crate::stats::mean(&sv),
            mc_bias: crate::stats::mean(&sv) - true_var,
            mc_bias_se: crate::stats::sd(&sv) / r.sqrt(),
            bias_trace_lstar: sigma2_eff.map(|s| s * traces.trace),
            bias_centered_trace: sigma2_eff.map(|s| s * traces.centered_trace),
            mean_corrected: (!corr.is_empty()).then(|| crate::stats::mean(&corr)),
            corrected_se: (!corr.is_empty()).then(|| crate::stats::sd(&corr) / (corr.len() as f64).sqrt()),
            mean_square_bias_hat: crate::stats::mean(&sq_bias),
        };

        Ok(SimulationSummary {
            rng: RNG_NAME.to_string(),
            config: cfg.clone(),
            n,
            m,
            reps,
            max_abs_error: max_abs_err,
            exact_recovery: max_abs_err < 1e-8,
            beta_mean: (beta_sum / r).iter().copied().collect(),
            empirical_variance: emp_var.iter().copied().collect(),
            theoretical_variance: theo.map(|t| t.iter().copied().collect()),
            relative_frobenius_error: rel_frob,
            bounds,
            ks: ks_out,
            moments,
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundContainment {
    /// Share of vertices whose exact σ²(L*)_ii lies within the bounds.
    pub exact_rate: f64,
    /// Share of vertices whose Monte Carlo variance lies within the bounds.
    pub empirical_rate: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct KsResult {
    pub vertex: String,
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentSummary {
    pub true_sample_variance: f64,
    pub mean_sample_variance: f64,
    pub mc_bias: f64,
    pub mc_bias_se: f64,
    pub bias_trace_lstar: Option<f64>,
    pub bias_centered_trace: Option<f64>,
    pub mean_corrected: Option<f64>,
    pub corrected_se: Option<f64>,
    /// Mean over replications of the plug-in bias b̌ for φ(a) = a².
    pub mean_square_bias_hat: f64,
}

/// Replication summary; contains no timing information so identical inputs
/// serialize to identical bytes.
#[derive(Clone, Debug, Serialize)]
pub struct SimulationSummary {
    pub rng: String,
    pub config: DGPConfig,
    pub n: usize,
    pub m: usize,
    pub reps: usize,
    pub max_abs_error: f64,
    pub exact_recovery: bool,
    pub beta_mean: Vec<f64>,
    pub empirical_variance: Vec<f64>,
    pub theoretical_variance: Option<Vec<f64>>,
    pub relative_frobenius_error: Option<f64>,
    pub bounds: Option<BoundContainment>,
    pub ks: Vec<KsResult>,
    pub moments: MomentSummary,
}

pub fn simulate(config: DGPConfig) -> Result<SimulationSummary> {
    Simulation::new(config)?.run()
}
