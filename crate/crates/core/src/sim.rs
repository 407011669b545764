//! Seeded Monte-Carlo engine: bandit regret experiments, estimator
//! convergence, hyperparameter grid search, perturbation checks and bound
//! tables, all emitting CSV.
//!
//! Every random draw comes from a ChaCha8 stream keyed by
//! `(seed, trial, policy id, stream tag)`, so a trial's output depends only on
//! the configuration and never on scheduling. Trials run in parallel when
//! enabled; results are collected in trial order and reduced serially, which
//! keeps parallel and serial output byte-identical.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{ape_lower_rate, c_kt, gap_dependent_bound, gap_independent_bound, ucb_lower_rate, BoundInputs};
use crate::env::{make_gap_instance, nu_p_bound, BanditInstance, NoiseSpec};
use crate::error::{Error, Result};
use crate::estimators::{median_of_means, truncation_level, EstimatorKind};
use crate::influence::{InfluenceParams, RobustHistory};
use crate::perturbation::{check_assumption2, optimal_params, PerturbationKind, PerturbationSpec};
use crate::policy::{Policy, PolicyConfig};

pub const DEFAULT_P: f64 = 1.5;
pub const DEFAULT_ARMS: usize = 10;
pub const DEFAULT_GAP: f64 = 0.1;
pub const DEFAULT_HORIZON: u64 = 100_000;
pub const DEFAULT_BANDIT_RUNS: usize = 40;
pub const DEFAULT_ESTIMATOR_RUNS: usize = 60;
pub const DEFAULT_LOG_POINTS: usize = 2000;
pub const DEFAULT_DELTA: f64 = 0.01;

const TAG_NOISE: u64 = 1;
const TAG_PERTURBATION: u64 = 2;
const TAG_ESTIMATOR: u64 = 3;

// ---------------------------------------------------------------- config

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[serde(alias = "estimator_convergence")]
    Estimators,
    Bandit,
    #[serde(alias = "grid_search")]
    Grid,
    Check,
    Bounds,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub alpha: f64,
    pub lambda: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    #[serde(default = "default_arms")]
    pub arms: usize,
    #[serde(default)]
    pub gap: Option<f64>,
    /// Shifted-Pareto noise; absent means noiseless.
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
    /// Explicit arm means, overriding `arms`/`gap`.
    #[serde(default)]
    pub means: Option<Vec<f64>>,
    /// True mean of the estimator-convergence stream.
    #[serde(default = "default_mean")]
    pub mean: f64,
}

fn default_arms() -> usize {
    DEFAULT_ARMS
}
fn default_mean() -> f64 {
    1.0
}
fn default_p() -> f64 {
    DEFAULT_P
}
fn default_log_points() -> usize {
    DEFAULT_LOG_POINTS
}
fn default_true() -> bool {
    true
}

impl Default for InstanceConfig {
    fn default() -> Self {
        Self { arms: DEFAULT_ARMS, gap: None, noise: None, means: None, mean: 1.0 }
    }
}

impl InstanceConfig {
    pub fn noise_spec(&self) -> NoiseSpec {
        match self.noise {
            Some(NoiseConfig { alpha, lambda }) => NoiseSpec::pareto(alpha, lambda),
            None => NoiseSpec::Noiseless,
        }
    }

    pub fn build(&self) -> Result<BanditInstance> {
        match &self.means {
            Some(means) => BanditInstance::new(means.clone(), self.noise_spec()),
            None => make_gap_instance(self.arms, self.gap.unwrap_or(DEFAULT_GAP), self.noise_spec()),
        }
    }
}

/// Estimator entry of an estimator-convergence experiment. Unset `nu_p`
/// defaults to the noise model's bound at the true mean, unset `delta` to
/// [`DEFAULT_DELTA`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl EstimatorConfig {
    pub fn new(kind: EstimatorKind) -> Self {
        Self { kind, c: None, nu_p: None, delta: None, label: None }
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = Some(c);
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = Some(delta);
        self
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.kind.label().to_string())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Candidate values; defaults to [`default_grid`].
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    /// Runs per grid point; defaults to the experiment's runs.
    #[serde(default)]
    pub runs: Option<usize>,
    /// Horizon per grid point; defaults to the experiment's horizon.
    #[serde(default)]
    pub horizon: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    #[serde(default = "default_bound_arms")]
    pub arms: Vec<usize>,
    #[serde(default = "default_bound_horizons")]
    pub horizons: Vec<f64>,
    #[serde(default = "default_bound_c")]
    pub c: f64,
    #[serde(default = "default_bound_gap")]
    pub gap: f64,
}

fn default_bound_arms() -> Vec<usize> {
    vec![2, 8, 32, 128]
}
fn default_bound_horizons() -> Vec<f64> {
    vec![1e3, 1e5, 1e7]
}
fn default_bound_c() -> f64 {
    1.0
}
fn default_bound_gap() -> f64 {
    DEFAULT_GAP
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            arms: default_bound_arms(),
            horizons: default_bound_horizons(),
            c: default_bound_c(),
            gap: default_bound_gap(),
        }
    }
}

/// The perturbations checked when a `check` config lists none.
pub fn default_check_perturbations() -> Vec<PerturbationSpec> {
    vec![
        PerturbationSpec::Weibull { k: 1.0, lambda: 2.0 },
        PerturbationSpec::Gamma { alpha: 1.0, lambda: 2.0 },
        PerturbationSpec::gumbel(1.5),
        PerturbationSpec::Pareto { alpha: 3.0, lambda: 3.0 },
        PerturbationSpec::Frechet { alpha: 3.0, lambda: 3.0 },
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default)]
    pub instance: InstanceConfig,
    #[serde(default)]
    pub policies: Vec<PolicyConfig>,
    #[serde(default)]
    pub estimators: Vec<EstimatorConfig>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub perturbations: Vec<PerturbationSpec>,
    #[serde(default)]
    pub bounds: BoundsConfig,
    #[serde(default)]
    pub horizon: Option<u64>,
    #[serde(default)]
    pub runs: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Upper limit on rounds written per curve (log-spaced).
    #[serde(default = "default_log_points")]
    pub log_points: usize,
    #[serde(default = "default_true")]
    pub parallel: bool,
}

impl ExperimentConfig {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            p: DEFAULT_P,
            instance: InstanceConfig::default(),
            policies: Vec::new(),
            estimators: Vec::new(),
            grid: GridConfig::default(),
            perturbations: Vec::new(),
            bounds: BoundsConfig::default(),
            horizon: None,
            runs: None,
            seed: 0,
            output: None,
            log_points: DEFAULT_LOG_POINTS,
            parallel: true,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn horizon(&self) -> u64 {
        self.horizon.unwrap_or(DEFAULT_HORIZON)
    }

    pub fn runs(&self) -> usize {
        self.runs.unwrap_or(match self.mode {
            Mode::Estimators => DEFAULT_ESTIMATOR_RUNS,
            _ => DEFAULT_BANDIT_RUNS,
        })
    }

    fn grid_runs(&self) -> usize {
        self.grid.runs.unwrap_or_else(|| self.runs())
    }

    fn grid_horizon(&self) -> u64 {
        self.grid.horizon.unwrap_or_else(|| self.horizon())
    }

    /// Checks the configuration for its mode and returns warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        crate::influence::compute_bp(self.p)?;
        if self.runs() == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if self.log_points < 2 {
            return Err(Error::Config("log_points must be at least 2".into()));
        }
        let mut warnings = Vec::new();
        let needs_instance = matches!(self.mode, Mode::Bandit | Mode::Grid | Mode::Estimators);
        if needs_instance {
            self.instance.noise_spec().validate(Some(self.p))?;
            if self.horizon() == 0 {
                return Err(Error::Config("horizon must be positive".into()));
            }
        }
        let bandit_like = matches!(self.mode, Mode::Bandit)
            || (self.mode == Mode::Grid && !self.policies.is_empty());
        if bandit_like {
            let instance = self.instance.build()?;
            if self.policies.is_empty() {
                return Err(Error::Config("no policies configured".into()));
            }
            let horizon = if self.mode == Mode::Grid { self.grid_horizon() } else { self.horizon() };
            if horizon < instance.arms() as u64 {
                return Err(Error::Config(format!(
                    "horizon {horizon} is shorter than the initial sweep over {} arms",
                    instance.arms()
                )));
            }
            for policy in &self.policies {
                warnings.extend(policy.validate(self.p)?);
                policy.build(&instance, self.p)?;
            }
        }
        match self.mode {
            Mode::Estimators => {
                if self.estimators.is_empty() {
                    return Err(Error::Config("no estimators configured".into()));
                }
                for e in &self.estimators {
                    self.estimator_setup(e)?;
                }
            }
            Mode::Grid => {
                if self.policies.is_empty() && !self.estimators.iter().any(|e| e.kind == EstimatorKind::PRobust) {
                    return Err(Error::Config("grid search needs policies or p_robust estimators".into()));
                }
                let grid = self.grid_values();
                if grid.is_empty() {
                    return Err(Error::Config("empty grid".into()));
                }
                if let Some(v) = grid.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
                    return Err(Error::Config(format!("grid value {v} must be positive")));
                }
                if self.grid_runs() == 0 {
                    return Err(Error::Config("grid runs must be at least 1".into()));
                }
            }
            Mode::Check => {
                for spec in self.check_perturbations() {
                    warnings.extend(spec.validate(None)?);
                }
            }
            Mode::Bounds => {
                if self.bounds.arms.iter().any(|&k| k < 2) {
                    return Err(Error::Config("bounds arms must be at least 2".into()));
                }
                if self.bounds.horizons.iter().any(|&t| !(t >= 1.0)) {
                    return Err(Error::Config("bounds horizons must be at least 1".into()));
                }
            }
            Mode::Bandit => {}
        }
        Ok(warnings)
    }

    pub fn grid_values(&self) -> Vec<f64> {
        self.grid.values.clone().unwrap_or_else(default_grid)
    }

    fn check_perturbations(&self) -> Vec<PerturbationSpec> {
        if self.perturbations.is_empty() {
            default_check_perturbations()
        } else {
            self.perturbations.clone()
        }
    }

    fn estimator_setup(&self, e: &EstimatorConfig) -> Result<EstimatorSetup> {
        let p = self.p;
        let delta = e.delta.unwrap_or(DEFAULT_DELTA);
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::domain("confidence level delta (must lie in (0, 1))", delta));
        }
        Ok(match e.kind {
            EstimatorKind::SampleMean => EstimatorSetup::SampleMean,
            EstimatorKind::TruncatedMean => {
                let nu = match e.nu_p {
                    Some(v) => v,
                    None => nu_p_bound(&self.instance.noise_spec(), self.instance.mean, p)?,
                };
                if !(nu > 0.0) {
                    return Err(Error::domain("nu_p", nu));
                }
                EstimatorSetup::Truncated { p, level: truncation_level(nu, delta) }
            }
            EstimatorKind::MedianOfMeans => EstimatorSetup::MedianOfMeans { delta },
            EstimatorKind::PRobust => {
                let c = e.c.ok_or(Error::MissingParameter("c"))?;
                EstimatorSetup::PRobust(InfluenceParams::new(p, c)?)
            }
        })
    }
}

/// The 62-point search grid: 50 steps over `(0.1, 5.0]`, 10 steps over
/// `(0.0, 0.1]`, plus `0.005` and `0.001`.
pub fn default_grid() -> Vec<f64> {
    let mut grid: Vec<f64> = (1..=50).map(|i| 0.1 + 4.9 * i as f64 / 50.0).collect();
    grid.extend((1..=10).map(|i| 0.01 * i as f64));
    grid.extend([0.005, 0.001]);
    grid
}

// ---------------------------------------------------------------- seeding

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one random stream of one trial.
pub fn stream_seed(seed: u64, trial: u64, policy_id: u64, tag: u64) -> u64 {
    [trial, policy_id, tag].iter().fold(splitmix64(seed), |h, &x| splitmix64(h ^ splitmix64(x)))
}

pub fn stream_rng(seed: u64, trial: u64, policy_id: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, trial, policy_id, tag))
}

/// Uniform on the open interval `(0, 1)`; exact zeros are redrawn.
pub fn open_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

// ---------------------------------------------------------------- traces

/// Cumulative pseudo-regret `R_t = Σ_{s≤t} Δ_{a_s}` of one trial.
#[derive(Clone, Debug, PartialEq)]
pub struct RegretTrace {
    /// `cumulative[t−1] = R_t`.
    pub cumulative: Vec<f64>,
    /// Final pull count per arm.
    pub counts: Vec<u64>,
}

impl RegretTrace {
    pub fn horizon(&self) -> u64 {
        self.cumulative.len() as u64
    }

    /// `R_t / t` for `t ≥ 1`.
    pub fn average(&self, t: u64) -> f64 {
        self.cumulative[t as usize - 1] / t as f64
    }

    pub fn final_average(&self) -> f64 {
        self.average(self.horizon())
    }

    /// Pulls of arms other than the optimal one.
    pub fn suboptimal_pulls(&self, optimal: usize) -> u64 {
        self.counts.iter().enumerate().filter(|&(a, _)| a != optimal).map(|(_, n)| n).sum()
    }

    /// Nondecreasing, `R_t ≤ t max Δ`, and `R_K = Σ Δ` after the initial sweep.
    pub fn check_invariants(&self, gaps: &[f64]) -> Result<()> {
        let max_gap = gaps.iter().cloned().fold(0.0, f64::max);
        let tol = 1e-9;
        let mut prev = 0.0f64;
        for (i, &r) in self.cumulative.iter().enumerate() {
            let t = (i + 1) as f64;
            if r < prev - tol * (1.0 + prev.abs()) {
                return Err(Error::Invariant(format!("regret decreased at round {}: {prev} -> {r}", i + 1)));
            }
            if r > t * max_gap * (1.0 + tol) + tol {
                return Err(Error::Invariant(format!("regret {r} exceeds t * max gap at round {}", i + 1)));
            }
            prev = r;
        }
        let arms = gaps.len();
        if self.cumulative.len() >= arms {
            let sweep: f64 = gaps.iter().sum();
            let r_k = self.cumulative[arms - 1];
            if (r_k - sweep).abs() > tol * (1.0 + sweep) {
                return Err(Error::Invariant(format!("regret after the initial sweep is {r_k}, expected {sweep}")));
            }
        }
        if self.counts.iter().sum::<u64>() != self.horizon() {
            return Err(Error::Invariant("pull counts do not sum to the horizon".into()));
        }
        Ok(())
    }
}

/// Plays `horizon` rounds: arms `0..K` once each, then the policy's choice.
///
/// `noise` supplies one uniform per round for the reward; `perturb` fills one
/// uniform per arm for policies that randomize their choice.
pub fn play<N, P>(instance: &BanditInstance, policy: &mut Policy, horizon: u64, mut noise: N, mut perturb: P) -> Result<RegretTrace>
where
    N: FnMut() -> f64,
    P: FnMut(&mut [f64]),
{
    let arms = instance.arms();
    if policy.arms() != arms {
        return Err(Error::InvalidParameter(format!(
            "policy has {} arms but the instance has {arms}",
            policy.arms()
        )));
    }
    if horizon < arms as u64 {
        return Err(Error::InvalidParameter(format!("horizon {horizon} is shorter than the initial sweep")));
    }
    let gaps = instance.gaps();
    let mut uniforms = vec![0.5; arms];
    let mut cumulative = Vec::with_capacity(horizon as usize);
    let mut regret = 0.0;
    for t in 0..horizon as usize {
        let arm = if t < arms {
            t
        } else {
            if policy.needs_uniforms() {
                perturb(&mut uniforms);
            }
            policy.select(&uniforms)?
        };
        let reward = instance.draw_reward(arm, noise())?;
        policy.update(arm, reward)?;
        regret += gaps[arm];
        cumulative.push(regret);
    }
    Ok(RegretTrace { cumulative, counts: policy.counts().to_vec() })
}

/// One seeded trial of one policy.
pub fn run_bandit_trial(
    instance: &BanditInstance,
    policy: &PolicyConfig,
    p: f64,
    horizon: u64,
    seed: u64,
    policy_id: u64,
    trial: u64,
) -> Result<RegretTrace> {
    let mut state = policy.build(instance, p)?;
    let mut noise_rng = stream_rng(seed, trial, policy_id, TAG_NOISE);
    let mut perturb_rng = stream_rng(seed, trial, policy_id, TAG_PERTURBATION);
    let trace = play(
        instance,
        &mut state,
        horizon,
        || open_uniform(&mut noise_rng),
        |us| us.iter_mut().for_each(|u| *u = open_uniform(&mut perturb_rng)),
    )?;
    trace.check_invariants(&instance.gaps())?;
    Ok(trace)
}

fn map_trials<T, F>(count: usize, parallel: bool, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    if parallel {
        (0..count).into_par_iter().map(f).collect()
    } else {
        (0..count).map(f).collect()
    }
}

// ---------------------------------------------------------------- tables

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    RegretAvg,
    EstError,
}

impl Metric {
    pub fn label(&self) -> &'static str {
        match self {
            Metric::RegretAvg => "regret_avg",
            Metric::EstError => "est_error",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub round: u64,
    pub policy: String,
    pub metric: Metric,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

/// Aggregated curves, one row per (policy, logged round).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TraceTable {
    pub rows: Vec<TraceRow>,
}

impl TraceTable {
    pub fn series(&self, policy: &str) -> impl Iterator<Item = &TraceRow> {
        let policy = policy.to_string();
        self.rows.iter().filter(move |r| r.policy == policy)
    }

    /// Row at the largest logged round for `policy`.
    pub fn last(&self, policy: &str) -> Option<&TraceRow> {
        self.series(policy).max_by_key(|r| r.round)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut rows = vec![["round", "policy", "metric", "mean", "std", "runs"].map(String::from).to_vec()];
        for r in &self.rows {
            rows.push(vec![
                r.round.to_string(),
                r.policy.clone(),
                r.metric.label().to_string(),
                fmt_f64(r.mean),
                fmt_f64(r.std),
                r.runs.to_string(),
            ]);
        }
        to_csv_string(&rows)
    }
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn to_csv_string(rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    for row in rows {
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Invariant(format!("csv buffer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Invariant(format!("csv encoding: {e}")))
}

pub fn write_output(path: &Path, text: &str) -> Result<()> {
    let io = |source| Error::Io { path: path.to_path_buf(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let mut f = File::create(path).map_err(io)?;
    f.write_all(text.as_bytes()).map_err(io)?;
    Ok(())
}

/// Rounds at which curves are reported: all of `1..=T` when `T ≤ max_points`,
/// otherwise up to `max_points` log-spaced rounds including 1 and `T`.
pub fn logged_rounds(horizon: u64, max_points: usize) -> Vec<u64> {
    if horizon as usize <= max_points {
        return (1..=horizon).collect();
    }
    let ln_t = (horizon as f64).ln();
    let mut set = BTreeSet::new();
    for i in 0..max_points {
        let x = (ln_t * i as f64 / (max_points - 1) as f64).exp().round() as u64;
        set.insert(x.clamp(1, horizon));
    }
    set.insert(horizon);
    set.into_iter().collect()
}

/// Mean and population standard deviation, summed in the given order.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

// ---------------------------------------------------------------- experiments

/// Every policy's regret traces for a bandit config, in trial order.
pub fn run_bandit_traces(config: &ExperimentConfig) -> Result<Vec<(String, Vec<RegretTrace>)>> {
    config.validate()?;
    let instance = config.instance.build()?;
    let (horizon, runs) = (config.horizon(), config.runs());
    let mut out = Vec::new();
    for (id, policy) in config.policies.iter().enumerate() {
        let traces = map_trials(runs, config.parallel, |trial| {
            run_bandit_trial(&instance, policy, config.p, horizon, config.seed, id as u64, trial as u64)
        })?;
        out.push((policy.label(), traces));
    }
    Ok(out)
}

/// Bandit experiment: per-round mean and standard deviation of `R_t / t`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<TraceTable> {
    let traces = run_bandit_traces(config)?;
    let rounds = logged_rounds(config.horizon(), config.log_points);
    let mut table = TraceTable::default();
    let mut values = Vec::new();
    for (label, runs) in &traces {
        for &t in &rounds {
            values.clear();
            values.extend(runs.iter().map(|tr| tr.average(t)));
            let (mean, std) = mean_std(&values);
            table.rows.push(TraceRow { round: t, policy: label.clone(), metric: Metric::RegretAvg, mean, std, runs: runs.len() });
        }
    }
    Ok(table)
}

#[derive(Clone, Copy, Debug)]
enum EstimatorSetup {
    SampleMean,
    Truncated { p: f64, level: f64 },
    MedianOfMeans { delta: f64 },
    PRobust(InfluenceParams),
}

/// Observation stream `Y_t = y + ε_t` of one run.
fn observation_stream(config: &ExperimentConfig, run: u64, horizon: u64) -> Vec<f64> {
    let noise = config.instance.noise_spec();
    let mut rng = stream_rng(config.seed, run, 0, TAG_ESTIMATOR);
    (0..horizon).map(|_| config.instance.mean + noise.noise(open_uniform(&mut rng))).collect()
}

/// `|Ŷ_t − y|` at each of `rounds` for one estimator over one stream.
fn estimator_errors(setup: EstimatorSetup, ys: &[f64], rounds: &[u64], truth: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(rounds.len());
    let mut next = rounds.iter().peekable();
    // running state for the incremental estimators
    let mut sum = 0.0;
    let mut comp = 0.0;
    let mut history = match setup {
        EstimatorSetup::PRobust(params) => Some(RobustHistory::new(params)),
        _ => None,
    };
    for (i, &y) in ys.iter().enumerate() {
        let t = (i + 1) as u64;
        match setup {
            EstimatorSetup::SampleMean => neumaier(&mut sum, &mut comp, y),
            EstimatorSetup::Truncated { p, level } => {
                if y.abs().powf(p) / t as f64 <= level {
                    neumaier(&mut sum, &mut comp, y);
                }
            }
            EstimatorSetup::PRobust(_) => history.as_mut().expect("set").push(y),
            EstimatorSetup::MedianOfMeans { .. } => {}
        }
        if next.peek() == Some(&&t) {
            next.next();
            let est = match setup {
                EstimatorSetup::SampleMean | EstimatorSetup::Truncated { .. } => (sum + comp) / t as f64,
                EstimatorSetup::MedianOfMeans { delta } => median_of_means(&ys[..=i], delta),
                EstimatorSetup::PRobust(_) => history.as_mut().expect("set").estimate(),
            };
            out.push((est - truth).abs());
        }
    }
    out
}

fn neumaier(sum: &mut f64, comp: &mut f64, x: f64) {
    let t = *sum + x;
    if sum.abs() >= x.abs() {
        *comp += (*sum - t) + x;
    } else {
        *comp += (x - t) + *sum;
    }
    *sum = t;
}

/// Per-run errors `[run][estimator][logged round]`.
fn estimator_error_runs(config: &ExperimentConfig, setups: &[EstimatorSetup], horizon: u64, runs: usize, rounds: &[u64]) -> Result<Vec<Vec<Vec<f64>>>> {
    map_trials(runs, config.parallel, |run| {
        let ys = observation_stream(config, run as u64, horizon);
        Ok(setups.iter().map(|&s| estimator_errors(s, &ys, rounds, config.instance.mean)).collect())
    })
}

/// Estimator convergence: mean and standard deviation over runs of
/// `|Ŷ_t − y|` for every configured estimator. All estimators see the same
/// observation stream within a run.
pub fn run_estimator_convergence(config: &ExperimentConfig) -> Result<TraceTable> {
    config.validate()?;
    let setups: Vec<EstimatorSetup> = config.estimators.iter().map(|e| config.estimator_setup(e)).collect::<Result<_>>()?;
    let rounds = logged_rounds(config.horizon(), config.log_points);
    let runs = config.runs();
    let errors = estimator_error_runs(config, &setups, config.horizon(), runs, &rounds)?;
    let mut table = TraceTable::default();
    let mut values = Vec::with_capacity(runs);
    for (e, est) in config.estimators.iter().enumerate() {
        let label = est.label();
        for (j, &t) in rounds.iter().enumerate() {
            values.clear();
            values.extend(errors.iter().map(|run| run[e][j]));
            let (mean, std) = mean_std(&values);
            table.rows.push(TraceRow { round: t, policy: label.clone(), metric: Metric::EstError, mean, std, runs });
        }
    }
    Ok(table)
}

// ---------------------------------------------------------------- grid search

#[derive(Clone, Debug, PartialEq)]
pub struct GridRow {
    pub policy: String,
    pub param: &'static str,
    pub value: f64,
    pub score: f64,
    pub runs: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridBest {
    pub policy: String,
    pub param: &'static str,
    pub value: f64,
    pub score: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GridResult {
    pub rows: Vec<GridRow>,
    pub best: Vec<GridBest>,
}

impl GridResult {
    pub fn best_for(&self, policy: &str) -> Option<&GridBest> {
        self.best.iter().find(|b| b.policy == policy)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut rows = vec![["policy", "param", "value", "score", "runs"].map(String::from).to_vec()];
        for r in &self.rows {
            rows.push(vec![r.policy.clone(), r.param.to_string(), fmt_f64(r.value), fmt_f64(r.score), r.runs.to_string()]);
        }
        to_csv_string(&rows)
    }
}

/// Grid search over each policy's tuned parameter (`c` or `w`) and over `c`
/// of every p-robust estimator. The score is the final mean `R_T/T` for
/// policies and the final mean `|Ŷ_T − y|` for estimators; the lowest score
/// wins, earlier grid entries on ties. Every grid point reuses the same trial
/// seeds.
pub fn grid_search(config: &ExperimentConfig) -> Result<GridResult> {
    config.validate()?;
    let grid = config.grid_values();
    let runs = config.grid_runs();
    let horizon = config.grid_horizon();
    let mut result = GridResult::default();

    if !config.policies.is_empty() {
        let instance = config.instance.build()?;
        for (id, policy) in config.policies.iter().enumerate() {
            let label = policy.label();
            let (param, _) = policy.tuned_param();
            // flatten (grid point, trial) so parallel work is evenly spread
            let finals = map_trials(grid.len() * runs, config.parallel, |job| {
                let (g, trial) = (job / runs, job % runs);
                let candidate = policy.with_tuned_param(grid[g]);
                let trace = run_bandit_trial(&instance, &candidate, config.p, horizon, config.seed, id as u64, trial as u64)?;
                Ok(trace.final_average())
            })?;
            push_scores(&mut result, &label, param, &grid, &finals, runs);
        }
    }

    let robust: Vec<&EstimatorConfig> = config.estimators.iter().filter(|e| e.kind == EstimatorKind::PRobust).collect();
    if !robust.is_empty() {
        let rounds = [horizon];
        let streams = map_trials(runs, config.parallel, |run| Ok(observation_stream(config, run as u64, horizon)))?;
        for est in robust {
            let finals = map_trials(grid.len() * runs, config.parallel, |job| {
                let (g, run) = (job / runs, job % runs);
                let params = InfluenceParams::new(config.p, grid[g])?;
                Ok(estimator_errors(EstimatorSetup::PRobust(params), &streams[run], &rounds, config.instance.mean)[0])
            })?;
            push_scores(&mut result, &est.label(), "c", &grid, &finals, runs);
        }
    }
    Ok(result)
}

fn push_scores(result: &mut GridResult, label: &str, param: &'static str, grid: &[f64], finals: &[f64], runs: usize) {
    let mut best: Option<GridBest> = None;
    for (g, &value) in grid.iter().enumerate() {
        let score = finals[g * runs..(g + 1) * runs].iter().sum::<f64>() / runs as f64;
        result.rows.push(GridRow { policy: label.to_string(), param, value, score, runs });
        if best.as_ref().is_none_or(|b| score < b.score) {
            best = Some(GridBest { policy: label.to_string(), param, value, score });
        }
    }
    result.best.extend(best);
}

// ---------------------------------------------------------------- check / bounds

pub fn check_table(config: &ExperimentConfig) -> Result<String> {
    config.validate()?;
    let mut rows = vec![[
        "perturbation",
        "f_zero",
        "f_zero_ok",
        "log_concave_ok",
        "max_second_difference",
        "integral_c",
        "integral_bound",
        "integral_ok",
        "sup_hazard",
        "truncated_at",
        "all_ok",
    ]
    .map(String::from)
    .to_vec()];
    for spec in config.check_perturbations() {
        let r = check_assumption2(&spec)?;
        rows.push(vec![
            spec.describe(),
            fmt_f64(r.f_zero),
            r.f_zero_ok.to_string(),
            r.log_concave_ok.to_string(),
            fmt_f64(r.max_second_difference),
            fmt_f64(r.integral_c),
            r.integral_bound.map(fmt_f64).unwrap_or_default(),
            r.integral_ok.to_string(),
            fmt_f64(r.sup_hazard),
            fmt_f64(r.truncated_at),
            r.all_ok().to_string(),
        ]);
    }
    to_csv_string(&rows)
}

/// One row of the bound table: each family at its optimal parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundRow {
    pub family: PerturbationKind,
    pub spec: PerturbationSpec,
    pub arms: usize,
    pub horizon: f64,
    pub gap_dependent: f64,
    pub gap_independent: f64,
    /// `gap_independent / (K^(1−1/p) T^(1/p) ln K)`.
    pub optimal_ratio: f64,
    pub ucb_lower: f64,
    pub ape_lower: f64,
}

pub fn bound_rows(p: f64, bounds: &BoundsConfig) -> Result<Vec<BoundRow>> {
    let mut rows = Vec::new();
    for kind in PerturbationKind::ALL {
        for &arms in &bounds.arms {
            let (spec, _) = optimal_params(kind, arms, Some(p))?;
            for &horizon in &bounds.horizons {
                let inputs = BoundInputs { p, c: bounds.c, arms, horizon, gaps: vec![bounds.gap; arms - 1], spec };
                let gap_independent = gap_independent_bound(&inputs)?;
                let gap_dependent = if horizon >= arms as f64 { gap_dependent_bound(&inputs)?.value } else { f64::NAN };
                rows.push(BoundRow {
                    family: kind,
                    spec,
                    arms,
                    horizon,
                    gap_dependent,
                    gap_independent,
                    optimal_ratio: gap_independent / (c_kt(arms, horizon, p) * (arms as f64).ln()),
                    ucb_lower: ucb_lower_rate(arms, horizon, p).value,
                    ape_lower: ape_lower_rate(arms, horizon, p, &spec)?,
                });
            }
        }
    }
    Ok(rows)
}

pub fn bounds_table(config: &ExperimentConfig) -> Result<String> {
    config.validate()?;
    let mut rows = vec![[
        "family",
        "perturbation",
        "arms",
        "horizon",
        "p",
        "gap_dependent",
        "gap_independent",
        "optimal_ratio",
        "ucb_lower",
        "ape_lower",
    ]
    .map(String::from)
    .to_vec()];
    for r in bound_rows(config.p, &config.bounds)? {
        rows.push(vec![
            r.family.label().to_string(),
            r.spec.describe(),
            r.arms.to_string(),
            fmt_f64(r.horizon),
            fmt_f64(config.p),
            fmt_f64(r.gap_dependent),
            fmt_f64(r.gap_independent),
            fmt_f64(r.optimal_ratio),
            fmt_f64(r.ucb_lower),
            fmt_f64(r.ape_lower),
        ]);
    }
    to_csv_string(&rows)
}

/// Runs the configured mode and returns its CSV text.
pub fn run_to_csv(config: &ExperimentConfig) -> Result<String> {
    match config.mode {
        Mode::Bandit => run_experiment(config)?.to_csv(),
        Mode::Estimators => run_estimator_convergence(config)?.to_csv(),
        Mode::Grid => grid_search(config)?.to_csv(),
        Mode::Check => check_table(config),
        Mode::Bounds => bounds_table(config),
    }
}
