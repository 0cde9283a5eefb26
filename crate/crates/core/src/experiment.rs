//! Experiment configuration and orchestration: train the adjustment networks,
//! run every probe, compute the payment surface and write the artifacts.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adjustment::{corollary_check, existence_check, AdjustmentModel, InequalityReport, Interval, PriorSupport};
use crate::error::{Error, Result};
use crate::harness::{
    check_lemma1, probe_dsic, probe_efficiency, probe_ex_post, DeviationSampler, EconomySampler, EfficiencyBenchmark, ExPostReport, ProbeReport,
};
use crate::learner::{train, LearnedAdjustment, TrainingConfig, TrainingTrace};
use crate::model::{check_assumptions, AssumptionReport, Profile, ResourceVector, Technology};
use crate::optimizer::{GradientConfig, Method, Solver};
use crate::payments::{Mechanism, DEFAULT_PUNISHMENT};

/// Grid over producer 0's reported capacity and cost type, with everyone else fixed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurfaceSpec {
    pub capacity_axis: Interval,
    pub cost_axis: Interval,
    /// Points along the capacity and cost axes.
    pub resolution: [usize; 2],
    pub others_capacity: f64,
    pub others_cost_type: f64,
    pub valuation_type: f64,
}

impl Default for SurfaceSpec {
    fn default() -> Self {
        Self {
            capacity_axis: Interval(0.0, 5.0),
            cost_axis: Interval(0.0, 1.0),
            resolution: [50, 50],
            others_capacity: 2.5,
            others_cost_type: 0.5,
            valuation_type: 0.5,
        }
    }
}

impl SurfaceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.resolution.contains(&0) {
            return Err(Error::Config(format!("surface resolution must be positive, got {:?}", self.resolution)));
        }
        for v in [self.others_capacity, self.others_cost_type, self.valuation_type] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("surface fixed values must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }

    fn axis(range: &Interval, points: usize) -> Vec<f64> {
        if points == 1 {
            return vec![range.lo()];
        }
        (0..points)
            .map(|k| range.lo() + range.width() * k as f64 / (points - 1) as f64)
            .collect()
    }

    pub fn capacities(&self) -> Vec<f64> {
        Self::axis(&self.capacity_axis, self.resolution[0])
    }

    pub fn cost_types(&self) -> Vec<f64> {
        Self::axis(&self.cost_axis, self.resolution[1])
    }
}

/// How many trials each probe runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeCounts {
    pub dsic_trials: usize,
    pub deviations: DeviationSampler,
    pub ex_post_trials: usize,
    pub lemma1_trials: usize,
    pub efficiency_trials: usize,
    pub inequality_samples: usize,
    pub assumption_samples: usize,
}

impl Default for ProbeCounts {
    fn default() -> Self {
        Self {
            dsic_trials: 1_000,
            deviations: DeviationSampler::default(),
            ex_post_trials: 10_000,
            lemma1_trials: 10_000,
            efficiency_trials: 200,
            inequality_samples: 1_000,
            assumption_samples: 2_000,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub technology: Technology,
    pub support: PriorSupport,
    pub training: TrainingConfig,
    pub method: Method,
    pub gradient: GradientConfig,
    pub punishment: f64,
    pub surface: SurfaceSpec,
    pub probes: ProbeCounts,
    pub out_dir: PathBuf,
    pub rng_seed: u64,
}

impl Default for ExperimentConfig {
    /// Ten producers, two consumers, uniform priors.
    fn default() -> Self {
        Self {
            technology: Technology::default(),
            support: PriorSupport::reference(10, 2),
            training: TrainingConfig::default(),
            method: Method::Analytic,
            gradient: GradientConfig::default(),
            punishment: DEFAULT_PUNISHMENT,
            surface: SurfaceSpec::default(),
            probes: ProbeCounts::default(),
            out_dir: PathBuf::from("out"),
            rng_seed: 42,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let config: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.support.validate()?;
        self.training.validate()?;
        self.surface.validate()?;
        if !(self.punishment.is_finite() && self.punishment > 0.0) {
            return Err(Error::Config(format!("punishment must be positive, got {}", self.punishment)));
        }
        Ok(())
    }

    pub fn solver(&self) -> Solver {
        Solver::new(self.technology.clone(), self.method).with_gradient_config(self.gradient.clone())
    }

    pub fn mechanism(&self, adjustment: AdjustmentModel) -> Mechanism {
        Mechanism {
            method: self.method,
            gradient: self.gradient.clone(),
            adjustment,
            punishment: self.punishment,
        }
    }

    pub fn analytic_adjustment(&self) -> AdjustmentModel {
        AdjustmentModel::Analytic { support: self.support.clone(), solver: self.solver() }
    }

    /// The fixed profile behind the surface, with producer 0 at `(capacity, cost_type)`.
    pub fn surface_profile(&self, capacity: f64, cost_type: f64) -> Result<Profile> {
        let n = self.support.n();
        let dim = self.support.dim();
        let mut capacities = vec![ResourceVector::new(vec![self.surface.others_capacity; dim])?; n];
        capacities[0] = ResourceVector::new(vec![capacity; dim])?;
        let mut cost_types = vec![self.surface.others_cost_type; n];
        cost_types[0] = cost_type;
        Profile::new(capacities, cost_types, vec![self.surface.valuation_type; self.support.m()])
    }
}

/// Producer 0's payment over the surface grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRecord {
    pub spec: SurfaceSpec,
    pub adjustment: String,
    pub capacities: Vec<f64>,
    pub cost_types: Vec<f64>,
    /// `payments[a][b]`: capacity index `a`, cost-type index `b`.
    pub payments: Vec<Vec<f64>>,
    pub tau: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceChecks {
    /// Largest drop of `p_0` between neighbouring capacity points.
    pub max_capacity_drop: f64,
    /// Largest rise of `p_0` between neighbouring cost-type points.
    pub max_cost_rise: f64,
    /// Largest `|p_0 - h_0|` at the highest cost type.
    pub plateau_gap: f64,
    pub pass: bool,
}

/// Required IR and WBB pass rate for the learned adjustment, which only
/// approximately attains zero loss off the training samples.
pub const LEARNED_PASS_RATE: f64 = 0.99;

pub const SURFACE_STEP_TOL: f64 = 1e-6;
pub const SURFACE_PLATEAU_TOL: f64 = 1e-3;

impl SurfaceRecord {
    pub fn checks(&self) -> SurfaceChecks {
        let mut max_capacity_drop = f64::NEG_INFINITY;
        let mut max_cost_rise = f64::NEG_INFINITY;
        for a in 0..self.capacities.len() {
            for b in 0..self.cost_types.len() {
                if a + 1 < self.capacities.len() {
                    max_capacity_drop = max_capacity_drop.max(self.payments[a][b] - self.payments[a + 1][b]);
                }
                if b + 1 < self.cost_types.len() {
                    max_cost_rise = max_cost_rise.max(self.payments[a][b + 1] - self.payments[a][b]);
                }
            }
        }
        let last = self.cost_types.len() - 1;
        let plateau_gap = (0..self.capacities.len())
            .map(|a| (self.payments[a][last] - self.h[a][last]).abs())
            .fold(0.0, f64::max);
        let pass = max_capacity_drop <= SURFACE_STEP_TOL && max_cost_rise <= SURFACE_STEP_TOL && plateau_gap <= SURFACE_PLATEAU_TOL;
        SurfaceChecks { max_capacity_drop, max_cost_rise, plateau_gap, pass }
    }
}

/// Evaluate `p_0` on the configured grid under `adjustment`.
pub fn payment_surface(config: &ExperimentConfig, adjustment: &AdjustmentModel) -> Result<SurfaceRecord> {
    config.surface.validate()?;
    let solver = config.solver();
    let capacities = config.surface.capacities();
    let cost_types = config.surface.cost_types();
    let cells: Vec<(f64, f64, f64)> = (0..capacities.len() * cost_types.len())
        .into_par_iter()
        .map(|k| {
            let (a, b) = (k / cost_types.len(), k % cost_types.len());
            let profile = config.surface_profile(capacities[a], cost_types[b])?;
            let full = solver.solve(&profile)?;
            let without = solver.counterfactual(&profile, 0)?;
            let tau = full.surplus - without.surplus + config.technology.cost().cost(&full.accepted[0], profile.cost_types[0]);
            let h = adjustment.evaluate(0, &profile.without(0))?;
            let p = tau + h;
            if !p.is_finite() {
                return Err(Error::NonFinite(format!("surface payment at ({}, {})", capacities[a], cost_types[b])));
            }
            Ok((p, tau, h))
        })
        .collect::<Result<_>>()?;

    let rows = |f: fn(&(f64, f64, f64)) -> f64| -> Vec<Vec<f64>> { cells.chunks(cost_types.len()).map(|r| r.iter().map(f).collect()).collect() };
    Ok(SurfaceRecord {
        spec: config.surface.clone(),
        adjustment: adjustment.label().to_string(),
        payments: rows(|c| c.0),
        tau: rows(|c| c.1),
        h: rows(|c| c.2),
        capacities,
        cost_types,
    })
}

/// Fixed-width `%.9g` rendering.
pub fn format_g9(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let exp = v.abs().log10().floor() as i32;
    let sci = format!("{v:.8e}");
    // rounding can bump the exponent, so read it back from the formatted value
    let exp = sci.split('e').nth(1).and_then(|e| e.parse::<i32>().ok()).unwrap_or(exp);
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}"))
    } else {
        let (mantissa, e) = sci.split_once('e').unwrap();
        let sign = if e.starts_with('-') { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), e.trim_start_matches('-').parse::<i32>().unwrap())
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

pub fn write_loss_trace(path: &Path, trace: &TrainingTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "loss"])?;
    for (epoch, loss) in trace.epoch_losses.iter().enumerate() {
        w.write_record([epoch.to_string(), format_g9(*loss)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_step_trace(path: &Path, trace: &TrainingTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "epoch", "loss"])?;
    for s in &trace.steps {
        w.write_record([s.step.to_string(), s.epoch.to_string(), format_g9(s.loss)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_surface(path: &Path, record: &SurfaceRecord) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["capacity", "cost_type", "payment", "tau", "h"])?;
    for (a, cap) in record.capacities.iter().enumerate() {
        for (b, gamma) in record.cost_types.iter().enumerate() {
            w.write_record([
                format_g9(*cap),
                format_g9(*gamma),
                format_g9(record.payments[a][b]),
                format_g9(record.tau[a][b]),
                format_g9(record.h[a][b]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub epochs_run: usize,
    pub final_loss: f64,
    pub converged: bool,
}

/// Everything `run_experiment` verified.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rng_seed: u64,
    pub assumptions: AssumptionReport,
    pub existence: InequalityReport,
    pub corollary: InequalityReport,
    pub training: TrainingSummary,
    pub efficiency: ProbeReport,
    pub lemma1: ProbeReport,
    pub dsic: Vec<ProbeReport>,
    pub ex_post: Vec<ExPostReport>,
    pub surface: SurfaceChecks,
    pub pass: bool,
}

/// Paths of the artifacts `run_experiment` wrote.
#[derive(Clone, Debug)]
pub struct Artifacts {
    pub loss_trace: PathBuf,
    pub step_trace: PathBuf,
    pub surface: PathBuf,
    pub report: PathBuf,
    pub model: PathBuf,
    pub report_data: ExperimentReport,
    pub model_data: Arc<LearnedAdjustment>,
}

/// Train, verify, compute the surface and write all artifacts under `config.out_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Artifacts> {
    config.validate()?;
    std::fs::create_dir_all(&config.out_dir)?;
    let seed = config.rng_seed;
    let solver = config.solver();
    let sampler = EconomySampler::new(config.support.clone(), config.technology.clone());
    let counts = &config.probes;

    let assumptions = check_assumptions(&config.technology, counts.assumption_samples, crate::rng::derive(seed, 100));
    let existence = existence_check(&config.support, &solver, counts.inequality_samples, crate::rng::derive(seed, 101))?;
    let corollary = corollary_check(&config.support, &solver, counts.inequality_samples, crate::rng::derive(seed, 102))?;

    let training_config = TrainingConfig { rng_seed: crate::rng::derive(seed, 103), ..config.training.clone() };
    let mut model = LearnedAdjustment::random(&config.support, &training_config.hidden, crate::rng::derive(seed, 104))?;
    let trace = train(&mut model, &training_config, &solver)?;
    let model = Arc::new(model);
    let training = TrainingSummary {
        epochs_run: trace.epochs_run(),
        final_loss: trace.final_loss,
        converged: trace.final_loss < 1e-3,
    };

    let efficiency_benchmark = if config.support.n() * config.support.dim() <= 3 {
        EfficiencyBenchmark::Grid { step: 1e-2 }
    } else {
        EfficiencyBenchmark::Multistart
    };
    let efficiency = probe_efficiency(&sampler, &solver, efficiency_benchmark, counts.efficiency_trials, crate::rng::derive(seed, 105))?;
    let lemma1 = check_lemma1(&sampler, &solver, counts.lemma1_trials, crate::rng::derive(seed, 106))?;

    let adjustments = [AdjustmentModel::Zero, config.analytic_adjustment(), AdjustmentModel::Learned(model.clone())];
    let mut dsic = Vec::new();
    let mut ex_post = Vec::new();
    for adjustment in &adjustments {
        let mechanism = config.mechanism(adjustment.clone());
        dsic.push(probe_dsic(&sampler, &counts.deviations, &mechanism, counts.dsic_trials, crate::rng::derive(seed, 107))?);
        ex_post.push(probe_ex_post(&sampler, &mechanism, counts.ex_post_trials, crate::rng::derive(seed, 108))?);
    }

    let learned = AdjustmentModel::Learned(model.clone());
    let surface = payment_surface(config, &learned)?;
    let surface_checks = surface.checks();

    let pass = assumptions.pass()
        && existence.pass()
        && corollary.pass()
        && training.converged
        && efficiency.pass
        && lemma1.pass
        && dsic.iter().all(|r| r.pass)
        && ex_post.iter().zip(&adjustments).all(|(r, a)| match a {
            AdjustmentModel::Learned(_) => r.pass_at_rate(LEARNED_PASS_RATE),
            _ => r.pass(),
        })
        && surface_checks.pass;
    let report = ExperimentReport {
        rng_seed: seed,
        assumptions,
        existence,
        corollary,
        training,
        efficiency,
        lemma1,
        dsic,
        ex_post,
        surface: surface_checks,
        pass,
    };

    let out = &config.out_dir;
    let artifacts = Artifacts {
        loss_trace: out.join("loss_trace.csv"),
        step_trace: out.join("step_trace.csv"),
        surface: out.join("surface.csv"),
        report: out.join("report.json"),
        model: out.join("model.json"),
        report_data: report,
        model_data: model,
    };
    write_loss_trace(&artifacts.loss_trace, &trace)?;
    write_step_trace(&artifacts.step_trace, &trace)?;
    write_surface(&artifacts.surface, &surface)?;
    write_json(&artifacts.report, &artifacts.report_data)?;
    artifacts.model_data.save(&artifacts.model)?;
    Ok(artifacts)
}
