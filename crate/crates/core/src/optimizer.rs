//! Surplus-maximizing acceptance ratios.
//!
//! The coordinator picks `eta in [0,1]^(n x dim)` maximizing
//! `S(x_hat . eta, gamma_hat, theta_hat)`. Two solvers are provided: a closed
//! form water-fill for the square-root valuation with linear costs, and a
//! multistart projected gradient ascent for everything else.

use std::cmp::Ordering;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Profile, ResourceVector, Technology};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Analytic,
    #[serde(alias = "gradient")]
    ProjectedGradient,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(Self::Analytic),
            "gradient" | "projected_gradient" => Ok(Self::ProjectedGradient),
            other => Err(Error::Config(format!("unknown method `{other}` (expected analytic|gradient)"))),
        }
    }
}

/// Settings for projected gradient ascent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradientConfig {
    pub fd_step: f64,
    pub armijo: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub random_restarts: usize,
    pub seed: u64,
}

impl Default for GradientConfig {
    fn default() -> Self {
        Self {
            fd_step: 1e-6,
            armijo: 1e-4,
            tolerance: 1e-8,
            max_iterations: 10_000,
            random_restarts: 8,
            seed: 0x5eed,
        }
    }
}

/// Per-producer acceptance ratios, each component in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRatios(pub Vec<Vec<f64>>);

impl AcceptanceRatios {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.0[i]
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    pub restarts: usize,
    pub gradient_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    pub ratios: AcceptanceRatios,
    pub accepted: Vec<ResourceVector>,
    pub surplus: f64,
    pub diagnostics: SolverDiagnostics,
}

impl AllocationResult {
    /// The empty coalition: nobody to accept anything from.
    pub fn empty() -> Self {
        Self {
            ratios: AcceptanceRatios(Vec::new()),
            accepted: Vec::new(),
            surplus: 0.0,
            diagnostics: SolverDiagnostics::default(),
        }
    }
}

/// A configured solver for one technology.
#[derive(Clone, Debug)]
pub struct Solver {
    pub technology: Technology,
    pub method: Method,
    pub gradient: GradientConfig,
}

impl Solver {
    pub fn new(technology: Technology, method: Method) -> Self {
        Self { technology, method, gradient: GradientConfig::default() }
    }

    pub fn analytic(technology: Technology) -> Self {
        Self::new(technology, Method::Analytic)
    }

    pub fn with_gradient_config(mut self, config: GradientConfig) -> Self {
        self.gradient = config;
        self
    }

    /// `eta*` and `S*` for the full coalition described by `profile`.
    pub fn solve(&self, profile: &Profile) -> Result<AllocationResult> {
        self.solve_with_population(profile, profile.n())
    }

    /// Solve with the valuation evaluated for an economy of `population`
    /// producers; `profile` may list fewer (removed producers count as zero input).
    pub fn solve_with_population(&self, profile: &Profile, population: usize) -> Result<AllocationResult> {
        if profile.n() == 0 {
            return Ok(AllocationResult::empty());
        }
        let result = match self.method {
            Method::Analytic => waterfill(&self.technology, profile, population)?,
            Method::ProjectedGradient => projected_gradient(&self.technology, profile, population, &self.gradient)?,
        };
        if !result.surplus.is_finite() {
            return Err(Error::NonFinite(format!("optimal surplus {}", result.surplus)));
        }
        Ok(result)
    }

    /// `eta^{-i*}` and `S*_{-i}`: the problem with producer `i` deleted.
    pub fn counterfactual(&self, profile: &Profile, removed: usize) -> Result<AllocationResult> {
        if removed >= profile.n() {
            return Err(Error::InvalidInput(format!(
                "cannot remove producer {removed} from {} producers",
                profile.n()
            )));
        }
        if profile.n() == 1 {
            return Ok(AllocationResult::empty());
        }
        self.solve_with_population(&profile.without(removed), profile.n())
    }

    /// All `n` counterfactuals, solved in parallel.
    pub fn counterfactuals(&self, profile: &Profile) -> Result<Vec<AllocationResult>> {
        use rayon::prelude::*;
        (0..profile.n())
            .into_par_iter()
            .map(|i| self.counterfactual(profile, i))
            .collect()
    }

    pub fn max_surplus(&self, profile: &Profile) -> Result<f64> {
        Ok(self.solve(profile)?.surplus)
    }
}

/// Solve for the optimal acceptance ratios with the chosen method.
pub fn optimize_acceptance(technology: &Technology, profile: &Profile, method: Method) -> Result<AllocationResult> {
    profile.validate()?;
    Solver::new(technology.clone(), method).solve(profile)
}

/// Closed-form solution for `theta * sqrt(n * sum x)` with linear costs and
/// scalar resources.
pub fn analytic_waterfill(capacities: &[f64], cost_types: &[f64], valuation_types: &[f64]) -> Result<AllocationResult> {
    let profile = Profile::scalar(capacities, cost_types, valuation_types)?;
    waterfill(&Technology::default(), &profile, profile.n())
}

/// Solve the producer-removed problem.
pub fn counterfactual_surplus(technology: &Technology, profile: &Profile, removed: usize, method: Method) -> Result<AllocationResult> {
    profile.validate()?;
    Solver::new(technology.clone(), method).counterfactual(profile, removed)
}

fn finish(technology: &Technology, profile: &Profile, population: usize, ratios: Vec<Vec<f64>>, diagnostics: SolverDiagnostics) -> AllocationResult {
    let accepted: Vec<ResourceVector> = profile
        .capacities
        .iter()
        .zip(&ratios)
        .map(|(cap, r)| cap.scaled(r))
        .collect();
    let surplus = technology.surplus(&accepted, &profile.cost_types, &profile.valuation_types, population);
    AllocationResult { ratios: AcceptanceRatios(ratios), accepted, surplus, diagnostics }
}

fn waterfill(technology: &Technology, profile: &Profile, population: usize) -> Result<AllocationResult> {
    if !technology.is_waterfill_family() {
        return Err(Error::UnsupportedFamily {
            operation: "analytic water-fill",
            detail: format!(
                "needs sqrt_sum valuation with linear cost, got {} / {}",
                technology.valuation_family.name(),
                technology.cost_family.name()
            ),
        });
    }
    if profile.dim() != 1 {
        return Err(Error::UnsupportedFamily {
            operation: "analytic water-fill",
            detail: format!("needs scalar resources, got dimension {}", profile.dim()),
        });
    }

    let n = profile.n();
    let theta_sum: f64 = profile.valuation_types.iter().sum();
    let p = population as f64;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        profile.cost_types[a]
            .partial_cmp(&profile.cost_types[b])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut ratios = vec![vec![0.0]; n];
    let mut used = 0.0;
    if theta_sum > 0.0 {
        for i in order {
            let cap = profile.capacities[i].values()[0];
            if cap == 0.0 {
                continue;
            }
            let gamma = profile.cost_types[i];
            // marginal value theta_sum * sqrt(p) / (2 sqrt(U)) equals gamma at U = target
            let target = if gamma == 0.0 {
                f64::INFINITY
            } else {
                p * theta_sum * theta_sum / (4.0 * gamma * gamma)
            };
            if target <= used {
                break;
            }
            let room = target - used;
            if room >= cap {
                ratios[i][0] = 1.0;
                used += cap;
            } else {
                ratios[i][0] = room / cap;
                break;
            }
        }
    }
    Ok(finish(technology, profile, population, ratios, SolverDiagnostics::default()))
}

struct Problem<'a> {
    technology: &'a Technology,
    profile: &'a Profile,
    population: usize,
    dim: usize,
    caps: Vec<f64>,
}

impl Problem<'_> {
    fn accepted(&self, eta: &[f64]) -> Vec<ResourceVector> {
        eta.chunks(self.dim)
            .zip(self.caps.chunks(self.dim))
            .map(|(e, c)| ResourceVector::from_raw(e.iter().zip(c).map(|(e, c)| (e * c).max(0.0)).collect()))
            .collect()
    }

    fn objective(&self, eta: &[f64]) -> f64 {
        let x = self.accepted(eta);
        self.technology
            .surplus(&x, &self.profile.cost_types, &self.profile.valuation_types, self.population)
    }

    fn gradient(&self, eta: &[f64], fd_step: f64) -> Vec<f64> {
        let x = self.accepted(eta);
        let v = self.technology.valuation();
        let c = self.technology.cost();
        let analytic = self.profile.valuation_types.iter().try_fold(vec![0.0; eta.len()], |mut acc, &theta| {
            let g = v.gradient(&x, theta, self.population)?;
            for (a, gi) in acc.iter_mut().zip(g.iter().flatten()) {
                *a += gi;
            }
            Some(acc)
        });
        let cost_grad: Option<Vec<f64>> = x
            .iter()
            .zip(&self.profile.cost_types)
            .map(|(xi, &g)| c.gradient(xi, g))
            .collect::<Option<Vec<Vec<f64>>>>()
            .map(|v| v.concat());

        match (analytic, cost_grad) {
            (Some(dv), Some(dc)) => dv
                .iter()
                .zip(&dc)
                .zip(&self.caps)
                .map(|((dv, dc), cap)| cap * (dv - dc))
                .collect(),
            _ => self.finite_difference(eta, fd_step),
        }
    }

    fn finite_difference(&self, eta: &[f64], step: f64) -> Vec<f64> {
        let mut probe = eta.to_vec();
        (0..eta.len())
            .map(|k| {
                let hi = (eta[k] + step).min(1.0);
                let lo = (eta[k] - step).max(0.0);
                probe[k] = hi;
                let f_hi = self.objective(&probe);
                probe[k] = lo;
                let f_lo = self.objective(&probe);
                probe[k] = eta[k];
                if hi > lo {
                    (f_hi - f_lo) / (hi - lo)
                } else {
                    0.0
                }
            })
            .collect()
    }
}

fn project(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

struct Ascent {
    eta: Vec<f64>,
    value: f64,
    iterations: usize,
    gradient_norm: f64,
}

fn ascend(problem: &Problem<'_>, start: Vec<f64>, config: &GradientConfig) -> Ascent {
    let mut eta: Vec<f64> = start.into_iter().map(project).collect();
    let mut value = problem.objective(&eta);
    let mut step: f64 = 1.0;
    let mut gradient_norm = f64::INFINITY;
    let mut iterations = 0;

    while iterations < config.max_iterations {
        let g = problem.gradient(&eta, config.fd_step);
        gradient_norm = eta
            .iter()
            .zip(&g)
            .map(|(e, gi)| (project(e + gi) - e).powi(2))
            .sum::<f64>()
            .sqrt();
        if gradient_norm.is_nan() || gradient_norm < config.tolerance {
            break;
        }
        iterations += 1;

        step = (step * 2.0).min(1e8);
        let mut accepted = false;
        while step > 1e-20 {
            let candidate: Vec<f64> = eta.iter().zip(&g).map(|(e, gi)| project(e + step * gi)).collect();
            let cand_value = problem.objective(&candidate);
            let predicted: f64 = candidate
                .iter()
                .zip(&eta)
                .zip(&g)
                .map(|((c, e), gi)| gi * (c - e))
                .sum();
            if cand_value.is_finite() && cand_value >= value + config.armijo * predicted {
                eta = candidate;
                value = cand_value;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ascent { eta, value, iterations, gradient_norm }
}

fn projected_gradient(technology: &Technology, profile: &Profile, population: usize, config: &GradientConfig) -> Result<AllocationResult> {
    let dim = profile.dim();
    let caps: Vec<f64> = profile.capacities.iter().flat_map(|c| c.values().to_vec()).collect();
    let len = caps.len();
    let problem = Problem { technology, profile, population, dim, caps };

    let mut starts = vec![vec![0.0; len], vec![1.0; len]];
    for r in 0..config.random_restarts {
        let mut rng = crate::rng::stream(config.seed, r as u64);
        starts.push((0..len).map(|_| rng.gen_range(0.0..=1.0)).collect());
    }

    let mut best: Option<(Ascent, Vec<ResourceVector>)> = None;
    let mut total_iterations = 0;
    for start in starts {
        let run = ascend(&problem, start, config);
        total_iterations += run.iterations;
        if !run.value.is_finite() {
            continue;
        }
        let accepted = problem.accepted(&run.eta);
        let better = match &best {
            None => true,
            Some((b, b_acc)) => {
                let tie = 1e-12 * b.value.abs().max(1.0);
                run.value > b.value + tie || ((run.value - b.value).abs() <= tie && lexicographically_smaller(&accepted, b_acc))
            }
        };
        if better {
            best = Some((run, accepted));
        }
    }

    let (run, _) = best.ok_or_else(|| Error::NonFinite("every restart produced a non-finite surplus".into()))?;
    let diagnostics = SolverDiagnostics {
        iterations: total_iterations,
        restarts: config.random_restarts + 2,
        gradient_norm: run.gradient_norm,
    };
    let ratios = run.eta.chunks(dim).map(<[f64]>::to_vec).collect();
    Ok(finish(technology, profile, population, ratios, diagnostics))
}

fn lexicographically_smaller(a: &[ResourceVector], b: &[ResourceVector]) -> bool {
    let flat = |v: &[ResourceVector]| v.iter().flat_map(|x| x.values().to_vec()).collect::<Vec<f64>>();
    flat(a)
        .iter()
        .zip(flat(b).iter())
        .find_map(|(x, y)| match x.partial_cmp(y) {
            Some(Ordering::Equal) | None => None,
            Some(o) => Some(o == Ordering::Less),
        })
        .unwrap_or(false)
}
