//! Adjustment payments `h_i(x_-i, gamma_-i, theta)`.
//!
//! The closed-form adjustment charges producer `i` the surplus it would add
//! in the worst case its prior allows (smallest capacity, largest cost type):
//!
//! ```text
//! h_i = -[ S*((min x_i, x_-i), (max gamma_i, gamma_-i), theta) - S*_-i(x_-i, gamma_-i, theta) ]
//! ```
//!
//! It exists, and makes the mechanism both individually rational and weakly
//! budget balanced, exactly when the worst-case marginal contributions never
//! add up to more than the surplus. [`existence_check`] samples that
//! inequality; [`corollary_check`] samples its zero-capacity special case.

use std::fmt;
use std::sync::Arc;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::LearnedAdjustment;
use crate::model::{Profile, ResourceVector};
use crate::optimizer::Solver;

/// Closed interval `[lo, hi]`, serialized as a two-element array.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval(pub f64, pub f64);

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        let i = Self(lo, hi);
        i.validate()?;
        Ok(i)
    }

    pub fn point(v: f64) -> Self {
        Self(v, v)
    }

    pub fn lo(&self) -> f64 {
        self.0
    }

    pub fn hi(&self) -> f64 {
        self.1
    }

    pub fn width(&self) -> f64 {
        self.1 - self.0
    }

    fn validate(&self) -> Result<()> {
        if !self.0.is_finite() || !self.1.is_finite() {
            return Err(Error::InvalidInput(format!("unbounded support [{}, {}]", self.0, self.1)));
        }
        if self.0 > self.1 {
            return Err(Error::InvalidInput(format!("support bounds out of order [{}, {}]", self.0, self.1)));
        }
        if self.0 < 0.0 {
            return Err(Error::InvalidInput(format!("support must be non-negative, got [{}, {}]", self.0, self.1)));
        }
        Ok(())
    }

    fn sample(&self, rng: &mut crate::rng::Rng) -> f64 {
        if self.0 == self.1 {
            self.0
        } else {
            rng.gen_range(self.0..=self.1)
        }
    }

    /// Map `v` into `[0, 1]` by the interval bounds; degenerate intervals map to 0.
    pub fn normalize(&self, v: f64) -> f64 {
        if self.width() > 0.0 {
            (v - self.0) / self.width()
        } else {
            0.0
        }
    }
}

/// Distribution tag attached to a prior support.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum Distribution {
    #[default]
    Uniform,
    Unsupported(String),
}

impl From<String> for Distribution {
    fn from(s: String) -> Self {
        match s.as_str() {
            "uniform" => Self::Uniform,
            _ => Self::Unsupported(s),
        }
    }
}

impl From<Distribution> for String {
    fn from(d: Distribution) -> Self {
        match d {
            Distribution::Uniform => "uniform".into(),
            Distribution::Unsupported(s) => s,
        }
    }
}

/// Bounds of the coordinator's prior over true capacities and types.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSupport {
    /// Per producer, per resource dimension.
    pub capacities: Vec<Vec<Interval>>,
    pub cost_types: Vec<Interval>,
    pub valuation_types: Vec<Interval>,
    #[serde(default)]
    pub distribution: Distribution,
}

impl PriorSupport {
    /// Identical scalar uniform priors for every producer and consumer.
    pub fn uniform(n: usize, m: usize, capacity: Interval, cost_type: Interval, valuation_type: Interval) -> Self {
        Self {
            capacities: vec![vec![capacity]; n],
            cost_types: vec![cost_type; n],
            valuation_types: vec![valuation_type; m],
            distribution: Distribution::Uniform,
        }
    }

    /// The priors of the reference experiment: capacities on [0,5], cost
    /// types on [0,1], valuation types on [0,1].
    pub fn reference(n: usize, m: usize) -> Self {
        Self::uniform(n, m, Interval(0.0, 5.0), Interval(0.0, 1.0), Interval(0.0, 1.0))
    }

    /// A support concentrated on one profile.
    pub fn degenerate(profile: &Profile) -> Self {
        Self {
            capacities: profile
                .capacities
                .iter()
                .map(|c| c.values().iter().map(|&v| Interval::point(v)).collect())
                .collect(),
            cost_types: profile.cost_types.iter().map(|&g| Interval::point(g)).collect(),
            valuation_types: profile.valuation_types.iter().map(|&t| Interval::point(t)).collect(),
            distribution: Distribution::Uniform,
        }
    }

    pub fn n(&self) -> usize {
        self.capacities.len()
    }

    pub fn m(&self) -> usize {
        self.valuation_types.len()
    }

    pub fn dim(&self) -> usize {
        self.capacities.first().map_or(1, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.capacities.len() != self.cost_types.len() {
            return Err(Error::Dimension("support capacity and cost-type counts differ".into()));
        }
        if self.n() == 0 || self.m() == 0 {
            return Err(Error::InvalidInput("support needs at least one producer and one consumer".into()));
        }
        let dim = self.dim();
        if dim == 0 || self.capacities.iter().any(|c| c.len() != dim) {
            return Err(Error::Dimension("support capacity dimensions are inconsistent".into()));
        }
        self.capacities
            .iter()
            .flatten()
            .chain(&self.cost_types)
            .chain(&self.valuation_types)
            .try_for_each(Interval::validate)
    }

    /// Smallest capacity producer `i` can have.
    pub fn min_capacity(&self, i: usize) -> ResourceVector {
        ResourceVector::from_raw(self.capacities[i].iter().map(Interval::lo).collect())
    }

    /// Largest cost type producer `i` can have.
    pub fn max_cost_type(&self, i: usize) -> f64 {
        self.cost_types[i].hi()
    }

    /// True when every producer's capacity support reaches zero.
    pub fn zero_inclusive(&self) -> bool {
        self.capacities.iter().flatten().all(|c| c.lo() == 0.0)
    }

    /// Draw sample `index` of the stream identified by `seed`.
    pub fn sample_one(&self, seed: u64, index: u64) -> Result<Profile> {
        if let Distribution::Unsupported(tag) = &self.distribution {
            return Err(Error::Config(format!("unsupported distribution `{tag}`")));
        }
        let mut rng = crate::rng::stream(seed, index);
        let capacities = self
            .capacities
            .iter()
            .map(|c| ResourceVector::from_raw(c.iter().map(|i| i.sample(&mut rng)).collect()))
            .collect();
        let cost_types = self.cost_types.iter().map(|i| i.sample(&mut rng)).collect();
        let valuation_types = self.valuation_types.iter().map(|i| i.sample(&mut rng)).collect();
        Ok(Profile { capacities, cost_types, valuation_types })
    }
}

/// `count` i.i.d. draws from the support, deterministic under `rng_seed`.
pub fn sample_prior(support: &PriorSupport, count: usize, rng_seed: u64) -> Result<Vec<Profile>> {
    support.validate()?;
    if count == 0 {
        return Err(Error::InvalidInput("sample count must be at least 1".into()));
    }
    (0..count as u64).map(|k| support.sample_one(rng_seed, k)).collect()
}

/// The closed-form adjustment for producer `i`, given everyone else.
pub fn analytic_adjustment(support: &PriorSupport, i: usize, others: &Profile, solver: &Solver) -> Result<f64> {
    support.validate()?;
    let n = others.n() + 1;
    if support.n() != n || i >= n {
        return Err(Error::Dimension(format!(
            "producer {i} of {n} does not fit a support over {} producers",
            support.n()
        )));
    }
    let worst = others.with_producer(i, support.min_capacity(i), support.max_cost_type(i));
    let with_worst = solver.solve(&worst)?.surplus;
    let without = solver.solve_with_population(others, n)?.surplus;
    Ok(-(with_worst - without))
}

/// Rule for `h_i` used when computing payments.
#[derive(Clone)]
pub enum AdjustmentModel {
    /// `h_i = 0`: plain VCG.
    Zero,
    /// Closed-form worst-case adjustment.
    Analytic { support: PriorSupport, solver: Solver },
    /// Trained per-producer networks.
    Learned(Arc<LearnedAdjustment>),
    /// Fixed per-producer values, for constructing test cases.
    Fixed(Vec<f64>),
}

impl fmt::Debug for AdjustmentModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "Zero"),
            Self::Analytic { .. } => write!(f, "Analytic"),
            Self::Learned(l) => write!(f, "Learned({} nets)", l.nets.len()),
            Self::Fixed(v) => write!(f, "Fixed({v:?})"),
        }
    }
}

impl AdjustmentModel {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Zero => "zero",
            Self::Analytic { .. } => "analytic",
            Self::Learned(_) => "learned",
            Self::Fixed(_) => "fixed",
        }
    }

    /// `h_i` from the other producers' reports and the consumer types.
    pub fn evaluate(&self, i: usize, others: &Profile) -> Result<f64> {
        match self {
            Self::Zero => Ok(0.0),
            Self::Analytic { support, solver } => analytic_adjustment(support, i, others, solver),
            Self::Learned(model) => model.evaluate(i, others),
            Self::Fixed(values) => values
                .get(i)
                .copied()
                .ok_or_else(|| Error::InvalidInput(format!("no fixed adjustment for producer {i}"))),
        }
    }

    /// `h_i` for every producer of `profile`.
    pub fn for_profile(&self, profile: &Profile) -> Result<Vec<f64>> {
        (0..profile.n()).map(|i| self.evaluate(i, &profile.without(i))).collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InequalityWitness {
    pub sample: usize,
    pub profile: Profile,
    /// Sum of worst-case marginal contributions.
    pub lhs: f64,
    /// `S*`.
    pub rhs: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InequalityReport {
    pub check: String,
    pub samples: usize,
    pub violations: Vec<InequalityWitness>,
    /// Smallest observed `rhs - lhs`.
    pub min_slack: f64,
}

impl InequalityReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }
}

const INEQUALITY_TOL: f64 = 1e-8;

fn sampled_inequality<F>(check: &str, support: &PriorSupport, sample_count: usize, rng_seed: u64, lhs_rhs: F) -> Result<InequalityReport>
where
    F: Fn(&Profile) -> Result<(f64, f64)> + Sync,
{
    support.validate()?;
    let samples = sample_count.max(1);
    let results: Vec<(usize, Profile, f64, f64)> = (0..samples)
        .into_par_iter()
        .map(|k| {
            let profile = support.sample_one(rng_seed, k as u64)?;
            let (lhs, rhs) = lhs_rhs(&profile)?;
            Ok((k, profile, lhs, rhs))
        })
        .collect::<Result<_>>()?;

    let mut min_slack = f64::INFINITY;
    let mut violations = Vec::new();
    for (sample, profile, lhs, rhs) in results {
        min_slack = min_slack.min(rhs - lhs);
        if lhs > rhs + INEQUALITY_TOL * rhs.abs().max(1.0) {
            violations.push(InequalityWitness { sample, profile, lhs, rhs });
        }
    }
    Ok(InequalityReport { check: check.into(), samples, violations, min_slack })
}

/// Sample `sum_i [S* - S*((min x_i, x_-i), (max gamma_i, gamma_-i))] <= S*`.
pub fn existence_check(support: &PriorSupport, solver: &Solver, sample_count: usize, rng_seed: u64) -> Result<InequalityReport> {
    sampled_inequality("existence", support, sample_count, rng_seed, |profile| {
        let full = solver.solve(profile)?.surplus;
        let mut lhs = 0.0;
        for i in 0..profile.n() {
            let worst = profile.with_report(i, support.min_capacity(i), support.max_cost_type(i));
            lhs += full - solver.solve(&worst)?.surplus;
        }
        Ok((lhs, full))
    })
}

/// Sample the zero-capacity form `sum_i [S* - S*((0, x_-i), gamma)] <= S*`,
/// which holds for super-additive valuations with decreasing cross marginal returns.
pub fn corollary_check(support: &PriorSupport, solver: &Solver, sample_count: usize, rng_seed: u64) -> Result<InequalityReport> {
    sampled_inequality("zero_capacity", support, sample_count, rng_seed, |profile| {
        let full = solver.solve(profile)?.surplus;
        let mut lhs = 0.0;
        for i in 0..profile.n() {
            let zeroed = profile.with_report(i, ResourceVector::zeros(profile.dim()), profile.cost_types[i]);
            lhs += full - solver.solve(&zeroed)?.surplus;
        }
        Ok((lhs, full))
    })
}
