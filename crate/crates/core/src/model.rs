//! Economy parameters, valuation and cost families, and social surplus.
//!
//! Producers are indexed `0..n`, consumers `0..m`. A valuation is always
//! evaluated against the *population* size `n` of the economy it belongs to,
//! even when fewer producers take part (a producer-removed counterfactual
//! passes `n - 1` resource vectors but still `population = n`). This keeps the
//! zero-input neutrality property exact: a producer supplying nothing and a
//! producer that is absent give the same value.

use std::fmt;
use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Non-negative resource quantities, one entry per resource dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct ResourceVector(Vec<f64>);

impl ResourceVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Dimension("resource vector must have at least one entry".into()));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidInput(format!(
                "resource entries must be finite and non-negative, got {bad}"
            )));
        }
        Ok(Self(values))
    }

    pub fn scalar(value: f64) -> Result<Self> {
        Self::new(vec![value])
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim.max(1)])
    }

    /// Caller guarantees entries are finite and non-negative.
    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite() && *v >= 0.0));
        Self(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == 0.0)
    }

    /// Elementwise product with acceptance ratios.
    pub fn scaled(&self, ratios: &[f64]) -> Self {
        Self(
            self.0
                .iter()
                .zip(ratios)
                .map(|(x, r)| (x * r).max(0.0))
                .collect(),
        )
    }

    /// True if any coordinate of `self` exceeds the matching coordinate of `limit`
    /// by more than a relative 1e-12.
    pub fn exceeds(&self, limit: &ResourceVector) -> bool {
        self.0
            .iter()
            .zip(&limit.0)
            .any(|(a, b)| *a > *b + 1e-12 * b.abs().max(1.0))
    }

    pub fn le(&self, other: &ResourceVector) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }
}

impl Serialize for ResourceVector {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.len() == 1 {
            s.serialize_f64(self.0[0])
        } else {
            self.0.serialize(s)
        }
    }
}

impl<'de> Deserialize<'de> for ResourceVector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Scalar(f64),
            Vector(Vec<f64>),
        }
        let values = match Raw::deserialize(d)? {
            Raw::Scalar(v) => vec![v],
            Raw::Vector(v) => v,
        };
        ResourceVector::new(values).map_err(serde::de::Error::custom)
    }
}

/// An individual valuation function `v(x, theta)`.
pub trait Valuation: Send + Sync {
    fn name(&self) -> &str;

    /// Value of the producers' combined input `x` to one consumer of type
    /// `theta`, in an economy of `population` producers.
    fn value(&self, x: &[ResourceVector], theta: f64, population: usize) -> f64;

    /// Value created by a single producer working alone.
    fn standalone(&self, x_i: &ResourceVector, theta: f64) -> f64 {
        self.value(std::slice::from_ref(x_i), theta, 1)
    }

    /// Partial derivatives with respect to every coordinate of `x`, if known
    /// in closed form.
    fn gradient(&self, _x: &[ResourceVector], _theta: f64, _population: usize) -> Option<Vec<Vec<f64>>> {
        None
    }
}

/// An individual cost function `c(x_i, gamma_i)`.
pub trait Cost: Send + Sync {
    fn name(&self) -> &str;

    fn cost(&self, x_i: &ResourceVector, gamma: f64) -> f64;

    fn gradient(&self, _x_i: &ResourceVector, _gamma: f64) -> Option<Vec<f64>> {
        None
    }
}

// Gradient floor for the square-root families at zero input.
const SQRT_FLOOR: f64 = 1e-12;

/// `theta * sqrt(n * sum_k x_k)`, summing over every coordinate.
#[derive(Clone, Copy, Debug, Default)]
pub struct SqrtSum;

impl Valuation for SqrtSum {
    fn name(&self) -> &str {
        "sqrt_sum"
    }

    fn value(&self, x: &[ResourceVector], theta: f64, population: usize) -> f64 {
        if theta == 0.0 {
            return 0.0;
        }
        let total: f64 = x.iter().map(ResourceVector::total).sum();
        theta * (population as f64 * total).sqrt()
    }

    fn gradient(&self, x: &[ResourceVector], theta: f64, population: usize) -> Option<Vec<Vec<f64>>> {
        let total: f64 = x.iter().map(ResourceVector::total).sum();
        let p = population as f64;
        let g = theta * p / (2.0 * (p * total.max(SQRT_FLOOR)).sqrt());
        Some(x.iter().map(|xi| vec![g; xi.dim()]).collect())
    }
}

/// `theta * sqrt(n * sum_k z_k^2)` with `z_k` the total input of producer `k`.
#[derive(Clone, Copy, Debug, Default)]
pub struct SqrtSumSquares;

impl Valuation for SqrtSumSquares {
    fn name(&self) -> &str {
        "sqrt_sum_squares"
    }

    fn value(&self, x: &[ResourceVector], theta: f64, population: usize) -> f64 {
        if theta == 0.0 {
            return 0.0;
        }
        let sq: f64 = x.iter().map(|xi| xi.total().powi(2)).sum();
        theta * (population as f64 * sq).sqrt()
    }

    fn gradient(&self, x: &[ResourceVector], theta: f64, population: usize) -> Option<Vec<Vec<f64>>> {
        let p = population as f64;
        let sq: f64 = x.iter().map(|xi| xi.total().powi(2)).sum();
        let denom = (p * sq.max(SQRT_FLOOR)).sqrt();
        Some(
            x.iter()
                .map(|xi| vec![theta * p * xi.total() / denom; xi.dim()])
                .collect(),
        )
    }
}

/// `theta * sum_k sqrt(z_k)`: additively separable, no synergy.
#[derive(Clone, Copy, Debug, Default)]
pub struct SeparableSqrt;

impl Valuation for SeparableSqrt {
    fn name(&self) -> &str {
        "separable_sqrt"
    }

    fn value(&self, x: &[ResourceVector], theta: f64, _population: usize) -> f64 {
        theta * x.iter().map(|xi| xi.total().sqrt()).sum::<f64>()
    }
}

/// `theta * (sum_k z_k)^2`: convex, increasing cross marginal returns.
#[derive(Clone, Copy, Debug, Default)]
pub struct SquaredSum;

impl Valuation for SquaredSum {
    fn name(&self) -> &str {
        "squared_sum"
    }

    fn value(&self, x: &[ResourceVector], theta: f64, _population: usize) -> f64 {
        theta * x.iter().map(ResourceVector::total).sum::<f64>().powi(2)
    }

    fn gradient(&self, x: &[ResourceVector], theta: f64, _population: usize) -> Option<Vec<Vec<f64>>> {
        let total: f64 = x.iter().map(ResourceVector::total).sum();
        Some(x.iter().map(|xi| vec![2.0 * theta * total; xi.dim()]).collect())
    }
}

/// `theta * n * min_k z_k`: perfect complements. Every producer is pivotal,
/// so the marginal contributions add up to more than the surplus.
#[derive(Clone, Copy, Debug, Default)]
pub struct MinComplement;

impl Valuation for MinComplement {
    fn name(&self) -> &str {
        "min_complement"
    }

    fn value(&self, x: &[ResourceVector], theta: f64, population: usize) -> f64 {
        if x.len() < population {
            // an absent producer contributes zero input
            return 0.0;
        }
        let min = x.iter().map(ResourceVector::total).fold(f64::INFINITY, f64::min);
        if min.is_finite() {
            theta * population as f64 * min
        } else {
            0.0
        }
    }
}

/// `gamma * sum_d x_d`.
#[derive(Clone, Copy, Debug, Default)]
pub struct LinearCost;

impl Cost for LinearCost {
    fn name(&self) -> &str {
        "linear"
    }

    fn cost(&self, x_i: &ResourceVector, gamma: f64) -> f64 {
        gamma * x_i.total()
    }

    fn gradient(&self, x_i: &ResourceVector, gamma: f64) -> Option<Vec<f64>> {
        Some(vec![gamma; x_i.dim()])
    }
}

/// `gamma * (sum_d x_d)^2`.
#[derive(Clone, Copy, Debug, Default)]
pub struct QuadraticCost;

impl Cost for QuadraticCost {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn cost(&self, x_i: &ResourceVector, gamma: f64) -> f64 {
        gamma * x_i.total().powi(2)
    }

    fn gradient(&self, x_i: &ResourceVector, gamma: f64) -> Option<Vec<f64>> {
        Some(vec![2.0 * gamma * x_i.total(); x_i.dim()])
    }
}

#[derive(Clone)]
pub enum ValuationFamily {
    SqrtSum,
    SqrtSumSquares,
    Custom(Arc<dyn Valuation>),
}

impl ValuationFamily {
    /// Look up one of the bundled custom families by name.
    pub fn named_custom(name: &str) -> Result<Self> {
        let family: Arc<dyn Valuation> = match name {
            "separable_sqrt" => Arc::new(SeparableSqrt),
            "squared_sum" => Arc::new(SquaredSum),
            "min_complement" => Arc::new(MinComplement),
            other => {
                return Err(Error::Config(format!("unknown custom valuation family `{other}`")))
            }
        };
        Ok(Self::Custom(family))
    }

    pub fn as_dyn(&self) -> &dyn Valuation {
        match self {
            Self::SqrtSum => &SqrtSum,
            Self::SqrtSumSquares => &SqrtSumSquares,
            Self::Custom(f) => f.as_ref(),
        }
    }

    pub fn name(&self) -> &str {
        self.as_dyn().name()
    }
}

impl fmt::Debug for ValuationFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ValuationFamily({})", self.name())
    }
}

#[derive(Clone)]
pub enum CostFamily {
    Linear,
    Custom(Arc<dyn Cost>),
}

impl CostFamily {
    pub fn named_custom(name: &str) -> Result<Self> {
        match name {
            "quadratic" => Ok(Self::Custom(Arc::new(QuadraticCost))),
            other => Err(Error::Config(format!("unknown custom cost family `{other}`"))),
        }
    }

    pub fn as_dyn(&self) -> &dyn Cost {
        match self {
            Self::Linear => &LinearCost,
            Self::Custom(f) => f.as_ref(),
        }
    }

    pub fn name(&self) -> &str {
        self.as_dyn().name()
    }
}

impl fmt::Debug for CostFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CostFamily({})", self.name())
    }
}

/// On-disk form of a family: `{"kind": "sqrt_sum"}` or
/// `{"kind": "custom", "name": "squared_sum"}`.
#[derive(Serialize, Deserialize)]
struct FamilyTag {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
}

impl Serialize for ValuationFamily {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let tag = match self {
            Self::SqrtSum => FamilyTag { kind: "sqrt_sum".into(), name: None },
            Self::SqrtSumSquares => FamilyTag { kind: "sqrt_sum_squares".into(), name: None },
            Self::Custom(f) => FamilyTag { kind: "custom".into(), name: Some(f.name().into()) },
        };
        tag.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ValuationFamily {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let tag = FamilyTag::deserialize(d)?;
        match (tag.kind.as_str(), tag.name) {
            ("sqrt_sum", _) => Ok(Self::SqrtSum),
            ("sqrt_sum_squares", _) => Ok(Self::SqrtSumSquares),
            ("custom", Some(name)) => Self::named_custom(&name).map_err(serde::de::Error::custom),
            ("custom", None) => Err(serde::de::Error::custom("custom family requires a `name`")),
            (other, _) => Err(serde::de::Error::custom(format!("unknown valuation family `{other}`"))),
        }
    }
}

impl Serialize for CostFamily {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let tag = match self {
            Self::Linear => FamilyTag { kind: "linear".into(), name: None },
            Self::Custom(f) => FamilyTag { kind: "custom".into(), name: Some(f.name().into()) },
        };
        tag.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CostFamily {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let tag = FamilyTag::deserialize(d)?;
        match (tag.kind.as_str(), tag.name) {
            ("linear", _) => Ok(Self::Linear),
            ("custom", Some(name)) => Self::named_custom(&name).map_err(serde::de::Error::custom),
            ("custom", None) => Err(serde::de::Error::custom("custom family requires a `name`")),
            (other, _) => Err(serde::de::Error::custom(format!("unknown cost family `{other}`"))),
        }
    }
}

/// The valuation and cost families shared by everyone in an economy.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Technology {
    pub valuation_family: ValuationFamily,
    pub cost_family: CostFamily,
}

impl Default for Technology {
    fn default() -> Self {
        Self {
            valuation_family: ValuationFamily::SqrtSum,
            cost_family: CostFamily::Linear,
        }
    }
}

impl Technology {
    pub fn new(valuation_family: ValuationFamily, cost_family: CostFamily) -> Self {
        Self { valuation_family, cost_family }
    }

    pub fn valuation(&self) -> &dyn Valuation {
        self.valuation_family.as_dyn()
    }

    pub fn cost(&self) -> &dyn Cost {
        self.cost_family.as_dyn()
    }

    /// Total consumer valuation `sum_j v(x, theta_j)`.
    pub fn total_value(&self, x: &[ResourceVector], thetas: &[f64], population: usize) -> f64 {
        let v = self.valuation();
        thetas.iter().map(|&t| v.value(x, t, population)).sum()
    }

    pub fn total_cost(&self, x: &[ResourceVector], gammas: &[f64]) -> f64 {
        let c = self.cost();
        x.iter().zip(gammas).map(|(xi, &g)| c.cost(xi, g)).sum()
    }

    /// `sum_j v - sum_i c`, unchecked.
    pub fn surplus(&self, x: &[ResourceVector], gammas: &[f64], thetas: &[f64], population: usize) -> f64 {
        self.total_value(x, thetas, population) - self.total_cost(x, gammas)
    }

    /// Whether the closed-form water-fill solver applies.
    pub fn is_waterfill_family(&self) -> bool {
        matches!(self.valuation_family, ValuationFamily::SqrtSum)
            && matches!(self.cost_family, CostFamily::Linear)
    }
}

/// Capacities and types of one auction instance: either the truth or the reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub capacities: Vec<ResourceVector>,
    pub cost_types: Vec<f64>,
    pub valuation_types: Vec<f64>,
}

impl Profile {
    pub fn new(capacities: Vec<ResourceVector>, cost_types: Vec<f64>, valuation_types: Vec<f64>) -> Result<Self> {
        let p = Self { capacities, cost_types, valuation_types };
        p.validate()?;
        Ok(p)
    }

    /// Scalar-resource profile.
    pub fn scalar(capacities: &[f64], cost_types: &[f64], valuation_types: &[f64]) -> Result<Self> {
        let caps = capacities
            .iter()
            .map(|&c| ResourceVector::scalar(c))
            .collect::<Result<Vec<_>>>()?;
        Self::new(caps, cost_types.to_vec(), valuation_types.to_vec())
    }

    pub fn validate(&self) -> Result<()> {
        if self.capacities.len() != self.cost_types.len() {
            return Err(Error::Dimension(format!(
                "{} capacities but {} cost types",
                self.capacities.len(),
                self.cost_types.len()
            )));
        }
        if let Some(first) = self.capacities.first() {
            if self.capacities.iter().any(|c| c.dim() != first.dim()) {
                return Err(Error::Dimension("capacities have mixed resource dimensions".into()));
            }
        }
        check_types("cost type", &self.cost_types)?;
        check_types("valuation type", &self.valuation_types)?;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.capacities.len()
    }

    pub fn m(&self) -> usize {
        self.valuation_types.len()
    }

    pub fn dim(&self) -> usize {
        self.capacities.first().map_or(1, ResourceVector::dim)
    }

    /// The profile with producer `i` deleted.
    pub fn without(&self, i: usize) -> Profile {
        let mut p = self.clone();
        p.capacities.remove(i);
        p.cost_types.remove(i);
        p
    }

    /// Insert a producer at position `i` (inverse of [`Profile::without`]).
    pub fn with_producer(&self, i: usize, capacity: ResourceVector, cost_type: f64) -> Profile {
        let mut p = self.clone();
        p.capacities.insert(i, capacity);
        p.cost_types.insert(i, cost_type);
        p
    }

    /// Replace producer `i`'s capacity and cost type.
    pub fn with_report(&self, i: usize, capacity: ResourceVector, cost_type: f64) -> Profile {
        let mut p = self.clone();
        p.capacities[i] = capacity;
        p.cost_types[i] = cost_type;
        p
    }
}

fn check_types(what: &str, values: &[f64]) -> Result<()> {
    match values.iter().find(|v| !v.is_finite() || **v < 0.0) {
        Some(bad) => Err(Error::InvalidInput(format!("{what} must be finite and non-negative, got {bad}"))),
        None => Ok(()),
    }
}

/// Full ground truth of one auction instance.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "RawEconomy", into = "RawEconomy")]
pub struct Economy {
    pub truth: Profile,
    pub technology: Technology,
}

#[derive(Serialize, Deserialize)]
struct RawEconomy {
    n: usize,
    m: usize,
    capacities: Vec<ResourceVector>,
    cost_types: Vec<f64>,
    valuation_types: Vec<f64>,
    valuation_family: ValuationFamily,
    cost_family: CostFamily,
}

impl TryFrom<RawEconomy> for Economy {
    type Error = Error;

    fn try_from(raw: RawEconomy) -> Result<Self> {
        let economy = Economy::new(
            Profile {
                capacities: raw.capacities,
                cost_types: raw.cost_types,
                valuation_types: raw.valuation_types,
            },
            Technology::new(raw.valuation_family, raw.cost_family),
        )?;
        if economy.n() != raw.n || economy.m() != raw.m {
            return Err(Error::Dimension(format!(
                "declared n={}, m={} but lists give n={}, m={}",
                raw.n,
                raw.m,
                economy.n(),
                economy.m()
            )));
        }
        Ok(economy)
    }
}

impl From<Economy> for RawEconomy {
    fn from(e: Economy) -> Self {
        RawEconomy {
            n: e.n(),
            m: e.m(),
            capacities: e.truth.capacities,
            cost_types: e.truth.cost_types,
            valuation_types: e.truth.valuation_types,
            valuation_family: e.technology.valuation_family,
            cost_family: e.technology.cost_family,
        }
    }
}

impl Economy {
    pub fn new(truth: Profile, technology: Technology) -> Result<Self> {
        truth.validate()?;
        if truth.n() == 0 {
            return Err(Error::InvalidInput("economy needs at least one producer".into()));
        }
        if truth.m() == 0 {
            return Err(Error::InvalidInput("economy needs at least one consumer".into()));
        }
        Ok(Self { truth, technology })
    }

    pub fn n(&self) -> usize {
        self.truth.n()
    }

    pub fn m(&self) -> usize {
        self.truth.m()
    }

    pub fn truthful_bids(&self) -> BidProfile {
        BidProfile::from(self.truth.clone())
    }
}

/// Sealed bids submitted by the producers (and consumer reports).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BidProfile {
    pub reported_capacities: Vec<ResourceVector>,
    pub reported_cost_types: Vec<f64>,
    pub reported_valuation_types: Vec<f64>,
}

impl From<Profile> for BidProfile {
    fn from(p: Profile) -> Self {
        Self {
            reported_capacities: p.capacities,
            reported_cost_types: p.cost_types,
            reported_valuation_types: p.valuation_types,
        }
    }
}

impl BidProfile {
    pub fn to_profile(&self) -> Profile {
        Profile {
            capacities: self.reported_capacities.clone(),
            cost_types: self.reported_cost_types.clone(),
            valuation_types: self.reported_valuation_types.clone(),
        }
    }

    /// Check that the bids fit the economy they are submitted to.
    pub fn validate_against(&self, economy: &Economy) -> Result<()> {
        let p = self.to_profile();
        p.validate()?;
        if p.n() != economy.n() || p.m() != economy.m() {
            return Err(Error::Dimension(format!(
                "bids cover n={}, m={} but economy has n={}, m={}",
                p.n(),
                p.m(),
                economy.n(),
                economy.m()
            )));
        }
        if p.dim() != economy.truth.dim() {
            return Err(Error::Dimension("bid resource dimension differs from economy".into()));
        }
        Ok(())
    }
}

fn check_allocation(x: &[ResourceVector]) -> Result<()> {
    if let Some(first) = x.first() {
        if x.iter().any(|xi| xi.dim() != first.dim()) {
            return Err(Error::Dimension("inputs have mixed resource dimensions".into()));
        }
    }
    Ok(())
}

fn check_type(what: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} must be finite and non-negative, got {v}")))
    }
}

/// Checked `v(x, theta_j)` for an economy of `population` producers.
pub fn eval_valuation(family: &ValuationFamily, x: &[ResourceVector], theta: f64, population: usize) -> Result<f64> {
    check_allocation(x)?;
    check_type("valuation type", theta)?;
    if x.len() > population {
        return Err(Error::Dimension(format!(
            "{} inputs exceed population {population}",
            x.len()
        )));
    }
    let v = family.as_dyn().value(x, theta, population);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("valuation {} returned {v}", family.name())))
    }
}

/// Checked `c(x_i, gamma_i)`.
pub fn eval_cost(family: &CostFamily, x_i: &ResourceVector, gamma: f64) -> Result<f64> {
    check_type("cost type", gamma)?;
    let c = family.as_dyn().cost(x_i, gamma);
    if c.is_finite() {
        Ok(c)
    } else {
        Err(Error::NonFinite(format!("cost {} returned {c}", family.name())))
    }
}

/// `S(x) = sum_j v(x, theta_j) - sum_i c(x_i, gamma_i)` at the true types.
pub fn social_surplus(economy: &Economy, accepted: &[ResourceVector]) -> Result<f64> {
    if accepted.len() != economy.n() {
        return Err(Error::Dimension(format!(
            "{} accepted vectors for {} producers",
            accepted.len(),
            economy.n()
        )));
    }
    check_allocation(accepted)?;
    if accepted.first().map(ResourceVector::dim) != Some(economy.truth.dim()) {
        return Err(Error::Dimension("accepted resource dimension differs from economy".into()));
    }
    let s = economy.technology.surplus(
        accepted,
        &economy.truth.cost_types,
        &economy.truth.valuation_types,
        economy.n(),
    );
    if s.is_finite() {
        Ok(s)
    } else {
        Err(Error::NonFinite(format!("surplus {s}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assumption {
    /// Valuation and cost nondecreasing in inputs and types.
    Monotonicity,
    /// Zero input changes nothing and costs nothing.
    ZeroInput,
    /// `v(x) >= sum_i v(x_i)`.
    SuperAdditivity,
    /// Decreasing cross marginal returns.
    CrossMarginal,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AssumptionViolation {
    pub assumption: Assumption,
    pub producer: Option<usize>,
    pub x: Vec<ResourceVector>,
    pub x_prime: Vec<ResourceVector>,
    pub theta: f64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub valuation_family: String,
    pub cost_family: String,
    pub samples: usize,
    pub violations: Vec<AssumptionViolation>,
}

impl AssumptionReport {
    pub fn count(&self, which: Assumption) -> usize {
        self.violations.iter().filter(|v| v.assumption == which).count()
    }

    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }
}

const ASSUMPTION_TOL: f64 = 1e-9;

fn tol_for(a: f64, b: f64) -> f64 {
    ASSUMPTION_TOL * a.abs().max(b.abs()).max(1.0)
}

/// `v(x) - sum_i v_standalone(x_i)`; negative means super-additivity fails.
pub fn superadditivity_gap(v: &dyn Valuation, x: &[ResourceVector], theta: f64) -> f64 {
    let whole = v.value(x, theta, x.len());
    let parts: f64 = x.iter().map(|xi| v.standalone(xi, theta)).sum();
    whole - parts
}

/// Right minus left side of the decreasing-cross-marginal inequality for
/// producer `i`, with `x >= x_prime` elementwise. Negative means it fails.
pub fn cross_marginal_gap(v: &dyn Valuation, i: usize, x: &[ResourceVector], x_prime: &[ResourceVector], theta: f64) -> f64 {
    let n = x.len();
    let mut own_low_high = x.to_vec();
    own_low_high[i] = x_prime[i].clone();
    let mut own_high_low = x_prime.to_vec();
    own_high_low[i] = x[i].clone();
    let lhs = v.value(x, theta, n) - v.value(&own_low_high, theta, n);
    let rhs = v.value(&own_high_low, theta, n) - v.value(x_prime, theta, n);
    rhs - lhs
}

/// Sample random points and report violations of the four structural
/// assumptions on the valuation and cost families.
pub fn check_assumptions(technology: &Technology, sample_count: usize, rng_seed: u64) -> AssumptionReport {
    let v = technology.valuation();
    let c = technology.cost();
    let mut rng = crate::rng::stream(rng_seed, 0);
    let mut violations = Vec::new();
    let draw = |rng: &mut crate::rng::Rng, n: usize, hi: f64| -> Vec<ResourceVector> {
        (0..n)
            .map(|_| ResourceVector::from_raw(vec![rng.gen_range(0.0..=hi)]))
            .collect()
    };

    for _ in 0..sample_count.max(1) {
        let n = rng.gen_range(1..=4usize);
        let x_prime = draw(&mut rng, n, 5.0);
        let x: Vec<ResourceVector> = x_prime
            .iter()
            .map(|xp| ResourceVector::from_raw(vec![xp.values()[0] + rng.gen_range(0.0..=2.0)]))
            .collect();
        let theta_lo = rng.gen_range(0.0..=1.0);
        let theta = theta_lo + rng.gen_range(0.0..=1.0);
        let i = rng.gen_range(0..n);
        let gamma_lo = rng.gen_range(0.0..=1.0);
        let gamma = gamma_lo + rng.gen_range(0.0..=1.0);

        let mut record = |assumption, producer, x: &[ResourceVector], x_prime: &[ResourceVector], theta, lhs: f64, rhs: f64| {
            violations.push(AssumptionViolation {
                assumption,
                producer,
                x: x.to_vec(),
                x_prime: x_prime.to_vec(),
                theta,
                lhs,
                rhs,
            });
        };

        // monotonicity: v(x') <= v(x), v(x, theta_lo) <= v(x, theta), same for cost
        let (lo, hi) = (v.value(&x_prime, theta, n), v.value(&x, theta, n));
        if lo > hi + tol_for(lo, hi) {
            record(Assumption::Monotonicity, None, &x, &x_prime, theta, lo, hi);
        }
        let (lo, hi) = (v.value(&x, theta_lo, n), v.value(&x, theta, n));
        if lo > hi + tol_for(lo, hi) {
            record(Assumption::Monotonicity, None, &x, &x, theta, lo, hi);
        }
        let (lo, hi) = (c.cost(&x_prime[i], gamma), c.cost(&x[i], gamma));
        if lo > hi + tol_for(lo, hi) {
            record(Assumption::Monotonicity, Some(i), &x, &x_prime, gamma, lo, hi);
        }
        let (lo, hi) = (c.cost(&x[i], gamma_lo), c.cost(&x[i], gamma));
        if lo > hi + tol_for(lo, hi) {
            record(Assumption::Monotonicity, Some(i), &x, &x, gamma, lo, hi);
        }

        // zero input: v((0, x_-i)) == v(x_-i), c(0) == 0
        let mut zeroed = x.clone();
        zeroed[i] = ResourceVector::zeros(x[i].dim());
        let mut removed = x.clone();
        removed.remove(i);
        let (a, b) = (v.value(&zeroed, theta, n), v.value(&removed, theta, n));
        if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
            record(Assumption::ZeroInput, Some(i), &zeroed, &removed, theta, a, b);
        }
        let zero_cost = c.cost(&ResourceVector::zeros(x[i].dim()), gamma);
        if zero_cost != 0.0 {
            record(Assumption::ZeroInput, Some(i), &zeroed, &[], gamma, zero_cost, 0.0);
        }

        // super-additivity
        let gap = superadditivity_gap(v, &x, theta);
        let whole = v.value(&x, theta, n);
        if gap < -tol_for(whole, whole - gap) {
            record(Assumption::SuperAdditivity, None, &x, &[], theta, whole, whole - gap);
        }

        // decreasing cross marginal returns
        let gap = cross_marginal_gap(v, i, &x, &x_prime, theta);
        let scale = v.value(&x, theta, n);
        if gap < -tol_for(scale, gap) {
            record(Assumption::CrossMarginal, Some(i), &x, &x_prime, theta, -gap, 0.0);
        }
    }

    AssumptionReport {
        valuation_family: technology.valuation_family.name().to_string(),
        cost_family: technology.cost_family.name().to_string(),
        samples: sample_count.max(1),
        violations,
    }
}
