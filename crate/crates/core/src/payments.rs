//! PVCG payments: VCG term plus adjustment, with the over-capacity punishment.

use serde::{Deserialize, Serialize};

use crate::adjustment::AdjustmentModel;
use crate::error::{Error, Result};
use crate::model::{BidProfile, Economy, Profile, ResourceVector, Technology};
use crate::optimizer::{AllocationResult, GradientConfig, Method, Solver};

pub const DEFAULT_PUNISHMENT: f64 = 1e6;

const FORM_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaymentBreakdown {
    /// `S*` on the reports.
    pub surplus: f64,
    /// `S*_-i` on the reports.
    pub counterfactual_surplus: Vec<f64>,
    pub accepted: Vec<ResourceVector>,
    pub tau: Vec<f64>,
    pub adjustment: Vec<f64>,
    pub total: Vec<f64>,
    /// `p_i - c(delivered_i, true gamma_i)`, or `-P` when punished.
    pub utilities: Vec<f64>,
    pub coalition_income: f64,
    /// `coalition_income - sum_i total_i`.
    pub budget_slack: f64,
    pub punished: Vec<bool>,
    pub punishment: f64,
}

impl PaymentBreakdown {
    /// `S* - S*_-i`.
    pub fn marginal(&self, i: usize) -> f64 {
        self.surplus - self.counterfactual_surplus[i]
    }

    pub fn n(&self) -> usize {
        self.tau.len()
    }
}

/// VCG payments `tau_i = S* - S*_-i + c(x_i*, gamma_hat_i)`.
///
/// Also evaluates the expanded form (value difference minus the change in the
/// other producers' costs) and fails if the two disagree.
pub fn vcg_tau(technology: &Technology, profile: &Profile, allocation: &AllocationResult, counterfactuals: &[AllocationResult]) -> Result<Vec<f64>> {
    let n = profile.n();
    if counterfactuals.len() != n {
        return Err(Error::Dimension(format!("{} counterfactuals for {n} producers", counterfactuals.len())));
    }
    if allocation.accepted.len() != n {
        return Err(Error::Dimension(format!("allocation covers {} of {n} producers", allocation.accepted.len())));
    }
    let v = technology.valuation();
    let c = technology.cost();
    let gammas = &profile.cost_types;
    let mut tau = Vec::with_capacity(n);
    for (i, cf) in counterfactuals.iter().enumerate() {
        if cf.accepted.len() != n - 1 {
            return Err(Error::Dimension(format!("counterfactual {i} covers {} producers, expected {}", cf.accepted.len(), n - 1)));
        }
        let own_cost = c.cost(&allocation.accepted[i], gammas[i]);
        let short = allocation.surplus - cf.surplus + own_cost;

        let value_diff: f64 = profile
            .valuation_types
            .iter()
            .map(|&t| v.value(&allocation.accepted, t, n) - v.value(&cf.accepted, t, n))
            .sum();
        let others: Vec<usize> = (0..n).filter(|&k| k != i).collect();
        let cost_diff: f64 = others
            .iter()
            .zip(&cf.accepted)
            .map(|(&k, x_cf)| c.cost(&allocation.accepted[k], gammas[k]) - c.cost(x_cf, gammas[k]))
            .sum();
        let expanded = value_diff - cost_diff;

        if (short - expanded).abs() > FORM_TOL * short.abs().max(1.0) {
            return Err(Error::NonFinite(format!(
                "VCG forms disagree for producer {i}: {short} vs {expanded}"
            )));
        }
        tau.push(short);
    }
    Ok(tau)
}

/// `sum_j v(x, theta_j)`: the demand side's full surplus.
pub fn coalition_income(technology: &Technology, valuation_types: &[f64], accepted: &[ResourceVector], population: usize) -> f64 {
    technology.total_value(accepted, valuation_types, population)
}

/// The mechanism configuration used to settle one auction.
#[derive(Clone, Debug)]
pub struct Mechanism {
    pub method: Method,
    pub gradient: GradientConfig,
    pub adjustment: AdjustmentModel,
    pub punishment: f64,
}

impl Default for Mechanism {
    fn default() -> Self {
        Self {
            method: Method::Analytic,
            gradient: GradientConfig::default(),
            adjustment: AdjustmentModel::Zero,
            punishment: DEFAULT_PUNISHMENT,
        }
    }
}

impl Mechanism {
    pub fn new(method: Method, adjustment: AdjustmentModel, punishment: f64) -> Self {
        Self { method, adjustment, punishment, ..Default::default() }
    }

    pub fn solver(&self, technology: &Technology) -> Solver {
        Solver::new(technology.clone(), self.method).with_gradient_config(self.gradient.clone())
    }

    /// Run allocation and payment on `bids`; punish and compute utilities
    /// against the truth in `economy`.
    pub fn run(&self, economy: &Economy, bids: &BidProfile) -> Result<PaymentBreakdown> {
        if !(self.punishment.is_finite() && self.punishment > 0.0) {
            return Err(Error::Config(format!("punishment must be positive, got {}", self.punishment)));
        }
        bids.validate_against(economy)?;
        let technology = &economy.technology;
        let solver = self.solver(technology);
        let reports = bids.to_profile();
        let n = reports.n();

        let allocation = solver.solve(&reports)?;
        let counterfactuals = solver.counterfactuals(&reports)?;
        let tau = vcg_tau(technology, &reports, &allocation, &counterfactuals)?;
        let adjustment = self.adjustment.for_profile(&reports)?;

        let cost = technology.cost();
        let mut total = Vec::with_capacity(n);
        let mut utilities = Vec::with_capacity(n);
        let mut punished = Vec::with_capacity(n);
        let mut delivered = Vec::with_capacity(n);
        for i in 0..n {
            let x = &allocation.accepted[i];
            if x.exceeds(&economy.truth.capacities[i]) {
                punished.push(true);
                total.push(-self.punishment);
                utilities.push(-self.punishment);
                delivered.push(ResourceVector::zeros(x.dim()));
            } else {
                let p = tau[i] + adjustment[i];
                punished.push(false);
                total.push(p);
                utilities.push(p - cost.cost(x, economy.truth.cost_types[i]));
                delivered.push(x.clone());
            }
        }
        let income = coalition_income(technology, &economy.truth.valuation_types, &delivered, n);
        let budget_slack = income - total.iter().sum::<f64>();

        Ok(PaymentBreakdown {
            surplus: allocation.surplus,
            counterfactual_surplus: counterfactuals.iter().map(|c| c.surplus).collect(),
            accepted: allocation.accepted,
            tau,
            adjustment,
            total,
            utilities,
            coalition_income: income,
            budget_slack,
            punished,
            punishment: self.punishment,
        })
    }
}

/// Settle one auction: allocation, VCG, adjustment and punishment.
pub fn total_payment(economy: &Economy, bids: &BidProfile, adjustment: &AdjustmentModel, punishment: f64, method: Method) -> Result<PaymentBreakdown> {
    Mechanism::new(method, adjustment.clone(), punishment).run(economy, bids)
}
