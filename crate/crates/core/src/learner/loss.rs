//! The composite IR + WBB loss.
//!
//! For one sample with optimal surplus `S*`, counterfactual surpluses
//! `S*_-i` and marginal contributions `mc_i = S* - S*_-i`:
//!
//! ```text
//! Loss1 = sum_i ReLU(-mc_i - h_i)             (individual rationality)
//! Loss2 = ReLU(sum_i (mc_i + h_i) - S*)       (weak budget balance)
//! ```
//!
//! The batch LOSS is the mean of `Loss1 + Loss2` over samples.

use serde::{Deserialize, Serialize};

use crate::adjustment::AdjustmentModel;
use crate::error::{Error, Result};
use crate::model::Profile;
use crate::optimizer::Solver;

/// `S*` and every `S*_-i` for one sample; independent of the networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSurplus {
    pub full: f64,
    pub without: Vec<f64>,
}

impl SampleSurplus {
    pub fn compute(solver: &Solver, profile: &Profile) -> Result<Self> {
        let full = solver.solve(profile)?.surplus;
        let without = (0..profile.n())
            .map(|i| solver.counterfactual(profile, i).map(|r| r.surplus))
            .collect::<Result<_>>()?;
        Ok(Self { full, without })
    }

    pub fn marginal(&self, i: usize) -> f64 {
        self.full - self.without[i]
    }

    pub fn n(&self) -> usize {
        self.without.len()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub ir: f64,
    pub wbb: f64,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.ir + self.wbb
    }
}

fn relu(v: f64) -> f64 {
    v.max(0.0)
}

/// Both loss terms for one sample and adjustment vector `h`.
pub fn loss_terms(surplus: &SampleSurplus, h: &[f64]) -> LossTerms {
    let ir = (0..surplus.n()).map(|i| relu(-surplus.marginal(i) - h[i])).sum();
    let excess: f64 = (0..surplus.n()).map(|i| surplus.marginal(i) + h[i]).sum::<f64>() - surplus.full;
    LossTerms { ir, wbb: relu(excess) }
}

/// `d(Loss1 + Loss2)/d h_i` for one sample (ReLU subgradient 0 at the kink).
pub fn loss_gradient(surplus: &SampleSurplus, h: &[f64]) -> Vec<f64> {
    let excess: f64 = (0..surplus.n()).map(|i| surplus.marginal(i) + h[i]).sum::<f64>() - surplus.full;
    let wbb = if excess > 0.0 { 1.0 } else { 0.0 };
    (0..surplus.n())
        .map(|i| {
            let ir = if -surplus.marginal(i) - h[i] > 0.0 { -1.0 } else { 0.0 };
            ir + wbb
        })
        .collect()
}

/// Mean `Loss1 + Loss2` over a batch, with `h` from `model`.
pub fn composite_loss(model: &AdjustmentModel, batch: &[Profile], surpluses: &[SampleSurplus]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    if surpluses.len() != batch.len() {
        return Err(Error::InvalidInput(format!(
            "{} surplus records for {} samples",
            surpluses.len(),
            batch.len()
        )));
    }
    let mut total = 0.0;
    for (profile, surplus) in batch.iter().zip(surpluses) {
        if surplus.n() != profile.n() {
            return Err(Error::InvalidInput("surplus record does not match sample size".into()));
        }
        let h = model.for_profile(profile)?;
        total += loss_terms(surplus, &h).total();
    }
    Ok(total / batch.len() as f64)
}
