//! Sampled verification of the mechanism's guarantees: truthfulness,
//! efficiency, individual rationality, weak budget balance and surplus
//! monotonicity.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adjustment::PriorSupport;
use crate::error::{Error, Result};
use crate::learner::{loss_terms, SampleSurplus};
use crate::model::{social_surplus, BidProfile, Economy, Profile, ResourceVector, Technology};
use crate::optimizer::{AllocationResult, Method, Solver};
use crate::payments::{Mechanism, PaymentBreakdown};

/// Gap above which a deviation counts as profitable.
pub const DSIC_TOL: f64 = 1e-6;
/// Tolerance for the ex-post IR and WBB inequalities.
pub const EXPOST_TOL: f64 = 1e-8;
/// Tolerance for surplus monotonicity.
pub const LEMMA_TOL: f64 = 1e-8;
/// Allowed shortfall against the efficiency benchmark.
pub const EFFICIENCY_TOL: f64 = 2e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub capacity: ResourceVector,
    pub cost_type: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub trial: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub producer: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<Profile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deviation: Option<Deviation>,
    pub gap: f64,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub name: String,
    pub trials: usize,
    pub checks: usize,
    pub violations: Vec<Witness>,
    /// Largest violation-direction gap seen (negative when everything held with room).
    pub max_gap: f64,
    /// Fraction of trials without a violation.
    pub pass_rate: f64,
    /// Instances where two equivalent formulations disagreed.
    pub equivalence_mismatches: usize,
    pub pass: bool,
}

impl ProbeReport {
    fn build(name: &str, trials: usize, checks: usize, violations: Vec<Witness>, max_gap: f64, equivalence_mismatches: usize) -> Self {
        let mut failing: Vec<usize> = violations.iter().map(|w| w.trial).collect();
        failing.sort_unstable();
        failing.dedup();
        let pass_rate = if trials == 0 { 1.0 } else { 1.0 - failing.len() as f64 / trials as f64 };
        let pass = violations.is_empty() && equivalence_mismatches == 0;
        Self {
            name: name.to_string(),
            trials,
            checks,
            violations,
            max_gap,
            pass_rate,
            equivalence_mismatches,
            pass,
        }
    }

    /// Concatenate reports of the same probe.
    pub fn merge(name: &str, reports: Vec<ProbeReport>) -> Self {
        let mut trials = 0;
        let mut checks = 0;
        let mut violations = Vec::new();
        let mut max_gap = f64::NEG_INFINITY;
        let mut mismatches = 0;
        for r in reports {
            let offset = trials;
            trials += r.trials;
            checks += r.checks;
            max_gap = max_gap.max(r.max_gap);
            mismatches += r.equivalence_mismatches;
            violations.extend(r.violations.into_iter().map(|mut w| {
                w.trial += offset;
                w
            }));
        }
        Self::build(name, trials, checks, violations, max_gap, mismatches)
    }
}

/// Draws true economies from a prior.
#[derive(Clone, Debug)]
pub struct EconomySampler {
    pub support: PriorSupport,
    pub technology: Technology,
}

impl EconomySampler {
    pub fn new(support: PriorSupport, technology: Technology) -> Self {
        Self { support, technology }
    }

    pub fn sample(&self, seed: u64, index: u64) -> Result<Economy> {
        Economy::new(self.support.sample_one(seed, index)?, self.technology.clone())
    }
}

/// Unilateral misreports to try against each sampled economy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeviationSampler {
    pub per_trial: usize,
    /// Uniform deviations are drawn from `[0, box_scale * max support]` in
    /// both capacity and cost type.
    pub box_scale: f64,
}

impl Default for DeviationSampler {
    fn default() -> Self {
        Self { per_trial: 50, box_scale: 2.0 }
    }
}

const TARGETED_SCALES: [f64; 3] = [0.5, 0.9, 1.1];

impl DeviationSampler {
    /// Deviation `k` of a trial. The first few are targeted (scaled capacity,
    /// scaled cost type, and a capacity-exceeding zero-cost bid); the rest are
    /// uniform over the report box.
    fn draw(&self, k: usize, truth: &Profile, support: &PriorSupport, rng: &mut crate::rng::Rng) -> (usize, Deviation) {
        let i = rng.gen_range(0..truth.n());
        let cap = &truth.capacities[i];
        let gamma = truth.cost_types[i];
        let scale_cap = |s: f64| ResourceVector::from_raw(cap.values().iter().map(|v| v * s).collect());
        let deviation = match k {
            0..=2 => Deviation { capacity: scale_cap(TARGETED_SCALES[k]), cost_type: gamma },
            3..=5 => Deviation { capacity: cap.clone(), cost_type: gamma * TARGETED_SCALES[k - 3] },
            6 => Deviation {
                capacity: ResourceVector::from_raw(cap.values().iter().map(|v| 2.0 * v + 1.0).collect()),
                cost_type: 0.0,
            },
            _ => {
                let capacity = ResourceVector::from_raw(
                    support.capacities[i]
                        .iter()
                        .map(|b| rng.gen_range(0.0..=self.box_scale * b.hi().max(1e-9)))
                        .collect(),
                );
                let cost_type = rng.gen_range(0.0..=self.box_scale * support.cost_types[i].hi().max(1e-9));
                Deviation { capacity, cost_type }
            }
        };
        (i, deviation)
    }
}

/// Producer `i`'s ex-post utility under `bids`, plus its VCG term.
pub fn producer_utility(mechanism: &Mechanism, economy: &Economy, bids: &BidProfile, i: usize) -> Result<(f64, f64)> {
    let solver = mechanism.solver(&economy.technology);
    let reports = bids.to_profile();
    let allocation = solver.solve(&reports)?;
    let counterfactual = solver.counterfactual(&reports, i)?;
    let x = &allocation.accepted[i];
    let own_cost_reported = economy.technology.cost().cost(x, reports.cost_types[i]);
    let tau = allocation.surplus - counterfactual.surplus + own_cost_reported;
    if x.exceeds(&economy.truth.capacities[i]) {
        return Ok((-mechanism.punishment, tau));
    }
    let h = mechanism.adjustment.evaluate(i, &reports.without(i))?;
    let true_cost = economy.technology.cost().cost(x, economy.truth.cost_types[i]);
    Ok((tau + h - true_cost, tau))
}

/// Sample economies and unilateral misreports; flag any misreport that beats
/// truth-telling by more than [`DSIC_TOL`].
///
/// Fails with a configuration error when the punishment is not more than ten
/// times the largest truthful VCG payment seen, since the punishment branch
/// would then not dominate.
pub fn probe_dsic(sampler: &EconomySampler, deviations: &DeviationSampler, mechanism: &Mechanism, trials: usize, rng_seed: u64) -> Result<ProbeReport> {
    struct Trial {
        max_tau: f64,
        max_gap: f64,
        violations: Vec<Witness>,
    }

    let economy_seed = crate::rng::derive(rng_seed, 11);
    let deviation_seed = crate::rng::derive(rng_seed, 12);
    let outcomes: Vec<Trial> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let economy = sampler.sample(economy_seed, t as u64)?;
            let truthful = economy.truthful_bids();
            let mut truth_utility = vec![None; economy.n()];
            let mut max_tau: f64 = 0.0;
            let mut max_gap = f64::NEG_INFINITY;
            let mut violations = Vec::new();
            let mut rng = crate::rng::stream(deviation_seed, t as u64);

            for k in 0..deviations.per_trial {
                let (i, dev) = deviations.draw(k, &economy.truth, &sampler.support, &mut rng);
                let u_truth = match truth_utility[i] {
                    Some(u) => u,
                    None => {
                        let (u, tau) = producer_utility(mechanism, &economy, &truthful, i)?;
                        max_tau = max_tau.max(tau.abs());
                        truth_utility[i] = Some(u);
                        u
                    }
                };
                let mut bids = truthful.clone();
                bids.reported_capacities[i] = dev.capacity.clone();
                bids.reported_cost_types[i] = dev.cost_type;
                let (u_dev, _) = producer_utility(mechanism, &economy, &bids, i)?;
                let gap = u_dev - u_truth;
                max_gap = max_gap.max(gap);
                if gap > DSIC_TOL {
                    violations.push(Witness {
                        trial: t,
                        producer: Some(i),
                        profile: Some(economy.truth.clone()),
                        deviation: Some(dev),
                        gap,
                        note: format!("misreport utility {u_dev} beats truthful {u_truth}"),
                    });
                }
            }
            Ok(Trial { max_tau, max_gap, violations })
        })
        .collect::<Result<_>>()?;

    let max_tau = outcomes.iter().map(|o| o.max_tau).fold(0.0, f64::max);
    if mechanism.punishment <= 10.0 * max_tau {
        return Err(Error::Config(format!(
            "punishment {} does not exceed 10x the largest VCG payment {max_tau}",
            mechanism.punishment
        )));
    }
    let max_gap = outcomes.iter().map(|o| o.max_gap).fold(f64::NEG_INFINITY, f64::max);
    let violations: Vec<Witness> = outcomes.into_iter().flat_map(|o| o.violations).collect();
    Ok(ProbeReport::build(
        &format!("dsic/{}", mechanism.adjustment.label()),
        trials,
        trials * deviations.per_trial,
        violations,
        max_gap,
        0,
    ))
}

/// Benchmark for [`check_efficiency`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EfficiencyBenchmark {
    /// Exhaustive grid over acceptance ratios; at most three coordinates.
    Grid { step: f64 },
    /// Projected gradient multistart.
    Multistart,
}

/// Largest surplus over an exhaustive grid of acceptance ratios.
pub fn grid_search_surplus(technology: &Technology, profile: &Profile, step: f64) -> Result<f64> {
    let dim = profile.dim();
    let coords = profile.n() * dim;
    if coords > 3 {
        return Err(Error::InvalidInput(format!("grid search over {coords} coordinates is not supported (max 3)")));
    }
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::InvalidInput(format!("grid step must be in (0, 1], got {step}")));
    }
    let points = (1.0 / step).round() as usize + 1;
    let caps: Vec<f64> = profile.capacities.iter().flat_map(|c| c.values().to_vec()).collect();
    let total = points.pow(coords as u32);
    let mut best = f64::NEG_INFINITY;
    let mut x = vec![ResourceVector::zeros(dim); profile.n()];
    for idx in 0..total {
        let mut rest = idx;
        let mut flat = Vec::with_capacity(coords);
        for cap in &caps {
            let eta = ((rest % points) as f64 * step).min(1.0);
            rest /= points;
            flat.push(eta * cap);
        }
        for (k, chunk) in flat.chunks(dim).enumerate() {
            x[k] = ResourceVector::from_raw(chunk.to_vec());
        }
        let s = technology.surplus(&x, &profile.cost_types, &profile.valuation_types, profile.n());
        best = best.max(s);
    }
    Ok(best)
}

/// Compare the achieved surplus of `allocation` against a benchmark optimum.
pub fn check_efficiency(economy: &Economy, allocation: &AllocationResult, benchmark: EfficiencyBenchmark) -> Result<ProbeReport> {
    let achieved = social_surplus(economy, &allocation.accepted)?;
    let best = match benchmark {
        EfficiencyBenchmark::Grid { step } => grid_search_surplus(&economy.technology, &economy.truth, step)?,
        EfficiencyBenchmark::Multistart => Solver::new(economy.technology.clone(), Method::ProjectedGradient).max_surplus(&economy.truth)?,
    };
    let gap = best - achieved;
    let mut violations = Vec::new();
    if gap > EFFICIENCY_TOL {
        violations.push(Witness {
            trial: 0,
            producer: None,
            profile: Some(economy.truth.clone()),
            deviation: None,
            gap,
            note: format!("achieved {achieved} below benchmark {best}"),
        });
    }
    Ok(ProbeReport::build("efficiency", 1, 1, violations, gap, 0))
}

/// Sampled efficiency: truthful allocation versus the benchmark.
pub fn probe_efficiency(sampler: &EconomySampler, solver: &Solver, benchmark: EfficiencyBenchmark, trials: usize, rng_seed: u64) -> Result<ProbeReport> {
    let seed = crate::rng::derive(rng_seed, 21);
    let reports: Vec<ProbeReport> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let economy = sampler.sample(seed, t as u64)?;
            let allocation = solver.solve(&economy.truth)?;
            check_efficiency(&economy, &allocation, benchmark)
        })
        .collect::<Result<_>>()?;
    Ok(ProbeReport::merge("efficiency", reports))
}

// Two formulations of the same inequality disagree only if their slacks
// straddle the tolerance and are not equal up to rounding.
fn disagree(a: f64, b: f64, tol: f64) -> bool {
    (a >= -tol) != (b >= -tol) && (a - b).abs() > 1e-10 * a.abs().max(b.abs()).max(1.0)
}

/// Ex-post IR: `u_i >= -tol` for every producer, cross-checked against
/// `h_i >= -(S* - S*_-i)`.
pub fn check_ir(payments: &PaymentBreakdown) -> ProbeReport {
    let mut violations = Vec::new();
    let mut max_gap = f64::NEG_INFINITY;
    let mut mismatches = 0;
    for i in 0..payments.n() {
        let u = payments.utilities[i];
        let restated = payments.adjustment[i] + payments.marginal(i);
        if !payments.punished[i] && disagree(u, restated, EXPOST_TOL) {
            mismatches += 1;
        }
        max_gap = max_gap.max(-u);
        if u < -EXPOST_TOL {
            violations.push(Witness {
                trial: 0,
                producer: Some(i),
                profile: None,
                deviation: None,
                gap: -u,
                note: format!("utility {u} < 0"),
            });
        }
    }
    ProbeReport::build("ir", 1, payments.n(), violations, max_gap, mismatches)
}

/// Ex-post WBB: `sum_i p_i <= income + tol`, cross-checked against
/// `sum_i h_i <= S* - sum_i (S* - S*_-i)`.
pub fn check_wbb(payments: &PaymentBreakdown) -> ProbeReport {
    let slack = payments.budget_slack;
    let h_sum: f64 = payments.adjustment.iter().sum();
    let mc_sum: f64 = (0..payments.n()).map(|i| payments.marginal(i)).sum();
    let restated = payments.surplus - mc_sum - h_sum;
    let any_punished = payments.punished.iter().any(|p| *p);
    let mismatches = usize::from(!any_punished && disagree(slack, restated, EXPOST_TOL));
    let mut violations = Vec::new();
    if slack < -EXPOST_TOL {
        violations.push(Witness {
            trial: 0,
            producer: None,
            profile: None,
            deviation: None,
            gap: -slack,
            note: format!("payments exceed income by {}", -slack),
        });
    }
    ProbeReport::build("wbb", 1, 1, violations, -slack, mismatches)
}

/// IR and WBB reports from many truthful economies, plus the instance-wise
/// equivalence between zero loss terms and the two properties.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExPostReport {
    pub ir: ProbeReport,
    pub wbb: ProbeReport,
    /// Instances where `Loss1 = 0` and IR disagree.
    pub ir_loss_mismatches: usize,
    /// Instances where `Loss2 = 0` and WBB disagree.
    pub wbb_loss_mismatches: usize,
    pub mean_loss: f64,
}

impl ExPostReport {
    pub fn pass(&self) -> bool {
        self.ir.pass && self.wbb.pass && self.equivalent()
    }

    /// Both loss terms agreed with the properties they encode on every instance.
    pub fn equivalent(&self) -> bool {
        self.ir_loss_mismatches == 0
            && self.wbb_loss_mismatches == 0
            && self.ir.equivalence_mismatches == 0
            && self.wbb.equivalence_mismatches == 0
    }

    /// Statistical acceptance for approximate adjustments: IR and WBB each hold
    /// on at least `rate` of the instances.
    pub fn pass_at_rate(&self, rate: f64) -> bool {
        self.ir.pass_rate >= rate && self.wbb.pass_rate >= rate && self.equivalent()
    }
}

pub fn probe_ex_post(sampler: &EconomySampler, mechanism: &Mechanism, trials: usize, rng_seed: u64) -> Result<ExPostReport> {
    let seed = crate::rng::derive(rng_seed, 31);
    let per_trial: Vec<(ProbeReport, ProbeReport, bool, bool, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let economy = sampler.sample(seed, t as u64)?;
            let payments = mechanism.run(&economy, &economy.truthful_bids())?;
            let mut ir = check_ir(&payments);
            let mut wbb = check_wbb(&payments);
            for w in ir.violations.iter_mut().chain(wbb.violations.iter_mut()) {
                w.trial = t;
                w.profile = Some(economy.truth.clone());
            }

            let surplus = SampleSurplus { full: payments.surplus, without: payments.counterfactual_surplus.clone() };
            let loss = loss_terms(&surplus, &payments.adjustment);
            let n = payments.n() as f64;
            let min_u = payments.utilities.iter().copied().fold(f64::INFINITY, f64::min);
            // Loss1 sums per-producer shortfalls, so IR at tolerance bounds it by n * tol
            let ir_mismatch = (loss.ir <= EXPOST_TOL && min_u < -EXPOST_TOL - 1e-12)
                || (min_u >= -EXPOST_TOL && loss.ir > n * EXPOST_TOL + 1e-12);
            let wbb_mismatch = disagree(payments.budget_slack, -loss.wbb, EXPOST_TOL);
            Ok((ir, wbb, ir_mismatch, wbb_mismatch, loss.total()))
        })
        .collect::<Result<_>>()?;

    let mut irs = Vec::with_capacity(trials);
    let mut wbbs = Vec::with_capacity(trials);
    let mut ir_loss_mismatches = 0;
    let mut wbb_loss_mismatches = 0;
    let mut loss_sum = 0.0;
    for (ir, wbb, a, b, loss) in per_trial {
        irs.push(ir);
        wbbs.push(wbb);
        ir_loss_mismatches += usize::from(a);
        wbb_loss_mismatches += usize::from(b);
        loss_sum += loss;
    }
    let label = mechanism.adjustment.label();
    Ok(ExPostReport {
        ir: ProbeReport::merge(&format!("ir/{label}"), irs),
        wbb: ProbeReport::merge(&format!("wbb/{label}"), wbbs),
        ir_loss_mismatches,
        wbb_loss_mismatches,
        mean_loss: if trials == 0 { 0.0 } else { loss_sum / trials as f64 },
    })
}

/// Sampled surplus monotonicity: raising one producer's capacity never lowers
/// `S*`, raising one producer's cost type never raises it.
pub fn check_lemma1(sampler: &EconomySampler, solver: &Solver, trials: usize, rng_seed: u64) -> Result<ProbeReport> {
    let seed = crate::rng::derive(rng_seed, 41);
    let step_seed = crate::rng::derive(rng_seed, 42);
    let outcomes: Vec<(f64, Vec<Witness>)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let economy = sampler.sample(seed, t as u64)?;
            let truth = &economy.truth;
            let mut rng = crate::rng::stream(step_seed, t as u64);
            let base = solver.max_surplus(truth)?;
            let mut witnesses = Vec::new();

            let i = rng.gen_range(0..truth.n());
            let d = rng.gen_range(0..truth.dim());
            let mut raised = truth.capacities[i].values().to_vec();
            raised[d] += rng.gen_range(0.0..=2.0);
            let more_capacity = solver.max_surplus(&truth.with_report(i, ResourceVector::from_raw(raised), truth.cost_types[i]))?;
            let cap_gap = base - more_capacity;
            if cap_gap > LEMMA_TOL {
                witnesses.push(Witness {
                    trial: t,
                    producer: Some(i),
                    profile: Some(truth.clone()),
                    deviation: None,
                    gap: cap_gap,
                    note: format!("capacity increase lowered S* from {base} to {more_capacity}"),
                });
            }

            let j = rng.gen_range(0..truth.n());
            let costlier = truth.cost_types[j] + rng.gen_range(0.0..=1.0);
            let more_cost = solver.max_surplus(&truth.with_report(j, truth.capacities[j].clone(), costlier))?;
            let cost_gap = more_cost - base;
            if cost_gap > LEMMA_TOL {
                witnesses.push(Witness {
                    trial: t,
                    producer: Some(j),
                    profile: Some(truth.clone()),
                    deviation: None,
                    gap: cost_gap,
                    note: format!("cost-type increase raised S* from {base} to {more_cost}"),
                });
            }
            Ok((cap_gap.max(cost_gap), witnesses))
        })
        .collect::<Result<_>>()?;

    let max_gap = outcomes.iter().map(|o| o.0).fold(f64::NEG_INFINITY, f64::max);
    let violations = outcomes.into_iter().flat_map(|o| o.1).collect();
    Ok(ProbeReport::build("lemma1", trials, 2 * trials, violations, max_gap, 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adjustment::AdjustmentModel;
    use crate::payments::DEFAULT_PUNISHMENT;

    fn economy(caps: &[f64], gammas: &[f64], thetas: &[f64]) -> Economy {
        Economy::new(Profile::scalar(caps, gammas, thetas).unwrap(), Technology::default()).unwrap()
    }

    #[test]
    fn overreport_is_never_profitable() {
        let e = economy(&[1.0, 1.0], &[0.1, 0.2], &[1.0]);
        let m = Mechanism::default();
        let (truth, _) = producer_utility(&m, &e, &e.truthful_bids(), 0).unwrap();
        let mut bids = e.truthful_bids();
        bids.reported_capacities[0] = ResourceVector::scalar(2.0).unwrap();
        let (dev, _) = producer_utility(&m, &e, &bids, 0).unwrap();
        assert_eq!(dev, -DEFAULT_PUNISHMENT);
        assert!(dev < truth);
    }

    #[test]
    fn underreport_strictly_hurts() {
        let e = economy(&[1.0, 1.0], &[0.1, 0.2], &[1.0]);
        let m = Mechanism::default();
        let (truth, _) = producer_utility(&m, &e, &e.truthful_bids(), 0).unwrap();
        let mut bids = e.truthful_bids();
        bids.reported_capacities[0] = ResourceVector::scalar(0.5).unwrap();
        let (dev, _) = producer_utility(&m, &e, &bids, 0).unwrap();
        // the counterfactual keeps population 2: S*_-0 = sqrt(2) - 0.2
        let without = 2f64.sqrt() - 0.2;
        assert!((truth - (1.7 - without)).abs() < 1e-12);
        assert!((dev - (3f64.sqrt() - 0.25 - without)).abs() < 1e-12);
        assert!(dev < truth);
    }

    #[test]
    fn dsic_holds_for_zero_adjustment() {
        let sampler = EconomySampler::new(PriorSupport::reference(4, 2), Technology::default());
        let r = probe_dsic(&sampler, &DeviationSampler::default(), &Mechanism::default(), 50, 1).unwrap();
        assert!(r.pass, "{:?}", r.violations.first());
        assert_eq!(r.checks, 2_500);
    }

    #[test]
    fn weak_punishment_is_rejected() {
        let sampler = EconomySampler::new(PriorSupport::reference(3, 2), Technology::default());
        let m = Mechanism { punishment: 1e-3, ..Default::default() };
        assert!(matches!(probe_dsic(&sampler, &DeviationSampler::default(), &m, 5, 1), Err(Error::Config(_))));
    }

    #[test]
    fn efficiency_against_grid() {
        let e = economy(&[1.0, 1.0], &[0.1, 10.0], &[1.0]);
        let alloc = Solver::analytic(Technology::default()).solve(&e.truth).unwrap();
        let r = check_efficiency(&e, &alloc, EfficiencyBenchmark::Grid { step: 1e-2 }).unwrap();
        assert!(r.pass);
        assert!((alloc.surplus - 1.314_213_562).abs() < 1e-8);

        let zero = economy(&[1.0, 2.0], &[0.1, 0.2], &[0.0]);
        let alloc = Solver::analytic(Technology::default()).solve(&zero.truth).unwrap();
        let r = check_efficiency(&zero, &alloc, EfficiencyBenchmark::Grid { step: 1e-2 }).unwrap();
        assert!(r.pass);
        assert_eq!(r.max_gap, 0.0);

        let big = economy(&[1.0; 4], &[0.1; 4], &[1.0]);
        let alloc = Solver::analytic(Technology::default()).solve(&big.truth).unwrap();
        assert!(check_efficiency(&big, &alloc, EfficiencyBenchmark::Grid { step: 1e-2 }).is_err());
        assert!(check_efficiency(&big, &alloc, EfficiencyBenchmark::Multistart).unwrap().pass);
    }

    #[test]
    fn efficiency_flags_a_bad_allocation() {
        let e = economy(&[1.0, 1.0], &[0.1, 0.2], &[1.0]);
        let mut alloc = Solver::analytic(Technology::default()).solve(&e.truth).unwrap();
        alloc.accepted[1] = ResourceVector::scalar(0.0).unwrap();
        let r = check_efficiency(&e, &alloc, EfficiencyBenchmark::Grid { step: 1e-2 }).unwrap();
        assert!(!r.pass);
    }

    #[test]
    fn injected_adjustments_break_ir_and_wbb() {
        let e = economy(&[1.0, 1.0], &[0.1, 0.2], &[1.0]);
        let base = Mechanism::default().run(&e, &e.truthful_bids()).unwrap();
        assert!(check_ir(&base).pass && check_wbb(&base).pass);

        let h: Vec<f64> = (0..2).map(|i| -base.marginal(i) - 1.0).collect();
        let m = Mechanism { adjustment: AdjustmentModel::Fixed(h), ..Default::default() };
        let r = check_ir(&m.run(&e, &e.truthful_bids()).unwrap());
        assert!(!r.pass);
        assert_eq!(r.equivalence_mismatches, 0);
        assert!((r.violations[0].gap - 1.0).abs() < 1e-12);

        let single = economy(&[2.0], &[0.3], &[0.8]);
        let p = Mechanism::default().run(&single, &single.truthful_bids()).unwrap();
        let h0 = p.coalition_income - p.tau[0] + 1.0;
        let m = Mechanism { adjustment: AdjustmentModel::Fixed(vec![h0]), ..Default::default() };
        let r = check_wbb(&m.run(&single, &single.truthful_bids()).unwrap());
        assert!(!r.pass);
        assert!((r.violations[0].gap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lemma1_examples() {
        let s = Solver::analytic(Technology::default());
        let lo = s.max_surplus(&Profile::scalar(&[1.0, 1.0], &[0.1, 0.2], &[1.0]).unwrap()).unwrap();
        let hi = s.max_surplus(&Profile::scalar(&[2.0, 1.0], &[0.1, 0.2], &[1.0]).unwrap()).unwrap();
        assert!((lo - 1.7).abs() < 1e-12);
        assert!((hi - (6f64.sqrt() - 0.4)).abs() < 1e-12);

        // once producer 1 is priced out, S* is flat in its cost type
        let flat: Vec<f64> = [2.0, 3.0, 5.0]
            .iter()
            .map(|g| s.max_surplus(&Profile::scalar(&[1.0, 1.0], &[0.1, *g], &[1.0]).unwrap()).unwrap())
            .collect();
        assert!(flat.windows(2).all(|w| w[0] == w[1]));

        let with_idle = s.max_surplus(&Profile::scalar(&[1.0, 1.0, 0.0], &[0.1, 0.2, 0.05], &[1.0]).unwrap()).unwrap();
        let without = s.solve_with_population(&Profile::scalar(&[1.0, 1.0], &[0.1, 0.2], &[1.0]).unwrap(), 3).unwrap().surplus;
        assert_eq!(with_idle, without);

        let sampler = EconomySampler::new(PriorSupport::reference(5, 2), Technology::default());
        assert!(check_lemma1(&sampler, &s, 500, 3).unwrap().pass);
    }
}
