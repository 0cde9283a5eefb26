//! Acceptance suite: one line per criterion, nonzero exit if any fails.

mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;

use pvcg::adjustment::sample_prior;
use pvcg::experiment::{payment_surface, run_experiment, ExperimentConfig, ProbeCounts, SurfaceSpec};
use pvcg::harness::{check_lemma1, probe_dsic, probe_ex_post, DeviationSampler, EconomySampler};
use pvcg::learner::{batch_gradients, batch_loss, precompute_surpluses, train, LearnedAdjustment, TrainingConfig};
use pvcg::{AdjustmentModel, Mechanism, Method, PriorSupport, Solver, Technology};

use common::{grid_oracle, rel_err};

const SEED: u64 = 20_240_611;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

fn paper_support() -> PriorSupport {
    PriorSupport::reference(10, 2)
}

fn solver() -> Solver {
    Solver::analytic(Technology::default())
}

fn oracle_equivalence() -> Outcome {
    let started = Instant::now();
    let solver = solver();
    let mut rng = pvcg::rng::stream(SEED, 1);
    let mut max_gap: f64 = 0.0;
    for k in 0..200u64 {
        let n = rng.gen_range(1..=3);
        let m = rng.gen_range(1..=2);
        let profile = PriorSupport::reference(n, m).sample_one(SEED, k).unwrap();
        let solved = solver.solve(&profile).unwrap().surplus;
        let grid = grid_oracle(&profile, 1_000);
        max_gap = max_gap.max((solved - grid).abs());
    }
    let elapsed = started.elapsed();
    outcome(
        max_gap <= 2e-3 && within(elapsed, 120),
        format!("max |S* - grid| = {max_gap:.3e} over 200 economies (tol 2e-3), {:.1}s (limit 120s)", elapsed.as_secs_f64()),
    )
}

fn waterfill_vs_gradient() -> Outcome {
    let started = Instant::now();
    let analytic = solver();
    let gradient = Solver::new(Technology::default(), Method::ProjectedGradient);
    let support = PriorSupport::reference(10, 2);
    let mut max_gap: f64 = 0.0;
    for k in 0..1_000u64 {
        let profile = support.sample_one(SEED ^ 2, k).unwrap();
        let a = analytic.solve(&profile).unwrap().surplus;
        let g = gradient.solve(&profile).unwrap().surplus;
        max_gap = max_gap.max((a - g).abs());
    }
    let elapsed = started.elapsed();
    outcome(
        max_gap <= 1e-6 && within(elapsed, 120),
        format!("max surplus gap {max_gap:.3e} over 1000 economies, n=10 (tol 1e-6), {:.1}s (limit 120s)", elapsed.as_secs_f64()),
    )
}

fn dsic(learned: &Arc<LearnedAdjustment>) -> Outcome {
    let started = Instant::now();
    let support = paper_support();
    let sampler = EconomySampler::new(support.clone(), Technology::default());
    let adjustments = [
        AdjustmentModel::Zero,
        AdjustmentModel::Analytic { support, solver: solver() },
        AdjustmentModel::Learned(learned.clone()),
    ];
    let mut parts = Vec::new();
    let mut pass = true;
    for adjustment in adjustments {
        let mechanism = Mechanism { adjustment, ..Default::default() };
        let report = probe_dsic(&sampler, &DeviationSampler::default(), &mechanism, 1_000, SEED ^ 3).unwrap();
        pass &= report.pass;
        parts.push(format!("{}: {} violations / {} deviations, max gain {:.3e}", report.name, report.violations.len(), report.checks, report.max_gap));
    }
    let elapsed = started.elapsed();
    pass &= within(elapsed, 600);
    outcome(pass, format!("{} (tol 1e-6), {:.1}s (limit 600s)", parts.join("; "), elapsed.as_secs_f64()))
}

fn ir_wbb_and_loss_equivalence() -> (Outcome, Outcome) {
    let sampler = EconomySampler::new(paper_support(), Technology::default());
    let report = probe_ex_post(&sampler, &Mechanism::default(), 10_000, SEED ^ 4).unwrap();
    let ir_wbb = outcome(
        report.ir.pass && report.wbb.pass,
        format!(
            "10000 truthful economies with h = 0: {} IR violations (min u = {:.3e}), {} WBB violations (min slack = {:.3e}), tol 1e-8",
            report.ir.violations.len(),
            -report.ir.max_gap,
            report.wbb.violations.len(),
            -report.wbb.max_gap
        ),
    );
    let equivalence = outcome(
        report.ir_loss_mismatches == 0 && report.wbb_loss_mismatches == 0 && report.ir.equivalence_mismatches == 0 && report.wbb.equivalence_mismatches == 0,
        format!(
            "Loss1/IR mismatches {}, Loss2/WBB mismatches {}, restated-form mismatches {}/{} on the same 10000 instances",
            report.ir_loss_mismatches, report.wbb_loss_mismatches, report.ir.equivalence_mismatches, report.wbb.equivalence_mismatches
        ),
    );
    (ir_wbb, equivalence)
}

fn learner_convergence() -> (Outcome, Arc<LearnedAdjustment>) {
    let started = Instant::now();
    let support = paper_support();
    let config = TrainingConfig { rng_seed: SEED ^ 6, ..Default::default() };
    let mut model = LearnedAdjustment::random(&support, &config.hidden, SEED ^ 7).unwrap();
    let trace = train(&mut model, &config, &solver()).unwrap();
    // loss of the trained networks on fresh samples
    let held_out = sample_prior(&support, 1_000, SEED ^ 8).unwrap();
    let surpluses = precompute_surpluses(&solver(), &held_out).unwrap();
    let loss = batch_loss(&model, &held_out, &surpluses).unwrap();
    let elapsed = started.elapsed();
    let pass = loss < 1e-3 && trace.epochs_run() <= 500 && within(elapsed, 900);
    (
        outcome(
            pass,
            format!(
                "n=10, m=2, hidden 3x10: {} epochs, last epoch loss {:.3e}, held-out loss {:.3e} on 1000 samples (tol 1e-3), {:.1}s (limit 900s)",
                trace.epochs_run(),
                trace.final_loss,
                loss,
                elapsed.as_secs_f64()
            ),
        ),
        Arc::new(model),
    )
}

fn surface_shape(learned: &Arc<LearnedAdjustment>) -> Outcome {
    let config = ExperimentConfig::default();
    let record = payment_surface(&config, &AdjustmentModel::Learned(learned.clone())).unwrap();
    let checks = record.checks();
    let idle_tau = record.tau[0].iter().fold(0.0f64, |a, t| a.max(t.abs()));
    let last = record.cost_types.len() - 1;
    // every producer with positive capacity is paid more at zero cost than once priced out
    let drops = record.capacities.iter().zip(&record.payments).filter(|(c, _)| **c > 0.0).all(|(_, row)| row[0] > row[last] + 1e-3);
    let pass = checks.pass && idle_tau == 0.0 && drops;
    outcome(
        pass,
        format!(
            "50x50 grid, learned h: max drop along capacity {:.3e}, max rise along cost type {:.3e} (tol 1e-6), plateau |p - h| {:.3e} (tol 1e-3), tau at zero capacity {:.1e}",
            checks.max_capacity_drop, checks.max_cost_rise, checks.plateau_gap, idle_tau
        ),
    )
}

fn gradient_check() -> Outcome {
    let mut rng = pvcg::rng::stream(SEED, 8);
    let step = 1e-6;
    let mut checked = 0usize;
    let mut skipped = 0usize;
    let mut worst: f64 = 0.0;
    for k in 0..20u64 {
        let n = rng.gen_range(2..=5);
        let m = rng.gen_range(1..=2);
        let hidden: Vec<usize> = (0..rng.gen_range(1..=3)).map(|_| rng.gen_range(3..=10)).collect();
        let support = PriorSupport::reference(n, m);
        let mut model = LearnedAdjustment::random(&support, &hidden, SEED + k).unwrap();
        // push outputs around so both loss terms are active somewhere in the batch
        for net in &mut model.nets {
            let last = net.layers.len() - 1;
            net.layers[last].biases[0] = rng.gen_range(-2.0..2.0);
        }
        let batch = sample_prior(&support, 16, SEED + 100 + k).unwrap();
        let surpluses = precompute_surpluses(&solver(), &batch).unwrap();
        let (_, grads) = batch_gradients(&model, &batch, &surpluses).unwrap();
        for (i, net_grads) in grads.iter().enumerate() {
            let analytic = net_grads.flatten();
            for (p, g) in analytic.iter().enumerate() {
                let base = model.nets[i].parameters()[p];
                let mut eval = |v: f64| {
                    *model.nets[i].parameters_mut().nth(p).unwrap() = v;
                    batch_loss(&model, &batch, &surpluses).unwrap()
                };
                let (plus, mid, minus) = (eval(base + step), eval(base), eval(base - step));
                eval(base);
                let forward = (plus - mid) / step;
                let backward = (mid - minus) / step;
                // the loss is piecewise linear in each parameter, so the one-sided
                // slopes agree to rounding unless the step crosses a kink
                if rel_err(forward, backward, 1e-6) > 1e-6 {
                    skipped += 1;
                    continue;
                }
                let central = (plus - minus) / (2.0 * step);
                worst = worst.max(rel_err(central, *g, 1e-6));
                checked += 1;
            }
        }
    }
    outcome(
        worst < 1e-4 && checked > 0,
        format!("20 nets: {checked} parameters checked, {skipped} skipped at kinks, worst relative error {worst:.3e} (tol 1e-4)"),
    )
}

fn lemma1() -> Outcome {
    let sampler = EconomySampler::new(paper_support(), Technology::default());
    let report = check_lemma1(&sampler, &solver(), 10_000, SEED ^ 9).unwrap();
    outcome(
        report.pass,
        format!("{} capacity and cost-type increases: {} violations, worst move {:.3e} (tol 1e-8)", report.checks, report.violations.len(), report.max_gap),
    )
}

fn determinism() -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let config = |out: &std::path::Path| ExperimentConfig {
        support: PriorSupport::reference(4, 2),
        training: TrainingConfig { epochs: 20, samples_per_epoch: 64, ..Default::default() },
        surface: SurfaceSpec { resolution: [12, 9], ..Default::default() },
        probes: ProbeCounts {
            dsic_trials: 20,
            deviations: DeviationSampler { per_trial: 10, ..Default::default() },
            ex_post_trials: 200,
            lemma1_trials: 200,
            efficiency_trials: 20,
            inequality_samples: 50,
            assumption_samples: 100,
        },
        out_dir: out.to_path_buf(),
        rng_seed: SEED,
        ..Default::default()
    };
    let runs: Vec<_> = dirs.iter().map(|d| run_experiment(&config(d.path())).unwrap()).collect();
    let mut identical = Vec::new();
    for name in ["loss_trace.csv", "step_trace.csv", "surface.csv", "report.json", "model.json"] {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap();
        identical.push((name, !a.is_empty() && a == b));
    }
    let pass = identical.iter().all(|(_, same)| *same);
    let _ = runs;
    outcome(
        pass,
        identical
            .iter()
            .map(|(name, same)| format!("{name} {}", if *same { "identical" } else { "DIFFERS" }))
            .collect::<Vec<_>>()
            .join(", "),
    )
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut report = |id: usize, name: &'static str, o: Outcome| {
        println!("criterion {id:>2} [PRIMARY] {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((id, name, o));
    };

    report(1, "allocation oracle equivalence", oracle_equivalence());
    report(2, "water-fill vs projected gradient", waterfill_vs_gradient());
    let (convergence, learned) = learner_convergence();
    report(3, "DSIC probe", dsic(&learned));
    let (ir_wbb, equivalence) = ir_wbb_and_loss_equivalence();
    report(4, "IR and WBB with zero adjustment", ir_wbb);
    report(5, "loss terms vanish exactly when IR and WBB hold", equivalence);
    report(6, "learner convergence", convergence);
    report(7, "payment surface shape", surface_shape(&learned));
    report(8, "backprop vs finite differences", gradient_check());
    report(9, "surplus monotonicity", lemma1());
    report(10, "determinism", determinism());

    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!("acceptance: {} of {} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
