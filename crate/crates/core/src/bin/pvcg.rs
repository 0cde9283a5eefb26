use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use pvcg::adjustment::{corollary_check, existence_check};
use pvcg::experiment::{payment_surface, run_experiment, write_json, write_loss_trace, write_step_trace, write_surface, ExperimentConfig, LEARNED_PASS_RATE};
use pvcg::harness::{check_lemma1, probe_dsic, probe_ex_post, EconomySampler};
use pvcg::learner::{train, LearnedAdjustment};
use pvcg::model::{check_assumptions, BidProfile, Economy};
use pvcg::{AdjustmentModel, Error, Method, Result};

#[derive(Parser)]
#[command(name = "pvcg", version, about = "Procurement-VCG auction simulator")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON); defaults to ten producers, two consumers.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    punishment: Option<f64>,
    /// analytic | gradient
    #[arg(long, global = true)]
    method: Option<Method>,
    /// zero | analytic | learned:PATH
    #[arg(long, global = true, default_value = "zero")]
    adjustment: String,
}

#[derive(Subcommand)]
enum Command {
    /// Settle one auction read from an economy file.
    Simulate {
        economy: PathBuf,
        /// Bids to settle instead of truthful reports.
        #[arg(long)]
        bids: Option<PathBuf>,
    },
    /// Train the adjustment networks and write the checkpoint and loss trace.
    Train,
    /// Run the property probes against the chosen adjustment.
    Verify,
    /// Producer 0's payment over the configured report grid.
    Surface,
    /// Sample the valuation and cost families for assumption violations.
    CheckAssumptions,
    /// Train, verify and compute the surface in one go.
    Run,
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.rng_seed = seed;
    }
    if let Some(out) = &common.out {
        config.out_dir = out.clone();
    }
    if let Some(p) = common.punishment {
        config.punishment = p;
    }
    if let Some(m) = common.method {
        config.method = m;
    }
    config.validate()?;
    Ok(config)
}

fn parse_adjustment(spec: &str, config: &ExperimentConfig) -> Result<AdjustmentModel> {
    match spec {
        "zero" => Ok(AdjustmentModel::Zero),
        "analytic" => Ok(config.analytic_adjustment()),
        other => match other.strip_prefix("learned:") {
            Some(path) => Ok(AdjustmentModel::Learned(Arc::new(LearnedAdjustment::load(Path::new(path))?))),
            None => Err(Error::Config(format!("unknown adjustment `{other}` (expected zero|analytic|learned:PATH)"))),
        },
    }
}

fn emit<T: Serialize>(config: &ExperimentConfig, name: &str, value: &T) -> Result<()> {
    std::fs::create_dir_all(&config.out_dir)?;
    let path = config.out_dir.join(name);
    write_json(&path, value)?;
    println!("{}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct VerifyReport {
    adjustment: String,
    existence: pvcg::adjustment::InequalityReport,
    corollary: pvcg::adjustment::InequalityReport,
    lemma1: pvcg::harness::ProbeReport,
    dsic: pvcg::harness::ProbeReport,
    ex_post: pvcg::harness::ExPostReport,
    pass: bool,
}

fn run(cli: Cli) -> Result<bool> {
    let config = load_config(&cli.common)?;
    let seed = config.rng_seed;
    match cli.command {
        Command::Simulate { economy, bids } => {
            let economy: Economy = serde_json::from_str(&std::fs::read_to_string(&economy)?)?;
            let bids: BidProfile = match bids {
                Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
                None => economy.truthful_bids(),
            };
            let adjustment = parse_adjustment(&cli.common.adjustment, &config)?;
            let breakdown = config.mechanism(adjustment).run(&economy, &bids)?;
            println!("{}", serde_json::to_string_pretty(&breakdown)?);
            if cli.common.out.is_some() {
                emit(&config, "payments.json", &breakdown)?;
            }
            Ok(true)
        }
        Command::Train => {
            let mut model = LearnedAdjustment::random(&config.support, &config.training.hidden, pvcg::rng::derive(seed, 104))?;
            let training = pvcg::learner::TrainingConfig { rng_seed: pvcg::rng::derive(seed, 103), ..config.training.clone() };
            let trace = train(&mut model, &training, &config.solver())?;
            std::fs::create_dir_all(&config.out_dir)?;
            write_loss_trace(&config.out_dir.join("loss_trace.csv"), &trace)?;
            write_step_trace(&config.out_dir.join("step_trace.csv"), &trace)?;
            model.save(&config.out_dir.join("model.json"))?;
            println!("epochs {} final loss {:.3e}", trace.epochs_run(), trace.final_loss);
            Ok(trace.final_loss < 1e-3)
        }
        Command::Verify => {
            let adjustment = parse_adjustment(&cli.common.adjustment, &config)?;
            let solver = config.solver();
            let sampler = EconomySampler::new(config.support.clone(), config.technology.clone());
            let counts = &config.probes;
            let mechanism = config.mechanism(adjustment.clone());
            let existence = existence_check(&config.support, &solver, counts.inequality_samples, pvcg::rng::derive(seed, 101))?;
            let corollary = corollary_check(&config.support, &solver, counts.inequality_samples, pvcg::rng::derive(seed, 102))?;
            let lemma1 = check_lemma1(&sampler, &solver, counts.lemma1_trials, pvcg::rng::derive(seed, 106))?;
            let dsic = probe_dsic(&sampler, &counts.deviations, &mechanism, counts.dsic_trials, pvcg::rng::derive(seed, 107))?;
            let ex_post = probe_ex_post(&sampler, &mechanism, counts.ex_post_trials, pvcg::rng::derive(seed, 108))?;
            let ex_post_pass = match adjustment {
                AdjustmentModel::Learned(_) => ex_post.pass_at_rate(LEARNED_PASS_RATE),
                _ => ex_post.pass(),
            };
            let pass = existence.pass() && corollary.pass() && lemma1.pass && dsic.pass && ex_post_pass;
            let report = VerifyReport { adjustment: adjustment.label().into(), existence, corollary, lemma1, dsic, ex_post, pass };
            emit(&config, "verify.json", &report)?;
            Ok(pass)
        }
        Command::Surface => {
            let adjustment = parse_adjustment(&cli.common.adjustment, &config)?;
            let record = payment_surface(&config, &adjustment)?;
            std::fs::create_dir_all(&config.out_dir)?;
            let path = config.out_dir.join("surface.csv");
            write_surface(&path, &record)?;
            println!("{}", path.display());
            Ok(record.checks().pass)
        }
        Command::CheckAssumptions => {
            let report = check_assumptions(&config.technology, config.probes.assumption_samples, pvcg::rng::derive(seed, 100));
            let pass = report.pass();
            emit(&config, "assumptions.json", &report)?;
            Ok(pass)
        }
        Command::Run => {
            let artifacts = run_experiment(&config)?;
            println!("{}", artifacts.report.display());
            Ok(artifacts.report_data.pass)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("checks failed; see the written report");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
