//! `qpt`: simulate measurement records, reconstruct processes, run scaling
//! studies and audit experiment designs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use qpt_core::experiment::{
    append_outputs, design_audit, oracle_check, parse_design_target, run_ensemble_comparison,
    run_m_scaling_study, run_scaling_study, study_to_csv, ExperimentConfig, StudyResult,
};
use qpt_core::io::{record_from_csv, record_to_csv, EstimateDoc, JsonDocument};
use qpt_core::metrics::design_bound;
use qpt_core::simulator::{ideal_probabilities, sample_record};
use qpt_core::{ErrorReport, MeasurementRecord, Reconstructor};

#[derive(Parser)]
#[command(name = "qpt", version, about = "Quantum process tomography: simulation, reconstruction, scaling studies and design audits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout if omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a measurement record for the configured channel, ensemble and POVM.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Copies per input state (default: `copies_per_state`, else the first `copies_total` / M).
        #[arg(short = 'n', long)]
        copies: Option<u64>,
        /// Write exact probabilities instead of sampled frequencies.
        #[arg(long)]
        exact: bool,
    },
    /// Reconstruct a process matrix from a record (JSON, or CSV by extension).
    Reconstruct {
        #[command(flatten)]
        common: Common,
        #[arg(short, long)]
        record: PathBuf,
        /// Assume the process is trace preserving.
        #[arg(long)]
        tp_prior: bool,
        /// Also report the error against the configured channel.
        #[arg(long)]
        truth: bool,
        /// Include Â, D̂, Ĝ and the eigenvectors of F̂ in the output.
        #[arg(long)]
        intermediates: bool,
    },
    /// Error against total copies N_t.
    ScalingStudy {
        #[command(flatten)]
        study: StudyArgs,
    },
    /// Error against the number of random input states, or an ensemble
    /// comparison if the configuration lists `compare`.
    MScalingStudy {
        #[command(flatten)]
        study: StudyArgs,
    },
    /// Cost, condition number and lower bounds of a state ensemble or POVM,
    /// e.g. "sic 4", "mub-povm 4", "cube 2", "random 4 20 7".
    DesignAudit {
        target: String,
        #[arg(long)]
        json: bool,
        /// Exit nonzero unless the design attains its lower bounds.
        #[arg(long)]
        require_optimal: bool,
    },
    /// Compare the structured reconstruction with the dense reference (d ≤ 3).
    OracleCheck {
        #[arg(short, long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct StudyArgs {
    #[arg(short, long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// CSV file to append to (a `.jsonl` sibling is written too); overrides `output`.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn load_config(path: &Path, seed: Option<u64>, trials: Option<usize>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(t) = trials {
        cfg.trials = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn is_csv(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn simulate(common: &Common, copies: Option<u64>, exact: bool) -> Result<()> {
    let cfg = load_config(&common.config, common.seed, None)?;
    let channel = cfg.build_channel()?;
    let e = cfg.build_ensemble()?;
    let p = cfg.build_povm()?;
    let n = match copies.or(cfg.copies_per_state) {
        Some(n) => n,
        None => match cfg.copies_total.first() {
            Some(nt) => nt / e.len() as u64,
            None => bail!("no copy count: pass --copies or set copies_per_state"),
        },
    };
    if n == 0 {
        bail!("copies per state must be positive");
    }
    let probs = ideal_probabilities(&channel.process_matrix(), &e, &p)?;
    let rec = if exact {
        MeasurementRecord::exact(probs, p.sizes(), n)?
    } else {
        sample_record(&probs, &p.sizes(), n, cfg.seed)?
    };
    let text = match &common.output {
        Some(path) if is_csv(path) => record_to_csv(&rec),
        _ => rec.to_json()? + "\n",
    };
    emit(common.output.as_deref(), &text)
}

fn load_record(path: &Path) -> Result<MeasurementRecord> {
    let rec = if is_csv(path) {
        record_from_csv(&std::fs::read_to_string(path)?)?
    } else {
        MeasurementRecord::load(path)?
    };
    Ok(rec)
}

fn reconstruct(common: &Common, record: &Path, tp_prior: bool, truth: bool, intermediates: bool) -> Result<()> {
    let cfg = load_config(&common.config, common.seed, None)?;
    let e = cfg.build_ensemble()?;
    let p = cfg.build_povm()?;
    let rec = load_record(record).with_context(|| format!("reading {}", record.display()))?;
    let est = Reconstructor::new(&e, &p)?.estimate(&rec, tp_prior || cfg.tp_prior)?;
    if est.tp_fallback {
        eprintln!("warning: F̂ is near-singular, trace-preserving prior not applied");
    }
    if truth {
        let x = cfg.build_channel()?.process_matrix();
        let bound = design_bound(&x, &e, &p, rec.copies)?;
        let r = ErrorReport::new(&est.x_hat, x.matrix(), bound)?;
        eprintln!(
            "frob_error={:e} mse={:e} fidelity={:.9} infidelity={:e} bound_functional={:e}",
            r.frob_error, r.mse, r.fidelity, r.infidelity, r.bound_functional
        );
    }
    let doc = EstimateDoc::new(&est, intermediates);
    emit(common.output.as_deref(), &(serde_json::to_string_pretty(&doc)? + "\n"))
}

fn study(args: &StudyArgs, run: fn(&ExperimentConfig) -> qpt_core::Result<StudyResult>) -> Result<()> {
    let cfg = load_config(&args.config, args.seed, args.trials)?;
    let res = run(&cfg)?;
    print!("{}", study_to_csv(&res));
    if let Some(path) = args.output.as_ref().or(cfg.output.as_ref()) {
        append_outputs(&res, &cfg, path).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn m_study(cfg: &ExperimentConfig) -> qpt_core::Result<StudyResult> {
    if cfg.compare.is_empty() {
        run_m_scaling_study(cfg)
    } else {
        run_ensemble_comparison(cfg)
    }
}

/// `Ok(false)` is a completed run whose check failed.
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate { common, copies, exact } => simulate(&common, copies, exact)?,
        Command::Reconstruct {
            common,
            record,
            tp_prior,
            truth,
            intermediates,
        } => reconstruct(&common, &record, tp_prior, truth, intermediates)?,
        Command::ScalingStudy { study: args } => study(&args, run_scaling_study)?,
        Command::MScalingStudy { study: args } => study(&args, m_study)?,
        Command::DesignAudit {
            target,
            json,
            require_optimal,
        } => {
            let report = design_audit(&parse_design_target(&target)?)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.render());
            }
            if require_optimal && !report.achieves() {
                eprintln!("design does not attain its lower bounds");
                return Ok(false);
            }
        }
        Command::OracleCheck { d, seed } => {
            let r = oracle_check(d, seed)?;
            println!("d = {d}, seed = {seed}");
            println!("  B factorization   {:.3e}", r.b_factorization);
            println!("  two-step vs dense {:.3e}", r.two_step);
            println!("  global LS exact   {:.3e}", r.global_exact);
            println!("  structured exact  {:.3e}", r.structured_exact);
            if !r.passed() {
                eprintln!("oracle check failed");
                return Ok(false);
            }
            println!("ok");
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
