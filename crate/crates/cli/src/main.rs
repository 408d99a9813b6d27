//! `privaudit`: run a membership-inference privacy audit from a JSON
//! config. `audit` trains the target, runs the configured attacks and
//! writes the report; `sweep` maps noise multipliers to epsilon and attack
//! success; `validate` checks a config without running anything.

mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use config::ResolvedConfig;
use privaudit::accountant::{epsilon_of, sweep_tradeoff, SweepSpec, TradeoffRow};
use privaudit::attacks::run_attacks;
use privaudit::error::AuditError;
use privaudit::models::{init_mlp, train_dp_sgd, train_sgd, MlpModel};
use privaudit::reports::{build_report, emit, write_sweep_csv, PrivacyReport, TargetSummary};

#[derive(Parser)]
#[command(
    name = "privaudit",
    version,
    about = "Membership-inference privacy auditing for classification models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the target, run the configured attacks, write the report.
    Audit(RunArgs),
    /// Train at each configured noise multiplier and tabulate epsilon
    /// against utility and attack success.
    Sweep(RunArgs),
    /// Check the config file and print its digest without running.
    Validate(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the JSON audit configuration.
    #[arg(long)]
    config: PathBuf,
    /// Replace the config's master seed (re-derives every seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Replace the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Config problems exit 2, runtime problems exit 1; both print one
/// machine-parsable "error:<category>:" line.
enum CliError {
    Config(String),
    Runtime(AuditError),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "error:config:{msg}"),
            CliError::Runtime(e) => write!(f, "error:{}:{e}", e.category()),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<AuditError> for CliError {
    fn from(e: AuditError) -> Self {
        CliError::Runtime(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let message = e.to_string();
            eprintln!("error:config:{}", message.lines().next().unwrap_or("bad arguments"));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Audit(args) => run_audit(&args),
        Command::Sweep(args) => run_sweep(&args),
        Command::Validate(args) => run_validate(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn resolve(args: &RunArgs) -> Result<ResolvedConfig, CliError> {
    let resolved = ResolvedConfig::load(&args.config, args.seed, args.out.clone())
        .map_err(CliError::Config)?;
    if let Some(threads) = resolved.config.threads {
        // ignore the error from configuring twice in one process (tests)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    Ok(resolved)
}

fn train_target(
    resolved: &ResolvedConfig,
    dataset: &privaudit::LabeledDataset,
    split: &privaudit::AuditSplit,
) -> Result<(MlpModel, usize), CliError> {
    let layers = resolved.target_layers(dataset);
    let model0 = init_mlp(&layers, resolved.target_init_seed())?;
    let train_cfg = resolved.target_train_config();
    if train_cfg.dp.is_some() {
        let (model, _, steps) = train_dp_sgd(&model0, dataset, &split.member_idx, &train_cfg)?;
        Ok((model, steps))
    } else {
        let (model, _) = train_sgd(&model0, dataset, &split.member_idx, &train_cfg)?;
        Ok((model, 0))
    }
}

fn print_headline(report: &PrivacyReport) {
    let t = &report.target;
    println!(
        "target {:?}: train accuracy {:.4}, test accuracy {:.4}",
        t.architecture, t.train_accuracy, t.test_accuracy
    );
    println!(
        "generalization gap: loss {:.4}, accuracy {:.4}",
        t.loss_gap, t.accuracy_gap
    );
    for block in &report.attacks {
        let operating_points: Vec<String> = block
            .tpr_at_fpr
            .iter()
            .map(|p| format!("tpr@{} {:.4}", p.fpr, p.tpr))
            .collect();
        println!(
            "attack {}: auc {:.4}, advantage {:.4}, {}",
            block.attack_name,
            block.auc,
            block.membership_advantage,
            operating_points.join(", ")
        );
    }
    if let Some(eps) = &report.epsilon {
        println!(
            "epsilon {:.4} (delta {:e}, {} steps, {})",
            eps.epsilon, eps.delta, eps.steps, eps.method
        );
    }
}

fn run_audit(args: &RunArgs) -> Result<(), CliError> {
    let resolved = resolve(args)?;
    let (dataset, split) = resolved.build_world()?;
    let (target, dp_steps) = train_target(&resolved, &dataset, &split)?;

    let train_cfg = resolved.target_train_config();
    let epsilon = match &train_cfg.dp {
        Some(dp) if dp.noise_multiplier > 0.0 => {
            Some(epsilon_of(dp.noise_multiplier, dp_steps, dp.delta)?)
        }
        _ => None,
    };

    let selection = resolved.attack_selection(&dataset);
    let groups = run_attacks(&target, &dataset, &split, &selection)?;
    let summary = TargetSummary::measure(&target, &dataset, &split)?;
    let report = build_report(
        summary,
        &groups,
        &resolved.config.metrics,
        epsilon,
        None,
        &resolved.digest,
    )?;
    let manifest = emit(&report, &resolved.config.output_dir)?;

    print_headline(&report);
    for name in manifest {
        println!("wrote {}", resolved.config.output_dir.join(name).display());
    }
    Ok(())
}

fn print_sweep_table(rows: &[TradeoffRow]) {
    let attack_names: Vec<&String> = rows
        .first()
        .map(|r| r.attack_auc.keys().collect())
        .unwrap_or_default();
    let auc_headers: Vec<String> = attack_names
        .iter()
        .map(|n| format!("auc_{n}"))
        .collect();
    println!("sigma epsilon test_accuracy {} loss_gap", auc_headers.join(" "));
    for row in rows {
        let aucs: Vec<String> = attack_names
            .iter()
            .map(|n| format!("{:.4}", row.attack_auc.get(*n).copied().unwrap_or(f64::NAN)))
            .collect();
        println!(
            "{:.4} {:.4} {:.4} {} {:.4}",
            row.sigma,
            row.epsilon,
            row.test_accuracy,
            aucs.join(" "),
            row.loss_gap
        );
    }
}

fn run_sweep(args: &RunArgs) -> Result<(), CliError> {
    let resolved = resolve(args)?;
    let sigmas = resolved
        .config
        .sweep_sigmas
        .clone()
        .ok_or_else(|| CliError::Config("sweep requires sweep_sigmas in the config".into()))?;
    let base_train = resolved.target_train_config();
    if base_train.dp.as_ref().is_none_or(|dp| !dp.clip_norm.is_finite()) {
        return Err(CliError::Config(
            "sweep requires target.train.dp with a finite clip_norm".into(),
        ));
    }

    let (dataset, split) = resolved.build_world()?;
    let spec = SweepSpec {
        model_layers: resolved.target_layers(&dataset),
        base_train,
        sigmas,
        attacks: resolved.attack_selection(&dataset),
        seed: resolved.sweep_seed(),
    };
    let rows = sweep_tradeoff(&dataset, &split, &spec)?;
    let name = write_sweep_csv(&rows, &resolved.config.output_dir)?;

    print_sweep_table(&rows);
    println!("wrote {}", resolved.config.output_dir.join(name).display());
    Ok(())
}

fn run_validate(args: &RunArgs) -> Result<(), CliError> {
    let resolved = resolve(args)?;
    println!("config ok");
    println!("digest {}", resolved.digest);
    Ok(())
}
