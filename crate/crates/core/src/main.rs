use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sig_fbsde::harness::{self, selftest, ConfigDocument, HarnessError, LoadedConfig, Profile};

#[derive(Parser, Debug)]
#[command(
    name = "sig-fbsde",
    version,
    about = "Signature-based solvers for path-dependent backward SDEs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train an experiment and write curves, summary and report.
    Run(RunArgs),
    /// Print the reference values of an experiment.
    Oracle(ConfigArgs),
    /// Run the built-in property suites.
    Selftest,
}

#[derive(Args, Debug)]
struct ConfigArgs {
    #[arg(long)]
    experiment: Option<String>,
    #[arg(long, value_enum, default_value_t = Profile::Desk)]
    profile: Profile,
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set batch=500`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(
    args: &ConfigArgs,
    seed: Option<u64>,
    out: Option<&PathBuf>,
) -> Result<LoadedConfig, HarnessError> {
    let mut doc = match &args.config {
        Some(path) => ConfigDocument::load(path)?,
        None => ConfigDocument::default(),
    };
    let flags = ConfigDocument {
        experiment: args.experiment.clone(),
        seed,
        out: out.map(|p| p.display().to_string()),
        ..Default::default()
    };
    doc.overlay(&flags);
    for s in &args.set {
        doc.set(s)?;
    }
    harness::load_config(&doc, args.profile)
}

fn run(args: &RunArgs) -> Result<(), HarnessError> {
    let cfg = load(&args.config, args.seed, args.out.as_ref())?;
    let dir = cfg.out_dir();
    let (table, _) = harness::run_experiment(&cfg, Some(&dir))?;
    println!(
        "experiment {} method {} runs {}",
        table.experiment,
        table.method,
        table.rows.len()
    );
    println!(
        "mean {} ci [{}, {}]",
        table.mean, table.ci_low, table.ci_high
    );
    if let (Some((name, value)), Some(err)) = (&table.reference, table.rel_error()) {
        println!("{name} {value} rel_error {err}");
    }
    for (name, value) in &table.extra_references {
        println!("{name} {value}");
    }
    println!("results in {}", dir.display());
    Ok(())
}

fn oracle(args: &ConfigArgs) -> Result<(), HarnessError> {
    let cfg = load(args, None, None)?;
    let refs = cfg
        .experiment
        .references(&cfg.spec, cfg.reference_paths())?;
    for (name, value) in refs.primary.iter().chain(&refs.extra) {
        println!("{name} {value}");
    }
    Ok(())
}

fn selftest() -> ExitCode {
    let results = selftest::run_all();
    let mut ok = true;
    for r in &results {
        let status = if r.passed() { "ok" } else { "FAIL" };
        ok &= r.passed();
        println!(
            "{status:4} {:48} cases {:4} worst {:.3e} tol {:.1e}",
            r.name, r.cases, r.worst, r.tolerance
        );
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::Oracle(args) => oracle(args),
        Command::Selftest => return selftest(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
