#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod config;
mod error;
mod output;
mod run;

use std::process::ExitCode;
use std::sync::atomic::Ordering;

use clap::Parser;

use args::{Cli, Command, OracleCommand};
use config::RunConfig;
use error::CliError;
use output::{Header, INTERRUPTED};
use run::Globals;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("zeno: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    if let Some(t) = cli.tol {
        if !(t > 0.0 && t < 1.0) {
            return Err(CliError::Usage(format!(
                "--tol must lie in (0, 1), got {t}"
            )));
        }
    }
    ctrlc::set_handler(|| INTERRUPTED.store(true, Ordering::Relaxed))
        .map_err(|e| CliError::Usage(format!("cannot install interrupt handler: {e}")))?;

    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let gl = Globals {
        seed: cli.seed,
        tol: cli.tol,
    };
    let model = match &cli.command {
        Command::Spectrum(a) => Some(&a.model),
        Command::Rate(a) => Some(&a.model),
        Command::Corr(a) => Some(&a.model),
        Command::Rateq(a) => Some(&a.model),
        Command::Steady(a) => Some(&a.model),
        Command::Sweep(a) => Some(&a.model),
        Command::Oracle(OracleCommand::Modesum(a)) => Some(&a.model),
        Command::Fig(_) | Command::Oracle(OracleCommand::Equivalence(_)) => None,
    };
    if let Some(m) = model {
        m.apply(&mut cfg);
    }
    if let Some(f) = cli.format {
        cfg.output.format = f;
    }
    if let Some(p) = &cli.out {
        cfg.output.path = Some(p.clone());
    }
    // the sweep command validates after applying its own overrides
    if !matches!(cli.command, Command::Sweep(_)) {
        cfg.validate()?;
    }

    let (name, result) = match &cli.command {
        Command::Spectrum(a) => ("spectrum".to_string(), run::spectrum(&cfg, a, gl)),
        Command::Rate(a) => ("rate".into(), run::rate(&cfg, a, gl)),
        Command::Corr(a) => ("corr".into(), run::corr(&cfg, a, gl)),
        Command::Rateq(a) => ("rateq".into(), run::rateq(&cfg, a, gl)),
        Command::Steady(a) => ("steady".into(), run::steady(&cfg, a, gl)),
        Command::Fig(a) => (format!("fig {}", a.n), run::fig(a, gl)),
        Command::Oracle(OracleCommand::Equivalence(a)) => {
            ("oracle equivalence".into(), run::equivalence(a, gl))
        }
        Command::Oracle(OracleCommand::Modesum(a)) => {
            ("oracle modesum".into(), run::modesum(&cfg, a, gl))
        }
        Command::Sweep(a) => ("sweep".into(), run::sweep(&mut cfg, a, gl)),
    };
    let outcome = result?;
    let header = Header {
        tool: format!("zeno {}", env!("CARGO_PKG_VERSION")),
        command: &name,
        config: &outcome.config,
    };
    let text = output::render(&outcome.table, &header, cfg.output.format)?;
    output::write(&text, cfg.output.path.as_deref())?;
    if outcome.table.truncated() {
        return Err(CliError::Interrupted);
    }
    Ok(())
}
