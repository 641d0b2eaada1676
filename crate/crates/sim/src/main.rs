use std::path::PathBuf;
use std::process::ExitCode;

use bingham_sim::config::{parse_unvalidated, ModeKind};
use bingham_sim::{run_scenario, ConfigError, RunConfig, SimError, Summary};
use clap::Parser;

/// Runs a Bingham channel or verification scenario.
#[derive(Parser, Debug)]
#[command(name = "bingham-sim", version)]
struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory, overrides `output.dir`.
    #[arg(long, value_name = "PATH")]
    output_dir: Option<PathBuf>,
    /// Print every key with its default value and exit.
    #[arg(long)]
    print_defaults: bool,
    /// Scenario name, overrides the file.
    #[arg(long, value_name = "NAME")]
    scenario: Option<String>,
    /// Final time, overrides `time.t_end`.
    #[arg(long, value_name = "T")]
    until: Option<f64>,
    /// Independent regularized runs, e.g. `eps=1e-1,1e-2`, one
    /// subdirectory each.
    #[arg(long, value_name = "eps=LIST")]
    sweep: Option<String>,
}

fn load(cli: &Cli) -> Result<RunConfig, SimError> {
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?,
        None => String::new(),
    };
    let mut cfg = parse_unvalidated(&text)?;
    if let Some(name) = &cli.scenario {
        cfg.scenario = Some(name.parse().map_err(|reason| ConfigError::Invalid {
            field: "scenario".into(),
            reason,
        })?);
    }
    if let Some(dir) = &cli.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(t) = cli.until {
        cfg.t_end = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn sweep_configs(base: &RunConfig, sweep_arg: &str) -> Result<Vec<RunConfig>, SimError> {
    let invalid = |reason: &str| {
        SimError::Config(ConfigError::Invalid {
            field: "--sweep".into(),
            reason: reason.into(),
        })
    };
    let list = sweep_arg.strip_prefix("eps=").ok_or_else(|| invalid("expected eps=v1,v2,..."))?;
    let mut out = Vec::new();
    for item in list.split(',') {
        let eps: f64 = item.trim().parse().map_err(|_| invalid("eps values must be numbers"))?;
        let mut cfg = base.clone();
        cfg.mode = ModeKind::Regularized;
        cfg.eps = eps;
        cfg.output_dir = base.output_dir.join(format!("eps_{}", item.trim()));
        cfg.validate()?;
        out.push(cfg);
    }
    Ok(out)
}

fn report(cfg: &RunConfig, result: &Result<Summary, SimError>) {
    match result {
        Ok(s) => println!(
            "{}: t = {} in {} steps, {:.1} s, audit {}, rigid fraction {:.4}, outputs in {}",
            s.scenario.name(),
            s.t,
            s.monitor.steps,
            s.wall_seconds,
            match (s.audit_applies, s.audit.passed) {
                (false, _) => "n/a",
                (true, true) => "passed",
                (true, false) => "FAILED",
            },
            s.rigid.area_fraction,
            cfg.output_dir.display()
        ),
        Err(e) => eprintln!("error: {e}"),
    }
}

fn code(result: &Result<Summary, SimError>) -> u8 {
    match result {
        Ok(_) => 0,
        Err(e) => e.exit_code() as u8,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.print_defaults {
        print!("{}", RunConfig::defaults_text());
        return ExitCode::SUCCESS;
    }
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let Some(sweep_arg) = &cli.sweep else {
        let result = run_scenario(&cfg);
        report(&cfg, &result);
        return ExitCode::from(code(&result));
    };
    let configs = match sweep_configs(&cfg, sweep_arg) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let results: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = configs.iter().map(|c| s.spawn(move || run_scenario(c))).collect();
        handles.into_iter().map(|h| h.join().expect("sweep run panicked")).collect()
    });
    let mut worst = 0;
    for (c, r) in configs.iter().zip(&results) {
        report(c, r);
        worst = worst.max(code(r));
    }
    ExitCode::from(worst)
}
