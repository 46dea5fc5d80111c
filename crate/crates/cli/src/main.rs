use clap::Parser;
use holotwist::commands;
use holotwist::config::RunConfig;
use holotwist::error::CliError;
use holotwist::report::Report;
use std::path::PathBuf;
use std::time::Instant;

/// Holonomy of twisted bundles given as Čech data.
#[derive(Parser, Debug)]
#[command(name = "holotwist", version)]
struct Args {
    /// validate, hol0, hol1, surface, functor, trace, gauge, reconstruct,
    /// roundtrip, verify or list-examples
    command: String,
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run on a registry example instead of a config file.
    #[arg(long, conflicts_with = "config")]
    example: Option<String>,
    /// Write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config tolerance.
    #[arg(long, allow_negative_numbers = true)]
    tol: Option<f64>,
}

fn load(args: &Args) -> Result<RunConfig, CliError> {
    let mut cfg = match (&args.config, &args.example) {
        (Some(p), _) => RunConfig::load(p)?,
        (None, Some(name)) => RunConfig::for_example(name),
        (None, None) if args.command == "list-examples" => RunConfig::for_example("trivial-sphere"),
        (None, None) => return Err(CliError::config("", "pass --config <file> or --example <name>")),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.tol {
        cfg.tol = Some(t);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(args: &Args) -> (Report, i32) {
    let start = Instant::now();
    let mut report = Report::new(&args.command, None);
    let outcome = if commands::COMMANDS.contains(&args.command.as_str()) {
        load(args).and_then(|cfg| {
            report.config = Some(cfg.clone());
            commands::run(&args.command, &cfg, &mut report)
        })
    } else {
        Err(CliError::config("", format!("unknown command `{}`; expected one of {}", args.command, commands::COMMANDS.join(", "))))
    };
    if args.command == "list-examples" {
        report.config = None;
    }
    let code = match outcome {
        Ok(()) => {
            report.finish();
            report.exit_code()
        }
        Err(e) => {
            report.error = Some(e.info());
            report.finish();
            e.exit_code()
        }
    };
    report.timings.total_secs = start.elapsed().as_secs_f64();
    (report, code)
}

fn main() {
    let args = Args::parse();
    let (report, mut code) = execute(&args);
    print!("{}", report.summary());
    if args.command == "list-examples" {
        if let Some(list) = report.values["examples"].as_array() {
            for e in list {
                println!("  {:<18} {:<7} {}", e["name"].as_str().unwrap_or(""), e["model"].as_str().unwrap_or(""), e["description"].as_str().unwrap_or(""));
            }
        }
    }
    if let Some(path) = &args.out {
        let text = serde_json::to_string_pretty(&report).expect("reports serialize");
        if let Err(e) = std::fs::write(path, text + "\n") {
            eprintln!("cannot write {}: {e}", path.display());
            code = 2;
        }
    }
    std::process::exit(code);
}
