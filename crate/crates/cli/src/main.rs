use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use choreo_cli::config::{load_address_book, ConfigError, Mode, RunArgs};
use choreo_cli::examples::{Example, ExampleKind};
use choreo_cli::suites::{Runner, Settings, Suite};
use choreo_core::protocols::kvs::{parse_script, Kvs, KvsVariant};
use choreo_core::transport::tcp_make;
use choreo_core::{Location, RunReport, SimError};

#[derive(Debug, Parser)]
#[command(name = "choreo", version, about = "Run choreographies and check them")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one example choreography.
    Run(Box<RunArgs>),
    /// Compare message totals of KVS variants on one script.
    CountMessages {
        /// Two or more KVS variants, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "kvs-broadcast,kvs-enclave")]
        variants: Vec<ExampleKind>,
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run conformance suites and print one line per suite.
    Conformance {
        /// A suite name, or `all` for everything except `negative`.
        #[arg(long, default_value = "all")]
        suite: String,
        /// Seeds per case, overriding each suite's default.
        #[arg(long)]
        seeds: Option<u64>,
        /// GMW party counts, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "2,3")]
        parties: Vec<usize>,
        /// Maximum GMW circuit depth.
        #[arg(long, default_value_t = 3)]
        depth: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(&args),
        Command::CountMessages { variants, script, seed } => count_messages(&variants, script, seed),
        Command::Conformance {
            suite,
            seeds,
            parties,
            depth,
        } => conformance(&suite, seeds, parties, depth),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("choreo: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(args: &RunArgs) -> Result<bool, ConfigError> {
    let example = args.build()?;
    let report = match args.mode {
        Mode::Centralized => example.centralized(args.seed),
        Mode::Simulate => match example.simulated(args.seed, args.step_budget) {
            Ok(r) => r,
            Err(SimError::StepBudgetExceeded { steps, stalled, report }) => {
                eprintln!(
                    "choreo: step budget exceeded after {steps} steps{}",
                    if stalled { " (deadlock)" } else { "" }
                );
                print_and_save(&example, &report, args)?;
                return Ok(false);
            }
        },
        Mode::Endpoint => endpoint(&example, args)?,
    };
    print_and_save(&example, &report, args)?;
    Ok(report.succeeded())
}

fn endpoint(example: &Example, args: &RunArgs) -> Result<RunReport, ConfigError> {
    let invalid = ConfigError::Invalid;
    let role = args
        .role
        .as_deref()
        .ok_or_else(|| invalid("endpoint mode needs --role".into()))?;
    let path = args
        .config
        .as_ref()
        .ok_or_else(|| invalid("endpoint mode needs --config".into()))?;
    let census = example.census();
    let me: Location = census
        .iter()
        .find(|l| l.name() == role)
        .cloned()
        .ok_or_else(|| invalid(format!("`{role}` is not in the census of {}", example.kind())))?;
    let book = load_address_book(path)?;
    if let Some(missing) = census.iter().find(|l| !book.contains_key(l.name())) {
        return Err(ConfigError::AddressBook {
            path: path.clone(),
            reason: format!("no address for `{missing}`"),
        });
    }
    let transport = tcp_make(&me, &book).map_err(|e| invalid(e.to_string()))?;
    Ok(example.endpoint(&me, &transport, args.seed))
}

fn print_and_save(example: &Example, report: &RunReport, args: &RunArgs) -> Result<(), ConfigError> {
    for e in &report.endpoints {
        for line in example.describe(e) {
            println!("{line}");
        }
    }
    println!("MESSAGES {}", report.message_count());
    if let Some(path) = &args.report {
        std::fs::write(path, report.to_text()).map_err(|source| ConfigError::Io {
            path: path.clone(),
            source,
        })?;
    }
    Ok(())
}

fn count_messages(variants: &[ExampleKind], script: Option<PathBuf>, seed: u64) -> Result<bool, ConfigError> {
    let invalid = ConfigError::Invalid;
    let requests = match &script {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                path: p.clone(),
                source,
            })?;
            parse_script(&text).map_err(|e| invalid(e.to_string()))?
        }
        None => Vec::new(),
    };
    let mut totals = Vec::new();
    for kind in variants {
        let variant = match kind {
            ExampleKind::Kvs(v) => *v,
            other => return Err(invalid(format!("{other} is not a KVS variant"))),
        };
        let kvs = match variant {
            KvsVariant::Poly => Kvs::poly(1, requests.clone()),
            v => Kvs::new(v, requests.clone()),
        };
        let report = Example::Kvs(kvs)
            .simulated(seed, choreo_core::DEFAULT_STEP_BUDGET)
            .map_err(|e| invalid(e.to_string()))?;
        println!("{kind} {}", report.message_count());
        totals.push(report.message_count() as i64);
    }
    if let [first, .., last] = totals[..] {
        println!("DELTA {}", first - last);
    }
    Ok(true)
}

fn conformance(suite: &str, seeds: Option<u64>, parties: Vec<usize>, depth: usize) -> Result<bool, ConfigError> {
    let suites: Vec<Suite> = if suite == "all" {
        Suite::DEFAULT.to_vec()
    } else {
        vec![suite.parse().map_err(ConfigError::Invalid)?]
    };
    let settings = Settings {
        seeds,
        parties,
        depth,
        exe: std::env::current_exe().ok(),
    };
    let mut runner = Runner::new(settings);
    let mut ok = true;
    for s in suites {
        let outcome = runner.run(s);
        println!("{outcome}");
        ok &= outcome.passed;
    }
    Ok(ok)
}
