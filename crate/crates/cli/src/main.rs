use std::collections::BTreeMap;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adscope_cli::config::{Overrides, Settings};
use adscope_cli::error::{CliError, Result, EXIT_INTERNAL, EXIT_USAGE};
use adscope_cli::uniqueness::{selector_percentiles, PopulationFile};
use adscope_cli::{ingest, policy_eval, report, simulate, uniqueness, State};
use adscope_core::policy::load_policy_file;
use adscope_core::profiles::Scenario;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

/// Detects interest-based ads, measures profile uniqueness and applies
/// ad-blocking policies.
#[derive(Debug, Parser)]
#[command(name = "adscope", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// State directory; falls back to the config file, then $ADSCOPE_STATE_DIR, then ./.adscope.
    #[arg(long, global = true)]
    state_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    scenario: Option<ScenarioArg>,
    /// Seed for every randomized step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Treat event categories as raw indices 0..N instead of taxonomy categories.
    #[arg(long, global = true)]
    categories: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScenarioArg {
    Baseline,
    Paranoid,
}

impl From<ScenarioArg> for Scenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::Baseline => Scenario::Baseline,
            ScenarioArg::Paranoid => Scenario::Paranoid,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, ValueEnum)]
enum Format {
    #[default]
    Text,
    Json,
}

#[derive(Debug, Args)]
struct Output {
    /// What to print on stdout.
    #[arg(long, value_enum, default_value_t)]
    format: Format,
    /// Also write the JSON document here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Append JSONL events to the state (`-` reads stdin).
    Ingest {
        #[arg(required = true)]
        events: Vec<PathBuf>,
    },
    /// Per-selector detection report.
    Report {
        #[command(flatten)]
        output: Output,
    },
    /// Apply a policy file to the stored ads.
    PolicyEval {
        /// Policy file; defaults to the one named in the config.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Population statistics, needed by uniqueness constraints.
        #[arg(long)]
        population: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Worst-case uniqueness of the profile each selector holds.
    Uniqueness {
        #[arg(long)]
        population: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// Build population statistics from user snapshots.
    Aggregate {
        /// State directories or state.json files.
        #[arg(required = true)]
        snapshots: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a seeded simulation; writes events.jsonl and experiment.json.
    Simulate {
        /// Scenario configuration (TOML).
        scenario_config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).format_timestamp(None).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE as u8) } else { ExitCode::SUCCESS };
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(_) => ExitCode::from(EXIT_INTERNAL as u8),
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = cli.global;
    let overrides = Overrides {
        config: g.config,
        state_dir: g.state_dir,
        scenario: g.scenario.map(Scenario::from),
        seed: g.seed,
        categories: g.categories,
    };
    let settings = Settings::resolve(&overrides)?;
    match cli.command {
        Command::Ingest { events } => {
            for path in events {
                let summary = if path.as_os_str() == "-" {
                    ingest::ingest(&settings, std::io::stdin().lock(), "<stdin>")?
                } else {
                    let file = std::fs::File::open(&path).map_err(|e| CliError::read(&path, e))?;
                    ingest::ingest(&settings, BufReader::new(file), &path.display().to_string())?
                };
                info!("{}: {summary:?}", path.display());
                stdout(&format!(
                    "{}: {} events applied, {} skipped, {} uncategorized\n",
                    path.display(),
                    summary.applied,
                    summary.skipped,
                    summary.uncategorized
                ))?;
            }
        }
        Command::Report { output } => {
            let state = load_state(&settings.state_dir)?;
            let r = report::evaluate(&state, settings.scenario, settings.seed).report;
            emit(&output, &r.to_json(), &r.to_table())?;
        }
        Command::PolicyEval { policy, population, output } => {
            let path = policy
                .or(settings.policy.clone())
                .ok_or_else(|| CliError::Usage("no policy file: pass --policy or set `policy` in the config".into()))?;
            let policies = load_policy_file(&path, &settings.taxonomy).map_err(|e| CliError::read(&path, e))?;
            let state = load_state(&settings.state_dir)?;
            let percentiles: BTreeMap<String, f64> = match population {
                Some(p) => {
                    let pop = PopulationFile::load(&p)?;
                    let u = uniqueness::uniqueness(&state, settings.scenario, &settings.taxonomy, &pop)?;
                    selector_percentiles(&u).filter_map(|(s, v)| Some((s.to_string(), v?))).collect()
                }
                None => BTreeMap::new(),
            };
            let r = policy_eval::evaluate_policies(
                &state,
                settings.scenario,
                settings.seed,
                &policies,
                &settings.taxonomy,
                &percentiles,
            );
            emit(&output, &r.to_json(), &r.to_table())?;
        }
        Command::Uniqueness { population, output } => {
            let state = load_state(&settings.state_dir)?;
            let pop = PopulationFile::load(&population)?;
            let r = uniqueness::uniqueness(&state, settings.scenario, &settings.taxonomy, &pop)?;
            emit(&output, &r.to_json(), &r.to_table())?;
        }
        Command::Aggregate { snapshots, out } => {
            let pop = uniqueness::aggregate(&snapshots, &settings.taxonomy)?;
            std::fs::write(&out, pop.to_json()).map_err(|e| CliError::write(&out, e))?;
            stdout(&format!("{}: {} snapshots, {} uniqueness values\n", out.display(), pop.snapshots, pop.u_values.len()))?;
        }
        Command::Simulate { scenario_config, out } => {
            let mut cfg = simulate::load_scenario(&scenario_config)?;
            if let Some(seed) = overrides.seed {
                cfg.seed = seed;
            }
            if let Some(s) = overrides.scenario {
                cfg.scenario = s;
            }
            let o = simulate::run(&cfg, &out)?;
            stdout(&format!(
                "wrote {} and {}; worst-case bound {}\n",
                o.events.display(),
                o.experiment.display(),
                if o.report.bound_holds() { "holds" } else { "VIOLATED" }
            ))?;
        }
    }
    Ok(())
}

fn load_state(dir: &Path) -> Result<State> {
    State::load(dir)?.ok_or_else(|| CliError::Data(format!("no state in {}; run `adscope ingest` first", dir.display())))
}

fn emit(output: &Output, json: &str, table: &str) -> Result<()> {
    if let Some(path) = &output.out {
        std::fs::write(path, json).map_err(|e| CliError::write(path, e))?;
    }
    stdout(match output.format {
        Format::Json => json,
        Format::Text => table,
    })
}

/// Writes to stdout; a closed pipe (`adscope report | head`) is not an error.
fn stdout(text: &str) -> Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Internal(format!("writing stdout: {e}"))),
        _ => Ok(()),
    }
}
