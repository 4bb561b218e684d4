//! Seeded simulation: writes the event log and the experiment report.

use std::io::Write;
use std::path::{Path, PathBuf};

use adscope_core::simulator::{evaluate, simulate, ExperimentReport, ScenarioConfig};

use crate::error::{CliError, Result};

pub const EVENTS_FILE: &str = "events.jsonl";
pub const EXPERIMENT_FILE: &str = "experiment.json";

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::read(path, e))?;
    let cfg: ScenarioConfig = toml::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    cfg.validate().map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(cfg)
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub events: PathBuf,
    pub experiment: PathBuf,
    pub report: ExperimentReport,
}

/// Runs `cfg` and writes `events.jsonl` and `experiment.json` under `out`.
pub fn run(cfg: &ScenarioConfig, out: &Path) -> Result<SimulationOutput> {
    let sim = simulate(cfg)?;
    let report = evaluate(cfg, &sim)?;
    std::fs::create_dir_all(out).map_err(|e| CliError::write(out, e))?;

    let events = out.join(EVENTS_FILE);
    let file = std::fs::File::create(&events).map_err(|e| CliError::write(&events, e))?;
    let mut w = std::io::BufWriter::new(file);
    for ev in sim.events() {
        serde_json::to_writer(&mut w, &ev).map_err(|e| CliError::write(&events, e))?;
        w.write_all(b"\n").map_err(|e| CliError::write(&events, e))?;
    }
    w.flush().map_err(|e| CliError::write(&events, e))?;

    let experiment = out.join(EXPERIMENT_FILE);
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    std::fs::write(&experiment, json).map_err(|e| CliError::write(&experiment, e))?;
    Ok(SimulationOutput { events, experiment, report })
}
