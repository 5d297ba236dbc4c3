//! Command-line front end. `run_cli` returns the process exit code so tests can
//! drive it without spawning a process.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::bundled;
use crate::classify::{parse_corpus, train, Hyperparams, Task};
use crate::config::{ConfigError, LedgerScope, ScenarioConfig};
use crate::dispatch::{log_to_jsonl, ContactLedger};
use crate::geoparse::{Gazetteer, Geoparser, TieRule};
use crate::metrics::{build_report, crisis_map, crisis_map_geojson, summary_csv, EventLog, MetricsReport};
use crate::oracle::oracle_check;
use crate::pipeline::{run_scenario, PipelineError, Resources, RunOutput};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "hysense", version, about = "Hybrid crowdsensing pipeline for earthquake response")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one or more scenarios and write logs, reports and crisis maps.
    Run {
        /// Scenario file, or a directory whose *.json files are all run. Repeatable.
        #[arg(long, required = true)]
        config: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed of every scenario.
        #[arg(long)]
        seed: Option<u64>,
        /// Scenarios run concurrently, each with its own contact ledger.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
    /// Train and evaluate a classifier on a labeled corpus (64/16/20 split).
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        /// relevance, damage (presence and info), damage_presence or damage_info.
        #[arg(long)]
        task: String,
    },
    /// Print the place tags found in a text, one per line.
    Geoparse {
        #[arg(long, conflicts_with = "file", required_unless_present = "file")]
        text: Option<String>,
        #[arg(long)]
        file: Option<PathBuf>,
        /// Defaults to the bundled gazetteer.
        #[arg(long)]
        gazetteer: Option<PathBuf>,
    },
    /// Compare the geoparser, metrics and AUC against brute-force references.
    OracleCheck {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        gazetteer: Option<PathBuf>,
        /// Check against a reference with an inverted tie rule; must fail.
        #[arg(long)]
        negative_control: bool,
    },
    /// Rebuild reports from event logs and compare them with the stored ones.
    Report {
        #[arg(long)]
        log: PathBuf,
    },
}

/// A failure with its exit code; the message goes to standard error.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn config(message: impl ToString) -> Self {
        Failure { code: EXIT_CONFIG, message: message.to_string() }
    }

    fn runtime(message: impl ToString) -> Self {
        Failure { code: EXIT_RUNTIME, message: message.to_string() }
    }

    fn validation(message: impl ToString) -> Self {
        Failure { code: EXIT_VALIDATION, message: message.to_string() }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        if e.is_config() {
            Failure::config(e)
        } else {
            Failure::runtime(e)
        }
    }
}

/// Parses `args` (including the program name) and runs the command, writing
/// normal output to `out` and diagnostics to `err`.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return code;
        }
    };
    match execute(cli.command, out, err) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn execute(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    match cmd {
        Command::Run { config, out: dir, seed, parallel } => cmd_run(&config, &dir, seed, parallel, out, err),
        Command::Eval { corpus, task } => cmd_eval(&corpus, &task, out),
        Command::Geoparse { text, file, gazetteer } => cmd_geoparse(text, file, gazetteer, out),
        Command::OracleCheck { n, seed, gazetteer, negative_control } => {
            cmd_oracle(n, seed, gazetteer, negative_control, out)
        }
        Command::Report { log } => cmd_report(&log, out),
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::runtime(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

/// Expands directories into their `*.json` files, sorted by name.
fn scenario_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| Failure::config(format!("{}: {e}", p.display())))?
                .filter_map(|d| d.ok().map(|d| d.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "json"))
                .collect();
            found.sort();
            if found.is_empty() {
                return Err(Failure::config(format!("{}: no scenario files", p.display())));
            }
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

fn dir_name(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    if s.is_empty() { "scenario".into() } else { s }
}

/// Resources are keyed by everything that shapes them, so scenarios sharing
/// data files train once.
fn resource_key(cfg: &ScenarioConfig) -> String {
    serde_json::to_string(&(&cfg.gazetteer, &cfg.classifiers, &cfg.witness_weights, &cfg.witness_centroid))
        .expect("paths serialize")
}

fn write_outputs(dir: &Path, run: &RunOutput, ledger: Option<&ContactLedger>) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let messages: String = run
        .messages
        .iter()
        .map(|m| serde_json::to_string(m).expect("messages serialize") + "\n")
        .collect();
    write_file(&dir.join("messages.jsonl"), &messages)?;
    write_file(&dir.join("dispatch.jsonl"), &log_to_jsonl(&run.log.dispatch))?;
    write_file(&dir.join("event_log.json"), &(run.log.to_json() + "\n"))?;
    write_file(&dir.join("report.json"), &(run.report.to_json() + "\n"))?;
    let geojson = crisis_map_geojson(&run.crisis_cells, run.log.grid_cell_deg);
    write_file(&dir.join("crisis_map.geojson"), &(serde_json::to_string_pretty(&geojson).expect("geojson") + "\n"))?;
    write_file(&dir.join("summary.csv"), &summary_csv(std::slice::from_ref(&run.report)))?;
    if let Some(l) = ledger {
        write_file(&dir.join("ledger.txt"), &l.to_text())?;
    }
    Ok(())
}

struct Job {
    cfg: ScenarioConfig,
    dir: PathBuf,
}

fn cmd_run(
    inputs: &[PathBuf],
    out_dir: &Path,
    seed: Option<u64>,
    parallel: usize,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), Failure> {
    if parallel == 0 {
        return Err(Failure::config("--parallel must be at least 1"));
    }
    let files = scenario_files(inputs)?;
    let mut jobs = Vec::new();
    let mut used: HashMap<String, usize> = HashMap::new();
    for f in &files {
        let mut cfg = ScenarioConfig::load(f).map_err(|e: ConfigError| Failure::config(e))?;
        if let Some(s) = seed {
            cfg.seed = s;
        }
        let base = dir_name(&cfg.name);
        let n = used.entry(base.clone()).or_insert(0);
        *n += 1;
        let name = if *n == 1 { base } else { format!("{base}-{n}") };
        let dir = if files.len() == 1 { out_dir.to_path_buf() } else { out_dir.join(name) };
        jobs.push(Job { cfg, dir });
    }
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;

    let mut resources: HashMap<String, Resources> = HashMap::new();
    for j in &jobs {
        if let Entry::Vacant(slot) = resources.entry(resource_key(&j.cfg)) {
            slot.insert(Resources::for_config(&j.cfg)?);
        }
    }

    let mut reports: Vec<Option<MetricsReport>> = Vec::new();
    if parallel == 1 {
        // the campaign ledger persists across scenarios of this invocation
        let campaign_path = out_dir.join("ledger.txt");
        let mut campaign = if jobs.iter().any(|j| j.cfg.ledger == LedgerScope::Campaign) {
            Some(ContactLedger::open(&campaign_path).map_err(Failure::runtime)?)
        } else {
            None
        };
        for j in &jobs {
            let res = &resources[&resource_key(&j.cfg)];
            fs::create_dir_all(&j.dir).map_err(|e| io_err(&j.dir, e))?;
            let result = match j.cfg.ledger {
                LedgerScope::Campaign => {
                    run_scenario(&j.cfg, res, campaign.as_mut().expect("opened above")).map(|r| (r, None))
                }
                LedgerScope::Event => {
                    let mut ledger = ContactLedger::open(&j.dir.join("ledger.txt")).map_err(Failure::runtime)?;
                    run_scenario(&j.cfg, res, &mut ledger).map(|r| (r, Some(ledger)))
                }
            };
            reports.push(finish(j, result, err)?);
        }
    } else {
        // isolated runs: each scenario gets its own ledger in its own directory
        for chunk in jobs.chunks(parallel) {
            let results: Vec<Result<(RunOutput, Option<ContactLedger>), PipelineError>> =
                std::thread::scope(|scope| {
                    let handles: Vec<_> = chunk
                        .iter()
                        .map(|j| {
                            let res = &resources[&resource_key(&j.cfg)];
                            scope.spawn(move || {
                                let _ = fs::create_dir_all(&j.dir);
                                let mut ledger = ContactLedger::open(&j.dir.join("ledger.txt"))?;
                                run_scenario(&j.cfg, res, &mut ledger).map(|r| (r, Some(ledger)))
                            })
                        })
                        .collect();
                    handles.into_iter().map(|h| h.join().expect("scenario thread panicked")).collect()
                });
            for (j, r) in chunk.iter().zip(results) {
                reports.push(finish(j, r, err)?);
            }
        }
    }

    let done: Vec<MetricsReport> = reports.into_iter().flatten().collect();
    if jobs.len() > 1 {
        write_file(&out_dir.join("summary.csv"), &summary_csv(&done))?;
    }
    let _ = write!(out, "{}", summary_csv(&done));
    Ok(())
}

fn finish(
    job: &Job,
    result: Result<(RunOutput, Option<ContactLedger>), PipelineError>,
    err: &mut dyn Write,
) -> Result<Option<MetricsReport>, Failure> {
    match result {
        Ok((run, ledger)) => {
            write_outputs(&job.dir, &run, ledger.as_ref())?;
            Ok(Some(run.report))
        }
        Err(e @ PipelineError::NotTriggered { .. }) => {
            let _ = writeln!(err, "{}: {e}; nothing to do", job.cfg.name);
            Ok(None)
        }
        Err(e) => Err(Failure::from(e)),
    }
}

fn cmd_eval(corpus: &Path, task: &str, out: &mut dyn Write) -> Result<(), Failure> {
    let tasks = match task {
        "damage" => vec![Task::DamagePresence, Task::DamageInfo],
        other => vec![other.parse::<Task>().map_err(Failure::config)?],
    };
    let text = fs::read_to_string(corpus).map_err(|e| Failure::config(format!("{}: {e}", corpus.display())))?;
    let examples = parse_corpus(&text).map_err(|e| Failure::config(format!("{}: {e}", corpus.display())))?;
    for (i, t) in tasks.into_iter().enumerate() {
        let (_, report) = train(&examples, t, &Hyperparams::default()).map_err(Failure::config)?;
        if i > 0 {
            let _ = writeln!(out);
        }
        let _ = writeln!(out, "{report}");
    }
    Ok(())
}

fn load_gazetteer(path: Option<&Path>) -> Result<Gazetteer, Failure> {
    match path {
        Some(p) => Gazetteer::load(p).map_err(Failure::config),
        None => Gazetteer::parse_tsv(bundled::GAZETTEER_TSV).map_err(Failure::config),
    }
}

fn cmd_geoparse(
    text: Option<String>,
    file: Option<PathBuf>,
    gazetteer: Option<PathBuf>,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let gaz = load_gazetteer(gazetteer.as_deref())?;
    let text = match (text, file) {
        (Some(t), _) => t,
        (None, Some(f)) => fs::read_to_string(&f).map_err(|e| Failure::config(format!("{}: {e}", f.display())))?,
        (None, None) => unreachable!("clap requires --text or --file"),
    };
    for tag in Geoparser::new(&gaz).parse(&text, None) {
        let _ = writeln!(
            out,
            "{}..{}\t{}\t{}\t{}\t{}\t{}",
            tag.span.0, tag.span.1, tag.surface, tag.place_id, tag.lat, tag.lon, tag.granularity
        );
    }
    Ok(())
}

fn cmd_oracle(
    n: usize,
    seed: u64,
    gazetteer: Option<PathBuf>,
    negative_control: bool,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let gaz = load_gazetteer(gazetteer.as_deref())?;
    let rule = if negative_control { TieRule::InvertedPopulation } else { TieRule::Standard };
    let outcome = oracle_check(&gaz, n, seed, rule);
    for m in &outcome.mismatches {
        let _ = writeln!(out, "mismatch [{}] seed={}: {}", m.check, m.instance_seed, m.detail);
    }
    let _ = writeln!(out, "{} instances, {} mismatches", outcome.instances, outcome.mismatches.len());
    if outcome.mismatches.is_empty() {
        Ok(())
    } else {
        Err(Failure::validation(format!(
            "{} mismatches; rerun one with --n 1 --seed <seed>",
            outcome.mismatches.len()
        )))
    }
}

/// `dir` itself if it holds an event log, else its immediate subdirectories that do.
fn log_dirs(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    if dir.join("event_log.json").is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Failure::config(format!("{}: {e}", dir.display())))?
        .filter_map(|d| d.ok().map(|d| d.path()))
        .filter(|d| d.join("event_log.json").is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Failure::config(format!("{}: no event_log.json found", dir.display())));
    }
    Ok(dirs)
}

fn cmd_report(dir: &Path, out: &mut dyn Write) -> Result<(), Failure> {
    let mut reports = Vec::new();
    let mut stale = Vec::new();
    for d in log_dirs(dir)? {
        let path = d.join("event_log.json");
        let log = EventLog::load(&path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        let report = build_report(&log);
        let stored = d.join("report.json");
        if stored.is_file() {
            let text = fs::read_to_string(&stored).map_err(|e| io_err(&stored, e))?;
            if text.trim_end() != report.to_json() {
                stale.push(stored.display().to_string());
            }
        }
        let mut mapped = log.relevant();
        mapped.extend(log.replies.iter());
        if crisis_map(&mapped, log.grid_cell_deg).len() != report.crisis_cells {
            stale.push(format!("{} (crisis map)", path.display()));
        }
        reports.push(report);
    }
    let _ = write!(out, "{}", summary_csv(&reports));
    if stale.is_empty() {
        Ok(())
    } else {
        Err(Failure::validation(format!("stored report differs from recomputation: {}", stale.join(", "))))
    }
}
