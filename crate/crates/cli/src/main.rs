//! `procline`: file-based access to the process line toolkit. Every
//! command prints JSON on stdout (XML for `log export-xml`); failures print
//! a JSON error object on stderr.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{DateTime, FixedOffset, Local};
use clap::{Args, Parser, Subcommand};
use procline_core::analytics::{
    aggregate_effort, check_printed_totals, compare_groups, derive_effort_records, read_effort_csv,
    read_printed_totals, EffortAxes, WeekBucket,
};
use procline_core::line::{build_process_line, cut_at_abstraction, diff_to_core};
use procline_core::persist::{load_base, parse_json, read_json, to_json, ProcessBase};
use procline_core::reflection::{
    compute_delta, discover_process, export_log_xml, import_log_xml, parse_event_log, refine_process, EventLog,
    JustificationLedger, RefinementDecision, DEFAULT_THETA,
};
use procline_core::selection::{select_top_k, ProjectCharacteristic};
use procline_core::session::{load_session, save_session, Session, SessionAction};
use procline_core::tailoring::estimate_roi;
use procline_core::{Error, ProcessModel};
use serde::Serialize;
use serde_json::json;

#[derive(Parser)]
#[command(name = "procline", version, about = "Select, tailor and refine project-specific processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect a process base file.
    #[command(subcommand)]
    Base(BaseCommand),
    /// Build, cut and diff the process line of a base.
    #[command(subcommand)]
    Line(LineCommand),
    /// Rank the variants of a base against project characteristics.
    Select {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        characteristics: PathBuf,
        #[arg(long)]
        k: usize,
        /// Score ordinal characteristics as exact matches only.
        #[arg(long)]
        exact_ordinals: bool,
    },
    /// Apply one action to a session file, creating it with `--base`.
    Tailor {
        #[arg(long)]
        session: PathBuf,
        /// A session action as inline JSON or a path to a JSON file.
        #[arg(long)]
        action: String,
        /// Process base for a new session.
        #[arg(long)]
        base: Option<PathBuf>,
        #[arg(long)]
        at: Option<DateTime<FixedOffset>>,
    },
    /// Estimate whether adapting the selected process beats building the target.
    Roi {
        #[arg(long)]
        selected: PathBuf,
        #[arg(long)]
        target: PathBuf,
    },
    /// Read activity logs (text, JSON or XML).
    #[command(subcommand)]
    Log(LogCommand),
    /// Discover the performed process of a log.
    Discover { log: PathBuf },
    /// Compare a prescriptive process with the one discovered from a log.
    Delta {
        #[arg(long)]
        prescriptive: PathBuf,
        #[arg(long)]
        log: PathBuf,
    },
    /// Apply refinement decisions to a prescriptive process.
    Refine {
        #[arg(long)]
        prescriptive: PathBuf,
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        decisions: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THETA)]
        theta: f64,
        #[arg(long)]
        at: Option<DateTime<FixedOffset>>,
    },
    /// Effort tables from `week;group;activity;minutes` records.
    #[command(subcommand)]
    Effort(EffortCommand),
}

#[derive(Subcommand)]
enum BaseCommand {
    Validate {
        base: PathBuf,
    },
    Show {
        base: PathBuf,
        #[arg(long)]
        variant: Option<String>,
    },
}

#[derive(Args)]
struct BaseArg {
    #[arg(long)]
    base: PathBuf,
}

#[derive(Subcommand)]
enum LineCommand {
    Build(BaseArg),
    Cut {
        #[command(flatten)]
        base: BaseArg,
        #[arg(long)]
        level: u32,
    },
    Diff {
        #[command(flatten)]
        base: BaseArg,
        #[arg(long)]
        variant: String,
    },
}

#[derive(Subcommand)]
enum LogCommand {
    /// Print the log as JSON together with pairing warnings.
    Parse {
        log: PathBuf,
    },
    ExportXml {
        log: PathBuf,
    },
}

#[derive(Subcommand)]
enum EffortCommand {
    Aggregate {
        records: PathBuf,
        /// Printed totals (`scope;group;key;minutes`) to check against.
        #[arg(long)]
        totals: Option<PathBuf>,
    },
    Compare {
        records: PathBuf,
    },
    /// Effort records from the started/completed pairs of a log.
    Derive {
        log: PathBuf,
        /// Week bucket labels such as `17-23.11.2004`.
        #[arg(long, value_delimiter = ',', required = true)]
        weeks: Vec<String>,
    },
}

enum Output {
    Json(serde_json::Value),
    Text(String),
}

fn json_out<T: Serialize>(value: &T) -> Result<Output, Error> {
    Ok(Output::Json(serde_json::to_value(value).expect("output types serialize")))
}

fn now() -> DateTime<FixedOffset> {
    Local::now().fixed_offset()
}

fn base_file(path: &Path) -> Result<ProcessBase, Error> {
    load_base(path)
}

fn model_file(path: &Path) -> Result<ProcessModel, Error> {
    let model: ProcessModel = read_json(path)?;
    model.ensure_valid()?;
    Ok(model)
}

/// Text, JSON or XML, told apart by the first non-blank character.
fn log_file(path: &Path) -> Result<EventLog, Error> {
    let text = fs::read_to_string(path)?;
    match text.trim_start().chars().next() {
        Some('<') => import_log_xml(&text),
        Some('{') => parse_json(&text, Some(path)),
        _ => parse_event_log(&text),
    }
}

fn action_arg(arg: &str) -> Result<SessionAction, Error> {
    if arg.trim_start().starts_with('{') {
        parse_json(arg, None)
    } else {
        read_json(Path::new(arg))
    }
}

fn run(command: Command) -> Result<Output, Error> {
    match command {
        Command::Base(BaseCommand::Validate { base }) => {
            let base = base_file(&base)?;
            json_out(&json!({ "valid": true, "variants": base.variants.len() }))
        }
        Command::Base(BaseCommand::Show { base, variant: None }) => json_out(&base_file(&base)?),
        Command::Base(BaseCommand::Show { base, variant: Some(id) }) => {
            let base = base_file(&base)?;
            let variant = base.variant(&id).ok_or_else(|| Error::NotFound { what: "variant", name: id.clone() })?;
            json_out(variant)
        }
        Command::Line(LineCommand::Build(BaseArg { base })) => {
            json_out(&build_process_line(&base_file(&base)?.variants)?)
        }
        Command::Line(LineCommand::Cut { base, level }) => {
            let line = build_process_line(&base_file(&base.base)?.variants)?;
            json_out(&cut_at_abstraction(&line, level)?)
        }
        Command::Line(LineCommand::Diff { base, variant }) => {
            let line = build_process_line(&base_file(&base.base)?.variants)?;
            json_out(&diff_to_core(&line, &variant)?)
        }
        Command::Select { base, characteristics, k, exact_ordinals } => {
            let base = base_file(&base)?;
            let query: Vec<ProjectCharacteristic> = read_json(&characteristics)?;
            json_out(&select_top_k(&base.variants, &query, k, !exact_ordinals)?)
        }
        Command::Tailor { session, action, base, at } => {
            let action = action_arg(&action)?;
            let current = match base {
                Some(base) if !session.exists() => {
                    let id = session.file_stem().and_then(|s| s.to_str()).unwrap_or("session");
                    Session::new(id, base_file(&base)?.variants)
                }
                Some(_) => return Err(Error::Duplicate { what: "session file", name: session.display().to_string() }),
                None => load_session(&session)?,
            };
            let next = current.apply(action, at.unwrap_or_else(now))?;
            save_session(&next, &session)?;
            json_out(&json!({
                "phase": next.phase,
                "working": next.working,
                "consistency": next.consistency(),
                "ledger": next.ledger,
                "transcript_length": next.transcript.len(),
            }))
        }
        Command::Roi { selected, target } => json_out(&estimate_roi(&model_file(&selected)?, &model_file(&target)?)),
        Command::Log(LogCommand::Parse { log }) => {
            let log = log_file(&log)?;
            json_out(&json!({ "log": log, "warnings": log.warnings() }))
        }
        Command::Log(LogCommand::ExportXml { log }) => Ok(Output::Text(export_log_xml(&log_file(&log)?))),
        Command::Discover { log } => json_out(&discover_process(&log_file(&log)?)),
        Command::Delta { prescriptive, log } => {
            let log = log_file(&log)?;
            json_out(&compute_delta(&model_file(&prescriptive)?, &discover_process(&log), &log))
        }
        Command::Refine { prescriptive, log, decisions, theta, at } => {
            let prescriptive = model_file(&prescriptive)?;
            let log = log_file(&log)?;
            let decisions: Vec<RefinementDecision> = read_json(&decisions)?;
            let performed = discover_process(&log);
            let delta = compute_delta(&prescriptive, &performed, &log);
            let mut ledger = JustificationLedger::new();
            let refinement = refine_process(
                &prescriptive,
                &performed,
                &delta,
                &decisions,
                theta,
                &mut ledger,
                at.unwrap_or_else(now),
            )?;
            let remaining = compute_delta(&refinement.model, &performed, &log);
            json_out(&json!({
                "model": refinement.model,
                "suggestions": refinement.suggestions,
                "ledger": ledger,
                "delta": remaining,
            }))
        }
        Command::Effort(EffortCommand::Aggregate { records, totals }) => {
            let records = read_effort_csv(File::open(&records)?)?;
            let tables = aggregate_effort(&records, &EffortAxes::from_records(&records))?;
            let report = match totals {
                Some(path) => Some(check_printed_totals(&tables, &read_printed_totals(File::open(path)?)?)?),
                None => None,
            };
            json_out(&json!({ "tables": tables, "totals_check": report }))
        }
        Command::Effort(EffortCommand::Compare { records }) => {
            let records = read_effort_csv(File::open(&records)?)?;
            json_out(&compare_groups(&aggregate_effort(&records, &EffortAxes::from_records(&records))?)?)
        }
        Command::Effort(EffortCommand::Derive { log, weeks }) => {
            let buckets = weeks.iter().map(|w| WeekBucket::parse(w)).collect::<Result<Vec<_>, _>>()?;
            json_out(&derive_effort_records(&log_file(&log)?, &buckets))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(output) => {
            let text = match output {
                Output::Json(value) => to_json(&value),
                Output::Text(text) => text,
            };
            // a closed stdout (e.g. `| head`) is not worth a panic
            let _ = io::stdout().write_all(text.as_bytes());
            ExitCode::SUCCESS
        }
        Err(err) => {
            let body = json!({ "error": { "code": err.code(), "message": err.to_string() } });
            eprintln!("{}", to_json(&body).trim_end());
            ExitCode::from(1)
        }
    }
}
