//! The `eccola` command line. Each subcommand loads the session file,
//! performs one engine operation and writes the file back.

use std::fmt::Write as _;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use eccola_deploy::engine::Actor;
use eccola_deploy::model::{
    Card, CardId, SessionConfig, SprintRecord, TriggerCategory, TriggerId, VerdictOutcome,
};
use eccola_deploy::persistence::{
    export_picture, import_allocations_csv, import_scores_csv, load_session, save_session,
    ExportFormat,
};
use eccola_deploy::{
    Clock, Deck, Error, ErrorClass, RenderMode, Result, Session, SessionId, Stakeholder,
    StakeholderId, SystemClock,
};

use crate::api::{self, AppState};
use crate::auth::{attach_token, RandomTokens, TokenIssuer};
use crate::config::ServerConfig;

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  usage error
  3  validation error (e.g. BudgetMismatch, MalformedRow)
  4  action not permitted for the acting stakeholder
  5  unknown stakeholder, round or trigger
  6  state conflict (e.g. WrongPhase, MissingAllocations)
  7  storage error (unreadable, corrupt or tampered session file)

Failures print `MachineCode: message` on stderr.";

#[derive(Debug, Parser)]
#[command(name = "eccola", version, about = "Run ECCOLA prioritization sessions from the shell", after_help = EXIT_CODES)]
pub struct Cli {
    /// Session file to operate on.
    #[arg(long, global = true, value_name = "PATH")]
    pub session: Option<PathBuf>,
    /// Stakeholder the command is recorded for. Defaults to the first
    /// facilitator of the session.
    #[arg(long, global = true, value_name = "ID")]
    pub actor: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create a new session file with its facilitator.
    Init(InitArgs),
    /// Register a stakeholder and print their bearer token.
    AddStakeholder(StakeholderArgs),
    /// Open the next prioritization round.
    OpenRound {
        /// Fired trigger that motivates a re-prioritization round.
        #[arg(long)]
        trigger: Option<String>,
    },
    /// Submit the allocations in a `stakeholder_id,card_id,tokens` CSV.
    ImportAllocations {
        #[arg(long)]
        round: u32,
        #[arg(long)]
        csv: PathBuf,
    },
    /// Close a round and print its card priorities.
    CloseRound {
        #[arg(long)]
        round: u32,
    },
    /// Register or fire a change trigger.
    #[command(subcommand)]
    Trigger(TriggerCommand),
    /// Record the cards worked on in a development sprint.
    Sprint {
        #[arg(long)]
        id: String,
        /// Comma-separated card numbers, e.g. `8,12`.
        #[arg(long, value_delimiter = ',')]
        cards: Vec<u32>,
        #[arg(long, default_value = "")]
        justification: String,
        #[arg(long, default_value = "")]
        notes: String,
    },
    /// Start the ethical-coverage assessment.
    BeginAssessment,
    /// Submit the scores in a `stakeholder_id,card_id,score` CSV.
    ImportScores {
        #[arg(long)]
        csv: PathBuf,
    },
    /// Export the target-state or outcome picture.
    Picture {
        #[arg(long, value_enum)]
        kind: PictureKindArg,
        #[arg(long, value_enum, default_value = "svg")]
        format: FormatArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "size-coding")]
        mode: ModeArg,
    },
    /// Print how card priorities moved since the baseline.
    Delta,
    /// Record the assessment verdict.
    Verdict {
        #[arg(long, value_enum)]
        outcome: OutcomeArg,
        #[arg(long)]
        rationale: String,
    },
    /// List the audit journal.
    Audit,
    /// Print the session status as JSON.
    Status,
    /// Run the HTTP API.
    Serve {
        /// TOML file with `bind`, `port` and `storage_dir`.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct InitArgs {
    #[arg(long)]
    pub session_id: String,
    /// Stakeholder id of the facilitator.
    #[arg(long)]
    pub facilitator: String,
    #[arg(long)]
    pub name: Option<String>,
    /// Facilitator also allocates tokens and scores cards.
    #[arg(long)]
    pub voting: bool,
    /// JSON array of cards replacing the default 21-card deck.
    #[arg(long)]
    pub deck: Option<PathBuf>,
    /// Reject a second submission by the same stakeholder in a round.
    #[arg(long)]
    pub no_resubmission: bool,
}

#[derive(Debug, Args)]
pub struct StakeholderArgs {
    #[arg(long)]
    pub id: String,
    #[arg(long)]
    pub name: String,
    #[arg(long)]
    pub role: String,
    #[arg(long)]
    pub facilitator: bool,
    /// Rounds and assessments may complete without this stakeholder.
    #[arg(long)]
    pub optional: bool,
}

#[derive(Debug, Subcommand)]
pub enum TriggerCommand {
    Register {
        #[arg(long)]
        id: Option<String>,
        #[arg(long)]
        description: String,
        #[arg(long, value_enum, default_value = "other")]
        category: CategoryArg,
    },
    Fire {
        #[arg(long)]
        id: String,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PictureKindArg {
    Target,
    Outcome,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Svg,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    SizeCoding,
    Connector,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OutcomeArg {
    Sufficient,
    Return,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CategoryArg {
    Regulation,
    StakeholderRequest,
    Other,
}

impl From<CategoryArg> for TriggerCategory {
    fn from(c: CategoryArg) -> Self {
        match c {
            CategoryArg::Regulation => TriggerCategory::Regulation,
            CategoryArg::StakeholderRequest => TriggerCategory::StakeholderRequest,
            CategoryArg::Other => TriggerCategory::Other,
        }
    }
}

pub fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Validation => 3,
        ErrorClass::Forbidden => 4,
        ErrorClass::NotFound => 5,
        ErrorClass::Conflict => 6,
        ErrorClass::Storage => 7,
    }
}

/// Runs a parsed command line, returning the text for stdout.
pub fn run(cli: Cli, clock: Arc<dyn Clock>, issuer: &dyn TokenIssuer) -> Result<String> {
    if let Command::Serve { config } = &cli.command {
        return serve(config.as_deref(), clock);
    }
    let path = cli
        .session
        .clone()
        .ok_or_else(|| Error::OutOfRange("--session PATH is required".into()))?;
    if let Command::Init(args) = cli.command {
        return init(&path, args, clock, issuer);
    }
    let mut session = load_session(&path, clock)?;
    let actor = match &cli.actor {
        Some(id) => Actor::Stakeholder(StakeholderId::new(id)),
        None => session
            .state()
            .stakeholders
            .iter()
            .find(|s| s.facilitator)
            .map(|s| Actor::Stakeholder(s.stakeholder_id.clone()))
            .unwrap_or(Actor::System),
    };
    let before = session.journal().len();
    let out = execute(&mut session, &actor, cli.command, issuer)?;
    if session.journal().len() != before {
        save_session(&session, &path)?;
    }
    Ok(out)
}

fn init(path: &Path, args: InitArgs, clock: Arc<dyn Clock>, issuer: &dyn TokenIssuer) -> Result<String> {
    if path.exists() {
        return Err(Error::Io(format!("{} already exists", path.display())));
    }
    let deck = match &args.deck {
        Some(p) => {
            let cards: Vec<Card> = serde_json::from_reader(File::open(p)?)
                .map_err(|e| Error::InvalidDeck(e.to_string()))?;
            Deck::new(cards)?
        }
        None => Deck::eccola(),
    };
    let name = args.name.clone().unwrap_or_else(|| args.facilitator.clone());
    let mut facilitator = Stakeholder::new(&args.facilitator, name, "facilitator").facilitator();
    if !args.voting {
        facilitator = facilitator.optional();
    }
    let token = attach_token(&mut facilitator, issuer);
    let session = Session::create(
        SessionId::new(args.session_id),
        deck,
        vec![facilitator],
        SessionConfig {
            allow_resubmission: !args.no_resubmission,
        },
        clock,
    )?;
    save_session(&session, path)?;
    Ok(format!("token {} {token}\n", args.facilitator))
}

fn execute(session: &mut Session, actor: &Actor, command: Command, issuer: &dyn TokenIssuer) -> Result<String> {
    let mut out = String::new();
    match command {
        Command::Init(_) | Command::Serve { .. } => unreachable!("handled before loading"),
        Command::AddStakeholder(a) => {
            let mut s = Stakeholder::new(&a.id, a.name, a.role);
            s.facilitator = a.facilitator;
            s.required = !a.optional;
            let token = attach_token(&mut s, issuer);
            session.add_stakeholder(actor, s)?;
            let _ = writeln!(out, "token {} {token}", a.id);
        }
        Command::OpenRound { trigger } => {
            let r = session.open_round(actor, trigger.map(TriggerId::new))?;
            let _ = writeln!(out, "round {r} open");
        }
        Command::ImportAllocations { round, csv } => {
            let n = import_allocations_csv(session, actor, File::open(&csv)?, round)?;
            let _ = writeln!(out, "imported {n} allocations into round {round}");
        }
        Command::CloseRound { round } => {
            let table = session.close_round(actor, round)?;
            let deck = &session.state().deck;
            let _ = writeln!(out, "round {round} closed, phase {}", session.phase());
            for (card, total) in table.ranking() {
                let name = deck.card(card).map_or("", |c| c.name.as_str());
                let _ = writeln!(out, "{card:>4} {total:>4}  {name}");
            }
        }
        Command::Trigger(TriggerCommand::Register { id, description, category }) => {
            let id = session.register_trigger(actor, id.map(TriggerId::new), description, category.into())?;
            let _ = writeln!(out, "trigger {id} registered");
        }
        Command::Trigger(TriggerCommand::Fire { id }) => {
            let status = session.fire_trigger(actor, &TriggerId::new(&id))?;
            let _ = writeln!(out, "trigger {id} {status}, phase {}", session.phase());
        }
        Command::Sprint { id, cards, justification, notes } => {
            session.record_sprint(
                actor,
                SprintRecord {
                    sprint_id: id.clone(),
                    selected_card_ids: cards.into_iter().map(CardId).collect(),
                    justification,
                    review_notes: notes,
                },
            )?;
            let _ = writeln!(out, "sprint {id} recorded");
        }
        Command::BeginAssessment => {
            let a = session.begin_assessment(actor)?;
            let _ = writeln!(out, "assessment {a} open");
        }
        Command::ImportScores { csv } => {
            let n = import_scores_csv(session, actor, File::open(&csv)?)?;
            let status = session.status();
            let _ = writeln!(out, "imported scores for {n} stakeholders");
            match status.outcome_picture {
                Some(p) if status.assessment_missing == Some(0) => {
                    let _ = writeln!(out, "assessment complete, outcome picture {p}");
                }
                _ => {
                    let missing = status.assessment_missing.unwrap_or(0);
                    let _ = writeln!(out, "{missing} scores still missing");
                }
            }
        }
        Command::Picture { kind, format, out: file, mode } => {
            let mode = match mode {
                ModeArg::SizeCoding => RenderMode::SizeCoding,
                ModeArg::Connector => RenderMode::Connector,
            };
            let picture = match kind {
                PictureKindArg::Target => session.target_picture()?.clone(),
                PictureKindArg::Outcome => session.outcome_picture(mode)?,
            };
            let format = match format {
                FormatArg::Svg => ExportFormat::Svg,
                FormatArg::Json => ExportFormat::Json,
            };
            let bytes = export_picture(session, actor, &picture, format, &file)?;
            let _ = writeln!(out, "wrote {} ({} bytes)", file.display(), bytes.len());
        }
        Command::Delta => {
            let d = session.delta_report()?;
            let _ = writeln!(out, "baseline round {} -> round {}", d.baseline_round, d.current_round);
            for t in &d.triggers {
                let _ = writeln!(out, "trigger {}: {}", t.trigger_id, t.description);
            }
            for r in &d.rows {
                let _ = writeln!(
                    out,
                    "{:>4} {:<36} {:>3} -> {:>3} ({:+}) {:?}",
                    r.label, r.name, r.baseline_total, r.current_total, r.total_delta, r.size_code
                );
                for reason in &r.reasons {
                    let _ = writeln!(out, "       {reason}");
                }
            }
        }
        Command::Verdict { outcome, rationale } => {
            let outcome = match outcome {
                OutcomeArg::Sufficient => VerdictOutcome::Sufficient,
                OutcomeArg::Return => VerdictOutcome::ReturnToReprioritization,
            };
            let phase = session.record_verdict(actor, outcome, rationale)?;
            let _ = writeln!(out, "verdict recorded, phase {phase}");
        }
        Command::Audit => {
            for e in session.journal().events() {
                let _ = writeln!(
                    out,
                    "{:>5} {} {:<12} {:<22} {}",
                    e.sequence,
                    e.timestamp.format("%Y-%m-%dT%H:%M:%S%.6fZ"),
                    e.actor.to_string(),
                    e.kind.to_string(),
                    &e.digest[..16]
                );
            }
        }
        Command::Status => {
            out = serde_json::to_string_pretty(&session.status()).expect("status serializes");
            out.push('\n');
        }
    }
    Ok(out)
}

fn serve(config: Option<&Path>, clock: Arc<dyn Clock>) -> Result<String> {
    let config = ServerConfig::load(config, |k| std::env::var(k).ok())?;
    let state = AppState::with_storage(&config.storage_dir, clock, Arc::new(RandomTokens))?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(api::serve(&config.address(), state))?;
    Ok(String::new())
}

/// Entry point for the binary: parses `std::env::args`, runs and reports.
pub fn main_with_args() -> std::process::ExitCode {
    let cli = Cli::parse();
    match run(cli, Arc::new(SystemClock), &RandomTokens) {
        Ok(out) => {
            print!("{out}");
            std::process::ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            std::process::ExitCode::from(exit_code(&e))
        }
    }
}
