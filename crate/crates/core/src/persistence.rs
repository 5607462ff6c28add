//! Session files, CSV imports and picture exports.
//!
//! A session file is a single compact JSON document holding the full journal
//! and a snapshot of the materialized state. Loading verifies, in order: the
//! schema version, per-event canonical encoding and sequence numbers, the
//! digest chain, the byte-exact encoding of the whole file, and finally that
//! replaying the journal reproduces the snapshot.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::engine::{Actor, AuditEvent, Clock, Journal, Session};
use crate::error::{Error, Result};
use crate::model::{CardId, SessionId, SessionState, StakeholderId, TokenAllocation};
use crate::picture::{render_svg, ChartModel, RenderConfig, SituationalPicture};

pub const SESSION_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snapshot {
    pub at_sequence: u64,
    pub state: SessionState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionFile {
    pub schema_version: u32,
    pub session_id: SessionId,
    pub journal: Vec<AuditEvent>,
    pub snapshot: Option<Snapshot>,
}

#[derive(Deserialize)]
struct VersionProbe {
    schema_version: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSessionFile<'a> {
    schema_version: u32,
    session_id: SessionId,
    #[serde(borrow)]
    journal: Vec<&'a RawValue>,
    #[serde(borrow)]
    snapshot: Option<&'a RawValue>,
}

impl SessionFile {
    pub fn from_session(session: &Session) -> Self {
        let journal = session.journal().events().to_vec();
        SessionFile {
            schema_version: SESSION_SCHEMA_VERSION,
            session_id: session.state().session_id.clone(),
            snapshot: Some(Snapshot {
                at_sequence: journal.len() as u64,
                state: session.state().clone(),
            }),
            journal,
        }
    }
}

/// Serialized form of a session, terminated by a newline.
pub fn session_to_bytes(session: &Session) -> Vec<u8> {
    let mut out = serde_json::to_vec(&SessionFile::from_session(session)).expect("session serializes");
    out.push(b'\n');
    out
}

pub fn session_from_bytes(bytes: &[u8], clock: Arc<dyn Clock>) -> Result<Session> {
    let body = bytes
        .strip_suffix(b"\n")
        .ok_or_else(|| Error::MalformedFile("missing trailing newline".into()))?;
    let probe: VersionProbe =
        serde_json::from_slice(body).map_err(|e| Error::MalformedFile(e.to_string()))?;
    if probe.schema_version != SESSION_SCHEMA_VERSION {
        return Err(Error::SchemaVersionMismatch {
            found: probe.schema_version,
            expected: SESSION_SCHEMA_VERSION,
        });
    }
    let raw: RawSessionFile<'_> =
        serde_json::from_slice(body).map_err(|e| Error::MalformedFile(e.to_string()))?;

    let mut events = Vec::with_capacity(raw.journal.len());
    for (i, entry) in raw.journal.iter().enumerate() {
        let sequence = i as u64 + 1;
        let corrupt = |reason: String| Error::CorruptJournal { sequence, reason };
        let event: AuditEvent =
            serde_json::from_str(entry.get()).map_err(|e| corrupt(e.to_string()))?;
        let canonical = serde_json::to_string(&event).expect("event serializes");
        if canonical != entry.get() {
            return Err(corrupt("non-canonical encoding".into()));
        }
        events.push(event);
    }
    let journal = Journal::from_events(events)?;

    let snapshot: Option<Snapshot> = raw
        .snapshot
        .map(|s| serde_json::from_str(s.get()))
        .transpose()
        .map_err(|e| Error::MalformedFile(format!("snapshot: {e}")))?;
    if let Some(s) = &snapshot {
        let len = journal.len() as u64;
        if s.at_sequence > len {
            return Err(Error::CorruptJournal {
                sequence: len + 1,
                reason: format!("journal ends before snapshot sequence {}", s.at_sequence),
            });
        }
        if s.at_sequence < len {
            return Err(Error::ReplayDivergence(format!(
                "snapshot at {} but journal has {len} events",
                s.at_sequence
            )));
        }
    }

    let file = SessionFile {
        schema_version: raw.schema_version,
        session_id: raw.session_id,
        journal: journal.events().to_vec(),
        snapshot,
    };
    if serde_json::to_vec(&file).expect("session serializes") != body {
        return Err(Error::MalformedFile("non-canonical encoding".into()));
    }

    let session = Session::from_journal(journal, clock)?;
    if session.state().session_id != file.session_id {
        return Err(Error::ReplayDivergence("session id differs from journal".into()));
    }
    if let Some(s) = &file.snapshot {
        if s.state != *session.state() {
            return Err(Error::ReplayDivergence(
                "snapshot differs from journal replay".into(),
            ));
        }
    }
    Ok(session)
}

/// Writes the session through a temporary file and an atomic rename.
pub fn save_session(session: &Session, path: &Path) -> Result<()> {
    let bytes = session_to_bytes(session);
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, &bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_session(path: &Path, clock: Arc<dyn Clock>) -> Result<Session> {
    let bytes = fs::read(path)?;
    session_from_bytes(&bytes, clock)
}

struct CsvRow {
    line: u64,
    stakeholder: StakeholderId,
    card: CardId,
    value: i64,
}

/// Reads `stakeholder_id,card_id,<value_column>` rows, checking the header,
/// card numbers and duplicate cells.
fn read_rows<R: Read>(
    session: &Session,
    reader: R,
    value_column: &str,
) -> Result<Vec<CsvRow>> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let malformed = |line: u64, reason: String| Error::MalformedRow { line, reason };
    let headers = csv
        .headers()
        .map_err(|e| malformed(1, e.to_string()))?
        .clone();
    let expected = ["stakeholder_id", "card_id", value_column];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(malformed(
            1,
            format!("header must be {}", expected.join(",")),
        ));
    }
    let mut rows = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for record in csv.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            malformed(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let stakeholder = StakeholderId::new(&record[0]);
        let card: u32 = record[1]
            .parse()
            .map_err(|_| malformed(line, format!("card_id {:?} is not a number", &record[1])))?;
        let card = CardId(card);
        if !session.state().deck.contains(card) {
            return Err(malformed(line, format!("unknown card {card}")));
        }
        let value: i64 = record[2]
            .parse()
            .map_err(|_| malformed(line, format!("{value_column} {:?} is not an integer", &record[2])))?;
        if !seen.insert((stakeholder.clone(), card)) {
            return Err(malformed(line, format!("duplicate row for {stakeholder} {card}")));
        }
        if session.state().stakeholder(&stakeholder).is_none() {
            return Err(Error::UnknownStakeholder(stakeholder));
        }
        rows.push(CsvRow {
            line,
            stakeholder,
            card,
            value,
        });
    }
    Ok(rows)
}

/// Groups rows by stakeholder in order of first appearance.
fn group(rows: Vec<CsvRow>) -> Vec<(StakeholderId, BTreeMap<CardId, i64>)> {
    let mut groups: Vec<(StakeholderId, BTreeMap<CardId, i64>)> = Vec::new();
    for row in rows {
        match groups.iter_mut().find(|(s, _)| *s == row.stakeholder) {
            Some((_, m)) => {
                m.insert(row.card, row.value);
            }
            None => groups.push((row.stakeholder, BTreeMap::from([(row.card, row.value)]))),
        }
    }
    groups
}

/// Imports a `stakeholder_id,card_id,tokens` CSV into an open round. Every
/// allocation is validated before any is submitted.
pub fn import_allocations_csv<R: Read>(
    session: &mut Session,
    actor: &Actor,
    reader: R,
    round_index: u32,
) -> Result<usize> {
    let rows = read_rows(session, reader, "tokens")?;
    let allocations: Vec<TokenAllocation> = group(rows)
        .into_iter()
        .map(|(stakeholder_id, tokens)| TokenAllocation {
            stakeholder_id,
            tokens,
            rationale: None,
        })
        .collect();
    for alloc in &allocations {
        crate::model::validate_allocation(alloc, &session.state().deck)?;
    }
    let count = allocations.len();
    for alloc in allocations {
        session.submit_allocation(actor, round_index, alloc)?;
    }
    Ok(count)
}

/// Imports a `stakeholder_id,card_id,score` CSV into the open assessment.
pub fn import_scores_csv<R: Read>(session: &mut Session, actor: &Actor, reader: R) -> Result<usize> {
    let rows = read_rows(session, reader, "score")?;
    if let Some(bad) = rows.iter().find(|r| !(1..=5).contains(&r.value)) {
        return Err(Error::MalformedRow {
            line: bad.line,
            reason: Error::ScoreOutOfRange(bad.value).to_string(),
        });
    }
    let groups = group(rows);
    let count = groups.len();
    for (stakeholder, scores) in groups {
        session.submit_scores(actor, &stakeholder, &scores)?;
    }
    Ok(count)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Svg,
    Json,
}

impl ExportFormat {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExportFormat::Svg => "svg",
            ExportFormat::Json => "json",
        }
    }
}

impl FromStr for ExportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svg" => Ok(ExportFormat::Svg),
            "json" => Ok(ExportFormat::Json),
            other => Err(Error::UnsupportedFormat(other.to_string())),
        }
    }
}

pub fn render_picture(picture: &SituationalPicture, format: ExportFormat, config: &RenderConfig) -> Vec<u8> {
    match format {
        ExportFormat::Svg => render_svg(picture, config),
        ExportFormat::Json => ChartModel::from_picture(picture).to_json(),
    }
}

/// Writes a picture to `path` and logs the export in the session journal.
pub fn export_picture(
    session: &mut Session,
    actor: &Actor,
    picture: &SituationalPicture,
    format: ExportFormat,
    path: &Path,
) -> Result<Vec<u8>> {
    let bytes = render_picture(picture, format, &RenderConfig::default());
    fs::write(path, &bytes)?;
    session.record_export(actor, &picture.picture_id, format.as_str(), &bytes)?;
    Ok(bytes)
}
