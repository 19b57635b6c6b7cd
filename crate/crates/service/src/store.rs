//! Single-file SQLite store: worklist, per-image scores, active decisions and
//! an append-only audit log.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Mutex, MutexGuard};

use chrono::{SecondsFormat, Utc};
use radscan_core::dataset::{BodyPart, Label};
use rusqlite::{params, Connection, OptionalExtension, Row, Transaction};
use serde::{Deserialize, Serialize};

use crate::error::{ServiceError, ServiceResult};

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS studies (
    study_id TEXT PRIMARY KEY,
    body_part TEXT NOT NULL,
    probability REAL NOT NULL,
    model_call TEXT NOT NULL,
    image_count INTEGER NOT NULL,
    status TEXT NOT NULL,
    scored_at TEXT NOT NULL,
    version INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS images (
    study_id TEXT NOT NULL,
    idx INTEGER NOT NULL,
    path TEXT NOT NULL,
    probability REAL NOT NULL,
    PRIMARY KEY (study_id, idx)
);
CREATE TABLE IF NOT EXISTS decisions (
    study_id TEXT PRIMARY KEY,
    verdict TEXT NOT NULL,
    note TEXT NOT NULL,
    reviewer TEXT,
    decided_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS audit (
    seq INTEGER PRIMARY KEY AUTOINCREMENT,
    study_id TEXT NOT NULL,
    action TEXT NOT NULL,
    from_status TEXT NOT NULL,
    to_status TEXT NOT NULL,
    verdict TEXT,
    reviewer TEXT,
    note TEXT NOT NULL,
    at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS failures (
    study_id TEXT PRIMARY KEY,
    message TEXT NOT NULL,
    at TEXT NOT NULL
);
";

pub fn now_utc() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Pending,
    ConfirmedAbnormal,
    OverriddenNormal,
    ConfirmedNormal,
    OverriddenAbnormal,
}

impl Status {
    pub const ALL: [Status; 5] = [
        Status::Pending,
        Status::ConfirmedAbnormal,
        Status::OverriddenNormal,
        Status::ConfirmedNormal,
        Status::OverriddenAbnormal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Pending => "PENDING",
            Status::ConfirmedAbnormal => "CONFIRMED_ABNORMAL",
            Status::OverriddenNormal => "OVERRIDDEN_NORMAL",
            Status::ConfirmedNormal => "CONFIRMED_NORMAL",
            Status::OverriddenAbnormal => "OVERRIDDEN_ABNORMAL",
        }
    }

    pub fn is_terminal(self) -> bool {
        self != Status::Pending
    }

    /// Reviewer and model agreed.
    pub fn is_confirmation(self) -> bool {
        matches!(self, Status::ConfirmedAbnormal | Status::ConfirmedNormal)
    }

    /// Terminal status reached when a reviewer gives `verdict` on a study the model called `model_call`.
    pub fn after_decision(model_call: Label, verdict: Label) -> Status {
        match (model_call, verdict) {
            (Label::Abnormal, Label::Abnormal) => Status::ConfirmedAbnormal,
            (Label::Abnormal, Label::Normal) => Status::OverriddenNormal,
            (Label::Normal, Label::Normal) => Status::ConfirmedNormal,
            (Label::Normal, Label::Abnormal) => Status::OverriddenAbnormal,
        }
    }
}

impl FromStr for Status {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Status::ALL
            .into_iter()
            .find(|st| st.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown status `{s}`"))
    }
}

/// A scored study in the triage queue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorklistItem {
    pub study_id: String,
    pub body_part: BodyPart,
    pub study_probability: f64,
    /// The model's call at the service threshold.
    pub model_call: Label,
    pub image_count: usize,
    pub status: Status,
    pub scored_at: String,
    /// Bumped on every status change; send it back with a decision to detect stale views.
    pub version: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub index: usize,
    pub path: PathBuf,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub study_id: String,
    pub verdict: Label,
    pub note: String,
    pub reviewer: Option<String>,
    pub decided_at: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditAction {
    Decision,
    Reopen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub seq: i64,
    pub study_id: String,
    pub action: AuditAction,
    pub from_status: Status,
    pub to_status: Status,
    pub verdict: Option<Label>,
    pub reviewer: Option<String>,
    pub note: String,
    pub at: String,
}

/// Status of every study mentioned in `log`, starting from PENDING.
pub fn replay_audit(log: &[AuditRecord]) -> BTreeMap<String, Status> {
    let mut state = BTreeMap::new();
    for record in log {
        state.insert(record.study_id.clone(), record.to_status);
    }
    state
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SortOrder {
    #[default]
    ProbDesc,
    ProbAsc,
}

impl FromStr for SortOrder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "prob_desc" => Ok(SortOrder::ProbDesc),
            "prob_asc" => Ok(SortOrder::ProbAsc),
            _ => Err(format!("unknown sort `{s}` (expected prob_desc or prob_asc)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorklistQuery {
    pub status: Option<Status>,
    pub body_part: Option<BodyPart>,
    pub sort: SortOrder,
    /// 1-based.
    pub page: usize,
    pub page_size: usize,
}

impl Default for WorklistQuery {
    fn default() -> Self {
        WorklistQuery {
            status: None,
            body_part: None,
            sort: SortOrder::ProbDesc,
            page: 1,
            page_size: crate::api::DEFAULT_PAGE_SIZE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorklistPage {
    pub items: Vec<WorklistItem>,
    pub total: usize,
    pub page: usize,
    pub page_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyScore {
    pub study_id: String,
    pub body_part: BodyPart,
    pub probability: f64,
    pub model_call: Label,
    pub images: Vec<(PathBuf, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringFailure {
    pub study_id: String,
    pub message: String,
    pub at: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub total: usize,
    pub by_status: BTreeMap<Status, usize>,
    pub by_body_part: BTreeMap<BodyPart, BTreeMap<Status, usize>>,
    pub decided: usize,
    pub agreements: usize,
    /// Share of decided studies where the reviewer confirmed the model; absent before any decision.
    pub agreement_rate: Option<f64>,
    pub scoring_failures: usize,
}

pub struct Store {
    conn: Mutex<Connection>,
}

fn parse_col<T: FromStr>(row: &Row, idx: usize) -> rusqlite::Result<T>
where
    T::Err: std::fmt::Display,
{
    let text: String = row.get(idx)?;
    text.parse().map_err(|e: T::Err| {
        rusqlite::Error::FromSqlConversionFailure(idx, rusqlite::types::Type::Text, e.to_string().into())
    })
}

const ITEM_COLUMNS: &str = "study_id, body_part, probability, model_call, image_count, status, scored_at, version";

fn item_from_row(row: &Row) -> rusqlite::Result<WorklistItem> {
    Ok(WorklistItem {
        study_id: row.get(0)?,
        body_part: parse_col(row, 1)?,
        study_probability: row.get(2)?,
        model_call: parse_col(row, 3)?,
        image_count: row.get::<_, i64>(4)? as usize,
        status: parse_col(row, 5)?,
        scored_at: row.get(6)?,
        version: row.get(7)?,
    })
}

fn item_in(tx: &Connection, study_id: &str) -> ServiceResult<WorklistItem> {
    tx.query_row(
        &format!("SELECT {ITEM_COLUMNS} FROM studies WHERE study_id = ?1"),
        [study_id],
        item_from_row,
    )
    .optional()?
    .ok_or_else(|| ServiceError::NotFound(format!("study {study_id}")))
}

fn append_audit(
    tx: &Transaction,
    study_id: &str,
    action: AuditAction,
    from: Status,
    to: Status,
    verdict: Option<Label>,
    reviewer: Option<&str>,
    note: &str,
    at: &str,
) -> ServiceResult<()> {
    let action = match action {
        AuditAction::Decision => "decision",
        AuditAction::Reopen => "reopen",
    };
    tx.execute(
        "INSERT INTO audit (study_id, action, from_status, to_status, verdict, reviewer, note, at)
         VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8)",
        params![
            study_id,
            action,
            from.as_str(),
            to.as_str(),
            verdict.map(|v| v.as_str()),
            reviewer,
            note,
            at
        ],
    )?;
    Ok(())
}

impl Store {
    pub fn open(path: &Path) -> ServiceResult<Self> {
        Self::init(Connection::open(path)?)
    }

    pub fn in_memory() -> ServiceResult<Self> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> ServiceResult<Self> {
        conn.execute_batch(SCHEMA)?;
        Ok(Store { conn: Mutex::new(conn) })
    }

    fn lock(&self) -> MutexGuard<'_, Connection> {
        self.conn.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }

    /// Insert or refresh a study's score. Status, version and decisions are kept.
    pub fn upsert_score(&self, score: &StudyScore) -> ServiceResult<()> {
        let mut conn = self.lock();
        let tx = conn.transaction()?;
        let at = now_utc();
        tx.execute(
            "INSERT INTO studies (study_id, body_part, probability, model_call, image_count, status, scored_at, version)
             VALUES (?1, ?2, ?3, ?4, ?5, 'PENDING', ?6, 0)
             ON CONFLICT(study_id) DO UPDATE SET
                body_part = excluded.body_part,
                probability = excluded.probability,
                model_call = excluded.model_call,
                image_count = excluded.image_count,
                scored_at = excluded.scored_at",
            params![
                score.study_id,
                score.body_part.as_str(),
                score.probability,
                score.model_call.as_str(),
                score.images.len() as i64,
                at
            ],
        )?;
        tx.execute("DELETE FROM images WHERE study_id = ?1", [&score.study_id])?;
        for (idx, (path, p)) in score.images.iter().enumerate() {
            tx.execute(
                "INSERT INTO images (study_id, idx, path, probability) VALUES (?1, ?2, ?3, ?4)",
                params![score.study_id, idx as i64, path.to_string_lossy(), p],
            )?;
        }
        tx.execute("DELETE FROM failures WHERE study_id = ?1", [&score.study_id])?;
        tx.commit()?;
        Ok(())
    }

    pub fn record_failure(&self, study_id: &str, message: &str) -> ServiceResult<()> {
        self.lock().execute(
            "INSERT INTO failures (study_id, message, at) VALUES (?1, ?2, ?3)
             ON CONFLICT(study_id) DO UPDATE SET message = excluded.message, at = excluded.at",
            params![study_id, message, now_utc()],
        )?;
        Ok(())
    }

    pub fn failures(&self) -> ServiceResult<Vec<ScoringFailure>> {
        let conn = self.lock();
        let mut stmt = conn.prepare("SELECT study_id, message, at FROM failures ORDER BY study_id")?;
        let rows = stmt.query_map([], |r| {
            Ok(ScoringFailure {
                study_id: r.get(0)?,
                message: r.get(1)?,
                at: r.get(2)?,
            })
        })?;
        Ok(rows.collect::<rusqlite::Result<_>>()?)
    }

    pub fn item(&self, study_id: &str) -> ServiceResult<WorklistItem> {
        item_in(&self.lock(), study_id)
    }

    pub fn images(&self, study_id: &str) -> ServiceResult<Vec<ImageEntry>> {
        let conn = self.lock();
        let mut stmt = conn.prepare("SELECT idx, path, probability FROM images WHERE study_id = ?1 ORDER BY idx")?;
        let rows = stmt.query_map([study_id], |r| {
            Ok(ImageEntry {
                index: r.get::<_, i64>(0)? as usize,
                path: PathBuf::from(r.get::<_, String>(1)?),
                probability: r.get(2)?,
            })
        })?;
        Ok(rows.collect::<rusqlite::Result<_>>()?)
    }

    pub fn image(&self, study_id: &str, index: usize) -> ServiceResult<ImageEntry> {
        self.item(study_id)?;
        self.images(study_id)?
            .into_iter()
            .find(|e| e.index == index)
            .ok_or_else(|| ServiceError::NotFound(format!("image {index} of study {study_id}")))
    }

    pub fn decision(&self, study_id: &str) -> ServiceResult<Option<Decision>> {
        let conn = self.lock();
        let decision = conn
            .query_row(
                "SELECT study_id, verdict, note, reviewer, decided_at FROM decisions WHERE study_id = ?1",
                [study_id],
                |r| {
                    Ok(Decision {
                        study_id: r.get(0)?,
                        verdict: parse_col(r, 1)?,
                        note: r.get(2)?,
                        reviewer: r.get(3)?,
                        decided_at: r.get(4)?,
                    })
                },
            )
            .optional()?;
        Ok(decision)
    }

    /// Filtered, ordered, paged worklist. Ties on probability break by study id.
    pub fn worklist(&self, query: &WorklistQuery) -> ServiceResult<WorklistPage> {
        let conn = self.lock();
        let order = match query.sort {
            SortOrder::ProbDesc => "probability DESC, study_id ASC",
            SortOrder::ProbAsc => "probability ASC, study_id ASC",
        };
        let filter = "(?1 IS NULL OR status = ?1) AND (?2 IS NULL OR body_part = ?2)";
        let status = query.status.map(Status::as_str);
        let part = query.body_part.map(BodyPart::as_str);
        let total: i64 = conn.query_row(
            &format!("SELECT COUNT(*) FROM studies WHERE {filter}"),
            params![status, part],
            |r| r.get(0),
        )?;
        let page_size = query.page_size.max(1);
        let page = query.page.max(1);
        let mut stmt = conn.prepare(&format!(
            "SELECT {ITEM_COLUMNS} FROM studies WHERE {filter} ORDER BY {order} LIMIT ?3 OFFSET ?4"
        ))?;
        let items = stmt
            .query_map(
                params![status, part, page_size as i64, ((page - 1) * page_size) as i64],
                item_from_row,
            )?
            .collect::<rusqlite::Result<_>>()?;
        Ok(WorklistPage {
            items,
            total: total as usize,
            page,
            page_size,
        })
    }

    /// Record a verdict on a PENDING study. `expected_version`, when given, must match.
    pub fn decide(
        &self,
        study_id: &str,
        verdict: Label,
        note: &str,
        reviewer: Option<&str>,
        expected_version: Option<i64>,
    ) -> ServiceResult<WorklistItem> {
        let mut conn = self.lock();
        let tx = conn.transaction()?;
        let item = item_in(&tx, study_id)?;
        if let Some(v) = expected_version {
            if v != item.version {
                return Err(ServiceError::Conflict(format!(
                    "study {study_id} is at version {}, request was based on {v}",
                    item.version
                )));
            }
        }
        if item.status.is_terminal() {
            return Err(ServiceError::Conflict(format!(
                "study {study_id} is already {}; re-open it first",
                item.status.as_str()
            )));
        }
        let to = Status::after_decision(item.model_call, verdict);
        let at = now_utc();
        tx.execute(
            "UPDATE studies SET status = ?2, version = version + 1 WHERE study_id = ?1",
            params![study_id, to.as_str()],
        )?;
        tx.execute(
            "INSERT OR REPLACE INTO decisions (study_id, verdict, note, reviewer, decided_at) VALUES (?1, ?2, ?3, ?4, ?5)",
            params![study_id, verdict.as_str(), note, reviewer, at],
        )?;
        append_audit(&tx, study_id, AuditAction::Decision, item.status, to, Some(verdict), reviewer, note, &at)?;
        let updated = item_in(&tx, study_id)?;
        tx.commit()?;
        Ok(updated)
    }

    /// Return a decided study to PENDING, clearing its active decision.
    pub fn reopen(&self, study_id: &str, note: &str, reviewer: Option<&str>, expected_version: Option<i64>) -> ServiceResult<WorklistItem> {
        let mut conn = self.lock();
        let tx = conn.transaction()?;
        let item = item_in(&tx, study_id)?;
        if let Some(v) = expected_version {
            if v != item.version {
                return Err(ServiceError::Conflict(format!(
                    "study {study_id} is at version {}, request was based on {v}",
                    item.version
                )));
            }
        }
        if !item.status.is_terminal() {
            return Err(ServiceError::Conflict(format!("study {study_id} is already PENDING")));
        }
        let at = now_utc();
        tx.execute(
            "UPDATE studies SET status = 'PENDING', version = version + 1 WHERE study_id = ?1",
            [study_id],
        )?;
        tx.execute("DELETE FROM decisions WHERE study_id = ?1", [study_id])?;
        append_audit(&tx, study_id, AuditAction::Reopen, item.status, Status::Pending, None, reviewer, note, &at)?;
        let updated = item_in(&tx, study_id)?;
        tx.commit()?;
        Ok(updated)
    }

    pub fn audit(&self, study_id: Option<&str>) -> ServiceResult<Vec<AuditRecord>> {
        let conn = self.lock();
        let mut stmt = conn.prepare(
            "SELECT seq, study_id, action, from_status, to_status, verdict, reviewer, note, at
             FROM audit WHERE (?1 IS NULL OR study_id = ?1) ORDER BY seq",
        )?;
        let rows = stmt.query_map([study_id], |r| {
            let action: String = r.get(2)?;
            let verdict: Option<String> = r.get(5)?;
            Ok(AuditRecord {
                seq: r.get(0)?,
                study_id: r.get(1)?,
                action: if action == "reopen" {
                    AuditAction::Reopen
                } else {
                    AuditAction::Decision
                },
                from_status: parse_col(r, 3)?,
                to_status: parse_col(r, 4)?,
                verdict: verdict.and_then(|v| v.parse().ok()),
                reviewer: r.get(6)?,
                note: r.get(7)?,
                at: r.get(8)?,
            })
        })?;
        Ok(rows.collect::<rusqlite::Result<_>>()?)
    }

    /// Current status of every study.
    pub fn statuses(&self) -> ServiceResult<BTreeMap<String, Status>> {
        let conn = self.lock();
        let mut stmt = conn.prepare("SELECT study_id, status FROM studies")?;
        let rows = stmt.query_map([], |r| Ok((r.get::<_, String>(0)?, parse_col::<Status>(r, 1)?)))?;
        Ok(rows.collect::<rusqlite::Result<_>>()?)
    }

    pub fn stats(&self) -> ServiceResult<Stats> {
        let conn = self.lock();
        let mut stats = Stats::default();
        for status in Status::ALL {
            stats.by_status.insert(status, 0);
        }
        let mut stmt = conn.prepare("SELECT body_part, status, COUNT(*) FROM studies GROUP BY body_part, status")?;
        let rows = stmt.query_map([], |r| {
            Ok((parse_col::<BodyPart>(r, 0)?, parse_col::<Status>(r, 1)?, r.get::<_, i64>(2)? as usize))
        })?;
        for row in rows {
            let (part, status, n) = row?;
            stats.total += n;
            *stats.by_status.entry(status).or_default() += n;
            *stats.by_body_part.entry(part).or_default().entry(status).or_default() += n;
            if status.is_terminal() {
                stats.decided += n;
            }
            if status.is_confirmation() {
                stats.agreements += n;
            }
        }
        stats.agreement_rate = (stats.decided > 0).then(|| stats.agreements as f64 / stats.decided as f64);
        stats.scoring_failures = conn.query_row("SELECT COUNT(*) FROM failures", [], |r| r.get::<_, i64>(0))? as usize;
        Ok(stats)
    }
}
