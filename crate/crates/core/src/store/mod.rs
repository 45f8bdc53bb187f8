//! Durable single-writer persistence.
//!
//! Every entity lives in its own append-only log (`<entity>.jsonl`) of
//! `{"key": ..., "record": ...}` lines. The latest line per key wins. Opening
//! a store replays the logs into an in-memory index and discards a trailing
//! partial line left behind by an interrupted write. [`Store::compact`]
//! rewrites each log as one line per key in key order, so two stores holding
//! the same records compact to byte-identical files.

mod export;

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Mutex, RwLock};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

pub use export::{ExportFormat, ImportReport, RejectedRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Entity {
    RawIssues,
    PreprocessedIssues,
    UserStories,
    MatchRecords,
    Criteria,
    Assessments,
    ReviewDecisions,
    RunCheckpoints,
}

impl Entity {
    pub const ALL: [Entity; 8] = [
        Entity::RawIssues,
        Entity::PreprocessedIssues,
        Entity::UserStories,
        Entity::MatchRecords,
        Entity::Criteria,
        Entity::Assessments,
        Entity::ReviewDecisions,
        Entity::RunCheckpoints,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Entity::RawIssues => "raw_issues",
            Entity::PreprocessedIssues => "preprocessed_issues",
            Entity::UserStories => "user_stories",
            Entity::MatchRecords => "match_records",
            Entity::Criteria => "criteria",
            Entity::Assessments => "assessments",
            Entity::ReviewDecisions => "review_decisions",
            Entity::RunCheckpoints => "run_checkpoints",
        }
    }

    fn file_name(self) -> String {
        format!("{}.jsonl", self.name())
    }
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Entity {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Entity::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| StoreError::UnknownEntity(s.to_string()))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("integrity violation: {constraint} (missing {entity} {key:?})")]
    Integrity {
        constraint: String,
        entity: Entity,
        key: String,
    },
    #[error("corrupt log {file}: line {line}: {reason}")]
    Corrupt {
        file: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("unknown entity {0:?}")]
    UnknownEntity(String),
    #[error("store writer stopped after a simulated crash")]
    Crashed,
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// A persisted entity type.
pub trait Record: Serialize + DeserializeOwned + Send + Sync + 'static {
    const ENTITY: Entity;
    /// Column order of the CSV export.
    const CSV_COLUMNS: &'static [&'static str];

    fn key(&self) -> String;

    /// Records that must exist before this one may be written, with the
    /// name of the constraint.
    fn references(&self) -> Vec<(&'static str, Entity, String)> {
        Vec::new()
    }

    /// One CSV row in `CSV_COLUMNS` order. The default renders each
    /// top-level JSON field: strings verbatim, everything else as JSON.
    fn csv_row(&self) -> Vec<String> {
        let value = serde_json::to_value(self).expect("record serializes");
        Self::CSV_COLUMNS
            .iter()
            .map(|col| match value.get(*col) {
                None | Some(serde_json::Value::Null) => String::new(),
                Some(serde_json::Value::String(s)) => s.clone(),
                Some(other) => other.to_string(),
            })
            .collect()
    }
}

#[derive(Serialize)]
struct EnvelopeOut<'a> {
    key: &'a str,
    record: &'a RawValue,
}

#[derive(Deserialize)]
struct EnvelopeIn<'a> {
    key: String,
    #[serde(borrow)]
    record: &'a RawValue,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StoreOptions {
    /// fsync after every write.
    pub durable: bool,
    /// Simulate a process kill: the write with this zero-based index leaves a
    /// half-written line behind and fails, and so does every later write.
    pub crash_at_write: Option<u64>,
}

impl StoreOptions {
    pub fn durable() -> Self {
        StoreOptions {
            durable: true,
            crash_at_write: None,
        }
    }
}

struct Writer {
    files: BTreeMap<Entity, File>,
    writes: u64,
    crashed: bool,
}

type Index = BTreeMap<Entity, BTreeMap<String, String>>;

pub struct Store {
    root: PathBuf,
    options: StoreOptions,
    index: RwLock<Index>,
    writer: Mutex<Writer>,
}

impl fmt::Debug for Store {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Store").field("root", &self.root).finish()
    }
}

impl Store {
    pub fn open(root: impl AsRef<Path>) -> Result<Store, StoreError> {
        Self::open_with(root, StoreOptions::durable())
    }

    pub fn open_with(root: impl AsRef<Path>, options: StoreOptions) -> Result<Store, StoreError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        let mut index = Index::new();
        let mut files = BTreeMap::new();
        for entity in Entity::ALL {
            let path = root.join(entity.file_name());
            let records = load_log(&path)?;
            index.insert(entity, records);
            let file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .map_err(io_err(&path))?;
            files.insert(entity, file);
        }
        Ok(Store {
            root,
            options,
            index: RwLock::new(index),
            writer: Mutex::new(Writer {
                files,
                writes: 0,
                crashed: false,
            }),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Inserts or overwrites a record, atomically and durably.
    pub fn put<R: Record>(&self, record: &R) -> Result<(), StoreError> {
        let key = record.key();
        let json = serde_json::to_string(record)?;
        let mut writer = self.writer.lock().expect("writer lock");
        if writer.crashed {
            return Err(StoreError::Crashed);
        }
        {
            let index = self.index.read().expect("index lock");
            for (constraint, entity, ref_key) in record.references() {
                if !index[&entity].contains_key(&ref_key) {
                    return Err(StoreError::Integrity {
                        constraint: constraint.to_string(),
                        entity,
                        key: ref_key,
                    });
                }
            }
            if index[&R::ENTITY].get(&key) == Some(&json) {
                // identical record already stored
                return Ok(());
            }
        }
        let raw = RawValue::from_string(json.clone())?;
        let mut line = serde_json::to_string(&EnvelopeOut {
            key: &key,
            record: &raw,
        })?;
        line.push('\n');

        let write_no = writer.writes;
        writer.writes += 1;
        let path = self.root.join(R::ENTITY.file_name());
        let file = writer.files.get_mut(&R::ENTITY).expect("file per entity");
        if self.options.crash_at_write == Some(write_no) {
            let half = &line.as_bytes()[..line.len() / 2];
            file.write_all(half).map_err(io_err(&path))?;
            writer.crashed = true;
            return Err(StoreError::Crashed);
        }
        file.write_all(line.as_bytes()).map_err(io_err(&path))?;
        if self.options.durable {
            file.sync_data().map_err(io_err(&path))?;
        }
        self.index
            .write()
            .expect("index lock")
            .get_mut(&R::ENTITY)
            .expect("entity index")
            .insert(key, json);
        Ok(())
    }

    pub fn get<R: Record>(&self, key: &str) -> Result<Option<R>, StoreError> {
        let index = self.index.read().expect("index lock");
        index[&R::ENTITY]
            .get(key)
            .map(|json| serde_json::from_str(json).map_err(StoreError::from))
            .transpose()
    }

    pub fn contains(&self, entity: Entity, key: &str) -> bool {
        self.index.read().expect("index lock")[&entity].contains_key(key)
    }

    /// Records in key order, skipping `offset` and returning at most `limit`.
    pub fn list<R: Record>(&self, offset: usize, limit: usize) -> Result<Vec<R>, StoreError> {
        let index = self.index.read().expect("index lock");
        index[&R::ENTITY]
            .values()
            .skip(offset)
            .take(limit)
            .map(|json| serde_json::from_str(json).map_err(StoreError::from))
            .collect()
    }

    pub fn all<R: Record>(&self) -> Result<Vec<R>, StoreError> {
        self.list(0, usize::MAX)
    }

    pub fn count(&self, entity: Entity) -> usize {
        self.index.read().expect("index lock")[&entity].len()
    }

    /// Raw record JSON in key order.
    pub fn raw_records(&self, entity: Entity) -> Vec<String> {
        self.index.read().expect("index lock")[&entity]
            .values()
            .cloned()
            .collect()
    }

    /// Rewrites every log to one line per key, in key order. Each log is
    /// replaced atomically via a temporary file and rename.
    pub fn compact(&self) -> Result<(), StoreError> {
        let mut writer = self.writer.lock().expect("writer lock");
        if writer.crashed {
            return Err(StoreError::Crashed);
        }
        let index = self.index.read().expect("index lock");
        for entity in Entity::ALL {
            let path = self.root.join(entity.file_name());
            let tmp = self.root.join(format!("{}.compact", entity.file_name()));
            {
                let mut out = File::create(&tmp).map_err(io_err(&tmp))?;
                let mut buf = Vec::new();
                for (key, json) in &index[&entity] {
                    let raw = RawValue::from_string(json.clone())?;
                    serde_json::to_writer(&mut buf, &EnvelopeOut { key, record: &raw })?;
                    buf.push(b'\n');
                }
                out.write_all(&buf).map_err(io_err(&tmp))?;
                out.sync_all().map_err(io_err(&tmp))?;
            }
            fs::rename(&tmp, &path).map_err(io_err(&path))?;
            let file = OpenOptions::new()
                .append(true)
                .open(&path)
                .map_err(io_err(&path))?;
            writer.files.insert(entity, file);
        }
        Ok(())
    }
}

/// Replays one log. A final line without its newline, or one that does not
/// parse, is an interrupted write: it is dropped and truncated from the file.
fn load_log(path: &Path) -> Result<BTreeMap<String, String>, StoreError> {
    let mut records = BTreeMap::new();
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(records),
        Err(e) => return Err(io_err(path)(e)),
    };
    let mut good_len = 0usize;
    let mut line_no = 0usize;
    let mut rest = &bytes[..];
    while !rest.is_empty() {
        line_no += 1;
        let Some(nl) = rest.iter().position(|b| *b == b'\n') else {
            break;
        };
        let line = &rest[..nl];
        let parsed = std::str::from_utf8(line)
            .map_err(|e| e.to_string())
            .and_then(|s| serde_json::from_str::<EnvelopeIn>(s).map_err(|e| e.to_string()));
        match parsed {
            Ok(env) => {
                records.insert(env.key, env.record.get().to_string());
            }
            Err(reason) => {
                let is_last = nl + 1 == rest.len();
                if !is_last {
                    return Err(StoreError::Corrupt {
                        file: path.to_path_buf(),
                        line: line_no,
                        reason,
                    });
                }
                break;
            }
        }
        good_len += nl + 1;
        rest = &rest[nl + 1..];
    }
    if good_len < bytes.len() {
        tracing::warn!(
            file = %path.display(),
            dropped_bytes = bytes.len() - good_len,
            "discarding interrupted write"
        );
        let file = OpenOptions::new()
            .write(true)
            .open(path)
            .map_err(io_err(path))?;
        file.set_len(good_len as u64).map_err(io_err(path))?;
        file.sync_all().map_err(io_err(path))?;
    }
    Ok(records)
}

/// Status of one unit of work, keyed by `(stage, story, issue)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCheckpoint {
    pub stage: String,
    pub story_id: String,
    pub issue_id: String,
    pub status: CheckpointStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointStatus {
    Done,
    Pending,
    Failed,
}

impl RunCheckpoint {
    pub fn key_for(stage: &str, story_id: &str, issue_id: &str) -> String {
        format!("{stage}|{story_id}|{issue_id}")
    }
}

impl Record for RunCheckpoint {
    const ENTITY: Entity = Entity::RunCheckpoints;
    const CSV_COLUMNS: &'static [&'static str] =
        &["stage", "story_id", "issue_id", "status", "detail"];

    fn key(&self) -> String {
        Self::key_for(&self.stage, &self.story_id, &self.issue_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    struct Note {
        id: String,
        body: String,
    }

    impl Record for Note {
        const ENTITY: Entity = Entity::UserStories;
        const CSV_COLUMNS: &'static [&'static str] = &["id", "body"];
        fn key(&self) -> String {
            self.id.clone()
        }
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    struct Child {
        id: String,
        parent: String,
    }

    impl Record for Child {
        const ENTITY: Entity = Entity::Criteria;
        const CSV_COLUMNS: &'static [&'static str] = &["id", "parent"];
        fn key(&self) -> String {
            self.id.clone()
        }
        fn references(&self) -> Vec<(&'static str, Entity, String)> {
            vec![("child.parent", Entity::UserStories, self.parent.clone())]
        }
    }

    fn note(id: &str, body: &str) -> Note {
        Note {
            id: id.into(),
            body: body.into(),
        }
    }

    #[test]
    fn put_get_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        store.put(&note("a", "one")).unwrap();
        store.put(&note("a", "two")).unwrap();
        assert_eq!(store.get::<Note>("a").unwrap(), Some(note("a", "two")));
        drop(store);
        let store = Store::open(dir.path()).unwrap();
        assert_eq!(store.get::<Note>("a").unwrap(), Some(note("a", "two")));
        assert_eq!(store.count(Entity::UserStories), 1);
    }

    #[test]
    fn list_orders_by_key_with_paging() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        for id in ["e", "b", "d", "a", "c"] {
            store.put(&note(id, id)).unwrap();
        }
        let page: Vec<String> = store
            .list::<Note>(0, 2)
            .unwrap()
            .into_iter()
            .map(|n| n.id)
            .collect();
        assert_eq!(page, ["a", "b"]);
        let page: Vec<String> = store
            .list::<Note>(3, 10)
            .unwrap()
            .into_iter()
            .map(|n| n.id)
            .collect();
        assert_eq!(page, ["d", "e"]);
    }

    #[test]
    fn dangling_reference_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let err = store
            .put(&Child {
                id: "c".into(),
                parent: "nope".into(),
            })
            .unwrap_err();
        match err {
            StoreError::Integrity { constraint, key, .. } => {
                assert_eq!(constraint, "child.parent");
                assert_eq!(key, "nope");
            }
            other => panic!("unexpected {other}"),
        }
        assert_eq!(store.count(Entity::Criteria), 0);
    }

    #[test]
    fn interrupted_write_discarded_on_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let opts = StoreOptions {
            durable: false,
            crash_at_write: Some(2),
        };
        let store = Store::open_with(dir.path(), opts).unwrap();
        store.put(&note("a", "1")).unwrap();
        store.put(&note("b", "2")).unwrap();
        assert!(matches!(store.put(&note("c", "3")), Err(StoreError::Crashed)));
        assert!(matches!(store.put(&note("d", "4")), Err(StoreError::Crashed)));
        drop(store);

        let store = Store::open(dir.path()).unwrap();
        let ids: Vec<String> = store.all::<Note>().unwrap().into_iter().map(|n| n.id).collect();
        assert_eq!(ids, ["a", "b"]);
        // the log was truncated, so new appends start on a clean line
        store.put(&note("c", "3")).unwrap();
        drop(store);
        let store = Store::open(dir.path()).unwrap();
        assert_eq!(store.count(Entity::UserStories), 3);
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("user_stories.jsonl");
        fs::write(&path, "garbage\n{\"key\":\"a\",\"record\":{\"id\":\"a\",\"body\":\"x\"}}\n").unwrap();
        assert!(matches!(Store::open(dir.path()), Err(StoreError::Corrupt { line: 1, .. })));
    }

    #[test]
    fn compaction_is_canonical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let sa = Store::open(a.path()).unwrap();
        let sb = Store::open(b.path()).unwrap();
        sa.put(&note("x", "old")).unwrap();
        sa.put(&note("y", "1")).unwrap();
        sa.put(&note("x", "new")).unwrap();
        sb.put(&note("y", "1")).unwrap();
        sb.put(&note("x", "new")).unwrap();
        sa.compact().unwrap();
        sb.compact().unwrap();
        let fa = fs::read(a.path().join("user_stories.jsonl")).unwrap();
        let fb = fs::read(b.path().join("user_stories.jsonl")).unwrap();
        assert_eq!(fa, fb);
        // still appendable after compaction
        sa.put(&note("z", "2")).unwrap();
        drop(sa);
        assert_eq!(Store::open(a.path()).unwrap().count(Entity::UserStories), 3);
    }

    #[test]
    fn identical_put_is_not_rewritten() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        store.put(&note("a", "1")).unwrap();
        let before = fs::read(dir.path().join("user_stories.jsonl")).unwrap();
        store.put(&note("a", "1")).unwrap();
        let after = fs::read(dir.path().join("user_stories.jsonl")).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn entity_names_round_trip() {
        for e in Entity::ALL {
            assert_eq!(e.name().parse::<Entity>().unwrap(), e);
        }
        assert!("nope".parse::<Entity>().is_err());
    }
}
