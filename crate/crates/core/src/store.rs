//! Durable annotation storage: an append-only JSONL log plus an optional
//! snapshot, both inside one directory.
//!
//! Every mutation is appended to `log.jsonl` and synced to disk before
//! [`DurableStore::append`] returns. `snapshot.jsonl` starts with a header
//! recording how many log lines it covers, so loading reads the snapshot and
//! replays only the log tail.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::annotation::{AdjudicationDecision, AnnotationRecord, AnnotationStore};
use crate::error::{Error, Result};

pub const LOG_FILE: &str = "log.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogEntry {
    Annotation(AnnotationRecord),
    Adjudication(AdjudicationDecision),
    Skip(SkipRecord),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub instance_id: String,
    pub annotator_id: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Serialize, Deserialize)]
struct SnapshotHeader {
    log_offset: usize,
}

#[derive(Debug)]
pub struct DurableStore {
    dir: PathBuf,
    log: File,
    log_lines: usize,
    state: AnnotationStore,
    skips: BTreeMap<(String, String), SkipRecord>,
}

impl DurableStore {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut state = AnnotationStore::new();
        let mut skips = BTreeMap::new();
        let mut offset = 0;

        let snapshot_path = dir.join(SNAPSHOT_FILE);
        if snapshot_path.exists() {
            let file = File::open(&snapshot_path).map_err(|e| Error::io(&snapshot_path, e))?;
            let mut lines = BufReader::new(file).lines();
            let header = lines
                .next()
                .transpose()
                .map_err(|e| Error::io(&snapshot_path, e))?
                .ok_or_else(|| Error::Parse("empty snapshot".into()))?;
            let header: SnapshotHeader = serde_json::from_str(&header)
                .map_err(|e| Error::Parse(format!("snapshot header: {e}")))?;
            offset = header.log_offset;
            for (i, line) in lines.enumerate() {
                let line = line.map_err(|e| Error::io(&snapshot_path, e))?;
                let entry: LogEntry = serde_json::from_str(&line).map_err(|e| Error::Line {
                    line: i + 2,
                    message: format!("snapshot: {e}"),
                })?;
                apply(&mut state, &mut skips, entry);
            }
        }

        let log_path = dir.join(LOG_FILE);
        let mut log_lines = 0;
        if log_path.exists() {
            let text = std::fs::read_to_string(&log_path).map_err(|e| Error::io(&log_path, e))?;
            let complete = text.ends_with('\n');
            let lines: Vec<&str> = text.lines().collect();
            for (i, line) in lines.iter().enumerate() {
                match serde_json::from_str::<LogEntry>(line) {
                    Ok(entry) => {
                        if i >= offset {
                            apply(&mut state, &mut skips, entry);
                        }
                        log_lines += 1;
                    }
                    // A torn final write from a crash is discarded.
                    Err(_) if i + 1 == lines.len() && !complete => {
                        log::warn!("discarding incomplete final log line {}", i + 1);
                        truncate_to(&log_path, &lines[..i])?;
                    }
                    Err(e) => {
                        return Err(Error::Line {
                            line: i + 1,
                            message: format!("annotation log: {e}"),
                        })
                    }
                }
            }
        }
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(|e| Error::io(&log_path, e))?;
        Ok(DurableStore {
            dir,
            log,
            log_lines,
            state,
            skips,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn state(&self) -> &AnnotationStore {
        &self.state
    }

    pub fn is_skipped(&self, annotator_id: &str, instance_id: &str) -> bool {
        self.skips
            .contains_key(&(annotator_id.to_string(), instance_id.to_string()))
    }

    /// Appends and syncs `entry`, then applies it to the in-memory state.
    pub fn append(&mut self, entry: LogEntry) -> Result<()> {
        let mut line = serde_json::to_string(&entry).expect("log entry serializes");
        line.push('\n');
        let path = self.dir.join(LOG_FILE);
        self.log
            .write_all(line.as_bytes())
            .and_then(|_| self.log.sync_data())
            .map_err(|e| Error::io(&path, e))?;
        self.log_lines += 1;
        apply(&mut self.state, &mut self.skips, entry);
        Ok(())
    }

    pub fn put(&mut self, record: AnnotationRecord) -> Result<()> {
        self.append(LogEntry::Annotation(record))
    }

    /// Writes a snapshot covering the whole log; atomically replaces any
    /// previous snapshot.
    pub fn snapshot(&self) -> Result<()> {
        let mut out = serde_json::to_string(&SnapshotHeader {
            log_offset: self.log_lines,
        })
        .expect("header serializes");
        out.push('\n');
        for r in self.state.records() {
            out.push_str(&serde_json::to_string(&LogEntry::Annotation(r.clone())).expect("serializes"));
            out.push('\n');
        }
        for d in self.state.decisions() {
            out.push_str(&serde_json::to_string(&LogEntry::Adjudication(d.clone())).expect("serializes"));
            out.push('\n');
        }
        for s in self.skips.values() {
            out.push_str(&serde_json::to_string(&LogEntry::Skip(s.clone())).expect("serializes"));
            out.push('\n');
        }
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let target = self.dir.join(SNAPSHOT_FILE);
        let mut file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        file.write_all(out.as_bytes())
            .and_then(|_| file.sync_all())
            .map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &target).map_err(|e| Error::io(&target, e))?;
        Ok(())
    }
}

fn apply(
    state: &mut AnnotationStore,
    skips: &mut BTreeMap<(String, String), SkipRecord>,
    entry: LogEntry,
) {
    match entry {
        LogEntry::Annotation(r) => {
            state.upsert(r);
        }
        LogEntry::Adjudication(d) => state.decide(d),
        LogEntry::Skip(s) => {
            skips.insert((s.annotator_id.clone(), s.instance_id.clone()), s);
        }
    }
}

fn truncate_to(path: &Path, lines: &[&str]) -> Result<()> {
    let mut text = lines.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::Origin;
    use crate::ontology::LabelPath;

    fn record(instance: &str, value: &str) -> AnnotationRecord {
        AnnotationRecord {
            instance_id: instance.into(),
            annotator_id: "a".into(),
            path: LabelPath::aspect("SS"),
            value: value.into(),
            timestamp: Utc::now(),
            origin: Origin::Human,
        }
    }

    #[test]
    fn reopen_replays_log_and_snapshot() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut store = DurableStore::open(dir.path()).unwrap();
            store.put(record("x", "present")).unwrap();
            store.snapshot().unwrap();
            store.put(record("x", "absent")).unwrap();
            store.put(record("y", "present")).unwrap();
        }
        let store = DurableStore::open(dir.path()).unwrap();
        assert_eq!(store.state().len(), 2);
        let x = store.state().records().find(|r| r.instance_id == "x").unwrap();
        assert_eq!(x.value, "absent");
    }

    #[test]
    fn torn_tail_is_discarded() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut store = DurableStore::open(dir.path()).unwrap();
            store.put(record("x", "present")).unwrap();
        }
        let log = dir.path().join(LOG_FILE);
        let mut text = std::fs::read_to_string(&log).unwrap();
        text.push_str("{\"kind\":\"annot");
        std::fs::write(&log, text).unwrap();
        let mut store = DurableStore::open(dir.path()).unwrap();
        assert_eq!(store.state().len(), 1);
        store.put(record("y", "present")).unwrap();
        drop(store);
        assert_eq!(DurableStore::open(dir.path()).unwrap().state().len(), 2);
    }
}
