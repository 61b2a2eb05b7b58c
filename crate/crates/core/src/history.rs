//! Append-only persistence of labelled states, with reference-state
//! selection and comparison-with-history.
//!
//! The store is a JSON-lines file: one [`HistoryRecord`] per line, in append
//! order, never rewritten. That buys three things cheaply: full raw-payload
//! traceability (any stored state can be revisited byte-for-byte via
//! [`HistoryStore::raw_lookup`]), an audit trail (relabelling appends a
//! superseding record instead of mutating), and trivially diffable fixtures.
//!
//! Concurrency: single writer, many readers. A writable store takes an
//! exclusive advisory file lock for its whole lifetime and refuses to open
//! if another writer holds it. Readers ([`HistoryStore::open_read_only`])
//! take no lock and tolerate a partial trailing line, so they always see a
//! consistent prefix of the log even mid-write.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::diff::{DiffKind, DiffSession, Difference, Norm};
use crate::error::{Error, Result};
use crate::feature::{FeatureVector, RawRef, StateRecord};
use crate::scalar::Real;

/// Id (and extractor id) given to the synthetic mean reference state, so
/// downstream code can recognize it and never attempts a raw lookup on it.
pub const SYNTHETIC_MEAN_ID: &str = "synthetic:mean";

/// Normality label attached to a stored state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Abnormal,
    Unlabeled,
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(Label::Normal),
            "abnormal" => Ok(Label::Abnormal),
            "unlabeled" => Ok(Label::Unlabeled),
            other => Err(Error::Config {
                detail: format!("unknown label `{other}` (expected normal, abnormal, or unlabeled)"),
            }),
        }
    }
}

/// One row of the append log: a state, its label, and its position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "S: Real")]
pub struct HistoryRecord<S: Real> {
    pub state: StateRecord<S>,
    pub label: Label,
    /// Monotone sequence number, strictly increasing within a store.
    pub appended_at: u64,
}

/// How to pick the reference state ŝ that current observations are
/// compared against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceStrategy {
    /// The most recently appended state.
    Latest,
    /// A synthetic state holding the componentwise mean of all stored
    /// features. Carries no raw payload — it never existed as an
    /// observation.
    Mean,
    /// The stored state minimizing the sum of L2 distances to all other
    /// stored states (ties broken by smallest `appended_at`). Unlike the
    /// mean, the medoid is a real exemplar with raw traceability.
    Medoid,
}

impl FromStr for ReferenceStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "latest" => Ok(ReferenceStrategy::Latest),
            "mean" => Ok(ReferenceStrategy::Mean),
            "medoid" => Ok(ReferenceStrategy::Medoid),
            other => Err(Error::Config {
                detail: format!("unknown reference strategy `{other}` (expected latest, mean, or medoid)"),
            }),
        }
    }
}

/// The append-only history store.
pub struct HistoryStore<S: Real> {
    path: PathBuf,
    /// Kept open for the lifetime of a writable store; holds the exclusive
    /// advisory lock and receives appends. `None` in read-only mode.
    file: Option<File>,
    records: Vec<HistoryRecord<S>>,
    next_seq: u64,
}

impl<S: Real> HistoryStore<S> {
    /// Opens (creating if absent) a writable store and takes the exclusive
    /// writer lock. Fails if another writer already holds it, or if the log
    /// is corrupt (writers do not guess at torn files).
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(|e| storage(&path, "open", e))?;
        match file.try_lock() {
            Ok(()) => {}
            Err(std::fs::TryLockError::WouldBlock) => {
                return Err(Error::StorageFailure {
                    detail: format!("{}: another writer holds the lock", path.display()),
                })
            }
            Err(std::fs::TryLockError::Error(e)) => return Err(storage(&path, "lock", e)),
        }
        file.seek(SeekFrom::Start(0))
            .map_err(|e| storage(&path, "seek", e))?;
        let records = read_log(&path, &file, true)?;
        let next_seq = records.last().map_or(0, |r| r.appended_at + 1);
        Ok(HistoryStore {
            path,
            file: Some(file),
            records,
            next_seq,
        })
    }

    /// Opens the store for reading only: no lock is taken, and a partial
    /// trailing line (a write in progress) is ignored, yielding the longest
    /// consistent prefix of the log.
    pub fn open_read_only(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path).map_err(|e| storage(&path, "open", e))?;
        let records = read_log(&path, &file, false)?;
        let next_seq = records.last().map_or(0, |r| r.appended_at + 1);
        Ok(HistoryStore {
            path,
            file: None,
            records,
            next_seq,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// The full audit log, in append order (superseded records included).
    pub fn records(&self) -> &[HistoryRecord<S>] {
        &self.records
    }

    /// The effective view: the latest record per state id, ordered by that
    /// record's position in the log.
    pub fn effective(&self) -> Vec<&HistoryRecord<S>> {
        let mut latest: Vec<&HistoryRecord<S>> = Vec::new();
        for record in &self.records {
            if let Some(slot) = latest
                .iter_mut()
                .find(|r| r.state.id() == record.state.id())
            {
                *slot = record;
            } else {
                latest.push(record);
            }
        }
        latest.sort_by_key(|r| r.appended_at);
        latest
    }

    /// Appends a new state. Ids are unique across the store; storing the
    /// same observation twice is almost always a pipeline bug, so it is
    /// rejected rather than deduplicated.
    pub fn append(&mut self, state: StateRecord<S>, label: Label) -> Result<u64> {
        if self.records.iter().any(|r| r.state.id() == state.id()) {
            return Err(Error::DuplicateStateId {
                id: state.id().to_string(),
            });
        }
        self.write_record(HistoryRecord {
            state,
            label,
            appended_at: self.next_seq,
        })
    }

    /// Changes an unlabelled record's label by appending a superseding
    /// record. Labels are immutable once set to normal/abnormal.
    pub fn relabel(&mut self, id: &str, label: Label) -> Result<u64> {
        if label == Label::Unlabeled {
            return Err(Error::Config {
                detail: "cannot relabel a record back to unlabeled".into(),
            });
        }
        let current = self
            .effective()
            .into_iter()
            .find(|r| r.state.id() == id)
            .ok_or_else(|| Error::UnknownState { id: id.to_string() })?;
        if current.label != Label::Unlabeled {
            return Err(Error::LabelFixed { id: id.to_string() });
        }
        let superseding = HistoryRecord {
            state: current.state.clone(),
            label,
            appended_at: self.next_seq,
        };
        self.write_record(superseding)
    }

    fn write_record(&mut self, record: HistoryRecord<S>) -> Result<u64> {
        let file = self.file.as_mut().ok_or_else(|| Error::StorageFailure {
            detail: format!("{}: store is read-only", self.path.display()),
        })?;
        let mut line = serde_json::to_string(&record).map_err(|e| Error::StorageFailure {
            detail: format!("serialize record: {e}"),
        })?;
        line.push('\n');
        file.write_all(line.as_bytes())
            .map_err(|e| storage(&self.path, "append", e))?;
        file.sync_data().map_err(|e| storage(&self.path, "sync", e))?;
        let seq = record.appended_at;
        self.records.push(record);
        self.next_seq = seq + 1;
        Ok(seq)
    }

    /// Picks the reference state ŝ under the given strategy.
    pub fn select_reference(&self, strategy: ReferenceStrategy) -> Result<StateRecord<S>> {
        let effective = self.effective();
        let last = effective.last().ok_or(Error::EmptyHistory)?;
        match strategy {
            ReferenceStrategy::Latest => Ok(last.state.clone()),
            ReferenceStrategy::Mean => {
                let vectors: Vec<&FeatureVector<S>> =
                    effective.iter().map(|r| r.state.features()).collect();
                let mean = FeatureVector::mean(&vectors)?;
                // A synthetic state still needs a location: it inherits the
                // newest timestamp when the history is temporal, and a
                // synthetic region label otherwise.
                let timestamp = effective.iter().filter_map(|r| r.state.timestamp()).max();
                let region = if timestamp.is_none() {
                    Some(SYNTHETIC_MEAN_ID.to_string())
                } else {
                    None
                };
                StateRecord::new(
                    SYNTHETIC_MEAN_ID,
                    timestamp,
                    region,
                    SYNTHETIC_MEAN_ID,
                    None,
                    mean,
                )
            }
            ReferenceStrategy::Medoid => {
                let mut best: Option<(S, u64, &HistoryRecord<S>)> = None;
                for a in &effective {
                    let mut sum = S::zero();
                    for b in &effective {
                        if a.appended_at == b.appended_at {
                            continue;
                        }
                        let delta = a.state.features().sub(b.state.features())?;
                        sum = sum + Norm::L2.magnitude(delta.values());
                    }
                    let better = match &best {
                        None => true,
                        Some((best_sum, best_at, _)) => {
                            sum < *best_sum || (sum == *best_sum && a.appended_at < *best_at)
                        }
                    };
                    if better {
                        best = Some((sum, a.appended_at, a));
                    }
                }
                Ok(best.expect("non-empty effective set").2.state.clone())
            }
        }
    }

    /// Differences the current state against the selected reference:
    /// `delta = features(current) − features(ŝ)` (kind `history`,
    /// `from` = reference, `to` = current, so delta = to − from).
    pub fn compare_with_history(
        &self,
        current: &StateRecord<S>,
        strategy: ReferenceStrategy,
        session: &mut DiffSession<S>,
    ) -> Result<Difference<S>> {
        let reference = self.select_reference(strategy)?;
        let delta = current.features().sub(reference.features())?;
        Ok(session.stamp(reference.id(), current.id(), DiffKind::History, delta))
    }

    /// Returns the stored raw payload locator for a state: `Some` inline
    /// bytes exactly as stored, or `Some` URI unresolved (resolution is the
    /// caller's concern), or `None` when the state was stored without one.
    pub fn raw_lookup(&self, id: &str) -> Result<Option<&RawRef>> {
        let record = self
            .effective()
            .into_iter()
            .find(|r| r.state.id() == id)
            .ok_or_else(|| Error::UnknownState { id: id.to_string() })?;
        Ok(record.state.raw_ref())
    }
}

fn storage(path: &Path, action: &str, e: std::io::Error) -> Error {
    Error::StorageFailure {
        detail: format!("{}: {action}: {e}", path.display()),
    }
}

/// Reads the log. In strict mode (writers) any malformed or torn line is an
/// error; in prefix mode (readers) the first malformed line and everything
/// after it are ignored.
fn read_log<S: Real>(path: &Path, file: &File, strict: bool) -> Result<Vec<HistoryRecord<S>>> {
    let mut reader = BufReader::new(file);
    let mut records = Vec::new();
    let mut line = String::new();
    loop {
        line.clear();
        let n = reader
            .read_line(&mut line)
            .map_err(|e| storage(path, "read", e))?;
        if n == 0 {
            break;
        }
        let complete = line.ends_with('\n');
        let parsed = if complete {
            serde_json::from_str::<HistoryRecord<S>>(line.trim_end_matches('\n'))
        } else if strict {
            return Err(Error::StorageFailure {
                detail: format!("{}: torn trailing line (no newline)", path.display()),
            });
        } else {
            break;
        };
        match parsed {
            Ok(record) => {
                if let Some(prev) = records.last() {
                    let prev: &HistoryRecord<S> = prev;
                    if record.appended_at <= prev.appended_at {
                        return Err(Error::StorageFailure {
                            detail: format!(
                                "{}: appended_at not strictly increasing ({} then {})",
                                path.display(),
                                prev.appended_at,
                                record.appended_at
                            ),
                        });
                    }
                }
                records.push(record);
            }
            Err(e) if strict => {
                return Err(Error::StorageFailure {
                    detail: format!("{}: malformed record: {e}", path.display()),
                });
            }
            Err(_) => break,
        }
    }
    Ok(records)
}
