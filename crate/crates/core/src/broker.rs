//! Embedded log-based message broker.
//!
//! Each topic is an append-only, offset-addressed log. Consumer groups keep a
//! read cursor and a committed offset per topic; delivery is at-least-once with
//! manual commit. A broker opened on a directory journals every topic to
//! `<topic>.log` (u32 big-endian length + payload frames) and replays the
//! journals at startup.

use std::collections::{BTreeMap, VecDeque};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::{now_micros, write_atomic};

#[derive(Debug, Error)]
pub enum BrokerError {
    #[error("topic '{0}' already exists")]
    DuplicateTopic(String),
    #[error("invalid topic name '{0}'")]
    InvalidName(String),
    #[error("unknown topic '{0}'")]
    UnknownTopic(String),
    #[error("offset {offset} out of range for topic '{topic}' (next offset {next_offset})")]
    OffsetOutOfRange {
        topic: String,
        offset: i64,
        next_offset: u64,
    },
    #[error("retention on '{topic}' would drop offset {offset} not yet committed by group '{group}'")]
    RetentionBlocked {
        topic: String,
        group: String,
        offset: u64,
    },
    #[error("journal for topic '{topic}' is corrupt: {reason}")]
    CorruptJournal { topic: String, reason: String },
    #[error("broker i/o: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T, E = BrokerError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub offset: u64,
    pub key: Option<String>,
    pub payload: Vec<u8>,
    pub published_ts_micros: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsumerGroupState {
    pub group_id: String,
    pub topic: String,
    /// -1 when nothing has been committed.
    pub committed_offset: i64,
    pub read_cursor: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicStats {
    pub name: String,
    pub length: u64,
    pub next_offset: u64,
    pub committed: BTreeMap<String, i64>,
}

/// The three queue names owned by a real-time service.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceTopics {
    pub stream: String,
    pub ir: String,
    pub anomalies: String,
}

impl ServiceTopics {
    pub fn for_service(service_id: &str) -> Self {
        Self {
            stream: format!("RIVA_{service_id}"),
            ir: format!("RIVA_IR_{service_id}"),
            anomalies: format!("RIVA_A_{service_id}"),
        }
    }

    pub fn names(&self) -> [&str; 3] {
        [&self.stream, &self.ir, &self.anomalies]
    }

    pub fn into_vec(self) -> Vec<String> {
        vec![self.stream, self.ir, self.anomalies]
    }
}

pub fn is_valid_topic_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'.' | b'-'))
}

#[derive(Debug, Default)]
struct GroupCursor {
    committed: i64,
    cursor: u64,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct OffsetsFile {
    base_offset: u64,
    groups: BTreeMap<String, i64>,
}

#[derive(Debug)]
struct TopicState {
    base_offset: u64,
    messages: VecDeque<Message>,
    groups: BTreeMap<String, GroupCursor>,
    max_len: Option<usize>,
    journal: Option<File>,
    deleted: bool,
}

impl TopicState {
    fn next_offset(&self) -> u64 {
        self.base_offset + self.messages.len() as u64
    }

    fn group(&mut self, group_id: &str) -> &mut GroupCursor {
        let base = self.base_offset;
        let g = self
            .groups
            .entry(group_id.to_string())
            .or_insert_with(|| GroupCursor {
                committed: -1,
                cursor: 0,
            });
        if g.cursor < base {
            g.cursor = base;
        }
        g
    }
}

#[derive(Debug)]
struct Topic {
    name: String,
    dir: Option<PathBuf>,
    state: Mutex<TopicState>,
}

impl Topic {
    fn lock(&self) -> Result<MutexGuard<'_, TopicState>> {
        let st = self.state.lock().unwrap_or_else(|e| e.into_inner());
        if st.deleted {
            return Err(BrokerError::UnknownTopic(self.name.clone()));
        }
        Ok(st)
    }

    fn offsets_path(&self) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{}.offsets.json", self.name)))
    }

    fn log_path(&self) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{}.log", self.name)))
    }

    fn persist_offsets(&self, st: &TopicState) -> Result<()> {
        if let Some(path) = self.offsets_path() {
            let file = OffsetsFile {
                base_offset: st.base_offset,
                groups: st.groups.iter().map(|(k, g)| (k.clone(), g.committed)).collect(),
            };
            let json = serde_json::to_vec(&file).expect("offsets serialize");
            write_atomic(&path, &json)?;
        }
        Ok(())
    }
}

/// A handle onto one topic. Operations fail with `UnknownTopic` once the topic
/// has been deleted.
#[derive(Debug, Clone)]
pub struct TopicHandle {
    topic: Arc<Topic>,
}

impl TopicHandle {
    pub fn name(&self) -> &str {
        &self.topic.name
    }

    pub fn len(&self) -> Result<u64> {
        Ok(self.topic.lock()?.messages.len() as u64)
    }

    pub fn is_empty(&self) -> Result<bool> {
        Ok(self.len()? == 0)
    }

    pub fn next_offset(&self) -> Result<u64> {
        Ok(self.topic.lock()?.next_offset())
    }
}

/// In-process broker. Cheap to share behind an `Arc`; all methods take `&self`.
#[derive(Debug, Default)]
pub struct Broker {
    topics: RwLock<BTreeMap<String, Arc<Topic>>>,
    data_dir: Option<PathBuf>,
}

impl Broker {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens a journaled broker rooted at `dir`, replaying every `<topic>.log`.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut names: Vec<String> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().to_string_lossy().into_owned();
                name.strip_suffix(".log").map(str::to_string)
            })
            .filter(|n| is_valid_topic_name(n))
            .collect();
        names.sort();

        let mut topics = BTreeMap::new();
        for name in names {
            let topic = replay_topic(&dir, &name)?;
            topics.insert(name, Arc::new(topic));
        }
        Ok(Self {
            topics: RwLock::new(topics),
            data_dir: Some(dir),
        })
    }

    pub fn data_dir(&self) -> Option<&Path> {
        self.data_dir.as_deref()
    }

    fn get(&self, name: &str) -> Result<Arc<Topic>> {
        self.topics
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(name)
            .cloned()
            .ok_or_else(|| BrokerError::UnknownTopic(name.to_string()))
    }

    pub fn create_topic(&self, name: &str) -> Result<TopicHandle> {
        if !is_valid_topic_name(name) {
            return Err(BrokerError::InvalidName(name.to_string()));
        }
        let mut topics = self.topics.write().unwrap_or_else(|e| e.into_inner());
        if topics.contains_key(name) {
            return Err(BrokerError::DuplicateTopic(name.to_string()));
        }
        let journal = match &self.data_dir {
            Some(dir) => {
                let _ = fs::remove_file(dir.join(format!("{name}.offsets.json")));
                Some(
                    OpenOptions::new()
                        .create(true)
                        .write(true)
                        .truncate(true)
                        .open(dir.join(format!("{name}.log")))?,
                )
            }
            None => None,
        };
        let topic = Arc::new(Topic {
            name: name.to_string(),
            dir: self.data_dir.clone(),
            state: Mutex::new(TopicState {
                base_offset: 0,
                messages: VecDeque::new(),
                groups: BTreeMap::new(),
                max_len: None,
                journal,
                deleted: false,
            }),
        });
        topics.insert(name.to_string(), Arc::clone(&topic));
        Ok(TopicHandle { topic })
    }

    pub fn topic(&self, name: &str) -> Result<TopicHandle> {
        Ok(TopicHandle {
            topic: self.get(name)?,
        })
    }

    pub fn topic_exists(&self, name: &str) -> bool {
        self.get(name).is_ok()
    }

    pub fn list_topics(&self) -> Vec<String> {
        self.topics
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .keys()
            .cloned()
            .collect()
    }

    /// Removes a topic and its journal. Returns whether it existed.
    pub fn delete_topic(&self, name: &str) -> Result<bool> {
        let removed = self
            .topics
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .remove(name);
        let Some(topic) = removed else {
            return Ok(false);
        };
        let mut st = topic.state.lock().unwrap_or_else(|e| e.into_inner());
        st.deleted = true;
        st.journal = None;
        if let Some(p) = topic.log_path() {
            remove_if_exists(&p)?;
        }
        if let Some(p) = topic.offsets_path() {
            remove_if_exists(&p)?;
        }
        Ok(true)
    }

    /// Creates `RIVA_<id>`, `RIVA_IR_<id>` and `RIVA_A_<id>`, in that order.
    /// If any of them already exists, topics created by this call are removed
    /// again and `DuplicateTopic` is returned.
    pub fn provision_service_topics(&self, service_id: &str) -> Result<Vec<String>> {
        if service_id.is_empty() {
            return Err(BrokerError::InvalidName(String::new()));
        }
        let names = ServiceTopics::for_service(service_id);
        let mut created = Vec::with_capacity(3);
        for name in names.names() {
            match self.create_topic(name) {
                Ok(_) => created.push(name.to_string()),
                Err(e) => {
                    for c in &created {
                        self.delete_topic(c)?;
                    }
                    return Err(e);
                }
            }
        }
        Ok(created)
    }

    pub fn delete_service_topics(&self, service_id: &str) -> Result<usize> {
        let names = ServiceTopics::for_service(service_id);
        let mut removed = 0;
        for name in names.names() {
            if self.delete_topic(name)? {
                removed += 1;
            }
        }
        Ok(removed)
    }

    pub fn publish(&self, topic: &str, key: Option<&str>, payload: &[u8]) -> Result<u64> {
        let t = self.get(topic)?;
        let mut st = t.lock()?;

        if let Some(max) = st.max_len {
            if st.messages.len() >= max {
                let drop_count = st.messages.len() + 1 - max;
                let oldest_kept = st.base_offset + drop_count as u64;
                if let Some((group, g)) = st
                    .groups
                    .iter()
                    .find(|(_, g)| g.committed + 1 < oldest_kept as i64)
                {
                    return Err(BrokerError::RetentionBlocked {
                        topic: topic.to_string(),
                        group: group.clone(),
                        offset: (g.committed + 1) as u64,
                    });
                }
            }
        }

        if let Some(j) = st.journal.as_mut() {
            let len = u32::try_from(payload.len()).map_err(|_| {
                io::Error::new(io::ErrorKind::InvalidInput, "payload exceeds u32 length")
            })?;
            let mut frame = Vec::with_capacity(4 + payload.len());
            frame.extend_from_slice(&len.to_be_bytes());
            frame.extend_from_slice(payload);
            j.write_all(&frame)?;
        }

        let offset = st.next_offset();
        st.messages.push_back(Message {
            offset,
            key: key.map(str::to_string),
            payload: payload.to_vec(),
            published_ts_micros: now_micros(),
        });

        if let Some(max) = st.max_len {
            let mut trimmed = false;
            while st.messages.len() > max {
                st.messages.pop_front();
                st.base_offset += 1;
                trimmed = true;
            }
            if trimmed {
                t.persist_offsets(&st)?;
            }
        }
        Ok(offset)
    }

    /// Returns up to `max_n` messages from the group's read cursor and advances
    /// the cursor past them. Nothing is committed.
    pub fn poll(&self, group_id: &str, topic: &str, max_n: usize) -> Result<Vec<Message>> {
        let t = self.get(topic)?;
        let mut st = t.lock()?;
        let base = st.base_offset;
        let next = st.next_offset();
        let cursor = st.group(group_id).cursor;
        let end = next.min(cursor.saturating_add(max_n as u64));
        let out: Vec<Message> = (cursor..end)
            .map(|off| st.messages[(off - base) as usize].clone())
            .collect();
        st.group(group_id).cursor = end.max(cursor);
        Ok(out)
    }

    /// The most recent retained message published with `key`. Keys are not
    /// journaled, so replayed messages have none.
    pub fn last_with_key(&self, topic: &str, key: &str) -> Result<Option<Message>> {
        self.find_last(topic, |m| (m.key.as_deref() == Some(key)).then(|| m.clone()))
    }

    /// Applies `f` to retained messages from newest to oldest and returns the
    /// first `Some`.
    pub fn find_last<T>(&self, topic: &str, f: impl FnMut(&Message) -> Option<T>) -> Result<Option<T>> {
        let t = self.get(topic)?;
        let st = t.lock()?;
        Ok(st.messages.iter().rev().find_map(f))
    }

    /// Records `offset` as processed for the group. Commits are monotone: a
    /// lower offset than the current commit is acknowledged but ignored.
    pub fn commit(&self, group_id: &str, topic: &str, offset: i64) -> Result<i64> {
        let t = self.get(topic)?;
        let mut st = t.lock()?;
        let next = st.next_offset();
        if offset < -1 || offset >= next as i64 {
            return Err(BrokerError::OffsetOutOfRange {
                topic: topic.to_string(),
                offset,
                next_offset: next,
            });
        }
        let g = st.group(group_id);
        g.committed = g.committed.max(offset);
        if g.cursor < (g.committed + 1) as u64 {
            g.cursor = (g.committed + 1) as u64;
        }
        let committed = g.committed;
        t.persist_offsets(&st)?;
        Ok(committed)
    }

    /// Rewinds the group's read cursor to just after its committed offset.
    pub fn reset_to_committed(&self, group_id: &str, topic: &str) -> Result<u64> {
        let t = self.get(topic)?;
        let mut st = t.lock()?;
        let g = st.group(group_id);
        g.cursor = (g.committed + 1) as u64;
        let cursor = g.cursor;
        let base = st.base_offset;
        if cursor < base {
            st.group(group_id).cursor = base;
        }
        Ok(cursor.max(base))
    }

    pub fn group_state(&self, group_id: &str, topic: &str) -> Result<ConsumerGroupState> {
        let t = self.get(topic)?;
        let mut st = t.lock()?;
        let g = st.group(group_id);
        Ok(ConsumerGroupState {
            group_id: group_id.to_string(),
            topic: topic.to_string(),
            committed_offset: g.committed,
            read_cursor: g.cursor,
        })
    }

    pub fn topic_stats(&self, name: &str) -> Result<TopicStats> {
        let t = self.get(name)?;
        let st = t.lock()?;
        Ok(TopicStats {
            name: name.to_string(),
            length: st.messages.len() as u64,
            next_offset: st.next_offset(),
            committed: st
                .groups
                .iter()
                .map(|(k, g)| (k.clone(), g.committed))
                .collect(),
        })
    }

    /// Bounds the retained log length. Publishing past the bound drops the
    /// oldest messages, and fails if any group has not committed them yet.
    pub fn set_retention(&self, topic: &str, max_len: Option<usize>) -> Result<()> {
        let t = self.get(topic)?;
        t.lock()?.max_len = max_len;
        Ok(())
    }
}

fn remove_if_exists(p: &Path) -> io::Result<()> {
    match fs::remove_file(p) {
        Err(e) if e.kind() != io::ErrorKind::NotFound => Err(e),
        _ => Ok(()),
    }
}

fn replay_topic(dir: &Path, name: &str) -> Result<Topic> {
    let log_path = dir.join(format!("{name}.log"));
    let offsets: OffsetsFile = match fs::read(dir.join(format!("{name}.offsets.json"))) {
        Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| BrokerError::CorruptJournal {
            topic: name.to_string(),
            reason: e.to_string(),
        })?,
        Err(e) if e.kind() == io::ErrorKind::NotFound => OffsetsFile::default(),
        Err(e) => return Err(e.into()),
    };

    let mut reader = BufReader::new(File::open(&log_path)?);
    let mut messages = VecDeque::new();
    let mut offset = 0u64;
    let mut valid_len = 0u64;
    let ts = now_micros();
    loop {
        let mut len_buf = [0u8; 4];
        match read_full(&mut reader, &mut len_buf)? {
            0 => break,
            4 => {}
            // A torn length prefix at the tail is dropped.
            _ => break,
        }
        let len = u32::from_be_bytes(len_buf) as usize;
        let mut payload = vec![0u8; len];
        if read_full(&mut reader, &mut payload)? != len {
            break;
        }
        valid_len += 4 + len as u64;
        if offset >= offsets.base_offset {
            messages.push_back(Message {
                offset,
                key: None,
                payload,
                published_ts_micros: ts,
            });
        }
        offset += 1;
    }
    if offset < offsets.base_offset {
        return Err(BrokerError::CorruptJournal {
            topic: name.to_string(),
            reason: format!("journal holds {offset} frames but base offset is {}", offsets.base_offset),
        });
    }

    let journal = OpenOptions::new().write(true).open(&log_path)?;
    journal.set_len(valid_len)?;
    let mut journal = journal;
    io::Seek::seek(&mut journal, io::SeekFrom::End(0))?;

    let next = offset;
    let groups = offsets
        .groups
        .into_iter()
        .map(|(g, committed)| {
            let committed = committed.min(next as i64 - 1);
            (
                g,
                GroupCursor {
                    committed,
                    cursor: (committed + 1) as u64,
                },
            )
        })
        .collect();

    Ok(Topic {
        name: name.to_string(),
        dir: Some(dir.to_path_buf()),
        state: Mutex::new(TopicState {
            base_offset: offsets.base_offset,
            messages,
            groups,
            max_len: None,
            journal: Some(journal),
            deleted: false,
        }),
    })
}

fn read_full(r: &mut impl Read, buf: &mut [u8]) -> io::Result<usize> {
    let mut n = 0;
    while n < buf.len() {
        match r.read(&mut buf[n..])? {
            0 => break,
            k => n += k,
        }
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn offsets(msgs: &[Message]) -> Vec<u64> {
        msgs.iter().map(|m| m.offset).collect()
    }

    #[test]
    fn create_topic_contract() {
        let b = Broker::in_memory();
        let h = b.create_topic("RIVA_1").unwrap();
        assert_eq!(h.len().unwrap(), 0);
        assert!(matches!(b.create_topic("RIVA_1"), Err(BrokerError::DuplicateTopic(_))));
        assert!(matches!(b.create_topic(""), Err(BrokerError::InvalidName(_))));
        assert!(matches!(b.create_topic("a b"), Err(BrokerError::InvalidName(_))));
    }

    #[test]
    fn provision_and_delete_service_topics() {
        let b = Broker::in_memory();
        b.create_topic("other").unwrap();
        let names = b.provision_service_topics("42").unwrap();
        assert_eq!(names, vec!["RIVA_42", "RIVA_IR_42", "RIVA_A_42"]);
        assert!(matches!(
            b.provision_service_topics("42"),
            Err(BrokerError::DuplicateTopic(_))
        ));
        let mut listed = b.list_topics();
        listed.sort();
        assert_eq!(listed, vec!["RIVA_42", "RIVA_A_42", "RIVA_IR_42", "other"]);

        assert_eq!(b.delete_service_topics("42").unwrap(), 3);
        assert_eq!(b.delete_service_topics("nope").unwrap(), 0);
        assert_eq!(b.provision_service_topics("42").unwrap().len(), 3);
    }

    #[test]
    fn partial_provision_rolls_back() {
        let b = Broker::in_memory();
        b.create_topic("RIVA_A_9").unwrap();
        assert!(b.provision_service_topics("9").is_err());
        assert_eq!(b.list_topics(), vec!["RIVA_A_9"]);
    }

    #[test]
    fn publish_offsets_are_dense() {
        let b = Broker::in_memory();
        b.create_topic("t").unwrap();
        assert_eq!(b.publish("t", None, b"a").unwrap(), 0);
        assert_eq!(b.publish("t", Some("k"), b"b").unwrap(), 1);
        assert_eq!(b.publish("t", None, b"").unwrap(), 2);
        assert!(matches!(b.publish("missing", None, b"x"), Err(BrokerError::UnknownTopic(_))));
    }

    #[test]
    fn poll_advances_cursor_per_group() {
        let b = Broker::in_memory();
        b.create_topic("t").unwrap();
        assert!(b.poll("g", "t", 10).unwrap().is_empty());
        for i in 0..5u8 {
            b.publish("t", None, &[i]).unwrap();
        }
        assert_eq!(offsets(&b.poll("g", "t", 3).unwrap()), vec![0, 1, 2]);
        assert_eq!(offsets(&b.poll("g", "t", 3).unwrap()), vec![3, 4]);
        assert_eq!(offsets(&b.poll("h", "t", 1).unwrap()), vec![0]);
    }

    #[test]
    fn commit_and_redelivery() {
        let b = Broker::in_memory();
        b.create_topic("t").unwrap();
        for i in 0..3u8 {
            b.publish("t", None, &[i]).unwrap();
        }
        assert_eq!(offsets(&b.poll("g", "t", 3).unwrap()), vec![0, 1, 2]);
        assert_eq!(b.commit("g", "t", 1).unwrap(), 1);
        b.reset_to_committed("g", "t").unwrap();
        assert_eq!(offsets(&b.poll("g", "t", 10).unwrap()), vec![2]);

        assert!(matches!(
            b.commit("g", "t", 5),
            Err(BrokerError::OffsetOutOfRange { .. })
        ));
        b.commit("g", "t", 2).unwrap();
        assert_eq!(b.commit("g", "t", 0).unwrap(), 2);
    }

    #[test]
    fn stats() {
        let b = Broker::in_memory();
        b.create_topic("t").unwrap();
        assert_eq!(b.topic_stats("t").unwrap().length, 0);
        for _ in 0..7 {
            b.publish("t", None, b"x").unwrap();
        }
        b.commit("g", "t", 3).unwrap();
        let s = b.topic_stats("t").unwrap();
        assert_eq!((s.length, s.next_offset), (7, 7));
        assert_eq!(s.committed.get("g"), Some(&3));
    }

    #[test]
    fn retention_trims_only_committed_messages() {
        let b = Broker::in_memory();
        b.create_topic("t").unwrap();
        b.set_retention("t", Some(2)).unwrap();
        b.publish("t", None, b"0").unwrap();
        b.publish("t", None, b"1").unwrap();
        b.poll("g", "t", 1).unwrap();
        assert!(matches!(
            b.publish("t", None, b"2"),
            Err(BrokerError::RetentionBlocked { .. })
        ));
        b.commit("g", "t", 0).unwrap();
        assert_eq!(b.publish("t", None, b"2").unwrap(), 2);
        let s = b.topic_stats("t").unwrap();
        assert_eq!((s.length, s.next_offset), (2, 3));
        assert_eq!(offsets(&b.poll("g", "t", 10).unwrap()), vec![1, 2]);
    }

    #[test]
    fn deleted_handle_reports_unknown_topic() {
        let b = Broker::in_memory();
        let h = b.create_topic("t").unwrap();
        b.delete_topic("t").unwrap();
        assert!(matches!(h.len(), Err(BrokerError::UnknownTopic(_))));
    }

    #[test]
    fn journal_replay_restores_payloads_and_commits() {
        let dir = tempfile::tempdir().unwrap();
        {
            let b = Broker::open(dir.path()).unwrap();
            b.create_topic("t").unwrap();
            b.publish("t", None, b"hello").unwrap();
            b.publish("t", None, b"").unwrap();
            b.publish("t", None, &[0, 1, 2, 255]).unwrap();
            b.commit("g", "t", 0).unwrap();
        }
        let raw = std::fs::read(dir.path().join("t.log")).unwrap();
        assert_eq!(&raw[..9], &[0, 0, 0, 5, b'h', b'e', b'l', b'l', b'o']);

        let b = Broker::open(dir.path()).unwrap();
        let s = b.topic_stats("t").unwrap();
        assert_eq!(s.next_offset, 3);
        assert_eq!(s.committed.get("g"), Some(&0));
        let msgs = b.poll("g", "t", 10).unwrap();
        assert_eq!(offsets(&msgs), vec![1, 2]);
        assert_eq!(msgs[1].payload, vec![0, 1, 2, 255]);
        assert_eq!(b.publish("t", None, b"z").unwrap(), 3);
    }

    #[test]
    fn torn_journal_tail_is_discarded() {
        let dir = tempfile::tempdir().unwrap();
        {
            let b = Broker::open(dir.path()).unwrap();
            b.create_topic("t").unwrap();
            b.publish("t", None, b"abc").unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(dir.path().join("t.log")).unwrap();
        f.write_all(&[0, 0, 0, 9, 1, 2]).unwrap();
        drop(f);
        let b = Broker::open(dir.path()).unwrap();
        assert_eq!(b.topic_stats("t").unwrap().next_offset, 1);
        assert_eq!(b.publish("t", None, b"d").unwrap(), 1);
        drop(b);
        let b = Broker::open(dir.path()).unwrap();
        assert_eq!(b.poll("g", "t", 5).unwrap()[1].payload, b"d");
    }

    #[test]
    fn delete_removes_journal_files() {
        let dir = tempfile::tempdir().unwrap();
        let b = Broker::open(dir.path()).unwrap();
        b.provision_service_topics("5").unwrap();
        b.publish("RIVA_5", None, b"x").unwrap();
        b.commit("g", "RIVA_5", 0).unwrap();
        assert_eq!(b.delete_service_topics("5").unwrap(), 3);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    }
}
