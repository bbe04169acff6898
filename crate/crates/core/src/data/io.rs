//! Event-log ingestion and the splits snapshot format.
//!
//! Event logs are UTF-8, one `raw_user<TAB>raw_item<TAB>timestamp` per line,
//! no header. Snapshots are line-JSON: a header object followed by one
//! [`UserSplit`] per line.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::splits::{DatasetSplits, UserSplit};
use crate::error::{Error, Result};
use crate::types::RawEvent;

pub const SNAPSHOT_FORMAT: &str = "dcrec-splits";
pub const SNAPSHOT_VERSION: u32 = 1;

pub fn read_event_log<R: BufRead>(reader: R) -> Result<Vec<RawEvent>> {
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let (Some(user), Some(item), Some(ts), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(Error::MalformedEvent {
                line: lineno,
                reason: "expected exactly three tab-separated fields".into(),
            });
        };
        let timestamp = ts.trim().parse::<i64>().map_err(|e| Error::MalformedEvent {
            line: lineno,
            reason: format!("timestamp {ts:?}: {e}"),
        })?;
        if user.is_empty() || item.is_empty() {
            return Err(Error::MalformedEvent {
                line: lineno,
                reason: "empty user or item field".into(),
            });
        }
        events.push(RawEvent::new(user, item, timestamp));
    }
    Ok(events)
}

pub fn write_event_log<W: Write>(mut w: W, events: &[RawEvent]) -> Result<()> {
    for ev in events {
        writeln!(w, "{}\t{}\t{}", ev.user, ev.item, ev.timestamp)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotHeader {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub delta_t: usize,
    pub n_items: usize,
    pub n_users: usize,
    pub dropped_users: usize,
    /// Hex digest of the config block that produced the snapshot.
    pub config_hash: String,
}

pub fn write_snapshot<W: Write>(
    mut w: W,
    splits: &DatasetSplits,
    seed: u64,
    config_hash: u64,
) -> Result<()> {
    let header = SnapshotHeader {
        format: SNAPSHOT_FORMAT.into(),
        version: SNAPSHOT_VERSION,
        seed,
        delta_t: splits.delta_t,
        n_items: splits.n_items,
        n_users: splits.users.len(),
        dropped_users: splits.dropped_users,
        config_hash: format!("{config_hash:016x}"),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for u in &splits.users {
        serde_json::to_writer(&mut w, u)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_snapshot<R: BufRead>(reader: R) -> Result<(DatasetSplits, SnapshotHeader)> {
    let mut lines = reader.lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Snapshot("empty snapshot".into()))??;
    let header: SnapshotHeader = serde_json::from_str(&first)
        .map_err(|e| Error::Snapshot(format!("header: {e}")))?;
    if header.format != SNAPSHOT_FORMAT || header.version != SNAPSHOT_VERSION {
        return Err(Error::Snapshot(format!(
            "unsupported format {} v{}",
            header.format, header.version
        )));
    }
    let mut users = Vec::with_capacity(header.n_users);
    for (i, line) in lines.enumerate() {
        let line = line?;
        let u: UserSplit = serde_json::from_str(&line)
            .map_err(|e| Error::Snapshot(format!("line {}: {e}", i + 2)))?;
        users.push(u);
    }
    if users.len() != header.n_users {
        return Err(Error::Snapshot(format!(
            "header promises {} users, found {}",
            header.n_users,
            users.len()
        )));
    }
    let splits = DatasetSplits {
        n_items: header.n_items,
        delta_t: header.delta_t,
        dropped_users: header.dropped_users,
        users,
    };
    splits.check_invariants().map_err(Error::Snapshot)?;
    Ok((splits, header))
}

/// Parses the hex digest stored in artifact headers.
pub fn parse_hash(hex: &str) -> Result<u64> {
    u64::from_str_radix(hex, 16).map_err(|e| Error::Snapshot(format!("config hash {hex:?}: {e}")))
}
