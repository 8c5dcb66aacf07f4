//! Run traces: placements, per-period allocation rows and the protocol log.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parades::Tier;

/// One task placement. Times are seconds with millisecond precision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacementRow {
    pub time: String,
    pub job: u32,
    pub task: String,
    pub jm: String,
    pub container: u32,
    pub tier: Tier,
    pub wait: String,
    pub r: String,
    pub p: String,
    pub free_before: String,
}

/// One sub-job (or external tenant) at one period boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodRow {
    pub time: String,
    pub dc: u16,
    pub subjob: String,
    pub q: u32,
    pub desire: u32,
    pub allocation: u32,
    pub utilization: String,
    pub class: String,
    pub granted: u32,
    pub reclaimed: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolEvent {
    pub time: String,
    pub job: Option<u32>,
    pub event: String,
    pub actor: String,
    pub payload: serde_json::Value,
}

/// Everything a run writes besides the metrics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Traces {
    pub placements: Vec<PlacementRow>,
    pub periods: Vec<PeriodRow>,
    pub protocol: Vec<ProtocolEvent>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.display().to_string(), source }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io { path: path.display().to_string(), source: e.into() })?;
    for row in rows {
        w.serialize(row).map_err(|e| Error::Io { path: path.display().to_string(), source: e.into() })?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads rows written by [`write_csv`].
pub fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Io { path: path.display().to_string(), source: e.into() })?;
    r.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| Error::Io { path: path.display().to_string(), source: e.into() })
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut buf, row).map_err(|source| Error::Parse { path: path.display().to_string(), source })?;
        buf.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&buf).map_err(io_err(path))
}

impl Traces {
    /// Writes `trace.csv`, `periods.csv` and `protocol.jsonl` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_csv(&dir.join("trace.csv"), &self.placements)?;
        write_csv(&dir.join("periods.csv"), &self.periods)?;
        write_jsonl(&dir.join("protocol.jsonl"), &self.protocol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![PlacementRow {
            time: "1.000".into(),
            job: 0,
            task: "j0.s0.t1".into(),
            jm: "jm@dc0#0".into(),
            container: 3,
            tier: Tier::Rack,
            wait: "0.500".into(),
            r: "0.250".into(),
            p: "5.000".into(),
            free_before: "1.000".into(),
        }];
        let path = dir.path().join("t.csv");
        write_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("time,job,task,jm,container,tier,wait,r,p,free_before\n"));
        assert_eq!(read_csv::<PlacementRow>(&path).unwrap(), rows);
    }
}
