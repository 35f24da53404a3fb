use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::geo::{CellIndex, GeoPoint};
use crate::ingest::ScanRecord;

use super::HmmModel;

#[derive(Debug, Clone, PartialEq)]
pub struct TrackEstimate {
    pub timestamp: i64,
    /// Position of the window's last sample among the serving records pushed so far.
    pub index: usize,
    pub cell: CellIndex,
    pub pos: GeoPoint,
    pub log_prob: f64,
}

/// Sliding-window decoder. Each new serving observation re-decodes the last
/// `window` observations and reports the final state of the best path.
#[derive(Debug)]
pub struct Tracker<'m> {
    model: &'m HmmModel,
    window: usize,
    buf: VecDeque<(i64, usize)>,
    seen: usize,
}

impl<'m> Tracker<'m> {
    pub fn new(model: &'m HmmModel, window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::Invalid("window length must be at least 1".into()));
        }
        Ok(Tracker {
            model,
            window,
            buf: VecDeque::with_capacity(window),
            seen: 0,
        })
    }

    /// Feeds one record. Non-serving records are ignored; nothing is emitted
    /// until the window has filled.
    pub fn push(&mut self, rec: &ScanRecord) -> Result<Option<TrackEstimate>> {
        if !rec.serving {
            return Ok(None);
        }
        if self.buf.len() == self.window {
            self.buf.pop_front();
        }
        self.buf
            .push_back((rec.timestamp, self.model.symbol_for(&rec.tower_id, rec.rssi_dbm)));
        self.seen += 1;
        if self.buf.len() < self.window {
            return Ok(None);
        }
        let symbols: Vec<usize> = self.buf.iter().map(|&(_, k)| k).collect();
        let d = self.model.decode_symbols(&symbols)?;
        let last = *d.path.last().expect("non-empty window");
        Ok(Some(TrackEstimate {
            timestamp: rec.timestamp,
            index: self.seen - 1,
            cell: self.model.spec().cell(last),
            pos: self.model.cell_center(last),
            log_prob: d.log_prob,
        }))
    }
}

/// Runs a [`Tracker`] over a whole trace.
pub fn track(model: &HmmModel, records: &[ScanRecord], window: usize) -> Result<Vec<TrackEstimate>> {
    let mut t = Tracker::new(model, window)?;
    let mut out = Vec::new();
    for r in records {
        if let Some(e) = t.push(r)? {
            out.push(e);
        }
    }
    Ok(out)
}
