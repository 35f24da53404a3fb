//! Comparison localizers restricted to the serving tower: cell-ID,
//! single-tower KNN fingerprinting, and a single-sample Bayesian grid
//! posterior.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{self, Error, Result};
use crate::geo::{GeoPoint, GridSpec, LocalFrame, PlanarPoint};
use crate::hmm::HmmModel;
use crate::ingest::ScanRecord;

pub const DEFAULT_K: usize = 4;
const MIN_STRONGEST: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Given,
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TowerEntry {
    pub pos: GeoPoint,
    pub provenance: Provenance,
}

/// Tower locations keyed by tower id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TowerDb {
    entries: BTreeMap<String, TowerEntry>,
}

impl TowerDb {
    pub fn insert(&mut self, tower_id: impl Into<String>, pos: GeoPoint, provenance: Provenance) {
        self.entries.insert(tower_id.into(), TowerEntry { pos, provenance });
    }

    pub fn get(&self, tower_id: &str) -> Option<&TowerEntry> {
        self.entries.get(tower_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &TowerEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Reads a `tower_id,lat,lon` CSV; entries are marked as given.
    pub fn parse<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let header = rdr.headers()?.clone();
        if header.iter().ne(["tower_id", "lat", "lon"]) {
            return Err(Error::Format("tower CSV header must be `tower_id,lat,lon`".into()));
        }
        let mut db = TowerDb::default();
        for row in rdr.records() {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            let coord = |i: usize| -> Result<f64> {
                row[i]
                    .parse()
                    .map_err(|_| Error::Format(format!("line {line}: invalid coordinate {:?}", &row[i])))
            };
            db.insert(&row[0], GeoPoint::new(coord(1)?, coord(2)?)?, Provenance::Given);
        }
        Ok(db)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(std::io::BufReader::new(error::open(path)?))
    }

    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["tower_id", "lat", "lon"])?;
        for (id, e) in &self.entries {
            w.write_record([id.as_str(), &format!("{:.7}", e.pos.lat), &format!("{:.7}", e.pos.lon)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Places each tower at the planar centroid of its strongest readings: the
/// top decile, but never fewer than five; towers heard fewer than five times
/// use every reading.
pub fn estimate_tower_locations(records: &[ScanRecord]) -> TowerDb {
    let mut by_tower: BTreeMap<&str, Vec<&ScanRecord>> = BTreeMap::new();
    for r in records {
        by_tower.entry(&r.tower_id).or_default().push(r);
    }
    let mut db = TowerDb::default();
    for (id, mut readings) in by_tower {
        readings.sort_by_key(|r| std::cmp::Reverse(r.rssi_dbm));
        let n = readings.len();
        let keep = if n < MIN_STRONGEST {
            n
        } else {
            n.div_ceil(10).max(MIN_STRONGEST)
        };
        let frame = LocalFrame::at(readings[0].pos);
        if let Some(c) = frame.centroid(readings[..keep].iter().map(|r| &r.pos)) {
            db.insert(id, c, Provenance::Estimated);
        }
    }
    db
}

/// Reports the serving tower's location; RSSI is ignored.
pub fn cellid_locate(db: &TowerDb, tower_id: &str) -> Result<GeoPoint> {
    db.get(tower_id)
        .map(|e| e.pos)
        .ok_or_else(|| Error::Unlocalizable(tower_id.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FingerprintPoint {
    pub pos: GeoPoint,
    pub tower_id: String,
    pub rssi_dbm: i32,
}

/// KNN over fingerprints that share the query's serving tower. With one
/// tower the RSSI-space Euclidean distance is just `|ΔRSSI|`.
#[derive(Debug, Clone)]
pub struct KnnIndex {
    frame: LocalFrame,
    by_tower: BTreeMap<String, Vec<(i32, PlanarPoint)>>,
}

impl KnnIndex {
    pub fn new(points: &[FingerprintPoint]) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::Invalid("KNN needs at least one fingerprint".into()))?;
        let frame = LocalFrame::at(first.pos);
        let mut by_tower: BTreeMap<String, Vec<(i32, PlanarPoint)>> = BTreeMap::new();
        for p in points {
            by_tower
                .entry(p.tower_id.clone())
                .or_default()
                .push((p.rssi_dbm, frame.project(p.pos)));
        }
        Ok(KnnIndex { frame, by_tower })
    }

    pub fn from_records(records: &[ScanRecord]) -> Result<Self> {
        let pts: Vec<FingerprintPoint> = records
            .iter()
            .map(|r| FingerprintPoint {
                pos: r.pos,
                tower_id: r.tower_id.clone(),
                rssi_dbm: r.rssi_dbm,
            })
            .collect();
        Self::new(&pts)
    }

    /// Average position of the `k` nearest fingerprints, or `None` when the
    /// tower has no fingerprints. Distance ties keep insertion order.
    pub fn locate(&self, tower_id: &str, rssi_dbm: i32, k: usize) -> Option<GeoPoint> {
        let cands = self.by_tower.get(tower_id)?;
        let mut order: Vec<(u32, usize)> = cands
            .iter()
            .enumerate()
            .map(|(i, (r, _))| (r.abs_diff(rssi_dbm), i))
            .collect();
        order.sort_unstable();
        let take = &order[..k.max(1).min(order.len())];
        let (sx, sy) = take.iter().fold((0.0, 0.0), |(x, y), &(_, i)| {
            (x + cands[i].1.x, y + cands[i].1.y)
        });
        let n = take.len() as f64;
        Some(self.frame.unproject(PlanarPoint::new(sx / n, sy / n)))
    }
}

/// KNN with the cell-ID fallback for towers absent from the fingerprints.
pub fn knn_locate(
    index: &KnnIndex,
    towers: Option<&TowerDb>,
    tower_id: &str,
    rssi_dbm: i32,
    k: usize,
) -> Result<GeoPoint> {
    if let Some(p) = index.locate(tower_id, rssi_dbm, k) {
        return Ok(p);
    }
    match towers {
        Some(db) => cellid_locate(db, tower_id),
        None => Err(Error::Unlocalizable(tower_id.to_string())),
    }
}

/// Posterior-weighted centroid of cell centers for a single observation.
pub fn bayes_locate(model: &HmmModel, tower_id: &str, rssi_dbm: i32) -> GeoPoint {
    let k = model.symbol_for(tower_id, rssi_dbm);
    let scores: Vec<f64> = (0..model.n_states())
        .map(|s| model.initial()[s] * model.emissions().prob(s, k))
        .collect();
    weighted_centroid(model.spec(), &scores)
}

/// Centroid of cell centers under unnormalized non-negative state weights.
/// All-zero weights fall back to the unweighted grid centroid.
pub fn weighted_centroid(spec: &GridSpec, weights: &[f64]) -> GeoPoint {
    let z: f64 = weights.iter().sum();
    let (mut x, mut y) = (0.0, 0.0);
    for (s, &w) in weights.iter().enumerate() {
        let p = if z > 0.0 { w / z } else { 1.0 / weights.len() as f64 };
        if p > 0.0 {
            let c = spec.cell_center_planar(spec.cell(s)).expect("state within grid");
            x += p * c.x;
            y += p * c.y;
        }
    }
    spec.unproject(PlanarPoint::new(x, y))
}
