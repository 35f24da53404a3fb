//! Scan-trace parsing and the gridded fingerprint database.
//!
//! Traces are UTF-8 CSV with the header
//! `timestamp,tower_id,rssi_dbm,lat,lon,serving`. A raw scan may list the
//! serving tower and several neighbours under one timestamp; localization
//! only ever sees the serving row.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{self, Error, Result};
use crate::geo::{CellIndex, GeoPoint, GridSpec};

pub const RSSI_MIN_DBM: i32 = -120;
pub const RSSI_MAX_DBM: i32 = -10;
pub const DEFAULT_BIN_WIDTH: u32 = 2;
pub const SCAN_HEADER: [&str; 6] = ["timestamp", "tower_id", "rssi_dbm", "lat", "lon", "serving"];

const DB_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub timestamp: i64,
    pub tower_id: String,
    pub rssi_dbm: i32,
    pub pos: GeoPoint,
    pub serving: bool,
}

/// A quantized `(serving tower, RSSI bin)` symbol.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Observation {
    pub tower_id: String,
    pub rssi_bin: i32,
}

impl Observation {
    pub fn from_record(rec: &ScanRecord, bin_width: u32) -> Self {
        Observation {
            tower_id: rec.tower_id.clone(),
            rssi_bin: quantize(rec.rssi_dbm, bin_width),
        }
    }
}

/// Maps an RSSI reading to its histogram bin, clamping to the valid range first.
pub fn quantize(rssi_dbm: i32, bin_width: u32) -> i32 {
    let w = bin_width.max(1) as i32;
    (rssi_dbm.clamp(RSSI_MIN_DBM, RSSI_MAX_DBM) - RSSI_MIN_DBM).div_euclid(w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct ParsedScans {
    pub records: Vec<ScanRecord>,
    pub row_errors: Vec<RowError>,
}

/// Parses a scan CSV. Bad rows are collected and skipped; more than 10% bad
/// rows fails the whole parse.
pub fn parse_scans<R: Read>(input: R) -> Result<ParsedScans> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().ne(SCAN_HEADER.iter().copied()) {
        return Err(Error::Format(format!(
            "expected header `{}`, found `{}`",
            SCAN_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut out = ParsedScans::default();
    let mut total = 0usize;
    let mut last_ts = i64::MIN;
    for row in rdr.records() {
        total += 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                out.row_errors.push(RowError {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = row.position().map_or(0, |p| p.line());
        match parse_row(&row) {
            Ok(rec) if rec.timestamp < last_ts => out.row_errors.push(RowError {
                line,
                message: format!("timestamp {} precedes {}", rec.timestamp, last_ts),
            }),
            Ok(rec) => {
                last_ts = rec.timestamp;
                out.records.push(rec);
            }
            Err(message) => out.row_errors.push(RowError { line, message }),
        }
    }

    if out.row_errors.len() * 10 > total {
        let first = &out.row_errors[0];
        return Err(Error::TooManyBadRows {
            bad: out.row_errors.len(),
            total,
            first_line: first.line,
            first_message: first.message.clone(),
        });
    }
    Ok(out)
}

fn parse_row(row: &csv::StringRecord) -> std::result::Result<ScanRecord, String> {
    if row.len() != SCAN_HEADER.len() {
        return Err(format!("expected {} fields, found {}", SCAN_HEADER.len(), row.len()));
    }
    fn num<T: std::str::FromStr>(s: &str, what: &str) -> std::result::Result<T, String> {
        s.parse().map_err(|_| format!("invalid {what} {s:?}"))
    }
    let tower_id = row[1].to_string();
    if tower_id.is_empty() {
        return Err("empty tower_id".into());
    }
    let serving = match &row[5] {
        "1" | "true" => true,
        "0" | "false" => false,
        s => return Err(format!("invalid serving flag {s:?}")),
    };
    let lat: f64 = num(&row[3], "lat")?;
    let lon: f64 = num(&row[4], "lon")?;
    Ok(ScanRecord {
        timestamp: num(&row[0], "timestamp")?,
        tower_id,
        rssi_dbm: num(&row[2], "rssi_dbm")?,
        pos: GeoPoint::new(lat, lon).map_err(|e| e.to_string())?,
        serving,
    })
}

pub fn read_scans(path: &Path) -> Result<ParsedScans> {
    parse_scans(std::io::BufReader::new(error::open(path)?))
}

pub fn write_scans<W: Write>(out: W, records: &[ScanRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SCAN_HEADER)?;
    for r in records {
        w.write_record([
            r.timestamp.to_string(),
            r.tower_id.clone(),
            r.rssi_dbm.to_string(),
            format!("{:.7}", r.pos.lat),
            format!("{:.7}", r.pos.lon),
            (r.serving as u8).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Keeps only serving-tower rows, at most one per timestamp (the strongest
/// when several rows of one scan claim to be serving).
pub fn serving_only(records: &[ScanRecord]) -> Vec<ScanRecord> {
    let mut out: Vec<ScanRecord> = Vec::new();
    for r in records.iter().filter(|r| r.serving) {
        match out.last_mut() {
            Some(prev) if prev.timestamp == r.timestamp => {
                if r.rssi_dbm > prev.rssi_dbm {
                    *prev = r.clone();
                }
            }
            _ => out.push(r.clone()),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerprintSample {
    pub cell: CellIndex,
    pub obs: Observation,
    pub rssi_dbm: i32,
    pub pos: GeoPoint,
}

/// Training samples bucketed by grid cell, with per-cell symbol histograms.
#[derive(Debug, Clone, PartialEq)]
pub struct FingerprintDb {
    spec: GridSpec,
    bin_width: u32,
    samples: Vec<FingerprintSample>,
    dropped: usize,
    per_cell_counts: BTreeMap<CellIndex, BTreeMap<Observation, u64>>,
    vocab: BTreeSet<Observation>,
}

impl FingerprintDb {
    /// Buckets serving-only records into `spec`'s cells; records outside the
    /// bounding box are dropped and counted.
    pub fn build(records: &[ScanRecord], spec: GridSpec, bin_width: u32) -> Result<Self> {
        if bin_width == 0 {
            return Err(Error::Invalid("bin width must be at least 1".into()));
        }
        let mut dropped = 0;
        let mut samples = Vec::with_capacity(records.len());
        for r in records {
            match spec.cell_of_strict(r.pos) {
                Some(cell) => samples.push(FingerprintSample {
                    cell,
                    obs: Observation::from_record(r, bin_width),
                    rssi_dbm: r.rssi_dbm,
                    pos: r.pos,
                }),
                None => dropped += 1,
            }
        }
        Self::from_samples(spec, bin_width, samples, dropped)
    }

    fn from_samples(
        spec: GridSpec,
        bin_width: u32,
        samples: Vec<FingerprintSample>,
        dropped: usize,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyModel);
        }
        let mut per_cell_counts: BTreeMap<CellIndex, BTreeMap<Observation, u64>> = BTreeMap::new();
        for s in &samples {
            spec.check(s.cell)?;
            *per_cell_counts
                .entry(s.cell)
                .or_default()
                .entry(s.obs.clone())
                .or_default() += 1;
        }
        let vocab = per_cell_counts
            .values()
            .flat_map(|m| m.keys().cloned())
            .collect();
        Ok(FingerprintDb {
            spec,
            bin_width,
            samples,
            dropped,
            per_cell_counts,
            vocab,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn bin_width(&self) -> u32 {
        self.bin_width
    }

    pub fn samples(&self) -> &[FingerprintSample] {
        &self.samples
    }

    pub fn dropped(&self) -> usize {
        self.dropped
    }

    pub fn per_cell_counts(&self) -> &BTreeMap<CellIndex, BTreeMap<Observation, u64>> {
        &self.per_cell_counts
    }

    pub fn vocab(&self) -> &BTreeSet<Observation> {
        &self.vocab
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = DbFile {
            version: DB_VERSION,
            spec: self.spec,
            bin_width: self.bin_width,
            dropped: self.dropped,
            samples: self.samples.clone(),
        };
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(&mut w, &file)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::io::read_to_string(error::open(path)?)?;
        let header: VersionProbe = serde_json::from_str(&text)?;
        if header.version != DB_VERSION {
            return Err(Error::Version {
                found: header.version,
                expected: DB_VERSION,
            });
        }
        let file: DbFile = serde_json::from_str(&text)?;
        Self::from_samples(file.spec, file.bin_width, file.samples, file.dropped)
    }
}

#[derive(Serialize, Deserialize)]
struct DbFile {
    version: u32,
    spec: GridSpec,
    bin_width: u32,
    dropped: usize,
    samples: Vec<FingerprintSample>,
}

#[derive(Deserialize)]
pub(crate) struct VersionProbe {
    pub version: u32,
}
