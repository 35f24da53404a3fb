//! Evaluation harness: runs localizers over held-out traces, summarizes
//! distance errors, and drives the grid-length and window-length sweeps.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{bayes_locate, cellid_locate, knn_locate, KnnIndex, TowerDb};
use crate::error::{Error, Result};
use crate::geo::{haversine, BoundingBox, GeoPoint, GridSpec};
use crate::hmm::{track, HmmConfig, HmmModel};
use crate::ingest::{serving_only, FingerprintDb, ScanRecord};

/// One position estimate for the test record at `index`; `None` when the
/// sample could not be localized.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub index: usize,
    pub pos: Option<GeoPoint>,
}

pub trait Localizer: Sync {
    fn name(&self) -> &str;

    /// Estimates for a serving-only, time-ordered trace.
    fn estimates(&self, records: &[ScanRecord]) -> Result<Vec<Estimate>>;
}

pub struct HmmLocalizer<'a> {
    pub model: &'a HmmModel,
    pub window: usize,
}

impl Localizer for HmmLocalizer<'_> {
    fn name(&self) -> &str {
        "hmm"
    }

    fn estimates(&self, records: &[ScanRecord]) -> Result<Vec<Estimate>> {
        Ok(track(self.model, records, self.window)?
            .into_iter()
            .map(|e| Estimate {
                index: e.index,
                pos: Some(e.pos),
            })
            .collect())
    }
}

pub struct CellIdLocalizer<'a> {
    pub towers: &'a TowerDb,
}

impl Localizer for CellIdLocalizer<'_> {
    fn name(&self) -> &str {
        "cellid"
    }

    fn estimates(&self, records: &[ScanRecord]) -> Result<Vec<Estimate>> {
        Ok(records
            .iter()
            .enumerate()
            .map(|(index, r)| Estimate {
                index,
                pos: cellid_locate(self.towers, &r.tower_id).ok(),
            })
            .collect())
    }
}

pub struct KnnLocalizer<'a> {
    pub index: &'a KnnIndex,
    pub towers: Option<&'a TowerDb>,
    pub k: usize,
}

impl Localizer for KnnLocalizer<'_> {
    fn name(&self) -> &str {
        "knn"
    }

    fn estimates(&self, records: &[ScanRecord]) -> Result<Vec<Estimate>> {
        Ok(records
            .iter()
            .enumerate()
            .map(|(index, r)| Estimate {
                index,
                pos: knn_locate(self.index, self.towers, &r.tower_id, r.rssi_dbm, self.k).ok(),
            })
            .collect())
    }
}

pub struct BayesLocalizer<'a> {
    pub model: &'a HmmModel,
}

impl Localizer for BayesLocalizer<'_> {
    fn name(&self) -> &str {
        "bayes"
    }

    fn estimates(&self, records: &[ScanRecord]) -> Result<Vec<Estimate>> {
        Ok(records
            .iter()
            .enumerate()
            .map(|(index, r)| Estimate {
                index,
                pos: Some(bayes_locate(self.model, &r.tower_id, r.rssi_dbm)),
            })
            .collect())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cell_len_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bin_width: Option<u32>,
}

impl EvalParams {
    pub fn for_model(model: &HmmModel) -> Self {
        EvalParams {
            cell_len_m: Some(model.spec().cell_len_m()),
            alpha: Some(model.emissions().alpha()),
            bin_width: Some(model.bin_width()),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub mean: f64,
    pub p67: f64,
    pub p90: f64,
    pub max: f64,
}

impl Summary {
    /// Nearest-rank statistics; `None` for an empty sample.
    pub fn of(errors: &[f64]) -> Option<Self> {
        if errors.is_empty() {
            return None;
        }
        let mut sorted = errors.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Summary {
            median: nearest_rank(&sorted, 0.5),
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
            p67: nearest_rank(&sorted, 0.67),
            p90: nearest_rank(&sorted, 0.9),
            max: sorted[sorted.len() - 1],
        })
    }
}

/// Smallest sample value whose empirical CDF reaches `q`.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub params: EvalParams,
    /// Serving samples in the test trace.
    pub n_samples: usize,
    /// Samples consumed by the decoding window before the first estimate.
    pub warmup_excluded: usize,
    pub unlocalizable: usize,
    pub summary: Option<Summary>,
    pub errors: Vec<f64>,
}

impl EvalReport {
    pub fn median(&self) -> Option<f64> {
        self.summary.map(|s| s.median)
    }

    /// Empirical CDF on a 1 m grid: `(meters, fraction of scored samples with
    /// error <= meters)`. Unlocalizable samples count in the denominator, so
    /// the last fraction is the localizable share.
    pub fn cdf(&self) -> Vec<(u64, f64)> {
        let mut buckets: Vec<u64> = self.errors.iter().map(|e| e.ceil() as u64).collect();
        buckets.sort_unstable();
        let denom = (self.errors.len() + self.unlocalizable) as f64;
        let mut out: Vec<(u64, f64)> = Vec::new();
        for (i, &b) in buckets.iter().enumerate() {
            let frac = (i + 1) as f64 / denom;
            match out.last_mut() {
                Some(last) if last.0 == b => last.1 = frac,
                _ => out.push((b, frac)),
            }
        }
        out
    }

    pub fn write_cdf<W: Write>(&self, out: W) -> Result<()> {
        if self.errors.is_empty() {
            return Err(Error::EmptyReport);
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["error_m", "fraction"])?;
        for (m, f) in self.cdf() {
            w.write_record([m.to_string(), f.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Scores `localizer` on `test`. Error is the great-circle distance between
/// each estimate and the ground truth of the sample it was emitted for.
pub fn evaluate(localizer: &dyn Localizer, test: &[ScanRecord], params: EvalParams) -> Result<EvalReport> {
    let records = serving_only(test);
    if records.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let estimates = localizer.estimates(&records)?;
    let mut errors = Vec::with_capacity(estimates.len());
    let mut unlocalizable = 0;
    for e in &estimates {
        match e.pos {
            Some(p) => errors.push(haversine(p, records[e.index].pos)),
            None => unlocalizable += 1,
        }
    }
    Ok(EvalReport {
        method: localizer.name().to_string(),
        params,
        n_samples: records.len(),
        warmup_excluded: records.len() - estimates.len(),
        unlocalizable,
        summary: Summary::of(&errors),
        errors,
    })
}

/// Shared HMM training inputs for sweeps.
#[derive(Debug, Clone, Copy)]
pub struct TrainSetup {
    pub bbox: BoundingBox,
    pub bin_width: u32,
    pub hmm: HmmConfig,
}

pub fn train_hmm(train: &[ScanRecord], setup: &TrainSetup, cell_len_m: f64) -> Result<HmmModel> {
    let spec = GridSpec::new(setup.bbox, cell_len_m)?;
    let db = FingerprintDb::build(&serving_only(train), spec, setup.bin_width)?;
    HmmModel::build(&db, setup.hmm)
}

/// Trains and scores one HMM per grid cell length, reports in input order.
pub fn sweep_grid_len(
    train: &[ScanRecord],
    test: &[ScanRecord],
    lengths: &[f64],
    window: usize,
    setup: &TrainSetup,
) -> Result<Vec<EvalReport>> {
    lengths
        .par_iter()
        .map(|&len| {
            let model = train_hmm(train, setup, len)?;
            evaluate(
                &HmmLocalizer { model: &model, window },
                test,
                EvalParams {
                    window: Some(window),
                    ..EvalParams::for_model(&model)
                },
            )
        })
        .collect()
}

/// Scores one trained model at each window length, reports in input order.
pub fn sweep_window(model: &HmmModel, test: &[ScanRecord], windows: &[usize]) -> Result<Vec<EvalReport>> {
    windows
        .par_iter()
        .map(|&window| {
            evaluate(
                &HmmLocalizer { model, window },
                test,
                EvalParams {
                    window: Some(window),
                    ..EvalParams::for_model(model)
                },
            )
        })
        .collect()
}

/// Picks the KNN `k` with the lowest median error on a chronological
/// hold-out (last 20%) of the training trace. Ties go to the smaller `k`.
pub fn tune_knn_k(train: &[ScanRecord], towers: Option<&TowerDb>, ks: &[usize]) -> Result<usize> {
    let records = serving_only(train);
    let split = records.len() * 4 / 5;
    if split == 0 || split == records.len() || ks.is_empty() {
        return Err(Error::Invalid("not enough training data to tune k".into()));
    }
    let (fit, holdout) = records.split_at(split);
    let index = KnnIndex::from_records(fit)?;
    let mut best: Option<(f64, usize)> = None;
    for &k in ks {
        let r = evaluate(&KnnLocalizer { index: &index, towers, k }, holdout, EvalParams::default())?;
        let m = r.median().unwrap_or(f64::INFINITY);
        if best.is_none_or(|(bm, _)| m < bm) {
            best = Some((m, k));
        }
    }
    Ok(best.expect("non-empty k list").1)
}

/// Comparison table: one row per report with its median and the percentage
/// by which it trails `reference`.
pub fn comparison_table(reports: &[EvalReport], reference: &str) -> String {
    let ref_median = reports
        .iter()
        .find(|r| r.method == reference)
        .and_then(|r| r.median());
    let mut s = String::from("method,median_m,mean_m,p90_m,unlocalizable,degradation_pct\n");
    for r in reports {
        let fmt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.2}"));
        let degr = match (r.median(), ref_median) {
            (Some(m), Some(h)) if h > 0.0 && r.method != reference => format!("{:.2}", (m - h) / h * 100.0),
            _ => String::new(),
        };
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.method,
            fmt(r.median()),
            fmt(r.summary.map(|x| x.mean)),
            fmt(r.summary.map(|x| x.p90)),
            r.unlocalizable,
            degr
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::PlanarPoint;
    use proptest::prelude::*;

    struct Perfect;
    impl Localizer for Perfect {
        fn name(&self) -> &str {
            "perfect"
        }
        fn estimates(&self, records: &[ScanRecord]) -> Result<Vec<Estimate>> {
            Ok(records
                .iter()
                .enumerate()
                .map(|(index, r)| Estimate { index, pos: Some(r.pos) })
                .collect())
        }
    }

    struct Constant(GeoPoint);
    impl Localizer for Constant {
        fn name(&self) -> &str {
            "constant"
        }
        fn estimates(&self, records: &[ScanRecord]) -> Result<Vec<Estimate>> {
            Ok((0..records.len()).map(|index| Estimate { index, pos: Some(self.0) }).collect())
        }
    }

    fn trace(n: usize) -> Vec<ScanRecord> {
        let frame = crate::geo::LocalFrame::at(GeoPoint::new(30.0, 31.0).unwrap());
        (0..n)
            .map(|i| ScanRecord {
                timestamp: i as i64,
                tower_id: "A".into(),
                rssi_dbm: -70,
                pos: frame.unproject(PlanarPoint::new(i as f64 * 10.0, 0.0)),
                serving: true,
            })
            .collect()
    }

    fn report(errors: Vec<f64>, unlocalizable: usize) -> EvalReport {
        EvalReport {
            method: "x".into(),
            params: EvalParams::default(),
            n_samples: errors.len() + unlocalizable,
            warmup_excluded: 0,
            unlocalizable,
            summary: Summary::of(&errors),
            errors,
        }
    }

    #[test]
    fn perfect_locator_has_zero_error() {
        let r = evaluate(&Perfect, &trace(20), EvalParams::default()).unwrap();
        assert_eq!(r.median(), Some(0.0));
        assert_eq!(r.errors.len(), 20);
    }

    #[test]
    fn constant_locator_errors() {
        let t = trace(5);
        let p = GeoPoint::new(30.01, 31.0).unwrap();
        let r = evaluate(&Constant(p), &t, EvalParams::default()).unwrap();
        for (e, rec) in r.errors.iter().zip(&t) {
            assert_eq!(*e, haversine(p, rec.pos));
        }
    }

    #[test]
    fn empty_test_set_is_fatal() {
        assert!(matches!(
            evaluate(&Perfect, &[], EvalParams::default()),
            Err(Error::EmptyTestSet)
        ));
    }

    #[test]
    fn cdf_example() {
        let r = report(vec![10.0, 20.0, 20.0, 40.0], 0);
        assert_eq!(r.cdf(), vec![(10, 0.25), (20, 0.75), (40, 1.0)]);
        let mut buf = Vec::new();
        r.write_cdf(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "error_m,fraction\n10,0.25\n20,0.75\n40,1\n");
    }

    #[test]
    fn cdf_counts_unlocalizable_in_denominator() {
        let r = report(vec![5.0, 7.0, 9.0], 1);
        assert_eq!(r.cdf().last().unwrap().1, 0.75);
    }

    #[test]
    fn empty_report_cannot_export() {
        let r = report(vec![], 3);
        assert!(matches!(r.write_cdf(Vec::new()), Err(Error::EmptyReport)));
    }

    #[test]
    fn summary_nearest_rank() {
        let s = Summary::of(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((s.median, s.mean, s.max), (2.0, 2.5, 4.0));
        assert_eq!(s.p90, 4.0);
        assert!(Summary::of(&[]).is_none());
    }

    #[test]
    fn comparison_table_degradation() {
        let mut h = report(vec![50.0], 0);
        h.method = "hmm".into();
        let mut c = report(vec![100.0], 0);
        c.method = "cellid".into();
        let t = comparison_table(&[h, c], "hmm");
        assert!(t.contains("hmm,50.00,50.00,50.00,0,\n"));
        assert!(t.contains("cellid,100.00,100.00,100.00,0,100.00\n"));
    }

    proptest! {
        #[test]
        fn cdf_monotone_and_median_consistent(errors in proptest::collection::vec(0.0..5000.0f64, 1..200)) {
            let r = report(errors, 0);
            let cdf = r.cdf();
            for w in cdf.windows(2) {
                prop_assert!(w[0].0 < w[1].0 && w[0].1 <= w[1].1);
            }
            prop_assert!((cdf.last().unwrap().1 - 1.0).abs() < 1e-12);
            let cdf_median = cdf.iter().find(|(_, f)| *f >= 0.5).unwrap().0 as f64;
            prop_assert!((cdf_median - r.median().unwrap()).abs() <= 1.0);
        }
    }
}
