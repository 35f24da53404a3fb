//! Command-line front end: `simulate`, `train`, `track`, `eval`,
//! `sweep-grid`, `sweep-window`.
//!
//! Exit codes: 0 on success, 2 for usage and validation errors, 1 for
//! runtime failures.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::baselines::{estimate_tower_locations, KnnIndex, TowerDb, DEFAULT_K};
use crate::error::{Error, Result};
use crate::eval::{
    comparison_table, evaluate, sweep_grid_len, sweep_window, tune_knn_k, BayesLocalizer,
    CellIdLocalizer, EvalParams, EvalReport, HmmLocalizer, KnnLocalizer, Localizer, TrainSetup,
};
use crate::geo::{BoundingBox, GridSpec};
use crate::hmm::{Connectivity, HmmConfig, HmmModel, Tracker, DEFAULT_ALPHA};
use crate::ingest::{read_scans, serving_only, write_scans, FingerprintDb, ScanRecord, DEFAULT_BIN_WIDTH};
use crate::sim::{gen_trace, gen_trajectory, sub_seed, towers_per_scan, Mobility, SimWorld};

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;

pub const DEFAULT_CELL_LEN_M: f64 = 400.0;
pub const DEFAULT_WINDOW: usize = 10;
const KNN_TUNING_KS: [usize; 8] = [1, 2, 3, 4, 5, 6, 7, 8];

#[derive(Debug, Parser)]
#[command(
    name = "cellhmm",
    version,
    about = "Serving-cell RSSI localization with a grid HMM",
    long_about = "Serving-cell RSSI localization with a grid HMM.\n\n\
                  Defaults follow the reference operating point: 400 m grid cells, \
                  a 10-sample observation window and 4-neighbour transitions."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic world with training and test traces.
    Simulate(SimulateArgs),
    /// Build a fingerprint database and HMM from a training trace.
    Train(TrainArgs),
    /// Localize every sample of a test trace.
    Track(TrackArgs),
    /// Score one or more methods on a test trace.
    Eval(EvalArgs),
    /// Retrain and score the HMM across grid cell lengths.
    SweepGrid(SweepGridArgs),
    /// Score one trained HMM across observation window lengths.
    SweepWindow(SweepWindowArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Hmm,
    Cellid,
    Knn,
    Bayes,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Hmm => "hmm",
            Method::Cellid => "cellid",
            Method::Knn => "knn",
            Method::Bayes => "bayes",
        }
    }
}

fn parse_connectivity(s: &str) -> std::result::Result<Connectivity, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_positive(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got {s:?}")),
    }
}

fn parse_count(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(format!("expected an integer >= 1, got {s:?}")),
    }
}

fn parse_non_negative(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a non-negative number, got {s:?}")),
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct HmmOpts {
    /// Grid neighbourhood used for transitions.
    #[arg(long, default_value = "4", value_parser = parse_connectivity)]
    #[serde(serialize_with = "ser_connectivity")]
    pub connectivity: Connectivity,
    /// Allow staying in the same cell between samples.
    #[arg(long, value_enum, default_value_t = Switch::On)]
    pub self_loop: Switch,
    /// Additive smoothing for emission histograms.
    #[arg(long, default_value_t = DEFAULT_ALPHA, value_parser = parse_non_negative)]
    pub alpha: f64,
    /// RSSI histogram bin width in dB.
    #[arg(long, default_value_t = DEFAULT_BIN_WIDTH, value_parser = clap::value_parser!(u32).range(1..))]
    pub bin_width: u32,
    /// World file whose bounding box defines the grid (default: extent of the training data).
    #[arg(long)]
    pub world: Option<PathBuf>,
}

fn ser_connectivity<S: serde::Serializer>(c: &Connectivity, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(match c {
        Connectivity::Four => "4",
        Connectivity::Eight => "8",
    })
}

impl HmmOpts {
    fn config(&self) -> HmmConfig {
        HmmConfig {
            connectivity: self.connectivity,
            self_loop: self.self_loop == Switch::On,
            alpha: self.alpha,
        }
    }

    fn bbox(&self, train: &[ScanRecord]) -> Result<BoundingBox> {
        match &self.world {
            Some(p) => Ok(SimWorld::load(p)?.bbox),
            None => BoundingBox::enclosing(train.iter().map(|r| &r.pos), 1.0),
        }
    }

    fn setup(&self, train: &[ScanRecord]) -> Result<TrainSetup> {
        Ok(TrainSetup {
            bbox: self.bbox(train)?,
            bin_width: self.bin_width,
            hmm: self.config(),
        })
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// Existing directory to write train.csv, test.csv, towers.csv, world.json.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// World config to use instead of the default world.
    #[arg(long)]
    pub world: Option<PathBuf>,
    /// Training trace length in seconds (one scan per second).
    #[arg(long, default_value_t = 3000)]
    pub train_duration: usize,
    /// Test trace length in seconds.
    #[arg(long, default_value_t = 600)]
    pub test_duration: usize,
    #[arg(long, value_enum, default_value_t = Mobility::RandomWaypoint)]
    pub mobility: Mobility,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// Output model file.
    #[arg(long)]
    pub out: PathBuf,
    /// Grid cell length in meters.
    #[arg(long, default_value_t = DEFAULT_CELL_LEN_M, value_parser = parse_positive)]
    pub cell_len: f64,
    #[command(flatten)]
    pub hmm: HmmOpts,
    /// Also write the fingerprint database here.
    #[arg(long)]
    pub fingerprint: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrackArgs {
    #[arg(long)]
    pub test: PathBuf,
    /// Output estimates CSV (`timestamp,lat,lon`; empty coordinates when unlocalizable).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Hmm)]
    pub method: Method,
    /// Trained model (hmm, bayes).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Training trace (knn fingerprints; tower estimates for cellid without --towers).
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Tower location CSV for cellid and the knn fallback.
    #[arg(long)]
    pub towers: Option<PathBuf>,
    /// Observation window length.
    #[arg(long, default_value_t = DEFAULT_WINDOW, value_parser = parse_count)]
    pub window: usize,
    #[arg(long, default_value_t = DEFAULT_K, value_parser = parse_count)]
    pub k: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub test: PathBuf,
    /// Existing output directory for reports and CDFs.
    #[arg(long)]
    pub out: PathBuf,
    /// Methods to score (default: all).
    #[arg(long, value_enum, value_delimiter = ',')]
    pub method: Vec<Method>,
    /// Trained model; when absent the HMM is trained from --train.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub towers: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_WINDOW, value_parser = parse_count)]
    pub window: usize,
    /// KNN neighbours; when absent, tuned on a hold-out of the training trace.
    #[arg(long, value_parser = parse_count)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_CELL_LEN_M, value_parser = parse_positive)]
    pub cell_len: f64,
    #[command(flatten)]
    pub hmm: HmmOpts,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepGridArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "100,200,400,800,1600", value_parser = parse_positive)]
    pub cell_len: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_WINDOW, value_parser = parse_count)]
    pub window: usize,
    #[command(flatten)]
    pub hmm: HmmOpts,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepWindowArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8,9,10",
          value_parser = parse_count)]
    pub window: Vec<usize>,
}

/// Parses `std::env::args`, runs the command, and returns the exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                EXIT_VALIDATION
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Train(a) => train(&a),
        Command::Track(a) => track_cmd(&a),
        Command::Eval(a) => eval_cmd(&a),
        Command::SweepGrid(a) => sweep_grid_cmd(&a),
        Command::SweepWindow(a) => sweep_window_cmd(&a),
    }
}

fn require_file(p: &Path, what: &str) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Error::Invalid(format!("{what} {} does not exist", p.display())))
    }
}

fn require_dir(p: &Path) -> Result<()> {
    if p.is_dir() {
        Ok(())
    } else {
        Err(Error::Invalid(format!("output directory {} does not exist", p.display())))
    }
}

fn require_parent(p: &Path) -> Result<()> {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => require_dir(d),
        _ => Ok(()),
    }
}

fn load_trace(p: &Path) -> Result<Vec<ScanRecord>> {
    let parsed = read_scans(p)?;
    for e in parsed.row_errors.iter().take(5) {
        eprintln!("warning: {}:{}: {}", p.display(), e.line, e.message);
    }
    if parsed.row_errors.len() > 5 {
        eprintln!("warning: {} more malformed rows skipped", parsed.row_errors.len() - 5);
    }
    Ok(serving_only(&parsed.records))
}

fn write_file(path: &Path, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

#[derive(Serialize)]
struct Manifest<'a, T: Serialize> {
    command: &'a str,
    tool_version: &'a str,
    args: &'a T,
}

fn write_manifest<T: Serialize>(dir: &Path, command: &str, args: &T) -> Result<()> {
    write_json(
        &dir.join("manifest.json"),
        &Manifest {
            command,
            tool_version: env!("CARGO_PKG_VERSION"),
            args,
        },
    )
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    require_dir(&a.out)?;
    if a.train_duration == 0 || a.test_duration == 0 {
        return Err(Error::Invalid("trace durations must be at least 1 s".into()));
    }
    let world = match &a.world {
        Some(p) => {
            require_file(p, "world file")?;
            SimWorld::load(p)?
        }
        None => SimWorld::default_world(a.seed),
    };
    let train_traj = gen_trajectory(&world, a.train_duration, a.mobility, sub_seed(a.seed, 1))?;
    let train = gen_trace(&world, &train_traj, sub_seed(a.seed, 2))?;
    let test_traj = gen_trajectory(&world, a.test_duration, a.mobility, sub_seed(a.seed, 3))?;
    let test = gen_trace(&world, &test_traj, sub_seed(a.seed, 4))?;

    write_file(&a.out.join("train.csv"), |w| write_scans(w, &train))?;
    write_file(&a.out.join("test.csv"), |w| write_scans(w, &test))?;
    write_file(&a.out.join("towers.csv"), |w| world.tower_db().write(w))?;
    world.save(&a.out.join("world.json"))?;
    write_manifest(&a.out, "simulate", a)?;
    println!(
        "simulated {} towers; train {} scans, test {} scans; {:.2} towers/scan",
        world.towers.len(),
        a.train_duration,
        a.test_duration,
        towers_per_scan(&train)
    );
    Ok(())
}

fn build_model(train: &[ScanRecord], cell_len: f64, opts: &HmmOpts) -> Result<(HmmModel, FingerprintDb)> {
    if train.is_empty() {
        return Err(Error::EmptyModel);
    }
    let spec = GridSpec::new(opts.bbox(train)?, cell_len)?;
    let db = FingerprintDb::build(train, spec, opts.bin_width)?;
    let model = HmmModel::build(&db, opts.config())?;
    Ok((model, db))
}

fn train(a: &TrainArgs) -> Result<()> {
    require_file(&a.train, "training trace")?;
    require_parent(&a.out)?;
    let records = load_trace(&a.train)?;
    let (model, db) = build_model(&records, a.cell_len, &a.hmm)?;
    model.save(&a.out)?;
    if let Some(p) = &a.fingerprint {
        db.save(p)?;
    }
    println!(
        "states N = {} ({} x {}), vocabulary = {} (+1 unknown), dropped = {}",
        model.n_states(),
        model.spec().n_cols(),
        model.spec().n_rows(),
        model.emissions().vocab().len(),
        db.dropped()
    );
    Ok(())
}

fn load_towers(towers: Option<&Path>, train: Option<&[ScanRecord]>) -> Result<Option<TowerDb>> {
    match (towers, train) {
        (Some(p), _) => {
            require_file(p, "tower file")?;
            Ok(Some(TowerDb::load(p)?))
        }
        (None, Some(t)) => Ok(Some(estimate_tower_locations(t))),
        (None, None) => Ok(None),
    }
}

fn load_optional_trace(p: Option<&Path>) -> Result<Option<Vec<ScanRecord>>> {
    p.map(|p| {
        require_file(p, "training trace")?;
        load_trace(p)
    })
    .transpose()
}

fn track_cmd(a: &TrackArgs) -> Result<()> {
    require_file(&a.test, "test trace")?;
    require_parent(&a.out)?;
    let test = load_trace(&a.test)?;
    let need_model = || -> Result<HmmModel> {
        let p = a
            .model
            .as_deref()
            .ok_or_else(|| Error::Invalid(format!("--model is required for method {}", a.method.name())))?;
        require_file(p, "model")?;
        HmmModel::load(p)
    };
    let train = load_optional_trace(a.train.as_deref())?;

    let rows: Vec<(i64, Option<crate::geo::GeoPoint>)> = match a.method {
        Method::Hmm => {
            let model = need_model()?;
            let mut tracker = Tracker::new(&model, a.window)?;
            let mut rows = Vec::new();
            for r in &test {
                if let Some(e) = tracker.push(r)? {
                    rows.push((e.timestamp, Some(e.pos)));
                }
            }
            rows
        }
        Method::Bayes => {
            let model = need_model()?;
            let loc = BayesLocalizer { model: &model };
            per_sample_rows(&loc, &test)?
        }
        Method::Cellid => {
            let towers = load_towers(a.towers.as_deref(), train.as_deref())?
                .ok_or_else(|| Error::Invalid("cellid needs --towers or --train".into()))?;
            per_sample_rows(&CellIdLocalizer { towers: &towers }, &test)?
        }
        Method::Knn => {
            let train = train.ok_or_else(|| Error::Invalid("knn needs --train".into()))?;
            let index = KnnIndex::from_records(&train)?;
            let towers = load_towers(a.towers.as_deref(), Some(&train))?;
            per_sample_rows(
                &KnnLocalizer {
                    index: &index,
                    towers: towers.as_ref(),
                    k: a.k,
                },
                &test,
            )?
        }
    };

    write_file(&a.out, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["timestamp", "lat", "lon"])?;
        for (ts, p) in &rows {
            let (lat, lon) = match p {
                Some(p) => (format!("{:.7}", p.lat), format!("{:.7}", p.lon)),
                None => (String::new(), String::new()),
            };
            csv.write_record([ts.to_string(), lat, lon])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    let unlocalized = rows.iter().filter(|(_, p)| p.is_none()).count();
    println!("{} estimates written ({unlocalized} unlocalizable)", rows.len());
    Ok(())
}

fn per_sample_rows(
    loc: &dyn Localizer,
    test: &[ScanRecord],
) -> Result<Vec<(i64, Option<crate::geo::GeoPoint>)>> {
    Ok(loc
        .estimates(test)?
        .into_iter()
        .map(|e| (test[e.index].timestamp, e.pos))
        .collect())
}

fn write_report(dir: &Path, stem: &str, report: &EvalReport) -> Result<()> {
    write_json(&dir.join(format!("report_{stem}.json")), report)?;
    if report.errors.is_empty() {
        eprintln!("warning: {stem}: no localized estimates, CDF not written");
        return Ok(());
    }
    write_file(&dir.join(format!("cdf_{stem}.csv")), |w| report.write_cdf(w))
}

fn eval_cmd(a: &EvalArgs) -> Result<()> {
    require_file(&a.test, "test trace")?;
    require_dir(&a.out)?;
    let test = load_trace(&a.test)?;
    let train = load_optional_trace(a.train.as_deref())?;
    let mut methods = if a.method.is_empty() {
        vec![Method::Hmm, Method::Bayes, Method::Knn, Method::Cellid]
    } else {
        a.method.clone()
    };
    methods.dedup();

    let needs_model = methods.iter().any(|m| matches!(m, Method::Hmm | Method::Bayes));
    let model = if !needs_model {
        None
    } else if let Some(p) = &a.model {
        require_file(p, "model")?;
        Some(HmmModel::load(p)?)
    } else {
        let t = train
            .as_deref()
            .ok_or_else(|| Error::Invalid("hmm and bayes need --model or --train".into()))?;
        Some(build_model(t, a.cell_len, &a.hmm)?.0)
    };
    let towers = load_towers(a.towers.as_deref(), train.as_deref())?;

    let mut reports = Vec::new();
    for m in &methods {
        let report = match m {
            Method::Hmm => {
                let model = model.as_ref().expect("model loaded");
                let params = EvalParams {
                    window: Some(a.window),
                    ..EvalParams::for_model(model)
                };
                evaluate(&HmmLocalizer { model, window: a.window }, &test, params)?
            }
            Method::Bayes => {
                let model = model.as_ref().expect("model loaded");
                evaluate(&BayesLocalizer { model }, &test, EvalParams::for_model(model))?
            }
            Method::Cellid => {
                let towers = towers
                    .as_ref()
                    .ok_or_else(|| Error::Invalid("cellid needs --towers or --train".into()))?;
                evaluate(&CellIdLocalizer { towers }, &test, EvalParams::default())?
            }
            Method::Knn => {
                let t = train
                    .as_deref()
                    .ok_or_else(|| Error::Invalid("knn needs --train".into()))?;
                let k = match a.k {
                    Some(k) => k,
                    None => tune_knn_k(t, towers.as_ref(), &KNN_TUNING_KS)?,
                };
                let index = KnnIndex::from_records(t)?;
                let params = EvalParams {
                    k: Some(k),
                    ..Default::default()
                };
                evaluate(
                    &KnnLocalizer {
                        index: &index,
                        towers: towers.as_ref(),
                        k,
                    },
                    &test,
                    params,
                )?
            }
        };
        write_report(&a.out, m.name(), &report)?;
        reports.push(report);
    }

    let table = comparison_table(&reports, "hmm");
    std::fs::write(a.out.join("summary.csv"), &table)?;
    write_manifest(&a.out, "eval", a)?;
    print!("{table}");
    Ok(())
}

fn sweep_table(reports: &[EvalReport]) -> String {
    let mut s = String::from("cell_len_m,window,median_m,mean_m,p90_m,estimates\n");
    for r in reports {
        let fmt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.2}"));
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.params.cell_len_m.map_or(String::new(), |v| v.to_string()),
            r.params.window.map_or(String::new(), |v| v.to_string()),
            fmt(r.median()),
            fmt(r.summary.map(|x| x.mean)),
            fmt(r.summary.map(|x| x.p90)),
            r.errors.len()
        ));
    }
    s
}

fn sweep_grid_cmd(a: &SweepGridArgs) -> Result<()> {
    require_file(&a.train, "training trace")?;
    require_file(&a.test, "test trace")?;
    require_dir(&a.out)?;
    let train = load_trace(&a.train)?;
    let test = load_trace(&a.test)?;
    if train.is_empty() {
        return Err(Error::EmptyModel);
    }
    let reports = sweep_grid_len(&train, &test, &a.cell_len, a.window, &a.hmm.setup(&train)?)?;
    for (len, r) in a.cell_len.iter().zip(&reports) {
        write_report(&a.out, &format!("len{len}"), r)?;
    }
    let table = sweep_table(&reports);
    std::fs::write(a.out.join("summary.csv"), &table)?;
    write_manifest(&a.out, "sweep-grid", a)?;
    print!("{table}");
    Ok(())
}

fn sweep_window_cmd(a: &SweepWindowArgs) -> Result<()> {
    require_file(&a.model, "model")?;
    require_file(&a.test, "test trace")?;
    require_dir(&a.out)?;
    let model = HmmModel::load(&a.model)?;
    let test = load_trace(&a.test)?;
    let reports = sweep_window(&model, &test, &a.window)?;
    for (t, r) in a.window.iter().zip(&reports) {
        write_report(&a.out, &format!("window{t}"), r)?;
    }
    let table = sweep_table(&reports);
    std::fs::write(a.out.join("summary.csv"), &table)?;
    write_manifest(&a.out, "sweep-window", a)?;
    print!("{table}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> std::result::Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("cellhmm").chain(args.iter().copied()))
    }

    #[test]
    fn defaults_match_operating_point() {
        let cli = parse(&["train", "--train", "a.csv", "--out", "m.json"]).unwrap();
        let Command::Train(t) = cli.command else { panic!() };
        assert_eq!(t.cell_len, 400.0);
        assert_eq!(t.hmm.connectivity, Connectivity::Four);
        assert_eq!(t.hmm.self_loop, Switch::On);
        assert_eq!(t.hmm.bin_width, 2);
        let cli = parse(&["track", "--test", "a.csv", "--out", "o.csv"]).unwrap();
        let Command::Track(t) = cli.command else { panic!() };
        assert_eq!((t.window, t.k, t.method), (10, 4, Method::Hmm));
    }

    #[test]
    fn list_flags() {
        let cli = parse(&["sweep-window", "--model", "m", "--test", "t", "--out", "o", "--window", "1,5,10"]).unwrap();
        let Command::SweepWindow(s) = cli.command else { panic!() };
        assert_eq!(s.window, vec![1, 5, 10]);
        let cli = parse(&["eval", "--test", "t", "--out", "o", "--method", "hmm,knn"]).unwrap();
        let Command::Eval(e) = cli.command else { panic!() };
        assert_eq!(e.method, vec![Method::Hmm, Method::Knn]);
    }

    #[test]
    fn usage_errors() {
        for bad in [
            &["eval", "--test", "t", "--out", "o", "--method", "gps"][..],
            &["train", "--train", "a", "--out", "m", "--cell-len", "0"],
            &["train", "--train", "a", "--out", "m", "--connectivity", "6"],
            &["track", "--test", "a", "--out", "o", "--window", "0"],
        ] {
            let e = parse(bad).unwrap_err();
            assert_eq!(e.exit_code(), EXIT_VALIDATION, "{bad:?}");
        }
    }

    #[test]
    fn missing_output_dir_is_validation_error() {
        let cli = parse(&["simulate", "--out", "/nonexistent/dir/xyz"]).unwrap();
        let err = run(cli).unwrap_err();
        assert!(err.is_validation());
    }

    #[test]
    fn zero_duration_is_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        let cli = parse(&["simulate", "--out", out, "--train-duration", "0"]).unwrap();
        assert!(run(cli).unwrap_err().is_validation());
    }
}
