//! Synthetic GSM world: towers under log-distance path loss with Gaussian
//! shadowing, 1 Hz handset trajectories, and war-driving traces in the scan
//! CSV schema.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::baselines::{Provenance, TowerDb};
use crate::error::{self, Error, Result};
use crate::geo::{haversine, BoundingBox, GeoPoint, PlanarPoint};
use crate::ingest::{ScanRecord, RSSI_MAX_DBM, RSSI_MIN_DBM};

const WORLD_VERSION: u32 = 1;
pub const DEFAULT_START_TS: i64 = 1_273_581_000;
pub const MAX_NEIGHBORS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLoss {
    /// Received power at the reference distance.
    pub p0_dbm: f64,
    pub d0_m: f64,
    pub exponent: f64,
    pub shadowing_sigma_db: f64,
}

impl Default for PathLoss {
    fn default() -> Self {
        PathLoss {
            p0_dbm: -55.0,
            d0_m: 100.0,
            exponent: 3.0,
            shadowing_sigma_db: 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTower {
    pub id: String,
    pub pos: GeoPoint,
    /// Per-tower override of the reference power `p0_dbm`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tx_ref_dbm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimWorld {
    pub version: u32,
    pub bbox: BoundingBox,
    pub towers: Vec<SimTower>,
    pub pathloss: PathLoss,
    /// Neighbour towers weaker than this are not reported in a scan.
    pub neighbor_floor_dbm: i32,
    pub v_max_mps: f64,
    pub seed: u64,
}

impl SimWorld {
    /// Desk-scale rural world: 2,000 m x 1,000 m with 12 towers on a
    /// jittered 4x3 lattice.
    pub fn default_world(seed: u64) -> Self {
        let origin = GeoPoint { lat: 30.0700, lon: 31.0100 };
        let bbox = BoundingBox::new(origin, 2000.0, 1000.0).expect("static extent");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (cols, rows) = (4, 3);
        let (dx, dy) = (bbox.width_m / cols as f64, bbox.height_m / rows as f64);
        let frame = bbox.frame();
        let mut towers = Vec::with_capacity(cols * rows);
        for r in 0..rows {
            for c in 0..cols {
                let x = (c as f64 + 0.5 + rng.random_range(-0.3..0.3)) * dx;
                let y = (r as f64 + 0.5 + rng.random_range(-0.3..0.3)) * dy;
                towers.push(SimTower {
                    id: format!("{}:101", 4501 + towers.len()),
                    pos: frame.unproject(PlanarPoint::new(x, y)),
                    tx_ref_dbm: None,
                });
            }
        }
        SimWorld {
            version: WORLD_VERSION,
            bbox,
            towers,
            pathloss: PathLoss::default(),
            neighbor_floor_dbm: -78,
            v_max_mps: 15.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pl = &self.pathloss;
        if self.towers.is_empty() {
            return Err(Error::Invalid("world needs at least one tower".into()));
        }
        if !(pl.d0_m > 0.0 && pl.exponent > 0.0 && pl.shadowing_sigma_db >= 0.0) {
            return Err(Error::Invalid(format!("invalid path-loss parameters {pl:?}")));
        }
        if !(self.v_max_mps > 0.0) {
            return Err(Error::Invalid("v_max must be positive".into()));
        }
        Ok(())
    }

    pub fn tower_db(&self) -> TowerDb {
        let mut db = TowerDb::default();
        for t in &self.towers {
            db.insert(&t.id, t.pos, Provenance::Given);
        }
        db
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::io::read_to_string(error::open(path)?)?;
        let probe: crate::ingest::VersionProbe = serde_json::from_str(&text)?;
        if probe.version != WORLD_VERSION {
            return Err(Error::Version {
                found: probe.version,
                expected: WORLD_VERSION,
            });
        }
        let world: SimWorld = serde_json::from_str(&text)?;
        world.validate()?;
        Ok(world)
    }
}

/// Mean received power from `tower` at `p`, before shadowing.
pub fn mean_rssi(world: &SimWorld, tower: &SimTower, p: GeoPoint) -> f64 {
    let pl = &world.pathloss;
    let d = haversine(tower.pos, p).max(pl.d0_m);
    tower.tx_ref_dbm.unwrap_or(pl.p0_dbm) - 10.0 * pl.exponent * (d / pl.d0_m).log10()
}

/// One shadowed RSSI sample, rounded to whole dBm and clamped to the reportable range.
pub fn rssi_at<R: Rng + ?Sized>(world: &SimWorld, tower: &SimTower, p: GeoPoint, rng: &mut R) -> i32 {
    let mut v = mean_rssi(world, tower, p);
    let sigma = world.pathloss.shadowing_sigma_db;
    if sigma > 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        v += sigma * z;
    }
    (v.round() as i32).clamp(RSSI_MIN_DBM, RSSI_MAX_DBM)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mobility {
    /// Straight legs between uniformly drawn waypoints.
    RandomWaypoint,
    /// Manhattan street lattice with turns at intersections.
    GridWalk,
}

/// Street spacing for [`Mobility::GridWalk`].
pub const STREET_SPACING_M: f64 = 200.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub points: Vec<(i64, GeoPoint)>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Generates `duration_s` positions at 1 s spacing, inside the world box
/// and never faster than `v_max_mps`.
pub fn gen_trajectory(world: &SimWorld, duration_s: usize, mobility: Mobility, seed: u64) -> Result<Trajectory> {
    if duration_s == 0 {
        return Err(Error::Invalid("trajectory duration must be at least 1 s".into()));
    }
    world.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let planar = match mobility {
        Mobility::RandomWaypoint => random_waypoint(world, duration_s, &mut rng),
        Mobility::GridWalk => grid_walk(world, duration_s, &mut rng),
    };
    let frame = world.bbox.frame();
    Ok(Trajectory {
        points: planar
            .into_iter()
            .enumerate()
            .map(|(i, p)| (DEFAULT_START_TS + i as i64, frame.unproject(p)))
            .collect(),
    })
}

fn speed(world: &SimWorld, rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(0.3 * world.v_max_mps..=world.v_max_mps)
}

fn random_point(world: &SimWorld, rng: &mut ChaCha8Rng) -> PlanarPoint {
    PlanarPoint::new(
        rng.random_range(0.0..world.bbox.width_m),
        rng.random_range(0.0..world.bbox.height_m),
    )
}

/// Moves `from` toward `to` by at most `step`; returns the new point and
/// whether `to` was reached.
fn advance(from: PlanarPoint, to: PlanarPoint, step: f64) -> (PlanarPoint, bool) {
    let d = from.distance(&to);
    if d <= step {
        return (to, true);
    }
    let f = step / d;
    (PlanarPoint::new(from.x + f * (to.x - from.x), from.y + f * (to.y - from.y)), false)
}

fn random_waypoint(world: &SimWorld, n: usize, rng: &mut ChaCha8Rng) -> Vec<PlanarPoint> {
    let mut pos = random_point(world, rng);
    let mut target = random_point(world, rng);
    let mut v = speed(world, rng);
    let mut out = Vec::with_capacity(n);
    out.push(pos);
    while out.len() < n {
        let (next, arrived) = advance(pos, target, v);
        pos = next;
        if arrived {
            target = random_point(world, rng);
            v = speed(world, rng);
        }
        out.push(pos);
    }
    out
}

fn grid_walk(world: &SimWorld, n: usize, rng: &mut ChaCha8Rng) -> Vec<PlanarPoint> {
    let nx = (world.bbox.width_m / STREET_SPACING_M).floor() as i64;
    let ny = (world.bbox.height_m / STREET_SPACING_M).floor() as i64;
    let at = |i: i64, j: i64| PlanarPoint::new(i as f64 * STREET_SPACING_M, j as f64 * STREET_SPACING_M);
    const DIRS: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

    let mut node = (rng.random_range(0..=nx), rng.random_range(0..=ny));
    let mut heading: Option<(i64, i64)> = None;
    let choose = |node: (i64, i64), heading: Option<(i64, i64)>, rng: &mut ChaCha8Rng| {
        let valid: Vec<(i64, i64)> = DIRS
            .iter()
            .copied()
            .filter(|&(dx, dy)| (0..=nx).contains(&(node.0 + dx)) && (0..=ny).contains(&(node.1 + dy)))
            .collect();
        let forward: Vec<(i64, i64)> = valid
            .iter()
            .copied()
            .filter(|&d| heading.is_none_or(|h| d != (-h.0, -h.1)))
            .collect();
        let pool = if forward.is_empty() { valid } else { forward };
        if pool.is_empty() {
            (0, 0)
        } else {
            pool[rng.random_range(0..pool.len())]
        }
    };

    let mut pos = at(node.0, node.1);
    let mut dir = choose(node, heading, rng);
    let mut v = speed(world, rng);
    let mut out = Vec::with_capacity(n);
    out.push(pos);
    while out.len() < n {
        let mut budget = v;
        while budget > 1e-9 && dir != (0, 0) {
            let next = (node.0 + dir.0, node.1 + dir.1);
            let dist = pos.distance(&at(next.0, next.1));
            let (p, arrived) = advance(pos, at(next.0, next.1), budget);
            pos = p;
            if !arrived {
                break;
            }
            budget -= dist;
            node = next;
            heading = Some(dir);
            dir = choose(node, heading, rng);
            v = speed(world, rng);
        }
        out.push(pos);
    }
    out
}

/// Samples a war-driving trace: per timestamp the strongest tower is serving
/// and up to six next-strongest audible towers follow as neighbours.
pub fn gen_trace(world: &SimWorld, trajectory: &Trajectory, seed: u64) -> Result<Vec<ScanRecord>> {
    world.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(trajectory.len() * (1 + MAX_NEIGHBORS));
    let mut scan: Vec<(i32, usize)> = Vec::with_capacity(world.towers.len());
    for &(ts, pos) in &trajectory.points {
        scan.clear();
        scan.extend(
            world
                .towers
                .iter()
                .enumerate()
                .map(|(i, t)| (rssi_at(world, t, pos, &mut rng), i)),
        );
        // strongest first, lower tower index on ties
        scan.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        for (rank, &(rssi, i)) in scan.iter().enumerate() {
            let serving = rank == 0;
            if !serving && (rank > MAX_NEIGHBORS || rssi < world.neighbor_floor_dbm) {
                break;
            }
            out.push(ScanRecord {
                timestamp: ts,
                tower_id: world.towers[i].id.clone(),
                rssi_dbm: rssi,
                pos,
                serving,
            });
        }
    }
    Ok(out)
}

/// Mean number of towers reported per scan.
pub fn towers_per_scan(records: &[ScanRecord]) -> f64 {
    let mut scans = 0usize;
    let mut last = None;
    for r in records {
        if last != Some(r.timestamp) {
            scans += 1;
            last = Some(r.timestamp);
        }
    }
    if scans == 0 {
        0.0
    } else {
        records.len() as f64 / scans as f64
    }
}

/// Derives independent stream seeds from one experiment seed.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
