//! Grid hidden Markov model: states are grid cells, symbols are
//! `(serving tower, RSSI bin)` pairs, transitions are uniform over each
//! cell's neighbourhood, and the prior is the chain's stationary
//! distribution.

mod emissions;
mod track;
mod transitions;
pub mod viterbi;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use emissions::{EmissionModel, StateHistogram, DEFAULT_ALPHA};
pub use track::{track, TrackEstimate, Tracker};
pub use transitions::{
    stationarity_residual, steady_state, Connectivity, StateSpace, TransitionModel,
    STEADY_STATE_MAX_ITER, STEADY_STATE_TOL,
};
pub use viterbi::Decoded;

use crate::error::{self, Error, Result};
use crate::geo::{CellIndex, GeoPoint, GridSpec};
use crate::ingest::{FingerprintDb, Observation, VersionProbe};

const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HmmConfig {
    pub connectivity: Connectivity,
    pub self_loop: bool,
    pub alpha: f64,
}

impl Default for HmmConfig {
    fn default() -> Self {
        HmmConfig {
            connectivity: Connectivity::Four,
            self_loop: true,
            alpha: DEFAULT_ALPHA,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmmModel {
    states: StateSpace,
    transitions: TransitionModel,
    emissions: EmissionModel,
    initial: Vec<f64>,
    log_initial: Vec<f64>,
    bin_width: u32,
}

impl HmmModel {
    /// Estimates all parameters from a fingerprint database, using the
    /// stationary distribution of the transition chain as the prior.
    pub fn build(db: &FingerprintDb, config: HmmConfig) -> Result<Self> {
        let states = StateSpace::new(*db.spec(), config.connectivity, config.self_loop);
        let transitions = TransitionModel::build(&states);
        let emissions = EmissionModel::build(db, config.alpha)?;
        let initial = steady_state(&transitions, STEADY_STATE_TOL, STEADY_STATE_MAX_ITER)?;
        Self::from_parts(states, transitions, emissions, initial, db.bin_width())
    }

    /// Assembles a model from explicit components, e.g. with a known prior.
    pub fn from_parts(
        states: StateSpace,
        transitions: TransitionModel,
        emissions: EmissionModel,
        initial: Vec<f64>,
        bin_width: u32,
    ) -> Result<Self> {
        let n = states.n_states();
        if transitions.n_states() != n || emissions.n_states() != n || initial.len() != n {
            return Err(Error::Invalid(format!(
                "dimension mismatch: {n} states, A {}, B {}, pi {}",
                transitions.n_states(),
                emissions.n_states(),
                initial.len()
            )));
        }
        let sum: f64 = initial.iter().sum();
        if initial.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid("initial distribution is not a probability vector".into()));
        }
        if bin_width == 0 {
            return Err(Error::Invalid("bin width must be at least 1".into()));
        }
        let log_initial = initial.iter().map(|p| p.ln()).collect();
        Ok(HmmModel {
            states,
            transitions,
            emissions,
            initial,
            log_initial,
            bin_width,
        })
    }

    pub fn states(&self) -> &StateSpace {
        &self.states
    }

    pub fn spec(&self) -> &GridSpec {
        &self.states.spec
    }

    pub fn transitions(&self) -> &TransitionModel {
        &self.transitions
    }

    pub fn emissions(&self) -> &EmissionModel {
        &self.emissions
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn bin_width(&self) -> u32 {
        self.bin_width
    }

    pub fn n_states(&self) -> usize {
        self.states.n_states()
    }

    pub fn symbol(&self, obs: &Observation) -> usize {
        self.emissions.symbol(obs)
    }

    /// Quantizes a raw serving reading into this model's symbol id.
    pub fn symbol_for(&self, tower_id: &str, rssi_dbm: i32) -> usize {
        self.symbol(&Observation {
            tower_id: tower_id.to_string(),
            rssi_bin: crate::ingest::quantize(rssi_dbm, self.bin_width),
        })
    }

    /// Decodes a sequence of symbol ids into flat state ids.
    pub fn decode_symbols(&self, symbols: &[usize]) -> Result<Decoded> {
        let n = self.n_states();
        let lattice: Vec<Vec<f64>> = symbols
            .iter()
            .map(|&k| (0..n).map(|s| self.emissions.log_prob(s, k)).collect())
            .collect();
        viterbi::viterbi(&self.log_initial, self.transitions.incoming_log(), &lattice)
    }

    /// Most probable cell sequence for `obs`, with its joint log-probability.
    pub fn viterbi(&self, obs: &[Observation]) -> Result<(Vec<CellIndex>, f64)> {
        let symbols: Vec<usize> = obs.iter().map(|o| self.symbol(o)).collect();
        let d = self.decode_symbols(&symbols)?;
        let spec = self.spec();
        Ok((d.path.into_iter().map(|s| spec.cell(s)).collect(), d.log_prob))
    }

    /// Single-observation posterior over states, `p(s|o) ∝ pi(s) b_s(o)`.
    pub fn posterior(&self, symbol: usize) -> Vec<f64> {
        let mut post: Vec<f64> = (0..self.n_states())
            .map(|s| self.initial[s] * self.emissions.prob(s, symbol))
            .collect();
        let z: f64 = post.iter().sum();
        if z > 0.0 {
            post.iter_mut().for_each(|p| *p /= z);
        } else {
            post.clone_from(&self.initial);
        }
        post
    }

    pub fn cell_center(&self, flat: usize) -> GeoPoint {
        let spec = self.spec();
        spec.unproject(
            spec.cell_center_planar(spec.cell(flat))
                .expect("flat state id within grid"),
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ModelFile {
            version: MODEL_VERSION,
            spec: *self.spec(),
            connectivity: self.states.connectivity,
            self_loop: self.states.self_loop,
            alpha: self.emissions.alpha(),
            bin_width: self.bin_width,
            vocab: self.emissions.vocab().to_vec(),
            emissions: self
                .emissions
                .histograms()
                .iter()
                .enumerate()
                .filter(|(_, h)| h.total > 0)
                .map(|(state, h)| StateTable {
                    state,
                    counts: h.counts.iter().map(|(&k, &c)| (k, c)).collect(),
                })
                .collect(),
            initial: self.initial.clone(),
        };
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(&mut w, &file)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::io::read_to_string(error::open(path)?)?;
        let probe: VersionProbe = serde_json::from_str(&text)?;
        if probe.version != MODEL_VERSION {
            return Err(Error::Version {
                found: probe.version,
                expected: MODEL_VERSION,
            });
        }
        let f: ModelFile = serde_json::from_str(&text)?;
        let states = StateSpace::new(f.spec, f.connectivity, f.self_loop);
        let mut hists = vec![StateHistogram::default(); states.n_states()];
        for t in f.emissions {
            let h = hists
                .get_mut(t.state)
                .ok_or_else(|| Error::Format(format!("emission table for state {} out of range", t.state)))?;
            h.counts = t.counts.into_iter().collect();
            h.total = h.counts.values().sum();
        }
        let emissions = EmissionModel::from_parts(f.alpha, f.vocab, hists)?;
        Self::from_parts(states, TransitionModel::build(&states), emissions, f.initial, f.bin_width)
    }
}

/// On-disk model. Transitions are stored by their generating parameters
/// (grid, connectivity, self-loop flag) and rebuilt on load.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    spec: GridSpec,
    connectivity: Connectivity,
    self_loop: bool,
    alpha: f64,
    bin_width: u32,
    vocab: Vec<Observation>,
    emissions: Vec<StateTable>,
    initial: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct StateTable {
    state: usize,
    counts: Vec<(usize, u64)>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{BoundingBox, PlanarPoint};
    use crate::ingest::ScanRecord;

    pub(crate) fn line_model() -> (HmmModel, FingerprintDb) {
        // 3x1 grid of 100 m cells; tower A loud in the west, B loud in the east.
        let origin = GeoPoint::new(30.0, 31.0).unwrap();
        let spec = GridSpec::new(BoundingBox::new(origin, 300.0, 100.0).unwrap(), 100.0).unwrap();
        let mut recs = Vec::new();
        let mut ts = 0;
        for (x, tower, rssi, n) in [
            (50.0, "A", -60, 6),
            (150.0, "A", -80, 3),
            (150.0, "B", -80, 3),
            (250.0, "B", -60, 6),
        ] {
            for _ in 0..n {
                recs.push(ScanRecord {
                    timestamp: ts,
                    tower_id: tower.into(),
                    rssi_dbm: rssi,
                    pos: spec.unproject(PlanarPoint::new(x, 50.0)),
                    serving: true,
                });
                ts += 1;
            }
        }
        let db = FingerprintDb::build(&recs, spec, 2).unwrap();
        (HmmModel::build(&db, HmmConfig::default()).unwrap(), db)
    }

    fn o(t: &str, rssi: i32) -> Observation {
        Observation {
            tower_id: t.into(),
            rssi_bin: crate::ingest::quantize(rssi, 2),
        }
    }

    #[test]
    fn build_shapes() {
        let (m, db) = line_model();
        assert_eq!(m.n_states(), 3);
        assert_eq!(m.emissions().n_symbols(), db.vocab().len() + 1);
        let want = [2.0 / 7.0, 3.0 / 7.0, 2.0 / 7.0];
        for (p, w) in m.initial().iter().zip(want) {
            assert!((p - w).abs() < 1e-10);
        }
    }

    #[test]
    fn decodes_west_to_east() {
        let (m, _) = line_model();
        let obs = [o("A", -60), o("A", -60), o("A", -80), o("B", -80), o("B", -60)];
        let (path, lp) = m.viterbi(&obs).unwrap();
        let cols: Vec<usize> = path.iter().map(|c| c.col).collect();
        assert_eq!(cols, vec![0, 0, 1, 1, 2]);
        assert!(lp.is_finite() && lp < 0.0);
    }

    #[test]
    fn unknown_observation_still_decodes() {
        let (m, _) = line_model();
        let (path, lp) = m.viterbi(&[o("Z", -90)]).unwrap();
        assert_eq!(path.len(), 1);
        assert!(lp.is_finite());
    }

    #[test]
    fn empty_window_is_an_error() {
        let (m, _) = line_model();
        assert!(matches!(m.viterbi(&[]), Err(Error::EmptyObservations)));
    }

    #[test]
    fn posterior_normalized() {
        let (m, _) = line_model();
        let p = m.posterior(m.symbol(&o("A", -60)));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[0] > p[1] && p[1] > p[2]);
    }

    #[test]
    fn save_load_round_trip() {
        let (m, _) = line_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        m.save(&path).unwrap();
        assert_eq!(HmmModel::load(&path).unwrap(), m);
    }

    #[test]
    fn load_errors() {
        assert!(matches!(HmmModel::load(Path::new("")), Err(Error::NotFound(_))));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        std::fs::write(&path, r#"{"version": 7}"#).unwrap();
        assert!(matches!(HmmModel::load(&path), Err(Error::Version { found: 7, .. })));
    }
}
