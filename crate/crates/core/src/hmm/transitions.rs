use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::GridSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    #[serde(rename = "4")]
    Four,
    #[serde(rename = "8")]
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(isize, isize)] {
        const FOUR: [(isize, isize); 4] = [(0, -1), (-1, 0), (1, 0), (0, 1)];
        const EIGHT: [(isize, isize); 8] =
            [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];
        match self {
            Connectivity::Four => &FOUR,
            Connectivity::Eight => &EIGHT,
        }
    }
}

impl std::str::FromStr for Connectivity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "4" => Ok(Connectivity::Four),
            "8" => Ok(Connectivity::Eight),
            _ => Err(Error::Invalid(format!("connectivity must be 4 or 8, got {s:?}"))),
        }
    }
}

/// Grid cells as HMM states, plus the adjacency rule between them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateSpace {
    pub spec: GridSpec,
    pub connectivity: Connectivity,
    pub self_loop: bool,
}

impl StateSpace {
    pub fn new(spec: GridSpec, connectivity: Connectivity, self_loop: bool) -> Self {
        StateSpace {
            spec,
            connectivity,
            self_loop,
        }
    }

    pub fn n_states(&self) -> usize {
        self.spec.n_cells()
    }

    /// Grid neighbours of flat state `i`, in ascending id order.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let (cols, rows) = (self.spec.n_cols() as isize, self.spec.n_rows() as isize);
        let c = self.spec.cell(i);
        let (col, row) = (c.col as isize, c.row as isize);
        self.connectivity
            .offsets()
            .iter()
            .map(|&(dc, dr)| (col + dc, row + dr))
            .filter(|&(x, y)| (0..cols).contains(&x) && (0..rows).contains(&y))
            .map(|(x, y)| (y * cols + x) as usize)
            .collect()
    }
}

/// Row-sparse transition matrix with uniform mass over each state's
/// reachable set.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel {
    rows: Vec<Vec<(usize, f64)>>,
    incoming_log: Vec<Vec<(usize, f64)>>,
}

impl TransitionModel {
    pub fn build(states: &StateSpace) -> Self {
        let n = states.n_states();
        let rows = (0..n)
            .map(|i| {
                let mut targets = states.neighbors(i);
                if states.self_loop || targets.is_empty() {
                    targets.push(i);
                    targets.sort_unstable();
                }
                let p = 1.0 / targets.len() as f64;
                targets.into_iter().map(|j| (j, p)).collect()
            })
            .collect();
        Self::from_rows(rows)
    }

    /// Wraps explicit rows; each row must list `(target, probability)` pairs.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut incoming_log = vec![Vec::new(); rows.len()];
        for (i, row) in rows.iter().enumerate() {
            for &(j, p) in row {
                if p > 0.0 {
                    incoming_log[j].push((i, p.ln()));
                }
            }
        }
        TransitionModel { rows, incoming_log }
    }

    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn prob(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .iter()
            .find(|&&(k, _)| k == j)
            .map_or(0.0, |&(_, p)| p)
    }

    /// Predecessor lists `(i, ln a_ij)` per target state, ascending in `i`.
    pub fn incoming_log(&self) -> &[Vec<(usize, f64)>] {
        &self.incoming_log
    }

    /// Row vector times matrix: `(v A)_j = sum_i v_i a_ij`.
    pub fn left_mul(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, p) in row {
                out[j] += v[i] * p;
            }
        }
    }
}

pub const STEADY_STATE_TOL: f64 = 1e-12;
pub const STEADY_STATE_MAX_ITER: usize = 1_000_000;

/// Stationary distribution `pi = pi A` by power iteration from the uniform vector.
///
/// Iterates the lazy chain `(I + A) / 2`, which has the same fixed point but
/// is aperiodic; the plain chain oscillates on bipartite grids without
/// self-loops.
pub fn steady_state(a: &TransitionModel, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = a.n_states();
    if n == 0 {
        return Err(Error::Invalid("transition matrix has no states".into()));
    }
    let mut pi = vec![1.0 / n as f64; n];
    let mut pa = vec![0.0; n];
    for _ in 0..max_iter {
        a.left_mul(&pi, &mut pa);
        let mut change = 0.0;
        let mut sum = 0.0;
        for (p, q) in pi.iter_mut().zip(&pa) {
            let lazy = 0.5 * (*p + q);
            change += (lazy - *p).abs();
            *p = lazy;
            sum += lazy;
        }
        pi.iter_mut().for_each(|p| *p /= sum);
        if change < tol {
            return Ok(pi);
        }
    }
    let residual = stationarity_residual(a, &pi);
    Err(Error::NoConvergence { last: pi, residual })
}

/// `|| pi A - pi ||_1`.
pub fn stationarity_residual(a: &TransitionModel, pi: &[f64]) -> f64 {
    let mut pa = vec![0.0; pi.len()];
    a.left_mul(pi, &mut pa);
    pa.iter().zip(pi).map(|(x, y)| (x - y).abs()).sum()
}
