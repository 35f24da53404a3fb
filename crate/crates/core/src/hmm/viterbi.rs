//! Log-domain Viterbi decoding over an arbitrary (possibly sparse) state graph.

use crate::error::{Error, Result};

/// Most probable state sequence and its joint log-probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub path: Vec<usize>,
    pub log_prob: f64,
}

/// Decodes the most probable path.
///
/// `incoming[j]` lists `(i, ln a_ij)` for every predecessor `i` of state `j`,
/// sorted by ascending `i`. `log_emit[t][j]` is `ln b_j(O_t)`.
///
/// Ties are broken toward the lowest state id at every argmax, so among
/// equally probable paths the one returned is smallest when compared from
/// the last step backwards.
pub fn viterbi(
    log_init: &[f64],
    incoming: &[Vec<(usize, f64)>],
    log_emit: &[Vec<f64>],
) -> Result<Decoded> {
    let n = log_init.len();
    let Some(first) = log_emit.first() else {
        return Err(Error::EmptyObservations);
    };
    if n == 0 || incoming.len() != n || log_emit.iter().any(|row| row.len() != n) {
        return Err(Error::Invalid(format!(
            "dimension mismatch: {n} states, {} incoming lists, emission rows of width {}",
            incoming.len(),
            first.len()
        )));
    }

    let mut delta: Vec<f64> = log_init.iter().zip(first).map(|(p, b)| p + b).collect();
    let mut next = vec![0.0; n];
    let mut back: Vec<Vec<u32>> = Vec::with_capacity(log_emit.len() - 1);

    for emit in &log_emit[1..] {
        let mut ptr = vec![0u32; n];
        for (j, preds) in incoming.iter().enumerate() {
            let mut best = f64::NEG_INFINITY;
            let mut arg = preds.first().map_or(0, |&(i, _)| i);
            for &(i, log_a) in preds {
                let score = delta[i] + log_a;
                if score > best {
                    best = score;
                    arg = i;
                }
            }
            next[j] = best + emit[j];
            ptr[j] = arg as u32;
        }
        std::mem::swap(&mut delta, &mut next);
        back.push(ptr);
    }

    let mut last = 0;
    for (j, &d) in delta.iter().enumerate() {
        if d > delta[last] {
            last = j;
        }
    }
    let log_prob = delta[last];
    let mut path = vec![last; log_emit.len()];
    for (t, ptr) in back.iter().enumerate().rev() {
        path[t] = ptr[path[t + 1]] as usize;
    }
    Ok(Decoded { path, log_prob })
}

/// Builds predecessor lists from a dense row-stochastic matrix, skipping zero entries.
pub fn incoming_from_dense(a: &[Vec<f64>]) -> Vec<Vec<(usize, f64)>> {
    let n = a.len();
    (0..n)
        .map(|j| {
            (0..n)
                .filter(|&i| a[i][j] > 0.0)
                .map(|i| (i, a[i][j].ln()))
                .collect()
        })
        .collect()
}
