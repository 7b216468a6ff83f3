//! Grid search over the implicit design's relation embedding size and its
//! learning rate, scored on source validation F1.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub const IMPLICIT_DIMS: [usize; 4] = [10, 50, 100, 300];
pub const IMPLICIT_LRS: [f64; 3] = [1e-4, 5e-5, 1e-5];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub dim: usize,
    pub lr_rel_embed: f64,
    pub valid_f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridOutcome {
    pub best: GridEntry,
    /// One entry per evaluated configuration, in evaluation order.
    pub log: Vec<GridEntry>,
}

/// `true` when `a` should replace `b` as the incumbent: higher F1, then
/// smaller dimension, then larger learning rate.
fn beats(a: &GridEntry, b: &GridEntry) -> bool {
    if a.valid_f1 != b.valid_f1 {
        return a.valid_f1 > b.valid_f1;
    }
    if a.dim != b.dim {
        return a.dim < b.dim;
    }
    a.lr_rel_embed > b.lr_rel_embed
}

/// Evaluates every `(dim, lr)` pair with `train_and_score` and returns the best.
pub fn grid_search<F, Err>(dims: &[usize], lrs: &[f64], mut train_and_score: F) -> Result<GridOutcome, Err>
where
    F: FnMut(usize, f64) -> Result<f64, Err>,
{
    let mut log = Vec::with_capacity(dims.len() * lrs.len());
    for &dim in dims {
        for &lr in lrs {
            let valid_f1 = train_and_score(dim, lr)?;
            log.push(GridEntry { dim, lr_rel_embed: lr, valid_f1 });
        }
    }
    let mut best = *log.first().expect("grid is non-empty");
    for e in &log[1..] {
        if beats(e, &best) {
            best = *e;
        }
    }
    Ok(GridOutcome { best, log })
}

/// The 4 × 3 grid used for the implicit design.
pub fn grid_search_implicit<F, Err>(train_and_score: F) -> Result<GridOutcome, Err>
where
    F: FnMut(usize, f64) -> Result<f64, Err>,
{
    grid_search(&IMPLICIT_DIMS, &IMPLICIT_LRS, train_and_score)
}
