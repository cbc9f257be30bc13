//! Operating-point selection.

use crate::error::{Error, Result};

pub const DEFAULT_SENSITIVITY: f64 = 0.80;

/// The largest score threshold whose sensitivity (scores at or above it count
/// as positive) reaches `target`.
pub fn select_threshold(scores: &[f64], labels: &[bool], target: f64) -> Result<f64> {
    let n_pos = labels.iter().filter(|l| **l).count();
    if n_pos == 0 {
        return Err(Error::Data("threshold selection needs at least one positive".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut tp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            tp += labels[order[i]] as usize;
            i += 1;
        }
        if tp as f64 / n_pos as f64 >= target {
            return Ok(s);
        }
    }
    // Only reachable for targets above 1.
    Err(Error::Data(format!("no threshold reaches sensitivity {target}")))
}
