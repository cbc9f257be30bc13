//! Paired DeLong comparison of two correlated AUROCs.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::metrics::{auroc, midranks};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeLong {
    pub auc_a: f64,
    pub auc_b: f64,
    pub z: f64,
    pub p_value: f64,
}

/// Placement values of positives (against negatives) and of negatives (against positives).
fn placements(scores: &[f64], labels: &[bool]) -> (Vec<f64>, Vec<f64>) {
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, l)| **l).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, l)| !**l).map(|(s, _)| *s).collect();
    let (m, n) = (pos.len() as f64, neg.len() as f64);
    let all = midranks(scores);
    let rp = midranks(&pos);
    let rn = midranks(&neg);
    let (mut v10, mut v01) = (Vec::new(), Vec::new());
    let (mut ip, mut ineg) = (0, 0);
    for (k, l) in labels.iter().enumerate() {
        if *l {
            v10.push((all[k] - rp[ip]) / n);
            ip += 1;
        } else {
            v01.push(1.0 - (all[k] - rn[ineg]) / m);
            ineg += 1;
        }
    }
    (v10, v01)
}

fn cov(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0)
}

pub fn delong_test(scores_a: &[f64], scores_b: &[f64], labels: &[bool]) -> Result<DeLong> {
    if scores_a.len() != labels.len() || scores_b.len() != labels.len() {
        return Err(Error::Data("score and label vectors differ in length".into()));
    }
    let m = labels.iter().filter(|l| **l).count();
    let n = labels.len() - m;
    if m < 2 || n < 2 {
        return Err(Error::Data("DeLong test needs at least two stays of each class".into()));
    }
    let (a10, a01) = placements(scores_a, labels);
    let (b10, b01) = placements(scores_b, labels);
    let auc_a = auroc(scores_a, labels).expect("both classes present");
    let auc_b = auroc(scores_b, labels).expect("both classes present");
    let var_10 = cov(&a10, &a10) + cov(&b10, &b10) - 2.0 * cov(&a10, &b10);
    let var_01 = cov(&a01, &a01) + cov(&b01, &b01) - 2.0 * cov(&a01, &b01);
    let var = var_10 / m as f64 + var_01 / n as f64;
    if var <= 0.0 {
        return Ok(DeLong {
            auc_a,
            auc_b,
            z: 0.0,
            p_value: 1.0,
        });
    }
    let z = (auc_a - auc_b) / var.sqrt();
    let p = 2.0 * (1.0 - Normal::standard().cdf(z.abs()));
    Ok(DeLong {
        auc_a,
        auc_b,
        z,
        p_value: p.clamp(0.0, 1.0),
    })
}
