//! Missing-value strategy: relationships, indicators, sample-and-hold,
//! training-set fill, then z-scoring.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::harmonize::{vars, Cell, HourlyGrid, Mark, Stage, GRID_HOURS};
use crate::ingest::VarKind;

/// Order in which the stages must be applied.
pub const CANONICAL_STAGES: [Stage; 7] = [
    Stage::Binned,
    Stage::TruncatePad,
    Stage::Relationships,
    Stage::Indicators,
    Stage::SampleAndHold,
    Stage::Fill,
    Stage::Normalize,
];

pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImputeConfig {
    pub hct_per_hb: f64,
    pub direct_bili_ratio: f64,
    /// RASS score -> GCS total.
    pub rass_to_gcs: BTreeMap<i32, f64>,
    pub hold_medication_h: usize,
    pub hold_other_h: usize,
}

impl Default for ImputeConfig {
    fn default() -> Self {
        let rass_to_gcs = [
            (4, 15.0),
            (3, 15.0),
            (2, 15.0),
            (1, 15.0),
            (0, 15.0),
            (-1, 14.0),
            (-2, 12.0),
            (-3, 10.0),
            (-4, 6.0),
            (-5, 3.0),
        ]
        .into_iter()
        .collect();
        ImputeConfig {
            hct_per_hb: 3.0,
            direct_bili_ratio: 0.3,
            rass_to_gcs,
            hold_medication_h: 24,
            hold_other_h: 12,
        }
    }
}

/// Hex sha256 over the stage names, in order.
pub fn stage_checksum(stages: &[Stage]) -> String {
    let mut h = Sha256::new();
    for s in stages {
        h.update(format!("{s:?};").as_bytes());
    }
    hex::encode(h.finalize())
}

/// Check that `stages` is a prefix of the canonical order.
pub fn verify_stage_order(stages: &[Stage]) -> Result<()> {
    let n = stages.len();
    if n > CANONICAL_STAGES.len() || stage_checksum(stages) != stage_checksum(&CANONICAL_STAGES[..n]) {
        return Err(Error::Data(format!("grid stages out of order: {stages:?}")));
    }
    Ok(())
}

fn push_stage(g: &mut HourlyGrid, stage: Stage) -> Result<()> {
    g.stages.push(stage);
    verify_stage_order(&g.stages).inspect_err(|_| {
        g.stages.pop();
    })
}

/// Shape a grid to exactly 24 rows: drop later rows, pad with missing cells.
pub fn truncate_pad(mut g: HourlyGrid) -> HourlyGrid {
    let width = g.columns.len();
    g.rows.truncate(GRID_HOURS);
    while g.rows.len() < GRID_HOURS {
        g.rows.push(vec![Cell::MISSING; width]);
    }
    if let Some(ind) = g.indicators.as_mut() {
        ind.truncate(GRID_HOURS);
        while ind.len() < GRID_HOURS {
            ind.push(vec![0; width]);
        }
    }
    if !g.stages.contains(&Stage::TruncatePad) {
        g.stages.push(Stage::TruncatePad);
    }
    g
}

fn fill_if_missing(g: &mut HourlyGrid, h: usize, name: &str, v: Option<f64>) {
    let Some(v) = v.filter(|v| v.is_finite()) else {
        return;
    };
    if g.get(h, name).is_some_and(|c| c.is_missing()) {
        g.set(h, name, Cell::imputed(v));
    }
}

/// Fill cells that follow from other variables in the same hour.
pub fn impute_relationships(mut g: HourlyGrid, cfg: &ImputeConfig) -> Result<HourlyGrid> {
    push_stage(&mut g, Stage::Relationships)?;
    for h in 0..g.n_rows() {
        let v = |g: &HourlyGrid, n: &str| g.value(h, n);

        if let (Some(e), Some(vb), Some(m)) = (v(&g, vars::GCS_EYE), v(&g, vars::GCS_VERBAL), v(&g, vars::GCS_MOTOR)) {
            fill_if_missing(&mut g, h, vars::GCS_TOTAL, Some(e + vb + m));
        }
        if let Some(r) = v(&g, vars::RASS) {
            let gcs = cfg.rass_to_gcs.get(&(r.round() as i32)).copied();
            fill_if_missing(&mut g, h, vars::GCS_TOTAL, gcs);
        }

        match (v(&g, vars::HEMOGLOBIN), v(&g, vars::HEMATOCRIT)) {
            (Some(hb), None) => fill_if_missing(&mut g, h, vars::HEMATOCRIT, Some(cfg.hct_per_hb * hb)),
            (None, Some(hct)) => fill_if_missing(&mut g, h, vars::HEMOGLOBIN, Some(hct / cfg.hct_per_hb)),
            _ => {}
        }
        match (v(&g, vars::BILI_TOTAL), v(&g, vars::BILI_DIRECT)) {
            (Some(t), None) => fill_if_missing(&mut g, h, vars::BILI_DIRECT, Some(cfg.direct_bili_ratio * t)),
            (None, Some(d)) => fill_if_missing(&mut g, h, vars::BILI_TOTAL, Some(d / cfg.direct_bili_ratio)),
            _ => {}
        }
        match (v(&g, vars::SBP), v(&g, vars::DBP), v(&g, vars::MAP)) {
            (Some(s), Some(d), None) => fill_if_missing(&mut g, h, vars::MAP, Some((s + 2.0 * d) / 3.0)),
            (Some(s), None, Some(m)) => fill_if_missing(&mut g, h, vars::DBP, Some((3.0 * m - s) / 2.0)),
            (None, Some(d), Some(m)) => fill_if_missing(&mut g, h, vars::SBP, Some(3.0 * m - 2.0 * d)),
            _ => {}
        }
    }
    Ok(g)
}

/// Attach one indicator per cell: 1 when actually observed, else 0.
pub fn attach_indicators(mut g: HourlyGrid) -> Result<HourlyGrid> {
    push_stage(&mut g, Stage::Indicators)?;
    g.indicators = Some(
        g.rows
            .iter()
            .map(|r| r.iter().map(|c| (c.mark == Mark::Observed) as u8).collect())
            .collect(),
    );
    Ok(g)
}

/// Carry the last value forward for up to the column's horizon in hours.
pub fn sample_and_hold(mut g: HourlyGrid, cfg: &ImputeConfig) -> Result<HourlyGrid> {
    push_stage(&mut g, Stage::SampleAndHold)?;
    for c in 0..g.columns.len() {
        let horizon = if g.columns[c].medication {
            cfg.hold_medication_h
        } else {
            cfg.hold_other_h
        };
        let mut last: Option<(usize, f64)> = None;
        for h in 0..g.n_rows() {
            let cell = g.rows[h][c];
            match cell.value {
                Some(v) if !cell.is_missing() => last = Some((h, v)),
                _ => {
                    if let Some((h0, v)) = last {
                        if h - h0 <= horizon {
                            g.rows[h][c] = Cell::imputed(v);
                        }
                    }
                }
            }
        }
    }
    Ok(g)
}

/// Per-column fill values fitted on training grids.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FillStats {
    pub columns: Vec<String>,
    pub values: Vec<f64>,
    /// Columns with no training values at all (filled with 0).
    pub empty: Vec<String>,
}

/// Fit fill values: mean (continuous), mode (categorical), zero (binary).
pub fn fit_fill<'a, I>(train: I) -> Result<FillStats>
where
    I: IntoIterator<Item = &'a HourlyGrid>,
{
    let mut iter = train.into_iter().peekable();
    let first = iter
        .peek()
        .ok_or_else(|| Error::Usage("cannot fit fill statistics on zero grids".into()))?;
    let columns = first.columns.clone();
    let width = columns.len();
    let mut sums = vec![0.0; width];
    let mut counts = vec![0usize; width];
    let mut modes: Vec<BTreeMap<i64, usize>> = vec![BTreeMap::new(); width];
    for g in iter {
        if g.columns != columns {
            return Err(Error::Shape {
                block: "grid columns".into(),
                expected: width,
                actual: g.columns.len(),
            });
        }
        for row in &g.rows {
            for (c, cell) in row.iter().enumerate() {
                let Some(v) = cell.value.filter(|_| !cell.is_missing()) else {
                    continue;
                };
                sums[c] += v;
                counts[c] += 1;
                if columns[c].kind == VarKind::Categorical {
                    *modes[c].entry(v.round() as i64).or_default() += 1;
                }
            }
        }
    }
    let mut empty = Vec::new();
    let values = columns
        .iter()
        .enumerate()
        .map(|(c, col)| {
            if counts[c] == 0 && col.kind != VarKind::Binary {
                empty.push(col.name.clone());
            }
            match col.kind {
                VarKind::Binary => 0.0,
                _ if counts[c] == 0 => 0.0,
                VarKind::Continuous => sums[c] / counts[c] as f64,
                VarKind::Categorical => {
                    let best = modes[c].values().copied().max().unwrap_or(0);
                    modes[c]
                        .iter()
                        .find(|(_, n)| **n == best)
                        .map(|(k, _)| *k as f64)
                        .unwrap_or(0.0)
                }
            }
        })
        .collect();
    Ok(FillStats {
        columns: columns.into_iter().map(|c| c.name).collect(),
        values,
        empty,
    })
}

fn check_columns(g: &HourlyGrid, names: &[String], what: &str) -> Result<()> {
    if names.is_empty() {
        return Err(Error::Usage(format!("{what} has not been fitted")));
    }
    if g.columns.len() != names.len() || g.columns.iter().zip(names).any(|(c, n)| &c.name != n) {
        return Err(Error::Shape {
            block: format!("{what} columns"),
            expected: names.len(),
            actual: g.columns.len(),
        });
    }
    Ok(())
}

/// Replace every remaining missing cell with its training fill value.
pub fn apply_fill(mut g: HourlyGrid, stats: &FillStats) -> Result<HourlyGrid> {
    check_columns(&g, &stats.columns, "fill statistics")?;
    push_stage(&mut g, Stage::Fill)?;
    for row in g.rows.iter_mut() {
        for (c, cell) in row.iter_mut().enumerate() {
            if cell.is_missing() {
                *cell = Cell::imputed(stats.values[c]);
            }
        }
    }
    Ok(g)
}

/// Training-set z-score statistics for continuous columns.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub columns: Vec<String>,
    /// `None` for columns that are not z-scored (binary, categorical).
    pub mean: Vec<Option<f64>>,
    pub std: Vec<Option<f64>>,
    /// Continuous columns whose training std fell below the floor; passed through.
    pub constant: Vec<String>,
}

pub fn fit_normalizer<'a, I>(train: I) -> Result<Normalizer>
where
    I: IntoIterator<Item = &'a HourlyGrid>,
{
    let mut iter = train.into_iter().peekable();
    let first = iter
        .peek()
        .ok_or_else(|| Error::Usage("cannot fit a normalizer on zero grids".into()))?;
    let columns = first.columns.clone();
    let width = columns.len();
    let mut n = vec![0usize; width];
    let mut sum = vec![0.0; width];
    let mut sumsq = vec![0.0; width];
    // Two passes keep the variance exact enough for the 1e-9 checks.
    let grids: Vec<&HourlyGrid> = iter.collect();
    for g in &grids {
        for row in &g.rows {
            for (c, cell) in row.iter().enumerate() {
                if let Some(v) = cell.value {
                    n[c] += 1;
                    sum[c] += v;
                }
            }
        }
    }
    let means: Vec<f64> = (0..width).map(|c| if n[c] > 0 { sum[c] / n[c] as f64 } else { 0.0 }).collect();
    for g in &grids {
        for row in &g.rows {
            for (c, cell) in row.iter().enumerate() {
                if let Some(v) = cell.value {
                    sumsq[c] += (v - means[c]).powi(2);
                }
            }
        }
    }
    let mut norm = Normalizer {
        columns: columns.iter().map(|c| c.name.clone()).collect(),
        ..Default::default()
    };
    for (c, col) in columns.iter().enumerate() {
        if col.kind != VarKind::Continuous {
            norm.mean.push(None);
            norm.std.push(None);
            continue;
        }
        let std = if n[c] > 0 { (sumsq[c] / n[c] as f64).sqrt() } else { 0.0 };
        if std < STD_FLOOR {
            norm.constant.push(col.name.clone());
            norm.mean.push(None);
            norm.std.push(None);
        } else {
            norm.mean.push(Some(means[c]));
            norm.std.push(Some(std));
        }
    }
    Ok(norm)
}

impl Normalizer {
    pub fn transform(&self, c: usize, v: f64) -> f64 {
        match (self.mean[c], self.std[c]) {
            (Some(m), Some(s)) => (v - m) / s,
            _ => v,
        }
    }
}

pub fn apply_normalizer(mut g: HourlyGrid, norm: &Normalizer) -> Result<HourlyGrid> {
    check_columns(&g, &norm.columns, "normalizer")?;
    push_stage(&mut g, Stage::Normalize)?;
    for row in g.rows.iter_mut() {
        for (c, cell) in row.iter_mut().enumerate() {
            if let Some(v) = cell.value {
                cell.value = Some(norm.transform(c, v));
            }
        }
    }
    Ok(g)
}

/// Stages up to and including sample-and-hold; these need no fitted state.
pub fn prepare_grid(g: HourlyGrid, cfg: &ImputeConfig) -> Result<HourlyGrid> {
    let g = truncate_pad(g);
    let g = impute_relationships(g, cfg)?;
    let g = attach_indicators(g)?;
    sample_and_hold(g, cfg)
}

/// Fill and normalize a prepared grid.
pub fn finish_grid(g: HourlyGrid, fill: &FillStats, norm: &Normalizer) -> Result<HourlyGrid> {
    apply_normalizer(apply_fill(g, fill)?, norm)
}
