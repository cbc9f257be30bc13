//! Per-stay feature records and the train-fitted transforms that turn them
//! into model input blocks.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonize::{Column, CompactGrid, ComorbidityMap, HarmonizedStay, HourlyGrid};
use crate::impute::{finish_grid, fit_fill, fit_normalizer, prepare_grid, FillStats, ImputeConfig, Normalizer, STD_FLOOR};
use crate::ingest::{ModalityFlags, NoteRow, StayRecord};
use crate::model::{Dataset, STATIC_BLOCK};
use crate::notes::{note_bag_features, NoteFeatures, NotePipeline, NotesConfig};
use crate::scores::{build_snapshot, RiskScorePanel, ScoreTables, PANEL_COLUMNS};
use crate::vitals::{featurize_vitals, VitalsConfig, VitalsManifest};

pub const HOURLY_BLOCK: &str = "hourly";
pub const VITALS_BLOCK: &str = "vitals";
pub const NOTES_BLOCK: &str = "notes";

pub const STATIC_ABSENT: &str = "static__absent";
pub const TIMEVARIANT_ABSENT: &str = "timevariant__absent";
pub const NOTES_ABSENT: &str = "notes__absent";

const ADMISSION_TYPES: [&str; 3] = ["scheduled_surgical", "medical", "unscheduled_surgical"];
const HOURLY_AGGREGATES: [&str; 5] = ["mean", "min", "max", "last", "observed_frac"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Toggles {
    pub use_notes: bool,
    pub use_vitals_features: bool,
    pub use_risk_scores: bool,
}

impl Default for Toggles {
    fn default() -> Self {
        Toggles {
            use_notes: true,
            use_vitals_features: true,
            use_risk_scores: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct FeatureConfig {
    pub toggles: Toggles,
    pub impute: ImputeConfig,
    pub vitals: VitalsConfig,
    pub notes: NotesConfig,
}

/// Attributes used for auditing and grouping, never as model inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demographics {
    pub age: u32,
    pub sex: String,
    pub race: String,
    pub ethnicity: String,
    pub hospital_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StayFeatures {
    pub stay_id: String,
    pub label: bool,
    pub death_h: Option<f64>,
    pub modality: ModalityFlags,
    pub demographics: Demographics,
    pub static_values: Vec<f64>,
    /// Grid after sample-and-hold, before fill and normalization.
    pub grid: CompactGrid,
    pub scores: Vec<f64>,
    pub vitals: Vec<f64>,
    pub notes: Vec<f64>,
}

impl StayFeatures {
    pub fn score(&self, name: &str) -> Option<f64> {
        PANEL_COLUMNS.iter().position(|c| *c == name).and_then(|i| self.scores.get(i).copied())
    }
}

/// Everything `featurize` produces: column layouts plus one record per stay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub toggles: Toggles,
    pub grid_columns: Vec<Column>,
    pub static_columns: Vec<String>,
    pub score_columns: Vec<String>,
    pub vitals_columns: Vec<String>,
    pub notes_columns: Vec<String>,
    pub stays: Vec<StayFeatures>,
}

impl FeatureTable {
    pub fn index_of(&self) -> BTreeMap<&str, usize> {
        self.stays.iter().enumerate().map(|(i, s)| (s.stay_id.as_str(), i)).collect()
    }

    /// Row indices of the given stay ids, in order.
    pub fn rows(&self, ids: &[String]) -> Result<Vec<usize>> {
        let index = self.index_of();
        ids.iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::Data(format!("stay `{id}` is not in the feature table")))
            })
            .collect()
    }

    pub fn labels(&self, rows: &[usize]) -> Vec<bool> {
        rows.iter().map(|&i| self.stays[i].label).collect()
    }

    /// Blocks a model variant can draw on under the current toggles.
    pub fn available_blocks(&self) -> Vec<&'static str> {
        let mut out = vec![STATIC_BLOCK, HOURLY_BLOCK];
        if self.toggles.use_vitals_features {
            out.push(VITALS_BLOCK);
        }
        if self.toggles.use_notes {
            out.push(NOTES_BLOCK);
        }
        out
    }
}

pub fn static_columns(comorbidity: &ComorbidityMap) -> Vec<String> {
    let mut cols = vec!["age".to_string(), "sex_male".to_string()];
    cols.extend(ADMISSION_TYPES.iter().map(|t| format!("admission_{t}")));
    cols.push("admission_type__absent".into());
    cols.push("pre_icu_los_log1p".into());
    cols.push("pre_icu_los_log1p__absent".into());
    cols.extend(comorbidity.names().iter().map(|n| format!("comorbidity_{n}")));
    cols.push(STATIC_ABSENT.into());
    cols
}

/// Shared state for featurizing many stays.
pub struct Featurizer {
    pub config: FeatureConfig,
    pub comorbidity: ComorbidityMap,
    pub tables: ScoreTables,
    notes: NotePipeline,
    vitals_manifest: VitalsManifest,
}

impl Featurizer {
    pub fn new(config: FeatureConfig) -> Result<Self> {
        let notes = NotePipeline::new(config.notes.clone())?;
        let vitals_manifest = VitalsManifest::for_config(&config.vitals);
        Ok(Featurizer {
            config,
            comorbidity: ComorbidityMap::default_map(),
            tables: ScoreTables::default_tables(),
            notes,
            vitals_manifest,
        })
    }

    fn static_values(&self, stay: &StayRecord, h: &HarmonizedStay) -> Vec<f64> {
        let mut v = vec![stay.age as f64, (stay.sex.trim().eq_ignore_ascii_case("m")) as u8 as f64];
        let admission = h.admission.admission_type;
        for code in 0..ADMISSION_TYPES.len() as i64 {
            v.push((admission == Some(code)) as u8 as f64);
        }
        v.push(admission.is_none() as u8 as f64);
        match h.admission.pre_icu_los_h {
            Some(los) => v.extend([los.max(0.0).ln_1p(), 0.0]),
            None => v.extend([0.0, 1.0]),
        }
        v.extend(h.comorbidities.iter().map(|c| *c as f64));
        v.push(0.0);
        v
    }

    pub fn featurize_stay(&self, stay: &StayRecord, h: &HarmonizedStay, notes: &[&NoteRow]) -> Result<StayFeatures> {
        let toggles = self.config.toggles;
        let prepared = prepare_grid(h.grid.clone(), &self.config.impute)?;
        let observed = prepared
            .indicators
            .as_ref()
            .is_some_and(|ind| ind.iter().flatten().any(|b| *b == 1));
        let has_signals = h.signals.values().any(|s| !s.values.is_empty());
        let mut modality = stay.modality_flags;
        modality.has_timevariant = observed || has_signals;

        let scores = if toggles.use_risk_scores {
            let snap = build_snapshot(&prepared, &h.admission, stay.age, &h.comorbidities, &self.comorbidity, &self.tables);
            RiskScorePanel::compute(&snap, &self.tables).to_vector()
        } else {
            Vec::new()
        };
        let vitals = if toggles.use_vitals_features {
            featurize_vitals(&h.signals, &self.config.vitals).values
        } else {
            Vec::new()
        };
        let notes_vec = if toggles.use_notes {
            let chunks = self.notes.stay_chunks(&stay.stay_id, notes.iter().copied());
            let nf = note_bag_features(&chunks, self.config.notes.dim)?;
            modality.has_notes = !nf.absent;
            nf.to_vector()
        } else {
            Vec::new()
        };

        Ok(StayFeatures {
            stay_id: stay.stay_id.clone(),
            label: stay.died_inpatient,
            death_h: stay.time_to_death_hours,
            modality,
            demographics: Demographics {
                age: stay.age,
                sex: stay.sex.clone(),
                race: stay.race.clone(),
                ethnicity: stay.ethnicity.clone(),
                hospital_id: stay.hospital_id.clone(),
            },
            static_values: self.static_values(stay, h),
            grid: CompactGrid::encode(&prepared),
            scores,
            vitals,
            notes: notes_vec,
        })
    }

    /// Featurize aligned stays and harmonized records. Notes are matched by stay id.
    pub fn featurize(&self, stays: &[StayRecord], harmonized: &[HarmonizedStay], notes: &[NoteRow]) -> Result<FeatureTable> {
        if stays.len() != harmonized.len() {
            return Err(Error::Data(format!(
                "{} stays but {} harmonized records",
                stays.len(),
                harmonized.len()
            )));
        }
        let mut by_stay: BTreeMap<&str, Vec<&NoteRow>> = BTreeMap::new();
        for n in notes {
            by_stay.entry(n.stay_id.as_str()).or_default().push(n);
        }
        let mut records = Vec::with_capacity(stays.len());
        let mut grid_columns = None;
        for (s, h) in stays.iter().zip(harmonized) {
            if s.stay_id != h.grid.stay_id {
                return Err(Error::Data(format!(
                    "stay `{}` is paired with harmonized record `{}`",
                    s.stay_id, h.grid.stay_id
                )));
            }
            grid_columns.get_or_insert_with(|| h.grid.columns.clone());
            let own = by_stay.get(s.stay_id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
            records.push(self.featurize_stay(s, h, own)?);
        }
        let toggles = self.config.toggles;
        Ok(FeatureTable {
            toggles,
            grid_columns: grid_columns.unwrap_or_default(),
            static_columns: static_columns(&self.comorbidity),
            score_columns: if toggles.use_risk_scores {
                PANEL_COLUMNS.iter().map(|c| c.to_string()).collect()
            } else {
                Vec::new()
            },
            vitals_columns: if toggles.use_vitals_features {
                self.vitals_manifest.columns()
            } else {
                Vec::new()
            },
            notes_columns: if toggles.use_notes {
                NoteFeatures::columns(self.config.notes.dim)
            } else {
                Vec::new()
            },
            stays: records,
        })
    }
}

/// Column names of one block plus which of them get z-scaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockLayout {
    pub name: String,
    pub columns: Vec<String>,
    pub scaled: Vec<bool>,
}

impl BlockLayout {
    fn new(name: &str, columns: Vec<String>, unscaled: &BTreeSet<&str>) -> Self {
        let scaled = columns
            .iter()
            .map(|c| !c.ends_with("__absent") && !unscaled.contains(c.as_str()) && !c.starts_with("note_bag_"))
            .collect();
        BlockLayout {
            name: name.to_string(),
            columns,
            scaled,
        }
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    /// Index of the block-wide absent indicator, if the block has one.
    fn block_indicator(&self) -> Option<usize> {
        self.columns
            .iter()
            .position(|c| c == STATIC_ABSENT || c == TIMEVARIANT_ABSENT || c == NOTES_ABSENT)
    }

    /// (value, absent flag) column pairs.
    fn pairs(&self) -> Vec<(usize, usize)> {
        let pos: BTreeMap<&str, usize> = self.columns.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        self.columns
            .iter()
            .enumerate()
            .filter_map(|(i, c)| pos.get(format!("{c}__absent").as_str()).map(|&j| (i, j)))
            .collect()
    }
}

/// Per-column z-scaling fitted on training rows; unscaled columns keep mean 0, std 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedBlock {
    pub layout: BlockLayout,
    pub scaler: ColumnScaler,
}

/// Everything fitted on the training split that inference needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedInputs {
    pub toggles: Toggles,
    pub grid_columns: Vec<Column>,
    pub fill: FillStats,
    pub normalizer: Normalizer,
    pub blocks: Vec<FittedBlock>,
}

fn hourly_columns(table: &FeatureTable) -> Vec<String> {
    let mut cols: Vec<String> = table
        .grid_columns
        .iter()
        .flat_map(|c| HOURLY_AGGREGATES.iter().map(move |a| format!("{}__{a}", c.name)))
        .collect();
    cols.extend(table.score_columns.iter().cloned());
    cols.push(TIMEVARIANT_ABSENT.into());
    cols
}

fn layouts(table: &FeatureTable) -> Vec<BlockLayout> {
    let unscaled: BTreeSet<&str> = ["sex_male", "admission_scheduled_surgical", "admission_medical", "admission_unscheduled_surgical"]
        .into_iter()
        .chain(table.static_columns.iter().filter(|c| c.starts_with("comorbidity_")).map(String::as_str))
        .collect();
    table
        .available_blocks()
        .into_iter()
        .map(|name| {
            let cols = match name {
                STATIC_BLOCK => table.static_columns.clone(),
                HOURLY_BLOCK => hourly_columns(table),
                VITALS_BLOCK => table.vitals_columns.clone(),
                _ => table.notes_columns.clone(),
            };
            BlockLayout::new(name, cols, &unscaled)
        })
        .collect()
}

fn hourly_row(s: &StayFeatures, grid: Option<&HourlyGrid>, width: usize) -> Vec<f64> {
    let mut row = Vec::with_capacity(width);
    match grid {
        Some(g) if s.modality.has_timevariant => {
            let n = g.n_rows().max(1) as f64;
            for c in 0..g.columns.len() {
                let vals: Vec<f64> = g.rows.iter().map(|r| r[c].value.unwrap_or(0.0)).collect();
                let observed = g
                    .indicators
                    .as_ref()
                    .map(|ind| ind.iter().map(|r| r[c] as f64).sum::<f64>())
                    .unwrap_or(0.0);
                row.push(vals.iter().sum::<f64>() / n);
                row.push(vals.iter().copied().fold(f64::INFINITY, f64::min));
                row.push(vals.iter().copied().fold(f64::NEG_INFINITY, f64::max));
                row.push(vals.last().copied().unwrap_or(0.0));
                row.push(observed / n);
            }
            row.extend(&s.scores);
            row.push(0.0);
        }
        _ => {
            row.resize(width - 1, 0.0);
            row.push(1.0);
        }
    }
    row
}

fn raw_row(s: &StayFeatures, layout: &BlockLayout, grid: Option<&HourlyGrid>) -> Result<Vec<f64>> {
    let row = match layout.name.as_str() {
        STATIC_BLOCK => s.static_values.clone(),
        HOURLY_BLOCK => hourly_row(s, grid, layout.width()),
        VITALS_BLOCK => s.vitals.clone(),
        _ => s.notes.clone(),
    };
    if row.len() != layout.width() {
        return Err(Error::Shape {
            block: layout.name.clone(),
            expected: layout.width(),
            actual: row.len(),
        });
    }
    Ok(row)
}

fn decode(s: &StayFeatures, columns: &[Column]) -> Result<HourlyGrid> {
    s.grid
        .decode(columns)
        .ok_or_else(|| Error::Data(format!("stay `{}`: grid does not match the column layout", s.stay_id)))
}

fn block_present(s: &StayFeatures, block: &str) -> bool {
    match block {
        STATIC_BLOCK => s.modality.has_static,
        NOTES_BLOCK => s.modality.has_notes,
        _ => s.modality.has_timevariant,
    }
}

impl FittedInputs {
    /// Fit fill values, the grid normalizer and per-block column scalers on `train` rows.
    pub fn fit(table: &FeatureTable, train: &[usize]) -> Result<Self> {
        let grids: Vec<HourlyGrid> = train
            .iter()
            .map(|&i| &table.stays[i])
            .filter(|s| s.modality.has_timevariant)
            .map(|s| decode(s, &table.grid_columns))
            .collect::<Result<_>>()?;
        if grids.is_empty() {
            return Err(Error::Data("no training stay has time-variant data".into()));
        }
        let fill = fit_fill(&grids)?;
        let normalizer = fit_normalizer(&grids)?;
        let mut fitted = FittedInputs {
            toggles: table.toggles,
            grid_columns: table.grid_columns.clone(),
            fill,
            normalizer,
            blocks: Vec::new(),
        };
        for layout in layouts(table) {
            let w = layout.width();
            let (mut n, mut sum, mut sumsq) = (0usize, vec![0.0; w], vec![0.0; w]);
            let rows: Vec<Vec<f64>> = train
                .iter()
                .map(|&i| &table.stays[i])
                .filter(|s| block_present(s, &layout.name))
                .map(|s| fitted.raw_block_row(s, &layout))
                .collect::<Result<_>>()?;
            for r in &rows {
                n += 1;
                for (j, v) in r.iter().enumerate() {
                    sum[j] += v;
                }
            }
            let mean: Vec<f64> = sum.iter().map(|s| if n > 0 { s / n as f64 } else { 0.0 }).collect();
            for r in &rows {
                for (j, v) in r.iter().enumerate() {
                    sumsq[j] += (v - mean[j]).powi(2);
                }
            }
            let mut scaler = ColumnScaler {
                mean: vec![0.0; w],
                std: vec![1.0; w],
            };
            for j in 0..w {
                if !layout.scaled[j] || n == 0 {
                    continue;
                }
                let sd = (sumsq[j] / n as f64).sqrt();
                scaler.mean[j] = mean[j];
                if sd >= STD_FLOOR {
                    scaler.std[j] = sd;
                }
            }
            fitted.blocks.push(FittedBlock { layout, scaler });
        }
        Ok(fitted)
    }

    fn raw_block_row(&self, s: &StayFeatures, layout: &BlockLayout) -> Result<Vec<f64>> {
        let grid = if layout.name == HOURLY_BLOCK && s.modality.has_timevariant {
            let g = decode(s, &self.grid_columns)?;
            Some(finish_grid(g, &self.fill, &self.normalizer)?)
        } else {
            None
        };
        raw_row(s, layout, grid.as_ref())
    }

    pub fn block(&self, name: &str) -> Option<&FittedBlock> {
        self.blocks.iter().find(|b| b.layout.name == name)
    }

    /// Refuse a table whose column layout differs from the one fitted.
    pub fn check_table(&self, table: &FeatureTable) -> Result<()> {
        let mismatch = |what: &str| Error::Manifest {
            path: "features".into(),
            reason: format!("{what} differ from the layout the model was fitted on"),
        };
        if table.grid_columns != self.grid_columns {
            return Err(mismatch("grid columns"));
        }
        if table.toggles != self.toggles {
            return Err(mismatch("pipeline toggles"));
        }
        for (fitted, current) in self.blocks.iter().zip(layouts(table)) {
            if fitted.layout != current {
                return Err(mismatch(&format!("`{}` block columns", current.name)));
            }
        }
        Ok(())
    }

    /// Scaled block row with absent values zeroed.
    pub fn block_row(&self, s: &StayFeatures, block: &FittedBlock) -> Result<Vec<f64>> {
        let layout = &block.layout;
        let mut row = self.raw_block_row(s, layout)?;
        let absent: Vec<usize> = layout.pairs().into_iter().filter(|(_, f)| row[*f] > 0.5).map(|(v, _)| v).collect();
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - block.scaler.mean[j]) / block.scaler.std[j];
        }
        for j in absent {
            row[j] = 0.0;
        }
        if let Some(ind) = layout.block_indicator() {
            if !block_present(s, &layout.name) {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = if j == ind { 1.0 } else { 0.0 };
                }
            }
        }
        Ok(row)
    }

    /// Input blocks for `rows` of `table`, in the order of `blocks`.
    pub fn dataset(&self, table: &FeatureTable, rows: &[usize], blocks: &[&str]) -> Result<Dataset> {
        let mut mats = Vec::with_capacity(blocks.len());
        for name in blocks {
            let block = self
                .block(name)
                .ok_or_else(|| Error::Config(format!("block `{name}` is not enabled in this feature table")))?;
            let w = block.layout.width();
            let mut m = Array2::zeros((rows.len(), w));
            for (r, &i) in rows.iter().enumerate() {
                let row = self.block_row(&table.stays[i], block)?;
                m.row_mut(r).assign(&ndarray::ArrayView1::from(&row));
            }
            mats.push(m);
        }
        Ok(Dataset {
            blocks: mats,
            labels: table.labels(rows),
        })
    }

    pub fn widths(&self, blocks: &[&str]) -> Vec<(String, usize)> {
        blocks
            .iter()
            .filter_map(|b| self.block(b).map(|fb| (b.to_string(), fb.layout.width())))
            .collect()
    }
}
