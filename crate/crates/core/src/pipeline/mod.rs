//! End-to-end orchestration over in-memory artifacts: ingest through report.

mod evaluate;
mod render;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use evaluate::{
    audit, best_single_feature, evaluate, group_key, BaselineEvaluation, Comparison, EvalConfig,
    Evaluation, Predictions, SingleFeature, VariantEvaluation,
};
pub use render::{render_report, ReportDoc, ReportRow};

use crate::error::{Error, Result};
use crate::eval::{stratified_split, Split, SplitUnit};
use crate::features::{FeatureTable, FittedInputs, HOURLY_BLOCK, NOTES_BLOCK, VITALS_BLOCK};
use crate::harmonize::{HarmonizeReport, HarmonizedStay, Harmonizer};
use crate::ingest::{
    assemble_stays, attach_note_flags, IngestReport, NoteRow, RawEvent, SchemaMap, StaticRow, StayRecord,
};
use crate::model::{train, train_staged, Dataset, EpochLog, ModelParams, ModelSpec, TrainConfig, TrainOutcome, STATIC_BLOCK};
use crate::rng::derive_seed;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    StaticOnly,
    TimevariantOnly,
    Combined,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::StaticOnly, Variant::TimevariantOnly, Variant::Combined];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::StaticOnly => "static_only",
            Variant::TimevariantOnly => "timevariant_only",
            Variant::Combined => "combined",
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Variant::StaticOnly => "Time-invariant only",
            Variant::TimevariantOnly => "Time-variant only",
            Variant::Combined => "Combined modalities",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown model variant `{s}` (expected static_only, timevariant_only or combined)")))
    }

    /// Input blocks the variant uses under the table's toggles.
    pub fn blocks(&self, table: &FeatureTable) -> Vec<&'static str> {
        let available = table.available_blocks();
        match self {
            Variant::StaticOnly => vec![STATIC_BLOCK],
            Variant::TimevariantOnly => available.into_iter().filter(|b| *b == HOURLY_BLOCK || *b == VITALS_BLOCK).collect(),
            Variant::Combined => available,
        }
    }
}

/// How the combined model is fitted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    /// Every encoder and the head trained together.
    #[default]
    Joint,
    /// Per-modality models first, then a new head over their frozen encoders.
    Staged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub name: String,
    pub blocks: Vec<String>,
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_metric: f64,
}

/// A trained model together with every fitted transform inference needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub version: String,
    pub variant: Variant,
    pub seed: u64,
    pub fusion: Fusion,
    pub blocks: Vec<String>,
    pub train_config: TrainConfig,
    pub inputs: FittedInputs,
    pub params: ModelParams,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_metric: f64,
    pub stages: Vec<StageSummary>,
}

impl ModelCheckpoint {
    /// Eval-mode probabilities for `rows` of `table`, in row order.
    pub fn predict(&self, table: &FeatureTable, rows: &[usize]) -> Result<Vec<f64>> {
        self.inputs.check_table(table)?;
        let blocks: Vec<&str> = self.blocks.iter().map(String::as_str).collect();
        let data = self.inputs.dataset(table, rows, &blocks)?;
        Ok(self.params.predict_proba(&data.views())?.to_vec())
    }
}

/// Ingest raw tables into qualifying stays with note flags.
pub fn ingest(events: Vec<RawEvent>, statics: &[StaticRow], notes: &[NoteRow]) -> (Vec<StayRecord>, IngestReport) {
    let map = SchemaMap::default_map();
    let (mut stays, report) = assemble_stays(events, statics, &map);
    attach_note_flags(&mut stays, notes);
    (stays, report)
}

pub fn harmonize(stays: &[StayRecord]) -> (Vec<HarmonizedStay>, HarmonizeReport) {
    let h = Harmonizer::with_defaults();
    let mut total = HarmonizeReport::default();
    let out = stays
        .iter()
        .map(|s| {
            let (hs, r) = h.harmonize_stay(s);
            total.merge(&r);
            hs
        })
        .collect();
    (out, total)
}

pub fn split_table(table: &FeatureTable, fractions: [f64; 3], seed: u64) -> Result<Split> {
    let units: Vec<SplitUnit> = table
        .stays
        .iter()
        .map(|s| SplitUnit {
            stay_id: s.stay_id.clone(),
            subgroup: s.modality.subgroup_key(),
            label: s.label,
        })
        .collect();
    stratified_split(&units, fractions, seed)
}

/// Table row indices of each partition.
#[derive(Debug, Clone)]
pub struct SplitRows {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitRows {
    pub fn new(table: &FeatureTable, split: &Split) -> Result<Self> {
        Ok(SplitRows {
            train: table.rows(&split.train)?,
            val: table.rows(&split.val)?,
            test: table.rows(&split.test)?,
        })
    }
}

struct Trainer<'a> {
    table: &'a FeatureTable,
    cfg: &'a TrainConfig,
    fitted: FittedInputs,
    all_blocks: Vec<&'static str>,
    train: Dataset,
    val: Dataset,
    cache: BTreeMap<Vec<&'static str>, TrainOutcome>,
}

impl<'a> Trainer<'a> {
    fn new(table: &'a FeatureTable, rows: &SplitRows, cfg: &'a TrainConfig) -> Result<Self> {
        let fitted = FittedInputs::fit(table, &rows.train)?;
        let all_blocks = table.available_blocks();
        let train = fitted.dataset(table, &rows.train, &all_blocks)?;
        let val = fitted.dataset(table, &rows.val, &all_blocks)?;
        Ok(Trainer {
            table,
            cfg,
            fitted,
            all_blocks,
            train,
            val,
            cache: BTreeMap::new(),
        })
    }

    fn positions(&self, blocks: &[&str]) -> Vec<usize> {
        blocks
            .iter()
            .filter_map(|b| self.all_blocks.iter().position(|a| a == b))
            .collect()
    }

    fn stage_config(&self, label: &str) -> TrainConfig {
        TrainConfig {
            seed: derive_seed(self.cfg.seed, label),
            ..self.cfg.clone()
        }
    }

    fn label(blocks: &[&str]) -> String {
        blocks.join("+")
    }

    /// Jointly trained model over `blocks`, memoized.
    fn joint(&mut self, blocks: &[&'static str]) -> Result<TrainOutcome> {
        if let Some(o) = self.cache.get(blocks) {
            return Ok(o.clone());
        }
        let keep = self.positions(blocks);
        let spec = ModelSpec::for_blocks(&self.fitted.widths(blocks));
        let cfg = self.stage_config(&Self::label(blocks));
        log::info!("training {} ({} train / {} val)", Self::label(blocks), self.train.len(), self.val.len());
        let out = train(&spec, &cfg, &self.train.project(&keep), &self.val.project(&keep))?;
        self.cache.insert(blocks.to_vec(), out.clone());
        Ok(out)
    }

    fn checkpoint(&self, variant: Variant, fusion: Fusion, blocks: &[&str], out: TrainOutcome, stages: Vec<StageSummary>) -> ModelCheckpoint {
        ModelCheckpoint {
            version: VERSION.to_string(),
            variant,
            seed: self.cfg.seed,
            fusion,
            blocks: blocks.iter().map(|b| b.to_string()).collect(),
            train_config: self.cfg.clone(),
            inputs: self.fitted.clone(),
            params: out.params,
            log: out.log,
            best_epoch: out.best_epoch,
            best_metric: out.best_metric,
            stages,
        }
    }

    fn summary(blocks: &[&str], o: &TrainOutcome) -> StageSummary {
        StageSummary {
            name: Self::label(blocks),
            blocks: blocks.iter().map(|b| b.to_string()).collect(),
            epochs: o.log.len(),
            best_epoch: o.best_epoch,
            best_metric: o.best_metric,
        }
    }

    fn variant(&mut self, variant: Variant, fusion: Fusion) -> Result<ModelCheckpoint> {
        let blocks = variant.blocks(self.table);
        if blocks.is_empty() {
            return Err(Error::Config(format!("variant {} has no enabled input blocks", variant.name())));
        }
        if variant != Variant::Combined || fusion == Fusion::Joint {
            let out = self.joint(&blocks)?;
            let stages = vec![Self::summary(&blocks, &out)];
            return Ok(self.checkpoint(variant, fusion, &blocks, out, stages));
        }
        let mut groups: Vec<Vec<&'static str>> = vec![Variant::StaticOnly.blocks(self.table), Variant::TimevariantOnly.blocks(self.table)];
        if blocks.contains(&NOTES_BLOCK) {
            groups.push(vec![NOTES_BLOCK]);
        }
        let spec = ModelSpec::for_blocks(&self.fitted.widths(&blocks));
        let mut params = ModelParams::init(&spec, derive_seed(self.cfg.seed, "fusion"))?;
        let mut stages = Vec::new();
        for g in &groups {
            let o = self.joint(g)?;
            for (k, name) in g.iter().enumerate() {
                let target = blocks.iter().position(|b| b == name).expect("group blocks are enabled");
                params.blocks[target] = o.params.blocks[k].clone();
            }
            stages.push(Self::summary(g, &o));
        }
        let frozen = vec![true; blocks.len()];
        let cfg = self.stage_config("fusion");
        log::info!("training fusion head over {}", Self::label(&blocks));
        let out = train_staged(params, &frozen, &cfg, &self.train, &self.val)?;
        stages.push(Self::summary(&["head"], &out));
        Ok(self.checkpoint(variant, fusion, &blocks, out, stages))
    }
}

/// Train the requested variants on the split, sharing per-modality stages.
pub fn train_variants(
    table: &FeatureTable,
    split: &Split,
    cfg: &TrainConfig,
    fusion: Fusion,
    variants: &[Variant],
) -> Result<Vec<ModelCheckpoint>> {
    cfg.validate()?;
    let rows = SplitRows::new(table, split)?;
    let mut trainer = Trainer::new(table, &rows, cfg)?;
    variants.iter().map(|v| trainer.variant(*v, fusion)).collect()
}
