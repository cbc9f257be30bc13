use std::collections::BTreeMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use icu_mortality::config::RunConfig;
use icu_mortality::eval::{self, BootstrapConfig, CiMethod};
use icu_mortality::features::Featurizer;
use icu_mortality::ingest::generate_synthetic_cohort;
use icu_mortality::notes::NotePipeline;
use icu_mortality::pipeline::{self, Predictions, Variant};
use icu_mortality::scores::{ClinicalSnapshot, RiskScorePanel, ScoreTables};
use icu_mortality::vitals;
use icu_mortality::Error;

/// Point estimate with interval endpoints.
type Cell = (Option<f64>, Option<f64>, Option<f64>);

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } | Error::NonFiniteLoss { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn check_len(scores: &[f64], labels: &[bool]) -> PyResult<()> {
    if scores.len() != labels.len() {
        return Err(PyValueError::new_err(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    Ok(())
}

/// Midrank AUROC; None when a class is missing.
#[pyfunction]
fn auroc(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<Option<f64>> {
    check_len(&scores, &labels)?;
    Ok(eval::auroc(&scores, &labels))
}

#[pyfunction]
fn average_precision(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<Option<f64>> {
    check_len(&scores, &labels)?;
    Ok(eval::average_precision(&scores, &labels))
}

/// Paired DeLong test of two score vectors on the same labels.
#[pyfunction]
fn delong(scores_a: Vec<f64>, scores_b: Vec<f64>, labels: Vec<bool>) -> PyResult<BTreeMap<String, f64>> {
    check_len(&scores_a, &labels)?;
    check_len(&scores_b, &labels)?;
    let d = eval::delong_test(&scores_a, &scores_b, &labels).map_err(py_err)?;
    Ok(BTreeMap::from([
        ("auc_a".to_string(), d.auc_a),
        ("auc_b".to_string(), d.auc_b),
        ("z".to_string(), d.z),
        ("p_value".to_string(), d.p_value),
    ]))
}

/// Largest threshold whose sensitivity reaches `target`.
#[pyfunction]
#[pyo3(signature = (scores, labels, target = eval::DEFAULT_SENSITIVITY))]
fn select_threshold(scores: Vec<f64>, labels: Vec<bool>, target: f64) -> PyResult<f64> {
    check_len(&scores, &labels)?;
    eval::select_threshold(&scores, &labels, target).map_err(py_err)
}

/// Every metric at `threshold` as (point, lo, hi) with pivot bootstrap intervals.
#[pyfunction]
#[pyo3(signature = (scores, labels, threshold, resamples = 1000, seed = 0))]
fn metric_report(
    scores: Vec<f64>,
    labels: Vec<bool>,
    threshold: f64,
    resamples: usize,
    seed: u64,
) -> PyResult<BTreeMap<String, Cell>> {
    check_len(&scores, &labels)?;
    let boot = BootstrapConfig {
        resamples,
        seed,
        method: CiMethod::Pivot,
    };
    let r = eval::metric_report(&scores, &labels, threshold, &boot).map_err(py_err)?;
    Ok(r.metrics
        .iter()
        .map(|(m, e)| (m.name().to_string(), (e.point, e.lo, e.hi)))
        .collect())
}

/// Severity scores from worst-value extremes: `{variable: (min, max)}`.
#[pyfunction]
fn risk_scores(extremes: BTreeMap<String, (f64, f64)>) -> BTreeMap<String, Option<f64>> {
    let mut snap = ClinicalSnapshot::default();
    for (name, (lo, hi)) in &extremes {
        snap.set_range(name, *lo, *hi);
    }
    let panel = RiskScorePanel::compute(&snap, &ScoreTables::default_tables());
    ["sofa", "saps2", "oasis", "apache2", "sirs", "shock_index", "pf_ratio"]
        .into_iter()
        .map(|k| (k.to_string(), panel.get(k)))
        .collect()
}

/// Cleaned, sentence-filtered tokens of one note.
#[pyfunction]
fn note_tokens(text: &str) -> Vec<String> {
    NotePipeline::with_defaults().note_tokens(text)
}

/// Token chunks of one note after the cap and overflow rules.
#[pyfunction]
fn note_chunks(text: &str) -> Vec<Vec<String>> {
    let p = NotePipeline::with_defaults();
    let tokens = p.note_tokens(text);
    p.chunk_tokens("", 0, &tokens).chunks.into_iter().map(|c| c.tokens).collect()
}

#[pyfunction]
fn approximate_entropy(x: Vec<f64>, m: usize, r: f64) -> Option<f64> {
    vitals::approximate_entropy(&x, m, r)
}

#[pyfunction]
fn sample_entropy(x: Vec<f64>, m: usize, r: f64) -> Option<f64> {
    vitals::sample_entropy(&x, m, r)
}

/// Generate a synthetic cohort and run the whole pipeline in memory.
/// Returns test AUROC per model variant and the rendered report.
#[pyfunction]
#[pyo3(signature = (seed, n_stays = 1000))]
fn run_synthetic(py: Python<'_>, seed: u64, n_stays: usize) -> PyResult<(BTreeMap<String, f64>, String)> {
    py.detach(|| run_synthetic_inner(seed, n_stays)).map_err(py_err)
}

fn run_synthetic_inner(seed: u64, n_stays: usize) -> icu_mortality::Result<(BTreeMap<String, f64>, String)> {
    let mut cfg = RunConfig::with_seed(seed);
    cfg.synth.n_stays = n_stays;
    cfg.validate()?;
    let cohort = generate_synthetic_cohort(&cfg.synth)?;
    let (stays, _) = pipeline::ingest(cohort.events, &cohort.statics, &cohort.notes);
    let (harmonized, _) = pipeline::harmonize(&stays);
    let table = Featurizer::new(cfg.features())?.featurize(&stays, &harmonized, &cohort.notes)?;
    let split = pipeline::split_table(&table, cfg.split.fractions, cfg.split_seed())?;
    let models = pipeline::train_variants(&table, &split, &cfg.train, cfg.fusion, &Variant::ALL)?;
    let rows: Vec<usize> = (0..table.stays.len()).collect();
    let ids: Vec<String> = table.stays.iter().map(|s| s.stay_id.clone()).collect();
    let preds = models
        .iter()
        .map(|m| {
            Ok(Predictions {
                variant: m.variant,
                stay_ids: ids.clone(),
                scores: m.predict(&table, &rows)?,
            })
        })
        .collect::<icu_mortality::Result<Vec<_>>>()?;
    let inputs = models.last().map(|m| &m.inputs);
    let evaluation = pipeline::evaluate(&table, &split, &preds, &cfg.eval, cfg.eval_seed(), inputs)?;
    let combined = preds.iter().find(|p| p.variant == Variant::Combined).expect("all variants trained");
    let audits = pipeline::audit(&table, &split, combined, &cfg.eval)?;
    let (text, _) = pipeline::render_report(&evaluation, &audits);
    let aurocs = evaluation
        .variants
        .iter()
        .filter_map(|v| v.test.get(eval::Metric::Auroc).map(|a| (v.variant.name().to_string(), a)))
        .collect();
    Ok((aurocs, text))
}

#[pymodule]
fn icumort(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", pipeline::VERSION)?;
    m.add_function(wrap_pyfunction!(auroc, m)?)?;
    m.add_function(wrap_pyfunction!(average_precision, m)?)?;
    m.add_function(wrap_pyfunction!(delong, m)?)?;
    m.add_function(wrap_pyfunction!(select_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(metric_report, m)?)?;
    m.add_function(wrap_pyfunction!(risk_scores, m)?)?;
    m.add_function(wrap_pyfunction!(note_tokens, m)?)?;
    m.add_function(wrap_pyfunction!(note_chunks, m)?)?;
    m.add_function(wrap_pyfunction!(approximate_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(sample_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(run_synthetic, m)?)?;
    Ok(())
}
