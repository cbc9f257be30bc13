use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::Evaluation;
use crate::eval::{BiasAudit, Estimate, Metric, MetricReport};

const COLUMNS: [Metric; 8] = [
    Metric::Auroc,
    Metric::Auprc,
    Metric::Accuracy,
    Metric::Precision,
    Metric::F1,
    Metric::Specificity,
    Metric::Mcc,
    Metric::Brier,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub threshold: f64,
    pub n: usize,
    pub n_pos: usize,
    pub metrics: BTreeMap<String, Estimate>,
}

/// Machine-readable twin of the rendered report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDoc {
    pub rows: Vec<ReportRow>,
    pub evaluation: Evaluation,
    pub audits: Vec<BiasAudit>,
}

fn row(model: &str, r: &MetricReport) -> ReportRow {
    ReportRow {
        model: model.to_string(),
        threshold: r.threshold,
        n: r.n,
        n_pos: r.n_pos,
        metrics: COLUMNS
            .iter()
            .map(|m| (m.name().to_string(), r.metrics.get(m).copied().unwrap_or(Estimate::point_only(None))))
            .collect(),
    }
}

fn rate(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "NA".into())
}

fn table(out: &mut String, rows: &[ReportRow]) {
    let mut cells: Vec<Vec<String>> = vec![std::iter::once("Model".to_string())
        .chain(COLUMNS.iter().map(|m| m.name().to_string()))
        .collect()];
    for r in rows {
        let mut line = vec![r.model.clone()];
        line.extend(COLUMNS.iter().map(|m| r.metrics[m.name()].cell()));
        cells.push(line);
    }
    let widths: Vec<usize> = (0..cells[0].len())
        .map(|j| cells.iter().map(|c| c[j].chars().count()).max().unwrap_or(0))
        .collect();
    for (i, line) in cells.iter().enumerate() {
        let padded: Vec<String> = line.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
        if i == 0 {
            let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
        }
    }
}

pub fn render_report(eval: &Evaluation, audits: &[BiasAudit]) -> (String, ReportDoc) {
    let mut rows: Vec<ReportRow> = eval.variants.iter().map(|v| row(v.variant.label(), &v.test)).collect();
    rows.extend(eval.baselines.iter().map(|b| row(&b.score.to_uppercase(), &b.test)));

    let mut out = String::new();
    let _ = writeln!(
        out,
        "Test set: {} stays, {} deaths (validation {} stays)\n",
        eval.n_test, eval.n_test_pos, eval.n_val
    );
    table(&mut out, &rows);

    if !eval.comparisons.is_empty() || eval.variants.iter().any(|v| !v.versus_baselines.is_empty()) {
        let _ = writeln!(out, "\nAUROC comparisons (DeLong)");
        for c in &eval.comparisons {
            let _ = writeln!(
                out,
                "  {} vs {}: {:.3} vs {:.3}, p = {:.4}",
                c.a, c.b, c.delong.auc_a, c.delong.auc_b, c.delong.p_value
            );
        }
        for v in &eval.variants {
            for (score, d) in &v.versus_baselines {
                let _ = writeln!(
                    out,
                    "  {} vs {score}: {:.3} vs {:.3}, p = {:.4}",
                    v.variant.name(),
                    d.auc_a,
                    d.auc_b,
                    d.p_value
                );
            }
        }
    }

    let _ = writeln!(out, "\nAUROC by death horizon");
    for v in &eval.variants {
        let cells: Vec<String> = v
            .horizons
            .iter()
            .map(|(name, r)| format!("{name} {} (n_pos {})", r.metrics[&Metric::Auroc].cell(), r.n_pos))
            .collect();
        let _ = writeln!(out, "  {}: {}", v.variant.name(), cells.join("; "));
    }

    for v in &eval.variants {
        for (key, g) in &v.groups {
            let _ = writeln!(out, "\nAUROC by {key} ({})", v.variant.name());
            for (group, r) in &g.reports {
                let _ = writeln!(out, "  {group}: {} (n {})", r.metrics[&Metric::Auroc].cell(), r.n);
            }
            for (group, n) in &g.skipped {
                let _ = writeln!(out, "  {group}: skipped (n {n})");
            }
        }
    }

    if let Some(d) = &eval.disagreement {
        let _ = writeln!(out, "\nDisagreement with {}", eval.reference_score);
        for (name, pair) in [("disagreeing predictions", &d.disagree), ("largest probability differences", &d.top_delta)] {
            match pair {
                Some(p) => {
                    let _ = writeln!(
                        out,
                        "  {name}: n {}, model AUROC {}, reference AUROC {}",
                        p.n,
                        p.model.metrics[&Metric::Auroc].cell(),
                        p.reference.metrics[&Metric::Auroc].cell()
                    );
                }
                None => {
                    let _ = writeln!(out, "  {name}: none");
                }
            }
        }
    }

    if let Some(b) = &eval.best_single_feature {
        let _ = writeln!(out, "\nBest single input column: {} (AUROC {:.3})", b.column, b.auroc);
    }

    for a in audits {
        let _ = writeln!(out, "\nBias audit by {} (threshold {:.4})", a.attribute, a.threshold);
        let _ = writeln!(out, "  {:<16} {:>6} {:>6} {:>6} {:>6} {:>6}", "group", "n", "TPR", "TNR", "FPR", "FNR");
        for (g, r) in std::iter::once(("overall".to_string(), &a.overall)).chain(a.groups.iter().map(|(k, v)| (k.clone(), v))) {
            let _ = writeln!(
                out,
                "  {:<16} {:>6} {:>6} {:>6} {:>6} {:>6}",
                g,
                r.n,
                rate(r.tpr),
                rate(r.tnr),
                rate(r.fpr),
                rate(r.fnr)
            );
        }
    }

    let doc = ReportDoc {
        rows,
        evaluation: eval.clone(),
        audits: audits.to_vec(),
    };
    (out, doc)
}
