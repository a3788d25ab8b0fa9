use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ChosenCell, RunRecord, Variant};
use crate::dataset::Schema;
use crate::error::{ForceError, Result};

/// Published F1 of the SHAP-gated network per dataset, used only to flag
/// magnitude deviations in the manifest.
pub fn reference_f1(dataset: Schema) -> f64 {
    match dataset {
        Schema::Diabetes => 0.98,
        Schema::Heart => 0.80,
        Schema::Credit => 0.86,
    }
}

pub const REFERENCE_TOLERANCE: f64 = 0.07;

/// Median of the finite values; the mean of the middle pair for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub n_ok: usize,
    pub n_failed: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub accuracy: Option<f64>,
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCheck {
    pub reference_f1: f64,
    pub median_f1: Option<f64>,
    pub deviation: Option<f64>,
    pub tolerance: f64,
    pub within_tolerance: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub dataset: Schema,
    pub seeds: Vec<u64>,
    pub chosen: Vec<Option<ChosenCell>>,
    pub variants: Vec<VariantSummary>,
    pub force_reference: ReferenceCheck,
}

impl DatasetSummary {
    pub fn variant(&self, v: Variant) -> Option<&VariantSummary> {
        self.variants.iter().find(|s| s.variant == v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub datasets: Vec<DatasetSummary>,
    pub records: Vec<RunRecord>,
}

/// Per-dataset medians over seeds, datasets in order of first appearance.
pub fn summarize(records: &[RunRecord]) -> Vec<DatasetSummary> {
    let mut datasets: Vec<Schema> = Vec::new();
    for r in records {
        if !datasets.contains(&r.dataset) {
            datasets.push(r.dataset);
        }
    }
    datasets
        .into_iter()
        .map(|dataset| {
            let runs: Vec<&RunRecord> = records.iter().filter(|r| r.dataset == dataset).collect();
            let variants: Vec<VariantSummary> = Variant::ALL
                .into_iter()
                .filter(|&v| runs.iter().any(|r| r.variant(v).is_some()))
                .map(|v| {
                    let results: Vec<_> = runs.iter().filter_map(|r| r.variant(v)).collect();
                    let reports: Vec<_> = results.iter().filter_map(|r| r.report.as_ref()).collect();
                    let col = |f: fn(&crate::metrics::EvalReport) -> f64| {
                        median(&reports.iter().map(|r| f(r)).collect::<Vec<_>>())
                    };
                    VariantSummary {
                        variant: v,
                        n_ok: reports.len(),
                        n_failed: results.len() - reports.len(),
                        precision: col(|r| r.precision),
                        recall: col(|r| r.recall),
                        f1: col(|r| r.f1),
                        accuracy: col(|r| r.accuracy),
                        auc: col(|r| r.auc),
                    }
                })
                .collect();
            let reference = reference_f1(dataset);
            let median_f1 = variants
                .iter()
                .find(|s| s.variant == Variant::Force)
                .and_then(|s| s.f1);
            let deviation = median_f1.map(|m| m - reference);
            DatasetSummary {
                dataset,
                seeds: runs.iter().map(|r| r.seed).collect(),
                chosen: runs.iter().map(|r| r.chosen).collect(),
                variants,
                force_reference: ReferenceCheck {
                    reference_f1: reference,
                    median_f1,
                    deviation,
                    tolerance: REFERENCE_TOLERANCE,
                    within_tolerance: deviation.is_some_and(|d| d.abs() <= REFERENCE_TOLERANCE),
                },
            }
        })
        .collect()
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

pub fn metrics_csv(summary: &DatasetSummary) -> String {
    let mut s = String::from("variant,n_ok,n_failed,precision,recall,f1,accuracy,auc\n");
    for v in &summary.variants {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            v.variant,
            v.n_ok,
            v.n_failed,
            cell(v.precision),
            cell(v.recall),
            cell(v.f1),
            cell(v.accuracy),
            cell(v.auc)
        );
    }
    s
}

pub fn roc_csv(records: &[RunRecord], dataset: Schema, variant: Variant) -> String {
    let mut s = String::from("seed,fpr,tpr\n");
    for r in records.iter().filter(|r| r.dataset == dataset) {
        if let Some(report) = r.variant(variant).and_then(|v| v.report.as_ref()) {
            for (fpr, tpr) in &report.roc_points {
                let _ = writeln!(s, "{},{fpr:.6},{tpr:.6}", r.seed);
            }
        }
    }
    s
}

pub fn summary_markdown(summaries: &[DatasetSummary]) -> String {
    let mut s = String::from("# Results\n\nMedians over seeds on the holdout split.\n");
    for d in summaries {
        let _ = writeln!(s, "\n## {}\n", d.dataset);
        let _ = writeln!(s, "| variant | precision | recall | F1 | accuracy | AUC | runs ok | runs failed |");
        let _ = writeln!(s, "|---|---|---|---|---|---|---|---|");
        for v in &d.variants {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} | {} | {} |",
                v.variant,
                cell(v.precision),
                cell(v.recall),
                cell(v.f1),
                cell(v.accuracy),
                cell(v.auc),
                v.n_ok,
                v.n_failed
            );
        }
        let chosen: Vec<String> = d
            .seeds
            .iter()
            .zip(&d.chosen)
            .map(|(seed, c)| match c {
                Some(c) => format!("seed {seed}: {} k={}", c.kernel, c.k),
                None => format!("seed {seed}: none"),
            })
            .collect();
        let _ = writeln!(s, "\nChosen clustering: {}.", chosen.join("; "));
        let r = &d.force_reference;
        let _ = writeln!(
            s,
            "\nReference F1 {:.2}; median F1 {}; deviation {}; within ±{:.2}: {}.",
            r.reference_f1,
            cell(r.median_f1),
            cell(r.deviation),
            r.tolerance,
            if r.within_tolerance { "yes" } else { "no" }
        );
    }
    s
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| ForceError::io(path, e))
}

/// Writes `metrics_<dataset>.csv`, `roc_<dataset>_<variant>.csv`,
/// `summary.md` and `manifest.json` into `out_dir`. Returns the paths written.
pub fn emit_report(records: &[RunRecord], out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(ForceError::InvalidArgument("no run records to report".into()));
    }
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| ForceError::io(out_dir, e))?;
    let summaries = summarize(records);
    let mut written = Vec::new();
    for d in &summaries {
        let path = out_dir.join(format!("metrics_{}.csv", d.dataset));
        write(&path, &metrics_csv(d))?;
        written.push(path);
        for v in &d.variants {
            let path = out_dir.join(format!("roc_{}_{}.csv", d.dataset, v.variant));
            write(&path, &roc_csv(records, d.dataset, v.variant))?;
            written.push(path);
        }
    }
    let path = out_dir.join("summary.md");
    write(&path, &summary_markdown(&summaries))?;
    written.push(path);

    let manifest = Manifest {
        datasets: summaries,
        records: records.to_vec(),
    };
    let path = out_dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest always serializes");
    write(&path, &json)?;
    written.push(path);
    Ok(written)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ForceError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| ForceError::Config(format!("{}: {e}", path.display())))
}
