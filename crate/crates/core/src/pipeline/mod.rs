//! End-to-end experiment: holdout split, preprocessing, boosted trees, SHAP,
//! the cross-validated clustering grid, and final training of every variant.

mod config;
mod report;

use std::collections::HashMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{
    fit_transform, handle_missing, load_dataset, split_holdout, stratified_kfold, FeatureMatrix, Fold,
    MissingAudit, RawTable, Schema, SplitSpec,
};
use crate::error::{ForceError, Result};
use crate::gbm::{self, GbmConfig, TreeEnsemble};
use crate::kmeans::{ClusterModel, KernelSpec};
use crate::metrics::{classification_metrics, evaluate, EvalReport, DEFAULT_THRESHOLD};
use crate::net::{self, AttentionMode, NetConfig, NetInput};
use crate::seed;
use crate::shap::{shap_matrix, Background, ShapMatrix};

pub use config::{ExperimentConfig, Variant};
pub use report::{
    emit_report, load_manifest, median, reference_f1, summarize, DatasetSummary, Manifest,
    ReferenceCheck, VariantSummary, REFERENCE_TOLERANCE,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub kernel: KernelSpec,
    pub k: usize,
    pub fold_f1: Vec<f64>,
    /// Mean over folds; `None` when the cell failed.
    pub mean_f1: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChosenCell {
    /// Position in the grid order.
    pub index: usize,
    pub kernel: KernelSpec,
    pub k: usize,
    pub mean_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub variant: Variant,
    pub report: Option<EvalReport>,
    pub error: Option<String>,
    /// Digest of the gate's weight source over train and test rows: the SHAP
    /// rows for SHAP gating, the fixed noise vector for random gating.
    pub gate_source_sha256: Option<String>,
    pub best_epoch: Option<usize>,
    pub epochs_run: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub dataset: Schema,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub n_features: usize,
    pub missing: MissingAudit,
    pub gbm_train_log_loss: f64,
    pub shap_base_value: f64,
    pub chosen: Option<ChosenCell>,
    pub cv: Vec<CvCell>,
    pub variants: Vec<VariantResult>,
    pub timings: Vec<StageTiming>,
}

impl RunRecord {
    pub fn variant(&self, v: Variant) -> Option<&VariantResult> {
        self.variants.iter().find(|r| r.variant == v)
    }
}

/// Everything fitted on the training split before the grid search.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub matrix: FeatureMatrix,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub folds: Vec<Fold>,
    pub ensemble: TreeEnsemble,
    pub background: Background,
    pub shap_train: ShapMatrix,
    pub shap_test: ShapMatrix,
    pub timings: Vec<StageTiming>,
}

impl Prepared {
    pub fn labels(&self) -> &[u8] {
        &self.matrix.labels
    }
}

fn timed<T>(timings: &mut Vec<StageTiming>, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f()?;
    timings.push(StageTiming {
        stage: stage.to_string(),
        seconds: start.elapsed().as_secs_f64(),
    });
    Ok(out)
}

/// Loads the configured dataset and imputes missing cells.
pub fn load_table(config: &ExperimentConfig) -> Result<(RawTable, MissingAudit)> {
    let table = load_dataset(config.resolve_data_path(), config.dataset)?;
    handle_missing(table)
}

/// Split, scale, fit the ensemble and compute SHAP rows. Test rows are only
/// passed through already-fitted transforms.
pub fn prepare(table: &RawTable, config: &ExperimentConfig, seed_value: u64) -> Result<Prepared> {
    let mut timings = Vec::new();
    let labels = table.labels();
    let split = SplitSpec {
        seed: seed_value,
        ..config.split
    };
    let (train, test) = split_holdout(&labels, &split)?;
    let folds = stratified_kfold(&train, &labels, &split)?;
    let matrix = timed(&mut timings, "preprocess", || fit_transform(table, &train))?;
    let gbm_config = GbmConfig {
        seed: seed_value,
        ..config.gbm
    };
    let ensemble = timed(&mut timings, "gbm", || gbm::fit(&matrix, &train, &gbm_config))?;
    let background = Background::from_training(&matrix, &train, config.background_cap, seed_value)?;
    let (shap_train, shap_test) = timed(&mut timings, "shap", || {
        Ok((
            shap_matrix(&ensemble, &matrix, &train, &background)?,
            shap_matrix(&ensemble, &matrix, &test, &background)?,
        ))
    })?;
    Ok(Prepared {
        matrix,
        train,
        test,
        folds,
        ensemble,
        background,
        shap_train,
        shap_test,
        timings,
    })
}

/// Stratified hold-out of `fraction` of `rows` for early stopping. Each class
/// keeps at least one training row.
pub fn early_stop_split(
    rows: &[usize],
    labels: &[u8],
    fraction: f64,
    seed_value: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut rng = seed::rng(seed_value);
    let mut fit = Vec::new();
    let mut validation = Vec::new();
    for class in 0..2u8 {
        let mut members: Vec<usize> = rows.iter().copied().filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        let n_val = ((fraction * members.len() as f64).round() as usize)
            .min(members.len().saturating_sub(1));
        validation.extend_from_slice(&members[..n_val]);
        fit.extend_from_slice(&members[n_val..]);
    }
    fit.sort_unstable();
    validation.sort_unstable();
    (fit, validation)
}

fn one_hot(c: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; k];
    v[c] = 1.0;
    v
}

struct ShapLookup<'a> {
    index: HashMap<usize, &'a [f64]>,
}

impl<'a> ShapLookup<'a> {
    fn new(mats: &[&'a ShapMatrix]) -> Self {
        let index = mats
            .iter()
            .flat_map(|m| m.row_ids.iter().copied().zip(m.rows.iter().map(Vec::as_slice)))
            .collect();
        ShapLookup { index }
    }

    fn get(&self, id: usize) -> Result<&'a [f64]> {
        self.index
            .get(&id)
            .copied()
            .ok_or_else(|| ForceError::InvalidArgument(format!("no SHAP row for observation {id}")))
    }
}

/// Network inputs for `rows`; `clusters` maps row id to cluster id.
fn build_inputs(
    matrix: &FeatureMatrix,
    rows: &[usize],
    shap: &ShapLookup<'_>,
    clusters: &HashMap<usize, usize>,
    k: usize,
    config: &NetConfig,
) -> Result<Vec<NetInput>> {
    rows.iter()
        .map(|&i| {
            let shap_row = if config.attention == AttentionMode::Shap {
                shap.get(i)?.to_vec()
            } else {
                Vec::new()
            };
            let cluster_onehot = if config.cluster_feature {
                let c = clusters.get(&i).copied().ok_or_else(|| {
                    ForceError::InvalidArgument(format!("no cluster for observation {i}"))
                })?;
                one_hot(c, k)
            } else {
                Vec::new()
            };
            Ok(NetInput {
                x: matrix.row(i).to_vec(),
                shap: shap_row,
                cluster_onehot,
            })
        })
        .collect()
}

fn labels_of(labels: &[u8], rows: &[usize]) -> Vec<u8> {
    rows.iter().map(|&i| labels[i]).collect()
}

/// Trains on `fit` (minus an early-stopping slice) and returns test-row
/// probabilities with the training history.
#[allow(clippy::too_many_arguments)]
fn train_and_predict(
    matrix: &FeatureMatrix,
    fit: &[usize],
    eval_rows: &[usize],
    shap: &ShapLookup<'_>,
    clusters: &HashMap<usize, usize>,
    k: usize,
    net_config: &NetConfig,
    early_stop_fraction: f64,
    split_seed: u64,
) -> Result<(Vec<f64>, net::TrainedNet)> {
    let labels = &matrix.labels;
    let (inner_fit, inner_val) = early_stop_split(fit, labels, early_stop_fraction, split_seed);
    let n_clusters = if net_config.cluster_feature { k } else { 0 };
    let train_inputs = build_inputs(matrix, &inner_fit, shap, clusters, n_clusters, net_config)?;
    let val_inputs = build_inputs(matrix, &inner_val, shap, clusters, n_clusters, net_config)?;
    let trained = net::train(
        &train_inputs,
        &labels_of(labels, &inner_fit),
        &val_inputs,
        &labels_of(labels, &inner_val),
        n_clusters,
        net_config,
    )?;
    let eval_inputs = build_inputs(matrix, eval_rows, shap, clusters, n_clusters, net_config)?;
    let probs = net::predict(&trained.params, &eval_inputs, net_config)?;
    Ok((probs, trained))
}

#[allow(clippy::too_many_arguments)]
fn fit_clusters(
    fit_shap: &[Vec<f64>],
    fit_rows: &[usize],
    assign_rows: &[usize],
    assign_shap: &[Vec<f64>],
    kernel: KernelSpec,
    k: usize,
    config: &ExperimentConfig,
    seed_value: u64,
) -> Result<HashMap<usize, usize>> {
    let model = ClusterModel::fit(fit_shap, k, kernel, seed_value, &config.kmeans)?;
    let mut map: HashMap<usize, usize> = fit_rows.iter().copied().zip(model.assignment.iter().copied()).collect();
    for (&i, row) in assign_rows.iter().zip(assign_shap) {
        map.insert(i, model.assign(row)?);
    }
    Ok(map)
}

fn cluster_seed(seed_value: u64, fold: usize) -> u64 {
    seed::derive(seed::derive(seed_value, seed::tags::CLUSTER), fold as u64)
}

/// The clustering `run_final` uses: fit on every training SHAP row.
pub fn final_cluster_model(
    prepared: &Prepared,
    kernel: KernelSpec,
    k: usize,
    config: &ExperimentConfig,
    seed_value: u64,
) -> Result<ClusterModel> {
    ClusterModel::fit(
        &prepared.shap_train.rows,
        k,
        kernel,
        cluster_seed(seed_value, prepared.folds.len()),
        &config.kmeans,
    )
}

fn early_stop_seed(seed_value: u64, fold: usize) -> u64 {
    seed::derive(seed::derive(seed_value, seed::tags::EARLY_STOP), fold as u64)
}

#[allow(clippy::too_many_arguments)]
fn cv_fold_f1(
    prepared: &Prepared,
    shap: &ShapLookup<'_>,
    fold_index: usize,
    fold: &Fold,
    kernel: KernelSpec,
    k: usize,
    config: &ExperimentConfig,
    seed_value: u64,
) -> Result<f64> {
    let fit_shap: Vec<Vec<f64>> = fold
        .fit
        .iter()
        .map(|&i| shap.get(i).map(<[f64]>::to_vec))
        .collect::<Result<_>>()?;
    let val_shap: Vec<Vec<f64>> = fold
        .validation
        .iter()
        .map(|&i| shap.get(i).map(<[f64]>::to_vec))
        .collect::<Result<_>>()?;
    let clusters = fit_clusters(
        &fit_shap,
        &fold.fit,
        &fold.validation,
        &val_shap,
        kernel,
        k,
        config,
        cluster_seed(seed_value, fold_index),
    )?;
    let net_config = NetConfig {
        seed: seed_value,
        ..Variant::Force.net_config(&config.net)
    };
    let (probs, _) = train_and_predict(
        &prepared.matrix,
        &fold.fit,
        &fold.validation,
        shap,
        &clusters,
        k,
        &net_config,
        config.early_stop_fraction,
        early_stop_seed(seed_value, fold_index),
    )?;
    let m = classification_metrics(
        &probs,
        &labels_of(prepared.labels(), &fold.validation),
        DEFAULT_THRESHOLD,
    )?;
    Ok(m.f1)
}

/// Mean validation F1 of the SHAP-gated network for every grid cell. Clusters
/// are fit on each fold's fit rows; validation rows are assigned out of sample.
pub fn run_cv_grid(prepared: &Prepared, config: &ExperimentConfig, seed_value: u64) -> Vec<CvCell> {
    let shap = ShapLookup::new(&[&prepared.shap_train]);
    config
        .grid()
        .into_par_iter()
        .map(|(kernel, k)| {
            let mut fold_f1 = Vec::with_capacity(prepared.folds.len());
            for (f, fold) in prepared.folds.iter().enumerate() {
                match cv_fold_f1(prepared, &shap, f, fold, kernel, k, config, seed_value) {
                    Ok(v) => fold_f1.push(v),
                    Err(e) => {
                        return CvCell {
                            kernel,
                            k,
                            fold_f1,
                            mean_f1: None,
                            error: Some(format!("fold {f}: {e}")),
                        }
                    }
                }
            }
            let mean = fold_f1.iter().sum::<f64>() / fold_f1.len() as f64;
            CvCell {
                kernel,
                k,
                fold_f1,
                mean_f1: Some(mean),
                error: None,
            }
        })
        .collect()
}

/// Highest mean F1; ties go to the earliest cell.
pub fn select_best(cells: &[CvCell]) -> Option<ChosenCell> {
    let mut best: Option<ChosenCell> = None;
    for (index, cell) in cells.iter().enumerate() {
        if let Some(mean_f1) = cell.mean_f1 {
            if best.is_none_or(|b| mean_f1 > b.mean_f1) {
                best = Some(ChosenCell {
                    index,
                    kernel: cell.kernel,
                    k: cell.k,
                    mean_f1,
                });
            }
        }
    }
    best
}

fn digest_rows<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> String {
    let mut h = Sha256::new();
    for row in rows {
        for v in row {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Refits clusters on all training SHAP rows, trains each variant on the
/// training split and evaluates it on the holdout.
pub fn run_final(
    prepared: &Prepared,
    chosen: Option<ChosenCell>,
    config: &ExperimentConfig,
    seed_value: u64,
) -> Vec<VariantResult> {
    let shap = ShapLookup::new(&[&prepared.shap_train, &prepared.shap_test]);
    let n_folds = prepared.folds.len();
    let clusters: Result<(HashMap<usize, usize>, usize)> = match chosen {
        None => Err(ForceError::InvalidArgument("every grid cell failed".into())),
        Some(c) => fit_clusters(
            &prepared.shap_train.rows,
            &prepared.shap_train.row_ids,
            &prepared.shap_test.row_ids,
            &prepared.shap_test.rows,
            c.kernel,
            c.k,
            config,
            cluster_seed(seed_value, n_folds),
        )
        .map(|m| (m, c.k)),
    };
    let no_clusters = HashMap::new();
    let test_labels = labels_of(prepared.labels(), &prepared.test);

    config
        .variants
        .iter()
        .map(|&variant| {
            let net_config = NetConfig {
                seed: seed_value,
                ..variant.net_config(&config.net)
            };
            let mut result = VariantResult {
                variant,
                report: None,
                error: None,
                gate_source_sha256: None,
                best_epoch: None,
                epochs_run: None,
            };
            let (cluster_map, k) = if variant.uses_clusters() {
                match &clusters {
                    Ok((m, k)) => (m, *k),
                    Err(e) => {
                        result.error = Some(format!("clustering: {e}"));
                        return result;
                    }
                }
            } else {
                (&no_clusters, 0)
            };
            let outcome = train_and_predict(
                &prepared.matrix,
                &prepared.train,
                &prepared.test,
                &shap,
                cluster_map,
                k,
                &net_config,
                config.early_stop_fraction,
                early_stop_seed(seed_value, n_folds),
            )
            .and_then(|(probs, trained)| Ok((evaluate(&probs, &test_labels)?, trained)));
            match outcome {
                Ok((report, trained)) => {
                    result.gate_source_sha256 = match net_config.attention {
                        AttentionMode::Shap => Some(digest_rows(
                            prepared
                                .train
                                .iter()
                                .chain(&prepared.test)
                                .map(|&i| shap.get(i).expect("built from the same rows")),
                        )),
                        AttentionMode::Random => {
                            Some(digest_rows([trained.params.gate_noise.as_slice()]))
                        }
                        AttentionMode::Off => None,
                    };
                    result.best_epoch = Some(trained.history.best_epoch);
                    result.epochs_run = Some(trained.history.train_loss.len());
                    result.report = Some(report);
                }
                Err(e) => result.error = Some(e.to_string()),
            }
            result
        })
        .collect()
}

/// One complete repetition on an already imputed table.
pub fn run_seed(
    table: &RawTable,
    missing: &MissingAudit,
    config: &ExperimentConfig,
    seed_value: u64,
) -> Result<RunRecord> {
    let prepared = prepare(table, config, seed_value)?;
    let mut timings = prepared.timings.clone();
    let cv = timed(&mut timings, "cv_grid", || Ok(run_cv_grid(&prepared, config, seed_value)))?;
    let chosen = select_best(&cv);
    let variants = timed(&mut timings, "final", || Ok(run_final(&prepared, chosen, config, seed_value)))?;
    let margins: Vec<f64> = prepared
        .train
        .iter()
        .map(|&i| prepared.ensemble.predict_margin(prepared.matrix.row(i)))
        .collect::<Result<_>>()?;
    Ok(RunRecord {
        config: config.clone(),
        dataset: config.dataset,
        seed: seed_value,
        n_train: prepared.train.len(),
        n_test: prepared.test.len(),
        n_features: prepared.matrix.n_cols(),
        missing: missing.clone(),
        gbm_train_log_loss: gbm::log_loss_from_margins(
            &margins,
            &labels_of(prepared.labels(), &prepared.train),
        ),
        shap_base_value: prepared.shap_train.base_value,
        chosen,
        cv,
        variants,
        timings,
    })
}

/// Every configured seed, in order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    config.validate()?;
    let (table, missing) = load_table(config)?;
    config
        .seeds()
        .into_iter()
        .map(|s| run_seed(&table, &missing, config, s))
        .collect()
}
