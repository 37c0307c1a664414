//! The face-recognition evaluation harness: repeated stratified
//! splits, feature extraction by either method, nearest-neighbor
//! classification, and result tables.
//!
//! Every repetition is a pure function of `(dataset, base_seed, rep)`.
//! The repetition seed is `base_seed + rep`; purpose-specific seeds
//! (splitting, clustering, class subset choice) are drawn from separate
//! streams of a counter-based generator keyed by the repetition seed,
//! so adding a new consumer of randomness never perturbs the existing
//! ones. Repetitions run in parallel; rows come back in deterministic
//! (repetition, configuration) order regardless of worker count.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{eigen_fit, eigen_project};
use crate::clustering::{kmeans_restarts, KMeansConfig};
use crate::dataset::{stratified_holdout, ImageMatrix, LabeledDataset};
use crate::error::{Error, Result};
use crate::pixelspace::{pixel_vectors_by_value, vectorize, SampleVector};
use crate::projection::{
    build_projection, feature_variances, project, select_top_variance, FeatureVector,
    ProjectionMatrix,
};

/// Fraction of each class used for fitting and as the classifier's
/// reference set. Half/half is part of the protocol, not a knob.
pub const TRAIN_FRACTION: f64 = 0.5;

/// Method label for region-mean features in result tables.
pub const METHOD_REGION_MEANS: &str = "region_means";
/// Method label for the principal-component baseline.
pub const METHOD_EIGEN_BASELINE: &str = "eigen_baseline";

const STREAM_SPLIT: u64 = 1;
const STREAM_KMEANS: u64 = 2;
const STREAM_CLASSES_BASE: u64 = 16;

/// Draws the seed for one purpose-specific stream of a repetition.
pub fn derive_seed(rep_seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(rep_seed);
    rng.set_stream(stream);
    rng.next_u64()
}

/// Clustering knobs shared by all experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KmeansParams {
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

fn default_max_iterations() -> usize {
    300
}

fn default_tolerance() -> f64 {
    1e-6
}

fn default_restarts() -> usize {
    1
}

impl Default for KmeansParams {
    fn default() -> Self {
        Self {
            max_iterations: default_max_iterations(),
            tolerance: default_tolerance(),
            restarts: default_restarts(),
        }
    }
}

/// One accuracy measurement: a single method configuration evaluated on
/// a single repetition's split. `accuracy` is NaN when the
/// configuration was unattainable on this data (more clusters requested
/// than distinct pixel-vectors); such rows print as `NA`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub experiment: String,
    pub dataset: String,
    pub method: String,
    pub clusters_formed: usize,
    pub features_kept: usize,
    pub repetition: usize,
    pub seed: u64,
    pub accuracy: f64,
}

/// Dataset plus protocol parameters the experiment runners share.
#[derive(Debug, Clone)]
pub struct EvalContext<'a> {
    pub dataset: &'a LabeledDataset,
    pub dataset_name: &'a str,
    pub repetitions: usize,
    pub base_seed: u64,
    pub kmeans: KmeansParams,
}

impl EvalContext<'_> {
    fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::InvalidArgument(
                "repetitions must be at least 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// Label of the nearest reference vector by squared Euclidean distance,
/// lowest reference index on exact ties.
pub fn nn1_classify(reference: &[FeatureVector], labels: &[usize], query: &[f64]) -> Result<usize> {
    if reference.is_empty() {
        return Err(Error::InvalidArgument(
            "classifier needs at least one reference vector".to_string(),
        ));
    }
    if reference.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: reference.len(),
            found: labels.len(),
        });
    }
    for r in reference {
        if r.len() != query.len() {
            return Err(Error::DimensionMismatch {
                expected: query.len(),
                found: r.len(),
            });
        }
    }
    Ok(labels[nearest_reference(reference, query)])
}

fn nearest_reference(reference: &[FeatureVector], query: &[f64]) -> usize {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (i, r) in reference.iter().enumerate() {
        let mut d = 0.0;
        for (a, b) in query.iter().zip(r) {
            let t = a - b;
            d += t * t;
            if d >= best_d {
                break;
            }
        }
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Fraction of queries whose nearest reference carries their own label.
pub fn classification_accuracy(
    reference: &[FeatureVector],
    reference_labels: &[usize],
    queries: &[FeatureVector],
    query_labels: &[usize],
) -> Result<f64> {
    if queries.is_empty() {
        return Err(Error::InvalidArgument(
            "accuracy over zero queries is undefined".to_string(),
        ));
    }
    if queries.len() != query_labels.len() {
        return Err(Error::DimensionMismatch {
            expected: queries.len(),
            found: query_labels.len(),
        });
    }
    // Validate once so the parallel loop can use the bare scan.
    nn1_classify(reference, reference_labels, &queries[0])?;
    if let Some(bad) = queries.iter().find(|q| q.len() != queries[0].len()) {
        return Err(Error::DimensionMismatch {
            expected: queries[0].len(),
            found: bad.len(),
        });
    }

    let correct = queries
        .par_iter()
        .zip(query_labels.par_iter())
        .filter(|(q, &label)| reference_labels[nearest_reference(reference, q)] == label)
        .count();
    Ok(correct as f64 / queries.len() as f64)
}

/// Clusters the training set's pixel-vectors and returns the region-mean
/// projection. `seed` feeds clustering initialization; `params.restarts`
/// independent runs are tried and the best objective kept.
pub fn fit_region_projection(
    train: &[ImageMatrix],
    clusters: usize,
    seed: u64,
    params: &KmeansParams,
) -> Result<ProjectionMatrix> {
    let set = pixel_vectors_by_value(train)?;
    let cfg = KMeansConfig {
        clusters,
        seed,
        max_iterations: params.max_iterations,
        tolerance: params.tolerance,
    };
    let partition = kmeans_restarts(&set, &cfg, params.restarts)?;
    Ok(build_projection(&partition))
}

/// One repetition's materialized split.
struct RepSplit {
    rep_seed: u64,
    kmeans_seed: u64,
    train_images: Vec<ImageMatrix>,
    train_vectors: Vec<SampleVector>,
    train_labels: Vec<usize>,
    test_vectors: Vec<SampleVector>,
    test_labels: Vec<usize>,
}

fn prepare_rep(ds: &LabeledDataset, base_seed: u64, rep: usize) -> Result<RepSplit> {
    let rep_seed = base_seed.wrapping_add(rep as u64);
    let split = stratified_holdout(ds, TRAIN_FRACTION, derive_seed(rep_seed, STREAM_SPLIT))?;

    let gather_images = |indices: &[usize]| -> Vec<ImageMatrix> {
        indices.iter().map(|&i| ds.samples()[i].clone()).collect()
    };
    let gather_labels =
        |indices: &[usize]| -> Vec<usize> { indices.iter().map(|&i| ds.labels()[i]).collect() };

    let train_images = gather_images(split.train_indices());
    let train_vectors = train_images.iter().map(vectorize).collect();
    let test_vectors = split
        .test_indices()
        .iter()
        .map(|&i| vectorize(&ds.samples()[i]))
        .collect();

    Ok(RepSplit {
        rep_seed,
        kmeans_seed: derive_seed(rep_seed, STREAM_KMEANS),
        train_labels: gather_labels(split.train_indices()),
        test_labels: gather_labels(split.test_indices()),
        train_images,
        train_vectors,
        test_vectors,
    })
}

fn project_all(w: &ProjectionMatrix, vectors: &[SampleVector]) -> Result<Vec<FeatureVector>> {
    vectors.iter().map(|x| project(w, x)).collect()
}

/// Accuracy of the region-mean features induced by `w` on one split.
fn region_accuracy(w: &ProjectionMatrix, rep: &RepSplit) -> Result<f64> {
    let train = project_all(w, &rep.train_vectors)?;
    let test = project_all(w, &rep.test_vectors)?;
    classification_accuracy(&train, &rep.train_labels, &test, &rep.test_labels)
}

/// Sweeps the number of clusters formed (and kept) by the region-mean
/// method. Cluster counts exceeding the distinct pixel-vector count
/// yield NaN-accuracy rows rather than aborting the sweep.
pub fn run_k_sweep(ctx: &EvalContext, clusters_formed: &[usize]) -> Result<Vec<EvalResult>> {
    ctx.validate()?;
    if clusters_formed.is_empty() {
        return Err(Error::InvalidArgument(
            "cluster sweep list is empty".to_string(),
        ));
    }

    let per_rep: Vec<Vec<EvalResult>> = (0..ctx.repetitions)
        .into_par_iter()
        .map(|rep| -> Result<Vec<EvalResult>> {
            let rs = prepare_rep(ctx.dataset, ctx.base_seed, rep)?;
            let mut rows = Vec::with_capacity(clusters_formed.len());
            for &k in clusters_formed {
                let accuracy =
                    match fit_region_projection(&rs.train_images, k, rs.kmeans_seed, &ctx.kmeans)
                    {
                        Ok(w) => region_accuracy(&w, &rs)?,
                        Err(Error::ClusterCount { .. }) => f64::NAN,
                        Err(e) => return Err(e),
                    };
                rows.push(EvalResult {
                    experiment: "k_sweep".to_string(),
                    dataset: ctx.dataset_name.to_string(),
                    method: METHOD_REGION_MEANS.to_string(),
                    clusters_formed: k,
                    features_kept: k,
                    repetition: rep,
                    seed: rs.rep_seed,
                    accuracy,
                });
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(per_rep.concat())
}

/// Fits both methods on the training images of a few randomly chosen
/// classes, then classifies the whole population with the resulting
/// features. Measures how person-specific the learned projections are.
///
/// The class subset depends only on `(rep, count)`, so both methods see
/// the identical subset. The region method forms `features_kept`
/// clusters; the baseline keeps every component its subset supports.
pub fn run_few_classes(
    ctx: &EvalContext,
    class_counts: &[usize],
    features_kept: usize,
) -> Result<Vec<EvalResult>> {
    ctx.validate()?;
    if class_counts.is_empty() {
        return Err(Error::InvalidArgument(
            "class count list is empty".to_string(),
        ));
    }
    if features_kept == 0 {
        return Err(Error::InvalidArgument(
            "features_kept must be at least 1".to_string(),
        ));
    }
    let total_classes = ctx.dataset.class_count();
    if let Some(&bad) = class_counts.iter().find(|&&c| c == 0 || c > total_classes) {
        return Err(Error::InvalidArgument(format!(
            "cannot fit on {bad} of {total_classes} classes"
        )));
    }

    let per_rep: Vec<Vec<EvalResult>> = (0..ctx.repetitions)
        .into_par_iter()
        .map(|rep| -> Result<Vec<EvalResult>> {
            let rs = prepare_rep(ctx.dataset, ctx.base_seed, rep)?;
            let mut rows = Vec::new();
            for &count in class_counts {
                let subset_seed =
                    derive_seed(rs.rep_seed, STREAM_CLASSES_BASE + count as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(subset_seed);
                let mut chosen =
                    rand::seq::index::sample(&mut rng, total_classes, count).into_vec();
                chosen.sort_unstable();

                let fit_images: Vec<ImageMatrix> = rs
                    .train_images
                    .iter()
                    .zip(&rs.train_labels)
                    .filter(|(_, label)| chosen.contains(label))
                    .map(|(img, _)| img.clone())
                    .collect();

                let experiment = format!("few_classes_c{count}");

                let region_accuracy = match fit_region_projection(
                    &fit_images,
                    features_kept,
                    rs.kmeans_seed,
                    &ctx.kmeans,
                ) {
                    Ok(w) => region_accuracy(&w, &rs)?,
                    Err(Error::ClusterCount { .. }) => f64::NAN,
                    Err(e) => return Err(e),
                };
                rows.push(EvalResult {
                    experiment: experiment.clone(),
                    dataset: ctx.dataset_name.to_string(),
                    method: METHOD_REGION_MEANS.to_string(),
                    clusters_formed: features_kept,
                    features_kept,
                    repetition: rep,
                    seed: rs.rep_seed,
                    accuracy: region_accuracy,
                });

                let fit_vectors: Vec<SampleVector> = fit_images.iter().map(vectorize).collect();
                let model = eigen_fit(&fit_vectors, usize::MAX)?;
                let train: Vec<FeatureVector> = rs
                    .train_vectors
                    .iter()
                    .map(|x| eigen_project(&model, x))
                    .collect::<Result<_>>()?;
                let test: Vec<FeatureVector> = rs
                    .test_vectors
                    .iter()
                    .map(|x| eigen_project(&model, x))
                    .collect::<Result<_>>()?;
                let accuracy = if model.rank() == 0 {
                    f64::NAN
                } else {
                    classification_accuracy(&train, &rs.train_labels, &test, &rs.test_labels)?
                };
                rows.push(EvalResult {
                    experiment,
                    dataset: ctx.dataset_name.to_string(),
                    method: METHOD_EIGEN_BASELINE.to_string(),
                    clusters_formed: 0,
                    features_kept: model.rank(),
                    repetition: rep,
                    seed: rs.rep_seed,
                    accuracy,
                });
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(per_rep.concat())
}

/// Forms more clusters than will be kept, then keeps only the
/// highest-variance region features. Each `formed` count is fitted
/// once; every `kept` count at or below it reuses those features, so
/// rows within one `formed` group differ only in the feature mask.
pub fn run_overcluster(
    ctx: &EvalContext,
    formed: &[usize],
    kept: &[usize],
) -> Result<Vec<EvalResult>> {
    ctx.validate()?;
    if formed.is_empty() || kept.is_empty() {
        return Err(Error::InvalidArgument(
            "overcluster lists must be non-empty".to_string(),
        ));
    }

    let per_rep: Vec<Vec<EvalResult>> = (0..ctx.repetitions)
        .into_par_iter()
        .map(|rep| -> Result<Vec<EvalResult>> {
            let rs = prepare_rep(ctx.dataset, ctx.base_seed, rep)?;
            let mut rows = Vec::new();
            for &g in formed {
                let experiment = format!("overcluster_g{g}");
                let fitted =
                    match fit_region_projection(&rs.train_images, g, rs.kmeans_seed, &ctx.kmeans)
                    {
                        Ok(w) => Some(w),
                        Err(Error::ClusterCount { .. }) => None,
                        Err(e) => return Err(e),
                    };
                let features = match &fitted {
                    Some(w) => Some((
                        project_all(w, &rs.train_vectors)?,
                        project_all(w, &rs.test_vectors)?,
                    )),
                    None => None,
                };
                let variances = match &features {
                    Some((train, _)) => Some(feature_variances(train)?),
                    None => None,
                };

                for &q in kept {
                    if q > g {
                        continue;
                    }
                    let accuracy = match (&features, &variances) {
                        (Some((train, test)), Some(var)) => {
                            let plan = select_top_variance(var, q)?;
                            let train_kept: Vec<FeatureVector> = train
                                .iter()
                                .map(|f| plan.apply(f))
                                .collect::<Result<_>>()?;
                            let test_kept: Vec<FeatureVector> = test
                                .iter()
                                .map(|f| plan.apply(f))
                                .collect::<Result<_>>()?;
                            classification_accuracy(
                                &train_kept,
                                &rs.train_labels,
                                &test_kept,
                                &rs.test_labels,
                            )?
                        }
                        _ => f64::NAN,
                    };
                    rows.push(EvalResult {
                        experiment: experiment.clone(),
                        dataset: ctx.dataset_name.to_string(),
                        method: METHOD_REGION_MEANS.to_string(),
                        clusters_formed: g,
                        features_kept: q,
                        repetition: rep,
                        seed: rs.rep_seed,
                        accuracy,
                    });
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(per_rep.concat())
}

/// Mean and sample standard deviation; a single value has deviation 0.
pub fn accuracy_stats(values: &[f64]) -> (f64, f64) {
    let m = values.len();
    let mean = values.iter().sum::<f64>() / m as f64;
    if m < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values
        .iter()
        .map(|v| {
            let d = v - mean;
            d * d
        })
        .sum();
    (mean, (ss / (m - 1) as f64).sqrt())
}

/// Per-configuration aggregate over repetitions. `mean_accuracy` and
/// `std_accuracy` are `None` when any repetition was unattainable.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub experiment: String,
    pub dataset: String,
    pub method: String,
    pub clusters_formed: usize,
    pub features_kept: usize,
    pub repetitions: usize,
    pub mean_accuracy: Option<f64>,
    pub std_accuracy: Option<f64>,
}

/// Groups result rows by configuration, in first-appearance order, and
/// aggregates their accuracies.
pub fn summarize(rows: &[EvalResult]) -> Vec<SummaryRow> {
    let mut keys: Vec<(&str, &str, &str, usize, usize)> = Vec::new();
    let mut groups: Vec<Vec<f64>> = Vec::new();
    for row in rows {
        let key = (
            row.experiment.as_str(),
            row.dataset.as_str(),
            row.method.as_str(),
            row.clusters_formed,
            row.features_kept,
        );
        match keys.iter().position(|k| *k == key) {
            Some(i) => groups[i].push(row.accuracy),
            None => {
                keys.push(key);
                groups.push(vec![row.accuracy]);
            }
        }
    }
    keys.iter()
        .zip(&groups)
        .map(|(&(experiment, dataset, method, clusters_formed, features_kept), accs)| {
            let (mean, std) = if accs.iter().all(|a| a.is_finite()) {
                let (m, s) = accuracy_stats(accs);
                (Some(m), Some(s))
            } else {
                (None, None)
            };
            SummaryRow {
                experiment: experiment.to_string(),
                dataset: dataset.to_string(),
                method: method.to_string(),
                clusters_formed,
                features_kept,
                repetitions: accs.len(),
                mean_accuracy: mean,
                std_accuracy: std,
            }
        })
        .collect()
}

fn format_accuracy(a: f64) -> String {
    if a.is_finite() {
        format!("{a:.6}")
    } else {
        "NA".to_string()
    }
}

/// Renders result rows as CSV with a fixed header and six-decimal
/// accuracies; unattainable rows print `NA`.
pub fn results_to_csv(rows: &[EvalResult]) -> String {
    let mut out =
        String::from("experiment,dataset,method,clusters_formed,features_kept,repetition,seed,accuracy\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.experiment,
            r.dataset,
            r.method,
            r.clusters_formed,
            r.features_kept,
            r.repetition,
            r.seed,
            format_accuracy(r.accuracy)
        ));
    }
    out
}

/// Renders summary rows as CSV, `NA` where a configuration was
/// unattainable in any repetition.
pub fn summary_to_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(
        "experiment,dataset,method,clusters_formed,features_kept,repetitions,mean_accuracy,std_accuracy\n",
    );
    for r in rows {
        let fmt_opt = |v: Option<f64>| match v {
            Some(x) => format!("{x:.6}"),
            None => "NA".to_string(),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.experiment,
            r.dataset,
            r.method,
            r.clusters_formed,
            r.features_kept,
            r.repetitions,
            fmt_opt(r.mean_accuracy),
            fmt_opt(r.std_accuracy)
        ));
    }
    out
}

pub fn write_results_csv(rows: &[EvalResult], path: &Path) -> Result<()> {
    fs::write(path, results_to_csv(rows)).map_err(|e| Error::io(path, e))
}

pub fn write_summary_csv(rows: &[SummaryRow], path: &Path) -> Result<()> {
    fs::write(path, summary_to_csv(rows)).map_err(|e| Error::io(path, e))
}

fn default_clusters_formed() -> Vec<usize> {
    vec![2, 4, 8, 16, 32, 64, 128, 256, 512, 1024, 2048]
}

fn default_projection_training_classes() -> Vec<usize> {
    vec![1, 2, 3]
}

fn default_few_classes_features() -> usize {
    512
}

fn default_overcluster_formed() -> Vec<usize> {
    vec![64, 128, 256]
}

fn default_overcluster_kept() -> Vec<usize> {
    vec![2, 4, 8, 16, 32, 64, 128, 256]
}

/// A full experiment description, deserialized from JSON. Unknown
/// fields are rejected so typos fail loudly instead of silently running
/// the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset_name: String,
    pub dataset_root: PathBuf,
    /// Optional `[width, height]` every image is resized to on load.
    #[serde(default)]
    pub resize: Option<[usize; 2]>,
    pub repetitions: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub kmeans: KmeansParams,
    /// Cluster counts for the sweep experiment.
    #[serde(default = "default_clusters_formed")]
    pub clusters_formed: Vec<usize>,
    /// Class-subset sizes for the few-classes experiment.
    #[serde(default = "default_projection_training_classes")]
    pub projection_training_classes: Vec<usize>,
    /// Cluster count the region method forms in the few-classes
    /// experiment.
    #[serde(default = "default_few_classes_features")]
    pub few_classes_features: usize,
    /// Cluster counts fitted by the over-clustering experiment.
    #[serde(default = "default_overcluster_formed")]
    pub overcluster_formed: Vec<usize>,
    /// Feature counts kept per fitted count in the over-clustering
    /// experiment; entries above the formed count are skipped.
    #[serde(default = "default_overcluster_kept")]
    pub overcluster_kept: Vec<usize>,
}

/// Loads and sanity-checks an experiment configuration.
pub fn load_experiment_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let config: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
    if config.repetitions == 0 {
        return Err(Error::config(
            "repetitions",
            "must be at least 1".to_string(),
        ));
    }
    if let Some([w, h]) = config.resize {
        if w == 0 || h == 0 {
            return Err(Error::config("resize", format!("degenerate size {w}x{h}")));
        }
    }
    Ok(config)
}

/// Identity of the dataset an experiment actually ran on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetProvenance {
    pub name: String,
    pub root: String,
    pub sha256: String,
    pub classes: usize,
    pub samples: usize,
    pub width: usize,
    pub height: usize,
}

/// Everything needed to reproduce a run: the resolved configuration and
/// the dataset's identity, including a content checksum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub dataset: DatasetProvenance,
}

pub fn write_run_manifest(manifest: &RunManifest, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::config("manifest", e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
