//! Cross-validated benchmarking: grid search, repeated outer partitions,
//! aggregation, significance testing and sparsity sweeps.

mod config;
mod ttest;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{Dataset, PartitionPlan, read_libsvm_file};
use crate::error::{Error, Result};
use crate::eval::{model_auc, model_sparsity};
use crate::learners::{Algorithm, train};
use crate::objective::HyperParams;
use crate::rng::mix_seed;

pub use config::{ExperimentConfig, Grid};
pub use ttest::{Direction, TTest, paired_t_test};

const INNER_REDRAWS: u64 = 10;

/// Outcome of a grid search on one training split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CvChoice {
    pub params: HyperParams<f64>,
    /// Mean validation AUC of the chosen point.
    pub cv_auc: f64,
}

/// Every grid point for `algorithm`, after de-duplication. θ is pinned to 0
/// for learners that do not use it.
pub fn grid_points(algorithm: Algorithm, config: &ExperimentConfig) -> Vec<HyperParams<f64>> {
    let thetas = if algorithm.uses_theta() {
        config.theta_grid.deduplicated()
    } else {
        vec![0.0]
    };
    let mut out = Vec::new();
    for &eta in &config.eta_grid.deduplicated() {
        for &lambda in &config.lambda_grid.deduplicated() {
            for &theta in &thetas {
                out.push(HyperParams::new(eta, lambda).with_theta(theta).with_delta(config.delta));
            }
        }
    }
    out
}

/// Inner folds for grid search. Random folds are redrawn until every
/// validation fold holds both classes; after ten failed draws the folds are
/// stratified.
pub fn inner_partition(train: &Dataset<f64>, folds: usize, seed: u64) -> Result<PartitionPlan> {
    let labels = train.labels();
    let both = |plan: &PartitionPlan| {
        (0..folds).all(|f| {
            let idx = plan.test_indices(0, f);
            let pos = idx.iter().filter(|&&i| labels[i].is_positive()).count();
            pos > 0 && pos < idx.len()
        })
    };
    for attempt in 0..INNER_REDRAWS {
        let plan = PartitionPlan::new(train.len(), folds, 1, mix_seed(&[seed, attempt]))?;
        if both(&plan) {
            return Ok(plan);
        }
    }
    PartitionPlan::stratified(&labels, folds, 1, mix_seed(&[seed, INNER_REDRAWS]))
}

/// `a` beats `b`: higher validation AUC, then larger λ, larger θ, smaller η.
fn better(a: &CvChoice, b: &CvChoice) -> bool {
    let key = |c: &CvChoice| (c.cv_auc, c.params.lambda, c.params.theta, -c.params.eta);
    let (ka, kb) = (key(a), key(b));
    ka.0.total_cmp(&kb.0)
        .then(ka.1.total_cmp(&kb.1))
        .then(ka.2.total_cmp(&kb.2))
        .then(ka.3.total_cmp(&kb.3))
        == Ordering::Greater
}

/// Picks the grid point with the best mean inner-validation AUC.
///
/// Each grid point is trained once per inner fold (single pass, seeded from
/// `seed` and the fold). Points whose every fold fails are skipped.
pub fn grid_search_cv(
    train_split: &Dataset<f64>,
    algorithm: Algorithm,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<CvChoice> {
    let points = grid_points(algorithm, config);
    if points.is_empty() {
        return Err(Error::config("empty hyperparameter grid"));
    }
    if points.len() == 1 {
        return Ok(CvChoice {
            params: points[0],
            cv_auc: f64::NAN,
        });
    }
    let plan = inner_partition(train_split, config.inner_folds, seed)?;
    let splits: Vec<(Dataset<f64>, Dataset<f64>)> = (0..config.inner_folds)
        .map(|f| {
            (
                train_split.subset(&plan.train_indices(0, f)),
                train_split.subset(&plan.test_indices(0, f)),
            )
        })
        .collect();

    let scored: Vec<Option<CvChoice>> = points
        .par_iter()
        .map(|&params| {
            let aucs: Vec<f64> = splits
                .iter()
                .enumerate()
                .filter_map(|(f, (tr, va))| {
                    let model = train(tr, algorithm, params, mix_seed(&[seed, f as u64])).ok()?;
                    model_auc(&model, va).ok()
                })
                .collect();
            (!aucs.is_empty()).then(|| CvChoice {
                params,
                cv_auc: aucs.iter().sum::<f64>() / aucs.len() as f64,
            })
        })
        .collect();

    scored
        .into_iter()
        .flatten()
        .reduce(|best, c| if better(&c, &best) { c } else { best })
        .ok_or_else(|| Error::Evaluation(format!("every grid point failed for {algorithm}")))
}

/// One outer train/test run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub repeat: usize,
    pub fold: usize,
    pub params: Option<HyperParams<f64>>,
    pub auc: f64,
    pub sparsity: f64,
    pub train_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunRecord {
    fn failed(repeat: usize, fold: usize, error: String) -> Self {
        Self {
            repeat,
            fold,
            params: None,
            auc: f64::NAN,
            sparsity: f64::NAN,
            train_ms: f64::NAN,
            error: Some(error),
        }
    }

    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Results for one (dataset, algorithm) pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellReport {
    pub dataset: String,
    pub algorithm: Algorithm,
    pub runs: Vec<RunRecord>,
    pub mean_auc: f64,
    pub std_auc: f64,
    pub mean_sparsity: f64,
    /// `None` for the reference algorithm itself or when no test was possible.
    pub significance: Option<TTest>,
}

impl CellReport {
    fn new(dataset: String, algorithm: Algorithm, mut runs: Vec<RunRecord>) -> Self {
        runs.sort_by_key(|r| (r.repeat, r.fold));
        let aucs: Vec<f64> = runs.iter().filter(|r| r.ok()).map(|r| r.auc).collect();
        let sparsities: Vec<f64> = runs.iter().filter(|r| r.ok()).map(|r| r.sparsity).collect();
        let (mean_auc, std_auc) = mean_std(&aucs);
        Self {
            dataset,
            algorithm,
            runs,
            mean_auc,
            std_auc,
            mean_sparsity: mean_std(&sparsities).0,
            significance: None,
        }
    }

    pub fn aucs(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.auc).collect()
    }
}

/// Mean and sample (n − 1) standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub reference: Algorithm,
    pub cells: Vec<CellReport>,
}

#[derive(Serialize)]
struct CellSummary<'a> {
    dataset: &'a str,
    algorithm: Algorithm,
    runs: usize,
    failed_runs: usize,
    mean_auc: f64,
    std_auc: f64,
    mean_sparsity: f64,
    chosen_params: Vec<ChosenParams>,
    significant_vs_ref: Option<bool>,
    direction: Option<&'static str>,
    t_stat: Option<f64>,
}

#[derive(Serialize)]
struct ChosenParams {
    repeat: usize,
    fold: usize,
    eta: f64,
    lambda: f64,
    theta: f64,
}

fn fixed6(v: f64) -> String {
    if v.is_nan() { "nan".to_string() } else { format!("{v:.6}") }
}

impl EvalReport {
    pub fn cell(&self, dataset: &str, algorithm: Algorithm) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| c.dataset == dataset && c.algorithm == algorithm)
    }

    /// One row per run:
    /// `dataset,algorithm,eta,lambda,theta,repeat,fold,auc,sparsity,train_ms`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "dataset,algorithm,eta,lambda,theta,repeat,fold,auc,sparsity,train_ms")?;
        for cell in &self.cells {
            for r in &cell.runs {
                let (eta, lambda, theta) = r
                    .params
                    .map_or((f64::NAN, f64::NAN, f64::NAN), |p| (p.eta, p.lambda, p.theta));
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{}",
                    cell.dataset,
                    cell.algorithm,
                    fixed6(eta),
                    fixed6(lambda),
                    fixed6(theta),
                    r.repeat,
                    r.fold,
                    fixed6(r.auc),
                    fixed6(r.sparsity),
                    fixed6(r.train_ms),
                )?;
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV is UTF-8")
    }

    /// Aggregated per-cell summary as pretty JSON.
    pub fn summary_json(&self) -> String {
        let cells: Vec<CellSummary<'_>> = self
            .cells
            .iter()
            .map(|c| CellSummary {
                dataset: &c.dataset,
                algorithm: c.algorithm,
                runs: c.runs.len(),
                failed_runs: c.runs.iter().filter(|r| !r.ok()).count(),
                mean_auc: c.mean_auc,
                std_auc: c.std_auc,
                mean_sparsity: c.mean_sparsity,
                chosen_params: c
                    .runs
                    .iter()
                    .filter_map(|r| {
                        r.params.map(|p| ChosenParams {
                            repeat: r.repeat,
                            fold: r.fold,
                            eta: p.eta,
                            lambda: p.lambda,
                            theta: p.theta,
                        })
                    })
                    .collect(),
                significant_vs_ref: c.significance.map(|t| t.significant),
                direction: c.significance.map(|t| match t.direction {
                    Direction::FavorsB => "better",
                    Direction::FavorsA => "worse",
                    Direction::Neither => "equal",
                }),
                t_stat: c.significance.map(|t| t.t_stat),
            })
            .collect();
        serde_json::to_string_pretty(&cells).expect("summary serializes")
    }

    /// Writes the run CSV to `csv_path` and the summary next to it with a
    /// `.json` extension.
    pub fn write_files(&self, csv_path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(csv_path)?);
        self.write_csv(&mut out)?;
        out.flush()?;
        std::fs::write(csv_path.with_extension("json"), self.summary_json() + "\n")?;
        Ok(())
    }
}

fn with_pool<R: Send>(jobs: Option<usize>, work: impl FnOnce() -> R + Send) -> Result<R> {
    match jobs {
        None => Ok(work()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::config(format!("thread pool: {e}")))?;
            Ok(pool.install(work))
        }
    }
}

/// Loads every dataset named in `config` and benchmarks it.
///
/// A dataset that fails to load yields error rows in each of its cells
/// instead of aborting the whole run.
pub fn run_benchmark(config: &ExperimentConfig) -> Result<EvalReport> {
    config.validate()?;
    if config.datasets.is_empty() {
        return Err(Error::config("no datasets given"));
    }
    let loaded: Vec<(String, Result<Dataset<f64>>)> = config
        .datasets
        .iter()
        .map(|p| {
            let name = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string());
            (name, read_libsvm_file(p, config.dimension))
        })
        .collect();
    benchmark_loaded(loaded, config)
}

/// Benchmarks in-memory datasets (identified by their names).
pub fn run_benchmark_on(datasets: &[Dataset<f64>], config: &ExperimentConfig) -> Result<EvalReport> {
    config.validate()?;
    let loaded = datasets.iter().map(|d| (d.name.clone(), Ok(d.clone()))).collect();
    benchmark_loaded(loaded, config)
}

struct Job<'a> {
    dataset: &'a Dataset<f64>,
    plan: &'a PartitionPlan,
    algorithm: Algorithm,
    repeat: usize,
    fold: usize,
}

fn run_job(job: &Job<'_>, config: &ExperimentConfig) -> RunRecord {
    let (r, f) = (job.repeat, job.fold);
    let outcome = (|| -> Result<RunRecord> {
        let train_split = job.dataset.subset(&job.plan.train_indices(r, f));
        let test_split = job.dataset.subset(&job.plan.test_indices(r, f));
        let inner_seed = mix_seed(&[config.seed, r as u64, f as u64]);
        let choice = grid_search_cv(&train_split, job.algorithm, config, inner_seed)?;
        let start = Instant::now();
        let model = train(&train_split, job.algorithm, choice.params, mix_seed(&[inner_seed, u64::MAX]))?;
        let elapsed = start.elapsed();
        Ok(RunRecord {
            repeat: r,
            fold: f,
            params: Some(choice.params),
            auc: model_auc(&model, &test_split)?,
            sparsity: model_sparsity(&model.current_weights()),
            train_ms: if config.record_timing { elapsed.as_secs_f64() * 1e3 } else { 0.0 },
            error: None,
        })
    })();
    outcome.unwrap_or_else(|e| {
        log::warn!("{} / {} repeat {r} fold {f}: {e}", job.dataset.name, job.algorithm);
        RunRecord::failed(r, f, e.to_string())
    })
}

fn benchmark_loaded(loaded: Vec<(String, Result<Dataset<f64>>)>, config: &ExperimentConfig) -> Result<EvalReport> {
    let mut algorithms = config.algorithms.clone();
    algorithms.sort();
    algorithms.dedup();

    let mut cells: BTreeMap<(String, Algorithm), Vec<RunRecord>> = BTreeMap::new();
    let mut prepared = Vec::new();
    for (name, ds) in loaded {
        let prepared_ds = ds.and_then(|d| {
            let d = if config.normalize { d.normalized() } else { d };
            let plan = PartitionPlan::new(d.len(), config.folds, config.repeats, config.seed)?;
            Ok((d, plan))
        });
        match prepared_ds {
            Ok(p) => prepared.push((name, p)),
            Err(e) => {
                log::warn!("dataset {name}: {e}");
                for &a in &algorithms {
                    let rows = (0..config.repeats)
                        .flat_map(|r| (0..config.folds).map(move |f| (r, f)))
                        .map(|(r, f)| RunRecord::failed(r, f, e.to_string()))
                        .collect();
                    cells.insert((name.clone(), a), rows);
                }
            }
        }
    }

    let mut jobs = Vec::new();
    for (name, (ds, plan)) in &prepared {
        for &algorithm in &algorithms {
            for repeat in 0..config.repeats {
                for fold in 0..config.folds {
                    jobs.push((
                        name.clone(),
                        Job {
                            dataset: ds,
                            plan,
                            algorithm,
                            repeat,
                            fold,
                        },
                    ));
                }
            }
        }
    }
    let records: Vec<RunRecord> = with_pool(config.jobs, || {
        jobs.par_iter().map(|(_, job)| run_job(job, config)).collect()
    })?;
    for ((name, job), rec) in jobs.iter().zip(records) {
        cells.entry((name.clone(), job.algorithm)).or_default().push(rec);
    }

    let mut report: Vec<CellReport> = cells
        .into_iter()
        .map(|((name, a), runs)| CellReport::new(name, a, runs))
        .collect();
    attach_significance(&mut report, config.reference, config.alpha);
    Ok(EvalReport {
        reference: config.reference,
        cells: report,
    })
}

fn attach_significance(cells: &mut [CellReport], reference: Algorithm, alpha: f64) {
    let refs: BTreeMap<String, Vec<f64>> = cells
        .iter()
        .filter(|c| c.algorithm == reference)
        .map(|c| (c.dataset.clone(), c.aucs()))
        .collect();
    for cell in cells.iter_mut().filter(|c| c.algorithm != reference) {
        let Some(base) = refs.get(&cell.dataset) else { continue };
        let mine = cell.aucs();
        let pairs: (Vec<f64>, Vec<f64>) = base
            .iter()
            .zip(&mine)
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .map(|(a, b)| (*a, *b))
            .unzip();
        cell.significance = paired_t_test(&pairs.0, &pairs.1, alpha).ok();
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TradeoffPoint {
    pub theta: f64,
    /// Nonzero weights as a fraction of the dimension.
    pub nonzero_proportion: f64,
    /// Nonzero weights as a fraction of the coordinates seen in training.
    pub touched_nonzero_proportion: f64,
    pub auc: f64,
}

/// Sparse-learner sweep over θ with the other hyperparameters fixed, using
/// the outer partitions described by `config`.
///
/// For each θ (ascending, de-duplicated) the learner is trained on every
/// outer training split and scored on the matching test split; the returned
/// proportions and AUCs are averages over those runs.
pub fn tradeoff_sweep(
    dataset: &Dataset<f64>,
    thetas: &[f64],
    eta: f64,
    lambda: f64,
    config: &ExperimentConfig,
) -> Result<Vec<TradeoffPoint>> {
    let ds = if config.normalize { dataset.normalized() } else { dataset.clone() };
    let plan = PartitionPlan::new(ds.len(), config.folds, config.repeats, config.seed)?;
    let splits: Vec<(Dataset<f64>, Dataset<f64>)> = (0..config.repeats)
        .flat_map(|r| (0..config.folds).map(move |f| (r, f)))
        .map(|(r, f)| (ds.subset(&plan.train_indices(r, f)), ds.subset(&plan.test_indices(r, f))))
        .collect();
    let base = HyperParams::new(eta, lambda).with_delta(config.delta);
    with_pool(config.jobs, || tradeoff_on_splits(&splits, thetas, base, config.seed))?
}

/// θ sweep over explicit `(train, test)` pairs. Split `k` trains with a seed
/// derived from `seed` and `k`; θ in `base` is ignored.
pub fn tradeoff_on_splits(
    splits: &[(Dataset<f64>, Dataset<f64>)],
    thetas: &[f64],
    base: HyperParams<f64>,
    seed: u64,
) -> Result<Vec<TradeoffPoint>> {
    if splits.is_empty() {
        return Err(Error::config("no train/test splits"));
    }
    let mut thetas = thetas.to_vec();
    if thetas.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::config("theta values must be finite and non-negative"));
    }
    thetas.sort_by(f64::total_cmp);
    thetas.dedup();

    let work: Vec<(f64, usize)> = thetas
        .iter()
        .flat_map(|&t| (0..splits.len()).map(move |k| (t, k)))
        .collect();
    let results: Vec<Result<(f64, f64, f64)>> = work
        .par_iter()
        .map(|&(theta, k)| {
            let (train_split, test_split) = &splits[k];
            let model = train(train_split, Algorithm::Sadaoam, base.with_theta(theta), mix_seed(&[seed, k as u64]))?;
            let w = model.current_weights();
            let nz = w.iter().filter(|&&v| v != 0.0).count() as f64;
            let touched = model.touched_coordinates().len().max(1) as f64;
            Ok((nz / w.len().max(1) as f64, nz / touched, model_auc(&model, test_split)?))
        })
        .collect();

    let per = splits.len() as f64;
    let mut out = Vec::with_capacity(thetas.len());
    for (chunk, &theta) in results.chunks(splits.len()).zip(&thetas) {
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        for r in chunk {
            let (x, y, z) = r.as_ref().map_err(|e| Error::Evaluation(e.to_string()))?;
            a += x;
            b += y;
            c += z;
        }
        out.push(TradeoffPoint {
            theta,
            nonzero_proportion: a / per,
            touched_nonzero_proportion: b / per,
            auc: c / per,
        });
    }
    Ok(out)
}

/// CSV with header `theta,nonzero_proportion,auc`.
pub fn write_tradeoff_csv<W: Write>(points: &[TradeoffPoint], mut out: W) -> Result<()> {
    writeln!(out, "theta,nonzero_proportion,auc")?;
    for p in points {
        writeln!(out, "{:e},{:.6},{:.6}", p.theta, p.nonzero_proportion, p.auc)?;
    }
    Ok(())
}
