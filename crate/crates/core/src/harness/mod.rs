//! Experiment protocols: k-fold cross-validation with validation-based
//! model selection, grid search, label-masking sweeps, and the on-disk
//! run layout.
//!
//! Independent (config, fold) jobs run on a worker pool; every job owns its
//! nets and random streams, and results are gathered in job order, so
//! output files do not depend on the worker count.

mod grid;
mod output;
mod synthetic;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use crate::adversarial::{train_adversarial, AdvEpochLog};
use crate::config::{ExperimentConfig, Framework};
use crate::data::{
    apply_random_mask, binarize_labels, load_dataset, make_folds, normalize_dataset, Dataset, FoldPlan, LoadOptions,
    QidPolicy,
};
use crate::erm::{evaluate, train_erm, ErmEpochLog, TrainOptions};
use crate::metrics::{EvalOptions, MetricKey, MetricReport};
use crate::nn::{AdamState, ScoringNet};
use crate::{seed, Error, Result};

pub use grid::{expand_grid, grid_search, mask_sweep, GridOutcome, GridRow, SweepOutcome, SweepRow};
pub use output::{
    summary_csv, write_cv_outputs, write_grid_outputs, write_single_outputs, write_sweep_outputs, FAILED_MARKER,
    GRID_CSV, SUMMARY_CSV, SWEEP_CSV,
};
pub use synthetic::{make_synthetic_dataset, quantile_grades, SyntheticData, SYNTHETIC_GRADES};

/// Scheduling and cancellation shared by all jobs of a command.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub workers: usize,
    pub cancel: Arc<AtomicBool>,
}

impl Default for RunContext {
    fn default() -> Self {
        RunContext {
            workers: 1,
            cancel: Arc::new(AtomicBool::new(false)),
        }
    }
}

impl RunContext {
    pub fn new(workers: usize) -> Self {
        RunContext {
            workers: workers.max(1),
            ..RunContext::default()
        }
    }

    pub fn is_cancelled(&self) -> bool {
        self.cancel.load(Ordering::SeqCst)
    }

    /// Runs `f(0..n)` on the worker pool. A cancellation request stops
    /// jobs that have not started yet.
    pub(crate) fn run_jobs<T, F>(&self, n: usize, f: F) -> Vec<Result<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync,
    {
        let guarded = |i: usize| {
            if self.is_cancelled() {
                Err(Error::Cancelled)
            } else {
                f(i)
            }
        };
        if self.workers <= 1 || n <= 1 {
            return (0..n).map(guarded).collect();
        }
        use rayon::prelude::*;
        match rayon::ThreadPoolBuilder::new().num_threads(self.workers).build() {
            Ok(pool) => pool.install(|| (0..n).into_par_iter().map(guarded).collect()),
            Err(e) => {
                log::warn!("worker pool unavailable ({e}); running sequentially");
                (0..n).map(guarded).collect()
            }
        }
    }
}

/// The dataset an experiment runs on, plus the hidden-utility oracle when
/// it is synthetic.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub dataset: Dataset,
    pub synthetic: Option<SyntheticData>,
}

/// Loads (or generates) the dataset and applies the configured
/// normalization and binarization.
pub fn prepare_dataset(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let d = &cfg.data;
    let (raw, synthetic) = match &d.path {
        Some(path) => {
            let opts = LoadOptions {
                feature_dim: d.feature_dim,
                qid_policy: if d.merge_qids {
                    QidPolicy::Merge
                } else {
                    QidPolicy::Error
                },
            };
            (load_dataset(path, &opts)?, None)
        }
        None => {
            let s = &d.synthetic;
            let syn = make_synthetic_dataset(
                s.num_queries,
                s.docs_per_query,
                s.dim,
                s.noise,
                seed::derive(cfg.seed, "synthetic", &[]),
            )?;
            (syn.dataset.clone(), Some(syn))
        }
    };
    let mut dataset = normalize_dataset(&raw, d.normalization);
    if let Some(t) = d.binarize_threshold {
        dataset = binarize_labels(&dataset, t);
    }
    Ok(PreparedData { dataset, synthetic })
}

/// Fold plan used for a config over `data`.
pub fn fold_plan(cfg: &ExperimentConfig, data: &Dataset) -> Result<FoldPlan> {
    make_folds(data.len(), cfg.train.num_folds, seed::derive(cfg.seed, "folds", &[]))
}

#[derive(Debug, Clone)]
pub enum TrainLog {
    Erm(Vec<ErmEpochLog>),
    Adversarial(Vec<AdvEpochLog>),
}

#[derive(Debug, Clone)]
pub struct FoldResult {
    pub fold: usize,
    /// Test reports by split name: `test` for ERM, `test_generator` and
    /// `test_discriminator` for adversarial runs.
    pub test: Vec<(String, MetricReport)>,
    /// Validation nDCG at the selection cutoff of the reported model.
    pub selection: Option<f64>,
    /// Epoch of the reported model.
    pub selected_epoch: usize,
    pub log: TrainLog,
    /// Human-readable run notes (written to `run.log`).
    pub notes: Vec<String>,
    /// Reported nets by checkpoint file name.
    pub checkpoints: Vec<(String, ScoringNet)>,
    pub train_masked: usize,
    pub vali_masked: usize,
    pub test_masked: usize,
}

impl FoldResult {
    /// The split whose metrics represent the fold in summaries.
    pub fn primary(&self) -> &MetricReport {
        &self.test.last().expect("at least one test report").1
    }

    pub fn report(&self, split: &str) -> Option<&MetricReport> {
        self.test.iter().find(|(s, _)| s == split).map(|(_, r)| r)
    }
}

fn masked_docs(data: &Dataset) -> usize {
    data.groups
        .iter()
        .map(|g| g.masked.iter().filter(|&&m| m).count())
        .sum()
}

/// Trains and evaluates one fold.
pub fn run_fold(cfg: &ExperimentConfig, data: &Dataset, plan: &FoldPlan, fold: usize) -> Result<FoldResult> {
    let a = plan
        .folds
        .get(fold)
        .ok_or_else(|| Error::invalid(format!("fold {fold} not in plan")))?;
    let mut train = data.subset(&a.train, &format!("fold {fold} train"));
    let vali = data.subset(&a.vali, &format!("fold {fold} vali"));
    let test = data.subset(&a.test, &format!("fold {fold} test"));
    if cfg.train.mask_ratio > 0.0 {
        train = apply_random_mask(
            &train,
            cfg.train.mask_ratio,
            seed::derive(cfg.seed, "mask", &[fold as u64]),
        );
    }
    let (vali_masked, test_masked) = (masked_docs(&vali), masked_docs(&test));
    if vali_masked + test_masked > 0 {
        return Err(Error::invalid(format!(
            "fold {fold}: evaluation splits carry masked labels ({vali_masked} vali, {test_masked} test)"
        )));
    }
    let eval = cfg.eval_options(data.label_max);
    let sel = cfg.train.selection_cutoff;
    let sel_key = MetricKey::ndcg(sel);
    let adam_cfg = cfg.adam_config();
    let mut notes = vec![
        format!("config {} fold {fold}", cfg.hash()),
        format!("ranker {}", cfg.ranker_label()),
        format!("queries train {} vali {} test {}", train.len(), vali.len(), test.len()),
        format!(
            "masked documents train {} vali {vali_masked} test {test_masked}",
            masked_docs(&train)
        ),
    ];

    let result = match cfg.ranker.framework {
        Framework::Erm => {
            let mut net = ScoringNet::new(&cfg.net_config(data.feature_dim, "net", fold))?;
            let mut adam = AdamState::new(adam_cfg, &net.param_shapes());
            let opts = TrainOptions {
                epochs: cfg.train.epochs,
                eval: eval.clone(),
                selection_cutoff: sel,
            };
            let out = train_erm(&cfg.ranker_spec(fold), &mut net, &mut adam, &train, Some(&vali), &opts)?;
            let report = evaluate(&out.best_net, &test, &eval)?;
            let skipped: usize = out.logs.iter().map(|l| l.skipped).sum();
            if skipped > 0 {
                notes.push(format!("{skipped} query visits skipped (too few documents)"));
            }
            notes.push(format!(
                "selected epoch {} by validation ndcg@{sel} = {}",
                out.best_epoch,
                out.best_vali.map_or("n/a".into(), |v| format!("{v:.6}"))
            ));
            FoldResult {
                fold,
                test: vec![("test".into(), report)],
                selection: out.best_vali,
                selected_epoch: out.best_epoch,
                log: TrainLog::Erm(out.logs),
                notes,
                checkpoints: vec![("checkpoint.json".into(), out.best_net)],
                train_masked: 0,
                vali_masked,
                test_masked,
            }
        }
        Framework::Adversarial => {
            let mut gen = ScoringNet::new(&cfg.net_config(data.feature_dim, "generator", fold))?;
            let mut disc = ScoringNet::new(&cfg.net_config(data.feature_dim, "discriminator", fold))?;
            let mut ga = AdamState::new(adam_cfg, &gen.param_shapes());
            let mut da = AdamState::new(adam_cfg, &disc.param_shapes());
            let out = train_adversarial(
                &cfg.adversarial_spec(fold),
                &mut gen,
                &mut disc,
                &mut ga,
                &mut da,
                &train,
                Some(&test),
                cfg.train.epochs,
                &eval,
            )?;
            notes.push("validation unused: no model selection, final epoch reported".into());
            if out.skipped > 0 {
                notes.push(format!(
                    "{} query visits skipped (fewer than k={} unmasked documents)",
                    out.skipped, cfg.ranker.k
                ));
            }
            // Validation only ranks configurations in a grid; it never
            // touches training.
            let vali_opts = EvalOptions {
                cutoffs: vec![sel],
                ..eval.clone()
            };
            let selection = evaluate(&disc, &vali, &vali_opts)?.mean(sel_key);
            FoldResult {
                fold,
                test: vec![
                    ("test_generator".into(), out.g_report.expect("test given")),
                    ("test_discriminator".into(), out.d_report.expect("test given")),
                ],
                selection,
                selected_epoch: cfg.train.epochs,
                log: TrainLog::Adversarial(out.logs),
                notes,
                checkpoints: vec![
                    ("checkpoint.json".into(), disc),
                    ("generator_checkpoint.json".into(), gen),
                ],
                train_masked: 0,
                vali_masked,
                test_masked,
            }
        }
    };
    Ok(FoldResult {
        train_masked: masked_docs(&train),
        ..result
    })
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub config: ExperimentConfig,
    pub hash: String,
    pub folds: Vec<FoldResult>,
    /// Failed folds and their error messages.
    pub failures: Vec<(usize, String)>,
}

impl CvOutcome {
    fn from_results(config: &ExperimentConfig, results: Vec<Result<FoldResult>>) -> Self {
        let mut folds = Vec::new();
        let mut failures = Vec::new();
        for (k, r) in results.into_iter().enumerate() {
            match r {
                Ok(f) => folds.push(f),
                Err(e) => {
                    log::error!("config {} fold {k} failed: {e}", config.hash());
                    failures.push((k, e.to_string()));
                }
            }
        }
        CvOutcome {
            hash: config.hash(),
            config: config.clone(),
            folds,
            failures,
        }
    }

    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }

    pub fn splits(&self) -> Vec<String> {
        self.folds
            .first()
            .map(|f| f.test.iter().map(|(s, _)| s.clone()).collect())
            .unwrap_or_default()
    }

    /// Arithmetic mean over successful folds of each fold's mean, with the
    /// summed query count.
    pub fn fold_mean(&self, split: &str) -> BTreeMap<MetricKey, (f64, usize)> {
        let mut acc: BTreeMap<MetricKey, (f64, usize, usize)> = BTreeMap::new();
        for f in &self.folds {
            if let Some(r) = f.report(split) {
                for (k, v) in r.means() {
                    let e = acc.entry(k).or_default();
                    e.0 += v;
                    e.1 += 1;
                    e.2 += r.count(k);
                }
            }
        }
        acc.into_iter()
            .map(|(k, (sum, n, count))| (k, (sum / n as f64, count)))
            .collect()
    }

    /// Fold-mean of the primary split at `key`.
    pub fn mean(&self, key: MetricKey) -> Option<f64> {
        let split = self.folds.first()?.test.last()?.0.clone();
        self.fold_mean(&split).get(&key).map(|&(v, _)| v)
    }

    pub fn mean_of(&self, split: &str, key: MetricKey) -> Option<f64> {
        self.fold_mean(split).get(&key).map(|&(v, _)| v)
    }

    /// Fold-mean validation score used to rank configurations.
    pub fn mean_selection(&self) -> Option<f64> {
        let v: Vec<f64> = self.folds.iter().filter_map(|f| f.selection).collect();
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    }
}

/// Runs every fold of one config. Fold failures are recorded and the
/// remaining folds still run.
pub fn run_cross_validation(cfg: &ExperimentConfig, data: &Dataset, ctx: &RunContext) -> Result<CvOutcome> {
    cfg.validate()?;
    let plan = fold_plan(cfg, data)?;
    let results = ctx.run_jobs(plan.num_folds, |k| run_fold(cfg, data, &plan, k));
    Ok(CvOutcome::from_results(cfg, results))
}

/// Cross-validates several configs on one job pool.
pub fn run_many(cfgs: &[ExperimentConfig], data: &Dataset, ctx: &RunContext) -> Result<Vec<CvOutcome>> {
    let mut plans = Vec::with_capacity(cfgs.len());
    let mut jobs = Vec::new();
    for (ci, c) in cfgs.iter().enumerate() {
        c.validate()?;
        let plan = fold_plan(c, data)?;
        jobs.extend((0..plan.num_folds).map(|k| (ci, k)));
        plans.push(plan);
    }
    let mut results = ctx.run_jobs(jobs.len(), |j| {
        let (ci, k) = jobs[j];
        run_fold(&cfgs[ci], data, &plans[ci], k)
    });
    let mut out = Vec::with_capacity(cfgs.len());
    for (ci, c) in cfgs.iter().enumerate().rev() {
        let start = jobs.iter().position(|&(i, _)| i == ci).expect("every config has folds");
        let tail = results.split_off(start);
        out.push(CvOutcome::from_results(c, tail));
    }
    out.reverse();
    Ok(out)
}
