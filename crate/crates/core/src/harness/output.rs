use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::grid::{GridOutcome, SweepOutcome};
use super::{CvOutcome, FoldResult, TrainLog};
use crate::metrics::{report_row, report_rows, MetricKey, REPORT_CSV_HEADER};
use crate::nn::save_checkpoint;
use crate::Result;

pub const SUMMARY_CSV: &str = "summary.csv";
pub const GRID_CSV: &str = "grid.csv";
pub const SWEEP_CSV: &str = "masksweep.csv";
/// Written next to artifacts of a run in which something failed.
pub const FAILED_MARKER: &str = "FAILED";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn train_log_csv(fold: &FoldResult, selection_cutoff: usize) -> String {
    let mut s = String::new();
    match &fold.log {
        TrainLog::Erm(logs) => {
            let _ = writeln!(s, "epoch,loss_mean,vali_ndcg@{selection_cutoff}");
            for l in logs {
                let _ = writeln!(s, "{},{:.6},{}", l.epoch, l.loss_mean, opt(l.vali_ndcg));
            }
        }
        TrainLog::Adversarial(logs) => {
            let _ = writeln!(s, "epoch,g_reward_mean,d_loss_mean,g_test_ndcg@1,d_test_ndcg@1");
            for l in logs {
                let _ = writeln!(
                    s,
                    "{},{:.6},{:.6},{},{}",
                    l.epoch,
                    l.g_reward_mean,
                    l.d_loss_mean,
                    opt(l.g_test_ndcg1),
                    opt(l.d_test_ndcg1)
                );
            }
        }
    }
    s
}

fn lines(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s
}

/// Per-fold rows followed by fold-mean rows (fold `mean`).
pub fn summary_csv(cv: &CvOutcome) -> String {
    lines(REPORT_CSV_HEADER, summary_rows(cv, ""))
}

fn summary_rows(cv: &CvOutcome, split_prefix: &str) -> Vec<String> {
    let mut rows = Vec::new();
    for f in &cv.folds {
        for (split, report) in &f.test {
            rows.extend(report_rows(
                &f.fold.to_string(),
                &format!("{split_prefix}{split}"),
                report,
            ));
        }
    }
    for split in cv.splits() {
        for (key, (v, count)) in cv.fold_mean(&split) {
            rows.push(report_row("mean", &format!("{split_prefix}{split}"), key, v, count));
        }
    }
    rows
}

/// Writes `runs/<hash>/` under `root`: the resolved config, `summary.csv`
/// and one directory per fold. Returns the run directory.
pub fn write_cv_outputs(root: &Path, cv: &CvOutcome) -> Result<PathBuf> {
    let dir = root.join("runs").join(&cv.hash);
    fs::create_dir_all(&dir)?;
    cv.config.write_resolved(&dir)?;
    let sel = cv.config.train.selection_cutoff;
    for f in &cv.folds {
        let fdir = dir.join(format!("fold{}", f.fold));
        fs::create_dir_all(&fdir)?;
        fs::write(fdir.join("train_log.csv"), train_log_csv(f, sel))?;
        let rows = f
            .test
            .iter()
            .flat_map(|(split, r)| report_rows(&f.fold.to_string(), split, r));
        fs::write(fdir.join("test_metrics.csv"), lines(REPORT_CSV_HEADER, rows))?;
        for (name, net) in &f.checkpoints {
            save_checkpoint(fdir.join(name), net, None, f.selected_epoch)?;
        }
        fs::write(fdir.join("run.log"), lines("", f.notes.iter().cloned()).trim_start())?;
    }
    for (k, msg) in &cv.failures {
        let fdir = dir.join(format!("fold{k}"));
        fs::create_dir_all(&fdir)?;
        fs::write(fdir.join("run.log"), format!("fold {k} failed: {msg}\n"))?;
        fs::write(fdir.join(FAILED_MARKER), format!("{msg}\n"))?;
    }
    if cv.is_partial() {
        let msgs: String = cv.failures.iter().map(|(k, m)| format!("fold {k}: {m}\n")).collect();
        fs::write(dir.join(FAILED_MARKER), msgs)?;
    }
    fs::write(dir.join(SUMMARY_CSV), summary_csv(cv))?;
    Ok(dir)
}

fn write_failed_marker(root: &Path, outcomes: &[&CvOutcome]) -> Result<()> {
    let msgs: String = outcomes
        .iter()
        .flat_map(|o| {
            o.failures
                .iter()
                .map(move |(k, m)| format!("{} fold {k}: {m}\n", o.hash))
        })
        .collect();
    if !msgs.is_empty() {
        fs::write(root.join(FAILED_MARKER), msgs)?;
    }
    Ok(())
}

/// Writes the run directory plus top-level `summary.csv` for a single
/// cross-validation.
pub fn write_single_outputs(root: &Path, cv: &CvOutcome) -> Result<PathBuf> {
    let dir = write_cv_outputs(root, cv)?;
    fs::write(root.join(SUMMARY_CSV), summary_csv(cv))?;
    write_failed_marker(root, &[cv])?;
    Ok(dir)
}

/// Writes every cell's run directory, `grid.csv`, the best cell's
/// `summary.csv`, and a two-column curve file when exactly one numeric
/// grid axis varies.
pub fn write_grid_outputs(root: &Path, grid: &GridOutcome) -> Result<()> {
    fs::create_dir_all(root)?;
    let Some(first) = grid.rows.first() else {
        return Ok(());
    };
    let base = &first.outcome.config;
    let sel = base.train.selection_cutoff;
    let cutoffs = &base.train.cutoffs;
    let mut header = format!("rank,cell,config_hash,ranker,activation,layers,hidden,lr,k,vali_ndcg@{sel}");
    for c in cutoffs {
        let _ = write!(header, ",test_ndcg@{c}");
    }
    header.push_str(",failed_folds,best");
    let mut rows = Vec::new();
    for r in &grid.rows {
        write_cv_outputs(root, &r.outcome)?;
        let c = &r.outcome.config;
        let mut row = format!(
            "{},{},{},{},{:?},{},{},{},{},{}",
            r.rank,
            r.cell,
            r.outcome.hash,
            c.ranker_label(),
            c.activation(),
            c.layers(),
            c.net.hidden,
            c.optimizer.lr,
            c.ranker.k,
            opt(r.selection())
        );
        for &k in cutoffs {
            let _ = write!(row, ",{}", opt(r.outcome.mean(MetricKey::ndcg(k))));
        }
        let _ = write!(row, ",{},{}", r.outcome.failures.len(), r.best);
        rows.push(row);
    }
    fs::write(root.join(GRID_CSV), lines(&header, rows))?;
    fs::write(root.join(SUMMARY_CSV), summary_csv(&first.outcome))?;

    let g = &base.grid;
    type Axis = (&'static str, usize, fn(&crate::config::ExperimentConfig) -> f64);
    let axes: [Axis; 4] = [
        ("layers", g.layers.len(), |c| c.layers() as f64),
        ("hidden", g.hidden.len(), |c| c.net.hidden as f64),
        ("lr", g.lr.len(), |c| c.optimizer.lr),
        ("k", g.k.len(), |c| c.ranker.k as f64),
    ];
    let varying = [
        g.kind.len(),
        g.activation.len(),
        g.layers.len(),
        g.hidden.len(),
        g.lr.len(),
        g.k.len(),
    ]
    .iter()
    .filter(|&&n| n > 1)
    .count();
    if varying == 1 {
        if let Some((name, _, x)) = axes.iter().find(|a| a.1 > 1) {
            let mut by_cell: Vec<_> = grid.rows.iter().collect();
            by_cell.sort_by_key(|r| r.cell);
            let pts = by_cell
                .iter()
                .map(|r| format!("{},{}", x(&r.outcome.config), opt(r.outcome.mean(MetricKey::ndcg(sel)))));
            fs::write(root.join(format!("curve_{name}.csv")), lines("x,y", pts))?;
        }
    }
    let all: Vec<&CvOutcome> = grid.rows.iter().map(|r| &r.outcome).collect();
    write_failed_marker(root, &all)
}

/// Writes every run directory, the `masksweep.csv` table (ranker × ratio)
/// and a `summary.csv` of fold-mean rows for every run.
pub fn write_sweep_outputs(root: &Path, sweep: &SweepOutcome) -> Result<()> {
    fs::create_dir_all(root)?;
    let mut header = String::from("ranker,player");
    for r in &sweep.ratios {
        let _ = write!(header, ",{r}");
    }
    let rows = sweep.rows.iter().map(|r| {
        let mut s = format!("{},{}", r.ranker, r.player);
        for v in &r.values {
            let _ = write!(s, ",{}", opt(*v));
        }
        s
    });
    fs::write(root.join(SWEEP_CSV), lines(&header, rows))?;
    let mut summary = Vec::new();
    for per_ratio in &sweep.runs {
        for cv in per_ratio {
            write_cv_outputs(root, cv)?;
            let prefix = format!("{}/mask{}/", cv.config.ranker_label(), cv.config.train.mask_ratio);
            summary.extend(summary_rows(cv, &prefix).into_iter().filter(|r| r.starts_with("mean,")));
        }
    }
    fs::write(root.join(SUMMARY_CSV), lines(REPORT_CSV_HEADER, summary))?;
    let all: Vec<&CvOutcome> = sweep.runs.iter().flatten().collect();
    write_failed_marker(root, &all)
}
