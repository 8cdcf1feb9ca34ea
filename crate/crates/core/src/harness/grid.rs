use super::{run_many, CvOutcome, RunContext};
use crate::config::{ExperimentConfig, Framework};
use crate::data::Dataset;
use crate::metrics::MetricKey;
use crate::{Error, Result};

/// Every cell of `base.grid`, in row-major order over
/// kind, activation, layers, hidden, lr, k. Empty lists keep the base value.
pub fn expand_grid(base: &ExperimentConfig) -> Result<Vec<ExperimentConfig>> {
    let g = &base.grid;
    let n = g.num_cells();
    if n > g.max_cells {
        return Err(Error::Config {
            key: "grid.max_cells".into(),
            message: format!("grid has {n} cells, more than the allowed {}", g.max_cells),
        });
    }
    let mut cells = vec![base.clone()];
    fn axis<T: Clone>(
        cells: Vec<ExperimentConfig>,
        values: &[T],
        set: impl Fn(&mut ExperimentConfig, T),
    ) -> Vec<ExperimentConfig> {
        if values.is_empty() {
            return cells;
        }
        cells
            .into_iter()
            .flat_map(|c| {
                values.iter().map({
                    let set = &set;
                    move |v| {
                        let mut c = c.clone();
                        set(&mut c, v.clone());
                        c
                    }
                })
            })
            .collect()
    }
    cells = axis(cells, &g.kind, |c, v| c.ranker.kind = v);
    cells = axis(cells, &g.activation, |c, v| c.net.activation = Some(v));
    cells = axis(cells, &g.layers, |c, v| c.net.layers = Some(v));
    cells = axis(cells, &g.hidden, |c, v| c.net.hidden = v);
    cells = axis(cells, &g.lr, |c, v| c.optimizer.lr = v);
    cells = axis(cells, &g.k, |c, v| c.ranker.k = v);
    Ok(cells)
}

#[derive(Debug, Clone)]
pub struct GridRow {
    /// 1-based position after sorting.
    pub rank: usize,
    /// Position in grid expansion order.
    pub cell: usize,
    pub best: bool,
    pub outcome: CvOutcome,
}

impl GridRow {
    pub fn selection(&self) -> Option<f64> {
        self.outcome.mean_selection()
    }
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    /// Sorted by descending mean validation score, ties in cell order.
    pub rows: Vec<GridRow>,
}

impl GridOutcome {
    pub fn best(&self) -> Option<&GridRow> {
        self.rows.first()
    }

    pub fn is_partial(&self) -> bool {
        self.rows.iter().any(|r| r.outcome.is_partial())
    }
}

/// Cross-validates every grid cell and ranks cells by fold-mean validation
/// nDCG at the selection cutoff.
pub fn grid_search(base: &ExperimentConfig, data: &Dataset, ctx: &RunContext) -> Result<GridOutcome> {
    let cells = expand_grid(base)?;
    let outcomes = run_many(&cells, data, ctx)?;
    let mut rows: Vec<GridRow> = outcomes
        .into_iter()
        .enumerate()
        .map(|(cell, outcome)| GridRow {
            rank: 0,
            cell,
            best: false,
            outcome,
        })
        .collect();
    rows.sort_by(|a, b| {
        let (x, y) = (a.selection(), b.selection());
        match (x, y) {
            (Some(x), Some(y)) => y.total_cmp(&x),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => std::cmp::Ordering::Equal,
        }
        .then(a.cell.cmp(&b.cell))
    });
    for (i, r) in rows.iter_mut().enumerate() {
        r.rank = i + 1;
        r.best = i == 0 && r.selection().is_some();
    }
    Ok(GridOutcome { rows })
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub ranker: String,
    /// `D` or `G` for adversarial rankers, `-` for ERM.
    pub player: String,
    /// Fold-mean test nDCG@1 per mask ratio.
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub ratios: Vec<f64>,
    pub rows: Vec<SweepRow>,
    /// Indexed `[ranker][ratio]`.
    pub runs: Vec<Vec<CvOutcome>>,
}

impl SweepOutcome {
    pub fn is_partial(&self) -> bool {
        self.runs.iter().flatten().any(|r| r.is_partial())
    }

    pub fn value(&self, ranker: &str, player: &str, ratio_index: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.ranker == ranker && r.player == player)
            .and_then(|r| r.values[ratio_index])
    }
}

/// Cross-validates each ranker at each training-label mask ratio and
/// tabulates fold-mean test nDCG@1. For an adversarial base config the
/// rankers are the ranking sizes in `sweep.ks`; for ERM it is the base
/// ranker alone.
pub fn mask_sweep(base: &ExperimentConfig, data: &Dataset, ctx: &RunContext) -> Result<SweepOutcome> {
    let ratios = base.sweep.mask_ratios.clone();
    if let Some(r) = ratios.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(Error::Config {
            key: "sweep.mask_ratios".into(),
            message: format!("{r} out of range; expected [0, 1]"),
        });
    }
    let rankers: Vec<ExperimentConfig> = match base.ranker.framework {
        Framework::Erm => vec![base.clone()],
        Framework::Adversarial => base
            .sweep
            .ks
            .iter()
            .map(|&k| {
                let mut c = base.clone();
                c.ranker.k = k;
                c
            })
            .collect(),
    };
    let mut cfgs = Vec::new();
    for r in &rankers {
        for &ratio in &ratios {
            let mut c = r.clone();
            c.train.mask_ratio = ratio;
            cfgs.push(c);
        }
    }
    let mut outcomes = run_many(&cfgs, data, ctx)?.into_iter();
    let top1 = MetricKey::ndcg(1);
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for r in &rankers {
        let per_ratio: Vec<CvOutcome> = outcomes.by_ref().take(ratios.len()).collect();
        let label = r.ranker_label();
        let players: &[(&str, &str)] = match r.ranker.framework {
            Framework::Erm => &[("-", "test")],
            Framework::Adversarial => &[("D", "test_discriminator"), ("G", "test_generator")],
        };
        for &(player, split) in players {
            rows.push(SweepRow {
                ranker: label.clone(),
                player: player.into(),
                values: per_ratio.iter().map(|o| o.mean_of(split, top1)).collect(),
            });
        }
        runs.push(per_ratio);
    }
    Ok(SweepOutcome { ratios, rows, runs })
}
