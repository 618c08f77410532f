//! Cartesian sweeps over `beta`, the optimism coefficient and `T`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{LabError, Result};
use crate::output::{plot_loglog_tsv, write_file};
use crate::runner::run_experiment;
use crate::summary::linear_fit;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    #[serde(default)]
    pub beta: Vec<f64>,
    /// Multipliers `c` of the theoretical schedule.
    #[serde(default)]
    pub alpha_c: Vec<f64>,
    /// Manual `alpha` values.
    #[serde(default)]
    pub alpha_value: Vec<f64>,
    #[serde(default)]
    pub iterations: Vec<usize>,
}

/// `[base]` holds an experiment config, `[sweep]` the axes. Empty axes keep
/// the base value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub base: ExperimentConfig,
    #[serde(default)]
    pub sweep: SweepAxes,
}

/// One point of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub beta: f64,
    pub alpha_c: f64,
    pub alpha_value: f64,
    pub iterations: usize,
    pub config_hash: String,
    pub alpha: f64,
    pub mean_selected_regret: f64,
    pub median_selected_regret: f64,
    pub stuck_fraction: f64,
    pub escape_fraction: f64,
}

/// Log-log fit of mean selected regret against `T` for one `(beta, c, alpha)` group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupFit {
    pub beta: f64,
    pub alpha_c: f64,
    pub alpha_value: f64,
    pub points: Vec<(usize, f64)>,
    pub slope: f64,
    pub intercept: f64,
    /// Mean over `T` of the mean selected regret; the ranking key for "best".
    pub average_regret: f64,
    /// Lowest `average_regret` among groups with the same `beta`.
    pub best: bool,
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub dir: PathBuf,
    pub points: Vec<SweepPoint>,
    pub fits: Vec<GroupFit>,
}

fn axis<T: Copy>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

impl SweepConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        toml::from_str(&text).map_err(|e| LabError::validation(format!("{}: {}", path.display(), e.message())))
    }

    /// Grid configs in `beta`, `alpha_c`, `alpha_value`, `iterations` order.
    pub fn expand(&self) -> Vec<ExperimentConfig> {
        let b = &self.base;
        let mut out = Vec::new();
        for beta in axis(&self.sweep.beta, b.beta) {
            for c in axis(&self.sweep.alpha_c, b.alpha.c) {
                for value in axis(&self.sweep.alpha_value, b.alpha.value) {
                    for t in axis(&self.sweep.iterations, b.iterations) {
                        let mut cfg = b.clone();
                        cfg.beta = beta;
                        cfg.alpha.c = c;
                        cfg.alpha.value = value;
                        cfg.iterations = t;
                        out.push(cfg);
                    }
                }
            }
        }
        out
    }

    pub fn hash(&self) -> String {
        let mut keyed = self.clone();
        keyed.base.output = None;
        keyed.base.workers = None;
        let value = serde_json::to_value(&keyed).expect("configs serialize");
        hex::encode(Sha256::digest(value.to_string().as_bytes()))[..16].to_string()
    }
}

pub fn fit_groups(points: &[SweepPoint]) -> Vec<GroupFit> {
    let mut fits: Vec<GroupFit> = Vec::new();
    for p in points {
        let key = (p.beta, p.alpha_c, p.alpha_value);
        match fits.iter_mut().find(|g| (g.beta, g.alpha_c, g.alpha_value) == key) {
            Some(g) => g.points.push((p.iterations, p.mean_selected_regret)),
            None => fits.push(GroupFit {
                beta: p.beta,
                alpha_c: p.alpha_c,
                alpha_value: p.alpha_value,
                points: vec![(p.iterations, p.mean_selected_regret)],
                slope: f64::NAN,
                intercept: f64::NAN,
                average_regret: f64::NAN,
                best: false,
            }),
        }
    }
    for g in &mut fits {
        g.points.sort_by_key(|&(t, _)| t);
        let x: Vec<f64> = g.points.iter().map(|&(t, _)| (t as f64).ln()).collect();
        let y: Vec<f64> = g.points.iter().map(|&(_, r)| r.ln()).collect();
        if g.points.len() >= 2 {
            (g.slope, g.intercept) = linear_fit(&x, &y);
        }
        g.average_regret = g.points.iter().map(|&(_, r)| r).sum::<f64>() / g.points.len() as f64;
    }
    let betas: Vec<f64> = fits.iter().map(|g| g.beta).collect();
    for beta in betas {
        let best = fits
            .iter()
            .enumerate()
            .filter(|(_, g)| g.beta == beta)
            .min_by(|a, b| a.1.average_regret.total_cmp(&b.1.average_regret))
            .map(|(i, _)| i);
        if let Some(i) = best {
            fits[i].best = true;
        }
    }
    fits
}

pub fn run_sweep(sweep: &SweepConfig) -> Result<SweepOutput> {
    let configs = sweep.expand();
    for c in &configs {
        c.validate()?;
    }
    let mut points = Vec::with_capacity(configs.len());
    for cfg in &configs {
        let out = run_experiment(cfg)?;
        points.push(SweepPoint {
            beta: cfg.beta,
            alpha_c: cfg.alpha.c,
            alpha_value: cfg.alpha.value,
            iterations: cfg.iterations,
            config_hash: out.hash.clone(),
            alpha: out.prepared.alpha,
            mean_selected_regret: out.summary.mean_selected_regret,
            median_selected_regret: out.summary.median_selected_regret,
            stuck_fraction: out.summary.stuck_fraction,
            escape_fraction: out.summary.escape_fraction,
        });
    }
    let fits = fit_groups(&points);
    let dir = sweep.base.output_root().join(format!("sweep-{}", sweep.hash()));
    write_sweep(&dir, &points, &fits)?;
    Ok(SweepOutput { dir, points, fits })
}

fn write_sweep(dir: &Path, points: &[SweepPoint], fits: &[GroupFit]) -> Result<()> {
    let mut table = String::from(
        "beta\talpha_c\talpha_value\tT\tconfig_hash\talpha\tmean_selected_regret\tmedian_selected_regret\tstuck_fraction\tescape_fraction\n",
    );
    for p in points {
        writeln!(
            table,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            p.beta,
            p.alpha_c,
            p.alpha_value,
            p.iterations,
            p.config_hash,
            p.alpha,
            p.mean_selected_regret,
            p.median_selected_regret,
            p.stuck_fraction,
            p.escape_fraction
        )
        .unwrap();
    }
    write_file(&dir.join("sweep.tsv"), &table)?;
    let mut fit_table = String::from("beta\talpha_c\talpha_value\tslope\tintercept\taverage_regret\tbest\n");
    for (i, g) in fits.iter().enumerate() {
        writeln!(
            fit_table,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            g.beta,
            g.alpha_c,
            g.alpha_value,
            g.slope,
            g.intercept,
            g.average_regret,
            u8::from(g.best)
        )
        .unwrap();
        write_file(&dir.join(format!("loglog-{i}.tsv")), &plot_loglog_tsv(&g.points))?;
    }
    write_file(&dir.join("fits.tsv"), &fit_table)
}
