//! Cross-seed statistics.

/// Regret below which a run counts as having escaped the reference.
pub const ESCAPE_REGRET: f64 = 0.01;

/// Linearly interpolated quantile of sorted data (the "type 7" rule).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterateStats {
    pub t: usize,
    pub mean: f64,
    pub median: f64,
    pub q10: f64,
    pub q25: f64,
    pub q75: f64,
    pub q90: f64,
    /// Fraction of seeds whose iterates `1..=t` all equal the reference.
    pub stuck_fraction: f64,
}

/// Per-seed inputs of the summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedTrace {
    pub regrets: Vec<f64>,
    /// Whether each iterate equals the reference.
    pub at_reference: Vec<bool>,
    pub selected_regret: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub seeds: usize,
    pub per_iterate: Vec<IterateStats>,
    pub stuck_fraction: f64,
    pub mean_selected_regret: f64,
    pub median_selected_regret: f64,
    /// Fraction of seeds whose selected iterate has regret below [`ESCAPE_REGRET`].
    pub escape_fraction: f64,
    /// Lower median over seeds of the first iterate with regret below
    /// [`ESCAPE_REGRET`]; `None` when most seeds never get there.
    pub median_first_escape: Option<usize>,
}

pub fn summarize(traces: &[SeedTrace]) -> Summary {
    assert!(!traces.is_empty(), "summary needs at least one seed");
    let n = traces.len() as f64;
    let len = traces.iter().map(|s| s.regrets.len()).min().unwrap_or(0);
    let per_iterate = (0..len)
        .map(|i| {
            let col: Vec<f64> = traces.iter().map(|s| s.regrets[i]).collect();
            let sc = sorted(&col);
            let stuck = traces.iter().filter(|s| s.at_reference[..=i].iter().all(|&b| b)).count();
            IterateStats {
                t: i + 1,
                mean: mean(&col),
                median: quantile(&sc, 0.5),
                q10: quantile(&sc, 0.1),
                q25: quantile(&sc, 0.25),
                q75: quantile(&sc, 0.75),
                q90: quantile(&sc, 0.9),
                stuck_fraction: stuck as f64 / n,
            }
        })
        .collect();
    let selected: Vec<f64> = traces.iter().map(|s| s.selected_regret).collect();
    let mut first: Vec<usize> = traces
        .iter()
        .map(|s| s.regrets.iter().position(|&r| r < ESCAPE_REGRET).map_or(usize::MAX, |i| i + 1))
        .collect();
    first.sort_unstable();
    let median_first = first[(first.len() - 1) / 2];
    Summary {
        seeds: traces.len(),
        per_iterate,
        stuck_fraction: traces.iter().filter(|s| s.at_reference.iter().all(|&b| b)).count() as f64 / n,
        mean_selected_regret: mean(&selected),
        median_selected_regret: quantile(&sorted(&selected), 0.5),
        escape_fraction: selected.iter().filter(|&&r| r < ESCAPE_REGRET).count() as f64 / n,
        median_first_escape: (median_first != usize::MAX).then_some(median_first),
    }
}

/// Least-squares slope and intercept of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(x.len(), y.len());
    let mx = mean(x);
    let my = mean(y);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
