//! Writers for the per-experiment output directory.
//!
//! Layout of `<root>/<hash>/`:
//! `config.toml`, `records/seed-<s>.jsonl`, `prefs/seed-<s>.tsv`,
//! `params/seed-<s>.tsv`, `summary.tsv`, `aggregate.tsv`,
//! `plot_regret.tsv` and `plot_loglog.tsv`. Nothing written depends on
//! wall-clock time or thread scheduling.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::json;
use xpo_core::objective::Member;

use crate::error::{LabError, Result};
use crate::runner::{Prepared, SeedResult};
use crate::summary::Summary;

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| LabError::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| LabError::io(path, e))
}

fn member_text(m: &Option<Member>) -> String {
    match m {
        None => "outside".into(),
        Some(Member::Index(i)) => format!("index:{i}"),
        Some(Member::Theta(t)) => {
            let parts: Vec<String> = t.iter().map(|x| x.to_string()).collect();
            format!("theta:{}", parts.join(","))
        }
    }
}

/// Header line, one line per iterate, then the selected iterate.
pub fn record_jsonl(prepared: &Prepared, hash: &str, r: &SeedResult) -> String {
    let c = &prepared.config;
    let mut out = String::new();
    let header = json!({
        "kind": "header",
        "config_hash": hash,
        "seed": r.seed,
        "algorithm": c.algorithm,
        "instance": c.instance,
        "class": c.class,
        "beta": r.record.beta,
        "alpha": prepared.alpha,
        "iterations": c.iterations,
        "optimal_value": r.record.optimal_value,
    });
    writeln!(out, "{header}").unwrap();
    for row in &r.record.rows {
        let line = json!({
            "kind": "row",
            "t": row.t,
            "j_beta": row.j_beta,
            "regret": row.regret,
            "objective": row.objective,
            "n_pref": row.n_pref,
            "alpha": row.alpha,
            "member": member_text(&row.member),
        });
        writeln!(out, "{line}").unwrap();
    }
    let footer = json!({
        "kind": "selected",
        "t": r.selected.t,
        "score": r.selected.score,
        "regret": r.selected_regret,
    });
    writeln!(out, "{footer}").unwrap();
    out
}

pub fn preference_log(r: &SeedResult) -> String {
    let mut out = String::from("iteration\ts1_id\ttau_plus_id\ttau_minus_id\traw_draw\tp_win\n");
    for (pair, origin) in r.record.dataset.pairs().iter().zip(r.record.dataset.origins()) {
        writeln!(
            out,
            "{origin}\t{}\t{}\t{}\t{}\t{}",
            pair.initial_state.0,
            pair.tau_plus.index(),
            pair.tau_minus.index(),
            u8::from(pair.raw_draw),
            pair.p_win
        )
        .unwrap();
    }
    out
}

pub fn parameter_snapshots(r: &SeedResult) -> String {
    let mut out = String::from("t\tmember\n");
    for row in &r.record.rows {
        writeln!(out, "{}\t{}", row.t, member_text(&row.member)).unwrap();
    }
    out
}

pub fn summary_tsv(s: &Summary) -> String {
    let mut out = String::from("t\tmean_regret\tmedian_regret\tq10\tq25\tq75\tq90\tstuck_fraction\n");
    for r in &s.per_iterate {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.t, r.mean, r.median, r.q10, r.q25, r.q75, r.q90, r.stuck_fraction
        )
        .unwrap();
    }
    out
}

pub fn aggregate_tsv(prepared: &Prepared, hash: &str, s: &Summary) -> String {
    let mut out = String::from("key\tvalue\n");
    let first = s.median_first_escape.map_or("none".to_string(), |t| t.to_string());
    let rows: [(&str, String); 9] = [
        ("config_hash", hash.to_string()),
        ("seeds", s.seeds.to_string()),
        ("iterations", prepared.config.iterations.to_string()),
        ("alpha", prepared.alpha.to_string()),
        ("stuck_fraction", s.stuck_fraction.to_string()),
        ("mean_selected_regret", s.mean_selected_regret.to_string()),
        ("median_selected_regret", s.median_selected_regret.to_string()),
        ("escape_fraction", s.escape_fraction.to_string()),
        ("median_first_escape", first),
    ];
    for (k, v) in rows {
        writeln!(out, "{k}\t{v}").unwrap();
    }
    out
}

pub fn plot_regret_tsv(s: &Summary) -> String {
    let mut out = String::from("t\tmean_regret\tmedian_regret\n");
    for r in &s.per_iterate {
        writeln!(out, "{}\t{}\t{}", r.t, r.mean, r.median).unwrap();
    }
    out
}

/// Rows of `(T, mean regret of the selected iterate)` with their logs.
pub fn plot_loglog_tsv(points: &[(usize, f64)]) -> String {
    let mut out = String::from("T\tmean_selected_regret\tlog_T\tlog_mean_selected_regret\n");
    for &(t, r) in points {
        writeln!(out, "{t}\t{r}\t{}\t{}", (t as f64).ln(), r.ln()).unwrap();
    }
    out
}

pub fn write_experiment(dir: &Path, prepared: &Prepared, results: &[SeedResult], summary: &Summary) -> Result<()> {
    let hash = prepared.config.short_hash();
    let mut stored = prepared.config.clone();
    stored.output = None;
    stored.workers = None;
    write_file(&dir.join("config.toml"), &stored.to_toml())?;
    for r in results {
        let name = format!("seed-{}", r.seed);
        write_file(&dir.join("records").join(format!("{name}.jsonl")), &record_jsonl(prepared, &hash, r))?;
        write_file(&dir.join("prefs").join(format!("{name}.tsv")), &preference_log(r))?;
        write_file(&dir.join("params").join(format!("{name}.tsv")), &parameter_snapshots(r))?;
    }
    write_file(&dir.join("summary.tsv"), &summary_tsv(summary))?;
    write_file(&dir.join("aggregate.tsv"), &aggregate_tsv(prepared, &hash, summary))?;
    write_file(&dir.join("plot_regret.tsv"), &plot_regret_tsv(summary))?;
    let point = [(prepared.config.iterations, summary.mean_selected_regret)];
    write_file(&dir.join("plot_loglog.tsv"), &plot_loglog_tsv(&point))
}
