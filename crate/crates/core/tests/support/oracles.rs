//! Brute-force oracles shared by the test suites of both crates.

use nalgebra::{DMatrix, DVector};
use xpo_core::dcmdp::enumerate_trajectories;
use xpo_core::{Dcmdp, TabularPolicy, Trajectory};

/// `inf_mu max_tau m_tau / mu_tau` as `1 / y*` for the linear program
/// `max y  s.t.  mu_tau >= m_tau y,  mu >= 0,  sum mu = 1`, solved by
/// enumerating every basic solution.
pub fn coverability_lp(m: &[f64]) -> f64 {
    let n = m.len();
    let vars = n + 1;
    // inequality rows: mu_k - m_k y >= 0 (k < n), mu_k >= 0 (n <= k < 2n), y >= 0
    let row = |k: usize| -> Vec<f64> {
        let mut r = vec![0.0; vars];
        if k < n {
            r[k] = 1.0;
            r[n] = -m[k];
        } else if k < 2 * n {
            r[k - n] = 1.0;
        } else {
            r[n] = 1.0;
        }
        r
    };
    let total = 2 * n + 1;
    let mut best_y = 0.0f64;
    let mut subset = Vec::with_capacity(n);
    fn choose(start: usize, total: usize, k: usize, subset: &mut Vec<usize>, out: &mut dyn FnMut(&[usize])) {
        if subset.len() == k {
            out(subset);
            return;
        }
        for i in start..total {
            subset.push(i);
            choose(i + 1, total, k, subset, out);
            subset.pop();
        }
    }
    choose(0, total, n, &mut subset, &mut |active| {
        let mut a = DMatrix::<f64>::zeros(vars, vars);
        let mut b = DVector::<f64>::zeros(vars);
        for (i, &k) in active.iter().enumerate() {
            for (j, v) in row(k).into_iter().enumerate() {
                a[(i, j)] = v;
            }
        }
        for j in 0..n {
            a[(n, j)] = 1.0;
        }
        b[n] = 1.0;
        let Some(x) = a.lu().solve(&b) else { return };
        let feasible = (0..total).all(|k| row(k).iter().zip(x.iter()).map(|(r, v)| r * v).sum::<f64>() >= -1e-12);
        if feasible && x[n] > best_y {
            best_y = x[n];
        }
    });
    1.0 / best_y
}

/// Direct evaluation of the SEC sum from explicit (tau, tau~) pairs.
pub fn sec_brute_force(
    mdp: &Dcmdp,
    class: &[TabularPolicy],
    beta: f64,
    reference: &TabularPolicy,
    vmax: f64,
    t_len: usize,
) -> f64 {
    let space = enumerate_trajectories(mdp, 10_000).unwrap();
    let by_s1: Vec<Vec<&Trajectory>> = mdp
        .initial_states()
        .iter()
        .map(|s| space.trajectories().iter().filter(|t| t.initial_state() == *s).collect())
        .collect();
    let cond = |p: &TabularPolicy, t: &Trajectory| -> f64 {
        t.steps().iter().map(|&(s, a)| p.prob(s, a)).product()
    };
    let g = |p: &TabularPolicy, t: &Trajectory| -> f64 {
        let ratio: f64 = t
            .steps()
            .iter()
            .map(|&(s, a)| (p.prob(s, a) / reference.prob(s, a)).ln())
            .sum();
        beta * ratio - t.total_reward()
    };
    let pair_expect = |outer: &TabularPolicy, cur: &TabularPolicy, square: bool| -> f64 {
        let mut total = 0.0;
        for (pos, trajs) in by_s1.iter().enumerate() {
            for a in trajs {
                for b in trajs {
                    let w = mdp.rho()[pos] * cond(outer, a) * cond(reference, b);
                    if w == 0.0 {
                        continue;
                    }
                    let d = g(cur, a) - g(cur, b);
                    total += w * if square { d * d } else { d };
                }
            }
        }
        total
    };
    let n = class.len();
    let mut best = f64::NEG_INFINITY;
    for code in 0..n.pow(t_len as u32) {
        let mut seq = Vec::with_capacity(t_len);
        let mut c = code;
        for _ in 0..t_len {
            seq.push(c % n);
            c /= n;
        }
        seq.reverse();
        let mut sum = 0.0;
        for t in 0..t_len {
            let cur = &class[seq[t]];
            let num = pair_expect(cur, cur, false).powi(2);
            let term = if t == 0 {
                if num == 0.0 { 0.0 } else { (num / (vmax * vmax)).min(1.0) }
            } else {
                let hist: f64 = seq[..t].iter().map(|&i| pair_expect(&class[i], cur, true)).sum();
                if num == 0.0 { 0.0 } else { num / (vmax * vmax).max(hist) }
            };
            sum += term;
        }
        best = best.max(sum);
    }
    best
}
