//! Log-domain Sinkhorn iterations with ε-scaling.

use rayon::prelude::*;

pub(crate) struct SinkhornSolution {
    /// Row-major coupling with exact marginals (after rounding).
    pub plan: Vec<f64>,
    pub iterations: usize,
    /// Row-marginal L¹ error of the entropic plan before rounding.
    pub marginal_error: f64,
}

fn logsumexp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn update(pot: &mut [f64], other: &[f64], log_w: &[f64], cost: &[f64], eps: f64) {
    let n = other.len();
    pot.par_iter_mut().enumerate().for_each(|(i, p)| {
        let row = &cost[i * n..(i + 1) * n];
        *p = eps * (log_w[i] - logsumexp(other.iter().zip(row).map(|(o, c)| (o - c) / eps)));
    });
}

fn row_sums(f: &[f64], g: &[f64], cost: &[f64], eps: f64) -> Vec<f64> {
    let n = g.len();
    f.par_iter()
        .enumerate()
        .map(|(i, fi)| {
            let row = &cost[i * n..(i + 1) * n];
            g.iter()
                .zip(row)
                .map(|(gj, c)| ((fi + gj - c) / eps).exp())
                .sum()
        })
        .collect()
}

/// Alternating potential updates, first at coarse regularizations then at
/// `reg`. Stops once the row-marginal L¹ error is below `tol` (columns are
/// exact after each sweep), then rounds the plan onto the exact marginals.
/// Returns `Err` if `max_iterations` sweeps at the final regularization are
/// not enough.
pub(crate) fn solve(
    a: &[f64],
    b: &[f64],
    cost: &[f64],
    reg: f64,
    max_iterations: usize,
    tol: f64,
) -> Result<SinkhornSolution, SinkhornSolution> {
    let (n1, n2) = (a.len(), b.len());
    let cost_t: Vec<f64> = (0..n2 * n1).map(|k| cost[(k % n1) * n2 + k / n1]).collect();
    let log_a: Vec<f64> = a.iter().map(|x| x.ln()).collect();
    let log_b: Vec<f64> = b.iter().map(|x| x.ln()).collect();
    let c_max = cost.iter().copied().fold(0.0, f64::max);
    let mass: f64 = a.iter().sum();
    let mut f = vec![0.0; n1];
    let mut g = vec![0.0; n2];
    let mut schedule = Vec::new();
    let mut r = c_max.max(reg);
    while r > reg {
        schedule.push(r);
        r *= 0.5;
    }
    schedule.push(reg);
    let last = schedule.len() - 1;
    let mut iterations = 0;
    let mut error = f64::INFINITY;
    for (stage, &eps) in schedule.iter().enumerate() {
        let (budget, target) = if stage == last {
            (max_iterations, tol)
        } else {
            (max_iterations.min(200), tol.max(1e-2 * mass))
        };
        for sweep in 0..budget {
            iterations += 1;
            update(&mut f, &g, &log_a, cost, eps);
            update(&mut g, &f, &log_b, &cost_t, eps);
            if sweep % 5 == 4 || sweep + 1 == budget {
                error = row_sums(&f, &g, cost, eps)
                    .iter()
                    .zip(a)
                    .map(|(s, w)| (s - w).abs())
                    .sum();
                if error <= target {
                    break;
                }
            }
        }
    }
    let eps = reg;
    let mut plan: Vec<f64> = (0..n1 * n2)
        .into_par_iter()
        .map(|k| ((f[k / n2] + g[k % n2] - cost[k]) / eps).exp())
        .collect();
    round_to_marginals(&mut plan, a, b);
    let sol = SinkhornSolution {
        plan,
        iterations,
        marginal_error: error,
    };
    if error <= tol {
        Ok(sol)
    } else {
        Err(sol)
    }
}

/// Projects a nearly feasible coupling onto the transport polytope: rows and
/// columns are scaled down where they overshoot, and the remaining deficits are
/// filled with their normalized outer product.
fn round_to_marginals(plan: &mut [f64], a: &[f64], b: &[f64]) {
    let (n1, n2) = (a.len(), b.len());
    for i in 0..n1 {
        let row = &mut plan[i * n2..(i + 1) * n2];
        let s: f64 = row.iter().sum();
        if s > a[i] {
            let k = a[i] / s;
            row.iter_mut().for_each(|p| *p *= k);
        }
    }
    let mut cols = vec![0.0; n2];
    for i in 0..n1 {
        for j in 0..n2 {
            cols[j] += plan[i * n2 + j];
        }
    }
    for j in 0..n2 {
        if cols[j] > b[j] {
            let k = b[j] / cols[j];
            for i in 0..n1 {
                plan[i * n2 + j] *= k;
            }
        }
    }
    let row_def: Vec<f64> = (0..n1)
        .map(|i| (a[i] - plan[i * n2..(i + 1) * n2].iter().sum::<f64>()).max(0.0))
        .collect();
    let col_def: Vec<f64> = (0..n2)
        .map(|j| (b[j] - (0..n1).map(|i| plan[i * n2 + j]).sum::<f64>()).max(0.0))
        .collect();
    let total: f64 = row_def.iter().sum();
    if total > 0.0 {
        for i in 0..n1 {
            for j in 0..n2 {
                plan[i * n2 + j] += row_def[i] * col_def[j] / total;
            }
        }
    }
}
