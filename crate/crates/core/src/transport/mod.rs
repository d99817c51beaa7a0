//! Wasserstein-1 distances between particle clouds and the stability functional.

mod simplex;
mod sinkhorn;
mod stability;

use rayon::prelude::*;
use serde::Serialize;

use crate::density::ParticleCloud;
use crate::error::{Error, Result};
use crate::flow::FlowTrajectory;

pub use stability::{stability_verify, PassFlags, StabilityOptions, StabilityReport};

/// Default limit on `|A| + |B|` for [`w1_exact`].
pub const EXACT_SIZE_CAP: usize = 2000;

/// A coupling between two weighted clouds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransportPlan {
    pub row_masses: Vec<f64>,
    pub col_masses: Vec<f64>,
    /// Nonzero entries `(i, j, mass)` sorted by `(i, j)`.
    pub couplings: Vec<(usize, usize, f64)>,
    pub cost: f64,
}

impl TransportPlan {
    pub fn row_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.row_masses.len()];
        for &(i, _, m) in &self.couplings {
            s[i] += m;
        }
        s
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.col_masses.len()];
        for &(_, j, m) in &self.couplings {
            s[j] += m;
        }
        s
    }

    /// Largest marginal violation relative to the total mass.
    pub fn marginal_error(&self) -> f64 {
        let mass: f64 = self.row_masses.iter().sum::<f64>().max(f64::MIN_POSITIVE);
        let rows = self
            .row_sums()
            .iter()
            .zip(&self.row_masses)
            .map(|(s, m)| (s - m).abs())
            .fold(0.0, f64::max);
        let cols = self
            .col_sums()
            .iter()
            .zip(&self.col_masses)
            .map(|(s, m)| (s - m).abs())
            .fold(0.0, f64::max);
        rows.max(cols) / mass
    }

    /// `Σ P_ij |x_i − y_j|` recomputed from the clouds.
    pub fn cost_on(&self, a: &ParticleCloud, b: &ParticleCloud) -> f64 {
        self.couplings
            .iter()
            .map(|&(i, j, m)| m * (a.positions()[i] - b.positions()[j]).norm())
            .sum()
    }
}

fn check_masses(a: &ParticleCloud, b: &ParticleCloud) -> Result<f64> {
    let (ma, mb) = (a.total_mass(), b.total_mass());
    if (ma - mb).abs() > 1e-12 * ma.max(mb) {
        return Err(Error::MassMismatch {
            left: ma,
            right: mb,
        });
    }
    Ok(ma)
}

/// Exact `W₁(a, b)` and an optimal plan, by network simplex.
pub fn w1_exact(a: &ParticleCloud, b: &ParticleCloud) -> Result<(f64, TransportPlan)> {
    w1_exact_capped(a, b, EXACT_SIZE_CAP)
}

pub fn w1_exact_capped(
    a: &ParticleCloud,
    b: &ParticleCloud,
    cap: usize,
) -> Result<(f64, TransportPlan)> {
    check_masses(a, b)?;
    let size = a.len() + b.len();
    if size > cap {
        return Err(Error::SizeCap { size, cap });
    }
    let (xa, xb) = (a.positions(), b.positions());
    let n2 = b.len();
    let max_iterations = 50 * size * size + 10_000;
    let sol = simplex::solve(
        a.weights(),
        b.weights(),
        |i, j| (xa[i] - xb[j]).norm(),
        max_iterations,
    )
    .map_err(|failure| match failure {
        simplex::SimplexFailure::IterationLimit { iterations } => Error::NonConvergence {
            iterations,
            residual: f64::NAN,
        },
        simplex::SimplexFailure::Infeasible { residual } => Error::NonConvergence {
            iterations: 0,
            residual,
        },
    })?;
    let couplings: Vec<(usize, usize, f64)> = sol
        .flows
        .iter()
        .enumerate()
        .filter(|(_, &f)| f > 0.0)
        .map(|(k, &f)| (k / n2, k % n2, f))
        .collect();
    let mut plan = TransportPlan {
        row_masses: a.weights().to_vec(),
        col_masses: b.weights().to_vec(),
        couplings,
        cost: 0.0,
    };
    plan.cost = plan.cost_on(a, b);
    Ok((plan.cost, plan))
}

/// Options for [`w1_approx`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornOptions {
    /// Entropic regularization; `None` means `1e-3 ×` the largest pairwise distance.
    pub reg: Option<f64>,
    pub max_iterations: usize,
    /// Row-marginal L¹ tolerance of the entropic iterate, relative to the total
    /// mass. The returned plan is rounded onto the exact marginals afterwards.
    pub tolerance: f64,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        SinkhornOptions {
            reg: None,
            max_iterations: 20_000,
            tolerance: 1e-3,
        }
    }
}

/// Entropic approximation of `W₁`. The reported cost is `Σ P_ij |x_i − y_j|`
/// for a feasible plan, so it is never below the exact optimum.
pub fn w1_approx(
    a: &ParticleCloud,
    b: &ParticleCloud,
    options: &SinkhornOptions,
) -> Result<(f64, TransportPlan)> {
    let mass = check_masses(a, b)?;
    // zero-weight particles carry no mass and would poison the log potentials
    let ia: Vec<usize> = (0..a.len()).filter(|&i| a.weights()[i] > 0.0).collect();
    let ib: Vec<usize> = (0..b.len()).filter(|&j| b.weights()[j] > 0.0).collect();
    let mut plan = TransportPlan {
        row_masses: a.weights().to_vec(),
        col_masses: b.weights().to_vec(),
        couplings: Vec::new(),
        cost: 0.0,
    };
    if ia.is_empty() || ib.is_empty() {
        return Ok((0.0, plan));
    }
    let wa: Vec<f64> = ia.iter().map(|&i| a.weights()[i]).collect();
    let wb: Vec<f64> = ib.iter().map(|&j| b.weights()[j]).collect();
    let cost: Vec<f64> = ia
        .iter()
        .flat_map(|&i| {
            ib.iter()
                .map(move |&j| (a.positions()[i] - b.positions()[j]).norm())
        })
        .collect();
    let diameter = cost.iter().copied().fold(0.0, f64::max);
    let reg = options
        .reg
        .unwrap_or(1e-3 * diameter.max(f64::MIN_POSITIVE));
    if !(reg > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "regularization {reg} must be positive"
        )));
    }
    let sol = sinkhorn::solve(
        &wa,
        &wb,
        &cost,
        reg,
        options.max_iterations,
        options.tolerance * mass,
    )
    .map_err(|s| Error::NonConvergence {
        iterations: s.iterations,
        residual: s.marginal_error,
    })?;
    let n2 = ib.len();
    let floor = 1e-18 * mass;
    plan.couplings = sol
        .plan
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > floor)
        .map(|(k, &p)| (ia[k / n2], ib[k % n2], p))
        .collect();
    plan.cost = plan.cost_on(a, b);
    Ok((plan.cost, plan))
}

/// Fractional assignment of A-particles to B-particles.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pairing {
    /// For each A index, the `(B index, mass)` pieces it is split into.
    pub rows: Vec<Vec<(usize, f64)>>,
    pub n_targets: usize,
}

impl Pairing {
    pub fn identity(c: &ParticleCloud) -> Pairing {
        Pairing {
            rows: c
                .weights()
                .iter()
                .enumerate()
                .map(|(i, &w)| vec![(i, w)])
                .collect(),
            n_targets: c.len(),
        }
    }

    /// The underlying map when every A-particle goes to exactly one B-particle.
    pub fn as_map(&self) -> Option<Vec<usize>> {
        self.rows
            .iter()
            .map(|r| if r.len() == 1 { Some(r[0].0) } else { None })
            .collect()
    }

    pub fn source_masses(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|p| p.1).sum())
            .collect()
    }

    pub fn target_masses(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n_targets];
        for r in &self.rows {
            for &(j, w) in r {
                m[j] += w;
            }
        }
        m
    }

    fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().map(move |&(j, w)| (i, j, w)))
    }
}

/// Splits each A-particle across its B-partners with the plan's masses.
pub fn pairing_from_plan(plan: &TransportPlan) -> Pairing {
    let mut rows = vec![Vec::new(); plan.row_masses.len()];
    for &(i, j, m) in &plan.couplings {
        rows[i].push((j, m));
    }
    Pairing {
        rows,
        n_targets: plan.col_masses.len(),
    }
}

/// `Q(t) = (1/mass) Σ m_ij |X¹_i(t) − X²_j(t)|` at each common recorded time.
pub fn q_functional(
    run1: &FlowTrajectory,
    run2: &FlowTrajectory,
    pairing: &Pairing,
) -> Result<Vec<(f64, f64)>> {
    if run1.times.len() != run2.times.len()
        || run1
            .times
            .iter()
            .zip(&run2.times)
            .any(|(s, t)| (s - t).abs() > 1e-12 * s.abs().max(t.abs()).max(1.0))
    {
        return Err(Error::TimeGridMismatch);
    }
    if pairing.rows.len() != run1.initial().len() || pairing.n_targets != run2.initial().len() {
        return Err(Error::InvalidArgument(
            "pairing does not match the clouds".into(),
        ));
    }
    let mass = run1.initial().total_mass();
    if !(mass > 0.0) {
        return Err(Error::ZeroMass);
    }
    let entries: Vec<(usize, usize, f64)> = pairing.entries().collect();
    Ok(run1
        .snapshots
        .par_iter()
        .zip(&run2.snapshots)
        .zip(&run1.times)
        .map(|((c1, c2), &t)| {
            let (x1, x2) = (c1.positions(), c2.positions());
            let sum: f64 = entries
                .iter()
                .map(|&(i, j, w)| w * (x1[i] - x2[j]).norm())
                .sum();
            (t, sum / mass)
        })
        .collect())
}
