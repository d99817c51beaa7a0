use rayon::prelude::*;
use serde::Serialize;

use super::{pairing_from_plan, q_functional, w1_exact_capped, EXACT_SIZE_CAP};
use crate::density::GrowthFunction;
use crate::error::{Error, Result};
use crate::flow::FlowTrajectory;
use crate::osgood::{bihari_bound, Modulus};

/// Settings for [`stability_verify`].
#[derive(Debug, Clone)]
pub struct StabilityOptions {
    /// Only times `≤ fit_window` enter the fit of `C`; `None` uses the whole run.
    pub fit_window: Option<f64>,
    /// Compute `W₁` at every `w1_stride`-th snapshot (the first and last are always included).
    pub w1_stride: usize,
    pub exact_cap: usize,
    /// `‖ρ₀¹‖_{L^Θ}` of the continuous datum, used for the reported `Γ`.
    pub ltheta_norm: Option<f64>,
    /// Relative slack in the pass checks.
    pub tolerance: f64,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        StabilityOptions {
            fit_window: None,
            w1_stride: 1,
            exact_cap: EXACT_SIZE_CAP,
            ltheta_norm: None,
            tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PassFlags {
    /// `W₁(ρ¹(t), ρ²(t)) ≤ mass · Q(t)` wherever `W₁` was computed.
    pub w1_below_mass_q: bool,
    /// `W₁(ρ₀¹, ρ₀²) = mass · Q(0)`.
    pub equality_at_zero: bool,
    pub c_fit_finite: bool,
    /// `Q(t) ≤` Bihari envelope at every recorded time.
    pub envelope_dominates: bool,
}

impl PassFlags {
    pub fn all(&self) -> bool {
        self.w1_below_mass_q
            && self.equality_at_zero
            && self.c_fit_finite
            && self.envelope_dominates
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub times: Vec<f64>,
    #[serde(rename = "Q")]
    pub q: Vec<f64>,
    /// `(time, W₁)` at the snapshots where the exact solver ran.
    #[serde(rename = "W1_snapshots")]
    pub w1_snapshots: Vec<(f64, f64)>,
    #[serde(rename = "C_fit")]
    pub c_fit: f64,
    /// `Ω⁻¹(Ω(Q(0) + η) + C_fit t)` minimized over η.
    pub envelope: Vec<f64>,
    /// `Θ(1) ‖ρ₀¹‖_{L^Θ} ·` envelope, when the norm was supplied.
    pub gamma: Option<Vec<f64>>,
    pub mass: f64,
    pub modulus: String,
    pub pass_flags: PassFlags,
}

impl StabilityReport {
    /// CSV with columns `t,Q,envelope,W1` (`W1` empty where not computed).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,Q,envelope,W1\n");
        for (k, t) in self.times.iter().enumerate() {
            let w1 = self
                .w1_snapshots
                .iter()
                .find(|(s, _)| s == t)
                .map(|(_, w)| format!("{w:.16e}"))
                .unwrap_or_default();
            out.push_str(&format!(
                "{t:.16e},{:.16e},{:.16e},{w1}\n",
                self.q[k], self.envelope[k]
            ));
        }
        out
    }
}

/// Smallest `C` with `Q(t_k) ≤ Q(0) + C ∫₀^{t_k} ω(Q)` at all recorded times,
/// the right side integrated by the trapezoidal rule.
fn fit_constant(times: &[f64], q: &[f64], omega: &Modulus, window: Option<f64>) -> Result<f64> {
    let w = |s: f64| if s > 0.0 { omega.eval(s) } else { Ok(0.0) };
    let mut integral = 0.0;
    let mut prev = w(q[0])?;
    let mut c: f64 = 0.0;
    for k in 1..times.len() {
        if window.is_some_and(|limit| times[k] > limit) {
            break;
        }
        let cur = w(q[k])?;
        integral += 0.5 * (prev + cur) * (times[k] - times[k - 1]);
        prev = cur;
        let rise = q[k] - q[0];
        if rise > 0.0 {
            c = c.max(if integral > 0.0 {
                rise / integral
            } else {
                f64::INFINITY
            });
        }
    }
    Ok(c)
}

/// Checks the relative-distance estimate and its Wasserstein consequence on two runs.
///
/// The pairing is an optimal plan between the initial clouds; `Q(t)` is
/// evaluated along both trajectories, `C` is fitted, and the Bihari envelope
/// with the fitted constant is compared with `Q`.
pub fn stability_verify(
    run1: &FlowTrajectory,
    run2: &FlowTrajectory,
    theta: &GrowthFunction,
    options: &StabilityOptions,
) -> Result<StabilityReport> {
    if run1.spec != run2.spec || run1.epsilon != run2.epsilon {
        return Err(Error::InvalidArgument(
            "runs must share kernel, scheme and step".into(),
        ));
    }
    let (w0, plan) = w1_exact_capped(run1.initial(), run2.initial(), options.exact_cap)?;
    let mass = run1.initial().total_mass();
    let pairing = pairing_from_plan(&plan);
    let series = q_functional(run1, run2, &pairing)?;
    let times: Vec<f64> = series.iter().map(|p| p.0).collect();
    let q: Vec<f64> = series.iter().map(|p| p.1).collect();
    let omega = Modulus::from_growth(theta.clone());

    let stride = options.w1_stride.max(1);
    let last = times.len() - 1;
    let picks: Vec<usize> = (0..times.len())
        .filter(|&k| k % stride == 0 || k == last)
        .collect();
    let w1_snapshots: Vec<(f64, f64)> = picks
        .par_iter()
        .map(|&k| {
            if k == 0 {
                Ok((times[0], w0))
            } else {
                w1_exact_capped(&run1.snapshots[k], &run2.snapshots[k], options.exact_cap)
                    .map(|r| (times[k], r.0))
            }
        })
        .collect::<Result<_>>()?;

    let c_fit = fit_constant(&times, &q, &omega, options.fit_window)?;
    let envelope: Vec<f64> = if c_fit > 0.0 && c_fit.is_finite() {
        times
            .iter()
            .map(|&t| bihari_bound(q[0], c_fit, t - times[0], &omega).map(|b| b.value))
            .collect::<Result<_>>()?
    } else {
        vec![q[0]; times.len()]
    };
    let gamma = match options.ltheta_norm {
        Some(beta) => {
            let factor = theta.eval(1.0)? * beta;
            Some(envelope.iter().map(|e| factor * e).collect())
        }
        None => None,
    };
    let tol = options.tolerance;
    let scale = mass * q.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let pass_flags = PassFlags {
        w1_below_mass_q: picks
            .iter()
            .zip(&w1_snapshots)
            .all(|(&k, &(_, w))| w <= mass * q[k] + tol * scale),
        equality_at_zero: (w0 - mass * q[0]).abs() <= tol * scale,
        c_fit_finite: c_fit.is_finite(),
        envelope_dominates: q
            .iter()
            .zip(&envelope)
            .all(|(a, e)| *a <= e * (1.0 + tol) + tol * scale),
    };
    Ok(StabilityReport {
        times,
        q,
        w1_snapshots,
        c_fit,
        envelope,
        gamma,
        mass,
        modulus: omega.name().to_string(),
        pass_flags,
    })
}
