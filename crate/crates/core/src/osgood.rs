//! Moduli of continuity, the Osgood condition and Bihari-type comparison bounds.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::density::GrowthFunction;
use crate::error::{Error, Result};
use crate::quad::{integrate, QuadSpec};
use crate::Vec3;

/// Offsets tried by [`bihari_bound`], largest first.
pub const DEFAULT_ETA_SEQUENCE: [f64; 5] = [1e-2, 1e-4, 1e-6, 1e-8, 1e-10];

/// Default ε-grid for the Osgood verdict.
pub const DEFAULT_EPS_GRID: [f64; 9] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 1e-10];

/// `ω_Θ(s) = s (1 − log s) Θ((2 − 3 log s)/(1 − log s))` on `(0, 1)`, `Θ(2)` beyond.
pub fn omega_theta(s: f64, theta: &GrowthFunction) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::Domain(format!(
            "modulus argument {s} must be positive"
        )));
    }
    if s >= 1.0 {
        return theta.eval(2.0);
    }
    let l = 1.0 - s.ln();
    // (2 − 3 log s)/(1 − log s) rewritten as 3 − 1/(1 − log s) to keep it below 3
    theta.eval(3.0 - 1.0 / l).map(|th| s * l * th)
}

#[derive(Clone)]
enum Rule {
    Growth(GrowthFunction),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

/// A modulus of continuity `ω: (0, ∞) → (0, ∞)`.
#[derive(Clone)]
pub struct Modulus {
    rule: Rule,
    name: String,
}

impl fmt::Debug for Modulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Modulus({})", self.name)
    }
}

impl Modulus {
    pub fn from_growth(theta: GrowthFunction) -> Self {
        let name = format!("omega[{}]", theta.name());
        Modulus {
            rule: Rule::Growth(theta),
            name,
        }
    }

    pub fn custom(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Modulus {
            rule: Rule::Custom(Arc::new(f)),
            name: name.into(),
        }
    }

    /// `ω(s) = s`.
    pub fn lipschitz() -> Self {
        Modulus::custom("s", |s| s)
    }

    /// `ω(s) = s (1 − log s)` on `(0, 1)`, continued by `s` above 1.
    pub fn log_lipschitz() -> Self {
        Modulus::custom(
            "s(1-log s)",
            |s| if s < 1.0 { s * (1.0 - s.ln()) } else { s },
        )
    }

    /// `ω(s) = s^α`.
    pub fn power(alpha: f64) -> Self {
        Modulus::custom(format!("s^{alpha}"), move |s| s.powf(alpha))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, s: f64) -> Result<f64> {
        let v = match &self.rule {
            Rule::Growth(theta) => omega_theta(s, theta)?,
            Rule::Custom(f) => f(s),
        };
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!("ω({s}) = {v} is not positive")));
        }
        Ok(v)
    }
}

fn quad_spec() -> QuadSpec {
    QuadSpec {
        abs_tol: 1e-13,
        rel_tol: 1e-12,
        max_subdivisions: 2000,
    }
}

/// `∫_a^b ds/ω(s)` for `0 < a ≤ b ≤ 1`, computed in `v = −log s` and, for long
/// ranges, in `v = e^w` so that log-type moduli become nearly constant integrands.
fn reciprocal_integral_below_one(omega: &Modulus, a: f64, b: f64) -> Result<f64> {
    let va = -b.ln();
    let vb = -a.ln();
    let g = |v: f64| -> f64 {
        let s = (-v).exp();
        omega.eval(s).map(|w| s / w).unwrap_or(f64::NAN)
    };
    let spec = quad_spec();
    let split = 1.0_f64.clamp(va, vb);
    let mut total = 0.0;
    if split > va {
        total += integrate(g, va, split, &spec)?.value;
    }
    if vb > split {
        total += integrate(|w: f64| g(w.exp()) * w.exp(), split.ln(), vb.ln(), &spec)?.value;
    }
    Ok(total)
}

/// `Ω(z) = −∫_z^1 ds/ω(s)`, extended by `∫_1^z ds/ω(s)` for `z > 1`.
pub fn big_omega(z: f64, omega: &Modulus) -> Result<f64> {
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::Domain(format!(
            "Ω is defined for positive arguments, got {z}"
        )));
    }
    if z <= 1.0 {
        Ok(-reciprocal_integral_below_one(omega, z, 1.0)?)
    } else {
        // s = e^u on (1, z]
        let g = |u: f64| {
            let s = u.exp();
            omega.eval(s).map(|w| s / w).unwrap_or(f64::NAN)
        };
        Ok(integrate(g, 0.0, z.ln(), &quad_spec())?.value)
    }
}

/// `Ω⁻¹(y)`, found by safeguarded Newton iteration in `log z`.
pub fn big_omega_inverse(y: f64, omega: &Modulus) -> Result<f64> {
    if !y.is_finite() {
        return Err(Error::Domain(format!("Ω⁻¹ of {y}")));
    }
    // u = log z; Ω(e^u) is strictly increasing in u
    let f = |u: f64| big_omega(u.exp(), omega).map(|v| v - y);
    let (mut lo, mut hi) = (0.0_f64, 0.0_f64);
    let f0 = f(0.0)?;
    if f0 == 0.0 {
        return Ok(1.0);
    }
    let limit = 700.0;
    if f0 < 0.0 {
        hi = 1.0;
        while f(hi)? < 0.0 {
            lo = hi;
            hi *= 2.0;
            if hi > limit {
                return Err(Error::OutOfRange {
                    value: y,
                    lo: f64::NEG_INFINITY,
                    hi: big_omega(limit.exp(), omega)?,
                });
            }
        }
    } else {
        lo = -1.0;
        while f(lo)? > 0.0 {
            hi = lo;
            lo *= 2.0;
            if lo < -limit {
                return Err(Error::OutOfRange {
                    value: y,
                    lo: big_omega((-limit).exp(), omega)?,
                    hi: f64::INFINITY,
                });
            }
        }
    }
    let mut u = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fu = f(u)?;
        if fu == 0.0 {
            return Ok(u.exp());
        }
        if fu < 0.0 {
            lo = u;
        } else {
            hi = u;
        }
        // dΩ/du = z/ω(z)
        let z = u.exp();
        let slope = z / omega.eval(z)?;
        let newton = u - fu / slope;
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - u).abs() <= 1e-14 * (1.0 + u.abs()) || hi - lo <= 1e-14 * (1.0 + u.abs()) {
            return Ok(next.exp());
        }
        u = next;
    }
    Err(Error::NonConvergence {
        iterations: 200,
        residual: f(u)?.abs(),
    })
}

/// Outcome of the finite-grid Osgood test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OsgoodVerdict {
    /// `∫_0 ds/ω = ∞`: the modulus satisfies the Osgood condition.
    Divergent,
    /// The integral settles; uniqueness arguments based on ω do not apply.
    Convergent,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OsgoodReport {
    pub eps: Vec<f64>,
    pub values: Vec<f64>,
    pub verdict: OsgoodVerdict,
    /// Increment ratios against the template `log(1 + log log(1/ε))`.
    pub template_ratios: Vec<f64>,
}

/// `∫_ε^1 ds/ω(s)` along a decreasing grid, with a divergence verdict.
///
/// The verdict compares increments of the integral with increments of
/// `log(1 + log log(1/ε))`, the slowest of the divergent templates. A divergent
/// integral keeps pace with it (the last increment ratio stays at least half
/// of the first); a convergent one falls behind.
pub fn osgood_integral(omega: &Modulus, eps_grid: &[f64]) -> Result<OsgoodReport> {
    if eps_grid.is_empty() {
        return Err(Error::InvalidArgument("empty ε grid".into()));
    }
    if eps_grid.iter().any(|&e| !(e > 0.0 && e < 1.0)) || eps_grid.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(Error::InvalidArgument(
            "ε grid must be strictly decreasing in (0, 1)".into(),
        ));
    }
    let mut values = Vec::with_capacity(eps_grid.len());
    let mut acc = reciprocal_integral_below_one(omega, eps_grid[0], 1.0)?;
    values.push(acc);
    for w in eps_grid.windows(2) {
        acc += reciprocal_integral_below_one(omega, w[1], w[0])?;
        values.push(acc);
    }
    let template = |e: f64| (1.0 + (1.0 - e.ln()).ln()).ln();
    let ratios: Vec<f64> = eps_grid
        .windows(2)
        .zip(values.windows(2))
        .map(|(e, v)| (v[1] - v[0]) / (template(e[1]) - template(e[0])))
        .collect();
    let verdict = if ratios.len() < 2 {
        OsgoodVerdict::Inconclusive
    } else {
        let first = ratios[0];
        let last = *ratios.last().unwrap();
        if !(first > 0.0) || !last.is_finite() {
            OsgoodVerdict::Inconclusive
        } else if last / first >= 0.5 {
            OsgoodVerdict::Divergent
        } else {
            OsgoodVerdict::Convergent
        }
    };
    Ok(OsgoodReport {
        eps: eps_grid.to_vec(),
        values,
        verdict,
        template_ratios: ratios,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConcavityReport {
    /// Largest second difference; `≤` a small tolerance certifies concavity on the grid.
    pub worst: f64,
    pub at: f64,
}

/// Largest second difference of `ω` over consecutive grid triples.
///
/// For uneven spacing the difference is `(h₁ω₃ + h₂ω₁ − (h₁+h₂)ω₂)/((h₁+h₂)/2)`,
/// which is `ω₁ − 2ω₂ + ω₃` on an even grid.
pub fn concavity_check(omega: &Modulus, grid: &[f64]) -> Result<ConcavityReport> {
    if grid.len() < 3 {
        return Err(Error::InvalidArgument(
            "need at least three grid points".into(),
        ));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let values = sorted
        .iter()
        .map(|&s| omega.eval(s))
        .collect::<Result<Vec<_>>>()?;
    let mut worst = ConcavityReport {
        worst: f64::NEG_INFINITY,
        at: sorted[1],
    };
    for i in 1..sorted.len() - 1 {
        let h1 = sorted[i] - sorted[i - 1];
        let h2 = sorted[i + 1] - sorted[i];
        let d =
            (h1 * values[i + 1] + h2 * values[i - 1] - (h1 + h2) * values[i]) / (0.5 * (h1 + h2));
        if d > worst.worst {
            worst = ConcavityReport {
                worst: d,
                at: sorted[i],
            };
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BihariBound {
    pub value: f64,
    pub eta: f64,
}

/// `Ω⁻¹(Ω(g₀ + η) + C t)` for a single offset.
pub fn bihari_bound_eta(g0: f64, c: f64, t: f64, omega: &Modulus, eta: f64) -> Result<f64> {
    if !(g0 >= 0.0 && c > 0.0 && t >= 0.0 && eta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bihari bound needs g0 ≥ 0, C > 0, t ≥ 0, η > 0 (got {g0}, {c}, {t}, {eta})"
        )));
    }
    big_omega_inverse(big_omega(g0 + eta, omega)? + c * t, omega)
}

/// Bihari–LaSalle bound minimized over [`DEFAULT_ETA_SEQUENCE`].
pub fn bihari_bound(g0: f64, c: f64, t: f64, omega: &Modulus) -> Result<BihariBound> {
    bihari_bound_over(g0, c, t, omega, &DEFAULT_ETA_SEQUENCE)
}

pub fn bihari_bound_over(
    g0: f64,
    c: f64,
    t: f64,
    omega: &Modulus,
    etas: &[f64],
) -> Result<BihariBound> {
    let mut best: Option<BihariBound> = None;
    for &eta in etas {
        let value = bihari_bound_eta(g0, c, t, omega, eta)?;
        if best.is_none_or(|b| value < b.value) {
            best = Some(BihariBound { value, eta });
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("empty η sequence".into()))
}

/// Sample estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// `∫_{B_R} log(|X¹ − X²|/δ + 1) dx` from index-aligned images of a uniform
/// sample of `B_R`.
pub fn log_functional(x1: &[Vec3], x2: &[Vec3], delta: f64, radius: f64) -> Result<SampleEstimate> {
    if x1.len() != x2.len() {
        return Err(Error::InvalidArgument(format!(
            "sample sizes differ: {} vs {}",
            x1.len(),
            x2.len()
        )));
    }
    if !(delta > 0.0 && radius > 0.0) {
        return Err(Error::InvalidArgument("δ and R must be positive".into()));
    }
    let n = x1.len();
    if n == 0 {
        return Ok(SampleEstimate {
            value: 0.0,
            std_error: 0.0,
            samples: 0,
        });
    }
    let vol = 4.0 * PI * radius.powi(3) / 3.0;
    let terms: Vec<f64> = x1
        .iter()
        .zip(x2)
        .map(|(a, b)| ((a - b).norm() / delta).ln_1p())
        .collect();
    let mean = terms.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    Ok(SampleEstimate {
        value: vol * mean,
        std_error: vol * (var / n as f64).sqrt(),
        samples: n,
    })
}

/// Largest fraction, over the frames, of tracers starting in `B_R` that sit at
/// distance `≥ λ` from the origin. The first frame fixes which tracers count.
pub fn superlevel_fraction<'a>(
    frames: impl IntoIterator<Item = &'a [Vec3]>,
    radius: f64,
    lambda: f64,
) -> f64 {
    let mut frames = frames.into_iter();
    let Some(first) = frames.next() else {
        return 0.0;
    };
    let inside: Vec<usize> = (0..first.len())
        .filter(|&i| first[i].norm() <= radius)
        .collect();
    if inside.is_empty() {
        return 0.0;
    }
    let fraction = |frame: &[Vec3]| {
        inside
            .iter()
            .filter(|&&i| frame[i].norm() >= lambda)
            .count() as f64
            / inside.len() as f64
    };
    frames.fold(fraction(first), |m, f| m.max(fraction(f)))
}

/// Measure bound `‖b₁‖_{L¹L¹}/(λ − R − ‖b₂‖_{L¹L^∞})` on the superlevel set of
/// the flow started in `B_R`; infinite when the denominator is not positive.
pub fn superlevel_measure_bound(b1_l1: f64, b2_linf: f64, radius: f64, lambda: f64) -> f64 {
    let denom = lambda - radius - b2_linf;
    if denom <= 0.0 {
        f64::INFINITY
    } else {
        b1_l1 / denom
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::E;

    #[test]
    fn omega_theta_examples() {
        let one = GrowthFunction::Constant(1.0);
        assert_relative_eq!(
            omega_theta(1.0 / E, &one).unwrap(),
            2.0 / E,
            max_relative = 1e-15
        );
        let log = GrowthFunction::LogBlowup;
        assert_eq!(omega_theta(2.0, &log).unwrap(), log.eval(2.0).unwrap());
        let expected = 2.0 / E * (1.0 + 2f64.ln());
        assert_relative_eq!(
            omega_theta(1.0 / E, &log).unwrap(),
            expected,
            max_relative = 1e-14
        );
        assert!((expected - 1.2458).abs() < 1e-4);
        assert!(omega_theta(0.0, &log).is_err());
    }

    #[test]
    fn omega_theta_is_continuous_at_one() {
        for theta in [GrowthFunction::LogBlowup, GrowthFunction::Constant(3.0)] {
            let left = omega_theta(1.0 - 1e-6, &theta).unwrap();
            let right = omega_theta(1.0 + 1e-6, &theta).unwrap();
            assert!((left - right).abs() < 1e-5, "{left} {right}");
        }
    }

    #[test]
    fn lipschitz_integral_and_verdict() {
        let r = osgood_integral(&Modulus::lipschitz(), &DEFAULT_EPS_GRID).unwrap();
        for (e, v) in r.eps.iter().zip(&r.values) {
            assert!((v + e.ln()).abs() < 1e-8);
        }
        assert_eq!(r.verdict, OsgoodVerdict::Divergent);
    }

    #[test]
    fn sqrt_is_not_osgood() {
        let r = osgood_integral(&Modulus::power(0.5), &DEFAULT_EPS_GRID).unwrap();
        for (e, v) in r.eps.iter().zip(&r.values) {
            assert!((v - 2.0 * (1.0 - e.sqrt())).abs() < 1e-8);
        }
        assert_eq!(r.verdict, OsgoodVerdict::Convergent);
    }

    #[test]
    fn log_lipschitz_integral() {
        let r = osgood_integral(&Modulus::log_lipschitz(), &DEFAULT_EPS_GRID).unwrap();
        for (e, v) in r.eps.iter().zip(&r.values) {
            assert!((v - (1.0 - e.ln()).ln()).abs() < 1e-6);
        }
        assert_eq!(r.verdict, OsgoodVerdict::Divergent);
        let theta = osgood_integral(
            &Modulus::from_growth(GrowthFunction::LogBlowup),
            &DEFAULT_EPS_GRID,
        )
        .unwrap();
        assert_eq!(theta.verdict, OsgoodVerdict::Divergent);
        let squared = Modulus::custom("s(1-log s)^2", |s| s * (1.0 - s.ln()).powi(2));
        assert_eq!(
            osgood_integral(&squared, &DEFAULT_EPS_GRID)
                .unwrap()
                .verdict,
            OsgoodVerdict::Convergent
        );
    }

    #[test]
    fn rejects_bad_grid() {
        assert!(osgood_integral(&Modulus::lipschitz(), &[1e-3, 1e-2]).is_err());
        assert!(osgood_integral(&Modulus::lipschitz(), &[1.5, 1e-2]).is_err());
    }

    #[test]
    fn big_omega_closed_forms() {
        let lip = Modulus::lipschitz();
        for z in [0.1, 0.5, 1.0, 3.0] {
            assert!((big_omega(z, &lip).unwrap() - z.ln()).abs() < 1e-10);
        }
        assert_relative_eq!(
            big_omega_inverse(-2.0, &lip).unwrap(),
            (-2.0f64).exp(),
            max_relative = 1e-12
        );
        let ll = Modulus::log_lipschitz();
        let z = 0.1;
        assert!((big_omega(z, &ll).unwrap() + (1.0 - z.ln()).ln()).abs() < 1e-8);
        let y = -1.3;
        assert!((big_omega_inverse(y, &ll).unwrap() - (1.0 - (-y).exp()).exp()).abs() < 1e-8);
        for z in [0.9, 0.5, 0.01] {
            assert!((big_omega_inverse(big_omega(z, &ll).unwrap(), &ll).unwrap() - z).abs() < 1e-9);
        }
    }

    #[test]
    fn inverse_out_of_range() {
        // Ω(0+) = −2 for √s
        assert!(matches!(
            big_omega_inverse(-3.0, &Modulus::power(0.5)),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn concavity_examples() {
        let grid: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
        assert!(
            concavity_check(&Modulus::lipschitz(), &grid)
                .unwrap()
                .worst
                .abs()
                < 1e-15
        );
        assert!(concavity_check(&Modulus::power(2.0), &grid).unwrap().worst > 0.0);
        assert!(
            concavity_check(&Modulus::from_growth(GrowthFunction::LogBlowup), &grid)
                .unwrap()
                .worst
                <= 1e-8
        );
        assert!(concavity_check(&Modulus::lipschitz(), &grid[..2]).is_err());
    }

    #[test]
    fn gronwall_case() {
        let b = bihari_bound(0.01, 2.0, 0.5, &Modulus::lipschitz()).unwrap();
        assert_eq!(b.eta, 1e-10);
        assert_relative_eq!(b.value, (0.01 + 1e-10) * 1f64.exp(), max_relative = 1e-10);
    }

    #[test]
    fn sqrt_bound_does_not_vanish() {
        let b = bihari_bound(0.0, 1.0, 1.0, &Modulus::power(0.5)).unwrap();
        assert!((b.value - 0.25).abs() < 1e-4, "{}", b.value);
    }

    #[test]
    fn log_functional_constant_shift() {
        let x1: Vec<Vec3> = (0..10)
            .map(|i| Vec3::new(i as f64 * 0.05, 0.0, 0.0))
            .collect();
        let x2: Vec<Vec3> = x1.iter().map(|x| x + Vec3::new(0.0, 0.3, 0.0)).collect();
        let est = log_functional(&x1, &x2, 0.1, 1.0).unwrap();
        assert_relative_eq!(est.value, 4.0 * PI / 3.0 * 4f64.ln(), max_relative = 1e-14);
        assert!(est.std_error < 1e-14);
        assert_eq!(log_functional(&x1, &x1, 0.1, 1.0).unwrap().value, 0.0);
        assert!(log_functional(&x1, &x2[..3], 0.1, 1.0).is_err());
    }

    #[test]
    fn superlevel_fraction_counts_only_initial_ball() {
        let f0 = [
            Vec3::new(0.5, 0.0, 0.0),
            Vec3::new(0.0, 0.5, 0.0),
            Vec3::new(5.0, 0.0, 0.0),
        ];
        let f1 = [
            Vec3::new(3.0, 0.0, 0.0),
            Vec3::new(0.0, 0.5, 0.0),
            Vec3::new(5.0, 0.0, 0.0),
        ];
        assert_eq!(superlevel_fraction([&f0[..], &f1[..]], 1.0, 2.0), 0.5);
        assert_eq!(superlevel_fraction([&f0[..]], 1.0, 2.0), 0.0);
        assert_eq!(superlevel_measure_bound(0.0, 1.0, 1.0, 10.0), 0.0);
        assert!(superlevel_measure_bound(1.0, 1.0, 1.0, 1.5).is_infinite());
    }
}
