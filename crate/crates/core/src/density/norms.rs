use std::cell::RefCell;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use super::functions::{log_radial_power_integral, DensityFunction};
use crate::error::{Error, Result};
use crate::quad::{integrate, integrate_pieces, QuadSpec};
use crate::Vec3;

/// Exponents sampled by default when approximating the supremum over `[1, 3)`.
pub const DEFAULT_P_GRID: [f64; 6] = [1.0, 1.5, 2.0, 2.5, 2.9, 2.99];

/// `‖f‖_{L^p(ℝ³)}`.
///
/// Radial densities reduce to `4π ∫ r² f(r)^p dr`; everything else goes through
/// nested adaptive quadrature in spherical coordinates, which is slow and meant
/// for smooth test densities.
pub fn lp_norm(f: &dyn DensityFunction, p: f64, spec: &QuadSpec) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::Domain(format!("p = {p} must be at least 1")));
    }
    if let Some(v) = f.lp_norm_override(p, spec) {
        return v;
    }
    let radius = f.support_radius();
    let integral = if f.radial(0.0).is_some() {
        let mut breaks = vec![0.0, radius];
        breaks.extend(
            f.radial_breakpoints()
                .into_iter()
                .filter(|&b| b > 0.0 && b < radius),
        );
        breaks.sort_by(|a, b| a.total_cmp(b));
        breaks.dedup();
        integrate_pieces(
            |r| r * r * f.radial(r).unwrap_or(0.0).powf(p),
            &breaks,
            spec,
        )?
        .value
            * 4.0
            * PI
    } else {
        spherical_integral(|x| f.eval(x).powf(p), radius, spec)?
    };
    Ok(integral.powf(1.0 / p))
}

fn spherical_integral(g: impl Fn(&Vec3) -> f64, radius: f64, spec: &QuadSpec) -> Result<f64> {
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let inner = QuadSpec {
        abs_tol: spec.abs_tol * 1e-2,
        rel_tol: spec.rel_tol * 1e-1,
        max_subdivisions: spec.max_subdivisions,
    };
    let guard = |res: Result<f64>| match res {
        Ok(v) => v,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            f64::NAN
        }
    };
    let shell = |r: f64| {
        guard(
            integrate(
                |mu| {
                    let s = (1.0 - mu * mu).max(0.0).sqrt();
                    guard(
                        integrate(
                            |phi| g(&(Vec3::new(s * phi.cos(), s * phi.sin(), mu) * r)),
                            0.0,
                            2.0 * PI,
                            &inner,
                        )
                        .map(|e| e.value),
                    )
                },
                -1.0,
                1.0,
                &inner,
            )
            .map(|e| e.value),
        ) * r
            * r
    };
    let result = integrate(shell, 0.0, radius, spec);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(result?.value)
}

/// `‖ρ₁‖_{L^p(ℝ²)}` for the planar example factor, via `|y| = e^{-t}`:
/// `2π ∫₁^∞ e^{-2(3-p)t/3} t^{-p/3} dt`.
pub fn lp_norm_planar_example(p: f64, spec: &QuadSpec) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::Domain(format!("p = {p} must be at least 1")));
    }
    let v = log_radial_power_integral(2.0 * (3.0 - p) / 3.0, p / 3.0, spec)?;
    Ok((2.0 * PI * v).powf(1.0 / p))
}

/// Growth rate `Θ(p)` for `p ∈ [1, 3)`.
///
/// `LogBlowup` is evaluated literally, so it drops below 1 on `[1, 2)`; only
/// positivity is enforced.
#[derive(Clone)]
pub enum GrowthFunction {
    Constant(f64),
    /// `1 − log(3 − p)`.
    LogBlowup,
    Custom {
        name: String,
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl fmt::Debug for GrowthFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GrowthFunction::Constant(c) => write!(f, "Constant({c})"),
            GrowthFunction::LogBlowup => write!(f, "LogBlowup"),
            GrowthFunction::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

impl GrowthFunction {
    pub fn custom(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        GrowthFunction::Custom {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    pub fn eval(&self, p: f64) -> Result<f64> {
        if !(1.0..3.0).contains(&p) {
            return Err(Error::OutOfRange {
                value: p,
                lo: 1.0,
                hi: 3.0,
            });
        }
        let v = match self {
            GrowthFunction::Constant(c) => *c,
            GrowthFunction::LogBlowup => 1.0 - (3.0 - p).ln(),
            GrowthFunction::Custom { f, .. } => f(p),
        };
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!("Θ({p}) = {v} is not positive")));
        }
        Ok(v)
    }

    /// Whether `Θ` is non-decreasing along the sorted grid.
    pub fn is_monotone_on(&self, grid: &[f64]) -> Result<bool> {
        let mut sorted = grid.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let values = sorted
            .iter()
            .map(|&p| self.eval(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(values.windows(2).all(|w| w[1] >= w[0]))
    }

    pub fn name(&self) -> String {
        match self {
            GrowthFunction::Constant(c) => format!("constant({c})"),
            GrowthFunction::LogBlowup => "1-log(3-p)".into(),
            GrowthFunction::Custom { name, .. } => name.clone(),
        }
    }
}

/// One sample of the `L^Θ` quotient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LThetaSample {
    pub p: f64,
    pub lp: f64,
    pub theta: f64,
    pub ratio: f64,
}

/// Grid estimate of `sup_p ‖f‖_p / Θ(p)`; a lower bound for the true supremum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LThetaNorm {
    pub value: f64,
    pub argmax: f64,
    pub samples: Vec<LThetaSample>,
}

impl LThetaNorm {
    /// Running maximum of the ratios in grid order.
    pub fn running_max(&self) -> Vec<f64> {
        self.samples
            .iter()
            .scan(f64::NEG_INFINITY, |m, s| {
                *m = m.max(s.ratio);
                Some(*m)
            })
            .collect()
    }
}

/// `max_{p ∈ grid} ‖f‖_p / Θ(p)`.
pub fn ltheta_norm(
    f: &dyn DensityFunction,
    theta: &GrowthFunction,
    p_grid: &[f64],
) -> Result<LThetaNorm> {
    ltheta_norm_with(f, theta, p_grid, &QuadSpec::default())
}

pub fn ltheta_norm_with(
    f: &dyn DensityFunction,
    theta: &GrowthFunction,
    p_grid: &[f64],
    spec: &QuadSpec,
) -> Result<LThetaNorm> {
    if p_grid.is_empty() {
        return Err(Error::InvalidArgument("empty p grid".into()));
    }
    let mut samples = Vec::with_capacity(p_grid.len());
    for &p in p_grid {
        let th = theta.eval(p)?;
        let lp = lp_norm(f, p, spec)?;
        samples.push(LThetaSample {
            p,
            lp,
            theta: th,
            ratio: lp / th,
        });
    }
    let best = samples
        .iter()
        .fold(samples[0], |b, s| if s.ratio > b.ratio { *s } else { b });
    Ok(LThetaNorm {
        value: best.ratio,
        argmax: best.p,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::super::functions::{ExampleDensity3d, FnDensity, IndicatorBall, SmoothBump};
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ball_norms() {
        let spec = QuadSpec::default();
        let ball = IndicatorBall::new(1.0);
        assert_relative_eq!(
            lp_norm(&ball, 2.0, &spec).unwrap(),
            (4.0 * PI / 3.0).sqrt(),
            max_relative = 1e-12
        );
        assert!((lp_norm(&ball, 2.0, &spec).unwrap() - 2.0466).abs() < 1e-4);
        assert!(lp_norm(&ball, 0.5, &spec).is_err());
    }

    #[test]
    fn ltheta_ball() {
        let n = ltheta_norm(
            &IndicatorBall::new(1.0),
            &GrowthFunction::Constant(1.0),
            &[1.0, 2.0, 2.9],
        )
        .unwrap();
        assert_relative_eq!(n.value, 4.0 * PI / 3.0, max_relative = 1e-12);
        assert_eq!(n.argmax, 1.0);
        assert!(ltheta_norm(&IndicatorBall::new(1.0), &GrowthFunction::LogBlowup, &[]).is_err());
        assert!(ltheta_norm(&IndicatorBall::new(1.0), &GrowthFunction::LogBlowup, &[3.0]).is_err());
    }

    #[test]
    fn growth_domain() {
        let g = GrowthFunction::LogBlowup;
        assert_eq!(g.eval(2.0).unwrap(), 1.0);
        assert_relative_eq!(g.eval(1.0).unwrap(), 1.0 - 2f64.ln(), max_relative = 1e-15);
        assert!(g.eval(3.0).is_err());
        assert!(g.eval(0.9).is_err());
        assert!(GrowthFunction::Constant(0.0).eval(2.0).is_err());
        assert!(g.is_monotone_on(&DEFAULT_P_GRID).unwrap());
    }

    #[test]
    fn example_norm_matches_radial_quadrature() {
        // the substituted integral and a direct radial integral agree where the latter converges well
        let spec = QuadSpec::default();
        let direct = integrate_pieces(
            |r| 4.0 * PI * r * r * ExampleDensity3d.radial(r).unwrap().powf(2.0),
            &[0.0, 1e-8, 1e-4, 1e-2, 1.0 / std::f64::consts::E],
            &spec,
        )
        .unwrap()
        .value;
        assert_relative_eq!(
            lp_norm(&ExampleDensity3d, 2.0, &spec).unwrap(),
            direct.sqrt(),
            max_relative = 1e-6
        );
    }

    #[test]
    fn generic_cubature_matches_radial_path() {
        let spec = QuadSpec::new(1e-10, 1e-8);
        let bump = SmoothBump {
            radius: 1.0,
            height: 2.0,
        };
        let generic = FnDensity::new(move |x: &Vec3| bump.eval(x), 1.0, "bump");
        assert_relative_eq!(
            lp_norm(&generic, 1.5, &spec).unwrap(),
            lp_norm(&bump, 1.5, &spec).unwrap(),
            max_relative = 1e-7
        );
    }
}
