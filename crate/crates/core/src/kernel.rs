//! The Oseen tensor (Stokeslet), its regularized variant, its gradient, the
//! smooth near/far split and the L^p estimate for its translations.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quad::{integrate, integrate_pieces, Estimate, QuadSpec};
use crate::{Mat3, Vec3};

/// Quintic smoothstep `10t³ − 15t⁴ + 6t⁵`, clamped to `[0, 1]`. C² at both ends.
pub fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
    }
}

/// Radial cutoff profile: identically 1 on `[0, inner]`, identically 0 beyond
/// `outer`, with a quintic transition in between.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffProfile {
    pub inner: f64,
    pub outer: f64,
}

impl Default for CutoffProfile {
    fn default() -> Self {
        CutoffProfile {
            inner: 1.0,
            outer: 2.0,
        }
    }
}

impl CutoffProfile {
    pub fn eval(&self, r: f64) -> f64 {
        1.0 - smoothstep((r - self.inner) / (self.outer - self.inner))
    }
}

/// Green tensor of the steady Stokes system in three dimensions.
///
/// With `epsilon > 0` the distance `r` is replaced by `sqrt(r² + ε²)` both in
/// the prefactor and in the dyadic term, which bounds the near field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OseenKernel {
    pub epsilon: f64,
    pub cutoff: CutoffProfile,
}

impl Default for OseenKernel {
    fn default() -> Self {
        Self::singular()
    }
}

impl OseenKernel {
    pub fn singular() -> Self {
        OseenKernel {
            epsilon: 0.0,
            cutoff: CutoffProfile::default(),
        }
    }

    pub fn regularized(epsilon: f64) -> Self {
        assert!(epsilon >= 0.0, "regularization must be nonnegative");
        OseenKernel {
            epsilon,
            cutoff: CutoffProfile::default(),
        }
    }

    pub fn is_regularized(&self) -> bool {
        self.epsilon > 0.0
    }

    /// Evaluates `E(x)` (or `E_ε(x)`).
    pub fn eval(&self, x: &Vec3) -> Result<Mat3> {
        let r2 = x.norm_squared() + self.epsilon * self.epsilon;
        if r2 == 0.0 {
            return Err(Error::SingularEvaluation);
        }
        let r = r2.sqrt();
        let pre = 1.0 / (8.0 * PI * r);
        Ok((Mat3::identity() + x * x.transpose() / r2) * pre)
    }

    /// Third column `E(x) e₃`, the response to a unit vertical point force.
    #[inline]
    pub fn column3(&self, x: &Vec3) -> Result<Vec3> {
        let r2 = x.norm_squared() + self.epsilon * self.epsilon;
        if r2 == 0.0 {
            return Err(Error::SingularEvaluation);
        }
        Ok(stokeslet_column3(x, r2))
    }

    /// Gradient `∂_k E_ij` of the singular kernel, returned as `[∂_1 E, ∂_2 E, ∂_3 E]`.
    pub fn grad(&self, x: &Vec3) -> Result<[Mat3; 3]> {
        let r2 = x.norm_squared();
        if r2 == 0.0 {
            return Err(Error::SingularEvaluation);
        }
        let r = r2.sqrt();
        let r3 = r2 * r;
        let r5 = r3 * r2;
        let c = 1.0 / (8.0 * PI);
        let mut out = [Mat3::zeros(); 3];
        for (k, dk) in out.iter_mut().enumerate() {
            for i in 0..3 {
                for j in 0..3 {
                    let dij = if i == j { 1.0 } else { 0.0 };
                    let dik = if i == k { 1.0 } else { 0.0 };
                    let djk = if j == k { 1.0 } else { 0.0 };
                    dk[(i, j)] = c
                        * (-dij * x[k] / r3 + (dik * x[j] + djk * x[i]) / r3
                            - 3.0 * x[i] * x[j] * x[k] / r5);
                }
            }
        }
        Ok(out)
    }

    /// Splits `E = E₁ + E₂` with `E₁ = E η` supported in the outer cutoff ball
    /// and `E₂ = E (1 − η)` vanishing inside the inner one.
    pub fn split(&self, x: &Vec3) -> Result<(Mat3, Mat3)> {
        let e = self.eval(x)?;
        let eta = self.cutoff.eval(x.norm());
        let near = e * eta;
        Ok((near, e - near))
    }
}

#[inline]
pub(crate) fn stokeslet_column3(x: &Vec3, r2: f64) -> Vec3 {
    let r = r2.sqrt();
    let pre = 1.0 / (8.0 * PI * r);
    let s = x[2] / r2;
    Vec3::new(pre * x[0] * s, pre * x[1] * s, pre * (1.0 + x[2] * s))
}

/// Options for [`translation_lp_norm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TranslationQuad {
    /// Requested absolute accuracy of the returned norm.
    pub abs_tol: f64,
    /// Relative accuracy used for the outer integrals of `|τ_h E − E|^p`.
    pub rel_tol: f64,
}

impl Default for TranslationQuad {
    fn default() -> Self {
        TranslationQuad {
            abs_tol: 1e-4,
            rel_tol: 1e-7,
        }
    }
}

/// `‖τ_h E − E‖_{L^p}` with the Frobenius norm on matrices, for `p ∈ (3/2, 3)`.
///
/// The integrand has point singularities at `0` and `−h`. Each is handled by a
/// spherical ball (radius `|h|/2` at most) in logarithmic radial variables,
/// blended with the remainder through the quintic cutoff. Everything is
/// axisymmetric about `h`, so each piece is a two-dimensional integral.
pub fn translation_lp_norm(h: &Vec3, p: f64, quad: &TranslationQuad) -> Result<Estimate> {
    if !(p > 1.5 && p < 3.0) {
        return Err(Error::Domain(format!("p = {p} outside (3/2, 3)")));
    }
    let hn = h.norm();
    if hn == 0.0 {
        return Err(Error::InvalidArgument("translation must be nonzero".into()));
    }
    let kernel = OseenKernel::singular();
    let direct = |x: &Vec3| kernel.eval(x).unwrap_or_else(|_| Mat3::zeros());
    let axis = h / hn;
    let perp = any_perpendicular(&axis);
    let a = 0.25 * hn;
    let bump = CutoffProfile {
        inner: a,
        outer: 2.0 * a,
    };
    // both arguments are passed explicitly so that neither is formed by a
    // cancelling sum near its own singularity
    let integrand = |x: &Vec3, y: &Vec3| -> f64 {
        if x.norm_squared() == 0.0 || y.norm_squared() == 0.0 {
            return 0.0;
        }
        let diff = if h.norm_squared() < x.norm_squared().min(y.norm_squared()) {
            oseen_difference(x, y, h)
        } else {
            direct(y) - direct(x)
        };
        diff.norm().powf(p)
    };
    let inner_spec = QuadSpec {
        abs_tol: 0.0,
        rel_tol: quad.rel_tol * 1e-2,
        max_subdivisions: 2000,
    };
    let outer_spec = QuadSpec {
        abs_tol: 0.0,
        rel_tol: quad.rel_tol,
        max_subdivisions: 2000,
    };

    // angular integral over a sphere of radius r about `center` (x = center + d,
    // x + h = center_shifted + d), weighted by `weight(x)`
    let shell = |center: Vec3, shifted: Vec3, r: f64, weight: &dyn Fn(&Vec3) -> f64| -> f64 {
        let f = |theta: f64| {
            let (s, c) = theta.sin_cos();
            let d = axis * (r * c) + perp * (r * s);
            let x = center + d;
            let y = shifted + d;
            2.0 * PI * s * integrand(&x, &y) * weight(&x)
        };
        // a shell that misses its tolerance still carries its best estimate;
        // the outer error check decides whether the total is good enough
        match integrate(f, 0.0, PI, &inner_spec) {
            Ok(e) => e.value,
            Err(Error::QuadratureNonConvergence { estimate, .. }) => estimate,
            Err(_) => f64::NAN,
        }
    };

    let mut total = Estimate::zero();
    // near each singular point: r = 2a e^{-t}, dr = r dt, down to r_core where
    // the integrand is |E|^p to relative accuracy r_core/|h|; the core ball is
    // then integrated in closed form (‖E(x)‖_F = √6 / (8π|x|))
    let r_core = 1e-12 * hn;
    let t_core = (2.0 * a / r_core).ln();
    let core_ball =
        4.0 * PI * (6f64.sqrt() / (8.0 * PI)).powf(p) * r_core.powf(3.0 - p) / (3.0 - p);
    for (center, shifted) in [(Vec3::zeros(), *h), (-h, Vec3::zeros())] {
        let w = |x: &Vec3| bump.eval((x - center).norm());
        let piece = integrate(
            |t| {
                let r = 2.0 * a * (-t).exp();
                r * r * r * shell(center, shifted, r, &w)
            },
            0.0,
            t_core,
            &outer_spec,
        )?;
        total = total
            + piece
            + Estimate {
                value: core_ball,
                error: core_ball * 1e-12,
            };
    }
    // remainder, centered at the midpoint
    let mid = -0.5 * h;
    let w_far = |x: &Vec3| 1.0 - bump.eval(x.norm()) - bump.eval((x + h).norm());
    let breaks = [0.0, 0.25 * hn, 0.5 * hn, 0.75 * hn, hn, 2.0 * hn];
    let core = integrate_pieces(
        |r| r * r * shell(mid, -mid, r, &w_far),
        &breaks,
        &outer_spec,
    )?;
    let r_far = 2.0 * hn;
    let t_max = 40.0 / (2.0 * p - 3.0);
    let tail = integrate(
        |t| {
            let r = r_far * t.exp();
            r * r * r * shell(mid, -mid, r, &w_far)
        },
        0.0,
        t_max,
        &outer_spec,
    )?;
    total = total + core + tail;
    if !total.value.is_finite() {
        return Err(Error::QuadratureNonConvergence {
            estimate: total.value,
            error: f64::INFINITY,
            tolerance: quad.abs_tol,
        });
    }
    let value = total.value.powf(1.0 / p);
    let error = value * total.error / (p * total.value.max(f64::MIN_POSITIVE));
    if error > quad.abs_tol.max(quad.rel_tol * value) {
        return Err(Error::QuadratureNonConvergence {
            estimate: value,
            error,
            tolerance: quad.abs_tol,
        });
    }
    Ok(Estimate { value, error })
}

/// `E(y) − E(x)` for `y = x + h`, arranged to avoid cancellation when `|h| ≪ |x|`.
pub fn oseen_difference(x: &Vec3, y: &Vec3, h: &Vec3) -> Mat3 {
    let rx = x.norm();
    let ry = y.norm();
    // |x|² − |y|² without forming the difference of two large numbers
    let sq_gap = -(2.0 * x.dot(h) + h.norm_squared());
    let lin_gap = sq_gap / (rx + ry); // |x| − |y|
    let inv1 = lin_gap / (rx * ry); // 1/|y| − 1/|x|
    let inv3 = lin_gap * (rx * rx + rx * ry + ry * ry) / (rx.powi(3) * ry.powi(3));
    let ry3 = ry.powi(3);
    let cross = x * h.transpose() + h * x.transpose() + h * h.transpose();
    (Mat3::identity() * inv1 + x * x.transpose() * inv3 + cross / ry3) / (8.0 * PI)
}

pub(crate) fn any_perpendicular(axis: &Vec3) -> Vec3 {
    let trial = if axis[0].abs() < 0.9 {
        Vec3::x()
    } else {
        Vec3::y()
    };
    (trial - axis * axis.dot(&trial)).normalize()
}
