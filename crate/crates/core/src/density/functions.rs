use std::f64::consts::{E, PI};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kernel::CutoffProfile;
use crate::quad::{integrate_pieces, GaussLegendre, QuadSpec};
use crate::Vec3;

use super::geometry::rotate_point;

/// A nonnegative density on ℝ³ with bounded support.
pub trait DensityFunction: Send + Sync {
    fn eval(&self, x: &Vec3) -> f64;

    /// Radius of a ball about the origin containing the support.
    fn support_radius(&self) -> f64;

    /// Radial profile `r ↦ ρ(r)`, for densities that depend only on `|x|`.
    fn radial(&self, _r: f64) -> Option<f64> {
        None
    }

    /// Radii where the radial profile has kinks or jumps.
    fn radial_breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    /// Closed-form or specialized `‖ρ‖_{L^p}` when a density knows better than
    /// generic cubature.
    fn lp_norm_override(&self, _p: f64, _spec: &QuadSpec) -> Option<Result<f64>> {
        None
    }

    fn label(&self) -> String;
}

/// Shared, thread-safe handle to a density.
pub type SharedDensity = Arc<dyn DensityFunction>;

impl fmt::Debug for dyn DensityFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DensityFunction({})", self.label())
    }
}

impl<T: DensityFunction + ?Sized> DensityFunction for Arc<T> {
    fn eval(&self, x: &Vec3) -> f64 {
        (**self).eval(x)
    }
    fn support_radius(&self) -> f64 {
        (**self).support_radius()
    }
    fn radial(&self, r: f64) -> Option<f64> {
        (**self).radial(r)
    }
    fn radial_breakpoints(&self) -> Vec<f64> {
        (**self).radial_breakpoints()
    }
    fn lp_norm_override(&self, p: f64, spec: &QuadSpec) -> Option<Result<f64>> {
        (**self).lp_norm_override(p, spec)
    }
    fn label(&self) -> String {
        (**self).label()
    }
}

/// Indicator of the open ball of the given radius about the origin, times `height`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndicatorBall {
    pub radius: f64,
    pub height: f64,
}

impl IndicatorBall {
    pub fn new(radius: f64) -> Self {
        IndicatorBall {
            radius,
            height: 1.0,
        }
    }
}

impl DensityFunction for IndicatorBall {
    fn eval(&self, x: &Vec3) -> f64 {
        self.radial(x.norm()).unwrap()
    }
    fn support_radius(&self) -> f64 {
        self.radius
    }
    fn radial(&self, r: f64) -> Option<f64> {
        Some(if r < self.radius { self.height } else { 0.0 })
    }
    fn radial_breakpoints(&self) -> Vec<f64> {
        vec![self.radius]
    }
    fn label(&self) -> String {
        format!("indicator-ball(r={})", self.radius)
    }
}

/// Smooth compactly supported bump: `height · η(2|x|/radius)` with the quintic cutoff,
/// flat on `|x| ≤ radius/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothBump {
    pub radius: f64,
    pub height: f64,
}

impl DensityFunction for SmoothBump {
    fn eval(&self, x: &Vec3) -> f64 {
        self.radial(x.norm()).unwrap()
    }
    fn support_radius(&self) -> f64 {
        self.radius
    }
    fn radial(&self, r: f64) -> Option<f64> {
        Some(self.height * CutoffProfile::default().eval(2.0 * r / self.radius))
    }
    fn radial_breakpoints(&self) -> Vec<f64> {
        vec![0.5 * self.radius, self.radius]
    }
    fn label(&self) -> String {
        format!("bump(r={})", self.radius)
    }
}

/// `1 / (|x| |log|x||^{1/3})` on the open ball of radius `1/e`; zero at the origin.
///
/// It lies in every `L^p`, `p < 3`, with norms growing like `1 − log(3 − p)`,
/// but not in `L^3`.
pub fn example_density_3d(x: &Vec3) -> f64 {
    example_profile_3d(x.norm())
}

fn example_profile_3d(r: f64) -> f64 {
    if r > 0.0 && r < 1.0 / E {
        1.0 / (r * (-r.ln()).cbrt())
    } else {
        0.0
    }
}

/// Planar factor `1 / (|y|^{2/3} |log|y||^{1/3})` on the disc of radius `1/e`.
pub fn example_density_planar(y: f64) -> f64 {
    if y > 0.0 && y < 1.0 / E {
        1.0 / (y.powf(2.0 / 3.0) * (-y.ln()).cbrt())
    } else {
        0.0
    }
}

/// `ρ₁(x₁, x₂) ρ₂(x₃)` with the planar example factor.
pub fn example_density_tensor(x: &Vec3, rho2: &Profile1d) -> f64 {
    let planar = example_density_planar(x[0].hypot(x[1]));
    if planar == 0.0 {
        0.0
    } else {
        planar * rho2.eval(x[2])
    }
}

/// The radially symmetric example density as a [`DensityFunction`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ExampleDensity3d;

impl DensityFunction for ExampleDensity3d {
    fn eval(&self, x: &Vec3) -> f64 {
        example_density_3d(x)
    }
    fn support_radius(&self) -> f64 {
        1.0 / E
    }
    fn radial(&self, r: f64) -> Option<f64> {
        Some(example_profile_3d(r))
    }
    fn radial_breakpoints(&self) -> Vec<f64> {
        vec![1.0 / E]
    }
    fn lp_norm_override(&self, p: f64, spec: &QuadSpec) -> Option<Result<f64>> {
        // r = e^{-t}: ‖ρ‖_p^p = 4π ∫₁^∞ e^{-t(3-p)} t^{-p/3} dt
        Some(
            log_radial_power_integral(3.0 - p, p / 3.0, spec).map(|v| (4.0 * PI * v).powf(1.0 / p)),
        )
    }
    fn label(&self) -> String {
        "example3d".into()
    }
}

/// `∫₁^∞ e^{-a t} t^{-b} dt` for `a > 0`, evaluated in the variable `t = e^v`
/// which turns the slow exponential tail into a double-exponential one.
pub(crate) fn log_radial_power_integral(a: f64, b: f64, spec: &QuadSpec) -> Result<f64> {
    if a <= 0.0 {
        return Err(Error::Domain(format!(
            "integral diverges (decay rate {a} is not positive)"
        )));
    }
    let integrand = |v: f64| {
        let t = v.exp();
        (-a * t + (1.0 - b) * v).exp()
    };
    // past t = 80/a the exponential factor is below e^{-80}
    let v_max = (80.0 / a).ln().max(1.0) + 1.0;
    let knee = (1.0 / a).ln().clamp(0.0, v_max);
    let mut breaks = vec![0.0];
    if knee > 0.0 && knee < v_max {
        breaks.push(knee);
    }
    breaks.push(v_max);
    Ok(integrate_pieces(integrand, &breaks, spec)?.value)
}

/// One-dimensional vertical profile for tensor-product densities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile1d {
    /// `height · 1_{|z| < half_width}`.
    Indicator {
        half_width: f64,
        height: f64,
    },
    /// Quintic bump of the given half width.
    Bump {
        half_width: f64,
        height: f64,
    },
    Zero,
}

impl Profile1d {
    pub fn eval(&self, z: f64) -> f64 {
        match *self {
            Profile1d::Indicator { half_width, height } => {
                if z.abs() < half_width {
                    height
                } else {
                    0.0
                }
            }
            Profile1d::Bump { half_width, height } => {
                height * CutoffProfile::default().eval(2.0 * z.abs() / half_width)
            }
            Profile1d::Zero => 0.0,
        }
    }

    pub fn half_width(&self) -> f64 {
        match *self {
            Profile1d::Indicator { half_width, .. } | Profile1d::Bump { half_width, .. } => {
                half_width
            }
            Profile1d::Zero => 0.0,
        }
    }

    /// `‖ρ₂‖_{L^p(ℝ)}`.
    pub fn lp_norm(&self, p: f64, spec: &QuadSpec) -> Result<f64> {
        match *self {
            Profile1d::Indicator { half_width, height } => {
                Ok(height * (2.0 * half_width).powf(1.0 / p))
            }
            Profile1d::Bump { half_width, .. } => {
                let v = integrate_pieces(
                    |z| self.eval(z).powf(p),
                    &[0.0, 0.5 * half_width, half_width],
                    spec,
                )?;
                Ok((2.0 * v.value).powf(1.0 / p))
            }
            Profile1d::Zero => Ok(0.0),
        }
    }
}

/// `ρ₁(x₁, x₂) ρ₂(x₃)` with the planar example factor; invariant under rotations about e₃.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TensorDensity {
    pub rho2: Profile1d,
}

impl DensityFunction for TensorDensity {
    fn eval(&self, x: &Vec3) -> f64 {
        example_density_tensor(x, &self.rho2)
    }
    fn support_radius(&self) -> f64 {
        (1.0 / E).hypot(self.rho2.half_width())
    }
    fn lp_norm_override(&self, p: f64, spec: &QuadSpec) -> Option<Result<f64>> {
        Some(
            super::norms::lp_norm_planar_example(p, spec)
                .and_then(|planar| Ok(planar * self.rho2.lp_norm(p, spec)?)),
        )
    }
    fn label(&self) -> String {
        format!("tensor({:?})", self.rho2)
    }
}

/// Density given by a closure.
pub struct FnDensity<F> {
    pub f: F,
    pub radius: f64,
    pub name: String,
}

impl<F: Fn(&Vec3) -> f64 + Send + Sync> FnDensity<F> {
    pub fn new(f: F, radius: f64, name: impl Into<String>) -> Self {
        FnDensity {
            f,
            radius,
            name: name.into(),
        }
    }
}

impl<F: Fn(&Vec3) -> f64 + Send + Sync> DensityFunction for FnDensity<F> {
    fn eval(&self, x: &Vec3) -> f64 {
        (self.f)(x)
    }
    fn support_radius(&self) -> f64 {
        self.radius
    }
    fn label(&self) -> String {
        self.name.clone()
    }
}

/// `x ↦ ρ(x − offset)`.
#[derive(Debug, Clone)]
pub struct Translated<D> {
    pub inner: D,
    pub offset: Vec3,
}

impl<D: DensityFunction> DensityFunction for Translated<D> {
    fn eval(&self, x: &Vec3) -> f64 {
        self.inner.eval(&(x - self.offset))
    }
    fn support_radius(&self) -> f64 {
        self.inner.support_radius() + self.offset.norm()
    }
    fn label(&self) -> String {
        format!("{}+{:?}", self.inner.label(), self.offset.as_slice())
    }
}

/// `x ↦ ρ(R_θ x)`.
#[derive(Debug, Clone)]
pub struct Rotated<D> {
    pub inner: D,
    pub theta: f64,
}

impl<D: DensityFunction> DensityFunction for Rotated<D> {
    fn eval(&self, x: &Vec3) -> f64 {
        self.inner.eval(&rotate_point(x, self.theta))
    }
    fn support_radius(&self) -> f64 {
        self.inner.support_radius()
    }
    fn radial(&self, r: f64) -> Option<f64> {
        self.inner.radial(r)
    }
    fn radial_breakpoints(&self) -> Vec<f64> {
        self.inner.radial_breakpoints()
    }
    fn label(&self) -> String {
        format!("{}∘R({})", self.inner.label(), self.theta)
    }
}

/// Radial mollifier `j_δ(x) = c_δ η(2|x|/δ)` built from the quintic cutoff and
/// normalized to unit mass. Supported in the closed ball of radius `δ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mollifier {
    pub delta: f64,
    scale: f64,
}

impl Mollifier {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "mollifier radius {delta} must be positive"
            )));
        }
        // ∫ j = 4π c (δ/2)³ ∫₀² η(u) u² du, with η polynomial on each piece
        let moment2 = shape_moment(2, 2.0);
        let scale = 1.0 / (4.0 * PI * (0.5 * delta).powi(3) * moment2);
        Ok(Mollifier { delta, scale })
    }

    pub fn eval_radial(&self, r: f64) -> f64 {
        self.scale * CutoffProfile::default().eval(2.0 * r / self.delta)
    }

    /// `J(a) = ∫₀^a j(ρ) ρ dρ`, exact.
    fn first_moment_to(&self, a: f64) -> f64 {
        let a = a.clamp(0.0, self.delta);
        self.scale * (0.5 * self.delta).powi(2) * shape_moment(1, 2.0 * a / self.delta)
    }
}

/// `∫₀^u η(s) s^k ds` for the unit quintic cutoff, exact via Gauss–Legendre on each
/// polynomial piece.
fn shape_moment(k: i32, upper: f64) -> f64 {
    let gl = GaussLegendre::new(6);
    let eta = CutoffProfile::default();
    let flat = upper.min(1.0);
    let mut total = flat.powi(k + 1) / (k + 1) as f64;
    if upper > 1.0 {
        total += gl.integrate(|s| eta.eval(s) * s.powi(k), 1.0, upper.min(2.0));
    }
    total
}

/// `ρ ∗ j_δ`, evaluated pointwise by local quadrature.
pub struct Mollified<D> {
    pub inner: D,
    pub kernel: Mollifier,
    spec: QuadSpec,
    cubature: Arc<(GaussLegendre, GaussLegendre, GaussLegendre)>,
}

impl<D: DensityFunction> Mollified<D> {
    pub fn new(inner: D, delta: f64) -> Result<Self> {
        Ok(Mollified {
            inner,
            kernel: Mollifier::new(delta)?,
            spec: QuadSpec {
                abs_tol: 1e-11,
                rel_tol: 1e-9,
                max_subdivisions: 400,
            },
            cubature: Arc::new((
                GaussLegendre::new(16),
                GaussLegendre::new(16),
                GaussLegendre::new(24),
            )),
        })
    }

    fn radial_value(&self, r: f64) -> Result<f64> {
        let delta = self.kernel.delta;
        let profile = |s: f64| self.inner.radial(s).unwrap_or(0.0);
        if r < 1e-9 * delta {
            let v = integrate_pieces(
                |s| 4.0 * PI * s * s * profile(s) * self.kernel.eval_radial(s),
                &self.breaks(0.0, delta, 0.0),
                &self.spec,
            )?;
            return Ok(v.value);
        }
        // the angular integral of j over a sphere of radius s about the origin,
        // seen from distance r, collapses to J(min(r+s, δ)) − J(|r−s|)
        let lo = (r - delta).max(0.0);
        let hi = r + delta;
        let v = integrate_pieces(
            |s| {
                s * profile(s)
                    * (self.kernel.first_moment_to(r + s)
                        - self.kernel.first_moment_to((r - s).abs()))
            },
            &self.breaks(lo, hi, r),
            &self.spec,
        )?;
        Ok(2.0 * PI * v.value / r)
    }

    fn breaks(&self, lo: f64, hi: f64, r: f64) -> Vec<f64> {
        let d = self.kernel.delta;
        let mut b = vec![lo, hi];
        for c in [
            r - d,
            r - 0.5 * d,
            r,
            r + 0.5 * d,
            r + d,
            d - r,
            0.5 * d - r,
        ] {
            b.push(c);
        }
        b.extend(self.inner.radial_breakpoints());
        b.retain(|&x| x >= lo && x <= hi);
        b.sort_by(|a, c| a.total_cmp(c));
        b.dedup_by(|a, c| (*a - *c).abs() <= 1e-14 * hi.max(1.0));
        b
    }

    fn cubature_value(&self, x: &Vec3) -> f64 {
        let (gr, gm, gp) = &*self.cubature;
        let delta = self.kernel.delta;
        let mut total = 0.0;
        // split radially at δ/2 where j loses smoothness
        for (a, b) in [(0.0, 0.5 * delta), (0.5 * delta, delta)] {
            total += gr.integrate(
                |s| {
                    let js = self.kernel.eval_radial(s) * s * s;
                    gm.integrate(
                        |mu| {
                            let sin = (1.0 - mu * mu).max(0.0).sqrt();
                            gp.integrate(
                                |phi| {
                                    let d = Vec3::new(sin * phi.cos(), sin * phi.sin(), mu) * s;
                                    self.inner.eval(&(x - d))
                                },
                                0.0,
                                2.0 * PI,
                            )
                        },
                        -1.0,
                        1.0,
                    ) * js
                },
                a,
                b,
            );
        }
        total
    }
}

impl<D: DensityFunction> DensityFunction for Mollified<D> {
    fn eval(&self, x: &Vec3) -> f64 {
        if let Some(v) = self.radial(x.norm()) {
            v
        } else {
            self.cubature_value(x).max(0.0)
        }
    }
    fn support_radius(&self) -> f64 {
        self.inner.support_radius() + self.kernel.delta
    }
    fn radial(&self, r: f64) -> Option<f64> {
        self.inner.radial(0.0)?;
        Some(self.radial_value(r).unwrap_or(f64::NAN).max(0.0))
    }
    fn radial_breakpoints(&self) -> Vec<f64> {
        let d = self.kernel.delta;
        let mut b = vec![d];
        for r in self.inner.radial_breakpoints() {
            b.extend([r - d, r, r + d].into_iter().filter(|&x| x > 0.0));
        }
        b
    }
    fn label(&self) -> String {
        format!("mollified({}, δ={})", self.inner.label(), self.kernel.delta)
    }
}

/// `ρ ∗ j_δ` for a shared density.
pub fn mollify(f: SharedDensity, delta: f64) -> Result<Mollified<SharedDensity>> {
    Mollified::new(f, delta)
}
