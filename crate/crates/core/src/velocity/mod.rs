//! Velocity induced by a sedimenting particle cloud, `u = E ∗ (−e₃ ρ)`.

mod tree;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::density::{GrowthFunction, ParticleCloud};
use crate::error::{Error, Result};
use crate::kernel::{stokeslet_column3, OseenKernel};
use crate::osgood::omega_theta;
use crate::Vec3;

pub use tree::TreeConfig;

/// How the pairwise sum is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Summation {
    #[default]
    Direct,
    Tree(TreeConfig),
}

/// Kernel and summation settings shared by every evaluation of a field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityConfig {
    pub kernel: OseenKernel,
    pub summation: Summation,
    /// Whether a particle feels its own regularized Stokeslet when the
    /// velocity is sampled at particle positions.
    pub self_interaction: bool,
}

impl Default for VelocityConfig {
    fn default() -> Self {
        VelocityConfig {
            kernel: OseenKernel::singular(),
            summation: Summation::Direct,
            self_interaction: true,
        }
    }
}

impl VelocityConfig {
    pub fn direct(kernel: OseenKernel) -> Self {
        VelocityConfig {
            kernel,
            ..Default::default()
        }
    }

    pub fn tree(kernel: OseenKernel, tree: TreeConfig) -> Self {
        VelocityConfig {
            kernel,
            summation: Summation::Tree(tree),
            self_interaction: true,
        }
    }
}

/// `u(y) = −Σ_j w_j E_ε(y − x_j) e₃` at each target.
///
/// The first `self_targets` targets are taken to be the sources with the same
/// index; their own contribution is dropped when self-interaction is off.
pub fn induced_velocity(
    sources: &[Vec3],
    weights: &[f64],
    targets: &[Vec3],
    config: &VelocityConfig,
    self_targets: usize,
) -> Result<Vec<Vec3>> {
    if sources.len() != weights.len() {
        return Err(Error::InvalidArgument(
            "sources and weights differ in length".into(),
        ));
    }
    let eps2 = config.kernel.epsilon * config.kernel.epsilon;
    let skip_of = |i: usize| {
        if i < self_targets && !config.self_interaction {
            Some(i)
        } else {
            None
        }
    };
    match config.summation {
        Summation::Direct => targets
            .par_iter()
            .enumerate()
            .map(|(i, y)| {
                let skip = skip_of(i);
                let mut acc = Vec3::zeros();
                for (j, (x, w)) in sources.iter().zip(weights).enumerate() {
                    if Some(j) == skip {
                        continue;
                    }
                    let d = y - x;
                    let r2 = d.norm_squared() + eps2;
                    if r2 == 0.0 {
                        return Err(Error::SingularEvaluation);
                    }
                    acc += stokeslet_column3(&d, r2) * *w;
                }
                Ok(-acc)
            })
            .collect(),
        Summation::Tree(cfg) => {
            let tree = tree::Tree::build(sources, weights, cfg);
            targets
                .par_iter()
                .enumerate()
                .map_init(tree::Scratch::default, |scratch, (i, y)| {
                    tree.column_sum(y, eps2, skip_of(i), scratch)
                        .map(|v| -v)
                        .map_err(|_| Error::SingularEvaluation)
                })
                .collect()
        }
    }
}

/// Velocity field generated by a fixed cloud.
#[derive(Debug, Clone)]
pub struct VelocityField {
    pub source: ParticleCloud,
    pub config: VelocityConfig,
}

impl VelocityField {
    pub fn new(source: ParticleCloud, config: VelocityConfig) -> Self {
        VelocityField { source, config }
    }

    /// Velocity at arbitrary points; every source contributes.
    pub fn velocity_at(&self, targets: &[Vec3]) -> Result<Vec<Vec3>> {
        induced_velocity(
            self.source.positions(),
            self.source.weights(),
            targets,
            &self.config,
            0,
        )
    }

    /// Velocity at the source particles themselves.
    pub fn particle_velocities(&self) -> Result<Vec<Vec3>> {
        let x = self.source.positions();
        induced_velocity(x, self.source.weights(), x, &self.config, x.len())
    }
}

pub fn velocity_at(v: &VelocityField, targets: &[Vec3]) -> Result<Vec<Vec3>> {
    v.velocity_at(targets)
}

/// `max |u|` over the probe points.
pub fn sup_norm_probe(v: &VelocityField, probes: &[Vec3]) -> Result<f64> {
    if probes.is_empty() {
        return Err(Error::InvalidArgument("empty probe set".into()));
    }
    Ok(v.velocity_at(probes)?
        .iter()
        .map(|u| u.norm())
        .fold(0.0, f64::max))
}

/// `|u(x) − u(y)| / ω_Θ(|x − y|)` for each pair.
pub fn modulus_probe(
    v: &VelocityField,
    pairs: &[(Vec3, Vec3)],
    theta: &GrowthFunction,
) -> Result<Vec<f64>> {
    let mut points = Vec::with_capacity(2 * pairs.len());
    for (x, y) in pairs {
        if x == y {
            return Err(Error::InvalidArgument(
                "modulus probe pairs must be distinct".into(),
            ));
        }
        points.push(*x);
        points.push(*y);
    }
    let u = v.velocity_at(&points)?;
    pairs
        .iter()
        .enumerate()
        .map(|(n, (x, y))| {
            Ok((u[2 * n] - u[2 * n + 1]).norm() / omega_theta((x - y).norm(), theta)?)
        })
        .collect()
}

/// Pairs `(x, x + s·e)` with `x` uniform in the ball of radius `spread` about
/// `center`, `e` a uniform direction, and `s` log-spaced over `[min_sep, max_sep]`.
pub fn log_spaced_pairs(
    center: &Vec3,
    spread: f64,
    n: usize,
    min_sep: f64,
    max_sep: f64,
    seed: u64,
) -> Vec<(Vec3, Vec3)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    crate::fit::logspace(min_sep, max_sep, n)
        .into_iter()
        .map(|s| {
            let x = center + uniform_in_ball(&mut rng) * spread;
            (x, x + uniform_direction(&mut rng) * s)
        })
        .collect()
}

fn uniform_direction(rng: &mut impl Rng) -> Vec3 {
    let mu: f64 = rng.gen_range(-1.0..1.0);
    let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let s = (1.0 - mu * mu).sqrt();
    Vec3::new(s * phi.cos(), s * phi.sin(), mu)
}

fn uniform_in_ball(rng: &mut impl Rng) -> Vec3 {
    uniform_direction(rng) * rng.gen::<f64>().cbrt()
}

/// Near-uniform points on the unit sphere: a Fibonacci lattice plus both poles.
pub fn sphere_sample(n: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let mut pts = vec![Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, 0.0, -1.0)];
    for i in 0..n {
        let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
        let r = (1.0 - z * z).sqrt();
        let phi = golden * i as f64;
        pts.push(Vec3::new(r * phi.cos(), r * phi.sin(), z));
    }
    pts
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecaySample {
    pub radius: f64,
    pub max_speed: f64,
}

/// Sampled `max |u|` on spheres about the origin.
pub fn decay_probe(
    v: &VelocityField,
    radii: &[f64],
    sphere_points: usize,
) -> Result<Vec<DecaySample>> {
    let bound = v.source.bounding_radius();
    let unit = sphere_sample(sphere_points);
    radii
        .iter()
        .map(|&radius| {
            if !(radius > bound) {
                return Err(Error::InvalidArgument(format!(
                    "probe radius {radius} does not exceed the source radius {bound}"
                )));
            }
            let pts: Vec<Vec3> = unit.iter().map(|x| x * radius).collect();
            Ok(DecaySample {
                radius,
                max_speed: sup_norm_probe(v, &pts)?,
            })
        })
        .collect()
}
