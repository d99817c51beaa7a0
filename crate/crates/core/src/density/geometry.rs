use std::f64::consts::PI;

use super::cloud::ParticleCloud;
use crate::{Mat3, Vec3};

/// Counter-clockwise rotation by `theta` about the vertical axis.
pub fn rotation_matrix(theta: f64) -> Mat3 {
    let (s, c) = theta.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

pub fn rotate_point(x: &Vec3, theta: f64) -> Vec3 {
    let (s, c) = theta.sin_cos();
    Vec3::new(x[0] * c - x[1] * s, x[0] * s + x[1] * c, x[2])
}

/// Rotates every particle about the vertical axis. Weights are copied untouched.
pub fn rotate_cloud(cloud: &ParticleCloud, theta: f64) -> ParticleCloud {
    cloud.map_positions(|x| rotate_point(x, theta))
}

/// Distance to the vertical axis; `x` lies in the cylinder `C_δ` iff this is `≤ δ`.
pub fn cylinder_distance(x: &Vec3) -> f64 {
    x[0].hypot(x[1])
}

/// Uniform-density annulus `{inner ≤ ρ ≤ outer, |z| ≤ half_height}` discretized
/// with `n_radial × n_vertical` particles per sector and `sectors`-fold
/// rotational symmetry.
///
/// Each sector is an exact rotation of the first one, so the cloud is invariant
/// under `R_{2π/sectors}` up to the rounding of the rotation itself.
pub fn annulus_cloud(
    inner: f64,
    outer: f64,
    half_height: f64,
    n_radial: usize,
    n_vertical: usize,
    sectors: usize,
    density: f64,
) -> ParticleCloud {
    assert!(outer > inner && inner >= 0.0 && half_height > 0.0);
    assert!(n_radial > 0 && n_vertical > 0 && sectors > 0);
    let cells = (n_radial * n_vertical * sectors) as f64;
    let volume = PI * (outer * outer - inner * inner) * 2.0 * half_height;
    let weight = density * volume / cells;
    let dphi = 2.0 * PI / sectors as f64;
    let mut seed = Vec::with_capacity(n_radial * n_vertical);
    for i in 0..n_radial {
        // midpoint in ρ² so that every cell has the same volume
        let s = (i as f64 + 0.5) / n_radial as f64;
        let rho = (inner * inner + s * (outer * outer - inner * inner)).sqrt();
        for j in 0..n_vertical {
            let z = -half_height + (j as f64 + 0.5) * 2.0 * half_height / n_vertical as f64;
            seed.push(Vec3::new(
                rho * (0.5 * dphi).cos(),
                rho * (0.5 * dphi).sin(),
                z,
            ));
        }
    }
    let mut positions = Vec::with_capacity(seed.len() * sectors);
    for k in 0..sectors {
        let theta = k as f64 * dphi;
        positions.extend(seed.iter().map(|x| rotate_point(x, theta)));
    }
    let n = positions.len();
    ParticleCloud::new(positions, vec![weight; n], "annulus").expect("valid annulus")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn axis_is_fixed() {
        let x = Vec3::new(0.0, 0.0, 5.0);
        for theta in [0.3, 1.0, PI, -2.0] {
            assert_eq!(rotate_point(&x, theta), x);
        }
    }

    #[test]
    fn quarter_turn() {
        let y = rotate_point(&Vec3::x(), PI / 2.0);
        assert_relative_eq!(y, Vec3::y(), epsilon = 1e-16);
        assert_relative_eq!(rotation_matrix(PI / 2.0) * Vec3::x(), y, epsilon = 1e-16);
    }

    #[test]
    fn cylinder_distance_examples() {
        assert_eq!(cylinder_distance(&Vec3::new(0.0, 0.0, 7.0)), 0.0);
        assert_eq!(cylinder_distance(&Vec3::new(3.0, 4.0, -1.0)), 5.0);
    }

    #[test]
    fn rotation_roundtrip() {
        let cloud = annulus_cloud(0.2, 1.0, 0.5, 3, 4, 5, 1.0);
        let back = rotate_cloud(&rotate_cloud(&cloud, 0.7), -0.7);
        for (a, b) in cloud.positions().iter().zip(back.positions()) {
            assert!((a - b).norm() < 1e-12);
        }
        assert_eq!(back.weights(), cloud.weights());
    }

    #[test]
    fn annulus_mass_and_symmetry() {
        let cloud = annulus_cloud(0.25, 1.0, 0.5, 5, 10, 16, 2.0);
        assert_eq!(cloud.len(), 800);
        let volume = PI * (1.0 - 0.0625) * 1.0;
        assert_relative_eq!(cloud.total_mass(), 2.0 * volume, max_relative = 1e-12);
        // invariant under a 1/16 turn: every rotated particle has a partner
        let rotated = rotate_cloud(&cloud, 2.0 * PI / 16.0);
        for x in rotated.positions() {
            let nearest = cloud
                .positions()
                .iter()
                .map(|y| (x - y).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(nearest < 1e-12);
        }
    }
}
