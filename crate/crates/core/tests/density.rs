use std::f64::consts::{E, PI};

use proptest::prelude::*;
use stokeslet::density::{
    cloud_on_grid, lp_norm, lp_norm_planar_example, ltheta_norm, DensityFunction, ExampleDensity3d,
    GrowthFunction, IndicatorBall, Profile1d, Shells, SmoothBump, SphericalGrid, TensorDensity,
};
use stokeslet::quad::QuadSpec;

/// Lanczos approximation (g = 7, nine terms).
fn gamma(x: f64) -> f64 {
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return PI / ((PI * x).sin() * gamma(1.0 - x));
    }
    let x = x - 1.0;
    let t = x + 7.5;
    let series = C[0] + (1..9).map(|i| C[i] / (x + i as f64)).sum::<f64>();
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * series
}

/// Upper incomplete gamma `Γ(s, a)`: power series for the lower part when
/// `a < s + 1`, Lentz continued fraction otherwise.
fn upper_gamma(s: f64, a: f64) -> f64 {
    if a < s + 1.0 {
        let mut term = 1.0 / s;
        let mut sum = term;
        for n in 1..500 {
            term *= a / (s + n as f64);
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
        }
        gamma(s) - sum * a.powf(s) * (-a).exp()
    } else {
        let tiny = 1e-300;
        let mut b = a + 1.0 - s;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -(i as f64) * (i as f64 - s);
            b += 2.0;
            d = an * d + b;
            d = if d.abs() < tiny { tiny } else { d };
            c = b + an / c;
            c = if c.abs() < tiny { tiny } else { c };
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        a.powf(s) * (-a).exp() * h
    }
}

/// `∫₁^∞ e^{-a t} t^{-b} dt = a^{b-1} Γ(1 − b, a)`.
fn tail_integral(a: f64, b: f64) -> f64 {
    a.powf(b - 1.0) * upper_gamma(1.0 - b, a)
}

#[test]
fn oracle_sanity() {
    assert!((gamma(0.5) - PI.sqrt()).abs() < 1e-14);
    assert!((gamma(5.0) - 24.0).abs() < 1e-12);
    // Γ(1, a) = e^{-a}
    for a in [0.01, 0.5, 3.0] {
        assert!((upper_gamma(1.0, a) - (-a).exp()).abs() < 1e-14);
    }
}

#[test]
fn example_norms_match_incomplete_gamma() {
    let spec = QuadSpec::default();
    for p in [1.0, 1.5, 2.0, 2.5, 2.9, 2.99, 2.999] {
        let expected = (4.0 * PI * tail_integral(3.0 - p, p / 3.0)).powf(1.0 / p);
        let got = lp_norm(&ExampleDensity3d, p, &spec).unwrap();
        assert!(
            (got - expected).abs() <= 1e-8 * expected,
            "p = {p}: {got} vs {expected}"
        );
        let planar = (2.0 * PI * tail_integral(2.0 * (3.0 - p) / 3.0, p / 3.0)).powf(1.0 / p);
        let got = lp_norm_planar_example(p, &spec).unwrap();
        assert!(
            (got - planar).abs() <= 1e-8 * planar,
            "planar p = {p}: {got} vs {planar}"
        );
    }
    // ‖ρ‖₂² = 4π Γ(1/3, 1)
    let two = lp_norm(&ExampleDensity3d, 2.0, &spec).unwrap();
    assert!((two * two - 4.0 * PI * upper_gamma(1.0 / 3.0, 1.0)).abs() <= 1e-9);
}

#[test]
fn example_norms_table() {
    let spec = QuadSpec::default();
    for (p, expected) in [
        (1.0, 0.7571),
        (2.0, 1.7950),
        (2.9, 2.9859),
        (2.99, 3.7276),
        (2.999, 4.3047),
    ] {
        let got = lp_norm(&ExampleDensity3d, p, &spec).unwrap();
        assert!((got - expected).abs() < 5e-5, "p = {p}: {got}");
    }
}

#[test]
fn example_is_not_cubed_integrable() {
    assert!(lp_norm(&ExampleDensity3d, 3.0, &QuadSpec::default()).is_err());
}

#[test]
fn ltheta_supremum_is_attained_at_p_one() {
    let theta = GrowthFunction::LogBlowup;
    let norm = ltheta_norm(&ExampleDensity3d, &theta, &[1.0, 2.0, 2.9, 2.99, 2.999]).unwrap();
    let p1 = lp_norm(&ExampleDensity3d, 1.0, &QuadSpec::default()).unwrap() / (1.0 - 2f64.ln());
    assert_eq!(norm.argmax, 1.0);
    assert!((norm.value - p1).abs() <= 1e-12 * p1);
}

#[test]
fn tensor_norm_factorizes() {
    let spec = QuadSpec::default();
    let rho2 = Profile1d::Indicator {
        half_width: 0.5,
        height: 2.0,
    };
    let t = TensorDensity { rho2 };
    for p in [1.0, 2.0, 2.5] {
        let expected = lp_norm_planar_example(p, &spec).unwrap() * 2.0 * 1f64.powf(1.0 / p);
        let got = lp_norm(&t, p, &spec).unwrap();
        assert!(
            (got - expected).abs() <= 1e-6 * expected,
            "p = {p}: {got} vs {expected}"
        );
    }
}

#[test]
fn support_radius_of_example() {
    assert_eq!(ExampleDensity3d.support_radius(), 1.0 / E);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn indicator_norms(radius in 0.1..3.0f64, height in 0.1..5.0f64, p in 1.0..2.99f64) {
        let f = IndicatorBall { radius, height };
        let expected = height * (4.0 / 3.0 * PI * radius.powi(3)).powf(1.0 / p);
        let got = lp_norm(&f, p, &QuadSpec::default()).unwrap();
        prop_assert!((got - expected).abs() <= 1e-9 * expected);
    }

    #[test]
    fn running_sup_is_monotone(mut grid in prop::collection::vec(1.0..2.999f64, 2..8)) {
        grid.sort_by(|a, b| a.total_cmp(b));
        grid.dedup();
        let norm = ltheta_norm(&ExampleDensity3d, &GrowthFunction::LogBlowup, &grid).unwrap();
        let running = norm.running_max();
        prop_assert!(running.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(*running.last().unwrap(), norm.value);
        prop_assert!(norm.samples.iter().all(|s| s.ratio <= norm.value));
    }

    #[test]
    fn grid_clouds_keep_the_indicator_mass(
        radius in 0.2..2.0f64,
        n_r in 1usize..12,
        n_mu in 1usize..6,
        n_phi in 1usize..8,
        uniform in any::<bool>(),
    ) {
        let f = IndicatorBall { radius, height: 1.0 };
        let shells = if uniform { Shells::Uniform } else { Shells::EqualVolume };
        let grid = SphericalGrid { radius, n_r, n_mu, n_phi, shells };
        let cloud = cloud_on_grid(&f, &grid).unwrap();
        let mass = 4.0 / 3.0 * PI * radius.powi(3);
        prop_assert!((cloud.total_mass() - mass).abs() <= 1e-12 * mass);
        prop_assert!(cloud.positions().iter().all(|x| x.norm() <= radius));
        prop_assert!(cloud.weights().iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn bump_clouds_approach_the_mass(radius in 0.3..2.0f64) {
        let f = SmoothBump { radius, height: 1.0 };
        let mass = lp_norm(&f, 1.0, &QuadSpec::default()).unwrap();
        let coarse = cloud_on_grid(&f, &SphericalGrid::with_target(radius, 500)).unwrap().total_mass();
        let fine = cloud_on_grid(&f, &SphericalGrid::with_target(radius, 8000)).unwrap().total_mass();
        prop_assert!((fine - mass).abs() <= (coarse - mass).abs() + 1e-12);
        prop_assert!((fine - mass).abs() <= 2e-2 * mass);
    }
}
