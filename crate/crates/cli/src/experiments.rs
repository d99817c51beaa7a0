//! The experiments behind each subcommand.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use stokeslet::density::{
    clouds_on_common_grid, clouds_on_grid, lp_norm, lp_norm_planar_example, ltheta_norm, mollify,
    DensityFunction, ExampleDensity3d, GrowthFunction, ParticleCloud, TensorDensity, Translated,
    DEFAULT_P_GRID,
};
use stokeslet::fit::{loglog_slope, logspace};
use stokeslet::flow::{
    axis_invariance_error, center_of_mass_heights, conserved_norm_report,
    cylinder_confinement_report, integrate, rotation_equivariance_error, FlowTrajectory,
    WeightStatistic,
};
use stokeslet::kernel::{translation_lp_norm, OseenKernel, TranslationQuad};
use stokeslet::osgood::{
    big_omega, big_omega_inverse, bihari_bound, concavity_check, omega_theta, osgood_integral,
    Modulus, OsgoodVerdict,
};
use stokeslet::quad::QuadSpec;
use stokeslet::transport::{stability_verify, w1_exact, StabilityOptions, StabilityReport};
use stokeslet::velocity::VelocityField;
use stokeslet::{Mat3, Vec3};

use crate::config::ScenarioConfig;
use crate::error::{CliError, CliResult};
use crate::report::{Output, Report};

fn run(
    cfg: &ScenarioConfig,
    c0: &ParticleCloud,
    tracers: &[Vec3],
    out: &Output,
) -> CliResult<FlowTrajectory> {
    let mut traj = integrate(
        c0,
        (0.0, cfg.t_final),
        &cfg.integrator(),
        &cfg.velocity(),
        tracers,
    )?;
    traj.seed = Some(cfg.seed);
    traj.provenance = Some(out.provenance());
    Ok(traj)
}

fn max_value(values: &[f64]) -> f64 {
    values.iter().copied().fold(0.0, f64::max)
}

pub fn simulate(cfg: &ScenarioConfig, out: &Output) -> CliResult<Report> {
    let mut report = Report::new("simulate");
    let c0 = cfg.cloud()?;
    let traj = run(cfg, &c0, &cfg.tracer_points(), out)?;
    traj.write_dir(out.path("trajectory"))?;

    let square = |w: f64| w * w;
    let root = |w: f64| w.sqrt();
    let norms = conserved_norm_report(
        &traj,
        &[
            WeightStatistic {
                name: "sum_w2",
                phi: &square,
            },
            WeightStatistic {
                name: "sum_sqrt_w",
                phi: &root,
            },
        ],
    );
    let heights = center_of_mass_heights(&traj).ok();
    let rows: Vec<Vec<f64>> = (0..traj.times.len())
        .map(|k| {
            vec![
                norms.times[k],
                norms.mass[k],
                norms.min_weight[k],
                norms.first_moment[k],
                heights.as_ref().map_or(f64::NAN, |h| h[k]),
            ]
        })
        .collect();
    out.write_csv(
        "norms.csv",
        &["t", "mass", "min_weight", "first_moment", "com_z"],
        &rows,
    )?;

    let mass_drift = norms
        .mass
        .iter()
        .map(|m| (m - norms.mass[0]).abs())
        .fold(0.0, f64::max);
    report.check(
        "weights_identical",
        norms.weights_identical,
        "sorted weight bit patterns agree with the initial ones at every snapshot",
    );
    report.check(
        "mass_conserved",
        mass_drift == 0.0,
        format!("mass drift {mass_drift:e}"),
    );
    let statistics_constant = norms
        .statistics
        .iter()
        .all(|(_, values)| values.iter().all(|v| v.to_bits() == values[0].to_bits()));
    report.check(
        "weight_statistics_conserved",
        statistics_constant,
        "Σφ(w) identical at every snapshot",
    );
    report.results = json!({
        "label": traj.label,
        "n_particles": c0.len(),
        "n_tracers": cfg.tracers.len(),
        "snapshots": traj.times.len(),
        "final_time": traj.final_time(),
        "trajectory_dir": "trajectory",
        "conserved_norm_report": norms,
        "center_of_mass_z": heights,
    });
    Ok(report)
}

struct StabilityRun {
    report: StabilityReport,
    n: (usize, usize),
}

fn stability_pair(
    cfg: &ScenarioConfig,
    d: f64,
    dt: f64,
    beta: Option<f64>,
) -> CliResult<StabilityRun> {
    let offset = Vec3::from(cfg.stability.direction).normalize() * d;
    let (c1, c2) = match cfg.density() {
        Some(f) => {
            let shifted = Translated {
                inner: f.clone(),
                offset,
            };
            let mut clouds = clouds_on_common_grid(&[&*f, &shifted], cfg.n_particles)?;
            let c2 = clouds.pop().expect("two clouds");
            (clouds.pop().expect("two clouds"), c2)
        }
        None => {
            let c = cfg.cloud()?;
            let t = c.translated(&offset);
            (c, t)
        }
    };
    let mut spec = cfg.integrator();
    spec.dt = dt;
    let velocity = cfg.velocity();
    let run1 = integrate(&c1, (0.0, cfg.t_final), &spec, &velocity, &[])?;
    let run2 = integrate(&c2, (0.0, cfg.t_final), &spec, &velocity, &[])?;
    let options = StabilityOptions {
        fit_window: cfg.stability.fit_window,
        w1_stride: cfg.stability.w1_stride,
        ltheta_norm: beta,
        ..Default::default()
    };
    let report = stability_verify(&run1, &run2, &cfg.stability.theta.function(), &options)?;
    Ok(StabilityRun {
        report,
        n: (c1.len(), c2.len()),
    })
}

pub fn stability(cfg: &ScenarioConfig, out: &Output) -> CliResult<Report> {
    let mut report = Report::new("stability");
    let theta = cfg.stability.theta.function();
    let beta = match cfg.density() {
        Some(f) => Some(ltheta_norm(&*f, &theta, &DEFAULT_P_GRID)?.value),
        None => None,
    };
    let d = cfg.stability.offset;
    let base = stability_pair(cfg, d, cfg.dt, beta)?;
    out.write_csv_text("stability.csv", &base.report.to_csv())?;
    let flags = base.report.pass_flags;
    report.check(
        "w1_below_mass_q",
        flags.w1_below_mass_q,
        "W1 ≤ mass·Q at every exact snapshot",
    );
    report.check(
        "equality_at_zero",
        flags.equality_at_zero,
        "W1 = mass·Q at t = 0",
    );
    report.check(
        "c_fit_finite",
        flags.c_fit_finite,
        format!("C_fit = {}", base.report.c_fit),
    );
    report.check(
        "envelope_dominates",
        flags.envelope_dominates,
        "Q ≤ Bihari envelope at every snapshot",
    );
    let sup_q = max_value(&base.report.q);
    let mut extra = serde_json::Map::new();
    if cfg.stability.compare_half_offset && d > 0.0 {
        let half = stability_pair(cfg, 0.5 * d, cfg.dt, beta)?;
        let sup_half = max_value(&half.report.q);
        report.check(
            "half_offset_reduces_sup_q",
            sup_half < sup_q,
            format!("sup Q = {sup_q} at d = {d}, {sup_half} at d = {}", 0.5 * d),
        );
        extra.insert(
            "half_offset".into(),
            json!({ "offset": 0.5 * d, "sup_q": sup_half, "c_fit": half.report.c_fit }),
        );
    }
    if cfg.stability.check_dt_refinement {
        let fine = stability_pair(cfg, d, 0.5 * cfg.dt, beta)?;
        let (a, b) = (base.report.c_fit, fine.report.c_fit);
        let change = if a == b {
            0.0
        } else {
            (a - b).abs() / a.abs().max(b.abs())
        };
        report.check(
            "c_fit_stable_under_dt_halving",
            change < 0.1,
            format!("C_fit = {a} at dt, {b} at dt/2"),
        );
        extra.insert(
            "dt_halved".into(),
            json!({ "dt": 0.5 * cfg.dt, "c_fit": b, "relative_change": change }),
        );
    }
    report.results = json!({
        "offset": d,
        "n_particles": [base.n.0, base.n.1],
        "ltheta_norm": beta,
        "sup_q": sup_q,
        "stability_report": base.report,
        "comparisons": extra,
    });
    Ok(report)
}

pub fn symmetry(cfg: &ScenarioConfig, out: &Output) -> CliResult<Report> {
    let mut report = Report::new("symmetry");
    let block = &cfg.symmetry;
    let c0 = cfg.cloud()?;
    let mut tracers: Vec<Vec3> = block
        .axis_tracers
        .iter()
        .map(|&z| Vec3::new(0.0, 0.0, z))
        .collect();
    tracers.extend(cfg.tracer_points());
    let traj = run(cfg, &c0, &tracers, out)?;

    let axis_error = axis_invariance_error(&traj);
    report.check(
        "axis_invariance",
        axis_error <= block.axis_tolerance,
        format!(
            "largest distance from the axis {axis_error:e} (tolerance {:e})",
            block.axis_tolerance
        ),
    );

    let probes: Vec<Vec3> = block
        .probe_heights
        .iter()
        .map(|&z| Vec3::new(0.0, 0.0, z))
        .collect();
    let last = traj.times.len() - 1;
    let mut rows = Vec::new();
    for (k, cloud) in traj.snapshots.iter().enumerate() {
        if k % block.probe_stride != 0 && k != last {
            continue;
        }
        let field = VelocityField::new(cloud.clone(), cfg.velocity());
        for (x, u) in probes.iter().zip(field.velocity_at(&probes)?) {
            rows.push(vec![traj.times[k], x[2], u[0].hypot(u[1]), u[2]]);
        }
    }
    out.write_csv(
        "axis_velocity.csv",
        &["t", "z", "horizontal_speed", "vertical_velocity"],
        &rows,
    )?;
    let upward = rows.iter().filter(|r| r[3] > 0.0).count();
    let top = rows.iter().map(|r| r[3]).fold(f64::NEG_INFINITY, f64::max);
    report.check(
        "on_axis_downward",
        upward == 0,
        format!(
            "{upward} of {} on-axis samples point upward; largest vertical velocity {top:e}",
            rows.len()
        ),
    );

    let confinement = cylinder_confinement_report(&traj, &block.deltas);
    let finite = confinement.iter().all(|r| r.max_distance.is_finite());
    let mut sorted = confinement.clone();
    sorted.sort_by(|a, b| a.delta.total_cmp(&b.delta));
    let monotone = sorted
        .windows(2)
        .all(|w| w[0].max_distance <= w[1].max_distance);
    let conf_rows: Vec<Vec<f64>> = confinement
        .iter()
        .map(|r| vec![r.delta, r.count as f64, r.max_distance])
        .collect();
    out.write_csv(
        "confinement.csv",
        &["delta", "count", "max_distance"],
        &conf_rows,
    )?;
    report.check(
        "confinement_table",
        finite && monotone,
        format!("finite: {finite}, monotone in the cylinder radius: {monotone}"),
    );

    let mut equivariance = Vec::new();
    for &theta in &block.thetas {
        let err = rotation_equivariance_error(
            &c0,
            theta,
            (0.0, cfg.t_final),
            &cfg.integrator(),
            &cfg.velocity(),
        )?;
        report.check(
            &format!("rotation_equivariance[{theta}]"),
            err <= block.equivariance_tolerance,
            format!("error {err:e}"),
        );
        equivariance.push(json!({ "theta": theta, "error": err }));
    }
    report.results = json!({
        "n_particles": c0.len(),
        "axis_invariance_error": axis_error,
        "largest_on_axis_vertical_velocity": top,
        "confinement": confinement,
        "rotation_equivariance": equivariance,
    });
    Ok(report)
}

fn random_point(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n * 10f64.powf(rng.gen_range(-3.0..3.0));
        }
    }
}

fn rel(a: &Mat3, b: &Mat3) -> f64 {
    (a - b).norm() / b.norm()
}

pub fn kernel_verify(cfg: &ScenarioConfig, out: &Output) -> CliResult<Report> {
    let mut report = Report::new("kernel-verify");
    let block = &cfg.kernel;
    let k = OseenKernel::singular();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut sym, mut even, mut homog, mut trace) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    for _ in 0..block.points {
        let x = random_point(&mut rng);
        let lambda = 10f64.powf(rng.gen_range(-1.0..1.0));
        let e = k.eval(&x)?;
        sym = sym.max(rel(&e.transpose(), &e));
        even = even.max(rel(&k.eval(&-x)?, &e));
        homog = homog.max(rel(&(k.eval(&(lambda * x))? * lambda), &e));
        let expected = 1.0 / (2.0 * PI * x.norm());
        trace = trace.max((e.trace() - expected).abs() / expected);
    }
    for (name, value) in [
        ("symmetry", sym),
        ("evenness", even),
        ("homogeneity", homog),
        ("trace", trace),
    ] {
        report.check(
            name,
            value <= 1e-12,
            format!("largest relative error {value:e}"),
        );
    }

    let mut grad_rows = Vec::new();
    let mut grad = 0.0_f64;
    for _ in 0..block.gradient_points {
        let x = random_point(&mut rng);
        let g = k.grad(&x)?;
        let h = 1e-5 * x.norm();
        let scale = g.iter().map(|m| m.norm()).fold(0.0, f64::max);
        let mut worst = 0.0_f64;
        for (d, gd) in g.iter().enumerate() {
            let mut step = Vec3::zeros();
            step[d] = h;
            let fd = (k.eval(&(x + step))? - k.eval(&(x - step))?) / (2.0 * h);
            worst = worst.max((fd - gd).norm() / scale);
        }
        grad = grad.max(worst);
        grad_rows.push(vec![x[0], x[1], x[2], worst]);
    }
    out.write_csv(
        "gradient.csv",
        &["x", "y", "z", "relative_error"],
        &grad_rows,
    )?;
    report.check(
        "gradient",
        grad <= 1e-6,
        format!("largest relative finite-difference gap {grad:e}"),
    );

    let mut split = 0.0_f64;
    let mut supports = true;
    for _ in 0..block.points.min(1000) {
        let x = random_point(&mut rng);
        let (e1, e2) = k.split(&x)?;
        let e = k.eval(&x)?;
        split = split.max(rel(&(e1 + e2), &e));
        let r = x.norm();
        supports &= (r < k.cutoff.outer || e1 == Mat3::zeros())
            && (r > k.cutoff.inner || e2 == Mat3::zeros());
    }
    report.check(
        "split",
        split <= 1e-14 && supports,
        format!("E1 + E2 vs E {split:e}; supports respected: {supports}"),
    );

    let quad = TranslationQuad::default();
    let dir = Vec3::new(0.6, 0.0, 0.8);
    let mut slope_rows = Vec::new();
    let mut slopes = Vec::new();
    for &p in &block.slope_p {
        let values = block
            .h_grid
            .iter()
            .map(|&h| Ok(translation_lp_norm(&(dir * h), p, &quad)?.value))
            .collect::<CliResult<Vec<f64>>>()?;
        for (h, v) in block.h_grid.iter().zip(&values) {
            slope_rows.push(vec![p, *h, *v]);
        }
        let slope = loglog_slope(&block.h_grid, &values);
        let expected = 3.0 / p - 1.0;
        report.check(
            &format!("translation_slope[{p}]"),
            ((slope - expected) / expected).abs() <= 0.1,
            format!("fitted slope {slope}, expected {expected}"),
        );
        slopes.push(json!({ "p": p, "slope": slope, "expected": expected }));
    }
    out.write_csv("translation_norms.csv", &["p", "h", "norm"], &slope_rows)?;

    let h = block.bounded_h;
    let scaled = block
        .bounded_p
        .iter()
        .map(|&p| {
            let v = translation_lp_norm(&(dir * h), p, &quad)?.value;
            Ok(json!({ "p": p, "norm": v, "scaled": v * (3.0 - p) * (2.0 * p - 3.0) / h.powf(3.0 / p - 1.0) }))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let values: Vec<f64> = scaled
        .iter()
        .map(|s| s["scaled"].as_f64().unwrap_or(f64::NAN))
        .collect();
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    report.check(
        "scaled_translation_bounded",
        values.is_empty() || (lo > 0.0 && hi.is_finite() && hi / lo <= 10.0),
        format!("(3−p)(2p−3)-scaled constants span [{lo}, {hi}]"),
    );
    report.results = json!({
        "identities": { "symmetry": sym, "evenness": even, "homogeneity": homog, "trace": trace },
        "gradient_max_relative_error": grad,
        "split_max_relative_error": split,
        "translation_slopes": slopes,
        "scaled_translation_constants": scaled,
    });
    Ok(report)
}

/// `ω_Θ''` for `Θ(p) = 1 − log(3 − p)` on `(0, 1)`.
fn omega_second_derivative(s: f64) -> f64 {
    let l = 1.0 - s.ln();
    -(l.ln() + 2.0 - 1.0 / l) / s
}

/// `Ω` for `s(1 − log s)` continued by `s` above 1, and its inverse.
fn log_lipschitz_omega(z: f64) -> f64 {
    if z <= 1.0 {
        -(1.0 - z.ln()).ln()
    } else {
        z.ln()
    }
}

fn log_lipschitz_omega_inverse(y: f64) -> f64 {
    if y <= 0.0 {
        (1.0 - (-y).exp()).exp()
    } else {
        y.exp()
    }
}

pub fn osgood_verify(cfg: &ScenarioConfig, out: &Output) -> CliResult<Report> {
    let mut report = Report::new("osgood-verify");
    let block = &cfg.osgood;
    let theta = GrowthFunction::LogBlowup;
    let omega_t = Modulus::from_growth(theta.clone());

    let below = omega_theta(1.0 - 1e-12, &theta)?;
    let at = omega_theta(1.0, &theta)?;
    report.check(
        "branch_continuity",
        (below - at).abs() <= 1e-9,
        format!("ω_Θ(1−) = {below}, ω_Θ(1) = {at}"),
    );

    let grid = logspace(block.concavity_lo, 1.0, block.concavity_points);
    let concavity = concavity_check(&omega_t, &grid)?;
    report.check(
        "concavity",
        concavity.worst <= 1e-8,
        format!(
            "largest second difference {:e} at s = {:e}",
            concavity.worst, concavity.at
        ),
    );
    let second: Vec<Vec<f64>> = grid
        .iter()
        .filter(|&&s| s < 1.0)
        .map(|&s| vec![s, omega_second_derivative(s)])
        .collect();
    let positive = second.iter().filter(|r| r[1] > 0.0).count();
    report.check(
        "second_derivative_sign",
        positive == 0,
        format!("{positive} grid points with ω'' > 0"),
    );
    out.write_csv(
        "second_derivative.csv",
        &["s", "omega_second_derivative"],
        &second,
    )?;

    let moduli = [
        (Modulus::lipschitz(), OsgoodVerdict::Divergent),
        (Modulus::power(0.5), OsgoodVerdict::Convergent),
        (Modulus::log_lipschitz(), OsgoodVerdict::Divergent),
        (omega_t.clone(), OsgoodVerdict::Divergent),
    ];
    let mut verdicts = Vec::new();
    for (m, expected) in &moduli {
        let r = osgood_integral(m, &block.eps_grid)?;
        report.check(
            &format!("verdict[{}]", m.name()),
            r.verdict == *expected,
            format!("{:?}, expected {:?}", r.verdict, expected),
        );
        verdicts.push(json!({ "modulus": m.name(), "report": r }));
    }

    let mut roundtrips = Vec::new();
    let mut worst_roundtrip = 0.0_f64;
    for (m, expected) in &moduli {
        if *expected != OsgoodVerdict::Divergent {
            continue;
        }
        for &z in &block.roundtrip_z {
            let back = big_omega_inverse(big_omega(z, m)?, m)?;
            worst_roundtrip = worst_roundtrip.max((back - z).abs() / z);
            roundtrips.push(json!({ "modulus": m.name(), "z": z, "roundtrip": back }));
        }
    }
    report.check(
        "omega_roundtrip",
        worst_roundtrip <= 1e-9,
        format!("largest relative roundtrip error {worst_roundtrip:e}"),
    );

    let mut closed = 0.0_f64;
    for &z in &block.roundtrip_z {
        closed = closed.max((big_omega(z, &Modulus::lipschitz())? - z.ln()).abs());
        closed =
            closed.max((big_omega(z, &Modulus::log_lipschitz())? - log_lipschitz_omega(z)).abs());
    }
    report.check(
        "omega_closed_forms",
        closed <= 1e-8,
        format!("largest deviation {closed:e}"),
    );

    let mut bihari = Vec::new();
    let mut worst_bihari = 0.0_f64;
    for &[g0, c, t] in &block.bihari_cases {
        let b = bihari_bound(g0, c, t, &Modulus::lipschitz())?;
        let gronwall = (g0 + b.eta) * (c * t).exp();
        let l = bihari_bound(g0, c, t, &Modulus::log_lipschitz())?;
        let exact = log_lipschitz_omega_inverse(log_lipschitz_omega(g0 + l.eta) + c * t);
        worst_bihari = worst_bihari
            .max((b.value - gronwall).abs() / gronwall)
            .max((l.value - exact).abs() / exact);
        bihari.push(json!({
            "g0": g0, "C": c, "t": t,
            "lipschitz": b.value, "gronwall": gronwall,
            "log_lipschitz": l.value, "closed_form": exact,
        }));
    }
    report.check(
        "bihari_closed_forms",
        worst_bihari <= 1e-8,
        format!("largest relative deviation {worst_bihari:e}"),
    );
    report.results = json!({
        "branch_continuity": { "below": below, "at": at },
        "concavity": concavity,
        "verdicts": verdicts,
        "roundtrips": roundtrips,
        "bihari": bihari,
    });
    Ok(report)
}

pub fn example_norms(cfg: &ScenarioConfig, out: &Output) -> CliResult<Report> {
    let mut report = Report::new("example-norms");
    let grid = &cfg.example.p_grid;
    let theta = GrowthFunction::LogBlowup;
    let norm = ltheta_norm(&ExampleDensity3d, &theta, grid)?;
    let running = norm.running_max();
    let spec = QuadSpec::default();
    let tensor = TensorDensity {
        rho2: cfg.example.rho2.profile(),
    };
    let mut rows = Vec::new();
    let mut table = Vec::new();
    for (k, s) in norm.samples.iter().enumerate() {
        let planar = lp_norm_planar_example(s.p, &spec)?;
        let tensor_norm = lp_norm(&tensor, s.p, &spec)?;
        rows.push(vec![
            s.p,
            s.lp,
            s.theta,
            s.ratio,
            running[k],
            planar,
            tensor_norm,
        ]);
        table.push(json!({
            "p": s.p, "lp": s.lp, "theta": s.theta, "ratio": s.ratio, "running_sup": running[k],
            "planar_lp": planar, "tensor_lp": tensor_norm,
        }));
    }
    out.write_csv(
        "example_norms.csv",
        &[
            "p",
            "lp",
            "theta",
            "ratio",
            "running_sup",
            "planar_lp",
            "tensor_lp",
        ],
        &rows,
    )?;
    let n = running.len();
    let tail = &running[n.saturating_sub(3)..];
    let hi = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
    report.check(
        "sup_ratio_stable",
        n >= 3 && hi / lo - 1.0 <= 0.2,
        format!("running sup over the last three grid points spans [{lo}, {hi}]"),
    );
    let growth = if n >= 3 {
        norm.samples[n - 1].lp / norm.samples[n - 3].lp
    } else {
        f64::NAN
    };
    report.check(
        "norm_growth",
        growth > 1.5,
        format!("‖ρ₀‖ at the last grid point over the third-to-last: {growth}"),
    );
    let concavity = concavity_check(&Modulus::from_growth(theta), &logspace(1e-10, 1.0, 400))?;
    report.check(
        "concavity",
        concavity.worst <= 1e-8,
        format!("largest second difference {:e}", concavity.worst),
    );
    report.results = json!({
        "ltheta_norm": norm.value,
        "argmax_p": norm.argmax,
        "table": table,
        "growth_ratio": growth,
    });
    Ok(report)
}

pub fn mollify_converge(cfg: &ScenarioConfig, out: &Output) -> CliResult<Report> {
    let mut report = Report::new("mollify-converge");
    let f = cfg.density().ok_or_else(|| CliError::Config {
        path: "initial_density".into(),
        message: "mollify-converge needs a continuous density".into(),
    })?;
    let deltas = &cfg.mollify.deltas;
    let mollified = deltas
        .iter()
        .map(|&d| mollify(f.clone(), d))
        .collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<&dyn DensityFunction> = mollified
        .iter()
        .map(|m| m as &dyn DensityFunction)
        .collect();
    let radius = f.support_radius() + deltas.first().copied().unwrap_or(0.0);
    let clouds = if refs.is_empty() {
        Vec::new()
    } else {
        clouds_on_grid(&refs, &cfg.mollify_grid(radius))?
    };
    let finals = clouds
        .iter()
        .map(|c| Ok(run(cfg, c, &[], out)?.last().clone()))
        .collect::<CliResult<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut table = Vec::new();
    for k in 1..finals.len() {
        let initial = w1_exact(&clouds[k - 1], &clouds[k])?.0;
        let last = w1_exact(&finals[k - 1], &finals[k])?.0;
        rows.push(vec![deltas[k - 1], deltas[k], initial, last]);
        table.push(json!({ "delta": deltas[k - 1], "next_delta": deltas[k], "w1_initial": initial, "w1_final": last }));
    }
    out.write_csv(
        "mollify.csv",
        &["delta", "next_delta", "w1_initial", "w1_final"],
        &rows,
    )?;
    let gaps: Vec<f64> = rows.iter().map(|r| r[3]).collect();
    let cauchy = gaps.windows(2).all(|w| w[1] < w[0]);
    report.check(
        "cauchy_trend",
        cauchy,
        format!("consecutive final-time gaps {gaps:?}"),
    );
    report.results = json!({
        "deltas": deltas,
        "n_particles": clouds.iter().map(|c| c.len()).collect::<Vec<_>>(),
        "table": table,
    });
    Ok(report)
}
