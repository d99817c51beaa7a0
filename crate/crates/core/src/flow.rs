//! Self-consistent Lagrangian time stepping and the flow-property checks.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::density::{cylinder_distance, first_moment, rotate_cloud, rotate_point, ParticleCloud};
use crate::error::{Error, Result};
use crate::velocity::{induced_velocity, VelocityConfig};
use crate::Vec3;

/// Explicit Runge–Kutta scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    #[default]
    Rk4,
    Heun,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSpec {
    pub scheme: Integrator,
    pub dt: f64,
    /// Keep every `stride`-th step; the final state is always kept.
    pub stride: usize,
    /// Largest allowed `|x|`. `None` means 1000 times the initial extent.
    pub safety_radius: Option<f64>,
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        IntegratorSpec {
            scheme: Integrator::Rk4,
            dt: 1e-2,
            stride: 1,
            safety_radius: None,
        }
    }
}

impl IntegratorSpec {
    pub fn rk4(dt: f64) -> Self {
        IntegratorSpec {
            dt,
            ..Default::default()
        }
    }

    pub fn heun(dt: f64) -> Self {
        IntegratorSpec {
            scheme: Integrator::Heun,
            dt,
            ..Default::default()
        }
    }
}

/// Recorded particle and tracer positions over time.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<ParticleCloud>,
    /// Tracer positions per recorded time, index-aligned with `times`.
    pub tracers: Vec<Vec<Vec3>>,
    pub spec: IntegratorSpec,
    pub epsilon: f64,
    pub seed: Option<u64>,
    pub label: String,
    /// Free-form line stamped into every file written by [`write_dir`](Self::write_dir).
    pub provenance: Option<String>,
}

impl FlowTrajectory {
    pub fn initial(&self) -> &ParticleCloud {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &ParticleCloud {
        self.snapshots
            .last()
            .expect("trajectory has at least one snapshot")
    }

    pub fn last_tracers(&self) -> &[Vec3] {
        self.tracers.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Writes `snapshot_NNNNN.csv`, `tracers_NNNNN.csv` and `manifest.json`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut snapshots = Vec::new();
        let mut tracers = Vec::new();
        for (k, cloud) in self.snapshots.iter().enumerate() {
            let name = format!("snapshot_{k:05}.csv");
            cloud.save_with_comment(dir.join(&name), self.provenance.as_deref())?;
            snapshots.push(name);
            if !self.tracers[k].is_empty() {
                let name = format!("tracers_{k:05}.csv");
                let n = self.tracers[k].len();
                ParticleCloud::new(self.tracers[k].clone(), vec![0.0; n], "tracers")?
                    .save_with_comment(dir.join(&name), self.provenance.as_deref())?;
                tracers.push(name);
            }
        }
        let manifest = TrajectoryManifest {
            times: self.times.clone(),
            dt: self.spec.dt,
            scheme: self.spec.scheme,
            stride: self.spec.stride,
            epsilon: self.epsilon,
            seed: self.seed,
            label: self.label.clone(),
            provenance: self.provenance.clone(),
            snapshots,
            tracers,
        };
        std::fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(&manifest)?,
        )?;
        Ok(())
    }

    pub fn read_dir(dir: impl AsRef<Path>) -> Result<FlowTrajectory> {
        let dir = dir.as_ref();
        let manifest: TrajectoryManifest =
            serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
        if manifest.snapshots.len() != manifest.times.len()
            || !(manifest.tracers.is_empty() || manifest.tracers.len() == manifest.times.len())
        {
            return Err(Error::TimeGridMismatch);
        }
        let mut snapshots = Vec::new();
        for name in &manifest.snapshots {
            let mut c = ParticleCloud::load(dir.join(name))?;
            c.label = manifest.label.clone();
            snapshots.push(c);
        }
        let tracers = if manifest.tracers.is_empty() {
            vec![Vec::new(); manifest.times.len()]
        } else {
            manifest
                .tracers
                .iter()
                .map(|name| ParticleCloud::load(dir.join(name)).map(|c| c.positions().to_vec()))
                .collect::<Result<_>>()?
        };
        Ok(FlowTrajectory {
            times: manifest.times,
            snapshots,
            tracers,
            spec: IntegratorSpec {
                scheme: manifest.scheme,
                dt: manifest.dt,
                stride: manifest.stride,
                safety_radius: None,
            },
            epsilon: manifest.epsilon,
            seed: manifest.seed,
            label: manifest.label,
            provenance: manifest.provenance,
        })
    }
}

/// On-disk description of a trajectory directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryManifest {
    pub times: Vec<f64>,
    pub dt: f64,
    pub scheme: Integrator,
    pub stride: usize,
    pub epsilon: f64,
    pub seed: Option<u64>,
    pub label: String,
    #[serde(default)]
    pub provenance: Option<String>,
    pub snapshots: Vec<String>,
    pub tracers: Vec<String>,
}

struct State {
    particles: Vec<Vec3>,
    tracers: Vec<Vec3>,
}

fn velocities(state: &State, weights: &[f64], velocity: &VelocityConfig) -> Result<Vec<Vec3>> {
    let mut targets = Vec::with_capacity(state.particles.len() + state.tracers.len());
    targets.extend_from_slice(&state.particles);
    targets.extend_from_slice(&state.tracers);
    induced_velocity(
        &state.particles,
        weights,
        &targets,
        velocity,
        state.particles.len(),
    )
}

fn shifted(state: &State, k: &[Vec3], h: f64) -> State {
    let n = state.particles.len();
    State {
        particles: state
            .particles
            .iter()
            .zip(&k[..n])
            .map(|(x, v)| x + v * h)
            .collect(),
        tracers: state
            .tracers
            .iter()
            .zip(&k[n..])
            .map(|(x, v)| x + v * h)
            .collect(),
    }
}

fn step(
    state: &State,
    weights: &[f64],
    velocity: &VelocityConfig,
    scheme: Integrator,
    h: f64,
) -> Result<State> {
    let combined: Vec<Vec3> = match scheme {
        Integrator::Rk4 => {
            let k1 = velocities(state, weights, velocity)?;
            let k2 = velocities(&shifted(state, &k1, 0.5 * h), weights, velocity)?;
            let k3 = velocities(&shifted(state, &k2, 0.5 * h), weights, velocity)?;
            let k4 = velocities(&shifted(state, &k3, h), weights, velocity)?;
            (0..k1.len())
                .map(|i| (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) / 6.0)
                .collect()
        }
        Integrator::Heun => {
            let k1 = velocities(state, weights, velocity)?;
            let k2 = velocities(&shifted(state, &k1, h), weights, velocity)?;
            (0..k1.len()).map(|i| (k1[i] + k2[i]) * 0.5).collect()
        }
    };
    Ok(shifted(state, &combined, h))
}

/// Advances the cloud and the passive tracers from `t_span.0` to `t_span.1`.
///
/// The velocity at every stage is induced by the current particle positions.
/// Steps have length `dt` except a shorter final one.
pub fn integrate(
    c0: &ParticleCloud,
    t_span: (f64, f64),
    spec: &IntegratorSpec,
    velocity: &VelocityConfig,
    tracers: &[Vec3],
) -> Result<FlowTrajectory> {
    let (s, t) = t_span;
    if !(spec.dt > 0.0 && spec.dt.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "time step {} must be positive",
            spec.dt
        )));
    }
    if !(t >= s) {
        return Err(Error::InvalidArgument(format!(
            "time span ({s}, {t}) is reversed"
        )));
    }
    if !velocity.kernel.is_regularized() {
        return Err(Error::InvalidArgument(
            "time integration needs a regularized kernel".into(),
        ));
    }
    if spec.stride == 0 {
        return Err(Error::InvalidArgument(
            "snapshot stride must be at least 1".into(),
        ));
    }
    let extent = c0
        .bounding_radius()
        .max(tracers.iter().map(|x| x.norm()).fold(0.0, f64::max))
        .max(1.0);
    let safety = spec.safety_radius.unwrap_or(1e3 * extent);
    let weights = c0.weights().to_vec();
    let steps = ((t - s) / spec.dt - 1e-9).ceil().max(0.0) as usize;
    let mut state = State {
        particles: c0.positions().to_vec(),
        tracers: tracers.to_vec(),
    };
    let mut traj = FlowTrajectory {
        times: vec![s],
        snapshots: vec![c0.clone()],
        tracers: vec![tracers.to_vec()],
        spec: *spec,
        epsilon: velocity.kernel.epsilon,
        seed: None,
        label: c0.label.clone(),
        provenance: None,
    };
    let mut now = s;
    for k in 0..steps {
        let next = if k + 1 == steps {
            t
        } else {
            s + (k + 1) as f64 * spec.dt
        };
        state = step(&state, &weights, velocity, spec.scheme, next - now)?;
        now = next;
        for (i, x) in state.particles.iter().chain(&state.tracers).enumerate() {
            if !x.iter().all(|c| c.is_finite()) {
                return Err(Error::NonFinite { time: now });
            }
            let r = x.norm();
            if r > safety {
                return Err(Error::BlowUp {
                    index: i,
                    radius: r,
                    time: now,
                });
            }
        }
        if (k + 1) % spec.stride == 0 || k + 1 == steps {
            traj.times.push(now);
            traj.snapshots
                .push(c0.with_positions(state.particles.clone())?);
            traj.tracers.push(state.tracers.clone());
        }
    }
    Ok(traj)
}

fn max_distance(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// `max_i |X(t, τ, X(τ, s, xᵢ)) − X(t, s, xᵢ)|` from a restarted and a straight run.
pub fn semigroup_error(
    c0: &ParticleCloud,
    s: f64,
    tau: f64,
    t: f64,
    spec: &IntegratorSpec,
    velocity: &VelocityConfig,
) -> Result<f64> {
    if !(s <= tau && tau <= t) {
        return Err(Error::InvalidArgument(format!(
            "need s ≤ τ ≤ t, got {s}, {tau}, {t}"
        )));
    }
    let straight = integrate(c0, (s, t), spec, velocity, &[])?;
    let first = integrate(c0, (s, tau), spec, velocity, &[])?;
    let second = integrate(first.last(), (tau, t), spec, velocity, &[])?;
    Ok(max_distance(
        second.last().positions(),
        straight.last().positions(),
    ))
}

/// Four tracer points spanning a right tetrahedron with legs `h` at `corner`.
pub fn tetrahedron(corner: &Vec3, h: f64) -> [Vec3; 4] {
    [
        *corner,
        corner + Vec3::new(h, 0.0, 0.0),
        corner + Vec3::new(0.0, h, 0.0),
        corner + Vec3::new(0.0, 0.0, h),
    ]
}

fn signed_volume(p: &[Vec3], t: &[usize; 4]) -> f64 {
    let a = p[t[1]] - p[t[0]];
    let b = p[t[2]] - p[t[0]];
    let c = p[t[3]] - p[t[0]];
    a.dot(&b.cross(&c)) / 6.0
}

/// `max |vol(t)/vol(0) − 1|` over tetrahedra given as tracer index quadruples.
pub fn volume_drift(traj: &FlowTrajectory, tetrahedra: &[[usize; 4]]) -> Result<f64> {
    let first = &traj.tracers[0];
    let mut worst = 0.0_f64;
    for (n, tet) in tetrahedra.iter().enumerate() {
        if tet.iter().any(|&i| i >= first.len()) {
            return Err(Error::InvalidArgument(format!(
                "tetrahedron {n} refers to a missing tracer"
            )));
        }
        let v0 = signed_volume(first, tet);
        if v0.abs() < 1e-14 {
            return Err(Error::DegenerateTetrahedron {
                index: n,
                volume: v0,
            });
        }
        for frame in &traj.tracers {
            worst = worst.max((signed_volume(frame, tet) / v0 - 1.0).abs());
        }
    }
    Ok(worst)
}

/// Largest distance from the vertical axis reached by tracers that start on it.
pub fn axis_invariance_error(traj: &FlowTrajectory) -> f64 {
    let on_axis: Vec<usize> = (0..traj.tracers[0].len())
        .filter(|&i| cylinder_distance(&traj.tracers[0][i]) == 0.0)
        .collect();
    traj.tracers
        .iter()
        .flat_map(|frame| on_axis.iter().map(move |&i| cylinder_distance(&frame[i])))
        .fold(0.0, f64::max)
}

/// Distance between "rotate then integrate" and "integrate then rotate".
pub fn rotation_equivariance_error(
    c0: &ParticleCloud,
    theta: f64,
    t_span: (f64, f64),
    spec: &IntegratorSpec,
    velocity: &VelocityConfig,
) -> Result<f64> {
    let a = integrate(&rotate_cloud(c0, theta), t_span, spec, velocity, &[])?;
    let b = integrate(c0, t_span, spec, velocity, &[])?;
    let b_rot: Vec<Vec3> = b
        .last()
        .positions()
        .iter()
        .map(|x| rotate_point(x, theta))
        .collect();
    Ok(max_distance(a.last().positions(), &b_rot))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConfinementRow {
    pub delta: f64,
    /// Particles and tracers that start in the cylinder.
    pub count: usize,
    /// Their largest distance from the axis over the whole run; 0 for empty rows.
    pub max_distance: f64,
}

/// For each radius `δ`, the furthest that anything starting in `C_δ` strays
/// from the axis. Both particles and tracers are followed.
pub fn cylinder_confinement_report(
    traj: &FlowTrajectory,
    delta_grid: &[f64],
) -> Vec<ConfinementRow> {
    let frames: Vec<Vec<Vec3>> = traj
        .snapshots
        .iter()
        .zip(&traj.tracers)
        .map(|(c, t)| c.positions().iter().chain(t).copied().collect())
        .collect();
    let start = &frames[0];
    let escape: Vec<f64> = (0..start.len())
        .map(|i| {
            frames
                .iter()
                .map(|f| cylinder_distance(&f[i]))
                .fold(0.0, f64::max)
        })
        .collect();
    delta_grid
        .iter()
        .map(|&delta| {
            let members: Vec<usize> = (0..start.len())
                .filter(|&i| cylinder_distance(&start[i]) <= delta)
                .collect();
            ConfinementRow {
                delta,
                count: members.len(),
                max_distance: members.iter().map(|&i| escape[i]).fold(0.0, f64::max),
            }
        })
        .collect()
}

/// Weight statistic `Σ φ(wᵢ)` tracked over time.
pub struct WeightStatistic<'a> {
    pub name: &'a str,
    pub phi: &'a dyn Fn(f64) -> f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormReport {
    pub times: Vec<f64>,
    pub mass: Vec<f64>,
    pub min_weight: Vec<f64>,
    pub first_moment: Vec<f64>,
    pub statistics: Vec<(String, Vec<f64>)>,
    /// Whether the sorted weight bit patterns agree with the initial ones at every time.
    pub weights_identical: bool,
}

fn sorted_bits(c: &ParticleCloud) -> Vec<u64> {
    let mut b: Vec<u64> = c.weights().iter().map(|w| w.to_bits()).collect();
    b.sort_unstable();
    b
}

/// Mass, weight statistics and first moment over time.
pub fn conserved_norm_report(traj: &FlowTrajectory, stats: &[WeightStatistic<'_>]) -> NormReport {
    let reference = sorted_bits(traj.initial());
    NormReport {
        times: traj.times.clone(),
        mass: traj
            .snapshots
            .iter()
            .map(ParticleCloud::total_mass)
            .collect(),
        min_weight: traj
            .snapshots
            .iter()
            .map(|c| c.weights().iter().copied().fold(f64::INFINITY, f64::min))
            .collect(),
        first_moment: traj.snapshots.iter().map(first_moment).collect(),
        statistics: stats
            .iter()
            .map(|s| {
                let values = traj
                    .snapshots
                    .iter()
                    .map(|c| c.weights().iter().map(|&w| (s.phi)(w)).sum())
                    .collect();
                (s.name.to_string(), values)
            })
            .collect(),
        weights_identical: traj.snapshots.iter().all(|c| sorted_bits(c) == reference),
    }
}

/// Vertical coordinate of the center of mass at each recorded time.
pub fn center_of_mass_heights(traj: &FlowTrajectory) -> Result<Vec<f64>> {
    traj.snapshots
        .iter()
        .map(|c| c.center_of_mass().map(|x| x[2]))
        .collect()
}
