//! Scenario configuration: one JSON document per experiment.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use stokeslet::density::{
    annulus_cloud, cloud_from_density, ExampleDensity3d, GrowthFunction, IndicatorBall,
    ParticleCloud, Profile1d, Scheme, SharedDensity, Shells, SmoothBump, SphericalGrid,
    TensorDensity,
};
use stokeslet::flow::{Integrator, IntegratorSpec};
use stokeslet::kernel::OseenKernel;
use stokeslet::velocity::{TreeConfig, VelocityConfig};
use stokeslet::Vec3;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub initial_density: InitialDensity,
    pub n_particles: usize,
    /// Regularization length of the kernel used for time stepping.
    pub epsilon: f64,
    pub dt: f64,
    pub t_final: f64,
    pub scheme: Integrator,
    pub stride: usize,
    pub sampling: Sampling,
    pub summation: SummationConfig,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    /// Passive tracers advected with the particles.
    pub tracers: Vec<[f64; 3]>,
    pub stability: StabilityBlock,
    pub symmetry: SymmetryBlock,
    pub kernel: KernelBlock,
    pub osgood: OsgoodBlock,
    pub example: ExampleBlock,
    pub mollify: MollifyBlock,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            initial_density: InitialDensity::IndicatorBall {
                radius: 1.0,
                height: 1.0,
            },
            n_particles: 500,
            epsilon: 0.05,
            dt: 0.01,
            t_final: 1.0,
            scheme: Integrator::Rk4,
            stride: 1,
            sampling: Sampling::GridMidpoint {},
            summation: SummationConfig::Direct {},
            seed: 0,
            output_dir: None,
            tracers: Vec::new(),
            stability: StabilityBlock::default(),
            symmetry: SymmetryBlock::default(),
            kernel: KernelBlock::default(),
            osgood: OsgoodBlock::default(),
            example: ExampleBlock::default(),
            mollify: MollifyBlock::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialDensity {
    Example3d {},
    Tensor {
        rho2: Rho2,
    },
    IndicatorBall {
        radius: f64,
        #[serde(default = "one")]
        height: f64,
    },
    SmoothBump {
        radius: f64,
        #[serde(default = "one")]
        height: f64,
    },
    /// Discretely axisymmetric annulus, built directly as particles.
    Annulus {
        inner: f64,
        outer: f64,
        half_height: f64,
        n_radial: usize,
        n_vertical: usize,
        sectors: usize,
        #[serde(default = "one")]
        density: f64,
    },
    CloudFile {
        path: PathBuf,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Rho2 {
    Indicator { half_width: f64, height: f64 },
    Bump { half_width: f64, height: f64 },
}

impl Rho2 {
    pub fn profile(&self) -> Profile1d {
        match *self {
            Rho2::Indicator { half_width, height } => Profile1d::Indicator { half_width, height },
            Rho2::Bump { half_width, height } => Profile1d::Bump { half_width, height },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Sampling {
    GridMidpoint {},
    /// Stratified random sampling seeded with the scenario seed.
    Stratified {},
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SummationConfig {
    Direct {},
    Tree {
        #[serde(default = "default_opening")]
        opening_angle: f64,
        #[serde(default = "default_order")]
        order: usize,
        #[serde(default = "default_leaf")]
        leaf_size: usize,
    },
}

fn default_opening() -> f64 {
    TreeConfig::default().opening_angle
}

fn default_order() -> usize {
    TreeConfig::default().order
}

fn default_leaf() -> usize {
    TreeConfig::default().leaf_size
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Growth {
    #[default]
    LogBlowup,
    Constant(f64),
}

impl Growth {
    pub fn function(&self) -> GrowthFunction {
        match *self {
            Growth::LogBlowup => GrowthFunction::LogBlowup,
            Growth::Constant(c) => GrowthFunction::Constant(c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityBlock {
    /// Offset `d` of the translated copy.
    pub offset: f64,
    pub direction: [f64; 3],
    pub theta: Growth,
    /// Solve `W₁` exactly at every `w1_stride`-th snapshot.
    pub w1_stride: usize,
    pub fit_window: Option<f64>,
    /// Also run the pair with offset `d/2` and require a smaller `sup Q`.
    pub compare_half_offset: bool,
    /// Also run with `dt/2` and require the fitted constant to move by less than 10%.
    pub check_dt_refinement: bool,
}

impl Default for StabilityBlock {
    fn default() -> Self {
        StabilityBlock {
            offset: 0.05,
            direction: [1.0, 0.0, 0.0],
            theta: Growth::LogBlowup,
            w1_stride: 10,
            fit_window: None,
            compare_half_offset: true,
            check_dt_refinement: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SymmetryBlock {
    pub thetas: Vec<f64>,
    /// Heights of the tracers placed on the vertical axis.
    pub axis_tracers: Vec<f64>,
    pub deltas: Vec<f64>,
    /// Heights where the on-axis velocity is probed.
    pub probe_heights: Vec<f64>,
    /// Probe every `probe_stride`-th snapshot.
    pub probe_stride: usize,
    pub axis_tolerance: f64,
    pub equivariance_tolerance: f64,
}

impl Default for SymmetryBlock {
    fn default() -> Self {
        SymmetryBlock {
            thetas: vec![PI / 3.0, 1.0, 2.0 * PI],
            axis_tracers: vec![-1.5, -0.75, 0.0, 0.75, 1.5],
            deltas: vec![0.0, 0.1, 0.2, 0.4, 0.8, 1.6],
            probe_heights: (-12..=12).map(|k| 0.25 * k as f64).collect(),
            probe_stride: 10,
            axis_tolerance: 1e-8,
            equivariance_tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelBlock {
    pub points: usize,
    pub gradient_points: usize,
    pub slope_p: Vec<f64>,
    pub h_grid: Vec<f64>,
    pub bounded_p: Vec<f64>,
    pub bounded_h: f64,
}

impl Default for KernelBlock {
    fn default() -> Self {
        KernelBlock {
            points: 10_000,
            gradient_points: 1000,
            slope_p: vec![1.8, 2.0, 2.5],
            h_grid: vec![1e-3, 1e-2, 1e-1],
            bounded_p: vec![2.0, 2.5, 2.9],
            bounded_h: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OsgoodBlock {
    pub eps_grid: Vec<f64>,
    pub concavity_lo: f64,
    pub concavity_points: usize,
    pub roundtrip_z: Vec<f64>,
    /// `(g0, C, t)` triples for the closed-form Bihari comparisons.
    pub bihari_cases: Vec<[f64; 3]>,
}

impl Default for OsgoodBlock {
    fn default() -> Self {
        OsgoodBlock {
            eps_grid: stokeslet::osgood::DEFAULT_EPS_GRID.to_vec(),
            concavity_lo: 1e-10,
            concavity_points: 400,
            roundtrip_z: vec![0.9, 0.5, 0.01],
            bihari_cases: vec![[0.5, 1.0, 1.0], [0.01, 2.0, 0.5], [0.1, 0.5, 2.0]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExampleBlock {
    pub p_grid: Vec<f64>,
    /// Vertical factor of the tensor-product example.
    pub rho2: Rho2,
}

impl Default for ExampleBlock {
    fn default() -> Self {
        ExampleBlock {
            p_grid: vec![1.0, 2.0, 2.9, 2.99, 2.999],
            rho2: Rho2::Indicator {
                half_width: 1.0,
                height: 1.0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MollifyBlock {
    pub deltas: Vec<f64>,
    pub n_r: usize,
    pub n_mu: usize,
    pub n_phi: usize,
    pub shells: Shells,
}

impl Default for MollifyBlock {
    fn default() -> Self {
        MollifyBlock {
            deltas: vec![0.2, 0.1, 0.05, 0.025],
            n_r: 40,
            n_mu: 4,
            n_phi: 6,
            shells: Shells::Uniform,
        }
    }
}

fn invalid(path: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        path: path.to_string(),
        message: message.into(),
    }
}

fn positive(path: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(
            path,
            format!("must be positive and finite, got {v}"),
        ))
    }
}

fn non_negative(path: &str, v: f64) -> CliResult<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(
            path,
            format!("must be non-negative and finite, got {v}"),
        ))
    }
}

fn at_least_one(path: &str, v: usize) -> CliResult<()> {
    if v >= 1 {
        Ok(())
    } else {
        Err(invalid(path, "must be at least 1"))
    }
}

fn all_positive(path: &str, values: &[f64]) -> CliResult<()> {
    for (k, &v) in values.iter().enumerate() {
        positive(&format!("{path}[{k}]"), v)?;
    }
    Ok(())
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> CliResult<ScenarioConfig> {
        let cfg: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| invalid("$", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<ScenarioConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid("$", format!("{}: {e}", path.display())))?;
        ScenarioConfig::from_json(&text)
    }

    pub fn validate(&self) -> CliResult<()> {
        match &self.initial_density {
            InitialDensity::Example3d {} | InitialDensity::CloudFile { .. } => {}
            InitialDensity::Tensor { rho2 } => validate_rho2("initial_density.rho2", rho2)?,
            InitialDensity::IndicatorBall { radius, height }
            | InitialDensity::SmoothBump { radius, height } => {
                positive("initial_density.radius", *radius)?;
                non_negative("initial_density.height", *height)?;
            }
            InitialDensity::Annulus {
                inner,
                outer,
                half_height,
                n_radial,
                n_vertical,
                sectors,
                density,
            } => {
                non_negative("initial_density.inner", *inner)?;
                positive("initial_density.outer", *outer)?;
                if outer <= inner {
                    return Err(invalid("initial_density.outer", "must exceed inner"));
                }
                positive("initial_density.half_height", *half_height)?;
                at_least_one("initial_density.n_radial", *n_radial)?;
                at_least_one("initial_density.n_vertical", *n_vertical)?;
                at_least_one("initial_density.sectors", *sectors)?;
                non_negative("initial_density.density", *density)?;
            }
        }
        at_least_one("n_particles", self.n_particles)?;
        positive("epsilon", self.epsilon)?;
        positive("dt", self.dt)?;
        non_negative("t_final", self.t_final)?;
        at_least_one("stride", self.stride)?;
        if let SummationConfig::Tree {
            opening_angle,
            order,
            leaf_size,
        } = self.summation
        {
            positive("summation.opening_angle", opening_angle)?;
            if opening_angle >= 1.0 {
                return Err(invalid("summation.opening_angle", "must be below 1"));
            }
            at_least_one("summation.order", order)?;
            at_least_one("summation.leaf_size", leaf_size)?;
        }
        for (k, t) in self.tracers.iter().enumerate() {
            if !t.iter().all(|c| c.is_finite()) {
                return Err(invalid(
                    &format!("tracers[{k}]"),
                    "coordinates must be finite",
                ));
            }
        }

        let s = &self.stability;
        non_negative("stability.offset", s.offset)?;
        if !(s.direction.iter().all(|c| c.is_finite()) && Vec3::from(s.direction).norm() > 0.0) {
            return Err(invalid(
                "stability.direction",
                "must be a nonzero finite vector",
            ));
        }
        if let Growth::Constant(c) = s.theta {
            positive("stability.theta.constant", c)?;
        }
        at_least_one("stability.w1_stride", s.w1_stride)?;
        if let Some(w) = s.fit_window {
            positive("stability.fit_window", w)?;
        }

        let y = &self.symmetry;
        for (k, t) in y.thetas.iter().enumerate() {
            if !t.is_finite() {
                return Err(invalid(&format!("symmetry.thetas[{k}]"), "must be finite"));
            }
        }
        for (k, &d) in y.deltas.iter().enumerate() {
            non_negative(&format!("symmetry.deltas[{k}]"), d)?;
        }
        at_least_one("symmetry.probe_stride", y.probe_stride)?;
        positive("symmetry.axis_tolerance", y.axis_tolerance)?;
        positive("symmetry.equivariance_tolerance", y.equivariance_tolerance)?;

        let k = &self.kernel;
        for (i, &p) in k.slope_p.iter().chain(&k.bounded_p).enumerate() {
            if !(p > 1.5 && p < 3.0) {
                return Err(invalid(
                    &format!("kernel.p[{i}]"),
                    format!("{p} outside (3/2, 3)"),
                ));
            }
        }
        all_positive("kernel.h_grid", &k.h_grid)?;
        if k.h_grid.len() < 2 {
            return Err(invalid(
                "kernel.h_grid",
                "needs at least two values for a slope",
            ));
        }
        positive("kernel.bounded_h", k.bounded_h)?;

        let o = &self.osgood;
        all_positive("osgood.eps_grid", &o.eps_grid)?;
        if o.eps_grid.iter().any(|&e| e >= 1.0) {
            return Err(invalid("osgood.eps_grid", "values must lie in (0, 1)"));
        }
        positive("osgood.concavity_lo", o.concavity_lo)?;
        if o.concavity_lo >= 1.0 {
            return Err(invalid("osgood.concavity_lo", "must be below 1"));
        }
        if o.concavity_points < 3 {
            return Err(invalid("osgood.concavity_points", "must be at least 3"));
        }
        all_positive("osgood.roundtrip_z", &o.roundtrip_z)?;
        for (i, case) in o.bihari_cases.iter().enumerate() {
            non_negative(&format!("osgood.bihari_cases[{i}][0]"), case[0])?;
            positive(&format!("osgood.bihari_cases[{i}][1]"), case[1])?;
            non_negative(&format!("osgood.bihari_cases[{i}][2]"), case[2])?;
        }

        if self.example.p_grid.len() < 3 {
            return Err(invalid("example.p_grid", "needs at least three exponents"));
        }
        if self.example.p_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("example.p_grid", "must be strictly increasing"));
        }
        for (i, &p) in self.example.p_grid.iter().enumerate() {
            if !(1.0..3.0).contains(&p) {
                return Err(invalid(
                    &format!("example.p_grid[{i}]"),
                    format!("{p} outside [1, 3)"),
                ));
            }
        }
        validate_rho2("example.rho2", &self.example.rho2)?;

        let m = &self.mollify;
        all_positive("mollify.deltas", &m.deltas)?;
        if m.deltas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(invalid("mollify.deltas", "must be strictly decreasing"));
        }
        at_least_one("mollify.n_r", m.n_r)?;
        at_least_one("mollify.n_mu", m.n_mu)?;
        at_least_one("mollify.n_phi", m.n_phi)?;
        Ok(())
    }

    /// SHA-256 of the canonical serialization, as lowercase hex.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn velocity(&self) -> VelocityConfig {
        let kernel = OseenKernel::regularized(self.epsilon);
        match self.summation {
            SummationConfig::Direct {} => VelocityConfig::direct(kernel),
            SummationConfig::Tree {
                opening_angle,
                order,
                leaf_size,
            } => VelocityConfig::tree(
                kernel,
                TreeConfig {
                    opening_angle,
                    order,
                    leaf_size,
                },
            ),
        }
    }

    pub fn integrator(&self) -> IntegratorSpec {
        IntegratorSpec {
            scheme: self.scheme,
            dt: self.dt,
            stride: self.stride,
            safety_radius: None,
        }
    }

    pub fn tracer_points(&self) -> Vec<Vec3> {
        self.tracers.iter().map(|t| Vec3::from(*t)).collect()
    }

    /// The initial datum as a continuous density, when it is one.
    pub fn density(&self) -> Option<SharedDensity> {
        match self.initial_density {
            InitialDensity::Example3d {} => Some(Arc::new(ExampleDensity3d)),
            InitialDensity::Tensor { rho2 } => Some(Arc::new(TensorDensity {
                rho2: rho2.profile(),
            })),
            InitialDensity::IndicatorBall { radius, height } => {
                Some(Arc::new(IndicatorBall { radius, height }))
            }
            InitialDensity::SmoothBump { radius, height } => {
                Some(Arc::new(SmoothBump { radius, height }))
            }
            InitialDensity::Annulus { .. } | InitialDensity::CloudFile { .. } => None,
        }
    }

    /// Builds the initial particle cloud.
    pub fn cloud(&self) -> CliResult<ParticleCloud> {
        match &self.initial_density {
            InitialDensity::Annulus {
                inner,
                outer,
                half_height,
                n_radial,
                n_vertical,
                sectors,
                density,
            } => Ok(annulus_cloud(
                *inner,
                *outer,
                *half_height,
                *n_radial,
                *n_vertical,
                *sectors,
                *density,
            )),
            InitialDensity::CloudFile { path } => Ok(ParticleCloud::load(path)?),
            _ => {
                let f = self.density().expect("continuous density");
                let scheme = match self.sampling {
                    Sampling::GridMidpoint {} => Scheme::GridMidpoint,
                    Sampling::Stratified {} => Scheme::StratifiedRandom { seed: self.seed },
                };
                Ok(cloud_from_density(&*f, self.n_particles, scheme)?)
            }
        }
    }

    pub fn mollify_grid(&self, radius: f64) -> SphericalGrid {
        SphericalGrid {
            radius,
            n_r: self.mollify.n_r,
            n_mu: self.mollify.n_mu,
            n_phi: self.mollify.n_phi,
            shells: self.mollify.shells,
        }
    }
}

fn validate_rho2(path: &str, rho2: &Rho2) -> CliResult<()> {
    match *rho2 {
        Rho2::Indicator { half_width, height } | Rho2::Bump { half_width, height } => {
            positive(&format!("{path}.half_width"), half_width)?;
            non_negative(&format!("{path}.height"), height)
        }
    }
}
