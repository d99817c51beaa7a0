use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::functions::DensityFunction;
use crate::error::{Error, Result};
use crate::Vec3;

/// Weighted point masses carrying a discretized density.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    positions: Vec<Vec3>,
    weights: Vec<f64>,
    pub label: String,
}

#[derive(Serialize, Deserialize)]
struct Row {
    x: f64,
    y: f64,
    z: f64,
    w: f64,
}

impl ParticleCloud {
    pub fn new(positions: Vec<Vec3>, weights: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if positions.len() != weights.len() {
            return Err(Error::InvalidArgument(format!(
                "{} positions but {} weights",
                positions.len(),
                weights.len()
            )));
        }
        if let Some(i) = weights.iter().position(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "weight {i} is {}",
                weights[i]
            )));
        }
        if let Some(i) = positions
            .iter()
            .position(|x| !x.iter().all(|c| c.is_finite()))
        {
            return Err(Error::InvalidArgument(format!(
                "position {i} is not finite"
            )));
        }
        Ok(ParticleCloud {
            positions,
            weights,
            label: label.into(),
        })
    }

    pub fn empty(label: impl Into<String>) -> Self {
        ParticleCloud {
            positions: Vec::new(),
            weights: Vec::new(),
            label: label.into(),
        }
    }

    pub fn single(x: Vec3, w: f64) -> Result<Self> {
        Self::new(vec![x], vec![w], "single")
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Same weights, positions moved by `f`. Used for advection and rigid motions.
    pub fn map_positions(&self, f: impl Fn(&Vec3) -> Vec3) -> ParticleCloud {
        ParticleCloud {
            positions: self.positions.iter().map(f).collect(),
            weights: self.weights.clone(),
            label: self.label.clone(),
        }
    }

    /// Replaces positions, keeping weights. Lengths must agree.
    pub fn with_positions(&self, positions: Vec<Vec3>) -> Result<ParticleCloud> {
        ParticleCloud::new(positions, self.weights.clone(), self.label.clone())
    }

    pub fn translated(&self, h: &Vec3) -> ParticleCloud {
        self.map_positions(|x| x + h)
    }

    pub fn scaled_weights(&self, factor: f64) -> Result<ParticleCloud> {
        ParticleCloud::new(
            self.positions.clone(),
            self.weights.iter().map(|w| w * factor).collect(),
            self.label.clone(),
        )
    }

    /// Concatenation of two clouds; masses add.
    pub fn union(&self, other: &ParticleCloud) -> ParticleCloud {
        let mut positions = self.positions.clone();
        positions.extend_from_slice(&other.positions);
        let mut weights = self.weights.clone();
        weights.extend_from_slice(&other.weights);
        ParticleCloud {
            positions,
            weights,
            label: format!("{}+{}", self.label, other.label),
        }
    }

    pub fn bounding_radius(&self) -> f64 {
        self.positions.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    pub fn center_of_mass(&self) -> Result<Vec3> {
        let m = self.total_mass();
        if m <= 0.0 {
            return Err(Error::ZeroMass);
        }
        let s = self
            .positions
            .iter()
            .zip(&self.weights)
            .fold(Vec3::zeros(), |acc, (x, w)| acc + x * *w);
        Ok(s / m)
    }

    /// Writes the `x,y,z,w` snapshot. Values are printed with 17 significant
    /// digits, which round-trips every finite double.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        self.write_csv_with_comment(writer, None)
    }

    /// Like [`write_csv`](Self::write_csv), preceded by a `# comment` line.
    pub fn write_csv_with_comment<W: Write>(
        &self,
        mut writer: W,
        comment: Option<&str>,
    ) -> Result<()> {
        if let Some(c) = comment {
            writeln!(writer, "# {}", c.replace('\n', " "))?;
        }
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["x", "y", "z", "w"])?;
        for (x, w) in self.positions.iter().zip(&self.weights) {
            out.write_record([
                format!("{:.16e}", x[0]),
                format!("{:.16e}", x[1]),
                format!("{:.16e}", x[2]),
                format!("{:.16e}", w),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads an `x,y,z,w` file. Lines starting with `#` are skipped.
    pub fn read_csv<R: Read>(reader: R, label: impl Into<String>) -> Result<ParticleCloud> {
        let mut input = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(reader);
        let headers = input.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["x", "y", "z", "w"] {
            return Err(Error::Parse(format!(
                "expected header x,y,z,w, found {:?}",
                headers
            )));
        }
        let mut positions = Vec::new();
        let mut weights = Vec::new();
        for row in input.deserialize() {
            let row: Row = row?;
            positions.push(Vec3::new(row.x, row.y, row.z));
            weights.push(row.w);
        }
        ParticleCloud::new(positions, weights, label)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.save_with_comment(path, None)
    }

    pub fn save_with_comment(&self, path: impl AsRef<Path>, comment: Option<&str>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv_with_comment(std::io::BufWriter::new(file), comment)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ParticleCloud> {
        let path = path.as_ref();
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        ParticleCloud::read_csv(std::fs::File::open(path)?, label)
    }
}

/// `Σ wᵢ |xᵢ|`.
pub fn first_moment(c: &ParticleCloud) -> f64 {
    c.positions
        .iter()
        .zip(&c.weights)
        .map(|(x, w)| w * x.norm())
        .sum()
}

/// How a density is turned into particles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Scheme {
    /// One particle per cell of an equal-volume spherical grid, weight `f(center) · volume`.
    GridMidpoint,
    /// Density-proportional stratified sampling with equal weights.
    StratifiedRandom { seed: u64 },
}

/// Radial spacing of the shells of a [`SphericalGrid`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shells {
    /// Uniform in `r³`, so every cell has the same volume.
    #[default]
    EqualVolume,
    /// Uniform in `r`, which resolves densities concentrated at the origin.
    Uniform,
}

/// Cells of the ball of radius `radius`, uniform in `cos θ` and `φ` with
/// radial shells spaced according to `shells`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalGrid {
    pub radius: f64,
    pub n_r: usize,
    pub n_mu: usize,
    pub n_phi: usize,
    pub shells: Shells,
}

impl SphericalGrid {
    /// Equal-volume grid with about `n_target` cells and aspect `n_r = n_mu = n_phi / 2`.
    pub fn with_target(radius: f64, n_target: usize) -> SphericalGrid {
        let m = ((n_target as f64 / 2.0).cbrt().round() as usize).max(1);
        SphericalGrid {
            radius,
            n_r: m,
            n_mu: m,
            n_phi: 2 * m,
            shells: Shells::EqualVolume,
        }
    }

    pub fn cells(&self) -> usize {
        self.n_r * self.n_mu * self.n_phi
    }

    /// `r³` at the inner edge of shell `i`, in units of `radius³`.
    fn edge_cubed(&self, i: usize) -> f64 {
        let s = i as f64 / self.n_r as f64;
        match self.shells {
            Shells::EqualVolume => s,
            Shells::Uniform => s * s * s,
        }
    }

    /// Volume of cell `index`.
    pub fn cell_volume(&self, index: usize) -> f64 {
        let (i, _, _) = self.unravel(index);
        let shell = self.edge_cubed(i + 1) - self.edge_cubed(i);
        4.0 * PI * self.radius.powi(3) / 3.0 * shell / (self.n_mu * self.n_phi) as f64
    }

    /// Maps unit-cube coordinates inside cell `(i, j, k)` to a point, uniformly in volume.
    fn point(&self, i: usize, j: usize, k: usize, u: [f64; 3]) -> Vec3 {
        let (a, b) = (self.edge_cubed(i), self.edge_cubed(i + 1));
        let r = self.radius * (a + u[0] * (b - a)).cbrt();
        let mu = -1.0 + 2.0 * (j as f64 + u[1]) / self.n_mu as f64;
        let phi = 2.0 * PI * (k as f64 + u[2]) / self.n_phi as f64;
        let s = (1.0 - mu * mu).max(0.0).sqrt();
        Vec3::new(r * s * phi.cos(), r * s * phi.sin(), r * mu)
    }

    fn center(&self, index: usize) -> Vec3 {
        let (i, j, k) = self.unravel(index);
        self.point(i, j, k, [0.5; 3])
    }

    fn unravel(&self, index: usize) -> (usize, usize, usize) {
        let k = index % self.n_phi;
        let j = (index / self.n_phi) % self.n_mu;
        let i = index / (self.n_phi * self.n_mu);
        (i, j, k)
    }
}

/// Midpoint discretization of `f` on a given grid. Empty cells are dropped.
pub fn cloud_on_grid(f: &dyn DensityFunction, grid: &SphericalGrid) -> Result<ParticleCloud> {
    let mut positions = Vec::new();
    let mut weights = Vec::new();
    for idx in 0..grid.cells() {
        let x = grid.center(idx);
        let v = f.eval(&x);
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!(
                "density value {v} at {:?}",
                x.as_slice()
            )));
        }
        if v > 0.0 {
            positions.push(x);
            weights.push(v * grid.cell_volume(idx));
        }
    }
    let cloud = ParticleCloud::new(positions, weights, f.label())?;
    if !(cloud.total_mass() > f64::MIN_POSITIVE) {
        return Err(Error::ZeroMass);
    }
    Ok(cloud)
}

/// Discretizes `f` into about `n_target` particles.
pub fn cloud_from_density(
    f: &dyn DensityFunction,
    n_target: usize,
    scheme: Scheme,
) -> Result<ParticleCloud> {
    if n_target == 0 {
        return Err(Error::InvalidArgument("n_target must be at least 1".into()));
    }
    let radius = f.support_radius();
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidArgument(format!("support radius {radius}")));
    }
    match scheme {
        Scheme::GridMidpoint => cloud_on_grid(f, &SphericalGrid::with_target(radius, n_target)),
        Scheme::StratifiedRandom { seed } => stratified(f, radius, n_target, seed),
    }
}

/// Discretizes several densities on one shared midpoint grid and rescales each
/// cloud to the mass of the first.
///
/// The grid covers every support; `n_target` is the number of cells inside the
/// support of the first density.
pub fn clouds_on_common_grid(
    fs: &[&dyn DensityFunction],
    n_target: usize,
) -> Result<Vec<ParticleCloud>> {
    let first = fs
        .first()
        .ok_or_else(|| Error::InvalidArgument("no densities to discretize".into()))?;
    if n_target == 0 {
        return Err(Error::InvalidArgument("n_target must be at least 1".into()));
    }
    let base = first.support_radius();
    let radius = fs.iter().map(|f| f.support_radius()).fold(base, f64::max);
    if !(base > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidArgument(format!("support radius {radius}")));
    }
    let cells = (n_target as f64 * (radius / base).powi(3)).round() as usize;
    clouds_on_grid(fs, &SphericalGrid::with_target(radius, cells.max(1)))
}

/// Discretizes several densities on `grid` and rescales each cloud to the mass
/// of the first.
pub fn clouds_on_grid(
    fs: &[&dyn DensityFunction],
    grid: &SphericalGrid,
) -> Result<Vec<ParticleCloud>> {
    let clouds = fs
        .iter()
        .map(|f| cloud_on_grid(*f, grid))
        .collect::<Result<Vec<_>>>()?;
    if clouds.is_empty() {
        return Err(Error::InvalidArgument("no densities to discretize".into()));
    }
    let mass = clouds[0].total_mass();
    clouds
        .into_iter()
        .enumerate()
        .map(|(k, c)| {
            if k == 0 {
                Ok(c)
            } else {
                c.scaled_weights(mass / c.total_mass())
            }
        })
        .collect()
}

fn stratified(f: &dyn DensityFunction, radius: f64, n: usize, seed: u64) -> Result<ParticleCloud> {
    let grid = SphericalGrid::with_target(radius, 8 * n);
    let mut cdf = Vec::with_capacity(grid.cells());
    let mut acc = 0.0;
    for idx in 0..grid.cells() {
        let v = f.eval(&grid.center(idx));
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!("density value {v}")));
        }
        acc += v * grid.cell_volume(idx);
        cdf.push(acc);
    }
    let mass = acc;
    if !(mass > f64::MIN_POSITIVE) {
        return Err(Error::ZeroMass);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = Vec::with_capacity(n);
    for i in 0..n {
        let u = (i as f64 + rng.gen::<f64>()) / n as f64 * mass;
        let idx = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
        let (a, b, c) = grid.unravel(idx);
        positions.push(grid.point(a, b, c, [rng.gen(), rng.gen(), rng.gen()]));
    }
    ParticleCloud::new(
        positions,
        vec![mass / n as f64; n],
        format!("{}#seed={seed}", f.label()),
    )
}

#[cfg(test)]
mod tests {
    use super::super::functions::{ExampleDensity3d, FnDensity, IndicatorBall};
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rejects_bad_inputs() {
        assert!(ParticleCloud::new(vec![Vec3::zeros()], vec![], "x").is_err());
        assert!(ParticleCloud::new(vec![Vec3::zeros()], vec![-1.0], "x").is_err());
        assert!(ParticleCloud::new(vec![Vec3::zeros()], vec![f64::NAN], "x").is_err());
        assert!(
            ParticleCloud::new(vec![Vec3::new(f64::INFINITY, 0.0, 0.0)], vec![1.0], "x").is_err()
        );
    }

    #[test]
    fn first_moment_examples() {
        let c = ParticleCloud::single(Vec3::new(3.0, 0.0, 4.0), 2.0).unwrap();
        assert_eq!(first_moment(&c), 10.0);
        assert_eq!(first_moment(&ParticleCloud::empty("e")), 0.0);
    }

    #[test]
    fn grid_ball_mass() {
        let c = cloud_from_density(&IndicatorBall::new(1.0), 1000, Scheme::GridMidpoint).unwrap();
        assert_relative_eq!(c.total_mass(), 4.0 * PI / 3.0, max_relative = 1e-12);
        assert_eq!(c.len(), 1024);
    }

    #[test]
    fn uniform_shells_mass() {
        let grid = SphericalGrid {
            radius: 1.0,
            n_r: 7,
            n_mu: 3,
            n_phi: 5,
            shells: Shells::Uniform,
        };
        let total: f64 = (0..grid.cells()).map(|i| grid.cell_volume(i)).sum();
        assert_relative_eq!(total, 4.0 * PI / 3.0, max_relative = 1e-14);
        let c = cloud_on_grid(&IndicatorBall::new(2.0), &grid).unwrap();
        assert_relative_eq!(c.total_mass(), 4.0 * PI / 3.0, max_relative = 1e-14);
        let inner = c
            .positions()
            .iter()
            .map(|x| x.norm())
            .fold(f64::INFINITY, f64::min);
        assert!(inner < 1.0 / 7.0 && inner > 0.0);
    }

    #[test]
    fn zero_density_is_rejected() {
        let f = FnDensity::new(|_: &Vec3| 0.0, 1.0, "zero");
        assert!(matches!(
            cloud_from_density(&f, 100, Scheme::GridMidpoint),
            Err(Error::ZeroMass)
        ));
        assert!(matches!(
            cloud_from_density(&f, 100, Scheme::StratifiedRandom { seed: 1 }),
            Err(Error::ZeroMass)
        ));
    }

    #[test]
    fn stratified_is_reproducible() {
        let f = ExampleDensity3d;
        let a = cloud_from_density(&f, 500, Scheme::StratifiedRandom { seed: 7 }).unwrap();
        let b = cloud_from_density(&f, 500, Scheme::StratifiedRandom { seed: 7 }).unwrap();
        let c = cloud_from_density(&f, 500, Scheme::StratifiedRandom { seed: 8 }).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.positions(), c.positions());
        assert_eq!(a.len(), 500);
        assert!(a
            .positions()
            .iter()
            .all(|x| x.norm() <= f.support_radius() * (1.0 + 1e-12)));
        assert_relative_eq!(a.total_mass(), c.total_mass(), max_relative = 1e-12);
    }

    #[test]
    fn csv_roundtrip_is_lossless() {
        let c = ParticleCloud::new(
            vec![
                Vec3::new(0.1, -1.0 / 3.0, 1e-300),
                Vec3::new(PI, 2e20, -0.0),
            ],
            vec![1.0 / 7.0, 0.0],
            "rt",
        )
        .unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("x,y,z,w\n"));
        let back = ParticleCloud::read_csv(buf.as_slice(), "rt").unwrap();
        assert_eq!(back, c);
        let mut tagged = Vec::new();
        c.write_csv_with_comment(&mut tagged, Some("seed=3"))
            .unwrap();
        assert!(tagged.starts_with(b"# seed=3\nx,y,z,w\n"));
        assert_eq!(ParticleCloud::read_csv(tagged.as_slice(), "rt").unwrap(), c);
    }

    #[test]
    fn common_grid_matches_masses() {
        use super::super::functions::{SmoothBump, Translated};
        let f = SmoothBump {
            radius: 1.0,
            height: 1.0,
        };
        let g = Translated {
            inner: f,
            offset: Vec3::new(0.1, 0.0, 0.0),
        };
        let clouds = clouds_on_common_grid(&[&f, &g], 300).unwrap();
        assert_relative_eq!(
            clouds[0].total_mass(),
            clouds[1].total_mass(),
            max_relative = 1e-14
        );
        assert!(clouds[1].center_of_mass().unwrap()[0] > 0.05);
        assert!(clouds_on_common_grid(&[], 10).is_err());
    }

    #[test]
    fn csv_rejects_wrong_header() {
        assert!(ParticleCloud::read_csv("a,b,c,d\n1,2,3,4\n".as_bytes(), "x").is_err());
    }
}
