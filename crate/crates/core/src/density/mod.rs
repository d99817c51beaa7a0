//! Densities, their particle discretizations, and the norms used to measure them.

mod cloud;
mod functions;
mod geometry;
mod norms;

pub use cloud::{
    cloud_from_density, cloud_on_grid, clouds_on_common_grid, clouds_on_grid, first_moment,
    ParticleCloud, Scheme, Shells, SphericalGrid,
};
pub use functions::{
    example_density_3d, example_density_planar, example_density_tensor, mollify, DensityFunction,
    ExampleDensity3d, FnDensity, IndicatorBall, Mollified, Mollifier, Profile1d, Rotated,
    SharedDensity, SmoothBump, TensorDensity, Translated,
};
pub use geometry::{annulus_cloud, cylinder_distance, rotate_cloud, rotate_point, rotation_matrix};
pub use norms::{
    lp_norm, lp_norm_planar_example, ltheta_norm, ltheta_norm_with, GrowthFunction, LThetaNorm,
    LThetaSample, DEFAULT_P_GRID,
};
