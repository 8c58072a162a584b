//! Circular-trajectory spotlight SAR: echo simulation, brute-force and
//! multi-level backprojection, road extraction and moving-target detection.

pub mod backproj;
pub mod echo;
pub mod error;
pub mod geometry;
pub mod mldd;
pub mod pattern;
pub mod pipeline;
pub mod raster;
pub mod roaddet;
pub mod scene;

pub use num_complex::Complex64;

pub use backproj::ReflectivityImage;
pub use echo::{simulate, NoiseSpec, RangeProfile};
pub use error::{Error, Result};
pub use geometry::{Acquisition, GridAxis, GridPoint, GridSpec, ImagingGrid, Point2, RadarConfig, RoadFrame};
pub use mldd::{Interpolation, MlddConfig, Pyramid};
pub use pattern::{AntennaPattern, CosineElevation, Isotropic};
pub use pipeline::{full_run, Context, Detection, PipelineConfig, Report, RunOutput};
pub use raster::{BinaryImage, GrayImage, RasterGeometry};
pub use roaddet::{detect_roads, RoadLine, RoadParams};
pub use scene::{ClutterSpec, PointTarget, Region, Scene, Scenario};
