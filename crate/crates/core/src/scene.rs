//! Ground truth: point targets, clutter fields and scene files.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::echo::NoiseSpec;
use crate::error::{Error, Result};
use crate::geometry::{GridAxis, GridSpec, ImagingGrid, Point2, RadarConfig, AXIS_X, AXIS_Y};
use crate::raster::{BinaryImage, RasterGeometry};

/// A point scatterer moving with constant velocity on the ground plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointTarget {
    pub position: Point2,
    pub velocity: Point2,
    /// `√σ_t`.
    pub amplitude: f64,
    pub phase: f64,
}

impl PointTarget {
    pub fn stationary(position: Point2, amplitude: f64) -> Self {
        PointTarget {
            position,
            velocity: [0.0, 0.0],
            amplitude,
            phase: 0.0,
        }
    }

    pub fn rcs(&self) -> f64 {
        self.amplitude * self.amplitude
    }

    pub fn is_moving(&self) -> bool {
        self.velocity != [0.0, 0.0]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Everywhere,
    InsideRoads,
    OutsideRoads,
}

/// One random-phase scatterer per resolution cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClutterSpec {
    /// Scattering coefficient `σ_0` (linear, per m²).
    pub sigma0: f64,
    pub cell_dx: f64,
    pub cell_dy: f64,
    pub region: Region,
    pub seed: u64,
}

impl ClutterSpec {
    /// `σ_c = σ_0·Δx·Δy`.
    pub fn cell_rcs(&self) -> f64 {
        self.sigma0 * self.cell_dx * self.cell_dy
    }
}

/// A straight road `x cos α + y sin α = ρ` of the given width (world units).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneRoad {
    pub rho: f64,
    pub alpha: f64,
    pub width: f64,
}

impl SceneRoad {
    pub fn contains(&self, p: Point2) -> bool {
        let d = p[0] * self.alpha.cos() + p[1] * self.alpha.sin() - self.rho;
        d.abs() <= self.width / 2.0
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub name: String,
    pub targets: Vec<PointTarget>,
    pub roads: Vec<SceneRoad>,
    pub clutter: Vec<ClutterSpec>,
    pub noise: Option<NoiseSpec>,
}

impl Scene {
    /// Targets plus the clutter scatterers of an `n × n` cell field.
    pub fn scatterers(&self, n: usize) -> Result<Vec<PointTarget>> {
        let mut out = self.targets.clone();
        for spec in &self.clutter {
            let grid = clutter_grid(spec, n);
            let mask = match spec.region {
                Region::Everywhere => None,
                region => Some(road_mask(&self.roads, &grid, region == Region::InsideRoads)),
            };
            out.extend(generate_clutter(spec, &grid, mask.as_ref())?);
        }
        Ok(out)
    }
}

/// The `n × n` grid of clutter cells centred on the origin.
pub fn clutter_grid(spec: &ClutterSpec, n: usize) -> (ImagingGrid, u32) {
    let grid = ImagingGrid::new([
        GridAxis::centered(spec.cell_dx * n as f64),
        GridAxis::centered(spec.cell_dy * n as f64),
        GridAxis::Fixed(0.0),
        GridAxis::Fixed(0.0),
    ]);
    (grid, n.trailing_zeros())
}

/// Raster over the spatial grid, true where a cell is (`inside`) or is not
/// on any road. Row 0 is the largest `y`.
pub fn road_mask(roads: &[SceneRoad], grid: &(ImagingGrid, u32), inside: bool) -> BinaryImage {
    let (g, level) = grid;
    let [nx, ny, _, _] = g.shape(*level);
    let geometry = RasterGeometry {
        pitch: g.axes[AXIS_X].spacing(*level),
        origin: [
            g.axes[AXIS_X].coord(*level, 0),
            g.axes[AXIS_Y].coord(*level, ny - 1),
        ],
    };
    BinaryImage::from_fn(nx, ny, geometry, |col, row| {
        let p = [
            g.axes[AXIS_X].coord(*level, col),
            g.axes[AXIS_Y].coord(*level, ny - 1 - row),
        ];
        roads.iter().any(|r| r.contains(p)) == inside
    })
}

/// One static scatterer at every grid node whose mask pixel is set (all
/// nodes without a mask), amplitude `√(σ_0 Δx Δy)` and a uniform random phase.
///
/// One phase is drawn per cell in `(y, x)` index order whether or not the
/// cell is masked, so a mask never changes the phase of a surviving cell.
pub fn generate_clutter(
    spec: &ClutterSpec,
    grid: &(ImagingGrid, u32),
    mask: Option<&BinaryImage>,
) -> Result<Vec<PointTarget>> {
    let (g, level) = grid;
    let [nx, ny, _, _] = g.shape(*level);
    if let Some(m) = mask {
        if m.dims() != (nx, ny) {
            return Err(Error::MaskMismatch {
                got: m.dims(),
                expected: (nx, ny),
            });
        }
    }
    let amplitude = spec.cell_rcs().max(0.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            let phase = rng.random::<f64>() * 2.0 * PI;
            if let Some(m) = mask {
                if !*m.get(ix, ny - 1 - iy) {
                    continue;
                }
            }
            out.push(PointTarget {
                position: [
                    g.axes[AXIS_X].coord(*level, ix),
                    g.axes[AXIS_Y].coord(*level, iy),
                ],
                velocity: [0.0, 0.0],
                amplitude,
                phase,
            });
        }
    }
    Ok(out)
}

/// `10·log10(σ_t/σ_c)`.
pub fn scr_static(target: &PointTarget, spec: &ClutterSpec) -> Result<f64> {
    let sc = spec.cell_rcs();
    if sc <= 0.0 {
        return Err(Error::ZeroClutter);
    }
    Ok(10.0 * (target.rcs() / sc).log10())
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// A scene together with the radar and grids it was written for.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub scene: Scene,
    pub radar: RadarConfig,
    pub grid: GridSpec,
}

mod file {
    use serde::Deserialize;

    #[derive(Deserialize, Default)]
    #[serde(deny_unknown_fields)]
    pub struct SceneFile {
        #[serde(default)]
        pub name: String,
        pub radar: Option<RadarFile>,
        pub grid: Option<GridFile>,
        #[serde(default)]
        pub targets: Vec<TargetFile>,
        #[serde(default)]
        pub roads: Vec<RoadFile>,
        #[serde(default)]
        pub clutter: Vec<ClutterFile>,
        pub noise: Option<NoiseFile>,
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct RadarFile {
        pub n: usize,
        pub carrier_hz: Option<f64>,
        pub range_resolution: Option<f64>,
        pub bandwidth_hz: Option<f64>,
        pub radius: Option<f64>,
        pub altitude: Option<f64>,
        pub aperture_deg: Option<f64>,
        pub theta_start_deg: Option<f64>,
        pub pulse_interval: Option<f64>,
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct GridFile {
        pub spacing: Option<f64>,
        pub velocity_half_extent: Option<f64>,
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct TargetFile {
        pub pos: Vec<f64>,
        #[serde(default)]
        pub vel: Option<Vec<f64>>,
        #[serde(default)]
        pub rcs_db: f64,
        #[serde(default)]
        pub phase: f64,
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct RoadFile {
        pub rho: f64,
        pub alpha_deg: f64,
        pub width: f64,
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct ClutterFile {
        pub sigma0_db: f64,
        #[serde(default)]
        pub region: Option<super::Region>,
        #[serde(default)]
        pub seed: u64,
        pub cell: Option<f64>,
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct NoiseFile {
        pub power_db: f64,
        #[serde(default)]
        pub seed: u64,
    }
}

fn parse_file(text: &str) -> Result<file::SceneFile> {
    toml::from_str(text).map_err(|e| {
        let msg = e.message().to_string();
        match e.span() {
            Some(span) => {
                let line = text[..span.start.min(text.len())].lines().count().max(1);
                let line = if text[..span.start.min(text.len())].ends_with('\n') {
                    line + 1
                } else {
                    line
                };
                Error::SceneParse(format!("line {line}: {msg}"))
            }
            None => Error::SceneParse(msg),
        }
    })
}

fn vec2(v: &[f64], field: &str) -> Result<Point2> {
    match v {
        [a, b] if a.is_finite() && b.is_finite() => Ok([*a, *b]),
        [_, _] => Err(Error::field(field, "components must be finite")),
        _ => Err(Error::field(
            field,
            format!("expected 2 components, got {}", v.len()),
        )),
    }
}

fn positive(value: f64, field: &str) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::field(field, "must be positive"))
    }
}

fn build_radar(r: &file::RadarFile) -> Result<RadarConfig> {
    if r.n < 2 || !r.n.is_power_of_two() {
        return Err(Error::field("radar.n", "must be a power of two ≥ 2"));
    }
    let carrier = positive(r.carrier_hz.unwrap_or(3.0e9), "radar.carrier_hz")?;
    let resolution = match (r.range_resolution, r.bandwidth_hz) {
        (Some(_), Some(_)) => {
            return Err(Error::field(
                "radar.bandwidth_hz",
                "give either range_resolution or bandwidth_hz",
            ))
        }
        (Some(res), None) => positive(res, "radar.range_resolution")?,
        (None, Some(b)) => {
            crate::geometry::SPEED_OF_LIGHT / (2.0 * positive(b, "radar.bandwidth_hz")?)
        }
        (None, None) => 4.0,
    };
    let mut cfg = RadarConfig::with_resolution(
        carrier,
        resolution,
        positive(r.radius.unwrap_or(200.0), "radar.radius")?,
        positive(r.altitude.unwrap_or(200.0), "radar.altitude")?,
        r.n,
    );
    cfg.pulse_interval = positive(r.pulse_interval.unwrap_or(1.0), "radar.pulse_interval")?;
    if let Some(deg) = r.aperture_deg {
        if !(deg > 0.0 && deg <= 360.0) {
            return Err(Error::field("radar.aperture_deg", "must be in (0, 360]"));
        }
        cfg.aperture = deg.to_radians();
        cfg.theta_start = -cfg.aperture / 2.0;
    }
    if let Some(deg) = r.theta_start_deg {
        cfg.theta_start = deg.to_radians();
    }
    cfg.validate()
        .map_err(|e| Error::field("radar", e.to_string()))?;
    Ok(cfg)
}

/// Parse and validate a scenario file (TOML).
pub fn load_scenario(text: &str) -> Result<Scenario> {
    let f = parse_file(text)?;
    let radar = match &f.radar {
        Some(r) => build_radar(r)?,
        None => RadarConfig::demo(64),
    };
    let mut grid = GridSpec::for_radar(&radar);
    if let Some(g) = &f.grid {
        if let Some(s) = g.spacing {
            grid.spacing = positive(s, "grid.spacing")?;
        }
        if let Some(v) = g.velocity_half_extent {
            grid.velocity_half_extent = positive(v, "grid.velocity_half_extent")?;
        }
    }

    let half = grid.extent(radar.n()) / 2.0;
    let mut targets = Vec::with_capacity(f.targets.len());
    for t in &f.targets {
        let position = vec2(&t.pos, "position")?;
        let velocity = match &t.vel {
            Some(v) => vec2(v, "velocity")?,
            None => [0.0, 0.0],
        };
        if position.iter().any(|c| c.abs() > half) {
            return Err(Error::field(
                "position",
                format!("{position:?} lies outside the ±{half} m imaging extent"),
            ));
        }
        if !t.rcs_db.is_finite() || !t.phase.is_finite() {
            return Err(Error::field("rcs_db", "must be finite"));
        }
        targets.push(PointTarget {
            position,
            velocity,
            amplitude: db_to_linear(t.rcs_db).sqrt(),
            phase: t.phase,
        });
    }

    let mut roads = Vec::with_capacity(f.roads.len());
    for r in &f.roads {
        if !(r.rho.is_finite() && r.alpha_deg.is_finite()) {
            return Err(Error::field("roads", "rho and alpha_deg must be finite"));
        }
        roads.push(SceneRoad {
            rho: r.rho,
            alpha: r.alpha_deg.to_radians(),
            width: positive(r.width, "roads.width")?,
        });
    }

    let mut clutter = Vec::with_capacity(f.clutter.len());
    for c in &f.clutter {
        let region = c.region.unwrap_or(Region::Everywhere);
        if region != Region::Everywhere && roads.is_empty() {
            return Err(Error::field("clutter.region", "road regions need [[roads]]"));
        }
        let cell = positive(c.cell.unwrap_or(grid.spacing), "clutter.cell")?;
        if !c.sigma0_db.is_finite() {
            return Err(Error::field("clutter.sigma0_db", "must be finite"));
        }
        clutter.push(ClutterSpec {
            sigma0: db_to_linear(c.sigma0_db),
            cell_dx: cell,
            cell_dy: cell,
            region,
            seed: c.seed,
        });
    }

    let noise = match &f.noise {
        Some(n) if n.power_db.is_finite() => Some(NoiseSpec {
            power: db_to_linear(n.power_db),
            seed: n.seed,
        }),
        Some(_) => return Err(Error::field("noise.power_db", "must be finite")),
        None => None,
    };

    Ok(Scenario {
        scene: Scene {
            name: f.name,
            targets,
            roads,
            clutter,
            noise,
        },
        radar,
        grid,
    })
}

/// Parse a scene file, ignoring its radar and grid tables.
pub fn load_scene(text: &str) -> Result<Scene> {
    load_scenario(text).map(|s| s.scene)
}
