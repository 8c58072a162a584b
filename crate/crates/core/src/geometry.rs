//! Radar trajectory, imaging grids and the road-alignment transform.
//!
//! The antenna phase center moves on a circle of radius `R` at height `h`
//! above the scene origin. Pulses are sent at uniformly spaced azimuths
//! `θ_i` and sample `N` uniformly spaced frequencies; targets move with
//! constant velocity on the `z = 0` plane ("stop and go": no motion during a
//! pulse).
//!
//! Imaging grids are nested dyadic grids: at level `L` a dyadic axis holds
//! `2^L` points `c + (j − 2^(L−1))·extent/2^L`, so every level-`L` point is
//! bit-identical to point `2j` of level `L + 1`.

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;

pub type Point2 = [f64; 2];
pub type Point3 = [f64; 3];

#[inline]
pub fn norm3(d: Point3) -> f64 {
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Distance from the antenna at `antenna` to a ground point `r` that has
/// moved with velocity `v` for `t` slow-time units.
#[inline]
pub fn moving_range(r: Point2, v: Point2, t: f64, antenna: Point3) -> f64 {
    norm3([
        r[0] + v[0] * t - antenna[0],
        r[1] + v[1] * t - antenna[1],
        -antenna[2],
    ])
}

/// Circular-trajectory stepped-frequency radar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadarConfig {
    /// Trajectory radius `R`, meters.
    pub radius: f64,
    /// Platform altitude `h`, meters.
    pub altitude: f64,
    /// Carrier (band center) frequency, Hz.
    pub carrier_hz: f64,
    /// Swept bandwidth, Hz.
    pub bandwidth_hz: f64,
    /// `N = N_p = N_f`; a power of two.
    pub num_samples: usize,
    /// Slow time between pulses. Velocities are in meters per this unit.
    pub pulse_interval: f64,
    /// Total azimuth span, radians. Pulses sit at `θ_start + i·aperture/N`.
    pub aperture: f64,
    pub theta_start: f64,
}

impl RadarConfig {
    /// Radar with bandwidth `c/(2Δr)` and an aperture `λ_c/(2Δr)` centred on
    /// azimuth 0, i.e. matched range and cross-range slant resolution.
    pub fn with_resolution(
        carrier_hz: f64,
        range_resolution: f64,
        radius: f64,
        altitude: f64,
        num_samples: usize,
    ) -> Self {
        let aperture = matched_aperture(carrier_hz, range_resolution);
        RadarConfig {
            radius,
            altitude,
            carrier_hz,
            bandwidth_hz: bandwidth_for_resolution(range_resolution),
            num_samples,
            pulse_interval: 1.0,
            aperture,
            theta_start: -aperture / 2.0,
        }
    }

    /// The demonstration radar: 3 GHz, 4 m resolution, `R = h = 200 m`.
    pub fn demo(num_samples: usize) -> Self {
        Self::with_resolution(3.0e9, 4.0, 200.0, 200.0, num_samples)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        let n = self.num_samples;
        if n < 2 || !n.is_power_of_two() {
            return bad("N must be a power of two ≥ 2");
        }
        if !(self.radius > 0.0 && self.altitude > 0.0) {
            return bad("radius and altitude must be positive");
        }
        if !(self.bandwidth_hz > 0.0 && self.carrier_hz > self.bandwidth_hz / 2.0) {
            return bad("need 0 < bandwidth < 2·carrier");
        }
        if !(self.pulse_interval > 0.0 && self.aperture > 0.0 && self.aperture <= 2.0 * PI) {
            return bad("pulse interval must be positive and aperture in (0, 2π]");
        }
        if !self.theta_start.is_finite() {
            return bad("theta_start must be finite");
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.num_samples
    }

    /// `log₂ N`.
    pub fn max_level(&self) -> u32 {
        self.num_samples.trailing_zeros()
    }

    pub fn theta_step(&self) -> f64 {
        self.aperture / self.num_samples as f64
    }

    pub fn theta(&self, i: usize) -> f64 {
        self.theta_start + i as f64 * self.theta_step()
    }

    pub fn freq_start(&self) -> f64 {
        self.carrier_hz - self.bandwidth_hz / 2.0
    }

    pub fn freq_step(&self) -> f64 {
        self.bandwidth_hz / (self.num_samples - 1) as f64
    }

    pub fn freq(&self, l: usize) -> f64 {
        self.freq_start() + l as f64 * self.freq_step()
    }

    pub fn wavenumber(&self, l: usize) -> f64 {
        2.0 * PI * self.freq(l) / SPEED_OF_LIGHT
    }

    pub fn slow_time(&self, i: usize) -> f64 {
        i as f64 * self.pulse_interval
    }

    /// Constant elevation angle `β = atan(h/R)`.
    pub fn elevation(&self) -> f64 {
        self.altitude.atan2(self.radius)
    }

    pub fn range_resolution(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.bandwidth_hz)
    }

    pub fn wavenumbers(&self) -> Vec<f64> {
        (0..self.num_samples).map(|l| self.wavenumber(l)).collect()
    }

    pub fn slow_times(&self) -> Vec<f64> {
        (0..self.num_samples).map(|i| self.slow_time(i)).collect()
    }

    pub fn antenna_positions(&self) -> Vec<Point3> {
        (0..self.num_samples)
            .map(|i| self.antenna_at(self.theta(i)))
            .collect()
    }

    fn antenna_at(&self, theta: f64) -> Point3 {
        [
            self.radius * theta.cos(),
            self.radius * theta.sin(),
            self.altitude,
        ]
    }
}

/// `B = c / (2Δr)`.
pub fn bandwidth_for_resolution(range_resolution: f64) -> f64 {
    SPEED_OF_LIGHT / (2.0 * range_resolution)
}

/// Azimuth span whose cross-range slant resolution `λ/(2Δθ)` equals
/// `range_resolution`.
pub fn matched_aperture(carrier_hz: f64, range_resolution: f64) -> f64 {
    SPEED_OF_LIGHT / carrier_hz / (2.0 * range_resolution)
}

/// Antenna phase center `(R cos θ_i, R sin θ_i, h)` for pulse `i` (0-based).
pub fn antenna_position(cfg: &RadarConfig, i: usize) -> Result<Point3> {
    if i >= cfg.num_samples {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: cfg.num_samples,
        });
    }
    Ok(cfg.antenna_at(cfg.theta(i)))
}

/// `|(r + v·t_i) − r_i^a|` for a ground point `r` with velocity `v`.
pub fn slant_range(r: Point2, v: Point2, i: usize, cfg: &RadarConfig) -> Result<f64> {
    let a = antenna_position(cfg, i)?;
    Ok(moving_range(r, v, cfg.slow_time(i), a))
}

/// One axis of an imaging grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum GridAxis {
    /// `2^L` points over `extent`, centred on `center`.
    Dyadic { center: f64, extent: f64 },
    /// A single point at every level.
    Fixed(f64),
}

impl GridAxis {
    pub fn centered(extent: f64) -> Self {
        GridAxis::Dyadic {
            center: 0.0,
            extent,
        }
    }

    pub fn is_dyadic(&self) -> bool {
        matches!(self, GridAxis::Dyadic { .. })
    }

    pub fn len(&self, level: u32) -> usize {
        match self {
            GridAxis::Dyadic { .. } => 1 << level,
            GridAxis::Fixed(_) => 1,
        }
    }

    pub fn spacing(&self, level: u32) -> f64 {
        match *self {
            GridAxis::Dyadic { extent, .. } => extent / (1u64 << level) as f64,
            GridAxis::Fixed(_) => 0.0,
        }
    }

    pub fn coord(&self, level: u32, j: usize) -> f64 {
        match *self {
            GridAxis::Dyadic { center, .. } => {
                let offset = j as i64 - (self.len(level) / 2) as i64;
                center + offset as f64 * self.spacing(level)
            }
            GridAxis::Fixed(value) => value,
        }
    }

    pub fn coords(&self, level: u32) -> Vec<f64> {
        (0..self.len(level)).map(|j| self.coord(level, j)).collect()
    }

    /// Index of the grid point closest to `value`, clamped to the axis.
    pub fn nearest_index(&self, level: u32, value: f64) -> usize {
        match *self {
            GridAxis::Dyadic { center, .. } => {
                let n = self.len(level);
                let j = ((value - center) / self.spacing(level)).round() + (n / 2) as f64;
                j.clamp(0.0, (n - 1) as f64) as usize
            }
            GridAxis::Fixed(_) => 0,
        }
    }
}

pub const AXIS_X: usize = 0;
pub const AXIS_Y: usize = 1;
pub const AXIS_VX: usize = 2;
pub const AXIS_VY: usize = 3;

/// Joint position/velocity grid over `(x, y, v_x, v_y)`.
///
/// Static imaging pins both velocity axes at zero; road-based imaging pins
/// `y` at the road offset and `v_y` at zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImagingGrid {
    pub axes: [GridAxis; 4],
}

/// A grid point: position and velocity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridPoint {
    pub r: Point2,
    pub v: Point2,
}

impl ImagingGrid {
    pub fn new(axes: [GridAxis; 4]) -> Self {
        ImagingGrid { axes }
    }

    /// `x, y` over `extent × extent`, velocity fixed at zero.
    pub fn spatial(extent: f64) -> Self {
        ImagingGrid::new([
            GridAxis::centered(extent),
            GridAxis::centered(extent),
            GridAxis::Fixed(0.0),
            GridAxis::Fixed(0.0),
        ])
    }

    pub fn four_d(extent: f64, velocity_extent: f64) -> Self {
        ImagingGrid::new([
            GridAxis::centered(extent),
            GridAxis::centered(extent),
            GridAxis::centered(velocity_extent),
            GridAxis::centered(velocity_extent),
        ])
    }

    /// The `(x, v_x)` grid of a road-aligned frame at cross-road offset
    /// `y_offset`.
    pub fn road(x_center: f64, extent: f64, y_offset: f64, velocity_extent: f64) -> Self {
        ImagingGrid::new([
            GridAxis::Dyadic {
                center: x_center,
                extent,
            },
            GridAxis::Fixed(y_offset),
            GridAxis::centered(velocity_extent),
            GridAxis::Fixed(0.0),
        ])
    }

    /// Number of dyadic (searched) axes.
    pub fn dims(&self) -> usize {
        self.axes.iter().filter(|a| a.is_dyadic()).count()
    }

    pub fn shape(&self, level: u32) -> [usize; 4] {
        [0, 1, 2, 3].map(|k| self.axes[k].len(level))
    }

    pub fn point(&self, level: u32, idx: [usize; 4]) -> GridPoint {
        GridPoint {
            r: [
                self.axes[AXIS_X].coord(level, idx[0]),
                self.axes[AXIS_Y].coord(level, idx[1]),
            ],
            v: [
                self.axes[AXIS_VX].coord(level, idx[2]),
                self.axes[AXIS_VY].coord(level, idx[3]),
            ],
        }
    }

    pub fn nearest(&self, level: u32, p: &GridPoint) -> [usize; 4] {
        let values = [p.r[0], p.r[1], p.v[0], p.v[1]];
        [0, 1, 2, 3].map(|k| self.axes[k].nearest_index(level, values[k]))
    }
}

/// Default grids for a radar: `N` points at `Δr/4` spacing, velocity
/// `±velocity_half_extent` per axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub spacing: f64,
    pub velocity_half_extent: f64,
}

impl GridSpec {
    pub const DEFAULT_VELOCITY_HALF_EXTENT: f64 = 0.32;

    pub fn for_radar(cfg: &RadarConfig) -> Self {
        GridSpec {
            spacing: cfg.range_resolution() / 4.0,
            velocity_half_extent: Self::DEFAULT_VELOCITY_HALF_EXTENT,
        }
    }

    pub fn extent(&self, n: usize) -> f64 {
        self.spacing * n as f64
    }

    pub fn velocity_extent(&self) -> f64 {
        2.0 * self.velocity_half_extent
    }

    pub fn spatial(&self, n: usize) -> ImagingGrid {
        ImagingGrid::spatial(self.extent(n))
    }

    pub fn four_d(&self, n: usize) -> ImagingGrid {
        ImagingGrid::four_d(self.extent(n), self.velocity_extent())
    }

    /// Fine velocity cell at `N` points.
    pub fn velocity_spacing(&self, n: usize) -> f64 {
        self.velocity_extent() / n as f64
    }
}

/// Threshold on `|sin α|` below which the translation switches to the
/// x-intercept.
pub const DEGENERATE_SIN: f64 = 1e-3;

/// Rigid transform taking the road line `x cos α + y sin α = ρ` onto the
/// x-axis of a road-aligned frame.
///
/// Points are translated by `(0, −ρ/sin α)` (the y-intercept; the
/// x-intercept `(−ρ/cos α, 0)` for near-vertical normals) and rotated by
/// `π/2 − α`. With `sign = −1` the rotation is `−(π/2 + α)` and the frame's
/// x-axis runs the other way along the road. Either way the road normal
/// `(cos α, sin α)` points along `±y` of the frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoadFrame {
    pub rho: f64,
    pub alpha: f64,
    pub sign: f64,
    /// Allow the x-intercept translation when `|sin α| ≤ 1e−3`.
    pub vertical_fallback: bool,
}

impl RoadFrame {
    pub fn new(rho: f64, alpha: f64) -> Self {
        RoadFrame {
            rho,
            alpha,
            sign: 1.0,
            vertical_fallback: true,
        }
    }

    fn translation(&self) -> Result<Point2> {
        let (s, c) = self.alpha.sin_cos();
        if s.abs() > DEGENERATE_SIN {
            Ok([0.0, self.rho / s])
        } else if self.vertical_fallback {
            Ok([self.rho / c, 0.0])
        } else {
            Err(Error::DegenerateAngle {
                alpha_deg: self.alpha.to_degrees(),
            })
        }
    }

    /// Rotation angle applied after the translation.
    pub fn rotation(&self) -> f64 {
        if self.sign < 0.0 {
            -(FRAC_PI_2 + self.alpha)
        } else {
            FRAC_PI_2 - self.alpha
        }
    }

    /// World point to road frame.
    pub fn forward(&self, p: Point2) -> Result<Point2> {
        let t = self.translation()?;
        Ok(rotate2([p[0] - t[0], p[1] - t[1]], self.rotation()))
    }

    /// Road frame point back to world coordinates.
    pub fn inverse(&self, p: Point2) -> Result<Point2> {
        let t = self.translation()?;
        let q = rotate2(p, -self.rotation());
        Ok([q[0] + t[0], q[1] + t[1]])
    }

    /// Road-frame vector (e.g. a velocity) in world coordinates.
    pub fn vector_to_world(&self, v: Point2) -> Point2 {
        rotate2(v, -self.rotation())
    }

    pub fn vector_to_frame(&self, v: Point2) -> Point2 {
        rotate2(v, self.rotation())
    }
}

#[inline]
pub fn rotate2(p: Point2, angle: f64) -> Point2 {
    let (s, c) = angle.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1]]
}

/// Antenna phase centers expressed in the frame of road `(ρ, α)`; `z` is
/// unchanged.
pub fn rotate_antenna(positions: &[Point3], rho: f64, alpha: f64) -> Result<Vec<Point3>> {
    let frame = RoadFrame::new(rho, alpha);
    positions
        .iter()
        .map(|a| {
            let p = frame.forward([a[0], a[1]])?;
            Ok([p[0], p[1], a[2]])
        })
        .collect()
}

/// Inverse of the point transform behind [`rotate_antenna`].
pub fn unrotate_point(p: Point2, rho: f64, alpha: f64) -> Result<Point2> {
    RoadFrame::new(rho, alpha).inverse(p)
}

/// Per-sample acquisition geometry: antenna positions, slow times and
/// wavenumbers, optionally expressed in a road-aligned frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Acquisition {
    pub antenna: Vec<Point3>,
    pub times: Vec<f64>,
    pub wavenumbers: Vec<f64>,
    pub freqs: Vec<f64>,
    /// Added to frame azimuths before evaluating the antenna pattern.
    pub azimuth_offset: f64,
}

impl Acquisition {
    pub fn new(cfg: &RadarConfig) -> Self {
        Acquisition {
            antenna: cfg.antenna_positions(),
            times: cfg.slow_times(),
            wavenumbers: cfg.wavenumbers(),
            freqs: (0..cfg.num_samples).map(|l| cfg.freq(l)).collect(),
            azimuth_offset: 0.0,
        }
    }

    /// The same acquisition seen from the frame of `road`.
    pub fn in_road_frame(&self, road: &RoadFrame) -> Result<Self> {
        let antenna = self
            .antenna
            .iter()
            .map(|a| {
                let p = road.forward([a[0], a[1]])?;
                Ok([p[0], p[1], a[2]])
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Acquisition {
            antenna,
            azimuth_offset: self.azimuth_offset - road.rotation(),
            ..self.clone()
        })
    }

    pub fn num_pulses(&self) -> usize {
        self.antenna.len()
    }

    pub fn num_freqs(&self) -> usize {
        self.wavenumbers.len()
    }
}
