//! Antenna field patterns `F(φ_el, φ_az, f)`.

use num_complex::Complex64;

/// Observation direction from the antenna phase center to a ground point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Direction {
    /// Depression angle below the horizon, radians (positive looking down).
    pub elevation: f64,
    /// Azimuth of the horizontal pointing vector, radians.
    pub azimuth: f64,
}

impl Direction {
    pub fn from_delta(dx: f64, dy: f64, dz: f64) -> Self {
        Direction {
            elevation: (-dz).atan2(dx.hypot(dy)),
            azimuth: dy.atan2(dx),
        }
    }
}

pub trait AntennaPattern: Send + Sync {
    fn gain(&self, dir: Direction, freq_hz: f64) -> Complex64;

    /// `F ≡ 1`; lets the kernels skip direction evaluation.
    fn is_isotropic(&self) -> bool {
        false
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Isotropic;

impl AntennaPattern for Isotropic {
    fn gain(&self, _dir: Direction, _freq_hz: f64) -> Complex64 {
        Complex64::new(1.0, 0.0)
    }

    fn is_isotropic(&self) -> bool {
        true
    }
}

/// `F² = cos(φ_el)`: gain falls off towards nadir.
#[derive(Clone, Copy, Debug, Default)]
pub struct CosineElevation;

impl AntennaPattern for CosineElevation {
    fn gain(&self, dir: Direction, _freq_hz: f64) -> Complex64 {
        Complex64::new(dir.elevation.cos().max(0.0).sqrt(), 0.0)
    }
}
