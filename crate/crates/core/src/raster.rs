//! Row-major rasters with world geometry, and PGM encoding.
//!
//! Row 0 is the top of the image: world `y` decreases with the row index.

use std::io::Write;

use crate::error::Result;

/// World placement of a raster.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RasterGeometry {
    /// Meters per pixel.
    pub pitch: f64,
    /// World `(x, y)` of the center of pixel `(row 0, col 0)`.
    pub origin: [f64; 2],
}

impl RasterGeometry {
    /// Pixel `(col, row)` (fractional) to world.
    pub fn pixel_to_world(&self, col: f64, row: f64) -> [f64; 2] {
        [
            self.origin[0] + col * self.pitch,
            self.origin[1] - row * self.pitch,
        ]
    }

    pub fn world_to_pixel(&self, p: [f64; 2]) -> (f64, f64) {
        (
            (p[0] - self.origin[0]) / self.pitch,
            (self.origin[1] - p[1]) / self.pitch,
        )
    }
}

impl Default for RasterGeometry {
    fn default() -> Self {
        RasterGeometry {
            pitch: 1.0,
            origin: [0.0, 0.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Raster<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
    pub geometry: RasterGeometry,
}

/// Real-valued image, `[0, 1]` after normalization.
pub type GrayImage = Raster<f64>;
pub type BinaryImage = Raster<bool>;

impl<T: Clone + Default> Raster<T> {
    pub fn new(width: usize, height: usize, geometry: RasterGeometry) -> Self {
        Raster {
            width,
            height,
            data: vec![T::default(); width * height],
            geometry,
        }
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        geometry: RasterGeometry,
        mut f: impl FnMut(usize, usize) -> T,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(col, row));
            }
        }
        Raster {
            width,
            height,
            data,
            geometry,
        }
    }

    /// Same geometry, new pixel type.
    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> Raster<U> {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
            geometry: self.geometry,
        }
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> &T {
        &self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, value: T) {
        self.data[row * self.width + col] = value;
    }

    /// Value at signed coordinates, `None` outside.
    pub fn get_signed(&self, col: isize, row: isize) -> Option<&T> {
        if col < 0 || row < 0 || col as usize >= self.width || row as usize >= self.height {
            None
        } else {
            Some(self.get(col as usize, row as usize))
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Rotate 90° counter-clockwise (geometry is not rotated).
    pub fn rotate90(&self) -> Self {
        let (w, h) = (self.width, self.height);
        Raster::from_fn(h, w, self.geometry, |col, row| self.get(w - 1 - row, col).clone())
    }
}

impl BinaryImage {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// Binary 16-bit PGM (`P5`, maxval 65535, big-endian samples).
pub fn write_pgm16<W: Write>(mut w: W, width: usize, height: usize, samples: &[u16]) -> Result<()> {
    let mut buf = format!("P5\n{width} {height}\n65535\n").into_bytes();
    for s in samples {
        buf.extend_from_slice(&s.to_be_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Binary 8-bit PGM.
pub fn write_pgm8<W: Write>(mut w: W, width: usize, height: usize, samples: &[u8]) -> Result<()> {
    let mut buf = format!("P5\n{width} {height}\n255\n").into_bytes();
    buf.extend_from_slice(samples);
    w.write_all(&buf)?;
    Ok(())
}

impl GrayImage {
    /// 8-bit PGM of values clamped to `[0, 1]`.
    pub fn write_pgm<W: Write>(&self, w: W) -> Result<()> {
        let samples: Vec<u8> = self
            .data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        write_pgm8(w, self.width, self.height, &samples)
    }
}

impl BinaryImage {
    pub fn write_pgm<W: Write>(&self, w: W) -> Result<()> {
        let samples: Vec<u8> = self.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
        write_pgm8(w, self.width, self.height, &samples)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_round_trip() {
        let g = RasterGeometry {
            pitch: 2.0,
            origin: [-64.0, 62.0],
        };
        let p = g.pixel_to_world(32.0, 31.0);
        assert_eq!(p, [0.0, 0.0]);
        assert_eq!(g.world_to_pixel(p), (32.0, 31.0));
    }

    #[test]
    fn pgm_header() {
        let mut out = Vec::new();
        write_pgm16(&mut out, 2, 1, &[0, 65535]).unwrap();
        assert_eq!(&out[..out.len() - 4], b"P5\n2 1\n65535\n");
        assert_eq!(&out[out.len() - 4..], &[0, 0, 255, 255]);
    }

    #[test]
    fn rotate90_moves_corners() {
        let img = Raster::from_fn(3, 2, RasterGeometry::default(), |c, r| (c, r));
        let rot = img.rotate90();
        assert_eq!(rot.dims(), (2, 3));
        // top-right corner becomes top-left
        assert_eq!(*rot.get(0, 0), (2, 0));
        assert_eq!(*rot.get(1, 2), (0, 1));
    }
}
