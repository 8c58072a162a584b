//! 16-bit dB PGM export.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use sarmover_core::raster::write_pgm16;
use sarmover_core::{BinaryImage, GrayImage, Result};

pub const DEFAULT_DYNAMIC_RANGE_DB: f64 = 40.0;

/// Mapping from magnitude to 16-bit sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DbScale {
    /// Magnitude that maps to 65535.
    pub peak: f64,
    pub dynamic_range_db: f64,
}

impl DbScale {
    pub fn for_image(img: &GrayImage, dynamic_range_db: f64) -> Self {
        let peak = img.data.iter().cloned().fold(0.0, f64::max);
        DbScale { peak, dynamic_range_db }
    }

    pub fn sample(&self, magnitude: f64) -> u16 {
        if self.peak <= 0.0 || magnitude <= 0.0 {
            return 0;
        }
        let db = 20.0 * (magnitude / self.peak).log10();
        let t = ((db + self.dynamic_range_db) / self.dynamic_range_db).clamp(0.0, 1.0);
        (t * 65535.0).round() as u16
    }

    /// dB relative to the peak of a sample value.
    pub fn db_of(&self, sample: u16) -> f64 {
        sample as f64 / 65535.0 * self.dynamic_range_db - self.dynamic_range_db
    }

    pub fn sidecar(&self) -> String {
        format!(
            "peak_magnitude {:e}\ndynamic_range_db {}\nsample_0_db {}\nsample_65535_db 0\n\
             # db = sample / 65535 * dynamic_range_db - dynamic_range_db\n",
            self.peak, self.dynamic_range_db, -self.dynamic_range_db
        )
    }
}

/// Samples in raster order; `overlay` pixels are set to full white.
pub fn db_samples(img: &GrayImage, scale: &DbScale, overlay: Option<&BinaryImage>) -> Vec<u16> {
    img.data
        .iter()
        .enumerate()
        .map(|(k, &m)| match overlay {
            Some(o) if o.data[k] => u16::MAX,
            _ => scale.sample(m),
        })
        .collect()
}

pub fn sidecar_path(pgm: &Path) -> PathBuf {
    pgm.with_extension("dbscale.txt")
}

/// Write the PGM and its dB-scale sidecar. Returns the sidecar path.
pub fn write_db_pgm(
    path: &Path,
    img: &GrayImage,
    dynamic_range_db: f64,
    overlay: Option<&BinaryImage>,
) -> Result<PathBuf> {
    let scale = DbScale::for_image(img, dynamic_range_db);
    let samples = db_samples(img, &scale, overlay);
    let mut w = BufWriter::new(File::create(path)?);
    write_pgm16(&mut w, img.width, img.height, &samples)?;
    w.flush()?;
    let side = sidecar_path(path);
    std::fs::write(&side, scale.sidecar())?;
    Ok(side)
}

#[cfg(test)]
mod tests {
    use super::*;
    use sarmover_core::RasterGeometry;

    fn geom() -> RasterGeometry {
        RasterGeometry { pitch: 1.0, origin: [0.0, 0.0] }
    }

    #[test]
    fn peak_is_white_and_floor_is_black() {
        let img = GrayImage::from_fn(3, 1, geom(), |c, _| [1.0, 0.1, 0.001][c]);
        let s = DbScale::for_image(&img, 40.0);
        let px = db_samples(&img, &s, None);
        assert_eq!(px[0], 65535);
        assert_eq!(px[1], 32768);
        assert_eq!(px[2], 0);
        assert!((s.db_of(px[1]) + 20.0).abs() < 1e-3);
    }

    #[test]
    fn zero_image_is_black() {
        let img = GrayImage::new(4, 4, geom());
        let s = DbScale::for_image(&img, 40.0);
        assert!(db_samples(&img, &s, None).iter().all(|&v| v == 0));
    }

    #[test]
    fn overlay_is_white() {
        let img = GrayImage::new(2, 2, geom());
        let mut o = BinaryImage::new(2, 2, geom());
        o.set(1, 0, true);
        let s = DbScale::for_image(&img, 40.0);
        assert_eq!(db_samples(&img, &s, Some(&o)), vec![0, 65535, 0, 0]);
    }
}
