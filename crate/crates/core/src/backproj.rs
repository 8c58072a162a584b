//! Brute-force backprojection, static and moving-target.
//!
//! `g(r, v) = Σ_i Σ_l A⁻¹ P(θ_i, f_l) e^{+j2k_l|r + v t_i − r_i^a|}`, with
//! the frequency sum innermost. Every cell is an independent double sum, so
//! the result does not depend on how cells are scheduled.

use std::ops::Range;

use ndarray::Array4;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::echo::{amplitude_factor, RangeProfile};
use crate::error::{Error, Result};
use crate::geometry::{moving_range, Acquisition, GridAxis, GridPoint, ImagingGrid};
use crate::pattern::{AntennaPattern, Direction};

/// Largest output [`direct_dynamic`] materializes: a 64⁴ grid.
pub const DIRECT_CELL_LIMIT: usize = 1 << 24;

/// Terms with `|A|` below this are skipped.
const MIN_AMPLITUDE: f64 = 1e-30;

/// Complex image over the cells of `grid` at `level`, indexed
/// `[x, y, v_x, v_y]`; fixed axes have length one.
#[derive(Clone, Debug, PartialEq)]
pub struct ReflectivityImage {
    pub values: Array4<Complex64>,
    pub grid: ImagingGrid,
    pub level: u32,
}

impl ReflectivityImage {
    pub fn magnitude(&self) -> Array4<f64> {
        self.values.mapv(|z| z.norm())
    }

    /// Index of the largest magnitude; ties go to the lowest linear index.
    pub fn argmax(&self) -> [usize; 4] {
        argmax4(&self.magnitude())
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn point(&self, idx: [usize; 4]) -> GridPoint {
        self.grid.point(self.level, idx)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// The `(x, y)` plane at velocity index `(jvx, jvy)`, element `[ix, iy]`.
    pub fn spatial_slice(&self, jvx: usize, jvy: usize) -> ndarray::Array2<Complex64> {
        self.values
            .slice(ndarray::s![.., .., jvx, jvy])
            .to_owned()
    }
}

pub(crate) fn argmax4(values: &Array4<f64>) -> [usize; 4] {
    let mut best = f64::NEG_INFINITY;
    let mut best_idx = [0; 4];
    for (idx, &v) in values.indexed_iter() {
        if v > best {
            best = v;
            best_idx = [idx.0, idx.1, idx.2, idx.3];
        }
    }
    best_idx
}

/// Range-profile samples in pulse-major order with the acquisition geometry
/// they were recorded with.
pub struct Kernel<'a> {
    data: Vec<Complex64>,
    nf: usize,
    acq: &'a Acquisition,
    pattern: &'a dyn AntennaPattern,
    dk: f64,
}

impl<'a> Kernel<'a> {
    pub fn new(
        profile: &RangeProfile,
        acq: &'a Acquisition,
        pattern: &'a dyn AntennaPattern,
    ) -> Result<Self> {
        let (nf, np) = profile.values.dim();
        if nf != acq.num_freqs() || np != acq.num_pulses() {
            return Err(Error::ShapeMismatch(format!(
                "profile is {nf} × {np}, acquisition {} × {}",
                acq.num_freqs(),
                acq.num_pulses()
            )));
        }
        let mut data = Vec::with_capacity(nf * np);
        for i in 0..np {
            for l in 0..nf {
                data.push(profile.values[[l, i]]);
            }
        }
        let dk = if nf > 1 {
            (acq.wavenumbers[nf - 1] - acq.wavenumbers[0]) / (nf - 1) as f64
        } else {
            0.0
        };
        Ok(Kernel {
            data,
            nf,
            acq,
            pattern,
            dk,
        })
    }

    pub fn acquisition(&self) -> &Acquisition {
        self.acq
    }

    pub fn pattern(&self) -> &dyn AntennaPattern {
        self.pattern
    }

    pub fn num_freqs(&self) -> usize {
        self.nf
    }

    pub fn num_pulses(&self) -> usize {
        self.acq.num_pulses()
    }

    /// Backprojection of the samples in `freqs × pulses` at one point.
    pub fn partial(&self, freqs: Range<usize>, pulses: Range<usize>, p: &GridPoint) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        let isotropic = self.pattern.is_isotropic();
        for i in pulses {
            let a = self.acq.antenna[i];
            let t = self.acq.times[i];
            let d = moving_range(p.r, p.v, t, a);
            let row = &self.data[i * self.nf..(i + 1) * self.nf];
            if isotropic {
                let mut z = Complex64::cis(2.0 * self.acq.wavenumbers[freqs.start] * d);
                let step = Complex64::cis(2.0 * self.dk * d);
                let mut s = Complex64::new(0.0, 0.0);
                for x in &row[freqs.clone()] {
                    s += x * z;
                    z *= step;
                }
                acc += s * (d * d);
            } else {
                let pos = [p.r[0] + p.v[0] * t, p.r[1] + p.v[1] * t, 0.0];
                let mut s = Complex64::new(0.0, 0.0);
                for l in freqs.clone() {
                    let amp = self.amplitude(pos, a, l);
                    if amp.norm() < MIN_AMPLITUDE {
                        continue;
                    }
                    s += row[l] * Complex64::cis(2.0 * self.acq.wavenumbers[l] * d) / amp;
                }
                acc += s;
            }
        }
        acc
    }

    fn amplitude(&self, pos: [f64; 3], a: [f64; 3], l: usize) -> Complex64 {
        if self.acq.azimuth_offset == 0.0 {
            return amplitude_factor(pos, a, self.acq.freqs[l], self.pattern);
        }
        let d = [pos[0] - a[0], pos[1] - a[1], pos[2] - a[2]];
        let mut dir = Direction::from_delta(d[0], d[1], d[2]);
        dir.azimuth += self.acq.azimuth_offset;
        let f = self.pattern.gain(dir, self.acq.freqs[l]);
        f * f / (d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
    }

    /// Full backprojection at one point.
    pub fn at(&self, p: &GridPoint) -> Complex64 {
        self.partial(0..self.nf, 0..self.num_pulses(), p)
    }

    /// Backprojection over every cell of `grid` at `level`.
    pub fn image(&self, grid: &ImagingGrid, level: u32) -> ReflectivityImage {
        let shape = grid.shape(level);
        let total: usize = shape.iter().product();
        let values: Vec<Complex64> = (0..total)
            .into_par_iter()
            .map(|flat| self.at(&grid.point(level, unflatten(flat, shape))))
            .collect();
        ReflectivityImage {
            values: Array4::from_shape_vec(shape, values).expect("cell count"),
            grid: *grid,
            level,
        }
    }
}

pub(crate) fn unflatten(mut flat: usize, shape: [usize; 4]) -> [usize; 4] {
    let mut idx = [0; 4];
    for k in (0..4).rev() {
        idx[k] = flat % shape[k];
        flat /= shape[k];
    }
    idx
}

/// The grid with both velocity axes pinned at zero.
pub fn static_grid(grid: &ImagingGrid) -> ImagingGrid {
    let mut g = *grid;
    g.axes[2] = GridAxis::Fixed(0.0);
    g.axes[3] = GridAxis::Fixed(0.0);
    g
}

/// Static image `g(r)` on the spatial axes of `grid` at `level`.
pub fn direct_static(
    profile: &RangeProfile,
    grid: &ImagingGrid,
    level: u32,
    pattern: &dyn AntennaPattern,
) -> Result<ReflectivityImage> {
    let acq = Acquisition::new(&profile.radar);
    Ok(Kernel::new(profile, &acq, pattern)?.image(&static_grid(grid), level))
}

/// Position-velocity image `g(r, v)` over the whole grid. Refuses outputs
/// beyond [`DIRECT_CELL_LIMIT`] cells.
pub fn direct_dynamic(
    profile: &RangeProfile,
    grid: &ImagingGrid,
    level: u32,
    pattern: &dyn AntennaPattern,
) -> Result<ReflectivityImage> {
    let cells: usize = grid.shape(level).iter().product();
    if cells > DIRECT_CELL_LIMIT {
        return Err(Error::OutputTooLarge {
            cells,
            limit: DIRECT_CELL_LIMIT,
        });
    }
    direct_dynamic_unchecked(profile, grid, level, pattern)
}

pub fn direct_dynamic_unchecked(
    profile: &RangeProfile,
    grid: &ImagingGrid,
    level: u32,
    pattern: &dyn AntennaPattern,
) -> Result<ReflectivityImage> {
    let acq = Acquisition::new(&profile.radar);
    Ok(Kernel::new(profile, &acq, pattern)?.image(grid, level))
}
