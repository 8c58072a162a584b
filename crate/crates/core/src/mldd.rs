//! Multi-level domain decomposition (MLDD) backprojection.
//!
//! The `N × N` range profile is cut into `N_c × N_c` blocks of contiguous
//! frequencies and pulses. Each block is backprojected directly onto a
//! coarse level-`L_1` grid (`L_1 = log₂ N_c`). Every further level merges the
//! 2×2 neighbouring blocks: each child image is demodulated by its phase
//! reference `E = exp(j2k̄|r + v t̄ − r̄^a|)`, interpolated onto the doubled
//! grid, remodulated with the same reference evaluated on the fine grid and
//! summed. At level `L` there are `(N/2^L)²` images of `2^L` points per
//! searched axis.
//!
//! The incoherent sum of the level-`L_d` images is the detection matrix;
//! its local maxima are refined by developing only a small window of the
//! pyramid up to full resolution.

use std::ops::Range;
use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array4, Axis, Zip};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backproj::{argmax4, Kernel, ReflectivityImage};
use crate::echo::RangeProfile;
use crate::error::{Error, Result};
use crate::geometry::{moving_range, Acquisition, GridPoint, ImagingGrid, Point3};
use crate::pattern::AntennaPattern;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Separable linear interpolation, clamped at the grid ends.
    Multilinear,
    /// Re-evaluate each child's partial sum at the fine points. Slow; used to
    /// check everything except the interpolation itself.
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlddConfig {
    /// Base block size `N_c`.
    pub nc: usize,
    /// Detection level `L_d`.
    pub ld: u32,
    pub interpolation: Interpolation,
    /// Detection threshold `μ + κσ` of the detection matrix.
    pub kappa: f64,
    /// Refinement window width in coarse cells (odd).
    pub window: usize,
}

impl MlddConfig {
    pub fn new(nc: usize, ld: u32) -> Self {
        MlddConfig {
            nc,
            ld,
            interpolation: Interpolation::Multilinear,
            kappa: 5.0,
            window: 3,
        }
    }

    /// Full-resolution configuration (`L_d = log₂ N`).
    pub fn full(nc: usize, n: usize) -> Self {
        Self::new(nc, n.trailing_zeros())
    }

    pub fn base_level(&self) -> u32 {
        self.nc.trailing_zeros()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.nc < 2 || !self.nc.is_power_of_two() || !n.is_multiple_of(self.nc) {
            return Err(Error::Divisibility { block: self.nc, n });
        }
        let (l1, lmax) = (self.base_level(), n.trailing_zeros());
        if self.ld < l1 || self.ld > lmax {
            return Err(Error::InvalidConfig(format!(
                "detection level {} outside [{l1}, {lmax}]",
                self.ld
            )));
        }
        if self.window == 0 || self.window.is_multiple_of(2) {
            return Err(Error::InvalidConfig("window must be odd".into()));
        }
        Ok(())
    }
}

/// Averages of the data block `(p, q)`: frequency block `p`, pulse block `q`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubdomainMeta {
    pub p: usize,
    pub q: usize,
    pub mean_wavenumber: f64,
    pub mean_antenna: Point3,
    pub mean_time: f64,
    pub freqs: Range<usize>,
    pub pulses: Range<usize>,
}

impl SubdomainMeta {
    pub fn from_samples(acq: &Acquisition, p: usize, q: usize, size: usize) -> Self {
        let freqs = p * size..(p + 1) * size;
        let pulses = q * size..(q + 1) * size;
        let m = size as f64;
        let mean_wavenumber = acq.wavenumbers[freqs.clone()].iter().sum::<f64>() / m;
        let mut mean_antenna = [0.0; 3];
        for a in &acq.antenna[pulses.clone()] {
            for k in 0..3 {
                mean_antenna[k] += a[k] / m;
            }
        }
        let mean_time = acq.times[pulses.clone()].iter().sum::<f64>() / m;
        SubdomainMeta {
            p,
            q,
            mean_wavenumber,
            mean_antenna,
            mean_time,
            freqs,
            pulses,
        }
    }

    /// Parent of four children: averages of the child averages.
    fn merge(children: [&SubdomainMeta; 4]) -> Self {
        let mean = |f: &dyn Fn(&SubdomainMeta) -> f64| children.iter().map(|c| f(c)).sum::<f64>() / 4.0;
        SubdomainMeta {
            p: children[0].p / 2,
            q: children[0].q / 2,
            mean_wavenumber: mean(&|c| c.mean_wavenumber),
            mean_antenna: [0, 1, 2].map(|k| mean(&|c| c.mean_antenna[k])),
            mean_time: mean(&|c| c.mean_time),
            freqs: children.iter().map(|c| c.freqs.start).min().unwrap()
                ..children.iter().map(|c| c.freqs.end).max().unwrap(),
            pulses: children.iter().map(|c| c.pulses.start).min().unwrap()
                ..children.iter().map(|c| c.pulses.end).max().unwrap(),
        }
    }

    /// `exp(j2k̄|r + v t̄ − r̄^a|)`.
    #[inline]
    pub fn phase_ref_at(&self, p: &GridPoint) -> Complex64 {
        Complex64::cis(2.0 * self.mean_wavenumber * moving_range(p.r, p.v, self.mean_time, self.mean_antenna))
    }
}

/// Split a profile into `(N/N_c)²` blocks, ordered `p`-major.
pub fn partition(profile: &RangeProfile, nc: usize) -> Result<Vec<(ndarray::Array2<Complex64>, SubdomainMeta)>> {
    let n = profile.n();
    if nc == 0 || !n.is_multiple_of(nc) {
        return Err(Error::Divisibility { block: nc, n });
    }
    let acq = Acquisition::new(&profile.radar);
    let nb = n / nc;
    let mut out = Vec::with_capacity(nb * nb);
    for p in 0..nb {
        for q in 0..nb {
            let meta = SubdomainMeta::from_samples(&acq, p, q, nc);
            let block = profile
                .values
                .slice(ndarray::s![meta.freqs.clone(), meta.pulses.clone()])
                .to_owned();
            out.push((block, meta));
        }
    }
    Ok(out)
}

/// Contiguous index range of one axis at some level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: usize,
    pub len: usize,
}

impl Window {
    pub fn full(len: usize) -> Self {
        Window { start: 0, len }
    }

    pub fn end(&self) -> usize {
        self.start + self.len
    }

    /// Fine-level window covering this one; one extra point when the
    /// window reaches the end of an axis of `axis_len` points.
    pub fn refine(&self, axis_len: usize) -> Self {
        Window {
            start: 2 * self.start,
            len: 2 * self.len - 1 + usize::from(self.end() == axis_len),
        }
    }

    /// For each fine point, the coarse pair it averages (equal when copied).
    fn plan(&self, axis_len: usize) -> Vec<(usize, usize)> {
        let fine = self.refine(axis_len);
        (fine.start..fine.end())
            .map(|f| {
                let c0 = f / 2;
                let c1 = if f % 2 == 0 { c0 } else { (c0 + 1).min(axis_len - 1) };
                (c0 - self.start, c1 - self.start)
            })
            .collect()
    }
}

/// Partial image `g̃_pq^L` of one data block.
#[derive(Clone, Debug, PartialEq)]
pub struct CoarseImage {
    pub level: u32,
    pub meta: SubdomainMeta,
    pub values: Array4<Complex64>,
}

/// All images of one pyramid level, restricted to a common window.
#[derive(Clone, Debug, PartialEq)]
pub struct Level {
    pub level: u32,
    pub window: [Window; 4],
    /// Blocks per data axis, `N/2^L`.
    pub blocks: usize,
    /// Indexed `p·blocks + q`.
    pub images: Vec<CoarseImage>,
}

impl Level {
    /// Coherent sum of all images.
    pub fn coherent_sum(&self) -> Array4<Complex64> {
        let mut sum = Array4::zeros(self.images[0].values.dim());
        for img in &self.images {
            sum += &img.values;
        }
        sum
    }

    pub fn cells(&self) -> usize {
        self.images.iter().map(|i| i.values.len()).sum()
    }
}

/// `D = Σ_pq |g̃_pq^{L_d}|`.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectionMatrix {
    pub values: Array4<f64>,
    pub level: u32,
    pub window: [Window; 4],
}

impl DetectionMatrix {
    pub fn from_level(level: &Level) -> Self {
        let mut values = Array4::zeros(level.images[0].values.dim());
        for img in &level.images {
            Zip::from(&mut values)
                .and(&img.values)
                .for_each(|d, z| *d += z.norm());
        }
        DetectionMatrix {
            values,
            level: level.level,
            window: level.window,
        }
    }

    /// Absolute level index of a window-relative index.
    pub fn absolute(&self, rel: [usize; 4]) -> [usize; 4] {
        [0, 1, 2, 3].map(|k| rel[k] + self.window[k].start)
    }

    pub fn at(&self, abs: [usize; 4]) -> f64 {
        self.values[[0, 1, 2, 3].map(|k| abs[k] - self.window[k].start)]
    }

    pub fn mean_std(&self) -> (f64, f64) {
        let n = self.values.len() as f64;
        let mean = self.values.sum() / n;
        let var = self.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    }
}

/// A local maximum of the detection matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoarseDetection {
    pub level: u32,
    pub index: [usize; 4],
    pub value: f64,
}

/// Cells strictly above their axis neighbours and above `μ + κσ`, strongest
/// first (ties: lowest linear index).
pub fn find_local_maxima(d: &DetectionMatrix, kappa: f64) -> Vec<CoarseDetection> {
    let (mean, std) = d.mean_std();
    let threshold = mean + kappa * std;
    let shape = d.values.dim();
    let shape = [shape.0, shape.1, shape.2, shape.3];
    let mut out = Vec::new();
    for (idx, &v) in d.values.indexed_iter() {
        let idx = [idx.0, idx.1, idx.2, idx.3];
        if v <= threshold {
            continue;
        }
        let mut is_max = true;
        'axes: for k in 0..4 {
            for step in [-1isize, 1] {
                let j = idx[k] as isize + step;
                if j < 0 || j as usize >= shape[k] {
                    continue;
                }
                let mut nb = idx;
                nb[k] = j as usize;
                if d.values[nb] >= v {
                    is_max = false;
                    break 'axes;
                }
            }
        }
        if is_max {
            out.push(CoarseDetection {
                level: d.level,
                index: d.absolute(idx),
                value: v,
            });
        }
    }
    out.sort_by(|a, b| b.value.total_cmp(&a.value));
    out
}

/// A detection developed to full resolution inside its window.
#[derive(Clone, Debug, PartialEq)]
pub struct RefinedDetection {
    pub coarse: CoarseDetection,
    /// Index on the full-resolution grid.
    pub index: [usize; 4],
    pub point: GridPoint,
    pub value: Complex64,
    /// Window argmax at each level from `L_d` to `L_max`.
    pub history: Vec<(u32, GridPoint)>,
}

/// Detection matrix and the level-`L_d` images it came from.
#[derive(Clone, Debug)]
pub struct MlddOutput {
    pub detection: DetectionMatrix,
    pub level: Level,
}

/// Largest `N` for which a full-resolution 4-D image is formed.
pub const FULL_4D_MAX_N: usize = 64;

/// One MLDD problem: data, geometry, grid and configuration.
pub struct Pyramid<'a> {
    kernel: Kernel<'a>,
    grid: ImagingGrid,
    n: usize,
    cfg: MlddConfig,
    cells: AtomicU64,
}

impl<'a> Pyramid<'a> {
    pub fn new(
        profile: &RangeProfile,
        acq: &'a Acquisition,
        pattern: &'a dyn AntennaPattern,
        grid: ImagingGrid,
        cfg: MlddConfig,
    ) -> Result<Self> {
        let n = profile.n();
        cfg.validate(n)?;
        Ok(Pyramid {
            kernel: Kernel::new(profile, acq, pattern)?,
            grid,
            n,
            cfg,
            cells: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &MlddConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &ImagingGrid {
        &self.grid
    }

    pub fn max_level(&self) -> u32 {
        self.n.trailing_zeros()
    }

    /// Grid cells produced so far (base evaluations plus aggregated cells).
    pub fn cells_evaluated(&self) -> u64 {
        self.cells.load(Ordering::Relaxed)
    }

    fn full_window(&self, level: u32) -> [Window; 4] {
        self.grid.shape(level).map(Window::full)
    }

    fn count(&self, cells: usize) {
        self.cells.fetch_add(cells as u64, Ordering::Relaxed);
    }

    /// Evaluate `f` at every window point of `level`.
    fn tabulate(
        &self,
        level: u32,
        window: &[Window; 4],
        f: impl Fn(&GridPoint) -> Complex64 + Sync,
    ) -> Array4<Complex64> {
        let shape = window.map(|w| w.len);
        let mut out = Array4::zeros(shape);
        Zip::indexed(&mut out).for_each(|(a, b, c, d), z| {
            let idx = [a + window[0].start, b + window[1].start, c + window[2].start, d + window[3].start];
            *z = f(&self.grid.point(level, idx));
        });
        out
    }

    /// Phase reference of `meta` on the window of `level`.
    pub fn phase_ref(&self, meta: &SubdomainMeta, level: u32, window: &[Window; 4]) -> Array4<Complex64> {
        self.tabulate(level, window, |p| meta.phase_ref_at(p))
    }

    /// Direct partial backprojection of every block on the level-`L_1` grid.
    pub fn base(&self) -> Level {
        let level = self.cfg.base_level();
        let window = self.full_window(level);
        let nb = self.n / self.cfg.nc;
        let acq = self.kernel.acquisition();
        let images: Vec<CoarseImage> = (0..nb * nb)
            .into_par_iter()
            .map(|k| {
                let meta = SubdomainMeta::from_samples(acq, k / nb, k % nb, self.cfg.nc);
                let values = self.tabulate(level, &window, |p| {
                    self.kernel.partial(meta.freqs.clone(), meta.pulses.clone(), p)
                });
                CoarseImage { level, meta, values }
            })
            .collect();
        let out = Level {
            level,
            window,
            blocks: nb,
            images,
        };
        self.count(out.cells());
        out
    }

    /// Merge each 2×2 group of blocks into one image on the next level.
    pub fn aggregate(&self, child: &Level) -> Result<Level> {
        if child.blocks < 2 || child.images.len() != child.blocks * child.blocks {
            return Err(Error::ShapeMismatch(format!(
                "cannot aggregate level {} with {} blocks",
                child.level, child.blocks
            )));
        }
        let level = child.level + 1;
        let coarse_shape = self.grid.shape(child.level);
        let window: [Window; 4] = [0, 1, 2, 3].map(|k| {
            if self.grid.axes[k].is_dyadic() {
                child.window[k].refine(coarse_shape[k])
            } else {
                child.window[k]
            }
        });
        let nb = child.blocks / 2;
        let images: Vec<CoarseImage> = (0..nb * nb)
            .into_par_iter()
            .map(|k| {
                let (p, q) = (k / nb, k % nb);
                let kids = [(0, 0), (0, 1), (1, 0), (1, 1)]
                    .map(|(a, b)| &child.images[(2 * p + a) * child.blocks + 2 * q + b]);
                let mut values = Array4::zeros(window.map(|w| w.len));
                for c in kids {
                    self.add_child(&mut values, c, child, level, &window);
                }
                CoarseImage {
                    level,
                    meta: SubdomainMeta::merge(kids.map(|c| &c.meta)),
                    values,
                }
            })
            .collect();
        let out = Level {
            level,
            window,
            blocks: nb,
            images,
        };
        self.count(out.cells());
        Ok(out)
    }

    fn add_child(
        &self,
        parent: &mut Array4<Complex64>,
        c: &CoarseImage,
        child: &Level,
        level: u32,
        window: &[Window; 4],
    ) {
        let meta = &c.meta;
        match self.cfg.interpolation {
            Interpolation::Multilinear => {
                let demod = &c.values * &self.phase_ref(meta, child.level, &child.window).mapv(|e| e.conj());
                let up = interpolate(&demod, &self.grid, child.level, &child.window);
                Zip::indexed(parent).and(&up).for_each(|(a, b, cc, d), z, u| {
                    let idx = [a + window[0].start, b + window[1].start, cc + window[2].start, d + window[3].start];
                    *z += meta.phase_ref_at(&self.grid.point(level, idx)) * u;
                });
            }
            Interpolation::Exact => {
                Zip::indexed(parent).for_each(|(a, b, cc, d), z| {
                    let idx = [a + window[0].start, b + window[1].start, cc + window[2].start, d + window[3].start];
                    let pt = self.grid.point(level, idx);
                    let e = meta.phase_ref_at(&pt);
                    let demod = e.conj() * self.kernel.partial(meta.freqs.clone(), meta.pulses.clone(), &pt);
                    *z += e * demod;
                });
            }
        }
    }

    /// Aggregate until `to`, calling `visit` on every level reached
    /// (including the starting one).
    pub fn develop(&self, mut level: Level, to: u32, mut visit: impl FnMut(&Level)) -> Result<Level> {
        visit(&level);
        while level.level < to {
            level = self.aggregate(&level)?;
            visit(&level);
        }
        Ok(level)
    }

    /// Restrict every image of `level` to `window`.
    pub fn crop(&self, level: &Level, window: [Window; 4]) -> Level {
        let images = level
            .images
            .iter()
            .map(|img| {
                let s = [0, 1, 2, 3].map(|k| {
                    let from = window[k].start - level.window[k].start;
                    from..from + window[k].len
                });
                CoarseImage {
                    level: img.level,
                    meta: img.meta.clone(),
                    values: img
                        .values
                        .slice(ndarray::s![s[0].clone(), s[1].clone(), s[2].clone(), s[3].clone()])
                        .to_owned(),
                }
            })
            .collect();
        Level {
            level: level.level,
            window,
            blocks: level.blocks,
            images,
        }
    }

    /// Base images developed to `L_d` and their detection matrix.
    pub fn run(&self) -> Result<MlddOutput> {
        let level = self.develop(self.base(), self.cfg.ld, |_| {})?;
        Ok(MlddOutput {
            detection: DetectionMatrix::from_level(&level),
            level,
        })
    }

    /// The full-resolution image `g̃_11^{L_max}`.
    pub fn full_image(&self) -> Result<ReflectivityImage> {
        if self.grid.dims() == 4 && self.n > FULL_4D_MAX_N {
            let cells = self.n.pow(4);
            return Err(Error::OutputTooLarge {
                cells,
                limit: FULL_4D_MAX_N.pow(4),
            });
        }
        let lmax = self.max_level();
        let level = self.develop(self.base(), lmax, |_| {})?;
        Ok(ReflectivityImage {
            values: level.coherent_sum(),
            grid: self.grid,
            level: lmax,
        })
    }

    /// Develop the window of `window` coarse cells around `det` to full
    /// resolution and take the argmax there.
    pub fn upgrade(&self, at_ld: &Level, det: &CoarseDetection) -> Result<RefinedDetection> {
        let half = self.cfg.window / 2;
        let shape = self.grid.shape(at_ld.level);
        let window: [Window; 4] = [0, 1, 2, 3].map(|k| {
            let lo = det.index[k].saturating_sub(half).max(at_ld.window[k].start);
            let hi = (det.index[k] + half)
                .min(shape[k] - 1)
                .min(at_ld.window[k].end() - 1);
            Window {
                start: lo,
                len: hi + 1 - lo,
            }
        });
        let mut history = Vec::new();
        let mut last = None;
        let level = self.develop(self.crop(at_ld, window), self.max_level(), |lvl| {
            let d = DetectionMatrix::from_level(lvl);
            let idx = d.absolute(argmax4(&d.values));
            history.push((lvl.level, self.grid.point(lvl.level, idx)));
            last = Some(idx);
        })?;
        let index = last.expect("at least one level");
        let sum = level.coherent_sum();
        let rel = [0, 1, 2, 3].map(|k| index[k] - level.window[k].start);
        Ok(RefinedDetection {
            coarse: *det,
            index,
            point: self.grid.point(level.level, index),
            value: sum[rel],
            history,
        })
    }
}

/// Multilinear interpolation of a demodulated image on `window` of `level`
/// onto the refined window of `level + 1`. Fixed axes are left alone.
pub fn interpolate(demod: &Array4<Complex64>, grid: &ImagingGrid, level: u32, window: &[Window; 4]) -> Array4<Complex64> {
    let shape = grid.shape(level);
    let mut up = demod.clone();
    for k in 0..4 {
        if grid.axes[k].is_dyadic() {
            up = upsample_axis(&up, k, &window[k].plan(shape[k]));
        }
    }
    up
}

/// Resample `a` along `axis`: output point `f` averages input points
/// `plan[f]`.
fn upsample_axis(a: &Array4<Complex64>, axis: usize, plan: &[(usize, usize)]) -> Array4<Complex64> {
    let mut shape = {
        let d = a.dim();
        [d.0, d.1, d.2, d.3]
    };
    shape[axis] = plan.len();
    let mut out = Array4::zeros(shape);
    for (f, &(c0, c1)) in plan.iter().enumerate() {
        let mut dst = out.index_axis_mut(Axis(axis), f);
        let x0 = a.index_axis(Axis(axis), c0);
        if c0 == c1 {
            dst.assign(&x0);
        } else {
            let x1 = a.index_axis(Axis(axis), c1);
            Zip::from(&mut dst)
                .and(&x0)
                .and(&x1)
                .for_each(|d, &u, &v| *d = (u + v) * 0.5);
        }
    }
    out
}

/// Static image by 2-D MLDD over the spatial axes of `grid`.
pub fn static_image(
    profile: &RangeProfile,
    acq: &Acquisition,
    pattern: &dyn AntennaPattern,
    grid: &ImagingGrid,
    nc: usize,
) -> Result<ReflectivityImage> {
    let grid = crate::backproj::static_grid(grid);
    Pyramid::new(profile, acq, pattern, grid, MlddConfig::full(nc, profile.n()))?.full_image()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backproj::{direct_dynamic, direct_static};
    use crate::echo::simulate_targets;
    use crate::geometry::{GridAxis, GridSpec, RadarConfig};
    use crate::pattern::Isotropic;
    use crate::scene::PointTarget;
    use proptest::prelude::*;

    fn profile(n: usize, targets: &[PointTarget]) -> RangeProfile {
        let radar = RadarConfig::demo(n);
        simulate_targets(targets, &radar, &Acquisition::new(&radar), &Isotropic)
    }

    fn unit(pos: [f64; 2], vel: [f64; 2]) -> PointTarget {
        PointTarget {
            position: pos,
            velocity: vel,
            amplitude: 1.0,
            phase: 0.3,
        }
    }

    fn rel_rms(a: &Array4<Complex64>, b: &Array4<Complex64>) -> f64 {
        let num: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm_sqr()).sum();
        let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
        (num / den).sqrt()
    }

    #[test]
    fn config_validation() {
        assert!(MlddConfig::new(4, 3).validate(16).is_ok());
        assert!(matches!(MlddConfig::new(3, 3).validate(16), Err(Error::Divisibility { .. })));
        assert!(MlddConfig::new(8, 2).validate(16).is_err());
        assert!(MlddConfig::new(4, 5).validate(16).is_err());
    }

    #[test]
    fn partition_counts_and_means() {
        let p = profile(16, &[unit([3.0, 1.0], [0.0; 2])]);
        let blocks = partition(&p, 4).unwrap();
        assert_eq!(blocks.len(), 16);
        assert!(blocks.iter().all(|(b, _)| b.dim() == (4, 4)));
        let one = partition(&p, 16).unwrap();
        assert_eq!(one.len(), 1);
        let acq = Acquisition::new(&p.radar);
        let k_mean = acq.wavenumbers.iter().sum::<f64>() / 16.0;
        assert!((one[0].1.mean_wavenumber - k_mean).abs() < 1e-12);
        assert!(matches!(partition(&p, 5), Err(Error::Divisibility { .. })));
    }

    #[test]
    fn partition_reconstructs_profile() {
        let p = profile(16, &[unit([3.0, 1.0], [0.1, 0.0])]);
        let mut rebuilt = ndarray::Array2::zeros((16, 16));
        for (block, meta) in partition(&p, 4).unwrap() {
            rebuilt
                .slice_mut(ndarray::s![meta.freqs.clone(), meta.pulses.clone()])
                .assign(&block);
        }
        assert_eq!(rebuilt, p.values);
    }

    #[test]
    fn window_refinement() {
        assert_eq!(Window::full(4).refine(4), Window::full(8));
        assert_eq!(Window { start: 1, len: 3 }.refine(8), Window { start: 2, len: 5 });
        assert_eq!(Window { start: 5, len: 3 }.refine(8), Window { start: 10, len: 6 });
        assert_eq!(Window::full(4).plan(4), vec![(0, 0), (0, 1), (1, 1), (1, 2), (2, 2), (2, 3), (3, 3), (3, 3)]);
    }

    #[test]
    fn constant_field_stays_constant() {
        let c = Complex64::new(0.7, -1.3);
        let a = Array4::from_elem((4, 4, 1, 1), c);
        let plan = Window::full(4).plan(4);
        let up = upsample_axis(&upsample_axis(&a, 0, &plan), 1, &plan);
        assert_eq!(up.dim(), (8, 8, 1, 1));
        assert!(up.iter().all(|z| (z - c).norm() < 1e-15));
    }

    #[test]
    fn bilinear_field_is_reproduced() {
        let f = |x: f64, y: f64| Complex64::new(1.0 + 2.0 * x - 0.5 * y + 0.25 * x * y, x - y);
        let coarse = Array4::from_shape_fn((4, 4, 1, 1), |(i, j, _, _)| f(2.0 * i as f64, 2.0 * j as f64));
        let plan = Window::full(4).plan(4);
        let up = upsample_axis(&upsample_axis(&coarse, 0, &plan), 1, &plan);
        // the last fine point lies outside the coarse hull and is clamped
        for i in 0..7 {
            for j in 0..7 {
                assert!((up[[i, j, 0, 0]] - f(i as f64, j as f64)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn phase_reference_is_unit_modulus_and_nested() {
        let p = profile(16, &[]);
        let acq = Acquisition::new(&p.radar);
        let grid = GridSpec::for_radar(&p.radar).four_d(16);
        let pyr = Pyramid::new(&p, &acq, &Isotropic, grid, MlddConfig::new(4, 4)).unwrap();
        let meta = SubdomainMeta::from_samples(&acq, 1, 2, 4);
        let e3 = pyr.phase_ref(&meta, 3, &pyr.full_window(3));
        let e2 = pyr.phase_ref(&meta, 2, &pyr.full_window(2));
        assert!(e3.iter().all(|e| (e.norm() - 1.0).abs() < 1e-14));
        for ((a, b, c, d), z) in e2.indexed_iter() {
            assert_eq!(*z, e3[[2 * a, 2 * b, 2 * c, 2 * d]]);
        }
        let x = Complex64::new(2.0, -3.0);
        assert!(e3.iter().all(|e| (e * e.conj() * x - x).norm() < 1e-14));
    }

    #[test]
    fn phase_reference_at_center() {
        let radar = RadarConfig {
            aperture: 2.0 * std::f64::consts::PI,
            theta_start: 0.0,
            ..RadarConfig::demo(16)
        };
        let acq = Acquisition {
            antenna: vec![[200.0, 0.0, 200.0]; 16],
            ..Acquisition::new(&radar)
        };
        let meta = SubdomainMeta::from_samples(&acq, 0, 0, 16);
        let e = meta.phase_ref_at(&GridPoint { r: [0.0; 2], v: [0.0; 2] });
        let expect = Complex64::cis(2.0 * meta.mean_wavenumber * 80_000f64.sqrt());
        assert!((e - expect).norm() < 1e-12);
    }

    #[test]
    fn full_4d_image_is_refused_beyond_the_cap() {
        let p = profile(128, &[]);
        let acq = Acquisition::new(&p.radar);
        let grid = GridSpec::for_radar(&p.radar).four_d(128);
        let pyr = Pyramid::new(&p, &acq, &Isotropic, grid, MlddConfig::full(4, 128)).unwrap();
        assert!(matches!(pyr.full_image(), Err(Error::OutputTooLarge { .. })));
    }

    #[test]
    fn zero_data_gives_zero_pyramid() {
        let p = profile(16, &[]);
        let acq = Acquisition::new(&p.radar);
        let grid = GridSpec::for_radar(&p.radar).spatial(16);
        let pyr = Pyramid::new(&p, &acq, &Isotropic, grid, MlddConfig::full(4, 16)).unwrap();
        assert_eq!(pyr.full_image().unwrap().peak(), 0.0);
    }

    #[test]
    fn single_block_is_direct_backprojection() {
        let p = profile(8, &[unit([2.0, -1.0], [-0.16, 0.0])]);
        let acq = Acquisition::new(&p.radar);
        let grid = GridSpec::for_radar(&p.radar).four_d(8);
        let pyr = Pyramid::new(&p, &acq, &Isotropic, grid, MlddConfig::full(8, 8)).unwrap();
        let img = pyr.full_image().unwrap();
        let direct = direct_dynamic(&p, &grid, 3, &Isotropic).unwrap();
        assert!(rel_rms(&img.values, &direct.values) < 1e-12);
    }

    #[test]
    fn base_images_sum_to_direct_on_coarse_grid() {
        let p = profile(16, &[unit([6.0, 2.0], [0.0; 2]), unit([-4.0, 0.0], [0.16, 0.0])]);
        let acq = Acquisition::new(&p.radar);
        let grid = GridSpec::for_radar(&p.radar).four_d(16);
        let pyr = Pyramid::new(&p, &acq, &Isotropic, grid, MlddConfig::new(4, 2)).unwrap();
        let base = pyr.base();
        assert_eq!(base.images.len(), 16);
        let direct = direct_dynamic(&p, &grid, 2, &Isotropic).unwrap();
        let err = rel_rms(&base.coherent_sum(), &direct.values);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn level_image_counts() {
        let p = profile(32, &[]);
        let acq = Acquisition::new(&p.radar);
        let grid = GridSpec::for_radar(&p.radar).spatial(32);
        let pyr = Pyramid::new(&p, &acq, &Isotropic, grid, MlddConfig::full(4, 32)).unwrap();
        pyr.develop(pyr.base(), 5, |lvl| {
            assert_eq!(lvl.images.len(), (32 >> lvl.level) * (32 >> lvl.level));
            assert!(lvl.images.iter().all(|i| i.values.len() == 1 << (2 * lvl.level)));
        })
        .unwrap();
    }

    #[test]
    fn exact_mode_matches_direct_static() {
        let p = profile(16, &[unit([5.0, -7.0], [0.0; 2])]);
        let acq = Acquisition::new(&p.radar);
        let grid = GridSpec::for_radar(&p.radar).spatial(16);
        let cfg = MlddConfig {
            interpolation: Interpolation::Exact,
            ..MlddConfig::full(4, 16)
        };
        let img = Pyramid::new(&p, &acq, &Isotropic, grid, cfg).unwrap().full_image().unwrap();
        let direct = direct_static(&p, &grid, 4, &Isotropic).unwrap();
        assert!(rel_rms(&img.values, &direct.values) < 1e-10);
    }

    #[test]
    fn static_mldd_matches_direct_peak() {
        let p = profile(16, &[unit([3.0, 5.0], [0.0; 2])]);
        let acq = Acquisition::new(&p.radar);
        let grid = GridSpec::for_radar(&p.radar).spatial(16);
        let img = static_image(&p, &acq, &Isotropic, &grid, 4).unwrap();
        let direct = direct_static(&p, &grid, 4, &Isotropic).unwrap();
        assert_eq!(img.argmax(), direct.argmax());
        let db = 20.0 * (img.peak() / direct.peak()).log10();
        assert!(db.abs() < 1.0, "{db} dB");
    }

    #[test]
    fn develop_one_level_is_close_to_direct() {
        let p = profile(16, &[unit([2.0, 3.0], [0.0; 2])]);
        let acq = Acquisition::new(&p.radar);
        let grid = GridSpec::for_radar(&p.radar).spatial(16);
        let img = static_image(&p, &acq, &Isotropic, &grid, 8).unwrap();
        let direct = direct_static(&p, &grid, 4, &Isotropic).unwrap();
        let err = rel_rms(&img.values, &direct.values);
        assert!(err < 0.05, "relative RMS {err}");
    }

    #[test]
    fn detection_matrix_bounds_coherent_sum() {
        let p = profile(16, &[unit([2.0, 3.0], [0.0; 2]), unit([-6.0, 1.0], [0.0; 2])]);
        let acq = Acquisition::new(&p.radar);
        let grid = GridSpec::for_radar(&p.radar).spatial(16);
        let pyr = Pyramid::new(&p, &acq, &Isotropic, grid, MlddConfig::new(4, 3)).unwrap();
        let out = pyr.run().unwrap();
        let sum = out.level.coherent_sum();
        for (d, z) in out.detection.values.iter().zip(sum.iter()) {
            assert!(*d + 1e-9 * d.abs() >= z.norm());
        }
        let single = Level {
            images: vec![out.level.images[0].clone()],
            blocks: 1,
            ..out.level.clone()
        };
        let d1 = DetectionMatrix::from_level(&single);
        assert!(d1.values.iter().zip(single.images[0].values.iter()).all(|(d, z)| *d == z.norm()));
    }

    fn synthetic(values: Array4<f64>) -> DetectionMatrix {
        let d = values.dim();
        DetectionMatrix {
            window: [d.0, d.1, d.2, d.3].map(Window::full),
            values,
            level: 3,
        }
    }

    #[test]
    fn constant_detection_matrix_has_no_maxima() {
        assert!(find_local_maxima(&synthetic(Array4::from_elem((8, 8, 1, 1), 2.0)), 0.0).is_empty());
    }

    #[test]
    fn single_peak_is_found() {
        let mut v = Array4::from_elem((8, 8, 1, 1), 1.0);
        v[[5, 2, 0, 0]] = 100.0;
        let found = find_local_maxima(&synthetic(v), 5.0);
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].index, [5, 2, 0, 0]);
    }

    #[test]
    fn maxima_are_sorted() {
        let mut v = Array4::from_elem((16, 16, 1, 1), 1.0);
        v[[1, 1, 0, 0]] = 50.0;
        v[[9, 3, 0, 0]] = 80.0;
        v[[12, 12, 0, 0]] = 65.0;
        let found = find_local_maxima(&synthetic(v), 2.0);
        let values: Vec<f64> = found.iter().map(|d| d.value).collect();
        assert_eq!(values, vec![80.0, 65.0, 50.0]);
    }

    #[test]
    fn on_node_target_keeps_its_coarse_cell() {
        let n = 16;
        let p = profile(n, &[unit([4.0, -4.0], [0.0; 2])]);
        let acq = Acquisition::new(&p.radar);
        let grid = GridSpec::for_radar(&p.radar).spatial(n);
        let pyr = Pyramid::new(&p, &acq, &Isotropic, grid, MlddConfig::new(4, 2)).unwrap();
        let out = pyr.run().unwrap();
        let det = find_local_maxima(&out.detection, 1.0)[0];
        let coarse = grid.point(2, det.index);
        assert_eq!(coarse.r, [4.0, -4.0]);
        let refined = pyr.upgrade(&out.level, &det).unwrap();
        assert_eq!(refined.point.r, coarse.r);
        assert_eq!(refined.history.len(), 3);
    }

    #[test]
    fn off_node_target_refines_within_a_cell() {
        let n = 32;
        let truth = [5.0, -9.0];
        let p = profile(n, &[unit(truth, [0.0; 2])]);
        let acq = Acquisition::new(&p.radar);
        let grid = GridSpec::for_radar(&p.radar).spatial(n);
        let pyr = Pyramid::new(&p, &acq, &Isotropic, grid, MlddConfig::new(4, 3)).unwrap();
        let out = pyr.run().unwrap();
        let det = find_local_maxima(&out.detection, 1.0)[0];
        let refined = pyr.upgrade(&out.level, &det).unwrap();
        let cell = grid.axes[0].spacing(5);
        assert!((refined.point.r[0] - truth[0]).abs() < cell);
        assert!((refined.point.r[1] - truth[1]).abs() < cell);
    }

    #[test]
    fn road_grid_runs_in_two_dimensions() {
        let n = 16;
        let p = profile(n, &[unit([0.0, 0.0], [0.16, 0.0])]);
        let acq = Acquisition::new(&p.radar);
        let grid = ImagingGrid::road(0.0, 32.0, 0.0, 0.64);
        assert_eq!(grid.dims(), 2);
        assert!(matches!(grid.axes[1], GridAxis::Fixed(_)));
        let pyr = Pyramid::new(&p, &acq, &Isotropic, grid, MlddConfig::full(4, n)).unwrap();
        let img = pyr.full_image().unwrap();
        assert_eq!(img.values.dim(), (16, 1, 16, 1));
        let pt = img.point(img.argmax());
        assert_eq!(pt.v[0], 0.16);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn interpolation_is_multilinear_exact(
            c in proptest::array::uniform4(-5.0f64..5.0),
            start in 0usize..6,
            len in 2usize..4,
        ) {
            let len = len.min(8 - start);
            prop_assume!(len >= 2);
            let f = |x: f64, y: f64| c[0] + c[1] * x + c[2] * y + c[3] * x * y;
            let w = Window { start, len };
            let coarse = Array4::from_shape_fn((len, len, 1, 1), |(i, j, _, _)| {
                Complex64::new(f(2.0 * (i + start) as f64, 2.0 * (j + start) as f64), 0.0)
            });
            let plan = w.plan(8);
            let up = upsample_axis(&upsample_axis(&coarse, 0, &plan), 1, &plan);
            let fine = w.refine(8);
            let last = 2 * (start + len - 1);
            for (i, fi) in (fine.start..fine.end()).enumerate() {
                for (j, fj) in (fine.start..fine.end()).enumerate() {
                    if fi <= last && fj <= last {
                        prop_assert!((up[[i, j, 0, 0]].re - f(fi as f64, fj as f64)).abs() < 1e-9);
                    }
                }
            }
        }
    }
}
