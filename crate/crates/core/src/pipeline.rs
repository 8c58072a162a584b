//! End-to-end procedure: static image, road extraction, per-road 2-D
//! detection with resolution upgrade, cleaning of movers from the data and
//! the final annotated image.

use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backproj::ReflectivityImage;
use crate::echo::{target_signature, RangeProfile};
use crate::error::{Error, Result};
use crate::geometry::{Acquisition, GridPoint, GridSpec, ImagingGrid, Point2, RoadFrame};
use crate::mldd::{find_local_maxima, static_image, Interpolation, MlddConfig, Pyramid};
use crate::pattern::AntennaPattern;
use crate::raster::{BinaryImage, GrayImage, Raster, RasterGeometry};
use crate::roaddet::{canonical_line, detect_roads, gaussian_blur, normalize, RoadLine, RoadParams};
use crate::scene::{PointTarget, SceneRoad};

/// 4-D detection grids above this many cells are refused.
pub const FALLBACK_CELL_LIMIT: usize = 1 << 24;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub nc: usize,
    /// Detection level of the road passes; `None` picks `L_max − 1`.
    pub road_level: Option<u32>,
    /// Detection level of the 4-D fallback; `None` picks `L_max/2 + 1`.
    pub fallback_level: Option<u32>,
    pub kappa: f64,
    pub window: usize,
    pub interpolation: Interpolation,
    pub roads: RoadParams,
    /// Despeckling blur before road extraction, in range resolutions.
    pub despeckle: f64,
    /// Dynamic range of the road-extraction image, dB.
    pub road_floor_db: f64,
    /// Roads known in advance; road extraction is skipped when set.
    pub known_roads: Option<Vec<RoadLine>>,
    /// Heading offsets, degrees, at which each extracted road is searched.
    /// Rotation is about the foot of the road's normal. Known roads are used
    /// as given.
    pub heading_offsets_deg: Vec<f64>,
    /// Fraction of its matched-filter score a candidate must keep after the
    /// stronger accepted detections are projected out of the data.
    pub retain: f64,
    /// Arrow length as a multiple of the distance travelled over the
    /// aperture, `|v|·N·Δt`.
    pub arrow_scale: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            nc: 4,
            road_level: None,
            fallback_level: None,
            kappa: 5.0,
            window: 3,
            interpolation: Interpolation::Multilinear,
            roads: RoadParams {
                pair_gap: 24.0,
                min_support_fraction: 0.35,
                ..RoadParams::default()
            },
            despeckle: 1.0,
            road_floor_db: 40.0,
            known_roads: None,
            heading_offsets_deg: vec![0.0, -1.25, 1.25],
            retain: 0.5,
            arrow_scale: 1.0,
        }
    }
}

impl PipelineConfig {
    pub fn road_level(&self, n: usize) -> u32 {
        let lmax = n.trailing_zeros();
        let base = self.nc.trailing_zeros();
        self.road_level.unwrap_or(lmax.saturating_sub(1).max(base))
    }

    pub fn fallback_level(&self, n: usize) -> u32 {
        let lmax = n.trailing_zeros();
        self.fallback_level.unwrap_or((lmax / 2 + 1).min(lmax))
    }

    fn mldd(&self, ld: u32) -> MlddConfig {
        MlddConfig {
            interpolation: self.interpolation,
            kappa: self.kappa,
            window: self.window,
            ..MlddConfig::new(self.nc, ld)
        }
    }
}

/// Everything a detection pass needs besides the data.
pub struct Context<'a> {
    pub acq: &'a Acquisition,
    pub pattern: &'a dyn AntennaPattern,
    pub grid: GridSpec,
    pub cfg: &'a PipelineConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub level: u32,
    pub position: Point2,
    pub velocity: Point2,
}

/// A detected target in world coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "DetectionRecord", from = "DetectionRecord")]
pub struct Detection {
    pub position: Point2,
    pub velocity: Point2,
    /// Least-squares complex amplitude of the target's signature.
    pub amplitude: Complex64,
    pub road_index: Option<usize>,
    /// Normalized matched-filter score `|⟨H, P⟩| / ‖H‖`.
    pub score: f64,
    /// Coarse-to-fine estimates from the resolution upgrade.
    pub level_history: Vec<Estimate>,
}

impl Detection {
    pub fn speed(&self) -> f64 {
        self.velocity[0].hypot(self.velocity[1])
    }

    pub fn amplitude_db(&self) -> f64 {
        20.0 * self.amplitude.norm().log10()
    }

    pub fn as_target(&self) -> PointTarget {
        PointTarget {
            position: self.position,
            velocity: self.velocity,
            amplitude: self.amplitude.norm(),
            phase: self.amplitude.arg(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct DetectionRecord {
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    amplitude_db: f64,
    amplitude: Complex64,
    road: Option<usize>,
    score: f64,
    history: Vec<Estimate>,
}

impl From<Detection> for DetectionRecord {
    fn from(d: Detection) -> Self {
        DetectionRecord {
            x: d.position[0],
            y: d.position[1],
            vx: d.velocity[0],
            vy: d.velocity[1],
            amplitude_db: d.amplitude_db(),
            amplitude: d.amplitude,
            road: d.road_index,
            score: d.score,
            history: d.level_history,
        }
    }
}

impl From<DetectionRecord> for Detection {
    fn from(r: DetectionRecord) -> Self {
        Detection {
            position: [r.x, r.y],
            velocity: [r.vx, r.vy],
            amplitude: r.amplitude,
            road_index: r.road,
            score: r.score,
            level_history: r.history,
        }
    }
}

/// Detection-matrix statistics of one pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassStats {
    pub road: Option<usize>,
    pub offset: f64,
    pub level: u32,
    pub mean: f64,
    pub std: f64,
    pub max: f64,
    pub maxima: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub n: usize,
    pub detections: Vec<Detection>,
    pub roads: Vec<RoadLine>,
    /// Road extraction failed and the 4-D search ran instead.
    pub fallback: bool,
    /// Indices into `detections` of the movers removed from the data.
    pub cleaned: Vec<usize>,
    pub timings: Vec<StageTiming>,
    pub passes: Vec<PassStats>,
    pub errors: Vec<String>,
    pub config: PipelineConfig,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn movers(&self) -> impl Iterator<Item = &Detection> {
        self.cleaned.iter().map(|&i| &self.detections[i])
    }
}

struct Stopwatch(Vec<StageTiming>);

impl Stopwatch {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.0.push(StageTiming {
            stage: stage.into(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }
}

/// Static image on the default spatial grid.
pub fn form_static_image(profile: &RangeProfile, ctx: &Context) -> Result<ReflectivityImage> {
    let n = profile.n();
    static_image(profile, ctx.acq, ctx.pattern, &ctx.grid.spatial(n), ctx.cfg.nc)
}

/// Magnitude of the `v = 0` slice, row 0 at the largest `y`.
pub fn image_raster(img: &ReflectivityImage) -> GrayImage {
    let [nx, ny, _, _] = img.grid.shape(img.level);
    let xs = img.grid.axes[0].coords(img.level);
    let ys = img.grid.axes[1].coords(img.level);
    let pitch = if nx > 1 { xs[1] - xs[0] } else { 1.0 };
    let geometry = RasterGeometry {
        pitch,
        origin: [xs[0], ys[ny - 1]],
    };
    Raster::from_fn(nx, ny, geometry, |col, row| img.values[[col, ny - 1 - row, 0, 0]].norm())
}

/// Despeckled, log-compressed and normalized intensity for road extraction.
pub fn road_image(img: &ReflectivityImage, range_resolution: f64, cfg: &PipelineConfig) -> GrayImage {
    let mag = image_raster(img);
    let sigma = cfg.despeckle * range_resolution / mag.geometry.pitch;
    let smooth = gaussian_blur(&mag.map(|m| m * m), sigma);
    let peak = smooth.data.iter().cloned().fold(0.0, f64::max);
    let floor = peak * 10f64.powf(-cfg.road_floor_db / 10.0);
    normalize(&smooth.map(|&p| 10.0 * p.max(floor).max(f64::MIN_POSITIVE).log10()))
}

/// Scene roads as road lines.
pub fn scene_roads(roads: &[SceneRoad]) -> Vec<RoadLine> {
    roads
        .iter()
        .map(|r| RoadLine {
            rho: r.rho,
            alpha: r.alpha,
            support: 0,
            width: r.width,
        })
        .collect()
}

/// The `(x, v_x)` grid of a road at cross offset `y_offset`. Both axes are
/// stretched to span the scene square and the velocity box along the road.
pub fn road_grid(frame: &RoadFrame, spec: &GridSpec, n: usize, y_offset: f64) -> Result<ImagingGrid> {
    let d = frame.vector_to_world([1.0, 0.0]);
    let stretch = 1.0 / d[0].abs().max(d[1].abs());
    let x_center = frame.forward([0.0, 0.0])?[0];
    Ok(ImagingGrid::road(
        x_center,
        spec.extent(n) * stretch,
        y_offset,
        spec.velocity_extent() * stretch,
    ))
}

/// Cross-road offsets: one per fine spatial cell over the width.
pub fn cross_offsets(width: f64, spacing: f64) -> Vec<f64> {
    let m = (0.5 * width / spacing).floor().max(0.0) as i64;
    (-m..=m).map(|k| k as f64 * spacing).collect()
}

/// A refined hypothesis before verification.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub position: Point2,
    pub velocity: Point2,
    pub road_index: Option<usize>,
    pub history: Vec<Estimate>,
}

fn inside(p: Point2, half: f64) -> bool {
    p[0].abs() <= half * (1.0 + 1e-9) && p[1].abs() <= half * (1.0 + 1e-9)
}

impl Candidate {
    fn within(&self, spec: &GridSpec, n: usize) -> bool {
        inside(self.position, 0.5 * spec.extent(n)) && inside(self.velocity, 0.5 * spec.velocity_extent())
    }
}

/// One 2-D pass along a road at one cross offset.
pub fn road_pass(
    profile: &RangeProfile,
    ctx: &Context,
    road: &RoadLine,
    road_index: Option<usize>,
    y_offset: f64,
) -> Result<(Vec<Candidate>, PassStats)> {
    let n = profile.n();
    let frame = RoadFrame::new(road.rho, road.alpha);
    let acq = ctx.acq.in_road_frame(&frame)?;
    let grid = road_grid(&frame, &ctx.grid, n, y_offset)?;
    let ld = ctx.cfg.road_level(n);
    let pyramid = Pyramid::new(profile, &acq, ctx.pattern, grid, ctx.cfg.mldd(ld))?;
    let out = pyramid.run()?;
    let maxima = find_local_maxima(&out.detection, ctx.cfg.kappa);
    let (mean, std) = out.detection.mean_std();
    let stats = PassStats {
        road: road_index,
        offset: y_offset,
        level: ld,
        mean,
        std,
        max: out.detection.values.iter().cloned().fold(0.0, f64::max),
        maxima: maxima.len(),
    };
    let to_world = |p: &GridPoint| -> Result<(Point2, Point2)> {
        Ok((frame.inverse(p.r)?, frame.vector_to_world(p.v)))
    };
    let mut found = Vec::new();
    for det in &maxima {
        let refined = pyramid.upgrade(&out.level, det)?;
        let (position, velocity) = to_world(&refined.point)?;
        let history = refined
            .history
            .iter()
            .map(|(level, p)| {
                to_world(p).map(|(position, velocity)| Estimate {
                    level: *level,
                    position,
                    velocity,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        found.push(Candidate {
            position,
            velocity,
            road_index,
            history,
        });
    }
    Ok((found, stats))
}

/// All passes of one road, across its width.
pub fn road_based_detect(
    profile: &RangeProfile,
    ctx: &Context,
    road: &RoadLine,
    road_index: Option<usize>,
) -> Result<(Vec<Candidate>, Vec<PassStats>)> {
    let spacing = ctx.grid.spacing;
    let results: Vec<Result<(Vec<Candidate>, PassStats)>> = cross_offsets(road.width, spacing)
        .into_par_iter()
        .map(|y| road_pass(profile, ctx, road, road_index, y))
        .collect();
    let mut cands = Vec::new();
    let mut stats = Vec::new();
    for r in results {
        let (c, s) = r?;
        cands.extend(c.into_iter().filter(|c| c.within(&ctx.grid, profile.n())));
        stats.push(s);
    }
    Ok((cands, stats))
}

/// Adaptive 4-D search over the whole grid.
pub fn four_d_detect(profile: &RangeProfile, ctx: &Context) -> Result<(Vec<Candidate>, PassStats)> {
    let n = profile.n();
    let ld = ctx.cfg.fallback_level(n);
    let cells = n * n * (1usize << (2 * ld));
    if cells > FALLBACK_CELL_LIMIT {
        return Err(Error::OutputTooLarge {
            cells,
            limit: FALLBACK_CELL_LIMIT,
        });
    }
    let grid = ctx.grid.four_d(n);
    let pyramid = Pyramid::new(profile, ctx.acq, ctx.pattern, grid, ctx.cfg.mldd(ld))?;
    let out = pyramid.run()?;
    let maxima = find_local_maxima(&out.detection, ctx.cfg.kappa);
    let (mean, std) = out.detection.mean_std();
    let stats = PassStats {
        road: None,
        offset: 0.0,
        level: ld,
        mean,
        std,
        max: out.detection.values.iter().cloned().fold(0.0, f64::max),
        maxima: maxima.len(),
    };
    let cands = maxima
        .iter()
        .map(|det| {
            let r = pyramid.upgrade(&out.level, det)?;
            Ok(Candidate {
                position: r.point.r,
                velocity: r.point.v,
                road_index: None,
                history: r
                    .history
                    .iter()
                    .map(|(level, p)| Estimate {
                        level: *level,
                        position: p.r,
                        velocity: p.v,
                    })
                    .collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((cands, stats))
}

fn signature(position: Point2, velocity: Point2, profile: &RangeProfile, ctx: &Context) -> RangeProfile {
    let t = PointTarget {
        position,
        velocity,
        amplitude: 1.0,
        phase: 0.0,
    };
    target_signature(&t, &profile.radar, ctx.acq, ctx.pattern)
}

/// Mean power of a static image in target amplitude units (a unit point
/// target peaks at `N²`).
pub fn background_power(img: &ReflectivityImage) -> f64 {
    let n2 = img.grid.shape(img.level)[0].pow(2) as f64;
    img.values.iter().map(|z| z.norm_sqr()).sum::<f64>() / img.values.len().max(1) as f64 / (n2 * n2)
}

/// Matched-filter verification. A candidate's least-squares amplitude
/// `⟨H, P⟩/‖H‖²` must reach `κ` times the root of `background`, the mean
/// power of the static image. Candidates are then taken strongest first;
/// each is kept if its score `|⟨H, P⟩|/‖H‖` against the data with the kept
/// signatures projected out is at least `retain` times its raw score.
pub fn verify(candidates: Vec<Candidate>, profile: &RangeProfile, ctx: &Context, background: f64) -> Vec<Detection> {
    let floor = ctx.cfg.kappa * background.sqrt();
    let scored: Vec<(Candidate, RangeProfile, Complex64, f64)> = candidates
        .into_par_iter()
        .map(|c| {
            let h = signature(c.position, c.velocity, profile, ctx);
            let hp = h.inner(profile);
            let norm = h.energy().sqrt();
            (c, h, hp, norm)
        })
        .collect();
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| {
        let (sa, sb) = (scored[a].2.norm() / scored[a].3, scored[b].2.norm() / scored[b].3);
        sb.total_cmp(&sa).then(a.cmp(&b))
    });
    // orthonormal basis of kept signatures with their data projections
    let mut basis: Vec<(RangeProfile, Complex64)> = Vec::new();
    let mut kept = Vec::new();
    for i in order {
        let (c, h, hp, norm) = &scored[i];
        if *norm == 0.0 || hp.norm() / (norm * norm) < floor {
            continue;
        }
        let coeffs: Vec<Complex64> = basis.iter().map(|(q, _)| q.inner(h)).collect();
        let residual = coeffs
            .iter()
            .zip(&basis)
            .fold(*hp, |acc, (c, (_, qp))| acc - c.conj() * qp);
        if residual.norm() < ctx.cfg.retain * hp.norm() {
            continue;
        }
        let mut q = h.clone();
        for (c, (b, _)) in coeffs.iter().zip(&basis) {
            q.values.zip_mut_with(&b.values, |x, y| *x -= c * y);
        }
        let qn = q.energy().sqrt();
        if qn > 1e-9 * norm {
            q.values.mapv_inplace(|x| x / qn);
            let qp = q.inner(profile);
            basis.push((q, qp));
        }
        kept.push(Detection {
            position: c.position,
            velocity: c.velocity,
            amplitude: hp / (norm * norm),
            road_index: c.road_index,
            score: hp.norm() / norm,
            level_history: c.history.clone(),
        });
    }
    kept
}

/// Drops each detection lying within `dr` in position and `dv` in velocity
/// (per axis) of an earlier one. Input order is taken as priority.
pub fn suppress_nearby(dets: Vec<Detection>, dr: f64, dv: f64) -> Vec<Detection> {
    let mut kept: Vec<Detection> = Vec::new();
    for d in dets {
        let near = kept.iter().any(|k| {
            (0..2).all(|i| (k.position[i] - d.position[i]).abs() <= dr && (k.velocity[i] - d.velocity[i]).abs() <= dv)
        });
        if !near {
            kept.push(d);
        }
    }
    kept
}

/// Subtract the projection of `profile` onto the detection's signature.
pub fn clean(profile: &RangeProfile, det: &Detection, ctx: &Context) -> RangeProfile {
    let h = signature(det.position, det.velocity, profile, ctx);
    project_out(profile, &h)
}

/// `P − (⟨H, P⟩/⟨H, H⟩) H`.
pub fn project_out(profile: &RangeProfile, h: &RangeProfile) -> RangeProfile {
    let hh = h.energy();
    let mut out = profile.clone();
    if hh == 0.0 {
        return out;
    }
    let c = h.inner(profile) / hh;
    out.values.zip_mut_with(&h.values, |p, x| *p -= c * x);
    out
}

/// Movers: detections at least one velocity cell of the detection level away
/// from rest.
pub fn is_mover(det: &Detection, spec: &GridSpec, level: u32) -> bool {
    det.speed() >= spec.velocity_extent() / (1u64 << level) as f64
}

/// Arrows from each mover's position along its velocity, `scale` meters per
/// unit speed.
pub fn arrow_overlay(geometry: RasterGeometry, dims: (usize, usize), movers: &[&Detection], scale: f64) -> BinaryImage {
    let mut out = BinaryImage::new(dims.0, dims.1, geometry);
    for d in movers {
        let from = geometry.world_to_pixel(d.position);
        let tip_w = [d.position[0] + scale * d.velocity[0], d.position[1] + scale * d.velocity[1]];
        let to = geometry.world_to_pixel(tip_w);
        draw_line(&mut out, from, to);
        let (dx, dy) = (to.0 - from.0, to.1 - from.1);
        let len = dx.hypot(dy);
        if len < 1e-9 {
            continue;
        }
        let head = (0.25 * len).max(2.0);
        for side in [-1.0f64, 1.0] {
            let a = dy.atan2(dx) + std::f64::consts::PI - side * 25f64.to_radians();
            draw_line(&mut out, to, (to.0 + head * a.cos(), to.1 + head * a.sin()));
        }
    }
    out
}

fn draw_line(img: &mut BinaryImage, from: (f64, f64), to: (f64, f64)) {
    let steps = ((to.0 - from.0).abs().max((to.1 - from.1).abs()).ceil() as usize).max(1);
    for s in 0..=steps {
        let f = s as f64 / steps as f64;
        let c = (from.0 + f * (to.0 - from.0)).round();
        let r = (from.1 + f * (to.1 - from.1)).round();
        if c >= 0.0 && r >= 0.0 && (c as usize) < img.width && (r as usize) < img.height {
            img.set(c as usize, r as usize, true);
        }
    }
}

/// Products of [`full_run`].
#[derive(Clone, Debug)]
pub struct RunOutput {
    /// Static image of the input data.
    pub initial: ReflectivityImage,
    /// Static image after the movers were cleaned.
    pub image: ReflectivityImage,
    pub overlay: BinaryImage,
    pub cleaned_profile: RangeProfile,
    pub report: Report,
}

fn rotate_about_foot(road: &RoadLine, delta: f64) -> RoadLine {
    if delta == 0.0 {
        return *road;
    }
    let (rho, alpha) = canonical_line(road.rho * delta.cos(), road.alpha + delta);
    RoadLine { rho, alpha, ..*road }
}

pub fn full_run(profile: &RangeProfile, ctx: &Context) -> Result<RunOutput> {
    let n = profile.n();
    let cfg = ctx.cfg;
    let mut clock = Stopwatch(Vec::new());
    let mut report = Report {
        n,
        config: cfg.clone(),
        ..Report::default()
    };

    let initial = clock.time("static_image", || form_static_image(profile, ctx))?;

    let roads = match &cfg.known_roads {
        Some(r) => Ok(r.clone()),
        None => clock.time("road_detection", || {
            let img = road_image(&initial, profile.radar.range_resolution(), cfg);
            detect_roads(&img, &cfg.roads).map(|s| s.lines)
        }),
    };
    let roads = match roads {
        Ok(r) if !r.is_empty() => r,
        Ok(_) => {
            report.errors.push("road detection found no roads".into());
            Vec::new()
        }
        Err(e) => {
            report.errors.push(format!("road detection: {e}"));
            Vec::new()
        }
    };
    report.roads = roads.clone();

    let mut candidates = Vec::new();
    if roads.is_empty() {
        report.fallback = true;
        let (c, s) = clock.time("fallback_4d", || four_d_detect(profile, ctx))?;
        candidates = c;
        report.passes.push(s);
    } else {
        let offsets: &[f64] = if cfg.known_roads.is_some() { &[0.0] } else { &cfg.heading_offsets_deg };
        clock.time("road_passes", || -> Result<()> {
            for (k, road) in roads.iter().enumerate() {
                for &d in offsets {
                    let road = rotate_about_foot(road, d.to_radians());
                    match road_based_detect(profile, ctx, &road, Some(k)) {
                        Ok((c, s)) => {
                            candidates.extend(c);
                            report.passes.extend(s);
                        }
                        Err(e) => report.errors.push(format!("road {k}: {e}")),
                    }
                }
            }
            Ok(())
        })?;
    }

    let level = if report.fallback { cfg.fallback_level(n) } else { cfg.road_level(n) };
    report.detections = clock.time("verification", || {
        let dets = verify(candidates, profile, ctx, background_power(&initial));
        let vcell = ctx.grid.velocity_extent() / (1u64 << level) as f64;
        suppress_nearby(dets, profile.radar.range_resolution(), vcell)
    });

    let mut movers: Vec<usize> = (0..report.detections.len())
        .filter(|&i| is_mover(&report.detections[i], &ctx.grid, level))
        .collect();
    movers.sort_by(|&a, &b| {
        let (x, y) = (&report.detections[a], &report.detections[b]);
        y.amplitude.norm().total_cmp(&x.amplitude.norm()).then(a.cmp(&b))
    });
    let cleaned_profile = clock.time("cleaning", || {
        movers
            .iter()
            .fold(profile.clone(), |p, &i| clean(&p, &report.detections[i], ctx))
    });
    report.cleaned = movers;

    let image = if report.cleaned.is_empty() {
        initial.clone()
    } else {
        clock.time("final_image", || form_static_image(&cleaned_profile, ctx))?
    };
    let raster = image_raster(&image);
    let mover_refs: Vec<&Detection> = report.movers().collect();
    let span = n as f64 * profile.radar.pulse_interval;
    let overlay = arrow_overlay(raster.geometry, raster.dims(), &mover_refs, cfg.arrow_scale * span);

    report.timings = clock.0;
    Ok(RunOutput {
        initial,
        image,
        overlay,
        cleaned_profile,
        report,
    })
}
