//! Straight-road extraction from a static image: Canny edges, disk
//! dilation, 8-connected component filtering, Hough transform and mean-shift
//! clustering of the Hough peaks.
//!
//! Hough lines live in pixel coordinates `(u, v) = (col, row)`:
//! `u cos α + v sin α = ρ`, `α ∈ (−90°, 90°]`. [`pixel_to_world`] maps them
//! to the world normal form.

use std::collections::VecDeque;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BinaryImage, GrayImage, Raster, RasterGeometry};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoadParams {
    pub canny_sigma: f64,
    pub canny_low: f64,
    pub canny_high: f64,
    pub dilate_radius: usize,
    /// Smallest kept component, as a fraction of the image area.
    pub min_area_fraction: f64,
    pub rho_step: f64,
    pub alpha_step_deg: f64,
    pub max_peaks: usize,
    pub peak_fraction: f64,
    /// Peaks need at least this many votes per pixel of the shorter image
    /// side.
    pub min_votes_fraction: f64,
    pub nms_rho: usize,
    pub nms_alpha: usize,
    pub bandwidth_rho: f64,
    pub bandwidth_alpha_deg: f64,
    /// Parallel lines closer than this (pixels) are the two edges of one
    /// road; 0 disables pairing.
    pub pair_gap: f64,
    /// Roads with less support than this fraction of the strongest are
    /// dropped.
    pub min_support_fraction: f64,
    /// Grid points per side of the band-contrast search that refines each
    /// road over two Hough bins in `ρ` and `α` (0 disables it).
    pub refine_steps: usize,
}

impl Default for RoadParams {
    fn default() -> Self {
        RoadParams {
            canny_sigma: 1.4,
            canny_low: 0.1,
            canny_high: 0.25,
            dilate_radius: 2,
            min_area_fraction: 0.005,
            rho_step: 1.0,
            alpha_step_deg: 1.0,
            max_peaks: 12,
            peak_fraction: 0.3,
            min_votes_fraction: 0.3,
            nms_rho: 2,
            nms_alpha: 2,
            bandwidth_rho: 5.0,
            bandwidth_alpha_deg: 5.0,
            pair_gap: 0.0,
            min_support_fraction: 0.0,
            refine_steps: 10,
        }
    }
}

/// A straight road `x cos α + y sin α = ρ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoadLine {
    pub rho: f64,
    /// Radians, in `(−π/2, π/2]`.
    pub alpha: f64,
    /// Hough votes behind the line.
    pub support: u32,
    /// Perpendicular extent of the road's edge component minus the dilation
    /// margin, same units as `rho`.
    pub width: f64,
}

/// `(x − min)/(max − min)`; a constant image maps to zeros.
pub fn normalize(img: &Raster<f64>) -> GrayImage {
    let (lo, hi) = img
        .data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let span = hi - lo;
    img.map(|&x| if span > 0.0 { (x - lo) / span } else { 0.0 })
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|x| *x /= s);
    k
}

/// Separable Gaussian blur with replicated borders.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    if sigma <= 0.0 {
        return img.clone();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (w, h) = img.dims();
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let horiz: GrayImage = Raster::from_fn(w, h, img.geometry, |c, row| {
        k.iter()
            .enumerate()
            .map(|(j, kv)| kv * img.get(clamp(c as isize + j as isize - r, w), row))
            .sum::<f64>()
    });
    Raster::from_fn(w, h, img.geometry, |c, row| {
        k.iter()
            .enumerate()
            .map(|(j, kv)| kv * horiz.get(c, clamp(row as isize + j as isize - r, h)))
            .sum::<f64>()
    })
}

/// Canny edges: blur, Sobel gradient, non-maximum suppression and
/// hysteresis between `low` and `high` (fractions of the largest gradient).
pub fn canny(img: &GrayImage, low: f64, high: f64, sigma: f64) -> Result<BinaryImage> {
    if !(0.0 <= low && low < high && high <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "Canny thresholds need 0 ≤ low < high ≤ 1, got {low}, {high}"
        )));
    }
    let (w, h) = img.dims();
    let s = gaussian_blur(img, sigma);
    let at = |c: isize, r: isize| *s.get(c.clamp(0, w as isize - 1) as usize, r.clamp(0, h as isize - 1) as usize);
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    let mut mag = vec![0.0; w * h];
    for r in 0..h as isize {
        for c in 0..w as isize {
            let x = (at(c + 1, r - 1) + 2.0 * at(c + 1, r) + at(c + 1, r + 1))
                - (at(c - 1, r - 1) + 2.0 * at(c - 1, r) + at(c - 1, r + 1));
            let y = (at(c - 1, r + 1) + 2.0 * at(c, r + 1) + at(c + 1, r + 1))
                - (at(c - 1, r - 1) + 2.0 * at(c, r - 1) + at(c + 1, r - 1));
            let k = r as usize * w + c as usize;
            gx[k] = x;
            gy[k] = y;
            mag[k] = x.hypot(y);
        }
    }
    let max = mag.iter().cloned().fold(0.0, f64::max);
    let mut out = BinaryImage::new(w, h, img.geometry);
    if max <= 1e-12 {
        return Ok(out);
    }
    let m = |c: isize, r: isize| {
        if c < 0 || r < 0 || c >= w as isize || r >= h as isize {
            0.0
        } else {
            mag[r as usize * w + c as usize]
        }
    };
    // thin: keep pixels that beat the neighbour behind them along the
    // gradient and are not beaten by the one ahead
    let mut thin = vec![0.0; w * h];
    for r in 0..h as isize {
        for c in 0..w as isize {
            let k = r as usize * w + c as usize;
            if mag[k] == 0.0 {
                continue;
            }
            let angle = gy[k].atan2(gx[k]).rem_euclid(PI);
            let sector = ((angle / (PI / 4.0)).round() as usize) % 4;
            let (dc, dr) = [(1, 0), (1, 1), (0, 1), (-1, 1)][sector];
            if mag[k] > m(c - dc, r - dr) && mag[k] >= m(c + dc, r + dr) {
                thin[k] = mag[k];
            }
        }
    }
    let (lo, hi) = (low * max, high * max);
    let mut queue: VecDeque<(usize, usize)> = VecDeque::new();
    for r in 0..h {
        for c in 0..w {
            if thin[r * w + c] >= hi && thin[r * w + c] > 0.0 {
                out.set(c, r, true);
                queue.push_back((c, r));
            }
        }
    }
    while let Some((c, r)) = queue.pop_front() {
        for (nc, nr) in neighbours8(c, r, w, h) {
            let k = nr * w + nc;
            if !*out.get(nc, nr) && thin[k] >= lo && thin[k] > 0.0 {
                out.set(nc, nr, true);
                queue.push_back((nc, nr));
            }
        }
    }
    Ok(out)
}

fn neighbours8(c: usize, r: usize, w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    (-1isize..=1)
        .flat_map(|dr| (-1isize..=1).map(move |dc| (dc, dr)))
        .filter(|&(dc, dr)| dc != 0 || dr != 0)
        .filter_map(move |(dc, dr)| {
            let (nc, nr) = (c as isize + dc, r as isize + dr);
            (nc >= 0 && nr >= 0 && (nc as usize) < w && (nr as usize) < h).then_some((nc as usize, nr as usize))
        })
}

/// Dilation by the integer disk `dx² + dy² ≤ radius²`.
pub fn dilate_disk(img: &BinaryImage, radius: usize) -> BinaryImage {
    let r = radius as isize;
    let offsets: Vec<(isize, isize)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|(dx, dy)| dx * dx + dy * dy <= r * r)
        .collect();
    let (w, h) = img.dims();
    let mut out = BinaryImage::new(w, h, img.geometry);
    for row in 0..h {
        for col in 0..w {
            if !*img.get(col, row) {
                continue;
            }
            for &(dx, dy) in &offsets {
                let (c, rr) = (col as isize + dx, row as isize + dy);
                if c >= 0 && rr >= 0 && (c as usize) < w && (rr as usize) < h {
                    out.set(c as usize, rr as usize, true);
                }
            }
        }
    }
    out
}

/// 8-connected labels (0 = background, components numbered from 1 in
/// raster order) and the area of each component.
pub fn label_components(img: &BinaryImage) -> (Raster<u32>, Vec<usize>) {
    let (w, h) = img.dims();
    let mut labels: Raster<u32> = Raster::new(w, h, img.geometry);
    let mut areas = Vec::new();
    let mut queue = VecDeque::new();
    for row in 0..h {
        for col in 0..w {
            if !*img.get(col, row) || *labels.get(col, row) != 0 {
                continue;
            }
            let label = areas.len() as u32 + 1;
            let mut area = 0;
            labels.set(col, row, label);
            queue.push_back((col, row));
            while let Some((c, r)) = queue.pop_front() {
                area += 1;
                for (nc, nr) in neighbours8(c, r, w, h) {
                    if *img.get(nc, nr) && *labels.get(nc, nr) == 0 {
                        labels.set(nc, nr, label);
                        queue.push_back((nc, nr));
                    }
                }
            }
            areas.push(area);
        }
    }
    (labels, areas)
}

/// Drop 8-connected components smaller than `min_area` pixels.
pub fn connected_components_filter(img: &BinaryImage, min_area: usize) -> BinaryImage {
    let (labels, areas) = label_components(img);
    labels.map(|&l| l != 0 && areas[l as usize - 1] >= min_area)
}

/// Hough accumulator over `(ρ, α)`, row-major in `α`.
#[derive(Clone, Debug, PartialEq)]
pub struct HoughAccumulator {
    pub votes: Vec<u32>,
    pub rho_min: f64,
    pub rho_step: f64,
    pub n_rho: usize,
    /// Bin centres, radians, ascending in `(−π/2, π/2]`.
    pub alphas: Vec<f64>,
}

impl HoughAccumulator {
    pub fn get(&self, rho_bin: usize, alpha_bin: usize) -> u32 {
        self.votes[alpha_bin * self.n_rho + rho_bin]
    }

    pub fn rho(&self, rho_bin: usize) -> f64 {
        self.rho_min + rho_bin as f64 * self.rho_step
    }

    pub fn total(&self) -> u64 {
        self.votes.iter().map(|&v| v as u64).sum()
    }
}

/// Every set pixel votes once per `α` bin for `ρ = u cos α + v sin α`.
pub fn hough(img: &BinaryImage, rho_step: f64, alpha_step: f64) -> Result<HoughAccumulator> {
    if !(rho_step > 0.0 && alpha_step > 0.0) {
        return Err(Error::InvalidConfig("Hough steps must be positive".into()));
    }
    let (w, h) = img.dims();
    let n_alpha = (PI / alpha_step).round().max(1.0) as usize;
    let alpha_step = PI / n_alpha as f64;
    let alphas: Vec<f64> = (1..=n_alpha).map(|k| -PI / 2.0 + k as f64 * alpha_step).collect();
    let diag = ((w * w + h * h) as f64).sqrt();
    let n_half = (diag / rho_step).ceil() as usize;
    let n_rho = 2 * n_half + 1;
    let rho_min = -(n_half as f64) * rho_step;
    let trig: Vec<(f64, f64)> = alphas.iter().map(|a| a.sin_cos()).collect();
    let mut votes = vec![0u32; n_rho * n_alpha];
    for row in 0..h {
        for col in 0..w {
            if !*img.get(col, row) {
                continue;
            }
            for (k, &(s, c)) in trig.iter().enumerate() {
                let rho = col as f64 * c + row as f64 * s;
                let bin = ((rho - rho_min) / rho_step).round() as usize;
                votes[k * n_rho + bin] += 1;
            }
        }
    }
    Ok(HoughAccumulator {
        votes,
        rho_min,
        rho_step,
        n_rho,
        alphas,
    })
}

/// Votes above what the image's edge density would give a line of the same
/// length, so long diagonals through the centre are not favoured.
pub fn excess_votes(acc: &HoughAccumulator, img: &BinaryImage) -> Result<HoughAccumulator> {
    let (w, h) = img.dims();
    let density = img.count() as f64 / (w * h).max(1) as f64;
    let full = BinaryImage::from_fn(w, h, img.geometry, |_, _| true);
    let lengths = hough(&full, acc.rho_step, PI / acc.alphas.len() as f64)?;
    let votes = acc
        .votes
        .iter()
        .zip(&lengths.votes)
        .map(|(&v, &len)| (v as f64 - density * len as f64).max(0.0).round() as u32)
        .collect();
    Ok(HoughAccumulator { votes, ..acc.clone() })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoughPeak {
    pub rho: f64,
    pub alpha: f64,
    pub votes: u32,
}

/// Greedy peak picking: take the global maximum, clear a
/// `(2·nms_rho + 1) × (2·nms_alpha + 1)` window around it, repeat until
/// `max_peaks` or until the maximum drops below `fraction` of the first.
pub fn hough_peaks(
    acc: &HoughAccumulator,
    max_peaks: usize,
    nms: (usize, usize),
    fraction: f64,
) -> Vec<HoughPeak> {
    let mut votes = acc.votes.clone();
    let n_alpha = acc.alphas.len();
    let mut peaks: Vec<HoughPeak> = Vec::new();
    while peaks.len() < max_peaks {
        let (best, &v) = match votes.iter().enumerate().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0))) {
            Some(x) => x,
            None => break,
        };
        if v == 0 || peaks.first().is_some_and(|p| (v as f64) < fraction * p.votes as f64) {
            break;
        }
        let (ka, kr) = (best / acc.n_rho, best % acc.n_rho);
        peaks.push(HoughPeak {
            rho: acc.rho(kr),
            alpha: acc.alphas[ka],
            votes: v,
        });
        // the α axis wraps onto itself with ρ mirrored
        for da in -(nms.1 as isize)..=nms.1 as isize {
            let a = ka as isize + da;
            let (a, mirror) = if a < 0 {
                (a + n_alpha as isize, true)
            } else if a >= n_alpha as isize {
                (a - n_alpha as isize, true)
            } else {
                (a, false)
            };
            let kr = if mirror { acc.n_rho - 1 - kr } else { kr };
            for r in kr.saturating_sub(nms.0)..=(kr + nms.0).min(acc.n_rho - 1) {
                votes[a as usize * acc.n_rho + r] = 0;
            }
        }
    }
    peaks
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cluster {
    /// Mean of the member points.
    pub center: [f64; 2],
    pub members: Vec<usize>,
}

/// Flat-kernel mean shift on coordinates scaled by `bandwidth`: each point
/// climbs to its mode (shift < 1e−4), modes closer than one unit are merged,
/// and each cluster is reported as the mean of its members. Clusters are
/// ordered by their lowest member index.
pub fn mean_shift_cluster(points: &[[f64; 2]], bandwidth: [f64; 2]) -> Result<Vec<Cluster>> {
    if !(bandwidth[0] > 0.0 && bandwidth[1] > 0.0) {
        return Err(Error::InvalidConfig("mean-shift bandwidth must be positive".into()));
    }
    let scaled: Vec<[f64; 2]> = points
        .iter()
        .map(|p| [p[0] / bandwidth[0], p[1] / bandwidth[1]])
        .collect();
    let dist2 = |a: &[f64; 2], b: &[f64; 2]| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    let modes: Vec<[f64; 2]> = scaled
        .iter()
        .map(|start| {
            let mut x = *start;
            for _ in 0..1000 {
                let (mut s, mut n) = ([0.0, 0.0], 0usize);
                for p in &scaled {
                    if dist2(p, &x) <= 1.0 {
                        s[0] += p[0];
                        s[1] += p[1];
                        n += 1;
                    }
                }
                let next = [s[0] / n as f64, s[1] / n as f64];
                let shift = dist2(&next, &x).sqrt();
                x = next;
                if shift < 1e-4 {
                    break;
                }
            }
            x
        })
        .collect();
    // single-linkage merge of modes
    let mut parent: Vec<usize> = (0..modes.len()).collect();
    fn find(parent: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while parent[r] != r {
            r = parent[r];
        }
        parent[i] = r;
        r
    }
    for i in 0..modes.len() {
        for j in i + 1..modes.len() {
            if dist2(&modes[i], &modes[j]) < 1.0 {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut clusters: Vec<Cluster> = Vec::new();
    let mut slot = vec![usize::MAX; points.len()];
    for i in 0..points.len() {
        let root = find(&mut parent, i);
        if slot[root] == usize::MAX {
            slot[root] = clusters.len();
            clusters.push(Cluster {
                center: [0.0, 0.0],
                members: Vec::new(),
            });
        }
        clusters[slot[root]].members.push(i);
    }
    for c in &mut clusters {
        let n = c.members.len() as f64;
        c.center = [
            c.members.iter().map(|&i| points[i][0]).sum::<f64>() / n,
            c.members.iter().map(|&i| points[i][1]).sum::<f64>() / n,
        ];
    }
    Ok(clusters)
}

/// Bring `(ρ, α)` into `α ∈ (−π/2, π/2]`.
pub fn canonical_line(rho: f64, alpha: f64) -> (f64, f64) {
    let mut a = (alpha + PI / 2.0).rem_euclid(2.0 * PI) - PI / 2.0;
    let mut r = rho;
    if a > PI / 2.0 {
        a -= PI;
        r = -r;
    }
    if a <= -PI / 2.0 {
        a += PI;
        r = -r;
    }
    (r, a)
}

/// Pixel-frame line to the world frame of `geometry`.
pub fn pixel_to_world(line: &RoadLine, geometry: &RasterGeometry) -> RoadLine {
    let alpha = -line.alpha;
    let [ox, oy] = geometry.origin;
    let rho = geometry.pitch * line.rho + ox * alpha.cos() + oy * alpha.sin();
    let (rho, alpha) = canonical_line(rho, alpha);
    RoadLine {
        rho,
        alpha,
        support: line.support,
        width: line.width * geometry.pitch,
    }
}

/// Inverse of [`pixel_to_world`].
pub fn world_to_pixel(line: &RoadLine, geometry: &RasterGeometry) -> RoadLine {
    let [ox, oy] = geometry.origin;
    let rho = (line.rho - ox * line.alpha.cos() - oy * line.alpha.sin()) / geometry.pitch;
    let (rho, alpha) = canonical_line(rho, -line.alpha);
    RoadLine {
        rho,
        alpha,
        support: line.support,
        width: line.width / geometry.pitch,
    }
}

/// Every stage of [`detect_roads`], for inspection.
#[derive(Clone, Debug)]
pub struct RoadStages {
    pub edges: BinaryImage,
    pub dilated: BinaryImage,
    pub components: BinaryImage,
    pub peaks: Vec<HoughPeak>,
    pub clusters: Vec<Cluster>,
    /// Pixel-frame lines, one per cluster.
    pub pixel_lines: Vec<RoadLine>,
    /// The same lines in world coordinates.
    pub lines: Vec<RoadLine>,
}

/// Full road extraction on a normalized image.
pub fn detect_roads(img: &GrayImage, params: &RoadParams) -> Result<RoadStages> {
    let (w, h) = img.dims();
    let edges = canny(img, params.canny_low, params.canny_high, params.canny_sigma)?;
    let dilated = dilate_disk(&edges, params.dilate_radius);
    let min_area = (params.min_area_fraction * (w * h) as f64).ceil() as usize;
    let components = connected_components_filter(&dilated, min_area);
    let acc = hough(&components, params.rho_step, params.alpha_step_deg.to_radians())?;
    let acc = excess_votes(&acc, &components)?;
    let min_votes = params.min_votes_fraction * w.min(h) as f64;
    let peaks: Vec<HoughPeak> = hough_peaks(
        &acc,
        params.max_peaks,
        (params.nms_rho, params.nms_alpha),
        params.peak_fraction,
    )
    .into_iter()
    .filter(|p| p.votes as f64 >= min_votes)
    .collect();
    let points: Vec<[f64; 2]> = peaks.iter().map(|p| [p.rho, p.alpha]).collect();
    let clusters = mean_shift_cluster(
        &points,
        [params.bandwidth_rho, params.bandwidth_alpha_deg.to_radians()],
    )?;
    let pixel_lines: Vec<RoadLine> = clusters
        .iter()
        .map(|c| {
            let support = c.members.iter().map(|&i| peaks[i].votes).sum();
            let extent = perpendicular_extent(&components, c.center, 2.0 * params.bandwidth_rho);
            RoadLine {
                rho: c.center[0],
                alpha: c.center[1],
                support,
                width: (extent - 2.0 * params.dilate_radius as f64).max(0.0),
            }
        })
        .collect();
    let pixel_lines = pair_edges(pixel_lines, params.pair_gap, params.bandwidth_alpha_deg.to_radians());
    let pixel_lines: Vec<RoadLine> = pixel_lines
        .into_iter()
        .map(|l| {
            let alpha_span = params.alpha_step_deg.to_radians() * 2.0;
            refine_line(img, l, 2.0 * params.rho_step, alpha_span, params.refine_steps)
        })
        .collect();
    let strongest = pixel_lines.iter().map(|l| l.support).max().unwrap_or(0);
    let pixel_lines: Vec<RoadLine> = pixel_lines
        .into_iter()
        .filter(|l| l.support as f64 >= params.min_support_fraction * strongest as f64)
        .collect();
    let lines = pixel_lines
        .iter()
        .map(|l| pixel_to_world(l, &img.geometry))
        .collect();
    Ok(RoadStages {
        edges,
        dilated,
        components,
        peaks,
        clusters,
        pixel_lines,
        lines,
    })
}

/// Merge parallel line pairs (angle within `max_dalpha`, offset within
/// `gap`) into one line midway between them, as wide as their separation,
/// strongest pairs first.
pub fn pair_edges(mut lines: Vec<RoadLine>, gap: f64, max_dalpha: f64) -> Vec<RoadLine> {
    if gap <= 0.0 {
        return lines;
    }
    lines.sort_by_key(|l| std::cmp::Reverse(l.support));
    let mut used = vec![false; lines.len()];
    let mut out = Vec::new();
    for i in 0..lines.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let a = lines[i];
        let partner = (i + 1..lines.len())
            .filter(|&j| !used[j])
            .filter_map(|j| {
                let (rho, alpha) = aligned(&lines[j], a.alpha);
                let d = (rho - a.rho).abs();
                ((alpha - a.alpha).abs() <= max_dalpha && d <= gap).then_some((j, rho, alpha, d))
            })
            .max_by(|x, y| lines[x.0].support.cmp(&lines[y.0].support).then(y.3.total_cmp(&x.3)));
        match partner {
            Some((j, rho, alpha, d)) => {
                used[j] = true;
                let (rho, alpha) = canonical_line(0.5 * (a.rho + rho), 0.5 * (a.alpha + alpha));
                out.push(RoadLine {
                    rho,
                    alpha,
                    support: a.support + lines[j].support,
                    width: d,
                });
            }
            None => out.push(a),
        }
    }
    out
}

/// `(ρ, α)` of `line` expressed with the angle nearest to `alpha`.
fn aligned(line: &RoadLine, alpha: f64) -> (f64, f64) {
    if line.alpha - alpha > PI / 2.0 {
        (-line.rho, line.alpha - PI)
    } else if alpha - line.alpha > PI / 2.0 {
        (-line.rho, line.alpha + PI)
    } else {
        (line.rho, line.alpha)
    }
}

/// Band contrast of a road: mean of `img` within `width/2` of the line
/// minus the mean over flanks of the same width on either side.
pub fn band_contrast(img: &GrayImage, rho: f64, alpha: f64, width: f64) -> f64 {
    let (s, c) = alpha.sin_cos();
    let (w, h) = img.dims();
    let half = 0.5 * width;
    let (mut inside, mut n_in, mut flank, mut n_fl) = (0.0, 0usize, 0.0, 0usize);
    for row in 0..h {
        for col in 0..w {
            let d = (col as f64 * c + row as f64 * s - rho).abs();
            if d <= half {
                inside += img.get(col, row);
                n_in += 1;
            } else if d <= 3.0 * half {
                flank += img.get(col, row);
                n_fl += 1;
            }
        }
    }
    if n_in == 0 || n_fl == 0 {
        return 0.0;
    }
    inside / n_in as f64 - flank / n_fl as f64
}

/// Move a road to the `(ρ, α)` of strongest band contrast within
/// `±rho_span` pixels and `±alpha_span` radians, searched on a grid of
/// `steps` points per side.
pub fn refine_line(img: &GrayImage, line: RoadLine, rho_span: f64, alpha_span: f64, steps: usize) -> RoadLine {
    if line.width <= 0.0 || steps == 0 {
        return line;
    }
    let k = steps as f64;
    let mut best = (band_contrast(img, line.rho, line.alpha, line.width).abs(), line.rho, line.alpha);
    for i in -(steps as isize)..=steps as isize {
        let alpha = line.alpha + alpha_span * i as f64 / k;
        for j in -(steps as isize)..=steps as isize {
            let rho = line.rho + rho_span * j as f64 / k;
            let score = band_contrast(img, rho, alpha, line.width).abs();
            if score > best.0 {
                best = (score, rho, alpha);
            }
        }
    }
    let (rho, alpha) = canonical_line(best.1, best.2);
    RoadLine { rho, alpha, ..line }
}

/// Spread (5th to 95th percentile) of signed distances to the line of the
/// set pixels within `reach` of it.
fn perpendicular_extent(mask: &BinaryImage, line: [f64; 2], reach: f64) -> f64 {
    let (s, c) = line[1].sin_cos();
    let (w, h) = mask.dims();
    let mut d: Vec<f64> = Vec::new();
    for row in 0..h {
        for col in 0..w {
            if *mask.get(col, row) {
                let dist = col as f64 * c + row as f64 * s - line[0];
                if dist.abs() <= reach {
                    d.push(dist);
                }
            }
        }
    }
    if d.len() < 2 {
        return 0.0;
    }
    d.sort_by(f64::total_cmp);
    let q = |f: f64| d[((d.len() - 1) as f64 * f).round() as usize];
    q(0.95) - q(0.05)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn geom() -> RasterGeometry {
        RasterGeometry::default()
    }

    #[test]
    fn normalize_examples() {
        let c = Raster::from_fn(4, 4, geom(), |_, _| 3.0);
        assert!(normalize(&c).data.iter().all(|&x| x == 0.0));
        let unit = Raster::from_fn(4, 4, geom(), |c, r| (c + r) as f64 / 6.0);
        assert_eq!(normalize(&unit), unit);
        let scaled = unit.map(|x| 7.0 * x);
        let n = normalize(&scaled);
        assert!(n.data.iter().zip(&unit.data).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn canny_constant_image_has_no_edges() {
        let c = Raster::from_fn(16, 16, geom(), |_, _| 0.5);
        assert_eq!(canny(&c, 0.1, 0.25, 1.4).unwrap().count(), 0);
    }

    #[test]
    fn canny_rejects_bad_thresholds() {
        let c = Raster::from_fn(4, 4, geom(), |_, _| 0.5);
        assert!(canny(&c, 0.3, 0.2, 1.0).is_err());
    }

    #[test]
    fn vertical_step_gives_one_pixel_wide_line() {
        let img = Raster::from_fn(20, 20, geom(), |c, _| if c >= 10 { 1.0 } else { 0.0 });
        let e = canny(&img, 0.1, 0.25, 1.4).unwrap();
        for row in 0..20 {
            let cols: Vec<usize> = (0..20).filter(|&c| *e.get(c, row)).collect();
            assert_eq!(cols.len(), 1, "row {row}: {cols:?}");
            assert!(cols[0] == 9 || cols[0] == 10);
        }
    }

    #[test]
    fn canny_commutes_with_rotation() {
        let img = Raster::from_fn(24, 24, geom(), |c, r| {
            let d = ((c as f64 - 10.3).powi(2) + (r as f64 - 13.7).powi(2)).sqrt();
            1.0 / (1.0 + (d - 6.0).exp())
        });
        let a = canny(&img.rotate90(), 0.1, 0.25, 1.4).unwrap();
        let b = canny(&img, 0.1, 0.25, 1.4).unwrap().rotate90();
        assert!(a.count() > 10);
        assert_eq!(a.data, b.data);
    }

    #[test]
    fn dilation_examples() {
        let mut one = BinaryImage::new(9, 9, geom());
        assert_eq!(dilate_disk(&one, 3).count(), 0);
        one.set(4, 4, true);
        assert_eq!(dilate_disk(&one, 0), one);
        assert_eq!(dilate_disk(&one, 2).count(), 13);
    }

    fn blob(w: usize, h: usize, cells: &[(usize, usize)]) -> BinaryImage {
        let mut b = BinaryImage::new(w, h, geom());
        for &(c, r) in cells {
            b.set(c, r, true);
        }
        b
    }

    #[test]
    fn component_filter_examples() {
        let cells: Vec<(usize, usize)> = (0..10).map(|c| (c, 2)).collect();
        let img = blob(12, 6, &cells);
        assert_eq!(connected_components_filter(&img, 5).count(), 10);
        assert_eq!(connected_components_filter(&img, 10).count(), 10);
        assert_eq!(connected_components_filter(&img, 11).count(), 0);
        let diag = blob(6, 6, &[(1, 1), (1, 2), (2, 3), (3, 3)]);
        assert_eq!(label_components(&diag).1, vec![4]);
    }

    #[test]
    fn hough_examples() {
        let empty = BinaryImage::new(10, 10, geom());
        assert_eq!(hough(&empty, 1.0, 1f64.to_radians()).unwrap().total(), 0);

        // the line u = v: normal α = −45°, ρ = 0
        let diag = blob(32, 32, &(0..32).map(|i| (i, i)).collect::<Vec<_>>());
        let acc = hough(&diag, 1.0, 1f64.to_radians()).unwrap();
        assert_eq!(acc.total(), 32 * 180);
        let p = hough_peaks(&acc, 1, (2, 2), 0.3)[0];
        assert!(p.rho.abs() < 0.5);
        assert!((p.alpha.to_degrees() + 45.0).abs() < 0.5);
        // in a world frame with y up the same line has α = 45°
        let world = pixel_to_world(
            &RoadLine { rho: p.rho, alpha: p.alpha, support: p.votes, width: 0.0 },
            &RasterGeometry { pitch: 1.0, origin: [0.0, 0.0] },
        );
        assert!((world.alpha.to_degrees() - 45.0).abs() < 0.5);
    }

    #[test]
    fn orthogonal_lines_give_two_peaks() {
        let mut cells: Vec<(usize, usize)> = (0..40).map(|c| (c, 12)).collect();
        cells.extend((0..40).map(|r| (25, r)));
        let acc = hough(&blob(40, 40, &cells), 1.0, 1f64.to_radians()).unwrap();
        let peaks = hough_peaks(&acc, 2, (3, 3), 0.3);
        assert_eq!(peaks.len(), 2);
        assert!(peaks[0].votes >= peaks[1].votes);
        let mut found: Vec<(i64, i64)> = peaks
            .iter()
            .map(|p| (p.rho.round() as i64, p.alpha.to_degrees().round() as i64))
            .collect();
        found.sort();
        assert_eq!(found, vec![(12, 90), (25, 0)]);
    }

    #[test]
    fn single_line_has_one_dominant_peak() {
        let cells: Vec<(usize, usize)> = (0..40).map(|c| (c, 7)).collect();
        let acc = hough(&blob(40, 20, &cells), 1.0, 1f64.to_radians()).unwrap();
        let peaks = hough_peaks(&acc, 10, (3, 3), 0.3);
        assert!(peaks[0].votes == 40);
        assert!(peaks.iter().skip(1).all(|p| p.votes < 20));
    }

    #[test]
    fn mean_shift_examples() {
        let same = vec![[3.0, 0.5]; 5];
        let c = mean_shift_cluster(&same, [5.0, 0.1]).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].center, [3.0, 0.5]);

        let pts = vec![[0.0, 0.0], [1.0, 0.02], [2.0, -0.01], [50.0, 1.0], [51.0, 1.02]];
        let c = mean_shift_cluster(&pts, [5.0, 0.1]).unwrap();
        assert_eq!(c.len(), 2);
        assert!((c[0].center[0] - 1.0).abs() < 1e-12);
        assert!((c[1].center[0] - 50.5).abs() < 1e-12);
        assert!(mean_shift_cluster(&[], [1.0, 1.0]).unwrap().is_empty());
    }

    #[test]
    fn pixel_world_examples() {
        let g = RasterGeometry { pitch: 1.0, origin: [-16.0, 16.0] };
        // a 45° world line through the image centre
        let world = RoadLine { rho: 0.0, alpha: PI / 4.0, support: 0, width: 0.0 };
        let px = world_to_pixel(&world, &g);
        let back = pixel_to_world(&px, &g);
        assert!(back.rho.abs() < 1e-12 && (back.alpha - PI / 4.0).abs() < 1e-12);

        let g2 = RasterGeometry { pitch: 2.0, origin: [0.0, 0.0] };
        let l = RoadLine { rho: 7.0, alpha: 0.3, support: 0, width: 1.0 };
        assert!((pixel_to_world(&l, &g2).rho - 14.0).abs() < 1e-12);
    }

    #[test]
    fn pairing_merges_parallel_edges() {
        let l = |rho: f64, deg: f64, support| RoadLine { rho, alpha: deg.to_radians(), support, width: 0.0 };
        let out = pair_edges(vec![l(10.0, 30.0, 50), l(-10.0, 40.0, 5), l(20.0, 31.0, 40)], 12.0, 5f64.to_radians());
        assert_eq!(out.len(), 2);
        assert!((out[0].rho - 15.0).abs() < 1e-12 && (out[0].alpha.to_degrees() - 30.5).abs() < 1e-9);
        assert_eq!((out[0].width, out[0].support), (10.0, 90));
        assert_eq!(out[1].support, 5);
        // across the ±90° seam
        let seam = pair_edges(vec![l(4.0, 89.0, 9), l(-12.0, -89.0, 8)], 12.0, 5f64.to_radians());
        assert_eq!(seam.len(), 1);
        assert!((seam[0].rho - 8.0).abs() < 1e-9 && (seam[0].alpha.to_degrees() - 90.0).abs() < 1e-9);
        assert_eq!(pair_edges(vec![l(0.0, 0.0, 1), l(5.0, 0.0, 1)], 0.0, 0.1).len(), 2);
    }

    proptest! {
        #[test]
        fn world_pixel_round_trip(
            rho in -100.0f64..100.0,
            alpha in (-PI / 2.0 + 1e-6)..(PI / 2.0),
            pitch in 0.1f64..5.0,
            ox in -100.0f64..100.0,
            oy in -100.0f64..100.0,
        ) {
            let g = RasterGeometry { pitch, origin: [ox, oy] };
            let l = RoadLine { rho, alpha, support: 0, width: 2.0 };
            let back = pixel_to_world(&world_to_pixel(&l, &g), &g);
            prop_assert!((back.rho - rho).abs() < 1e-9);
            prop_assert!((back.alpha - alpha).abs() < 1e-9);
        }

        #[test]
        fn mean_shift_is_order_independent(
            pts in proptest::collection::vec((0.0f64..60.0, -1.5f64..1.5), 1..25),
            seed in any::<u64>(),
        ) {
            let pts: Vec<[f64; 2]> = pts.into_iter().map(|(a, b)| [a, b]).collect();
            let mut shuffled = pts.clone();
            let mut s = seed;
            for i in (1..shuffled.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (s >> 33) as usize % (i + 1));
            }
            let mut a: Vec<[f64; 2]> = mean_shift_cluster(&pts, [5.0, 0.09]).unwrap().into_iter().map(|c| c.center).collect();
            let mut b: Vec<[f64; 2]> = mean_shift_cluster(&shuffled, [5.0, 0.09]).unwrap().into_iter().map(|c| c.center).collect();
            a.sort_by(|x, y| x[0].total_cmp(&y[0]).then(x[1].total_cmp(&y[1])));
            b.sort_by(|x, y| x[0].total_cmp(&y[0]).then(x[1].total_cmp(&y[1])));
            prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x[0] - y[0]).abs() < 1e-6 && (x[1] - y[1]).abs() < 1e-6);
            }
        }

        #[test]
        fn dilation_and_filtering_are_monotone(cells in proptest::collection::vec((0usize..20, 0usize..20), 0..60), r in 0usize..3, area in 0usize..10) {
            let img = blob(20, 20, &cells);
            let d = dilate_disk(&img, r);
            prop_assert!(img.data.iter().zip(&d.data).all(|(a, b)| !a || *b));
            let f = connected_components_filter(&d, area);
            prop_assert!(f.data.iter().zip(&d.data).all(|(a, b)| !a || *b));
        }

        #[test]
        fn hough_conserves_votes(cells in proptest::collection::vec((0usize..30, 0usize..30), 0..80)) {
            let img = blob(30, 30, &cells);
            let acc = hough(&img, 1.0, 2f64.to_radians()).unwrap();
            prop_assert_eq!(acc.total(), img.count() as u64 * acc.alphas.len() as u64);
        }
    }
}
