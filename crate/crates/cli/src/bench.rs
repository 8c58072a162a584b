//! Wall-clock scaling harness.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use clap::ValueEnum;
use sarmover_core::backproj::direct_static;
use sarmover_core::echo::simulate_targets;
use sarmover_core::pipeline::{form_static_image, four_d_detect, road_pass};
use sarmover_core::{
    Acquisition, Context, Error, GridSpec, Isotropic, MlddConfig, PipelineConfig, PointTarget, Pyramid,
    RadarConfig, RangeProfile, Result, RoadLine,
};

/// Largest `N` accepted by the brute-force and full 4-D runs.
pub const QUARTIC_CAP: usize = sarmover_core::mldd::FULL_4D_MAX_N;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Algorithm {
    /// Brute-force static backprojection.
    Direct,
    /// MLDD full-resolution position-velocity image.
    MlddFull4d,
    /// 4-D MLDD detection at `⌈L_max/2⌉` plus window upgrades.
    Adaptive4d,
    /// One road, one cross offset, 2-D detection at `⌈L_max/2⌉`.
    RoadBased,
    /// 2-D MLDD static image.
    Static2d,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Direct,
        Algorithm::MlddFull4d,
        Algorithm::Adaptive4d,
        Algorithm::RoadBased,
        Algorithm::Static2d,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            Algorithm::Direct => "direct",
            Algorithm::MlddFull4d => "mldd_full4d",
            Algorithm::Adaptive4d => "adaptive4d",
            Algorithm::RoadBased => "road_based",
            Algorithm::Static2d => "static2d",
        }
    }

    fn capped(&self) -> bool {
        matches!(self, Algorithm::Direct | Algorithm::MlddFull4d)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.id() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRecord {
    pub algorithm: Algorithm,
    pub n: usize,
    pub nc: usize,
    /// Detection level; the top level for full images.
    pub ld: u32,
    /// Median over the timed repeats.
    pub seconds: f64,
    /// Kernel evaluations (direct) or grid cells over the MLDD levels.
    pub ops: u64,
}

impl BenchRecord {
    pub const CSV_HEADER: &'static str = "algorithm,n,nc,ld,seconds,ops";

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{},{:.6e},{}", self.algorithm, self.n, self.nc, self.ld, self.seconds, self.ops)
    }
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub algorithms: Vec<Algorithm>,
    pub repeats: usize,
    pub nc: usize,
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::InvalidConfig("repeats must be at least 1".into()));
        }
        for &n in &self.sizes {
            if !n.is_power_of_two() || n < self.nc {
                return Err(Error::InvalidConfig(format!(
                    "N = {n} must be a power of two no smaller than N_c = {}",
                    self.nc
                )));
            }
            for a in &self.algorithms {
                if a.capped() && n > QUARTIC_CAP {
                    return Err(Error::InvalidConfig(format!("{a} is capped at N <= {QUARTIC_CAP}, got {n}")));
                }
            }
        }
        Ok(())
    }
}

/// Static point and an on-road mover at the demo geometry.
pub fn bench_profile(n: usize) -> RangeProfile {
    let radar = RadarConfig::demo(n);
    let acq = Acquisition::new(&radar);
    let targets = [
        PointTarget::stationary([-6.0, 4.0], 1.0),
        PointTarget { position: [0.0, 0.0], velocity: [-0.16, -0.16], amplitude: 1.0, phase: 0.0 },
    ];
    simulate_targets(&targets, &radar, &acq, &Isotropic)
}

/// One timed run; returns the detection level and the op count.
pub fn run_once(alg: Algorithm, profile: &RangeProfile, nc: usize) -> Result<(u32, u64)> {
    let n = profile.n();
    let lmax = n.trailing_zeros();
    let half = lmax.div_ceil(2).max(nc.trailing_zeros());
    let acq = Acquisition::new(&profile.radar);
    let spec = GridSpec::for_radar(&profile.radar);
    let cfg = PipelineConfig {
        nc,
        road_level: Some(half),
        fallback_level: Some(half),
        ..PipelineConfig::default()
    };
    let ctx = Context { acq: &acq, pattern: &Isotropic, grid: spec, cfg: &cfg };
    match alg {
        Algorithm::Direct => {
            direct_static(profile, &spec.spatial(n), lmax, &Isotropic)?;
            Ok((lmax, (n * n * n * n) as u64))
        }
        Algorithm::MlddFull4d => {
            let p = Pyramid::new(profile, &acq, &Isotropic, spec.four_d(n), MlddConfig::full(nc, n))?;
            p.full_image()?;
            Ok((lmax, p.cells_evaluated()))
        }
        Algorithm::Adaptive4d => {
            four_d_detect(profile, &ctx)?;
            Ok((half, pyramid_cells(n, nc, half, 4)))
        }
        Algorithm::RoadBased => {
            let road = RoadLine { rho: 0.0, alpha: (-45f64).to_radians(), support: 0, width: 0.0 };
            road_pass(profile, &ctx, &road, Some(0), 0.0)?;
            Ok((half, pyramid_cells(n, nc, half, 2)))
        }
        Algorithm::Static2d => {
            form_static_image(profile, &ctx)?;
            Ok((lmax, pyramid_cells(n, nc, lmax, 2)))
        }
    }
}

/// Cells of MLDD levels `base..=top` over `dims` imaged axes.
fn pyramid_cells(n: usize, nc: usize, top: u32, dims: u32) -> u64 {
    let n = n as u64;
    (nc.trailing_zeros()..=top)
        .map(|l| (n >> l).pow(2) * (1u64 << l).pow(dims))
        .sum()
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

/// Time every algorithm at every size. Simulation is outside the timed
/// region and the first run of each pair is discarded.
pub fn run_bench(cfg: &BenchConfig, mut progress: impl FnMut(&BenchRecord)) -> Result<Vec<BenchRecord>> {
    cfg.validate()?;
    let mut records = Vec::new();
    for &n in &cfg.sizes {
        let profile = bench_profile(n);
        for &alg in &cfg.algorithms {
            run_once(alg, &profile, cfg.nc)?;
            let mut times = Vec::with_capacity(cfg.repeats);
            let mut last = (0, 0);
            for _ in 0..cfg.repeats {
                let t = Instant::now();
                last = run_once(alg, &profile, cfg.nc)?;
                times.push(t.elapsed().as_secs_f64().max(f64::MIN_POSITIVE));
            }
            let rec = BenchRecord {
                algorithm: alg,
                n,
                nc: cfg.nc,
                ld: last.0,
                seconds: median(times),
                ops: last.1,
            };
            progress(&rec);
            records.push(rec);
        }
    }
    Ok(records)
}

/// Least-squares slope of `log₂ y` against `log₂ x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let pts: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.log2(), y.log2())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Time slope per algorithm, in the order algorithms first appear.
pub fn slopes(records: &[BenchRecord]) -> Vec<(Algorithm, Option<f64>)> {
    let mut algs: Vec<Algorithm> = Vec::new();
    for r in records {
        if !algs.contains(&r.algorithm) {
            algs.push(r.algorithm);
        }
    }
    algs.into_iter()
        .map(|a| {
            let pts: Vec<(f64, f64)> = records
                .iter()
                .filter(|r| r.algorithm == a)
                .map(|r| (r.n as f64, r.seconds))
                .collect();
            (a, log_log_slope(&pts))
        })
        .collect()
}

pub fn write_csv<W: Write>(mut w: W, records: &[BenchRecord]) -> Result<()> {
    writeln!(w, "{}", BenchRecord::CSV_HEADER)?;
    for r in records {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}

pub fn slope_summary(records: &[BenchRecord]) -> String {
    let mut s = String::new();
    for (a, slope) in slopes(records) {
        match slope {
            Some(k) => s.push_str(&format!("{a}: slope {k:.2}\n")),
            None => s.push_str(&format!("{a}: slope n/a\n")),
        }
    }
    s
}
