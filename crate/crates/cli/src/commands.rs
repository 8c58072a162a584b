//! Subcommand implementations over files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use log::info;
use sarmover_core::backproj::direct_static;
use sarmover_core::pipeline::{form_static_image, image_raster, road_image, scene_roads};
use sarmover_core::roaddet::RoadStages;
use sarmover_core::scene::load_scenario;
use sarmover_core::{
    detect_roads, full_run, simulate, Acquisition, AntennaPattern, Context, CosineElevation, Error, GrayImage,
    GridSpec, Isotropic, PipelineConfig, RangeProfile, Report, Result, RoadLine, Scenario,
};

use crate::export::write_db_pgm;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum PatternKind {
    #[default]
    Isotropic,
    /// Gain `cos(elevation)`.
    Cosine,
}

impl PatternKind {
    pub fn pattern(&self) -> &'static dyn AntennaPattern {
        match self {
            PatternKind::Isotropic => &Isotropic,
            PatternKind::Cosine => &CosineElevation,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum ImageMode {
    /// 2-D MLDD static image.
    #[default]
    Static,
    /// Brute-force static backprojection.
    Direct,
}

pub fn read_profile(path: &Path) -> Result<RangeProfile> {
    RangeProfile::read_from(BufReader::new(File::open(path)?))
}

pub fn write_profile(path: &Path, profile: &RangeProfile) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    profile.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_scenario(path: &Path) -> Result<Scenario> {
    load_scenario(&std::fs::read_to_string(path)?)
}

pub fn read_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        None => Ok(PipelineConfig::default()),
        Some(p) => toml::from_str(&std::fs::read_to_string(p)?)
            .map_err(|e| Error::Format(format!("{}: {}", p.display(), e.message()))),
    }
}

fn write_lines(path: &Path, lines: &[RoadLine]) -> Result<()> {
    let text = serde_json::to_string_pretty(lines).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Grid of the scenario, if one was given and it was written for this radar.
fn grid_for(profile: &RangeProfile, scenario: Option<&Scenario>) -> Result<GridSpec> {
    match scenario {
        None => Ok(GridSpec::for_radar(&profile.radar)),
        Some(s) if s.radar == profile.radar => Ok(s.grid),
        Some(_) => Err(Error::InvalidConfig("scene radar does not match the range profile".into())),
    }
}

pub fn cmd_simulate(scene: &Path, out: &Path, pattern: PatternKind) -> Result<RangeProfile> {
    let scenario = read_scenario(scene)?;
    let profile = simulate(&scenario.scene, &scenario.radar, pattern.pattern())?;
    write_profile(out, &profile)?;
    info!("wrote {} ({} x {} samples)", out.display(), profile.n(), profile.n());
    Ok(profile)
}

pub struct ImageArgs<'a> {
    pub profile: &'a Path,
    pub out: &'a Path,
    pub mode: ImageMode,
    pub dynamic_range_db: f64,
    pub nc: usize,
    pub pattern: PatternKind,
    pub scene: Option<&'a Path>,
}

pub fn cmd_image(args: &ImageArgs) -> Result<GrayImage> {
    let profile = read_profile(args.profile)?;
    let scenario = args.scene.map(read_scenario).transpose()?;
    let spec = grid_for(&profile, scenario.as_ref())?;
    let n = profile.n();
    let img = match args.mode {
        ImageMode::Static => {
            let acq = Acquisition::new(&profile.radar);
            let cfg = PipelineConfig { nc: args.nc, ..PipelineConfig::default() };
            let ctx = Context { acq: &acq, pattern: args.pattern.pattern(), grid: spec, cfg: &cfg };
            form_static_image(&profile, &ctx)?
        }
        ImageMode::Direct => direct_static(&profile, &spec.spatial(n), n.trailing_zeros(), args.pattern.pattern())?,
    };
    let raster = image_raster(&img);
    write_db_pgm(args.out, &raster, args.dynamic_range_db, None)?;
    Ok(raster)
}

pub struct DetectArgs<'a> {
    pub profile: &'a Path,
    pub report: &'a Path,
    pub image: Option<&'a Path>,
    pub config: Option<&'a Path>,
    pub scene: Option<&'a Path>,
    /// Use the scene's roads instead of extracting them from the image.
    pub known_roads: bool,
    pub pattern: PatternKind,
    pub dynamic_range_db: f64,
}

/// Annotated image path next to the report when none is given.
pub fn default_image_path(report: &Path) -> PathBuf {
    report.with_extension("pgm")
}

pub fn cmd_detect(args: &DetectArgs) -> Result<Report> {
    let profile = read_profile(args.profile)?;
    let mut cfg = read_config(args.config)?;
    let scenario = args.scene.map(read_scenario).transpose()?;
    let spec = grid_for(&profile, scenario.as_ref())?;
    if args.known_roads {
        let s = scenario
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("known roads need a scene file".into()))?;
        cfg.known_roads = Some(scene_roads(&s.scene.roads));
    }
    let acq = Acquisition::new(&profile.radar);
    let ctx = Context { acq: &acq, pattern: args.pattern.pattern(), grid: spec, cfg: &cfg };
    let out = full_run(&profile, &ctx)?;
    for t in &out.report.timings {
        info!("{}: {:.3} s", t.stage, t.seconds);
    }
    for e in &out.report.errors {
        log::warn!("{e}");
    }
    std::fs::write(args.report, out.report.to_json()? + "\n")?;
    let image = args.image.map(Path::to_path_buf).unwrap_or_else(|| default_image_path(args.report));
    write_db_pgm(&image, &image_raster(&out.image), args.dynamic_range_db, Some(&out.overlay))?;
    Ok(out.report)
}

pub struct RoadsArgs<'a> {
    pub profile: &'a Path,
    pub out: &'a Path,
    pub config: Option<&'a Path>,
    pub scene: Option<&'a Path>,
    /// Optional PGM of the Canny edge map.
    pub edges: Option<&'a Path>,
    pub nc: Option<usize>,
    pub pattern: PatternKind,
}

pub fn cmd_roads(args: &RoadsArgs) -> Result<Vec<RoadLine>> {
    let profile = read_profile(args.profile)?;
    let mut cfg = read_config(args.config)?;
    if let Some(nc) = args.nc {
        cfg.nc = nc;
    }
    let scenario = args.scene.map(read_scenario).transpose()?;
    let spec = grid_for(&profile, scenario.as_ref())?;
    let acq = Acquisition::new(&profile.radar);
    let ctx = Context { acq: &acq, pattern: args.pattern.pattern(), grid: spec, cfg: &cfg };
    let img = form_static_image(&profile, &ctx)?;
    let gray = road_image(&img, profile.radar.range_resolution(), &cfg);
    let RoadStages { edges, lines, .. } = detect_roads(&gray, &cfg.roads)?;
    if let Some(path) = args.edges {
        let mut w = BufWriter::new(File::create(path)?);
        edges.write_pgm(&mut w)?;
        w.flush()?;
    }
    write_lines(args.out, &lines)?;
    Ok(lines)
}
