use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sarmover_core::Report;
use tempfile::TempDir;

const HEADER_LEN: usize = 68;

fn sarmover(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sarmover"))
        .args(args)
        .output()
        .expect("spawn sarmover")
}

fn ok(args: &[&str]) -> Output {
    let out = sarmover(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn scenario(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn p(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_scene(dir: &TempDir, body: &str) -> PathBuf {
    let path = p(dir, "scene.toml");
    let radar = "[radar]\nn = 16\ncarrier_hz = 3e9\nrange_resolution = 4.0\nradius = 200.0\naltitude = 200.0\n";
    std::fs::write(&path, format!("name = \"t\"\n{radar}{body}")).unwrap();
    path
}

/// Header fields and 16-bit big-endian samples.
fn read_pgm(path: &Path) -> (usize, usize, Vec<u16>) {
    let bytes = std::fs::read(path).unwrap();
    let mut fields = Vec::new();
    let mut k = 0;
    while fields.len() < 4 {
        while bytes[k].is_ascii_whitespace() {
            k += 1;
        }
        let start = k;
        while !bytes[k].is_ascii_whitespace() {
            k += 1;
        }
        fields.push(String::from_utf8(bytes[start..k].to_vec()).unwrap());
    }
    assert_eq!(fields[0], "P5");
    assert_eq!(fields[3], "65535");
    let (w, h) = (fields[1].parse().unwrap(), fields[2].parse().unwrap());
    let data = &bytes[k + 1..];
    assert_eq!(data.len(), 2 * w * h);
    (w, h, data.chunks(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect())
}

#[test]
fn simulate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (p(&dir, "a.sarp"), p(&dir, "b.sarp"));
    ok(&["simulate", &scenario("two_targets.toml"), "-o", s(&a)]);
    ok(&["simulate", &scenario("two_targets.toml"), "-o", s(&b)]);
    let (a, b) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    assert_eq!(a.len(), HEADER_LEN + 64 * 64 * 16);
    assert!(a == b);
}

#[test]
fn empty_scene_gives_zero_samples() {
    let dir = TempDir::new().unwrap();
    let scene = write_scene(&dir, "");
    let out = p(&dir, "e.sarp");
    ok(&["simulate", s(&scene), "-o", s(&out)]);
    let bytes = std::fs::read(&out).unwrap();
    assert_eq!(&bytes[0..4], b"SARP");
    assert_eq!(bytes.len(), HEADER_LEN + 16 * 16 * 16);
    assert!(bytes[HEADER_LEN..].iter().all(|&b| b == 0));
}

#[test]
fn image_peak_is_white_and_rerun_identical() {
    let dir = TempDir::new().unwrap();
    let prof = p(&dir, "t.sarp");
    ok(&["simulate", &scenario("two_targets.toml"), "-o", s(&prof)]);
    let (a, b) = (p(&dir, "a.pgm"), p(&dir, "b.pgm"));
    ok(&["image", s(&prof), "-o", s(&a)]);
    ok(&["image", s(&prof), "-o", s(&b)]);
    let (w, h, px) = read_pgm(&a);
    assert_eq!((w, h), (64, 64));
    assert_eq!(px.iter().filter(|&&v| v == 65535).count(), 1);
    assert!(std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap());
    let sidecar = std::fs::read_to_string(dir.path().join("a.dbscale.txt")).unwrap();
    assert!(!sidecar.is_empty());
}

#[test]
fn zero_profile_images_black() {
    let dir = TempDir::new().unwrap();
    let scene = write_scene(&dir, "");
    let prof = p(&dir, "z.sarp");
    let img = p(&dir, "z.pgm");
    ok(&["simulate", s(&scene), "-o", s(&prof)]);
    ok(&["image", s(&prof), "-o", s(&img)]);
    let (_, _, px) = read_pgm(&img);
    assert!(px.iter().all(|&v| v == 0));
}

#[test]
fn detect_two_targets() {
    let dir = TempDir::new().unwrap();
    let prof = p(&dir, "t.sarp");
    let report = p(&dir, "r.json");
    ok(&["simulate", &scenario("two_targets.toml"), "-o", s(&prof)]);
    let scene = scenario("two_targets.toml");
    ok(&["detect", s(&prof), "-o", s(&report), "--scene", &scene, "--known-roads"]);
    let r = Report::from_json(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r.detections.len(), 2);
    let movers: Vec<_> = r.movers().collect();
    assert_eq!(movers.len(), 1);
    let m = movers[0];
    assert!(m.position[0].abs() <= 1.0 && m.position[1].abs() <= 1.0, "{:?}", m.position);
    assert!(p(&dir, "r.pgm").exists());
}

#[test]
fn detect_extracts_roads_from_clutter() {
    let dir = TempDir::new().unwrap();
    let prof = p(&dir, "c.sarp");
    let report = p(&dir, "c.json");
    let scene = scenario("cluttered_roads.toml");
    ok(&["simulate", &scene, "-o", s(&prof)]);
    ok(&["detect", s(&prof), "-o", s(&report), "--scene", &scene]);
    let r = Report::from_json(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(!r.fallback);
    assert!(r.roads.iter().any(|l| l.rho.abs() < 2.0 && (l.alpha.to_degrees() + 45.0).abs() < 2.0), "{:?}", r.roads);
    let m: Vec<_> = r.movers().collect();
    assert!(
        m.len() == 1 && m[0].position[0].abs() <= 2.0 && m[0].position[1].abs() <= 2.0,
        "{:?}",
        m.iter().map(|d| (d.position, d.velocity)).collect::<Vec<_>>()
    );
}

#[test]
fn detect_static_only_has_no_movers() {
    let dir = TempDir::new().unwrap();
    let two = std::fs::read_to_string(scenario("two_targets.toml")).unwrap();
    let scene = p(&dir, "static.toml");
    std::fs::write(&scene, two.replace("vel = [-0.16, -0.16]", "")).unwrap();
    let prof = p(&dir, "s.sarp");
    let report = p(&dir, "s.json");
    ok(&["simulate", s(&scene), "-o", s(&prof)]);
    ok(&["detect", s(&prof), "-o", s(&report), "--scene", s(&scene), "--known-roads"]);
    let r = Report::from_json(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r.movers().count(), 0);
    assert!(r.detections.iter().all(|d| d.speed() == 0.0));
}

#[test]
fn corrupt_header_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let prof = p(&dir, "t.sarp");
    ok(&["simulate", &scenario("two_targets.toml"), "-o", s(&prof)]);
    let mut bytes = std::fs::read(&prof).unwrap();
    bytes[4] = 3;
    std::fs::write(&prof, &bytes).unwrap();
    let out = sarmover(&["image", s(&prof), "-o", s(&p(&dir, "x.pgm"))]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(&prof, b"junk").unwrap();
    let out = sarmover(&["detect", s(&prof), "-o", s(&p(&dir, "x.json"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_scene_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let scene = p(&dir, "bad.toml");
    std::fs::write(&scene, "[radar]\nn = \"many\"\n").unwrap();
    let out = sarmover(&["simulate", s(&scene), "-o", s(&p(&dir, "x.sarp"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_refuses_quartic_beyond_cap() {
    let out = sarmover(&["bench", "--n", "128", "--algorithms", "direct", "--repeats", "1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bench_writes_csv() {
    let out = ok(&["bench", "--n", "16,32", "--algorithms", "static2d", "--repeats", "1"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("algorithm,n,nc,ld,seconds,ops"));
    assert_eq!(lines.filter(|l| l.starts_with("static2d,")).count(), 2);
}
