use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rfprim::fit::MeasurementSet;
use rfprim_cli::HeatmapGrid;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rfprim"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let o = run(args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(' ')))
        .unwrap_or_else(|| panic!("no '{key}' in {text}"))
        .trim()
        .parse()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const FREE_SPACE: &str = r#"
frequencies = [2.4e9]

[bounds]
min = [-5.0, -5.0, -5.0]
max = [5.0, 5.0, 5.0]

[[radios]]
id = "tx"
role = "tx"
position = [0.0, 0.0, 0.0]

[[radios]]
id = "near"
role = "rx"
position = [1.0, 0.0, 0.0]

[[radios]]
id = "far"
role = "rx"
position = [2.0, 0.0, 0.0]
"#;

/// Absorbing wall between the transmitter and the +y half plane.
const SHADOW: &str = r#"
frequencies = [2.4e9]

[bounds]
min = [-5.0, -5.0, -2.0]
max = [5.0, 5.0, 2.0]

[[radios]]
id = "tx"
role = "tx"
position = [0.0, 0.0, 0.0]

[[primitives]]
id = "wall"
shape = { type = "box", center = [0.0, 0.0, 0.0], half = [1.0, 0.1, 1.5] }
surface = "absorber"
translation = [0.0, 1.0, 0.0]
"#;

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn free_space_doubling_costs_six_db() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write(dir.path(), "free.toml", FREE_SPACE);
    let near = value(&ok(&["simulate", "--scene", s(&scene), "--tx", "tx", "--rx", "near"]), "power_db");
    let far = value(&ok(&["simulate", "--scene", s(&scene), "--tx", "tx", "--rx", "far"]), "power_db");
    assert!((near - far - 6.02).abs() <= 0.1, "{near} {far}");
}

#[test]
fn simulate_is_deterministic_and_lists_paths() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write(dir.path(), "shadow.toml", &format!("{SHADOW}\n[[radios]]\nid = \"rx\"\nrole = \"rx\"\nposition = [2.0, -1.0, 0.5]\n"));
    let args = ["simulate", "--scene", s(&scene), "--tx", "tx", "--rx", "rx", "--seed", "3", "--rays", "20000", "--paths"];
    let a = ok(&args);
    assert_eq!(a, ok(&args));
    assert!(a.contains("ray,interactions,length_m,delay_ns,power_db"));
    assert!(value(&a, "paths") >= 1.0);
}

#[test]
fn bad_inputs_exit_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write(dir.path(), "free.toml", FREE_SPACE);
    let o = run(&["simulate", "--scene", s(&scene), "--tx", "tx", "--rx", "nobody"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown radio id"));

    let broken = write(dir.path(), "broken.toml", "frequencies = [2.4e9]\n[[radios]]\nid = 3\n");
    let o = run(&["simulate", "--scene", s(&broken), "--tx", "tx", "--rx", "near"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());

    assert_eq!(run(&["simulate", "--scene", s(&scene)]).status.code(), Some(2));
    assert_eq!(run(&["simulate", "--scene", "/no/such/file.toml", "--tx", "tx", "--rx", "near"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn help_lists_flags() {
    let top = ok(&["--help"]);
    for c in ["simulate", "gen-synthetic", "train", "adapt", "evaluate", "heatmap", "oracle", "--workers"] {
        assert!(top.contains(c), "{c}");
    }
    let h = ok(&["train", "--help"]);
    for f in ["--scene", "--dataset", "--out", "--iters", "--batch", "--lr", "--seed", "--rays", "--max-depth", "--config"] {
        assert!(h.contains(f), "{f}");
    }
    let h = ok(&["heatmap", "--help"]);
    for f in ["--grid", "--cell", "--origin", "--floor-db", "--pgm"] {
        assert!(h.contains(f), "{f}");
    }
    assert!(ok(&["oracle", "--help"]).contains("--compare"));
    assert!(ok(&["gen-synthetic", "--help"]).contains("--noise-db"));
    assert!(ok(&["simulate", "--help"]).contains("--paths"));
}

#[test]
fn synthetic_datasets_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write(dir.path(), "shadow.toml", SHADOW);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let gen = |out: &Path| ok(&["gen-synthetic", "--scene", s(&scene), "--tx", "tx", "--n", "100", "--out", s(out), "--seed", "5", "--rays", "4096"]);
    gen(&a);
    gen(&b);
    let data = MeasurementSet::load(&a).unwrap();
    assert_eq!(data.len(), 100);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    // re-predict a record through `simulate`
    let r = data.records().iter().find(|r| r.power_db() > -100.0).unwrap();
    let probe = write(
        dir.path(),
        "probe.toml",
        &format!("{SHADOW}\n[[radios]]\nid = \"rx\"\nrole = \"rx\"\nposition = [{:?}, {:?}, {:?}]\n", r.rx.x, r.rx.y, r.rx.z),
    );
    let sim = value(&ok(&["simulate", "--scene", s(&probe), "--tx", "tx", "--rx", "rx", "--seed", "5", "--rays", "4096"]), "power_db");
    assert!((sim - r.power_db()).abs() <= 1e-9, "{sim} vs {}", r.power_db());

    let eval = ok(&["evaluate", "--scene", s(&scene), "--dataset", s(&a), "--seed", "5", "--rays", "4096"]);
    assert!(eval.contains("median_db 0.00"), "{eval}");
    assert!(eval.contains("records 100"));

    for n in ["0", "-3"] {
        let o = run(&["gen-synthetic", "--scene", s(&scene), "--tx", "tx", "--n", n, "--out", s(&a)]);
        assert_eq!(o.status.code(), Some(2), "n = {n}");
    }
    let noisy = dir.path().join("noisy.csv");
    ok(&["gen-synthetic", "--scene", s(&scene), "--tx", "tx", "--n", "20", "--out", s(&noisy), "--seed", "5", "--rays", "4096", "--noise-db", "2"]);
    let eval = ok(&["evaluate", "--scene", s(&scene), "--dataset", s(&noisy), "--seed", "5", "--rays", "4096"]);
    assert!(value(&eval, "median_db") > 0.1);
    let complex = dir.path().join("complex.csv");
    ok(&["gen-synthetic", "--scene", s(&scene), "--tx", "tx", "--n", "10", "--out", s(&complex), "--kind", "complex", "--snapshots", "3", "--rays", "4096"]);
    let eval = ok(&["evaluate", "--scene", s(&scene), "--dataset", s(&complex), "--rays", "4096"]);
    assert!(eval.contains("snr_db 140.00"), "{eval}");
}

#[test]
fn heatmaps() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write(dir.path(), "shadow.toml", SHADOW);
    let csv = dir.path().join("map.csv");
    let pgm = dir.path().join("map.pgm");
    let common = ["--scene", s(&scene), "--tx", "tx", "--seed", "2", "--rays", "200000"];
    // rows y = -2.5 (open) and y = 2.5 (behind the wall), x in [-0.5, 0.5]
    let mut args = vec!["heatmap", "--grid", "3x2", "--cell", "5.0", "--origin", "-0.5,-2.5,0.0", "--out", s(&csv), "--pgm", s(&pgm)];
    args.extend(common);
    let o = run(&args);
    assert_eq!(o.status.code(), Some(2), "grid leaves the bounds");
    let mut args = vec!["heatmap", "--grid", "3x2", "--cell", "0.5", "--origin", "-0.5,-2.5,0.0", "--out", s(&csv), "--pgm", s(&pgm)];
    args.extend(common);
    ok(&args);
    let text = std::fs::read_to_string(&csv).unwrap();
    let map = HeatmapGrid::parse_csv(&text).unwrap();
    assert_eq!(map.to_csv(), text);
    assert_eq!((map.nx, map.ny), (3, 2));
    let bytes = std::fs::read(&pgm).unwrap();
    assert!(bytes.starts_with(b"P5\n3 2\n255\n"));
    assert_eq!(bytes.len(), b"P5\n3 2\n255\n".len() + 6);

    // second row sits at y = -2.0; compare with a grid mirrored behind the wall
    let mirrored = dir.path().join("mirror.csv");
    let mut args = vec!["heatmap", "--grid", "3x1", "--cell", "0.5", "--origin", "-0.5,2.0,0.0", "--out", s(&mirrored)];
    args.extend(common);
    ok(&args);
    let behind = HeatmapGrid::parse_csv(&std::fs::read_to_string(&mirrored).unwrap()).unwrap();
    for i in 0..3 {
        let open = map.get(i, 1);
        let shadowed = behind.get(i, 0);
        assert!(shadowed <= open - 10.0, "cell {i}: {shadowed} vs {open}");
    }

    // a 1x1 grid is a single simulation
    let one = dir.path().join("one.csv");
    let mut args = vec!["heatmap", "--grid", "1x1", "--cell", "0.1", "--origin", "2.0,-1.0,0.5", "--out", s(&one)];
    args.extend(common);
    ok(&args);
    let cell = HeatmapGrid::parse_csv(&std::fs::read_to_string(&one).unwrap()).unwrap().values[0];
    let probe = write(dir.path(), "probe.toml", &format!("{SHADOW}\n[[radios]]\nid = \"rx\"\nrole = \"rx\"\nposition = [2.0, -1.0, 0.5]\n"));
    let sim = value(&ok(&["simulate", "--scene", s(&probe), "--tx", "tx", "--rx", "rx", "--seed", "2", "--rays", "200000"]), "power_db");
    assert_eq!(cell.to_bits(), sim.to_bits());
}

const FLOOR_OBJ: &str = "v -10 -10 0\nv 10 -10 0\nv 10 10 0\nv -10 10 0\nusemtl concrete\nf 1 2 3 4\n";

#[test]
fn oracle_lists_image_paths() {
    let dir = tempfile::tempdir().unwrap();
    let floor = write(dir.path(), "floor.obj", FLOOR_OBJ);
    let out = ok(&["oracle", "--mesh", s(&floor), "--tx", "0,0,1.5", "--rx", "4,0,1.0"]);
    assert_eq!(value(&out, "paths"), 2.0);
    let rows: Vec<&str> = out.lines().skip_while(|l| !l.starts_with("path,")).skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().any(|r| r.starts_with("0,0,0,") || r.starts_with("1,0,0,")));
    assert!(rows.iter().any(|r| r.split(',').nth(1) == Some("1")));

    let empty = write(dir.path(), "empty.obj", "# nothing\n");
    let out = ok(&["oracle", "--mesh", s(&empty), "--tx", "0,0,1.5", "--rx", "4,0,1.0"]);
    assert_eq!(value(&out, "paths"), 1.0);
    // free-space field 1/d at d = 4.03...
    let d = (16.0f64 + 0.25).sqrt();
    assert!((value(&out, "power_db") + 20.0 * d.log10()).abs() < 1e-9);

    let bad = write(dir.path(), "bad.obj", "v 0 0 0\nf 1 2 3\n");
    assert_ne!(run(&["oracle", "--mesh", s(&bad), "--tx", "0,0,1", "--rx", "1,0,1"]).status.code(), Some(0));
}

#[test]
fn oracle_compare_agrees_with_the_neural_engine() {
    let dir = tempfile::tempdir().unwrap();
    let floor = write(dir.path(), "floor.obj", FLOOR_OBJ);
    let scene = write(
        dir.path(),
        "floor.toml",
        r#"
frequencies = [2.4e9]

[bounds]
min = [-6.0, -6.0, -1.0]
max = [6.0, 6.0, 4.0]

[[primitives]]
id = "floor"
shape = { type = "plane", normal = [0.0, 0.0, 1.0], offset = 0.0 }
material = "concrete"
"#,
    );
    let cfg = write(dir.path(), "run.toml", "[tracer]\nmode = \"split\"\ncapture_radius = 0.25\nroulette = 0.0\n");
    for rx in ["3,0,1.0", "2,1.5,1.2", "-2.5,1,0.8"] {
        let out = ok(&[
            "oracle", "--mesh", s(&floor), "--tx", "0,0,1.5", "--rx", rx, "--compare", s(&scene), "--config", s(&cfg), "--rays", "262144",
            "--max-depth", "1",
        ]);
        let delta = value(&out, "delta_db");
        assert!(delta.abs() <= 1.0, "{rx}: {delta}");
    }
}

#[test]
fn workers_flag_and_logging() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write(dir.path(), "free.toml", FREE_SPACE);
    let args = ["--workers", "1", "simulate", "--scene", s(&scene), "--tx", "tx", "--rx", "near", "--rays", "8192"];
    let one = ok(&args);
    let many = ok(&["simulate", "--scene", s(&scene), "--tx", "tx", "--rx", "near", "--rays", "8192"]);
    assert_eq!(one, many);
    let o = bin().args(args).env("RFSCAPE_LOG", "debug").output().unwrap();
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap(), one);
    assert_eq!(run(&["--workers", "0", "simulate", "--scene", s(&scene), "--tx", "tx", "--rx", "near"]).status.code(), Some(2));
}
