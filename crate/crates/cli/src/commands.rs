//! One function per subcommand.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfprim::classical::{path_field, predict_classical, TriangleMesh};
use rfprim::fit::{
    adapt_poses, evaluate, radio_at, synthesize, train_primitives, MeasurementKind, MeasurementSet, Noise, TrainConfig,
};
use rfprim::materials::MaterialTable;
use rfprim::math::Vec3;
use rfprim::scene::config::{load_scene, save_scene, SceneFile};
use rfprim::scene::{Radio, RadioRole, Scene};
use rfprim::tracer::{coverage_map, path_signal, power_db, predict_channel, CoverageGrid, TracerConfig, C};

use crate::args::{Command, DataKind, TracerFlags};
use crate::config::RunConfig;
use crate::heatmap::HeatmapGrid;
use crate::{CliError, CliResult};

pub(crate) fn dispatch(cmd: &Command, out: &mut dyn Write) -> CliResult<()> {
    match cmd {
        Command::Simulate { scene, tx, rx, paths, tracer } => simulate(scene, tx, rx, *paths, tracer, out),
        Command::GenSynthetic { scene, tx, n, out: path, noise_db, kind, snapshots, tracer } => {
            gen_synthetic(scene, tx, *n, path, *noise_db, *kind, *snapshots, tracer, out)
        }
        Command::Train { scene, dataset, out: path, iters, batch, lr, tracer } => {
            train(scene, dataset, path, *iters, *batch, *lr, tracer, out)
        }
        Command::Adapt { scene, dataset, out: path, iters, lr, reference, tracer } => {
            adapt(scene, dataset, path, *iters, *lr, reference.as_deref(), tracer, out)
        }
        Command::Evaluate { scene, dataset, tracer } => evaluate_cmd(scene, dataset, tracer, out),
        Command::Heatmap { scene, tx, grid, cell, origin, out: path, pgm, floor_db, tracer } => {
            heatmap(scene, tx, grid, *cell, origin, path, pgm.as_deref(), *floor_db, tracer, out)
        }
        Command::Oracle { mesh, tx, rx, freq, materials, compare, tracer } => {
            oracle(mesh, tx, rx, *freq, materials.as_deref(), compare.as_deref(), tracer, out)
        }
    }
}

fn usage(m: impl Into<String>) -> CliError {
    CliError::Usage(m.into())
}

fn existing(path: &Path) -> CliResult<&Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(usage(format!("no such file: {}", path.display())))
    }
}

fn scene_at(path: &Path) -> CliResult<Scene> {
    Ok(load_scene(existing(path)?)?)
}

fn dataset_at(path: &Path) -> CliResult<MeasurementSet> {
    Ok(MeasurementSet::load(existing(path)?)?)
}

fn radio(scene: &Scene, id: &str, role: RadioRole) -> CliResult<Radio> {
    let r = scene.radio(id)?;
    if r.role != role {
        return Err(usage(format!("radio '{id}' is not a {}", if role == RadioRole::Tx { "transmitter" } else { "receiver" })));
    }
    Ok(r.clone())
}

pub(crate) fn parse_vec3(s: &str) -> CliResult<Vec3> {
    let v: Vec<f64> = s
        .split(',')
        .map(|c| c.trim().parse::<f64>().map_err(|_| usage(format!("expected x,y,z, got '{s}'"))))
        .collect::<CliResult<_>>()?;
    match v.as_slice() {
        [x, y, z] if v.iter().all(|c| c.is_finite()) => Ok(Vec3::new(*x, *y, *z)),
        _ => Err(usage(format!("expected x,y,z, got '{s}'"))),
    }
}

pub(crate) fn parse_grid(s: &str) -> CliResult<(usize, usize)> {
    let bad = || usage(format!("expected NXxNY, got '{s}'"));
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let (nx, ny) = (a.trim().parse::<usize>().map_err(|_| bad())?, b.trim().parse::<usize>().map_err(|_| bad())?);
    if nx == 0 || ny == 0 {
        return Err(bad());
    }
    Ok((nx, ny))
}

fn tracer_for(flags: &TracerFlags) -> CliResult<(RunConfig, TracerConfig)> {
    let rc = RunConfig::load(flags.config.as_deref())?;
    let t = rc.tracer(TracerConfig::default(), flags)?;
    Ok((rc, t))
}

fn simulate(scene: &Path, tx: &str, rx: &str, paths: bool, flags: &TracerFlags, out: &mut dyn Write) -> CliResult<()> {
    let scene = scene_at(scene)?;
    let (tx, rx) = (radio(&scene, tx, RadioRole::Tx)?, radio(&scene, rx, RadioRole::Rx)?);
    let (_, mut cfg) = tracer_for(flags)?;
    cfg.keep_paths = paths;
    let pred = predict_channel(&scene, &tx, &rx, &cfg)?;
    writeln!(out, "power_db {}", pred.power_db())?;
    writeln!(out, "paths {}", pred.path_count)?;
    if paths {
        let f = pred.frequencies[0];
        writeln!(out, "ray,interactions,length_m,delay_ns,power_db")?;
        for p in &pred.paths {
            for a in &p.arrivals {
                let e = path_signal(p, a, f, tx.amplitude)?;
                writeln!(out, "{},{},{:.6},{:.4},{:.3}", p.ray, p.surface_events().count(), a.tau, a.tau / C * 1e9, power_db(e))?;
            }
        }
    }
    Ok(())
}

/// `n` receiver positions inside the bounds and outside every object.
fn sample_receivers(scene: &Scene, tx: Vec3, n: usize, seed: u64) -> CliResult<Vec<Vec3>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (scene.bounds.min, scene.bounds.max);
    let mut out = Vec::with_capacity(n);
    let mut tries = 0usize;
    while out.len() < n {
        tries += 1;
        if tries > 1000 * n {
            return Err(CliError::Runtime(rfprim::Error::EmptySamples));
        }
        let p = Vec3::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y), rng.random_range(lo.z..hi.z));
        if scene.distance(p) > 0.05 && (p - tx).norm() > 0.25 {
            out.push(p);
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn gen_synthetic(
    scene: &Path,
    tx: &str,
    n: i64,
    path: &Path,
    noise_db: f64,
    kind: DataKind,
    snapshots: usize,
    flags: &TracerFlags,
    out: &mut dyn Write,
) -> CliResult<()> {
    if n <= 0 {
        return Err(usage(format!("--n must be positive, got {n}")));
    }
    if !(noise_db >= 0.0) || snapshots == 0 {
        return Err(usage("--noise-db must be non-negative and --snapshots positive"));
    }
    let scene = scene_at(scene)?;
    let tx = radio(&scene, tx, RadioRole::Tx)?;
    let (_, cfg) = tracer_for(flags)?;
    let positions = sample_receivers(&scene, tx.position, n as usize, cfg.seed)?;
    let (kind, std) = match kind {
        DataKind::Power => (MeasurementKind::PowerDb, noise_db),
        DataKind::Complex => (MeasurementKind::Complex, 10f64.powf(noise_db / 20.0) - 1.0),
    };
    let noise = Noise { std, snapshots, seed: cfg.seed };
    let data = synthesize(&scene, &tx, &positions, scene.frequency(), kind, &cfg, Some(noise))?;
    data.save(path)?;
    writeln!(out, "wrote {} records to {}", data.len(), path.display())?;
    Ok(())
}

fn train_config(rc: &RunConfig, base: TrainConfig, flags: &TracerFlags, iters: Option<usize>, lr: Option<f64>) -> CliResult<TrainConfig> {
    let mut cfg = rc.train(base, flags)?;
    if let Some(i) = iters {
        cfg.iterations = i;
    }
    if let Some(lr) = lr {
        cfg.lr_start = lr;
        cfg.lr_end = lr * 0.1;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn library_name(out: &Path) -> String {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("scene");
    format!("{stem}.rfsc")
}

/// Copy a scene file and the library it references unchanged.
fn copy_scene(src: &Path, dst: &Path) -> CliResult<()> {
    let text = std::fs::read_to_string(src)?;
    if let Some(lib) = SceneFile::parse(&text)?.library {
        let rel = Path::new(&lib);
        if rel.is_relative() {
            let dir = |p: &Path| p.parent().map(Path::to_path_buf).unwrap_or_default();
            let (from, to) = (dir(src).join(rel), dir(dst).join(rel));
            if std::fs::canonicalize(&from).ok() != std::fs::canonicalize(&to).ok() {
                if let Some(parent) = to.parent() {
                    std::fs::create_dir_all(parent)?;
                }
                std::fs::copy(&from, &to)?;
            }
        }
    }
    std::fs::write(dst, text.as_bytes())?;
    Ok(())
}

fn report_path(out: &Path) -> PathBuf {
    out.with_extension("report.csv")
}

fn write_report(path: &Path, loss: &[f64], data: &[f64]) -> CliResult<()> {
    let mut s = String::from("step,objective,data\n");
    for (i, (l, d)) in loss.iter().zip(data).enumerate() {
        s.push_str(&format!("{i},{l},{d}\n"));
    }
    std::fs::write(path, s)?;
    Ok(())
}

fn median_abs(v: &[f64]) -> f64 {
    let mut a: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    a.sort_by(f64::total_cmp);
    if a.is_empty() {
        return f64::NAN;
    }
    rfprim::fit::percentile(&a, 0.5)
}

#[allow(clippy::too_many_arguments)]
fn train(
    scene_path: &Path,
    dataset: &Path,
    path: &Path,
    iters: Option<usize>,
    batch: Option<usize>,
    lr: Option<f64>,
    flags: &TracerFlags,
    out: &mut dyn Write,
) -> CliResult<()> {
    let scene = scene_at(scene_path)?;
    let data = dataset_at(dataset)?;
    let rc = RunConfig::load(flags.config.as_deref())?;
    let mut cfg = train_config(&rc, TrainConfig::default(), flags, iters, lr)?;
    if let Some(b) = batch {
        cfg.batch_size = b;
        cfg.validate()?;
    }
    if cfg.iterations == 0 {
        copy_scene(scene_path, path)?;
        writeln!(out, "0 iterations; scene copied to {}", path.display())?;
        return Ok(());
    }
    let (fitted, rep) = train_primitives(&scene, &data, &cfg)?;
    save_scene(path, &fitted, Some(&library_name(path)))?;
    write_report(&report_path(path), &rep.loss_curve, &rep.data_curve)?;
    writeln!(out, "iterations {}", rep.loss_curve.len())?;
    writeln!(out, "final_objective {:.6}", rep.loss_curve.last().copied().unwrap_or(f64::NAN))?;
    writeln!(out, "final_data {:.6}", rep.data_curve.last().copied().unwrap_or(f64::NAN))?;
    writeln!(out, "eikonal {:.6}", rep.final_eikonal)?;
    writeln!(out, "train_median_db {:.3}", median_abs(&rep.residuals_db))?;
    writeln!(out, "wall_clock_s {:.1}", rep.wall_clock_s)?;
    writeln!(out, "wrote {}", path.display())?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn adapt(
    scene_path: &Path,
    dataset: &Path,
    path: &Path,
    iters: Option<usize>,
    lr: Option<f64>,
    reference: Option<&Path>,
    flags: &TracerFlags,
    out: &mut dyn Write,
) -> CliResult<()> {
    let scene = scene_at(scene_path)?;
    let data = dataset_at(dataset)?;
    let reference = reference.map(scene_at).transpose()?;
    let rc = RunConfig::load(flags.config.as_deref())?;
    let cfg = train_config(&rc, TrainConfig::adaptation(), flags, iters, lr)?;
    if cfg.iterations == 0 {
        copy_scene(scene_path, path)?;
        writeln!(out, "0 iterations; scene copied to {}", path.display())?;
        return Ok(());
    }
    let (fitted, rep) = adapt_poses(&scene, &data, &cfg)?;
    save_scene(path, &fitted, Some(&library_name(path)))?;
    write_report(&report_path(path), &rep.loss_curve, &rep.data_curve)?;
    for p in fitted.primitives.iter().filter(|p| p.dynamic) {
        let (t, q) = (p.pose.translation, p.pose.rotation);
        writeln!(out, "pose {} translation {:.6},{:.6},{:.6} rotation {:.6},{:.6},{:.6},{:.6}", p.id, t.x, t.y, t.z, q.w, q.x, q.y, q.z)?;
        if let Some(r) = &reference {
            let truth = r.primitive(&p.id)?.pose.translation;
            writeln!(out, "translation_error {} {:.6}", p.id, (t - truth).norm())?;
        }
    }
    writeln!(out, "train_median_db {:.3}", median_abs(&rep.residuals_db))?;
    writeln!(out, "wrote {}", path.display())?;
    Ok(())
}

fn evaluate_cmd(scene: &Path, dataset: &Path, flags: &TracerFlags, out: &mut dyn Write) -> CliResult<()> {
    let scene = scene_at(scene)?;
    let data = dataset_at(dataset)?;
    let (_, cfg) = tracer_for(flags)?;
    let m = evaluate(&scene, &data, &cfg)?;
    writeln!(out, "records {}", data.len())?;
    writeln!(out, "median_db {:.2}", m.median_db)?;
    writeln!(out, "p10_db {:.2}", m.p10_db)?;
    writeln!(out, "p90_db {:.2}", m.p90_db)?;
    match m.snr_db {
        Some(s) => writeln!(out, "snr_db {s:.2}")?,
        None => writeln!(out, "snr_db n/a")?,
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn heatmap(
    scene: &Path,
    tx: &str,
    grid: &str,
    cell: f64,
    origin: &str,
    path: &Path,
    pgm: Option<&Path>,
    floor_db: f64,
    flags: &TracerFlags,
    out: &mut dyn Write,
) -> CliResult<()> {
    let scene = scene_at(scene)?;
    let tx = radio(&scene, tx, RadioRole::Tx)?;
    let (nx, ny) = parse_grid(grid)?;
    if !(cell > 0.0) || !cell.is_finite() {
        return Err(usage("--cell must be positive"));
    }
    let g = CoverageGrid { origin: parse_vec3(origin)?, cell, nx, ny };
    if g.positions().iter().any(|p| !scene.bounds.contains(*p)) {
        return Err(usage("grid extends outside the scene bounds"));
    }
    let (_, cfg) = tracer_for(flags)?;
    let values = coverage_map(&scene, &tx, &g, &cfg)?;
    let map = HeatmapGrid::new(g.origin, cell, nx, ny, values)?;
    std::fs::write(path, map.to_csv())?;
    if let Some(p) = pgm {
        std::fs::write(p, map.to_pgm(floor_db))?;
    }
    let finite: Vec<f64> = map.values.iter().copied().filter(|v| v.is_finite()).collect();
    let max = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = finite.iter().copied().fold(f64::INFINITY, f64::min);
    writeln!(out, "grid {nx}x{ny} min_db {min:.2} max_db {max:.2}")?;
    writeln!(out, "wrote {}", path.display())?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn oracle(
    mesh: &Path,
    tx: &str,
    rx: &str,
    freq: f64,
    materials: Option<&Path>,
    compare: Option<&Path>,
    flags: &TracerFlags,
    out: &mut dyn Write,
) -> CliResult<()> {
    if !(freq > 0.0) {
        return Err(usage("--freq must be positive"));
    }
    let mesh = TriangleMesh::load(existing(mesh)?)?;
    let table = match materials {
        Some(p) => MaterialTable::from_toml(&std::fs::read_to_string(existing(p)?)?)?,
        None => MaterialTable::default(),
    };
    let (tx, rx) = (parse_vec3(tx)?, parse_vec3(rx)?);
    let (_, cfg) = tracer_for(flags)?;
    let depth = flags.max_depth.unwrap_or(2);
    let (t, r) = (Radio::tx("tx", tx), Radio::rx("rx", rx));
    let pred = predict_classical(&mesh, &table, &t, &r, &[freq], depth)?;
    writeln!(out, "power_db {}", pred.power_db())?;
    writeln!(out, "paths {}", pred.paths.len())?;
    writeln!(out, "path,bounces,crossings,length_m,delay_ns,power_db")?;
    for (i, p) in pred.paths.iter().enumerate() {
        let e = path_field(p, &table, freq, 1.0)?;
        writeln!(out, "{i},{},{},{:.6},{:.4},{:.3}", p.bounces.len(), p.crossings.len(), p.length, p.length / C * 1e9, power_db(e))?;
    }
    if let Some(path) = compare {
        let mut scene = scene_at(path)?;
        scene.frequencies = vec![freq];
        let (nt, nr) = (radio_at(&scene, RadioRole::Tx, tx), radio_at(&scene, RadioRole::Rx, rx));
        let neural = predict_channel(&scene, &nt, &nr, &cfg)?.power_db();
        writeln!(out, "neural_power_db {neural}")?;
        writeln!(out, "delta_db {:.4}", neural - pred.power_db())?;
    }
    Ok(())
}
