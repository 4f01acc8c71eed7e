//! Adam loops for network parameters and for dynamic-object poses.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::measure::MeasurementSet;
use super::objective::{draw_reg_samples, pin_paths, total_objective, Objective, Pinned, RegSamples, TrainConfig, Wrt};
use crate::autodiff::{lr_schedule_between, AdamState, MlpParams, ParamKey};
use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::scene::{param_key, Payload, Scene, MATERIAL_PART, STRUCTURE_PART};

#[derive(Clone, Debug, PartialEq)]
pub struct FitReport {
    /// Objective value per step.
    pub loss_curve: Vec<f64>,
    /// Data term per step.
    pub data_curve: Vec<f64>,
    pub final_eikonal: f64,
    pub final_laplacian: f64,
    pub wall_clock_s: f64,
    /// Predicted minus measured power (dB) per training record after the
    /// last step.
    pub residuals_db: Vec<f64>,
}

impl FitReport {
    fn empty() -> Self {
        Self { loss_curve: vec![], data_curve: vec![], final_eikonal: 0.0, final_laplacian: 0.0, wall_clock_s: 0.0, residuals_db: vec![] }
    }
}

fn net_mut(scene: &mut Scene, key: ParamKey) -> Option<&mut MlpParams> {
    let np = scene.primitives.get_mut(key.owner as usize)?.as_neural_mut()?;
    match key.part {
        STRUCTURE_PART => Some(Arc::make_mut(&mut np.structure.net)),
        MATERIAL_PART => Some(Arc::make_mut(&mut np.material.net)),
        _ => None,
    }
}

fn draw_batch(n: usize, size: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if size >= n {
        (0..n).collect()
    } else {
        (0..size).map(|_| rng.random_range(0..n)).collect()
    }
}

fn residuals(scene: &Scene, data: &MeasurementSet, cfg: &TrainConfig) -> Result<Vec<f64>> {
    let pinned = pin_paths(scene, data, &cfg.tracer)?;
    let all: Vec<usize> = (0..data.len()).collect();
    let obj = total_objective(scene, data, &all, &pinned, &RegSamples::default(), cfg, Wrt::Nothing)?;
    Ok(obj.fields.iter().zip(data.records()).map(|(e, r)| 10.0 * e.norm_sqr().log10() - r.power_db()).collect())
}

fn check_step(obj: &Objective, it: usize) -> Result<()> {
    if !obj.value.is_finite() || !obj.grads.is_finite() || obj.pose_grads.iter().flatten().any(|g| !g.is_finite()) {
        return Err(Error::Diverged(format!("non-finite objective or gradient at step {it} (objective {})", obj.value)));
    }
    Ok(())
}

/// Fit the networks of every non-frozen neural primitive to `data`.
pub fn train_primitives(scene: &Scene, data: &MeasurementSet, cfg: &TrainConfig) -> Result<(Scene, FitReport)> {
    cfg.validate()?;
    let trainable = scene.primitives.iter().any(|p| !p.frozen && matches!(p.payload, Payload::Neural(_)));
    if !trainable {
        return Err(Error::Config("no trainable neural primitive in the scene".into()));
    }
    let mut scene = scene.clone();
    if cfg.iterations == 0 {
        return Ok((scene, FitReport::empty()));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam: BTreeMap<ParamKey, AdamState> = BTreeMap::new();
    let mut report = FitReport::empty();
    let mut pinned: Option<Pinned> = None;
    let mut last = None;
    for it in 0..cfg.iterations {
        if it % cfg.retrace_every == 0 {
            pinned = Some(pin_paths(&scene, data, &cfg.tracer)?);
        }
        let batch = draw_batch(data.len(), cfg.batch_size, &mut rng);
        let reg = draw_reg_samples(&scene, cfg.reg_samples, &mut rng)?;
        let obj = total_objective(&scene, data, &batch, pinned.as_ref().expect("pinned on step 0"), &reg, cfg, Wrt::Networks)?;
        check_step(&obj, it)?;
        log::debug!("step {it}: objective {:.4} data {:.4} eik {:.5}", obj.value, obj.data, obj.eikonal);
        report.loss_curve.push(obj.value);
        report.data_curve.push(obj.data);
        let lr = lr_schedule_between(it, cfg.iterations, cfg.lr_start, cfg.lr_end);
        let keys: Vec<ParamKey> = obj.grads.keys().collect();
        for key in keys {
            if scene.primitives.get(key.owner as usize).is_none_or(|p| p.frozen) {
                continue;
            }
            let g = obj.grads.get(key).expect("listed key");
            let net = net_mut(&mut scene, key).ok_or_else(|| Error::Config(format!("no network for {key:?}")))?;
            let lr = if key.part == STRUCTURE_PART { lr * cfg.structure_lr_scale } else { lr };
            adam.entry(key).or_insert_with(|| AdamState::new(net.len())).step(net.data_mut(), g, lr)?;
        }
        last = Some((obj.eikonal, obj.laplacian));
    }
    let (e, l) = last.unwrap_or_default();
    report.final_eikonal = e;
    report.final_laplacian = l;
    report.residuals_db = residuals(&scene, data, cfg)?;
    report.wall_clock_s = start.elapsed().as_secs_f64();
    Ok((scene, report))
}

/// Move the dynamic primitives to explain `data`, networks untouched.
pub fn adapt_poses(scene: &Scene, data: &MeasurementSet, cfg: &TrainConfig) -> Result<(Scene, FitReport)> {
    cfg.validate()?;
    let dynamic: Vec<usize> = scene.primitives.iter().enumerate().filter(|(_, p)| p.dynamic).map(|(i, _)| i).collect();
    if dynamic.is_empty() {
        return Err(Error::Config("no dynamic primitive to adapt".into()));
    }
    let mut scene = scene.clone();
    if cfg.iterations == 0 {
        return Ok((scene, FitReport::empty()));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam: Vec<AdamState> = dynamic.iter().map(|_| AdamState::new(6)).collect();
    let mut report = FitReport::empty();
    let mut pinned: Option<Pinned> = None;
    let none = RegSamples::default();
    for it in 0..cfg.iterations {
        if it % cfg.retrace_every == 0 {
            pinned = Some(pin_paths(&scene, data, &cfg.tracer)?);
        }
        let batch = draw_batch(data.len(), cfg.batch_size, &mut rng);
        let obj = total_objective(&scene, data, &batch, pinned.as_ref().expect("pinned on step 0"), &none, cfg, Wrt::Poses)?;
        check_step(&obj, it)?;
        report.loss_curve.push(obj.value);
        report.data_curve.push(obj.data);
        let lr = lr_schedule_between(it, cfg.iterations, cfg.lr_start, cfg.lr_end);
        for (k, &i) in dynamic.iter().enumerate() {
            let mut step = [0.0; 6];
            adam[k].step(&mut step, &obj.pose_grads[i], lr)?;
            let p = &mut scene.primitives[i];
            p.pose = p.pose.retract(Vec3::new(step[3], step[4], step[5]), Vec3::new(step[0], step[1], step[2]));
        }
    }
    report.residuals_db = residuals(&scene, data, cfg)?;
    report.wall_clock_s = start.elapsed().as_secs_f64();
    Ok((scene, report))
}

/// Parameter digests of every neural network, keyed like the gradients.
pub fn network_digests(scene: &Scene) -> BTreeMap<ParamKey, [u8; 32]> {
    let mut out = BTreeMap::new();
    for (i, p) in scene.primitives.iter().enumerate() {
        if let Some(np) = p.as_neural() {
            out.insert(param_key(i, STRUCTURE_PART), np.structure.net.digest());
            out.insert(param_key(i, MATERIAL_PART), np.material.net.digest());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::fixtures::*;
    use crate::scene::{PlacedPrimitive, Pose};

    fn cfg(iterations: usize, seed: u64) -> TrainConfig {
        TrainConfig { iterations, seed, tracer: tracer(), batch_size: 4, reg_samples: 8, retrace_every: 5, lr_start: 1e-3, lr_end: 1e-4, ..TrainConfig::default() }
    }

    fn problem() -> (Scene, MeasurementSet) {
        let truth = scene_with(primitive(0.35, 1), Pose::IDENTITY);
        (scene_with(primitive(0.45, 2), Pose::IDENTITY), measurements(&truth, 8))
    }

    #[test]
    fn zero_iterations_return_the_input() {
        let (scene, data) = problem();
        let (out, rep) = train_primitives(&scene, &data, &cfg(0, 0)).unwrap();
        assert_eq!(network_digests(&out), network_digests(&scene));
        assert!(rep.loss_curve.is_empty());
        let (out, _) = adapt_poses(&scene, &data, &cfg(0, 0)).unwrap();
        assert_eq!(out.primitives[0].pose, scene.primitives[0].pose);
    }

    #[test]
    fn training_is_deterministic() {
        let (scene, data) = problem();
        let (a, ra) = train_primitives(&scene, &data, &cfg(4, 3)).unwrap();
        let (b, rb) = train_primitives(&scene, &data, &cfg(4, 3)).unwrap();
        assert_eq!(ra.loss_curve, rb.loss_curve);
        assert_eq!(network_digests(&a), network_digests(&b));
        assert_ne!(network_digests(&a), network_digests(&scene));
        assert_eq!(ra.residuals_db.len(), data.len());
    }

    #[test]
    fn frozen_networks_are_untouched() {
        let (scene, data) = problem();
        let wall = PlacedPrimitive::neural("wall", primitive(0.3, 9), Pose::translation(crate::math::Vec3::new(0.0, 1.5, 0.0))).frozen(true);
        let scene = scene.with_primitive(wall);
        let before = network_digests(&scene);
        let (out, _) = train_primitives(&scene, &data, &cfg(3, 0)).unwrap();
        let after = network_digests(&out);
        for part in [STRUCTURE_PART, MATERIAL_PART] {
            assert_eq!(before[&param_key(1, part)], after[&param_key(1, part)]);
            assert_ne!(before[&param_key(0, part)], after[&param_key(0, part)]);
        }
    }

    #[test]
    fn nothing_to_train_is_rejected() {
        let (mut scene, data) = problem();
        scene.primitives[0].frozen = true;
        assert!(matches!(train_primitives(&scene, &data, &cfg(3, 0)), Err(Error::Config(_))));
        scene.primitives[0].dynamic = false;
        assert!(matches!(adapt_poses(&scene, &data, &cfg(3, 0)), Err(Error::Config(_))));
    }

    #[test]
    fn self_generated_data_is_already_fitted() {
        let (scene, _) = problem();
        let data = measurements(&scene, 8);
        let (_, rep) = train_primitives(&scene, &data, &cfg(1, 0)).unwrap();
        assert!(rep.data_curve[0] < 1e-12, "{}", rep.data_curve[0]);
        let (_, rep) = adapt_poses(&scene, &data, &TrainConfig { iterations: 1, tracer: tracer(), ..TrainConfig::adaptation() }).unwrap();
        assert!(rep.data_curve[0] < 1e-12);
    }

    #[test]
    fn poses_are_stationary_at_the_truth() {
        let (scene, _) = problem();
        let data = measurements(&scene, 8);
        let c = TrainConfig { tracer: tracer(), ..TrainConfig::adaptation() };
        let pinned = pin_paths(&scene, &data, &c.tracer).unwrap();
        let all: Vec<usize> = (0..data.len()).collect();
        let o = total_objective(&scene, &data, &all, &pinned, &RegSamples::default(), &c, Wrt::Poses).unwrap();
        assert!(o.pose_grads[0].iter().all(|g| g.abs() < 1e-9), "{:?}", o.pose_grads[0]);
    }

    #[test]
    fn training_reduces_the_data_term() {
        let (scene, data) = problem();
        let mut gains = Vec::new();
        for seed in 0..5 {
            let c = TrainConfig { batch_size: 8, ..cfg(15, seed) };
            let (_, rep) = train_primitives(&scene, &data, &c).unwrap();
            gains.push(rep.data_curve[0] - rep.data_curve[rep.data_curve.len() - 1]);
        }
        gains.sort_by(f64::total_cmp);
        assert!(gains[2] > 0.0, "{gains:?}");
    }

    #[test]
    fn adaptation_keeps_networks_and_moves_poses() {
        let (scene, _) = problem();
        let mut truth = scene.clone();
        truth.primitives[0].pose = Pose::translation(crate::math::Vec3::new(0.0, 0.1, 0.05));
        let data = measurements(&truth, 8);
        let c = TrainConfig { iterations: 10, tracer: tracer(), ..TrainConfig::adaptation() };
        let (out, rep) = adapt_poses(&scene, &data, &c).unwrap();
        assert_eq!(network_digests(&out), network_digests(&scene));
        assert_ne!(out.primitives[0].pose, scene.primitives[0].pose);
        assert!(rep.loss_curve.iter().all(|v| v.is_finite()));
    }
}
