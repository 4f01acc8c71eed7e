//! Ray launch directions and mirror reflection.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::engine::RaySample;
use crate::error::{Error, Result};
use crate::math::{self, Vec3};
use crate::scene::{Quat, Radio};

/// `n` quasi-uniform unit vectors (spherical Fibonacci lattice).
pub fn fibonacci_directions(n: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2 * i + 1) as f64 / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

/// Uniformly distributed rotation.
pub fn random_rotation<G: Rng + ?Sized>(rng: &mut G) -> Quat {
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let tau = std::f64::consts::TAU;
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    Quat::new(b * (tau * u3).cos(), a * (tau * u2).sin(), a * (tau * u2).cos(), b * (tau * u3).sin())
}

/// The launch lattice for `seed`, rotated by `extra`.
pub(crate) fn launch_directions(n: usize, seed: u64, extra: Quat) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = extra.mul(&random_rotation(&mut rng)).normalized();
    fibonacci_directions(n).into_iter().map(|d| q.rotate(d).normalize()).collect()
}

/// Initial samples from `tx`, each carrying the antenna weight along its
/// direction.
pub fn launch_rays(tx: &Radio, n: usize, seed: u64) -> Result<Vec<RaySample>> {
    if n == 0 {
        return Err(Error::Config("need at least one ray".into()));
    }
    Ok(launch_directions(n, seed, Quat::IDENTITY)
        .into_iter()
        .map(|d| RaySample::new(tx.position, d, tx.gain(d)))
        .collect())
}

/// Mirror `dir` about the plane with normal `n`.
pub fn reflect_dir(dir: Vec3, n: Vec3) -> Vec3 {
    math::reflect(dir, n).normalize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::V3;
    use crate::scene::AntennaPattern;
    use proptest::prelude::*;

    #[test]
    fn lattice_is_unit_and_balanced() {
        let n = 1_000_000;
        let dirs = launch_directions(n, 3, Quat::IDENTITY);
        let mut mean = Vec3::ZERO;
        for d in &dirs {
            assert!((d.norm() - 1.0).abs() < 1e-9);
            mean = mean + *d;
        }
        mean = mean * (1.0 / n as f64);
        // iid uniform directions have per-axis std 1/sqrt(3n)
        let bound = 3.0 / (3.0 * n as f64).sqrt();
        assert!(mean.max_abs() < bound, "{mean:?}");
    }

    #[test]
    fn launch_weights_follow_pattern() {
        let pat = AntennaPattern::from_fn(5.0, |_, el| 1.0 + el.sin().max(0.0) * 9.0).unwrap();
        let tx = Radio { pattern: pat.clone(), ..Radio::tx("tx", Vec3::ZERO) };
        for r in launch_rays(&tx, 500, 9).unwrap() {
            assert_eq!(r.gain, pat.weight(r.dir));
        }
    }

    #[test]
    fn launch_is_deterministic() {
        let tx = Radio::tx("tx", V3::new(1.0, 2.0, 3.0));
        assert_eq!(launch_rays(&tx, 100, 5).unwrap(), launch_rays(&tx, 100, 5).unwrap());
        assert_ne!(launch_rays(&tx, 100, 5).unwrap(), launch_rays(&tx, 100, 6).unwrap());
        assert!(launch_rays(&tx, 0, 5).is_err());
    }

    #[test]
    fn reflection_examples() {
        let r = reflect_dir(Vec3::X, -Vec3::X);
        assert!((r - -Vec3::X).norm() < 1e-15);
        let s = 0.5f64.sqrt();
        let r = reflect_dir(V3::new(s, -s, 0.0), Vec3::Y);
        assert!((r - V3::new(s, s, 0.0)).norm() < 1e-15);
    }

    proptest! {
        #[test]
        fn reflection_preserves_angle(d in prop::array::uniform3(-1.0f64..1.0), n in prop::array::uniform3(-1.0f64..1.0)) {
            let (d, n) = (Vec3::from_array(d), Vec3::from_array(n));
            prop_assume!(d.norm() > 1e-3 && n.norm() > 1e-3);
            let (d, n) = (d.normalize(), n.normalize());
            let r = reflect_dir(d, n);
            prop_assert!((r.norm() - 1.0).abs() < 1e-12);
            let a_in = d.dot(-n).clamp(-1.0, 1.0).acos();
            let a_out = r.dot(n).clamp(-1.0, 1.0).acos();
            prop_assert!((a_in - a_out).abs() < 1e-7);
        }
    }
}
