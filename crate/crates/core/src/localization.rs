//! Range-bearing localization from the strongest recovered path.
//!
//! The strongest atom is taken as the line-of-sight path. Its delay gives the
//! range `c·τ̂` and its BS angle the bearing, measured from the array axis.
//! Scenes are planar and MSs sit in the half-plane the array faces, which
//! resolves the front/back ambiguity of a linear array.

use serde::{Deserialize, Serialize};

use crate::channel::{unit_direction, SPEED_OF_LIGHT};
use crate::dictionary::DictionarySet;
use crate::error::{Error, Result};
use crate::recovery::RecoveryResult;

/// Position of an array and the direction of its axis, world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: [f64; 3],
    /// Unit vector along the array, in the `z = 0` plane.
    pub array_axis: [f64; 3],
}

impl Pose {
    pub fn new(position: [f64; 3], array_axis: [f64; 3]) -> Result<Pose> {
        let norm = array_axis.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 || array_axis[2] != 0.0 {
            return Err(Error::Domain("array axis must be a unit vector in the z = 0 plane".into()));
        }
        Ok(Pose { position, array_axis })
    }

    /// BS at the origin with its array along the y-axis.
    pub fn reference() -> Pose {
        Pose {
            position: [0.0; 3],
            array_axis: [0.0, 1.0, 0.0],
        }
    }

    /// Maps a vector from the array frame (array along y) to the world frame.
    pub fn to_world(&self, v: [f64; 3]) -> [f64; 3] {
        let a = self.array_axis;
        let n = [a[1], -a[0], 0.0];
        [
            self.position[0] + v[0] * n[0] + v[1] * a[0],
            self.position[1] + v[0] * n[1] + v[1] * a[1],
            self.position[2] + v[2],
        ]
    }
}

/// Position estimate from a recovery result. Fails when the support is empty.
pub fn localize(result: &RecoveryResult, dicts: &DictionarySet, bs_pose: &Pose) -> Result<[f64; 3]> {
    let (k, _) = result
        .coefficients
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (k, x)| match best {
            Some((_, m)) if m >= x.norm() => best,
            _ => Some((k, x.norm())),
        })
        .ok_or_else(|| Error::Domain("no estimate: recovery returned an empty support".into()))?;
    let entry = result.support[k];
    let phi = dicts.angle_grid_b[entry.i_b];
    let tau = dicts.delay_grid[entry.i_s];
    let u = unit_direction(phi)?;
    let range = SPEED_OF_LIGHT * tau;
    Ok(bs_pose.to_world([range * u[0], range * u[1], 0.0]))
}

/// Euclidean distance between two positions.
pub fn localization_error(l_hat: &[f64; 3], l_true: &[f64; 3]) -> f64 {
    l_hat.iter().zip(l_true).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

/// Worst-case error of an on-grid estimate at distance `distance`: half a
/// delay bin in range plus the arc spanned by one cosine-grid step. Valid for
/// bearings with `sin φ ≥ 1/2`.
pub fn quantization_bound(distance: f64, a_s: usize, spacing: f64, a_b: usize) -> f64 {
    let range = SPEED_OF_LIGHT / (2.0 * a_s as f64 * spacing);
    let dcos = 2.0 / (a_b as f64 - 1.0);
    range + distance * dcos
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_placement, synthesize_channel, ArrayParams, GeometryConfig, PathSet, SubcarrierParams};
    use crate::dictionary::{build_dictionary_set, GridSpec};
    use crate::recovery::{sparse_recover, RecoveryConfig, Selector};
    use crate::tensor::C64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Setup {
        bs: ArrayParams,
        ms: ArrayParams,
        sub: SubcarrierParams,
        dicts: DictionarySet,
        grid: GridSpec,
    }

    fn setup() -> Setup {
        let lambda = SPEED_OF_LIGHT / 28e9;
        let bs = ArrayParams::nominal_ula(8, lambda).unwrap();
        let ms = ArrayParams::nominal_ula(4, lambda).unwrap();
        let sub = SubcarrierParams::uniform(28e9, 1.44e6, 32).unwrap();
        let grid = GridSpec { a_b: 32, a_m: 16, a_s: 64 };
        let dicts = build_dictionary_set(&bs, &ms, &sub, &grid).unwrap();
        Setup { bs, ms, sub, dicts, grid }
    }

    fn cfg(selector: Selector) -> RecoveryConfig {
        RecoveryConfig { selector, max_atoms: 1, residual_tol: 0.0, n_refine: 3 }
    }

    #[test]
    fn error_examples() {
        assert_eq!(localization_error(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 0.0);
        assert_eq!(localization_error(&[0.0; 3], &[3.0, 4.0, 0.0]), 5.0);
    }

    #[test]
    fn pose_rejects_non_unit_axis() {
        assert!(Pose::new([0.0; 3], [0.0, 2.0, 0.0]).is_err());
        assert!(Pose::new([0.0; 3], [0.6, 0.8, 0.0]).is_ok());
    }

    #[test]
    fn zero_delay_maps_to_bs() {
        let s = setup();
        let mut paths = PathSet::default();
        paths.push(s.dicts.angle_grid_b[5], 1.0, 0.0, C64::new(1.0, 0.0));
        let y = synthesize_channel(&s.bs, &s.ms, &s.sub, &paths).unwrap();
        let res = sparse_recover(&y.view(), &s.dicts, &cfg(Selector::Omp)).unwrap();
        let pose = Pose::new([10.0, -3.0, 0.0], [0.6, 0.8, 0.0]).unwrap();
        assert_eq!(localize(&res, &s.dicts, &pose).unwrap(), pose.position);
    }

    #[test]
    fn empty_support_has_no_estimate() {
        let s = setup();
        let y = crate::tensor::Tensor3::zeros((8, 4, 32));
        let res = sparse_recover(&y.view(), &s.dicts, &cfg(Selector::Momp)).unwrap();
        assert!(localize(&res, &s.dicts, &Pose::reference()).is_err());
    }

    #[test]
    fn on_grid_los_is_exact() {
        let s = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let i = rng.random_range(4..28);
            let j = rng.random_range(1..64);
            let phi = s.dicts.angle_grid_b[i];
            let tau = s.dicts.delay_grid[j];
            let d = SPEED_OF_LIGHT * tau;
            let truth = [d * phi.sin(), d * phi.cos(), 0.0];
            let mut paths = PathSet::default();
            paths.push(phi, std::f64::consts::PI - phi, tau, C64::from_polar(1.0, rng.random_range(-3.0..3.0)));
            let y = synthesize_channel(&s.bs, &s.ms, &s.sub, &paths).unwrap();
            for sel in [Selector::Omp, Selector::Momp] {
                let res = sparse_recover(&y.view(), &s.dicts, &cfg(sel)).unwrap();
                let est = localize(&res, &s.dicts, &Pose::reference()).unwrap();
                assert!(localization_error(&est, &truth) < 1e-9);
            }
        }
    }

    #[test]
    fn rotated_pose_moves_the_estimate_rigidly() {
        let s = setup();
        let mut paths = PathSet::default();
        paths.push(s.dicts.angle_grid_b[10], 1.0, s.dicts.delay_grid[7], C64::new(1.0, 0.0));
        let y = synthesize_channel(&s.bs, &s.ms, &s.sub, &paths).unwrap();
        let res = sparse_recover(&y.view(), &s.dicts, &cfg(Selector::Omp)).unwrap();
        let a = localize(&res, &s.dicts, &Pose::reference()).unwrap();
        let pose = Pose::new([5.0, 5.0, 0.0], [-1.0, 0.0, 0.0]).unwrap();
        let b = localize(&res, &s.dicts, &pose).unwrap();
        // Rotation by +90°: (x, y) -> (-y, x), then translation.
        assert!((b[0] - (5.0 - a[1])).abs() < 1e-9);
        assert!((b[1] - (5.0 + a[0])).abs() < 1e-9);
    }

    #[test]
    fn off_grid_error_respects_quantization_bound() {
        let s = setup();
        let geometry = GeometryConfig { paths: 1, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let trials = 200;
        let mut ok = 0;
        for _ in 0..trials {
            let p = sample_placement(&geometry, s.sub.delay_period(), &mut rng).unwrap();
            let y = synthesize_channel(&s.bs, &s.ms, &s.sub, &p.paths).unwrap();
            let res = sparse_recover(&y.view(), &s.dicts, &cfg(Selector::Momp)).unwrap();
            let est = localize(&res, &s.dicts, &Pose::reference()).unwrap();
            let d = localization_error(&p.position, &[0.0; 3]);
            if localization_error(&est, &p.position) <= quantization_bound(d, s.grid.a_s, s.sub.spacing, s.grid.a_b) {
                ok += 1;
            }
        }
        assert!(ok * 100 >= 95 * trials, "{ok}/{trials}");
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn estimate_invariant_to_global_scaling(re in -3.0f64..3.0, im in -3.0f64..3.0, seed in 0u64..1000) {
            proptest::prop_assume!(re.hypot(im) > 1e-3);
            let s = setup();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = sample_placement(&GeometryConfig::default(), s.sub.delay_period(), &mut rng).unwrap();
            let y = synthesize_channel(&s.bs, &s.ms, &s.sub, &p.paths).unwrap();
            let ys = y.mapv(|z| z * C64::new(re, im));
            let c = cfg(Selector::Momp);
            let a = localize(&sparse_recover(&y.view(), &s.dicts, &c).unwrap(), &s.dicts, &Pose::reference()).unwrap();
            let b = localize(&sparse_recover(&ys.view(), &s.dicts, &c).unwrap(), &s.dicts, &Pose::reference()).unwrap();
            proptest::prop_assert_eq!(a, b);
        }
    }
}
