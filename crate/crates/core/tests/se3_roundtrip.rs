mod common;

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;
use vlascale::se3::{decode_chunk, encode_chunk, matrix_to_rotvec, CoordinateMode, Pose, RotVec};

fn chunk_errors(seed: u64, horizon: usize, max_angle: f64, mode: CoordinateMode) -> (f64, f64) {
    let mut rng = common::seeded(seed);
    let chunk = common::random_chunk(&mut rng, horizon, max_angle);
    let actions = encode_chunk(&chunk, mode);
    let back = decode_chunk(&actions, chunk.start(), mode).unwrap();
    let mut worst = (0.0f64, 0.0f64);
    for (a, b) in chunk.poses().iter().zip(back.poses()) {
        worst.0 = worst.0.max((a.translation - b.translation).norm());
        worst.1 = worst.1.max(common::frobenius(a.rotation(), b.rotation()));
    }
    worst
}

#[test]
fn all_modes_round_trip_many_chunks() {
    for mode in CoordinateMode::ALL {
        for seed in 0..300 {
            let (t, r) = chunk_errors(seed, 16, PI - 1e-3, mode);
            assert!(t < 1e-9 && r < 1e-8, "{mode:?} seed {seed}: {t:e} {r:e}");
        }
    }
}

#[test]
fn rotations_near_half_turn_round_trip() {
    let mut rng = common::seeded(3);
    for delta in [1e-3, 1e-6, 1e-9, 0.0] {
        for _ in 0..200 {
            let axis = common::random_axis(&mut rng);
            let r = RotVec::new(axis * (PI - delta));
            let m = r.to_matrix();
            let back = matrix_to_rotvec(&m).unwrap();
            assert!(back.angle() <= PI + 1e-12);
            assert!(
                common::frobenius(&back.to_matrix(), &m) < 1e-8,
                "delta {delta}"
            );
        }
    }
}

#[test]
fn encoded_modes_agree_on_the_first_step() {
    // With a single target, relative and delta encodings coincide.
    let mut rng = common::seeded(8);
    let chunk = common::random_chunk(&mut rng, 1, 2.0);
    let wr = encode_chunk(&chunk, CoordinateMode::WorldRel);
    let wd = encode_chunk(&chunk, CoordinateMode::WorldDelta);
    let er = encode_chunk(&chunk, CoordinateMode::EefRel);
    let ed = encode_chunk(&chunk, CoordinateMode::EefDelta);
    assert_eq!(wr, wd);
    assert_eq!(er, ed);
}

fn arb_pose() -> impl Strategy<Value = Pose> {
    (
        prop::array::uniform3(-2.0f64..2.0),
        prop::array::uniform3(-1.0f64..1.0),
        0.0f64..PI,
    )
        .prop_filter_map("axis too short", |(t, a, angle)| {
            let axis = Vector3::from(a);
            (axis.norm() > 1e-3)
                .then(|| Pose::new(Vector3::from(t), RotVec::new(axis.normalize() * angle)))
        })
}

proptest! {
    #[test]
    fn exp_log_is_identity(a in prop::array::uniform3(-1.0f64..1.0), angle in 0.0f64..(PI - 1e-6)) {
        let axis = Vector3::from(a);
        prop_assume!(axis.norm() > 1e-3);
        let r = RotVec::new(axis.normalize() * angle);
        let back = matrix_to_rotvec(&r.to_matrix()).unwrap();
        prop_assert!((back.vector() - r.vector()).norm() < 1e-9);
    }

    #[test]
    fn rotvec_is_canonical(v in prop::array::uniform3(-10.0f64..10.0)) {
        let r = RotVec::from_array(v);
        prop_assert!(r.angle() <= PI + 1e-12);
        let direct = RotVec::new(Vector3::from(v)).to_matrix();
        prop_assert!(common::frobenius(&r.to_matrix(), &direct) < 1e-9);
    }

    #[test]
    fn rotation_matrices_are_orthonormal(v in prop::array::uniform3(-4.0f64..4.0)) {
        let m = RotVec::from_array(v).to_matrix();
        prop_assert!(common::frobenius(&(m.transpose() * m), &Matrix3::identity()) < 1e-12);
        prop_assert!((m.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn composition_is_associative(a in arb_pose(), b in arb_pose(), c in arb_pose()) {
        let l = a.compose(&b).compose(&c);
        let r = a.compose(&b.compose(&c));
        prop_assert!((l.translation - r.translation).norm() < 1e-12);
        prop_assert!(common::frobenius(l.rotation(), r.rotation()) < 1e-12);
    }

    #[test]
    fn inverse_cancels(a in arb_pose(), p in prop::array::uniform3(-3.0f64..3.0)) {
        let id = a.compose(&a.inverse());
        prop_assert!(id.translation.norm() < 1e-12);
        prop_assert!(common::frobenius(id.rotation(), &Matrix3::identity()) < 1e-12);
        let x = Vector3::from(p);
        prop_assert!((a.inverse().transform_point(&a.transform_point(&x)) - x).norm() < 1e-12);
    }

    #[test]
    fn decode_inverts_encode(seed in any::<u64>(), h in 1usize..20, mode_i in 0usize..4) {
        let (t, r) = chunk_errors(seed, h, PI - 1e-3, CoordinateMode::ALL[mode_i]);
        prop_assert!(t < 1e-9, "translation {t:e}");
        prop_assert!(r < 1e-8, "rotation {r:e}");
    }
}
