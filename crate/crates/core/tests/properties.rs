use std::f64::consts::PI;

use isac_track_core::beam::{activated_count, steering};
use isac_track_core::metrics::{angle_error, convex_clip, iou, polygon_area, rect_polygon, Symmetry};
use isac_track_core::sim::{unwrap_angles, wrap_angle};
use isac_track_core::tracknet::ThetaVector;
use isac_track_core::train::slot_weight;
use proptest::prelude::*;

fn rect() -> impl Strategy<Value = ThetaVector> {
    (-5.0..5.0f64, 40.0..50.0f64, -PI..PI, 0.5..8.0f64, 0.5..5.0f64)
        .prop_map(|(x, y, p, l, w)| ThetaVector::new([x, y, p, l, w]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn iou_is_symmetric_and_bounded(a in rect(), b in rect()) {
        let ab = iou(&a, &b).unwrap();
        let ba = iou(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&ab));
    }

    #[test]
    fn iou_is_rigid_motion_invariant(a in rect(), b in rect(), rot in -PI..PI, dx in -50.0..50.0f64, dy in -50.0..50.0f64) {
        let (s, c) = rot.sin_cos();
        let move_rect = |r: &ThetaVector| {
            let mut m = *r;
            m.0[0] = c * r.x() - s * r.y() + dx;
            m.0[1] = s * r.x() + c * r.y() + dy;
            m.0[2] = r.phi() + rot;
            m
        };
        let before = iou(&a, &b).unwrap();
        let after = iou(&move_rect(&a), &move_rect(&b)).unwrap();
        prop_assert!((before - after).abs() <= 1e-9, "{} {}", before, after);
    }

    #[test]
    fn intersection_area_is_bounded(a in rect(), b in rect()) {
        let pa = rect_polygon(&a).unwrap();
        let pb = rect_polygon(&b).unwrap();
        let inter = polygon_area(&convex_clip(&pa, &pb).unwrap());
        let (aa, ab) = (polygon_area(&pa), polygon_area(&pb));
        prop_assert!(inter >= 0.0);
        prop_assert!(inter <= aa.min(ab) * (1.0 + 1e-12));
    }

    #[test]
    fn iou_with_itself_is_one(a in rect()) {
        prop_assert!((iou(&a, &a).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn iou_ignores_half_turns(a in rect()) {
        let mut b = a;
        b.0[2] += PI;
        prop_assert!((iou(&a, &b).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn wrapped_angles_are_principal(a in -100.0..100.0f64) {
        let w = wrap_angle(a);
        prop_assert!(w > -PI && w <= PI);
        let k = ((a - w) / (2.0 * PI)).round();
        prop_assert!((a - w - 2.0 * PI * k).abs() < 1e-9);
    }

    #[test]
    fn unwrapping_removes_jumps(steps in proptest::collection::vec(-3.0..3.0f64, 1..50)) {
        let mut acc = 0.0;
        let raw: Vec<f64> = steps.iter().map(|s| { acc += s; wrap_angle(acc) }).collect();
        let un = unwrap_angles(&raw);
        for w in un.windows(2) {
            prop_assert!((w[1] - w[0]).abs() <= PI + 1e-9);
        }
    }

    #[test]
    fn angle_error_ranges(a in -10.0..10.0f64, b in -10.0..10.0f64) {
        let full = angle_error(a, b, Symmetry::Full);
        let half = angle_error(a, b, Symmetry::Half);
        prop_assert!((0.0..=PI + 1e-12).contains(&full));
        prop_assert!((0.0..=PI / 2.0 + 1e-12).contains(&half));
        prop_assert!(half <= full + 1e-12);
    }

    #[test]
    fn steering_has_unit_norm(az in -1.5..1.5f64, n in 1usize..40) {
        let a = steering(az, n).unwrap();
        let e: f64 = a.iter().map(|v| v.norm_sqr()).sum();
        prop_assert!((e - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fewer_elements_when_closer(az in -1.0..1.0f64, d in 10.0..400.0f64, l in 1.0..10.0f64, w in 1.0..6.0f64) {
        let near = activated_count(az, d, l, w, 15);
        let far = activated_count(az, d * 1.5, l, w, 15);
        prop_assert!(near <= far);
        prop_assert!((1..=15).contains(&near));
    }

    #[test]
    fn slot_weights_increase_toward_one(alpha in 0.01..5.0f64, n in 0usize..200) {
        let a = slot_weight(n, alpha);
        let b = slot_weight(n + 1, alpha);
        prop_assert!(a <= b && b <= 1.0 && a >= 0.0);
    }
}
