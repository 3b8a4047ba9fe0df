use isac_track_core::beam::{activated_count, activated_count_unclipped};
use isac_track_core::metrics::iou;
use isac_track_core::oracles::*;
use isac_track_core::seed::rng_from;
use isac_track_core::tracknet::ThetaVector;

#[test]
fn forced_gain_pipeline_matches_classical_filter() {
    for seed in 0..20 {
        let dev = kf_forced_gain_deviation(seed, 100).unwrap();
        assert!(dev <= 1e-9, "seed {seed}: {dev}");
    }
}

#[test]
fn visible_edges_match_line_of_sight() {
    assert_eq!(visibility_disagreements(7, 1000).unwrap(), 0);
}

#[test]
fn partition_conserves_arclength() {
    let err = partition_arclength_error(11, 1000).unwrap();
    assert!(err <= 1e-12, "{err}");
}

#[test]
fn iou_hand_case_and_monte_carlo() {
    // 6 x 4 rectangles offset by 3 m: intersection 12, union 36.
    let a = ThetaVector::new([3.0, 2.0, 0.0, 6.0, 4.0]);
    let b = ThetaVector::new([6.0, 2.0, 0.0, 6.0, 4.0]);
    assert!((iou(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    let mc = iou_monte_carlo(&a, &b, 100_000, &mut rng_from(1)).unwrap();
    assert!((mc - 1.0 / 3.0).abs() < 0.01, "{mc}");

    let worst = iou_monte_carlo_error(3, 100, 100_000).unwrap();
    assert!(worst < 0.01, "{worst}");
}

#[test]
fn activation_worked_values_and_grid() {
    assert_eq!(activated_count(0.0, 500.0, 6.0, 4.0, 15), 15);
    assert_eq!(activated_count_unclipped(0.0, 500.0, 6.0, 4.0), 123);
    assert_eq!(activated_count(0.0, 50.0, 6.0, 4.0, 15), 12);
    assert_eq!(activated_count(0.0, 10.0, 6.0, 4.0, 15), 2);
    let g = activation_grid(50, &[0.0, -0.4, 0.7], 15);
    assert_eq!(g.points, 7500);
    assert_eq!(g.mismatches, 0);
    assert_eq!(g.coverage_violations, 0);
}

#[test]
fn echo_only_received_is_echo() {
    assert!(echo_only_is_exact(5, 3, 30).unwrap());
}

#[test]
fn noise_power_calibrated() {
    let r = noise_power_ratio(9, 1_000_000).unwrap();
    assert!((r - 1.0).abs() < 0.01, "{r}");
}

#[test]
fn clutter_rcs_is_unit_variance() {
    let (mean, var) = clutter_rcs_moments(13, 10_000).unwrap();
    assert!((var - 1.0).abs() < 0.05, "{var}");
    assert!(mean.norm() < 0.05, "{mean}");
}
