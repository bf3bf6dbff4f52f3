mod common;

use common::gradcheck::{gcn_suite, ops_suite, vgae_suite, GradReport};

fn assert_all(reports: &[GradReport], min_coords: usize) {
    for r in reports {
        println!(
            "{}: {} coordinates, max rel err {:.3e}",
            r.name, r.coords, r.max_rel_err
        );
        assert!(
            r.coords >= min_coords,
            "{} checked only {} coordinates",
            r.name,
            r.coords
        );
        assert!(r.passed(), "{} max rel err {:.3e}", r.name, r.max_rel_err);
    }
}

#[test]
fn nn_ops_match_finite_differences() {
    assert_all(&ops_suite(0..7), 100);
}

#[test]
fn full_gcn_matches_finite_differences() {
    // 12 + 6 coordinates per instance
    assert_all(&gcn_suite(0..10), 60);
}

#[test]
fn full_vgae_matches_finite_differences() {
    let (reports, gap) = vgae_suite(0..8);
    println!("library vs oracle loss gap {gap:.3e}");
    assert!(gap < 1e-12);
    assert_all(&reports, 64);
}
