//! Factored versus dense interpolation throughput. Timing-sensitive, so it
//! only runs on request: `cargo test --release --test interp_speed -- --ignored`.

use panorf::bench::interp_microbench;

#[test]
#[ignore = "wall-clock measurement; run in release mode on an idle machine"]
fn factored_interpolation_beats_dense_at_128_cubed() {
    let b = interp_microbench([128, 128, 128], 8, 4000, 96, 0).unwrap();
    println!(
        "factored {:.0} rays/s, dense {:.0} rays/s, ratio {:.2}",
        b.factored_rays_per_sec,
        b.dense_rays_per_sec,
        b.factored_rays_per_sec / b.dense_rays_per_sec
    );
    assert!(b.factored_rays_per_sec > b.dense_rays_per_sec);
}

#[test]
fn microbench_reports_memory_for_both_layouts() {
    let b = interp_microbench([16, 16, 16], 2, 50, 16, 0).unwrap();
    assert_eq!(b.dense_bytes, 4 * 16 * 16 * 16);
    assert_eq!(b.factored_bytes, 4 * 2 * 3 * (16 + 16 * 16));
}
