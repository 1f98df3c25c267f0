use dycore_perf::fixtures::{self, random_scenario};
use dycore_perf::{
    buffer_sweep, pool_sweep, server_sweep, simulate_io, simulate_io_traced, striping_compare,
    IoScenario, IoSimError,
};
use proptest::prelude::*;

const MIB: u64 = 1 << 20;

/// Slack for floating-point summation order; the model itself is exact.
fn tol(x: f64) -> f64 {
    1e-9 * x.abs().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn conservation_at_every_event(seed in any::<u64>()) {
        let s = random_scenario(seed);
        let t = simulate_io_traced(&s).unwrap();
        for snap in &t.snapshots {
            prop_assert_eq!(
                snap.emitted,
                snap.in_client_buffers + snap.in_server_staging + snap.written
            );
        }
        prop_assert_eq!(t.metrics.bytes_written, s.schedule.total_bytes());
        prop_assert!(t.snapshots.windows(2).all(|w| w[0].time <= w[1].time));
    }

    #[test]
    fn never_beats_compute_or_bandwidth(seed in any::<u64>()) {
        let s = random_scenario(seed);
        let m = simulate_io(&s).unwrap();
        let bound = s.wall_clock_lower_bound();
        prop_assert!(m.wall_clock_s + tol(bound) >= bound, "{} < {}", m.wall_clock_s, bound);
        prop_assert!((0.0..=100.0).contains(&m.client_wait_pct));
    }

    #[test]
    fn bigger_buffers_never_wait_longer(seed in any::<u64>(), growth in 1u64..64) {
        let s = random_scenario(seed);
        let sizes = [s.buffer_bytes, s.buffer_bytes * (1 + growth), s.buffer_bytes * 64 * (1 + growth)];
        let rows = buffer_sweep(&s, &sizes).unwrap();
        for w in rows.windows(2) {
            let (a, b) = (w[0].metrics, w[1].metrics);
            prop_assert!(b.client_wait_s <= a.client_wait_s + tol(a.client_wait_s));
            prop_assert!(b.client_wait_pct <= a.client_wait_pct + tol(a.client_wait_pct));
            prop_assert!(b.wall_clock_s <= a.wall_clock_s + tol(a.wall_clock_s));
        }
    }

    #[test]
    fn repeated_runs_are_identical(seed in any::<u64>()) {
        let s = random_scenario(seed);
        prop_assert_eq!(simulate_io(&s).unwrap(), simulate_io(&s).unwrap());
    }
}

#[test]
fn buffer_larger_than_all_output_hides_io() {
    let s = IoScenario { buffer_bytes: 1 << 40, ..fixtures::iodev() };
    let m = simulate_io(&s).unwrap();
    assert_eq!(m.client_wait_s, 0.0);
    assert_eq!(m.client_wait_pct, 0.0);
}

#[test]
fn field_share_larger_than_buffer_is_unwritable() {
    let s = IoScenario { buffer_bytes: MIB - 1, ..fixtures::iodev() };
    assert!(matches!(simulate_io(&s), Err(IoSimError::UnwritableField { .. })));
}

#[test]
fn c192_tuning_fixture() {
    let base = simulate_io(&fixtures::c192_baseline()).unwrap();
    let tuned = simulate_io(&fixtures::c192_tuned()).unwrap();
    let speedup = base.wall_clock_s / tuned.wall_clock_s;
    assert!((1.84..=2.76).contains(&speedup), "speedup {speedup}");
    assert!(tuned.wall_clock_s <= base.wall_clock_s / 2.0);
    assert!(base.client_wait_s / tuned.client_wait_s >= 5.0);
}

#[test]
fn c896_striping_fixture() {
    let cmp = striping_compare(&fixtures::c896_striped()).unwrap();
    assert!((cmp.write_rate_ratio - 2.53).abs() <= 0.15 * 2.53, "{}", cmp.write_rate_ratio);
    assert!((cmp.off.client_wait_pct - 7.56).abs() <= 0.3 * 7.56, "{}", cmp.off.client_wait_pct);
    assert!((cmp.on.client_wait_pct - 1.44).abs() <= 0.3 * 1.44, "{}", cmp.on.client_wait_pct);
}

#[test]
fn iodev_buffer_sweep() {
    let rows = buffer_sweep(&fixtures::iodev(), &fixtures::iodev_buffer_sizes()).unwrap();
    let waits: Vec<f64> = rows.iter().map(|r| r.metrics.client_wait_pct).collect();
    assert!(waits.windows(2).all(|w| w[1] <= w[0]), "{waits:?}");
    assert_eq!(waits[0], waits.iter().copied().fold(0.0, f64::max));
    assert!(*waits.last().unwrap() < 1.0, "{waits:?}");
}

#[test]
fn iodev_server_sweep_plateaus_above_the_buffer_fix() {
    let s = fixtures::iodev();
    let rows = server_sweep(&s, &[1, 2, 4, 8, 16, 32]).unwrap();
    assert!(rows[1].metrics.wall_clock_s < rows[0].metrics.wall_clock_s);
    // Past two writers per pool the storage rate stops growing.
    let tail: Vec<f64> = rows[1..].iter().map(|r| r.metrics.client_wait_pct).collect();
    let spread =
        tail.iter().copied().fold(0.0, f64::max) - tail.iter().copied().fold(100.0, f64::min);
    assert!(spread < 0.25 * tail[0], "{tail:?}");
    let big_buffer = buffer_sweep(&s, &[64 * MIB]).unwrap()[0].metrics.client_wait_pct;
    assert!(rows.iter().all(|r| r.metrics.client_wait_pct > big_buffer));
}

#[test]
fn pool_sweep_on_the_tuned_fixture() {
    let rows = pool_sweep(&fixtures::c192_tuned(), &[1, 2, 4, 8]).unwrap();
    assert_eq!(rows.len(), 4);
    let total = rows[0].metrics.bytes_written;
    assert!(rows.iter().all(|r| r.metrics.bytes_written == total));
    assert_ne!(rows[0].metrics.wall_clock_s, rows[3].metrics.wall_clock_s);
    assert!(matches!(
        pool_sweep(&fixtures::c192_tuned(), &[3]),
        Err(IoSimError::PoolsNotDivisor { .. })
    ));
}

#[test]
fn one_pool_one_server_matches_server_sweep() {
    let s = IoScenario { servers_level1: 1, ..fixtures::iodev() };
    let a = pool_sweep(&s, &[1]).unwrap()[0].metrics;
    let b = server_sweep(&s, &[1]).unwrap()[0].metrics;
    assert_eq!(a, b);
}

#[test]
fn striping_factor_one_gives_identical_pair() {
    let cmp = striping_compare(&fixtures::iodev()).unwrap();
    assert_eq!(cmp.off, cmp.on);
}
