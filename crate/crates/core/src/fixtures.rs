//! Calibrated I/O scenarios.
//!
//! Rates and buffer sizes here were chosen so that the model lands near
//! measured behaviour on the corresponding production runs; they are not
//! hardware constants.

use crate::iosim::IoScenario;
use crate::workload::{DiagnosticSchedule, ScheduleEntry};

const MIB: u64 = 1 << 20;

fn single_level(clients: u32, servers: u32, schedule: DiagnosticSchedule) -> IoScenario {
    IoScenario {
        clients,
        servers_level1: servers,
        servers_level2: 0,
        pools: 1,
        buffer_bytes: 8 * MIB,
        base_write_rate: 70.0 * MIB as f64,
        striping_factor: 1.0,
        stripe_count: None,
        writers_per_stripe: 2,
        files: 1,
        schedule,
        compute_rate: 25.0,
        transfer_rate: None,
        server_buffer_bytes: 256 * MIB,
        server_nodes: None,
        server_node_memory_bytes: None,
        rate_jitter: 0.0,
    }
}

/// C192 diagnostic load, 864 clients, 72 single-level servers in one pool.
pub fn c192_baseline() -> IoScenario {
    IoScenario { files: 8, ..single_level(864, 72, DiagnosticSchedule::c192()) }
}

/// The C192 load with 8 gather and 8 writing servers split into 4 pools.
pub fn c192_tuned() -> IoScenario {
    IoScenario { servers_level1: 8, servers_level2: 8, pools: 4, ..c192_baseline() }
}

/// C896 hourly load, 4704 clients, 392 servers, striping 2.5 ("on").
pub fn c896_striped() -> IoScenario {
    IoScenario {
        buffer_bytes: 8 * MIB,
        base_write_rate: 188.5 * MIB as f64,
        striping_factor: 2.5,
        compute_rate: 117.8,
        server_buffer_bytes: 24 * MIB,
        rate_jitter: 0.02,
        ..single_level(4704, 392, DiagnosticSchedule::c896_hourly())
    }
}

/// Development-size load for buffer and server sensitivity: 256 clients,
/// 16 servers, 40 fields of 256 MiB every hour for a day.
pub fn iodev() -> IoScenario {
    IoScenario {
        buffer_bytes: MIB,
        base_write_rate: 64.0 * MIB as f64,
        files: 4,
        compute_rate: 120.0,
        server_buffer_bytes: 64 * MIB,
        ..single_level(
            256,
            16,
            DiagnosticSchedule::new(24.0, vec![ScheduleEntry::new(40, 1.0, 256 * MIB)]),
        )
    }
}

/// Buffer sizes for [`iodev`]: one field share up to 64 of them.
pub fn iodev_buffer_sizes() -> Vec<u64> {
    (0..=6).map(|k| MIB << k).collect()
}

/// A small random but valid scenario, fully determined by `seed`. The
/// buffer is the smallest admissible one, so callers can grow it freely.
pub fn random_scenario(seed: u64) -> IoScenario {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);

    let entries = (0..rng.gen_range(0..=3))
        .map(|_| {
            ScheduleEntry::new(
                rng.gen_range(1..=6),
                [0.5, 1.0, 1.5, 2.0, 3.0, 4.0][rng.gen_range(0..6)],
                rng.gen_range(1..=64 * MIB),
            )
        })
        .collect();
    let schedule = DiagnosticSchedule::new(f64::from(rng.gen_range(1..=12u32)), entries);

    let clients = rng.gen_range(1..=48);
    let two_level = rng.gen_bool(0.5);
    let (servers_level1, servers_level2) = if two_level {
        (rng.gen_range(1..=8), rng.gen_range(1..=8))
    } else {
        (rng.gen_range(1..=8), 0)
    };
    let writers = if two_level { servers_level2 } else { servers_level1 };
    let divisors: Vec<u32> = (1..=writers).filter(|p| writers % p == 0).collect();
    let pools = divisors[rng.gen_range(0..divisors.len())];

    let mut s = IoScenario {
        clients,
        servers_level1,
        servers_level2,
        pools,
        buffer_bytes: 1,
        base_write_rate: rng.gen_range(1.0..200.0) * MIB as f64,
        striping_factor: rng.gen_range(1.0..4.0),
        stripe_count: rng.gen_bool(0.3).then(|| f64::from(rng.gen_range(1..=4u32))),
        writers_per_stripe: rng.gen_range(1..=3),
        files: rng.gen_range(1..=6),
        schedule,
        compute_rate: rng.gen_range(0.0..60.0),
        transfer_rate: rng.gen_bool(0.5).then(|| rng.gen_range(10.0..400.0) * MIB as f64),
        server_buffer_bytes: rng.gen_range(1..=128 * MIB),
        server_nodes: None,
        server_node_memory_bytes: None,
        rate_jitter: 0.0,
    };
    s.buffer_bytes = s.max_client_share().max(1);
    s
}
