//! Shared inputs for the benchmarks.

use dycore_perf::{build_mesh, CubedSphereMesh, MachineConfig, RunSpec};

pub const LEVELS: u32 = 120;

pub fn mesh(n: u32) -> CubedSphereMesh {
    build_mesh(n, LEVELS).expect("valid panel size")
}

/// ARCHER2 run with 32 ranks of 4 threads per node.
pub fn archer2_run(n: u32, nodes: u32) -> RunSpec {
    RunSpec::new(mesh(n), MachineConfig::archer2(), nodes, 32, 4)
}
