//! Performance model of a cubed-sphere dynamical core and its I/O servers.
//!
//! * [`mesh`]: the cubed-sphere grid as a graph.
//! * [`decomp`]: block decomposition over ranks, halos and exchange patterns.
//! * [`machine`]: node descriptions and calibrated cost models.
//! * [`dyncore`]: per-timestep cost of a decomposed run, scaling studies.
//! * [`workload`]: diagnostic output schedules.
//! * [`iosim`]: event-driven client/server I/O model.
//! * [`fixtures`]: calibrated I/O scenarios.

pub mod decomp;
pub mod dyncore;
pub mod event;
pub mod fixtures;
pub mod iosim;
pub mod machine;
pub mod mesh;
pub mod workload;

pub use decomp::{
    compute_halos, exchange_pattern, local_area, partition, redundant_compute_extent, Block,
    DecompError, Decomposition, DecompositionMode, ExchangePattern, Message, RankSummary,
    RedundantExtent, DEFAULT_BYTES_PER_CELL,
};
pub use dyncore::{
    ratio_report, render_breakdown_chart, safe_ratio, simulate, strong_scaling_study, thread_sweep,
    RatioRow, RunSpec, ScalingRow, SimError, StrongScalingTable, ThreadSweep, TimestepBreakdown,
};
pub use iosim::{
    buffer_sweep, couple_compute_rate, pool_sweep, server_sweep, simulate_io, simulate_io_repeated,
    simulate_io_traced, striping_compare, summarize, IoMetrics, IoScenario, IoSimError, IoSummary,
    MeanSd, StripingComparison, SweepRow,
};
pub use machine::{CostModel, Layout, MachineConfig, MachineError};
pub use mesh::{build_mesh, total_horizontal_cells, CellId, CubedSphereMesh, Direction, MeshError};
pub use workload::{DiagnosticSchedule, EmissionEvent, ScheduleEntry, ScheduleError};
