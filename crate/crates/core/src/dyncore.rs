//! Bulk-synchronous timestep model of the dynamical core.
//!
//! A timestep is a fixed sequence of phases: threaded compute over owned (and
//! redundantly computed) cells, a number of blocking halo exchanges, a number
//! of global sums, and the threading runtime overhead. Communication happens
//! outside parallel regions and never overlaps compute, so the phases add.
//!
//! Per timestep, with `R` ranks and `t` threads per rank:
//!
//! ```text
//! user = max_r (owned_r + extra_r) · L · c_cell / (t · eff(t))
//! p2p  = max_r Σ_exchanges Σ_{messages into r} (p2p_alpha + bytes / p2p_beta)
//! coll = allreduces · ceil(log2 R) · (coll_alpha + allreduce_bytes / coll_beta)
//! etc  = parallel_regions · barrier_cost · t + etc_fixed
//! ```

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::decomp::{
    partition, DecompError, Decomposition, DecompositionMode, ExchangePattern,
    DEFAULT_BYTES_PER_CELL,
};
use crate::machine::{validate_layout, CostModel, MachineConfig, MachineError};
use crate::mesh::CubedSphereMesh;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Machine(#[from] MachineError),
    #[error(transparent)]
    Decomp(#[from] DecompError),
    #[error("{nodes} nodes requested but {machine} has only {max}")]
    TooManyNodes { machine: String, nodes: u32, max: u32 },
    #[error("timestep count must be at least 1")]
    ZeroTimesteps,
    #[error(
        "insufficient memory: {required_gib:.1} GiB needed per node, {available_gib:.1} GiB available"
    )]
    OutOfMemory { required_gib: f64, available_gib: f64 },
    #[error("tables do not share configuration axes: {0}")]
    MismatchedAxes(String),
    #[error("empty sweep")]
    EmptySweep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub mesh: CubedSphereMesh,
    pub machine: MachineConfig,
    pub nodes: u32,
    pub ranks_per_node: u32,
    pub threads_per_rank: u32,
    pub timesteps: u32,
    pub cost: CostModel,
    pub mode: DecompositionMode,
    pub halo_depth: u32,
    pub bytes_per_cell: u64,
}

impl RunSpec {
    /// Defaults: 96 timesteps, the machine's default cost preset, halo
    /// exchange at depth 1.
    pub fn new(
        mesh: CubedSphereMesh,
        machine: MachineConfig,
        nodes: u32,
        ranks_per_node: u32,
        threads_per_rank: u32,
    ) -> Self {
        let cost = CostModel::default_for(&machine);
        RunSpec {
            mesh,
            machine,
            nodes,
            ranks_per_node,
            threads_per_rank,
            timesteps: 96,
            cost,
            mode: DecompositionMode::ExchangeHalos,
            halo_depth: 1,
            bytes_per_cell: DEFAULT_BYTES_PER_CELL,
        }
    }

    pub fn with_cost(mut self, cost: CostModel) -> Self {
        self.cost = cost;
        self
    }

    pub fn with_mode(mut self, mode: DecompositionMode) -> Self {
        self.mode = mode;
        self
    }

    /// Same run with `threads` per rank and as many ranks as fill a node.
    pub fn with_threads(mut self, threads: u32) -> Self {
        self.threads_per_rank = threads;
        self.ranks_per_node = self.machine.cores_per_node / threads.max(1);
        self
    }

    pub fn with_nodes(mut self, nodes: u32) -> Self {
        self.nodes = nodes;
        self
    }

    pub fn ranks(&self) -> u64 {
        u64::from(self.nodes) * u64::from(self.ranks_per_node)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.machine.validate()?;
        self.cost.validate()?;
        validate_layout(&self.machine, self.ranks_per_node, self.threads_per_rank)?;
        if self.nodes == 0 || self.nodes > self.machine.max_nodes {
            return Err(SimError::TooManyNodes {
                machine: self.machine.name.clone(),
                nodes: self.nodes,
                max: self.machine.max_nodes,
            });
        }
        if self.timesteps == 0 {
            return Err(SimError::ZeroTimesteps);
        }
        let cells = self.mesh.total_horizontal_cells();
        if self.ranks() > cells {
            return Err(DecompError::TooManyRanks { ranks: self.ranks(), cells }.into());
        }
        Ok(())
    }
}

/// Simulated time per timestep, split into profiler-style categories.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimestepBreakdown {
    pub ranks: u32,
    pub threads: u32,
    pub user_s: f64,
    pub mpi_p2p_s: f64,
    pub mpi_coll_s: f64,
    pub etc_s: f64,
    /// Exactly `user_s + mpi_p2p_s + mpi_coll_s + etc_s`.
    pub total_s: f64,
    pub user_mean_s: f64,
    pub mpi_p2p_mean_s: f64,
    /// `total_s × timesteps`.
    pub run_s: f64,
    pub timesteps: u32,
    /// Largest owned + redundant cell count on any rank.
    pub max_rank_cells: u64,
    pub max_rank_halo_bytes: u64,
    pub total_halo_bytes: u64,
    pub p2p_messages_per_step: u64,
    pub exchange_participants: usize,
}

struct RankCosts {
    cells: Vec<u64>,
    p2p: Vec<f64>,
    messages: u64,
}

fn per_rank_p2p(pattern: &ExchangePattern, cost: &CostModel) -> Vec<f64> {
    let mut t = vec![0.0; pattern.ranks as usize];
    for m in &pattern.messages {
        t[m.dst as usize] += cost.p2p_alpha + m.bytes as f64 / cost.p2p_beta;
    }
    t
}

fn rank_costs(
    d: &Decomposition,
    full: &ExchangePattern,
    cost: &CostModel,
) -> Result<RankCosts, SimError> {
    let ranks = d.ranks();
    let owned: Vec<u64> = (0..ranks).map(|r| d.owned_count(r)).collect();
    let exchanges = f64::from(cost.halo_exchanges_per_step);
    let full_p2p = per_rank_p2p(full, cost);
    let full_msgs = full.message_count() as u64;
    match d.mode() {
        DecompositionMode::ExchangeHalos => Ok(RankCosts {
            cells: owned,
            p2p: full_p2p.iter().map(|t| t * exchanges).collect(),
            messages: full_msgs * u64::from(cost.halo_exchanges_per_step),
        }),
        DecompositionMode::RedundantCompute => {
            let ext = d.redundant_compute_extent()?;
            let eliminated = cost.exchanges_eliminated_by_redundancy;
            let kept = cost.halo_exchanges_per_step - eliminated;
            let rest_p2p = per_rank_p2p(&ext.remaining, cost);
            Ok(RankCosts {
                cells: owned.iter().zip(&ext.extra_cells).map(|(o, e)| o + e).collect(),
                p2p: full_p2p
                    .iter()
                    .zip(&rest_p2p)
                    .map(|(f, r)| f * f64::from(kept) + r * f64::from(eliminated))
                    .collect(),
                messages: full_msgs * u64::from(kept)
                    + ext.remaining.message_count() as u64 * u64::from(eliminated),
            })
        }
    }
}

fn ceil_log2(n: u32) -> u32 {
    if n <= 1 {
        0
    } else {
        32 - (n - 1).leading_zeros()
    }
}

fn max_mean(v: &[f64]) -> (f64, f64) {
    let max = v.iter().copied().fold(0.0, f64::max);
    let mean = if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    (max, mean)
}

/// Build and fill the decomposition a run uses.
pub fn decompose(run: &RunSpec) -> Result<Decomposition, SimError> {
    run.validate()?;
    let d = partition(&run.mesh, run.ranks() as u32)?
        .with_mode(run.mode)
        .with_bytes_per_cell(run.bytes_per_cell)
        .compute_halos(run.halo_depth)?;
    Ok(d)
}

fn check_memory(run: &RunSpec, d: &Decomposition) -> Result<(), SimError> {
    let ranks = d.ranks();
    let max_resident = (0..ranks).map(|r| d.owned_count(r) + d.halo_size(r)).max().unwrap_or(0);
    let per_rank = max_resident as f64
        * f64::from(run.mesh.levels())
        * run.cost.memory_words_per_cell_level
        * 8.0
        + f64::from(ranks) * run.cost.mpi_bytes_per_peer;
    let per_node = per_rank * f64::from(run.ranks_per_node);
    let available = run.machine.node_memory_bytes();
    if per_node > available {
        let gib = (1u64 << 30) as f64;
        return Err(SimError::OutOfMemory {
            required_gib: per_node / gib,
            available_gib: available / gib,
        });
    }
    Ok(())
}

/// Simulate one configuration. Deterministic: equal inputs give bit-equal
/// outputs.
pub fn simulate(run: &RunSpec) -> Result<TimestepBreakdown, SimError> {
    let d = decompose(run)?;
    check_memory(run, &d)?;
    let cost = &run.cost;
    let full = d.exchange_pattern()?;
    let costs = rank_costs(&d, &full, cost)?;

    let threads = run.threads_per_rank;
    let per_cell = f64::from(run.mesh.levels()) * cost.c_cell
        / (f64::from(threads) * cost.efficiency(threads));
    let user: Vec<f64> = costs.cells.iter().map(|&c| c as f64 * per_cell).collect();
    let (user_s, user_mean_s) = max_mean(&user);
    let (mpi_p2p_s, mpi_p2p_mean_s) = max_mean(&costs.p2p);
    let stages = ceil_log2(d.ranks());
    let mpi_coll_s = f64::from(cost.allreduces_per_step)
        * f64::from(stages)
        * (cost.coll_alpha + cost.allreduce_bytes as f64 / cost.coll_beta);
    let etc_s = f64::from(cost.parallel_regions_per_step) * cost.barrier_cost * f64::from(threads)
        + cost.etc_fixed;
    let total_s = user_s + mpi_p2p_s + mpi_coll_s + etc_s;

    Ok(TimestepBreakdown {
        ranks: d.ranks(),
        threads,
        user_s,
        mpi_p2p_s,
        mpi_coll_s,
        etc_s,
        total_s,
        user_mean_s,
        mpi_p2p_mean_s,
        run_s: total_s * f64::from(run.timesteps),
        timesteps: run.timesteps,
        max_rank_cells: costs.cells.iter().copied().max().unwrap_or(0),
        max_rank_halo_bytes: full.max_bytes_into(),
        total_halo_bytes: full.total_bytes(),
        p2p_messages_per_step: costs.messages,
        exchange_participants: full.participating_ranks(),
    })
}

/// One simulated point of a scaling table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub mesh: u32,
    pub nodes: u32,
    pub ranks: u32,
    pub threads: u32,
    pub breakdown: TimestepBreakdown,
}

impl ScalingRow {
    fn from_run(run: &RunSpec, breakdown: TimestepBreakdown) -> Self {
        ScalingRow {
            mesh: run.mesh.panel_size(),
            nodes: run.nodes,
            ranks: breakdown.ranks,
            threads: run.threads_per_rank,
            breakdown,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrongScalingRow {
    pub row: ScalingRow,
    /// `time₀ × nodes₀ / nodes` from the first successful row.
    pub ideal_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedRun {
    pub nodes: u32,
    pub reason: SimError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrongScalingTable {
    pub rows: Vec<StrongScalingRow>,
    pub skipped: Vec<SkippedRun>,
}

impl StrongScalingTable {
    /// `total / ideal − 1` per row.
    pub fn deviation_from_ideal(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.row.breakdown.total_s / r.ideal_s - 1.0).collect()
    }
}

/// Time per step across node counts at a fixed layout. Configurations that
/// fail the memory guard are skipped and reported; other errors abort.
pub fn strong_scaling_study(
    base: &RunSpec,
    node_counts: &[u32],
) -> Result<StrongScalingTable, SimError> {
    if node_counts.is_empty() {
        return Err(SimError::EmptySweep);
    }
    let mut nodes = node_counts.to_vec();
    nodes.sort_unstable();
    nodes.dedup();
    let results: Vec<_> = nodes
        .par_iter()
        .map(|&n| {
            let run = base.clone().with_nodes(n);
            (run.clone(), simulate(&run))
        })
        .collect();

    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    let mut reference: Option<(f64, u32)> = None;
    for (run, res) in results {
        match res {
            Ok(b) => {
                let (t0, n0) = *reference.get_or_insert((b.total_s, run.nodes));
                rows.push(StrongScalingRow {
                    ideal_s: t0 * f64::from(n0) / f64::from(run.nodes),
                    row: ScalingRow::from_run(&run, b),
                });
            }
            Err(reason @ SimError::OutOfMemory { .. }) => {
                skipped.push(SkippedRun { nodes: run.nodes, reason })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(StrongScalingTable { rows, skipped })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThreadSweep {
    pub rows: Vec<ScalingRow>,
    /// Thread count with the lowest total; the smallest wins a tie.
    pub best_threads: u32,
}

/// Vary threads per rank at fixed node count, keeping nodes fully populated.
pub fn thread_sweep(base: &RunSpec, thread_list: &[u32]) -> Result<ThreadSweep, SimError> {
    if thread_list.is_empty() {
        return Err(SimError::EmptySweep);
    }
    let runs: Vec<RunSpec> = thread_list
        .iter()
        .map(|&t| {
            let cores = base.machine.cores_per_node;
            if t == 0 || !cores.is_multiple_of(t) {
                let rpn = cores.checked_div(t).unwrap_or(0);
                validate_layout(&base.machine, rpn, t)?;
            }
            Ok(base.clone().with_threads(t))
        })
        .collect::<Result<_, SimError>>()?;
    let rows = runs
        .par_iter()
        .map(|run| simulate(run).map(|b| ScalingRow::from_run(run, b)))
        .collect::<Result<Vec<_>, _>>()?;
    let best_threads = rows
        .iter()
        .fold(None::<&ScalingRow>, |best, r| match best {
            Some(b) if b.breakdown.total_s < r.breakdown.total_s => Some(b),
            Some(b) if b.breakdown.total_s == r.breakdown.total_s && b.threads < r.threads => {
                Some(b)
            }
            _ => Some(r),
        })
        .map(|r| r.threads)
        .expect("non-empty sweep");
    Ok(ThreadSweep { rows, best_threads })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioRow {
    pub mesh: u32,
    pub nodes: u32,
    pub threads: u32,
    pub user: f64,
    pub mpi_p2p: f64,
    pub mpi_coll: f64,
    pub etc: f64,
    pub total: f64,
}

/// `a / b`, with `0 / 0` taken as 1.
pub fn safe_ratio(a: f64, b: f64) -> f64 {
    if a == b {
        1.0
    } else {
        a / b
    }
}

/// Elementwise `a / b`; values above 1 mean `b` is faster.
pub fn ratio_report(a: &[ScalingRow], b: &[ScalingRow]) -> Result<Vec<RatioRow>, SimError> {
    if a.len() != b.len() {
        return Err(SimError::MismatchedAxes(format!("{} rows vs {} rows", a.len(), b.len())));
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            if (x.mesh, x.nodes, x.threads) != (y.mesh, y.nodes, y.threads) {
                return Err(SimError::MismatchedAxes(format!(
                    "C{}/{} nodes/{} threads vs C{}/{} nodes/{} threads",
                    x.mesh, x.nodes, x.threads, y.mesh, y.nodes, y.threads
                )));
            }
            let (p, q) = (&x.breakdown, &y.breakdown);
            Ok(RatioRow {
                mesh: x.mesh,
                nodes: x.nodes,
                threads: x.threads,
                user: safe_ratio(p.user_s, q.user_s),
                mpi_p2p: safe_ratio(p.mpi_p2p_s, q.mpi_p2p_s),
                mpi_coll: safe_ratio(p.mpi_coll_s, q.mpi_coll_s),
                etc: safe_ratio(p.etc_s, q.etc_s),
                total: safe_ratio(p.total_s, q.total_s),
            })
        })
        .collect()
}

/// Horizontal stacked-bar text chart, one bar per row, grouped like a
/// profiler breakdown (USER / MPI-P2P / MPI-COLL / ETC).
pub fn render_breakdown_chart(rows: &[ScalingRow], width: usize) -> String {
    let max = rows.iter().map(|r| r.breakdown.total_s).fold(0.0, f64::max);
    let mut out = String::new();
    let _ = writeln!(out, "legend: U=USER  P=MPI-P2P  C=MPI-COLL  E=ETC  (seconds per timestep)");
    for r in rows {
        let b = &r.breakdown;
        let scale = if max > 0.0 { width as f64 / max } else { 0.0 };
        let mut bar = String::new();
        let mut used = 0.0;
        for (ch, v) in [('U', b.user_s), ('P', b.mpi_p2p_s), ('C', b.mpi_coll_s), ('E', b.etc_s)] {
            let start = (used * scale).round() as usize;
            used += v;
            let end = (used * scale).round() as usize;
            bar.extend(std::iter::repeat_n(ch, end.saturating_sub(start)));
        }
        let _ = writeln!(
            out,
            "C{:<5} {:>4}n {:>3}t |{:<width$}| {:.4}",
            r.mesh,
            r.nodes,
            r.threads,
            bar,
            b.total_s,
            width = width
        );
    }
    out
}
