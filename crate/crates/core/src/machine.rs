//! Target systems and the cost coefficients the simulators consume.
//!
//! Every coefficient in [`CostModel`] is a calibration value. The presets
//! were tuned so that the simulated ARCHER2 C512 run on 48 nodes with four
//! threads per rank spends roughly half a second per timestep in user code,
//! and so the trends across thread counts and node counts look like the
//! measured ones. They are not measurements.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MachineError {
    #[error(
        "layout {ranks_per_node} ranks/node × {threads_per_rank} threads/rank = {product}, \
         but {machine} has {cores_per_node} cores per node (ranks_per_node × threads_per_rank must equal cores_per_node)"
    )]
    Layout {
        machine: String,
        ranks_per_node: u32,
        threads_per_rank: u32,
        product: u64,
        cores_per_node: u32,
    },
    #[error("machine {name}: {reason}")]
    InvalidMachine { name: String, reason: String },
    #[error("cost model: {0}")]
    InvalidCost(String),
    #[error("unknown machine {0:?}")]
    UnknownMachine(String),
    #[error("unknown cost preset {0:?}")]
    UnknownPreset(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineConfig {
    pub name: String,
    pub cpu_model: String,
    pub cores_per_cpu: u32,
    pub cpus_per_node: u32,
    pub cores_per_node: u32,
    pub clock_ghz: f64,
    pub numa_domains_per_cpu: u32,
    pub l3_mb_per_cpu: f64,
    pub interconnect: String,
    pub max_nodes: u32,
    /// Not part of the hardware table; used only by the memory guard.
    pub node_memory_gib: f64,
}

impl MachineConfig {
    pub fn archer2() -> Self {
        MachineConfig {
            name: "ARCHER2".into(),
            cpu_model: "AMD EPYC 7742 Rome".into(),
            cores_per_cpu: 64,
            cpus_per_node: 2,
            cores_per_node: 128,
            clock_ghz: 2.0,
            numa_domains_per_cpu: 4,
            l3_mb_per_cpu: 16.0 * 16.0,
            interconnect: "Slingshot 10".into(),
            max_nodes: 5600,
            node_memory_gib: 256.0,
        }
    }

    pub fn setonix() -> Self {
        MachineConfig {
            name: "Setonix".into(),
            cpu_model: "AMD EPYC 7763 Milan".into(),
            cores_per_cpu: 64,
            cpus_per_node: 2,
            cores_per_node: 128,
            clock_ghz: 2.45,
            numa_domains_per_cpu: 4,
            l3_mb_per_cpu: 8.0 * 32.0,
            interconnect: "Slingshot 11".into(),
            max_nodes: 1600,
            node_memory_gib: 256.0,
        }
    }

    pub fn xc40() -> Self {
        MachineConfig {
            name: "XC40".into(),
            cpu_model: "Intel Xeon E5 2695 v4".into(),
            cores_per_cpu: 18,
            cpus_per_node: 2,
            cores_per_node: 36,
            clock_ghz: 2.1,
            numa_domains_per_cpu: 1,
            // Not listed in the hardware table; vendor figure for the part.
            l3_mb_per_cpu: 45.0,
            interconnect: "Aries".into(),
            max_nodes: 2000,
            node_memory_gib: 128.0,
        }
    }

    /// Case-insensitive lookup among [`builtin_machines`].
    pub fn builtin(name: &str) -> Result<Self, MachineError> {
        builtin_machines()
            .into_iter()
            .find(|m| m.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| MachineError::UnknownMachine(name.to_string()))
    }

    pub fn validate(&self) -> Result<(), MachineError> {
        let bad = |reason: &str| MachineError::InvalidMachine {
            name: self.name.clone(),
            reason: reason.to_string(),
        };
        if self.cores_per_cpu == 0
            || self.cpus_per_node == 0
            || self.numa_domains_per_cpu == 0
            || self.max_nodes == 0
        {
            return Err(bad("integer fields must be positive"));
        }
        if self.cores_per_node != self.cores_per_cpu * self.cpus_per_node {
            return Err(bad("cores_per_node must equal cores_per_cpu × cpus_per_node"));
        }
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.clock_ghz)
            || !positive(self.l3_mb_per_cpu)
            || !positive(self.node_memory_gib)
        {
            return Err(bad("clock, cache and memory must be positive"));
        }
        Ok(())
    }

    pub fn node_memory_bytes(&self) -> f64 {
        self.node_memory_gib * (1u64 << 30) as f64
    }

    /// All `(ranks_per_node, threads_per_rank)` layouts that fill a node.
    pub fn layouts(&self) -> Vec<Layout> {
        (1..=self.cores_per_node)
            .filter(|t| self.cores_per_node.is_multiple_of(*t))
            .map(|t| Layout { ranks_per_node: self.cores_per_node / t, threads_per_rank: t })
            .collect()
    }
}

/// The three systems of the hardware comparison.
pub fn builtin_machines() -> Vec<MachineConfig> {
    vec![MachineConfig::archer2(), MachineConfig::setonix(), MachineConfig::xc40()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layout {
    pub ranks_per_node: u32,
    pub threads_per_rank: u32,
}

/// Nodes must be fully populated: ranks × threads = cores per node.
pub fn validate_layout(
    machine: &MachineConfig,
    ranks_per_node: u32,
    threads_per_rank: u32,
) -> Result<Layout, MachineError> {
    let product = u64::from(ranks_per_node) * u64::from(threads_per_rank);
    if product != u64::from(machine.cores_per_node) || product == 0 {
        return Err(MachineError::Layout {
            machine: machine.name.clone(),
            ranks_per_node,
            threads_per_rank,
            product,
            cores_per_node: machine.cores_per_node,
        });
    }
    Ok(Layout { ranks_per_node, threads_per_rank })
}

/// Time-cost coefficients for one machine/compiler combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    /// Seconds of user compute per cell per level, single thread.
    pub c_cell: f64,
    /// Seconds per point-to-point message.
    pub p2p_alpha: f64,
    /// Bytes per second a rank packs and sends.
    pub p2p_beta: f64,
    /// Seconds per allreduce stage, including arrival skew across ranks.
    pub coll_alpha: f64,
    /// Bytes per second per allreduce stage.
    pub coll_beta: f64,
    /// Bytes reduced per global sum.
    pub allreduce_bytes: u64,
    pub allreduces_per_step: u32,
    /// Seconds per thread per OpenMP parallel region.
    pub barrier_cost: f64,
    pub parallel_regions_per_step: u32,
    /// Per-rank runtime overhead per timestep (locks, allocation, ...).
    pub etc_fixed: f64,
    pub halo_exchanges_per_step: u32,
    /// How many of the per-step exchanges redundant computation removes.
    pub exchanges_eliminated_by_redundancy: u32,
    /// Threads → parallel efficiency in (0, 1]. Missing thread counts use the
    /// nearest smaller key.
    pub thread_efficiency: BTreeMap<u32, f64>,
    /// 8-byte words resident per cell per level (memory guard).
    pub memory_words_per_cell_level: f64,
    /// Per-rank MPI bookkeeping bytes per peer rank in the job (memory guard).
    pub mpi_bytes_per_peer: f64,
}

fn default_efficiency() -> BTreeMap<u32, f64> {
    BTreeMap::from([(1, 1.0), (2, 1.0), (4, 1.0), (8, 0.98), (16, 0.95)])
}

impl CostModel {
    pub const PRESETS: [&'static str; 5] =
        ["archer2-gnu", "archer2-cray", "setonix-gnu", "setonix-cray", "xc40-intel"];

    /// ARCHER2 with the GNU toolchain; the other presets derive from it.
    pub fn archer2_gnu() -> Self {
        CostModel {
            c_cell: 1.6e-5,
            p2p_alpha: 2.0e-5,
            p2p_beta: 2.0e8,
            coll_alpha: 5.0e-3,
            coll_beta: 1.0e9,
            allreduce_bytes: 8,
            allreduces_per_step: 4,
            barrier_cost: 2.0e-6,
            parallel_regions_per_step: 500,
            etc_fixed: 0.01,
            halo_exchanges_per_step: 50,
            exchanges_eliminated_by_redundancy: 25,
            thread_efficiency: default_efficiency(),
            memory_words_per_cell_level: 400.0,
            mpi_bytes_per_peer: 96.0 * 1024.0,
        }
    }

    /// Heavier runtime overhead (mutex lock/unlock traffic) than GNU.
    pub fn archer2_cray() -> Self {
        CostModel { c_cell: 1.55e-5, barrier_cost: 4.0e-6, etc_fixed: 0.03, ..Self::archer2_gnu() }
    }

    pub fn setonix_gnu() -> Self {
        let base = Self::archer2_gnu();
        CostModel {
            c_cell: base.c_cell * 2.0 / 2.45,
            p2p_alpha: 1.6e-5,
            p2p_beta: 2.5e8,
            coll_alpha: 4.0e-3,
            coll_beta: 2.0e9,
            ..base
        }
    }

    pub fn setonix_cray() -> Self {
        CostModel {
            c_cell: Self::setonix_gnu().c_cell * 0.97,
            barrier_cost: 4.0e-6,
            etc_fixed: 0.03,
            ..Self::setonix_gnu()
        }
    }

    pub fn xc40_intel() -> Self {
        CostModel {
            c_cell: 2.2e-5,
            p2p_alpha: 3.0e-5,
            p2p_beta: 1.5e8,
            coll_alpha: 6.0e-3,
            coll_beta: 5.0e8,
            ..Self::archer2_gnu()
        }
    }

    pub fn preset(name: &str) -> Result<Self, MachineError> {
        match name.to_ascii_lowercase().as_str() {
            "archer2-gnu" => Ok(Self::archer2_gnu()),
            "archer2-cray" => Ok(Self::archer2_cray()),
            "setonix-gnu" => Ok(Self::setonix_gnu()),
            "setonix-cray" => Ok(Self::setonix_cray()),
            "xc40-intel" => Ok(Self::xc40_intel()),
            _ => Err(MachineError::UnknownPreset(name.to_string())),
        }
    }

    /// Default preset for a machine name (GNU toolchain where there is one).
    pub fn default_for(machine: &MachineConfig) -> Self {
        match machine.name.to_ascii_lowercase().as_str() {
            "setonix" => Self::setonix_gnu(),
            "xc40" => Self::xc40_intel(),
            _ => Self::archer2_gnu(),
        }
    }

    pub fn efficiency(&self, threads: u32) -> f64 {
        self.thread_efficiency.range(..=threads).next_back().map_or(1.0, |(_, &e)| e)
    }

    pub fn validate(&self) -> Result<(), MachineError> {
        let err = |s: &str| Err(MachineError::InvalidCost(s.to_string()));
        let coeffs = [
            ("c_cell", self.c_cell),
            ("p2p_alpha", self.p2p_alpha),
            ("coll_alpha", self.coll_alpha),
            ("barrier_cost", self.barrier_cost),
            ("etc_fixed", self.etc_fixed),
            ("memory_words_per_cell_level", self.memory_words_per_cell_level),
            ("mpi_bytes_per_peer", self.mpi_bytes_per_peer),
        ];
        for (name, v) in coeffs {
            if !(v.is_finite() && v >= 0.0) {
                return Err(MachineError::InvalidCost(format!("{name} must be finite and ≥ 0")));
            }
        }
        if !(self.p2p_beta > 0.0 && self.coll_beta > 0.0) {
            return err("bandwidths must be positive");
        }
        if self.exchanges_eliminated_by_redundancy > self.halo_exchanges_per_step {
            return err("exchanges_eliminated_by_redundancy exceeds halo_exchanges_per_step");
        }
        if self.thread_efficiency.get(&1) != Some(&1.0) {
            return err("thread_efficiency must map 1 thread to 1.0");
        }
        if self.thread_efficiency.values().any(|&e| !(e > 0.0 && e <= 1.0)) {
            return err("thread efficiencies must lie in (0, 1]");
        }
        Ok(())
    }

    /// Copy with every time coefficient multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        CostModel {
            c_cell: self.c_cell * factor,
            p2p_alpha: self.p2p_alpha * factor,
            p2p_beta: self.p2p_beta / factor,
            coll_alpha: self.coll_alpha * factor,
            coll_beta: self.coll_beta / factor,
            barrier_cost: self.barrier_cost * factor,
            etc_fixed: self.etc_fixed * factor,
            ..self.clone()
        }
    }
}

impl Default for CostModel {
    fn default() -> Self {
        Self::archer2_gnu()
    }
}
