//! Scenario files.
//!
//! A scenario file is JSON. Every section is optional except that a file must
//! ask for something to run. Machine and cost sections start from a named
//! preset and override individual fields; unknown keys anywhere are rejected
//! with their line and column.

use std::collections::BTreeMap;
use std::path::Path;

use dycore_perf::decomp::DEFAULT_BYTES_PER_CELL;
use dycore_perf::iosim::IoSimError;
use dycore_perf::machine::validate_layout;
use dycore_perf::{
    build_mesh, CostModel, DecompositionMode, IoScenario, Layout, MachineConfig, RunSpec,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

fn default_machine() -> String {
    "archer2".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineSection {
    #[serde(default = "default_machine")]
    pub preset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cpu_model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cores_per_cpu: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cpus_per_node: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cores_per_node: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clock_ghz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numa_domains_per_cpu: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l3_mb_per_cpu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interconnect: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_nodes: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_memory_gib: Option<f64>,
}

impl Default for MachineSection {
    fn default() -> Self {
        MachineSection {
            preset: default_machine(),
            name: None,
            cpu_model: None,
            cores_per_cpu: None,
            cpus_per_node: None,
            cores_per_node: None,
            clock_ghz: None,
            numa_domains_per_cpu: None,
            l3_mb_per_cpu: None,
            interconnect: None,
            max_nodes: None,
            node_memory_gib: None,
        }
    }
}

macro_rules! overlay {
    ($base:ident, $section:expr, $($field:ident),+ $(,)?) => {
        $(if let Some(v) = &$section.$field {
            $base.$field = v.clone();
        })+
    };
}

impl MachineSection {
    pub fn resolve(&self) -> Result<MachineConfig, CliError> {
        let mut m = MachineConfig::builtin(&self.preset)
            .map_err(|e| CliError::config(format!("machine.preset: {e}")))?;
        overlay!(
            m,
            self,
            name,
            cpu_model,
            cores_per_cpu,
            cpus_per_node,
            cores_per_node,
            clock_ghz,
            numa_domains_per_cpu,
            l3_mb_per_cpu,
            interconnect,
            max_nodes,
            node_memory_gib,
        );
        m.validate().map_err(|e| CliError::config(format!("machine: {e}")))?;
        Ok(m)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    /// Defaults to the machine's own preset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_cell: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p2p_alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p2p_beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coll_alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coll_beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allreduce_bytes: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allreduces_per_step: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub barrier_cost: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parallel_regions_per_step: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub etc_fixed: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub halo_exchanges_per_step: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exchanges_eliminated_by_redundancy: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thread_efficiency: Option<BTreeMap<u32, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory_words_per_cell_level: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mpi_bytes_per_peer: Option<f64>,
}

impl CostSection {
    pub fn resolve(&self, machine: &MachineConfig) -> Result<CostModel, CliError> {
        let mut c = match &self.preset {
            Some(name) => CostModel::preset(name)
                .map_err(|e| CliError::config(format!("cost_model.preset: {e}")))?,
            None => CostModel::default_for(machine),
        };
        overlay!(
            c,
            self,
            c_cell,
            p2p_alpha,
            p2p_beta,
            coll_alpha,
            coll_beta,
            allreduce_bytes,
            allreduces_per_step,
            barrier_cost,
            parallel_regions_per_step,
            etc_fixed,
            halo_exchanges_per_step,
            exchanges_eliminated_by_redundancy,
            thread_efficiency,
            memory_words_per_cell_level,
            mpi_bytes_per_peer,
        );
        c.validate().map_err(|e| CliError::config(format!("cost_model: {e}")))?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Case {
    /// Panel size N of a CN mesh.
    pub mesh: u32,
    pub nodes: u32,
}

fn default_levels() -> u32 {
    120
}

fn default_timesteps() -> u32 {
    96
}

fn default_one() -> u32 {
    1
}

fn default_bytes_per_cell() -> u64 {
    DEFAULT_BYTES_PER_CELL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DyncoreSection {
    #[serde(default = "default_levels")]
    pub levels: u32,
    #[serde(default = "default_timesteps")]
    pub timesteps: u32,
    #[serde(default)]
    pub mode: DecompositionMode,
    #[serde(default = "default_one")]
    pub halo_depth: u32,
    #[serde(default = "default_bytes_per_cell")]
    pub bytes_per_cell: u64,
    pub cases: Vec<Case>,
    pub layouts: Vec<Layout>,
}

/// Take an I/O scenario's compute rate from one of the dyncore runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coupling {
    #[serde(default)]
    pub case: usize,
    #[serde(default)]
    pub layout: usize,
    pub timesteps_per_hour: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedIo {
    pub name: String,
    pub scenario: IoScenario,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compute_from_dyncore: Option<Coupling>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buffer_bytes: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub servers: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pools: Option<Vec<u64>>,
    /// Name of the `io` entry the I/O axes vary; the first one by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub io_scenario: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default)]
    pub machine: MachineSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_model: Option<CostSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dyncore: Option<DyncoreSection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub io: Vec<NamedIo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

impl ScenarioFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        serde_json::from_str(text)
            .map_err(|e| CliError::config(format!("{origin}:{}:{}: {e}", e.line(), e.column())))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Canonical text: pretty JSON with every defaulted field spelled out.
    pub fn to_canonical(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let machine = self.machine.resolve()?;
        let cost = self.cost_model.clone().unwrap_or_default().resolve(&machine)?;
        let dyncore = match &self.dyncore {
            Some(d) => Some(resolve_dyncore(d, &machine, &cost)?),
            None => None,
        };
        let mut io = Vec::with_capacity(self.io.len());
        for (k, entry) in self.io.iter().enumerate() {
            let at = format!("io[{k}] ({})", entry.name);
            if self.io[..k].iter().any(|e| e.name == entry.name) {
                return Err(CliError::config(format!("{at}: duplicate scenario name")));
            }
            match entry.scenario.validate() {
                // Capacity failures are outcomes of the run, not config mistakes.
                Ok(())
                | Err(IoSimError::UnwritableField { .. })
                | Err(IoSimError::OutOfMemory { .. }) => {}
                Err(e) => return Err(CliError::config(format!("{at}: {e}"))),
            }
            if let Some(c) = &entry.compute_from_dyncore {
                let Some(d) = &dyncore else {
                    return Err(CliError::config(format!(
                        "{at}.compute_from_dyncore: no dyncore section"
                    )));
                };
                if c.case >= d.cases.len() || c.layout >= d.layouts.len() {
                    return Err(CliError::config(format!(
                        "{at}.compute_from_dyncore: case {} / layout {} out of range",
                        c.case, c.layout
                    )));
                }
                if !(c.timesteps_per_hour.is_finite() && c.timesteps_per_hour > 0.0) {
                    return Err(CliError::config(format!(
                        "{at}.compute_from_dyncore.timesteps_per_hour must be positive"
                    )));
                }
            }
            io.push(entry.clone());
        }
        if dyncore.is_none() && io.is_empty() {
            return Err(CliError::config("config has neither a dyncore nor an io section"));
        }
        Ok(Resolved { machine, cost, dyncore, io, sweep: self.sweep.clone().unwrap_or_default() })
    }
}

fn resolve_dyncore(
    d: &DyncoreSection,
    machine: &MachineConfig,
    cost: &CostModel,
) -> Result<ResolvedDyncore, CliError> {
    if d.cases.is_empty() {
        return Err(CliError::config("dyncore.cases: at least one case is required"));
    }
    if d.layouts.is_empty() {
        return Err(CliError::config("dyncore.layouts: at least one layout is required"));
    }
    if d.timesteps == 0 {
        return Err(CliError::config("dyncore.timesteps must be positive"));
    }
    if d.halo_depth == 0 {
        return Err(CliError::config("dyncore.halo_depth must be positive"));
    }
    for (k, l) in d.layouts.iter().enumerate() {
        validate_layout(machine, l.ranks_per_node, l.threads_per_rank)
            .map_err(|e| CliError::config(format!("dyncore.layouts[{k}]: {e}")))?;
    }
    let mut cases = Vec::with_capacity(d.cases.len());
    for (k, c) in d.cases.iter().enumerate() {
        let mesh = build_mesh(c.mesh, d.levels)
            .map_err(|e| CliError::config(format!("dyncore.cases[{k}]: {e}")))?;
        if c.nodes == 0 || c.nodes > machine.max_nodes {
            return Err(CliError::config(format!(
                "dyncore.cases[{k}]: nodes = {} outside 1..={} for {}",
                c.nodes, machine.max_nodes, machine.name
            )));
        }
        if d.halo_depth > c.mesh {
            return Err(CliError::config(format!(
                "dyncore.halo_depth = {} exceeds panel size {}",
                d.halo_depth, c.mesh
            )));
        }
        cases.push((*c, mesh));
    }
    let base = |c: &Case, mesh, l: &Layout| {
        let mut run =
            RunSpec::new(mesh, machine.clone(), c.nodes, l.ranks_per_node, l.threads_per_rank)
                .with_cost(cost.clone())
                .with_mode(d.mode);
        run.timesteps = d.timesteps;
        run.halo_depth = d.halo_depth;
        run.bytes_per_cell = d.bytes_per_cell;
        run
    };
    let runs = cases
        .iter()
        .flat_map(|(c, mesh)| d.layouts.iter().map(move |l| (c, mesh, l)))
        .map(|(c, mesh, l)| base(c, *mesh, l))
        .collect();
    Ok(ResolvedDyncore { cases: d.cases.clone(), layouts: d.layouts.clone(), runs })
}

#[derive(Debug, Clone)]
pub struct ResolvedDyncore {
    pub cases: Vec<Case>,
    pub layouts: Vec<Layout>,
    /// Case-major grid: `runs[case * layouts.len() + layout]`.
    pub runs: Vec<RunSpec>,
}

impl ResolvedDyncore {
    pub fn run(&self, case: usize, layout: usize) -> &RunSpec {
        &self.runs[case * self.layouts.len() + layout]
    }
}

#[derive(Debug, Clone)]
pub struct Resolved {
    pub machine: MachineConfig,
    pub cost: CostModel,
    pub dyncore: Option<ResolvedDyncore>,
    pub io: Vec<NamedIo>,
    pub sweep: SweepSection,
}

impl Resolved {
    /// Number of independent simulation points a plain run produces.
    pub fn points(&self) -> usize {
        self.dyncore.as_ref().map_or(0, |d| d.runs.len()) + self.io.len()
    }

    pub fn io_scenario(&self, name: Option<&str>) -> Result<&NamedIo, CliError> {
        match name {
            Some(n) => self.io.iter().find(|e| e.name == n).ok_or_else(|| {
                CliError::config(format!("sweep.io_scenario: no io entry named {n:?}"))
            }),
            None => {
                self.io.first().ok_or_else(|| CliError::config("I/O sweep axes need an io section"))
            }
        }
    }
}
