//! Event-driven model of an asynchronous I/O server system.
//!
//! Clients compute, then copy each field they emit into a local buffer and
//! carry on. Servers drain those buffers into per-pool staging memory and
//! write to storage. A client whose buffer is full blocks until enough data
//! has drained; that blocked time is the quantity of interest.
//!
//! Clients that are indistinguishable (same server, same share of every field)
//! are merged into a single *class* whose buffer is the sum of its members'.
//! With one server level every client is alike and the whole client side is
//! one class. With two levels, clients are dealt round-robin over the gather
//! servers, which therefore own either ⌈C/S₁⌉ or ⌊C/S₁⌋ clients: at most two
//! classes. Per-field shares are integers (the remainder of `bytes / clients`
//! goes one byte each to the lowest client ids), so members of a class can
//! differ by a byte; the class is treated as one buffer regardless.
//!
//! Data moves in *chunks*, one per (output time, field, class). Chunks carry
//! a logical order (output time, field, class) and every queue in the model
//! serves chunks in that order: a pool admits chunks into staging in order, and
//! a gather server forwards its class's chunks in order. Fixed service order
//! makes the whole system a max-plus recursion in its inputs, so enlarging any
//! buffer can only move events earlier, and it rules out deadlock because the
//! oldest unfinished chunk can always make progress.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dyncore::TimestepBreakdown;
use crate::event::EventQueue;
use crate::workload::{DiagnosticSchedule, ScheduleError};

pub const MIB: f64 = 1_048_576.0;

/// Default ratio of gather (level-1 to level-2) bandwidth to the per-server
/// storage write rate.
pub const DEFAULT_TRANSFER_MULTIPLIER: f64 = 4.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IoSimError {
    #[error("clients must be positive")]
    ZeroClients,
    #[error("at least one I/O server is required")]
    NoServers,
    #[error("pools must be positive")]
    ZeroPools,
    #[error("{pools} pools do not divide {servers} writing servers")]
    PoolsNotDivisor { pools: u32, servers: u32 },
    #[error("files must be positive")]
    ZeroFiles,
    #[error("{0} must be positive")]
    ZeroBuffer(&'static str),
    #[error("{0} must be finite and positive")]
    InvalidRate(&'static str),
    #[error("striping_factor must be finite and ≥ 1, got {0}")]
    InvalidStriping(f64),
    #[error("stripe_count must be finite and ≥ 1, got {0}")]
    InvalidStripeCount(f64),
    #[error("writers_per_stripe must be positive")]
    ZeroWritersPerStripe,
    #[error("rate_jitter must be in [0, 1), got {0}")]
    InvalidJitter(f64),
    #[error("server_nodes must be positive")]
    ZeroServerNodes,
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(
        "unwritable field: a {field_bytes}-byte field puts {per_client} bytes on each client, \
         more than buffer_bytes = {buffer_bytes}"
    )]
    UnwritableField { field_bytes: u64, per_client: u64, buffer_bytes: u64 },
    #[error(
        "out of memory: {servers_per_node} servers per node × {server_buffer_bytes} bytes \
         = {required} bytes, node has {available}"
    )]
    OutOfMemory { servers_per_node: u64, server_buffer_bytes: u64, required: u64, available: u64 },
    #[error("sweep values must be nonempty, positive and strictly ascending")]
    BadSweep,
    #[error("repeat count must be positive")]
    ZeroRepeats,
}

fn default_one() -> u32 {
    1
}

fn default_striping() -> f64 {
    1.0
}

fn default_writers_per_stripe() -> u32 {
    2
}

fn default_server_buffer() -> u64 {
    256 << 20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoScenario {
    pub clients: u32,
    pub servers_level1: u32,
    #[serde(default)]
    pub servers_level2: u32,
    #[serde(default = "default_one")]
    pub pools: u32,
    /// Per-client buffer.
    pub buffer_bytes: u64,
    /// Bytes per second one server writes to storage.
    pub base_write_rate: f64,
    #[serde(default = "default_striping")]
    pub striping_factor: f64,
    /// Upper bound on the striping multiplier; unbounded when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stripe_count: Option<f64>,
    /// Servers that can usefully write to one stripe at once.
    #[serde(default = "default_writers_per_stripe")]
    pub writers_per_stripe: u32,
    #[serde(default = "default_one")]
    pub files: u32,
    pub schedule: DiagnosticSchedule,
    /// Wall seconds of model computation per simulated hour.
    pub compute_rate: f64,
    /// Per gather server, bytes per second. Defaults to 4 × base_write_rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transfer_rate: Option<f64>,
    /// Staging memory per writing server.
    #[serde(default = "default_server_buffer")]
    pub server_buffer_bytes: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub server_nodes: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub server_node_memory_bytes: Option<u64>,
    /// Relative half-width of the per-pool write-rate perturbation used by
    /// repeated runs. Zero makes repeats identical.
    #[serde(default)]
    pub rate_jitter: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IoMetrics {
    pub wall_clock_s: f64,
    pub compute_s: f64,
    /// Mean over clients of time spent blocked on a full buffer.
    pub client_wait_s: f64,
    pub client_wait_pct: f64,
    /// Bytes written over the time during which any pool was writing.
    pub server_write_rate_mib_s: f64,
    pub server_busy_s: f64,
    pub bytes_written: u64,
    pub chunks: u64,
    pub events: u64,
}

/// Byte accounting after one event has been fully processed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Snapshot {
    pub time: f64,
    pub emitted: u64,
    pub in_client_buffers: u64,
    pub in_server_staging: u64,
    pub written: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IoTrace {
    pub metrics: IoMetrics,
    pub snapshots: Vec<Snapshot>,
}

impl IoScenario {
    /// Writers are the level-2 servers when there are any, else level 1.
    pub fn writing_servers(&self) -> u32 {
        if self.servers_level2 > 0 {
            self.servers_level2
        } else {
            self.servers_level1
        }
    }

    /// Level-1 servers only gather when level-2 servers exist to write.
    pub fn gathering_servers(&self) -> u32 {
        if self.servers_level2 > 0 {
            self.servers_level1
        } else {
            0
        }
    }

    pub fn total_servers(&self) -> u32 {
        self.servers_level1 + self.servers_level2
    }

    pub fn servers_per_pool(&self) -> u32 {
        self.writing_servers() / self.pools.max(1)
    }

    pub fn transfer_rate(&self) -> f64 {
        self.transfer_rate.unwrap_or(DEFAULT_TRANSFER_MULTIPLIER * self.base_write_rate)
    }

    pub fn effective_striping(&self) -> f64 {
        match self.stripe_count {
            Some(cap) => self.striping_factor.min(cap),
            None => self.striping_factor,
        }
    }

    /// Storage write rate of one pool, in bytes per second.
    pub fn pool_write_rate(&self) -> f64 {
        let useful = self.effective_striping() * f64::from(self.writers_per_stripe);
        self.base_write_rate * f64::from(self.servers_per_pool()).min(useful)
    }

    /// Sum of pool write rates over pools that own at least one file.
    pub fn aggregate_write_rate(&self) -> f64 {
        let active = self.pools.min(self.files);
        self.pool_write_rate() * f64::from(active)
    }

    pub fn pure_compute_s(&self) -> f64 {
        self.schedule.run_hours * self.compute_rate
    }

    /// Neither computation nor storage bandwidth can be beaten.
    pub fn wall_clock_lower_bound(&self) -> f64 {
        let bytes = self.schedule.total_bytes() as f64;
        let drain = if bytes > 0.0 { bytes / self.aggregate_write_rate() } else { 0.0 };
        self.pure_compute_s().max(drain)
    }

    /// Largest number of bytes any one client receives from a single field.
    pub fn max_client_share(&self) -> u64 {
        self.schedule.largest_field_bytes().div_ceil(u64::from(self.clients.max(1)))
    }

    pub fn validate(&self) -> Result<(), IoSimError> {
        if self.clients == 0 {
            return Err(IoSimError::ZeroClients);
        }
        if self.total_servers() == 0 {
            return Err(IoSimError::NoServers);
        }
        if self.pools == 0 {
            return Err(IoSimError::ZeroPools);
        }
        let writers = self.writing_servers();
        if !writers.is_multiple_of(self.pools) {
            return Err(IoSimError::PoolsNotDivisor { pools: self.pools, servers: writers });
        }
        if self.files == 0 {
            return Err(IoSimError::ZeroFiles);
        }
        if self.buffer_bytes == 0 {
            return Err(IoSimError::ZeroBuffer("buffer_bytes"));
        }
        if self.server_buffer_bytes == 0 {
            return Err(IoSimError::ZeroBuffer("server_buffer_bytes"));
        }
        if !(self.base_write_rate.is_finite() && self.base_write_rate > 0.0) {
            return Err(IoSimError::InvalidRate("base_write_rate"));
        }
        if let Some(t) = self.transfer_rate {
            if !(t.is_finite() && t > 0.0) {
                return Err(IoSimError::InvalidRate("transfer_rate"));
            }
        }
        if !(self.compute_rate.is_finite() && self.compute_rate >= 0.0) {
            return Err(IoSimError::InvalidRate("compute_rate"));
        }
        if !(self.striping_factor.is_finite() && self.striping_factor >= 1.0) {
            return Err(IoSimError::InvalidStriping(self.striping_factor));
        }
        if let Some(c) = self.stripe_count {
            if !(c.is_finite() && c >= 1.0) {
                return Err(IoSimError::InvalidStripeCount(c));
            }
        }
        if self.writers_per_stripe == 0 {
            return Err(IoSimError::ZeroWritersPerStripe);
        }
        if !(self.rate_jitter.is_finite() && (0.0..1.0).contains(&self.rate_jitter)) {
            return Err(IoSimError::InvalidJitter(self.rate_jitter));
        }
        if self.server_nodes == Some(0) {
            return Err(IoSimError::ZeroServerNodes);
        }
        self.schedule.validate()?;
        let per_client = self.max_client_share();
        if per_client > self.buffer_bytes {
            return Err(IoSimError::UnwritableField {
                field_bytes: self.schedule.largest_field_bytes(),
                per_client,
                buffer_bytes: self.buffer_bytes,
            });
        }
        self.check_memory()
    }

    /// Servers are packed evenly onto `server_nodes`; each reserves its
    /// staging buffer.
    pub fn check_memory(&self) -> Result<(), IoSimError> {
        let (Some(nodes), Some(available)) = (self.server_nodes, self.server_node_memory_bytes)
        else {
            return Ok(());
        };
        let servers_per_node = u64::from(self.total_servers()).div_ceil(u64::from(nodes.max(1)));
        let required = servers_per_node.saturating_mul(self.server_buffer_bytes);
        if required > available {
            return Err(IoSimError::OutOfMemory {
                servers_per_node,
                server_buffer_bytes: self.server_buffer_bytes,
                required,
                available,
            });
        }
        Ok(())
    }

    /// Compute rate implied by a dynamical-core timestep cost.
    pub fn with_compute_from(mut self, step: &TimestepBreakdown, timesteps_per_hour: f64) -> Self {
        self.compute_rate = step.total_s * timesteps_per_hour;
        self
    }
}

/// Set `compute_rate` from a dynamical-core timestep breakdown.
pub fn couple_compute_rate(
    scenario: &IoScenario,
    step: &TimestepBreakdown,
    timesteps_per_hour: f64,
) -> IoScenario {
    scenario.clone().with_compute_from(step, timesteps_per_hour)
}

#[derive(Debug, Clone)]
struct ClientClass {
    members: u64,
    capacity: u64,
    /// Members are clients `c` with `c mod stride` in `lo..hi`.
    stride: u64,
    lo: u64,
    hi: u64,
    gather_rate: Option<f64>,
}

impl ClientClass {
    /// Members with id below `x`.
    fn members_below(&self, x: u64) -> u64 {
        let full = x / self.stride;
        let part = x % self.stride;
        full * (self.hi - self.lo) + part.clamp(self.lo, self.hi) - self.lo
    }

    fn share(&self, field_bytes: u64, clients: u64) -> u64 {
        self.members * (field_bytes / clients) + self.members_below(field_bytes % clients)
    }
}

fn client_classes(s: &IoScenario) -> Vec<ClientClass> {
    let clients = u64::from(s.clients);
    let gather = u64::from(s.gathering_servers());
    let buffer = s.buffer_bytes;
    if gather == 0 {
        return vec![ClientClass {
            members: clients,
            capacity: clients.saturating_mul(buffer),
            stride: 1,
            lo: 0,
            hi: 1,
            gather_rate: None,
        }];
    }
    let q = clients / gather;
    let r = clients % gather;
    let rate = s.transfer_rate();
    let mut classes = Vec::with_capacity(2);
    // Servers 0..r own q+1 clients, servers r..gather own q.
    for (lo, hi, per) in [(0, r, q + 1), (r, gather, q)] {
        let servers = hi - lo;
        if servers == 0 || per == 0 {
            continue;
        }
        let members = servers * per;
        classes.push(ClientClass {
            members,
            capacity: members.saturating_mul(buffer),
            stride: gather,
            lo,
            hi,
            gather_rate: Some(servers as f64 * rate),
        });
    }
    classes
}

#[derive(Debug, Clone, Copy)]
struct Chunk {
    class: usize,
    bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Computing,
    Emitting,
    Done,
}

#[derive(Debug)]
struct ClassState {
    /// Chunk ids grouped by output time, in logical order.
    groups: Vec<(f64, std::ops::Range<usize>)>,
    chunk_ids: Vec<usize>,
    group: usize,
    next_in_group: usize,
    phase: Phase,
    ready_at: f64,
    wait: f64,
    used: u64,
    /// Next of this class's chunks to be gathered (two-level only).
    gather_head: usize,
    gathering: bool,
}

#[derive(Debug)]
struct PoolState {
    order: Vec<usize>,
    next_admit: usize,
    staged: u64,
    capacity: u64,
    /// Admitted chunks awaiting or undergoing write, in admission order.
    write_queue: std::collections::VecDeque<usize>,
    writing: bool,
    rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Ev {
    WriteDone(usize),
    GatherDone(usize),
    Resume,
    Finish,
}

const KIND_WRITE: u8 = 0;
const KIND_GATHER: u8 = 1;
const KIND_RESUME: u8 = 2;
const KIND_FINISH: u8 = 3;

struct Sim<'a> {
    scenario: &'a IoScenario,
    classes: Vec<ClientClass>,
    chunks: Vec<Chunk>,
    emitted: Vec<bool>,
    gathered: Vec<bool>,
    cls: Vec<ClassState>,
    pools: Vec<PoolState>,
    queue: EventQueue<Ev>,
    bytes_emitted: u64,
    bytes_in_clients: u64,
    bytes_staged: u64,
    bytes_written: u64,
    active_writes: usize,
    busy_since: f64,
    busy: f64,
    last_event: f64,
    events: u64,
}

impl<'a> Sim<'a> {
    fn new(scenario: &'a IoScenario, pool_rates: &[f64]) -> Self {
        let classes = client_classes(scenario);
        let clients = u64::from(scenario.clients);
        let npools = scenario.pools as usize;
        let files = u64::from(scenario.files);

        let mut chunks = Vec::new();
        let mut cls: Vec<ClassState> = classes
            .iter()
            .map(|_| ClassState {
                groups: Vec::new(),
                chunk_ids: Vec::new(),
                group: 0,
                next_in_group: 0,
                phase: Phase::Computing,
                ready_at: 0.0,
                wait: 0.0,
                used: 0,
                gather_head: 0,
                gathering: false,
            })
            .collect();
        let per_pool_writers = u64::from(scenario.servers_per_pool());
        let mut pools: Vec<PoolState> = (0..npools)
            .map(|p| PoolState {
                order: Vec::new(),
                next_admit: 0,
                staged: 0,
                capacity: per_pool_writers.saturating_mul(scenario.server_buffer_bytes),
                write_queue: Default::default(),
                writing: false,
                rate: pool_rates[p],
            })
            .collect();

        let events = scenario.schedule.emission_events();
        let mut start = 0;
        while start < events.len() {
            let key = events[start].time_key();
            let end = start + events[start..].iter().take_while(|e| e.time_key() == key).count();
            let time = events[start].time_hours;
            let before: Vec<usize> = cls.iter().map(|c| c.chunk_ids.len()).collect();
            for ev in &events[start..end] {
                let file = u64::from(ev.field_index) % files;
                let pool = (file % npools as u64) as usize;
                for (k, class) in classes.iter().enumerate() {
                    let id = chunks.len();
                    chunks.push(Chunk { class: k, bytes: class.share(ev.bytes, clients) });
                    cls[k].chunk_ids.push(id);
                    pools[pool].order.push(id);
                }
            }
            for (k, c) in cls.iter_mut().enumerate() {
                c.groups.push((time, before[k]..c.chunk_ids.len()));
            }
            start = end;
        }
        let n = chunks.len();
        Sim {
            scenario,
            classes,
            chunks,
            emitted: vec![false; n],
            gathered: vec![false; n],
            cls,
            pools,
            queue: EventQueue::new(),
            bytes_emitted: 0,
            bytes_in_clients: 0,
            bytes_staged: 0,
            bytes_written: 0,
            active_writes: 0,
            busy_since: 0.0,
            busy: 0.0,
            last_event: 0.0,
            events: 0,
        }
    }

    fn pool_entity(&self, p: usize) -> u32 {
        (self.classes.len() + p) as u32
    }

    /// Schedule the end of the compute interval that follows `from_hours`.
    fn schedule_compute(&mut self, k: usize, from_hours: f64) {
        let now = self.queue.now();
        let rate = self.scenario.compute_rate;
        let c = &self.cls[k];
        match c.groups.get(c.group) {
            Some(&(t, _)) => self.queue.schedule(
                now + (t - from_hours) * rate,
                k as u32,
                KIND_RESUME,
                Ev::Resume,
            ),
            None => {
                let t = self.scenario.schedule.run_hours;
                self.queue.schedule(
                    now + (t - from_hours) * rate,
                    k as u32,
                    KIND_FINISH,
                    Ev::Finish,
                )
            }
        }
    }

    /// Emit as much of the current output group as fits. Returns whether any
    /// state changed.
    fn try_emit(&mut self, k: usize) -> bool {
        if self.cls[k].phase != Phase::Emitting {
            return false;
        }
        let mut progressed = false;
        loop {
            let c = &self.cls[k];
            let range = c.groups[c.group].1.clone();
            let pos = range.start + c.next_in_group;
            if pos >= range.end {
                break;
            }
            let id = c.chunk_ids[pos];
            let bytes = self.chunks[id].bytes;
            if c.used + bytes > self.classes[k].capacity {
                return progressed;
            }
            let c = &mut self.cls[k];
            c.used += bytes;
            c.next_in_group += 1;
            self.emitted[id] = true;
            self.bytes_emitted += bytes;
            self.bytes_in_clients += bytes;
            progressed = true;
        }
        // Whole group emitted: account the blocked time and compute onwards.
        let now = self.queue.now();
        let c = &mut self.cls[k];
        c.wait += now - c.ready_at;
        let from = c.groups[c.group].0;
        c.group += 1;
        c.next_in_group = 0;
        c.phase = Phase::Computing;
        self.schedule_compute(k, from);
        true
    }

    fn release_client(&mut self, id: usize) {
        let Chunk { class, bytes } = self.chunks[id];
        self.cls[class].used -= bytes;
        self.bytes_in_clients -= bytes;
        self.bytes_staged += bytes;
    }

    /// Admit chunks into a pool's staging memory in logical order.
    fn try_admit(&mut self, p: usize) -> bool {
        let mut progressed = false;
        while let Some(&id) = self.pools[p].order.get(self.pools[p].next_admit) {
            if !self.emitted[id] {
                break;
            }
            let chunk = self.chunks[id];
            let pool = &self.pools[p];
            let fits = pool.staged + chunk.bytes <= pool.capacity;
            // A chunk larger than all of staging goes through on its own.
            if !fits && pool.staged > 0 {
                break;
            }
            let gather = self.classes[chunk.class].gather_rate;
            if let Some(rate) = gather {
                let c = &self.cls[chunk.class];
                if c.gathering || c.chunk_ids.get(c.gather_head) != Some(&id) {
                    break;
                }
                let c = &mut self.cls[chunk.class];
                c.gathering = true;
                c.gather_head += 1;
                let now = self.queue.now();
                self.queue.schedule(
                    now + chunk.bytes as f64 / rate,
                    chunk.class as u32,
                    KIND_GATHER,
                    Ev::GatherDone(id),
                );
            } else {
                self.gathered[id] = true;
                self.release_client(id);
            }
            let pool = &mut self.pools[p];
            pool.staged += chunk.bytes;
            pool.next_admit += 1;
            pool.write_queue.push_back(id);
            progressed = true;
        }
        progressed
    }

    fn try_write(&mut self, p: usize) -> bool {
        let pool = &self.pools[p];
        if pool.writing {
            return false;
        }
        let Some(&id) = pool.write_queue.front() else {
            return false;
        };
        if !self.gathered[id] {
            return false;
        }
        let rate = pool.rate;
        self.pools[p].writing = true;
        let now = self.queue.now();
        if self.active_writes == 0 {
            self.busy_since = now;
        }
        self.active_writes += 1;
        let dt = self.chunks[id].bytes as f64 / rate;
        let entity = self.pool_entity(p);
        self.queue.schedule(now + dt, entity, KIND_WRITE, Ev::WriteDone(p));
        true
    }

    fn settle(&mut self) {
        loop {
            let mut changed = false;
            for k in 0..self.cls.len() {
                changed |= self.try_emit(k);
            }
            for p in 0..self.pools.len() {
                changed |= self.try_admit(p);
                changed |= self.try_write(p);
            }
            if !changed {
                break;
            }
        }
    }

    fn handle(&mut self, entity: u32, ev: Ev) {
        let now = self.queue.now();
        match ev {
            Ev::Resume => {
                let c = &mut self.cls[entity as usize];
                c.phase = Phase::Emitting;
                c.ready_at = now;
            }
            Ev::Finish => self.cls[entity as usize].phase = Phase::Done,
            Ev::GatherDone(id) => {
                let k = self.chunks[id].class;
                self.cls[k].gathering = false;
                self.gathered[id] = true;
                self.release_client(id);
            }
            Ev::WriteDone(p) => {
                let pool = &mut self.pools[p];
                let id = pool.write_queue.pop_front().expect("write without queued chunk");
                let bytes = self.chunks[id].bytes;
                pool.writing = false;
                pool.staged -= bytes;
                self.bytes_staged -= bytes;
                self.bytes_written += bytes;
                self.active_writes -= 1;
                if self.active_writes == 0 {
                    self.busy += now - self.busy_since;
                }
            }
        }
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot {
            time: self.queue.now(),
            emitted: self.bytes_emitted,
            in_client_buffers: self.bytes_in_clients,
            in_server_staging: self.bytes_staged,
            written: self.bytes_written,
        }
    }

    fn run(mut self, mut trace: Option<&mut Vec<Snapshot>>) -> IoMetrics {
        for k in 0..self.cls.len() {
            self.schedule_compute(k, 0.0);
        }
        while let Some(next) = self.queue.pop() {
            self.events += 1;
            self.last_event = next.time;
            self.handle(next.entity, next.event);
            self.settle();
            if let Some(t) = trace.as_deref_mut() {
                t.push(self.snapshot());
            }
        }
        debug_assert!(self.cls.iter().all(|c| c.phase == Phase::Done));
        debug_assert_eq!(self.bytes_in_clients + self.bytes_staged, 0);

        let clients = f64::from(self.scenario.clients);
        let wait = self
            .cls
            .iter()
            .zip(&self.classes)
            .map(|(c, class)| c.wait * class.members as f64)
            .sum::<f64>()
            / clients;
        let compute = self.scenario.pure_compute_s();
        let active = compute + wait;
        let pct = if active > 0.0 { (wait / active * 100.0).clamp(0.0, 100.0) } else { 0.0 };
        let rate = if self.busy > 0.0 { self.bytes_written as f64 / self.busy / MIB } else { 0.0 };
        IoMetrics {
            wall_clock_s: self.last_event,
            compute_s: compute,
            client_wait_s: wait,
            client_wait_pct: pct,
            server_write_rate_mib_s: rate,
            server_busy_s: self.busy,
            bytes_written: self.bytes_written,
            chunks: self.chunks.len() as u64,
            events: self.events,
        }
    }
}

fn nominal_rates(s: &IoScenario) -> Vec<f64> {
    vec![s.pool_write_rate(); s.pools as usize]
}

/// Rates perturbed by `rate_jitter` using a seeded stream.
fn jittered_rates(s: &IoScenario, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = s.pool_write_rate();
    (0..s.pools)
        .map(|_| {
            let u: f64 = rng.gen_range(-1.0..=1.0);
            base * (1.0 + s.rate_jitter * u)
        })
        .collect()
}

pub fn simulate_io(scenario: &IoScenario) -> Result<IoMetrics, IoSimError> {
    scenario.validate()?;
    Ok(Sim::new(scenario, &nominal_rates(scenario)).run(None))
}

/// As [`simulate_io`], also returning byte accounting after every event.
pub fn simulate_io_traced(scenario: &IoScenario) -> Result<IoTrace, IoSimError> {
    scenario.validate()?;
    let mut snapshots = Vec::new();
    let metrics = Sim::new(scenario, &nominal_rates(scenario)).run(Some(&mut snapshots));
    Ok(IoTrace { metrics, snapshots })
}

/// `repeats` runs; run `i` perturbs pool write rates with seed `seed + i`.
pub fn simulate_io_repeated(
    scenario: &IoScenario,
    repeats: u32,
    seed: u64,
) -> Result<Vec<IoMetrics>, IoSimError> {
    if repeats == 0 {
        return Err(IoSimError::ZeroRepeats);
    }
    scenario.validate()?;
    Ok((0..repeats)
        .into_par_iter()
        .map(|i| {
            let rates = jittered_rates(scenario, seed.wrapping_add(u64::from(i)));
            Sim::new(scenario, &rates).run(None)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    /// Sample standard deviation; zero for fewer than two values.
    pub fn of(values: &[f64]) -> MeanSd {
        let n = values.len();
        if n == 0 {
            return MeanSd { mean: 0.0, sd: 0.0 };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n < 2 {
            0.0
        } else {
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        };
        MeanSd { mean, sd }
    }
}

impl std::fmt::Display for MeanSd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let p = f.precision().unwrap_or(2);
        write!(f, "{:.p$} ± {:.p$}", self.mean, self.sd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IoSummary {
    pub runs: usize,
    pub wall_clock_s: MeanSd,
    pub client_wait_pct: MeanSd,
    pub server_write_rate_mib_s: MeanSd,
}

pub fn summarize(runs: &[IoMetrics]) -> IoSummary {
    let col = |f: fn(&IoMetrics) -> f64| MeanSd::of(&runs.iter().map(f).collect::<Vec<_>>());
    IoSummary {
        runs: runs.len(),
        wall_clock_s: col(|m| m.wall_clock_s),
        client_wait_pct: col(|m| m.client_wait_pct),
        server_write_rate_mib_s: col(|m| m.server_write_rate_mib_s),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: u64,
    pub metrics: IoMetrics,
}

fn check_ascending(values: &[u64]) -> Result<(), IoSimError> {
    let ok = !values.is_empty()
        && values[0] > 0
        && values.windows(2).all(|w| w[0].cmp(&w[1]) == Ordering::Less);
    if ok {
        Ok(())
    } else {
        Err(IoSimError::BadSweep)
    }
}

fn sweep(
    values: &[u64],
    make: impl Fn(u64) -> IoScenario + Sync,
) -> Result<Vec<SweepRow>, IoSimError> {
    check_ascending(values)?;
    values
        .par_iter()
        .map(|&v| simulate_io(&make(v)).map(|metrics| SweepRow { value: v, metrics }))
        .collect()
}

/// One run per per-client buffer size.
pub fn buffer_sweep(scenario: &IoScenario, sizes: &[u64]) -> Result<Vec<SweepRow>, IoSimError> {
    sweep(sizes, |b| IoScenario { buffer_bytes: b, ..scenario.clone() })
}

/// One run per writing-server count (level 2 when present, else level 1).
pub fn server_sweep(scenario: &IoScenario, counts: &[u64]) -> Result<Vec<SweepRow>, IoSimError> {
    if counts.iter().any(|&c| c > u64::from(u32::MAX)) {
        return Err(IoSimError::BadSweep);
    }
    sweep(counts, |n| {
        let mut s = scenario.clone();
        if s.servers_level2 > 0 {
            s.servers_level2 = n as u32;
        } else {
            s.servers_level1 = n as u32;
        }
        s
    })
}

/// One run per pool count with the server total held fixed.
pub fn pool_sweep(scenario: &IoScenario, pool_counts: &[u64]) -> Result<Vec<SweepRow>, IoSimError> {
    if pool_counts.iter().any(|&c| c > u64::from(u32::MAX)) {
        return Err(IoSimError::BadSweep);
    }
    sweep(pool_counts, |p| IoScenario { pools: p as u32, ..scenario.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StripingComparison {
    pub off: IoMetrics,
    pub on: IoMetrics,
    pub write_rate_ratio: f64,
    pub wall_clock_ratio: f64,
}

/// The scenario as configured ("on") against the same scenario with
/// striping_factor = 1 ("off").
pub fn striping_compare(scenario: &IoScenario) -> Result<StripingComparison, IoSimError> {
    let off_scenario = IoScenario { striping_factor: 1.0, ..scenario.clone() };
    let (off, on) = rayon::join(|| simulate_io(&off_scenario), || simulate_io(scenario));
    let (off, on) = (off?, on?);
    Ok(StripingComparison {
        off,
        on,
        write_rate_ratio: crate::dyncore::safe_ratio(
            on.server_write_rate_mib_s,
            off.server_write_rate_mib_s,
        ),
        wall_clock_ratio: crate::dyncore::safe_ratio(off.wall_clock_s, on.wall_clock_s),
    })
}
