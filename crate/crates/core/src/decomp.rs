//! Domain decomposition of the horizontal mesh across MPI ranks.
//!
//! Rank counts that are a multiple of six get a per-panel 2D block tiling:
//! each panel is cut into `p × q` rectangular blocks (`p` along `i`, `q`
//! along `j`), choosing the squarest factorisation of `ranks / 6` and
//! preferring the larger `p` on a tie. When `p` does not divide `N`, the last
//! `N mod p` blocks along that axis take one extra row each. Rank counts that
//! divide six (1, 2, 3) get whole panels.
//!
//! Ranks are numbered `panel * p * q + bi * q + bj`.

use std::collections::{BTreeMap, HashSet};
use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{CubedSphereMesh, PANELS};

/// Three exchanged fields of 120 levels in double precision.
pub const DEFAULT_BYTES_PER_CELL: u64 = 120 * 8 * 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecompError {
    #[error("rank count must be at least 1")]
    ZeroRanks,
    #[error("{ranks} ranks exceed the {cells} horizontal cells of the mesh")]
    TooManyRanks { ranks: u64, cells: u64 },
    #[error("{0} ranks is neither a multiple nor a divisor of 6")]
    UnsupportedRankCount(u32),
    #[error("no p×q block tiling of {per_panel} blocks per panel fits a {panel_size}×{panel_size} panel")]
    NoBlockTiling { per_panel: u32, panel_size: u32 },
    #[error("halo depth must be at least 1")]
    ZeroDepth,
    #[error("halo depth {depth} exceeds the panel size {panel_size}")]
    DepthExceedsPanel { depth: u32, panel_size: u32 },
    #[error("halos have not been computed")]
    HalosNotComputed,
    #[error("decomposition is not in redundant-compute mode")]
    NotRedundant,
    #[error("decomposition belongs to C{decomp}, not C{mesh}")]
    MeshMismatch { decomp: u32, mesh: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecompositionMode {
    #[default]
    ExchangeHalos,
    RedundantCompute,
}

/// Half-open rectangle of cells on one panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Block {
    pub panel: u8,
    pub i0: u32,
    pub i1: u32,
    pub j0: u32,
    pub j1: u32,
}

impl Block {
    pub fn cell_count(&self) -> u64 {
        u64::from(self.i1 - self.i0) * u64::from(self.j1 - self.j0)
    }

    pub fn width(&self) -> u32 {
        self.i1 - self.i0
    }

    pub fn height(&self) -> u32 {
        self.j1 - self.j0
    }

    fn perimeter_indices(&self, mesh: &CubedSphereMesh) -> Vec<u32> {
        let n = mesh.panel_size();
        let base = u32::from(self.panel) * mesh.cells_per_panel();
        let idx = |i: u32, j: u32| base + j * n + i;
        let mut out = Vec::with_capacity(2 * (self.width() + self.height()) as usize);
        for i in self.i0..self.i1 {
            out.push(idx(i, self.j0));
            if self.j1 - 1 != self.j0 {
                out.push(idx(i, self.j1 - 1));
            }
        }
        for j in self.j0 + 1..self.j1.saturating_sub(1) {
            out.push(idx(self.i0, j));
            if self.i1 - 1 != self.i0 {
                out.push(idx(self.i1 - 1, j));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tiling {
    WholePanels {
        panels_per_rank: u32,
    },
    Blocks {
        p: u32,
        q: u32,
        i_edges: Vec<u32>,
        j_edges: Vec<u32>,
        i_block: Vec<u32>,
        j_block: Vec<u32>,
    },
}

/// Cell boundaries of `parts` blocks over `n` cells; remainder rows go to the
/// last blocks.
fn block_edges(n: u32, parts: u32) -> Vec<u32> {
    let base = n / parts;
    let rem = n % parts;
    let mut edges = Vec::with_capacity(parts as usize + 1);
    let mut at = 0;
    edges.push(0);
    for b in 0..parts {
        at += base + u32::from(b >= parts - rem);
        edges.push(at);
    }
    edges
}

fn block_lookup(edges: &[u32]) -> Vec<u32> {
    let mut lookup = Vec::with_capacity(*edges.last().unwrap() as usize);
    for (b, w) in edges.windows(2).enumerate() {
        lookup.extend(std::iter::repeat_n(b as u32, (w[1] - w[0]) as usize));
    }
    lookup
}

/// Squarest `p × q = k` with `p, q <= n`; ties go to the larger `p`.
fn squarest_factors(k: u32, n: u32) -> Option<(u32, u32)> {
    let mut best: Option<(u32, u32)> = None;
    for p in 1..=k.min(n) {
        if !k.is_multiple_of(p) {
            continue;
        }
        let q = k / p;
        if q > n {
            continue;
        }
        let aspect = |(a, b): (u32, u32)| u64::from(a.max(b)) * 1_000_000 / u64::from(a.min(b));
        best = match best {
            Some(cur) if aspect(cur) < aspect((p, q)) => Some(cur),
            // Iterating p upward, an equal aspect means this p is larger.
            _ => Some((p, q)),
        };
    }
    best
}

/// Assignment of cells to ranks plus (optionally) per-rank halos.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decomposition {
    mesh: CubedSphereMesh,
    ranks: u32,
    tiling: Tiling,
    mode: DecompositionMode,
    bytes_per_cell: u64,
    halo_depth: u32,
    redundant_depth: Option<u32>,
    /// rank → ring (depth 1..=halo_depth) → sorted linear cell indices.
    halos: Vec<Vec<Vec<u32>>>,
}

pub fn partition(mesh: &CubedSphereMesh, ranks: u32) -> Result<Decomposition, DecompError> {
    Decomposition::new(mesh, ranks)
}

impl Decomposition {
    pub fn new(mesh: &CubedSphereMesh, ranks: u32) -> Result<Self, DecompError> {
        if ranks == 0 {
            return Err(DecompError::ZeroRanks);
        }
        let cells = mesh.total_horizontal_cells();
        if u64::from(ranks) > cells {
            return Err(DecompError::TooManyRanks { ranks: u64::from(ranks), cells });
        }
        let n = mesh.panel_size();
        let tiling = if PANELS.is_multiple_of(ranks) {
            Tiling::WholePanels { panels_per_rank: PANELS / ranks }
        } else if ranks.is_multiple_of(PANELS) {
            let per_panel = ranks / PANELS;
            let (p, q) = squarest_factors(per_panel, n)
                .ok_or(DecompError::NoBlockTiling { per_panel, panel_size: n })?;
            let i_edges = block_edges(n, p);
            let j_edges = block_edges(n, q);
            Tiling::Blocks {
                p,
                q,
                i_block: block_lookup(&i_edges),
                j_block: block_lookup(&j_edges),
                i_edges,
                j_edges,
            }
        } else {
            return Err(DecompError::UnsupportedRankCount(ranks));
        };
        Ok(Decomposition {
            mesh: *mesh,
            ranks,
            tiling,
            mode: DecompositionMode::ExchangeHalos,
            bytes_per_cell: DEFAULT_BYTES_PER_CELL,
            halo_depth: 0,
            redundant_depth: None,
            halos: Vec::new(),
        })
    }

    pub fn with_mode(mut self, mode: DecompositionMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_bytes_per_cell(mut self, bytes: u64) -> Self {
        self.bytes_per_cell = bytes;
        self
    }

    /// Depth of halo recomputed locally in redundant mode; defaults to the
    /// halo depth.
    pub fn with_redundant_depth(mut self, depth: u32) -> Self {
        self.redundant_depth = Some(depth);
        self
    }

    pub fn mesh(&self) -> &CubedSphereMesh {
        &self.mesh
    }

    pub fn ranks(&self) -> u32 {
        self.ranks
    }

    pub fn mode(&self) -> DecompositionMode {
        self.mode
    }

    pub fn bytes_per_cell(&self) -> u64 {
        self.bytes_per_cell
    }

    pub fn halo_depth(&self) -> u32 {
        self.halo_depth
    }

    pub fn redundant_depth(&self) -> u32 {
        self.redundant_depth.unwrap_or(self.halo_depth).min(self.halo_depth)
    }

    /// Blocks per panel as `(p, q)`, or `None` for whole-panel tilings.
    pub fn block_grid(&self) -> Option<(u32, u32)> {
        match self.tiling {
            Tiling::Blocks { p, q, .. } => Some((p, q)),
            Tiling::WholePanels { .. } => None,
        }
    }

    pub fn owner_of_index(&self, index: u32) -> u32 {
        let n = self.mesh.panel_size();
        let per_panel = self.mesh.cells_per_panel();
        let panel = index / per_panel;
        match &self.tiling {
            Tiling::WholePanels { panels_per_rank } => panel / panels_per_rank,
            Tiling::Blocks { p, q, i_block, j_block, .. } => {
                let rem = index % per_panel;
                let (i, j) = (rem % n, rem / n);
                panel * p * q + i_block[i as usize] * q + j_block[j as usize]
            }
        }
    }

    pub fn owned_blocks(&self, rank: u32) -> Vec<Block> {
        let n = self.mesh.panel_size();
        match &self.tiling {
            Tiling::WholePanels { panels_per_rank } => (rank * panels_per_rank
                ..(rank + 1) * panels_per_rank)
                .map(|panel| Block { panel: panel as u8, i0: 0, i1: n, j0: 0, j1: n })
                .collect(),
            Tiling::Blocks { p, q, i_edges, j_edges, .. } => {
                let per_panel = p * q;
                let panel = rank / per_panel;
                let bi = (rank % per_panel) / q;
                let bj = rank % q;
                vec![Block {
                    panel: panel as u8,
                    i0: i_edges[bi as usize],
                    i1: i_edges[bi as usize + 1],
                    j0: j_edges[bj as usize],
                    j1: j_edges[bj as usize + 1],
                }]
            }
        }
    }

    pub fn owned_count(&self, rank: u32) -> u64 {
        self.owned_blocks(rank).iter().map(Block::cell_count).sum()
    }

    /// Linear indices of the cells owned by `rank`, ascending.
    pub fn owned_indices(&self, rank: u32) -> Vec<u32> {
        let n = self.mesh.panel_size();
        let per_panel = self.mesh.cells_per_panel();
        let mut out = Vec::new();
        for b in self.owned_blocks(rank) {
            let base = u32::from(b.panel) * per_panel;
            for j in b.j0..b.j1 {
                out.extend((b.i0..b.i1).map(|i| base + j * n + i));
            }
        }
        out.sort_unstable();
        out
    }

    /// Largest minus smallest owned cell count.
    pub fn imbalance(&self) -> u64 {
        let counts = (0..self.ranks).map(|r| self.owned_count(r));
        let (lo, hi) = counts.fold((u64::MAX, 0), |(lo, hi), c| (lo.min(c), hi.max(c)));
        hi - lo
    }

    /// Worst-case imbalance the tiling can produce: one extra row and column.
    pub fn imbalance_bound(&self) -> u64 {
        match &self.tiling {
            Tiling::WholePanels { .. } => 0,
            Tiling::Blocks { p, q, .. } => {
                let n = self.mesh.panel_size();
                if n.is_multiple_of(*p) && n.is_multiple_of(*q) {
                    0
                } else {
                    u64::from(n / p) + u64::from(n / q) + 1
                }
            }
        }
    }

    /// Halo rings of `rank`; index 0 is depth 1.
    pub fn halo_rings(&self, rank: u32) -> &[Vec<u32>] {
        self.halos.get(rank as usize).map_or(&[], Vec::as_slice)
    }

    pub fn halo_cells(&self, rank: u32) -> impl Iterator<Item = u32> + '_ {
        self.halo_rings(rank).iter().flatten().copied()
    }

    pub fn halo_size(&self, rank: u32) -> u64 {
        self.halo_rings(rank).iter().map(|r| r.len() as u64).sum()
    }

    fn halo_size_in(&self, rank: u32, depths: &RangeInclusive<u32>) -> u64 {
        self.halo_rings(rank)
            .iter()
            .enumerate()
            .filter(|(d, _)| depths.contains(&(*d as u32 + 1)))
            .map(|(_, r)| r.len() as u64)
            .sum()
    }

    fn rank_halo(&self, rank: u32, depth: u32) -> Vec<Vec<u32>> {
        let mesh = &self.mesh;
        let mut frontier: Vec<u32> =
            self.owned_blocks(rank).iter().flat_map(|b| b.perimeter_indices(mesh)).collect();
        let mut seen: HashSet<u32> = HashSet::new();
        let mut rings = Vec::with_capacity(depth as usize);
        for _ in 0..depth {
            let mut ring = Vec::new();
            for &c in &frontier {
                for nb in mesh.neighbor_indices(c) {
                    if self.owner_of_index(nb) != rank && seen.insert(nb) {
                        ring.push(nb);
                    }
                }
            }
            ring.sort_unstable();
            frontier.clone_from(&ring);
            rings.push(ring);
        }
        rings
    }

    /// Fill the halos of every rank to `depth` rings (edge-neighbour stencil).
    pub fn compute_halos(mut self, depth: u32) -> Result<Self, DecompError> {
        if depth == 0 {
            return Err(DecompError::ZeroDepth);
        }
        let panel_size = self.mesh.panel_size();
        if depth > panel_size {
            return Err(DecompError::DepthExceedsPanel { depth, panel_size });
        }
        let halos = (0..self.ranks).into_par_iter().map(|r| self.rank_halo(r, depth)).collect();
        self.halos = halos;
        self.halo_depth = depth;
        Ok(self)
    }

    fn pattern_for(&self, depths: RangeInclusive<u32>) -> ExchangePattern {
        let mut counts: BTreeMap<(u32, u32), u64> = BTreeMap::new();
        for dst in 0..self.ranks {
            for (d, ring) in self.halo_rings(dst).iter().enumerate() {
                if !depths.contains(&(d as u32 + 1)) {
                    continue;
                }
                for &c in ring {
                    *counts.entry((self.owner_of_index(c), dst)).or_default() += 1;
                }
            }
        }
        ExchangePattern {
            ranks: self.ranks,
            bytes_per_cell: self.bytes_per_cell,
            messages: counts
                .into_iter()
                .map(|((src, dst), cells)| Message {
                    src,
                    dst,
                    cells,
                    bytes: cells * self.bytes_per_cell,
                })
                .collect(),
        }
    }

    /// One message per (owner → halo holder) pair for a single full-depth
    /// halo exchange.
    pub fn exchange_pattern(&self) -> Result<ExchangePattern, DecompError> {
        if self.halo_depth == 0 {
            return Err(DecompError::HalosNotComputed);
        }
        Ok(self.pattern_for(1..=self.halo_depth))
    }

    /// Extra cells each rank recomputes, and the exchange that survives once
    /// the redundantly computed rings no longer need communicating.
    pub fn redundant_compute_extent(&self) -> Result<RedundantExtent, DecompError> {
        if self.mode != DecompositionMode::RedundantCompute {
            return Err(DecompError::NotRedundant);
        }
        if self.halo_depth == 0 {
            return Err(DecompError::HalosNotComputed);
        }
        let depth = self.redundant_depth();
        let covered = 1..=depth;
        Ok(RedundantExtent {
            depth,
            extra_cells: (0..self.ranks).map(|r| self.halo_size_in(r, &covered)).collect(),
            remaining: self.pattern_for(depth + 1..=self.halo_depth),
        })
    }

    /// Per-rank summary rows (rank, owned, halo, neighbours, bytes out).
    pub fn summary(&self, pattern: &ExchangePattern) -> Vec<RankSummary> {
        let mut neighbors = vec![0u32; self.ranks as usize];
        let mut bytes_out = vec![0u64; self.ranks as usize];
        for m in &pattern.messages {
            neighbors[m.src as usize] += 1;
            bytes_out[m.src as usize] += m.bytes;
        }
        (0..self.ranks)
            .map(|r| RankSummary {
                rank: r,
                owned: self.owned_count(r),
                halo: self.halo_size(r),
                neighbors: neighbors[r as usize],
                bytes_out: bytes_out[r as usize],
            })
            .collect()
    }
}

pub fn compute_halos(
    mesh: &CubedSphereMesh,
    decomposition: Decomposition,
    depth: u32,
) -> Result<Decomposition, DecompError> {
    if decomposition.mesh != *mesh {
        return Err(DecompError::MeshMismatch {
            decomp: decomposition.mesh.panel_size(),
            mesh: mesh.panel_size(),
        });
    }
    decomposition.compute_halos(depth)
}

pub fn exchange_pattern(decomposition: &Decomposition) -> Result<ExchangePattern, DecompError> {
    decomposition.exchange_pattern()
}

pub fn redundant_compute_extent(
    decomposition: &Decomposition,
) -> Result<RedundantExtent, DecompError> {
    decomposition.redundant_compute_extent()
}

/// Horizontal cells per core.
pub fn local_area(mesh: &CubedSphereMesh, total_cores: u64) -> f64 {
    assert!(total_cores > 0, "local area needs at least one core");
    mesh.total_horizontal_cells() as f64 / total_cores as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Message {
    pub src: u32,
    pub dst: u32,
    pub cells: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExchangePattern {
    pub ranks: u32,
    pub bytes_per_cell: u64,
    /// Sorted by `(src, dst)`.
    pub messages: Vec<Message>,
}

impl ExchangePattern {
    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn message_count(&self) -> usize {
        self.messages.len()
    }

    pub fn total_bytes(&self) -> u64 {
        self.messages.iter().map(|m| m.bytes).sum()
    }

    pub fn bytes_into(&self) -> Vec<u64> {
        let mut v = vec![0; self.ranks as usize];
        for m in &self.messages {
            v[m.dst as usize] += m.bytes;
        }
        v
    }

    pub fn bytes_out_of(&self) -> Vec<u64> {
        let mut v = vec![0; self.ranks as usize];
        for m in &self.messages {
            v[m.src as usize] += m.bytes;
        }
        v
    }

    pub fn cells_into(&self) -> Vec<u64> {
        let mut v = vec![0; self.ranks as usize];
        for m in &self.messages {
            v[m.dst as usize] += m.cells;
        }
        v
    }

    /// Ranks sending or receiving at least one message.
    pub fn participating_ranks(&self) -> usize {
        let mut seen = vec![false; self.ranks as usize];
        for m in &self.messages {
            seen[m.src as usize] = true;
            seen[m.dst as usize] = true;
        }
        seen.into_iter().filter(|&s| s).count()
    }

    pub fn max_bytes_into(&self) -> u64 {
        self.bytes_into().into_iter().max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RedundantExtent {
    pub depth: u32,
    pub extra_cells: Vec<u64>,
    pub remaining: ExchangePattern,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RankSummary {
    pub rank: u32,
    pub owned: u64,
    pub halo: u64,
    pub neighbors: u32,
    pub bytes_out: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_mesh;

    #[test]
    fn factorisation_prefers_square_then_larger_p() {
        assert_eq!(squarest_factors(4, 8), Some((2, 2)));
        assert_eq!(squarest_factors(512, 512), Some((32, 16)));
        assert_eq!(squarest_factors(128, 512), Some((16, 8)));
        assert_eq!(squarest_factors(7, 3), None);
        assert_eq!(squarest_factors(6, 3), Some((3, 2)));
    }

    #[test]
    fn remainder_rows_go_to_last_blocks() {
        assert_eq!(block_edges(10, 4), vec![0, 2, 4, 7, 10]);
        assert_eq!(block_edges(8, 4), vec![0, 2, 4, 6, 8]);
    }

    #[test]
    fn single_rank_owns_everything() {
        let mesh = build_mesh(4, 1).unwrap();
        let d = partition(&mesh, 1).unwrap().compute_halos(2).unwrap();
        assert_eq!(d.owned_count(0), 96);
        assert_eq!(d.halo_size(0), 0);
        assert!(d.exchange_pattern().unwrap().is_empty());
    }

    #[test]
    fn rejects_bad_rank_counts() {
        let mesh = build_mesh(2, 1).unwrap();
        assert_eq!(partition(&mesh, 0).unwrap_err(), DecompError::ZeroRanks);
        assert!(matches!(partition(&mesh, 25), Err(DecompError::TooManyRanks { .. })));
        assert_eq!(partition(&mesh, 5).unwrap_err(), DecompError::UnsupportedRankCount(5));
        // 6 * 7 ranks: 7 blocks per panel cannot fit a 2×2 panel.
        let mesh = build_mesh(3, 1).unwrap();
        assert!(matches!(partition(&mesh, 42), Err(DecompError::NoBlockTiling { .. })));
    }

    #[test]
    fn halo_depth_is_bounded() {
        let mesh = build_mesh(3, 1).unwrap();
        let d = partition(&mesh, 6).unwrap();
        assert_eq!(d.clone().compute_halos(0).unwrap_err(), DecompError::ZeroDepth);
        assert!(matches!(
            d.clone().compute_halos(4),
            Err(DecompError::DepthExceedsPanel { depth: 4, panel_size: 3 })
        ));
        assert!(d.compute_halos(3).is_ok());
    }

    #[test]
    fn pattern_requires_halos() {
        let mesh = build_mesh(4, 1).unwrap();
        let d = partition(&mesh, 6).unwrap();
        assert_eq!(d.exchange_pattern().unwrap_err(), DecompError::HalosNotComputed);
    }

    #[test]
    fn redundant_extent_requires_mode() {
        let mesh = build_mesh(4, 1).unwrap();
        let d = partition(&mesh, 6).unwrap().compute_halos(1).unwrap();
        assert_eq!(d.redundant_compute_extent().unwrap_err(), DecompError::NotRedundant);
        let d = d.with_mode(DecompositionMode::RedundantCompute);
        let ext = d.redundant_compute_extent().unwrap();
        assert!(ext.extra_cells.iter().all(|&c| c == 16));
        assert!(ext.remaining.is_empty());
    }

    #[test]
    fn partial_redundancy_keeps_outer_rings() {
        let mesh = build_mesh(8, 1).unwrap();
        let d = partition(&mesh, 6)
            .unwrap()
            .with_mode(DecompositionMode::RedundantCompute)
            .with_redundant_depth(1)
            .compute_halos(2)
            .unwrap();
        let ext = d.redundant_compute_extent().unwrap();
        assert!(ext.extra_cells.iter().all(|&c| c == 32));
        let ring2: u64 = (0..6).map(|r| d.halo_rings(r)[1].len() as u64).sum();
        assert_eq!(ext.remaining.cells_into().iter().sum::<u64>(), ring2);
    }

    #[test]
    fn compute_halos_checks_mesh() {
        let a = build_mesh(4, 1).unwrap();
        let b = build_mesh(5, 1).unwrap();
        let d = partition(&a, 6).unwrap();
        assert!(matches!(compute_halos(&b, d, 1), Err(DecompError::MeshMismatch { .. })));
    }

    #[test]
    fn local_area_examples() {
        assert_eq!(local_area(&build_mesh(512, 1).unwrap(), 48 * 128), 256.0);
        assert_eq!(local_area(&build_mesh(1024, 1).unwrap(), 98_304), 64.0);
        assert_eq!(local_area(&build_mesh(1, 1).unwrap(), 6), 1.0);
    }

    #[test]
    fn summary_rows_match_pattern() {
        let mesh = build_mesh(8, 1).unwrap();
        let d = partition(&mesh, 6).unwrap().compute_halos(1).unwrap();
        let pattern = d.exchange_pattern().unwrap();
        let rows = d.summary(&pattern);
        assert_eq!(rows.len(), 6);
        for row in rows {
            assert_eq!((row.owned, row.halo, row.neighbors), (64, 32, 4));
            assert_eq!(row.bytes_out, 32 * DEFAULT_BYTES_PER_CELL);
        }
    }
}
