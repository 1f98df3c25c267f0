//! Cubed-sphere horizontal mesh.
//!
//! The horizontal mesh is six `N×N` panels glued into a cube. It is treated as
//! an unstructured graph: every cell has exactly four edge neighbours, some of
//! which live on another panel. The vertical dimension is structured and only
//! its level count matters to the cost models, so it is stored as a scalar.
//!
//! # Panel layout
//!
//! Panels are laid out on the cube `[-N, N]^3` with an equatorial ring of four
//! panels and two polar panels. Each panel has an outward normal and a local
//! `(u, v)` frame; cell `(i, j)` has its centre at
//! `normal * N + (2i + 1 - N) * u + (2j + 1 - N) * v`.
//!
//! | panel | normal | u    | v    |
//! |-------|--------|------|------|
//! | 0     | +x     | +y   | +z   |
//! | 1     | +y     | -x   | +z   |
//! | 2     | -x     | -y   | +z   |
//! | 3     | -y     | +x   | +z   |
//! | 4     | +z     | +y   | -x   |
//! | 5     | -z     | +y   | +x   |
//!
//! Along the equator `i` runs continuously from one panel to the next
//! (0 → 1 → 2 → 3 → 0) with no index reversal. Across every other edge the
//! neighbour is found by folding the step over the cube edge: the coordinate
//! along the old normal drops by one cell and the coordinate along the step
//! direction becomes the new panel's normal coordinate. Whether the index
//! along the shared edge is reversed falls out of the two frames in the
//! table, so the rules for all 24 directed edges are fixed by it.
//!
//! # Linearisation
//!
//! `index = panel * N^2 + j * N + i`, a bijection onto `0..6N^2`.

use std::fmt;

use thiserror::Error;

/// Largest panel size whose cell indices still fit in a `u32`.
pub const MAX_PANEL_SIZE: u32 = 26_754;

/// Number of cube faces.
pub const PANELS: u32 = 6;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MeshError {
    #[error("panel size must be at least 1")]
    ZeroPanelSize,
    #[error("level count must be at least 1")]
    ZeroLevels,
    #[error("panel size {0} exceeds the supported maximum of {MAX_PANEL_SIZE}")]
    TooLarge(u32),
}

/// A horizontal cell on the cubed sphere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellId {
    pub panel: u8,
    pub i: u32,
    pub j: u32,
}

impl CellId {
    pub const fn new(panel: u8, i: u32, j: u32) -> Self {
        CellId { panel, i, j }
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}({},{})", self.panel, self.i, self.j)
    }
}

/// Step directions in the order neighbours are reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    West,
    East,
    South,
    North,
}

impl Direction {
    pub const ALL: [Direction; 4] =
        [Direction::West, Direction::East, Direction::South, Direction::North];
}

/// Signed unit axis: `(axis index, sign)`.
type Axis = (usize, i64);

#[derive(Debug, Clone, Copy)]
struct Frame {
    normal: Axis,
    u: Axis,
    v: Axis,
}

const FRAMES: [Frame; 6] = [
    Frame { normal: (0, 1), u: (1, 1), v: (2, 1) },
    Frame { normal: (1, 1), u: (0, -1), v: (2, 1) },
    Frame { normal: (0, -1), u: (1, -1), v: (2, 1) },
    Frame { normal: (1, -1), u: (0, 1), v: (2, 1) },
    Frame { normal: (2, 1), u: (1, 1), v: (0, -1) },
    Frame { normal: (2, -1), u: (1, 1), v: (0, 1) },
];

fn panel_with_normal(normal: Axis) -> usize {
    FRAMES
        .iter()
        .position(|f| f.normal == normal)
        .expect("every signed axis is the normal of exactly one panel")
}

/// The cubed-sphere mesh: `6·N²` horizontal cells and `L` vertical levels.
///
/// Adjacency is derived on demand from the panel frames rather than stored,
/// so a C1024 mesh costs a few bytes. Immutable and `Copy`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CubedSphereMesh {
    panel_size: u32,
    levels: u32,
}

impl CubedSphereMesh {
    pub fn new(panel_size: u32, levels: u32) -> Result<Self, MeshError> {
        if panel_size == 0 {
            return Err(MeshError::ZeroPanelSize);
        }
        if levels == 0 {
            return Err(MeshError::ZeroLevels);
        }
        if panel_size > MAX_PANEL_SIZE {
            return Err(MeshError::TooLarge(panel_size));
        }
        Ok(CubedSphereMesh { panel_size, levels })
    }

    /// The "C-number" N.
    pub fn panel_size(&self) -> u32 {
        self.panel_size
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn total_horizontal_cells(&self) -> u64 {
        let n = u64::from(self.panel_size);
        6 * n * n
    }

    /// Horizontal cells times vertical levels.
    pub fn total_cell_levels(&self) -> u64 {
        self.total_horizontal_cells() * u64::from(self.levels)
    }

    pub fn cells_per_panel(&self) -> u32 {
        self.panel_size * self.panel_size
    }

    pub fn contains(&self, cell: CellId) -> bool {
        u32::from(cell.panel) < PANELS && cell.i < self.panel_size && cell.j < self.panel_size
    }

    pub fn index(&self, cell: CellId) -> u32 {
        debug_assert!(self.contains(cell), "{cell} outside C{}", self.panel_size);
        u32::from(cell.panel) * self.cells_per_panel() + cell.j * self.panel_size + cell.i
    }

    pub fn cell(&self, index: u32) -> CellId {
        let per_panel = self.cells_per_panel();
        let panel = index / per_panel;
        debug_assert!(panel < PANELS, "index {index} outside C{}", self.panel_size);
        let rem = index % per_panel;
        CellId::new(panel as u8, rem % self.panel_size, rem / self.panel_size)
    }

    pub fn cells(&self) -> impl Iterator<Item = CellId> + '_ {
        (0..self.total_horizontal_cells() as u32).map(move |idx| self.cell(idx))
    }

    /// Cell centre on the cube `[-N, N]^3`, in units of half a cell width.
    pub fn centre(&self, cell: CellId) -> [i64; 3] {
        let n = i64::from(self.panel_size);
        let frame = FRAMES[usize::from(cell.panel)];
        let mut p = [0i64; 3];
        p[frame.normal.0] = frame.normal.1 * n;
        p[frame.u.0] += frame.u.1 * (2 * i64::from(cell.i) + 1 - n);
        p[frame.v.0] += frame.v.1 * (2 * i64::from(cell.j) + 1 - n);
        p
    }

    fn cell_at(&self, panel: usize, p: [i64; 3]) -> CellId {
        let n = i64::from(self.panel_size);
        let frame = FRAMES[panel];
        let i = (frame.u.1 * p[frame.u.0] + n - 1) / 2;
        let j = (frame.v.1 * p[frame.v.0] + n - 1) / 2;
        CellId::new(panel as u8, i as u32, j as u32)
    }

    pub fn neighbor(&self, cell: CellId, dir: Direction) -> CellId {
        let n = self.panel_size;
        match dir {
            Direction::West if cell.i > 0 => return CellId { i: cell.i - 1, ..cell },
            Direction::East if cell.i + 1 < n => return CellId { i: cell.i + 1, ..cell },
            Direction::South if cell.j > 0 => return CellId { j: cell.j - 1, ..cell },
            Direction::North if cell.j + 1 < n => return CellId { j: cell.j + 1, ..cell },
            _ => {}
        }
        // Step leaves the panel: fold over the cube edge.
        let frame = FRAMES[usize::from(cell.panel)];
        let step: Axis = match dir {
            Direction::West => (frame.u.0, -frame.u.1),
            Direction::East => frame.u,
            Direction::South => (frame.v.0, -frame.v.1),
            Direction::North => frame.v,
        };
        let n = i64::from(n);
        let mut p = self.centre(cell);
        p[step.0] = step.1 * n;
        p[frame.normal.0] = frame.normal.1 * (n - 1);
        self.cell_at(panel_with_normal(step), p)
    }

    /// West, east, south and north neighbours, in that order.
    pub fn neighbors(&self, cell: CellId) -> [CellId; 4] {
        Direction::ALL.map(|d| self.neighbor(cell, d))
    }

    pub fn neighbor_indices(&self, index: u32) -> [u32; 4] {
        let cell = self.cell(index);
        self.neighbors(cell).map(|c| self.index(c))
    }

    /// Undirected adjacency edges, counted by walking the mesh.
    pub fn edge_count(&self) -> u64 {
        let degree_sum: u64 = self.cells().map(|c| self.neighbors(c).len() as u64).sum();
        degree_sum / 2
    }

    pub fn summary(&self) -> MeshSummary {
        MeshSummary {
            panel_size: self.panel_size,
            levels: self.levels,
            horizontal_cells: self.total_horizontal_cells(),
            edges: self.edge_count(),
        }
    }
}

pub fn build_mesh(panel_size: u32, levels: u32) -> Result<CubedSphereMesh, MeshError> {
    CubedSphereMesh::new(panel_size, levels)
}

pub fn total_horizontal_cells(mesh: &CubedSphereMesh) -> u64 {
    mesh.total_horizontal_cells()
}

/// Plain-text mesh report for debugging.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeshSummary {
    pub panel_size: u32,
    pub levels: u32,
    pub horizontal_cells: u64,
    pub edges: u64,
}

impl fmt::Display for MeshSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mesh            C{}", self.panel_size)?;
        writeln!(f, "levels          {}", self.levels)?;
        writeln!(f, "horizontal cells {}", self.horizontal_cells)?;
        write!(f, "edges           {}", self.edges)
    }
}
