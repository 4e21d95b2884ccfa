use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::MachineConfig;
use crate::error::SimError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CpeId {
    pub row: usize,
    pub col: usize,
}

impl CpeId {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    pub fn index(&self, cfg: &MachineConfig) -> usize {
        self.row * cfg.grid_cols + self.col
    }

    pub fn from_index(i: usize, cfg: &MachineConfig) -> Self {
        Self::new(i / cfg.grid_cols, i % cfg.grid_cols)
    }
}

impl fmt::Display for CpeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cpe({},{})", self.row, self.col)
    }
}

/// Shape of a thread block: a rectangle of elements cooperating on one task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TbShape {
    #[serde(rename = "1x1")]
    Tb1x1,
    #[serde(rename = "1x8")]
    Tb1x8,
    #[serde(rename = "8x8")]
    Tb8x8,
}

impl TbShape {
    /// Finest first.
    pub const ALL: [TbShape; 3] = [TbShape::Tb1x1, TbShape::Tb1x8, TbShape::Tb8x8];

    pub fn rows(&self) -> usize {
        match self {
            TbShape::Tb1x1 | TbShape::Tb1x8 => 1,
            TbShape::Tb8x8 => 8,
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            TbShape::Tb1x1 => 1,
            TbShape::Tb1x8 | TbShape::Tb8x8 => 8,
        }
    }

    pub fn size(&self) -> usize {
        self.rows() * self.cols()
    }

    pub fn name(&self) -> &'static str {
        match self {
            TbShape::Tb1x1 => "1x1",
            TbShape::Tb1x8 => "1x8",
            TbShape::Tb8x8 => "8x8",
        }
    }
}

impl fmt::Display for TbShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TbShape {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "1x1" | "(1,1)" => Ok(TbShape::Tb1x1),
            "1x8" | "(1,8)" => Ok(TbShape::Tb1x8),
            "8x8" | "(8,8)" => Ok(TbShape::Tb8x8),
            _ => Err(format!("unknown TB shape `{s}` (expected 1x1, 1x8 or 8x8)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TbPartition {
    pub tb_id: usize,
    pub shape: TbShape,
    pub origin: CpeId,
    /// Row-major within the block.
    pub members: Vec<CpeId>,
}

impl TbPartition {
    pub fn contains(&self, c: CpeId) -> bool {
        c.row >= self.origin.row
            && c.row < self.origin.row + self.shape.rows()
            && c.col >= self.origin.col
            && c.col < self.origin.col + self.shape.cols()
    }

    /// Position of `c` inside the block.
    pub fn local(&self, c: CpeId) -> (usize, usize) {
        (c.row - self.origin.row, c.col - self.origin.col)
    }

    pub fn member(&self, i: usize, j: usize) -> CpeId {
        CpeId::new(self.origin.row + i, self.origin.col + j)
    }
}

/// Splits the grid into disjoint blocks of `shape`, numbered row-major.
pub fn partition_tbs(cfg: &MachineConfig, shape: TbShape) -> Result<Vec<TbPartition>, SimError> {
    let (r, c) = (shape.rows(), shape.cols());
    if !cfg.grid_rows.is_multiple_of(r) || !cfg.grid_cols.is_multiple_of(c) {
        return Err(SimError::UnsupportedGrain { rows: r, cols: c });
    }
    let mut out = Vec::new();
    for br in 0..cfg.grid_rows / r {
        for bc in 0..cfg.grid_cols / c {
            let origin = CpeId::new(br * r, bc * c);
            let members = (0..r)
                .flat_map(|i| (0..c).map(move |j| CpeId::new(origin.row + i, origin.col + j)))
                .collect();
            out.push(TbPartition {
                tb_id: out.len(),
                shape,
                origin,
                members,
            });
        }
    }
    Ok(out)
}

/// Block id of every element, indexed row-major.
pub fn tb_of_each(cfg: &MachineConfig, parts: &[TbPartition]) -> Vec<usize> {
    let mut map = vec![usize::MAX; cfg.num_cpes()];
    for p in parts {
        for m in &p.members {
            map[m.index(cfg)] = p.tb_id;
        }
    }
    map
}
