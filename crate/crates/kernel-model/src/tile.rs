use serde::{Deserialize, Serialize};

use crate::KernelError;

/// Which load-instruction family the kernel uses for its operands.
///
/// `Local` reads both operands from the element's own scratchpad. `RowBcast`
/// takes the input vectors from a row broadcast, `ColRowBcast` takes inputs
/// from a column broadcast and filter values from a row broadcast. Both
/// broadcast flavors pay extra address arithmetic per iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrainFlavor {
    Local,
    RowBcast,
    ColRowBcast,
}

impl GrainFlavor {
    pub const ALL: [GrainFlavor; 3] = [GrainFlavor::Local, GrainFlavor::RowBcast, GrainFlavor::ColRowBcast];

    pub fn is_broadcast(self) -> bool {
        !matches!(self, GrainFlavor::Local)
    }

    pub fn name(self) -> &'static str {
        match self {
            GrainFlavor::Local => "local",
            GrainFlavor::RowBcast => "row_bcast",
            GrainFlavor::ColRowBcast => "colrow_bcast",
        }
    }
}

/// Vector register file as seen by the kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterFile {
    pub usable_vregs: usize,
    pub vec_len: usize,
}

impl Default for RegisterFile {
    fn default() -> Self {
        Self {
            usable_vregs: 30,
            vec_len: 4,
        }
    }
}

impl RegisterFile {
    /// Registers a `kr × nr` tile holds live at once: `kr` filter values,
    /// `nr / vec_len` input vectors and `kr · nr / vec_len` accumulators.
    pub fn registers_used(&self, kr: usize, nr: usize) -> usize {
        kr + nr / self.vec_len + kr * nr / self.vec_len
    }

    /// Strictly below the usable count, so 30 usable registers admit at most 29.
    pub fn fits(&self, kr: usize, nr: usize) -> bool {
        self.registers_used(kr, nr) < self.usable_vregs
    }

    /// The 16-point grid `Kr ∈ 1..=4`, `Nr ∈ {1,2,3,4}·vec_len`.
    pub fn candidates(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (1..=4).flat_map(move |kr| (1..=4).map(move |m| (kr, m * self.vec_len)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MicrokernelVariant {
    pub kr: usize,
    pub nr: usize,
    pub reordered: bool,
    pub flavor: GrainFlavor,
}

impl MicrokernelVariant {
    /// Reduction unroll; fixed so that a stage carries no data dependence.
    pub const CR: usize = 1;

    pub fn new(kr: usize, nr: usize, reordered: bool, flavor: GrainFlavor) -> Result<Self, KernelError> {
        let rf = RegisterFile::default();
        if !(1..=4).contains(&kr) || nr == 0 || !nr.is_multiple_of(rf.vec_len) || nr > 4 * rf.vec_len {
            return Err(KernelError::BadTile { kr, nr });
        }
        if !rf.fits(kr, nr) {
            return Err(KernelError::OverBudget { kr, nr });
        }
        Ok(Self {
            kr,
            nr,
            reordered,
            flavor,
        })
    }
}

/// Compute-to-access ratio of a tile in the large-problem limit:
/// `2 / (4/Nr + 1/Kr)`.
pub fn compute_ratio(kr: usize, nr: usize) -> f64 {
    2.0 / (4.0 / nr as f64 + 1.0 / kr as f64)
}

/// Exhaustive search over the candidate grid for the tile with the best
/// [`compute_ratio`] that fits the register file. Ties go to the tile using
/// fewer registers. When nothing fits, the minimal `(1, vec_len)` tile is
/// returned.
pub fn select_tile(rf: &RegisterFile) -> (usize, usize) {
    let mut best: Option<(usize, usize)> = None;
    for (kr, nr) in rf.candidates() {
        if !rf.fits(kr, nr) {
            continue;
        }
        best = match best {
            None => Some((kr, nr)),
            Some((bk, bn)) => {
                let (r, br) = (compute_ratio(kr, nr), compute_ratio(bk, bn));
                if r > br || (r == br && rf.registers_used(kr, nr) < rf.registers_used(bk, bn)) {
                    Some((kr, nr))
                } else {
                    Some((bk, bn))
                }
            }
        };
    }
    best.unwrap_or((1, rf.vec_len))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_budget_selects_4x16() {
        assert_eq!(select_tile(&RegisterFile::default()), (4, 16));
        assert_eq!(compute_ratio(4, 16), 4.0);
    }

    #[test]
    fn ratios() {
        assert_eq!(compute_ratio(1, 4), 1.0);
        assert!((compute_ratio(2, 12) - 2.4).abs() < 1e-12);
    }

    #[test]
    fn budget_accounting() {
        let rf = RegisterFile::default();
        assert_eq!(rf.registers_used(4, 16), 24);
        assert!(rf.candidates().all(|(k, n)| rf.fits(k, n)));
        assert_eq!(rf.candidates().count(), 16);
        assert!(MicrokernelVariant::new(5, 16, true, GrainFlavor::Local).is_err());
        assert!(MicrokernelVariant::new(2, 6, true, GrainFlavor::Local).is_err());
    }
}
