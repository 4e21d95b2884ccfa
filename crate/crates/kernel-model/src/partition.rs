use serde::{Deserialize, Serialize};

use crate::KernelError;

pub const MAIN_KR: usize = 4;
pub const MAIN_NR: usize = 16;

/// One rectangle `[k0, k0+k_len) × [n0, n0+n_len)` covered by a single tile
/// variant `(kr, nr)`; `k_len` and `n_len` are multiples of `kr` and `nr`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelPart {
    pub k0: usize,
    pub k_len: usize,
    pub n0: usize,
    pub n_len: usize,
    pub kr: usize,
    pub nr: usize,
}

impl KernelPart {
    pub fn tiles(&self) -> usize {
        (self.k_len / self.kr) * (self.n_len / self.nr)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelPartition {
    pub k: usize,
    pub n: usize,
    pub parts: Vec<KernelPart>,
}

/// Splits `K × N` into the main block handled by the `4 × 16` tile plus the
/// right, bottom and corner remainders handled by `(4, N%16)`, `(K%4, 16)`
/// and `(K%4, N%16)`. Empty parts are omitted.
pub fn partition_kernel(k: usize, n: usize) -> Result<KernelPartition, KernelError> {
    if k == 0 || n == 0 || !n.is_multiple_of(4) {
        return Err(KernelError::BadExtent { k, n });
    }
    let (k_main, n_main) = (k - k % MAIN_KR, n - n % MAIN_NR);
    let (k_rem, n_rem) = (k % MAIN_KR, n % MAIN_NR);
    let candidates = [
        KernelPart { k0: 0, k_len: k_main, n0: 0, n_len: n_main, kr: MAIN_KR, nr: MAIN_NR },
        KernelPart { k0: 0, k_len: k_main, n0: n_main, n_len: n_rem, kr: MAIN_KR, nr: n_rem },
        KernelPart { k0: k_main, k_len: k_rem, n0: 0, n_len: n_main, kr: k_rem, nr: MAIN_NR },
        KernelPart { k0: k_main, k_len: k_rem, n0: n_main, n_len: n_rem, kr: k_rem, nr: n_rem },
    ];
    let parts = candidates
        .into_iter()
        .filter(|p| p.k_len > 0 && p.n_len > 0)
        .collect();
    Ok(KernelPartition { k, n, parts })
}

impl KernelPartition {
    pub fn macs(&self, c: usize) -> usize {
        self.parts.iter().map(|p| p.k_len * p.n_len * c).sum()
    }
}

/// Extra work of the alternative that pads `K` and `N` up to whole `4 × 16`
/// tiles instead of partitioning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaddingCost {
    /// `padded MACs / exact MACs - 1`
    pub extra_macs: f64,
    /// Same for accessed elements `C·K + C·N + K·N`.
    pub extra_access: f64,
}

impl PaddingCost {
    pub fn compare(k: usize, n: usize, c: usize) -> Self {
        let kp = k.div_ceil(MAIN_KR) * MAIN_KR;
        let np = n.div_ceil(MAIN_NR) * MAIN_NR;
        let access = |k: usize, n: usize| (c * k + c * n + k * n) as f64;
        Self {
            extra_macs: (kp * np * c) as f64 / (k * n * c) as f64 - 1.0,
            extra_access: access(kp, np) / access(k, n) - 1.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k30_n44() {
        let p = partition_kernel(30, 44).unwrap();
        let shapes: Vec<_> = p.parts.iter().map(|p| (p.k_len, p.n_len, p.kr, p.nr)).collect();
        assert_eq!(shapes, vec![(28, 32, 4, 16), (28, 12, 4, 12), (2, 32, 2, 16), (2, 12, 2, 12)]);
        assert_eq!(p.macs(16), 30 * 44 * 16);
    }

    #[test]
    fn exact_and_tiny() {
        let p = partition_kernel(32, 48).unwrap();
        assert_eq!(p.parts.len(), 1);
        assert_eq!(p.parts[0].tiles(), 8 * 3);
        let p = partition_kernel(3, 4).unwrap();
        assert_eq!(p.parts, vec![KernelPart { k0: 0, k_len: 3, n0: 0, n_len: 4, kr: 3, nr: 4 }]);
    }

    #[test]
    fn rejects_unpadded_n() {
        assert!(partition_kernel(4, 6).is_err());
        assert!(partition_kernel(0, 16).is_err());
    }

    #[test]
    fn padding_cost_for_k30_n44() {
        let pc = PaddingCost::compare(30, 44, 16);
        assert!((pc.extra_macs - (1536.0 / 1320.0 - 1.0)).abs() < 1e-12);
        assert!((pc.extra_access - (2816.0 / 2504.0 - 1.0)).abs() < 1e-12);
    }
}
