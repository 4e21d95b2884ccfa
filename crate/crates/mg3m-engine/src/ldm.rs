//! Scratchpad layout.
//!
//! Every logical buffer exists in single precision (what DMA moves) and
//! double precision (what the kernel reads). An ordinary buffer overlays
//! its single-precision image on the first half of its double-precision
//! window, so loads are widened in place back to front and stores narrowed
//! front to back. A double-buffered stream cannot overlay: its load slot
//! receives the next item while the compute slot is still in use.
//!
//! A buffer may be a gather of `slots` equal row blocks, one owned by each
//! element of a block row or column and the rest filled by broadcasts. Only
//! the owned slot has a single-precision image.

use serde::{Deserialize, Serialize};

use crate::error::EngineError;

const ALIGN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BufferRole {
    Ordinary,
    DoubleBuffered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LdmStrategy {
    Nested,
    Fixed,
    /// Disjoint single- and double-precision copies.
    Separate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutStyle {
    Simple,
    Enhanced,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BufferSpec {
    pub name: String,
    pub role: BufferRole,
    /// Single-precision size of the whole (gathered) buffer.
    pub spd_bytes: usize,
    pub slots: usize,
}

impl BufferSpec {
    pub fn new(name: &str, role: BufferRole, spd_bytes: usize, slots: usize) -> Self {
        Self {
            name: name.to_string(),
            role,
            spd_bytes,
            slots: slots.max(1),
        }
    }

    fn slot_spd(&self) -> usize {
        self.spd_bytes / self.slots
    }

    fn ideal(&self) -> usize {
        match self.role {
            BufferRole::Ordinary => self.spd_bytes,
            BufferRole::DoubleBuffered => self.spd_bytes + self.slot_spd(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LdmBuffer {
    pub name: String,
    pub role: BufferRole,
    pub strategy: LdmStrategy,
    pub slots: usize,
    pub spd_bytes: usize,
    pub dpd_bytes: usize,
    pub dpd_offset: usize,
    /// Load slot for fixed and separate layouts; nested buffers load into
    /// the owned slot of the double-precision window.
    pub spd_offset: Option<usize>,
    pub footprint_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdmPlan {
    pub style: LayoutStyle,
    pub buffers: Vec<LdmBuffer>,
    pub footprint_bytes: usize,
    pub ideal_bytes: usize,
    /// `footprint / ideal - 1`
    pub overhead_ratio: f64,
}

impl LdmPlan {
    pub fn buffer(&self, name: &str) -> Option<&LdmBuffer> {
        self.buffers.iter().find(|b| b.name == name)
    }

    /// Byte windows that must never overlap, as `(name, start, end)`.
    pub fn windows(&self) -> Vec<(String, usize, usize)> {
        let mut w = Vec::new();
        for b in &self.buffers {
            w.push((format!("{}.dpd", b.name), b.dpd_offset, b.dpd_offset + b.dpd_bytes));
            if let Some(s) = b.spd_offset {
                let len = match b.strategy {
                    LdmStrategy::Separate if b.role == BufferRole::DoubleBuffered => b.spd_bytes + b.spd_bytes / b.slots,
                    LdmStrategy::Separate => b.spd_bytes,
                    _ => b.spd_bytes / b.slots,
                };
                w.push((format!("{}.spd", b.name), s, s + len));
            }
        }
        w
    }
}

fn align(x: usize) -> usize {
    x.next_multiple_of(ALIGN)
}

/// Places `buffers` back to back and checks the total against `ldm_bytes`.
pub fn plan_ldm(buffers: &[BufferSpec], style: LayoutStyle, ldm_bytes: usize) -> Result<LdmPlan, EngineError> {
    let mut cursor = 0usize;
    let mut out = Vec::with_capacity(buffers.len());
    let mut ideal = 0usize;
    for spec in buffers {
        ideal += spec.ideal();
        let dpd = 2 * spec.spd_bytes;
        let slot_spd = spec.slot_spd();
        let start = cursor;
        let (strategy, spd_offset, end) = match (style, spec.role) {
            (LayoutStyle::Enhanced, BufferRole::Ordinary) => (LdmStrategy::Nested, None, align(start + dpd)),
            (LayoutStyle::Enhanced, BufferRole::DoubleBuffered) => {
                let s = align(start + dpd);
                (LdmStrategy::Fixed, Some(s), align(s + slot_spd))
            }
            (LayoutStyle::Simple, _) => {
                // Separate images of everything the ideal layout holds.
                let s = align(start + dpd + (spec.ideal() - spec.spd_bytes) * 2);
                (LdmStrategy::Separate, Some(s), align(s + spec.ideal()))
            }
        };
        out.push(LdmBuffer {
            name: spec.name.clone(),
            role: spec.role,
            strategy,
            slots: spec.slots,
            spd_bytes: spec.spd_bytes,
            dpd_bytes: dpd,
            dpd_offset: start,
            spd_offset,
            footprint_bytes: end - start,
        });
        cursor = end;
    }
    if cursor > ldm_bytes {
        return Err(EngineError::LdmOverflow {
            needed: cursor,
            available: ldm_bytes,
        });
    }
    Ok(LdmPlan {
        style,
        buffers: out,
        footprint_bytes: cursor,
        ideal_bytes: ideal,
        overhead_ratio: if ideal == 0 { 0.0 } else { cursor as f64 / ideal as f64 - 1.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const S: usize = 4096;

    #[test]
    fn simple_layout_triples_ideal() {
        let p = plan_ldm(&[BufferSpec::new("a", BufferRole::Ordinary, S, 1)], LayoutStyle::Simple, 65536).unwrap();
        assert_eq!(p.footprint_bytes, 3 * S);
        assert!((p.overhead_ratio - 2.0).abs() < 1e-12);
    }

    #[test]
    fn enhanced_equal_weight_is_five_thirds() {
        let specs = [
            BufferSpec::new("ord", BufferRole::Ordinary, S, 1),
            BufferSpec::new("db", BufferRole::DoubleBuffered, S, 1),
        ];
        let p = plan_ldm(&specs, LayoutStyle::Enhanced, 65536).unwrap();
        assert_eq!(p.footprint_bytes, 5 * S);
        assert_eq!(p.ideal_bytes, 3 * S);
        let q = plan_ldm(&specs, LayoutStyle::Simple, 65536).unwrap();
        assert_eq!(q.footprint_bytes, 9 * S);
    }

    #[test]
    fn windows_are_disjoint() {
        let specs = [
            BufferSpec::new("a", BufferRole::DoubleBuffered, 1000, 8),
            BufferSpec::new("b", BufferRole::Ordinary, 72, 1),
            BufferSpec::new("c", BufferRole::DoubleBuffered, 520, 1),
        ];
        for style in [LayoutStyle::Simple, LayoutStyle::Enhanced] {
            let p = plan_ldm(&specs, style, 65536).unwrap();
            let w = p.windows();
            for (i, a) in w.iter().enumerate() {
                assert!(a.2 <= p.footprint_bytes);
                for b in &w[i + 1..] {
                    assert!(a.2 <= b.1 || b.2 <= a.1, "{a:?} overlaps {b:?}");
                }
            }
        }
    }

    #[test]
    fn overflow_reports_excess() {
        let err = plan_ldm(&[BufferSpec::new("a", BufferRole::Ordinary, 40000, 1)], LayoutStyle::Enhanced, 65536)
            .unwrap_err();
        match err {
            EngineError::LdmOverflow { needed, available } => assert_eq!(needed - available, 80000 - 65536),
            e => panic!("{e}"),
        }
    }
}
