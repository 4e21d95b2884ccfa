//! Tensor fixtures: little-endian raw `f32` payload plus a JSON sidecar
//! `{"layout": "IN", "dims": [h, w, r, c]}`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ConvError;
use crate::tensor::{Layout, Tensor4};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureHeader {
    pub layout: Layout,
    pub dims: [usize; 4],
}

pub fn encode_fixture(tensor: &Tensor4) -> (String, Vec<u8>) {
    let header = FixtureHeader {
        layout: tensor.layout(),
        dims: tensor.dims(),
    };
    let sidecar = serde_json::to_string(&header).expect("header serializes");
    let mut raw = Vec::with_capacity(tensor.data().len() * 4);
    for v in tensor.data() {
        raw.extend_from_slice(&v.to_le_bytes());
    }
    (sidecar, raw)
}

pub fn decode_fixture(sidecar: &str, raw: &[u8]) -> Result<Tensor4, ConvError> {
    let header: FixtureHeader =
        serde_json::from_str(sidecar).map_err(|e| ConvError::Fixture(format!("sidecar: {e}")))?;
    let count = header
        .dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| ConvError::Fixture("dims overflow".into()))?;
    if count.checked_mul(4) != Some(raw.len()) {
        return Err(ConvError::Fixture(format!(
            "payload has {} bytes, dims {:?} need {}",
            raw.len(),
            header.dims,
            count.saturating_mul(4)
        )));
    }
    let data = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Tensor4::from_vec(header.layout, header.dims, data)
}

impl Tensor4 {
    /// Writes `<stem>.bin` and `<stem>.json`.
    pub fn save_fixture(&self, stem: &Path) -> std::io::Result<()> {
        let (sidecar, raw) = encode_fixture(self);
        fs::write(stem.with_extension("json"), sidecar)?;
        fs::write(stem.with_extension("bin"), raw)
    }

    pub fn load_fixture(stem: &Path) -> Result<Self, ConvError> {
        let sidecar = fs::read_to_string(stem.with_extension("json"))
            .map_err(|e| ConvError::Fixture(format!("{}: {e}", stem.display())))?;
        let raw = fs::read(stem.with_extension("bin"))
            .map_err(|e| ConvError::Fixture(format!("{}: {e}", stem.display())))?;
        decode_fixture(&sidecar, &raw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn roundtrip(d in prop::array::uniform4(1usize..4), seed in any::<u64>()) {
            let t = Tensor4::random(Layout::Out, d, seed);
            let (sidecar, raw) = encode_fixture(&t);
            prop_assert_eq!(decode_fixture(&sidecar, &raw).unwrap(), t);
        }
    }

    #[test]
    fn sidecar_format() {
        let t = Tensor4::zeros(Layout::Flt, [1, 2, 3, 4]);
        let (sidecar, raw) = encode_fixture(&t);
        assert_eq!(sidecar, r#"{"layout":"FLT","dims":[1,2,3,4]}"#);
        assert_eq!(raw.len(), 96);
    }

    #[test]
    fn rejects_malformed() {
        assert!(decode_fixture("{", &[]).is_err());
        assert!(decode_fixture(r#"{"layout":"IN","dims":[1,1,1,1]}"#, &[0, 0, 0]).is_err());
        assert!(decode_fixture(r#"{"layout":"XX","dims":[1,1,1,1]}"#, &[0; 4]).is_err());
        let huge = format!(r#"{{"layout":"IN","dims":[{m},{m},{m},{m}]}}"#, m = usize::MAX);
        assert!(decode_fixture(&huge, &[]).is_err());
    }

    #[test]
    fn file_roundtrip() {
        let dir = std::env::temp_dir().join(format!("conv-core-fixture-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let stem = dir.join("flt");
        let t = Tensor4::random(Layout::Flt, [3, 3, 2, 5], 11);
        t.save_fixture(&stem).unwrap();
        assert_eq!(Tensor4::load_fixture(&stem).unwrap(), t);
        fs::remove_dir_all(&dir).unwrap();
    }
}
