/// Byte-addressed main memory shared by the core group.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MainMemory {
    bytes: Vec<u8>,
}

impl MainMemory {
    pub fn new(len: usize) -> Self {
        Self { bytes: vec![0; len] }
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn bytes_mut(&mut self) -> &mut [u8] {
        &mut self.bytes
    }

    /// Appends `data` as little-endian f32 at the next 32-byte boundary and
    /// returns its base address.
    pub fn push_f32(&mut self, data: &[f32]) -> usize {
        let base = self.bytes.len().next_multiple_of(32);
        self.bytes.resize(base, 0);
        self.bytes.extend(data.iter().flat_map(|v| v.to_le_bytes()));
        base
    }

    /// Reserves `count` zeroed f32 slots; returns the base address.
    pub fn alloc_f32(&mut self, count: usize) -> usize {
        let base = self.bytes.len().next_multiple_of(32);
        self.bytes.resize(base + count * 4, 0);
        base
    }

    pub fn read_f32(&self, base: usize, count: usize) -> Vec<f32> {
        read_f32(&self.bytes[base..base + count * 4])
    }

    pub fn write_f32(&mut self, base: usize, data: &[f32]) {
        write_f32(&mut self.bytes[base..base + data.len() * 4], data);
    }
}

pub(crate) fn read_f32(b: &[u8]) -> Vec<f32> {
    b.chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect()
}

pub(crate) fn write_f32(b: &mut [u8], data: &[f32]) {
    for (c, v) in b.chunks_exact_mut(4).zip(data) {
        c.copy_from_slice(&v.to_le_bytes());
    }
}

pub(crate) fn read_f64(b: &[u8]) -> Vec<f64> {
    b.chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect()
}

pub(crate) fn write_f64(b: &mut [u8], data: &[f64]) {
    for (c, v) in b.chunks_exact_mut(8).zip(data) {
        c.copy_from_slice(&v.to_le_bytes());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn push_aligns_and_roundtrips() {
        let mut m = MainMemory::new(3);
        let a = m.push_f32(&[1.0, 2.5]);
        assert_eq!(a, 32);
        let b = m.alloc_f32(4);
        assert_eq!(b, 64);
        assert_eq!(m.read_f32(a, 2), vec![1.0, 2.5]);
        m.write_f32(b + 4, &[-3.0]);
        assert_eq!(m.read_f32(b, 4), vec![0.0, -3.0, 0.0, 0.0]);
    }
}
