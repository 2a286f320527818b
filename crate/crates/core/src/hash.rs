//! Content hashes used to key caches and detect stale artifacts.

use sha2::{Digest, Sha256};

pub struct ContentHasher {
    inner: Sha256,
}

impl ContentHasher {
    /// Starts a hash; `domain` separates otherwise identical byte streams of different kinds.
    pub fn new(domain: &str) -> Self {
        let mut inner = Sha256::new();
        inner.update((domain.len() as u64).to_le_bytes());
        inner.update(domain.as_bytes());
        Self { inner }
    }

    pub fn update_u64(&mut self, x: u64) {
        self.inner.update(x.to_le_bytes());
    }

    pub fn update_f64s(&mut self, xs: &[f64]) {
        for x in xs {
            self.inner.update(x.to_bits().to_le_bytes());
        }
    }

    pub fn update_str(&mut self, s: &str) {
        self.update_u64(s.len() as u64);
        self.inner.update(s.as_bytes());
    }

    pub fn finish(self) -> String {
        to_hex(&self.inner.finalize())
    }
}

pub fn to_hex(bytes: &[u8]) -> String {
    use std::fmt::Write;
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    to_hex(&Sha256::digest(bytes))
}
