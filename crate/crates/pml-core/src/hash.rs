use sha2::{Digest, Sha256};

/// Short hex digest used to stamp artifacts with their provenance.
pub struct Hasher {
    inner: Sha256,
}

impl Hasher {
    pub fn new() -> Self {
        Hasher { inner: Sha256::new() }
    }

    pub fn bytes(mut self, data: &[u8]) -> Self {
        self.inner.update(data);
        self
    }

    pub fn f64(self, x: f64) -> Self {
        self.bytes(&x.to_le_bytes())
    }

    pub fn f64s(mut self, xs: &[f64]) -> Self {
        for x in xs {
            self.inner.update(x.to_le_bytes());
        }
        self
    }

    pub fn usizes(mut self, xs: &[usize]) -> Self {
        for x in xs {
            self.inner.update((*x as u64).to_le_bytes());
        }
        self
    }

    /// First 16 hex characters of the SHA-256 digest.
    pub fn finish(self) -> String {
        let digest = self.inner.finalize();
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

impl Default for Hasher {
    fn default() -> Self {
        Self::new()
    }
}

pub fn hash_bytes(data: &[u8]) -> String {
    Hasher::new().bytes(data).finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_digest() {
        let a = Hasher::new().f64(1.5).usizes(&[1, 2, 3]).finish();
        let b = Hasher::new().f64(1.5).usizes(&[1, 2, 3]).finish();
        assert_eq!(a, b);
        assert_eq!(a.len(), 16);
        let c = Hasher::new().f64(1.5000001).usizes(&[1, 2, 3]).finish();
        assert_ne!(a, c);
    }
}
