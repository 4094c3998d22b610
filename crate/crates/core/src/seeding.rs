//! Named, reproducible random substreams.
//!
//! A stream is identified by a master seed and a path of labels, e.g.
//! `["demo", "2", "token", "7", "mean"]`. Its ChaCha20 key is
//! `SHA-256("dpsyn/seed/v1" ‖ master_le ‖ Σ (len_le ‖ label))`, so any stream
//! can be recreated from the run seed and its path alone.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

const DOMAIN: &[u8] = b"dpsyn/seed/v1";

/// A node in the seed derivation tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedTree {
    master: u64,
    path: Vec<String>,
}

impl SeedTree {
    pub fn new(master: u64) -> Self {
        Self {
            master,
            path: Vec::new(),
        }
    }

    pub fn child(&self, label: impl ToString) -> Self {
        let mut path = self.path.clone();
        path.push(label.to_string());
        Self {
            master: self.master,
            path,
        }
    }

    /// `child(label).child(index)`.
    pub fn indexed(&self, label: &str, index: usize) -> Self {
        self.child(label).child(index)
    }

    pub fn path(&self) -> String {
        self.path.join("/")
    }

    pub fn key(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(DOMAIN);
        h.update(self.master.to_le_bytes());
        for label in &self.path {
            h.update((label.len() as u64).to_le_bytes());
            h.update(label.as_bytes());
        }
        h.finalize().into()
    }

    /// A 64-bit seed derived from this node, for consumers that take `u64`.
    pub fn seed_u64(&self) -> u64 {
        let key = self.key();
        u64::from_le_bytes(key[..8].try_into().expect("8 bytes"))
    }

    pub fn rng(&self) -> ChaCha20Rng {
        ChaCha20Rng::from_seed(self.key())
    }
}

/// One independent stream per noise site of an aggregation step.
#[derive(Debug, Clone)]
pub struct NoiseStreams {
    pub radius: ChaCha20Rng,
    pub mean: ChaCha20Rng,
    pub check: ChaCha20Rng,
}

impl NoiseStreams {
    pub fn from_tree(node: &SeedTree) -> Self {
        Self {
            radius: node.child("goodradius").rng(),
            mean: node.child("mean").rng(),
            check: node.child("check").rng(),
        }
    }

    pub fn from_seed(seed: u64) -> Self {
        Self::from_tree(&SeedTree::new(seed))
    }
}
