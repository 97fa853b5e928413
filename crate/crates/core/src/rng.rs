//! Counter-keyed Gaussian draws and the dyadic Brownian tree.
//!
//! Every normal variate is a pure function of its key
//! `(seed, path, base step, mode, level, node)`: a ChaCha8 stream is seeded
//! with the packed key and a single standard normal is drawn from it. The
//! driving Brownian path of a trajectory is therefore fixed independently of
//! how the solver happens to subdivide time.
//!
//! Increments over a base step of length `τ₀` live at the root (level 0) of a
//! binary tree; a node at level `ℓ` covers `τ₀ 2^{-ℓ}`. Children are obtained
//! by the Brownian bridge: with parent increment `ΔW` over length `τ` and a
//! fresh `z ~ N(0,1)`,
//!
//! ```text
//! ΔW_left  = ΔW/2 + (√τ / 2) z
//! ΔW_right = ΔW/2 - (√τ / 2) z
//! ```
//!
//! so siblings always sum to their parent exactly (up to one rounding).

use alloc::vec::Vec;
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

/// Identifier of the keying scheme; recorded in run manifests.
pub const RNG_SCHEME: &str = "chacha8-key(seed,path,step,mode,level,node)/bridge-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NormalKey {
    pub seed: u64,
    pub path: u64,
    pub step: u64,
    pub mode: u32,
    pub level: u8,
    pub node: u64,
}

impl NormalKey {
    fn bytes(&self) -> [u8; 32] {
        let mut out = [0u8; 32];
        out[0..8].copy_from_slice(&self.seed.to_le_bytes());
        out[8..16].copy_from_slice(&self.path.to_le_bytes());
        out[16..24].copy_from_slice(&self.step.to_le_bytes());
        // mode: 16 bits, level: 8 bits, node: 40 bits
        let packed = (self.mode as u64 & 0xffff)
            | ((self.level as u64) << 16)
            | ((self.node & 0xff_ffff_ffff) << 24);
        out[24..32].copy_from_slice(&packed.to_le_bytes());
        out
    }

    pub fn normal(&self) -> f64 {
        let mut rng = ChaCha8Rng::from_seed(self.bytes());
        StandardNormal.sample(&mut rng)
    }
}

/// Brownian increments for a family of independent scalar drivers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrownianTree {
    pub seed: u64,
    pub path: u64,
    /// Length of a root interval.
    pub base_dt: f64,
    pub modes: usize,
}

impl BrownianTree {
    pub fn new(seed: u64, path: u64, base_dt: f64, modes: usize) -> Self {
        Self {
            seed,
            path,
            base_dt,
            modes,
        }
    }

    fn key(&self, step: u64, mode: usize, level: u8, node: u64) -> NormalKey {
        NormalKey {
            seed: self.seed,
            path: self.path,
            step,
            mode: mode as u32,
            level,
            node,
        }
    }

    /// Increments of every driver over node `node` at `level` inside root
    /// interval `step`, i.e. over
    /// `[(step + node 2^{-level}) τ₀, (step + (node+1) 2^{-level}) τ₀]`.
    pub fn increment(&self, step: u64, level: u8, node: u64) -> Vec<f64> {
        (0..self.modes)
            .map(|k| self.increment_mode(step, k, level, node))
            .collect()
    }

    pub fn increment_mode(&self, step: u64, mode: usize, level: u8, node: u64) -> f64 {
        debug_assert!(node < (1u64 << level));
        let mut dw = self.base_dt.sqrt() * self.key(step, mode, 0, 0).normal();
        let mut len = self.base_dt;
        for l in 1..=level {
            let parent = node >> (level - l + 1);
            let child = (node >> (level - l)) & 1;
            let z = self.key(step, mode, l, parent).normal();
            let half = 0.5 * dw;
            let shift = 0.5 * len.sqrt() * z;
            dw = if child == 0 {
                half + shift
            } else {
                half - shift
            };
            len *= 0.5;
        }
        dw
    }
}

/// Increments along the ancestor chain of the last node requested through
/// [`BrownianTree::increment_cached`]; entry `l` is the level-`l` ancestor.
#[derive(Debug, Clone, Default)]
pub struct BridgeCache {
    step: Option<u64>,
    chain: Vec<(u64, Vec<f64>)>,
}

impl BrownianTree {
    /// Same values as [`BrownianTree::increment`], reusing ancestors shared
    /// with the previous request inside the same root interval.
    pub fn increment_cached(
        &self,
        cache: &mut BridgeCache,
        step: u64,
        level: u8,
        node: u64,
    ) -> Vec<f64> {
        debug_assert!(node < (1u64 << level));
        let level = level as usize;
        if cache.step != Some(step) {
            cache.step = Some(step);
            cache.chain.clear();
        }
        let keep = cache
            .chain
            .iter()
            .enumerate()
            .take(level + 1)
            .take_while(|(l, (a, _))| *a == node >> (level - l))
            .count();
        cache.chain.truncate(keep);
        if cache.chain.is_empty() {
            let root = (0..self.modes)
                .map(|k| self.base_dt.sqrt() * self.key(step, k, 0, 0).normal())
                .collect();
            cache.chain.push((0, root));
        }
        let mut len = self.base_dt;
        for _ in 1..cache.chain.len() {
            len *= 0.5;
        }
        for l in cache.chain.len()..=level {
            let a = node >> (level - l);
            let parent = &cache.chain[l - 1].1;
            let dw = (0..self.modes)
                .map(|k| {
                    let z = self.key(step, k, l as u8, a >> 1).normal();
                    let half = 0.5 * parent[k];
                    let shift = 0.5 * len.sqrt() * z;
                    if a & 1 == 0 {
                        half + shift
                    } else {
                        half - shift
                    }
                })
                .collect();
            cache.chain.push((a, dw));
            len *= 0.5;
        }
        cache.chain[level].1.clone()
    }
}
