//! Streamed Galton–Watson and deterministic d-ary trees with survival
//! conditioning and overlap computation.
//!
//! Trees are never stored: a [`LeafCursor`] walks the implicit tree depth
//! first, regenerating shape and weight draws from vertex addresses, so
//! memory stays O(depth) regardless of leaf count. Shape draws and Gaussian
//! weight draws come from disjoint substreams: resampling the shape under
//! survival conditioning never perturbs the weights of surviving vertices.

use crate::numerics::{SplitMix, Stream};
use crate::{Error, Result};

/// Offspring laws are truncated at 64 children per vertex and renormalized;
/// at the means used here the truncated mass is far below double-precision
/// resolution.
pub const MAX_OFFSPRING: u32 = 64;

const MAX_SURVIVAL_RESAMPLES: u64 = 1_000_000;

/// Offspring distribution of the branching process. `mean()` must exceed 1
/// (supercritical) for every constructor.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OffspringLaw {
    /// Every vertex has exactly `d` children (deterministic d-ary tree).
    DeterministicD { d: u32 },
    Poisson { mean: f64 },
    /// Failures before first success: P(k) = p (1-p)^k on {0,1,...}.
    Geometric { p: f64 },
    Binomial { trials: u32, p: f64 },
    /// Explicit probability table over {0, 1, ..., len-1}.
    Table { probs: Vec<f64> },
}

impl OffspringLaw {
    /// Analytic mean of the (untruncated) law.
    pub fn mean(&self) -> f64 {
        match self {
            OffspringLaw::DeterministicD { d } => *d as f64,
            OffspringLaw::Poisson { mean } => *mean,
            OffspringLaw::Geometric { p } => (1.0 - p) / p,
            OffspringLaw::Binomial { trials, p } => *trials as f64 * p,
            OffspringLaw::Table { probs } => {
                let total: f64 = probs.iter().sum();
                probs
                    .iter()
                    .enumerate()
                    .map(|(k, p)| k as f64 * p)
                    .sum::<f64>()
                    / total
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            OffspringLaw::DeterministicD { d } => {
                if *d < 2 {
                    return Err(Error::SubcriticalMean(*d as f64));
                }
            }
            OffspringLaw::Poisson { mean } => {
                if !mean.is_finite() || *mean <= 0.0 {
                    return Err(Error::InvalidOffspringLaw(format!(
                        "poisson mean {mean} must be positive"
                    )));
                }
            }
            OffspringLaw::Geometric { p } => {
                if !(*p > 0.0 && *p < 1.0) {
                    return Err(Error::InvalidOffspringLaw(format!(
                        "geometric p {p} must lie in (0,1)"
                    )));
                }
            }
            OffspringLaw::Binomial { trials, p } => {
                if *trials == 0 || !(*p > 0.0 && *p <= 1.0) {
                    return Err(Error::InvalidOffspringLaw(format!(
                        "binomial({trials}, {p}) invalid"
                    )));
                }
            }
            OffspringLaw::Table { probs } => {
                if probs.is_empty() || probs.len() > MAX_OFFSPRING as usize + 1 {
                    return Err(Error::InvalidOffspringLaw(format!(
                        "table length {} outside 1..={}",
                        probs.len(),
                        MAX_OFFSPRING + 1
                    )));
                }
                if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
                    return Err(Error::InvalidOffspringLaw(
                        "table entries must be finite and nonnegative".into(),
                    ));
                }
                if probs.iter().sum::<f64>() <= 0.0 {
                    return Err(Error::InvalidOffspringLaw("table has zero mass".into()));
                }
            }
        }
        let m = self.mean();
        if !(m > 1.0) {
            return Err(Error::SubcriticalMean(m));
        }
        Ok(())
    }

    /// Unnormalized CDF over the truncated support {0..=64}; `None` for the
    /// deterministic law, which consumes no shape randomness.
    fn shape_cdf(&self) -> Option<Vec<f64>> {
        let pmf: Vec<f64> = match self {
            OffspringLaw::DeterministicD { .. } => return None,
            OffspringLaw::Poisson { mean } => {
                let mut p = (-mean).exp();
                (0..=MAX_OFFSPRING)
                    .map(|k| {
                        let cur = p;
                        p *= mean / (k as f64 + 1.0);
                        cur
                    })
                    .collect()
            }
            OffspringLaw::Geometric { p } => {
                let mut q = *p;
                (0..=MAX_OFFSPRING)
                    .map(|_| {
                        let cur = q;
                        q *= 1.0 - p;
                        cur
                    })
                    .collect()
            }
            OffspringLaw::Binomial { trials, p } => {
                let n = *trials as f64;
                let mut w = (1.0 - p).powf(n);
                (0..=MAX_OFFSPRING.min(*trials))
                    .map(|k| {
                        let cur = w;
                        w *= (n - k as f64) / (k as f64 + 1.0) * p / (1.0 - p);
                        cur
                    })
                    .collect()
            }
            OffspringLaw::Table { probs } => probs.clone(),
        };
        let mut cdf = pmf;
        for i in 1..cdf.len() {
            cdf[i] += cdf[i - 1];
        }
        Some(cdf)
    }
}

#[inline]
fn sample_from_cdf(cdf: &[f64], u: f64) -> u32 {
    let target = u * cdf[cdf.len() - 1];
    cdf.partition_point(|&c| c < target) as u32
}

/// Path of child indices from the root; generation is the path length.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct VertexAddress {
    pub path: Vec<u32>,
}

impl VertexAddress {
    pub fn new(path: Vec<u32>) -> Self {
        VertexAddress { path }
    }

    pub fn generation(&self) -> usize {
        self.path.len()
    }
}

/// Overlap C(x,y): length of the longest common prefix of two same-generation
/// addresses. C(x,x) = n; addresses diverging at the root have overlap 0.
pub fn overlap(x: &VertexAddress, y: &VertexAddress) -> Result<u32> {
    if x.generation() != y.generation() {
        return Err(Error::GenerationMismatch(x.generation(), y.generation()));
    }
    Ok(x.path
        .iter()
        .zip(&y.path)
        .take_while(|(a, b)| a == b)
        .count() as u32)
}

/// Number of ordered leaf pairs with overlap exactly `h` in the complete
/// d-ary tree of depth `n`: `d^n (d-1) d^(n-h-1)` for `h < n`, `d^n` on the
/// diagonal `h = n`.
pub fn pair_count_dary(d: u32, n: u32, h: u32) -> Result<u128> {
    if h > n {
        return Err(Error::OverlapOutOfRange { h, n });
    }
    if d < 2 {
        return Err(Error::SubcriticalMean(d as f64));
    }
    let d = d as u128;
    let pow = |e: u32| -> Result<u128> {
        d.checked_pow(e)
            .ok_or_else(|| Error::InvalidConfig("pair count overflows u128".into()))
    };
    if h == n {
        pow(n)
    } else {
        Ok(pow(2 * n - h - 1)?
            .checked_mul(d - 1)
            .ok_or_else(|| Error::InvalidConfig("pair count overflows u128".into()))?)
    }
}

/// Whether extinct tree shapes are resampled until generation `depth` is
/// populated (finite-horizon conditioning on survival).
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurvivalMode {
    Raw,
    Conditioned,
}

/// A replicable implicit tree: law, depth, seed, and survival mode identify
/// the vertex sequence and every Gaussian draw exactly.
#[derive(Clone, Debug)]
pub struct TreeStream {
    pub law: OffspringLaw,
    pub depth: u32,
    pub seed: u64,
    pub replica: u64,
    pub mode: SurvivalMode,
}

impl TreeStream {
    pub fn new(law: OffspringLaw, depth: u32, seed: u64, mode: SurvivalMode) -> Result<Self> {
        law.validate()?;
        Ok(TreeStream {
            law,
            depth,
            seed,
            replica: 0,
            mode,
        })
    }

    /// Replica `r` of the same experiment: an independent seed derived from
    /// the base seed, carried alongside for provenance.
    pub fn with_replica(mut self, replica: u64) -> Self {
        self.replica = replica;
        self
    }

    /// Seed after folding in the replica index; this is the `seed` field of
    /// the `SplitKey`s the stream draws from.
    pub fn effective_seed(&self) -> u64 {
        if self.replica == 0 {
            self.seed
        } else {
            SplitMix::replica_seed(self.seed, self.replica)
        }
    }

    /// Depth-first stream over all generation-`depth` vertices with their
    /// per-vertex Gaussian draws. Conditioned mode resamples the tree shape
    /// (next shape-substream index) until generation `depth` is populated.
    pub fn stream_leaves(&self) -> Result<LeafCursor> {
        LeafCursor::new(self)
    }

    /// Collects every leaf; for tests and small trees only.
    pub fn collect_leaves(&self) -> Result<Vec<(VertexAddress, Vec<f64>)>> {
        let mut cursor = self.stream_leaves()?;
        let mut out = Vec::new();
        while let Some(leaf) = cursor.advance() {
            out.push((VertexAddress::new(leaf.path.to_vec()), leaf.draws.to_vec()));
        }
        Ok(out)
    }
}

/// One generation-n vertex as yielded by [`LeafCursor::advance`].
///
/// `draws[i]` is the standard-normal weight of the path vertex at generation
/// `i + 1` (the root carries no weight). `fresh_from` is the lowest path
/// level that changed since the previously yielded leaf, so consumers can
/// maintain prefix quantities incrementally in O(changed levels).
#[derive(Debug)]
pub struct Leaf<'a> {
    pub path: &'a [u32],
    pub draws: &'a [f64],
    pub fresh_from: usize,
}

/// Iterative depth-first walk of the implicit tree. Memory is
/// O(depth x max offspring-independent level state), never leaf count.
pub struct LeafCursor {
    law_d: u32, // fast path for the deterministic law; 0 otherwise
    shape_cdf: Option<Vec<f64>>,
    depth: usize,
    attempt: u64,
    states: Vec<SplitMix>,
    path: Vec<u32>,
    draws: Vec<f64>,
    child_count: Vec<u32>,
    next_child: Vec<u32>,
    gen: usize,
    started: bool,
    done: bool,
    fresh: usize,
}

impl LeafCursor {
    fn new(stream: &TreeStream) -> Result<Self> {
        stream.law.validate()?;
        let depth = stream.depth as usize;
        let root = SplitMix::root(stream.effective_seed());
        let shape_cdf = stream.law.shape_cdf();
        let law_d = match stream.law {
            OffspringLaw::DeterministicD { d } => d,
            _ => 0,
        };

        let attempt = resolve_attempt(stream, &shape_cdf, root)?;

        let mut cursor = LeafCursor {
            law_d,
            shape_cdf,
            depth,
            attempt,
            states: vec![root; depth + 1],
            path: vec![0; depth],
            draws: vec![0.0; depth],
            child_count: vec![0; depth.max(1)],
            next_child: vec![0; depth.max(1)],
            gen: 0,
            started: false,
            done: false,
            fresh: 0,
        };
        if depth > 0 {
            cursor.child_count[0] = cursor.offspring(root);
        }
        Ok(cursor)
    }

    #[inline]
    fn offspring(&self, state: SplitMix) -> u32 {
        if self.law_d > 0 {
            self.law_d
        } else {
            sample_from_cdf(
                self.shape_cdf.as_ref().expect("random law"),
                state.shape_uniform(self.attempt),
            )
        }
    }

    /// Next generation-n vertex in depth-first order, or `None` when the
    /// tree is exhausted (raw mode may yield no leaves at all on extinction).
    #[inline]
    pub fn advance(&mut self) -> Option<Leaf<'_>> {
        if self.done {
            return None;
        }
        if self.started {
            if self.depth == 0 {
                self.done = true;
                return None;
            }
            self.gen -= 1; // step up from the just-emitted leaf
        } else {
            self.started = true;
            if self.depth == 0 {
                self.done = true;
                return Some(Leaf {
                    path: &self.path,
                    draws: &self.draws,
                    fresh_from: 0,
                });
            }
        }
        self.fresh = usize::MAX;
        loop {
            let g = self.gen;
            if self.next_child[g] < self.child_count[g] {
                let c = self.next_child[g];
                self.next_child[g] += 1;
                let s = self.states[g].child(c);
                self.path[g] = c;
                self.draws[g] = s.gaussian(Stream::Gaussian);
                self.states[g + 1] = s;
                if g < self.fresh {
                    self.fresh = g;
                }
                self.gen += 1;
                if self.gen == self.depth {
                    return Some(Leaf {
                        path: &self.path,
                        draws: &self.draws,
                        fresh_from: self.fresh,
                    });
                }
                self.child_count[self.gen] = self.offspring(s);
                self.next_child[self.gen] = 0;
            } else if g == 0 {
                self.done = true;
                return None;
            } else {
                self.gen -= 1;
            }
        }
    }

    /// Shape-resample index that survived conditioning (0 in raw mode).
    pub fn attempt(&self) -> u64 {
        self.attempt
    }
}

/// One step of the fused depth-first walk used by the partition kernels.
pub(crate) enum WalkEvent {
    /// Entered the vertex at generation `level + 1` via child index `child`;
    /// `draw` is its standard-normal weight.
    Descend { level: usize, child: u32, draw: f64 },
    /// The current path head is a generation-n vertex.
    Leaf,
}

/// Streams the same vertex sequence as [`LeafCursor`] through a single
/// inlined callback, letting consumers maintain path-prefix state without a
/// second pass over the changed levels. Returns the leaf count.
pub(crate) fn walk<F: FnMut(WalkEvent)>(tree: &TreeStream, mut f: F) -> Result<u64> {
    tree.law.validate()?;
    let depth = tree.depth as usize;
    let root = SplitMix::root(tree.effective_seed());
    let shape_cdf = tree.law.shape_cdf();
    let law_d = match tree.law {
        OffspringLaw::DeterministicD { d } => d,
        _ => 0,
    };
    let attempt = resolve_attempt(tree, &shape_cdf, root)?;

    if depth == 0 {
        f(WalkEvent::Leaf);
        return Ok(1);
    }
    if law_d > 0 {
        return Ok(walk_dary(law_d, depth, root, f));
    }

    let offspring = |state: SplitMix| -> u32 {
        if law_d > 0 {
            law_d
        } else {
            sample_from_cdf(
                shape_cdf.as_ref().expect("random law"),
                state.shape_uniform(attempt),
            )
        }
    };

    let mut states = vec![root; depth + 1];
    let mut child_count = vec![0u32; depth];
    let mut next_child = vec![0u32; depth];
    child_count[0] = offspring(root);
    let mut leaves = 0u64;
    let mut g = 0usize;
    loop {
        if next_child[g] < child_count[g] {
            let c = next_child[g];
            next_child[g] += 1;
            let s = states[g].child(c);
            states[g + 1] = s;
            f(WalkEvent::Descend {
                level: g,
                child: c,
                draw: s.gaussian(Stream::Gaussian),
            });
            g += 1;
            if g == depth {
                f(WalkEvent::Leaf);
                leaves += 1;
                g -= 1;
            } else {
                child_count[g] = offspring(s);
                next_child[g] = 0;
            }
        } else if g == 0 {
            return Ok(leaves);
        } else {
            g -= 1;
        }
    }
}

/// Complete d-ary specialization of [`walk`]: leaves are enumerated in the
/// same lexicographic depth-first order, but the path is advanced like a
/// base-d counter, and the whole sibling block at the deepest level is drawn
/// before its events fire. The block's Gaussian transforms are independent,
/// which is what lets the CPU overlap their latency; without it every leaf
/// sits on one serial fold -> inverse-CDF chain.
fn walk_dary<F: FnMut(WalkEvent)>(d: u32, depth: usize, root: SplitMix, mut f: F) -> u64 {
    const BATCH: usize = 8;
    let mut states = vec![root; depth];
    let mut path = vec![0u32; depth.saturating_sub(1)];
    let last = d - 1;
    let bottom = depth - 1;
    let mut draws = [0.0f64; BATCH];

    let two_level = d == 2 && depth >= 2;
    // walk down to the parent of the first sibling block
    let prefix_end = if two_level { depth - 2 } else { bottom };
    for level in 0..prefix_end {
        let s = states[level].child(0);
        states[level + 1] = s;
        f(WalkEvent::Descend {
            level,
            child: 0,
            draw: s.gaussian(Stream::Gaussian),
        });
    }
    // binary trees of depth >= 2 take a two-level block: the 2 children and
    // 4 grandchildren of each depth-(n-2) vertex are drawn together
    if two_level {
        let mid = depth - 2;
        let mut leaves = 0u64;
        loop {
            let parent = states[mid];
            let c0 = parent.child(0);
            let c1 = parent.child(1);
            let ws = [
                c0.gaussian(Stream::Gaussian),
                c1.gaussian(Stream::Gaussian),
                c0.child(0).gaussian(Stream::Gaussian),
                c0.child(1).gaussian(Stream::Gaussian),
                c1.child(0).gaussian(Stream::Gaussian),
                c1.child(1).gaussian(Stream::Gaussian),
            ];
            for half in 0..2usize {
                f(WalkEvent::Descend {
                    level: mid,
                    child: half as u32,
                    draw: ws[half],
                });
                for leaf_bit in 0..2usize {
                    f(WalkEvent::Descend {
                        level: bottom,
                        child: leaf_bit as u32,
                        draw: ws[2 + 2 * half + leaf_bit],
                    });
                    f(WalkEvent::Leaf);
                }
            }
            leaves += 4;

            // advance the depth-(n-2) counter and re-descend the suffix
            let mut level = mid;
            while level > 0 && path[level - 1] == last {
                path[level - 1] = 0;
                level -= 1;
            }
            if level == 0 {
                return leaves;
            }
            let level = level - 1;
            path[level] += 1;
            let s = states[level].child(path[level]);
            states[level + 1] = s;
            f(WalkEvent::Descend {
                level,
                child: path[level],
                draw: s.gaussian(Stream::Gaussian),
            });
            for m in level + 1..mid {
                let s = states[m].child(0);
                states[m + 1] = s;
                f(WalkEvent::Descend {
                    level: m,
                    child: 0,
                    draw: s.gaussian(Stream::Gaussian),
                });
            }
        }
    }

    let mut leaves = 0u64;
    loop {
        let parent = states[bottom];
        let mut c = 0u32;
        while c < d {
            let block = BATCH.min((d - c) as usize);
            for (k, slot) in draws[..block].iter_mut().enumerate() {
                *slot = parent.child(c + k as u32).gaussian(Stream::Gaussian);
            }
            for (k, &draw) in draws[..block].iter().enumerate() {
                f(WalkEvent::Descend {
                    level: bottom,
                    child: c + k as u32,
                    draw,
                });
                f(WalkEvent::Leaf);
            }
            c += block as u32;
        }
        leaves += d as u64;

        // advance the base-d parent counter and re-descend the changed suffix
        let mut level = bottom;
        while level > 0 && path[level - 1] == last {
            path[level - 1] = 0;
            level -= 1;
        }
        if level == 0 {
            return leaves;
        }
        let level = level - 1;
        path[level] += 1;
        let s = states[level].child(path[level]);
        states[level + 1] = s;
        f(WalkEvent::Descend {
            level,
            child: path[level],
            draw: s.gaussian(Stream::Gaussian),
        });
        for m in level + 1..bottom {
            let s = states[m].child(0);
            states[m + 1] = s;
            f(WalkEvent::Descend {
                level: m,
                child: 0,
                draw: s.gaussian(Stream::Gaussian),
            });
        }
    }
}

/// Shape-substream attempt index that satisfies the survival mode.
fn resolve_attempt(
    tree: &TreeStream,
    shape_cdf: &Option<Vec<f64>>,
    root: SplitMix,
) -> Result<u64> {
    match tree.mode {
        SurvivalMode::Raw => Ok(0),
        SurvivalMode::Conditioned => {
            let depth = tree.depth as usize;
            if depth == 0 || matches!(tree.law, OffspringLaw::DeterministicD { .. }) {
                return Ok(0);
            }
            let cdf = shape_cdf.as_ref().expect("random law has a shape CDF");
            let mut attempt = 0;
            loop {
                if shape_survives(cdf, depth, root, attempt) {
                    return Ok(attempt);
                }
                attempt += 1;
                if attempt >= MAX_SURVIVAL_RESAMPLES {
                    return Err(Error::SurvivalConditioningFailed(attempt));
                }
            }
        }
    }
}

/// Shape-only depth-first probe: does generation `depth` get populated?
fn shape_survives(cdf: &[f64], depth: usize, root: SplitMix, attempt: u64) -> bool {
    let mut states = vec![root; depth];
    let mut count = vec![0u32; depth];
    let mut next = vec![0u32; depth];
    count[0] = sample_from_cdf(cdf, root.shape_uniform(attempt));
    let mut g = 0usize;
    loop {
        if next[g] < count[g] {
            let c = next[g];
            next[g] += 1;
            let s = states[g].child(c);
            if g + 1 == depth {
                return true;
            }
            states[g + 1] = s;
            count[g + 1] = sample_from_cdf(cdf, s.shape_uniform(attempt));
            next[g + 1] = 0;
            g += 1;
        } else if g == 0 {
            return false;
        } else {
            g -= 1;
        }
    }
}
