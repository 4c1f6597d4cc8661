//! Counter-based splittable random numbers keyed by tree addresses.
//!
//! Every draw is a pure function of `(seed, vertex path, stream tag)`: the
//! 64-bit state is folded down the path with one SplitMix-style finalizer per
//! edge, and a draw hashes the state with a per-stream constant. This makes
//! the per-vertex Gaussian field addressable — identical across runs,
//! platforms, and thread schedules — which is what couples the homogeneous
//! and profile-weighted partition functions replica by replica, and lets
//! survival conditioning resample the tree shape without touching the
//! weights of surviving vertices.
//!
//! Scheme (stable; changing any constant changes every result):
//!
//! ```text
//! root(seed)        = mix64(seed ^ 0x9E3779B97F4A7C15)
//! child(state, c)   = mix64(state ^ (c + 1) * 0xD1B54A32D192ED03)
//! draw(state, tag)  = mix64(state ^ tag)        tag: gaussian | tree_shape
//! shape salt        = attempt * 0x8CB92BA72F3D8DD7 xor-ed in before mixing
//! replica(seed, r)  = mix64(seed ^ r * 0xA24BAED4963EE407)
//! ```
//!
//! `mix64` is the SplitMix64 finalizer (a bijection on u64), so two keys
//! collide only if their folded states collide: for N distinct vertices the
//! collision probability is bounded by the birthday estimate N^2 / 2^65.
//! Uniforms map the high 53 bits into the open interval (0,1); Gaussians are
//! the inverse normal CDF of that uniform (Wichura's AS241, |error| < 1e-15),
//! so every key yields exactly one finite variate and no rejection loop or
//! shared state is involved.

/// Which substream of a vertex's randomness a draw comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Stream {
    /// Offspring-count draws (tree shape).
    TreeShape,
    /// Per-vertex standard-normal displacement weights.
    Gaussian,
}

const ROOT_TAG: u64 = 0x9E37_79B9_7F4A_7C15;
const CHILD_TAG: u64 = 0xD1B5_4A32_D192_ED03;
const GAUSSIAN_TAG: u64 = 0x8BB8_4B93_962E_ACC9;
const SHAPE_TAG: u64 = 0x2545_F491_4F6C_DD1D;
const SHAPE_SALT: u64 = 0x8CB9_2BA7_2F3D_8DD7;
const REPLICA_TAG: u64 = 0xA24B_AED4_963E_E407;

#[inline(always)]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline(always)]
fn to_unit_open(bits: u64) -> f64 {
    // high 52 bits, centered on cell midpoints: (k + 0.5) / 2^52 lies in
    // (0,1) exactly for every k, with no rounding up to 1.0 at the top
    ((bits >> 12) as f64 + 0.5) * (1.0 / 4_503_599_627_370_496.0)
}

/// Folded per-vertex RNG state. Copy-cheap; all methods are pure.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitMix(pub u64);

impl SplitMix {
    pub fn root(seed: u64) -> Self {
        SplitMix(mix64(seed ^ ROOT_TAG))
    }

    /// Seed for an independent replica of the whole tree.
    pub fn replica_seed(base_seed: u64, replica: u64) -> u64 {
        mix64(base_seed ^ replica.wrapping_mul(REPLICA_TAG))
    }

    #[inline(always)]
    pub fn child(self, index: u32) -> Self {
        SplitMix(mix64(
            self.0 ^ (index as u64 + 1).wrapping_mul(CHILD_TAG),
        ))
    }

    #[inline(always)]
    pub fn uniform(self, stream: Stream) -> f64 {
        let tag = match stream {
            Stream::TreeShape => SHAPE_TAG,
            Stream::Gaussian => GAUSSIAN_TAG,
        };
        to_unit_open(mix64(self.0 ^ tag))
    }

    /// Standard-normal draw for this vertex state on the given stream.
    #[inline(always)]
    pub fn gaussian(self, stream: Stream) -> f64 {
        inverse_normal_cdf(self.uniform(stream))
    }

    /// Shape-stream uniform for survival-conditioning attempt `attempt`.
    /// Attempt 0 matches no salt, so raw and conditioned modes agree on the
    /// first sampled shape.
    #[inline(always)]
    pub fn shape_uniform(self, attempt: u64) -> f64 {
        to_unit_open(mix64(self.0 ^ SHAPE_TAG ^ attempt.wrapping_mul(SHAPE_SALT)))
    }
}

/// Address of one draw: seed, vertex path from the root, substream.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SplitKey {
    pub seed: u64,
    pub path: Vec<u32>,
    pub stream: Stream,
}

impl SplitKey {
    pub fn new(seed: u64, path: Vec<u32>, stream: Stream) -> Self {
        SplitKey { seed, path, stream }
    }

    fn state(&self) -> SplitMix {
        let mut s = SplitMix::root(self.seed);
        for &c in &self.path {
            s = s.child(c);
        }
        s
    }
}

/// Deterministic standard-normal variate for a key; same key, same bits.
pub fn gaussian_at(key: &SplitKey) -> f64 {
    key.state().gaussian(key.stream)
}

/// Inverse standard-normal CDF (Wichura's algorithm AS241, PPND16).
/// Absolute error below 1e-15 over (0,1); endpoints are rejected by debug
/// assertion since the uniform generator never produces them.
pub fn inverse_normal_cdf(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0, "p must lie strictly in (0,1)");
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = (((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_812_8e4) * r
            + 6.726_577_092_700_870_1e4)
            * r
            + 4.592_195_393_154_987_1e4)
            * r
            + 1.373_169_376_550_946_1e4)
            * r
            + 1.971_590_950_306_551_4e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_6)
            * q;
        let den = ((((((5.226_495_278_852_854_6e3 * r + 2.872_908_573_572_194_3e4) * r
            + 3.930_789_580_009_271e4)
            * r
            + 2.121_379_430_158_659_6e4)
            * r
            + 5.394_196_021_424_751_1e3)
            * r
            + 6.871_870_074_920_579e2)
            * r
            + 4.231_333_070_160_091e1)
            * r
            + 1.0;
        return num / den;
    }

    let r = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = (((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506_1e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_6)
            * r
            + 5.769_497_221_460_691_4)
            * r
            + 4.630_337_846_156_545_3)
            * r
            + 1.423_437_110_749_683_6)
            * 1.0;
        let den = ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
            + 1.519_866_656_361_645_7e-2)
            * r
            + 1.481_039_764_274_800_8e-1)
            * r
            + 6.897_673_349_851e-1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_758_8)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = (((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_3e-2)
            * r
            + 2.965_605_718_285_048_9e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114_4)
            * r
            + 6.657_904_643_501_103_8)
            * 1.0;
        let den = ((((((2.044_263_103_389_939_8e-15 * r + 1.421_511_758_316_445_9e-7) * r
            + 1.846_318_317_510_054_7e-5)
            * r
            + 7.868_691_311_456_132_6e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 1.369_298_809_227_358e-1)
            * r
            + 5.998_322_065_558_879_4e-1)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}
