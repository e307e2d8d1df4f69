//! Seeds, pseudorandom expansion and deterministic samplers.
//!
//! All randomness in this crate flows through [`BitStream`], which either
//! wraps a finite expanded buffer (decoding a transmitted seed) or an
//! unbounded keyed generator (client-side entropy). Samplers consume bits
//! in a fixed documented order, so a server re-expanding a seed
//! reproduces the client's draw bit for bit.
//!
//! Bit order convention: bit i of a byte sequence is bit (i % 8) of byte
//! (i / 8), i.e. bytes fill from the least significant bit up, and
//! multi-bit reads assemble little-endian integers.

use crate::error::{Error, Result};
use crate::numeric::normal_quantile;
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

/// Maximum seed width in bits. ChaCha keys are 256 bits, and wider seeds
/// buy nothing.
pub const MAX_SEED_BITS: u32 = 256;

/// A transmitted seed: a fixed-width string of `bits` bits.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Seed {
    bytes: Vec<u8>,
    bits: u32,
}

impl Seed {
    /// Wraps raw bytes as a seed of the given width. The byte length must
    /// match ceil(bits / 8) and unused high bits must be zero.
    pub fn from_bytes(bytes: Vec<u8>, bits: u32) -> Result<Self> {
        let want = Self::byte_len(bits);
        if bytes.len() != want {
            return Err(Error::WidthMismatch { expected: bits, got: 8 * bytes.len() as u32 });
        }
        if bits % 8 != 0 {
            let mask = !0u8 << (bits % 8);
            if let Some(last) = bytes.last() {
                if last & mask != 0 {
                    return Err(Error::InvalidParams(
                        "seed has nonzero bits past its declared width".into(),
                    ));
                }
            }
        }
        Ok(Seed { bytes, bits })
    }

    /// Seed whose bit pattern is the little-endian encoding of `index`.
    /// Requires bits <= 64 and index < 2^bits.
    pub fn from_index(index: u64, bits: u32) -> Result<Self> {
        assert!(bits <= 64, "index seeds are limited to 64 bits");
        if bits < 64 && index >= (1u64 << bits) {
            return Err(Error::IndexOutOfRange { index, domain: 1u64 << bits });
        }
        let bytes = index.to_le_bytes()[..Self::byte_len(bits)].to_vec();
        Ok(Seed { bytes, bits })
    }

    /// The integer whose little-endian encoding equals this seed, when the
    /// width permits one.
    pub fn index(&self) -> Option<u64> {
        if self.bits > 64 {
            return None;
        }
        let mut buf = [0u8; 8];
        buf[..self.bytes.len()].copy_from_slice(&self.bytes);
        Some(u64::from_le_bytes(buf))
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn byte_len(bits: u32) -> usize {
        bits.div_ceil(8) as usize
    }
}

impl std::fmt::Debug for Seed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Seed({}b:", self.bits)?;
        for b in &self.bytes {
            write!(f, "{b:02x}")?;
        }
        write!(f, ")")
    }
}

/// Generator families a seed can be expanded with.
///
/// `ChaCha20` is the production choice: the seed keys a counter-mode
/// stream built from a well-studied cryptographic permutation. `Identity`
/// returns the seed itself (seed width must equal output width) and
/// `Constant` ignores the seed entirely; both exist for analysis and for
/// adversarial tests.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrgFamily {
    Identity,
    ChaCha20,
    Constant,
}

impl PrgFamily {
    /// Stable one-byte identifier used by the wire header.
    pub fn id(&self) -> u8 {
        match self {
            PrgFamily::Identity => 0,
            PrgFamily::ChaCha20 => 1,
            PrgFamily::Constant => 2,
        }
    }

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            0 => Ok(PrgFamily::Identity),
            1 => Ok(PrgFamily::ChaCha20),
            2 => Ok(PrgFamily::Constant),
            other => Err(Error::WireFormat(format!("unknown generator family {other}"))),
        }
    }
}

/// Claimed strength of a generator against bounded distinguishers, carried
/// as documentation only; nothing in this crate can verify it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Strength {
    /// Distinguisher time bound.
    pub time: f64,
    /// Advantage bound achievable within that time.
    pub advantage: f64,
}

/// A seed-expansion scheme: seed width, output width and family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrgSpec {
    pub seed_bits: u32,
    pub output_bits: u64,
    pub family: PrgFamily,
    pub assumed_strength: Option<Strength>,
}

impl PrgSpec {
    pub fn identity(bits: u32) -> Result<Self> {
        Self::new(bits, bits as u64, PrgFamily::Identity)
    }

    pub fn chacha(seed_bits: u32, output_bits: u64) -> Result<Self> {
        Self::new(seed_bits, output_bits, PrgFamily::ChaCha20)
    }

    pub fn constant(seed_bits: u32, output_bits: u64) -> Result<Self> {
        Self::new(seed_bits, output_bits, PrgFamily::Constant)
    }

    pub fn new(seed_bits: u32, output_bits: u64, family: PrgFamily) -> Result<Self> {
        if seed_bits == 0 || seed_bits > MAX_SEED_BITS {
            return Err(Error::InvalidParams(format!(
                "seed width {seed_bits} not in [1, {MAX_SEED_BITS}]"
            )));
        }
        if output_bits == 0 {
            return Err(Error::InvalidParams("output width must be positive".into()));
        }
        if family == PrgFamily::Identity && output_bits != seed_bits as u64 {
            return Err(Error::InvalidParams(format!(
                "identity expansion needs equal widths, got {seed_bits} -> {output_bits}"
            )));
        }
        Ok(PrgSpec { seed_bits, output_bits, family, assumed_strength: None })
    }

    pub fn seed_byte_len(&self) -> usize {
        Seed::byte_len(self.seed_bits)
    }
}

/// A finite bit string produced by expanding a seed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitBuf {
    bytes: Vec<u8>,
    bits: u64,
}

impl BitBuf {
    pub fn new(bytes: Vec<u8>, bits: u64) -> Self {
        assert_eq!(bytes.len() as u64, bits.div_ceil(8));
        BitBuf { bytes, bits }
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn bit(&self, i: u64) -> bool {
        assert!(i < self.bits);
        (self.bytes[(i / 8) as usize] >> (i % 8)) & 1 == 1
    }
}

/// Expands a seed into its `output_bits`-bit string.
pub fn expand(seed: &Seed, spec: &PrgSpec) -> Result<BitBuf> {
    if seed.bits() != spec.seed_bits {
        return Err(Error::WidthMismatch { expected: spec.seed_bits, got: seed.bits() });
    }
    let n_bytes = spec.output_bits.div_ceil(8) as usize;
    let mut bytes = match spec.family {
        PrgFamily::Identity => seed.bytes().to_vec(),
        PrgFamily::Constant => vec![0u8; n_bytes],
        PrgFamily::ChaCha20 => {
            let mut key = [0u8; 32];
            key[..seed.bytes().len()].copy_from_slice(seed.bytes());
            let mut rng = ChaCha20Rng::from_seed(key);
            let mut out = vec![0u8; n_bytes];
            rng.fill_bytes(&mut out);
            out
        }
    };
    // Zero any padding bits past the declared width.
    if spec.output_bits % 8 != 0 {
        let mask = !(!0u8 << (spec.output_bits % 8));
        if let Some(last) = bytes.last_mut() {
            *last &= mask;
        }
    }
    Ok(BitBuf::new(bytes, spec.output_bits))
}

enum Source {
    Buf { bytes: Vec<u8>, bits: u64, pos: u64 },
    Rng { rng: Box<ChaCha20Rng>, cache: u64, cache_bits: u32 },
}

/// Sequential bit source with deterministic samplers on top.
pub struct BitStream {
    src: Source,
}

impl BitStream {
    /// Finite stream over an expanded buffer. Reads past the end fail with
    /// [`Error::StreamExhausted`].
    pub fn from_buf(buf: BitBuf) -> Self {
        BitStream { src: Source::Buf { bits: buf.bits, bytes: buf.bytes, pos: 0 } }
    }

    /// Expands `seed` and streams the result.
    pub fn from_seed(seed: &Seed, spec: &PrgSpec) -> Result<Self> {
        Ok(Self::from_buf(expand(seed, spec)?))
    }

    /// Unbounded keyed entropy stream. Distinct `stream_id` values give
    /// independent streams under the same key.
    pub fn entropy(key: [u8; 32], stream_id: u64) -> Self {
        let mut rng = ChaCha20Rng::from_seed(key);
        rng.set_stream(stream_id);
        BitStream { src: Source::Rng { rng: Box::new(rng), cache: 0, cache_bits: 0 } }
    }

    /// Bits remaining, when the source is finite.
    pub fn remaining(&self) -> Option<u64> {
        match &self.src {
            Source::Buf { bits, pos, .. } => Some(bits - pos),
            Source::Rng { .. } => None,
        }
    }

    /// Reads `n` bits (n <= 64) and assembles them little-endian: the first
    /// bit read becomes the least significant bit of the result.
    pub fn take_bits(&mut self, n: u32) -> Result<u64> {
        assert!(n <= 64);
        if n == 0 {
            return Ok(0);
        }
        match &mut self.src {
            Source::Buf { bytes, bits, pos } => {
                let start = *pos;
                let end = start + n as u64;
                if end > *bits {
                    return Err(Error::StreamExhausted);
                }
                // Load the covering byte window (at most 9 bytes for a
                // 64-bit read at any offset) and shift it into place.
                let first = (start / 8) as usize;
                let last = end.div_ceil(8) as usize;
                let mut acc: u128 = 0;
                for (i, &byte) in bytes[first..last].iter().enumerate() {
                    acc |= (byte as u128) << (8 * i);
                }
                let shifted = acc >> (start % 8);
                let v = if n == 64 {
                    shifted as u64
                } else {
                    (shifted as u64) & ((1u64 << n) - 1)
                };
                *pos = end;
                Ok(v)
            }
            Source::Rng { rng, cache, cache_bits } => {
                let mut v = 0u64;
                let mut got = 0u32;
                while got < n {
                    if *cache_bits == 0 {
                        *cache = rng.next_u64();
                        *cache_bits = 64;
                    }
                    let take = (n - got).min(*cache_bits);
                    let chunk = if take == 64 { *cache } else { *cache & ((1u64 << take) - 1) };
                    v |= chunk << got;
                    *cache = if take == 64 { 0 } else { *cache >> take };
                    *cache_bits -= take;
                    got += take;
                }
                Ok(v)
            }
        }
    }

    pub fn take_bit(&mut self) -> Result<bool> {
        Ok(self.take_bits(1)? == 1)
    }

    /// Draws a seed of the given width.
    pub fn take_seed(&mut self, bits: u32) -> Result<Seed> {
        let n_bytes = Seed::byte_len(bits);
        let mut bytes = vec![0u8; n_bytes];
        let mut done = 0u32;
        for chunk in bytes.chunks_mut(8) {
            let n = (bits - done).min(8 * chunk.len() as u32);
            let v = self.take_bits(n)?;
            chunk.copy_from_slice(&v.to_le_bytes()[..chunk.len()]);
            done += n;
            if done == bits {
                break;
            }
        }
        Seed::from_bytes(bytes, bits)
    }

    /// Uniform draw from {0, 1, ..., m-1} by rejection on the smallest
    /// covering power of two, so there is no modulo bias. A power-of-two m
    /// never rejects; m = 1 consumes nothing.
    pub fn uniform_mod(&mut self, m: u64) -> Result<u64> {
        assert!(m >= 1, "uniform_mod needs a positive modulus");
        if m == 1 {
            return Ok(0);
        }
        let k = 64 - (m - 1).leading_zeros();
        loop {
            let v = self.take_bits(k)?;
            if v < m {
                return Ok(v);
            }
        }
    }

    /// Bernoulli(p) for a real p, consuming 64 bits (none in the
    /// degenerate cases p <= 0 and p >= 1). The sampled law matches p to
    /// within 2^-64 plus the rounding error of p itself.
    pub fn bernoulli(&mut self, p: f64) -> Result<bool> {
        if p <= 0.0 {
            return Ok(false);
        }
        if p >= 1.0 {
            return Ok(true);
        }
        let threshold = (p * 1.844_674_407_370_955_2e19) as u128; // p * 2^64
        Ok((self.take_bits(64)? as u128) < threshold)
    }

    /// Bernoulli(num / den) sampled exactly via a uniform residue.
    pub fn bernoulli_ratio(&mut self, num: u64, den: u64) -> Result<bool> {
        assert!(den >= 1);
        if num == 0 {
            return Ok(false);
        }
        if num >= den {
            return Ok(true);
        }
        Ok(self.uniform_mod(den)? < num)
    }

    /// Uniform draw from [0, 1) with 53-bit resolution.
    pub fn uniform_f64(&mut self) -> Result<f64> {
        Ok(self.take_bits(53)? as f64 * (1.0 / 9_007_199_254_740_992.0))
    }

    /// Standard normal draw by the quantile transform of a 52-bit uniform
    /// offset to the cell center, so the argument is strictly inside
    /// (0, 1). Consumes exactly 64 bits.
    pub fn normal(&mut self) -> Result<f64> {
        let v = self.take_bits(64)? >> 12;
        let u = (v as f64 + 0.5) * (1.0 / 4_503_599_627_370_496.0);
        Ok(normal_quantile(u))
    }

    /// Uniform point on the unit sphere in R^d, from d normal draws
    /// (exactly 64 d bits). The all-zero degeneracy is unreachable in
    /// practice but falls back to the first basis vector to keep the bit
    /// budget fixed.
    pub fn unit_vector(&mut self, d: u32) -> Result<Vec<f64>> {
        assert!(d >= 1);
        let mut v = Vec::with_capacity(d as usize);
        for _ in 0..d {
            v.push(self.normal()?);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-300 {
            let mut e = vec![0.0; d as usize];
            e[0] = 1.0;
            return Ok(e);
        }
        for x in &mut v {
            *x /= norm;
        }
        Ok(v)
    }
}
