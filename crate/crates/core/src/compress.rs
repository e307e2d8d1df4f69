//! Seed compression of local randomizers by rejection sampling.
//!
//! A local randomizer R is described here by its density with respect to
//! a fixed input-independent reference distribution: a function
//! ratio(x, y) with E_ref[ratio(x, .)] = 1. Instead of sampling y and
//! sending it, the client draws random seeds, expands each through a
//! pseudorandom generator into a candidate reference sample, and accepts
//! a seed with probability ratio(x, y) / e^eps. The accepted seed is the
//! whole message; the server re-expands it to recover y.
//!
//! Key facts driving the tests in this module and in `tests/`:
//!
//! * Each iteration accepts with probability exactly e^-eps when the
//!   generator output matches the reference distribution, so
//!   ceil(e^eps ln(1/gamma)) iterations leave at most gamma probability
//!   of falling through to the final draw.
//! * The law of the accepted seed weights every seed s proportionally to
//!   ratio(x, decode(s)), which is what makes exact enumeration of small
//!   seed spaces a usable oracle.
//! * Privacy degrades gracefully with generator quality: a generator
//!   whose decoded output fools all threshold tests on the density up to
//!   advantage beta < 1 / (2 e^eps) yields deletion privacy
//!   eps + 2 e^eps beta, and an arbitrary generator still yields 2 eps.

use std::collections::HashMap;
use std::hash::Hash;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::randcore::{BitBuf, BitStream, PrgSpec, Seed};

/// Which neighboring relation the privacy statement refers to: deletion
/// compares against an input-free run, replacement against another input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrivacyVariant {
    Deletion,
    Replacement,
}

type RefSampleFn<Y> = dyn Fn(&mut BitStream) -> Result<Y> + Send + Sync;
type RatioFn<X, Y> = dyn Fn(&X, &Y) -> f64 + Send + Sync;

/// A local randomizer in density form: a reference sampler consuming at
/// most `t` bits, and the density of R(x) with respect to that reference.
pub struct RandomizerSpec<X, Y> {
    t: u64,
    eps: f64,
    delta: f64,
    variant: PrivacyVariant,
    ref_sample: Arc<RefSampleFn<Y>>,
    density_ratio: Arc<RatioFn<X, Y>>,
}

impl<X, Y> Clone for RandomizerSpec<X, Y> {
    fn clone(&self) -> Self {
        RandomizerSpec {
            t: self.t,
            eps: self.eps,
            delta: self.delta,
            variant: self.variant,
            ref_sample: Arc::clone(&self.ref_sample),
            density_ratio: Arc::clone(&self.density_ratio),
        }
    }
}

impl<X, Y> RandomizerSpec<X, Y> {
    pub fn new(
        t: u64,
        eps: f64,
        delta: f64,
        variant: PrivacyVariant,
        ref_sample: impl Fn(&mut BitStream) -> Result<Y> + Send + Sync + 'static,
        density_ratio: impl Fn(&X, &Y) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::InvalidParams(format!("eps must be positive, got {eps}")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::InvalidParams(format!("delta must be in [0, 1), got {delta}")));
        }
        if t == 0 {
            return Err(Error::InvalidParams("reference bit budget must be positive".into()));
        }
        Ok(RandomizerSpec {
            t,
            eps,
            delta,
            variant,
            ref_sample: Arc::new(ref_sample),
            density_ratio: Arc::new(density_ratio),
        })
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn variant(&self) -> PrivacyVariant {
        self.variant
    }

    /// Draws one sample from the reference distribution.
    pub fn sample_reference(&self, stream: &mut BitStream) -> Result<Y> {
        (self.ref_sample)(stream)
    }

    /// Density of R(x) at y with respect to the reference distribution.
    pub fn ratio(&self, x: &X, y: &Y) -> f64 {
        (self.density_ratio)(x, y)
    }

    /// Ratio truncated at e^eps; for a pure spec this is the ratio itself.
    pub fn truncated_ratio(&self, x: &X, y: &Y) -> f64 {
        self.ratio(x, y).min(self.eps.exp())
    }

    /// Enumeration check of the declared invariants, for t <= 20:
    /// the raw ratio averages to 1 under the reference, a pure spec stays
    /// inside [e^-eps, e^eps], and the truncated mass is at least
    /// 1 - delta.
    pub fn validate_by_enumeration(&self, probes: &[X]) -> Result<()> {
        let law = self.reference_outcomes()?;
        let e_eps = self.eps.exp();
        for x in probes {
            let mut mean = 0.0;
            let mut trunc_mass = 0.0;
            for (y, w) in &law {
                let r = self.ratio(x, y);
                if r < 0.0 {
                    return Err(Error::InvalidParams(format!("negative density ratio {r}")));
                }
                if self.delta == 0.0 && (r > e_eps * (1.0 + 1e-12) || r < (-self.eps).exp() * (1.0 - 1e-12))
                {
                    return Err(Error::DensityRatioOutOfRange { ratio: r, bound: e_eps });
                }
                mean += w * r;
                trunc_mass += w * r.min(e_eps);
            }
            if (mean - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParams(format!(
                    "density ratio does not average to 1 under the reference: {mean}"
                )));
            }
            if trunc_mass < 1.0 - self.delta - 1e-9 {
                return Err(Error::InvalidParams(format!(
                    "truncated mass {trunc_mass} below 1 - delta"
                )));
            }
        }
        Ok(())
    }

    /// Exact reference law by walking all 2^t input strings. Requires
    /// t <= 20.
    pub fn reference_outcomes(&self) -> Result<Vec<(Y, f64)>> {
        if self.t > 20 {
            return Err(Error::SeedSpaceTooLarge(self.t as u32));
        }
        let n = 1u64 << self.t;
        let w = 1.0 / n as f64;
        let mut out = Vec::with_capacity(n as usize);
        for r in 0..n {
            let bytes = r.to_le_bytes()[..(self.t as usize).div_ceil(8)].to_vec();
            let mut st = BitStream::from_buf(BitBuf::new(bytes, self.t));
            out.push(((self.ref_sample)(&mut st)?, w));
        }
        Ok(out)
    }
}

/// Settings of the rejection loop: the leftover-mass target gamma, the
/// generator, and the iteration cap derived from them.
#[derive(Clone, Debug)]
pub struct CompressionConfig {
    pub gamma: f64,
    pub prg: PrgSpec,
    pub max_iters: u32,
}

impl CompressionConfig {
    /// Iteration cap ceil(e^eps ln(1/gamma)) for a pure randomizer.
    pub fn pure(eps: f64, gamma: f64, prg: PrgSpec) -> Result<Self> {
        Self::with_delta(eps, 0.0, gamma, prg)
    }

    /// Iteration cap ceil(e^eps ln(1/gamma) / (1 - delta)) for an
    /// approximate randomizer, whose truncated acceptance mass can be as
    /// small as (1 - delta) e^-eps per iteration.
    pub fn with_delta(eps: f64, delta: f64, gamma: f64, prg: PrgSpec) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidParams(format!("gamma must be in (0, 1), got {gamma}")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::InvalidParams(format!("delta must be in [0, 1), got {delta}")));
        }
        let raw = eps.exp() * (1.0 / gamma).ln() / (1.0 - delta);
        if !raw.is_finite() || raw > u32::MAX as f64 {
            return Err(Error::InvalidParams(format!(
                "iteration bound overflows: eps={eps} gamma={gamma}"
            )));
        }
        let max_iters = (raw.ceil() as u32).max(1);
        Ok(CompressionConfig { gamma, prg, max_iters })
    }
}

/// Decodes a transmitted seed back into the reference sample it denotes.
pub fn decompress<X, Y>(seed: &Seed, spec: &RandomizerSpec<X, Y>, prg: &PrgSpec) -> Result<Y> {
    if prg.output_bits < spec.t() {
        return Err(Error::InvalidParams(format!(
            "generator produces {} bits but the reference sampler needs {}",
            prg.output_bits,
            spec.t()
        )));
    }
    let mut st = BitStream::from_seed(seed, prg)?;
    spec.sample_reference(&mut st)
}

fn run_rejection<Y>(
    mut draw: impl FnMut(&mut BitStream) -> Result<(Seed, Y)>,
    accept_prob: impl Fn(&Y) -> Result<f64>,
    max_iters: u32,
    entropy: &mut BitStream,
) -> Result<Seed> {
    debug_assert!(max_iters >= 1);
    let mut last = None;
    for _ in 0..max_iters {
        let (seed, y) = draw(entropy)?;
        let p = accept_prob(&y)?;
        if entropy.bernoulli(p.clamp(0.0, 1.0))? {
            return Ok(seed);
        }
        last = Some(seed);
    }
    // All iterations rejected: emit the final draw anyway. This leaves at
    // most gamma of the output mass off-target.
    Ok(last.expect("max_iters >= 1"))
}

/// Compresses one report of a pure randomizer: returns the seed standing
/// in for a sample of R(x). Fails if the declared ratio bound e^eps is
/// violated by more than a 1e-9 relative slack.
pub fn compress_pure<X, Y>(
    x: &X,
    spec: &RandomizerSpec<X, Y>,
    cfg: &CompressionConfig,
    entropy: &mut BitStream,
) -> Result<Seed> {
    if spec.delta() != 0.0 {
        return Err(Error::InvalidParams(
            "compress_pure requires delta = 0; use compress_approx".into(),
        ));
    }
    let e_eps = spec.eps().exp();
    compress_impl(x, spec, cfg, entropy, Some(e_eps))
}

/// Compresses one report of an approximate randomizer. Ratios above
/// e^eps are truncated: their excess mass (at most delta) is what the
/// approximate guarantee already concedes.
pub fn compress_approx<X, Y>(
    x: &X,
    spec: &RandomizerSpec<X, Y>,
    cfg: &CompressionConfig,
    entropy: &mut BitStream,
) -> Result<Seed> {
    compress_impl(x, spec, cfg, entropy, None)
}

fn compress_impl<X, Y>(
    x: &X,
    spec: &RandomizerSpec<X, Y>,
    cfg: &CompressionConfig,
    entropy: &mut BitStream,
    ratio_bound: Option<f64>,
) -> Result<Seed> {
    let e_eps = spec.eps().exp();
    let prg = cfg.prg;
    run_rejection(
        |ent| {
            let seed = ent.take_seed(prg.seed_bits)?;
            let y = decompress(&seed, spec, &prg)?;
            Ok((seed, y))
        },
        |y| {
            let r = spec.ratio(x, y);
            if r < 0.0 {
                return Err(Error::DensityRatioOutOfRange { ratio: r, bound: e_eps });
            }
            if let Some(bound) = ratio_bound {
                if r > bound * (1.0 + 1e-9) {
                    return Err(Error::DensityRatioOutOfRange { ratio: r, bound });
                }
            }
            Ok(r.min(e_eps) / e_eps)
        },
        cfg.max_iters,
        entropy,
    )
}

/// A generator whose seed domain is small enough to walk exhaustively.
/// Seed domains need not be powers of two.
pub trait EnumerableGenerator<Y> {
    fn seed_count(&self) -> u64;
    fn decode_index(&self, index: u64) -> Y;
}

/// Finite generator backed by an explicit table of reference samples;
/// seed i decodes to entry i. Seeds are serialized in ceil(log2 N) bits.
#[derive(Clone, Debug)]
pub struct TableGenerator<Y> {
    entries: Vec<Y>,
    seed_bits: u32,
}

impl<Y> TableGenerator<Y> {
    pub fn new(entries: Vec<Y>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidParams("table generator needs at least one entry".into()));
        }
        let n = entries.len() as u64;
        let seed_bits = if n == 1 { 0 } else { 64 - (n - 1).leading_zeros() };
        Ok(TableGenerator { entries, seed_bits })
    }

    pub fn len(&self) -> u64 {
        self.entries.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn seed_bits(&self) -> u32 {
        self.seed_bits
    }

    /// Uniform seed over the table (rejection keeps it exact when the
    /// table size is not a power of two).
    pub fn draw_seed(&self, entropy: &mut BitStream) -> Result<Seed> {
        let idx = entropy.uniform_mod(self.len())?;
        Seed::from_index(idx, self.seed_bits)
    }

    pub fn decode(&self, seed: &Seed) -> Result<&Y> {
        if seed.bits() != self.seed_bits {
            return Err(Error::WidthMismatch { expected: self.seed_bits, got: seed.bits() });
        }
        let idx = seed.index().expect("table seeds are at most 64 bits");
        self.entries
            .get(idx as usize)
            .ok_or(Error::IndexOutOfRange { index: idx, domain: self.len() })
    }

    pub fn entries(&self) -> &[Y] {
        &self.entries
    }
}

impl<Y: Clone> EnumerableGenerator<Y> for TableGenerator<Y> {
    fn seed_count(&self) -> u64 {
        self.len()
    }

    fn decode_index(&self, index: u64) -> Y {
        self.entries[index as usize].clone()
    }
}

/// Builds a finite generator by materializing `n` draws of an arbitrary
/// sampler. With n reference samples, empirical frequencies of any event
/// concentrate around their true mass at the usual 1/sqrt(n) rate, which
/// bounds the fooling gap of the resulting generator.
pub fn empirical_table<Y>(
    mut sampler: impl FnMut(&mut BitStream) -> Result<Y>,
    n: u64,
    stream: &mut BitStream,
) -> Result<TableGenerator<Y>> {
    if n == 0 {
        return Err(Error::InvalidParams("empirical table needs at least one entry".into()));
    }
    let mut entries = Vec::with_capacity(n as usize);
    for _ in 0..n {
        entries.push(sampler(stream)?);
    }
    TableGenerator::new(entries)
}

/// Empirical finite generator for the uniform distribution on the unit
/// sphere in R^d.
pub fn empirical_sphere_prg(
    d: u32,
    n: u64,
    stream: &mut BitStream,
) -> Result<TableGenerator<Vec<f64>>> {
    empirical_table(|st| st.unit_vector(d), n, stream)
}

/// Compresses against a finite table generator instead of a bit-string
/// expander. Same loop and guarantees as [`compress_pure`].
pub fn compress_table<X, Y>(
    x: &X,
    table: &TableGenerator<Y>,
    ratio: impl Fn(&X, &Y) -> f64,
    eps: f64,
    gamma: f64,
    entropy: &mut BitStream,
) -> Result<Seed> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParams(format!("gamma must be in (0, 1), got {gamma}")));
    }
    let e_eps = eps.exp();
    let max_iters = (e_eps * (1.0 / gamma).ln()).ceil().max(1.0) as u32;
    run_rejection(
        |ent| {
            let seed = table.draw_seed(ent)?;
            let idx = seed.index().expect("table seed");
            Ok((seed, idx))
        },
        |&idx| {
            let r = ratio(x, &table.entries()[idx as usize]);
            if r < 0.0 || r > e_eps * (1.0 + 1e-9) {
                return Err(Error::DensityRatioOutOfRange { ratio: r, bound: e_eps });
            }
            Ok(r.min(e_eps) / e_eps)
        },
        max_iters,
        entropy,
    )
}

/// Exact seed laws of the rejection scheme over a finite generator.
#[derive(Clone, Debug)]
pub struct SeedLaws {
    /// Law of the idealized scheme that loops forever: seed s has mass
    /// proportional to its (truncated) density ratio.
    pub seed_law: Vec<f64>,
    /// Law of the truncated loop that gives up after `iterations` rounds
    /// and emits the final draw regardless.
    pub truncated_seed_law: Vec<f64>,
    /// Per-iteration acceptance probability.
    pub accept_prob: f64,
    pub iterations: u32,
}

/// Computes [`SeedLaws`] by walking every seed of a finite generator.
/// `pi` is the density ratio of the compressed input; it is truncated at
/// e^eps internally.
pub fn exact_seed_laws<Y>(
    gen: &dyn EnumerableGenerator<Y>,
    pi: impl Fn(&Y) -> f64,
    eps: f64,
    iterations: u32,
) -> SeedLaws {
    assert!(iterations >= 1);
    let s = gen.seed_count();
    let e_eps = eps.exp();
    let per_seed = 1.0 / s as f64;
    let accepts: Vec<f64> = (0..s)
        .map(|i| {
            let y = gen.decode_index(i);
            (pi(&y).min(e_eps) / e_eps).clamp(0.0, 1.0)
        })
        .collect();
    let accept_prob = accepts.iter().sum::<f64>() * per_seed;

    let total: f64 = accepts.iter().sum();
    let seed_law: Vec<f64> = accepts.iter().map(|a| a / total).collect();

    // Dynamic program over the loop: before round j the loop is still
    // running with probability reach; the last round emits its draw
    // whether or not the coin accepts.
    let mut truncated = vec![0.0; s as usize];
    let mut reach = 1.0;
    for round in 1..=iterations {
        if round < iterations {
            for (t, a) in truncated.iter_mut().zip(&accepts) {
                *t += reach * per_seed * a;
            }
            reach *= 1.0 - accept_prob;
        } else {
            for t in truncated.iter_mut() {
                *t += reach * per_seed;
            }
        }
    }
    SeedLaws { seed_law, truncated_seed_law: truncated, accept_prob, iterations }
}

/// Adapter exposing a bit-seed generator plus reference sampler as an
/// enumerable generator. Requires seed_bits <= 20.
pub struct PrgEnumerator<'a, X, Y> {
    spec: &'a RandomizerSpec<X, Y>,
    prg: &'a PrgSpec,
}

impl<'a, X, Y> PrgEnumerator<'a, X, Y> {
    pub fn new(spec: &'a RandomizerSpec<X, Y>, prg: &'a PrgSpec) -> Result<Self> {
        if prg.seed_bits > 20 {
            return Err(Error::SeedSpaceTooLarge(prg.seed_bits));
        }
        Ok(PrgEnumerator { spec, prg })
    }
}

impl<X, Y> EnumerableGenerator<Y> for PrgEnumerator<'_, X, Y> {
    fn seed_count(&self) -> u64 {
        1u64 << self.prg.seed_bits
    }

    fn decode_index(&self, index: u64) -> Y {
        let seed = Seed::from_index(index, self.prg.seed_bits).expect("index < 2^bits");
        decompress(&seed, self.spec, self.prg).expect("enumeration decode")
    }
}

/// Exact distribution report for one compressed input over a small seed
/// space: seed laws, grouped output laws, and the target laws of the
/// underlying randomizer for comparison.
#[derive(Clone, Debug)]
pub struct ExactDistribution<Y> {
    pub seed_law: Vec<f64>,
    pub truncated_seed_law: Vec<f64>,
    /// Decoded-output law of the idealized scheme.
    pub output_law: Vec<(Y, f64)>,
    /// Decoded-output law of the truncated loop.
    pub truncated_output_law: Vec<(Y, f64)>,
    /// Law of R(x) itself: reference mass times raw ratio.
    pub target_law: Vec<(Y, f64)>,
    /// R(x) with its density truncated at e^eps and renormalized.
    pub truncated_target_law: Vec<(Y, f64)>,
    pub accept_prob: f64,
    pub iterations: u32,
}

fn group_law<Y: Clone + Eq + Hash>(outcomes: &[Y], weights: &[f64]) -> Vec<(Y, f64)> {
    let mut map: HashMap<Y, f64> = HashMap::new();
    for (y, w) in outcomes.iter().zip(weights) {
        *map.entry(y.clone()).or_insert(0.0) += w;
    }
    map.into_iter().collect()
}

/// Walks all seeds (seed_bits <= 20) and all reference strings (t <= 20)
/// to produce the exact laws of the compressed randomizer on input `x`.
pub fn exact_output_distribution<X, Y: Clone + Eq + Hash>(
    x: &X,
    spec: &RandomizerSpec<X, Y>,
    cfg: &CompressionConfig,
) -> Result<ExactDistribution<Y>> {
    let gen = PrgEnumerator::new(spec, &cfg.prg)?;
    let s = gen.seed_count();
    let decoded: Vec<Y> = (0..s).map(|i| gen.decode_index(i)).collect();
    let laws = exact_seed_laws(&gen, |y| spec.ratio(x, y), spec.eps(), cfg.max_iters);

    let output_law = group_law(&decoded, &laws.seed_law);
    let truncated_output_law = group_law(&decoded, &laws.truncated_seed_law);

    let reference = spec.reference_outcomes()?;
    let e_eps = spec.eps().exp();
    let mut target: HashMap<Y, f64> = HashMap::new();
    let mut trunc_target: HashMap<Y, f64> = HashMap::new();
    for (y, w) in &reference {
        let r = spec.ratio(x, y);
        *target.entry(y.clone()).or_insert(0.0) += w * r;
        *trunc_target.entry(y.clone()).or_insert(0.0) += w * r.min(e_eps);
    }
    let trunc_mass: f64 = trunc_target.values().sum();
    let truncated_target_law =
        trunc_target.into_iter().map(|(y, w)| (y, w / trunc_mass)).collect();

    Ok(ExactDistribution {
        seed_law: laws.seed_law,
        truncated_seed_law: laws.truncated_seed_law,
        output_law,
        truncated_output_law,
        target_law: target.into_iter().collect(),
        truncated_target_law,
        accept_prob: laws.accept_prob,
        iterations: laws.iterations,
    })
}

/// Total variation distance between two finite laws over the same space.
/// Outcomes absent from one law count with mass zero.
pub fn total_variation<Y: Clone + Eq + Hash>(a: &[(Y, f64)], b: &[(Y, f64)]) -> f64 {
    let mut diff: HashMap<Y, f64> = HashMap::new();
    for (y, w) in a {
        *diff.entry(y.clone()).or_insert(0.0) += w;
    }
    for (y, w) in b {
        *diff.entry(y.clone()).or_insert(0.0) -= w;
    }
    0.5 * diff.values().map(|d| d.abs()).sum::<f64>()
}

/// Result of a fooling-gap measurement.
#[derive(Clone, Copy, Debug)]
pub struct GapEstimate {
    /// Largest observed discrepancy over all probe inputs and thresholds.
    pub gap: f64,
    /// 95% confidence half-width (zero when both sides were enumerated).
    pub half_width: f64,
    pub exact: bool,
}

/// Discrepancy of one probe input between two weighted outcome sets under
/// all threshold tests `ratio >= theta`.
pub fn fooling_gap_for_laws<Y>(
    pi: impl Fn(&Y) -> f64,
    thetas: &[f64],
    gen_law: &[(Y, f64)],
    ref_law: &[(Y, f64)],
) -> f64 {
    let tail = |law: &[(Y, f64)], theta: f64| -> f64 {
        law.iter().filter(|(y, _)| pi(y) >= theta).map(|(_, w)| w).sum()
    };
    let mut gap: f64 = 0.0;
    for &theta in thetas {
        gap = gap.max((tail(gen_law, theta) - tail(ref_law, theta)).abs());
    }
    gap
}

/// Measures how well the generator's decoded output imitates the
/// reference distribution under threshold tests on the density ratio,
/// the statistic that controls the privacy of the compressed scheme.
///
/// Sides small enough to enumerate (seed_bits <= 20, t <= 20) are walked
/// exactly; otherwise `samples` Monte Carlo draws seeded by `master_seed`
/// are used and the 95% confidence half-width is reported. When `thetas`
/// is `None`, exact sides test every breakpoint of the ratio and sampled
/// sides use a 256-point uniform grid on [0, e^eps].
pub fn estimate_fooling_gap<X, Y>(
    spec: &RandomizerSpec<X, Y>,
    prg: &PrgSpec,
    probe_inputs: &[X],
    thetas: Option<&[f64]>,
    samples: u64,
    master_seed: u64,
) -> Result<GapEstimate> {
    if probe_inputs.is_empty() {
        return Err(Error::InvalidParams("need at least one probe input".into()));
    }
    let e_eps = spec.eps().exp();

    // Generator side.
    let gen_exact = prg.seed_bits <= 20;
    let gen_side: Vec<(Y, f64)> = if gen_exact {
        let n = 1u64 << prg.seed_bits;
        let w = 1.0 / n as f64;
        (0..n)
            .map(|i| {
                let seed = Seed::from_index(i, prg.seed_bits).expect("in range");
                Ok((decompress(&seed, spec, prg)?, w))
            })
            .collect::<Result<_>>()?
    } else {
        if samples == 0 {
            return Err(Error::InvalidParams("sampled gap estimate needs samples > 0".into()));
        }
        let mut ent = BitStream::entropy(key_for(master_seed), 0);
        let w = 1.0 / samples as f64;
        (0..samples)
            .map(|_| {
                let seed = ent.take_seed(prg.seed_bits)?;
                Ok((decompress(&seed, spec, prg)?, w))
            })
            .collect::<Result<_>>()?
    };

    // Reference side.
    let ref_exact = spec.t() <= 20;
    let ref_side: Vec<(Y, f64)> = if ref_exact {
        spec.reference_outcomes()?
    } else {
        if samples == 0 {
            return Err(Error::InvalidParams("sampled gap estimate needs samples > 0".into()));
        }
        let mut ent = BitStream::entropy(key_for(master_seed), 1);
        let w = 1.0 / samples as f64;
        (0..samples).map(|_| Ok((spec.sample_reference(&mut ent)?, w))).collect::<Result<_>>()?
    };

    let exact = gen_exact && ref_exact;
    let mut gap: f64 = 0.0;
    for x in probe_inputs {
        let pi = |y: &Y| spec.ratio(x, y).min(e_eps);
        let grid: Vec<f64>;
        let local_thetas: &[f64] = match thetas {
            Some(t) => t,
            None if exact => {
                // Breakpoints: the tail probability only changes at
                // attained ratio values.
                let mut vals: Vec<f64> = gen_side
                    .iter()
                    .map(|(y, _)| pi(y))
                    .chain(ref_side.iter().map(|(y, _)| pi(y)))
                    .collect();
                vals.sort_by(|a, b| a.partial_cmp(b).expect("finite ratios"));
                vals.dedup();
                grid = vals;
                &grid
            }
            None => {
                grid = (0..256).map(|i| e_eps * i as f64 / 255.0).collect();
                &grid
            }
        };
        gap = gap.max(fooling_gap_for_laws(pi, local_thetas, &gen_side, &ref_side));
    }

    // Dvoretzky-Kiefer-Wolfowitz bound at 95% per sampled side.
    let dkw = |n: u64| ((2.0f64 / 0.05).ln() / (2.0 * n as f64)).sqrt();
    let mut half_width = 0.0;
    if !gen_exact {
        half_width += dkw(samples);
    }
    if !ref_exact {
        half_width += dkw(samples);
    }
    Ok(GapEstimate { gap, half_width, exact })
}

fn key_for(master_seed: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    key
}
