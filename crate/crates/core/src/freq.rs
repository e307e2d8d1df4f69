//! Frequency estimation over a domain [k] with one-bit-per-coordinate
//! randomization.
//!
//! The plain baseline sends k independently randomized bits: the bit at
//! the client's own index is Bern(alpha1), every other bit Bern(alpha0).
//! The compressed scheme replaces those k bits by a single random affine
//! function phi over a prime field: the report for coordinate j is
//! bool(phi(z(j))) where z(j) embeds j into the field (or into GF(q)^d
//! for small q) and bool is a fixed threshold test. Because the affine
//! family is pairwise independent, every coordinate the client does not
//! hold sees an exactly Bern(alpha0) bit, and any two coordinates are
//! exactly independent — which is all the variance analysis uses. The
//! whole report costs (d+1) field elements instead of k bits.
//!
//! Aggregation debiases bit sums per coordinate:
//! c~_j = (sum_i bit_ij - alpha0 n) / (alpha1 - alpha0).

use std::collections::HashMap;

use serde::Serialize;

use crate::compress::EnumerableGenerator;
use crate::error::{Error, Result};
use crate::field::{find_prime, is_prime, PrimeField};
use crate::randcore::BitStream;

/// Which privacy notion the parameter choice targets.
///
/// The symmetric choice alpha1 = 1 - alpha0 makes the report's law on
/// the held coordinate the mirror of the others and targets the
/// input-free (deletion) comparison. The asymmetric choice pins
/// alpha1 = 1/2 and targets the pairwise (replacement) comparison.
/// Both realize their bound at exp of ln((q - a0)/a0) for threshold a0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RapporVariant {
    DeletionSymmetric,
    ReplacementAsymmetric,
}

/// Scheme parameters: domain size k, the prime modulus q, the embedding
/// dimension d (1 means indices are used as field elements directly),
/// the integer threshold a0 defining alpha0 = a0/q, and the flip
/// probabilities implied by the variant.
#[derive(Clone, Debug, Serialize)]
pub struct RapporParams {
    k: u64,
    modulus: u64,
    dim: u32,
    threshold: u64,
    variant: RapporVariant,
    requested_eps: f64,
    realized_eps: f64,
}

/// One report: the coefficients (phi_0, ..., phi_d) of an affine
/// function over the parameter field, intercept first.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AffineFn {
    pub coeffs: Vec<u64>,
}

impl AffineFn {
    pub fn dim(&self) -> u32 {
        (self.coeffs.len() - 1) as u32
    }
}

/// Debiased count estimates for all of [k].
#[derive(Clone, Debug)]
pub struct CountEstimate {
    pub estimates: Vec<f64>,
    pub n: u64,
}

/// Rounds the threshold up to the least integer with
/// (q - a0)/a0 <= e^eps, i.e. the coarsest alpha0 = a0/q respecting the
/// budget. The subtraction guards exact-rational inputs against float
/// dust pushing the ceiling one step too high.
fn round_threshold(q: u64, eps: f64) -> u64 {
    let raw = q as f64 / (eps.exp() + 1.0);
    let mut a0 = ((raw - 1e-9).ceil() as i64).max(1) as u64;
    while a0 < q && ((q - a0) as f64 / a0 as f64).ln() > eps + 1e-12 {
        a0 += 1;
    }
    a0
}

impl RapporParams {
    /// Standard parameter selection: a prime comfortably above both the
    /// domain size and max(e^eps, 1/eps)/delta, so that threshold
    /// rounding costs at most a (1 + delta) factor in accuracy.
    pub fn choose_params(k: u64, eps: f64, variant: RapporVariant, delta: f64) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::InvalidParams(format!("eps must be positive, got {eps}")));
        }
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::InvalidParams(format!("delta must be in (0, 1], got {delta}")));
        }
        let accuracy_floor = (eps.exp().max(1.0 / eps) / delta).ceil();
        if accuracy_floor >= (1u64 << 62) as f64 {
            return Err(Error::PrimeSearchOverflow(u64::MAX));
        }
        let p = find_prime((k + 1).max(accuracy_floor as u64))?;
        Self::with_modulus(k, p, eps, variant)
    }

    /// Parameter construction over a caller-chosen prime modulus,
    /// indices embedded directly as field elements (d = 1). Useful when
    /// an exact alpha0 is wanted: pick p with p/(e^eps + 1) integral.
    pub fn with_modulus(k: u64, p: u64, eps: f64, variant: RapporVariant) -> Result<Self> {
        Self::with_field(k, p, 1, eps, variant)
    }

    /// Generalized construction over GF(q)^d with the smallest d such
    /// that the nonzero vectors cover [k]. Keeps reports at
    /// (d+1) ceil(log2 q) bits, near the entropy of the baseline.
    pub fn choose_params_general(k: u64, q: u64, eps: f64, variant: RapporVariant) -> Result<Self> {
        if q < 2 || !is_prime(q) {
            return Err(Error::InvalidParams(format!("modulus {q} is not prime")));
        }
        let mut d = 1u32;
        let mut span = q;
        // smallest d with q^d - 1 >= k
        while span - 1 < k {
            span = span
                .checked_mul(q)
                .ok_or_else(|| Error::InvalidParams(format!("k = {k} needs q^d above 2^64")))?;
            d += 1;
        }
        Self::with_field(k, q, d, eps, variant)
    }

    /// Rebuilds parameters from serialized fields (e.g. a report-file
    /// header). Revalidates every invariant and insists the recorded
    /// threshold is exactly what `eps` rounds to, so a file cannot smuggle
    /// in a weaker privacy level than its header claims.
    pub fn from_parts(
        k: u64,
        q: u64,
        dim: u32,
        threshold: u64,
        variant: RapporVariant,
        eps: f64,
    ) -> Result<Self> {
        let params = Self::with_field(k, q, dim, eps, variant)?;
        if params.threshold != threshold {
            return Err(Error::InvalidParams(format!(
                "threshold {threshold} is not the rounding of eps = {eps} over GF({q})"
            )));
        }
        Ok(params)
    }

    fn with_field(k: u64, q: u64, dim: u32, eps: f64, variant: RapporVariant) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidParams(format!(
                "frequency estimation needs a domain of at least 2, got {k}"
            )));
        }
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::InvalidParams(format!("eps must be positive, got {eps}")));
        }
        let field = PrimeField::new(q)?; // validates primality
        let _ = field;
        let mut span = 1u64;
        for _ in 0..dim {
            span = span
                .checked_mul(q)
                .ok_or_else(|| Error::InvalidParams("q^d exceeds 2^64".into()))?;
        }
        if k > span - 1 {
            return Err(Error::InvalidParams(format!(
                "domain size {k} exceeds the {} nonzero vectors of the embedding",
                span - 1
            )));
        }
        let threshold = round_threshold(q, eps);
        if 2 * threshold >= q {
            return Err(Error::InvalidParams(format!(
                "eps = {eps} is too small for modulus {q}: alpha0 rounds to at least 1/2"
            )));
        }
        let realized_eps = ((q - threshold) as f64 / threshold as f64).ln();
        Ok(RapporParams { k, modulus: q, dim, threshold, variant, requested_eps: eps, realized_eps })
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    /// Integer numerator of alpha0: bool(z) is the test z < threshold.
    pub fn threshold(&self) -> u64 {
        self.threshold
    }

    pub fn variant(&self) -> RapporVariant {
        self.variant
    }

    pub fn requested_eps(&self) -> f64 {
        self.requested_eps
    }

    /// The privacy level actually attained after threshold rounding,
    /// ln((q - a0)/a0): the deletion level for the symmetric variant,
    /// the replacement level for the asymmetric one. Always <= the
    /// requested eps.
    pub fn realized_eps(&self) -> f64 {
        self.realized_eps
    }

    pub fn alpha0(&self) -> f64 {
        self.threshold as f64 / self.modulus as f64
    }

    pub fn alpha1(&self) -> f64 {
        let (num, den) = self.alpha1_ratio();
        num as f64 / den as f64
    }

    /// alpha1 as an exact rational (numerator, denominator).
    pub fn alpha1_ratio(&self) -> (u64, u64) {
        match self.variant {
            RapporVariant::DeletionSymmetric => (self.modulus - self.threshold, self.modulus),
            RapporVariant::ReplacementAsymmetric => (1, 2),
        }
    }

    pub fn field(&self) -> PrimeField {
        PrimeField::new(self.modulus).expect("modulus validated at construction")
    }

    /// Number of affine functions, q^(d+1).
    pub fn phi_count(&self) -> Result<u64> {
        let mut n = 1u64;
        for _ in 0..=self.dim {
            n = n
                .checked_mul(self.modulus)
                .ok_or_else(|| Error::InvalidParams("q^(d+1) exceeds 2^64".into()))?;
        }
        Ok(n)
    }

    /// Serialized report size before byte packing.
    pub fn message_bits(&self) -> u32 {
        (self.dim + 1) * ceil_log2(self.modulus)
    }

    /// Embedding of index j (1-based) as the j-th nonzero vector of
    /// GF(q)^d in lexicographic order: the base-q digits of j, most
    /// significant first. For d = 1 this is the field element j itself.
    pub fn z_of(&self, j: u64) -> Result<Vec<u64>> {
        self.check_index(j)?;
        let mut digits = vec![0u64; self.dim as usize];
        let mut rest = j;
        for slot in digits.iter_mut().rev() {
            *slot = rest % self.modulus;
            rest /= self.modulus;
        }
        Ok(digits)
    }

    /// The randomized bit this report carries for coordinate j.
    pub fn report_bit(&self, phi: &AffineFn, j: u64) -> Result<bool> {
        if phi.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim as usize + 1,
                got: phi.coeffs.len(),
            });
        }
        let z = self.z_of(j)?;
        let field = self.field();
        let mut acc = phi.coeffs[0];
        for (zu, cu) in z.iter().zip(&phi.coeffs[1..]) {
            acc = field.add(acc, field.mul(*zu, *cu));
        }
        Ok(acc < self.threshold)
    }

    fn check_index(&self, j: u64) -> Result<()> {
        if j == 0 || j > self.k {
            return Err(Error::IndexOutOfRange { index: j, domain: self.k });
        }
        Ok(())
    }
}

fn ceil_log2(q: u64) -> u32 {
    debug_assert!(q >= 2);
    64 - (q - 1).leading_zeros()
}

/// Draws the client's own bit b ~ Bern(alpha1), using exact rational
/// sampling so enumeration-level claims are not disturbed by float
/// rounding.
fn draw_own_bit(params: &RapporParams, stream: &mut BitStream) -> Result<bool> {
    let (num, den) = params.alpha1_ratio();
    stream.bernoulli_ratio(num, den)
}

/// Samples phi uniformly among the affine functions with
/// bool(phi(z(j))) == b: slopes are unconstrained, and the admissible
/// intercepts form one contiguous range shifted by the slope-dependent
/// offset sum z_u phi_u.
pub fn sample_phi_conditioned(
    j: u64,
    b: bool,
    params: &RapporParams,
    stream: &mut BitStream,
) -> Result<AffineFn> {
    let z = params.z_of(j)?;
    let field = params.field();
    let q = params.modulus;
    let a0 = params.threshold;
    let mut coeffs = vec![0u64; params.dim as usize + 1];
    let mut offset = 0u64;
    for (slot, zu) in coeffs[1..].iter_mut().zip(&z) {
        let c = stream.uniform_mod(q)?;
        *slot = c;
        offset = field.add(offset, field.mul(*zu, c));
    }
    let target = if b {
        stream.uniform_mod(a0)? // value of phi(z(j)) in [0, a0)
    } else {
        a0 + stream.uniform_mod(q - a0)? // in [a0, q)
    };
    coeffs[0] = field.sub(target, offset);
    Ok(AffineFn { coeffs })
}

/// Encodes one client report: one conditioned affine function whose
/// evaluation at the client's own coordinate realizes a Bern(alpha1)
/// bit, while every other coordinate reads an exactly Bern(alpha0) bit.
///
/// Entropy order: the own-coordinate bit, then d uniform slopes, then
/// the intercept range draw.
pub fn gen_pi_rappor_encode(
    j: u64,
    params: &RapporParams,
    stream: &mut BitStream,
) -> Result<AffineFn> {
    let b = draw_own_bit(params, stream)?;
    sample_phi_conditioned(j, b, params, stream)
}

/// Direct-embedding (d = 1) encoder: a two-coefficient report.
pub fn pi_rappor_encode(j: u64, params: &RapporParams, stream: &mut BitStream) -> Result<AffineFn> {
    if params.dim != 1 {
        return Err(Error::InvalidParams(format!(
            "direct encoder requires d = 1 parameters, got d = {}",
            params.dim
        )));
    }
    gen_pi_rappor_encode(j, params, stream)
}

/// The k-bit baseline report: bit j is Bern(alpha1), the rest
/// Bern(alpha0), all independent. Costs k bits on the wire.
pub fn rappor_encode(j: u64, params: &RapporParams, stream: &mut BitStream) -> Result<Vec<bool>> {
    params.check_index(j)?;
    let q = params.modulus;
    let a0 = params.threshold;
    let (a1_num, a1_den) = params.alpha1_ratio();
    let mut bits = Vec::with_capacity(params.k as usize);
    for i in 1..=params.k {
        let bit = if i == j {
            stream.bernoulli_ratio(a1_num, a1_den)?
        } else {
            stream.bernoulli_ratio(a0, q)?
        };
        bits.push(bit);
    }
    Ok(bits)
}

/// Debiases a per-coordinate bit sum: (sum - alpha0 n)/(alpha1 - alpha0).
/// With alpha0 = 0, alpha1 = 1 this is the identity on exact counts.
pub fn debias_count(bit_sum: f64, n: u64, alpha0: f64, alpha1: f64) -> f64 {
    (bit_sum - alpha0 * n as f64) / (alpha1 - alpha0)
}

/// Debiased estimate of the count of a single coordinate j.
pub fn frequency_oracle(reports: &[AffineFn], j: u64, params: &RapporParams) -> Result<f64> {
    let mut sum = 0u64;
    for phi in reports {
        sum += params.report_bit(phi, j)? as u64;
    }
    Ok(debias_count(sum as f64, reports.len() as u64, params.alpha0(), params.alpha1()))
}

/// Accumulates this report's bit for every coordinate into `sums`,
/// with the given multiplicity. The d = 1 path walks j by repeated
/// addition of the slope; the general path increments the base-q digit
/// vector and keeps the running inner product in step, so the cost per
/// coordinate is O(1) amortized either way.
fn accumulate_report(phi: &AffineFn, weight: u64, params: &RapporParams, sums: &mut [u64]) {
    let field = params.field();
    let a0 = params.threshold;
    if params.dim == 1 {
        let slope = phi.coeffs[1];
        let mut v = phi.coeffs[0];
        for s in sums.iter_mut() {
            v = field.add(v, slope); // phi(z(j)) for j = 1, 2, ...
            if v < a0 {
                *s += weight;
            }
        }
        return;
    }
    let q = params.modulus;
    let d = params.dim as usize;
    let slopes = &phi.coeffs[1..];
    let mut digits = vec![0u64; d]; // z(0) = 0, incremented before first use
    let mut dot = phi.coeffs[0];
    for s in sums.iter_mut() {
        // z -> z + 1 in base q, least significant digit last; each digit
        // bump adds one slope, each carry unwinds q - 1 of them.
        for u in (0..d).rev() {
            if digits[u] + 1 < q {
                digits[u] += 1;
                dot = field.add(dot, slopes[u]);
                break;
            }
            digits[u] = 0;
            dot = field.sub(dot, field.mul(q - 1, slopes[u]));
        }
        if dot < a0 {
            *s += weight;
        }
    }
}

/// Debiased histogram over all of [k], one pass per report.
pub fn histogram(reports: &[AffineFn], params: &RapporParams) -> Result<CountEstimate> {
    if reports.is_empty() {
        return Err(Error::InvalidParams("histogram needs at least one report".into()));
    }
    let mut sums = vec![0u64; params.k as usize];
    for phi in reports {
        if phi.dim() != params.dim {
            return Err(Error::DimensionMismatch {
                expected: params.dim as usize + 1,
                got: phi.coeffs.len(),
            });
        }
        accumulate_report(phi, 1, params, &mut sums);
    }
    Ok(debias_sums(&sums, reports.len() as u64, params))
}

/// Same output as [`histogram`], bit for bit, but folds duplicate
/// reports first: the decode work is bounded by the number of distinct
/// affine functions, which caps at q^(d+1) however many clients report.
pub fn gen_histogram_fast(reports: &[AffineFn], params: &RapporParams) -> Result<CountEstimate> {
    if reports.is_empty() {
        return Err(Error::InvalidParams("histogram needs at least one report".into()));
    }
    let mut mult: HashMap<&AffineFn, u64> = HashMap::new();
    for phi in reports {
        if phi.dim() != params.dim {
            return Err(Error::DimensionMismatch {
                expected: params.dim as usize + 1,
                got: phi.coeffs.len(),
            });
        }
        *mult.entry(phi).or_insert(0) += 1;
    }
    let mut sums = vec![0u64; params.k as usize];
    for (phi, weight) in mult {
        accumulate_report(phi, weight, params, &mut sums);
    }
    Ok(debias_sums(&sums, reports.len() as u64, params))
}

fn debias_sums(sums: &[u64], n: u64, params: &RapporParams) -> CountEstimate {
    let a0 = params.alpha0();
    let a1 = params.alpha1();
    CountEstimate {
        estimates: sums.iter().map(|&s| debias_count(s as f64, n, a0, a1)).collect(),
        n,
    }
}

/// Debiased histogram for the k-bit baseline reports.
pub fn rappor_histogram(reports: &[Vec<bool>], params: &RapporParams) -> Result<CountEstimate> {
    if reports.is_empty() {
        return Err(Error::InvalidParams("histogram needs at least one report".into()));
    }
    let k = params.k as usize;
    let mut sums = vec![0u64; k];
    for r in reports {
        if r.len() != k {
            return Err(Error::DimensionMismatch { expected: k, got: r.len() });
        }
        for (s, &bit) in sums.iter_mut().zip(r) {
            *s += bit as u64;
        }
    }
    Ok(debias_sums(&sums, reports.len() as u64, params))
}

/// Per-coordinate variance of the debiased estimate when the true count
/// is c_j: c_j (1 - alpha0 - alpha1)/(alpha1 - alpha0)
///       + n alpha0 (1 - alpha0)/(alpha1 - alpha0)^2.
/// The symmetric variant's first term vanishes, leaving
/// n alpha0 (1 - alpha0)/(1 - 2 alpha0)^2 independent of c_j.
pub fn variance_from_alphas(alpha0: f64, alpha1: f64, n: u64, c_j: f64) -> f64 {
    let gap = alpha1 - alpha0;
    c_j * (1.0 - alpha0 - alpha1) / gap + n as f64 * alpha0 * (1.0 - alpha0) / (gap * gap)
}

/// [`variance_from_alphas`] at the realized parameters.
pub fn theoretical_variance(params: &RapporParams, n: u64, c_j: f64) -> f64 {
    variance_from_alphas(params.alpha0(), params.alpha1(), n, c_j)
}

/// Expected squared l2 error of the whole histogram, summed over
/// coordinates; uses sum_j c_j = n and is otherwise count-free.
pub fn theoretical_l2_error(params: &RapporParams, n: u64) -> f64 {
    let a0 = params.alpha0();
    let a1 = params.alpha1();
    let gap = a1 - a0;
    n as f64 * (1.0 - a0 - a1) / gap
        + (n as f64) * params.k as f64 * a0 * (1.0 - a0) / (gap * gap)
}

// ---------------------------------------------------------------------
// Enumeration oracles. These walk all q^(d+1) affine functions (or all
// 2^k baseline masks) and power the exactness tests; they are exported
// so integration suites can reuse them.

/// All affine functions, indexed by base-q digits with the intercept
/// least significant.
pub fn enumerate_phi(params: &RapporParams) -> Result<Vec<AffineFn>> {
    let count = params.phi_count()?;
    if count > 1 << 22 {
        return Err(Error::SeedSpaceTooLarge(64 - count.leading_zeros()));
    }
    Ok((0..count).map(|i| phi_from_index(i, params)).collect())
}

pub fn phi_from_index(index: u64, params: &RapporParams) -> AffineFn {
    let q = params.modulus;
    let mut coeffs = vec![0u64; params.dim as usize + 1];
    let mut rest = index;
    for c in coeffs.iter_mut() {
        *c = rest % q;
        rest /= q;
    }
    debug_assert_eq!(rest, 0);
    AffineFn { coeffs }
}

pub fn phi_to_index(phi: &AffineFn, params: &RapporParams) -> u64 {
    let q = params.modulus;
    let mut index = 0u64;
    for c in phi.coeffs.iter().rev() {
        index = index * q + c;
    }
    index
}

/// Exact probability that the encoder emits phi on input j: the own bit
/// fixes which intercept range phi must lie in, and the conditioned
/// sampler is uniform inside it.
pub fn report_probability(j: u64, phi: &AffineFn, params: &RapporParams) -> Result<f64> {
    let bit = params.report_bit(phi, j)?;
    let q = params.modulus as f64;
    let slopes = q.powi(params.dim as i32);
    let (a1_num, a1_den) = params.alpha1_ratio();
    let alpha1 = a1_num as f64 / a1_den as f64;
    Ok(if bit {
        alpha1 / (params.threshold as f64 * slopes)
    } else {
        (1.0 - alpha1) / ((params.modulus - params.threshold) as f64 * slopes)
    })
}

/// The k randomized bits a report carries, as a mask over [k].
pub fn report_mask(phi: &AffineFn, params: &RapporParams) -> Result<Vec<bool>> {
    (1..=params.k).map(|j| params.report_bit(phi, j)).collect()
}

/// Density of the baseline randomizer's law on input j at a given mask,
/// relative to the input-free product Bern(alpha0)^k: only the bit at j
/// matters, the other coordinates cancel exactly.
pub fn mask_density_ratio(j: u64, mask: &[bool], params: &RapporParams) -> Result<f64> {
    params.check_index(j)?;
    if mask.len() != params.k as usize {
        return Err(Error::DimensionMismatch { expected: params.k as usize, got: mask.len() });
    }
    let a0 = params.alpha0();
    let a1 = params.alpha1();
    Ok(if mask[j as usize - 1] { a1 / a0 } else { (1.0 - a1) / (1.0 - a0) })
}

/// The exact law of the input-free baseline over all 2^k masks
/// (product of Bern(alpha0) bits). Exported for small-k cross-checks.
pub fn reference_mask_law(params: &RapporParams) -> Result<Vec<(Vec<bool>, f64)>> {
    if params.k > 20 {
        return Err(Error::SeedSpaceTooLarge(params.k as u32));
    }
    let a0 = params.alpha0();
    let n = 1u64 << params.k;
    let mut law = Vec::with_capacity(n as usize);
    for m in 0..n {
        let mask: Vec<bool> = (0..params.k).map(|j| (m >> j) & 1 == 1).collect();
        let ones = mask.iter().filter(|&&b| b).count() as i32;
        let w = a0.powi(ones) * (1.0 - a0).powi(params.k as i32 - ones);
        law.push((mask, w));
    }
    Ok(law)
}

/// The affine family viewed as a finite seed generator: seed i decodes
/// to the mask of the i-th affine function. Under a uniform seed every
/// coordinate of the mask is exactly Bern(alpha0) and any two
/// coordinates are independent, so this generator passes all threshold
/// tests on the baseline's density with zero gap.
pub struct PiRapporGenerator {
    params: RapporParams,
}

impl PiRapporGenerator {
    pub fn new(params: RapporParams) -> Result<Self> {
        params.phi_count()?; // must be representable
        Ok(PiRapporGenerator { params })
    }

    pub fn params(&self) -> &RapporParams {
        &self.params
    }
}

impl EnumerableGenerator<Vec<bool>> for PiRapporGenerator {
    fn seed_count(&self) -> u64 {
        self.params.phi_count().expect("checked at construction")
    }

    fn decode_index(&self, index: u64) -> Vec<bool> {
        let phi = phi_from_index(index, &self.params);
        report_mask(&phi, &self.params).expect("full mask")
    }
}
