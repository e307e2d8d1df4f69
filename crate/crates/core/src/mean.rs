//! Private mean estimation on the unit sphere in R^d.
//!
//! Two randomizers, both emitting a unit vector that is decoded by a
//! deterministic scaling:
//!
//! * The hemisphere scheme draws a uniform unit vector v and reports the
//!   sign that aligns v with the input with probability
//!   e^eps/(e^eps + 1). Because v comes from a seed expansion, the
//!   report is one seed plus one sign bit; the server rescales by the
//!   fixed norm B(d, eps) to debias.
//! * The cap scheme splits the budget eps = eps0 + eps1: with
//!   probability p_cap = e^eps0/(e^eps0 + 1) it samples uniformly from
//!   the spherical cap {v : <x, v> >= gamma}, else from its complement,
//!   where gamma is set so the cap has reference mass q = 1/(1 + e^eps1).
//!   The density against the uniform sphere is two-valued (p_cap/q on
//!   the cap, (1-p_cap)/(1-q) off it), the worst-case ratio is exactly
//!   e^eps, and the decode scaling 1/m comes from the first moment of
//!   the cosine t = <x, v>.
//!
//! The hemisphere scheme is the cap scheme at the degenerate split
//! eps1 = 0 (gamma = 0, q = 1/2); the tests pin that identity, which
//! cross-checks the Gamma-function norm against the quadrature debias.
//!
//! All cosine-marginal computations go through the density
//! (1 - t^2)^((d-3)/2) dt, rewritten with t = sin(u) as cos^(d-2)(u) du
//! so the d = 2 endpoint singularity disappears and large-d powers are
//! exponentiated in log space.

use crate::compress::{compress_pure, CompressionConfig, RandomizerSpec};
use crate::error::{Error, Result};
use crate::numeric::{bisect, integrate, ln_gamma};
use crate::randcore::{BitStream, PrgSpec, Seed};

const PI: f64 = std::f64::consts::PI;

/// Weight of the cosine marginal at angle u (t = sin u): cos^(d-2)(u).
fn angle_weight(d: u32, u: f64) -> f64 {
    if d == 2 {
        return 1.0;
    }
    let c = u.cos();
    if c <= 0.0 {
        0.0
    } else {
        ((d as f64 - 2.0) * c.ln()).exp()
    }
}

/// Unnormalized mass of the cosine marginal on [t_lo, t_hi].
fn band_mass(d: u32, t_lo: f64, t_hi: f64) -> Result<f64> {
    if d < 2 {
        return Err(Error::InvalidParams(format!("cosine marginal needs d >= 2, got {d}")));
    }
    if !( -1.0..=1.0).contains(&t_lo) || !(-1.0..=1.0).contains(&t_hi) {
        return Err(Error::InvalidParams(format!("band [{t_lo}, {t_hi}] leaves [-1, 1]")));
    }
    if t_hi <= t_lo {
        return Ok(0.0);
    }
    integrate(&|u| angle_weight(d, u), t_lo.asin(), t_hi.asin(), 1e-12)
}

/// Mass of the cap {v : <x, v> >= gamma} under the uniform sphere
/// measure, i.e. the normalized upper tail of the cosine marginal.
pub fn cap_fraction(d: u32, gamma: f64) -> Result<f64> {
    let total = band_mass(d, -1.0, 1.0)?;
    Ok(band_mass(d, gamma, 1.0)? / total)
}

/// Exact unnormalized first moment of the cosine marginal on [gamma, 1]:
/// the integrand t (1-t^2)^((d-3)/2) has the antiderivative
/// -(1-t^2)^((d-1)/2)/(d-1). Returned in log space by the caller's
/// choice below; here plain, since the callers divide by masses of the
/// same scale.
fn upper_moment(d: u32, gamma: f64) -> f64 {
    debug_assert!(d >= 2);
    let dm1 = d as f64 - 1.0;
    (0.5 * dm1 * (1.0 - gamma * gamma).ln() - dm1.ln()).exp()
}

/// Parameters of the cap randomizer (the hemisphere scheme is the
/// degenerate split eps1 = 0).
#[derive(Clone, Debug)]
pub struct MeanParams {
    d: u32,
    eps: f64,
    eps0: f64,
    eps1: f64,
    p_cap: f64,
    gamma_cap: f64,
    q_cap: f64,
    debias_m: f64,
}

impl MeanParams {
    /// Builds parameters for dimension d, total budget eps, and split
    /// fraction theta in [0, 1]: eps0 = theta * eps biases the cap coin,
    /// the rest sharpens the cap. d = 1 has a two-point sphere whose
    /// only realizable cap mass is 1/2, so it requires theta = 1.
    pub fn priv_unit(d: u32, eps: f64, theta: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParams("dimension must be positive".into()));
        }
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::InvalidParams(format!("eps must be positive, got {eps}")));
        }
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::InvalidParams(format!("theta must be in [0, 1], got {theta}")));
        }
        let eps0 = theta * eps;
        let eps1 = eps - eps0;
        let p_cap = eps0.exp() / (eps0.exp() + 1.0);
        if d == 1 {
            if eps1 != 0.0 {
                return Err(Error::InvalidParams(
                    "d = 1 supports only the theta = 1 split: a two-point sphere has no caps of mass other than 1/2".into(),
                ));
            }
            let debias_m = 2.0 * p_cap - 1.0;
            return Ok(MeanParams {
                d,
                eps,
                eps0,
                eps1,
                p_cap,
                gamma_cap: 0.0,
                q_cap: 0.5,
                debias_m,
            });
        }
        let q_cap = 1.0 / (1.0 + eps1.exp());
        let total = band_mass(d, -1.0, 1.0)?;
        let gamma_cap = if eps1 == 0.0 {
            0.0
        } else {
            bisect(&|g| band_mass(d, g, 1.0).map(|m| m / total - q_cap).unwrap_or(f64::NAN),
                0.0, 1.0, 1e-13)?
        };
        let debias_m = priv_unit_debias(d, p_cap, gamma_cap, q_cap)?;
        Ok(MeanParams { d, eps, eps0, eps1, p_cap, gamma_cap, q_cap, debias_m })
    }

    /// Parameters with the proxy-minimizing split for (d, eps).
    pub fn priv_unit_optimized(d: u32, eps: f64) -> Result<Self> {
        let (theta, _) = optimize_split(d, eps)?;
        Self::priv_unit(d, eps, theta)
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn eps0(&self) -> f64 {
        self.eps0
    }

    pub fn eps1(&self) -> f64 {
        self.eps1
    }

    pub fn p_cap(&self) -> f64 {
        self.p_cap
    }

    pub fn gamma_cap(&self) -> f64 {
        self.gamma_cap
    }

    pub fn q_cap(&self) -> f64 {
        self.q_cap
    }

    /// The decode scaling: reports are divided by this first-moment
    /// constant, in (0, 1] since the cosine never exceeds 1.
    pub fn debias_m(&self) -> f64 {
        self.debias_m
    }

    /// Squared norm of every decoded report, 1/m^2: the scheme's
    /// variance proxy.
    pub fn norm_proxy(&self) -> f64 {
        1.0 / (self.debias_m * self.debias_m)
    }

    /// Expected squared error of a single decoded report around its
    /// mean: 1/m^2 - 1, since the decode has fixed norm and is unbiased.
    pub fn per_report_sq_error(&self) -> f64 {
        self.norm_proxy() - 1.0
    }

    /// Density of the report law on input x at sphere point v, relative
    /// to the uniform sphere.
    pub fn density_ratio(&self, x: &[f64], v: &[f64]) -> f64 {
        let t: f64 = x.iter().zip(v).map(|(a, b)| a * b).sum();
        if t >= self.gamma_cap {
            self.p_cap / self.q_cap
        } else {
            (1.0 - self.p_cap) / (1.0 - self.q_cap)
        }
    }

    /// Largest value of the density ratio, exactly e^eps0 * e^eps1 times
    /// the smallest; at most e^eps.
    pub fn max_density_ratio(&self) -> f64 {
        self.p_cap / self.q_cap
    }
}

/// Decode scaling from the cosine's conditional first moments:
/// m = p_cap E[t | cap] + (1 - p_cap) E[t | complement]. The two
/// conditional numerators are the same closed-form mass with opposite
/// signs, the masses come from quadrature.
pub fn priv_unit_debias(d: u32, p_cap: f64, gamma: f64, q_cap: f64) -> Result<f64> {
    let total = band_mass(d, -1.0, 1.0)?;
    let num = upper_moment(d, gamma) / total;
    let m = num * (p_cap / q_cap - (1.0 - p_cap) / (1.0 - q_cap));
    if !(m > 0.0) {
        return Err(Error::InvalidParams(format!(
            "debias constant must be positive, got {m} (p_cap = {p_cap}, q = {q_cap})"
        )));
    }
    Ok(m)
}

/// Proxy values over the 101-point split grid theta = 0.00, 0.01, ...,
/// 1.00; returns the argmin split and its proxy 1/m^2. Splits a given
/// dimension cannot realize (d = 1 off theta = 1) are skipped.
pub fn optimize_split(d: u32, eps: f64) -> Result<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for i in 0..=100u32 {
        let theta = i as f64 / 100.0;
        let Ok(params) = MeanParams::priv_unit(d, eps, theta) else { continue };
        let proxy = params.norm_proxy();
        if best.map_or(true, |(_, b)| proxy < b) {
            best = Some((theta, proxy));
        }
    }
    best.ok_or_else(|| Error::InvalidParams(format!("no realizable split for d = {d}, eps = {eps}")))
}

fn check_unit(x: &[f64], d: u32) -> Result<()> {
    if x.len() != d as usize {
        return Err(Error::DimensionMismatch { expected: d as usize, got: x.len() });
    }
    let norm2: f64 = x.iter().map(|a| a * a).sum();
    if (norm2.sqrt() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParams(format!(
            "input must be a unit vector; norm = {} (vectors inside the ball must be lifted first)",
            norm2.sqrt()
        )));
    }
    Ok(())
}

/// Samples the cosine t from the marginal restricted to [t_lo, t_hi] by
/// inverting its CDF with bisection.
fn sample_cosine(d: u32, t_lo: f64, t_hi: f64, stream: &mut BitStream) -> Result<f64> {
    let region = band_mass(d, t_lo, t_hi)?;
    if region <= 0.0 {
        return Err(Error::InvalidParams(format!("empty cosine band [{t_lo}, {t_hi}]")));
    }
    let u = stream.uniform_f64()?;
    let target = u * region;
    bisect(&|t| band_mass(d, t_lo, t).map(|m| m - target).unwrap_or(f64::NAN), t_lo, t_hi, 1e-12)
}

/// Draws a unit vector orthogonal to x by projecting a fresh uniform
/// unit vector off x.
fn orthogonal_unit(x: &[f64], stream: &mut BitStream) -> Result<Vec<f64>> {
    let d = x.len() as u32;
    for _ in 0..8 {
        let w = stream.unit_vector(d)?;
        let dot: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
        let mut perp: Vec<f64> = w.iter().zip(x).map(|(wi, xi)| wi - dot * xi).collect();
        let norm: f64 = perp.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-9 {
            for p in perp.iter_mut() {
                *p /= norm;
            }
            return Ok(perp);
        }
    }
    Err(Error::InvalidParams("could not draw a vector orthogonal to the input".into()))
}

/// Cap-scheme encoder: emits a unit vector whose cosine with x follows
/// the two-region law. Entropy order: region coin, cosine inverse-CDF
/// draw, orthogonal direction.
pub fn priv_unit_encode(x: &[f64], params: &MeanParams, stream: &mut BitStream) -> Result<Vec<f64>> {
    check_unit(x, params.d)?;
    let in_cap = stream.bernoulli(params.p_cap)?;
    if params.d == 1 {
        return Ok(vec![if in_cap { x[0] } else { -x[0] }]);
    }
    let g = params.gamma_cap;
    // The complement excludes the cap boundary; the cosine is atomless,
    // so sampling its closure changes nothing measurable.
    let t = if in_cap {
        sample_cosine(params.d, g, 1.0, stream)?
    } else {
        sample_cosine(params.d, -1.0, g, stream)?
    };
    let perp = orthogonal_unit(x, stream)?;
    let s = (1.0 - t * t).max(0.0).sqrt();
    Ok(x.iter().zip(&perp).map(|(xi, pi)| t * xi + s * pi).collect())
}

/// Server-side decode: scale by 1/m. The result has norm exactly 1/m.
pub fn priv_unit_decode(v: &[f64], params: &MeanParams) -> Vec<f64> {
    v.iter().map(|a| a / params.debias_m).collect()
}

/// The cap randomizer in density form, for routing through the generic
/// seed-compression engine: reference = uniform sphere consuming exactly
/// 64 d bits, density = the two-region ratio.
pub fn priv_unit_spec(params: &MeanParams) -> Result<RandomizerSpec<Vec<f64>, Vec<f64>>> {
    let d = params.d;
    let p = params.clone();
    RandomizerSpec::new(
        64 * d as u64,
        params.eps,
        0.0,
        crate::compress::PrivacyVariant::Deletion,
        move |stream| stream.unit_vector(d),
        move |x: &Vec<f64>, v: &Vec<f64>| p.density_ratio(x, v),
    )
}

/// Compresses one cap-scheme report to a seed via rejection sampling.
pub fn compress_priv_unit(
    x: &[f64],
    params: &MeanParams,
    cfg: &CompressionConfig,
    entropy: &mut BitStream,
) -> Result<Seed> {
    check_unit(x, params.d)?;
    let spec = priv_unit_spec(params)?;
    compress_pure(&x.to_vec(), &spec, cfg, entropy)
}

/// Fixed decoded norm of the hemisphere scheme:
/// B(d, eps) = (e^eps + 1)/(e^eps - 1) * sqrt(pi) Gamma((d+1)/2) / Gamma(d/2),
/// the reciprocal of (2p - 1) E[|t|].
pub fn priv_hs_norm(d: u32, eps: f64) -> Result<f64> {
    if d == 0 {
        return Err(Error::InvalidParams("dimension must be positive".into()));
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidParams(format!("eps must be positive, got {eps}")));
    }
    let df = d as f64;
    let ratio = (eps.exp() + 1.0) / (eps.exp() - 1.0);
    Ok(ratio * (0.5 * PI.ln() + ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0)).exp())
}

/// One mean-estimation report on the wire.
#[derive(Clone, Debug, PartialEq)]
pub enum MeanReport {
    /// Hemisphere scheme: the seed of the direction draw plus the sign.
    HsSeed { seed: Seed, sign: i8 },
    /// Compressed cap scheme: the accepted seed.
    UnitSeed { seed: Seed },
    /// Uncompressed vector (baseline path).
    Raw { vector: Vec<f64> },
}

/// Hemisphere encoder: draw a seed, expand it to a uniform direction v,
/// and report the sign aligning v with x with probability
/// e^eps/(e^eps + 1). A zero cosine counts as aligned.
pub fn priv_hs_encode(
    x: &[f64],
    eps: f64,
    prg: &PrgSpec,
    stream: &mut BitStream,
) -> Result<MeanReport> {
    let d = x.len() as u32;
    check_unit(x, d)?;
    if prg.output_bits < 64 * d as u64 {
        return Err(Error::InvalidParams(format!(
            "generator yields {} bits but a d = {d} direction needs {}",
            prg.output_bits,
            64 * d as u64
        )));
    }
    let seed = stream.take_seed(prg.seed_bits)?;
    let v = BitStream::from_seed(&seed, prg)?.unit_vector(d)?;
    let dot: f64 = x.iter().zip(&v).map(|(a, b)| a * b).sum();
    let aligned: i8 = if dot >= 0.0 { 1 } else { -1 };
    let keep = stream.bernoulli(eps.exp() / (eps.exp() + 1.0))?;
    Ok(MeanReport::HsSeed { seed, sign: if keep { aligned } else { -aligned } })
}

/// Hemisphere decode: re-expand the seed and scale to the fixed norm B.
pub fn priv_hs_decode(report: &MeanReport, d: u32, eps: f64, prg: &PrgSpec) -> Result<Vec<f64>> {
    let MeanReport::HsSeed { seed, sign } = report else {
        return Err(Error::InvalidParams("hemisphere decode needs a seed + sign report".into()));
    };
    let v = BitStream::from_seed(seed, prg)?.unit_vector(d)?;
    let b = priv_hs_norm(d, eps)?;
    let s = *sign as f64;
    Ok(v.iter().map(|a| b * s * a).collect())
}

/// Lifts a vector of norm <= 1 in R^d to a unit vector in R^(d+1) by
/// appending the norm defect. Estimates computed on lifted vectors drop
/// the last coordinate on the way back.
pub fn lift_to_sphere(x: &[f64]) -> Result<Vec<f64>> {
    let norm2: f64 = x.iter().map(|a| a * a).sum();
    if norm2 > 1.0 + 1e-9 {
        return Err(Error::InvalidParams(format!("cannot lift a vector of norm {}", norm2.sqrt())));
    }
    let mut out = x.to_vec();
    out.push((1.0 - norm2).max(0.0).sqrt());
    Ok(out)
}

/// Splits a budget across m independent repetitions.
#[derive(Clone, Copy, Debug)]
pub struct RepetitionConfig {
    pub m_reps: u32,
    pub total_eps: f64,
}

impl RepetitionConfig {
    pub fn new(m_reps: u32, total_eps: f64) -> Result<Self> {
        if m_reps == 0 {
            return Err(Error::InvalidParams("repetitions must be at least 1".into()));
        }
        if !(total_eps > 0.0) {
            return Err(Error::InvalidParams(format!("eps must be positive, got {total_eps}")));
        }
        Ok(RepetitionConfig { m_reps, total_eps })
    }

    pub fn per_rep_eps(&self) -> f64 {
        self.total_eps / self.m_reps as f64
    }
}

/// Runs a base encoder m times independently; composition spends
/// m_reps times the encoder's budget.
pub fn repeat_encode<R>(
    m_reps: u32,
    mut encode_one: impl FnMut(u32) -> Result<R>,
) -> Result<Vec<R>> {
    (0..m_reps).map(&mut encode_one).collect()
}

/// Averages the decoded repetitions of one client.
pub fn repeat_decode(decodes: &[Vec<f64>]) -> Result<Vec<f64>> {
    let Some(first) = decodes.first() else {
        return Err(Error::InvalidParams("nothing to average".into()));
    };
    let mut avg = vec![0.0; first.len()];
    for v in decodes {
        if v.len() != first.len() {
            return Err(Error::DimensionMismatch { expected: first.len(), got: v.len() });
        }
        for (a, b) in avg.iter_mut().zip(v) {
            *a += b;
        }
    }
    let n = decodes.len() as f64;
    for a in avg.iter_mut() {
        *a /= n;
    }
    Ok(avg)
}

/// Server-side average of decoded reports.
#[derive(Clone, Debug)]
pub struct MeanEstimate {
    pub mean: Vec<f64>,
    pub n: u64,
}

pub fn average_decodes(decodes: &[Vec<f64>]) -> Result<MeanEstimate> {
    let mean = repeat_decode(decodes)?;
    Ok(MeanEstimate { mean, n: decodes.len() as u64 })
}
