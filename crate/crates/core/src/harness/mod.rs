//! Experiment orchestration: reproducible dataset generation, end-to-end
//! encode → serialize → deserialize → aggregate runs with exact byte
//! accounting, and CSV / JSON result emission.
//!
//! Every random draw in a run derives from one master seed through
//! disjoint stream labels, so a config reproduces its ResultRows exactly
//! (wall-clock fields aside) regardless of scheduling.

pub mod wire;

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;

use crate::compress::{decompress, CompressionConfig};
use crate::error::{Error, Result};
use crate::freq::{
    gen_histogram_fast, gen_pi_rappor_encode, rappor_encode, rappor_histogram,
    theoretical_l2_error, AffineFn, CountEstimate, RapporParams, RapporVariant,
};
use crate::mean::{
    compress_priv_unit, optimize_split, priv_hs_decode, priv_hs_encode, priv_hs_norm,
    priv_unit_decode, priv_unit_encode, priv_unit_spec, MeanEstimate, MeanParams, MeanReport,
};
use crate::randcore::{BitStream, PrgFamily, PrgSpec};
use wire::{SchemeTag, WireHeader, WireRecord};

/// Which estimation problem a run exercises.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Freq,
    Mean,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Freq => "freq",
            Task::Mean => "mean",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "freq" => Ok(Task::Freq),
            "mean" => Ok(Task::Mean),
            other => Err(Error::InvalidParams(format!("unknown task {other:?}"))),
        }
    }
}

/// The randomizers the runner knows how to drive end to end.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    PiRappor,
    GenPiRappor,
    Rappor,
    PrivHs,
    PrivUnit,
    PrivUnitCompressed,
}

impl Scheme {
    pub fn tag(&self) -> SchemeTag {
        match self {
            Scheme::PiRappor => SchemeTag::PiRappor,
            Scheme::GenPiRappor => SchemeTag::GenPiRappor,
            Scheme::Rappor => SchemeTag::Rappor,
            Scheme::PrivHs => SchemeTag::PrivHs,
            Scheme::PrivUnit => SchemeTag::PrivUnit,
            Scheme::PrivUnitCompressed => SchemeTag::PrivUnitSeed,
        }
    }

    pub fn name(&self) -> &'static str {
        self.tag().name()
    }

    pub fn from_name(s: &str) -> Result<Self> {
        Ok(match s {
            "pi-rappor" => Scheme::PiRappor,
            "gen-pi-rappor" => Scheme::GenPiRappor,
            "rappor" => Scheme::Rappor,
            "priv-hs" => Scheme::PrivHs,
            "priv-unit" => Scheme::PrivUnit,
            "priv-unit-compressed" => Scheme::PrivUnitCompressed,
            other => return Err(Error::InvalidParams(format!("unknown scheme {other:?}"))),
        })
    }

    pub fn task(&self) -> Task {
        if self.tag().is_freq() {
            Task::Freq
        } else {
            Task::Mean
        }
    }
}

/// One simulated protocol run: a scheme, its parameters, a synthetic
/// dataset, and how many independent trials to repeat.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub task: Task,
    pub scheme: Scheme,
    /// Frequency domain size.
    pub k: u64,
    /// Mean-estimation dimension.
    pub d: u32,
    /// Clients per trial.
    pub n: u64,
    /// Total privacy budget per client (split across m_reps reports).
    pub eps: f64,
    pub trials: u32,
    /// Zipf exponent of the synthetic frequency dataset.
    pub zipf_s: f64,
    pub master_seed: u64,
    /// Where to write results; falls back to $PRIVSEED_OUT_DIR, then stdout.
    pub out_dir: Option<PathBuf>,
    pub variant: RapporVariant,
    /// Cap budget split; None picks the proxy-minimizing split.
    pub theta: Option<f64>,
    /// Reports per client, each at eps / m_reps.
    pub m_reps: u32,
    /// Transmitted seed width for seed-bearing schemes.
    pub seed_bits: u32,
    /// Accuracy slack delta steering frequency prime selection.
    pub delta_accuracy: f64,
    /// Base field size for the generalized frequency scheme.
    pub q: u64,
    /// Rejection-sampler failure mass for the compressed mean scheme.
    pub gamma: f64,
}

impl ExperimentConfig {
    /// Baseline settings for a task/scheme pair; callers override fields.
    pub fn new(scheme: Scheme, k_or_d: u64, n: u64, eps: f64) -> Self {
        ExperimentConfig {
            task: scheme.task(),
            scheme,
            k: k_or_d,
            d: k_or_d as u32,
            n,
            eps,
            trials: 20,
            zipf_s: 1.0,
            master_seed: 42,
            out_dir: None,
            variant: RapporVariant::DeletionSymmetric,
            theta: None,
            m_reps: 1,
            seed_bits: 64,
            delta_accuracy: 0.01,
            q: 3,
            gamma: 0.01,
        }
    }

    /// Parses the flat `key = value` config format: one pair per line,
    /// `#` comments, unknown keys rejected. Required keys: task, scheme,
    /// n, eps, and k (freq) or d (mean).
    pub fn parse(text: &str) -> Result<Self> {
        let mut seen: BTreeMap<&str, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::InvalidParams(format!(
                    "config line {}: expected key = value, got {line:?}",
                    lineno + 1
                )));
            };
            if seen.insert(key.trim(), value.trim().to_string()).is_some() {
                return Err(Error::InvalidParams(format!(
                    "config line {}: duplicate key {:?}",
                    lineno + 1,
                    key.trim()
                )));
            }
        }

        let mut take = |key: &str| seen.remove(key);
        let required = |key: &str, v: Option<String>| {
            v.ok_or_else(|| Error::InvalidParams(format!("config is missing required key {key:?}")))
        };
        let task = Task::from_name(&required("task", take("task"))?)?;
        let scheme = Scheme::from_name(&required("scheme", take("scheme"))?)?;
        let n = parse_num::<u64>("n", &required("n", take("n"))?)?;
        let eps = parse_num::<f64>("eps", &required("eps", take("eps"))?)?;
        let size_key = match task {
            Task::Freq => "k",
            Task::Mean => "d",
        };
        let k_or_d = parse_num::<u64>(size_key, &required(size_key, take(size_key))?)?;
        if task == Task::Mean && k_or_d > u32::MAX as u64 {
            return Err(Error::InvalidParams(format!("d = {k_or_d} is out of range")));
        }

        let mut config = ExperimentConfig::new(scheme, k_or_d, n, eps);
        config.task = task;
        if let Some(v) = take("trials") {
            config.trials = parse_num("trials", &v)?;
        }
        if let Some(v) = take("zipf_s") {
            config.zipf_s = parse_num("zipf_s", &v)?;
        }
        if let Some(v) = take("master_seed") {
            config.master_seed = parse_num("master_seed", &v)?;
        }
        if let Some(v) = take("out_dir") {
            config.out_dir = Some(PathBuf::from(v));
        }
        if let Some(v) = take("variant") {
            config.variant = match v.as_str() {
                "symmetric" => RapporVariant::DeletionSymmetric,
                "asymmetric" => RapporVariant::ReplacementAsymmetric,
                other => {
                    return Err(Error::InvalidParams(format!("unknown variant {other:?}")))
                }
            };
        }
        if let Some(v) = take("theta") {
            config.theta = Some(parse_num("theta", &v)?);
        }
        if let Some(v) = take("m_reps") {
            config.m_reps = parse_num("m_reps", &v)?;
        }
        if let Some(v) = take("seed_bits") {
            config.seed_bits = parse_num("seed_bits", &v)?;
        }
        if let Some(v) = take("delta_accuracy") {
            config.delta_accuracy = parse_num("delta_accuracy", &v)?;
        }
        if let Some(v) = take("q") {
            config.q = parse_num("q", &v)?;
        }
        if let Some(v) = take("gamma") {
            config.gamma = parse_num("gamma", &v)?;
        }
        if let Some(key) = seen.keys().next() {
            return Err(Error::InvalidParams(format!("unknown config key {key:?}")));
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scheme.task() != self.task {
            return Err(Error::InvalidParams(format!(
                "scheme {} does not run under task {}",
                self.scheme.name(),
                self.task.name()
            )));
        }
        let positive = [
            ("n", self.n as f64),
            ("eps", self.eps),
            ("trials", self.trials as f64),
            ("m_reps", self.m_reps as f64),
            ("seed_bits", self.seed_bits as f64),
            ("delta_accuracy", self.delta_accuracy),
            ("gamma", self.gamma),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if self.zipf_s < 0.0 {
            return Err(Error::InvalidParams(format!(
                "zipf_s must be nonnegative, got {}",
                self.zipf_s
            )));
        }
        match self.task {
            Task::Freq => {
                if self.k < 2 {
                    return Err(Error::InvalidParams(format!("k must be >= 2, got {}", self.k)));
                }
            }
            Task::Mean => {
                if self.d < 1 {
                    return Err(Error::InvalidParams("d must be >= 1".into()));
                }
            }
        }
        if let Some(theta) = self.theta {
            if !(0.0..=1.0).contains(&theta) {
                return Err(Error::InvalidParams(format!("theta must be in [0, 1], got {theta}")));
            }
        }
        if self.trials as u64 > (1 << 16) {
            return Err(Error::InvalidParams("at most 65536 trials per run".into()));
        }
        if self.n.saturating_mul(self.m_reps as u64) >= (1 << 40) {
            return Err(Error::InvalidParams("n * m_reps must stay below 2^40".into()));
        }
        Ok(())
    }

    /// The directory results land in: explicit config value, else the
    /// PRIVSEED_OUT_DIR environment variable, else none (stdout).
    pub fn resolved_out_dir(&self) -> Option<PathBuf> {
        self.out_dir
            .clone()
            .or_else(|| std::env::var_os("PRIVSEED_OUT_DIR").map(PathBuf::from))
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::InvalidParams(format!("config key {key}: bad value {v:?}")))
}

/// One trial's outcome. `linf_error` is populated for frequency runs
/// only; `predicted_sq_l2` carries the closed-form expectation the
/// empirical error is compared against.
#[derive(Clone, Debug, Serialize)]
pub struct ResultRow {
    pub scheme: String,
    pub eps: f64,
    pub n: u64,
    pub k_or_d: u64,
    pub trial: u32,
    pub sq_l2_error: f64,
    pub linf_error: Option<f64>,
    pub bytes_per_message: u64,
    pub predicted_sq_l2: f64,
    pub wall_ms: f64,
}

/// 32-byte stream key carrying the master seed.
pub fn master_key(master_seed: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    key
}

const NS_FREQ_DATA: u64 = 1;
const NS_MEAN_DATA: u64 = 2;
const NS_CLIENT: u64 = 3;

/// Disjoint label per (namespace, trial, unit): 8 | 16 | 40 bits.
fn stream_label(ns: u64, trial: u64, unit: u64) -> u64 {
    debug_assert!(trial < (1 << 16) && unit < (1 << 40));
    ns << 56 | trial << 40 | unit
}

/// Entropy stream backing one client's encode; disjoint across
/// (trial, unit) labels under a fixed master seed.
pub fn client_stream(master_seed: u64, trial: u64, unit: u64) -> BitStream {
    BitStream::entropy(master_key(master_seed), stream_label(NS_CLIENT, trial, unit))
}

/// n i.i.d. Zipf(s) draws over {1, ..., k}: P[j] proportional to j^-s.
/// Deterministic given the master seed.
pub fn gen_zipf_dataset(k: u64, n: u64, s: f64, master_seed: u64) -> Result<Vec<u64>> {
    if k < 1 {
        return Err(Error::InvalidParams("zipf needs a nonempty domain".into()));
    }
    if !(s >= 0.0) {
        return Err(Error::InvalidParams(format!("zipf exponent must be >= 0, got {s}")));
    }
    let mut cum = Vec::with_capacity(k as usize);
    let mut total = 0.0f64;
    for j in 1..=k {
        total += (j as f64).powf(-s);
        cum.push(total);
    }
    let mut stream = BitStream::entropy(master_key(master_seed), stream_label(NS_FREQ_DATA, 0, 0));
    let mut out = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let u = stream.uniform_f64()? * total;
        let idx = cum.partition_point(|&c| c <= u);
        out.push((idx as u64 + 1).min(k));
    }
    Ok(out)
}

/// n i.i.d. uniform unit vectors in R^d. Deterministic given the master
/// seed.
pub fn gen_sphere_dataset(d: u32, n: u64, master_seed: u64) -> Result<Vec<Vec<f64>>> {
    if d < 1 {
        return Err(Error::InvalidParams("dimension must be positive".into()));
    }
    let mut stream = BitStream::entropy(master_key(master_seed), stream_label(NS_MEAN_DATA, 0, 0));
    (0..n).map(|_| stream.unit_vector(d)).collect()
}

fn variant_byte(v: RapporVariant) -> u8 {
    match v {
        RapporVariant::DeletionSymmetric => 0,
        RapporVariant::ReplacementAsymmetric => 1,
    }
}

fn variant_from_byte(b: u8) -> Result<RapporVariant> {
    match b {
        0 => Ok(RapporVariant::DeletionSymmetric),
        1 => Ok(RapporVariant::ReplacementAsymmetric),
        other => Err(Error::WireFormat(format!("unknown variant byte {other}"))),
    }
}

/// Wire header describing a batch of frequency reports under `params`.
pub fn freq_header(scheme: SchemeTag, params: &RapporParams, record_count: u64) -> WireHeader {
    WireHeader {
        scheme,
        variant: variant_byte(params.variant()),
        family: 0xFF,
        k_or_d: params.k(),
        modulus: params.modulus(),
        gen_d: params.dim(),
        seed_bits: 0,
        m_reps: 1,
        eps: params.requested_eps(),
        threshold: params.threshold(),
        theta: 0.0,
        record_count,
    }
}

/// Wire header describing a batch of mean reports: total budget `eps`
/// split over `m_reps` reports per client, cap split `theta`, and the
/// transmitted seed width for seed-bearing schemes.
pub fn mean_header(
    scheme: SchemeTag,
    d: u32,
    eps: f64,
    theta: f64,
    seed_bits: u32,
    m_reps: u32,
    record_count: u64,
) -> WireHeader {
    let seeded = !matches!(scheme, SchemeTag::PrivUnit);
    WireHeader {
        scheme,
        variant: 0,
        family: if seeded { PrgFamily::ChaCha20.id() } else { 0xFF },
        k_or_d: d as u64,
        modulus: 0,
        gen_d: 0,
        seed_bits: if seeded { seed_bits } else { 0 },
        m_reps,
        eps,
        threshold: 0,
        theta,
        record_count,
    }
}

fn freq_params(config: &ExperimentConfig) -> Result<RapporParams> {
    match config.scheme {
        Scheme::GenPiRappor => {
            RapporParams::choose_params_general(config.k, config.q, config.eps, config.variant)
        }
        _ => RapporParams::choose_params(config.k, config.eps, config.variant, config.delta_accuracy),
    }
}

/// Server side of a frequency round: rebuilds parameters from the header
/// alone and folds the received reports into debiased count estimates.
pub fn aggregate_freq_records(
    header: &WireHeader,
    records: Vec<WireRecord>,
) -> Result<CountEstimate> {
    let params = RapporParams::from_parts(
        header.k_or_d,
        header.modulus,
        header.gen_d,
        header.threshold,
        variant_from_byte(header.variant)?,
        header.eps,
    )?;
    match header.scheme {
        SchemeTag::Rappor => {
            let reports: Vec<Vec<bool>> = records
                .into_iter()
                .map(|r| match r {
                    WireRecord::Bits(b) => Ok(b),
                    _ => Err(Error::WireFormat("expected bit records".into())),
                })
                .collect::<Result<_>>()?;
            rappor_histogram(&reports, &params)
        }
        SchemeTag::PiRappor | SchemeTag::GenPiRappor => {
            let reports: Vec<AffineFn> = records
                .into_iter()
                .map(|r| match r {
                    WireRecord::Affine(phi) => Ok(phi),
                    _ => Err(Error::WireFormat("expected affine records".into())),
                })
                .collect::<Result<_>>()?;
            gen_histogram_fast(&reports, &params)
        }
        other => Err(Error::WireFormat(format!(
            "{} reports cannot feed a frequency aggregate",
            other.name()
        ))),
    }
}

/// Server side of a mean round: rebuilds parameters from the header
/// alone, decodes every record, and returns the average of the decodes.
pub fn aggregate_mean_records(
    header: &WireHeader,
    records: &[WireRecord],
) -> Result<MeanEstimate> {
    if records.is_empty() {
        return Err(Error::InvalidParams("mean aggregation needs at least one report".into()));
    }
    let d = u32::try_from(header.k_or_d)
        .map_err(|_| Error::WireFormat(format!("dimension {} is out of range", header.k_or_d)))?;
    let rep_eps = header.eps / header.m_reps.max(1) as f64;
    let params = match header.scheme {
        SchemeTag::PrivUnit | SchemeTag::PrivUnitSeed => {
            Some(MeanParams::priv_unit(d, rep_eps, header.theta)?)
        }
        SchemeTag::PrivHs => None,
        other => {
            return Err(Error::WireFormat(format!(
                "{} reports cannot feed a mean aggregate",
                other.name()
            )))
        }
    };
    let prg = match header.family {
        0xFF => None,
        id => Some(PrgSpec::new(header.seed_bits, 64 * d as u64, PrgFamily::from_id(id)?)?),
    };
    let spec = match header.scheme {
        SchemeTag::PrivUnitSeed => {
            Some(priv_unit_spec(params.as_ref().expect("cap params present"))?)
        }
        _ => None,
    };

    let mut acc = vec![0.0f64; d as usize];
    for rec in records {
        let decoded = match (header.scheme, rec) {
            (SchemeTag::PrivHs, WireRecord::SeedSign { seed, sign }) => {
                let report = MeanReport::HsSeed { seed: seed.clone(), sign: *sign };
                priv_hs_decode(&report, d, rep_eps, prg.as_ref().expect("prg present"))?
            }
            (SchemeTag::PrivUnit, WireRecord::Vector(v)) => {
                priv_unit_decode(v, params.as_ref().expect("cap params present"))
            }
            (SchemeTag::PrivUnitSeed, WireRecord::SeedOnly { seed }) => {
                let y = decompress(
                    seed,
                    spec.as_ref().expect("spec present"),
                    prg.as_ref().expect("prg present"),
                )?;
                priv_unit_decode(&y, params.as_ref().expect("cap params present"))
            }
            _ => return Err(Error::WireFormat("record kind does not match header".into())),
        };
        for (a, v) in acc.iter_mut().zip(&decoded) {
            *a += v;
        }
    }
    let n = records.len() as u64;
    for a in &mut acc {
        *a /= n as f64;
    }
    Ok(MeanEstimate { mean: acc, n })
}

/// Per trial: encode every client, serialize, deserialize, rebuild the
/// parameters from the header alone, aggregate, and score against the
/// dataset's true counts.
pub fn run_freq_experiment(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    config.validate()?;
    if config.task != Task::Freq {
        return Err(Error::InvalidParams("frequency runner got a mean config".into()));
    }
    let params = freq_params(config)?;
    let data = gen_zipf_dataset(config.k, config.n, config.zipf_s, config.master_seed)?;
    let mut true_counts = vec![0.0f64; config.k as usize];
    for &j in &data {
        true_counts[(j - 1) as usize] += 1.0;
    }

    let mut rows = Vec::with_capacity(config.trials as usize);
    for trial in 0..config.trials {
        let t0 = Instant::now();
        let mut records = Vec::with_capacity(data.len());
        for (i, &j) in data.iter().enumerate() {
            let mut st = client_stream(config.master_seed, trial as u64, i as u64);
            records.push(match config.scheme {
                Scheme::Rappor => WireRecord::Bits(rappor_encode(j, &params, &mut st)?),
                _ => WireRecord::Affine(gen_pi_rappor_encode(j, &params, &mut st)?),
            });
        }
        let header = freq_header(config.scheme.tag(), &params, records.len() as u64);
        let mut buf = Vec::new();
        wire::write_reports(&mut buf, &header, &records)?;
        let (h, received) = wire::read_reports(&mut buf.as_slice())?;
        let estimate = aggregate_freq_records(&h, received)?;

        let mut sq_l2 = 0.0f64;
        let mut linf = 0.0f64;
        for (est, truth) in estimate.estimates.iter().zip(&true_counts) {
            let e = est - truth;
            sq_l2 += e * e;
            linf = linf.max(e.abs());
        }
        rows.push(ResultRow {
            scheme: config.scheme.name().to_string(),
            eps: config.eps,
            n: config.n,
            k_or_d: config.k,
            trial,
            sq_l2_error: sq_l2,
            linf_error: Some(linf),
            bytes_per_message: header.bytes_per_message(),
            predicted_sq_l2: theoretical_l2_error(&params, config.n),
            wall_ms: t0.elapsed().as_secs_f64() * 1e3,
        });
    }
    Ok(rows)
}

/// Per trial: encode every client's m reports, serialize, deserialize,
/// rebuild parameters from the header, decode everything, average, and
/// score against the dataset's true mean.
pub fn run_mean_experiment(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    config.validate()?;
    if config.task != Task::Mean {
        return Err(Error::InvalidParams("mean runner got a frequency config".into()));
    }
    let d = config.d;
    let m = config.m_reps;
    let rep_eps = config.eps / m as f64;
    // The split is resolved up front so the header can carry it and the
    // decode side rebuilds bit-identical parameters from the header alone.
    let (theta, params) = match config.scheme {
        Scheme::PrivHs => (0.0, None),
        _ => {
            let theta = match config.theta {
                Some(t) => t,
                None => optimize_split(d, rep_eps)?.0,
            };
            (theta, Some(MeanParams::priv_unit(d, rep_eps, theta)?))
        }
    };
    let prg = PrgSpec::chacha(config.seed_bits, 64 * d as u64)?;
    let compression = match config.scheme {
        Scheme::PrivUnitCompressed => {
            Some(CompressionConfig::pure(rep_eps, config.gamma, prg)?)
        }
        _ => None,
    };

    let data = gen_sphere_dataset(d, config.n, config.master_seed)?;
    let mut true_mean = vec![0.0f64; d as usize];
    for x in &data {
        for (acc, a) in true_mean.iter_mut().zip(x) {
            *acc += a;
        }
    }
    for acc in &mut true_mean {
        *acc /= config.n as f64;
    }
    let proxy = match &params {
        Some(p) => p.norm_proxy(),
        None => priv_hs_norm(d, rep_eps)?.powi(2),
    };
    let predicted = (proxy - 1.0) / (config.n as f64 * m as f64);

    let mut rows = Vec::with_capacity(config.trials as usize);
    for trial in 0..config.trials {
        let t0 = Instant::now();
        let mut records = Vec::with_capacity(data.len() * m as usize);
        for (i, x) in data.iter().enumerate() {
            for r in 0..m {
                let unit = i as u64 * m as u64 + r as u64;
                let mut st = client_stream(config.master_seed, trial as u64, unit);
                records.push(match config.scheme {
                    Scheme::PrivHs => {
                        match priv_hs_encode(x, rep_eps, &prg, &mut st)? {
                            MeanReport::HsSeed { seed, sign } => WireRecord::SeedSign { seed, sign },
                            _ => unreachable!("hemisphere encoder emits seed + sign"),
                        }
                    }
                    Scheme::PrivUnit => WireRecord::Vector(priv_unit_encode(
                        x,
                        params.as_ref().expect("params exist for cap schemes"),
                        &mut st,
                    )?),
                    Scheme::PrivUnitCompressed => WireRecord::SeedOnly {
                        seed: compress_priv_unit(
                            x,
                            params.as_ref().expect("params exist for cap schemes"),
                            compression.as_ref().expect("compression configured"),
                            &mut st,
                        )?,
                    },
                    _ => unreachable!("validated as a mean scheme"),
                });
            }
        }
        let header = mean_header(
            config.scheme.tag(),
            d,
            config.eps,
            theta,
            config.seed_bits,
            m,
            records.len() as u64,
        );
        let mut buf = Vec::new();
        wire::write_reports(&mut buf, &header, &records)?;
        let (h, received) = wire::read_reports(&mut buf.as_slice())?;
        // The decode side trusts only the header.
        let estimate = aggregate_mean_records(&h, &received)?;

        let mut sq_l2 = 0.0f64;
        for (a, t) in estimate.mean.iter().zip(&true_mean) {
            let e = a - t;
            sq_l2 += e * e;
        }

        rows.push(ResultRow {
            scheme: config.scheme.name().to_string(),
            eps: config.eps,
            n: config.n,
            k_or_d: d as u64,
            trial,
            sq_l2_error: sq_l2,
            linf_error: None,
            bytes_per_message: header.bytes_per_message(),
            predicted_sq_l2: predicted,
            wall_ms: t0.elapsed().as_secs_f64() * 1e3,
        });
    }
    Ok(rows)
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    match config.task {
        Task::Freq => run_freq_experiment(config),
        Task::Mean => run_mean_experiment(config),
    }
}

/// CSV emission: header row then one line per ResultRow.
pub fn write_csv(rows: &[ResultRow], out: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-(scheme, eps, n, size) aggregates over trials, as a JSON value
/// with deterministic ordering.
pub fn json_summary(rows: &[ResultRow]) -> serde_json::Value {
    let mut groups: BTreeMap<(String, u64, u64, u64), Vec<&ResultRow>> = BTreeMap::new();
    for row in rows {
        groups
            .entry((row.scheme.clone(), row.eps.to_bits(), row.n, row.k_or_d))
            .or_default()
            .push(row);
    }
    let summaries: Vec<serde_json::Value> = groups
        .values()
        .map(|rows| {
            let t = rows.len() as f64;
            let mean_sq = rows.iter().map(|r| r.sq_l2_error).sum::<f64>() / t;
            let mean_linf = rows
                .iter()
                .filter_map(|r| r.linf_error)
                .fold((0.0, 0u32), |(s, c), v| (s + v, c + 1));
            let first = rows[0];
            serde_json::json!({
                "scheme": first.scheme,
                "eps": first.eps,
                "n": first.n,
                "k_or_d": first.k_or_d,
                "trials": rows.len(),
                "mean_sq_l2_error": mean_sq,
                "mean_linf_error": if mean_linf.1 > 0 {
                    serde_json::json!(mean_linf.0 / mean_linf.1 as f64)
                } else {
                    serde_json::Value::Null
                },
                "predicted_sq_l2": first.predicted_sq_l2,
                "bytes_per_message": first.bytes_per_message,
                "total_wall_ms": rows.iter().map(|r| r.wall_ms).sum::<f64>(),
            })
        })
        .collect();
    serde_json::json!({ "results": summaries })
}

/// Writes results.csv (and summary.json) under `dir`.
pub fn write_outputs(rows: &[ResultRow], dir: &std::path::Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join("results.csv");
    write_csv(rows, std::fs::File::create(&csv_path)?)?;
    let json_path = dir.join("summary.json");
    let mut f = std::fs::File::create(&json_path)?;
    writeln!(f, "{:#}", json_summary(rows))?;
    Ok((csv_path, json_path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zipf_matches_normalized_harmonic_weights() {
        let n = 100_000u64;
        let data = gen_zipf_dataset(3, n, 1.0, 7).unwrap();
        let mut freq = [0.0f64; 3];
        for &j in &data {
            freq[(j - 1) as usize] += 1.0 / n as f64;
        }
        let want = [6.0 / 11.0, 3.0 / 11.0, 2.0 / 11.0];
        for (got, want) in freq.iter().zip(want) {
            assert!((got - want).abs() < 0.02, "got {got}, want {want}");
        }
        // s = 0 is uniform; s = infinity is degenerate at 1.
        let flat = gen_zipf_dataset(4, n, 0.0, 7).unwrap();
        let ones = flat.iter().filter(|&&j| j == 1).count() as f64 / n as f64;
        assert!((ones - 0.25).abs() < 0.02);
        let degenerate = gen_zipf_dataset(4, 1000, f64::INFINITY, 7).unwrap();
        assert!(degenerate.iter().all(|&j| j == 1));
        // Deterministic in the seed.
        assert_eq!(data, gen_zipf_dataset(3, n, 1.0, 7).unwrap());
        assert_ne!(data, gen_zipf_dataset(3, n, 1.0, 8).unwrap());
    }

    #[test]
    fn sphere_dataset_is_unit_norm_and_reproducible() {
        let d = 16u32;
        let n = 2000u64;
        let data = gen_sphere_dataset(d, n, 5).unwrap();
        for x in &data {
            let norm2: f64 = x.iter().map(|a| a * a).sum();
            assert!((norm2 - 1.0).abs() < 1e-12);
        }
        // Coordinates have variance 1/d; the empirical mean of n draws
        // should sit within 5 sigma of zero in every coordinate.
        let bound = 5.0 / ((n as f64) * d as f64).sqrt();
        for c in 0..d as usize {
            let mean: f64 = data.iter().map(|x| x[c]).sum::<f64>() / n as f64;
            assert!(mean.abs() < bound, "coordinate {c} mean {mean}");
        }
        assert_eq!(data, gen_sphere_dataset(d, n, 5).unwrap());
    }

    #[test]
    fn config_parser_handles_defaults_unknowns_and_comments() {
        let text = "
            # frequency run
            task = freq
            scheme = pi-rappor
            k = 100
            n = 1000
            eps = 1.0986 # about ln 3
        ";
        let config = ExperimentConfig::parse(text).unwrap();
        assert_eq!(config.k, 100);
        assert_eq!(config.trials, 20);
        assert_eq!(config.master_seed, 42);
        assert_eq!(config.variant, RapporVariant::DeletionSymmetric);

        let full = "
            task = mean
            scheme = priv-unit-compressed
            d = 32
            n = 500
            eps = 4
            trials = 3
            master_seed = 9
            theta = 0.5
            m_reps = 2
            seed_bits = 80
            gamma = 0.001
            out_dir = /tmp/results
        ";
        let config = ExperimentConfig::parse(full).unwrap();
        assert_eq!(config.d, 32);
        assert_eq!(config.theta, Some(0.5));
        assert_eq!(config.seed_bits, 80);
        assert_eq!(config.out_dir.as_deref(), Some(std::path::Path::new("/tmp/results")));

        assert!(ExperimentConfig::parse("task = freq\nscheme = pi-rappor\nk = 5\nn = 10\neps = 1\nbogus = 1").is_err());
        assert!(ExperimentConfig::parse("task = freq\nscheme = priv-hs\nk = 5\nn = 10\neps = 1").is_err());
        assert!(ExperimentConfig::parse("task = mean\nscheme = priv-hs\nn = 10\neps = 1").is_err());
        assert!(ExperimentConfig::parse("task = freq\nscheme = pi-rappor\nk = 5\nk = 6\nn = 10\neps = 1").is_err());
    }

    #[test]
    fn freq_runs_are_reproducible_and_sanely_sized() {
        let mut config = ExperimentConfig::new(Scheme::PiRappor, 10, 500, 3.0f64.ln());
        config.trials = 4;
        let rows = run_freq_experiment(&config).unwrap();
        assert_eq!(rows.len(), 4);
        // ln 3 with delta 0.01 picks p = 307: 2 * 9 bits -> 3 bytes.
        assert!(rows.iter().all(|r| r.bytes_per_message == 3));
        let again = run_freq_experiment(&config).unwrap();
        for (a, b) in rows.iter().zip(&again) {
            assert_eq!(a.sq_l2_error, b.sq_l2_error);
            assert_eq!(a.linf_error, b.linf_error);
        }
        // Mean error should be in the neighborhood of the prediction;
        // with only 4 trials the tolerance is wide.
        let mean: f64 = rows.iter().map(|r| r.sq_l2_error).sum::<f64>() / 4.0;
        let predicted = rows[0].predicted_sq_l2;
        assert!(mean > 0.25 * predicted && mean < 4.0 * predicted, "{mean} vs {predicted}");
    }

    #[test]
    fn freq_variants_and_baseline_all_run() {
        for scheme in [Scheme::GenPiRappor, Scheme::Rappor] {
            let mut config = ExperimentConfig::new(scheme, 10, 300, 1.0);
            config.trials = 2;
            config.q = 3;
            let rows = run_freq_experiment(&config).unwrap();
            assert_eq!(rows.len(), 2);
            assert!(rows.iter().all(|r| r.sq_l2_error > 0.0));
            if scheme == Scheme::Rappor {
                // k bits packed: 10 -> 2 bytes.
                assert_eq!(rows[0].bytes_per_message, 2);
            } else {
                // q = 3 embeds k = 10 in d = 3 digits: 4 * 2 bits -> 1 byte.
                assert_eq!(rows[0].bytes_per_message, 1);
            }
        }
    }

    #[test]
    fn mean_runs_cover_every_scheme_and_reproduce() {
        for (scheme, bytes) in [
            (Scheme::PrivHs, 9),              // 64-bit seed + sign byte
            (Scheme::PrivUnit, 8 * 8),        // raw f64 vector
            (Scheme::PrivUnitCompressed, 8),  // 64-bit seed alone
        ] {
            let mut config = ExperimentConfig::new(scheme, 8, 250, 2.0);
            config.trials = 3;
            config.theta = Some(0.5);
            let rows = run_mean_experiment(&config).unwrap();
            assert_eq!(rows.len(), 3);
            assert_eq!(rows[0].bytes_per_message, bytes, "{}", scheme.name());
            assert!(rows.iter().all(|r| r.linf_error.is_none()));
            let again = run_mean_experiment(&config).unwrap();
            for (a, b) in rows.iter().zip(&again) {
                assert_eq!(a.sq_l2_error, b.sq_l2_error);
            }
            // Errors land within a generous factor of the prediction.
            let mean: f64 = rows.iter().map(|r| r.sq_l2_error).sum::<f64>() / 3.0;
            let predicted = rows[0].predicted_sq_l2;
            assert!(
                mean > 0.1 * predicted && mean < 10.0 * predicted,
                "{}: {mean} vs {predicted}",
                scheme.name()
            );
        }
    }

    #[test]
    fn csv_and_json_outputs_are_well_formed() {
        let mut config = ExperimentConfig::new(Scheme::PiRappor, 5, 100, 1.0);
        config.trials = 2;
        let rows = run_freq_experiment(&config).unwrap();
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "scheme,eps,n,k_or_d,trial,sq_l2_error,linf_error,bytes_per_message,predicted_sq_l2,wall_ms"
        );
        assert_eq!(lines.count(), 2);

        let summary = json_summary(&rows);
        let results = summary["results"].as_array().unwrap();
        assert_eq!(results.len(), 1);
        assert_eq!(results[0]["trials"], 2);
        assert_eq!(results[0]["scheme"], "pi-rappor");
        assert!(results[0]["mean_sq_l2_error"].as_f64().unwrap() > 0.0);
    }
}
