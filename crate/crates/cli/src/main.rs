//! privseed: drive the randomizers from the command line.
//!
//! `freq encode` / `mean encode` turn a plaintext input file into a
//! binary report file; the matching `aggregate` subcommands read a
//! report file and print the server-side estimate as JSON. `simulate`
//! runs a full synthetic experiment from a flat key = value config, and
//! `params` previews the frequency parameter selection.
//!
//! Exit codes: 0 success, 2 bad parameters or config, 3 I/O failure.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use privseed::compress::CompressionConfig;
use privseed::freq::{gen_pi_rappor_encode, rappor_encode, RapporParams, RapporVariant};
use privseed::harness::wire::{read_reports, write_reports, WireRecord};
use privseed::harness::{
    aggregate_freq_records, aggregate_mean_records, client_stream, freq_header, mean_header,
    run_experiment, write_csv, write_outputs, ExperimentConfig, Scheme, Task,
};
use privseed::mean::{
    compress_priv_unit, optimize_split, priv_hs_encode, priv_unit_encode, MeanParams, MeanReport,
};
use privseed::randcore::PrgSpec;
use privseed::{Error, Result};

#[derive(Parser)]
#[command(name = "privseed", version, about = "Locally private frequency and mean estimation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Preview frequency parameter selection for a domain and budget.
    Params(ParamsArgs),
    /// Frequency estimation over an indexed domain {1, ..., k}.
    #[command(subcommand)]
    Freq(FreqCmd),
    /// Mean estimation over unit vectors in R^d.
    #[command(subcommand)]
    Mean(MeanCmd),
    /// Run a synthetic end-to-end experiment from a config file.
    Simulate(SimulateArgs),
}

#[derive(Subcommand)]
enum FreqCmd {
    /// Encode one report per input line (an index in {1, ..., k}).
    Encode(FreqEncodeArgs),
    /// Aggregate a report file into debiased count estimates.
    Aggregate(AggregateArgs),
}

#[derive(Subcommand)]
enum MeanCmd {
    /// Encode one report per input line (comma-separated unit vector).
    Encode(MeanEncodeArgs),
    /// Aggregate a report file into a mean estimate.
    Aggregate(AggregateArgs),
}

#[derive(Args)]
struct ParamsArgs {
    /// Domain size.
    #[arg(long)]
    k: u64,
    /// Privacy budget.
    #[arg(long)]
    eps: f64,
    #[arg(long, value_parser = parse_variant, default_value = "symmetric")]
    variant: RapporVariant,
    /// Accuracy slack steering the prime selection.
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
    /// Explicit prime modulus (skips the selection rule).
    #[arg(long)]
    modulus: Option<u64>,
    /// Base field size for the generalized scheme (embeds k in GF(q)^d).
    #[arg(long)]
    q: Option<u64>,
}

#[derive(Args)]
struct FreqEncodeArgs {
    /// Input file: one index per line; # comments allowed.
    #[arg(long)]
    input: PathBuf,
    /// Output report file.
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    k: u64,
    #[arg(long)]
    eps: f64,
    #[arg(long, value_parser = parse_freq_scheme, default_value = "pi-rappor")]
    scheme: Scheme,
    #[arg(long, value_parser = parse_variant, default_value = "symmetric")]
    variant: RapporVariant,
    /// Accuracy slack steering the prime selection.
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
    /// Base field size for the gen-pi-rappor scheme.
    #[arg(long, default_value_t = 3)]
    q: u64,
    #[arg(long, default_value_t = 42)]
    master_seed: u64,
}

#[derive(Args)]
struct MeanEncodeArgs {
    /// Input file: one comma-separated unit vector per line.
    #[arg(long)]
    input: PathBuf,
    /// Output report file.
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    eps: f64,
    #[arg(long, value_parser = parse_mean_scheme, default_value = "priv-unit")]
    scheme: Scheme,
    /// Cap budget split in [0, 1]; omitted means proxy-optimal.
    #[arg(long)]
    theta: Option<f64>,
    /// Transmitted seed width for seed-bearing schemes.
    #[arg(long, default_value_t = 64)]
    seed_bits: u32,
    /// Rejection-sampler failure mass for the compressed scheme.
    #[arg(long, default_value_t = 0.01)]
    gamma: f64,
    #[arg(long, default_value_t = 42)]
    master_seed: u64,
}

#[derive(Args)]
struct AggregateArgs {
    /// Report file produced by the matching encode subcommand.
    #[arg(long)]
    input: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Flat key = value config file.
    #[arg(long)]
    config: PathBuf,
}

fn parse_variant(s: &str) -> std::result::Result<RapporVariant, String> {
    match s {
        "symmetric" => Ok(RapporVariant::DeletionSymmetric),
        "asymmetric" => Ok(RapporVariant::ReplacementAsymmetric),
        other => Err(format!("expected symmetric or asymmetric, got {other:?}")),
    }
}

fn parse_freq_scheme(s: &str) -> std::result::Result<Scheme, String> {
    let scheme = Scheme::from_name(s).map_err(|e| e.to_string())?;
    if scheme.task() != Task::Freq {
        return Err(format!("{s} is not a frequency scheme"));
    }
    Ok(scheme)
}

fn parse_mean_scheme(s: &str) -> std::result::Result<Scheme, String> {
    let scheme = Scheme::from_name(s).map_err(|e| e.to_string())?;
    if scheme.task() != Task::Mean {
        return Err(format!("{s} is not a mean scheme"));
    }
    Ok(scheme)
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Params(args) => params(args),
        Cmd::Freq(FreqCmd::Encode(args)) => freq_encode(args),
        Cmd::Freq(FreqCmd::Aggregate(args)) => freq_aggregate(args),
        Cmd::Mean(MeanCmd::Encode(args)) => mean_encode(args),
        Cmd::Mean(MeanCmd::Aggregate(args)) => mean_aggregate(args),
        Cmd::Simulate(args) => simulate(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn params(args: ParamsArgs) -> Result<()> {
    let params = match (args.modulus, args.q) {
        (Some(_), Some(_)) => {
            return Err(Error::InvalidParams("--modulus and --q are mutually exclusive".into()))
        }
        (Some(p), None) => RapporParams::with_modulus(args.k, p, args.eps, args.variant)?,
        (None, Some(q)) => RapporParams::choose_params_general(args.k, q, args.eps, args.variant)?,
        (None, None) => RapporParams::choose_params(args.k, args.eps, args.variant, args.delta)?,
    };
    let bits = params.message_bits();
    println!(
        "{:#}",
        serde_json::json!({
            "k": params.k(),
            "modulus": params.modulus(),
            "dim": params.dim(),
            "threshold": params.threshold(),
            "alpha0": params.alpha0(),
            "alpha1": params.alpha1(),
            "requested_eps": params.requested_eps(),
            "realized_eps": params.realized_eps(),
            "message_bits": bits,
            "bytes_per_message": bits.div_ceil(8),
        })
    );
    Ok(())
}

fn read_lines(path: &PathBuf) -> Result<Vec<String>> {
    Ok(std::fs::read_to_string(path)?
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim().to_string())
        .filter(|l| !l.is_empty())
        .collect())
}

fn freq_encode(args: FreqEncodeArgs) -> Result<()> {
    let params = match args.scheme {
        Scheme::GenPiRappor => {
            RapporParams::choose_params_general(args.k, args.q, args.eps, args.variant)?
        }
        _ => RapporParams::choose_params(args.k, args.eps, args.variant, args.delta)?,
    };
    let inputs: Vec<u64> = read_lines(&args.input)?
        .iter()
        .map(|l| l.parse().map_err(|_| Error::InvalidParams(format!("bad index {l:?}"))))
        .collect::<Result<_>>()?;
    if inputs.is_empty() {
        return Err(Error::InvalidParams("input file holds no indices".into()));
    }
    let mut records = Vec::with_capacity(inputs.len());
    for (i, &j) in inputs.iter().enumerate() {
        let mut st = client_stream(args.master_seed, 0, i as u64);
        records.push(match args.scheme {
            Scheme::Rappor => WireRecord::Bits(rappor_encode(j, &params, &mut st)?),
            _ => WireRecord::Affine(gen_pi_rappor_encode(j, &params, &mut st)?),
        });
    }
    let header = freq_header(args.scheme.tag(), &params, records.len() as u64);
    let mut out = BufWriter::new(File::create(&args.output)?);
    write_reports(&mut out, &header, &records)?;
    out.flush()?;
    println!(
        "wrote {} {} reports to {} ({} B/message, realized eps {:.6})",
        records.len(),
        args.scheme.name(),
        args.output.display(),
        header.bytes_per_message(),
        params.realized_eps(),
    );
    Ok(())
}

fn freq_aggregate(args: AggregateArgs) -> Result<()> {
    let (header, records) = read_reports(&mut BufReader::new(File::open(&args.input)?))?;
    let estimate = aggregate_freq_records(&header, records)?;
    println!(
        "{:#}",
        serde_json::json!({
            "scheme": header.scheme.name(),
            "k": header.k_or_d,
            "n": estimate.n,
            "eps": header.eps,
            "estimates": estimate.estimates,
        })
    );
    Ok(())
}

fn mean_encode(args: MeanEncodeArgs) -> Result<()> {
    let vectors: Vec<Vec<f64>> = read_lines(&args.input)?
        .iter()
        .map(|l| {
            l.split(',')
                .map(|a| {
                    a.trim()
                        .parse()
                        .map_err(|_| Error::InvalidParams(format!("bad coordinate {a:?}")))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    if vectors.is_empty() {
        return Err(Error::InvalidParams("input file holds no vectors".into()));
    }
    let d = vectors[0].len() as u32;
    let (theta, params) = match args.scheme {
        Scheme::PrivHs => (0.0, None),
        _ => {
            let theta = match args.theta {
                Some(t) => t,
                None => optimize_split(d, args.eps)?.0,
            };
            (theta, Some(MeanParams::priv_unit(d, args.eps, theta)?))
        }
    };
    let prg = PrgSpec::chacha(args.seed_bits, 64 * d as u64)?;
    let compression = match args.scheme {
        Scheme::PrivUnitCompressed => Some(CompressionConfig::pure(args.eps, args.gamma, prg)?),
        _ => None,
    };
    let mut records = Vec::with_capacity(vectors.len());
    for (i, x) in vectors.iter().enumerate() {
        let mut st = client_stream(args.master_seed, 0, i as u64);
        records.push(match args.scheme {
            Scheme::PrivHs => match priv_hs_encode(x, args.eps, &prg, &mut st)? {
                MeanReport::HsSeed { seed, sign } => WireRecord::SeedSign { seed, sign },
                _ => unreachable!("hemisphere encoder emits seed + sign"),
            },
            Scheme::PrivUnit => WireRecord::Vector(priv_unit_encode(
                x,
                params.as_ref().expect("cap params present"),
                &mut st,
            )?),
            _ => WireRecord::SeedOnly {
                seed: compress_priv_unit(
                    x,
                    params.as_ref().expect("cap params present"),
                    compression.as_ref().expect("compression configured"),
                    &mut st,
                )?,
            },
        });
    }
    let header =
        mean_header(args.scheme.tag(), d, args.eps, theta, args.seed_bits, 1, records.len() as u64);
    let mut out = BufWriter::new(File::create(&args.output)?);
    write_reports(&mut out, &header, &records)?;
    out.flush()?;
    println!(
        "wrote {} {} reports to {} ({} B/message)",
        records.len(),
        args.scheme.name(),
        args.output.display(),
        header.bytes_per_message(),
    );
    Ok(())
}

fn mean_aggregate(args: AggregateArgs) -> Result<()> {
    let (header, records) = read_reports(&mut BufReader::new(File::open(&args.input)?))?;
    let estimate = aggregate_mean_records(&header, &records)?;
    println!(
        "{:#}",
        serde_json::json!({
            "scheme": header.scheme.name(),
            "d": header.k_or_d,
            "n": estimate.n,
            "eps": header.eps,
            "mean": estimate.mean,
        })
    );
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.config)?;
    let config = ExperimentConfig::parse(&text)?;
    let rows = run_experiment(&config)?;
    match config.resolved_out_dir() {
        Some(dir) => {
            let (csv_path, json_path) = write_outputs(&rows, &dir)?;
            println!("wrote {} and {}", csv_path.display(), json_path.display());
        }
        None => write_csv(&rows, std::io::stdout().lock())?,
    }
    Ok(())
}
