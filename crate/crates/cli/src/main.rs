//! `fhdpsk` command-line front end. Each subcommand wraps one library stage.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fhdpsk::channel::FadingMode;
use fhdpsk::config::{load_sweep, load_waveform, parse_complex};
use fhdpsk::io::{
    read_bits, read_capture, write_ber_csv, write_bits, write_capture, write_report_metadata,
    IqFormat, IqMetadata,
};
use fhdpsk::{
    apply_channel, calibrate_noise_for_snr, decode_capture, estimate_snr, run_ber_sweep,
    synthesize_train, CaptureOptions, ChannelState, FhCodeMatrix, IqBuffer, SweepSpec,
    WaveformConfig, WaveformParams,
};

#[derive(Parser)]
#[command(
    name = "fhdpsk",
    version,
    about = "FH differential-PSK modem and BER harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a transmit capture and its ground-truth bits (`<out>.bits`).
    Generate(GenerateArgs),
    /// Pass a transmit capture through the channel model.
    Impair(ImpairArgs),
    /// Decode a received capture.
    Decode(DecodeArgs),
    /// Run a BER sweep and write the report CSV.
    Sweep(SweepArgs),
    /// Estimate SNR from a signal capture and a noise-only capture.
    Snr(SnrArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Waveform TOML; bench defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Bits file (`0`/`1` text) or `random:N`.
    #[arg(long)]
    bits: String,
    #[arg(long)]
    out: PathBuf,
    /// Seed for `random:N`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ImpairArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Capture SNR in dB, measured on the noiseless received signal.
    /// Noiseless when omitted.
    #[arg(long, allow_hyphen_values = true)]
    snr_db: Option<f64>,
    #[arg(long, default_value_t = 0)]
    delay: usize,
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    dc: String,
    #[arg(long, default_value_t = 1.0)]
    iq_gain: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    iq_phase: f64,
    #[arg(long, default_value = "1", allow_hyphen_values = true)]
    alpha: String,
    /// Direction of the receiver, radians.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    theta: f64,
    /// Redraw the gain as Rayleigh every this many transmit samples.
    #[arg(long, value_name = "BLOCK_LEN")]
    rayleigh: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write a noise-only capture (same impairments, independent noise).
    #[arg(long)]
    noise_out: Option<PathBuf>,
}

#[derive(Args)]
struct DecodeArgs {
    /// Waveform TOML; bench defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out_bits: PathBuf,
    /// Ground-truth bits; prints the BER when given.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    iq_gain: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    iq_phase: f64,
    /// Pulses in the capture; read from the sidecar when omitted.
    #[arg(long)]
    num_pulses: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep TOML; defaults when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; all cores when omitted.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct SnrArgs {
    #[arg(long)]
    noisy: PathBuf,
    #[arg(long)]
    noise: PathBuf,
}

fn waveform(path: Option<&Path>) -> Result<(WaveformConfig, FhCodeMatrix)> {
    match path {
        Some(p) => Ok(load_waveform(p)?),
        None => {
            let config = WaveformParams::bench_default(fhdpsk::Modulation::Dbpsk).build()?;
            let codes = FhCodeMatrix::default_for(&config);
            Ok((config, codes))
        }
    }
}

fn bits_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".bits");
    PathBuf::from(s)
}

fn single_stream(path: &Path) -> Result<(IqBuffer<f64>, IqMetadata)> {
    let (mut streams, meta) = read_capture::<f64>(path)?;
    if streams.len() != 1 {
        bail!(
            "{} holds {} antenna streams; pass it through `impair` first",
            path.display(),
            streams.len()
        );
    }
    Ok((streams.remove(0), meta))
}

fn generate(args: GenerateArgs) -> Result<()> {
    let (config, codes) = waveform(args.config.as_deref())?;
    let bits = match args.bits.strip_prefix("random:") {
        Some(n) => {
            let n: usize = n
                .parse()
                .with_context(|| format!("bad bit count in `{}`", args.bits))?;
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            (0..n).map(|_| rng.random_range(0..2u8)).collect()
        }
        None => read_bits(&args.bits)?,
    };
    if bits.is_empty() {
        bail!("no bits to send");
    }
    let tx = synthesize_train::<f64>(&config, &codes, &bits)?;
    let meta = IqMetadata {
        num_pulses: Some(tx.num_pulses()),
        element_positions: Some(config.element_positions().to_vec()),
        ..IqMetadata::new(IqFormat::Cf32le, config.sample_rate_hz())
    };
    write_capture(&tx.antennas, meta, &args.out)?;
    write_bits(tx.payload_bits(), bits_path(&args.out))?;
    println!(
        "wrote {} pulses ({} bits, {} padding) on {} antenna(s) to {}",
        tx.num_pulses(),
        bits.len(),
        tx.pad_bits,
        config.num_antennas(),
        args.out.display()
    );
    Ok(())
}

fn impair(args: ImpairArgs) -> Result<()> {
    let (streams, meta) = read_capture::<f64>(&args.input)?;
    let positions = match &meta.element_positions {
        Some(p) => p.clone(),
        None if streams.len() == 1 => vec![0.0],
        None => bail!("{}: sidecar lacks element_positions", args.input.display()),
    };
    let mut state = ChannelState {
        alpha: parse_complex(&args.alpha)?,
        theta: args.theta,
        ..Default::default()
    };
    if let Some(block_len) = args.rayleigh {
        state.fading = FadingMode::RayleighBlock { block_len };
    }
    if let Some(db) = args.snr_db {
        let clean = apply_channel(&streams, &positions, &state, args.seed)?;
        state.noise_variance =
            calibrate_noise_for_snr(clean.mean_power(), fhdpsk::num::db_to_linear(db))?;
    }
    state.delay = args.delay;
    state.dc_offset = parse_complex(&args.dc)?;
    state.iq_gain = args.iq_gain;
    state.iq_phase = args.iq_phase;

    let rx = apply_channel(&streams, &positions, &state, args.seed)?;
    let out_meta = IqMetadata {
        num_pulses: meta.num_pulses,
        ..IqMetadata::new(IqFormat::Cf32le, rx.sample_rate())
    };
    write_capture(std::slice::from_ref(&rx), out_meta.clone(), &args.out)?;
    println!(
        "wrote {} samples to {} (noise variance {:.6e})",
        rx.len(),
        args.out.display(),
        state.noise_variance
    );

    if let Some(path) = args.noise_out {
        let silent: Vec<IqBuffer<f64>> = streams
            .iter()
            .map(|s| IqBuffer::zeros(s.len(), s.sample_rate()))
            .collect();
        let noise_seed = ChaCha8Rng::seed_from_u64(args.seed).random::<u64>();
        let noise = apply_channel(&silent, &positions, &state, noise_seed)?;
        write_capture(std::slice::from_ref(&noise), out_meta, &path)?;
        println!("wrote noise-only capture to {}", path.display());
    }
    Ok(())
}

fn decode(args: DecodeArgs) -> Result<()> {
    let (config, codes) = waveform(args.config.as_deref())?;
    let (rx, meta) = single_stream(&args.input)?;
    if rx.sample_rate() != config.sample_rate_hz() {
        bail!(
            "capture sample rate {} Hz differs from the configured {} Hz",
            rx.sample_rate(),
            config.sample_rate_hz()
        );
    }
    let options = CaptureOptions {
        iq_gain: args.iq_gain,
        iq_phase: args.iq_phase,
        num_pulses: args.num_pulses.or(meta.num_pulses),
        ..Default::default()
    };
    let decoded = decode_capture(&rx, &codes, &config, &options)?;
    write_bits(&decoded.frame.bits, &args.out_bits)?;
    println!("delay {}", decoded.timing.delay);
    println!("pulses {}", decoded.timing.num_pulses);
    println!("coherence {:.4}", decoded.timing.coherence);
    println!("bits {}", decoded.frame.bits.len());
    if decoded.frame.erasures() > 0 {
        println!("erasures {}", decoded.frame.erasures());
    }
    if let Some(path) = args.truth {
        let truth = read_bits(&path)?;
        let errors = decoded.frame.count_bit_errors(&truth)?;
        println!("errors {errors}");
        println!("ber {:e}", errors as f64 / truth.len() as f64);
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let spec = match &args.spec {
        Some(p) => load_sweep(p)?,
        None => SweepSpec::default(),
    };
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let report = run_ber_sweep(&spec, workers)?;
    write_ber_csv(&report, &args.out)?;
    let meta = write_report_metadata(&report, &args.out)?;
    for p in &report.points {
        let oracle = p
            .oracle_ber
            .map_or_else(|| "-".to_string(), |o| format!("{o:.3e}"));
        println!(
            "{} {:>6.2} dB  ber {:.3e}  oracle {oracle}  ({} errors / {} bits)",
            p.modulation, p.snr_db, p.ber, p.bit_errors, p.bits_sent
        );
    }
    println!("wrote {} and {}", args.out.display(), meta.display());
    Ok(())
}

fn snr(args: SnrArgs) -> Result<()> {
    let (noisy, _) = single_stream(&args.noisy)?;
    let (noise, _) = single_stream(&args.noise)?;
    let est = estimate_snr(&noisy, &noise)?;
    println!("snr_linear {}", est.linear);
    match est.db() {
        Some(db) => println!("snr_db {db:.4}"),
        None => println!("snr_db undefined (estimate is not positive)"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Impair(a) => impair(a),
        Command::Decode(a) => decode(a),
        Command::Sweep(a) => sweep(a),
        Command::Snr(a) => snr(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {line}");
            ExitCode::FAILURE
        }
    }
}
