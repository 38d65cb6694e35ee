//! Command-line front end: BER curves, threshold sweeps, operating points
//! and datapath reports.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use spade_core::channel::{
    draw_channel, draw_symbols, draw_unit_noise, receive_with_noise, write_channels_bin, write_channels_csv,
    ChannelKind, Mode, SystemConfig,
};
use spade_core::datapath::{
    effective_throughput, power_proxy, simulate_stream, throughput_bps, PipelineConfig, PowerCoefficients,
};
use spade_core::equalizer::{Equalizer, Precision};
use spade_core::harness::config::{parse_list, ConfigFile};
use spade_core::harness::report::render_report;
use spade_core::harness::sweep::{sweep_to_csv, threshold_sweep_with};
use spade_core::harness::{
    block_rng, default_threshold_grid, run_ber, snr_operating_point, snr_range, ChannelSource, OpointOptions,
    ReportFormat, RunConfig, StopRule, SweepOptions,
};
use spade_core::qam::Constellation;
use spade_core::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "spade", version, about = "Beamspace LMMSE equalizer simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// BER versus SNR for one mode.
    Ber(Common),
    /// Sweep threshold pairs: activity and operating point per pair.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated tau_w values.
        #[arg(long)]
        tau_w_grid: Option<String>,
        /// Comma-separated tau_y values.
        #[arg(long)]
        tau_y_grid: Option<String>,
        #[arg(long)]
        target_ber: Option<f64>,
        /// Channel draws per activity estimate.
        #[arg(long)]
        activity_draws: Option<u64>,
        /// Also report activity at this SNR for every pair.
        #[arg(long)]
        reference_snr: Option<f64>,
    },
    /// Minimum SNR reaching a target BER.
    Opoint {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        target_ber: Option<f64>,
    },
    /// Cycle, throughput and activity report of the streaming datapath.
    Datapath {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        clock_hz: Option<f64>,
        /// Vectors per weight load.
        #[arg(long)]
        coherence: Option<u64>,
        /// SNR of the simulated stream.
        #[arg(long)]
        snr: Option<f64>,
        /// Write the per-cycle mute bitmap here.
        #[arg(long)]
        trace_out: Option<PathBuf>,
        /// Write the loaded weights and comparison bits here.
        #[arg(long)]
        weights_dump: Option<PathBuf>,
    },
    /// Draw synthetic channels and write them as CSV or binary (`.bin`).
    ExportChannels {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        count: Option<u64>,
    },
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// key = value file supplying defaults for any flag.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    b: Option<usize>,
    #[arg(long)]
    u: Option<usize>,
    #[arg(long = "mod")]
    modulation: Option<u32>,
    /// los, nlos, awgn or file.
    #[arg(long)]
    channel: Option<String>,
    #[arg(long)]
    channel_file: Option<PathBuf>,
    #[arg(long)]
    snr_start: Option<f64>,
    #[arg(long)]
    snr_stop: Option<f64>,
    #[arg(long)]
    snr_step: Option<f64>,
    #[arg(long)]
    tau_w: Option<f64>,
    #[arg(long)]
    tau_y: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    threads: Option<usize>,
    /// fixed or float.
    #[arg(long)]
    precision: Option<String>,
    #[arg(long)]
    vectors_per_block: Option<usize>,
    #[arg(long)]
    min_errors: Option<u64>,
    #[arg(long)]
    max_vectors: Option<u64>,
}

/// Flags merged with the config file.
struct Resolved {
    file: ConfigFile,
    run: RunConfig,
    mode: Mode,
    out: Option<PathBuf>,
    format: ReportFormat,
    snr_start: f64,
    snr_stop: f64,
    snr_step: f64,
}

fn parse_opt<T: FromStr<Err = Error>>(file: &ConfigFile, flag: Option<String>, key: &str, default: &str) -> Result<T> {
    file.resolve(flag, key, default.to_string())?.parse()
}

impl Common {
    fn resolve(self) -> Result<Resolved> {
        let file = match &self.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        let f = &file;
        let mode: Mode = parse_opt(f, self.mode, "mode", "lmmse-spade")?;
        let system = SystemConfig {
            b: f.resolve(self.b, "b", 64)?,
            u: f.resolve(self.u, "u", 16)?,
            modulation: f.resolve(self.modulation, "mod", 16)?,
            es: 1.0,
            n0: 1.0,
            mode,
            seed: f.resolve(self.seed, "seed", 1)?,
        };
        let channel_name: String = f.resolve(self.channel, "channel", "los".into())?;
        let channel = if channel_name.eq_ignore_ascii_case("file") {
            let path: Option<PathBuf> = match self.channel_file {
                Some(p) => Some(p),
                None => f.get::<String>("channel_file")?.map(PathBuf::from),
            };
            let path = path.ok_or_else(|| Error::InvalidConfig("--channel file needs --channel-file".into()))?;
            ChannelSource::from_file(&path)?
        } else {
            ChannelSource::Synthetic(channel_name.parse()?)
        };
        let mut run = RunConfig::new(system, ChannelKind::Los);
        run.channel = channel;
        run.equalizer.precision = parse_opt::<Precision>(f, self.precision, "precision", "fixed")?;
        run.equalizer.tau_w = f.resolve(self.tau_w, "tau_w", 0.0)?;
        run.equalizer.tau_y = f.resolve(self.tau_y, "tau_y", 0.0)?;
        run.vectors_per_block = f.resolve(self.vectors_per_block, "vectors_per_block", 100)?;
        run.threads = f.resolve(self.threads, "threads", 0)?;
        let default_stop = StopRule::default();
        run.stop = StopRule {
            min_bit_errors: f.resolve(self.min_errors, "min_errors", default_stop.min_bit_errors)?,
            max_vectors: f.resolve(self.max_vectors, "max_vectors", default_stop.max_vectors)?,
            min_vectors: 0,
        };
        run.validate()?;
        let out = match self.out {
            Some(p) => Some(p),
            None => f.get::<String>("out")?.map(PathBuf::from),
        };
        Ok(Resolved {
            format: parse_opt(f, self.format, "format", "csv")?,
            snr_start: f.resolve(self.snr_start, "snr_start", 0.0)?,
            snr_stop: f.resolve(self.snr_stop, "snr_stop", 20.0)?,
            snr_step: f.resolve(self.snr_step, "snr_step", 2.0)?,
            file,
            run,
            mode,
            out,
        })
    }
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn cmd_ber(common: Common) -> Result<()> {
    let r = common.resolve()?;
    let snrs = snr_range(r.snr_start, r.snr_stop, r.snr_step)?;
    let report = run_ber(&r.run, &snrs, r.mode, &r.run.stop)?;
    write_output(r.out.as_deref(), &render_report(&report, r.format)?)
}

fn opoint_options(file: &ConfigFile, target: Option<f64>) -> Result<OpointOptions> {
    let d = OpointOptions::default();
    Ok(OpointOptions {
        target_ber: file.resolve(target, "target_ber", d.target_ber)?,
        lo_db: file.resolve(None, "opoint_lo_db", d.lo_db)?,
        hi_db: file.resolve(None, "opoint_hi_db", d.hi_db)?,
        ..d
    })
}

fn grid(file: &ConfigFile, flag: Option<String>, key: &str) -> Result<Vec<f64>> {
    match flag.or(file.get::<String>(key)?) {
        Some(s) => parse_list(&s),
        None => Ok(default_threshold_grid()),
    }
}

fn cmd_sweep(
    common: Common,
    tau_w_grid: Option<String>,
    tau_y_grid: Option<String>,
    target_ber: Option<f64>,
    activity_draws: Option<u64>,
    reference_snr: Option<f64>,
) -> Result<()> {
    let r = common.resolve()?;
    let f = &r.file;
    let twg = grid(f, tau_w_grid, "tau_w_grid")?;
    let tyg = grid(f, tau_y_grid, "tau_y_grid")?;
    let d = SweepOptions::default();
    let opts = SweepOptions {
        opoint: opoint_options(f, target_ber)?,
        activity_draws: f.resolve(activity_draws, "activity_draws", d.activity_draws)?,
        reference_snr_db: match reference_snr {
            Some(v) => Some(v),
            None => f.get("reference_snr")?,
        },
        ..d
    };
    let records = threshold_sweep_with(&r.run, &twg, &tyg, &opts, |rec| {
        eprintln!(
            "tau_w={} tau_y={} activity={:.4} op={}",
            rec.tau_w,
            rec.tau_y,
            rec.mean_activity_rate,
            rec.snr_operating_point_db
                .map_or_else(|| "unreached".into(), |v| format!("{v:.2}"))
        );
    })?;
    let text = match r.format {
        ReportFormat::Csv => sweep_to_csv(&records),
        ReportFormat::Json => to_json(&records)?,
    };
    write_output(r.out.as_deref(), &text)
}

#[derive(Serialize)]
struct OpointReport {
    mode: Mode,
    b: usize,
    u: usize,
    modulation: u32,
    channel_kind: String,
    tau_w: f64,
    tau_y: f64,
    seed: u64,
    target_ber: f64,
    snr_operating_point_db: Option<f64>,
    probes: Vec<spade_core::harness::sweep::Probe>,
}

fn cmd_opoint(common: Common, target_ber: Option<f64>) -> Result<()> {
    let r = common.resolve()?;
    let opts = opoint_options(&r.file, target_ber)?;
    let op = snr_operating_point(&r.run, r.mode, &opts)?;
    let s = &r.run.system;
    let rep = OpointReport {
        mode: r.mode,
        b: s.b,
        u: s.u,
        modulation: s.modulation,
        channel_kind: r.run.channel.label().to_string(),
        tau_w: r.run.equalizer.tau_w,
        tau_y: r.run.equalizer.tau_y,
        seed: s.seed,
        target_ber: opts.target_ber,
        snr_operating_point_db: op.snr_db,
        probes: op.probes,
    };
    let text = match r.format {
        ReportFormat::Json => to_json(&rep)?,
        ReportFormat::Csv => format!(
            "mode,B,U,M,channel_kind,target_ber,snr_operating_point_db,tau_w,tau_y,seed\n{},{},{},{},{},{},{},{},{},{}\n",
            rep.mode,
            rep.b,
            rep.u,
            rep.modulation,
            rep.channel_kind,
            rep.target_ber,
            rep.snr_operating_point_db
                .map_or_else(|| "unreached".into(), |v| v.to_string()),
            rep.tau_w,
            rep.tau_y,
            rep.seed
        ),
    };
    write_output(r.out.as_deref(), &text)
}

#[derive(Serialize)]
struct DatapathReport {
    mode: Mode,
    b: usize,
    u: usize,
    modulation: u32,
    clock_hz: f64,
    latency_cycles: usize,
    coherence_vectors: u64,
    snr_db: f64,
    cycles: u64,
    throughput_bps: f64,
    effective_throughput_bps: f64,
    activity: f64,
    muted_registers: u64,
    power_proxy: f64,
}

struct DatapathArgs {
    clock_hz: Option<f64>,
    coherence: Option<u64>,
    snr: Option<f64>,
    trace_out: Option<PathBuf>,
    weights_dump: Option<PathBuf>,
}

fn cmd_datapath(common: Common, a: DatapathArgs) -> Result<()> {
    let r = common.resolve()?;
    let f = &r.file;
    let s = r.run.system.clone();
    let mut pipe = PipelineConfig::for_antennas(s.b);
    pipe.clock_hz = f.resolve(a.clock_hz, "clock_hz", pipe.clock_hz)?;
    if !(pipe.clock_hz > 0.0 && pipe.clock_hz.is_finite()) {
        return Err(Error::InvalidConfig(format!("clock_hz={}", pipe.clock_hz)));
    }
    let t = f.resolve(a.coherence, "coherence", 1000)?;
    let snr_db = f.resolve(a.snr, "snr", 20.0)?;
    if r.run.equalizer.precision != Precision::Fixed {
        return Err(Error::InvalidConfig("the datapath model is fixed-point only".into()));
    }

    let n0 = s.n0_for_snr_db(snr_db);
    let mut rng = block_rng(s.seed, 0);
    let h = match &r.run.channel {
        ChannelSource::Synthetic(kind) => draw_channel(*kind, s.b, s.u, &mut rng)?,
        ChannelSource::Recorded { channels, .. } => channels[0].clone(),
    };
    let domain = r.mode.domain();
    let eq = Equalizer::prepare(&h, n0, s.es, &[domain], r.run.equalizer)?;
    let weights = eq.weights(domain).expect("fixed-point weights");
    let constellation = Constellation::new(s.modulation, s.es)?;
    let vectors = (0..t)
        .map(|_| {
            let sym = draw_symbols(&constellation, s.u, &mut rng);
            let noise = draw_unit_noise(s.b, &mut rng);
            let y = receive_with_noise(&h, &sym.symbols, &noise, n0)?;
            eq.front_end().prepare(domain, &y)
        })
        .collect::<Result<Vec<_>>>()?;
    let res = simulate_stream(weights, &vectors, &pipe, r.mode.save_power())?;

    if let Some(p) = &a.trace_out {
        res.trace.write_bitmap(std::io::BufWriter::new(std::fs::File::create(p)?))?;
    }
    if let Some(p) = &a.weights_dump {
        weights.write_dump(std::io::BufWriter::new(std::fs::File::create(p)?))?;
    }

    let rep = DatapathReport {
        mode: r.mode,
        b: s.b,
        u: s.u,
        modulation: s.modulation,
        clock_hz: pipe.clock_hz,
        latency_cycles: pipe.latency(),
        coherence_vectors: t,
        snr_db,
        cycles: res.cycles,
        throughput_bps: throughput_bps(pipe.clock_hz, s.u, s.modulation)?,
        effective_throughput_bps: effective_throughput(pipe.clock_hz, s.u, s.modulation, t, pipe.latency())?,
        activity: res.activity.rate(),
        muted_registers: res.trace.count(),
        power_proxy: power_proxy(&res.activity, &PowerCoefficients::activity_only(), r.mode)?,
    };
    let text = match r.format {
        ReportFormat::Json => to_json(&rep)?,
        ReportFormat::Csv => format!(
            "mode,B,U,M,clock_hz,latency_cycles,coherence_vectors,snr_db,cycles,throughput_bps,effective_throughput_bps,activity,muted_registers,power_proxy\n{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            rep.mode,
            rep.b,
            rep.u,
            rep.modulation,
            rep.clock_hz,
            rep.latency_cycles,
            rep.coherence_vectors,
            rep.snr_db,
            rep.cycles,
            rep.throughput_bps,
            rep.effective_throughput_bps,
            rep.activity,
            rep.muted_registers,
            rep.power_proxy
        ),
    };
    write_output(r.out.as_deref(), &text)
}

fn cmd_export(common: Common, count: Option<u64>) -> Result<()> {
    let r = common.resolve()?;
    let n = r.file.resolve(count, "count", 100)?;
    let kind = match &r.run.channel {
        ChannelSource::Synthetic(k) => *k,
        ChannelSource::Recorded { .. } => {
            return Err(Error::InvalidConfig("export needs a synthetic channel kind".into()))
        }
    };
    let s = &r.run.system;
    let channels = (0..n)
        .map(|i| draw_channel(kind, s.b, s.u, &mut block_rng(s.seed, i)))
        .collect::<Result<Vec<_>>>()?;
    let out = r
        .out
        .ok_or_else(|| Error::InvalidConfig("export needs --out".into()))?;
    let w = std::io::BufWriter::new(std::fs::File::create(&out)?);
    if out.extension().is_some_and(|e| e == "bin") {
        write_channels_bin(w, &channels)
    } else {
        write_channels_csv(w, &channels)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ber(c) => cmd_ber(c),
        Command::Sweep {
            common,
            tau_w_grid,
            tau_y_grid,
            target_ber,
            activity_draws,
            reference_snr,
        } => cmd_sweep(common, tau_w_grid, tau_y_grid, target_ber, activity_draws, reference_snr),
        Command::Opoint { common, target_ber } => cmd_opoint(common, target_ber),
        Command::Datapath {
            common,
            clock_hz,
            coherence,
            snr,
            trace_out,
            weights_dump,
        } => cmd_datapath(
            common,
            DatapathArgs {
                clock_hz,
                coherence,
                snr,
                trace_out,
                weights_dump,
            },
        ),
        Command::ExportChannels { common, count } => cmd_export(common, count),
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error: usage: {}", one_line(first));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", e.kind(), one_line(&e.to_string()));
            ExitCode::FAILURE
        }
    }
}
