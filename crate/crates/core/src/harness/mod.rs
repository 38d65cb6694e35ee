//! Monte Carlo BER engine.
//!
//! Work is split into coherence blocks: one channel draw, one preprocessing
//! step, then `vectors_per_block` receive vectors. Block `i` draws everything
//! from its own ChaCha stream derived from `(seed, i)`, and draws happen in
//! the same order at every SNR and in every mode, so curves share common
//! random numbers. Blocks run in parallel but are merged in index order and
//! the stop rule is evaluated in that order, so results do not depend on the
//! number of workers.

pub mod config;
pub mod report;
pub mod sweep;

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{
    draw_channel, draw_symbols, draw_unit_noise, read_channels_file, receive_with_noise, ChannelKind,
    ChannelMatrix, Domain, Mode, SystemConfig,
};
use crate::equalizer::{Equalizer, EqualizerSettings};
use crate::error::{Error, Result};
use crate::qam::Constellation;

pub use report::{emit_report, BerPoint, ReportFormat, RunReport};
pub use sweep::{
    activity_grid, default_threshold_grid, pareto_frontier, snr_operating_point, threshold_sweep,
    OperatingPoint, OpointOptions, SweepOptions, SweepRecord,
};

/// Where channel realizations come from.
#[derive(Clone, Debug)]
pub enum ChannelSource {
    Synthetic(ChannelKind),
    /// Recorded antenna-domain realizations, used round-robin by block index.
    Recorded {
        label: String,
        channels: Arc<Vec<ChannelMatrix>>,
    },
}

impl ChannelSource {
    pub fn label(&self) -> &str {
        match self {
            ChannelSource::Synthetic(k) => k.as_str(),
            ChannelSource::Recorded { label, .. } => label,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let channels = read_channels_file(path)?;
        if channels.is_empty() {
            return Err(Error::InvalidConfig(format!("{} holds no channels", path.display())));
        }
        Ok(ChannelSource::Recorded {
            label: "file".into(),
            channels: Arc::new(channels),
        })
    }

    fn channel(&self, b: usize, u: usize, block: u64, rng: &mut ChaCha8Rng) -> Result<ChannelMatrix> {
        match self {
            ChannelSource::Synthetic(kind) => draw_channel(*kind, b, u, rng),
            ChannelSource::Recorded { channels, .. } => {
                let h = &channels[(block % channels.len() as u64) as usize];
                if h.domain != Domain::Antenna || h.rows() != b || h.cols() != u {
                    return Err(Error::InvalidConfig(format!(
                        "recorded channel is {} {}x{}, expected antenna {b}x{u}",
                        h.domain.as_str(),
                        h.rows(),
                        h.cols()
                    )));
                }
                Ok(h.clone())
            }
        }
    }
}

/// When to stop collecting vectors at one SNR.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub min_bit_errors: u64,
    pub max_vectors: u64,
    /// Never stop before this many vectors, even with enough errors.
    pub min_vectors: u64,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            min_bit_errors: 500,
            max_vectors: 1_000_000,
            min_vectors: 0,
        }
    }
}

/// Everything a Monte Carlo run needs besides the SNR list.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub channel: ChannelSource,
    pub equalizer: EqualizerSettings,
    pub vectors_per_block: usize,
    pub stop: StopRule,
    /// Worker threads; 0 uses the rayon default.
    pub threads: usize,
}

impl RunConfig {
    pub fn new(system: SystemConfig, kind: ChannelKind) -> Self {
        RunConfig {
            system,
            channel: ChannelSource::Synthetic(kind),
            equalizer: EqualizerSettings::default(),
            vectors_per_block: 100,
            stop: StopRule::default(),
            threads: 0,
        }
    }

    pub fn with_thresholds(mut self, tau_w: f64, tau_y: f64) -> Self {
        self.equalizer.tau_w = tau_w;
        self.equalizer.tau_y = tau_y;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        if self.vectors_per_block == 0 {
            return Err(Error::InvalidConfig("vectors_per_block must be >= 1".into()));
        }
        for (name, t) in [("tau_w", self.equalizer.tau_w), ("tau_y", self.equalizer.tau_y)] {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name}={t}")));
            }
        }
        if self.stop.max_vectors == 0 {
            return Err(Error::InvalidConfig("max_vectors must be >= 1".into()));
        }
        Ok(())
    }

    /// Run `f` on a pool with the configured number of workers.
    pub fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
        Ok(pool.install(f))
    }
}

/// Independent stream for coherence block `block`.
pub fn block_rng(seed: u64, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    rng
}

/// Tallies for a run of consecutive vectors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tally {
    pub vectors: u64,
    pub bit_errors: u64,
    pub executed: u64,
    pub total: u64,
    pub min_rate: f64,
    pub max_rate: f64,
}

impl Default for Tally {
    fn default() -> Self {
        Tally {
            vectors: 0,
            bit_errors: 0,
            executed: 0,
            total: 0,
            min_rate: f64::INFINITY,
            max_rate: f64::NEG_INFINITY,
        }
    }
}

impl Tally {
    pub fn merge(&mut self, o: &Tally) {
        self.vectors += o.vectors;
        self.bit_errors += o.bit_errors;
        self.executed += o.executed;
        self.total += o.total;
        self.min_rate = self.min_rate.min(o.min_rate);
        self.max_rate = self.max_rate.max(o.max_rate);
    }

    pub fn activity_mean(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.executed as f64 / self.total as f64
        }
    }

    pub fn ber(&self, bits_per_vector: usize) -> f64 {
        if self.vectors == 0 {
            0.0
        } else {
            self.bit_errors as f64 / (self.vectors as f64 * bits_per_vector as f64)
        }
    }
}

/// Simulate one coherence block at `snr_db` with `vectors` receive vectors.
pub fn simulate_block(cfg: &RunConfig, mode: Mode, snr_db: f64, block: u64, vectors: usize) -> Result<Tally> {
    let sys = &cfg.system;
    let constellation = Constellation::new(sys.modulation, sys.es)?;
    let mut rng = block_rng(sys.seed, block);
    let h = cfg.channel.channel(sys.b, sys.u, block, &mut rng)?;
    let n0 = sys.n0_for_snr_db(snr_db);
    let eq = Equalizer::prepare(&h, n0, sys.es, &[mode.domain()], cfg.equalizer)?;
    let mut tally = Tally::default();
    let mut decided = Vec::with_capacity(sys.bits_per_vector());
    for _ in 0..vectors {
        let s = draw_symbols(&constellation, sys.u, &mut rng);
        let noise = draw_unit_noise(sys.b, &mut rng);
        let y = receive_with_noise(&h, &s.symbols, &noise, n0)?;
        let (s_hat, report) = eq.equalize(mode, &y)?;
        decided.clear();
        constellation.slice_into(&s_hat, &mut decided);
        let errors = decided.iter().zip(&s.bits).filter(|(a, b)| a != b).count();
        let rate = report.rate();
        tally.merge(&Tally {
            vectors: 1,
            bit_errors: errors as u64,
            executed: report.executed,
            total: report.total,
            min_rate: rate,
            max_rate: rate,
        });
    }
    Ok(tally)
}

const BATCH_BLOCKS: u64 = 16;

/// Accumulate blocks `0, 1, ...` in order until `done` says stop.
///
/// Blocks are simulated in parallel batches; anything computed past the
/// stopping block is discarded, so the result is schedule independent.
pub(crate) fn run_blocks(
    cfg: &RunConfig,
    mode: Mode,
    snr_db: f64,
    max_vectors: u64,
    mut done: impl FnMut(&Tally) -> bool,
) -> Result<Tally> {
    let vpb = cfg.vectors_per_block as u64;
    let max_blocks = max_vectors.div_ceil(vpb);
    let mut tally = Tally::default();
    let mut next = 0u64;
    while next < max_blocks {
        let end = (next + BATCH_BLOCKS).min(max_blocks);
        let batch: Vec<Result<Tally>> = (next..end)
            .into_par_iter()
            .map(|i| {
                let n = vpb.min(max_vectors - i * vpb) as usize;
                simulate_block(cfg, mode, snr_db, i, n)
            })
            .collect();
        for t in batch {
            tally.merge(&t?);
            if done(&tally) {
                return Ok(tally);
            }
        }
        next = end;
    }
    Ok(tally)
}

fn validate_snrs(snrs: &[f64]) -> Result<()> {
    if let Some(s) = snrs.iter().find(|s| !s.is_finite()) {
        return Err(Error::InvalidSnrList(format!("non-finite SNR {s}")));
    }
    Ok(())
}

/// Inclusive arithmetic SNR grid.
pub fn snr_range(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(start.is_finite() && stop.is_finite() && step.is_finite()) || step <= 0.0 || stop < start {
        return Err(Error::InvalidSnrList(format!(
            "start={start} stop={stop} step={step}"
        )));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    // round away float drift so reports carry clean values
    Ok((0..n)
        .map(|k| ((start + k as f64 * step) * 1e9).round() / 1e9)
        .collect())
}

/// BER curve over `snr_list_db`.
pub fn run_ber(cfg: &RunConfig, snr_list_db: &[f64], mode: Mode, stop: &StopRule) -> Result<RunReport> {
    cfg.validate()?;
    validate_snrs(snr_list_db)?;
    let started = Instant::now();
    let bpv = cfg.system.bits_per_vector();
    let points = cfg.install(|| {
        snr_list_db
            .iter()
            .map(|&snr| {
                let t = run_blocks(cfg, mode, snr, stop.max_vectors, |t| {
                    t.bit_errors >= stop.min_bit_errors && t.vectors >= stop.min_vectors
                })?;
                Ok(BerPoint::from_tally(snr, &t, bpv))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(RunReport::new(cfg, mode, points, started.elapsed().as_secs_f64()))
}

/// Mean multiplier activity at one SNR over `draws` channel draws.
pub fn measure_activity(cfg: &RunConfig, mode: Mode, snr_db: f64, draws: u64, vectors_per_draw: usize) -> Result<Tally> {
    let local = RunConfig {
        vectors_per_block: vectors_per_draw,
        ..cfg.clone()
    };
    run_blocks(&local, mode, snr_db, draws * vectors_per_draw as u64, |_| false)
}

/// Equalize one vector in every mode on a shared realization; test helper
/// for cross-mode comparisons.
pub fn equalize_all_modes(
    h: &ChannelMatrix,
    n0: f64,
    es: f64,
    settings: EqualizerSettings,
    y: &[Complex64],
) -> Result<[Vec<Complex64>; 3]> {
    let eq = Equalizer::prepare(h, n0, es, &[Domain::Antenna, Domain::Beamspace], settings)?;
    Ok([
        eq.equalize(Mode::LmmseA, y)?.0,
        eq.equalize(Mode::LmmseB, y)?.0,
        eq.equalize(Mode::LmmseSpade, y)?.0,
    ])
}
