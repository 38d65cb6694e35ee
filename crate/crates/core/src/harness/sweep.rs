//! SNR operating-point search and threshold-pair sweeps.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{measure_activity, run_blocks, RunConfig};
use crate::channel::Mode;
use crate::error::{Error, Result};

/// Bisection settings for [`snr_operating_point`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpointOptions {
    pub target_ber: f64,
    pub lo_db: f64,
    pub hi_db: f64,
    /// Stop once the bracket is at most this wide.
    pub resolution_db: f64,
    /// Vectors per probe before the confidence test may end it.
    pub min_vectors: u64,
    /// Vectors after which the probe decision is forced by the point estimate.
    pub max_vectors: u64,
}

impl Default for OpointOptions {
    fn default() -> Self {
        OpointOptions {
            target_ber: 0.01,
            lo_db: -10.0,
            hi_db: 40.0,
            resolution_db: 0.1,
            min_vectors: 1_000,
            max_vectors: 20_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub snr_db: f64,
    pub ber: f64,
    pub vectors: u64,
    /// BER at or below the target.
    pub achieved: bool,
    /// Decided by the point estimate at the vector cap, not by the interval.
    pub forced: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    /// `None` when the target is not met anywhere in the bracket.
    pub snr_db: Option<f64>,
    pub probes: Vec<Probe>,
}

/// 95% Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

fn probe(cfg: &RunConfig, mode: Mode, snr_db: f64, opts: &OpointOptions) -> Result<Probe> {
    let bpv = cfg.system.bits_per_vector() as u64;
    let target = opts.target_ber;
    let t = run_blocks(cfg, mode, snr_db, opts.max_vectors, |t| {
        if t.vectors < opts.min_vectors {
            return false;
        }
        let (lo, hi) = wilson_interval(t.bit_errors, t.vectors * bpv);
        hi < target || lo > target
    })?;
    let ber = t.ber(bpv as usize);
    let (lo, hi) = wilson_interval(t.bit_errors, t.vectors * bpv);
    let decided = hi < target || lo > target;
    Ok(Probe {
        snr_db,
        ber,
        vectors: t.vectors,
        achieved: ber <= target,
        forced: !decided,
    })
}

/// Minimum SNR reaching `target_ber`, by bisection with common random numbers.
///
/// Returns the midpoint of the final bracket.
pub fn snr_operating_point(cfg: &RunConfig, mode: Mode, opts: &OpointOptions) -> Result<OperatingPoint> {
    cfg.validate()?;
    if !(opts.target_ber > 0.0 && opts.target_ber < 0.5) {
        return Err(Error::InvalidTarget(opts.target_ber));
    }
    if !(opts.lo_db < opts.hi_db && opts.resolution_db > 0.0) {
        return Err(Error::InvalidSnrList(format!(
            "bracket [{}, {}] step {}",
            opts.lo_db, opts.hi_db, opts.resolution_db
        )));
    }
    cfg.install(|| {
        let mut probes = Vec::new();
        let top = probe(cfg, mode, opts.hi_db, opts)?;
        probes.push(top);
        if !top.achieved {
            return Ok(OperatingPoint { snr_db: None, probes });
        }
        let bottom = probe(cfg, mode, opts.lo_db, opts)?;
        probes.push(bottom);
        if bottom.achieved {
            return Ok(OperatingPoint {
                snr_db: Some(opts.lo_db),
                probes,
            });
        }
        let (mut lo, mut hi) = (opts.lo_db, opts.hi_db);
        while hi - lo > opts.resolution_db {
            let mid = 0.5 * (lo + hi);
            let p = probe(cfg, mode, mid, opts)?;
            probes.push(p);
            if p.achieved {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(OperatingPoint {
            snr_db: Some(0.5 * (lo + hi)),
            probes,
        })
    })?
}

/// `n` logarithmically spaced thresholds from `2^-9` to `2^-1`.
pub fn default_threshold_grid() -> Vec<f64> {
    log_grid(2f64.powi(-9), 0.5, 8)
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log2(), hi.log2());
    (0..n)
        .map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp2())
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub opoint: OpointOptions,
    /// Channel draws for each activity estimate.
    pub activity_draws: u64,
    pub activity_vectors_per_draw: usize,
    /// Also measure activity at one common SNR for every pair.
    pub reference_snr_db: Option<f64>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            opoint: OpointOptions::default(),
            activity_draws: 1_000,
            activity_vectors_per_draw: 10,
            reference_snr_db: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub tau_w: f64,
    pub tau_y: f64,
    /// Mean activity at the pair's own operating point (or the bracket top
    /// when unreached).
    pub mean_activity_rate: f64,
    pub snr_operating_point_db: Option<f64>,
    pub activity_snr_db: f64,
    pub reference_activity: Option<f64>,
    /// Probes of the operating-point search: a sampled BER curve.
    pub ber_curve: Vec<Probe>,
    pub pareto: bool,
}

/// Evaluate one threshold pair in LMMSE-SPADE mode.
pub fn sweep_pair(cfg: &RunConfig, tau_w: f64, tau_y: f64, opts: &SweepOptions) -> Result<SweepRecord> {
    let pcfg = cfg.clone().with_thresholds(tau_w, tau_y);
    let op = snr_operating_point(&pcfg, Mode::LmmseSpade, &opts.opoint)?;
    let activity_snr_db = op.snr_db.unwrap_or(opts.opoint.hi_db);
    let (act, reference) = pcfg.install(|| -> Result<_> {
        let act = measure_activity(
            &pcfg,
            Mode::LmmseSpade,
            activity_snr_db,
            opts.activity_draws,
            opts.activity_vectors_per_draw,
        )?;
        let reference = opts
            .reference_snr_db
            .map(|snr| {
                measure_activity(
                    &pcfg,
                    Mode::LmmseSpade,
                    snr,
                    opts.activity_draws,
                    opts.activity_vectors_per_draw,
                )
                .map(|t| t.activity_mean())
            })
            .transpose()?;
        Ok((act, reference))
    })??;
    Ok(SweepRecord {
        tau_w,
        tau_y,
        mean_activity_rate: act.activity_mean(),
        snr_operating_point_db: op.snr_db,
        activity_snr_db,
        reference_activity: reference,
        ber_curve: op.probes,
        pareto: false,
    })
}

fn op_key(r: &SweepRecord) -> f64 {
    r.snr_operating_point_db.unwrap_or(f64::INFINITY)
}

/// Indices of records not dominated in (activity, operating point).
pub fn pareto_frontier(records: &[SweepRecord]) -> Vec<usize> {
    (0..records.len())
        .filter(|&i| {
            let a = &records[i];
            !records.iter().any(|b| {
                let le = b.mean_activity_rate <= a.mean_activity_rate && op_key(b) <= op_key(a);
                let lt = b.mean_activity_rate < a.mean_activity_rate || op_key(b) < op_key(a);
                le && lt
            })
        })
        .collect()
}

/// Sweep every pair of the two grids; records sorted by activity.
pub fn threshold_sweep(
    cfg: &RunConfig,
    tau_w_grid: &[f64],
    tau_y_grid: &[f64],
    opts: &SweepOptions,
) -> Result<Vec<SweepRecord>> {
    threshold_sweep_with(cfg, tau_w_grid, tau_y_grid, opts, |_| {})
}

pub fn threshold_sweep_with(
    cfg: &RunConfig,
    tau_w_grid: &[f64],
    tau_y_grid: &[f64],
    opts: &SweepOptions,
    mut on_record: impl FnMut(&SweepRecord),
) -> Result<Vec<SweepRecord>> {
    if tau_w_grid.is_empty() || tau_y_grid.is_empty() {
        return Err(Error::InvalidConfig("threshold grids must be non-empty".into()));
    }
    let mut records = Vec::with_capacity(tau_w_grid.len() * tau_y_grid.len());
    for &tw in tau_w_grid {
        for &ty in tau_y_grid {
            let r = sweep_pair(cfg, tw, ty, opts)?;
            on_record(&r);
            records.push(r);
        }
    }
    records.sort_by(|a, b| {
        a.mean_activity_rate
            .total_cmp(&b.mean_activity_rate)
            .then(op_key(a).total_cmp(&op_key(b)))
    });
    for i in pareto_frontier(&records) {
        records[i].pareto = true;
    }
    Ok(records)
}

pub const SWEEP_CSV_HEADER: &str =
    "tau_w,tau_y,activity_mean,snr_operating_point_db,activity_snr_db,reference_activity,pareto";

pub fn sweep_to_csv(records: &[SweepRecord]) -> String {
    let mut s = String::from(SWEEP_CSV_HEADER);
    s.push('\n');
    for r in records {
        let op = r
            .snr_operating_point_db
            .map_or_else(|| "unreached".to_string(), |v| v.to_string());
        let reference = r.reference_activity.map_or_else(String::new, |v| v.to_string());
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.tau_w, r.tau_y, r.mean_activity_rate, op, r.activity_snr_db, reference, r.pareto as u8
        );
    }
    s
}

/// Mean activity for every pair at one common SNR; `[i_w][i_y]`.
///
/// All pairs see the same channel draws and vectors.
pub fn activity_grid(
    cfg: &RunConfig,
    snr_db: f64,
    tau_w_grid: &[f64],
    tau_y_grid: &[f64],
    draws: u64,
    vectors_per_draw: usize,
) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    cfg.install(|| {
        tau_w_grid
            .iter()
            .map(|&tw| {
                tau_y_grid
                    .iter()
                    .map(|&ty| {
                        let pcfg = cfg.clone().with_thresholds(tw, ty);
                        measure_activity(&pcfg, Mode::LmmseSpade, snr_db, draws, vectors_per_draw)
                            .map(|t| t.activity_mean())
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()
    })?
}
