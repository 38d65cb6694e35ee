//! Cycle-level model of the streaming SPADE matrix-vector multiplier.
//!
//! The array holds `U` dot-product units of `B` complex multipliers each.
//! A `U`-cycle weight-loading phase writes one row per cycle while the input
//! comparators test against `tau_w`; afterwards one vector is accepted per
//! cycle and compared against `tau_y`. Every multiplier has an input
//! register that is frozen when save-power is on and both comparison bits
//! of its operands are set; a zero-mux then replaces the product. Results
//! leave the adder tree `latency` cycles after the vector entered.

use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::channel::Mode;
use crate::equalizer::{skip_mask, ActivityReport, BeamVector, CompareBits, EqualizerWeights};
use crate::error::{Error, Result};
use crate::numerics::{ComplexAcc, ComplexFixed};

/// Real multipliers (and input registers) per complex multiplier.
pub const REGS_PER_CM: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub input_reg_stages: usize,
    pub tree_stages: usize,
    pub clock_hz: f64,
}

impl PipelineConfig {
    /// One input stage plus a register after every two adder layers.
    pub fn for_antennas(b: usize) -> Self {
        let layers = b.max(1).next_power_of_two().trailing_zeros() as usize;
        PipelineConfig {
            input_reg_stages: 1,
            tree_stages: layers.div_ceil(2),
            clock_hz: 720e6,
        }
    }

    pub fn latency(&self) -> usize {
        (self.input_reg_stages + self.tree_stages).max(1)
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig::for_antennas(64)
    }
}

/// Per-cycle register disable flags, bit-packed.
///
/// Bit index within a cycle is `(u * B + b) * 4 + register`; registers are
/// ordered `w.re*y.re`, `w.im*y.im`, `w.re*y.im`, `w.im*y.re`. Only cycles
/// with at least one muted register are stored.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MuteTrace {
    u: usize,
    b: usize,
    cycles: Vec<(u64, Vec<u8>)>,
}

/// One muted register.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct MuteEvent {
    pub cycle: u64,
    /// `u * B + b`.
    pub cm: usize,
    pub register: usize,
}

const TRACE_MAGIC: &[u8; 4] = b"SPMT";
const TRACE_VERSION: u32 = 1;

impl MuteTrace {
    pub fn new(u: usize, b: usize) -> Self {
        MuteTrace {
            u,
            b,
            cycles: Vec::new(),
        }
    }

    fn bits_per_cycle(&self) -> usize {
        self.u * self.b * REGS_PER_CM
    }

    fn push_cycle(&mut self, cycle: u64, flags: &[bool]) {
        if !flags.iter().any(|&f| f) {
            return;
        }
        let mut packed = vec![0u8; flags.len().div_ceil(8)];
        for (i, _) in flags.iter().enumerate().filter(|(_, f)| **f) {
            packed[i / 8] |= 1 << (i % 8);
        }
        self.cycles.push((cycle, packed));
    }

    pub fn is_muted(&self, cycle: u64, cm: usize, register: usize) -> bool {
        let bit = cm * REGS_PER_CM + register;
        self.cycles
            .binary_search_by_key(&cycle, |(c, _)| *c)
            .map(|i| self.cycles[i].1[bit / 8] & (1 << (bit % 8)) != 0)
            .unwrap_or(false)
    }

    /// Total number of muted register-cycles.
    pub fn count(&self) -> u64 {
        self.cycles
            .iter()
            .map(|(_, p)| p.iter().map(|b| b.count_ones() as u64).sum::<u64>())
            .sum()
    }

    pub fn events(&self) -> impl Iterator<Item = MuteEvent> + '_ {
        self.cycles.iter().flat_map(move |(cycle, packed)| {
            (0..self.bits_per_cycle())
                .filter(move |&i| packed[i / 8] & (1 << (i % 8)) != 0)
                .map(move |i| MuteEvent {
                    cycle: *cycle,
                    cm: i / REGS_PER_CM,
                    register: i % REGS_PER_CM,
                })
        })
    }

    /// `cycle,cm,register` per muted register.
    pub fn write_summary_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "cycle,cm,register")?;
        for e in self.events() {
            writeln!(w, "{},{},{}", e.cycle, e.cm, e.register)?;
        }
        Ok(())
    }

    /// Binary: `b"SPMT"`, version u32, U u32, B u32, record count u64, then
    /// per record the cycle (u64) and `ceil(U*B*4/8)` packed bytes. All
    /// integers little endian.
    pub fn write_bitmap<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(TRACE_MAGIC)?;
        w.write_all(&TRACE_VERSION.to_le_bytes())?;
        w.write_all(&(self.u as u32).to_le_bytes())?;
        w.write_all(&(self.b as u32).to_le_bytes())?;
        w.write_all(&(self.cycles.len() as u64).to_le_bytes())?;
        for (cycle, packed) in &self.cycles {
            w.write_all(&cycle.to_le_bytes())?;
            w.write_all(packed)?;
        }
        Ok(())
    }

    pub fn read_bitmap(bytes: &[u8]) -> Result<Self> {
        let bad = || Error::Parse("malformed mute trace".into());
        let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
            let s = bytes.get(*pos..*pos + n).ok_or_else(bad)?;
            *pos += n;
            Ok(s)
        };
        let mut pos = 0;
        if take(&mut pos, 4)? != TRACE_MAGIC {
            return Err(bad());
        }
        let word = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap());
        if word(take(&mut pos, 4)?) != TRACE_VERSION {
            return Err(bad());
        }
        let u = word(take(&mut pos, 4)?) as usize;
        let b = word(take(&mut pos, 4)?) as usize;
        let n = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize;
        let mut trace = MuteTrace::new(u, b);
        let len = trace.bits_per_cycle().div_ceil(8);
        for _ in 0..n {
            let cycle = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
            trace.cycles.push((cycle, take(&mut pos, len)?.to_vec()));
        }
        Ok(trace)
    }
}

/// One result leaving the adder tree.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamOutput {
    pub vector: usize,
    /// Cycle at which the result is valid at the output.
    pub cycle: u64,
    pub accumulators: Vec<ComplexAcc>,
    pub executed: usize,
}

#[derive(Clone, Debug)]
pub struct StreamResult {
    pub outputs: Vec<StreamOutput>,
    pub cycles: u64,
    pub trace: MuteTrace,
    pub activity: ActivityReport,
    /// Comparison bits captured during weight loading, row-major.
    pub loaded_w_bits: Vec<CompareBits>,
}

/// State of one complex multiplier.
#[derive(Clone, Copy)]
struct Cm {
    w: ComplexFixed,
    cw: CompareBits,
    /// Operand held in each input register; frozen while muted.
    regs: [i64; REGS_PER_CM],
}

/// Run `vectors` through the array after loading `weights`.
pub fn simulate_stream(
    weights: &EqualizerWeights,
    vectors: &[BeamVector],
    cfg: &PipelineConfig,
    save_power: bool,
) -> Result<StreamResult> {
    let (u, b) = (weights.users(), weights.antennas());
    if let Some(v) = vectors.iter().find(|v| v.len() != b) {
        return Err(Error::DimensionMismatch {
            expected: b,
            got: v.len(),
        });
    }
    let latency = cfg.latency();
    let total_cycles = (u + vectors.len() + latency) as u64;
    let tau_w_raw = weights.tau_w_raw();
    let zero = ComplexFixed::zero(weights.format());
    let mut cms = vec![
        Cm {
            w: zero,
            cw: CompareBits::default(),
            regs: [0; REGS_PER_CM],
        };
        u * b
    ];
    let frac = weights.format().frac_bits()
        + vectors.first().and_then(|v| v.y.first()).map_or(0, |y| y.format().frac_bits());

    let mut trace = MuteTrace::new(u, b);
    let mut in_flight: VecDeque<(u64, StreamOutput)> = VecDeque::new();
    let mut outputs = Vec::with_capacity(vectors.len());
    let mut activity = ActivityReport::default();
    let mut flags = vec![false; u * b * REGS_PER_CM];

    for cycle in 0..total_cycles {
        while in_flight.front().is_some_and(|(ready, _)| *ready == cycle) {
            outputs.push(in_flight.pop_front().unwrap().1);
        }
        let c = cycle as usize;
        if c < u {
            // LW high: row c on the ports, comparators against tau_w
            for (j, w) in weights.row(c).entries.iter().enumerate() {
                let cm = &mut cms[c * b + j];
                cm.w = *w;
                cm.cw = CompareBits {
                    re: w.re().raw().abs() < tau_w_raw,
                    im: w.im().raw().abs() < tau_w_raw,
                };
            }
        } else if c < u + vectors.len() {
            let i = c - u;
            let x = &vectors[i];
            let cy: Vec<CompareBits> = x
                .y
                .iter()
                .map(|y| CompareBits {
                    re: y.re().raw().abs() < x.tau_y_raw,
                    im: y.im().raw().abs() < x.tau_y_raw,
                })
                .collect();
            let mut accs = Vec::with_capacity(u);
            let mut executed = 0;
            flags.iter_mut().for_each(|f| *f = false);
            for row in 0..u {
                let mut acc = ComplexAcc::new(frac);
                for (j, y) in x.y.iter().enumerate() {
                    let idx = row * b + j;
                    let cm = &mut cms[idx];
                    let mute = if save_power {
                        skip_mask(cm.cw, cy[j])
                    } else {
                        [false; REGS_PER_CM]
                    };
                    let operands = [y.re().raw(), y.im().raw(), y.im().raw(), y.re().raw()];
                    let weight_parts = [cm.w.re().raw(), cm.w.im().raw(), cm.w.re().raw(), cm.w.im().raw()];
                    let mut prods = [0i128; REGS_PER_CM];
                    for r in 0..REGS_PER_CM {
                        if mute[r] {
                            flags[idx * REGS_PER_CM + r] = true;
                        } else {
                            cm.regs[r] = operands[r];
                            executed += 1;
                        }
                        // the multiplier still sees the frozen operand; the mux drops it
                        let p = weight_parts[r] as i128 * cm.regs[r] as i128;
                        prods[r] = if mute[r] { 0 } else { p };
                    }
                    acc.re += prods[0] - prods[1];
                    acc.im += prods[2] + prods[3];
                }
                accs.push(acc);
            }
            trace.push_cycle(cycle, &flags);
            activity.merge(&ActivityReport::single(executed, REGS_PER_CM * u * b));
            in_flight.push_back((
                cycle + latency as u64,
                StreamOutput {
                    vector: i,
                    cycle: cycle + latency as u64,
                    accumulators: accs,
                    executed,
                },
            ));
        }
    }
    while in_flight.front().is_some_and(|(ready, _)| *ready <= total_cycles) {
        outputs.push(in_flight.pop_front().unwrap().1);
    }
    debug_assert!(in_flight.is_empty());

    Ok(StreamResult {
        outputs,
        cycles: total_cycles,
        trace,
        activity,
        loaded_w_bits: cms.iter().map(|cm| cm.cw).collect(),
    })
}

fn bits_per_symbol(m: u32) -> Result<f64> {
    if ![4, 16, 64, 256].contains(&m) {
        return Err(Error::InvalidModulation(m));
    }
    Ok(m.trailing_zeros() as f64)
}

/// Steady-state throughput: one vector of `U` symbols per cycle.
pub fn throughput_bps(clock_hz: f64, u: usize, m: u32) -> Result<f64> {
    Ok(u as f64 * bits_per_symbol(m)? * clock_hz)
}

/// Throughput with one weight reload and pipeline drain per `t` vectors.
pub fn effective_throughput(clock_hz: f64, u: usize, m: u32, t: u64, latency: usize) -> Result<f64> {
    if t == 0 {
        return Err(Error::InvalidConfig("coherence interval must be >= 1 vector".into()));
    }
    let t = t as f64;
    Ok(throughput_bps(clock_hz, u, m)? * t / (t + u as f64 + latency as f64))
}

/// Linear power model in multiplier activity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerCoefficients {
    pub fixed: f64,
    pub per_activity: f64,
    pub fft_on: f64,
}

impl PowerCoefficients {
    /// Dynamic multiplier power only; beamspace and antenna modes cost the
    /// same at full activity.
    pub fn activity_only() -> Self {
        PowerCoefficients {
            fixed: 0.0,
            per_activity: 1.0,
            fft_on: 0.0,
        }
    }
}

pub fn power_proxy(report: &ActivityReport, coeffs: &PowerCoefficients, mode: Mode) -> Result<f64> {
    power_proxy_rate(report.rate(), coeffs, mode)
}

pub fn power_proxy_rate(activity: f64, coeffs: &PowerCoefficients, mode: Mode) -> Result<f64> {
    let c = coeffs;
    if [c.fixed, c.per_activity, c.fft_on].iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::InvalidConfig("power coefficients must be nonnegative".into()));
    }
    let fft = if mode == Mode::LmmseA { 0.0 } else { c.fft_on };
    Ok(c.fixed + c.per_activity * activity + fft)
}
