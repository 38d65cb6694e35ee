//! LMMSE preprocessing and the threshold-gated matrix-vector multiply.
//!
//! Each row of the LMMSE matrix is scaled by `alpha_u = 1 / (linf~(row) + eps)`
//! so that one weight threshold serves every row. A complex product is four
//! real products; each is skipped when both of its operands fall strictly
//! below their thresholds (`tau_w` for weights, `tau_y` for inputs). A
//! skipped product contributes exactly zero and is not counted as executed.

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::beamspace::{Beamformer, TwiddleConfig};
use crate::channel::{ChannelMatrix, Domain, Mode};
use crate::error::{Error, Result};
use crate::numerics::{linf_tilde, ComplexAcc, ComplexFixed, QFormat};

pub use crate::qam::slice;

/// Default row-scaling guard.
pub const DEFAULT_EPSILON: f64 = 1.0 / 1024.0;

/// Threshold comparison bits for the real and imaginary parts of one operand.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct CompareBits {
    pub re: bool,
    pub im: bool,
}

impl CompareBits {
    fn of(z: &ComplexFixed, tau_raw: i64) -> Self {
        CompareBits {
            re: z.re().raw().abs() < tau_raw,
            im: z.im().raw().abs() < tau_raw,
        }
    }

    fn of_float(z: Complex64, tau: f64) -> Self {
        CompareBits {
            re: z.re.abs() < tau,
            im: z.im.abs() < tau,
        }
    }
}

/// Which of the four real products of `w * y` are skipped.
///
/// Order: `w.re*y.re`, `w.im*y.im`, `w.re*y.im`, `w.im*y.re`.
#[inline]
pub fn skip_mask(cw: CompareBits, cy: CompareBits) -> [bool; 4] {
    [cw.re && cy.re, cw.im && cy.im, cw.re && cy.im, cw.im && cy.re]
}

/// `(H^H H + (N0/Es) I)^{-1} H^H`, a `U x B` matrix in the channel's domain.
pub fn compute_lmmse(h: &ChannelMatrix, n0: f64, es: f64) -> Result<DMatrix<Complex64>> {
    if !(es > 0.0 && n0 >= 0.0 && n0.is_finite() && es.is_finite()) {
        return Err(Error::InvalidConfig(format!("N0={n0} Es={es}")));
    }
    let hm = h.to_dmatrix();
    let hh = hm.adjoint();
    let mut gram = &hh * &hm;
    let rho = n0 / es;
    for i in 0..gram.nrows() {
        gram[(i, i)] += Complex64::new(rho, 0.0);
    }
    let scale = (0..gram.nrows()).map(|i| gram[(i, i)].re).fold(0.0, f64::max);
    let chol = gram.cholesky().ok_or(Error::SingularGram)?;
    // rank-deficient Gram matrices can survive the factorization with a
    // pivot at rounding level
    let min_pivot = chol.l_dirty().diagonal().iter().map(|z| z.norm_sqr()).fold(f64::INFINITY, f64::min);
    if min_pivot <= scale * 1e-13 {
        return Err(Error::SingularGram);
    }
    let v = chol.solve(&hh);
    if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::SingularGram);
    }
    Ok(v)
}

/// Row scaling: `W = diag(alpha) V`.
pub fn scale_rows(v: &DMatrix<Complex64>, epsilon: f64) -> Result<(DMatrix<Complex64>, Vec<f64>)> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidConfig(format!("epsilon={epsilon} must be > 0")));
    }
    let mut w = v.clone();
    let mut alpha = Vec::with_capacity(v.nrows());
    for u in 0..v.nrows() {
        let row: Vec<Complex64> = v.row(u).iter().copied().collect();
        let a = 1.0 / (linf_tilde(&row)? + epsilon);
        w.row_mut(u).iter_mut().for_each(|z| *z *= a);
        alpha.push(a);
    }
    Ok((w, alpha))
}

/// Quantized, scaled equalization matrix as loaded into the multiplier array.
#[derive(Clone, Debug, PartialEq)]
pub struct EqualizerWeights {
    u: usize,
    b: usize,
    format: QFormat,
    entries: Vec<ComplexFixed>,
    w_bits: Vec<CompareBits>,
    alpha: Vec<f64>,
    tau_w: f64,
    tau_w_raw: i64,
    pub domain: Domain,
}

/// Borrowed row of an [`EqualizerWeights`].
#[derive(Clone, Copy, Debug)]
pub struct WeightRow<'a> {
    pub entries: &'a [ComplexFixed],
    pub bits: &'a [CompareBits],
}

pub fn build_weights(
    w_real: &DMatrix<Complex64>,
    alpha: &[f64],
    tau_w: f64,
    format: QFormat,
    domain: Domain,
) -> Result<EqualizerWeights> {
    let (u, b) = w_real.shape();
    if alpha.len() != u {
        return Err(Error::DimensionMismatch {
            expected: u,
            got: alpha.len(),
        });
    }
    if let Some(&a) = alpha.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
        return Err(Error::InvalidConfig(format!("alpha {a} must be positive")));
    }
    let tau_w_raw = format.threshold_raw(tau_w)?;
    let mut entries = Vec::with_capacity(u * b);
    let mut w_bits = Vec::with_capacity(u * b);
    for row in 0..u {
        let vals: Vec<Complex64> = w_real.row(row).iter().copied().collect();
        let norm = linf_tilde(&vals)?;
        if norm >= 1.0 {
            return Err(Error::RowNotScaled { row, norm });
        }
        for z in vals {
            let q = ComplexFixed::quantize(z, format)?;
            w_bits.push(CompareBits::of(&q, tau_w_raw));
            entries.push(q);
        }
    }
    Ok(EqualizerWeights {
        u,
        b,
        format,
        entries,
        w_bits,
        alpha: alpha.to_vec(),
        tau_w,
        tau_w_raw,
        domain,
    })
}

impl EqualizerWeights {
    pub fn users(&self) -> usize {
        self.u
    }

    pub fn antennas(&self) -> usize {
        self.b
    }

    pub fn format(&self) -> QFormat {
        self.format
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn tau_w(&self) -> f64 {
        self.tau_w
    }

    pub fn tau_w_raw(&self) -> i64 {
        self.tau_w_raw
    }

    pub fn entries(&self) -> &[ComplexFixed] {
        &self.entries
    }

    pub fn bits(&self) -> &[CompareBits] {
        &self.w_bits
    }

    pub fn row(&self, u: usize) -> WeightRow<'_> {
        let r = u * self.b..(u + 1) * self.b;
        WeightRow {
            entries: &self.entries[r.clone()],
            bits: &self.w_bits[r],
        }
    }

    /// Hex dump of raw weights and comparison bits, one entry per line.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        let digits = self.format.total_bits().div_ceil(4) as usize;
        writeln!(
            w,
            "# weights domain={} format={} u={} b={} tau_w={} tau_w_raw={}",
            self.domain.as_str(),
            self.format,
            self.u,
            self.b,
            self.tau_w,
            self.tau_w_raw
        )?;
        for (u, a) in self.alpha.iter().enumerate() {
            writeln!(w, "alpha {u} {a}")?;
        }
        for (i, (z, c)) in self.entries.iter().zip(&self.w_bits).enumerate() {
            writeln!(
                w,
                "w {} {} {:0d$x} {:0d$x} {} {}",
                i / self.b,
                i % self.b,
                z.re().to_bits(),
                z.im().to_bits(),
                c.re as u8,
                c.im as u8,
                d = digits
            )?;
        }
        Ok(())
    }
}

/// Quantized input vector with its comparison bits.
#[derive(Clone, Debug, PartialEq)]
pub struct BeamVector {
    pub y: Vec<ComplexFixed>,
    pub y_bits: Vec<CompareBits>,
    pub tau_y: f64,
    pub tau_y_raw: i64,
}

pub fn tag_input(y_raw: &[Complex64], tau_y: f64, format: QFormat) -> Result<BeamVector> {
    let tau_y_raw = format.threshold_raw(tau_y)?;
    let y = y_raw
        .iter()
        .map(|&z| ComplexFixed::quantize(z, format))
        .collect::<Result<Vec<_>>>()?;
    let y_bits = y.iter().map(|z| CompareBits::of(z, tau_y_raw)).collect();
    Ok(BeamVector {
        y,
        y_bits,
        tau_y,
        tau_y_raw,
    })
}

impl BeamVector {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        let format = self.y.first().map_or(QFormat::INPUT, |z| z.format());
        let digits = format.total_bits().div_ceil(4) as usize;
        writeln!(
            w,
            "# input format={} b={} tau_y={} tau_y_raw={}",
            format,
            self.y.len(),
            self.tau_y,
            self.tau_y_raw
        )?;
        for (b, (z, c)) in self.y.iter().zip(&self.y_bits).enumerate() {
            writeln!(
                w,
                "y {} {:0d$x} {:0d$x} {} {}",
                b,
                z.re().to_bits(),
                z.im().to_bits(),
                c.re as u8,
                c.im as u8,
                d = digits
            )?;
        }
        Ok(())
    }
}

/// One inner product `sum_b W[u,b] y[b]` with exact accumulation.
///
/// Returns the accumulator and the number of real products executed.
pub fn spade_dotp(row: WeightRow<'_>, x: &BeamVector, save_power: bool) -> Result<(ComplexAcc, usize)> {
    if row.entries.len() != x.y.len() {
        return Err(Error::DimensionMismatch {
            expected: row.entries.len(),
            got: x.y.len(),
        });
    }
    let frac = match (row.entries.first(), x.y.first()) {
        (Some(w), Some(y)) => w.format().frac_bits() + y.format().frac_bits(),
        _ => 0,
    };
    let mut acc = ComplexAcc::new(frac);
    let mut executed = 0usize;
    for (((w, cw), y), cy) in row
        .entries
        .iter()
        .zip(row.bits)
        .zip(&x.y)
        .zip(&x.y_bits)
    {
        let (wr, wi) = (w.re().raw() as i128, w.im().raw() as i128);
        let (yr, yi) = (y.re().raw() as i128, y.im().raw() as i128);
        let skip = if save_power {
            skip_mask(*cw, *cy)
        } else {
            [false; 4]
        };
        if !skip[0] {
            acc.re += wr * yr;
            executed += 1;
        }
        if !skip[1] {
            acc.re -= wi * yi;
            executed += 1;
        }
        if !skip[2] {
            acc.im += wr * yi;
            executed += 1;
        }
        if !skip[3] {
            acc.im += wi * yr;
            executed += 1;
        }
    }
    Ok((acc, executed))
}

/// `W y` for every row; returns accumulators and executed product count.
pub fn mvm(weights: &EqualizerWeights, x: &BeamVector, save_power: bool) -> Result<(Vec<ComplexAcc>, usize)> {
    let mut out = Vec::with_capacity(weights.u);
    let mut executed = 0;
    for u in 0..weights.u {
        let (acc, e) = spade_dotp(weights.row(u), x, save_power)?;
        out.push(acc);
        executed += e;
    }
    Ok((out, executed))
}

/// Multiplier activity for one or more matrix-vector products.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityReport {
    pub executed: u64,
    pub total: u64,
    pub per_vector: Vec<u64>,
}

impl ActivityReport {
    pub fn single(executed: usize, products_per_mvm: usize) -> Self {
        ActivityReport {
            executed: executed as u64,
            total: products_per_mvm as u64,
            per_vector: vec![executed as u64],
        }
    }

    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.executed as f64 / self.total as f64
        }
    }

    pub fn skipped(&self) -> u64 {
        self.total - self.executed
    }

    pub fn merge(&mut self, other: &ActivityReport) {
        self.executed += other.executed;
        self.total += other.total;
        self.per_vector.extend_from_slice(&other.per_vector);
    }
}

/// Input conditioning shared by all modes: gain, transform, quantization.
#[derive(Clone, Debug)]
pub struct FrontEnd {
    pub transform: Beamformer,
    pub input_format: QFormat,
    pub tau_y: f64,
    /// Scalar applied to the antenna-domain vector before anything else.
    pub input_gain: f64,
}

impl FrontEnd {
    /// Gain, optional beamspace transform, quantization and tagging.
    pub fn prepare(&self, domain: Domain, y_bar: &[Complex64]) -> Result<BeamVector> {
        let scaled: Vec<Complex64> = y_bar.iter().map(|z| z * self.input_gain).collect();
        let x = match domain {
            Domain::Antenna => scaled,
            Domain::Beamspace => self.transform.apply(&scaled)?,
        };
        tag_input(&x, self.tau_y, self.input_format)
    }
}

/// Equalize one antenna-domain receive vector.
///
/// LMMSE-A bypasses the transform, LMMSE-B and LMMSE-SPADE use it; only
/// LMMSE-SPADE enables skipping. Estimates are descaled in floating point.
pub fn equalize(
    mode: Mode,
    weights_ant: Option<&EqualizerWeights>,
    weights_beam: Option<&EqualizerWeights>,
    front: &FrontEnd,
    y_bar: &[Complex64],
) -> Result<(Vec<Complex64>, ActivityReport)> {
    let domain = mode.domain();
    let weights = match domain {
        Domain::Antenna => weights_ant,
        Domain::Beamspace => weights_beam,
    }
    .filter(|w| w.domain == domain)
    .ok_or(Error::ModeDomainMismatch {
        mode: mode.as_str(),
        domain: domain.as_str(),
    })?;
    let x = front.prepare(domain, y_bar)?;
    let (acc, executed) = mvm(weights, &x, mode.save_power())?;
    let s_hat = descale(&acc, weights.alpha(), front.input_gain);
    Ok((s_hat, ActivityReport::single(executed, 4 * weights.b * weights.u)))
}

/// `acc_u / (alpha_u * gain)`.
pub fn descale(acc: &[ComplexAcc], alpha: &[f64], gain: f64) -> Vec<Complex64> {
    acc.iter()
        .zip(alpha)
        .map(|(a, &al)| a.value() / (al * gain))
        .collect()
}

/// Arithmetic used by [`Equalizer`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    /// Bit-accurate fixed-point datapath.
    Fixed,
    /// Quantization disabled: f64 weights, inputs and exact DFT.
    Float,
}

impl std::str::FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fixed" => Ok(Precision::Fixed),
            "float" => Ok(Precision::Float),
            _ => Err(Error::Parse(format!("unknown precision '{s}'"))),
        }
    }
}

/// Numeric settings of the equalizer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EqualizerSettings {
    pub precision: Precision,
    pub weight_format: QFormat,
    pub input_format: QFormat,
    pub twiddle: TwiddleConfig,
    pub tau_w: f64,
    pub tau_y: f64,
    pub epsilon: f64,
}

impl Default for EqualizerSettings {
    fn default() -> Self {
        EqualizerSettings {
            precision: Precision::Fixed,
            weight_format: QFormat::WEIGHT,
            input_format: QFormat::INPUT,
            twiddle: TwiddleConfig::default(),
            tau_w: 0.0,
            tau_y: 0.0,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

/// Input gain normalizing the expected per-antenna receive power to one.
pub fn default_input_gain(u: usize, es: f64, n0: f64) -> f64 {
    1.0 / (u as f64 * es + n0).sqrt()
}

#[derive(Clone, Debug)]
enum DomainWeights {
    Fixed(EqualizerWeights),
    /// Scaled float matrix `W` and its `alpha`.
    Float {
        w: DMatrix<Complex64>,
        alpha: Vec<f64>,
    },
}

/// Weights for one coherence interval plus the front end that feeds them.
#[derive(Clone, Debug)]
pub struct Equalizer {
    settings: EqualizerSettings,
    front: FrontEnd,
    antenna: Option<DomainWeights>,
    beamspace: Option<DomainWeights>,
}

impl Equalizer {
    /// Preprocess an antenna-domain channel for the given domains.
    ///
    /// The beamspace channel is obtained with the same transform that
    /// converts receive vectors, so a quantized-twiddle front end sees a
    /// matching channel.
    pub fn prepare(
        h_ant: &ChannelMatrix,
        n0: f64,
        es: f64,
        domains: &[Domain],
        settings: EqualizerSettings,
    ) -> Result<Self> {
        if h_ant.domain != Domain::Antenna {
            return Err(Error::InvalidConfig("expected an antenna-domain channel".into()));
        }
        let twiddle = match settings.precision {
            Precision::Fixed => settings.twiddle,
            Precision::Float => TwiddleConfig::exact(),
        };
        let transform = Beamformer::new(h_ant.rows(), twiddle)?;
        let front = FrontEnd {
            transform,
            input_format: settings.input_format,
            tau_y: settings.tau_y,
            input_gain: default_input_gain(h_ant.cols(), es, n0),
        };
        let build = |h: &ChannelMatrix| -> Result<DomainWeights> {
            let v = compute_lmmse(h, n0, es)?;
            let (w, alpha) = scale_rows(&v, settings.epsilon)?;
            Ok(match settings.precision {
                Precision::Fixed => DomainWeights::Fixed(build_weights(
                    &w,
                    &alpha,
                    settings.tau_w,
                    settings.weight_format,
                    h.domain,
                )?),
                Precision::Float => DomainWeights::Float { w, alpha },
            })
        };
        let mut antenna = None;
        let mut beamspace = None;
        if domains.contains(&Domain::Antenna) {
            antenna = Some(build(h_ant)?);
        }
        if domains.contains(&Domain::Beamspace) {
            let hb = front.transform.channel_to_beamspace(h_ant)?;
            beamspace = Some(build(&hb)?);
        }
        Ok(Equalizer {
            settings,
            front,
            antenna,
            beamspace,
        })
    }

    pub fn front_end(&self) -> &FrontEnd {
        &self.front
    }

    pub fn settings(&self) -> &EqualizerSettings {
        &self.settings
    }

    pub fn weights(&self, domain: Domain) -> Option<&EqualizerWeights> {
        let w = match domain {
            Domain::Antenna => self.antenna.as_ref(),
            Domain::Beamspace => self.beamspace.as_ref(),
        };
        match w {
            Some(DomainWeights::Fixed(w)) => Some(w),
            _ => None,
        }
    }

    pub fn equalize(&self, mode: Mode, y_bar: &[Complex64]) -> Result<(Vec<Complex64>, ActivityReport)> {
        let domain = mode.domain();
        let slot = match domain {
            Domain::Antenna => self.antenna.as_ref(),
            Domain::Beamspace => self.beamspace.as_ref(),
        };
        match slot {
            Some(DomainWeights::Fixed(_)) => equalize(
                mode,
                self.weights(Domain::Antenna),
                self.weights(Domain::Beamspace),
                &self.front,
                y_bar,
            ),
            Some(DomainWeights::Float { w, alpha }) => self.equalize_float(mode, w, alpha, y_bar),
            None => Err(Error::ModeDomainMismatch {
                mode: mode.as_str(),
                domain: domain.as_str(),
            }),
        }
    }

    fn equalize_float(
        &self,
        mode: Mode,
        w: &DMatrix<Complex64>,
        alpha: &[f64],
        y_bar: &[Complex64],
    ) -> Result<(Vec<Complex64>, ActivityReport)> {
        let g = self.front.input_gain;
        let scaled: Vec<Complex64> = y_bar.iter().map(|z| z * g).collect();
        let x = match mode.domain() {
            Domain::Antenna => scaled,
            Domain::Beamspace => self.front.transform.apply(&scaled)?,
        };
        let (u, b) = w.shape();
        if x.len() != b {
            return Err(Error::DimensionMismatch {
                expected: b,
                got: x.len(),
            });
        }
        let (tw, ty) = (self.settings.tau_w, self.settings.tau_y);
        let cy: Vec<CompareBits> = x.iter().map(|&z| CompareBits::of_float(z, ty)).collect();
        let mut executed = 0usize;
        let mut s_hat = Vec::with_capacity(u);
        for row in 0..u {
            let mut acc = Complex64::default();
            for col in 0..b {
                let wv = w[(row, col)];
                let xv = x[col];
                let skip = if mode.save_power() {
                    skip_mask(CompareBits::of_float(wv, tw), cy[col])
                } else {
                    [false; 4]
                };
                let prods = [wv.re * xv.re, -(wv.im * xv.im), wv.re * xv.im, wv.im * xv.re];
                for (k, p) in prods.iter().enumerate() {
                    if !skip[k] {
                        executed += 1;
                        if k < 2 {
                            acc.re += p;
                        } else {
                            acc.im += p;
                        }
                    }
                }
            }
            s_hat.push(acc / (alpha[row] * g));
        }
        Ok((s_hat, ActivityReport::single(executed, 4 * u * b)))
    }
}
