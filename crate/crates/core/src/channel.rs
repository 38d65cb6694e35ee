//! Synthetic planar-wave channels, symbol sourcing and receive synthesis.
//!
//! Each UE column is a superposition of complex sinusoids across the uniform
//! linear array, normalized so that `||h_u||^2 = B`. Path profiles are
//! parametric stand-ins for ray-traced mmWave scenarios: LoS has one dominant
//! path plus two weak reflections, NLoS has twelve paths with an exponential
//! power-delay-like decay.

use std::f64::consts::PI;
use std::fmt;
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qam::{Constellation, SymbolVector};

/// Equalizer operating mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Antenna-domain LMMSE, FFT bypassed.
    #[serde(rename = "LMMSE-A")]
    LmmseA,
    /// Beamspace LMMSE without multiplication skipping.
    #[serde(rename = "LMMSE-B")]
    LmmseB,
    /// Beamspace LMMSE with threshold-gated skipping.
    #[serde(rename = "LMMSE-SPADE")]
    LmmseSpade,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::LmmseA => "LMMSE-A",
            Mode::LmmseB => "LMMSE-B",
            Mode::LmmseSpade => "LMMSE-SPADE",
        }
    }

    pub fn domain(&self) -> Domain {
        match self {
            Mode::LmmseA => Domain::Antenna,
            Mode::LmmseB | Mode::LmmseSpade => Domain::Beamspace,
        }
    }

    pub fn save_power(&self) -> bool {
        matches!(self, Mode::LmmseSpade)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lmmse-a" | "a" | "antenna" => Ok(Mode::LmmseA),
            "lmmse-b" | "b" | "beamspace" => Ok(Mode::LmmseB),
            "lmmse-spade" | "spade" => Ok(Mode::LmmseSpade),
            _ => Err(Error::Parse(format!("unknown mode '{s}'"))),
        }
    }
}

/// Which side of the spatial DFT a quantity lives on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Antenna,
    Beamspace,
}

impl Domain {
    pub fn as_str(&self) -> &'static str {
        match self {
            Domain::Antenna => "antenna",
            Domain::Beamspace => "beamspace",
        }
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "antenna" => Ok(Domain::Antenna),
            "beamspace" => Ok(Domain::Beamspace),
            _ => Err(Error::Parse(format!("unknown domain '{s}'"))),
        }
    }
}

/// Propagation scenario used to draw path profiles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Los,
    Nlos,
    /// Single broadside path; every antenna sees unit gain.
    Awgn,
}

impl ChannelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ChannelKind::Los => "los",
            ChannelKind::Nlos => "nlos",
            ChannelKind::Awgn => "awgn",
        }
    }
}

impl FromStr for ChannelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "los" => Ok(ChannelKind::Los),
            "nlos" => Ok(ChannelKind::Nlos),
            "awgn" => Ok(ChannelKind::Awgn),
            _ => Err(Error::Parse(format!("unknown channel kind '{s}'"))),
        }
    }
}

/// System dimensions and operating point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub b: usize,
    pub u: usize,
    pub modulation: u32,
    pub es: f64,
    pub n0: f64,
    pub mode: Mode,
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            b: 64,
            u: 16,
            modulation: 16,
            es: 1.0,
            n0: 1.0,
            mode: Mode::LmmseA,
            seed: 0,
        }
    }
}

pub fn is_power_of_four(n: usize) -> bool {
    n.is_power_of_two() && n.trailing_zeros().is_multiple_of(2)
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        if !is_power_of_four(self.b) {
            return Err(Error::InvalidConfig(format!(
                "B={} is not a power of 4",
                self.b
            )));
        }
        if self.u < 1 || self.u > self.b {
            return Err(Error::InvalidConfig(format!(
                "U={} outside [1, B={}]",
                self.u, self.b
            )));
        }
        if ![4, 16, 64, 256].contains(&self.modulation) {
            return Err(Error::InvalidModulation(self.modulation));
        }
        if !(self.es.is_finite() && self.es > 0.0) {
            return Err(Error::InvalidConfig(format!("Es={}", self.es)));
        }
        if !(self.n0.is_finite() && self.n0 >= 0.0) {
            return Err(Error::InvalidConfig(format!("N0={}", self.n0)));
        }
        Ok(())
    }

    pub fn bits_per_vector(&self) -> usize {
        self.u * self.modulation.trailing_zeros() as usize
    }

    /// Noise variance for `SNR = U * Es / N0`.
    pub fn n0_for_snr_db(&self, snr_db: f64) -> f64 {
        self.u as f64 * self.es / 10f64.powf(snr_db / 10.0)
    }

    pub fn snr_db(&self) -> f64 {
        10.0 * (self.u as f64 * self.es / self.n0).log10()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Path {
    pub gain: Complex64,
    /// Spatial frequency in [-pi, pi).
    pub spatial_freq: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathSet {
    pub paths: Vec<Path>,
}

/// `[1, e^{j phi}, ..., e^{j (B-1) phi}]`.
pub fn steering(phi: f64, b: usize) -> Vec<Complex64> {
    (0..b)
        .map(|n| Complex64::from_polar(1.0, phi * n as f64))
        .collect()
}

/// Planar-wave column, rescaled to squared norm `B`.
pub fn synth_channel(paths: &PathSet, b: usize) -> Result<Vec<Complex64>> {
    if paths.paths.is_empty() || paths.paths.iter().all(|p| p.gain == Complex64::default()) {
        return Err(Error::DegenerateChannel);
    }
    let mut h = vec![Complex64::default(); b];
    for p in &paths.paths {
        for (hn, a) in h.iter_mut().zip(steering(p.spatial_freq, b)) {
            *hn += p.gain * a;
        }
    }
    let energy: f64 = h.iter().map(|z| z.norm_sqr()).sum();
    // off-grid paths can cancel to numerical zero
    if energy.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) || !energy.is_finite() {
        return Err(Error::DegenerateChannel);
    }
    let scale = (b as f64 / energy).sqrt();
    h.iter_mut().for_each(|z| *z *= scale);
    Ok(h)
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

fn uniform_angle<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random_range(-PI..PI)
}

/// LoS: dominant path 10 dB above the two reflections combined.
pub const LOS_REFLECTIONS: usize = 2;
pub const NLOS_PATHS: usize = 12;
/// NLoS per-path power decay.
pub const NLOS_DECAY_DB: f64 = 3.0;

pub fn draw_profile<R: Rng + ?Sized>(kind: ChannelKind, rng: &mut R) -> PathSet {
    let paths = match kind {
        ChannelKind::Los => {
            let dominant_power: f64 = 10.0 / 11.0;
            let reflect_power = 1.0 / 11.0 / LOS_REFLECTIONS as f64;
            let theta = uniform_angle(rng);
            let mut paths = vec![Path {
                gain: Complex64::from_polar(dominant_power.sqrt(), theta),
                spatial_freq: uniform_angle(rng),
            }];
            for _ in 0..LOS_REFLECTIONS {
                let gain = complex_gaussian(rng, reflect_power);
                paths.push(Path {
                    gain,
                    spatial_freq: uniform_angle(rng),
                });
            }
            paths
        }
        ChannelKind::Nlos => (0..NLOS_PATHS)
            .map(|l| {
                let power = 10f64.powf(-NLOS_DECAY_DB * l as f64 / 10.0);
                let gain = complex_gaussian(rng, power);
                Path {
                    gain,
                    spatial_freq: uniform_angle(rng),
                }
            })
            .collect(),
        ChannelKind::Awgn => vec![Path {
            gain: Complex64::new(1.0, 0.0),
            spatial_freq: 0.0,
        }],
    };
    PathSet { paths }
}

/// Dense `B x U` channel, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelMatrix {
    pub domain: Domain,
    b: usize,
    u: usize,
    entries: Vec<Complex64>,
}

impl ChannelMatrix {
    pub fn from_row_major(
        domain: Domain,
        b: usize,
        u: usize,
        entries: Vec<Complex64>,
    ) -> Result<Self> {
        if entries.len() != b * u {
            return Err(Error::DimensionMismatch {
                expected: b * u,
                got: entries.len(),
            });
        }
        Ok(ChannelMatrix {
            domain,
            b,
            u,
            entries,
        })
    }

    pub fn from_columns(domain: Domain, columns: &[Vec<Complex64>]) -> Result<Self> {
        let u = columns.len();
        let b = columns.first().map_or(0, |c| c.len());
        let mut entries = vec![Complex64::default(); b * u];
        for (j, col) in columns.iter().enumerate() {
            if col.len() != b {
                return Err(Error::DimensionMismatch {
                    expected: b,
                    got: col.len(),
                });
            }
            for (i, &z) in col.iter().enumerate() {
                entries[i * u + j] = z;
            }
        }
        Ok(ChannelMatrix {
            domain,
            b,
            u,
            entries,
        })
    }

    pub fn rows(&self) -> usize {
        self.b
    }

    pub fn cols(&self) -> usize {
        self.u
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.u + col]
    }

    pub fn column(&self, col: usize) -> Vec<Complex64> {
        (0..self.b).map(|r| self.get(r, col)).collect()
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn to_dmatrix(&self) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.b, self.u, &self.entries)
    }

    pub fn from_dmatrix(domain: Domain, m: &DMatrix<Complex64>) -> Self {
        let entries = (0..m.nrows())
            .flat_map(|r| (0..m.ncols()).map(move |c| (r, c)))
            .map(|(r, c)| m[(r, c)])
            .collect();
        ChannelMatrix {
            domain,
            b: m.nrows(),
            u: m.ncols(),
            entries,
        }
    }

    /// `H s`.
    pub fn apply(&self, s: &[Complex64]) -> Result<Vec<Complex64>> {
        if s.len() != self.u {
            return Err(Error::DimensionMismatch {
                expected: self.u,
                got: s.len(),
            });
        }
        Ok(self
            .entries
            .chunks(self.u)
            .map(|row| row.iter().zip(s).map(|(h, x)| h * x).sum())
            .collect())
    }
}

/// One antenna-domain `B x U` realization, each UE with its own profile.
pub fn draw_channel<R: Rng + ?Sized>(
    kind: ChannelKind,
    b: usize,
    u: usize,
    rng: &mut R,
) -> Result<ChannelMatrix> {
    let columns = (0..u)
        .map(|_| synth_channel(&draw_profile(kind, rng), b))
        .collect::<Result<Vec<_>>>()?;
    ChannelMatrix::from_columns(Domain::Antenna, &columns)
}

/// Uniform random bits mapped onto the constellation.
pub fn draw_symbols<R: Rng + ?Sized>(
    constellation: &Constellation,
    u: usize,
    rng: &mut R,
) -> SymbolVector {
    let bits: Vec<u8> = (0..u * constellation.bits_per_symbol())
        .map(|_| rng.random_range(0..2u8))
        .collect();
    constellation
        .map(&bits)
        .expect("bit count is a multiple of bits per symbol")
}

/// Unit-variance circularly symmetric noise, `B` samples.
pub fn draw_unit_noise<R: Rng + ?Sized>(b: usize, rng: &mut R) -> Vec<Complex64> {
    (0..b).map(|_| complex_gaussian(rng, 1.0)).collect()
}

/// `H s + sqrt(N0) n` for a pre-drawn unit-variance noise vector.
pub fn receive_with_noise(
    h: &ChannelMatrix,
    s: &[Complex64],
    unit_noise: &[Complex64],
    n0: f64,
) -> Result<Vec<Complex64>> {
    if unit_noise.len() != h.rows() {
        return Err(Error::DimensionMismatch {
            expected: h.rows(),
            got: unit_noise.len(),
        });
    }
    let sigma = n0.sqrt();
    let mut y = h.apply(s)?;
    if sigma > 0.0 {
        y.iter_mut()
            .zip(unit_noise)
            .for_each(|(yi, n)| *yi += sigma * n);
    }
    Ok(y)
}

/// `y = H s + n` with `n ~ CN(0, N0 I)`.
pub fn synth_receive<R: Rng + ?Sized>(
    h: &ChannelMatrix,
    s: &SymbolVector,
    n0: f64,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    let noise = draw_unit_noise(h.rows(), rng);
    receive_with_noise(h, &s.symbols, &noise, n0)
}

// -- channel dumps ---------------------------------------------------------
//
// CSV: header line, then one realization per line:
//   domain,b,u,re(0,0),im(0,0),re(0,1),im(0,1),...   (row-major over (b, u))
// Binary (little endian):
//   b"SPCH", version u32 = 1, count u32, then per realization:
//   domain u8 (0 antenna, 1 beamspace), B u32, U u32, 2*B*U f64

pub const CSV_HEADER: &str = "domain,b,u,data";
const BIN_MAGIC: &[u8; 4] = b"SPCH";
const BIN_VERSION: u32 = 1;

pub fn write_channels_csv<W: Write>(mut w: W, channels: &[ChannelMatrix]) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for h in channels {
        write!(w, "{},{},{}", h.domain.as_str(), h.b, h.u)?;
        for z in &h.entries {
            write!(w, ",{},{}", z.re, z.im)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_channels_csv<R: BufRead>(r: R) -> Result<Vec<ChannelMatrix>> {
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.starts_with("domain")) {
            continue;
        }
        let mut fields = line.split(',');
        let bad = |what: &str| Error::Parse(format!("channel csv line {}: {what}", lineno + 1));
        let domain: Domain = fields.next().ok_or_else(|| bad("missing domain"))?.parse()?;
        let b: usize = fields
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad B"))?;
        let u: usize = fields
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad U"))?;
        let values = fields
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad("bad number")))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != 2 * b * u {
            return Err(bad("wrong number of values"));
        }
        let entries = values
            .chunks(2)
            .map(|c| Complex64::new(c[0], c[1]))
            .collect();
        out.push(ChannelMatrix::from_row_major(domain, b, u, entries)?);
    }
    Ok(out)
}

pub fn write_channels_bin<W: Write>(mut w: W, channels: &[ChannelMatrix]) -> Result<()> {
    w.write_all(BIN_MAGIC)?;
    w.write_all(&BIN_VERSION.to_le_bytes())?;
    w.write_all(&(channels.len() as u32).to_le_bytes())?;
    for h in channels {
        let tag: u8 = match h.domain {
            Domain::Antenna => 0,
            Domain::Beamspace => 1,
        };
        w.write_all(&[tag])?;
        w.write_all(&(h.b as u32).to_le_bytes())?;
        w.write_all(&(h.u as u32).to_le_bytes())?;
        for z in &h.entries {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

pub fn read_channels_bin<R: Read>(mut r: R) -> Result<Vec<ChannelMatrix>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != BIN_MAGIC {
        return Err(Error::Parse("not a channel dump (bad magic)".into()));
    }
    let version = read_u32(&mut r)?;
    if version != BIN_VERSION {
        return Err(Error::Parse(format!("unsupported channel dump version {version}")));
    }
    let count = read_u32(&mut r)? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let domain = match tag[0] {
            0 => Domain::Antenna,
            1 => Domain::Beamspace,
            t => return Err(Error::Parse(format!("bad domain tag {t}"))),
        };
        let b = read_u32(&mut r)? as usize;
        let u = read_u32(&mut r)? as usize;
        let mut entries = Vec::with_capacity(b * u);
        for _ in 0..b * u {
            let re = read_f64(&mut r)?;
            let im = read_f64(&mut r)?;
            entries.push(Complex64::new(re, im));
        }
        out.push(ChannelMatrix::from_row_major(domain, b, u, entries)?);
    }
    Ok(out)
}

/// Load a dump, choosing the format by magic bytes.
pub fn read_channels_file(path: &std::path::Path) -> Result<Vec<ChannelMatrix>> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(BIN_MAGIC) {
        read_channels_bin(&bytes[..])
    } else {
        read_channels_csv(&bytes[..])
    }
}
