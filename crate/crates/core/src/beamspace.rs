//! Unitary spatial DFT into beamspace.
//!
//! Kernel `e^{-j 2 pi m n / B} / sqrt(B)`, natural output order. The radix-4
//! path mirrors the hardware transform: a decimation-in-time FFT whose
//! twiddle factors can be rounded to a low-resolution fixed-point format.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{is_power_of_four, ChannelMatrix, Domain};
use crate::error::{Error, Result};
use crate::numerics::QFormat;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwiddleConfig {
    pub exact: bool,
    pub twiddle_format: QFormat,
}

impl TwiddleConfig {
    pub fn exact() -> Self {
        TwiddleConfig {
            exact: true,
            twiddle_format: QFormat::TWIDDLE,
        }
    }

    pub fn quantized(twiddle_format: QFormat) -> Self {
        TwiddleConfig {
            exact: false,
            twiddle_format,
        }
    }
}

impl Default for TwiddleConfig {
    fn default() -> Self {
        TwiddleConfig::quantized(QFormat::TWIDDLE)
    }
}

/// `F[m, n] = e^{-j 2 pi m n / B} / sqrt(B)`.
pub fn dft_matrix(b: usize) -> DMatrix<Complex64> {
    let norm = 1.0 / (b as f64).sqrt();
    DMatrix::from_fn(b, b, |m, n| {
        // reduce the exponent first so large B keeps full accuracy
        let k = (m * n) % b;
        Complex64::from_polar(norm, -2.0 * PI * k as f64 / b as f64)
    })
}

#[derive(Clone, Debug)]
enum Plan {
    /// Direct O(B^2) evaluation for lengths that are not powers of four.
    Direct(DMatrix<Complex64>),
    Radix4 {
        /// `twiddles[k] ~ e^{-j 2 pi k / B}`, possibly quantized.
        twiddles: Vec<Complex64>,
        /// Base-4 digit-reversed input order.
        perm: Vec<usize>,
    },
}

/// Precomputed transform for one length and twiddle configuration.
#[derive(Clone, Debug)]
pub struct Beamformer {
    b: usize,
    cfg: TwiddleConfig,
    plan: Plan,
}

fn digit_reverse4(b: usize) -> Vec<usize> {
    let digits = b.trailing_zeros() / 2;
    (0..b)
        .map(|i| {
            let mut x = i;
            let mut r = 0;
            for _ in 0..digits {
                r = (r << 2) | (x & 3);
                x >>= 2;
            }
            r
        })
        .collect()
}

impl Beamformer {
    pub fn new(b: usize, cfg: TwiddleConfig) -> Result<Self> {
        if b == 0 {
            return Err(Error::EmptyVector);
        }
        let plan = if is_power_of_four(b) {
            let twiddles = (0..b)
                .map(|k| {
                    let w = Complex64::from_polar(1.0, -2.0 * PI * k as f64 / b as f64);
                    if cfg.exact {
                        Ok(w)
                    } else {
                        let f = cfg.twiddle_format;
                        Ok(Complex64::new(
                            f.quantize(w.re)?.value(),
                            f.quantize(w.im)?.value(),
                        ))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Plan::Radix4 {
                twiddles,
                perm: digit_reverse4(b),
            }
        } else if cfg.exact {
            Plan::Direct(dft_matrix(b))
        } else {
            return Err(Error::NotPowerOfFour(b));
        };
        Ok(Beamformer { b, cfg, plan })
    }

    pub fn len(&self) -> usize {
        self.b
    }

    pub fn is_empty(&self) -> bool {
        self.b == 0
    }

    pub fn config(&self) -> TwiddleConfig {
        self.cfg
    }

    /// Transform `x` into `out` (both length B).
    pub fn apply_into(&self, x: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        if x.len() != self.b || out.len() != self.b {
            return Err(Error::DimensionMismatch {
                expected: self.b,
                got: x.len().min(out.len()),
            });
        }
        match &self.plan {
            Plan::Direct(f) => {
                for (m, o) in out.iter_mut().enumerate() {
                    *o = (0..self.b).map(|n| f[(m, n)] * x[n]).sum();
                }
            }
            Plan::Radix4 { twiddles, perm } => {
                for (o, &p) in out.iter_mut().zip(perm) {
                    *o = x[p];
                }
                radix4_in_place(out, twiddles);
                let norm = 1.0 / (self.b as f64).sqrt();
                out.iter_mut().for_each(|z| *z *= norm);
            }
        }
        Ok(())
    }

    pub fn apply(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut out = vec![Complex64::default(); self.b];
        self.apply_into(x, &mut out)?;
        Ok(out)
    }

    /// Transform every column of an antenna-domain channel.
    pub fn channel_to_beamspace(&self, h: &ChannelMatrix) -> Result<ChannelMatrix> {
        if h.domain != Domain::Antenna {
            return Err(Error::InvalidConfig("channel is already in beamspace".into()));
        }
        let cols = (0..h.cols())
            .map(|u| self.apply(&h.column(u)))
            .collect::<Result<Vec<_>>>()?;
        ChannelMatrix::from_columns(Domain::Beamspace, &cols)
    }
}

/// Iterative radix-4 DIT on digit-reversed data.
fn radix4_in_place(a: &mut [Complex64], twiddles: &[Complex64]) {
    let b = a.len();
    let j = Complex64::new(0.0, 1.0);
    let mut n = 4;
    while n <= b {
        let m = n / 4;
        let stride = b / n;
        for start in (0..b).step_by(n) {
            for k in 0..m {
                let x0 = a[start + k];
                let x1 = a[start + k + m] * twiddles[k * stride];
                let x2 = a[start + k + 2 * m] * twiddles[2 * k * stride];
                let x3 = a[start + k + 3 * m] * twiddles[3 * k * stride];
                let s02 = x0 + x2;
                let d02 = x0 - x2;
                let s13 = x1 + x3;
                let d13 = (x1 - x3) * j;
                a[start + k] = s02 + s13;
                a[start + k + m] = d02 - d13;
                a[start + k + 2 * m] = s02 - s13;
                a[start + k + 3 * m] = d02 + d13;
            }
        }
        n *= 4;
    }
}

/// One-shot transform; builds the plan each call.
pub fn to_beamspace(y: &[Complex64], cfg: TwiddleConfig) -> Result<Vec<Complex64>> {
    Beamformer::new(y.len(), cfg)?.apply(y)
}
