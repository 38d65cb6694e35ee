//! Fixed-point arithmetic used by the equalizer datapath.
//!
//! Values are two's-complement integers with an implied binary point
//! (`value = raw * 2^-frac_bits`). Quantization rounds to nearest with ties to
//! even and saturates at the format bounds. Products are kept at full width;
//! accumulation happens in `i128` so adder trees never round.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Signed two's-complement fixed-point format.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QFormat {
    total_bits: u32,
    frac_bits: u32,
}

impl QFormat {
    /// Default weight format: just inside [-1, 1).
    pub const WEIGHT: QFormat = QFormat { total_bits: 10, frac_bits: 9 };
    /// Default beamspace input format: [-4, 4).
    pub const INPUT: QFormat = QFormat { total_bits: 12, frac_bits: 9 };
    /// Default low-resolution twiddle format: [-2, 2) in steps of 1/16.
    pub const TWIDDLE: QFormat = QFormat { total_bits: 6, frac_bits: 4 };

    /// Storage format; `2 <= total_bits <= 32` and `frac_bits < total_bits`.
    pub fn new(total_bits: u32, frac_bits: u32) -> Result<Self> {
        if !(2..=32).contains(&total_bits) || frac_bits >= total_bits {
            return Err(Error::InvalidFormat {
                total: total_bits,
                frac: frac_bits,
            });
        }
        Ok(QFormat { total_bits, frac_bits })
    }

    /// Format of an exact product of two values.
    pub fn product(a: QFormat, b: QFormat) -> QFormat {
        QFormat {
            total_bits: a.total_bits + b.total_bits,
            frac_bits: a.frac_bits + b.frac_bits,
        }
    }

    pub fn total_bits(&self) -> u32 {
        self.total_bits
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    pub fn min_raw(&self) -> i64 {
        -(1i64 << (self.total_bits - 1))
    }

    pub fn max_raw(&self) -> i64 {
        (1i64 << (self.total_bits - 1)) - 1
    }

    /// Weight of one least-significant bit.
    pub fn lsb(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    pub fn min_value(&self) -> f64 {
        self.min_raw() as f64 * self.lsb()
    }

    pub fn max_value(&self) -> f64 {
        self.max_raw() as f64 * self.lsb()
    }

    /// Round-to-nearest-even, saturating.
    pub fn quantize(&self, x: f64) -> Result<FixedScalar> {
        if !x.is_finite() {
            return Err(Error::NonFiniteSample);
        }
        let scaled = (x * (self.frac_bits as f64).exp2()).round_ties_even();
        let raw = if scaled >= self.max_raw() as f64 {
            self.max_raw()
        } else if scaled <= self.min_raw() as f64 {
            self.min_raw()
        } else {
            scaled as i64
        };
        Ok(FixedScalar { raw, fmt: *self })
    }

    /// Threshold as an exact multiple of this format's LSB.
    ///
    /// Not saturated: a threshold of 1.0 in a format whose range stops just
    /// below 1.0 must still exceed every representable magnitude.
    pub fn threshold_raw(&self, tau: f64) -> Result<i64> {
        if !tau.is_finite() {
            return Err(Error::NonFiniteSample);
        }
        if tau < 0.0 {
            return Err(Error::InvalidConfig(format!("negative threshold {tau}")));
        }
        let scaled = (tau * (self.frac_bits as f64).exp2()).round_ties_even();
        Ok(scaled.min(i64::MAX as f64) as i64)
    }
}

impl std::fmt::Display for QFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Q{}.{}", self.total_bits, self.frac_bits)
    }
}

/// One fixed-point sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FixedScalar {
    raw: i64,
    fmt: QFormat,
}

impl FixedScalar {
    pub fn from_raw(raw: i64, fmt: QFormat) -> Result<Self> {
        if raw < fmt.min_raw() || raw > fmt.max_raw() {
            return Err(Error::RawOutOfRange {
                raw,
                total: fmt.total_bits,
            });
        }
        Ok(FixedScalar { raw, fmt })
    }

    pub fn zero(fmt: QFormat) -> Self {
        FixedScalar { raw: 0, fmt }
    }

    pub fn raw(&self) -> i64 {
        self.raw
    }

    pub fn format(&self) -> QFormat {
        self.fmt
    }

    pub fn value(&self) -> f64 {
        self.raw as f64 * self.fmt.lsb()
    }

    /// Raw two's-complement bits masked to the format width.
    pub fn to_bits(&self) -> u64 {
        let mask = if self.fmt.total_bits >= 64 {
            u64::MAX
        } else {
            (1u64 << self.fmt.total_bits) - 1
        };
        (self.raw as u64) & mask
    }
}

/// Exact product of one real multiplier. Widths add, nothing is rounded.
pub fn fixed_mul(a: FixedScalar, b: FixedScalar) -> FixedScalar {
    FixedScalar {
        raw: a.raw * b.raw,
        fmt: QFormat::product(a.fmt, b.fmt),
    }
}

/// Complex sample whose parts share one format.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ComplexFixed {
    re: FixedScalar,
    im: FixedScalar,
}

impl ComplexFixed {
    pub fn quantize(z: Complex64, fmt: QFormat) -> Result<Self> {
        Ok(ComplexFixed {
            re: fmt.quantize(z.re)?,
            im: fmt.quantize(z.im)?,
        })
    }

    pub fn from_parts(re: FixedScalar, im: FixedScalar) -> Result<Self> {
        if re.fmt != im.fmt {
            return Err(Error::InvalidConfig(format!(
                "complex parts in different formats ({} vs {})",
                re.fmt, im.fmt
            )));
        }
        Ok(ComplexFixed { re, im })
    }

    pub fn zero(fmt: QFormat) -> Self {
        ComplexFixed {
            re: FixedScalar::zero(fmt),
            im: FixedScalar::zero(fmt),
        }
    }

    pub fn re(&self) -> FixedScalar {
        self.re
    }

    pub fn im(&self) -> FixedScalar {
        self.im
    }

    pub fn format(&self) -> QFormat {
        self.re.fmt
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re.value(), self.im.value())
    }
}

/// Full-width complex accumulator at the product format's binary point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct ComplexAcc {
    pub re: i128,
    pub im: i128,
    pub frac_bits: u32,
}

impl ComplexAcc {
    pub fn new(frac_bits: u32) -> Self {
        ComplexAcc {
            re: 0,
            im: 0,
            frac_bits,
        }
    }

    pub fn value(&self) -> Complex64 {
        let lsb = (-(self.frac_bits as f64)).exp2();
        Complex64::new(self.re as f64 * lsb, self.im as f64 * lsb)
    }
}

/// `max_k max(|re v_k|, |im v_k|)`.
pub fn linf_tilde(v: &[Complex64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::EmptyVector);
    }
    Ok(v.iter()
        .fold(0.0f64, |m, z| m.max(z.re.abs()).max(z.im.abs())))
}
