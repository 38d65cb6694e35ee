//! Square M-QAM with per-axis reflected Gray labelling.
//!
//! A symbol carries `log2(M)` bits: the first half select the in-phase level,
//! the second half the quadrature level, most significant bit first.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Constellation {
    order: u32,
    bits_per_axis: usize,
    /// Per-axis amplitudes in ascending order.
    levels: Vec<f64>,
}

/// U transmitted symbols and the bits they carry.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolVector {
    pub symbols: Vec<Complex64>,
    pub bits: Vec<u8>,
}

fn gray(i: usize) -> usize {
    i ^ (i >> 1)
}

fn gray_inverse(mut g: usize) -> usize {
    let mut i = g;
    while g > 1 {
        g >>= 1;
        i ^= g;
    }
    i
}

impl Constellation {
    /// Square constellation with average energy `es` over all points.
    pub fn new(order: u32, es: f64) -> Result<Self> {
        if ![4, 16, 64, 256].contains(&order) {
            return Err(Error::InvalidModulation(order));
        }
        if !(es.is_finite() && es > 0.0) {
            return Err(Error::InvalidConfig(format!("symbol energy {es}")));
        }
        let per_axis = (order as f64).sqrt() as usize;
        let bits_per_axis = per_axis.trailing_zeros() as usize;
        // odd-integer grid has mean energy 2(M-1)/3
        let scale = (es / (2.0 * (order as f64 - 1.0) / 3.0)).sqrt();
        let levels = (0..per_axis)
            .map(|i| (2.0 * i as f64 - (per_axis as f64 - 1.0)) * scale)
            .collect();
        Ok(Constellation {
            order,
            bits_per_axis,
            levels,
        })
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        2 * self.bits_per_axis
    }

    fn axis_from_bits(&self, bits: &[u8]) -> f64 {
        let label = bits.iter().fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize);
        self.levels[gray_inverse(label)]
    }

    fn axis_bits(&self, index: usize, out: &mut Vec<u8>) {
        let label = gray(index);
        for k in (0..self.bits_per_axis).rev() {
            out.push(((label >> k) & 1) as u8);
        }
    }

    /// Map one symbol's worth of bits.
    pub fn map_symbol(&self, bits: &[u8]) -> Complex64 {
        let (i_bits, q_bits) = bits.split_at(self.bits_per_axis);
        Complex64::new(self.axis_from_bits(i_bits), self.axis_from_bits(q_bits))
    }

    pub fn map(&self, bits: &[u8]) -> Result<SymbolVector> {
        let k = self.bits_per_symbol();
        if !bits.len().is_multiple_of(k) {
            return Err(Error::BitCount {
                bits: bits.len(),
                per_symbol: k,
            });
        }
        let symbols = bits.chunks(k).map(|c| self.map_symbol(c)).collect();
        Ok(SymbolVector {
            symbols,
            bits: bits.to_vec(),
        })
    }

    /// Nearest level; on a tie the smaller level wins.
    fn nearest_level(&self, x: f64) -> usize {
        let mut best = 0;
        let mut best_d = (x - self.levels[0]).abs();
        for (i, &l) in self.levels.iter().enumerate().skip(1) {
            let d = (x - l).abs();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }

    /// Nearest constellation point. Distance is separable on a square grid,
    /// so per-axis ties resolved toward the smaller level give the
    /// lexicographically smallest `(re, im)` among equidistant points.
    pub fn decide(&self, z: Complex64) -> Complex64 {
        Complex64::new(
            self.levels[self.nearest_level(z.re)],
            self.levels[self.nearest_level(z.im)],
        )
    }

    /// Hard-decide each estimate and append its bits.
    pub fn slice_into(&self, estimates: &[Complex64], out: &mut Vec<u8>) {
        for z in estimates {
            self.axis_bits(self.nearest_level(z.re), out);
            self.axis_bits(self.nearest_level(z.im), out);
        }
    }

    pub fn slice(&self, estimates: &[Complex64]) -> Vec<u8> {
        let mut out = Vec::with_capacity(estimates.len() * self.bits_per_symbol());
        self.slice_into(estimates, &mut out);
        out
    }

    /// All points in label order.
    pub fn points(&self) -> Vec<Complex64> {
        let k = self.bits_per_symbol();
        (0..self.order as usize)
            .map(|label| {
                let bits: Vec<u8> = (0..k).rev().map(|j| ((label >> j) & 1) as u8).collect();
                self.map_symbol(&bits)
            })
            .collect()
    }
}

/// Gray-mapped M-QAM with average energy `es`.
pub fn map_qam(bits: &[u8], order: u32, es: f64) -> Result<SymbolVector> {
    Constellation::new(order, es)?.map(bits)
}

/// Hard decisions for a vector of estimates.
pub fn slice(estimates: &[Complex64], order: u32, es: f64) -> Result<Vec<u8>> {
    Ok(Constellation::new(order, es)?.slice(estimates))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sixteen_qam_unit_energy() {
        let c = Constellation::new(16, 1.0).unwrap();
        let pts = c.points();
        assert_eq!(pts.len(), 16);
        let e: f64 = pts.iter().map(|p| p.norm_sqr()).sum::<f64>() / 16.0;
        assert!((e - 1.0).abs() < 1e-15, "{e}");
    }

    #[test]
    fn all_orders_have_requested_energy() {
        for m in [4, 16, 64, 256] {
            let c = Constellation::new(m, 2.5).unwrap();
            let pts = c.points();
            let e: f64 = pts.iter().map(|p| p.norm_sqr()).sum::<f64>() / m as f64;
            assert!((e - 2.5).abs() < 1e-12);
            // points are distinct
            for (i, a) in pts.iter().enumerate() {
                for b in &pts[i + 1..] {
                    assert!((a - b).norm() > 1e-9);
                }
            }
        }
    }

    #[test]
    fn qpsk_equal_magnitude() {
        let c = Constellation::new(4, 1.0).unwrap();
        for p in c.points() {
            assert!((p.norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn gray_neighbours_differ_in_one_bit() {
        let c = Constellation::new(64, 1.0).unwrap();
        for i in 0..7usize {
            assert_eq!((gray(i) ^ gray(i + 1)).count_ones(), 1);
            assert_eq!(gray_inverse(gray(i)), i);
        }
        assert_eq!(c.bits_per_symbol(), 6);
    }

    #[test]
    fn round_trip_every_label() {
        for m in [4u32, 16, 64, 256] {
            let c = Constellation::new(m, 1.0).unwrap();
            let k = c.bits_per_symbol();
            let bits: Vec<u8> = (0..m as usize)
                .flat_map(|label| (0..k).rev().map(move |j| ((label >> j) & 1) as u8))
                .collect();
            let sv = c.map(&bits).unwrap();
            assert_eq!(c.slice(&sv.symbols), bits);
        }
    }

    #[test]
    fn invalid_order_and_bit_count() {
        assert!(matches!(Constellation::new(8, 1.0), Err(Error::InvalidModulation(8))));
        assert!(matches!(
            map_qam(&[0, 1, 1], 16, 1.0),
            Err(Error::BitCount { .. })
        ));
    }

    #[test]
    fn ties_go_to_smaller_point() {
        // Es = 10 puts 16-QAM on the integer grid {-3, -1, 1, 3}
        let c = Constellation::new(16, 10.0).unwrap();
        assert_eq!(c.decide(Complex64::new(2.0, 0.0)), Complex64::new(1.0, -1.0));
        assert_eq!(c.decide(Complex64::new(0.0, -2.0)), Complex64::new(-1.0, -3.0));
        let c1 = Constellation::new(16, 1.0).unwrap();
        let d = c1.decide(Complex64::new(0.0, 0.0));
        assert!(d.re < 0.0 && d.im < 0.0);
    }
}
