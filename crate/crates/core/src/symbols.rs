use std::io::Write;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Complex symbols on both polarizations, one entry per symbol slot.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPolSymbols {
    pub x: Vec<Complex64>,
    pub y: Vec<Complex64>,
}

/// Transmitted symbols of one channel.
pub type SymbolStream = DualPolSymbols;

/// Received symbols aligned 1:1 with a [`SymbolStream`].
pub type RxSymbols = DualPolSymbols;

impl DualPolSymbols {
    pub fn new(x: Vec<Complex64>, y: Vec<Complex64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::invalid(format!("polarization lengths differ: {} vs {}", x.len(), y.len())));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Mean `|s|²` per symbol, averaged over both polarizations.
    pub fn mean_power(&self) -> f64 {
        let e: f64 = self.x.iter().chain(&self.y).map(|c| c.norm_sqr()).sum();
        e / (2 * self.len()).max(1) as f64
    }

    pub fn iter(&self) -> impl Iterator<Item = &Complex64> {
        self.x.iter().chain(&self.y)
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self { x: self.x.iter().map(|&c| f(c)).collect(), y: self.y.iter().map(|&c| f(c)).collect() }
    }

    pub fn check_aligned(&self, other: &Self) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::invalid(format!("symbol frames differ in length: {} vs {}", self.len(), other.len())));
        }
        Ok(())
    }

    /// Debug dump as `index,XI,XQ,YI,YQ` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "index,XI,XQ,YI,YQ")?;
        for (i, (x, y)) in self.x.iter().zip(&self.y).enumerate() {
            writeln!(w, "{i},{:e},{:e},{:e},{:e}", x.re, x.im, y.re, y.im)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_header_and_rows() {
        let s = DualPolSymbols::new(vec![Complex64::new(1.0, 2.0)], vec![Complex64::new(-1.0, 0.5)]).unwrap();
        let mut out = Vec::new();
        s.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("index,XI,XQ,YI,YQ\n0,1e0,2e0,-1e0,5e-1"));
    }

    #[test]
    fn mean_power_averages_both_polarizations() {
        let s = DualPolSymbols::new(vec![Complex64::new(2.0, 0.0)], vec![Complex64::new(0.0, 0.0)]).unwrap();
        assert_eq!(s.mean_power(), 2.0);
        assert!(DualPolSymbols::new(vec![], vec![Complex64::default()]).is_err());
    }
}
