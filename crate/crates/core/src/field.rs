//! Dual-polarization complex baseband field.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::units::DEFAULT_WAVELENGTH_M;

/// The full-field signal `A(z, t)` on two orthogonal polarizations.
///
/// Samples are in sqrt(W); `|x|² + |y|²` is instantaneous power. Time is
/// implicit through the sample index and `sample_rate_hz`, and the frame is
/// treated as periodic everywhere in the crate.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPolField {
    x: Vec<Complex64>,
    y: Vec<Complex64>,
    sample_rate_hz: f64,
    center_wavelength_m: f64,
    position_km: f64,
}

impl DualPolField {
    pub fn new(x: Vec<Complex64>, y: Vec<Complex64>, sample_rate_hz: f64) -> Result<Self> {
        Self::with_metadata(x, y, sample_rate_hz, DEFAULT_WAVELENGTH_M, 0.0)
    }

    pub fn with_metadata(
        x: Vec<Complex64>,
        y: Vec<Complex64>,
        sample_rate_hz: f64,
        center_wavelength_m: f64,
        position_km: f64,
    ) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::invalid("field must hold at least one sample"));
        }
        if x.len() != y.len() {
            return Err(Error::invalid(format!(
                "polarization lengths differ: {} vs {}",
                x.len(),
                y.len()
            )));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::invalid("sample rate must be positive and finite"));
        }
        if !(center_wavelength_m.is_finite() && center_wavelength_m > 0.0) {
            return Err(Error::invalid("center wavelength must be positive and finite"));
        }
        if !(position_km.is_finite() && position_km >= 0.0) {
            return Err(Error::invalid("position must be nonnegative and finite"));
        }
        if let Some(i) = first_non_finite(&x).or_else(|| first_non_finite(&y)) {
            return Err(Error::invalid(format!("non-finite amplitude at sample {i}")));
        }
        Ok(Self { x, y, sample_rate_hz, center_wavelength_m, position_km })
    }

    pub fn zeros(len: usize, sample_rate_hz: f64) -> Result<Self> {
        Self::new(vec![Complex64::default(); len], vec![Complex64::default(); len], sample_rate_hz)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn x(&self) -> &[Complex64] {
        &self.x
    }

    pub fn y(&self) -> &[Complex64] {
        &self.y
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn center_wavelength_m(&self) -> f64 {
        self.center_wavelength_m
    }

    pub fn position_km(&self) -> f64 {
        self.position_km
    }

    pub fn into_parts(self) -> (Vec<Complex64>, Vec<Complex64>) {
        (self.x, self.y)
    }

    /// Rebuild a field with the same metadata around new sample buffers.
    ///
    /// Used by the in-crate operators, which keep their buffers finite.
    pub(crate) fn with_samples(&self, x: Vec<Complex64>, y: Vec<Complex64>) -> Self {
        debug_assert_eq!(x.len(), y.len());
        Self {
            x,
            y,
            sample_rate_hz: self.sample_rate_hz,
            center_wavelength_m: self.center_wavelength_m,
            position_km: self.position_km,
        }
    }

    pub fn at_position(mut self, position_km: f64) -> Self {
        self.position_km = position_km;
        self
    }

    /// Mean total power over both polarizations, W.
    pub fn mean_power_w(&self) -> f64 {
        self.energy() / self.len() as f64
    }

    /// Sum of `|x|² + |y|²` over the frame.
    pub fn energy(&self) -> f64 {
        self.x.iter().chain(&self.y).map(|c| c.norm_sqr()).sum()
    }

    /// Largest instantaneous total power, W.
    pub fn peak_power_w(&self) -> f64 {
        self.x
            .iter()
            .zip(&self.y)
            .map(|(a, b)| a.norm_sqr() + b.norm_sqr())
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.with_samples(
            self.x.iter().map(|c| c * factor).collect(),
            self.y.iter().map(|c| c * factor).collect(),
        )
    }

    pub fn is_finite(&self) -> bool {
        first_non_finite(&self.x).is_none() && first_non_finite(&self.y).is_none()
    }

    /// Check that two fields share length and sampling metadata.
    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::invalid(format!(
                "field lengths differ: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        if self.sample_rate_hz != other.sample_rate_hz {
            return Err(Error::invalid(format!(
                "sample rates differ: {} vs {}",
                self.sample_rate_hz, other.sample_rate_hz
            )));
        }
        if self.center_wavelength_m != other.center_wavelength_m {
            return Err(Error::invalid("center wavelengths differ"));
        }
        Ok(())
    }
}

fn first_non_finite(v: &[Complex64]) -> Option<usize> {
    v.iter().position(|c| !(c.re.is_finite() && c.im.is_finite()))
}
