//! Transmission-system configuration: WDM grid, fiber spans, amplifiers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{alpha_db_to_linear, dbm_to_w, SPEED_OF_LIGHT};

/// Group-velocity dispersion β2 in ps²/km from the dispersion parameter D
/// in ps/(nm·km): `β2 = −D·λ²/(2πc)`.
pub fn derive_beta2(dispersion_ps_nm_km: f64, wavelength_m: f64) -> Result<f64> {
    if !dispersion_ps_nm_km.is_finite() || !wavelength_m.is_finite() {
        return Err(Error::invalid("dispersion and wavelength must be finite"));
    }
    if wavelength_m <= 0.0 {
        return Err(Error::invalid("wavelength must be positive"));
    }
    // D [ps/(nm km)] = D·1e3 [ps/(m km)]; λ²/(2πc) [m·s] → β2 [ps·s/km] → ×1e12 ps²/km.
    let d_ps_per_m_km = dispersion_ps_nm_km * 1e9;
    let beta2_ps_s_per_km =
        -d_ps_per_m_km * wavelength_m * wavelength_m / (2.0 * std::f64::consts::PI * SPEED_OF_LIGHT);
    Ok(beta2_ps_s_per_km * 1e12)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modulation {
    #[serde(rename = "DP16QAM")]
    Dp16Qam,
}

/// WDM grid and per-channel signal parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WdmConfig {
    pub num_channels: usize,
    pub symbol_rate_baud: f64,
    pub channel_spacing_hz: f64,
    pub rolloff: f64,
    pub launch_power_dbm_per_channel: f64,
    pub modulation: Modulation,
    pub samples_per_symbol: usize,
}

impl WdmConfig {
    /// Grid with the default spacing (1.2·S), roll-off 0.1 and 4·C samples
    /// per symbol.
    pub fn new(num_channels: usize, symbol_rate_baud: f64, launch_power_dbm_per_channel: f64) -> Self {
        Self {
            num_channels,
            symbol_rate_baud,
            channel_spacing_hz: 1.2 * symbol_rate_baud,
            rolloff: 0.1,
            launch_power_dbm_per_channel,
            modulation: Modulation::Dp16Qam,
            samples_per_symbol: 4 * num_channels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_channels == 0 {
            return Err(Error::invalid("num_channels must be positive"));
        }
        if !(self.symbol_rate_baud.is_finite() && self.symbol_rate_baud > 0.0) {
            return Err(Error::invalid("symbol_rate_baud must be positive"));
        }
        if !(self.rolloff > 0.0 && self.rolloff <= 1.0) {
            return Err(Error::invalid(format!("rolloff {} outside (0, 1]", self.rolloff)));
        }
        if !self.launch_power_dbm_per_channel.is_finite() {
            return Err(Error::invalid("launch power must be finite"));
        }
        if self.samples_per_symbol < 2 {
            return Err(Error::invalid("samples_per_symbol must be at least 2"));
        }
        let occupied = self.symbol_rate_baud * (1.0 + self.rolloff);
        if self.num_channels > 1 && self.channel_spacing_hz < occupied * (1.0 - 1e-12) {
            return Err(Error::invalid(format!(
                "channel spacing {:.4e} Hz is below the occupied bandwidth {:.4e} Hz",
                self.channel_spacing_hz, occupied
            )));
        }
        let required = self.required_band_hz();
        if required > self.sample_rate_hz() * (1.0 + 1e-12) {
            return Err(Error::BandOverflow { required_hz: required, sample_rate_hz: self.sample_rate_hz() });
        }
        Ok(())
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.symbol_rate_baud * self.samples_per_symbol as f64
    }

    /// Total bandwidth that must fit under the simulation sample rate.
    pub fn required_band_hz(&self) -> f64 {
        if self.num_channels == 1 {
            self.symbol_rate_baud * (1.0 + self.rolloff)
        } else {
            self.num_channels as f64 * self.channel_spacing_hz
        }
    }

    /// Carrier offset of channel `index` (0-based) from the grid center, Hz.
    pub fn channel_offset_hz(&self, index: usize) -> f64 {
        (index as f64 - (self.num_channels as f64 - 1.0) / 2.0) * self.channel_spacing_hz
    }

    /// The channel under test: the middle of the grid (upper-middle for even C).
    pub fn center_channel(&self) -> usize {
        self.num_channels / 2
    }

    pub fn launch_power_w_per_channel(&self) -> f64 {
        dbm_to_w(self.launch_power_dbm_per_channel)
    }

    pub fn total_launch_power_w(&self) -> f64 {
        self.num_channels as f64 * self.launch_power_w_per_channel()
    }
}

/// One fiber span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiberSpanParams {
    pub attenuation_db_per_km: f64,
    pub dispersion_ps_nm_km: f64,
    /// Explicit β2 in ps²/km. Derived from the dispersion parameter when absent.
    pub beta2_ps2_per_km: Option<f64>,
    pub gamma_per_w_km: f64,
    pub span_length_km: f64,
    pub max_nonlinear_phase_rad: f64,
}

impl Default for FiberSpanParams {
    /// Standard single-mode fiber: 80 km, 0.2 dB/km, 17 ps/(nm·km), γ = 1.3 /(W·km).
    fn default() -> Self {
        Self {
            attenuation_db_per_km: 0.2,
            dispersion_ps_nm_km: 17.0,
            beta2_ps2_per_km: None,
            gamma_per_w_km: 1.3,
            span_length_km: 80.0,
            max_nonlinear_phase_rad: 0.005,
        }
    }
}

impl FiberSpanParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.attenuation_db_per_km.is_finite() && self.attenuation_db_per_km >= 0.0) {
            return Err(Error::invalid("attenuation must be nonnegative"));
        }
        if !(self.gamma_per_w_km.is_finite() && self.gamma_per_w_km >= 0.0) {
            return Err(Error::invalid("gamma must be nonnegative"));
        }
        if !(self.span_length_km.is_finite() && self.span_length_km > 0.0) {
            return Err(Error::invalid("span length must be positive"));
        }
        if !(self.max_nonlinear_phase_rad > 0.0 && self.max_nonlinear_phase_rad <= 0.1) {
            return Err(Error::invalid("max nonlinear phase must lie in (0, 0.1]"));
        }
        if !self.dispersion_ps_nm_km.is_finite() || self.beta2_ps2_per_km.is_some_and(|b| !b.is_finite()) {
            return Err(Error::invalid("dispersion must be finite"));
        }
        Ok(())
    }

    pub fn beta2_ps2_per_km(&self, wavelength_m: f64) -> Result<f64> {
        match self.beta2_ps2_per_km {
            Some(b) => Ok(b),
            None => derive_beta2(self.dispersion_ps_nm_km, wavelength_m),
        }
    }

    /// Power attenuation constant, 1/km.
    pub fn alpha_linear(&self) -> f64 {
        alpha_db_to_linear(self.attenuation_db_per_km)
    }

    pub fn span_loss_db(&self) -> f64 {
        self.attenuation_db_per_km * self.span_length_km
    }
}

/// Amplifier at the end of a span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdfaParams {
    /// Gain in dB; `None` compensates the span loss exactly.
    pub gain_db: Option<f64>,
    pub noise_figure_db: f64,
    pub enabled: bool,
    /// Apply gain without ASE.
    pub noiseless: bool,
    pub ase_seed: u64,
}

impl Default for EdfaParams {
    fn default() -> Self {
        Self { gain_db: None, noise_figure_db: 5.0, enabled: true, noiseless: false, ase_seed: 0 }
    }
}

impl EdfaParams {
    pub fn disabled() -> Self {
        Self { enabled: false, ..Self::default() }
    }

    pub fn noiseless() -> Self {
        Self { noiseless: true, ..Self::default() }
    }

    /// Effective gain in dB for the given span (0 when disabled).
    pub fn gain_db_for(&self, span: &FiberSpanParams) -> f64 {
        if !self.enabled {
            return 0.0;
        }
        self.gain_db.unwrap_or_else(|| span.span_loss_db())
    }

    pub fn adds_noise(&self) -> bool {
        self.enabled && !self.noiseless
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpanConfig {
    pub fiber: FiberSpanParams,
    pub edfa: EdfaParams,
}

/// An ordered cascade of spans.
///
/// `plan_power_w` is the nominal total launch power at every span input; the
/// step planner derives its power envelope from it so step plans never
/// depend on the data realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub spans: Vec<SpanConfig>,
    pub plan_power_w: f64,
}

impl LinkConfig {
    /// `num_spans` identical spans; every amplifier gets its own ASE seed
    /// derived from `ase_seed`.
    pub fn uniform(
        num_spans: usize,
        fiber: FiberSpanParams,
        edfa: EdfaParams,
        plan_power_w: f64,
    ) -> Self {
        let base = edfa.ase_seed;
        let spans = (0..num_spans)
            .map(|i| SpanConfig {
                fiber: fiber.clone(),
                edfa: EdfaParams { ase_seed: crate::prng::mix_seed(base, i as u64 + 1), ..edfa.clone() },
            })
            .collect();
        Self { spans, plan_power_w }
    }

    /// Same link with every amplifier re-seeded from `base`; span `i`
    /// (0-based) gets `mix_seed(base, i + 1)`.
    pub fn reseeded(&self, base: u64) -> Self {
        let mut out = self.clone();
        for (i, s) in out.spans.iter_mut().enumerate() {
            s.edfa.ase_seed = crate::prng::mix_seed(base, i as u64 + 1);
        }
        out
    }

    pub fn num_spans(&self) -> usize {
        self.spans.len()
    }

    pub fn total_distance_km(&self) -> f64 {
        self.spans.iter().map(|s| s.fiber.span_length_km).sum()
    }

    /// The first `n` spans as a link of their own.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n > self.spans.len() {
            return Err(Error::LinkMismatch(format!(
                "requested {n} spans from a {}-span link",
                self.spans.len()
            )));
        }
        Ok(Self { spans: self.spans[..n].to_vec(), plan_power_w: self.plan_power_w })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.plan_power_w.is_finite() && self.plan_power_w > 0.0) {
            return Err(Error::invalid("plan_power_w must be positive"));
        }
        for (i, s) in self.spans.iter().enumerate() {
            s.fiber.validate().map_err(|e| Error::invalid(format!("span {}: {e}", i + 1)))?;
            if s.edfa.enabled && s.edfa.gain_db.is_some_and(|g| !(g >= 0.0)) {
                return Err(Error::invalid(format!("span {}: EDFA gain must be >= 0 dB", i + 1)));
            }
            if !s.edfa.noise_figure_db.is_finite() {
                return Err(Error::invalid(format!("span {}: noise figure must be finite", i + 1)));
            }
        }
        Ok(())
    }
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self::uniform(10, FiberSpanParams::default(), EdfaParams::default(), dbm_to_w(0.0))
    }
}
