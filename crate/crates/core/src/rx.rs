//! Receiver DSP: channel demultiplexing, matched filtering, dispersion
//! compensation, digital backpropagation, carrier phase recovery, decisions
//! and calibrated noise loading.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::DualPolField;
use crate::metrics::{ber_q, esnr, BerQ, Metric};
use crate::params::{LinkConfig, WdmConfig};
use crate::prng::PrngSpec;
use crate::spectral::{angular_frequencies, frequencies, frequency_shift, offset_in_bins, Spectral};
use crate::ssfm::{plan_steps, unit_complex_noise, FiberEngine};
use crate::symbols::{DualPolSymbols, RxSymbols, SymbolStream};
use crate::tx::{demap_qam16, rrc_transfer};
use crate::units::{db_to_lin, PS2_TO_S2};

pub const DEFAULT_CPR_BLOCK: usize = 512;
pub const DEFAULT_TARGET_BER: f64 = 4e-2;
pub const NOISE_LOADING_TOLERANCE: f64 = 2e-3;
pub const NOISE_LOADING_MAX_ITERATIONS: usize = 40;

/// Shift channel `channel_index` to baseband and keep only its slot
/// (`|f| ≤ spacing/2`).
pub fn demux_cut(field: &DualPolField, cfg: &WdmConfig, channel_index: usize) -> Result<DualPolField> {
    if channel_index >= cfg.num_channels {
        return Err(Error::invalid(format!(
            "channel {channel_index} outside 0..{}",
            cfg.num_channels
        )));
    }
    let n = field.len();
    let fs = field.sample_rate_hz();
    let offset = cfg.channel_offset_hz(channel_index);
    let bins = offset_in_bins(offset, n, fs)
        .ok_or_else(|| Error::invalid(format!("carrier offset {offset:.6e} Hz is not on the FFT grid")))?;
    let half = cfg.channel_spacing_hz / 2.0;
    let mask: Vec<Complex64> = frequencies(n, fs)
        .into_iter()
        .map(|f| if f.abs() <= half * (1.0 + 1e-12) { Complex64::new(1.0, 0.0) } else { Complex64::default() })
        .collect();
    let mut spectral = Spectral::new(n);
    let mut select = |s: &[Complex64]| {
        let mut buf = s.to_vec();
        frequency_shift(&mut buf, -bins);
        spectral.filter(&mut buf, &mask);
        buf
    };
    let x = select(field.x());
    let y = select(field.y());
    Ok(field.with_samples(x, y))
}

/// Unit-gain matched RRC filter, then decimation at the symbol instants.
pub fn matched_filter_downsample(
    field: &DualPolField,
    symbol_rate: f64,
    rolloff: f64,
    sps: usize,
) -> Result<RxSymbols> {
    if sps == 0 || field.len() % sps != 0 {
        return Err(Error::invalid(format!(
            "{} samples are not a whole number of {sps}-sample symbols",
            field.len()
        )));
    }
    let fs = field.sample_rate_hz();
    if ((symbol_rate * sps as f64) - fs).abs() > 1e-9 * fs {
        return Err(Error::invalid(format!(
            "sample rate {fs:.6e} Hz is not {sps} samples per {symbol_rate:.6e} Bd symbol"
        )));
    }
    if !(rolloff > 0.0 && rolloff <= 1.0) {
        return Err(Error::invalid(format!("rolloff {rolloff} outside (0, 1]")));
    }
    let n = field.len();
    let h = rrc_transfer(n, fs, symbol_rate, rolloff, 1.0);
    let mut spectral = Spectral::new(n);
    let mut run = |s: &[Complex64]| {
        let mut buf = s.to_vec();
        spectral.filter(&mut buf, &h);
        buf.into_iter().step_by(sps).collect::<Vec<_>>()
    };
    let x = run(field.x());
    let y = run(field.y());
    DualPolSymbols::new(x, y)
}

/// Chromatic dispersion compensation: multiply by `exp(−j(β2/2)ω²L)`.
pub fn cdc(field: &DualPolField, beta2_ps2_per_km: f64, distance_km: f64) -> DualPolField {
    cdc_accumulated(field, beta2_ps2_per_km * distance_km)
}

/// CDC for an accumulated dispersion `Σβ2·L` in ps².
pub fn cdc_accumulated(field: &DualPolField, accumulated_ps2: f64) -> DualPolField {
    if accumulated_ps2 == 0.0 {
        return field.clone();
    }
    let n = field.len();
    let k = -accumulated_ps2 * PS2_TO_S2 / 2.0;
    let h: Vec<Complex64> = angular_frequencies(n, field.sample_rate_hz())
        .into_iter()
        .map(|w| Complex64::from_polar(1.0, k * w * w))
        .collect();
    let mut spectral = Spectral::new(n);
    let mut x = field.x().to_vec();
    let mut y = field.y().to_vec();
    spectral.filter(&mut x, &h);
    spectral.filter(&mut y, &h);
    field.with_samples(x, y)
}

/// Total `Σβ2·L_S` of a link in ps².
pub fn accumulated_dispersion_ps2(link: &LinkConfig, wavelength_m: f64) -> Result<f64> {
    link.spans
        .iter()
        .map(|s| Ok(s.fiber.beta2_ps2_per_km(wavelength_m)? * s.fiber.span_length_km))
        .sum()
}

/// Multi-channel digital backpropagation over the full WDM field: span by
/// span from the receiver end, remove the amplifier gain and run the
/// forward step plan in reverse with every operator inverted.
///
/// Noise cannot be removed; on a noiseless link with the forward plan this
/// returns the launched field up to rounding.
pub fn multi_channel_dbp(field: &DualPolField, link: &LinkConfig) -> Result<DualPolField> {
    link.validate()?;
    let d = link.total_distance_km();
    if (field.position_km() - d).abs() > 1e-6 * d.max(1.0) {
        return Err(Error::LinkMismatch(format!(
            "field sits at {} km but the link is {d} km long",
            field.position_km()
        )));
    }
    let (mut x, mut y) = (field.x().to_vec(), field.y().to_vec());
    for (i, span) in link.spans.iter().enumerate().rev() {
        let g = db_to_lin(span.edfa.gain_db_for(&span.fiber)).sqrt().recip();
        x.iter_mut().chain(y.iter_mut()).for_each(|c| *c *= g);
        let plan = plan_steps(&span.fiber, link.plan_power_w)?;
        let mut engine =
            FiberEngine::new(field.len(), field.sample_rate_hz(), field.center_wavelength_m(), &span.fiber)?;
        engine.run(&mut x, &mut y, &plan.step_lengths_km, true, i + 1)?;
    }
    Ok(field.with_samples(x, y).at_position(0.0))
}

/// Least-squares amplitude normalization against the known symbols:
/// divides by `|Σ rx·conj(tx)| / Σ|tx|²`.
pub fn normalize_scale(rx: &RxSymbols, tx: &SymbolStream) -> Result<RxSymbols> {
    rx.check_aligned(tx)?;
    let corr: Complex64 = rx.iter().zip(tx.iter()).map(|(r, t)| r * t.conj()).sum();
    let e: f64 = tx.iter().map(|t| t.norm_sqr()).sum();
    let k = corr.norm() / e;
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::Numeric("received symbols carry no signal".into()));
    }
    Ok(rx.map(|c| c / k))
}

/// Data-aided carrier phase recovery: per block and polarization, remove
/// `arg Σ rx·conj(tx)`.
pub fn cpr(rx: &RxSymbols, tx: &SymbolStream, block: usize) -> Result<RxSymbols> {
    rx.check_aligned(tx)?;
    if block == 0 {
        return Err(Error::invalid("CPR block length must be positive"));
    }
    let fix = |r: &[Complex64], t: &[Complex64]| -> Result<Vec<Complex64>> {
        let mut out = Vec::with_capacity(r.len());
        for (rb, tb) in r.chunks(block).zip(t.chunks(block)) {
            let corr: Complex64 = rb.iter().zip(tb).map(|(a, b)| a * b.conj()).sum();
            if corr.norm() == 0.0 {
                return Err(Error::Numeric(format!("zero-energy CPR block at symbol {}", out.len())));
            }
            let rot = (corr / corr.norm()).conj();
            out.extend(rb.iter().map(|c| c * rot));
        }
        Ok(out)
    };
    DualPolSymbols::new(fix(&rx.x, &tx.x)?, fix(&rx.y, &tx.y)?)
}

pub fn hard_decide_qam16(rx: &RxSymbols) -> Vec<u8> {
    demap_qam16(rx)
}

/// Add `sigma·n` where `n` is the unit complex noise drawn from `prng`.
pub fn add_loading_noise(rx: &RxSymbols, sigma: f64, noise: &DualPolSymbols) -> Result<RxSymbols> {
    rx.check_aligned(noise)?;
    let add = |a: &[Complex64], n: &[Complex64]| a.iter().zip(n).map(|(a, n)| a + n * sigma).collect();
    DualPolSymbols::new(add(&rx.x, &noise.x), add(&rx.y, &noise.y))
}

pub fn loading_noise(prng: PrngSpec, len: usize) -> DualPolSymbols {
    let (x, y) = unit_complex_noise(prng, len);
    DualPolSymbols { x, y }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseLoading {
    pub sigma: f64,
    pub ber: f64,
    pub iterations: usize,
}

/// Find the noise level that brings the BER to `target_ber`, bisecting on
/// `σ` with one fixed unit-noise realization drawn from `prng`.
pub fn load_noise_to_target_ber(
    rx: &RxSymbols,
    tx_bits: &[u8],
    target_ber: f64,
    prng: PrngSpec,
) -> Result<(RxSymbols, NoiseLoading)> {
    if !(target_ber > 0.0 && target_ber < 0.5) {
        return Err(Error::invalid(format!("target BER {target_ber} outside (0, 0.5)")));
    }
    let noise = loading_noise(prng, rx.len());
    let ber_at = |sigma: f64| -> Result<f64> {
        let loaded = add_loading_noise(rx, sigma, &noise)?;
        Ok(ber_q(&hard_decide_qam16(&loaded), tx_bits)?.ber)
    };
    let base = ber_at(0.0)?;
    if base > target_ber + NOISE_LOADING_TOLERANCE {
        return Err(Error::UnreachableBer { target: target_ber, current: base });
    }
    let mut best = (0.0, base);
    let mut iterations = 0;
    if (base - target_ber).abs() > NOISE_LOADING_TOLERANCE {
        let mut lo = 0.0;
        let mut hi = 0.1;
        loop {
            let b = ber_at(hi)?;
            iterations += 1;
            if b >= target_ber {
                break;
            }
            lo = hi;
            hi *= 2.0;
            if hi > 1e3 {
                return Err(Error::Numeric("noise loading failed to bracket the target BER".into()));
            }
        }
        while iterations < NOISE_LOADING_MAX_ITERATIONS {
            let mid = 0.5 * (lo + hi);
            let b = ber_at(mid)?;
            iterations += 1;
            if (b - target_ber).abs() < (best.1 - target_ber).abs() {
                best = (mid, b);
            }
            if (b - target_ber).abs() <= NOISE_LOADING_TOLERANCE / 4.0 {
                break;
            }
            if b < target_ber {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let (sigma, ber) = best;
    if (ber - target_ber).abs() > NOISE_LOADING_TOLERANCE {
        return Err(Error::Numeric(format!(
            "noise loading reached BER {ber:.4e}, outside {NOISE_LOADING_TOLERANCE} of {target_ber}"
        )));
    }
    let loaded = add_loading_noise(rx, sigma, &noise)?;
    Ok((loaded, NoiseLoading { sigma, ber, iterations }))
}

/// Which dispersion/nonlinearity compensation the receiver applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Compensation {
    None,
    /// Linear DSP: CDC on the channel under test.
    Cdc,
    /// Nonlinear DSP: multi-channel DBP on the full field.
    Dbp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RxConfig {
    pub cpr_block: usize,
    pub target_ber: f64,
}

impl Default for RxConfig {
    fn default() -> Self {
        Self { cpr_block: DEFAULT_CPR_BLOCK, target_ber: DEFAULT_TARGET_BER }
    }
}

/// Run the receiver up to phase-recovered symbols of the channel under test.
///
/// `link` supplies the accumulated dispersion for CDC and the span
/// parameters for DBP; it must describe the spans the field went through.
pub fn recover_symbols(
    field: &DualPolField,
    cfg: &WdmConfig,
    link: &LinkConfig,
    tx: &SymbolStream,
    compensation: Compensation,
    rx_cfg: &RxConfig,
) -> Result<RxSymbols> {
    let full = match compensation {
        Compensation::Dbp => multi_channel_dbp(field, link)?,
        _ => field.clone(),
    };
    let mut cut = demux_cut(&full, cfg, cfg.center_channel())?;
    if compensation == Compensation::Cdc {
        cut = cdc_accumulated(&cut, accumulated_dispersion_ps2(link, field.center_wavelength_m())?);
    }
    let symbols = matched_filter_downsample(&cut, cfg.symbol_rate_baud, cfg.rolloff, cfg.samples_per_symbol)?;
    let symbols = normalize_scale(&symbols, tx)?;
    cpr(&symbols, tx, rx_cfg.cpr_block)
}

/// Received-symbol quality without noise loading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymbolQuality {
    pub esnr_db: Metric,
    pub ber_q: BerQ,
}

pub fn symbol_quality(rx: &RxSymbols, tx: &SymbolStream, tx_bits: &[u8]) -> Result<SymbolQuality> {
    Ok(SymbolQuality { esnr_db: esnr(rx, tx)?, ber_q: ber_q(&hard_decide_qam16(rx), tx_bits)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::nmse_fields;
    use crate::params::{EdfaParams, FiberSpanParams};
    use crate::ssfm::linear_half_step;
    use crate::tx::{generate_bits, map_qam16, pulse_shape, TxFrame};

    fn frame(c: usize, symbols: usize, dbm: f64) -> TxFrame {
        TxFrame::generate(&WdmConfig::new(c, 50e9, dbm), symbols, PrngSpec::philox(3, 0)).unwrap()
    }

    fn tail_q(a: f64) -> f64 {
        0.5 * libm::erfc(a / std::f64::consts::SQRT_2)
    }

    #[test]
    fn rrc_pair_recovers_symbols() {
        let bits = generate_bits(PrngSpec::philox(1, 0), 8 * 640).unwrap();
        let s = map_qam16(&bits).unwrap();
        let f = pulse_shape(&s, 50e9, 0.1, 4).unwrap();
        let r = matched_filter_downsample(&f, 50e9, 0.1, 4).unwrap();
        let max_err = r.iter().zip(s.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(max_err < 1e-9, "{max_err}");
    }

    #[test]
    fn impulse_through_pair_is_raised_cosine() {
        let mut x = vec![Complex64::default(); 64];
        x[0] = Complex64::new(1.0, 0.0);
        let s = DualPolSymbols::new(x, vec![Complex64::default(); 64]).unwrap();
        let f = pulse_shape(&s, 1.0, 0.1, 4).unwrap();
        let r = matched_filter_downsample(&f, 1.0, 0.1, 4).unwrap();
        assert!((r.x[0].re - 1.0).abs() < 1e-12);
        assert!(r.x[1..].iter().all(|c| c.norm() < 1e-12));
    }

    #[test]
    fn mux_demux_round_trip() {
        let fr = frame(5, 640, 0.0);
        let cfg = &fr.cfg;
        for k in 0..5 {
            let cut = demux_cut(&fr.field, cfg, k).unwrap();
            let single = pulse_shape(&fr.symbols[k], cfg.symbol_rate_baud, cfg.rolloff, cfg.samples_per_symbol)
                .unwrap();
            let single = single.scaled((cfg.launch_power_w_per_channel() / single.mean_power_w()).sqrt());
            assert!(nmse_fields(&single, &cut).unwrap() < 1e-6);
            let band_db = crate::units::w_to_dbm(cut.mean_power_w());
            assert!((band_db - cfg.launch_power_dbm_per_channel).abs() < 0.01);
        }
        assert!(demux_cut(&fr.field, cfg, 5).is_err());
        assert_eq!(cfg.center_channel(), 2);
    }

    #[test]
    fn back_to_back_is_error_free() {
        let fr = frame(5, 640, 4.0);
        let link = LinkConfig::uniform(0, FiberSpanParams::default(), EdfaParams::default(), 1e-3);
        let k = fr.cfg.center_channel();
        let rx = recover_symbols(&fr.field, &fr.cfg, &link, &fr.symbols[k], Compensation::Cdc, &RxConfig::default())
            .unwrap();
        let q = symbol_quality(&rx, &fr.symbols[k], &fr.bits[k].bits).unwrap();
        assert_eq!(q.ber_q.n_errors, 0);
        assert!(q.esnr_db.as_f64() > 40.0);
    }

    #[test]
    fn cdc_inverts_dispersion() {
        let fr = frame(1, 256, 0.0);
        let fiber = FiberSpanParams { attenuation_db_per_km: 0.0, gamma_per_w_km: 0.0, ..Default::default() };
        let beta2 = fiber.beta2_ps2_per_km(1550e-9).unwrap();
        assert_eq!(cdc(&fr.field, beta2, 0.0), fr.field);
        for l in [1.0, 80.0, 800.0] {
            let d = linear_half_step(&fr.field, &fiber, l).unwrap();
            let back = cdc(&d, beta2, l);
            assert!(nmse_fields(&fr.field, &back).unwrap() < 1e-12);
        }
    }

    #[test]
    fn dbp_with_zero_gamma_equals_cdc() {
        let fr = frame(1, 256, 0.0);
        let fiber = FiberSpanParams { gamma_per_w_km: 0.0, ..Default::default() };
        let link = LinkConfig::uniform(2, fiber.clone(), EdfaParams::noiseless(), 1e-3);
        let out = crate::ssfm::propagate_link(&fr.field, &link, &Default::default()).unwrap();
        let a = multi_channel_dbp(&out.field, &link).unwrap();
        let b = cdc(&out.field, fiber.beta2_ps2_per_km(1550e-9).unwrap(), 160.0);
        assert!(nmse_fields(&a, &b).unwrap() < 1e-12);
        assert!(nmse_fields(&fr.field, &a).unwrap() < 1e-12);
        let short = LinkConfig::uniform(1, fiber, EdfaParams::noiseless(), 1e-3);
        assert!(matches!(multi_channel_dbp(&out.field, &short), Err(Error::LinkMismatch(_))));
    }

    #[test]
    fn cpr_removes_constant_rotation() {
        let fr = frame(1, 1024, 0.0);
        let tx = &fr.symbols[0];
        assert_eq!(cpr(tx, tx, 512).unwrap(), *tx);
        let rot = Complex64::from_polar(1.0, 0.3);
        let rx = tx.map(|c| c * rot);
        let out = cpr(&rx, tx, 512).unwrap();
        let corr: Complex64 = out.iter().zip(tx.iter()).map(|(a, b)| a * b.conj()).sum();
        assert!(corr.arg().abs() < 1e-9);
        let before = esnr(&rx, tx).unwrap().as_f64();
        let after = esnr(&out, tx).unwrap().as_f64();
        assert!(after > before);
        let zeros = tx.map(|_| Complex64::default());
        assert!(cpr(&zeros, tx, 512).is_err());
    }

    #[test]
    fn hard_decisions_follow_gray_awgn_theory() {
        let n = 200_000;
        let bits = generate_bits(PrngSpec::philox(4, 0), 8 * n).unwrap();
        let s = map_qam16(&bits).unwrap();
        let sigma_c = 0.22;
        let noise = loading_noise(PrngSpec::philox(4, 1), n);
        let rx = add_loading_noise(&s, sigma_c, &noise).unwrap();
        let ber = ber_q(&hard_decide_qam16(&rx), &bits.bits).unwrap().ber;
        // Per-axis Gray 4-PAM with levels ±1, ±3 (×1/√10) and per-axis std σ_c/√2.
        let sd = sigma_c / std::f64::consts::SQRT_2 * 10f64.sqrt();
        let theory = (3.0 * tail_q(1.0 / sd) + 2.0 * tail_q(3.0 / sd) - tail_q(5.0 / sd)) / 4.0;
        let bin_sd = (theory * (1.0 - theory) / (8 * n) as f64).sqrt();
        assert!((ber - theory).abs() < 3.0 * bin_sd, "{ber} vs {theory}");
        assert_eq!(hard_decide_qam16(&s), bits.bits);
    }

    #[test]
    fn noise_loading_hits_target() {
        let fr = frame(1, 7680, 0.0);
        let tx = &fr.symbols[0];
        let (loaded, info) =
            load_noise_to_target_ber(tx, &fr.bits[0].bits, 4e-2, PrngSpec::philox(10, 0)).unwrap();
        assert!((info.ber - 0.04).abs() <= 2e-3, "{info:?}");
        let got = ber_q(&hard_decide_qam16(&loaded), &fr.bits[0].bits).unwrap().ber;
        assert_eq!(got, info.ber);
        assert!(load_noise_to_target_ber(tx, &fr.bits[0].bits, 0.6, PrngSpec::philox(10, 0)).is_err());
        let a = loading_noise(PrngSpec::philox(10, 0), 100);
        let b = loading_noise(PrngSpec::philox(10, 0), 100);
        assert_eq!(a, b);
    }

    #[test]
    fn noise_loading_rejects_unreachable_target() {
        let fr = frame(1, 1024, 0.0);
        let tx = &fr.symbols[0];
        let noisy = add_loading_noise(tx, 0.5, &loading_noise(PrngSpec::philox(1, 1), tx.len())).unwrap();
        assert!(matches!(
            load_noise_to_target_ber(&noisy, &fr.bits[0].bits, 1e-3, PrngSpec::philox(2, 0)),
            Err(Error::UnreachableBer { .. })
        ));
    }
}
