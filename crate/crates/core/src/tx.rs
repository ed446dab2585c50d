//! Transmitter: bits, DP-16QAM mapping, RRC pulse shaping and WDM
//! multiplexing into the full-field signal.

use num_complex::Complex64;
use rand::RngCore;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::DualPolField;
use crate::params::WdmConfig;
use crate::prng::PrngSpec;
use crate::spectral::{frequencies, frequency_shift, offset_in_bins, Spectral};
use crate::symbols::{DualPolSymbols, SymbolStream};

/// Symbols per polarization in one simulation frame.
pub const DEFAULT_FRAME_SYMBOLS: usize = 7680;

pub const BITS_PER_SYMBOL: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitStream {
    pub bits: Vec<u8>,
    pub prng: PrngSpec,
}

impl BitStream {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// Draw `count` bits, LSB first from successive 64-bit outputs.
pub fn generate_bits(prng: PrngSpec, count: usize) -> Result<BitStream> {
    if count == 0 {
        return Err(Error::invalid("bit count must be positive"));
    }
    let mut rng = prng.stream();
    let mut bits = Vec::with_capacity(count);
    while bits.len() < count {
        let word = rng.next_u64();
        let take = (count - bits.len()).min(64);
        bits.extend((0..take).map(|i| ((word >> i) & 1) as u8));
    }
    Ok(BitStream { bits, prng })
}

const QAM16_SCALE: f64 = 0.316_227_766_016_837_94; // 1/sqrt(10)

/// Gray code for one 2-bit axis: 00 → −3, 01 → −1, 11 → +1, 10 → +3.
const AXIS_LEVELS: [f64; 4] = [-3.0, -1.0, 3.0, 1.0];

/// Constellation point of a 4-bit label `b0 b1 b2 b3`: `b0 b1` select the
/// in-phase level and `b2 b3` the quadrature level.
///
/// | bits | I or Q level |
/// |------|--------------|
/// | 00   | −3/√10       |
/// | 01   | −1/√10       |
/// | 11   | +1/√10       |
/// | 10   | +3/√10       |
pub fn qam16_point(b: [u8; 4]) -> Complex64 {
    let i = AXIS_LEVELS[((b[0] << 1) | b[1]) as usize];
    let q = AXIS_LEVELS[((b[2] << 1) | b[3]) as usize];
    Complex64::new(i, q) * QAM16_SCALE
}

fn axis_decide(v: f64) -> [u8; 2] {
    let u = v / QAM16_SCALE;
    if u < -2.0 {
        [0, 0]
    } else if u < 0.0 {
        [0, 1]
    } else if u < 2.0 {
        [1, 1]
    } else {
        [1, 0]
    }
}

/// Minimum-distance decision on the unit-power grid, returning the label.
pub fn qam16_decide(c: Complex64) -> [u8; 4] {
    let [b0, b1] = axis_decide(c.re);
    let [b2, b3] = axis_decide(c.im);
    [b0, b1, b2, b3]
}

/// Map bits to dual-polarization symbols. Each group of eight bits is one
/// symbol slot: the first four go to X, the next four to Y.
pub fn map_qam16(bits: &BitStream) -> Result<SymbolStream> {
    if bits.bits.is_empty() || bits.bits.len() % (2 * BITS_PER_SYMBOL) != 0 {
        return Err(Error::invalid(format!(
            "bit count {} is not a positive multiple of {}",
            bits.bits.len(),
            2 * BITS_PER_SYMBOL
        )));
    }
    if let Some(b) = bits.bits.iter().find(|&&b| b > 1) {
        return Err(Error::invalid(format!("bit value {b} is not 0 or 1")));
    }
    let (x, y) = bits
        .bits
        .chunks_exact(8)
        .map(|c| {
            (qam16_point([c[0], c[1], c[2], c[3]]), qam16_point([c[4], c[5], c[6], c[7]]))
        })
        .unzip();
    DualPolSymbols::new(x, y)
}

/// Inverse of [`map_qam16`] on hard decisions.
pub fn demap_qam16(symbols: &DualPolSymbols) -> Vec<u8> {
    let mut bits = Vec::with_capacity(symbols.len() * 8);
    for (x, y) in symbols.x.iter().zip(&symbols.y) {
        bits.extend_from_slice(&qam16_decide(*x));
        bits.extend_from_slice(&qam16_decide(*y));
    }
    bits
}

/// Raised-cosine spectrum with unit passband gain.
pub fn raised_cosine(f: f64, symbol_rate: f64, rolloff: f64) -> f64 {
    let af = f.abs();
    let f1 = (1.0 - rolloff) * symbol_rate / 2.0;
    let f2 = (1.0 + rolloff) * symbol_rate / 2.0;
    if af <= f1 {
        1.0
    } else if af < f2 {
        0.5 * (1.0 + (std::f64::consts::PI / (rolloff * symbol_rate) * (af - f1)).cos())
    } else {
        0.0
    }
}

/// Root-raised-cosine transfer function over the FFT grid of an `n`-point
/// frame sampled at `sample_rate_hz`, scaled by `gain`.
pub fn rrc_transfer(n: usize, sample_rate_hz: f64, symbol_rate: f64, rolloff: f64, gain: f64) -> Vec<Complex64> {
    frequencies(n, sample_rate_hz)
        .into_iter()
        .map(|f| Complex64::new(gain * raised_cosine(f, symbol_rate, rolloff).sqrt(), 0.0))
        .collect()
}

fn check_rolloff(rolloff: f64) -> Result<()> {
    if !(rolloff > 0.0 && rolloff <= 1.0) {
        return Err(Error::invalid(format!("rolloff {rolloff} outside (0, 1]")));
    }
    Ok(())
}

/// Upsample by zero insertion and apply an RRC filter in the frequency
/// domain over the circular frame.
///
/// The transmit filter carries a gain of `upsample` so that the cascade with
/// a unit-gain matched RRC and decimation returns the symbols unchanged.
pub fn pulse_shape(
    symbols: &SymbolStream,
    symbol_rate: f64,
    rolloff: f64,
    upsample: usize,
) -> Result<DualPolField> {
    check_rolloff(rolloff)?;
    if upsample < 2 {
        return Err(Error::invalid("upsample factor must be at least 2"));
    }
    if symbols.is_empty() {
        return Err(Error::invalid("no symbols to shape"));
    }
    let n = symbols.len() * upsample;
    let fs = symbol_rate * upsample as f64;
    let h = rrc_transfer(n, fs, symbol_rate, rolloff, upsample as f64);
    let mut spectral = Spectral::new(n);
    let mut shape = |s: &[Complex64]| {
        let mut buf = vec![Complex64::default(); n];
        for (i, &c) in s.iter().enumerate() {
            buf[i * upsample] = c;
        }
        spectral.filter(&mut buf, &h);
        buf
    };
    let x = shape(&symbols.x);
    let y = shape(&symbols.y);
    DualPolField::new(x, y, fs)
}

/// Sum per-channel baseband fields onto their carriers:
/// `A(0,t) = Σ_k A_k(0,t)·exp(jΔω_k t)`.
///
/// Each channel is first scaled to the configured launch power. Carrier
/// offsets must land on whole FFT bins so the frame stays periodic.
pub fn wdm_multiplex(channels: &[DualPolField], cfg: &WdmConfig) -> Result<DualPolField> {
    cfg.validate()?;
    if channels.len() != cfg.num_channels {
        return Err(Error::invalid(format!(
            "expected {} channel fields, got {}",
            cfg.num_channels,
            channels.len()
        )));
    }
    let first = &channels[0];
    for c in &channels[1..] {
        first.check_compatible(c)?;
    }
    let fs = first.sample_rate_hz();
    if (fs - cfg.sample_rate_hz()).abs() > 1e-9 * fs {
        return Err(Error::invalid(format!(
            "channel sample rate {fs:.6e} Hz does not match the grid rate {:.6e} Hz",
            cfg.sample_rate_hz()
        )));
    }
    let n = first.len();
    let p_ch = cfg.launch_power_w_per_channel();
    let shifted: Vec<(Vec<Complex64>, Vec<Complex64>)> = channels
        .par_iter()
        .enumerate()
        .map(|(k, ch)| {
            let offset = cfg.channel_offset_hz(k);
            let bins = offset_in_bins(offset, n, fs).ok_or_else(|| {
                Error::invalid(format!(
                    "carrier offset {offset:.6e} Hz of channel {k} is not a whole number of {:.6e} Hz bins",
                    fs / n as f64
                ))
            })?;
            let p = ch.mean_power_w();
            if p <= 0.0 {
                return Err(Error::invalid(format!("channel {k} carries no power")));
            }
            let scale = (p_ch / p).sqrt();
            let mut x: Vec<Complex64> = ch.x().iter().map(|c| c * scale).collect();
            let mut y: Vec<Complex64> = ch.y().iter().map(|c| c * scale).collect();
            frequency_shift(&mut x, bins);
            frequency_shift(&mut y, bins);
            Ok((x, y))
        })
        .collect::<Result<_>>()?;
    let mut x = vec![Complex64::default(); n];
    let mut y = vec![Complex64::default(); n];
    for (cx, cy) in shifted {
        x.iter_mut().zip(cx).for_each(|(a, b)| *a += b);
        y.iter_mut().zip(cy).for_each(|(a, b)| *a += b);
    }
    DualPolField::with_metadata(x, y, fs, first.center_wavelength_m(), 0.0)
}

/// Everything the transmitter produced for one frame.
#[derive(Debug, Clone)]
pub struct TxFrame {
    pub cfg: WdmConfig,
    pub bits: Vec<BitStream>,
    pub symbols: Vec<SymbolStream>,
    pub field: DualPolField,
}

impl TxFrame {
    /// Generate a full WDM frame. Channel `k` draws its bits from
    /// `prng.with_stream(prng.stream_id + k)`.
    pub fn generate(cfg: &WdmConfig, num_symbols: usize, prng: PrngSpec) -> Result<Self> {
        cfg.validate()?;
        if num_symbols == 0 {
            return Err(Error::invalid("frame must hold at least one symbol"));
        }
        let per_channel: Vec<(BitStream, SymbolStream, DualPolField)> = (0..cfg.num_channels)
            .into_par_iter()
            .map(|k| {
                let spec = prng.with_stream(prng.stream_id.wrapping_add(k as u64));
                let bits = generate_bits(spec, num_symbols * 2 * BITS_PER_SYMBOL)?;
                let symbols = map_qam16(&bits)?;
                let field = pulse_shape(&symbols, cfg.symbol_rate_baud, cfg.rolloff, cfg.samples_per_symbol)?;
                Ok((bits, symbols, field))
            })
            .collect::<Result<_>>()?;
        let fields: Vec<DualPolField> = per_channel.iter().map(|c| c.2.clone()).collect();
        let field = wdm_multiplex(&fields, cfg)?;
        let (bits, symbols) = per_channel.into_iter().map(|(b, s, _)| (b, s)).unzip();
        Ok(Self { cfg: cfg.clone(), bits, symbols, field })
    }

    pub fn num_symbols(&self) -> usize {
        self.symbols[0].len()
    }
}
