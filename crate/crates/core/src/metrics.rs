//! Waveform and transmission-performance metrics.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::field::DualPolField;
use crate::symbols::DualPolSymbols;

/// A metric value that may be unbounded. Unbounded values serialize as the
/// strings `"+unbounded"` / `"-unbounded"`, never as floating infinities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Finite(f64),
    PosUnbounded,
    NegUnbounded,
}

impl Metric {
    pub fn from_f64(v: f64) -> Self {
        if v == f64::INFINITY {
            Metric::PosUnbounded
        } else if v == f64::NEG_INFINITY {
            Metric::NegUnbounded
        } else {
            Metric::Finite(v)
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Metric::Finite(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Metric::Finite(v) => v,
            Metric::PosUnbounded => f64::INFINITY,
            Metric::NegUnbounded => f64::NEG_INFINITY,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Finite(v) => write!(f, "{v}"),
            Metric::PosUnbounded => f.write_str("+unbounded"),
            Metric::NegUnbounded => f.write_str("-unbounded"),
        }
    }
}

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Metric::Finite(v) => s.serialize_f64(*v),
            Metric::PosUnbounded => s.serialize_str("+unbounded"),
            Metric::NegUnbounded => s.serialize_str("-unbounded"),
        }
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(Metric::Finite(v)),
            Repr::Text(t) if t == "+unbounded" => Ok(Metric::PosUnbounded),
            Repr::Text(t) if t == "-unbounded" => Ok(Metric::NegUnbounded),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("unknown metric sentinel {t:?}"))),
        }
    }
}

/// `Σ|ŷ−y|² / Σ|y|²` over paired complex sequences.
pub fn nmse_slices<'a>(
    reference: impl IntoIterator<Item = &'a Complex64>,
    candidate: impl IntoIterator<Item = &'a Complex64>,
) -> Result<f64> {
    let (mut num, mut den, mut n) = (0.0, 0.0, 0usize);
    let mut cand = candidate.into_iter();
    for y in reference {
        let yh = cand.next().ok_or_else(|| Error::invalid("candidate shorter than reference"))?;
        num += (yh - y).norm_sqr();
        den += y.norm_sqr();
        n += 1;
    }
    if cand.next().is_some() {
        return Err(Error::invalid("candidate longer than reference"));
    }
    if n == 0 || den == 0.0 {
        return Err(Error::invalid("reference has zero energy"));
    }
    Ok(num / den)
}

/// NMSE over both polarizations jointly.
pub fn nmse_fields(reference: &DualPolField, candidate: &DualPolField) -> Result<f64> {
    if reference.len() != candidate.len() {
        return Err(Error::invalid(format!(
            "field lengths differ: {} vs {}",
            reference.len(),
            candidate.len()
        )));
    }
    nmse_slices(reference.x().iter().chain(reference.y()), candidate.x().iter().chain(candidate.y()))
}

pub fn nmse_symbols(reference: &DualPolSymbols, candidate: &DualPolSymbols) -> Result<f64> {
    reference.check_aligned(candidate)?;
    nmse_slices(reference.iter(), candidate.iter())
}

/// Effective SNR in dB: `10·log10(P_s / E|rx−tx|²)` with `P_s` the mean
/// transmitted symbol power.
pub fn esnr(rx: &DualPolSymbols, tx: &DualPolSymbols) -> Result<Metric> {
    rx.check_aligned(tx)?;
    if tx.is_empty() {
        return Err(Error::invalid("no symbols"));
    }
    let ps = tx.mean_power();
    let err: f64 = rx.iter().zip(tx.iter()).map(|(r, t)| (r - t).norm_sqr()).sum::<f64>() / (2 * tx.len()) as f64;
    if err == 0.0 {
        return Ok(Metric::PosUnbounded);
    }
    Ok(Metric::Finite(10.0 * (ps / err).log10()))
}

/// Inverse of the standard normal CDF by Acklam's rational approximation
/// (relative error about 1e-9).
fn norm_inv_approx(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] =
        [7.784_695_709_041_462e-3, 3.224_671_290_700_398e-1, 2.445_134_137_142_996, 3.754_408_661_907_416];
    const P_LOW: f64 = 0.02425;

    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    }
}

/// Inverse complementary error function on `(0, 2)`, refined by two Newton
/// steps on `erfc`.
pub fn erfc_inv(y: f64) -> f64 {
    if y <= 0.0 {
        return f64::INFINITY;
    }
    if y >= 2.0 {
        return f64::NEG_INFINITY;
    }
    if y == 1.0 {
        return 0.0;
    }
    let mut x = -norm_inv_approx(y / 2.0) * std::f64::consts::FRAC_1_SQRT_2;
    let two_over_sqrt_pi = std::f64::consts::FRAC_2_SQRT_PI;
    for _ in 0..2 {
        let f = libm::erfc(x) - y;
        let df = -two_over_sqrt_pi * (-x * x).exp();
        x -= f / df;
    }
    x
}

/// Q-factor in dB: `20·log10(√2·erfc⁻¹(2·BER))`.
pub fn q_from_ber(ber: f64) -> Metric {
    if ber <= 0.0 {
        return Metric::PosUnbounded;
    }
    if ber >= 0.5 {
        return Metric::NegUnbounded;
    }
    Metric::Finite(20.0 * (std::f64::consts::SQRT_2 * erfc_inv(2.0 * ber)).log10())
}

/// Gray-coded 16-QAM BER under additive circular Gaussian noise at the
/// given effective SNR (unit mean symbol energy).
pub fn qam16_gaussian_ber(esnr_db: Metric) -> f64 {
    let snr = match esnr_db {
        Metric::PosUnbounded => return 0.0,
        Metric::NegUnbounded => return 0.5,
        Metric::Finite(v) => 10f64.powf(v / 10.0),
    };
    // Half level spacing 1/√10 against a per-axis noise deviation of sqrt(1/(2·snr)).
    let r = (snr / 5.0).sqrt();
    let tail = |k: f64| 0.5 * libm::erfc(k * r / std::f64::consts::SQRT_2);
    (3.0 * tail(1.0) + 2.0 * tail(3.0) - tail(5.0)) / 4.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerQ {
    pub ber: f64,
    pub q_db: Metric,
    pub n_bits: usize,
    pub n_errors: usize,
}

pub fn ber_q(bits_rx: &[u8], bits_tx: &[u8]) -> Result<BerQ> {
    if bits_rx.len() != bits_tx.len() {
        return Err(Error::invalid(format!(
            "bit streams differ in length: {} vs {}",
            bits_rx.len(),
            bits_tx.len()
        )));
    }
    if bits_tx.is_empty() {
        return Err(Error::invalid("no bits to compare"));
    }
    let n_errors = bits_rx.iter().zip(bits_tx).filter(|(a, b)| a != b).count();
    let ber = n_errors as f64 / bits_tx.len() as f64;
    Ok(BerQ { ber, q_db: q_from_ber(ber), n_bits: bits_tx.len(), n_errors })
}

/// `Q_ref − Q_candidate` in dB.
pub fn q_error(q_reference_db: Metric, q_candidate_db: Metric) -> Result<f64> {
    match (q_reference_db, q_candidate_db) {
        (Metric::Finite(a), Metric::Finite(b)) => Ok(a - b),
        (a, b) => Err(Error::Numeric(format!("Q-error needs finite Q values, got {a} and {b}"))),
    }
}

/// One comparison point. Key names are part of the report format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub nmse: Option<f64>,
    pub esnr_db: Metric,
    pub ber: f64,
    pub q_db: Metric,
    pub q_error_db: Option<f64>,
    pub n_data: usize,
    pub n_bits: usize,
    pub n_errors: usize,
    pub signal_power_w: f64,
    /// Standard deviation of the loaded noise per complex symbol, if any.
    pub loading_sigma: Option<f64>,
}
