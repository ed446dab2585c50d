//! Physical constants and unit conversions.
//!
//! Fields are carried in sqrt(W), powers in W. dBm only appears at
//! configuration surfaces.

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Planck constant, J·s.
pub const PLANCK: f64 = 6.626_070_15e-34;

pub const DEFAULT_WAVELENGTH_M: f64 = 1550e-9;

pub fn dbm_to_w(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

pub fn w_to_dbm(w: f64) -> f64 {
    10.0 * (w / 1e-3).log10()
}

pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// dB/km to the linear field-power attenuation constant in 1/km.
pub fn alpha_db_to_linear(alpha_db_per_km: f64) -> f64 {
    alpha_db_per_km * std::f64::consts::LN_10 / 10.0
}

/// Convert ps²/km to s²/km.
pub const PS2_TO_S2: f64 = 1e-24;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dbm_round_trip() {
        assert!((dbm_to_w(0.0) - 1e-3).abs() < 1e-18);
        assert!((w_to_dbm(dbm_to_w(4.0)) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn alpha_conversion() {
        // 0.2 dB/km over 80 km is 16 dB of power loss.
        let a = alpha_db_to_linear(0.2);
        assert!((10.0 * (-a * 80.0).exp().log10() + 16.0).abs() < 1e-12);
    }
}
