//! Symmetric split-step Fourier propagation of the Manakov equation, with
//! EDFA gain and ASE between spans.
//!
//! Sign convention: a spectrum component evolves as
//! `exp((jβ2ω²/2 − α/2)·z)` and the nonlinear operator rotates by
//! `+j(8/9)γ(|Ax|²+|Ay|²)h_eff`.

use std::collections::BTreeSet;

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::DualPolField;
use crate::params::{EdfaParams, FiberSpanParams, LinkConfig, SpanConfig};
use crate::prng::PrngSpec;
use crate::spectral::{angular_frequencies, Spectral};
use crate::units::{db_to_lin, PLANCK, PS2_TO_S2, SPEED_OF_LIGHT};

/// Polarization-averaged nonlinearity factor of the Manakov equation.
pub const MANAKOV_FACTOR: f64 = 8.0 / 9.0;

/// Hard cap on the number of steps in one span.
pub const MAX_STEPS_PER_SPAN: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepPolicy {
    MaxNonlinearPhase(f64),
    Uniform(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsfmPlan {
    pub step_lengths_km: Vec<f64>,
    pub policy: StepPolicy,
}

impl SsfmPlan {
    pub fn num_steps(&self) -> usize {
        self.step_lengths_km.len()
    }

    pub fn total_length_km(&self) -> f64 {
        self.step_lengths_km.iter().sum()
    }

    pub fn uniform(span_length_km: f64, n_steps: usize) -> Result<Self> {
        if n_steps == 0 || !(span_length_km > 0.0) {
            return Err(Error::invalid("uniform plan needs a positive length and step count"));
        }
        Ok(Self {
            step_lengths_km: vec![span_length_km / n_steps as f64; n_steps],
            policy: StepPolicy::Uniform(n_steps),
        })
    }
}

/// Plan steps so that `(8/9)·γ·P(z)·h ≤ φ_max` with the envelope
/// `P(z) = P0·exp(−αz)` evaluated at the start of each step. The last step
/// is truncated to end exactly at the span length.
pub fn plan_steps(params: &FiberSpanParams, peak_power_w: f64) -> Result<SsfmPlan> {
    params.validate()?;
    if !(peak_power_w.is_finite() && peak_power_w > 0.0) {
        return Err(Error::invalid("planning power must be positive"));
    }
    let phi = params.max_nonlinear_phase_rad;
    let policy = StepPolicy::MaxNonlinearPhase(phi);
    let l = params.span_length_km;
    if params.gamma_per_w_km == 0.0 {
        return Ok(SsfmPlan { step_lengths_km: vec![l], policy });
    }
    let alpha = params.alpha_linear();
    let k = MANAKOV_FACTOR * params.gamma_per_w_km * peak_power_w;
    let mut steps = Vec::new();
    let mut z = 0.0;
    loop {
        let h = phi / (k * (-alpha * z).exp());
        if z + h >= l * (1.0 - 1e-12) {
            steps.push(l - z);
            break;
        }
        steps.push(h);
        z += h;
        if steps.len() >= MAX_STEPS_PER_SPAN {
            return Err(Error::Numeric(format!(
                "step plan exceeds {MAX_STEPS_PER_SPAN} steps; launch power or gamma too large"
            )));
        }
    }
    Ok(SsfmPlan { step_lengths_km: steps, policy })
}

/// Effective nonlinear length of a step, km.
pub fn effective_length_km(alpha_linear: f64, h_km: f64) -> f64 {
    if alpha_linear == 0.0 {
        h_km
    } else {
        -(-alpha_linear * h_km).exp_m1() / alpha_linear
    }
}

/// Frequency-domain engine for one fiber type and frame geometry.
pub(crate) struct FiberEngine {
    spectral: Spectral,
    omega2: Vec<f64>,
    half_beta2: f64,
    alpha: f64,
    gamma: f64,
}

/// Statistics of one fiber pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub steps: usize,
    /// Largest per-sample nonlinear phase applied in any step, rad.
    pub max_nonlinear_phase_rad: f64,
}

impl FiberEngine {
    pub(crate) fn new(n: usize, sample_rate_hz: f64, wavelength_m: f64, fiber: &FiberSpanParams) -> Result<Self> {
        let beta2 = fiber.beta2_ps2_per_km(wavelength_m)? * PS2_TO_S2;
        let omega2 = angular_frequencies(n, sample_rate_hz).into_iter().map(|w| w * w).collect();
        Ok(Self {
            spectral: Spectral::new(n),
            omega2,
            half_beta2: beta2 / 2.0,
            alpha: fiber.alpha_linear(),
            gamma: fiber.gamma_per_w_km,
        })
    }

    /// Multiply a spectrum by the linear operator over `h` km (negative `h`
    /// runs it backwards).
    fn linear_spectrum(&self, buf: &mut [Complex64], h: f64) {
        if h == 0.0 {
            return;
        }
        let gain = (-self.alpha * h / 2.0).exp();
        let b = self.half_beta2 * h;
        for (c, &w2) in buf.iter_mut().zip(&self.omega2) {
            *c *= Complex64::from_polar(gain, b * w2);
        }
    }

    pub(crate) fn linear(&mut self, x: &mut [Complex64], y: &mut [Complex64], h: f64) {
        for buf in [x, y] {
            self.spectral.forward(buf);
            self.linear_spectrum(buf, h);
            self.spectral.inverse(buf);
        }
    }

    /// Rotate both polarizations by `coef·(|Ax|²+|Ay|²)`; returns the largest
    /// applied phase magnitude, or `None` on a non-finite sample.
    fn nonlinear(x: &mut [Complex64], y: &mut [Complex64], coef: f64) -> Option<f64> {
        let mut max_p: f64 = 0.0;
        for (a, b) in x.iter_mut().zip(y.iter_mut()) {
            let p = a.norm_sqr() + b.norm_sqr();
            if !p.is_finite() {
                return None;
            }
            max_p = max_p.max(p);
            let r = Complex64::from_polar(1.0, coef * p);
            *a *= r;
            *b *= r;
        }
        Some(max_p * coef.abs())
    }

    fn coef(&self, h: f64) -> f64 {
        MANAKOV_FACTOR * self.gamma * effective_length_km(self.alpha, h)
    }

    /// Run the symmetric scheme over `steps`. With `inverse` set, apply the
    /// exact inverse: steps reversed, every operator undone.
    pub(crate) fn run(
        &mut self,
        x: &mut [Complex64],
        y: &mut [Complex64],
        steps: &[f64],
        inverse: bool,
        span: usize,
    ) -> Result<StepStats> {
        let sign = if inverse { -1.0 } else { 1.0 };
        if self.gamma == 0.0 {
            let total: f64 = steps.iter().sum();
            self.linear(x, y, sign * total);
            return Ok(StepStats { steps: steps.len(), max_nonlinear_phase_rad: 0.0 });
        }
        let ordered: Vec<f64> = if inverse { steps.iter().rev().copied().collect() } else { steps.to_vec() };
        let mut stats = StepStats { steps: ordered.len(), max_nonlinear_phase_rad: 0.0 };
        self.spectral.forward(x);
        self.spectral.forward(y);
        let mut pending = ordered[0] / 2.0;
        for (i, &h) in ordered.iter().enumerate() {
            self.linear_spectrum(x, sign * pending);
            self.linear_spectrum(y, sign * pending);
            self.spectral.inverse(x);
            self.spectral.inverse(y);
            let phase = Self::nonlinear(x, y, sign * self.coef(h))
                .ok_or(Error::NonFinite { span, step: i + 1 })?;
            stats.max_nonlinear_phase_rad = stats.max_nonlinear_phase_rad.max(phase);
            self.spectral.forward(x);
            self.spectral.forward(y);
            pending = h / 2.0 + ordered.get(i + 1).map_or(0.0, |n| n / 2.0);
        }
        self.linear_spectrum(x, sign * pending);
        self.linear_spectrum(y, sign * pending);
        self.spectral.inverse(x);
        self.spectral.inverse(y);
        if x.iter().chain(y.iter()).any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite { span, step: ordered.len() });
        }
        Ok(stats)
    }
}

/// Apply the linear operator (loss and dispersion) over `h_km`.
pub fn linear_half_step(field: &DualPolField, params: &FiberSpanParams, h_km: f64) -> Result<DualPolField> {
    if !(h_km >= 0.0) {
        return Err(Error::invalid("step length must be nonnegative"));
    }
    let mut e = FiberEngine::new(field.len(), field.sample_rate_hz(), field.center_wavelength_m(), params)?;
    let (mut x, mut y) = (field.x().to_vec(), field.y().to_vec());
    e.linear(&mut x, &mut y, h_km);
    Ok(field.with_samples(x, y))
}

/// Apply the nonlinear operator over `h_km` using the step's effective length.
pub fn nonlinear_full_step(field: &DualPolField, params: &FiberSpanParams, h_km: f64) -> Result<DualPolField> {
    if !(h_km >= 0.0) {
        return Err(Error::invalid("step length must be nonnegative"));
    }
    let coef = MANAKOV_FACTOR * params.gamma_per_w_km * effective_length_km(params.alpha_linear(), h_km);
    let (mut x, mut y) = (field.x().to_vec(), field.y().to_vec());
    FiberEngine::nonlinear(&mut x, &mut y, coef).ok_or(Error::NonFinite { span: 0, step: 1 })?;
    Ok(field.with_samples(x, y))
}

/// Per-sample complex ASE variance on one polarization, W:
/// `(G−1)·(NF/2)·hν·F_s`.
pub fn ase_variance_w(gain_db: f64, noise_figure_db: f64, wavelength_m: f64, sample_rate_hz: f64) -> f64 {
    let g = db_to_lin(gain_db);
    let n_sp = db_to_lin(noise_figure_db) / 2.0;
    let nu = SPEED_OF_LIGHT / wavelength_m;
    (g - 1.0) * n_sp * PLANCK * nu * sample_rate_hz
}

/// Unit-variance circular complex Gaussian samples for both polarizations.
pub fn unit_complex_noise(prng: PrngSpec, n: usize) -> (Vec<Complex64>, Vec<Complex64>) {
    let mut rng = prng.stream();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut draw = |_| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        Complex64::new(re * s, im * s)
    };
    let x = (0..n).map(&mut draw).collect();
    let y = (0..n).map(&mut draw).collect();
    (x, y)
}

/// The PRNG stream an amplifier draws its ASE from.
pub fn ase_prng(edfa: &EdfaParams) -> PrngSpec {
    PrngSpec::philox(edfa.ase_seed, 0)
}

/// Amplify by the EDFA gain and add ASE, unless noiseless or disabled.
pub fn edfa_amplify(field: &DualPolField, edfa: &EdfaParams, fiber: &FiberSpanParams) -> Result<DualPolField> {
    let gain_db = edfa.gain_db_for(fiber);
    if !(gain_db >= 0.0) {
        return Err(Error::invalid(format!("EDFA gain {gain_db} dB is negative")));
    }
    let a = db_to_lin(gain_db).sqrt();
    let (mut x, mut y): (Vec<_>, Vec<_>) =
        (field.x().iter().map(|c| c * a).collect(), field.y().iter().map(|c| c * a).collect());
    if edfa.adds_noise() {
        let sigma = ase_variance_w(gain_db, edfa.noise_figure_db, field.center_wavelength_m(), field.sample_rate_hz())
            .sqrt();
        let (nx, ny) = unit_complex_noise(ase_prng(edfa), field.len());
        x.iter_mut().zip(nx).for_each(|(c, n)| *c += n * sigma);
        y.iter_mut().zip(ny).for_each(|(c, n)| *c += n * sigma);
    }
    Ok(field.with_samples(x, y))
}

/// Field captured at a span boundary.
#[derive(Debug, Clone)]
pub struct SpanTapRecord {
    /// 1-based span number.
    pub span_index: usize,
    pub field_before_edfa: DualPolField,
    pub field_after_edfa: DualPolField,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpanDiagnostics {
    pub span_index: usize,
    pub steps: usize,
    pub max_nonlinear_phase_rad: f64,
    pub edfa_gain_db: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PropagationDiagnostics {
    pub spans: Vec<SpanDiagnostics>,
}

impl PropagationDiagnostics {
    pub fn total_steps(&self) -> usize {
        self.spans.iter().map(|s| s.steps).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub struct SpanOutput {
    pub field: DualPolField,
    pub tap: Option<SpanTapRecord>,
    pub diagnostics: SpanDiagnostics,
}

/// Propagate through the fiber of one span without the amplifier. The result
/// sits at `position + L_S`.
pub fn propagate_fiber(
    field: &DualPolField,
    fiber: &FiberSpanParams,
    plan: &SsfmPlan,
    span_index: usize,
) -> Result<(DualPolField, StepStats)> {
    let mut e = FiberEngine::new(field.len(), field.sample_rate_hz(), field.center_wavelength_m(), fiber)?;
    let (mut x, mut y) = (field.x().to_vec(), field.y().to_vec());
    let stats = e.run(&mut x, &mut y, &plan.step_lengths_km, false, span_index)?;
    let pos = field.position_km() + fiber.span_length_km;
    Ok((field.with_samples(x, y).at_position(pos), stats))
}

/// One span: SSFM over the fiber, then EDFA. `span_index` is 1-based and
/// only used for tap records and error reports.
pub fn propagate_span(
    field: &DualPolField,
    span: &SpanConfig,
    plan_power_w: f64,
    span_index: usize,
    tap: bool,
) -> Result<SpanOutput> {
    let plan = plan_steps(&span.fiber, plan_power_w)?;
    let (before, stats) = propagate_fiber(field, &span.fiber, &plan, span_index)?;
    let after = edfa_amplify(&before, &span.edfa, &span.fiber)?;
    let diagnostics = SpanDiagnostics {
        span_index,
        steps: stats.steps,
        max_nonlinear_phase_rad: stats.max_nonlinear_phase_rad,
        edfa_gain_db: span.edfa.gain_db_for(&span.fiber),
    };
    let tap = tap.then(|| SpanTapRecord {
        span_index,
        field_before_edfa: before,
        field_after_edfa: after.clone(),
    });
    Ok(SpanOutput { field: after, tap, diagnostics })
}

pub struct LinkOutput {
    pub field: DualPolField,
    pub taps: Vec<SpanTapRecord>,
    pub diagnostics: PropagationDiagnostics,
}

/// Propagate through every span in order, calling `visit` after each span.
pub fn propagate_link_with(
    field: &DualPolField,
    link: &LinkConfig,
    mut visit: impl FnMut(&SpanTapRecord) -> Result<()>,
) -> Result<(DualPolField, PropagationDiagnostics)> {
    link.validate()?;
    let mut current = field.clone();
    let mut diag = PropagationDiagnostics::default();
    for (i, span) in link.spans.iter().enumerate() {
        let out = propagate_span(&current, span, link.plan_power_w, i + 1, true)?;
        let tap = out.tap.expect("tap requested");
        visit(&tap)?;
        diag.spans.push(out.diagnostics);
        current = out.field;
    }
    Ok((current, diag))
}

/// Propagate through the link and keep the span taps listed in `taps`
/// (1-based span numbers).
pub fn propagate_link(field: &DualPolField, link: &LinkConfig, taps: &BTreeSet<usize>) -> Result<LinkOutput> {
    if let Some(&bad) = taps.iter().find(|&&t| t == 0 || t > link.num_spans()) {
        return Err(Error::LinkMismatch(format!(
            "tap {bad} outside spans 1..={}",
            link.num_spans()
        )));
    }
    link.validate()?;
    let mut current = field.clone();
    let mut diag = PropagationDiagnostics::default();
    let mut records = Vec::with_capacity(taps.len());
    for (i, span) in link.spans.iter().enumerate() {
        let out = propagate_span(&current, span, link.plan_power_w, i + 1, taps.contains(&(i + 1)))?;
        records.extend(out.tap);
        diag.spans.push(out.diagnostics);
        current = out.field;
    }
    Ok(LinkOutput { field: current, taps: records, diagnostics: diag })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::nmse_fields;
    use crate::params::derive_beta2;

    fn lossless(gamma: f64, beta2: Option<f64>) -> FiberSpanParams {
        FiberSpanParams {
            attenuation_db_per_km: 0.0,
            beta2_ps2_per_km: beta2,
            gamma_per_w_km: gamma,
            ..FiberSpanParams::default()
        }
    }

    fn noise_field(n: usize, power: f64, seed: u64) -> DualPolField {
        let (x, y) = unit_complex_noise(PrngSpec::philox(seed, 9), n);
        let s = (power / 2.0).sqrt();
        DualPolField::new(x.iter().map(|c| c * s).collect(), y.iter().map(|c| c * s).collect(), 1e12).unwrap()
    }

    #[test]
    fn zero_gamma_gives_one_step() {
        let p = plan_steps(&lossless(0.0, None), 1e-2).unwrap();
        assert_eq!(p.step_lengths_km, vec![80.0]);
    }

    #[test]
    fn lossless_plan_is_uniform_closed_form() {
        let f = FiberSpanParams { attenuation_db_per_km: 0.0, ..Default::default() };
        let p = plan_steps(&f, 0.01).unwrap();
        let h = 0.005 / (8.0 / 9.0 * 1.3 * 0.01);
        for s in &p.step_lengths_km[..p.num_steps() - 1] {
            assert!((s - h).abs() < 1e-12 * h);
        }
        assert!(*p.step_lengths_km.last().unwrap() <= h);
        assert!((p.total_length_km() - 80.0).abs() < 1e-12 * 80.0);
    }

    #[test]
    fn doubling_power_halves_first_step_and_steps_grow() {
        let f = FiberSpanParams::default();
        let a = plan_steps(&f, 0.01).unwrap();
        let b = plan_steps(&f, 0.02).unwrap();
        assert!((a.step_lengths_km[0] - 2.0 * b.step_lengths_km[0]).abs() < 1e-12);
        let s = &a.step_lengths_km;
        assert!(s[..s.len() - 1].windows(2).all(|w| w[1] > w[0]));
        assert!((a.total_length_km() - 80.0).abs() < 1e-12 * 80.0);
        assert!(plan_steps(&f, 0.0).is_err());
    }

    #[test]
    fn effective_length_limits() {
        assert_eq!(effective_length_km(0.0, 3.0), 3.0);
        let a = crate::units::alpha_db_to_linear(0.2);
        assert!((effective_length_km(a, 1e6) - 1.0 / a).abs() < 1e-9);
    }

    #[test]
    fn zero_length_linear_step_is_identity() {
        let f = noise_field(256, 1e-3, 1);
        let g = linear_half_step(&f, &FiberSpanParams::default(), 0.0).unwrap();
        assert!(nmse_fields(&f, &g).unwrap() < 1e-28);
    }

    #[test]
    fn pure_loss_scales_power_by_span_loss() {
        let f = noise_field(512, 1e-3, 2);
        let fiber = FiberSpanParams { dispersion_ps_nm_km: 0.0, ..Default::default() };
        let g = linear_half_step(&f, &fiber, 80.0).unwrap();
        let ratio_db = 10.0 * (g.mean_power_w() / f.mean_power_w()).log10();
        assert!((ratio_db + 16.0).abs() < 1e-10, "{ratio_db}");
    }

    #[test]
    fn gaussian_pulse_disperses_analytically() {
        let n = 8192;
        let fs = 2e12;
        let t0 = 20e-12;
        let beta2 = derive_beta2(17.0, 1550e-9).unwrap();
        let z = 80.0;
        let time = |i: usize| (i as f64 - (n / 2) as f64) / fs;
        let x: Vec<Complex64> = (0..n).map(|i| Complex64::new((-time(i).powi(2) / (2.0 * t0 * t0)).exp(), 0.0)).collect();
        let f = DualPolField::new(x, vec![Complex64::default(); n], fs).unwrap();
        let fiber = lossless(1.3, Some(beta2));
        let g = linear_half_step(&f, &fiber, z).unwrap();
        let q = Complex64::new(t0 * t0, -beta2 * PS2_TO_S2 * z);
        let expected: Vec<Complex64> =
            (0..n).map(|i| t0 / q.sqrt() * (-time(i).powi(2) / (2.0 * q)).exp()).collect();
        let e = DualPolField::new(expected, vec![Complex64::default(); n], fs).unwrap();
        let err = nmse_fields(&e, &g).unwrap();
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn nonlinear_step_constant_power() {
        let n = 16;
        let p: f64 = 0.01;
        let x = vec![Complex64::new(p.sqrt(), 0.0); n];
        let f = DualPolField::new(x, vec![Complex64::default(); n], 1e12).unwrap();
        let g = nonlinear_full_step(&f, &lossless(1.3, None), 2.0).unwrap();
        let phi = 8.0 / 9.0 * 1.3 * p * 2.0;
        for c in g.x() {
            assert!((c.arg() - phi).abs() < 1e-14);
            assert!((c.norm() - p.sqrt()).abs() < 1e-15);
        }
        assert!(g.y().iter().all(|c| *c == Complex64::default()));
        let id = nonlinear_full_step(&f, &lossless(0.0, None), 2.0).unwrap();
        assert_eq!(id, f);
    }

    #[test]
    fn ase_variance_matches_formula() {
        let v = ase_variance_w(16.0, 5.0, 1550e-9, 1e12);
        assert!((v - 7.864_420_113_374_425e-6).abs() < 1e-12 * v);
    }

    #[test]
    fn edfa_identity_and_determinism() {
        let f = noise_field(128, 1e-3, 3);
        let fiber = FiberSpanParams::default();
        let id = EdfaParams { gain_db: Some(0.0), noiseless: true, ..Default::default() };
        assert_eq!(edfa_amplify(&f, &id, &fiber).unwrap(), f);
        let noisy = EdfaParams { ase_seed: 77, ..Default::default() };
        let a = edfa_amplify(&f, &noisy, &fiber).unwrap();
        let b = edfa_amplify(&f, &noisy, &fiber).unwrap();
        assert_eq!(a, b);
        let other = edfa_amplify(&f, &EdfaParams { ase_seed: 78, ..noisy }, &fiber).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn ase_power_statistics() {
        let f = DualPolField::zeros(1 << 16, 1e12).unwrap();
        let fiber = FiberSpanParams::default();
        let g = edfa_amplify(&f, &EdfaParams { gain_db: Some(16.0), ..Default::default() }, &fiber).unwrap();
        let per_pol = g.mean_power_w() / 2.0;
        let v = ase_variance_w(16.0, 5.0, 1550e-9, 1e12);
        assert!((per_pol / v - 1.0).abs() < 0.02, "{}", per_pol / v);
    }

    #[test]
    fn lossless_span_conserves_energy() {
        let f = noise_field(1024, 0.05, 4);
        let span = SpanConfig { fiber: lossless(1.3, None), edfa: EdfaParams::disabled() };
        let out = propagate_span(&f, &span, 0.05, 1, false).unwrap();
        assert!((out.field.energy() / f.energy() - 1.0).abs() < 1e-9);
        assert!(out.diagnostics.steps > 1);
        assert!(out.diagnostics.max_nonlinear_phase_rad > 0.0);
    }

    #[test]
    fn inverse_run_undoes_forward() {
        let f = noise_field(1024, 0.02, 5);
        let fiber = FiberSpanParams::default();
        let plan = plan_steps(&fiber, 0.02).unwrap();
        let mut e = FiberEngine::new(f.len(), f.sample_rate_hz(), f.center_wavelength_m(), &fiber).unwrap();
        let (mut x, mut y) = (f.x().to_vec(), f.y().to_vec());
        e.run(&mut x, &mut y, &plan.step_lengths_km, false, 1).unwrap();
        e.run(&mut x, &mut y, &plan.step_lengths_km, true, 1).unwrap();
        let g = f.with_samples(x, y);
        assert!(nmse_fields(&f, &g).unwrap() < 1e-20);
    }

    #[test]
    fn link_positions_and_taps() {
        let f = noise_field(256, 1e-3, 6);
        let link = LinkConfig::uniform(10, FiberSpanParams::default(), EdfaParams::noiseless(), 1e-3);
        let taps: BTreeSet<usize> = [1, 3, 5, 7, 9].into();
        let out = propagate_link(&f, &link, &taps).unwrap();
        assert_eq!(out.field.position_km(), 800.0);
        assert_eq!(out.taps.len(), 5);
        for t in &out.taps {
            assert_eq!(t.field_before_edfa.position_km(), 80.0 * t.span_index as f64);
            assert_eq!(t.field_after_edfa.position_km(), 80.0 * t.span_index as f64);
        }
        assert_eq!(out.diagnostics.spans.len(), 10);
        assert!(out.diagnostics.to_json().unwrap().contains("max_nonlinear_phase_rad"));
        let bad: BTreeSet<usize> = [11].into();
        assert!(propagate_link(&f, &link, &bad).is_err());
    }

    #[test]
    fn empty_link_is_identity() {
        let f = noise_field(64, 1e-3, 7);
        let link = LinkConfig::uniform(0, FiberSpanParams::default(), EdfaParams::default(), 1e-3);
        let out = propagate_link(&f, &link, &BTreeSet::new()).unwrap();
        assert_eq!(out.field, f);
    }

    #[test]
    fn overflow_reports_step() {
        let x = vec![Complex64::new(1e200, 0.0); 8];
        let f = DualPolField::new(x, vec![Complex64::default(); 8], 1e12).unwrap();
        let span = SpanConfig { fiber: lossless(1.3, None), edfa: EdfaParams::disabled() };
        match propagate_span(&f, &span, 1e-3, 2, false) {
            Err(Error::NonFinite { span, step }) => {
                assert_eq!(span, 2);
                assert_eq!(step, 1);
            }
            Err(e) => panic!("{e}"),
            Ok(_) => panic!("expected failure"),
        }
    }
}
