//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion.
//! With `FIBERWAVE_ACCEPTANCE_STRICT` set, any failure gives a nonzero exit.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rustfft::FftPlanner;

use fiberwave::dataset::{window_length, WindowMode};
use fiberwave::harness::{evaluate, sweep_launch_power, CandidateModel, EvalOptions};
use fiberwave::metrics::{ber_q, nmse_fields, q_from_ber};
use fiberwave::params::{EdfaParams, FiberSpanParams, LinkConfig, SpanConfig, WdmConfig};
use fiberwave::prng::PrngSpec;
use fiberwave::rx::{
    hard_decide_qam16, load_noise_to_target_ber, multi_channel_dbp, recover_symbols, symbol_quality,
    Compensation, RxConfig,
};
use fiberwave::ssfm::{propagate_fiber, propagate_link, propagate_span, SsfmPlan};
use fiberwave::tx::{TxFrame, DEFAULT_FRAME_SYMBOLS};
use fiberwave::DualPolField;

const FRAME_SEED: u64 = 2024;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn five_channel_frame(symbols: usize, dbm: f64) -> TxFrame {
    TxFrame::generate(&WdmConfig::new(5, 50e9, dbm), symbols, PrngSpec::philox(FRAME_SEED, 0)).unwrap()
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// Independent transfer-function route: FFT, multiply by
/// `exp((jβ2ω²/2 − α/2)L)`, inverse FFT.
fn analytic_linear(field: &DualPolField, beta2_ps2_km: f64, alpha_per_km: f64, l_km: f64) -> DualPolField {
    let n = field.len();
    let fs = field.sample_rate_hz();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let apply = |s: &[Complex64]| {
        let mut buf = s.to_vec();
        fwd.process(&mut buf);
        for (k, c) in buf.iter_mut().enumerate() {
            let kk = if 2 * k >= n { k as f64 - n as f64 } else { k as f64 };
            let w = 2.0 * std::f64::consts::PI * kk * fs / n as f64;
            let phase = beta2_ps2_km * 1e-24 / 2.0 * w * w * l_km;
            *c *= Complex64::from_polar((-alpha_per_km * l_km / 2.0).exp(), phase) / n as f64;
        }
        inv.process(&mut buf);
        buf
    };
    DualPolField::with_metadata(apply(field.x()), apply(field.y()), fs, field.center_wavelength_m(), 0.0).unwrap()
}

fn acc1_linear_oracle() -> Outcome {
    let frame = five_channel_frame(DEFAULT_FRAME_SYMBOLS, 4.0);
    let fiber = FiberSpanParams { gamma_per_w_km: 0.0, ..Default::default() };
    let start = Instant::now();
    let plan = SsfmPlan { step_lengths_km: vec![80.0], policy: fiberwave::ssfm::StepPolicy::Uniform(1) };
    let (out, _) = propagate_fiber(&frame.field, &fiber, &plan, 1).unwrap();
    let elapsed = start.elapsed();
    let beta2 = fiber.beta2_ps2_per_km(1550e-9).unwrap();
    let expected = analytic_linear(&frame.field, beta2, fiber.alpha_linear(), 80.0);
    let err = nmse_fields(&expected, &out).unwrap();
    outcome(err < 1e-12 && secs(elapsed) < 5.0, format!("NMSE {err:.3e}, {:.2} s", secs(elapsed)))
}

fn acc2_nonlinear_oracle() -> Outcome {
    let frame = five_channel_frame(DEFAULT_FRAME_SYMBOLS, 4.0);
    let fiber = FiberSpanParams {
        attenuation_db_per_km: 0.0,
        beta2_ps2_per_km: Some(0.0),
        ..Default::default()
    };
    let span = SpanConfig { fiber, edfa: EdfaParams::disabled() };
    let p = frame.cfg.total_launch_power_w();
    let out = propagate_span(&frame.field, &span, p, 1, false).unwrap();
    let g = 8.0 / 9.0 * 1.3 * 80.0;
    let rotate = |a: &[Complex64], b: &[Complex64], which: usize| -> Vec<Complex64> {
        a.iter()
            .zip(b)
            .map(|(x, y)| {
                let r = Complex64::from_polar(1.0, g * (x.norm_sqr() + y.norm_sqr()));
                if which == 0 { x * r } else { y * r }
            })
            .collect()
    };
    let (x0, y0) = (frame.field.x(), frame.field.y());
    let expected = DualPolField::new(rotate(x0, y0, 0), rotate(x0, y0, 1), frame.field.sample_rate_hz()).unwrap();
    let err = nmse_fields(&expected, &out.field).unwrap();
    outcome(err < 1e-10, format!("NMSE {err:.3e} over {} steps", out.diagnostics.steps))
}

fn acc3_energy() -> Outcome {
    let frame = five_channel_frame(DEFAULT_FRAME_SYMBOLS, 4.0);
    let fiber = FiberSpanParams { attenuation_db_per_km: 0.0, ..Default::default() };
    let span = SpanConfig { fiber, edfa: EdfaParams::disabled() };
    let out = propagate_span(&frame.field, &span, frame.cfg.total_launch_power_w(), 1, false).unwrap();
    let drift = (out.field.energy() / frame.field.energy() - 1.0).abs();
    outcome(drift < 1e-9, format!("relative drift {drift:.3e}"))
}

fn acc4_dbp_inversion() -> Outcome {
    let frame = five_channel_frame(DEFAULT_FRAME_SYMBOLS, 4.0);
    let link = LinkConfig::uniform(
        10,
        FiberSpanParams::default(),
        EdfaParams::noiseless(),
        frame.cfg.total_launch_power_w(),
    );
    let start = Instant::now();
    let out = propagate_link(&frame.field, &link, &BTreeSet::new()).unwrap();
    let back = multi_channel_dbp(&out.field, &link).unwrap();
    let elapsed = start.elapsed();
    let err = nmse_fields(&frame.field, &back).unwrap();
    let k = frame.cfg.center_channel();
    let rx = recover_symbols(&out.field, &frame.cfg, &link, &frame.symbols[k], Compensation::Dbp, &RxConfig::default())
        .unwrap();
    let q = symbol_quality(&rx, &frame.symbols[k], &frame.bits[k].bits).unwrap();
    outcome(
        err < 1e-6 && q.ber_q.n_errors == 0 && secs(elapsed) < 600.0,
        format!(
            "NMSE {err:.3e}, BER {}, {} steps/direction, {:.1} s",
            q.ber_q.ber,
            out.diagnostics.total_steps(),
            secs(elapsed)
        ),
    )
}

fn acc5_convergence() -> Outcome {
    let frame = five_channel_frame(1280, 4.0);
    let p = frame.cfg.total_launch_power_w();
    let run = |phi: f64| {
        let fiber = FiberSpanParams { max_nonlinear_phase_rad: phi, ..Default::default() };
        let span = SpanConfig { fiber, edfa: EdfaParams::disabled() };
        propagate_span(&frame.field, &span, p, 1, false).unwrap().field
    };
    let phi = 0.005;
    let reference = run(phi / 8.0);
    let coarse = nmse_fields(&reference, &run(phi)).unwrap();
    let fine = nmse_fields(&reference, &run(phi / 2.0)).unwrap();
    let ratio = coarse / fine;
    outcome(
        (3.0..=5.0).contains(&ratio),
        format!("NMSE {coarse:.3e} -> {fine:.3e} when phi_max halves, ratio {ratio:.2}"),
    )
}

fn acc6_q_and_loading() -> Outcome {
    let q = q_from_ber(4e-2).as_f64();
    let q_ok = (q - 4.864_165_528_796_067).abs() <= 0.01;
    let frame = five_channel_frame(DEFAULT_FRAME_SYMBOLS, 4.0);
    let k = frame.cfg.center_channel();
    let link = LinkConfig::uniform(1, FiberSpanParams::default(), EdfaParams::default(), frame.cfg.total_launch_power_w());
    let out = propagate_link(&frame.field, &link, &BTreeSet::new()).unwrap();
    let rx = recover_symbols(&out.field, &frame.cfg, &link, &frame.symbols[k], Compensation::Cdc, &RxConfig::default())
        .unwrap();
    let (loaded, info) = load_noise_to_target_ber(&rx, &frame.bits[k].bits, 4e-2, PrngSpec::philox(7, 0)).unwrap();
    let ber = ber_q(&hard_decide_qam16(&loaded), &frame.bits[k].bits).unwrap().ber;
    let ber_ok = (ber - 0.04).abs() <= 2e-3;
    outcome(q_ok && ber_ok, format!("Q(4e-2) = {q:.6} dB, loaded BER {ber:.5} (sigma {:.4})", info.sigma))
}

fn acc7_back_to_back() -> Outcome {
    let frame = five_channel_frame(DEFAULT_FRAME_SYMBOLS, 4.0);
    let k = frame.cfg.center_channel();
    let link = LinkConfig::uniform(0, FiberSpanParams::default(), EdfaParams::default(), 1e-3);
    let rx = recover_symbols(&frame.field, &frame.cfg, &link, &frame.symbols[k], Compensation::Cdc, &RxConfig::default())
        .unwrap();
    let q = symbol_quality(&rx, &frame.symbols[k], &frame.bits[k].bits).unwrap();
    let esnr = q.esnr_db.as_f64();
    outcome(q.ber_q.n_errors == 0 && esnr > 40.0, format!("BER {}, ESNR {:.1} dB", q.ber_q.ber, esnr))
}

fn acc8_window_lengths() -> Outcome {
    let beta2 = FiberSpanParams::default().beta2_ps2_per_km(1550e-9).unwrap();
    let cases = [((5, 50e9), 165, 45), ((13, 50e9), 427, 117), ((5, 100e9), 601, 163)];
    let mut pass = true;
    let mut parts = Vec::new();
    for ((c, s), pure, fdd) in cases {
        let cfg = WdmConfig::new(c, s, 0.0);
        let p = window_length(&cfg, 80.0, 0.2, beta2, WindowMode::Pure).unwrap().window_length;
        let f = window_length(&cfg, 80.0, 0.2, beta2, WindowMode::Fdd).unwrap().window_length;
        pass &= p == pure && f == fdd;
        parts.push(format!("{c}ch {}G {p}/{f}", s / 1e9));
    }
    outcome(pass, parts.join(", "))
}

fn acc9_launch_power_sweep() -> Outcome {
    let cfg = WdmConfig::new(5, 50e9, 0.0);
    let link = LinkConfig::uniform(10, FiberSpanParams::default(), EdfaParams::default(), 1e-3);
    let powers: Vec<f64> = (-2..=8).map(f64::from).collect();
    let start = Instant::now();
    let sweep = sweep_launch_power(&link, &cfg, &powers, PrngSpec::philox(FRAME_SEED, 0), &EvalOptions::default())
        .unwrap();
    let elapsed = secs(start.elapsed());
    let curve: Vec<String> = sweep.points.iter().map(|p| format!("{:.2}", p.q_db.as_f64())).collect();
    let pass = sweep.unimodal && (sweep.optimum_dbm - 1.5).abs() <= 1.0 && elapsed < 3600.0;
    outcome(
        pass,
        format!(
            "optimum {:.2} dBm (grid {:.1}), unimodal {}, {} km assumed, Q [{}] dB, {:.0} s",
            sweep.optimum_dbm,
            sweep.optimum_grid_dbm,
            sweep.unimodal,
            sweep.distance_km,
            curve.join(" "),
            elapsed
        ),
    )
}

fn acc10_harness_self_test() -> Outcome {
    let cfg = WdmConfig::new(5, 50e9, 4.0);
    let link = LinkConfig::uniform(10, FiberSpanParams::default(), EdfaParams::default(), cfg.total_launch_power_w());
    let distances = [2, 4, 6, 8, 10];
    let prng = PrngSpec::philox(FRAME_SEED, 0);
    let opts = EvalOptions::default();
    let own = evaluate(&link, &CandidateModel::reference(), &cfg, &distances, prng, &opts).unwrap();
    let self_zero = own
        .points
        .iter()
        .all(|p| p.nmse == 0.0 && p.linear.q_error_db == 0.0 && p.nonlinear.q_error_db == 0.0);
    let lin = evaluate(&link, &CandidateModel::IdentityPlusCdc, &cfg, &distances, prng, &opts).unwrap();
    let errs: Vec<f64> = lin.points.iter().map(|p| p.nonlinear.q_error_db).collect();
    let increasing = errs.windows(2).all(|w| w[1] > w[0]);
    let positive = errs.iter().all(|&e| e > 0.0);
    let shown: Vec<String> = errs.iter().map(|e| format!("{e:.2}")).collect();
    outcome(
        self_zero && positive && increasing,
        format!(
            "self-test zero {self_zero}; linear-channel Q-error after DBP at spans {distances:?}: [{}] dB",
            shown.join(" ")
        ),
    )
}

fn main() {
    let checks: Vec<(&str, fn() -> Outcome)> = vec![
        ("ACC1 linear oracle", acc1_linear_oracle),
        ("ACC2 nonlinear oracle", acc2_nonlinear_oracle),
        ("ACC3 energy conservation", acc3_energy),
        ("ACC4 DBP inversion", acc4_dbp_inversion),
        ("ACC5 convergence order", acc5_convergence),
        ("ACC6 Q at 4e-2 and noise loading", acc6_q_and_loading),
        ("ACC7 back-to-back", acc7_back_to_back),
        ("ACC8 window lengths", acc8_window_lengths),
        ("ACC9 launch-power sweep", acc9_launch_power_sweep),
        ("ACC10 harness self-test", acc10_harness_self_test),
    ];
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let (mut run, mut failed) = (0, 0);
    for (name, check) in checks {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        run += 1;
        let start = Instant::now();
        let r = check();
        let tag = if r.pass { "PASS" } else { "FAIL" };
        println!("{tag} {name}: {} [{:.1} s]", r.detail, secs(start.elapsed()));
        if !r.pass {
            failed += 1;
        }
    }
    println!("{} of {run} acceptance criteria passed", run - failed);
    if failed > 0 && std::env::var_os("FIBERWAVE_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
