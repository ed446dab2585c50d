//! DSP-assisted evaluation of span-level channel models against the SSFM
//! reference, plus the sweep, robustness and timing drivers.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::DualPolField;
use crate::metrics::{ber_q, nmse_fields, q_error, q_from_ber, qam16_gaussian_ber, BerQ, Metric, MetricsReport};
use crate::params::{LinkConfig, WdmConfig};
use crate::prng::{mix_seed, PrngAlgorithm, PrngSpec};
use crate::rx::{
    add_loading_noise, demux_cut, hard_decide_qam16, load_noise_to_target_ber, loading_noise, recover_symbols,
    symbol_quality, Compensation, RxConfig,
};
use crate::ssfm::{plan_steps, propagate_link_with, propagate_span};
use crate::symbols::RxSymbols;
use crate::tx::{TxFrame, DEFAULT_FRAME_SYMBOLS};
use crate::wfld::{read_field, write_field, write_manifest, FieldManifest};

/// Distance assumed when a sweep does not state one: ten 80 km spans.
pub const ASSUMED_SWEEP_SPANS: usize = 10;

/// Offset between the optimum and the test launch power.
pub const TEST_POWER_OFFSET_DB: f64 = 2.5;

const LOADING_SEED_TAG: u64 = 0x6c6f_6164;

/// A span-level field provider under test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CandidateModel {
    /// Fields written by an external model into `run_dir`, named
    /// `span{n}_seed{s}.wfld` and listed in `run_dir/index.json`.
    ExternalWaveform { run_dir: PathBuf },
    /// The SSFM with scaled γ and β2. Scales of 1 reproduce the reference.
    PerturbedSsfm { gamma_scale: f64, beta2_scale: f64 },
    /// Linear-only channel: dispersion, loss and the same ASE, no Kerr effect.
    IdentityPlusCdc,
}

impl CandidateModel {
    pub fn reference() -> Self {
        CandidateModel::PerturbedSsfm { gamma_scale: 1.0, beta2_scale: 1.0 }
    }

    pub fn description(&self) -> String {
        match self {
            CandidateModel::ExternalWaveform { run_dir } => format!("external waveforms in {}", run_dir.display()),
            CandidateModel::PerturbedSsfm { gamma_scale, beta2_scale } => {
                format!("SSFM with gamma x{gamma_scale}, beta2 x{beta2_scale}")
            }
            CandidateModel::IdentityPlusCdc => "linear channel without nonlinearity".into(),
        }
    }

    /// Link the candidate simulates, or `None` for external waveforms.
    fn simulated_link(&self, link: &LinkConfig, wavelength_m: f64) -> Result<Option<LinkConfig>> {
        let mut out = link.clone();
        match *self {
            CandidateModel::ExternalWaveform { .. } => return Ok(None),
            CandidateModel::PerturbedSsfm { gamma_scale, beta2_scale } => {
                if !(gamma_scale.is_finite() && gamma_scale >= 0.0 && beta2_scale.is_finite()) {
                    return Err(Error::invalid("perturbation scales must be finite, gamma scale nonnegative"));
                }
                for s in &mut out.spans {
                    s.fiber.gamma_per_w_km *= gamma_scale;
                    s.fiber.beta2_ps2_per_km = Some(s.fiber.beta2_ps2_per_km(wavelength_m)? * beta2_scale);
                }
            }
            CandidateModel::IdentityPlusCdc => {
                for s in &mut out.spans {
                    s.fiber.gamma_per_w_km = 0.0;
                }
            }
        }
        Ok(Some(out))
    }
}

/// Entry of an external run's `index.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaveformIndexEntry {
    pub span: usize,
    pub seed: u64,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaveformIndex {
    pub run_id: String,
    pub files: Vec<WaveformIndexEntry>,
}

pub const WAVEFORM_INDEX: &str = "index.json";

pub fn waveform_file_name(span: usize, seed: u64) -> String {
    format!("span{span}_seed{seed}.wfld")
}

/// Write cascaded fields as an external run `root/run_id/` with its index.
pub fn export_waveforms(
    root: impl AsRef<Path>,
    run_id: &str,
    seed: u64,
    fields: &[(usize, DualPolField)],
    manifest: &FieldManifest,
) -> Result<PathBuf> {
    let dir = root.as_ref().join(run_id);
    fs::create_dir_all(&dir).map_err(|e| Error::file(&dir, e))?;
    let mut files = Vec::with_capacity(fields.len());
    for (span, field) in fields {
        let name = waveform_file_name(*span, seed);
        let path = dir.join(&name);
        write_field(field, &path)?;
        write_manifest(&FieldManifest { span_index: Some(*span), ..manifest.clone() }, &path)?;
        files.push(WaveformIndexEntry { span: *span, seed, file: name });
    }
    let index = WaveformIndex { run_id: run_id.to_owned(), files };
    let path = dir.join(WAVEFORM_INDEX);
    fs::write(&path, serde_json::to_string_pretty(&index)?).map_err(|e| Error::file(&path, e))?;
    Ok(dir)
}

fn external_path(run_dir: &Path, span: usize, seed: u64) -> Result<PathBuf> {
    let index_path = run_dir.join(WAVEFORM_INDEX);
    if !index_path.exists() {
        return Ok(run_dir.join(waveform_file_name(span, seed)));
    }
    let text = fs::read_to_string(&index_path).map_err(|e| Error::file(&index_path, e))?;
    let index: WaveformIndex = serde_json::from_str(&text)?;
    index
        .files
        .iter()
        .find(|e| e.span == span && e.seed == seed)
        .map(|e| run_dir.join(&e.file))
        .ok_or_else(|| Error::LinkMismatch(format!("{} lists no span {span} for seed {seed}", index_path.display())))
}

fn check_metadata(reference: &DualPolField, candidate: &DualPolField, what: &str) -> Result<()> {
    let same_grid = reference.len() == candidate.len()
        && reference.sample_rate_hz() == candidate.sample_rate_hz()
        && reference.center_wavelength_m() == candidate.center_wavelength_m();
    if !same_grid || (reference.position_km() - candidate.position_km()).abs() > 1e-6 {
        return Err(Error::LinkMismatch(format!(
            "{what}: candidate has {} samples at {} Hz, {} m, {} km; reference {} samples at {} Hz, {} m, {} km",
            candidate.len(),
            candidate.sample_rate_hz(),
            candidate.center_wavelength_m(),
            candidate.position_km(),
            reference.len(),
            reference.sample_rate_hz(),
            reference.center_wavelength_m(),
            reference.position_km()
        )));
    }
    Ok(())
}

/// Output of `link` after each span listed in `distances` (1-based, strictly
/// increasing).
pub fn cascade(field: &DualPolField, link: &LinkConfig, distances: &[usize]) -> Result<Vec<DualPolField>> {
    check_distances(distances, link.num_spans())?;
    let Some(&last) = distances.last() else { return Ok(Vec::new()) };
    let mut out = Vec::with_capacity(distances.len());
    propagate_link_with(field, &link.truncated(last)?, |tap| {
        if distances.contains(&tap.span_index) {
            out.push(tap.field_after_edfa.clone());
        }
        Ok(())
    })?;
    Ok(out)
}

fn check_distances(distances: &[usize], num_spans: usize) -> Result<()> {
    if distances.is_empty() {
        return Err(Error::invalid("at least one distance is required"));
    }
    if distances.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("distances must be strictly increasing"));
    }
    if distances[0] == 0 || *distances.last().expect("nonempty") > num_spans {
        return Err(Error::LinkMismatch(format!("distances must lie in 1..={num_spans} spans")));
    }
    Ok(())
}

/// Candidate fields at each distance, sharing the reference's ASE seeds.
pub fn candidate_fields(
    candidate: &CandidateModel,
    link: &LinkConfig,
    frame: &TxFrame,
    seed: u64,
    distances: &[usize],
) -> Result<Vec<DualPolField>> {
    match candidate.simulated_link(link, frame.field.center_wavelength_m())? {
        Some(l) => cascade(&frame.field, &l, distances),
        None => {
            let CandidateModel::ExternalWaveform { run_dir } = candidate else { unreachable!() };
            check_distances(distances, link.num_spans())?;
            distances.iter().map(|&d| read_field(external_path(run_dir, d, seed)?)).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalOptions {
    pub num_symbols: usize,
    pub rx: RxConfig,
    /// Keep received constellations in the report.
    #[serde(default)]
    pub constellations: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { num_symbols: DEFAULT_FRAME_SYMBOLS, rx: RxConfig::default(), constellations: false }
    }
}

/// Reference and candidate metrics after one receiver variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageMetrics {
    pub reference: MetricsReport,
    pub candidate: MetricsReport,
    pub q_error_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub span: usize,
    pub distance_km: f64,
    /// Waveform NMSE on the channel under test.
    pub nmse: f64,
    pub linear: StageMetrics,
    pub nonlinear: StageMetrics,
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    pub span: usize,
    pub stage: String,
    pub source: String,
    pub symbols: RxSymbols,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub candidate: CandidateModel,
    pub description: String,
    pub wdm: WdmConfig,
    pub link: LinkConfig,
    pub prng: PrngSpec,
    pub options: EvalOptions,
    pub points: Vec<EvalPoint>,
    #[serde(skip)]
    pub propagation_seconds: f64,
    #[serde(skip)]
    pub total_seconds: f64,
    #[serde(skip)]
    pub constellations: Vec<Constellation>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `distance,nmse,q_error_linear,q_error_nonlinear` with distance in km.
    pub fn curves_csv(&self) -> String {
        let mut s = String::from("span,distance_km,nmse,q_error_linear,q_error_nonlinear\n");
        for p in &self.points {
            s.push_str(&format!(
                "{},{},{:e},{},{}\n",
                p.span, p.distance_km, p.nmse, p.linear.q_error_db, p.nonlinear.q_error_db
            ));
        }
        s
    }

    /// Wall-clock timings, kept apart from the report so reports of
    /// identical runs are byte-identical.
    pub fn timings_json(&self) -> Result<String> {
        let per_point: Vec<(usize, f64)> = self.points.iter().map(|p| (p.span, p.seconds)).collect();
        Ok(serde_json::to_string_pretty(&serde_json::json!({
            "propagation_seconds": self.propagation_seconds,
            "total_seconds": self.total_seconds,
            "per_distance_seconds": per_point,
        }))?)
    }

    /// Write `report.json`, `curves.csv`, `timings.json` and any
    /// constellation dumps.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        let put = |name: String, body: &[u8]| {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::file(&p, e))
        };
        put("report.json".into(), self.to_json()?.as_bytes())?;
        put("curves.csv".into(), self.curves_csv().as_bytes())?;
        put("timings.json".into(), self.timings_json()?.as_bytes())?;
        for c in &self.constellations {
            let mut buf = Vec::new();
            c.symbols.write_csv(&mut buf).map_err(Error::Io)?;
            put(format!("constellation_span{}_{}_{}.csv", c.span, c.stage, c.source), &buf)?;
        }
        Ok(())
    }
}

struct StageOutcome {
    metrics: StageMetrics,
    reference: RxSymbols,
    candidate: RxSymbols,
}

fn stage(
    reference: &DualPolField,
    candidate: &DualPolField,
    frame: &TxFrame,
    link: &LinkConfig,
    compensation: Compensation,
    rx: &RxConfig,
    loading: PrngSpec,
) -> Result<StageOutcome> {
    let k = frame.cfg.center_channel();
    let (tx, bits) = (&frame.symbols[k], &frame.bits[k].bits);
    let ref_rx = recover_symbols(reference, &frame.cfg, link, tx, compensation, rx)?;
    let cand_rx = recover_symbols(candidate, &frame.cfg, link, tx, compensation, rx)?;
    let ref_q = symbol_quality(&ref_rx, tx, bits)?;
    let cand_q = symbol_quality(&cand_rx, tx, bits)?;
    let (ref_loaded, info) = load_noise_to_target_ber(&ref_rx, bits, rx.target_ber, loading)?;
    let cand_loaded = add_loading_noise(&cand_rx, info.sigma, &loading_noise(loading, cand_rx.len()))?;
    let ref_bq = ber_q(&hard_decide_qam16(&ref_loaded), bits)?;
    let cand_bq = ber_q(&hard_decide_qam16(&cand_loaded), bits)?;
    let report = |esnr_db: Metric, bq: BerQ, sym: &RxSymbols| MetricsReport {
        nmse: None,
        esnr_db,
        ber: bq.ber,
        q_db: bq.q_db,
        q_error_db: None,
        n_data: sym.len(),
        n_bits: bq.n_bits,
        n_errors: bq.n_errors,
        signal_power_w: sym.mean_power(),
        loading_sigma: Some(info.sigma),
    };
    let q_err = q_error(ref_bq.q_db, cand_bq.q_db)?;
    let mut cand_report = report(cand_q.esnr_db, cand_bq, &cand_rx);
    cand_report.q_error_db = Some(q_err);
    Ok(StageOutcome {
        metrics: StageMetrics {
            reference: report(ref_q.esnr_db, ref_bq, &ref_rx),
            candidate: cand_report,
            q_error_db: q_err,
        },
        reference: ref_rx,
        candidate: cand_rx,
    })
}

/// Loading noise stream for one distance; shared by reference and candidate.
fn loading_prng(prng: PrngSpec, span: usize) -> PrngSpec {
    PrngSpec::philox(mix_seed(prng.seed, LOADING_SEED_TAG), span as u64)
}

/// Compare a candidate against the SSFM reference at each distance: CUT
/// NMSE, then linear (CDC) and nonlinear (multi-channel DBP) receivers with
/// noise loaded to the target BER. The ASE realization of every span is
/// derived from `prng.seed` and shared by both cascades.
pub fn evaluate(
    reference_link: &LinkConfig,
    candidate: &CandidateModel,
    cfg: &WdmConfig,
    distances: &[usize],
    prng: PrngSpec,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    let start = Instant::now();
    cfg.validate()?;
    let link = reference_link.reseeded(prng.seed);
    link.validate()?;
    check_distances(distances, link.num_spans())?;
    let frame = TxFrame::generate(cfg, opts.num_symbols, prng)?;
    let (refs, cands) = rayon::join(
        || cascade(&frame.field, &link, distances),
        || candidate_fields(candidate, &link, &frame, prng.seed, distances),
    );
    let (refs, cands) = (refs?, cands?);
    let propagation_seconds = start.elapsed().as_secs_f64();
    let k = cfg.center_channel();

    let results: Vec<(EvalPoint, Vec<Constellation>)> = distances
        .par_iter()
        .zip(refs.par_iter().zip(cands.par_iter()))
        .map(|(&d, (r, c))| {
            let t = Instant::now();
            check_metadata(r, c, &format!("span {d}"))?;
            let nmse = nmse_fields(&demux_cut(r, cfg, k)?, &demux_cut(c, cfg, k)?)?;
            let sub = link.truncated(d)?;
            let loading = loading_prng(prng, d);
            let lin = stage(r, c, &frame, &sub, Compensation::Cdc, &opts.rx, loading)?;
            let nl = stage(r, c, &frame, &sub, Compensation::Dbp, &opts.rx, loading)?;
            let mut dumps = Vec::new();
            if opts.constellations {
                for (name, s) in [("linear", &lin), ("nonlinear", &nl)] {
                    for (source, sym) in [("reference", &s.reference), ("candidate", &s.candidate)] {
                        dumps.push(Constellation {
                            span: d,
                            stage: name.into(),
                            source: source.into(),
                            symbols: sym.clone(),
                        });
                    }
                }
            }
            let mut linear = lin.metrics;
            let mut nonlinear = nl.metrics;
            linear.candidate.nmse = Some(nmse);
            nonlinear.candidate.nmse = Some(nmse);
            let point = EvalPoint {
                span: d,
                distance_km: sub.total_distance_km(),
                nmse,
                linear,
                nonlinear,
                seconds: t.elapsed().as_secs_f64(),
            };
            Ok((point, dumps))
        })
        .collect::<Result<_>>()?;
    let (points, dumps): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok(EvalReport {
        candidate: candidate.clone(),
        description: candidate.description(),
        wdm: cfg.clone(),
        link,
        prng,
        options: opts.clone(),
        points,
        propagation_seconds,
        total_seconds: start.elapsed().as_secs_f64(),
        constellations: dumps.into_iter().flatten().collect(),
    })
}

/// Evaluate at every span of the link.
pub fn sweep_distance(
    link: &LinkConfig,
    candidate: &CandidateModel,
    cfg: &WdmConfig,
    prng: PrngSpec,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    let distances: Vec<usize> = (1..=link.num_spans()).collect();
    evaluate(link, candidate, cfg, &distances, prng, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub power_dbm: f64,
    pub esnr_db: Metric,
    /// Counted BER after linear DSP.
    pub ber: f64,
    /// Q from the counted BER.
    pub q_counted_db: Metric,
    /// Q from the Gaussian 16-QAM BER at the measured ESNR; used for the
    /// optimum because it stays finite when no errors are counted.
    pub q_db: Metric,
    pub steps: usize,
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSweep {
    pub points: Vec<PowerPoint>,
    pub distance_km: f64,
    /// Grid point with the highest Q.
    pub optimum_grid_dbm: f64,
    /// Vertex of a parabola through the best grid point and its neighbours.
    pub optimum_dbm: f64,
    pub test_power_dbm: f64,
    pub unimodal: bool,
    pub assumptions: Vec<String>,
}

impl PowerSweep {
    pub fn timings_json(&self) -> Result<String> {
        let per_point: Vec<(f64, f64)> = self.points.iter().map(|p| (p.power_dbm, p.seconds)).collect();
        Ok(serde_json::to_string_pretty(&serde_json::json!({ "per_power_seconds": per_point }))?)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("power_dbm,esnr_db,ber,q_counted_db,q_db,steps\n");
        for p in &self.points {
            s.push_str(&format!(
                "{},{},{:e},{},{},{}\n",
                p.power_dbm, p.esnr_db, p.ber, p.q_counted_db, p.q_db, p.steps
            ));
        }
        s
    }
}

/// True if the sequence rises (weakly) to a single peak and then falls.
pub fn is_unimodal(values: &[f64]) -> bool {
    let mut falling = false;
    for w in values.windows(2) {
        if w[1] < w[0] {
            falling = true;
        } else if falling && w[1] > w[0] {
            return false;
        }
    }
    true
}

fn parabola_vertex(x: [f64; 3], y: [f64; 3]) -> Option<f64> {
    let d1 = (y[1] - y[0]) / (x[1] - x[0]);
    let d2 = (y[2] - y[1]) / (x[2] - x[1]);
    let a = (d2 - d1) / (x[2] - x[0]);
    (a < 0.0).then(|| 0.5 * (x[0] + x[1]) - d1 / (2.0 * a))
}

/// Full SSFM and linear DSP per launch power; reports the Q-optimal power
/// and the test point 2.5 dB above it.
pub fn sweep_launch_power(
    link: &LinkConfig,
    cfg: &WdmConfig,
    powers_dbm: &[f64],
    prng: PrngSpec,
    opts: &EvalOptions,
) -> Result<PowerSweep> {
    if powers_dbm.len() < 3 {
        return Err(Error::invalid("a launch-power sweep needs at least three powers"));
    }
    if powers_dbm.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("powers must be strictly increasing"));
    }
    let link = link.reseeded(prng.seed);
    let points: Vec<PowerPoint> = powers_dbm
        .par_iter()
        .map(|&p| {
            let t = Instant::now();
            let cfg = WdmConfig { launch_power_dbm_per_channel: p, ..cfg.clone() };
            let link = LinkConfig { plan_power_w: cfg.total_launch_power_w(), ..link.clone() };
            let frame = TxFrame::generate(&cfg, opts.num_symbols, prng)?;
            let (out, diag) = propagate_link_with(&frame.field, &link, |_| Ok(()))?;
            let k = cfg.center_channel();
            let rx = recover_symbols(&out, &cfg, &link, &frame.symbols[k], Compensation::Cdc, &opts.rx)?;
            let q = symbol_quality(&rx, &frame.symbols[k], &frame.bits[k].bits)?;
            Ok(PowerPoint {
                power_dbm: p,
                esnr_db: q.esnr_db,
                ber: q.ber_q.ber,
                q_counted_db: q.ber_q.q_db,
                q_db: q_from_ber(qam16_gaussian_ber(q.esnr_db)),
                steps: diag.total_steps(),
                seconds: t.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<_>>()?;
    let qs: Vec<f64> = points.iter().map(|p| p.q_db.as_f64()).collect();
    let best = qs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("at least three points");
    let grid = powers_dbm[best];
    let refined = if best > 0 && best + 1 < qs.len() && qs.iter().all(|q| q.is_finite()) {
        parabola_vertex(
            [powers_dbm[best - 1], grid, powers_dbm[best + 1]],
            [qs[best - 1], qs[best], qs[best + 1]],
        )
        .unwrap_or(grid)
    } else {
        grid
    };
    let mut assumptions = Vec::new();
    if link.num_spans() == ASSUMED_SWEEP_SPANS {
        assumptions.push(format!(
            "transmission distance {} km ({ASSUMED_SWEEP_SPANS} spans) assumed for the launch-power sweep",
            link.total_distance_km()
        ));
    }
    assumptions.push("Q from the Gaussian 16-QAM BER at the measured ESNR after linear DSP".into());
    Ok(PowerSweep {
        points,
        distance_km: link.total_distance_km(),
        optimum_grid_dbm: grid,
        optimum_dbm: refined,
        test_power_dbm: refined + TEST_POWER_OFFSET_DB,
        unimodal: is_unimodal(&qs),
        assumptions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrbsEntry {
    pub algorithm: PrngAlgorithm,
    pub seed: u64,
    pub nmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrbsReport {
    pub span: usize,
    pub entries: Vec<PrbsEntry>,
    pub mean: f64,
    pub std: f64,
}

/// CUT NMSE at one distance for frames drawn from each generator and seed.
pub fn prbs_robustness(
    link: &LinkConfig,
    candidate: &CandidateModel,
    cfg: &WdmConfig,
    span: usize,
    seeds: &[u64],
    num_symbols: usize,
) -> Result<PrbsReport> {
    let jobs: Vec<(PrngAlgorithm, u64)> =
        PrngAlgorithm::ALL.iter().flat_map(|&a| seeds.iter().map(move |&s| (a, s))).collect();
    let k = cfg.center_channel();
    let entries: Vec<PrbsEntry> = jobs
        .par_iter()
        .map(|&(algorithm, seed)| {
            let prng = PrngSpec::new(algorithm, seed, 0);
            let link = link.reseeded(seed);
            let frame = TxFrame::generate(cfg, num_symbols, prng)?;
            let r = cascade(&frame.field, &link, &[span])?.remove(0);
            let c = candidate_fields(candidate, &link, &frame, seed, &[span])?.remove(0);
            check_metadata(&r, &c, &format!("span {span}"))?;
            let nmse = nmse_fields(&demux_cut(&r, cfg, k)?, &demux_cut(&c, cfg, k)?)?;
            Ok(PrbsEntry { algorithm, seed, nmse })
        })
        .collect::<Result<_>>()?;
    let n = entries.len() as f64;
    let mean = entries.iter().map(|e| e.nmse).sum::<f64>() / n;
    let std = (entries.iter().map(|e| (e.nmse - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(PrbsReport { span, entries, mean, std })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub runs: usize,
    pub ssfm_median_s: f64,
    pub candidate_median_s: f64,
    pub ssfm_steps: usize,
    pub description: String,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

fn time_runs(runs: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    f()?;
    let mut times = Vec::with_capacity(runs);
    for _ in 0..runs {
        let t = Instant::now();
        f()?;
        times.push(t.elapsed().as_secs_f64());
    }
    Ok(median(times))
}

/// Median wall-clock of one single-span frame for the SSFM and the
/// candidate, after one warm-up run each.
pub fn benchmark_inference(
    link: &LinkConfig,
    candidate: &CandidateModel,
    cfg: &WdmConfig,
    prng: PrngSpec,
    num_symbols: usize,
    runs: usize,
) -> Result<BenchReport> {
    if runs < 5 {
        return Err(Error::invalid("benchmark needs at least five runs"));
    }
    let link = link.reseeded(prng.seed).truncated(1)?;
    let frame = TxFrame::generate(cfg, num_symbols, prng)?;
    let span = &link.spans[0];
    let ssfm = time_runs(runs, || propagate_span(&frame.field, span, link.plan_power_w, 1, false).map(|_| ()))?;
    let cand = time_runs(runs, || candidate_fields(candidate, &link, &frame, prng.seed, &[1]).map(|_| ()))?;
    Ok(BenchReport {
        runs,
        ssfm_median_s: ssfm,
        candidate_median_s: cand,
        ssfm_steps: plan_steps(&span.fiber, link.plan_power_w)?.num_steps(),
        description: candidate.description(),
    })
}

/// Write the reference cascade of a frame as an external run, e.g. to test a
/// model runtime against the file contract.
pub fn export_reference_run(
    link: &LinkConfig,
    cfg: &WdmConfig,
    prng: PrngSpec,
    num_symbols: usize,
    distances: &[usize],
    root: impl AsRef<Path>,
    run_id: &str,
) -> Result<PathBuf> {
    let link = link.reseeded(prng.seed);
    let frame = TxFrame::generate(cfg, num_symbols, prng)?;
    let fields = cascade(&frame.field, &link, distances)?;
    let pairs: Vec<(usize, DualPolField)> = distances.iter().copied().zip(fields).collect();
    let manifest = FieldManifest { wdm: Some(cfg.clone()), link: Some(link), prng: Some(prng), span_index: None };
    export_waveforms(root, run_id, prng.seed, &pairs, &manifest)
}

/// Flush a table to a writer, used by the CLI.
pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::file(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::file(path, e))
}
