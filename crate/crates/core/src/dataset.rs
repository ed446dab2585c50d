//! Training datasets for span-level surrogate models: window sizing, FDD
//! decoupling, power normalization, sliding windows and the `.wds` format.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::DualPolField;
use crate::params::{LinkConfig, WdmConfig};
use crate::prng::{mix_seed, PrngSpec};
use crate::rx::cdc;
use crate::ssfm::propagate_span;
use crate::tx::TxFrame;
use crate::units::{alpha_db_to_linear, db_to_lin, PS2_TO_S2};

/// Guard added to the symbol rate to form the per-channel spectral slot
/// used by the window calculator.
pub const WINDOW_SLOT_GUARD_HZ: f64 = 10e9;

/// Span taps used for training data.
pub const DEFAULT_TAPS: [usize; 5] = [1, 3, 5, 7, 9];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WindowMode {
    #[serde(rename = "PURE")]
    Pure,
    #[serde(rename = "FDD")]
    Fdd,
    /// Sequence-to-sequence: `center` target symbols with `in_left` and
    /// `in_right` context symbols on either side.
    #[serde(rename = "SEQ2SEQ")]
    Seq2Seq { in_left: usize, center: usize, in_right: usize },
}

impl WindowMode {
    fn code(self) -> u32 {
        match self {
            WindowMode::Pure => 0,
            WindowMode::Fdd => 1,
            WindowMode::Seq2Seq { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layout {
    /// `[b, window_length, d]`
    #[serde(rename = "TEMPORAL")]
    Temporal,
    /// `[b, window_length·d]`
    #[serde(rename = "FLAT")]
    Flat,
}

impl Layout {
    fn code(self) -> u32 {
        match self {
            Layout::Temporal => 0,
            Layout::Flat => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub n_isi: f64,
    pub n_nl: f64,
    /// Half window in symbols.
    pub m: usize,
    pub window_length: usize,
    pub mode: WindowMode,
    pub spectrum_width_hz: f64,
    pub effective_length_km: f64,
}

impl WindowSpec {
    /// Fixed window of `2m+1` symbols.
    pub fn symmetric(m: usize, mode: WindowMode) -> Self {
        Self {
            n_isi: 0.0,
            n_nl: 0.0,
            m,
            window_length: 2 * m + 1,
            mode,
            spectrum_width_hz: 0.0,
            effective_length_km: 0.0,
        }
    }

    /// Target symbols per window.
    pub fn target_steps(&self) -> usize {
        match self.mode {
            WindowMode::Seq2Seq { center, .. } => center,
            _ => 1,
        }
    }

    /// Offset of the first input symbol relative to the first target symbol.
    fn left(&self) -> usize {
        match self.mode {
            WindowMode::Seq2Seq { in_left, .. } => in_left,
            _ => self.m,
        }
    }
}

fn next_odd_at_least(x: f64) -> usize {
    let n = x.ceil().max(0.0) as usize;
    if n % 2 == 1 { n } else { n + 1 }
}

/// Symbols correlated by dispersion over `length_km`:
/// `L·|β2|·Δω·S` with `Δω = 2π·C·(S + 10 GHz)`.
pub fn isi_symbols(cfg: &WdmConfig, length_km: f64, beta2_ps2_per_km: f64) -> f64 {
    let width_hz = cfg.num_channels as f64 * (cfg.symbol_rate_baud + WINDOW_SLOT_GUARD_HZ);
    let d_omega = 2.0 * std::f64::consts::PI * width_hz;
    length_km * beta2_ps2_per_km.abs() * PS2_TO_S2 * d_omega * cfg.symbol_rate_baud
}

/// Input window for a span of `distance_km`. PURE uses the span length; FDD
/// uses the effective nonlinear length `1/α` (the span length when lossless).
/// The count is rounded up to the next odd integer.
pub fn window_length(
    cfg: &WdmConfig,
    distance_km: f64,
    alpha_db_per_km: f64,
    beta2_ps2_per_km: f64,
    mode: WindowMode,
) -> Result<WindowSpec> {
    if !(distance_km > 0.0) || !(alpha_db_per_km >= 0.0) || !beta2_ps2_per_km.is_finite() {
        return Err(Error::invalid("window sizing needs a positive distance and nonnegative loss"));
    }
    let alpha = alpha_db_to_linear(alpha_db_per_km);
    let l_eff = if alpha > 0.0 { 1.0 / alpha } else { distance_km };
    let n_isi = isi_symbols(cfg, distance_km, beta2_ps2_per_km);
    let n_nl = isi_symbols(cfg, l_eff, beta2_ps2_per_km);
    let spectrum_width_hz = cfg.num_channels as f64 * (cfg.symbol_rate_baud + WINDOW_SLOT_GUARD_HZ);
    let window_length = match mode {
        WindowMode::Pure => next_odd_at_least(n_isi),
        WindowMode::Fdd => next_odd_at_least(n_nl),
        WindowMode::Seq2Seq { in_left, center, in_right } => {
            if center == 0 {
                return Err(Error::invalid("sequence-to-sequence center must be positive"));
            }
            in_left + center + in_right
        }
    };
    Ok(WindowSpec {
        n_isi,
        n_nl,
        m: (window_length - 1) / 2,
        window_length,
        mode,
        spectrum_width_hz,
        effective_length_km: l_eff,
    })
}

/// Remove one span's dispersion so only nonlinear distortion remains.
pub fn fdd_decouple(output: &DualPolField, beta2_ps2_per_km: f64, span_length_km: f64) -> DualPolField {
    cdc(output, beta2_ps2_per_km, span_length_km)
}

/// Scale by `sqrt(1/ΣP_i)` with the per-channel launch powers in W.
pub fn power_normalize(field: &DualPolField, cfg: &WdmConfig) -> Result<DualPolField> {
    let total = cfg.total_launch_power_w();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::invalid("total launch power must be positive"));
    }
    Ok(field.scaled(total.recip().sqrt()))
}

/// Interleave a field into per-symbol rows of `d = 4·sps` values
/// `[XI, XQ, YI, YQ]` per sample point.
pub fn symbol_rows(field: &DualPolField, sps: usize) -> Result<Vec<f32>> {
    if sps == 0 || field.len() % sps != 0 {
        return Err(Error::invalid(format!("{} samples do not split into {sps}-sample symbols", field.len())));
    }
    let mut out = Vec::with_capacity(field.len() * 4);
    for (x, y) in field.x().iter().zip(field.y()) {
        out.extend_from_slice(&[x.re as f32, x.im as f32, y.re as f32, y.im as f32]);
    }
    Ok(out)
}

/// Which split a window belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    #[serde(rename = "train")]
    Train,
    #[serde(rename = "val")]
    Val,
    #[serde(rename = "test")]
    Test,
}

/// 8:2:1 assignment from a hash of `(seed, span, index)`.
pub fn split_of(seed: u64, span: usize, index: usize) -> Split {
    let h = mix_seed(mix_seed(seed, span as u64), index as u64);
    match h % 11 {
        0..=7 => Split::Train,
        8 | 9 => Split::Val,
        _ => Split::Test,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// Everything needed to regenerate a shard bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShardManifest {
    pub format: String,
    pub mode: WindowMode,
    pub layout: Layout,
    pub b: usize,
    pub window_length: usize,
    pub d: usize,
    pub target_steps: usize,
    pub input_shape: Vec<usize>,
    pub target_shape: Vec<usize>,
    pub window: WindowSpec,
    pub wdm: WdmConfig,
    pub link: LinkConfig,
    pub prng: PrngSpec,
    pub num_symbols: usize,
    /// 1-based span whose input/output pair this shard holds.
    pub span_index: usize,
    pub normalization_scale: f64,
    pub split_rule: String,
    pub split: SplitCounts,
}

/// Windowed input/target pairs of one (seed, span). Windows are kept as
/// per-symbol rows and materialized on demand; every window wraps around
/// the circular frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetShard {
    pub spec: WindowSpec,
    pub layout: Layout,
    pub d: usize,
    input_rows: Vec<f32>,
    target_rows: Vec<f32>,
    pub manifest: Option<ShardManifest>,
}

impl DatasetShard {
    /// Number of windows, one per symbol position.
    pub fn b(&self) -> usize {
        self.input_rows.len() / self.d
    }

    pub fn input_shape(&self) -> Vec<usize> {
        match self.layout {
            Layout::Temporal => vec![self.b(), self.spec.window_length, self.d],
            Layout::Flat => vec![self.b(), self.spec.window_length * self.d],
        }
    }

    pub fn target_shape(&self) -> Vec<usize> {
        vec![self.b(), self.spec.target_steps() * self.d]
    }

    fn rows_from(&self, rows: &[f32], start: isize, count: usize, out: &mut Vec<f32>) {
        let n = self.b() as isize;
        for k in 0..count as isize {
            let j = (start + k).rem_euclid(n) as usize;
            out.extend_from_slice(&rows[j * self.d..(j + 1) * self.d]);
        }
    }

    /// Input window `i`, `window_length·d` values.
    pub fn input_window(&self, i: usize) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.spec.window_length * self.d);
        self.rows_from(&self.input_rows, i as isize - self.spec.left() as isize, self.spec.window_length, &mut out);
        out
    }

    /// Target of window `i`, `target_steps·d` values.
    pub fn target(&self, i: usize) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.spec.target_steps() * self.d);
        self.rows_from(&self.target_rows, i as isize, self.spec.target_steps(), &mut out);
        out
    }

    pub fn inputs_tensor(&self) -> Vec<f32> {
        (0..self.b()).flat_map(|i| self.input_window(i)).collect()
    }

    pub fn targets_tensor(&self) -> Vec<f32> {
        (0..self.b()).flat_map(|i| self.target(i)).collect()
    }

    /// Write the shard as `.wds` plus its JSON manifest sidecar.
    pub fn write_wds(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::file(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::file(path, e);
        w.write_all(&encode_wds_header(&self.header())).map_err(io)?;
        let mut put = |vals: Vec<f32>| -> Result<()> {
            for v in vals {
                w.write_all(&v.to_le_bytes()).map_err(io)?;
            }
            Ok(())
        };
        for i in 0..self.b() {
            put(self.input_window(i))?;
        }
        for i in 0..self.b() {
            put(self.target(i))?;
        }
        w.flush().map_err(io)?;
        if let Some(m) = &self.manifest {
            let mp = crate::wfld::manifest_path(path);
            fs::write(&mp, serde_json::to_string_pretty(m)?).map_err(|e| Error::file(&mp, e))?;
        }
        Ok(())
    }

    pub fn header(&self) -> WdsHeader {
        WdsHeader {
            mode: self.spec.mode.code(),
            layout: self.layout.code(),
            b: self.b() as u64,
            window_length: self.spec.window_length as u64,
            d: self.d as u64,
            target_steps: self.spec.target_steps() as u64,
        }
    }
}

/// Build windows from aligned input and target fields sampled at `sps`
/// samples per symbol.
pub fn build_windows(
    input: &DualPolField,
    target: &DualPolField,
    spec: &WindowSpec,
    layout: Layout,
    sps: usize,
) -> Result<DatasetShard> {
    input.check_compatible(target)?;
    let input_rows = symbol_rows(input, sps)?;
    let target_rows = symbol_rows(target, sps)?;
    let d = 4 * sps;
    let n = input.len() / sps;
    if spec.window_length > n || spec.target_steps() > n {
        return Err(Error::invalid(format!(
            "window of {} symbols does not fit a {n}-symbol frame",
            spec.window_length
        )));
    }
    if !matches!(spec.mode, WindowMode::Seq2Seq { .. }) && spec.window_length != 2 * spec.m + 1 {
        return Err(Error::invalid("symmetric window length must equal 2m+1"));
    }
    Ok(DatasetShard { spec: spec.clone(), layout, d, input_rows, target_rows, manifest: None })
}

pub const WDS_MAGIC: &[u8; 4] = b"WDS1";
pub const WDS_HEADER_LEN: usize = 44;

/// `.wds` header, little-endian: magic, mode u32, layout u32, b u64,
/// window_length u64, d u64, target_steps u64. The float32 payload follows:
/// all inputs, then all targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WdsHeader {
    pub mode: u32,
    pub layout: u32,
    pub b: u64,
    pub window_length: u64,
    pub d: u64,
    pub target_steps: u64,
}

impl WdsHeader {
    pub fn input_len(&self) -> u64 {
        self.b * self.window_length * self.d
    }

    pub fn target_len(&self) -> u64 {
        self.b * self.target_steps * self.d
    }
}

pub fn encode_wds_header(h: &WdsHeader) -> Vec<u8> {
    let mut out = Vec::with_capacity(WDS_HEADER_LEN);
    out.extend_from_slice(WDS_MAGIC);
    out.extend_from_slice(&h.mode.to_le_bytes());
    out.extend_from_slice(&h.layout.to_le_bytes());
    for v in [h.b, h.window_length, h.d, h.target_steps] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct WdsFile {
    pub header: WdsHeader,
    pub inputs: Vec<f32>,
    pub targets: Vec<f32>,
}

pub fn decode_wds(buf: &[u8]) -> Result<WdsFile> {
    let err = |offset: usize, reason: String| Error::Decode { offset: offset as u64, reason };
    if buf.len() < WDS_HEADER_LEN {
        return Err(err(buf.len(), format!("truncated header: {} of {WDS_HEADER_LEN} bytes", buf.len())));
    }
    if &buf[..4] != WDS_MAGIC {
        return Err(err(0, format!("bad magic {:02x?}", &buf[..4])));
    }
    let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().expect("4 bytes"));
    let u64_at = |o: usize| u64::from_le_bytes(buf[o..o + 8].try_into().expect("8 bytes"));
    let header = WdsHeader {
        mode: u32_at(4),
        layout: u32_at(8),
        b: u64_at(12),
        window_length: u64_at(20),
        d: u64_at(28),
        target_steps: u64_at(36),
    };
    if header.mode > 2 {
        return Err(err(4, format!("unknown mode {}", header.mode)));
    }
    if header.layout > 1 {
        return Err(err(8, format!("unknown layout {}", header.layout)));
    }
    let floats = header
        .input_len()
        .checked_add(header.target_len())
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| err(12, "tensor sizes overflow".into()))?;
    let expected = WDS_HEADER_LEN as u64 + floats;
    if (buf.len() as u64) < expected {
        return Err(err(buf.len(), format!("truncated payload: expected {expected} bytes")));
    }
    if buf.len() as u64 > expected {
        return Err(err(expected as usize, "trailing bytes after payload".into()));
    }
    let payload: Vec<f32> = buf[WDS_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let (inputs, targets) = payload.split_at(header.input_len() as usize);
    Ok(WdsFile { header, inputs: inputs.to_vec(), targets: targets.to_vec() })
}

pub fn read_wds(path: impl AsRef<Path>) -> Result<WdsFile> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| Error::file(path, e))?;
    decode_wds(&buf)
}

pub fn read_shard_manifest(path: impl AsRef<Path>) -> Result<ShardManifest> {
    let mp = crate::wfld::manifest_path(path);
    let text = fs::read_to_string(&mp).map_err(|e| Error::file(&mp, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// What to collect from each SSFM run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollectOptions {
    pub mode: WindowMode,
    pub layout: Layout,
    pub taps: Vec<usize>,
    pub num_symbols: usize,
}

fn split_counts(seed: u64, span: usize, b: usize) -> SplitCounts {
    let mut c = SplitCounts::default();
    for i in 0..b {
        match split_of(seed, span, i) {
            Split::Train => c.train += 1,
            Split::Val => c.val += 1,
            Split::Test => c.test += 1,
        }
    }
    c
}

/// Shard for one span given the span input and its pre-amplifier output.
///
/// Targets are the pre-amplifier output multiplied by the noiseless
/// amplifier gain, so a lossless-equivalent map is learned; FDD targets
/// additionally have the span dispersion removed.
fn shard_for_span(
    link: &LinkConfig,
    cfg: &WdmConfig,
    prng: PrngSpec,
    opts: &CollectOptions,
    span_index: usize,
    span_input: &DualPolField,
    before_edfa: &DualPolField,
) -> Result<DatasetShard> {
    let span = &link.spans[span_index - 1];
    let wavelength = span_input.center_wavelength_m();
    let beta2 = span.fiber.beta2_ps2_per_km(wavelength)?;
    let spec = window_length(cfg, span.fiber.span_length_km, span.fiber.attenuation_db_per_km, beta2, opts.mode)?;
    let gain = db_to_lin(span.edfa.gain_db_for(&span.fiber)).sqrt();
    let mut target = before_edfa.scaled(gain);
    if opts.mode == WindowMode::Fdd {
        target = fdd_decouple(&target, beta2, span.fiber.span_length_km);
    }
    let input = power_normalize(span_input, cfg)?;
    let target = power_normalize(&target, cfg)?.at_position(input.position_km());
    let mut shard = build_windows(&input, &target, &spec, opts.layout, cfg.samples_per_symbol)?;
    let b = shard.b();
    shard.manifest = Some(ShardManifest {
        format: "WDS1".into(),
        mode: opts.mode,
        layout: opts.layout,
        b,
        window_length: spec.window_length,
        d: shard.d,
        target_steps: spec.target_steps(),
        input_shape: shard.input_shape(),
        target_shape: shard.target_shape(),
        window: spec,
        wdm: cfg.clone(),
        link: link.clone(),
        prng,
        num_symbols: opts.num_symbols,
        span_index,
        normalization_scale: cfg.total_launch_power_w().recip().sqrt(),
        split_rule: "splitmix64(splitmix64(seed, span), index) % 11: 0-7 train, 8-9 val, 10 test".into(),
        split: split_counts(prng.seed, span_index, b),
    });
    Ok(shard)
}

fn check_taps(link: &LinkConfig, taps: &[usize]) -> Result<()> {
    if let Some(&t) = taps.iter().find(|&&t| t == 0 || t > link.num_spans()) {
        return Err(Error::LinkMismatch(format!("tap {t} outside spans 1..={}", link.num_spans())));
    }
    Ok(())
}

/// Run the link for one seed and cut shards at the requested taps. The
/// amplifier seeds are derived from the frame seed.
pub fn collect_for_seed(
    link: &LinkConfig,
    cfg: &WdmConfig,
    prng: PrngSpec,
    opts: &CollectOptions,
) -> Result<Vec<DatasetShard>> {
    check_taps(link, &opts.taps)?;
    let link = link.reseeded(prng.seed);
    let frame = TxFrame::generate(cfg, opts.num_symbols, prng)?;
    let last = opts.taps.iter().copied().max().unwrap_or(0);
    let mut current = frame.field;
    let mut shards = Vec::with_capacity(opts.taps.len());
    for i in 1..=last {
        let out = propagate_span(&current, &link.spans[i - 1], link.plan_power_w, i, true)?;
        if opts.taps.contains(&i) {
            let tap = out.tap.as_ref().expect("tap requested");
            shards.push(shard_for_span(&link, cfg, prng, opts, i, &current, &tap.field_before_edfa)?);
        }
        current = out.field;
    }
    Ok(shards)
}

/// Shards for every seed and tap, seeds processed in parallel.
pub fn collect_training_set(
    link: &LinkConfig,
    cfg: &WdmConfig,
    seeds: &[PrngSpec],
    opts: &CollectOptions,
) -> Result<Vec<DatasetShard>> {
    cfg.validate()?;
    link.validate()?;
    check_taps(link, &opts.taps)?;
    let per_seed: Vec<Vec<DatasetShard>> =
        seeds.par_iter().map(|&s| collect_for_seed(link, cfg, s, opts)).collect::<Result<_>>()?;
    Ok(per_seed.into_iter().flatten().collect())
}

/// Rebuild a shard from its manifest alone.
pub fn regenerate_shard(manifest: &ShardManifest) -> Result<DatasetShard> {
    let opts = CollectOptions {
        mode: manifest.mode,
        layout: manifest.layout,
        taps: vec![manifest.span_index],
        num_symbols: manifest.num_symbols,
    };
    // The manifest stores the already re-seeded link; re-seeding is idempotent.
    let mut shards = collect_for_seed(&manifest.link, &manifest.wdm, manifest.prng, &opts)?;
    Ok(shards.remove(0))
}

/// File name of a shard inside a dataset directory.
pub fn shard_file_name(prng: &PrngSpec, span_index: usize) -> String {
    format!("seed{}_span{span_index}.wds", prng.seed)
}

/// Write shards and an index listing them.
pub fn write_dataset(shards: &[DatasetShard], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    let mut paths = Vec::with_capacity(shards.len());
    for s in shards {
        let m = s.manifest.as_ref().ok_or_else(|| Error::invalid("shard has no manifest"))?;
        let p = dir.join(shard_file_name(&m.prng, m.span_index));
        s.write_wds(&p)?;
        paths.push(p);
    }
    let names: Vec<String> =
        paths.iter().map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned()).collect();
    let index = dir.join("index.json");
    fs::write(&index, serde_json::to_string_pretty(&names)?).map_err(|e| Error::file(&index, e))?;
    Ok(paths)
}
