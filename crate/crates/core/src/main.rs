use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use fiberwave::config::RunConfig;
use fiberwave::dataset::{collect_training_set, write_dataset};
use fiberwave::harness::{
    benchmark_inference, evaluate, export_waveforms, prbs_robustness, sweep_distance, sweep_launch_power,
    write_text, CandidateModel,
};
use fiberwave::rx::{recover_symbols, symbol_quality, Compensation};
use fiberwave::ssfm::propagate_link;
use fiberwave::tx::TxFrame;
use fiberwave::wfld::{write_field, write_manifest, FieldManifest};
use fiberwave::{Error, ErrorClass, PrngSpec, Result};

#[derive(Parser)]
#[command(name = "fiberwave", version, about = "WDM fiber transmission simulator and channel-model evaluation")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Flags override the matching configuration keys.
#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    spans: Option<usize>,
    #[arg(long, global = true)]
    channels: Option<usize>,
    #[arg(long, global = true)]
    symbol_rate: Option<f64>,
    /// Launch power per channel in dBm.
    #[arg(long, global = true, allow_hyphen_values = true)]
    power_dbm: Option<f64>,
    #[arg(long, global = true)]
    symbols: Option<usize>,
    /// `self`, `identity`, `perturbed:GAMMA_SCALE,BETA2_SCALE` or `external:DIR`.
    #[arg(long, global = true)]
    candidate: Option<String>,
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate one frame and write per-span waveforms and receiver metrics.
    Simulate,
    /// Build windowed training shards.
    Dataset,
    /// Compare a candidate with the reference at the configured distances.
    Evaluate,
    /// Q-factor versus launch power.
    SweepPower,
    /// Evaluate a candidate at every span.
    SweepDistance,
    /// Candidate NMSE across the four bit generators.
    Prbs,
    /// Single-span timing of the SSFM and the candidate.
    Bench,
}

impl Command {
    fn dir_name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Dataset => "dataset",
            Command::Evaluate => "evaluate",
            Command::SweepPower => "sweep_power",
            Command::SweepDistance => "sweep_distance",
            Command::Prbs => "prbs",
            Command::Bench => "bench",
        }
    }
}

fn parse_candidate(s: &str) -> Result<CandidateModel> {
    let bad = || Error::invalid(format!("unrecognized candidate {s:?}"));
    match s.split_once(':') {
        None if s == "self" => Ok(CandidateModel::reference()),
        None if s == "identity" => Ok(CandidateModel::IdentityPlusCdc),
        Some(("external", dir)) => Ok(CandidateModel::ExternalWaveform { run_dir: dir.into() }),
        Some(("perturbed", scales)) => {
            let (g, b) = scales.split_once(',').ok_or_else(bad)?;
            Ok(CandidateModel::PerturbedSsfm {
                gamma_scale: g.trim().parse().map_err(|_| bad())?,
                beta2_scale: b.trim().parse().map_err(|_| bad())?,
            })
        }
        _ => Err(bad()),
    }
}

fn resolve(common: &Common) -> Result<RunConfig> {
    let mut c = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &common.out {
        c.output_dir = v.clone();
    }
    if let Some(v) = common.seed {
        c.prng.seed = v;
    }
    if let Some(v) = common.spans {
        c.link.num_spans = v;
    }
    if let Some(v) = common.channels {
        c.wdm.num_channels = v;
    }
    if let Some(v) = common.symbol_rate {
        c.wdm.symbol_rate_baud = v;
    }
    if let Some(v) = common.power_dbm {
        c.wdm.launch_power_dbm_per_channel = v;
    }
    if let Some(v) = common.symbols {
        c.num_symbols = v;
    }
    if let Some(v) = &common.candidate {
        c.evaluate.candidate = parse_candidate(v)?;
    }
    if common.threads.is_some() {
        c.threads = common.threads;
    }
    c.validate()?;
    Ok(c)
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    write_text(dir.join(name), text)
}

fn simulate(c: &RunConfig, dir: &Path) -> Result<()> {
    let cfg = c.wdm();
    let link = c.link();
    let frame = TxFrame::generate(&cfg, c.num_symbols, c.prng)?;
    let manifest = FieldManifest { wdm: Some(cfg.clone()), link: Some(link.clone()), prng: Some(c.prng), span_index: None };
    let tx_path = dir.join("tx.wfld");
    write_field(&frame.field, &tx_path)?;
    write_manifest(&FieldManifest { span_index: Some(0), ..manifest.clone() }, &tx_path)?;
    let taps: BTreeSet<usize> = (1..=link.num_spans()).collect();
    let out = propagate_link(&frame.field, &link, &taps)?;
    let fields: Vec<(usize, _)> = out.taps.into_iter().map(|t| (t.span_index, t.field_after_edfa)).collect();
    export_waveforms(dir, "spans", c.prng.seed, &fields, &manifest)?;
    let k = cfg.center_channel();
    let (tx, bits) = (&frame.symbols[k], &frame.bits[k].bits);
    let mut metrics = serde_json::Map::new();
    let stages: &[(&str, Compensation)] = if link.num_spans() == 0 {
        &[("linear", Compensation::Cdc)]
    } else {
        &[("linear", Compensation::Cdc), ("nonlinear", Compensation::Dbp)]
    };
    for &(name, comp) in stages {
        let rx = recover_symbols(&out.field, &cfg, &link, tx, comp, &c.rx)?;
        let q = symbol_quality(&rx, tx, bits)?;
        metrics.insert(name.into(), serde_json::to_value(q)?);
    }
    write(dir, "metrics.json", &serde_json::to_string_pretty(&metrics)?)?;
    write(dir, "diagnostics.json", &out.diagnostics.to_json()?)?;
    eprintln!("simulated {} spans, {} SSFM steps", link.num_spans(), out.diagnostics.total_steps());
    Ok(())
}

fn dataset(c: &RunConfig, dir: &Path) -> Result<()> {
    if c.dataset.seeds.contains(&c.prng.seed) {
        eprintln!("warning: evaluation seed {} is also a training seed", c.prng.seed);
    }
    let seeds: Vec<PrngSpec> =
        c.dataset.seeds.iter().map(|&s| PrngSpec::new(c.prng.algorithm, s, c.prng.stream_id)).collect();
    let shards = collect_training_set(&c.link(), &c.wdm(), &seeds, &c.collect_options())?;
    let paths = write_dataset(&shards, dir)?;
    if let Some(s) = shards.first() {
        eprintln!("wrote {} shards, window length {}", paths.len(), s.spec.window_length);
    }
    Ok(())
}

fn run(command: &Command, c: &RunConfig) -> Result<()> {
    let dir = c.output_dir.join(command.dir_name());
    fs::create_dir_all(&dir).map_err(|e| Error::file(&dir, e))?;
    write(&dir, "resolved_config.json", &c.to_json()?)?;
    let start = Instant::now();
    match command {
        Command::Simulate => simulate(c, &dir)?,
        Command::Dataset => dataset(c, &dir)?,
        Command::Evaluate => {
            let r = evaluate(&c.link(), &c.evaluate.candidate, &c.wdm(), &c.distances(), c.prng, &c.eval_options())?;
            r.write(&dir)?;
        }
        Command::SweepDistance => {
            let r = sweep_distance(&c.link(), &c.evaluate.candidate, &c.wdm(), c.prng, &c.eval_options())?;
            r.write(&dir)?;
        }
        Command::SweepPower => {
            let s = sweep_launch_power(&c.link(), &c.wdm(), &c.sweep.powers_dbm, c.prng, &c.eval_options())?;
            write(&dir, "sweep.json", &serde_json::to_string_pretty(&s)?)?;
            write(&dir, "sweep.csv", &s.to_csv())?;
            write(&dir, "timings.json", &s.timings_json()?)?;
            eprintln!("optimum {:.2} dBm, test point {:.2} dBm", s.optimum_dbm, s.test_power_dbm);
        }
        Command::Prbs => {
            let span = c.prbs.span.unwrap_or(c.link.num_spans);
            let r = prbs_robustness(&c.link(), &c.evaluate.candidate, &c.wdm(), span, &c.prbs.seeds, c.num_symbols)?;
            write(&dir, "prbs.json", &serde_json::to_string_pretty(&r)?)?;
        }
        Command::Bench => {
            let r = benchmark_inference(&c.link(), &c.evaluate.candidate, &c.wdm(), c.prng, c.num_symbols, c.bench.runs)?;
            write(&dir, "bench.json", &serde_json::to_string_pretty(&r)?)?;
        }
    }
    eprintln!("{} done in {:.1} s, outputs in {}", command.dir_name(), start.elapsed().as_secs_f64(), dir.display());
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Config => 2,
        ErrorClass::Numeric => 3,
        ErrorClass::Io => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = resolve(&cli.common).and_then(|c| {
        if let Some(n) = c.threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
        }
        run(&cli.command, &c)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": e.to_string(), "class": format!("{:?}", e.class()) }));
            ExitCode::from(exit_code(&e))
        }
    }
}
