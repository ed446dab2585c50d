//! Run configuration for the command-line front end. Unknown keys are
//! rejected; omitted sections take the defaults below.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{CollectOptions, Layout, WindowMode, DEFAULT_TAPS};
use crate::error::{Error, Result};
use crate::harness::{CandidateModel, EvalOptions};
use crate::params::{EdfaParams, FiberSpanParams, LinkConfig, WdmConfig};
use crate::prng::PrngSpec;
use crate::rx::RxConfig;
use crate::tx::DEFAULT_FRAME_SYMBOLS;
use crate::units::dbm_to_w;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WdmSection {
    pub num_channels: usize,
    pub symbol_rate_baud: f64,
    pub launch_power_dbm_per_channel: f64,
    /// Defaults to 1.2 times the symbol rate.
    pub channel_spacing_hz: Option<f64>,
    pub rolloff: Option<f64>,
    /// Defaults to four samples per symbol per channel.
    pub samples_per_symbol: Option<usize>,
}

impl Default for WdmSection {
    fn default() -> Self {
        Self {
            num_channels: 5,
            symbol_rate_baud: 50e9,
            launch_power_dbm_per_channel: 4.0,
            channel_spacing_hz: None,
            rolloff: None,
            samples_per_symbol: None,
        }
    }
}

impl WdmSection {
    pub fn resolve(&self) -> WdmConfig {
        let base = WdmConfig::new(self.num_channels, self.symbol_rate_baud, self.launch_power_dbm_per_channel);
        WdmConfig {
            channel_spacing_hz: self.channel_spacing_hz.unwrap_or(base.channel_spacing_hz),
            rolloff: self.rolloff.unwrap_or(base.rolloff),
            samples_per_symbol: self.samples_per_symbol.unwrap_or(base.samples_per_symbol),
            ..base
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkSection {
    pub num_spans: usize,
    pub fiber: FiberSpanParams,
    pub edfa: EdfaParams,
    /// Step-planning power in dBm; defaults to the total launch power.
    pub plan_power_dbm: Option<f64>,
}

impl Default for LinkSection {
    fn default() -> Self {
        Self { num_spans: 10, fiber: FiberSpanParams::default(), edfa: EdfaParams::default(), plan_power_dbm: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub mode: WindowMode,
    pub layout: Layout,
    pub taps: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self { mode: WindowMode::Fdd, layout: Layout::Flat, taps: DEFAULT_TAPS.to_vec(), seeds: (1..=10).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub candidate: CandidateModel,
    /// Span indices; all spans when absent.
    pub distances: Option<Vec<usize>>,
    pub constellations: bool,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self { candidate: CandidateModel::reference(), distances: None, constellations: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub powers_dbm: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { powers_dbm: (-2..=8).map(f64::from).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrbsSection {
    pub seeds: Vec<u64>,
    /// Span index; the last span when absent.
    pub span: Option<usize>,
}

impl Default for PrbsSection {
    fn default() -> Self {
        Self { seeds: vec![1, 2], span: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub runs: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self { runs: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub wdm: WdmSection,
    pub link: LinkSection,
    /// Frame generator; its seed also keys the amplifier noise.
    pub prng: PrngSpec,
    pub num_symbols: usize,
    pub output_dir: PathBuf,
    pub rx: RxConfig,
    pub threads: Option<usize>,
    pub dataset: DatasetSection,
    pub evaluate: EvaluateSection,
    pub sweep: SweepSection,
    pub prbs: PrbsSection,
    pub bench: BenchSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            wdm: WdmSection::default(),
            link: LinkSection::default(),
            prng: PrngSpec::philox(11, 0),
            num_symbols: DEFAULT_FRAME_SYMBOLS,
            output_dir: PathBuf::from("out"),
            rx: RxConfig::default(),
            threads: None,
            dataset: DatasetSection::default(),
            evaluate: EvaluateSection::default(),
            sweep: SweepSection::default(),
            prbs: PrbsSection::default(),
            bench: BenchSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_json(&text)
    }

    pub fn wdm(&self) -> WdmConfig {
        self.wdm.resolve()
    }

    pub fn link(&self) -> LinkConfig {
        let wdm = self.wdm();
        let plan = self.link.plan_power_dbm.map_or_else(|| wdm.total_launch_power_w(), dbm_to_w);
        LinkConfig::uniform(self.link.num_spans, self.link.fiber.clone(), self.link.edfa.clone(), plan)
            .reseeded(self.prng.seed)
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions { num_symbols: self.num_symbols, rx: self.rx.clone(), constellations: self.evaluate.constellations }
    }

    pub fn collect_options(&self) -> CollectOptions {
        CollectOptions {
            mode: self.dataset.mode,
            layout: self.dataset.layout,
            taps: self.dataset.taps.clone(),
            num_symbols: self.num_symbols,
        }
    }

    pub fn distances(&self) -> Vec<usize> {
        self.evaluate.distances.clone().unwrap_or_else(|| (1..=self.link.num_spans).collect())
    }

    pub fn validate(&self) -> Result<()> {
        self.wdm().validate()?;
        if self.link.num_spans > 0 {
            self.link().validate()?;
        }
        if self.num_symbols == 0 {
            return Err(Error::invalid("num_symbols must be positive"));
        }
        if self.threads == Some(0) {
            return Err(Error::invalid("threads must be positive"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_takes_defaults() {
        let c = RunConfig::from_json("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        let wdm = c.wdm();
        assert_eq!((wdm.num_channels, wdm.samples_per_symbol), (5, 20));
        assert_eq!(c.link().num_spans(), 10);
        assert!((c.link().plan_power_w - wdm.total_launch_power_w()).abs() < 1e-15);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for bad in [r#"{"wdm": {"channels": 3}}"#, r#"{"colour": 1}"#, r#"{"link": {"fiber": {"gama": 1}}}"#] {
            assert!(matches!(RunConfig::from_json(bad), Err(Error::InvalidInput(_))), "{bad}");
        }
    }

    #[test]
    fn partial_sections_and_round_trip() {
        let c = RunConfig::from_json(
            r#"{"link": {"num_spans": 2, "fiber": {"gamma_per_w_km": 0.0}},
                "evaluate": {"candidate": {"kind": "identity_plus_cdc"}, "distances": [1, 2]},
                "dataset": {"mode": "PURE"}}"#,
        )
        .unwrap();
        assert_eq!(c.link.fiber.span_length_km, 80.0);
        assert_eq!(c.link.fiber.gamma_per_w_km, 0.0);
        assert_eq!(c.evaluate.candidate, CandidateModel::IdentityPlusCdc);
        assert_eq!(c.collect_options().mode, WindowMode::Pure);
        assert_eq!(RunConfig::from_json(&c.to_json().unwrap()).unwrap(), c);
    }

    #[test]
    fn same_seed_gives_same_link() {
        let c = RunConfig::default();
        assert_eq!(c.link(), c.link());
        let other = RunConfig { prng: PrngSpec::philox(12, 0), ..RunConfig::default() };
        assert_ne!(c.link().spans[0].edfa.ase_seed, other.link().spans[0].edfa.ase_seed);
    }
}
