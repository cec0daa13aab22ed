//! Run configuration for the `fodsid` executable.
//!
//! A JSON document with one section per subcommand. Every key has a
//! default, and unknown keys are rejected so misspellings fail loudly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::certify::{BoundConstants, CampaignConfig, CampaignSimulator};
use crate::error::{Error, Result};
use crate::forecast::{ForecastOptions, LoadOptions};
use crate::frac::A0Convention;
use crate::ident::{OlsOptions, Padding};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub format_version: u32,
    /// System description JSON.
    pub system: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Root of all randomness.
    pub master_seed: u64,
    /// Worker cap; available parallelism when absent.
    pub threads: Option<usize>,
    /// Treat a degenerate (rank-deficient) fit as fatal.
    pub strict: bool,
    /// Overwrite existing outputs.
    pub force: bool,
    pub a0_convention: A0Convention,
    pub constants: BoundConstants,
    pub simulate: SimulateSection,
    pub identify: IdentifySection,
    pub certify: CertifySection,
    pub montecarlo: MontecarloSection,
    pub forecast: ForecastSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            format_version: FORMAT_VERSION,
            system: None,
            out_dir: PathBuf::from("out"),
            master_seed: 0,
            threads: None,
            strict: false,
            force: false,
            a0_convention: A0Convention::PlusAlpha,
            constants: BoundConstants::default(),
            simulate: SimulateSection::default(),
            identify: IdentifySection::default(),
            certify: CertifySection::default(),
            montecarlo: MontecarloSection::default(),
            forecast: ForecastSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimGenerator {
    #[default]
    Exact,
    Augmented,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    #[serde(rename = "K")]
    pub horizon: usize,
    /// All ones when absent.
    pub x0: Option<Vec<f64>>,
    pub generator: SimGenerator,
    /// Truncation for the augmented generator.
    pub p: usize,
    /// Input excitation scale, used when the system has `B`.
    pub sigma_u: f64,
    pub output: String,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            horizon: 200,
            x0: None,
            generator: SimGenerator::Exact,
            p: 2,
            sigma_u: 1.0,
            output: "trajectory.csv".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentifySection {
    /// Trajectory CSV; `<out_dir>/trajectory.csv` when absent.
    pub trajectory: Option<PathBuf>,
    pub p: usize,
    pub structured: bool,
    pub padding: Padding,
    /// Regress with the known input channel when the trajectory has inputs
    /// and the system has `B`.
    pub use_inputs: bool,
    pub output: String,
}

impl Default for IdentifySection {
    fn default() -> Self {
        IdentifySection {
            trajectory: None,
            p: 2,
            structured: false,
            padding: Padding::Zero,
            use_inputs: true,
            output: "estimate.json".into(),
        }
    }
}

impl IdentifySection {
    pub fn ols_options(&self) -> OlsOptions {
        OlsOptions {
            structured: self.structured,
            padding: self.padding,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifySection {
    pub p: usize,
    #[serde(rename = "K")]
    pub big_k: usize,
    /// Small-ball horizon; the smallest `k >= d` meeting burn-in when absent.
    pub k: Option<usize>,
    pub delta: f64,
    /// Evaluate the input-excited bound with this input scale.
    pub sigma_u: Option<f64>,
    pub output: String,
}

impl Default for CertifySection {
    fn default() -> Self {
        CertifySection {
            p: 2,
            big_k: 2000,
            k: None,
            delta: 0.1,
            sigma_u: None,
            output: "certificate.json".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MontecarloSection {
    pub p: usize,
    #[serde(rename = "K_list")]
    pub k_list: Vec<usize>,
    pub trials: usize,
    pub delta: f64,
    pub x0: Option<Vec<f64>>,
    pub sigma_u: Option<f64>,
    pub simulator: CampaignSimulator,
    pub ols: OlsOptions,
    pub output: String,
}

impl Default for MontecarloSection {
    fn default() -> Self {
        let c = CampaignConfig::default();
        MontecarloSection {
            p: c.p,
            k_list: c.k_list,
            trials: c.trials,
            delta: c.delta,
            x0: None,
            sigma_u: None,
            simulator: c.simulator,
            ols: c.ols,
            output: "campaign.csv".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastSection {
    /// Input series CSV.
    pub input: Option<PathBuf>,
    pub load: LoadOptions,
    /// Per-channel orders; 0.5 for every channel when absent.
    pub alpha: Option<Vec<f64>>,
    /// Truncation; `window_size - 2` when absent.
    pub p: Option<usize>,
    pub window_size: usize,
    pub window_sizes: Vec<usize>,
    pub options: ForecastOptions,
    pub predictions_output: String,
    pub sweep_output: String,
}

impl Default for ForecastSection {
    fn default() -> Self {
        ForecastSection {
            input: None,
            load: LoadOptions::default(),
            alpha: None,
            p: None,
            window_size: 10,
            window_sizes: vec![10, 15, 25, 30],
            options: ForecastOptions::default(),
            predictions_output: "predictions.csv".into(),
            sweep_output: "sweep.csv".into(),
        }
    }
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| Error::config(format!("invalid config: {e}")))?;
        if cfg.format_version != FORMAT_VERSION {
            return Err(Error::config(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                cfg.format_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_identity() {
        let mut cfg = RunConfig {
            master_seed: 99,
            ..RunConfig::default()
        };
        cfg.forecast.alpha = Some(vec![0.3, 0.4]);
        cfg.montecarlo.sigma_u = Some(0.5);
        cfg.certify.k = Some(12);
        let text = serde_json::to_string(&cfg).unwrap();
        let back = RunConfig::from_json_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
    }

    #[test]
    fn empty_document_is_all_defaults() {
        assert_eq!(
            RunConfig::from_json_str("{}").unwrap(),
            RunConfig::default()
        );
    }

    #[test]
    fn unknown_keys_rejected() {
        for bad in [
            r#"{"master_sed": 1}"#,
            r#"{"simulate": {"horizon": 5}}"#,
            r#"{"constants": {"C": 5}}"#,
            r#"{"forecast": {"options": {"slide": true}}}"#,
        ] {
            assert!(
                matches!(RunConfig::from_json_str(bad), Err(Error::Config(_))),
                "{bad}"
            );
        }
        assert!(RunConfig::from_json_str(r#"{"format_version": 7}"#).is_err());
    }

    #[test]
    fn constants_keys() {
        let cfg = RunConfig::from_json_str(
            r#"{"constants": {"C_const": 1.5, "c_const": 2.0, "gramian_index": "half_k", "sigma_in_C": false}}"#,
        )
        .unwrap();
        assert_eq!(cfg.constants.big_c, 1.5);
        assert_eq!(cfg.constants.small_c, 2.0);
        assert!(!cfg.constants.sigma_in_c);
    }
}
