use std::fmt;
use std::path::PathBuf;

use cnnsense::{Dims, Pooling, Upsampling};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    #[value(name = "rip-1d")]
    #[serde(rename = "rip-1d")]
    Rip1d,
    #[value(name = "rip-2d")]
    #[serde(rename = "rip-2d")]
    Rip2d,
    Recover,
    Coherence,
    Iht,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Command::Rip1d => "rip-1d",
            Command::Rip2d => "rip-2d",
            Command::Recover => "recover",
            Command::Coherence => "coherence",
            Command::Iht => "iht",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    pub dims: Dims,
    pub filters: usize,
    pub channels: usize,
    pub filter_len: usize,
    pub input_len: usize,
    pub stride: usize,
    /// Rescale each filter to unit norm before use.
    pub normalize: bool,
    /// Load the bank from an MRIPFB1 file instead of drawing it.
    pub filters_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IhtSettings {
    pub max_iters: usize,
    pub residual_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LassoSettings {
    /// Fixed penalty. When absent, `lambda_scale * ||W x||_inf` is used.
    pub lambda: Option<f64>,
    pub lambda_scale: f64,
    pub max_iters: usize,
    pub objective_tol: f64,
}

/// Fully resolved run configuration. Written to `config.json` in every
/// output directory and printed by `--dump-config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    pub operator: OperatorConfig,
    /// Number of active blocks for `M_k` draws and projections.
    pub k: Option<usize>,
    /// Probability that a pooling region is active (region-sparse draws).
    pub region_fraction: Option<f64>,
    pub pooling: Pooling,
    pub upsampling: Upsampling,
    pub trials: usize,
    pub seed: Option<u64>,
    pub bins: usize,
    pub iht: IhtSettings,
    pub lasso: LassoSettings,
    /// `recover`: whitespace-separated input vector instead of a planted code.
    pub input: Option<PathBuf>,
    /// `recover`: smallest magnitude of the planted nonzeros.
    pub planted_min_magnitude: f64,
    pub out: PathBuf,
}

impl ExperimentConfig {
    pub fn defaults(command: Command) -> Self {
        let one_d = OperatorConfig {
            dims: Dims::One,
            filters: 96,
            channels: 32,
            filter_len: 5,
            input_len: 32,
            stride: 1,
            normalize: false,
            filters_path: None,
        };
        let two_d = OperatorConfig {
            dims: Dims::Two,
            filters: 512,
            channels: 512,
            filter_len: 3,
            input_len: 16,
            stride: 1,
            normalize: false,
            filters_path: None,
        };
        let mut cfg = ExperimentConfig {
            command,
            operator: one_d,
            k: Some(10),
            region_fraction: None,
            pooling: Pooling::FullBlock,
            upsampling: Upsampling::Naive,
            trials: 1000,
            seed: None,
            bins: 50,
            iht: IhtSettings {
                max_iters: 10,
                residual_tol: 0.0,
            },
            lasso: LassoSettings {
                lambda: None,
                lambda_scale: 0.1,
                max_iters: 2000,
                objective_tol: 1e-10,
            },
            input: None,
            planted_min_magnitude: 0.5,
            out: PathBuf::from(format!("runs/{command}")),
        };
        match command {
            Command::Rip1d => {}
            Command::Rip2d => {
                cfg.operator = two_d;
                cfg.k = None;
                cfg.region_fraction = Some(0.239);
                cfg.pooling = Pooling::Regions { size: 2 };
            }
            Command::Recover => {
                cfg.trials = 1;
                cfg.upsampling = Upsampling::Switches;
            }
            Command::Coherence => {
                cfg.operator = OperatorConfig {
                    normalize: true,
                    ..two_d
                };
                cfg.k = None;
                cfg.trials = 1;
            }
            Command::Iht => {
                cfg.upsampling = Upsampling::Switches;
            }
        }
        cfg
    }
}

/// Overlays `patch` onto `base`: objects merge key by key, anything else
/// replaces.
pub fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (key, value) in p {
                match b.get_mut(&key) {
                    Some(slot) => merge(slot, value),
                    None => {
                        b.insert(key, value);
                    }
                }
            }
        }
        (slot, value) => *slot = value,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        for c in [
            Command::Rip1d,
            Command::Rip2d,
            Command::Recover,
            Command::Coherence,
            Command::Iht,
        ] {
            let cfg = ExperimentConfig::defaults(c);
            let text = serde_json::to_string_pretty(&cfg).unwrap();
            let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn merge_is_recursive() {
        let mut base = serde_json::json!({"a": 1, "b": {"c": 2, "d": 3}});
        merge(&mut base, serde_json::json!({"b": {"d": 4}, "e": null}));
        assert_eq!(base, serde_json::json!({"a": 1, "b": {"c": 2, "d": 4}, "e": null}));
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut v = serde_json::to_value(ExperimentConfig::defaults(Command::Iht)).unwrap();
        merge(&mut v, serde_json::json!({"operator": {"colour": 1}}));
        assert!(serde_json::from_value::<ExperimentConfig>(v).is_err());
    }
}
