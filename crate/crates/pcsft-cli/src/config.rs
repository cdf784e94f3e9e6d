//! Experiment configuration: one JSON file per run, fully determining the
//! state, observables, background strength, and sampling parameters.

use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand_chacha::ChaCha12Rng;
use rand_core::SeedableRng;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};
use sha2::{Digest, Sha256};

use pcsft::covariance::auto_epsilon;
use pcsft::hilbert::{random_state, state_from_json};
use pcsft::{BipartiteState, SymOperator};

use crate::{input_error, CmdError, CmdResult};

pub const MIN_SAMPLES: usize = 100;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub state_source: StateSource,
    #[serde(default = "default_observables")]
    pub observables: Vec<ObservableSpec>,
    #[serde(default)]
    pub epsilon: EpsilonSpec,
    pub n_samples: usize,
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_observables() -> Vec<ObservableSpec> {
    vec![ObservableSpec::Builtin("diag".into())]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("pcsft-out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateSource {
    File {
        file: PathBuf,
    },
    Generator {
        dims: [usize; 2],
        seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        schmidt_rank: Option<usize>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObservableSpec {
    /// `"diag"` (alternating +1/-1 diagonal) or `"random"` (seeded symmetric).
    Builtin(String),
    /// Explicit symmetric matrices for both sides.
    Named {
        name: String,
        a1: Vec<Vec<f64>>,
        a2: Vec<Vec<f64>>,
    },
}

/// Background strength: a number or `"auto"` = `eps_star + 0.05`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub enum EpsilonSpec {
    #[default]
    Auto,
    Fixed(f64),
}

impl Serialize for EpsilonSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            EpsilonSpec::Auto => s.serialize_str("auto"),
            EpsilonSpec::Fixed(x) => s.serialize_f64(*x),
        }
    }
}

impl<'de> Deserialize<'de> for EpsilonSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let value = serde_json::Value::deserialize(d)?;
        match &value {
            serde_json::Value::String(s) if s == "auto" => Ok(EpsilonSpec::Auto),
            serde_json::Value::Number(x) => x
                .as_f64()
                .map(EpsilonSpec::Fixed)
                .ok_or_else(|| D::Error::custom("epsilon must be a finite number")),
            _ => Err(D::Error::custom(
                "epsilon must be a number or the string \"auto\"",
            )),
        }
    }
}

impl fmt::Display for EpsilonSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EpsilonSpec::Auto => f.write_str("auto"),
            EpsilonSpec::Fixed(x) => write!(f, "{x}"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> CmdResult<Self> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| input_error(format!("cannot read config {}: {e}", path.display())))?;
        let config: ExperimentConfig = serde_json::from_str(&raw)
            .map_err(|e| input_error(format!("malformed config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> CmdResult<()> {
        if self.n_samples < MIN_SAMPLES {
            return Err(input_error(format!(
                "n_samples must be >= {MIN_SAMPLES}, got {}",
                self.n_samples
            )));
        }
        if let EpsilonSpec::Fixed(x) = self.epsilon {
            if !x.is_finite() || x < 0.0 {
                return Err(input_error(format!(
                    "epsilon must be a finite number >= 0, got {x}"
                )));
            }
        }
        if self.observables.is_empty() {
            return Err(input_error("observables must not be empty".into()));
        }
        Ok(())
    }

    /// Hash of the effective (post-override) configuration; stamped into
    /// every report so a row identifies its run.
    pub fn content_hash(&self) -> String {
        let canonical =
            serde_json::to_string(self).expect("config serialization cannot fail");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn load_state(&self) -> CmdResult<BipartiteState> {
        match &self.state_source {
            StateSource::File { file } => load_state_file(file),
            StateSource::Generator {
                dims,
                seed,
                schmidt_rank,
            } => random_state((dims[0], dims[1]), *seed, *schmidt_rank)
                .map_err(|e| input_error(format!("state generator: {e}"))),
        }
    }

    /// Resolve `"auto"` against the state's minimal background strength.
    pub fn resolve_epsilon(&self, state: &BipartiteState) -> CmdResult<f64> {
        match self.epsilon {
            EpsilonSpec::Fixed(x) => Ok(x),
            EpsilonSpec::Auto => auto_epsilon(state).map_err(CmdError::from_core),
        }
    }

    pub fn build_observables(&self, state: &BipartiteState) -> CmdResult<Vec<ObservablePair>> {
        let (n1, n2) = state.dims();
        let mut pairs = Vec::new();
        for (idx, spec) in self.observables.iter().enumerate() {
            match spec {
                ObservableSpec::Builtin(kind) if kind == "diag" => pairs.push(ObservablePair {
                    name: "diag".into(),
                    a1: alternating_diag(n1),
                    a2: alternating_diag(n2),
                }),
                ObservableSpec::Builtin(kind) if kind == "random" => {
                    let mut rng =
                        ChaCha12Rng::seed_from_u64(self.seed ^ 0xd1ce_0000 ^ idx as u64);
                    pairs.push(ObservablePair {
                        name: format!("random_{idx}"),
                        a1: SymOperator::random(n1, &mut rng),
                        a2: SymOperator::random(n2, &mut rng),
                    });
                }
                ObservableSpec::Builtin(kind) => {
                    return Err(input_error(format!(
                        "unknown built-in observable \"{kind}\" (expected \"diag\" or \"random\")"
                    )));
                }
                ObservableSpec::Named { name, a1, a2 } => {
                    let a1 = parse_observable(a1, n1, name, 1)?;
                    let a2 = parse_observable(a2, n2, name, 2)?;
                    pairs.push(ObservablePair {
                        name: name.clone(),
                        a1,
                        a2,
                    });
                }
            }
        }
        Ok(pairs)
    }
}

#[derive(Debug, Clone)]
pub struct ObservablePair {
    pub name: String,
    pub a1: SymOperator,
    pub a2: SymOperator,
}

/// `diag(1, -1, 1, ...)` truncated to `dim`.
pub fn alternating_diag(dim: usize) -> SymOperator {
    let entries: Vec<f64> = (0..dim).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    SymOperator::from_diagonal(&entries)
}

fn parse_observable(
    rows: &[Vec<f64>],
    expected_dim: usize,
    name: &str,
    side: usize,
) -> CmdResult<SymOperator> {
    if rows.len() != expected_dim || rows.iter().any(|r| r.len() != expected_dim) {
        return Err(input_error(format!(
            "observable \"{name}\" side {side}: expected a {expected_dim}x{expected_dim} matrix"
        )));
    }
    let m = DMatrix::from_fn(expected_dim, expected_dim, |i, j| rows[i][j]);
    SymOperator::new(m)
        .map_err(|e| input_error(format!("observable \"{name}\" side {side}: {e}")))
}

pub fn load_state_file(path: &Path) -> CmdResult<BipartiteState> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| input_error(format!("cannot read state {}: {e}", path.display())))?;
    state_from_json(&raw)
        .map_err(|e| input_error(format!("malformed state {}: {e}", path.display())))
}
