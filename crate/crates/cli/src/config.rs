//! Experiment configuration: TOML with dotted section keys.
//!
//! Unknown keys are rejected. Paths are resolved against the directory of
//! the config file.

use std::path::{Path, PathBuf};

use amenable_core::shift::{Bernoulli, Observable};
use amenable_core::{group, FolnerSequence, GroupModel};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Mandatory for any stochastic run; `--seed` overrides it.
    pub seed: Option<u64>,
    #[serde(default)]
    pub group: GroupSection,
    pub measure: Option<MeasureSection>,
    pub observable: Option<ObservableSection>,
    pub folner: Option<FolnerSection>,
    pub tile: Option<TileSection>,
    pub entropy: Option<EntropySection>,
    pub ldp: Option<LdpSection>,
    pub thm3: Option<Thm3Section>,
    pub verify: Option<VerifySection>,
    /// Not part of the config hash.
    pub output: Option<OutputSection>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSection {
    /// `zd:<d>`, `heis3` or `lamplighter`.
    #[serde(default = "default_model")]
    pub model: String,
    /// `boxes` or `explicit`.
    #[serde(default = "default_rule")]
    pub folner: String,
    /// Subset files for the explicit rule, one per index starting at 1.
    #[serde(default)]
    pub sets: Vec<PathBuf>,
    /// Largest admissible `|F_n|`.
    pub cap: Option<u64>,
}

impl Default for GroupSection {
    fn default() -> Self {
        GroupSection {
            model: default_model(),
            folner: default_rule(),
            sets: Vec::new(),
            cap: None,
        }
    }
}

fn default_model() -> String {
    "zd:1".into()
}

fn default_rule() -> String {
    "boxes".into()
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSection {
    pub probs: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(untagged)]
pub enum PotentialSpec {
    Named(String),
    Values(Vec<f64>),
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableSection {
    /// Values of `φ(x) = f(x_e)` per symbol; defaults to the symbol itself.
    pub phi: Option<Vec<f64>>,
    /// `"canonical"` or per-symbol values; defaults to canonical.
    pub psi: Option<PotentialSpec>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FolnerSection {
    pub n_max: u64,
    #[serde(default)]
    pub temperedness: bool,
    #[serde(default)]
    pub growth: bool,
    /// Element budget for the temperedness scan.
    #[serde(default = "default_tempered_budget")]
    pub max_elements: u64,
}

fn default_tempered_budget() -> u64 {
    1 << 22
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TileSection {
    pub epsilon: f64,
    /// Target `[0,s_1)×…×[0,s_d)`.
    pub target_box: Option<Vec<i64>>,
    pub target_file: Option<PathBuf>,
    /// Tile shapes as boxes.
    pub tile_boxes: Option<Vec<Vec<i64>>>,
    /// Tile shapes as Følner indices.
    pub tile_indices: Option<Vec<u64>>,
    /// Also report `k` and `δ` for this ε.
    #[serde(default)]
    pub parameters: bool,
    /// Separation set for core extraction, as element strings.
    pub core_window: Option<Vec<String>>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "one_f")]
    pub core_m: f64,
    #[serde(default = "one_u")]
    pub core_l: u64,
}

fn default_gamma() -> f64 {
    0.1
}

fn one_f() -> f64 {
    1.0
}

fn one_u() -> u64 {
    1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntropyKind {
    Katok,
    Topological,
    Smb,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    Full,
    GoldenMean,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EntropySection {
    pub kind: EntropyKind,
    #[serde(default = "one_u")]
    pub n_min: u64,
    pub n_max: u64,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    /// Shift for the topological curve.
    pub system: Option<SystemKind>,
    /// Sampled configurations for the SMB trace.
    #[serde(default = "one_u")]
    pub samples: u64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LdpSection {
    pub c: f64,
    #[serde(default = "one_u")]
    pub n_min: u64,
    pub n_max: u64,
    /// Monte Carlo samples for indices beyond exact reach; 0 skips them.
    #[serde(default)]
    pub samples: u64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Thm3Section {
    pub c: f64,
    pub n: u64,
    /// Product measures `λ_i`.
    pub family: Vec<Vec<f64>>,
    /// Weights `a_i`; uniform when absent.
    pub weights: Option<Vec<f64>>,
    pub epsilon: Option<f64>,
    pub gamma: Option<f64>,
    pub tile_side: Option<i64>,
    pub max_points: Option<usize>,
    pub max_draws: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    pub level: Option<String>,
    pub inject_fault: Option<String>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

/// A parsed config together with where it came from.
pub struct Loaded {
    pub config: Config,
    pub base: PathBuf,
}

impl Loaded {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: Config = toml::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Loaded { config, base })
    }

    pub fn empty() -> Self {
        Loaded {
            config: Config::default(),
            base: PathBuf::new(),
        }
    }

    /// SHA-256 of the effective config, output section excluded.
    pub fn hash(&self) -> String {
        let mut c = self.config.clone();
        c.output = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn model(&self) -> Result<GroupModel, CliError> {
        self.config.group.model.parse().map_err(config_err)
    }

    pub fn sequence(&self) -> Result<FolnerSequence, CliError> {
        let model = self.model()?;
        let g = &self.config.group;
        let seq = match g.folner.as_str() {
            "boxes" => {
                if !g.sets.is_empty() {
                    return Err(CliError::Config("group.sets requires group.folner = \"explicit\"".into()));
                }
                FolnerSequence::boxes(model)
            }
            "explicit" => {
                if g.sets.is_empty() {
                    return Err(CliError::Config("group.folner = \"explicit\" needs group.sets".into()));
                }
                let sets = g
                    .sets
                    .iter()
                    .map(|p| {
                        let path = self.base.join(p);
                        let text = std::fs::read_to_string(&path)
                            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
                        group::parse_subset(model, &text).map_err(config_err)
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                FolnerSequence::explicit(model, sets).map_err(config_err)?
            }
            other => return Err(CliError::Config(format!("unknown Følner rule `{other}` (boxes|explicit)"))),
        };
        Ok(match g.cap {
            Some(cap) => seq.with_cap(cap),
            None => seq,
        })
    }

    pub fn measure(&self) -> Result<Bernoulli, CliError> {
        let m = self
            .config
            .measure
            .as_ref()
            .ok_or_else(|| CliError::Config("missing measure.probs".into()))?;
        Bernoulli::new(m.probs.clone()).map_err(config_err)
    }

    pub fn phi(&self, q: usize) -> Result<Observable, CliError> {
        let values = self
            .config
            .observable
            .as_ref()
            .and_then(|o| o.phi.clone())
            .unwrap_or_else(|| (0..q).map(|a| a as f64).collect());
        if values.len() != q {
            return Err(CliError::Config(format!("observable.phi needs {q} values")));
        }
        Observable::identity_coordinate(self.model()?, values).map_err(config_err)
    }

    pub fn psi(&self, mu: &Bernoulli) -> Result<Observable, CliError> {
        let values = match self.config.observable.as_ref().and_then(|o| o.psi.clone()) {
            None => canonical(mu),
            Some(PotentialSpec::Named(s)) if s == "canonical" => canonical(mu),
            Some(PotentialSpec::Named(s)) => {
                return Err(CliError::Config(format!("unknown potential `{s}` (canonical or a list)")))
            }
            Some(PotentialSpec::Values(v)) => v,
        };
        if values.len() != mu.alphabet() {
            return Err(CliError::Config(format!("observable.psi needs {} values", mu.alphabet())));
        }
        Observable::identity_coordinate(self.model()?, values).map_err(config_err)
    }

    /// The seed, required whenever `stochastic` holds.
    pub fn seed(&self, stochastic: bool, what: &str) -> Result<Option<u64>, CliError> {
        match (self.config.seed, stochastic) {
            (None, true) => Err(CliError::Config(format!("seed is mandatory for {what}"))),
            (s, _) => Ok(s),
        }
    }
}

fn canonical(mu: &Bernoulli) -> Vec<f64> {
    mu.probs().iter().map(|p| -p.ln()).collect()
}

pub fn config_err(e: amenable_core::Error) -> CliError {
    CliError::Config(e.to_string())
}

pub fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
    s.as_ref().ok_or_else(|| CliError::Config(format!("missing [{name}] section")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<Config, toml::de::Error> {
        toml::from_str(s)
    }

    #[test]
    fn dotted_keys_and_defaults() {
        let c = parse("seed = 3\nmeasure.probs = [0.5, 0.5]\nldp.c = 0.7\nldp.n_max = 24\n").unwrap();
        assert_eq!(c.group.model, "zd:1");
        assert_eq!(c.ldp.as_ref().unwrap().samples, 0);
        assert_eq!(c.seed, Some(3));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse("ldp.c = 0.7\nldp.n_max = 4\nldp.bogus = 1\n").is_err());
        assert!(parse("colour = 1\n").is_err());
    }

    #[test]
    fn potential_spec_forms() {
        let c = parse("observable.psi = \"canonical\"\n").unwrap();
        assert!(matches!(c.observable.unwrap().psi, Some(PotentialSpec::Named(_))));
        let c = parse("observable.psi = [0.1, 0.2]\n").unwrap();
        assert!(matches!(c.observable.unwrap().psi, Some(PotentialSpec::Values(_))));
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = Loaded {
            config: parse("seed = 1\n").unwrap(),
            base: PathBuf::new(),
        };
        let b = Loaded {
            config: parse("seed = 1\noutput.dir = \"x\"\n").unwrap(),
            base: PathBuf::new(),
        };
        let c = Loaded {
            config: parse("seed = 2\n").unwrap(),
            base: PathBuf::new(),
        };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }
}
