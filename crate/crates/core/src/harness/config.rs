use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ensembles::{MeasurementBasis, DEFAULT_BUDGET};
use crate::error::{invalid, Error, Result};
use crate::linalg::diag;
use crate::sectors::{product_state_charge_distribution, theta_state_excitations, ChargeDistribution};
use crate::simulator::{haar_random_sector_state, prepare_bitstring_state, prepare_theta_state, tile_pattern, StateVector};
use crate::targets::{TargetMethod, TargetSpec};

pub const DEFAULT_REALIZATIONS: usize = 32;
pub const DEFAULT_MC_SAMPLES: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialState {
    Theta { theta: f64 },
    /// A bit pattern repeated to fill the chain.
    Bits { pattern: String },
    HaarSector { q0: usize },
}

impl InitialState {
    pub fn prepare<R: rand::Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<StateVector> {
        match self {
            InitialState::Theta { theta } => prepare_theta_state(n, *theta),
            InitialState::Bits { pattern } => prepare_bitstring_state(&tile_pattern(pattern, n)?),
            InitialState::HaarSector { q0 } => haar_random_sector_state(n, *q0, rng),
        }
    }

    /// Charge distribution, a constant of the dynamics.
    pub fn charge_distribution(&self, n: usize) -> Result<ChargeDistribution> {
        match self {
            InitialState::Theta { theta } => {
                if !(0.0..std::f64::consts::FRAC_PI_2).contains(theta) {
                    return Err(invalid(format!("theta {theta} outside [0, pi/2)")));
                }
                product_state_charge_distribution(&theta_state_excitations(n, *theta))
            }
            InitialState::Bits { pattern } => {
                let bits = tile_pattern(pattern, n)?;
                ChargeDistribution::definite(n, bits.chars().filter(|&c| c == '1').count())
            }
            InitialState::HaarSector { q0 } => ChargeDistribution::definite(n, *q0),
        }
    }

    pub fn label(&self) -> String {
        match self {
            InitialState::Theta { theta } => format!("theta={theta}"),
            InitialState::Bits { pattern } => format!("bits={pattern}"),
            InitialState::HaarSector { q0 } => format!("haar_sector={q0}"),
        }
    }
}

/// Target as written in a config file. Charges left out are taken from the
/// initial state: its definite charge, or else its mean charge rounded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetConfig {
    Haar,
    SectorHaar { q_a: usize },
    DirectSum { q0: Option<usize> },
    Gse,
    FiniteNScrooge { q0: Option<usize> },
    ReplicaZ,
    /// Scrooge ensemble of a diagonal density matrix.
    ScroogeDiagonal { diagonal: Vec<f64> },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMethodConfig {
    #[default]
    Analytic,
    Mc,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    #[default]
    Exponential,
    Power,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub n_a: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    pub initial_state: InitialState,
    #[serde(default = "default_basis")]
    pub basis: MeasurementBasis,
    pub targets: Vec<TargetConfig>,
    /// Defaults to `4 N`.
    #[serde(default)]
    pub t_max: Option<usize>,
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    #[serde(default)]
    pub seed: u64,
    /// Inclusive time range; defaults to the last third of the series.
    #[serde(default)]
    pub plateau_window: Option<(usize, usize)>,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    #[serde(default)]
    pub target_method: TargetMethodConfig,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default)]
    pub fit: FitKind,
}

fn default_k() -> usize {
    2
}
fn default_basis() -> MeasurementBasis {
    MeasurementBasis::Z
}
fn default_realizations() -> usize {
    DEFAULT_REALIZATIONS
}
fn default_mc_samples() -> usize {
    DEFAULT_MC_SAMPLES
}
fn default_budget() -> usize {
    DEFAULT_BUDGET
}

impl ExperimentConfig {
    pub fn new(n: usize, n_a: usize, k: usize, initial_state: InitialState, basis: MeasurementBasis, targets: Vec<TargetConfig>) -> Self {
        Self {
            n,
            n_a,
            k,
            initial_state,
            basis,
            targets,
            t_max: None,
            realizations: DEFAULT_REALIZATIONS,
            seed: 0,
            plateau_window: None,
            mc_samples: DEFAULT_MC_SAMPLES,
            target_method: TargetMethodConfig::Analytic,
            budget: DEFAULT_BUDGET,
            fit: FitKind::Exponential,
        }
    }

    pub fn t_max(&self) -> usize {
        self.t_max.unwrap_or(4 * self.n)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n_a >= self.n {
            return Err(invalid(format!("need 0 <= n_a < n, got n={}, n_a={}", self.n, self.n_a)));
        }
        if self.k == 0 {
            return Err(invalid("k must be at least 1"));
        }
        if self.realizations == 0 {
            return Err(invalid("realizations must be positive"));
        }
        if self.targets.is_empty() {
            return Err(invalid("at least one target is required"));
        }
        if self.n > 30 {
            return Err(invalid(format!("n={} is beyond dense simulation", self.n)));
        }
        let dim = (1usize << self.n_a).checked_pow(self.k as u32).unwrap_or(usize::MAX);
        if dim > self.budget {
            return Err(Error::BudgetExceeded { required: dim, budget: self.budget });
        }
        self.basis.bath_axes(self.n - self.n_a)?;
        self.initial_state.charge_distribution(self.n)?;
        for t in &self.targets {
            self.target_spec(t)?;
        }
        Ok(())
    }

    fn inferred_charge(&self, explicit: Option<usize>) -> Result<usize> {
        if let Some(q) = explicit {
            return Ok(q);
        }
        let p = self.initial_state.charge_distribution(self.n)?;
        Ok(p.definite_charge().unwrap_or_else(|| p.mean().round() as usize))
    }

    pub fn target_spec(&self, target: &TargetConfig) -> Result<TargetSpec> {
        Ok(match target {
            TargetConfig::Haar => TargetSpec::Haar,
            TargetConfig::SectorHaar { q_a } => TargetSpec::SectorHaar { q_a: *q_a },
            TargetConfig::DirectSum { q0 } => TargetSpec::DirectSum { q0: self.inferred_charge(*q0)? },
            TargetConfig::FiniteNScrooge { q0 } => TargetSpec::FiniteNScrooge { q0: self.inferred_charge(*q0)? },
            TargetConfig::Gse => TargetSpec::Gse { p: self.initial_state.charge_distribution(self.n)? },
            TargetConfig::ReplicaZ => TargetSpec::ReplicaZ { p: self.initial_state.charge_distribution(self.n)? },
            TargetConfig::ScroogeDiagonal { diagonal } => {
                if diagonal.len() != 1 << self.n_a {
                    return Err(Error::DimensionMismatch(diagonal.len(), 1 << self.n_a));
                }
                TargetSpec::Scrooge { rho: diag(diagonal) }
            }
        })
    }

    pub fn target_method(&self) -> TargetMethod {
        match self.target_method {
            TargetMethodConfig::Analytic => TargetMethod::Analytic,
            TargetMethodConfig::Mc => TargetMethod::MonteCarlo {
                samples: self.mc_samples,
                seed: crate::rng::derive_seed(self.seed, &[crate::rng::domain::TARGET_MC]),
            },
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical JSON encoding, as hex.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::BlochAxis;

    fn sample() -> ExperimentConfig {
        let mut c = ExperimentConfig::new(
            10,
            2,
            2,
            InitialState::Theta { theta: std::f64::consts::PI / 20.0 },
            MeasurementBasis::Axes(vec![BlochAxis { polar: 0.3, azimuth: 1.1 }]),
            vec![TargetConfig::Gse, TargetConfig::Haar, TargetConfig::DirectSum { q0: Some(5) }],
        );
        c.plateau_window = Some((20, 40));
        c.seed = 99;
        c
    }

    #[test]
    fn toml_round_trip() {
        let c = sample();
        let text = c.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), c);

        let mut bits = ExperimentConfig::new(8, 2, 3, InitialState::Bits { pattern: "0001".into() }, MeasurementBasis::X, vec![TargetConfig::FiniteNScrooge { q0: None }]);
        bits.t_max = Some(5);
        bits.target_method = TargetMethodConfig::Mc;
        assert_eq!(ExperimentConfig::from_toml(&bits.to_toml().unwrap()).unwrap(), bits);
    }

    #[test]
    fn minimal_file_uses_defaults() {
        let text = r#"
            n = 8
            n_a = 2
            initial_state = { kind = "bits", pattern = "01" }
            targets = [{ kind = "direct_sum" }]
        "#;
        let c = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(c.k, 2);
        assert_eq!(c.t_max(), 32);
        assert_eq!(c.realizations, 32);
        assert_eq!(c.basis, MeasurementBasis::Z);
        c.validate().unwrap();
        assert!(matches!(c.target_spec(&c.targets[0]).unwrap(), TargetSpec::DirectSum { q0: 4 }));
        assert!(ExperimentConfig::from_toml("n = 8\nbogus = 1").is_err());
    }

    #[test]
    fn validation_errors() {
        let mut c = sample();
        c.n_a = 10;
        assert!(c.validate().is_err());
        let mut c = sample();
        c.initial_state = InitialState::Theta { theta: 2.0 };
        assert!(c.validate().is_err());
        let mut c = sample();
        c.k = 7;
        assert!(matches!(c.validate(), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn charge_inferred_from_mean() {
        // alternating theta states have mean charge N/2 for every angle
        let mut c = sample();
        c.targets = vec![TargetConfig::DirectSum { q0: None }];
        assert!(matches!(c.target_spec(&c.targets[0]).unwrap(), TargetSpec::DirectSum { q0: 5 }));
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = sample();
        let mut b = sample();
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.seed += 1;
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
    }
}
