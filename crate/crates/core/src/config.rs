//! TOML experiment configuration. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{Axis, Cell, CiMethod, ExperimentSpec, Pairing, Protocol};
use crate::policies::PolicySpec;
use crate::preprocess::dataset::{read_csv, read_schema_file};
use crate::sim::CollectionScenario;
use crate::world::generator::generator_schema;
use crate::world::{generate_reference_dataset, ConversionScenario, GeneratorConfig, ReferencePool, WorldConfig};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Schema file; defaults to the built-in generator schema.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schema: Option<PathBuf>,
    /// Reference dataset CSV; when absent the pool is generated.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    pub generator: GeneratorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CollectionSection {
    pub scenario: CollectionScenario,
    pub days: u32,
}

impl Default for CollectionSection {
    fn default() -> Self {
        CollectionSection {
            scenario: CollectionScenario::Observational,
            days: 90,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub horizon_days: u32,
    pub leads_per_day: usize,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            horizon_days: 365,
            leads_per_day: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub runs: usize,
    pub seed: u64,
    /// Parallel worker cap; all cores when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub out_dir: PathBuf,
    pub axes: Vec<Axis>,
    pub delay_lambdas: Vec<f64>,
    pub ci_method: CiMethod,
    pub bootstrap_resamples: usize,
    pub pairing: Pairing,
    pub svg: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            runs: 100,
            seed: 2020,
            workers: None,
            out_dir: PathBuf::from("results"),
            axes: Axis::ALL.to_vec(),
            delay_lambdas: vec![0.0, 0.5, 1.0],
            ci_method: CiMethod::Normal,
            bootstrap_resamples: 2000,
            pairing: Pairing::Paired,
            svg: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub data: DataSection,
    pub world: WorldConfig,
    pub collection: CollectionSection,
    pub simulation: SimulationSection,
    pub experiment: ExperimentSection,
    pub policies: Vec<PolicySpec>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            data: DataSection::default(),
            world: WorldConfig::default(),
            collection: CollectionSection::default(),
            simulation: SimulationSection::default(),
            experiment: ExperimentSection::default(),
            policies: PolicySpec::default_list(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub workers: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub collection: Option<CollectionScenario>,
    pub conversion: Option<ConversionScenario>,
    pub delay_lambda: Option<f64>,
}

impl Config {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Config> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(format!("{origin}: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Internal(format!("config serialization: {e}")))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.experiment.seed = s;
        }
        if let Some(r) = o.runs {
            self.experiment.runs = r;
        }
        if let Some(w) = o.workers {
            self.experiment.workers = Some(w);
        }
        if let Some(d) = &o.out_dir {
            self.experiment.out_dir = d.clone();
        }
        if let Some(c) = o.collection {
            self.collection.scenario = c;
        }
        if let Some(c) = o.conversion {
            self.world.conversion = c;
        }
        if let Some(l) = o.delay_lambda {
            self.world.delay_lambda = l;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.data.generator.validate()?;
        self.world.validate()?;
        if self.simulation.horizon_days < 1 {
            return Err(Error::config("simulation.horizon_days must be at least 1"));
        }
        if self.experiment.workers == Some(0) {
            return Err(Error::config("experiment.workers must be at least 1"));
        }
        self.experiment_spec().validate()
    }

    pub fn protocol(&self) -> Protocol {
        Protocol {
            collection_days: self.collection.days,
            horizon_days: self.simulation.horizon_days,
            leads_per_day: self.simulation.leads_per_day,
        }
    }

    /// The experiment grid this config describes. The rule-based baseline
    /// is added when the policy list omits it.
    pub fn experiment_spec(&self) -> ExperimentSpec {
        let e = &self.experiment;
        ExperimentSpec {
            base_cell: Cell {
                collection: self.collection.scenario,
                conversion: self.world.conversion,
                delay_lambda: self.world.delay_lambda,
            },
            axes: e.axes.clone(),
            delay_lambdas: e.delay_lambdas.clone(),
            policies: self.policies.clone(),
            runs: e.runs,
            base_seed: e.seed,
            protocol: self.protocol(),
            world: self.world.clone(),
            ci_method: e.ci_method,
            bootstrap_resamples: e.bootstrap_resamples,
            pairing: e.pairing,
        }
        .with_baseline()
    }

    /// The reference pool: read from `data.dataset` or generated.
    pub fn load_pool(&self) -> Result<ReferencePool> {
        let schema = match &self.data.schema {
            Some(p) => read_schema_file(p)?,
            None => generator_schema(),
        };
        match &self.data.dataset {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let rows = read_csv(&schema, &text, &path.display().to_string())?;
                ReferencePool::new(schema, rows)
            }
            None => {
                if self.data.schema.is_some() {
                    return Err(Error::config("data.schema requires data.dataset"));
                }
                generate_reference_dataset(&self.data.generator)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_protocol() {
        let c = Config::from_toml_str("", "mem").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.collection.days, 90);
        assert_eq!(c.simulation.horizon_days, 365);
        assert_eq!(c.experiment.runs, 100);
        assert_eq!(c.world.k, 10);
        let eps: Vec<f64> = c
            .policies
            .iter()
            .filter(|p| p.kind == crate::policies::PolicyKind::EpsilonGreedy)
            .map(|p| p.epsilon)
            .collect();
        assert_eq!(eps, vec![0.05, 0.1]);
        assert!(c.policies.iter().all(|p| p.retrain_interval_days == 90));
    }

    #[test]
    fn round_trip() {
        let mut c = Config::default();
        c.experiment.workers = Some(3);
        c.world.delay_lambda = 0.5;
        c.policies[1].name = Some("ucb".into());
        let text = c.to_toml_string().unwrap();
        assert_eq!(Config::from_toml_str(&text, "mem").unwrap(), c);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = Config::from_toml_str("[world]\nkk = 3\n", "cfg.toml").unwrap_err();
        assert!(err.to_string().contains("kk"), "{err}");
        assert!(Config::from_toml_str("[bogus]\n", "cfg.toml").is_err());
        assert!(Config::from_toml_str("[[policies]]\nkind = \"lin_ucb\"\nalfa = 1\n", "c").is_err());
    }

    #[test]
    fn baseline_added_and_overrides_applied() {
        let mut c = Config::from_toml_str("[[policies]]\nkind = \"lin_ucb\"\n", "c").unwrap();
        c.apply(&Overrides {
            runs: Some(4),
            collection: Some(CollectionScenario::FullyRandomized),
            delay_lambda: Some(0.0),
            ..Overrides::default()
        });
        let spec = c.experiment_spec();
        assert_eq!(spec.policies.len(), 2);
        assert_eq!(spec.runs, 4);
        assert_eq!(spec.base_cell.collection, CollectionScenario::FullyRandomized);
        assert_eq!(spec.base_cell.delay_lambda, 0.0);
    }

    #[test]
    fn bad_values_rejected() {
        assert!(Config::from_toml_str("[experiment]\nruns = 1\n", "c").is_err());
        assert!(Config::from_toml_str("[world]\ndelay_lambda = -1.0\n", "c").is_err());
        assert!(Config::from_toml_str("[collection]\nscenario = \"sometimes\"\n", "c").is_err());
    }
}
