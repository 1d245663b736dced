//! Run configuration files.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use idg_core::{
    generate_synthetic, load_dataset, split_dataset, DUPolicy, DataFormat, Dataset, Distance,
    SplitDataset, StrategyConfig, StrategyKind, SyntheticSpec,
};
use serde::{Deserialize, Serialize};

/// Either a dataset file or a synthetic generator spec, never both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSource {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<DataFormat>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
}

impl DatasetSource {
    fn validate(&self) -> Result<()> {
        match (&self.path, &self.synthetic) {
            (Some(_), None) => Ok(()),
            (None, Some(_)) => {
                ensure!(
                    self.format.is_none(),
                    "dataset.format only applies to dataset.path"
                );
                Ok(())
            }
            _ => bail!("dataset needs exactly one of `path` or `synthetic`"),
        }
    }

    /// Format from the config, else from the file extension.
    pub fn resolved_format(&self) -> DataFormat {
        if let Some(f) = self.format {
            return f;
        }
        match self
            .path
            .as_deref()
            .and_then(Path::extension)
            .and_then(|e| e.to_str())
        {
            Some("csv") => DataFormat::Csv,
            _ => DataFormat::Binary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train_n: usize,
    pub val_n: usize,
    pub test_n: usize,
    #[serde(default)]
    pub seed: u64,
}

/// DU policy as written in a config file. `u_target` may be left out when
/// the target comes from the full-data accuracy instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    #[serde(default = "one")]
    pub charge_per_query: f64,
    pub t_max: u32,
    #[serde(default = "one")]
    pub eps_per_feature: f64,
    #[serde(default)]
    pub u_target: Option<f64>,
}

fn one() -> f64 {
    1.0
}

/// Axes swept by `grid`. An absent axis keeps the base config's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default)]
    pub t_max: Vec<u32>,
    #[serde(default)]
    pub eps_per_feature: Vec<f64>,
    #[serde(default)]
    pub charge_per_query: Vec<f64>,
    #[serde(default)]
    pub kind: Vec<StrategyKind>,
    #[serde(default)]
    pub exploration_c: Vec<f64>,
    #[serde(default)]
    pub fraction: Vec<f64>,
    #[serde(default)]
    pub bootstrap_iters: Vec<u32>,
}

fn default_k() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    pub split: SplitSpec,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub distance: Distance,
    pub du_policy: PolicySpec,
    /// Use the kNN accuracy of the full noise-free training set on the
    /// validation set as the utility target.
    #[serde(default)]
    pub u_target_from_full_data: bool,
    pub strategy: StrategyConfig,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        // Relative dataset paths are resolved against the config file.
        if let (Some(p), Some(dir)) = (&config.dataset.path, path.parent()) {
            if p.is_relative() {
                config.dataset.path = Some(dir.join(p));
            }
        }
        Ok(config)
    }

    /// Checks everything that can be checked without loading data.
    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        ensure!(self.k >= 1, "k must be at least 1");
        ensure!(self.split.train_n >= 1, "split.train_n must be at least 1");
        ensure!(self.split.val_n >= 1, "split.val_n must be at least 1");
        ensure!(!self.seeds.is_empty(), "seeds must not be empty");
        match (self.du_policy.u_target, self.u_target_from_full_data) {
            (Some(_), true) => {
                bail!("set either du_policy.u_target or u_target_from_full_data, not both")
            }
            (None, false) => {
                bail!("du_policy.u_target is required unless u_target_from_full_data is set")
            }
            _ => {}
        }
        self.policy(0.0)?.validate()?;
        self.strategy.validate()?;
        if let Some(grid) = &self.grid {
            for p in self.du_grid(grid, 0.0) {
                p.validate()?;
            }
            for s in self.strategy_grid(grid) {
                s.validate()?;
            }
        }
        Ok(())
    }

    /// The base DU policy, with `full_utility` standing in for a derived target.
    pub fn policy(&self, full_utility: f64) -> Result<DUPolicy> {
        let p = &self.du_policy;
        Ok(DUPolicy {
            charge_per_query: p.charge_per_query,
            t_max: p.t_max,
            eps_per_feature: p.eps_per_feature,
            u_target: p.u_target.unwrap_or(full_utility),
        })
    }

    pub fn du_grid(&self, grid: &GridSpec, full_utility: f64) -> Vec<DUPolicy> {
        let base = self
            .policy(full_utility)
            .expect("policy construction is infallible");
        let t_max = axis(&grid.t_max, base.t_max);
        let eps = axis(&grid.eps_per_feature, base.eps_per_feature);
        let charge = axis(&grid.charge_per_query, base.charge_per_query);
        let mut out = Vec::new();
        for &t in &t_max {
            for &e in &eps {
                for &c in &charge {
                    out.push(DUPolicy {
                        charge_per_query: c,
                        t_max: t,
                        eps_per_feature: e,
                        u_target: base.u_target,
                    });
                }
            }
        }
        out
    }

    pub fn strategy_grid(&self, grid: &GridSpec) -> Vec<StrategyConfig> {
        let base = &self.strategy;
        let mut out = Vec::new();
        for &kind in &axis(&grid.kind, base.kind) {
            for &c in &axis(&grid.exploration_c, base.exploration_c) {
                for &f in &axis(&grid.fraction, base.fraction) {
                    for &b in &axis(&grid.bootstrap_iters, base.bootstrap_iters) {
                        let mut s = base.clone();
                        s.kind = kind;
                        s.exploration_c = c;
                        s.fraction = f;
                        s.bootstrap_iters = b;
                        out.push(s);
                    }
                }
            }
        }
        out
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        if let Some(spec) = &self.dataset.synthetic {
            return Ok(generate_synthetic(spec)?);
        }
        let path = self.dataset.path.as_ref().expect("validated");
        load_dataset(path, self.dataset.resolved_format())
            .with_context(|| format!("loading dataset {}", path.display()))
    }

    pub fn build_split(&self) -> Result<SplitDataset> {
        let data = self.load_dataset()?;
        let s = &self.split;
        Ok(split_dataset(&data, s.train_n, s.val_n, s.test_n, s.seed)?)
    }
}

fn axis<T: Copy>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> serde_json::Value {
        serde_json::json!({
            "dataset": {"synthetic": {"n": 40, "d": 2, "num_classes": 2, "cluster_spread": 0.3, "label_noise": 0.0, "seed": 1}},
            "split": {"train_n": 20, "val_n": 10, "test_n": 10},
            "du_policy": {"t_max": 5, "u_target": 0.9},
            "strategy": {"kind": "random", "fraction": 0.5},
            "seeds": [0, 1]
        })
    }

    fn parse(v: serde_json::Value) -> RunConfig {
        serde_json::from_value(v).unwrap()
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let c = parse(base());
        c.validate().unwrap();
        assert_eq!(c.k, 5);
        assert_eq!(c.distance, Distance::L2);
        assert_eq!(c.policy(0.0).unwrap().eps_per_feature, 1.0);
    }

    #[test]
    fn both_dataset_sources_rejected() {
        let mut v = base();
        v["dataset"]["path"] = "x.bin".into();
        assert!(parse(v).validate().is_err());
        let mut v = base();
        v["dataset"] = serde_json::json!({});
        assert!(parse(v).validate().is_err());
    }

    #[test]
    fn target_must_come_from_exactly_one_place() {
        let mut v = base();
        v["u_target_from_full_data"] = true.into();
        assert!(parse(v.clone()).validate().is_err());
        v["du_policy"].as_object_mut().unwrap().remove("u_target");
        let c = parse(v);
        c.validate().unwrap();
        assert_eq!(c.policy(0.7).unwrap().u_target, 0.7);
    }

    #[test]
    fn unknown_fields_are_errors() {
        let mut v = base();
        v["seedz"] = serde_json::json!([1]);
        assert!(serde_json::from_value::<RunConfig>(v).is_err());
    }

    #[test]
    fn grid_axes_multiply() {
        let mut v = base();
        v["grid"] = serde_json::json!({"t_max": [10, 20, 50], "exploration_c": [0.0, 2.0]});
        let c = parse(v);
        let g = c.grid.clone().unwrap();
        let du = c.du_grid(&g, 0.0);
        assert_eq!(
            du.iter().map(|p| p.t_max).collect::<Vec<_>>(),
            vec![10, 20, 50]
        );
        let st = c.strategy_grid(&g);
        assert_eq!(st.len(), 2);
        assert!(st.iter().all(|s| s.fraction == 0.5));
    }

    #[test]
    fn invalid_grid_value_rejected() {
        let mut v = base();
        v["grid"] = serde_json::json!({"t_max": [0]});
        assert!(parse(v).validate().is_err());
    }
}
