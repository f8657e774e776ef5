//! Experiment description files and result records.

use serde::{Deserialize, Serialize};

use crate::compiler::PadMode;
use crate::error::{AncError, Result};
use crate::isa::MachineConfig;
use crate::loss::LossWeights;
use crate::tasks::{TaskKind, TaskSpec};
use crate::trainer::{sweep, train, SeedReport, TrainReport, TrainingConfig};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

/// Experiment file as written by the user. Every key except `task` is
/// optional and falls back to the task and trainer defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub task: Option<String>,
    pub bias: Option<bool>,
    #[serde(rename = "M")]
    pub mem_size: Option<usize>,
    #[serde(rename = "R")]
    pub reg_count: Option<usize>,
    #[serde(rename = "T_max")]
    pub max_steps: Option<usize>,
    pub eta_stop: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub delta: Option<f64>,
    /// A single rate, or a list that is swept.
    pub lr: Option<OneOrMany<f64>>,
    pub batch: Option<usize>,
    pub iters: Option<usize>,
    /// A seed count (seeds `0..n`) or an explicit list.
    pub seeds: Option<OneOrMany<u64>>,
    pub kappa_soft: Option<f64>,
    pub sigma: Option<f64>,
    pub test_size: Option<usize>,
    pub pad: Option<PadMode>,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub task: TaskSpec,
    pub training: TrainingConfig,
    pub lr_grid: Vec<f64>,
}

impl Experiment {
    pub fn from_toml(text: &str) -> Result<Experiment> {
        let file: ExperimentFile = toml::from_str(text).map_err(|e| AncError::InvalidConfig(e.to_string()))?;
        Experiment::from_file(file)
    }

    pub fn from_file(f: ExperimentFile) -> Result<Experiment> {
        let name = f.task.ok_or_else(|| AncError::InvalidConfig("missing key `task`".into()))?;
        let kind: TaskKind = name.parse()?;
        let d = kind.default_config();
        let cfg = MachineConfig::new(
            f.mem_size.unwrap_or(d.mem_size),
            f.reg_count.unwrap_or(d.reg_count),
            f.max_steps.unwrap_or(d.max_steps),
            f.eta_stop.unwrap_or(d.stop_threshold),
        )?;
        let task = TaskSpec::with_config(kind, cfg)?;

        let base = TrainingConfig::default();
        let w = LossWeights {
            alpha: f.alpha.unwrap_or(base.weights.alpha),
            beta: f.beta.unwrap_or(base.weights.beta),
            gamma: f.gamma.unwrap_or(base.weights.gamma),
            delta: f.delta.unwrap_or(base.weights.delta),
        };
        let lr_grid = match f.lr {
            None => vec![base.lr],
            Some(OneOrMany::One(x)) => vec![x],
            Some(OneOrMany::Many(v)) if !v.is_empty() => v,
            Some(OneOrMany::Many(_)) => return Err(AncError::InvalidConfig("key `lr` is an empty list".into())),
        };
        let seeds = match f.seeds {
            None => base.seeds.clone(),
            Some(OneOrMany::One(n)) => (0..n).collect(),
            Some(OneOrMany::Many(v)) => v,
        };
        let training = TrainingConfig {
            weights: w,
            lr: lr_grid[0],
            batch_size: f.batch.unwrap_or(base.batch_size),
            iters: f.iters.unwrap_or(base.iters),
            seeds,
            kappa_soft: f.kappa_soft.unwrap_or(base.kappa_soft),
            sigma: f.sigma.unwrap_or(base.sigma),
            biased: f.bias.unwrap_or(base.biased),
            test_size: f.test_size.unwrap_or(base.test_size),
            pad: f.pad.unwrap_or(base.pad),
            ..base
        };
        training.validate()?;
        Ok(Experiment { task, training, lr_grid })
    }

    pub fn run(&self) -> Result<TrainReport> {
        let ir = self.task.generic_program()?;
        if self.lr_grid.len() == 1 {
            train(&ir, &self.task, &self.training)
        } else {
            sweep(&ir, &self.task, &self.training, &self.lr_grid)
        }
    }
}

/// One CSV row per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub seed: u64,
    pub correct: bool,
    pub steps_learned: f64,
    pub steps_generic: f64,
    pub success: bool,
    pub class: u8,
    pub final_loss: f64,
}

impl From<&SeedReport> for SeedRow {
    fn from(s: &SeedReport) -> Self {
        SeedRow {
            seed: s.seed,
            correct: s.correct_on_all_tests,
            steps_learned: s.avg_steps_learned,
            steps_generic: s.avg_steps_generic,
            success: s.success,
            class: s.interpretability_class,
            final_loss: s.final_loss,
        }
    }
}

/// Table-style summary: generic, best learned and ideal mean step counts,
/// plus the fraction of successful seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub task: String,
    pub generic: f64,
    pub learned: Option<f64>,
    pub ideal: Option<f64>,
    pub success_rate: f64,
    pub lr: f64,
    pub seeds: usize,
}

impl Summary {
    pub fn of(rep: &TrainReport) -> Summary {
        Summary {
            task: rep.task.clone(),
            generic: rep.avg_steps_generic,
            learned: rep.best().map(|s| s.avg_steps_learned),
            ideal: rep.avg_steps_ideal,
            success_rate: rep.success_rate(),
            lr: rep.lr,
            seeds: rep.seeds.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_file() {
        let text = r#"
            task = "access"
            bias = true
            M = 15
            R = 5
            T_max = 12
            eta_stop = 0.9
            alpha = 1.0
            beta = 1.0
            gamma = 1.0
            delta = 0.05
            lr = [0.1, 0.01]
            batch = 8
            iters = 10
            seeds = 3
            kappa_soft = 5.0
            sigma = 0.5
        "#;
        let e = Experiment::from_toml(text).unwrap();
        assert_eq!(e.task.kind, TaskKind::Access);
        assert_eq!(e.task.cfg.reg_count, 5);
        assert_eq!(e.lr_grid, vec![0.1, 0.01]);
        assert_eq!(e.training.seeds, vec![0, 1, 2]);
        assert_eq!(e.training.weights.delta, 0.05);
        assert_eq!(e.training.batch_size, 8);
    }

    #[test]
    fn missing_task_names_key() {
        let err = Experiment::from_toml("iters = 3\n").unwrap_err();
        assert!(err.to_string().contains("`task`"), "{err}");
    }

    #[test]
    fn rejects_unknown_key_and_task() {
        assert!(Experiment::from_toml("task = \"access\"\nfoo = 1\n").is_err());
        assert!(Experiment::from_toml("task = \"nope\"\n").is_err());
    }

    #[test]
    fn seed_list() {
        let e = Experiment::from_toml("task = \"swap\"\nseeds = [4, 9]\n").unwrap();
        assert_eq!(e.training.seeds, vec![4, 9]);
        assert_eq!(e.task.cfg, TaskKind::Swap.default_config());
    }
}
