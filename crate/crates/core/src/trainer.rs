//! Adam training of compiled programs over multiple seeds, and evaluation
//! against the generic program.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compiler::{compile, perturb, PadMode, Params, KAPPA_SOFT};
use crate::decompile::{classify_interpretability, decompile, DEFAULT_PROB_FLOOR};
use crate::diffvm::{run_soft_with, OpTables};
use crate::discrete::{run_discrete, run_discrete_from};
use crate::error::{AncError, Result};
use crate::grad::gradient_with;
use crate::lang::IrProgram;
use crate::loss::{loss_total, LossBreakdown, LossWeights, TaskInstance};
use crate::tasks::TaskSpec;

/// Minimum final halting probability for a soft run to count as answered.
pub const MIN_STOP_CONFIDENCE: f64 = 0.9;
/// Learning rates tried by [`sweep`].
pub const LR_GRID: [f64; 3] = [0.1, 0.01, 0.001];

const TEST_SEED: u64 = 0x7e57;
const DATA_STREAM: u64 = 0xda7a;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub weights: LossWeights,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub iters: usize,
    pub seeds: Vec<u64>,
    pub kappa_soft: f64,
    pub sigma: f64,
    pub biased: bool,
    pub test_size: usize,
    pub pad: PadMode,
    /// Run seeds on the rayon pool.
    pub parallel: bool,
}

// With little noise nearly every seed settles back on the compiled program;
// `sigma` well above the logit scale is what lets some seeds find shorter ones.
impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            weights: LossWeights {
                delta: 0.1,
                ..LossWeights::default()
            },
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 16,
            iters: 1000,
            seeds: (0..100).collect(),
            kappa_soft: KAPPA_SOFT,
            sigma: 3.0,
            biased: true,
            test_size: 100,
            pad: PadMode::Stop,
            parallel: true,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        let rates = [self.lr, self.eps, self.kappa_soft];
        if rates.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(AncError::InvalidConfig("lr, eps and kappa_soft must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(AncError::InvalidConfig("Adam moments must lie in [0, 1)".into()));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(AncError::InvalidConfig("sigma must be finite and >= 0".into()));
        }
        if self.seeds.is_empty() {
            return Err(AncError::InvalidConfig("seed list is empty".into()));
        }
        if self.batch_size == 0 || self.test_size == 0 {
            return Err(AncError::InvalidConfig("batch and test sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Adam over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..theta.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            theta[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Outcome of evaluating one parameter set on a test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Argmax of the final soft memory matches every test target and every
    /// run reaches the stop confidence.
    pub correct_on_all_tests: bool,
    pub correct_count: usize,
    /// The decompiled argmax program solves every test instance.
    pub discrete_correct: bool,
    pub avg_steps_learned: f64,
    pub avg_steps_discrete: f64,
    pub interpretability_class: u8,
    pub mean_loss: f64,
}

#[derive(Debug, Clone)]
pub struct SeedReport {
    pub seed: u64,
    pub params: Params,
    pub correct_on_all_tests: bool,
    pub discrete_correct: bool,
    pub avg_steps_learned: f64,
    pub avg_steps_generic: f64,
    pub success: bool,
    pub interpretability_class: u8,
    pub final_loss: f64,
    pub loss_curve: Vec<f64>,
    /// Set when training stopped on a non-finite loss.
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub task: String,
    pub lr: f64,
    pub avg_steps_generic: f64,
    pub avg_steps_ideal: Option<f64>,
    pub seeds: Vec<SeedReport>,
}

impl TrainReport {
    pub fn successes(&self) -> usize {
        self.seeds.iter().filter(|s| s.success).count()
    }

    pub fn success_rate(&self) -> f64 {
        self.successes() as f64 / self.seeds.len() as f64
    }

    /// Fastest successful seed.
    pub fn best(&self) -> Option<&SeedReport> {
        self.seeds
            .iter()
            .filter(|s| s.success)
            .min_by(|a, b| a.avg_steps_learned.total_cmp(&b.avg_steps_learned))
    }

    /// Mean learned steps over successful seeds.
    pub fn mean_steps_learned(&self) -> Option<f64> {
        let ok: Vec<f64> = self.seeds.iter().filter(|s| s.success).map(|s| s.avg_steps_learned).collect();
        (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64)
    }
}

pub fn test_set(task: &TaskSpec, tc: &TrainingConfig) -> Vec<TaskInstance> {
    task.dataset(tc.biased, tc.test_size, TEST_SEED)
}

/// Mean discrete step count of `ir` on `data`.
pub fn mean_discrete_steps(ir: &IrProgram, task: &TaskSpec, data: &[TaskInstance]) -> Result<f64> {
    let mut total = 0usize;
    for inst in data {
        total += run_discrete(ir, &inst.input_tape, &task.cfg)?.steps;
    }
    Ok(total as f64 / data.len() as f64)
}

pub fn evaluate(params: &Params, task: &TaskSpec, data: &[TaskInstance], w: &LossWeights) -> Result<Evaluation> {
    let cfg = &task.cfg;
    let tables = OpTables::new(cfg.mem_size);
    let listing = decompile(params, DEFAULT_PROB_FLOOR);
    let argmax_ir = listing.to_ir();
    let entry = listing.initial_state.index;

    let mut rollouts = Vec::with_capacity(data.len());
    let (mut correct, mut discrete_ok) = (0, true);
    let (mut steps, mut dsteps, mut loss) = (0usize, 0usize, 0.0);
    for inst in data {
        let ro = run_soft_with(params, &inst.input_tape, cfg, &tables)?;
        if inst.matches(&ro.argmax_tape()) && ro.final_state().p_stop >= MIN_STOP_CONFIDENCE {
            correct += 1;
        }
        steps += ro.steps();
        loss += loss_total(&ro, inst, w, cfg).total;
        let d = run_discrete_from(&argmax_ir, &inst.input_tape, cfg, entry)?;
        discrete_ok &= d.halted && inst.matches(&d.final_tape);
        dsteps += d.steps;
        rollouts.push(ro);
    }
    let n = data.len() as f64;
    let class = classify_interpretability(params, &rollouts[..rollouts.len().min(20)]).class;
    Ok(Evaluation {
        correct_on_all_tests: correct == data.len(),
        correct_count: correct,
        discrete_correct: discrete_ok,
        avg_steps_learned: steps as f64 / n,
        avg_steps_discrete: dsteps as f64 / n,
        interpretability_class: class,
        mean_loss: loss / n,
    })
}

/// Adam loop from `init`. Batches are drawn fresh from a stream keyed by
/// `seed`. Returns the final parameters and the per-iteration mean loss.
pub fn optimise(
    init: &Params,
    task: &TaskSpec,
    tc: &TrainingConfig,
    seed: u64,
    parallel_batch: bool,
) -> Result<(Params, Vec<LossBreakdown>)> {
    let cfg = &task.cfg;
    let tables = OpTables::new(cfg.mem_size);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ DATA_STREAM);
    let mut params = init.clone();
    let mut theta = params.to_flat();
    let mut adam = Adam::new(theta.len(), tc.lr, tc.beta1, tc.beta2, tc.eps);
    let mut curve = Vec::with_capacity(tc.iters);
    for _ in 0..tc.iters {
        let batch: Vec<TaskInstance> = (0..tc.batch_size).map(|_| task.sample_with(tc.biased, &mut rng)).collect();
        let (loss, grads) = gradient_with(&params, &batch, &tc.weights, cfg, &tables, parallel_batch)?;
        curve.push(loss);
        adam.step(&mut theta, &grads.to_flat());
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(AncError::NonFiniteLoss { term: "parameters" });
        }
        params.set_flat(&theta);
    }
    Ok((params, curve))
}

fn train_seed(
    ir: &IrProgram,
    task: &TaskSpec,
    tc: &TrainingConfig,
    seed: u64,
    test: &[TaskInstance],
    generic_steps: f64,
    parallel_batch: bool,
) -> Result<SeedReport> {
    let base = compile(ir, &task.cfg, tc.kappa_soft, tc.pad)?;
    let init = perturb(&base, tc.sigma, seed)?;
    let (params, curve, failure) = match optimise(&init, task, tc, seed, parallel_batch) {
        Ok((p, c)) => (p, c, None),
        Err(e @ AncError::NonFiniteLoss { .. }) => (init.clone(), Vec::new(), Some(e.to_string())),
        Err(e) => return Err(e),
    };
    let ev = evaluate(&params, task, test, &tc.weights)?;
    let success = failure.is_none() && ev.correct_on_all_tests && ev.avg_steps_learned < generic_steps;
    Ok(SeedReport {
        seed,
        params,
        correct_on_all_tests: ev.correct_on_all_tests,
        discrete_correct: ev.discrete_correct,
        avg_steps_learned: ev.avg_steps_learned,
        avg_steps_generic: generic_steps,
        success,
        interpretability_class: ev.interpretability_class,
        final_loss: ev.mean_loss,
        loss_curve: curve.iter().map(|l| l.total).collect(),
        failure,
    })
}

/// Train `ir` on `task` once per seed and evaluate each result.
pub fn train(ir: &IrProgram, task: &TaskSpec, tc: &TrainingConfig) -> Result<TrainReport> {
    tc.validate()?;
    ir.check_fits(&task.cfg)?;
    let test = test_set(task, tc);
    let generic = mean_discrete_steps(ir, task, &test)?;
    let ideal = match task.ideal_program() {
        Some(p) => Some(mean_discrete_steps(&p?, task, &test)?),
        None => None,
    };
    let one = |&seed: &u64| train_seed(ir, task, tc, seed, &test, generic, !tc.parallel);
    let seeds: Vec<SeedReport> = if tc.parallel && tc.seeds.len() > 1 {
        tc.seeds.par_iter().map(one).collect::<Result<_>>()?
    } else {
        tc.seeds.iter().map(one).collect::<Result<_>>()?
    };
    Ok(TrainReport {
        task: task.name().to_string(),
        lr: tc.lr,
        avg_steps_generic: generic,
        avg_steps_ideal: ideal,
        seeds,
    })
}

/// Train at each learning rate of `grid` and keep the report with the
/// most successes. Ties go to the earlier rate.
pub fn sweep(ir: &IrProgram, task: &TaskSpec, tc: &TrainingConfig, grid: &[f64]) -> Result<TrainReport> {
    let mut best: Option<TrainReport> = None;
    for &lr in grid {
        let rep = train(ir, task, &TrainingConfig { lr, ..tc.clone() })?;
        if best.as_ref().is_none_or(|b| rep.successes() > b.successes()) {
            best = Some(rep);
        }
    }
    best.ok_or_else(|| AncError::InvalidConfig("empty learning-rate grid".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::TaskKind;

    #[test]
    fn adam_minimises_quadratic() {
        let mut x = vec![3.0, -2.0];
        let mut opt = Adam::new(2, 0.1, 0.9, 0.999, 1e-8);
        for _ in 0..500 {
            let g: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
            opt.step(&mut x, &g);
        }
        assert!(x.iter().all(|v| v.abs() < 1e-2), "{x:?}");
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        let mut x = vec![0.0];
        let mut opt = Adam::new(1, 0.01, 0.9, 0.999, 1e-8);
        opt.step(&mut x, &[123.0]);
        assert!((x[0] + 0.01).abs() < 1e-9);
    }

    fn small_tc() -> TrainingConfig {
        TrainingConfig {
            seeds: vec![1, 2],
            iters: 0,
            test_size: 20,
            ..TrainingConfig::default()
        }
    }

    #[test]
    fn zero_iterations_keeps_init() {
        let task = TaskSpec::new(TaskKind::Access);
        let ir = task.generic_program().unwrap();
        let tc = small_tc();
        let rep = train(&ir, &task, &tc).unwrap();
        for s in &rep.seeds {
            assert!(!s.success);
            let init = perturb(&compile(&ir, &task.cfg, tc.kappa_soft, tc.pad).unwrap(), tc.sigma, s.seed).unwrap();
            assert_eq!(s.params, init);
        }
    }

    #[test]
    fn success_needs_both_clauses() {
        let task = TaskSpec::new(TaskKind::Access);
        let ir = task.generic_program().unwrap();
        let rep = train(&ir, &task, &small_tc()).unwrap();
        for s in &rep.seeds {
            assert_eq!(s.success, s.correct_on_all_tests && s.avg_steps_learned < s.avg_steps_generic);
        }
    }

    #[test]
    fn training_is_reproducible() {
        let task = TaskSpec::new(TaskKind::Access);
        let ir = task.generic_program().unwrap();
        let tc = TrainingConfig {
            iters: 5,
            parallel: true,
            ..small_tc()
        };
        let a = train(&ir, &task, &tc).unwrap();
        let b = train(&ir, &task, &TrainingConfig { parallel: false, ..tc }).unwrap();
        for (x, y) in a.seeds.iter().zip(&b.seeds) {
            assert_eq!(x.params, y.params);
            assert_eq!(x.loss_curve, y.loss_curve);
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainingConfig::default().validate().is_ok());
        assert!(TrainingConfig { seeds: vec![], ..TrainingConfig::default() }.validate().is_err());
        assert!(TrainingConfig { lr: 0.0, ..TrainingConfig::default() }.validate().is_err());
    }
}
