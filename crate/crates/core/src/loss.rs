//! Training objective over a soft rollout.

use serde::{Deserialize, Serialize};

use crate::diffvm::Rollout;
use crate::error::{AncError, Result};
use crate::isa::MachineConfig;
use crate::matrix::Matrix;

/// One sample: input tape, expected tape, and the cells that are compared.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub input_tape: Vec<usize>,
    pub target_tape: Vec<usize>,
    pub mask: Vec<bool>,
    pub bias_tag: String,
}

impl TaskInstance {
    pub fn validate(&self, m: usize) -> Result<()> {
        if self.input_tape.len() != m || self.target_tape.len() != m || self.mask.len() != m {
            return Err(AncError::DimensionMismatch(format!(
                "instance tapes must have {m} cells"
            )));
        }
        if let Some(&v) = self.input_tape.iter().chain(&self.target_tape).find(|&&v| v >= m) {
            return Err(AncError::ValueOutOfRange {
                value: v,
                modulus: m,
                context: "task instance".into(),
            });
        }
        if !self.mask.iter().any(|&b| b) {
            return Err(AncError::InvalidConfig("mask selects no cell".into()));
        }
        Ok(())
    }

    /// Whether `tape` agrees with the target on every masked cell.
    pub fn matches(&self, tape: &[usize]) -> bool {
        self.mask
            .iter()
            .zip(tape.iter().zip(&self.target_tape))
            .all(|(&m, (a, b))| !m || a == b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            delta: 0.01,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.alpha, self.beta, self.gamma, self.delta];
        if w.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(AncError::InvalidConfig("loss weights must be finite and >= 0".into()));
        }
        if w.iter().all(|&x| x == 0.0) {
            return Err(AncError::InvalidConfig("loss weights are all zero".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub correctness: f64,
    pub halting: f64,
    pub confidence: f64,
    pub efficiency: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn check_finite(&self) -> Result<()> {
        let terms = [
            ("correctness", self.correctness),
            ("halting", self.halting),
            ("confidence", self.confidence),
            ("efficiency", self.efficiency),
            ("total", self.total),
        ];
        match terms.iter().find(|(_, v)| !v.is_finite()) {
            Some((term, _)) => Err(AncError::NonFiniteLoss { term }),
            None => Ok(()),
        }
    }

    pub(crate) fn add_scaled(&mut self, other: &LossBreakdown, k: f64) {
        self.correctness += k * other.correctness;
        self.halting += k * other.halting;
        self.confidence += k * other.confidence;
        self.efficiency += k * other.efficiency;
        self.total += k * other.total;
    }
}

/// Masked squared distance between memory rows and one-hot target rows.
pub fn memory_error(memory: &Matrix, inst: &TaskInstance) -> f64 {
    let mut err = 0.0;
    for (i, (&on, &target)) in inst.mask.iter().zip(&inst.target_tape).enumerate() {
        if !on {
            continue;
        }
        for (j, &v) in memory.row(i).iter().enumerate() {
            let d = v - if j == target { 1.0 } else { 0.0 };
            err += d * d;
        }
    }
    err
}

pub fn loss_correctness(final_memory: &Matrix, inst: &TaskInstance) -> f64 {
    memory_error(final_memory, inst)
}

/// `1 - p_stop,T` if the run was cut off at `T_max`, else 0.
pub fn loss_halting(p_stop_final: f64, steps: usize, cfg: &MachineConfig) -> f64 {
    if steps == cfg.max_steps {
        1.0 - p_stop_final
    } else {
        0.0
    }
}

/// `Σ_{t=1}^{T-1} (1 - p_stop,t)`; `halt_history[t-1]` holds `p_stop,t`.
pub fn loss_efficiency(halt_history: &[f64], steps: usize) -> f64 {
    halt_history
        .iter()
        .take(steps.saturating_sub(1))
        .map(|p| 1.0 - p)
        .sum()
}

/// Expected error at the halting step: `Σ_{t=2}^{T} (p_t - p_{t-1}) err(M^t)`.
/// `memory_history[t]` is the memory after step `t` (index 0 is the input)
/// and `halt_history[t-1]` holds `p_stop,t`.
pub fn loss_confidence(memory_history: &[&Matrix], halt_history: &[f64], inst: &TaskInstance) -> f64 {
    let mut total = 0.0;
    for t in 2..=halt_history.len() {
        let inc = halt_history[t - 1] - halt_history[t - 2];
        if inc != 0.0 {
            total += inc * memory_error(memory_history[t], inst);
        }
    }
    total
}

pub fn loss_total(rollout: &Rollout, inst: &TaskInstance, w: &LossWeights, cfg: &MachineConfig) -> LossBreakdown {
    let steps = rollout.steps();
    let s = &rollout.survival;
    let correctness = loss_correctness(&rollout.final_state().memory, inst);
    let halting = if steps == cfg.max_steps { s[steps] } else { 0.0 };
    let efficiency: f64 = s[1..steps.max(1)].iter().sum();
    let mut confidence = 0.0;
    for t in 2..=steps {
        let inc = s[t - 1] - s[t];
        if inc != 0.0 {
            confidence += inc * memory_error(&rollout.states[t].memory, inst);
        }
    }
    LossBreakdown {
        correctness,
        halting,
        confidence,
        efficiency,
        total: w.alpha * correctness + w.beta * halting + w.gamma * confidence + w.delta * efficiency,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::{compile, PadMode, KAPPA_SHARP};
    use crate::diffvm::{dirac_memory, run_soft};
    use crate::lang::compile_source;

    fn inst(m: usize, target: Vec<usize>, mask_cells: &[usize]) -> TaskInstance {
        let mut mask = vec![false; m];
        for &c in mask_cells {
            mask[c] = true;
        }
        TaskInstance {
            input_tape: vec![0; m],
            target_tape: target,
            mask,
            bias_tag: String::new(),
        }
    }

    #[test]
    fn correctness_examples() {
        let m = 10;
        let target: Vec<usize> = (0..m).collect();
        let i = inst(m, target.clone(), &[0, 3, 7]);
        assert_eq!(loss_correctness(&dirac_memory(&target, m), &i), 0.0);

        let mut wrong = target.clone();
        wrong[3] = 4;
        wrong[7] = 0;
        wrong[5] = 1; // unmasked
        assert_eq!(loss_correctness(&dirac_memory(&wrong, m), &i), 2.0 * 2.0);

        let uni = Matrix::from_fn(m, m, |_, _| 0.1);
        let one = inst(m, target, &[2]);
        let oracle = 9.0 * 0.1f64.powi(2) + 0.9f64.powi(2);
        assert!((loss_correctness(&uni, &one) - oracle).abs() < 1e-10);
        assert!((oracle - 0.9).abs() < 1e-10);
    }

    #[test]
    fn halting_examples() {
        let c = MachineConfig::new(5, 1, 10, 0.9).unwrap();
        assert_eq!(loss_halting(0.2, 4, &c), 0.0);
        assert!((loss_halting(0.3, 10, &c) - 0.7).abs() < 1e-10);
        assert_eq!(loss_halting(1.0, 10, &c), 0.0);
    }

    #[test]
    fn efficiency_examples() {
        assert_eq!(loss_efficiency(&[1.0; 6], 6), 0.0);
        assert_eq!(loss_efficiency(&[0.0; 5], 5), 4.0);
        assert!((loss_efficiency(&[0.5, 0.75], 3) - 0.75).abs() < 1e-10);
    }

    #[test]
    fn confidence_examples() {
        let m = 4;
        let i = inst(m, vec![1, 2, 3, 0], &[0, 1]);
        let good = dirac_memory(&[1, 2, 3, 0], m);
        let bad = dirac_memory(&[0, 2, 3, 0], m); // error 2
        assert_eq!(loss_confidence(&[&good, &bad, &bad], &[0.0, 0.0], &i), 0.0);
        assert_eq!(loss_confidence(&[&good, &bad, &good, &bad], &[0.0, 1.0, 1.0], &i), 0.0);
        let v = loss_confidence(&[&good, &good, &bad], &[0.2, 0.7], &i);
        assert!((v - 1.0).abs() < 1e-10);
    }

    #[test]
    fn sharp_access_terms() {
        let c = MachineConfig::new(15, 4, 30, 0.5).unwrap();
        let src = "var k = 0\nk = READ(0)\nk = INC(k)\nk = READ(k)\nWRITE(0, k)\nSTOP()\n";
        let ir = compile_source(src, &c).unwrap();
        let p = compile(&ir, &c, KAPPA_SHARP, PadMode::Stop).unwrap();
        let mut tape = vec![0; 15];
        tape[..10].copy_from_slice(&[6, 9, 1, 2, 7, 9, 8, 1, 3, 5]);
        let mut target = tape.clone();
        target[0] = 1;
        let mut i = inst(15, target, &[0]);
        i.input_tape = tape.clone();
        let r = run_soft(&p, &tape, &c).unwrap();
        let w = LossWeights {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            delta: 1.0,
        };
        let l = loss_total(&r, &i, &w, &c);
        assert!(l.correctness < 1e-12);
        assert_eq!(l.halting, 0.0);
        assert!(l.confidence < 1e-12);
        assert!((l.efficiency - (r.steps() - 1) as f64).abs() < 1e-12);

        let only_c = LossWeights {
            alpha: 1.0,
            beta: 0.0,
            gamma: 0.0,
            delta: 0.0,
        };
        let lc = loss_total(&r, &i, &only_c, &c);
        assert_eq!(lc.total, loss_correctness(&r.final_state().memory, &i));

        // survival form agrees with the p_stop form
        let h = r.halt_history();
        let mem = r.memory_history();
        assert!((loss_confidence(&mem, &h, &i) - l.confidence).abs() < 1e-12);
        assert!((loss_efficiency(&h, r.steps()) - l.efficiency).abs() < 1e-9);
    }

    #[test]
    fn weights_validation() {
        assert!(LossWeights::default().validate().is_ok());
        let zero = LossWeights {
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
            delta: 0.0,
        };
        assert!(zero.validate().is_err());
        assert!(LossWeights { alpha: -1.0, ..zero }.validate().is_err());
    }
}
