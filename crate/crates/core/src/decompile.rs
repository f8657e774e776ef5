//! Reading a program back out of controller parameters.

use std::fmt;

use crate::compiler::Params;
use crate::diffvm::{run_soft_with, OpTables, Rollout};
use crate::error::Result;
use crate::isa::{Command, MachineConfig, Opcode};
use crate::lang::{IrProgram, RegisterRole};
use crate::matrix::{argmax, softmax_vec};

/// Probability above which a distribution counts as a Dirac delta.
pub const THETA_DIRAC: f64 = 0.99;
/// Default floor under which listing entries print as neutral tokens.
pub const DEFAULT_PROB_FLOOR: f64 = 0.5;

/// Most probable value of one distribution and its probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Choice {
    pub index: usize,
    pub prob: f64,
}

impl Choice {
    fn of(dist: &[f64]) -> Choice {
        let (index, prob) = argmax(dist);
        Choice { index, prob }
    }

    fn of_logits(logits: &[f64]) -> Choice {
        Choice::of(&softmax_vec(logits))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ListingLine {
    pub instr: Choice,
    pub arg1: Choice,
    pub arg2: Choice,
    pub out: Choice,
}

impl ListingLine {
    pub fn command(&self) -> Command {
        Command::new(
            Opcode::from_index(self.instr.index).expect("opcode index"),
            self.arg1.index,
            self.arg2.index,
            self.out.index,
        )
    }
}

/// Per-IR-state argmax view of a parameter set. Approximate when the
/// controller is not near-Dirac.
#[derive(Debug, Clone, PartialEq)]
pub struct Listing {
    pub registers: Vec<Choice>,
    pub initial_state: Choice,
    /// One entry per IR state `0..M`.
    pub lines: Vec<ListingLine>,
    pub prob_floor: f64,
}

pub fn decompile(params: &Params, prob_floor: f64) -> Listing {
    let m = params.mem_size();
    let registers = (0..params.reg_count())
        .map(|i| Choice::of_logits(params.reg_init.row(i)))
        .collect();
    let lines = (0..m)
        .map(|j| ListingLine {
            instr: Choice::of_logits(&params.w_instr.column(j)),
            arg1: Choice::of_logits(&params.w_arg1.column(j)),
            arg2: Choice::of_logits(&params.w_arg2.column(j)),
            out: Choice::of_logits(&params.w_out.column(j)),
        })
        .collect();
    Listing {
        registers,
        initial_state: Choice::of_logits(&params.ir_init),
        lines,
        prob_floor,
    }
}

impl Listing {
    /// The argmax program over all `M` states. Register roles are unknown
    /// and reported as spare.
    pub fn to_ir(&self) -> IrProgram {
        IrProgram {
            lines: self.lines.iter().map(ListingLine::command).collect(),
            initial_registers: self.registers.iter().map(|c| c.index).collect(),
            register_roles: vec![RegisterRole::Spare; self.registers.len()],
        }
    }

    /// Smallest probability over the first `n` lines and the initial state.
    pub fn min_prob(&self, n: usize) -> f64 {
        self.lines
            .iter()
            .take(n)
            .flat_map(|l| [l.instr.prob, l.arg1.prob, l.arg2.prob, l.out.prob])
            .chain(self.registers.iter().map(|c| c.prob))
            .chain([self.initial_state.prob])
            .fold(1.0, f64::min)
    }
}

fn fmt_prob(p: f64) -> String {
    let s = format!("{p:.2}");
    match s.trim_end_matches('0').trim_end_matches('.') {
        "" => "0".to_string(),
        t => t.to_string(),
    }
}

impl fmt::Display for Listing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let floor = self.prob_floor;
        let reg = |c: &Choice| {
            if c.prob > floor {
                format!("R{} ({})", c.index, fmt_prob(c.prob))
            } else {
                format!("R- ({})", fmt_prob(c.prob))
            }
        };
        for (i, c) in self.registers.iter().enumerate() {
            if c.prob > floor {
                writeln!(f, "R{i} = {} ({})", c.index, fmt_prob(c.prob))?;
            } else {
                writeln!(f, "R{i} = - ({})", fmt_prob(c.prob))?;
            }
        }
        writeln!(f)?;
        if self.initial_state.prob > floor {
            writeln!(f, "Initial State: {} ({})", self.initial_state.index, fmt_prob(self.initial_state.prob))?;
        } else {
            writeln!(f, "Initial State: - ({})", fmt_prob(self.initial_state.prob))?;
        }
        writeln!(f)?;
        for (j, l) in self.lines.iter().enumerate() {
            let op = if l.instr.prob > floor {
                Opcode::from_index(l.instr.index).expect("opcode").mnemonic()
            } else {
                "NOP"
            };
            writeln!(
                f,
                "{j}: \t{} \t= {:<5}({}) \t[ {} \t, {} \t]",
                reg(&l.out),
                op,
                fmt_prob(l.instr.prob),
                reg(&l.arg1),
                reg(&l.arg2)
            )?;
        }
        Ok(())
    }
}

/// Interpretability level of a learned program.
///
/// 1: every distribution met during execution is Dirac, so the program is a
/// plain listing. 2: only `JEZ` decisions are soft, giving an instruction
/// register spread over several lines. 3: soft values or soft operations are
/// used.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interpretability {
    pub class: u8,
    pub evidence: Vec<String>,
}

fn is_dirac(p: f64) -> bool {
    p >= THETA_DIRAC
}

/// Classify from rollouts on sample inputs. Only IR states carrying at
/// least 1% of the live probability mass before some executed step count.
pub fn classify_interpretability(params: &Params, rollouts: &[Rollout]) -> Interpretability {
    let m = params.mem_size();
    let r = params.reg_count();
    let mut reachable = vec![false; m];
    let mut class = 1u8;
    let mut evidence = Vec::new();
    let mut raise = |to: u8, why: String, class: &mut u8| {
        if to > *class {
            *class = to;
        }
        if evidence.len() < 16 {
            evidence.push(why);
        }
    };

    for (n, ro) in rollouts.iter().enumerate() {
        for (t, rec) in ro.records.iter().enumerate() {
            let live = ro.survival[t];
            if live < 0.01 {
                continue;
            }
            let st = &ro.states[t];
            for (j, &p) in st.ir.iter().enumerate() {
                if p >= 0.01 {
                    reachable[j] = true;
                }
            }
            let (j, pj) = argmax(&st.ir);
            if !is_dirac(pj) {
                raise(2, format!("rollout {n} step {}: instruction register spread (max {pj:.3})", t + 1), &mut class);
                continue;
            }
            let (k, _) = argmax(&rec.ctrl.e);
            let op = Opcode::from_index(k).expect("opcode");
            if op == Opcode::Jez || op == Opcode::Stop {
                continue;
            }
            let soft1 = op.arity() >= 1 && !is_dirac(argmax(&rec.arg1).1);
            let soft2 = op.arity() >= 2 && !is_dirac(argmax(&rec.arg2).1);
            if soft1 || soft2 {
                raise(3, format!("rollout {n} step {}: {op} on line {j} uses soft values", t + 1), &mut class);
            }
        }
    }

    for (j, _) in reachable.iter().enumerate().filter(|(_, &x)| x) {
        let e = softmax_vec(&params.w_instr.column(j));
        let (k, pk) = argmax(&e);
        let op = Opcode::from_index(k).expect("opcode");
        if !is_dirac(pk) {
            let mut sorted: Vec<(usize, f64)> = e.iter().copied().enumerate().collect();
            sorted.sort_by(|a, b| b.1.total_cmp(&a.1));
            let (a, b) = (sorted[0], sorted[1]);
            let jez = Opcode::Jez.index();
            if (a.0 == jez || b.0 == jez) && is_dirac(a.1 + b.1) {
                raise(2, format!("line {j}: instruction split with JEZ"), &mut class);
            } else {
                raise(3, format!("line {j}: soft instruction (max {pk:.3})"), &mut class);
            }
        }
        let mut slots: Vec<(&str, Vec<f64>)> = Vec::new();
        if op.arity() >= 1 {
            slots.push(("arg1", softmax_vec(&params.w_arg1.column(j))));
        }
        if op.arity() >= 2 {
            slots.push(("arg2", softmax_vec(&params.w_arg2.column(j))));
        }
        if op != Opcode::Stop {
            slots.push(("out", softmax_vec(&params.w_out.column(j))));
        }
        for (name, d) in slots {
            let (reg, p) = argmax(&d);
            if !is_dirac(p) {
                raise(3, format!("line {j}: soft {name} (max {p:.3})"), &mut class);
            } else if name != "out" {
                let (_, pr) = argmax(&softmax_vec(params.reg_init.row(reg)));
                if !is_dirac(pr) && reg < r {
                    raise(3, format!("line {j}: {name} R{reg} has a soft initial value"), &mut class);
                }
            }
        }
    }
    let (_, p0) = argmax(&softmax_vec(&params.ir_init));
    if !is_dirac(p0) {
        raise(2, format!("initial instruction register spread (max {p0:.3})"), &mut class);
    }
    Interpretability { class, evidence }
}

/// Run `params` on `tapes` and classify.
pub fn classify_on(params: &Params, cfg: &MachineConfig, tapes: &[Vec<usize>]) -> Result<Interpretability> {
    let tables = OpTables::new(cfg.mem_size);
    let rollouts = tapes
        .iter()
        .map(|t| run_soft_with(params, t, cfg, &tables))
        .collect::<Result<Vec<_>>>()?;
    Ok(classify_interpretability(params, &rollouts))
}
