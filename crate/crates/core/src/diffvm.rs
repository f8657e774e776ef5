//! The differentiable machine.
//!
//! Every integer of the discrete machine becomes a distribution over
//! `0..M`: memory is an M×M row-stochastic matrix, registers R×M, and the
//! instruction register a length-M vector. All updates in a step read the
//! time-`t` state only.

use std::fmt::Write as _;

use crate::compiler::Params;
use crate::error::Result;
use crate::isa::{MachineConfig, Opcode, NUM_OPCODES};
use crate::matrix::{argmax, softmax, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct SoftState {
    pub memory: Matrix,
    pub registers: Matrix,
    pub ir: Vec<f64>,
    /// Cumulative halting probability `1 - Π(1 - e_stop)`.
    pub p_stop: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerOutput {
    pub e: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub o: Vec<f64>,
}

/// Precomputed `g(i, j)` tables for the binary opcodes.
#[derive(Debug, Clone)]
pub struct OpTables {
    m: usize,
    tables: [Vec<u32>; 4],
}

impl OpTables {
    pub fn new(m: usize) -> Self {
        let tables = Opcode::BINARY.map(|op| {
            let mut t = Vec::with_capacity(m * m);
            for i in 0..m {
                for j in 0..m {
                    t.push(op.binary_value(i, j, m).expect("binary opcode") as u32);
                }
            }
            t
        });
        OpTables { m, tables }
    }

    pub fn mem_size(&self) -> usize {
        self.m
    }

    pub(crate) fn table(&self, op: Opcode) -> &[u32] {
        let k = Opcode::BINARY.iter().position(|&b| b == op).expect("binary opcode");
        &self.tables[k]
    }
}

/// `softmax(W · ir)` for each of the four layers.
pub fn controller_forward(params: &Params, ir: &[f64]) -> ControllerOutput {
    let layer = |w: &Matrix| {
        let mut logits = vec![0.0; w.rows()];
        w.mul_vec(ir, &mut logits);
        let mut p = vec![0.0; w.rows()];
        softmax(&logits, &mut p);
        p
    };
    ControllerOutput {
        e: layer(&params.w_instr),
        a: layer(&params.w_arg1),
        b: layer(&params.w_arg2),
        o: layer(&params.w_out),
    }
}

fn mix_rows(registers: &Matrix, weights: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    for (i, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (o, &r) in out.iter_mut().zip(registers.row(i)) {
            *o += w * r;
        }
    }
}

/// Convex combinations of register rows weighted by `a` and `b`.
pub fn gather_args(registers: &Matrix, a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let m = registers.cols();
    let mut arg1 = vec![0.0; m];
    let mut arg2 = vec![0.0; m];
    mix_rows(registers, a, &mut arg1);
    mix_rows(registers, b, &mut arg2);
    (arg1, arg2)
}

fn op_output_into(
    op: Opcode,
    arg1: &[f64],
    arg2: &[f64],
    memory: &Matrix,
    tables: &OpTables,
    out: &mut [f64],
) {
    let m = arg1.len();
    out.fill(0.0);
    match op {
        Opcode::Stop | Opcode::Zero | Opcode::Write | Opcode::Jez => out[0] = 1.0,
        Opcode::Inc => {
            for c in 0..m {
                out[(c + 1) % m] = arg1[c];
            }
        }
        Opcode::Dec => {
            for c in 0..m {
                out[(c + m - 1) % m] = arg1[c];
            }
        }
        Opcode::Read => mix_rows(memory, arg1, out),
        Opcode::Add | Opcode::Sub | Opcode::Min | Opcode::Max => {
            let t = tables.table(op);
            for i in 0..m {
                let x = arg1[i];
                if x == 0.0 {
                    continue;
                }
                let row = &t[i * m..(i + 1) * m];
                for (j, &g) in row.iter().enumerate() {
                    out[g as usize] += x * arg2[j];
                }
            }
        }
    }
}

/// Output distribution of a single opcode.
pub fn instr_output(
    op: Opcode,
    arg1: &[f64],
    arg2: &[f64],
    memory: &Matrix,
    cfg: &MachineConfig,
) -> Vec<f64> {
    let tables = OpTables::new(cfg.mem_size);
    let mut out = vec![0.0; cfg.mem_size];
    op_output_into(op, arg1, arg2, memory, &tables, &mut out);
    out
}

/// Everything the reverse pass needs from one forward step.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub ctrl: ControllerOutput,
    pub arg1: Vec<f64>,
    pub arg2: Vec<f64>,
    /// N × M, row `k` is opcode `k`'s output.
    pub op_outputs: Matrix,
    pub out: Vec<f64>,
}

/// Compute the step from `state` and return the successor plus the
/// intermediates. `survival` is `1 - p_stop` carried exactly.
fn step_recorded(
    state: &SoftState,
    survival: f64,
    params: &Params,
    tables: &OpTables,
) -> (SoftState, f64, StepRecord) {
    let m = tables.mem_size();
    let ctrl = controller_forward(params, &state.ir);
    let (arg1, arg2) = gather_args(&state.registers, &ctrl.a, &ctrl.b);

    let mut op_outputs = Matrix::zeros(NUM_OPCODES, m);
    let mut out = vec![0.0; m];
    for op in Opcode::ALL {
        let k = op.index();
        op_output_into(op, &arg1, &arg2, &state.memory, tables, op_outputs.row_mut(k));
        let ek = ctrl.e[k];
        for (o, &v) in out.iter_mut().zip(op_outputs.row(k)) {
            *o += ek * v;
        }
    }
    // Binary ops multiply the masses of their arguments, so rounding error
    // in a row sum doubles each time a register feeds back into itself.
    // On exact inputs the sum is 1 and this is the identity; the reverse
    // pass treats it as such.
    let mass: f64 = out.iter().sum();
    if mass > 0.0 {
        out.iter_mut().for_each(|v| *v /= mass);
    }

    let mut registers = state.registers.clone();
    for (i, &oi) in ctrl.o.iter().enumerate() {
        for (r, &v) in registers.row_mut(i).iter_mut().zip(&out) {
            *r += oi * (v - *r);
        }
    }

    let e_write = ctrl.e[Opcode::Write.index()];
    let mut memory = state.memory.clone();
    for (i, &addr) in arg1.iter().enumerate() {
        let g = e_write * addr;
        if g == 0.0 {
            continue;
        }
        for (c, &v) in memory.row_mut(i).iter_mut().zip(&arg2) {
            *c += g * (v - *c);
        }
    }

    let e_jez = ctrl.e[Opcode::Jez.index()];
    let jump = e_jez * arg1[0];
    let mut ir = vec![0.0; m];
    for j in 0..m {
        let inc = state.ir[(j + m - 1) % m];
        ir[j] = inc + jump * (arg2[j] - inc);
    }

    let survival_next = survival * (1.0 - ctrl.e[Opcode::Stop.index()]);
    let next = SoftState {
        memory,
        registers,
        ir,
        p_stop: 1.0 - survival_next,
    };
    let rec = StepRecord {
        ctrl,
        arg1,
        arg2,
        op_outputs,
        out,
    };
    (next, survival_next, rec)
}

/// One soft step of the machine.
pub fn soft_step(state: &SoftState, params: &Params, cfg: &MachineConfig) -> SoftState {
    let tables = OpTables::new(cfg.mem_size);
    step_recorded(state, 1.0 - state.p_stop, params, &tables).0
}

/// Lift a tape to Dirac rows.
pub fn dirac_memory(tape: &[usize], m: usize) -> Matrix {
    let mut mem = Matrix::zeros(tape.len(), m);
    for (i, &v) in tape.iter().enumerate() {
        mem.set(i, v, 1.0);
    }
    mem
}

/// Initial soft state: Dirac memory from the tape, softmaxed initial
/// registers and instruction register.
pub fn initial_state(params: &Params, tape: &[usize], cfg: &MachineConfig) -> Result<SoftState> {
    params.check_shape(cfg)?;
    crate::discrete::check_tape(tape, cfg)?;
    let m = cfg.mem_size;
    let mut registers = Matrix::zeros(cfg.reg_count, m);
    for i in 0..cfg.reg_count {
        softmax(params.reg_init.row(i), registers.row_mut(i));
    }
    let mut ir = vec![0.0; m];
    softmax(&params.ir_init, &mut ir);
    Ok(SoftState {
        memory: dirac_memory(tape, m),
        registers,
        ir,
        p_stop: 0.0,
    })
}

/// A full soft execution.
#[derive(Debug, Clone)]
pub struct Rollout {
    /// `states[0]` is the initial state, `states[t]` the state after step `t`.
    pub states: Vec<SoftState>,
    pub records: Vec<StepRecord>,
    /// `survival[t] = 1 - p_stop,t`, with `survival[0] = 1`.
    pub survival: Vec<f64>,
    /// Whether the threshold was crossed (as opposed to hitting `T_max`).
    pub halted: bool,
}

impl Rollout {
    /// Number of steps taken, `T`.
    pub fn steps(&self) -> usize {
        self.records.len()
    }

    pub fn final_state(&self) -> &SoftState {
        self.states.last().expect("rollout has an initial state")
    }

    /// `p_stop,t` for `t = 1..=T`.
    pub fn halt_history(&self) -> Vec<f64> {
        self.survival[1..].iter().map(|s| 1.0 - s).collect()
    }

    /// Probability of stopping exactly at step `t`, for `t = 1..=T`.
    pub fn halt_increments(&self) -> Vec<f64> {
        self.survival.windows(2).map(|w| w[0] - w[1]).collect()
    }

    pub fn memory_history(&self) -> Vec<&Matrix> {
        self.states.iter().map(|s| &s.memory).collect()
    }

    /// Argmax of every final memory row.
    pub fn argmax_tape(&self) -> Vec<usize> {
        let mem = &self.final_state().memory;
        (0..mem.rows()).map(|i| argmax(mem.row(i)).0).collect()
    }

    /// Per step: the top three values of the IR, each controller output,
    /// and the output distribution.
    pub fn dump(&self) -> String {
        fn top3(xs: &[f64], prefix: &str) -> String {
            let mut idx: Vec<usize> = (0..xs.len()).collect();
            idx.sort_by(|&i, &j| xs[j].total_cmp(&xs[i]).then(i.cmp(&j)));
            idx.iter()
                .take(3)
                .map(|&i| format!("{prefix}{i}:{:.3}", xs[i]))
                .collect::<Vec<_>>()
                .join(" ")
        }
        let mut s = String::new();
        for (t, rec) in self.records.iter().enumerate() {
            let e_names: Vec<String> = Opcode::ALL.iter().map(|o| o.mnemonic().to_string()).collect();
            let mut idx: Vec<usize> = (0..NUM_OPCODES).collect();
            idx.sort_by(|&i, &j| rec.ctrl.e[j].total_cmp(&rec.ctrl.e[i]).then(i.cmp(&j)));
            let e = idx
                .iter()
                .take(3)
                .map(|&k| format!("{}:{:.3}", e_names[k], rec.ctrl.e[k]))
                .collect::<Vec<_>>()
                .join(" ");
            let _ = writeln!(
                s,
                "{} | ir [{}] | e [{}] | a [{}] | b [{}] | o [{}] | out [{}] | p_stop {:.4}",
                t + 1,
                top3(&self.states[t].ir, ""),
                e,
                top3(&rec.ctrl.a, "R"),
                top3(&rec.ctrl.b, "R"),
                top3(&rec.ctrl.o, "R"),
                top3(&rec.out, ""),
                1.0 - self.survival[t + 1],
            );
        }
        s
    }
}

/// Run until `p_stop >= stop_threshold` or `T_max` steps.
pub fn run_soft(params: &Params, tape: &[usize], cfg: &MachineConfig) -> Result<Rollout> {
    let tables = OpTables::new(cfg.mem_size);
    run_soft_with(params, tape, cfg, &tables)
}

/// [`run_soft`] with caller-provided tables.
pub fn run_soft_with(
    params: &Params,
    tape: &[usize],
    cfg: &MachineConfig,
    tables: &OpTables,
) -> Result<Rollout> {
    cfg.validate()?;
    let init = initial_state(params, tape, cfg)?;
    let mut states = vec![init];
    let mut records = Vec::new();
    let mut survival = vec![1.0];
    let mut halted = false;
    while records.len() < cfg.max_steps {
        let (next, s, rec) = step_recorded(states.last().unwrap(), *survival.last().unwrap(), params, tables);
        states.push(next);
        records.push(rec);
        survival.push(s);
        if 1.0 - s >= cfg.stop_threshold {
            halted = true;
            break;
        }
    }
    Ok(Rollout {
        states,
        records,
        survival,
        halted,
    })
}
