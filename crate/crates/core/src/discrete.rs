//! Exact interpreter for [`IrProgram`]s. This is the correctness and runtime
//! reference every other component is checked against.

use std::fmt::Write as _;

use crate::error::{AncError, Result};
use crate::isa::{apply_opcode, Command, DiscreteState, MachineConfig, Opcode, SideEffect};
use crate::lang::IrProgram;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscreteRun {
    pub final_tape: Vec<usize>,
    /// Executed commands, the halting STOP included.
    pub steps: usize,
    pub halted: bool,
    /// `trace[0]` is the initial state, `trace[t]` the state after step `t`.
    pub trace: Vec<DiscreteState>,
}

pub fn check_tape(tape: &[usize], cfg: &MachineConfig) -> Result<()> {
    if tape.len() != cfg.mem_size {
        return Err(AncError::DimensionMismatch(format!(
            "tape has {} cells, machine has {}",
            tape.len(),
            cfg.mem_size
        )));
    }
    if let Some(&v) = tape.iter().find(|&&v| v >= cfg.mem_size) {
        return Err(AncError::ValueOutOfRange {
            value: v,
            modulus: cfg.mem_size,
            context: "input tape".into(),
        });
    }
    Ok(())
}

/// Command executed when the instruction register points past the program.
fn padding_command(ir: &IrProgram) -> Command {
    let s = ir.scratch().unwrap_or(0);
    Command::new(Opcode::Stop, s, s, s)
}

pub fn run_discrete(ir: &IrProgram, tape: &[usize], cfg: &MachineConfig) -> Result<DiscreteRun> {
    run_discrete_from(ir, tape, cfg, 0)
}

/// Like [`run_discrete`] but starting at line `entry`.
pub fn run_discrete_from(
    ir: &IrProgram,
    tape: &[usize],
    cfg: &MachineConfig,
    entry: usize,
) -> Result<DiscreteRun> {
    ir.check_fits(cfg)?;
    check_tape(tape, cfg)?;
    let m = cfg.mem_size;
    let pad = padding_command(ir);

    let mut state = DiscreteState {
        memory: tape.to_vec(),
        registers: ir.initial_registers.clone(),
        ir: entry % m,
        stopped: false,
        steps_executed: 0,
    };
    let mut trace = vec![state.clone()];

    while state.steps_executed < cfg.max_steps {
        let cmd = ir.lines.get(state.ir).copied().unwrap_or(pad);
        let a = state.registers[cmd.arg1];
        let b = state.registers[cmd.arg2];
        let (value, effect) = apply_opcode(cmd.instr, a, b, state.memory[a], cfg);

        let mut next_ir = (state.ir + 1) % m;
        match effect {
            SideEffect::Stop => state.stopped = true,
            SideEffect::MemoryWrite { addr, value } => state.memory[addr] = value,
            SideEffect::Jump { target } => next_ir = target,
            SideEffect::None | SideEffect::MemoryRead { .. } => {}
        }
        state.registers[cmd.out] = value;
        state.ir = next_ir;
        state.steps_executed += 1;
        trace.push(state.clone());
        if state.stopped {
            break;
        }
    }

    Ok(DiscreteRun {
        final_tape: state.memory.clone(),
        steps: state.steps_executed,
        halted: state.stopped,
        trace,
    })
}

impl DiscreteRun {
    /// One line per step: `t | IR | cmd | regs | mem-diff`.
    pub fn dump(&self, ir: &IrProgram) -> String {
        let pad = padding_command(ir);
        let mut s = String::new();
        for t in 1..self.trace.len() {
            let (prev, cur) = (&self.trace[t - 1], &self.trace[t]);
            let cmd = ir.lines.get(prev.ir).copied().unwrap_or(pad);
            let regs = cur
                .registers
                .iter()
                .map(|r| r.to_string())
                .collect::<Vec<_>>()
                .join(" ");
            let diff = prev
                .memory
                .iter()
                .zip(&cur.memory)
                .enumerate()
                .filter(|(_, (a, b))| a != b)
                .map(|(i, (a, b))| format!("m{i}:{a}->{b}"))
                .collect::<Vec<_>>()
                .join(" ");
            let _ = writeln!(s, "{t} | {} | {cmd} | {regs} | {diff}", prev.ir);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::compile_source;

    const INCREMENT: &str = "\
var read_addr = 0
var read_value = 0
l_loop: read_value = READ(read_addr)
JEZ(read_value, l_stop)
read_value = INC(read_value)
WRITE(read_addr, read_value)
read_addr = INC(read_addr)
JEZ(0, l_loop)
l_stop: STOP()
";

    fn cfg(m: usize, r: usize, t: usize) -> MachineConfig {
        MachineConfig::new(m, r, t, 0.5).unwrap()
    }

    #[test]
    fn increment_example() {
        let c = cfg(10, 5, 200);
        let ir = compile_source(INCREMENT, &c).unwrap();
        let mut tape = vec![0; 10];
        tape[..4].copy_from_slice(&[1, 2, 2, 3]);
        let run = run_discrete(&ir, &tape, &c).unwrap();
        assert!(run.halted);
        assert_eq!(&run.final_tape[..7], &[2, 3, 3, 4, 0, 0, 0]);
        // six lines per element, then READ, JEZ, STOP
        assert_eq!(run.steps, 6 * 4 + 3);
    }

    #[test]
    fn immediate_stop() {
        let c = cfg(6, 1, 10);
        let ir = compile_source("STOP()", &c).unwrap();
        let tape = vec![5, 4, 3, 2, 1, 0];
        let run = run_discrete(&ir, &tape, &c).unwrap();
        assert_eq!(run.final_tape, tape);
        assert_eq!(run.steps, 1);
        assert!(run.halted);
        assert_eq!(run.trace.len(), 2);
    }

    #[test]
    fn step_limit() {
        let c = cfg(4, 2, 7);
        let ir = compile_source("l: JEZ(0, l)", &c).unwrap();
        let run = run_discrete(&ir, &[0; 4], &c).unwrap();
        assert!(!run.halted);
        assert_eq!(run.steps, 7);
    }

    #[test]
    fn taken_jump_lands_on_target() {
        let c = cfg(8, 3, 20);
        let ir = compile_source("var x = 0\nJEZ(x, l)\nx = INC(x)\nl: STOP()", &c).unwrap();
        let run = run_discrete(&ir, &[0; 8], &c).unwrap();
        assert_eq!(run.steps, 2);
        assert_eq!(run.trace[1].ir, 2);
        assert_eq!(run.trace[2].registers[0], 0);
    }

    #[test]
    fn running_off_the_end_stops() {
        let c = cfg(8, 2, 20);
        let ir = compile_source("var x = 0\nx = INC(x)", &c).unwrap();
        let run = run_discrete(&ir, &[0; 8], &c).unwrap();
        assert!(run.halted);
        assert_eq!(run.steps, 2);
    }

    #[test]
    fn tape_validation() {
        let c = cfg(4, 1, 5);
        let ir = compile_source("STOP()", &c).unwrap();
        assert!(matches!(
            run_discrete(&ir, &[0, 0, 4, 0], &c),
            Err(AncError::ValueOutOfRange { value: 4, .. })
        ));
        assert!(run_discrete(&ir, &[0, 0], &c).is_err());
    }

    #[test]
    fn trace_dump_lists_each_step() {
        let c = cfg(10, 5, 200);
        let ir = compile_source(INCREMENT, &c).unwrap();
        let mut tape = vec![0; 10];
        tape[0] = 4;
        let run = run_discrete(&ir, &tape, &c).unwrap();
        let dump = run.dump(&ir);
        assert_eq!(dump.lines().count(), run.steps);
        assert!(dump.contains("m0:4->5"));
    }
}
