//! Instruction set, machine dimensions and exact integer semantics.
//!
//! Every value the machine manipulates is an integer in `[0, M)` where `M` is
//! both the number of memory cells and the value modulus. Arithmetic wraps.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::AncError;

/// Number of machine instructions.
pub const NUM_OPCODES: usize = 11;

/// Machine instructions, in their canonical index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Opcode {
    Stop = 0,
    Zero,
    Inc,
    Dec,
    Add,
    Sub,
    Min,
    Max,
    Read,
    Write,
    Jez,
}

/// What an instruction does besides producing its output value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SideEffect {
    None,
    Stop,
    /// The output value was read from memory.
    MemoryRead { addr: usize },
    MemoryWrite { addr: usize, value: usize },
    /// Taken conditional jump; the instruction register becomes `target`.
    Jump { target: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SideEffectKind {
    None,
    StopFlag,
    MemoryRead,
    MemoryWrite,
    Jump,
}

impl Opcode {
    pub const ALL: [Opcode; NUM_OPCODES] = [
        Opcode::Stop,
        Opcode::Zero,
        Opcode::Inc,
        Opcode::Dec,
        Opcode::Add,
        Opcode::Sub,
        Opcode::Min,
        Opcode::Max,
        Opcode::Read,
        Opcode::Write,
        Opcode::Jez,
    ];

    /// The four opcodes whose output depends on both arguments through a
    /// value table.
    pub const BINARY: [Opcode; 4] = [Opcode::Add, Opcode::Sub, Opcode::Min, Opcode::Max];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(idx: usize) -> Option<Opcode> {
        Self::ALL.get(idx).copied()
    }

    /// Number of arguments the instruction actually uses.
    pub fn arity(self) -> usize {
        match self {
            Opcode::Stop | Opcode::Zero => 0,
            Opcode::Inc | Opcode::Dec | Opcode::Read => 1,
            Opcode::Add
            | Opcode::Sub
            | Opcode::Min
            | Opcode::Max
            | Opcode::Write
            | Opcode::Jez => 2,
        }
    }

    pub fn side_effect_kind(self) -> SideEffectKind {
        match self {
            Opcode::Stop => SideEffectKind::StopFlag,
            Opcode::Read => SideEffectKind::MemoryRead,
            Opcode::Write => SideEffectKind::MemoryWrite,
            Opcode::Jez => SideEffectKind::Jump,
            _ => SideEffectKind::None,
        }
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::Stop => "STOP",
            Opcode::Zero => "ZERO",
            Opcode::Inc => "INC",
            Opcode::Dec => "DEC",
            Opcode::Add => "ADD",
            Opcode::Sub => "SUB",
            Opcode::Min => "MIN",
            Opcode::Max => "MAX",
            Opcode::Read => "READ",
            Opcode::Write => "WRITE",
            Opcode::Jez => "JEZ",
        }
    }

    /// Value table for the two-argument arithmetic instructions, `None` for
    /// the others.
    pub fn binary_value(self, a: usize, b: usize, m: usize) -> Option<usize> {
        match self {
            Opcode::Add => Some((a + b) % m),
            Opcode::Sub => Some((a + m - b) % m),
            Opcode::Min => Some(a.min(b)),
            Opcode::Max => Some(a.max(b)),
            _ => None,
        }
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

impl FromStr for Opcode {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Opcode::ALL
            .iter()
            .copied()
            .find(|op| op.mnemonic().eq_ignore_ascii_case(s))
            .ok_or(())
    }
}

/// Dimensions and run limits of a machine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MachineConfig {
    /// Number of memory cells, and the value modulus.
    pub mem_size: usize,
    pub reg_count: usize,
    pub max_steps: usize,
    /// Cumulative halt probability at which a soft rollout stops.
    pub stop_threshold: f64,
}

impl MachineConfig {
    pub fn new(
        mem_size: usize,
        reg_count: usize,
        max_steps: usize,
        stop_threshold: f64,
    ) -> Result<Self, AncError> {
        let cfg = MachineConfig {
            mem_size,
            reg_count,
            max_steps,
            stop_threshold,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), AncError> {
        if self.mem_size == 0 {
            return Err(AncError::InvalidConfig("mem_size must be positive".into()));
        }
        if self.reg_count == 0 {
            return Err(AncError::InvalidConfig("reg_count must be positive".into()));
        }
        if self.max_steps == 0 {
            return Err(AncError::InvalidConfig("max_steps must be at least 1".into()));
        }
        if !(self.stop_threshold > 0.0 && self.stop_threshold <= 1.0) {
            return Err(AncError::InvalidConfig(format!(
                "stop_threshold must be in (0, 1], got {}",
                self.stop_threshold
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn instr_count(&self) -> usize {
        NUM_OPCODES
    }
}

/// One controller command: `out = instr(arg1, arg2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Command {
    pub instr: Opcode,
    pub arg1: usize,
    pub arg2: usize,
    pub out: usize,
}

impl Command {
    pub fn new(instr: Opcode, arg1: usize, arg2: usize, out: usize) -> Self {
        Command {
            instr,
            arg1,
            arg2,
            out,
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "R{} = {}(R{}, R{})",
            self.out, self.instr, self.arg1, self.arg2
        )
    }
}

/// Snapshot of the exact machine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscreteState {
    pub memory: Vec<usize>,
    pub registers: Vec<usize>,
    pub ir: usize,
    pub stopped: bool,
    pub steps_executed: usize,
}

/// Output value and side effect of one instruction on concrete arguments.
///
/// `mem_a` is the memory content at address `a`; it is only consulted by
/// `READ`.
pub fn apply_opcode(
    op: Opcode,
    a: usize,
    b: usize,
    mem_a: usize,
    cfg: &MachineConfig,
) -> (usize, SideEffect) {
    let m = cfg.mem_size;
    debug_assert!(a < m && b < m && mem_a < m);
    match op {
        Opcode::Stop => (0, SideEffect::Stop),
        Opcode::Zero => (0, SideEffect::None),
        Opcode::Inc => ((a + 1) % m, SideEffect::None),
        Opcode::Dec => ((a + m - 1) % m, SideEffect::None),
        Opcode::Add | Opcode::Sub | Opcode::Min | Opcode::Max => (
            op.binary_value(a, b, m).expect("binary opcode"),
            SideEffect::None,
        ),
        Opcode::Read => (mem_a, SideEffect::MemoryRead { addr: a }),
        Opcode::Write => (0, SideEffect::MemoryWrite { addr: a, value: b }),
        Opcode::Jez => {
            if a == 0 {
                (0, SideEffect::Jump { target: b })
            } else {
                (0, SideEffect::None)
            }
        }
    }
}
