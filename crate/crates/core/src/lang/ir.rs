//! Line-per-command intermediate representation and its text form.

use std::fmt::Write as _;

use crate::error::{AncError, Result};
use crate::isa::{Command, MachineConfig, Opcode};

/// Where a register came from during lowering. Diagnostic only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RegisterRole {
    Variable(String),
    /// Materialised literal or resolved label; `labels` lists the labels
    /// sharing the value.
    Constant { labels: Vec<String> },
    Scratch,
    /// Unused register present because the machine is wider than needed.
    Spare,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IrProgram {
    pub lines: Vec<Command>,
    pub initial_registers: Vec<usize>,
    pub register_roles: Vec<RegisterRole>,
}

impl IrProgram {
    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn reg_count(&self) -> usize {
        self.initial_registers.len()
    }

    /// Index of the scratch register, if the program has one.
    pub fn scratch(&self) -> Option<usize> {
        self.register_roles
            .iter()
            .position(|r| *r == RegisterRole::Scratch)
    }

    /// Check the program can run on `cfg` unchanged.
    pub fn check_fits(&self, cfg: &MachineConfig) -> Result<()> {
        if self.lines.len() > cfg.mem_size {
            return Err(AncError::ProgramTooLong {
                lines: self.lines.len(),
                max: cfg.mem_size,
            });
        }
        if self.reg_count() != cfg.reg_count {
            return Err(AncError::DimensionMismatch(format!(
                "program has {} registers, machine has {}",
                self.reg_count(),
                cfg.reg_count
            )));
        }
        for (i, c) in self.lines.iter().enumerate() {
            if c.arg1.max(c.arg2).max(c.out) >= cfg.reg_count {
                return Err(AncError::DimensionMismatch(format!(
                    "line {i} references a register outside 0..{}",
                    cfg.reg_count
                )));
            }
        }
        if let Some(&v) = self.initial_registers.iter().find(|&&v| v >= cfg.mem_size) {
            return Err(AncError::ValueOutOfRange {
                value: v,
                modulus: cfg.mem_size,
                context: "initial register".into(),
            });
        }
        Ok(())
    }

    /// Deterministic text rendering; [`IrProgram::from_text`] inverts it.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# anc-ir v1\n");
        let _ = writeln!(s, "registers {}", self.reg_count());
        for (i, (v, role)) in self
            .initial_registers
            .iter()
            .zip(&self.register_roles)
            .enumerate()
        {
            let _ = write!(s, "R{i} = {v}");
            match role {
                RegisterRole::Variable(n) => {
                    let _ = write!(s, " var {n}");
                }
                RegisterRole::Constant { labels } => {
                    s.push_str(" const");
                    for l in labels {
                        let _ = write!(s, " {l}");
                    }
                }
                RegisterRole::Scratch => s.push_str(" scratch"),
                RegisterRole::Spare => s.push_str(" spare"),
            }
            s.push('\n');
        }
        let _ = writeln!(s, "lines {}", self.lines.len());
        for (i, c) in self.lines.iter().enumerate() {
            let _ = writeln!(s, "{i}: {c}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<IrProgram> {
        let mut lines_iter = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let fmt_err = |line: usize, msg: &str| AncError::Format {
            line,
            msg: msg.to_string(),
        };

        let (ln, header) = lines_iter.next().ok_or_else(|| fmt_err(0, "empty IR"))?;
        let nregs: usize = header
            .strip_prefix("registers ")
            .and_then(|n| n.trim().parse().ok())
            .ok_or_else(|| fmt_err(ln, "expected `registers N`"))?;

        let mut initial_registers = Vec::with_capacity(nregs);
        let mut register_roles = Vec::with_capacity(nregs);
        for i in 0..nregs {
            let (ln, l) = lines_iter
                .next()
                .ok_or_else(|| fmt_err(0, "missing register line"))?;
            let rest = l
                .strip_prefix(&format!("R{i} = "))
                .ok_or_else(|| fmt_err(ln, "expected `R<i> = <value> <role>`"))?;
            let mut words = rest.split_whitespace();
            let value: usize = words
                .next()
                .and_then(|w| w.parse().ok())
                .ok_or_else(|| fmt_err(ln, "bad register value"))?;
            let role = match words.next() {
                Some("var") => RegisterRole::Variable(
                    words
                        .next()
                        .ok_or_else(|| fmt_err(ln, "variable name missing"))?
                        .to_string(),
                ),
                Some("const") => RegisterRole::Constant {
                    labels: words.by_ref().map(str::to_string).collect(),
                },
                Some("scratch") => RegisterRole::Scratch,
                Some("spare") => RegisterRole::Spare,
                _ => return Err(fmt_err(ln, "unknown register role")),
            };
            initial_registers.push(value);
            register_roles.push(role);
        }

        let (ln, l) = lines_iter
            .next()
            .ok_or_else(|| fmt_err(0, "missing `lines N`"))?;
        let nlines: usize = l
            .strip_prefix("lines ")
            .and_then(|n| n.trim().parse().ok())
            .ok_or_else(|| fmt_err(ln, "expected `lines N`"))?;
        let mut lines = Vec::with_capacity(nlines);
        for i in 0..nlines {
            let (ln, l) = lines_iter
                .next()
                .ok_or_else(|| fmt_err(0, "missing command line"))?;
            let body = l
                .strip_prefix(&format!("{i}: "))
                .ok_or_else(|| fmt_err(ln, "expected `<idx>: R<o> = OP(R<a>, R<b>)`"))?;
            lines.push(parse_command(body).ok_or_else(|| fmt_err(ln, "malformed command"))?);
        }
        if let Some((ln, _)) = lines_iter.next() {
            return Err(fmt_err(ln, "trailing content"));
        }
        Ok(IrProgram {
            lines,
            initial_registers,
            register_roles,
        })
    }
}

fn parse_reg(s: &str) -> Option<usize> {
    s.trim().strip_prefix('R')?.parse().ok()
}

fn parse_command(body: &str) -> Option<Command> {
    let (out, rhs) = body.split_once('=')?;
    let (op, args) = rhs.trim().split_once('(')?;
    let args = args.strip_suffix(')')?;
    let (a, b) = args.split_once(',')?;
    Some(Command {
        instr: op.trim().parse::<Opcode>().ok()?,
        arg1: parse_reg(a)?,
        arg2: parse_reg(b)?,
        out: parse_reg(out)?,
    })
}
