use std::collections::HashMap;

use super::ir::{IrProgram, RegisterRole};
use super::parse::{Arg, SourceProgram};
use crate::error::{AncError, Result};
use crate::isa::{Command, MachineConfig};

/// Lower a parsed program to one command per statement.
///
/// Register layout: declared variables in declaration order, then one
/// register per distinct constant value (literals and resolved labels, first
/// use order), then a single scratch register, then spare registers up to
/// `cfg.reg_count`.
pub fn lower(prog: &SourceProgram, cfg: &MachineConfig) -> Result<IrProgram> {
    let m = cfg.mem_size;
    let n_lines = prog.statements.len();
    if n_lines > m {
        return Err(AncError::ProgramTooLong {
            lines: n_lines,
            max: m,
        });
    }

    let labels = prog.label_targets();
    let mut initial = Vec::new();
    let mut roles = Vec::new();
    let mut var_reg: HashMap<&str, usize> = HashMap::new();

    for v in &prog.vars {
        if v.init >= m {
            return Err(AncError::ValueOutOfRange {
                value: v.init,
                modulus: m,
                context: format!("initial value of `{}`", v.name),
            });
        }
        var_reg.insert(&v.name, initial.len());
        initial.push(v.init);
        roles.push(RegisterRole::Variable(v.name.clone()));
    }

    let mut const_reg: HashMap<usize, usize> = HashMap::new();
    let mut arg_regs: Vec<Vec<usize>> = Vec::with_capacity(n_lines);
    for s in &prog.statements {
        let mut regs = Vec::with_capacity(s.args.len());
        for a in &s.args {
            let reg = match a {
                Arg::Name(n) if var_reg.contains_key(n.as_str()) => var_reg[n.as_str()],
                Arg::Name(n) => {
                    let target = *labels.get(n.as_str()).ok_or_else(|| AncError::Unresolved {
                        name: n.clone(),
                        line: s.line,
                    })?;
                    let reg = intern_const(target, &mut const_reg, &mut initial, &mut roles);
                    if let RegisterRole::Constant { labels } = &mut roles[reg] {
                        if !labels.contains(n) {
                            labels.push(n.clone());
                        }
                    }
                    reg
                }
                Arg::Int(v) => {
                    if *v >= m {
                        return Err(AncError::ValueOutOfRange {
                            value: *v,
                            modulus: m,
                            context: format!("literal on line {}", s.line),
                        });
                    }
                    intern_const(*v, &mut const_reg, &mut initial, &mut roles)
                }
            };
            regs.push(reg);
        }
        arg_regs.push(regs);
    }

    let scratch = initial.len();
    initial.push(0);
    roles.push(RegisterRole::Scratch);

    if initial.len() > cfg.reg_count {
        return Err(AncError::RegisterBudget {
            needed: initial.len(),
            available: cfg.reg_count,
        });
    }
    while initial.len() < cfg.reg_count {
        initial.push(0);
        roles.push(RegisterRole::Spare);
    }

    let lines = prog
        .statements
        .iter()
        .zip(&arg_regs)
        .map(|(s, regs)| {
            let out = s
                .dest
                .as_deref()
                .map_or(scratch, |d| var_reg[d]);
            Command::new(
                s.op,
                regs.first().copied().unwrap_or(scratch),
                regs.get(1).copied().unwrap_or(scratch),
                out,
            )
        })
        .collect();

    Ok(IrProgram {
        lines,
        initial_registers: initial,
        register_roles: roles,
    })
}

fn intern_const(
    value: usize,
    table: &mut HashMap<usize, usize>,
    initial: &mut Vec<usize>,
    roles: &mut Vec<RegisterRole>,
) -> usize {
    *table.entry(value).or_insert_with(|| {
        initial.push(value);
        roles.push(RegisterRole::Constant { labels: Vec::new() });
        initial.len() - 1
    })
}

/// Minimum register count `lower` needs for this program.
pub fn registers_needed(prog: &SourceProgram) -> usize {
    let labels = prog.label_targets();
    let vars: std::collections::HashSet<&str> = prog.vars.iter().map(|v| v.name.as_str()).collect();
    let mut consts = std::collections::HashSet::new();
    for s in &prog.statements {
        for a in &s.args {
            match a {
                Arg::Name(n) if vars.contains(n.as_str()) => {}
                Arg::Name(n) => {
                    if let Some(&t) = labels.get(n.as_str()) {
                        consts.insert(t);
                    }
                }
                Arg::Int(v) => {
                    consts.insert(*v);
                }
            }
        }
    }
    prog.vars.len() + consts.len() + 1
}
