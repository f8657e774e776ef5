//! Source language, lowering, and the intermediate representation.

mod ir;
mod lower;
mod parse;

pub use ir::{IrProgram, RegisterRole};
pub use lower::{lower, registers_needed};
pub use parse::{parse, Arg, SourceProgram, Statement, VarDecl};

use crate::error::Result;
use crate::isa::MachineConfig;

/// Parse and lower in one go.
pub fn compile_source(source: &str, cfg: &MachineConfig) -> Result<IrProgram> {
    lower(&parse(source)?, cfg)
}
