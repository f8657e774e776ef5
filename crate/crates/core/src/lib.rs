//! Compile register-machine programs into a differentiable machine and
//! optimise them by gradient descent for a given input distribution.

pub mod compiler;
pub mod decompile;
pub mod diffvm;
pub mod discrete;
pub mod error;
pub mod experiment;
pub mod grad;
pub mod isa;
pub mod lang;
pub mod loss;
pub mod matrix;
pub mod tasks;
pub mod trainer;

pub use compiler::{compile, perturb, PadMode, Params, KAPPA_SHARP, KAPPA_SOFT};
pub use decompile::{classify_interpretability, decompile, Interpretability, Listing};
pub use diffvm::{controller_forward, gather_args, instr_output, run_soft, soft_step, ControllerOutput, Rollout, SoftState};
pub use discrete::{run_discrete, DiscreteRun};
pub use error::{AncError, Result};
pub use grad::gradient;
pub use isa::{apply_opcode, Command, DiscreteState, MachineConfig, Opcode, SideEffect, NUM_OPCODES};
pub use lang::{compile_source, lower, parse, IrProgram, SourceProgram};
pub use loss::{LossBreakdown, LossWeights, TaskInstance};
pub use tasks::{corpus, TaskKind, TaskSpec};
pub use trainer::{sweep, train, Adam, SeedReport, TrainReport, TrainingConfig};
