use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anc_core::decompile::{classify_on, decompile};
use anc_core::experiment::{Experiment, SeedRow, Summary};
use anc_core::tasks::{instances_from_text, TaskKind, TaskSpec};
use anc_core::{compile, compile_source, run_discrete, run_soft, AncError, MachineConfig, PadMode, Params};
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

/// Compile, run, train and decompile register-machine programs.
#[derive(Parser)]
#[command(name = "anc", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compile a source program into a parameter file.
    Compile {
        /// Source file.
        source: PathBuf,
        /// Memory size (also the value range).
        #[arg(long = "M", default_value_t = 20)]
        mem_size: usize,
        /// Register count. Defaults to what the program needs.
        #[arg(long = "R")]
        reg_count: Option<usize>,
        /// Logit scale; 50 is sharp, 5 is the soft training start.
        #[arg(long, default_value_t = anc_core::KAPPA_SHARP)]
        kappa: f64,
        /// How columns past the program end are filled: stop | uniform.
        #[arg(long, default_value = "stop")]
        pad: PadMode,
        /// Output path; stdout when absent.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run a source program or a parameter file on a tape.
    Run {
        /// Source file or parameter file.
        program: PathBuf,
        /// Input tape, comma or space separated; zero padded to M.
        #[arg(long, allow_hyphen_values = true)]
        tape: String,
        /// Memory size for source programs. Defaults to the tape length.
        #[arg(long = "M")]
        mem_size: Option<usize>,
        /// Register count for source programs.
        #[arg(long = "R")]
        reg_count: Option<usize>,
        /// Run the differentiable machine instead of the exact one.
        #[arg(long)]
        soft: bool,
        /// Print one line per step.
        #[arg(long)]
        trace: bool,
        /// Halting threshold on the cumulative stop probability.
        #[arg(long, default_value_t = 0.9)]
        eta: f64,
        /// Step limit.
        #[arg(long, default_value_t = 1000)]
        tmax: usize,
        /// Logit scale used when a source program runs with --soft.
        #[arg(long, default_value_t = anc_core::KAPPA_SHARP)]
        kappa: f64,
    },
    /// Train from an experiment file; writes one CSV row per seed.
    Train {
        /// Experiment file (TOML).
        config: PathBuf,
        /// Override the seed list with seeds 0..N.
        #[arg(long)]
        seeds: Option<u64>,
        /// Worker threads; defaults to all cores.
        #[arg(long)]
        jobs: Option<usize>,
        /// CSV output path; stdout when absent.
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Directory receiving the parameters of every successful seed.
        #[arg(long)]
        save_params: Option<PathBuf>,
    },
    /// Print the listing recovered from a parameter file and its
    /// interpretability class.
    Decompile {
        /// Parameter file.
        params: PathBuf,
        /// Entries at or below this probability print as neutral tokens.
        #[arg(long, default_value_t = anc_core::decompile::DEFAULT_PROB_FLOOR)]
        floor: f64,
        /// Classify on biased samples of this task instead of a zero tape.
        #[arg(long)]
        task: Option<TaskKind>,
        /// Classify on the input tapes of an instance file.
        #[arg(long, conflicts_with = "task")]
        instances: Option<PathBuf>,
        #[arg(long, default_value_t = 0.9)]
        eta: f64,
        #[arg(long, default_value_t = 1000)]
        tmax: usize,
    },
    /// List the bundled example programs, or print one.
    Corpus {
        name: Option<String>,
    },
}

/// Task-level failure, reported with exit code 1.
#[derive(Debug)]
struct TaskFailure(String);

impl std::fmt::Display for TaskFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for TaskFailure {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<TaskFailure>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Compile {
            source,
            mem_size,
            reg_count,
            kappa,
            pad,
            out,
        } => cmd_compile(&source, mem_size, reg_count, kappa, pad, out.as_deref()),
        Cmd::Run {
            program,
            tape,
            mem_size,
            reg_count,
            soft,
            trace,
            eta,
            tmax,
            kappa,
        } => cmd_run(&program, &tape, mem_size, reg_count, soft, trace, eta, tmax, kappa),
        Cmd::Train {
            config,
            seeds,
            jobs,
            out,
            save_params,
        } => cmd_train(&config, seeds, jobs, out.as_deref(), save_params.as_deref()),
        Cmd::Decompile {
            params,
            floor,
            task,
            instances,
            eta,
            tmax,
        } => cmd_decompile(&params, floor, task, instances.as_deref(), eta, tmax),
        Cmd::Corpus { name } => cmd_corpus(name.as_deref()),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => io::stdout().write_all(text.as_bytes()).map_err(Into::into),
    }
}

fn is_params(text: &str) -> bool {
    text.trim_start().starts_with("anc-params")
}

/// Registers needed by a source program, found by lowering on a roomy machine.
fn needed_registers(src: &str, m: usize) -> Result<usize> {
    let cfg = MachineConfig::new(m.max(2), 64, 1, 0.9)?;
    match compile_source(src, &cfg) {
        Ok(ir) => Ok(ir.reg_count()),
        Err(AncError::ProgramTooLong { .. }) => Ok(64),
        Err(e) => Err(e.into()),
    }
}

fn cmd_compile(source: &Path, m: usize, r: Option<usize>, kappa: f64, pad: PadMode, out: Option<&Path>) -> Result<()> {
    let src = read(source)?;
    let r = match r {
        Some(r) => r,
        None => needed_registers(&src, m)?,
    };
    let cfg = MachineConfig::new(m, r, 1, 0.9)?;
    let ir = compile_source(&src, &cfg).with_context(|| source.display().to_string())?;
    let params = compile(&ir, &cfg, kappa, pad)?;
    emit(out, &params.to_text())
}

fn parse_tape(text: &str) -> Result<Vec<usize>> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| anyhow::anyhow!("value out of range: `{s}` is not a tape value"))
        })
        .collect()
}

fn fit_tape(mut tape: Vec<usize>, m: usize) -> Result<Vec<usize>> {
    if tape.len() > m {
        bail!("tape has {} cells but the machine has {m}", tape.len());
    }
    tape.resize(m, 0);
    Ok(tape)
}

fn fmt_tape(tape: &[usize]) -> String {
    tape.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    program: &Path,
    tape: &str,
    m: Option<usize>,
    r: Option<usize>,
    soft: bool,
    trace: bool,
    eta: f64,
    tmax: usize,
    kappa: f64,
) -> Result<()> {
    let text = read(program)?;
    let tape = parse_tape(tape)?;
    if is_params(&text) {
        let params = Params::from_text(&text)?;
        let cfg = MachineConfig::new(params.mem_size(), params.reg_count(), tmax, eta)?;
        let tape = fit_tape(tape, cfg.mem_size)?;
        let ro = run_soft(&params, &tape, &cfg)?;
        if trace {
            print!("{}", ro.dump());
        }
        println!("tape: {}", fmt_tape(&ro.argmax_tape()));
        println!("steps: {}", ro.steps());
        println!("p_stop: {:.6}", ro.final_state().p_stop);
        return Ok(());
    }
    let m = m.unwrap_or(tape.len());
    let r = match r {
        Some(r) => r,
        None => needed_registers(&text, m)?,
    };
    let cfg = MachineConfig::new(m, r, tmax, eta)?;
    let ir = compile_source(&text, &cfg).with_context(|| program.display().to_string())?;
    let tape = fit_tape(tape, m)?;
    if soft {
        let params = compile(&ir, &cfg, kappa, PadMode::Stop)?;
        let ro = run_soft(&params, &tape, &cfg)?;
        if trace {
            print!("{}", ro.dump());
        }
        println!("tape: {}", fmt_tape(&ro.argmax_tape()));
        println!("steps: {}", ro.steps());
        println!("p_stop: {:.6}", ro.final_state().p_stop);
    } else {
        let run = run_discrete(&ir, &tape, &cfg)?;
        if trace {
            print!("{}", run.dump(&ir));
        }
        println!("tape: {}", fmt_tape(&run.final_tape));
        println!("steps: {}", run.steps);
        println!("halted: {}", run.halted);
    }
    Ok(())
}

fn cmd_train(
    config: &Path,
    seeds: Option<u64>,
    jobs: Option<usize>,
    out: Option<&Path>,
    save: Option<&Path>,
) -> Result<()> {
    let mut exp = Experiment::from_toml(&read(config)?).with_context(|| config.display().to_string())?;
    if let Some(n) = seeds {
        if n == 0 {
            bail!("--seeds must be positive");
        }
        exp.training.seeds = (0..n).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .context("building thread pool")?;
    let report = pool.install(|| exp.run())?;

    let mut w = csv::Writer::from_writer(Vec::new());
    for s in &report.seeds {
        w.serialize(SeedRow::from(s))?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!(e.to_string()))?;
    emit(out, &String::from_utf8(bytes)?)?;

    if let Some(dir) = save {
        fs::create_dir_all(dir)?;
        for s in report.seeds.iter().filter(|s| s.success) {
            fs::write(dir.join(format!("seed{}.params", s.seed)), s.params.to_text())?;
        }
    }

    let sum = Summary::of(&report);
    let opt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.2}"));
    eprintln!(
        "task {} | generic {:.2} | learned {} | ideal {} | success rate {:.0}% ({} seeds, lr {})",
        sum.task,
        sum.generic,
        opt(sum.learned),
        opt(sum.ideal),
        100.0 * sum.success_rate,
        sum.seeds,
        sum.lr
    );
    if report.successes() == 0 {
        return Err(TaskFailure("no seed produced a faster correct program".into()).into());
    }
    Ok(())
}

fn cmd_decompile(
    path: &Path,
    floor: f64,
    task: Option<TaskKind>,
    instances: Option<&Path>,
    eta: f64,
    tmax: usize,
) -> Result<()> {
    if !(floor > 0.0 && floor < 1.0) {
        bail!("--floor must lie in (0, 1)");
    }
    let params = Params::from_text(&read(path)?)?;
    let cfg = MachineConfig::new(params.mem_size(), params.reg_count(), tmax, eta)?;
    print!("{}", decompile(&params, floor));

    let tapes: Vec<Vec<usize>> = if let Some(kind) = task {
        let spec = TaskSpec::with_config(kind, cfg)?;
        spec.dataset(true, 20, 0).into_iter().map(|i| i.input_tape).collect()
    } else if let Some(p) = instances {
        instances_from_text(&read(p)?)?.into_iter().map(|i| i.input_tape).collect()
    } else {
        vec![vec![0; cfg.mem_size]]
    };
    let class = classify_on(&params, &cfg, &tapes)?;
    println!("\nInterpretability class: {}", class.class);
    for e in &class.evidence {
        println!("  {e}");
    }
    Ok(())
}

fn cmd_corpus(name: Option<&str>) -> Result<()> {
    let corpus = anc_core::corpus();
    match name {
        None => {
            for (n, _) in &corpus {
                println!("{n}");
            }
        }
        Some(want) => {
            let kind: TaskKind = want.parse()?;
            print!("{}", kind.generic_source());
        }
    }
    Ok(())
}
