mod common;

use anc_core::decompile::DEFAULT_PROB_FLOOR;
use anc_core::loss::loss_total;
use anc_core::tasks::{instances_from_text, instances_to_text, TaskKind, TaskSpec};
use anc_core::trainer::optimise;
use anc_core::{
    compile, decompile, gradient, perturb, run_discrete, run_soft, IrProgram, LossWeights, MachineConfig, PadMode,
    Params, TaskInstance, TrainingConfig, KAPPA_SHARP, KAPPA_SOFT,
};
use common::{padded, EXAMPLES};
use proptest::prelude::*;

#[test]
fn reference_examples() {
    for ex in EXAMPLES {
        let spec = TaskSpec::new(ex.kind);
        let m = spec.cfg.mem_size;
        let ir = spec.generic_program().unwrap();
        let run = run_discrete(&ir, &padded(ex.input, m), &spec.cfg).unwrap();
        assert!(run.halted, "{}", ex.kind);
        assert_eq!(run.final_tape, padded(ex.output, m), "{}", ex.kind);
    }
}

#[test]
fn samples_satisfy_their_targets() {
    for kind in TaskKind::ALL {
        let spec = TaskSpec::new(kind);
        let ir = spec.generic_program().unwrap();
        for biased in [true, false] {
            for inst in spec.dataset(biased, 20, 5) {
                inst.validate(spec.cfg.mem_size).unwrap();
                let run = run_discrete(&ir, &inst.input_tape, &spec.cfg).unwrap();
                assert!(run.halted && inst.matches(&run.final_tape), "{kind} {:?}", inst.input_tape);
            }
        }
    }
}

#[test]
fn instance_file_round_trip() {
    let data = TaskSpec::new(TaskKind::ListK).dataset(true, 4, 9);
    let back = instances_from_text(&instances_to_text(&data)).unwrap();
    assert_eq!(back, data);
}

fn fd_worst(params: &Params, inst: &TaskInstance, w: &LossWeights, cfg: &MachineConfig, stride: usize) -> f64 {
    let loss = |p: &Params| {
        let r = run_soft(p, &inst.input_tape, cfg).unwrap();
        (loss_total(&r, inst, w, cfg).total, r.steps())
    };
    let (l0, t0) = loss(params);
    let floor = 1e-6 * l0.abs().max(1.0);
    let g = gradient(params, std::slice::from_ref(inst), w, cfg).unwrap().1.to_flat();
    let flat = params.to_flat();
    let mut q = params.clone();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for k in (0..flat.len()).step_by(stride) {
        let mut x = flat.clone();
        x[k] += h;
        q.set_flat(&x);
        let (fp, tp) = loss(&q);
        x[k] -= 2.0 * h;
        q.set_flat(&x);
        let (fm, tm) = loss(&q);
        assert_eq!((tp, tm), (t0, t0), "step count moved under perturbation");
        let fd = (fp - fm) / (2.0 * h);
        worst = worst.max((fd - g[k]).abs() / fd.abs().max(g[k].abs()).max(floor));
    }
    worst
}

#[test]
fn gradient_check_mid_training() {
    let spec = TaskSpec::new(TaskKind::Access);
    let ir = spec.generic_program().unwrap();
    let init = perturb(&compile(&ir, &spec.cfg, KAPPA_SOFT, PadMode::Stop).unwrap(), 0.5, 3).unwrap();
    let probe = spec.sample(true, 77);
    let mut params = init;
    for chunk in 0..3 {
        let tc = TrainingConfig { iters: 15, lr: 0.05, parallel: false, ..TrainingConfig::default() };
        params = optimise(&params, &spec, &tc, chunk, false).unwrap().0;
        let worst = fd_worst(&params, &probe, &tc.weights, &spec.cfg, 3);
        assert!(worst < 1e-4, "after {} iterations: {worst}", 15 * (chunk + 1));
    }
}

fn corpus_case() -> impl Strategy<Value = (TaskKind, u64)> {
    let small: Vec<TaskKind> = TaskKind::ALL
        .into_iter()
        .filter(|k| k.default_config().mem_size <= 20 && *k != TaskKind::Sort)
        .collect();
    (prop::sample::select(small), any::<u64>())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn sharp_soft_matches_discrete((kind, seed) in corpus_case()) {
        let spec = TaskSpec::new(kind);
        let ir = spec.generic_program().unwrap();
        let p = compile(&ir, &spec.cfg, KAPPA_SHARP, PadMode::Stop).unwrap();
        let inst = spec.sample(seed % 2 == 0, seed);
        let d = run_discrete(&ir, &inst.input_tape, &spec.cfg).unwrap();
        let s = run_soft(&p, &inst.input_tape, &spec.cfg).unwrap();
        prop_assert_eq!(s.steps(), d.steps);
        prop_assert_eq!(s.argmax_tape(), d.final_tape);
    }

    #[test]
    fn small_noise_keeps_program((kind, seed) in corpus_case()) {
        let spec = TaskSpec::new(kind);
        let ir = spec.generic_program().unwrap();
        let p = perturb(&compile(&ir, &spec.cfg, KAPPA_SOFT, PadMode::Stop).unwrap(), 0.1, seed).unwrap();
        let back = decompile(&p, DEFAULT_PROB_FLOOR).to_ir();
        prop_assert_eq!(&back.lines[..ir.len()], &ir.lines[..]);
        prop_assert_eq!(&back.initial_registers, &ir.initial_registers);
    }

    #[test]
    fn params_text_round_trip(seed in any::<u64>(), sigma in 0.0f64..10.0) {
        let spec = TaskSpec::new(TaskKind::Swap);
        let ir: IrProgram = spec.generic_program().unwrap();
        let p = perturb(&compile(&ir, &spec.cfg, KAPPA_SOFT, PadMode::Uniform).unwrap(), sigma, seed).unwrap();
        prop_assert_eq!(Params::from_text(&p.to_text()).unwrap(), p);
    }

    #[test]
    fn loss_is_nonnegative(seed in any::<u64>(), sigma in 0.0f64..5.0) {
        let spec = TaskSpec::new(TaskKind::Access);
        let ir = spec.generic_program().unwrap();
        let p = perturb(&compile(&ir, &spec.cfg, KAPPA_SOFT, PadMode::Stop).unwrap(), sigma, seed).unwrap();
        let inst = spec.sample(true, seed);
        let r = run_soft(&p, &inst.input_tape, &spec.cfg).unwrap();
        let l = loss_total(&r, &inst, &LossWeights::default(), &spec.cfg);
        prop_assert!(l.total >= 0.0 && l.correctness >= 0.0 && l.confidence >= 0.0 && l.efficiency >= 0.0);
    }
}

#[test]
fn bundled_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        anc_core::experiment::Experiment::from_toml(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert!(n >= 3);
}
