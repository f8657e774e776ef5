//! Reverse-mode derivative of the total loss through a soft rollout.
//!
//! The number of steps `T` is taken from the forward pass and treated as a
//! constant. The backward pass walks the recorded steps in reverse, carrying
//! adjoints for memory, registers, the instruction register and the survival
//! probability.

use crate::compiler::Params;
use crate::diffvm::{run_soft_with, OpTables, Rollout, SoftState, StepRecord};
use crate::error::Result;
use crate::isa::{MachineConfig, Opcode, NUM_OPCODES};
use crate::loss::{loss_total, memory_error, LossBreakdown, LossWeights, TaskInstance};
use crate::matrix::{softmax_backward, Matrix};

/// Accumulate `dL/dM += k · 2 · mask · (M - onehot(target))`.
fn add_error_grad(dmem: &mut Matrix, mem: &Matrix, inst: &TaskInstance, k: f64) {
    if k == 0.0 {
        return;
    }
    for (i, (&on, &target)) in inst.mask.iter().zip(&inst.target_tape).enumerate() {
        if !on {
            continue;
        }
        for (j, (d, &v)) in dmem.row_mut(i).iter_mut().zip(mem.row(i)).enumerate() {
            let t = if j == target { 1.0 } else { 0.0 };
            *d += 2.0 * k * (v - t);
        }
    }
}

struct Adjoint {
    memory: Matrix,
    registers: Matrix,
    ir: Vec<f64>,
    survival: f64,
}

/// Backward through one step. `adj` holds adjoints of the state after the
/// step and is overwritten with adjoints of the state before it.
fn step_backward(
    prev: &SoftState,
    rec: &StepRecord,
    survival_prev: f64,
    params: &Params,
    tables: &OpTables,
    adj: &mut Adjoint,
    grads: &mut Params,
) {
    let m = tables.mem_size();
    let r = prev.registers.rows();
    let ctrl = &rec.ctrl;
    let (arg1, arg2) = (&rec.arg1, &rec.arg2);

    let mut de = vec![0.0; NUM_OPCODES];
    let mut darg1 = vec![0.0; m];
    let mut darg2 = vec![0.0; m];
    let mut dout = vec![0.0; m];
    let mut dprev_mem = Matrix::zeros(m, m);
    let mut dprev_reg = Matrix::zeros(r, m);
    let mut dprev_ir = vec![0.0; m];

    // survival: s' = s (1 - e_stop)
    let k_stop = Opcode::Stop.index();
    de[k_stop] -= survival_prev * adj.survival;
    let dsurv_prev = (1.0 - ctrl.e[k_stop]) * adj.survival;

    // memory: M' = M + e_w addr_i (val_j - M_ij)
    let k_write = Opcode::Write.index();
    let e_w = ctrl.e[k_write];
    for i in 0..m {
        let addr = arg1[i];
        let g = e_w * addr;
        let mut daddr = 0.0;
        for j in 0..m {
            let dm = adj.memory.get(i, j);
            let old = prev.memory.get(i, j);
            dprev_mem.add_at(i, j, (1.0 - g) * dm);
            let diff = (arg2[j] - old) * dm;
            daddr += diff;
            darg2[j] += g * dm;
        }
        darg1[i] += e_w * daddr;
        de[k_write] += addr * daddr;
    }

    // registers: R'_i = R_i + o_i (out - R_i)
    let mut do_vec = vec![0.0; r];
    for (i, slot) in do_vec.iter_mut().enumerate() {
        let oi = ctrl.o[i];
        let mut doi = 0.0;
        let drow = adj.registers.row(i);
        let prow = prev.registers.row(i);
        let dst = dprev_reg.row_mut(i);
        for c in 0..m {
            dst[c] += (1.0 - oi) * drow[c];
            doi += (rec.out[c] - prow[c]) * drow[c];
            dout[c] += oi * drow[c];
        }
        *slot = doi;
    }

    // instruction register: IR' = inc + e_j c0 (label - inc)
    let k_jez = Opcode::Jez.index();
    let e_j = ctrl.e[k_jez];
    let c0 = arg1[0];
    let jump = e_j * c0;
    let mut dinc = vec![0.0; m];
    let mut dmix = 0.0;
    for j in 0..m {
        let g = adj.ir[j];
        let inc = prev.ir[(j + m - 1) % m];
        dinc[j] = (1.0 - jump) * g;
        darg2[j] += jump * g;
        dmix += (arg2[j] - inc) * g;
    }
    de[k_jez] += c0 * dmix;
    darg1[0] += e_j * dmix;
    for j in 0..m {
        dprev_ir[j] += dinc[(j + 1) % m];
    }

    // opcode mixture: out = Σ e_k out_k
    for op in Opcode::ALL {
        let k = op.index();
        let row = rec.op_outputs.row(k);
        de[k] += row.iter().zip(&dout).map(|(a, b)| a * b).sum::<f64>();
        let ek = ctrl.e[k];
        if ek == 0.0 {
            continue;
        }
        match op {
            Opcode::Stop | Opcode::Zero | Opcode::Write | Opcode::Jez => {}
            Opcode::Inc => {
                for c in 0..m {
                    darg1[c] += ek * dout[(c + 1) % m];
                }
            }
            Opcode::Dec => {
                for c in 0..m {
                    darg1[c] += ek * dout[(c + m - 1) % m];
                }
            }
            Opcode::Read => {
                for i in 0..m {
                    let a = arg1[i];
                    let mut acc = 0.0;
                    let mrow = prev.memory.row(i);
                    let drow = dprev_mem.row_mut(i);
                    for c in 0..m {
                        let g = ek * dout[c];
                        acc += mrow[c] * g;
                        drow[c] += a * g;
                    }
                    darg1[i] += acc;
                }
            }
            Opcode::Add | Opcode::Sub | Opcode::Min | Opcode::Max => {
                let t = tables.table(op);
                for i in 0..m {
                    let row = &t[i * m..(i + 1) * m];
                    let a = arg1[i];
                    let mut acc = 0.0;
                    for (j, &g) in row.iter().enumerate() {
                        let d = ek * dout[g as usize];
                        acc += arg2[j] * d;
                        darg2[j] += a * d;
                    }
                    darg1[i] += acc;
                }
            }
        }
    }

    // gather: arg1 = Σ a_i R_i
    let mut da = vec![0.0; r];
    let mut db = vec![0.0; r];
    for i in 0..r {
        let row = prev.registers.row(i);
        da[i] = row.iter().zip(&darg1).map(|(x, y)| x * y).sum();
        db[i] = row.iter().zip(&darg2).map(|(x, y)| x * y).sum();
        let (ai, bi) = (ctrl.a[i], ctrl.b[i]);
        for (c, d) in dprev_reg.row_mut(i).iter_mut().enumerate() {
            *d += ai * darg1[c] + bi * darg2[c];
        }
    }

    // controller: p = softmax(W ir)
    let layers: [(&[f64], &[f64], &Matrix, usize); 4] = [
        (&ctrl.e, &de, &params.w_instr, 0),
        (&ctrl.a, &da, &params.w_arg1, 1),
        (&ctrl.b, &db, &params.w_arg2, 2),
        (&ctrl.o, &do_vec, &params.w_out, 3),
    ];
    for (p, dp, w, which) in layers {
        let mut dl = vec![0.0; p.len()];
        softmax_backward(p, dp, &mut dl);
        let gw = match which {
            0 => &mut grads.w_instr,
            1 => &mut grads.w_arg1,
            2 => &mut grads.w_arg2,
            _ => &mut grads.w_out,
        };
        for (k, &d) in dl.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let grow = gw.row_mut(k);
            let wrow = w.row(k);
            for j in 0..m {
                grow[j] += d * prev.ir[j];
                dprev_ir[j] += wrow[j] * d;
            }
        }
    }

    adj.memory = dprev_mem;
    adj.registers = dprev_reg;
    adj.ir = dprev_ir;
    adj.survival = dsurv_prev;
}

/// Gradient of the loss of one rollout.
pub fn rollout_gradient(
    params: &Params,
    rollout: &Rollout,
    inst: &TaskInstance,
    w: &LossWeights,
    cfg: &MachineConfig,
    tables: &OpTables,
) -> Params {
    let m = cfg.mem_size;
    let r = cfg.reg_count;
    let steps = rollout.steps();
    let s = &rollout.survival;

    // direct loss adjoints of survival s_t and memory M^t
    let mut ds = vec![0.0; steps + 1];
    for d in ds.iter_mut().take(steps).skip(1) {
        *d += w.delta;
    }
    if steps == cfg.max_steps {
        ds[steps] += w.beta;
    }
    let errs: Vec<f64> = if w.gamma != 0.0 {
        rollout.states.iter().map(|st| memory_error(&st.memory, inst)).collect()
    } else {
        vec![0.0; steps + 1]
    };
    for t in 2..=steps {
        // term γ (s_{t-1} - s_t) err_t
        ds[t - 1] += w.gamma * errs[t];
        ds[t] -= w.gamma * errs[t];
    }

    let mut grads = Params::zeros(m, r);
    let mut adj = Adjoint {
        memory: Matrix::zeros(m, m),
        registers: Matrix::zeros(r, m),
        ir: vec![0.0; m],
        survival: 0.0,
    };
    add_error_grad(&mut adj.memory, &rollout.states[steps].memory, inst, w.alpha);

    for t in (1..=steps).rev() {
        adj.survival += ds[t];
        if t >= 2 {
            let k = w.gamma * (s[t - 1] - s[t]);
            add_error_grad(&mut adj.memory, &rollout.states[t].memory, inst, k);
        }
        step_backward(
            &rollout.states[t - 1],
            &rollout.records[t - 1],
            s[t - 1],
            params,
            tables,
            &mut adj,
            &mut grads,
        );
    }

    // initial softmaxes
    let init = &rollout.states[0];
    for i in 0..r {
        softmax_backward(init.registers.row(i), adj.registers.row(i), grads.reg_init.row_mut(i));
    }
    softmax_backward(&init.ir, &adj.ir, &mut grads.ir_init);
    grads
}

/// Loss and gradient for one instance.
pub fn instance_gradient(
    params: &Params,
    inst: &TaskInstance,
    w: &LossWeights,
    cfg: &MachineConfig,
    tables: &OpTables,
) -> Result<(LossBreakdown, Params)> {
    let rollout = run_soft_with(params, &inst.input_tape, cfg, tables)?;
    let loss = loss_total(&rollout, inst, w, cfg);
    loss.check_finite()?;
    Ok((loss, rollout_gradient(params, &rollout, inst, w, cfg, tables)))
}

/// Mean loss and gradient over a batch. Per-sample results are summed in
/// batch order, so the result does not depend on scheduling.
pub fn gradient(
    params: &Params,
    batch: &[TaskInstance],
    w: &LossWeights,
    cfg: &MachineConfig,
) -> Result<(LossBreakdown, Params)> {
    let tables = OpTables::new(cfg.mem_size);
    gradient_with(params, batch, w, cfg, &tables, false)
}

pub(crate) fn gradient_with(
    params: &Params,
    batch: &[TaskInstance],
    w: &LossWeights,
    cfg: &MachineConfig,
    tables: &OpTables,
    parallel: bool,
) -> Result<(LossBreakdown, Params)> {
    if batch.is_empty() {
        return Err(crate::error::AncError::InvalidConfig("empty batch".into()));
    }
    let per: Vec<Result<(LossBreakdown, Params)>> = if parallel {
        use rayon::prelude::*;
        batch
            .par_iter()
            .map(|inst| instance_gradient(params, inst, w, cfg, tables))
            .collect()
    } else {
        batch
            .iter()
            .map(|inst| instance_gradient(params, inst, w, cfg, tables))
            .collect()
    };
    let k = 1.0 / batch.len() as f64;
    let mut loss = LossBreakdown::default();
    let mut grads = Params::zeros(cfg.mem_size, cfg.reg_count);
    for res in per {
        let (l, g) = res?;
        loss.add_scaled(&l, k);
        for (dst, src) in grads.buffers_mut().into_iter().zip(g.buffers()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += k * s;
            }
        }
    }
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::{compile, perturb, PadMode};
    use crate::lang::compile_source;

    const PROG: &str = "var x = 1\nx = READ(x)\nWRITE(0, x)\nSTOP()\n";

    fn setup(seed: u64) -> (Params, TaskInstance, MachineConfig) {
        let cfg = MachineConfig::new(8, 4, 6, 1.0).unwrap();
        let ir = compile_source(PROG, &cfg).unwrap();
        let p = perturb(&compile(&ir, &cfg, 1.0, PadMode::Stop).unwrap(), 1.0, seed).unwrap();
        let tape = vec![3, 5, 1, 0, 7, 2, 2, 4];
        let mut target = tape.clone();
        target[0] = 5;
        let mut mask = vec![false; 8];
        mask[0] = true;
        mask[1] = true;
        (
            p,
            TaskInstance {
                input_tape: tape,
                target_tape: target,
                mask,
                bias_tag: String::new(),
            },
            cfg,
        )
    }

    fn weights() -> LossWeights {
        LossWeights {
            alpha: 1.0,
            beta: 0.7,
            gamma: 0.5,
            delta: 0.3,
        }
    }

    #[test]
    fn matches_finite_differences() {
        let (p, inst, cfg) = setup(11);
        let w = weights();
        let (_, g) = gradient(&p, std::slice::from_ref(&inst), &w, &cfg).unwrap();
        let flat = p.to_flat();
        let gflat = g.to_flat();
        let f = |x: &[f64]| {
            let mut q = p.clone();
            q.set_flat(x);
            gradient(&q, std::slice::from_ref(&inst), &w, &cfg).unwrap().0.total
        };
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for k in 0..flat.len() {
            let mut xp = flat.clone();
            xp[k] += h;
            let mut xm = flat.clone();
            xm[k] -= h;
            let fd = (f(&xp) - f(&xm)) / (2.0 * h);
            let rel = (fd - gflat[k]).abs() / fd.abs().max(gflat[k].abs()).max(1e-6);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn duplicated_sample_same_gradient() {
        let (p, inst, cfg) = setup(2);
        let w = weights();
        let (l1, g1) = gradient(&p, std::slice::from_ref(&inst), &w, &cfg).unwrap();
        let (l2, g2) = gradient(&p, &[inst.clone(), inst], &w, &cfg).unwrap();
        assert!((l1.total - l2.total).abs() < 1e-12);
        for (a, b) in g1.to_flat().iter().zip(g2.to_flat()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_objective_has_zero_gradient() {
        // memory never written, already correct on the mask
        let cfg = MachineConfig::new(6, 2, 5, 1.0).unwrap();
        let mut p = Params::zeros(6, 2);
        for j in 0..6 {
            for k in 0..NUM_OPCODES {
                p.w_instr.set(k, j, if k == Opcode::Inc.index() { 0.0 } else { -1e4 });
            }
        }
        let tape = vec![1, 2, 3, 4, 5, 0];
        let inst = TaskInstance {
            input_tape: tape.clone(),
            target_tape: tape,
            mask: vec![true; 6],
            bias_tag: String::new(),
        };
        let w = LossWeights {
            alpha: 1.0,
            beta: 0.0,
            gamma: 0.0,
            delta: 0.0,
        };
        let (l, g) = gradient(&p, &[inst], &w, &cfg).unwrap();
        assert_eq!(l.total, 0.0);
        assert!(g.to_flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn parallel_and_serial_agree_bitwise() {
        let (p, inst, cfg) = setup(5);
        let mut other = inst.clone();
        other.input_tape[1] = 6;
        let batch = vec![inst, other.clone(), other];
        let tables = OpTables::new(8);
        let a = gradient_with(&p, &batch, &weights(), &cfg, &tables, false).unwrap();
        let b = gradient_with(&p, &batch, &weights(), &cfg, &tables, true).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }
}
