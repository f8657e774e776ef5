//! Compilation of an [`IrProgram`] into controller parameters.
//!
//! Column `j` of every weight matrix encodes line `j` of the program: the
//! selected row gets logit `κ`, every other row 0. With a Dirac instruction
//! register the controller's matrix-vector product selects exactly that
//! column, so a large `κ` reproduces the program and a small `κ` gives a
//! trainable, argmax-correct approximation of it.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{AncError, Result};
use crate::isa::{MachineConfig, Opcode, NUM_OPCODES};
use crate::lang::IrProgram;
use crate::matrix::Matrix;

/// Logit scale giving near-Dirac controller outputs.
pub const KAPPA_SHARP: f64 = 50.0;
/// Logit scale used to initialise training.
pub const KAPPA_SOFT: f64 = 5.0;

/// How weight columns past the end of the program are filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PadMode {
    /// `STOP` with scratch arguments.
    #[default]
    Stop,
    /// All-zero logits, i.e. uniform distributions.
    Uniform,
}

impl FromStr for PadMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stop" => Ok(PadMode::Stop),
            "uniform" => Ok(PadMode::Uniform),
            other => Err(format!("unknown pad mode `{other}` (expected stop|uniform)")),
        }
    }
}

/// Learnable parameters: four controller layers plus the initial register
/// and instruction-register logits. All entries are logits; the machine
/// applies a softmax before use.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// N × M
    pub w_instr: Matrix,
    /// R × M
    pub w_arg1: Matrix,
    /// R × M
    pub w_arg2: Matrix,
    /// R × M
    pub w_out: Matrix,
    /// R × M; row `i` is the logit vector of register `i`'s initial value.
    pub reg_init: Matrix,
    /// length M
    pub ir_init: Vec<f64>,
}

impl Params {
    pub fn zeros(mem_size: usize, reg_count: usize) -> Self {
        Params {
            w_instr: Matrix::zeros(NUM_OPCODES, mem_size),
            w_arg1: Matrix::zeros(reg_count, mem_size),
            w_arg2: Matrix::zeros(reg_count, mem_size),
            w_out: Matrix::zeros(reg_count, mem_size),
            reg_init: Matrix::zeros(reg_count, mem_size),
            ir_init: vec![0.0; mem_size],
        }
    }

    pub fn mem_size(&self) -> usize {
        self.ir_init.len()
    }

    pub fn reg_count(&self) -> usize {
        self.w_arg1.rows()
    }

    pub fn check_shape(&self, cfg: &MachineConfig) -> Result<()> {
        let (m, r) = (cfg.mem_size, cfg.reg_count);
        let ok = self.w_instr.rows() == NUM_OPCODES
            && self.w_instr.cols() == m
            && [&self.w_arg1, &self.w_arg2, &self.w_out, &self.reg_init]
                .iter()
                .all(|w| w.rows() == r && w.cols() == m)
            && self.ir_init.len() == m;
        if ok {
            Ok(())
        } else {
            Err(AncError::DimensionMismatch(format!(
                "parameters are for M={}, R={}; machine has M={m}, R={r}",
                self.mem_size(),
                self.reg_count()
            )))
        }
    }

    pub fn buffers(&self) -> [&[f64]; 6] {
        [
            self.w_instr.as_slice(),
            self.w_arg1.as_slice(),
            self.w_arg2.as_slice(),
            self.w_out.as_slice(),
            self.reg_init.as_slice(),
            &self.ir_init,
        ]
    }

    pub fn buffers_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.w_instr.as_mut_slice(),
            self.w_arg1.as_mut_slice(),
            self.w_arg2.as_mut_slice(),
            self.w_out.as_mut_slice(),
            self.reg_init.as_mut_slice(),
            &mut self.ir_init,
        ]
    }

    pub fn len(&self) -> usize {
        self.buffers().iter().map(|b| b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat copy, buffers in [`Params::buffers`] order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.buffers().concat()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.len());
        let mut off = 0;
        for b in self.buffers_mut() {
            b.copy_from_slice(&flat[off..off + b.len()]);
            off += b.len();
        }
    }

    pub fn is_finite(&self) -> bool {
        self.buffers().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Multiply every logit by `k`.
    pub fn scaled(&self, k: f64) -> Params {
        let mut p = self.clone();
        for b in p.buffers_mut() {
            b.iter_mut().for_each(|v| *v *= k);
        }
        p
    }

    const NAMES: [&'static str; 6] = ["w_instr", "w_arg1", "w_arg2", "w_out", "reg_init", "ir_init"];

    /// Versioned text serialisation. Floats use Rust's shortest round-trip
    /// representation, so `from_text(to_text(p)) == p` exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::from("anc-params v1\n");
        let _ = writeln!(s, "N {} M {} R {}", NUM_OPCODES, self.mem_size(), self.reg_count());
        let mats: [(&str, usize, usize, &[f64]); 6] = [
            (Self::NAMES[0], self.w_instr.rows(), self.w_instr.cols(), self.w_instr.as_slice()),
            (Self::NAMES[1], self.w_arg1.rows(), self.w_arg1.cols(), self.w_arg1.as_slice()),
            (Self::NAMES[2], self.w_arg2.rows(), self.w_arg2.cols(), self.w_arg2.as_slice()),
            (Self::NAMES[3], self.w_out.rows(), self.w_out.cols(), self.w_out.as_slice()),
            (Self::NAMES[4], self.reg_init.rows(), self.reg_init.cols(), self.reg_init.as_slice()),
            (Self::NAMES[5], 1, self.ir_init.len(), &self.ir_init),
        ];
        for (name, rows, cols, data) in mats {
            let _ = writeln!(s, "{name} {rows} {cols}");
            for r in 0..rows {
                let row = &data[r * cols..(r + 1) * cols];
                let line = row.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ");
                s.push_str(&line);
                s.push('\n');
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Params> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let err = |line: usize, msg: String| AncError::Format { line, msg };
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| err(0, format!("unexpected end of file, expected {what}")))
        };

        let (ln, magic) = next("header")?;
        if magic != "anc-params v1" {
            return Err(err(ln, format!("unsupported header `{magic}`")));
        }
        let (ln, dims) = next("dimensions")?;
        let words: Vec<&str> = dims.split_whitespace().collect();
        let parse_dim = |key: &str, idx: usize| -> Result<usize> {
            if words.get(idx) != Some(&key) {
                return Err(err(ln, format!("expected `{key}` in dimension line")));
            }
            words
                .get(idx + 1)
                .and_then(|w| w.parse().ok())
                .ok_or_else(|| err(ln, format!("bad value for {key}")))
        };
        let n = parse_dim("N", 0)?;
        let m = parse_dim("M", 2)?;
        let r = parse_dim("R", 4)?;
        if n != NUM_OPCODES {
            return Err(err(ln, format!("N must be {NUM_OPCODES}, got {n}")));
        }

        let mut p = Params::zeros(m, r);
        let expected = [(n, m), (r, m), (r, m), (r, m), (r, m), (1, m)];
        for (k, buf) in p.buffers_mut().into_iter().enumerate() {
            let (ln, head) = next("matrix header")?;
            let hw: Vec<&str> = head.split_whitespace().collect();
            let want = format!("{} {} {}", Self::NAMES[k], expected[k].0, expected[k].1);
            if hw.join(" ") != want {
                return Err(err(ln, format!("expected `{want}`, found `{head}`")));
            }
            let cols = expected[k].1;
            for row in 0..expected[k].0 {
                let (ln, l) = next("matrix row")?;
                let vals: Vec<f64> = l
                    .split_whitespace()
                    .map(|w| w.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| err(ln, format!("bad float: {e}")))?;
                if vals.len() != cols {
                    return Err(err(ln, format!("expected {cols} values, found {}", vals.len())));
                }
                if vals.iter().any(|v| !v.is_finite()) {
                    return Err(err(ln, "non-finite value".into()));
                }
                buf[row * cols..(row + 1) * cols].copy_from_slice(&vals);
            }
        }
        Ok(p)
    }
}

/// Encode `ir` as controller logits scaled by `kappa`.
pub fn compile(ir: &IrProgram, cfg: &MachineConfig, kappa: f64, pad: PadMode) -> Result<Params> {
    ir.check_fits(cfg)?;
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(AncError::InvalidConfig(format!("kappa must be positive, got {kappa}")));
    }
    let (m, r) = (cfg.mem_size, cfg.reg_count);
    let mut p = Params::zeros(m, r);
    let scratch = ir.scratch().unwrap_or(r - 1);

    for col in 0..m {
        let cmd = match ir.lines.get(col) {
            Some(c) => *c,
            None => match pad {
                PadMode::Stop => crate::isa::Command::new(Opcode::Stop, scratch, scratch, scratch),
                PadMode::Uniform => continue,
            },
        };
        p.w_instr.set(cmd.instr.index(), col, kappa);
        p.w_arg1.set(cmd.arg1, col, kappa);
        p.w_arg2.set(cmd.arg2, col, kappa);
        p.w_out.set(cmd.out, col, kappa);
    }
    for (i, &v) in ir.initial_registers.iter().enumerate() {
        p.reg_init.set(i, v, kappa);
    }
    p.ir_init[0] = kappa;
    Ok(p)
}

/// Add i.i.d. zero-mean Gaussian noise of standard deviation `sigma` to every
/// logit.
pub fn perturb(params: &Params, sigma: f64, seed: u64) -> Result<Params> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(AncError::InvalidConfig(format!("sigma must be >= 0, got {sigma}")));
    }
    let mut out = params.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("valid sigma");
    for b in out.buffers_mut() {
        for v in b.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::compile_source;
    use crate::matrix::{argmax, softmax_vec};

    const LISTK: &str = "\
var p_out = 0
var p_current = 0
var val_current = 0
var k = 0
k = READ(1)
p_out = READ(2)
l_loop: p_current = READ(p_current)
k = DEC(k)
JEZ(k, l_stop)
JEZ(0, l_loop)
l_stop: p_current = INC(p_current)
p_current = READ(p_current)
WRITE(p_out, p_current)
STOP()
";

    fn listk() -> (IrProgram, MachineConfig) {
        let cfg = MachineConfig::new(20, 9, 100, 0.5).unwrap();
        (compile_source(LISTK, &cfg).unwrap(), cfg)
    }

    fn argmaxes(p: &Params) -> Vec<usize> {
        let mut out = Vec::new();
        for w in [&p.w_instr, &p.w_arg1, &p.w_arg2, &p.w_out] {
            for j in 0..w.cols() {
                out.push(argmax(&w.column(j)).0);
            }
        }
        for i in 0..p.reg_init.rows() {
            out.push(argmax(p.reg_init.row(i)).0);
        }
        out.push(argmax(&p.ir_init).0);
        out
    }

    #[test]
    fn first_argument_of_first_line_holds_one() {
        let (ir, cfg) = listk();
        let p = compile(&ir, &cfg, KAPPA_SHARP, PadMode::Stop).unwrap();
        let (reg, _) = argmax(&p.w_arg1.column(0));
        assert_eq!(ir.initial_registers[reg], 1);
        assert_eq!(ir.lines[0].instr, Opcode::Read);
    }

    #[test]
    fn sharp_columns_are_nearly_dirac() {
        let (ir, cfg) = listk();
        let p = compile(&ir, &cfg, KAPPA_SHARP, PadMode::Stop).unwrap();
        // one-hot·50 over n entries: mass e^50 / (e^50 + n - 1)
        for w in [&p.w_instr, &p.w_arg1, &p.w_arg2, &p.w_out] {
            for j in 0..w.cols() {
                let (_, top) = argmax(&softmax_vec(&w.column(j)));
                let n = w.rows() as f64;
                let oracle = 1.0 / (1.0 + (n - 1.0) * (-50.0f64).exp());
                assert!((top - oracle).abs() < 1e-15);
                assert!(top >= 1.0 - 1e-18);
            }
        }
    }

    #[test]
    fn padding_modes() {
        let (ir, cfg) = listk();
        let stop = compile(&ir, &cfg, 5.0, PadMode::Stop).unwrap();
        let uni = compile(&ir, &cfg, 5.0, PadMode::Uniform).unwrap();
        let col = ir.len() + 1;
        assert_eq!(argmax(&stop.w_instr.column(col)).0, Opcode::Stop.index());
        assert!(uni.w_instr.column(col).iter().all(|&v| v == 0.0));
        assert_eq!(stop.w_instr.column(0), uni.w_instr.column(0));
    }

    #[test]
    fn zero_noise_is_identity() {
        let (ir, cfg) = listk();
        let p = compile(&ir, &cfg, KAPPA_SOFT, PadMode::Stop).unwrap();
        assert_eq!(perturb(&p, 0.0, 7).unwrap(), p);
    }

    #[test]
    fn small_noise_preserves_argmax() {
        let (ir, cfg) = listk();
        let p = compile(&ir, &cfg, KAPPA_SOFT, PadMode::Stop).unwrap();
        let base = argmaxes(&p);
        for seed in 0..20 {
            let q = perturb(&p, 0.1, seed).unwrap();
            assert_eq!(argmaxes(&q), base, "seed {seed}");
        }
    }

    #[test]
    fn large_noise_still_succeeds() {
        let (ir, cfg) = listk();
        let p = compile(&ir, &cfg, KAPPA_SOFT, PadMode::Stop).unwrap();
        let q = perturb(&p, 100.0, 3).unwrap();
        assert!(q.is_finite());
        assert_ne!(q, p);
    }

    #[test]
    fn text_round_trip_is_exact() {
        let (ir, cfg) = listk();
        let p = perturb(&compile(&ir, &cfg, KAPPA_SOFT, PadMode::Stop).unwrap(), 0.3, 1).unwrap();
        assert_eq!(Params::from_text(&p.to_text()).unwrap(), p);
    }

    #[test]
    fn bad_params_text() {
        assert!(Params::from_text("anc-params v2\n").is_err());
        let (ir, cfg) = listk();
        let text = compile(&ir, &cfg, 5.0, PadMode::Stop).unwrap().to_text();
        let truncated: String = text.lines().take(5).collect::<Vec<_>>().join("\n");
        assert!(Params::from_text(&truncated).is_err());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let (ir, cfg) = listk();
        let p = compile(&ir, &cfg, 5.0, PadMode::Stop).unwrap();
        let other = MachineConfig::new(21, 9, 10, 0.5).unwrap();
        assert!(p.check_shape(&other).is_err());
        let narrow = MachineConfig::new(20, 5, 10, 0.5).unwrap();
        assert!(compile(&ir, &narrow, 5.0, PadMode::Stop).is_err());
    }
}
