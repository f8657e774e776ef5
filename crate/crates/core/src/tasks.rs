//! Task definitions: tape encodings, samplers, generic and ideal programs.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AncError, Result};
use crate::isa::MachineConfig;
use crate::lang::{compile_source, parse, registers_needed, IrProgram};
use crate::loss::TaskInstance;

pub const ACCESS: &str = "\
var k = 0
k = READ(0)
k = INC(k)
k = READ(k)
WRITE(0, k)
STOP()
";

pub const COPY: &str = "\
var read_addr = 1
var read_value = 0
var write_addr = 0

write_addr = READ(0)
l_loop: read_value = READ(read_addr)
JEZ(read_value, l_stop)
WRITE(write_addr, read_value)
read_addr = INC(read_addr)
write_addr = INC(write_addr)
JEZ(0, l_loop)

l_stop: STOP()
";

pub const INCREMENT: &str = "\
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

pub const REVERSE: &str = "\
var read_addr = 0
var read_value = 0
var write_addr = 0

write_addr = READ(write_addr)
l_count_phase: read_value = READ(read_addr)
JEZ(read_value, l_copy_phase)
read_addr = INC(read_addr)
JEZ(0, l_count_phase)

l_copy_phase: read_addr = DEC(read_addr)
JEZ(read_addr, l_stop)
read_value = READ(read_addr)
WRITE(write_addr, read_value)
write_addr = INC(write_addr)
JEZ(0, l_copy_phase)

l_stop: STOP()
";

pub const PERMUTATION: &str = "\
var read_addr = 0
var read_value = 0
var write_offset = 0

l_count_phase: read_value = READ(write_offset)
write_offset = INC(write_offset)
JEZ(read_value, l_copy_phase)
JEZ(0, l_count_phase)

l_copy_phase: read_value = READ(read_addr)
JEZ(read_value, l_stop)
read_value = DEC(read_value)
read_value = ADD(write_offset, read_value)
read_value = READ(read_value)
WRITE(read_addr, read_value)
read_addr = INC(read_addr)
JEZ(0, l_copy_phase)
l_stop: STOP()
";

pub const SWAP: &str = "\
var p = 0
var p_val = 0
var q = 0
var q_val = 0

p = READ(0)
p = ADD(p, 2)
q = READ(1)
q = ADD(q, 2)
p_val = READ(p)
q_val = READ(q)
WRITE(q, p_val)
WRITE(p, q_val)
STOP()
";

pub const LIST_SEARCH: &str = "\
var p_out = 0
var p_current = 0
var val_current = 0
var val_searched = 0

val_searched = READ(1)
p_out = READ(2)
l_loop: p_current = READ(p_current)
val_current = INC(p_current)
val_current = READ(val_current)
val_current = SUB(val_current, val_searched)
JEZ(val_current, l_stop)
JEZ(0, l_loop)
l_stop: WRITE(p_out, p_current)
STOP()
";

pub const LIST_K: &str = "\
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

pub const WALK_BST: &str = "\
var p_out = 0
var p_current = 0
var p_instr = 2
var instr = 0

p_current = READ(0)
p_out = READ(1)
instr = READ(2)

l_loop: JEZ(instr, l_stop)
p_current = ADD(p_current, instr)
p_current = READ(p_current)
p_instr = INC(p_instr)
instr = READ(p_instr)
JEZ(0, l_loop)

l_stop: p_current = READ(p_current)
WRITE(p_out, p_current)
STOP()
";

pub const MERGE: &str = "\
var p_first_list = 0
var val_first_list = 0
var p_second_list = 0
var val_second_list = 0
var p_output_list = 0
var min = 0

p_first_list = READ(0)
p_second_list = READ(1)
p_output_list = READ(2)

l_loop: val_first_list = READ(p_first_list)
val_second_list = READ(p_second_list)
JEZ(val_first_list, l_first_finished)
JEZ(val_second_list, l_second_finished)
min = MIN(val_first_list, val_second_list)
min = SUB(val_first_list, min)
JEZ(min, l_first_smaller)

WRITE(p_output_list, val_first_list)
p_output_list = INC(p_output_list)
p_first_list = INC(p_first_list)
JEZ(0, l_loop)

l_first_smaller: WRITE(p_output_list, val_second_list)
p_output_list = INC(p_output_list)
p_second_list = INC(p_second_list)
JEZ(0, l_loop)

l_first_finished: p_first_list = ADD(p_second_list, 0)
val_first_list = ADD(val_second_list, 0)

l_second_finished: WRITE(p_output_list, val_first_list)
p_first_list = INC(p_first_list)
p_output_list = INC(p_output_list)
val_first_list = READ(p_first_list)
JEZ(val_first_list, l_stop)
JEZ(0, l_second_finished)

l_stop: STOP()
";

pub const DIJKSTRA: &str = "\
var min = 0
var argmin = 0

var p_out = 0
var p_out_temp = 0
var p_in = 1
var p_in_temp = 1

var nnodes = 0

var zero = 0
var big = 99

var tmp_node = 0
var tmp_weight = 0
var tmp_current = 0
var tmp = 0

var didsmth = 0

p_out = READ(p_out)
p_out_temp = ADD(p_out, zero)

tmp_current = INC(zero)
l_loop_nnodes:tmp = READ(p_in_temp)
JEZ(tmp, l_found_nnodes)
WRITE(p_out_temp, big)
p_out_temp = INC(p_out_temp)
WRITE(p_out_temp, tmp_current)
p_out_temp = INC(p_out_temp)
p_in_temp = INC(p_in_temp)
nnodes = INC(nnodes)
JEZ(zero, l_loop_nnodes)

l_found_nnodes:WRITE(p_out, zero)
JEZ(zero, l_find_min)
l_min_return:p_in_temp = ADD(p_in, argmin)
p_in_temp = READ(p_in_temp)

l_loop_sons:tmp_node = READ(p_in_temp)
JEZ(tmp_node, l_find_min)
tmp_node = DEC(tmp_node)
p_in_temp = INC(p_in_temp)
tmp_weight = READ(p_in_temp)
p_in_temp = INC(p_in_temp)

p_out_temp = ADD(p_out, tmp_node)
p_out_temp = ADD(p_out_temp, tmp_node)
tmp_current = READ(p_out_temp)
tmp_weight = ADD(min, tmp_weight)

tmp = MIN(tmp_current, tmp_weight)
tmp = SUB(tmp_current, tmp)
JEZ(tmp, l_loop_sons)
WRITE(p_out_temp, tmp_weight)
JEZ(zero, l_loop_sons)

l_find_min:p_out_temp = DEC(p_out)
tmp_node = DEC(zero)
min = ADD(big, zero)
argmin = DEC(zero)

l_loop_min:p_out_temp = INC(p_out_temp)
tmp_node = INC(tmp_node)
tmp = SUB(tmp_node, nnodes)
JEZ(tmp, l_min_found)

tmp_weight = READ(p_out_temp)

p_out_temp = INC(p_out_temp)
tmp = READ(p_out_temp)
JEZ(tmp, l_loop_min)

tmp = MAX(min, tmp_weight)
tmp = SUB(tmp, tmp_weight)
JEZ(tmp, l_loop_min)
min = ADD(tmp_weight, zero)
argmin = ADD(tmp_node, zero)
JEZ(zero, l_loop_min)

l_min_found:tmp = SUB(min, big)
JEZ(tmp, l_stop)
p_out_temp = ADD(p_out, argmin)
p_out_temp = ADD(p_out_temp, argmin)
p_out_temp = INC(p_out_temp)
WRITE(p_out_temp, zero)
JEZ(zero, l_min_return)

l_stop:STOP()
";

/// Addition by repeated increments.
pub const ADDITION: &str = "\
var a = 0
var b = 0
a = READ(0)
b = READ(1)
l_loop: JEZ(b, l_stop)
a = INC(a)
b = DEC(b)
JEZ(0, l_loop)
l_stop: WRITE(2, a)
STOP()
";

/// Bubble sort of a zero-terminated list at cell 0, stopping after a pass
/// without swaps.
pub const SORT: &str = "\
var i = 0
var j = 0
var a = 0
var b = 0
var t = 0
var swapped = 0

l_outer: swapped = ZERO()
i = ZERO()
l_inner: j = INC(i)
b = READ(j)
JEZ(b, l_end_pass)
a = READ(i)
t = MIN(a, b)
t = SUB(a, t)
JEZ(t, l_next)
WRITE(i, b)
WRITE(j, a)
swapped = INC(0)
l_next: i = INC(i)
JEZ(0, l_inner)
l_end_pass: JEZ(swapped, l_stop)
JEZ(0, l_outer)
l_stop: STOP()
";

const LIST_K_IDEAL: &str = "\
var k = 0
var p_out = 0
var v = 0
k = READ(1)
p_out = READ(2)
k = ADD(k, k)
k = ADD(k, 2)
v = READ(k)
WRITE(p_out, v)
STOP()
";

const ADDITION_IDEAL: &str = "\
var a = 0
var b = 0
a = READ(0)
b = READ(1)
a = ADD(a, b)
WRITE(2, a)
STOP()
";

/// Fixed `k` of the biased Access distribution.
pub const ACCESS_BIASED_K: usize = 4;
/// Fixed `(p, q)` of the biased Swap distribution.
pub const SWAP_BIASED_PQ: (usize, usize) = (1, 3);
/// Fixed list length of the biased Increment distribution.
pub const INCREMENT_BIASED_LEN: usize = 6;
/// Length of the possibly unsorted prefix in the biased Sort distribution.
pub const SORT_BIASED_PREFIX: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    Access,
    Copy,
    Increment,
    Reverse,
    Permutation,
    Swap,
    ListSearch,
    ListK,
    WalkBst,
    Merge,
    Dijkstra,
    Addition,
    Sort,
}

impl TaskKind {
    pub const ALL: [TaskKind; 13] = [
        TaskKind::Access,
        TaskKind::Copy,
        TaskKind::Increment,
        TaskKind::Reverse,
        TaskKind::Permutation,
        TaskKind::Swap,
        TaskKind::ListSearch,
        TaskKind::ListK,
        TaskKind::WalkBst,
        TaskKind::Merge,
        TaskKind::Dijkstra,
        TaskKind::Addition,
        TaskKind::Sort,
    ];

    /// The six optimisation tasks.
    pub const TRAINABLE: [TaskKind; 6] = [
        TaskKind::Access,
        TaskKind::Increment,
        TaskKind::Swap,
        TaskKind::ListK,
        TaskKind::Addition,
        TaskKind::Sort,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Access => "access",
            TaskKind::Copy => "copy",
            TaskKind::Increment => "increment",
            TaskKind::Reverse => "reverse",
            TaskKind::Permutation => "permutation",
            TaskKind::Swap => "swap",
            TaskKind::ListSearch => "listsearch",
            TaskKind::ListK => "listk",
            TaskKind::WalkBst => "walkbst",
            TaskKind::Merge => "merge",
            TaskKind::Dijkstra => "dijkstra",
            TaskKind::Addition => "addition",
            TaskKind::Sort => "sort",
        }
    }

    pub fn generic_source(self) -> &'static str {
        match self {
            TaskKind::Access => ACCESS,
            TaskKind::Copy => COPY,
            TaskKind::Increment => INCREMENT,
            TaskKind::Reverse => REVERSE,
            TaskKind::Permutation => PERMUTATION,
            TaskKind::Swap => SWAP,
            TaskKind::ListSearch => LIST_SEARCH,
            TaskKind::ListK => LIST_K,
            TaskKind::WalkBst => WALK_BST,
            TaskKind::Merge => MERGE,
            TaskKind::Dijkstra => DIJKSTRA,
            TaskKind::Addition => ADDITION,
            TaskKind::Sort => SORT,
        }
    }

    /// Hand-written program for the biased distribution, where one exists.
    pub fn ideal_source(self) -> Option<String> {
        match self {
            TaskKind::Access => Some(format!(
                "var v = 0\nv = READ({})\nWRITE(0, v)\nSTOP()\n",
                ACCESS_BIASED_K + 1
            )),
            TaskKind::Swap => {
                let (p, q) = (SWAP_BIASED_PQ.0 + 2, SWAP_BIASED_PQ.1 + 2);
                Some(format!(
                    "var p_val = 0\nvar q_val = 0\np_val = READ({p})\nq_val = READ({q})\n\
                     WRITE({q}, p_val)\nWRITE({p}, q_val)\nSTOP()\n"
                ))
            }
            TaskKind::ListK => Some(LIST_K_IDEAL.to_string()),
            TaskKind::Addition => Some(ADDITION_IDEAL.to_string()),
            _ => None,
        }
    }

    /// Machine used when none is given: the smallest memory that fits the
    /// program and its tapes, one register beyond what the generic and ideal
    /// programs need, and a step limit above the generic program's worst case.
    pub fn default_config(self) -> MachineConfig {
        let (m, t) = match self {
            TaskKind::Access => (15, 12),
            TaskKind::Copy => (15, 60),
            TaskKind::Increment => (10, 80),
            TaskKind::Reverse => (15, 100),
            TaskKind::Permutation => (15, 120),
            TaskKind::Swap => (15, 20),
            TaskKind::ListSearch => (15, 80),
            TaskKind::ListK => (20, 60),
            TaskKind::WalkBst => (30, 60),
            TaskKind::Merge => (30, 200),
            TaskKind::Dijkstra => (100, 2000),
            TaskKind::Addition => (10, 60),
            TaskKind::Sort => (20, 2000),
        };
        let needed = |src: &str| registers_needed(&parse(src).expect("corpus source parses"));
        let mut r = needed(self.generic_source());
        if let Some(ideal) = self.ideal_source() {
            r = r.max(needed(&ideal));
        }
        MachineConfig::new(m, r + 1, t, 0.9).expect("static config")
    }

    /// Smallest memory size the sampler supports.
    pub fn min_mem_size(self) -> usize {
        match self {
            TaskKind::Access => ACCESS_BIASED_K + 4,
            TaskKind::Copy | TaskKind::Reverse => 6,
            TaskKind::Increment => INCREMENT_BIASED_LEN + 2,
            TaskKind::Permutation => 6,
            TaskKind::Swap => SWAP_BIASED_PQ.0.max(SWAP_BIASED_PQ.1) + 5,
            TaskKind::ListSearch | TaskKind::ListK => 7,
            TaskKind::WalkBst => 12,
            TaskKind::Merge => 10,
            TaskKind::Dijkstra => 100,
            TaskKind::Addition => 3,
            TaskKind::Sort => SORT_BIASED_PREFIX + 3,
        }
    }

    pub fn is_trainable(self) -> bool {
        TaskKind::TRAINABLE.contains(&self)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = AncError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace(['_', '-'], "");
        TaskKind::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| AncError::InvalidConfig(format!("unknown task `{s}`")))
    }
}

/// A task bound to a machine configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub cfg: MachineConfig,
}

impl TaskSpec {
    pub fn new(kind: TaskKind) -> Self {
        TaskSpec {
            kind,
            cfg: kind.default_config(),
        }
    }

    pub fn with_config(kind: TaskKind, cfg: MachineConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.mem_size < kind.min_mem_size() {
            return Err(AncError::InvalidConfig(format!(
                "{kind} encoding needs M >= {}, got {}",
                kind.min_mem_size(),
                cfg.mem_size
            )));
        }
        Ok(TaskSpec { kind, cfg })
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn generic_program(&self) -> Result<IrProgram> {
        compile_source(self.kind.generic_source(), &self.cfg)
    }

    pub fn ideal_program(&self) -> Option<Result<IrProgram>> {
        self.kind
            .ideal_source()
            .map(|src| compile_source(&src, &self.cfg))
    }

    pub fn sample_with(&self, biased: bool, rng: &mut impl Rng) -> TaskInstance {
        let m = self.cfg.mem_size;
        let (input, target, mask) = match self.kind {
            TaskKind::Access => access(rng, m, biased),
            TaskKind::Copy => copy(rng, m),
            TaskKind::Increment => increment(rng, m, biased),
            TaskKind::Reverse => reverse(rng, m),
            TaskKind::Permutation => permutation(rng, m),
            TaskKind::Swap => swap(rng, m, biased),
            TaskKind::ListSearch => list_search(rng, m),
            TaskKind::ListK => list_k(rng, m, biased),
            TaskKind::WalkBst => walk_bst(rng, m),
            TaskKind::Merge => merge(rng, m),
            TaskKind::Dijkstra => dijkstra(rng, m),
            TaskKind::Addition => addition(rng, m),
            TaskKind::Sort => sort(rng, m, biased),
        };
        TaskInstance {
            input_tape: input,
            target_tape: target,
            mask,
            bias_tag: format!("{}/{}", self.name(), if biased { "biased" } else { "unbiased" }),
        }
    }

    /// One instance from a generator seeded with `seed`.
    pub fn sample(&self, biased: bool, seed: u64) -> TaskInstance {
        self.sample_with(biased, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// `n` instances from one generator seeded with `seed`.
    pub fn dataset(&self, biased: bool, n: usize, seed: u64) -> Vec<TaskInstance> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.sample_with(biased, &mut rng)).collect()
    }
}

/// Sample one instance of `spec` on machine `cfg`.
pub fn sample(kind: TaskKind, biased: bool, cfg: &MachineConfig, seed: u64) -> Result<TaskInstance> {
    Ok(TaskSpec::with_config(kind, *cfg)?.sample(biased, seed))
}

/// Every corpus program with its name, in a fixed order.
pub fn corpus() -> Vec<(&'static str, &'static str)> {
    TaskKind::ALL
        .iter()
        .map(|k| (k.name(), k.generic_source()))
        .collect()
}

type Encoded = (Vec<usize>, Vec<usize>, Vec<bool>);

fn value(rng: &mut impl Rng, m: usize) -> usize {
    rng.random_range(1..m)
}

fn mask_range(m: usize, cells: std::ops::Range<usize>) -> Vec<bool> {
    (0..m).map(|i| cells.contains(&i)).collect()
}

fn full_mask(m: usize) -> Vec<bool> {
    vec![true; m]
}

/// Place `n` blocks of `width` cells at random non-overlapping positions in
/// `start..end`, returned in increasing order.
fn scatter(rng: &mut impl Rng, start: usize, end: usize, n: usize, width: usize) -> Vec<usize> {
    let free = end - start - n * width;
    // stars and bars: n + 1 gaps summing to `free`
    let mut cuts: Vec<usize> = (0..n).map(|_| rng.random_range(0..=free)).collect();
    cuts.sort_unstable();
    let mut pos = Vec::with_capacity(n);
    let mut cursor = start;
    let mut prev = 0;
    for c in cuts {
        cursor += c - prev;
        prev = c;
        pos.push(cursor);
        cursor += width;
    }
    pos
}

fn access(rng: &mut impl Rng, m: usize, biased: bool) -> Encoded {
    let (n, k) = if biased {
        let k = ACCESS_BIASED_K;
        (rng.random_range(k + 1..=m - 2), k)
    } else {
        let n = rng.random_range(1..=m - 2);
        (n, rng.random_range(0..n))
    };
    let mut tape = vec![0; m];
    tape[0] = k;
    for c in tape.iter_mut().skip(1).take(n) {
        *c = value(rng, m);
    }
    let mut target = tape.clone();
    target[0] = tape[k + 1];
    (tape, target, mask_range(m, 0..1))
}

fn copy(rng: &mut impl Rng, m: usize) -> Encoded {
    let n = rng.random_range(1..=(m - 2) / 2);
    let p = rng.random_range(n + 2..=m - n);
    let mut tape = vec![0; m];
    tape[0] = p;
    for c in tape.iter_mut().skip(1).take(n) {
        *c = value(rng, m);
    }
    let mut target = tape.clone();
    target[p..p + n].copy_from_slice(&tape[1..=n]);
    (tape, target, full_mask(m))
}

fn increment(rng: &mut impl Rng, m: usize, biased: bool) -> Encoded {
    let mut tape = vec![0; m];
    let n = if biased {
        let v = rng.random_range(1..m - 1);
        tape[..INCREMENT_BIASED_LEN].fill(v);
        INCREMENT_BIASED_LEN
    } else {
        let n = rng.random_range(1..m);
        for c in tape.iter_mut().take(n) {
            *c = rng.random_range(1..m - 1);
        }
        n
    };
    let mut target = tape.clone();
    for c in target.iter_mut().take(n) {
        *c += 1;
    }
    (tape, target, mask_range(m, 0..n + 1))
}

fn reverse(rng: &mut impl Rng, m: usize) -> Encoded {
    let n = rng.random_range(1..=(m - 1) / 2);
    let p = rng.random_range(n + 1..=m - n);
    let mut tape = vec![0; m];
    tape[0] = p;
    for c in tape.iter_mut().skip(1).take(n) {
        *c = value(rng, m);
    }
    let mut target = tape.clone();
    for i in 0..n {
        target[p + i] = tape[n - i];
    }
    (tape, target, full_mask(m))
}

fn permutation(rng: &mut impl Rng, m: usize) -> Encoded {
    let n = rng.random_range(1..=(m - 2) / 2);
    let mut tape = vec![0; m];
    for i in 0..n {
        tape[i] = rng.random_range(1..=n);
        tape[n + 1 + i] = value(rng, m);
    }
    let mut target = tape.clone();
    for i in 0..n {
        target[i] = tape[n + tape[i]];
    }
    (tape, target, full_mask(m))
}

fn swap(rng: &mut impl Rng, m: usize, biased: bool) -> Encoded {
    let (n, p, q) = if biased {
        let (p, q) = SWAP_BIASED_PQ;
        (rng.random_range(p.max(q) + 1..=m - 3), p, q)
    } else {
        let n = rng.random_range(1..=m - 3);
        (n, rng.random_range(0..n), rng.random_range(0..n))
    };
    let mut tape = vec![0; m];
    tape[0] = p;
    tape[1] = q;
    for c in tape.iter_mut().skip(2).take(n) {
        *c = value(rng, m);
    }
    let mut target = tape.clone();
    target.swap(p + 2, q + 2);
    (tape, target, mask_range(m, 2..n + 3))
}

/// Linked list of `values` as (next, value) pairs in `3..m`. Returns the
/// tape and the node addresses in list order.
fn linked_list(rng: &mut impl Rng, m: usize, values: &[usize], contiguous: bool) -> (Vec<usize>, Vec<usize>) {
    let n = values.len();
    let mut addrs = if contiguous {
        (0..n).map(|i| 3 + 2 * i).collect()
    } else {
        scatter(rng, 3, m, n, 2)
    };
    if !contiguous {
        addrs.shuffle(rng);
    }
    let mut tape = vec![0; m];
    tape[0] = addrs[0];
    for i in 0..n {
        tape[addrs[i]] = if i + 1 < n { addrs[i + 1] } else { 0 };
        tape[addrs[i] + 1] = values[i];
    }
    (tape, addrs)
}

fn list_search(rng: &mut impl Rng, m: usize) -> Encoded {
    let n = rng.random_range(1..=(m - 3) / 2);
    let values: Vec<usize> = (0..n).map(|_| value(rng, m)).collect();
    let (mut tape, addrs) = linked_list(rng, m, &values, false);
    let wanted = values[rng.random_range(0..n)];
    tape[1] = wanted;
    tape[2] = 2;
    let first = values.iter().position(|&v| v == wanted).expect("value is in the list");
    let mut target = tape.clone();
    target[2] = addrs[first];
    (tape, target, full_mask(m))
}

fn list_k(rng: &mut impl Rng, m: usize, biased: bool) -> Encoded {
    let n = rng.random_range(1..=(m - 3) / 2);
    let values: Vec<usize> = (0..n).map(|_| value(rng, m)).collect();
    let (mut tape, _) = linked_list(rng, m, &values, biased);
    let k = rng.random_range(1..=n);
    tape[1] = k;
    tape[2] = 2;
    let mut target = tape.clone();
    target[2] = values[k - 1];
    (tape, target, mask_range(m, 2..3))
}

fn walk_bst(rng: &mut impl Rng, m: usize) -> Encoded {
    let max_path = 3.min((m - 12) / 3 + 1);
    let want_path = rng.random_range(0..=max_path);
    let tree_start = 3 + want_path;
    let size = rng.random_range(1..=((m - tree_start) / 3).min(6));
    // children[i] = (left, right) as node indices
    let mut children: Vec<[Option<usize>; 2]> = vec![[None, None]];
    for new in 1..size {
        loop {
            let parent = rng.random_range(0..new);
            let side = rng.random_range(0..2);
            if children[parent][side].is_none() {
                children[parent][side] = Some(new);
                children.push([None, None]);
                break;
            }
        }
    }
    let mut addrs = scatter(rng, tree_start, m, size, 3);
    addrs[1..].shuffle(rng);
    let mut tape = vec![0; m];
    tape[0] = addrs[0];
    tape[1] = 1;
    let values: Vec<usize> = (0..size).map(|_| value(rng, m)).collect();
    for i in 0..size {
        tape[addrs[i]] = values[i];
        for side in 0..2 {
            tape[addrs[i] + 1 + side] = children[i][side].map_or(0, |c| addrs[c]);
        }
    }
    let mut node = 0;
    let mut path = Vec::new();
    while path.len() < want_path {
        let options: Vec<usize> = (0..2).filter(|&s| children[node][s].is_some()).collect();
        let Some(&side) = options.choose(rng) else { break };
        path.push(side + 1);
        node = children[node][side].expect("existing child");
    }
    for (i, &d) in path.iter().enumerate() {
        tape[2 + i] = d;
    }
    let mut target = tape.clone();
    target[1] = values[node];
    (tape, target, full_mask(m))
}

fn merge(rng: &mut impl Rng, m: usize) -> Encoded {
    let total_max = (m - 6) / 2;
    let n1 = rng.random_range(1..total_max);
    let n2 = rng.random_range(1..=total_max - n1);
    let mut sorted_desc = |n: usize| {
        let mut v: Vec<usize> = (0..n).map(|_| value(rng, m)).collect();
        v.sort_unstable_by(|a, b| b.cmp(a));
        v
    };
    let l1 = sorted_desc(n1);
    let l2 = sorted_desc(n2);
    let p1 = 3;
    let p2 = p1 + n1 + 1;
    let out = p2 + n2 + 1;
    let mut tape = vec![0; m];
    tape[0] = p1;
    tape[1] = p2;
    tape[2] = out;
    tape[p1..p1 + n1].copy_from_slice(&l1);
    tape[p2..p2 + n2].copy_from_slice(&l2);
    let mut merged: Vec<usize> = l1.iter().chain(&l2).copied().collect();
    merged.sort_unstable_by(|a, b| b.cmp(a));
    let mut target = tape.clone();
    target[out..out + merged.len()].copy_from_slice(&merged);
    (tape, target, full_mask(m))
}

/// Distance value the Dijkstra program uses for unreachable nodes.
pub const DIJKSTRA_INFINITY: usize = 99;

/// Directed weighted graph on nodes `0..n`; `edges[u]` lists `(v, w)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    pub edges: Vec<Vec<(usize, usize)>>,
}

impl Graph {
    pub fn random(rng: &mut impl Rng, max_nodes: usize, max_weight: usize) -> Graph {
        let n = rng.random_range(1..=max_nodes);
        let mut edges = vec![Vec::new(); n];
        for (u, list) in edges.iter_mut().enumerate() {
            for v in (0..n).filter(|&v| v != u) {
                if rng.random_bool(0.4) {
                    list.push((v, rng.random_range(1..=max_weight)));
                }
            }
        }
        Graph { edges }
    }

    /// Tape layout: `[p_out, list pointer per node, 0, edge lists as
    /// (child + 1, weight) pairs each followed by 0, output region]`.
    /// The output region holds a `(distance, pending)` pair per node.
    pub fn encode(&self, m: usize) -> Result<(Vec<usize>, usize)> {
        let n = self.edges.len();
        let mut tape = vec![0; m];
        let mut cursor = n + 2;
        for (u, list) in self.edges.iter().enumerate() {
            tape[1 + u] = cursor;
            for &(v, w) in list {
                if cursor + 2 >= m {
                    return Err(AncError::InvalidConfig("graph does not fit the tape".into()));
                }
                tape[cursor] = v + 1;
                tape[cursor + 1] = w;
                cursor += 2;
            }
            cursor += 1;
        }
        let p_out = cursor;
        if p_out + 2 * n + 1 > m {
            return Err(AncError::InvalidConfig("graph does not fit the tape".into()));
        }
        tape[0] = p_out;
        Ok((tape, p_out))
    }
}

fn shortest_paths(g: &Graph) -> Vec<Option<usize>> {
    let n = g.edges.len();
    let mut dist: Vec<Option<usize>> = vec![None; n];
    let mut done = vec![false; n];
    dist[0] = Some(0);
    loop {
        let next = (0..n)
            .filter(|&u| !done[u])
            .filter_map(|u| dist[u].map(|d| (d, u)))
            .min();
        let Some((d, u)) = next else { break };
        done[u] = true;
        for &(v, w) in &g.edges[u] {
            if dist[v].is_none_or(|old| d + w < old) {
                dist[v] = Some(d + w);
            }
        }
    }
    dist
}

/// Expected tape after the Dijkstra program ran on `g`.
pub fn dijkstra_target(g: &Graph, tape: &[usize], p_out: usize) -> Vec<usize> {
    let mut target = tape.to_vec();
    for (u, d) in shortest_paths(g).into_iter().enumerate() {
        target[p_out + 2 * u] = d.unwrap_or(DIJKSTRA_INFINITY);
        target[p_out + 2 * u + 1] = usize::from(d.is_none());
    }
    target
}

fn dijkstra(rng: &mut impl Rng, m: usize) -> Encoded {
    let g = Graph::random(rng, 5, 9);
    let (tape, p_out) = g.encode(m).expect("five nodes fit in 100 cells");
    let target = dijkstra_target(&g, &tape, p_out);
    (tape, target, full_mask(m))
}

fn addition(rng: &mut impl Rng, m: usize) -> Encoded {
    let a = rng.random_range(0..m);
    let b = rng.random_range(0..m - a);
    let mut tape = vec![0; m];
    tape[0] = a;
    tape[1] = b;
    let mut target = tape.clone();
    target[2] = a + b;
    (tape, target, mask_range(m, 2..3))
}

fn sort(rng: &mut impl Rng, m: usize, biased: bool) -> Encoded {
    let max_len = (m - 1).min(12);
    let n = if biased {
        rng.random_range(SORT_BIASED_PREFIX + 1..=max_len)
    } else {
        rng.random_range(1..=max_len)
    };
    let mut list: Vec<usize> = (0..n).map(|_| value(rng, m)).collect();
    if biased {
        list.sort_unstable();
        list[..SORT_BIASED_PREFIX].shuffle(rng);
    }
    let mut tape = vec![0; m];
    tape[..n].copy_from_slice(&list);
    let mut target = tape.clone();
    target[..n].sort_unstable();
    (tape, target, mask_range(m, 0..n + 1))
}

/// Instances as text: one block per instance.
///
/// ```text
/// instance <bias tag>
/// tape 3 1 4 0
/// target 4 1 4 0
/// mask 1 0 0 0
/// ```
pub fn instances_to_text(instances: &[TaskInstance]) -> String {
    let join = |xs: &mut dyn Iterator<Item = usize>| xs.map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
    let mut s = String::from("anc-instances v1\n");
    for inst in instances {
        let _ = writeln!(s, "instance {}", inst.bias_tag);
        let _ = writeln!(s, "tape {}", join(&mut inst.input_tape.iter().copied()));
        let _ = writeln!(s, "target {}", join(&mut inst.target_tape.iter().copied()));
        let _ = writeln!(s, "mask {}", join(&mut inst.mask.iter().map(|&b| usize::from(b))));
    }
    s
}

pub fn instances_from_text(text: &str) -> Result<Vec<TaskInstance>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    match lines.next() {
        Some((_, "anc-instances v1")) => {}
        Some((n, l)) => return Err(AncError::Format { line: n, msg: format!("unsupported header `{l}`") }),
        None => return Err(AncError::Format { line: 0, msg: "empty file".into() }),
    }
    let mut out = Vec::new();
    let numbers = |line: usize, l: &str, key: &str| -> Result<Vec<usize>> {
        let rest = l.strip_prefix(key).ok_or_else(|| AncError::Format {
            line,
            msg: format!("expected `{key}`"),
        })?;
        rest.split_whitespace()
            .map(|w| {
                w.parse().map_err(|_| AncError::Format {
                    line,
                    msg: format!("bad number `{w}`"),
                })
            })
            .collect()
    };
    while let Some((n, head)) = lines.next() {
        let tag = head
            .strip_prefix("instance")
            .ok_or_else(|| AncError::Format { line: n, msg: "expected `instance`".into() })?
            .trim()
            .to_string();
        let mut next = |key: &str| -> Result<Vec<usize>> {
            let (ln, l) = lines.next().ok_or_else(|| AncError::Format {
                line: n,
                msg: format!("missing `{key}` line"),
            })?;
            numbers(ln, l, key)
        };
        let input_tape = next("tape")?;
        let target_tape = next("target")?;
        let mask = next("mask")?.into_iter().map(|v| v != 0).collect();
        let inst = TaskInstance {
            input_tape,
            target_tape,
            mask,
            bias_tag: tag,
        };
        inst.validate(inst.input_tape.len()).map_err(|e| AncError::Format {
            line: n,
            msg: e.to_string(),
        })?;
        out.push(inst);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete::run_discrete;

    fn padded(cells: &[usize], m: usize) -> Vec<usize> {
        let mut v = cells.to_vec();
        v.resize(m, 0);
        v
    }

    fn run(kind: TaskKind, tape: &[usize]) -> Vec<usize> {
        let spec = TaskSpec::new(kind);
        let ir = spec.generic_program().unwrap();
        let r = run_discrete(&ir, tape, &spec.cfg).unwrap();
        assert!(r.halted, "{kind} did not halt");
        r.final_tape
    }

    #[test]
    fn access_example() {
        let tape = padded(&[6, 9, 1, 2, 7, 9, 8, 1, 3, 5], 15);
        assert_eq!(run(TaskKind::Access, &tape), padded(&[1, 9, 1, 2, 7, 9, 8, 1, 3, 5], 15));
    }

    #[test]
    fn addition_four_plus_three() {
        let spec = TaskSpec::new(TaskKind::Addition);
        let ir = spec.generic_program().unwrap();
        let tape = padded(&[4, 3], 10);
        let r = run_discrete(&ir, &tape, &spec.cfg).unwrap();
        assert_eq!(r.final_tape[2], 7);
        // 2 reads, 4 per loop turn, exit test, write, stop
        assert_eq!(r.steps, 2 + 4 * 3 + 3);
    }

    #[test]
    fn biased_listk_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (tape, _) = linked_list(&mut rng, 20, &[4, 5, 6, 7], true);
        let mut tape = tape;
        tape[1] = 3;
        tape[2] = 2;
        assert_eq!(tape, padded(&[3, 3, 2, 5, 4, 7, 5, 9, 6, 0, 7], 20));
    }

    #[test]
    fn samplers_are_deterministic() {
        for kind in TaskKind::ALL {
            let spec = TaskSpec::new(kind);
            for biased in [false, true] {
                assert_eq!(spec.sample(biased, 42), spec.sample(biased, 42));
            }
        }
    }

    #[test]
    fn biased_samplers_honour_the_bias() {
        let access = TaskSpec::new(TaskKind::Access).dataset(true, 50, 1);
        assert!(access.iter().all(|i| i.input_tape[0] == ACCESS_BIASED_K));
        let swap = TaskSpec::new(TaskKind::Swap).dataset(true, 50, 1);
        assert!(swap.iter().all(|i| (i.input_tape[0], i.input_tape[1]) == SWAP_BIASED_PQ));
        for i in TaskSpec::new(TaskKind::Increment).dataset(true, 50, 1) {
            let t = &i.input_tape;
            assert!(t[..INCREMENT_BIASED_LEN].iter().all(|&v| v == t[0] && v != 0));
            assert_eq!(t[INCREMENT_BIASED_LEN], 0);
        }
        for i in TaskSpec::new(TaskKind::Sort).dataset(true, 50, 1) {
            let n = i.input_tape.iter().position(|&v| v == 0).unwrap();
            let tail = &i.input_tape[SORT_BIASED_PREFIX..n];
            assert!(tail.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn every_sample_is_valid_and_solved_by_the_generic_program() {
        for kind in TaskKind::ALL {
            let spec = TaskSpec::new(kind);
            let ir = spec.generic_program().unwrap();
            let n = if kind == TaskKind::Dijkstra { 50 } else { 300 };
            for biased in [false, true] {
                for inst in spec.dataset(biased, n, 9) {
                    inst.validate(spec.cfg.mem_size).unwrap();
                    let r = run_discrete(&ir, &inst.input_tape, &spec.cfg).unwrap();
                    assert!(r.halted, "{kind}: no halt on {:?}", inst.input_tape);
                    assert!(inst.matches(&r.final_tape), "{kind}: wrong on {:?}", inst.input_tape);
                }
            }
        }
    }

    #[test]
    fn instance_text_round_trip() {
        let insts = TaskSpec::new(TaskKind::Swap).dataset(true, 3, 5);
        let text = instances_to_text(&insts);
        assert_eq!(instances_from_text(&text).unwrap(), insts);
        assert!(instances_from_text("anc-instances v1\ninstance x\ntape 1\n").is_err());
    }

    #[test]
    fn task_names_parse() {
        for kind in TaskKind::ALL {
            assert_eq!(kind.name().parse::<TaskKind>().unwrap(), kind);
        }
        assert_eq!("List_K".parse::<TaskKind>().unwrap(), TaskKind::ListK);
        assert!("nope".parse::<TaskKind>().is_err());
    }

    #[test]
    fn config_too_small() {
        let cfg = MachineConfig::new(5, 5, 10, 0.9).unwrap();
        assert!(TaskSpec::with_config(TaskKind::Access, cfg).is_err());
    }
}
