//! Reference input/output tapes for the corpus programs. Tapes shorter than the
//! task's memory are zero-padded.

#![allow(dead_code)]

use anc_core::tasks::TaskKind;

pub struct Example {
    pub kind: TaskKind,
    pub input: &'static [usize],
    pub output: &'static [usize],
}

pub const EXAMPLES: &[Example] = &[
    Example {
        kind: TaskKind::Access,
        input: &[6, 9, 1, 2, 7, 9, 8, 1, 3, 5],
        output: &[1, 9, 1, 2, 7, 9, 8, 1, 3, 5],
    },
    Example {
        kind: TaskKind::Copy,
        input: &[9, 11, 3, 1, 5, 14, 0, 0, 0, 0, 0, 0, 0, 0, 0],
        output: &[9, 11, 3, 1, 5, 14, 0, 0, 0, 11, 3, 1, 5, 14, 0],
    },
    Example {
        kind: TaskKind::Increment,
        input: &[1, 2, 2, 3, 0, 0, 0],
        output: &[2, 3, 3, 4, 0, 0, 0],
    },
    Example {
        kind: TaskKind::Reverse,
        input: &[5, 7, 2, 13, 14, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
        output: &[5, 7, 2, 13, 14, 14, 13, 2, 7, 0, 0, 0, 0, 0, 0],
    },
    Example {
        kind: TaskKind::Permutation,
        input: &[2, 1, 3, 0, 13, 4, 6, 0, 0, 0, 0, 0, 0, 0, 0],
        output: &[4, 13, 6, 0, 13, 4, 6, 0, 0, 0, 0, 0, 0, 0, 0],
    },
    Example {
        kind: TaskKind::Swap,
        input: &[1, 3, 7, 6, 7, 5, 2, 0, 0, 0],
        output: &[1, 3, 7, 5, 7, 6, 2, 0, 0, 0],
    },
    Example {
        kind: TaskKind::ListSearch,
        input: &[11, 10, 2, 9, 4, 3, 10, 0, 6, 7, 13, 5, 12, 0, 0],
        output: &[11, 10, 5, 9, 4, 3, 10, 0, 6, 7, 13, 5, 12, 0, 0],
    },
    Example {
        kind: TaskKind::ListK,
        input: &[3, 2, 2, 9, 15, 0, 0, 0, 1, 15, 17, 7, 13, 0, 0, 11, 10, 0, 0, 0],
        output: &[3, 2, 17, 9, 15, 0, 0, 0, 1, 15, 17, 7, 13, 0, 0, 11, 10, 0, 0, 0],
    },
    Example {
        kind: TaskKind::WalkBst,
        input: &[
            12, 1, 1, 2, 0, 0, 15, 0, 9, 23, 0, 0, 11, 15, 6, //
            8, 0, 24, 0, 0, 0, 0, 0, 0, 10, 0, 0, 0, 0, 0,
        ],
        output: &[
            12, 10, 1, 2, 0, 0, 15, 0, 9, 23, 0, 0, 11, 15, 6, //
            8, 0, 24, 0, 0, 0, 0, 0, 0, 10, 0, 0, 0, 0, 0,
        ],
    },
    Example {
        kind: TaskKind::Merge,
        input: &[
            3, 8, 11, 27, 17, 16, 1, 0, 29, 26, 0, 0, 0, 0, 0, //
            0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0,
        ],
        output: &[
            3, 8, 11, 27, 17, 16, 1, 0, 29, 26, 0, 29, 27, 26, 17, //
            16, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0,
        ],
    },
];

pub fn padded(tape: &[usize], m: usize) -> Vec<usize> {
    let mut t = tape.to_vec();
    t.resize(m, 0);
    t
}
