//! The automata over insertion letters and their transfer matrices.
//!
//! `Automaton` for a slot cap `k` has the lock sequences of length at
//! most `k` as states, the single-slot state as both start and accept
//! state, and one transition per allowed letter. The transfer matrix
//! records, at row `i` and column `j`, how many letters lead from state
//! `i` to state `j`; its powers count accepted words exactly.

use std::io::{self, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::lock::{
    self, count_states_u64, for_each_state, unrank_bounded, LockError, LockSequence, StateIndex,
};
use crate::perm::InsertionWord;
use crate::scalar::TransferScalar;

pub const DEFAULT_MEMORY_BUDGET: u64 = 8 << 30;

#[derive(Debug, Error)]
pub enum AutomatonError {
    #[error(transparent)]
    Lock(#[from] LockError),
    #[error(
        "building the cap-{k} matrix needs an estimated {estimate} bytes, over the budget of \
         {budget}; raise the budget or use matrix-free mode"
    )]
    ResourceLimit { k: u32, estimate: u64, budget: u64 },
    #[error("matrix dimension {0} does not fit 32-bit column indices")]
    DimensionTooLarge(u64),
}

/// Whether to materialize the transfer matrix or regenerate rows on the
/// fly from the transition function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Materialize when the estimate fits the budget, else matrix-free.
    #[default]
    Auto,
    Csr,
    MatrixFree,
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub mode: Mode,
    pub memory_budget: u64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            mode: Mode::Auto,
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }
}

/// The automaton for a fixed slot cap.
#[derive(Debug, Clone)]
pub struct Automaton {
    slot_cap: u32,
    state_count: StateIndex,
}

/// Start and accept state index: the single-slot state ranks first.
pub const START_INDEX: StateIndex = 1;

impl Automaton {
    pub fn new(slot_cap: u32) -> Result<Self, AutomatonError> {
        let state_count = count_states_u64(slot_cap as usize)?;
        Ok(Self {
            slot_cap,
            state_count,
        })
    }

    pub fn slot_cap(&self) -> u32 {
        self.slot_cap
    }

    pub fn state_count(&self) -> StateIndex {
        self.state_count
    }

    /// Runs the word from the start state. A letter not allowed in the
    /// current state rejects immediately; acceptance means ending back in
    /// the single-slot state.
    pub fn accepts(&self, word: &InsertionWord) -> bool {
        let cap = self.slot_cap as usize;
        let mut state = LockSequence::initial();
        for &letter in word.letters() {
            match state.step(letter, cap) {
                Ok(next) => state = next,
                Err(_) => return false,
            }
        }
        state == LockSequence::initial()
    }

    /// Materializes the transfer matrix in compressed sparse row form.
    pub fn build_matrix(&self, options: &BuildOptions) -> Result<TransitionMatrix, AutomatonError> {
        let estimate = self.memory_estimate();
        if estimate > options.memory_budget {
            return Err(AutomatonError::ResourceLimit {
                k: self.slot_cap,
                estimate,
                budget: options.memory_budget,
            });
        }
        if self.state_count > u64::from(u32::MAX) {
            return Err(AutomatonError::DimensionTooLarge(self.state_count));
        }
        Ok(build_csr(self))
    }

    /// Structural statistics, computed by streaming over the states
    /// without materializing the matrix. The maximum out-degree counts
    /// letters, not distinct targets, and the reported state is the first
    /// one attaining it in rank order.
    pub fn stats(&self) -> Result<AutomatonStats, AutomatonError> {
        let cap = self.slot_cap as usize;
        let mut transitions = 0u64;
        let mut max_out_degree = 0u64;
        let mut argmax: Option<LockSequence> = None;
        for m in 1..=cap {
            for_each_state(m, |entries| {
                let degree = lock::out_degree(entries, cap);
                transitions += degree;
                if degree > max_out_degree {
                    max_out_degree = degree;
                    argmax = Some(LockSequence::from_entries_unchecked(entries.to_vec()));
                }
            })?;
        }
        Ok(AutomatonStats {
            k: self.slot_cap,
            states: self.state_count,
            transitions,
            max_out_degree,
            argmax_state: argmax.expect("at least the single-slot state exists"),
        })
    }

    /// Rough upper bound on the bytes `build_matrix` will hold at once:
    /// state arena, row offsets, and one (column, multiplicity) pair per
    /// letter, bounded by the lock-free out-degree.
    pub fn memory_estimate(&self) -> u64 {
        let n = self.state_count;
        let k = u64::from(self.slot_cap);
        let arena = n * (k + 4);
        let offsets = (n + 1) * 8;
        let entries = n * (4 * k).saturating_sub(2) * 5;
        arena + offsets + entries
    }
}

/// Per-state structure counts for one automaton.
#[derive(Debug, Clone)]
pub struct AutomatonStats {
    pub k: u32,
    pub states: u64,
    pub transitions: u64,
    pub max_out_degree: u64,
    pub argmax_state: LockSequence,
}

/// Flat arena of all states of `Aut_k` in rank order.
struct StateArena {
    offsets: Vec<u32>,
    bytes: Vec<u8>,
}

impl StateArena {
    fn collect(cap: usize) -> Result<Self, LockError> {
        let mut offsets = vec![0u32];
        let mut bytes = Vec::new();
        for m in 1..=cap {
            for_each_state(m, |entries| {
                bytes.extend_from_slice(entries);
                offsets.push(bytes.len() as u32);
            })?;
        }
        Ok(Self { offsets, bytes })
    }

    fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    fn get(&self, i: usize) -> &[u8] {
        &self.bytes[self.offsets[i] as usize..self.offsets[i + 1] as usize]
    }
}

fn build_csr(automaton: &Automaton) -> TransitionMatrix {
    let cap = automaton.slot_cap as usize;
    let arena = StateArena::collect(cap).expect("cap validated by Automaton::new");
    let n = arena.len();

    // Row blocks are produced independently per chunk and concatenated in
    // order, so the result does not depend on scheduling.
    let chunk_size = 4096;
    let chunks: Vec<(Vec<u32>, Vec<u32>, Vec<u8>)> = (0..n)
        .into_par_iter()
        .chunks(chunk_size)
        .map(|indices| {
            let mut row_lens = Vec::with_capacity(indices.len());
            let mut cols = Vec::new();
            let mut weights = Vec::new();
            let mut scratch = Vec::with_capacity(cap + 1);
            let mut row: Vec<(u32, u8)> = Vec::new();
            for i in indices {
                row.clear();
                lock::for_each_allowed_letter(arena.get(i), cap, |letter| {
                    lock::step_into(arena.get(i), letter, &mut scratch);
                    let target = lock::rank_entries(&scratch);
                    row.push((target as u32 - 1, 1));
                });
                row.sort_unstable_by_key(|&(col, _)| col);
                let before = cols.len();
                for &(col, w) in row.iter() {
                    if cols.len() > before && *cols.last().unwrap() == col {
                        *weights.last_mut().unwrap() += w;
                    } else {
                        cols.push(col);
                        weights.push(w);
                    }
                }
                row_lens.push((cols.len() - before) as u32);
            }
            (row_lens, cols, weights)
        })
        .collect();

    let mut row_offsets = Vec::with_capacity(n + 1);
    row_offsets.push(0u64);
    let mut cols = Vec::new();
    let mut weights = Vec::new();
    for (row_lens, chunk_cols, chunk_weights) in chunks {
        for len in row_lens {
            row_offsets.push(row_offsets.last().unwrap() + u64::from(len));
        }
        cols.extend_from_slice(&chunk_cols);
        weights.extend_from_slice(&chunk_weights);
    }

    TransitionMatrix {
        slot_cap: automaton.slot_cap,
        row_offsets,
        cols,
        weights,
    }
}

/// Transfer matrix in compressed sparse row form: 64-bit row offsets,
/// 32-bit column indices, 8-bit multiplicities (at most `4k - 2` letters
/// leave any state).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionMatrix {
    slot_cap: u32,
    row_offsets: Vec<u64>,
    cols: Vec<u32>,
    weights: Vec<u8>,
}

impl TransitionMatrix {
    pub fn slot_cap(&self) -> u32 {
        self.slot_cap
    }

    pub fn dim(&self) -> usize {
        self.row_offsets.len() - 1
    }

    /// Number of stored entries.
    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// Total letter-level transitions: the sum of all multiplicities.
    pub fn letter_count(&self) -> u64 {
        self.weights.iter().map(|&w| u64::from(w)).sum()
    }

    /// Entries of row `i` (0-based) as `(column, multiplicity)`, columns
    /// ascending.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, u8)> + '_ {
        let lo = self.row_offsets[i] as usize;
        let hi = self.row_offsets[i + 1] as usize;
        self.cols[lo..hi]
            .iter()
            .zip(&self.weights[lo..hi])
            .map(|(&col, &w)| (col as usize, w))
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        let lo = self.row_offsets[i] as usize;
        let hi = self.row_offsets[i + 1] as usize;
        match self.cols[lo..hi].binary_search(&(j as u32)) {
            Ok(pos) => self.weights[lo + pos],
            Err(_) => 0,
        }
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.row(i).map(|(_, w)| u64::from(w)).sum()
    }

    /// `y = A x`. Each output coordinate is accumulated by exactly one
    /// worker in stored-entry order, so results are identical for every
    /// thread count.
    pub fn apply<T: TransferScalar>(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.dim(), "vector length must match dimension");
        (0..self.dim())
            .into_par_iter()
            .map(|i| {
                let mut acc = T::zero();
                for (j, w) in self.row(i) {
                    acc.add_mul(&x[j], w);
                }
                acc
            })
            .collect()
    }

    /// Leading principal submatrix of the given order.
    pub fn principal_submatrix(&self, order: usize) -> TransitionMatrix {
        assert!(order <= self.dim());
        let mut row_offsets = vec![0u64];
        let mut cols = Vec::new();
        let mut weights = Vec::new();
        for i in 0..order {
            for (j, w) in self.row(i) {
                if j < order {
                    cols.push(j as u32);
                    weights.push(w);
                }
            }
            row_offsets.push(cols.len() as u64);
        }
        TransitionMatrix {
            slot_cap: self.slot_cap,
            row_offsets,
            cols,
            weights,
        }
    }

    /// Text export: header `N E k`, then one `i j w` line per stored
    /// entry with 1-based indices, rows ascending and columns ascending
    /// within a row. Byte-identical across runs.
    pub fn write_text(&self, mut out: impl Write) -> io::Result<()> {
        writeln!(out, "{} {} {}", self.dim(), self.nnz(), self.slot_cap)?;
        for i in 0..self.dim() {
            for (j, w) in self.row(i) {
                writeln!(out, "{} {} {}", i + 1, j + 1, w)?;
            }
        }
        Ok(())
    }
}

/// Row generator equivalent to the materialized matrix: each application
/// re-derives rows from the transition function. Roughly an order of
/// magnitude slower per product, but needs only the vectors in memory.
#[derive(Debug, Clone)]
pub struct FlyOperator {
    slot_cap: u32,
    dim: usize,
}

impl FlyOperator {
    pub fn new(automaton: &Automaton) -> Result<Self, AutomatonError> {
        if automaton.state_count() > u64::from(u32::MAX) {
            return Err(AutomatonError::DimensionTooLarge(automaton.state_count()));
        }
        Ok(Self {
            slot_cap: automaton.slot_cap(),
            dim: automaton.state_count() as usize,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn apply<T: TransferScalar>(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.dim, "vector length must match dimension");
        let cap = self.slot_cap as usize;
        (0..self.dim)
            .into_par_iter()
            .map_init(
                || Vec::with_capacity(cap + 1),
                |scratch, i| {
                    let state = unrank_bounded(i as StateIndex + 1, cap)
                        .expect("index below the state count");
                    let mut acc = T::zero();
                    lock::for_each_allowed_letter(state.entries(), cap, |letter| {
                        lock::step_into(state.entries(), letter, scratch);
                        let target = lock::rank_entries(scratch);
                        acc.add_mul(&x[target as usize - 1], 1);
                    });
                    acc
                },
            )
            .collect()
    }
}

/// A transfer matrix in either representation.
#[derive(Debug, Clone)]
pub enum Operator {
    Csr(TransitionMatrix),
    Fly(FlyOperator),
}

impl Operator {
    /// Builds the operator for `Aut_k`, materializing when the mode and
    /// memory budget allow.
    pub fn new(k: u32, options: &BuildOptions) -> Result<Operator, AutomatonError> {
        let automaton = Automaton::new(k)?;
        match options.mode {
            Mode::Csr => Ok(Operator::Csr(automaton.build_matrix(options)?)),
            Mode::MatrixFree => Ok(Operator::Fly(FlyOperator::new(&automaton)?)),
            Mode::Auto => {
                if automaton.memory_estimate() <= options.memory_budget {
                    Ok(Operator::Csr(automaton.build_matrix(options)?))
                } else {
                    Ok(Operator::Fly(FlyOperator::new(&automaton)?))
                }
            }
        }
    }

    pub fn slot_cap(&self) -> u32 {
        match self {
            Operator::Csr(m) => m.slot_cap(),
            Operator::Fly(f) => f.slot_cap,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Operator::Csr(m) => m.dim(),
            Operator::Fly(f) => f.dim(),
        }
    }

    pub fn mode_name(&self) -> &'static str {
        match self {
            Operator::Csr(_) => "csr",
            Operator::Fly(_) => "matrix-free",
        }
    }

    pub fn apply<T: TransferScalar>(&self, x: &[T]) -> Vec<T> {
        match self {
            Operator::Csr(m) => m.apply(x),
            Operator::Fly(f) => f.apply(x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lock::count_states;
    use num_bigint::BigUint;

    fn matrix(k: u32) -> TransitionMatrix {
        Automaton::new(k)
            .unwrap()
            .build_matrix(&BuildOptions::default())
            .unwrap()
    }

    #[test]
    fn one_slot_matrix_is_the_unit_loop() {
        let a = matrix(1);
        assert_eq!(a.dim(), 1);
        assert_eq!(a.get(0, 0), 1);
        assert_eq!(a.letter_count(), 1);
    }

    #[test]
    fn two_slot_matrix() {
        let a = matrix(2);
        assert_eq!(a.dim(), 2);
        assert_eq!(
            (a.get(0, 0), a.get(0, 1), a.get(1, 0), a.get(1, 1)),
            (1, 1, 1, 3)
        );
    }

    #[test]
    fn four_slot_matrix_totals() {
        let a = matrix(4);
        assert_eq!(a.dim(), 10);
        assert_eq!(a.letter_count(), 60);
    }

    #[test]
    fn row_sums_equal_out_degrees() {
        for k in 1..=6u32 {
            let a = matrix(k);
            for i in 0..a.dim() {
                let state = unrank_bounded(i as u64 + 1, k as usize).unwrap();
                assert_eq!(
                    a.row_sum(i),
                    state.allowed_letters(k as usize).unwrap().len() as u64
                );
                assert!(a.get(i, i) >= 1, "every state loops on l1");
            }
        }
    }

    #[test]
    fn submatrix_nesting() {
        // Entry-level equality; the slot cap tag of course differs.
        for k in 2..=7u32 {
            let big = matrix(k);
            for smaller in 1..k {
                let order = count_states(smaller as usize);
                let order = usize::try_from(&order).unwrap();
                let cut = big.principal_submatrix(order);
                let small = matrix(smaller);
                assert_eq!(cut.row_offsets, small.row_offsets);
                assert_eq!(cut.cols, small.cols);
                assert_eq!(cut.weights, small.weights);
            }
        }
    }

    #[test]
    fn acceptance_examples() {
        let word = |s: &str| s.parse::<InsertionWord>().unwrap();
        for k in 1..=5 {
            assert!(Automaton::new(k).unwrap().accepts(&word("")));
        }
        let encoding = word("m1 l1 m2 l1 f2 f1");
        assert!(Automaton::new(3).unwrap().accepts(&encoding));
        assert!(!Automaton::new(2).unwrap().accepts(&encoding));
        assert!(!Automaton::new(4).unwrap().accepts(&word("m1")));
    }

    #[test]
    fn stats_small() {
        let stats = Automaton::new(4).unwrap().stats().unwrap();
        assert_eq!(stats.states, 10);
        assert_eq!(stats.transitions, 60);
        assert_eq!(stats.max_out_degree, 10);
        assert_eq!(stats.argmax_state.to_string(), "0,0,0");
    }

    #[test]
    fn matrix_free_agrees_with_csr() {
        for k in 1..=5u32 {
            let automaton = Automaton::new(k).unwrap();
            let csr = automaton.build_matrix(&BuildOptions::default()).unwrap();
            let fly = FlyOperator::new(&automaton).unwrap();
            let n = csr.dim();
            let mut x = vec![BigUint::from(0u32); n];
            x[0] = BigUint::from(1u32);
            for _ in 0..6 {
                let a = csr.apply(&x);
                let b = fly.apply(&x);
                assert_eq!(a, b);
                x = a;
            }
        }
    }

    #[test]
    fn export_is_deterministic() {
        let mut first = Vec::new();
        matrix(4).write_text(&mut first).unwrap();
        let mut second = Vec::new();
        matrix(4).write_text(&mut second).unwrap();
        assert_eq!(first, second);
        let text = String::from_utf8(first).unwrap();
        assert!(text.starts_with("10 "));
        assert!(text.trim_end().lines().count() > 10);
    }

    #[test]
    fn budget_guard() {
        let automaton = Automaton::new(13).unwrap();
        let options = BuildOptions {
            mode: Mode::Csr,
            memory_budget: 1 << 20,
        };
        assert!(matches!(
            automaton.build_matrix(&options),
            Err(AutomatonError::ResourceLimit { .. })
        ));
        let fallback = Operator::new(
            13,
            &BuildOptions {
                mode: Mode::Auto,
                memory_budget: 1 << 20,
            },
        )
        .unwrap();
        assert!(matches!(fallback, Operator::Fly(_)));
        assert_eq!(fallback.dim(), 6589728);
    }
}
