//! Exact machinery around 4231-avoiding permutations: the insertion
//! encoding, the lock-sequence automata that accept the encodings of
//! avoiders using a bounded number of slots, their sparse transfer
//! matrices, exact big-integer word counts, and certified lower bounds on
//! the growth rate of the class.
//!
//! The crate is organized along the pipeline:
//!
//! - [`perm`]: permutations, pattern containment, the encoding itself,
//!   and a brute-force enumeration oracle;
//! - [`lock`]: lock sequences (the automaton states), their transition
//!   rules, Schröder counting, and rank/unrank;
//! - [`automaton`]: materialized or matrix-free transfer operators;
//! - [`spectral`]: word counts, dominant-eigenvalue brackets, exact
//!   certificates, and the extrapolation diagnostic.

pub mod automaton;
pub mod lock;
pub mod perm;
pub mod scalar;
pub mod spectral;

pub use automaton::{Automaton, AutomatonStats, BuildOptions, Mode, Operator, TransitionMatrix};
pub use lock::{LockSequence, StateIndex};
pub use perm::{InsertionLetter, InsertionWord, LetterKind, Permutation};
pub use scalar::{Count, Rational, Real, TransferScalar};
pub use spectral::{Certificate, CountSequence, EigenEstimate, ExtrapolationFit};
