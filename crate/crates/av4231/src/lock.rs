//! Lock sequences: the automaton states.
//!
//! A configuration of `m` slots is summarized by the sequence
//! `s_1 .. s_m` of lock-block lengths: `s_j > 0` declares slots
//! `j, ..., j + s_j - 1` locked. An insertion into a locked slot would
//! complete a 4231 pattern, so locked slots admit no letter at all.
//! The first and last slots are never locked, locks never reach the last
//! slot, and overlapping locks nest.
//!
//! States are ordered first by length, then lexicographically; `rank` and
//! `unrank` realize that order by counting over the nested-interval
//! structure with a table of large Schröder numbers, without
//! materializing any states.

use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use num_bigint::BigUint;
use thiserror::Error;

use crate::perm::{InsertionLetter, LetterKind};

/// 1-based position of a state in the (length, lex) order.
pub type StateIndex = u64;

/// Largest slot count for which state indices fit in a `u64`.
pub const MAX_INDEXABLE_SLOTS: usize = 29;

/// Default refusal threshold for materializing all states of one length.
pub const DEFAULT_ENUMERATION_LIMIT: usize = 14;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LockError {
    #[error("invalid lock sequence: {0}")]
    Invalid(&'static str),
    #[error("letter {letter} is not allowed from state {state} under slot cap {cap}")]
    DisallowedLetter {
        letter: InsertionLetter,
        state: String,
        cap: usize,
    },
    #[error("state index {index} is out of range (cap {cap} has {count} states)")]
    IndexOutOfRange { index: StateIndex, cap: usize, count: StateIndex },
    #[error("slot count {0} exceeds the supported indexing range of {MAX_INDEXABLE_SLOTS}")]
    CapTooLarge(usize),
    #[error("enumerating all length-{m} states exceeds the limit of length {limit}")]
    EnumerationLimit { m: usize, limit: usize },
    #[error("cannot parse lock sequence from {0:?}")]
    Parse(String),
}

/// A valid lock sequence. Entries fit in a byte because a lock length is
/// always below the slot count, which validation bounds at 255.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LockSequence {
    entries: Vec<u8>,
}

/// Checks the three defining conditions: free first and last slot,
/// containment of every lock before the last slot, and nesting of
/// overlapping locks.
pub fn is_lock_sequence(entries: &[u64]) -> bool {
    validate(entries).is_ok()
}

fn validate(entries: &[u64]) -> Result<(), &'static str> {
    let m = entries.len();
    if m == 0 {
        return Err("a state has at least one slot");
    }
    if entries[0] != 0 {
        return Err("the first slot is always unlocked");
    }
    if entries[m - 1] != 0 {
        return Err("the last slot is always unlocked");
    }
    for (idx, &len) in entries.iter().enumerate() {
        let j = idx as u64 + 1;
        // Written subtraction-first so absurd entries cannot overflow.
        if len > (m as u64) - j {
            return Err("a lock ends at the penultimate slot at the latest");
        }
    }
    // Nesting: a lock starting inside another may not outlive it.
    for (ai, &alen) in entries.iter().enumerate() {
        if alen == 0 {
            continue;
        }
        let a = ai as u64 + 1;
        for bi in ai + 1..entries.len() {
            let b = bi as u64 + 1;
            if b >= a + alen {
                break;
            }
            if b + entries[bi] > a + alen {
                return Err("overlapping locks must nest");
            }
        }
    }
    Ok(())
}

impl LockSequence {
    /// Validates and stores a lock sequence.
    pub fn new(entries: Vec<u64>) -> Result<Self, LockError> {
        validate(&entries).map_err(LockError::Invalid)?;
        if entries.len() > 255 {
            return Err(LockError::CapTooLarge(entries.len()));
        }
        Ok(Self {
            entries: entries.into_iter().map(|e| e as u8).collect(),
        })
    }

    /// The single-slot state `(0)`: start and accept state of every
    /// automaton, rank 1.
    pub fn initial() -> Self {
        Self { entries: vec![0] }
    }

    pub(crate) fn from_entries_unchecked(entries: Vec<u8>) -> Self {
        debug_assert!(validate(&entries.iter().map(|&e| e as u64).collect::<Vec<_>>()).is_ok());
        Self { entries }
    }

    /// Number of slots `m`.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        false // m >= 1 by construction
    }

    pub fn entries(&self) -> &[u8] {
        &self.entries
    }

    /// 1-based indices of locked slots, ascending. Slots 1 and `m` never
    /// appear.
    pub fn locked_slots(&self) -> Vec<usize> {
        let mut locked = vec![false; self.entries.len() + 1];
        for (idx, &len) in self.entries.iter().enumerate() {
            for j in idx + 1..=idx + len as usize {
                locked[j] = true;
            }
        }
        (1..=self.entries.len()).filter(|&j| locked[j]).collect()
    }

    /// Every letter playable from this state when at most `slot_cap`
    /// slots may ever exist, in canonical order (f < l < r < m, slot
    /// ascending). Unlocked interior slots admit f/l/r and, below the
    /// cap, m; the last slot admits l and, below the cap, m; locked
    /// slots admit nothing.
    pub fn allowed_letters(&self, slot_cap: usize) -> Result<Vec<InsertionLetter>, LockError> {
        check_cap(slot_cap)?;
        if self.len() > slot_cap {
            return Err(LockError::Invalid("state has more slots than the cap"));
        }
        let mut letters = Vec::new();
        for_each_allowed_letter(&self.entries, slot_cap, |letter| letters.push(letter));
        Ok(letters)
    }

    /// Applies one allowed letter and returns the successor state.
    pub fn step(&self, letter: InsertionLetter, slot_cap: usize) -> Result<LockSequence, LockError> {
        check_cap(slot_cap)?;
        let m = self.len();
        let j = letter.slot() as usize;
        let allowed = j >= 1
            && j <= m
            && m <= slot_cap
            && locked_mask(&self.entries) >> j & 1 == 0
            && match letter.kind() {
                LetterKind::Fill | LetterKind::Right => j < m,
                LetterKind::Left => true,
                LetterKind::Middle => m < slot_cap,
            };
        if !allowed {
            return Err(LockError::DisallowedLetter {
                letter,
                state: self.to_string(),
                cap: slot_cap,
            });
        }
        let mut out = Vec::with_capacity(m + 1);
        step_into(&self.entries, letter, &mut out);
        Ok(Self { entries: out })
    }

    /// Position of this state in the (length, lex) order, starting at 1.
    pub fn rank(&self) -> Result<StateIndex, LockError> {
        check_cap(self.len())?;
        Ok(rank_entries(&self.entries))
    }
}

impl fmt::Display for LockSequence {
    /// Canonical form: comma-separated entries, e.g. `0,2,1,0`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for e in &self.entries {
            if !first {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
            first = false;
        }
        Ok(())
    }
}

impl FromStr for LockSequence {
    /// Accepts the canonical comma-separated form and, when every entry
    /// is a single digit, the compact form `0210`.
    type Err = LockError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let err = || LockError::Parse(s.to_string());
        let entries: Vec<u64> = if s.contains(',') {
            s.split(',')
                .map(|tok| tok.trim().parse::<u64>().map_err(|_| err()))
                .collect::<Result<_, _>>()?
        } else {
            s.chars()
                .map(|c| c.to_digit(10).map(u64::from).ok_or_else(err))
                .collect::<Result<_, _>>()?
        };
        LockSequence::new(entries)
    }
}

fn check_cap(cap: usize) -> Result<(), LockError> {
    if cap == 0 || cap > MAX_INDEXABLE_SLOTS {
        return Err(LockError::CapTooLarge(cap));
    }
    Ok(())
}

/// Bit `j` set iff slot `j` (1-based) is locked. Entries must describe at
/// most `MAX_INDEXABLE_SLOTS` slots, so everything fits in a `u64`.
pub(crate) fn locked_mask(entries: &[u8]) -> u64 {
    debug_assert!(entries.len() <= 63);
    let mut mask = 0u64;
    for (idx, &len) in entries.iter().enumerate() {
        if len > 0 {
            mask |= ((1u64 << len) - 1) << (idx + 1);
        }
    }
    mask
}

/// Calls `f` for every allowed letter in canonical order.
pub(crate) fn for_each_allowed_letter(
    entries: &[u8],
    slot_cap: usize,
    mut f: impl FnMut(InsertionLetter),
) {
    let m = entries.len();
    let mask = locked_mask(entries);
    let unlocked = |j: usize| mask >> j & 1 == 0;
    let kinds = [
        LetterKind::Fill,
        LetterKind::Left,
        LetterKind::Right,
        LetterKind::Middle,
    ];
    for kind in kinds {
        if kind == LetterKind::Middle && m >= slot_cap {
            continue;
        }
        let last_ok = matches!(kind, LetterKind::Left | LetterKind::Middle);
        for j in 1..=m {
            if !unlocked(j) || (!last_ok && j == m) {
                continue;
            }
            f(InsertionLetter::new(kind, j as u32).expect("slot >= 1"));
        }
    }
}

/// Number of letters playable from a state, without listing them.
pub(crate) fn out_degree(entries: &[u8], slot_cap: usize) -> u64 {
    let m = entries.len();
    // Nested locks overlap, so count the union of the blocks.
    let locked = u64::from(locked_mask(entries).count_ones());
    let interior_free = m as u64 - 1 - locked;
    let per_interior = if m < slot_cap { 4 } else { 3 };
    let on_last = if m < slot_cap { 2 } else { 1 };
    interior_free * per_interior + on_last
}

/// Successor-state computation, assuming `letter` is allowed. The new
/// lock, when one is created, runs from the remaining slot just right of
/// the insertion to the penultimate slot; it absorbs any lock sharing its
/// start. A fill at the first slot releases the lock whose start lands on
/// the leftmost slot.
pub(crate) fn step_into(entries: &[u8], letter: InsertionLetter, out: &mut Vec<u8>) {
    let j = letter.slot() as usize;
    out.clear();
    match letter.kind() {
        LetterKind::Fill => {
            out.extend_from_slice(&entries[..j - 1]);
            out.extend_from_slice(&entries[j..]);
        }
        LetterKind::Left | LetterKind::Right => out.extend_from_slice(entries),
        LetterKind::Middle => {
            out.extend_from_slice(&entries[..j]);
            out.push(0);
            out.extend_from_slice(&entries[j..]);
        }
    }
    let m2 = out.len();
    let (start, has_left_slot) = match letter.kind() {
        LetterKind::Fill | LetterKind::Left => (j, j >= 2),
        LetterKind::Right | LetterKind::Middle => (j + 1, true),
    };
    if has_left_slot && start < m2 {
        out[start - 1] = (m2 - start) as u8;
    }
    if letter.kind() == LetterKind::Fill && out[0] > 0 {
        out[0] = 0;
    }
}

// ---------------------------------------------------------------------------
// Schröder numbers and state counting
// ---------------------------------------------------------------------------

/// `S(i)`: lattice paths from the origin to `(2i, 0)` over up, down and
/// double-horizontal steps that never go below the axis. `S(m - 2)`
/// counts the lock sequences with exactly `m >= 2` slots.
pub fn schroder(i: usize) -> BigUint {
    schroder_numbers(i + 1).pop().expect("table of length i + 1")
}

/// The table `S(0), ..., S(count - 1)`, by the convolution
/// `S(n) = S(n-1) + sum S(j) S(n-1-j)`.
pub fn schroder_numbers(count: usize) -> Vec<BigUint> {
    let mut table: Vec<BigUint> = Vec::with_capacity(count);
    for n in 0..count {
        if n == 0 {
            table.push(BigUint::from(1u32));
            continue;
        }
        let mut next = table[n - 1].clone();
        for j in 0..n {
            next += &table[j] * &table[n - 1 - j];
        }
        table.push(next);
    }
    table
}

/// Number of lock sequences with at most `k` slots:
/// `1 + S(0) + S(1) + ... + S(k - 2)`.
pub fn count_states(k: usize) -> BigUint {
    let mut total = BigUint::from(0u32);
    if k >= 1 {
        total += 1u32;
    }
    for s in schroder_numbers(k.saturating_sub(1)) {
        total += s;
    }
    total
}

/// `u64` Schröder table up to `S(MAX_INDEXABLE_SLOTS - 2)`; the limit is
/// chosen so that these and the state counts built from them never
/// overflow.
fn schroder_u64() -> &'static [u64] {
    static TABLE: LazyLock<Vec<u64>> = LazyLock::new(|| {
        let big = schroder_numbers(MAX_INDEXABLE_SLOTS - 1);
        big.iter()
            .map(|s| u64::try_from(s).expect("fits by choice of MAX_INDEXABLE_SLOTS"))
            .collect()
    });
    &TABLE
}

/// `cumulative[k]` = number of states with at most `k` slots, as `u64`.
fn cumulative_states_u64() -> &'static [u64] {
    static TABLE: LazyLock<Vec<u64>> = LazyLock::new(|| {
        let schroder = schroder_u64();
        let mut cumulative = vec![0u64, 1];
        for m in 2..=MAX_INDEXABLE_SLOTS {
            let prev = cumulative[m - 1];
            cumulative.push(prev.checked_add(schroder[m - 2]).expect("fits in u64"));
        }
        cumulative
    });
    &TABLE
}

pub(crate) fn count_states_u64(k: usize) -> Result<StateIndex, LockError> {
    check_cap(k)?;
    Ok(cumulative_states_u64()[k])
}

// ---------------------------------------------------------------------------
// Ranking
// ---------------------------------------------------------------------------
//
// Interior slots 2..m-1 are renumbered 1..n (n = m - 2). A state is then a
// digit string d_1..d_n where d_i is the length of the lock starting at
// interior position i (0 for none). Scanning left to right, the pending
// constraints are the right endpoints of the locks covering the current
// position; they form a stack with ends shrinking toward the top. The
// completions of a prefix factor over the windows the stack cuts out of
// the remaining positions, one Schröder factor per window.

/// Product of Schröder counts over the windows `[p, top], ..., (bottom, n]`.
fn window_count(p: usize, stack: &[usize], n: usize, schroder: &[u64]) -> u64 {
    let mut count = 1u64;
    let mut lo = p;
    for &end in stack.iter().rev() {
        if end < lo {
            continue;
        }
        count *= schroder[end - lo + 1];
        lo = end + 1;
    }
    count * schroder[n + 1 - lo]
}

/// Rank without validation; entries must form a lock sequence of length
/// at most `MAX_INDEXABLE_SLOTS`.
pub(crate) fn rank_entries(entries: &[u8]) -> StateIndex {
    let below = cumulative_states_u64()[entries.len() - 1];
    below + rank_within_length(entries, schroder_u64()) + 1
}

/// 0-based lexicographic position of a state among those of its length.
fn rank_within_length(entries: &[u8], schroder: &[u64]) -> u64 {
    let m = entries.len();
    if m <= 2 {
        return 0;
    }
    let n = m - 2;
    let digits = &entries[1..m - 1];
    let mut acc = 0u64;
    let mut stack: Vec<usize> = Vec::new();
    for i in 1..=n {
        while stack.last().is_some_and(|&end| end < i) {
            stack.pop();
        }
        let d = digits[i - 1] as usize;
        if d > 0 {
            acc += window_count(i + 1, &stack, n, schroder);
            for c in 1..d {
                stack.push(i + c - 1);
                acc += window_count(i + 1, &stack, n, schroder);
                stack.pop();
            }
            stack.push(i + d - 1);
        }
    }
    acc
}

/// Digits of the state at 0-based lexicographic position `pos` among the
/// length-`m` states, `n = m - 2`.
fn unrank_within_length(mut pos: u64, n: usize, schroder: &[u64]) -> Vec<u8> {
    let mut digits = vec![0u8; n];
    let mut stack: Vec<usize> = Vec::new();
    for i in 1..=n {
        while stack.last().is_some_and(|&end| end < i) {
            stack.pop();
        }
        let bound = stack.last().copied().unwrap_or(n);
        let mut chosen = None;
        for c in 0..=bound - i + 1 {
            if c > 0 {
                stack.push(i + c - 1);
            }
            let completions = window_count(i + 1, &stack, n, schroder);
            if pos >= completions {
                pos -= completions;
                if c > 0 {
                    stack.pop();
                }
            } else {
                chosen = Some(c);
                break;
            }
        }
        digits[i - 1] = chosen.expect("position below the Schröder count") as u8;
    }
    digits
}

/// Inverse of `LockSequence::rank`.
pub fn unrank(index: StateIndex) -> Result<LockSequence, LockError> {
    let cumulative = cumulative_states_u64();
    if index == 0 || index > cumulative[MAX_INDEXABLE_SLOTS] {
        return Err(LockError::IndexOutOfRange {
            index,
            cap: MAX_INDEXABLE_SLOTS,
            count: cumulative[MAX_INDEXABLE_SLOTS],
        });
    }
    let m = cumulative.partition_point(|&c| c < index);
    if m == 1 {
        return Ok(LockSequence::initial());
    }
    let pos = index - cumulative[m - 1] - 1;
    let digits = unrank_within_length(pos, m - 2, schroder_u64());
    let mut entries = Vec::with_capacity(m);
    entries.push(0);
    entries.extend_from_slice(&digits);
    entries.push(0);
    Ok(LockSequence::from_entries_unchecked(entries))
}

/// As `unrank`, but rejects indices beyond the states of `Aut_cap`.
pub fn unrank_bounded(index: StateIndex, cap: usize) -> Result<LockSequence, LockError> {
    let count = count_states_u64(cap)?;
    if index == 0 || index > count {
        return Err(LockError::IndexOutOfRange { index, cap, count });
    }
    unrank(index)
}

// ---------------------------------------------------------------------------
// Enumeration
// ---------------------------------------------------------------------------

/// Visits the entry slices of every length-`m` state in lexicographic
/// order without materializing them.
pub fn for_each_state(m: usize, mut f: impl FnMut(&[u8])) -> Result<(), LockError> {
    check_cap(m)?;
    if m == 1 {
        f(&[0]);
        return Ok(());
    }
    let n = m - 2;
    let mut entries = vec![0u8; m];
    let mut stack: Vec<usize> = Vec::new();

    fn descend(
        i: usize,
        n: usize,
        entries: &mut Vec<u8>,
        stack: &mut Vec<usize>,
        f: &mut impl FnMut(&[u8]),
    ) {
        if i > n {
            f(entries);
            return;
        }
        let popped = {
            let mut popped = Vec::new();
            while stack.last().is_some_and(|&end| end < i) {
                popped.push(stack.pop().expect("nonempty"));
            }
            popped
        };
        let bound = stack.last().copied().unwrap_or(n);
        for c in 0..=bound - i + 1 {
            entries[i] = c as u8;
            if c > 0 {
                stack.push(i + c - 1);
            }
            descend(i + 1, n, entries, stack, f);
            if c > 0 {
                stack.pop();
            }
        }
        entries[i] = 0;
        stack.extend(popped.into_iter().rev());
    }

    descend(1, n, &mut entries, &mut stack, &mut f);
    Ok(())
}

/// All length-`m` states in lexicographic order. There are `S(m - 2)` of
/// them for `m >= 2`, so this refuses lengths beyond
/// `DEFAULT_ENUMERATION_LIMIT`; use `enumerate_states_with_limit` to
/// override.
pub fn enumerate_states(m: usize) -> Result<Vec<LockSequence>, LockError> {
    enumerate_states_with_limit(m, DEFAULT_ENUMERATION_LIMIT)
}

pub fn enumerate_states_with_limit(m: usize, limit: usize) -> Result<Vec<LockSequence>, LockError> {
    if m > limit {
        return Err(LockError::EnumerationLimit { m, limit });
    }
    let mut states = Vec::new();
    for_each_state(m, |entries| {
        states.push(LockSequence::from_entries_unchecked(entries.to_vec()));
    })?;
    Ok(states)
}
