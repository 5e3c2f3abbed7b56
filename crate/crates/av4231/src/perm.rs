//! Permutations, pattern containment, and the insertion encoding.
//!
//! A permutation evolves by inserting the values `1, 2, ..., n` as
//! successive maxima into a configuration of placed values and slots.
//! The variant implemented here keeps a protected slot at the right end:
//! the last slot never receives a fill or right insertion, so every
//! intermediate configuration ends with a slot.

use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use itertools::Itertools;
use num_bigint::BigUint;
use thiserror::Error;

/// Refusal threshold for exhaustive enumeration over n! permutations.
pub const DEFAULT_ENUMERATION_LIMIT: usize = 11;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PermError {
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
    #[error("letter {letter} is not playable: {reason}")]
    InvalidLetter {
        letter: InsertionLetter,
        reason: &'static str,
    },
    #[error("evolution is incomplete: {interior_slots} interior slot(s) remain")]
    IncompleteEvolution { interior_slots: usize },
    #[error("exhaustive enumeration refused for n = {n} (limit is {limit})")]
    EnumerationLimit { n: usize, limit: usize },
    #[error("cannot parse {what} from {input:?}")]
    Parse { what: &'static str, input: String },
}

/// A permutation of `{1, ..., n}`, written as its sequence of values.
/// `n = 0` is the empty permutation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation {
    values: Vec<u32>,
}

static PATTERN_4231: LazyLock<Permutation> =
    LazyLock::new(|| Permutation::new(vec![4, 2, 3, 1]).unwrap());

impl Permutation {
    /// Validates that `values` is a bijection onto `{1, ..., n}`.
    pub fn new(values: Vec<u32>) -> Result<Self, PermError> {
        let n = values.len();
        let mut seen = vec![false; n + 1];
        for &v in &values {
            if v == 0 || v as usize > n {
                return Err(PermError::InvalidPermutation(format!(
                    "value {v} is outside 1..={n}"
                )));
            }
            if std::mem::replace(&mut seen[v as usize], true) {
                return Err(PermError::InvalidPermutation(format!("value {v} repeats")));
            }
        }
        Ok(Self { values })
    }

    pub fn empty() -> Self {
        Self { values: Vec::new() }
    }

    /// Construct without validation; `values` must already be a bijection.
    pub(crate) fn from_vec_unchecked(values: Vec<u32>) -> Self {
        debug_assert!(Self::new(values.clone()).is_ok());
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    /// True iff some subsequence of `self` is ordered like `pattern`.
    ///
    /// Backtracking over candidate index tuples, pruning any partial
    /// choice whose relative order already disagrees with the pattern.
    pub fn contains(&self, pattern: &Permutation) -> bool {
        let host = &self.values;
        let pat = &pattern.values;
        if pat.len() > host.len() {
            return false;
        }
        if pat.is_empty() {
            return true;
        }

        fn search(host: &[u32], pat: &[u32], chosen: &mut Vec<usize>) -> bool {
            let depth = chosen.len();
            if depth == pat.len() {
                return true;
            }
            let start = chosen.last().map_or(0, |&i| i + 1);
            let last = host.len() - (pat.len() - depth);
            for i in start..=last {
                let consistent = chosen
                    .iter()
                    .enumerate()
                    .all(|(d, &j)| (host[i] > host[j]) == (pat[depth] > pat[d]));
                if consistent {
                    chosen.push(i);
                    if search(host, pat, chosen) {
                        return true;
                    }
                    chosen.pop();
                }
            }
            false
        }

        search(host, pat, &mut Vec::with_capacity(pat.len()))
    }

    pub fn avoids_4231(&self) -> bool {
        !self.contains(&PATTERN_4231)
    }

    /// The insertion encoding of this permutation. Defined for every
    /// permutation, avoider or not; the word always has length `n`.
    pub fn encode(&self) -> InsertionWord {
        let (letters, _) = self.simulate();
        InsertionWord { letters }
    }

    /// Maximum number of slots present at any stage of the evolution.
    /// The initial configuration is a single slot, so the result is
    /// at least 1 (and exactly 1 for increasing permutations).
    pub fn slots_required(&self) -> usize {
        let (_, max_slots) = self.simulate();
        max_slots
    }

    /// Replays the evolution. At the stage that inserts value `v`, the
    /// configuration consists of the positions already holding values
    /// `< v`, with every maximal block of larger-valued positions
    /// collapsed to one slot; a sentinel past the right end keeps the
    /// protected final slot alive. The letter for `v` is read off from
    /// where `v` sits inside its block.
    fn simulate(&self) -> (Vec<InsertionLetter>, usize) {
        let n = self.values.len();
        let mut position_of = vec![0usize; n + 1];
        for (i, &v) in self.values.iter().enumerate() {
            position_of[v as usize] = i + 1;
        }

        let mut letters = Vec::with_capacity(n);
        let mut max_slots = 1;
        for v in 1..=n as u32 {
            let pos = position_of[v as usize];
            // Positions 1..=n+1; position n+1 is the sentinel, active forever.
            let active = |i: usize| i == n + 1 || self.values[i - 1] >= v;
            let mut slot = 0;
            let mut run_start = 0;
            let mut i = 1;
            let (mut a, mut b) = (0, 0);
            while i <= n + 1 {
                if active(i) {
                    if run_start == 0 {
                        run_start = i;
                        slot += 1;
                    }
                    if i == n + 1 || !active(i + 1) {
                        // run_start..=i is a maximal run
                        if (run_start..=i).contains(&pos) {
                            a = run_start;
                            b = i;
                            break;
                        }
                        run_start = 0;
                    }
                } else {
                    run_start = 0;
                }
                i += 1;
            }
            debug_assert!(a > 0, "value {v} must lie in some run");
            let kind = if a == b {
                LetterKind::Fill
            } else if pos == a {
                LetterKind::Left
            } else if pos == b {
                LetterKind::Right
            } else {
                LetterKind::Middle
            };
            letters.push(InsertionLetter::new(kind, slot as u32).unwrap());

            // Slot count at this stage, before inserting v.
            let mut runs = slot; // runs counted so far, up to v's run
            let mut in_run = true; // currently inside v's run
            for j in (i + 1)..=(n + 1) {
                if active(j) {
                    if !in_run {
                        in_run = true;
                        runs += 1;
                    }
                } else {
                    in_run = false;
                }
            }
            max_slots = max_slots.max(runs);
        }
        (letters, max_slots)
    }
}

impl fmt::Display for Permutation {
    /// Space-separated values, e.g. `2 4 6 1 5 3`; the empty permutation
    /// renders as the empty string.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for v in &self.values {
            if !first {
                write!(f, " ")?;
            }
            write!(f, "{v}")?;
            first = false;
        }
        Ok(())
    }
}

impl FromStr for Permutation {
    type Err = PermError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let values = s
            .split_whitespace()
            .map(|tok| {
                tok.parse::<u32>().map_err(|_| PermError::Parse {
                    what: "permutation",
                    input: s.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Permutation::new(values)
    }
}

/// The four insertion events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LetterKind {
    /// Fill a slot with the new value.
    Fill,
    /// Insert at the left end of a slot; the slot survives on the right.
    Left,
    /// Insert at the right end of a slot; the slot survives on the left.
    Right,
    /// Insert in the middle, splitting the slot in two.
    Middle,
}

impl LetterKind {
    pub fn symbol(self) -> char {
        match self {
            LetterKind::Fill => 'f',
            LetterKind::Left => 'l',
            LetterKind::Right => 'r',
            LetterKind::Middle => 'm',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        match c {
            'f' => Some(LetterKind::Fill),
            'l' => Some(LetterKind::Left),
            'r' => Some(LetterKind::Right),
            'm' => Some(LetterKind::Middle),
            _ => None,
        }
    }
}

/// A code letter: an insertion kind applied to a slot, counted from the
/// left starting at 1. Ordering is kind-major (f < l < r < m), then by
/// slot; this is the canonical edge-generation order everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InsertionLetter {
    kind: LetterKind,
    slot: u32,
}

impl InsertionLetter {
    pub fn new(kind: LetterKind, slot: u32) -> Result<Self, PermError> {
        if slot == 0 {
            return Err(PermError::Parse {
                what: "insertion letter",
                input: format!("{}0", kind.symbol()),
            });
        }
        Ok(Self { kind, slot })
    }

    pub fn kind(&self) -> LetterKind {
        self.kind
    }

    /// 1-based slot index.
    pub fn slot(&self) -> u32 {
        self.slot
    }
}

impl fmt::Display for InsertionLetter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.kind.symbol(), self.slot)
    }
}

impl FromStr for InsertionLetter {
    type Err = PermError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || PermError::Parse {
            what: "insertion letter",
            input: s.to_string(),
        };
        let mut chars = s.chars();
        let kind = chars.next().and_then(LetterKind::from_symbol).ok_or_else(err)?;
        let slot: u32 = chars.as_str().parse().map_err(|_| err())?;
        if slot == 0 {
            return Err(err());
        }
        Ok(Self { kind, slot })
    }
}

/// A sequence of insertion letters; the empty word encodes the empty
/// permutation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct InsertionWord {
    letters: Vec<InsertionLetter>,
}

impl InsertionWord {
    pub fn new(letters: Vec<InsertionLetter>) -> Self {
        Self { letters }
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn letters(&self) -> &[InsertionLetter] {
        &self.letters
    }

    /// Replays the word on the initial single-slot configuration and
    /// returns the encoded permutation.
    ///
    /// Fails with `InvalidLetter` if a letter addresses a missing slot or
    /// fills/right-inserts into the protected last slot, and with
    /// `IncompleteEvolution` if interior slots survive to the end.
    pub fn decode(&self) -> Result<Permutation, PermError> {
        let mut config = SlotConfiguration::new();
        for &letter in &self.letters {
            config.apply(letter)?;
        }
        config.into_permutation()
    }
}

impl fmt::Display for InsertionWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for letter in &self.letters {
            if !first {
                write!(f, " ")?;
            }
            write!(f, "{letter}")?;
            first = false;
        }
        Ok(())
    }
}

impl FromStr for InsertionWord {
    type Err = PermError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let letters = s
            .split_whitespace()
            .map(InsertionLetter::from_str)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { letters })
    }
}

/// One item of a partial configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Item {
    Value(u32),
    Slot,
}

/// A partial configuration: placed values interleaved with slots. The
/// last item is always a slot, and the next value to insert is one more
/// than the number of values placed so far.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotConfiguration {
    items: Vec<Item>,
    next_value: u32,
}

impl SlotConfiguration {
    pub fn new() -> Self {
        Self {
            items: vec![Item::Slot],
            next_value: 1,
        }
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn slot_count(&self) -> usize {
        self.items
            .iter()
            .filter(|item| matches!(item, Item::Slot))
            .count()
    }

    /// Complete means the single protected slot is all that remains.
    pub fn is_complete(&self) -> bool {
        self.slot_count() == 1
    }

    /// Inserts the next value according to `letter`.
    pub fn apply(&mut self, letter: InsertionLetter) -> Result<(), PermError> {
        let total = self.slot_count();
        let target = letter.slot() as usize;
        if target > total {
            return Err(PermError::InvalidLetter {
                letter,
                reason: "slot index exceeds the number of slots",
            });
        }
        let last = target == total;
        if last && matches!(letter.kind(), LetterKind::Fill | LetterKind::Right) {
            return Err(PermError::InvalidLetter {
                letter,
                reason: "the last slot admits neither fill nor right insertion",
            });
        }
        let idx = self
            .items
            .iter()
            .enumerate()
            .filter(|(_, item)| matches!(item, Item::Slot))
            .nth(target - 1)
            .map(|(i, _)| i)
            .expect("slot index validated above");

        let v = Item::Value(self.next_value);
        match letter.kind() {
            LetterKind::Fill => self.items[idx] = v,
            LetterKind::Left => self.items.insert(idx, v),
            LetterKind::Right => self.items.insert(idx + 1, v),
            LetterKind::Middle => {
                self.items.splice(idx + 1..idx + 1, [v, Item::Slot]);
            }
        }
        self.next_value += 1;
        Ok(())
    }

    /// Extracts the permutation if the evolution is complete.
    pub fn into_permutation(self) -> Result<Permutation, PermError> {
        let interior = self.slot_count() - 1;
        if interior > 0 {
            return Err(PermError::IncompleteEvolution {
                interior_slots: interior,
            });
        }
        let values = self
            .items
            .into_iter()
            .filter_map(|item| match item {
                Item::Value(v) => Some(v),
                Item::Slot => None,
            })
            .collect();
        Ok(Permutation::from_vec_unchecked(values))
    }
}

impl Default for SlotConfiguration {
    fn default() -> Self {
        Self::new()
    }
}

/// All permutations of length `n` in lexicographic order.
pub fn all_permutations(n: usize) -> impl Iterator<Item = Permutation> {
    // Length 0 still yields the empty permutation once.
    (1..=n as u32)
        .permutations(n)
        .map(Permutation::from_vec_unchecked)
}

/// Counts the length-`n` permutations avoiding 4231 by exhaustive check,
/// optionally keeping only those whose evolution uses at most `slot_cap`
/// slots. Refuses `n` beyond `DEFAULT_ENUMERATION_LIMIT`.
pub fn enumerate_avoiders(n: usize, slot_cap: Option<usize>) -> Result<BigUint, PermError> {
    enumerate_avoiders_with_limit(n, slot_cap, DEFAULT_ENUMERATION_LIMIT)
}

/// As `enumerate_avoiders`, with an explicit refusal threshold.
pub fn enumerate_avoiders_with_limit(
    n: usize,
    slot_cap: Option<usize>,
    limit: usize,
) -> Result<BigUint, PermError> {
    if n > limit {
        return Err(PermError::EnumerationLimit { n, limit });
    }
    let mut count = 0u64;
    for p in all_permutations(n) {
        if p.avoids_4231() && slot_cap.is_none_or(|cap| p.slots_required() <= cap) {
            count += 1;
        }
    }
    Ok(BigUint::from(count))
}
