//! Cross-module invariants: the encoder, the automata, and the spectral
//! layer must all tell the same story about the same class.

use std::collections::HashSet;

use av4231::automaton::{Automaton, BuildOptions, Operator};
use av4231::lock::{count_states, enumerate_states, unrank, LockSequence};
use av4231::perm::{all_permutations, Permutation};
use av4231::spectral::{
    certify_lower_bound, count_words, power_iteration, power_iteration_on, verify_lower_bound,
    DEFAULT_MAX_ITERATIONS,
};
use av4231::{Count, Rational};
use num_bigint::BigUint;
use num_traits::ToPrimitive;
use proptest::prelude::*;

const MAX_N: usize = 8;
const MAX_K: u32 = 5;

/// One sweep over all permutations of length `0..=MAX_N`, recording for
/// each length and cap how many avoiders fit the cap, and checking the
/// automaton against the encoder on every single permutation.
fn class_counts_by_sweep() -> Vec<Vec<u64>> {
    let automata: Vec<Automaton> = (1..=MAX_K).map(|k| Automaton::new(k).unwrap()).collect();
    let mut counts = vec![vec![0u64; MAX_N + 1]; MAX_K as usize + 1];
    for n in 0..=MAX_N {
        for p in all_permutations(n) {
            let avoids = p.avoids_4231();
            let slots = p.slots_required();
            let word = p.encode();
            assert_eq!(word.len(), n);
            assert_eq!(word.decode().unwrap(), p);
            for automaton in &automata {
                let k = automaton.slot_cap() as usize;
                let in_class = avoids && slots <= k;
                assert_eq!(
                    automaton.accepts(&word),
                    in_class,
                    "perm {p}, k {k}, slots {slots}, avoids {avoids}"
                );
                if in_class {
                    counts[k][n] += 1;
                }
            }
        }
    }
    counts
}

#[test]
fn encoder_and_automata_agree_on_all_small_permutations() {
    let by_class = class_counts_by_sweep();
    for k in 1..=MAX_K {
        let counted = count_words(k, MAX_N, &BuildOptions::default()).unwrap();
        for n in 0..=MAX_N {
            assert_eq!(
                counted.counts[n],
                BigUint::from(by_class[k as usize][n]),
                "k = {k}, n = {n}"
            );
        }
    }
}

#[test]
fn needing_more_slots_forces_length() {
    // A permutation whose evolution needs more than k slots has length at
    // least 2k; equivalently n >= 2 (slots - 1).
    for n in 0..=MAX_N {
        for p in all_permutations(n) {
            assert!(n >= 2 * (p.slots_required() - 1), "perm {p}");
        }
    }
}

#[test]
fn every_state_is_reachable() {
    for k in 1..=6usize {
        let mut seen = HashSet::new();
        let mut frontier = vec![LockSequence::initial()];
        seen.insert(LockSequence::initial());
        while let Some(state) = frontier.pop() {
            for letter in state.allowed_letters(k).unwrap() {
                let next = state.step(letter, k).unwrap();
                if seen.insert(next.clone()) {
                    frontier.push(next);
                }
            }
        }
        assert_eq!(BigUint::from(seen.len()), count_states(k), "k = {k}");
    }
}

#[test]
fn lock_free_out_degrees() {
    // 4m - 2 letters leave a lock-free state below the cap (one fill and
    // one right insertion per interior slot, one left and one middle per
    // slot); at the cap the middle insertions disappear.
    for k in 1..=8usize {
        for m in 1..=k {
            let state = LockSequence::new(vec![0; m]).unwrap();
            let expected = if m < k { 4 * m - 2 } else { 3 * m - 2 };
            assert_eq!(state.allowed_letters(k).unwrap().len(), expected);
        }
    }
}

#[test]
fn last_slot_only_left_and_middle() {
    for k in 1..=6usize {
        for m in 1..=k {
            for state in enumerate_states(m).unwrap() {
                let locked = state.locked_slots();
                for letter in state.allowed_letters(k).unwrap() {
                    let slot = letter.slot() as usize;
                    assert!(!locked.contains(&slot), "{state} {letter}");
                    if slot == m {
                        assert!(
                            matches!(
                                letter.kind(),
                                av4231::LetterKind::Left | av4231::LetterKind::Middle
                            ),
                            "{state} {letter}"
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn brackets_contain_the_closed_form_at_every_iteration() {
    let exact = 2.0 + 2.0_f64.sqrt();
    let op = Operator::new(2, &BuildOptions::default()).unwrap();
    let mut iterations_seen = 0;
    let mut observer = |_: u64, lower: f64, upper: f64| {
        iterations_seen += 1;
        assert!(
            lower <= exact && exact <= upper,
            "bracket [{lower}, {upper}] lost the eigenvalue"
        );
    };
    let outcome = power_iteration_on(&op, 1e-10, 1000, Some(&mut observer));
    assert!(outcome.converged);
    assert!(iterations_seen >= 2);
}

#[test]
fn counts_agree_across_caps_up_to_the_window() {
    let tables: Vec<_> = (3..=6)
        .map(|k| count_words(k, 9, &BuildOptions::default()).unwrap())
        .collect();
    for a in &tables {
        for b in &tables {
            let window = 2 * a.k.min(b.k) as usize - 1;
            for n in 0..=window.min(9) {
                assert_eq!(a.counts[n], b.counts[n], "k {} vs {} at n {n}", a.k, b.k);
            }
        }
    }
}

#[test]
fn counts_monotone_in_cap() {
    let tables: Vec<_> = (1..=6)
        .map(|k| count_words(k, 10, &BuildOptions::default()).unwrap())
        .collect();
    for pair in tables.windows(2) {
        for n in 0..=10 {
            assert!(
                pair[0].counts[n] <= pair[1].counts[n],
                "k {} -> {} at n {n}",
                pair[0].k,
                pair[1].k
            );
        }
    }
}

#[test]
fn certification_is_sound_below_the_bracket() {
    for k in 2..=6 {
        let estimate = power_iteration(k, 1e-7, DEFAULT_MAX_ITERATIONS, &BuildOptions::default())
            .unwrap();
        let c = Rational::from_float(estimate.lower - 1e-6).unwrap();
        let cert = certify_lower_bound(
            k,
            &c,
            1e-7,
            DEFAULT_MAX_ITERATIONS,
            &BuildOptions::default(),
        )
        .unwrap();
        assert!(cert.verified, "k = {k}");
        assert!(cert.c.to_f64().unwrap() <= estimate.upper, "k = {k}");
    }
}

#[test]
fn certified_bound_never_exceeds_a_verified_claim() {
    // Directly check that verification computes with the matrix, not the
    // float path: a bound just above the row-ratio fails, just below works.
    let op = Operator::new(3, &BuildOptions::default()).unwrap();
    let ones = vec![Count::from(1u32); op.dim()];
    let min_row_sum = (0..op.dim())
        .map(|i| match &op {
            Operator::Csr(m) => m.row_sum(i),
            Operator::Fly(_) => unreachable!(),
        })
        .min()
        .unwrap();
    let good = verify_lower_bound(&op, &Rational::from_integer(min_row_sum.into()), ones.clone())
        .unwrap();
    assert!(good.verified);
    let too_high = Rational::new((min_row_sum * 100 + 1).into(), 100.into());
    let bad = verify_lower_bound(&op, &too_high, ones).unwrap();
    assert!(!bad.verified);
    assert!(bad.violation.is_some());
}

proptest! {
    #[test]
    fn decode_inverts_encode(p in arbitrary_permutation(40)) {
        let word = p.encode();
        prop_assert_eq!(word.len(), p.len());
        prop_assert_eq!(word.decode().unwrap(), p);
    }

    #[test]
    fn slots_bound_holds_generally(p in arbitrary_permutation(40)) {
        prop_assert!(p.len() >= 2 * (p.slots_required() - 1));
    }

    #[test]
    fn unrank_rank_round_trip(index in 1u64..33_887_466) {
        // Indices across all states of up to 14 slots.
        let state = unrank(index).unwrap();
        prop_assert_eq!(state.rank().unwrap(), index);
    }

    #[test]
    fn rank_respects_length_then_lex(a in 1u64..100_000, b in 1u64..100_000) {
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assume!(lo != hi);
        let first = unrank(lo).unwrap();
        let second = unrank(hi).unwrap();
        let key = |s: &LockSequence| (s.len(), s.entries().to_vec());
        prop_assert!(key(&first) < key(&second));
    }

    #[test]
    fn permutation_text_round_trips(p in arbitrary_permutation(32)) {
        let rendered = p.to_string();
        prop_assert_eq!(rendered.parse::<Permutation>().unwrap(), p);
    }
}

fn arbitrary_permutation(max_n: usize) -> impl Strategy<Value = Permutation> {
    (0..=max_n)
        .prop_flat_map(|n| Just((1..=n as u32).collect::<Vec<u32>>()).prop_shuffle())
        .prop_map(|values| Permutation::new(values).unwrap())
}
