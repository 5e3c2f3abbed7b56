//! Extended tier: the cap-13 reproductions. Minutes of CPU and a few GiB
//! of memory; run explicitly with
//! `cargo test -p av4231-cli --test extended -- --ignored --nocapture`.

use std::process::Command;
use std::str::FromStr;
use std::time::Instant;

use av4231::automaton::{Automaton, BuildOptions};
use av4231::lock::LockSequence;
use av4231::spectral::{count_words, power_iteration};
use num_bigint::BigUint;

#[test]
#[ignore = "cap-13 run: minutes of CPU"]
fn extended_eigenvalues_9_to_13() {
    let table = [
        (9u32, 8.6220),
        (10, 8.8511),
        (11, 9.0439),
        (12, 9.2085),
        (13, 9.3508),
    ];
    for (k, expected) in table {
        let started = Instant::now();
        let estimate = power_iteration(k, 5e-5, 100_000, &BuildOptions::default()).unwrap();
        println!(
            "k={k}: lambda={:.6} bracket=[{:.6}, {:.6}] iterations={} took {:?}",
            estimate.estimate,
            estimate.lower,
            estimate.upper,
            estimate.iterations,
            started.elapsed()
        );
        assert!(
            (estimate.estimate - expected).abs() <= 5e-4,
            "k={k}: {} vs {expected}",
            estimate.estimate
        );
    }
}

#[test]
#[ignore = "cap-13 run: minutes of CPU"]
fn extended_counts_21_to_25() {
    let expected: [(usize, &str); 5] = [
        (21, "1535346218316422"),
        (22, "12015325816028313"),
        (23, "94944352095728825"),
        (24, "757046484552152932"),
        (25, "6087537591051072864"),
    ];
    let started = Instant::now();
    let counts = count_words(13, 25, &BuildOptions::default()).unwrap();
    println!("count_words(13, 25) took {:?}", started.elapsed());
    for (n, value) in expected {
        assert_eq!(
            counts.counts[n],
            BigUint::from_str(value).unwrap(),
            "n = {n}"
        );
        assert!(!counts.is_restricted(n), "n = {n} lies within the cap-13 window");
    }
}

#[test]
#[ignore = "cap-13 run: minutes of CPU"]
fn extended_certify_13() {
    let started = Instant::now();
    let output = Command::new(env!("CARGO_BIN_EXE_av4231"))
        .args(["certify", "--k", "13", "--c", "187/20"])
        .output()
        .expect("binary runs");
    println!(
        "certify --k 13 --c 187/20 took {:?}: {}{}",
        started.elapsed(),
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    assert!(output.status.success());
    assert!(String::from_utf8_lossy(&output.stdout).contains("\"verified\":true"));
}

#[test]
#[ignore = "cap-13 run: a minute of CPU"]
fn extended_stats_13() {
    let started = Instant::now();
    let stats = Automaton::new(13).unwrap().stats().unwrap();
    println!(
        "stats(13): states={} transitions={} maxOutDegree={} at {} took {:?}",
        stats.states,
        stats.transitions,
        stats.max_out_degree,
        stats.argmax_state,
        started.elapsed()
    );
    assert_eq!(stats.states, 6589728);
    assert_eq!(stats.max_out_degree, 46);
    assert_eq!(stats.argmax_state, LockSequence::new(vec![0; 12]).unwrap());
}
