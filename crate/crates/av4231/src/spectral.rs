//! Transfer-matrix computations: exact word counts, dominant-eigenvalue
//! estimation with two-sided bounds, and exactly verified lower-bound
//! certificates.
//!
//! All matrices here are non-negative, irreducible and have positive
//! diagonals, so for any strictly positive vector `v` the ratios
//! `(A v)_i / v_i` bracket the dominant eigenvalue from both sides; the
//! iteration reports that bracket rather than a bare estimate. Exact
//! claims never pass through floating point: word counts use big
//! integers, certificates are checked in integer arithmetic.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::automaton::{AutomatonError, BuildOptions, Operator};
use crate::lock::StateIndex;
use crate::scalar::{Count, FloatScalar, Rational, Real};

pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_MAX_ITERATIONS: u64 = 100_000;
/// Fixed-point scale used when a certificate vector is derived from a
/// float iterate.
pub const CERTIFICATE_SCALE_BITS: u32 = 40;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error(transparent)]
    Automaton(#[from] AutomatonError),
    #[error(
        "bracket did not reach width {tolerance:e} within {iterations} iterations; \
         best bounds [{lower}, {upper}]"
    )]
    NotConverged {
        tolerance: f64,
        iterations: u64,
        lower: f64,
        upper: f64,
        estimate: Box<EigenEstimate>,
    },
    #[error("vector length {got} does not match dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("certificate vector has a negative entry at coordinate {index}")]
    NonNegativityViolation { index: StateIndex },
    #[error("certificate vector must be positive on the start coordinate")]
    ZeroStart,
    #[error("the certified bound must be a non-negative rational")]
    NegativeBound,
    #[error("need at least 3 rows with k >= {k_min} to fit, found {found}")]
    InsufficientData { k_min: u32, found: usize },
    #[error("cannot parse rational from {0:?}")]
    ParseRational(String),
}

/// Dominant-eigenvalue estimate with the two-sided ratio bounds of its
/// final strictly positive iterate (max-norm 1).
#[derive(Debug, Clone)]
pub struct EigenEstimate<T = Real> {
    pub k: u32,
    pub estimate: T,
    pub lower: T,
    pub upper: T,
    pub iterations: u64,
    pub vector: Vec<T>,
}

/// Exact accepted-word counts `counts[n]` for word lengths `0..=n_max`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountSequence {
    pub k: u32,
    pub counts: Vec<Count>,
}

impl CountSequence {
    /// Lengths `n > 2k - 1` count only the words of the slot-capped
    /// class, not the full avoidance class.
    pub fn is_restricted(&self, n: usize) -> bool {
        n + 1 > 2 * self.k as usize
    }
}

/// An exactly verified entrywise claim `A v >= c v` with `v >= 0` and
/// `v_1 > 0`. Scaling `v` does not change the claim, so the vector is
/// stored as big integers.
#[derive(Debug, Clone)]
pub struct Certificate {
    pub k: u32,
    pub c: Rational,
    pub vector: Vec<Count>,
    pub verified: bool,
    /// First violated coordinate (1-based) when verification fails.
    pub violation: Option<StateIndex>,
}

// ---------------------------------------------------------------------------
// Exact word counts
// ---------------------------------------------------------------------------

/// Word counts of `Aut_k` for lengths `0..=n_max` by repeated exact
/// matrix application to the start indicator. `counts[n]` equals the full
/// avoidance count only for `n <= 2k - 1`; larger lengths are restricted
/// to the capped class (flagged by `CountSequence::is_restricted`).
pub fn count_words(k: u32, n_max: usize, options: &BuildOptions) -> Result<CountSequence, SpectralError> {
    let op = Operator::new(k, options)?;
    Ok(count_words_on(&op, n_max))
}

pub fn count_words_on(op: &Operator, n_max: usize) -> CountSequence {
    let mut x = vec![Count::zero(); op.dim()];
    x[0] = Count::from(1u32);
    let mut counts = Vec::with_capacity(n_max + 1);
    counts.push(x[0].clone());
    for _ in 1..=n_max {
        x = op.apply(&x);
        counts.push(x[0].clone());
    }
    CountSequence {
        k: op.slot_cap(),
        counts,
    }
}

// ---------------------------------------------------------------------------
// Power iteration
// ---------------------------------------------------------------------------

pub struct PowerIterationOutcome<T = Real> {
    pub estimate: EigenEstimate<T>,
    pub converged: bool,
}

/// Power iteration from the all-ones vector, renormalizing in max norm.
///
/// Every iterate stays strictly positive (the diagonal is positive), so
/// each step yields valid lower/upper ratio bounds around the dominant
/// eigenvalue; the run stops once their gap is at most `tol`. The
/// returned bounds are exactly the extreme ratios of the returned vector.
/// `observer` is called once per iteration with the current bounds.
pub fn power_iteration_on<T: FloatScalar>(
    op: &Operator,
    tol: T,
    max_iter: u64,
    mut observer: Option<&mut dyn FnMut(u64, T, T)>,
) -> PowerIterationOutcome<T> {
    let n = op.dim();
    let one = T::one();
    let mut v = vec![one; n];
    let mut lower = T::zero();
    let mut upper = T::infinity();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let w = op.apply(&v);
        lower = T::infinity();
        upper = T::zero();
        for (wi, vi) in w.iter().zip(&v) {
            let ratio = *wi / *vi;
            lower = lower.min(ratio);
            upper = upper.max(ratio);
        }
        if let Some(f) = observer.as_mut() {
            f(iterations, lower, upper);
        }
        if upper - lower <= tol {
            converged = true;
            break;
        }
        if iterations == max_iter {
            break; // keep v paired with the bounds just measured
        }
        let max = w.iter().fold(T::zero(), |acc, &x| acc.max(x));
        v = w;
        for x in &mut v {
            *x = *x / max;
        }
    }
    let two = one + one;
    let estimate = EigenEstimate {
        k: op.slot_cap(),
        estimate: (lower + upper) / two,
        lower,
        upper,
        iterations,
        vector: v,
    };
    PowerIterationOutcome {
        estimate,
        converged,
    }
}

/// Power iteration on `Aut_k`. Not reaching the tolerance is an error
/// that still carries the best (valid) bracket.
pub fn power_iteration(
    k: u32,
    tol: f64,
    max_iter: u64,
    options: &BuildOptions,
) -> Result<EigenEstimate, SpectralError> {
    let op = Operator::new(k, options)?;
    let outcome = power_iteration_on(&op, tol, max_iter, None);
    if outcome.converged {
        Ok(outcome.estimate)
    } else {
        Err(SpectralError::NotConverged {
            tolerance: tol,
            iterations: outcome.estimate.iterations,
            lower: outcome.estimate.lower,
            upper: outcome.estimate.upper,
            estimate: Box::new(outcome.estimate),
        })
    }
}

/// Brackets for `k = 1..=k_max`, each computed independently; a failing
/// `k` is reported in place without discarding the finished rows.
pub fn lambda_table(
    k_max: u32,
    tol: f64,
    max_iter: u64,
    options: &BuildOptions,
) -> Vec<(u32, Result<EigenEstimate, SpectralError>)> {
    (1..=k_max)
        .map(|k| (k, power_iteration(k, tol, max_iter, options)))
        .collect()
}

// ---------------------------------------------------------------------------
// Certificates
// ---------------------------------------------------------------------------

/// Exact entrywise check of `A v >= c v`. With `c = p/q` this is
/// `q (A v)_i >= p v_i` over big integers, row by row; the first failing
/// row is recorded.
pub fn verify_lower_bound(
    op: &Operator,
    c: &Rational,
    vector: Vec<Count>,
) -> Result<Certificate, SpectralError> {
    if c.is_negative() {
        return Err(SpectralError::NegativeBound);
    }
    if vector.len() != op.dim() {
        return Err(SpectralError::DimensionMismatch {
            expected: op.dim(),
            got: vector.len(),
        });
    }
    if vector[0].is_zero() {
        return Err(SpectralError::ZeroStart);
    }
    let p = c.numer().magnitude();
    let q = c.denom().magnitude();
    let image = op.apply(&vector);
    let violation = image
        .iter()
        .zip(&vector)
        .position(|(av, v)| av * q < v * p)
        .map(|i| i as StateIndex + 1);
    Ok(Certificate {
        k: op.slot_cap(),
        c: c.clone(),
        vector,
        verified: violation.is_none(),
        violation,
    })
}

/// As `verify_lower_bound`, for a rational vector: entries are brought to
/// a common denominator, which cancels from the claim.
pub fn verify_lower_bound_rational(
    op: &Operator,
    c: &Rational,
    vector: &[Rational],
) -> Result<Certificate, SpectralError> {
    if let Some(index) = vector.iter().position(|v| v.is_negative()) {
        return Err(SpectralError::NonNegativityViolation {
            index: index as StateIndex + 1,
        });
    }
    let mut common = BigInt::from(1u32);
    for v in vector {
        common = common.lcm(v.denom());
    }
    let scaled = vector
        .iter()
        .map(|v| (v.numer() * (&common / v.denom())).magnitude().clone())
        .collect();
    verify_lower_bound(op, c, scaled)
}

/// Certifies `A v >= c v` with a vector derived from a power-iteration
/// iterate: scale the float entries by a power of two, round down to
/// integers, and verify exactly. If the rounded vector fails, retry once
/// with `c` lowered by the bracket width and, independently, with larger
/// scales (a coarse scale floors the tiny entries of a badly conditioned
/// eigenvector to zero, which can break rows that reference them). The
/// returned certificate records whatever claim was actually checked last.
pub fn certify_lower_bound(
    k: u32,
    c: &Rational,
    tol: f64,
    max_iter: u64,
    options: &BuildOptions,
) -> Result<Certificate, SpectralError> {
    let op = Operator::new(k, options)?;
    // The bracket does not need to converge for the construction to be
    // sound; whatever iterate comes back is checked exactly.
    let outcome = power_iteration_on(&op, tol, max_iter, None);
    let estimate = outcome.estimate;
    let width = (estimate.upper - estimate.lower).max(0.0);

    let reduced = c - Rational::from_float(width).unwrap_or_else(Rational::zero);
    let mut attempts: Vec<(Rational, u32)> = vec![
        (c.clone(), CERTIFICATE_SCALE_BITS),
        (reduced.clone(), CERTIFICATE_SCALE_BITS),
        (c.clone(), 2 * CERTIFICATE_SCALE_BITS),
        (c.clone(), 4 * CERTIFICATE_SCALE_BITS),
        (reduced, 4 * CERTIFICATE_SCALE_BITS),
    ];
    attempts.retain(|(bound, _)| !bound.is_negative());

    let mut last = None;
    for (bound, scale_bits) in attempts {
        let vector = scale_to_integers(&estimate.vector, scale_bits);
        let certificate = verify_lower_bound(&op, &bound, vector)?;
        if certificate.verified {
            return Ok(certificate);
        }
        last = Some(certificate);
    }
    Ok(last.expect("at least the requested bound is attempted"))
}

/// `floor(x * 2^bits)` per entry, clamping negatives to zero.
fn scale_to_integers(vector: &[f64], bits: u32) -> Vec<Count> {
    let scale = BigUint::from(1u32) << bits;
    vector
        .iter()
        .map(|&x| {
            if x <= 0.0 || !x.is_finite() {
                return Count::zero();
            }
            let rational = BigRational::from_float(x).expect("finite");
            (rational.numer().magnitude() * &scale) / rational.denom().magnitude()
        })
        .collect()
}

/// Certificate file: header `k c_num c_den`, then one vector entry per
/// line in rank order.
pub fn write_certificate(certificate: &Certificate, mut out: impl std::io::Write) -> std::io::Result<()> {
    writeln!(
        out,
        "{} {} {}",
        certificate.k,
        certificate.c.numer(),
        certificate.c.denom()
    )?;
    for v in &certificate.vector {
        writeln!(out, "{v}")?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Extrapolation diagnostic
// ---------------------------------------------------------------------------

/// Least-squares fit of `lambda ~ intercept + slope / sqrt(k)`.
#[derive(Debug, Clone)]
pub struct ExtrapolationFit {
    pub intercept: Real,
    pub slope: Real,
    /// `(k, observed - fitted)` per row used.
    pub residuals: Vec<(u32, Real)>,
}

/// Fits the rows with `k >= k_min`. A diagnostic for guessing the limit
/// of the growth rates, not a bound of any kind.
pub fn extrapolate(rows: &[(u32, Real)], k_min: u32) -> Result<ExtrapolationFit, SpectralError> {
    let used: Vec<(u32, Real)> = rows.iter().copied().filter(|&(k, _)| k >= k_min).collect();
    if used.len() < 3 {
        return Err(SpectralError::InsufficientData {
            k_min,
            found: used.len(),
        });
    }
    let n = used.len() as Real;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(k, lambda) in &used {
        let x = 1.0 / (k as Real).sqrt();
        sx += x;
        sy += lambda;
        sxx += x * x;
        sxy += x * lambda;
    }
    let denom = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let residuals = used
        .iter()
        .map(|&(k, lambda)| {
            let fitted = intercept + slope / (k as Real).sqrt();
            (k, lambda - fitted)
        })
        .collect();
    Ok(ExtrapolationFit {
        intercept,
        slope,
        residuals,
    })
}

// ---------------------------------------------------------------------------
// Rational parsing
// ---------------------------------------------------------------------------

/// Parses `p/q`, a decimal string, or an integer, exactly; decimals are
/// scaled by a power of ten, never routed through binary floating point.
pub fn parse_rational(s: &str) -> Result<Rational, SpectralError> {
    let s = s.trim();
    let err = || SpectralError::ParseRational(s.to_string());
    if let Some((num, den)) = s.split_once('/') {
        let p: BigInt = num.trim().parse().map_err(|_| err())?;
        let q: BigInt = den.trim().parse().map_err(|_| err())?;
        if q.is_zero() {
            return Err(err());
        }
        return Ok(Rational::new(p, q));
    }
    if let Some((whole, frac)) = s.split_once('.') {
        if frac.is_empty() || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(err());
        }
        let negative = whole.trim_start().starts_with('-');
        let whole: BigInt = if whole.is_empty() || whole == "-" {
            BigInt::zero()
        } else {
            whole.parse().map_err(|_| err())?
        };
        let frac_value: BigInt = frac.parse().map_err(|_| err())?;
        let scale = BigInt::from(10u32).pow(frac.len() as u32);
        let magnitude = whole.abs() * &scale + frac_value;
        let signed = if negative { -magnitude } else { magnitude };
        return Ok(Rational::new(signed, scale));
    }
    let value: BigInt = s.parse().map_err(|_| err())?;
    Ok(Rational::from(value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::One;

    fn ratio(s: &str) -> Rational {
        parse_rational(s).unwrap()
    }

    fn operator(k: u32) -> Operator {
        Operator::new(k, &BuildOptions::default()).unwrap()
    }

    #[test]
    fn counts_tiny() {
        let counts = count_words(2, 6, &BuildOptions::default()).unwrap();
        let values: Vec<u64> = counts.counts.iter().map(|c| c.try_into().unwrap()).collect();
        // With two slots only: full counts up to n = 3, restricted beyond.
        assert_eq!(values, vec![1, 1, 2, 6, 20, 68, 232]);
        assert!(!counts.is_restricted(3));
        assert!(counts.is_restricted(4));
        for k in 3..=6 {
            let c = count_words(k, 4, &BuildOptions::default()).unwrap();
            assert_eq!(c.counts[4], Count::from(23u32));
        }
    }

    #[test]
    fn power_iteration_one_slot() {
        let estimate = power_iteration(1, 1e-12, 10, &BuildOptions::default()).unwrap();
        assert_eq!(estimate.estimate, 1.0);
        assert_eq!(estimate.lower, 1.0);
        assert_eq!(estimate.upper, 1.0);
    }

    #[test]
    fn power_iteration_two_slots() {
        let exact = 2.0 + 2.0f64.sqrt();
        let estimate = power_iteration(2, 1e-8, 10_000, &BuildOptions::default()).unwrap();
        assert!(estimate.lower <= exact && exact <= estimate.upper);
        assert!((estimate.estimate - exact).abs() < 1e-8);
    }

    #[test]
    fn not_converged_keeps_bounds() {
        let exact = 2.0 + 2.0f64.sqrt();
        match power_iteration(2, 1e-12, 2, &BuildOptions::default()) {
            Err(SpectralError::NotConverged { lower, upper, .. }) => {
                assert!(lower <= exact && exact <= upper);
            }
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn certificate_2x2_examples() {
        let op = operator(2);
        let cert = verify_lower_bound(
            &op,
            &ratio("17/5"),
            vec![Count::from(5u32), Count::from(12u32)],
        )
        .unwrap();
        assert!(cert.verified);

        let cert = verify_lower_bound(&op, &ratio("2"), vec![Count::one(), Count::zero()]).unwrap();
        assert!(!cert.verified);
        assert_eq!(cert.violation, Some(1));

        assert!(matches!(
            verify_lower_bound(&op, &ratio("2"), vec![Count::zero(), Count::one()]),
            Err(SpectralError::ZeroStart)
        ));
        assert!(matches!(
            verify_lower_bound(&op, &ratio("2"), vec![Count::one()]),
            Err(SpectralError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            verify_lower_bound(&op, &ratio("-1"), vec![Count::one(), Count::one()]),
            Err(SpectralError::NegativeBound)
        ));
    }

    #[test]
    fn all_ones_certifies_one() {
        for k in 1..=6 {
            let op = operator(k);
            let ones = vec![Count::one(); op.dim()];
            let cert = verify_lower_bound(&op, &Rational::one(), ones).unwrap();
            assert!(cert.verified, "k = {k}");
        }
    }

    #[test]
    fn rational_vector_input() {
        let op = operator(2);
        let vector = [ratio("1/2"), ratio("6/5")];
        let cert = verify_lower_bound_rational(&op, &ratio("17/5"), &vector).unwrap();
        assert!(cert.verified);
        assert!(matches!(
            verify_lower_bound_rational(&op, &ratio("1"), &[ratio("1"), ratio("-1/3")]),
            Err(SpectralError::NonNegativityViolation { index: 2 })
        ));
    }

    #[test]
    fn automatic_certificate_small() {
        let cert = certify_lower_bound(
            2,
            &ratio("17/5"),
            DEFAULT_TOLERANCE,
            DEFAULT_MAX_ITERATIONS,
            &BuildOptions::default(),
        )
        .unwrap();
        assert!(cert.verified);
        assert_eq!(cert.c, ratio("17/5"));

        let cert = certify_lower_bound(
            5,
            &ratio("7"),
            DEFAULT_TOLERANCE,
            DEFAULT_MAX_ITERATIONS,
            &BuildOptions::default(),
        )
        .unwrap();
        assert!(cert.verified);
    }

    #[test]
    fn extrapolation_exact_models() {
        let constant: Vec<(u32, f64)> = (1..=8).map(|k| (k, 5.0)).collect();
        let fit = extrapolate(&constant, 1).unwrap();
        assert!((fit.intercept - 5.0).abs() < 1e-12);
        assert!(fit.slope.abs() < 1e-9);
        assert!(fit.residuals.iter().all(|&(_, r)| r.abs() < 1e-12));

        let exact: Vec<(u32, f64)> = (1..=9)
            .map(|k| (k, 3.0 - 2.0 / (k as f64).sqrt()))
            .collect();
        let fit = extrapolate(&exact, 1).unwrap();
        assert!((fit.intercept - 3.0).abs() < 1e-10);
        assert!((fit.slope + 2.0).abs() < 1e-10);

        assert!(matches!(
            extrapolate(&exact[..4], 8),
            Err(SpectralError::InsufficientData { .. })
        ));
    }

    #[test]
    fn rational_parsing() {
        assert_eq!(ratio("9.35"), ratio("187/20"));
        assert_eq!(ratio("7"), Rational::from(BigInt::from(7)));
        assert_eq!(ratio("-0.5"), ratio("-1/2"));
        assert_eq!(ratio(" 17 / 5 "), ratio("17/5"));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x").is_err());
        assert!(parse_rational("1.2.3").is_err());
    }

    #[test]
    fn certificate_file_format() {
        let cert = Certificate {
            k: 2,
            c: ratio("17/5"),
            vector: vec![Count::from(5u32), Count::from(12u32)],
            verified: true,
            violation: None,
        };
        let mut buffer = Vec::new();
        write_certificate(&cert, &mut buffer).unwrap();
        assert_eq!(String::from_utf8(buffer).unwrap(), "2 17 5\n5\n12\n");
    }
}
