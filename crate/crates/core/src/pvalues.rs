//! Randomized conformal p-values.
//!
//! Given calibration nonconformity scores `V_1, ..., V_n` and a test score
//! `v`, the randomized conformal p-value is
//!
//! ```text
//!     p = ( #{i : V_i < v} + U * (1 + #{i : V_i = v}) ) / (n + 1)
//! ```
//!
//! where `U ~ Uniform[0, 1]` is an external randomization draw supplied by
//! the caller (one independent draw per test point). When `v` is the true
//! test score and the test point is exchangeable with the calibration set,
//! `p` is superuniform: `P(p <= a) <= a` for every `a`. Evaluating the same
//! formula at a score that upper-bounds the true score under the null keeps
//! the guarantee, because `p` is monotone in `v`.
//!
//! Ties are resolved by exact floating-point equality; the counts are
//! computed by binary search over a sorted copy of the calibration scores.

use crate::error::{Error, Result};

/// Calibration scores held sorted for `O(log n)` rank queries.
///
/// An empty calibration set is allowed: every p-value then reduces to the
/// randomization draw `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationScores {
    scores: Vec<f64>,
}

impl CalibrationScores {
    /// Builds the sorted calibration pool. Rejects non-finite scores.
    pub fn new(scores: &[f64]) -> Result<Self> {
        if let Some(i) = scores.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "calibration score at index {i} is not finite ({})",
                scores[i]
            )));
        }
        let mut sorted = scores.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { scores: sorted })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// The scores in ascending order.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// `#{i : V_i < v}`.
    pub fn count_below(&self, v: f64) -> usize {
        self.scores.partition_point(|&s| s < v)
    }

    /// `#{i : V_i = v}` under exact floating-point equality.
    pub fn count_equal(&self, v: f64) -> usize {
        self.scores.partition_point(|&s| s <= v) - self.count_below(v)
    }
}

/// A conformal p-value together with the inputs that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PValueRecord {
    pub p: f64,
    /// Randomization draw used for tie breaking.
    pub u: f64,
    /// Score the p-value was evaluated at.
    pub v_hat: f64,
}

fn validate_u(u: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::invalid(format!(
            "randomization draw u must lie in [0, 1], got {u}"
        )));
    }
    Ok(())
}

/// Randomized conformal p-value of `v_hat` against the calibration pool.
///
/// With `u` in `(0, 1]` the result lies in `(0, 1]`; `u = 0` is accepted
/// and can produce `p = 0`.
pub fn conformal_p(cal: &CalibrationScores, v_hat: f64, u: f64) -> Result<PValueRecord> {
    validate_u(u)?;
    if !v_hat.is_finite() {
        return Err(Error::invalid(format!(
            "test score must be finite, got {v_hat}"
        )));
    }
    let below = cal.count_below(v_hat) as f64;
    let ties = cal.count_equal(v_hat) as f64;
    let p = (below + u * (1.0 + ties)) / (cal.len() as f64 + 1.0);
    Ok(PValueRecord { p, u, v_hat })
}

/// Conformal p-value evaluated at the *true* test score.
///
/// Identical formula to [`conformal_p`]; kept as a separate entry point so
/// that superuniformity checks read as what they are. This is the exactly
/// valid p-value; production paths evaluate at a score that dominates the
/// true one under the null.
pub fn oracle_p(cal: &CalibrationScores, v_true: f64, u: f64) -> Result<PValueRecord> {
    conformal_p(cal, v_true, u)
}

// ---------------------------------------------------------------- tests --

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    const TOL: f64 = 1e-12;

    #[test]
    fn calibration_scores_are_sorted() {
        let cal = CalibrationScores::new(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(cal.scores(), &[1.0, 2.0, 3.0]);
        assert_eq!(cal.len(), 3);
    }

    #[test]
    fn empty_calibration_is_allowed() {
        let cal = CalibrationScores::new(&[]).unwrap();
        assert!(cal.is_empty());
        let rec = conformal_p(&cal, 0.0, 0.37).unwrap();
        assert!((rec.p - 0.37).abs() < TOL, "n = 0 must give p = u");
    }

    #[test]
    fn duplicate_scores_are_kept() {
        let cal = CalibrationScores::new(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(cal.len(), 3);
        assert_eq!(cal.count_equal(1.0), 3);
        assert_eq!(cal.count_below(1.0), 0);
    }

    #[test]
    fn non_finite_calibration_score_is_rejected() {
        let err = CalibrationScores::new(&[0.0, f64::NAN]).unwrap_err();
        assert!(err.to_string().contains("index 1"), "got: {err}");
        assert!(CalibrationScores::new(&[f64::INFINITY]).is_err());
    }

    #[test]
    fn p_is_one_when_v_hat_exceeds_all_scores_and_u_is_one() {
        let cal = CalibrationScores::new(&[1.0, 2.0, 3.0]).unwrap();
        let rec = conformal_p(&cal, 10.0, 1.0).unwrap();
        assert!((rec.p - 1.0).abs() < TOL);
    }

    #[test]
    fn ties_enter_through_the_randomized_term() {
        // below = 0, ties = 2, n = 3: p = (0 + 0.5 * (1 + 2)) / 4 = 0.375.
        let cal = CalibrationScores::new(&[0.5, 0.5, 2.0]).unwrap();
        let rec = conformal_p(&cal, 0.5, 0.5).unwrap();
        assert!((rec.p - 0.375).abs() < TOL, "got {}", rec.p);
    }

    #[test]
    fn u_outside_unit_interval_is_rejected() {
        let cal = CalibrationScores::new(&[1.0]).unwrap();
        assert!(conformal_p(&cal, 0.0, -0.01).is_err());
        assert!(conformal_p(&cal, 0.0, 1.01).is_err());
        assert!(conformal_p(&cal, 0.0, f64::NAN).is_err());
    }

    #[test]
    fn non_finite_test_score_is_rejected() {
        let cal = CalibrationScores::new(&[1.0]).unwrap();
        assert!(conformal_p(&cal, f64::NAN, 0.5).is_err());
        assert!(conformal_p(&cal, f64::INFINITY, 0.5).is_err());
    }

    #[test]
    fn binary_search_counts_match_linear_scan() {
        // Oracle: naive O(n) counting, written independently of the
        // partition_point route.
        fn naive_counts(scores: &[f64], v: f64) -> (usize, usize) {
            let mut below = 0;
            let mut equal = 0;
            for &s in scores {
                if s < v {
                    below += 1;
                } else if s == v {
                    equal += 1;
                }
            }
            (below, equal)
        }

        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
        for case in 0..10_000 {
            let n = rng.random_range(0..40);
            // Cluster values on a coarse grid so exact ties are common.
            let raw: Vec<f64> = (0..n)
                .map(|_| (rng.random_range(-8..8) as f64) * 0.25)
                .collect();
            let cal = CalibrationScores::new(&raw).unwrap();
            let v = if !raw.is_empty() && rng.random::<f64>() < 0.5 {
                raw[rng.random_range(0..raw.len())]
            } else {
                (rng.random_range(-10..10) as f64) * 0.25
            };
            let (below, equal) = naive_counts(&raw, v);
            assert_eq!(cal.count_below(v), below, "case {case}: below at v={v}");
            assert_eq!(cal.count_equal(v), equal, "case {case}: equal at v={v}");
        }
    }

    #[test]
    fn p_value_is_monotone_in_v_hat() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
        for _ in 0..1000 {
            let n = rng.random_range(0..30);
            let raw: Vec<f64> = (0..n)
                .map(|_| (rng.random_range(-6..6) as f64) * 0.5)
                .collect();
            let cal = CalibrationScores::new(&raw).unwrap();
            let u: f64 = rng.random();
            let a = rng.random_range(-5.0..5.0);
            let b = rng.random_range(-5.0..5.0);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let p_lo = conformal_p(&cal, lo, u).unwrap().p;
            let p_hi = conformal_p(&cal, hi, u).unwrap().p;
            assert!(
                p_lo <= p_hi + TOL,
                "p must be monotone in v_hat: p({lo})={p_lo} > p({hi})={p_hi}"
            );
        }
    }

    #[test]
    fn single_calibration_point_splits_p_at_one_half() {
        // With n = 1 and continuous draws, p = u/2 when the true score
        // beats the calibration score and (1 + u)/2 otherwise, so
        // P(p <= 1/2) = 1/2.
        let cal = CalibrationScores::new(&[0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
        let draws = 40_000;
        let mut below_half = 0;
        for _ in 0..draws {
            let v: f64 = StandardNormal.sample(&mut rng);
            let u: f64 = rng.random();
            if oracle_p(&cal, v, u).unwrap().p <= 0.5 {
                below_half += 1;
            }
        }
        let rate = below_half as f64 / draws as f64;
        let se = (0.25f64 / draws as f64).sqrt();
        assert!(
            (rate - 0.5).abs() <= 3.0 * se,
            "P(p <= 0.5) = {rate}, expected 0.5 +- {}",
            3.0 * se
        );
    }

    #[test]
    fn oracle_p_is_superuniform_on_a_unit_interval_grid() {
        // Continuous scores: the randomized p-value is exactly uniform, so
        // the empirical CDF must not exceed alpha beyond Monte Carlo noise
        // at any level alpha in {0.01, ..., 0.99}. Each draw realizes the
        // whole experiment (fresh calibration set, test score, u); with a
        // fixed calibration set the draws would estimate the conditional
        // CDF, whose O(1/sqrt(n)) fluctuation swamps the binomial error.
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0004);
        let n = 20;
        let draws = 20_000;
        let ps: Vec<f64> = (0..draws)
            .map(|_| {
                let cal_raw: Vec<f64> =
                    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
                let cal = CalibrationScores::new(&cal_raw).unwrap();
                let v: f64 = StandardNormal.sample(&mut rng);
                let u: f64 = rng.random();
                oracle_p(&cal, v, u).unwrap().p
            })
            .collect();
        for k in 1..100 {
            let alpha = k as f64 / 100.0;
            let hit = ps.iter().filter(|&&p| p <= alpha).count() as f64 / draws as f64;
            let se = (alpha * (1.0 - alpha) / draws as f64).sqrt();
            assert!(
                hit <= alpha + 3.0 * se,
                "P(p <= {alpha}) = {hit} exceeds {alpha} + 3se"
            );
        }
    }
}
