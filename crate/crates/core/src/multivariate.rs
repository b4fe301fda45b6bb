//! Selection for multivariate responses with box-shaped target regions.
//!
//! The hypotheses become `y in R` (worth selecting) against `y notin R`
//! for a closed axis-aligned box `R`. A score function `V(x, y)` is
//! *regional monotone* when
//!
//! ```text
//! V(x, y) <= V(x, y')   for all y notin R, y' in R,
//! ```
//!
//! which is exactly what makes the conformal p-value at a representative
//! point `r in R` conservative for null responses. The concrete score used
//! here is the indicator-margin form
//!
//! ```text
//! V(x, y) = M 1{y in R} - s(x),
//! s(x)    = dist(mu_hat(x), boundary of R)   if mu_hat(x) in R
//!         = -dist(mu_hat(x), R)              otherwise,
//! ```
//!
//! whose `y`-dependence is the indicator alone, so regional monotonicity
//! holds by construction. Because the indicator is constant on `R`, the
//! evaluated test score `V(x, r)` does not depend on which representative
//! point is chosen.
//!
//! With a one-dimensional region `[c, inf)` the margin `s(x)` collapses to
//! `mu_hat(x) - c` on both branches, so the score function coincides with
//! the clipped univariate score almost surely. Note the evaluation
//! convention still differs: the univariate pipeline scores a test point
//! at its threshold, where the strict indicator is off, while this module
//! scores at a representative inside the region, where it is on. The two
//! pipelines therefore select identically exactly when the univariate
//! stream's evaluation thresholds also sit inside the region.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::procedures::OnlineBhState;
use crate::pvalues::{conformal_p, CalibrationScores, PValueRecord};
use crate::scores::VectorPredictor;

/// A closed axis-aligned box, possibly unbounded on either side of any
/// coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetRegion {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TargetRegion {
    /// `lower[i] = -inf` and `upper[i] = +inf` encode unbounded sides.
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::invalid(format!(
                "lower has {} coordinates, upper has {}",
                lower.len(),
                upper.len()
            )));
        }
        if lower.is_empty() {
            return Err(Error::invalid("region must have at least one coordinate"));
        }
        for (i, (lo, up)) in lower.iter().zip(&upper).enumerate() {
            if lo.is_nan() || up.is_nan() {
                return Err(Error::invalid(format!("NaN bound in coordinate {i}")));
            }
            if *lo == f64::INFINITY || *up == f64::NEG_INFINITY {
                return Err(Error::invalid(format!(
                    "coordinate {i} is empty: [{lo}, {up}]"
                )));
            }
            if lo > up {
                return Err(Error::invalid(format!(
                    "coordinate {i} has lower {lo} > upper {up}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The whole space in `dim` coordinates.
    pub fn whole_space(dim: usize) -> Result<Self> {
        Self::new(vec![f64::NEG_INFINITY; dim], vec![f64::INFINITY; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    fn check_dim(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.dim() {
            return Err(Error::invalid(format!(
                "point has {} coordinates, region has {}",
                y.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Closed membership: `lower <= y <= upper` componentwise.
    pub fn contains(&self, y: &[f64]) -> Result<bool> {
        self.check_dim(y)?;
        Ok(y.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, up))| lo <= v && v <= up))
    }

    /// A point inside the region: the midpoint of finite bounds, one unit
    /// in from a single finite bound, or the origin of an unbounded axis.
    pub fn representative(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&lo, &up)| match (lo.is_finite(), up.is_finite()) {
                (true, true) => 0.5 * (lo + up),
                (true, false) => lo + 1.0,
                (false, true) => up - 1.0,
                (false, false) => 0.0,
            })
            .collect()
    }

    /// Euclidean distance from `point` to the box (0 inside).
    pub fn distance_outside(&self, point: &[f64]) -> Result<f64> {
        self.check_dim(point)?;
        // hypot folding keeps the one-violation case exact
        Ok(point
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (lo, up))| {
                if v < lo {
                    lo - v
                } else if v > up {
                    v - up
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::hypot))
    }

    /// Distance from an inside `point` to the nearest finite face, or 0 if
    /// no face is finite (an unbounded axis contributes no boundary).
    pub fn boundary_distance_inside(&self, point: &[f64]) -> Result<f64> {
        self.check_dim(point)?;
        let mut best: Option<f64> = None;
        for (v, (lo, up)) in point.iter().zip(self.lower.iter().zip(&self.upper)) {
            if lo.is_finite() {
                let d = v - lo;
                best = Some(best.map_or(d, |b| b.min(d)));
            }
            if up.is_finite() {
                let d = up - v;
                best = Some(best.map_or(d, |b| b.min(d)));
            }
        }
        Ok(best.unwrap_or(0.0).max(0.0))
    }
}

/// The indicator-margin regional score `M 1{y in R} - s(x)`.
pub struct RegionalScoreFunction {
    predictor: Arc<dyn VectorPredictor>,
    margin: f64,
}

impl std::fmt::Debug for RegionalScoreFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RegionalScoreFunction")
            .field("margin", &self.margin)
            .finish_non_exhaustive()
    }
}

impl RegionalScoreFunction {
    pub const DEFAULT_MARGIN: f64 = 1000.0;

    pub fn new(predictor: Arc<dyn VectorPredictor>) -> Self {
        Self {
            predictor,
            margin: Self::DEFAULT_MARGIN,
        }
    }

    /// `margin = 0` is allowed but degenerate: the score no longer reacts
    /// to membership at all.
    pub fn with_margin(predictor: Arc<dyn VectorPredictor>, margin: f64) -> Result<Self> {
        if !(margin.is_finite() && margin >= 0.0) {
            return Err(Error::invalid(format!(
                "margin must be finite and >= 0, got {margin}"
            )));
        }
        Ok(Self { predictor, margin })
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    /// The prediction margin `s(x)`: positive depth inside the region,
    /// negative distance when the prediction falls outside.
    pub fn prediction_margin(&self, region: &TargetRegion, x: &[f64]) -> Result<f64> {
        let mu = self.predictor.predict_vector(x)?;
        if region.contains(&mu)? {
            region.boundary_distance_inside(&mu)
        } else {
            Ok(-region.distance_outside(&mu)?)
        }
    }

    /// Full score `M 1{y in R} - s(x)` for a labeled response.
    pub fn score(&self, region: &TargetRegion, x: &[f64], y: &[f64]) -> Result<f64> {
        let indicator = if region.contains(y)? { self.margin } else { 0.0 };
        Ok(indicator - self.prediction_margin(region, x)?)
    }

    /// Test-time score `V(x, r)` at a representative `r in R`; the
    /// indicator is 1 there for every choice of representative.
    pub fn score_at_representative(&self, region: &TargetRegion, x: &[f64]) -> Result<f64> {
        Ok(self.margin - self.prediction_margin(region, x)?)
    }
}

/// Adapter exposing a scalar predictor as a 1-output vector predictor, so
/// univariate problems can run through the regional machinery.
#[derive(Debug)]
pub struct ScalarAsVector<P>(pub P);

impl<P: crate::scores::Predictor> VectorPredictor for ScalarAsVector<P> {
    fn n_features(&self) -> usize {
        self.0.n_features()
    }

    fn n_outputs(&self) -> usize {
        1
    }

    fn predict_vector(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![self.0.predict(x)?])
    }
}

/// Calibration scores `V(x_i, y_i)` of labeled multivariate data.
pub fn regional_calibration_scores(
    sf: &RegionalScoreFunction,
    region: &TargetRegion,
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
) -> Result<CalibrationScores> {
    if xs.len() != ys.len() {
        return Err(Error::invalid(format!(
            "{} feature rows but {} responses",
            xs.len(),
            ys.len()
        )));
    }
    let scores = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| sf.score(region, x, y))
        .collect::<Result<Vec<f64>>>()?;
    CalibrationScores::new(&scores)
}

/// Output of one multivariate selection step.
#[derive(Debug, Clone, PartialEq)]
pub struct MocsStep {
    pub record: PValueRecord,
    pub newly_selected: Vec<usize>,
}

/// One online step: score the candidate at the region representative,
/// form the conformal p-value, and advance the selection state.
pub fn mocs_arc_step(
    state: &mut OnlineBhState,
    cal: &CalibrationScores,
    sf: &RegionalScoreFunction,
    region: &TargetRegion,
    x: &[f64],
    u: f64,
) -> Result<MocsStep> {
    let v_hat = sf.score_at_representative(region, x)?;
    let record = conformal_p(cal, v_hat, u)?;
    let newly_selected = state.step(record.p)?;
    Ok(MocsStep {
        record,
        newly_selected,
    })
}

// ---------------------------------------------------------------- tests --

#[cfg(test)]
mod tests {
    use super::*;
    use crate::procedures::GammaSequence;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Test predictor returning a fixed vector for every input.
    #[derive(Debug)]
    struct Fixed(Vec<f64>);

    impl VectorPredictor for Fixed {
        fn n_features(&self) -> usize {
            1
        }
        fn n_outputs(&self) -> usize {
            self.0.len()
        }
        fn predict_vector(&self, _x: &[f64]) -> Result<Vec<f64>> {
            Ok(self.0.clone())
        }
    }

    /// Test predictor reading the prediction off the features directly.
    #[derive(Debug)]
    struct PassThrough {
        dim: usize,
    }

    impl VectorPredictor for PassThrough {
        fn n_features(&self) -> usize {
            self.dim
        }
        fn n_outputs(&self) -> usize {
            self.dim
        }
        fn predict_vector(&self, x: &[f64]) -> Result<Vec<f64>> {
            Ok(x.to_vec())
        }
    }

    fn positive_quadrant() -> TargetRegion {
        TargetRegion::new(vec![0.0, 0.0], vec![f64::INFINITY, f64::INFINITY]).unwrap()
    }

    #[test]
    fn membership_is_closed() {
        let r = positive_quadrant();
        assert!(r.contains(&[0.0, 0.0]).unwrap());
        assert!(!r.contains(&[-0.1, 5.0]).unwrap());
        let whole = TargetRegion::whole_space(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0601);
        for _ in 0..100 {
            let y: Vec<f64> = (0..3).map(|_| rng.random_range(-1e6..1e6)).collect();
            assert!(whole.contains(&y).unwrap());
        }
    }

    #[test]
    fn invalid_regions_are_rejected() {
        assert!(TargetRegion::new(vec![0.0], vec![0.0, 1.0]).is_err());
        assert!(TargetRegion::new(vec![1.0], vec![0.0]).is_err());
        assert!(TargetRegion::new(vec![f64::NAN], vec![1.0]).is_err());
        assert!(TargetRegion::new(vec![f64::INFINITY], vec![f64::INFINITY]).is_err());
        assert!(TargetRegion::new(Vec::new(), Vec::new()).is_err());
        assert!(TargetRegion::new(vec![2.0], vec![2.0]).is_ok()); // a point is a valid box
        let r = positive_quadrant();
        assert!(r.contains(&[0.0]).is_err()); // dimension mismatch
    }

    #[test]
    fn representative_lies_in_the_region() {
        let cases = [
            TargetRegion::new(vec![0.0, -1.0], vec![2.0, 1.0]).unwrap(),
            positive_quadrant(),
            TargetRegion::new(vec![f64::NEG_INFINITY], vec![-3.0]).unwrap(),
            TargetRegion::whole_space(2).unwrap(),
            TargetRegion::new(vec![5.0], vec![5.0]).unwrap(),
        ];
        for region in &cases {
            let r = region.representative();
            assert!(region.contains(&r).unwrap(), "representative {r:?} escapes {region:?}");
            assert!(r.iter().all(|v| v.is_finite()));
        }
        assert_eq!(
            TargetRegion::new(vec![0.0, -1.0], vec![2.0, 1.0]).unwrap().representative(),
            vec![1.0, 0.0]
        );
    }

    #[test]
    fn box_distances_match_hand_values() {
        let r = positive_quadrant();
        // outside along one axis: plain coordinate distance
        assert_eq!(r.distance_outside(&[-1.0, 2.0]).unwrap(), 1.0);
        // outside along both: Euclidean corner distance
        assert!((r.distance_outside(&[-3.0, -4.0]).unwrap() - 5.0).abs() < 1e-12);
        // inside: nearest finite face
        assert_eq!(r.distance_outside(&[2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(r.boundary_distance_inside(&[2.0, 3.0]).unwrap(), 2.0);
        // no finite face at all: margin defined as 0
        let whole = TargetRegion::whole_space(2).unwrap();
        assert_eq!(whole.boundary_distance_inside(&[7.0, -9.0]).unwrap(), 0.0);
        // bounded box: nearest of all four faces
        let b = TargetRegion::new(vec![0.0, 0.0], vec![10.0, 4.0]).unwrap();
        assert_eq!(b.boundary_distance_inside(&[5.0, 3.0]).unwrap(), 1.0);
    }

    #[test]
    fn worked_score_example_evaluates_to_1001() {
        let r = positive_quadrant();
        let sf = RegionalScoreFunction::with_margin(Arc::new(Fixed(vec![-1.0, 2.0])), 1000.0)
            .unwrap();
        // mu_hat = (-1, 2) is outside at distance 1, so s(x) = -1
        assert_eq!(sf.prediction_margin(&r, &[0.0]).unwrap(), -1.0);
        assert_eq!(sf.score(&r, &[0.0], &[3.0, 3.0]).unwrap(), 1001.0);
        // a null response drops the margin term
        assert_eq!(sf.score(&r, &[0.0], &[-5.0, 3.0]).unwrap(), 1.0);
        assert_eq!(sf.score_at_representative(&r, &[0.0]).unwrap(), 1001.0);
    }

    #[test]
    fn regional_monotonicity_holds_on_sampled_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0602);
        let sf = RegionalScoreFunction::new(Arc::new(PassThrough { dim: 2 }));
        let mut checked = 0;
        while checked < 1000 {
            let lo: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..0.0)).collect();
            let up: Vec<f64> = lo.iter().map(|l| l + rng.random_range(0.1..3.0)).collect();
            let region = TargetRegion::new(lo, up).unwrap();
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-4.0..4.0)).collect();
            let y_out: Vec<f64> = (0..2).map(|_| rng.random_range(-6.0..6.0)).collect();
            if region.contains(&y_out).unwrap() {
                continue;
            }
            let y_in = {
                let r = region.representative();
                // jitter within the box
                r.iter()
                    .zip(region.lower().iter().zip(region.upper()))
                    .map(|(c, (lo, up))| {
                        let v = c + rng.random_range(-0.05..0.05);
                        v.clamp(*lo, *up)
                    })
                    .collect::<Vec<f64>>()
            };
            assert!(region.contains(&y_in).unwrap());
            let v_out = sf.score(&region, &x, &y_out).unwrap();
            let v_in = sf.score(&region, &x, &y_in).unwrap();
            assert!(v_out <= v_in, "V(x, null) = {v_out} > V(x, alt) = {v_in}");
            checked += 1;
        }
    }

    #[test]
    fn evaluated_score_is_invariant_to_the_representative_choice() {
        let region = TargetRegion::new(vec![0.0, 1.0], vec![4.0, f64::INFINITY]).unwrap();
        let sf = RegionalScoreFunction::new(Arc::new(PassThrough { dim: 2 }));
        let x = [1.5, 2.5];
        let reference = sf.score_at_representative(&region, &x).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0603);
        for _ in 0..200 {
            let y = vec![rng.random_range(0.0..4.0), rng.random_range(1.0..50.0)];
            assert!(region.contains(&y).unwrap());
            assert_eq!(sf.score(&region, &x, &y).unwrap(), reference);
        }
    }

    #[test]
    fn single_small_p_point_is_selected_at_t_1() {
        let region = positive_quadrant();
        let sf = RegionalScoreFunction::new(Arc::new(PassThrough { dim: 2 }));
        // all-alternative calibration pool with strong predictions
        let xs: Vec<Vec<f64>> = (1..=40).map(|i| vec![i as f64, i as f64]).collect();
        let ys: Vec<Vec<f64>> = xs.clone();
        let cal = regional_calibration_scores(&sf, &region, &xs, &ys).unwrap();

        let mut state = OnlineBhState::new(0.2, GammaSequence::new(0.5).unwrap()).unwrap();
        // a candidate predicted deeper inside than any calibration point
        let step = mocs_arc_step(&mut state, &cal, &sf, &region, &[100.0, 100.0], 0.3).unwrap();
        // v_hat beats all calibration scores, so p = 0.3 * 1 / 41
        assert!((step.record.p - 0.3 / 41.0).abs() < 1e-15);
        assert!(step.record.p <= 0.2 * 0.5);
        assert_eq!(step.newly_selected, vec![1]);
        assert_eq!(state.selected().len(), 1);
    }

    #[test]
    fn whole_space_region_degenerates_to_constant_test_scores() {
        let region = TargetRegion::whole_space(2).unwrap();
        let sf = RegionalScoreFunction::new(Arc::new(PassThrough { dim: 2 }));
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0604);
        let xs: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..2).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect();
        let cal = regional_calibration_scores(&sf, &region, &xs, &xs).unwrap();
        // every score is exactly M: indicator always on, margin always 0
        assert!(cal.scores().iter().all(|&s| s == RegionalScoreFunction::DEFAULT_MARGIN));

        let mut state = OnlineBhState::new(0.1, GammaSequence::new(0.9).unwrap()).unwrap();
        let step = mocs_arc_step(&mut state, &cal, &sf, &region, &[0.0, 0.0], 0.5).unwrap();
        // all 20 calibration scores tie with v_hat, so p = u * 21/21 = u
        assert_eq!(step.record.p, 0.5);
    }

    #[test]
    fn univariate_half_line_reduces_to_the_clipped_score() {
        use crate::scores::{Predictor, ScoreFunction};

        #[derive(Debug, Clone)]
        struct Lin;
        impl Predictor for Lin {
            fn n_features(&self) -> usize {
                1
            }
            fn predict(&self, x: &[f64]) -> Result<f64> {
                Ok(0.7 * x[0] - 0.1)
            }
        }

        let m = 1000.0;
        let region = TargetRegion::new(vec![0.0], vec![f64::INFINITY]).unwrap();
        let clip = ScoreFunction::clip_with(Arc::new(Lin), m, 0.0).unwrap();
        let regional =
            RegionalScoreFunction::with_margin(Arc::new(ScalarAsVector(Lin)), m).unwrap();

        // On a half-line [0, inf) the margin s(x) equals mu_hat(x) on both
        // branches, so the labeled score functions coincide exactly away
        // from the boundary response y = 0.
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0605);
        let mut cal_scores = Vec::new();
        for i in 0..50 {
            let x = vec![rng.random_range(-3.0..3.0)];
            // mix of null and alternative responses for the score-identity
            // check, then an all-alternative pool so p-values have no null
            // floor and selections actually happen below
            let y: f64 = if i < 25 {
                rng.random_range(-2.0..2.0)
            } else {
                0.7 * x[0] - 0.1 + 3.0 + rng.random_range(-0.3..0.3)
            };
            let uni = clip.score(&x, y).unwrap();
            let multi = regional.score(&region, &x, &[y]).unwrap();
            assert_eq!(uni.to_bits(), multi.to_bits(), "x = {x:?}, y = {y}");
            if i >= 25 {
                cal_scores.push(uni);
            }
        }
        let cal = CalibrationScores::new(&cal_scores).unwrap();

        // The representative of [0, inf) is 1.0. Evaluating the univariate
        // stream at thresholds equal to that same point makes the two
        // pipelines' test scores identical, hence identical selections.
        // (Evaluating CLIP at its own cutoff instead flips the indicator
        // off and the pipelines genuinely diverge; see the module docs.)
        assert_eq!(region.representative(), vec![1.0]);
        let gamma = GammaSequence::new(0.9).unwrap();
        let mut uni_state = OnlineBhState::new(0.3, gamma).unwrap();
        let mut multi_state = OnlineBhState::new(0.3, gamma).unwrap();
        for t in 0..150 {
            // the first candidate outranks the whole calibration pool and
            // draws a small u, so at least one selection is guaranteed
            let (x, u) = if t == 0 {
                (vec![2.9], 0.05)
            } else {
                (vec![rng.random_range(-3.0..3.0)], rng.random_range(0.0..1.0))
            };
            let v_uni = clip.score(&x, 1.0).unwrap();
            let p_uni = conformal_p(&cal, v_uni, u).unwrap();
            let newly_uni = uni_state.step(p_uni.p).unwrap();
            let step = mocs_arc_step(&mut multi_state, &cal, &regional, &region, &x, u).unwrap();
            assert_eq!(p_uni.p.to_bits(), step.record.p.to_bits(), "t = {t}");
            assert_eq!(newly_uni, step.newly_selected, "t = {t}");
        }
        assert_eq!(uni_state.selected(), multi_state.selected());
        assert!(!uni_state.selected().is_empty(), "cross-check never selected");
    }

    #[test]
    fn dimension_mismatches_error_out() {
        let region = positive_quadrant();
        let sf = RegionalScoreFunction::new(Arc::new(Fixed(vec![1.0, 1.0, 1.0])));
        assert!(sf.score(&region, &[0.0], &[1.0, 1.0]).is_err()); // 3-d prediction vs 2-d region
        assert!(sf.score(&region, &[0.0], &[1.0]).is_err()); // 1-d response vs 2-d region
        assert!(RegionalScoreFunction::with_margin(Arc::new(Fixed(vec![0.0])), -2.0).is_err());
    }
}
