//! Selection procedures.
//!
//! All procedures consume a stream of p-values `p_1, p_2, ...` (1-based
//! timesteps) and maintain a selection set. Three rules are provided:
//!
//! - **Incremental online BH** ([`OnlineBhState`]): at each step `t`
//!   compute
//!
//!   ```text
//!       k*_t = max { k in [t] : #{ j <= t : p_j <= k * q * gamma_j } >= k }
//!       R_t  = { j <= t : p_j <= k*_t * q * gamma_j }
//!   ```
//!
//!   with `k*_t = 0` (and no new selections) when no `k` qualifies. Both
//!   `k*_t` and `R_t` are monotone: decisions are never revoked.
//!
//! - **Online Bonferroni** ([`OnlineBonferroniState`]): select `t` iff
//!   `p_t <= q * gamma_t`. Always a subset of the online BH selections on
//!   the same stream.
//!
//! - **Repeated batch BH** ([`RepeatedBhState`]): recompute the offline BH
//!   selection over the full history at every step. Not irrevocable: the
//!   set can shrink, which is the instability the online BH rule removes.
//!
//! `gamma` is the geometric discount `gamma_t = r^t * (1 - r) / r` whose
//! partial sums stay below 1, so the per-step selection budgets form a
//! convergent series. For large `t` the budget `q * gamma_t` underflows and
//! new selections freeze; a warning is logged once when that happens.
//!
//! Membership `p_j <= k * q * gamma_j` is evaluated canonically through the
//! precomputed ratio `p_j / (q * gamma_j)` (see [`selection_ratio`]), which
//! makes the incremental state, the batch reference implementation, and the
//! Bonferroni rule agree bit-for-bit.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};
use std::io::Write;

use crate::error::{Error, Result};

/// Geometric discount sequence `gamma_t = r^t * (1 - r) / r`, `t >= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaSequence {
    r: f64,
}

impl GammaSequence {
    /// `r` must lie strictly inside `(0, 1)`.
    pub fn new(r: f64) -> Result<Self> {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::invalid(format!(
                "discount ratio r must lie in (0, 1), got {r}"
            )));
        }
        Ok(Self { r })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// `gamma_t` for a 1-based timestep.
    pub fn gamma(&self, t: usize) -> Result<f64> {
        if t == 0 {
            return Err(Error::invalid("gamma is defined for t >= 1"));
        }
        Ok(self.r.powi(t as i32) * (1.0 - self.r) / self.r)
    }
}

fn validate_q(q: f64) -> Result<()> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::invalid(format!(
            "target FDR level q must lie in (0, 1), got {q}"
        )));
    }
    Ok(())
}

fn validate_p(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!(
            "p-value must lie in [0, 1], got {p}"
        )));
    }
    Ok(())
}

/// Canonical membership statistic: `p_j <= k * q * gamma_j` holds iff
/// `selection_ratio(p_j, q, gamma_j) <= k`.
///
/// A zero p-value maps to ratio 0 (selected at any positive `k*`); a zero
/// budget `q * gamma` maps a positive p-value to infinity (never selected).
pub fn selection_ratio(p: f64, q: f64, gamma: f64) -> f64 {
    if p == 0.0 {
        return 0.0;
    }
    let budget = q * gamma;
    if budget == 0.0 {
        f64::INFINITY
    } else {
        p / budget
    }
}

/// Offline Benjamini-Hochberg over a finite batch, returning 1-based
/// indices of the selected p-values.
pub fn offline_bh(pvals: &[f64], q: f64) -> Result<BTreeSet<usize>> {
    offline_bh_with_kstar(pvals, q).map(|(_, set)| set)
}

/// Offline BH exposing the rejection count `k*`:
/// `k* = max { k : p_(k) <= k * q / m }`, selection `{ j : p_j <= k* q / m }`.
pub fn offline_bh_with_kstar(pvals: &[f64], q: f64) -> Result<(usize, BTreeSet<usize>)> {
    validate_q(q)?;
    for &p in pvals {
        validate_p(p)?;
    }
    let m = pvals.len();
    if m == 0 {
        return Ok((0, BTreeSet::new()));
    }
    let mut sorted = pvals.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mf = m as f64;
    let mut k_star = 0;
    for k in (1..=m).rev() {
        if sorted[k - 1] <= k as f64 * q / mf {
            k_star = k;
            break;
        }
    }
    if k_star == 0 {
        return Ok((0, BTreeSet::new()));
    }
    let threshold = k_star as f64 * q / mf;
    let selected = pvals
        .iter()
        .enumerate()
        .filter(|&(_, &p)| p <= threshold)
        .map(|(i, _)| i + 1)
        .collect();
    Ok((k_star, selected))
}

/// Min-heap entry ordered by ratio, then index. Ratios are never NaN by
/// construction of [`selection_ratio`].
#[derive(Debug, PartialEq)]
struct RatioEntry {
    ratio: f64,
    index: usize,
}

impl Eq for RatioEntry {}

impl Ord for RatioEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.ratio
            .total_cmp(&other.ratio)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for RatioEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Streaming state of the incremental online BH procedure.
///
/// Per step the sorted ratio list gives `k*_t = max { k : rho_(k) <= k }`
/// (`rho_(k)` the k-th smallest ratio), scanned downward from `t` and never
/// below the previous value, since `k*` is provably non-decreasing. Newly
/// qualifying indices are drained from a min-heap of unselected ratios, so
/// each index is touched a bounded number of times.
#[derive(Debug)]
pub struct OnlineBhState {
    q: f64,
    gamma: GammaSequence,
    pvals: Vec<f64>,
    ratios_sorted: Vec<f64>,
    unselected: BinaryHeap<Reverse<RatioEntry>>,
    k_star: usize,
    selected: BTreeSet<usize>,
    warned_underflow: bool,
}

impl OnlineBhState {
    pub fn new(q: f64, gamma: GammaSequence) -> Result<Self> {
        validate_q(q)?;
        Ok(Self {
            q,
            gamma,
            pvals: Vec::new(),
            ratios_sorted: Vec::new(),
            unselected: BinaryHeap::new(),
            k_star: 0,
            selected: BTreeSet::new(),
            warned_underflow: false,
        })
    }

    /// Consumes `p_t` and returns the newly selected indices in ascending
    /// order. Existing selections are never removed.
    pub fn step(&mut self, p_t: f64) -> Result<Vec<usize>> {
        validate_p(p_t)?;
        let t = self.pvals.len() + 1;
        let gamma_t = self.gamma.gamma(t)?;
        if !self.warned_underflow && self.q * gamma_t < f64::EPSILON {
            log::warn!(
                "selection budget q*gamma_t = {:.3e} fell below machine epsilon at t = {t}; \
                 new selections are effectively frozen",
                self.q * gamma_t
            );
            self.warned_underflow = true;
        }
        self.pvals.push(p_t);
        let ratio = selection_ratio(p_t, self.q, gamma_t);
        let pos = self.ratios_sorted.partition_point(|&x| x <= ratio);
        self.ratios_sorted.insert(pos, ratio);
        self.unselected.push(Reverse(RatioEntry { ratio, index: t }));

        // k* never decreases: inserting a ratio can only shift order
        // statistics downward, so the previous k* still qualifies.
        let mut k = t;
        while k > self.k_star {
            if self.ratios_sorted[k - 1] <= k as f64 {
                self.k_star = k;
                break;
            }
            k -= 1;
        }

        let mut newly = Vec::new();
        let level = self.k_star as f64;
        while let Some(Reverse(top)) = self.unselected.peek() {
            if top.ratio <= level {
                let index = top.index;
                self.unselected.pop();
                self.selected.insert(index);
                newly.push(index);
            } else {
                break;
            }
        }
        newly.sort_unstable();
        Ok(newly)
    }

    pub fn t(&self) -> usize {
        self.pvals.len()
    }

    pub fn k_star(&self) -> usize {
        self.k_star
    }

    pub fn selected(&self) -> &BTreeSet<usize> {
        &self.selected
    }

    pub fn pvalues(&self) -> &[f64] {
        &self.pvals
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn gamma(&self) -> GammaSequence {
        self.gamma
    }
}

/// Online Bonferroni baseline: select `t` iff `p_t <= q * gamma_t`.
#[derive(Debug)]
pub struct OnlineBonferroniState {
    q: f64,
    gamma: GammaSequence,
    t: usize,
    selected: BTreeSet<usize>,
    warned_underflow: bool,
}

impl OnlineBonferroniState {
    pub fn new(q: f64, gamma: GammaSequence) -> Result<Self> {
        validate_q(q)?;
        Ok(Self {
            q,
            gamma,
            t: 0,
            selected: BTreeSet::new(),
            warned_underflow: false,
        })
    }

    /// Consumes `p_t`; returns `[t]` when selected, `[]` otherwise.
    pub fn step(&mut self, p_t: f64) -> Result<Vec<usize>> {
        validate_p(p_t)?;
        self.t += 1;
        let gamma_t = self.gamma.gamma(self.t)?;
        if !self.warned_underflow && self.q * gamma_t < f64::EPSILON {
            log::warn!(
                "selection budget q*gamma_t fell below machine epsilon at t = {}; \
                 new selections are effectively frozen",
                self.t
            );
            self.warned_underflow = true;
        }
        if selection_ratio(p_t, self.q, gamma_t) <= 1.0 {
            self.selected.insert(self.t);
            Ok(vec![self.t])
        } else {
            Ok(Vec::new())
        }
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn selected(&self) -> &BTreeSet<usize> {
        &self.selected
    }

    pub fn gamma(&self) -> GammaSequence {
        self.gamma
    }
}

/// Repeated batch BH baseline: rerun offline BH on the whole history at
/// every step. The resulting sets are *not* nested.
#[derive(Debug)]
pub struct RepeatedBhState {
    q: f64,
    pvals: Vec<f64>,
    k_star: usize,
    current: BTreeSet<usize>,
}

impl RepeatedBhState {
    pub fn new(q: f64) -> Result<Self> {
        validate_q(q)?;
        Ok(Self {
            q,
            pvals: Vec::new(),
            k_star: 0,
            current: BTreeSet::new(),
        })
    }

    /// Consumes `p_t` and returns the full current selection set.
    pub fn step(&mut self, p_t: f64) -> Result<&BTreeSet<usize>> {
        validate_p(p_t)?;
        self.pvals.push(p_t);
        let (k_star, set) = offline_bh_with_kstar(&self.pvals, self.q)?;
        self.k_star = k_star;
        self.current = set;
        Ok(&self.current)
    }

    pub fn t(&self) -> usize {
        self.pvals.len()
    }

    pub fn k_star(&self) -> usize {
        self.k_star
    }

    pub fn current(&self) -> &BTreeSet<usize> {
        &self.current
    }

    pub fn pvalues(&self) -> &[f64] {
        &self.pvals
    }
}

/// One batch recomputation over an explicit history; the stateless form of
/// [`RepeatedBhState::step`].
pub fn repeated_cs_step(history: &[f64], q: f64) -> Result<BTreeSet<usize>> {
    offline_bh(history, q)
}

// ----------------------------------------------------------- trajectory --

/// Per-step record of a selection run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    /// 1-based timestep.
    pub t: usize,
    pub p: f64,
    pub gamma: f64,
    pub k_star: usize,
    /// Indices entering the selection set at this step.
    pub newly_selected: Vec<usize>,
    /// Indices leaving the selection set at this step (empty for the
    /// irrevocable procedures).
    pub removed: Vec<usize>,
    /// Selection set size after this step.
    pub cum_selected: usize,
}

/// Full per-run trajectory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SelectionTrajectory {
    steps: Vec<TrajectoryStep>,
}

impl SelectionTrajectory {
    pub fn push(&mut self, step: TrajectoryStep) {
        self.steps.push(step);
    }

    pub fn steps(&self) -> &[TrajectoryStep] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// True when no step ever removed an index.
    pub fn is_nested(&self) -> bool {
        self.steps.iter().all(|s| s.removed.is_empty())
    }

    /// Reconstructs the selection set after each step.
    pub fn selection_sets(&self) -> Vec<BTreeSet<usize>> {
        let mut sets = Vec::with_capacity(self.steps.len());
        let mut current: BTreeSet<usize> = BTreeSet::new();
        for step in &self.steps {
            for &j in &step.newly_selected {
                current.insert(j);
            }
            for &j in &step.removed {
                current.remove(&j);
            }
            debug_assert_eq!(current.len(), step.cum_selected);
            sets.push(current.clone());
        }
        sets
    }

    /// Writes the trajectory as CSV with columns
    /// `t,p_t,gamma_t,k_star,newly_selected,cum_selected`
    /// (`newly_selected` semicolon-joined).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "p_t", "gamma_t", "k_star", "newly_selected", "cum_selected"])
            .map_err(csv_io)?;
        for s in &self.steps {
            let newly = s
                .newly_selected
                .iter()
                .map(|j| j.to_string())
                .collect::<Vec<_>>()
                .join(";");
            w.write_record([
                s.t.to_string(),
                s.p.to_string(),
                s.gamma.to_string(),
                s.k_star.to_string(),
                newly,
                s.cum_selected.to_string(),
            ])
            .map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_io(e: csv::Error) -> Error {
    Error::InvalidInput(format!("csv write failed: {e}"))
}

// ------------------------------------------------------------ reference --

/// Naive reference implementations used to cross-check the incremental
/// state, plus the equivalence harness behind the CLI `oracle-check`
/// subcommand. These deliberately recompute everything from scratch.
pub mod reference {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Recomputes `(k*_t, R_t)` for the online BH rule from scratch:
    /// enumerate every `k in [t]` and count qualifying indices naively.
    pub fn brute_force_state(
        pvals: &[f64],
        q: f64,
        gamma: &GammaSequence,
    ) -> Result<(usize, BTreeSet<usize>)> {
        let t = pvals.len();
        let mut ratios = Vec::with_capacity(t);
        for (j, &p) in pvals.iter().enumerate() {
            ratios.push(selection_ratio(p, q, gamma.gamma(j + 1)?));
        }
        let mut k_star = 0;
        for k in 1..=t {
            let count = ratios.iter().filter(|&&r| r <= k as f64).count();
            if count >= k {
                k_star = k_star.max(k);
            }
        }
        let level = k_star as f64;
        let selected = ratios
            .iter()
            .enumerate()
            .filter(|&(_, &r)| r <= level && k_star > 0)
            .map(|(j, _)| j + 1)
            .collect();
        Ok((k_star, selected))
    }

    /// Outcome of one equivalence run.
    #[derive(Debug, Clone, PartialEq, Eq)]
    pub struct EquivalenceReport {
        pub streams: usize,
        pub steps_checked: usize,
    }

    /// Replays `streams` random p-value streams (random length up to
    /// `max_len`, random `q` and `r`) through [`OnlineBhState`] and checks
    /// `k*_t` and `R_t` against [`brute_force_state`] at every step.
    /// Returns an error describing the first mismatch, if any.
    pub fn equivalence_check(streams: usize, max_len: usize, seed: u64) -> Result<EquivalenceReport> {
        if max_len == 0 {
            return Err(Error::invalid("max_len must be >= 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut steps_checked = 0;
        for stream in 0..streams {
            let len = rng.random_range(1..=max_len);
            let q = rng.random_range(0.02..0.6);
            let r = rng.random_range(0.3..0.999);
            let gamma = GammaSequence::new(r)?;
            let mut state = OnlineBhState::new(q, gamma)?;
            let mut history = Vec::with_capacity(len);
            for t in 1..=len {
                let p = random_p(&mut rng);
                history.push(p);
                state.step(p)?;
                let (bf_k, bf_set) = brute_force_state(&history, q, &gamma)?;
                if state.k_star() != bf_k {
                    return Err(Error::invalid(format!(
                        "stream {stream}, t = {t}: incremental k* = {} but brute force k* = {bf_k}",
                        state.k_star()
                    )));
                }
                if state.selected() != &bf_set {
                    return Err(Error::invalid(format!(
                        "stream {stream}, t = {t}: incremental set {:?} differs from brute force {:?}",
                        state.selected(),
                        bf_set
                    )));
                }
                steps_checked += 1;
            }
        }
        Ok(EquivalenceReport {
            streams,
            steps_checked,
        })
    }

    /// P-value draw mixing uniform mass with exact zeros, exact ones and
    /// small values so boundary comparisons get exercised.
    pub fn random_p(rng: &mut ChaCha8Rng) -> f64 {
        match rng.random_range(0..10u8) {
            0 => 0.0,
            1 => 1.0,
            2 | 3 => rng.random_range(0.0..0.01),
            _ => rng.random::<f64>(),
        }
    }
}

// ---------------------------------------------------------------- tests --

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const TOL: f64 = 1e-12;

    #[test]
    fn gamma_closed_form_values() {
        let g = GammaSequence::new(0.99).unwrap();
        assert!((g.gamma(1).unwrap() - 0.01).abs() < 1e-15);
        let h = GammaSequence::new(0.5).unwrap();
        assert!((h.gamma(3).unwrap() - 0.125).abs() < 1e-15);
        assert!(h.gamma(0).is_err());
    }

    #[test]
    fn gamma_requires_r_strictly_inside_unit_interval() {
        for r in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(GammaSequence::new(r).is_err(), "r = {r} must be rejected");
        }
    }

    #[test]
    fn gamma_partial_sums_stay_below_one() {
        // The closed-form partial sum is 1 - r^T < 1; the accumulated
        // float sum is allowed one ulp of slack around it.
        for r in [0.2, 0.5, 0.9, 0.99, 0.999] {
            let g = GammaSequence::new(r).unwrap();
            let mut sum = 0.0;
            for t in 1..=20_000u32 {
                sum += g.gamma(t as usize).unwrap();
                let closed = 1.0 - r.powi(t as i32);
                assert!(
                    sum <= 1.0 + 4.0 * f64::EPSILON,
                    "partial sum {sum} > 1 at r={r}, t={t}"
                );
                assert!((sum - closed).abs() < 1e-9, "r={r}, t={t}: {sum} vs {closed}");
            }
        }
    }

    #[test]
    fn offline_bh_handles_the_two_step_reversal() {
        // One small p-value is selected alone, then no longer selected
        // once a second moderate p-value dilutes the batch.
        let first = offline_bh(&[0.1], 0.1).unwrap();
        assert_eq!(first, BTreeSet::from([1]));
        let second = offline_bh(&[0.1, 0.2], 0.1).unwrap();
        assert!(second.is_empty());
    }

    #[test]
    fn offline_bh_selects_below_the_kstar_threshold() {
        let (k, set) = offline_bh_with_kstar(&[0.01, 0.02, 0.9], 0.1).unwrap();
        assert_eq!(k, 2);
        assert_eq!(set, BTreeSet::from([1, 2]));
    }

    #[test]
    fn offline_bh_edge_cases() {
        assert!(offline_bh(&[], 0.1).unwrap().is_empty());
        assert!(offline_bh(&[0.5], 1.5).is_err());
        assert!(offline_bh(&[1.5], 0.1).is_err());
        assert!(offline_bh(&[f64::NAN], 0.1).is_err());
        // All zeros are always selected.
        let all = offline_bh(&[0.0, 0.0, 0.0], 0.05).unwrap();
        assert_eq!(all, BTreeSet::from([1, 2, 3]));
    }

    #[test]
    fn offline_bh_matches_exhaustive_enumeration() {
        // Oracle: enumerate k by direct counting (no sorting), for every
        // prefix of random batches with heavy ties.
        fn enumerated(pvals: &[f64], q: f64) -> (usize, BTreeSet<usize>) {
            let m = pvals.len();
            let mut k_star = 0;
            for k in 1..=m {
                let thr = k as f64 * q / m as f64;
                if pvals.iter().filter(|&&p| p <= thr).count() >= k {
                    k_star = k_star.max(k);
                }
            }
            let thr = k_star as f64 * q / m as f64;
            let set = if k_star == 0 {
                BTreeSet::new()
            } else {
                pvals
                    .iter()
                    .enumerate()
                    .filter(|&(_, &p)| p <= thr)
                    .map(|(i, _)| i + 1)
                    .collect()
            };
            (k_star, set)
        }

        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0201);
        for _ in 0..2000 {
            let m = rng.random_range(0..=12);
            let q = rng.random_range(0.02..0.6);
            let pvals: Vec<f64> = (0..m)
                .map(|_| {
                    if rng.random::<f64>() < 0.3 {
                        (rng.random_range(0..6) as f64) * 0.05
                    } else {
                        rng.random()
                    }
                })
                .collect();
            let (k_impl, set_impl) = offline_bh_with_kstar(&pvals, q).unwrap();
            let (k_ref, set_ref) = enumerated(&pvals, q);
            assert_eq!(k_impl, k_ref, "pvals {pvals:?} q {q}");
            assert_eq!(set_impl, set_ref, "pvals {pvals:?} q {q}");
        }
    }

    #[test]
    fn online_bh_two_step_worked_example() {
        // q = 0.2, r = 0.5: gamma = (0.5, 0.25), budgets (0.1, 0.05).
        let gamma = GammaSequence::new(0.5).unwrap();
        let mut state = OnlineBhState::new(0.2, gamma).unwrap();
        let newly = state.step(0.05).unwrap();
        assert_eq!(newly, vec![1]);
        assert_eq!(state.k_star(), 1);
        // p_2 = 0.09 > 0.05 alone, but k* = 2 accepts both:
        // 0.05 <= 2 * 0.1 and 0.09 <= 2 * 0.05.
        let newly = state.step(0.09).unwrap();
        assert_eq!(newly, vec![2]);
        assert_eq!(state.k_star(), 2);
        assert_eq!(state.selected(), &BTreeSet::from([1, 2]));
    }

    #[test]
    fn online_bh_ignores_large_p_values() {
        let gamma = GammaSequence::new(0.9).unwrap();
        let mut state = OnlineBhState::new(0.1, gamma).unwrap();
        for _ in 0..20 {
            assert!(state.step(1.0).unwrap().is_empty());
        }
        assert_eq!(state.k_star(), 0);
        assert!(state.selected().is_empty());
    }

    #[test]
    fn online_bh_rejects_invalid_pvalues() {
        let gamma = GammaSequence::new(0.9).unwrap();
        let mut state = OnlineBhState::new(0.1, gamma).unwrap();
        assert!(state.step(-0.1).is_err());
        assert!(state.step(1.1).is_err());
        assert!(state.step(f64::NAN).is_err());
        assert_eq!(state.t(), 0, "rejected steps must not advance time");
    }

    #[test]
    fn online_bh_zero_pvalue_is_selected_immediately() {
        let gamma = GammaSequence::new(0.99).unwrap();
        let mut state = OnlineBhState::new(0.1, gamma).unwrap();
        assert!(state.step(0.9).unwrap().is_empty());
        let newly = state.step(0.0).unwrap();
        assert_eq!(newly, vec![2]);
        assert!(state.k_star() >= 1);
    }

    fn random_stream(rng: &mut ChaCha8Rng, max_len: usize) -> (f64, f64, Vec<f64>) {
        let q = rng.random_range(0.02..0.6);
        let r = rng.random_range(0.3..0.999);
        let len = rng.random_range(1..=max_len);
        let ps = (0..len).map(|_| reference::random_p(rng)).collect();
        (q, r, ps)
    }

    #[test]
    fn online_bh_selection_sets_are_nested_and_kstar_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0202);
        for _ in 0..1000 {
            let (q, r, ps) = random_stream(&mut rng, 120);
            let gamma = GammaSequence::new(r).unwrap();
            let mut state = OnlineBhState::new(q, gamma).unwrap();
            let mut prev_set: BTreeSet<usize> = BTreeSet::new();
            let mut prev_k = 0;
            for &p in &ps {
                let newly = state.step(p).unwrap();
                let current = state.selected().clone();
                assert!(
                    prev_set.is_subset(&current),
                    "selection set shrank: {prev_set:?} -> {current:?}"
                );
                assert!(state.k_star() >= prev_k, "k* decreased");
                let grown: BTreeSet<usize> = current.difference(&prev_set).copied().collect();
                let newly_set: BTreeSet<usize> = newly.iter().copied().collect();
                assert_eq!(grown, newly_set, "newly selected must equal the set growth");
                prev_set = current;
                prev_k = state.k_star();
            }
        }
    }

    #[test]
    fn online_bh_incremental_state_matches_brute_force_replay() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0203);
        for _ in 0..300 {
            let (q, r, ps) = random_stream(&mut rng, 80);
            let gamma = GammaSequence::new(r).unwrap();
            let mut state = OnlineBhState::new(q, gamma).unwrap();
            let mut history = Vec::new();
            for &p in &ps {
                state.step(p).unwrap();
                history.push(p);
                let (bf_k, bf_set) =
                    reference::brute_force_state(&history, q, &gamma).unwrap();
                assert_eq!(state.k_star(), bf_k);
                assert_eq!(state.selected(), &bf_set);
            }
        }
    }

    #[test]
    fn lowering_one_pvalue_never_removes_selections() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0204);
        for _ in 0..500 {
            let (q, r, ps) = random_stream(&mut rng, 60);
            let gamma = GammaSequence::new(r).unwrap();
            let run = |ps: &[f64]| -> BTreeSet<usize> {
                let mut st = OnlineBhState::new(q, gamma).unwrap();
                for &p in ps {
                    st.step(p).unwrap();
                }
                st.selected().clone()
            };
            let base = run(&ps);
            let mut perturbed = ps.clone();
            let j = rng.random_range(0..perturbed.len());
            perturbed[j] *= rng.random::<f64>();
            let after = run(&perturbed);
            assert!(
                base.is_subset(&after),
                "lowering p_{} removed selections: {base:?} -> {after:?}",
                j + 1
            );
        }
    }

    #[test]
    fn bonferroni_thresholds_each_step_alone() {
        // q = 0.1, r = 0.99: budget q * gamma_1 = 0.001.
        let gamma = GammaSequence::new(0.99).unwrap();
        let mut state = OnlineBonferroniState::new(0.1, gamma).unwrap();
        assert_eq!(state.step(0.0005).unwrap(), vec![1]);
        assert!(state.step(0.002).unwrap().is_empty());
        assert_eq!(state.selected(), &BTreeSet::from([1]));
    }

    #[test]
    fn bonferroni_selections_are_a_subset_of_online_bh() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0205);
        for _ in 0..1000 {
            let (q, r, ps) = random_stream(&mut rng, 100);
            let gamma = GammaSequence::new(r).unwrap();
            let mut bh = OnlineBhState::new(q, gamma).unwrap();
            let mut bonf = OnlineBonferroniState::new(q, gamma).unwrap();
            for &p in &ps {
                bh.step(p).unwrap();
                bonf.step(p).unwrap();
            }
            assert!(
                bonf.selected().is_subset(bh.selected()),
                "Bonferroni selected {:?} but online BH only {:?}",
                bonf.selected(),
                bh.selected()
            );
        }
    }

    #[test]
    fn repeated_bh_can_shrink_and_matches_the_stateless_form() {
        let mut state = RepeatedBhState::new(0.1).unwrap();
        let after_one = state.step(0.1).unwrap().clone();
        assert_eq!(after_one, BTreeSet::from([1]));
        let after_two = state.step(0.2).unwrap().clone();
        assert!(after_two.is_empty(), "the selection must be withdrawn");
        assert_eq!(
            repeated_cs_step(&[0.1, 0.2], 0.1).unwrap(),
            after_two,
            "stateless and stateful forms must agree"
        );
    }

    #[test]
    fn repeated_bh_selects_all_zero_pvalues() {
        let mut state = RepeatedBhState::new(0.05).unwrap();
        for _ in 0..5 {
            state.step(0.0).unwrap();
        }
        assert_eq!(state.current().len(), 5);
    }

    #[test]
    fn budget_underflow_freezes_new_selections_without_error() {
        // r = 0.5 underflows around t = 1080; later steps must still be
        // accepted and simply select nothing new for positive p-values.
        let gamma = GammaSequence::new(0.5).unwrap();
        let mut state = OnlineBhState::new(0.1, gamma).unwrap();
        for _ in 0..1200 {
            state.step(0.9).unwrap();
        }
        assert!(state.gamma().gamma(1200).unwrap() * state.q() < f64::EPSILON);
        assert!(state.selected().is_empty());
        assert_eq!(state.t(), 1200);
    }

    #[test]
    fn trajectory_roundtrips_sets_and_detects_nesting() {
        let gamma = GammaSequence::new(0.5).unwrap();
        let mut state = OnlineBhState::new(0.2, gamma).unwrap();
        let mut traj = SelectionTrajectory::default();
        for (i, p) in [0.05, 0.9, 0.09].iter().enumerate() {
            let t = i + 1;
            let newly = state.step(*p).unwrap();
            traj.push(TrajectoryStep {
                t,
                p: *p,
                gamma: gamma.gamma(t).unwrap(),
                k_star: state.k_star(),
                newly_selected: newly,
                removed: vec![],
                cum_selected: state.selected().len(),
            });
        }
        assert!(traj.is_nested());
        let sets = traj.selection_sets();
        assert_eq!(sets.last().unwrap(), state.selected());

        let mut out = Vec::new();
        traj.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,p_t,gamma_t,k_star,newly_selected,cum_selected"
        );
        assert_eq!(lines.count(), 3);
        assert!(text.contains("0.05"));
    }

    #[test]
    fn selection_ratio_handles_zero_budget_and_zero_p() {
        assert_eq!(selection_ratio(0.0, 0.1, 0.0), 0.0);
        assert_eq!(selection_ratio(0.5, 0.1, 0.0), f64::INFINITY);
        assert!((selection_ratio(0.05, 0.2, 0.5) - 0.5).abs() < TOL);
    }

    #[test]
    fn equivalence_check_reports_steps() {
        let report = reference::equivalence_check(25, 40, 7).unwrap();
        assert_eq!(report.streams, 25);
        assert!(report.steps_checked > 0);
    }
}
