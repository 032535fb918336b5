//! The constructive h-insensitive function.
//!
//! Given a long-tailed marginal, `find_breakpoints` searches for the
//! increasing sequence x_1 < x_2 < ... with x_{n+1} >= 2 x_n such that for
//! every x >= x_n both shifted-tail deviations at offsets n^(1+delta) stay
//! below 1/n:
//!
//! ```text
//! max( |F(x + n^(1+d))/F(x) - 1|, |F(x - n^(1+d))/F(x) - 1| ) <= 1/n
//! ```
//!
//! The piecewise-linear h interpolates h(x_{n-1}) = n with a linear ramp
//! (2/x_1) x below x_1. It is continuous, nondecreasing, concave, and slowly
//! varying; `verify_shape` re-checks all of that numerically, including the
//! sub-homogeneity h(x) <= c h(x/c) that drives the weight-band uniformity.

use thiserror::Error;

use crate::distributions::Distribution;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HError {
    #[error("not-long-tailed within search horizon: offset {offset} deviation stays above 1/{n} up to {cap:.3e}")]
    NotLongTailedWithinHorizon { n: usize, offset: f64, cap: f64 },
    #[error("need at least 2 breakpoints, got {0}")]
    TooFewBreakpoints(usize),
    #[error("delta must be > 0, got {0}")]
    NonPositiveDelta(f64),
    #[error("breakpoint count must be >= 2, got {0}")]
    CountTooSmall(usize),
    #[error("breakpoints must satisfy x_(n+1) >= 2 x_n > 0")]
    DoublingViolated,
}

/// Worst shifted-tail deviation at offsets +/- s, through the log channel.
/// Below the support's left edge the tail evaluates to 1, which only makes
/// the minus branch harder; there is no special-casing.
pub fn shift_deviation(d: &Distribution, x: f64, s: f64) -> f64 {
    let ln_at = d.ln_tail(x);
    let plus = -((d.ln_tail(x + s) - ln_at).exp_m1()); // in [0, 1]
    let minus = (d.ln_tail(x - s) - ln_at).exp_m1(); // >= 0
    plus.max(minus)
}

/// The breakpoint sequence {x_n} of the construction, with its delta.
#[derive(Debug, Clone, PartialEq)]
pub struct Breakpoints {
    pub xs: Vec<f64>,
    pub delta: f64,
    /// Human-readable identifier of the source distribution.
    pub source: String,
}

impl Breakpoints {
    pub fn offset(&self, n: usize) -> f64 {
        (n as f64).powf(1.0 + self.delta)
    }

    fn validate(&self) -> Result<(), HError> {
        if self.xs.len() < 2 {
            return Err(HError::TooFewBreakpoints(self.xs.len()));
        }
        if self.xs[0] <= 0.0 {
            return Err(HError::DoublingViolated);
        }
        for w in self.xs.windows(2) {
            if w[1] < 2.0 * w[0] {
                return Err(HError::DoublingViolated);
            }
        }
        Ok(())
    }
}

/// Geometric probe grid used to certify "for all x >= x_n" on a finite set.
/// The supported families have eventually monotone deviations, so 50 points
/// over three decades above the candidate are the documented evidence.
pub fn probe_grid(from: f64, decades: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|i| from * 10f64.powf(decades * i as f64 / (points - 1) as f64))
        .collect()
}

const PROBE_POINTS: usize = 50;
const PROBE_DECADES: f64 = 3.0;
const SEARCH_CAP_MULT: f64 = 1e15;

/// Slack for boundary equality under float rounding: the analytic solutions
/// (like x_1 = 2 for Pareto(1,1)) sit exactly on dev = 1/n.
fn within_bound(dev: f64, bound: f64) -> bool {
    dev <= bound * (1.0 + 1e-12) + 1e-15
}

/// Finds the first `count` breakpoints for `d` at the given `delta`.
///
/// Each x_n is the smallest point (to bisection resolution) that satisfies
/// the doubling constraint, clears the support boundary (x_n must be at
/// least left_edge + offset so the certified region never leans on the
/// clamped tail), and passes the deviation condition on the probe grid.
pub fn find_breakpoints(
    d: &Distribution,
    delta: f64,
    count: usize,
) -> Result<Breakpoints, HError> {
    if !delta.is_finite() || delta <= 0.0 {
        return Err(HError::NonPositiveDelta(delta));
    }
    if count < 2 {
        return Err(HError::CountTooSmall(count));
    }
    let left = d.support_left();
    let cap = SEARCH_CAP_MULT * d.scale_hint().max(1.0);
    let mut xs = Vec::with_capacity(count);
    let mut prev = 0.0f64;
    for n in 1..=count {
        let s = (n as f64).powf(1.0 + delta);
        let bound = 1.0 / n as f64;
        // Boundary rule: candidates start past left_edge + offset so the
        // minus branch never crosses the support edge at a certified point.
        let mut lo = (2.0 * prev).max(left + s).max(f64::MIN_POSITIVE);
        let x_n = loop {
            let candidate = smallest_satisfying(d, s, bound, lo, cap)
                .ok_or(HError::NotLongTailedWithinHorizon { n, offset: s, cap })?;
            match first_failing_probe(d, s, bound, candidate) {
                None => break candidate,
                Some(bad) => {
                    // Deviation popped back above 1/n further out; restart
                    // the search beyond the failing probe.
                    lo = bad;
                    if lo > cap {
                        return Err(HError::NotLongTailedWithinHorizon { n, offset: s, cap });
                    }
                }
            }
        };
        xs.push(x_n);
        prev = x_n;
    }
    Ok(Breakpoints {
        xs,
        delta,
        source: d.to_string(),
    })
}

/// Smallest x >= lo with dev(x) <= bound, by doubling then bisection.
/// Returns None if the condition is never met up to `cap`.
fn smallest_satisfying(d: &Distribution, s: f64, bound: f64, lo: f64, cap: f64) -> Option<f64> {
    if within_bound(shift_deviation(d, lo, s), bound) {
        return Some(lo);
    }
    let mut bad = lo;
    let mut good = lo;
    loop {
        good *= 2.0;
        if good > cap {
            return None;
        }
        if within_bound(shift_deviation(d, good, s), bound) {
            break;
        }
        bad = good;
    }
    // Bisect down to adjacent floats so analytic boundary points are exact.
    for _ in 0..200 {
        let mid = 0.5 * (bad + good);
        if mid <= bad || mid >= good {
            break;
        }
        if within_bound(shift_deviation(d, mid, s), bound) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    Some(good)
}

/// First probe-grid point above `from` where the deviation condition fails.
fn first_failing_probe(d: &Distribution, s: f64, bound: f64, from: f64) -> Option<f64> {
    probe_grid(from, PROBE_DECADES, PROBE_POINTS)
        .into_iter()
        .find(|&x| !within_bound(shift_deviation(d, x, s), bound))
}

/// Re-certifies the stored breakpoints on fresh probe grids. Returns the
/// worst (deviation * n) margin observed; <= 1 means every condition holds.
pub fn certify(d: &Distribution, bp: &Breakpoints) -> f64 {
    let mut worst = 0.0f64;
    for (i, &x_n) in bp.xs.iter().enumerate() {
        let n = i + 1;
        let s = bp.offset(n);
        for x in probe_grid(x_n, PROBE_DECADES, PROBE_POINTS) {
            let margin = shift_deviation(d, x, s) * n as f64;
            worst = worst.max(margin);
        }
    }
    worst
}

/// Anything that can be evaluated as an insensitivity function.
pub trait HFunction {
    fn eval(&self, x: f64) -> f64;
}

/// Lemma-style piecewise-linear h over a breakpoint sequence:
/// (2/x_1) x on (0, x_1), then n + (x - x_{n-1})/(x_n - x_{n-1}) on
/// [x_{n-1}, x_n), extended past x_N with the last segment's slope.
#[derive(Debug, Clone, PartialEq)]
pub struct InsensitivityFunction {
    breakpoints: Breakpoints,
}

impl InsensitivityFunction {
    pub fn new(breakpoints: Breakpoints) -> Result<Self, HError> {
        breakpoints.validate()?;
        Ok(Self { breakpoints })
    }

    pub fn from_distribution(
        d: &Distribution,
        delta: f64,
        count: usize,
    ) -> Result<Self, HError> {
        Self::new(find_breakpoints(d, delta, count)?)
    }

    pub fn breakpoints(&self) -> &Breakpoints {
        &self.breakpoints
    }

    pub fn delta(&self) -> f64 {
        self.breakpoints.delta
    }

    /// Largest x covered by the construction; past it the evaluator
    /// extrapolates the last linear segment, which keeps continuity,
    /// monotonicity and concavity but not slow variation. Extend the
    /// breakpoint count instead of trusting the extrapolation.
    pub fn certified_max(&self) -> f64 {
        *self.breakpoints.xs.last().unwrap()
    }

    /// Weight band (a, b) = (h(x)^-delta, h(x)^(1/2)) at x.
    pub fn weight_band(&self, x: f64, delta: f64) -> WeightBand {
        WeightBand::from_h(self.eval(x), delta)
    }
}

impl HFunction for InsensitivityFunction {
    fn eval(&self, x: f64) -> f64 {
        assert!(x > 0.0, "h is defined on x > 0, got {x}");
        let xs = &self.breakpoints.xs;
        if x < xs[0] {
            return 2.0 / xs[0] * x;
        }
        let last = xs.len() - 1;
        if x >= xs[last] {
            let slope = 1.0 / (xs[last] - xs[last - 1]);
            return (last as f64 + 2.0) + (x - xs[last]) * slope;
        }
        // segment index: x in [xs[i], xs[i+1]) evaluates with n = i + 2
        let i = xs.partition_point(|&b| b <= x) - 1;
        let n = (i + 2) as f64;
        n + (x - xs[i]) / (xs[i + 1] - xs[i])
    }
}

impl<F: Fn(f64) -> f64> HFunction for F {
    fn eval(&self, x: f64) -> f64 {
        self(x)
    }
}

/// Pointwise minimum of several insensitivity functions, the combination
/// used for convolutions of distinct marginals.
#[derive(Debug, Clone)]
pub struct MinH {
    parts: Vec<InsensitivityFunction>,
}

impl MinH {
    pub fn new(parts: Vec<InsensitivityFunction>) -> Self {
        assert!(!parts.is_empty(), "min of an empty set of h functions");
        Self { parts }
    }
}

impl HFunction for MinH {
    fn eval(&self, x: f64) -> f64 {
        self.parts
            .iter()
            .map(|h| h.eval(x))
            .fold(f64::INFINITY, f64::min)
    }
}

/// The weight interval [lower, upper] of the uniformity statements:
/// lower = h^-delta, upper = h^(1/2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightBand {
    pub lower: f64,
    pub upper: f64,
}

impl WeightBand {
    pub fn from_h(h: f64, delta: f64) -> Self {
        Self {
            lower: h.powf(-delta),
            upper: h.sqrt(),
        }
    }

    /// Empty once h < 1 makes the lower endpoint exceed the upper.
    pub fn is_empty(&self) -> bool {
        self.lower > self.upper
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

/// One shape check's outcome: the worst margin seen and where.
#[derive(Debug, Clone, Copy)]
pub struct ShapeMargin {
    /// Worst violation margin; <= 0 means the property held everywhere.
    pub worst: f64,
    pub at_x: f64,
    pub violations: usize,
}

/// Numerical shape report for an h function.
#[derive(Debug, Clone)]
pub struct ShapeReport {
    pub monotone: ShapeMargin,
    pub sub_homogeneous: ShapeMargin,
    pub concave_midpoint: ShapeMargin,
    pub ratio_nonincreasing: ShapeMargin,
    pub doubling: ShapeMargin,
}

impl ShapeReport {
    pub fn total_violations(&self) -> usize {
        self.monotone.violations
            + self.sub_homogeneous.violations
            + self.concave_midpoint.violations
            + self.ratio_nonincreasing.violations
            + self.doubling.violations
    }
}

const SHAPE_TOL: f64 = 1e-9;

fn track(margin: &mut ShapeMargin, value: f64, x: f64, scale: f64) {
    if value > margin.worst {
        margin.worst = value;
        margin.at_x = x;
    }
    if value > SHAPE_TOL * scale.max(1.0) {
        margin.violations += 1;
    }
}

/// Checks monotonicity, sub-homogeneity h(x) <= c h(x/c), midpoint
/// concavity, h(x)/x nonincreasing, and h(2x) <= h(x) + 2 on the given
/// grids. Violations are reported, not thrown.
pub fn verify_shape<H: HFunction>(h: &H, x_grid: &[f64], c_grid: &[f64]) -> ShapeReport {
    let zero = ShapeMargin {
        worst: f64::NEG_INFINITY,
        at_x: f64::NAN,
        violations: 0,
    };
    let mut report = ShapeReport {
        monotone: zero,
        sub_homogeneous: zero,
        concave_midpoint: zero,
        ratio_nonincreasing: zero,
        doubling: zero,
    };

    let mut sorted: Vec<f64> = x_grid.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

    for w in sorted.windows(2) {
        let (x1, x2) = (w[0], w[1]);
        let (h1, h2) = (h.eval(x1), h.eval(x2));
        track(&mut report.monotone, h1 - h2, x2, h1.abs());
        track(
            &mut report.ratio_nonincreasing,
            h2 / x2 - h1 / x1,
            x2,
            h1 / x1,
        );
    }
    for &x in &sorted {
        let hx = h.eval(x);
        for &c in c_grid {
            if c < 1.0 {
                continue;
            }
            track(&mut report.sub_homogeneous, hx - c * h.eval(x / c), x, hx);
        }
        track(&mut report.doubling, h.eval(2.0 * x) - hx - 2.0, x, hx);
    }
    for i in 0..sorted.len() {
        for j in (i + 1)..sorted.len() {
            let (x1, x2) = (sorted[i], sorted[j]);
            let mid = 0.5 * (x1 + x2);
            let gap = 0.5 * (h.eval(x1) + h.eval(x2)) - h.eval(mid);
            track(&mut report.concave_midpoint, gap, mid, h.eval(mid));
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pareto11_h() -> InsensitivityFunction {
        let d = Distribution::pareto(1.0, 1.0).unwrap();
        InsensitivityFunction::from_distribution(&d, 1.0, 6).unwrap()
    }

    fn manual_h(xs: &[f64]) -> InsensitivityFunction {
        InsensitivityFunction::new(Breakpoints {
            xs: xs.to_vec(),
            delta: 1.0,
            source: "manual".into(),
        })
        .unwrap()
    }

    #[test]
    fn pareto_breakpoints_are_analytic() {
        // dev(x) = (1 - s/x)^-1 - 1 <= 1/n solves to x >= s (n + 1), with the
        // support rule x >= 1 + s; n=1: x=2, n=2: x=12.
        let bp = find_breakpoints(&Distribution::pareto(1.0, 1.0).unwrap(), 1.0, 2).unwrap();
        assert_relative_eq!(bp.xs[0], 2.0, max_relative = 1e-9);
        assert_relative_eq!(bp.xs[1], 12.0, max_relative = 1e-9);
    }

    #[test]
    fn breakpoints_satisfy_doubling_and_certify() {
        for d in [
            Distribution::pareto(1.0, 1.0).unwrap(),
            Distribution::pareto(2.0, 1.0).unwrap(),
            Distribution::weibull(0.5, 1.0).unwrap(),
            Distribution::lognormal(0.0, 1.0).unwrap(),
            Distribution::burr(1.0, 2.0, 1.0).unwrap(),
        ] {
            let bp = find_breakpoints(&d, 1.0, 8).unwrap();
            for w in bp.xs.windows(2) {
                assert!(w[1] >= 2.0 * w[0] * (1.0 - 1e-12), "{d}: doubling violated");
            }
            let worst = certify(&d, &bp);
            assert!(worst <= 1.0 + 1e-9, "{d}: certificate margin {worst}");
        }
    }

    #[test]
    fn exponential_is_rejected_at_the_horizon() {
        let d = Distribution::exponential(1.0).unwrap();
        let err = find_breakpoints(&d, 1.0, 2).unwrap_err();
        assert!(matches!(err, HError::NotLongTailedWithinHorizon { n: 1, .. }));
    }

    #[test]
    fn eval_matches_piecewise_formula() {
        let h = manual_h(&[2.0, 12.0]);
        assert_relative_eq!(h.eval(1.0), 1.0, epsilon = 1e-15);
        assert_relative_eq!(h.eval(2.0), 2.0, epsilon = 1e-15);
        assert_relative_eq!(h.eval(12.0), 3.0, epsilon = 1e-15);
        assert_relative_eq!(h.eval(7.0), 2.5, epsilon = 1e-15);
        // extrapolation continues the last slope 1/10
        assert_relative_eq!(h.eval(22.0), 4.0, epsilon = 1e-14);
    }

    #[test]
    fn eval_is_continuous_at_breakpoints() {
        let h = pareto11_h();
        for &x in &h.breakpoints().xs.clone() {
            let eps = x * 1e-12;
            let left = h.eval(x - eps);
            let right = h.eval(x);
            assert!((right - left).abs() <= 1e-9, "jump at {x}: {left} vs {right}");
        }
    }

    #[test]
    fn min_h_is_pointwise_min() {
        let h1 = pareto11_h();
        let d2 = Distribution::pareto(2.0, 1.0).unwrap();
        let h2 = InsensitivityFunction::from_distribution(&d2, 1.0, 6).unwrap();
        let m = MinH::new(vec![h1.clone(), h2.clone()]);
        for x in [1.0, 5.0, 100.0, 1e4] {
            let v = m.eval(x);
            assert!(v <= h1.eval(x) + 1e-15 && v <= h2.eval(x) + 1e-15);
            assert!(v == h1.eval(x) || v == h2.eval(x));
        }
        // single input is the identity; duplicates are idempotent
        let single = MinH::new(vec![h1.clone()]);
        let twice = MinH::new(vec![h1.clone(), h1.clone()]);
        for x in [0.5, 3.0, 50.0] {
            assert_eq!(single.eval(x), h1.eval(x));
            assert_eq!(twice.eval(x), h1.eval(x));
        }
    }

    #[test]
    fn shape_report_clean_for_constructed_h() {
        // Probe within the certified range (doubling leaves it otherwise:
        // the linear extrapolation is not slowly varying by design).
        let h = pareto11_h();
        let top = h.certified_max() / 2.0;
        let xs: Vec<f64> = (0..100)
            .map(|i| 0.3 * (top / 0.3).powf(i as f64 / 99.0))
            .collect();
        let cs: Vec<f64> = (0..20).map(|i| 1.0 + 9.0 * i as f64 / 19.0).collect();
        let report = verify_shape(&h, &xs, &cs);
        assert_eq!(report.total_violations(), 0, "{report:?}");
    }

    #[test]
    fn shape_examples_from_manual_breakpoints() {
        let h = manual_h(&[2.0, 12.0]);
        // c = 2, x = 12: h(12) = 3 <= 2 h(6) = 4.8
        assert!(h.eval(12.0) <= 2.0 * h.eval(6.0));
        assert_relative_eq!(2.0 * h.eval(6.0), 4.8, epsilon = 1e-14);
        // c = 1 is equality
        assert_eq!(h.eval(12.0), 1.0 * h.eval(12.0));
        // midpoint concavity with boundary equality on a single segment
        assert_relative_eq!(
            h.eval(7.0),
            0.5 * (h.eval(2.0) + h.eval(12.0)),
            epsilon = 1e-14
        );
    }

    #[test]
    fn weight_bands() {
        let b = WeightBand::from_h(4.0, 1.0);
        assert_relative_eq!(b.lower, 0.25, epsilon = 1e-15);
        assert_relative_eq!(b.upper, 2.0, epsilon = 1e-15);
        assert!(!b.is_empty());

        let degenerate = WeightBand::from_h(1.0, 1.0);
        assert_eq!(degenerate.lower, 1.0);
        assert_eq!(degenerate.upper, 1.0);
        assert!(!degenerate.is_empty());

        assert!(WeightBand::from_h(0.5, 1.0).is_empty());

        let h = manual_h(&[2.0, 12.0]);
        let band = h.weight_band(12.0, 1.0);
        assert_relative_eq!(band.lower, 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(band.upper, 3f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn minus_branch_support_rule() {
        // For any family, x_1 ends up past left_edge + offset.
        let d = Distribution::pareto(1.0, 1.0).unwrap();
        let bp = find_breakpoints(&d, 1.0, 2).unwrap();
        assert!(bp.xs[0] >= d.support_left() + 1.0 - 1e-12);
    }

    #[test]
    fn rejects_bad_arguments() {
        let d = Distribution::pareto(1.0, 1.0).unwrap();
        assert!(matches!(
            find_breakpoints(&d, 0.0, 5),
            Err(HError::NonPositiveDelta(_))
        ));
        assert!(matches!(
            find_breakpoints(&d, 1.0, 1),
            Err(HError::CountTooSmall(1))
        ));
        assert!(InsensitivityFunction::new(Breakpoints {
            xs: vec![2.0, 3.0],
            delta: 1.0,
            source: String::new(),
        })
        .is_err());
    }
}
