//! Numerical diagnostics for the defining limits of the heavy-tail classes.
//!
//! Each diagnostic evaluates its ratio on a geometric grid through the log
//! channel and issues a verdict under an explicit finite-evidence protocol:
//! the limits are asymptotic statements, so "converges-to-1" demands the
//! last few ratios sit near 1 with shrinking deviations, "diverges" demands
//! the ratio blow past a hard cap, and "bounded" demands the running
//! supremum to have stabilized. Anything else is inconclusive.

use thiserror::Error;

use crate::convolution::{convolution_tail, GridSpec, OracleError};
use crate::distributions::{Distribution, WeightedMarginal};
use crate::h_construct::HFunction;

#[derive(Debug, Error)]
pub enum DiagnosticError {
    #[error("convolution oracle failed: {0}")]
    Oracle(#[from] OracleError),
    #[error("contraction factor must be in (0,1), got {0}")]
    BadContraction(f64),
    #[error("grid must be strictly increasing and positive")]
    BadGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    ConvergesToOne,
    Bounded,
    Diverges,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Verdict::ConvergesToOne => "converges-to-1",
            Verdict::Bounded => "bounded",
            Verdict::Diverges => "diverges",
            Verdict::Inconclusive => "inconclusive",
        };
        f.write_str(s)
    }
}

/// The finite-evidence protocol behind a verdict.
#[derive(Debug, Clone, Copy)]
pub struct VerdictProtocol {
    /// Number of trailing grid points that must agree.
    pub last_k: usize,
    /// "converges-to-1" needs |ratio - 1| within this of 0 on the last k.
    pub convergence_tol: f64,
    /// "diverges" needs the final ratio beyond this cap.
    pub divergence_cap: f64,
    /// "bounded" needs the running sup to grow less than this (relative)
    /// over the last k points.
    pub bounded_tol: f64,
}

impl Default for VerdictProtocol {
    fn default() -> Self {
        Self {
            last_k: 5,
            convergence_tol: 1e-2,
            divergence_cap: 1e6,
            bounded_tol: 1e-3,
        }
    }
}

/// Ratio evidence on a probe grid.
#[derive(Debug, Clone)]
pub struct RatioProfile {
    pub xs: Vec<f64>,
    /// Plain-value ratios; may overflow to inf, the log channel never does.
    pub ratios: Vec<f64>,
    pub ln_ratios: Vec<f64>,
    pub running_sup: Vec<f64>,
    /// Per-point ratio error bounds when a deterministic oracle backs the
    /// numerator (empty otherwise).
    pub error_bounds: Vec<f64>,
    pub verdict: Verdict,
    pub protocol: VerdictProtocol,
    pub warnings: Vec<String>,
}

impl RatioProfile {
    fn build(
        xs: Vec<f64>,
        ln_ratios: Vec<f64>,
        error_bounds: Vec<f64>,
        protocol: VerdictProtocol,
        warnings: Vec<String>,
    ) -> Self {
        let ratios: Vec<f64> = ln_ratios.iter().map(|l| l.exp()).collect();
        let mut running_sup = Vec::with_capacity(ratios.len());
        let mut sup = f64::NEG_INFINITY;
        for &r in &ratios {
            sup = sup.max(r);
            running_sup.push(sup);
        }
        let verdict = decide(&ln_ratios, &running_sup, &error_bounds, &protocol);
        Self {
            xs,
            ratios,
            ln_ratios,
            running_sup,
            error_bounds,
            verdict,
            protocol,
            warnings,
        }
    }
}

fn decide(
    ln_ratios: &[f64],
    running_sup: &[f64],
    errs: &[f64],
    p: &VerdictProtocol,
) -> Verdict {
    let n = ln_ratios.len();
    if n == 0 {
        return Verdict::Inconclusive;
    }
    if ln_ratios[n - 1] > p.divergence_cap.ln() {
        return Verdict::Diverges;
    }
    if n >= p.last_k {
        let tail = &ln_ratios[n - p.last_k..];
        let devs: Vec<f64> = tail.iter().map(|l| l.exp_m1().abs()).collect();
        let close = devs.iter().all(|d| *d <= p.convergence_tol);
        let err_of = |i: usize| -> f64 {
            if errs.is_empty() {
                0.0
            } else {
                errs[n - p.last_k + i]
            }
        };
        let shrinking = devs
            .windows(2)
            .enumerate()
            .all(|(i, w)| w[1] <= w[0] + err_of(i) + err_of(i + 1) + 1e-12);
        if close && shrinking {
            return Verdict::ConvergesToOne;
        }
        let sup_now = running_sup[n - 1];
        let sup_then = running_sup[n - p.last_k];
        if sup_now.is_finite() && sup_now - sup_then <= p.bounded_tol * sup_now.abs() {
            return Verdict::Bounded;
        }
    }
    Verdict::Inconclusive
}

/// Default geometric probe grid: 40 points over [10, 1e8] times the
/// distribution's characteristic scale. Tail limits live on multiplicative
/// scales.
pub fn default_grid(d: &Distribution) -> Vec<f64> {
    geometric_grid(10.0 * d.scale_hint(), 1e8 * d.scale_hint(), 40)
}

pub fn geometric_grid(from: f64, to: f64, points: usize) -> Vec<f64> {
    assert!(from > 0.0 && to > from && points >= 2);
    let lf = from.ln();
    let lt = to.ln();
    (0..points)
        .map(|i| (lf + (lt - lf) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

fn checked_grid(grid: &[f64]) -> Result<(), DiagnosticError> {
    if grid.is_empty() || grid.windows(2).any(|w| w[1] <= w[0]) || grid[0] <= 0.0 {
        return Err(DiagnosticError::BadGrid);
    }
    Ok(())
}

/// Long-tail limit: F(x+y)/F(x) -> 1.
pub fn long_tail_ratio(
    d: &Distribution,
    y: f64,
    grid: &[f64],
) -> Result<RatioProfile, DiagnosticError> {
    checked_grid(grid)?;
    ratio_profile(grid, |x| d.ln_tail(x + y) - d.ln_tail(x))
}

/// Dominated-variation limit: limsup F(yx)/F(x) < inf for y in (0,1).
pub fn dominated_variation_ratio(
    d: &Distribution,
    y: f64,
    grid: &[f64],
) -> Result<RatioProfile, DiagnosticError> {
    if !(0.0 < y && y < 1.0) {
        return Err(DiagnosticError::BadContraction(y));
    }
    checked_grid(grid)?;
    ratio_profile(grid, |x| d.ln_tail(y * x) - d.ln_tail(x))
}

fn ratio_profile<F: Fn(f64) -> f64>(
    grid: &[f64],
    ln_ratio: F,
) -> Result<RatioProfile, DiagnosticError> {
    let mut xs = Vec::with_capacity(grid.len());
    let mut lns = Vec::with_capacity(grid.len());
    let mut warnings = Vec::new();
    for &x in grid {
        let l = ln_ratio(x);
        if !l.is_finite() {
            warnings.push(format!("x={x}: tail numerically zero, point excluded"));
            continue;
        }
        xs.push(x);
        lns.push(l);
    }
    Ok(RatioProfile::build(
        xs,
        lns,
        Vec::new(),
        VerdictProtocol::default(),
        warnings,
    ))
}

/// One contraction level of the consistent-variation scan.
#[derive(Debug, Clone, Copy)]
pub struct ConsistentVariationPoint {
    pub y: f64,
    /// Supremum of the ratio over the upper half of the grid.
    pub limsup_estimate: f64,
    /// Whether that supremum had stabilized (bounded-style evidence).
    pub stabilized: bool,
}

/// Consistent-variation scan: the per-y limsup estimates must decrease to 1
/// as y grows to 1 for membership in C.
pub fn consistent_variation_profile(
    d: &Distribution,
    ys: &[f64],
    grid: &[f64],
) -> Result<Vec<ConsistentVariationPoint>, DiagnosticError> {
    checked_grid(grid)?;
    ys.iter()
        .map(|&y| {
            let profile = dominated_variation_ratio(d, y, grid)?;
            let half = profile.ratios.len() / 2;
            let limsup_estimate = profile.ratios[half..]
                .iter()
                .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let stabilized = matches!(profile.verdict, Verdict::Bounded | Verdict::ConvergesToOne);
            Ok(ConsistentVariationPoint {
                y,
                limsup_estimate,
                stabilized,
            })
        })
        .collect()
}

/// Subexponentiality evidence: F*2(x) / (2 F(x)) on the positive part, with
/// the two-fold tail from the convolution oracle. Per-point oracle error
/// bounds are carried into the verdict's monotone-trend check.
pub fn subexponential_ratio(
    d: &Distribution,
    grid: &[f64],
    spec: &GridSpec,
) -> Result<RatioProfile, DiagnosticError> {
    checked_grid(grid)?;
    let margins = [
        WeightedMarginal::new(*d, 1.0).expect("unit weight"),
        WeightedMarginal::new(*d, 1.0).expect("unit weight"),
    ];
    let mut xs = Vec::new();
    let mut lns = Vec::new();
    let mut errs = Vec::new();
    let mut warnings = Vec::new();
    for &x in grid {
        let denom = 2.0 * d.tail(x);
        if denom <= f64::MIN_POSITIVE {
            warnings.push(format!("x={x}: marginal tail underflows, point excluded"));
            continue;
        }
        let conv = convolution_tail(&margins, x, spec)?;
        xs.push(x);
        lns.push((conv.value / denom).ln());
        errs.push(conv.error_bound / denom);
    }
    Ok(RatioProfile::build(
        xs,
        lns,
        errs,
        VerdictProtocol::default(),
        warnings,
    ))
}

/// Worst shifted-tail deviation over |y| <= h(x) at one grid point.
#[derive(Debug, Clone, Copy)]
pub struct InsensitivityPoint {
    pub x: f64,
    pub h: f64,
    /// sup over the probed offsets of |F(x+y)/F(x) - 1|.
    pub deviation: f64,
    /// Set when x - h(x) crossed the support's left edge.
    pub support_clipped: bool,
}

/// Number of equispaced interior offsets probed besides the endpoints.
/// Monotone tails make the endpoints binding; the interior points guard the
/// implementation, not the math.
const INTERIOR_OFFSETS: usize = 9;

/// Insensitivity profile of a tail under an h function.
pub fn insensitivity_profile<H: HFunction>(
    d: &Distribution,
    h: &H,
    grid: &[f64],
) -> Result<Vec<InsensitivityPoint>, DiagnosticError> {
    checked_grid(grid)?;
    Ok(grid
        .iter()
        .map(|&x| {
            let hx = h.eval(x);
            let ln_at = d.ln_tail(x);
            let mut deviation = 0.0f64;
            for i in 0..=(INTERIOR_OFFSETS + 1) {
                let y = hx * (2.0 * i as f64 / (INTERIOR_OFFSETS + 1) as f64 - 1.0);
                let dev = ((d.ln_tail(x + y) - ln_at).exp_m1()).abs();
                deviation = deviation.max(dev);
            }
            InsensitivityPoint {
                x,
                h: hx,
                deviation,
                support_clipped: x - hx < d.support_left(),
            }
        })
        .collect())
}

/// Deviation of the scaled tail P(cX > x +/- h)/P(cX > x) from 1; the
/// quantity whose uniform smallness over the weight band is the n = 1
/// uniformity statement, and whose failure under a too-fast-vanishing lower
/// band is the Weibull boundary example.
pub fn scaled_shift_deviation(d: &Distribution, c: f64, x: f64, h: f64) -> f64 {
    let ln_at = d.ln_tail(x / c);
    let minus = (d.ln_tail((x - h) / c) - ln_at).exp_m1();
    let plus = -((d.ln_tail((x + h) / c) - ln_at).exp_m1());
    minus.max(plus)
}
