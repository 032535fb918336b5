//! Joint samplers and the pairwise strong quasi-asymptotic independence
//! (pSQAI) diagnostic.
//!
//! The shipped copulas (Gaussian with |rho| < 1 and FGM) are both
//! asymptotically independent, so vectors built from them satisfy the pSQAI
//! hypothesis of the dependent-case theorems; `psqai_diagnostic` turns that
//! into numerical evidence instead of an assumption. A comonotone kind is
//! included as the one tail-dependent negative control.
//!
//! Sampling is inverse-CDF throughout: a copula layer produces uniforms,
//! the marginals map them through their upper quantiles. Conditioning events
//! `V > v` are sampled directly on the tail scale, so the diagnostic never
//! starves however deep the threshold.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::Distribution;
use crate::special::{inv_normal_cdf, inv_normal_sf, normal_cdf, normal_sf};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DepError {
    #[error("rho: must be in (-1,1), got {0}")]
    BadRho(f64),
    #[error("theta: must be in [-1,1], got {0}")]
    BadTheta(f64),
    #[error("margins length {margins} does not match dimension {dimension}")]
    DimensionMismatch { margins: usize, dimension: usize },
    #[error("{kind} copula not supported in dimension {dimension}: {reason}")]
    UnsupportedDimension {
        kind: &'static str,
        dimension: usize,
        reason: &'static str,
    },
    #[error("insufficient-tail-samples: need at least {need} conditioned draws, got {got}")]
    InsufficientTailSamples { need: u64, got: u64 },
}

/// Dependence structure of a random vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DependenceSpec {
    Independent,
    Gaussian { rho: f64 },
    Fgm { theta: f64 },
    /// Perfect positive dependence; upper-tail dependent, hence *not*
    /// pSQAI. Shipped only as the diagnostic's negative control.
    Comonotone,
}

impl DependenceSpec {
    pub fn validate(&self, dimension: usize) -> Result<(), DepError> {
        match *self {
            DependenceSpec::Independent | DependenceSpec::Comonotone => Ok(()),
            DependenceSpec::Gaussian { rho } => {
                if !(-1.0 < rho && rho < 1.0) {
                    return Err(DepError::BadRho(rho));
                }
                if rho < 0.0 && dimension > 2 {
                    return Err(DepError::UnsupportedDimension {
                        kind: "gaussian",
                        dimension,
                        reason: "negative equicorrelation is implemented pairwise only",
                    });
                }
                Ok(())
            }
            DependenceSpec::Fgm { theta } => {
                if !(-1.0..=1.0).contains(&theta) {
                    return Err(DepError::BadTheta(theta));
                }
                if dimension != 2 {
                    return Err(DepError::UnsupportedDimension {
                        kind: "fgm",
                        dimension,
                        reason: "the FGM sampler is bivariate",
                    });
                }
                Ok(())
            }
        }
    }

    pub fn is_independent(&self) -> bool {
        matches!(self, DependenceSpec::Independent)
    }
}

fn unit_open<R: Rng>(rng: &mut R) -> f64 {
    // [0,1) draw nudged away from 0 so inverse transforms stay finite.
    rng.gen::<f64>().max(1e-300)
}

/// Copula layer: fills `us` with one joint uniform vector.
pub fn sample_copula_uniforms<R: Rng>(
    spec: &DependenceSpec,
    dimension: usize,
    rng: &mut R,
    us: &mut Vec<f64>,
) {
    us.clear();
    match *spec {
        DependenceSpec::Independent => {
            for _ in 0..dimension {
                us.push(unit_open(rng));
            }
        }
        DependenceSpec::Comonotone => {
            let u = unit_open(rng);
            for _ in 0..dimension {
                us.push(u);
            }
        }
        DependenceSpec::Gaussian { rho } => {
            if rho >= 0.0 {
                // Equicorrelated via a common factor.
                let w0 = inv_normal_cdf(unit_open(rng));
                let (sr, sc) = (rho.sqrt(), (1.0 - rho).sqrt());
                for _ in 0..dimension {
                    let w = inv_normal_cdf(unit_open(rng));
                    us.push(normal_cdf(sr * w0 + sc * w));
                }
            } else {
                let w1 = inv_normal_cdf(unit_open(rng));
                let w2 = inv_normal_cdf(unit_open(rng));
                us.push(normal_cdf(w1));
                us.push(normal_cdf(rho * w1 + (1.0 - rho * rho).sqrt() * w2));
            }
        }
        DependenceSpec::Fgm { theta } => {
            let u = unit_open(rng);
            let w = unit_open(rng);
            us.push(u);
            us.push(fgm_conditional_inverse(theta * (1.0 - 2.0 * u), w));
        }
    }
}

/// Inverse of the FGM conditional CDF `v (1 + a (1 - v))` for a = theta(1-2u):
/// the root in [0,1] of `a v^2 - (1+a) v + w = 0`.
fn fgm_conditional_inverse(a: f64, w: f64) -> f64 {
    if a.abs() < 1e-12 {
        return w;
    }
    let b = 1.0 + a;
    ((b - (b * b - 4.0 * a * w).sqrt()) / (2.0 * a)).clamp(0.0, 1.0)
}

/// One joint draw with the given marginals and copula.
pub fn sample_vector<R: Rng>(
    spec: &DependenceSpec,
    margins: &[Distribution],
    rng: &mut R,
    out: &mut Vec<f64>,
) -> Result<(), DepError> {
    spec.validate(margins.len())?;
    let mut us = Vec::with_capacity(margins.len());
    sample_copula_uniforms(spec, margins.len(), rng, &mut us);
    out.clear();
    for (m, &u) in margins.iter().zip(&us) {
        out.push(m.sample_from_uniform(u));
    }
    Ok(())
}

/// One conditional-probability estimate of the pSQAI diagnostic.
#[derive(Debug, Clone, Copy)]
pub struct PsqaiPoint {
    pub i: usize,
    pub j: usize,
    pub threshold: f64,
    /// Estimate of P(|X_i| > t | X_j > t).
    pub estimate: f64,
    pub std_error: f64,
    pub conditioned_draws: u64,
}

#[derive(Debug, Clone)]
pub struct PsqaiReport {
    pub points: Vec<PsqaiPoint>,
    /// Per ordered pair: whether the estimates trend down toward zero.
    pub pair_vanishing: Vec<((usize, usize), bool)>,
}

const MIN_CONDITIONED_DRAWS: u64 = 100;

/// Estimates P(|X_i| > t | X_j > t) for every ordered pair and threshold by
/// sampling the conditioning event directly: the conditioned component's
/// tail level is drawn uniformly inside the event, the other component from
/// the copula's exact conditional.
pub fn psqai_diagnostic<R: Rng>(
    spec: &DependenceSpec,
    margins: &[Distribution],
    thresholds: &[f64],
    n_samples: u64,
    rng: &mut R,
) -> Result<PsqaiReport, DepError> {
    let n = margins.len();
    spec.validate(n)?;
    if n_samples < MIN_CONDITIONED_DRAWS {
        return Err(DepError::InsufficientTailSamples {
            need: MIN_CONDITIONED_DRAWS,
            got: n_samples,
        });
    }
    assert!(
        thresholds.windows(2).all(|w| w[1] > w[0]),
        "thresholds must be increasing"
    );
    let mut points = Vec::new();
    for j in 0..n {
        for i in 0..n {
            if i == j {
                continue;
            }
            for &t in thresholds {
                let q_j = margins[j].tail(t);
                if q_j <= 0.0 || q_j >= 1.0 {
                    continue;
                }
                let mut hits = 0u64;
                for _ in 0..n_samples {
                    let x_i = conditional_component(spec, margins, i, q_j, rng);
                    if x_i.abs() > t {
                        hits += 1;
                    }
                }
                let p = hits as f64 / n_samples as f64;
                let se = (p * (1.0 - p) / n_samples as f64).sqrt();
                points.push(PsqaiPoint {
                    i,
                    j,
                    threshold: t,
                    estimate: p,
                    std_error: se,
                    conditioned_draws: n_samples,
                });
            }
        }
    }
    let mut pair_vanishing = Vec::new();
    for j in 0..n {
        for i in 0..n {
            if i == j {
                continue;
            }
            let series: Vec<&PsqaiPoint> = points
                .iter()
                .filter(|p| p.i == i && p.j == j)
                .collect();
            let ok = series.windows(2).all(|w| {
                w[1].estimate <= w[0].estimate + 3.0 * (w[0].std_error + w[1].std_error) + 1e-12
            }) && series
                .last()
                .map(|p| p.estimate <= series[0].estimate + 3.0 * p.std_error)
                .unwrap_or(false);
            pair_vanishing.push(((i, j), ok));
        }
    }
    Ok(PsqaiReport {
        points,
        pair_vanishing,
    })
}

/// Draws X_i from its exact conditional distribution given the conditioning
/// component landed in its upper tail event of mass `q_j`.
fn conditional_component<R: Rng>(
    spec: &DependenceSpec,
    margins: &[Distribution],
    i: usize,
    q_j: f64,
    rng: &mut R,
) -> f64 {
    // Tail level of the conditioned component, uniform within the event.
    let q_v = q_j * (1.0 - rng.gen::<f64>()).max(1e-300);
    match *spec {
        DependenceSpec::Independent => margins[i].sample(rng),
        DependenceSpec::Comonotone => margins[i].quantile_upper(q_v),
        DependenceSpec::Gaussian { rho } => {
            let z_j = inv_normal_sf(q_v);
            let z_i = rho * z_j + (1.0 - rho * rho).sqrt() * inv_normal_cdf(unit_open(rng));
            margins[i].quantile_upper(normal_sf(z_i).clamp(1e-300, 1.0 - 1e-16))
        }
        DependenceSpec::Fgm { theta } => {
            let v = 1.0 - q_v; // CDF coordinate of the conditioned component
            let w = unit_open(rng);
            let u_i = fgm_conditional_inverse(theta * (1.0 - 2.0 * v), w);
            margins[i].quantile_upper((1.0 - u_i).max(1e-300))
        }
    }
}

/// FGM joint survival `P(U > u, V > v) = (1-u)(1-v)(1 + theta u v)`.
pub fn fgm_survival(theta: f64, u: f64, v: f64) -> f64 {
    (1.0 - u) * (1.0 - v) * (1.0 + theta * u * v)
}

/// FGM conditional survival `P(U > u | V > v) = (1-u)(1 + theta u v)`.
pub fn fgm_conditional_survival(theta: f64, u: f64, v: f64) -> f64 {
    (1.0 - u) * (1.0 + theta * u * v)
}

/// Two-sided Kolmogorov-Smirnov distance of samples against an exact CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &mut [f64], cdf: F) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len() as f64;
    let mut d = 0.0f64;
    for (k, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - k as f64 / n).abs());
        d = d.max(((k + 1) as f64 / n - f).abs());
    }
    d
}

/// Asymptotic two-sided KS acceptance threshold at significance alpha.
pub fn ks_threshold(n_samples: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / 2.0).sqrt() / (n_samples as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::{block_rng, StreamDomain};
    use approx::assert_relative_eq;

    fn pareto2() -> Distribution {
        Distribution::pareto(2.0, 1.0).unwrap()
    }

    #[test]
    fn validation() {
        assert!(DependenceSpec::Gaussian { rho: 1.0 }.validate(2).is_err());
        assert!(DependenceSpec::Gaussian { rho: -0.5 }.validate(3).is_err());
        assert!(DependenceSpec::Gaussian { rho: 0.5 }.validate(5).is_ok());
        assert!(DependenceSpec::Fgm { theta: 1.5 }.validate(2).is_err());
        assert!(DependenceSpec::Fgm { theta: 0.5 }.validate(3).is_err());
        assert!(DependenceSpec::Independent.validate(4).is_ok());
    }

    #[test]
    fn serde_wire_format() {
        let g: DependenceSpec = serde_json::from_str(r#"{"kind":"gaussian","rho":0.5}"#).unwrap();
        assert_eq!(g, DependenceSpec::Gaussian { rho: 0.5 });
        let f: DependenceSpec = serde_json::from_str(r#"{"kind":"fgm","theta":0.5}"#).unwrap();
        assert_eq!(f, DependenceSpec::Fgm { theta: 0.5 });
        let i: DependenceSpec = serde_json::from_str(r#"{"kind":"independent"}"#).unwrap();
        assert_eq!(i, DependenceSpec::Independent);
    }

    #[test]
    fn independent_kind_equals_componentwise_sampling() {
        let margins = vec![pareto2(), pareto2()];
        let mut r1 = block_rng(5, StreamDomain::Sampling, 0);
        let mut out = Vec::new();
        sample_vector(&DependenceSpec::Independent, &margins, &mut r1, &mut out).unwrap();
        let mut r2 = block_rng(5, StreamDomain::Sampling, 0);
        let want = [
            margins[0].sample(&mut r2),
            margins[1].sample(&mut r2),
        ];
        // identical seed => identical componentwise draws
        assert_eq!(out[0], want[0].max(margins[0].support_left()));
        assert_eq!(out[1], want[1]);
    }

    #[test]
    fn fgm_survival_closed_form_against_mc() {
        // P(U > 0.9, V > 0.9) for theta = 1 is 0.01 * 1.81 = 0.0181.
        let theta = 1.0;
        let spec = DependenceSpec::Fgm { theta };
        let n = 1_000_000u64;
        let mut rng = block_rng(11, StreamDomain::Sampling, 0);
        let mut us = Vec::new();
        let mut hits = 0u64;
        for _ in 0..n {
            sample_copula_uniforms(&spec, 2, &mut rng, &mut us);
            if us[0] > 0.9 && us[1] > 0.9 {
                hits += 1;
            }
        }
        let p = hits as f64 / n as f64;
        let want = fgm_survival(theta, 0.9, 0.9);
        assert_relative_eq!(want, 0.0181, epsilon = 1e-12);
        let se = (want * (1.0 - want) / n as f64).sqrt();
        assert!(
            (p - want).abs() <= 3.0 * se,
            "p={p} want={want} 3se={}",
            3.0 * se
        );
    }

    #[test]
    fn gaussian_rho_zero_is_independent() {
        // Empirical rank correlation of 1e5 draws within 3 SE of 0.
        let spec = DependenceSpec::Gaussian { rho: 0.0 };
        let n = 100_000usize;
        let mut rng = block_rng(3, StreamDomain::Sampling, 0);
        let mut us = Vec::new();
        let mut sum = 0.0;
        for _ in 0..n {
            sample_copula_uniforms(&spec, 2, &mut rng, &mut us);
            sum += (us[0] - 0.5) * (us[1] - 0.5);
        }
        // Grade correlation = Cov / (1/12); its estimator has sd 1/sqrt(n).
        let corr = sum / n as f64 * 12.0;
        let se = 1.0 / (n as f64).sqrt();
        assert!(corr.abs() <= 3.0 * se, "corr={corr}, 3se={}", 3.0 * se);
    }

    #[test]
    fn marginals_preserved_under_every_kind() {
        let margins = vec![pareto2(), pareto2()];
        let n = 100_000;
        for (k, spec) in [
            DependenceSpec::Independent,
            DependenceSpec::Gaussian { rho: 0.5 },
            DependenceSpec::Gaussian { rho: -0.4 },
            DependenceSpec::Fgm { theta: 0.5 },
        ]
        .iter()
        .enumerate()
        {
            let mut rng = block_rng(100 + k as u64, StreamDomain::Sampling, 0);
            let mut out = Vec::new();
            let mut comp0 = Vec::with_capacity(n);
            let mut comp1 = Vec::with_capacity(n);
            for _ in 0..n {
                sample_vector(spec, &margins, &mut rng, &mut out).unwrap();
                comp0.push(out[0]);
                comp1.push(out[1]);
            }
            let thresh = ks_threshold(n, 1e-3);
            for (c, samples) in [comp0, comp1].iter_mut().enumerate() {
                let d = ks_statistic(samples, |x| margins[c].cdf(x));
                assert!(
                    d <= thresh,
                    "{spec:?} component {c}: KS distance {d} > {thresh}"
                );
            }
        }
    }

    #[test]
    fn psqai_independent_equals_marginal_tail() {
        let margins = vec![pareto2(), pareto2()];
        let mut rng = block_rng(21, StreamDomain::Diagnostic, 0);
        let report = psqai_diagnostic(
            &DependenceSpec::Independent,
            &margins,
            &[10.0],
            200_000,
            &mut rng,
        )
        .unwrap();
        for p in &report.points {
            assert!(
                (p.estimate - 0.01).abs() <= 3.0 * p.std_error,
                "estimate {} should match marginal 0.01",
                p.estimate
            );
        }
    }

    #[test]
    fn psqai_fgm_matches_conditional_closed_form() {
        // Conditional survival at u = v = 0.99 under theta = 0.5 is
        // 0.01 * (1 + 0.5 * 0.9801) = 0.0149005.
        let theta = 0.5;
        let margins = vec![pareto2(), pareto2()];
        let t = margins[0].quantile_upper(0.01); // u = v = 0.99
        let mut rng = block_rng(22, StreamDomain::Diagnostic, 0);
        let report = psqai_diagnostic(
            &DependenceSpec::Fgm { theta },
            &margins,
            &[t],
            400_000,
            &mut rng,
        )
        .unwrap();
        let want = fgm_conditional_survival(theta, 0.99, 0.99);
        assert_relative_eq!(want, 0.0149005, epsilon = 1e-10);
        for p in &report.points {
            assert!(
                (p.estimate - want).abs() <= 3.0 * p.std_error,
                "estimate {} vs closed form {want}",
                p.estimate
            );
        }
    }

    #[test]
    fn psqai_gaussian_decreases_toward_zero() {
        let margins = vec![pareto2(), pareto2()];
        let mut rng = block_rng(23, StreamDomain::Diagnostic, 0);
        let report = psqai_diagnostic(
            &DependenceSpec::Gaussian { rho: 0.5 },
            &margins,
            &[10.0, 100.0, 1000.0],
            1_000_000,
            &mut rng,
        )
        .unwrap();
        let series: Vec<f64> = report
            .points
            .iter()
            .filter(|p| p.i == 0 && p.j == 1)
            .map(|p| p.estimate)
            .collect();
        assert_eq!(series.len(), 3);
        assert!(
            series.windows(2).all(|w| w[1] < w[0]),
            "estimates should strictly decrease: {series:?}"
        );
        assert!(series[2] < 0.05, "final estimate {} should be < 0.05", series[2]);
        assert!(report.pair_vanishing.iter().all(|(_, ok)| *ok));
    }

    #[test]
    fn comonotone_negative_control_does_not_vanish() {
        let margins = vec![pareto2(), pareto2()];
        let mut rng = block_rng(24, StreamDomain::Diagnostic, 0);
        let report = psqai_diagnostic(
            &DependenceSpec::Comonotone,
            &margins,
            &[10.0, 100.0, 1000.0],
            100_000,
            &mut rng,
        )
        .unwrap();
        // P(X > t | Y > t) = 1 under comonotonicity.
        for p in &report.points {
            assert!(p.estimate > 0.9, "comonotone estimate {} should stay near 1", p.estimate);
        }
    }

    #[test]
    fn starved_diagnostic_is_rejected() {
        let margins = vec![pareto2(), pareto2()];
        let mut rng = block_rng(25, StreamDomain::Diagnostic, 0);
        let r = psqai_diagnostic(&DependenceSpec::Independent, &margins, &[10.0], 50, &mut rng);
        assert!(matches!(r, Err(DepError::InsufficientTailSamples { .. })));
    }
}
