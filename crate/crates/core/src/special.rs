//! Normal-tail special functions.
//!
//! Everything here works on the standard normal scale and is written so the
//! log channel stays accurate far past the point where the survival function
//! underflows. The lognormal marginal is the only consumer that needs this,
//! but it needs it badly: probe grids push `z` well beyond 37, where
//! `exp(-z^2/2)` is not representable.

use std::f64::consts::PI;

#[allow(clippy::excessive_precision)]
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_74;
const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// log of the standard normal density.
pub fn ln_normal_pdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// Standard normal survival function, accurate down to the underflow edge.
pub fn normal_sf(z: f64) -> f64 {
    if z > 37.7 {
        // Value underflows around here; keep continuity with the log channel.
        ln_normal_sf(z).exp()
    } else {
        0.5 * libm::erfc(z / SQRT_2)
    }
}

/// ln of the standard normal survival function.
///
/// For z <= 8 this is `ln(erfc(z/sqrt(2))/2)`. Beyond that the asymptotic
/// expansion `sf(z) = pdf(z)/z * (1 - 1/z^2 + 3/z^4 - ...)` truncated at its
/// smallest term is accurate to a few ulp (the series is alternating with
/// error below the first omitted term).
pub fn ln_normal_sf(z: f64) -> f64 {
    if z <= -8.0 {
        // sf(z) = 1 - sf(-z); sf(-z) is tiny here.
        return (-ln_normal_sf(-z).exp()).ln_1p();
    }
    if z <= 8.0 {
        return (0.5 * libm::erfc(z / SQRT_2)).ln();
    }
    let z2 = z * z;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut k = 0.0f64;
    loop {
        let next = -term * (2.0 * k + 1.0) / z2;
        if next.abs() >= term.abs() || next.abs() < 1e-20 * sum.abs() {
            break;
        }
        sum += next;
        term = next;
        k += 1.0;
    }
    ln_normal_pdf(z) - z.ln() + sum.ln()
}

/// Hazard rate of the standard normal, `pdf(z)/sf(z)`.
pub fn normal_hazard(z: f64) -> f64 {
    (ln_normal_pdf(z) - ln_normal_sf(z)).exp()
}

/// Inverse of the standard normal CDF on (0, 1).
///
/// Acklam's rational approximation seeded into Newton steps on the log-tail
/// scale, so the result is self-consistent with [`ln_normal_sf`] to machine
/// precision (this is what makes the quantile/CDF round-trip invariants hold
/// at tail levels like 1e-12).
pub fn inv_normal_cdf(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "inv_normal_cdf requires p in (0,1)");
    // Work on the upper-tail side: solve sf(z) = q with q <= 1/2.
    if p < 0.5 {
        -inv_normal_sf_ln(p.ln())
    } else {
        inv_normal_sf_ln((1.0 - p).ln())
    }
}

/// Inverse survival function: z with `sf(z) = q`.
pub fn inv_normal_sf(q: f64) -> f64 {
    assert!(q > 0.0 && q < 1.0, "inv_normal_sf requires q in (0,1)");
    if q <= 0.5 {
        inv_normal_sf_ln(q.ln())
    } else {
        -inv_normal_sf_ln((1.0 - q).ln())
    }
}

/// Inverse survival function from the log tail level: z with
/// `ln_normal_sf(z) = ln_q`. Accepts arbitrarily deep tails (ln_q < -700 is
/// fine). Requires `ln_q <= ln(1/2)`.
pub fn inv_normal_sf_ln(ln_q: f64) -> f64 {
    assert!(
        ln_q <= -std::f64::consts::LN_2 + 1e-12,
        "inv_normal_sf_ln requires ln_q <= ln(1/2), got {ln_q}"
    );
    let mut z = if ln_q > -700.0 {
        acklam_upper(ln_q.exp())
    } else {
        // Asymptotic seed: z ~ sqrt(-2 ln q - ln(2 pi) - ln(-2 ln q)).
        let t = -2.0 * ln_q;
        (t - (2.0 * PI).ln() - t.ln()).max(1.0).sqrt()
    };
    // ln sf is concave with derivative -hazard; Newton converges fast from
    // either side here.
    for _ in 0..6 {
        let f = ln_normal_sf(z) - ln_q;
        let h = normal_hazard(z);
        let step = f / h;
        z += step;
        if step.abs() <= 1e-15 * z.abs().max(1.0) {
            break;
        }
    }
    z
}

/// Acklam's inverse normal CDF approximation, upper-tail parameterization:
/// returns z with sf(z) ~= q for q in (0, 1/2]. Relative error ~1e-9; callers
/// refine.
#[allow(clippy::excessive_precision)]
fn acklam_upper(q: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;
    let p = 1.0 - q; // CDF probability, >= 1/2
    if q < P_LOW {
        let r = (-2.0 * q.ln()).sqrt();
        -(((((C[0] * r + C[1]) * r + C[2]) * r + C[3]) * r + C[4]) * r + C[5])
            / ((((D[0] * r + D[1]) * r + D[2]) * r + D[3]) * r + 1.0)
    } else {
        let r = p - 0.5;
        let s = r * r;
        (((((A[0] * s + A[1]) * s + A[2]) * s + A[3]) * s + A[4]) * s + A[5]) * r
            / (((((B[0] * s + B[1]) * s + B[2]) * s + B[3]) * s + B[4]) * s + 1.0)
    }
}

/// log(exp(a) + exp(b)) without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Numerically careful sum of many nonnegative terms (Neumaier variant of
/// Kahan summation). Used by the convolution oracle where the certificate
/// must dominate accumulation error.
#[derive(Debug, Clone, Copy, Default)]
pub struct StableSum {
    sum: f64,
    comp: f64,
}

impl StableSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    // Reference values computed with 50-digit arithmetic.
    #[allow(clippy::excessive_precision, clippy::approx_constant)]
    const LN_SF_REF: [(f64, f64); 12] = [
        (0.0, -0.6931471805599453),
        (0.5, -1.1759117615936186),
        (1.0, -1.8410216450092635),
        (2.0, -3.7831843336820319),
        (4.0, -10.360101486527291),
        (8.0, -35.013437159914550),
        (12.0, -75.410673001568796),
        (20.0, -203.91715537109726),
        (30.0, -454.32124395634320),
        (50.0, -1254.8313611394199),
        (100.0, -5005.5242086942051),
        (300.0, -45006.622732118663),
    ];

    #[test]
    fn ln_sf_matches_reference() {
        for &(z, want) in &LN_SF_REF {
            let got = ln_normal_sf(z);
            assert_relative_eq!(got, want, max_relative = 1e-13);
        }
    }

    #[test]
    fn sf_and_cdf_sum_to_one() {
        for z in [-5.0, -1.0, 0.0, 0.3, 1.0, 4.0, 8.0, 20.0] {
            let s = normal_sf(z) + normal_cdf(z);
            assert_relative_eq!(s, 1.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn inverse_matches_reference() {
        // (tail level q, z with sf(z)=q)
        let cases = [
            (1e-2, 2.3263478740408411),
            (1e-6, 4.7534243088228989),
            (1e-12, 7.0344838253011319),
        ];
        for (q, want) in cases {
            assert_relative_eq!(inv_normal_sf(q), want, max_relative = 1e-13);
        }
        // Deep tails through the log channel.
        assert_relative_eq!(
            inv_normal_sf_ln(-100.0 * std::f64::consts::LN_10),
            21.273453560965324,
            max_relative = 1e-13
        );
        assert_relative_eq!(
            inv_normal_sf_ln(-300.0 * std::f64::consts::LN_10),
            37.047096299361199,
            max_relative = 1e-13
        );
    }

    #[test]
    fn inverse_round_trips_on_ln_scale() {
        for ln_q in [-0.8, -2.0, -10.0, -50.0, -200.0, -700.0, -5000.0] {
            let z = inv_normal_sf_ln(ln_q);
            assert_relative_eq!(ln_normal_sf(z), ln_q, max_relative = 1e-12);
        }
    }

    #[test]
    fn inv_cdf_symmetry() {
        assert_relative_eq!(inv_normal_cdf(0.5), 0.0, epsilon = 1e-12);
        for p in [0.01, 0.2, 0.4] {
            assert_relative_eq!(inv_normal_cdf(p), -inv_normal_cdf(1.0 - p), epsilon = 1e-10);
        }
    }

    #[test]
    fn log_add_exp_basic() {
        let v = log_add_exp((0.3f64).ln(), (0.7f64).ln());
        assert_relative_eq!(v, 0.0, epsilon = 1e-14);
        assert_eq!(log_add_exp(f64::NEG_INFINITY, -1.0), -1.0);
    }

    #[test]
    fn stable_sum_of_many_small_terms() {
        let mut s = StableSum::new();
        for _ in 0..1_000_000 {
            s.add(1e-10);
        }
        assert_relative_eq!(s.value(), 1e-4, max_relative = 1e-12);
    }
}
