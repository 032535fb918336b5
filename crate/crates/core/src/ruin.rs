//! Discrete-time insurance risk model.
//!
//! Surplus recursion `U_0 = x, U_n = U_{n-1}(1 + r_n) - X_n` with
//! deterministic per-period rates and heavy-tailed net losses. Discounting
//! by `c_i = prod_{j<=i} (1 + r_j)^-1` turns finite-horizon ruin into the
//! running-maximum functional of a weighted sum:
//! `ruin by n  <=>  max_k sum_{i<=k} c_i X_i > x`,
//! so everything in `weighted_sums` applies with the discount factors as
//! weights. The asymptotic approximation is the single-big-jump sum.

use thiserror::Error;

use crate::dependence::DependenceSpec;
use crate::distributions::Distribution;
use crate::stream::{block_map_reduce, StreamDomain};
use crate::weighted_sums::{
    asymptotic_approx, big_jump_mc, functionals_from_terms, Functional, Method, SumError,
    TailEstimate, WeightedSumProblem,
};

#[derive(Debug, Error)]
pub enum RuinError {
    #[error("rates[{index}]: must be > -1, got {rate}")]
    BadRate { index: usize, rate: f64 },
    #[error("initial surplus must be finite and >= 0, got {0}")]
    BadSurplus(f64),
    #[error("rates ({rates}) and losses ({losses}) must both have horizon length")]
    HorizonMismatch { rates: usize, losses: usize },
    #[error("horizon must be >= 1")]
    EmptyHorizon,
    #[error("big-jump-assisted route needs independent nonnegative losses: {0}")]
    BigJumpUnavailable(&'static str),
    #[error(transparent)]
    Sum(#[from] SumError),
}

/// Finite-horizon risk model: initial surplus, per-period interest rates,
/// and the net-loss marginals with their dependence structure.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskModel {
    pub initial_surplus: f64,
    pub rates: Vec<f64>,
    pub losses: Vec<Distribution>,
    pub dependence: DependenceSpec,
}

impl RiskModel {
    pub fn new(
        initial_surplus: f64,
        rates: Vec<f64>,
        losses: Vec<Distribution>,
        dependence: DependenceSpec,
    ) -> Result<Self, RuinError> {
        if !initial_surplus.is_finite() || initial_surplus < 0.0 {
            return Err(RuinError::BadSurplus(initial_surplus));
        }
        if rates.is_empty() {
            return Err(RuinError::EmptyHorizon);
        }
        if rates.len() != losses.len() {
            return Err(RuinError::HorizonMismatch {
                rates: rates.len(),
                losses: losses.len(),
            });
        }
        for (index, &rate) in rates.iter().enumerate() {
            if !rate.is_finite() || rate <= -1.0 {
                return Err(RuinError::BadRate { index, rate });
            }
        }
        Ok(Self {
            initial_surplus,
            rates,
            losses,
            dependence,
        })
    }

    pub fn horizon(&self) -> usize {
        self.rates.len()
    }

    pub fn discount_factors(&self) -> Vec<f64> {
        discount_factors(&self.rates).expect("rates validated at construction")
    }

    /// The weighted-sum problem whose running-maximum tail is the ruin
    /// probability.
    pub fn as_weighted_sum(&self) -> Result<WeightedSumProblem, SumError> {
        WeightedSumProblem::new(
            self.losses.clone(),
            self.discount_factors(),
            self.dependence,
        )
    }
}

/// Discount factors `c_i = prod_{j<=i} (1 + r_j)^-1` with the running
/// product kept in log space.
pub fn discount_factors(rates: &[f64]) -> Result<Vec<f64>, RuinError> {
    let mut log_acc = 0.0f64;
    rates
        .iter()
        .enumerate()
        .map(|(index, &rate)| {
            if !rate.is_finite() || rate <= -1.0 {
                return Err(RuinError::BadRate { index, rate });
            }
            log_acc -= rate.ln_1p();
            Ok(log_acc.exp())
        })
        .collect()
}

/// Crude path-simulation estimate plus the per-path cross-check between the
/// discounted and the raw surplus recursion.
#[derive(Debug, Clone, Copy)]
pub struct RuinSimulation {
    pub estimate: TailEstimate,
    /// Paths where the discounted criterion and the surplus recursion
    /// disagreed (must be 0; a nonzero count signals a float-boundary path).
    pub recursion_mismatches: u64,
}

/// Monte Carlo ruin probability by path simulation. Every path evaluates
/// both the discounted criterion `max_k sum_{i<=k} c_i X_i > x` and the sign
/// test on the raw recursion, and the two must agree.
pub fn simulate_ruin(model: &RiskModel, n_paths: u64, seed: u64) -> RuinSimulation {
    let x = model.initial_surplus;
    let discounts = model.discount_factors();
    let margins = model.losses.clone();
    let dependence = model.dependence;
    let rates = model.rates.clone();

    let (hits, mismatches) = block_map_reduce(
        n_paths,
        seed,
        StreamDomain::Ruin,
        || (0u64, 0u64),
        |rng, acc| {
            let mut xs = Vec::new();
            crate::dependence::sample_vector(&dependence, &margins, rng, &mut xs)
                .expect("model validated at construction");
            let terms: Vec<f64> = xs.iter().zip(&discounts).map(|(l, c)| c * l).collect();
            let (_, max_partial, _) = functionals_from_terms(&terms);
            let ruined_discounted = max_partial > x;

            let mut surplus = x;
            let mut ruined_recursion = false;
            for (l, &r) in xs.iter().zip(&rates) {
                surplus = surplus * (1.0 + r) - l;
                if surplus < 0.0 {
                    ruined_recursion = true;
                    break;
                }
            }
            if ruined_discounted {
                acc.0 += 1;
            }
            if ruined_discounted != ruined_recursion {
                acc.1 += 1;
            }
        },
        |a, b| (a.0 + b.0, a.1 + b.1),
    );
    let value = hits as f64 / n_paths as f64;
    RuinSimulation {
        estimate: TailEstimate {
            value,
            std_error: (value * (1.0 - value) / n_paths as f64).sqrt(),
            method: Method::CrudeMc,
            replicates: n_paths,
            seed,
            error_bound: None,
        },
        recursion_mismatches: mismatches,
    }
}

/// Big-jump-assisted ruin estimate. For independent losses with nonnegative
/// support every discounted term is nonnegative, so the running maximum of
/// partial sums equals the full sum pathwise and the conditional
/// single-big-jump estimator for `P(sum c_i X_i > x)` estimates the ruin
/// probability itself, not just its asymptote.
pub fn simulate_ruin_big_jump(
    model: &RiskModel,
    n_replicates: u64,
    seed: u64,
) -> Result<TailEstimate, RuinError> {
    if !model.dependence.is_independent() {
        return Err(RuinError::BigJumpUnavailable("losses are dependent"));
    }
    if model.losses.iter().any(|d| d.support_left() < 0.0) {
        return Err(RuinError::BigJumpUnavailable(
            "a loss marginal puts mass on negative values",
        ));
    }
    let problem = model.as_weighted_sum()?;
    Ok(big_jump_mc(
        &problem,
        Functional::Sum,
        model.initial_surplus,
        n_replicates,
        seed,
    )?)
}

/// Asymptotic ruin approximation `sum_i P(c_i X_i > x)`: exact equivalence
/// holds for losses with dominated-varying long tails; for long-tailed-only
/// losses the equivalence is asserted between the ruin and sum functionals
/// and this quantity is reported without the equivalence claim.
pub fn ruin_asymptotic(model: &RiskModel, x: f64) -> f64 {
    let problem = model
        .as_weighted_sum()
        .expect("model validated at construction");
    asymptotic_approx(&problem, x)
}

/// Whether the big-jump asymptote is asserted by theory for these losses
/// (all declared in D ∩ L).
pub fn big_jump_asserted(model: &RiskModel) -> bool {
    model.losses.iter().all(|d| d.memberships().in_d_cap_l())
}

/// One row of the x-sweep emitted by the CLI.
#[derive(Debug, Clone, Copy)]
pub struct RuinSweepRow {
    pub x: f64,
    pub psi_hat: f64,
    pub se: f64,
    pub psi_asym: f64,
    pub ratio: f64,
}

/// Sweeps the surplus level, estimating ruin (big-jump route when available,
/// crude paths otherwise) against the asymptote.
pub fn ruin_sweep(
    model: &RiskModel,
    xs: &[f64],
    n_paths: u64,
    seed: u64,
) -> Result<Vec<RuinSweepRow>, RuinError> {
    xs.iter()
        .map(|&x| {
            let at_level = RiskModel {
                initial_surplus: x,
                ..model.clone()
            };
            let est = match simulate_ruin_big_jump(&at_level, n_paths, seed) {
                Ok(e) => e,
                Err(RuinError::BigJumpUnavailable(_)) => {
                    simulate_ruin(&at_level, n_paths, seed).estimate
                }
                Err(e) => return Err(e),
            };
            let psi_asym = ruin_asymptotic(&at_level, x);
            Ok(RuinSweepRow {
                x,
                psi_hat: est.value,
                se: est.std_error,
                psi_asym,
                ratio: est.value / psi_asym,
            })
        })
        .collect()
}
