//! Renyi-DP accounting: per-query costs, composition, and conversion to
//! (epsilon, delta)-DP.
//!
//! The central quantity is `q`, an upper bound on the probability that noisy
//! aggregation returns anything other than the plurality class. Queries where
//! the teachers agree strongly have tiny `q`, and the data-dependent bound
//! charges them far less than the generic Gaussian-mechanism cost `lambda /
//! sigma^2`; the accountant always reports the minimum of the two, so the
//! data-dependent analysis can only help.
//!
//! All `q`-dependent formulas are evaluated in log space: with vote gaps of
//! thousands of counts at moderate noise, `q` itself underflows `f64` while
//! `ln q` (of order -10^5) remains exact.

use crate::error::{PateError, Result};
use crate::histogram::{VoteHistogram, VoteRecord};
use crate::numerics::{ln_erfc, ln_sum_exp};
use crate::rng::RandomSource;

/// A mislabel-probability bound together with its exact logarithm.
///
/// `q` is clamped to `[0, 1]` and may underflow to 0; `ln_q` stays exact in
/// log space (`-inf` only when the bound is genuinely zero).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QValue {
    pub q: f64,
    pub ln_q: f64,
}

/// One per-order RDP bound and whether the data-dependent branch produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdpBound {
    pub eps: f64,
    pub data_dependent: bool,
}

/// Default order grid: {1.5, 1.75} plus the integers 2..=256.
pub fn default_order_grid() -> Vec<f64> {
    let mut grid = vec![1.5, 1.75];
    grid.extend((2..=256).map(|k| k as f64));
    grid
}

/// RDP of the Gaussian mechanism with sensitivity-1 statistics per class:
/// `(lambda, lambda / sigma^2)` for every order `lambda >= 1`.
pub fn gaussian_rdp_bound(lambda: f64, sigma: f64) -> f64 {
    debug_assert!(lambda >= 1.0 && sigma > 0.0);
    lambda / (sigma * sigma)
}

/// RDP cost of one noisy threshold comparison against the clean maximum
/// (Gaussian mechanism with global sensitivity 1): `lambda / (2 sigma1^2)`.
pub fn threshold_check_rdp(lambda: f64, sigma1: f64) -> f64 {
    debug_assert!(sigma1 > 0.0);
    lambda / (2.0 * sigma1 * sigma1)
}

fn q_from_ln_terms(ln_terms: &[f64]) -> QValue {
    // q = min(1/2 * sum_i erfc(gap_i / (2 sigma)), 1); each ln_terms entry is
    // ln erfc(gap_i / (2 sigma)).
    let ln_q = (f64::ln(0.5) + ln_sum_exp(ln_terms)).min(0.0);
    let linear: f64 = ln_terms.iter().map(|&t| t.exp()).sum();
    let q = (0.5 * linear).min(1.0);
    QValue { q, ln_q }
}

/// Probability bound that Gaussian noisy argmax misses the plurality class:
/// `q = min(1/2 * sum_{i != i*} erfc((n_{i*} - n_i) / (2 sigma)), 1)` with
/// `i*` the plurality index (lowest index on ties).
pub fn compute_q(h: &VoteHistogram, sigma: f64) -> QValue {
    debug_assert!(sigma > 0.0);
    let star = h.argmax();
    let top = h.counts()[star] as f64;
    let ln_terms: Vec<f64> = h
        .counts()
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != star)
        .map(|(_, &c)| ln_erfc((top - c as f64) / (2.0 * sigma)))
        .collect();
    q_from_ln_terms(&ln_terms)
}

/// Same bound for a real-valued score vector (used when the aggregated
/// statistic is the teacher-student difference rather than raw counts).
pub fn compute_q_real(values: &[f64], sigma: f64) -> QValue {
    debug_assert!(sigma > 0.0 && values.len() >= 2);
    let mut star = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[star] {
            star = i;
        }
    }
    let top = values[star];
    let ln_terms: Vec<f64> = values
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != star)
        .map(|(_, &v)| ln_erfc((top - v) / (2.0 * sigma)))
        .collect();
    q_from_ln_terms(&ln_terms)
}

/// Probability bound for Laplace noisy argmax with per-class noise
/// `Lap(1/gamma)`: `q = min(1, sum_{i != i*} (2 + gamma d_i) e^{-gamma d_i} / 4)`
/// with `d_i` the vote gap to the plurality class.
///
/// This tail bound is not derived in the same framework as the Gaussian one;
/// reports flag it as an external formula.
pub fn compute_q_laplace(h: &VoteHistogram, gamma: f64) -> QValue {
    debug_assert!(gamma > 0.0);
    let star = h.argmax();
    let top = h.counts()[star] as f64;
    let ln_terms: Vec<f64> = h
        .counts()
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != star)
        .map(|(_, &c)| {
            let gd = gamma * (top - c as f64);
            (2.0 + gd).ln() - f64::ln(4.0) - gd
        })
        .collect();
    let ln_q = ln_sum_exp(&ln_terms).min(0.0);
    let linear: f64 = ln_terms.iter().map(|&t| t.exp()).sum();
    QValue {
        q: linear.min(1.0),
        ln_q,
    }
}

/// Data-dependent RDP bound for Gaussian noisy argmax, given `ln q`.
///
/// The bound interpolates between two Gaussian-mechanism guarantees at
/// auxiliary orders `mu1 = mu2 + 1` and `mu2 = sigma * sqrt(ln(1/q))` (the
/// minimizing choice), and applies only while `q < 1`, `mu2 > 1`,
/// `mu1 >= lambda`, and
/// `ln q <= (mu2 - 1) eps2 - mu2 (ln(mu1/(mu1-1)) + ln(mu2/(mu2-1)))`.
/// Whenever any condition fails — or the formula fails to beat it — the
/// generic bound `lambda / sigma^2` is returned with the flag cleared.
pub fn data_dependent_rdp_gaussian_ln(ln_q: f64, lambda: f64, sigma: f64) -> RdpBound {
    let ind = gaussian_rdp_bound(lambda, sigma);
    let fallback = RdpBound {
        eps: ind,
        data_dependent: false,
    };
    if ln_q == f64::NEG_INFINITY {
        // q = 0: the mechanism is deterministic on this input; zero cost.
        return RdpBound {
            eps: 0.0,
            data_dependent: true,
        };
    }
    if ln_q.is_nan() || ln_q >= 0.0 || lambda <= 1.0 {
        return fallback;
    }
    let mu2 = sigma * (-ln_q).sqrt();
    if mu2 <= 1.0 {
        return fallback;
    }
    let mu1 = mu2 + 1.0;
    if mu1 < lambda {
        return fallback;
    }
    let sigma_sq = sigma * sigma;
    let eps1 = mu1 / sigma_sq;
    let eps2 = mu2 / sigma_sq;
    let rhs = (mu2 - 1.0) * eps2 - mu2 * ((mu1 / (mu1 - 1.0)).ln() + (mu2 / (mu2 - 1.0)).ln());
    if ln_q > rhs {
        return fallback;
    }
    // First term: (1-q) A^{lambda-1} with A = (1-q) / (1 - (q e^{eps2})^{(mu2-1)/mu2});
    // requires t = (q e^{eps2})^{(mu2-1)/mu2} < 1.
    let ln_t = (ln_q + eps2) * (mu2 - 1.0) / mu2;
    if ln_t >= 0.0 {
        return fallback;
    }
    let q = ln_q.exp();
    let ln_term_a = lambda * (-q).ln_1p() - (lambda - 1.0) * (-ln_t.exp()).ln_1p();
    // Second term in log space: q B^{lambda-1} with B = e^{eps1} / q^{1/(mu1-1)}.
    let ln_term_b = ln_q * (1.0 - (lambda - 1.0) / (mu1 - 1.0)) + eps1 * (lambda - 1.0);
    if ln_term_b >= (lambda - 1.0) * ind {
        // the second term alone already exceeds e^{(lambda-1) * ind}
        return fallback;
    }
    let total = f64::exp_m1(ln_term_a) + ln_term_b.exp();
    let eps = (f64::ln_1p(total) / (lambda - 1.0)).max(0.0);
    if eps <= ind {
        RdpBound {
            eps,
            data_dependent: true,
        }
    } else {
        fallback
    }
}

/// [`data_dependent_rdp_gaussian_ln`] taking `q` in linear space.
pub fn data_dependent_rdp_gaussian(q_tilde: f64, lambda: f64, sigma: f64) -> RdpBound {
    debug_assert!((0.0..=1.0).contains(&q_tilde));
    if q_tilde <= 0.0 {
        return RdpBound {
            eps: 0.0,
            data_dependent: true,
        };
    }
    data_dependent_rdp_gaussian_ln(q_tilde.ln(), lambda, sigma)
}

fn data_dependent_rdp_pure_flagged(q_tilde: f64, lambda: f64, eps0: f64) -> RdpBound {
    debug_assert!((0.0..=1.0).contains(&q_tilde) && eps0 >= 0.0);
    // A pure eps0-DP mechanism is (lambda, eps0)-RDP at every order.
    let cap = RdpBound {
        eps: eps0,
        data_dependent: false,
    };
    if q_tilde <= 0.0 {
        return RdpBound {
            eps: 0.0,
            data_dependent: true,
        };
    }
    if lambda <= 1.0 {
        return cap;
    }
    let u = q_tilde * eps0.exp();
    if u >= 1.0 {
        return cap;
    }
    // (1-q) A^{lambda-1} + q B^{lambda-1} with A = (1-q)/(1-q e^{eps0}),
    // B = e^{eps0}; the second term in log space.
    let ln_term_a = lambda * (-q_tilde).ln_1p() - (lambda - 1.0) * (-u).ln_1p();
    let ln_term_b = q_tilde.ln() + eps0 * (lambda - 1.0);
    let total = f64::exp_m1(ln_term_a) + ln_term_b.exp();
    let eps = (f64::ln_1p(total) / (lambda - 1.0)).max(0.0);
    if eps <= eps0 {
        RdpBound {
            eps,
            data_dependent: true,
        }
    } else {
        cap
    }
}

/// Data-dependent RDP bound in the pure-DP limit: the underlying per-query
/// mechanism satisfies eps0-DP outright (Laplace aggregation with
/// `eps0 = 2 gamma`), and small `q` sharpens it. Capped at `eps0`.
pub fn data_dependent_rdp_pure(q_tilde: f64, lambda: f64, eps0: f64) -> f64 {
    data_dependent_rdp_pure_flagged(q_tilde, lambda, eps0).eps
}

/// Largest `q0 <= 0.5` such that the data-dependent bound applies (and beats
/// the generic bound) for every `q <= q0`, found by bisection; 0 when no such
/// `q` exists for this `(sigma, lambda)`.
///
/// The applicable region is downward-closed in `q`: every condition of
/// [`data_dependent_rdp_gaussian_ln`] only relaxes as `q` shrinks.
pub fn critical_q0(sigma: f64, lambda: f64) -> f64 {
    let used = |q: f64| data_dependent_rdp_gaussian_ln(q.ln(), lambda, sigma).data_dependent;
    if used(0.5) {
        return 0.5;
    }
    let mut lo = 0.0_f64;
    let mut hi = 0.5_f64;
    for _ in 0..90 {
        let mid = 0.5 * (lo + hi);
        if used(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// The accountant's per-query cost as a function of `q` with the critical
/// cutoff applied: the data-dependent bound for `q <= q0`, and the generic
/// `lambda / sigma^2` outright above. This is the `M(q)` whose smooth
/// sensitivity the release pipeline computes.
pub fn rdp_bound_with_cutoff(ln_q: f64, lambda: f64, sigma: f64, q0: f64) -> RdpBound {
    if ln_q.exp() > q0 {
        RdpBound {
            eps: gaussian_rdp_bound(lambda, sigma),
            data_dependent: false,
        }
    } else {
        data_dependent_rdp_gaussian_ln(ln_q, lambda, sigma)
    }
}

/// Per-query ledger entry: cost at every tracked order plus which orders used
/// the data-dependent branch.
#[derive(Debug, Clone)]
pub struct QueryCost {
    pub id: String,
    pub q: f64,
    pub answered: bool,
    pub eps_by_order: Vec<f64>,
    pub data_dependent: Vec<bool>,
}

/// Cumulative RDP at every tracked order.
#[derive(Debug, Clone, PartialEq)]
pub struct RdpCurve {
    pub orders: Vec<f64>,
    pub eps: Vec<f64>,
    pub query_count: usize,
}

/// Final (epsilon, delta)-DP guarantee and the order achieving it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpGuarantee {
    pub epsilon: f64,
    pub delta: f64,
    pub order: f64,
}

/// Sums per-query costs order-wise. All costs must share the order grid.
pub fn compose(orders: &[f64], costs: &[QueryCost]) -> Result<RdpCurve> {
    let mut eps = vec![0.0; orders.len()];
    for c in costs {
        if c.eps_by_order.len() != orders.len() {
            return Err(PateError::DimensionMismatch {
                expected: orders.len(),
                got: c.eps_by_order.len(),
            });
        }
        for (acc, &e) in eps.iter_mut().zip(&c.eps_by_order) {
            *acc += e;
        }
    }
    Ok(RdpCurve {
        orders: orders.to_vec(),
        eps,
        query_count: costs.len(),
    })
}

/// Converts an RDP curve to an (epsilon, delta)-DP guarantee:
/// `epsilon = min_lambda (eps_lambda + ln(1/delta) / (lambda - 1))`.
pub fn to_dp(curve: &RdpCurve, delta: f64) -> Result<DpGuarantee> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(PateError::InvalidParameter(format!(
            "delta must be in (0, 1), got {delta}"
        )));
    }
    if curve.orders.is_empty() {
        return Err(PateError::InvalidParameter("empty order grid".to_string()));
    }
    let ln_inv_delta = -delta.ln();
    let mut best_eps = f64::INFINITY;
    let mut best_order = curve.orders[0];
    for (&lambda, &e) in curve.orders.iter().zip(&curve.eps) {
        if lambda <= 1.0 {
            continue;
        }
        let total = e + ln_inv_delta / (lambda - 1.0);
        if total < best_eps {
            best_eps = total;
            best_order = lambda;
        }
    }
    if !best_eps.is_finite() {
        return Err(PateError::InvalidParameter(
            "order grid has no order > 1".to_string(),
        ));
    }
    Ok(DpGuarantee {
        epsilon: best_eps,
        delta,
        order: best_order,
    })
}

/// Mechanism configuration for a noise-free accounting run.
#[derive(Debug, Clone)]
pub enum AnalysisMechanism {
    GnMax {
        sigma: f64,
    },
    LnMax {
        gamma: f64,
    },
    Confident {
        threshold: f64,
        sigma1: f64,
        sigma2: f64,
    },
    Interactive {
        threshold: f64,
        sigma1: f64,
        sigma2: f64,
    },
}

/// Full accounting output for one run.
#[derive(Debug, Clone)]
pub struct AnalysisReport {
    pub per_query: Vec<QueryCost>,
    pub curve: RdpCurve,
    pub dp: DpGuarantee,
}

/// Runs the accounting pipeline over a sequence of vote histograms.
///
/// Plain GnMax/LnMax answer every query. The thresholded mechanisms pay the
/// threshold-check cost `lambda / (2 sigma1^2)` on every query and the
/// data-dependent answer cost only on queries passing the noisy threshold;
/// the passing set is fixed by `seed` (one threshold draw per query, derived
/// per row index, matching the aggregation front end). The interactive
/// mechanism thresholds and answers on the teacher-student difference vector
/// `n_j - M p_j`, with `student_probs` aligned to `votes` by position; its
/// reinforce branch reads only public student predictions and adds no RDP
/// cost beyond the threshold check.
pub fn analyze_run(
    votes: &[VoteRecord],
    mechanism: &AnalysisMechanism,
    orders: &[f64],
    delta: f64,
    seed: u64,
    student_probs: Option<&[Vec<f64>]>,
) -> Result<AnalysisReport> {
    validate_orders(orders)?;
    if let AnalysisMechanism::Interactive { .. } = mechanism {
        let probs = student_probs.ok_or_else(|| {
            PateError::InvalidParameter(
                "interactive analysis requires student probabilities".to_string(),
            )
        })?;
        if probs.len() != votes.len() {
            return Err(PateError::DimensionMismatch {
                expected: votes.len(),
                got: probs.len(),
            });
        }
    }
    let mut per_query = Vec::with_capacity(votes.len());
    for (idx, rec) in votes.iter().enumerate() {
        let h = &rec.histogram;
        let cost = match mechanism {
            AnalysisMechanism::GnMax { sigma } => {
                let qv = compute_q(h, *sigma);
                per_order_costs(&rec.id, qv, true, 0.0, orders, |lambda| {
                    data_dependent_rdp_gaussian_ln(qv.ln_q, lambda, *sigma)
                })
            }
            AnalysisMechanism::LnMax { gamma } => {
                let qv = compute_q_laplace(h, *gamma);
                let eps0 = 2.0 * gamma;
                per_order_costs(&rec.id, qv, true, 0.0, orders, |lambda| {
                    data_dependent_rdp_pure_flagged(qv.q, lambda, eps0)
                })
            }
            AnalysisMechanism::Confident {
                threshold,
                sigma1,
                sigma2,
            } => {
                let mut rng = RandomSource::for_query(seed, idx as u64);
                let answered = h.max_count() as f64 + sigma1 * rng.standard_normal() >= *threshold;
                let qv = compute_q(h, *sigma2);
                thresholded_costs(&rec.id, qv, answered, *sigma1, orders, |lambda| {
                    data_dependent_rdp_gaussian_ln(qv.ln_q, lambda, *sigma2)
                })
            }
            AnalysisMechanism::Interactive {
                threshold,
                sigma1,
                sigma2,
            } => {
                let probs = &student_probs.unwrap()[idx];
                if probs.len() != h.num_classes() {
                    return Err(PateError::DimensionMismatch {
                        expected: h.num_classes(),
                        got: probs.len(),
                    });
                }
                let total = h.total() as f64;
                let diffs: Vec<f64> = h
                    .counts()
                    .iter()
                    .zip(probs)
                    .map(|(&c, &p)| c as f64 - total * p)
                    .collect();
                let max_diff = diffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut rng = RandomSource::for_query(seed, idx as u64);
                let answered = max_diff + sigma1 * rng.standard_normal() >= *threshold;
                let qv = compute_q_real(&diffs, *sigma2);
                thresholded_costs(&rec.id, qv, answered, *sigma1, orders, |lambda| {
                    data_dependent_rdp_gaussian_ln(qv.ln_q, lambda, *sigma2)
                })
            }
        };
        per_query.push(cost);
    }
    let curve = compose(orders, &per_query)?;
    let dp = if per_query.is_empty() {
        // Empty-ledger convention: no queries cost nothing; the minimizing
        // order is reported as the largest tracked one.
        DpGuarantee {
            epsilon: 0.0,
            delta,
            order: *orders.last().unwrap(),
        }
    } else {
        to_dp(&curve, delta)?
    };
    Ok(AnalysisReport {
        per_query,
        curve,
        dp,
    })
}

pub fn validate_orders(orders: &[f64]) -> Result<()> {
    if orders.is_empty() {
        return Err(PateError::InvalidParameter(
            "order grid must be non-empty".to_string(),
        ));
    }
    for &o in orders {
        if !(o > 1.0 && o.is_finite()) {
            return Err(PateError::InvalidParameter(format!(
                "orders must be finite and > 1, got {o}"
            )));
        }
    }
    Ok(())
}

fn per_order_costs(
    id: &str,
    qv: QValue,
    answered: bool,
    threshold_eps_scale: f64,
    orders: &[f64],
    bound: impl Fn(f64) -> RdpBound,
) -> QueryCost {
    let mut eps_by_order = Vec::with_capacity(orders.len());
    let mut data_dependent = Vec::with_capacity(orders.len());
    for &lambda in orders {
        let b = bound(lambda);
        eps_by_order.push(lambda * threshold_eps_scale + b.eps);
        data_dependent.push(b.data_dependent);
    }
    QueryCost {
        id: id.to_string(),
        q: qv.q,
        answered,
        eps_by_order,
        data_dependent,
    }
}

fn thresholded_costs(
    id: &str,
    qv: QValue,
    answered: bool,
    sigma1: f64,
    orders: &[f64],
    bound: impl Fn(f64) -> RdpBound,
) -> QueryCost {
    // every query pays lambda/(2 sigma1^2); answered ones add the answer cost
    let scale = 1.0 / (2.0 * sigma1 * sigma1);
    if answered {
        per_order_costs(id, qv, true, scale, orders, bound)
    } else {
        per_order_costs(id, qv, false, scale, orders, |_| RdpBound {
            eps: 0.0,
            data_dependent: false,
        })
    }
}
