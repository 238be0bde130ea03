//! Smooth sensitivity of the data-dependent privacy cost, and the release
//! mechanism that publishes the cost with noise scaled to that sensitivity.
//!
//! The accountant's per-query cost is a function `M(q)` of the
//! mislabel-probability bound `q`, which in turn depends on the private vote
//! histogram. Publishing the composed cost therefore leaks; the remedy is to
//! add Gaussian noise scaled to a beta-smooth upper bound on the local
//! sensitivity of the cost. This module computes that bound exactly by
//! walking extremal histograms at increasing edit distance, composes it
//! across queries, and prices the final noisy release.

use crate::accountant::{compute_q, critical_q0, data_dependent_rdp_gaussian, gaussian_rdp_bound};
use crate::error::{PateError, Result};
use crate::histogram::VoteHistogram;
use crate::numerics::{erfc, erfc_inv};
use crate::rng::RandomSource;

/// Largest `q` reachable from `q` by adding one vote adversarially:
/// `B_U(q) = min{(m-1)/2 * erfc(erfcinv(2q/(m-1)) - 1/sigma), 1}`.
pub fn bu(q: f64, sigma: f64, m: usize) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    let half = (m - 1) as f64 / 2.0;
    (half * erfc(erfc_inv(q / half) - 1.0 / sigma)).min(1.0)
}

/// Smallest `q` reachable by removing one vote adversarially:
/// `B_L(q) = (m-1)/2 * erfc(erfcinv(2q/(m-1)) + 1/sigma)`; inverse of
/// [`bu`] wherever the latter does not clamp.
pub fn bl(q: f64, sigma: f64, m: usize) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    let half = (m - 1) as f64 / 2.0;
    half * erfc(erfc_inv(q / half) + 1.0 / sigma)
}

/// Precomputed quantities for smooth-sensitivity evaluation at one
/// `(sigma, lambda, m)` triple.
///
/// `q0` is the data-dependent applicability cutoff, `q1 = B_L(q0)` the lower
/// edge of the flat region of the local-sensitivity bound, and `flat_value`
/// the bound's constant value on `[q1, q0]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsParams {
    pub sigma: f64,
    pub lambda: f64,
    pub num_classes: usize,
    pub q0: f64,
    pub q1: f64,
    pub flat_value: f64,
    pub data_independent: f64,
}

impl SsParams {
    pub fn new(sigma: f64, lambda: f64, num_classes: usize) -> Result<SsParams> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(PateError::InvalidParameter(format!(
                "sigma must be positive and finite, got {sigma}"
            )));
        }
        if !(lambda > 1.0 && lambda.is_finite()) {
            return Err(PateError::InvalidParameter(format!(
                "order must be finite and > 1, got {lambda}"
            )));
        }
        if num_classes < 2 {
            return Err(PateError::InvalidParameter(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        let q0 = critical_q0(sigma, lambda);
        let q1 = bl(q0, sigma, num_classes);
        let mut params = SsParams {
            sigma,
            lambda,
            num_classes,
            q0,
            q1,
            flat_value: 0.0,
            data_independent: gaussian_rdp_bound(lambda, sigma),
        };
        params.flat_value = params.local_sensitivity_bound(q1);
        Ok(params)
    }

    /// Per-query RDP cost as a function of `q`, with the cutoff applied: the
    /// data-dependent bound for `q <= q0`, the generic bound above.
    pub fn rdp_of_q(&self, q: f64) -> f64 {
        if q > self.q0 {
            self.data_independent
        } else {
            data_dependent_rdp_gaussian(q, self.lambda, self.sigma).eps
        }
    }

    /// Upper bound on the local sensitivity of [`Self::rdp_of_q`] at `q`,
    /// interpolated constantly across the flat region `[q1, q0]`:
    /// `max{M(B_U(q)) - M(q), M(q) - M(B_L(q))}`.
    pub fn local_sensitivity_bound(&self, q: f64) -> f64 {
        let q = if self.q1 <= q && q <= self.q0 {
            self.q1
        } else {
            q
        };
        let here = self.rdp_of_q(q);
        let up = self.rdp_of_q(bu(q, self.sigma, self.num_classes));
        let down = self.rdp_of_q(bl(q, self.sigma, self.num_classes));
        (up - here).max(here - down).max(0.0)
    }
}

/// One entry of the distance walk: the local-sensitivity bound maximized over
/// histograms within distance `d`, and whether the walk has plateaued.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceStep {
    pub value: f64,
    pub stop: bool,
}

/// Maximum of the local-sensitivity bound over all histograms within edit
/// distance `d` of `h`, computed by walking the extremal histogram for the
/// relevant direction rather than enumerating.
///
/// Three regimes by where `q(h)` falls: inside the flat region the value is
/// already the global plateau; below it, shifting `d` votes from the top
/// class to the runner-up raises `q` the fastest; above it, granting the top
/// class `d` extra votes while repeatedly decrementing the current
/// runner-up lowers `q` the fastest. The walk stops as soon as the flat
/// region is reached (or the histogram degenerates), since the bound cannot
/// grow any further.
pub fn sensitivity_at_distance(
    params: &SsParams,
    h: &VoteHistogram,
    d: u64,
) -> Result<DistanceStep> {
    if h.num_classes() != params.num_classes {
        return Err(PateError::DimensionMismatch {
            expected: params.num_classes,
            got: h.num_classes(),
        });
    }
    let stop = |value: f64| DistanceStep { value, stop: true };
    let go = |value: f64| DistanceStep { value, stop: false };
    let s = h.sorted_desc();
    let q = compute_q(h, params.sigma).q;
    if params.q1 <= q && q <= params.q0 {
        return Ok(stop(params.flat_value));
    }
    if q < params.q1 {
        if s[0] - s[1] < 2 * d {
            return Ok(stop(params.flat_value));
        }
        let mut s2 = s;
        s2[0] -= d;
        s2[1] += d;
        let qp = sorted_q(&s2, params.sigma);
        if qp > params.q1 {
            return Ok(stop(params.flat_value));
        }
        Ok(go(params.local_sensitivity_bound(qp)))
    } else {
        let non_top: u64 = s[1..].iter().sum();
        if non_top <= d {
            // everything reachable: the extremal histogram is unanimous
            let mut unanimous = vec![0u64; s.len()];
            unanimous[0] = h.total();
            let qp = sorted_q(&unanimous, params.sigma);
            return Ok(stop(params.local_sensitivity_bound(qp)));
        }
        let mut s2 = s;
        s2[0] += d;
        for _ in 0..d {
            let mut j = 1;
            for (i, &c) in s2.iter().enumerate().skip(2) {
                if c > s2[j] {
                    j = i;
                }
            }
            s2[j] -= 1;
        }
        let qp = sorted_q(&s2, params.sigma);
        if qp < params.q0 {
            return Ok(stop(params.flat_value));
        }
        Ok(go(params.local_sensitivity_bound(qp)))
    }
}

fn sorted_q(counts: &[u64], sigma: f64) -> f64 {
    let h = VoteHistogram::new(counts.to_vec()).expect("walk preserves a valid histogram");
    compute_q(&h, sigma).q
}

/// The distance walk of one query: values `v_0..v_stop`, constant afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceSeries {
    pub values: Vec<f64>,
    pub stopped: bool,
}

/// Runs [`sensitivity_at_distance`] for `d = 0, 1, ...` until it signals the
/// plateau (hard-capped at `d = n`, where every same-total histogram is
/// already reachable).
pub fn distance_series(params: &SsParams, h: &VoteHistogram) -> Result<DistanceSeries> {
    let n = h.total();
    let mut values = Vec::new();
    let mut d = 0u64;
    loop {
        let step = sensitivity_at_distance(params, h, d)?;
        values.push(step.value);
        if step.stop || d >= n {
            return Ok(DistanceSeries {
                values,
                stopped: step.stop,
            });
        }
        d += 1;
    }
}

fn validate_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(PateError::InvalidParameter(format!(
            "beta must be positive and finite, got {beta}"
        )));
    }
    Ok(())
}

/// Beta-smooth upper bound on the local sensitivity of the per-query cost:
/// `max_d e^{-beta d} * sensitivity_at_distance(h, d)`.
pub fn smooth_sensitivity(params: &SsParams, h: &VoteHistogram, beta: f64) -> Result<f64> {
    validate_beta(beta)?;
    let series = distance_series(params, h)?;
    Ok(weighted_max(&series.values, beta))
}

/// Beta-smooth bound on the SUM of per-query costs: the per-distance maxima
/// add across queries (each series padded constantly past its plateau), and
/// the exponential weighting applies to the summed series.
pub fn sum_smooth_sensitivity(series: &[DistanceSeries], beta: f64) -> Result<f64> {
    validate_beta(beta)?;
    let d_max = series
        .iter()
        .map(|s| s.values.len().saturating_sub(1))
        .max()
        .unwrap_or(0);
    let mut best = 0.0f64;
    for d in 0..=d_max {
        let total: f64 = series
            .iter()
            .map(|s| s.values[d.min(s.values.len() - 1)])
            .sum();
        best = best.max(total * (-beta * d as f64).exp());
    }
    Ok(best)
}

fn weighted_max(values: &[f64], beta: f64) -> f64 {
    values
        .iter()
        .enumerate()
        .map(|(d, v)| v * (-beta * d as f64).exp())
        .fold(0.0, f64::max)
}

/// Diagnostic from the numeric shape checks that gate the release.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionReport {
    /// The data-dependent region is non-empty.
    pub q0_positive: bool,
    /// The cost `M(q)` is non-decreasing across `[0, q0]`.
    pub cost_monotone: bool,
    pub cost_min_diff: f64,
    pub cost_worst_q: f64,
    /// The one-step increase `M(B_U(q)) - M(q)` is non-decreasing on `[0, q1]`.
    pub gap_monotone: bool,
    pub gap_min_diff: f64,
    pub gap_worst_q: f64,
}

impl ConditionReport {
    pub fn passes(&self) -> bool {
        self.q0_positive && self.cost_monotone && self.gap_monotone
    }
}

const CONDITION_GRID: usize = 10_000;
const CONDITION_TOL: f64 = -1e-12;

/// Numerically verifies the two shape conditions the smooth-sensitivity
/// argument relies on, by minimizing forward differences over a 10^4-point
/// grid. Failure is reported as data; release pipelines must refuse on it.
pub fn check_conditions(params: &SsParams) -> ConditionReport {
    let q0_positive = params.q0 > 0.0;
    let scan = |hi: f64, f: &dyn Fn(f64) -> f64| -> (bool, f64, f64) {
        let mut min_diff = f64::INFINITY;
        let mut worst_q = 0.0;
        let mut prev = f(0.0);
        for i in 1..CONDITION_GRID {
            let q = hi * i as f64 / (CONDITION_GRID - 1) as f64;
            let cur = f(q);
            let diff = cur - prev;
            if diff < min_diff {
                min_diff = diff;
                worst_q = q;
            }
            prev = cur;
        }
        (min_diff >= CONDITION_TOL, min_diff, worst_q)
    };
    let (cost_monotone, cost_min_diff, cost_worst_q) = scan(params.q0, &|q| params.rdp_of_q(q));
    let (gap_monotone, gap_min_diff, gap_worst_q) = scan(params.q1, &|q| {
        params.rdp_of_q(bu(q, params.sigma, params.num_classes)) - params.rdp_of_q(q)
    });
    ConditionReport {
        q0_positive,
        cost_monotone,
        cost_min_diff,
        cost_worst_q,
        gap_monotone,
        gap_min_diff,
        gap_worst_q,
    }
}

/// Refuses smooth-sensitivity release unless the shape conditions hold and
/// every total `n` in the run keeps even the unanimous histogram inside the
/// data-dependent region (`q([n,0,...,0]) <= q0`).
pub fn ensure_releasable(params: &SsParams, totals: &[u64]) -> Result<()> {
    let report = check_conditions(params);
    if !report.passes() {
        return Err(PateError::ReleaseRefused(format!(
            "shape conditions fail at sigma={}, order={}: q0_positive={} cost_monotone={} \
             gap_monotone={} (worst gap diff {:.3e} at q={:.3e})",
            params.sigma,
            params.lambda,
            report.q0_positive,
            report.cost_monotone,
            report.gap_monotone,
            report.gap_min_diff,
            report.gap_worst_q,
        )));
    }
    let mut seen: Vec<u64> = Vec::new();
    for &n in totals {
        if seen.contains(&n) {
            continue;
        }
        seen.push(n);
        let mut unanimous = vec![0u64; params.num_classes];
        unanimous[0] = n;
        let q = sorted_q(&unanimous, params.sigma);
        if q > params.q0 {
            return Err(PateError::ReleaseRefused(format!(
                "unanimous histogram at n={} has q={:.6e} above the cutoff q0={:.6e}; \
                 the distance walk cannot leave the data-independent region",
                n, q, params.q0
            )));
        }
    }
    Ok(())
}

/// RDP cost of releasing one value with noise proportional to its beta-smooth
/// sensitivity: `lambda e^{2 beta} / sigma_ss^2 +
/// (beta lambda - ln(1 - 2 lambda beta)/2) / (lambda - 1)`, valid for
/// `1 < lambda < 1/(2 beta)`.
pub fn gnss_rdp_cost(lambda: f64, beta: f64, sigma_ss: f64) -> Result<f64> {
    validate_beta(beta)?;
    if !(sigma_ss > 0.0 && sigma_ss.is_finite()) {
        return Err(PateError::InvalidParameter(format!(
            "sigma_ss must be positive and finite, got {sigma_ss}"
        )));
    }
    if !(lambda > 1.0 && lambda < 1.0 / (2.0 * beta)) {
        return Err(PateError::InvalidParameter(format!(
            "order must satisfy 1 < order < 1/(2 beta); got order={lambda}, beta={beta}"
        )));
    }
    Ok(lambda * (2.0 * beta).exp() / (sigma_ss * sigma_ss)
        + (beta * lambda - 0.5 * (1.0 - 2.0 * lambda * beta).ln()) / (lambda - 1.0))
}

/// Rule-of-thumb smoothing parameter: `beta = 0.4 / lambda`.
pub fn default_beta(lambda: f64) -> f64 {
    0.4 / lambda
}

/// Rule-of-thumb release noise: midpoint of the recommended
/// `[2, 4] * sqrt((lambda + 1) / eps_hat)` range.
pub fn default_sigma_ss(lambda: f64, eps_hat: f64) -> f64 {
    3.0 * ((lambda + 1.0) / eps_hat).sqrt()
}

/// A privately released value together with its pricing.
///
/// Deliberately omits the smooth sensitivity and the realized noise scale:
/// both are data-dependent, so publishing them would leak. Only the noised
/// value and the data-independent surcharge parameters appear.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SanitizedCost {
    pub noised_value: f64,
    pub fixed_surcharge: f64,
    pub beta: f64,
    pub sigma_ss: f64,
}

/// Releases `value` with Gaussian noise scaled by its beta-smooth sensitivity
/// `ss`, and prices the release: surcharge = RDP cost of the release itself
/// plus the `ln(1/delta)/(lambda-1)` conversion share.
pub fn gnss_release(
    value: f64,
    ss: f64,
    lambda: f64,
    beta: f64,
    sigma_ss: f64,
    delta: f64,
    rng: &mut RandomSource,
) -> Result<SanitizedCost> {
    if !(ss >= 0.0 && ss.is_finite()) {
        return Err(PateError::InvalidParameter(format!(
            "smooth sensitivity must be non-negative and finite, got {ss}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(PateError::InvalidParameter(format!(
            "delta must be in (0, 1), got {delta}"
        )));
    }
    let rdp = gnss_rdp_cost(lambda, beta, sigma_ss)?;
    Ok(SanitizedCost {
        noised_value: value + ss * rng.standard_normal() * sigma_ss,
        fixed_surcharge: rdp + (1.0 / delta).ln() / (lambda - 1.0),
        beta,
        sigma_ss,
    })
}
