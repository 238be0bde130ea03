//! End-to-end acceptance checks.
//!
//! Each test prints one `criterion N: PASS` line on success; failures panic
//! with a matching `criterion N: FAIL` message. Run with `--nocapture` to see
//! the lines for passing criteria. Criterion 10 needs an external data file
//! and is skipped (with a printed note) unless `PATE_MNIST_VOTES_CSV` is set.

// the brute-force grids index by histogram gap on purpose
#![allow(clippy::needless_range_loop)]

use std::path::Path;

use pate::accountant::{
    analyze_run, compose, compute_q, critical_q0, data_dependent_rdp_gaussian, default_order_grid,
    gaussian_rdp_bound, rdp_bound_with_cutoff, to_dp, AnalysisMechanism, QueryCost,
};
use pate::histogram::{distance, read_votes_csv, VoteHistogram};
use pate::mechanisms::gnmax;
use pate::rng::RandomSource;
use pate::simulation::{sweep, EnsembleModel, SweepMechanism};
use pate::smooth_sensitivity::{check_conditions, gnss_rdp_cost, smooth_sensitivity, SsParams};

#[test]
fn criterion_01_gnss_surcharge_value() {
    let cost = gnss_rdp_cost(14.0, 0.0329, 6.23).unwrap();
    assert!(
        (0.513..=0.523).contains(&cost),
        "criterion 1: FAIL — gnss_rdp_cost(14, 0.0329, 6.23) = {cost}, outside [0.513, 0.523]"
    );
    println!("criterion 1: PASS");
}

#[test]
fn criterion_02_fixed_part_arithmetic() {
    // The published fixed part 2.52 is the sum 1.18 + release surcharge +
    // log(1e5)/divisor, where the divisor is ambiguous between the order 14
    // and order-minus-one 13. 2.52 must lie within the bracket the two
    // divisors span, widened by 0.01 for the source's 2-decimal rounding.
    let surcharge = gnss_rdp_cost(14.0, 0.0329, 6.23).unwrap();
    let total = |divisor: f64| 1.18 + surcharge + (1e5f64).ln() / divisor;
    let t13 = total(13.0);
    let t14 = total(14.0);
    let lo = t13.min(t14) - 0.01;
    let hi = t13.max(t14) + 0.01;
    assert!(
        lo <= 2.52 && 2.52 <= hi,
        "criterion 2: FAIL — 2.52 outside [{lo}, {hi}] (totals {t14} and {t13})"
    );
    println!("criterion 2: PASS");
}

#[test]
fn criterion_03_mislabel_bound_monte_carlo() {
    const TRIALS: u64 = 100_000;
    let mut gen = RandomSource::from_seed(0x5EEDC3);
    for case in 0..50u64 {
        let m = 2 + gen.below(9) as usize; // 2..=10 classes
        let n = 1 + gen.below(1000); // 1..=1000 teachers
        let sigma = 10.0 + 190.0 * gen.uniform();
        // pin a random share of votes to class 0, scatter the rest, so the
        // cases range from near-unanimous to near-uniform
        let mut counts = vec![0u64; m];
        counts[0] = (n as f64 * gen.uniform()) as u64;
        for _ in 0..(n - counts[0]) {
            counts[gen.below(m as u64) as usize] += 1;
        }
        let h = VoteHistogram::new(counts).unwrap();
        let plurality = h.argmax();
        let q = compute_q(&h, sigma).q;

        let mut mislabels = 0u64;
        let mut rng = RandomSource::from_seed(0xA11_0000 + case);
        for _ in 0..TRIALS {
            if gnmax(&h, sigma, &mut rng).unwrap() != plurality {
                mislabels += 1;
            }
        }
        let freq = mislabels as f64 / TRIALS as f64;
        let se = (q * (1.0 - q) / TRIALS as f64).max(0.0).sqrt();
        assert!(
            freq <= q + 3.0 * se,
            "criterion 3: FAIL — case {case} (m={m}, n={n}, sigma={sigma:.2}): \
             mislabel frequency {freq} exceeds q + 3se = {}",
            q + 3.0 * se
        );
    }
    println!("criterion 3: PASS");
}

/// All 3-class histograms with the given total, as ordered count triples.
fn all_triples(total: u64) -> Vec<[u64; 3]> {
    let mut out = Vec::new();
    for a in 0..=total {
        for b in 0..=(total - a) {
            out.push([a, b, total - a - b]);
        }
    }
    out
}

fn sorted3(v: [u64; 3]) -> [u64; 3] {
    let mut s = v;
    s.sort_unstable_by(|a, b| b.cmp(a));
    s
}

/// Mislabel bound q for a 3-class histogram with sorted gaps (g2, g3),
/// evaluated through the same code path the sensitivity walk uses.
fn q_of_gaps(g2: u64, g3: u64, sigma: f64) -> f64 {
    let h = VoteHistogram::new(vec![g3 + 1, g3 + 1 - g2, 1]).unwrap();
    compute_q(&h, sigma).q
}

const SS_SIGMA: f64 = 2.5;
const SS_LAMBDA: f64 = 3.0;
const SS_TOTAL: u64 = 12;
const SS_BETAS: [f64; 3] = [0.02, 0.05, 0.1];

#[test]
fn criterion_04_smooth_sensitivity_brute_force() {
    // Exhaustive reference: enumerate every 3-class histogram reachable
    // within DMAX vote moves (allowing adds and removes, so entries range up
    // to n + DMAX), bucket the local-sensitivity envelope by distance, and
    // take max_d e^{-beta d} * max_{dist<=d} LS. DMAX is sound when even the
    // globally largest LS, discounted past the horizon, cannot beat the
    // truncated optimum; that is asserted per histogram.
    const DMAX: usize = 34;
    let hi = SS_TOTAL as usize + DMAX;
    let box_hi = hi + 20;

    let params = SsParams::new(SS_SIGMA, SS_LAMBDA, 3).unwrap();
    assert!(
        check_conditions(&params).passes(),
        "criterion 4: FAIL — shape conditions unexpectedly fail at the reference parameters"
    );

    let mut ls_gap = vec![vec![0.0f64; box_hi + 1]; box_hi + 1];
    let mut ls_global = 0.0f64;
    for g3 in 0..=box_hi {
        for g2 in 0..=g3 {
            let v = params.local_sensitivity_bound(q_of_gaps(g2 as u64, g3 as u64, SS_SIGMA));
            ls_gap[g2][g3] = v;
            ls_global = ls_global.max(v);
        }
    }

    for base in all_triples(SS_TOTAL) {
        let n0 = sorted3(base);
        let mut per_dist = [0.0f64; DMAX + 1];
        for a in 0..=hi {
            for b in 0..=hi {
                for c in 0..=hi {
                    let cand = [a as u64, b as u64, c as u64];
                    let mut inc = 0u64;
                    let mut dec = 0u64;
                    for (x, y) in cand.iter().zip(&n0) {
                        inc += x.saturating_sub(*y);
                        dec += y.saturating_sub(*x);
                    }
                    let dist = inc.max(dec) as usize;
                    if dist > DMAX {
                        continue;
                    }
                    let s = sorted3(cand);
                    let v = ls_gap[(s[0] - s[1]) as usize][(s[0] - s[2]) as usize];
                    if v > per_dist[dist] {
                        per_dist[dist] = v;
                    }
                }
            }
        }
        for d in 1..=DMAX {
            per_dist[d] = per_dist[d].max(per_dist[d - 1]);
        }
        let h = VoteHistogram::new(base.to_vec()).unwrap();
        for beta in SS_BETAS {
            let mut brute = 0.0f64;
            for (d, &v) in per_dist.iter().enumerate() {
                brute = brute.max(v * (-beta * d as f64).exp());
            }
            let tail = ls_global * (-beta * (DMAX as f64 + 1.0)).exp();
            assert!(
                tail <= brute,
                "criterion 4: FAIL — truncation horizon too short at {base:?}, beta={beta}"
            );
            let algo = smooth_sensitivity(&params, &h, beta).unwrap();
            assert!(
                (algo - brute).abs() <= 1e-9,
                "criterion 4: FAIL — {base:?} beta={beta}: algorithm {algo} vs brute force {brute}"
            );
        }
    }
    println!("criterion 4: PASS");
}

#[test]
fn criterion_05_smoothness_property() {
    let params = SsParams::new(SS_SIGMA, SS_LAMBDA, 3).unwrap();
    let triples = all_triples(SS_TOTAL);
    let hists: Vec<VoteHistogram> = triples
        .iter()
        .map(|t| VoteHistogram::new(t.to_vec()).unwrap())
        .collect();
    let costs: Vec<f64> = hists
        .iter()
        .map(|h| params.rdp_of_q(compute_q(h, SS_SIGMA).q))
        .collect();
    for beta in SS_BETAS {
        let ss: Vec<f64> = hists
            .iter()
            .map(|h| smooth_sensitivity(&params, h, beta).unwrap())
            .collect();
        let growth = beta.exp();
        for i in 0..hists.len() {
            for j in 0..hists.len() {
                if i == j || distance(&hists[i], &hists[j]).unwrap() != 1 {
                    continue;
                }
                assert!(
                    ss[i] <= growth * ss[j] * (1.0 + 1e-12),
                    "criterion 5: FAIL — smoothness violated at {:?} -> {:?}, beta={beta}: \
                     {} > e^beta * {}",
                    triples[i],
                    triples[j],
                    ss[i],
                    ss[j]
                );
                let jump = (costs[i] - costs[j]).abs();
                assert!(
                    ss[i] >= jump - 1e-12,
                    "criterion 5: FAIL — {:?} -> {:?}, beta={beta}: SS {} below cost jump {jump}",
                    triples[i],
                    triples[j],
                    ss[i]
                );
            }
        }
    }
    println!("criterion 5: PASS");
}

#[test]
fn criterion_06_accountant_dominance_and_monotonicity() {
    let mut gen = RandomSource::from_seed(0x5EEDC6);
    for i in 0..10_000u32 {
        let sigma = 10.0 * 20.0f64.powf(gen.uniform());
        let lambda = 1.5 + 62.5 * gen.uniform();
        let q = gen.uniform();
        let bound = data_dependent_rdp_gaussian(q, lambda, sigma);
        let cap = gaussian_rdp_bound(lambda, sigma);
        assert!(
            bound.eps <= cap * (1.0 + 1e-12),
            "criterion 6: FAIL — triple {i} (q={q}, lambda={lambda}, sigma={sigma}): \
             data-dependent {} exceeds lambda/sigma^2 = {cap}",
            bound.eps
        );
    }
    for i in 0..100u32 {
        let sigma = 10.0 * 20.0f64.powf(gen.uniform());
        let lambda = 1.5 + 62.5 * gen.uniform();
        let q0 = critical_q0(sigma, lambda);
        const STEPS: usize = 200;
        let mut prev = 0.0f64;
        for j in 0..=STEPS {
            let q = q0 * j as f64 / STEPS as f64;
            let eps = rdp_bound_with_cutoff(q.ln(), lambda, sigma, q0).eps;
            if j > 0 {
                assert!(
                    eps - prev >= -1e-12,
                    "criterion 6: FAIL — pair {i} (lambda={lambda}, sigma={sigma}): \
                     bound decreases from {prev} to {eps} at q={q}"
                );
            }
            prev = eps;
        }
    }
    println!("criterion 6: PASS");
}

#[test]
fn criterion_07_composition_closed_form() {
    const K: usize = 1000;
    let sigma = 150.0;
    let delta = 1e-8;
    let orders = default_order_grid();
    let cost = QueryCost {
        id: "g".to_string(),
        q: 0.0,
        answered: true,
        eps_by_order: orders
            .iter()
            .map(|&l| gaussian_rdp_bound(l, sigma))
            .collect(),
        data_dependent: vec![false; orders.len()],
    };
    let curve = compose(&orders, &vec![cost; K]).unwrap();
    let dp = to_dp(&curve, delta).unwrap();

    // continuous minimizer of k*lambda/sigma^2 + ln(1/delta)/(lambda-1)
    let l = (1.0f64 / delta).ln();
    let lambda_star = 1.0 + (l * sigma * sigma / K as f64).sqrt();
    let direct = K as f64 * lambda_star / (sigma * sigma) + l / (lambda_star - 1.0);
    let rel = (dp.epsilon - direct).abs() / direct;
    assert!(
        rel <= 0.01,
        "criterion 7: FAIL — grid epsilon {} vs continuous minimum {direct} \
         ({}% relative)",
        dp.epsilon,
        rel * 100.0
    );
    assert!(
        dp.epsilon >= direct,
        "criterion 7: FAIL — grid epsilon {} below the continuous minimum {direct}",
        dp.epsilon
    );
    println!("criterion 7: PASS");
}

#[test]
fn criterion_08_extremal_histograms() {
    for sigma in [2.5, 25.0] {
        for total in 1..=10u64 {
            let triples = all_triples(total);
            let hists: Vec<VoteHistogram> = triples
                .iter()
                .map(|t| VoteHistogram::new(t.to_vec()).unwrap())
                .collect();
            let qs: Vec<f64> = hists.iter().map(|h| compute_q(h, sigma).q).collect();
            for (u_idx, u) in hists.iter().enumerate() {
                let s = sorted3(triples[u_idx]);
                for d in 1..=3u64 {
                    let mut q_max = f64::NEG_INFINITY;
                    let mut q_min = f64::INFINITY;
                    for (v_idx, v) in hists.iter().enumerate() {
                        if distance(u, v).unwrap() <= d {
                            q_max = q_max.max(qs[v_idx]);
                            q_min = q_min.min(qs[v_idx]);
                        }
                    }
                    // worst case: pull d votes off the winner onto the
                    // runner-up; valid while the winner stays the winner
                    if s[0] - s[1] >= 2 * d {
                        let star = VoteHistogram::new(vec![s[0] - d, s[1] + d, s[2]]).unwrap();
                        let q_star = compute_q(&star, sigma).q;
                        assert!(
                            q_star >= q_max - 1e-12,
                            "criterion 8: FAIL — {:?} d={d} sigma={sigma}: worst-case \
                             construction q {q_star} below brute-force max {q_max}",
                            triples[u_idx]
                        );
                    }
                    // best case: push d votes onto the winner, taken from the
                    // currently largest other class each time
                    let others: u64 = s[1] + s[2];
                    let best = if others <= d {
                        vec![total, 0, 0]
                    } else {
                        let mut t = s;
                        t[0] += d;
                        for _ in 0..d {
                            let j = if t[1] >= t[2] { 1 } else { 2 };
                            t[j] -= 1;
                        }
                        t.to_vec()
                    };
                    let best = VoteHistogram::new(best).unwrap();
                    let q_best = compute_q(&best, sigma).q;
                    assert!(
                        q_best <= q_min + 1e-12,
                        "criterion 8: FAIL — {:?} d={d} sigma={sigma}: best-case \
                         construction q {q_best} above brute-force min {q_min}",
                        triples[u_idx]
                    );
                }
            }
        }
    }
    println!("criterion 8: PASS");
}

#[test]
fn criterion_09_simulation_ranking() {
    let model = EnsembleModel::glyph_like();
    let delta = 1e-8;
    let queries = 300;

    // Gaussian vs Laplace at one ensemble size. The noise grids sit in the
    // contested band (accuracy below the noise-free ceiling): saturated cells
    // all collapse onto the order-grid conversion floor and measure nothing
    // about the mechanism. Dominance claim: for every Laplace cell there is a
    // Gaussian cell with label accuracy at most 0.5% worse and strictly
    // smaller epsilon.
    let cells: Vec<SweepMechanism> = [10.5, 11.0, 11.5, 12.0, 12.5, 13.0, 13.5, 14.0, 15.0, 16.0]
        .into_iter()
        .map(|sigma| SweepMechanism::GnMax { sigma })
        .chain(
            [5.75, 6.0, 6.25, 6.5, 7.0]
                .into_iter()
                .map(|scale| SweepMechanism::LnMax { scale }),
        )
        .collect();
    let rows = sweep(&model, &[100], &cells, queries, delta, 42).unwrap();
    let gn: Vec<_> = rows.iter().filter(|r| r.mechanism == "gnmax").collect();
    let ln: Vec<_> = rows.iter().filter(|r| r.mechanism == "lnmax").collect();
    assert_eq!(gn.len(), 10);
    assert_eq!(ln.len(), 5);
    for l in &ln {
        let best = gn
            .iter()
            .filter(|g| g.accuracy >= l.accuracy - 0.005)
            .map(|g| g.epsilon)
            .min_by(f64::total_cmp);
        let best = best.unwrap_or_else(|| {
            panic!(
                "criterion 9: FAIL — no gnmax cell reaches accuracy {} - 0.5%; \
                 grids need adjusting",
                l.accuracy
            )
        });
        assert!(
            best < l.epsilon,
            "criterion 9: FAIL — gnmax frontier epsilon {best} is not below lnmax \
             scale={} epsilon {} at accuracy {}",
            l.sigma,
            l.epsilon,
            l.accuracy
        );
    }

    // Larger ensembles at a fixed accuracy floor must never cost more.
    let mut eps_by_m = Vec::new();
    for m in [100u64, 500, 1000, 5000] {
        let sigmas = [0.04, 0.06, 0.08, 0.10, 0.125, 0.15].map(|f| f * m as f64);
        let cells: Vec<SweepMechanism> = sigmas
            .into_iter()
            .map(|sigma| SweepMechanism::GnMax { sigma })
            .collect();
        let rows = sweep(&model, &[m], &cells, queries, delta, 43).unwrap();
        let pick = rows
            .iter()
            .filter(|r| r.accuracy >= 0.85)
            .max_by(|a, b| a.sigma.total_cmp(&b.sigma));
        let row = pick.unwrap_or_else(|| {
            panic!("criterion 9: FAIL — no sigma reaches 0.85 accuracy at {m} teachers")
        });
        eps_by_m.push((m, row.epsilon));
    }
    let mut strict_drop = false;
    for w in eps_by_m.windows(2) {
        let ((m_prev, e_prev), (m_next, e_next)) = (w[0], w[1]);
        assert!(
            e_next <= e_prev + 1e-9,
            "criterion 9: FAIL — epsilon rises from {e_prev} at {m_prev} teachers \
             to {e_next} at {m_next}"
        );
        if e_next < e_prev - 1e-9 {
            strict_drop = true;
        }
    }
    assert!(
        strict_drop,
        "criterion 9: FAIL — epsilon never strictly drops across ensemble sizes: {eps_by_m:?}"
    );
    println!("criterion 9: PASS");
}

#[test]
fn criterion_10_published_votes_optional() {
    let path = match std::env::var("PATE_MNIST_VOTES_CSV") {
        Ok(p) => p,
        Err(_) => {
            println!(
                "criterion 10: SKIP (set PATE_MNIST_VOTES_CSV to a local copy of the \
                 published 250-teacher vote matrix as query_id,c_0,...,c_9 CSV)"
            );
            return;
        }
    };
    let votes = read_votes_csv(Path::new(&path)).unwrap();
    let mech = AnalysisMechanism::Confident {
        threshold: 200.0,
        sigma1: 150.0,
        sigma2: 40.0,
    };
    let orders = default_order_grid();
    let mut eps_sum = 0.0;
    let mut answered_sum = 0.0;
    for seed in 0..20u64 {
        let report = analyze_run(&votes, &mech, &orders, 1e-5, seed, None).unwrap();
        eps_sum += report.dp.epsilon;
        answered_sum += report.per_query.iter().filter(|c| c.answered).count() as f64;
    }
    let mean_eps = eps_sum / 20.0;
    let mean_answered = answered_sum / 20.0;
    assert!(
        (1.7..=2.3).contains(&mean_eps),
        "criterion 10: FAIL — mean epsilon {mean_eps} outside [1.7, 2.3]"
    );
    assert!(
        (240.0..=330.0).contains(&mean_answered),
        "criterion 10: FAIL — mean answered {mean_answered} outside [240, 330]"
    );
    println!("criterion 10: PASS");
}
