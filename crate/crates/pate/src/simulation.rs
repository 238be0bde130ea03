//! Synthetic teacher ensembles and privacy-utility sweeps.
//!
//! Generates vote histograms from a simple ensemble model (each teacher is
//! right with a fixed probability, otherwise votes uniformly among the wrong
//! classes; labels themselves can be imbalanced and partly mislabeled) and
//! runs mechanism grids over them to produce the (epsilon, accuracy,
//! answered-fraction) tradeoff tables the CLI emits.

use crate::accountant::{analyze_run, default_order_grid, AnalysisMechanism};
use crate::error::{PateError, Result};
use crate::histogram::{VoteHistogram, VoteRecord};
use crate::mechanisms::{confident_gnmax, gnmax, lnmax, AggregationOutcome, ConfidentConfig};
use crate::rng::{child_seed, RandomSource};

/// Synthetic teacher-ensemble model.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    pub n_teachers: u64,
    pub num_classes: usize,
    /// Probability each teacher votes for the (possibly mislabeled) target.
    pub teacher_accuracy: f64,
    /// Unnormalized class frequencies; imbalance shows up here.
    pub class_weights: Vec<f64>,
    /// Probability a query's nominal label is swapped for a uniformly random
    /// other class before the teachers vote.
    pub mislabel_rate: f64,
}

impl EnsembleModel {
    /// Large imbalanced ensemble: 150 classes with a 5:1 frequency split,
    /// 10% mislabeled queries, modest per-teacher accuracy.
    pub fn glyph_like() -> Self {
        let mut class_weights = vec![1.0; 150];
        for w in class_weights.iter_mut().take(75) {
            *w = 5.0;
        }
        EnsembleModel {
            n_teachers: 5000,
            num_classes: 150,
            teacher_accuracy: 0.6,
            class_weights,
            mislabel_rate: 0.1,
        }
    }

    /// Small clean ensemble: 10 balanced classes, accurate teachers.
    pub fn mnist_like() -> Self {
        EnsembleModel {
            n_teachers: 250,
            num_classes: 10,
            teacher_accuracy: 0.9,
            class_weights: vec![1.0; 10],
            mislabel_rate: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_teachers == 0 {
            return Err(PateError::InvalidParameter(
                "need at least one teacher".to_string(),
            ));
        }
        if self.num_classes < 2 {
            return Err(PateError::InvalidParameter(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if !(self.teacher_accuracy > 0.0 && self.teacher_accuracy <= 1.0) {
            return Err(PateError::InvalidParameter(format!(
                "teacher accuracy must be in (0, 1], got {}",
                self.teacher_accuracy
            )));
        }
        if !(0.0..1.0).contains(&self.mislabel_rate) {
            return Err(PateError::InvalidParameter(format!(
                "mislabel rate must be in [0, 1), got {}",
                self.mislabel_rate
            )));
        }
        if self.class_weights.len() != self.num_classes {
            return Err(PateError::DimensionMismatch {
                expected: self.num_classes,
                got: self.class_weights.len(),
            });
        }
        let sum: f64 = self.class_weights.iter().sum();
        if self
            .class_weights
            .iter()
            .any(|&w| w < 0.0 || !w.is_finite())
            || sum <= 0.0
        {
            return Err(PateError::InvalidParameter(
                "class weights must be non-negative with a positive sum".to_string(),
            ));
        }
        Ok(())
    }
}

/// One generated query: the vote histogram plus its ground-truth class.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedQuery {
    pub record: VoteRecord,
    pub true_class: usize,
}

fn sample_class(weights: &[f64], total: f64, rng: &mut RandomSource) -> usize {
    let target = rng.uniform() * total;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Generates `k_queries` histograms; each query derives its own child stream
/// from `root_seed` and the query index, so the set is stable under
/// reordering and parallel generation.
pub fn generate_votes(
    model: &EnsembleModel,
    k_queries: usize,
    root_seed: u64,
) -> Result<Vec<SimulatedQuery>> {
    model.validate()?;
    let m = model.num_classes;
    let weight_total: f64 = model.class_weights.iter().sum();
    let mut out = Vec::with_capacity(k_queries);
    for idx in 0..k_queries {
        let mut rng = RandomSource::for_query(root_seed, idx as u64);
        let true_class = sample_class(&model.class_weights, weight_total, &mut rng);
        // the label the teachers actually see
        let target = if model.mislabel_rate > 0.0 && rng.uniform() < model.mislabel_rate {
            let j = rng.below(m as u64 - 1) as usize;
            if j >= true_class {
                j + 1
            } else {
                j
            }
        } else {
            true_class
        };
        let mut counts = vec![0u64; m];
        let correct = rng.binomial(model.n_teachers, model.teacher_accuracy);
        counts[target] = correct;
        // distribute the wrong votes uniformly over the other classes via
        // sequential conditional binomials (an exact multinomial sample)
        let mut remaining = model.n_teachers - correct;
        let mut classes_left = m - 1;
        for (i, slot) in counts.iter_mut().enumerate() {
            if i == target {
                continue;
            }
            if classes_left == 1 {
                *slot += remaining;
                remaining = 0;
            } else {
                let take = rng.binomial(remaining, 1.0 / classes_left as f64);
                *slot += take;
                remaining -= take;
            }
            classes_left -= 1;
        }
        out.push(SimulatedQuery {
            record: VoteRecord {
                id: idx.to_string(),
                histogram: VoteHistogram::new(counts)?,
            },
            true_class,
        });
    }
    Ok(out)
}

/// One mechanism configuration in a sweep grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepMechanism {
    GnMax {
        sigma: f64,
    },
    /// `scale` is the Laplace noise scale b = 1/gamma.
    LnMax {
        scale: f64,
    },
    Confident {
        threshold: f64,
        sigma1: f64,
        sigma2: f64,
    },
}

impl SweepMechanism {
    fn name(&self) -> &'static str {
        match self {
            SweepMechanism::GnMax { .. } => "gnmax",
            SweepMechanism::LnMax { .. } => "lnmax",
            SweepMechanism::Confident { .. } => "confident",
        }
    }

    fn noise_scale(&self) -> f64 {
        match self {
            SweepMechanism::GnMax { sigma } => *sigma,
            SweepMechanism::LnMax { scale } => *scale,
            SweepMechanism::Confident { sigma2, .. } => *sigma2,
        }
    }

    fn threshold(&self) -> Option<f64> {
        match self {
            SweepMechanism::Confident { threshold, .. } => Some(*threshold),
            _ => None,
        }
    }
}

/// One row of the sweep output table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub mechanism: &'static str,
    /// Noise scale of the answer path (Laplace scale for lnmax).
    pub sigma: f64,
    pub threshold: Option<f64>,
    pub n_teachers: u64,
    pub epsilon: f64,
    /// Label accuracy against the true class, over answered queries; 0 when
    /// nothing was answered.
    pub accuracy: f64,
    pub answered_fraction: f64,
}

/// Runs every mechanism cell against every ensemble size.
///
/// Votes are generated once per teacher count and shared by all cells, so
/// mechanisms compete on identical queries; each (teacher count, cell) pair
/// then aggregates with its own derived noise stream. Epsilon comes from the
/// accountant over the same derived stream, so thresholded cells pay for
/// exactly the answered set they produced.
pub fn sweep(
    base_model: &EnsembleModel,
    teacher_counts: &[u64],
    cells: &[SweepMechanism],
    k_queries: usize,
    delta: f64,
    root_seed: u64,
) -> Result<Vec<SweepRow>> {
    let orders = default_order_grid();
    let mut rows = Vec::with_capacity(teacher_counts.len() * cells.len());
    for (m_idx, &n_teachers) in teacher_counts.iter().enumerate() {
        let model = EnsembleModel {
            n_teachers,
            ..base_model.clone()
        };
        let votes_seed = child_seed(root_seed, m_idx as u64);
        let queries = generate_votes(&model, k_queries, votes_seed)?;
        let records: Vec<VoteRecord> = queries.iter().map(|q| q.record.clone()).collect();
        for (c_idx, cell) in cells.iter().enumerate() {
            let cell_seed = child_seed(votes_seed, c_idx as u64);
            let mut answered = 0usize;
            let mut correct = 0usize;
            for (q_idx, query) in queries.iter().enumerate() {
                let mut rng = RandomSource::for_query(cell_seed, q_idx as u64);
                let label = match cell {
                    SweepMechanism::GnMax { sigma } => {
                        Some(gnmax(&query.record.histogram, *sigma, &mut rng)?)
                    }
                    SweepMechanism::LnMax { scale } => {
                        Some(lnmax(&query.record.histogram, 1.0 / scale, &mut rng)?)
                    }
                    SweepMechanism::Confident {
                        threshold,
                        sigma1,
                        sigma2,
                    } => {
                        let cfg = ConfidentConfig {
                            threshold: *threshold,
                            sigma1: *sigma1,
                            sigma2: *sigma2,
                        };
                        match confident_gnmax(&query.record.histogram, &cfg, &mut rng)? {
                            AggregationOutcome::TeacherLabel(i) => Some(i),
                            _ => None,
                        }
                    }
                };
                if let Some(label) = label {
                    answered += 1;
                    if label == query.true_class {
                        correct += 1;
                    }
                }
            }
            let analysis_mech = match cell {
                SweepMechanism::GnMax { sigma } => AnalysisMechanism::GnMax { sigma: *sigma },
                SweepMechanism::LnMax { scale } => AnalysisMechanism::LnMax { gamma: 1.0 / scale },
                SweepMechanism::Confident {
                    threshold,
                    sigma1,
                    sigma2,
                } => AnalysisMechanism::Confident {
                    threshold: *threshold,
                    sigma1: *sigma1,
                    sigma2: *sigma2,
                },
            };
            let report = analyze_run(&records, &analysis_mech, &orders, delta, cell_seed, None)?;
            rows.push(SweepRow {
                mechanism: cell.name(),
                sigma: cell.noise_scale(),
                threshold: cell.threshold(),
                n_teachers,
                epsilon: report.dp.epsilon,
                accuracy: if answered > 0 {
                    correct as f64 / answered as f64
                } else {
                    0.0
                },
                answered_fraction: answered as f64 / k_queries.max(1) as f64,
            });
        }
    }
    Ok(rows)
}

/// Writes sweep rows as CSV with a fixed header.
pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "mechanism",
        "sigma",
        "threshold",
        "teachers",
        "epsilon",
        "accuracy",
        "answered_fraction",
    ])?;
    for row in rows {
        w.write_record([
            row.mechanism.to_string(),
            format!("{}", row.sigma),
            row.threshold.map(|t| format!("{t}")).unwrap_or_default(),
            row.n_teachers.to_string(),
            format!("{:.12e}", row.epsilon),
            format!("{:.6}", row.accuracy),
            format!("{:.6}", row.answered_fraction),
        ])?;
    }
    w.flush().map_err(PateError::Io)?;
    Ok(())
}
