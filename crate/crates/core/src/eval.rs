//! Classification and count metrics, Spearman rank correlation and
//! permutation feature importance.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::rng_for;
use crate::svm::SvmModel;

fn check_pair<A, B>(y: &[A], y_hat: &[B]) -> Result<()> {
    if y.is_empty() {
        return Err(Error::invalid("y", "empty label vector"));
    }
    if y.len() != y_hat.len() {
        return Err(Error::Dimension {
            expected: y.len(),
            got: y_hat.len(),
        });
    }
    Ok(())
}

/// Fraction of exact matches.
pub fn accuracy(y: &[i64], y_hat: &[i64]) -> Result<f64> {
    check_pair(y, y_hat)?;
    let hits = y.iter().zip(y_hat).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / y.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// One-vs-rest precision, recall and F1 for every label seen in `y` or
/// `y_hat`. Undefined ratios are 0.
pub fn per_class_scores(y: &[i64], y_hat: &[i64]) -> Result<BTreeMap<i64, ClassScores>> {
    check_pair(y, y_hat)?;
    let mut tp: BTreeMap<i64, usize> = BTreeMap::new();
    let mut fp: BTreeMap<i64, usize> = BTreeMap::new();
    let mut fn_: BTreeMap<i64, usize> = BTreeMap::new();
    for (&t, &p) in y.iter().zip(y_hat) {
        if t == p {
            *tp.entry(t).or_default() += 1;
        } else {
            *fp.entry(p).or_default() += 1;
            *fn_.entry(t).or_default() += 1;
        }
    }
    let labels: std::collections::BTreeSet<i64> = y.iter().chain(y_hat).copied().collect();
    let ratio = |a: usize, b: usize| {
        if a + b == 0 {
            0.0
        } else {
            a as f64 / (a + b) as f64
        }
    };
    Ok(labels
        .into_iter()
        .map(|c| {
            let t = tp.get(&c).copied().unwrap_or(0);
            let f = fp.get(&c).copied().unwrap_or(0);
            let m = fn_.get(&c).copied().unwrap_or(0);
            let precision = ratio(t, f);
            let recall = ratio(t, m);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            (
                c,
                ClassScores {
                    precision,
                    recall,
                    f1,
                    support: t + m,
                },
            )
        })
        .collect())
}

/// Support-weighted precision, recall and F1.
pub fn prf1(y: &[i64], y_hat: &[i64]) -> Result<(f64, f64, f64)> {
    let scores = per_class_scores(y, y_hat)?;
    let n = y.len() as f64;
    let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
    for s in scores.values() {
        let w = s.support as f64 / n;
        p += w * s.precision;
        r += w * s.recall;
        f += w * s.f1;
    }
    Ok((p, r, f))
}

pub fn rmse(y: &[i64], y_hat: &[i64]) -> Result<f64> {
    check_pair(y, y_hat)?;
    let sse: f64 = y
        .iter()
        .zip(y_hat)
        .map(|(a, b)| {
            let d = (a - b) as f64;
            d * d
        })
        .sum();
    Ok((sse / y.len() as f64).sqrt())
}

/// RMSE divided by the largest ground-truth value.
pub fn nrmse(y: &[i64], y_hat: &[i64]) -> Result<f64> {
    let r = rmse(y, y_hat)?;
    let max = *y.iter().max().expect("non-empty");
    if max <= 0 {
        return Err(Error::invalid("y", "NRMSE undefined when max(y) <= 0"));
    }
    Ok(r / max as f64)
}

/// Average (1-based) ranks; tied values share the mean of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && v[order[j]] == v[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) hold equal values
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::UndefinedCorrelation("fewer than two points".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation("constant input".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman rank-order correlation: Pearson correlation of average ranks.
pub fn srocc(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    pearson(&average_ranks(a), &average_ranks(b))
}

/// Accuracy, weighted P/R/F1 and count errors on one evaluation set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub rmse: f64,
    /// `None` when every ground-truth value is 0.
    pub nrmse: Option<f64>,
    pub support: BTreeMap<i64, usize>,
}

impl MetricReport {
    pub fn compute(y: &[i64], y_hat: &[i64]) -> Result<Self> {
        let accuracy = accuracy(y, y_hat)?;
        let (precision, recall, f1) = prf1(y, y_hat)?;
        let rmse = rmse(y, y_hat)?;
        let nrmse = nrmse(y, y_hat).ok();
        let mut support = BTreeMap::new();
        for &c in y {
            *support.entry(c).or_default() += 1;
        }
        Ok(MetricReport {
            accuracy,
            precision,
            recall,
            f1,
            rmse,
            nrmse,
            support,
        })
    }
}

/// Anything that maps a feature row to a class label.
pub trait Classifier {
    fn predict_row(&self, x: &[f64]) -> Result<i64>;
}

impl Classifier for SvmModel {
    fn predict_row(&self, x: &[f64]) -> Result<i64> {
        self.predict(x)
    }
}

impl<F: Fn(&[f64]) -> i64> Classifier for F {
    fn predict_row(&self, x: &[f64]) -> Result<i64> {
        Ok(self(x))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub baseline_accuracy: f64,
    pub n_repeats: usize,
    pub features: Vec<FeatureImportance>,
}

impl ImportanceReport {
    pub fn get(&self, feature: &str) -> Option<&FeatureImportance> {
        self.features.iter().find(|f| f.feature == feature)
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut s = String::from("feature,mean_importance,sd\n");
        for f in &self.features {
            s.push_str(&format!("{},{},{}\n", f.feature, f.mean, f.sd));
        }
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }
}

/// Population mean and standard deviation.
pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

fn predict_matrix<C: Classifier + ?Sized>(model: &C, x: &Matrix) -> Result<Vec<i64>> {
    x.rows().map(|r| model.predict_row(r)).collect()
}

/// Accuracy drop when one column is shuffled, averaged over `n_repeats`
/// shuffles. The shuffle for (feature `j`, repeat `r`) is seeded from
/// `(seed, j, r)`.
pub fn permutation_importance<C: Classifier + ?Sized>(
    model: &C,
    x: &Matrix,
    y: &[i64],
    names: &[String],
    n_repeats: usize,
    seed: u64,
) -> Result<ImportanceReport> {
    if n_repeats == 0 {
        return Err(Error::invalid("n_repeats", "must be >= 1"));
    }
    if names.len() != x.n_cols() {
        return Err(Error::Dimension {
            expected: x.n_cols(),
            got: names.len(),
        });
    }
    let baseline = accuracy(y, &predict_matrix(model, x)?)?;
    let mut features = Vec::with_capacity(x.n_cols());
    let mut work = x.clone();
    for (j, name) in names.iter().enumerate() {
        let original = x.column(j);
        let mut drops = Vec::with_capacity(n_repeats);
        for r in 0..n_repeats {
            let mut col = original.clone();
            col.shuffle(&mut rng_for(seed, &[j as u64, r as u64]));
            work.set_column(j, &col);
            drops.push(baseline - accuracy(y, &predict_matrix(model, &work)?)?);
        }
        work.set_column(j, &original);
        let (mean, sd) = mean_sd(&drops);
        features.push(FeatureImportance {
            feature: name.clone(),
            mean,
            sd,
        });
    }
    Ok(ImportanceReport {
        baseline_accuracy: baseline,
        n_repeats,
        features,
    })
}
