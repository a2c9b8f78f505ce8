//! Weighted C-SVC with an RBF kernel, trained by SMO and composed
//! one-vs-one for more than two classes.

pub mod kernel;
pub mod smo;

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::NormStats;
use crate::matrix::Matrix;

pub use kernel::{rbf_kernel, CachedRows, Gram, KernelParams, KernelRows};
pub use smo::{DualSolution, SolverConfig};

/// Serialization format version of [`SvmModel`].
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Samples, integer class labels and per-class weights.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingProblem {
    pub x: Matrix,
    pub y: Vec<i64>,
    pub weights: BTreeMap<i64, f64>,
}

impl TrainingProblem {
    /// Problem with [`balanced_weights`].
    pub fn balanced(x: Matrix, y: Vec<i64>) -> Result<Self> {
        let weights = balanced_weights(&y)?;
        let p = TrainingProblem { x, y, weights };
        p.validate()?;
        Ok(p)
    }

    pub fn unweighted(x: Matrix, y: Vec<i64>) -> Result<Self> {
        let weights = classes_of(&y).into_iter().map(|c| (c, 1.0)).collect();
        let p = TrainingProblem { x, y, weights };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.n_rows() != self.y.len() {
            return Err(Error::Dimension {
                expected: self.x.n_rows(),
                got: self.y.len(),
            });
        }
        if self.y.len() < 2 {
            return Err(Error::SingleClass(format!("{} sample(s)", self.y.len())));
        }
        let classes = classes_of(&self.y);
        if classes.len() < 2 {
            return Err(Error::SingleClass(format!(
                "only label {} present",
                classes[0]
            )));
        }
        for c in &classes {
            match self.weights.get(c) {
                Some(w) if w.is_finite() && *w > 0.0 => {}
                Some(w) => return Err(Error::invalid("weights", format!("class {c}: {w}"))),
                None => {
                    return Err(Error::invalid(
                        "weights",
                        format!("class {c} has no weight"),
                    ))
                }
            }
        }
        Ok(())
    }
}

/// Sorted distinct labels.
pub fn classes_of(y: &[i64]) -> Vec<i64> {
    let mut c = y.to_vec();
    c.sort_unstable();
    c.dedup();
    c
}

/// `w_c = n / (k * n_c)`.
pub fn balanced_weights(y: &[i64]) -> Result<BTreeMap<i64, f64>> {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for &c in y {
        *counts.entry(c).or_default() += 1;
    }
    if counts.len() < 2 {
        return Err(Error::SingleClass(match counts.keys().next() {
            Some(c) => format!("only label {c} present"),
            None => "no labels".into(),
        }));
    }
    let n = y.len() as f64;
    let k = counts.len() as f64;
    Ok(counts
        .into_iter()
        .map(|(c, nc)| (c, n / (k * nc as f64)))
        .collect())
}

/// One binary machine of the one-vs-one ensemble. `positive` is always the
/// smaller label; a non-negative decision value votes for it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryMachine {
    pub positive: i64,
    pub negative: i64,
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` per support vector.
    pub coef: Vec<f64>,
    pub bias: f64,
    pub objective: f64,
    pub iterations: u64,
    pub converged: bool,
}

impl BinaryMachine {
    pub fn decision(&self, x: &[f64], gamma: f64) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.coef)
            .map(|(sv, c)| c * kernel::rbf(sv, x, gamma))
            .sum::<f64>()
            + self.bias
    }

    pub fn vote(&self, x: &[f64], gamma: f64) -> i64 {
        if self.decision(x, gamma) >= 0.0 {
            self.positive
        } else {
            self.negative
        }
    }
}

/// Where the solver reads kernel rows from.
#[derive(Clone, Copy)]
pub(crate) enum KernelSource<'a> {
    Gram(&'a Gram),
    Data {
        x: &'a Matrix,
        gamma: f64,
        cache_bytes: usize,
    },
}

impl KernelSource<'_> {
    /// Dense kernel matrix over `idx` when it fits the cache budget.
    fn dense(&self, idx: &[usize], cfg: &SolverConfig) -> Option<Gram> {
        let m = idx.len();
        if m.saturating_mul(m).saturating_mul(8) > cfg.cache_bytes {
            return None;
        }
        Some(match *self {
            KernelSource::Gram(g) => g.submatrix(idx),
            KernelSource::Data { x, gamma, .. } => Gram::new(&x.select_rows(idx), gamma),
        })
    }

    fn solve(&self, idx: &[usize], y: &[f64], upper: &[f64], cfg: &SolverConfig) -> DualSolution {
        if let Some(mut dense) = self.dense(idx, cfg) {
            return smo::solve(&mut dense, y, upper, cfg);
        }
        match *self {
            KernelSource::Gram(g) => smo::solve(&mut g.view(idx), y, upper, cfg),
            KernelSource::Data {
                x,
                gamma,
                cache_bytes,
            } => smo::solve(
                &mut CachedRows::new(x, idx, gamma, cache_bytes),
                y,
                upper,
                cfg,
            ),
        }
    }
}

/// Binary machine whose support vectors are indices into the source.
#[derive(Clone, Debug)]
pub(crate) struct IndexedMachine {
    pub positive: i64,
    pub negative: i64,
    pub sv: Vec<usize>,
    pub coef: Vec<f64>,
    pub bias: f64,
    pub objective: f64,
    pub iterations: u64,
    pub converged: bool,
}

impl IndexedMachine {
    fn into_machine(self, x: &Matrix) -> BinaryMachine {
        BinaryMachine {
            positive: self.positive,
            negative: self.negative,
            support_vectors: self.sv.iter().map(|&i| x.row(i).to_vec()).collect(),
            coef: self.coef,
            bias: self.bias,
            objective: self.objective,
            iterations: self.iterations,
            converged: self.converged,
        }
    }

    pub fn decision_gram(&self, gram: &Gram, point: usize) -> f64 {
        let row = gram.row(point);
        self.sv
            .iter()
            .zip(&self.coef)
            .map(|(&s, c)| c * row[s])
            .sum::<f64>()
            + self.bias
    }
}

fn pair_members(idx: &[usize], labels: &[i64], (pos, neg): (i64, i64)) -> (Vec<usize>, Vec<f64>) {
    let sub: Vec<usize> = idx
        .iter()
        .copied()
        .filter(|&i| labels[i] == pos || labels[i] == neg)
        .collect();
    let y = sub
        .iter()
        .map(|&i| if labels[i] == pos { 1.0 } else { -1.0 })
        .collect();
    (sub, y)
}

fn indexed_machine(
    sub: &[usize],
    y: &[f64],
    (pos, neg): (i64, i64),
    sol: &DualSolution,
) -> IndexedMachine {
    let mut sv = Vec::new();
    let mut coef = Vec::new();
    for (k, &a) in sol.alpha.iter().enumerate() {
        if a > 0.0 {
            sv.push(sub[k]);
            coef.push(a * y[k]);
        }
    }
    IndexedMachine {
        positive: pos,
        negative: neg,
        sv,
        coef,
        bias: -sol.rho,
        objective: sol.objective,
        iterations: sol.iterations,
        converged: sol.converged,
    }
}

fn fit_pair(
    source: KernelSource<'_>,
    idx: &[usize],
    labels: &[i64],
    pair: (i64, i64),
    weights: &BTreeMap<i64, f64>,
    c: f64,
    cfg: &SolverConfig,
) -> IndexedMachine {
    let (sub, y) = pair_members(idx, labels, pair);
    let upper: Vec<f64> = sub.iter().map(|&i| c * weights[&labels[i]]).collect();
    let sol = source.solve(&sub, &y, &upper, cfg);
    indexed_machine(&sub, &y, pair, &sol)
}

fn class_pairs(present: &[i64]) -> Vec<(i64, i64)> {
    present
        .iter()
        .enumerate()
        .flat_map(|(a, &p)| present[a + 1..].iter().map(move |&q| (p, q)))
        .collect()
}

fn present_classes(idx: &[usize], labels: &[i64]) -> Result<Vec<i64>> {
    let present = classes_of(&idx.iter().map(|&i| labels[i]).collect::<Vec<_>>());
    if present.len() < 2 {
        return Err(Error::SingleClass(format!(
            "only label {} present",
            present.first().map_or("none".into(), |c| c.to_string())
        )));
    }
    Ok(present)
}

/// Multipliers of one pair at the penalty they were solved for.
pub(crate) type PairSeed = Option<(f64, Vec<f64>)>;

pub(crate) type OvoPath = (Vec<i64>, Vec<Vec<IndexedMachine>>, Vec<PairSeed>);

/// One-vs-one machines for each penalty in `cs` (ascending), each pair
/// warm-started from its solution at the previous penalty. `seeds`, when
/// non-empty, holds one entry per class pair; an entry solved at a penalty
/// no larger than `cs[0]` starts that pair's path. Returns the classes,
/// the machines per penalty in pair order, and each pair's multipliers at
/// the last penalty.
pub(crate) fn train_ovo_path(
    source: KernelSource<'_>,
    idx: &[usize],
    labels: &[i64],
    weights: &BTreeMap<i64, f64>,
    cs: &[f64],
    seeds: &[PairSeed],
    cfg: &SolverConfig,
) -> Result<OvoPath> {
    if cs.is_empty() || cs.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid(
            "c",
            "penalty path must be non-empty and ascending",
        ));
    }
    let present = present_classes(idx, labels)?;
    let pairs = class_pairs(&present);
    if !seeds.is_empty() && seeds.len() != pairs.len() {
        return Err(Error::Dimension {
            expected: pairs.len(),
            got: seeds.len(),
        });
    }
    let per_pair: Vec<(Vec<IndexedMachine>, PairSeed)> = pairs
        .par_iter()
        .enumerate()
        .map(|(p, &pair)| {
            let (sub, y) = pair_members(idx, labels, pair);
            let mut dense = source.dense(&sub, cfg);
            let mut prev: PairSeed = seeds
                .get(p)
                .cloned()
                .flatten()
                .filter(|(c0, _)| *c0 <= cs[0]);
            let machines = cs
                .iter()
                .map(|&c| {
                    let upper: Vec<f64> = sub.iter().map(|&i| c * weights[&labels[i]]).collect();
                    // scaling keeps y'a = 0 and the box; most bounded
                    // multipliers stay bounded as C grows
                    let seeded = prev
                        .as_ref()
                        .map(|(c0, a)| a.iter().map(|v| v * (c / c0)).collect::<Vec<_>>());
                    let init = seeded.as_deref();
                    let sol = match (dense.as_mut(), source) {
                        (Some(d), _) => smo::solve_from(d, &y, &upper, cfg, init),
                        (None, KernelSource::Gram(g)) => {
                            smo::solve_from(&mut g.view(&sub), &y, &upper, cfg, init)
                        }
                        (
                            None,
                            KernelSource::Data {
                                x,
                                gamma,
                                cache_bytes,
                            },
                        ) => smo::solve_from(
                            &mut CachedRows::new(x, &sub, gamma, cache_bytes),
                            &y,
                            &upper,
                            cfg,
                            init,
                        ),
                    };
                    let m = indexed_machine(&sub, &y, pair, &sol);
                    prev = Some((c, sol.alpha));
                    m
                })
                .collect();
            (machines, prev)
        })
        .collect();
    let by_c = (0..cs.len())
        .map(|k| per_pair.iter().map(|(ms, _)| ms[k].clone()).collect())
        .collect();
    let last = per_pair.into_iter().map(|(_, s)| s).collect();
    Ok((present, by_c, last))
}

/// Trains every class pair present among `idx`. `labels` and the source
/// are indexed globally.
pub(crate) fn train_ovo_indexed(
    source: KernelSource<'_>,
    idx: &[usize],
    labels: &[i64],
    weights: &BTreeMap<i64, f64>,
    c: f64,
    cfg: &SolverConfig,
) -> Result<(Vec<i64>, Vec<IndexedMachine>)> {
    let present = present_classes(idx, labels)?;
    let pairs = class_pairs(&present);
    let machines = pairs
        .par_iter()
        .map(|&pair| fit_pair(source, idx, labels, pair, weights, c, cfg))
        .collect();
    Ok((present, machines))
}

/// Majority vote; ties go to the smallest label.
pub(crate) fn vote<I: IntoIterator<Item = i64>>(classes: &[i64], winners: I) -> i64 {
    let mut counts = vec![0usize; classes.len()];
    for w in winners {
        let k = classes.binary_search(&w).expect("winner is a known class");
        counts[k] += 1;
    }
    let mut best = 0;
    for k in 1..counts.len() {
        if counts[k] > counts[best] {
            best = k;
        }
    }
    classes[best]
}

pub(crate) fn predict_gram(
    classes: &[i64],
    machines: &[IndexedMachine],
    gram: &Gram,
    point: usize,
) -> i64 {
    vote(
        classes,
        machines.iter().map(|m| {
            if m.decision_gram(gram, point) >= 0.0 {
                m.positive
            } else {
                m.negative
            }
        }),
    )
}

fn source_for<'a>(
    x: &'a Matrix,
    gamma: f64,
    cfg: &SolverConfig,
    gram: &'a mut Option<Gram>,
) -> KernelSource<'a> {
    let n = x.n_rows();
    if n.saturating_mul(n).saturating_mul(8) <= cfg.cache_bytes {
        KernelSource::Gram(gram.insert(Gram::new(x, gamma)))
    } else {
        KernelSource::Data {
            x,
            gamma,
            cache_bytes: cfg.cache_bytes,
        }
    }
}

/// Trains a single binary machine on a two-class problem.
pub fn train_binary(
    problem: &TrainingProblem,
    params: &KernelParams,
    cfg: &SolverConfig,
) -> Result<BinaryMachine> {
    params.validate()?;
    problem.validate()?;
    let classes = classes_of(&problem.y);
    if classes.len() != 2 {
        return Err(Error::invalid(
            "y",
            format!(
                "binary training needs exactly 2 classes, got {}",
                classes.len()
            ),
        ));
    }
    if cfg.tol.is_nan() || cfg.tol <= 0.0 {
        return Err(Error::invalid("tol", "must be > 0"));
    }
    let idx: Vec<usize> = (0..problem.y.len()).collect();
    let mut gram = None;
    let source = source_for(&problem.x, params.gamma, cfg, &mut gram);
    let m = fit_pair(
        source,
        &idx,
        &problem.y,
        (classes[0], classes[1]),
        &problem.weights,
        params.c,
        cfg,
    );
    Ok(m.into_machine(&problem.x))
}

/// Trained one-vs-one ensemble, serializable as versioned JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub format_version: u32,
    pub params: KernelParams,
    pub classes: Vec<i64>,
    /// Column names of the training features, in order.
    #[serde(default)]
    pub feature_names: Vec<String>,
    /// Normalization fitted on the training rows, if inputs are raw.
    #[serde(default)]
    pub norm: Option<NormStats>,
    pub machines: Vec<BinaryMachine>,
    /// Provenance of the run that produced the model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<serde_json::Value>,
}

impl SvmModel {
    pub fn n_features(&self) -> usize {
        self.machines
            .iter()
            .flat_map(|m| m.support_vectors.first())
            .map(Vec::len)
            .next()
            .or_else(|| self.norm.as_ref().map(NormStats::dim))
            .unwrap_or(self.feature_names.len())
    }

    pub fn converged(&self) -> bool {
        self.machines.iter().all(|m| m.converged)
    }

    /// Predicts from an already-normalized feature vector.
    pub fn predict(&self, x: &[f64]) -> Result<i64> {
        let d = self.n_features();
        if x.len() != d {
            return Err(Error::Dimension {
                expected: d,
                got: x.len(),
            });
        }
        Ok(vote(
            &self.classes,
            self.machines.iter().map(|m| m.vote(x, self.params.gamma)),
        ))
    }

    /// Applies the stored normalization, then predicts.
    pub fn predict_raw(&self, x: &[f64]) -> Result<i64> {
        match &self.norm {
            Some(norm) => {
                if x.len() != norm.dim() {
                    return Err(Error::Dimension {
                        expected: norm.dim(),
                        got: x.len(),
                    });
                }
                let mut z = vec![0.0; x.len()];
                norm.apply_row(x, &mut z);
                self.predict(&z)
            }
            None => self.predict(x),
        }
    }

    pub fn predict_all(&self, x: &Matrix) -> Result<Vec<i64>> {
        x.rows().map(|r| self.predict(r)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: SvmModel = serde_json::from_str(s)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "model format version {} (expected {MODEL_FORMAT_VERSION})",
                m.format_version
            )));
        }
        m.params.validate()?;
        if m.classes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Schema("classes must be sorted and distinct".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

/// One-vs-one training over all class pairs.
pub fn train_multiclass(
    problem: &TrainingProblem,
    params: &KernelParams,
    cfg: &SolverConfig,
) -> Result<SvmModel> {
    params.validate()?;
    problem.validate()?;
    let idx: Vec<usize> = (0..problem.y.len()).collect();
    let mut gram = None;
    let source = source_for(&problem.x, params.gamma, cfg, &mut gram);
    let (classes, machines) =
        train_ovo_indexed(source, &idx, &problem.y, &problem.weights, params.c, cfg)?;
    Ok(SvmModel {
        format_version: MODEL_FORMAT_VERSION,
        params: *params,
        classes,
        feature_names: Vec::new(),
        norm: None,
        manifest: None,
        machines: machines
            .into_iter()
            .map(|m| m.into_machine(&problem.x))
            .collect(),
    })
}

/// One-vs-one training at the last penalty of `c_path` (ascending), each
/// pair warm-started through the earlier penalties. Large penalties that
/// would exhaust the iteration budget from a cold start usually converge
/// this way, and the result matches how cross-validation scores cells.
pub fn train_multiclass_path(
    problem: &TrainingProblem,
    gamma: f64,
    c_path: &[f64],
    cfg: &SolverConfig,
) -> Result<SvmModel> {
    let last = *c_path
        .last()
        .ok_or_else(|| Error::invalid("c", "empty penalty path"))?;
    let params = KernelParams::new(gamma, last)?;
    problem.validate()?;
    let idx: Vec<usize> = (0..problem.y.len()).collect();
    let mut gram = None;
    let source = source_for(&problem.x, gamma, cfg, &mut gram);
    let (classes, mut path, _) =
        train_ovo_path(source, &idx, &problem.y, &problem.weights, c_path, &[], cfg)?;
    let machines = path.pop().expect("path is non-empty");
    Ok(SvmModel {
        format_version: MODEL_FORMAT_VERSION,
        params,
        classes,
        feature_names: Vec::new(),
        norm: None,
        manifest: None,
        machines: machines
            .into_iter()
            .map(|m| m.into_machine(&problem.x))
            .collect(),
    })
}
