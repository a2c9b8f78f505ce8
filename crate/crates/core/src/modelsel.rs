//! Model selection: stratified k-fold CV, the (C, γ) grid search with
//! boundary expansion, repeated stratified train/test splits, and the
//! per-room experiment driver.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{self, FeatureImportance, MetricReport};
use crate::features::{build_features, feature_set_label, FeatureKind, FeatureMatrix, FeatureSpec};
use crate::ingest::{Dataset, NormStats, Season};
use crate::matrix::Matrix;
use crate::rng::rng_for;
use crate::svm::{
    balanced_weights, predict_gram, train_multiclass_path, train_ovo_path, Gram, KernelParams,
    KernelSource, PairSeed, SolverConfig, TrainingProblem,
};

/// Stratified k-fold partition of `0..n`. Members of each class are
/// shuffled and dealt round-robin, so fold sizes differ by at most one and
/// per-class counts per fold by at most one.
pub fn kfold_indices(n: usize, k: usize, y: &[i64], seed: u64) -> Result<Vec<Vec<usize>>> {
    if k == 0 {
        return Err(Error::invalid("k", "must be >= 1"));
    }
    if k > n {
        return Err(Error::invalid("k", format!("{k} folds for {n} samples")));
    }
    if y.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: y.len(),
        });
    }
    let mut by_class: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &c) in y.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    let mut pos = 0usize;
    for (ci, members) in by_class.values_mut().enumerate() {
        members.shuffle(&mut rng_for(seed, &[ci as u64]));
        for &i in members.iter() {
            folds[pos % k].push(i);
            pos += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Integer exponent ranges of 2 for C and γ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub c_exponents: (i32, i32),
    pub gamma_exponents: (i32, i32),
    /// γ never goes below `2^gamma_floor_exp`, even when expanding.
    pub gamma_floor_exp: i32,
    pub expansion_step: i32,
    pub max_expansions: u32,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            c_exponents: (-10, 10),
            gamma_exponents: (-10, 10),
            gamma_floor_exp: -10,
            expansion_step: 2,
            max_expansions: 5,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.c_exponents.0 > self.c_exponents.1 {
            return Err(Error::invalid("grid", "C exponent range has lo > hi"));
        }
        if self.gamma_exponents.0 > self.gamma_exponents.1 {
            return Err(Error::invalid("grid", "gamma exponent range has lo > hi"));
        }
        if self.gamma_exponents.0 < self.gamma_floor_exp {
            return Err(Error::invalid("grid", "gamma range starts below its floor"));
        }
        if self.expansion_step < 1 {
            return Err(Error::invalid("grid", "expansion_step must be >= 1"));
        }
        Ok(())
    }

    /// Parses `clo:chi,glo:ghi`, e.g. `-10:10,-10:10`.
    pub fn parse_bounds(s: &str) -> Result<Self> {
        let bad = || Error::invalid("grid", format!("`{s}` is not of the form clo:chi,glo:ghi"));
        let mut axes = s.split(',').map(|a| {
            let (lo, hi) = a.split_once(':').ok_or_else(bad)?;
            let lo: i32 = lo.trim().parse().map_err(|_| bad())?;
            let hi: i32 = hi.trim().parse().map_err(|_| bad())?;
            Ok::<_, Error>((lo, hi))
        });
        let c = axes.next().ok_or_else(bad)??;
        let g = axes.next().ok_or_else(bad)??;
        if axes.next().is_some() {
            return Err(bad());
        }
        let spec = GridSpec {
            c_exponents: c,
            gamma_exponents: g,
            gamma_floor_exp: g.0.min(GridSpec::default().gamma_floor_exp),
            ..GridSpec::default()
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridOutcome {
    pub c_exp: i32,
    pub gamma_exp: i32,
    pub score: f64,
    pub expansions: u32,
    /// The optimum still sat on an expandable boundary when the expansion
    /// budget ran out.
    pub hit_max_expansions: bool,
    pub c_range: (i32, i32),
    pub gamma_range: (i32, i32),
    /// Mean CV score for every evaluated cell, keyed by (C exp, γ exp).
    pub cells: BTreeMap<String, f64>,
}

impl GridOutcome {
    pub fn c(&self) -> f64 {
        2f64.powi(self.c_exp)
    }

    /// Penalties from the lower end of the final C range up to the chosen
    /// one, for warm-started refitting.
    pub fn c_path(&self) -> Vec<f64> {
        (self.c_range.0..=self.c_exp)
            .map(|e| 2f64.powi(e))
            .collect()
    }

    pub fn gamma(&self) -> f64 {
        2f64.powi(self.gamma_exp)
    }
}

fn cell_key(c: i32, g: i32) -> String {
    format!("{c},{g}")
}

/// Best cell under the tie rule: highest score, then smaller C, then
/// smaller γ. Independent of iteration order.
fn best_cell(
    scores: &BTreeMap<(i32, i32), f64>,
    c: (i32, i32),
    g: (i32, i32),
) -> ((i32, i32), f64) {
    let mut best: Option<((i32, i32), f64)> = None;
    for (&(ci, gi), &s) in scores {
        if ci < c.0 || ci > c.1 || gi < g.0 || gi > g.1 {
            continue;
        }
        let better = match best {
            None => true,
            Some(((bc, bg), bs)) => s > bs || (s == bs && (ci, gi) < (bc, bg)),
        };
        if better {
            best = Some(((ci, gi), s));
        }
    }
    best.expect("grid has at least one cell")
}

/// Grid search over integer exponents with boundary expansion.
///
/// `score_batch` receives cells not yet scored and returns one score each.
/// A side of the grid is pushed outward by `expansion_step` while the best
/// cell lies on it; axes whose initial range is a single exponent are held
/// fixed, and γ never drops below its floor.
pub fn search_grid<F>(grid: &GridSpec, mut score_batch: F) -> Result<GridOutcome>
where
    F: FnMut(&[(i32, i32)]) -> Result<Vec<f64>>,
{
    grid.validate()?;
    let c_fixed = grid.c_exponents.0 == grid.c_exponents.1;
    let g_fixed = grid.gamma_exponents.0 == grid.gamma_exponents.1;
    let (mut c, mut g) = (grid.c_exponents, grid.gamma_exponents);
    let mut scores: BTreeMap<(i32, i32), f64> = BTreeMap::new();
    let mut expansions = 0;
    let mut hit_max = false;

    loop {
        let todo: Vec<(i32, i32)> = (c.0..=c.1)
            .flat_map(|ci| (g.0..=g.1).map(move |gi| (ci, gi)))
            .filter(|cell| !scores.contains_key(cell))
            .collect();
        if !todo.is_empty() {
            let got = score_batch(&todo)?;
            if got.len() != todo.len() {
                return Err(Error::Dimension {
                    expected: todo.len(),
                    got: got.len(),
                });
            }
            scores.extend(todo.into_iter().zip(got));
        }

        let ((bc, bg), _) = best_cell(&scores, c, g);
        let grow_c_lo = !c_fixed && bc == c.0;
        let grow_c_hi = !c_fixed && bc == c.1;
        let grow_g_lo = !g_fixed && g.0 > grid.gamma_floor_exp && bg == g.0;
        let grow_g_hi = !g_fixed && bg == g.1;
        if !(grow_c_lo || grow_c_hi || grow_g_lo || grow_g_hi) {
            break;
        }
        if expansions >= grid.max_expansions {
            hit_max = true;
            break;
        }
        let step = grid.expansion_step;
        if grow_c_lo {
            c.0 -= step;
        }
        if grow_c_hi {
            c.1 += step;
        }
        if grow_g_lo {
            g.0 = (g.0 - step).max(grid.gamma_floor_exp);
        }
        if grow_g_hi {
            g.1 += step;
        }
        expansions += 1;
    }

    let ((c_exp, gamma_exp), score) = best_cell(&scores, c, g);
    Ok(GridOutcome {
        c_exp,
        gamma_exp,
        score,
        expansions,
        hit_max_expansions: hit_max,
        c_range: c,
        gamma_range: g,
        cells: scores
            .iter()
            .map(|(&(ci, gi), &s)| (cell_key(ci, gi), s))
            .collect(),
    })
}

/// Mean k-fold accuracy of balanced-weighted training for each penalty in
/// `cs` (ascending), using a kernel matrix precomputed over all rows.
/// `seeds` carries each fold's pair multipliers from one call to the next.
fn cv_accuracy(
    gram: &Gram,
    folds: &[Vec<usize>],
    y: &[i64],
    cs: &[f64],
    seeds: &mut [Vec<PairSeed>],
    solver: &SolverConfig,
) -> Result<Vec<f64>> {
    let per_fold: Vec<Result<(Vec<f64>, Vec<PairSeed>)>> = (0..folds.len())
        .into_par_iter()
        .zip(seeds.par_iter())
        .map(|(f, fold_seeds)| {
            let val = &folds[f];
            let train: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, idx)| idx.iter().copied())
                .collect();
            let train_y: Vec<i64> = train.iter().map(|&i| y[i]).collect();
            let weights = balanced_weights(&train_y)?;
            let (classes, path, last) = train_ovo_path(
                KernelSource::Gram(gram),
                &train,
                y,
                &weights,
                cs,
                fold_seeds,
                solver,
            )?;
            let acc = path
                .iter()
                .map(|machines| {
                    let hits = val
                        .iter()
                        .filter(|&&v| predict_gram(&classes, machines, gram, v) == y[v])
                        .count();
                    hits as f64 / val.len() as f64
                })
                .collect();
            Ok((acc, last))
        })
        .collect();
    let mut total = vec![0.0; cs.len()];
    for (fold, slot) in per_fold.into_iter().zip(seeds.iter_mut()) {
        let (acc, last) = fold?;
        for (t, a) in total.iter_mut().zip(acc) {
            *t += a;
        }
        let newer = slot.iter().zip(&last).all(|(old, new)| match (old, new) {
            (Some((c_old, _)), Some((c_new, _))) => c_new >= c_old,
            _ => true,
        });
        if slot.is_empty() || newer {
            *slot = last;
        }
    }
    Ok(total.into_iter().map(|t| t / folds.len() as f64).collect())
}

/// Selects (C, γ) by k-fold CV accuracy with balanced class weights.
pub fn grid_search(
    x: &Matrix,
    y: &[i64],
    grid: &GridSpec,
    k: usize,
    seed: u64,
    solver: &SolverConfig,
) -> Result<GridOutcome> {
    let folds = kfold_indices(x.n_rows(), k, y, seed)?;
    // per γ and fold, the pair multipliers at the largest C solved so far;
    // cells added by an upward C expansion continue from them
    let mut seeds: BTreeMap<i32, Vec<Vec<PairSeed>>> = BTreeMap::new();
    search_grid(grid, |cells| {
        let mut by_gamma: BTreeMap<i32, Vec<(usize, i32)>> = BTreeMap::new();
        for (pos, &(ci, gi)) in cells.iter().enumerate() {
            by_gamma.entry(gi).or_default().push((pos, ci));
        }
        let mut out = vec![0.0; cells.len()];
        for (gi, mut members) in by_gamma {
            members.sort_by_key(|&(_, ci)| ci);
            let gram = Gram::new(x, 2f64.powi(gi));
            let fold_seeds = seeds
                .entry(gi)
                .or_insert_with(|| vec![Vec::new(); folds.len()]);
            for run in members.chunk_by(|a, b| b.1 == a.1 + 1) {
                let cs: Vec<f64> = run.iter().map(|&(_, ci)| 2f64.powi(ci)).collect();
                let scores = cv_accuracy(&gram, &folds, y, &cs, fold_seeds, solver)?;
                for ((pos, _), s) in run.iter().zip(scores) {
                    out[*pos] = s;
                }
            }
        }
        Ok(out)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub rounds: usize,
    pub train_fraction: f64,
    pub seed: u64,
    pub stratify_occupancy: bool,
    pub stratify_season: bool,
}

impl Default for SplitPlan {
    fn default() -> Self {
        SplitPlan {
            rounds: 3,
            train_fraction: 0.6,
            seed: 42,
            stratify_occupancy: true,
            stratify_season: true,
        }
    }
}

impl SplitPlan {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::invalid("rounds", "must be >= 1"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::invalid("train_fraction", "must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn round_seed(&self, round: usize) -> u64 {
        self.seed.wrapping_add(round as u64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSet {
    pub rounds: Vec<Split>,
    pub warnings: Vec<String>,
}

/// Draws `plan.rounds` stratified train/test splits. Strata are
/// (occupied, season); a stratifier with a single level is dropped with a
/// warning. Train sizes per stratum use largest-remainder rounding so the
/// total is `round(train_fraction * n)`.
pub fn make_splits(occupied: &[bool], seasons: &[Season], plan: &SplitPlan) -> Result<SplitSet> {
    plan.validate()?;
    let n = occupied.len();
    if seasons.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: seasons.len(),
        });
    }
    if n < 2 {
        return Err(Error::invalid("rows", "need at least two rows to split"));
    }
    let mut warnings = Vec::new();
    let mut by_occ = plan.stratify_occupancy;
    let mut by_season = plan.stratify_season;
    if by_season && seasons.iter().collect::<BTreeSet<_>>().len() < 2 {
        warnings.push("only one season present; splits are not season-stratified".to_string());
        by_season = false;
    }
    if by_occ && occupied.iter().collect::<BTreeSet<_>>().len() < 2 {
        warnings.push(
            "only one occupancy state present; splits are not occupancy-stratified".to_string(),
        );
        by_occ = false;
    }

    let mut strata: BTreeMap<(bool, Option<Season>), Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let key = (by_occ && occupied[i], by_season.then_some(seasons[i]));
        strata.entry(key).or_default().push(i);
    }

    let target = ((plan.train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut quotas: Vec<usize> = Vec::with_capacity(strata.len());
    let mut remainders: Vec<(f64, usize)> = Vec::with_capacity(strata.len());
    for (s, members) in strata.values().enumerate() {
        let exact = plan.train_fraction * members.len() as f64;
        let q = (exact + 1e-9).floor() as usize;
        quotas.push(q.min(members.len()));
        remainders.push((exact - q as f64, s));
    }
    // largest remainder first, ties to the earlier stratum
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut assigned: usize = quotas.iter().sum();
    for &(_, s) in remainders.iter().cycle().take(2 * remainders.len()) {
        if assigned >= target {
            break;
        }
        let len = strata.values().nth(s).map_or(0, Vec::len);
        if quotas[s] < len {
            quotas[s] += 1;
            assigned += 1;
        }
    }

    let rounds = (0..plan.rounds)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(plan.round_seed(r));
            let mut train = Vec::with_capacity(target);
            let mut test = Vec::with_capacity(n - target);
            for (members, &q) in strata.values().zip(&quotas) {
                let mut m = members.clone();
                m.shuffle(&mut rng);
                train.extend_from_slice(&m[..q]);
                test.extend_from_slice(&m[q..]);
            }
            train.sort_unstable();
            test.sort_unstable();
            Split { train, test }
        })
        .collect();
    Ok(SplitSet { rounds, warnings })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// occupied vs. empty
    State,
    /// exact occupant count, each count a class
    Quantity,
}

impl Task {
    pub fn labels(self, occupants: &[u32]) -> Vec<i64> {
        match self {
            Task::State => occupants.iter().map(|&o| i64::from(o > 0)).collect(),
            Task::Quantity => occupants.iter().map(|&o| i64::from(o)).collect(),
        }
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "state" => Ok(Task::State),
            "quantity" => Ok(Task::Quantity),
            other => Err(Error::invalid(
                "task",
                format!("`{other}`; valid: state, quantity"),
            )),
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::State => "state",
            Task::Quantity => "quantity",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOptions {
    pub folds: usize,
    pub solver: SolverConfig,
    /// Permutation repeats for test-set importance; 0 disables it.
    pub importance_repeats: usize,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions {
            folds: 5,
            solver: SolverConfig::default(),
            importance_repeats: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub rmse: f64,
    pub nrmse: Option<f64>,
    #[serde(rename = "C")]
    pub c: f64,
    pub gamma: f64,
    pub c_exp: i32,
    pub gamma_exp: i32,
    pub cv_accuracy: f64,
    pub expansions: u32,
    pub hit_max_expansions: bool,
    pub converged: bool,
    pub norm: NormStats,
    pub importance: Vec<FeatureImportance>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub rmse: f64,
    pub nrmse: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub tool_version: String,
    pub room_id: String,
    pub task: Task,
    pub features: Vec<String>,
    pub feature_set: String,
    /// Requested features the room cannot provide (e.g. HD without a
    /// usable horizontal pair).
    pub omitted_features: Vec<String>,
    pub vd_pair: Option<(String, String)>,
    pub hd_pair: Option<(String, String)>,
    pub interval_s: u32,
    pub n_rows: usize,
    pub master_seed: u64,
    pub round_seeds: Vec<u64>,
    pub folds: usize,
    pub grid: GridSpec,
    pub rounds: Vec<RoundReport>,
    pub mean: MetricSummary,
    pub sd: MetricSummary,
    pub importance: Vec<FeatureImportance>,
    pub warnings: Vec<String>,
}

fn summarize(rounds: &[RoundReport]) -> (MetricSummary, MetricSummary) {
    let col =
        |f: &dyn Fn(&RoundReport) -> f64| eval::mean_sd(&rounds.iter().map(f).collect::<Vec<_>>());
    let (am, asd) = col(&|r| r.accuracy);
    let (pm, psd) = col(&|r| r.precision);
    let (rm, rsd) = col(&|r| r.recall);
    let (fm, fsd) = col(&|r| r.f1);
    let (em, esd) = col(&|r| r.rmse);
    let nrmse: Option<Vec<f64>> = rounds.iter().map(|r| r.nrmse).collect();
    let (nm, nsd) = match nrmse {
        Some(v) => {
            let (m, s) = eval::mean_sd(&v);
            (Some(m), Some(s))
        }
        None => (None, None),
    };
    (
        MetricSummary {
            accuracy: am,
            precision: pm,
            recall: rm,
            f1: fm,
            rmse: em,
            nrmse: nm,
        },
        MetricSummary {
            accuracy: asd,
            precision: psd,
            recall: rsd,
            f1: fsd,
            rmse: esd,
            nrmse: nsd,
        },
    )
}

/// Resolves the feature pairs for a room. HD is dropped (and reported)
/// when the layout has no usable horizontal pair.
pub fn resolve_features(
    ds: &Dataset,
    kinds: &BTreeSet<FeatureKind>,
) -> Result<(FeatureSpec, Vec<String>)> {
    let mut kinds = kinds.clone();
    let mut omitted = Vec::new();
    if kinds.contains(&FeatureKind::Hd) {
        if let Err(Error::DegenerateHorizontal(_)) =
            crate::features::select_horizontal_pair(&ds.room.devices)
        {
            kinds.remove(&FeatureKind::Hd);
            omitted.push(FeatureKind::Hd.name().to_string());
        }
    }
    if kinds.is_empty() {
        return Err(Error::invalid(
            "features",
            "no usable features for this room",
        ));
    }
    Ok((FeatureSpec::for_room(kinds, &ds.room)?, omitted))
}

/// Runs the full protocol on one room: features, `plan.rounds` stratified
/// splits, per-round normalization and grid search on the training rows,
/// a final fit on all training rows and evaluation on the held-out rows.
pub fn run_experiment(
    ds: &Dataset,
    kinds: &BTreeSet<FeatureKind>,
    task: Task,
    plan: &SplitPlan,
    grid: &GridSpec,
    opts: &ExperimentOptions,
) -> Result<ExperimentReport> {
    let (spec, omitted) = resolve_features(ds, kinds)?;
    let fm = build_features(ds, &spec)?;
    run_prepared(ds, &spec, omitted, &fm, task, plan, grid, opts)
}

/// [`run_experiment`] on an already built feature matrix, which may carry
/// extra columns (for example a noise probe) beyond those of `spec`.
#[allow(clippy::too_many_arguments)]
pub fn run_prepared(
    ds: &Dataset,
    spec: &FeatureSpec,
    omitted: Vec<String>,
    fm: &FeatureMatrix,
    task: Task,
    plan: &SplitPlan,
    grid: &GridSpec,
    opts: &ExperimentOptions,
) -> Result<ExperimentReport> {
    plan.validate()?;
    grid.validate()?;
    let y = task.labels(&fm.occupants);
    if crate::svm::classes_of(&y).len() < 2 {
        return Err(Error::SingleClass(format!(
            "{task} labels have a single class"
        )));
    }
    let occupied: Vec<bool> = fm.occupants.iter().map(|&o| o > 0).collect();
    let seasons: Vec<Season> = fm
        .grid_index
        .iter()
        .map(|&i| Season::of(&ds.grid[i]))
        .collect();
    let splits = make_splits(&occupied, &seasons, plan)?;

    let mut rounds = Vec::with_capacity(plan.rounds);
    for (r, split) in splits.rounds.iter().enumerate() {
        let seed = plan.round_seed(r);
        let norm = NormStats::fit(&fm.x, &split.train, format!("round {r} train rows"))?;
        let xn = norm.apply(&fm.x)?;
        let x_train = xn.select_rows(&split.train);
        let y_train: Vec<i64> = split.train.iter().map(|&i| y[i]).collect();
        let outcome = grid_search(&x_train, &y_train, grid, opts.folds, seed, &opts.solver)?;
        let params = KernelParams::new(outcome.gamma(), outcome.c())?;
        let problem = TrainingProblem::balanced(x_train, y_train)?;
        let mut model =
            train_multiclass_path(&problem, params.gamma, &outcome.c_path(), &opts.solver)?;
        model.feature_names = fm.columns.clone();
        model.norm = Some(norm.clone());

        let x_test = xn.select_rows(&split.test);
        let y_test: Vec<i64> = split.test.iter().map(|&i| y[i]).collect();
        let y_hat = model.predict_all(&x_test)?;
        let metrics = MetricReport::compute(&y_test, &y_hat)?;
        let importance = if opts.importance_repeats > 0 {
            eval::permutation_importance(
                &model,
                &x_test,
                &y_test,
                &fm.columns,
                opts.importance_repeats,
                seed,
            )?
            .features
        } else {
            Vec::new()
        };
        rounds.push(RoundReport {
            round: r,
            seed,
            n_train: split.train.len(),
            n_test: split.test.len(),
            accuracy: metrics.accuracy,
            precision: metrics.precision,
            recall: metrics.recall,
            f1: metrics.f1,
            rmse: metrics.rmse,
            nrmse: metrics.nrmse,
            c: params.c,
            gamma: params.gamma,
            c_exp: outcome.c_exp,
            gamma_exp: outcome.gamma_exp,
            cv_accuracy: outcome.score,
            expansions: outcome.expansions,
            hit_max_expansions: outcome.hit_max_expansions,
            converged: model.converged(),
            norm,
            importance,
        });
    }

    let (mean, sd) = summarize(&rounds);
    let importance = if opts.importance_repeats > 0 {
        fm.columns
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let (m, s) = eval::mean_sd(
                    &rounds
                        .iter()
                        .map(|r| r.importance[j].mean)
                        .collect::<Vec<_>>(),
                );
                FeatureImportance {
                    feature: name.clone(),
                    mean: m,
                    sd: s,
                }
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(ExperimentReport {
        tool_version: crate::TOOL_VERSION.to_string(),
        room_id: ds.room.room_id.clone(),
        task,
        features: fm.columns.clone(),
        feature_set: feature_set_label(&spec.kinds),
        omitted_features: omitted,
        vd_pair: spec.vd_pair.clone(),
        hd_pair: spec.hd_pair.clone(),
        interval_s: ds.interval_s,
        n_rows: fm.n_rows(),
        master_seed: plan.seed,
        round_seeds: (0..plan.rounds).map(|r| plan.round_seed(r)).collect(),
        folds: opts.folds,
        grid: grid.clone(),
        rounds,
        mean,
        sd,
        importance,
        warnings: splits.warnings,
    })
}
