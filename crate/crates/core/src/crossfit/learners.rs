//! One-sided regression learners used inside the localized adjusters.
//!
//! Linear, ridge and lasso work from weighted sufficient statistics per
//! training group, so a group's contribution is computed once and shared by
//! every fold that trains on it. kNN and the ensemble work from rows.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::SliceRandom;

use crate::data::Covariates;
use crate::linalg::{nnls, Mat, SymEigen};
use crate::seed::{stream_rng, Stream};

/// Built-in one-sided learners.
#[derive(Debug, Clone, PartialEq)]
pub enum Learner {
    Linear,
    Ridge,
    Lasso,
    Knn,
    Ensemble(Vec<Learner>),
}

impl Learner {
    pub fn name(&self) -> &'static str {
        match self {
            Learner::Linear => "linear",
            Learner::Ridge => "ridge",
            Learner::Lasso => "lasso",
            Learner::Knn => "knn",
            Learner::Ensemble(_) => "ensemble",
        }
    }

    /// Linear, ridge, lasso and kNN.
    pub fn default_ensemble() -> Learner {
        Learner::Ensemble(vec![
            Learner::Linear,
            Learner::Ridge,
            Learner::Lasso,
            Learner::Knn,
        ])
    }

    fn needs_stats(&self) -> bool {
        match self {
            Learner::Knn => false,
            Learner::Ensemble(c) => c.iter().any(Learner::needs_stats),
            _ => true,
        }
    }
}

/// Fitted one-sided regression function.
#[derive(Debug, Clone, PartialEq)]
pub enum SideModel {
    Linear {
        intercept: f64,
        coef: Vec<f64>,
    },
    Knn(KnnModel),
    Ensemble {
        weights: Vec<f64>,
        members: Vec<SideModel>,
    },
}

impl SideModel {
    pub fn predict(&self, z: &[f64]) -> f64 {
        match self {
            SideModel::Linear { intercept, coef } => {
                intercept + coef.iter().zip(z).map(|(c, v)| c * v).sum::<f64>()
            }
            SideModel::Knn(m) => m.predict(z),
            SideModel::Ensemble { weights, members } => weights
                .iter()
                .zip(members)
                .filter(|(w, _)| **w != 0.0)
                .map(|(w, m)| w * m.predict(z))
                .sum(),
        }
    }
}

/// Weighted sums `Σw, Σw z, Σw y, Σw z z', Σw z y, Σw y²` and a row count.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStats {
    pub count: usize,
    pub sw: f64,
    pub sz: Vec<f64>,
    pub sy: f64,
    pub szz: Vec<f64>,
    pub szy: Vec<f64>,
    pub syy: f64,
}

impl GroupStats {
    pub fn zeros(d: usize) -> Self {
        GroupStats {
            count: 0,
            sw: 0.0,
            sz: vec![0.0; d],
            sy: 0.0,
            szz: vec![0.0; d * d],
            szy: vec![0.0; d],
            syy: 0.0,
        }
    }

    pub fn from_rows(z: &Covariates, y: &[f64], w: &[f64], rows: &[usize]) -> Self {
        let d = z.ncols();
        let mut s = GroupStats::zeros(d);
        for &i in rows {
            let wi = w[i];
            if wi <= 0.0 {
                continue;
            }
            let zi = z.row(i);
            s.count += 1;
            s.sw += wi;
            s.sy += wi * y[i];
            s.syy += wi * y[i] * y[i];
            for a in 0..d {
                let wza = wi * zi[a];
                s.sz[a] += wza;
                s.szy[a] += wza * y[i];
                let row = &mut s.szz[a * d..(a + 1) * d];
                for b in a..d {
                    row[b] += wza * zi[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                s.szz[a * d + b] = s.szz[b * d + a];
            }
        }
        s
    }

    pub fn add(&mut self, o: &GroupStats) {
        self.count += o.count;
        self.sw += o.sw;
        self.sy += o.sy;
        self.syy += o.syy;
        for (a, b) in self.sz.iter_mut().zip(&o.sz) {
            *a += b;
        }
        for (a, b) in self.szy.iter_mut().zip(&o.szy) {
            *a += b;
        }
        for (a, b) in self.szz.iter_mut().zip(&o.szz) {
            *a += b;
        }
    }

    fn sum<'a>(d: usize, parts: impl Iterator<Item = GroupStatsRef<'a>>) -> GroupStats {
        let mut s = GroupStats::zeros(d);
        for p in parts {
            s.add(p.0);
        }
        s
    }

    /// Weighted squared error of `a + z'b` over this group.
    pub fn loss(&self, a: f64, b: &[f64]) -> f64 {
        let d = b.len();
        let mut quad = 0.0;
        for i in 0..d {
            if b[i] == 0.0 {
                continue;
            }
            let row = &self.szz[i * d..(i + 1) * d];
            quad += b[i] * row.iter().zip(b).map(|(g, bj)| g * bj).sum::<f64>();
        }
        let bzy: f64 = b.iter().zip(&self.szy).map(|(x, y)| x * y).sum();
        let bz: f64 = b.iter().zip(&self.sz).map(|(x, y)| x * y).sum();
        (self.syy - 2.0 * a * self.sy - 2.0 * bzy + a * a * self.sw + 2.0 * a * bz + quad).max(0.0)
    }
}

struct GroupStatsRef<'a>(&'a GroupStats);

/// Standardized, centered normal equations built from [`GroupStats`].
struct Standardized {
    mean: Vec<f64>,
    sd: Vec<f64>,
    /// Columns with positive variance.
    keep: Vec<usize>,
    gram: Mat,
    c: Vec<f64>,
    ybar: f64,
    vy: f64,
}

impl Standardized {
    fn new(s: &GroupStats) -> Self {
        let d = s.sz.len();
        let sw = s.sw;
        let mean: Vec<f64> = s.sz.iter().map(|v| v / sw).collect();
        let ybar = s.sy / sw;
        let mut sd = vec![0.0; d];
        let mut keep = Vec::new();
        for j in 0..d {
            let second = s.szz[j * d + j] / sw;
            let var = second - mean[j] * mean[j];
            if var > 1e-10 * second.max(f64::MIN_POSITIVE) && var > 0.0 {
                sd[j] = var.sqrt();
                keep.push(j);
            }
        }
        let k = keep.len();
        let mut gram = Mat::zeros(k, k);
        let mut c = vec![0.0; k];
        for (a, &ja) in keep.iter().enumerate() {
            for (b, &jb) in keep.iter().enumerate().skip(a) {
                let cov = s.szz[ja * d + jb] / sw - mean[ja] * mean[jb];
                let g = cov / (sd[ja] * sd[jb]);
                gram[(a, b)] = g;
                gram[(b, a)] = g;
            }
            c[a] = (s.szy[ja] / sw - mean[ja] * ybar) / sd[ja];
        }
        let vy = (s.syy / sw - ybar * ybar).max(0.0);
        Standardized {
            mean,
            sd,
            keep,
            gram,
            c,
            ybar,
            vy,
        }
    }

    /// Maps standardized coefficients on `keep` back to `(intercept, coef)`.
    fn unstandardize(&self, beta: &[f64]) -> (f64, Vec<f64>) {
        let mut coef = vec![0.0; self.mean.len()];
        let mut intercept = self.ybar;
        for (b, &j) in beta.iter().zip(&self.keep) {
            coef[j] = b / self.sd[j];
            intercept -= coef[j] * self.mean[j];
        }
        (intercept, coef)
    }

    fn model(&self, beta: &[f64]) -> SideModel {
        let (intercept, coef) = self.unstandardize(beta);
        SideModel::Linear { intercept, coef }
    }

    /// `RSS / Σw` of standardized coefficients on the training data.
    fn mse(&self, beta: &[f64]) -> f64 {
        let gb = self.gram.mul_vec(beta);
        let bgb: f64 = beta.iter().zip(&gb).map(|(a, b)| a * b).sum();
        let bc: f64 = beta.iter().zip(&self.c).map(|(a, b)| a * b).sum();
        (self.vy - 2.0 * bc + bgb).max(0.0)
    }
}

/// Training data of one side: window weights and a partition of the rows
/// with positive weight into groups.
pub(crate) struct SideCtx<'a> {
    pub z: &'a Covariates,
    pub y: &'a [f64],
    pub w: &'a [f64],
    pub groups: Vec<Vec<usize>>,
    pub stats: Vec<GroupStats>,
}

impl<'a> SideCtx<'a> {
    pub fn new(
        z: &'a Covariates,
        y: &'a [f64],
        w: &'a [f64],
        groups: Vec<Vec<usize>>,
        with_stats: bool,
    ) -> Self {
        let stats = if with_stats {
            groups
                .iter()
                .map(|g| GroupStats::from_rows(z, y, w, g))
                .collect()
        } else {
            Vec::new()
        };
        SideCtx {
            z,
            y,
            w,
            groups,
            stats,
        }
    }

    fn total(&self, train: &[usize]) -> GroupStats {
        GroupStats::sum(
            self.z.ncols(),
            train.iter().map(|&g| GroupStatsRef(&self.stats[g])),
        )
    }

    fn rows(&self, train: &[usize]) -> Vec<usize> {
        let mut r: Vec<usize> = train
            .iter()
            .flat_map(|&g| self.groups[g].iter().copied())
            .collect();
        r.sort_unstable();
        r
    }

    pub fn count(&self, train: &[usize]) -> usize {
        train.iter().map(|&g| self.groups[g].len()).sum()
    }
}

/// Minimum number of validation groups used for internal cross-validation.
const MIN_CV_GROUPS: usize = 3;
/// Number of groups used when the training groups are too few.
const CV_FOLDS: usize = 5;

/// Runs `f` with a context whose groups can serve as CV folds: the training
/// groups themselves when there are enough of them, otherwise a seeded
/// random partition of their rows.
fn with_cv_groups<R>(
    ctx: &SideCtx<'_>,
    train: &[usize],
    seed: u64,
    with_stats: bool,
    f: impl FnOnce(&SideCtx<'_>, &[usize]) -> R,
) -> R {
    if train.len() >= MIN_CV_GROUPS {
        return f(ctx, train);
    }
    let mut rows = ctx.rows(train);
    let mut rng = stream_rng(seed, Stream::AdjusterCv, 0);
    rows.shuffle(&mut rng);
    let k = CV_FOLDS.min(rows.len()).max(1);
    let mut groups = vec![Vec::new(); k];
    for (j, i) in rows.into_iter().enumerate() {
        groups[j % k].push(i);
    }
    for g in groups.iter_mut() {
        g.sort_unstable();
    }
    let sub = SideCtx::new(ctx.z, ctx.y, ctx.w, groups, with_stats);
    let ids: Vec<usize> = (0..k).collect();
    f(&sub, &ids)
}

/// Fits `learner` on the union of groups `train`.
pub(crate) fn fit_side(
    learner: &Learner,
    ctx: &SideCtx<'_>,
    train: &[usize],
    seed: u64,
) -> SideModel {
    match learner {
        Learner::Linear => fit_linear(&ctx.total(train)),
        Learner::Ridge => fit_ridge(&ctx.total(train)),
        Learner::Lasso => with_cv_groups(ctx, train, seed, true, fit_lasso_cv),
        Learner::Knn => SideModel::Knn(KnnModel::fit(ctx.z, ctx.y, &ctx.rows(train))),
        Learner::Ensemble(cands) => {
            let stats = cands.iter().any(Learner::needs_stats);
            with_cv_groups(ctx, train, seed, stats, |c, ids| {
                fit_ensemble(cands, c, ids, seed)
            })
        }
    }
}

pub(crate) fn learner_needs_stats(l: &Learner) -> bool {
    l.needs_stats()
}

fn constant_model(s: &GroupStats) -> SideModel {
    let d = s.sz.len();
    let ybar = if s.sw > 0.0 { s.sy / s.sw } else { 0.0 };
    SideModel::Linear {
        intercept: ybar,
        coef: vec![0.0; d],
    }
}

fn fit_linear(s: &GroupStats) -> SideModel {
    if s.count == 0 {
        return constant_model(s);
    }
    let st = Standardized::new(s);
    if st.keep.is_empty() {
        return constant_model(s);
    }
    let eig = SymEigen::new(&st.gram);
    let beta = eig.pinv_solve(&st.c, 1e-10);
    st.model(&beta)
}

const RIDGE_GRID: usize = 40;

fn fit_ridge(s: &GroupStats) -> SideModel {
    if s.count == 0 {
        return constant_model(s);
    }
    let st = Standardized::new(s);
    let k = st.keep.len();
    if k == 0 {
        return constant_model(s);
    }
    let eig = SymEigen::new(&st.gram);
    let proj = eig.project(&st.c);
    let n = s.count as f64;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for i in 0..RIDGE_GRID {
        let lambda = 10f64.powf(-4.0 + 8.0 * i as f64 / (RIDGE_GRID - 1) as f64);
        let mut beta = vec![0.0; k];
        let mut df = 1.0;
        for m in 0..k {
            let ev = eig.values[m].max(0.0);
            df += ev / (ev + lambda);
            let coef = proj[m] / (ev + lambda);
            for j in 0..k {
                beta[j] += coef * eig.vectors[(j, m)];
            }
        }
        let denom = 1.0 - df / n;
        if denom <= 0.0 {
            continue;
        }
        let gcv = st.mse(&beta) / (denom * denom);
        if best.as_ref().is_none_or(|(b, _)| gcv < *b) {
            best = Some((gcv, beta));
        }
    }
    match best {
        Some((_, beta)) => st.model(&beta),
        None => constant_model(s),
    }
}

const LASSO_PATH: usize = 25;
const LASSO_MIN_RATIO: f64 = 1e-3;
const LASSO_MAX_SWEEPS: usize = 2000;

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Coordinate descent for `½ β'Gβ - c'β + λ|β|₁`, warm-started from `beta`.
/// Stops once the largest `G_jj δ²` over a sweep falls below `tol`.
fn lasso_cd(g: &Mat, c: &[f64], lambda: f64, beta: &mut [f64], grad: &mut [f64], tol: f64) {
    let k = c.len();
    let update = |j: usize, beta: &mut [f64], grad: &mut [f64]| -> f64 {
        let gjj = g[(j, j)];
        if gjj <= 0.0 {
            return 0.0;
        }
        let rho = c[j] - grad[j] + gjj * beta[j];
        let new = soft_threshold(rho, lambda) / gjj;
        let delta = new - beta[j];
        if delta != 0.0 {
            beta[j] = new;
            let row = g.row(j);
            for (gr, gv) in grad.iter_mut().zip(row) {
                *gr += gv * delta;
            }
        }
        gjj * delta * delta
    };
    for _ in 0..LASSO_MAX_SWEEPS {
        let mut max_change = 0.0_f64;
        for j in 0..k {
            max_change = max_change.max(update(j, beta, grad));
        }
        if max_change < tol {
            return;
        }
        // Iterate on the active set until it settles, then re-check all.
        let active: Vec<usize> = (0..k).filter(|&j| beta[j] != 0.0).collect();
        for _ in 0..LASSO_MAX_SWEEPS {
            let mut ch = 0.0_f64;
            for &j in &active {
                ch = ch.max(update(j, beta, grad));
            }
            if ch < tol {
                break;
            }
        }
    }
}

fn lambda_grid(lambda_max: f64) -> Vec<f64> {
    (0..LASSO_PATH)
        .map(|i| lambda_max * LASSO_MIN_RATIO.powf(i as f64 / (LASSO_PATH - 1) as f64))
        .collect()
}

/// Solutions along `lambdas` (in decreasing order) for one standardized
/// problem.
fn lasso_path(st: &Standardized, lambdas: &[f64]) -> Vec<Vec<f64>> {
    let k = st.keep.len();
    let mut beta = vec![0.0; k];
    let mut grad = vec![0.0; k];
    let tol = 1e-7 * st.vy.max(1e-24);
    lambdas
        .iter()
        .map(|&lam| {
            lasso_cd(&st.gram, &st.c, lam, &mut beta, &mut grad, tol);
            beta.clone()
        })
        .collect()
}

/// Lasso with the penalty chosen by cross-validation over the groups `ids`.
fn fit_lasso_cv(ctx: &SideCtx<'_>, ids: &[usize]) -> SideModel {
    let full = ctx.total(ids);
    if full.count == 0 {
        return constant_model(&full);
    }
    let st = Standardized::new(&full);
    if st.keep.is_empty() {
        return constant_model(&full);
    }
    let lambda_max = st.c.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if lambda_max == 0.0 {
        return constant_model(&full);
    }
    let lambdas = lambda_grid(lambda_max);
    let mut cv_loss = vec![0.0; lambdas.len()];
    let d = ctx.z.ncols();
    for &held in ids {
        let val = &ctx.stats[held];
        if val.count == 0 {
            continue;
        }
        let train: Vec<usize> = ids.iter().copied().filter(|&g| g != held).collect();
        let tr = GroupStats::sum(d, train.iter().map(|&g| GroupStatsRef(&ctx.stats[g])));
        if tr.count == 0 {
            continue;
        }
        let st_tr = Standardized::new(&tr);
        let path = lasso_path(&st_tr, &lambdas);
        for (l, beta) in path.iter().enumerate() {
            let (a, b) = st_tr.unstandardize(beta);
            cv_loss[l] += val.loss(a, &b);
        }
    }
    let best = (0..lambdas.len())
        .min_by(|&a, &b| cv_loss[a].total_cmp(&cv_loss[b]))
        .unwrap_or(0);
    let path = lasso_path(&st, &lambdas[..=best]);
    st.model(&path[best])
}

/// k-nearest-neighbor regression in standardized covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    k: usize,
    mean: Vec<f64>,
    scale: Vec<f64>,
    z: Vec<f64>,
    y: Vec<f64>,
}

impl KnnModel {
    pub fn fit(z: &Covariates, y: &[f64], rows: &[usize]) -> Self {
        let d = z.ncols();
        let n = rows.len();
        let mut mean = vec![0.0; d];
        let mut scale = vec![0.0; d];
        if n > 0 {
            for &i in rows {
                for (m, v) in mean.iter_mut().zip(z.row(i)) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= n as f64);
            for &i in rows {
                for ((s, m), v) in scale.iter_mut().zip(&mean).zip(z.row(i)) {
                    *s += (v - m) * (v - m);
                }
            }
            for s in scale.iter_mut() {
                let sd = (*s / (n as f64 - 1.0).max(1.0)).sqrt();
                // Constant columns carry no distance information.
                *s = if sd > 1e-12 { 1.0 / sd } else { 0.0 };
            }
        }
        let mut zs = Vec::with_capacity(n * d);
        for &i in rows {
            for ((v, m), s) in z.row(i).iter().zip(&mean).zip(&scale) {
                zs.push((v - m) * s);
            }
        }
        let k = ((n as f64).sqrt().round() as usize).max(5).min(n);
        KnnModel {
            k,
            mean,
            scale,
            z: zs,
            y: rows.iter().map(|&i| y[i]).collect(),
        }
    }

    pub fn predict(&self, z: &[f64]) -> f64 {
        let n = self.y.len();
        if n == 0 {
            return 0.0;
        }
        let d = self.mean.len();
        let q: Vec<f64> = z
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) * s)
            .collect();
        let mut dist: Vec<(f64, usize)> = (0..n)
            .map(|i| {
                let row = &self.z[i * d..(i + 1) * d];
                (
                    row.iter()
                        .zip(&q)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>(),
                    i,
                )
            })
            .collect();
        let k = self.k;
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < n {
            dist.select_nth_unstable_by(k - 1, cmp);
        }
        dist[..k].iter().map(|&(_, i)| self.y[i]).sum::<f64>() / k as f64
    }
}

/// Convex combination of candidate learners with weights from non-negative
/// least squares on held-out predictions.
fn fit_ensemble(cands: &[Learner], ctx: &SideCtx<'_>, ids: &[usize], seed: u64) -> SideModel {
    let c = cands.len();
    let rows_total = ctx.count(ids);
    if rows_total == 0 || c == 0 {
        return constant_model(&GroupStats::zeros(ctx.z.ncols()));
    }
    let mut pred = Mat::zeros(rows_total, c);
    let mut target = Vec::with_capacity(rows_total);
    let mut r = 0;
    for (pos, &held) in ids.iter().enumerate() {
        let train: Vec<usize> = ids.iter().copied().filter(|&g| g != held).collect();
        let models: Vec<SideModel> = cands
            .iter()
            .enumerate()
            .map(|(ci, l)| fit_side(l, ctx, &train, seed ^ ((pos as u64) << 8 | ci as u64)))
            .collect();
        for &i in &ctx.groups[held] {
            let sw = ctx.w[i].sqrt();
            for (ci, m) in models.iter().enumerate() {
                pred[(r, ci)] = sw * m.predict(ctx.z.row(i));
            }
            target.push(sw * ctx.y[i]);
            r += 1;
        }
    }
    let mut weights = nnls(&pred, &target);
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        weights.iter_mut().for_each(|w| *w /= total);
    } else {
        weights = vec![1.0 / c as f64; c];
    }
    let members = cands
        .iter()
        .enumerate()
        .map(|(ci, l)| fit_side(l, ctx, ids, seed ^ (0xff00 | ci as u64)))
        .collect();
    SideModel::Ensemble { weights, members }
}
