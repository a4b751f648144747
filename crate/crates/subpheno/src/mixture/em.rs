//! EM fitting of parameterized Gaussian mixtures.
//!
//! The E-step computes responsibilities through log-densities and
//! log-sum-exp. The M-step maximizes the complete-data likelihood under
//! the parameterization's constraints: closed forms where they exist,
//! and a capped flip-flop alternation between the shape and volume blocks
//! for VEI, EVI and VEV. Seeding the alternation from the previous
//! iteration's factors keeps every M-step an ascent step, so the observed
//! log-likelihood trace is nondecreasing.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mixture::{
    bic, CovarianceParameterization, MixtureModel, OrientationKind, Responsibilities,
};
use crate::seed;

/// Scatter-diagonal ridge, relative to the average per-axis variance.
const RIDGE_REL: f64 = 1e-8;
/// Flip-flop cap for the VEI/EVI/VEV inner M-step.
const MAX_INNER: usize = 20;
const INNER_TOL: f64 = 1e-8;
/// Component re-seeds tolerated before a run is declared failed.
const MAX_RESEEDS: usize = 3;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Covariance factors of a fitted or in-progress model.
#[derive(Debug, Clone)]
pub struct CovarianceFactors {
    pub volumes: Vec<f64>,
    pub shapes: Vec<Array1<f64>>,
    pub orientations: Vec<Array2<f64>>,
}

/// Output of one M-step.
#[derive(Debug, Clone)]
pub struct MStepResult {
    pub weights: Vec<f64>,
    pub means: Array2<f64>,
    pub factors: CovarianceFactors,
}

/// Initialization scheme for EM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitStrategy {
    /// k-means++ center seeding, hard labels by nearest center, one M-step.
    #[default]
    KMeansPlusPlus,
    /// Shuffled round-robin labels; useful for stress-testing EM itself.
    RandomPartition,
}

/// EM controls.
#[derive(Debug, Clone, Copy)]
pub struct EmOptions {
    /// Relative log-likelihood change below which the fit has converged.
    pub tol: f64,
    pub max_iter: usize,
    pub init: InitStrategy,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            tol: 1e-6,
            max_iter: 500,
            init: InitStrategy::KMeansPlusPlus,
        }
    }
}

fn geometric_mean(v: &Array1<f64>) -> f64 {
    (v.iter().map(|x| x.ln()).sum::<f64>() / v.len() as f64).exp()
}

/// Eigendecomposition of a symmetric matrix, eigenvalues descending,
/// eigenvectors as matching columns.
fn sym_eigen_desc(m: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let d = m.nrows();
    let na_m = nalgebra::DMatrix::from_fn(d, d, |i, j| m[(i, j)]);
    let eig = na_m.symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut values = Array1::zeros(d);
    let mut vectors = Array2::zeros((d, d));
    for (new_j, &old_j) in order.iter().enumerate() {
        values[new_j] = eig.eigenvalues[old_j];
        for i in 0..d {
            vectors[(i, new_j)] = eig.eigenvectors[(i, old_j)];
        }
    }
    (values, vectors)
}

fn identity(d: usize) -> Array2<f64> {
    Array2::eye(d)
}

/// Per-row, per-component Gaussian log-densities (without mixing weights).
fn log_densities(model: &MixtureModel, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let (n, d) = x.dim();
    if d != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: d,
        });
    }
    let k = model.k();
    let axis_aligned = matches!(
        model.parameterization.decode().orientation,
        OrientationKind::None | OrientationKind::CoordinateAxes
    );
    let mut out = Array2::zeros((n, k));
    for kk in 0..k {
        let lambda = model.volumes[kk];
        let shape = &model.shapes[kk];
        if lambda <= 0.0 || !lambda.is_finite() || shape.iter().any(|a| *a <= 0.0 || !a.is_finite())
        {
            return Err(Error::NotPositiveDefinite(kk));
        }
        let log_det: f64 = (d as f64) * lambda.ln() + shape.iter().map(|a| a.ln()).sum::<f64>();
        let inv_scale: Vec<f64> = shape.iter().map(|a| 1.0 / (lambda * a)).collect();
        let mean = model.means.row(kk);

        let mut centered = x.to_owned();
        for mut row in centered.rows_mut() {
            row -= &mean;
        }
        let rotated = if axis_aligned {
            centered
        } else {
            centered.dot(&model.orientations[kk])
        };
        for (i, row) in rotated.rows().into_iter().enumerate() {
            let q: f64 = row
                .iter()
                .zip(&inv_scale)
                .map(|(y, s)| y * y * s)
                .sum();
            out[(i, kk)] = -0.5 * (d as f64 * LN_2PI + log_det + q);
        }
    }
    Ok(out)
}

/// Posterior responsibilities and the observed-data log-likelihood.
pub fn e_step(model: &MixtureModel, x: ArrayView2<'_, f64>) -> Result<(Responsibilities, f64)> {
    let log_dens = log_densities(model, x)?;
    let (n, k) = log_dens.dim();
    let mut gamma = Array2::zeros((n, k));
    let mut loglik = 0.0;
    for i in 0..n {
        let mut max = f64::NEG_INFINITY;
        for kk in 0..k {
            let v = log_dens[(i, kk)] + model.weights[kk].ln();
            gamma[(i, kk)] = v;
            if v > max {
                max = v;
            }
        }
        let mut sum = 0.0;
        for kk in 0..k {
            let e = (gamma[(i, kk)] - max).exp();
            gamma[(i, kk)] = e;
            sum += e;
        }
        let lse = max + sum.ln();
        if !lse.is_finite() {
            return Err(Error::FitFailed(format!(
                "non-finite log-likelihood at row {i}"
            )));
        }
        loglik += lse;
        for kk in 0..k {
            gamma[(i, kk)] /= sum;
        }
    }
    Ok((Responsibilities(gamma), loglik))
}

/// Weighted scatter matrices `W_k` with a stabilizing diagonal ridge.
fn scatter_matrices(
    x: ArrayView2<'_, f64>,
    gamma: &Array2<f64>,
    means: &Array2<f64>,
) -> Vec<Array2<f64>> {
    let (n, d) = x.dim();
    let k = gamma.ncols();
    let mut w: Vec<Array2<f64>> = Vec::with_capacity(k);
    for kk in 0..k {
        let mean = means.row(kk);
        let mut weighted = x.to_owned();
        for (i, mut row) in weighted.rows_mut().into_iter().enumerate() {
            row -= &mean;
            row *= gamma[(i, kk)].sqrt();
        }
        w.push(weighted.t().dot(&weighted));
    }
    let total_trace: f64 = w.iter().map(|wk| wk.diag().sum()).sum();
    let ridge = RIDGE_REL * total_trace / (n as f64 * d as f64);
    if ridge > 0.0 {
        for wk in &mut w {
            for j in 0..d {
                wk[(j, j)] += ridge;
            }
        }
    }
    w
}

/// Constrained covariance maximization given scatter matrices.
fn covariance_step(
    param: CovarianceParameterization,
    w: &[Array2<f64>],
    n_k: &[f64],
    n: f64,
    prev: Option<&CovarianceFactors>,
) -> Result<CovarianceFactors> {
    use CovarianceParameterization::*;
    let k = w.len();
    let d = w[0].nrows();
    let eye_all = || vec![identity(d); k];
    let ones_all = || vec![Array1::ones(d); k];

    let diag_of = |wk: &Array2<f64>| -> Array1<f64> { wk.diag().to_owned() };

    let factors = match param {
        EII => {
            let total: f64 = w.iter().map(|wk| wk.diag().sum()).sum();
            let lambda = total / (n * d as f64);
            CovarianceFactors {
                volumes: vec![lambda; k],
                shapes: ones_all(),
                orientations: eye_all(),
            }
        }
        VII => {
            let volumes = (0..k)
                .map(|kk| w[kk].diag().sum() / (n_k[kk] * d as f64))
                .collect();
            CovarianceFactors {
                volumes,
                shapes: ones_all(),
                orientations: eye_all(),
            }
        }
        EEI => {
            let mut pooled = Array1::zeros(d);
            for wk in w {
                pooled += &diag_of(wk);
            }
            let gm = geometric_mean(&pooled);
            CovarianceFactors {
                volumes: vec![gm / n; k],
                shapes: vec![pooled / gm; k],
                orientations: eye_all(),
            }
        }
        VEI => {
            let diags: Vec<Array1<f64>> = w.iter().map(diag_of).collect();
            let (volumes, shape) = flip_flop(&diags, n_k, prev, d)?;
            CovarianceFactors {
                volumes,
                shapes: vec![shape; k],
                orientations: eye_all(),
            }
        }
        EVI => {
            let mut lambda = 0.0;
            let mut shapes = Vec::with_capacity(k);
            for wk in w {
                let diag = diag_of(wk);
                let gm = geometric_mean(&diag);
                shapes.push(diag / gm);
                lambda += gm;
            }
            CovarianceFactors {
                volumes: vec![lambda / n; k],
                shapes,
                orientations: eye_all(),
            }
        }
        VVI => {
            let mut volumes = Vec::with_capacity(k);
            let mut shapes = Vec::with_capacity(k);
            for (kk, wk) in w.iter().enumerate() {
                let sigma_diag = diag_of(wk) / n_k[kk];
                let gm = geometric_mean(&sigma_diag);
                volumes.push(gm);
                shapes.push(sigma_diag / gm);
            }
            CovarianceFactors {
                volumes,
                shapes,
                orientations: eye_all(),
            }
        }
        EEE => {
            let mut pooled = Array2::zeros((d, d));
            for wk in w {
                pooled += wk;
            }
            pooled /= n;
            let (evals, evecs) = sym_eigen_desc(&pooled);
            let evals = clamp_positive(evals)?;
            let gm = geometric_mean(&evals);
            CovarianceFactors {
                volumes: vec![gm; k],
                shapes: vec![evals / gm; k],
                orientations: vec![evecs; k],
            }
        }
        EEV => {
            let mut omegas = Vec::with_capacity(k);
            let mut orientations = Vec::with_capacity(k);
            for wk in w {
                let (evals, evecs) = sym_eigen_desc(wk);
                omegas.push(clamp_positive(evals)?);
                orientations.push(evecs);
            }
            let mut pooled = Array1::zeros(d);
            for o in &omegas {
                pooled += o;
            }
            let gm = geometric_mean(&pooled);
            CovarianceFactors {
                volumes: vec![gm / n; k],
                shapes: vec![pooled / gm; k],
                orientations,
            }
        }
        VEV => {
            let mut omegas = Vec::with_capacity(k);
            let mut orientations = Vec::with_capacity(k);
            for wk in w {
                let (evals, evecs) = sym_eigen_desc(wk);
                omegas.push(clamp_positive(evals)?);
                orientations.push(evecs);
            }
            let (volumes, shape) = flip_flop(&omegas, n_k, prev, d)?;
            CovarianceFactors {
                volumes,
                shapes: vec![shape; k],
                orientations,
            }
        }
        VVV => {
            let mut volumes = Vec::with_capacity(k);
            let mut shapes = Vec::with_capacity(k);
            let mut orientations = Vec::with_capacity(k);
            for (kk, wk) in w.iter().enumerate() {
                let (evals, evecs) = sym_eigen_desc(wk);
                let evals = clamp_positive(evals)? / n_k[kk];
                let gm = geometric_mean(&evals);
                volumes.push(gm);
                shapes.push(evals / gm);
                orientations.push(evecs);
            }
            CovarianceFactors {
                volumes,
                shapes,
                orientations,
            }
        }
    };
    for (kk, lambda) in factors.volumes.iter().enumerate() {
        if *lambda <= 0.0 || !lambda.is_finite() {
            return Err(Error::NotPositiveDefinite(kk));
        }
    }
    Ok(factors)
}

fn clamp_positive(mut evals: Array1<f64>) -> Result<Array1<f64>> {
    if evals.iter().all(|e| !e.is_finite()) {
        return Err(Error::FitFailed("eigendecomposition failed".into()));
    }
    let max = evals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max <= 0.0 {
        return Err(Error::FitFailed("degenerate scatter matrix".into()));
    }
    let floor = max * 1e-14;
    evals.mapv_inplace(|e| e.max(floor));
    Ok(evals)
}

/// Alternate between per-component volumes and a shared shape until the
/// complete-data objective stabilizes. `diags` holds the scatter spectra
/// in the shape basis (diagonals for axis-aligned models, eigenvalues for
/// VEV). Starting from the previous shape keeps the step monotone.
fn flip_flop(
    diags: &[Array1<f64>],
    n_k: &[f64],
    prev: Option<&CovarianceFactors>,
    d: usize,
) -> Result<(Vec<f64>, Array1<f64>)> {
    let k = diags.len();
    let mut shape = match prev {
        Some(f)
            if f.shapes[0].len() == d
                && f.shapes[0].iter().all(|a| *a > 0.0 && a.is_finite()) =>
        {
            f.shapes[0].clone()
        }
        _ => {
            // Pooled-spectrum start (the matching equal-volume solution).
            let mut pooled = Array1::zeros(d);
            for dk in diags {
                pooled += dk;
            }
            let gm = geometric_mean(&pooled);
            pooled / gm
        }
    };
    let mut volumes = vec![0.0; k];
    let mut prev_obj = f64::INFINITY;
    for _ in 0..MAX_INNER {
        for kk in 0..k {
            let tr: f64 = diags[kk]
                .iter()
                .zip(shape.iter())
                .map(|(o, a)| o / a)
                .sum();
            volumes[kk] = tr / (n_k[kk] * d as f64);
            if volumes[kk] <= 0.0 || !volumes[kk].is_finite() {
                return Err(Error::FitFailed("flip-flop produced bad volume".into()));
            }
        }
        let mut pooled = Array1::zeros(d);
        for (kk, dk) in diags.iter().enumerate() {
            pooled = pooled + dk / volumes[kk];
        }
        let gm = geometric_mean(&pooled);
        shape = pooled / gm;

        // Complete-data covariance objective (up to constants).
        let obj: f64 = (0..k)
            .map(|kk| {
                let tr: f64 = diags[kk]
                    .iter()
                    .zip(shape.iter())
                    .map(|(o, a)| o / a)
                    .sum();
                tr / volumes[kk] + n_k[kk] * d as f64 * volumes[kk].ln()
            })
            .sum();
        if (prev_obj - obj).abs() <= INNER_TOL * obj.abs().max(1.0) {
            break;
        }
        prev_obj = obj;
    }
    Ok((volumes, shape))
}

/// One constrained maximization step.
///
/// `prev` seeds the iterative inner step for VEI/EVI/VEV; pass the current
/// model's factors during EM, or `None` for a fresh start. A component
/// whose soft count falls below `d + 1` raises [`Error::EmptyComponent`]
/// as a restart signal.
pub fn m_step(
    x: ArrayView2<'_, f64>,
    resp: &Responsibilities,
    param: CovarianceParameterization,
    prev: Option<&CovarianceFactors>,
) -> Result<MStepResult> {
    let (n, d) = x.dim();
    let gamma = &resp.0;
    if gamma.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: gamma.nrows(),
        });
    }
    let k = gamma.ncols();
    let n_k: Vec<f64> = gamma.sum_axis(Axis(0)).to_vec();
    let floor = (d + 1) as f64;
    for (kk, &count) in n_k.iter().enumerate() {
        if !(count > 0.0) {
            return Err(Error::Data(format!(
                "responsibility column {kk} sums to {count}"
            )));
        }
        if count < floor {
            return Err(Error::EmptyComponent {
                component: kk,
                count,
                floor,
            });
        }
    }

    let mut means = gamma.t().dot(&x);
    for (kk, mut row) in means.rows_mut().into_iter().enumerate() {
        row /= n_k[kk];
    }
    let weights: Vec<f64> = n_k.iter().map(|c| c / n as f64).collect();
    let w = scatter_matrices(x, gamma, &means);
    let factors = covariance_step(param, &w, &n_k, n as f64, prev)?;
    Ok(MStepResult {
        weights,
        means,
        factors,
    })
}

/// Squared Euclidean distance between a row and a center row.
fn dist2(x: ArrayView2<'_, f64>, i: usize, center: usize) -> f64 {
    let a = x.row(i);
    let b = x.row(center);
    a.iter().zip(b.iter()).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// k-means++ center seeding followed by nearest-center hard labels.
fn kmeanspp_labels(x: ArrayView2<'_, f64>, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = x.nrows();
    let mut centers = Vec::with_capacity(k);
    centers.push(rng.random_range(0..n));
    let mut d2: Vec<f64> = (0..n).map(|i| dist2(x, i, centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.push(next);
        for i in 0..n {
            d2[i] = d2[i].min(dist2(x, i, next));
        }
    }
    (0..n)
        .map(|i| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, &center) in centers.iter().enumerate() {
                let dd = dist2(x, i, center);
                if dd < best_d {
                    best_d = dd;
                    best = c;
                }
            }
            best
        })
        .collect()
}

fn random_partition_labels(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        perm.swap(i, j);
    }
    let mut labels = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        labels[i] = pos % k;
    }
    labels
}

fn factors_of(model: &MixtureModel) -> CovarianceFactors {
    CovarianceFactors {
        volumes: model.volumes.clone(),
        shapes: model.shapes.clone(),
        orientations: model.orientations.clone(),
    }
}

fn apply_update(model: &mut MixtureModel, upd: MStepResult) {
    model.weights = upd.weights;
    model.means = upd.means;
    model.volumes = upd.factors.volumes;
    model.shapes = upd.factors.shapes;
    model.orientations = upd.factors.orientations;
}

/// Move a collapsed component to the lowest-density observation and give
/// it a small weight; the next M-step restores the constraint structure.
fn reseed_component(model: &mut MixtureModel, x: ArrayView2<'_, f64>, component: usize) {
    let n = x.nrows();
    let worst = match e_step(model, x) {
        Ok(_) => {
            let log_dens = log_densities(model, x).expect("densities computable");
            let mut worst = 0;
            let mut worst_ll = f64::INFINITY;
            for i in 0..n {
                let mut max = f64::NEG_INFINITY;
                for kk in 0..model.k() {
                    max = max.max(log_dens[(i, kk)] + model.weights[kk].ln());
                }
                if max < worst_ll {
                    worst_ll = max;
                    worst = i;
                }
            }
            worst
        }
        Err(_) => 0,
    };
    model.means.row_mut(component).assign(&x.row(worst));
    model.weights[component] = 1.0 / n as f64;
    let total: f64 = model.weights.iter().sum();
    for w in &mut model.weights {
        *w /= total;
    }
}

/// Fit one mixture by EM from a seeded initialization.
///
/// Requires a fully observed matrix (no NaN cells) and `n > k`. The
/// returned model records its convergence flag, iteration count, seed and
/// the log-likelihood trace of the final run segment.
pub fn em_fit(
    x: ArrayView2<'_, f64>,
    k: usize,
    param: CovarianceParameterization,
    opts: &EmOptions,
    fit_seed: u64,
) -> Result<MixtureModel> {
    let (n, d) = x.dim();
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if n <= k {
        return Err(Error::Data(format!("need more than k={k} rows, got {n}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data(
            "matrix contains non-finite cells; impute before fitting".into(),
        ));
    }

    // Seeded initialization; empty-component signals trigger a re-draw.
    let mut init: Option<(MStepResult, u64)> = None;
    let mut last_err = None;
    for attempt in 0..MAX_RESEEDS as u64 {
        let attempt_seed = seed::derive(fit_seed, &[attempt]);
        let mut rng = ChaCha8Rng::seed_from_u64(attempt_seed);
        let labels = match opts.init {
            InitStrategy::KMeansPlusPlus => kmeanspp_labels(x, k, &mut rng),
            InitStrategy::RandomPartition => random_partition_labels(n, k, &mut rng),
        };
        let resp = Responsibilities::from_labels(&labels, k);
        match m_step(x, &resp, param, None) {
            Ok(upd) => {
                init = Some((upd, attempt_seed));
                break;
            }
            Err(e @ Error::EmptyComponent { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    let Some((init_upd, _)) = init else {
        return Err(Error::FitFailed(format!(
            "initialization failed for k={k} {param}: {}",
            last_err.map(|e| e.to_string()).unwrap_or_default()
        )));
    };

    let mut model = MixtureModel {
        parameterization: param,
        weights: init_upd.weights.clone(),
        means: init_upd.means.clone(),
        volumes: init_upd.factors.volumes.clone(),
        shapes: init_upd.factors.shapes.clone(),
        orientations: init_upd.factors.orientations.clone(),
        loglik: f64::NEG_INFINITY,
        n_params: param.n_free_params(k, d),
        bic: f64::NEG_INFINITY,
        iterations: 0,
        converged: false,
        seed: fit_seed,
        loglik_trace: Vec::new(),
    };

    let (mut resp, mut loglik) = e_step(&model, x)?;
    let mut trace = vec![loglik];
    let mut reseeds = 0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        let prev_factors = factors_of(&model);
        match m_step(x, &resp, param, Some(&prev_factors)) {
            Ok(upd) => apply_update(&mut model, upd),
            Err(Error::EmptyComponent { component, .. }) => {
                reseeds += 1;
                if reseeds > MAX_RESEEDS {
                    return Err(Error::FitFailed(format!(
                        "k={k} {param}: component collapse persisted after {MAX_RESEEDS} re-seeds"
                    )));
                }
                reseed_component(&mut model, x, component);
                // The trace documents the final monotone run segment.
                trace.clear();
            }
            Err(e) => return Err(e),
        }
        let (new_resp, new_loglik) = e_step(&model, x)?;
        resp = new_resp;
        if trace.is_empty() {
            loglik = new_loglik;
            trace.push(new_loglik);
            continue;
        }
        trace.push(new_loglik);
        if (new_loglik - loglik).abs() < opts.tol * (1.0 + loglik.abs()) {
            loglik = new_loglik;
            converged = true;
            break;
        }
        loglik = new_loglik;
    }

    model.loglik = loglik;
    model.bic = bic(loglik, model.n_params, n);
    model.iterations = iterations;
    model.converged = converged;
    model.loglik_trace = trace;
    Ok(model)
}
