//! Weighted logistic regression read as a discrete-time hazard model: each
//! panel row's bad probability is the hazard of defaulting that month given
//! survival so far, and a loan's horizon default probability is one minus
//! the product of its monthly survival probabilities.
//!
//! The fitter is Newton / iteratively reweighted least squares with
//! step-halving, maximizing the weighted Bernoulli log-likelihood
//! `Σ wᵢ [yᵢ ln hᵢ + (1−yᵢ) ln(1−hᵢ)]`. Standard errors come from the
//! inverse observed information (which equals the expected information for
//! this model), Wald chi-squares are `(estimate / se)²`, and p-values use
//! the exact identity `P(χ²₁ > x) = erfc(√(x/2))`.
//!
//! Accumulation is deterministic regardless of thread count: rows are cut
//! into fixed blocks, block partials are computed independently (possibly in
//! parallel) and merged sequentially in block order with compensated
//! summation, so a fit is a pure function of its inputs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::Status;

/// Rows per accumulation block. Fixed so that partial sums and their merge
/// order never depend on thread count.
const BLOCK_ROWS: usize = 8192;

/// Iterations of step-halving before a Newton step is declared unusable.
const MAX_HALVINGS: u32 = 40;

/// `‖β‖∞` beyond which the fit is treated as diverging (complete
/// separation).
const SEPARATION_BETA_BOUND: f64 = 1e8;

/// If every row's `|y − h|` falls below this, the data are perfectly
/// separated and the likelihood has no interior maximum.
const SEPARATION_RESIDUAL: f64 = 1e-7;

// ---------------------------------------------------------------------------
// Rows and options
// ---------------------------------------------------------------------------

/// One observation of the design matrix. `features` excludes the intercept,
/// which the fitter supplies implicitly as a leading 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignRow {
    pub features: Vec<f64>,
    pub status: Status,
    pub weight: f64,
}

/// Fitting controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Convergence threshold on the max absolute gradient component, with
    /// weights normalized by their mean so the tolerance is scale-free.
    pub tol: f64,
    pub max_iter: usize,
    /// Ridge penalty λ on non-intercept coefficients (adds −λ/2·‖β‖² to the
    /// objective). Zero — no regularization — by default; a small positive
    /// value rescues separated data at the cost of bias.
    pub ridge: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { tol: 1e-8, max_iter: 50, ridge: 0.0 }
    }
}

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

/// One fitted parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub name: String,
    pub estimate: f64,
    pub standard_error: f64,
    pub wald_chi_square: f64,
    pub p_value: f64,
}

/// The fitted model: per-parameter statistics plus fit metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTable {
    pub rows: Vec<CoefficientRow>,
    pub iterations: usize,
    pub final_max_gradient: f64,
    pub log_likelihood: f64,
    pub n_rows: usize,
    pub total_weight: f64,
}

impl CoefficientTable {
    /// Estimates in design order, intercept first — the `β` vector that
    /// [`predict_hazard`] expects.
    pub fn estimates(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.estimate).collect()
    }

    pub fn names(&self) -> Vec<&str> {
        self.rows.iter().map(|r| r.name.as_str()).collect()
    }
}

/// Why a fit could not be produced.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("empty design")]
    NoRows,
    #[error("design rows all share one status; both classes are required")]
    SingleClass,
    #[error("regressor {name} is constant across all rows")]
    ConstantColumn { name: String },
    #[error("row {row} has {got} features, expected {expected}")]
    DimensionMismatch { row: usize, got: usize, expected: usize },
    #[error("row {row} has invalid weight {weight}; weights must be finite and positive")]
    InvalidWeight { row: usize, weight: f64 },
    #[error("row {row} has a non-finite value for {name}")]
    NonFiniteFeature { row: usize, name: String },
    #[error(
        "information matrix is singular at column {name}; remove linearly dependent regressors"
    )]
    SingularInformation { name: String },
    #[error(
        "complete separation: the likelihood increases without bound; estimates are not finite"
    )]
    Separation,
    #[error("no convergence after {iterations} iterations; max |gradient| = {gradient:.3e}")]
    NonConvergence { iterations: usize, gradient: f64, last_estimates: Vec<f64> },
}

// ---------------------------------------------------------------------------
// Stable scalar pieces
// ---------------------------------------------------------------------------

/// `1 / (1 + e^{−η})` without overflow at either tail.
pub fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^η)` without overflow.
fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

/// Compensated (Neumaier) accumulator: exact enough that merge order noise
/// never reaches the stored double.
#[derive(Debug, Clone, Copy, Default)]
struct Neumaier {
    sum: f64,
    compensation: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

// ---------------------------------------------------------------------------
// Likelihood accumulation
// ---------------------------------------------------------------------------

/// Per-block partial sums for one Newton pass: log-likelihood, gradient,
/// lower triangle of the information matrix, and the largest absolute
/// residual (for separation detection).
struct BlockPartial {
    ll: f64,
    grad: Vec<f64>,
    info_lower: Vec<f64>,
    max_resid: f64,
}

fn accumulate_block(rows: &[DesignRow], beta: &[f64]) -> BlockPartial {
    let p = beta.len();
    let tri = p * (p + 1) / 2;
    let mut ll = 0.0;
    let mut grad = vec![0.0; p];
    let mut info_lower = vec![0.0; tri];
    let mut max_resid = 0.0f64;
    let mut x = vec![0.0; p];
    for row in rows {
        x[0] = 1.0;
        x[1..].copy_from_slice(&row.features);
        let eta: f64 = x.iter().zip(beta).map(|(xi, bi)| xi * bi).sum();
        let h = logistic(eta);
        let y = row.status.as_f64();
        let w = row.weight;
        ll += w * (y * eta - softplus(eta));
        let resid = y - h;
        max_resid = max_resid.max(resid.abs());
        let g = w * resid;
        let v = w * h * (1.0 - h);
        let mut t = 0;
        for a in 0..p {
            grad[a] += g * x[a];
            let va = v * x[a];
            for &xb in &x[..=a] {
                info_lower[t] += va * xb;
                t += 1;
            }
        }
    }
    BlockPartial { ll, grad, info_lower, max_resid }
}

/// One full pass over the design at `beta`; blocks may run in parallel but
/// the merged result is bit-identical for any thread count.
struct Pass {
    ll: f64,
    grad: Vec<f64>,
    /// Full symmetric p×p information matrix, row-major.
    info: Vec<f64>,
    max_resid: f64,
}

fn pass(rows: &[DesignRow], beta: &[f64]) -> Pass {
    let p = beta.len();
    let tri = p * (p + 1) / 2;
    let partials: Vec<BlockPartial> =
        rows.par_chunks(BLOCK_ROWS).map(|block| accumulate_block(block, beta)).collect();

    let mut ll = Neumaier::default();
    let mut grad = vec![Neumaier::default(); p];
    let mut info_lower = vec![Neumaier::default(); tri];
    let mut max_resid = 0.0f64;
    for part in &partials {
        ll.add(part.ll);
        for (acc, &g) in grad.iter_mut().zip(&part.grad) {
            acc.add(g);
        }
        for (acc, &i) in info_lower.iter_mut().zip(&part.info_lower) {
            acc.add(i);
        }
        max_resid = max_resid.max(part.max_resid);
    }

    let mut info = vec![0.0; p * p];
    let mut t = 0;
    for a in 0..p {
        for b in 0..=a {
            let v = info_lower[t].total();
            info[a * p + b] = v;
            info[b * p + a] = v;
            t += 1;
        }
    }
    Pass { ll: ll.total(), grad: grad.iter().map(Neumaier::total).collect(), info, max_resid }
}

/// The weighted log-likelihood at `beta` (`beta[0]` is the intercept).
/// Public so oracles can compare the fitter against direct search.
pub fn log_likelihood(rows: &[DesignRow], beta: &[f64]) -> f64 {
    pass(rows, beta).ll
}

/// The analytic gradient (score vector) of [`log_likelihood`] at `beta`.
pub fn score_vector(rows: &[DesignRow], beta: &[f64]) -> Vec<f64> {
    pass(rows, beta).grad
}

// ---------------------------------------------------------------------------
// Cholesky
// ---------------------------------------------------------------------------

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix
/// (row-major, n×n). On a non-positive pivot returns the failing column.
fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>, usize> {
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        // NaN fails the finiteness arm, so a poisoned pivot is still caught.
        if !d.is_finite() || d <= 0.0 {
            return Err(j);
        }
        let root = d.sqrt();
        l[j * n + j] = root;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / root;
        }
    }
    Ok(l)
}

/// Solves `L Lᵀ x = b` given the Cholesky factor.
fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

/// Diagonal of `A⁻¹` given `A`'s Cholesky factor.
fn cholesky_inverse_diag(l: &[f64], n: usize) -> Vec<f64> {
    let mut diag = vec![0.0; n];
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        diag[j] = cholesky_solve(l, n, &e)[j];
        e[j] = 0.0;
    }
    diag
}

// ---------------------------------------------------------------------------
// The fit
// ---------------------------------------------------------------------------

fn column_name(names: &[String], j: usize) -> String {
    if j == 0 {
        "Intercept".to_string()
    } else {
        names[j - 1].clone()
    }
}

fn validate_design(rows: &[DesignRow], names: &[String]) -> Result<(), FitError> {
    if rows.is_empty() {
        return Err(FitError::NoRows);
    }
    let k = names.len();
    let mut mins = vec![f64::INFINITY; k];
    let mut maxs = vec![f64::NEG_INFINITY; k];
    let (mut any_bad, mut any_good) = (false, false);
    for (i, row) in rows.iter().enumerate() {
        if row.features.len() != k {
            return Err(FitError::DimensionMismatch {
                row: i,
                got: row.features.len(),
                expected: k,
            });
        }
        if !row.weight.is_finite() || row.weight <= 0.0 {
            return Err(FitError::InvalidWeight { row: i, weight: row.weight });
        }
        for (j, &x) in row.features.iter().enumerate() {
            if !x.is_finite() {
                return Err(FitError::NonFiniteFeature { row: i, name: names[j].clone() });
            }
            mins[j] = mins[j].min(x);
            maxs[j] = maxs[j].max(x);
        }
        match row.status {
            Status::Bad => any_bad = true,
            Status::Good => any_good = true,
        }
    }
    if !(any_bad && any_good) {
        return Err(FitError::SingleClass);
    }
    for j in 0..k {
        if mins[j] == maxs[j] {
            return Err(FitError::ConstantColumn { name: names[j].clone() });
        }
    }
    Ok(())
}

/// Applies the ridge penalty to a pass's objective pieces in place.
fn penalize(pass: &mut Pass, beta: &[f64], ridge: f64) {
    if ridge == 0.0 {
        return;
    }
    let p = beta.len();
    for (j, &bj) in beta.iter().enumerate().skip(1) {
        pass.ll -= 0.5 * ridge * bj * bj;
        pass.grad[j] -= ridge * bj;
        pass.info[j * p + j] += ridge;
    }
}

/// Fits the weighted logistic hazard model.
///
/// `names` are the regressor names aligned with [`DesignRow::features`]; the
/// intercept is implicit and reported first. Newton steps are halved until
/// the weighted log-likelihood does not decrease; convergence is declared
/// when the max absolute gradient component, with weights normalized by
/// their mean, falls to `options.tol`.
pub fn fit(
    rows: &[DesignRow],
    names: &[String],
    options: &FitOptions,
) -> Result<CoefficientTable, FitError> {
    validate_design(rows, names)?;
    let p = names.len() + 1;
    let n = rows.len();
    let total_weight: f64 = {
        let mut acc = Neumaier::default();
        for r in rows {
            acc.add(r.weight);
        }
        acc.total()
    };
    // Scale-free gradient: divide by the mean weight.
    let grad_scale = n as f64 / total_weight;

    // Warm start at the intercept-only maximizer.
    let bad_weight: f64 = {
        let mut acc = Neumaier::default();
        for r in rows {
            acc.add(r.weight * r.status.as_f64());
        }
        acc.total()
    };
    let p_bar = bad_weight / total_weight;
    let mut beta = vec![0.0; p];
    beta[0] = (p_bar / (1.0 - p_bar)).ln();

    let mut current = pass(rows, &beta);
    penalize(&mut current, &beta, options.ridge);
    let mut iterations = 0;
    loop {
        let gmax = current.grad.iter().map(|g| (g * grad_scale).abs()).fold(0.0f64, f64::max);
        if gmax <= options.tol {
            break;
        }
        if iterations >= options.max_iter {
            return Err(FitError::NonConvergence {
                iterations,
                gradient: gmax,
                last_estimates: beta,
            });
        }

        let l = cholesky(&current.info, p)
            .map_err(|j| FitError::SingularInformation { name: column_name(names, j) })?;
        let delta = cholesky_solve(&l, p, &current.grad);

        // Near the optimum genuine Newton improvements shrink below the
        // likelihood's own rounding noise; insisting on a strict increase
        // there would stall the final gradient-driven steps.
        let ll_noise = 1e-13 * (1.0 + current.ll.abs());
        let mut step = 1.0;
        let mut halvings = 0;
        let accepted = loop {
            let candidate: Vec<f64> = beta.iter().zip(&delta).map(|(b, d)| b + step * d).collect();
            let mut cand_pass = pass(rows, &candidate);
            penalize(&mut cand_pass, &candidate, options.ridge);
            if cand_pass.ll >= current.ll - ll_noise {
                break Some((candidate, cand_pass));
            }
            halvings += 1;
            if halvings > MAX_HALVINGS {
                break None;
            }
            step *= 0.5;
        };
        let Some((next_beta, next_pass)) = accepted else {
            // The likelihood cannot be improved along the Newton direction
            // yet the gradient is above tolerance: numerically stuck.
            return Err(FitError::NonConvergence {
                iterations,
                gradient: gmax,
                last_estimates: beta,
            });
        };
        beta = next_beta;
        current = next_pass;
        iterations += 1;

        let beta_max = beta.iter().fold(0.0f64, |m, b| m.max(b.abs()));
        if beta_max > SEPARATION_BETA_BOUND
            || (current.max_resid < SEPARATION_RESIDUAL && options.ridge == 0.0)
        {
            return Err(FitError::Separation);
        }
    }

    let final_max_gradient =
        current.grad.iter().map(|g| (g * grad_scale).abs()).fold(0.0f64, f64::max);
    let l = cholesky(&current.info, p)
        .map_err(|j| FitError::SingularInformation { name: column_name(names, j) })?;
    let variances = cholesky_inverse_diag(&l, p);

    let rows_out = (0..p)
        .map(|j| {
            let estimate = beta[j];
            let standard_error = variances[j].sqrt();
            let wald_chi_square = (estimate / standard_error).powi(2);
            let p_value = statrs::function::erf::erfc((wald_chi_square / 2.0).sqrt());
            CoefficientRow {
                name: column_name(names, j),
                estimate,
                standard_error,
                wald_chi_square,
                p_value,
            }
        })
        .collect();

    Ok(CoefficientTable {
        rows: rows_out,
        iterations,
        final_max_gradient,
        log_likelihood: current.ll,
        n_rows: n,
        total_weight,
    })
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

/// Monthly hazard for one feature vector. `beta[0]` is the intercept;
/// `beta[1..]` aligns with `features`.
pub fn predict_hazard(features: &[f64], beta: &[f64]) -> f64 {
    assert_eq!(features.len() + 1, beta.len(), "feature/coefficient length mismatch");
    let eta = beta[0] + features.iter().zip(&beta[1..]).map(|(x, b)| x * b).sum::<f64>();
    logistic(eta)
}

/// A hazard outside `[0, 1)` passed to [`horizon_pd`].
#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("monthly hazard {hazard} at position {index} is outside [0, 1)")]
pub struct HorizonError {
    pub index: usize,
    pub hazard: f64,
}

/// Probability of defaulting within the horizon given monthly hazards:
/// `1 − Π (1 − hₜ)`.
pub fn horizon_pd(monthly_hazards: &[f64]) -> Result<f64, HorizonError> {
    let mut survival = 1.0f64;
    for (index, &hazard) in monthly_hazards.iter().enumerate() {
        if !(0.0..1.0).contains(&hazard) {
            return Err(HorizonError { index, hazard });
        }
        survival *= 1.0 - hazard;
    }
    Ok(1.0 - survival)
}

// ---------------------------------------------------------------------------
// Reporting and diagnostics
// ---------------------------------------------------------------------------

/// P-value as printed in coefficient tables: four decimals, with everything
/// below 1e-4 shown as `<.0001`.
pub fn format_p_value(p: f64) -> String {
    if p < 1e-4 {
        "<.0001".to_string()
    } else {
        format!("{p:.4}")
    }
}

/// The coefficient table formatted for humans, one parameter per line.
pub fn wald_report(table: &CoefficientTable) -> String {
    let name_width =
        table.rows.iter().map(|r| r.name.len()).max().unwrap_or(9).max("Parameter".len());
    let mut out = String::new();
    out.push_str(&format!(
        "{:<name_width$}  {:>12}  {:>14}  {:>16}  {:>10}\n",
        "Parameter", "Estimate", "Standard Error", "Wald Chi-Square", "Pr > ChiSq"
    ));
    for row in &table.rows {
        out.push_str(&format!(
            "{:<name_width$}  {:>12.6}  {:>14.6}  {:>16.4}  {:>10}\n",
            row.name,
            row.estimate,
            row.standard_error,
            row.wald_chi_square,
            format_p_value(row.p_value)
        ));
    }
    out.push_str(&format!(
        "\nObservations: {}   Total weight: {}   Iterations: {}   Max |gradient|: {:.3e}   Log-likelihood: {:.6}\n",
        table.n_rows,
        table.total_weight,
        table.iterations,
        table.final_max_gradient,
        table.log_likelihood
    ));
    out
}

/// Weighted Pearson correlations between regressor columns, for the
/// collinearity diagnostic. Entry `[i][j]` is the correlation of columns
/// `i` and `j`; a zero-variance column yields NaN against everything else.
pub fn weighted_correlations(rows: &[DesignRow]) -> Vec<Vec<f64>> {
    let Some(first) = rows.first() else {
        return Vec::new();
    };
    let k = first.features.len();
    let total_w: f64 = rows.iter().map(|r| r.weight).sum();
    let mut means = vec![0.0; k];
    for row in rows {
        for (m, &x) in means.iter_mut().zip(&row.features) {
            *m += row.weight * x;
        }
    }
    for m in &mut means {
        *m /= total_w;
    }
    let mut cov = vec![vec![0.0; k]; k];
    for row in rows {
        for i in 0..k {
            let di = row.features[i] - means[i];
            for j in 0..=i {
                cov[i][j] += row.weight * di * (row.features[j] - means[j]);
            }
        }
    }
    let mut corr = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..=i {
            let c = cov[i][j] / (cov[i][i] * cov[j][j]).sqrt();
            corr[i][j] = c;
            corr[j][i] = c;
        }
    }
    corr
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use proptest::prelude::*;
    use rand::Rng;

    fn names(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    fn row(features: &[f64], status: Status, weight: f64) -> DesignRow {
        DesignRow { features: features.to_vec(), status, weight }
    }

    /// Synthetic rows from a known logistic model over one regressor.
    fn synthetic_rows(n: usize, beta: &[f64], seed: u64) -> Vec<DesignRow> {
        let mut rng = substream(seed, "hazard.test", "rows");
        (0..n)
            .map(|_| {
                let x = rng.random_range(-2.0..2.0);
                let h = logistic(beta[0] + beta[1] * x);
                let status = if rng.random::<f64>() < h { Status::Bad } else { Status::Good };
                row(&[x], status, 1.0)
            })
            .collect()
    }

    // ---- scalar pieces ------------------------------------------------------

    #[test]
    fn logistic_is_stable_at_extreme_arguments() {
        assert_eq!(logistic(0.0), 0.5);
        assert_eq!(logistic(800.0), 1.0);
        assert!(logistic(-800.0) >= 0.0 && logistic(-800.0) < 1e-300);
        assert!(logistic(f64::MIN).is_finite());
    }

    #[test]
    fn softplus_matches_its_definition_in_the_safe_range() {
        for eta in [-20.0f64, -3.0, -0.5, 0.0, 0.5, 3.0, 20.0] {
            let direct = (1.0 + eta.exp()).ln();
            assert!((softplus(eta) - direct).abs() < 1e-12, "eta {eta}");
        }
        assert_eq!(softplus(1000.0), 1000.0);
    }

    // ---- fit: closed forms and oracles -----------------------------------------

    #[test]
    fn intercept_only_fit_is_the_weighted_log_odds() {
        let rows = vec![
            row(&[], Status::Bad, 2.0),
            row(&[], Status::Good, 5.0),
            row(&[], Status::Good, 3.0),
            row(&[], Status::Bad, 1.0),
        ];
        let table = fit(&rows, &[], &FitOptions::default()).unwrap();
        let p_bar = 3.0f64 / 11.0;
        let expect = (p_bar / (1.0 - p_bar)).ln();
        assert!((table.rows[0].estimate - expect).abs() < 1e-12);
        assert_eq!(table.rows[0].name, "Intercept");
        assert_eq!(table.iterations, 0, "warm start is already the maximizer");
    }

    /// Dense grid search over (β₀, β₁), refined five times, as an
    /// independent maximizer of the same weighted likelihood.
    fn grid_search_maximizer(rows: &[DesignRow]) -> (f64, f64) {
        let (mut c0, mut c1) = (0.0f64, 0.0f64);
        let mut radius = 3.0f64;
        for _ in 0..6 {
            let (mut best, mut best_ll) = ((c0, c1), f64::NEG_INFINITY);
            for i in 0..=40 {
                for j in 0..=40 {
                    let b0 = c0 - radius + i as f64 * radius / 20.0;
                    let b1 = c1 - radius + j as f64 * radius / 20.0;
                    let ll = log_likelihood(rows, &[b0, b1]);
                    if ll > best_ll {
                        best_ll = ll;
                        best = (b0, b1);
                    }
                }
            }
            (c0, c1) = best;
            radius /= 10.0;
        }
        (c0, c1)
    }

    #[test]
    fn two_parameter_fit_matches_a_grid_search_oracle() {
        let mut rows = synthetic_rows(50, &[0.4, 1.1], 7);
        // Mixed weights so the oracle exercises the weighted likelihood.
        for (i, r) in rows.iter_mut().enumerate() {
            r.weight = 1.0 + (i % 3) as f64;
        }
        let table = fit(&rows, &names(&["x"]), &FitOptions::default()).unwrap();
        let (g0, g1) = grid_search_maximizer(&rows);
        assert!((table.rows[0].estimate - g0).abs() < 1e-4, "{} vs {}", table.rows[0].estimate, g0);
        assert!((table.rows[1].estimate - g1).abs() < 1e-4, "{} vs {}", table.rows[1].estimate, g1);
        assert!(
            log_likelihood(&rows, &table.estimates()) >= log_likelihood(&rows, &[g0, g1]) - 1e-9
        );
    }

    #[test]
    fn duplicated_rows_and_weighted_rows_fit_identically() {
        let base = synthetic_rows(80, &[-1.0, 0.8], 3);
        let k = 4usize;
        let duplicated: Vec<DesignRow> =
            base.iter().flat_map(|r| std::iter::repeat_n(r.clone(), k)).collect();
        let weighted: Vec<DesignRow> = base
            .iter()
            .map(|r| DesignRow { features: r.features.clone(), status: r.status, weight: k as f64 })
            .collect();
        let nm = names(&["x"]);
        let a = fit(&duplicated, &nm, &FitOptions::default()).unwrap();
        let b = fit(&weighted, &nm, &FitOptions::default()).unwrap();
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert!((ra.estimate - rb.estimate).abs() < 1e-6, "{} vs {}", ra.estimate, rb.estimate);
        }
    }

    #[test]
    fn analytic_gradient_matches_central_finite_differences() {
        let rows = synthetic_rows(200, &[-0.5, 0.9], 11);
        let nm = names(&["x"]);
        let table = fit(&rows, &nm, &FitOptions::default()).unwrap();
        let mut points = vec![table.estimates()];
        let mut rng = substream(1, "hazard.test", "fd-points");
        for _ in 0..5 {
            points.push(vec![rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)]);
        }
        for beta in points {
            let grad = score_vector(&rows, &beta);
            let ll = log_likelihood(&rows, &beta);
            for j in 0..beta.len() {
                let h = 1e-6 * beta[j].abs().max(1.0);
                let mut up = beta.clone();
                let mut down = beta.clone();
                up[j] += h;
                down[j] -= h;
                let fd = (log_likelihood(&rows, &up) - log_likelihood(&rows, &down)) / (2.0 * h);
                // The difference quotient carries rounding noise of order
                // eps·|ll|/h; near-zero gradients (at the optimum) are only
                // comparable above that floor.
                let fd_noise = 4.0 * f64::EPSILON * (1.0 + ll.abs()) / h;
                let tolerance = 1e-5 * grad[j].abs().max(fd.abs()) + fd_noise;
                assert!(
                    (grad[j] - fd).abs() < tolerance,
                    "beta {beta:?} component {j}: analytic {} vs fd {fd}",
                    grad[j]
                );
            }
        }
    }

    #[test]
    fn rescaling_a_regressor_rescales_its_estimate_and_preserves_wald() {
        let rows = synthetic_rows(400, &[-0.8, 0.7], 19);
        let nm = names(&["x"]);
        let base = fit(&rows, &nm, &FitOptions::default()).unwrap();
        let c = 4.0;
        let scaled_rows: Vec<DesignRow> =
            rows.iter().map(|r| row(&[r.features[0] * c], r.status, r.weight)).collect();
        let scaled = fit(&scaled_rows, &nm, &FitOptions::default()).unwrap();
        assert!((scaled.rows[1].estimate * c - base.rows[1].estimate).abs() < 1e-6);
        assert!((scaled.rows[1].standard_error * c - base.rows[1].standard_error).abs() < 1e-6);
        let rel = (scaled.rows[1].wald_chi_square / base.rows[1].wald_chi_square - 1.0).abs();
        assert!(rel < 1e-6, "wald changed by {rel}");
        // Predictions are invariant too.
        for (r, s) in rows.iter().zip(&scaled_rows) {
            let ph = predict_hazard(&r.features, &base.estimates());
            let ps = predict_hazard(&s.features, &scaled.estimates());
            assert!((ph - ps).abs() < 1e-9);
        }
    }

    #[test]
    fn wald_is_estimate_over_se_squared_and_p_in_unit_interval() {
        let rows = synthetic_rows(300, &[-1.2, 0.5], 23);
        let table = fit(&rows, &names(&["x"]), &FitOptions::default()).unwrap();
        for r in &table.rows {
            assert!(r.standard_error > 0.0);
            let direct = (r.estimate / r.standard_error).powi(2);
            assert!((r.wald_chi_square - direct).abs() <= 1e-9 * direct.max(1.0));
            assert!((0.0..=1.0).contains(&r.p_value));
        }
    }

    #[test]
    fn fit_is_bitwise_identical_across_thread_counts() {
        let rows = synthetic_rows(20_000, &[-2.0, 0.6], 31);
        let nm = names(&["x"]);
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("pool");
            pool.install(|| fit(&rows, &nm, &FitOptions::default()).unwrap())
        };
        let single = run(1);
        let multi = run(4);
        for (a, b) in single.rows.iter().zip(&multi.rows) {
            assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
            assert_eq!(a.standard_error.to_bits(), b.standard_error.to_bits());
        }
        assert_eq!(single.log_likelihood.to_bits(), multi.log_likelihood.to_bits());
    }

    // ---- fit: failure modes ------------------------------------------------------

    #[test]
    fn degenerate_designs_are_rejected_with_names() {
        let nm = names(&["x"]);
        assert!(matches!(fit(&[], &nm, &FitOptions::default()), Err(FitError::NoRows)));

        let one_class = vec![row(&[1.0], Status::Good, 1.0), row(&[2.0], Status::Good, 1.0)];
        assert!(matches!(fit(&one_class, &nm, &FitOptions::default()), Err(FitError::SingleClass)));

        let constant = vec![row(&[3.0], Status::Good, 1.0), row(&[3.0], Status::Bad, 1.0)];
        let err = fit(&constant, &nm, &FitOptions::default()).unwrap_err();
        assert!(matches!(err, FitError::ConstantColumn { ref name } if name == "x"), "{err}");

        let ragged = vec![row(&[1.0], Status::Good, 1.0), row(&[1.0, 2.0], Status::Bad, 1.0)];
        assert!(matches!(
            fit(&ragged, &nm, &FitOptions::default()),
            Err(FitError::DimensionMismatch { row: 1, got: 2, expected: 1 })
        ));

        let bad_weight = vec![row(&[1.0], Status::Good, 0.0), row(&[2.0], Status::Bad, 1.0)];
        assert!(matches!(
            fit(&bad_weight, &nm, &FitOptions::default()),
            Err(FitError::InvalidWeight { row: 0, .. })
        ));

        let non_finite = vec![row(&[f64::NAN], Status::Good, 1.0), row(&[2.0], Status::Bad, 1.0)];
        assert!(matches!(
            fit(&non_finite, &nm, &FitOptions::default()),
            Err(FitError::NonFiniteFeature { row: 0, .. })
        ));
    }

    #[test]
    fn collinear_columns_are_reported_by_name() {
        let mut rng = substream(2, "hazard.test", "collinear");
        let rows: Vec<DesignRow> = (0..200)
            .map(|_| {
                let x = rng.random_range(-1.0..1.0);
                let status =
                    if rng.random::<f64>() < logistic(x) { Status::Bad } else { Status::Good };
                row(&[x, 2.0 * x], status, 1.0)
            })
            .collect();
        let err = fit(&rows, &names(&["x", "x_doubled"]), &FitOptions::default()).unwrap_err();
        assert!(
            matches!(err, FitError::SingularInformation { ref name } if name == "x_doubled"),
            "{err}"
        );
    }

    #[test]
    fn complete_separation_is_detected() {
        let rows: Vec<DesignRow> = (1..=20)
            .map(|i| {
                let x = i as f64 - 10.5; // negative → good, positive → bad
                let status = if x > 0.0 { Status::Bad } else { Status::Good };
                row(&[x], status, 1.0)
            })
            .collect();
        let err = fit(&rows, &names(&["x"]), &FitOptions::default()).unwrap_err();
        assert!(matches!(err, FitError::Separation), "{err}");
    }

    #[test]
    fn ridge_rescues_separated_data_with_finite_estimates() {
        let rows: Vec<DesignRow> = (1..=20)
            .map(|i| {
                let x = i as f64 - 10.5;
                let status = if x > 0.0 { Status::Bad } else { Status::Good };
                row(&[x], status, 1.0)
            })
            .collect();
        let options = FitOptions { ridge: 0.1, ..FitOptions::default() };
        let table = fit(&rows, &names(&["x"]), &options).unwrap();
        assert!(table.rows[1].estimate.is_finite());
        assert!(table.rows[1].estimate.abs() < 100.0);
    }

    #[test]
    fn iteration_budget_is_enforced() {
        let rows = synthetic_rows(100, &[0.3, 1.4], 41);
        let options = FitOptions { max_iter: 1, ..FitOptions::default() };
        let err = fit(&rows, &names(&["x"]), &options).unwrap_err();
        assert!(
            matches!(err, FitError::NonConvergence { iterations: 1, ref last_estimates, .. }
                if last_estimates.len() == 2),
            "{err}"
        );
    }

    // ---- prediction -----------------------------------------------------------------

    #[test]
    fn predict_hazard_matches_the_logistic_link() {
        assert_eq!(predict_hazard(&[0.0, 0.0], &[0.0, 1.0, -1.0]), 0.5);
        let h = predict_hazard(&[0.0], &[-2.1415, 3.0]);
        assert!((h - 0.105129).abs() < 2e-6, "{h}");
        let mut rng = substream(3, "hazard.test", "predict");
        for _ in 0..100 {
            let x = [rng.random_range(-2.0..2.0)];
            let beta = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let h = predict_hazard(&x, &beta);
            assert!(h > 0.0 && h < 1.0);
        }
    }

    #[test]
    fn horizon_pd_is_one_minus_the_survival_product() {
        assert_eq!(horizon_pd(&[]).unwrap(), 0.0);
        assert_eq!(horizon_pd(&[0.0; 12]).unwrap(), 0.0);
        assert_eq!(horizon_pd(&[0.25]).unwrap(), 0.25);
        let pd = horizon_pd(&[0.00125; 36]).unwrap();
        assert!((pd - 0.044029).abs() < 1e-6, "{pd}");
        assert!((pd - (1.0 - 0.99875f64.powi(36))).abs() < 1e-12);
        let err = horizon_pd(&[0.1, 1.0]).unwrap_err();
        assert_eq!(err.index, 1);
    }

    proptest! {
        #[test]
        fn horizon_pd_is_monotone_in_horizon_and_hazards(
            hazards in proptest::collection::vec(0.0f64..0.5, 1..36),
            bump_idx in 0usize..36,
        ) {
            let full = horizon_pd(&hazards).unwrap();
            let shorter = horizon_pd(&hazards[..hazards.len() - 1]).unwrap();
            prop_assert!(full >= shorter);
            let mut bumped = hazards.clone();
            let i = bump_idx % bumped.len();
            bumped[i] = (bumped[i] + 0.1).min(0.99);
            prop_assert!(horizon_pd(&bumped).unwrap() >= full - 1e-15);
        }
    }

    #[test]
    fn hazard_is_monotone_in_positively_weighted_features() {
        let beta = [-2.0, 0.7, -0.3];
        let base = predict_hazard(&[1.0, 1.0], &beta);
        assert!(predict_hazard(&[2.0, 1.0], &beta) > base);
        assert!(predict_hazard(&[1.0, 2.0], &beta) < base);
    }

    // ---- reporting --------------------------------------------------------------------

    #[test]
    fn p_values_below_the_print_floor_show_as_less_than() {
        assert_eq!(format_p_value(0.5), "0.5000");
        assert_eq!(format_p_value(0.0432), "0.0432");
        assert_eq!(format_p_value(1e-4), "0.0001");
        assert_eq!(format_p_value(9.9e-5), "<.0001");
        assert_eq!(format_p_value(0.0), "<.0001");
    }

    #[test]
    fn wald_report_lists_every_parameter_in_order() {
        let rows = synthetic_rows(300, &[-1.0, 1.0], 13);
        let table = fit(&rows, &names(&["x"]), &FitOptions::default()).unwrap();
        let report = wald_report(&table);
        let lines: Vec<&str> = report.lines().collect();
        assert!(lines[0].contains("Parameter") && lines[0].contains("Pr > ChiSq"));
        assert!(lines[1].starts_with("Intercept"));
        assert!(lines[2].starts_with("x"));
        assert!(report.contains("Iterations"));
    }

    #[test]
    fn chi_square_tail_matches_reference_values() {
        // Known chi-square(1) upper tails: P(X > 3.841459) = 0.05,
        // P(X > 6.634897) = 0.01.
        let p5 = statrs::function::erf::erfc((3.841459f64 / 2.0).sqrt());
        assert!((p5 - 0.05).abs() < 1e-6);
        let p1 = statrs::function::erf::erfc((6.634897f64 / 2.0).sqrt());
        assert!((p1 - 0.01).abs() < 1e-6);
    }

    // ---- diagnostics -----------------------------------------------------------------

    #[test]
    fn correlation_diagnostic_flags_duplicate_columns() {
        let mut rng = substream(5, "hazard.test", "corr");
        let rows: Vec<DesignRow> = (0..500)
            .map(|_| {
                let x = rng.random_range(-1.0f64..1.0);
                let z = rng.random_range(-1.0f64..1.0);
                row(&[x, -3.0 * x, z], Status::Good, 1.0)
            })
            .collect();
        let corr = weighted_correlations(&rows);
        assert!((corr[0][1] + 1.0).abs() < 1e-9, "perfectly anti-correlated");
        assert!(corr[0][2].abs() < 0.2, "independent draws are weakly correlated");
        assert_eq!(corr[0][0], 1.0);
    }
}
