//! First-stage (measurement) estimation: linear one-factor models fit by
//! maximum likelihood, unidimensional 2PL item models fit by EM on a fixed
//! quadrature grid, and the factor-score predictors computed from either.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Fitted linear one-factor measurement model. Identified by fixing the
/// first loading at one and leaving the factor variance free.
#[derive(Debug, Clone)]
pub struct OneFactorLinearFit {
    pub loadings: Vec<f64>,
    pub uniquenesses: Vec<f64>,
    pub factor_variance: f64,
    pub loglik: f64,
    pub converged: bool,
    /// A uniqueness or the factor variance ended up at its positivity floor.
    pub heywood: bool,
}

const VAR_FLOOR: f64 = 1e-8;
const VAR_CEIL: f64 = 1e8;

impl OneFactorLinearFit {
    /// Build a fit object from known parameter values (used when scoring
    /// with nuisance parameters held fixed rather than refit).
    pub fn from_values(loadings: Vec<f64>, uniquenesses: Vec<f64>, factor_variance: f64) -> Self {
        Self {
            loadings,
            uniquenesses,
            factor_variance,
            loglik: f64::NAN,
            converged: true,
            heywood: false,
        }
    }

    pub fn p(&self) -> usize {
        self.loadings.len()
    }
}

/// ML discrepancy F = log|Sigma| + tr(S Sigma^-1) - log|S| - p for the
/// one-factor structure Sigma = phi * lambda lambda' + diag(sigma2).
pub fn fml(s: &DMatrix<f64>, loadings: &[f64], uniquenesses: &[f64], fvar: f64) -> f64 {
    let p = loadings.len();
    let sigma = implied_cov(loadings, uniquenesses, fvar);
    let chol = match sigma.cholesky() {
        Some(c) => c,
        None => return f64::INFINITY,
    };
    let logdet_sigma = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let sinv_s = chol.solve(s);
    let logdet_s = match s.clone().cholesky() {
        Some(c) => 2.0 * c.l().diagonal().iter().map(|d| d.ln()).sum::<f64>(),
        None => return f64::INFINITY,
    };
    logdet_sigma + sinv_s.trace() - logdet_s - p as f64
}

/// Analytic gradient of [`fml`] with respect to the free loadings
/// (indices 1..p), the uniquenesses, and the factor variance.
pub fn fml_gradient(
    s: &DMatrix<f64>,
    loadings: &[f64],
    uniquenesses: &[f64],
    fvar: f64,
) -> (Vec<f64>, Vec<f64>, f64) {
    let p = loadings.len();
    let sigma = implied_cov(loadings, uniquenesses, fvar);
    let chol = sigma.cholesky().expect("gradient requested at a non-PD point");
    let sigma_inv = chol.inverse();
    // dF = tr(G dSigma) with G = Sigma^-1 - Sigma^-1 S Sigma^-1
    let g = &sigma_inv - &sigma_inv * s * &sigma_inv;
    let lambda = DVector::from_column_slice(loadings);
    let g_lambda_full = &g * &lambda * (2.0 * fvar);
    let d_loadings: Vec<f64> = (1..p).map(|j| g_lambda_full[j]).collect();
    let d_uniq: Vec<f64> = (0..p).map(|j| g[(j, j)]).collect();
    let d_fvar = (&lambda.transpose() * &g * &lambda)[(0, 0)];
    (d_loadings, d_uniq, d_fvar)
}

fn implied_cov(loadings: &[f64], uniquenesses: &[f64], fvar: f64) -> DMatrix<f64> {
    let p = loadings.len();
    DMatrix::from_fn(p, p, |i, j| {
        let mut v = fvar * loadings[i] * loadings[j];
        if i == j {
            v += uniquenesses[i];
        }
        v
    })
}

/// Sample covariance with the maximum-likelihood divisor n.
pub fn sample_cov(y: &DMatrix<f64>) -> DMatrix<f64> {
    let n = y.nrows();
    let p = y.ncols();
    let means: Vec<f64> = (0..p).map(|j| y.column(j).sum() / n as f64).collect();
    let mut s = DMatrix::zeros(p, p);
    for i in 0..n {
        for a in 0..p {
            let da = y[(i, a)] - means[a];
            for b in a..p {
                s[(a, b)] += da * (y[(i, b)] - means[b]);
            }
        }
    }
    for a in 0..p {
        for b in a..p {
            let v = s[(a, b)] / n as f64;
            s[(a, b)] = v;
            s[(b, a)] = v;
        }
    }
    s
}

/// Fit a linear one-factor model to an indicator block by quasi-Newton
/// minimization of the ML discrepancy.
pub fn fit_onefactor_linear(y_block: &DMatrix<f64>) -> Result<OneFactorLinearFit> {
    let s = sample_cov(y_block);
    fit_onefactor_from_cov(&s, y_block.nrows())
}

/// Same as [`fit_onefactor_linear`] but starting from a covariance matrix.
pub fn fit_onefactor_from_cov(s: &DMatrix<f64>, n: usize) -> Result<OneFactorLinearFit> {
    let p = s.nrows();
    if p < 3 {
        return Err(Error::Underidentified(format!(
            "a one-factor model needs at least 3 indicators, got {p}"
        )));
    }
    if s.clone().cholesky().is_none() {
        return Err(Error::Data("sample covariance is not positive definite".into()));
    }

    // x = [lambda_2..lambda_p, log sigma2_1..p, log phi]
    let dim = (p - 1) + p + 1;
    let mut x0 = Vec::with_capacity(dim);
    x0.extend(std::iter::repeat(1.0).take(p - 1));
    for j in 0..p {
        x0.push((s[(j, j)] * 0.5).max(VAR_FLOOR).ln());
    }
    x0.push((s[(0, 0)] * 0.5).max(VAR_FLOOR).ln());

    let mut lower = vec![f64::NEG_INFINITY; dim];
    let mut upper = vec![f64::INFINITY; dim];
    for v in lower.iter_mut().skip(p - 1) {
        *v = VAR_FLOOR.ln();
    }
    for v in upper.iter_mut().skip(p - 1) {
        *v = VAR_CEIL.ln();
    }

    let objective = |x: &[f64]| -> (f64, Vec<f64>) {
        let (loadings, uniq, fvar) = unpack(x, p);
        let f = fml(s, &loadings, &uniq, fvar);
        if !f.is_finite() {
            return (f, vec![0.0; x.len()]);
        }
        let (dl, du, dv) = fml_gradient(s, &loadings, &uniq, fvar);
        let mut grad = Vec::with_capacity(x.len());
        grad.extend_from_slice(&dl);
        for (g, u) in du.iter().zip(&uniq) {
            grad.push(g * u); // chain rule through log
        }
        grad.push(dv * fvar);
        (f, grad)
    };

    let sol = bfgs_box(&objective, x0, &lower, &upper, 1e-9, 600);
    let (loadings, uniquenesses, factor_variance) = unpack(&sol.x, p);
    let heywood = uniquenesses.iter().any(|&u| u <= VAR_FLOOR * 1.0001)
        || factor_variance <= VAR_FLOOR * 1.0001;
    let f_val = fml(s, &loadings, &uniquenesses, factor_variance);
    let logdet_s = 2.0
        * s.clone()
            .cholesky()
            .expect("checked above")
            .l()
            .diagonal()
            .iter()
            .map(|d| d.ln())
            .sum::<f64>();
    let loglik = -0.5
        * n as f64
        * (p as f64 * (2.0 * std::f64::consts::PI).ln() + f_val + logdet_s + p as f64);
    Ok(OneFactorLinearFit {
        loadings,
        uniquenesses,
        factor_variance,
        loglik,
        converged: sol.projected_grad_norm < 1e-6,
        heywood,
    })
}

fn unpack(x: &[f64], p: usize) -> (Vec<f64>, Vec<f64>, f64) {
    let mut loadings = Vec::with_capacity(p);
    loadings.push(1.0);
    loadings.extend_from_slice(&x[..p - 1]);
    let uniq: Vec<f64> = x[p - 1..2 * p - 1].iter().map(|v| v.exp()).collect();
    (loadings, uniq, x[2 * p - 1].exp())
}

struct BoxSolution {
    x: Vec<f64>,
    projected_grad_norm: f64,
}

/// BFGS with box clamping and Armijo backtracking.
fn bfgs_box(
    objective: &dyn Fn(&[f64]) -> (f64, Vec<f64>),
    x0: Vec<f64>,
    lower: &[f64],
    upper: &[f64],
    gtol: f64,
    max_iter: usize,
) -> BoxSolution {
    let dim = x0.len();
    let clamp = |x: &mut Vec<f64>| {
        for i in 0..dim {
            x[i] = x[i].max(lower[i]).min(upper[i]);
        }
    };
    let pg_norm = |x: &[f64], g: &[f64]| -> f64 {
        let mut acc = 0.0;
        for i in 0..dim {
            let locked_low = x[i] <= lower[i] && g[i] > 0.0;
            let locked_high = x[i] >= upper[i] && g[i] < 0.0;
            if !(locked_low || locked_high) {
                acc += g[i] * g[i];
            }
        }
        acc.sqrt()
    };

    let mut x = x0;
    clamp(&mut x);
    let (mut fx, mut gx) = objective(&x);
    let mut h = DMatrix::<f64>::identity(dim, dim);

    for _ in 0..max_iter {
        if pg_norm(&x, &gx) < gtol {
            break;
        }
        let g_vec = DVector::from_column_slice(&gx);
        let dir = -(&h * &g_vec);
        let slope: f64 = dir.dot(&g_vec);
        let dir = if slope < 0.0 { dir } else { -g_vec.clone() };
        let slope = dir.dot(&g_vec).min(-1e-16);

        let mut t = 1.0;
        let mut accepted = false;
        let mut x_new = x.clone();
        let mut f_new = fx;
        let mut g_new = gx.clone();
        for _ in 0..50 {
            for i in 0..dim {
                x_new[i] = x[i] + t * dir[i];
            }
            clamp(&mut x_new);
            let (f_try, g_try) = objective(&x_new);
            if f_try.is_finite() && f_try <= fx + 1e-4 * t * slope {
                f_new = f_try;
                g_new = g_try;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }

        let s_step = DVector::from_fn(dim, |i, _| x_new[i] - x[i]);
        let y_step = DVector::from_fn(dim, |i, _| g_new[i] - gx[i]);
        let sy = s_step.dot(&y_step);
        if sy > 1e-12 * s_step.norm() * y_step.norm() {
            let rho = 1.0 / sy;
            let hy = &h * &y_step;
            let yhy = y_step.dot(&hy);
            // BFGS inverse update
            h += (rho * rho * yhy + rho) * (&s_step * s_step.transpose())
                - rho * (&hy * s_step.transpose() + &s_step * hy.transpose());
        }
        x = x_new;
        fx = f_new;
        gx = g_new;
    }
    let norm = pg_norm(&x, &gx);
    BoxSolution { x, projected_grad_norm: norm }
}

// ---------------------------------------------------------------------------
// 2PL item models
// ---------------------------------------------------------------------------

/// Fixed quadrature grid with prior weights normalized to sum one.
#[derive(Debug, Clone)]
pub struct QuadratureSpec {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureSpec {
    /// 61 equally spaced nodes on [-6, 6] with standard normal weights.
    pub fn default_grid() -> Self {
        Self::equally_spaced(61, -6.0, 6.0)
    }

    pub fn equally_spaced(count: usize, lo: f64, hi: f64) -> Self {
        let nodes: Vec<f64> = (0..count)
            .map(|t| lo + (hi - lo) * t as f64 / (count - 1) as f64)
            .collect();
        let raw: Vec<f64> = nodes.iter().map(|x| (-0.5 * x * x).exp()).collect();
        let total: f64 = raw.iter().sum();
        let weights = raw.iter().map(|w| w / total).collect();
        Self { nodes, weights }
    }
}

/// Fitted unidimensional 2PL model; the latent variance is fixed at one.
#[derive(Debug, Clone)]
pub struct TwoPlFit {
    pub intercepts: Vec<f64>,
    pub slopes: Vec<f64>,
    pub loglik: f64,
    pub converged: bool,
    /// Observed-data log-likelihood after each EM cycle.
    pub loglik_history: Vec<f64>,
}

impl TwoPlFit {
    pub fn from_values(intercepts: Vec<f64>, slopes: Vec<f64>) -> Self {
        Self { intercepts, slopes, loglik: f64::NAN, converged: true, loglik_history: vec![] }
    }
}

const LOGIT_BOUND: f64 = 30.0;
const EM_TOL: f64 = 1e-5;
const EM_MAX_CYCLES: usize = 500;

#[inline]
fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Distinct response patterns with multiplicities, encoded as bit masks.
/// Keeping the first-seen order makes downstream reductions deterministic.
fn response_patterns(y: &DMatrix<f64>) -> Result<(Vec<u64>, Vec<f64>, Vec<usize>)> {
    let (n, j_items) = (y.nrows(), y.ncols());
    if j_items > 64 {
        return Err(Error::Data("more than 64 items per block unsupported".into()));
    }
    let mut index: HashMap<u64, usize> = HashMap::new();
    let mut patterns = Vec::new();
    let mut counts = Vec::new();
    let mut row_pattern = vec![0usize; n];
    for i in 0..n {
        let mut mask = 0u64;
        for j in 0..j_items {
            let v = y[(i, j)];
            if v == 1.0 {
                mask |= 1 << j;
            } else if v != 0.0 {
                return Err(Error::Data(format!("non-binary entry {v} at row {i}, item {j}")));
            }
        }
        let slot = *index.entry(mask).or_insert_with(|| {
            patterns.push(mask);
            counts.push(0.0);
            patterns.len() - 1
        });
        counts[slot] += 1.0;
        row_pattern[i] = slot;
    }
    Ok((patterns, counts, row_pattern))
}

/// Log-likelihood table: entry (pattern, node) is the log conditional
/// probability of the pattern at that node.
fn pattern_log_lik(
    patterns: &[u64],
    intercepts: &[f64],
    slopes: &[f64],
    quad: &QuadratureSpec,
) -> DMatrix<f64> {
    let j_items = intercepts.len();
    let t_nodes = quad.nodes.len();
    let mut lp = DMatrix::zeros(j_items, t_nodes);
    let mut lq = DMatrix::zeros(j_items, t_nodes);
    for j in 0..j_items {
        for t in 0..t_nodes {
            let z = intercepts[j] + slopes[j] * quad.nodes[t];
            lp[(j, t)] = log_sigmoid(z);
            lq[(j, t)] = log_sigmoid(-z);
        }
    }
    let mut out = DMatrix::zeros(patterns.len(), t_nodes);
    for (pidx, &mask) in patterns.iter().enumerate() {
        for t in 0..t_nodes {
            let mut acc = 0.0;
            for j in 0..j_items {
                acc += if mask >> j & 1 == 1 { lp[(j, t)] } else { lq[(j, t)] };
            }
            out[(pidx, t)] = acc;
        }
    }
    out
}

/// Posterior weights and marginal log-probability per pattern.
fn posterior(
    loglik_table: &DMatrix<f64>,
    quad: &QuadratureSpec,
) -> (DMatrix<f64>, Vec<f64>) {
    let (n_pat, t_nodes) = (loglik_table.nrows(), loglik_table.ncols());
    let logw: Vec<f64> = quad.weights.iter().map(|w| w.ln()).collect();
    let mut post = DMatrix::zeros(n_pat, t_nodes);
    let mut marginal = vec![0.0; n_pat];
    for p in 0..n_pat {
        let mut max = f64::NEG_INFINITY;
        for t in 0..t_nodes {
            let v = logw[t] + loglik_table[(p, t)];
            post[(p, t)] = v;
            if v > max {
                max = v;
            }
        }
        let mut sum = 0.0;
        for t in 0..t_nodes {
            let e = (post[(p, t)] - max).exp();
            post[(p, t)] = e;
            sum += e;
        }
        for t in 0..t_nodes {
            post[(p, t)] /= sum;
        }
        marginal[p] = max + sum.ln();
    }
    (post, marginal)
}

/// Marginal ML for a block of binary items: E-step posteriors on the fixed
/// grid, M-step per-item logistic Newton updates. Stops when the largest
/// parameter change drops below 1e-5 or after 500 cycles.
pub fn fit_2pl(y_block: &DMatrix<f64>, quad: &QuadratureSpec) -> Result<TwoPlFit> {
    let (n, j_items) = (y_block.nrows(), y_block.ncols());
    let (patterns, counts, _) = response_patterns(y_block)?;
    for j in 0..j_items {
        let ones: f64 = y_block.column(j).sum();
        if ones == 0.0 || ones == n as f64 {
            return Err(Error::Boundary(format!(
                "item {} shows a single response category",
                j + 1
            )));
        }
    }

    let mut intercepts: Vec<f64> = (0..j_items)
        .map(|j| {
            let pbar = y_block.column(j).sum() / n as f64;
            (pbar / (1.0 - pbar)).ln().clamp(-4.0, 4.0)
        })
        .collect();
    let mut slopes = vec![1.0; j_items];

    let t_nodes = quad.nodes.len();
    let mut history: Vec<f64> = Vec::new();
    let mut converged = false;

    for _cycle in 0..EM_MAX_CYCLES {
        let table = pattern_log_lik(&patterns, &intercepts, &slopes, quad);
        let (post, marginal) = posterior(&table, quad);
        let loglik: f64 = marginal.iter().zip(&counts).map(|(m, c)| m * c).sum();
        if let Some(&prev) = history.last() {
            debug_assert!(
                loglik >= prev - 1e-7 * (1.0 + prev.abs()),
                "EM log-likelihood decreased: {prev} -> {loglik}"
            );
        }
        history.push(loglik);

        // expected counts per node: trials and per-item successes
        let mut trials = vec![0.0; t_nodes];
        for p in 0..patterns.len() {
            for t in 0..t_nodes {
                trials[t] += counts[p] * post[(p, t)];
            }
        }
        let mut max_change: f64 = 0.0;
        for j in 0..j_items {
            let mut successes = vec![0.0; t_nodes];
            for (p, &mask) in patterns.iter().enumerate() {
                if mask >> j & 1 == 1 {
                    for t in 0..t_nodes {
                        successes[t] += counts[p] * post[(p, t)];
                    }
                }
            }
            let (a_new, g_new) =
                logistic_newton(intercepts[j], slopes[j], &quad.nodes, &successes, &trials);
            max_change = max_change.max((a_new - intercepts[j]).abs());
            max_change = max_change.max((g_new - slopes[j]).abs());
            intercepts[j] = a_new;
            slopes[j] = g_new;
        }
        if max_change < EM_TOL {
            converged = true;
            break;
        }
    }

    // final log-likelihood at the returned parameters
    let table = pattern_log_lik(&patterns, &intercepts, &slopes, quad);
    let (_, marginal) = posterior(&table, quad);
    let loglik: f64 = marginal.iter().zip(&counts).map(|(m, c)| m * c).sum();
    if let Some(&prev) = history.last() {
        debug_assert!(loglik >= prev - 1e-7 * (1.0 + prev.abs()));
    }
    history.push(loglik);

    Ok(TwoPlFit { intercepts, slopes, loglik, converged, loglik_history: history })
}

/// Safeguarded Newton ascent on the expected complete-data log-likelihood of
/// one item. Starting from the current parameters and halving rejected steps
/// keeps the surrounding EM monotone.
fn logistic_newton(
    alpha0: f64,
    gamma0: f64,
    nodes: &[f64],
    successes: &[f64],
    trials: &[f64],
) -> (f64, f64) {
    let objective = |a: f64, g: f64| -> f64 {
        nodes
            .iter()
            .zip(successes.iter().zip(trials))
            .map(|(&x, (&r, &m))| {
                let z = a + g * x;
                r * z - m * softplus(z)
            })
            .sum()
    };
    let mut a = alpha0;
    let mut g = gamma0;
    let mut q = objective(a, g);
    for _ in 0..50 {
        let mut grad_a = 0.0;
        let mut grad_g = 0.0;
        let mut haa = 0.0;
        let mut hag = 0.0;
        let mut hgg = 0.0;
        for (t, &x) in nodes.iter().enumerate() {
            let p = sigmoid(a + g * x);
            let resid = successes[t] - trials[t] * p;
            grad_a += resid;
            grad_g += resid * x;
            let w = trials[t] * p * (1.0 - p);
            haa += w;
            hag += w * x;
            hgg += w * x * x;
        }
        if grad_a.abs().max(grad_g.abs()) < 1e-10 {
            break;
        }
        let det = haa * hgg - hag * hag;
        let (mut da, mut dg) = if det.abs() > 1e-14 {
            ((hgg * grad_a - hag * grad_g) / det, (haa * grad_g - hag * grad_a) / det)
        } else {
            (grad_a, grad_g)
        };
        let mut improved = false;
        for _ in 0..30 {
            let a_try = (a + da).clamp(-LOGIT_BOUND, LOGIT_BOUND);
            let g_try = (g + dg).clamp(-LOGIT_BOUND, LOGIT_BOUND);
            let q_try = objective(a_try, g_try);
            if q_try >= q {
                a = a_try;
                g = g_try;
                q = q_try;
                improved = true;
                break;
            }
            da *= 0.5;
            dg *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (a, g)
}

#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

// ---------------------------------------------------------------------------
// Factor scores
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreType {
    Mean,
    Bartlett,
    Regression,
    Eap,
}

/// Per-person factor score predictions, one column per latent variable.
/// `score_type` records how each column was computed; the entries coincide
/// except under mixed outcome/predictor choices.
#[derive(Debug, Clone)]
pub struct FactorScores {
    pub values: DMatrix<f64>,
    pub score_type: Vec<ScoreType>,
}

impl FactorScores {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }
}

/// Row-wise arithmetic mean of the raw indicators.
pub fn score_mean(y_block: &DMatrix<f64>) -> Vec<f64> {
    let (n, p) = (y_block.nrows(), y_block.ncols());
    (0..n).map(|i| y_block.row(i).sum() / p as f64).collect()
}

fn column_means(y: &DMatrix<f64>) -> Vec<f64> {
    let n = y.nrows();
    (0..y.ncols()).map(|j| y.column(j).sum() / n as f64).collect()
}

/// Bartlett weights (Psi^-1 lambda) / (lambda' Psi^-1 lambda); the scores
/// are conditionally unbiased because the weights satisfy w'lambda = 1.
pub fn bartlett_weights(fit: &OneFactorLinearFit) -> Result<Vec<f64>> {
    let denom: f64 = fit
        .loadings
        .iter()
        .zip(&fit.uniquenesses)
        .map(|(l, u)| l * l / u)
        .sum();
    if !denom.is_finite() || denom.abs() < 1e-12 {
        return Err(Error::Numerical("singular Bartlett precision lambda'Psi^-1 lambda".into()));
    }
    Ok(fit
        .loadings
        .iter()
        .zip(&fit.uniquenesses)
        .map(|(l, u)| (l / u) / denom)
        .collect())
}

/// Sampling noise variance of the Bartlett score, (lambda' Psi^-1 lambda)^-1.
pub fn bartlett_noise_variance(fit: &OneFactorLinearFit) -> Result<f64> {
    let denom: f64 = fit
        .loadings
        .iter()
        .zip(&fit.uniquenesses)
        .map(|(l, u)| l * l / u)
        .sum();
    if !denom.is_finite() || denom.abs() < 1e-12 {
        return Err(Error::Numerical("singular Bartlett precision lambda'Psi^-1 lambda".into()));
    }
    Ok(1.0 / denom)
}

/// Bartlett factor scores on indicators centered at their sample means.
pub fn score_bartlett(y_block: &DMatrix<f64>, fit: &OneFactorLinearFit) -> Result<Vec<f64>> {
    let w = bartlett_weights(fit)?;
    Ok(weighted_centered_scores(y_block, &w))
}

/// Regression factor scores phi lambda' Sigma^-1 (y - ybar); equal to the
/// Bartlett score shrunk by the score reliability.
pub fn score_regression(y_block: &DMatrix<f64>, fit: &OneFactorLinearFit) -> Result<Vec<f64>> {
    let p = fit.p();
    let sigma = implied_cov(&fit.loadings, &fit.uniquenesses, fit.factor_variance);
    let chol = sigma
        .cholesky()
        .ok_or_else(|| Error::Numerical("singular implied covariance in regression scoring".into()))?;
    let lambda = DVector::from_column_slice(&fit.loadings);
    let siglam = chol.solve(&lambda);
    let w: Vec<f64> = (0..p).map(|j| fit.factor_variance * siglam[j]).collect();
    Ok(weighted_centered_scores(y_block, &w))
}

fn weighted_centered_scores(y_block: &DMatrix<f64>, w: &[f64]) -> Vec<f64> {
    let (n, p) = (y_block.nrows(), y_block.ncols());
    let means = column_means(y_block);
    let offset: f64 = w.iter().zip(&means).map(|(wj, mj)| wj * mj).sum();
    let mut out = vec![-offset; n];
    for j in 0..p {
        let wj = w[j];
        for i in 0..n {
            out[i] += wj * y_block[(i, j)];
        }
    }
    out
}

/// Expected a posteriori scores under a standard normal prior on the grid.
/// Rows sharing a response pattern share the computation.
pub fn score_eap(y_block: &DMatrix<f64>, fit: &TwoPlFit, quad: &QuadratureSpec) -> Result<Vec<f64>> {
    let (patterns, _, row_pattern) = response_patterns(y_block)?;
    let table = pattern_log_lik(&patterns, &fit.intercepts, &fit.slopes, quad);
    let (post, _) = posterior(&table, quad);
    let eap_by_pattern: Vec<f64> = (0..patterns.len())
        .map(|p| (0..quad.nodes.len()).map(|t| post[(p, t)] * quad.nodes[t]).sum())
        .collect();
    Ok(row_pattern.iter().map(|&p| eap_by_pattern[p]).collect())
}
