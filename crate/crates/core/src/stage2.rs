//! Second-stage (structural) estimation: OLS on factor scores, score
//! covariances/correlations between latent variables, and the composed
//! initial focal estimator computed with nuisance parameters held fixed.

use nalgebra::{DMatrix, DVector};

use crate::dga::Dataset;
use crate::error::{Error, Result};
use crate::stage1::{
    self, FactorScores, OneFactorLinearFit, QuadratureSpec, ScoreType, TwoPlFit,
};
use crate::study::{ScoreChoice, Study};

/// Focal estimates from one pass of the second stage.
#[derive(Debug, Clone)]
pub struct InitialEstimate {
    pub phi_hat: Vec<f64>,
    pub residual_variance: Option<f64>,
}

/// One regressor in the structural regression: a score column or a raw
/// product of two score columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regressor {
    Linear(usize),
    Product(usize, usize),
}

/// Declarative description of a study's second stage.
///
/// `lv_cov_targets` lists latent pairs whose association is estimated from
/// the score columns; `standardize = true` yields a sample correlation,
/// `false` the sample covariance. Focal parameters are assembled in the
/// canonical order: association targets, regression slopes, then the error
/// variance when estimated.
#[derive(Debug, Clone)]
pub struct StructuralSpec {
    pub study: Study,
    pub score_choice: ScoreChoice,
    pub outcome: usize,
    pub terms: Vec<Regressor>,
    pub estimate_error_variance: bool,
    pub lv_cov_targets: Vec<(usize, usize, bool)>,
}

impl StructuralSpec {
    pub fn for_study(study: Study, score_choice: ScoreChoice) -> Result<Self> {
        if !study.valid_scores().contains(&score_choice) {
            return Err(Error::Usage(format!(
                "score choice {} is not available for study {}",
                score_choice.label(),
                study.index()
            )));
        }
        Ok(match study {
            Study::One => StructuralSpec {
                study,
                score_choice,
                outcome: 1,
                terms: vec![Regressor::Linear(0)],
                estimate_error_variance: true,
                lv_cov_targets: vec![],
            },
            Study::Two => StructuralSpec {
                study,
                score_choice,
                outcome: 2,
                terms: vec![Regressor::Linear(0), Regressor::Linear(1), Regressor::Product(0, 1)],
                estimate_error_variance: true,
                lv_cov_targets: vec![(1, 0, false)],
            },
            Study::Three => StructuralSpec {
                study,
                score_choice,
                outcome: 4,
                terms: (0..4).map(Regressor::Linear).collect(),
                estimate_error_variance: false,
                lv_cov_targets: vec![(1, 0, true), (2, 0, true), (2, 1, true), (3, 0, true), (3, 1, true), (3, 2, true)],
            },
        })
    }

    /// Score type for a given latent-variable block under this spec.
    fn score_type_for(&self, block: usize) -> ScoreType {
        let is_outcome = block == self.outcome;
        match self.score_choice {
            ScoreChoice::MM => ScoreType::Mean,
            ScoreChoice::BB => ScoreType::Bartlett,
            ScoreChoice::RR => ScoreType::Regression,
            ScoreChoice::BR => {
                if is_outcome {
                    ScoreType::Bartlett
                } else {
                    ScoreType::Regression
                }
            }
            ScoreChoice::EAP => ScoreType::Eap,
        }
    }
}

/// Ordinary least squares on a design matrix that already includes its
/// intercept column. Returns the coefficients and the error variance with
/// maximum-likelihood divisor n.
pub fn ols_fit(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(Vec<f64>, f64)> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::Structural("response length does not match design rows".into()));
    }
    let xtx = x.transpose() * x;
    let xty = x.transpose() * y;
    let chol = xtx
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("rank-deficient design matrix in OLS".into()))?;
    // guard against near-singular designs that still factor
    let diag = chol.l().diagonal();
    let dmax = diag.iter().cloned().fold(0.0f64, f64::max);
    let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if dmin <= 1e-10 * dmax {
        return Err(Error::Numerical("rank-deficient design matrix in OLS".into()));
    }
    let coef = chol.solve(&xty);
    let resid = y - x * &coef;
    let rss: f64 = resid.iter().map(|r| r * r).sum();
    Ok((coef.iter().cloned().collect(), rss / n as f64))
}

/// Per-block nuisance parameters extracted from the canonical vector.
enum BlockParams {
    Linear { loadings: Vec<f64>, uniquenesses: Vec<f64>, factor_variance: Option<f64> },
    TwoPl { intercepts: Vec<f64>, slopes: Vec<f64> },
}

fn block_params(study: Study, nu: &[f64], block: usize) -> BlockParams {
    match study {
        Study::One => {
            let base = if block == 0 { 0 } else { 11 };
            BlockParams::Linear {
                loadings: nu[base..base + 5].to_vec(),
                uniquenesses: nu[base + 5..base + 10].to_vec(),
                factor_variance: if block == 0 { Some(nu[10]) } else { None },
            }
        }
        Study::Two => {
            let base = block * 11;
            BlockParams::Linear {
                loadings: nu[base..base + 5].to_vec(),
                uniquenesses: nu[base + 5..base + 10].to_vec(),
                factor_variance: if block < 2 { Some(nu[base + 10]) } else { None },
            }
        }
        Study::Three => {
            let base = block * 16;
            BlockParams::TwoPl {
                intercepts: nu[base..base + 8].to_vec(),
                slopes: nu[base + 8..base + 16].to_vec(),
            }
        }
    }
}

/// Factor scores for every latent variable, computed from fixed nuisance
/// values (no first-stage refit).
///
/// Regression scores need the block's factor variance; for outcome blocks
/// whose variance is not a model parameter it is backed out from the data by
/// the moment identity Var(Bartlett score) = Var(LV) + noise.
pub fn scores_from_nu(y: &Dataset, nu: &[f64], spec: &StructuralSpec) -> Result<FactorScores> {
    let study = spec.study;
    if y.p() != study.p() {
        return Err(Error::Data(format!(
            "study {} expects {} manifest variables, dataset has {}",
            study.index(),
            study.p(),
            y.p()
        )));
    }
    if nu.len() != study.q0() {
        return Err(Error::Structural(format!(
            "study {} expects {} nuisance values, got {}",
            study.index(),
            study.q0(),
            nu.len()
        )));
    }
    let blocks = study.indicator_blocks();
    let n = y.n();
    let mut scores = DMatrix::zeros(n, blocks.len());
    let mut column_types = Vec::with_capacity(blocks.len());
    let quad = QuadratureSpec::default_grid();
    for (b, range) in blocks.iter().enumerate() {
        let cols = y.values.columns(range.start, range.len()).into_owned();
        column_types.push(spec.score_type_for(b));
        let col: Vec<f64> = match (block_params(study, nu, b), spec.score_type_for(b)) {
            (_, ScoreType::Mean) => stage1::score_mean(&cols),
            (BlockParams::Linear { loadings, uniquenesses, .. }, ScoreType::Bartlett) => {
                let fit = OneFactorLinearFit::from_values(loadings, uniquenesses, 1.0);
                stage1::score_bartlett(&cols, &fit)?
            }
            (BlockParams::Linear { loadings, uniquenesses, factor_variance }, ScoreType::Regression) => {
                let fvar = match factor_variance {
                    Some(v) => v,
                    None => moment_factor_variance(&cols, &loadings, &uniquenesses)?,
                };
                let fit = OneFactorLinearFit::from_values(loadings, uniquenesses, fvar);
                stage1::score_regression(&cols, &fit)?
            }
            (BlockParams::TwoPl { intercepts, slopes }, ScoreType::Eap) => {
                let fit = TwoPlFit::from_values(intercepts, slopes);
                stage1::score_eap(&cols, &fit, &quad)?
            }
            _ => {
                return Err(Error::Structural(
                    "score type incompatible with the block's measurement model".into(),
                ))
            }
        };
        for i in 0..n {
            scores[(i, b)] = col[i];
        }
    }
    Ok(FactorScores { values: scores, score_type: column_types })
}

/// Factor variance backed out of the Bartlett-score variance given fixed
/// loadings and uniquenesses.
fn moment_factor_variance(cols: &DMatrix<f64>, loadings: &[f64], uniquenesses: &[f64]) -> Result<f64> {
    let fit = OneFactorLinearFit::from_values(loadings.to_vec(), uniquenesses.to_vec(), 1.0);
    let sb = stage1::score_bartlett(cols, &fit)?;
    let n = sb.len() as f64;
    let mean = sb.iter().sum::<f64>() / n;
    let var = sb.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    let noise = stage1::bartlett_noise_variance(&fit)?;
    Ok((var - noise).max(1e-6))
}

/// Structural estimates from an already-computed score matrix. Exposed so
/// tests can feed the true latent variables through the same code path.
pub fn structural_from_scores(scores: &DMatrix<f64>, spec: &StructuralSpec) -> Result<InitialEstimate> {
    let n = scores.nrows();
    let mut phi_hat = Vec::new();
    for &(i, j, standardize) in &spec.lv_cov_targets {
        phi_hat.push(score_association(scores, i, j, standardize));
    }
    let k = spec.terms.len();
    let mut x = DMatrix::zeros(n, k + 1);
    for i in 0..n {
        x[(i, 0)] = 1.0;
    }
    for (c, term) in spec.terms.iter().enumerate() {
        match *term {
            Regressor::Linear(b) => {
                for i in 0..n {
                    x[(i, c + 1)] = scores[(i, b)];
                }
            }
            Regressor::Product(a, b) => {
                for i in 0..n {
                    x[(i, c + 1)] = scores[(i, a)] * scores[(i, b)];
                }
            }
        }
    }
    let yv = DVector::from_fn(n, |i, _| scores[(i, spec.outcome)]);
    let (coef, err_var) = ols_fit(&x, &yv)?;
    phi_hat.extend_from_slice(&coef[1..]); // intercept discarded
    let residual_variance = if spec.estimate_error_variance {
        phi_hat.push(err_var);
        Some(err_var)
    } else {
        None
    };
    Ok(InitialEstimate { phi_hat, residual_variance })
}

/// Sample covariance (divisor n-1) or correlation of two score columns.
fn score_association(scores: &DMatrix<f64>, i: usize, j: usize, standardize: bool) -> f64 {
    let n = scores.nrows();
    let mi = scores.column(i).sum() / n as f64;
    let mj = scores.column(j).sum() / n as f64;
    let mut sij = 0.0;
    let mut sii = 0.0;
    let mut sjj = 0.0;
    for r in 0..n {
        let di = scores[(r, i)] - mi;
        let dj = scores[(r, j)] - mj;
        sij += di * dj;
        sii += di * di;
        sjj += dj * dj;
    }
    if standardize {
        sij / (sii * sjj).sqrt()
    } else {
        sij / (n as f64 - 1.0)
    }
}

/// The initial focal estimator: scores from fixed nuisance values, then the
/// structural pass. A deterministic function of `(y, nu, spec)`.
pub fn initial_estimator(y: &Dataset, nu: &[f64], spec: &StructuralSpec) -> Result<InitialEstimate> {
    let scores = scores_from_nu(y, nu, spec)?;
    structural_from_scores(&scores.values, spec)
}

/// First-stage estimator: fit each measurement block on its own and
/// concatenate the estimates in the canonical parameter order.
pub fn nuisance_estimator(y: &Dataset, study: Study) -> Result<Vec<f64>> {
    if y.p() != study.p() {
        return Err(Error::Data(format!(
            "study {} expects {} manifest variables, dataset has {}",
            study.index(),
            study.p(),
            y.p()
        )));
    }
    let blocks = study.indicator_blocks();
    let mut nu = Vec::with_capacity(study.q0());
    match study {
        Study::One | Study::Two => {
            let keep_variance: Vec<bool> = match study {
                Study::One => vec![true, false],
                Study::Two => vec![true, true, false],
                Study::Three => unreachable!(),
            };
            for (b, range) in blocks.iter().enumerate() {
                let cols = y.values.columns(range.start, range.len()).into_owned();
                let fit = stage1::fit_onefactor_linear(&cols)?;
                nu.extend_from_slice(&fit.loadings);
                nu.extend_from_slice(&fit.uniquenesses);
                if keep_variance[b] {
                    nu.push(fit.factor_variance);
                }
            }
        }
        Study::Three => {
            let quad = QuadratureSpec::default_grid();
            for range in &blocks {
                let cols = y.values.columns(range.start, range.len()).into_owned();
                let fit = stage1::fit_2pl(&cols, &quad)?;
                nu.extend_from_slice(&fit.intercepts);
                nu.extend_from_slice(&fit.slopes);
            }
        }
    }
    debug_assert_eq!(nu.len(), study.q0());
    Ok(nu)
}

/// Full two-stage estimate (nuisance refit, then focal), in canonical order.
pub fn full_estimator(y: &Dataset, spec: &StructuralSpec) -> Result<Vec<f64>> {
    let nu = nuisance_estimator(y, spec.study)?;
    let est = initial_estimator(y, &nu, spec)?;
    let mut theta = nu;
    theta.extend_from_slice(&est.phi_hat);
    Ok(theta)
}
