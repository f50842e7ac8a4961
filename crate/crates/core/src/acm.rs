//! Covariance of the bias-corrected estimator.
//!
//! Three Monte Carlo pieces share one loop of M replications and one set of
//! random components per replication (common random numbers): a parametric
//! bootstrap of the full initial estimator for its finite-sample covariance,
//! a simultaneous-perturbation Jacobian of the expectation surface, and the
//! transform `Delta = [-J_phi^{-1} J_nu : J_phi^{-1}]` that sandwiches the
//! bootstrap covariance into standard errors.
//!
//! All covariances stay on the finite-sample scale: the bootstrap spread of
//! the estimator already carries the 1/n factor, so no explicit scaling by
//! the sample size appears anywhere.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde_json::json;

use crate::dga::draw_components;
use crate::error::{Error, Result};
use crate::model::TwoStageModel;
use crate::params::FeasibilitySpec;
use crate::rng;

/// Stream-domain tag for the shared component draws U^(m).
pub const STREAM_ACM_COMPONENTS: u64 = 0xAC01;
/// Stream-domain tag for the Rademacher sign draws.
pub const STREAM_ACM_SIGNS: u64 = 0xAC02;

/// Tuning of a covariance run.
#[derive(Debug, Clone)]
pub struct AcmConfig {
    /// Monte Carlo replications M.
    pub replications: usize,
    /// Perturbation constant for the SP Jacobian.
    pub delta: f64,
    /// Partition of all q parameter indices into perturbation blocks.
    pub blocks: Vec<Vec<usize>>,
    pub seed: u64,
    /// Focal feasibility, used only to shrink `delta` away from box bounds.
    pub feasibility: Option<FeasibilitySpec>,
}

impl AcmConfig {
    /// Whole-vector perturbation (a single block).
    pub fn whole_vector(q: usize, replications: usize, delta: f64, seed: u64) -> Self {
        Self {
            replications,
            delta,
            blocks: vec![(0..q).collect()],
            seed,
            feasibility: None,
        }
    }

    /// Chop the canonical order into `b` consecutive blocks of equal size
    /// (the last takes any remainder).
    pub fn consecutive_blocks(q: usize, b: usize) -> Vec<Vec<usize>> {
        assert!(b >= 1 && b <= q);
        let base = q / b;
        let extra = q % b;
        let mut blocks = Vec::with_capacity(b);
        let mut next = 0;
        for i in 0..b {
            let len = base + usize::from(i < extra);
            blocks.push((next..next + len).collect());
            next += len;
        }
        blocks
    }

    pub fn validate(&self, q: usize) -> Result<()> {
        if self.replications < 1 {
            return Err(Error::Usage("at least one Monte Carlo replication required".into()));
        }
        if !(self.delta > 0.0) {
            return Err(Error::Usage("perturbation constant must be positive".into()));
        }
        let mut seen = vec![false; q];
        for block in &self.blocks {
            for &i in block {
                if i >= q || seen[i] {
                    return Err(Error::Usage(format!(
                        "perturbation blocks must partition 0..{q} (index {i})"
                    )));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Usage("perturbation blocks do not cover all parameters".into()));
        }
        Ok(())
    }
}

/// Output of the covariance pipeline.
#[derive(Debug, Clone)]
pub struct AcmResult {
    /// Finite-sample covariance of the full initial estimator (q x q).
    pub omega_hat: DMatrix<f64>,
    /// SP estimate of the q1 x q Jacobian of the expectation surface.
    pub jacobian: DMatrix<f64>,
    /// The transform `[-J_phi^{-1} J_nu : J_phi^{-1}]` (q1 x q).
    pub delta_mat: DMatrix<f64>,
    /// Sandwich covariance of the bias-corrected estimator (q1 x q1).
    pub sandwich: DMatrix<f64>,
    /// Standard errors: square roots of the sandwich diagonal.
    pub ses: Vec<f64>,
    pub skipped_bootstrap: usize,
    pub skipped_sp: usize,
    pub warnings: Vec<String>,
}

impl AcmResult {
    /// Row-major JSON with dimension headers for every matrix.
    pub fn to_json(&self) -> serde_json::Value {
        fn mat(m: &DMatrix<f64>) -> serde_json::Value {
            let data: Vec<f64> = (0..m.nrows())
                .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
                .map(|(i, j)| m[(i, j)])
                .collect();
            json!({"rows": m.nrows(), "cols": m.ncols(), "data": data})
        }
        json!({
            "omega_hat": mat(&self.omega_hat),
            "jacobian": mat(&self.jacobian),
            "delta": mat(&self.delta_mat),
            "sandwich": mat(&self.sandwich),
            "ses": self.ses,
            "skipped_bootstrap": self.skipped_bootstrap,
            "skipped_sp": self.skipped_sp,
            "warnings": self.warnings,
        })
    }
}

const SKIP_FRACTION: f64 = 0.05;

/// Parametric bootstrap covariance of the full initial estimator
/// `(nuisance refit, focal given that refit)` at `theta`, with divisor M-1.
/// Failed replications are skipped; more than 5% skipped is an error.
pub fn bootstrap_omega(
    theta: &[f64],
    cfg: &AcmConfig,
    model: &dyn TwoStageModel,
) -> Result<(DMatrix<f64>, usize)> {
    let q = model.q();
    cfg.validate(q)?;
    if cfg.replications < 2 {
        return Err(Error::Usage("a bootstrap covariance needs at least 2 replications".into()));
    }
    let estimates: Vec<Option<Vec<f64>>> = (0..cfg.replications)
        .into_par_iter()
        .map(|m| {
            let stream = rng::chain(&[STREAM_ACM_COMPONENTS, m as u64]);
            let u = draw_components(model.n(), model.layout(), cfg.seed, stream);
            model
                .generate(&u, theta)
                .and_then(|y| {
                    let nu = model.nuisance_estimate(&y)?;
                    let phi = model.initial_estimate(&y, &nu)?;
                    let mut full = nu;
                    full.extend_from_slice(&phi);
                    Ok(full)
                })
                .ok()
        })
        .collect();

    let kept: Vec<&Vec<f64>> = estimates.iter().flatten().collect();
    let skipped = cfg.replications - kept.len();
    if (skipped as f64) > SKIP_FRACTION * cfg.replications as f64 {
        return Err(Error::Numerical(format!(
            "{skipped} of {} bootstrap replications failed",
            cfg.replications
        )));
    }
    if kept.len() < 2 {
        return Err(Error::Numerical("too few bootstrap replications succeeded".into()));
    }

    let m_ok = kept.len();
    let mut mean = vec![0.0; q];
    for est in &kept {
        for (a, v) in mean.iter_mut().zip(est.iter()) {
            *a += v;
        }
    }
    mean.iter_mut().for_each(|a| *a /= m_ok as f64);
    let mut omega = DMatrix::zeros(q, q);
    for est in &kept {
        for i in 0..q {
            let di = est[i] - mean[i];
            for j in i..q {
                omega[(i, j)] += di * (est[j] - mean[j]);
            }
        }
    }
    for i in 0..q {
        for j in i..q {
            let v = omega[(i, j)] / (m_ok as f64 - 1.0);
            omega[(i, j)] = v;
            omega[(j, i)] = v;
        }
    }
    Ok((omega, skipped))
}

/// Simultaneous-perturbation Jacobian of the expectation surface.
///
/// Per block and replication, a Rademacher sign vector over the block's
/// coordinates perturbs `theta` by `±delta`; both evaluations consume the
/// same components `U^(m)`, so the centered difference differentiates the
/// deterministic map rather than the noise.
pub fn sp_jacobian(
    theta: &[f64],
    cfg: &AcmConfig,
    model: &dyn TwoStageModel,
) -> Result<(DMatrix<f64>, usize, Vec<String>)> {
    let q = model.q();
    let q0 = model.q0();
    let q1 = model.q1();
    cfg.validate(q)?;
    let mut warnings = Vec::new();
    let delta = effective_delta(theta, cfg, q0, &mut warnings);

    let mut jacobian = DMatrix::zeros(q1, q);
    let mut skipped_total = 0usize;
    for (bi, block) in cfg.blocks.iter().enumerate() {
        let contributions: Vec<Option<Vec<f64>>> = (0..cfg.replications)
            .into_par_iter()
            .map(|m| {
                let stream_u = rng::chain(&[STREAM_ACM_COMPONENTS, m as u64]);
                let u = draw_components(model.n(), model.layout(), cfg.seed, stream_u);
                let stream_e = rng::chain(&[STREAM_ACM_SIGNS, bi as u64, m as u64]);
                let signs: Vec<f64> = (0..block.len())
                    .map(|c| rng::cell_sign(cfg.seed, stream_e, c as u64, 0))
                    .collect();
                let mut plus = theta.to_vec();
                let mut minus = theta.to_vec();
                for (&idx, &e) in block.iter().zip(&signs) {
                    plus[idx] += delta * e;
                    minus[idx] -= delta * e;
                }
                let eval = |point: &[f64]| -> Result<Vec<f64>> {
                    let y = model.generate(&u, point)?;
                    model.initial_estimate(&y, &point[..q0])
                };
                match (eval(&plus), eval(&minus)) {
                    (Ok(ep), Ok(em)) => {
                        let diff: Vec<f64> =
                            ep.iter().zip(&em).map(|(p, m)| (p - m) / (2.0 * delta)).collect();
                        // columns for the block: diff scaled by 1/sign
                        let mut cols = Vec::with_capacity(block.len() * q1);
                        for &e in &signs {
                            cols.extend(diff.iter().map(|d| d / e));
                        }
                        Some(cols)
                    }
                    _ => None,
                }
            })
            .collect();
        let kept: Vec<&Vec<f64>> = contributions.iter().flatten().collect();
        let skipped = cfg.replications - kept.len();
        skipped_total += skipped;
        if (skipped as f64) > SKIP_FRACTION * cfg.replications as f64 {
            return Err(Error::Numerical(format!(
                "{skipped} of {} perturbation replications failed in block {bi}",
                cfg.replications
            )));
        }
        let m_ok = kept.len() as f64;
        for (ci, &col_idx) in block.iter().enumerate() {
            for r in 0..q1 {
                let mut acc = 0.0;
                for est in &kept {
                    acc += est[ci * q1 + r];
                }
                jacobian[(r, col_idx)] = acc / m_ok;
            }
        }
    }
    Ok((jacobian, skipped_total, warnings))
}

/// Shrink the perturbation constant if a box-bounded focal coordinate sits
/// closer to its bound than `delta`.
fn effective_delta(theta: &[f64], cfg: &AcmConfig, q0: usize, warnings: &mut Vec<String>) -> f64 {
    let mut delta = cfg.delta;
    if let Some(spec) = &cfg.feasibility {
        let mut margin = f64::INFINITY;
        for (i, b) in spec.box_bounds.iter().enumerate() {
            let v = theta[q0 + i];
            if let Some(lo) = b.lower {
                margin = margin.min(v - lo);
            }
            if let Some(hi) = b.upper {
                margin = margin.min(hi - v);
            }
        }
        if margin < delta && margin > 0.0 {
            warnings.push(format!(
                "perturbation constant shrunk from {delta:.3e} to {margin:.3e} to stay feasible"
            ));
            delta = margin;
        }
    }
    delta
}

/// The delta-method transform `[-J_phi^{-1} J_nu : J_phi^{-1}]`.
pub fn delta_matrix(jacobian: &DMatrix<f64>, q0: usize) -> Result<DMatrix<f64>> {
    let q1 = jacobian.nrows();
    let q = jacobian.ncols();
    if q0 + q1 != q {
        return Err(Error::Structural(format!(
            "jacobian is {q1} x {q}, inconsistent with q0 = {q0}"
        )));
    }
    let j_phi = jacobian.columns(q0, q1).into_owned();
    let svd = j_phi.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(smin > 0.0) || smax / smin > 1e12 {
        return Err(Error::Inference(format!(
            "focal Jacobian block is numerically singular (condition {:.3e}); \
             increase the replication count or the perturbation constant",
            if smin > 0.0 { smax / smin } else { f64::INFINITY }
        )));
    }
    let j_phi_inv = j_phi
        .try_inverse()
        .ok_or_else(|| Error::Inference("focal Jacobian block is singular".into()))?;
    let mut out = DMatrix::zeros(q1, q);
    if q0 > 0 {
        let j_nu = jacobian.columns(0, q0);
        let left = -(&j_phi_inv * j_nu);
        out.columns_mut(0, q0).copy_from(&left);
    }
    out.columns_mut(q0, q1).copy_from(&j_phi_inv);
    Ok(out)
}

/// Sandwich covariance `Delta Omega Delta'` and its standard errors.
pub fn sandwich(delta_mat: &DMatrix<f64>, omega_hat: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    if delta_mat.ncols() != omega_hat.nrows() || omega_hat.nrows() != omega_hat.ncols() {
        return Err(Error::Structural("non-conformable sandwich factors".into()));
    }
    let mut s = delta_mat * omega_hat * delta_mat.transpose();
    let q1 = s.nrows();
    let scale = s.iter().map(|v| v.abs()).fold(1e-300, f64::max);
    for i in 0..q1 {
        for j in 0..i {
            if (s[(i, j)] - s[(j, i)]).abs() > 1e-10 * scale {
                return Err(Error::Numerical("sandwich covariance lost symmetry".into()));
            }
            let avg = 0.5 * (s[(i, j)] + s[(j, i)]);
            s[(i, j)] = avg;
            s[(j, i)] = avg;
        }
    }
    let mut ses = Vec::with_capacity(q1);
    for i in 0..q1 {
        let v = s[(i, i)];
        if v < -1e-10 * scale {
            return Err(Error::Numerical(format!(
                "negative sandwich variance at coordinate {i}: {v:.3e}"
            )));
        }
        ses.push(v.max(0.0).sqrt());
    }
    Ok((s, ses))
}

/// Run the whole covariance pipeline at `theta`.
pub fn estimate_acm(theta: &[f64], cfg: &AcmConfig, model: &dyn TwoStageModel) -> Result<AcmResult> {
    let (omega_hat, skipped_bootstrap) = bootstrap_omega(theta, cfg, model)?;
    let (jacobian, skipped_sp, warnings) = sp_jacobian(theta, cfg, model)?;
    let delta_mat = delta_matrix(&jacobian, model.q0())?;
    let (sandwich_mat, ses) = sandwich(&delta_mat, &omega_hat)?;
    Ok(AcmResult {
        omega_hat,
        jacobian,
        delta_mat,
        sandwich: sandwich_mat,
        ses,
        skipped_bootstrap,
        skipped_sp,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dga::{ColumnSpec, Dataset, DatasetKind, Marginal, RandomComponentLayout, RandomComponents};

    fn noise_layout(cols: usize) -> RandomComponentLayout {
        RandomComponentLayout {
            columns: (0..cols)
                .map(|_| ColumnSpec { marginal: Marginal::StdNormal, role: "z" })
                .collect(),
        }
    }

    /// Deterministic polynomial stub: the dataset is the parameter vector
    /// itself and the "estimator" evaluates a fixed map of it.
    struct MapStub {
        layout: RandomComponentLayout,
        q0: usize,
        q1: usize,
        map: fn(&[f64]) -> Vec<f64>,
    }

    impl MapStub {
        fn new(q0: usize, q1: usize, map: fn(&[f64]) -> Vec<f64>) -> Self {
            Self { layout: noise_layout(1), q0, q1, map }
        }
    }

    impl TwoStageModel for MapStub {
        fn q(&self) -> usize {
            self.q0 + self.q1
        }
        fn q1(&self) -> usize {
            self.q1
        }
        fn n(&self) -> usize {
            1
        }
        fn layout(&self) -> &RandomComponentLayout {
            &self.layout
        }
        fn generate(&self, _u: &RandomComponents, theta: &[f64]) -> crate::error::Result<Dataset> {
            Ok(Dataset {
                values: nalgebra::DMatrix::from_row_slice(1, theta.len(), theta),
                kind: DatasetKind::Continuous,
                label: "stub",
            })
        }
        fn initial_estimate(&self, y: &Dataset, _nu: &[f64]) -> crate::error::Result<Vec<f64>> {
            let theta: Vec<f64> = y.values.row(0).iter().cloned().collect();
            Ok((self.map)(&theta))
        }
        fn nuisance_estimate(&self, y: &Dataset) -> crate::error::Result<Vec<f64>> {
            Ok(y.values.row(0).iter().take(self.q0).cloned().collect())
        }
    }

    /// Sample-mean stub: n standard normals shifted by theta, estimated by
    /// their mean.
    struct MeanStub {
        layout: RandomComponentLayout,
        n: usize,
    }

    impl TwoStageModel for MeanStub {
        fn q(&self) -> usize {
            1
        }
        fn q1(&self) -> usize {
            1
        }
        fn n(&self) -> usize {
            self.n
        }
        fn layout(&self) -> &RandomComponentLayout {
            &self.layout
        }
        fn generate(&self, u: &RandomComponents, theta: &[f64]) -> crate::error::Result<Dataset> {
            let vals = nalgebra::DMatrix::from_fn(self.n, 1, |i, _| theta[0] + u.values[(i, 0)]);
            Ok(Dataset { values: vals, kind: DatasetKind::Continuous, label: "stub" })
        }
        fn initial_estimate(&self, y: &Dataset, _nu: &[f64]) -> crate::error::Result<Vec<f64>> {
            Ok(vec![y.values.column(0).sum() / self.n as f64])
        }
        fn nuisance_estimate(&self, _y: &Dataset) -> crate::error::Result<Vec<f64>> {
            Ok(vec![])
        }
    }

    #[test]
    fn bootstrap_of_deterministic_estimator_is_zero() {
        let model = MapStub::new(0, 1, |t| vec![0.8 * t[0]]);
        let cfg = AcmConfig::whole_vector(1, 50, 0.01, 1);
        let (omega, skipped) = bootstrap_omega(&[0.5], &cfg, &model).unwrap();
        assert_eq!(skipped, 0);
        assert!(omega[(0, 0)].abs() < 1e-30);
    }

    #[test]
    fn bootstrap_matches_sample_mean_variance() {
        let model = MeanStub { layout: noise_layout(1), n: 100 };
        let cfg = AcmConfig::whole_vector(1, 1000, 0.01, 44);
        let (omega, _) = bootstrap_omega(&[0.0], &cfg, &model).unwrap();
        // Var(mean of 100 std normals) = 0.01; chi-square concentration at
        // M = 1000 keeps the estimate within 15%.
        assert!(
            (omega[(0, 0)] - 0.01).abs() < 0.0015,
            "bootstrap variance {}",
            omega[(0, 0)]
        );
    }

    #[test]
    fn sp_recovers_linear_map_exactly_with_singleton_blocks() {
        // phi_hat = A theta with A = [[1, -2, 0.5], [0, 3, 1]] (q0=1, q1=2).
        // Single-coordinate blocks make the estimate a pure centered
        // difference, exact on a linear map for any delta with one draw.
        let model = MapStub::new(1, 2, |t| {
            vec![t[0] - 2.0 * t[1] + 0.5 * t[2], 3.0 * t[1] + t[2]]
        });
        let mut cfg = AcmConfig::whole_vector(3, 1, 0.37, 9);
        cfg.blocks = AcmConfig::consecutive_blocks(3, 3);
        let (j, skipped, _) = sp_jacobian(&[0.3, -0.8, 1.2], &cfg, &model).unwrap();
        assert_eq!(skipped, 0);
        let expect = [[1.0, -2.0, 0.5], [0.0, 3.0, 1.0]];
        for r in 0..2 {
            for c in 0..3 {
                assert!(
                    (j[(r, c)] - expect[r][c]).abs() < 1e-10,
                    "J[{r},{c}] = {}",
                    j[(r, c)]
                );
            }
        }
    }

    #[test]
    fn sp_whole_vector_is_unbiased_for_linear_maps() {
        // With simultaneous (whole-vector) perturbation a single draw is
        // contaminated by the off-column terms J[:,j] e_j / e_c; they are
        // mean-zero, so averaging over replications recovers A without any
        // delta-dependent bias.
        let model = MapStub::new(1, 2, |t| {
            vec![t[0] - 2.0 * t[1] + 0.5 * t[2], 3.0 * t[1] + t[2]]
        });
        let cfg = AcmConfig::whole_vector(3, 4000, 0.37, 9);
        let (j, _, _) = sp_jacobian(&[0.3, -0.8, 1.2], &cfg, &model).unwrap();
        let expect = [[1.0, -2.0, 0.5], [0.0, 3.0, 1.0]];
        for r in 0..2 {
            for c in 0..3 {
                // cross terms have sd <= ~3.6 per draw; 4000 draws leave
                // well under 0.2 of Monte Carlo noise at 3 sigma
                assert!(
                    (j[(r, c)] - expect[r][c]).abs() < 0.2,
                    "J[{r},{c}] = {}",
                    j[(r, c)]
                );
            }
        }
    }

    #[test]
    fn sp_on_square_at_one_gives_exactly_two() {
        let model = MapStub::new(0, 1, |t| vec![t[0] * t[0]]);
        let cfg = AcmConfig::whole_vector(1, 1, 0.01, 9);
        let (j, _, _) = sp_jacobian(&[1.0], &cfg, &model).unwrap();
        assert!((j[(0, 0)] - 2.0).abs() < 1e-12, "derivative {}", j[(0, 0)]);
    }

    #[test]
    fn sp_bias_on_cubic_decays_quadratically() {
        // For phi_hat = theta^3 at 1, the centered difference is 3 + delta^2,
        // so halving delta cuts the bias by four.
        let model = MapStub::new(0, 1, |t| vec![t[0].powi(3)]);
        let err = |delta: f64| -> f64 {
            let cfg = AcmConfig::whole_vector(1, 1, delta, 9);
            let (j, _, _) = sp_jacobian(&[1.0], &cfg, &model).unwrap();
            (j[(0, 0)] - 3.0).abs()
        };
        let ratio = err(0.02) / err(0.01);
        assert!((ratio - 4.0).abs() < 0.1, "bias ratio {ratio}");
    }

    #[test]
    fn blockwise_sp_with_singleton_blocks_equals_central_differences() {
        let model = MapStub::new(1, 2, |t| {
            vec![t[0] * t[1] + t[2].powi(2), (t[0] + t[1] + t[2]).powi(2)]
        });
        let theta = [0.7, -0.4, 1.1];
        let delta = 1e-3;
        let mut cfg = AcmConfig::whole_vector(3, 4, delta, 5);
        cfg.blocks = AcmConfig::consecutive_blocks(3, 3);
        let (j_block, _, _) = sp_jacobian(&theta, &cfg, &model).unwrap();
        // direct central differences of the deterministic map
        let map = |t: &[f64]| vec![t[0] * t[1] + t[2].powi(2), (t[0] + t[1] + t[2]).powi(2)];
        for c in 0..3 {
            let mut plus = theta.to_vec();
            let mut minus = theta.to_vec();
            plus[c] += delta;
            minus[c] -= delta;
            let (fp, fm) = (map(&plus), map(&minus));
            for r in 0..2 {
                let cd = (fp[r] - fm[r]) / (2.0 * delta);
                assert!(
                    (j_block[(r, c)] - cd).abs() < 1e-10,
                    "block SP vs CD at [{r},{c}]"
                );
            }
        }
    }

    #[test]
    fn sp_noise_cancels_under_common_random_numbers() {
        // The estimator adds component noise; with the same U on both sides
        // of the centered difference the noise cancels exactly, leaving the
        // derivative of the deterministic part.
        struct NoisyLinear {
            layout: RandomComponentLayout,
        }
        impl TwoStageModel for NoisyLinear {
            fn q(&self) -> usize {
                1
            }
            fn q1(&self) -> usize {
                1
            }
            fn n(&self) -> usize {
                1
            }
            fn layout(&self) -> &RandomComponentLayout {
                &self.layout
            }
            fn generate(&self, u: &RandomComponents, theta: &[f64]) -> crate::error::Result<Dataset> {
                Ok(Dataset {
                    values: nalgebra::DMatrix::from_element(1, 1, theta[0] + 2.5 * u.values[(0, 0)]),
                    kind: DatasetKind::Continuous,
                    label: "stub",
                })
            }
            fn initial_estimate(&self, y: &Dataset, _nu: &[f64]) -> crate::error::Result<Vec<f64>> {
                Ok(vec![y.values[(0, 0)]])
            }
            fn nuisance_estimate(&self, _y: &Dataset) -> crate::error::Result<Vec<f64>> {
                Ok(vec![])
            }
        }
        let model = NoisyLinear { layout: noise_layout(1) };
        let cfg = AcmConfig::whole_vector(1, 3, 0.05, 77);
        let (j, _, _) = sp_jacobian(&[0.4], &cfg, &model).unwrap();
        assert!((j[(0, 0)] - 1.0).abs() < 1e-12, "derivative {}", j[(0, 0)]);
    }

    #[test]
    fn delta_matrix_scalar_no_nuisance() {
        let j = DMatrix::from_row_slice(1, 1, &[2.0]);
        let d = delta_matrix(&j, 0).unwrap();
        assert!((d[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn delta_matrix_one_nuisance_one_focal() {
        let j = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let d = delta_matrix(&j, 1).unwrap();
        assert!((d[(0, 0)] + 0.5).abs() < 1e-15);
        assert!((d[(0, 1)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn delta_matrix_identity_jacobian_is_unbiased_limit() {
        let mut j = DMatrix::zeros(2, 5);
        j[(0, 3)] = 1.0;
        j[(1, 4)] = 1.0;
        let d = delta_matrix(&j, 3).unwrap();
        for c in 0..3 {
            assert_eq!(d[(0, c)], 0.0);
            assert_eq!(d[(1, c)], 0.0);
        }
        assert_eq!(d[(0, 3)], 1.0);
        assert_eq!(d[(1, 4)], 1.0);
    }

    #[test]
    fn delta_matrix_rejects_singular_focal_block() {
        let j = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(delta_matrix(&j, 0), Err(Error::Inference(_))));
    }

    #[test]
    fn sandwich_identity_transform_extracts_focal_block() {
        let mut omega = DMatrix::zeros(3, 3);
        omega[(0, 0)] = 1.0;
        omega[(1, 1)] = 2.0;
        omega[(2, 2)] = 3.0;
        omega[(1, 2)] = 0.5;
        omega[(2, 1)] = 0.5;
        let mut d = DMatrix::zeros(2, 3);
        d[(0, 1)] = 1.0;
        d[(1, 2)] = 1.0;
        let (s, ses) = sandwich(&d, &omega).unwrap();
        assert_eq!(s[(0, 0)], 2.0);
        assert_eq!(s[(1, 1)], 3.0);
        assert_eq!(s[(0, 1)], 0.5);
        assert!((ses[0] - 2.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn sandwich_scalar_arithmetic() {
        let d = DMatrix::from_row_slice(1, 1, &[0.5]);
        let omega = DMatrix::from_row_slice(1, 1, &[0.04]);
        let (s, ses) = sandwich(&d, &omega).unwrap();
        assert!((s[(0, 0)] - 0.01).abs() < 1e-15);
        assert!((ses[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn sandwich_is_psd_for_random_factors() {
        // Omega = B B' is PSD, so Delta Omega Delta' must be too.
        let b = DMatrix::from_fn(4, 4, |i, j| {
            crate::rng::cell_normal(5, 6, i as u64, j as u64)
        });
        let omega = &b * b.transpose();
        let d = DMatrix::from_fn(2, 4, |i, j| crate::rng::cell_normal(7, 8, i as u64, j as u64));
        let (s, _) = sandwich(&d, &omega).unwrap();
        let eigs = s.symmetric_eigen().eigenvalues;
        for e in eigs.iter() {
            assert!(*e >= -1e-10, "eigenvalue {e}");
        }
    }

    #[test]
    fn consecutive_blocks_partition_the_range() {
        let blocks = AcmConfig::consecutive_blocks(90, 15);
        assert_eq!(blocks.len(), 15);
        assert!(blocks.iter().all(|b| b.len() == 6));
        let flat: Vec<usize> = blocks.into_iter().flatten().collect();
        assert_eq!(flat, (0..90).collect::<Vec<_>>());
    }

    #[test]
    fn end_to_end_acm_on_linear_gaussian_stub() {
        // estimator = sample mean, h(theta) = theta, so Delta = I and the
        // sandwich equals the bootstrap variance of the mean.
        let model = MeanStub { layout: noise_layout(1), n: 100 };
        let cfg = AcmConfig::whole_vector(1, 400, 1e-4, 3);
        let res = estimate_acm(&[0.2], &cfg, &model).unwrap();
        assert!((res.jacobian[(0, 0)] - 1.0).abs() < 1e-10);
        assert!((res.sandwich[(0, 0)] - res.omega_hat[(0, 0)]).abs() < 1e-12);
        assert!((res.ses[0] - 0.1).abs() < 0.02, "se {}", res.ses[0]);

        let json = res.to_json();
        assert_eq!(json["omega_hat"]["rows"], 1);
        assert_eq!(json["sandwich"]["cols"], 1);
        assert_eq!(json["omega_hat"]["data"].as_array().unwrap().len(), 1);
        assert_eq!(json["ses"].as_array().unwrap().len(), 1);
    }
}
