//! Deterministic data-generating algorithms.
//!
//! A generator maps a matrix of primitive random components (standard normal
//! or uniform columns with a fixed layout) and a parameter vector to a
//! dataset. Holding the components fixed while varying the parameters is
//! what makes common random numbers work: the same `RandomComponents` value
//! fed twice produces bit-identical data.

use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::rng;

/// Marginal distribution of one component column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Marginal {
    StdNormal,
    Uniform01,
}

/// One column of the component matrix: its marginal and a role label used
/// in diagnostics.
#[derive(Debug, Clone)]
pub struct ColumnSpec {
    pub marginal: Marginal,
    pub role: &'static str,
}

/// Column layout of a component matrix.
#[derive(Debug, Clone)]
pub struct RandomComponentLayout {
    pub columns: Vec<ColumnSpec>,
}

impl RandomComponentLayout {
    pub fn width(&self) -> usize {
        self.columns.len()
    }

    fn normals_then(roles_normal: &[&'static str], roles_uniform: &[&'static str]) -> Self {
        let mut columns: Vec<ColumnSpec> = roles_normal
            .iter()
            .map(|&role| ColumnSpec { marginal: Marginal::StdNormal, role })
            .collect();
        columns.extend(
            roles_uniform
                .iter()
                .map(|&role| ColumnSpec { marginal: Marginal::Uniform01, role }),
        );
        Self { columns }
    }
}

const LV_ROLES_S1: [&str; 2] = ["lv1", "lv2"];
const LV_ROLES_S2: [&str; 3] = ["lv1", "lv2", "lv3"];
const LV_ROLES_S3: [&str; 5] = ["lv1", "lv2", "lv3", "lv4", "lv5"];

/// 12 standard normal columns: two latent drivers and ten unique errors.
pub fn layout_study1() -> RandomComponentLayout {
    let mut roles: Vec<&'static str> = LV_ROLES_S1.to_vec();
    roles.extend((0..10).map(eps_role));
    RandomComponentLayout::normals_then(&roles, &[])
}

/// 18 standard normal columns: three latent drivers and fifteen unique errors.
pub fn layout_study2() -> RandomComponentLayout {
    let mut roles: Vec<&'static str> = LV_ROLES_S2.to_vec();
    roles.extend((0..15).map(eps_role));
    RandomComponentLayout::normals_then(&roles, &[])
}

/// 5 standard normal columns for the latent drivers plus 40 uniform columns,
/// one per binary item.
pub fn layout_study3() -> RandomComponentLayout {
    let mut norm: Vec<&'static str> = LV_ROLES_S3.to_vec();
    norm.truncate(5);
    let unis: Vec<&'static str> = (0..40).map(item_role).collect();
    RandomComponentLayout::normals_then(&norm, &unis)
}

fn eps_role(j: usize) -> &'static str {
    const ROLES: [&str; 15] = [
        "eps1", "eps2", "eps3", "eps4", "eps5", "eps6", "eps7", "eps8", "eps9", "eps10", "eps11",
        "eps12", "eps13", "eps14", "eps15",
    ];
    ROLES[j]
}

fn item_role(j: usize) -> &'static str {
    const ROLES: [&str; 40] = [
        "item1", "item2", "item3", "item4", "item5", "item6", "item7", "item8", "item9", "item10",
        "item11", "item12", "item13", "item14", "item15", "item16", "item17", "item18", "item19",
        "item20", "item21", "item22", "item23", "item24", "item25", "item26", "item27", "item28",
        "item29", "item30", "item31", "item32", "item33", "item34", "item35", "item36", "item37",
        "item38", "item39", "item40",
    ];
    ROLES[j]
}

/// A materialized matrix of primitive variates.
#[derive(Debug, Clone)]
pub struct RandomComponents {
    pub values: DMatrix<f64>,
    pub layout: RandomComponentLayout,
    pub seed_tag: u64,
}

impl RandomComponents {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }
}

/// Fill a component matrix for `(seed, stream)`. Every cell is a pure
/// function of `(seed, stream, row, column)`, so the result is independent
/// of evaluation order and of how work is scheduled.
pub fn draw_components(
    n: usize,
    layout: &RandomComponentLayout,
    seed: u64,
    stream: u64,
) -> RandomComponents {
    let m = layout.width();
    let mut values = DMatrix::zeros(n, m);
    for (j, col) in layout.columns.iter().enumerate() {
        match col.marginal {
            Marginal::StdNormal => {
                for i in 0..n {
                    values[(i, j)] = rng::cell_normal(seed, stream, i as u64, j as u64);
                }
            }
            Marginal::Uniform01 => {
                for i in 0..n {
                    values[(i, j)] = rng::cell_uniform(seed, stream, i as u64, j as u64);
                }
            }
        }
    }
    RandomComponents {
        values,
        layout: layout.clone(),
        seed_tag: rng::chain(&[seed, stream]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Continuous,
    Binary,
}

/// An n x p manifest-variable matrix.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub values: DMatrix<f64>,
    pub kind: DatasetKind,
    pub label: &'static str,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    /// Write as CSV with a `y1..yp` header; binary data as 0/1 integers.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let p = self.p();
        let header: Vec<String> = (1..=p).map(|j| format!("y{j}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.n() {
            let mut row = String::new();
            for j in 0..p {
                if j > 0 {
                    row.push(',');
                }
                match self.kind {
                    DatasetKind::Binary => row.push_str(&format!("{}", self.values[(i, j)] as i64)),
                    DatasetKind::Continuous => row.push_str(&format!("{}", self.values[(i, j)])),
                }
            }
            writeln!(w, "{row}")?;
        }
        Ok(())
    }

    /// Read a dataset from CSV produced by [`Dataset::write_csv`] (or any
    /// numeric CSV with a header row).
    pub fn read_csv<R: std::io::Read>(r: R, label: &'static str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for record in reader.records() {
            let record = record?;
            let row: std::result::Result<Vec<f64>, _> =
                record.iter().map(|s| s.trim().parse::<f64>()).collect();
            let row = row.map_err(|e| Error::Data(format!("non-numeric CSV entry: {e}")))?;
            if let Some(first) = rows.first() {
                if row.len() != first.len() {
                    return Err(Error::Data("ragged CSV rows".into()));
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Data("empty dataset".into()));
        }
        let n = rows.len();
        let p = rows[0].len();
        let values = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
        let binary = values.iter().all(|&v| v == 0.0 || v == 1.0);
        Ok(Dataset {
            values,
            kind: if binary { DatasetKind::Binary } else { DatasetKind::Continuous },
            label,
        })
    }
}

// Canonical parameter order, study 1 (q = 23):
//   [loadings 1-5, uniquenesses 1-5, predictor LV variance,
//    loadings 6-10, uniquenesses 6-10, slope beta, error variance psi]
pub const S1_Q: usize = 23;
pub const S1_Q0: usize = 21;
const S1_PHI: usize = 10;
const S1_BETA: usize = 21;
const S1_PSI: usize = 22;

fn s1_loading(j: usize) -> usize {
    // item j in 0..10
    if j < 5 {
        j
    } else {
        11 + (j - 5)
    }
}

fn s1_uniq(j: usize) -> usize {
    if j < 5 {
        5 + j
    } else {
        16 + (j - 5)
    }
}

/// Simple latent regression generator: one predictor LV and one outcome LV,
/// each measured by five continuous indicators.
pub fn dga_study1(u: &RandomComponents, theta: &[f64]) -> Result<Dataset> {
    check_theta("study1", theta, S1_Q)?;
    check_layout("study1", u, 12)?;
    let lv = latents_study1(u, theta)?;
    let n = u.n();
    let mut y = DMatrix::zeros(n, 10);
    for j in 0..10 {
        let lambda = theta[s1_loading(j)];
        let sigma = variance_sqrt("uniqueness", theta[s1_uniq(j)])?;
        let eta_col = usize::from(j >= 5);
        for i in 0..n {
            y[(i, j)] = lambda * lv[(i, eta_col)] + sigma * u.values[(i, 2 + j)];
        }
    }
    Ok(Dataset { values: y, kind: DatasetKind::Continuous, label: "study1" })
}

/// Latent variables implied by the study-1 generator (test hook).
pub fn latents_study1(u: &RandomComponents, theta: &[f64]) -> Result<DMatrix<f64>> {
    check_theta("study1", theta, S1_Q)?;
    let phi_sqrt = variance_sqrt("predictor LV variance", theta[S1_PHI])?;
    let psi_sqrt = variance_sqrt("error variance", theta[S1_PSI])?;
    let beta = theta[S1_BETA];
    let n = u.n();
    let mut lv = DMatrix::zeros(n, 2);
    for i in 0..n {
        let eta1 = phi_sqrt * u.values[(i, 0)];
        lv[(i, 0)] = eta1;
        lv[(i, 1)] = beta * eta1 + psi_sqrt * u.values[(i, 1)];
    }
    Ok(lv)
}

// Canonical parameter order, study 2 (q = 37):
//   [loadings 1-5, uniquenesses 1-5, phi11,
//    loadings 6-10, uniquenesses 6-10, phi22,
//    loadings 11-15, uniquenesses 11-15,
//    phi21, beta1, beta2, beta3, psi]
pub const S2_Q: usize = 37;
pub const S2_Q0: usize = 32;
const S2_PHI11: usize = 10;
const S2_PHI22: usize = 21;
const S2_PHI21: usize = 32;
const S2_BETA: usize = 33; // beta1, beta2, beta3
const S2_PSI: usize = 36;

fn s2_loading(j: usize) -> usize {
    match j {
        0..=4 => j,
        5..=9 => 11 + (j - 5),
        _ => 22 + (j - 10),
    }
}

fn s2_uniq(j: usize) -> usize {
    match j {
        0..=4 => 5 + j,
        5..=9 => 16 + (j - 5),
        _ => 27 + (j - 10),
    }
}

/// Latent moderation generator: correlated predictor and moderator LVs, an
/// outcome LV driven by both plus their product, fifteen continuous
/// indicators in all.
pub fn dga_study2(u: &RandomComponents, theta: &[f64]) -> Result<Dataset> {
    check_theta("study2", theta, S2_Q)?;
    check_layout("study2", u, 18)?;
    let lv = latents_study2(u, theta)?;
    let n = u.n();
    let mut y = DMatrix::zeros(n, 15);
    for j in 0..15 {
        let lambda = theta[s2_loading(j)];
        let sigma = variance_sqrt("uniqueness", theta[s2_uniq(j)])?;
        let eta_col = j / 5;
        for i in 0..n {
            y[(i, j)] = lambda * lv[(i, eta_col)] + sigma * u.values[(i, 3 + j)];
        }
    }
    Ok(Dataset { values: y, kind: DatasetKind::Continuous, label: "study2" })
}

/// Latent variables implied by the study-2 generator (test hook).
pub fn latents_study2(u: &RandomComponents, theta: &[f64]) -> Result<DMatrix<f64>> {
    check_theta("study2", theta, S2_Q)?;
    let phi11 = theta[S2_PHI11];
    let phi22 = theta[S2_PHI22];
    let phi21 = theta[S2_PHI21];
    if phi11 <= 0.0 || phi22 <= 0.0 {
        return Err(Error::Domain(format!("LV variances must be positive ({phi11}, {phi22})")));
    }
    let det = phi11 * phi22 - phi21 * phi21;
    if det < 0.0 {
        return Err(Error::Domain(format!(
            "latent covariance not PSD: phi11*phi22 - phi21^2 = {det:.3e}"
        )));
    }
    // explicit 2x2 lower-triangular Cholesky factor
    let l11 = phi11.sqrt();
    let l21 = phi21 / l11;
    let l22 = (det / phi11).sqrt();
    let psi_sqrt = variance_sqrt("error variance", theta[S2_PSI])?;
    let (b1, b2, b3) = (theta[S2_BETA], theta[S2_BETA + 1], theta[S2_BETA + 2]);
    let n = u.n();
    let mut lv = DMatrix::zeros(n, 3);
    for i in 0..n {
        let eta1 = l11 * u.values[(i, 0)];
        let eta2 = l21 * u.values[(i, 0)] + l22 * u.values[(i, 1)];
        lv[(i, 0)] = eta1;
        lv[(i, 1)] = eta2;
        lv[(i, 2)] = b1 * eta1 + b2 * eta2 + b3 * eta1 * eta2 + psi_sqrt * u.values[(i, 2)];
    }
    Ok(lv)
}

// Canonical parameter order, study 3 (q = 90):
//   per LV block l = 1..5: [intercepts of its 8 items, slopes of its 8 items],
//   then [phi21, phi31, phi32, phi41, phi42, phi43, beta1..beta4].
pub const S3_Q: usize = 90;
pub const S3_Q0: usize = 80;
pub const S3_CORR: usize = 80; // six lower-triangle correlations, row-major
pub const S3_BETA: usize = 86; // four regression slopes

pub fn s3_intercept(j: usize) -> usize {
    // item j in 0..40; block l = j / 8
    (j / 8) * 16 + (j % 8)
}

pub fn s3_slope(j: usize) -> usize {
    (j / 8) * 16 + 8 + (j % 8)
}

/// Predictor correlation matrix from the six canonical coordinates.
pub fn s3_corr_matrix(theta: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::identity(4, 4);
    let mut k = S3_CORR;
    for i in 1..4 {
        for j in 0..i {
            m[(i, j)] = theta[k];
            m[(j, i)] = theta[k];
            k += 1;
        }
    }
    m
}

/// Error variance implied by standardizing the study-3 outcome LV.
pub fn s3_implied_psi(theta: &[f64]) -> f64 {
    let phi = s3_corr_matrix(theta);
    let beta = nalgebra::DVector::from_column_slice(&theta[S3_BETA..S3_BETA + 4]);
    1.0 - (&phi * &beta).dot(&beta)
}

/// Multiple latent regression generator with binary items: four correlated
/// predictor LVs and one outcome LV, each measured by eight 2PL items.
pub fn dga_study3(u: &RandomComponents, theta: &[f64]) -> Result<Dataset> {
    check_theta("study3", theta, S3_Q)?;
    check_layout("study3", u, 45)?;
    let lv = latents_study3(u, theta)?;
    let n = u.n();
    let mut y = DMatrix::zeros(n, 40);
    for j in 0..40 {
        let alpha = theta[s3_intercept(j)];
        let gamma = theta[s3_slope(j)];
        let block = j / 8;
        for i in 0..n {
            let p = u.values[(i, 5 + j)];
            let logit = (p / (1.0 - p)).ln();
            y[(i, j)] = if logit <= alpha + gamma * lv[(i, block)] { 1.0 } else { 0.0 };
        }
    }
    Ok(Dataset { values: y, kind: DatasetKind::Binary, label: "study3" })
}

/// Latent variables implied by the study-3 generator (test hook).
pub fn latents_study3(u: &RandomComponents, theta: &[f64]) -> Result<DMatrix<f64>> {
    check_theta("study3", theta, S3_Q)?;
    let phi = s3_corr_matrix(theta);
    let chol = phi
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Domain("predictor correlation matrix is not positive definite".into()))?;
    let psi = s3_implied_psi(theta);
    if psi < 0.0 {
        return Err(Error::Domain(format!(
            "slopes and correlations imply negative error variance ({psi:.3e})"
        )));
    }
    let psi_sqrt = psi.sqrt();
    let l = chol.l();
    let beta = &theta[S3_BETA..S3_BETA + 4];
    let n = u.n();
    let mut lv = DMatrix::zeros(n, 5);
    for i in 0..n {
        for r in 0..4 {
            let mut acc = 0.0;
            for c in 0..=r {
                acc += l[(r, c)] * u.values[(i, c)];
            }
            lv[(i, r)] = acc;
        }
        let structural: f64 = (0..4).map(|r| beta[r] * lv[(i, r)]).sum();
        lv[(i, 4)] = structural + psi_sqrt * u.values[(i, 4)];
    }
    Ok(lv)
}

fn check_theta(label: &str, theta: &[f64], q: usize) -> Result<()> {
    if theta.len() != q {
        return Err(Error::Structural(format!(
            "{label} expects {q} parameters, got {}",
            theta.len()
        )));
    }
    Ok(())
}

fn check_layout(label: &str, u: &RandomComponents, width: usize) -> Result<()> {
    if u.layout.width() != width {
        return Err(Error::Structural(format!(
            "{label} expects a {width}-column component layout, got {}",
            u.layout.width()
        )));
    }
    Ok(())
}

fn variance_sqrt(what: &str, v: f64) -> Result<f64> {
    if v < 0.0 {
        Err(Error::Domain(format!("negative {what}: {v}")))
    } else {
        Ok(v.sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::study::{Study, truth};

    fn col_mean_var(m: &DMatrix<f64>, j: usize) -> (f64, f64) {
        let n = m.nrows();
        let mean = m.column(j).sum() / n as f64;
        let var = m.column(j).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (mean, var)
    }

    #[test]
    fn draws_are_bit_identical_for_same_key() {
        let layout = layout_study1();
        let a = draw_components(100, &layout, 7, 11);
        let b = draw_components(100, &layout, 7, 11);
        assert_eq!(a.values, b.values);
        let c = draw_components(100, &layout, 7, 12);
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn uniform_columns_strictly_inside_unit_interval() {
        let layout = layout_study3();
        let u = draw_components(2000, &layout, 3, 4);
        for j in 5..45 {
            for i in 0..2000 {
                let v = u.values[(i, j)];
                assert!(v > 0.0 && v < 1.0);
            }
        }
    }

    #[test]
    fn study1_zero_components_give_zero_data() {
        let layout = layout_study1();
        let mut u = draw_components(5, &layout, 1, 1);
        u.values.fill(0.0);
        let theta = truth(Study::One);
        let y = dga_study1(&u, &theta.values).unwrap();
        assert!(y.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn study1_rejects_negative_variance() {
        let layout = layout_study1();
        let u = draw_components(5, &layout, 1, 1);
        let mut theta = truth(Study::One).values;
        theta[22] = -0.1; // psi
        assert!(matches!(dga_study1(&u, &theta), Err(Error::Domain(_))));
    }

    #[test]
    fn study1_manifest_variances_match_moment_identities() {
        // Var(Y_j) = lambda_j^2 * Var(eta) + sigma_j^2, with Var(eta) = 1 for
        // both LVs under the shipped truth.
        let layout = layout_study1();
        let u = draw_components(100_000, &layout, 42, 1);
        let theta = truth(Study::One);
        let y = dga_study1(&u, &theta.values).unwrap();
        for j in 0..10 {
            let sigma2 = theta.values[s1_uniq(j)];
            let expect = 1.0 + sigma2;
            let (_, var) = col_mean_var(&y.values, j);
            assert!(
                (var / expect - 1.0).abs() < 0.02,
                "item {j}: var {var:.4} vs {expect:.4}"
            );
        }
    }

    #[test]
    fn study2_outcome_variance_matches_closed_form() {
        // Var(eta3) = b1^2 + b2^2 + 2 b1 b2 rho + b3^2 (1 + rho^2) + psi
        //           = .32 + .096 + .04 * 1.09 + .54 = .9996 at the truth.
        let layout = layout_study2();
        let u = draw_components(100_000, &layout, 9, 2);
        let theta = truth(Study::Two);
        let lv = latents_study2(&u, &theta.values).unwrap();
        let (_, var) = col_mean_var(&lv, 2);
        assert!((var / 0.9996 - 1.0).abs() < 0.01, "Var(eta3) = {var:.4}");
    }

    #[test]
    fn study2_zero_components_give_zero_data() {
        let layout = layout_study2();
        let mut u = draw_components(5, &layout, 1, 1);
        u.values.fill(0.0);
        let y = dga_study2(&u, &truth(Study::Two).values).unwrap();
        assert!(y.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn study2_rejects_non_psd_latent_covariance() {
        let layout = layout_study2();
        let u = draw_components(5, &layout, 1, 1);
        let mut theta = truth(Study::Two).values;
        theta[S2_PHI21] = 1.5;
        assert!(matches!(dga_study2(&u, &theta), Err(Error::Domain(_))));
    }

    #[test]
    fn study3_midpoint_uniform_thresholds_at_zero() {
        // logit(1/2) = 0, so the item fires exactly when alpha + gamma*eta >= 0.
        let layout = layout_study3();
        let mut u = draw_components(50, &layout, 5, 5);
        for j in 5..45 {
            for i in 0..50 {
                u.values[(i, j)] = 0.5;
            }
        }
        let theta = truth(Study::Three);
        let y = dga_study3(&u, &theta.values).unwrap();
        let lv = latents_study3(&u, &theta.values).unwrap();
        for j in 0..40 {
            let alpha = theta.values[s3_intercept(j)];
            let gamma = theta.values[s3_slope(j)];
            for i in 0..50 {
                let expected = if 0.0 <= alpha + gamma * lv[(i, j / 8)] { 1.0 } else { 0.0 };
                assert_eq!(y.values[(i, j)], expected);
            }
        }
    }

    #[test]
    fn study3_zero_slopes_give_logistic_marginals() {
        let layout = layout_study3();
        let u = draw_components(100_000, &layout, 31, 7);
        let mut theta = truth(Study::Three).values;
        for j in 0..8 {
            theta[s3_slope(j)] = 0.0; // first LV block
        }
        let y = dga_study3(&u, &theta).unwrap();
        for j in 0..8 {
            let alpha = theta[s3_intercept(j)];
            let expect = 1.0 / (1.0 + (-alpha as f64).exp());
            let mean = y.values.column(j).sum() / 100_000.0;
            assert!((mean - expect).abs() < 0.01, "item {j}: {mean:.4} vs {expect:.4}");
        }
    }

    #[test]
    fn study3_truth_implies_half_unit_error_variance() {
        let theta = truth(Study::Three);
        assert!((s3_implied_psi(&theta.values) - 0.49).abs() < 1e-12);
    }

    #[test]
    fn study3_outcome_variance_is_unit_at_truth() {
        let layout = layout_study3();
        let u = draw_components(100_000, &layout, 17, 3);
        let theta = truth(Study::Three);
        let lv = latents_study3(&u, &theta.values).unwrap();
        let (_, var) = col_mean_var(&lv, 4);
        assert!((var - 1.0).abs() < 0.01, "Var(eta5) = {var:.4}");
    }

    #[test]
    fn generators_are_pure_functions_of_components() {
        let layout = layout_study2();
        let u = draw_components(200, &layout, 12, 8);
        let theta = truth(Study::Two);
        let y1 = dga_study2(&u, &theta.values).unwrap();
        let y2 = dga_study2(&u, &theta.values).unwrap();
        assert_eq!(y1.values, y2.values);
    }

    #[test]
    fn csv_round_trip_preserves_values() {
        let layout = layout_study1();
        let u = draw_components(20, &layout, 1, 9);
        let y = dga_study1(&u, &truth(Study::One).values).unwrap();
        let mut buf = Vec::new();
        y.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(buf.as_slice(), "study1").unwrap();
        assert_eq!(back.p(), 10);
        for i in 0..20 {
            for j in 0..10 {
                assert!((back.values[(i, j)] - y.values[(i, j)]).abs() < 1e-12);
            }
        }
    }
}
