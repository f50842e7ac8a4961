//! Parameter vectors, nuisance/focal partitions, and the feasibility
//! projections applied after every stochastic-approximation update.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A named real parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl ParameterVector {
    pub fn new(names: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if names.len() != values.len() {
            return Err(Error::Structural(format!(
                "{} names for {} values",
                names.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Structural("non-finite parameter value".into()));
        }
        for (i, a) in names.iter().enumerate() {
            if names[..i].contains(a) {
                return Err(Error::Structural(format!("duplicate parameter name {a:?}")));
            }
        }
        Ok(Self { names, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Index sets splitting a parameter vector into nuisance and focal parts,
/// with per-latent-variable measurement blocks over the nuisance indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterPartition {
    pub nuisance_idx: Vec<usize>,
    pub focal_idx: Vec<usize>,
    pub measurement_blocks: Vec<Vec<usize>>,
}

impl ParameterPartition {
    /// Contiguous partition: indices `0..q0` nuisance, `q0..q0+q1` focal.
    pub fn contiguous(q0: usize, q1: usize, measurement_blocks: Vec<Vec<usize>>) -> Self {
        Self {
            nuisance_idx: (0..q0).collect(),
            focal_idx: (q0..q0 + q1).collect(),
            measurement_blocks,
        }
    }

    pub fn q(&self) -> usize {
        self.nuisance_idx.len() + self.focal_idx.len()
    }

    /// Check disjointness, coverage of `0..q`, and that the measurement
    /// blocks partition the nuisance index set.
    pub fn validate(&self, q: usize) -> Result<()> {
        if self.q() != q {
            return Err(Error::Structural(format!(
                "partition covers {} indices, parameter vector has {q}",
                self.q()
            )));
        }
        let mut seen = vec![false; q];
        for &i in self.nuisance_idx.iter().chain(self.focal_idx.iter()) {
            if i >= q {
                return Err(Error::Structural(format!("index {i} out of range for q={q}")));
            }
            if seen[i] {
                return Err(Error::Structural(format!("index {i} appears twice in partition")));
            }
            seen[i] = true;
        }
        let mut in_blocks = vec![false; q];
        for block in &self.measurement_blocks {
            for &i in block {
                if !self.nuisance_idx.contains(&i) {
                    return Err(Error::Structural(format!(
                        "measurement block index {i} is not a nuisance index"
                    )));
                }
                if in_blocks[i] {
                    return Err(Error::Structural(format!(
                        "index {i} appears in two measurement blocks"
                    )));
                }
                in_blocks[i] = true;
            }
        }
        if self.nuisance_idx.iter().any(|&i| !in_blocks[i]) && !self.measurement_blocks.is_empty() {
            return Err(Error::Structural(
                "measurement blocks do not cover the nuisance indices".into(),
            ));
        }
        Ok(())
    }
}

/// Split a parameter vector into its nuisance and focal sub-vectors.
pub fn split(theta: &ParameterVector, part: &ParameterPartition) -> Result<(Vec<f64>, Vec<f64>)> {
    part.validate(theta.len())?;
    let nu = part.nuisance_idx.iter().map(|&i| theta.values[i]).collect();
    let phi = part.focal_idx.iter().map(|&i| theta.values[i]).collect();
    Ok((nu, phi))
}

/// Reassemble a full vector from nuisance and focal parts (inverse of [`split`]).
pub fn recombine(nu: &[f64], phi: &[f64], part: &ParameterPartition) -> Result<Vec<f64>> {
    let q = part.q();
    if nu.len() != part.nuisance_idx.len() || phi.len() != part.focal_idx.len() {
        return Err(Error::Structural("recombine: length mismatch with partition".into()));
    }
    let mut out = vec![f64::NAN; q];
    for (v, &i) in nu.iter().zip(&part.nuisance_idx) {
        out[i] = *v;
    }
    for (v, &i) in phi.iter().zip(&part.focal_idx) {
        out[i] = *v;
    }
    Ok(out)
}

/// Lower/upper clamp bounds for one coordinate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BoxBound {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

/// A set of focal coordinates forming the row-major lower triangle of a
/// `dim x dim` correlation matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrBlock {
    pub indices: Vec<usize>,
    pub dim: usize,
}

/// Feasible region for the focal vector: per-coordinate boxes, optionally a
/// correlation block kept positive definite, and optionally a slope block
/// tied to that correlation matrix through a quadratic variance constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilitySpec {
    pub box_bounds: Vec<BoxBound>,
    pub corr_block: Option<CorrBlock>,
    pub slope_block: Option<Vec<usize>>,
    pub floor: f64,
}

pub const DEFAULT_FLOOR: f64 = 1e-6;

impl FeasibilitySpec {
    pub fn unbounded(q1: usize) -> Self {
        Self {
            box_bounds: vec![BoxBound::default(); q1],
            corr_block: None,
            slope_block: None,
            floor: DEFAULT_FLOOR,
        }
    }

    pub fn with_lower(mut self, idx: usize, lower: f64) -> Self {
        self.box_bounds[idx].lower = Some(lower);
        self
    }

    pub fn with_abs_bound(mut self, idx: usize, bound: f64) -> Self {
        self.box_bounds[idx].lower = Some(-bound);
        self.box_bounds[idx].upper = Some(bound);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.floor > 0.0) {
            return Err(Error::Structural("feasibility floor must be positive".into()));
        }
        if self.slope_block.is_some() && self.corr_block.is_none() {
            return Err(Error::Structural(
                "slope constraint requires a correlation block".into(),
            ));
        }
        for (i, b) in self.box_bounds.iter().enumerate() {
            if let (Some(lo), Some(hi)) = (b.lower, b.upper) {
                if lo > hi {
                    return Err(Error::Structural(format!(
                        "bounds for coordinate {i} are inverted ({lo} > {hi})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Project a focal vector onto the feasible set: box clamps first, then
    /// the correlation block, then the slope constraint. Returns the
    /// projected vector and whether anything moved.
    pub fn project(&self, phi: &[f64]) -> Result<(Vec<f64>, bool)> {
        let mut out = phi.to_vec();
        let before = out.clone();
        project_box_in_place(&mut out, &self.box_bounds);
        let mut corr = None;
        if let Some(cb) = &self.corr_block {
            let mat = assemble_corr(&out, cb)?;
            let proj = project_corr_psd(&mat, self.floor);
            write_corr(&mut out, cb, &proj);
            corr = Some(proj);
        }
        if let Some(slopes) = &self.slope_block {
            let phi_mat = corr.as_ref().expect("validated: slope block requires corr block");
            let beta: Vec<f64> = slopes.iter().map(|&i| out[i]).collect();
            let proj = project_slopes_qp(&beta, phi_mat, self.floor)?;
            for (v, &i) in proj.iter().zip(slopes) {
                out[i] = *v;
            }
        }
        let moved = out
            .iter()
            .zip(&before)
            .any(|(a, b)| (a - b).abs() > 1e-14 * (1.0 + b.abs()));
        Ok((out, moved))
    }
}

/// Clamp each coordinate into its interval; unbounded coordinates pass through.
pub fn project_box(phi: &[f64], bounds: &[BoxBound]) -> Vec<f64> {
    let mut out = phi.to_vec();
    project_box_in_place(&mut out, bounds);
    out
}

fn project_box_in_place(phi: &mut [f64], bounds: &[BoxBound]) {
    for (v, b) in phi.iter_mut().zip(bounds) {
        if let Some(lo) = b.lower {
            if *v < lo {
                *v = lo;
            }
        }
        if let Some(hi) = b.upper {
            if *v > hi {
                *v = hi;
            }
        }
    }
}

fn assemble_corr(phi: &[f64], cb: &CorrBlock) -> Result<DMatrix<f64>> {
    let d = cb.dim;
    if cb.indices.len() != d * (d - 1) / 2 {
        return Err(Error::Structural(format!(
            "correlation block of dim {d} needs {} coordinates, got {}",
            d * (d - 1) / 2,
            cb.indices.len()
        )));
    }
    let mut m = DMatrix::identity(d, d);
    let mut k = 0;
    for i in 1..d {
        for j in 0..i {
            let v = phi[cb.indices[k]];
            m[(i, j)] = v;
            m[(j, i)] = v;
            k += 1;
        }
    }
    Ok(m)
}

fn write_corr(phi: &mut [f64], cb: &CorrBlock, m: &DMatrix<f64>) {
    let mut k = 0;
    for i in 1..cb.dim {
        for j in 0..i {
            phi[cb.indices[k]] = m[(i, j)];
            k += 1;
        }
    }
}

/// Nearest-in-spirit correlation matrix: eigenvalues truncated at `floor`,
/// then the result is restandardized to unit diagonal. Feasible inputs are
/// returned unchanged, which also makes the operation idempotent.
pub fn project_corr_psd(mat: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let d = mat.nrows();
    let mut current = mat.clone();
    // A couple of truncate-and-restandardize passes are occasionally needed
    // because restandardization can push the smallest eigenvalue slightly
    // back below the floor.
    for _ in 0..100 {
        if is_feasible_corr(&current, floor) {
            return current;
        }
        let eig = current.clone().symmetric_eigen();
        let vals = eig.eigenvalues.map(|l| l.max(floor));
        let mut rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
        // restandardize to unit diagonal
        let scale: DVector<f64> = rebuilt.diagonal().map(|v| 1.0 / v.sqrt());
        for i in 0..d {
            for j in 0..d {
                rebuilt[(i, j)] *= scale[i] * scale[j];
            }
        }
        for i in 0..d {
            rebuilt[(i, i)] = 1.0;
        }
        // enforce exact symmetry against eigensolver roundoff
        for i in 0..d {
            for j in 0..i {
                let avg = 0.5 * (rebuilt[(i, j)] + rebuilt[(j, i)]);
                rebuilt[(i, j)] = avg;
                rebuilt[(j, i)] = avg;
            }
        }
        current = rebuilt;
    }
    current
}

fn is_feasible_corr(mat: &DMatrix<f64>, floor: f64) -> bool {
    let d = mat.nrows();
    for i in 0..d {
        if (mat[(i, i)] - 1.0).abs() > 1e-12 {
            return false;
        }
    }
    let min_eig = mat
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    min_eig >= floor - 1e-12
}

/// Euclidean projection of a slope vector onto `{b : 1 - b' Phi b >= floor}`.
///
/// The Lagrangian stationarity condition gives `b(l) = (I + l Phi)^{-1} b`
/// with a single multiplier `l >= 0` found by bisection on the active
/// constraint; feasible inputs are returned unchanged.
pub fn project_slopes_qp(beta: &[f64], phi_mat: &DMatrix<f64>, floor: f64) -> Result<Vec<f64>> {
    let d = beta.len();
    if phi_mat.nrows() != d || phi_mat.ncols() != d {
        return Err(Error::Structural(format!(
            "slope vector of length {d} against {}x{} matrix",
            phi_mat.nrows(),
            phi_mat.ncols()
        )));
    }
    if phi_mat.clone().cholesky().is_none() {
        return Err(Error::Numerical(
            "slope projection requires a positive definite correlation matrix".into(),
        ));
    }
    let b = DVector::from_column_slice(beta);
    let quad = |v: &DVector<f64>| (phi_mat * v).dot(v);
    if 1.0 - quad(&b) >= floor - 1e-12 {
        return Ok(beta.to_vec());
    }
    let shrunk = |lambda: f64| -> Result<DVector<f64>> {
        let sys = DMatrix::identity(d, d) + phi_mat * lambda;
        sys.lu()
            .solve(&b)
            .ok_or_else(|| Error::Numerical("singular system in slope projection".into()))
    };
    // residual g(l) = (1 - floor) - b(l)' Phi b(l), increasing in l
    let g = |lambda: f64| -> Result<f64> { Ok((1.0 - floor) - quad(&shrunk(lambda)?)) };
    let mut hi = 1.0;
    let mut grow = 0;
    while g(hi)? < 0.0 {
        hi *= 2.0;
        grow += 1;
        if grow > 200 {
            return Err(Error::Numerical(format!(
                "slope projection failed to bracket the multiplier (beta norm {:.3e}, residual {:.3e})",
                b.norm(),
                g(hi)?
            )));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid)?;
        if gm >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if gm.abs() <= 1e-13 || (hi - lo) <= 1e-15 * (1.0 + hi) {
            break;
        }
    }
    // return the feasible endpoint so the constraint holds to rounding
    Ok(shrunk(hi)?.iter().cloned().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn equicorrelation(d: usize, rho: f64) -> DMatrix<f64> {
        DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { rho })
    }

    #[test]
    fn split_selects_by_index() {
        let theta = ParameterVector::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![1.0, 2.0, 3.0],
        )
        .unwrap();
        let part = ParameterPartition::contiguous(2, 1, vec![vec![0, 1]]);
        let (nu, phi) = split(&theta, &part).unwrap();
        assert_eq!(nu, vec![1.0, 2.0]);
        assert_eq!(phi, vec![3.0]);
        assert_eq!(recombine(&nu, &phi, &part).unwrap(), theta.values);
    }

    #[test]
    fn split_handles_empty_nuisance() {
        let theta = ParameterVector::new(vec!["p".into()], vec![5.0]).unwrap();
        let part = ParameterPartition::contiguous(0, 1, vec![]);
        let (nu, phi) = split(&theta, &part).unwrap();
        assert!(nu.is_empty());
        assert_eq!(phi, vec![5.0]);
    }

    #[test]
    fn split_rejects_out_of_range_index() {
        let theta = ParameterVector::new(vec!["a".into()], vec![1.0]).unwrap();
        let part = ParameterPartition {
            nuisance_idx: vec![],
            focal_idx: vec![3],
            measurement_blocks: vec![],
        };
        assert!(matches!(split(&theta, &part), Err(Error::Structural(_))));
    }

    #[test]
    fn parameter_vector_rejects_duplicates_and_nonfinite() {
        assert!(ParameterVector::new(vec!["a".into(), "a".into()], vec![1.0, 2.0]).is_err());
        assert!(ParameterVector::new(vec!["a".into()], vec![f64::NAN]).is_err());
    }

    #[test]
    fn box_projection_clamps_and_fixes_interior() {
        let bounds = vec![BoxBound { lower: Some(1e-6), upper: None }];
        assert_eq!(project_box(&[0.5], &bounds), vec![0.5]);
        assert_eq!(project_box(&[-0.2], &bounds), vec![1e-6]);
        let corr_bound = vec![BoxBound { lower: Some(-(1.0 - 1e-6)), upper: Some(1.0 - 1e-6) }];
        assert_eq!(project_box(&[1.3], &corr_bound), vec![1.0 - 1e-6]);
    }

    #[test]
    fn corr_projection_keeps_feasible_inputs() {
        let id = DMatrix::<f64>::identity(4, 4);
        assert_eq!(project_corr_psd(&id, 1e-6), id);

        // Equicorrelation at .3 has eigenvalues {1.9, .7, .7, .7}, all
        // comfortably above the floor, so it must come back untouched.
        let eq = equicorrelation(4, 0.3);
        let eigs = eq.clone().symmetric_eigen().eigenvalues;
        let mut sorted: Vec<f64> = eigs.iter().cloned().collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((sorted[0] - 0.7).abs() < 1e-12);
        assert!((sorted[3] - 1.9).abs() < 1e-12);
        assert_eq!(project_corr_psd(&eq, 1e-6), eq);
    }

    #[test]
    fn corr_projection_truncates_infeasible_two_by_two() {
        // Off-diagonal 1.2 gives eigenvalues {2.2, -0.2}. Clamping drives
        // the small eigenvalue of a 2x2 correlation matrix to the floor,
        // and min eigenvalue = 1 - off-diagonal, so the off-diagonal lands
        // at 1 - floor (to second order in the floor).
        let floor = 1e-6;
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.2, 1.2, 1.0]);
        let p = project_corr_psd(&m, floor);
        let gap = 1.0 - p[(0, 1)];
        assert!(
            gap >= floor - 1e-12 && gap <= 1.01 * floor,
            "off-diagonal {} leaves eigen-gap {gap:.3e}",
            p[(0, 1)]
        );
        assert!((p[(0, 0)] - 1.0).abs() < 1e-14);
        let min_eig = p
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        assert!(min_eig >= floor - 1e-12);
        // idempotent
        let p2 = project_corr_psd(&p, floor);
        assert_eq!(p, p2);
    }

    #[test]
    fn slope_projection_identity_on_feasible_point() {
        // beta' Phi beta = .30 + .6 * .35 = .51 for these values, well below
        // the bound, so the vector passes through exactly.
        let beta = vec![0.1, 0.2, 0.3, 0.4];
        let phi_mat = equicorrelation(4, 0.3);
        let b = DVector::from_column_slice(&beta);
        assert!(((&phi_mat * &b).dot(&b) - 0.51).abs() < 1e-12);
        assert_eq!(project_slopes_qp(&beta, &phi_mat, 1e-6).unwrap(), beta);
    }

    #[test]
    fn slope_projection_scales_onto_sphere_for_identity_corr() {
        let floor = 1e-6;
        let beta = vec![2.0, 0.0, 0.0, 0.0];
        let id = DMatrix::<f64>::identity(4, 4);
        let p = project_slopes_qp(&beta, &id, floor).unwrap();
        assert!((p[0] - (1.0 - floor).sqrt()).abs() < 1e-9, "got {}", p[0]);
        assert!(p[1..].iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn slope_projection_fixes_origin() {
        let p = project_slopes_qp(&[0.0, 0.0], &DMatrix::identity(2, 2), 1e-6).unwrap();
        assert_eq!(p, vec![0.0, 0.0]);
    }

    #[test]
    fn slope_projection_output_is_feasible_and_idempotent() {
        let floor = 1e-6;
        let phi_mat = equicorrelation(4, 0.3);
        let beta = vec![0.9, 0.8, -0.7, 1.1];
        let p = project_slopes_qp(&beta, &phi_mat, floor).unwrap();
        let v = DVector::from_column_slice(&p);
        let quad = (&phi_mat * &v).dot(&v);
        assert!(1.0 - quad >= floor - 1e-12, "constraint {}", 1.0 - quad);
        let p2 = project_slopes_qp(&p, &phi_mat, floor).unwrap();
        for (a, b) in p.iter().zip(&p2) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn composed_projection_reports_movement() {
        let spec = FeasibilitySpec::unbounded(1).with_lower(0, 1e-6);
        let (p, moved) = spec.project(&[0.5]).unwrap();
        assert_eq!(p, vec![0.5]);
        assert!(!moved);
        let (p, moved) = spec.project(&[-3.0]).unwrap();
        assert_eq!(p, vec![1e-6]);
        assert!(moved);
    }
}
