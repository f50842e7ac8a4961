//! The interface the bias-correction and covariance machinery works
//! against: a data-generating algorithm plus the two estimators it drives.

use crate::dga::{Dataset, RandomComponentLayout, RandomComponents};
use crate::error::Result;
use crate::stage2::{self, StructuralSpec};
use crate::study::{ScoreChoice, Study};

/// A generator `g(U, theta)` paired with the piecewise nuisance estimator
/// and the initial focal estimator. The canonical parameter order is
/// nuisance first, focal last.
pub trait TwoStageModel: Sync {
    fn q(&self) -> usize;
    fn q1(&self) -> usize;
    fn q0(&self) -> usize {
        self.q() - self.q1()
    }
    /// Sample size of each generated dataset.
    fn n(&self) -> usize;
    fn layout(&self) -> &RandomComponentLayout;
    fn generate(&self, u: &RandomComponents, theta: &[f64]) -> Result<Dataset>;
    /// Focal estimate with the nuisance values held fixed (no refit).
    fn initial_estimate(&self, y: &Dataset, nu: &[f64]) -> Result<Vec<f64>>;
    /// Full first-stage estimate of the nuisance parameters.
    fn nuisance_estimate(&self, y: &Dataset) -> Result<Vec<f64>>;
}

/// One of the built-in study models at a given sample size and score choice.
pub struct StudyModel {
    pub study: Study,
    pub spec: StructuralSpec,
    sample_size: usize,
    layout: RandomComponentLayout,
}

impl StudyModel {
    pub fn new(study: Study, score: ScoreChoice, n: usize) -> Result<Self> {
        Ok(Self {
            study,
            spec: StructuralSpec::for_study(study, score)?,
            sample_size: n,
            layout: study.layout(),
        })
    }
}

impl TwoStageModel for StudyModel {
    fn q(&self) -> usize {
        self.study.q()
    }

    fn q1(&self) -> usize {
        self.study.q1()
    }

    fn n(&self) -> usize {
        self.sample_size
    }

    fn layout(&self) -> &RandomComponentLayout {
        &self.layout
    }

    fn generate(&self, u: &RandomComponents, theta: &[f64]) -> Result<Dataset> {
        self.study.generate(u, theta)
    }

    fn initial_estimate(&self, y: &Dataset, nu: &[f64]) -> Result<Vec<f64>> {
        stage2::initial_estimator(y, nu, &self.spec).map(|e| e.phi_hat)
    }

    fn nuisance_estimate(&self, y: &Dataset) -> Result<Vec<f64>> {
        stage2::nuisance_estimator(y, self.study)
    }
}
