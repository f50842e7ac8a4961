//! The three built-in study models: canonical parameter order, true values,
//! nuisance/focal partitions, and feasible regions.
//!
//! Study 1: simple latent regression, two LVs, ten continuous indicators.
//! Study 2: latent moderation, three LVs, fifteen continuous indicators.
//! Study 3: multiple latent regression, five LVs, forty binary items.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dga::{
    self, Dataset, RandomComponentLayout, RandomComponents, S1_Q0, S2_Q0, S3_Q0,
};
use crate::error::{Error, Result};
use crate::params::{CorrBlock, FeasibilitySpec, ParameterPartition, ParameterVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Study {
    One,
    Two,
    Three,
}

/// Which factor score feeds the second stage. The two-letter codes name the
/// outcome-side and predictor-side scores: M mean, B Bartlett, R regression.
/// EAP is the posterior-mean score for binary items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoreChoice {
    MM,
    BB,
    RR,
    BR,
    EAP,
}

impl ScoreChoice {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "MM" => Ok(Self::MM),
            "BB" => Ok(Self::BB),
            "RR" => Ok(Self::RR),
            "BR" => Ok(Self::BR),
            "EAP" => Ok(Self::EAP),
            other => Err(Error::Usage(format!(
                "unknown score choice {other:?} (expected MM, BB, RR, BR, or EAP)"
            ))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::MM => "MM",
            Self::BB => "BB",
            Self::RR => "RR",
            Self::BR => "BR",
            Self::EAP => "EAP",
        }
    }
}

impl Study {
    pub fn from_index(i: u32) -> Result<Self> {
        match i {
            1 => Ok(Self::One),
            2 => Ok(Self::Two),
            3 => Ok(Self::Three),
            other => Err(Error::Usage(format!("study must be 1, 2, or 3 (got {other})"))),
        }
    }

    pub fn index(&self) -> u32 {
        match self {
            Self::One => 1,
            Self::Two => 2,
            Self::Three => 3,
        }
    }

    /// Number of manifest variables.
    pub fn p(&self) -> usize {
        match self {
            Self::One => 10,
            Self::Two => 15,
            Self::Three => 40,
        }
    }

    pub fn q(&self) -> usize {
        match self {
            Self::One => dga::S1_Q,
            Self::Two => dga::S2_Q,
            Self::Three => dga::S3_Q,
        }
    }

    pub fn q0(&self) -> usize {
        match self {
            Self::One => S1_Q0,
            Self::Two => S2_Q0,
            Self::Three => S3_Q0,
        }
    }

    pub fn q1(&self) -> usize {
        self.q() - self.q0()
    }

    pub fn layout(&self) -> RandomComponentLayout {
        match self {
            Self::One => dga::layout_study1(),
            Self::Two => dga::layout_study2(),
            Self::Three => dga::layout_study3(),
        }
    }

    /// Indicator column ranges, one per latent variable.
    pub fn indicator_blocks(&self) -> Vec<std::ops::Range<usize>> {
        match self {
            Self::One => vec![0..5, 5..10],
            Self::Two => vec![0..5, 5..10, 10..15],
            Self::Three => (0..5).map(|l| l * 8..(l + 1) * 8).collect(),
        }
    }

    /// Nuisance/focal index partition with per-LV measurement blocks.
    pub fn partition(&self) -> ParameterPartition {
        let blocks: Vec<Vec<usize>> = match self {
            Self::One => vec![(0..11).collect(), (11..21).collect()],
            Self::Two => vec![(0..11).collect(), (11..22).collect(), (22..32).collect()],
            Self::Three => (0..5).map(|l| (l * 16..(l + 1) * 16).collect()).collect(),
        };
        ParameterPartition::contiguous(self.q0(), self.q1(), blocks)
    }

    /// Feasible region for the focal vector, enforced after every
    /// stochastic-approximation update.
    pub fn feasibility(&self) -> FeasibilitySpec {
        match self {
            // focal = (beta, psi)
            Self::One => FeasibilitySpec::unbounded(2).with_lower(1, 1e-6),
            // focal = (phi21, beta1, beta2, beta3, psi)
            Self::Two => FeasibilitySpec::unbounded(5)
                .with_abs_bound(0, 1.0 - 1e-6)
                .with_lower(4, 1e-6),
            // focal = (six predictor correlations, four slopes)
            Self::Three => {
                let mut spec = FeasibilitySpec::unbounded(10);
                spec.corr_block = Some(CorrBlock { indices: (0..6).collect(), dim: 4 });
                spec.slope_block = Some(vec![6, 7, 8, 9]);
                spec
            }
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.q());
        match self {
            Self::One => {
                push_linear_block(&mut names, 1..=5, Some("phi"));
                push_linear_block(&mut names, 6..=10, None);
                names.push("beta".into());
                names.push("psi".into());
            }
            Self::Two => {
                push_linear_block(&mut names, 1..=5, Some("phi11"));
                push_linear_block(&mut names, 6..=10, Some("phi22"));
                push_linear_block(&mut names, 11..=15, None);
                names.push("phi21".into());
                for k in 1..=3 {
                    names.push(format!("beta{k}"));
                }
                names.push("psi".into());
            }
            Self::Three => {
                for block in 0..5 {
                    for j in 1..=8 {
                        names.push(format!("alpha{}", block * 8 + j));
                    }
                    for j in 1..=8 {
                        names.push(format!("gamma{}", block * 8 + j));
                    }
                }
                for (i, j) in [(2, 1), (3, 1), (3, 2), (4, 1), (4, 2), (4, 3)] {
                    names.push(format!("phi{i}{j}"));
                }
                for k in 1..=4 {
                    names.push(format!("beta{k}"));
                }
            }
        }
        names
    }

    pub fn focal_names(&self) -> Vec<String> {
        self.param_names().split_off(self.q0())
    }

    pub fn generate(&self, u: &RandomComponents, theta: &[f64]) -> Result<Dataset> {
        match self {
            Self::One => dga::dga_study1(u, theta),
            Self::Two => dga::dga_study2(u, theta),
            Self::Three => dga::dga_study3(u, theta),
        }
    }

    /// Latent-variable matrix implied by the generator (test hook).
    pub fn latents(&self, u: &RandomComponents, theta: &[f64]) -> Result<DMatrix<f64>> {
        match self {
            Self::One => dga::latents_study1(u, theta),
            Self::Two => dga::latents_study2(u, theta),
            Self::Three => dga::latents_study3(u, theta),
        }
    }

    /// Score choices that make sense for this study's measurement models.
    pub fn valid_scores(&self) -> &'static [ScoreChoice] {
        match self {
            Self::One => &[ScoreChoice::MM, ScoreChoice::BB, ScoreChoice::RR, ScoreChoice::BR],
            Self::Two => &[ScoreChoice::BB],
            Self::Three => &[ScoreChoice::EAP],
        }
    }
}

fn push_linear_block(
    names: &mut Vec<String>,
    items: std::ops::RangeInclusive<usize>,
    factor_variance: Option<&str>,
) {
    for j in items.clone() {
        names.push(format!("lambda{j}"));
    }
    for j in items {
        names.push(format!("sigma2_{j}"));
    }
    if let Some(v) = factor_variance {
        names.push(v.into());
    }
}

/// True data-generating parameters for a study, in canonical order.
pub fn truth(study: Study) -> ParameterVector {
    let values = match study {
        Study::One => {
            // Indicator communalities step from .7 down to .3 within each
            // block; unit loadings, so sigma2 = (1 - rho2) / rho2.
            let uniq: Vec<f64> = [0.7, 0.6, 0.5, 0.4, 0.3]
                .iter()
                .map(|r2| (1.0 - r2) / r2)
                .collect();
            let mut v = Vec::with_capacity(23);
            v.extend(std::iter::repeat(1.0).take(5));
            v.extend_from_slice(&uniq);
            v.push(1.0); // phi
            v.extend(std::iter::repeat(1.0).take(5));
            v.extend_from_slice(&uniq);
            v.push(0.6); // beta
            v.push(0.64); // psi
            v
        }
        Study::Two => {
            let loadings = [1.0, 0.8, 0.8, 0.8, 0.8];
            let uniq = [0.44, 0.66, 0.88, 1.1, 1.32];
            let mut v = Vec::with_capacity(37);
            for block in 0..3 {
                v.extend_from_slice(&loadings);
                v.extend_from_slice(&uniq);
                if block < 2 {
                    v.push(1.0); // phi11 / phi22
                }
            }
            v.push(0.3); // phi21
            v.extend_from_slice(&[0.4, 0.4, 0.2]); // beta1..beta3
            v.push(0.54); // psi
            v
        }
        Study::Three => {
            // Eight items per LV: slopes cycle 1, 1.25, 1.5, 1.75 and
            // difficulties step from -1.75 to 1.75; intercepts are
            // alpha = -gamma * difficulty.
            let slopes = [1.0, 1.25, 1.5, 1.75, 1.0, 1.25, 1.5, 1.75];
            let difficulties = [-1.75, -1.25, -0.75, -0.25, 0.25, 0.75, 1.25, 1.75];
            let mut v = Vec::with_capacity(90);
            for _block in 0..5 {
                for j in 0..8 {
                    v.push(-slopes[j] * difficulties[j]);
                }
                v.extend_from_slice(&slopes);
            }
            v.extend(std::iter::repeat(0.3).take(6)); // predictor correlations
            v.extend_from_slice(&[0.1, 0.2, 0.3, 0.4]); // beta1..beta4
            v
        }
    };
    ParameterVector::new(study.param_names(), values).expect("truth fixture is well-formed")
}
