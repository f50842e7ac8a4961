//! Stochastic-approximation bias correction.
//!
//! The initial focal estimator is biased but responds to the data-generating
//! parameters: its expectation surface `h(phi; nu)` is assumed invertible
//! near the truth. Solving `h(phi; nu) = phi_hat(observed)` by a projected
//! Robbins-Monro recursion inverts that surface using nothing but the
//! generator and the estimator themselves. Each iteration simulates fresh
//! data at the current iterate, re-estimates, and moves against the
//! discrepancy with a decaying learning rate; the returned point estimate is
//! a learning-rate-weighted average over the second half of the trajectory.

use std::io::Write;

use crate::dga::draw_components;
use crate::error::{Error, Result};
use crate::model::TwoStageModel;
use crate::params::FeasibilitySpec;
use crate::rng;

/// Stream-domain tag for the per-iteration component draws.
pub const STREAM_RM: u64 = 0x524d;

/// Tuning of one Robbins-Monro run.
#[derive(Debug, Clone)]
pub struct RmConfig {
    /// Iteration budget K.
    pub iterations: usize,
    /// Learning-rate multiplier; the step at iteration k is `a * k^(-b)`.
    pub a: f64,
    /// Learning-rate decay exponent, in (0.5, 1].
    pub b: f64,
    /// Datasets simulated and averaged per iteration.
    pub mc_per_iter: usize,
    pub feasibility: FeasibilitySpec,
    /// Starting focal vector.
    pub phi0: Vec<f64>,
}

impl RmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 2 {
            return Err(Error::Usage("iteration budget must be at least 2".into()));
        }
        if !(self.a > 0.0) {
            return Err(Error::Usage("learning-rate multiplier a must be positive".into()));
        }
        if !(self.b > 0.5 && self.b <= 1.0) {
            return Err(Error::Usage("decay exponent b must lie in (0.5, 1]".into()));
        }
        if self.mc_per_iter < 1 {
            return Err(Error::Usage("mc_per_iter must be at least 1".into()));
        }
        self.feasibility.validate()?;
        if self.phi0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Usage("non-finite starting value".into()));
        }
        Ok(())
    }
}

/// Learning rate `a * k^(-b)` at iteration k (1-based).
pub fn learning_rate(k: usize, a: f64, b: f64) -> f64 {
    a * (k as f64).powf(-b)
}

/// Full iterate history of one run.
#[derive(Debug, Clone)]
pub struct RmTrace {
    /// Iterates phi(1)..phi(K), each already projected into the feasible set.
    pub iterates: Vec<Vec<f64>>,
    pub gammas: Vec<f64>,
    /// Learning-rate-weighted average over the second half of the run.
    pub phi_bc: Vec<f64>,
    /// How many updates the feasibility projection actually altered.
    pub projection_hits: usize,
}

impl RmTrace {
    /// Dump the trajectory as CSV: `k, gamma`, one column per focal parameter.
    pub fn write_csv<W: Write>(&self, focal_names: &[String], mut w: W) -> Result<()> {
        let mut header = vec!["k".to_string(), "gamma".to_string()];
        header.extend_from_slice(focal_names);
        writeln!(w, "{}", header.join(","))?;
        for (k, (phi, gamma)) in self.iterates.iter().zip(&self.gammas).enumerate() {
            let mut row = format!("{},{}", k + 1, gamma);
            for v in phi {
                row.push(',');
                row.push_str(&format!("{v}"));
            }
            writeln!(w, "{row}")?;
        }
        Ok(())
    }
}

/// Learning-rate-weighted average of the second half of the iterates,
/// `sum_{k > K/2} gamma_k phi(k) / sum gamma_k`. Discarding the first half
/// mutes the influence of the starting point.
pub fn weighted_tail_average(iterates: &[Vec<f64>], gammas: &[f64]) -> Vec<f64> {
    let k_total = iterates.len();
    assert!(k_total >= 2, "tail average needs at least two iterates");
    let start = k_total / 2; // zero-based index of iterate floor(K/2)+1
    let q1 = iterates[0].len();
    let mut acc = vec![0.0; q1];
    let mut wsum = 0.0;
    for k in start..k_total {
        let g = gammas[k];
        wsum += g;
        for (a, v) in acc.iter_mut().zip(&iterates[k]) {
            *a += g * v;
        }
    }
    acc.iter_mut().for_each(|a| *a /= wsum);
    acc
}

const DIVERGENCE_GUARD: f64 = 1e6;

/// Projected Robbins-Monro recursion solving `h(phi; nu) = target`.
///
/// Iteration k simulates `mc_per_iter` datasets at `(nu, phi(k-1))` on
/// streams derived from `(seed, k)`, averages their initial estimates, takes
/// the step `phi - gamma_k (estimate - target)`, and projects it onto the
/// feasible set. The full trajectory is returned; generator or estimator
/// failure aborts with the partial trace attached.
pub fn robbins_monro(
    target: &[f64],
    nu: &[f64],
    cfg: &RmConfig,
    model: &dyn TwoStageModel,
    seed: u64,
) -> Result<RmTrace> {
    cfg.validate()?;
    let q1 = model.q1();
    if target.len() != q1 || cfg.phi0.len() != q1 {
        return Err(Error::Structural(format!(
            "target/start length must equal q1 = {q1}"
        )));
    }
    if nu.len() != model.q0() {
        return Err(Error::Structural(format!(
            "nuisance length {} does not match q0 = {}",
            nu.len(),
            model.q0()
        )));
    }

    let mut phi = cfg.phi0.clone();
    let mut iterates: Vec<Vec<f64>> = Vec::with_capacity(cfg.iterations);
    let mut gammas: Vec<f64> = Vec::with_capacity(cfg.iterations);
    let mut projection_hits = 0usize;

    let abort = |k: usize,
                 source: Error,
                 iterates: Vec<Vec<f64>>,
                 gammas: Vec<f64>,
                 projection_hits: usize| {
        let phi_bc = if iterates.len() >= 2 {
            weighted_tail_average(&iterates, &gammas)
        } else {
            vec![f64::NAN; q1]
        };
        Error::RmAborted {
            iteration: k,
            source: Box::new(source),
            trace: Box::new(RmTrace { iterates, gammas, phi_bc, projection_hits }),
        }
    };

    for k in 1..=cfg.iterations {
        let gamma = learning_rate(k, cfg.a, cfg.b);
        let mut mean_est = vec![0.0; q1];
        for j in 0..cfg.mc_per_iter {
            let stream = rng::chain(&[STREAM_RM, k as u64, j as u64]);
            let u = draw_components(model.n(), model.layout(), seed, stream);
            let mut theta = nu.to_vec();
            theta.extend_from_slice(&phi);
            let est = model
                .generate(&u, &theta)
                .and_then(|y| model.initial_estimate(&y, nu));
            match est {
                Ok(e) => {
                    for (m, v) in mean_est.iter_mut().zip(&e) {
                        *m += v / cfg.mc_per_iter as f64;
                    }
                }
                Err(e) => return Err(abort(k, e, iterates, gammas, projection_hits)),
            }
        }
        for i in 0..q1 {
            phi[i] -= gamma * (mean_est[i] - target[i]);
        }
        let (projected, moved) = match cfg.feasibility.project(&phi) {
            Ok(p) => p,
            Err(e) => return Err(abort(k, e, iterates, gammas, projection_hits)),
        };
        phi = projected;
        if moved {
            projection_hits += 1;
        }
        if phi.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_GUARD) {
            let source = Error::Numerical(format!(
                "iterate diverged at k={k}: {:?}",
                phi.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>()
            ));
            return Err(abort(k, source, iterates, gammas, projection_hits));
        }
        iterates.push(phi.clone());
        gammas.push(gamma);
    }

    let phi_bc = weighted_tail_average(&iterates, &gammas);
    Ok(RmTrace { iterates, gammas, phi_bc, projection_hits })
}
