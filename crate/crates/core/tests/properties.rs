//! Property tests for the algebraic invariants: partition round trips,
//! projection idempotence and feasibility, tail-average convexity, and the
//! unit-interval contract of the variate generator.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use tsbc::params::{
    project_box, project_corr_psd, project_slopes_qp, recombine, split, BoxBound,
    ParameterPartition, ParameterVector,
};
use tsbc::rm::{learning_rate, weighted_tail_average};

fn arb_partition(q: usize) -> impl Strategy<Value = ParameterPartition> {
    Just(q).prop_perturb(move |q, mut rng| {
        let mut idx: Vec<usize> = (0..q).collect();
        // Fisher-Yates with the proptest rng
        for i in (1..q).rev() {
            let j = (rng.next_u64() % (i as u64 + 1)) as usize;
            idx.swap(i, j);
        }
        let q0 = (rng.next_u64() % (q as u64 + 1)) as usize;
        let nuisance: Vec<usize> = idx[..q0].to_vec();
        let focal: Vec<usize> = idx[q0..].to_vec();
        ParameterPartition {
            measurement_blocks: vec![nuisance.clone()],
            nuisance_idx: nuisance,
            focal_idx: focal,
        }
    })
}

fn values_and_partition() -> impl Strategy<Value = (Vec<f64>, ParameterPartition)> {
    proptest::collection::vec(-1e6f64..1e6, 1..12)
        .prop_flat_map(|values| {
            let q = values.len();
            (Just(values), arb_partition(q))
        })
}

proptest! {
    #[test]
    fn split_then_recombine_is_identity((values, part) in values_and_partition()) {
        let q = values.len();
        let names: Vec<String> = (0..q).map(|i| format!("p{i}")).collect();
        let theta = ParameterVector::new(names, values.clone()).unwrap();
        let (nu, phi) = split(&theta, &part).unwrap();
        let back = recombine(&nu, &phi, &part).unwrap();
        prop_assert_eq!(back, values);
    }

    #[test]
    fn box_projection_lands_inside_and_is_idempotent(
        x in proptest::collection::vec(-50.0f64..50.0, 1..6),
        lo in -5.0f64..0.0,
        width in 0.0f64..8.0,
    ) {
        let bounds: Vec<BoxBound> = (0..x.len())
            .map(|i| match i % 3 {
                0 => BoxBound { lower: Some(lo), upper: Some(lo + width) },
                1 => BoxBound { lower: Some(lo), upper: None },
                _ => BoxBound { lower: None, upper: None },
            })
            .collect();
        let once = project_box(&x, &bounds);
        for (v, b) in once.iter().zip(&bounds) {
            if let Some(l) = b.lower { prop_assert!(*v >= l); }
            if let Some(u) = b.upper { prop_assert!(*v <= u); }
        }
        let twice = project_box(&once, &bounds);
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn corr_projection_yields_unit_diagonal_psd_idempotent(
        offs in proptest::collection::vec(-1.8f64..1.8, 6),
    ) {
        let mut m = DMatrix::identity(4, 4);
        let mut k = 0;
        for i in 1..4 {
            for j in 0..i {
                m[(i, j)] = offs[k];
                m[(j, i)] = offs[k];
                k += 1;
            }
        }
        let floor = 1e-6;
        let p = project_corr_psd(&m, floor);
        for i in 0..4 {
            prop_assert!((p[(i, i)] - 1.0).abs() < 1e-12);
        }
        let min_eig = p.clone().symmetric_eigen().eigenvalues.iter().cloned()
            .fold(f64::INFINITY, f64::min);
        prop_assert!(min_eig >= floor - 1e-12, "min eigenvalue {min_eig}");
        let p2 = project_corr_psd(&p, floor);
        for i in 0..4 {
            for j in 0..4 {
                prop_assert!((p[(i, j)] - p2[(i, j)]).abs() <= 1e-12 * (1.0 + p[(i, j)].abs()));
            }
        }
    }

    #[test]
    fn slope_projection_feasible_and_idempotent(
        beta in proptest::collection::vec(-2.0f64..2.0, 4),
        offs in proptest::collection::vec(-0.9f64..0.9, 6),
    ) {
        let mut m = DMatrix::identity(4, 4);
        let mut k = 0;
        for i in 1..4 {
            for j in 0..i {
                m[(i, j)] = offs[k];
                m[(j, i)] = offs[k];
                k += 1;
            }
        }
        let floor = 1e-6;
        // make the quadratic form positive definite first
        let phi_mat = project_corr_psd(&m, 1e-3);
        let proj = project_slopes_qp(&beta, &phi_mat, floor).unwrap();
        let v = DVector::from_column_slice(&proj);
        let quad = (&phi_mat * &v).dot(&v);
        prop_assert!(1.0 - quad >= floor - 1e-12, "constraint slack {}", 1.0 - quad);
        // feasible inputs pass through exactly
        let b0 = DVector::from_column_slice(&beta);
        if 1.0 - (&phi_mat * &b0).dot(&b0) >= floor {
            prop_assert_eq!(&proj, &beta);
        }
        let again = project_slopes_qp(&proj, &phi_mat, floor).unwrap();
        for (a, b) in proj.iter().zip(&again) {
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn tail_average_is_a_convex_combination(
        values in proptest::collection::vec(-100.0f64..100.0, 2..40),
    ) {
        let iterates: Vec<Vec<f64>> = values.iter().map(|v| vec![*v]).collect();
        let gammas: Vec<f64> = (1..=values.len()).map(|k| learning_rate(k, 2.0, 0.7)).collect();
        let avg = weighted_tail_average(&iterates, &gammas)[0];
        let tail = &values[values.len() / 2..];
        let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(avg >= lo - 1e-12 && avg <= hi + 1e-12);
    }

    #[test]
    fn uniform_cells_stay_strictly_inside_unit_interval(
        seed in any::<u64>(),
        stream in any::<u64>(),
        row in any::<u64>(),
        col in any::<u64>(),
    ) {
        let u = tsbc::rng::cell_uniform(seed, stream, row, col);
        prop_assert!(u > 0.0 && u < 1.0);
        let z = tsbc::rng::cell_normal(seed, stream, row, col);
        prop_assert!(z.is_finite());
    }
}
