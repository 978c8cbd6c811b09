use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;
use rgpssm::belief::{chol_rank_update, qr_triangularize};
use rgpssm::bench::{standardize, ExperimentConfig, IoDataset, Task};
use rgpssm::kernel::{base_gram, kron_diag};
use rgpssm::Hyperparameters;

fn matrix(r: usize, c: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-2.0..2.0f64, r * c).prop_map(move |v| DMatrix::from_vec(r, c, v))
}

/// Lower-triangular factor with a diagonal bounded away from zero.
fn factor(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    matrix(n, n).prop_map(move |m| {
        let mut l = m.lower_triangle();
        for i in 0..n {
            l[(i, i)] = l[(i, i)].abs() + 0.5;
        }
        l
    })
}

proptest! {
    #[test]
    fn gram_is_symmetric_psd(
        pts in prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 2), 1..8),
        l in 0.2..3.0f64,
        s2 in prop::collection::vec(0.1..4.0f64, 2),
    ) {
        let z: Vec<_> = pts.into_iter().map(DVector::from_vec).collect();
        let h = Hyperparameters::new(&[l, l], &s2).unwrap();
        let k = base_gram(&z, &h, 0.0).unwrap();
        prop_assert!((&k - k.transpose()).amax() == 0.0);
        let full = kron_diag(&k, &h.signal_variances());
        let scale = full.amax().max(1.0);
        prop_assert!(SymmetricEigen::new(full).eigenvalues.min() >= -1e-10 * scale);
    }

    #[test]
    fn rank_update_then_downdate_round_trips(l in factor(4), v in matrix(4, 2)) {
        let mut u = l.clone();
        chol_rank_update(&mut u, &v, 1.0).unwrap();
        prop_assert!((&u * u.transpose() - (&l * l.transpose() + &v * v.transpose())).amax() < 1e-9);
        chol_rank_update(&mut u, &v, -1.0).unwrap();
        prop_assert!((&u * u.transpose() - &l * l.transpose()).amax() < 1e-8);
    }

    #[test]
    fn qr_triangularize_reproduces_the_sum(m in matrix(4, 4), d in matrix(4, 3)) {
        let l = qr_triangularize(&m, &d);
        prop_assert!((l.clone() - l.lower_triangle()).amax() == 0.0);
        prop_assert!(l.diagonal().iter().all(|x| *x >= 0.0));
        let want = &m * m.transpose() + &d * d.transpose();
        prop_assert!((&l * l.transpose() - want).amax() < 1e-10 * (1.0 + m.amax().powi(2)));
    }

    #[test]
    fn standardization_round_trips(
        rows in prop::collection::vec((-50.0..50.0f64, -5.0..5.0f64, -1e3..1e3f64), 2..60),
    ) {
        let d = IoDataset {
            u: rows.iter().map(|r| vec![r.0, r.1]).collect(),
            y: rows.iter().map(|r| r.2).collect(),
        };
        let (train, test) = d.split_half();
        let (_, scaled, s) = standardize(&train, &test);
        let back = s.invert(&scaled);
        for (a, b) in back.y.iter().zip(&test.y) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
        for (a, b) in back.u.iter().flatten().zip(test.u.iter().flatten()) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn config_text_round_trips(
        task in prop::sample::select(vec![Task::Wingrock, Task::Lincycle, Task::Sysid, Task::Gprcheck]),
        seed in any::<u64>(),
        budget in 1usize..100,
        tol in 0.0..1.0f64,
        hyperopt in any::<bool>(),
        trust in prop::option::of(0.01..1.0f64),
        l in prop::collection::vec(0.1..10.0f64, 1..3),
    ) {
        let c = ExperimentConfig {
            seed,
            budget,
            novelty_tol: tol,
            hyperopt,
            trust_region: trust,
            length_scale: l,
            data: Some("data/daisy/dryer.dat".into()),
            ..ExperimentConfig::for_task(task)
        };
        prop_assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c);
    }
}
