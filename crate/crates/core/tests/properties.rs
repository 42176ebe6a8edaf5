//! Randomized invariants of the geometry, the loss, the schedules and the
//! step-count models.

use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use rsgd_core::centroid::{loss, random_direction, sample_batch, Dataset};
use rsgd_core::experiment::{critical_batch, fit_model, spearman, FitParams, StepModel};
use rsgd_core::rng::{substream, StreamRng};
use rsgd_core::rsgd::{ScheduleKind, StepSchedule};
use rsgd_core::spd::{
    distance, exp_map, inner, log_map, norm, parallel_transport, transform_point, transform_tangent, SpdPoint,
    TangentVec,
};
use rsgd_core::symmat::Matrix;

fn point(rng: &mut StreamRng, d: usize, radius: f64) -> SpdPoint {
    let id = SpdPoint::identity(d);
    let r = radius * rng.random::<f64>();
    exp_map(&id, &random_direction(rng, &id).scale(r)).unwrap()
}

fn tangent(rng: &mut StreamRng, p: &SpdPoint, max_norm: f64) -> TangentVec {
    let r = max_norm * rng.random::<f64>();
    random_direction(rng, p).scale(r)
}

fn invertible(rng: &mut StreamRng, d: usize) -> Matrix {
    let data = (0..d * d)
        .map(|i| Distribution::<f64>::sample(&StandardNormal, rng) + if i % (d + 1) == 0 { 3.0 } else { 0.0 })
        .collect();
    Matrix::from_row_major(d, data).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exp_and_log_invert_each_other(seed in any::<u64>(), d in 1usize..=6) {
        let mut rng = substream(seed, 0);
        let p = point(&mut rng, d, 2.0);
        let x = tangent(&mut rng, &p, 3.0);
        let back = log_map(&p, &exp_map(&p, &x).unwrap()).unwrap();
        prop_assert!(back.vec().sub(x.vec()).frobenius_norm() <= 1e-9 * x.vec().frobenius_norm().max(1e-300));
        let q = point(&mut rng, d, 2.0);
        let again = exp_map(&p, &log_map(&p, &q).unwrap()).unwrap();
        prop_assert!(again.mat().sub(q.mat()).frobenius_norm() <= 1e-9 * q.mat().frobenius_norm());
    }

    #[test]
    fn distance_is_a_symmetric_metric(seed in any::<u64>(), d in 1usize..=5) {
        let mut rng = substream(seed, 0);
        let (p, q, r) = (point(&mut rng, d, 2.0), point(&mut rng, d, 2.0), point(&mut rng, d, 2.0));
        let pq = distance(&p, &q).unwrap();
        prop_assert!((pq - distance(&q, &p).unwrap()).abs() <= 1e-12 * pq.max(1.0));
        prop_assert!(distance(&p, &p).unwrap() <= 1e-12);
        prop_assert!(distance(&p, &r).unwrap() + distance(&r, &q).unwrap() - pq >= -1e-10);
        prop_assert!((norm(&p, &log_map(&p, &q).unwrap()).unwrap() - pq).abs() <= 1e-9 * pq.max(1.0));
    }

    #[test]
    fn congruence_commutes_with_geometry(seed in any::<u64>()) {
        let mut rng = substream(seed, 0);
        let d = 4;
        let (p, q) = (point(&mut rng, d, 2.0), point(&mut rng, d, 2.0));
        let x = tangent(&mut rng, &p, 2.0);
        let g = invertible(&mut rng, d);
        let (gp, gq) = (transform_point(&g, &p).unwrap(), transform_point(&g, &q).unwrap());
        let gx = transform_tangent(&g, &x).unwrap();
        let moved = exp_map(&gp, &gx).unwrap();
        let expected = transform_point(&g, &exp_map(&p, &x).unwrap()).unwrap();
        prop_assert!(moved.mat().sub(expected.mat()).frobenius_norm() <= 1e-9 * expected.mat().frobenius_norm());
        prop_assert!(rel(distance(&gp, &gq).unwrap(), distance(&p, &q).unwrap()) <= 1e-9);
        prop_assert!(rel(norm(&gp, &gx).unwrap(), norm(&p, &x).unwrap()) <= 1e-9);
    }

    #[test]
    fn loss_is_invariant_under_congruence(seed in any::<u64>(), n in 1usize..12) {
        let mut rng = substream(seed, 0);
        let d = 3;
        let points: Vec<SpdPoint> = (0..n).map(|_| point(&mut rng, d, 1.5)).collect();
        let m = point(&mut rng, d, 1.5);
        let g = invertible(&mut rng, d);
        let moved = Dataset::new(points.iter().map(|p| transform_point(&g, p).unwrap()).collect()).unwrap();
        let data = Dataset::new(points).unwrap();
        let before = loss(&m, &data).unwrap();
        let after = loss(&transform_point(&g, &m).unwrap(), &moved).unwrap();
        prop_assert!(rel(after, before) <= 1e-10 || (after - before).abs() <= 1e-14);
    }

    #[test]
    fn transport_preserves_inner_products(seed in any::<u64>(), d in 1usize..=5) {
        let mut rng = substream(seed, 0);
        let (p, q) = (point(&mut rng, d, 2.0), point(&mut rng, d, 2.0));
        let (x, y) = (tangent(&mut rng, &p, 2.0), tangent(&mut rng, &p, 2.0));
        let (tx, ty) = (parallel_transport(&p, &q, &x).unwrap(), parallel_transport(&p, &q, &y).unwrap());
        let scale = norm(&p, &x).unwrap() * norm(&p, &y).unwrap();
        prop_assert!((inner(&q, &tx, &ty).unwrap() - inner(&p, &x, &y).unwrap()).abs() <= 1e-10 * scale.max(1e-300));
        let home = parallel_transport(&q, &p, &tx).unwrap();
        prop_assert!(home.vec().sub(x.vec()).frobenius_norm() <= 1e-9 * x.vec().frobenius_norm().max(1e-300));
    }

    #[test]
    fn batches_index_the_dataset(seed in any::<u64>(), n in 1usize..100, b in 1usize..50) {
        let batch = sample_batch(&mut substream(seed, 0), n, b).unwrap();
        prop_assert_eq!(batch.len(), b);
        prop_assert!(batch.indices().iter().all(|&i| i < n));
    }

    #[test]
    fn schedules_never_increase(alpha in 1e-4f64..1.0, gamma in 0.05f64..0.95, period in 1usize..50, decays in 0u32..12) {
        let stairs = StepSchedule::staircase(alpha, gamma, period, decays).unwrap();
        let floor = alpha * gamma.powi(decays as i32);
        let mut last = f64::INFINITY;
        for k in 0..(period * (decays as usize + 2)) {
            let a = stairs.step_size(k);
            prop_assert!(a <= last && a >= floor * (1.0 - 1e-12) && a <= alpha);
            last = a;
        }
        let inv = StepSchedule::InverseSqrt;
        prop_assert!((0..200).all(|k| inv.step_size(k + 1) < inv.step_size(k)));
    }

    #[test]
    fn spearman_is_a_bounded_rank_statistic(ys in prop::collection::vec(-1e3f64..1e3, 2..20)) {
        let xs: Vec<f64> = (0..ys.len()).map(|i| i as f64).collect();
        if let Some(r) = spearman(&xs, &ys) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
            let flipped: Vec<f64> = ys.iter().map(|y| -y).collect();
            prop_assert!((spearman(&xs, &flipped).unwrap() + r).abs() <= 1e-12);
        }
    }

    #[test]
    fn constant_model_fit_round_trips(
        c1 in 0.5f64..5.0, c2 in 1.0f64..1e3, sigma2 in 1.0f64..20.0, g in 0.0f64..2.0,
        alpha in 1e-3f64..0.05, epsilon in 0.2f64..1.0,
    ) {
        let params = FitParams { sigma2, g, alpha, gamma: 0.5, decays: 10, epsilon };
        let truth = StepModel { kind: ScheduleKind::Constant, c1, c2, params };
        let b0 = truth.lower_bound();
        prop_assume!(b0.is_some_and(|b0| b0 < 64.0) && epsilon - g * g * alpha * c1 > 0.1 * epsilon);
        let points: Vec<(f64, f64)> = (0..=10)
            .map(|p| 2f64.powi(p))
            .filter_map(|b| truth.steps(b).map(|k| (b, k)))
            .collect();
        prop_assume!(points.len() >= 4);
        let fit = fit_model(ScheduleKind::Constant, &points, params).unwrap();
        prop_assert!(rel(fit.c1(), c1) < 1e-6 && rel(fit.c2(), c2) < 1e-6, "{} {}", fit.c1(), fit.c2());
    }

    #[test]
    fn critical_batch_minimizes_sfo_on_its_range(
        c1 in 0.5f64..5.0, c2 in 0.5f64..50.0, sigma2 in 1.0f64..20.0, g in 0.0f64..2.0,
    ) {
        let params = FitParams { sigma2, g, alpha: 0.01, gamma: 0.5, decays: 10, epsilon: 0.5 };
        for kind in [ScheduleKind::Constant, ScheduleKind::InverseSqrt] {
            let model = StepModel { kind, c1, c2, params };
            let lo = model.lower_bound().map_or(1.0, |b0| (1.01 * b0).max(1.0));
            let best = critical_batch(&model, (lo, 4096.0)).unwrap();
            for i in 0..=40 {
                let b = lo * (4096.0 / lo).powf(i as f64 / 40.0);
                if let Some(k) = model.steps(b) {
                    prop_assert!(best.sfo <= k * b * (1.0 + 1e-9), "{kind}: b={b}");
                }
            }
        }
    }
}
