//! Riemannian centroid loss `f(M) = (1/N) Σ d(M, A_i)²` with its exact and
//! mini-batch gradients, and estimators for the constants the convergence
//! theory is stated in (gradient variance, gradient bound, smoothness).

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::spd::{
    distance, distance_squared, exp_map, log_map, norm, parallel_transport, whitened_log, SpdPoint,
    TangentVec,
};
use crate::symmat::{Matrix, SymMat};

/// A non-empty set of SPD matrices of a common dimension.
#[derive(Clone, Debug)]
pub struct Dataset {
    points: Vec<SpdPoint>,
}

impl Dataset {
    pub fn new(points: Vec<SpdPoint>) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(Error::input("dataset must contain at least one matrix"));
        };
        let d = first.dim();
        if let Some(i) = points.iter().position(|p| p.dim() != d) {
            return Err(Error::Data {
                index: i,
                reason: format!("dimension {} differs from {d}", points[i].dim()),
            });
        }
        Ok(Dataset { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    pub fn points(&self) -> &[SpdPoint] {
        &self.points
    }

    pub fn get(&self, i: usize) -> &SpdPoint {
        &self.points[i]
    }

    fn check_point(&self, m: &SpdPoint) -> Result<()> {
        if m.dim() == self.dim() {
            Ok(())
        } else {
            Err(Error::input(format!(
                "point of dimension {} against dataset of dimension {}",
                m.dim(),
                self.dim()
            )))
        }
    }
}

/// Sample indices into a dataset. Duplicates are allowed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    indices: Vec<usize>,
}

impl Batch {
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::input("batch must contain at least one index"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::input(format!("batch index {bad} out of range for {n} samples")));
        }
        Ok(Batch { indices })
    }

    /// Every index exactly once.
    pub fn full(n: usize) -> Self {
        Batch { indices: (0..n).collect() }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

pub fn loss(m: &SpdPoint, data: &Dataset) -> Result<f64> {
    data.check_point(m)?;
    let mut total = 0.0;
    for a in data.points() {
        total += distance_squared(m, a)?;
    }
    Ok(total / data.len() as f64)
}

/// Riemannian gradient of `d(·, A)²` at `M`: `−2 Exp_M⁻¹(A)`.
pub fn point_gradient(m: &SpdPoint, a: &SpdPoint) -> Result<TangentVec> {
    Ok(log_map(m, a)?.scale(-2.0))
}

/// Whitened point gradient `−2 log(M^{-1/2} A M^{-1/2})` and the squared
/// distance it implies, from a single eigendecomposition.
fn whitened_gradient(m: &SpdPoint, a: &SpdPoint) -> Result<(SymMat, f64)> {
    let l = whitened_log(m, a)?;
    let d2 = l.frobenius_dot(&l);
    Ok((l.scale(-2.0), d2))
}

fn mean_whitened_gradient<'a>(
    m: &SpdPoint,
    samples: impl ExactSizeIterator<Item = &'a SpdPoint>,
) -> Result<SymMat> {
    let count = samples.len() as f64;
    let mut acc = SymMat::zeros(m.dim());
    for a in samples {
        let (g, _) = whitened_gradient(m, a)?;
        acc.add_scaled_in_place(1.0, &g);
    }
    Ok(acc.scale(1.0 / count))
}

pub fn full_gradient(m: &SpdPoint, data: &Dataset) -> Result<TangentVec> {
    data.check_point(m)?;
    let w = mean_whitened_gradient(m, data.points().iter())?;
    m.tangent(m.unwhiten(&w))
}

/// Mean of the point gradients over the batch indices, with multiplicity.
pub fn batch_gradient(m: &SpdPoint, data: &Dataset, batch: &Batch) -> Result<TangentVec> {
    data.check_point(m)?;
    if let Some(&bad) = batch.indices().iter().find(|&&i| i >= data.len()) {
        return Err(Error::input(format!("batch index {bad} out of range for {} samples", data.len())));
    }
    let w = mean_whitened_gradient(m, batch.indices().iter().map(|&i| data.get(i)))?;
    m.tangent(m.unwhiten(&w))
}

/// Loss, full gradient and per-sample gradient variance at one point, sharing
/// one eigendecomposition per sample.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub loss: f64,
    pub gradient: TangentVec,
    pub gradient_norm: f64,
    pub sigma2: f64,
}

pub fn evaluate(m: &SpdPoint, data: &Dataset) -> Result<Evaluation> {
    data.check_point(m)?;
    let n = data.len() as f64;
    let mut grads = Vec::with_capacity(data.len());
    let mut total = 0.0;
    let mut acc = SymMat::zeros(m.dim());
    for a in data.points() {
        let (g, d2) = whitened_gradient(m, a)?;
        total += d2;
        acc.add_scaled_in_place(1.0, &g);
        grads.push(g);
    }
    let mean = acc.scale(1.0 / n);
    let sigma2 = grads
        .iter()
        .map(|g| {
            let diff = g.sub(&mean);
            diff.frobenius_dot(&diff)
        })
        .sum::<f64>()
        / n;
    let gradient_norm = mean.frobenius_norm();
    Ok(Evaluation {
        loss: total / n,
        gradient: m.tangent(m.unwhiten(&mean))?,
        gradient_norm,
        sigma2,
    })
}

/// `b` indices drawn uniformly from `0..n` with replacement.
pub fn sample_batch(rng: &mut impl Rng, n: usize, b: usize) -> Result<Batch> {
    if n == 0 || b == 0 {
        return Err(Error::input(format!("need n >= 1 and b >= 1, got n = {n}, b = {b}")));
    }
    Ok(Batch { indices: (0..b).map(|_| rng.random_range(0..n)).collect() })
}

/// `b` distinct indices (b ≤ n), a partial Fisher-Yates shuffle.
pub fn sample_batch_without_replacement(rng: &mut impl Rng, n: usize, b: usize) -> Result<Batch> {
    if n == 0 || b == 0 || b > n {
        return Err(Error::input(format!("need 1 <= b <= n, got n = {n}, b = {b}")));
    }
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..b {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(b);
    Ok(Batch { indices: pool })
}

/// Per-sample gradient variance `(1/N) Σ ‖G_i − grad f‖²_M`.
pub fn estimate_sigma2(m: &SpdPoint, data: &Dataset) -> Result<f64> {
    evaluate(m, data).map(|e| e.sigma2)
}

/// Largest gradient norm along a trace of `(point, gradient)` pairs.
pub fn estimate_g(trace: &[(SpdPoint, TangentVec)]) -> Result<f64> {
    if trace.is_empty() {
        return Err(Error::input("gradient trace is empty"));
    }
    let mut best: f64 = 0.0;
    for (p, g) in trace {
        best = best.max(norm(p, g)?);
    }
    Ok(best)
}

/// Geodesic ball used to draw smoothness probes.
#[derive(Clone, Debug)]
pub struct Ball {
    pub center: SpdPoint,
    pub radius: f64,
}

/// Unit-norm tangent direction at `p`, isotropic in the metric.
pub fn random_direction(rng: &mut impl Rng, p: &SpdPoint) -> TangentVec {
    let d = p.dim();
    let data: Vec<f64> = (0..d * d).map(|_| StandardNormal.sample(rng)).collect();
    let w = Matrix::from_row_major(d, data).expect("square").symmetric_part();
    let norm = w.frobenius_norm();
    let w = if norm > 0.0 { w.scale(1.0 / norm) } else { SymMat::identity(d).scale(1.0 / (d as f64).sqrt()) };
    p.tangent(p.unwhiten(&w)).expect("matching dimension")
}

fn random_point_in(rng: &mut impl Rng, ball: &Ball) -> Result<SpdPoint> {
    let dir = random_direction(rng, &ball.center);
    let r = ball.radius * rng.random::<f64>();
    exp_map(&ball.center, &dir.scale(r))
}

/// `‖grad f(x) − Γ_y^x grad f(y)‖_x / ‖Exp_x⁻¹(y)‖_x`, or `None` when the
/// pair is degenerate (distance below 1e-12).
pub fn smoothness_ratio(data: &Dataset, x: &SpdPoint, y: &SpdPoint) -> Result<Option<f64>> {
    let dist = distance(x, y)?;
    if dist < 1e-12 {
        return Ok(None);
    }
    let gx = full_gradient(x, data)?;
    let gy = full_gradient(y, data)?;
    let moved = parallel_transport(y, x, &gy)?;
    let diff = gx.sub(&moved)?;
    Ok(Some(norm(x, &diff)? / norm(x, &log_map(x, y)?)?))
}

/// Largest observed smoothness ratio over `probes` random pairs in `region`.
pub fn estimate_l(data: &Dataset, probes: usize, rng: &mut impl Rng, region: &Ball) -> Result<f64> {
    if probes == 0 {
        return Err(Error::input("need at least one probe"));
    }
    data.check_point(&region.center)?;
    let mut best: Option<f64> = None;
    for _ in 0..probes {
        let x = random_point_in(rng, region)?;
        let y = random_point_in(rng, region)?;
        if let Some(r) = smoothness_ratio(data, &x, &y)? {
            best = Some(best.map_or(r, |b| b.max(r)));
        }
    }
    best.ok_or_else(|| Error::Estimation("every smoothness probe was degenerate".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use crate::spd::inner;
    use std::f64::consts::E;

    fn id(d: usize) -> SpdPoint {
        SpdPoint::identity(d)
    }

    #[test]
    fn loss_cases() {
        let a = SpdPoint::from_diagonal(&[2.0, 3.0]).unwrap();
        let data = Dataset::new(vec![a.clone()]).unwrap();
        assert!(loss(&a, &data).unwrap() < 1e-24);

        let data = Dataset::new(vec![id(3)]).unwrap();
        let m = SpdPoint::from_diagonal(&[E * E, 1.0, 1.0]).unwrap();
        assert!((loss(&m, &data).unwrap() - 4.0).abs() < 1e-14);
        assert!(loss(&id(2), &data).is_err());
    }

    #[test]
    fn point_gradient_diagonal() {
        let a = SpdPoint::from_diagonal(&[E * E, 1.0]).unwrap();
        let g = point_gradient(&id(2), &a).unwrap();
        assert!(g.vec().max_abs_diff(&SymMat::from_diagonal(&[-4.0, 0.0])) < 1e-14);
        assert!(point_gradient(&a, &a).unwrap().vec().frobenius_norm() < 1e-14);
    }

    #[test]
    fn full_gradient_cancels_in_symmetric_configuration() {
        let data = Dataset::new(vec![
            SpdPoint::from_diagonal(&[E, 1.0]).unwrap(),
            SpdPoint::from_diagonal(&[1.0 / E, 1.0]).unwrap(),
        ])
        .unwrap();
        assert!(full_gradient(&id(2), &data).unwrap().vec().frobenius_norm() < 1e-12);
    }

    #[test]
    fn single_sample_full_gradient_is_point_gradient() {
        let a = SpdPoint::from_diagonal(&[3.0, 0.5]).unwrap();
        let m = SpdPoint::new(SymMat::from_rows(&[&[2.0, 0.3], &[0.3, 1.0]]).unwrap()).unwrap();
        let data = Dataset::new(vec![a.clone()]).unwrap();
        let full = full_gradient(&m, &data).unwrap();
        let point = point_gradient(&m, &a).unwrap();
        assert!(full.vec().max_abs_diff(point.vec()) < 1e-13);
    }

    #[test]
    fn batch_identities() {
        let data = Dataset::new(vec![
            SpdPoint::from_diagonal(&[2.0, 1.0]).unwrap(),
            SpdPoint::from_diagonal(&[1.0, 3.0]).unwrap(),
            SpdPoint::new(SymMat::from_rows(&[&[2.0, 0.5], &[0.5, 1.0]]).unwrap()).unwrap(),
        ])
        .unwrap();
        let m = SpdPoint::from_diagonal(&[1.5, 1.2]).unwrap();
        let one = batch_gradient(&m, &data, &Batch::new(vec![2], 3).unwrap()).unwrap();
        let direct = point_gradient(&m, data.get(2)).unwrap();
        assert!(one.vec().max_abs_diff(direct.vec()) < 1e-13);
        assert!(Batch::new(vec![3], 3).is_err());
        assert!(Batch::new(vec![], 3).is_err());
    }

    #[test]
    fn sampling_contract() {
        let a = sample_batch(&mut substream(1, 0), 10, 50).unwrap();
        let b = sample_batch(&mut substream(1, 0), 10, 50).unwrap();
        assert_eq!(a, b);
        assert!(a.indices().iter().all(|&i| i < 10));
        assert!(sample_batch(&mut substream(1, 0), 0, 1).is_err());
        assert!(sample_batch(&mut substream(1, 0), 1, 0).is_err());
        let w = sample_batch_without_replacement(&mut substream(1, 0), 10, 10).unwrap();
        let mut sorted = w.indices().to_vec();
        sorted.sort();
        assert_eq!(sorted, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn sampling_frequencies_are_uniform() {
        // 10⁵ draws over 8 cells: each count ~ Binomial(10⁵, 1/8).
        let n = 8;
        let draws = 100_000;
        let batch = sample_batch(&mut substream(42, 0), n, draws).unwrap();
        let mut counts = vec![0usize; n];
        for &i in batch.indices() {
            counts[i] += 1;
        }
        let p = 1.0 / n as f64;
        let mean = draws as f64 * p;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() < 3.0 * sd, "count {c} vs {mean} ± {sd}");
        }
    }

    #[test]
    fn sigma2_zero_for_identical_samples() {
        let a = SpdPoint::from_diagonal(&[2.0, 5.0]).unwrap();
        let data = Dataset::new(vec![a.clone(), a.clone(), a]).unwrap();
        assert!(estimate_sigma2(&id(2), &data).unwrap() < 1e-24);
    }

    #[test]
    fn evaluate_matches_separate_calls() {
        let data = Dataset::new(vec![
            SpdPoint::from_diagonal(&[2.0, 1.0]).unwrap(),
            SpdPoint::new(SymMat::from_rows(&[&[2.0, 0.5], &[0.5, 1.0]]).unwrap()).unwrap(),
        ])
        .unwrap();
        let m = SpdPoint::from_diagonal(&[1.5, 0.7]).unwrap();
        let e = evaluate(&m, &data).unwrap();
        assert!((e.loss - loss(&m, &data).unwrap()).abs() < 1e-13);
        let g = full_gradient(&m, &data).unwrap();
        assert!(e.gradient.vec().max_abs_diff(g.vec()) < 1e-13);
        assert!((e.gradient_norm - norm(&m, &g).unwrap()).abs() < 1e-13);
    }

    #[test]
    fn g_estimator() {
        let p = id(2);
        assert_eq!(estimate_g(&[(p.clone(), p.zero_tangent())]).unwrap(), 0.0);
        let t = |s: f64| (p.clone(), p.tangent(SymMat::from_diagonal(&[s, 0.0])).unwrap());
        let trace = vec![t(1.0), t(3.0), t(2.0)];
        assert_eq!(estimate_g(&trace).unwrap(), 3.0);
        let mut running = 0.0;
        for k in 1..=trace.len() {
            let g = estimate_g(&trace[..k]).unwrap();
            assert!(g >= running);
            running = g;
        }
        assert!(estimate_g(&[]).is_err());
    }

    #[test]
    fn smoothness_ratio_is_two_on_commuting_pairs() {
        let data = Dataset::new(vec![id(3)]).unwrap();
        for (s, t) in [(0.3, -0.7), (1.2, 0.1), (-2.0, 2.0)] {
            let dir = [1.0, -0.5, 0.25];
            let x = SpdPoint::from_diagonal(&dir.map(|v: f64| (s * v).exp())).unwrap();
            let y = SpdPoint::from_diagonal(&dir.map(|v: f64| (t * v).exp())).unwrap();
            let r = smoothness_ratio(&data, &x, &y).unwrap().unwrap();
            assert!((r - 2.0).abs() < 1e-12, "{r}");
        }
        assert!(smoothness_ratio(&data, &id(3), &id(3)).unwrap().is_none());
    }

    #[test]
    fn l_estimate_monotone_in_probes() {
        let data = Dataset::new(vec![
            SpdPoint::from_diagonal(&[2.0, 1.0]).unwrap(),
            SpdPoint::new(SymMat::from_rows(&[&[2.0, 0.5], &[0.5, 1.0]]).unwrap()).unwrap(),
        ])
        .unwrap();
        let ball = Ball { center: id(2), radius: 1.0 };
        let mut last = 0.0;
        for probes in [1, 5, 20, 50] {
            let l = estimate_l(&data, probes, &mut substream(3, 0), &ball).unwrap();
            assert!(l >= last);
            last = l;
        }
        assert!(estimate_l(&data, 0, &mut substream(3, 0), &ball).is_err());
        let degenerate = Ball { center: id(2), radius: 0.0 };
        assert!(matches!(
            estimate_l(&data, 3, &mut substream(3, 0), &degenerate),
            Err(Error::Estimation(_))
        ));
    }

    #[test]
    fn gradient_pairs_with_inner_product() {
        let a = SpdPoint::from_diagonal(&[3.0, 0.5]).unwrap();
        let m = id(2);
        let g = point_gradient(&m, &a).unwrap();
        assert!(inner(&m, &g, &g).unwrap() >= 0.0);
    }
}
