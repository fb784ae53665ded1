//! Integration engines for expectations against the prior `μ₀`.
//!
//! Every engine computes `∫ f dμ₀` for a vector-valued integrand
//! `f: R^n → R^K`. Integration happens in whitened coordinates of a
//! *reference* Gaussian `q`: either the prior itself, or the Laplace measure
//! `ν`, in which case the integrand is multiplied by the density ratio
//! `dμ₀/dν`. Centering on `ν` matters when the posterior is much narrower
//! than the prior.
//!
//! * Tensor Gauss–Hermite: `u = m_q + C_q^½ z`, product rule in `z`.
//! * Monte Carlo: `u = m_q + L_q z` with `z` drawn in fixed-size chunks; chunk
//!   `c` uses ChaCha8 seeded from `seed` on stream `c`, so results do not
//!   depend on the number of worker threads. `LAPLACE_CERT_THREADS` caps the
//!   worker count.
//! * Adaptive Gauss–Kronrod (one dimension only): globally adaptive G7/K15
//!   bisection on a truncated whitened line, for integrands with kinks.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gaussian::GaussianMeasure;
use crate::{Error, Result};

/// Environment variable capping the Monte Carlo worker count.
pub const THREADS_ENV: &str = "LAPLACE_CERT_THREADS";

/// Samples per Monte Carlo chunk (one RNG stream per chunk).
const MC_CHUNK: usize = 16_384;

/// Largest tensor grid the Gauss–Hermite engine will evaluate.
const MAX_GRID_POINTS: usize = 50_000_000;

/// Half-width of the truncated whitened line used by the adaptive engine.
const ADAPTIVE_HALF_WIDTH: f64 = 38.0;
const ADAPTIVE_MAX_INTERVALS: usize = 20_000;
const ADAPTIVE_ABS_TOL: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EngineKind {
    /// Tensor Gauss–Hermite with `order` nodes per axis.
    GaussHermite { order: usize },
    /// Seeded Monte Carlo with `samples` draws.
    MonteCarlo { samples: usize, seed: u64 },
    /// One-dimensional adaptive Gauss–Kronrod to relative tolerance `rel_tol`.
    Adaptive { rel_tol: f64 },
}

/// Reference Gaussian in whose whitened coordinates the engine integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    #[default]
    Prior,
    Laplace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationEngine {
    #[serde(flatten)]
    pub kind: EngineKind,
    pub centering: Centering,
}

/// An estimate of `∫ f dμ₀` together with the covariance of the estimator
/// (zero for deterministic rules).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<const K: usize> {
    pub value: [f64; K],
    pub covariance: [[f64; K]; K],
    pub evaluations: usize,
}

impl<const K: usize> Estimate<K> {
    fn exact(value: [f64; K], evaluations: usize) -> Self {
        Self {
            value,
            covariance: [[0.0; K]; K],
            evaluations,
        }
    }

    pub fn std_error(&self, k: usize) -> f64 {
        self.covariance[k][k].max(0.0).sqrt()
    }

    pub fn is_stochastic(&self) -> bool {
        self.covariance.iter().flatten().any(|&c| c != 0.0)
    }
}

impl IntegrationEngine {
    pub fn gauss_hermite(order: usize) -> Self {
        Self {
            kind: EngineKind::GaussHermite { order },
            centering: Centering::Prior,
        }
    }

    pub fn monte_carlo(samples: usize, seed: u64) -> Self {
        Self {
            kind: EngineKind::MonteCarlo { samples, seed },
            centering: Centering::Prior,
        }
    }

    pub fn adaptive(rel_tol: f64) -> Self {
        Self {
            kind: EngineKind::Adaptive { rel_tol },
            centering: Centering::Prior,
        }
    }

    pub fn with_centering(mut self, centering: Centering) -> Self {
        self.centering = centering;
        self
    }

    /// Default engine by dimension: 96-node Gauss–Hermite in 1D, 48 nodes
    /// per axis in 2–3D, and 10⁶ seeded Monte Carlo samples beyond.
    pub fn default_for_dim(n: usize) -> Self {
        match n {
            0 | 1 => Self::gauss_hermite(96),
            2 | 3 => Self::gauss_hermite(48),
            _ => Self::monte_carlo(1_000_000, 0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            EngineKind::GaussHermite { order } if order == 0 => {
                Err(Error::Engine("Gauss-Hermite order must be positive".into()))
            }
            EngineKind::MonteCarlo { samples, .. } if samples < 2 => {
                Err(Error::Engine("Monte Carlo needs at least two samples".into()))
            }
            EngineKind::Adaptive { rel_tol } if !(rel_tol > 0.0) => {
                Err(Error::Engine("adaptive tolerance must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    /// `∫ f dμ₀`. `laplace` is required when the engine is centred on the
    /// Laplace measure and is otherwise used only to place breakpoints for
    /// the adaptive rule. `parallel` permits concurrent evaluation of `f`.
    pub fn expect<const K: usize, F>(
        &self,
        prior: &GaussianMeasure,
        laplace: Option<&GaussianMeasure>,
        parallel: bool,
        f: F,
    ) -> Result<Estimate<K>>
    where
        F: Fn(&DVector<f64>) -> [f64; K] + Sync,
    {
        self.validate()?;
        let reference = match self.centering {
            Centering::Prior => Reference::prior(prior),
            Centering::Laplace => {
                let nu = laplace.ok_or_else(|| {
                    Error::Engine("Laplace centering requires the Laplace measure".into())
                })?;
                Reference::importance(prior, nu)?
            }
        };
        let est = match self.kind {
            EngineKind::GaussHermite { order } => tensor_gauss_hermite(&reference, order, &f)?,
            EngineKind::MonteCarlo { samples, seed } => {
                monte_carlo(&reference, samples, seed, parallel, &f)
            }
            EngineKind::Adaptive { rel_tol } => adaptive_line(&reference, laplace, rel_tol, &f)?,
        };
        if est.value.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("integral estimate".into()));
        }
        Ok(est)
    }
}

/// The reference Gaussian together with the prior density ratio it needs.
struct Reference<'a> {
    prior: &'a GaussianMeasure,
    q: &'a GaussianMeasure,
    /// Symmetric root of the reference covariance.
    sqrt: DMatrix<f64>,
    importance: bool,
}

impl<'a> Reference<'a> {
    fn prior(prior: &'a GaussianMeasure) -> Self {
        Self {
            prior,
            q: prior,
            sqrt: prior.covariance_sqrt(),
            importance: false,
        }
    }

    fn importance(prior: &'a GaussianMeasure, q: &'a GaussianMeasure) -> Result<Self> {
        if q.dim() != prior.dim() {
            return Err(Error::DimensionMismatch {
                what: "Laplace measure",
                expected: prior.dim(),
                got: q.dim(),
            });
        }
        Ok(Self {
            prior,
            q,
            sqrt: q.covariance_sqrt(),
            importance: true,
        })
    }

    fn dim(&self) -> usize {
        self.q.dim()
    }

    /// `dμ₀/dq` at `u`.
    fn ratio(&self, u: &DVector<f64>) -> f64 {
        if !self.importance {
            return 1.0;
        }
        let lp = self.prior.log_density(u).expect("dimension checked");
        let lq = self.q.log_density(u).expect("dimension checked");
        (lp - lq).exp()
    }

    fn weighted<const K: usize, F>(&self, f: &F, u: &DVector<f64>) -> [f64; K]
    where
        F: Fn(&DVector<f64>) -> [f64; K],
    {
        let mut v = f(u);
        if self.importance {
            let r = self.ratio(u);
            v.iter_mut().for_each(|x| *x *= r);
        }
        v
    }
}

/// Probabilists' Gauss–Hermite rule: nodes `z_i` and weights `w_i` with
/// `Σ w_i p(z_i) = ∫ p dN(0,1)` for polynomials of degree `≤ 2·order − 1`.
///
/// Roots of the physicists' Hermite polynomial start from the eigenvalues
/// of the Jacobi matrix and are polished by Newton's method on the
/// orthonormal three-term recurrence, so small tail weights keep full
/// relative precision. Nodes are returned in increasing order and
/// are exactly antisymmetric.
pub fn gauss_hermite_rule(order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if order == 0 {
        return Err(Error::Engine("Gauss-Hermite order must be positive".into()));
    }
    let n = order;
    let pim4 = PI.powf(-0.25);
    let half = n.div_ceil(2);
    let nf = n as f64;
    // Starting values: eigenvalues of the symmetric Jacobi matrix
    // (Golub–Welsch), accurate to rounding relative to its norm.
    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i.abs_diff(j) == 1 {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let mut guesses: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
    guesses.sort_by(|a, b| b.total_cmp(a));
    let mut x = vec![0.0f64; half];
    let mut w = vec![0.0f64; half];
    for i in 0..half {
        // Newton polishing on the orthonormal recurrence; `pp` is the
        // derivative that fixes the weight.
        let mut z = guesses[i];
        let mut pp = 0.0;
        let mut converged = false;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        if !converged || !z.is_finite() {
            return Err(Error::Engine(format!(
                "Gauss-Hermite root {i} of order {n} did not converge"
            )));
        }
        x[i] = z;
        w[i] = 2.0 / (pp * pp);
    }
    if x.windows(2).any(|p| p[0] <= p[1]) {
        return Err(Error::Engine(format!(
            "Gauss-Hermite roots of order {n} are not distinct"
        )));
    }
    // Physicists' (weight e^{-x²}) to probabilists' (standard normal).
    let scale = std::f64::consts::SQRT_2;
    let wnorm = 1.0 / PI.sqrt();
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..half {
        nodes.push(-x[i] * scale);
        weights.push(w[i] * wnorm);
    }
    let upper = n / 2;
    for i in (0..upper).rev() {
        nodes.push(x[i] * scale);
        weights.push(w[i] * wnorm);
    }
    if n % 2 == 1 {
        // The middle root is zero; the iteration returns it up to rounding.
        nodes[half - 1] = 0.0;
    }
    Ok((nodes, weights))
}

fn tensor_gauss_hermite<const K: usize, F>(
    reference: &Reference<'_>,
    order: usize,
    f: &F,
) -> Result<Estimate<K>>
where
    F: Fn(&DVector<f64>) -> [f64; K],
{
    let n = reference.dim();
    let points = (0..n).try_fold(1usize, |acc, _| acc.checked_mul(order));
    match points {
        Some(p) if p <= MAX_GRID_POINTS => {}
        _ => {
            return Err(Error::Engine(format!(
                "tensor grid of order {order} in dimension {n} is too large; use Monte Carlo"
            )))
        }
    }
    let (nodes, weights) = gauss_hermite_rule(order)?;
    let mut idx = vec![0usize; n];
    let mut total = [0.0f64; K];
    let mut evaluations = 0usize;
    let mut z = DVector::zeros(n);
    loop {
        let mut w = 1.0;
        for (d, &i) in idx.iter().enumerate() {
            z[d] = nodes[i];
            w *= weights[i];
        }
        let u = reference.q.mean() + &reference.sqrt * &z;
        let v = reference.weighted(f, &u);
        for (t, x) in total.iter_mut().zip(v) {
            *t += w * x;
        }
        evaluations += 1;
        // Odometer increment over the tensor index.
        let mut d = 0;
        loop {
            if d == n {
                return Ok(Estimate::exact(total, evaluations));
            }
            idx[d] += 1;
            if idx[d] < order {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

fn thread_pool() -> &'static rayon::ThreadPool {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&n| n > 0)
        {
            builder = builder.num_threads(n);
        }
        builder.build().expect("thread pool")
    })
}

struct ChunkSums<const K: usize> {
    sum: [f64; K],
    outer: [[f64; K]; K],
}

fn monte_carlo<const K: usize, F>(
    reference: &Reference<'_>,
    samples: usize,
    seed: u64,
    parallel: bool,
    f: &F,
) -> Estimate<K>
where
    F: Fn(&DVector<f64>) -> [f64; K] + Sync,
{
    let n = reference.dim();
    let chunks = samples.div_ceil(MC_CHUNK);
    let run_chunk = |c: usize| -> ChunkSums<K> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        let len = MC_CHUNK.min(samples - c * MC_CHUNK);
        let mut sums = ChunkSums {
            sum: [0.0; K],
            outer: [[0.0; K]; K],
        };
        let mut z = DVector::zeros(n);
        for _ in 0..len {
            for zi in z.iter_mut() {
                *zi = rng.sample(StandardNormal);
            }
            let u = reference.q.transform_standard(&z);
            let v = reference.weighted(f, &u);
            for a in 0..K {
                sums.sum[a] += v[a];
                for b in 0..K {
                    sums.outer[a][b] += v[a] * v[b];
                }
            }
        }
        sums
    };
    let parts: Vec<ChunkSums<K>> = if parallel {
        thread_pool().install(|| (0..chunks).into_par_iter().map(run_chunk).collect())
    } else {
        (0..chunks).map(run_chunk).collect()
    };
    let mut sum = [0.0; K];
    let mut outer = [[0.0; K]; K];
    for p in &parts {
        for a in 0..K {
            sum[a] += p.sum[a];
            for b in 0..K {
                outer[a][b] += p.outer[a][b];
            }
        }
    }
    let nf = samples as f64;
    let mut value = [0.0; K];
    for a in 0..K {
        value[a] = sum[a] / nf;
    }
    let mut covariance = [[0.0; K]; K];
    for a in 0..K {
        for b in 0..K {
            let sample_cov = (outer[a][b] - nf * value[a] * value[b]) / (nf - 1.0);
            covariance[a][b] = sample_cov / nf;
        }
    }
    Estimate {
        value,
        covariance,
        evaluations: samples,
    }
}

/// Kronrod 15-point abscissae (non-negative half) and weights, with the
/// embedded Gauss 7-point weights on the odd-indexed abscissae.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

struct Panel<const K: usize> {
    a: f64,
    b: f64,
    value: [f64; K],
    error: [f64; K],
    score: f64,
}

impl<const K: usize> PartialEq for Panel<K> {
    fn eq(&self, other: &Self) -> bool {
        self.score.total_cmp(&other.score) == Ordering::Equal
    }
}
impl<const K: usize> Eq for Panel<K> {}
impl<const K: usize> PartialOrd for Panel<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<const K: usize> Ord for Panel<K> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score.total_cmp(&other.score)
    }
}

fn gauss_kronrod<const K: usize, G>(g: &G, a: f64, b: f64) -> ([f64; K], [f64; K])
where
    G: Fn(f64) -> [f64; K],
{
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = g(c);
    let mut kron = [0.0; K];
    let mut gauss = [0.0; K];
    for k in 0..K {
        kron[k] = WGK[7] * fc[k];
        gauss[k] = WG[3] * fc[k];
    }
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = g(c - dx);
        let f2 = g(c + dx);
        for k in 0..K {
            let s = f1[k] + f2[k];
            kron[k] += WGK[j] * s;
            if j % 2 == 1 {
                gauss[k] += WG[j / 2] * s;
            }
        }
    }
    let mut err = [0.0; K];
    for k in 0..K {
        kron[k] *= h;
        gauss[k] *= h;
        err[k] = (kron[k] - gauss[k]).abs();
    }
    (kron, err)
}

fn adaptive_line<const K: usize, F>(
    reference: &Reference<'_>,
    laplace: Option<&GaussianMeasure>,
    rel_tol: f64,
    f: &F,
) -> Result<Estimate<K>>
where
    F: Fn(&DVector<f64>) -> [f64; K],
{
    if reference.dim() != 1 {
        return Err(Error::Engine(
            "the adaptive engine integrates in one dimension only".into(),
        ));
    }
    let m = reference.q.mean()[0];
    let s = reference.sqrt[(0, 0)];
    let norm = 1.0 / (2.0 * PI).sqrt();
    let evaluations = std::cell::Cell::new(0usize);
    let g = |z: f64| -> [f64; K] {
        evaluations.set(evaluations.get() + 1);
        let phi = norm * (-0.5 * z * z).exp();
        let u = DVector::from_element(1, m + s * z);
        let mut v = reference.weighted(f, &u);
        v.iter_mut().for_each(|x| *x *= phi);
        v
    };

    let mut breaks: Vec<f64> = vec![0.0];
    for k in [0.25, 0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0] {
        breaks.push(k);
        breaks.push(-k);
    }
    if let Some(nu) = laplace {
        let mu = nu.mean()[0];
        let sd = nu.covariance()[(0, 0)].sqrt();
        for k in [0.0, 0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0] {
            for sign in [-1.0, 1.0] {
                breaks.push((mu + sign * k * sd - m) / s);
            }
        }
    }
    breaks.push(-ADAPTIVE_HALF_WIDTH);
    breaks.push(ADAPTIVE_HALF_WIDTH);
    breaks.retain(|z| z.is_finite() && z.abs() <= ADAPTIVE_HALF_WIDTH);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let mut heap = BinaryHeap::new();
    let mut total = [0.0; K];
    let mut total_err = [0.0; K];
    for win in breaks.windows(2) {
        let (value, error) = gauss_kronrod(&g, win[0], win[1]);
        for k in 0..K {
            total[k] += value[k];
            total_err[k] += error[k];
        }
        heap.push(Panel {
            a: win[0],
            b: win[1],
            value,
            error,
            score: 0.0,
        });
    }
    let score = |error: &[f64; K], total: &[f64; K]| -> f64 {
        (0..K)
            .map(|k| error[k] / (rel_tol * total[k].abs()).max(ADAPTIVE_ABS_TOL))
            .fold(0.0, f64::max)
    };
    heap = heap
        .into_iter()
        .map(|mut p| {
            p.score = score(&p.error, &total);
            p
        })
        .collect();

    let converged = |total: &[f64; K], err: &[f64; K]| {
        (0..K).all(|k| err[k] <= (rel_tol * total[k].abs()).max(ADAPTIVE_ABS_TOL))
    };
    while !converged(&total, &total_err) {
        if heap.len() >= ADAPTIVE_MAX_INTERVALS {
            return Err(Error::Engine(format!(
                "adaptive quadrature did not reach relative tolerance {rel_tol:e}"
            )));
        }
        let worst = heap.pop().expect("non-empty panel set");
        let mid = 0.5 * (worst.a + worst.b);
        let (lv, le) = gauss_kronrod(&g, worst.a, mid);
        let (rv, re) = gauss_kronrod(&g, mid, worst.b);
        for k in 0..K {
            total[k] += lv[k] + rv[k] - worst.value[k];
            total_err[k] += le[k] + re[k] - worst.error[k];
        }
        for (a, b, value, error) in [(worst.a, mid, lv, le), (mid, worst.b, rv, re)] {
            heap.push(Panel {
                a,
                b,
                value,
                error,
                score: score(&error, &total),
            });
        }
    }
    // Re-sum to shed accumulated update rounding.
    let mut value = [0.0; K];
    for p in heap.iter() {
        for k in 0..K {
            value[k] += p.value[k];
        }
    }
    Ok(Estimate::exact(value, evaluations.get()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn double_factorial(k: u32) -> f64 {
        (1..=k).rev().step_by(2).map(f64::from).product()
    }

    #[test]
    fn gauss_hermite_reproduces_normal_moments() {
        for order in [1usize, 2, 5, 20, 48, 64, 96] {
            let (z, w) = gauss_hermite_rule(order).unwrap();
            for k in 0..(2 * order as u32) {
                let got: f64 = z.iter().zip(&w).map(|(x, w)| w * x.powi(k as i32)).sum();
                let exact = if k % 2 == 1 { 0.0 } else { double_factorial(k.saturating_sub(1)) };
                if k % 2 == 1 {
                    // Antisymmetric nodes make odd moments vanish to rounding.
                    let scale: f64 = z.iter().zip(&w).map(|(x, w)| w * x.abs().powi(k as i32)).sum();
                    assert!(got.abs() <= 1e-12 * scale.max(1.0), "order {order} k {k}: {got}");
                } else {
                    assert!(
                        (got - exact).abs() <= 1e-12 * exact,
                        "order {order} k {k}: {got} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn high_orders_stay_accurate() {
        for order in [150usize, 200, 256, 400] {
            let (z, w) = gauss_hermite_rule(order).unwrap();
            assert!(z.windows(2).all(|p| p[0] < p[1]));
            for k in (0..=40u32).step_by(2) {
                let got: f64 = z.iter().zip(&w).map(|(x, w)| w * x.powi(k as i32)).sum();
                let exact = double_factorial(k.saturating_sub(1));
                assert!((got - exact).abs() <= 1e-12 * exact, "order {order} k {k}: {got}");
            }
        }
    }

    #[test]
    fn nodes_are_antisymmetric_and_sorted() {
        let (z, _) = gauss_hermite_rule(97).unwrap();
        assert_eq!(z[48], 0.0);
        for i in 0..z.len() {
            assert_eq!(z[i], -z[z.len() - 1 - i]);
        }
        assert!(z.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn tensor_rule_integrates_correlated_quadratic() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.4, 0.4, 0.5]);
        let prior = GaussianMeasure::centered(cov).unwrap();
        let e = IntegrationEngine::gauss_hermite(8)
            .expect(&prior, None, false, |u| [u[0] * u[1], u[0] * u[0]])
            .unwrap();
        assert_relative_eq!(e.value[0], 0.4, max_relative = 1e-13);
        assert_relative_eq!(e.value[1], 2.0, max_relative = 1e-13);
        assert!(!e.is_stochastic());
    }

    #[test]
    fn laplace_centering_matches_prior_centering() {
        let prior = GaussianMeasure::centered(DMatrix::from_element(1, 1, 1.5)).unwrap();
        let nu = GaussianMeasure::new(DVector::from_element(1, 0.4), DMatrix::from_element(1, 1, 0.3))
            .unwrap();
        let f = |u: &DVector<f64>| [(-0.5 * (u[0] - 0.5).powi(2) / 0.2).exp()];
        let a = IntegrationEngine::gauss_hermite(64).expect(&prior, None, false, f).unwrap();
        let b = IntegrationEngine::gauss_hermite(64)
            .with_centering(Centering::Laplace)
            .expect(&prior, Some(&nu), false, f)
            .unwrap();
        // ∫ N(u; 0, 1.5) exp(−(u − 0.5)²/0.4) du in closed form.
        let exact = (0.2f64 / 1.7).sqrt() * (-0.25f64 / 3.4).exp();
        assert_relative_eq!(b.value[0], exact, max_relative = 1e-12);
        // The sharp integrand costs the prior-centred rule some accuracy.
        assert_relative_eq!(a.value[0], exact, max_relative = 1e-5);
        assert!(IntegrationEngine::gauss_hermite(4)
            .with_centering(Centering::Laplace)
            .expect(&prior, None, false, f)
            .is_err());
    }

    #[test]
    fn monte_carlo_is_independent_of_parallelism() {
        let prior = GaussianMeasure::centered(DMatrix::from_element(1, 1, 2.0)).unwrap();
        let engine = IntegrationEngine::monte_carlo(50_001, 9);
        let f = |u: &DVector<f64>| [u[0] * u[0], u[0].cos()];
        let a = engine.expect(&prior, None, true, f).unwrap();
        let b = engine.expect(&prior, None, false, f).unwrap();
        assert_eq!(a, b);
        assert!((a.value[0] - 2.0).abs() < 4.0 * a.std_error(0));
        assert!(a.is_stochastic());
    }

    #[test]
    fn monte_carlo_standard_error_covers_truth() {
        let prior = GaussianMeasure::standard(2);
        let e = IntegrationEngine::monte_carlo(200_000, 4)
            .expect(&prior, None, true, |u| [(0.3 * u[0] - 0.2 * u[1]).exp()])
            .unwrap();
        let exact = (0.5 * (0.09 + 0.04_f64)).exp();
        assert!((e.value[0] - exact).abs() < 4.0 * e.std_error(0));
    }

    #[test]
    fn adaptive_handles_kinks() {
        let prior = GaussianMeasure::standard(1);
        // E|u| = √(2/π); E min(u², 1) has kinks at ±1.
        let e = IntegrationEngine::adaptive(1e-12)
            .expect(&prior, None, false, |u| [u[0].abs(), (u[0] * u[0]).min(1.0)])
            .unwrap();
        assert_relative_eq!(e.value[0], (2.0 / PI).sqrt(), max_relative = 1e-11);
        // ∫_{|u|<1} u² φ + P(|u| ≥ 1) = (Φ(1) − Φ(-1)) − 2φ(1) + P(|u|≥1)
        let phi1 = (-0.5f64).exp() / (2.0 * PI).sqrt();
        let expected = 1.0 - 2.0 * phi1;
        assert_relative_eq!(e.value[1], expected, max_relative = 1e-11);
    }

    #[test]
    fn adaptive_rejects_multidimensional_priors() {
        let prior = GaussianMeasure::standard(2);
        assert!(IntegrationEngine::adaptive(1e-8)
            .expect(&prior, None, false, |_| [1.0])
            .is_err());
    }

    #[test]
    fn oversized_grids_are_refused() {
        let prior = GaussianMeasure::standard(6);
        assert!(IntegrationEngine::gauss_hermite(48)
            .expect(&prior, None, false, |_| [1.0])
            .is_err());
    }
}
