//! Posterior summaries: the MAP tree, per-leaf survival curves with
//! credible bands from the Laplace Gaussian, per-subject prediction, and a
//! Kaplan-Meier baseline with Greenwood bands.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::data::{BinGrid, NormalizedDataset};
use crate::node_model::{LeafFit, OUKernel, TridiagonalPrecision};
use crate::sampler::Sample;
use crate::tree::{Tree, TreeError};
use crate::tridiag;

#[derive(Debug, Error)]
pub enum PosteriorError {
    #[error("empty sample stream")]
    EmptyStream,
    #[error("need at least one posterior draw")]
    ZeroDraws,
    #[error("level must lie strictly between 0 and 1, got {0}")]
    BadLevel(f64),
    #[error("curve invariant violated: {0}")]
    CurveInvariant(String),
    #[error(transparent)]
    Routing(#[from] TreeError),
    #[error("posterior factorization failed: {0}")]
    Factorization(#[from] tridiag::TridiagError),
    #[error("dataset has no observations")]
    EmptyData,
    #[error("no fit available for leaf {0}")]
    MissingLeafFit(u32),
}

/// Survival curve on the bin-endpoint grid with pointwise credible bands.
/// Times are in whatever unit the constructor was given (normalized for
/// leaf curves, raw for predictions).
#[derive(Debug, Clone)]
pub struct SurvivalCurve {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub draws: usize,
}

impl SurvivalCurve {
    /// Validates the type invariants; every constructor goes through here.
    fn checked(self) -> Result<Self, PosteriorError> {
        if self.mean.first().map(|&s| (s - 1.0).abs() > 1e-12) != Some(false) {
            return Err(PosteriorError::CurveInvariant("S(0) must be 1".into()));
        }
        for w in self.mean.windows(2) {
            if w[1] > w[0] + 1e-12 {
                return Err(PosteriorError::CurveInvariant(
                    "mean survival must be nonincreasing".into(),
                ));
            }
        }
        for i in 0..self.mean.len() {
            let (m, l, u) = (self.mean[i], self.lower[i], self.upper[i]);
            for v in [m, l, u] {
                if !(0.0..=1.0 + 1e-12).contains(&v) {
                    return Err(PosteriorError::CurveInvariant(format!(
                        "value {v} outside [0,1]"
                    )));
                }
            }
            if l > m + 1e-12 || u < m - 1e-12 {
                return Err(PosteriorError::CurveInvariant(format!(
                    "band [{l}, {u}] does not bracket mean {m}"
                )));
            }
        }
        Ok(self)
    }

    /// Rescales the time axis (normalized -> raw units).
    pub fn scaled_times(mut self, scale: f64) -> Self {
        for t in &mut self.times {
            *t *= scale;
        }
        self
    }
}

/// The retained sample with the highest log posterior; ties go to the
/// earliest occurrence.
pub fn map_tree(samples: &[Sample]) -> Result<&Sample, PosteriorError> {
    let mut best: Option<&Sample> = None;
    for s in samples {
        let better = match best {
            None => true,
            Some(b) => s.log_posterior() > b.log_posterior(),
        };
        if better {
            best = Some(s);
        }
    }
    best.ok_or(PosteriorError::EmptyStream)
}

/// Draws survival curves for one leaf from the Laplace Gaussian
/// N(f_hat, (D + Sigma^{-1})^{-1}), mapping each log-hazard draw to
/// S(s_k) = exp(-sum_{g<=k} exp(f_g) * width) over the leaf's active bins.
/// Returns the pointwise mean with level-sized equal-tail bands (widened,
/// when needed, to bracket the mean).
pub fn leaf_survival(
    fit: &LeafFit,
    kernel: &OUKernel,
    grid: &BinGrid,
    n_draws: usize,
    level: f64,
    rng: &mut ChaCha8Rng,
) -> Result<SurvivalCurve, PosteriorError> {
    if n_draws == 0 {
        return Err(PosteriorError::ZeroDraws);
    }
    if !(0.0 < level && level < 1.0) {
        return Err(PosteriorError::BadLevel(level));
    }
    let dim = fit.f_hat.len();
    let prec = TridiagonalPrecision::new(kernel, dim);
    let mut hess_diag = prec.diag.clone();
    for k in 0..dim {
        hess_diag[k] += fit.d_diag[k];
    }
    let (ld, ls) = tridiag::cholesky(&hess_diag, &prec.off)?;

    let width = grid.width();
    // survival[j][k] = S at endpoint s_{k+1} for draw j.
    let mut survival = vec![vec![0.0f64; dim]; n_draws];
    let mut z = vec![0.0f64; dim];
    for row in survival.iter_mut() {
        for zk in z.iter_mut() {
            *zk = rng.sample(StandardNormal);
        }
        let noise = tridiag::solve_chol_transpose(&ld, &ls, &z);
        let mut cum = 0.0;
        for k in 0..dim {
            let f = fit.f_hat[k] + noise[k];
            cum += f.exp() * width;
            row[k] = (-cum).exp();
        }
    }

    let mut times = Vec::with_capacity(dim + 1);
    let mut mean = Vec::with_capacity(dim + 1);
    let mut lower = Vec::with_capacity(dim + 1);
    let mut upper = Vec::with_capacity(dim + 1);
    times.push(0.0);
    mean.push(1.0);
    lower.push(1.0);
    upper.push(1.0);
    let alpha = 1.0 - level;
    let mut column = vec![0.0f64; n_draws];
    for k in 0..dim {
        times.push(grid.endpoint(k + 1));
        for (j, row) in survival.iter().enumerate() {
            column[j] = row[k];
        }
        let m = column.iter().sum::<f64>() / n_draws as f64;
        column.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let lo = empirical_quantile(&column, alpha / 2.0);
        let hi = empirical_quantile(&column, 1.0 - alpha / 2.0);
        mean.push(m);
        lower.push(lo.min(m));
        upper.push(hi.max(m));
    }
    SurvivalCurve {
        times,
        mean,
        lower,
        upper,
        draws: n_draws,
    }
    .checked()
}

fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let idx = ((q * n as f64).ceil() as usize).clamp(1, n) - 1;
    sorted[idx]
}

/// Routes a covariate row through a fitted tree and returns that leaf's
/// survival curve in raw time units.
pub fn predict(
    tree: &Tree,
    fits: &[(u32, &LeafFit)],
    data: &NormalizedDataset,
    row: usize,
    grid: &BinGrid,
    n_draws: usize,
    level: f64,
    rng: &mut ChaCha8Rng,
) -> Result<SurvivalCurve, PosteriorError> {
    let leaf = tree.route(&data.dataset, row)?;
    let (_, fit) = fits
        .iter()
        .find(|(id, _)| *id == leaf)
        .ok_or(PosteriorError::MissingLeafFit(leaf))?;
    let kernel = fit.kernel(grid.width());
    let curve = leaf_survival(fit, &kernel, grid, n_draws, level, rng)?;
    Ok(curve.scaled_times(data.time_scale))
}

/// Kaplan-Meier product-limit estimate with Greenwood-variance bands on
/// the log-survival scale, clipped to [0,1].
#[derive(Debug, Clone)]
pub struct KMEstimate {
    /// Distinct event times, ascending.
    pub times: Vec<f64>,
    /// S(t) immediately after each event time.
    pub survival: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Risk-set size at each event time.
    pub at_risk: Vec<usize>,
    /// Event count at each event time.
    pub events: Vec<usize>,
}

impl KMEstimate {
    /// Step-function value at time t (right-continuous).
    pub fn survival_at(&self, t: f64) -> f64 {
        let mut s = 1.0;
        for (i, &ti) in self.times.iter().enumerate() {
            if ti <= t {
                s = self.survival[i];
            } else {
                break;
            }
        }
        s
    }
}

/// Product-limit estimator. At each distinct event time with d events and
/// r at risk, S multiplies by (1 - d/r); censored observations leave the
/// risk set without contributing a factor.
pub fn kaplan_meier(
    times: &[f64],
    status: &[bool],
    level: f64,
) -> Result<KMEstimate, PosteriorError> {
    if times.is_empty() {
        return Err(PosteriorError::EmptyData);
    }
    if !(0.0 < level && level < 1.0) {
        return Err(PosteriorError::BadLevel(level));
    }
    let n = times.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[a].partial_cmp(&times[b]).unwrap());
    let z = normal_quantile(1.0 - (1.0 - level) / 2.0);

    let mut out_times = Vec::new();
    let mut survival = Vec::new();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut at_risk_v = Vec::new();
    let mut events_v = Vec::new();

    let mut s = 1.0f64;
    let mut greenwood = 0.0f64; // sum d / (r (r - d)); variance of log S
    let mut i = 0;
    let mut at_risk = n;
    while i < n {
        let t = times[order[i]];
        let mut d = 0usize;
        let mut c = 0usize;
        while i < n && times[order[i]] == t {
            if status[order[i]] {
                d += 1;
            } else {
                c += 1;
            }
            i += 1;
        }
        if d > 0 {
            s *= 1.0 - d as f64 / at_risk as f64;
            if at_risk > d {
                greenwood += d as f64 / (at_risk as f64 * (at_risk - d) as f64);
            } else {
                greenwood = f64::INFINITY;
            }
            let (lo, hi) = if s > 0.0 && greenwood.is_finite() {
                let half = z * greenwood.sqrt();
                (
                    (s * (-half).exp()).clamp(0.0, 1.0),
                    (s * half.exp()).clamp(0.0, 1.0),
                )
            } else {
                (s.clamp(0.0, 1.0), s.clamp(0.0, 1.0))
            };
            out_times.push(t);
            survival.push(s);
            lower.push(lo);
            upper.push(hi);
            at_risk_v.push(at_risk);
            events_v.push(d);
        }
        at_risk -= d + c;
    }
    Ok(KMEstimate {
        times: out_times,
        survival,
        lower,
        upper,
        at_risk: at_risk_v,
        events: events_v,
    })
}

/// Inverse standard-normal CDF (Acklam's rational approximation, absolute
/// error below 1.2e-9 on (0,1)).
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "p must lie in (0,1)");
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -normal_quantile(1.0 - p)
    }
}
