//! Per-leaf hazard model: a piecewise-exponential likelihood on the bin
//! grid under an exponentiated zero-mean Gaussian process with the
//! exponential (Ornstein-Uhlenbeck) kernel C(s,t) = tau^2 exp(-|s-t|/l).
//!
//! On a regular grid the prior precision is tridiagonal in closed form, so
//! the Newton mode search, the Laplace log marginal, and posterior draws
//! all run in O(K') per leaf. Kernel hyperparameters are set per leaf by
//! empirical Bayes under half-t(1) hyperpriors.

use std::collections::HashMap;
use std::sync::Arc;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::NodeStats;
use crate::optim::nelder_mead;
use crate::tridiag;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("dimension mismatch: f has {f}, stats has {stats}, precision has {prec}")]
    DimensionMismatch { f: usize, stats: usize, prec: usize },
    #[error("kernel parameters out of range: tau={tau}, length={length}")]
    BadKernel { tau: f64, length: f64 },
    #[error(
        "Newton did not converge in {iters} iterations (grad norm {grad_norm:.3e}, g0 {g0:.6e})"
    )]
    NewtonDivergence {
        iters: usize,
        grad_norm: f64,
        g0: f64,
    },
    #[error("hyperparameter search failed: {0}")]
    Optimizer(String),
    #[error("precision factorization failed: {0}")]
    Factorization(#[from] tridiag::TridiagError),
}

/// Exponential-kernel hyperparameters for one leaf. `rho` is the
/// correlation between adjacent grid midpoints, exp(-width/length).
#[derive(Debug, Clone, Copy)]
pub struct OUKernel {
    pub tau: f64,
    pub length: f64,
    pub rho: f64,
}

impl OUKernel {
    pub fn new(tau: f64, length: f64, bin_width: f64) -> Result<Self, FitError> {
        if !(tau > 0.0) || !(length > 0.0) || !tau.is_finite() || !length.is_finite() {
            return Err(FitError::BadKernel { tau, length });
        }
        let rho = (-bin_width / length).exp();
        if !(rho < 1.0) {
            // length so large the grid correlation rounds to 1.
            return Err(FitError::BadKernel { tau, length });
        }
        Ok(Self { tau, length, rho })
    }

    /// Dense prior covariance entry between midpoints i and j.
    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        self.tau * self.tau * self.rho.powi((i as i32 - j as i32).abs())
    }

    /// Closed-form log|Sigma| on a K'-point regular grid.
    pub fn log_det_sigma(&self, dim: usize) -> f64 {
        2.0 * dim as f64 * self.tau.ln() + (dim as f64 - 1.0) * (1.0 - self.rho * self.rho).ln()
    }
}

/// Tridiagonal Sigma^{-1} on the active grid: corners 1, interior 1+rho^2,
/// off-diagonal -rho, all scaled by 1/(tau^2 (1-rho^2)). A single bin
/// reduces to the scalar 1/tau^2.
#[derive(Debug, Clone)]
pub struct TridiagonalPrecision {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl TridiagonalPrecision {
    pub fn new(kernel: &OUKernel, dim: usize) -> Self {
        assert!(dim >= 1);
        let tau2 = kernel.tau * kernel.tau;
        if dim == 1 {
            return Self {
                diag: vec![1.0 / tau2],
                off: vec![],
            };
        }
        let rho = kernel.rho;
        let scale = 1.0 / (tau2 * (1.0 - rho * rho));
        let mut diag = vec![(1.0 + rho * rho) * scale; dim];
        diag[0] = scale;
        diag[dim - 1] = scale;
        Self {
            diag,
            off: vec![-rho * scale; dim - 1],
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }
}

/// Unnormalized log posterior of the latent log-hazard vector:
/// g0(f) = sum_k [n_k f_k - e_k exp(f_k)] - f' Sigma^{-1} f / 2.
pub fn g0(f: &[f64], stats: &NodeStats, prec: &TridiagonalPrecision) -> Result<f64, FitError> {
    if f.len() != stats.dim() || f.len() != prec.dim() {
        return Err(FitError::DimensionMismatch {
            f: f.len(),
            stats: stats.dim(),
            prec: prec.dim(),
        });
    }
    let mut total = 0.0;
    for k in 0..f.len() {
        total += stats.counts[k] as f64 * f[k] - stats.exposures[k] * f[k].exp();
    }
    total -= 0.5 * tridiag::quadratic_form(&prec.diag, &prec.off, f, f);
    Ok(total)
}

/// Gradient of g0: n_k - e_k exp(f_k) - (Sigma^{-1} f)_k.
pub fn g0_gradient(f: &[f64], stats: &NodeStats, prec: &TridiagonalPrecision) -> Vec<f64> {
    let pf = tridiag::multiply(&prec.diag, &prec.off, f);
    (0..f.len())
        .map(|k| stats.counts[k] as f64 - stats.exposures[k] * f[k].exp() - pf[k])
        .collect()
}

const NEWTON_GRAD_TOL: f64 = 1e-8;
const NEWTON_MAX_ITERS: usize = 100;

#[derive(Debug, Clone)]
pub struct NewtonResult {
    pub f_hat: Vec<f64>,
    pub d_diag: Vec<f64>,
    pub iters: usize,
}

/// Newton search for the mode of g0, with step halving so g0 never
/// decreases across accepted iterates. Each step is one SPD tridiagonal
/// solve against the Hessian D + Sigma^{-1}.
pub fn newton_mode(stats: &NodeStats, kernel: &OUKernel) -> Result<NewtonResult, FitError> {
    let dim = stats.dim();
    let prec = TridiagonalPrecision::new(kernel, dim);
    let mut f = vec![0.0; dim];
    let mut g0_cur = g0(&f, stats, &prec)?;
    let mut iters = 0;
    loop {
        let grad = g0_gradient(&f, stats, &prec);
        let grad_norm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if grad_norm <= NEWTON_GRAD_TOL {
            let d_diag: Vec<f64> = (0..dim)
                .map(|k| stats.exposures[k] * f[k].exp())
                .collect();
            return Ok(NewtonResult {
                f_hat: f,
                d_diag,
                iters,
            });
        }
        if iters >= NEWTON_MAX_ITERS {
            return Err(FitError::NewtonDivergence {
                iters,
                grad_norm,
                g0: g0_cur,
            });
        }
        iters += 1;
        let mut hess_diag = prec.diag.clone();
        for k in 0..dim {
            hess_diag[k] += stats.exposures[k] * f[k].exp();
        }
        let step = tridiag::solve_spd(&hess_diag, &prec.off, &grad)?;
        let mut t = 1.0;
        let mut accepted = false;
        // Accept up to a relative rounding slack; near the mode the change
        // in g0 falls below f64 resolution while the gradient still shrinks.
        let slack = 1e-12 * (1.0 + g0_cur.abs());
        for _ in 0..60 {
            let trial: Vec<f64> = f.iter().zip(&step).map(|(a, b)| a + t * b).collect();
            let g0_trial = g0(&trial, stats, &prec)?;
            if g0_trial >= g0_cur - slack {
                f = trial;
                g0_cur = g0_trial;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(FitError::NewtonDivergence {
                iters,
                grad_norm,
                g0: g0_cur,
            });
        }
    }
}

/// Laplace approximation to the log marginal likelihood of the node's data:
/// g0(f_hat) - log|D + Sigma^{-1}|/2 - log|Sigma|/2. The Gaussian-integral
/// (2 pi)^{K'/2} factors cancel exactly.
pub fn laplace_log_marginal(stats: &NodeStats, kernel: &OUKernel) -> Result<f64, FitError> {
    let fit = newton_mode(stats, kernel)?;
    laplace_from_mode(stats, kernel, &fit)
}

fn laplace_from_mode(
    stats: &NodeStats,
    kernel: &OUKernel,
    fit: &NewtonResult,
) -> Result<f64, FitError> {
    let dim = stats.dim();
    let prec = TridiagonalPrecision::new(kernel, dim);
    let g0_hat = g0(&fit.f_hat, stats, &prec)?;
    let mut hess_diag = prec.diag.clone();
    for k in 0..dim {
        hess_diag[k] += fit.d_diag[k];
    }
    let log_det_h = tridiag::log_det_spd(&hess_diag, &prec.off)?;
    Ok(g0_hat - 0.5 * log_det_h - 0.5 * kernel.log_det_sigma(dim))
}

/// Log density of a half-t distribution with one degree of freedom
/// (half-Cauchy) with the given scale, up to nothing: fully normalized on
/// x > 0.
pub fn log_half_t1(x: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let z = x / scale;
    (2.0 / std::f64::consts::PI).ln() - scale.ln() - z.mul_add(z, 1.0).ln()
}

/// Empirical-Bayes settings. The tau scale follows the stated half-t(1)
/// prior with scale 10; the length-scale prior defaults to unit scale on
/// the normalized time axis.
#[derive(Debug, Clone)]
pub struct EbConfig {
    pub tau_prior_scale: f64,
    pub length_prior_scale: f64,
    pub start_tau: f64,
    pub start_length: f64,
    pub simplex_step: f64,
    pub spread_tol: f64,
    pub max_evals: usize,
}

impl Default for EbConfig {
    fn default() -> Self {
        Self {
            tau_prior_scale: 10.0,
            length_prior_scale: 1.0,
            start_tau: 1.0,
            start_length: 0.1,
            simplex_step: 0.5,
            spread_tol: 1e-6,
            max_evals: 200,
        }
    }
}

/// One fitted leaf: the Newton mode of the log-hazard, the likelihood
/// Hessian diagonal, the empirical-Bayes kernel, and the Laplace evidence.
#[derive(Debug, Clone)]
pub struct LeafFit {
    pub f_hat: Vec<f64>,
    pub d_diag: Vec<f64>,
    pub tau_hat: f64,
    pub length_hat: f64,
    pub log_marginal: f64,
    pub newton_iters: usize,
}

impl LeafFit {
    pub fn kernel(&self, bin_width: f64) -> OUKernel {
        OUKernel::new(self.tau_hat, self.length_hat, bin_width).expect("fitted kernel is valid")
    }
}

// Bounds on log tau and log length during the search; outside them the
// marginal is numerically meaningless (rho rounds to 1 or the precision
// overflows).
const LOG_PARAM_BOUND: f64 = 25.0;

/// Optimizes (tau, length) for one node by maximizing the Laplace log
/// marginal plus the half-t(1) hyperprior log densities, searching in
/// (log tau, log length) with Nelder-Mead. Returns the fit at the optimum.
pub fn empirical_bayes(stats: &NodeStats, config: &EbConfig) -> Result<LeafFit, FitError> {
    let width = stats.bin_width;
    let objective = |z: &[f64]| -> f64 {
        if z[0].abs() > LOG_PARAM_BOUND || z[1].abs() > LOG_PARAM_BOUND {
            return f64::INFINITY;
        }
        let tau = z[0].exp();
        let length = z[1].exp();
        let kernel = match OUKernel::new(tau, length, width) {
            Ok(k) => k,
            Err(_) => return f64::INFINITY,
        };
        match laplace_log_marginal(stats, &kernel) {
            Ok(lm) => -(lm
                + log_half_t1(tau, config.tau_prior_scale)
                + log_half_t1(length, config.length_prior_scale)),
            Err(_) => f64::INFINITY,
        }
    };
    let start = [config.start_tau.ln(), config.start_length.ln()];
    let result = nelder_mead(
        objective,
        &start,
        config.simplex_step,
        config.spread_tol,
        config.max_evals,
    );
    if !result.fx.is_finite() {
        return Err(FitError::Optimizer(format!(
            "no finite objective found after {} evaluations",
            result.evals
        )));
    }
    let tau_hat = result.x[0].exp();
    let length_hat = result.x[1].exp();
    let kernel = OUKernel::new(tau_hat, length_hat, width)?;
    let mode = newton_mode(stats, &kernel)?;
    let log_marginal = laplace_from_mode(stats, &kernel, &mode)?;
    Ok(LeafFit {
        f_hat: mode.f_hat,
        d_diag: mode.d_diag,
        tau_hat,
        length_hat,
        log_marginal,
        newton_iters: mode.iters,
    })
}

/// Chain-local cache of leaf fits keyed by the node's observation subset.
/// A node's data fully determines its fit, so grow/prune/change proposals
/// only pay for the leaves they actually alter.
#[derive(Debug, Default)]
pub struct FitCache {
    map: HashMap<[u8; 16], Arc<LeafFit>>,
    cap: usize,
}

impl FitCache {
    pub fn new(cap: usize) -> Self {
        Self {
            map: HashMap::new(),
            cap: cap.max(16),
        }
    }

    /// Cache key for a node's row subset. Rows must be sorted so equal
    /// multisets key identically.
    pub fn key(rows: &[u32]) -> [u8; 16] {
        debug_assert!(rows.windows(2).all(|w| w[0] <= w[1]), "rows must be sorted");
        let mut hasher = Sha256::new();
        for &r in rows {
            hasher.update(r.to_le_bytes());
        }
        let digest = hasher.finalize();
        let mut key = [0u8; 16];
        key.copy_from_slice(&digest[..16]);
        key
    }

    pub fn get(&self, key: &[u8; 16]) -> Option<Arc<LeafFit>> {
        self.map.get(key).cloned()
    }

    pub fn insert(&mut self, key: [u8; 16], fit: Arc<LeafFit>) {
        if self.map.len() >= self.cap {
            self.map.clear();
        }
        self.map.insert(key, fit);
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}
