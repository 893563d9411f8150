//! Deterministic Nelder-Mead simplex minimizer for low-dimensional
//! hyperparameter search. No randomness, no restarts: identical inputs give
//! identical output, which keeps the MCMC reproducible.

#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Minimizes `f` starting from `x0` with an axis-aligned initial simplex of
/// edge `step`. Stops when the simplex objective spread drops below
/// `spread_tol` or after `max_evals` evaluations. Non-finite objective
/// values are treated as +inf.
pub fn nelder_mead<F>(
    mut f: F,
    x0: &[f64],
    step: f64,
    spread_tol: f64,
    max_evals: usize,
) -> NelderMeadResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    assert!(n >= 1, "need at least one dimension");
    let clean = |v: f64| if v.is_nan() { f64::INFINITY } else { v };
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        clean(f(x))
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let fx0 = eval(x0, &mut evals);
    simplex.push((x0.to_vec(), fx0));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        let fx = eval(&x, &mut evals);
        simplex.push((x, fx));
    }

    const ALPHA: f64 = 1.0; // reflection
    const GAMMA: f64 = 2.0; // expansion
    const RHO: f64 = 0.5; // contraction
    const SIGMA: f64 = 0.5; // shrink

    let mut converged = false;
    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if (worst - best).abs() < spread_tol {
            converged = true;
            break;
        }

        // Centroid of all but the worst point.
        let mut centroid = vec![0.0; n];
        for (x, _) in simplex.iter().take(n) {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / n as f64;
            }
        }

        let reflect: Vec<f64> = centroid
            .iter()
            .zip(&simplex[n].0)
            .map(|(c, w)| c + ALPHA * (c - w))
            .collect();
        let f_reflect = eval(&reflect, &mut evals);

        if f_reflect < simplex[0].1 {
            let expand: Vec<f64> = centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + GAMMA * ALPHA * (c - w))
                .collect();
            let f_expand = eval(&expand, &mut evals);
            simplex[n] = if f_expand < f_reflect {
                (expand, f_expand)
            } else {
                (reflect, f_reflect)
            };
            continue;
        }
        if f_reflect < simplex[n - 1].1 {
            simplex[n] = (reflect, f_reflect);
            continue;
        }

        // Contraction, outside or inside of the worst point.
        let (contract, f_contract) = if f_reflect < simplex[n].1 {
            let x: Vec<f64> = centroid
                .iter()
                .zip(&reflect)
                .map(|(c, r)| c + RHO * (r - c))
                .collect();
            let fx = eval(&x, &mut evals);
            (x, fx)
        } else {
            let x: Vec<f64> = centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + RHO * (w - c))
                .collect();
            let fx = eval(&x, &mut evals);
            (x, fx)
        };
        if f_contract < simplex[n].1.min(f_reflect) {
            simplex[n] = (contract, f_contract);
            continue;
        }

        // Shrink toward the best vertex.
        let best_x = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = best_x
                .iter()
                .zip(&vertex.0)
                .map(|(b, v)| b + SIGMA * (v - b))
                .collect();
            let fx = eval(&x, &mut evals);
            *vertex = (x, fx);
            if evals >= max_evals {
                break;
            }
        }
    }

    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    NelderMeadResult {
        x: simplex[0].0.clone(),
        fx: simplex[0].1,
        evals,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_quadratic() {
        let r = nelder_mead(
            |x| (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.0).powi(2),
            &[0.0, 0.0],
            0.5,
            1e-12,
            500,
        );
        assert!(r.converged);
        assert!((r.x[0] - 3.0).abs() < 1e-4, "{:?}", r.x);
        assert!((r.x[1] + 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn minimizes_rosenbrock() {
        let r = nelder_mead(
            |x| {
                let a = 1.0 - x[0];
                let b = x[1] - x[0] * x[0];
                a * a + 100.0 * b * b
            },
            &[-1.2, 1.0],
            0.5,
            1e-14,
            2000,
        );
        assert!((r.x[0] - 1.0).abs() < 1e-3);
        assert!((r.x[1] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn deterministic() {
        let run = || {
            nelder_mead(
                |x| x[0].sin() + (x[1] * 0.5).cos() + 0.01 * x[0] * x[0],
                &[1.0, 2.0],
                0.3,
                1e-10,
                300,
            )
        };
        let a = run();
        let b = run();
        assert_eq!(a.x, b.x);
        assert_eq!(a.evals, b.evals);
    }

    #[test]
    fn handles_infinite_regions() {
        // Objective is +inf left of x = 0; minimum sits at x = 1.
        let r = nelder_mead(
            |x| {
                if x[0] <= 0.0 {
                    f64::INFINITY
                } else {
                    (x[0].ln()).powi(2)
                }
            },
            &[3.0],
            1.0,
            1e-12,
            400,
        );
        assert!((r.x[0] - 1.0).abs() < 1e-3);
    }
}
