//! Shared oracles for the integration suites. Everything here is computed
//! independently of the library's fast paths: dense linear algebra goes
//! through nalgebra, integrals through tensor-product Gauss-Hermite
//! quadrature, and tree/proposal spaces through brute-force enumeration.

#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use treed_hazards::data::{NormalizedDataset, SurvivalDataset};
use treed_hazards::sampler::{move_probabilities, SamplerContext};
use treed_hazards::tree::{
    available_rules, log_prior, splittable_variables, RuleKind, SplitRule, Tree, TreePriorParams,
};

/// Gauss-Hermite nodes and weights for integrals against exp(-x^2),
/// computed by Newton iteration on the Hermite recurrence.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0],
            3 => 1.91 * z - 0.91 * nodes[1],
            _ => 2.0 * z - nodes[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            // Evaluate H_n (orthonormal scaling) and its derivative at z.
            let mut p1 = std::f64::consts::PI.powf(-0.25);
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / (j as f64 + 1.0)).sqrt() * p2
                    - (j as f64 / (j as f64 + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = z;
        nodes[n - 1 - i] = -z;
        weights[i] = 2.0 / (pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    (nodes, weights)
}

/// Dense OU covariance on a regular grid: tau^2 rho^{|i-j|}.
pub fn dense_sigma(dim: usize, tau: f64, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |i, j| {
        tau * tau * rho.powi((i as i32 - j as i32).abs())
    })
}

/// Log marginal of the binned hazard likelihood under the OU prior by
/// tensor-product Gauss-Hermite quadrature. Exact up to quadrature error
/// (~1e-10 at 80 nodes for dimensions up to 3).
pub fn quadrature_log_marginal(
    counts: &[f64],
    exposures: &[f64],
    tau: f64,
    rho: f64,
    nodes: usize,
) -> f64 {
    let dim = counts.len();
    let sigma = dense_sigma(dim, tau, rho);
    let chol = sigma.clone().cholesky().expect("sigma is PD");
    let l = chol.l();
    let (x, w) = gauss_hermite(nodes);
    // Integral over N(0, I) via u = sqrt(2) x, weight pi^{-dim/2}.
    let mut idx = vec![0usize; dim];
    let mut max_log = f64::NEG_INFINITY;
    let mut terms: Vec<(f64, f64)> = Vec::with_capacity(nodes.pow(dim as u32));
    loop {
        let mut weight = 1.0;
        let mut u = vec![0.0; dim];
        for (d, &i) in idx.iter().enumerate() {
            weight *= w[i];
            u[d] = std::f64::consts::SQRT_2 * x[i];
        }
        // f = L u.
        let mut log_lik = 0.0;
        for k in 0..dim {
            let mut fk = 0.0;
            for j in 0..=k {
                fk += l[(k, j)] * u[j];
            }
            log_lik += counts[k] * fk - exposures[k] * fk.exp();
        }
        if log_lik > max_log {
            max_log = log_lik;
        }
        terms.push((weight, log_lik));
        // Advance the tensor index.
        let mut d = 0;
        loop {
            idx[d] += 1;
            if idx[d] < nodes {
                break;
            }
            idx[d] = 0;
            d += 1;
            if d == dim {
                let total: f64 = terms
                    .iter()
                    .map(|(wt, ll)| wt * (ll - max_log).exp())
                    .sum();
                return total.ln() + max_log - (dim as f64 / 2.0) * std::f64::consts::PI.ln();
            }
        }
    }
}

/// Independent dense-path Laplace log marginal: Newton on the dense
/// precision with nalgebra solves, then the determinant form with dense
/// slogdet. Checks the library's sparse path end to end.
pub fn dense_laplace_log_marginal(counts: &[f64], exposures: &[f64], tau: f64, rho: f64) -> f64 {
    let dim = counts.len();
    let sigma = dense_sigma(dim, tau, rho);
    let prec = sigma.clone().try_inverse().expect("invertible");
    let mut f = DMatrix::zeros(dim, 1);
    let g0 = |fv: &DMatrix<f64>| -> f64 {
        let mut total = 0.0;
        for k in 0..dim {
            total += counts[k] * fv[(k, 0)] - exposures[k] * fv[(k, 0)].exp();
        }
        total - 0.5 * (fv.transpose() * &prec * fv)[(0, 0)]
    };
    for _ in 0..200 {
        let mut grad = DMatrix::zeros(dim, 1);
        let pf = &prec * &f;
        for k in 0..dim {
            grad[(k, 0)] = counts[k] - exposures[k] * f[(k, 0)].exp() - pf[(k, 0)];
        }
        if (0..dim).map(|k| grad[(k, 0)].abs()).fold(0.0, f64::max) < 1e-11 {
            break;
        }
        let mut hess = prec.clone();
        for k in 0..dim {
            hess[(k, k)] += exposures[k] * f[(k, 0)].exp();
        }
        let step = hess.lu().solve(&grad).expect("solvable");
        let mut t = 1.0;
        let base = g0(&f);
        for _ in 0..60 {
            let trial = &f + &step * t;
            if g0(&trial) >= base {
                f = trial;
                break;
            }
            t *= 0.5;
        }
    }
    let mut hess = prec.clone();
    for k in 0..dim {
        hess[(k, k)] += exposures[k] * f[(k, 0)].exp();
    }
    let log_det_h = hess.lu().determinant().ln();
    let log_det_sigma = sigma.lu().determinant().ln();
    g0(&f) - 0.5 * log_det_h - 0.5 * log_det_sigma
}

/// All trees reachable by repeated grows from the root, deduplicated by
/// canonical encoding. On bounded rule spaces this is the full support of
/// the tree prior.
pub fn enumerate_trees(data: &SurvivalDataset, min_node_size: usize) -> Vec<Tree> {
    let all_rows: Vec<u32> = (0..data.n() as u32).collect();
    let mut seen: BTreeMap<String, Tree> = BTreeMap::new();
    let root = Tree::root();
    let mut frontier = vec![root.clone()];
    seen.insert(root.encode(data), root);
    while let Some(tree) = frontier.pop() {
        for leaf in tree.leaves() {
            let rows = tree.rows_at_node(data, &all_rows, leaf).unwrap();
            for variable in splittable_variables(data, &rows, min_node_size) {
                for kind in available_rules(data, &rows, variable, min_node_size) {
                    let grown = tree
                        .grow(leaf, SplitRule { variable, kind })
                        .unwrap();
                    let key = grown.encode(data);
                    if !seen.contains_key(&key) {
                        seen.insert(key, grown.clone());
                        frontier.push(grown);
                    }
                }
            }
        }
    }
    seen.into_values().collect()
}

/// Exhaustive proposal distribution from one tree position: every possible
/// draw of the four moves with its probability, accumulated by the
/// proposed tree's canonical encoding. Probabilities include proposals
/// that violate the minimum node size (they are proposed, then rejected),
/// so the total is exactly 1 whenever any move is available.
pub fn enumerate_proposals(
    ctx: &SamplerContext,
    tree: &Tree,
    data: &NormalizedDataset,
    min_node_size: usize,
    p_adjacent: f64,
) -> BTreeMap<String, f64> {
    let dataset = &data.dataset;
    let all_rows: Vec<u32> = (0..dataset.n() as u32).collect();
    let leaf_rows = tree.partition_rows(dataset, &all_rows).unwrap();
    let probs = move_probabilities(ctx, tree, &leaf_rows);
    let mut out: BTreeMap<String, f64> = BTreeMap::new();
    let mut add = |t: &Tree, p: f64| {
        if p > 0.0 {
            *out.entry(t.encode(dataset)).or_insert(0.0) += p;
        }
    };

    // Grow.
    if probs[0] > 0.0 {
        let growable: Vec<u32> = leaf_rows
            .iter()
            .filter(|(_, rows)| !splittable_variables(dataset, rows, min_node_size).is_empty())
            .map(|(id, _)| *id)
            .collect();
        let n_g = growable.len() as f64;
        for leaf in growable {
            let rows = &leaf_rows.iter().find(|(id, _)| *id == leaf).unwrap().1;
            let vars = splittable_variables(dataset, rows, min_node_size);
            let m_i = vars.len() as f64;
            for variable in vars {
                let rules = available_rules(dataset, rows, variable, min_node_size);
                let m_star = rules.len() as f64;
                for kind in rules {
                    let grown = tree.grow(leaf, SplitRule { variable, kind }).unwrap();
                    add(&grown, probs[0] / (n_g * m_i * m_star));
                }
            }
        }
    }

    // Prune.
    if probs[1] > 0.0 {
        let prunable = tree.prunable_nodes();
        let n_d = prunable.len() as f64;
        for node in prunable {
            let (pruned, _) = tree.prune(node).unwrap();
            add(&pruned, probs[1] / n_d);
        }
    }

    // Change.
    if probs[2] > 0.0 {
        let internal = tree.internal_nodes();
        let n_c = internal.len() as f64;
        for node in internal {
            let rows = tree.rows_at_node(dataset, &all_rows, node).unwrap();
            let old = tree.node(node).rule.clone().unwrap();
            let continuous = matches!(old.kind, RuleKind::Threshold(_));
            let p_node = probs[2] / n_c;
            if continuous {
                let r = match old.kind {
                    RuleKind::Threshold(v) => v,
                    _ => unreachable!(),
                };
                let thresholds: Vec<f64> =
                    available_rules(dataset, &rows, old.variable, min_node_size)
                        .into_iter()
                        .map(|k| match k {
                            RuleKind::Threshold(v) => v,
                            _ => unreachable!(),
                        })
                        .collect();
                let down = thresholds
                    .iter()
                    .copied()
                    .filter(|v| *v < r)
                    .fold(f64::NEG_INFINITY, f64::max);
                let up = thresholds
                    .iter()
                    .copied()
                    .filter(|v| *v > r)
                    .fold(f64::INFINITY, f64::min);
                let mut neighbors = Vec::new();
                if down.is_finite() {
                    neighbors.push(down);
                }
                if up.is_finite() {
                    neighbors.push(up);
                }
                if neighbors.is_empty() {
                    // Adjacent branch proposes the identity.
                    add(tree, p_node * p_adjacent);
                } else {
                    for v in &neighbors {
                        let t = tree
                            .with_rule(
                                node,
                                SplitRule {
                                    variable: old.variable,
                                    kind: RuleKind::Threshold(*v),
                                },
                            )
                            .unwrap();
                        add(&t, p_node * p_adjacent / neighbors.len() as f64);
                    }
                }
            }
            let p_prior = if continuous {
                p_node * (1.0 - p_adjacent)
            } else {
                p_node
            };
            let vars = splittable_variables(dataset, &rows, min_node_size);
            let m = vars.len() as f64;
            for variable in vars {
                let rules = available_rules(dataset, &rows, variable, min_node_size);
                let m_star = rules.len() as f64;
                for kind in rules {
                    let t = tree
                        .with_rule(node, SplitRule { variable, kind })
                        .unwrap();
                    add(&t, p_prior / (m * m_star));
                }
            }
        }
    }

    // Swap.
    if probs[3] > 0.0 {
        let pairs = tree.swap_pairs();
        let n_s = pairs.len() as f64;
        for (parent, child) in pairs {
            let (l, r) = tree.node(parent).children.unwrap();
            let sibling = if child == l { r } else { l };
            let child_rule = tree.node(child).rule.clone().unwrap();
            let parent_rule = tree.node(parent).rule.clone().unwrap();
            let double = !tree.node(sibling).is_leaf()
                && tree.node(sibling).rule.as_ref() == Some(&child_rule);
            let new_tree = if double {
                tree.with_rule(parent, child_rule.clone())
                    .unwrap()
                    .with_rule(child, parent_rule.clone())
                    .unwrap()
                    .with_rule(sibling, parent_rule.clone())
                    .unwrap()
            } else if parent_rule.variable == child_rule.variable
                && matches!(parent_rule.kind, RuleKind::Threshold(_))
                && matches!(child_rule.kind, RuleKind::Threshold(_))
            {
                tree.rotate(parent, child).unwrap()
            } else {
                tree.swap_rules(parent, child).unwrap()
            };
            add(&new_tree, probs[3] / n_s);
        }
    }

    out
}

/// Rand index between two row labelings: the fraction of row pairs on
/// which the two partitions agree (same-cluster vs different-cluster).
pub fn rand_index(a: &[u32], b: &[u32]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let mut agree = 0u64;
    let mut total = 0u64;
    for i in 0..n {
        for j in (i + 1)..n {
            let same_a = a[i] == a[j];
            let same_b = b[i] == b[j];
            if same_a == same_b {
                agree += 1;
            }
            total += 1;
        }
    }
    agree as f64 / total as f64
}

/// Total-variation distance between an empirical distribution (counts by
/// key) and an exact one (probabilities by key).
pub fn total_variation(counts: &BTreeMap<String, u64>, exact: &BTreeMap<String, f64>) -> f64 {
    let total: u64 = counts.values().sum();
    let mut keys: Vec<&String> = counts.keys().chain(exact.keys()).collect();
    keys.sort();
    keys.dedup();
    let mut tv = 0.0;
    for key in keys {
        let p = counts.get(key).map(|&c| c as f64 / total as f64).unwrap_or(0.0);
        let q = exact.get(key).copied().unwrap_or(0.0);
        tv += (p - q).abs();
    }
    tv / 2.0
}

/// Exact posterior over an enumerable tree space, keyed by canonical
/// encoding: pi(T) * prod_i p(y_i) normalized, with the leaf marginals
/// computed by the library's empirical-Bayes fit.
pub fn exact_posterior(
    data: &NormalizedDataset,
    trees: &[Tree],
    prior: &TreePriorParams,
    grid: &treed_hazards::data::BinGrid,
    eb: &treed_hazards::node_model::EbConfig,
) -> BTreeMap<String, f64> {
    use treed_hazards::data::stats_for_rows;
    use treed_hazards::node_model::empirical_bayes;
    let all_rows: Vec<u32> = (0..data.dataset.n() as u32).collect();
    let mut logs: Vec<(String, f64)> = Vec::new();
    for tree in trees {
        let lp = log_prior(tree, data, prior).unwrap();
        let mut lm = 0.0;
        for (_, rows) in tree.partition_rows(&data.dataset, &all_rows).unwrap() {
            let stats = stats_for_rows(data, &rows, grid).unwrap();
            lm += empirical_bayes(&stats, eb).unwrap().log_marginal;
        }
        logs.push((tree.encode(&data.dataset), lp + lm));
    }
    let max = logs.iter().map(|(_, v)| *v).fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logs.iter().map(|(_, v)| (v - max).exp()).sum();
    logs.into_iter()
        .map(|(k, v)| (k, (v - max).exp() / total))
        .collect()
}
