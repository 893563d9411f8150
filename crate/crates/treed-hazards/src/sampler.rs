//! Reversible-jump MCMC over trees with parallel tempering.
//!
//! Each chain targets pi(T) * (prod_i p(y_i))^t for its inverse temperature
//! t, where p(y_i) is the per-leaf Laplace marginal. Proposals modify the
//! current tree with one of four moves:
//!
//! - grow: split a uniformly chosen splittable leaf with a rule drawn from
//!   the prior (uniform variable, then uniform rule);
//! - prune: delete the children of a uniformly chosen internal node whose
//!   children are both leaves;
//! - change: replace the rule of a uniformly chosen internal node, either
//!   by stepping a continuous rule to an adjacent threshold or by redrawing
//!   from the prior;
//! - swap: exchange the rules of a parent/child internal pair, with a
//!   rotation when both rules split the same continuous variable and a
//!   double swap when the parent's children share one rule.
//!
//! Forward and reverse proposal densities are evaluated through one shared
//! routine per move so the Hastings ratio stays consistent by construction.
//! Proposals that would leave a leaf under the minimum node size (or whose
//! reverse path has zero density) are generated and then auto-rejected.
//!
//! Chains advance independently between swap points; every `swap_interval`
//! iterations one uniformly chosen adjacent pair may exchange trees. Each
//! chain owns an RNG stream derived from the master seed, so results do not
//! depend on how chains are scheduled onto threads.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::{stats_for_rows, BinGrid, DataError, NormalizedDataset};
use crate::node_model::{empirical_bayes, EbConfig, FitCache, FitError, LeafFit};
use crate::tree::{
    any_splittable_variable, available_rules, count_available_rules, log_prior,
    rule_in_available_set, splittable_variables, RuleKind, SplitRule, Tree, TreeError,
    TreePriorParams,
};

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid sampler configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

/// Move-mix probabilities. `p_adjacent` is the probability that a change
/// move on a continuous rule steps to an adjacent threshold instead of
/// redrawing from the prior.
#[derive(Debug, Clone)]
pub struct MoveConfig {
    pub p_grow: f64,
    pub p_prune: f64,
    pub p_change: f64,
    pub p_swap: f64,
    pub p_adjacent: f64,
}

impl Default for MoveConfig {
    fn default() -> Self {
        Self {
            p_grow: 0.25,
            p_prune: 0.25,
            p_change: 0.25,
            p_swap: 0.25,
            p_adjacent: 0.75,
        }
    }
}

impl MoveConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        let probs = [self.p_grow, self.p_prune, self.p_change, self.p_swap];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(SamplerError::Config(
                "move probabilities must lie in [0,1]".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(SamplerError::Config(format!(
                "move probabilities sum to {total}, expected 1"
            )));
        }
        if !(0.0..=1.0).contains(&self.p_adjacent) {
            return Err(SamplerError::Config("p_adjacent must lie in [0,1]".into()));
        }
        Ok(())
    }

    fn raw(&self) -> [f64; 4] {
        [self.p_grow, self.p_prune, self.p_change, self.p_swap]
    }
}

/// Strictly decreasing inverse temperatures t_1 = 1 > ... > t_d = t_min.
#[derive(Debug, Clone)]
pub struct TemperatureLadder {
    pub temps: Vec<f64>,
    pub swap_interval: usize,
}

impl TemperatureLadder {
    pub fn new(d: usize, t_min: f64, swap_interval: usize) -> Result<Self, SamplerError> {
        Ok(Self {
            temps: build_ladder(d, t_min)?,
            swap_interval: swap_interval.max(1),
        })
    }
}

/// Sigmoidal ladder: a logistic curve over d equally spaced points,
/// rescaled so the endpoints are exactly 1 and t_min.
pub fn build_ladder(d: usize, t_min: f64) -> Result<Vec<f64>, SamplerError> {
    if d == 0 {
        return Err(SamplerError::Config(
            "ladder needs at least one chain".into(),
        ));
    }
    if !(t_min > 0.0 && t_min <= 1.0) {
        return Err(SamplerError::Config(format!(
            "t_min = {t_min} outside (0, 1]"
        )));
    }
    if d == 1 {
        return Ok(vec![1.0]);
    }
    const STEEPNESS: f64 = 4.0;
    let logistic = |x: f64| 1.0 / (1.0 + (-STEEPNESS * (0.5 - x)).exp());
    let v: Vec<f64> = (0..d)
        .map(|j| logistic(j as f64 / (d - 1) as f64))
        .collect();
    let (v1, vd) = (v[0], v[d - 1]);
    Ok(v
        .iter()
        .map(|&vj| {
            let u = (vj - vd) / (v1 - vd);
            t_min + (1.0 - t_min) * u
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MoveKind {
    Grow = 0,
    Prune = 1,
    Change = 2,
    Swap = 3,
}

pub const MOVE_KINDS: [MoveKind; 4] = [
    MoveKind::Grow,
    MoveKind::Prune,
    MoveKind::Change,
    MoveKind::Swap,
];

impl MoveKind {
    pub fn name(self) -> &'static str {
        match self {
            MoveKind::Grow => "grow",
            MoveKind::Prune => "prune",
            MoveKind::Change => "change",
            MoveKind::Swap => "swap",
        }
    }
}

/// Shared read-only inputs for one sampling problem.
#[derive(Clone, Copy)]
pub struct SamplerContext<'a> {
    pub data: &'a NormalizedDataset,
    pub grid: &'a BinGrid,
    pub prior: &'a TreePriorParams,
    pub moves: &'a MoveConfig,
    pub eb: &'a EbConfig,
}

impl<'a> SamplerContext<'a> {
    fn all_rows(&self) -> Vec<u32> {
        (0..self.data.dataset.n() as u32).collect()
    }

    fn min_size(&self) -> usize {
        self.prior.min_node_size
    }
}

/// One tempered chain's current position: the tree, its per-leaf row sets
/// and fits, and the pieces of the tempered log target.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub tree: Tree,
    /// Sorted row indices per leaf, keyed by leaf id.
    pub leaf_rows: Vec<(u32, Vec<u32>)>,
    pub fits: Vec<Arc<LeafFit>>,
    pub log_prior: f64,
    pub log_marginal_sum: f64,
    pub temperature: f64,
}

impl ChainState {
    pub fn log_posterior(&self) -> f64 {
        self.log_prior + self.log_marginal_sum
    }

    pub fn tempered_target(&self) -> f64 {
        self.log_prior + self.temperature * self.log_marginal_sum
    }
}

/// A proposed transition with its Hastings bookkeeping.
#[derive(Debug, Clone)]
pub struct Proposal {
    pub kind: MoveKind,
    pub tree: Tree,
    pub leaf_rows: Vec<(u32, Vec<u32>)>,
    pub log_q_forward: f64,
    pub log_q_reverse: f64,
    /// Proposal equals the current tree; accepted with ratio 1.
    pub identity: bool,
}

/// Outcome of building a proposal: auto-rejections cover minimum-node-size
/// violations and transitions whose reverse move has zero density.
#[derive(Debug)]
pub enum ProposeOutcome {
    Proposal(Proposal),
    AutoReject(MoveKind),
}

fn partition_sorted(ctx: &SamplerContext, tree: &Tree) -> Result<Vec<(u32, Vec<u32>)>, TreeError> {
    // Rows are routed in ascending order, so each leaf's bucket is sorted.
    tree.partition_rows(&ctx.data.dataset, &ctx.all_rows())
}

fn leaf_sizes_ok(ctx: &SamplerContext, leaf_rows: &[(u32, Vec<u32>)]) -> bool {
    leaf_rows.iter().all(|(_, r)| r.len() >= ctx.min_size())
}

fn rows_at_internal(tree: &Tree, leaf_rows: &[(u32, Vec<u32>)], node: u32) -> Vec<u32> {
    // Union of the leaf row sets under `node`; re-sorted for cache keys.
    let mut rows = Vec::new();
    let mut stack = vec![node];
    while let Some(id) = stack.pop() {
        match tree.node(id).children {
            Some((l, r)) => {
                stack.push(l);
                stack.push(r);
            }
            None => {
                let entry = leaf_rows
                    .iter()
                    .find(|(leaf, _)| *leaf == id)
                    .expect("leaf rows present");
                rows.extend_from_slice(&entry.1);
            }
        }
    }
    rows.sort_unstable();
    rows
}

fn growable_leaves(ctx: &SamplerContext, leaf_rows: &[(u32, Vec<u32>)]) -> Vec<u32> {
    leaf_rows
        .iter()
        .filter(|(_, rows)| any_splittable_variable(&ctx.data.dataset, rows, ctx.min_size()))
        .map(|(id, _)| *id)
        .collect()
}

/// Availability-renormalized move probabilities for a tree position.
pub fn move_probabilities(
    ctx: &SamplerContext,
    tree: &Tree,
    leaf_rows: &[(u32, Vec<u32>)],
) -> [f64; 4] {
    let available = [
        !growable_leaves(ctx, leaf_rows).is_empty(),
        !tree.prunable_nodes().is_empty(),
        !tree.internal_nodes().is_empty(),
        !tree.swap_pairs().is_empty(),
    ];
    let raw = ctx.moves.raw();
    let mut probs = [0.0; 4];
    let mut total = 0.0;
    for i in 0..4 {
        if available[i] {
            probs[i] = raw[i];
            total += raw[i];
        }
    }
    if total > 0.0 {
        for p in &mut probs {
            *p /= total;
        }
    }
    probs
}

fn draw_index(rng: &mut ChaCha8Rng, len: usize) -> usize {
    rng.gen_range(0..len)
}

pub fn propose_grow(
    ctx: &SamplerContext,
    state: &ChainState,
    rng: &mut ChaCha8Rng,
) -> Result<ProposeOutcome, SamplerError> {
    let growable = growable_leaves(ctx, &state.leaf_rows);
    assert!(!growable.is_empty(), "grow proposed with no growable leaf");
    let n_g = growable.len() as f64;
    let leaf = growable[draw_index(rng, growable.len())];
    let rows = &state
        .leaf_rows
        .iter()
        .find(|(id, _)| *id == leaf)
        .expect("leaf present")
        .1;
    let vars = splittable_variables(&ctx.data.dataset, rows, ctx.min_size());
    let m_i = vars.len() as f64;
    let variable = vars[draw_index(rng, vars.len())];
    let rules = available_rules(&ctx.data.dataset, rows, variable, ctx.min_size());
    let m_star = rules.len() as f64;
    let kind = rules[draw_index(rng, rules.len())].clone();
    let rule = SplitRule { variable, kind };

    let new_tree = state.tree.grow(leaf, rule)?;
    let leaf_rows = partition_sorted(ctx, &new_tree)?;
    debug_assert!(leaf_sizes_ok(ctx, &leaf_rows));

    let p = move_probabilities(ctx, &state.tree, &state.leaf_rows);
    let log_q_forward = p[0].ln() - (n_g * m_i * m_star).ln();
    let p_rev = move_probabilities(ctx, &new_tree, &leaf_rows);
    let n_d = new_tree.prunable_nodes().len() as f64;
    let log_q_reverse = p_rev[1].ln() - n_d.ln();
    Ok(ProposeOutcome::Proposal(Proposal {
        kind: MoveKind::Grow,
        tree: new_tree,
        leaf_rows,
        log_q_forward,
        log_q_reverse,
        identity: false,
    }))
}

pub fn propose_prune(
    ctx: &SamplerContext,
    state: &ChainState,
    rng: &mut ChaCha8Rng,
) -> Result<ProposeOutcome, SamplerError> {
    let prunable = state.tree.prunable_nodes();
    assert!(!prunable.is_empty(), "prune proposed with no prunable node");
    let n_d = prunable.len() as f64;
    let node = prunable[draw_index(rng, prunable.len())];
    let deleted_rule = state
        .tree
        .node(node)
        .rule
        .clone()
        .expect("prunable node has a rule");
    let (new_tree, new_leaf) = state.tree.prune(node)?;
    let leaf_rows = partition_sorted(ctx, &new_tree)?;

    // Reverse: a grow at the merged leaf regenerating the deleted rule.
    let merged_rows = &leaf_rows
        .iter()
        .find(|(id, _)| *id == new_leaf)
        .expect("merged leaf present")
        .1;
    if !rule_in_available_set(&ctx.data.dataset, merged_rows, &deleted_rule, ctx.min_size()) {
        // The deleted rule is no longer expressible at this node (a
        // relocated categorical rule with flipped orientation); the grow
        // move could never regenerate it, so the reverse density is zero.
        return Ok(ProposeOutcome::AutoReject(MoveKind::Prune));
    }
    let p = move_probabilities(ctx, &state.tree, &state.leaf_rows);
    let log_q_forward = p[1].ln() - n_d.ln();

    let p_rev = move_probabilities(ctx, &new_tree, &leaf_rows);
    let n_g = growable_leaves(ctx, &leaf_rows).len() as f64;
    let m_i = splittable_variables(&ctx.data.dataset, merged_rows, ctx.min_size()).len() as f64;
    let m_star = count_available_rules(
        &ctx.data.dataset,
        merged_rows,
        deleted_rule.variable,
        ctx.min_size(),
    ) as f64;
    let log_q_reverse = p_rev[0].ln() - (n_g * m_i * m_star).ln();
    Ok(ProposeOutcome::Proposal(Proposal {
        kind: MoveKind::Prune,
        tree: new_tree,
        leaf_rows,
        log_q_forward,
        log_q_reverse,
        identity: false,
    }))
}

/// Density (not log) of a change move at a node holding `rows`
/// transitioning `from` -> `to`, excluding the p_change / n_c factor. Both
/// the adjacent-step branch and the prior-redraw branch can reach the same
/// rule; their contributions add.
fn rule_transition_density(
    ctx: &SamplerContext,
    rows: &[u32],
    from: &SplitRule,
    to: &SplitRule,
) -> f64 {
    let data = &ctx.data.dataset;
    let min = ctx.min_size();
    let prior_density = if rule_in_available_set(data, rows, to, min) {
        let m = splittable_variables(data, rows, min).len() as f64;
        let m_star = count_available_rules(data, rows, to.variable, min) as f64;
        1.0 / (m * m_star)
    } else {
        0.0
    };
    match &from.kind {
        RuleKind::Subset(_) => prior_density,
        RuleKind::Threshold(r) => {
            let (down, up) = adjacent_thresholds(ctx, rows, from.variable, *r);
            let neighbors: Vec<f64> = down.into_iter().chain(up).collect();
            let adjacent_density = if neighbors.is_empty() {
                // No neighbor: the adjacent branch proposes the identity.
                if to == from {
                    1.0
                } else {
                    0.0
                }
            } else if to.variable == from.variable {
                match &to.kind {
                    RuleKind::Threshold(t) if neighbors.contains(t) => {
                        1.0 / neighbors.len() as f64
                    }
                    _ => 0.0,
                }
            } else {
                0.0
            };
            ctx.moves.p_adjacent * adjacent_density
                + (1.0 - ctx.moves.p_adjacent) * prior_density
        }
    }
}

/// Nearest available thresholds strictly below and above `r` on `variable`.
fn adjacent_thresholds(
    ctx: &SamplerContext,
    rows: &[u32],
    variable: usize,
    r: f64,
) -> (Option<f64>, Option<f64>) {
    let thresholds = available_rules(&ctx.data.dataset, rows, variable, ctx.min_size());
    let mut down: Option<f64> = None;
    let mut up: Option<f64> = None;
    for t in &thresholds {
        if let RuleKind::Threshold(v) = t {
            if *v < r && down.map_or(true, |d| *v > d) {
                down = Some(*v);
            }
            if *v > r && up.map_or(true, |u| *v < u) {
                up = Some(*v);
            }
        }
    }
    (down, up)
}

pub fn propose_change(
    ctx: &SamplerContext,
    state: &ChainState,
    rng: &mut ChaCha8Rng,
) -> Result<ProposeOutcome, SamplerError> {
    let internal = state.tree.internal_nodes();
    assert!(!internal.is_empty(), "change proposed with no internal node");
    let n_c = internal.len() as f64;
    let node = internal[draw_index(rng, internal.len())];
    let rows = rows_at_internal(&state.tree, &state.leaf_rows, node);
    let old_rule = state
        .tree
        .node(node)
        .rule
        .clone()
        .expect("internal node has a rule");
    let data = &ctx.data.dataset;
    let min = ctx.min_size();

    let adjacent_branch = matches!(old_rule.kind, RuleKind::Threshold(_))
        && rng.gen::<f64>() < ctx.moves.p_adjacent;
    let new_rule = if adjacent_branch {
        let r = match old_rule.kind {
            RuleKind::Threshold(r) => r,
            _ => unreachable!(),
        };
        let (down, up) = adjacent_thresholds(ctx, &rows, old_rule.variable, r);
        let neighbors: Vec<f64> = down.into_iter().chain(up).collect();
        if neighbors.is_empty() {
            old_rule.clone()
        } else {
            SplitRule {
                variable: old_rule.variable,
                kind: RuleKind::Threshold(neighbors[draw_index(rng, neighbors.len())]),
            }
        }
    } else {
        let vars = splittable_variables(data, &rows, min);
        // The node's own rule splits validly, so its variable is splittable.
        debug_assert!(!vars.is_empty());
        let variable = vars[draw_index(rng, vars.len())];
        let rules = available_rules(data, &rows, variable, min);
        SplitRule {
            variable,
            kind: rules[draw_index(rng, rules.len())].clone(),
        }
    };

    if new_rule == old_rule {
        let q = (move_probabilities(ctx, &state.tree, &state.leaf_rows)[2].ln() - n_c.ln())
            + rule_transition_density(ctx, &rows, &old_rule, &old_rule).ln();
        return Ok(ProposeOutcome::Proposal(Proposal {
            kind: MoveKind::Change,
            tree: state.tree.clone(),
            leaf_rows: state.leaf_rows.clone(),
            log_q_forward: q,
            log_q_reverse: q,
            identity: true,
        }));
    }

    let new_tree = state.tree.with_rule(node, new_rule.clone())?;
    let leaf_rows = partition_sorted(ctx, &new_tree)?;
    if !leaf_sizes_ok(ctx, &leaf_rows) {
        return Ok(ProposeOutcome::AutoReject(MoveKind::Change));
    }
    let forward_rule_density = rule_transition_density(ctx, &rows, &old_rule, &new_rule);
    let reverse_rule_density = rule_transition_density(ctx, &rows, &new_rule, &old_rule);
    debug_assert!(forward_rule_density > 0.0);
    if reverse_rule_density <= 0.0 {
        return Ok(ProposeOutcome::AutoReject(MoveKind::Change));
    }
    let p = move_probabilities(ctx, &state.tree, &state.leaf_rows);
    let p_rev = move_probabilities(ctx, &new_tree, &leaf_rows);
    let log_q_forward = p[2].ln() - n_c.ln() + forward_rule_density.ln();
    let log_q_reverse = p_rev[2].ln() - n_c.ln() + reverse_rule_density.ln();
    Ok(ProposeOutcome::Proposal(Proposal {
        kind: MoveKind::Change,
        tree: new_tree,
        leaf_rows,
        log_q_forward,
        log_q_reverse,
        identity: false,
    }))
}

/// Applies the swap variant for a parent/child internal pair: a double swap
/// when the parent's children share a rule, a rotation when parent and
/// child split the same continuous variable, a plain rule exchange
/// otherwise. Returns the new tree and the proposal multiplicity (the
/// number of eligible pairs producing this same tree).
fn apply_swap(tree: &Tree, parent: u32, child: u32) -> Result<(Tree, f64), TreeError> {
    let (l, r) = tree.node(parent).children.expect("parent is internal");
    let sibling = if child == l { r } else { l };
    let child_rule = tree.node(child).rule.clone().expect("child internal");
    let parent_rule = tree.node(parent).rule.clone().expect("parent internal");
    let sibling_same_rule = !tree.node(sibling).is_leaf()
        && tree.node(sibling).rule.as_ref() == Some(&child_rule);
    if sibling_same_rule {
        // Both children swap their shared rule with the parent; picking
        // either pair proposes the same tree.
        let t = tree
            .with_rule(parent, child_rule.clone())?
            .with_rule(child, parent_rule.clone())?
            .with_rule(sibling, parent_rule)?;
        return Ok((t, 2.0));
    }
    let same_continuous = parent_rule.variable == child_rule.variable
        && matches!(parent_rule.kind, RuleKind::Threshold(_))
        && matches!(child_rule.kind, RuleKind::Threshold(_));
    if same_continuous {
        Ok((tree.rotate(parent, child)?, 1.0))
    } else {
        Ok((tree.swap_rules(parent, child)?, 1.0))
    }
}

/// Reverse-side multiplicity mirror of `apply_swap`'s double-swap doubling.
fn double_swap_multiplicity(tree: &Tree, parent: u32) -> f64 {
    let (l, r) = match tree.node(parent).children {
        Some(c) => c,
        None => return 1.0,
    };
    let both_internal = !tree.node(l).is_leaf() && !tree.node(r).is_leaf();
    if both_internal && tree.node(l).rule == tree.node(r).rule {
        2.0
    } else {
        1.0
    }
}

pub fn propose_swap(
    ctx: &SamplerContext,
    state: &ChainState,
    rng: &mut ChaCha8Rng,
) -> Result<ProposeOutcome, SamplerError> {
    let pairs = state.tree.swap_pairs();
    assert!(!pairs.is_empty(), "swap proposed with no eligible pair");
    let n_s = pairs.len() as f64;
    let (parent, child) = pairs[draw_index(rng, pairs.len())];
    let (new_tree, mult) = apply_swap(&state.tree, parent, child)?;
    debug_assert_eq!(mult, double_swap_multiplicity(&state.tree, parent));
    let leaf_rows = partition_sorted(ctx, &new_tree)?;
    if !leaf_sizes_ok(ctx, &leaf_rows) {
        return Ok(ProposeOutcome::AutoReject(MoveKind::Swap));
    }
    let p = move_probabilities(ctx, &state.tree, &state.leaf_rows);
    let log_q_forward = p[3].ln() - n_s.ln() + mult.ln();

    let p_rev = move_probabilities(ctx, &new_tree, &leaf_rows);
    let n_s_rev = new_tree.swap_pairs().len() as f64;
    // For a double swap the reverse is the double swap at the same parent,
    // again counted twice; rotations and plain swaps reverse uniquely.
    let rev_mult: f64 = if mult == 2.0 { 2.0 } else { 1.0 };
    let log_q_reverse = p_rev[3].ln() - n_s_rev.ln() + rev_mult.ln();
    Ok(ProposeOutcome::Proposal(Proposal {
        kind: MoveKind::Swap,
        tree: new_tree,
        leaf_rows,
        log_q_forward,
        log_q_reverse,
        identity: false,
    }))
}

/// Per-move proposal/acceptance tallies.
#[derive(Debug, Clone, Default)]
pub struct MoveStats {
    pub proposed: [u64; 4],
    pub accepted: [u64; 4],
    pub auto_rejected: [u64; 4],
    pub swap_proposed: u64,
    pub swap_accepted: u64,
}

/// A chain plus its RNG stream, fit cache, and tallies.
pub struct ChainRunner {
    pub state: ChainState,
    pub rng: ChaCha8Rng,
    pub cache: FitCache,
    pub stats: MoveStats,
}

const FIT_CACHE_CAP: usize = 8192;

/// Fits every leaf of a partition, reusing cached fits where the leaf's
/// row set is unchanged.
fn fit_leaves(
    ctx: &SamplerContext,
    cache: &mut FitCache,
    leaf_rows: &[(u32, Vec<u32>)],
) -> Result<(Vec<Arc<LeafFit>>, f64), SamplerError> {
    let mut fits = Vec::with_capacity(leaf_rows.len());
    let mut total = 0.0;
    for (_, rows) in leaf_rows {
        let key = FitCache::key(rows);
        let fit = match cache.get(&key) {
            Some(f) => f,
            None => {
                let stats = stats_for_rows(ctx.data, rows, ctx.grid)?;
                let fit = Arc::new(empirical_bayes(&stats, ctx.eb)?);
                cache.insert(key, fit.clone());
                fit
            }
        };
        total += fit.log_marginal;
        fits.push(fit);
    }
    Ok((fits, total))
}

impl ChainRunner {
    /// Builds a chain at the root-only tree.
    pub fn new(ctx: &SamplerContext, temperature: f64, seed: u64) -> Result<Self, SamplerError> {
        let tree = Tree::root();
        let leaf_rows = partition_sorted(ctx, &tree)?;
        let mut cache = FitCache::new(FIT_CACHE_CAP);
        let (fits, log_marginal_sum) = fit_leaves(ctx, &mut cache, &leaf_rows)?;
        let lp = log_prior(&tree, ctx.data, ctx.prior)?;
        Ok(Self {
            state: ChainState {
                tree,
                leaf_rows,
                fits,
                log_prior: lp,
                log_marginal_sum,
                temperature,
            },
            rng: ChaCha8Rng::seed_from_u64(seed),
            cache,
            stats: MoveStats::default(),
        })
    }
}

/// One Metropolis-Hastings step: choose an available move, build the
/// proposal, and accept with the tempered ratio. Leaf-fit failures at a
/// proposal reject it with a warning rather than aborting the chain.
pub fn mh_step(ctx: &SamplerContext, chain: &mut ChainRunner) -> Result<(), SamplerError> {
    let probs = move_probabilities(ctx, &chain.state.tree, &chain.state.leaf_rows);
    let total: f64 = probs.iter().sum();
    if total <= 0.0 {
        return Ok(()); // No move is possible; the chain stays put.
    }
    let u: f64 = chain.rng.gen();
    let mut cumulative = 0.0;
    let mut kind = MoveKind::Grow;
    for (i, &p) in probs.iter().enumerate() {
        cumulative += p;
        if u < cumulative {
            kind = MOVE_KINDS[i];
            break;
        }
    }
    chain.stats.proposed[kind as usize] += 1;

    let outcome = match kind {
        MoveKind::Grow => propose_grow(ctx, &chain.state, &mut chain.rng)?,
        MoveKind::Prune => propose_prune(ctx, &chain.state, &mut chain.rng)?,
        MoveKind::Change => propose_change(ctx, &chain.state, &mut chain.rng)?,
        MoveKind::Swap => propose_swap(ctx, &chain.state, &mut chain.rng)?,
    };
    let proposal = match outcome {
        ProposeOutcome::AutoReject(k) => {
            chain.stats.auto_rejected[k as usize] += 1;
            return Ok(());
        }
        ProposeOutcome::Proposal(p) => p,
    };
    debug_assert!(proposal.log_q_forward.is_finite());
    debug_assert!(proposal.log_q_reverse.is_finite());

    if proposal.identity {
        chain.stats.accepted[kind as usize] += 1;
        return Ok(());
    }

    let (fits, log_marginal_sum) = match fit_leaves(ctx, &mut chain.cache, &proposal.leaf_rows) {
        Ok(v) => v,
        Err(err) => {
            log::warn!("leaf fit failed at a proposal; rejecting: {err}");
            return Ok(());
        }
    };
    let lp = match log_prior(&proposal.tree, ctx.data, ctx.prior) {
        Ok(v) => v,
        Err(err) => {
            log::warn!("prior evaluation failed at a proposal; rejecting: {err}");
            return Ok(());
        }
    };
    let target_new = lp + chain.state.temperature * log_marginal_sum;
    let target_old = chain.state.tempered_target();
    let log_alpha = target_new - target_old + proposal.log_q_reverse - proposal.log_q_forward;
    let accept = log_alpha >= 0.0 || chain.rng.gen::<f64>().ln() < log_alpha;
    if accept {
        chain.state.tree = proposal.tree;
        chain.state.leaf_rows = proposal.leaf_rows;
        chain.state.fits = fits;
        chain.state.log_prior = lp;
        chain.state.log_marginal_sum = log_marginal_sum;
        chain.stats.accepted[kind as usize] += 1;
    }
    Ok(())
}

/// Log of the tempered swap acceptance ratio between adjacent chains, in
/// the four-term form. Algebraically this collapses to
/// (t_a - t_b) * (L_b - L_a) because the tree priors cancel.
pub fn pt_swap_log_alpha(
    t_a: f64,
    t_b: f64,
    log_prior_a: f64,
    log_marginal_a: f64,
    log_prior_b: f64,
    log_marginal_b: f64,
) -> f64 {
    let crossed = (log_prior_b + t_a * log_marginal_b) + (log_prior_a + t_b * log_marginal_a);
    let current = (log_prior_a + t_a * log_marginal_a) + (log_prior_b + t_b * log_marginal_b);
    crossed - current
}

/// Proposes exchanging the trees of two adjacent chains, leaving the
/// temperatures in place. Returns whether the exchange was accepted.
pub fn pt_swap(a: &mut ChainRunner, b: &mut ChainRunner, rng: &mut ChaCha8Rng) -> bool {
    let log_alpha = pt_swap_log_alpha(
        a.state.temperature,
        b.state.temperature,
        a.state.log_prior,
        a.state.log_marginal_sum,
        b.state.log_prior,
        b.state.log_marginal_sum,
    );
    let accept = log_alpha >= 0.0 || rng.gen::<f64>().ln() < log_alpha;
    if accept {
        std::mem::swap(&mut a.state.tree, &mut b.state.tree);
        std::mem::swap(&mut a.state.leaf_rows, &mut b.state.leaf_rows);
        std::mem::swap(&mut a.state.fits, &mut b.state.fits);
        std::mem::swap(&mut a.state.log_prior, &mut b.state.log_prior);
        std::mem::swap(&mut a.state.log_marginal_sum, &mut b.state.log_marginal_sum);
    }
    accept
}

/// Full sampler configuration.
#[derive(Debug, Clone)]
pub struct SamplerConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub k_bins: usize,
    pub seed: u64,
    pub threads: usize,
    pub chains: usize,
    pub t_min: f64,
    pub swap_interval: usize,
    pub moves: MoveConfig,
    pub prior: TreePriorParams,
    pub eb: EbConfig,
    pub diag_interval: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            burn_in: 1_000,
            thin: 1,
            k_bins: 100,
            seed: 1234,
            threads: 1,
            chains: 8,
            t_min: 0.1,
            swap_interval: 10,
            moves: MoveConfig::default(),
            prior: TreePriorParams::default(),
            eb: EbConfig::default(),
            diag_interval: 500,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.iterations == 0 || self.iterations <= self.burn_in {
            return Err(SamplerError::Config(format!(
                "iterations ({}) must exceed burn_in ({})",
                self.iterations, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(SamplerError::Config("thin must be positive".into()));
        }
        if self.k_bins == 0 {
            return Err(SamplerError::Config("bin count must be positive".into()));
        }
        if self.chains == 0 {
            return Err(SamplerError::Config("need at least one chain".into()));
        }
        if self.threads == 0 {
            return Err(SamplerError::Config("need at least one thread".into()));
        }
        self.moves.validate()?;
        build_ladder(self.chains, self.t_min)?;
        Ok(())
    }
}

/// One retained draw from the cold chain.
#[derive(Debug, Clone)]
pub struct Sample {
    pub iteration: usize,
    pub tree: Tree,
    pub log_prior: f64,
    pub log_marginal_sum: f64,
    pub leaf_rows: Vec<(u32, Vec<u32>)>,
    pub leaf_fits: Vec<Arc<LeafFit>>,
}

impl Sample {
    pub fn log_posterior(&self) -> f64 {
        self.log_prior + self.log_marginal_sum
    }
}

/// Cold-chain progress snapshot emitted every `diag_interval` iterations.
#[derive(Debug, Clone)]
pub struct DiagRecord {
    pub iteration: usize,
    pub leaves: usize,
    pub log_posterior: f64,
    pub proposed: [u64; 4],
    pub accepted: [u64; 4],
    pub auto_rejected: [u64; 4],
    pub swap_proposed: u64,
    pub swap_accepted: u64,
}

#[derive(Debug)]
pub struct RunResult {
    pub samples: Vec<Sample>,
    pub diagnostics: Vec<DiagRecord>,
    pub cold_stats: MoveStats,
}

// SplitMix64; used to derive independent per-chain seeds from the master.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    split_seed(seed, stream)
}

fn split_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs the tempered reversible-jump sampler and returns the cold chain's
/// retained samples. Fully reproducible given the seed: chains own RNG
/// streams split from the master seed, the swap coordinator owns another,
/// and chains only interact at swap points.
pub fn run(data: &NormalizedDataset, config: &SamplerConfig) -> Result<RunResult, SamplerError> {
    config.validate()?;
    let grid = BinGrid::new(config.k_bins)?;
    let ctx = SamplerContext {
        data,
        grid: &grid,
        prior: &config.prior,
        moves: &config.moves,
        eb: &config.eb,
    };
    let temps = build_ladder(config.chains, config.t_min)?;
    let mut chains: Vec<ChainRunner> = temps
        .iter()
        .enumerate()
        .map(|(j, &t)| ChainRunner::new(&ctx, t, split_seed(config.seed, 1 + j as u64)))
        .collect::<Result<_, _>>()?;
    let mut coord_rng = ChaCha8Rng::seed_from_u64(split_seed(config.seed, 0));

    let mut samples: Vec<Sample> = Vec::new();
    let mut diagnostics: Vec<DiagRecord> = Vec::new();
    let mut swap_proposed = 0u64;
    let mut swap_accepted = 0u64;

    let mut iter = 0usize;
    while iter < config.iterations {
        let batch = config.swap_interval.min(config.iterations - iter);
        let workers = config.threads.min(chains.len());
        let start_iter = iter;
        if workers <= 1 {
            for (j, chain) in chains.iter_mut().enumerate() {
                advance_chain(&ctx, chain, j == 0, start_iter, batch, config, &mut samples)?;
            }
        } else {
            // Round-robin the chains over scoped worker threads. Chains
            // never share mutable state, so scheduling cannot affect the
            // output stream.
            let mut groups: Vec<Vec<(usize, &mut ChainRunner)>> =
                (0..workers).map(|_| Vec::new()).collect();
            for (pos, item) in chains.iter_mut().enumerate() {
                groups[pos % workers].push((pos, item));
            }
            let mut worker_results: Vec<Result<Vec<Sample>, SamplerError>> = Vec::new();
            std::thread::scope(|scope| {
                let mut handles = Vec::new();
                for group in groups {
                    let ctx_ref = &ctx;
                    handles.push(scope.spawn(move || {
                        let mut local = Vec::new();
                        for (j, chain) in group {
                            advance_chain(
                                ctx_ref, chain, j == 0, start_iter, batch, config, &mut local,
                            )?;
                        }
                        Ok::<Vec<Sample>, SamplerError>(local)
                    }));
                }
                for handle in handles {
                    worker_results.push(handle.join().expect("chain worker panicked"));
                }
            });
            let mut cold: Vec<Sample> = Vec::new();
            for res in worker_results {
                cold.append(&mut res?);
            }
            cold.sort_by_key(|s| s.iteration);
            samples.append(&mut cold);
        }
        iter += batch;

        if chains.len() > 1 && iter % config.swap_interval == 0 && iter < config.iterations {
            let j = coord_rng.gen_range(0..chains.len() - 1);
            let (left, right) = chains.split_at_mut(j + 1);
            swap_proposed += 1;
            if pt_swap(&mut left[j], &mut right[0], &mut coord_rng) {
                swap_accepted += 1;
            }
        }

        if iter % config.diag_interval == 0 || iter == config.iterations {
            let cold = &chains[0];
            diagnostics.push(DiagRecord {
                iteration: iter,
                leaves: cold.state.tree.n_leaves(),
                log_posterior: cold.state.log_posterior(),
                proposed: cold.stats.proposed,
                accepted: cold.stats.accepted,
                auto_rejected: cold.stats.auto_rejected,
                swap_proposed,
                swap_accepted,
            });
        }

        #[cfg(debug_assertions)]
        if iter % 100 == 0 {
            verify_cached_target(&ctx, &chains[0]);
        }
    }

    let mut cold_stats = chains[0].stats.clone();
    cold_stats.swap_proposed = swap_proposed;
    cold_stats.swap_accepted = swap_accepted;
    Ok(RunResult {
        samples,
        diagnostics,
        cold_stats,
    })
}

fn advance_chain(
    ctx: &SamplerContext,
    chain: &mut ChainRunner,
    is_cold: bool,
    start_iter: usize,
    batch: usize,
    config: &SamplerConfig,
    samples: &mut Vec<Sample>,
) -> Result<(), SamplerError> {
    for b in 0..batch {
        mh_step(ctx, chain)?;
        let iteration = start_iter + b + 1;
        if is_cold && iteration > config.burn_in {
            let idx = iteration - config.burn_in;
            if (idx - 1) % config.thin == 0 {
                samples.push(Sample {
                    iteration,
                    tree: chain.state.tree.clone(),
                    log_prior: chain.state.log_prior,
                    log_marginal_sum: chain.state.log_marginal_sum,
                    leaf_rows: chain.state.leaf_rows.clone(),
                    leaf_fits: chain.state.fits.clone(),
                });
            }
        }
    }
    Ok(())
}

#[cfg(debug_assertions)]
fn verify_cached_target(ctx: &SamplerContext, chain: &ChainRunner) {
    let lp = log_prior(&chain.state.tree, ctx.data, ctx.prior).expect("valid tree");
    let mut lm = 0.0;
    for (_, rows) in &chain.state.leaf_rows {
        let stats = stats_for_rows(ctx.data, rows, ctx.grid).expect("stats");
        let fit = empirical_bayes(&stats, ctx.eb).expect("fit");
        lm += fit.log_marginal;
    }
    assert!(
        (lp - chain.state.log_prior).abs() <= 1e-9,
        "cached log prior drifted: {} vs {}",
        chain.state.log_prior,
        lp
    );
    assert!(
        (lm - chain.state.log_marginal_sum).abs() <= 1e-9,
        "cached log marginal drifted: {} vs {}",
        chain.state.log_marginal_sum,
        lm
    );
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{normalize_times, Covariate, CovariateValues, SurvivalDataset};

    fn toy_data() -> NormalizedDataset {
        // 30 rows, one continuous covariate with three distinct values.
        let mut times = Vec::new();
        let mut xs = Vec::new();
        for i in 0..30 {
            let group = i / 10;
            xs.push((group + 1) as f64);
            let base = match group {
                0 => 0.3,
                1 => 0.9,
                _ => 1.8,
            };
            times.push(base + 0.07 * (i % 10) as f64);
        }
        let status: Vec<bool> = (0..30).map(|i| i % 5 != 0).collect();
        let data = SurvivalDataset::new(
            times,
            status,
            vec![Covariate {
                name: "x1".into(),
                values: CovariateValues::Continuous(xs),
            }],
        )
        .unwrap();
        normalize_times(&data).unwrap()
    }

    #[test]
    fn ladder_endpoints_and_monotonicity() {
        assert_eq!(build_ladder(1, 0.5).unwrap(), vec![1.0]);
        let ladder = build_ladder(8, 0.1).unwrap();
        assert_eq!(ladder.len(), 8);
        assert!((ladder[0] - 1.0).abs() < 1e-15);
        assert!((ladder[7] - 0.1).abs() < 1e-15);
        for w in ladder.windows(2) {
            assert!(w[0] > w[1], "ladder not strictly decreasing: {ladder:?}");
        }
        assert!(build_ladder(0, 0.1).is_err());
        assert!(build_ladder(4, 0.0).is_err());
        assert!(build_ladder(4, 1.5).is_err());
    }

    #[test]
    fn swap_log_alpha_simplification() {
        let cases = [
            (1.0, 0.7, -3.0, -120.0, -2.0, -100.0),
            (0.5, 0.4, -1.0, -80.0, -7.0, -95.0),
            (0.3, 0.3, -2.0, -50.0, -9.0, -60.0),
        ];
        for (ta, tb, lpa, lma, lpb, lmb) in cases {
            let four_term = pt_swap_log_alpha(ta, tb, lpa, lma, lpb, lmb);
            let simplified = (ta - tb) * (lmb - lma);
            assert!(
                (four_term - simplified).abs() < 1e-9,
                "{four_term} vs {simplified}"
            );
        }
    }

    #[test]
    fn equal_temperature_swap_always_accepts() {
        assert_eq!(pt_swap_log_alpha(0.5, 0.5, -1.0, -10.0, -2.0, -30.0), 0.0);
        // Identical trees in both chains collapse the ratio to 1 too.
        assert_eq!(pt_swap_log_alpha(1.0, 0.3, -1.0, -10.0, -1.0, -10.0), 0.0);
    }

    #[test]
    fn grow_density_on_root_only_tree() {
        let data = toy_data();
        let grid = BinGrid::new(10).unwrap();
        let prior = TreePriorParams {
            gamma: 0.95,
            theta: 2.0,
            min_node_size: 5,
        };
        let moves = MoveConfig::default();
        let eb = EbConfig::default();
        let ctx = SamplerContext {
            data: &data,
            grid: &grid,
            prior: &prior,
            moves: &moves,
            eb: &eb,
        };
        let chain = ChainRunner::new(&ctx, 1.0, 7).unwrap();
        // Root-only: only grow is available so its renormalized mass is 1;
        // one variable, two rules (thresholds at x = 1 and x = 2).
        let probs = move_probabilities(&ctx, &chain.state.tree, &chain.state.leaf_rows);
        assert_eq!(probs, [1.0, 0.0, 0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        match propose_grow(&ctx, &chain.state, &mut rng).unwrap() {
            ProposeOutcome::Proposal(p) => {
                assert!((p.log_q_forward - (1.0f64 / 2.0).ln()).abs() < 1e-12);
                // Reverse is the renormalized prune mass over n_d = 1.
                let p_rev = move_probabilities(&ctx, &p.tree, &p.leaf_rows);
                assert!((p.log_q_reverse - p_rev[1].ln()).abs() < 1e-12);
            }
            other => panic!("expected proposal, got {other:?}"),
        }
    }

    #[test]
    fn prune_is_reverse_of_grow() {
        let data = toy_data();
        let grid = BinGrid::new(10).unwrap();
        let prior = TreePriorParams {
            gamma: 0.95,
            theta: 2.0,
            min_node_size: 5,
        };
        let moves = MoveConfig::default();
        let eb = EbConfig::default();
        let ctx = SamplerContext {
            data: &data,
            grid: &grid,
            prior: &prior,
            moves: &moves,
            eb: &eb,
        };
        let mut chain = ChainRunner::new(&ctx, 1.0, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let grown = match propose_grow(&ctx, &chain.state, &mut rng).unwrap() {
            ProposeOutcome::Proposal(p) => p,
            other => panic!("expected proposal, got {other:?}"),
        };
        let (fits, lm) = fit_leaves(&ctx, &mut chain.cache, &grown.leaf_rows).unwrap();
        chain.state = ChainState {
            tree: grown.tree.clone(),
            leaf_rows: grown.leaf_rows.clone(),
            fits,
            log_prior: log_prior(&grown.tree, ctx.data, ctx.prior).unwrap(),
            log_marginal_sum: lm,
            temperature: 1.0,
        };
        // A prune from here mirrors the grow exactly.
        let pruned = match propose_prune(&ctx, &chain.state, &mut rng).unwrap() {
            ProposeOutcome::Proposal(p) => p,
            other => panic!("expected proposal, got {other:?}"),
        };
        assert!((pruned.log_q_forward - grown.log_q_reverse).abs() < 1e-12);
        assert!((pruned.log_q_reverse - grown.log_q_forward).abs() < 1e-12);
        assert_eq!(
            pruned.tree.encode(&data.dataset),
            Tree::root().encode(&data.dataset)
        );
    }

    #[test]
    fn determinism_across_thread_counts() {
        let data = toy_data();
        let mut config = SamplerConfig {
            iterations: 200,
            burn_in: 20,
            thin: 1,
            k_bins: 10,
            seed: 99,
            threads: 1,
            chains: 4,
            t_min: 0.2,
            swap_interval: 5,
            diag_interval: 50,
            ..SamplerConfig::default()
        };
        config.prior.min_node_size = 5;
        let one = run(&data, &config).unwrap();
        config.threads = 4;
        let four = run(&data, &config).unwrap();
        assert_eq!(one.samples.len(), four.samples.len());
        assert_eq!(one.samples.len(), 180);
        for (a, b) in one.samples.iter().zip(&four.samples) {
            assert_eq!(a.iteration, b.iteration);
            assert_eq!(a.tree.encode(&data.dataset), b.tree.encode(&data.dataset));
            assert_eq!(a.log_posterior().to_bits(), b.log_posterior().to_bits());
        }
    }

    #[test]
    fn single_chain_has_no_swaps() {
        let data = toy_data();
        let mut config = SamplerConfig {
            iterations: 100,
            burn_in: 10,
            chains: 1,
            k_bins: 10,
            seed: 4,
            diag_interval: 100,
            ..SamplerConfig::default()
        };
        config.prior.min_node_size = 5;
        let result = run(&data, &config).unwrap();
        assert_eq!(result.cold_stats.swap_proposed, 0);
        assert_eq!(result.samples.len(), 90);
    }

    #[test]
    fn config_validation() {
        let mut config = SamplerConfig {
            iterations: 100,
            burn_in: 100,
            ..SamplerConfig::default()
        };
        assert!(config.validate().is_err());
        config.burn_in = 10;
        assert!(config.validate().is_ok());
        config.moves.p_grow = 0.5;
        assert!(config.validate().is_err());
    }
}
