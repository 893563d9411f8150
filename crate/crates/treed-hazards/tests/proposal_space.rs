//! Brute-force validation of the proposal machinery: the enumerated
//! proposal distribution from any tree position must sum to one, and every
//! emitted proposal's forward/reverse densities must equal the enumerated
//! mass of the corresponding transition.

mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use treed_hazards::data::{normalize_times, BinGrid, Covariate, CovariateValues, NormalizedDataset, SurvivalDataset};
use treed_hazards::node_model::EbConfig;
use treed_hazards::sampler::{
    mh_step, propose_change, propose_grow, propose_prune, propose_swap, ChainRunner, MoveConfig,
    MoveKind, ProposeOutcome, SamplerContext,
};
use treed_hazards::tree::TreePriorParams;

fn mixed_data() -> NormalizedDataset {
    // 64 rows: x1 cycles 1..16, x2 cycles A-D, with hazards that vary by
    // cell so the chain visits interesting trees.
    let n = 64;
    let mut times = Vec::with_capacity(n);
    let mut status = Vec::with_capacity(n);
    let mut x1 = Vec::with_capacity(n);
    let mut x2 = Vec::with_capacity(n);
    let mut rng = ChaCha8Rng::seed_from_u64(12345);
    use rand::Rng;
    for i in 0..n {
        let v1 = (i % 16 + 1) as f64;
        let code = (i / 16) as u32;
        x1.push(v1);
        x2.push(code);
        let base = 0.2 + 0.1 * (i % 16) as f64 + 0.5 * code as f64;
        times.push(base * (0.5 + rng.gen::<f64>()));
        status.push(i % 7 != 0);
    }
    let data = SurvivalDataset::new(
        times,
        status,
        vec![
            Covariate {
                name: "x1".into(),
                values: CovariateValues::Continuous(x1),
            },
            Covariate {
                name: "x2".into(),
                values: CovariateValues::Categorical {
                    labels: vec!["A".into(), "B".into(), "C".into(), "D".into()],
                    codes: x2,
                },
            },
        ],
    )
    .unwrap();
    normalize_times(&data).unwrap()
}

#[test]
fn proposal_distribution_sums_to_one_and_densities_match_enumeration() {
    let data = mixed_data();
    let grid = BinGrid::new(8).unwrap();
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
    let mut chain = ChainRunner::new(&ctx, 1.0, 2026).unwrap();

    let mut checked_states = 0usize;
    let mut checked_proposals = [0usize; 4];
    for step in 0..400 {
        if step % 10 == 0 {
            let enumerated = common::enumerate_proposals(
                &ctx,
                &chain.state.tree,
                &data,
                prior.min_node_size,
                moves.p_adjacent,
            );
            let total: f64 = enumerated.values().sum();
            assert!(
                (total - 1.0).abs() < 1e-12,
                "step {step}: proposal space sums to {total}"
            );
            checked_states += 1;

            // Every available move kind: emit a proposal and compare both
            // densities against enumeration.
            let probs = treed_hazards::sampler::move_probabilities(
                &ctx,
                &chain.state.tree,
                &chain.state.leaf_rows,
            );
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + step as u64);
            for kind in [
                MoveKind::Grow,
                MoveKind::Prune,
                MoveKind::Change,
                MoveKind::Swap,
            ] {
                if probs[kind as usize] <= 0.0 {
                    continue;
                }
                let outcome = match kind {
                    MoveKind::Grow => propose_grow(&ctx, &chain.state, &mut rng).unwrap(),
                    MoveKind::Prune => propose_prune(&ctx, &chain.state, &mut rng).unwrap(),
                    MoveKind::Change => propose_change(&ctx, &chain.state, &mut rng).unwrap(),
                    MoveKind::Swap => propose_swap(&ctx, &chain.state, &mut rng).unwrap(),
                };
                let proposal = match outcome {
                    ProposeOutcome::Proposal(p) => p,
                    ProposeOutcome::AutoReject(_) => continue,
                };
                assert!(proposal.log_q_forward.is_finite());
                assert!(proposal.log_q_reverse.is_finite());
                if proposal.identity {
                    // q(T -> T) accumulates over every internal node; the
                    // stored density covers only the selected node, and the
                    // acceptance ratio is 1 either way.
                    continue;
                }
                let key = proposal.tree.encode(&data.dataset);
                let q_fwd = enumerated
                    .get(&key)
                    .copied()
                    .expect("emitted proposal must be in the enumerated space");
                assert!(
                    (proposal.log_q_forward.exp() - q_fwd).abs() < 1e-12,
                    "step {step} {kind:?}: stored fwd {} vs enumerated {q_fwd}",
                    proposal.log_q_forward.exp()
                );
                // Reverse: enumerate from the proposed tree and find the
                // mass assigned to coming back.
                let reverse = common::enumerate_proposals(
                    &ctx,
                    &proposal.tree,
                    &data,
                    prior.min_node_size,
                    moves.p_adjacent,
                );
                let back_key = chain.state.tree.encode(&data.dataset);
                let q_rev = reverse.get(&back_key).copied().unwrap_or(0.0);
                assert!(
                    (proposal.log_q_reverse.exp() - q_rev).abs() < 1e-12,
                    "step {step} {kind:?}: stored rev {} vs enumerated {q_rev}",
                    proposal.log_q_reverse.exp()
                );
                checked_proposals[kind as usize] += 1;

                // Incremental row bookkeeping equals brute-force routing.
                let all_rows: Vec<u32> = (0..data.dataset.n() as u32).collect();
                let rerouted = proposal
                    .tree
                    .partition_rows(&data.dataset, &all_rows)
                    .unwrap();
                assert_eq!(proposal.leaf_rows, rerouted);
            }
        }
        mh_step(&ctx, &mut chain).unwrap();
    }
    assert!(checked_states >= 40);
    // The chain must have exercised every move kind at least once.
    for (k, count) in checked_proposals.iter().enumerate() {
        assert!(
            *count > 0,
            "move kind {k} never produced a checkable proposal"
        );
    }
}

#[test]
fn rotate_swaps_preserve_leaf_row_multisets() {
    let data = mixed_data();
    let grid = BinGrid::new(8).unwrap();
    let prior = TreePriorParams {
        gamma: 0.95,
        theta: 2.0,
        min_node_size: 5,
    };
    let moves = MoveConfig {
        // Emphasize grow and swap so rotations happen often.
        p_grow: 0.4,
        p_prune: 0.1,
        p_change: 0.1,
        p_swap: 0.4,
        p_adjacent: 0.75,
    };
    let eb = EbConfig::default();
    let ctx = SamplerContext {
        data: &data,
        grid: &grid,
        prior: &prior,
        moves: &moves,
        eb: &eb,
    };
    let mut chain = ChainRunner::new(&ctx, 1.0, 777).unwrap();
    let depth_profile = |tree: &treed_hazards::tree::Tree| -> Vec<usize> {
        let mut depths: Vec<usize> = tree.leaves().iter().map(|&l| tree.depth(l)).collect();
        depths.sort_unstable();
        depths
    };
    let mut rotations = 0usize;
    let mut swaps_seen = 0usize;
    for step in 0..600 {
        if !chain.state.tree.swap_pairs().is_empty() {
            let mut rng = ChaCha8Rng::seed_from_u64(step as u64);
            if let ProposeOutcome::Proposal(p) =
                propose_swap(&ctx, &chain.state, &mut rng).unwrap()
            {
                swaps_seen += 1;
                // A rotation is the only swap variant that changes the leaf
                // depth profile, and it must keep every leaf's data intact.
                if depth_profile(&p.tree) != depth_profile(&chain.state.tree) {
                    rotations += 1;
                    let mut before: Vec<Vec<u32>> = chain
                        .state
                        .leaf_rows
                        .iter()
                        .map(|(_, r)| r.clone())
                        .collect();
                    let mut after: Vec<Vec<u32>> =
                        p.leaf_rows.iter().map(|(_, r)| r.clone()).collect();
                    before.sort();
                    after.sort();
                    assert_eq!(before, after, "rotation altered a leaf's data");
                }
            }
        }
        mh_step(&ctx, &mut chain).unwrap();
    }
    assert!(swaps_seen > 10, "only {swaps_seen} swap proposals seen");
    assert!(rotations > 0, "no rotations exercised");
}
