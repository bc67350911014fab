use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relu_limit::sequence::{Distribution, PerturbationParams, SequenceKind};
use relu_limit::{
    check_nested, enumerate_regions, generate_sequence, grid_census, representation_check, verify_partition,
    zaslavsky_bound, ActivationPattern, Network, NormKind, SequenceSpec,
};

fn samples(rng: &mut ChaCha8Rng, d: usize, count: usize) -> Vec<Vec<f64>> {
    (0..count).map(|_| (0..d).map(|_| rng.gen::<f64>()).collect()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn affine_pieces_reproduce_forward(seed in any::<u64>(), d in 1usize..=4, m in 1usize..=6, depth in 1usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Network::random(d, m, depth, &mut rng).unwrap();
        let xs = samples(&mut rng, d, 100);
        prop_assert!(representation_check(&net, &xs).unwrap() <= 1e-10);
    }

    #[test]
    fn one_layer_cells_partition_the_cube(seed in any::<u64>(), d in 1usize..=3, m in 1usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Network::random(d, m, 1, &mut rng).unwrap();
        let cells = enumerate_regions(&net, 1).unwrap();
        prop_assert!(cells.len() as u128 <= zaslavsky_bound(m as u32, d as u32));
        let report = verify_partition(&cells, &net, &samples(&mut rng, d, 300)).unwrap();
        prop_assert!(report.ok(), "{report:?}");
        for c in &cells {
            let w = c.witness.as_ref().unwrap();
            prop_assert_eq!(&relu_limit::forward(&net, w).unwrap().pattern, &c.pattern);
        }
    }

    #[test]
    fn deeper_domains_are_nested(seed in any::<u64>(), m in 1usize..=3, depth in 2usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        prop_assert!(check_nested(&Network::random(2, m, depth, &mut rng).unwrap()).unwrap());
    }
}

#[test]
fn census_sees_enumerated_cells() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Network::random(2, 4, 2, &mut rng).unwrap();
        let cells: BTreeSet<ActivationPattern> = enumerate_regions(&net, 2)
            .unwrap()
            .into_iter()
            .map(|c| c.pattern)
            .collect();
        let census = grid_census(&net, 200).unwrap();
        assert!(census.is_subset(&cells));
    }
}

#[test]
fn generated_networks_round_trip_exactly() {
    let spec = SequenceSpec::new(
        SequenceKind::IdentityPerturbation(PerturbationParams {
            input_dim: 2,
            width: 3,
            alpha: 2.0,
            scale: 0.5,
            distribution: Distribution::DenseUniform,
            beta: 1.5,
            bias_scale: 0.3,
            bias_direction: None,
            norm: NormKind::L2,
        }),
        7,
    )
    .unwrap();
    let net = generate_sequence(&spec, 6).unwrap();
    let text = serde_json::to_string(&net).unwrap();
    let back: Network = serde_json::from_str(&text).unwrap();
    assert_eq!(back, net);
    let spec_back: SequenceSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
    assert_eq!(generate_sequence(&spec_back, 6).unwrap(), net);
}
