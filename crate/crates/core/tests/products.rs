use proptest::prelude::*;
use relu_limit::sequence::{Distribution, PerturbationParams, SequenceKind};
use relu_limit::{
    activation_product, induced_matrix_norm, partial_product, product_limit, series_limit, stabilization_index,
    tail_bound, tail_bound_applies, vector_norm, ActivationMatrix, DecayModel, MaskRule, Matrix, NormKind,
    SequenceSpec,
};

fn spec(seed: u64, m: usize, alpha: f64, scale: f64, sparse: bool) -> SequenceSpec {
    SequenceSpec::new(
        SequenceKind::IdentityPerturbation(PerturbationParams {
            input_dim: m,
            width: m,
            alpha,
            scale,
            distribution: if sparse {
                Distribution::SparseOneEntry
            } else {
                Distribution::DenseUniform
            },
            beta: 2.0,
            bias_scale: 0.5,
            bias_direction: None,
            norm: NormKind::L1,
        }),
        seed,
    )
    .unwrap()
}

fn prefix(spec: &SequenceSpec, masks: &MaskRule, depth: usize) -> Vec<(ActivationMatrix, Matrix)> {
    (1..=depth)
        .map(|n| (masks.mask(n, spec.width()).unwrap(), spec.layer(n).unwrap().weight))
        .collect()
}

fn mask_rule() -> impl Strategy<Value = MaskRule> {
    prop_oneof![
        Just(MaskRule::Identity),
        (1usize..50).prop_map(|k| MaskRule::ZeroAfter { k }),
        (any::<u64>(), 0.5f64..1.0).prop_map(|(seed, p_active)| MaskRule::Random { seed, p_active }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn product_matches_scratch_recompute(seed in any::<u64>(), m in 1usize..=4, masks in mask_rule()) {
        let s = spec(seed, m, 2.0, 0.5, seed % 2 == 0);
        let limit = product_limit(&s, &masks, NormKind::L1, 1e-6, 200).unwrap();
        let p = prefix(&s, &masks, 200);
        let scratch = partial_product(&p, 2, 200).unwrap();
        let scale = induced_matrix_norm(&scratch, NormKind::L1).max(1.0);
        prop_assert!(limit.state.value.sub(&scratch).max_abs() <= 1e-12 * scale);
        // every intermediate depth, through the recorded norms
        for n in (2..=200).step_by(19) {
            let v = induced_matrix_norm(&partial_product(&p, 2, n).unwrap(), NormKind::L1);
            prop_assert!((v - limit.state.value_norms[n - 2]).abs() <= 1e-12 * v.max(1.0));
        }
    }

    #[test]
    fn series_matches_closed_sum(seed in any::<u64>(), m in 1usize..=4, masks in mask_rule()) {
        let s = spec(seed, m, 2.0, 0.5, false);
        let depth = 120;
        let series = series_limit(&s, &masks, NormKind::L1, 1e-6, depth).unwrap();
        let p = prefix(&s, &masks, depth);
        // c_n = Σ_i (∏_{j>i} I_jW_j) I_i b_i
        let mut c = vec![0.0; m];
        for i in 1..=depth {
            let mut b = s.layer(i).unwrap().b;
            masks.mask(i, m).unwrap().apply_vec(&mut b);
            let term = partial_product(&p, i + 1, depth).unwrap().matvec(&b);
            for (acc, t) in c.iter_mut().zip(term) {
                *acc += t;
            }
        }
        let scale = vector_norm(&c, NormKind::Inf).max(1.0);
        for (a, b) in series.state.value.iter().zip(&c) {
            prop_assert!((a - b).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn product_tail_bound_holds(seed in any::<u64>(), m in 1usize..=4, masks in mask_rule(), cut in 2usize..=49) {
        let s = spec(seed, m, 2.0, 0.5, false);
        let p = prefix(&s, &masks, 200);
        let identity = Matrix::identity(m);
        let pnorms: Vec<f64> = p[1..].iter().map(|(_, w)| induced_matrix_norm(&w.sub(&identity), NormKind::L1)).collect();
        let bound = tail_bound(&pnorms, cut, DecayModel::PowerLaw { scale: 0.5, exponent: 2.0 }).unwrap();
        let masks: Vec<ActivationMatrix> = p.iter().map(|(m, _)| m.clone()).collect();
        for (n, n2) in [(50, 100), (100, 200), (50, 200)] {
            if !tail_bound_applies(&masks, cut, n, n2).unwrap() {
                continue;
            }
            let gap = partial_product(&p, 2, n).unwrap().sub(&partial_product(&p, 2, n2).unwrap());
            prop_assert!(induced_matrix_norm(&gap, NormKind::L1) <= bound);
        }
    }

    /// `‖c_{n'} − c_n‖ ≤ max_{i≤p} ‖∏_{i+1}^{n'} − ∏_{i+1}^{n}‖ Σ_{i≤p} ‖b_i‖ + 2C Σ_{p<i≤n'} ‖b_i‖`
    /// with `C` the largest masked product norm over the horizon.
    #[test]
    fn series_increments_obey_bounded_product_estimate(seed in any::<u64>(), m in 1usize..=3, masks in mask_rule()) {
        let s = spec(seed, m, 2.0, 0.5, false);
        let horizon = 80;
        let p = prefix(&s, &masks, horizon);
        let mut c_bound = 1.0f64;
        for i in 2..=horizon {
            for k in i..=horizon {
                c_bound = c_bound.max(induced_matrix_norm(&partial_product(&p, i, k).unwrap(), NormKind::L1));
            }
        }
        let series = |n: usize| series_limit(&s, &masks, NormKind::L1, 1e-6, n).unwrap().state;
        let full = series(horizon);
        let bnorm = &full.bias_norms;
        let cut = 10;
        for (n, n2) in [(20, 40), (40, 80), (20, 80)] {
            let (a, b) = (series(n).value, series(n2).value);
            let lhs = vector_norm(&a.iter().zip(&b).map(|(x, y)| x - y).collect::<Vec<_>>(), NormKind::L1);
            let head = (1..=cut)
                .map(|i| {
                    let d = partial_product(&p, i + 1, n2).unwrap().sub(&partial_product(&p, i + 1, n).unwrap());
                    induced_matrix_norm(&d, NormKind::L1)
                })
                .fold(0.0, f64::max);
            let rhs = head * bnorm[..cut].iter().sum::<f64>() + 2.0 * c_bound * bnorm[cut..n2].iter().sum::<f64>();
            prop_assert!(lhs <= rhs + 1e-12, "n = {n}, n' = {n2}: {lhs} > {rhs}");
        }
    }

    #[test]
    fn running_mask_product_settles(seed in any::<u64>(), width in 1usize..=12, len in 1usize..=60) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let masks: Vec<ActivationMatrix> = (0..len)
            .map(|_| ActivationMatrix::from_support((0..width).filter(|_| rng.gen_bool(0.8)), width).unwrap())
            .collect();
        let (n, full) = stabilization_index(&masks).unwrap();
        let mut prev = ActivationMatrix::identity(width);
        for k in 1..=len {
            let running = activation_product(&masks[..k]).unwrap();
            prop_assert!(running.is_subset(&prev));
            prop_assert_eq!(running == full, k >= n);
            prev = running;
        }
    }
}

#[test]
fn basel_series_limit() {
    let s: SequenceSpec = serde_json::from_str(
        r#"{"kind":"identity_perturbation","seed":0,"params":{"input_dim":1,"width":1,"alpha":2.0,"scale":0.0,
            "beta":2.0,"bias_scale":1.0,"bias_direction":[1.0]}}"#,
    )
    .unwrap();
    let r = series_limit(&s, &MaskRule::Identity, NormKind::L1, 1e-7, 10_000).unwrap();
    assert!((r.state.value[0] - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-3);
    assert_eq!(r.status, relu_limit::Status::Converged);
}

#[test]
fn doubling_product_diverges() {
    let s = SequenceSpec::new(
        SequenceKind::Constant(relu_limit::sequence::ConstantParams {
            weight: Matrix::diag(&[2.0]),
            b: vec![0.0],
            first_weight: None,
        }),
        0,
    )
    .unwrap();
    let r = product_limit(&s, &MaskRule::Identity, NormKind::L1, 1e-6, 500).unwrap();
    assert_eq!(r.status, relu_limit::Status::Diverged);
    assert!(r.state.depth < 500);
}
