//! Desk-scale invariant suite behind `relu-limit verify`.

use std::collections::BTreeSet;

use anyhow::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use relu_limit::products::MaskRule;
use relu_limit::sequence::{Distribution, PerturbationParams, SequenceKind};
use relu_limit::{
    activation_product, affine_piece, check_nested, enumerate_regions, forward, generate_sequence, grid_census,
    partial_product, product_limit, representation_check, series_limit, stabilization_index, tail_bound,
    tail_bound_applies, verify_tail_lemma, zaslavsky_bound, ActivationMatrix, ActivationPattern, DecayModel, Matrix,
    Network, NormKind, SequenceSpec,
};
use serde::Serialize;

use crate::output::write_json;
use crate::{exit, Fault, Global, VerifyArgs};

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub cases: usize,
    pub detail: String,
}

type Check = fn(u64, Option<Fault>) -> Result<CheckOutcome>;

const CHECKS: [(&str, Check); 8] = [
    ("representation_check", representation),
    ("regions_census", regions_census),
    ("nestedness", nestedness),
    ("tail_lemma", tail_lemma),
    ("tail_bound", tail_bound_check),
    ("stabilization", stabilization),
    ("product_recompute", product_recompute),
    ("basel_series", basel_series),
];

fn outcome(name: &'static str, passed: bool, cases: usize, detail: String) -> Result<CheckOutcome> {
    Ok(CheckOutcome {
        name,
        passed,
        cases,
        detail,
    })
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn uniform(rng: &mut ChaCha8Rng, d: usize, count: usize) -> Vec<Vec<f64>> {
    (0..count).map(|_| (0..d).map(|_| rng.gen::<f64>()).collect()).collect()
}

/// Max `|forward − affine piece|` with the piece taken from a pattern whose
/// first neuron in the last layer is flipped.
fn flipped_discrepancy(net: &Network, samples: &[Vec<f64>]) -> Result<f64> {
    let mut worst = 0.0f64;
    for x in samples {
        let f = forward(net, x)?;
        let mut layers = f.pattern.layers().to_vec();
        let last = layers.last_mut().expect("depth ≥ 1");
        last.set(0, !last.is_active(0));
        let piece = affine_piece(net, &ActivationPattern::new(layers)?)?;
        let diff = piece
            .evaluate(x)
            .iter()
            .zip(&f.y)
            .fold(0.0f64, |m, (u, v)| m.max((u - v).abs()));
        worst = worst.max(diff);
    }
    Ok(worst)
}

fn representation(seed: u64, fault: Option<Fault>) -> Result<CheckOutcome> {
    let nets = 10;
    let worst = (0..nets)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng_for(seed, k);
            let (d, m, depth) = (rng.gen_range(1..=4), rng.gen_range(1..=6), rng.gen_range(1..=8));
            let net = Network::random(d, m, depth, &mut rng)?;
            let samples = uniform(&mut rng, d, 200);
            match fault {
                Some(Fault::FlipMask) => flipped_discrepancy(&net, &samples),
                None => Ok(representation_check(&net, &samples)?),
            }
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    outcome(
        "representation_check",
        worst <= 1e-10,
        nets as usize,
        format!("max discrepancy {worst:e}"),
    )
}

fn regions_census(seed: u64, _: Option<Fault>) -> Result<CheckOutcome> {
    let nets = 3;
    let mut failures = Vec::new();
    for k in 0..nets {
        let mut rng = rng_for(seed, 100 + k);
        let m = rng.gen_range(1..=5);
        let net = Network::random(2, m, 1, &mut rng)?;
        let cells = enumerate_regions(&net, 1)?;
        let bound = zaslavsky_bound(m as u32, 2);
        let enumerated: BTreeSet<ActivationPattern> = cells.iter().map(|c| c.pattern.clone()).collect();
        let census = grid_census(&net, 200)?;
        if cells.len() as u128 > bound || !census.is_subset(&enumerated) {
            failures.push(format!(
                "net {k}: {} cells, bound {bound}, census {}",
                cells.len(),
                census.len()
            ));
        }
    }
    let detail = if failures.is_empty() {
        "cell counts within bound; lattice patterns enumerated".into()
    } else {
        failures.join("; ")
    };
    outcome("regions_census", failures.is_empty(), nets as usize, detail)
}

fn nestedness(seed: u64, _: Option<Fault>) -> Result<CheckOutcome> {
    let nets = 3;
    let mut ok = true;
    for k in 0..nets {
        let mut rng = rng_for(seed, 200 + k);
        let m = rng.gen_range(1..=3);
        let depth = rng.gen_range(2..=3);
        ok &= check_nested(&Network::random(2, m, depth, &mut rng)?)?;
    }
    outcome("nestedness", ok, nets as usize, format!("domains nested: {ok}"))
}

fn tail_lemma(seed: u64, _: Option<Fault>) -> Result<CheckOutcome> {
    let mut rng = rng_for(seed, 300);
    let mut cases = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..200 {
        let len = rng.gen_range(1..=12);
        let a: Vec<f64> = (0..len).map(|_| rng.gen::<f64>()).collect();
        for p in 0..=len {
            let r = verify_tail_lemma(&a, p)?;
            worst = worst.max(r.lhs - r.rhs);
            cases += 1;
        }
    }
    outcome("tail_lemma", worst <= 1e-12, cases, format!("max lhs − rhs {worst:e}"))
}

fn perturbation_spec(seed: u64, width: usize, alpha: f64, scale: f64) -> Result<SequenceSpec> {
    Ok(SequenceSpec::new(
        SequenceKind::IdentityPerturbation(PerturbationParams {
            input_dim: width,
            width,
            alpha,
            scale,
            distribution: Distribution::DenseUniform,
            beta: 2.0,
            bias_scale: 0.5,
            bias_direction: None,
            norm: NormKind::L1,
        }),
        seed,
    )?)
}

/// Masked prefix `(I_n, W_n)` for `n = 1..=depth`.
fn masked_prefix(spec: &SequenceSpec, masks: &MaskRule, depth: usize) -> Result<Vec<(ActivationMatrix, Matrix)>> {
    (1..=depth)
        .map(|n| Ok((masks.mask(n, spec.width())?, spec.layer(n)?.weight)))
        .collect()
}

fn tail_bound_check(seed: u64, _: Option<Fault>) -> Result<CheckOutcome> {
    let geometric = DecayModel::Geometric { scale: 2.0, ratio: 0.5 };
    let pn: Vec<f64> = (2..=10).map(|i| geometric.term(i)).collect();
    let e = tail_bound(&pn, 2, geometric)?;
    let mut ok = (e - std::f64::consts::E).abs() < 1e-12;
    let mut worst_ratio = 0.0f64;
    let mut cases = 1;
    for k in 0..4 {
        let spec = perturbation_spec(seed + k, 3, 2.0, 0.5)?;
        let masks = MaskRule::Random {
            seed: seed + k,
            p_active: 0.9,
        };
        let prefix = masked_prefix(&spec, &masks, 200)?;
        let pnorms: Vec<f64> = (2..=200).map(|n| 0.5 / (n * n) as f64).collect();
        let bound = tail_bound(
            &pnorms,
            20,
            DecayModel::PowerLaw {
                scale: 0.5,
                exponent: 2.0,
            },
        )?;
        let mask_seq: Vec<ActivationMatrix> = prefix.iter().map(|(m, _)| m.clone()).collect();
        for (n, n2) in [(50, 100), (100, 200), (50, 200)] {
            // the bound is claimed only once the mask tails have settled
            if !tail_bound_applies(&mask_seq, 20, n, n2)? {
                continue;
            }
            cases += 1;
            let gap = partial_product(&prefix, 2, n)?.sub(&partial_product(&prefix, 2, n2)?);
            let diff = relu_limit::induced_matrix_norm(&gap, NormKind::L1);
            worst_ratio = worst_ratio.max(diff / bound);
            ok &= diff <= bound;
        }
    }
    outcome(
        "tail_bound",
        ok,
        cases,
        format!("geometric example {e:.15}; worst diff/bound {worst_ratio:.3e}"),
    )
}

fn stabilization(seed: u64, _: Option<Fault>) -> Result<CheckOutcome> {
    let mut rng = rng_for(seed, 400);
    let runs = 200;
    let mut ok = true;
    for _ in 0..runs {
        let width = rng.gen_range(1..=8);
        let p = rng.gen_range(0.5..1.0);
        let masks: Vec<ActivationMatrix> = (0..100)
            .map(|_| ActivationMatrix::from_support((0..width).filter(|_| rng.gen_bool(p)), width))
            .collect::<relu_limit::Result<_>>()?;
        let (n, full) = stabilization_index(&masks)?;
        for k in 1..=masks.len() {
            let running = activation_product(&masks[..k])?;
            ok &= (k >= n) == (running == full);
            if k > 1 {
                ok &= running.is_subset(&activation_product(&masks[..k - 1])?);
            }
        }
    }
    outcome(
        "stabilization",
        ok,
        runs,
        format!("running products constant after the index: {ok}"),
    )
}

fn product_recompute(seed: u64, _: Option<Fault>) -> Result<CheckOutcome> {
    let mut worst = 0.0f64;
    let depth = 100;
    for k in 0..3 {
        let spec = perturbation_spec(seed + k, 3, 2.0, 0.5)?;
        let masks = MaskRule::Random {
            seed: seed + k,
            p_active: 0.95,
        };
        let prefix = masked_prefix(&spec, &masks, depth)?;
        let mut running = Matrix::identity(3);
        for n in 2..=depth {
            let (mask, w) = &prefix[n - 1];
            running = mask.apply_rows(w).matmul(&running);
            let scratch = partial_product(&prefix, 2, n)?;
            let scale = relu_limit::induced_matrix_norm(&running, NormKind::L1).max(1.0);
            worst = worst.max(running.sub(&scratch).max_abs() / scale);
        }
        let limit = product_limit(&spec, &masks, NormKind::L1, 1e-6, depth)?;
        worst = worst.max(limit.state.value.sub(&running).max_abs());
    }
    outcome(
        "product_recompute",
        worst <= 1e-12,
        3,
        format!("max relative recompute gap {worst:e}"),
    )
}

fn basel_series(_: u64, _: Option<Fault>) -> Result<CheckOutcome> {
    let spec: SequenceSpec = serde_json::from_str(
        r#"{"kind":"identity_perturbation","seed":0,"params":{"input_dim":1,"width":1,"alpha":2.0,"scale":0.0,
            "beta":2.0,"bias_scale":1.0,"bias_direction":[1.0]}}"#,
    )?;
    let series = series_limit(&spec, &MaskRule::Identity, NormKind::L1, 1e-7, 10_000)?;
    let target = std::f64::consts::PI.powi(2) / 6.0;
    let err = (series.state.value[0] - target).abs();
    let net = generate_sequence(&spec, 3)?;
    let exact = forward(&net, &[0.5])?.y[0] - 0.5 - (1.0 + 0.25 + 1.0 / 9.0);
    outcome(
        "basel_series",
        err < 1e-3 && exact.abs() < 1e-15,
        1,
        format!("|c_10000 − π²/6| = {err:e}"),
    )
}

#[derive(Serialize)]
struct SuiteReport {
    seed: u64,
    filter: Option<String>,
    fault: Option<Fault>,
    checks: Vec<CheckOutcome>,
    passed: bool,
}

pub fn run(g: &Global, a: &VerifyArgs) -> Result<u8> {
    let selected: Vec<&(&str, Check)> = CHECKS
        .iter()
        .filter(|(name, _)| a.filter.as_deref().is_none_or(|f| name.contains(f)))
        .collect();
    if selected.is_empty() {
        return Err(relu_limit::Error::InvalidArgument(format!("no check matches filter {:?}", a.filter)).into());
    }
    let checks = selected
        .iter()
        .map(|(_, check)| check(g.seed, a.fault))
        .collect::<Result<Vec<_>>>()?;
    let passed = checks.iter().all(|c| c.passed);
    for c in &checks {
        println!(
            "{:<22} {}  ({})",
            c.name,
            if c.passed { "PASS" } else { "FAIL" },
            c.detail
        );
    }
    write_json(
        &g.out_dir().join("verify.json"),
        &SuiteReport {
            seed: g.seed,
            filter: a.filter.clone(),
            fault: a.fault,
            checks: checks.clone(),
            passed,
        },
    )?;
    if !passed {
        let failing: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
        eprintln!("FAILED: {}", failing.join(", "));
        return Ok(exit::PROPERTY_FAILURE);
    }
    Ok(exit::OK)
}
