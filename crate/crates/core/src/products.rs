//! Masked matrix products `∏ I_iW_i`, the bias-accumulation series
//! `c_n = Σ_i (∏_{j>i} I_jW_j) I_i b_i`, and the tail estimates that
//! control their convergence.
//!
//! Ordered products put later factors on the left:
//! `∏_{i=k}^n M_i = M_n ⋯ M_k`, and the empty product is the identity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{sub_vec, Matrix};
use crate::mask::{activation_product, ActivationMatrix};
use crate::norm::{induced_matrix_norm, vector_norm, NormKind};
use crate::sequence::{DecayModel, SequenceSpec};

/// Values above this norm count as blow-up.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;
/// Fitted decay exponents up to `1 + RATE_SLACK` count as non-summable.
pub const RATE_SLACK: f64 = 1e-6;
/// Consecutive increments that must all be below `tol` for convergence.
pub const CAUCHY_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    Diverged,
    Undecided,
}

/// How the mask `I_n` is chosen at each depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum MaskRule {
    Identity,
    /// Identity through layer `k`, all-zero afterwards.
    ZeroAfter {
        k: usize,
    },
    /// Each neuron active independently with probability `p_active`.
    Random {
        seed: u64,
        p_active: f64,
    },
    /// Masks for layers `1..=len`.
    Explicit {
        masks: Vec<ActivationMatrix>,
    },
}

impl MaskRule {
    pub fn mask(&self, n: usize, width: usize) -> Result<ActivationMatrix> {
        match self {
            MaskRule::Identity => Ok(ActivationMatrix::identity(width)),
            MaskRule::ZeroAfter { k } => Ok(if n <= *k {
                ActivationMatrix::identity(width)
            } else {
                ActivationMatrix::zero(width)
            }),
            MaskRule::Random { seed, p_active } => {
                if !(0.0..=1.0).contains(p_active) {
                    return invalid("p_active must lie in [0, 1]");
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_stream(n as u64);
                let support: Vec<usize> = (0..width).filter(|_| rng.gen_bool(*p_active)).collect();
                ActivationMatrix::from_support(support, width)
            }
            MaskRule::Explicit { masks } => {
                let m = masks
                    .get(n.wrapping_sub(1))
                    .ok_or_else(|| Error::InvalidArgument(format!("no mask given for layer {n}")))?;
                if m.width() != width {
                    return invalid(format!("mask for layer {n} has width {}, expected {width}", m.width()));
                }
                Ok(m.clone())
            }
        }
    }

    /// Number of layers the rule covers, if finite.
    pub fn covered_depth(&self) -> Option<usize> {
        match self {
            MaskRule::Explicit { masks } => Some(masks.len()),
            _ => None,
        }
    }
}

/// `I_to W_to ⋯ I_from W_from` over one-based indices of `prefix`.
pub fn partial_product(prefix: &[(ActivationMatrix, Matrix)], from: usize, to: usize) -> Result<Matrix> {
    let Some((_, first)) = prefix.first() else {
        return invalid("empty product prefix");
    };
    if from == 0 || to > prefix.len() || from > prefix.len() + 1 {
        return invalid(format!("range {from}..={to} outside prefix of length {}", prefix.len()));
    }
    if from > to {
        return Ok(Matrix::identity(first.rows()));
    }
    let mut acc: Option<Matrix> = None;
    for (mask, w) in &prefix[from - 1..to] {
        let factor = mask.apply_rows(w);
        acc = Some(match acc {
            None => factor,
            Some(a) => {
                if factor.cols() != a.rows() {
                    return invalid("incompatible factor shapes in product");
                }
                factor.matmul(&a)
            }
        });
    }
    Ok(acc.expect("nonempty range"))
}

/// Running product `∏_{i=start}^n I_iW_i` and its history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductState {
    pub start: usize,
    pub depth: usize,
    pub value: Matrix,
    /// `‖W_i − I‖` for `i = start..=depth`.
    pub norm_history: Vec<f64>,
    /// `‖state_i − state_{i−1}‖` for `i = start..=depth`; `state_{start−1} = I`.
    pub diffs: Vec<f64>,
    pub value_norms: Vec<f64>,
}

/// Running series value `c_n` and its Cauchy increments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesState {
    pub depth: usize,
    pub value: Vec<f64>,
    /// `‖c_i − c_{i−1}‖` for `i = 1..=depth`, with `c_0 = 0`.
    pub diffs: Vec<f64>,
    pub value_norms: Vec<f64>,
    /// `‖b_i‖` for `i = 1..=depth`.
    pub bias_norms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductLimit {
    pub status: Status,
    pub state: ProductState,
    /// Whether the analytic tail bound at the final depth is below `tol`.
    /// `None` when the family has no symbolic model of `‖P_n‖`.
    pub bound_certified: Option<bool>,
    pub final_tail_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesLimit {
    pub status: Status,
    pub state: SeriesState,
}

/// Verdict from a sequence of Cauchy increments.
///
/// Converged: the last `CAUCHY_WINDOW` increments are all `≤ tol`.
/// Diverged: increments are still `≥ tol` and decay no faster than `1/n`
/// between the window ending at `n/2` and the one ending at `n`, which under
/// a power-law reading makes their sum infinite.
pub fn classify_increments(diffs: &[f64], tol: f64) -> Status {
    let n = diffs.len();
    if n == 0 {
        return Status::Undecided;
    }
    let w = CAUCHY_WINDOW.min(n);
    let last = &diffs[n - w..];
    if last.iter().all(|&d| d <= tol) {
        return Status::Converged;
    }
    if n >= 4 * CAUCHY_WINDOW {
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        let recent = mean(last);
        let half = n / 2;
        let earlier = mean(&diffs[half - CAUCHY_WINDOW..half]);
        if recent >= tol && last.iter().all(|&d| d >= tol) && earlier > 0.0 {
            // fitted exponent of a ~ n^{-rate} across a doubling of n
            let rate =
                (earlier / recent).log2() / ((n as f64 - w as f64 / 2.0) / (half as f64 - w as f64 / 2.0)).log2();
            if rate <= 1.0 + RATE_SLACK {
                return Status::Diverged;
            }
        }
    }
    Status::Undecided
}

fn depth_limit(seq: &SequenceSpec, masks: &MaskRule, n_max: usize) -> usize {
    let mut n = n_max;
    if let Some(d) = seq.max_depth() {
        n = n.min(d);
    }
    if let Some(d) = masks.covered_depth() {
        n = n.min(d);
    }
    n
}

fn check_limit_args(tol: f64, n_max: usize) -> Result<()> {
    if !(tol > 0.0) {
        return invalid("tol must be positive");
    }
    if n_max < 2 {
        return invalid("n_max must be at least 2");
    }
    Ok(())
}

/// Iterates `∏_{i=2}^n I_iW_i` up to `n_max` (or until blow-up) and
/// classifies the increments.
pub fn product_limit(
    seq: &SequenceSpec,
    masks: &MaskRule,
    p: NormKind,
    tol: f64,
    n_max: usize,
) -> Result<ProductLimit> {
    check_limit_args(tol, n_max)?;
    let m = seq.width();
    let n_max = depth_limit(seq, masks, n_max);
    let identity = Matrix::identity(m);
    let mut state = ProductState {
        start: 2,
        depth: 1,
        value: identity.clone(),
        norm_history: Vec::new(),
        diffs: Vec::new(),
        value_norms: Vec::new(),
    };
    let mut blew_up = false;
    for n in 2..=n_max {
        let layer = seq.layer(n)?;
        let mask = masks.mask(n, m)?;
        let next = mask.apply_rows(&layer.weight).matmul(&state.value);
        state
            .norm_history
            .push(induced_matrix_norm(&layer.weight.sub(&identity), p));
        state.diffs.push(induced_matrix_norm(&next.sub(&state.value), p));
        let norm = induced_matrix_norm(&next, p);
        state.value_norms.push(norm);
        state.value = next;
        state.depth = n;
        if !(norm <= DIVERGENCE_THRESHOLD) {
            blew_up = true;
            break;
        }
    }
    let status = if blew_up {
        Status::Diverged
    } else {
        classify_increments(&state.diffs, tol)
    };
    let model = seq.perturbation_model(p).filter(|m| m.summable());
    let final_tail_bound =
        model.map(|model| tail_bound(&state.norm_history, state.depth.max(2), model).unwrap_or(f64::INFINITY));
    Ok(ProductLimit {
        status,
        bound_certified: final_tail_bound.map(|b| b <= tol),
        final_tail_bound,
        state,
    })
}

/// Iterates `c_n = I_n(W_n c_{n−1} + b_n)`, `c_0 = 0`, up to `n_max`.
pub fn series_limit(seq: &SequenceSpec, masks: &MaskRule, p: NormKind, tol: f64, n_max: usize) -> Result<SeriesLimit> {
    check_limit_args(tol, n_max)?;
    let m = seq.width();
    let n_max = depth_limit(seq, masks, n_max);
    let mut state = SeriesState {
        depth: 0,
        value: vec![0.0; m],
        diffs: Vec::new(),
        value_norms: Vec::new(),
        bias_norms: Vec::new(),
    };
    let mut blew_up = false;
    for n in 1..=n_max {
        let layer = seq.layer(n)?;
        let mask = masks.mask(n, m)?;
        let prev = if n == 1 {
            vec![0.0; seq.input_dim()]
        } else {
            state.value.clone()
        };
        let mut next = layer.apply(&prev);
        mask.apply_vec(&mut next);
        let before = if n == 1 { vec![0.0; m] } else { prev };
        state.diffs.push(vector_norm(&sub_vec(&next, &before), p));
        state.bias_norms.push(vector_norm(&layer.b, p));
        let norm = vector_norm(&next, p);
        state.value_norms.push(norm);
        state.value = next;
        state.depth = n;
        if !(norm <= DIVERGENCE_THRESHOLD) {
            blew_up = true;
            break;
        }
    }
    let status = if blew_up {
        Status::Diverged
    } else {
        classify_increments(&state.diffs, tol)
    };
    Ok(SeriesLimit { status, state })
}

fn check_nonnegative(values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !(*v >= 0.0)) {
        return invalid("sequence entries must be nonnegative numbers");
    }
    Ok(())
}

/// `2 (Σ_{i>cut} ‖P_i‖) · exp(Σ_{i≥2} ‖P_i‖)`.
///
/// `pnorms[k]` is `‖P_{k+2}‖`, covering `i = 2..=N`; the `tail` model
/// supplies `Σ_{i>N}` (and `Σ_{i>cut}` when `cut ≥ N`).
pub fn tail_bound(pnorms: &[f64], cut: usize, tail: DecayModel) -> Result<f64> {
    if cut < 2 {
        return invalid("tail cut must be at least 2");
    }
    check_nonnegative(pnorms)?;
    let last = pnorms.len() + 1;
    let beyond = tail.tail_after(last);
    let total: f64 = pnorms.iter().sum::<f64>() + beyond;
    let after_cut = if cut >= last {
        tail.tail_after(cut)
    } else {
        pnorms[cut - 1..].iter().sum::<f64>() + beyond
    };
    if after_cut == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * after_cut * total.exp())
}

/// Premise of the product tail bound at `(cut, n, n')`: every running mask
/// product `∏_{i=j}^k I_i` with `2 ≤ j ≤ cut + 1` has already settled by
/// `k = n`, so the terms of both expansions that end at or before `cut`
/// cancel. `masks[k]` is `I_{k+1}` and must cover `1..=n'`.
pub fn tail_bound_applies(masks: &[ActivationMatrix], cut: usize, n: usize, n_prime: usize) -> Result<bool> {
    if cut < 2 || !(cut < n && n < n_prime) || masks.len() < n_prime {
        return invalid("need 2 ≤ cut < n < n' ≤ number of masks");
    }
    for j in 2..=cut + 1 {
        let head = activation_product(&masks[j - 1..n])?;
        let longer = activation_product(&masks[j - 1..n_prime])?;
        if head != longer {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `2C (Σ_{i>cut} ‖b_i‖)`, the tail term of the bias-series Cauchy estimate
/// when every masked product `∏_{j=i}^n I_jW_j` (`i ≥ 2`) has norm `≤ C`.
///
/// `bnorms[k]` is `‖b_{k+1}‖`; `tail` supplies `Σ_{i>N}`.
pub fn series_tail_bound(bnorms: &[f64], cut: usize, tail: DecayModel, product_bound: f64) -> Result<f64> {
    check_nonnegative(bnorms)?;
    if !(product_bound >= 0.0) {
        return invalid("product bound must be nonnegative");
    }
    let n = bnorms.len();
    let after_cut = if cut >= n {
        tail.tail_after(cut)
    } else {
        bnorms[cut..].iter().sum::<f64>() + tail.tail_after(n)
    };
    if after_cut == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * product_bound * after_cut)
}

/// `exp(Σ_{i≥2} ‖P_i‖)`, which bounds every `∏ I_jW_j` with `W_j = I + P_j`.
pub fn product_norm_bound(pnorms: &[f64], tail: DecayModel) -> f64 {
    (pnorms.iter().sum::<f64>() + tail.tail_after(pnorms.len() + 1)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailLemmaCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Largest sequence `verify_tail_lemma` will enumerate.
pub const TAIL_LEMMA_MAX_LEN: usize = 20;

/// Checks `Σ_{i>p} a_i + Σ_{l≥2} Σ_{i_1<…<i_l, i_l>p} ∏ a_{i_k} ≤ (Σ_{i>p} a_i) e^{Σ a_i}`
/// by enumerating every index subset (indices one-based).
pub fn verify_tail_lemma(a: &[f64], p: usize) -> Result<TailLemmaCheck> {
    let n = a.len();
    if n > TAIL_LEMMA_MAX_LEN {
        return Err(Error::ResourceLimit(format!(
            "subset enumeration supports at most {TAIL_LEMMA_MAX_LEN} terms, got {n}"
        )));
    }
    check_nonnegative(a)?;
    let mut singles = 0.0;
    let mut multiples = 0.0;
    for subset in 1u32..(1u32 << n) {
        // highest set bit k ↔ largest index k + 1
        let max_index = (32 - subset.leading_zeros()) as usize;
        if max_index <= p {
            continue;
        }
        let prod: f64 = (0..n).filter(|&k| subset >> k & 1 == 1).map(|k| a[k]).product();
        if subset.count_ones() == 1 {
            singles += prod;
        } else {
            multiples += prod;
        }
    }
    let lhs = singles + multiples;
    let tail: f64 = a.iter().skip(p).sum();
    let rhs = tail * a.iter().sum::<f64>().exp();
    Ok(TailLemmaCheck {
        lhs,
        rhs,
        holds: lhs <= rhs + 1e-12,
    })
}

/// Smallest prefix length `N` (one-based) whose running support
/// intersection already equals the intersection of the whole list, and
/// that intersection.
pub fn stabilization_index(masks: &[ActivationMatrix]) -> Result<(usize, ActivationMatrix)> {
    let full = activation_product(masks)?;
    let mut running = masks[0].clone();
    for (k, m) in masks.iter().enumerate() {
        running = running.and(m)?;
        if running == full {
            return Ok((k + 1, full));
        }
    }
    unreachable!("running intersection reaches the full intersection at the end")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Violated,
    /// No symbolic model is available; only the finite trace is reported.
    EmpiricalOnly,
}

impl Verdict {
    fn from_model(model: Option<DecayModel>, test: impl Fn(&DecayModel) -> bool) -> Self {
        match model {
            Some(m) if test(&m) => Verdict::Holds,
            Some(_) => Verdict::Violated,
            None => Verdict::EmpiricalOnly,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheckpoint {
    pub n: usize,
    /// `Σ_{i=2}^n ‖P_i‖`.
    pub perturbation_sum: f64,
    /// `n · (Σ_{i=n+1}^N ‖P_i‖ + model tail beyond N)`.
    pub scaled_tail: f64,
    /// `Σ_{i=1}^n ‖b_i‖`.
    pub bias_sum: f64,
    /// `max_{i≤n} ‖b_i‖`.
    pub bias_sup: f64,
}

/// Hypotheses of the product and bias convergence results over a finite
/// horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub norm: NormKind,
    pub horizon: usize,
    pub perturbation_model: Option<DecayModel>,
    pub bias_model: Option<DecayModel>,
    /// `S_N = Σ_{n=2}^N ‖P_n‖`.
    pub perturbation_sum: f64,
    /// `Σ ‖P_n‖ < ∞`.
    pub summable: Verdict,
    /// `Σ_{i>n} ‖P_i‖ = o(1/n)`.
    pub tail_little_o: Verdict,
    pub bias_sup: f64,
    pub bias_sum: f64,
    pub bias_bounded: Verdict,
    pub bias_summable: Verdict,
    pub checkpoints: Vec<ConditionCheckpoint>,
}

impl ConditionReport {
    /// Hypotheses of the necessary-condition theorem: summable
    /// perturbations with `o(1/n)` tails and bounded biases.
    pub fn necessary_hypotheses_hold(&self) -> bool {
        self.summable == Verdict::Holds && self.tail_little_o == Verdict::Holds && self.bias_bounded == Verdict::Holds
    }
}

/// Log-spaced checkpoints `1, 2, 5, 10, 20, 50, …` up to and including `n`.
pub fn log_checkpoints(n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut decade = 1;
    'outer: loop {
        for k in [1, 2, 5] {
            let v = k * decade;
            if v > n {
                break 'outer;
            }
            out.push(v);
        }
        decade *= 10;
    }
    if out.last() != Some(&n) {
        out.push(n);
    }
    out
}

pub fn check_product_conditions(seq: &SequenceSpec, p: NormKind, horizon: usize) -> Result<ConditionReport> {
    if horizon < 10 {
        return invalid("horizon must be at least 10");
    }
    let horizon = seq.max_depth().map_or(horizon, |d| horizon.min(d));
    let m = seq.width();
    let identity = Matrix::identity(m);
    let mut pnorms = vec![0.0; horizon + 1]; // index n
    let mut bnorms = vec![0.0; horizon + 1];
    for n in 1..=horizon {
        let layer = seq.layer(n)?;
        if n >= 2 {
            pnorms[n] = induced_matrix_norm(&layer.weight.sub(&identity), p);
        }
        bnorms[n] = vector_norm(&layer.b, p);
    }
    let pmodel = seq.perturbation_model(p);
    let bmodel = seq.bias_model(p);
    let model_tail = pmodel.map_or(0.0, |m| m.tail_after(horizon));

    // suffix[n] = Σ_{i=n+1}^N ‖P_i‖
    let mut suffix = vec![0.0; horizon + 2];
    for n in (0..horizon).rev() {
        suffix[n] = suffix[n + 1] + pnorms[n + 1];
    }
    let mut checkpoints = Vec::new();
    let (mut psum, mut bsum, mut bsup) = (0.0, 0.0, 0.0f64);
    let marks = log_checkpoints(horizon);
    let mut next_mark = marks.iter().peekable();
    for n in 1..=horizon {
        psum += pnorms[n];
        bsum += bnorms[n];
        bsup = bsup.max(bnorms[n]);
        if next_mark.peek() == Some(&&n) {
            next_mark.next();
            checkpoints.push(ConditionCheckpoint {
                n,
                perturbation_sum: psum,
                scaled_tail: n as f64 * (suffix[n] + model_tail),
                bias_sum: bsum,
                bias_sup: bsup,
            });
        }
    }
    Ok(ConditionReport {
        norm: p,
        horizon,
        perturbation_model: pmodel,
        bias_model: bmodel,
        perturbation_sum: psum,
        summable: Verdict::from_model(pmodel, DecayModel::summable),
        tail_little_o: Verdict::from_model(pmodel, DecayModel::tail_is_little_o_inverse_n),
        bias_sup: bsup,
        bias_sum: bsum,
        bias_bounded: Verdict::from_model(bmodel, |m| m.term(1).is_finite()),
        bias_summable: Verdict::from_model(bmodel, DecayModel::summable),
        checkpoints,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(s: &[usize], m: usize) -> ActivationMatrix {
        ActivationMatrix::from_support(s.iter().copied(), m).unwrap()
    }

    #[test]
    fn partial_product_examples() {
        let id = ActivationMatrix::identity(2);
        let w1 = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let w2 = Matrix::diag(&[2.0, 3.0]);
        let prefix = vec![(id.clone(), w1.clone()), (id.clone(), w2.clone())];
        assert_eq!(partial_product(&prefix, 3, 2).unwrap(), Matrix::identity(2));
        assert_eq!(
            partial_product(&prefix, 1, 2).unwrap().to_rows(),
            vec![vec![0.0, 2.0], vec![3.0, 0.0]]
        );
        // scratch recompute
        assert_eq!(partial_product(&prefix, 1, 2).unwrap(), w2.matmul(&w1));
        let ids = vec![(id.clone(), Matrix::identity(2)); 4];
        assert_eq!(partial_product(&ids, 1, 4).unwrap(), Matrix::identity(2));
        assert!(partial_product(&prefix, 1, 3).is_err());
        assert!(partial_product(&prefix, 0, 1).is_err());
        assert!(partial_product(&[], 1, 0).is_err());
    }

    #[test]
    fn tail_bound_examples() {
        // ‖P_i‖ = 1/2^{i−1} = 2·(1/2)^i: Σ_{i≥2} = 1, Σ_{i>2} = 1/2.
        let model = DecayModel::Geometric { scale: 2.0, ratio: 0.5 };
        let pn: Vec<f64> = (2..=10).map(|i| model.term(i)).collect();
        let b = tail_bound(&pn, 2, model).unwrap();
        assert!((b - std::f64::consts::E).abs() < 1e-12);
        // truncated summation at N = 60 without a model tail
        let pn60: Vec<f64> = (2..=60).map(|i| model.term(i)).collect();
        assert!((tail_bound(&pn60, 2, DecayModel::Zero).unwrap() - b).abs() < 1e-14);

        assert_eq!(tail_bound(&[0.0; 20], 2, DecayModel::Zero).unwrap(), 0.0);
        assert_eq!(tail_bound(&[0.7], 2, DecayModel::Zero).unwrap(), 0.0);
        assert_eq!(tail_bound(&[0.7, 0.0, 0.0], 2, DecayModel::Zero).unwrap(), 0.0);
        assert!(tail_bound(&[0.7], 1, DecayModel::Zero).is_err());
        assert!(tail_bound(&[-0.1], 2, DecayModel::Zero).is_err());
    }

    #[test]
    fn tail_bound_needs_settled_masks() {
        // W_n = 1 + 0.5/n², neuron switched off for good at layer 150
        let masks: Vec<ActivationMatrix> = (1..=200)
            .map(|n| {
                if n < 150 {
                    ActivationMatrix::identity(1)
                } else {
                    ActivationMatrix::zero(1)
                }
            })
            .collect();
        let prefix: Vec<(ActivationMatrix, Matrix)> = masks
            .iter()
            .enumerate()
            .map(|(k, m)| (m.clone(), Matrix::diag(&[1.0 + 0.5 / ((k + 1) * (k + 1)) as f64])))
            .collect();
        let pnorms: Vec<f64> = (2..=200).map(|n| 0.5 / (n * n) as f64).collect();
        let bound = tail_bound(
            &pnorms,
            20,
            DecayModel::PowerLaw {
                scale: 0.5,
                exponent: 2.0,
            },
        )
        .unwrap();
        let gap = partial_product(&prefix, 2, 100)
            .unwrap()
            .sub(&partial_product(&prefix, 2, 200).unwrap());
        assert!(gap.max_abs() > bound);
        assert!(!tail_bound_applies(&masks, 20, 100, 200).unwrap());
        assert!(tail_bound_applies(&masks, 20, 160, 200).unwrap());
        assert!(tail_bound_applies(&masks, 20, 100, 100).is_err());
    }

    #[test]
    fn tail_lemma_examples() {
        let r = verify_tail_lemma(&[0.5, 0.25, 0.125], 1).unwrap();
        assert!(r.holds);
        assert!((r.rhs - 0.375 * 0.875f64.exp()).abs() < 1e-15);
        // subsets with max index > 1: every nonempty subset of {2,3} joined with optional 1
        // = (1 + 0.5)((1.25)(1.125) − 1)
        assert!((r.lhs - 1.5 * (1.25 * 1.125 - 1.0)).abs() < 1e-15);

        let r = verify_tail_lemma(&[0.0; 5], 2).unwrap();
        assert_eq!((r.lhs, r.rhs, r.holds), (0.0, 0.0, true));

        let r = verify_tail_lemma(&[1.0], 0).unwrap();
        assert_eq!(r.lhs, 1.0);
        assert!((r.rhs - std::f64::consts::E).abs() < 1e-15 && r.holds);

        assert!(matches!(verify_tail_lemma(&[0.1; 21], 3), Err(Error::ResourceLimit(_))));
    }

    #[test]
    fn stabilization_examples() {
        let id = ActivationMatrix::identity(3);
        assert_eq!(stabilization_index(&[id.clone(), id.clone()]).unwrap(), (1, id));
        let seq = [mask(&[0, 1], 3), mask(&[1, 2], 3), mask(&[1, 2], 3), mask(&[1, 2], 3)];
        assert_eq!(stabilization_index(&seq).unwrap(), (2, mask(&[1], 3)));
        assert!(stabilization_index(&[]).is_err());
    }

    #[test]
    fn increments_classification() {
        assert_eq!(classify_increments(&[0.0; 30], 1e-6), Status::Converged);
        assert_eq!(classify_increments(&[0.1; 100], 1e-6), Status::Diverged);
        let harmonic: Vec<f64> = (1..=200).map(|n| 1.0 / n as f64).collect();
        assert_eq!(classify_increments(&harmonic, 1e-6), Status::Diverged);
        let basel: Vec<f64> = (1..=200).map(|n| 1.0 / (n * n) as f64).collect();
        assert_eq!(classify_increments(&basel, 1e-6), Status::Undecided);
        assert_eq!(classify_increments(&basel, 1e-4), Status::Converged);
    }

    #[test]
    fn checkpoints() {
        assert_eq!(log_checkpoints(10), vec![1, 2, 5, 10]);
        assert_eq!(log_checkpoints(120), vec![1, 2, 5, 10, 20, 50, 100, 120]);
    }

    #[test]
    fn mask_rules() {
        assert!(MaskRule::ZeroAfter { k: 2 }.mask(2, 3).unwrap().is_identity());
        assert!(MaskRule::ZeroAfter { k: 2 }.mask(3, 3).unwrap().is_zero());
        let r = MaskRule::Random { seed: 9, p_active: 0.5 };
        assert_eq!(r.mask(7, 5).unwrap(), r.mask(7, 5).unwrap());
        let e = MaskRule::Explicit {
            masks: vec![mask(&[0], 2)],
        };
        assert!(e.mask(1, 2).is_ok() && e.mask(2, 2).is_err() && e.mask(1, 3).is_err());
    }
}
