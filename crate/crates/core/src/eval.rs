//! Exact forward evaluation and the affine-piece representation.
//!
//! On the activation domain of a pattern `(I_1, …, I_n)` the network equals
//! `A x + c` with `A = I_nW_n ⋯ I_1W_1` and
//! `c = Σ_i (I_nW_n ⋯ I_{i+1}W_{i+1}) I_i b_i`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::Matrix;
use crate::mask::{ActivationMatrix, ActivationPattern};
use crate::network::Network;
use crate::norm::{vector_norm, NormKind};

/// Output of the last hidden layer and the pattern that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub y: Vec<f64>,
    pub pattern: ActivationPattern,
    /// Smallest `|pre-activation|` seen over all layers and neurons.
    pub min_margin: f64,
    /// `(layer, neuron)` attaining `min_margin`, layer one-based.
    pub min_margin_at: Option<(usize, usize)>,
}

fn check_input(net: &Network, x: &[f64]) -> Result<()> {
    if x.len() != net.input_dim() {
        return invalid(format!(
            "input has length {}, network expects {}",
            x.len(),
            net.input_dim()
        ));
    }
    Ok(())
}

/// Evaluates `x^(k) = σ(W_k x^(k-1) + b_k)` through every hidden layer.
///
/// A neuron is active iff its pre-activation is strictly positive; an exact
/// zero counts as deactivated.
pub fn forward(net: &Network, x: &[f64]) -> Result<Forward> {
    check_input(net, x)?;
    let mut h = x.to_vec();
    let mut masks = Vec::with_capacity(net.depth());
    let mut min_margin = f64::INFINITY;
    let mut min_margin_at = None;
    for (k, layer) in net.layers().iter().enumerate() {
        let mut z = layer.apply(&h);
        for (j, v) in z.iter().enumerate() {
            if v.abs() < min_margin {
                min_margin = v.abs();
                min_margin_at = Some((k + 1, j));
            }
        }
        let mask = ActivationMatrix::from_positive(&z);
        mask.apply_vec(&mut z);
        masks.push(mask);
        h = z;
    }
    Ok(Forward {
        y: h,
        pattern: ActivationPattern::new(masks)?,
        min_margin,
        min_margin_at,
    })
}

/// The pair `(A, c)` with `N_n(x) = A x + c` on the domain of `pattern`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinePiece {
    #[serde(rename = "A")]
    pub a: Matrix,
    pub c: Vec<f64>,
    pub pattern: ActivationPattern,
}

impl AffinePiece {
    pub fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.a.matvec(x);
        y.iter_mut().zip(&self.c).for_each(|(v, c)| *v += c);
        y
    }
}

/// Builds the affine piece of `net` for `pattern` via the recurrence
/// `A ← I_kW_k A`, `c ← I_k(W_k c + b_k)`.
pub fn affine_piece(net: &Network, pattern: &ActivationPattern) -> Result<AffinePiece> {
    if pattern.depth() != net.depth() {
        return invalid(format!(
            "pattern has {} layers, network has {}",
            pattern.depth(),
            net.depth()
        ));
    }
    if pattern.width() != net.width() {
        return invalid(format!(
            "pattern width {} does not match network width {}",
            pattern.width(),
            net.width()
        ));
    }
    let mut a = Matrix::eye(net.input_dim(), net.input_dim());
    let mut c = vec![0.0; net.input_dim()];
    for (layer, mask) in net.layers().iter().zip(pattern.layers()) {
        a = mask.apply_rows(&layer.weight.matmul(&a));
        c = layer.apply(&c);
        mask.apply_vec(&mut c);
    }
    Ok(AffinePiece {
        a,
        c,
        pattern: pattern.clone(),
    })
}

/// Largest `‖forward(x) − piece(x)‖_∞` over `samples`, where the piece is
/// taken for each sample's own pattern.
pub fn representation_check(net: &Network, samples: &[Vec<f64>]) -> Result<f64> {
    if samples.is_empty() {
        return invalid("representation_check needs at least one sample");
    }
    for x in samples {
        check_input(net, x)?;
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return invalid("samples must lie in the unit cube");
        }
    }
    samples
        .par_iter()
        .map(|x| {
            let f = forward(net, x)?;
            let piece = affine_piece(net, &f.pattern)?;
            Ok(vector_norm(
                &crate::linalg::sub_vec(&f.y, &piece.evaluate(x)),
                NormKind::Inf,
            ))
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

/// Applies the read-out `W_o y + b_o`.
pub fn output_map(net: &Network, y: &[f64]) -> Result<Vec<f64>> {
    let out = net
        .output_layer()
        .ok_or_else(|| crate::Error::InvalidState("network has no output layer".into()))?;
    if y.len() != net.width() {
        return invalid(format!(
            "hidden vector has length {}, width is {}",
            y.len(),
            net.width()
        ));
    }
    Ok(out.apply(y))
}
