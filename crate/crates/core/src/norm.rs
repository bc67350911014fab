//! Componentwise-monotone vector norms and their induced matrix norms.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;

/// The ℓ^p norms supported for analysis. Each is nondecreasing in the moduli
/// of the components, so its induced norm is submultiplicative and gives
/// every activation mask norm at most one. Frobenius is deliberately absent:
/// it fails the mask bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum NormKind {
    #[default]
    #[serde(rename = "l1")]
    L1,
    #[serde(rename = "l2")]
    L2,
    #[serde(rename = "linf")]
    Inf,
}

impl FromStr for NormKind {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "l1" | "1" => Ok(NormKind::L1),
            "l2" | "2" => Ok(NormKind::L2),
            "linf" | "inf" => Ok(NormKind::Inf),
            other => Err(crate::Error::InvalidArgument(format!(
                "unknown norm {other:?}, expected l1, l2 or linf"
            ))),
        }
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormKind::L1 => "l1",
            NormKind::L2 => "l2",
            NormKind::Inf => "linf",
        })
    }
}

pub fn vector_norm(v: &[f64], p: NormKind) -> f64 {
    match p {
        NormKind::L1 => v.iter().map(|x| x.abs()).sum(),
        NormKind::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        NormKind::Inf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
    }
}

/// Relative tolerance and iteration cap of the spectral-norm power iteration.
pub const SPECTRAL_RTOL: f64 = 1e-10;
pub const SPECTRAL_MAX_ITER: usize = 10_000;

/// Operator norm `sup ‖Ax‖/‖x‖`.
///
/// `L1` is the largest absolute column sum, `Inf` the largest absolute row
/// sum, `L2` the largest singular value by power iteration on `AᵀA`.
pub fn induced_matrix_norm(a: &Matrix, p: NormKind) -> f64 {
    match p {
        NormKind::L1 => (0..a.cols())
            .map(|j| (0..a.rows()).map(|i| a[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max),
        NormKind::Inf => (0..a.rows())
            .map(|i| a.row(i).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max),
        NormKind::L2 => spectral_norm(a),
    }
}

fn spectral_norm(a: &Matrix) -> f64 {
    let n = a.cols();
    if n == 0 || a.rows() == 0 || a.max_abs() == 0.0 {
        return 0.0;
    }
    // The largest column norm is a lower bound on ‖A‖₂. A start vector
    // orthogonal to the top right-singular vector shows up as an estimate
    // below it; restart from that column's basis vector.
    let (best_col, col_norm) = (0..n)
        .map(|j| (j, (0..a.rows()).map(|i| a[(i, j)].powi(2)).sum::<f64>().sqrt()))
        .fold((0, 0.0), |acc, c| if c.1 > acc.1 { c } else { acc });
    let ones = vec![1.0; n];
    let est = power_iteration(a, &ones);
    if est >= col_norm * (1.0 - 1e-12) {
        return est;
    }
    let mut basis = vec![0.0; n];
    basis[best_col] = 1.0;
    power_iteration(a, &basis).max(col_norm)
}

fn power_iteration(a: &Matrix, start: &[f64]) -> f64 {
    let at = a.transpose();
    let mut v = start.to_vec();
    normalize(&mut v);
    let mut sigma2 = 0.0;
    for _ in 0..SPECTRAL_MAX_ITER {
        let w = at.matvec(&a.matvec(&v));
        // Rayleigh quotient vᵀAᵀAv with ‖v‖ = 1.
        let next: f64 = w.iter().zip(&v).map(|(x, y)| x * y).sum();
        let wn = vector_norm(&w, NormKind::L2);
        if wn == 0.0 {
            return 0.0;
        }
        v = w.into_iter().map(|x| x / wn).collect();
        let done = (next - sigma2).abs() <= SPECTRAL_RTOL * next.abs();
        sigma2 = next;
        if done {
            break;
        }
    }
    sigma2.max(0.0).sqrt()
}

fn normalize(v: &mut [f64]) {
    let n = vector_norm(v, NormKind::L2);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}
