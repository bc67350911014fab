//! Generators for infinite weight/bias families `{W_n}`, `{b_n}`.
//!
//! Layer `n` is drawn from its own ChaCha stream of the spec's seed, so the
//! depth-`n` network is always a prefix of the depth-`n'` network and any
//! layer can be realized without generating its predecessors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::Matrix;
use crate::network::{Layer, Network};
use crate::norm::{induced_matrix_norm, vector_norm, NormKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    /// i.i.d. uniform entries on [−1, 1].
    #[default]
    DenseUniform,
    /// A single ±1 entry at a uniformly chosen position.
    SparseOneEntry,
}

fn default_rank() -> usize {
    1
}

/// `W_n = I + P_n` with `‖P_n‖ = scale / n^alpha` and
/// `‖b_n‖ = bias_scale / n^beta`, both in `norm`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationParams {
    pub input_dim: usize,
    pub width: usize,
    pub alpha: f64,
    pub scale: f64,
    #[serde(default)]
    pub distribution: Distribution,
    pub beta: f64,
    pub bias_scale: f64,
    /// Fixed bias direction; drawn fresh per layer when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias_direction: Option<Vec<f64>>,
    #[serde(default)]
    pub norm: NormKind,
}

/// Residual-unit collapse: `P_n = U_n V_n` with `U_n` of shape `m×rank`,
/// rescaled to `‖P_n‖ = scale / n^alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResnetParams {
    pub input_dim: usize,
    pub width: usize,
    #[serde(default = "default_rank")]
    pub rank: usize,
    pub alpha: f64,
    pub scale: f64,
    pub beta: f64,
    pub bias_scale: f64,
    #[serde(default)]
    pub norm: NormKind,
}

/// The same `(W, b)` at every layer; layer 1 may use its own `m×d` weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantParams {
    #[serde(rename = "W")]
    pub weight: Matrix,
    pub b: Vec<f64>,
    #[serde(rename = "W1", default, skip_serializing_if = "Option::is_none")]
    pub first_weight: Option<Matrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SequenceKind {
    IdentityPerturbation(PerturbationParams),
    Constant(ConstantParams),
    ResnetLike(ResnetParams),
    /// A finite list of layers; depths beyond it are unavailable.
    Explicit(Network),
}

/// A reproducible recipe for an infinite network family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecFile", into = "SpecFile")]
pub struct SequenceSpec {
    pub kind: SequenceKind,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    kind: String,
    params: serde_json::Value,
    #[serde(default)]
    seed: u64,
}

impl TryFrom<SpecFile> for SequenceSpec {
    type Error = Error;
    fn try_from(f: SpecFile) -> Result<Self> {
        fn parse<T: serde::de::DeserializeOwned>(v: serde_json::Value) -> Result<T> {
            serde_json::from_value(v).map_err(|e| Error::InvalidArgument(format!("bad params: {e}")))
        }
        let kind = match f.kind.as_str() {
            "identity_perturbation" => SequenceKind::IdentityPerturbation(parse(f.params)?),
            "constant" => SequenceKind::Constant(parse(f.params)?),
            "resnet_like" => SequenceKind::ResnetLike(parse(f.params)?),
            "explicit" => SequenceKind::Explicit(parse(f.params)?),
            other => return invalid(format!("unknown sequence kind {other:?}")),
        };
        SequenceSpec::new(kind, f.seed)
    }
}

impl From<SequenceSpec> for SpecFile {
    fn from(s: SequenceSpec) -> Self {
        let (kind, params) = match s.kind {
            SequenceKind::IdentityPerturbation(p) => ("identity_perturbation", serde_json::to_value(p)),
            SequenceKind::Constant(p) => ("constant", serde_json::to_value(p)),
            SequenceKind::ResnetLike(p) => ("resnet_like", serde_json::to_value(p)),
            SequenceKind::Explicit(n) => ("explicit", serde_json::to_value(n)),
        };
        SpecFile {
            kind: kind.to_string(),
            params: params.expect("params serialize"),
            seed: s.seed,
        }
    }
}

/// Symbolic model of a nonnegative sequence `a_n`, used for tails that no
/// finite computation can reach.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum DecayModel {
    Zero,
    /// `a_n = scale / n^exponent`.
    PowerLaw {
        scale: f64,
        exponent: f64,
    },
    /// `a_n = scale · ratio^n`.
    Geometric {
        scale: f64,
        ratio: f64,
    },
    /// `a_n = value` for every n.
    Constant {
        value: f64,
    },
}

impl DecayModel {
    pub fn term(&self, n: usize) -> f64 {
        let n = n as f64;
        match *self {
            DecayModel::Zero => 0.0,
            DecayModel::PowerLaw { scale, exponent } => scale / n.powf(exponent),
            DecayModel::Geometric { scale, ratio } => scale * ratio.powf(n),
            DecayModel::Constant { value } => value,
        }
    }

    pub fn summable(&self) -> bool {
        match *self {
            DecayModel::Zero => true,
            DecayModel::PowerLaw { scale, exponent } => scale == 0.0 || exponent > 1.0,
            DecayModel::Geometric { scale, ratio } => scale == 0.0 || ratio < 1.0,
            DecayModel::Constant { value } => value == 0.0,
        }
    }

    /// An upper bound on `Σ_{i>n} a_i` (`+∞` when not summable). Power laws
    /// use the integral comparison `∫_n^∞ scale·x^{−α} dx`.
    pub fn tail_after(&self, n: usize) -> f64 {
        if !self.summable() {
            return f64::INFINITY;
        }
        let nf = n as f64;
        match *self {
            DecayModel::Zero | DecayModel::Constant { .. } => 0.0,
            DecayModel::PowerLaw { scale, exponent } => {
                if scale == 0.0 {
                    0.0
                } else if n == 0 {
                    // a_1 + ∫_1^∞
                    scale + scale / (exponent - 1.0)
                } else {
                    scale * nf.powf(1.0 - exponent) / (exponent - 1.0)
                }
            }
            DecayModel::Geometric { scale, ratio } => scale * ratio.powf(nf + 1.0) / (1.0 - ratio),
        }
    }

    /// Whether `Σ_{i>n} a_i = o(1/n)`.
    pub fn tail_is_little_o_inverse_n(&self) -> bool {
        match *self {
            DecayModel::Zero => true,
            DecayModel::PowerLaw { scale, exponent } => scale == 0.0 || exponent > 2.0,
            DecayModel::Geometric { scale, ratio } => scale == 0.0 || ratio < 1.0,
            DecayModel::Constant { value } => value == 0.0,
        }
    }
}

fn positive_dims(d: usize, m: usize) -> Result<()> {
    if d == 0 || m == 0 {
        return invalid("input_dim and width must be positive");
    }
    Ok(())
}

fn check_rates(alpha: f64, scale: f64, beta: f64, bias_scale: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return invalid(format!("alpha must be a positive finite number, got {alpha}"));
    }
    if !(scale.is_finite() && scale >= 0.0) {
        return invalid(format!("scale must be finite and nonnegative, got {scale}"));
    }
    if !(beta.is_finite() && beta >= 0.0) {
        return invalid(format!("beta must be finite and nonnegative, got {beta}"));
    }
    if !(bias_scale.is_finite() && bias_scale >= 0.0) {
        return invalid(format!("bias_scale must be finite and nonnegative, got {bias_scale}"));
    }
    Ok(())
}

impl SequenceSpec {
    pub fn new(kind: SequenceKind, seed: u64) -> Result<Self> {
        match &kind {
            SequenceKind::IdentityPerturbation(p) => {
                positive_dims(p.input_dim, p.width)?;
                check_rates(p.alpha, p.scale, p.beta, p.bias_scale)?;
                if let Some(dir) = &p.bias_direction {
                    if dir.len() != p.width || dir.iter().any(|v| !v.is_finite()) || vector_norm(dir, p.norm) == 0.0 {
                        return invalid("bias_direction must be a finite nonzero vector of length width");
                    }
                }
            }
            SequenceKind::ResnetLike(p) => {
                positive_dims(p.input_dim, p.width)?;
                check_rates(p.alpha, p.scale, p.beta, p.bias_scale)?;
                if p.rank == 0 {
                    return invalid("rank must be positive");
                }
            }
            SequenceKind::Constant(p) => {
                let m = p.b.len();
                if m == 0 || p.weight.shape() != (m, m) {
                    return invalid("constant W must be square with one row per bias entry");
                }
                if let Some(w1) = &p.first_weight {
                    if w1.rows() != m || w1.cols() == 0 {
                        return invalid("W1 must have one row per bias entry");
                    }
                }
                if !p.weight.is_finite() || p.b.iter().any(|v| !v.is_finite()) {
                    return invalid("constant layer must be finite");
                }
            }
            SequenceKind::Explicit(_) => {}
        }
        Ok(SequenceSpec { kind, seed })
    }

    pub fn input_dim(&self) -> usize {
        match &self.kind {
            SequenceKind::IdentityPerturbation(p) => p.input_dim,
            SequenceKind::ResnetLike(p) => p.input_dim,
            SequenceKind::Constant(p) => p.first_weight.as_ref().map_or(p.b.len(), |w| w.cols()),
            SequenceKind::Explicit(n) => n.input_dim(),
        }
    }

    pub fn width(&self) -> usize {
        match &self.kind {
            SequenceKind::IdentityPerturbation(p) => p.width,
            SequenceKind::ResnetLike(p) => p.width,
            SequenceKind::Constant(p) => p.b.len(),
            SequenceKind::Explicit(n) => n.width(),
        }
    }

    /// Number of realizable layers, if finite.
    pub fn max_depth(&self) -> Option<usize> {
        match &self.kind {
            SequenceKind::Explicit(n) => Some(n.depth()),
            _ => None,
        }
    }

    /// The norm in which the generator's rates are stated.
    pub fn declared_norm(&self) -> Option<NormKind> {
        match &self.kind {
            SequenceKind::IdentityPerturbation(p) => Some(p.norm),
            SequenceKind::ResnetLike(p) => Some(p.norm),
            _ => None,
        }
    }

    /// Symbolic model of `‖P_n‖ = ‖W_n − I‖` for `n ≥ 2`, when one exists.
    pub fn perturbation_model(&self, norm: NormKind) -> Option<DecayModel> {
        match &self.kind {
            SequenceKind::IdentityPerturbation(PerturbationParams {
                alpha,
                scale,
                norm: declared,
                ..
            })
            | SequenceKind::ResnetLike(ResnetParams {
                alpha,
                scale,
                norm: declared,
                ..
            }) if *declared == norm => Some(if *scale == 0.0 {
                DecayModel::Zero
            } else {
                DecayModel::PowerLaw {
                    scale: *scale,
                    exponent: *alpha,
                }
            }),
            SequenceKind::Constant(p) => {
                let dist = induced_matrix_norm(&p.weight.sub(&Matrix::identity(p.b.len())), norm);
                Some(if dist == 0.0 {
                    DecayModel::Zero
                } else {
                    DecayModel::Constant { value: dist }
                })
            }
            _ => None,
        }
    }

    /// Symbolic model of `‖b_n‖`, when one exists.
    pub fn bias_model(&self, norm: NormKind) -> Option<DecayModel> {
        match &self.kind {
            SequenceKind::IdentityPerturbation(PerturbationParams {
                beta,
                bias_scale,
                norm: declared,
                ..
            })
            | SequenceKind::ResnetLike(ResnetParams {
                beta,
                bias_scale,
                norm: declared,
                ..
            }) if *declared == norm => Some(if *bias_scale == 0.0 {
                DecayModel::Zero
            } else if *beta == 0.0 {
                DecayModel::Constant { value: *bias_scale }
            } else {
                DecayModel::PowerLaw {
                    scale: *bias_scale,
                    exponent: *beta,
                }
            }),
            SequenceKind::Constant(p) => {
                let v = vector_norm(&p.b, norm);
                Some(if v == 0.0 {
                    DecayModel::Zero
                } else {
                    DecayModel::Constant { value: v }
                })
            }
            _ => None,
        }
    }

    fn rng(&self, n: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(n as u64);
        rng
    }

    /// Realizes layer `n` (one-based).
    pub fn layer(&self, n: usize) -> Result<Layer> {
        if n == 0 {
            return invalid("layers are numbered from 1");
        }
        let cols = if n == 1 { self.input_dim() } else { self.width() };
        let m = self.width();
        match &self.kind {
            SequenceKind::IdentityPerturbation(p) => {
                let mut rng = self.rng(n);
                let target = p.scale / (n as f64).powf(p.alpha);
                let raw = match p.distribution {
                    Distribution::DenseUniform => {
                        let data = (0..m * cols).map(|_| rng.gen_range(-1.0..=1.0)).collect();
                        Matrix::from_row_major(m, cols, data)?
                    }
                    Distribution::SparseOneEntry => {
                        let mut e = Matrix::zeros(m, cols);
                        let i = rng.gen_range(0..m);
                        let j = rng.gen_range(0..cols);
                        e[(i, j)] = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                        e
                    }
                };
                let weight = Matrix::eye(m, cols).add(&rescale(raw, target, p.norm));
                let b = bias(
                    &mut rng,
                    m,
                    p.bias_direction.as_deref(),
                    p.bias_scale,
                    p.beta,
                    n,
                    p.norm,
                );
                Layer::new(weight, b)
            }
            SequenceKind::ResnetLike(p) => {
                let mut rng = self.rng(n);
                let target = p.scale / (n as f64).powf(p.alpha);
                let u =
                    Matrix::from_row_major(m, p.rank, (0..m * p.rank).map(|_| rng.gen_range(-1.0..=1.0)).collect())?;
                let v = Matrix::from_row_major(
                    p.rank,
                    cols,
                    (0..p.rank * cols).map(|_| rng.gen_range(-1.0..=1.0)).collect(),
                )?;
                let weight = Matrix::eye(m, cols).add(&rescale(u.matmul(&v), target, p.norm));
                let b = bias(&mut rng, m, None, p.bias_scale, p.beta, n, p.norm);
                Layer::new(weight, b)
            }
            SequenceKind::Constant(p) => {
                let weight = match (&p.first_weight, n) {
                    (Some(w1), 1) => w1.clone(),
                    _ => p.weight.clone(),
                };
                Layer::new(weight, p.b.clone())
            }
            SequenceKind::Explicit(net) => {
                if n > net.depth() {
                    return invalid(format!("explicit sequence has only {} layers", net.depth()));
                }
                Ok(net.layer(n).clone())
            }
        }
    }
}

fn rescale(raw: Matrix, target: f64, norm: NormKind) -> Matrix {
    let current = induced_matrix_norm(&raw, norm);
    if current == 0.0 || target == 0.0 {
        return Matrix::zeros(raw.rows(), raw.cols());
    }
    raw.scale(target / current)
}

fn bias(
    rng: &mut ChaCha8Rng,
    m: usize,
    direction: Option<&[f64]>,
    scale: f64,
    beta: f64,
    n: usize,
    norm: NormKind,
) -> Vec<f64> {
    let dir: Vec<f64> = match direction {
        Some(d) => d.to_vec(),
        None => (0..m).map(|_| rng.gen_range(-1.0..=1.0)).collect(),
    };
    let target = scale / (n as f64).powf(beta);
    let len = vector_norm(&dir, norm);
    if len == 0.0 || target == 0.0 {
        return vec![0.0; m];
    }
    dir.into_iter().map(|v| v * target / len).collect()
}

/// The depth-`depth` prefix of the family.
pub fn generate_sequence(spec: &SequenceSpec, depth: usize) -> Result<Network> {
    if depth == 0 {
        return invalid("depth must be at least 1");
    }
    if let SequenceKind::Explicit(net) = &spec.kind {
        return net.truncated(depth);
    }
    let layers = (1..=depth).map(|n| spec.layer(n)).collect::<Result<Vec<_>>>()?;
    Network::new(spec.input_dim(), spec.width(), layers)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn perturbation(alpha: f64, scale: f64, beta: f64, bias_scale: f64) -> PerturbationParams {
        PerturbationParams {
            input_dim: 3,
            width: 4,
            alpha,
            scale,
            distribution: Distribution::DenseUniform,
            beta,
            bias_scale,
            bias_direction: None,
            norm: NormKind::L1,
        }
    }

    #[test]
    fn constant_identity() {
        let spec = SequenceSpec::new(
            SequenceKind::Constant(ConstantParams {
                weight: Matrix::identity(2),
                b: vec![0.0, 0.0],
                first_weight: None,
            }),
            0,
        )
        .unwrap();
        assert_eq!(generate_sequence(&spec, 10).unwrap(), Network::identity(2, 10));
    }

    #[test]
    fn perturbation_norms_match_rates() {
        let spec = SequenceSpec::new(SequenceKind::IdentityPerturbation(perturbation(2.0, 0.5, 1.5, 0.3)), 11).unwrap();
        let net = generate_sequence(&spec, 40).unwrap();
        for n in 2..=40 {
            let l = net.layer(n);
            let p = induced_matrix_norm(&l.weight.sub(&Matrix::identity(4)), NormKind::L1);
            let bound = 0.5 / (n as f64).powi(2);
            assert!(p <= bound + 1e-12 && p >= bound - 1e-12, "n={n}: {p} vs {bound}");
            assert!(vector_norm(&l.b, NormKind::L1) <= 0.3 / (n as f64).powf(1.5) + 1e-12);
        }
        assert_eq!(net.layer(1).weight.shape(), (4, 3));
    }

    #[test]
    fn sparse_and_resnet_respect_bounds() {
        let mut p = perturbation(1.5, 0.8, 2.0, 0.0);
        p.distribution = Distribution::SparseOneEntry;
        p.norm = NormKind::Inf;
        let spec = SequenceSpec::new(SequenceKind::IdentityPerturbation(p), 3).unwrap();
        let r = SequenceSpec::new(
            SequenceKind::ResnetLike(ResnetParams {
                input_dim: 2,
                width: 3,
                rank: 2,
                alpha: 2.0,
                scale: 0.4,
                beta: 2.0,
                bias_scale: 0.1,
                norm: NormKind::L1,
            }),
            3,
        )
        .unwrap();
        for n in 2..30 {
            let l = spec.layer(n).unwrap();
            let d = l.weight.sub(&Matrix::identity(4));
            assert!(induced_matrix_norm(&d, NormKind::Inf) <= 0.8 / (n as f64).powf(1.5) + 1e-12);
            assert_eq!(d.as_slice().iter().filter(|v| **v != 0.0).count(), 1);
            let l = r.layer(n).unwrap();
            let d = l.weight.sub(&Matrix::identity(3));
            assert!(induced_matrix_norm(&d, NormKind::L1) <= 0.4 / (n as f64).powi(2) + 1e-12);
        }
    }

    #[test]
    fn prefix_property_and_determinism() {
        let spec = SequenceSpec::new(SequenceKind::IdentityPerturbation(perturbation(2.0, 0.5, 2.0, 0.1)), 42).unwrap();
        let short = generate_sequence(&spec, 5).unwrap();
        let long = generate_sequence(&spec, 9).unwrap();
        assert_eq!(long.truncated(5).unwrap(), short);
        assert_eq!(generate_sequence(&spec, 9).unwrap(), long);
        let other = SequenceSpec { seed: 43, ..spec };
        assert_ne!(generate_sequence(&other, 5).unwrap(), short);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(SequenceSpec::new(SequenceKind::IdentityPerturbation(perturbation(-1.0, 0.5, 2.0, 0.0)), 0).is_err());
        assert!(SequenceSpec::new(SequenceKind::IdentityPerturbation(perturbation(2.0, -0.5, 2.0, 0.0)), 0).is_err());
        let json = r#"{"kind":"identity_perturbation","params":{"input_dim":1,"width":1,"alpha":-1,"scale":0.5,"beta":2,"bias_scale":0},"seed":1}"#;
        assert!(serde_json::from_str::<SequenceSpec>(json).is_err());
        let json = r#"{"kind":"nope","params":{},"seed":1}"#;
        assert!(serde_json::from_str::<SequenceSpec>(json).is_err());
    }

    #[test]
    fn spec_file_round_trip() {
        let json = r#"{"kind":"identity_perturbation","params":{"input_dim":1,"width":1,"alpha":2.0,"scale":0.0,"beta":2.0,"bias_scale":1.0,"bias_direction":[1.0]},"seed":5}"#;
        let spec: SequenceSpec = serde_json::from_str(json).unwrap();
        let again: SequenceSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(again, spec);
        // Basel family: W_n = 1, b_n = 1/n².
        assert_eq!(spec.layer(3).unwrap().b, vec![1.0 / 9.0]);
        assert_eq!(spec.layer(3).unwrap().weight.to_rows(), vec![vec![1.0]]);
    }

    #[test]
    fn explicit_round_trip() {
        let net = generate_sequence(
            &SequenceSpec::new(SequenceKind::IdentityPerturbation(perturbation(2.0, 0.5, 2.0, 0.1)), 1).unwrap(),
            3,
        )
        .unwrap();
        let spec = SequenceSpec::new(SequenceKind::Explicit(net.clone()), 0).unwrap();
        assert_eq!(generate_sequence(&spec, 3).unwrap(), net);
        assert_eq!(spec.max_depth(), Some(3));
        assert!(spec.layer(4).is_err());
    }

    #[test]
    fn decay_models() {
        let m = DecayModel::PowerLaw {
            scale: 1.0,
            exponent: 2.0,
        };
        assert!(m.summable() && !m.tail_is_little_o_inverse_n());
        // Σ_{i>10} 1/i² ≈ 0.09516 ≤ 1/10
        assert!(m.tail_after(10) >= 0.0951 && m.tail_after(10) <= 0.1 + 1e-15);
        assert!(DecayModel::PowerLaw {
            scale: 1.0,
            exponent: 3.0
        }
        .tail_is_little_o_inverse_n());
        assert!(DecayModel::Constant { value: 0.1 }.tail_after(3).is_infinite());
        let g = DecayModel::Geometric { scale: 2.0, ratio: 0.5 };
        assert!((g.tail_after(1) - 1.0).abs() < 1e-15);
    }
}
