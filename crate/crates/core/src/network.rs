//! Finite prefixes of deep fully connected ReLU networks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::Matrix;

/// One affine map `x ↦ W x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    #[serde(rename = "W")]
    pub weight: Matrix,
    pub b: Vec<f64>,
}

impl Layer {
    pub fn new(weight: Matrix, b: Vec<f64>) -> Result<Self> {
        if weight.rows() != b.len() {
            return invalid(format!(
                "bias length {} does not match {} weight rows",
                b.len(),
                weight.rows()
            ));
        }
        Ok(Layer { weight, b })
    }

    /// `W x + b`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.weight.matvec(x);
        y.iter_mut().zip(&self.b).for_each(|(v, b)| *v += b);
        y
    }
}

/// Hidden layers `(W_1, b_1), …, (W_n, b_n)` of a width-`m` network on
/// `[0,1]^d`, plus an optional affine read-out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkRepr", into = "NetworkRepr")]
pub struct Network {
    input_dim: usize,
    width: usize,
    layers: Vec<Layer>,
    output_layer: Option<Layer>,
}

#[derive(Serialize, Deserialize)]
struct NetworkRepr {
    input_dim: usize,
    width: usize,
    layers: Vec<Layer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output_layer: Option<Layer>,
}

impl TryFrom<NetworkRepr> for Network {
    type Error = crate::Error;
    fn try_from(r: NetworkRepr) -> Result<Self> {
        let mut net = Network::new(r.input_dim, r.width, r.layers)?;
        if let Some(out) = r.output_layer {
            net = net.with_output_layer(out)?;
        }
        Ok(net)
    }
}

impl From<Network> for NetworkRepr {
    fn from(n: Network) -> Self {
        NetworkRepr {
            input_dim: n.input_dim,
            width: n.width,
            layers: n.layers,
            output_layer: n.output_layer,
        }
    }
}

impl Network {
    pub fn new(input_dim: usize, width: usize, layers: Vec<Layer>) -> Result<Self> {
        if input_dim == 0 || width == 0 {
            return invalid("input_dim and width must be positive");
        }
        if layers.is_empty() {
            return invalid("network needs at least one hidden layer");
        }
        for (i, layer) in layers.iter().enumerate() {
            let cols = if i == 0 { input_dim } else { width };
            if layer.weight.shape() != (width, cols) || layer.b.len() != width {
                return invalid(format!(
                    "layer {} has W {:?} and b of length {}, expected W {:?} and b of length {width}",
                    i + 1,
                    layer.weight.shape(),
                    layer.b.len(),
                    (width, cols)
                ));
            }
        }
        Ok(Network {
            input_dim,
            width,
            layers,
            output_layer: None,
        })
    }

    pub fn with_output_layer(mut self, out: Layer) -> Result<Self> {
        if out.weight.cols() != self.width || out.b.len() != out.weight.rows() {
            return invalid(format!(
                "output layer W {:?} incompatible with width {}",
                out.weight.shape(),
                self.width
            ));
        }
        self.output_layer = Some(out);
        Ok(self)
    }

    /// Network of `depth` identical identity layers with zero bias (`d = m`).
    pub fn identity(dim: usize, depth: usize) -> Self {
        let layer = Layer {
            weight: Matrix::identity(dim),
            b: vec![0.0; dim],
        };
        Network::new(dim, dim, vec![layer; depth]).expect("identity network is well formed")
    }

    /// Weights and biases drawn i.i.d. uniform on `[−1, 1]`.
    pub fn random(input_dim: usize, width: usize, depth: usize, rng: &mut impl Rng) -> Result<Self> {
        let layers = (0..depth)
            .map(|k| {
                let cols = if k == 0 { input_dim } else { width };
                let data = (0..width * cols).map(|_| rng.gen_range(-1.0..=1.0)).collect();
                let b = (0..width).map(|_| rng.gen_range(-1.0..=1.0)).collect();
                Layer::new(Matrix::from_row_major(width, cols, data)?, b)
            })
            .collect::<Result<Vec<_>>>()?;
        Network::new(input_dim, width, layers)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Layer `k`, one-based.
    pub fn layer(&self, k: usize) -> &Layer {
        &self.layers[k - 1]
    }

    pub fn output_layer(&self) -> Option<&Layer> {
        self.output_layer.as_ref()
    }

    /// The first `depth` hidden layers, keeping the read-out.
    pub fn truncated(&self, depth: usize) -> Result<Network> {
        if depth == 0 || depth > self.depth() {
            return invalid(format!("depth {depth} outside 1..={}", self.depth()));
        }
        Ok(Network {
            input_dim: self.input_dim,
            width: self.width,
            layers: self.layers[..depth].to_vec(),
            output_layer: self.output_layer.clone(),
        })
    }
}
