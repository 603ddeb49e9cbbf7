//! Network definitions with exact forward passes and per-sample Jacobians.
//!
//! Two architectures are supported:
//!
//! * `two_layer`: `f(W, x) = (1/√M) Σ_r a_r σ(w_r·x)` with frozen output signs
//!   `a_r ∈ {±1}`; only `W` (shape `M × d`) is trained.
//! * `mlp`: fully connected layers of width `M` with biases and a linear scalar
//!   output; every entry is trainable.
//!
//! Parameters flatten row-major over each weight matrix (`w_1`, then `w_2`, …),
//! followed by that layer's bias for `mlp`, layers concatenated first to last.
//! Jacobian columns use the same order.

mod activation;
mod jacobian;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{DenseMatrix, LinalgError};

pub use activation::Activation;
pub use jacobian::{path_jacobian, per_sample_jacobian, ForwardCache, JacobianBatch};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("unsupported architecture `{0}` (expected `two_layer` or `mlp`)")]
    UnsupportedArch(String),
    #[error("unsupported activation `{0}`")]
    UnsupportedActivation(String),
    #[error("Simpson quadrature needs an odd point count of at least 3, got {0}")]
    OddPointCount(usize),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchKind {
    TwoLayer,
    Mlp,
}

impl FromStr for ArchKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_layer" => Ok(ArchKind::TwoLayer),
            "mlp" => Ok(ArchKind::Mlp),
            other => Err(ModelError::UnsupportedArch(other.to_string())),
        }
    }
}

impl fmt::Display for ArchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArchKind::TwoLayer => "two_layer",
            ArchKind::Mlp => "mlp",
        })
    }
}

fn default_hidden_layers() -> usize {
    2
}

/// Architecture description used to initialize a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpec {
    pub arch: ArchKind,
    /// Input dimension `d`.
    pub input_dim: usize,
    /// Hidden width `M`.
    pub width: usize,
    pub activation: Activation,
    /// Number of hidden layers (mlp only).
    #[serde(default = "default_hidden_layers")]
    pub hidden_layers: usize,
}

impl ArchSpec {
    pub fn two_layer(input_dim: usize, width: usize, activation: Activation) -> Self {
        Self {
            arch: ArchKind::TwoLayer,
            input_dim,
            width,
            activation,
            hidden_layers: 1,
        }
    }

    pub fn mlp(input_dim: usize, width: usize, hidden_layers: usize, activation: Activation) -> Self {
        Self {
            arch: ArchKind::Mlp,
            input_dim,
            width,
            activation,
            hidden_layers,
        }
    }

    /// Trainable parameter count of the network this spec describes.
    pub fn param_count(&self) -> usize {
        match self.arch {
            ArchKind::TwoLayer => self.width * self.input_dim,
            ArchKind::Mlp => {
                let mut widths = vec![self.input_dim];
                widths.extend(std::iter::repeat_n(self.width, self.hidden_layers));
                widths.push(1);
                widths.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
            }
        }
    }
}

/// One fully connected layer: `z = W h + b` with `W` of shape `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: DenseMatrix,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(weights: DenseMatrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(ModelError::ShapeMismatch(format!(
                "bias of length {} for a layer with {} outputs",
                bias.len(),
                weights.rows()
            )));
        }
        Ok(Self { weights, bias })
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }

    fn param_count(&self) -> usize {
        self.weights.rows() * self.weights.cols() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layers {
    /// Hidden weights `W` (`M × d`) and frozen output signs `a`.
    TwoLayer { w: DenseMatrix, a: Vec<f64> },
    /// Hidden layers followed by a `1 × width` output layer.
    Mlp { layers: Vec<DenseLayer> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub activation: Activation,
    pub layers: Layers,
}

impl NetworkParams {
    pub fn two_layer(w: DenseMatrix, a: Vec<f64>, activation: Activation) -> Result<Self> {
        if w.rows() == 0 || w.cols() == 0 {
            return Err(ModelError::ShapeMismatch("empty hidden weight matrix".into()));
        }
        if a.len() != w.rows() {
            return Err(ModelError::ShapeMismatch(format!(
                "{} output signs for width {}",
                a.len(),
                w.rows()
            )));
        }
        if a.iter().any(|&v| v != 1.0 && v != -1.0) {
            return Err(ModelError::InvalidParams(
                "two_layer output weights must be ±1".into(),
            ));
        }
        Ok(Self {
            activation,
            layers: Layers::TwoLayer { w, a },
        })
    }

    pub fn mlp(layers: Vec<DenseLayer>, activation: Activation) -> Result<Self> {
        if layers.len() < 2 {
            return Err(ModelError::InvalidParams(
                "mlp needs at least one hidden layer and an output layer".into(),
            ));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(ModelError::ShapeMismatch(format!(
                    "layer with {} outputs feeds a layer with {} inputs",
                    pair[0].outputs(),
                    pair[1].inputs()
                )));
            }
        }
        if layers.last().map(DenseLayer::outputs) != Some(1) {
            return Err(ModelError::ShapeMismatch("mlp output layer must be scalar".into()));
        }
        Ok(Self {
            activation,
            layers: Layers::Mlp { layers },
        })
    }

    pub fn arch(&self) -> ArchKind {
        match self.layers {
            Layers::TwoLayer { .. } => ArchKind::TwoLayer,
            Layers::Mlp { .. } => ArchKind::Mlp,
        }
    }

    pub fn input_dim(&self) -> usize {
        match &self.layers {
            Layers::TwoLayer { w, .. } => w.cols(),
            Layers::Mlp { layers } => layers[0].inputs(),
        }
    }

    /// Hidden width `M` (of the first hidden layer for mlp).
    pub fn width(&self) -> usize {
        match &self.layers {
            Layers::TwoLayer { w, .. } => w.rows(),
            Layers::Mlp { layers } => layers[0].outputs(),
        }
    }

    /// Layer widths from input to output, e.g. `[d, M, 1]` for two_layer.
    pub fn widths(&self) -> Vec<usize> {
        match &self.layers {
            Layers::TwoLayer { w, .. } => vec![w.cols(), w.rows(), 1],
            Layers::Mlp { layers } => {
                let mut out = vec![layers[0].inputs()];
                out.extend(layers.iter().map(DenseLayer::outputs));
                out
            }
        }
    }

    /// Trainable parameter count `m`.
    pub fn param_count(&self) -> usize {
        match &self.layers {
            Layers::TwoLayer { w, .. } => w.rows() * w.cols(),
            Layers::Mlp { layers } => layers.iter().map(DenseLayer::param_count).sum(),
        }
    }

    /// Trainable parameters in flattening order.
    pub fn flat(&self) -> Vec<f64> {
        match &self.layers {
            Layers::TwoLayer { w, .. } => w.as_slice().to_vec(),
            Layers::Mlp { layers } => {
                let mut out = Vec::with_capacity(self.param_count());
                for l in layers {
                    out.extend_from_slice(l.weights.as_slice());
                    out.extend_from_slice(&l.bias);
                }
                out
            }
        }
    }

    /// Copy with trainable parameters replaced by `flat`.
    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.param_count() {
            return Err(ModelError::ShapeMismatch(format!(
                "{} parameters for a network with {}",
                flat.len(),
                self.param_count()
            )));
        }
        if let Some(pos) = flat.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::InvalidParams(format!(
                "non-finite parameter at flat index {pos}"
            )));
        }
        let mut out = self.clone();
        match &mut out.layers {
            Layers::TwoLayer { w, .. } => w.as_mut_slice().copy_from_slice(flat),
            Layers::Mlp { layers } => {
                let mut off = 0;
                for l in layers.iter_mut() {
                    let nw = l.weights.rows() * l.weights.cols();
                    l.weights.as_mut_slice().copy_from_slice(&flat[off..off + nw]);
                    off += nw;
                    let nb = l.bias.len();
                    l.bias.copy_from_slice(&flat[off..off + nb]);
                    off += nb;
                }
            }
        }
        Ok(out)
    }

    /// `self + scale · delta` in flattened coordinates.
    pub fn displaced(&self, delta: &[f64], scale: f64) -> Result<Self> {
        let mut flat = self.flat();
        if delta.len() != flat.len() {
            return Err(ModelError::ShapeMismatch(format!(
                "displacement of length {} for {} parameters",
                delta.len(),
                flat.len()
            )));
        }
        for (p, d) in flat.iter_mut().zip(delta) {
            *p += scale * d;
        }
        self.with_flat(&flat)
    }

    /// Point `(1 − s)·self + s·other` on the segment between two networks.
    pub fn interpolate(&self, other: &NetworkParams, s: f64) -> Result<Self> {
        self.check_same_shape(other)?;
        let a = self.flat();
        let b = other.flat();
        let flat: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (1.0 - s) * x + s * y).collect();
        self.with_flat(&flat)
    }

    pub fn check_same_shape(&self, other: &NetworkParams) -> Result<()> {
        if self.arch() != other.arch()
            || self.widths() != other.widths()
            || self.activation != other.activation
        {
            return Err(ModelError::ShapeMismatch(format!(
                "{} {:?} ({}) vs {} {:?} ({})",
                self.arch(),
                self.widths(),
                self.activation,
                other.arch(),
                other.widths(),
                other.activation
            )));
        }
        if let (Layers::TwoLayer { a: a1, .. }, Layers::TwoLayer { a: a2, .. }) =
            (&self.layers, &other.layers)
        {
            if a1 != a2 {
                return Err(ModelError::ShapeMismatch(
                    "two_layer networks with different frozen output signs".into(),
                ));
            }
        }
        Ok(())
    }

    /// Network outputs only.
    pub fn predict(&self, x: &DenseMatrix) -> Result<Vec<f64>> {
        Ok(jacobian::forward(self, x)?.0)
    }

    pub fn forward(&self, x: &DenseMatrix) -> Result<(Vec<f64>, ForwardCache)> {
        jacobian::forward(self, x)
    }

    /// Forward pass followed by the per-sample Jacobian of all rows of `x`.
    pub fn jacobian(&self, x: &DenseMatrix) -> Result<JacobianBatch> {
        let (_, cache) = jacobian::forward(self, x)?;
        per_sample_jacobian(self, x, &cache)
    }
}

/// Seeded initialization.
///
/// two_layer: every `W` entry i.i.d. `N(0, 1)` (row-major draw order), then
/// every `a_r` uniform on `{±1}`. mlp: weights `N(0, 2/fan_in)` layer by layer,
/// zero biases.
pub fn init_network(spec: &ArchSpec, seed: u64) -> Result<NetworkParams> {
    if spec.input_dim == 0 || spec.width == 0 {
        return Err(ModelError::InvalidParams(format!(
            "input_dim and width must be ≥ 1 (got d={}, M={})",
            spec.input_dim, spec.width
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match spec.arch {
        ArchKind::TwoLayer => {
            let (m, d) = (spec.width, spec.input_dim);
            let w: Vec<f64> = (0..m * d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let a: Vec<f64> = (0..m)
                .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                .collect();
            NetworkParams::two_layer(DenseMatrix::new(m, d, w)?, a, spec.activation)
        }
        ArchKind::Mlp => {
            if spec.hidden_layers == 0 {
                return Err(ModelError::InvalidParams("mlp needs hidden_layers ≥ 1".into()));
            }
            let mut widths = vec![spec.input_dim];
            widths.extend(std::iter::repeat_n(spec.width, spec.hidden_layers));
            widths.push(1);
            let mut layers = Vec::with_capacity(widths.len() - 1);
            for pair in widths.windows(2) {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt())
                    .map_err(|e| ModelError::InvalidParams(e.to_string()))?;
                let w: Vec<f64> = (0..fan_in * fan_out).map(|_| normal.sample(&mut rng)).collect();
                layers.push(DenseLayer::new(
                    DenseMatrix::new(fan_out, fan_in, w)?,
                    vec![0.0; fan_out],
                )?);
            }
            NetworkParams::mlp(layers, spec.activation)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::spectral_norm;

    #[test]
    fn two_layer_shape_contract() {
        let p = init_network(&ArchSpec::two_layer(2, 2, Activation::Identity), 3).unwrap();
        let Layers::TwoLayer { w, a } = &p.layers else {
            panic!("expected two_layer")
        };
        assert_eq!(w.shape(), (2, 2));
        assert!(a.iter().all(|&v| v == 1.0 || v == -1.0));
        assert_eq!(p.param_count(), 4);
        assert_eq!(p.widths(), vec![2, 2, 1]);
    }

    #[test]
    fn init_is_deterministic() {
        for spec in [
            ArchSpec::two_layer(3, 16, Activation::Tanh),
            ArchSpec::mlp(3, 8, 2, Activation::Softplus),
        ] {
            let a = init_network(&spec, 42).unwrap();
            let b = init_network(&spec, 42).unwrap();
            let c = init_network(&spec, 43).unwrap();
            assert_eq!(a.flat(), b.flat());
            assert_ne!(a.flat(), c.flat());
        }
    }

    #[test]
    fn wide_init_norm_scales_with_sqrt_width() {
        // ‖W‖₂ of an M×d Gaussian matrix concentrates at √M + √d
        let p = init_network(&ArchSpec::two_layer(10, 10_000, Activation::Tanh), 0).unwrap();
        let Layers::TwoLayer { w, .. } = &p.layers else { unreachable!() };
        let ratio = spectral_norm(w).unwrap() / (10_000f64).sqrt();
        assert!((0.5..=3.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn mlp_param_count_matches_layers() {
        let spec = ArchSpec::mlp(4, 6, 2, Activation::Tanh);
        let p = init_network(&spec, 1).unwrap();
        assert_eq!(p.widths(), vec![4, 6, 6, 1]);
        assert_eq!(p.param_count(), 4 * 6 + 6 + 6 * 6 + 6 + 6 + 1);
        assert_eq!(p.param_count(), spec.param_count());
        assert_eq!(p.flat().len(), p.param_count());
    }

    #[test]
    fn flat_round_trip_and_displacement() {
        let p = init_network(&ArchSpec::mlp(2, 3, 1, Activation::Tanh), 9).unwrap();
        let flat = p.flat();
        assert_eq!(p.with_flat(&flat).unwrap(), p);
        let delta = vec![1.0; flat.len()];
        let q = p.displaced(&delta, 0.5).unwrap();
        for (a, b) in q.flat().iter().zip(&flat) {
            assert_eq!(*a, b + 0.5);
        }
        assert!(p.with_flat(&flat[1..]).is_err());
    }

    #[test]
    fn unknown_arch_tag() {
        assert!(matches!(
            "resnet32".parse::<ArchKind>(),
            Err(ModelError::UnsupportedArch(_))
        ));
    }

    #[test]
    fn zero_width_rejected() {
        assert!(init_network(&ArchSpec::two_layer(2, 0, Activation::Tanh), 0).is_err());
    }

    #[test]
    fn output_signs_validated() {
        let w = DenseMatrix::identity(2);
        assert!(NetworkParams::two_layer(w, vec![1.0, 0.5], Activation::Tanh).is_err());
    }
}
