use crate::linalg::DenseMatrix;

use super::{Layers, ModelError, NetworkParams, Result};

/// Intermediate values of a forward pass, one matrix per hidden layer with one
/// row per sample.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `W h + b` (two_layer: `W x`).
    pub pre_activations: Vec<DenseMatrix>,
    /// `σ(pre_activations)`.
    pub activations: Vec<DenseMatrix>,
    /// `σ′(pre_activations)`, the gates `d_{W,x}`.
    pub derivative_gates: Vec<DenseMatrix>,
}

impl ForwardCache {
    pub fn samples(&self) -> usize {
        self.pre_activations.first().map_or(0, DenseMatrix::rows)
    }
}

/// Per-sample gradients of the network output, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianBatch {
    pub entries: DenseMatrix,
    /// Dataset row behind each Jacobian row.
    pub sample_indices: Vec<usize>,
}

impl JacobianBatch {
    pub fn rows(&self) -> usize {
        self.entries.rows()
    }

    pub fn cols(&self) -> usize {
        self.entries.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.entries.row(i)
    }

    pub fn with_indices(mut self, indices: &[usize]) -> Result<Self> {
        if indices.len() != self.rows() {
            return Err(ModelError::ShapeMismatch(format!(
                "{} sample indices for {} Jacobian rows",
                indices.len(),
                self.rows()
            )));
        }
        self.sample_indices = indices.to_vec();
        Ok(self)
    }
}

fn check_inputs(params: &NetworkParams, x: &DenseMatrix) -> Result<()> {
    if x.cols() != params.input_dim() {
        return Err(ModelError::ShapeMismatch(format!(
            "inputs have {} columns, network expects d = {}",
            x.cols(),
            params.input_dim()
        )));
    }
    Ok(())
}

pub(super) fn forward(params: &NetworkParams, x: &DenseMatrix) -> Result<(Vec<f64>, ForwardCache)> {
    check_inputs(params, x)?;
    let n = x.rows();
    let act = params.activation;
    match &params.layers {
        Layers::TwoLayer { w, a } => {
            let m = w.rows();
            let inv_sqrt_m = 1.0 / (m as f64).sqrt();
            let mut pre = DenseMatrix::zeros(n, m);
            let mut post = DenseMatrix::zeros(n, m);
            let mut gates = DenseMatrix::zeros(n, m);
            let mut out = vec![0.0; n];
            for i in 0..n {
                let xi = x.row(i);
                let mut s = 0.0;
                for r in 0..m {
                    let z = crate::linalg::dot(w.row(r), xi);
                    let h = act.apply(z);
                    pre[(i, r)] = z;
                    post[(i, r)] = h;
                    gates[(i, r)] = act.derivative(z);
                    s += a[r] * h;
                }
                out[i] = s * inv_sqrt_m;
            }
            Ok((
                out,
                ForwardCache {
                    pre_activations: vec![pre],
                    activations: vec![post],
                    derivative_gates: vec![gates],
                },
            ))
        }
        Layers::Mlp { layers } => {
            let hidden = layers.len() - 1;
            let mut pre: Vec<DenseMatrix> = layers[..hidden]
                .iter()
                .map(|l| DenseMatrix::zeros(n, l.outputs()))
                .collect();
            let mut post = pre.clone();
            let mut gates = pre.clone();
            let mut out = vec![0.0; n];
            for (i, out_i) in out.iter_mut().enumerate() {
                let mut input: Vec<f64> = x.row(i).to_vec();
                for (li, layer) in layers.iter().enumerate() {
                    let z: Vec<f64> = (0..layer.outputs())
                        .map(|o| crate::linalg::dot(layer.weights.row(o), &input) + layer.bias[o])
                        .collect();
                    if li == hidden {
                        *out_i = z[0];
                    } else {
                        let h: Vec<f64> = z.iter().map(|&v| act.apply(v)).collect();
                        pre[li].row_mut(i).copy_from_slice(&z);
                        post[li].row_mut(i).copy_from_slice(&h);
                        for (g, &v) in gates[li].row_mut(i).iter_mut().zip(&z) {
                            *g = act.derivative(v);
                        }
                        input = h;
                    }
                }
            }
            Ok((
                out,
                ForwardCache {
                    pre_activations: pre,
                    activations: post,
                    derivative_gates: gates,
                },
            ))
        }
    }
}

/// Row `i` is the gradient of `f(·, x_i)` in flattening order.
///
/// two_layer rows follow the closed form `J_{W,x} = (1/√M)((d_{W,x} ∘ a) xᵀ)`;
/// mlp rows come from reverse-mode accumulation per sample.
pub fn per_sample_jacobian(
    params: &NetworkParams,
    x: &DenseMatrix,
    cache: &ForwardCache,
) -> Result<JacobianBatch> {
    check_inputs(params, x)?;
    let n = x.rows();
    if cache.samples() != n {
        return Err(ModelError::ShapeMismatch(format!(
            "forward cache holds {} samples, inputs have {}",
            cache.samples(),
            n
        )));
    }
    let m = params.param_count();
    let mut jac = DenseMatrix::zeros(n, m);
    match &params.layers {
        Layers::TwoLayer { w, a } => {
            let width = w.rows();
            let d = w.cols();
            let gates = &cache.derivative_gates[0];
            if gates.cols() != width {
                return Err(ModelError::ShapeMismatch("forward cache width".into()));
            }
            let inv_sqrt_m = 1.0 / (width as f64).sqrt();
            for i in 0..n {
                let xi = x.row(i);
                let row = jac.row_mut(i);
                for r in 0..width {
                    let coef = gates[(i, r)] * a[r] * inv_sqrt_m;
                    let dst = &mut row[r * d..(r + 1) * d];
                    for (o, &xv) in dst.iter_mut().zip(xi) {
                        *o = coef * xv;
                    }
                }
            }
        }
        Layers::Mlp { layers } => {
            let hidden = layers.len() - 1;
            if cache.pre_activations.len() != hidden {
                return Err(ModelError::ShapeMismatch("forward cache depth".into()));
            }
            let mut offsets = Vec::with_capacity(layers.len());
            let mut off = 0;
            for l in layers {
                offsets.push(off);
                off += l.weights.rows() * l.weights.cols() + l.bias.len();
            }
            for i in 0..n {
                let row = jac.row_mut(i);
                let mut delta = vec![1.0];
                for li in (0..layers.len()).rev() {
                    let layer = &layers[li];
                    let input: &[f64] = if li == 0 {
                        x.row(i)
                    } else {
                        cache.activations[li - 1].row(i)
                    };
                    let (ins, outs) = (layer.inputs(), layer.outputs());
                    let base = offsets[li];
                    for o in 0..outs {
                        let dst = &mut row[base + o * ins..base + (o + 1) * ins];
                        let dv = delta[o];
                        for (g, &h) in dst.iter_mut().zip(input) {
                            *g = dv * h;
                        }
                    }
                    row[base + outs * ins..base + outs * ins + outs].copy_from_slice(&delta);
                    if li > 0 {
                        let gates = cache.derivative_gates[li - 1].row(i);
                        let mut next = vec![0.0; ins];
                        for (o, &dv) in delta.iter().enumerate() {
                            if dv == 0.0 {
                                continue;
                            }
                            for (nv, &wv) in next.iter_mut().zip(layer.weights.row(o)) {
                                *nv += wv * dv;
                            }
                        }
                        for (nv, &g) in next.iter_mut().zip(gates) {
                            *nv *= g;
                        }
                        delta = next;
                    }
                }
            }
        }
    }
    Ok(JacobianBatch {
        entries: jac,
        sample_indices: (0..n).collect(),
    })
}

/// Path-averaged Jacobian `∫₀¹ J((1 − s)·a + s·b) ds` by composite Simpson.
pub fn path_jacobian(
    params_a: &NetworkParams,
    params_b: &NetworkParams,
    x: &DenseMatrix,
    quadrature_points: usize,
) -> Result<JacobianBatch> {
    params_a.check_same_shape(params_b)?;
    if quadrature_points < 3 || quadrature_points.is_multiple_of(2) {
        return Err(ModelError::OddPointCount(quadrature_points));
    }
    let intervals = quadrature_points - 1;
    let h = 1.0 / intervals as f64;
    let mut acc = DenseMatrix::zeros(x.rows(), params_a.param_count());
    for q in 0..quadrature_points {
        let weight = if q == 0 || q == intervals {
            1.0
        } else if q % 2 == 1 {
            4.0
        } else {
            2.0
        } * h
            / 3.0;
        let s = q as f64 * h;
        let point = if q == 0 {
            params_a.clone()
        } else if q == intervals {
            params_b.clone()
        } else {
            params_a.interpolate(params_b, s)?
        };
        let jac = point.jacobian(x)?;
        crate::linalg::axpy(weight, jac.entries.as_slice(), acc.as_mut_slice());
    }
    Ok(JacobianBatch {
        entries: acc,
        sample_indices: (0..x.rows()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::super::{init_network, Activation, ArchSpec};
    use super::*;
    use crate::linalg::max_abs_diff;

    fn hand_net() -> NetworkParams {
        NetworkParams::two_layer(DenseMatrix::identity(2), vec![1.0, -1.0], Activation::Identity)
            .unwrap()
    }

    #[test]
    fn forward_hand_values() {
        let p = hand_net();
        let x = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let f = p.predict(&x).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert!((f[0] - s).abs() < 1e-15);
        assert!((f[1] + s).abs() < 1e-15);

        let p = NetworkParams::two_layer(DenseMatrix::identity(2), vec![1.0, 1.0], Activation::Identity)
            .unwrap();
        let zero = DenseMatrix::zeros(1, 2);
        assert_eq!(p.predict(&zero).unwrap(), vec![0.0]);
    }

    #[test]
    fn jacobian_hand_values() {
        let p = hand_net();
        let x = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]).unwrap();
        let j = p.jacobian(&x).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert!(max_abs_diff(j.row(0), &[s, 0.0, -s, 0.0]) < 1e-15);
        assert!(j.row(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch_reported() {
        let p = hand_net();
        let x = DenseMatrix::zeros(2, 3);
        assert!(matches!(p.predict(&x), Err(ModelError::ShapeMismatch(_))));
        let good = DenseMatrix::zeros(2, 2);
        let (_, cache) = p.forward(&DenseMatrix::zeros(3, 2)).unwrap();
        assert!(per_sample_jacobian(&p, &good, &cache).is_err());
    }

    #[test]
    fn cache_gates_bounded_by_lipschitz() {
        for act in [Activation::Tanh, Activation::Sigmoid, Activation::Softplus] {
            let p = init_network(&ArchSpec::mlp(3, 5, 2, act), 2).unwrap();
            let x = DenseMatrix::from_rows(&[[0.3, -1.0, 2.0], [1.5, 0.2, -0.7]]).unwrap();
            let (_, cache) = p.forward(&x).unwrap();
            for g in &cache.derivative_gates {
                assert!(g.as_slice().iter().all(|&v| v.abs() <= act.lipschitz_bound()));
            }
        }
    }

    #[test]
    fn path_jacobian_degenerate_cases() {
        let a = init_network(&ArchSpec::two_layer(3, 8, Activation::Identity), 1).unwrap();
        let b = init_network(&ArchSpec::two_layer(3, 8, Activation::Identity), 1)
            .unwrap()
            .displaced(&[0.3; 24], 1.0)
            .unwrap();
        let x = DenseMatrix::from_rows(&[[0.6, 0.0, 0.8], [1.0, 0.0, 0.0]]).unwrap();
        let pj = path_jacobian(&a, &b, &x, 9).unwrap();
        let ja = a.jacobian(&x).unwrap();
        assert!(max_abs_diff(pj.entries.as_slice(), ja.entries.as_slice()) <= 1e-12);

        let t = init_network(&ArchSpec::two_layer(3, 8, Activation::Tanh), 4).unwrap();
        let pj = path_jacobian(&t, &t, &x, 5).unwrap();
        let jt = t.jacobian(&x).unwrap();
        assert!(max_abs_diff(pj.entries.as_slice(), jt.entries.as_slice()) <= 1e-12);
    }

    #[test]
    fn path_jacobian_rejects_even_points_and_shape_mismatch() {
        let a = init_network(&ArchSpec::two_layer(2, 4, Activation::Tanh), 1).unwrap();
        let b = init_network(&ArchSpec::two_layer(2, 5, Activation::Tanh), 1).unwrap();
        let x = DenseMatrix::zeros(1, 2);
        assert!(matches!(
            path_jacobian(&a, &a, &x, 4),
            Err(ModelError::OddPointCount(4))
        ));
        assert!(matches!(
            path_jacobian(&a, &b, &x, 5),
            Err(ModelError::ShapeMismatch(_))
        ));
    }
}
