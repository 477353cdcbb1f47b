//! Fully connected network with tanh hidden layers and a linear output.
//!
//! Weights for layer `l` live in segment `w{l}` with shape `[fan_in, fan_out]`
//! (row-major, one row per input unit) and biases in `b{l}`. The forward
//! kernel skips zero inputs, which matters for one-hot observations.

use rand::Rng;
use rand_distr::StandardNormal;

use super::matrix::{axpy, dot, Matrix};
use super::params::{ParamVector, Segment};
use crate::error::{check_len, Error, Result};

/// Hidden-layer gain for orthogonal initialization.
pub const HIDDEN_GAIN: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpNet {
    sizes: Vec<usize>,
    params: ParamVector,
}

/// Activations recorded by [`MlpNet::forward_batch`], reused by the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    activations: Vec<Matrix>,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("cache always holds the input")
    }

    pub fn input(&self) -> &Matrix {
        &self.activations[0]
    }
}

pub fn mlp_layout(sizes: &[usize]) -> Vec<Segment> {
    let mut layout = Vec::with_capacity(2 * sizes.len());
    for (l, pair) in sizes.windows(2).enumerate() {
        layout.push(Segment::new(format!("w{l}"), vec![pair[0], pair[1]]));
        layout.push(Segment::new(format!("b{l}"), vec![pair[1]]));
    }
    layout
}

impl MlpNet {
    /// Wraps existing parameters; the layout must match `sizes`.
    pub fn new(sizes: Vec<usize>, params: ParamVector) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!("bad layer sizes {sizes:?}")));
        }
        if params.layout() != mlp_layout(&sizes).as_slice() {
            return Err(Error::InvalidArgument(format!(
                "parameter layout does not match layer sizes {sizes:?}"
            )));
        }
        Ok(Self { sizes, params })
    }

    pub fn zeros(sizes: Vec<usize>) -> Result<Self> {
        let params = ParamVector::zeros(mlp_layout(&sizes))?;
        Self::new(sizes, params)
    }

    /// Orthogonal initialization: gain √2 on hidden layers, `output_gain` on the last, zero biases.
    pub fn init<R: Rng + ?Sized>(sizes: Vec<usize>, output_gain: f64, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        let layers = net.num_layers();
        for l in 0..layers {
            let (fan_in, fan_out) = (net.sizes[l], net.sizes[l + 1]);
            let gain = if l + 1 == layers { output_gain } else { HIDDEN_GAIN };
            let w = orthogonal(fan_in, fan_out, gain, rng);
            net.params
                .segment_mut(&format!("w{l}"))
                .expect("layout built from sizes")
                .copy_from_slice(w.as_slice());
        }
        Ok(net)
    }

    /// Rebuilds a network from a parameter vector, inferring the layer sizes from its layout.
    pub fn from_params(params: ParamVector) -> Result<Self> {
        let mut sizes = Vec::new();
        for (l, pair) in params.layout().chunks(2).enumerate() {
            let [w, _b] = pair else {
                return Err(Error::Checkpoint("odd number of MLP segments".into()));
            };
            if w.name != format!("w{l}") || w.shape.len() != 2 {
                return Err(Error::Checkpoint(format!("unexpected segment `{}`", w.name)));
            }
            if l == 0 {
                sizes.push(w.shape[0]);
            }
            sizes.push(w.shape[1]);
        }
        Self::new(sizes, params)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().expect("at least two sizes")
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    /// Replaces all parameter values; the length must match.
    pub fn set_values(&mut self, values: &[f64]) -> Result<()> {
        check_len("MlpNet::set_values", self.params.len(), values.len())?;
        self.params.values_mut().copy_from_slice(values);
        Ok(())
    }

    fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let w = self.params.range_of(&format!("w{l}")).expect("weight segment");
        let b = self.params.range_of(&format!("b{l}")).expect("bias segment");
        (&self.params.values()[w], &self.params.values()[b])
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_len("MlpNet::forward", self.input_size(), input.len())?;
        let cache = self.forward_batch(&Matrix::from_vec(1, input.len(), input.to_vec())?)?;
        Ok(cache.output().row(0).to_vec())
    }

    pub fn forward_batch(&self, inputs: &Matrix) -> Result<ForwardCache> {
        check_len("MlpNet::forward_batch", self.input_size(), inputs.cols())?;
        let batch = inputs.rows();
        let mut activations = Vec::with_capacity(self.sizes.len());
        activations.push(inputs.clone());
        for l in 0..self.num_layers() {
            let (w, b) = self.layer(l);
            let fan_out = self.sizes[l + 1];
            let prev = &activations[l];
            let mut out = Matrix::zeros(batch, fan_out);
            for i in 0..batch {
                let row = out.row_mut(i);
                row.copy_from_slice(b);
                for (k, &x) in prev.row(i).iter().enumerate() {
                    if x != 0.0 {
                        axpy(x, &w[k * fan_out..(k + 1) * fan_out], row);
                    }
                }
            }
            if l + 1 < self.num_layers() {
                out.as_mut_slice().iter_mut().for_each(|v| *v = v.tanh());
            }
            activations.push(out);
        }
        Ok(ForwardCache { activations })
    }

    /// Gradient of `Σ_rows upstream · output` with respect to the parameters.
    pub fn backward_batch(&self, cache: &ForwardCache, upstream: &Matrix) -> Result<ParamVector> {
        let out = cache.output();
        check_len("MlpNet::backward_batch rows", out.rows(), upstream.rows())?;
        check_len("MlpNet::backward_batch cols", out.cols(), upstream.cols())?;
        check_len(
            "MlpNet::backward_batch cache",
            self.sizes.len(),
            cache.activations.len(),
        )?;
        let batch = upstream.rows();
        let mut grad = self.params.zeros_like();
        let mut delta = upstream.clone();
        for l in (0..self.num_layers()).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let input = &cache.activations[l];
            {
                let gw_range = grad.range_of(&format!("w{l}")).expect("weight segment");
                let gb_range = grad.range_of(&format!("b{l}")).expect("bias segment");
                let values = grad.values_mut();
                for i in 0..batch {
                    let d = delta.row(i);
                    axpy(1.0, d, &mut values[gb_range.clone()]);
                    let gw = &mut values[gw_range.clone()];
                    for (k, &x) in input.row(i).iter().enumerate() {
                        if x != 0.0 {
                            axpy(x, d, &mut gw[k * fan_out..(k + 1) * fan_out]);
                        }
                    }
                }
            }
            if l == 0 {
                break;
            }
            let (w, _) = self.layer(l);
            let mut prev = Matrix::zeros(batch, fan_in);
            for i in 0..batch {
                let d = delta.row(i);
                let a = input.row(i);
                let p = prev.row_mut(i);
                for k in 0..fan_in {
                    // input here is tanh output, so d tanh = 1 - a^2
                    p[k] = dot(d, &w[k * fan_out..(k + 1) * fan_out]) * (1.0 - a[k] * a[k]);
                }
            }
            delta = prev;
        }
        Ok(grad)
    }

    /// Single-sample backward pass; the forward pass is recomputed internally.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<ParamVector> {
        check_len("MlpNet::backward input", self.input_size(), input.len())?;
        check_len("MlpNet::backward upstream", self.output_size(), upstream.len())?;
        let cache = self.forward_batch(&Matrix::from_vec(1, input.len(), input.to_vec())?)?;
        let up = Matrix::from_vec(1, upstream.len(), upstream.to_vec())?;
        self.backward_batch(&cache, &up)
    }
}

/// Random `rows × cols` matrix with orthonormal rows or columns (whichever is fewer), times `gain`.
pub fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Matrix {
    let (long, short) = (rows.max(cols), rows.min(cols));
    // `short` vectors of length `long`, orthonormalized by modified Gram-Schmidt
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(short);
    while basis.len() < short {
        let mut v: Vec<f64> = (0..long).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        for q in &basis {
            let proj = dot(&v, q);
            axpy(-proj, q, &mut v);
        }
        let norm = dot(&v, &v).sqrt();
        if norm < 1e-10 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
    let mut m = Matrix::zeros(rows, cols);
    for (j, q) in basis.iter().enumerate() {
        for (i, &x) in q.iter().enumerate() {
            if rows >= cols {
                m.set(i, j, gain * x);
            } else {
                m.set(j, i, gain * x);
            }
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn finite_diff(net: &MlpNet, input: &[f64], upstream: &[f64]) -> Vec<f64> {
        let h = 1e-5;
        let f = |n: &MlpNet| -> f64 {
            n.forward(input)
                .unwrap()
                .iter()
                .zip(upstream)
                .map(|(o, u)| o * u)
                .sum()
        };
        (0..net.params().len())
            .map(|i| {
                let mut plus = net.clone();
                plus.params_mut().values_mut()[i] += h;
                let mut minus = net.clone();
                minus.params_mut().values_mut()[i] -= h;
                (f(&plus) - f(&minus)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = MlpNet::zeros(vec![3, 64, 64, 2]).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 0.5]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn unit_chain_composes_tanh() {
        let mut net = MlpNet::zeros(vec![1, 1, 1, 1]).unwrap();
        for l in 0..3 {
            net.params_mut().segment_mut(&format!("w{l}")).unwrap()[0] = 1.0;
        }
        let out = net.forward(&[0.5]).unwrap();
        // two tanh hidden layers, identity output
        let expected = 0.5f64.tanh().tanh();
        assert!((out[0] - expected).abs() < 1e-15);
        assert!((expected - 0.431_808_180_6).abs() < 1e-10);
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = MlpNet::init(vec![4, 64, 64, 3], 1.0, &mut rng).unwrap();
        let x = [0.1, -0.3, 0.7, 0.0];
        assert_eq!(net.forward(&x).unwrap(), net.forward(&x).unwrap());
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let net = MlpNet::zeros(vec![3, 4, 4, 2]).unwrap();
        assert!(net.forward(&[1.0]).is_err());
        assert!(net.backward(&[1.0, 2.0, 3.0], &[1.0]).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = MlpNet::init(vec![3, 8, 8, 2], 1.0, &mut rng).unwrap();
        let g = net.backward(&[0.2, 0.0, -1.0], &[0.0, 0.0]).unwrap();
        assert!(g.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = MlpNet::init(vec![5, 7, 6, 3], 0.5, &mut rng).unwrap();
        let x = [0.3, -0.8, 0.0, 1.2, 0.4];
        let up = [0.7, -1.1, 0.25];
        let analytic = net.backward(&x, &up).unwrap();
        let numeric = finite_diff(&net, &x, &up);
        for (a, n) in analytic.values().iter().zip(&numeric) {
            let rel = (a - n).abs() / f64::max(1e-8, a.abs() + n.abs());
            assert!(rel < 1e-4, "analytic {a} numeric {n}");
        }
    }

    #[test]
    fn backward_is_linear_in_upstream() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = MlpNet::init(vec![4, 6, 6, 2], 1.0, &mut rng).unwrap();
        let x = [0.5, 0.1, -0.2, 0.9];
        let g1 = net.backward(&x, &[1.0, -0.5]).unwrap();
        let g3 = net.backward(&x, &[3.0, -1.5]).unwrap();
        for (a, b) in g1.values().iter().zip(g3.values()) {
            assert!((3.0 * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn batch_gradient_is_sum_of_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let net = MlpNet::init(vec![3, 5, 5, 2], 1.0, &mut rng).unwrap();
        let xs = Matrix::from_rows(&[vec![0.1, 0.2, 0.3], vec![-1.0, 0.0, 0.5]]).unwrap();
        let ups = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.5, -2.0]]).unwrap();
        let cache = net.forward_batch(&xs).unwrap();
        let g = net.backward_batch(&cache, &ups).unwrap();
        let mut sum = net.backward(xs.row(0), ups.row(0)).unwrap();
        sum.add_assign(&net.backward(xs.row(1), ups.row(1)).unwrap()).unwrap();
        for (a, b) in g.values().iter().zip(sum.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn orthogonal_columns_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (r, c) in [(10, 4), (4, 10), (6, 6)] {
            let m = orthogonal(r, c, 2.0, &mut rng);
            let gram = if r >= c {
                m.transpose().matmul(&m).unwrap()
            } else {
                m.matmul(&m.transpose()).unwrap()
            };
            for i in 0..gram.rows() {
                for j in 0..gram.cols() {
                    let expected = if i == j { 4.0 } else { 0.0 };
                    assert!((gram.get(i, j) - expected).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn from_params_recovers_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = MlpNet::init(vec![7, 64, 64, 3], 0.01, &mut rng).unwrap();
        let back = MlpNet::from_params(net.params().clone()).unwrap();
        assert_eq!(back, net);
    }
}
