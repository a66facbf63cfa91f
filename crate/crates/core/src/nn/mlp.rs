use rand::Rng;

use crate::error::{Error, Result};

/// Output transform applied after the last dense layer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Head {
    Linear,
    /// `low + (tanh(z) + 1) / 2 * (high - low)` per component.
    Tanh { low: f64, high: f64 },
    /// `softmax(z / temperature)`; a relaxed one-hot for discrete actions.
    Softmax { temperature: f64 },
}

/// A fully connected layer. `weights` is row-major with `rows` outputs and
/// `cols` inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, weights: vec![0.0; rows * cols], bias: vec![0.0; rows] }
    }

    fn apply(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.cols).zip(&self.bias).map(|(row, b)| {
            row.iter().zip(input).fold(*b, |acc, (w, x)| acc + w * x)
        }));
    }
}

/// Dense feed-forward network: ReLU on hidden layers, [`Head`] on output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub head: Head,
}

/// Activations recorded by [`Mlp::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Input to each layer; `inputs[0]` is the network input.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

/// Gradient with the same layout as the network parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub layers: Vec<Dense>,
}

impl Gradient {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self { layers: net.layers.iter().map(|l| Dense::zeros(l.rows, l.cols)).collect() }
    }

    pub fn add_assign(&mut self, other: &Gradient) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.iter_mut().zip(&b.weights).for_each(|(x, y)| *x += y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, k: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|v| *v *= k);
        }
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias).copied())
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }
}

impl Mlp {
    /// Builds a network with layer widths `sizes` (input first, output last).
    /// Weights and biases are drawn uniformly from `±1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], head: Head, rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Shape(format!("invalid layer sizes {sizes:?}")));
        }
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (cols, rows) = (w[0], w[1]);
                let bound = 1.0 / (cols as f64).sqrt();
                let mut draw = || rng.random_range(-bound..=bound);
                let weights = (0..rows * cols).map(|_| draw()).collect();
                let bias = (0..rows).map(|_| draw()).collect();
                Dense { rows, cols, weights, bias }
            })
            .collect();
        Ok(Self { layers, head })
    }

    pub fn zeros(sizes: &[usize], head: Head) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Shape(format!("invalid layer sizes {sizes:?}")));
        }
        let layers = sizes.windows(2).map(|w| Dense::zeros(w[1], w[0])).collect();
        Ok(Self { layers, head })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.rows)
    }

    /// Number of scalar parameters.
    pub fn len(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias).copied())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| a.rows == b.rows && a.cols == b.cols)
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: input.len() });
        }
        if !input.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("network input"));
        }
        Ok(())
    }

    /// Forward pass without recording activations.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            layer.apply(&cur, &mut next);
            if k < last {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(apply_head(self.head, &cur))
    }

    /// Forward pass recording everything [`Mlp::backward`] needs.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        self.check_input(input)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut cur = input.to_vec();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.rows);
            layer.apply(&cur, &mut z);
            inputs.push(cur);
            cur = if k < last { z.iter().map(|v| v.max(0.0)).collect() } else { z.clone() };
            pre.push(z);
        }
        let output = apply_head(self.head, &cur);
        Ok((output.clone(), ForwardCache { inputs, pre, output }))
    }

    /// Reverse-mode gradients of `upstream · output` with respect to the
    /// parameters and to the input.
    pub fn backward(&self, cache: &ForwardCache, upstream: &[f64]) -> Result<(Gradient, Vec<f64>)> {
        let n = self.layers.len();
        let matches = cache.inputs.len() == n
            && cache.pre.len() == n
            && self.layers.iter().zip(&cache.inputs).all(|(l, x)| l.cols == x.len())
            && self.layers.iter().zip(&cache.pre).all(|(l, z)| l.rows == z.len());
        if !matches {
            return Err(Error::Shape("forward cache does not belong to this network".into()));
        }
        if upstream.len() != self.output_dim() {
            return Err(Error::DimensionMismatch { expected: self.output_dim(), got: upstream.len() });
        }

        let mut delta = head_backward(self.head, &cache.pre[n - 1], &cache.output, upstream);
        let mut grads = Gradient::zeros_like(self);
        for k in (0..n).rev() {
            let layer = &self.layers[k];
            let x = &cache.inputs[k];
            let g = &mut grads.layers[k];
            for (r, dz) in delta.iter().enumerate() {
                g.bias[r] = *dz;
                if *dz != 0.0 {
                    let row = &mut g.weights[r * layer.cols..(r + 1) * layer.cols];
                    row.iter_mut().zip(x).for_each(|(w, xi)| *w = dz * xi);
                }
            }
            let mut dx = vec![0.0; layer.cols];
            for (row, dz) in layer.weights.chunks_exact(layer.cols).zip(&delta) {
                if *dz != 0.0 {
                    dx.iter_mut().zip(row).for_each(|(acc, w)| *acc += w * dz);
                }
            }
            if k > 0 {
                // ReLU of the previous layer
                for (v, z) in dx.iter_mut().zip(&cache.pre[k - 1]) {
                    if *z <= 0.0 {
                        *v = 0.0;
                    }
                }
            }
            delta = dx;
        }
        Ok((grads, delta))
    }
}

fn apply_head(head: Head, z: &[f64]) -> Vec<f64> {
    match head {
        Head::Linear => z.to_vec(),
        Head::Tanh { low, high } => z.iter().map(|v| low + (v.tanh() + 1.0) * 0.5 * (high - low)).collect(),
        Head::Softmax { temperature } => softmax(z, temperature),
    }
}

pub(crate) fn softmax(z: &[f64], temperature: f64) -> Vec<f64> {
    let max = z.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let e: Vec<f64> = z.iter().map(|v| ((v - max) / temperature).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn head_backward(head: Head, z: &[f64], out: &[f64], upstream: &[f64]) -> Vec<f64> {
    match head {
        Head::Linear => upstream.to_vec(),
        Head::Tanh { low, high } => z
            .iter()
            .zip(upstream)
            .map(|(v, g)| {
                let t = v.tanh();
                g * 0.5 * (high - low) * (1.0 - t * t)
            })
            .collect(),
        Head::Softmax { temperature } => {
            let dot: f64 = out.iter().zip(upstream).map(|(p, g)| p * g).sum();
            out.iter().zip(upstream).map(|(p, g)| p * (g - dot) / temperature).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::stream;

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[4, 8, 3], Head::Linear).unwrap();
        assert_eq!(net.predict(&[1.0, -2.0, 3.0, 0.5]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn identity_layer() {
        let mut net = Mlp::zeros(&[3, 3], Head::Linear).unwrap();
        for k in 0..3 {
            net.layers[0].weights[k * 3 + k] = 1.0;
        }
        let x = [0.25, -1.5, 7.0];
        assert_eq!(net.predict(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn small_network_matches_hand_arithmetic() {
        // 2-3-1 net with fixed weights, evaluated by hand below.
        let net = Mlp {
            layers: vec![
                Dense {
                    rows: 3,
                    cols: 2,
                    weights: vec![0.5, -1.0, 2.0, 0.25, -0.75, -0.5],
                    bias: vec![0.1, -0.2, 0.3],
                },
                Dense { rows: 1, cols: 3, weights: vec![1.5, -2.0, 0.5], bias: vec![0.05] },
            ],
            head: Head::Linear,
        };
        // x = (1, 2)
        // z1 = (0.5 - 2 + 0.1, 2 + 0.5 - 0.2, -0.75 - 1 + 0.3) = (-1.4, 2.3, -1.45)
        // h1 = (0, 2.3, 0); y = -2 * 2.3 + 0.05 = -4.55
        let y = net.predict(&[1.0, 2.0]).unwrap();
        assert!((y[0] - (-4.55)).abs() < 1e-12);
        let (y2, cache) = net.forward(&[1.0, 2.0]).unwrap();
        assert_eq!(y, y2);
        assert_eq!(cache.output(), &y[..]);
    }

    #[test]
    fn scalar_gradients_by_hand() {
        let net = Mlp {
            layers: vec![Dense { rows: 1, cols: 1, weights: vec![3.0], bias: vec![-1.0] }],
            head: Head::Linear,
        };
        let (_, cache) = net.forward(&[2.0]).unwrap();
        let (g, dx) = net.backward(&cache, &[1.0]).unwrap();
        assert_eq!(g.layers[0].weights, vec![2.0]);
        assert_eq!(g.layers[0].bias, vec![1.0]);
        assert_eq!(dx, vec![3.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let net = Mlp::new(&[3, 5, 2], Head::Tanh { low: -1.0, high: 1.0 }, &mut stream(1, 0, 0)).unwrap();
        let (_, cache) = net.forward(&[0.1, 0.2, 0.3]).unwrap();
        let (g, dx) = net.backward(&cache, &[0.0, 0.0]).unwrap();
        assert!(g.values().all(|v| v == 0.0));
        assert!(dx.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn mismatched_cache_is_rejected() {
        let a = Mlp::new(&[3, 5, 2], Head::Linear, &mut stream(1, 0, 0)).unwrap();
        let b = Mlp::new(&[4, 5, 2], Head::Linear, &mut stream(1, 0, 0)).unwrap();
        let (_, cache) = b.forward(&[0.0; 4]).unwrap();
        assert!(a.backward(&cache, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn bad_inputs() {
        let a = Mlp::new(&[3, 2], Head::Linear, &mut stream(1, 0, 0)).unwrap();
        assert!(matches!(a.predict(&[0.0; 2]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(a.forward(&[0.0, f64::NAN, 0.0]), Err(Error::NonFinite(_))));
        assert!(Mlp::zeros(&[3], Head::Linear).is_err());
    }

    #[test]
    fn heads_map_into_their_ranges() {
        let mut rng = stream(9, 0, 0);
        let tanh = Mlp::new(&[2, 8, 3], Head::Tanh { low: -2.0, high: 4.0 }, &mut rng).unwrap();
        let y = tanh.predict(&[5.0, -3.0]).unwrap();
        assert!(y.iter().all(|v| (-2.0..=4.0).contains(v)));
        let soft = Mlp::new(&[2, 8, 3], Head::Softmax { temperature: 1.0 }, &mut rng).unwrap();
        let p = soft.predict(&[5.0, -3.0]).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|v| *v > 0.0));
    }
}
