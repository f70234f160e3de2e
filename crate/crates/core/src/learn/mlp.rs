//! Dense networks with leaky-rectifier hidden layers and a linear output,
//! stored as one flat parameter vector so optimizers and checkpoints can
//! treat every network alike.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub const LEAKY_SLOPE: f64 = 0.01;

fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

fn leaky_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    /// Input width, hidden widths, output width.
    sizes: Vec<usize>,
    pub params: Vec<f64>,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Input of every layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of every hidden layer.
    pre: Vec<Array2<f64>>,
}

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|s| *s > 0), "bad layer sizes {sizes:?}");
        let n = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Mlp {
            sizes: sizes.to_vec(),
            params: vec![0.0; n],
        }
    }

    /// Orthogonal weights scaled by `√2` in hidden layers and by `output_gain`
    /// in the last layer; zero biases.
    pub fn orthogonal<R: Rng + ?Sized>(sizes: &[usize], output_gain: f64, rng: &mut R) -> Self {
        let mut mlp = Mlp::zeros(sizes);
        let layers = mlp.num_layers();
        for k in 0..layers {
            let (fan_in, fan_out) = (sizes[k], sizes[k + 1]);
            let gain = if k + 1 == layers {
                output_gain
            } else {
                std::f64::consts::SQRT_2
            };
            let w = orthogonal_matrix(fan_in, fan_out, rng) * gain;
            let (off, _) = mlp.layer_offsets(k);
            mlp.params[off..off + fan_in * fan_out].copy_from_slice(w.as_slice().unwrap());
        }
        mlp
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Offsets of layer `k`'s weight (in × out, row-major) and bias blocks.
    pub fn layer_offsets(&self, k: usize) -> (usize, usize) {
        let w_off: usize = self.sizes[..k + 1]
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum();
        (w_off, w_off + self.sizes[k] * self.sizes[k + 1])
    }

    fn weight(&self, k: usize) -> ArrayView2<'_, f64> {
        let (w, b) = self.layer_offsets(k);
        ArrayView2::from_shape((self.sizes[k], self.sizes[k + 1]), &self.params[w..b]).unwrap()
    }

    fn bias(&self, k: usize) -> ArrayView1<'_, f64> {
        let (_, b) = self.layer_offsets(k);
        ArrayView1::from(&self.params[b..b + self.sizes[k + 1]])
    }

    /// Zeroes the last layer so the network outputs exactly zero.
    pub fn zero_output_layer(&mut self) {
        let k = self.num_layers() - 1;
        let (w, _) = self.layer_offsets(k);
        for p in &mut self.params[w..] {
            *p = 0.0;
        }
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.forward_cached(x).0
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> (Array2<f64>, MlpCache) {
        assert_eq!(x.ncols(), self.input_dim(), "input width mismatch");
        let layers = self.num_layers();
        let mut inputs = Vec::with_capacity(layers);
        let mut pre = Vec::with_capacity(layers - 1);
        let mut h = x.to_owned();
        for k in 0..layers {
            let z = h.dot(&self.weight(k)) + self.bias(k);
            inputs.push(h);
            if k + 1 == layers {
                return (z, MlpCache { inputs, pre });
            }
            h = z.mapv(leaky);
            pre.push(z);
        }
        unreachable!()
    }

    /// Accumulates `∂L/∂params` into `grad` given `∂L/∂output`; returns `∂L/∂input`.
    pub fn backward(&self, cache: &MlpCache, d_out: ArrayView2<f64>, grad: &mut [f64]) -> Array2<f64> {
        assert_eq!(grad.len(), self.params.len());
        let mut dz = d_out.to_owned();
        for k in (0..self.num_layers()).rev() {
            let (w_off, b_off) = self.layer_offsets(k);
            let dw = cache.inputs[k].t().dot(&dz);
            for (g, d) in grad[w_off..b_off].iter_mut().zip(dw.iter()) {
                *g += d;
            }
            let db = dz.sum_axis(Axis(0));
            for (g, d) in grad[b_off..b_off + self.sizes[k + 1]].iter_mut().zip(db.iter()) {
                *g += d;
            }
            let dx = dz.dot(&self.weight(k).t());
            if k == 0 {
                return dx;
            }
            dz = dx;
            ndarray::Zip::from(&mut dz)
                .and(&cache.pre[k - 1])
                .for_each(|d, z| *d *= leaky_grad(*z));
        }
        unreachable!()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

/// `rows × cols` matrix with orthonormal rows or columns, from the QR
/// factorization of a Gaussian matrix.
fn orthogonal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let (n, m) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    let g = nalgebra::DMatrix::<f64>::from_fn(n, m, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    // Sign fix makes the distribution uniform over orthogonal matrices.
    for j in 0..m {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let q = if rows >= cols { q } else { q.transpose() };
    Array2::from_shape_fn((rows, cols), |(i, j)| q[(i, j)])
}

/// Row vector view helper for single inputs.
pub fn as_batch(x: &[f64]) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((1, x.len()), x).unwrap()
}

pub fn to_array1(x: &[f64]) -> Array1<f64> {
    Array1::from(x.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_outputs_zero() {
        let m = Mlp::zeros(&[5, 8, 3]);
        let y = m.forward(as_batch(&[1.0, -2.0, 3.0, 0.5, 9.0]));
        assert!(y.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn orthogonal_init_has_orthonormal_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let q = orthogonal_matrix(16, 4, &mut rng);
        let g = q.t().dot(&q);
        for i in 0..4 {
            for j in 0..4 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] - e).abs() < 1e-12);
            }
        }
        let wide = orthogonal_matrix(4, 16, &mut rng);
        let g = wide.dot(&wide.t());
        assert!((g[(2, 2)] - 1.0).abs() < 1e-12 && g[(0, 3)].abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut m = Mlp::orthogonal(&[6, 10, 7, 2], 0.5, &mut rng);
        for p in m.params.iter_mut() {
            *p += rng.random_range(-0.1..0.1);
        }
        let x = Array2::from_shape_fn((4, 6), |_| rng.random_range(-1.0..1.0));
        let probe = Array2::from_shape_fn((4, 2), |_| rng.random_range(-1.0..1.0));
        let loss = |m: &Mlp| (m.forward(x.view()) * &probe).sum();
        let (_, cache) = m.forward_cached(x.view());
        let mut grad = vec![0.0; m.params.len()];
        let dx = m.backward(&cache, probe.view(), &mut grad);
        let h = 1e-6;
        for i in 0..m.params.len() {
            let orig = m.params[i];
            m.params[i] = orig + h;
            let up = loss(&m);
            m.params[i] = orig - h;
            let down = loss(&m);
            m.params[i] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - grad[i]).abs() <= 1e-4 * fd.abs().max(1e-3), "param {i}: {fd} vs {}", grad[i]);
        }
        let mut xp = x.clone();
        xp[(1, 3)] += h;
        let mut xm = x.clone();
        xm[(1, 3)] -= h;
        let fd = ((m.forward(xp.view()) - m.forward(xm.view())) * &probe).sum() / (2.0 * h);
        assert!((fd - dx[(1, 3)]).abs() < 1e-6);
    }
}
