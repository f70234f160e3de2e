use ndarray::{Array2, ArrayView2, Axis};

/// Running per-channel mean and variance (parallel Welford merge), used to
/// standardize network inputs and value targets.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningNorm {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: f64,
}

impl RunningNorm {
    pub const EPS: f64 = 1e-8;
    /// Standardized inputs are clipped to this many standard deviations.
    pub const CLIP: f64 = 10.0;

    pub fn new(dim: usize) -> Self {
        RunningNorm {
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
            count: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn update(&mut self, batch: ArrayView2<f64>) {
        let n = batch.nrows() as f64;
        if n == 0.0 {
            return;
        }
        let bmean = batch.mean_axis(Axis(0)).unwrap();
        let bvar = batch.var_axis(Axis(0), 0.0);
        let total = self.count + n;
        for i in 0..self.dim() {
            let delta = bmean[i] - self.mean[i];
            let m2 = self.var[i] * self.count + bvar[i] * n + delta * delta * self.count * n / total;
            self.mean[i] += delta * n / total;
            self.var[i] = m2 / total;
        }
        self.count = total;
    }

    pub fn std(&self, i: usize) -> f64 {
        (self.var[i] + Self::EPS).sqrt()
    }

    pub fn normalize(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for (i, v) in row.iter_mut().enumerate() {
                *v = ((*v - self.mean[i]) / self.std(i)).clamp(-Self::CLIP, Self::CLIP);
            }
        }
        out
    }
}
