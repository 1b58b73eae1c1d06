use serde::{Deserialize, Serialize};

const CLIP: f64 = 10.0;
const VAR_EPS: f64 = 1e-8;

/// Running per-feature mean and variance (parallel-merge form), used to
/// standardize observations. Frozen at evaluation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningMeanStd {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: f64,
}

impl RunningMeanStd {
    pub fn new(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], var: vec![1.0; dim], count: 1e-4 }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn update(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.mean.len());
        let total = self.count + 1.0;
        for ((m, v), &xi) in self.mean.iter_mut().zip(self.var.iter_mut()).zip(x) {
            let delta = xi - *m;
            let new_mean = *m + delta / total;
            let m2 = *v * self.count + delta * delta * self.count / total;
            *m = new_mean;
            *v = m2 / total;
        }
        self.count = total;
    }

    /// `(x − mean) / sqrt(var + 1e-8)`, clipped to ±10.
    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.var))
            .map(|(xi, (m, v))| ((xi - m) / (v + VAR_EPS).sqrt()).clamp(-CLIP, CLIP))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_batch_statistics() {
        let data: Vec<[f64; 2]> = (0..500).map(|i| [(i as f64 * 0.7).sin() * 3.0 + 1.0, i as f64 * 0.01]).collect();
        let mut rms = RunningMeanStd::new(2);
        for x in &data {
            rms.update(x);
        }
        for d in 0..2 {
            let n = data.len() as f64;
            let mean = data.iter().map(|x| x[d]).sum::<f64>() / n;
            let var = data.iter().map(|x| (x[d] - mean).powi(2)).sum::<f64>() / n;
            assert!((rms.mean[d] - mean).abs() < 1e-5, "{} vs {mean}", rms.mean[d]);
            assert!((rms.var[d] - var).abs() < 1e-4 * var.max(1.0), "{} vs {var}", rms.var[d]);
        }
        let z = rms.normalize(&[1e9, rms.mean[1]]);
        assert_eq!(z[0], 10.0);
        assert_eq!(z[1], 0.0);
    }
}
