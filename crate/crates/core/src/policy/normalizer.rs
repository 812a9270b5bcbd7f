use serde::{Deserialize, Serialize};

const CLIP: f64 = 10.0;
const EPS: f64 = 1e-8;

/// Running per-dimension mean and variance of observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningNorm {
    pub count: f64,
    pub mean: Vec<f64>,
    /// Sum of squared deviations from the mean.
    pub m2: Vec<f64>,
}

impl RunningNorm {
    pub fn new(dim: usize) -> Self {
        RunningNorm {
            count: 0.0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Merges a batch using the pairwise update of Chan et al.
    pub fn update(&mut self, batch: &[Vec<f64>]) {
        if batch.is_empty() {
            return;
        }
        let n = batch.len() as f64;
        let dim = self.dim();
        let mut mean = vec![0.0; dim];
        for x in batch {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut m2 = vec![0.0; dim];
        for x in batch {
            for i in 0..dim {
                let d = x[i] - mean[i];
                m2[i] += d * d;
            }
        }
        let total = self.count + n;
        for i in 0..dim {
            let delta = mean[i] - self.mean[i];
            self.mean[i] += delta * n / total;
            self.m2[i] += m2[i] + delta * delta * self.count * n / total;
        }
        self.count = total;
    }

    pub fn variance(&self) -> Vec<f64> {
        if self.count == 0.0 {
            return vec![1.0; self.dim()];
        }
        self.m2.iter().map(|m| m / self.count).collect()
    }

    /// `(x - mean) / sqrt(var + eps)` clipped to ±10; identity (clipped)
    /// before the first update.
    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        if self.count == 0.0 {
            return x.iter().map(|v| v.clamp(-CLIP, CLIP)).collect();
        }
        x.iter()
            .enumerate()
            .map(|(i, v)| ((v - self.mean[i]) / (self.m2[i] / self.count + EPS).sqrt()).clamp(-CLIP, CLIP))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batched_updates_match_direct_statistics() {
        let data: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64, (i as f64 * 0.3).sin()]).collect();
        let mut a = RunningNorm::new(2);
        a.update(&data[..7]);
        a.update(&data[7..31]);
        a.update(&data[31..]);
        for d in 0..2 {
            let mean = data.iter().map(|x| x[d]).sum::<f64>() / 50.0;
            let var = data.iter().map(|x| (x[d] - mean).powi(2)).sum::<f64>() / 50.0;
            assert!((a.mean[d] - mean).abs() < 1e-12);
            assert!((a.variance()[d] - var).abs() < 1e-10);
        }
    }

    #[test]
    fn normalizes_and_clips() {
        let mut n = RunningNorm::new(1);
        assert_eq!(n.normalize(&[3.0]), vec![3.0]);
        n.update(&[vec![1.0], vec![3.0]]);
        assert!((n.normalize(&[3.0])[0] - 1.0).abs() < 1e-6);
        assert_eq!(n.normalize(&[1e6])[0], 10.0);
    }
}
