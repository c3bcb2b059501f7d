use super::{softmax, uniform_fill, Layout, Model};
use crate::params::ParamVector;
use crate::rng::RngStream;

/// Multi-class linear regression: one affine map followed by softmax.
#[derive(Clone, Debug)]
pub struct Mclr {
    input_dim: usize,
    num_classes: usize,
    layout: Layout,
}

impl Mclr {
    pub fn new(input_dim: usize, num_classes: usize) -> Self {
        let layout = Layout::from_shapes(&[
            ("weight", num_classes, input_dim),
            ("bias", num_classes, 1),
        ]);
        Self {
            input_dim,
            num_classes,
            layout,
        }
    }
}

impl Model for Mclr {
    fn name(&self) -> &'static str {
        "mclr"
    }

    fn layout(&self) -> &Layout {
        &self.layout
    }

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn init_params(&self, rng: &mut RngStream) -> ParamVector {
        let mut p = vec![0.0; self.num_params()];
        uniform_fill(rng, &mut p, self.input_dim);
        ParamVector::new(p)
    }

    fn logits(&self, params: &[f64], x: &[f32]) -> Vec<f64> {
        let d = self.input_dim;
        let bias = &params[self.num_classes * d..];
        (0..self.num_classes)
            .map(|c| {
                let row = &params[c * d..(c + 1) * d];
                bias[c] + row.iter().zip(x).map(|(w, &xi)| w * xi as f64).sum::<f64>()
            })
            .collect()
    }

    fn accumulate_example(&self, params: &[f64], x: &[f32], label: usize, grad: &mut [f64]) -> f64 {
        let d = self.input_dim;
        let logits = self.logits(params, x);
        let loss = super::cross_entropy(&logits, label);
        let mut delta = softmax(&logits);
        delta[label] -= 1.0;
        let (gw, gb) = grad.split_at_mut(self.num_classes * d);
        for (c, &dc) in delta.iter().enumerate() {
            let row = &mut gw[c * d..(c + 1) * d];
            for (g, &xi) in row.iter_mut().zip(x) {
                *g += dc * xi as f64;
            }
            gb[c] += dc;
        }
        loss
    }
}
