use super::{softmax, uniform_fill, Layout, Model};
use crate::params::ParamVector;
use crate::rng::RngStream;

pub const LEAKY_RELU_SLOPE: f64 = 0.01;

/// Two affine layers with a leaky-ReLU hidden layer and softmax output.
#[derive(Clone, Debug)]
pub struct Dnn {
    input_dim: usize,
    hidden: usize,
    num_classes: usize,
    layout: Layout,
}

impl Dnn {
    pub fn new(input_dim: usize, hidden: usize, num_classes: usize) -> Self {
        let layout = Layout::from_shapes(&[
            ("hidden.weight", hidden, input_dim),
            ("hidden.bias", hidden, 1),
            ("output.weight", num_classes, hidden),
            ("output.bias", num_classes, 1),
        ]);
        Self {
            input_dim,
            hidden,
            num_classes,
            layout,
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// Hidden pre-activations for one input.
    pub fn pre_activations(&self, params: &[f64], x: &[f32]) -> Vec<f64> {
        let [w1, b1, _, _] = self.blocks(params);
        let d = self.input_dim;
        (0..self.hidden)
            .map(|j| b1[j] + w1[j * d..(j + 1) * d].iter().zip(x).map(|(w, &xi)| w * xi as f64).sum::<f64>())
            .collect()
    }

    fn blocks<'p>(&self, params: &'p [f64]) -> [&'p [f64]; 4] {
        let l = self.layout.layers();
        [
            &params[l[0].range()],
            &params[l[1].range()],
            &params[l[2].range()],
            &params[l[3].range()],
        ]
    }

    fn output(&self, params: &[f64], h: &[f64]) -> Vec<f64> {
        let [_, _, w2, b2] = self.blocks(params);
        let hd = self.hidden;
        (0..self.num_classes)
            .map(|c| b2[c] + w2[c * hd..(c + 1) * hd].iter().zip(h).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }
}

fn leaky(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        LEAKY_RELU_SLOPE * v
    }
}

impl Model for Dnn {
    fn name(&self) -> &'static str {
        "dnn"
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
        let l = self.layout.layers().to_vec();
        let hidden_end = l[1].range().end;
        uniform_fill(rng, &mut p[..hidden_end], self.input_dim);
        uniform_fill(rng, &mut p[hidden_end..], self.hidden);
        ParamVector::new(p)
    }

    fn logits(&self, params: &[f64], x: &[f32]) -> Vec<f64> {
        let h: Vec<f64> = self.pre_activations(params, x).into_iter().map(leaky).collect();
        self.output(params, &h)
    }

    fn accumulate_example(&self, params: &[f64], x: &[f32], label: usize, grad: &mut [f64]) -> f64 {
        let d = self.input_dim;
        let hd = self.hidden;
        let pre = self.pre_activations(params, x);
        let h: Vec<f64> = pre.iter().copied().map(leaky).collect();
        let logits = self.output(params, &h);
        let loss = super::cross_entropy(&logits, label);
        let mut delta = softmax(&logits);
        delta[label] -= 1.0;

        let w2 = &params[self.layout.layers()[2].range()];
        let l = self.layout.layers();
        let (g1, rest) = grad.split_at_mut(l[1].offset);
        let (gb1, rest) = rest.split_at_mut(hd);
        let (gw2, gb2) = rest.split_at_mut(self.num_classes * hd);

        let mut dh = vec![0.0; hd];
        for (c, &dc) in delta.iter().enumerate() {
            gb2[c] += dc;
            let row = &w2[c * hd..(c + 1) * hd];
            let grow = &mut gw2[c * hd..(c + 1) * hd];
            for j in 0..hd {
                grow[j] += dc * h[j];
                dh[j] += dc * row[j];
            }
        }
        for j in 0..hd {
            let dpre = if pre[j] > 0.0 { dh[j] } else { LEAKY_RELU_SLOPE * dh[j] };
            gb1[j] += dpre;
            if dpre != 0.0 {
                for (g, &xi) in g1[j * d..(j + 1) * d].iter_mut().zip(x) {
                    *g += dpre * xi as f64;
                }
            }
        }
        loss
    }
}
