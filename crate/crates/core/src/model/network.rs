use std::sync::Arc;

use super::{Activation, BandPredictor, LayerKind, ModelWeights, NETWORK_INPUT};
use crate::{Error, Result, NB_BANDS, NB_FEATURES};

enum State {
    Conv(Vec<f32>),
    Gru(Vec<f32>),
    Dense,
}

/// Per-stream runtime for a shared [`ModelWeights`].
pub struct Network {
    weights: Arc<ModelWeights>,
    states: Vec<State>,
    outputs: Vec<Vec<f32>>,
    input: Vec<f32>,
    scratch: Vec<f32>,
    gates: [Vec<f32>; 4],
    macs: u64,
}

impl Network {
    pub fn new(weights: Arc<ModelWeights>) -> Self {
        let states = weights
            .layers
            .iter()
            .map(|l| match l.kind {
                LayerKind::Conv => State::Conv(vec![0.0; l.in_dim * l.kernel_width as usize]),
                LayerKind::Gru => State::Gru(vec![0.0; l.out_dim]),
                LayerKind::Dense => State::Dense,
            })
            .collect();
        let outputs = weights.layers.iter().map(|l| vec![0.0; l.out_dim]).collect();
        let widest = weights.layers.iter().map(|l| l.out_dim).max().unwrap_or(0);
        Self {
            states,
            outputs,
            input: vec![0.0; NB_FEATURES],
            scratch: Vec::new(),
            gates: std::array::from_fn(|_| vec![0.0; widest]),
            macs: 0,
            weights,
        }
    }

    pub fn weights(&self) -> &ModelWeights {
        &self.weights
    }

    /// Multiply-accumulates executed since construction.
    pub fn mac_count(&self) -> u64 {
        self.macs
    }

    /// Output of layer `index` after the most recent step.
    pub fn layer_output(&self, index: usize) -> &[f32] {
        &self.outputs[index]
    }

    pub fn reset(&mut self) {
        for s in &mut self.states {
            match s {
                State::Conv(v) | State::Gru(v) => v.iter_mut().for_each(|x| *x = 0.0),
                State::Dense => {}
            }
        }
        self.outputs.iter_mut().for_each(|o| o.iter_mut().for_each(|x| *x = 0.0));
    }

    /// Runs one frame; returns `(gains, strengths)`.
    pub fn forward(&mut self, features: &[f32]) -> Result<(&[f32], &[f32])> {
        if features.len() != NB_FEATURES {
            return Err(Error::FrameLength { expected: NB_FEATURES, found: features.len() });
        }
        let w = Arc::clone(&self.weights);
        for i in 0..NB_FEATURES {
            self.input[i] = (features[i] - w.norm_offset[i]) * w.norm_scale[i];
        }
        for (index, layer) in w.layers.iter().enumerate() {
            let mut x = std::mem::take(&mut self.scratch);
            x.clear();
            for &s in &layer.sources {
                if s == NETWORK_INPUT {
                    x.extend_from_slice(&self.input);
                } else {
                    x.extend_from_slice(&self.outputs[s as usize]);
                }
            }
            let mut out = std::mem::take(&mut self.outputs[index]);
            match &mut self.states[index] {
                State::Dense => {
                    layer.matrices[0].matvec(&x, &mut out);
                    for (o, b) in out.iter_mut().zip(&layer.bias) {
                        *o = layer.activation.apply(*o + b);
                    }
                }
                State::Conv(ring) => {
                    let n = layer.in_dim;
                    ring.copy_within(n.., 0);
                    let len = ring.len();
                    ring[len - n..].copy_from_slice(&x);
                    layer.matrices[0].matvec(ring, &mut out);
                    for (o, b) in out.iter_mut().zip(&layer.bias) {
                        *o = layer.activation.apply(*o + b);
                    }
                }
                State::Gru(h) => {
                    let n = layer.out_dim;
                    let [z, r, c, u] = &mut self.gates;
                    let (z, r, c, u) = (&mut z[..n], &mut r[..n], &mut c[..n], &mut u[..n]);
                    let m = &layer.matrices;
                    let b = &layer.bias;
                    m[0].matvec(&x, z);
                    m[3].matvec(h, u);
                    for i in 0..n {
                        z[i] = super::sigmoid(z[i] + u[i] + b[i]);
                    }
                    m[1].matvec(&x, r);
                    m[4].matvec(h, u);
                    for i in 0..n {
                        r[i] = super::sigmoid(r[i] + u[i] + b[n + i]);
                        // reuse r as r * h for the candidate
                        r[i] *= h[i];
                    }
                    m[2].matvec(&x, c);
                    m[5].matvec(r, u);
                    for i in 0..n {
                        let cand = (c[i] + u[i] + b[2 * n + i]).tanh();
                        h[i] = (1.0 - z[i]) * h[i] + z[i] * cand;
                    }
                    out.copy_from_slice(h);
                }
            }
            self.macs += layer.nonzeros() as u64;
            self.outputs[index] = out;
            self.scratch = x;
        }
        let n = w.layers.len();
        Ok((&self.outputs[n - 2], &self.outputs[n - 1]))
    }
}

impl BandPredictor for Network {
    fn predict(&mut self, features: &[f32]) -> Result<(Vec<f32>, Vec<f32>)> {
        let (g, r) = self.forward(features)?;
        Ok((g.to_vec(), r.to_vec()))
    }

    fn reset(&mut self) {
        Network::reset(self)
    }
}

/// Unit gains and zero comb strength for every band.
#[derive(Debug, Clone, Default)]
pub struct IdentityPredictor;

impl BandPredictor for IdentityPredictor {
    fn predict(&mut self, _features: &[f32]) -> Result<(Vec<f32>, Vec<f32>)> {
        Ok((vec![1.0; NB_BANDS], vec![0.0; NB_BANDS]))
    }

    fn reset(&mut self) {}
}

impl Activation {
    pub fn is_bounded(self) -> bool {
        !matches!(self, Activation::None)
    }
}
