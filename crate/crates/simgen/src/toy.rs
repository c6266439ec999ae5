//! Small recurrent model fitted to exported records.
//!
//! Topology: one GRU over the normalized features, then dense sigmoid gain
//! and strength heads reading both the features and the GRU state. Trained
//! with truncated backpropagation through time on cross-entropy against the
//! record targets; weights are kept inside the int8 code range and
//! quantized at the end.

use rand::seq::SliceRandom;
use rand::Rng;

use duplex_core::model::{Activation, Layer, LayerKind, ModelWeights, QuantMatrix, NETWORK_INPUT, WEIGHT_SCALE};
use duplex_core::{NB_BANDS, NB_FEATURES};

use crate::dataset::Record;
use crate::stream_rng;

const W_MIN: f32 = -128.0 / 256.0;
const W_MAX: f32 = 127.0 / 256.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub hidden: usize,
    pub epochs: usize,
    /// Frames per truncated-backpropagation chunk.
    pub chunk: usize,
    /// Chunks per optimizer step.
    pub batch: usize,
    pub learning_rate: f32,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { hidden: 48, epochs: 12, chunk: 50, batch: 8, learning_rate: 3e-3, seed: 1 }
    }
}

/// Strength target: the mix `r` that lifts the noisy coherence to the
/// clean coherence under a linear coherence model.
pub fn target_strengths(r: &Record) -> Vec<f32> {
    (0..NB_BANDS)
        .map(|b| {
            let qy = r.noisy_coherence[b];
            let qx = r.clean_coherence[b];
            if r.noisy_bands[b] <= 0.0 || qy >= 1.0 {
                0.0
            } else {
                ((qx - qy) / (1.0 - qy)).clamp(0.0, 1.0)
            }
        })
        .collect()
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Feature mean and inverse standard deviation.
pub fn normalization(records: &[&Record]) -> (Vec<f32>, Vec<f32>) {
    let n = records.len().max(1) as f64;
    let mut mean = vec![0.0f64; NB_FEATURES];
    for r in records {
        for (m, &v) in mean.iter_mut().zip(&r.features) {
            *m += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0f64; NB_FEATURES];
    for r in records {
        for ((s, &v), m) in var.iter_mut().zip(&r.features).zip(&mean) {
            *s += (v as f64 - m).powi(2);
        }
    }
    (
        mean.iter().map(|&v| v as f32).collect(),
        var.iter().map(|s| (1.0 / (s / n).sqrt().max(1e-3)) as f32).collect(),
    )
}

/// Flat parameter vector: GRU input matrices (z, r, h), recurrent matrices,
/// GRU biases, then each head's matrix and bias.
#[derive(Debug, Clone)]
pub struct Params {
    pub input: usize,
    pub hidden: usize,
    pub v: Vec<f32>,
}

#[derive(Debug, Clone, Copy)]
enum P {
    W(usize),
    U(usize),
    B,
    HeadW(usize),
    HeadB(usize),
}

impl Params {
    fn offset(&self, p: P) -> usize {
        let (i, h) = (self.input, self.hidden);
        let head_in = i + h;
        let gru = 3 * h * i + 3 * h * h + 3 * h;
        let head = NB_BANDS * head_in + NB_BANDS;
        match p {
            P::W(g) => g * h * i,
            P::U(g) => 3 * h * i + g * h * h,
            P::B => 3 * h * i + 3 * h * h,
            P::HeadW(k) => gru + k * head,
            P::HeadB(k) => gru + k * head + NB_BANDS * head_in,
        }
    }

    fn len(input: usize, hidden: usize) -> usize {
        3 * hidden * input + 3 * hidden * hidden + 3 * hidden + 2 * (NB_BANDS * (input + hidden) + NB_BANDS)
    }

    pub fn init(input: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = stream_rng(seed, 0x544f);
        let mut p = Self { input, hidden, v: vec![0.0; Self::len(input, hidden)] };
        let fill = |v: &mut [f32], fan_in: usize, rng: &mut rand_chacha::ChaCha8Rng| {
            let a = (1.0 / fan_in as f32).sqrt().min(W_MAX);
            v.iter_mut().for_each(|x| *x = rng.gen_range(-a..a));
        };
        for g in 0..3 {
            let o = p.offset(P::W(g));
            fill(&mut p.v[o..o + hidden * input], input, &mut rng);
            let o = p.offset(P::U(g));
            fill(&mut p.v[o..o + hidden * hidden], hidden, &mut rng);
        }
        for k in 0..2 {
            let o = p.offset(P::HeadW(k));
            fill(&mut p.v[o..o + NB_BANDS * (input + hidden)], input + hidden, &mut rng);
        }
        p
    }

    /// Whether entry `i` is a matrix weight (clamped to the code range).
    fn is_weight(&self, i: usize) -> bool {
        let in_head = |k: usize| i >= self.offset(P::HeadW(k)) && i < self.offset(P::HeadB(k));
        i < self.offset(P::B) || in_head(0) || in_head(1)
    }
}

fn matvec(m: &[f32], rows: usize, cols: usize, x: &[f32], out: &mut [f32]) {
    for r in 0..rows {
        let row = &m[r * cols..(r + 1) * cols];
        out[r] += row.iter().zip(x).map(|(a, b)| a * b).sum::<f32>();
    }
}

fn matvec_t(m: &[f32], rows: usize, cols: usize, d: &[f32], out: &mut [f32]) {
    for r in 0..rows {
        let dr = d[r];
        if dr != 0.0 {
            for (o, &a) in out.iter_mut().zip(&m[r * cols..(r + 1) * cols]) {
                *o += a * dr;
            }
        }
    }
}

fn outer(g: &mut [f32], rows: usize, cols: usize, d: &[f32], x: &[f32]) {
    for r in 0..rows {
        let dr = d[r];
        if dr != 0.0 {
            for (gv, &xv) in g[r * cols..(r + 1) * cols].iter_mut().zip(x) {
                *gv += dr * xv;
            }
        }
    }
}

struct Step {
    xin: Vec<f32>,
    h_prev: Vec<f32>,
    z: Vec<f32>,
    r: Vec<f32>,
    c: Vec<f32>,
    rh: Vec<f32>,
    h: Vec<f32>,
    y: [Vec<f32>; 2],
}

/// One frame, mirroring the engine's GRU and dense heads.
fn forward(p: &Params, x: &[f32], h_prev: &[f32]) -> Step {
    let (ni, nh) = (p.input, p.hidden);
    let v = &p.v;
    let b = &v[p.offset(P::B)..p.offset(P::B) + 3 * nh];
    let gate = |g: usize, u_in: &[f32]| {
        let mut a = b[g * nh..(g + 1) * nh].to_vec();
        let w = p.offset(P::W(g));
        matvec(&v[w..w + nh * ni], nh, ni, x, &mut a);
        let u = p.offset(P::U(g));
        matvec(&v[u..u + nh * nh], nh, nh, u_in, &mut a);
        a
    };
    let z: Vec<f32> = gate(0, h_prev).into_iter().map(sigmoid).collect();
    let r: Vec<f32> = gate(1, h_prev).into_iter().map(sigmoid).collect();
    let rh: Vec<f32> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
    let c: Vec<f32> = gate(2, &rh).into_iter().map(f32::tanh).collect();
    let h: Vec<f32> = (0..nh).map(|i| (1.0 - z[i]) * h_prev[i] + z[i] * c[i]).collect();
    let mut xin = x.to_vec();
    xin.extend_from_slice(&h);
    let head = |k: usize| {
        let o = p.offset(P::HeadB(k));
        let mut a = v[o..o + NB_BANDS].to_vec();
        let w = p.offset(P::HeadW(k));
        matvec(&v[w..w + NB_BANDS * (ni + nh)], NB_BANDS, ni + nh, &xin, &mut a);
        a.into_iter().map(sigmoid).collect::<Vec<f32>>()
    };
    let y = [head(0), head(1)];
    Step { xin, h_prev: h_prev.to_vec(), z, r, c, rh, h, y }
}

/// Summed cross-entropy of a chunk; its gradient is added to `grad`.
/// Returns the loss and the final hidden state.
pub fn chunk_gradient(
    p: &Params,
    xs: &[Vec<f32>],
    targets: &[[Vec<f32>; 2]],
    h0: &[f32],
    grad: &mut [f32],
) -> (f64, Vec<f32>) {
    let (ni, nh) = (p.input, p.hidden);
    let v = &p.v;
    let mut steps = Vec::with_capacity(xs.len());
    let mut h = h0.to_vec();
    let mut loss = 0.0f64;
    for (x, t) in xs.iter().zip(targets) {
        let s = forward(p, x, &h);
        for k in 0..2 {
            for (&y, &tv) in s.y[k].iter().zip(&t[k]) {
                let y = (y as f64).clamp(1e-7, 1.0 - 1e-7);
                let tv = tv as f64;
                loss -= tv * y.ln() + (1.0 - tv) * (1.0 - y).ln();
            }
        }
        h = s.h.clone();
        steps.push(s);
    }
    let mut dh_next = vec![0.0f32; nh];
    for (s, t) in steps.iter().zip(targets).rev() {
        let mut dh = dh_next;
        for k in 0..2 {
            let da: Vec<f32> = s.y[k].iter().zip(&t[k]).map(|(y, tv)| y - tv).collect();
            let w = p.offset(P::HeadW(k));
            outer(&mut grad[w..w + NB_BANDS * (ni + nh)], NB_BANDS, ni + nh, &da, &s.xin);
            let o = p.offset(P::HeadB(k));
            grad[o..o + NB_BANDS].iter_mut().zip(&da).for_each(|(g, d)| *g += d);
            let mut dxin = vec![0.0f32; ni + nh];
            matvec_t(&v[w..w + NB_BANDS * (ni + nh)], NB_BANDS, ni + nh, &da, &mut dxin);
            dh.iter_mut().zip(&dxin[ni..]).for_each(|(a, b)| *a += b);
        }
        let x = &s.xin[..ni];
        let mut dh_prev: Vec<f32> = (0..nh).map(|i| dh[i] * (1.0 - s.z[i])).collect();
        let dc: Vec<f32> = (0..nh).map(|i| dh[i] * s.z[i] * (1.0 - s.c[i] * s.c[i])).collect();
        let dz: Vec<f32> = (0..nh)
            .map(|i| dh[i] * (s.c[i] - s.h_prev[i]) * s.z[i] * (1.0 - s.z[i]))
            .collect();
        let (wc, uc) = (p.offset(P::W(2)), p.offset(P::U(2)));
        outer(&mut grad[wc..wc + nh * ni], nh, ni, &dc, x);
        outer(&mut grad[uc..uc + nh * nh], nh, nh, &dc, &s.rh);
        let mut drh = vec![0.0f32; nh];
        matvec_t(&v[uc..uc + nh * nh], nh, nh, &dc, &mut drh);
        let dr: Vec<f32> = (0..nh)
            .map(|i| drh[i] * s.h_prev[i] * s.r[i] * (1.0 - s.r[i]))
            .collect();
        let b = p.offset(P::B);
        for i in 0..nh {
            dh_prev[i] += drh[i] * s.r[i];
            grad[b + i] += dz[i];
            grad[b + nh + i] += dr[i];
            grad[b + 2 * nh + i] += dc[i];
        }
        for (g, d) in [(0, &dz), (1, &dr)] {
            let (w, u) = (p.offset(P::W(g)), p.offset(P::U(g)));
            outer(&mut grad[w..w + nh * ni], nh, ni, d, x);
            outer(&mut grad[u..u + nh * nh], nh, nh, d, &s.h_prev);
            matvec_t(&v[u..u + nh * nh], nh, nh, d, &mut dh_prev);
        }
        dh_next = dh_prev;
    }
    (loss, h)
}

fn quantize(m: &[f32], rows: usize, cols: usize) -> QuantMatrix {
    let codes = m
        .iter()
        .map(|&w| (w / WEIGHT_SCALE).round().clamp(-128.0, 127.0) as i8)
        .collect();
    QuantMatrix::dense(rows, cols, codes).expect("shape is fixed")
}

/// Engine weights for trained parameters.
pub fn to_weights(p: &Params, sample_rate: u32, offset: Vec<f32>, scale: Vec<f32>) -> ModelWeights {
    let (ni, nh) = (p.input, p.hidden);
    let v = &p.v;
    let mut matrices = Vec::new();
    for g in 0..3 {
        let w = p.offset(P::W(g));
        matrices.push(quantize(&v[w..w + nh * ni], nh, ni));
    }
    for g in 0..3 {
        let u = p.offset(P::U(g));
        matrices.push(quantize(&v[u..u + nh * nh], nh, nh));
    }
    let b = p.offset(P::B);
    let gru = Layer {
        kind: LayerKind::Gru,
        activation: Activation::Tanh,
        sources: vec![NETWORK_INPUT],
        in_dim: ni,
        out_dim: nh,
        kernel_width: 1,
        sparse: false,
        matrices,
        bias: v[b..b + 3 * nh].to_vec(),
    };
    let head = |k: usize| {
        let w = p.offset(P::HeadW(k));
        let o = p.offset(P::HeadB(k));
        Layer {
            kind: LayerKind::Dense,
            activation: Activation::Sigmoid,
            sources: vec![NETWORK_INPUT, 0],
            in_dim: ni + nh,
            out_dim: NB_BANDS,
            kernel_width: 1,
            sparse: false,
            matrices: vec![quantize(&v[w..w + NB_BANDS * (ni + nh)], NB_BANDS, ni + nh)],
            bias: v[o..o + NB_BANDS].to_vec(),
        }
    };
    let weights = ModelWeights {
        sample_rate,
        norm_offset: offset,
        norm_scale: scale,
        layers: vec![gru, head(0), head(1)],
    };
    weights.validate().expect("toy model is well formed");
    weights
}

/// Fits the toy model to per-scenario record sequences.
pub fn fit(sequences: &[Vec<Record>], sample_rate: u32, opts: &FitOptions) -> ModelWeights {
    let all: Vec<&Record> = sequences.iter().flatten().collect();
    let (offset, scale) = normalization(&all);
    let norm = |r: &Record| -> Vec<f32> {
        r.features
            .iter()
            .zip(offset.iter().zip(&scale))
            .map(|(&f, (&o, &s))| (f - o) * s)
            .collect()
    };
    let data: Vec<(Vec<Vec<f32>>, Vec<[Vec<f32>; 2]>)> = sequences
        .iter()
        .map(|seq| {
            (
                seq.iter().map(norm).collect(),
                seq.iter().map(|r| [r.target_gains(), target_strengths(r)]).collect(),
            )
        })
        .collect();
    let total: usize = data.iter().map(|d| d.0.len()).sum();

    let mut p = Params::init(NB_FEATURES, opts.hidden, opts.seed);
    let n = p.v.len();
    let (mut m, mut s) = (vec![0.0f32; n], vec![0.0f32; n]);
    let (b1, b2, eps) = (0.9f32, 0.999f32, 1e-8f32);
    let mut t = 0i32;
    let mut rng = stream_rng(opts.seed, 0x4f52);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grad = vec![0.0f32; n];
    for epoch in 0..opts.epochs {
        order.shuffle(&mut rng);
        let (mut pending, mut frames) = (0, 0usize);
        let mut epoch_loss = 0.0;
        for (pos, &si) in order.iter().enumerate() {
            let (xs, ts) = &data[si];
            let mut h = vec![0.0f32; opts.hidden];
            let mut start = 0;
            while start < xs.len() {
                let end = (start + opts.chunk).min(xs.len());
                let (loss, h_end) = chunk_gradient(&p, &xs[start..end], &ts[start..end], &h, &mut grad);
                epoch_loss += loss;
                frames += end - start;
                h = h_end;
                start = end;
                pending += 1;
                let last = pos + 1 == order.len() && start >= xs.len();
                if pending == opts.batch || last {
                    t += 1;
                    let scale = 1.0 / (frames * NB_BANDS) as f32;
                    let (c1, c2) = (1.0 - b1.powi(t), 1.0 - b2.powi(t));
                    for i in 0..n {
                        let g = grad[i] * scale;
                        m[i] = b1 * m[i] + (1.0 - b1) * g;
                        s[i] = b2 * s[i] + (1.0 - b2) * g * g;
                        p.v[i] -= opts.learning_rate * (m[i] / c1) / ((s[i] / c2).sqrt() + eps);
                        if p.is_weight(i) {
                            p.v[i] = p.v[i].clamp(W_MIN, W_MAX);
                        }
                    }
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    pending = 0;
                    frames = 0;
                }
            }
        }
        log::info!("epoch {epoch}: loss {:.4}", epoch_loss / (total * 2 * NB_BANDS) as f64);
    }
    to_weights(&p, sample_rate, offset, scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central finite differences are the oracle for the backward pass.
    #[test]
    fn gradient_matches_finite_differences() {
        let (ni, nh, steps) = (5, 4, 6);
        let mut p = Params::init(ni, nh, 3);
        let mut rng = stream_rng(9, 0);
        p.v.iter_mut().for_each(|v| *v += rng.gen_range(-0.1..0.1));
        let xs: Vec<Vec<f32>> = (0..steps).map(|_| (0..ni).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let ts: Vec<[Vec<f32>; 2]> = (0..steps)
            .map(|_| {
                [
                    (0..NB_BANDS).map(|_| rng.gen_range(0.0..1.0)).collect(),
                    (0..NB_BANDS).map(|_| rng.gen_range(0.0..1.0)).collect(),
                ]
            })
            .collect();
        let h0: Vec<f32> = (0..nh).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let mut grad = vec![0.0; p.v.len()];
        chunk_gradient(&p, &xs, &ts, &h0, &mut grad);
        let loss = |p: &Params| {
            let mut g = vec![0.0; p.v.len()];
            chunk_gradient(p, &xs, &ts, &h0, &mut g).0
        };
        for _ in 0..60 {
            let i = rng.gen_range(0..p.v.len());
            let eps = 1e-2;
            let mut a = p.clone();
            a.v[i] += eps;
            let mut b = p.clone();
            b.v[i] -= eps;
            let fd = (loss(&a) - loss(&b)) / (2.0 * eps as f64);
            let an = grad[i] as f64;
            assert!((fd - an).abs() <= 2e-2 * an.abs().max(0.05), "param {i}: fd {fd} analytic {an}");
        }
    }

    #[test]
    fn exported_weights_reproduce_the_forward_pass() {
        let mut p = Params::init(NB_FEATURES, 16, 5);
        // on the code grid quantization is lossless
        p.v.iter_mut().for_each(|v| *v = (*v * 256.0).round() / 256.0);
        let w = to_weights(&p, 16_000, vec![0.0; NB_FEATURES], vec![1.0; NB_FEATURES]);
        let mut net = duplex_core::model::Network::new(std::sync::Arc::new(w));
        let mut rng = stream_rng(2, 0);
        let mut h = vec![0.0; 16];
        for _ in 0..20 {
            let x: Vec<f32> = (0..NB_FEATURES).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let s = forward(&p, &x, &h);
            let (g, r) = net.forward(&x).unwrap();
            for (a, b) in s.y[0].iter().zip(g).chain(s.y[1].iter().zip(r)) {
                assert!((a - b).abs() < 1e-4, "{a} vs {b}");
            }
            h = s.h;
        }
    }
}
