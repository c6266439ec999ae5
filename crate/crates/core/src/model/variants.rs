//! Reference topologies with seeded random weights.
//!
//! These give correctly sized models for benchmarking, format tests and the
//! identity check; trained weights come from a weight file.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::matrix::{QuantMatrix, BLOCK_COLS, BLOCK_ROWS, BLOCK_SIZE};
use super::{Activation, Layer, LayerKind, ModelWeights, NETWORK_INPUT};
use crate::{NB_BANDS, NB_FEATURES};

/// Shape parameters of the conv + GRU topology.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantSpec {
    pub conv1_units: usize,
    pub units: usize,
    pub n_gru: usize,
    /// `None` stores the layer dense.
    pub conv2_density: Option<f64>,
    /// Densities of the candidate, update and reset matrices.
    pub gate_density: Option<[f64; 3]>,
}

impl VariantSpec {
    pub fn full() -> Self {
        Self { conv1_units: 128, units: 512, n_gru: 5, conv2_density: None, gate_density: None }
    }

    pub fn sparse() -> Self {
        Self {
            conv2_density: Some(0.5),
            gate_density: Some([0.4, 0.2, 0.1]),
            ..Self::full()
        }
    }

    pub fn small() -> Self {
        Self { conv1_units: 256, units: 256, ..Self::sparse() }
    }
}

fn code_range(fan_in: usize) -> i32 {
    // uniform codes with unit-variance-preserving spread
    let r = 256.0 * (3.0 / fan_in.max(1) as f64).sqrt();
    (r.round() as i32).clamp(1, 127)
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, density: Option<f64>) -> QuantMatrix {
    match density {
        None => {
            let c = code_range(cols);
            let codes = (0..rows * cols).map(|_| rng.gen_range(-c..=c) as i8).collect();
            QuantMatrix::dense(rows, cols, codes).expect("shape is consistent")
        }
        Some(d) => {
            let nb_c = cols / BLOCK_COLS;
            let total = (rows / BLOCK_ROWS) * nb_c;
            let n = ((total as f64 * d).round() as usize).min(total);
            let mut picked = sample(rng, total, n).into_vec();
            picked.sort_unstable();
            let blocks: Vec<(u16, u16)> =
                picked.iter().map(|&i| ((i / nb_c) as u16, (i % nb_c) as u16)).collect();
            let c = code_range((cols as f64 * d).ceil() as usize);
            let codes = (0..n * BLOCK_SIZE).map(|_| rng.gen_range(-c..=c) as i8).collect();
            QuantMatrix::sparse(rows, cols, blocks, codes).expect("blocks are in range")
        }
    }
}

fn small_bias(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| rng.gen_range(-0.1..0.1)).collect()
}

/// Random weights for the given topology.
///
/// Layers: conv 1x5 on the features, conv 1x3, a chain of GRUs, and two
/// dense sigmoid heads (gains, then strengths) reading all GRU outputs.
pub fn build(spec: &VariantSpec, sample_rate: u32, seed: u64) -> ModelWeights {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    let c1 = spec.conv1_units;
    layers.push(Layer {
        kind: LayerKind::Conv,
        activation: Activation::Tanh,
        sources: vec![NETWORK_INPUT],
        in_dim: NB_FEATURES,
        out_dim: c1,
        kernel_width: 5,
        sparse: false,
        matrices: vec![random_matrix(&mut rng, c1, NB_FEATURES * 5, None)],
        bias: small_bias(&mut rng, c1),
    });
    let u = spec.units;
    layers.push(Layer {
        kind: LayerKind::Conv,
        activation: Activation::Tanh,
        sources: vec![0],
        in_dim: c1,
        out_dim: u,
        kernel_width: 3,
        sparse: spec.conv2_density.is_some(),
        matrices: vec![random_matrix(&mut rng, u, c1 * 3, spec.conv2_density)],
        bias: small_bias(&mut rng, u),
    });
    for g in 0..spec.n_gru {
        let d = spec.gate_density.map(|[h, z, r]| [z, r, h]);
        let mut matrices = Vec::with_capacity(6);
        for _ in 0..2 {
            for k in 0..3 {
                matrices.push(random_matrix(&mut rng, u, u, d.map(|d| d[k])));
            }
        }
        layers.push(Layer {
            kind: LayerKind::Gru,
            activation: Activation::Tanh,
            sources: vec![(g + 1) as u8],
            in_dim: u,
            out_dim: u,
            kernel_width: 0,
            sparse: spec.gate_density.is_some(),
            matrices,
            bias: small_bias(&mut rng, 3 * u),
        });
    }
    let concat: Vec<u8> = (2..2 + spec.n_gru as u8).collect();
    for _ in 0..2 {
        let n_in = u * spec.n_gru;
        layers.push(Layer {
            kind: LayerKind::Dense,
            activation: Activation::Sigmoid,
            sources: concat.clone(),
            in_dim: n_in,
            out_dim: NB_BANDS,
            kernel_width: 0,
            sparse: false,
            matrices: vec![random_matrix(&mut rng, NB_BANDS, n_in, None)],
            bias: small_bias(&mut rng, NB_BANDS),
        });
    }
    ModelWeights {
        sample_rate,
        norm_offset: vec![0.0; NB_FEATURES],
        norm_scale: vec![1.0; NB_FEATURES],
        layers,
    }
}

/// A model whose gains are exactly 1 and strengths exactly 0 in `f32`.
pub fn identity_stub(sample_rate: u32) -> ModelWeights {
    let head = |bias: f32| Layer {
        kind: LayerKind::Dense,
        activation: Activation::Sigmoid,
        sources: vec![NETWORK_INPUT],
        in_dim: NB_FEATURES,
        out_dim: NB_BANDS,
        kernel_width: 0,
        sparse: false,
        matrices: vec![QuantMatrix::dense(NB_BANDS, NB_FEATURES, vec![0; NB_BANDS * NB_FEATURES])
            .expect("shape is consistent")],
        bias: vec![bias; NB_BANDS],
    };
    ModelWeights {
        sample_rate,
        norm_offset: vec![0.0; NB_FEATURES],
        norm_scale: vec![1.0; NB_FEATURES],
        layers: vec![head(30.0), head(-200.0)],
    }
}
