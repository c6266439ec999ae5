//! Quantized block-sparse network: weight files and streaming inference.

mod format;
mod matrix;
mod network;
pub mod variants;

pub use format::{MAGIC, VERSION};
pub use matrix::{QuantMatrix, BLOCK_COLS, BLOCK_ROWS, BLOCK_SIZE, WEIGHT_SCALE};
pub use network::{IdentityPredictor, Network};

use crate::{Error, Result};

/// Source index naming the (normalized) feature vector.
pub const NETWORK_INPUT: u8 = 0xFF;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum LayerKind {
    Conv = 0,
    Gru = 1,
    Dense = 2,
}

impl LayerKind {
    fn from_u8(v: u8) -> Result<Self> {
        Ok(match v {
            0 => Self::Conv,
            1 => Self::Gru,
            2 => Self::Dense,
            _ => return Err(Error::Format(format!("unknown layer kind {v}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Activation {
    None = 0,
    Tanh = 1,
    Sigmoid = 2,
}

impl Activation {
    fn from_u8(v: u8) -> Result<Self> {
        Ok(match v {
            0 => Self::None,
            1 => Self::Tanh,
            2 => Self::Sigmoid,
            _ => return Err(Error::Format(format!("unknown activation {v}"))),
        })
    }

    pub fn apply(self, x: f32) -> f32 {
        match self {
            Self::None => x,
            Self::Tanh => x.tanh(),
            Self::Sigmoid => sigmoid(x),
        }
    }
}

pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// One layer as stored in a weight file.
///
/// `in_dim` is the per-frame input size (the concatenation of `sources`).
/// Convolution matrices are `out x (in * kernel)` with tap-major columns,
/// oldest tap first. Recurrent layers store `W_z, W_r, W_h, U_z, U_r, U_h`
/// and biases in `z, r, h` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub kind: LayerKind,
    pub activation: Activation,
    pub sources: Vec<u8>,
    pub in_dim: usize,
    pub out_dim: usize,
    pub kernel_width: u8,
    pub sparse: bool,
    pub matrices: Vec<QuantMatrix>,
    pub bias: Vec<f32>,
}

impl Layer {
    pub fn nonzeros(&self) -> usize {
        self.matrices.iter().map(QuantMatrix::nonzeros).sum()
    }
}

/// Immutable, validated model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub sample_rate: u32,
    /// Features are normalized as `(f - offset) * scale` before the first
    /// layer.
    pub norm_offset: Vec<f32>,
    pub norm_scale: Vec<f32>,
    pub layers: Vec<Layer>,
}

impl ModelWeights {
    /// Structurally non-zero weights over all layers.
    pub fn nonzeros(&self) -> usize {
        self.layers.iter().map(Layer::nonzeros).sum()
    }

    /// Multiply-accumulates of one forward step.
    pub fn macs_per_frame(&self) -> usize {
        self.nonzeros()
    }

    /// Size of each output head.
    pub fn n_outputs(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }
}

/// Produces per-band gains and comb strengths from a feature vector.
pub trait BandPredictor: Send {
    fn predict(&mut self, features: &[f32]) -> Result<(Vec<f32>, Vec<f32>)>;
    fn reset(&mut self);
}
