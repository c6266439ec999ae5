//! Binary weight file reading and writing.

use std::path::Path;

use super::matrix::{QuantMatrix, BLOCK_COLS, BLOCK_ROWS, BLOCK_SIZE};
use super::{Activation, Layer, LayerKind, ModelWeights, NETWORK_INPUT};
use crate::{Error, Result, NB_FEATURES};

pub const MAGIC: &[u8; 4] = b"PNW1";
pub const VERSION: u32 = 1;

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Format(format!(
                "truncated file: need {n} bytes at offset {}",
                self.pos
            )));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i8s(&mut self, n: usize) -> Result<Vec<i8>> {
        Ok(self.take(n)?.iter().map(|&b| b as i8).collect())
    }
}

/// Shapes of the matrices stored for a layer, in file order.
pub(crate) fn matrix_shapes(kind: LayerKind, in_dim: usize, out_dim: usize, kernel: usize) -> Vec<(usize, usize)> {
    match kind {
        LayerKind::Conv => vec![(out_dim, in_dim * kernel)],
        LayerKind::Dense => vec![(out_dim, in_dim)],
        LayerKind::Gru => {
            let mut v = vec![(out_dim, in_dim); 3];
            v.extend([(out_dim, out_dim); 3]);
            v
        }
    }
}

pub(crate) fn bias_len(kind: LayerKind, out_dim: usize) -> usize {
    match kind {
        LayerKind::Gru => 3 * out_dim,
        _ => out_dim,
    }
}

fn layer_err(index: usize, e: Error) -> Error {
    match e {
        Error::Format(reason) => Error::Layer { index, reason },
        other => other,
    }
}

fn read_layer(r: &mut Reader<'_>) -> Result<Layer> {
    let kind = LayerKind::from_u8(r.u8()?)?;
    let activation = Activation::from_u8(r.u8()?)?;
    let n_sources = r.u8()? as usize;
    let sources = r.take(n_sources)?.to_vec();
    let in_dim = r.u32()? as usize;
    let out_dim = r.u32()? as usize;
    let kernel_width = r.u8()? as usize;
    let sparse = match r.u8()? {
        0 => false,
        1 => true,
        v => return Err(Error::Format(format!("sparse flag {v}"))),
    };
    if kind == LayerKind::Conv && kernel_width == 0 {
        return Err(Error::Format("convolution with zero kernel width".into()));
    }
    let kernel = if kind == LayerKind::Conv { kernel_width } else { 1 };
    let mut matrices = Vec::new();
    for (rows, cols) in matrix_shapes(kind, in_dim, out_dim, kernel) {
        let m = if sparse {
            let n = r.u32()? as usize;
            let mut blocks = Vec::with_capacity(n.min(1 << 20));
            for _ in 0..n {
                blocks.push((r.u16()?, r.u16()?));
            }
            let codes = r.i8s(n * BLOCK_SIZE)?;
            QuantMatrix::sparse(rows, cols, blocks, codes)?
        } else {
            QuantMatrix::dense(rows, cols, r.i8s(rows * cols)?)?
        };
        matrices.push(m);
    }
    let mut bias = Vec::with_capacity(bias_len(kind, out_dim));
    for _ in 0..bias_len(kind, out_dim) {
        bias.push(r.f32()?);
    }
    Ok(Layer {
        kind,
        activation,
        sources,
        in_dim,
        out_dim,
        kernel_width: kernel_width as u8,
        sparse,
        matrices,
        bias,
    })
}

impl ModelWeights {
    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        if data.len() < 4 + 4 {
            return Err(Error::Format("file too short".into()));
        }
        let (body, trailer) = data.split_at(data.len() - 4);
        let stored = u32::from_le_bytes(trailer.try_into().unwrap());
        if body.get(..4) != Some(MAGIC.as_slice()) {
            return Err(Error::Format("bad magic".into()));
        }
        let actual = crc32fast::hash(body);
        if stored != actual {
            return Err(Error::Format(format!(
                "checksum mismatch: stored {stored:08x}, computed {actual:08x}"
            )));
        }
        let mut r = Reader { data: body, pos: 4 };
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let sample_rate = r.u32()?;
        let mut norm_offset = Vec::with_capacity(NB_FEATURES);
        let mut norm_scale = Vec::with_capacity(NB_FEATURES);
        for _ in 0..NB_FEATURES {
            norm_offset.push(r.f32()?);
            norm_scale.push(r.f32()?);
        }
        let n_layers = r.u32()? as usize;
        let mut layers = Vec::with_capacity(n_layers.min(256));
        for index in 0..n_layers {
            layers.push(read_layer(&mut r).map_err(|e| layer_err(index, e))?);
        }
        if r.pos != body.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes before checksum",
                body.len() - r.pos
            )));
        }
        let weights = ModelWeights { sample_rate, norm_offset, norm_scale, layers };
        weights.validate()?;
        Ok(weights)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.nonzeros() + 4096);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.sample_rate.to_le_bytes());
        for (o, s) in self.norm_offset.iter().zip(&self.norm_scale) {
            out.extend_from_slice(&o.to_le_bytes());
            out.extend_from_slice(&s.to_le_bytes());
        }
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for l in &self.layers {
            out.push(l.kind as u8);
            out.push(l.activation as u8);
            out.push(l.sources.len() as u8);
            out.extend_from_slice(&l.sources);
            out.extend_from_slice(&(l.in_dim as u32).to_le_bytes());
            out.extend_from_slice(&(l.out_dim as u32).to_le_bytes());
            out.push(l.kernel_width);
            out.push(l.sparse as u8);
            for m in &l.matrices {
                if let Some(blocks) = m.blocks() {
                    out.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
                    for &(rb, cb) in blocks {
                        out.extend_from_slice(&rb.to_le_bytes());
                        out.extend_from_slice(&cb.to_le_bytes());
                    }
                }
                out.extend(m.codes().iter().map(|&c| c as u8));
            }
            for b in &l.bias {
                out.extend_from_slice(&b.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    /// Checks source references, dimension chaining, matrix shapes and the
    /// output-head convention.
    pub fn validate(&self) -> Result<()> {
        if self.norm_offset.len() != NB_FEATURES || self.norm_scale.len() != NB_FEATURES {
            return Err(Error::Format("normalization block must hold 100 pairs".into()));
        }
        if self.layers.len() < 2 {
            return Err(Error::Format("a model needs at least the two output heads".into()));
        }
        for (index, l) in self.layers.iter().enumerate() {
            let err = |reason: String| Error::Layer { index, reason };
            if l.sources.is_empty() {
                return Err(err("no input sources".into()));
            }
            let mut dim = 0;
            for &s in &l.sources {
                dim += if s == NETWORK_INPUT {
                    NB_FEATURES
                } else if (s as usize) < index {
                    self.layers[s as usize].out_dim
                } else {
                    return Err(err(format!("source {s} is not an earlier layer")));
                };
            }
            if dim != l.in_dim {
                return Err(err(format!("sources provide {dim} values, in_dim is {}", l.in_dim)));
            }
            if l.out_dim == 0 {
                return Err(err("zero output size".into()));
            }
            let kernel = if l.kind == LayerKind::Conv { l.kernel_width as usize } else { 1 };
            if l.kind == LayerKind::Conv && kernel == 0 {
                return Err(err("convolution with zero kernel width".into()));
            }
            if l.kind == LayerKind::Gru && l.activation != Activation::Tanh {
                return Err(err("recurrent layers use tanh".into()));
            }
            let shapes = matrix_shapes(l.kind, l.in_dim, l.out_dim, kernel);
            if shapes.len() != l.matrices.len() {
                return Err(err(format!("expected {} matrices", shapes.len())));
            }
            for (m, &(rows, cols)) in l.matrices.iter().zip(&shapes) {
                if m.rows() != rows || m.cols() != cols {
                    return Err(err(format!(
                        "matrix is {}x{}, expected {rows}x{cols}",
                        m.rows(),
                        m.cols()
                    )));
                }
                if m.is_sparse() != l.sparse {
                    return Err(err("matrix storage disagrees with sparse flag".into()));
                }
                if l.sparse && (rows % BLOCK_ROWS != 0 || cols % BLOCK_COLS != 0) {
                    return Err(err(format!("{rows}x{cols} is not block aligned")));
                }
            }
            if l.bias.len() != bias_len(l.kind, l.out_dim) {
                return Err(err("bias length".into()));
            }
        }
        let n = self.layers.len();
        for index in [n - 2, n - 1] {
            let l = &self.layers[index];
            if l.kind != LayerKind::Dense || l.activation != Activation::Sigmoid {
                return Err(Error::Layer {
                    index,
                    reason: "output heads must be dense sigmoid layers".into(),
                });
            }
        }
        if self.layers[n - 2].out_dim != self.layers[n - 1].out_dim {
            return Err(Error::Layer {
                index: n - 1,
                reason: "gain and strength heads differ in size".into(),
            });
        }
        Ok(())
    }
}
