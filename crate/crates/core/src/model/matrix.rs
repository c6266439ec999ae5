use crate::{Error, Result};

/// Rows and columns of one sparsity block.
pub const BLOCK_ROWS: usize = 16;
pub const BLOCK_COLS: usize = 4;
pub const BLOCK_SIZE: usize = BLOCK_ROWS * BLOCK_COLS;

/// Real value of one weight code.
pub const WEIGHT_SCALE: f32 = 1.0 / 256.0;

/// `int8` weight matrix, dense or 16x4 block-sparse.
///
/// Codes are kept in file order for serialization; a second copy is packed
/// by row block with each block stored column-major, which lets the kernel
/// accumulate 16 outputs per input sample.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantMatrix {
    rows: usize,
    cols: usize,
    blocks: Option<Vec<(u16, u16)>>,
    codes: Vec<i8>,
    packed: Packed,
}

#[derive(Debug, Clone, PartialEq)]
enum Packed {
    Blocks {
        row_ptr: Vec<u32>,
        col_idx: Vec<u32>,
        weights: Vec<i8>,
    },
    RowMajor,
}

impl QuantMatrix {
    /// Dense matrix from row-major codes.
    pub fn dense(rows: usize, cols: usize, codes: Vec<i8>) -> Result<Self> {
        if codes.len() != rows * cols {
            return Err(Error::Format(format!(
                "dense matrix {rows}x{cols} needs {} codes, got {}",
                rows * cols,
                codes.len()
            )));
        }
        let packed = if rows % BLOCK_ROWS == 0 && cols % BLOCK_COLS == 0 {
            let nb_r = rows / BLOCK_ROWS;
            let nb_c = cols / BLOCK_COLS;
            let mut row_ptr = Vec::with_capacity(nb_r + 1);
            let mut col_idx = Vec::with_capacity(nb_r * nb_c);
            let mut weights = Vec::with_capacity(rows * cols);
            row_ptr.push(0);
            for rb in 0..nb_r {
                for cb in 0..nb_c {
                    col_idx.push(cb as u32);
                    for j in 0..BLOCK_COLS {
                        for r in 0..BLOCK_ROWS {
                            weights.push(codes[(rb * BLOCK_ROWS + r) * cols + cb * BLOCK_COLS + j]);
                        }
                    }
                }
                row_ptr.push(col_idx.len() as u32);
            }
            Packed::Blocks { row_ptr, col_idx, weights }
        } else {
            Packed::RowMajor
        };
        Ok(Self { rows, cols, blocks: None, codes, packed })
    }

    /// Block-sparse matrix; `codes` holds 64 row-major codes per block, in
    /// the order of `blocks` (`(row_block, col_block)` pairs).
    pub fn sparse(rows: usize, cols: usize, blocks: Vec<(u16, u16)>, codes: Vec<i8>) -> Result<Self> {
        if rows % BLOCK_ROWS != 0 || cols % BLOCK_COLS != 0 {
            return Err(Error::Format(format!(
                "sparse matrix {rows}x{cols} is not a multiple of {BLOCK_ROWS}x{BLOCK_COLS}"
            )));
        }
        if codes.len() != blocks.len() * BLOCK_SIZE {
            return Err(Error::Format(format!(
                "{} blocks need {} codes, got {}",
                blocks.len(),
                blocks.len() * BLOCK_SIZE,
                codes.len()
            )));
        }
        let nb_r = rows / BLOCK_ROWS;
        let nb_c = cols / BLOCK_COLS;
        let mut seen = vec![false; nb_r * nb_c];
        for &(rb, cb) in &blocks {
            let (rb, cb) = (rb as usize, cb as usize);
            if rb >= nb_r || cb >= nb_c {
                return Err(Error::Format(format!(
                    "block ({rb}, {cb}) outside {nb_r}x{nb_c} block grid"
                )));
            }
            if std::mem::replace(&mut seen[rb * nb_c + cb], true) {
                return Err(Error::Format(format!("duplicate block ({rb}, {cb})")));
            }
        }
        let mut order: Vec<usize> = (0..blocks.len()).collect();
        order.sort_by_key(|&i| (blocks[i].0, blocks[i].1));
        let mut row_ptr = vec![0u32; nb_r + 1];
        let mut col_idx = Vec::with_capacity(blocks.len());
        let mut weights = Vec::with_capacity(codes.len());
        for &i in &order {
            let (rb, cb) = blocks[i];
            row_ptr[rb as usize + 1] += 1;
            col_idx.push(cb as u32);
            let src = &codes[i * BLOCK_SIZE..(i + 1) * BLOCK_SIZE];
            for j in 0..BLOCK_COLS {
                for r in 0..BLOCK_ROWS {
                    weights.push(src[r * BLOCK_COLS + j]);
                }
            }
        }
        for rb in 0..nb_r {
            row_ptr[rb + 1] += row_ptr[rb];
        }
        Ok(Self {
            rows,
            cols,
            blocks: Some(blocks),
            codes,
            packed: Packed::Blocks { row_ptr, col_idx, weights },
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_sparse(&self) -> bool {
        self.blocks.is_some()
    }

    pub fn blocks(&self) -> Option<&[(u16, u16)]> {
        self.blocks.as_deref()
    }

    /// Codes in file order.
    pub fn codes(&self) -> &[i8] {
        &self.codes
    }

    /// Structurally non-zero weights (and multiply-accumulates per product).
    pub fn nonzeros(&self) -> usize {
        match &self.blocks {
            Some(b) => b.len() * BLOCK_SIZE,
            None => self.rows * self.cols,
        }
    }

    /// Zero-filled row-major copy of the real-valued weights.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.rows * self.cols];
        let s = WEIGHT_SCALE as f64;
        match &self.blocks {
            None => {
                for (o, &c) in out.iter_mut().zip(&self.codes) {
                    *o = c as f64 * s;
                }
            }
            Some(blocks) => {
                for (i, &(rb, cb)) in blocks.iter().enumerate() {
                    for r in 0..BLOCK_ROWS {
                        for j in 0..BLOCK_COLS {
                            let row = rb as usize * BLOCK_ROWS + r;
                            let col = cb as usize * BLOCK_COLS + j;
                            out[row * self.cols + col] =
                                self.codes[i * BLOCK_SIZE + r * BLOCK_COLS + j] as f64 * s;
                        }
                    }
                }
            }
        }
        out
    }

    /// `y = W x`.
    pub fn matvec(&self, x: &[f32], y: &mut [f32]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(y.len(), self.rows);
        match &self.packed {
            Packed::Blocks { row_ptr, col_idx, weights } => {
                block_kernel(row_ptr, col_idx, weights, x, y);
            }
            Packed::RowMajor => {
                for (r, out) in y.iter_mut().enumerate() {
                    let row = &self.codes[r * self.cols..(r + 1) * self.cols];
                    let acc = row
                        .iter()
                        .zip(x)
                        .fold(0.0f32, |a, (&c, &v)| a + c as f32 * v);
                    *out = acc * WEIGHT_SCALE;
                }
            }
        }
    }
}

#[inline(always)]
fn block_kernel_generic(row_ptr: &[u32], col_idx: &[u32], weights: &[i8], x: &[f32], y: &mut [f32]) {
    for (rb, out) in y.chunks_exact_mut(BLOCK_ROWS).enumerate() {
        let mut acc = [0.0f32; BLOCK_ROWS];
        let (start, end) = (row_ptr[rb] as usize, row_ptr[rb + 1] as usize);
        for e in start..end {
            let c = col_idx[e] as usize * BLOCK_COLS;
            let w = &weights[e * BLOCK_SIZE..(e + 1) * BLOCK_SIZE];
            let xs = &x[c..c + BLOCK_COLS];
            for j in 0..BLOCK_COLS {
                let xj = xs[j];
                let col = &w[j * BLOCK_ROWS..(j + 1) * BLOCK_ROWS];
                for r in 0..BLOCK_ROWS {
                    acc[r] += col[r] as f32 * xj;
                }
            }
        }
        for r in 0..BLOCK_ROWS {
            out[r] = acc[r] * WEIGHT_SCALE;
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn block_kernel_avx2(row_ptr: &[u32], col_idx: &[u32], weights: &[i8], x: &[f32], y: &mut [f32]) {
    block_kernel_generic(row_ptr, col_idx, weights, x, y)
}

fn block_kernel(row_ptr: &[u32], col_idx: &[u32], weights: &[i8], x: &[f32], y: &mut [f32]) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("avx2") && std::is_x86_feature_detected!("fma") {
            // SAFETY: the CPU supports AVX2 and FMA, checked above.
            return unsafe { block_kernel_avx2(row_ptr, col_idx, weights, x, y) };
        }
    }
    block_kernel_generic(row_ptr, col_idx, weights, x, y)
}
