use crate::tensor::Tensor;

/// Sinusoidal encoding of position `pos`, feature `j`, with exponent
/// denominator `denom` (normally `d_model`).
pub fn positional_encoding_with(pos: usize, j: usize, denom: usize) -> f64 {
    let k = (j / 2) as f64;
    let arg = pos as f64 / 10000f64.powf(2.0 * k / denom as f64);
    if j.is_multiple_of(2) {
        arg.sin()
    } else {
        arg.cos()
    }
}

pub fn positional_encoding(pos: usize, j: usize, d_model: usize) -> f64 {
    positional_encoding_with(pos, j, d_model)
}

/// Precomputed `max_len × d_model` encodings.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionalEncodingTable {
    pub table: Tensor,
}

impl PositionalEncodingTable {
    pub fn new(max_len: usize, d_model: usize, denom: usize) -> Self {
        let mut data = Vec::with_capacity(max_len * d_model);
        for pos in 0..max_len {
            for j in 0..d_model {
                data.push(positional_encoding_with(pos, j, denom));
            }
        }
        Self {
            table: Tensor::new(&[max_len, d_model], data).expect("sized"),
        }
    }

    pub fn get(&self, pos: usize, j: usize) -> f64 {
        self.table.at(&[pos, j])
    }
}
