//! Encoder-decoder transformer for next-position regression.

mod attention;
mod config;
mod model;
mod pe;

pub use attention::{
    attention_scaled, feedforward, multi_head, scaled_dot_attention, scaled_dot_attention_matrix, AttnWeights, Mask,
};
pub use config::{ModelConfig, PeDenominator};
pub use model::TransformerModel;
pub use pe::{positional_encoding, positional_encoding_with, PositionalEncodingTable};
