//! The two-branch residual network.

mod checkpoint;
mod decode;
mod model;

pub use checkpoint::{
    decode as decode_checkpoint, encode as encode_checkpoint, encoded_len, fnv1a64,
    load_checkpoint, peek_header, save_checkpoint, Header, CHECKSUM_LEN, HEADER_LEN, MAGIC,
    VERSION,
};
pub use decode::{
    branch_estimate, from_network_output, fuse, soft_decode, to_network_input, Decoded,
};
pub use model::{
    Block, Branch, Mode, Model, NetworkConfig, QfTag, ResidualOutput, Tape, TrainBatch,
};
