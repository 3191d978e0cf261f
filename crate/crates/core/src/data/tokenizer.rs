use crate::error::{ensure, Result};

/// Every byte value is its own id; there are no reserved special tokens.
pub const VOCAB_SIZE: usize = 256;

pub fn tokenize_bytes(text: &[u8]) -> Vec<usize> {
    text.iter().map(|&b| b as usize).collect()
}

/// Inverse of [`tokenize_bytes`]; ids outside the byte range are rejected.
pub fn detokenize(ids: &[usize]) -> Result<Vec<u8>> {
    ids.iter()
        .map(|&id| {
            ensure!(id < VOCAB_SIZE, Data, "token id {id} is not a byte");
            Ok(id as u8)
        })
        .collect()
}
