use crate::error::{ensure, Result};

/// Banded causal mask: query `m` sees keys `max(0, m−ω+1) ..= m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BandMask {
    seq_len: usize,
    window: usize,
}

impl BandMask {
    pub fn new(seq_len: usize, window: usize) -> Result<Self> {
        ensure!(window >= 1, Config, "attention window must be at least 1");
        Ok(Self { seq_len, window })
    }

    /// Full causal mask (window covers the whole sequence).
    pub fn causal(seq_len: usize) -> Self {
        Self {
            seq_len,
            window: seq_len.max(1),
        }
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Number of key slots any query can see.
    pub fn span(&self) -> usize {
        self.window.min(self.seq_len.max(1))
    }

    pub fn is_full_causal(&self) -> bool {
        self.window >= self.seq_len
    }

    /// First visible key for query `m`.
    #[inline]
    pub fn lo(&self, m: usize) -> usize {
        (m + 1).saturating_sub(self.window)
    }

    #[inline]
    pub fn visible(&self, m: usize, n: usize) -> bool {
        n <= m && n >= self.lo(m)
    }

    pub(crate) fn check_len(&self, n: usize) -> Result<()> {
        ensure!(
            self.seq_len == n,
            Dimension,
            "mask built for {} positions applied to {n}",
            self.seq_len
        );
        Ok(())
    }
}
