use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Direction of the per-head linear distance bias.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlopeMode {
    /// Classic ALiBi: every head penalizes distance.
    Negative,
    /// Every head rewards distance.
    Positive,
    /// First half of the heads negative, second half positive.
    Balanced,
    None,
}

/// Per-head bias slopes, head 0 first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeSchedule {
    pub mode: SlopeMode,
    pub slopes: Vec<f64>,
}

impl SlopeSchedule {
    pub fn len(&self) -> usize {
        self.slopes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slopes.is_empty()
    }

    /// The schedule with every slope negated.
    pub fn negated(&self) -> SlopeSchedule {
        let mode = match self.mode {
            SlopeMode::Negative => SlopeMode::Positive,
            SlopeMode::Positive => SlopeMode::Negative,
            m => m,
        };
        SlopeSchedule {
            mode,
            slopes: self.slopes.iter().map(|s| -s).collect(),
        }
    }
}

/// Builds the slope schedule for `heads` heads.
///
/// Balanced mode assigns `-2^-k` to heads `1..=h/2` and `+2^-k` to heads
/// `h/2+1..=h` (k restarting at 1 for the positive half). Single-direction
/// modes use magnitudes `2^-k` for `k = 1..=h`. `None` yields all zeros.
pub fn slope_schedule(heads: usize, mode: SlopeMode) -> Result<SlopeSchedule> {
    ensure!(heads >= 1, Config, "slope schedule needs at least one head");
    let geometric = |k: usize| 0.5f64.powi(k as i32);
    let slopes = match mode {
        SlopeMode::Negative => (1..=heads).map(|k| -geometric(k)).collect(),
        SlopeMode::Positive => (1..=heads).map(geometric).collect(),
        SlopeMode::Balanced => {
            ensure!(
                heads % 2 == 0,
                Config,
                "balanced slopes need an even head count, got {heads}"
            );
            let half = heads / 2;
            (1..=half)
                .map(|k| -geometric(k))
                .chain((1..=half).map(geometric))
                .collect()
        }
        SlopeMode::None => vec![0.0; heads],
    };
    Ok(SlopeSchedule { mode, slopes })
}

/// Linear distance bias `s·(m−n)` for query position `m` and key position `n`.
pub fn alibi_bias(m: usize, n: usize, slope: f64) -> Result<f64> {
    if m < n {
        return Err(Error::Contract(format!(
            "alibi bias queried for future key: m={m} < n={n}"
        )));
    }
    Ok(slope * (m - n) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_eight_heads() {
        let s = slope_schedule(8, SlopeMode::Balanced).unwrap();
        assert_eq!(
            s.slopes,
            vec![-0.5, -0.25, -0.125, -0.0625, 0.5, 0.25, 0.125, 0.0625]
        );
    }

    #[test]
    fn balanced_two_heads() {
        assert_eq!(
            slope_schedule(2, SlopeMode::Balanced).unwrap().slopes,
            vec![-0.5, 0.5]
        );
    }

    #[test]
    fn negative_four_heads_is_geometric() {
        let s = slope_schedule(4, SlopeMode::Negative).unwrap().slopes;
        assert_eq!(s, vec![-0.5, -0.25, -0.125, -0.0625]);
        for w in s.windows(2) {
            assert_eq!(w[1] / w[0], 0.5);
        }
        let p = slope_schedule(5, SlopeMode::Positive).unwrap().slopes;
        assert!(p.iter().all(|&x| x > 0.0));
        for w in p.windows(2) {
            assert_eq!(w[1] / w[0], 0.5);
        }
    }

    #[test]
    fn odd_balanced_is_rejected() {
        assert!(matches!(
            slope_schedule(3, SlopeMode::Balanced),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            slope_schedule(0, SlopeMode::Negative),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn bias_examples() {
        assert_eq!(alibi_bias(5, 5, 0.37).unwrap(), 0.0);
        assert_eq!(alibi_bias(5, 2, -0.5).unwrap(), -1.5);
        assert!(matches!(alibi_bias(2, 5, 0.5), Err(Error::Contract(_))));
    }

    #[test]
    fn bias_is_monotone_in_distance_over_a_window() {
        for &s in &[-0.5, -0.0625, 0.25] {
            for m in 0..32usize {
                for n in 0..m {
                    let near = alibi_bias(m, n + 1, s).unwrap();
                    let far = alibi_bias(m, n, s).unwrap();
                    if s < 0.0 {
                        assert!(far < near);
                    } else {
                        assert!(far > near);
                    }
                }
            }
        }
    }
}
