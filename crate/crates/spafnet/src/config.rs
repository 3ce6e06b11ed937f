use serde::{Deserialize, Serialize};

use crate::error::{Result, SpafError};

/// How the two output channels are turned into the reported field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputNorm {
    /// Divide by the complex mean; the result has mean exactly 1.
    ComplexMean,
    /// Divide by the phase of the complex mean only, keeping the amplitude
    /// scale set by the network.
    MeanPhase,
}

impl std::str::FromStr for OutputNorm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "complex-mean" => Ok(Self::ComplexMean),
            "mean-phase" => Ok(Self::MeanPhase),
            _ => Err(format!("unknown output normalization {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpafConfig {
    /// Number of input hologram planes.
    pub m_inputs: usize,
    /// Input side length in pixels.
    pub n: usize,
    pub channels: usize,
    pub blocks: usize,
    /// Half window size of the Fourier branch per block.
    pub half_windows: Vec<usize>,
    /// Shared-parameter module applications per block.
    pub recursion: usize,
    pub output_norm: OutputNorm,
}

impl Default for SpafConfig {
    fn default() -> Self {
        Self {
            m_inputs: 2,
            n: 64,
            channels: 32,
            blocks: 4,
            half_windows: vec![16, 12, 8, 8],
            recursion: 2,
            output_norm: OutputNorm::MeanPhase,
        }
    }
}

impl SpafConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SpafError::Config(msg));
        if self.n < 8 || !self.n.is_multiple_of(2) {
            return bad(format!("n must be even and >= 8, got {}", self.n));
        }
        if self.m_inputs == 0 || self.channels == 0 || self.blocks == 0 || self.recursion == 0 {
            return bad("m_inputs, channels, blocks and recursion must all be >= 1".into());
        }
        if self.half_windows.len() != self.blocks {
            return bad(format!(
                "{} half windows given for {} blocks",
                self.half_windows.len(),
                self.blocks
            ));
        }
        if self.half_windows.windows(2).any(|w| w[1] > w[0]) {
            return bad(format!(
                "half windows must be nonincreasing: {:?}",
                self.half_windows
            ));
        }
        if let Some(k) = self.half_windows.iter().find(|&&k| k >= self.n / 2) {
            return bad(format!("half window {k} must be < n/2 = {}", self.n / 2));
        }
        Ok(())
    }

    /// Side of the cropped spectrum window of block `b`.
    pub fn window(&self, b: usize) -> usize {
        2 * self.half_windows[b] + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        SpafConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_windows() {
        let mut c = SpafConfig {
            half_windows: vec![8, 12, 8, 8],
            ..SpafConfig::default()
        };
        assert!(c.validate().is_err());
        c.half_windows = vec![32, 12, 8, 8];
        assert!(c.validate().is_err());
        c.half_windows = vec![16, 12, 8];
        assert!(c.validate().is_err());
    }

    #[test]
    fn rejects_odd_grid_and_zero_counts() {
        let c = SpafConfig {
            n: 63,
            ..SpafConfig::default()
        };
        assert!(c.validate().is_err());
        let c = SpafConfig {
            recursion: 0,
            ..SpafConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let c = SpafConfig::default();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<SpafConfig>(&s).unwrap(), c);
        assert!(s.contains("\"mean-phase\""));
    }
}
