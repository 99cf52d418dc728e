use crate::error::{Error, Result};
use crate::spectral::bin_count;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Maximum sequence length N (items per input window).
    pub max_len: usize,
    /// Embedding size d.
    pub hidden: usize,
    /// Number of stacked blocks L.
    pub layers: usize,
    /// Number of heads / filters k.
    pub heads: usize,
    /// Fusion weight between the spectral-filter and the wavelet branch.
    pub alpha: f64,
    pub dropout: f64,
    /// Number of item ids including the padding id 0.
    pub vocab_size: usize,
    pub layer_norm_eps: f64,
    /// Exclude padding rows from the per-sequence context mean.
    pub context_mask: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            max_len: 50,
            hidden: 64,
            layers: 2,
            heads: 2,
            alpha: 0.3,
            dropout: 0.5,
            vocab_size: 2,
            layer_norm_eps: 1e-12,
            context_mask: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.max_len < 2 || self.max_len % 2 != 0 {
            return fail(format!("max_len must be even and at least 2, got {}", self.max_len));
        }
        if self.hidden == 0 || self.heads == 0 {
            return fail("hidden and heads must be positive".into());
        }
        if self.hidden % self.heads != 0 {
            return fail(format!(
                "hidden ({}) must be divisible by heads ({})",
                self.hidden, self.heads
            ));
        }
        if self.layers == 0 {
            return fail("layers must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return fail(format!("alpha must be in [0, 1], got {}", self.alpha));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if self.vocab_size < 2 {
            return fail(format!("vocab_size must be at least 2, got {}", self.vocab_size));
        }
        if !(self.layer_norm_eps >= 0.0 && self.layer_norm_eps.is_finite()) {
            return fail("layer_norm_eps must be finite and non-negative".into());
        }
        Ok(())
    }

    /// Frequency bins per head, `N/2 + 1`.
    pub fn bins(&self) -> usize {
        bin_count(self.max_len)
    }

    /// Level-1 wavelet coefficients per head, `N/2`.
    pub fn half_len(&self) -> usize {
        self.max_len / 2
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    pub fn wavelet_level(&self) -> usize {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bin_count_for_default_length() {
        let c = ModelConfig::default();
        assert_eq!(c.bins(), 26);
        assert_eq!(c.half_len(), 25);
        assert_eq!(c.head_dim(), 32);
    }

    #[test]
    fn validation_rules() {
        let ok = ModelConfig {
            vocab_size: 10,
            ..Default::default()
        };
        ok.validate().unwrap();
        for bad in [
            ModelConfig { max_len: 7, ..ok.clone() },
            ModelConfig { hidden: 10, heads: 4, ..ok.clone() },
            ModelConfig { alpha: 1.5, ..ok.clone() },
            ModelConfig { dropout: 1.0, ..ok.clone() },
            ModelConfig { vocab_size: 1, ..ok.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))), "{bad:?}");
        }
        ModelConfig { hidden: 1, heads: 1, ..ok }.validate().unwrap();
    }
}
