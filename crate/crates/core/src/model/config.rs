use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::encoder::{check_window_size, D_SEG};
use crate::numerics::AdaDelta;
use crate::Error;

/// Architecture variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    /// BiGRU + CRF on the raw input representation.
    Baseline,
    /// Plain windowed convolution (no attention) + BiGRU + CRF.
    BaselineCnn,
    /// Convolutional attention + BiGRU + global self-attention + CRF.
    Can,
}

impl Arch {
    pub const ALL: [Arch; 3] = [Arch::Baseline, Arch::BaselineCnn, Arch::Can];

    pub fn has_conv(self) -> bool {
        !matches!(self, Arch::Baseline)
    }

    pub fn has_attention(self) -> bool {
        matches!(self, Arch::Can)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Arch::Baseline => "baseline",
            Arch::BaselineCnn => "baseline_cnn",
            Arch::Can => "can",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arch {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "baseline" => Ok(Arch::Baseline),
            "baseline_cnn" => Ok(Arch::BaselineCnn),
            "can" => Ok(Arch::Can),
            _ => Err(format!("unknown architecture `{s}` (expected baseline, baseline_cnn or can)")),
        }
    }
}

/// Every hyper-parameter of a model and its training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub arch: Arch,
    pub d_ch: usize,
    pub d_seg: usize,
    /// Local attention window; odd.
    pub k: usize,
    /// Convolution width and BiGRU output width; even.
    pub d_h: usize,
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub min_freq: usize,
    pub mask_window_pads: bool,
    pub constrained_decode: bool,
    pub freeze_embeddings: bool,
    /// Explicit label inventory; derived from the training data when empty.
    pub label_set: Vec<String>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            arch: Arch::Can,
            d_ch: 300,
            d_seg: D_SEG,
            k: 5,
            d_h: 300,
            lr: 0.005,
            rho: 0.95,
            eps: 1e-6,
            epochs: 100,
            batch_size: 16,
            seed: 1,
            min_freq: 1,
            mask_window_pads: false,
            constrained_decode: false,
            freeze_embeddings: false,
            label_set: Vec::new(),
        }
    }
}

impl ModelConfig {
    pub fn optimizer(&self) -> AdaDelta {
        AdaDelta { lr: self.lr, rho: self.rho, eps: self.eps }
    }

    pub fn validate(&self) -> Result<(), Error> {
        check_window_size(self.k)?;
        if self.d_h == 0 || self.d_h % 2 != 0 {
            return Err(Error::Config(format!("d_h must be even and positive, got {}", self.d_h)));
        }
        if self.d_ch == 0 {
            return Err(Error::Config("d_ch must be positive".into()));
        }
        if self.d_seg != D_SEG {
            return Err(Error::Config(format!("d_seg must be {D_SEG} (one-hot B/M/E/S), got {}", self.d_seg)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        self.optimizer().validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = ModelConfig::default();
        assert_eq!((c.d_ch, c.d_h, c.k, c.lr), (300, 300, 5, 0.005));
        c.validate().unwrap();
    }

    #[test]
    fn rejects_invalid() {
        let bad = [
            ModelConfig { k: 4, ..Default::default() },
            ModelConfig { d_h: 31, ..Default::default() },
            ModelConfig { lr: 0.0, ..Default::default() },
            ModelConfig { d_ch: 0, ..Default::default() },
            ModelConfig { batch_size: 0, ..Default::default() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::Config(_) | Error::Numerics(_))), "{c:?}");
        }
    }

    #[test]
    fn arch_names() {
        for a in Arch::ALL {
            assert_eq!(a.as_str().parse::<Arch>().unwrap(), a);
        }
        assert_eq!("baseline-cnn".parse::<Arch>().unwrap(), Arch::BaselineCnn);
        assert!("lstm".parse::<Arch>().is_err());
    }
}
