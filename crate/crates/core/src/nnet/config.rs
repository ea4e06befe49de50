use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Samples per patch token.
pub const PATCH_LEN: usize = 40;

/// Toy stand-ins for a model-size sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeClass {
    Xs,
    S,
    M,
    L,
}

impl SizeClass {
    pub const ALL: [SizeClass; 4] = [SizeClass::Xs, SizeClass::S, SizeClass::M, SizeClass::L];

    /// (d_model, n_layers, n_heads, ffn_dim)
    pub fn dims(self) -> (usize, usize, usize, usize) {
        match self {
            SizeClass::Xs => (16, 1, 2, 64),
            SizeClass::S => (32, 2, 4, 128),
            SizeClass::M => (64, 3, 4, 256),
            SizeClass::L => (128, 4, 8, 512),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SizeClass::Xs => "xs",
            SizeClass::S => "s",
            SizeClass::M => "m",
            SizeClass::L => "l",
        }
    }
}

impl fmt::Display for SizeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SizeClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SizeClass::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown size class {s:?} (xs|s|m|l)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub patch_len: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ffn_dim: usize,
    pub context_patches: usize,
    pub size_class: SizeClass,
    /// Weight of the logit-Laplace reconstruction term.
    pub recon_weight: f64,
    pub hr_center: f64,
    pub hr_scale: f64,
}

impl NetConfig {
    pub fn for_size(size_class: SizeClass, context_patches: usize) -> Self {
        let (d_model, n_layers, n_heads, ffn_dim) = size_class.dims();
        Self {
            patch_len: PATCH_LEN,
            d_model,
            n_layers,
            n_heads,
            ffn_dim,
            context_patches,
            size_class,
            recon_weight: 0.1,
            hr_center: 80.0,
            hr_scale: 40.0,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn signal_len(&self) -> usize {
        self.patch_len * self.context_patches
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_len != PATCH_LEN {
            return Err(Error::invalid(format!("patch_len is fixed at {PATCH_LEN}")));
        }
        let dims = [self.d_model, self.n_layers, self.n_heads, self.ffn_dim, self.context_patches];
        if dims.contains(&0) {
            return Err(Error::invalid("all network dimensions must be >= 1"));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::invalid(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.head_dim() % 2 != 0 {
            return Err(Error::invalid("rotary encoding needs an even head dimension"));
        }
        if !(self.recon_weight >= 0.0 && self.recon_weight.is_finite()) {
            return Err(Error::invalid("recon_weight must be a nonnegative real"));
        }
        if !(self.hr_scale > 0.0 && self.hr_center.is_finite()) {
            return Err(Error::invalid("hr_scale must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_classes_are_valid() {
        for s in SizeClass::ALL {
            let c = NetConfig::for_size(s, 4);
            c.validate().unwrap();
            assert_eq!(c.signal_len(), 160);
            assert_eq!(s.name().parse::<SizeClass>().unwrap(), s);
        }
        assert!("xl".parse::<SizeClass>().is_err());
    }

    #[test]
    fn rejects_bad_dims() {
        let mut c = NetConfig::for_size(SizeClass::Xs, 4);
        c.n_heads = 3;
        assert!(c.validate().is_err());
        let mut c = NetConfig::for_size(SizeClass::Xs, 4);
        c.d_model = 6;
        c.n_heads = 2;
        assert!(c.validate().is_err(), "odd head dim");
        let mut c = NetConfig::for_size(SizeClass::Xs, 4);
        c.context_patches = 0;
        assert!(c.validate().is_err());
    }
}
