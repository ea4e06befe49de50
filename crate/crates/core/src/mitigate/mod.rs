//! Training-time bias mitigation: inverse-frequency sampling, GroupDRO
//! reweighting and an entropy-maximizing demographic adversary.

mod adversary;
mod sampler;
mod weights;

pub use adversary::{adv_training_step, adversary_entropy, AdvDiagnostics, Adversary, AdversaryObjective};
pub use sampler::weighted_sampler;
pub use weights::{dro_group_weights, dro_update, group_counts, if_weights, per_sample_weights, GroupState};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MitigationKind {
    #[serde(rename = "none")]
    Unbalanced,
    #[serde(rename = "if")]
    InverseFrequency,
    #[serde(rename = "dro")]
    GroupDro,
    #[serde(rename = "adv")]
    Adversarial,
}

impl MitigationKind {
    pub const ALL: [MitigationKind; 4] = [
        MitigationKind::Unbalanced,
        MitigationKind::InverseFrequency,
        MitigationKind::GroupDro,
        MitigationKind::Adversarial,
    ];

    pub fn code(self) -> &'static str {
        match self {
            MitigationKind::Unbalanced => "none",
            MitigationKind::InverseFrequency => "if",
            MitigationKind::GroupDro => "dro",
            MitigationKind::Adversarial => "adv",
        }
    }

    /// Display name used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            MitigationKind::Unbalanced => "Unbalanced",
            MitigationKind::InverseFrequency => "IF",
            MitigationKind::GroupDro => "GroupDRO",
            MitigationKind::Adversarial => "ADV",
        }
    }

    pub fn is_group_aware(self) -> bool {
        self != MitigationKind::Unbalanced
    }
}

impl fmt::Display for MitigationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for MitigationKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        MitigationKind::ALL
            .into_iter()
            .find(|k| k.code().eq_ignore_ascii_case(s) || k.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown mitigation {s:?} (none|if|dro|adv)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdversaryConfig {
    pub hidden_dim: usize,
    pub lr: f64,
    pub steps_per_batch: usize,
}

impl Default for AdversaryConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 16,
            lr: 1e-3,
            steps_per_batch: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MitigationConfig {
    pub kind: MitigationKind,
    /// GroupDRO reweighting strength.
    pub eta: f64,
    /// Weight of the adversarial entropy term.
    pub lambda: f64,
    pub adversary: AdversaryConfig,
    /// EMA momentum of the per-group losses tracked by GroupDRO.
    pub group_loss_momentum: f64,
}

impl Default for MitigationConfig {
    fn default() -> Self {
        Self {
            kind: MitigationKind::Unbalanced,
            eta: 1.0,
            lambda: 0.1,
            adversary: AdversaryConfig::default(),
            group_loss_momentum: 0.9,
        }
    }
}

impl MitigationConfig {
    pub fn unbalanced() -> Self {
        Self::default()
    }

    pub fn inverse_frequency() -> Self {
        Self::with_kind(MitigationKind::InverseFrequency)
    }

    pub fn dro(eta: f64) -> Self {
        Self {
            eta,
            ..Self::with_kind(MitigationKind::GroupDro)
        }
    }

    pub fn adv(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::with_kind(MitigationKind::Adversarial)
        }
    }

    pub fn with_kind(kind: MitigationKind) -> Self {
        Self { kind, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid(format!("eta must be a nonnegative real, got {}", self.eta)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be a nonnegative real, got {}", self.lambda)));
        }
        if !(0.0..1.0).contains(&self.group_loss_momentum) {
            return Err(Error::invalid("group_loss_momentum must lie in [0, 1)"));
        }
        if self.kind == MitigationKind::Adversarial {
            let a = &self.adversary;
            if a.hidden_dim == 0 || !(a.lr > 0.0 && a.lr.is_finite()) {
                return Err(Error::invalid("adversary needs hidden_dim >= 1 and a positive lr"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_codes_round_trip() {
        for k in MitigationKind::ALL {
            assert_eq!(k.code().parse::<MitigationKind>().unwrap(), k);
            assert_eq!(k.label().parse::<MitigationKind>().unwrap(), k);
        }
        assert!("fair".parse::<MitigationKind>().is_err());
    }

    #[test]
    fn config_surface_uses_short_codes() {
        let c = MitigationConfig::dro(2.0);
        let json = serde_json::to_value(&c).unwrap();
        assert_eq!(json["kind"], "dro");
        let parsed: MitigationConfig = toml::from_str("kind = \"adv\"\nlambda = 0.5\n[adversary]\nhidden_dim = 8\n").unwrap();
        assert_eq!(parsed.kind, MitigationKind::Adversarial);
        assert_eq!(parsed.lambda, 0.5);
        assert_eq!(parsed.adversary.hidden_dim, 8);
        assert_eq!(parsed.adversary.lr, 1e-3);
    }

    #[test]
    fn negative_strengths_rejected() {
        assert!(MitigationConfig::dro(-1.0).validate().is_err());
        assert!(MitigationConfig::adv(-0.1).validate().is_err());
        assert!(MitigationConfig::adv(0.0).validate().is_ok());
    }
}
