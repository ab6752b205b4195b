//! Hyperparameters, the flat `key = value` config format, and ablation
//! variants.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::augment::AugmentSides;
use crate::error::{LagclError, Result};
use crate::ssl::{ClDenominator, KtScope};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub dim: usize,
    pub layers: usize,
    /// Head/tail degree threshold.
    pub k: usize,
    /// Smoothness of the dropped-graph weights.
    pub delta: f64,
    /// Contrastive noise radius.
    pub eps: f64,
    /// InfoNCE temperature.
    pub tau: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    pub learning_rate: f64,
    pub disc_learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub kt_scope: KtScope,
    pub augment_sides: AugmentSides,
    pub cl_denominator: ClDenominator,
    pub use_kt: bool,
    pub use_auto_drop: bool,
    pub use_adversarial: bool,
    pub use_cl: bool,
    pub disc_steps: usize,
    pub eval_k: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            dim: 64,
            layers: 2,
            k: 20,
            delta: 1.0,
            eps: 0.1,
            tau: 0.2,
            lambda1: 1e-2,
            lambda2: 1e-3,
            lambda3: 0.1,
            lambda4: 1e-4,
            learning_rate: 1e-3,
            disc_learning_rate: 1e-3,
            batch_size: 2048,
            epochs: 100,
            patience: 10,
            seed: 0,
            kt_scope: KtScope::TailOnly,
            augment_sides: AugmentSides::Both,
            cl_denominator: ClDenominator::Batch,
            use_kt: true,
            use_auto_drop: true,
            use_adversarial: true,
            use_cl: true,
            disc_steps: 1,
            eval_k: 20,
        }
    }
}

fn parse_value<V: FromStr>(key: &str, raw: &str) -> Result<V>
where
    V::Err: std::fmt::Display,
{
    raw.parse::<V>()
        .map_err(|e| LagclError::config(key, format!("cannot parse `{raw}`: {e}")))
}

impl Hyperparams {
    /// Apply one `key = value` assignment.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let raw = raw.trim();
        match key {
            "dim" | "d" => self.dim = parse_value(key, raw)?,
            "layers" | "L" => self.layers = parse_value(key, raw)?,
            "k" => self.k = parse_value(key, raw)?,
            "delta" => self.delta = parse_value(key, raw)?,
            "eps" => self.eps = parse_value(key, raw)?,
            "tau" => self.tau = parse_value(key, raw)?,
            "lambda1" => self.lambda1 = parse_value(key, raw)?,
            "lambda2" => self.lambda2 = parse_value(key, raw)?,
            "lambda3" => self.lambda3 = parse_value(key, raw)?,
            "lambda4" => self.lambda4 = parse_value(key, raw)?,
            "learning_rate" => self.learning_rate = parse_value(key, raw)?,
            "disc_learning_rate" => self.disc_learning_rate = parse_value(key, raw)?,
            "batch_size" => self.batch_size = parse_value(key, raw)?,
            "epochs" => self.epochs = parse_value(key, raw)?,
            "patience" => self.patience = parse_value(key, raw)?,
            "seed" => self.seed = parse_value(key, raw)?,
            "kt_scope" => self.kt_scope = parse_value(key, raw)?,
            "augment_sides" => self.augment_sides = parse_value(key, raw)?,
            "cl_denominator" => self.cl_denominator = parse_value(key, raw)?,
            "use_kt" => self.use_kt = parse_value(key, raw)?,
            "use_auto_drop" => self.use_auto_drop = parse_value(key, raw)?,
            "use_adversarial" => self.use_adversarial = parse_value(key, raw)?,
            "use_cl" => self.use_cl = parse_value(key, raw)?,
            "disc_steps" => self.disc_steps = parse_value(key, raw)?,
            "eval_k" => self.eval_k = parse_value(key, raw)?,
            other => return Err(LagclError::config(other, "unknown configuration key")),
        }
        Ok(())
    }

    /// Parse flat `key = value` text over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut hp = Hyperparams::default();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| LagclError::config(line, "expected `key = value`"))?;
            hp.set(key.trim(), value)?;
        }
        hp.validate()?;
        Ok(hp)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| LagclError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let positive_int = [
            ("dim", self.dim),
            ("layers", self.layers),
            ("k", self.k),
            ("batch_size", self.batch_size),
            ("disc_steps", self.disc_steps),
            ("eval_k", self.eval_k),
        ];
        for (key, v) in positive_int {
            if v < 1 {
                return Err(LagclError::config(key, "must be at least 1"));
            }
        }
        let positive = [
            ("delta", self.delta),
            ("eps", self.eps),
            ("tau", self.tau),
            ("learning_rate", self.learning_rate),
            ("disc_learning_rate", self.disc_learning_rate),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(LagclError::config(key, "must be positive and finite"));
            }
        }
        let nonneg = [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("lambda4", self.lambda4),
        ];
        for (key, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(LagclError::config(key, "must be non-negative and finite"));
            }
        }
        Ok(())
    }

    /// Serialize in the same flat format `parse` accepts.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let b = |v: bool| if v { "true" } else { "false" };
        let entries: Vec<(&str, String)> = vec![
            ("dim", self.dim.to_string()),
            ("layers", self.layers.to_string()),
            ("k", self.k.to_string()),
            ("delta", self.delta.to_string()),
            ("eps", self.eps.to_string()),
            ("tau", self.tau.to_string()),
            ("lambda1", self.lambda1.to_string()),
            ("lambda2", self.lambda2.to_string()),
            ("lambda3", self.lambda3.to_string()),
            ("lambda4", self.lambda4.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("disc_learning_rate", self.disc_learning_rate.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("patience", self.patience.to_string()),
            ("seed", self.seed.to_string()),
            ("kt_scope", self.kt_scope.as_str().into()),
            ("augment_sides", self.augment_sides.as_str().into()),
            ("cl_denominator", self.cl_denominator.as_str().into()),
            ("use_kt", b(self.use_kt).into()),
            ("use_auto_drop", b(self.use_auto_drop).into()),
            ("use_adversarial", b(self.use_adversarial).into()),
            ("use_cl", b(self.use_cl).into()),
            ("disc_steps", self.disc_steps.to_string()),
            ("eval_k", self.eval_k.to_string()),
        ];
        for (k, v) in entries {
            writeln!(s, "{k} = {v}").unwrap();
        }
        s
    }

    /// Knowledge transfer participates in the forward pass.
    pub fn kt_active(&self) -> bool {
        self.use_kt
    }

    pub fn trans_active(&self) -> bool {
        self.use_kt && self.lambda1 > 0.0
    }

    pub fn adversarial_active(&self) -> bool {
        self.use_adversarial && self.lambda2 > 0.0
    }

    pub fn cl_active(&self) -> bool {
        self.use_cl && self.lambda3 > 0.0
    }

    /// The dropped graph is needed by the translation or adversarial terms.
    pub fn dropped_active(&self) -> bool {
        self.trans_active() || self.adversarial_active()
    }
}

/// Ablation variants: the full model, one module removed at a time, and the
/// two recovered baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "full")]
    Full,
    #[serde(rename = "no-kt")]
    NoKt,
    #[serde(rename = "no-ad")]
    NoAd,
    #[serde(rename = "no-gan")]
    NoGan,
    #[serde(rename = "no-cl")]
    NoCl,
    #[serde(rename = "lightgcn")]
    LightGcn,
    #[serde(rename = "noise-only")]
    NoiseOnly,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Full,
        Variant::NoKt,
        Variant::NoAd,
        Variant::NoGan,
        Variant::NoCl,
        Variant::LightGcn,
        Variant::NoiseOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoKt => "no-kt",
            Variant::NoAd => "no-ad",
            Variant::NoGan => "no-gan",
            Variant::NoCl => "no-cl",
            Variant::LightGcn => "lightgcn",
            Variant::NoiseOnly => "noise-only",
        }
    }

    /// Hyperparameters with this variant's module switches applied.
    pub fn apply(self, base: &Hyperparams) -> Hyperparams {
        let mut hp = base.clone();
        match self {
            Variant::Full => {}
            Variant::NoKt => hp.use_kt = false,
            Variant::NoAd => hp.use_auto_drop = false,
            Variant::NoGan => hp.use_adversarial = false,
            Variant::NoCl => hp.use_cl = false,
            Variant::LightGcn => {
                hp.use_kt = false;
                hp.use_auto_drop = false;
                hp.use_adversarial = false;
                hp.use_cl = false;
            }
            Variant::NoiseOnly => {
                hp.use_kt = false;
                hp.use_auto_drop = false;
                hp.use_adversarial = false;
            }
        }
        hp
    }
}

impl FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Variant::ALL
            .iter()
            .copied()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown variant `{s}`"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_text() {
        let mut hp = Hyperparams::default();
        hp.k = 7;
        hp.cl_denominator = ClDenominator::All;
        hp.use_kt = false;
        assert_eq!(Hyperparams::parse(&hp.to_config_string()).unwrap(), hp);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = Hyperparams::parse("dim = 8\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn bad_values_are_named() {
        assert!(Hyperparams::parse("tau = -1").unwrap_err().to_string().contains("tau"));
        assert!(Hyperparams::parse("dim = x").unwrap_err().to_string().contains("dim"));
        assert!(Hyperparams::parse("kt_scope = some").unwrap_err().to_string().contains("kt_scope"));
    }

    #[test]
    fn lightgcn_switches_everything_off() {
        let hp = Variant::LightGcn.apply(&Hyperparams::default());
        assert!(!hp.kt_active() && !hp.dropped_active() && !hp.cl_active());
        let hp = Variant::NoiseOnly.apply(&Hyperparams::default());
        assert!(hp.cl_active() && !hp.dropped_active());
    }
}
