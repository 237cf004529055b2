use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    /// Regularization weight forced to zero.
    NoCov,
    /// A single down/up level.
    NoHierarchical,
    /// Latent queries are kept at their initial values.
    FrozenQuery,
    /// The decoder is replaced by one learned channel-restoring map.
    NoUpsampling,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::NoCov,
        Variant::NoHierarchical,
        Variant::FrozenQuery,
        Variant::NoUpsampling,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoCov => "no_cov",
            Variant::NoHierarchical => "no_hierarchical",
            Variant::FrozenQuery => "frozen_query",
            Variant::NoUpsampling => "no_upsampling",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == key)
            .ok_or_else(|| Error::Parameter(format!("unknown variant `{s}`")))
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UCastConfig {
    pub channels: usize,
    pub lookback: usize,
    pub horizon: usize,
    pub d_model: usize,
    pub layers: usize,
    pub ratio: usize,
    pub heads: usize,
    pub alpha: f64,
    pub eps_cov: f64,
    pub variant: Variant,
    pub seed: u64,
}

impl UCastConfig {
    /// Default architecture: `d = 512`, `L = 2`, `r = 16`, one head,
    /// `α = 0.01`, `ε = 1e-4`.
    pub fn new(channels: usize, lookback: usize, horizon: usize) -> Self {
        Self {
            channels,
            lookback,
            horizon,
            d_model: 512,
            layers: 2,
            ratio: 16,
            heads: 1,
            alpha: 0.01,
            eps_cov: 1e-4,
            variant: Variant::Full,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Parameter(m));
        if self.channels == 0 || self.lookback == 0 || self.horizon == 0 || self.d_model == 0 {
            return fail("channels, lookback, horizon and d_model must be positive".into());
        }
        if self.layers == 0 {
            return fail("layers must be at least 1".into());
        }
        if self.ratio < 2 {
            return fail(format!("reduction ratio must exceed 1, got {}", self.ratio));
        }
        if self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return fail(format!(
                "d_model {} not divisible by {} heads",
                self.d_model, self.heads
            ));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return fail(format!("alpha must be finite and >= 0, got {}", self.alpha));
        }
        if self.eps_cov.is_nan() || self.eps_cov <= 0.0 {
            return fail(format!("eps_cov must be > 0, got {}", self.eps_cov));
        }
        Ok(())
    }

    pub fn effective_layers(&self) -> usize {
        match self.variant {
            Variant::NoHierarchical => 1,
            _ => self.layers,
        }
    }

    pub fn effective_alpha(&self) -> f64 {
        match self.variant {
            Variant::NoCov => 0.0,
            _ => self.alpha,
        }
    }

    /// Latent channel counts of the encoder levels in use.
    pub fn ladder(&self) -> Vec<usize> {
        ladder_sizes(self.channels, self.ratio, self.effective_layers())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }
}

/// `C_ℓ = max(1, ⌊C / r^ℓ⌋)` and whether any level was clamped.
pub fn ladder_sizes_checked(channels: usize, ratio: usize, layers: usize) -> (Vec<usize>, bool) {
    let mut sizes = Vec::with_capacity(layers);
    let mut clamped = false;
    let mut denom: u128 = 1;
    for _ in 0..layers {
        denom = denom.saturating_mul(ratio as u128);
        let c = (channels as u128 / denom) as usize;
        clamped |= c == 0;
        sizes.push(c.max(1));
    }
    (sizes, clamped)
}

/// As [`ladder_sizes_checked`], logging a warning when clamping occurred.
pub fn ladder_sizes(channels: usize, ratio: usize, layers: usize) -> Vec<usize> {
    let (sizes, clamped) = ladder_sizes_checked(channels, ratio, layers);
    if clamped {
        log::warn!("ladder for C={channels}, r={ratio}, L={layers} clamped to {sizes:?}");
    }
    sizes
}

/// Per-dataset training defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetDefaults {
    pub lr: f64,
    /// Look-back length as a multiple of the prediction length.
    pub lookback_multiple: usize,
    pub alpha: f64,
}

const TABLE: &[(&str, f64, usize, f64, usize)] = &[
    // name, lr, T/S, alpha, prediction length
    ("atec", 0.002, 3, 0.001, 336),
    ("air_quality", 0.0005, 4, 1.0, 28),
    ("temp", 0.0005, 3, 0.01, 168),
    ("wind", 0.001, 4, 0.001, 168),
    ("mobility", 0.002, 4, 10.0, 7),
    ("traffic_ca", 0.001, 4, 1.0, 168),
    ("traffic_gba", 0.001, 4, 0.01, 168),
    ("traffic_gla", 0.001, 4, 1.0, 168),
    ("m5", 0.0005, 4, 0.1, 7),
    ("measles", 0.0005, 3, 0.001, 7),
    ("neurolib", 0.002, 4, 0.001, 336),
    ("solar", 0.0005, 4, 0.001, 336),
    ("sirs", 0.0005, 4, 1.0, 7),
    ("meters", 0.0005, 4, 0.001, 336),
    ("sp500", 0.001, 3, 1.0, 7),
    ("wiki_20k", 0.0005, 4, 10.0, 7),
];

fn lookup(name: &str) -> Option<&'static (&'static str, f64, usize, f64, usize)> {
    let key: String = name
        .trim()
        .to_ascii_lowercase()
        .chars()
        .map(|c| if c == '-' || c == ' ' { '_' } else { c })
        .collect();
    let key = if key == "meter" { "meters".to_string() } else { key };
    TABLE.iter().find(|row| row.0 == key)
}

/// Learning rate, look-back multiple and α for a known dataset.
pub fn dataset_defaults(name: &str) -> Option<DatasetDefaults> {
    lookup(name).map(|&(_, lr, lookback_multiple, alpha, _)| DatasetDefaults {
        lr,
        lookback_multiple,
        alpha,
    })
}

pub fn dataset_prediction_length(name: &str) -> Option<usize> {
    lookup(name).map(|row| row.4)
}
