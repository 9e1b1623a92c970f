use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "CNN")]
    Cnn,
    #[serde(rename = "DCNN")]
    Dcnn,
    #[serde(rename = "DRCNN")]
    Drcnn,
    Unet,
    #[serde(rename = "SAUnet")]
    SaUnet,
    #[serde(rename = "SAUSnet")]
    SaUsnet,
    #[serde(rename = "BLUnet")]
    BlUnet,
    #[serde(rename = "PUnet")]
    PUnet,
}

impl Family {
    pub const ALL: [Family; 8] = [
        Family::Cnn,
        Family::Dcnn,
        Family::Drcnn,
        Family::Unet,
        Family::SaUnet,
        Family::SaUsnet,
        Family::BlUnet,
        Family::PUnet,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Cnn => "CNN",
            Family::Dcnn => "DCNN",
            Family::Drcnn => "DRCNN",
            Family::Unet => "Unet",
            Family::SaUnet => "SAUnet",
            Family::SaUsnet => "SAUSnet",
            Family::BlUnet => "BLUnet",
            Family::PUnet => "PUnet",
        }
    }

    pub fn is_unet(self) -> bool {
        !matches!(self, Family::Cnn | Family::Dcnn | Family::Drcnn)
    }

    /// Families with a sequence model (attention or BLSTM) at the bottleneck.
    pub fn needs_lambda(self) -> bool {
        matches!(self, Family::SaUnet | Family::SaUsnet | Family::BlUnet)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown model family {s:?}")))
    }
}

pub const ATTENTION_HEADS: usize = 8;
pub const TRANSFORMER_LAYERS: usize = 2;
pub const POLYPHONY_HIDDEN: usize = 64;

fn default_dropout() -> f64 {
    0.2
}

fn default_slope() -> f64 {
    0.3
}

fn default_layers() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub family: Family,
    /// Prefilter / U-net output width, then the three back-end widths.
    pub channels: [usize; 4],
    /// U-net width factor.
    #[serde(default)]
    pub gamma: Option<usize>,
    /// Transformer feed-forward width, or BLSTM hidden units per direction.
    #[serde(default)]
    pub lambda: Option<usize>,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    #[serde(default = "default_slope")]
    pub leaky_slope: f64,
    /// Stacked BLSTM layers (BLUnet only).
    #[serde(default = "default_layers")]
    pub blstm_layers: usize,
}

impl ModelConfig {
    pub fn new(family: Family, channels: [usize; 4], gamma: Option<usize>, lambda: Option<usize>) -> Self {
        Self { family, channels, gamma, lambda, dropout: 0.2, leaky_slope: 0.3, blstm_layers: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(format!("{}: {m}", self.family)));
        if self.channels.contains(&0) {
            return fail(format!("channels must be positive, got {:?}", self.channels));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0) {
            return fail(format!("leaky slope must be non-negative, got {}", self.leaky_slope));
        }
        match (self.family.is_unet(), self.gamma) {
            (true, None | Some(0)) => return fail("gamma must be set to a positive width".into()),
            (false, Some(_)) => return fail("gamma only applies to U-net families".into()),
            _ => {}
        }
        match (self.family.needs_lambda(), self.lambda) {
            (true, None | Some(0)) => return fail("lambda must be set to a positive width".into()),
            (false, Some(_)) => return fail("lambda only applies to attention and BLSTM families".into()),
            _ => {}
        }
        if self.blstm_layers == 0 || (self.family != Family::BlUnet && self.blstm_layers != 1) {
            return fail(format!("blstm_layers must be 1, or positive for BLUnet, got {}", self.blstm_layers));
        }
        Ok(())
    }

    pub fn gamma(&self) -> usize {
        self.gamma.unwrap_or(0)
    }

    pub fn lambda(&self) -> usize {
        self.lambda.unwrap_or(0)
    }

    /// Initial learning rate: 2e-4 for DCNN and DRCNN at sizes M and L, else 1e-3.
    pub fn default_learning_rate(&self) -> f64 {
        let deep = matches!(self.family, Family::Dcnn | Family::Drcnn);
        if deep && self.channels[0] >= 40 {
            2e-4
        } else {
            1e-3
        }
    }
}

/// A named size of a family with its reference parameter count.
#[derive(Clone, Debug, PartialEq)]
pub struct Preset {
    pub family: Family,
    pub size: &'static str,
    pub config: ModelConfig,
    pub reference_params: usize,
}

impl Preset {
    pub fn name(&self) -> String {
        format!("{}:{}", self.family, self.size)
    }
}

type Row = (Family, &'static str, [usize; 4], Option<usize>, Option<usize>, usize, usize);

const PRESETS: [Row; 28] = [
    (Family::Cnn, "XS", [20, 20, 10, 1], None, None, 1, 48_000),
    (Family::Cnn, "S", [100, 100, 50, 10], None, None, 1, 603_000),
    (Family::Cnn, "M", [250, 150, 100, 100], None, None, 1, 1_813_000),
    (Family::Cnn, "L", [280, 180, 120, 100], None, None, 1, 2_467_000),
    (Family::Dcnn, "S", [20, 20, 10, 1], None, None, 1, 408_000),
    (Family::Dcnn, "M", [40, 40, 30, 10], None, None, 1, 1_602_000),
    (Family::Dcnn, "L", [70, 70, 50, 10], None, None, 1, 4_815_000),
    (Family::Drcnn, "S", [20, 20, 10, 1], None, None, 1, 408_000),
    (Family::Drcnn, "M", [40, 40, 30, 10], None, None, 1, 1_602_000),
    (Family::Drcnn, "L", [70, 70, 50, 10], None, None, 1, 4_815_000),
    (Family::Unet, "S", [64, 30, 20, 10], Some(8), None, 1, 882_000),
    (Family::Unet, "M", [128, 100, 80, 50], Some(8), None, 1, 1_655_000),
    (Family::Unet, "L", [128, 150, 100, 80], Some(16), None, 1, 4_552_000),
    (Family::Unet, "XL", [128, 180, 150, 100], Some(32), None, 1, 14_252_000),
    (Family::SaUnet, "M", [64, 30, 20, 10], Some(8), Some(1024), 1, 1_180_000),
    (Family::SaUnet, "L", [128, 80, 50, 30], Some(16), Some(8192), 1, 7_983_000),
    (Family::SaUnet, "XL", [128, 200, 150, 150], Some(16), Some(8192), 1, 10_093_000),
    (Family::SaUnet, "XXL", [128, 200, 150, 150], Some(32), Some(8192), 1, 23_439_000),
    (Family::SaUsnet, "M", [64, 30, 20, 10], Some(8), Some(512), 1, 1_213_000),
    (Family::SaUsnet, "L", [128, 80, 50, 30], Some(16), Some(4096), 1, 8_115_000),
    (Family::SaUsnet, "XL", [128, 200, 150, 150], Some(16), Some(8192), 1, 14_436_000),
    (Family::SaUsnet, "XXL", [128, 200, 150, 150], Some(32), Some(8192), 1, 32_371_000),
    (Family::BlUnet, "M", [64, 30, 20, 10], Some(4), Some(208), 1, 1_343_000),
    (Family::BlUnet, "L", [128, 80, 50, 30], Some(8), Some(416), 2, 9_649_000),
    (Family::BlUnet, "XXL", [128, 200, 150, 150], Some(16), Some(832), 1, 22_376_000),
    (Family::PUnet, "M", [128, 100, 80, 50], Some(8), None, 1, 1_680_000),
    (Family::PUnet, "L", [128, 100, 80, 50], Some(16), None, 1, 4_643_000),
    (Family::PUnet, "XL", [128, 180, 150, 100], Some(32), None, 1, 14_598_000),
];

/// Every size of every family, in table order.
pub fn presets() -> Vec<Preset> {
    PRESETS
        .iter()
        .map(|&(family, size, channels, gamma, lambda, layers, reference_params)| {
            let mut config = ModelConfig::new(family, channels, gamma, lambda);
            config.blstm_layers = layers;
            Preset { family, size, config, reference_params }
        })
        .collect()
}

/// Looks up a preset by `"Family:Size"`, case-insensitively.
pub fn preset(name: &str) -> Result<Preset> {
    let (family, size) = name.split_once(':').ok_or_else(|| Error::Config(format!("expected Family:Size, got {name:?}")))?;
    let family: Family = family.parse()?;
    presets()
        .into_iter()
        .find(|p| p.family == family && p.size.eq_ignore_ascii_case(size))
        .ok_or_else(|| Error::Config(format!("no size {size:?} for {family}")))
}
