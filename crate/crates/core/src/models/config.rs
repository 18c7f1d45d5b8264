use serde::{Deserialize, Serialize};

use crate::error::{config, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Cnn,
    Resnet,
    Vit,
    Deepvit,
    Xcit,
    Crossvit,
    Parallelvit,
    TranscrowdG,
    TranscrowdT,
}

impl Family {
    pub const ALL: [Family; 9] = [
        Family::Cnn,
        Family::Resnet,
        Family::Vit,
        Family::Deepvit,
        Family::Xcit,
        Family::Crossvit,
        Family::Parallelvit,
        Family::TranscrowdG,
        Family::TranscrowdT,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Cnn => "cnn",
            Family::Resnet => "resnet",
            Family::Vit => "vit",
            Family::Deepvit => "deepvit",
            Family::Xcit => "xcit",
            Family::Crossvit => "crossvit",
            Family::Parallelvit => "parallelvit",
            Family::TranscrowdG => "transcrowd-g",
            Family::TranscrowdT => "transcrowd-t",
        }
    }

    pub fn is_transformer(self) -> bool {
        !matches!(self, Family::Cnn | Family::Resnet)
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL.into_iter().find(|f| f.name() == s).ok_or_else(|| config(format!("unknown family {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadType {
    /// Flatten (CNN) or globally pool (ResNet), then one linear layer.
    Fc,
    /// Mean over all output tokens, then the regressor.
    Gap,
    /// A learnable token prepended to the sequence; its output embedding is
    /// regressed.
    Token,
}

/// A value given once for single-branch models, or per branch
/// (`[small, large]`) for dual-branch ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerBranch {
    One(usize),
    Pair([usize; 2]),
}

impl PerBranch {
    pub fn single(self, what: &str) -> Result<usize> {
        match self {
            PerBranch::One(v) => Ok(v),
            PerBranch::Pair(_) => Err(config(format!("{what} must be a single value for this family"))),
        }
    }

    pub fn pair(self, what: &str) -> Result<[usize; 2]> {
        match self {
            PerBranch::Pair(p) => Ok(p),
            PerBranch::One(_) => Err(config(format!("{what} must be a [small, large] pair for crossvit"))),
        }
    }

    fn values(self) -> Vec<usize> {
        match self {
            PerBranch::One(v) => vec![v],
            PerBranch::Pair(p) => p.to_vec(),
        }
    }
}

fn default_dim_head() -> usize {
    64
}

fn default_input_size() -> usize {
    crate::adapters::INPUT_SIZE
}

/// Declarative description of one backbone plus its regression head.
///
/// Family-specific readings of the shared fields:
/// * `cnn`: `depth` conv stages, `mlp_dim` channels after the last stage.
/// * `resnet`: `dim` stem width, `mlp_dim` feature width, `depths` blocks per
///   stage (their sum is `depth`).
/// * `crossvit`: `dim`, `mlp_dim` and `patch_size` are `[small, large]`,
///   `depths` the encoder blocks of each branch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneConfig {
    pub family: Family,
    pub depth: usize,
    #[serde(default)]
    pub heads: usize,
    #[serde(default = "PerBranch::zero")]
    pub dim: PerBranch,
    pub mlp_dim: PerBranch,
    #[serde(default = "PerBranch::zero")]
    pub patch_size: PerBranch,
    #[serde(default = "default_dim_head")]
    pub dim_head: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depths: Option<Vec<usize>>,
    pub head_type: HeadType,
    /// Hidden width of a two-layer regressor; absent means a single linear layer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_hidden: Option<usize>,
    #[serde(default = "default_input_size")]
    pub input_size: usize,
}

impl PerBranch {
    fn zero() -> Self {
        PerBranch::One(0)
    }
}

/// Named variants of the benchmark.
pub const PRESET_NAMES: [&str; 12] = [
    "cnn-base",
    "cnn-medium",
    "cnn-deep",
    "resnet50",
    "resnet101",
    "vit-vanilla",
    "xcit-s24",
    "crossvit-ti",
    "parallelvit-ti",
    "deepvit-s",
    "transcrowd-g",
    "transcrowd-t",
];

impl BackboneConfig {
    fn base(
        family: Family,
        depth: usize,
        heads: usize,
        dim: usize,
        mlp_dim: usize,
        patch: usize,
        head: HeadType,
    ) -> Self {
        Self {
            family,
            depth,
            heads,
            dim: PerBranch::One(dim),
            mlp_dim: PerBranch::One(mlp_dim),
            patch_size: PerBranch::One(patch),
            dim_head: 64,
            depths: None,
            head_type: head,
            head_hidden: None,
            input_size: default_input_size(),
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        use Family::*;
        use HeadType::*;
        let c = match name {
            "cnn-base" => Self::base(Cnn, 1, 0, 0, 16, 0, Fc),
            "cnn-medium" => Self::base(Cnn, 2, 0, 0, 64, 0, Fc),
            "cnn-deep" => Self::base(Cnn, 3, 0, 0, 256, 0, Fc),
            "resnet50" => Self { depths: Some(vec![3, 4, 6, 3]), ..Self::base(Resnet, 16, 0, 64, 2048, 0, Fc) },
            "resnet101" => Self { depths: Some(vec![3, 4, 23, 3]), ..Self::base(Resnet, 33, 0, 64, 2048, 0, Fc) },
            "vit-vanilla" => Self::base(Vit, 12, 12, 768, 3072, 32, Token),
            "xcit-s24" => Self::base(Xcit, 24, 8, 384, 1536, 16, Token),
            "crossvit-ti" => Self {
                dim: PerBranch::Pair([96, 192]),
                mlp_dim: PerBranch::Pair([384, 768]),
                patch_size: PerBranch::Pair([16, 32]),
                depths: Some(vec![4, 3]),
                ..Self::base(Crossvit, 4, 3, 0, 0, 0, Token)
            },
            "parallelvit-ti" => Self::base(Parallelvit, 12, 3, 192, 192, 16, Token),
            "deepvit-s" => Self::base(Deepvit, 16, 12, 396, 1188, 16, Token),
            "transcrowd-g" => Self { head_hidden: Some(4608), ..Self::base(TranscrowdG, 12, 12, 768, 3072, 16, Gap) },
            "transcrowd-t" => Self::base(TranscrowdT, 12, 12, 768, 3072, 16, Token),
            _ => {
                return Err(config(format!("unknown preset {name:?}; known: {}", PRESET_NAMES.join(", "))));
            }
        };
        Ok(c)
    }

    /// A small member of `family` (depth 2, width 32, 64×64 input) for tests
    /// and desk-scale experiments.
    pub fn toy(family: Family) -> Self {
        use Family::*;
        use HeadType::*;
        let t = |f, head| Self { dim_head: 16, input_size: 64, ..Self::base(f, 2, 2, 32, 64, 8, head) };
        match family {
            Cnn => Self { input_size: 64, ..Self::base(Cnn, 2, 0, 0, 32, 0, Fc) },
            Resnet => Self { depths: Some(vec![1, 1]), input_size: 64, ..Self::base(Resnet, 2, 0, 32, 256, 0, Fc) },
            Crossvit => Self {
                dim: PerBranch::Pair([32, 48]),
                mlp_dim: PerBranch::Pair([64, 96]),
                patch_size: PerBranch::Pair([8, 16]),
                depths: Some(vec![2, 1]),
                ..t(Crossvit, Token)
            },
            TranscrowdG => Self { head_hidden: Some(64), ..t(TranscrowdG, Gap) },
            f => t(f, Token),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fam = self.family;
        if self.depth == 0 {
            return Err(config("depth must be positive"));
        }
        if self.input_size == 0 {
            return Err(config("input_size must be positive"));
        }
        if self.mlp_dim.values().contains(&0) {
            return Err(config("mlp_dim must be positive"));
        }
        if self.head_hidden == Some(0) {
            return Err(config("head_hidden must be positive when given"));
        }
        match (fam.is_transformer(), self.head_type) {
            (false, HeadType::Fc) => {}
            (false, h) => return Err(config(format!("{h:?} head needs a transformer family, not {fam}"))),
            (true, HeadType::Fc) => {
                return Err(config(format!("{fam} regresses from tokens; use a gap or token head")))
            }
            (true, _) => {}
        }
        if fam == Family::Crossvit && self.head_type != HeadType::Token {
            return Err(config("crossvit regresses from its class tokens; use a token head"));
        }
        if fam == Family::TranscrowdG && self.head_type != HeadType::Gap {
            return Err(config("transcrowd-g uses a gap head"));
        }
        if fam == Family::TranscrowdT && self.head_type != HeadType::Token {
            return Err(config("transcrowd-t uses a token head"));
        }
        match fam {
            Family::Cnn => {
                let out = self.mlp_dim.single("mlp_dim")?;
                let div = 1usize << (2 * (self.depth - 1));
                if out % div != 0 {
                    return Err(config(format!("cnn output channels {out} not divisible by 4^(depth-1) = {div}")));
                }
                if !self.input_size.is_multiple_of(1 << self.depth) {
                    return Err(config(format!("input_size must be divisible by 2^{}", self.depth)));
                }
            }
            Family::Resnet => {
                let stem = self.dim.single("dim")?;
                let depths = self.depths.as_deref().ok_or_else(|| config("resnet needs per-stage depths"))?;
                if depths.is_empty() || depths.contains(&0) || depths.iter().sum::<usize>() != self.depth {
                    return Err(config(format!("stage depths {depths:?} must be positive and sum to {}", self.depth)));
                }
                let out = stem * (1 << (depths.len() - 1)) * 4;
                if stem == 0 || self.mlp_dim.single("mlp_dim")? != out {
                    return Err(config(format!(
                        "resnet with stem {stem} and {} stages emits {out} features",
                        depths.len()
                    )));
                }
            }
            Family::Crossvit => {
                let dims = self.dim.pair("dim")?;
                self.mlp_dim.pair("mlp_dim")?;
                let patches = self.patch_size.pair("patch_size")?;
                let depths = self.depths.as_deref().ok_or_else(|| config("crossvit needs per-branch depths"))?;
                if depths.len() != 2 || depths.contains(&0) {
                    return Err(config("crossvit depths must be two positive block counts"));
                }
                self.check_attention(&dims)?;
                for p in patches {
                    self.check_patch(p)?;
                }
            }
            _ => {
                let dim = self.dim.single("dim")?;
                self.mlp_dim.single("mlp_dim")?;
                self.check_attention(&[dim])?;
                self.check_patch(self.patch_size.single("patch_size")?)?;
            }
        }
        Ok(())
    }

    fn check_attention(&self, dims: &[usize]) -> Result<()> {
        if self.heads == 0 || self.dim_head == 0 {
            return Err(config("heads and dim_head must be positive"));
        }
        if let Some(d) = dims.iter().find(|&&d| d == 0 || d % self.heads != 0) {
            return Err(config(format!("dim {d} must be a positive multiple of {} heads", self.heads)));
        }
        Ok(())
    }

    fn check_patch(&self, p: usize) -> Result<()> {
        if p == 0 || !self.input_size.is_multiple_of(p) {
            return Err(config(format!("input_size {} is not divisible by patch size {p}", self.input_size)));
        }
        Ok(())
    }

    /// Width of the attention projections.
    pub fn inner_dim(&self) -> usize {
        self.heads * self.dim_head
    }
}
