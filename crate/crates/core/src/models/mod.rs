//! Backbone zoo: every compared architecture built from a declarative
//! config, with a regression head producing one count per image.

pub mod attention;
mod cnn;
mod config;
mod crossvit;
mod flops;
pub mod layers;
mod vit;
mod xcit;

use std::path::Path;

use microcount_tensor::{Checkpoint, Graph, ParamStore, Var};
use serde::{Deserialize, Serialize};

use crate::adapters::NormalizationStats;
use crate::error::{input, Error, Result};
use layers::{Builder, Fwd};

pub use cnn::{cnn_channels, Bottleneck, CnnNet, ResNetNet};
pub use config::{BackboneConfig, Family, HeadType, PerBranch, PRESET_NAMES};
pub use crossvit::{cross_attention_fuse, Branch, CrossFuse, CrossVitNet};
pub use flops::estimate_flops;
pub use vit::{Block, BlockDims, ParallelBlock, SerialBlock, VitNet, PARALLEL_BRANCHES};
pub use xcit::{ClassHead, Lpi, XcitBlock, XcitNet};

/// One per model, so variant size does not matter.
#[allow(clippy::large_enum_variant)]
#[derive(Clone, Debug)]
pub enum Net {
    Cnn(CnnNet),
    Resnet(ResNetNet),
    Vit(VitNet),
    Xcit(XcitNet),
    Crossvit(CrossVitNet),
}

/// A backbone with its regression head and the parameters both own.
#[derive(Clone, Debug)]
pub struct CountingModel {
    pub config: BackboneConfig,
    pub store: ParamStore,
    pub net: Net,
}

/// Builds `config` with parameters initialized from `seed`.
pub fn build_backbone(config: &BackboneConfig, seed: u64) -> Result<CountingModel> {
    config.validate()?;
    let mut store = ParamStore::new();
    let mut b = Builder::new(&mut store, crate::seed::stream_seed(seed, "init"));
    let net = match config.family {
        Family::Cnn => Net::Cnn(CnnNet::build(&mut b, config)?),
        Family::Resnet => Net::Resnet(ResNetNet::build(&mut b, config)?),
        Family::Xcit => Net::Xcit(XcitNet::build(&mut b, config)?),
        Family::Crossvit => Net::Crossvit(CrossVitNet::build(&mut b, config)?),
        _ => Net::Vit(VitNet::build(&mut b, config)?),
    };
    Ok(CountingModel { config: config.clone(), store, net })
}

/// Exact number of learnable scalars.
pub fn count_parameters(model: &CountingModel) -> usize {
    model.store.num_trainable_scalars()
}

/// Metadata stored alongside the weights of a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMeta {
    pub config: BackboneConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<NormalizationStats>,
}

impl CountingModel {
    /// Counts for a `[B, 3, S, S]` batch, as `[B]`.
    pub fn forward(&self, g: &mut Graph, images: &Var) -> Result<Var> {
        let s = images.shape();
        let size = self.config.input_size;
        if s.len() != 4 || s[1] != 3 || s[2] != size || s[3] != size {
            return Err(input(format!("expected [B, 3, {size}, {size}] images, got {s:?}")));
        }
        let mut f = Fwd::new(g, &self.store);
        match &self.net {
            Net::Cnn(n) => n.forward(&mut f, images),
            Net::Resnet(n) => n.forward(&mut f, images),
            Net::Vit(n) => n.forward(&mut f, images),
            Net::Xcit(n) => n.forward(&mut f, images),
            Net::Crossvit(n) => n.forward(&mut f, images),
        }
    }

    pub fn save(&self, path: &Path, stats: Option<NormalizationStats>) -> Result<()> {
        let meta = ModelMeta { config: self.config.clone(), stats };
        let meta =
            serde_json::to_string(&meta).map_err(|source| Error::Json { context: "checkpoint meta".into(), source })?;
        Ok(Checkpoint::from_store(&self.store, meta).save(path)?)
    }

    /// Rebuilds the architecture recorded in the checkpoint and loads its weights.
    pub fn load(path: &Path) -> Result<(Self, ModelMeta)> {
        let ck = Checkpoint::load(path)?;
        let meta: ModelMeta = serde_json::from_str(&ck.meta)
            .map_err(|source| Error::Json { context: format!("{} meta", path.display()), source })?;
        let mut model = build_backbone(&meta.config, 0)?;
        ck.apply(&mut model.store)?;
        Ok((model, meta))
    }
}
