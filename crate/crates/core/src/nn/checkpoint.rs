//! Model checkpoints: a single JSON document with shape-annotated parameter
//! arrays, a format-version field, the optional input standardizer, and the
//! provenance stamp (config hash + seed) of the run that produced it.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Standardizer;
use crate::error::{Error, Result};
use crate::nn::{DenseLayer, HeadMode, Model};
use crate::tensor::Matrix;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub head_mode: HeadMode,
    pub trunk: Vec<DenseLayer>,
    pub logit_head: Matrix,
    pub smoothing_head: Matrix,
    /// Input normalization fitted on the training split, if any; evaluation
    /// must apply the same transform.
    pub standardizer: Option<Standardizer>,
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
}

impl Checkpoint {
    pub fn from_model(
        model: &Model,
        standardizer: Option<&Standardizer>,
        config_hash: Option<String>,
        seed: Option<u64>,
    ) -> Checkpoint {
        Checkpoint {
            format_version: FORMAT_VERSION,
            head_mode: model.head_mode,
            trunk: model.trunk.clone(),
            logit_head: model.logit_head.clone(),
            smoothing_head: model.smoothing_head.clone(),
            standardizer: standardizer.cloned(),
            config_hash,
            seed,
        }
    }

    pub fn into_model(self) -> Result<(Model, Option<Standardizer>)> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "checkpoint format version {} not supported (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        let model = Model {
            trunk: self.trunk,
            logit_head: self.logit_head,
            smoothing_head: self.smoothing_head,
            head_mode: self.head_mode,
        };
        model.check_shapes()?;
        Ok((model, self.standardizer))
    }
}

pub fn save_checkpoint(
    path: &Path,
    model: &Model,
    standardizer: Option<&Standardizer>,
    config_hash: Option<String>,
    seed: Option<u64>,
) -> Result<()> {
    let ck = Checkpoint::from_model(model, standardizer, config_hash, seed);
    let file = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(file, &ck)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(Model, Option<Standardizer>)> {
    let file = BufReader::new(File::open(path)?);
    let ck: Checkpoint = serde_json::from_reader(file)?;
    ck.into_model()
}
