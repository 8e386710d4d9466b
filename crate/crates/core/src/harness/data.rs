use std::path::Path;

use rayon::prelude::*;

use super::config::DatasetSource;
use crate::error::{Error, Result};
use crate::grid::{ObjectSet, Raster};
use crate::io::{read_patch, read_split, Split};
use crate::learner::{foreground_prob, ParamVector, Tensor};
use crate::metrics::tag_objects;
use crate::synthdata::{generate_patches, inject_patches, DatasetPatch};

/// One patch prepared for training and evaluation.
#[derive(Debug, Clone)]
pub struct PatchData {
    pub id: usize,
    pub image: Tensor<f32>,
    pub gt: Raster,
    pub noisy: Raster,
    /// Ground-truth objects tagged against the noisy mask.
    pub tagged: ObjectSet,
}

impl PatchData {
    pub fn new(id: usize, patch: &DatasetPatch) -> Result<Self> {
        patch.gt_mask.ensure_binary("gt mask")?;
        patch.noisy_mask.ensure_binary("noisy mask")?;
        patch.gt_mask.check_same_shape(&patch.noisy_mask)?;
        if patch.image.width() != patch.gt_mask.width()
            || patch.image.height() != patch.gt_mask.height()
        {
            return Err(Error::shape(
                patch.gt_mask.shape_string(),
                patch.image.shape_string(),
            ));
        }
        Ok(Self {
            id,
            image: Tensor::from_raster(&patch.image),
            gt: patch.gt_mask.clone(),
            noisy: patch.noisy_mask.clone(),
            tagged: tag_objects(&ObjectSet::from_mask(&patch.gt_mask)?, &patch.noisy_mask)?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<PatchData>,
    pub test: Vec<PatchData>,
}

impl Dataset {
    pub fn load(source: &DatasetSource) -> Result<Self> {
        match source {
            DatasetSource::Path { path } => Self::from_dir(path),
            DatasetSource::Synthetic {
                scene,
                noise,
                n_train,
                n_test,
            } => {
                let clean = generate_patches(scene, 0, n_train + n_test)?;
                let noisy = inject_patches(&clean, noise, 0)?;
                let prepared: Vec<PatchData> = noisy
                    .iter()
                    .enumerate()
                    .map(|(id, p)| PatchData::new(id, p))
                    .collect::<Result<_>>()?;
                let mut train = prepared;
                let test = train.split_off(*n_train);
                Self::new(train, test)
            }
        }
    }

    pub fn from_dir(root: &Path) -> Result<Self> {
        let load = |split| -> Result<Vec<PatchData>> {
            read_split(root, split)?
                .into_iter()
                .map(|id| PatchData::new(id, &read_patch(root, id)?))
                .collect()
        };
        Self::new(load(Split::Train)?, load(Split::Test)?)
    }

    pub fn new(train: Vec<PatchData>, test: Vec<PatchData>) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Contract("dataset has no training patches".into()));
        }
        let channels = train[0].image.channels;
        if let Some(p) = train
            .iter()
            .chain(&test)
            .find(|p| p.image.channels != channels)
        {
            return Err(Error::shape(
                format!("{channels} image channels"),
                format!("{} in patch {}", p.image.channels, p.id),
            ));
        }
        Ok(Self { train, test })
    }

    pub fn channels(&self) -> usize {
        self.train[0].image.channels
    }
}

/// Foreground probabilities of every patch.
pub fn predict_all(params: &ParamVector, patches: &[PatchData]) -> Result<Vec<Raster>> {
    patches
        .par_iter()
        .map(|p| foreground_prob(params, &p.image))
        .collect()
}
