//! Fixture-scale preset: a handful of small synthetic images compiled into
//! the library, a one-block model and a 30-epoch plan.

use crate::data::{from_dynamic, ImagePlane, PatchDataset};
use crate::error::Result;
use crate::model::ModelConfig;
use crate::scalar::Scalar;
use crate::train::TrainConfig;

pub const TRAIN_FIXTURES: &[(&str, &[u8])] = &[
    ("fixture_00.png", include_bytes!("../fixtures/train/fixture_00.png")),
    ("fixture_01.png", include_bytes!("../fixtures/train/fixture_01.png")),
    ("fixture_02.png", include_bytes!("../fixtures/train/fixture_02.png")),
    ("fixture_03.png", include_bytes!("../fixtures/train/fixture_03.png")),
    ("fixture_04.png", include_bytes!("../fixtures/train/fixture_04.png")),
    ("fixture_05.png", include_bytes!("../fixtures/train/fixture_05.png")),
];

/// Held out from training.
pub const TEST_FIXTURES: &[(&str, &[u8])] = &[
    ("fixture_06.png", include_bytes!("../fixtures/test/fixture_06.png")),
    ("fixture_07.png", include_bytes!("../fixtures/test/fixture_07.png")),
];

pub fn model_config(scale: usize) -> ModelConfig {
    ModelConfig { scale, ..ModelConfig::toy() }
}

pub fn train_config() -> TrainConfig {
    TrainConfig { epochs: 30, lr: 1e-3, batch_size: 2, ..TrainConfig::default() }
}

fn decode<T: Scalar>(files: &[(&str, &[u8])]) -> Result<Vec<(String, ImagePlane<T>)>> {
    files
        .iter()
        .map(|(name, bytes)| Ok((name.to_string(), from_dynamic::<T>(image::load_from_memory(bytes)?).to_ycbcr().0)))
        .collect()
}

/// Y planes of the training fixtures.
pub fn train_planes<T: Scalar>() -> Result<Vec<(String, ImagePlane<T>)>> {
    decode(TRAIN_FIXTURES)
}

/// Y planes of the held-out fixtures.
pub fn test_planes<T: Scalar>() -> Result<Vec<(String, ImagePlane<T>)>> {
    decode(TEST_FIXTURES)
}

pub fn train_dataset<T: Scalar>(scale: usize) -> Result<PatchDataset<T>> {
    let planes = train_planes::<T>()?;
    PatchDataset::from_planes(planes.iter().map(|(_, p)| p), scale)
}
