use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

use super::io::load_image;
use super::patches::{extract_patches, PatchPair};
use super::plane::ImagePlane;

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "pgm", "ppm", "pnm"];

/// Image files directly inside `dir`, sorted by name.
pub fn list_images(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir.as_ref())? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// A mini-batch with pixel values divided by 255.
#[derive(Clone, Debug)]
pub struct Batch<T> {
    pub lr: Tensor<T>,
    pub hr: Tensor<T>,
    /// Positions of the batch items in the dataset.
    pub indices: Vec<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct PatchDataset<T> {
    pub pairs: Vec<PatchPair<T>>,
    pub scale: usize,
}

impl<T: Scalar> PatchDataset<T> {
    pub fn from_planes<'a>(planes: impl IntoIterator<Item = &'a ImagePlane<T>>, scale: usize) -> Result<Self> {
        let mut pairs = Vec::new();
        for p in planes {
            pairs.extend(extract_patches(p, scale)?);
        }
        Ok(PatchDataset { pairs, scale })
    }

    /// Patches from the Y channel of every image in `dirs`.
    pub fn from_dirs(dirs: &[PathBuf], scale: usize) -> Result<Self> {
        let mut planes = Vec::new();
        for dir in dirs {
            for path in list_images(dir)? {
                planes.push(load_image::<T>(&path)?.to_ycbcr().0);
            }
        }
        if planes.is_empty() {
            return Err(Error::config(format!("no images found in {dirs:?}")));
        }
        Self::from_planes(&planes, scale)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Keeps the first `n` pairs.
    pub fn truncate(&mut self, n: usize) {
        self.pairs.truncate(n);
    }

    /// Order of the dataset for one epoch, a pure function of `seed`.
    pub fn epoch_order(&self, seed: u64) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        order
    }

    pub fn batch(&self, indices: &[usize]) -> Batch<T> {
        let first = &self.pairs[indices[0]];
        let (lh, lw) = (first.lr.height(), first.lr.width());
        let (hh, hw) = (first.hr.height(), first.hr.width());
        let inv = T::one() / T::lit(255.0);
        let mut lr = Vec::with_capacity(indices.len() * lh * lw);
        let mut hr = Vec::with_capacity(indices.len() * hh * hw);
        for &i in indices {
            lr.extend(self.pairs[i].lr.data().iter().map(|&v| v * inv));
            hr.extend(self.pairs[i].hr.data().iter().map(|&v| v * inv));
        }
        Batch {
            lr: Tensor::from_vec(Shape::new(indices.len(), 1, lh, lw), lr).expect("uniform patch size"),
            hr: Tensor::from_vec(Shape::new(indices.len(), 1, hh, hw), hr).expect("uniform patch size"),
            indices: indices.to_vec(),
        }
    }

    /// Shuffled mini-batches; the last one may be short.
    pub fn batches(&self, batch_size: usize, seed: u64) -> Vec<Batch<T>> {
        self.epoch_order(seed).chunks(batch_size.max(1)).map(|c| self.batch(c)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PlaneRole;

    #[test]
    fn batches_cover_dataset_once() {
        let img = ImagePlane::<f32>::from_fn(128, 128, PlaneRole::Y, |y, x| (y + x) as f32);
        let ds = PatchDataset::from_planes([&img], 2).unwrap();
        assert_eq!(ds.len(), 20);
        let bs = ds.batches(6, 3);
        assert_eq!(bs.iter().map(|b| b.lr.shape().n).collect::<Vec<_>>(), vec![6, 6, 6, 2]);
        let mut seen: Vec<usize> = bs.iter().flat_map(|b| b.indices.clone()).collect();
        seen.sort();
        assert_eq!(seen, (0..20).collect::<Vec<_>>());
        assert_eq!(bs[0].hr.shape(), Shape::new(6, 1, 64, 64));
        assert_eq!(ds.epoch_order(3), ds.epoch_order(3));
        assert_ne!(ds.epoch_order(3), ds.epoch_order(4));
    }
}
