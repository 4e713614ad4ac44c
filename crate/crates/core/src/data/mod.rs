//! Image planes, colour conversion, resampling and training-patch
//! extraction.

mod color;
mod dataset;
mod io;
mod patches;
mod plane;
mod resize;

pub use color::{rgb_to_ycbcr, ycbcr_to_rgb};
pub use dataset::{list_images, Batch, PatchDataset};
pub use io::{load_image, save_gray_png, save_rgb_png, LoadedImage};
pub(crate) use io::from_dynamic;
pub use patches::{augment, extract_patches, invert_augmentation, windows_along, Augmentation, PatchPair, LR_PATCH, PATCH_STRIDE};
pub use plane::{ImagePlane, PlaneRole};
pub use resize::{bicubic_resize, bicubic_resize_tensor, cubic_kernel, CUBIC_A};
