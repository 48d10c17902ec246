//! Serialization: the `.f32` tensor container, the dataset directory layout,
//! and model checkpoints.

mod checkpoint;
mod layout;
mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint, ArchDescriptor};
pub use layout::{
    class_dir_name, image_to_png_bytes, read_manifest, read_split, read_split_checked,
    write_manifest, write_split, DatasetManifest, MANIFEST_NAME, SPLITS,
};
pub use tensor::{
    decode_tensor_bytes, encode_tensor, read_tensor, write_tensor, TensorContainer, TENSOR_MAGIC,
};
