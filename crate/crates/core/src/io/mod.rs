//! Byte-exact persistence: `.flo` flows, PGM/PPM images and masks, weight
//! archives, clip manifests and `key=value` config text. Everything is
//! little-endian; the same data always produces the same bytes.

mod archive;
mod flo;
mod image;
mod kv;
mod manifest;

pub use archive::{decode_bundle, encode_bundle, load_bundle, save_bundle, ARCHIVE_MAGIC, ARCHIVE_VERSION};
pub use flo::{decode_flo, encode_flo, read_flo, write_flo, FLO_MAGIC};
pub use image::{decode_pnm, encode_pnm, quantize, read_image, read_mask, write_image, write_mask};
pub use kv::{put_specs, take_specs, KeyValues, List};
pub use manifest::{
    put_occlusion, put_synth_config, read_clip, take_occlusion, take_synth_config, write_clip, ClipManifest,
    MANIFEST_FILE,
};
