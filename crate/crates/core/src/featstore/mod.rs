//! On-disk feature files and dataset manifests, the contract with the
//! feature extractor.

pub mod kldf;
pub mod manifest;

pub use kldf::{
    decode_features, encode_features, kldf_file_len, read_features, write_features, Dtype,
    KLDF_HEADER_LEN,
};
pub use manifest::{
    validate_manifest, validate_manifest_file, DatasetManifest, Provenance, SplitEntry, Violation,
    TEST_SPLIT, TRAIN_SPLIT,
};
