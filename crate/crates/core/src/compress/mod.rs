//! K-Medoids quantisation of update vectors into medoid values Ψ and
//! per-entry indices Υ, and their encrypted upload form.

mod kmedoids;
mod update;

pub use kmedoids::{assign, assignment_cost, kmedoids, KMedoids};
pub use update::{
    decrypt_update, dequantize, distinct_count, encrypt_update, quantize_gradient,
    CompressedUpdate, EncryptedUpdate, UpdateIds, DEFAULT_K, UPDATE_FORMAT_VERSION,
};
