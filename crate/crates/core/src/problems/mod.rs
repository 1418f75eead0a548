//! Problem families: TGV-KL deblurring, smoothed-hinge classification and a
//! small box-constrained quadratic saddle problem with a closed-form oracle.

mod classify;
mod libsvm;
mod reference;
mod tgv;
mod tiny;

pub use classify::{build_classification, synth_classification, ClassificationSpec};
pub use libsvm::{parse_libsvm, serialize_libsvm, LibsvmData};
pub use reference::{certificate, reference_long_run, reference_oracle, reference_solution, RefMethod, RefOptions};
pub use tgv::{
    blur_observation, build_tgv_kl, motion_blur_kernel, synth_deblur, synth_image, DeblurSpec, ImagePattern, Kernel, PoissonNoise, SynthDeblur, TGV_DUAL_BLOCKS,
};
pub use tiny::{tiny_qp, tiny_qp_with, TinyQp, TinyQpData};
