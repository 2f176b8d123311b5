//! Complex-ratio-mask enhancement: mask algebra, the recurrent estimator,
//! training, checkpoints and multi-array selection.

mod checkpoint;
mod loss;
mod mask;
mod model;
mod pipeline;
mod select;
mod train;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, sidecar_path, CheckpointMeta, MaskBound, CHECKPOINT_VERSION,
};
pub use loss::{mask_grad_from_spectrum, mask_mse_loss, neg_sisnr_with_grad, sisnr_loss, LossKind};
pub use mask::{apply_mask, ideal_crm, ideal_crm_flagged, ComplexMask, IdealMask, IDEAL_MASK_EPS};
pub use model::{
    bias_for_mask, bound_mask, LstmLayer, MaskEstimator, ModelConfig, Scalar, StreamState,
    MASK_LIMIT, MASK_SLOPE,
};
pub use pipeline::{
    enhance_clip, enhance_clip_with, enhance_streaming, FrontEnd, StreamingEnhancer,
};
pub use select::{estimated_snr, select_array, Candidate, Selected};
pub use train::{
    train, EpochLog, Example, ExampleSource, PlateauSchedule, Prepared, TrainConfig, TrainOutcome,
    Trainer,
};
