//! Loss, training loop, metrics and evaluation reports.

mod eval;
mod metrics;
mod sample;
mod train;

pub use eval::{
    evaluate, evaluate_checkpoint, evaluate_clip, BilinearBaseline, EvalReport, EvalRow, Upscaler,
};
pub use metrics::{
    charbonnier, charbonnier_term, mse, psnr, psnr_from_mse, ssim, PSNR_CAP_DB, SSIM_K1, SSIM_K2,
    SSIM_SIGMA, SSIM_WINDOW,
};
pub use sample::{common_region, lr_dim, make_sample, Region, Sample};
pub use train::{
    checkpoint_path, format_trace, load_model, total_loss, total_loss_graph, train, train_from,
    TrainConfig, TrainOutcome, FINAL_CHECKPOINT, TRACE_FILE,
};
