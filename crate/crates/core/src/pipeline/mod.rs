//! Training-data preparation, the training loop, corpus evaluation and
//! decode timing.

mod augment;
mod bench;
mod eval;
mod patches;
mod train;

pub use augment::{augment, resize_bicubic, rotate90, MIN_SIDE, SCALES};
pub use bench::{bench_decode, bench_image, bench_tsv, median, BenchRow};
pub use eval::{
    evaluate_corpus, evaluate_pairs, load_eval_images, load_eval_pairs, EvalImage, EvalPair,
    EvalReport, EvalRow, Method,
};
pub use patches::{extract_pairs, PatchPair, Sampling, PATCH};
pub use train::{
    init_seed, parse_qf_list, train_branch, training_patches, validate, validation_patches,
    ImagePair, LogRecord, OutputPaths, QfMode, TrainConfig, TrainData, TrainOutcome, TrainingLog,
    ValScore,
};
