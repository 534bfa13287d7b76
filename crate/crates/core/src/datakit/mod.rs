//! Synthetic fingerspelling corpus, augmentation, windowing and
//! experiment splits.

mod augment;
mod dataset;
mod synth;

pub use augment::{
    augment, augmented_pool, heldout_styles, make_unlabeled_pool, window_frames, TransformSpec,
};
pub use dataset::{
    make_splits, Dataset, DatasetSpec, Example, ExperimentSplit, Instance, Protocol, FRAMES_FILE,
    MANIFEST_FILE, SD_FOLDS, SD_USED_FOLDS, WORD_LIST,
};
pub use synth::{
    glyph, glyph_template, letter_frame, render_glyph, sequence_length, synth_generate,
    FrameSequence, Glyph, SignerStyle, GLYPH_MIN_SQ_DISTANCE,
};

pub const FRAME_SIDE: usize = 64;
pub const FRAME_LEN: usize = FRAME_SIDE * FRAME_SIDE;
