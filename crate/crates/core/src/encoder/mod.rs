//! Recurrent EEG encoder trained with online triplet mining, plus a softmax
//! classification baseline.

mod model;
mod train;
mod triplet;

pub use model::{EncoderModel, EncoderSpec, EMBED_DIM};
pub use train::{train_classifier_baseline, train_encoder, write_encoder_log, EncoderTrainConfig, EpochRecord, TrainedEncoder};
pub use triplet::{
    all_valid_triplets, mine, mine_hard, mine_semi_hard, pairwise_sq_dists, triplet_loss, triplet_loss_var, Mining, Triplet,
    TripletBatch, TripletConfig,
};
