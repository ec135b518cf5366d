//! Training loop over a feature source, sequential or as a four-stage
//! pipeline, driving a deterministic mean-aggregation trainer.

mod run;
mod trainer;

pub use run::{
    run_epoch, run_training, Mode, Observer, Stage, StageConfig, StageDelays, StageTimes,
    TrainReport, DEFAULT_QUEUE_CAPACITY,
};
pub use trainer::{combine_digests, fnv1a, trainer_stub, TrainOutput};
