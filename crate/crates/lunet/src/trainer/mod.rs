//! Loss, optimizer, checkpoints and the training loop.

pub mod adam;
pub mod checkpoint;
pub mod loss;
pub mod train;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use checkpoint::{
    infer_architecture, load_checkpoint, parse_records, read_records, restore, save_checkpoint, snapshot,
    write_records, Record, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use loss::{bce_loss, PROB_CLAMP};
pub use train::{
    epoch_csv_row, evaluate, predict, read_step_log, step_csv_row, train, CsvSink, EpochSummary, MemorySink,
    StepLog, TrainConfig, TrainOutcome, TrainSink, EPOCH_CSV_HEADER, STEP_CSV_HEADER,
};
