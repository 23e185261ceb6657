//! Low-rank adapters with a mixer between the two factors.
//!
//! The branch added to a frozen weight `W0` is `s·A·W·B`. A fixed identity
//! mixer gives vanilla LoRA, the fixed butterfly `[[I, I], [I, I]]` gives
//! two-subspaces mixing, and a learnable `W` gives MoSLoRA. The crate covers
//! forward/merge, analytic gradients with finite-difference checks, one-step
//! trajectory analysis, a synthetic sweep harness, and checkpoint I/O.

pub mod adapter;
pub mod checkpoint;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod init;
pub mod matrix;
pub mod rng;
pub mod verify;

pub use adapter::{
    butterfly_mixer, ts_mix_delta, Adapter, AdapterConfig, GradTriple, MixerKind, Rank1Term,
    SubspacePair,
};
pub use checkpoint::{load_checkpoint, merge_files, read_matrix, save_checkpoint, write_matrix};
pub use dynamics::{
    finite_diff_grads, mse_loss, mse_loss_and_upstream, one_step_trajectory, sgd_step, train,
    Dataset, TrainConfig, TrainLog, TrajectoryReport,
};
pub use error::{Error, Result};
pub use harness::{
    make_task, run_sweep, Method, Report, ReportRow, SweepSpec, TargetKind, TaskSpec,
};
pub use init::{init_matrix, InitKind};
pub use matrix::Matrix;
pub use rng::Rng;
pub use verify::{PropertyResult, VerifySuite};
