//! Restoration of hard-clipped signals with sparse (synthesis) and
//! cosparse (analysis) non-convex regularization.
//!
//! The pipeline is: detect or construct a [`ClipMask`], cut the signal into
//! windowed chunks with a [`ChunkPlan`], run A-SPADE or S-SPADE on every
//! chunk over a tight [`FrameOperator`], and overlap-add the results.

pub mod audio_io;
pub mod clipmodel;
pub mod corpus;
pub mod error;
pub mod frames;
pub mod spade;

pub use clipmodel::{
    detect_mask, estimate_tau, find_tau_for_sdr, hard_clip, project_consistent, sdr_clipped,
    ClipMask, ClippedSignal, MaskSidecar, SampleClass, SDR_CAP_DB,
};
pub use error::{Error, Result};
pub use frames::{Chunk, ChunkPlan, FrameOperator};
pub use spade::{
    a_spade_chunk, declip_chunk, declip_signal, hard_threshold, hard_threshold_conjugate,
    s_spade_chunk, s_spade_project, DeclipReport, DeclipResult, Declipped, EpsMode, SpadeParams,
    TerminatedBy, Variant,
};
