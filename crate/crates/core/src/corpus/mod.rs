//! Data model, manifest and session loading, person-independent splits and
//! early feature fusion.

mod fusion;
mod manifest;
mod session;
mod split;

pub use fusion::fuse_features;
pub use manifest::{
    load_manifest, parse_manifest, DatasetManifest, FrameStream, LabelMode, Modality,
    ParticipantEntry, ScreenGeometry,
};
pub use session::{
    load_session, read_eeg_epoch, read_events, read_frame_table, read_gaze, EegEpoch, EventKind,
    FrameFeatureTable, GazeSample, ReportEvent, Session,
};
pub(crate) use session::EpochSidecar;
pub use split::{person_split, Split, DEFAULT_RATIOS};
