//! Seismic footfall identification: event extraction, a Gabor basis-pursuit codec,
//! gait features, classifiers, a Thing/Fog/Cloud simulator and experiment sweeps.

pub mod classify;
pub mod codec;
pub mod dictionary;
pub mod error;
pub mod events;
pub mod features;
pub mod harness;
pub mod io;
pub mod pipeline;
pub mod signal;
pub mod sparse;

pub use classify::{ClassifierKind, ClassifierModel, Hyperparams, Metrics};
pub use codec::{CodecConfig, CompressedEvent, Compression, DiscardReason, GateConfig, GateMode};
pub use dictionary::{AtomMatrix, GaborDictionary};
pub use error::{Error, Result};
pub use events::{DetectorConfig, EventWindow};
pub use features::{AggregatedSample, FeatureVector};
pub use pipeline::{IdentificationRecord, LinkFrame, LinkModel, SimulationConfig};
pub use signal::{Footstep, SyntheticPersonProfile, TimeSeries};
pub use sparse::{LassoConfig, SparseCode};
