pub mod analysis;
pub mod audio;
pub mod convert;
pub mod dataset;
pub mod envelope;
pub mod metrics;
pub mod seed;
pub mod sequencer;
pub mod timbrebank;
