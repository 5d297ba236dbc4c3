pub mod bundled;
pub mod classify;
pub mod cli;
pub mod config;
pub mod dispatch;
pub mod event_feed;
pub mod geo;
pub mod geoparse;
pub mod ingest;
pub mod metrics;
pub mod oracle;
pub mod pipeline;
pub mod rng;
pub mod types;
pub mod witness;
pub mod world;
