pub mod analytics;
pub mod calendar;
pub mod clock;
pub mod dedup;
pub mod fixture;
pub mod ingest;
pub mod sources;
pub mod store;
pub mod taxonomy;
