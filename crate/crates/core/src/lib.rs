pub mod analytics;
pub mod gateway;
pub mod metrics;
pub mod search;
pub mod seed;
pub mod store;
pub mod template;
