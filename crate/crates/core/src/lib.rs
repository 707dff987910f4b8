pub mod data;
pub mod diagnostics;
pub mod error;
pub mod exec;
pub mod mcmc;
pub mod priors;
pub mod sem;
pub mod suffstat;
pub mod simgen;
pub mod summary;
pub mod metrics;
pub mod io;
pub mod pipeline;
