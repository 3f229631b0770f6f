pub mod assignment;
pub mod demand;
pub mod instances;
pub mod lp;
pub mod metrics;
pub mod scenario;
pub mod topology;
