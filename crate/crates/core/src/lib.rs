//! Online 3D bin packing with decoupled proposal and selection policies.

pub mod geometry;
pub mod spatial;
pub mod instances;
pub mod seeding;
pub mod env;
pub mod policy;
pub mod training;
pub mod oracle;
