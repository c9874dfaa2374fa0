//! Incremental spatial indices over a packing and the placement heuristics
//! built on them.

mod candidates;
mod ems;
mod heightmap;

pub use candidates::{
    generate_candidates, support_fraction, CandidateAction, CandidateConfig, CandidateSet,
    Heuristic, PackingView,
};
pub use ems::{ems_update, EmptyMaximalSpace};
pub(crate) use ems::ems_update_unchecked;
pub use heightmap::Heightmap;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpatialError {
    #[error("placed box is not inside any empty maximal space")]
    PlacementNotEmpty,
    #[error("footprint at ({x}, {y}) leaves the container floor")]
    FootprintOutOfBounds { x: f64, y: f64 },
}
