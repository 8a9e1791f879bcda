pub mod error;
pub mod geometry;
pub mod grid;
pub mod harness;
pub mod newton;
pub mod oracle;
pub mod scheme;
pub mod subgradient;
pub mod transport;

pub use error::{Error, Result};
pub use geometry::Point2;
