pub mod bench;
pub mod config;
pub mod editing;
pub mod geom;
pub mod graph;
pub mod image;
pub mod layout;
pub mod library;
pub mod parser;
pub mod planner;
pub mod scalar;
pub mod sim;

/// Pixel-space box at the pipeline's working precision.
pub type BoundingBox = geom::Rect<f64>;
/// Per-node boxes at the pipeline's working precision.
pub type Layout = layout::LayoutMap<f64>;
/// Layout predictor at the pipeline's working precision.
pub type LayoutPredictor = layout::Predictor<f64>;
