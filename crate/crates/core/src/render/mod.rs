//! Topographic map images.

pub mod colormap;
pub mod font;
pub mod grid;
pub mod interpolate;
pub mod order;

pub use colormap::{color, colorize};
pub use grid::{render_grid, Figure, GridCell, GridMode, GridSpec, Panel, RenderOptions};
pub use interpolate::{interpolate_field, Interpolator, TopoImage};
pub use order::order_groups;
