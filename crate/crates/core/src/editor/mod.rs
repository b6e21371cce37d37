//! Editing in atlas space: rasterize, merge, split, run tools and
//! re-render every view from the edited textures.

pub mod apply;
pub mod atlas;
pub mod tools;

pub use apply::{apply_edit, ensure_atlases, load_fields, render_textures, EditMeta, EditRequest, Outcome};
pub use atlas::{decide_region, dilate, merge, rasterize_atlases, split, AtlasImage, Region, Square, ToolScope, TAU};
pub use tools::{builtin_tools, find_tool, ToolDef, ToolResult};
