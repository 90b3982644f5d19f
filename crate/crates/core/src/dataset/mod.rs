//! Labeled classification data from simplified wiki dumps: category-graph
//! labeling, cleaning, length filtering, balancing and splitting.

mod builder;
mod clean;
mod graph;

pub use builder::{
    build_dataset, build_language, categories_path, downsample, emit_dataset, file_name,
    label_page, length_filter, load_pages, overrides_path, pages_path, parse_pages, split, Caps,
    DatasetBuild, DatasetConfig, DatasetCounters, DatasetInputs, DatasetManifest,
    LabeledDocument, RawPage, Splits, LANGUAGES, MAX_TOKENS, MIN_TOKENS, SPLITS,
};
pub use clean::{clean_text, Cleaned, MAX_DIRTY_FRACTION};
pub use graph::{
    build_graph, default_targets, load_edges, load_overrides, parse_edges, parse_overrides,
    CategoryGraph, EdgeEdit, EditKind, Violation, DEFAULT_DEPTH_CAP, DEFAULT_TARGETS,
    TARGET_COUNT,
};
