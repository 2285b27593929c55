//! Synthetic numerosity stimuli: scene descriptions, rasterization, sampling
//! families, statistical normalization and on-disk datasets.

mod config;
mod dataset;
mod generate;
mod normalize;
mod raster;
mod scene;

pub use config::StimulusConfig;
pub use dataset::{
    read_dataset, read_manifest, write_dataset, Dataset, DatasetEntry, DatasetManifest,
    Representation, GENERATOR_VERSION, MANIFEST_FILE, SCHEMA_VERSION,
};
pub use generate::{
    derive_seed, generate_batch, objects_render_cleanly, perturb_scale, place, random_star_polygon,
    replace_if_needed, replace_kind, rng_for, sample_scene, sample_training_scene, swap_polarity,
    Family,
};
pub use normalize::{
    edge_count, edge_tolerance, histogram_overlap, lift_min_size, normalize_edge_count,
    normalize_total_area, pearson, scale_to_area, scale_to_edge_count, NormalizationMode,
};
pub use raster::{
    foreground, is_simple_polygon, object_mask, point_in_polygon, polygon_vertices, rasterize,
    BAND_THICKNESS,
};
pub use scene::{Layout, ObjectSpec, Polarity, SceneSpec, ShapeKind, Style, MAX_COUNT, MIN_SIZE};
