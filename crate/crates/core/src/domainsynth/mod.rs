//! Synthetic multi-center segmentation data.
//!
//! Each center ("domain") is a seeded generator of 2-D or 3-D subjects: a
//! smooth background texture, a multiplicative low-frequency bias field,
//! additive Gaussian noise, and blurred ellipsoidal lesions whose boundary
//! voxels carry fractional labels. Centers differ in lesion polarity,
//! noise, bias strength and lesion size, which is the domain shift the
//! continual-learning experiments rely on.

mod archive;
mod generate;
mod sampling;
mod spec;
mod split;

pub use archive::{
    read_archive, read_archive_specs, write_archive, ArchiveSummary, ARCHIVE_FORMAT,
};
pub use generate::{generate_domain, Domain, Sample};
pub use sampling::{
    sample_patches, sample_patches_with, Patch, DEFAULT_FG_PROBABILITY, FOREGROUND_LEVEL,
};
pub use spec::{
    default_cohort, desk_cohort, format_shape, parse_shape, DomainSpec, Polarity, COHORT_SIZES,
    DEFAULT_TRAIN_RATIO,
};
pub use split::{split_domain, train_count};
