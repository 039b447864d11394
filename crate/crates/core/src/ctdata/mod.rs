//! CT slices in Hounsfield units: windowing, the `.cti` on-disk format,
//! synthetic phantoms and low-dose noise simulation.

mod dataset;
mod image;
mod io;
mod noise;
mod phantom;

pub use dataset::{id_stem, load_images, load_split, split_dir, write_pair, PairedSample, Split};
pub use image::{apply_window, invert_window, CtImage, WindowSpec, WindowedImage, HU_MAX, HU_MIN};
pub use io::{import_raw_slice, read_cti, write_cti, RawDtype, RawSliceFormat};
pub use noise::simulate_low_dose;
pub use phantom::{generate_phantom, PhantomSpec};

/// Seed offset separating held-out phantoms from training phantoms. Train
/// seeds live in `[base, base + TEST_SEED_OFFSET)`, test seeds above.
pub const TEST_SEED_OFFSET: u64 = 1 << 32;

/// Seed of the `index`-th phantom of a split.
pub fn phantom_seed(base: u64, split: Split, index: u64) -> u64 {
    let start = base.wrapping_mul(1 << 40);
    match split {
        Split::Train => start.wrapping_add(index),
        Split::Test => start.wrapping_add(TEST_SEED_OFFSET).wrapping_add(index),
    }
}

/// Seed for the noise realisation of a phantom; derived, never shared with
/// the geometry stream.
pub fn noise_seed(phantom_seed: u64) -> u64 {
    phantom_seed ^ 0x9E37_79B9_7F4A_7C15
}

/// Generates one paired sample: phantom geometry plus its low-dose twin.
pub fn synthesize_pair(spec: &PhantomSpec, photon_count: f64) -> crate::Result<PairedSample> {
    let ndct = generate_phantom(spec)?;
    let ldct = simulate_low_dose(&ndct, photon_count, noise_seed(spec.seed))?;
    PairedSample::new(ldct, ndct)
}
