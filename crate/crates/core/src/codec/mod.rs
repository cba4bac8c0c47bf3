//! Client-side encoding: fixed-point words, masked bit flipping, the
//! per-bit privacy budget and the binary payload format.

mod budget;
mod fixed;
mod flip;
mod payload;

pub use budget::{epsilon_of, p_of_epsilon, PrivacyBudget};
pub use fixed::{
    fixed_to_float, float_to_fixed, scale_factor, FixedWord, MAX_WIDTH, MIN_WIDTH,
};
pub use flip::{bit_flip, flip_bits, flip_words, toggle_magnitude, FlipMask};
pub use payload::{pack_payload, unpack_payload, Payload, PayloadLayer, MAGIC, VERSION};
