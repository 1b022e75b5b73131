//! Reed–Solomon identification codes (Moulin–Koetter construction), the
//! mutual-identification protocol built on them, and the information-theoretic
//! analysis of an eavesdropper trying to recover the secret evaluation domain.
//!
//! The crate is organised bottom-up:
//!
//! * [`field`]: arithmetic in prime fields and in GF(2^m), up to GF(2^64).
//! * [`idcode`]: code parameters, code sampling, encoding and decoding sets,
//!   second-kind error estimation.
//! * [`protocol`]: reader and device state machines, the noisy channel and
//!   transcript capture.
//! * [`oracle`]: exhaustive posterior over the code family given an
//!   eavesdropped transcript.
//! * [`bounds`]: closed-form lower bounds on the adversary's residual entropy.

pub mod bounds;
pub mod error;
pub mod field;
pub mod idcode;
pub mod oracle;
pub mod protocol;

pub use error::{Error, Result};
pub use field::{Field, FieldElement, FieldKind, Polynomial};
pub use idcode::{CodeParams, EncodedMessage, IdCode};

/// Deterministic generator used throughout the crate and its tests.
pub type SeededRng = rand_chacha::ChaCha8Rng;

/// Builds the crate's standard RNG from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> SeededRng {
    use rand::SeedableRng;
    SeededRng::seed_from_u64(seed)
}
