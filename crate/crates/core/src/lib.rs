//! Joint channel estimation and turbo equalization/decoding for single-carrier
//! block transmission over time-varying sparse channels.
//!
//! The receiver treats a group of `K` consecutive frames jointly. Inside each
//! frame a bilinear AMP engine estimates channel taps and symbols together;
//! across frames, Bernoulli support chains and Gauss-Markov amplitude chains
//! carry soft channel information forward and backward. Extrinsic symbol
//! statistics are exchanged with an LDPC sum-product decoder in a turbo loop,
//! and the channel prior is re-estimated by EM after every pass.
//!
//! The crate is `no_std` (it needs `alloc`); IO, configuration files and the
//! experiment harness live in the companion `dcsjced-sim` crate.
//!
//! Module map:
//!
//! * [`modem`]: frame layout, pilots, interleaving and constellation mapping.
//! * [`fec`]: rate-1/2 LDPC construction, encoding and soft decoding.
//! * [`channel`]: the sparse dynamic channel model and the transmission model.
//! * [`msgcore`]: the into / within / out / across message-passing stages.
//! * [`emtune`]: smoothing on the support and amplitude chains plus EM updates.
//! * [`turbo`]: the group equalizer, soft demapping and the turbo schedule.
//! * [`baseline`]: LMMSE channel estimation + MMSE turbo equalizer and the
//!   single-frame joint equalizer.

#![no_std]

extern crate alloc;

pub mod baseline;
pub mod channel;
pub mod dft;
pub mod emtune;
mod error;
pub mod fec;
pub mod linalg;
pub mod math;
pub mod modem;
pub mod msgcore;
pub mod turbo;

pub use error::{Error, Result};

/// Complex baseband sample.
pub type C64 = num_complex::Complex64;
