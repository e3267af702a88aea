//! Wall-clock source. `std::time::Instant` panics on wasm32-unknown-unknown,
//! so browser builds use a drop-in replacement backed by `performance.now()`.

#[cfg(not(target_arch = "wasm32"))]
pub use std::time::Instant;
#[cfg(target_arch = "wasm32")]
pub use web_time::Instant;
