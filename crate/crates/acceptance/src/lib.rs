//! Holds the workspace acceptance suite in `tests/acceptance.rs`:
//!
//! ```sh
//! cargo test -p convis-acceptance --test acceptance
//! ```
