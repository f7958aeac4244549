//! Acceptance checks for `qnlchain-core`; see `tests/acceptance.rs`.
