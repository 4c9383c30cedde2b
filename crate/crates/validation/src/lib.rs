//! Test-only package holding the acceptance suite in `tests/acceptance.rs`.
