//! Acceptance checks for the hrot toolkit live in `tests/acceptance.rs`.
