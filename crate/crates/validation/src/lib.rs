//! Holds the workspace acceptance target (`tests/acceptance.rs`). It lives in
//! its own package so that it runs after every other test binary under
//! `cargo test --workspace`.
