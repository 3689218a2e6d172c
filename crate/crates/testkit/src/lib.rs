//! Test-only reference implementations. Nothing here is used by the
//! production crates.

pub mod dag;
pub mod oracle;
pub mod walk;
