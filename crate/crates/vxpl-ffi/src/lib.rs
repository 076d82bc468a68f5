//! C ABI surface. Placeholder while the core library comes up.
