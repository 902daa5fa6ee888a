//! C ABI for the plateflow solver. Placeholder during bring-up.
