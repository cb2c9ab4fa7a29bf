//! Command-line front end for `mmce-core`: file formats and the `stats`, `aggregate`,
//! `select` and `evaluate` commands.

pub mod commands;
pub mod io;
