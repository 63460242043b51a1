//! File formats, captioning runs, reports and the `persuade` command line.

pub mod captioning;
pub mod cli;
pub mod formats;
pub mod http;
pub mod manifest;
pub mod report;
