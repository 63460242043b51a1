//! Hierarchy-aware multi-label classification and evaluation for
//! persuasion-technique annotated memes.
//!
//! This crate is `no_std` (it needs `alloc`). Everything here is pure
//! computation: label posets and ancestor closure, hierarchical and flat
//! scoring with bootstrap intervals, caption-quality n-gram metrics, the
//! two-prompt captioning protocol over an abstract transport, and a hashed
//! n-gram one-vs-rest logistic baseline. File formats, HTTP and the command
//! line live in the `persuade` crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod baseline;
pub mod captioner;
pub mod corpus;
pub mod hierarchy;
pub mod metrics;
pub mod textmetrics;

pub use hierarchy::{parse_hierarchy, ExtendedLabelSet, LabelHierarchy, LabelId, LabelSet};
