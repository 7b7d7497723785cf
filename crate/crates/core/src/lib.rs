//! Controllable adversarial generators for tile-based game levels, trained
//! with and without negative examples.
//!
//! The crate is organised bottom-up:
//!
//! * [`levelgrid`] tile sets, grids, text and one-hot encodings
//! * [`reachability`] playability search and feature counting
//! * [`corpusgen`] labeled corpora and positive/negative partitions
//! * [`tensor`] a small reverse-mode autodiff engine with RMSprop
//! * [`ganmodels`] generator/critic networks, losses and the training loop
//! * [`experiments`] end-to-end experiment runner and reports

pub mod corpusgen;
pub mod experiments;
pub mod ganmodels;
pub mod levelgrid;
pub mod reachability;
pub mod seeding;
pub mod tensor;

pub use corpusgen::{CorpusEntry, CorpusSpec, LabelPair, ModelKind, Objective, Partition};
pub use levelgrid::{Game, Grid, OneHot, TileKind, TileSet};
pub use reachability::{MoveModel, PathResult, Subspace};
