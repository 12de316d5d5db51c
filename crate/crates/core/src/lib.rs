//! Average sample complexity and intricacy of finite covers for symbolic
//! dynamical systems over `Z` and `Z^2`.
//!
//! The crate is organised bottom-up:
//!
//! * [`group_model`]: Følner boxes, subset masks and systems of coefficients.
//! * [`symbolic_space`]: full shifts, nearest-neighbour shifts of finite type,
//!   their finite-window languages and sliding block codes.
//! * [`cover_algebra`]: cylinder covers, joins over subsets, refinement.
//! * [`subcover_counting`]: minimal subcover cardinalities via exact set cover.
//! * [`measure_entropy`]: Bernoulli/Markov measures, partition entropy and the
//!   cover entropy (infimum over finer partitions).
//! * [`engine`]: truncation series for every average-sample-complexity and
//!   intricacy quantity, plus the identity verification suite.
//!
//! All logarithms are natural logarithms.

pub mod cover_algebra;
pub mod engine;
pub mod error;
pub mod group_model;
pub mod measure_entropy;
pub mod parallel;
pub mod series;
pub mod subcover_counting;
pub mod symbolic_space;

pub use cover_algebra::{CylinderCover, JoinUniverse};
pub use engine::{Conditioning, Engine, EngineOptions, SubsetMode};

pub use error::{Error, Result};
pub use group_model::{CoefficientSystem, LatticeWindow, Point, SubsetMask};
pub use measure_entropy::ShiftMeasure;

pub use parallel::Execution;
pub use series::{SeriesRecord, TruncationSeries};

pub use symbolic_space::{Language, Pattern, ShiftSpace, SlidingBlockCode};
