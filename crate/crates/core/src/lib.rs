//! Interacting and non-interacting particle pairs in the quantum Chirikov
//! standard map.
//!
//! The crate propagates two-particle wave functions with the symmetrized
//! split-step map, tracks their Schmidt spectra, and runs the echo,
//! absorption and phase-space experiments built on top. Classical
//! standard-map oracles and the least-squares fits used to reduce the time
//! series live here as well.

pub mod absorb;
pub mod classical;
pub mod echo;
pub mod error;
pub mod fit;
pub mod husimi;
mod linalg;
pub mod output;
pub mod params;
pub mod presets;
pub mod qmap;
pub mod schmidt;
pub mod snapshot;
pub mod state;
pub mod transform;

pub use absorb::{
    AbsorptionMode, AbsorptionSpec, DecayRates, EvolutionOutcome, InitialStateSpec, StopRule,
    SurvivalSeries,
};
pub use echo::{EchoParams, EchoRun, EchoSweep};
pub use error::{Error, Result};
pub use fit::{FitModel, FitResult};
pub use husimi::{HusimiGrid, HusimiGridSpec};
pub use params::SimParams;
pub use presets::{preset, Experiment, Preset};
pub use qmap::{Direction, OneParticleMap, QuantumMap};
pub use schmidt::{RankTwoState, SchmidtDecomposition};
pub use state::{OneParticleState, Representation, TwoParticleState};
