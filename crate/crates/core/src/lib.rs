//! Planning toolkit for radial distribution feeders under coordinated
//! load-altering attacks.
//!
//! The crate models a feeder as an immutable [`NetworkCase`], solves its
//! steady state with a backward/forward sweep ([`powerflow::solve`]), ranks
//! bus criticality by voltage magnitude, replays step and oscillating attack
//! scenarios against chosen buses ([`attack`]), and sites three distributed
//! generation units with a particle swarm optimizer ([`dgopt`]).
//!
//! All case-modifying operations return new values, so cases and solutions
//! can be shared freely across parallel workers.

pub mod attack;
pub mod casegen;
pub mod dgopt;
pub mod net;
pub mod powerflow;

pub use attack::{
    AttackError, AttackSpec, DynamicAttackSpec, OscillationCoupling, StepAttackResult,
    TimeSample, TimeSeriesError, TimeSeriesResult, TimeSeriesSummary,
};
pub use dgopt::{DgoptError, ObjectiveWeights, OptimizationResult, PsoConfig};
pub use net::{
    Branch, Bus, BusId, CaseError, DgPlacement, DgUnit, NetworkCase, PerUnitCase, RadialTopology,
    DG_MAX_KW, DG_MIN_KW,
};
pub use powerflow::{
    CriticalityRanking, LimitReport, PowerFlowError, PowerFlowSolution, RankedBus, SolveOptions,
    VoltageBand,
};
