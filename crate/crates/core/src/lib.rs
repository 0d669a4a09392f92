//! Virtual network embedding toolkit.
//!
//! * [`netmodel`]: substrate/virtual graphs, constraints, plan pricing and
//!   resource bookkeeping.
//! * [`topogen`]: seeded multi-domain substrates, requests and Poisson
//!   arrival schedules.
//! * [`hfpa`]: the chaotic hybrid flower-pollination node mapper and a plain
//!   GA baseline.
//! * [`fitness`]: priced fitness, the rating network and its training data.
//! * [`linkmap`]: load-balanced least-weight link mapping.
//! * [`sim`]: discrete-event simulation and metrics.

pub mod fitness;
pub mod hfpa;
pub mod linkmap;
pub mod netmodel;
pub mod seeding;
pub mod sim;
pub mod topogen;

pub use fitness::{BackpropMode, FitnessNet};
pub use hfpa::{solve_nodes, SolverParams};
pub use linkmap::{map_links, LoadBalance};
pub use netmodel::{EmbeddingPlan, SubstrateNetwork, VirtualNetworkRequest};
pub use sim::{run_scenario, MetricsReport};
pub use topogen::ScenarioConfig;
