//! Local Descent APFL: client and server state machines, step-size
//! schedules, output averaging, and new-client personalization.

mod client;
mod engine;
mod personalize;
mod schedule;
mod server;

pub use client::{AlphaMode, ClientState};
pub use engine::{
    client_rng, draw_minibatch, evaluate, run_experiment, AlphaCadence, MetricsRow, Mode, RunConfig, RunResult,
    Simulation,
};
pub use personalize::{personalize_new_client, PersonalizeOptions};
pub use schedule::{LrSchedule, WeightedAverage};
pub use server::{aggregate, aggregate_and_broadcast, sample_clients, select_and_broadcast, ServerState};
