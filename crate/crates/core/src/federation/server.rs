use crate::error::{Error, Result};
use crate::numkit::{mean, ParamVector, RngStream};

use super::client::ClientState;
use super::schedule::WeightedAverage;

#[derive(Debug, Clone)]
pub struct ServerState {
    pub w: ParamVector,
    /// Global iteration counter.
    pub t: usize,
    pub selection_rng: RngStream,
    /// Ascending client ids taking part in the current period.
    pub current_selection: Vec<usize>,
    pub out_acc_w: WeightedAverage,
}

impl ServerState {
    pub fn new(w: ParamVector, selection_rng: RngStream) -> Self {
        Self {
            w,
            t: 0,
            selection_rng,
            current_selection: Vec::new(),
            out_acc_w: WeightedAverage::new(),
        }
    }
}

/// Uniform `k`-subset of `0..n` without replacement, returned in ascending
/// order.
pub fn sample_clients(rng: &mut RngStream, k: usize, n: usize) -> Result<Vec<usize>> {
    if k == 0 || k > n {
        return Err(Error::invalid(format!("K={k} must be in 1..=n={n}")));
    }
    if k == n {
        return Ok((0..n).collect());
    }
    let mut picked = rand::seq::index::sample(rng, n, k).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Server model becomes the mean of the selected clients' `w_local`, summed in
/// ascending id order.
pub fn aggregate(server: &mut ServerState, clients: &[ClientState]) -> Result<()> {
    if server.current_selection.is_empty() {
        return Err(Error::invalid("aggregation over an empty selection"));
    }
    server.w = mean(server.current_selection.iter().map(|&i| &clients[i].w_local))?;
    Ok(())
}

/// Draws a fresh selection of `k` clients and copies the server model into each
/// newly selected client's `w_local`. Other clients are untouched.
pub fn select_and_broadcast(server: &mut ServerState, clients: &mut [ClientState], k: usize) -> Result<()> {
    server.current_selection = sample_clients(&mut server.selection_rng, k, clients.len())?;
    for &i in &server.current_selection {
        clients[i].w_local = server.w.clone();
    }
    Ok(())
}

/// Synchronization boundary: [`aggregate`] then [`select_and_broadcast`].
pub fn aggregate_and_broadcast(server: &mut ServerState, clients: &mut [ClientState], k: usize) -> Result<()> {
    aggregate(server, clients)?;
    select_and_broadcast(server, clients, k)
}
