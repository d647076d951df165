use rand::seq::SliceRandom;
use serde_json::json;

use crate::error::{Error, Result};
use crate::numkit::{Matrix, RngStream, StreamTag};

use super::{FederatedDataset, Provenance, Shard};

fn check_input(features: &Matrix, labels: &[usize]) -> Result<usize> {
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if features.rows() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: features.rows(),
            got: labels.len(),
        });
    }
    Ok(labels.iter().copied().max().unwrap_or(0) + 1)
}

fn build(
    features: &Matrix,
    labels: &[usize],
    assignment: Vec<Vec<usize>>,
    n_classes: usize,
    provenance: Provenance,
) -> Result<FederatedDataset> {
    let shards = assignment
        .into_iter()
        .enumerate()
        .map(|(i, rows)| {
            let y = rows.iter().map(|&r| labels[r]).collect();
            Shard::new(i, features.select_rows(&rows), y)
        })
        .collect::<Result<Vec<_>>>()?;
    FederatedDataset::new(shards, features.cols(), n_classes, provenance)
}

/// Shuffles rows by `seed` and deals them round-robin.
pub fn partition_iid(
    features: &Matrix,
    labels: &[usize],
    n_clients: usize,
    seed: u64,
) -> Result<FederatedDataset> {
    let n_classes = check_input(features, labels)?;
    if n_clients == 0 || n_clients > labels.len() {
        return Err(Error::invalid(format!(
            "n_clients={n_clients} must be in 1..={} (row count)",
            labels.len()
        )));
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(&mut RngStream::derive(seed, StreamTag::Partition, 0));
    let mut assignment = vec![Vec::new(); n_clients];
    for (k, row) in order.into_iter().enumerate() {
        assignment[k % n_clients].push(row);
    }
    let provenance = Provenance {
        generator: "partition_iid".into(),
        parameters: json!({ "n_clients": n_clients })
            .as_object()
            .cloned()
            .unwrap_or_default(),
        seed,
    };
    build(features, labels, assignment, n_classes, provenance)
}

/// Label-skew partition.
///
/// The `n_clients * classes_per_client` chunk slots are spread over the
/// classes as evenly as possible (lower labels take the remainder). Each
/// class's rows are shuffled and cut into its chunks with sizes differing by at
/// most one. Chunks sorted by label are dealt with stride `n_clients`, so
/// client `i` receives chunks `i, i + n, i + 2n, ...`; since no class owns more
/// than `n_clients` consecutive chunks, a client never receives two chunks of
/// the same label.
pub fn partition_by_label(
    features: &Matrix,
    labels: &[usize],
    classes_per_client: usize,
    n_clients: usize,
    seed: u64,
) -> Result<FederatedDataset> {
    let n_classes = check_input(features, labels)?;
    if n_clients == 0 || classes_per_client == 0 {
        return Err(Error::invalid(
            "n_clients and classes_per_client must be positive",
        ));
    }
    if classes_per_client > n_classes {
        return Err(Error::invalid(format!(
            "classes_per_client={classes_per_client} > n_classes={n_classes}"
        )));
    }
    let mut by_class = vec![Vec::new(); n_classes];
    for (r, &l) in labels.iter().enumerate() {
        by_class[l].push(r);
    }
    if let Some(empty) = by_class.iter().position(Vec::is_empty) {
        return Err(Error::invalid(format!("class {empty} has no rows")));
    }
    let slots = n_clients * classes_per_client;
    if slots < n_classes {
        return Err(Error::invalid(format!(
            "n_clients*classes_per_client={slots} cannot cover {n_classes} classes"
        )));
    }

    let mut rng = RngStream::derive(seed, StreamTag::Partition, 1);
    let mut chunks: Vec<Vec<usize>> = Vec::with_capacity(slots);
    for (class, rows) in by_class.iter_mut().enumerate() {
        let n_chunks = slots / n_classes + usize::from(class < slots % n_classes);
        if rows.len() < n_chunks {
            return Err(Error::invalid(format!(
                "class {class} has {} rows but needs {n_chunks} chunks",
                rows.len()
            )));
        }
        rows.shuffle(&mut rng);
        let base = rows.len() / n_chunks;
        let extra = rows.len() % n_chunks;
        let mut start = 0;
        for c in 0..n_chunks {
            let len = base + usize::from(c < extra);
            chunks.push(rows[start..start + len].to_vec());
            start += len;
        }
    }

    let mut assignment = vec![Vec::new(); n_clients];
    for (k, chunk) in chunks.into_iter().enumerate() {
        assignment[k % n_clients].extend(chunk);
    }
    let provenance = Provenance {
        generator: "partition_by_label".into(),
        parameters: json!({
            "n_clients": n_clients,
            "classes_per_client": classes_per_client,
        })
        .as_object()
        .cloned()
        .unwrap_or_default(),
        seed,
    };
    build(features, labels, assignment, n_classes, provenance)
}
