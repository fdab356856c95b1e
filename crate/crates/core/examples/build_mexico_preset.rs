//! Regenerates `data/mx_states_layout.csv` from the bundled state outlines.
//!
//! cargo run -p hexmort --example build_mexico_preset > crates/core/data/mx_states_layout.csv

use hexmort::cartogram::{self, centroids_of};
use hexmort::ingest;

const SEED: u64 = 2020;
const ITERATIONS: usize = 500;

fn main() -> hexmort::Result<()> {
    let geoms = ingest::parse_geometry(include_str!("../data/mx_states.geojson"))?;
    let centroids = centroids_of(&geoms);
    let adj = cartogram::derive_adjacency(&geoms, 1e-6);
    let lambda = cartogram::default_adjacency_weight(&centroids, 1.0);
    let seeded = cartogram::seed_layout(&centroids, 1.0)?;
    let refined = cartogram::refine_layout(&seeded, &centroids, &adj, lambda, ITERATIONS, SEED)?;
    let before = cartogram::layout_cost(&seeded, &centroids, &adj, lambda)?;
    let after = cartogram::layout_cost(&refined, &centroids, &adj, lambda)?;
    eprintln!(
        "{} regions, {} edges, cost {:.3} -> {:.3} (broken adjacencies {} -> {})",
        geoms.len(),
        adj.len(),
        before.total,
        after.total,
        before.adjacency_penalty,
        after.adjacency_penalty
    );
    cartogram::write_layout(std::io::stdout().lock(), &refined)
}
