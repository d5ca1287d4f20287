//! Library side of the `joinery` command: catalog reports, scripts and the
//! loopback simulator.

pub mod report;
pub mod script;
pub mod simulate;

use joinery_core::session::SpawnEntry;
use joinery_core::{PartCatalog, PartKind};

/// Spawn used when no session config is given: two of every primitive.
pub fn default_spawn(catalog: &PartCatalog) -> Vec<SpawnEntry> {
    catalog
        .parts()
        .filter(|p| p.kind == PartKind::Primitive)
        .map(|p| SpawnEntry {
            part: p.id.clone(),
            count: 2,
        })
        .collect()
}
