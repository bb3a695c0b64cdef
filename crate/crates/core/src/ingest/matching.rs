use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::geodata::{Block, Poi};
use super::haversine;
use super::stats::AmenityStatsTable;
use crate::error::{Error, Result};

/// One amenity POI attached to one block.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AmenityOccurrence {
    pub poi_id: String,
    pub amenity: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchDiagnostics {
    /// POIs without an amenity name.
    pub skipped_pois: usize,
    /// Amenity POIs farther than the merge distance from every block.
    pub unmatched_pois: usize,
    /// Total (block, POI) attachments.
    pub attachments: usize,
}

/// Amenity occurrences per block for one merge distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockAmenityIndex {
    pub merge_distance_m: f64,
    pub blocks: BTreeMap<String, Vec<AmenityOccurrence>>,
    pub diagnostics: MatchDiagnostics,
}

impl BlockAmenityIndex {
    pub fn occurrences(&self, block_id: &str) -> &[AmenityOccurrence] {
        self.blocks.get(block_id).map_or(&[], Vec::as_slice)
    }

    /// Amenity names in the index that the statistics table does not cover.
    pub fn unknown_amenities(&self, stats: &AmenityStatsTable) -> BTreeSet<String> {
        self.blocks
            .values()
            .flatten()
            .filter(|o| stats.get(&o.amenity).is_none())
            .map(|o| o.amenity.clone())
            .collect()
    }

    /// Amenity-name multiset of one block, counted per attachment.
    pub fn amenity_counts(&self, block_id: &str) -> BTreeMap<&str, usize> {
        let mut counts = BTreeMap::new();
        for o in self.occurrences(block_id) {
            *counts.entry(o.amenity.as_str()).or_insert(0) += 1;
        }
        counts
    }
}

/// Attaches each amenity POI to every block whose centroid lies within
/// `merge_distance_m` (inclusive).
pub fn match_amenities(
    blocks: &[Block],
    pois: &[Poi],
    merge_distance_m: f64,
) -> Result<BlockAmenityIndex> {
    if blocks.is_empty() {
        return Err(Error::EmptyInput("block list"));
    }
    if !(merge_distance_m > 0.0 && merge_distance_m.is_finite()) {
        return Err(Error::invalid(format!(
            "merge distance must be positive, got {merge_distance_m}"
        )));
    }

    let per_poi: Vec<Option<Vec<usize>>> = pois
        .par_iter()
        .map(|poi| {
            poi.amenity.as_ref()?;
            Some(
                blocks
                    .iter()
                    .enumerate()
                    .filter(|(_, b)| haversine(b.centroid, poi.position) <= merge_distance_m)
                    .map(|(i, _)| i)
                    .collect(),
            )
        })
        .collect();

    let mut index: BTreeMap<String, Vec<AmenityOccurrence>> = blocks
        .iter()
        .map(|b| (b.block_id.clone(), Vec::new()))
        .collect();
    let mut diagnostics = MatchDiagnostics::default();
    for (poi, hits) in pois.iter().zip(per_poi) {
        let Some(hits) = hits else {
            diagnostics.skipped_pois += 1;
            continue;
        };
        if hits.is_empty() {
            diagnostics.unmatched_pois += 1;
        }
        let amenity = poi.amenity.clone().expect("filtered above");
        for b in hits {
            diagnostics.attachments += 1;
            index
                .get_mut(&blocks[b].block_id)
                .expect("index seeded with every block")
                .push(AmenityOccurrence {
                    poi_id: poi.poi_id.clone(),
                    amenity: amenity.clone(),
                });
        }
    }
    for occ in index.values_mut() {
        occ.sort();
    }

    Ok(BlockAmenityIndex {
        merge_distance_m,
        blocks: index,
        diagnostics,
    })
}
