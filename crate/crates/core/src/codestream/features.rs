//! Header-level features (B and MB) of a codestream.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::wavelet::SubbandKind;

/// B and MB of one codeblock, plus where it sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockFeature {
    pub level: u8,
    pub band: u16,
    pub kind: SubbandKind,
    pub x0: u32,
    pub y0: u32,
    pub width: u32,
    pub height: u32,
    /// MB: significant bitplanes.
    pub bitplanes: u8,
    /// B: entropy-coded bytes.
    pub bytes: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubbandSummary {
    pub level: u8,
    pub band: u16,
    pub kind: SubbandKind,
    pub blocks: usize,
    pub bytes: u64,
    pub max_bitplanes: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: u8,
    pub blocks: usize,
    pub bytes: u64,
    pub max_bitplanes: u8,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeaderFeatures {
    /// In stream order.
    pub blocks: Vec<BlockFeature>,
}

impl HeaderFeatures {
    pub fn total_bytes(&self) -> u64 {
        self.blocks.iter().map(|b| b.bytes as u64).sum()
    }

    pub fn per_subband(&self) -> Vec<SubbandSummary> {
        let mut map: BTreeMap<(std::cmp::Reverse<u8>, u16, SubbandKind), SubbandSummary> =
            BTreeMap::new();
        for b in &self.blocks {
            let e = map
                .entry((std::cmp::Reverse(b.level), b.band, b.kind))
                .or_insert(SubbandSummary {
                    level: b.level,
                    band: b.band,
                    kind: b.kind,
                    blocks: 0,
                    bytes: 0,
                    max_bitplanes: 0,
                });
            e.blocks += 1;
            e.bytes += b.bytes as u64;
            e.max_bitplanes = e.max_bitplanes.max(b.bitplanes);
        }
        map.into_values().collect()
    }

    /// Coarsest level first.
    pub fn per_level(&self) -> Vec<LevelSummary> {
        let mut map: BTreeMap<std::cmp::Reverse<u8>, LevelSummary> = BTreeMap::new();
        for b in &self.blocks {
            let e = map.entry(std::cmp::Reverse(b.level)).or_insert(LevelSummary {
                level: b.level,
                blocks: 0,
                bytes: 0,
                max_bitplanes: 0,
            });
            e.blocks += 1;
            e.bytes += b.bytes as u64;
            e.max_bitplanes = e.max_bitplanes.max(b.bitplanes);
        }
        map.into_values().collect()
    }

    /// Plain-text table, one codeblock per row.
    pub fn to_table(&self) -> String {
        let mut s = String::from("level  band  subband      x0      y0     w     h  MB        B\n");
        for b in &self.blocks {
            s.push_str(&format!(
                "{:>5} {:>5}  {:>7} {:>7} {:>7} {:>5} {:>5} {:>3} {:>8}\n",
                b.level,
                b.band,
                b.kind.name(),
                b.x0,
                b.y0,
                b.width,
                b.height,
                b.bitplanes,
                b.bytes
            ));
        }
        for l in self.per_level() {
            s.push_str(&format!(
                "# level {}: {} blocks, {} bytes, max MB {}\n",
                l.level, l.blocks, l.bytes, l.max_bitplanes
            ));
        }
        s
    }
}
