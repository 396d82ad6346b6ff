//! Roadside base stations (RSUs hosting fog nodes) and vehicle association.

use serde::{Deserialize, Serialize};

use crate::mobility::{MobilityMode, MobilitySpec, Position};
use crate::protocols::BsId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InfraSpec {
    /// Distance between neighbouring base stations, metres.
    pub bs_spacing: f64,
    /// Radius within which a base station reaches vehicles, metres.
    pub bs_coverage: f64,
    /// Highway only: distance of the station row from the road edge.
    pub roadside_offset: f64,
}

impl Default for InfraSpec {
    fn default() -> Self {
        InfraSpec {
            bs_spacing: 2_000.0,
            bs_coverage: 1_000.0,
            roadside_offset: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaseStation {
    pub id: BsId,
    pub pos: Position,
}

fn spread(lo: f64, hi: f64, spacing: f64) -> Vec<f64> {
    let width = (hi - lo).max(0.0);
    let n = ((width / spacing).ceil() as usize).max(1);
    let step = width / n as f64;
    (0..n).map(|i| lo + (i as f64 + 0.5) * step).collect()
}

/// Places stations for the scenario geometry.
///
/// Highway: one roadside row, `bs_spacing` apart. Grid: a lattice snapped
/// to street intersections. Trace: a lattice over the trace bounding box.
pub fn place_base_stations(spec: &MobilitySpec, infra: &InfraSpec, bounds: (Position, Position)) -> Vec<BaseStation> {
    let coords: Vec<Position> = match spec.mode {
        MobilityMode::SyntheticHighway => spread(0.0, spec.road_length, infra.bs_spacing)
            .into_iter()
            .map(|x| Position::new(x, -infra.roadside_offset))
            .collect(),
        MobilityMode::SyntheticGrid => {
            let s = spec.grid.block_size;
            let snap = |v: f64| (v / s).round() * s;
            let axis = spread(0.0, spec.grid.extent(), infra.bs_spacing);
            let mut out = Vec::new();
            for &y in &axis {
                for &x in &axis {
                    out.push(Position::new(snap(x), snap(y)));
                }
            }
            out
        }
        MobilityMode::Trace => {
            let (lo, hi) = bounds;
            let mut out = Vec::new();
            for y in spread(lo.y, hi.y, infra.bs_spacing) {
                for x in spread(lo.x, hi.x, infra.bs_spacing) {
                    out.push(Position::new(x, y));
                }
            }
            out
        }
    };
    coords
        .into_iter()
        .enumerate()
        .map(|(i, pos)| BaseStation { id: i as BsId, pos })
        .collect()
}

/// Nearest station within `coverage`; ties go to the smaller id.
pub fn associate(pos: Position, stations: &[BaseStation], coverage: f64) -> Option<BsId> {
    let mut best: Option<(f64, BsId)> = None;
    for bs in stations {
        let d = bs.pos.distance_to(&pos);
        if d <= coverage && best.is_none_or(|(bd, bid)| d < bd || (d == bd && bs.id < bid)) {
            best = Some((d, bs.id));
        }
    }
    best.map(|(_, id)| id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mobility::GridSpec;

    #[test]
    fn highway_row_covers_the_road() {
        let spec = MobilitySpec::default();
        let infra = InfraSpec::default();
        let bs = place_base_stations(&spec, &infra, (Position::default(), Position::default()));
        let xs: Vec<f64> = bs.iter().map(|b| b.pos.x).collect();
        assert_eq!(xs, vec![1000.0, 3000.0, 5000.0, 7000.0, 9000.0]);
        assert!(bs.iter().all(|b| b.pos.y == -10.0));
        for x in [1.0, 1999.0, 5000.0, 9999.0] {
            assert!(associate(Position::new(x, 3.5), &bs, 1000.0).is_some(), "{x}");
        }
    }

    #[test]
    fn grid_stations_sit_on_intersections() {
        let spec = MobilitySpec {
            mode: MobilityMode::SyntheticGrid,
            grid: GridSpec {
                blocks: 10,
                block_size: 200.0,
            },
            ..MobilitySpec::default()
        };
        let infra = InfraSpec {
            bs_spacing: 1000.0,
            ..InfraSpec::default()
        };
        let bs = place_base_stations(&spec, &infra, (Position::default(), Position::default()));
        assert_eq!(bs.len(), 4);
        for b in &bs {
            assert_eq!(b.pos.x % 200.0, 0.0);
            assert_eq!(b.pos.y % 200.0, 0.0);
        }
    }

    #[test]
    fn association_ties_and_gaps() {
        let bs = vec![
            BaseStation {
                id: 0,
                pos: Position::new(0.0, 0.0),
            },
            BaseStation {
                id: 1,
                pos: Position::new(200.0, 0.0),
            },
        ];
        assert_eq!(associate(Position::new(100.0, 0.0), &bs, 500.0), Some(0));
        assert_eq!(associate(Position::new(150.0, 0.0), &bs, 500.0), Some(1));
        assert_eq!(associate(Position::new(900.0, 0.0), &bs, 500.0), None);
    }
}
