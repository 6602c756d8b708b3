//! Uniform spatial hash grid for fixed-radius neighbor queries.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::{Edge, EdgeKind, EdgeSet, Vec3};
use crate::math;

type Cell = (i64, i64, i64);

/// Points bucketed into cubic cells of side `cell_size`.
#[derive(Debug, Clone)]
pub struct SpatialHash<'a> {
    points: &'a [Vec3],
    cell_size: f64,
    cells: BTreeMap<Cell, Vec<u32>>,
}

impl<'a> SpatialHash<'a> {
    pub fn new(points: &'a [Vec3], cell_size: f64) -> Self {
        assert!(cell_size > 0.0, "cell size must be positive");
        let mut cells: BTreeMap<Cell, Vec<u32>> = BTreeMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(cell_of(*p, cell_size)).or_default().push(i as u32);
        }
        Self { points, cell_size, cells }
    }

    pub fn points(&self) -> &'a [Vec3] {
        self.points
    }

    /// Calls `f(index, distance_squared)` for every point with
    /// `|p - q| < radius`. `radius` must not exceed the cell size.
    pub fn for_each_within(&self, q: Vec3, radius: f64, mut f: impl FnMut(u32, f64)) {
        debug_assert!(radius <= self.cell_size * (1.0 + 1e-12));
        let r2 = radius * radius;
        let (cx, cy, cz) = cell_of(q, self.cell_size);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(bucket) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) else {
                        continue;
                    };
                    for &j in bucket {
                        let d2 = self.points[j as usize].distance_squared(q);
                        if d2 < r2 {
                            f(j, d2);
                        }
                    }
                }
            }
        }
    }

    /// Closest point strictly within `radius`, ties broken by lower index.
    pub fn nearest_within(&self, q: Vec3, radius: f64) -> Option<(u32, f64)> {
        let mut best: Option<(u32, f64)> = None;
        self.for_each_within(q, radius, |j, d2| match best {
            Some((bj, bd)) if bd < d2 || (bd == d2 && bj < j) => {}
            _ => best = Some((j, d2)),
        });
        best.map(|(j, d2)| (j, math::sqrt(d2)))
    }
}

fn cell_of(p: Vec3, h: f64) -> Cell {
    (
        math::floor(p.x / h) as i64,
        math::floor(p.y / h) as i64,
        math::floor(p.z / h) as i64,
    )
}

/// Which points act as senders for [`world_space_edges`].
#[derive(Debug, Clone, Copy)]
pub enum Senders<'a> {
    /// Senders are the receivers themselves; self-edges are skipped.
    Same,
    Other(&'a [Vec3]),
}

/// All directed `(receiver, sender)` pairs with `|x_r - x_s| < radius`,
/// excluding pairs present in `exclusions`. Sorted by `(receiver, sender)`.
pub fn world_space_edges(
    receivers: &[Vec3],
    senders: Senders<'_>,
    radius: f64,
    exclusions: &EdgeSet,
    kind: EdgeKind,
) -> EdgeSet {
    assert!(radius > 0.0, "world-edge radius must be positive");
    let (sender_points, same) = match senders {
        Senders::Same => (receivers, true),
        Senders::Other(s) => (s, false),
    };
    let grid = SpatialHash::new(sender_points, radius);
    let mut edges = Vec::new();
    for (i, &p) in receivers.iter().enumerate() {
        let i = i as u32;
        let start = edges.len();
        grid.for_each_within(p, radius, |j, _| {
            if same && i == j {
                return;
            }
            if exclusions.contains(i, j) {
                return;
            }
            edges.push(Edge { receiver: i, sender: j, kind });
        });
        edges[start..].sort_by_key(|e| e.sender);
    }
    EdgeSet { edges }
}

/// Index of the nearest point by brute force, ties broken by lower index.
pub fn nearest_point(points: &[Vec3], q: Vec3) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in points.iter().enumerate() {
        let d2 = p.distance_squared(q);
        if best.map_or(true, |(_, bd)| d2 < bd) {
            best = Some((i, d2));
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(points: &[Vec3], radius: f64) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for i in 0..points.len() {
            for j in 0..points.len() {
                if i != j {
                    let d = points[i] - points[j];
                    if math::sqrt(d.x * d.x + d.y * d.y + d.z * d.z) < radius {
                        out.push((i as u32, j as u32));
                    }
                }
            }
        }
        out
    }

    #[test]
    fn coincident_points_connect() {
        let pts = [Vec3::ZERO, Vec3::ZERO];
        let e = world_space_edges(&pts, Senders::Same, 0.1, &EdgeSet::new(), EdgeKind::World);
        assert_eq!(e.pairs().collect::<Vec<_>>(), alloc::vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn boundary_distance_is_excluded() {
        let pts = [Vec3::ZERO, Vec3::new(0.5, 0.0, 0.0)];
        let e = world_space_edges(&pts, Senders::Same, 0.5, &EdgeSet::new(), EdgeKind::World);
        assert!(e.is_empty());
    }

    #[test]
    fn exclusions_are_removed() {
        let pts = [Vec3::ZERO, Vec3::new(0.05, 0.0, 0.0)];
        let excl = EdgeSet::from_undirected(&[[0, 1]], EdgeKind::Mesh);
        let e = world_space_edges(&pts, Senders::Same, 0.1, &excl, EdgeKind::World);
        assert!(e.is_empty());
    }

    #[test]
    fn matches_pairwise_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let pts: Vec<Vec3> = (0..1000)
            .map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen()))
            .collect();
        let e = world_space_edges(&pts, Senders::Same, 0.1, &EdgeSet::new(), EdgeKind::World);
        assert_eq!(e.pairs().collect::<Vec<_>>(), brute_force(&pts, 0.1));
    }

    #[test]
    fn nearest_within_radius() {
        let pts = [Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.2, 0.0, 0.0)];
        let grid = SpatialHash::new(&pts, 0.5);
        let (j, d) = grid.nearest_within(Vec3::new(0.15, 0.0, 0.0), 0.5).unwrap();
        assert_eq!(j, 2);
        assert!((d - 0.05).abs() < 1e-12);
        assert!(grid.nearest_within(Vec3::new(5.0, 0.0, 0.0), 0.5).is_none());
    }
}
