//! Point-set geometry: grid quantization of UE positions and the Hausdorff
//! distance used to recognise previously seen position sets.
//!
//! Quantized sets store integer grid cells, so every coordinate is an exact
//! multiple of the grid size. Two UEs on the same cell stay as two entries in
//! the set (bitrate statistics are per UE); the Hausdorff distance treats the
//! set as a plain set, so duplicates do not change it.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        self.distance_squared(other).sqrt()
    }

    pub fn distance_squared(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// A state: the grid-quantized positions of all UEs present in one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct UePositionSet {
    grid: f64,
    cells: Vec<(i64, i64)>,
}

impl UePositionSet {
    pub fn from_cells(cells: Vec<(i64, i64)>, grid: f64) -> Result<Self> {
        check_grid(grid)?;
        if cells.is_empty() {
            return Err(Error::EmptyState);
        }
        Ok(Self { grid, cells })
    }

    pub fn grid(&self) -> f64 {
        self.grid
    }

    /// Grid cell indices, one per UE, in UE order.
    pub fn cells(&self) -> &[(i64, i64)] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = Point> + '_ {
        let g = self.grid;
        self.cells
            .iter()
            .map(move |&(i, j)| Point::new(i as f64 * g, j as f64 * g))
    }

    pub fn distinct_cells(&self) -> BTreeSet<(i64, i64)> {
        self.cells.iter().copied().collect()
    }

    /// Equality as sets of grid points (multiplicity and order ignored).
    pub fn same_set(&self, other: &UePositionSet) -> bool {
        self.grid == other.grid && self.distinct_cells() == other.distinct_cells()
    }
}

fn check_grid(grid: f64) -> Result<()> {
    if grid.is_finite() && grid > 0.0 {
        Ok(())
    } else {
        Err(Error::Contract(format!("grid size must be positive, got {grid}")))
    }
}

/// Half-way values round toward +∞.
fn round_half_up(v: f64) -> i64 {
    (v + 0.5).floor() as i64
}

/// Snaps each coordinate to the nearest multiple of `grid`.
pub fn quantize(raw: &[Point], grid: f64) -> Result<UePositionSet> {
    check_grid(grid)?;
    if raw.is_empty() {
        return Err(Error::EmptyState);
    }
    let cells = raw
        .iter()
        .map(|p| (round_half_up(p.x / grid), round_half_up(p.y / grid)))
        .collect();
    Ok(UePositionSet { grid, cells })
}

/// Largest nearest-neighbour gap from `from` into `to`.
fn directed(from: &[Point], to: &[Point]) -> f64 {
    let mut worst = 0.0_f64;
    for a in from {
        let nearest = to
            .iter()
            .map(|b| a.distance_squared(b))
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(nearest);
    }
    worst.sqrt()
}

/// Hausdorff distance between two raw point lists.
pub fn hausdorff_points(a: &[Point], b: &[Point]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(directed(a, b).max(directed(b, a)))
}

/// Hausdorff distance between two quantized position sets, in meters.
///
/// Duplicate cells do not affect either directed distance, so the multiset is
/// used as-is.
pub fn hausdorff(a: &UePositionSet, b: &UePositionSet) -> f64 {
    let pa: Vec<Point> = a.points().collect();
    let pb: Vec<Point> = b.points().collect();
    directed(&pa, &pb).max(directed(&pb, &pa))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(cells: &[(i64, i64)], g: f64) -> UePositionSet {
        UePositionSet::from_cells(cells.to_vec(), g).unwrap()
    }

    #[test]
    fn quantize_rounds_to_nearest_multiple() {
        let s = quantize(&[Point::new(1.2, 2.9)], 3.0).unwrap();
        assert_eq!(s.points().collect::<Vec<_>>(), vec![Point::new(0.0, 3.0)]);
    }

    #[test]
    fn quantize_ties_round_up() {
        let s = quantize(&[Point::new(4.5, 4.5)], 3.0).unwrap();
        assert_eq!(s.points().next().unwrap(), Point::new(6.0, 6.0));
        let s = quantize(&[Point::new(-4.5, -1.5)], 3.0).unwrap();
        assert_eq!(s.cells(), &[(-1, 0)]);
    }

    #[test]
    fn unit_grid_keeps_integer_coordinates() {
        let raw = vec![Point::new(3.0, -7.0), Point::new(0.0, 12.0)];
        let s = quantize(&raw, 1.0).unwrap();
        assert_eq!(s.points().collect::<Vec<_>>(), raw);
    }

    #[test]
    fn quantize_rejects_empty_and_bad_grid() {
        assert!(matches!(quantize(&[], 3.0), Err(Error::EmptyState)));
        assert!(quantize(&[Point::new(0.0, 0.0)], 0.0).is_err());
        assert!(quantize(&[Point::new(0.0, 0.0)], f64::NAN).is_err());
    }

    #[test]
    fn singleton_sets_reduce_to_euclid() {
        assert_eq!(hausdorff(&set(&[(0, 0)], 1.0), &set(&[(3, 4)], 1.0)), 5.0);
    }

    #[test]
    fn directed_distances_differ() {
        let a = set(&[(0, 0), (10, 0)], 1.0);
        let b = set(&[(0, 0), (2, 0)], 1.0);
        assert_eq!(hausdorff(&a, &b), 8.0);
        let pa: Vec<_> = a.points().collect();
        let pb: Vec<_> = b.points().collect();
        assert_eq!(directed(&pa, &pb), 8.0);
        assert_eq!(directed(&pb, &pa), 2.0);
    }

    #[test]
    fn identical_and_empty() {
        let a = set(&[(1, 2), (5, -3), (1, 2)], 3.0);
        assert_eq!(hausdorff(&a, &a), 0.0);
        assert!(matches!(hausdorff_points(&[], &[Point::new(0.0, 0.0)]), Err(Error::EmptySet)));
    }

    #[test]
    fn different_cardinalities() {
        let a = set(&[(0, 0)], 2.0);
        let b = set(&[(0, 0), (0, 1), (0, 2)], 2.0);
        assert_eq!(hausdorff(&a, &b), 4.0);
    }

    fn cells_strategy() -> impl Strategy<Value = Vec<(i64, i64)>> {
        prop::collection::vec((-20i64..20, -20i64..20), 1..8)
    }

    proptest! {
        #[test]
        fn symmetric(a in cells_strategy(), b in cells_strategy()) {
            let (a, b) = (set(&a, 3.0), set(&b, 3.0));
            prop_assert_eq!(hausdorff(&a, &b), hausdorff(&b, &a));
        }

        #[test]
        fn zero_iff_same_set(a in cells_strategy(), b in cells_strategy()) {
            let (a, b) = (set(&a, 3.0), set(&b, 3.0));
            prop_assert_eq!(hausdorff(&a, &b) == 0.0, a.same_set(&b));
        }

        #[test]
        fn quantize_idempotent(
            raw in prop::collection::vec((-500.0f64..500.0, -500.0f64..500.0), 1..20),
            g in 0.5f64..12.0,
        ) {
            let pts: Vec<Point> = raw.iter().map(|&(x, y)| Point::new(x, y)).collect();
            let once = quantize(&pts, g).unwrap();
            let twice = quantize(&once.points().collect::<Vec<_>>(), g).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
