//! Nearest-neighbour distances through a uniform spatial hash.
//!
//! The hash only prunes candidates: every distance that is compared is
//! computed by the same expression as in the brute-force scan, so the
//! returned minima are bitwise identical to it.

use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L1,
    L2,
}

#[inline]
fn dist(a: &[f64; 3], b: &[f64; 3], norm: Norm) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    match norm {
        Norm::L1 => d[0].abs() + d[1].abs() + d[2].abs(),
        Norm::L2 => (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt(),
    }
}

/// For every query point, the distance to its nearest target (O(n m)).
pub fn nearest_distances_brute(queries: &[[f64; 3]], targets: &[[f64; 3]], norm: Norm) -> Vec<f64> {
    queries
        .iter()
        .map(|q| targets.iter().map(|t| dist(q, t, norm)).fold(f64::INFINITY, f64::min))
        .collect()
}

type Cell = [i64; 3];

struct Hash {
    size: f64,
    cells: HashMap<Cell, Vec<usize>>,
    lo: Cell,
    hi: Cell,
}

impl Hash {
    /// Cells are sized from the joint bounding box of targets and queries so
    /// the ring search never spans more than about `cbrt(n)` cells per axis.
    fn new(points: &[[f64; 3]], queries: &[[f64; 3]]) -> Self {
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        for p in points.iter().chain(queries) {
            for a in 0..3 {
                min[a] = min[a].min(p[a]);
                max[a] = max[a].max(p[a]);
            }
        }
        let extent = (0..3).map(|a| max[a] - min[a]).fold(0.0, f64::max);
        let per_axis = (points.len() as f64).cbrt().max(1.0);
        let size = if extent > 0.0 { extent / per_axis } else { 1.0 };
        let mut cells: HashMap<Cell, Vec<usize>> = HashMap::new();
        let mut lo = [i64::MAX; 3];
        let mut hi = [i64::MIN; 3];
        for (i, p) in points.iter().enumerate() {
            let c = cell_of(p, size);
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
            cells.entry(c).or_default().push(i);
        }
        Self { size, cells, lo, hi }
    }
}

fn cell_of(p: &[f64; 3], size: f64) -> Cell {
    [
        (p[0] / size).floor() as i64,
        (p[1] / size).floor() as i64,
        (p[2] / size).floor() as i64,
    ]
}

/// Same result as [`nearest_distances_brute`], bit for bit.
pub fn nearest_distances(queries: &[[f64; 3]], targets: &[[f64; 3]], norm: Norm) -> Vec<f64> {
    if targets.is_empty() {
        return vec![f64::INFINITY; queries.len()];
    }
    let hash = Hash::new(targets, queries);
    queries
        .iter()
        .map(|q| {
            let c = cell_of(q, hash.size);
            // Rings beyond this radius contain no cells at all.
            let reach = (0..3)
                .map(|a| (c[a] - hash.lo[a]).abs().max((hash.hi[a] - c[a]).abs()))
                .max()
                .unwrap_or(0);
            let mut best = f64::INFINITY;
            for r in 0..=reach {
                for dx in -r..=r {
                    for dy in -r..=r {
                        for dz in -r..=r {
                            if dx.abs().max(dy.abs()).max(dz.abs()) != r {
                                continue;
                            }
                            if let Some(ids) = hash.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                                for &i in ids {
                                    best = best.min(dist(q, &targets[i], norm));
                                }
                            }
                        }
                    }
                }
                // Any point in ring r + 1 or beyond is at least (r - 1) cells
                // away along some axis (one ring of slack for rounding at
                // cell boundaries); both norms dominate that axis gap.
                if r >= 1 && best <= (r - 1) as f64 * hash.size {
                    break;
                }
            }
            best
        })
        .collect()
}
