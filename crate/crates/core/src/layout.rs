//! Unrotated planar surface-code lattice.
//!
//! Qubits live on a `(2d-1) x (2d-1)` grid: data qubits on cells with even
//! coordinate sum, X stabilizers on (even row, odd column) cells and Z
//! stabilizers on (odd row, even column) cells. Distance `d` gives
//! `2d^2 - 2d + 1` data qubits and `2d(d-1)` stabilizers, of which `4(d-1)`
//! are weight-3 boundary checks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LayoutError {
    #[error("code distance must be >= 2, got {0}")]
    DistanceTooSmall(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum StabKind {
    X,
    Z,
}

impl StabKind {
    pub fn other(self) -> Self {
        match self {
            StabKind::X => StabKind::Z,
            StabKind::Z => StabKind::X,
        }
    }
}

/// One parity check: its kind, grid cell, and support in photon-visit order
/// (north, west, east, south neighbors, skipping the missing boundary one).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stabilizer {
    pub kind: StabKind,
    pub coord: (usize, usize),
    pub support: Vec<usize>,
}

impl Stabilizer {
    pub fn weight(&self) -> usize {
        self.support.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeLayout {
    pub d: usize,
    /// Grid coordinates of each data qubit, row-major.
    pub coords: Vec<(usize, usize)>,
    pub stabilizers: Vec<Stabilizer>,
    /// Support of the logical X operator (an X string down the west edge).
    pub logical_x: Vec<usize>,
    /// Support of the logical Z operator (a Z string along the north edge).
    pub logical_z: Vec<usize>,
}

/// Builds the distance-`d` planar code.
pub fn build_layout(d: usize) -> Result<CodeLayout, LayoutError> {
    if d < 2 {
        return Err(LayoutError::DistanceTooSmall(d));
    }
    let side = 2 * d - 1;
    let mut coords = Vec::new();
    let mut index = vec![usize::MAX; side * side];
    for r in 0..side {
        for c in 0..side {
            if (r + c) % 2 == 0 {
                index[r * side + c] = coords.len();
                coords.push((r, c));
            }
        }
    }

    let neighbor_order = |r: usize, c: usize| {
        let mut support = Vec::with_capacity(4);
        // North, west, east, south: the fixed photon-visit order.
        let candidates = [
            (r.checked_sub(1), Some(c)),
            (Some(r), c.checked_sub(1)),
            (Some(r), if c + 1 < side { Some(c + 1) } else { None }),
            (if r + 1 < side { Some(r + 1) } else { None }, Some(c)),
        ];
        for (rr, cc) in candidates {
            if let (Some(rr), Some(cc)) = (rr, cc) {
                support.push(index[rr * side + cc]);
            }
        }
        support
    };

    let mut stabilizers = Vec::new();
    for r in 0..side {
        for c in 0..side {
            let kind = match (r % 2, c % 2) {
                (0, 1) => StabKind::X,
                (1, 0) => StabKind::Z,
                _ => continue,
            };
            stabilizers.push(Stabilizer { kind, coord: (r, c), support: neighbor_order(r, c) });
        }
    }

    let logical_x = (0..side).step_by(2).map(|r| index[r * side]).collect();
    let logical_z = (0..side).step_by(2).map(|c| index[c]).collect();

    Ok(CodeLayout { d, coords, stabilizers, logical_x, logical_z })
}

impl CodeLayout {
    pub fn data_count(&self) -> usize {
        self.coords.len()
    }

    pub fn stabilizer_count(&self) -> usize {
        self.stabilizers.len()
    }

    /// Ids of stabilizers of one kind, in layout order.
    pub fn stabilizer_ids(&self, kind: StabKind) -> Vec<usize> {
        (0..self.stabilizers.len()).filter(|&s| self.stabilizers[s].kind == kind).collect()
    }

    /// The one or two stabilizers of `kind` whose support contains `qubit`.
    pub fn checks_on(&self, qubit: usize, kind: StabKind) -> Vec<usize> {
        (0..self.stabilizers.len())
            .filter(|&s| {
                self.stabilizers[s].kind == kind && self.stabilizers[s].support.contains(&qubit)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_match_closed_forms() {
        for d in 2..=8usize {
            let layout = build_layout(d).unwrap();
            assert_eq!(layout.data_count(), 2 * d * d - 2 * d + 1, "d={d}");
            assert_eq!(layout.stabilizer_count(), 2 * d * (d - 1), "d={d}");
            let weight3 = layout.stabilizers.iter().filter(|s| s.weight() == 3).count();
            let weight4 = layout.stabilizers.iter().filter(|s| s.weight() == 4).count();
            assert_eq!(weight3, 4 * (d - 1), "d={d}");
            assert_eq!(weight4, 2 * (d - 1) * (d - 2), "d={d}");
            assert_eq!(
                layout.stabilizer_ids(StabKind::X).len(),
                layout.stabilizer_ids(StabKind::Z).len()
            );
        }
    }

    #[test]
    fn small_distances_worked_examples() {
        let d2 = build_layout(2).unwrap();
        assert_eq!(d2.data_count(), 5);
        assert_eq!(d2.stabilizer_count(), 4);
        assert!(d2.stabilizers.iter().all(|s| s.weight() == 3));

        let d3 = build_layout(3).unwrap();
        assert_eq!(d3.data_count(), 13);
        assert_eq!(d3.stabilizer_count(), 12);
        assert_eq!(d3.stabilizers.iter().filter(|s| s.weight() == 4).count(), 4);
    }

    #[test]
    fn distance_below_two_is_rejected() {
        assert_eq!(build_layout(1).unwrap_err(), LayoutError::DistanceTooSmall(1));
    }

    /// Symplectic product over the data qubits: supports of different kinds
    /// must overlap on an even number of qubits.
    fn overlap(a: &[usize], b: &[usize]) -> usize {
        a.iter().filter(|q| b.contains(q)).count()
    }

    #[test]
    fn stabilizers_commute_pairwise() {
        for d in 2..=5usize {
            let layout = build_layout(d).unwrap();
            for (i, a) in layout.stabilizers.iter().enumerate() {
                for b in layout.stabilizers.iter().skip(i + 1) {
                    if a.kind != b.kind {
                        assert_eq!(
                            overlap(&a.support, &b.support) % 2,
                            0,
                            "d={d} anticommuting pair {:?} {:?}",
                            a.coord,
                            b.coord
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn logicals_commute_with_stabilizers_and_anticommute_with_each_other() {
        for d in 2..=5usize {
            let layout = build_layout(d).unwrap();
            for s in &layout.stabilizers {
                let logical = match s.kind {
                    // An X stabilizer must overlap the Z logical evenly.
                    StabKind::X => &layout.logical_z,
                    StabKind::Z => &layout.logical_x,
                };
                assert_eq!(overlap(&s.support, logical) % 2, 0, "d={d} {:?}", s.coord);
            }
            assert_eq!(overlap(&layout.logical_x, &layout.logical_z) % 2, 1, "d={d}");
            assert_eq!(layout.logical_x.len(), d);
            assert_eq!(layout.logical_z.len(), d);
        }
    }

    #[test]
    fn visit_order_is_north_west_east_south() {
        let layout = build_layout(3).unwrap();
        // Bulk Z stabilizer at (1, 2): neighbors (0,2), (1,1), (1,3), (2,2).
        let s = layout
            .stabilizers
            .iter()
            .find(|s| s.coord == (1, 2))
            .unwrap();
        let coords: Vec<_> = s.support.iter().map(|&q| layout.coords[q]).collect();
        assert_eq!(coords, vec![(0, 2), (1, 1), (1, 3), (2, 2)]);
    }

    #[test]
    fn every_qubit_touches_one_or_two_checks_of_each_kind() {
        let layout = build_layout(4).unwrap();
        for q in 0..layout.data_count() {
            for kind in [StabKind::X, StabKind::Z] {
                let n = layout.checks_on(q, kind).len();
                assert!((1..=2).contains(&n), "qubit {q} has {n} {kind:?} checks");
            }
        }
    }
}
