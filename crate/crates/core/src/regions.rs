//! Exact enumeration of activation domains as polyhedra in input space.
//!
//! Layers are processed in order. Every frontier entry carries a pattern
//! prefix, its polyhedron and the affine map `x ↦ A x + c` giving the
//! previous layer's output on that polyhedron. Each neuron of the next layer
//! splits an entry along one hyperplane; branches without interior are
//! pruned by a linear program.

use std::collections::{BTreeSet, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{forward, AffinePiece};
use crate::linalg::{dot, Matrix};
use crate::lp::{maximize, LpOutcome};
use crate::mask::{ActivationMatrix, ActivationPattern};
use crate::network::Network;

pub const MAX_INPUT_DIM: usize = 3;
pub const MAX_WIDTH: usize = 8;
pub const MAX_DEPTH: usize = 6;

/// Interior slack: a cell is kept iff it contains a ball of this radius.
pub const INTERIOR_EPS: f64 = 1e-9;
/// Samples whose smallest `|pre-activation|` is below this are boundary points.
pub const BOUNDARY_EPS: f64 = 1e-9;

/// `normal·x + offset > 0` when `strict`, `normal·x + offset ≤ 0` otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfSpace {
    pub normal: Vec<f64>,
    pub offset: f64,
    pub strict: bool,
}

impl HalfSpace {
    pub fn value(&self, x: &[f64]) -> f64 {
        dot(&self.normal, x) + self.offset
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let v = self.value(x);
        if self.strict {
            v > 0.0
        } else {
            v <= 0.0
        }
    }

    /// Signed depth of `x` inside the half-space, in units of `‖normal‖₂`.
    pub fn margin(&self, x: &[f64]) -> f64 {
        let n = dot(&self.normal, &self.normal).sqrt();
        let v = self.value(x);
        let s = if self.strict { v } else { -v };
        if n == 0.0 {
            s
        } else {
            s / n
        }
    }

    fn is_constant(&self) -> bool {
        self.normal.iter().all(|&a| a == 0.0)
    }
}

/// A certified interior point and the radius of a ball around it that
/// stays inside the polyhedron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interior {
    pub witness: Vec<f64>,
    pub slack: f64,
}

/// Conjunction of half-spaces intersected with `[0,1]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyhedron {
    pub dim: usize,
    pub constraints: Vec<HalfSpace>,
    pub interior: Option<Interior>,
}

impl Polyhedron {
    pub fn unit_cube(dim: usize) -> Self {
        Polyhedron {
            dim,
            constraints: Vec::new(),
            interior: Some(Interior {
                witness: vec![0.5; dim],
                slack: 0.5,
            }),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().all(|v| (0.0..=1.0).contains(v)) && self.constraints.iter().all(|h| h.contains(x))
    }

    /// Largest ball inside the polyhedron (a Chebyshev centre), found by
    ///
    /// maximize t s.t. â·x + β̂ ≥ t (strict), â·x + β̂ ≤ −t (non-strict),
    /// t ≤ x_i ≤ 1 − t, t ≥ 0,
    ///
    /// with every row scaled to a unit normal. Constant rows are decided
    /// directly. Returns `Ok(None)` when the optimum is below `eps`.
    pub fn certify_interior(&self, eps: f64) -> std::result::Result<Option<Interior>, String> {
        let d = self.dim;
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for h in &self.constraints {
            if h.is_constant() {
                let ok = if h.strict { h.offset > 0.0 } else { h.offset <= 0.0 };
                if !ok {
                    return Ok(None);
                }
                continue;
            }
            let n = dot(&h.normal, &h.normal).sqrt();
            let sign = if h.strict { -1.0 } else { 1.0 };
            let mut row: Vec<f64> = h.normal.iter().map(|a| sign * a / n).collect();
            row.push(1.0);
            rows.push(row);
            rhs.push(if h.strict { h.offset / n } else { -h.offset / n });
        }
        for i in 0..d {
            let mut upper = vec![0.0; d + 1];
            upper[i] = 1.0;
            upper[d] = 1.0;
            rows.push(upper);
            rhs.push(1.0);
            let mut lower = vec![0.0; d + 1];
            lower[i] = -1.0;
            lower[d] = 1.0;
            rows.push(lower);
            rhs.push(0.0);
        }
        let mut cost = vec![0.0; d + 1];
        cost[d] = 1.0;
        match maximize(&cost, &rows, &rhs).map_err(|e| e.0)? {
            LpOutcome::Infeasible => Ok(None),
            LpOutcome::Unbounded => Err("interior LP reported unbounded over a bounded box".into()),
            LpOutcome::Optimal { mut x, value } => {
                if value < eps {
                    return Ok(None);
                }
                x.truncate(d);
                Ok(Some(Interior {
                    witness: x,
                    slack: value,
                }))
            }
        }
    }
}

/// One activation domain with nonempty interior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionCell {
    pub pattern: ActivationPattern,
    pub polyhedron: Polyhedron,
    pub piece: AffinePiece,
    pub witness: Option<Vec<f64>>,
}

fn check_guardrails(net: &Network, depth: usize) -> Result<()> {
    if depth == 0 || depth > net.depth() {
        return Err(Error::InvalidArgument(format!(
            "depth {depth} outside 1..={}",
            net.depth()
        )));
    }
    if net.input_dim() > MAX_INPUT_DIM || net.width() > MAX_WIDTH || depth > MAX_DEPTH {
        return Err(Error::ResourceLimit(format!(
            "exact enumeration supports d ≤ {MAX_INPUT_DIM}, m ≤ {MAX_WIDTH}, depth ≤ {MAX_DEPTH}; got d = {}, m = {}, depth = {depth}",
            net.input_dim(),
            net.width()
        )));
    }
    Ok(())
}

#[derive(Clone)]
struct Frontier {
    masks: Vec<ActivationMatrix>,
    poly: Polyhedron,
    a: Matrix,
    c: Vec<f64>,
}

fn prefix_label(masks: &[ActivationMatrix], partial: &[bool]) -> String {
    let mut s: Vec<String> = masks.iter().map(|m| m.to_string()).collect();
    s.push(partial.iter().map(|&b| if b { '1' } else { '0' }).collect());
    s.join("|")
}

fn expand(node: &Frontier, net: &Network, layer_index: usize) -> Result<Vec<Frontier>> {
    let layer = net.layer(layer_index);
    let pre = layer.weight.matmul(&node.a);
    let off = layer.apply(&node.c);
    let m = net.width();

    // (active bits so far, polyhedron)
    let mut partial: Vec<(Vec<bool>, Polyhedron)> = vec![(Vec::with_capacity(m), node.poly.clone())];
    for (j, &o) in off.iter().enumerate().take(m) {
        let mut next = Vec::with_capacity(partial.len() * 2);
        for (bits, poly) in &partial {
            for strict in [true, false] {
                let h = HalfSpace {
                    normal: pre.row(j).to_vec(),
                    offset: o,
                    strict,
                };
                let mut child = poly.clone();
                child.constraints.push(h);
                let mut child_bits = bits.clone();
                child_bits.push(strict);
                child.interior = child
                    .certify_interior(INTERIOR_EPS)
                    .map_err(|reason| Error::Numerical {
                        prefix: prefix_label(&node.masks, &child_bits),
                        reason,
                    })?;
                if child.interior.is_some() {
                    next.push((child_bits, child));
                }
            }
        }
        partial = next;
    }

    Ok(partial
        .into_iter()
        .map(|(bits, poly)| {
            let support = bits.iter().enumerate().filter(|(_, &b)| b).map(|(j, _)| j);
            let mask = ActivationMatrix::from_support(support, m).expect("indices below width");
            let a = mask.apply_rows(&pre);
            let mut c = off.clone();
            mask.apply_vec(&mut c);
            let mut masks = node.masks.clone();
            masks.push(mask);
            Frontier { masks, poly, a, c }
        })
        .collect())
}

fn to_cells(frontier: &[Frontier]) -> Vec<RegionCell> {
    let mut cells: Vec<RegionCell> = frontier
        .iter()
        .map(|f| {
            let pattern = ActivationPattern::new(f.masks.clone()).expect("equal widths");
            RegionCell {
                piece: AffinePiece {
                    a: f.a.clone(),
                    c: f.c.clone(),
                    pattern: pattern.clone(),
                },
                witness: f.poly.interior.as_ref().map(|i| i.witness.clone()),
                polyhedron: f.poly.clone(),
                pattern,
            }
        })
        .collect();
    cells.sort_by(|a, b| a.pattern.cmp(&b.pattern));
    cells
}

/// Cells of every depth `1..=depth`, each level sorted by pattern.
pub fn enumerate_levels(net: &Network, depth: usize) -> Result<Vec<Vec<RegionCell>>> {
    check_guardrails(net, depth)?;
    let d = net.input_dim();
    let mut frontier = vec![Frontier {
        masks: Vec::new(),
        poly: Polyhedron::unit_cube(d),
        a: Matrix::eye(d, d),
        c: vec![0.0; d],
    }];
    let mut levels = Vec::with_capacity(depth);
    for k in 1..=depth {
        let expanded: Result<Vec<Vec<Frontier>>> = frontier.par_iter().map(|node| expand(node, net, k)).collect();
        frontier = expanded?.into_iter().flatten().collect();
        levels.push(to_cells(&frontier));
    }
    Ok(levels)
}

/// Activation domains of the first `depth` layers that have nonempty
/// interior, sorted by pattern.
pub fn enumerate_regions(net: &Network, depth: usize) -> Result<Vec<RegionCell>> {
    Ok(enumerate_levels(net, depth)?.pop().unwrap_or_default())
}

/// `Σ_{k=0}^{min(d,m)} C(m, k)`: the most one-layer regions with interior.
pub fn zaslavsky_bound(m: u32, d: u32) -> u128 {
    let mut total: u128 = 0;
    let mut binom: u128 = 1;
    for k in 0..=d.min(m) {
        total += binom;
        binom = binom * u128::from(m - k) / u128::from(k + 1);
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionReport {
    pub matched: usize,
    pub boundary: usize,
    pub orphaned: usize,
    /// Up to ten orphaned samples, for diagnosis.
    pub orphan_examples: Vec<Vec<f64>>,
}

impl PartitionReport {
    pub fn ok(&self) -> bool {
        self.orphaned == 0
    }
}

/// Classifies every sample by its forward pattern against the cell list.
pub fn verify_partition(cells: &[RegionCell], net: &Network, samples: &[Vec<f64>]) -> Result<PartitionReport> {
    let known: HashSet<&ActivationPattern> = cells.iter().map(|c| &c.pattern).collect();
    let depth = cells.first().map_or(net.depth(), |c| c.pattern.depth());
    let net = net.truncated(depth)?;
    let mut report = PartitionReport {
        matched: 0,
        boundary: 0,
        orphaned: 0,
        orphan_examples: Vec::new(),
    };
    for x in samples {
        let f = forward(&net, x)?;
        if f.min_margin < BOUNDARY_EPS {
            report.boundary += 1;
        } else if known.contains(&f.pattern) {
            report.matched += 1;
        } else {
            report.orphaned += 1;
            if report.orphan_examples.len() < 10 {
                report.orphan_examples.push(x.clone());
            }
        }
    }
    Ok(report)
}

/// Patterns seen on the lattice `{0, 1/(r−1), …, 1}^2` (or `^d`), skipping
/// boundary samples. Independent of the enumerator: uses forward passes only.
pub fn grid_census(net: &Network, resolution: usize) -> Result<BTreeSet<ActivationPattern>> {
    let d = net.input_dim();
    let total = resolution
        .checked_pow(d as u32)
        .ok_or_else(|| Error::ResourceLimit("census grid too large".into()))?;
    let step = if resolution > 1 {
        1.0 / (resolution - 1) as f64
    } else {
        0.0
    };
    let found: Result<Vec<Option<ActivationPattern>>> = (0..total)
        .into_par_iter()
        .map(|mut idx| {
            let mut x = vec![0.0; d];
            for v in x.iter_mut() {
                *v = (idx % resolution) as f64 * step;
                idx /= resolution;
            }
            let f = forward(net, &x)?;
            Ok((f.min_margin >= BOUNDARY_EPS).then_some(f.pattern))
        })
        .collect();
    Ok(found?.into_iter().flatten().collect())
}

/// Whether each depth-(k+1) cell refines exactly one depth-k cell: its
/// pattern prefix is a depth-k cell, its constraint list extends that
/// cell's, and its witness lies in the parent polyhedron.
pub fn check_nested(net: &Network) -> Result<bool> {
    let depth = net.depth();
    if depth < 2 {
        return Err(Error::InvalidArgument("nestedness needs depth ≥ 2".into()));
    }
    let levels = enumerate_levels(net, depth)?;
    Ok(levels_are_nested(&levels))
}

pub fn levels_are_nested(levels: &[Vec<RegionCell>]) -> bool {
    for pair in levels.windows(2) {
        let parents: HashMap<&ActivationPattern, &RegionCell> = pair[0].iter().map(|c| (&c.pattern, c)).collect();
        for cell in &pair[1] {
            let Ok(prefix) = cell.pattern.prefix(cell.pattern.depth() - 1) else {
                return false;
            };
            let Some(parent) = parents.get(&prefix) else {
                return false;
            };
            if !cell.polyhedron.constraints.starts_with(&parent.polyhedron.constraints) {
                return false;
            }
            if let Some(w) = &cell.witness {
                if !parent.polyhedron.contains(w) {
                    return false;
                }
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Layer;

    pub(crate) fn quadrant_net() -> Network {
        let layer = Layer::new(Matrix::identity(2), vec![-0.5, -0.5]).unwrap();
        Network::new(2, 2, vec![layer]).unwrap()
    }

    #[test]
    fn zaslavsky_examples() {
        assert_eq!(zaslavsky_bound(3, 2), 7);
        assert_eq!(zaslavsky_bound(1, 1), 2);
        assert_eq!(zaslavsky_bound(5, 5), 32);
        assert_eq!(zaslavsky_bound(2, 7), 4);
        assert_eq!(zaslavsky_bound(8, 3), 1 + 8 + 28 + 56);
    }

    #[test]
    fn quadrants() {
        let net = quadrant_net();
        let cells = enumerate_regions(&net, 1).unwrap();
        assert_eq!(cells.len(), 4);
        let supports: Vec<_> = cells.iter().map(|c| c.pattern.supports()).collect();
        assert_eq!(
            supports,
            vec![vec![vec![0, 1]], vec![vec![0]], vec![vec![1]], vec![vec![]]]
        );
        for cell in &cells {
            let w = cell.witness.as_ref().unwrap();
            assert_eq!(forward(&net, w).unwrap().pattern, cell.pattern);
            // Chebyshev centre of a quarter of the unit square.
            assert!((cell.polyhedron.interior.as_ref().unwrap().slack - 0.25).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_rows_give_one_cell() {
        let layer = Layer::new(Matrix::zeros(3, 2), vec![0.1, 0.2, 0.3]).unwrap();
        let net = Network::new(2, 3, vec![layer]).unwrap();
        let cells = enumerate_regions(&net, 1).unwrap();
        assert_eq!(cells.len(), 1);
        assert!(cells[0].pattern.last().is_identity());
    }

    #[test]
    fn degenerate_shared_hyperplane() {
        // Rows ℓ and −ℓ: the "both off" pattern is the line ℓ = 0 and has no interior.
        let w = Matrix::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        let net = Network::new(2, 2, vec![Layer::new(w, vec![-0.5, 0.5]).unwrap()]).unwrap();
        let cells = enumerate_regions(&net, 1).unwrap();
        let supports: Vec<_> = cells.iter().map(|c| c.pattern.supports()).collect();
        assert_eq!(supports, vec![vec![vec![0]], vec![vec![1]]]);
    }

    #[test]
    fn guardrails() {
        let layer = Layer::new(Matrix::zeros(9, 2), vec![0.0; 9]).unwrap();
        let wide = Network::new(2, 9, vec![layer]).unwrap();
        assert!(matches!(enumerate_regions(&wide, 1), Err(Error::ResourceLimit(_))));
        let deep = Network::identity(2, 7);
        assert!(matches!(enumerate_regions(&deep, 7), Err(Error::ResourceLimit(_))));
        assert!(enumerate_regions(&deep, 6).is_ok());
        assert!(matches!(enumerate_regions(&deep, 8), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn partition_boundary_sample() {
        let net = quadrant_net();
        let cells = enumerate_regions(&net, 1).unwrap();
        let r = verify_partition(&cells, &net, &[vec![0.5, 0.2], vec![0.7, 0.9]]).unwrap();
        assert_eq!((r.matched, r.boundary, r.orphaned), (1, 1, 0));
    }

    #[test]
    fn identity_network_is_one_nested_cell_per_level() {
        let net = Network::identity(2, 3);
        let levels = enumerate_levels(&net, 3).unwrap();
        assert!(levels.iter().all(|l| l.len() == 1));
        assert!(check_nested(&net).unwrap());
        let r = verify_partition(&levels[2], &net, &[vec![0.2, 0.4], vec![0.9, 0.1]]).unwrap();
        assert_eq!(r.matched, 2);
    }

    #[test]
    fn zero_mask_kills_downstream_hyperplanes() {
        // First layer is always off on the cube; second layer sees a constant.
        let l1 = Layer::new(Matrix::identity(2).scale(-1.0), vec![-0.1, -0.1]).unwrap();
        let l2 = Layer::new(Matrix::identity(2), vec![0.3, -0.3]).unwrap();
        let net = Network::new(2, 2, vec![l1, l2]).unwrap();
        let cells = enumerate_regions(&net, 2).unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].pattern.supports(), vec![vec![], vec![0]]);
        assert_eq!(cells[0].piece.a, Matrix::zeros(2, 2));
        assert_eq!(cells[0].piece.c, vec![0.3, 0.0]);
    }
}
