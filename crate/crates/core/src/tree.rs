// SPDX-License-Identifier: Apache-2.0

//! Finite subtrees of a non-Archimedean projective line spanned by discs.

use num_traits::Zero;

use crate::arith::Q;
use crate::error::{Error, Result};
use crate::fiber::{val_ge, FiberPoint, NaField, ProjQ};
use crate::spectrum::SpectrumPoint;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Radius {
    Finite(Q),
    /// A degenerate disc: a classical point.
    Infinite,
}

/// A disc in valuation coordinates with canonical center.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct KDisc {
    pub radius: Radius,
    pub center: Q,
}

impl KDisc {
    pub fn point(field: &NaField, a: &Q) -> KDisc {
        let c = match field.normalize_coord(&ProjQ::Finite(a.clone())) {
            ProjQ::Finite(c) => c,
            ProjQ::Infinity => panic!("point {a} is not integral for this field"),
        };
        KDisc { radius: Radius::Infinite, center: c }
    }

    pub fn disc(field: &NaField, a: &Q, rho: Q) -> KDisc {
        KDisc { center: field.canonical_center(a, &rho), radius: Radius::Finite(rho) }
    }

    pub fn gauss() -> KDisc {
        KDisc { center: Q::zero(), radius: Radius::Finite(Q::zero()) }
    }

    pub fn to_point(&self, base: SpectrumPoint) -> Result<FiberPoint> {
        match &self.radius {
            Radius::Infinite => FiberPoint::type1(base, ProjQ::Finite(self.center.clone())),
            Radius::Finite(r) => FiberPoint::disc(base, self.center.clone(), r.clone()),
        }
    }

    pub fn finite_radius(&self) -> Option<&Q> {
        match &self.radius {
            Radius::Finite(r) => Some(r),
            Radius::Infinite => None,
        }
    }
}

/// Whether `inner` is contained in `outer`.
pub fn contains(field: &NaField, outer: &KDisc, inner: &KDisc) -> bool {
    match (&outer.radius, &inner.radius) {
        (Radius::Infinite, Radius::Infinite) => outer.center == inner.center,
        (Radius::Infinite, Radius::Finite(_)) => false,
        (Radius::Finite(ro), ri) => {
            if let Radius::Finite(ri) = ri {
                if ri < ro {
                    return false;
                }
            }
            val_ge(&field.val(&(&inner.center - &outer.center)), ro)
        }
    }
}

/// Smallest disc containing both.
pub fn meet(field: &NaField, a: &KDisc, b: &KDisc) -> KDisc {
    let d = field.val(&(&a.center - &b.center));
    let mut r: Option<Q> = d;
    for rr in [&a.radius, &b.radius] {
        if let Radius::Finite(x) = rr {
            r = Some(match r {
                None => x.clone(),
                Some(y) => y.min(x.clone()),
            });
        }
    }
    match r {
        None => a.clone(),
        Some(r) => KDisc::disc(field, &a.center, r),
    }
}

/// Discs closed under meets, each with its parent (smallest strictly
/// larger member), rooted at the largest disc.
#[derive(Clone, Debug)]
pub struct DiscTree {
    pub field: NaField,
    /// Sorted by radius then center; the first entry is the root.
    pub nodes: Vec<KDisc>,
    pub parent: Vec<Option<usize>>,
}

impl DiscTree {
    /// Hull of the given discs (at least one).
    pub fn span(field: NaField, leaves: &[KDisc]) -> DiscTree {
        assert!(!leaves.is_empty());
        let mut nodes: Vec<KDisc> = leaves.to_vec();
        for i in 0..leaves.len() {
            for j in i + 1..leaves.len() {
                nodes.push(meet(&field, &leaves[i], &leaves[j]));
            }
        }
        nodes.sort();
        nodes.dedup();
        let mut parent = vec![None; nodes.len()];
        for (i, d) in nodes.iter().enumerate() {
            // Nodes are sorted by radius, so the last container found before
            // `i` with a strictly smaller radius is the smallest one.
            for j in (0..i).rev() {
                let dj = &nodes[j];
                if dj.radius < d.radius && contains(&field, dj, d) {
                    parent[i] = Some(j);
                    break;
                }
            }
        }
        debug_assert_eq!(parent.iter().filter(|p| p.is_none()).count(), 1);
        DiscTree { field, nodes, parent }
    }

    pub fn root(&self) -> usize {
        self.parent.iter().position(Option::is_none).unwrap()
    }

    pub fn children(&self, i: usize) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&j| self.parent[j] == Some(i)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EdgeLength {
    Finite(Q),
    Infinite,
}

/// Convex hull of the Gauss point and marked classical points.
#[derive(Clone, Debug)]
pub struct TreeSkeleton {
    pub root: FiberPoint,
    pub vertices: Vec<FiberPoint>,
    /// `(parent, child, length)` by vertex index.
    pub edges: Vec<(usize, usize, EdgeLength)>,
}

pub fn build_skeleton(base: SpectrumPoint, marked: &[ProjQ]) -> Result<TreeSkeleton> {
    let Some(field) = NaField::of(&base) else {
        return Err(Error::WrongFiber("skeletons are built on non-Archimedean fibers".into()));
    };
    let mut leaves = vec![KDisc::gauss()];
    let mut has_infinity = false;
    for m in marked {
        match field.normalize_coord(m) {
            ProjQ::Infinity => has_infinity = true,
            ProjQ::Finite(a) => leaves.push(KDisc::point(&field, &a)),
        }
    }
    let tree = DiscTree::span(field, &leaves);
    let mut vertices = Vec::with_capacity(tree.nodes.len() + 1);
    for d in &tree.nodes {
        vertices.push(d.to_point(base)?);
    }
    let mut edges = Vec::new();
    for (i, p) in tree.parent.iter().enumerate() {
        if let Some(p) = p {
            let len = match (&tree.nodes[*p].radius, &tree.nodes[i].radius) {
                (Radius::Finite(a), Radius::Finite(b)) => EdgeLength::Finite(b - a),
                _ => EdgeLength::Infinite,
            };
            edges.push((*p, i, len));
        }
    }
    if has_infinity {
        let top = tree.root();
        vertices.push(FiberPoint::type1(base, ProjQ::Infinity)?);
        edges.push((top, vertices.len() - 1, EdgeLength::Infinite));
    }
    let gauss_idx = tree.nodes.iter().position(|d| *d == KDisc::gauss()).unwrap();
    let root = vertices[gauss_idx].clone();
    Ok(TreeSkeleton { root, vertices, edges })
}
