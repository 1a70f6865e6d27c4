//! Structured grids over an interval, a rectangle or a disc, plus the
//! finite-difference stencils every other module differentiates with.
//!
//! Nodes are numbered grid slots first (row-major, axis 0 fastest) and then
//! the off-grid boundary points of a disc, where a grid line crosses the
//! circle. Every interior node owns two links per axis; on a disc a link may
//! end on such a boundary point with a shortened arm `θ·Δx`, which is what the
//! Shortley–Weller stencils consume.
//!
//! Rectangle corners are not C^{1,1}; all stencils stay well defined there, so
//! they are accepted without special treatment.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{PmcError, Result};

/// Smallest accepted number of grid nodes per axis.
pub const MIN_NODES: usize = 9;

/// Finite-difference weight list: `(node, weight)`.
pub type Stencil = Vec<(usize, f64)>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Interval,
    Rectangle,
    Disc,
}

impl Shape {
    pub fn as_str(&self) -> &'static str {
        match self {
            Shape::Interval => "interval",
            Shape::Rectangle => "rectangle",
            Shape::Disc => "disc",
        }
    }
}

/// Geometry and resolution of a domain before discretization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum DomainSpec {
    Interval { a: f64, b: f64, nodes: usize },
    Rectangle { x: [f64; 2], y: [f64; 2], nx: usize, ny: usize },
    /// `nodes` counts grid nodes across the diameter and must be odd so the
    /// grid is symmetric about the center.
    Disc { center: [f64; 2], radius: f64, nodes: usize },
}

impl DomainSpec {
    pub fn unit_interval(nodes: usize) -> Self {
        DomainSpec::Interval { a: 0.0, b: 1.0, nodes }
    }

    pub fn unit_square(nodes: usize) -> Self {
        DomainSpec::Rectangle { x: [0.0, 1.0], y: [0.0, 1.0], nx: nodes, ny: nodes }
    }

    pub fn square(half_width: f64, nodes: usize) -> Self {
        DomainSpec::Rectangle {
            x: [-half_width, half_width],
            y: [-half_width, half_width],
            nx: nodes,
            ny: nodes,
        }
    }

    /// Disc whose grid spacing is (as close as possible to) `dx`.
    pub fn disc_with_spacing(center: [f64; 2], radius: f64, dx: f64) -> Result<Self> {
        if !(dx > 0.0) || !(radius > 0.0) {
            return Err(PmcError::InvalidDomain("disc radius and spacing must be positive".into()));
        }
        let half = (radius / dx).round() as usize;
        Ok(DomainSpec::Disc { center, radius, nodes: 2 * half + 1 })
    }

    pub fn shape(&self) -> Shape {
        match self {
            DomainSpec::Interval { .. } => Shape::Interval,
            DomainSpec::Rectangle { .. } => Shape::Rectangle,
            DomainSpec::Disc { .. } => Shape::Disc,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DomainSpec::Interval { .. } => 1,
            _ => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeClass {
    Interior,
    Boundary,
    Exterior,
}

/// Neighbor along one axis direction and its distance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Link {
    pub node: usize,
    pub arm: f64,
}

#[derive(Clone, Debug)]
pub struct Node {
    pub pos: [f64; 2],
    pub class: NodeClass,
    /// Grid slot for grid nodes, `None` for off-grid disc boundary points.
    pub slot: Option<[usize; 2]>,
    /// `links[axis][0]` points in the negative direction, `[1]` positive.
    pub links: [[Option<Link>; 2]; 2],
}

/// Quadrature cell: corner nodes, measure inside the domain, centroid.
#[derive(Clone, Debug)]
pub struct Cell {
    pub corners: Vec<usize>,
    pub weight: f64,
    pub center: [f64; 2],
}

#[derive(Debug)]
pub struct Domain {
    spec: DomainSpec,
    dim: usize,
    counts: [usize; 2],
    spacing: [f64; 2],
    origin: [f64; 2],
    slots: Vec<Option<usize>>,
    nodes: Vec<Node>,
    interior: Vec<usize>,
    boundary: Vec<usize>,
    unknown: Vec<Option<usize>>,
    d1: Vec<[Stencil; 2]>,
    d2: Vec<[Stencil; 2]>,
    mixed: Vec<Stencil>,
    cells: Vec<Cell>,
}

/// Finite-difference weights at `z` for sample points `x`, derivative orders
/// `0..=m` (Fornberg's recursion). `c[k][j]` multiplies the value at `x[j]`.
pub fn fd_weights(z: f64, x: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

fn merge(stencil: &mut Stencil) {
    stencil.sort_by_key(|&(n, _)| n);
    let mut out: Stencil = Vec::with_capacity(stencil.len());
    for &(n, w) in stencil.iter() {
        match out.last_mut() {
            Some((m, acc)) if *m == n => *acc += w,
            _ => out.push((n, w)),
        }
    }
    out.retain(|&(_, w)| w != 0.0);
    *stencil = out;
}

fn combine(terms: &[(f64, &Stencil)]) -> Stencil {
    let mut out = Vec::new();
    for &(c, s) in terms {
        out.extend(s.iter().map(|&(n, w)| (n, c * w)));
    }
    merge(&mut out);
    out
}

impl Domain {
    pub fn build(spec: DomainSpec) -> Result<Arc<Domain>> {
        let mut dom = match &spec {
            DomainSpec::Interval { a, b, nodes } => {
                check_nodes(*nodes)?;
                if !(b - a > 0.0) || !a.is_finite() || !b.is_finite() {
                    return Err(PmcError::InvalidDomain("interval must have positive length".into()));
                }
                Self::grid(spec.clone(), 1, [*nodes, 1], [(b - a) / (*nodes - 1) as f64, 1.0], [*a, 0.0])
            }
            DomainSpec::Rectangle { x, y, nx, ny } => {
                check_nodes(*nx)?;
                check_nodes(*ny)?;
                let (lx, ly) = (x[1] - x[0], y[1] - y[0]);
                if !(lx > 0.0 && ly > 0.0) || !lx.is_finite() || !ly.is_finite() {
                    return Err(PmcError::InvalidDomain("rectangle must have positive extent".into()));
                }
                Self::grid(
                    spec.clone(),
                    2,
                    [*nx, *ny],
                    [lx / (*nx - 1) as f64, ly / (*ny - 1) as f64],
                    [x[0], y[0]],
                )
            }
            DomainSpec::Disc { center, radius, nodes } => {
                check_nodes(*nodes)?;
                if !(*radius > 0.0) || !radius.is_finite() {
                    return Err(PmcError::InvalidDomain("disc radius must be positive".into()));
                }
                if nodes % 2 == 0 {
                    return Err(PmcError::InvalidDomain(format!(
                        "disc needs an odd node count across the diameter, got {nodes}"
                    )));
                }
                Self::disc(spec.clone(), *center, *radius, *nodes)?
            }
        };
        dom.finish()?;
        Ok(Arc::new(dom))
    }

    fn empty(spec: DomainSpec, dim: usize, counts: [usize; 2], spacing: [f64; 2], origin: [f64; 2]) -> Self {
        Domain {
            spec,
            dim,
            counts,
            spacing,
            origin,
            slots: vec![None; counts[0] * counts[1]],
            nodes: Vec::new(),
            interior: Vec::new(),
            boundary: Vec::new(),
            unknown: Vec::new(),
            d1: Vec::new(),
            d2: Vec::new(),
            mixed: Vec::new(),
            cells: Vec::new(),
        }
    }

    fn slot_pos(&self, i: usize, j: usize) -> [f64; 2] {
        let y = if self.dim == 2 { self.origin[1] + j as f64 * self.spacing[1] } else { 0.0 };
        [self.origin[0] + i as f64 * self.spacing[0], y]
    }

    fn grid(spec: DomainSpec, dim: usize, counts: [usize; 2], spacing: [f64; 2], origin: [f64; 2]) -> Self {
        let mut d = Self::empty(spec, dim, counts, spacing, origin);
        let [nx, ny] = counts;
        for j in 0..ny {
            for i in 0..nx {
                let on_edge = i == 0 || i == nx - 1 || (dim == 2 && (j == 0 || j == ny - 1));
                let class = if on_edge { NodeClass::Boundary } else { NodeClass::Interior };
                let id = d.nodes.len();
                d.slots[j * nx + i] = Some(id);
                d.nodes.push(Node { pos: d.slot_pos(i, j), class, slot: Some([i, j]), links: [[None; 2]; 2] });
            }
        }
        d.link_grid_neighbors();
        d
    }

    fn disc(spec: DomainSpec, center: [f64; 2], radius: f64, nodes: usize) -> Result<Self> {
        let half = (nodes - 1) / 2;
        let h = radius / half as f64;
        if radius <= 2.0 * h {
            return Err(PmcError::InvalidDomain("disc radius must exceed two grid spacings".into()));
        }
        let origin = [center[0] - half as f64 * h, center[1] - half as f64 * h];
        let mut d = Self::empty(spec, 2, [nodes, nodes], [h, h], origin);
        let snap = 1e-10 * h;
        for j in 0..nodes {
            for i in 0..nodes {
                let p = d.slot_pos(i, j);
                let r = ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt();
                let class = if r < radius - snap {
                    NodeClass::Interior
                } else if r <= radius + snap {
                    NodeClass::Boundary
                } else {
                    continue;
                };
                let id = d.nodes.len();
                d.slots[j * nodes + i] = Some(id);
                d.nodes.push(Node { pos: p, class, slot: Some([i, j]), links: [[None; 2]; 2] });
            }
        }
        d.link_grid_neighbors();
        // Cut the links that leave the disc at the circle crossing.
        let grid_count = d.nodes.len();
        for id in 0..grid_count {
            if d.nodes[id].class != NodeClass::Interior {
                continue;
            }
            for axis in 0..2 {
                for side in 0..2 {
                    if d.nodes[id].links[axis][side].is_some() {
                        continue;
                    }
                    let sgn = if side == 1 { 1.0 } else { -1.0 };
                    let p = [d.nodes[id].pos[0] - center[0], d.nodes[id].pos[1] - center[1]];
                    let r2 = p[0] * p[0] + p[1] * p[1];
                    let t = -sgn * p[axis] + (p[axis] * p[axis] - r2 + radius * radius).sqrt();
                    let t = t.min(h);
                    let mut pos = d.nodes[id].pos;
                    pos[axis] += sgn * t;
                    let b = d.nodes.len();
                    let mut links = [[None; 2]; 2];
                    links[axis][1 - side] = Some(Link { node: id, arm: t });
                    d.nodes.push(Node { pos, class: NodeClass::Boundary, slot: None, links });
                    d.nodes[id].links[axis][side] = Some(Link { node: b, arm: t });
                }
            }
        }
        Ok(d)
    }

    fn link_grid_neighbors(&mut self) {
        let [nx, ny] = self.counts;
        for id in 0..self.nodes.len() {
            let Some([i, j]) = self.nodes[id].slot else { continue };
            for axis in 0..self.dim {
                for side in 0..2 {
                    let (ii, jj) = match (axis, side) {
                        (0, 0) if i > 0 => (i - 1, j),
                        (0, 1) if i + 1 < nx => (i + 1, j),
                        (1, 0) if j > 0 => (i, j - 1),
                        (1, 1) if j + 1 < ny => (i, j + 1),
                        _ => continue,
                    };
                    if let Some(n) = self.slots[jj * nx + ii] {
                        self.nodes[id].links[axis][side] = Some(Link { node: n, arm: self.spacing[axis] });
                    }
                }
            }
        }
    }

    fn finish(&mut self) -> Result<()> {
        self.unknown = vec![None; self.nodes.len()];
        for (id, node) in self.nodes.iter().enumerate() {
            match node.class {
                NodeClass::Interior => {
                    self.unknown[id] = Some(self.interior.len());
                    self.interior.push(id);
                }
                NodeClass::Boundary => self.boundary.push(id),
                NodeClass::Exterior => {}
            }
        }
        for &id in &self.interior {
            for axis in 0..self.dim {
                for side in 0..2 {
                    let Some(link) = self.nodes[id].links[axis][side] else {
                        return Err(PmcError::InvalidDomain(format!("interior node {id} lacks a neighbor")));
                    };
                    let frac = link.arm / self.spacing[axis];
                    if !(frac > 0.0 && frac <= 1.0 + 1e-12) {
                        return Err(PmcError::InvalidDomain(format!("boundary fraction {frac} at node {id}")));
                    }
                }
            }
        }
        if self.interior.is_empty() {
            return Err(PmcError::InvalidDomain("no interior nodes".into()));
        }
        self.build_stencils();
        self.build_cells();
        Ok(())
    }

    // ----------------------------------------------------------------- stencils

    /// Walk from `id` along `axis` in direction `side`, returning up to `count`
    /// further nodes with their signed offsets.
    fn chain(&self, id: usize, axis: usize, side: usize, count: usize) -> Vec<(usize, f64)> {
        let sgn = if side == 1 { 1.0 } else { -1.0 };
        let mut out = Vec::with_capacity(count);
        let mut cur = id;
        let mut offset = 0.0;
        for _ in 0..count {
            match self.nodes[cur].links[axis][side] {
                Some(l) => {
                    offset += sgn * l.arm;
                    out.push((l.node, offset));
                    cur = l.node;
                }
                None => break,
            }
        }
        out
    }

    /// Axis stencil from links; `None` if the node has no link on this axis.
    fn axis_stencil(&self, id: usize, axis: usize, order: usize) -> Option<Stencil> {
        let links = self.nodes[id].links[axis];
        let mut pts = vec![(id, 0.0)];
        match (links[0], links[1]) {
            (Some(m), Some(p)) => {
                pts.push((m.node, -m.arm));
                pts.push((p.node, p.arm));
            }
            (None, None) => return None,
            (lo, _) => {
                let side = if lo.is_some() { 0 } else { 1 };
                let want = order + 2;
                let chain = self.chain(id, axis, side, want - 1);
                if chain.len() < order {
                    return None;
                }
                pts.extend(chain);
            }
        }
        let xs: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let w = fd_weights(0.0, &xs, order);
        let mut s: Stencil = pts.iter().zip(&w[order]).map(|(p, &c)| (p.0, c)).collect();
        merge(&mut s);
        Some(s)
    }

    /// Inward chain `(q1, arm1, q2, arm2)` used to extrapolate derivatives to
    /// boundary nodes that have no link on the differentiated axis.
    fn inward_chain(&self, id: usize) -> Option<(usize, f64, Option<(usize, f64)>)> {
        for axis in 0..self.dim {
            for side in 0..2 {
                if let Some(l1) = self.nodes[id].links[axis][side] {
                    if self.nodes[l1.node].class != NodeClass::Interior {
                        continue;
                    }
                    let second = self.nodes[l1.node].links[axis][side]
                        .filter(|l2| self.nodes[l2.node].class == NodeClass::Interior)
                        .map(|l2| (l2.node, l2.arm));
                    return Some((l1.node, l1.arm, second));
                }
            }
        }
        None
    }

    fn extrapolate(&self, id: usize, table: &[Stencil]) -> Stencil {
        match self.inward_chain(id) {
            Some((q1, a1, Some((q2, a2)))) => {
                let r = a1 / a2;
                combine(&[(1.0 + r, &table[q1]), (-r, &table[q2])])
            }
            Some((q1, _, None)) => table[q1].clone(),
            None => Vec::new(),
        }
    }

    fn quadrant(&self, id: usize, s: [i64; 2]) -> Option<Stencil> {
        let [i, j] = self.nodes[id].slot?;
        let at = |di: i64, dj: i64| -> Option<usize> {
            let ii = i as i64 + di;
            let jj = j as i64 + dj;
            if ii < 0 || jj < 0 || ii >= self.counts[0] as i64 || jj >= self.counts[1] as i64 {
                return None;
            }
            self.slots[jj as usize * self.counts[0] + ii as usize]
        };
        let a = at(s[0], 0)?;
        let b = at(0, s[1])?;
        let c = at(s[0], s[1])?;
        let w = (s[0] * s[1]) as f64 / (self.spacing[0] * self.spacing[1]);
        Some(vec![(c, w), (a, -w), (b, -w), (id, w)])
    }

    fn quadrant_pair(&self, id: usize, pair: [[i64; 2]; 2]) -> Option<Stencil> {
        let q0 = self.quadrant(id, pair[0])?;
        let q1 = self.quadrant(id, pair[1])?;
        Some(combine(&[(0.5, &q0), (0.5, &q1)]))
    }

    const POSITIVE_PAIR: [[i64; 2]; 2] = [[1, 1], [-1, -1]];
    const NEGATIVE_PAIR: [[i64; 2]; 2] = [[1, -1], [-1, 1]];

    fn composed_mixed(&self, id: usize) -> Stencil {
        let mut out = Vec::new();
        for &(m, w) in &self.d1[id][0] {
            out.extend(self.d1[m][1].iter().map(|&(n, v)| (n, w * v)));
        }
        merge(&mut out);
        out
    }

    fn centered_mixed(&self, id: usize) -> Stencil {
        if let Some([i, j]) = self.nodes[id].slot {
            if self.nodes[id].class == NodeClass::Interior {
                let nx = self.counts[0];
                let diag = |di: i64, dj: i64| -> Option<usize> {
                    self.slots[(j as i64 + dj) as usize * nx + (i as i64 + di) as usize]
                };
                // Interior grid nodes always have in-range diagonal slots.
                if let (Some(pp), Some(mm), Some(pm), Some(mp)) = (diag(1, 1), diag(-1, -1), diag(1, -1), diag(-1, 1)) {
                    let w = 1.0 / (4.0 * self.spacing[0] * self.spacing[1]);
                    return vec![(pp, w), (mm, w), (pm, -w), (mp, -w)];
                }
                if let Some(s) = self
                    .quadrant_pair(id, Self::POSITIVE_PAIR)
                    .or_else(|| self.quadrant_pair(id, Self::NEGATIVE_PAIR))
                {
                    return s;
                }
                for s in [[1, 1], [-1, -1], [1, -1], [-1, 1]] {
                    if let Some(q) = self.quadrant(id, s) {
                        return q;
                    }
                }
            }
        }
        self.composed_mixed(id)
    }

    /// Mixed-derivative stencil for assembling `2·a12·∂₁₂`: picks the pair of
    /// quadrant differences whose diagonal weights share the sign of `a12`, so
    /// the cross term does not spoil the M-matrix sign pattern when
    /// `a_ii ≥ |a12|`. Falls back to [`Self::mixed`] where the pair is cut by
    /// the boundary.
    pub fn mixed_signed(&self, id: usize, a12: f64) -> Stencil {
        let pair = if a12 >= 0.0 { Self::POSITIVE_PAIR } else { Self::NEGATIVE_PAIR };
        if self.nodes[id].class == NodeClass::Interior {
            if let Some(s) = self.quadrant_pair(id, pair) {
                return s;
            }
        }
        self.mixed[id].clone()
    }

    fn build_stencils(&mut self) {
        let n = self.nodes.len();
        let mut d1: Vec<[Stencil; 2]> = vec![[Vec::new(), Vec::new()]; n];
        let mut d2: Vec<[Stencil; 2]> = vec![[Vec::new(), Vec::new()]; n];
        let mut missing = Vec::new();
        for id in 0..n {
            for axis in 0..self.dim {
                match (self.axis_stencil(id, axis, 1), self.axis_stencil(id, axis, 2)) {
                    (Some(a), Some(b)) => {
                        d1[id][axis] = a;
                        d2[id][axis] = b;
                    }
                    _ => missing.push((id, axis)),
                }
            }
        }
        for &(id, axis) in &missing {
            let t1: Vec<Stencil> = d1.iter().map(|s| s[axis].clone()).collect();
            let t2: Vec<Stencil> = d2.iter().map(|s| s[axis].clone()).collect();
            d1[id][axis] = self.extrapolate(id, &t1);
            d2[id][axis] = self.extrapolate(id, &t2);
        }
        self.d1 = d1;
        self.d2 = d2;
        if self.dim == 2 {
            let mut mixed: Vec<Stencil> = vec![Vec::new(); n];
            let mut deferred = Vec::new();
            for id in 0..n {
                let has_both_axes = (0..2).all(|a| self.nodes[id].links[a].iter().any(|l| l.is_some()));
                if self.nodes[id].class == NodeClass::Interior || has_both_axes {
                    mixed[id] = self.centered_mixed(id);
                } else {
                    deferred.push(id);
                }
            }
            for id in deferred {
                mixed[id] = self.extrapolate(id, &mixed);
            }
            self.mixed = mixed;
        }
    }

    // --------------------------------------------------------------- quadrature

    fn build_cells(&mut self) {
        let [nx, ny] = self.counts;
        let [hx, hy] = self.spacing;
        if self.dim == 1 {
            for i in 0..nx - 1 {
                let a = self.slots[i].unwrap();
                let b = self.slots[i + 1].unwrap();
                let center = [self.origin[0] + (i as f64 + 0.5) * hx, 0.0];
                self.cells.push(Cell { corners: vec![a, b], weight: hx, center });
            }
            return;
        }
        const SUB: usize = 8;
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let corners: Vec<usize> = [(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)]
                    .iter()
                    .filter_map(|&(a, b)| self.slots[b * nx + a])
                    .collect();
                if corners.is_empty() {
                    continue;
                }
                let lo = self.slot_pos(i, j);
                if corners.len() == 4 && self.spec.shape() != Shape::Disc {
                    let center = [lo[0] + 0.5 * hx, lo[1] + 0.5 * hy];
                    self.cells.push(Cell { corners, weight: hx * hy, center });
                    continue;
                }
                let mut inside = 0usize;
                let mut centroid = [0.0, 0.0];
                for a in 0..SUB {
                    for b in 0..SUB {
                        let p = [lo[0] + (a as f64 + 0.5) * hx / SUB as f64, lo[1] + (b as f64 + 0.5) * hy / SUB as f64];
                        if self.contains(&p) {
                            inside += 1;
                            centroid[0] += p[0];
                            centroid[1] += p[1];
                        }
                    }
                }
                if inside == 0 {
                    continue;
                }
                let frac = inside as f64 / (SUB * SUB) as f64;
                let center = if inside == SUB * SUB {
                    [lo[0] + 0.5 * hx, lo[1] + 0.5 * hy]
                } else {
                    [centroid[0] / inside as f64, centroid[1] / inside as f64]
                };
                self.cells.push(Cell { corners, weight: frac * hx * hy, center });
            }
        }
    }

    // ---------------------------------------------------------------- accessors

    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn shape(&self) -> Shape {
        self.spec.shape()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Grid nodes per axis (`[nx, 1]` for an interval).
    pub fn counts(&self) -> [usize; 2] {
        self.counts
    }

    pub fn spacing(&self) -> [f64; 2] {
        self.spacing
    }

    pub fn min_spacing(&self) -> f64 {
        if self.dim == 1 {
            self.spacing[0]
        } else {
            self.spacing[0].min(self.spacing[1])
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn pos(&self, id: usize) -> &[f64] {
        &self.nodes[id].pos[..self.dim]
    }

    pub fn class(&self, id: usize) -> NodeClass {
        self.nodes[id].class
    }

    /// Class of a grid slot, including exterior slots that carry no node.
    pub fn slot_class(&self, i: usize, j: usize) -> NodeClass {
        match self.slots.get(j * self.counts[0] + i).copied().flatten() {
            Some(id) => self.nodes[id].class,
            None => NodeClass::Exterior,
        }
    }

    pub fn slot_node(&self, i: usize, j: usize) -> Option<usize> {
        self.slots.get(j * self.counts[0] + i).copied().flatten()
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    /// Row index of an interior node in assembled systems.
    pub fn unknown_index(&self, id: usize) -> Option<usize> {
        self.unknown[id]
    }

    pub fn link(&self, id: usize, axis: usize, side: usize) -> Option<Link> {
        self.nodes[id].links[axis][side]
    }

    /// Fraction `θ ∈ (0,1]` of a grid step between an interior node and its
    /// neighbor (boundary point or grid node) in the given direction.
    pub fn boundary_frac(&self, id: usize, axis: usize, side: usize) -> Option<f64> {
        self.link(id, axis, side).map(|l| l.arm / self.spacing[axis])
    }

    pub fn d1(&self, id: usize, axis: usize) -> &Stencil {
        &self.d1[id][axis]
    }

    pub fn d2(&self, id: usize, axis: usize) -> &Stencil {
        &self.d2[id][axis]
    }

    pub fn mixed(&self, id: usize) -> &Stencil {
        &self.mixed[id]
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn measure(&self) -> f64 {
        self.cells.iter().map(|c| c.weight).sum()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match &self.spec {
            DomainSpec::Interval { a, b, .. } => x[0] >= *a && x[0] <= *b,
            DomainSpec::Rectangle { x: xr, y: yr, .. } => x[0] >= xr[0] && x[0] <= xr[1] && x[1] >= yr[0] && x[1] <= yr[1],
            DomainSpec::Disc { center, radius, .. } => {
                (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2) <= radius * radius
            }
        }
    }

    pub fn diameter(&self) -> f64 {
        match &self.spec {
            DomainSpec::Interval { a, b, .. } => b - a,
            DomainSpec::Rectangle { x, y, .. } => ((x[1] - x[0]).powi(2) + (y[1] - y[0]).powi(2)).sqrt(),
            DomainSpec::Disc { radius, .. } => 2.0 * radius,
        }
    }

    /// Piecewise (bi)linear interpolation of nodal values at `x`; `None` when
    /// the enclosing grid cell has a corner outside the domain.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> Option<f64> {
        let fi = (x[0] - self.origin[0]) / self.spacing[0];
        let i = (fi.floor().max(0.0) as usize).min(self.counts[0] - 2);
        let s = fi - i as f64;
        if self.dim == 1 {
            let a = self.slots[i]?;
            let b = self.slots[i + 1]?;
            return Some((1.0 - s) * values[a] + s * values[b]);
        }
        let fj = (x[1] - self.origin[1]) / self.spacing[1];
        let j = (fj.floor().max(0.0) as usize).min(self.counts[1] - 2);
        let t = fj - j as f64;
        let nx = self.counts[0];
        let v00 = values[self.slots[j * nx + i]?];
        let v10 = values[self.slots[j * nx + i + 1]?];
        let v01 = values[self.slots[(j + 1) * nx + i]?];
        let v11 = values[self.slots[(j + 1) * nx + i + 1]?];
        Some((1.0 - s) * (1.0 - t) * v00 + s * (1.0 - t) * v10 + (1.0 - s) * t * v01 + s * t * v11)
    }

    /// Bandwidth of the interior-node numbering under the axis links.
    pub fn bandwidth(&self) -> usize {
        let mut bw = 0;
        for &id in &self.interior {
            let r = self.unknown[id].unwrap();
            for s in self.d1[id].iter().chain(self.d2[id].iter()).chain(self.mixed.get(id)) {
                for &(n, _) in s {
                    if let Some(c) = self.unknown[n] {
                        bw = bw.max(r.abs_diff(c));
                    }
                }
            }
        }
        bw
    }
}

fn check_nodes(n: usize) -> Result<()> {
    if n < MIN_NODES {
        return Err(PmcError::InvalidDomain(format!("resolution {n} below the minimum of {MIN_NODES} nodes per axis")));
    }
    Ok(())
}

// -------------------------------------------------------------------- fields

/// Scalar samples on every non-exterior node of a [`Domain`].
#[derive(Clone, Debug)]
pub struct GridField {
    domain: Arc<Domain>,
    values: Vec<f64>,
    name: String,
}

impl GridField {
    pub fn from_values(domain: &Arc<Domain>, name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if values.len() != domain.node_count() {
            return Err(PmcError::InvalidArgument {
                name: "values",
                reason: format!("expected {} values, got {}", domain.node_count(), values.len()),
            });
        }
        if let Some(node) = values.iter().position(|v| !v.is_finite()) {
            return Err(PmcError::NonFinite { field: name, node });
        }
        Ok(GridField { domain: Arc::clone(domain), values, name })
    }

    pub fn from_fn(domain: &Arc<Domain>, name: impl Into<String>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..domain.node_count()).map(|id| f(domain.pos(id))).collect();
        Self::from_values(domain, name, values)
    }

    pub fn zeros(domain: &Arc<Domain>, name: impl Into<String>) -> Self {
        GridField { domain: Arc::clone(domain), values: vec![0.0; domain.node_count()], name: name.into() }
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn same_domain(&self, other: &GridField) -> bool {
        Arc::ptr_eq(&self.domain, &other.domain)
    }

    pub fn ensure_same_domain(&self, other: &GridField) -> Result<()> {
        if self.same_domain(other) {
            Ok(())
        } else {
            Err(PmcError::DomainMismatch)
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<GridField> {
        Self::from_values(&self.domain, self.name.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &GridField, f: impl Fn(f64, f64) -> f64) -> Result<GridField> {
        self.ensure_same_domain(other)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Self::from_values(&self.domain, self.name.clone(), values)
    }

    pub fn add(&self, other: &GridField) -> Result<GridField> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &GridField) -> Result<GridField> {
        self.zip_with(other, |a, b| a - b)
    }

    /// `a·self + b·other`.
    pub fn lincomb(&self, a: f64, other: &GridField, b: f64) -> Result<GridField> {
        self.zip_with(other, |x, y| a * x + b * y)
    }

    pub fn scale(&self, c: f64) -> Result<GridField> {
        self.map(|v| c * v)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_on(&self, ids: &[usize]) -> f64 {
        ids.iter().fold(0.0, |m, &id| m.max(self.values[id].abs()))
    }

    /// Apply a stencil at one node.
    pub fn apply(&self, stencil: &Stencil) -> f64 {
        stencil.iter().map(|&(n, w)| w * self.values[n]).sum()
    }

    /// Overwrite boundary values with those of `other`.
    pub fn set_boundary_from(&mut self, other: &GridField) -> Result<()> {
        self.ensure_same_domain(other)?;
        for &id in self.domain.boundary() {
            self.values[id] = other.values[id];
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let d = &self.domain;
        let [nx, ny] = d.counts();
        writeln!(
            out,
            "# field={} shape={} nx={} ny={} dx={}",
            self.name,
            d.shape().as_str(),
            nx,
            ny,
            d.spacing()[0]
        )?;
        for (id, v) in self.values.iter().enumerate() {
            let p = d.nodes[id].pos;
            writeln!(out, "{},{},{}", p[0], p[1], v)?;
        }
        Ok(())
    }

    /// Parse a field written by [`GridField::write_csv`], rebuilding its domain
    /// from the header and the node coordinates.
    pub fn read_csv<R: BufRead>(input: R) -> Result<GridField> {
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| PmcError::Parse("empty field file".into()))??;
        let header = header
            .strip_prefix('#')
            .ok_or_else(|| PmcError::Parse("missing `#` header line".into()))?;
        let mut keys = BTreeMap::new();
        for tok in header.split_whitespace() {
            let (k, v) = tok.split_once('=').ok_or_else(|| PmcError::Parse(format!("bad header token `{tok}`")))?;
            keys.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| keys.get(k).cloned().ok_or_else(|| PmcError::Parse(format!("header lacks `{k}`")));
        let name = get("field")?;
        let shape = get("shape")?;
        let nx: usize = get("nx")?.parse().map_err(|_| PmcError::Parse("bad nx".into()))?;
        let ny: usize = get("ny")?.parse().map_err(|_| PmcError::Parse("bad ny".into()))?;

        let mut rows = Vec::new();
        for (k, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| PmcError::Parse(format!("row {}: {e}", k + 2)))?;
            if parts.len() != 3 {
                return Err(PmcError::Parse(format!("row {} has {} columns", k + 2, parts.len())));
            }
            rows.push([parts[0], parts[1], parts[2]]);
        }
        if rows.is_empty() {
            return Err(PmcError::Parse("field file has no rows".into()));
        }
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for r in &rows {
            for a in 0..2 {
                lo[a] = lo[a].min(r[a]);
                hi[a] = hi[a].max(r[a]);
            }
        }
        let spec = match shape.as_str() {
            "interval" => DomainSpec::Interval { a: lo[0], b: hi[0], nodes: nx },
            "rectangle" => DomainSpec::Rectangle { x: [lo[0], hi[0]], y: [lo[1], hi[1]], nx, ny },
            "disc" => DomainSpec::Disc {
                center: [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])],
                radius: 0.5 * (hi[0] - lo[0]),
                nodes: nx,
            },
            other => return Err(PmcError::Parse(format!("unknown shape `{other}`"))),
        };
        let domain = Domain::build(spec)?;
        if rows.len() != domain.node_count() {
            return Err(PmcError::Parse(format!(
                "expected {} rows for this grid, found {}",
                domain.node_count(),
                rows.len()
            )));
        }
        let quantum = 1e-7 * domain.min_spacing();
        let key = |p: [f64; 2]| ((p[0] / quantum).round() as i64, (p[1] / quantum).round() as i64);
        let index: BTreeMap<(i64, i64), usize> =
            domain.nodes().iter().enumerate().map(|(id, n)| (key(n.pos), id)).collect();
        let mut values = vec![f64::NAN; domain.node_count()];
        for r in &rows {
            let id = *index
                .get(&key([r[0], r[1]]))
                .ok_or_else(|| PmcError::Parse(format!("no grid node at ({}, {})", r[0], r[1])))?;
            values[id] = r[2];
        }
        GridField::from_values(&domain, name, values)
    }
}

// ----------------------------------------------------------- differentiation

/// Second derivatives, stored once per unordered index pair.
#[derive(Clone, Debug)]
pub struct Hessian {
    dim: usize,
    comps: Vec<GridField>,
}

impl Hessian {
    pub fn get(&self, i: usize, j: usize) -> &GridField {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        match (self.dim, a, b) {
            (1, _, _) => &self.comps[0],
            (_, 0, 0) => &self.comps[0],
            (_, 0, 1) => &self.comps[1],
            _ => &self.comps[2],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Value of `∂ᵢⱼu` at a node.
    pub fn at(&self, id: usize, i: usize, j: usize) -> f64 {
        self.get(i, j).values()[id]
    }
}

fn stencil_field(u: &GridField, name: String, pick: impl Fn(usize) -> f64) -> Result<GridField> {
    let n = u.domain().node_count();
    GridField::from_values(u.domain(), name, (0..n).map(pick).collect())
}

pub fn gradient(u: &GridField) -> Result<Vec<GridField>> {
    let d = Arc::clone(u.domain());
    (0..d.dim())
        .map(|axis| stencil_field(u, format!("d{}_{}", axis + 1, u.name()), |id| u.apply(d.d1(id, axis))))
        .collect()
}

pub fn hessian(u: &GridField) -> Result<Hessian> {
    let d = Arc::clone(u.domain());
    let mut comps = vec![stencil_field(u, format!("d11_{}", u.name()), |id| u.apply(d.d2(id, 0)))?];
    if d.dim() == 2 {
        comps.push(stencil_field(u, format!("d12_{}", u.name()), |id| u.apply(d.mixed(id)))?);
        comps.push(stencil_field(u, format!("d22_{}", u.name()), |id| u.apply(d.d2(id, 1)))?);
    }
    Ok(Hessian { dim: d.dim(), comps })
}
