//! Structured quadrilateral (2D) and hexahedral (3D) grids.
//!
//! Elements and nodes are numbered lexicographically with `x` varying fastest,
//! then `y`, then `z`. Node `n` owns the global DOFs `n * dim .. n * dim + dim`.
//! Local element node order is counter-clockwise on the bottom face
//! `(i,j) (i+1,j) (i+1,j+1) (i,j+1)`, repeated on the top face in 3D.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in physical coordinates. Only the first `dim` entries are used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl BoxRegion {
    pub fn new(min: &[f64], max: &[f64]) -> Self {
        Self { min: min.to_vec(), max: max.to_vec() }
    }

    fn contains(&self, p: &[f64; 3], dim: usize) -> bool {
        (0..dim).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// Which elements of the design domain are excluded from optimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementRegion {
    Design,
    Void,
    Solid,
}

/// Geometric node predicate: every given axis constrains the node coordinate
/// to the closed interval `[lo, hi]`. A point is the degenerate interval `[v, v]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeSelector {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<[f64; 2]>,
}

impl NodeSelector {
    pub fn point(coords: &[f64]) -> Self {
        let mut s = Self::default();
        for (a, &c) in coords.iter().enumerate() {
            s.set(a, [c, c]);
        }
        s
    }

    /// All nodes on the plane (3D) or line (2D) `coord[axis] == value`.
    pub fn plane(axis: Axis, value: f64) -> Self {
        let mut s = Self::default();
        s.set(axis.index(), [value, value]);
        s
    }

    pub fn with(mut self, axis: Axis, lo: f64, hi: f64) -> Self {
        self.set(axis.index(), [lo, hi]);
        self
    }

    fn set(&mut self, axis: usize, range: [f64; 2]) {
        match axis {
            0 => self.x = Some(range),
            1 => self.y = Some(range),
            _ => self.z = Some(range),
        }
    }

    fn ranges(&self) -> [Option<[f64; 2]>; 3] {
        [self.x, self.y, self.z]
    }

    /// Node indices matched on `mesh`, in increasing order.
    pub fn resolve(&self, mesh: &Mesh) -> Result<Vec<usize>> {
        if mesh.dim() == 2 && self.z.is_some() {
            return Err(Error::Config(format!("node selector {self:?} constrains z on a 2D mesh")));
        }
        let tol = mesh.tolerance();
        let ranges = self.ranges();
        let nodes: Vec<usize> = (0..mesh.num_nodes())
            .filter(|&n| {
                let p = mesh.node_coords(n);
                ranges.iter().enumerate().all(|(a, r)| match r {
                    Some([lo, hi]) => p[a] >= lo - tol && p[a] <= hi + tol,
                    None => true,
                })
            })
            .collect();
        if nodes.is_empty() {
            return Err(Error::Config(format!("node selector {self:?} matches no node")));
        }
        Ok(nodes)
    }
}

/// Displacement constraint on the selected nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub nodes: NodeSelector,
    pub fix: Vec<Axis>,
}

/// Fixed external force. `magnitude` is the total force in newtons, shared
/// equally by the matched nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointLoad {
    pub nodes: NodeSelector,
    pub direction: Vec<f64>,
    pub magnitude: f64,
}

/// Roller on a symmetry plane: the displacement component normal to the face is fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryFace {
    pub axis: Axis,
    pub at: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundarySpec {
    #[serde(default)]
    pub supports: Vec<Support>,
    #[serde(default)]
    pub loads: Vec<PointLoad>,
    #[serde(default)]
    pub symmetry: Vec<SymmetryFace>,
}

/// Boundary conditions mapped onto global DOF numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedBoundary {
    /// Sorted, unique.
    pub fixed_dofs: Vec<usize>,
    /// External load `F_ext` (before the `kappa` scale) as sorted `(dof, value)` pairs.
    pub external_load: Vec<(usize, f64)>,
}

impl ResolvedBoundary {
    pub fn dense_external_load(&self, ndof: usize) -> Vec<f64> {
        let mut f = vec![0.0; ndof];
        for &(d, v) in &self.external_load {
            f[d] += v;
        }
        f
    }
}

impl BoundarySpec {
    pub fn resolve(&self, mesh: &Mesh) -> Result<ResolvedBoundary> {
        let dim = mesh.dim();
        let mut fixed = Vec::new();
        for s in &self.supports {
            if s.fix.is_empty() {
                return Err(Error::Config(format!("support {s:?} fixes no direction")));
            }
            for &axis in &s.fix {
                if axis.index() >= dim {
                    return Err(Error::Config(format!("support fixes {axis:?} on a {dim}D mesh")));
                }
            }
            for n in s.nodes.resolve(mesh)? {
                fixed.extend(s.fix.iter().map(|a| n * dim + a.index()));
            }
        }
        for face in &self.symmetry {
            let a = face.axis.index();
            if a >= dim {
                return Err(Error::Config(format!("symmetry face normal {:?} on a {dim}D mesh", face.axis)));
            }
            for n in NodeSelector::plane(face.axis, face.at).resolve(mesh)? {
                fixed.push(n * dim + a);
            }
        }
        fixed.sort_unstable();
        fixed.dedup();
        if fixed.is_empty() {
            return Err(Error::Config("boundary conditions fix no degree of freedom".into()));
        }

        let mut load: Vec<(usize, f64)> = Vec::new();
        for l in &self.loads {
            if l.direction.len() != dim {
                return Err(Error::Config(format!(
                    "load direction {:?} has wrong length for a {dim}D mesh",
                    l.direction
                )));
            }
            let norm = l.direction.iter().map(|c| c * c).sum::<f64>().sqrt();
            if !(norm > 0.0) || !l.magnitude.is_finite() {
                return Err(Error::Config(format!("invalid point load {l:?}")));
            }
            let nodes = l.nodes.resolve(mesh)?;
            let share = l.magnitude / nodes.len() as f64;
            for n in nodes {
                for (a, c) in l.direction.iter().enumerate() {
                    if *c != 0.0 {
                        load.push((n * dim + a, share * c / norm));
                    }
                }
            }
        }
        load.sort_by_key(|&(d, _)| d);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(load.len());
        for (d, v) in load {
            match merged.last_mut() {
                Some((ld, lv)) if *ld == d => *lv += v,
                _ => merged.push((d, v)),
            }
        }
        Ok(ResolvedBoundary { fixed_dofs: fixed, external_load: merged })
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    dim: usize,
    nel: [usize; 3],
    lengths: [f64; 3],
    thickness: f64,
    elem_volume: f64,
    regions: Vec<ElementRegion>,
    /// Element DOF map, `dofs_per_element()` entries per element.
    edofs: Vec<usize>,
}

impl Mesh {
    /// Builds a structured grid. `nel` and `lengths` hold one entry per axis;
    /// `thickness` is the out-of-plane thickness and only used in 2D.
    pub fn build(
        dim: usize,
        nel: &[usize],
        lengths: &[f64],
        thickness: f64,
        void: &[BoxRegion],
        solid: &[BoxRegion],
    ) -> Result<Mesh> {
        if dim != 2 && dim != 3 {
            return Err(Error::Config(format!("dimension must be 2 or 3, got {dim}")));
        }
        if nel.len() != dim || lengths.len() != dim {
            return Err(Error::Config(format!(
                "expected {dim} element counts and lengths, got {nel:?} and {lengths:?}"
            )));
        }
        if nel.contains(&0) {
            return Err(Error::Config(format!("element counts must be >= 1: {nel:?}")));
        }
        if lengths.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::Config(format!("lengths must be > 0: {lengths:?}")));
        }
        if dim == 2 && !(thickness > 0.0 && thickness.is_finite()) {
            return Err(Error::Config(format!("thickness must be > 0, got {thickness}")));
        }
        let mut n3 = [1usize; 3];
        let mut l3 = [0.0; 3];
        n3[..dim].copy_from_slice(nel);
        l3[..dim].copy_from_slice(lengths);
        let count = n3[0] * n3[1] * n3[2];
        let domain = if dim == 2 { l3[0] * l3[1] * thickness } else { l3[0] * l3[1] * l3[2] };

        let mut mesh = Mesh {
            dim,
            nel: n3,
            lengths: l3,
            thickness: if dim == 2 { thickness } else { 1.0 },
            elem_volume: domain / count as f64,
            regions: vec![ElementRegion::Design; count],
            edofs: Vec::new(),
        };
        mesh.edofs = mesh.build_dof_map();

        for (boxes, region) in [(void, ElementRegion::Void), (solid, ElementRegion::Solid)] {
            for b in boxes {
                mesh.mark_region(b, region)?;
            }
        }
        Ok(mesh)
    }

    fn mark_region(&mut self, b: &BoxRegion, region: ElementRegion) -> Result<()> {
        let dim = self.dim;
        if b.min.len() != dim || b.max.len() != dim {
            return Err(Error::Config(format!("non-design box {b:?} is not {dim}D")));
        }
        let tol = self.tolerance();
        for a in 0..dim {
            if b.min[a] > b.max[a] || b.min[a] < -tol || b.max[a] > self.lengths[a] + tol {
                return Err(Error::Config(format!(
                    "non-design box {b:?} lies outside the domain {:?}",
                    &self.lengths[..dim]
                )));
            }
        }
        let mut hit = 0;
        for e in 0..self.num_elements() {
            if b.contains(&self.centroid(e), dim) {
                if self.regions[e] != ElementRegion::Design && self.regions[e] != region {
                    return Err(Error::Config(format!("element {e} is in both a void and a solid non-design region")));
                }
                self.regions[e] = region;
                hit += 1;
            }
        }
        if hit == 0 {
            return Err(Error::Config(format!("non-design box {b:?} contains no element centroid")));
        }
        Ok(())
    }

    fn build_dof_map(&self) -> Vec<usize> {
        let dim = self.dim;
        let nen = self.nodes_per_element();
        let mut edofs = Vec::with_capacity(self.num_elements() * nen * dim);
        for e in 0..self.num_elements() {
            for n in self.element_nodes(e).iter().take(nen) {
                edofs.extend((0..dim).map(|d| n * dim + d));
            }
        }
        edofs
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Element counts per axis; the third entry is 1 in 2D.
    pub fn nel(&self) -> [usize; 3] {
        self.nel
    }

    /// Domain lengths per axis; the third entry is 0 in 2D.
    pub fn lengths(&self) -> [f64; 3] {
        self.lengths
    }

    pub fn thickness(&self) -> f64 {
        self.thickness
    }

    pub fn num_elements(&self) -> usize {
        self.nel[0] * self.nel[1] * self.nel[2]
    }

    /// Node counts per axis; the third entry is 1 in 2D.
    pub fn nodes_per_axis(&self) -> [usize; 3] {
        if self.dim == 2 {
            [self.nel[0] + 1, self.nel[1] + 1, 1]
        } else {
            [self.nel[0] + 1, self.nel[1] + 1, self.nel[2] + 1]
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes_per_axis().iter().product()
    }

    pub fn num_dofs(&self) -> usize {
        self.num_nodes() * self.dim
    }

    pub fn nodes_per_element(&self) -> usize {
        if self.dim == 2 {
            4
        } else {
            8
        }
    }

    pub fn dofs_per_element(&self) -> usize {
        self.nodes_per_element() * self.dim
    }

    pub fn elem_volume(&self) -> f64 {
        self.elem_volume
    }

    pub fn domain_volume(&self) -> f64 {
        self.elem_volume * self.num_elements() as f64
    }

    /// Element edge lengths; the third entry is 0 in 2D.
    pub fn element_size(&self) -> [f64; 3] {
        let mut h = [0.0; 3];
        for a in 0..self.dim {
            h[a] = self.lengths[a] / self.nel[a] as f64;
        }
        h
    }

    pub fn max_element_edge(&self) -> f64 {
        self.element_size().iter().cloned().fold(0.0, f64::max)
    }

    /// Absolute coordinate tolerance for geometric predicates.
    pub fn tolerance(&self) -> f64 {
        1e-9 * self.lengths.iter().cloned().fold(0.0, f64::max)
    }

    pub fn element_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nel[0] * (j + self.nel[1] * k)
    }

    pub fn element_ijk(&self, e: usize) -> [usize; 3] {
        let i = e % self.nel[0];
        let j = (e / self.nel[0]) % self.nel[1];
        let k = e / (self.nel[0] * self.nel[1]);
        [i, j, k]
    }

    pub fn node_index(&self, i: usize, j: usize, k: usize) -> usize {
        let np = self.nodes_per_axis();
        i + np[0] * (j + np[1] * k)
    }

    pub fn node_ijk(&self, n: usize) -> [usize; 3] {
        let np = self.nodes_per_axis();
        [n % np[0], (n / np[0]) % np[1], n / (np[0] * np[1])]
    }

    pub fn node_coords(&self, n: usize) -> [f64; 3] {
        let ijk = self.node_ijk(n);
        let h = self.element_size();
        [ijk[0] as f64 * h[0], ijk[1] as f64 * h[1], ijk[2] as f64 * h[2]]
    }

    pub fn centroid(&self, e: usize) -> [f64; 3] {
        let ijk = self.element_ijk(e);
        let h = self.element_size();
        let mut c = [0.0; 3];
        for a in 0..self.dim {
            c[a] = (ijk[a] as f64 + 0.5) * h[a];
        }
        c
    }

    /// Global node indices of element `e`; only the first `nodes_per_element()` are meaningful.
    pub fn element_nodes(&self, e: usize) -> [usize; 8] {
        let [i, j, k] = self.element_ijk(e);
        let mut nodes = [0; 8];
        let layers = if self.dim == 2 { 1 } else { 2 };
        for layer in 0..layers {
            let kk = k + layer;
            nodes[4 * layer] = self.node_index(i, j, kk);
            nodes[4 * layer + 1] = self.node_index(i + 1, j, kk);
            nodes[4 * layer + 2] = self.node_index(i + 1, j + 1, kk);
            nodes[4 * layer + 3] = self.node_index(i, j + 1, kk);
        }
        nodes
    }

    pub fn element_dofs(&self, e: usize) -> &[usize] {
        let n = self.dofs_per_element();
        &self.edofs[e * n..(e + 1) * n]
    }

    /// Elements sharing node `n`, each paired with the node's local index in
    /// that element. Ordered by increasing element index.
    pub fn node_elements(&self, n: usize) -> Vec<(usize, usize)> {
        let [i, j, k] = self.node_ijk(n);
        let mut out = Vec::with_capacity(8);
        // An offset of 1 selects the element on the low side of the node along
        // that axis, so the node sits on the element's high face.
        let koffsets: &[usize] = if self.dim == 2 { &[0] } else { &[1, 0] };
        for &ok in koffsets {
            if k < ok || (self.dim == 3 && k - ok >= self.nel[2]) {
                continue;
            }
            for oj in [1usize, 0] {
                if j < oj || j - oj >= self.nel[1] {
                    continue;
                }
                for oi in [1usize, 0] {
                    if i < oi || i - oi >= self.nel[0] {
                        continue;
                    }
                    let local_face = match (oi, oj) {
                        (0, 0) => 0,
                        (1, 0) => 1,
                        (1, 1) => 2,
                        _ => 3,
                    };
                    let local = local_face + 4 * ok;
                    out.push((self.element_index(i - oi, j - oj, k - ok), local));
                }
            }
        }
        out.sort_unstable();
        out
    }

    pub fn region(&self, e: usize) -> ElementRegion {
        self.regions[e]
    }

    pub fn regions(&self) -> &[ElementRegion] {
        &self.regions
    }

    pub fn nondesign_void(&self) -> Vec<usize> {
        self.elements_in(ElementRegion::Void)
    }

    pub fn nondesign_solid(&self) -> Vec<usize> {
        self.elements_in(ElementRegion::Solid)
    }

    pub fn design_elements(&self) -> Vec<usize> {
        self.elements_in(ElementRegion::Design)
    }

    fn elements_in(&self, r: ElementRegion) -> Vec<usize> {
        (0..self.num_elements()).filter(|&e| self.regions[e] == r).collect()
    }
}
