//! Row-parallel global assembly on the structured grid.
//!
//! Every row of the reduced stiffness operator is owned by one task that sums
//! the contributions of the elements around its node in a fixed order, so the
//! result does not depend on the thread count.

use rayon::prelude::*;

use crate::mesh::Mesh;
use crate::sparse::CsrMatrix;

use super::kernel::ElementKernel;

pub(crate) const FIXED: u32 = u32::MAX;

/// Node to element adjacency plus the reduced-system DOF numbering.
#[derive(Debug, Clone)]
pub struct DofLayout {
    dim: usize,
    /// Reduced index of every global DOF, `FIXED` for eliminated ones.
    reduced: Vec<u32>,
    /// Global DOF of every reduced index.
    free: Vec<usize>,
    node_ptr: Vec<usize>,
    /// `(element, local node)` pairs, increasing element per node.
    node_elems: Vec<(u32, u8)>,
}

impl DofLayout {
    pub fn new(mesh: &Mesh, fixed_dofs: &[usize]) -> Self {
        let ndof = mesh.num_dofs();
        let mut reduced = vec![0u32; ndof];
        for &d in fixed_dofs {
            reduced[d] = FIXED;
        }
        let mut free = Vec::with_capacity(ndof - fixed_dofs.len());
        for (d, r) in reduced.iter_mut().enumerate() {
            if *r != FIXED {
                *r = free.len() as u32;
                free.push(d);
            }
        }
        let adjacency: Vec<Vec<(usize, usize)>> =
            (0..mesh.num_nodes()).into_par_iter().map(|n| mesh.node_elements(n)).collect();
        let mut node_ptr = Vec::with_capacity(mesh.num_nodes() + 1);
        node_ptr.push(0);
        let mut node_elems = Vec::with_capacity(adjacency.iter().map(Vec::len).sum());
        for list in adjacency {
            node_elems.extend(list.into_iter().map(|(e, l)| (e as u32, l as u8)));
            node_ptr.push(node_elems.len());
        }
        Self { dim: mesh.dim(), reduced, free, node_ptr, node_elems }
    }

    pub fn num_free(&self) -> usize {
        self.free.len()
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free
    }

    pub fn reduced_index(&self, global: usize) -> Option<usize> {
        let r = self.reduced[global];
        (r != FIXED).then_some(r as usize)
    }

    pub(crate) fn elements_of_node(&self, n: usize) -> &[(u32, u8)] {
        &self.node_elems[self.node_ptr[n]..self.node_ptr[n + 1]]
    }

    /// Restricts a full-length vector to the free DOFs.
    pub fn reduce(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&d| full[d]).collect()
    }

    /// Expands a reduced vector, with zeros at the fixed DOFs.
    pub fn expand(&self, reduced: &[f64], ndof: usize) -> Vec<f64> {
        let mut full = vec![0.0; ndof];
        for (&d, &v) in self.free.iter().zip(reduced) {
            full[d] = v;
        }
        full
    }

    /// Sparsity pattern of the reduced stiffness operator, zero values.
    pub fn stiffness_pattern(&self, mesh: &Mesh) -> CsrMatrix {
        let dim = self.dim;
        let rows: Vec<Vec<(u32, f64)>> = self
            .free
            .par_iter()
            .map(|&gd| {
                let mut cols: Vec<u32> = Vec::with_capacity(81);
                for &(e, _) in self.elements_of_node(gd / dim) {
                    for &c in mesh.element_dofs(e as usize) {
                        let r = self.reduced[c];
                        if r != FIXED {
                            cols.push(r);
                        }
                    }
                }
                cols.sort_unstable();
                cols.dedup();
                cols.into_iter().map(|c| (c, 0.0)).collect()
            })
            .collect();
        CsrMatrix::from_rows(self.free.len(), rows)
    }

    /// Overwrites `k` (built by `stiffness_pattern`) with `sum_e young[e] ke0`.
    pub fn assemble_stiffness(&self, mesh: &Mesh, kernel: &ElementKernel, young: &[f64], k: &mut CsrMatrix) {
        let dim = self.dim;
        let nd = kernel.ndof();
        let ke0 = kernel.ke0();
        let row_ptr = &k.row_ptr;
        let col_idx = &k.col_idx;
        let mut chunks: Vec<&mut [f64]> = Vec::with_capacity(self.free.len());
        let mut rest = k.values.as_mut_slice();
        for r in 0..self.free.len() {
            let (head, tail) = rest.split_at_mut(row_ptr[r + 1] - row_ptr[r]);
            chunks.push(head);
            rest = tail;
        }
        chunks.into_par_iter().enumerate().for_each(|(r, vals)| {
            vals.fill(0.0);
            let cols = &col_idx[row_ptr[r]..row_ptr[r + 1]];
            let gd = self.free[r];
            let (node, comp) = (gd / dim, gd % dim);
            for &(e, local) in self.elements_of_node(node) {
                let e = e as usize;
                let a = local as usize * dim + comp;
                let row = &ke0[a * nd..(a + 1) * nd];
                let ee = young[e];
                for (b, &c) in mesh.element_dofs(e).iter().enumerate() {
                    let rc = self.reduced[c];
                    if rc != FIXED {
                        let p = cols.binary_search(&rc).expect("column in pattern");
                        vals[p] += ee * row[b];
                    }
                }
            }
        });
    }

    /// Full-length lumped gravity load `sum_e gamma[e] V_e L_g`.
    pub fn assemble_gravity(&self, mesh: &Mesh, kernel: &ElementKernel, gamma: &[f64]) -> Vec<f64> {
        let dim = self.dim;
        let lg = kernel.lg();
        let ve = mesh.elem_volume();
        let mut f = vec![0.0; mesh.num_dofs()];
        f.par_chunks_mut(dim).enumerate().for_each(|(n, fnode)| {
            for &(e, local) in self.elements_of_node(n) {
                let w = gamma[e as usize] * ve;
                for (d, v) in fnode.iter_mut().enumerate() {
                    *v += w * lg[local as usize * dim + d];
                }
            }
        });
        f
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{Axis, BoundarySpec, NodeSelector, Support};

    fn dense_reference(mesh: &Mesh, kernel: &ElementKernel, young: &[f64]) -> Vec<Vec<f64>> {
        let n = mesh.num_dofs();
        let nd = kernel.ndof();
        let mut k = vec![vec![0.0; n]; n];
        for e in 0..mesh.num_elements() {
            let dofs = mesh.element_dofs(e);
            for a in 0..nd {
                for b in 0..nd {
                    k[dofs[a]][dofs[b]] += young[e] * kernel.ke0_at(a, b);
                }
            }
        }
        k
    }

    fn kernel_for(mesh: &Mesh) -> ElementKernel {
        ElementKernel::new(mesh.dim(), mesh.element_size(), 0.3, mesh.thickness(), -9.81).unwrap()
    }

    #[test]
    fn matches_dense_assembly() {
        for mesh in [
            Mesh::build(2, &[2, 1], &[2.0, 1.0], 0.01, &[], &[]).unwrap(),
            Mesh::build(2, &[3, 4], &[1.5, 1.0], 0.01, &[], &[]).unwrap(),
            Mesh::build(3, &[2, 2, 3], &[1.0, 1.0, 1.5], 1.0, &[], &[]).unwrap(),
        ] {
            let kernel = kernel_for(&mesh);
            let young: Vec<f64> = (0..mesh.num_elements()).map(|e| 1.0 + e as f64 * 0.37).collect();
            let layout = DofLayout::new(&mesh, &[]);
            let mut k = layout.stiffness_pattern(&mesh);
            layout.assemble_stiffness(&mesh, &kernel, &young, &mut k);
            let dense = dense_reference(&mesh, &kernel, &young);
            let got = k.to_dense();
            let scale = kernel.ke0_at(0, 0);
            for i in 0..mesh.num_dofs() {
                for j in 0..mesh.num_dofs() {
                    assert!((got[i][j] - dense[i][j]).abs() < 1e-12 * scale);
                }
            }
        }
    }

    #[test]
    fn shared_edge_sums_both_elements() {
        let mesh = Mesh::build(2, &[2, 1], &[2.0, 1.0], 0.01, &[], &[]).unwrap();
        let kernel = kernel_for(&mesh);
        let layout = DofLayout::new(&mesh, &[]);
        let mut k = layout.stiffness_pattern(&mesh);
        layout.assemble_stiffness(&mesh, &kernel, &[2.0, 5.0], &mut k);
        // node 1 is local node 1 of element 0 and local node 0 of element 1
        let expected = 2.0 * kernel.ke0_at(2, 2) + 5.0 * kernel.ke0_at(0, 0);
        assert!((k.get(2, 2) - expected).abs() < 1e-15 * expected);
    }

    #[test]
    fn single_element_is_scaled_kernel() {
        let mesh = Mesh::build(2, &[1, 1], &[1.0, 1.0], 1.0, &[], &[]).unwrap();
        let kernel = kernel_for(&mesh);
        let layout = DofLayout::new(&mesh, &[]);
        let mut k = layout.stiffness_pattern(&mesh);
        layout.assemble_stiffness(&mesh, &kernel, &[3.5], &mut k);
        // mesh node order 0,1,3,2 maps to local 0,1,2,3
        let local_to_node = [0, 1, 3, 2];
        for a in 0..8 {
            for b in 0..8 {
                let (i, j) = (local_to_node[a / 2] * 2 + a % 2, local_to_node[b / 2] * 2 + b % 2);
                assert!((k.get(i, j) - 3.5 * kernel.ke0_at(a, b)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn reduction_drops_fixed_rows() {
        let mesh = Mesh::build(2, &[3, 2], &[3.0, 2.0], 1.0, &[], &[]).unwrap();
        let spec = BoundarySpec {
            supports: vec![Support { nodes: NodeSelector::plane(Axis::X, 0.0), fix: vec![Axis::X, Axis::Y] }],
            ..Default::default()
        };
        let fixed = spec.resolve(&mesh).unwrap().fixed_dofs;
        let kernel = kernel_for(&mesh);
        let young = vec![1.0; 6];
        let layout = DofLayout::new(&mesh, &fixed);
        assert_eq!(layout.num_free(), mesh.num_dofs() - 6);
        let mut k = layout.stiffness_pattern(&mesh);
        layout.assemble_stiffness(&mesh, &kernel, &young, &mut k);
        let dense = dense_reference(&mesh, &kernel, &young);
        for (ri, &gi) in layout.free_dofs().iter().enumerate() {
            for (rj, &gj) in layout.free_dofs().iter().enumerate() {
                assert!((k.get(ri, rj) - dense[gi][gj]).abs() < 1e-14);
            }
        }
        let full = layout.expand(&vec![1.0; layout.num_free()], mesh.num_dofs());
        assert_eq!(full.iter().filter(|&&v| v == 0.0).count(), 6);
        assert_eq!(layout.reduce(&full), vec![1.0; layout.num_free()]);
    }

    #[test]
    fn thread_count_does_not_change_values() {
        let mesh = Mesh::build(3, &[5, 4, 3], &[1.0, 0.8, 0.6], 1.0, &[], &[]).unwrap();
        let kernel = kernel_for(&mesh);
        let young: Vec<f64> = (0..mesh.num_elements()).map(|e| ((e * 7919) % 101) as f64 / 100.0 + 1e-3).collect();
        let layout = DofLayout::new(&mesh, &[0, 1, 2]);
        let mut parallel = layout.stiffness_pattern(&mesh);
        layout.assemble_stiffness(&mesh, &kernel, &young, &mut parallel);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let mut serial = layout.stiffness_pattern(&mesh);
        pool.install(|| layout.assemble_stiffness(&mesh, &kernel, &young, &mut serial));
        assert_eq!(parallel, serial);
        let gp = layout.assemble_gravity(&mesh, &kernel, &young);
        let gs = pool.install(|| layout.assemble_gravity(&mesh, &kernel, &young));
        assert_eq!(gp, gs);
    }
}
