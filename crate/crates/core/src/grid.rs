//! Uniform box grids in one and two dimensions with a staggered operator stack.
//!
//! Scalars live on nodes. Gradients and fluxes live on the interior faces
//! between neighbouring nodes and store the component normal to the face.
//! Boundary faces are not stored: their normal flux is zero, which is the
//! homogeneous Neumann condition. Node volumes are trapezoidal weights
//! (half cells on the boundary), so that
//!
//! * `Σ_i w_i div(v)_i = 0` for every face field `v` (discrete divergence theorem), and
//! * `Σ_i w_i f_i div(v)_i = −Σ_f V_f grad(f)_f v_f` (summation by parts).

use serde::{Deserialize, Serialize};

use crate::error::{CryoError, Result};

/// Geometry of one interior face: the two nodes it joins (`lo` → `hi` is the
/// positive axis direction), the node spacing across it and its dual volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Face {
    pub lo: usize,
    pub hi: usize,
    pub axis: usize,
    pub spacing: f64,
    pub volume: f64,
}

impl Face {
    /// `V_f / h_f²`, the weight of this face in the stiffness matrix.
    #[inline]
    pub fn conductance(&self) -> f64 {
        self.volume / (self.spacing * self.spacing)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub lengths: Vec<f64>,
    pub nodes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    lengths: [f64; 2],
    nodes: [usize; 2],
    spacing: [f64; 2],
    weights: Vec<f64>,
    faces: Vec<Face>,
    /// CSR adjacency: for node `i`, `adjacency[offsets[i]..offsets[i+1]]`
    /// holds `(neighbour, face index)`.
    offsets: Vec<usize>,
    adjacency: Vec<(usize, usize)>,
}

/// Nodal scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub values: Vec<f64>,
}

/// Face-normal vector field, one value per interior face in [`Grid::faces`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        assert_eq!(self.len(), other.len());
        Field::new(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::new(self.values.iter().map(|&v| f(v)).collect())
    }
}

impl VectorField {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn trapezoid_weight(i: usize, n: usize, h: f64) -> f64 {
    if n == 1 {
        1.0
    } else if i == 0 || i + 1 == n {
        0.5 * h
    } else {
        h
    }
}

impl Grid {
    pub fn from_spec(spec: &GridSpec) -> Result<Self> {
        match spec.dim {
            1 => {
                if spec.lengths.len() != 1 || spec.nodes.len() != 1 {
                    return Err(CryoError::invalid(
                        "grid.lengths and grid.nodes need exactly one entry for dim = 1",
                    ));
                }
                Grid::new_1d(spec.lengths[0], spec.nodes[0])
            }
            2 => {
                if spec.lengths.len() != 2 || spec.nodes.len() != 2 {
                    return Err(CryoError::invalid(
                        "grid.lengths and grid.nodes need exactly two entries for dim = 2",
                    ));
                }
                Grid::new_2d(
                    [spec.lengths[0], spec.lengths[1]],
                    [spec.nodes[0], spec.nodes[1]],
                )
            }
            d => Err(CryoError::invalid(format!(
                "grid.dim = {d} is not supported (only 1 or 2)"
            ))),
        }
    }

    pub fn new_1d(length: f64, nodes: usize) -> Result<Self> {
        Self::build(1, [length, 0.0], [nodes, 1])
    }

    pub fn new_2d(lengths: [f64; 2], nodes: [usize; 2]) -> Result<Self> {
        Self::build(2, lengths, nodes)
    }

    fn build(dim: usize, lengths: [f64; 2], nodes: [usize; 2]) -> Result<Self> {
        for axis in 0..dim {
            if nodes[axis] < 3 {
                return Err(CryoError::invalid(format!(
                    "grid needs at least 3 nodes per axis, axis {axis} has {}",
                    nodes[axis]
                )));
            }
            if !(lengths[axis] > 0.0 && lengths[axis].is_finite()) {
                return Err(CryoError::invalid(format!(
                    "grid length on axis {axis} must be positive, got {}",
                    lengths[axis]
                )));
            }
        }
        let mut spacing = [1.0; 2];
        for axis in 0..dim {
            spacing[axis] = lengths[axis] / (nodes[axis] - 1) as f64;
        }
        let [nx, ny] = nodes;
        let wx: Vec<f64> = (0..nx).map(|i| trapezoid_weight(i, nx, spacing[0])).collect();
        let wy: Vec<f64> = (0..ny).map(|j| trapezoid_weight(j, ny, spacing[1])).collect();

        let mut weights = Vec::with_capacity(nx * ny);
        for wj in &wy {
            for wi in &wx {
                weights.push(wi * wj);
            }
        }

        let mut faces = Vec::new();
        for (j, wj) in wy.iter().enumerate() {
            for i in 0..nx - 1 {
                let lo = j * nx + i;
                faces.push(Face {
                    lo,
                    hi: lo + 1,
                    axis: 0,
                    spacing: spacing[0],
                    volume: spacing[0] * wj,
                });
            }
        }
        if dim == 2 {
            for j in 0..ny - 1 {
                for (i, wi) in wx.iter().enumerate() {
                    let lo = j * nx + i;
                    faces.push(Face {
                        lo,
                        hi: lo + nx,
                        axis: 1,
                        spacing: spacing[1],
                        volume: spacing[1] * wi,
                    });
                }
            }
        }

        let n = nx * ny;
        let mut neighbours: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (fi, f) in faces.iter().enumerate() {
            neighbours[f.lo].push((f.hi, fi));
            neighbours[f.hi].push((f.lo, fi));
        }
        // Lexicographic neighbour order keeps sweeps reproducible.
        for list in &mut neighbours {
            list.sort_unstable();
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut adjacency = Vec::with_capacity(2 * faces.len());
        offsets.push(0);
        for list in neighbours {
            adjacency.extend(list);
            offsets.push(adjacency.len());
        }

        Ok(Self {
            dim,
            lengths,
            nodes,
            spacing,
            weights,
            faces,
            offsets,
            adjacency,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> [usize; 2] {
        self.nodes
    }

    pub fn lengths(&self) -> [f64; 2] {
        self.lengths
    }

    pub fn spacing(&self) -> [f64; 2] {
        self.spacing
    }

    pub fn node_count(&self) -> usize {
        self.weights.len()
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            dim: self.dim,
            lengths: self.lengths[..self.dim].to_vec(),
            nodes: self.nodes[..self.dim].to_vec(),
        }
    }

    /// Trapezoidal quadrature weight (dual-cell volume) of each node.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    /// `(neighbour, face index)` pairs of node `i`, in increasing neighbour order.
    #[inline]
    pub fn neighbours(&self, i: usize) -> &[(usize, usize)] {
        &self.adjacency[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Coordinates of node `idx`; `y` is 0 in one dimension.
    pub fn coords(&self, idx: usize) -> [f64; 2] {
        let i = idx % self.nodes[0];
        let j = idx / self.nodes[0];
        let y = if self.dim == 2 {
            j as f64 * self.spacing[1]
        } else {
            0.0
        };
        [i as f64 * self.spacing[0], y]
    }

    /// Extent `[lo, hi]` of the dual cell of node `idx` along `axis`.
    pub fn dual_cell(&self, idx: usize, axis: usize) -> (f64, f64) {
        let n = self.nodes[axis];
        let i = if axis == 0 { idx % self.nodes[0] } else { idx / self.nodes[0] };
        let h = self.spacing[axis];
        let x = i as f64 * h;
        let lo = if i == 0 { 0.0 } else { x - 0.5 * h };
        let hi = if i + 1 == n { self.lengths[axis] } else { x + 0.5 * h };
        (lo, hi)
    }

    pub fn zeros(&self) -> Field {
        Field::new(vec![0.0; self.node_count()])
    }

    pub fn constant(&self, value: f64) -> Field {
        Field::new(vec![value; self.node_count()])
    }

    pub fn field_from_fn(&self, f: impl Fn(f64, f64) -> f64) -> Field {
        Field::new(
            (0..self.node_count())
                .map(|idx| {
                    let [x, y] = self.coords(idx);
                    f(x, y)
                })
                .collect(),
        )
    }

    pub fn zero_vector(&self) -> VectorField {
        VectorField {
            values: vec![0.0; self.faces.len()],
        }
    }

    pub fn check_field(&self, f: &Field) -> Result<()> {
        if f.len() != self.node_count() {
            return Err(CryoError::invalid(format!(
                "field has {} values, grid has {} nodes",
                f.len(),
                self.node_count()
            )));
        }
        Ok(())
    }

    /// Face-normal difference quotients.
    pub fn gradient(&self, f: &Field) -> VectorField {
        assert_eq!(f.len(), self.node_count());
        VectorField {
            values: self
                .faces
                .iter()
                .map(|face| (f.values[face.hi] - f.values[face.lo]) / face.spacing)
                .collect(),
        }
    }

    /// Nodal divergence of a face flux with zero flux through the boundary.
    pub fn divergence_neumann(&self, v: &VectorField) -> Field {
        assert_eq!(v.len(), self.faces.len());
        let mut out = vec![0.0; self.node_count()];
        for (face, &flux) in self.faces.iter().zip(&v.values) {
            let t = flux * face.volume / face.spacing;
            out[face.lo] += t;
            out[face.hi] -= t;
        }
        for (o, w) in out.iter_mut().zip(&self.weights) {
            *o /= w;
        }
        Field::new(out)
    }

    /// `divergence_neumann(gradient(f))`: 3-point / 5-point stencil with reflected boundary closure.
    pub fn laplacian_neumann(&self, f: &Field) -> Field {
        self.divergence_neumann(&self.gradient(f))
    }

    /// `Σ_f c_f (f_j − f_i)` per node, i.e. `−K f` for the stiffness with face weights `c_f · V_f / h_f²`.
    pub(crate) fn weighted_laplacian_unscaled(&self, f: &[f64], coeff: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (face, c) in self.faces.iter().zip(coeff) {
            let t = c * face.conductance() * (f[face.hi] - f[face.lo]);
            out[face.lo] += t;
            out[face.hi] -= t;
        }
    }

    pub fn integral(&self, f: &Field) -> f64 {
        assert_eq!(f.len(), self.node_count());
        self.weights.iter().zip(&f.values).map(|(w, v)| w * v).sum()
    }

    /// Weighted inner product `Σ w_i f_i g_i`.
    pub fn inner(&self, f: &Field, g: &Field) -> f64 {
        self.weights
            .iter()
            .zip(f.values.iter().zip(&g.values))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }

    pub fn norm_l2(&self, f: &Field) -> f64 {
        self.inner(f, f).sqrt()
    }

    /// Face-volume weighted inner product of two face fields.
    pub fn face_inner(&self, u: &VectorField, v: &VectorField) -> f64 {
        self.faces
            .iter()
            .zip(u.values.iter().zip(&v.values))
            .map(|(face, (a, b))| face.volume * a * b)
            .sum()
    }

    /// `Σ_f V_f |g_f|^p`, the discrete `∫|∇f|^p`.
    pub fn grad_p_integral(&self, f: &Field, p: f64) -> f64 {
        let g = self.gradient(f);
        self.faces
            .iter()
            .zip(&g.values)
            .map(|(face, gv)| face.volume * gv.abs().powf(p))
            .sum()
    }

    pub fn norm_lp_grad(&self, f: &Field, p: f64) -> f64 {
        self.grad_p_integral(f, p).powf(1.0 / p)
    }

    /// `‖∇f‖_{L²}` on faces.
    pub fn norm_grad_l2(&self, f: &Field) -> f64 {
        let g = self.gradient(f);
        self.face_inner(&g, &g).sqrt()
    }

    pub fn norm_h1(&self, f: &Field) -> f64 {
        let g = self.gradient(f);
        (self.inner(f, f) + self.face_inner(&g, &g)).sqrt()
    }

    /// Restriction of a fine-grid field onto this (nested, coarser) grid.
    pub fn restrict_from(&self, fine: &Grid, f: &Field) -> Result<Field> {
        if fine.dim != self.dim {
            return Err(CryoError::invalid("restriction between grids of different dimension"));
        }
        let mut ratio = [1usize; 2];
        for axis in 0..self.dim {
            let (nc, nf) = (self.nodes[axis] - 1, fine.nodes[axis] - 1);
            if nf % nc != 0 || (self.lengths[axis] - fine.lengths[axis]).abs() > 1e-12 * self.lengths[axis] {
                return Err(CryoError::invalid("grids are not nested"));
            }
            ratio[axis] = nf / nc;
        }
        let [nx, ny] = self.nodes;
        let mut out = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                out.push(f.values[j * ratio[1] * fine.nodes[0] + i * ratio[0]]);
            }
        }
        Ok(Field::new(out))
    }
}
