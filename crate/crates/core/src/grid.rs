//! Box discretization of an admissible domain, scalar/horizontal-vector fields,
//! and the discrete horizontal calculus.
//!
//! Two difference structures coexist:
//!
//! * `horizontal_gradient` / `horizontal_divergence`: node-centered central
//!   differences and the exact negative transpose. The pair satisfies the
//!   discrete adjoint identity <X_k u, w> = -<u, X_k w> to machine precision
//!   for interior-supported fields, which the functional monitors rely on.
//!
//! * `p_sub_laplacian` / `weighted_sub_laplacian`: a flux form assembled from
//!   half-edge differences, L_p u = -sum_k G_k^T (w G_k u). Each G_k combines
//!   the exact difference along the aligned first-stratum axis with averaged
//!   central differences for the higher-strata terms, all centered at the edge
//!   midpoint. The operator is symmetric negative-semidefinite by construction,
//!   reduces to the compact (1,-2,1)/h^2 stencil per axis on Euclidean groups,
//!   and is second-order accurate up to the first interior layer.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::group::StratifiedGroup;

/// Shared gradient regularization default.
pub const DEFAULT_EPS: f64 = 1e-12;

/// Per-k stencil data cached on the grid: the aligned axis of X_k plus the
/// higher-strata coefficient values evaluated at nodes and edge midpoints.
#[derive(Debug)]
struct KStencil {
    axis: usize,
    /// (target axis, value at each node)
    nodal: Vec<(usize, Vec<f64>)>,
    /// (target axis, value at the midpoint of each aligned edge, indexed by
    /// the edge's lower node)
    edge: Vec<(usize, Vec<f64>)>,
}

/// Tensor-product grid over an axis-aligned box, with Dirichlet boundary
/// identified by the interior mask. Immutable; fields hold it via `Arc`.
#[derive(Debug)]
pub struct Grid {
    group: Arc<StratifiedGroup>,
    ranges: Vec<(f64, f64)>,
    nodes: Vec<usize>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
    len: usize,
    axis_coords: Vec<Vec<f64>>,
    interior: Vec<bool>,
    /// trapezoid weight times cell volume per node
    quad_w: Vec<f64>,
    cell_volume: f64,
    stencil: Vec<KStencil>,
}

impl Grid {
    pub fn new(
        group: Arc<StratifiedGroup>,
        ranges: &[(f64, f64)],
        nodes: &[usize],
    ) -> Result<Arc<Grid>> {
        let n = group.n();
        if ranges.len() != n || nodes.len() != n {
            return Err(Error::InvalidDimension(format!(
                "grid needs {} axes for group {}, got {} ranges / {} node counts",
                n,
                group.name(),
                ranges.len(),
                nodes.len()
            )));
        }
        for (i, &(a, b)) in ranges.iter().enumerate() {
            if !(b > a) || !a.is_finite() || !b.is_finite() {
                return Err(Error::InvalidDimension(format!(
                    "axis {}: invalid interval [{a}, {b}]",
                    i + 1
                )));
            }
            if nodes[i] < 3 {
                return Err(Error::InvalidDimension(format!(
                    "axis {}: need at least 3 nodes, got {}",
                    i + 1,
                    nodes[i]
                )));
            }
        }
        let spacing: Vec<f64> = ranges
            .iter()
            .zip(nodes)
            .map(|(&(a, b), &m)| (b - a) / (m - 1) as f64)
            .collect();
        let mut strides = vec![1usize; n];
        for i in (0..n.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * nodes[i + 1];
        }
        let len: usize = nodes.iter().product();
        let axis_coords: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let (a, b) = ranges[i];
                (0..nodes[i])
                    .map(|j| if j == nodes[i] - 1 { b } else { a + j as f64 * spacing[i] })
                    .collect()
            })
            .collect();
        let cell_volume: f64 = spacing.iter().product();

        let mut interior = vec![true; len];
        let mut quad_w = vec![cell_volume; len];
        for flat in 0..len {
            for axis in 0..n {
                let idx = (flat / strides[axis]) % nodes[axis];
                if idx == 0 || idx == nodes[axis] - 1 {
                    interior[flat] = false;
                    quad_w[flat] *= 0.5;
                }
            }
        }

        let mut grid = Grid {
            group,
            ranges: ranges.to_vec(),
            nodes: nodes.to_vec(),
            spacing,
            strides,
            len,
            axis_coords,
            interior,
            quad_w,
            cell_volume,
            stencil: Vec::new(),
        };
        grid.build_stencil();
        Ok(Arc::new(grid))
    }

    fn build_stencil(&mut self) {
        let n1 = self.group.n1();
        let mut stencil = Vec::with_capacity(n1);
        let mut coords = vec![0.0; self.group.n()];
        for k in 1..=n1 {
            let axis = k - 1;
            let entries = self.group.coeff_entries(k);
            let mut nodal = Vec::new();
            let mut edge = Vec::new();
            for e in entries {
                let mut nv = vec![0.0; self.len];
                let mut ev = vec![0.0; self.len];
                for flat in 0..self.len {
                    self.coords_into(flat, &mut coords);
                    nv[flat] = e.poly.eval(&coords);
                    if self.axis_index(flat, axis) < self.nodes[axis] - 1 {
                        coords[axis] += 0.5 * self.spacing[axis];
                        ev[flat] = e.poly.eval(&coords);
                    }
                }
                nodal.push((e.target, nv));
                edge.push((e.target, ev));
            }
            stencil.push(KStencil { axis, nodal, edge });
        }
        self.stencil = stencil;
    }

    pub fn group(&self) -> &Arc<StratifiedGroup> {
        &self.group
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn ranges(&self) -> &[(f64, f64)] {
        &self.ranges
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// sum_i 1/h_i^2, the stiffness scale of the compact Laplacian stencil.
    pub fn inv_h2_sum(&self) -> f64 {
        self.spacing.iter().map(|h| 1.0 / (h * h)).sum()
    }

    #[inline]
    pub fn is_interior(&self, flat: usize) -> bool {
        self.interior[flat]
    }

    #[inline]
    fn axis_index(&self, flat: usize, axis: usize) -> usize {
        (flat / self.strides[axis]) % self.nodes[axis]
    }

    pub fn coords_into(&self, flat: usize, out: &mut [f64]) {
        for axis in 0..self.nodes.len() {
            out[axis] = self.axis_coords[axis][self.axis_index(flat, axis)];
        }
    }

    pub fn coords(&self, flat: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.nodes.len()];
        self.coords_into(flat, &mut out);
        out
    }

    pub fn flat(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .zip(&self.strides)
            .map(|(&i, &s)| i * s)
            .sum()
    }

    /// Max over nodes of the Euclidean norm of the first-stratum block. For an
    /// axis-aligned box this is attained at a corner node.
    pub fn sup_x_prime(&self) -> f64 {
        let n1 = self.group.n1();
        let mut acc = 0.0;
        for axis in 0..n1 {
            let (a, b) = self.ranges[axis];
            let m = a.abs().max(b.abs());
            acc += m * m;
        }
        acc.sqrt()
    }

    /// True when the node is at least `layers` node layers away from the
    /// boundary on every axis.
    pub fn is_deep_interior(&self, flat: usize, layers: usize) -> bool {
        (0..self.nodes.len()).all(|axis| {
            let idx = self.axis_index(flat, axis);
            idx >= layers && idx + layers < self.nodes[axis]
        })
    }
}

/// Nodal scalar field on a grid. Solver states keep the boundary at exactly 0.
#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: Arc<Grid>,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        ScalarField { grid: grid.clone(), values: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut values = vec![0.0; grid.len()];
        let mut coords = vec![0.0; grid.nodes().len()];
        for (flat, v) in values.iter_mut().enumerate() {
            grid.coords_into(flat, &mut coords);
            *v = f(&coords);
        }
        ScalarField { grid: grid.clone(), values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Tensor trapezoid quadrature (boundary nodes weighted 1/2 per axis).
    pub fn integrate(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.grid.quad_w)
            .map(|(v, w)| v * w)
            .sum()
    }

    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        if p < 1.0 {
            return Err(Error::InvalidExponent(p));
        }
        let s: f64 = self
            .values
            .iter()
            .zip(&self.grid.quad_w)
            .map(|(v, w)| v.abs().powf(p) * w)
            .sum();
        Ok(s.powf(1.0 / p))
    }

    /// Quadrature-weighted inner product <u, w> = sum u w q.
    pub fn inner(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .zip(&self.grid.quad_w)
            .map(|((a, b), w)| a * b * w)
            .sum()
    }

    pub fn zero_boundary(&mut self) {
        for (flat, v) in self.values.iter_mut().enumerate() {
            if !self.grid.interior[flat] {
                *v = 0.0;
            }
        }
    }

    /// Clamp negative values to zero, returning how many nodes were clamped.
    pub fn clamp_nonnegative(&mut self) -> usize {
        let mut count = 0;
        for v in self.values.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
                count += 1;
            }
        }
        count
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Nodal power u^m. Uses integer powers when m is integral.
    pub fn powm(&self, m: f64) -> ScalarField {
        if m == 1.0 {
            return self.clone();
        }
        let mut out = self.clone();
        if m.fract() == 0.0 && m.abs() <= 64.0 {
            let mi = m as i32;
            for v in out.values.iter_mut() {
                *v = v.powi(mi);
            }
        } else {
            for v in out.values.iter_mut() {
                *v = v.powf(m);
            }
        }
        out
    }
}

/// Horizontal vector field: N1 nodal components (one per generating field).
#[derive(Debug, Clone)]
pub struct HVectorField {
    grid: Arc<Grid>,
    pub components: Vec<Vec<f64>>,
}

impl HVectorField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        let n1 = grid.group().n1();
        HVectorField { grid: grid.clone(), components: vec![vec![0.0; grid.len()]; n1] }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }
}

/// Central difference of `values` along `axis` with zero extension outside the
/// grid. Defined at every node; used for the transverse parts of the fluxes.
fn central_diff_zero_ext(grid: &Grid, values: &[f64], axis: usize) -> Vec<f64> {
    let stride = grid.strides[axis];
    let m = grid.nodes[axis];
    let inv2h = 1.0 / (2.0 * grid.spacing[axis]);
    let mut out = vec![0.0; grid.len];
    for flat in 0..grid.len {
        let idx = grid.axis_index(flat, axis);
        let up = if idx + 1 < m { values[flat + stride] } else { 0.0 };
        let dn = if idx > 0 { values[flat - stride] } else { 0.0 };
        out[flat] = (up - dn) * inv2h;
    }
    out
}

/// Node-centered horizontal gradient: component k at an interior node is
/// X_k u via central differences and the exact coefficient polynomials;
/// zero at boundary nodes.
pub fn horizontal_gradient(u: &ScalarField) -> HVectorField {
    let grid = u.grid.clone();
    let mut out = HVectorField::zeros(&grid);
    for (k0, st) in grid.stencil.iter().enumerate() {
        let comp = &mut out.components[k0];
        let sa = grid.strides[st.axis];
        let inv2h = 1.0 / (2.0 * grid.spacing[st.axis]);
        for flat in 0..grid.len {
            if !grid.interior[flat] {
                continue;
            }
            let mut v = (u.values[flat + sa] - u.values[flat - sa]) * inv2h;
            for (target, poly_vals) in &st.nodal {
                let sj = grid.strides[*target];
                let inv2hj = 1.0 / (2.0 * grid.spacing[*target]);
                v += poly_vals[flat] * (u.values[flat + sj] - u.values[flat - sj]) * inv2hj;
            }
            comp[flat] = v;
        }
    }
    out
}

/// Exact negative transpose of `horizontal_gradient`:
/// returns -sum_k X_k^T v_k, so that <X_k u, w> + <u, div contribution> = 0
/// for interior-supported fields.
pub fn horizontal_divergence(v: &HVectorField) -> Result<ScalarField> {
    let grid = v.grid.clone();
    let n1 = grid.group().n1();
    if v.components.len() != n1 {
        return Err(Error::InvalidField(format!(
            "horizontal field has {} components, group has N1 = {}",
            v.components.len(),
            n1
        )));
    }
    let mut out = ScalarField::zeros(&grid);
    for (k0, st) in grid.stencil.iter().enumerate() {
        let comp = &v.components[k0];
        let sa = grid.strides[st.axis];
        let inv2h = 1.0 / (2.0 * grid.spacing[st.axis]);
        for flat in 0..grid.len {
            if !grid.interior[flat] {
                continue;
            }
            let w = comp[flat];
            if w == 0.0 {
                continue;
            }
            // row `flat` of X_k has +c/(2h) at flat+s and -c/(2h) at flat-s;
            // scatter the transpose and negate.
            out.values[flat + sa] -= w * inv2h;
            out.values[flat - sa] += w * inv2h;
            for (target, poly_vals) in &st.nodal {
                let sj = grid.strides[*target];
                let inv2hj = 1.0 / (2.0 * grid.spacing[*target]);
                let c = poly_vals[flat];
                if c != 0.0 {
                    out.values[flat + sj] -= w * c * inv2hj;
                    out.values[flat - sj] += w * c * inv2hj;
                }
            }
        }
    }
    Ok(out)
}

/// Diffusion weights frozen on the half-edges: for each k and each edge along
/// its aligned axis, w = (|grad_H u|^2 + eps^2)^((p-2)/2) evaluated from the
/// edge-centered horizontal gradient magnitude.
#[derive(Debug, Clone)]
pub struct EdgeWeights {
    /// per_k[k][p]: weight of the aligned edge with lower node p (unused
    /// entries, where p has no upper neighbor, stay 0)
    pub per_k: Vec<Vec<f64>>,
}

/// Edge value of G_k applied to `values` at the aligned edge with lower node
/// `flat`: exact difference along the aligned axis plus averaged transverse
/// central differences, all centered at the edge midpoint.
#[inline]
fn edge_gradient(
    grid: &Grid,
    st: &KStencil,
    values: &[f64],
    djc: &[Vec<f64>],
    flat: usize,
    sa: usize,
    inv_h: f64,
) -> f64 {
    let mut g = (values[flat + sa] - values[flat]) * inv_h;
    for (t, (_, edge_vals)) in st.edge.iter().enumerate() {
        g += edge_vals[flat] * 0.5 * (djc[t][flat] + djc[t][flat + sa]);
    }
    g
}

pub fn edge_weights(u: &ScalarField, p: f64, eps: f64) -> Result<EdgeWeights> {
    if p < 2.0 {
        return Err(Error::UnsupportedExponent(p));
    }
    let grid = u.grid.as_ref();
    let n1 = grid.group.n1();
    let mut per_k = vec![vec![0.0; grid.len]; n1];
    if p == 2.0 {
        // weight is exactly 1 for any eps
        for (k0, st) in grid.stencil.iter().enumerate() {
            let wk = &mut per_k[k0];
            for flat in 0..grid.len {
                if grid.axis_index(flat, st.axis) < grid.nodes[st.axis] - 1 {
                    wk[flat] = 1.0;
                }
            }
        }
        return Ok(EdgeWeights { per_k });
    }
    let ngrad = horizontal_gradient(u);
    let expo = (p - 2.0) / 2.0;
    for (k0, st) in grid.stencil.iter().enumerate() {
        let sa = grid.strides[st.axis];
        let inv_h = 1.0 / grid.spacing[st.axis];
        let djc: Vec<Vec<f64>> = st
            .edge
            .iter()
            .map(|(target, _)| central_diff_zero_ext(grid, &u.values, *target))
            .collect();
        let wk = &mut per_k[k0];
        for flat in 0..grid.len {
            if grid.axis_index(flat, st.axis) >= grid.nodes[st.axis] - 1 {
                continue;
            }
            let g = edge_gradient(grid, st, &u.values, &djc, flat, sa, inv_h);
            let mut mag2 = g * g;
            for (j0, comp) in ngrad.components.iter().enumerate() {
                if j0 != k0 {
                    let avg = 0.5 * (comp[flat] + comp[flat + sa]);
                    mag2 += avg * avg;
                }
            }
            wk[flat] = (mag2 + eps * eps).powf(expo);
        }
    }
    Ok(EdgeWeights { per_k })
}

/// -sum_k G_k^T (w_k G_k v): symmetric negative-semidefinite divergence-form
/// operator with the given frozen edge weights. Output is zero on the boundary
/// (Dirichlet rows).
pub fn weighted_sub_laplacian(v: &ScalarField, w: &EdgeWeights) -> ScalarField {
    let grid = v.grid.as_ref();
    let mut out = ScalarField::zeros(&v.grid);
    for (k0, st) in grid.stencil.iter().enumerate() {
        let sa = grid.strides[st.axis];
        let m = grid.nodes[st.axis];
        let inv_h = 1.0 / grid.spacing[st.axis];
        let wk = &w.per_k[k0];
        if st.edge.is_empty() {
            // Euclidean-type component: compact per-axis flux differencing
            for flat in 0..grid.len {
                if grid.axis_index(flat, st.axis) >= m - 1 {
                    continue;
                }
                let phi = wk[flat] * (v.values[flat + sa] - v.values[flat]) * inv_h;
                out.values[flat] += phi * inv_h;
                out.values[flat + sa] -= phi * inv_h;
            }
        } else {
            let djc: Vec<Vec<f64>> = st
                .edge
                .iter()
                .map(|(target, _)| central_diff_zero_ext(grid, &v.values, *target))
                .collect();
            for flat in 0..grid.len {
                if grid.axis_index(flat, st.axis) >= m - 1 {
                    continue;
                }
                let g = edge_gradient(grid, st, &v.values, &djc, flat, sa, inv_h);
                let phi = wk[flat] * g;
                if phi == 0.0 {
                    continue;
                }
                out.values[flat] += phi * inv_h;
                out.values[flat + sa] -= phi * inv_h;
                // transpose of the averaged transverse central differences,
                // with zero-extension neighbors dropped
                for (target, edge_vals) in &st.edge {
                    let sj = grid.strides[*target];
                    let mj = grid.nodes[*target];
                    let c = phi * edge_vals[flat] / (4.0 * grid.spacing[*target]);
                    if c == 0.0 {
                        continue;
                    }
                    for &base in &[flat, flat + sa] {
                        let idx = grid.axis_index(base, *target);
                        if idx + 1 < mj {
                            out.values[base + sj] -= c;
                        }
                        if idx > 0 {
                            out.values[base - sj] += c;
                        }
                    }
                }
            }
        }
    }
    out.zero_boundary();
    out
}

/// p-sub-Laplacian L_p u = -sum_k G_k^T(w G_k u) with the nonlinear weight
/// frozen at u itself. For p = 2 the weight is exactly 1 and the operator is
/// the discrete sub-Laplacian sum_k X_k^2 in flux form.
pub fn p_sub_laplacian(u: &ScalarField, p: f64, eps: f64) -> Result<ScalarField> {
    let w = edge_weights(u, p, eps)?;
    Ok(weighted_sub_laplacian(u, &w))
}

/// Weighted horizontal energy sum_k sum_edges w (G_k v)^2 * cell volume.
/// With the p-weights of `edge_weights(v, p, ..)` this discretizes
/// int |grad_H v|^p dx compatibly with the operator: its first variation at
/// p = 2 is exactly -2 L_2 v, so <L_2 v, v> = -energy holds to roundoff.
pub fn horizontal_energy_weighted(v: &ScalarField, w: &EdgeWeights) -> f64 {
    let grid = v.grid.as_ref();
    let mut acc = 0.0;
    for (k0, st) in grid.stencil.iter().enumerate() {
        let sa = grid.strides[st.axis];
        let m = grid.nodes[st.axis];
        let inv_h = 1.0 / grid.spacing[st.axis];
        let wk = &w.per_k[k0];
        let djc: Vec<Vec<f64>> = st
            .edge
            .iter()
            .map(|(target, _)| central_diff_zero_ext(grid, &v.values, *target))
            .collect();
        for flat in 0..grid.len {
            if grid.axis_index(flat, st.axis) >= m - 1 {
                continue;
            }
            let g = edge_gradient(grid, st, &v.values, &djc, flat, sa, inv_h);
            acc += wk[flat] * g * g;
        }
    }
    acc * grid.cell_volume
}

/// int |grad_H u|^p with the operator-compatible edge quadrature.
pub fn horizontal_energy_p(u: &ScalarField, p: f64, eps: f64) -> Result<f64> {
    let w = edge_weights(u, p, eps)?;
    Ok(horizontal_energy_weighted(u, &w))
}

/// Diagonal of the positive form sum_k G_k^T w G_k (i.e. of -L), used for
/// Jacobi preconditioning. Boundary entries are set to 1.
pub fn sub_laplacian_diagonal(grid: &Arc<Grid>, w: &EdgeWeights) -> Vec<f64> {
    let g = grid.as_ref();
    let mut diag = vec![0.0; g.len];
    for (k0, st) in g.stencil.iter().enumerate() {
        let sa = g.strides[st.axis];
        let m = g.nodes[st.axis];
        let inv_h2 = 1.0 / (g.spacing[st.axis] * g.spacing[st.axis]);
        let wk = &w.per_k[k0];
        for flat in 0..g.len {
            if g.axis_index(flat, st.axis) >= m - 1 {
                continue;
            }
            let we = wk[flat];
            diag[flat] += we * inv_h2;
            diag[flat + sa] += we * inv_h2;
            for (target, edge_vals) in &st.edge {
                let sj = g.strides[*target];
                let mj = g.nodes[*target];
                let c = edge_vals[flat] / (4.0 * g.spacing[*target]);
                let c2 = we * c * c;
                if c2 == 0.0 {
                    continue;
                }
                for &base in &[flat, flat + sa] {
                    let idx = g.axis_index(base, *target);
                    if idx + 1 < mj {
                        diag[base + sj] += c2;
                    }
                    if idx > 0 {
                        diag[base - sj] += c2;
                    }
                }
            }
        }
    }
    for flat in 0..g.len {
        if !g.interior[flat] {
            diag[flat] = 1.0;
        }
    }
    diag
}
