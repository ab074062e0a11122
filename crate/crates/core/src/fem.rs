//! Conforming P1 finite elements with homogeneous Dirichlet conditions.
//!
//! Dirichlet conditions are imposed by elimination: only interior vertices
//! carry degrees of freedom, so every assembled matrix is SPD.

use crate::error::{Error, Result};
use crate::linalg::SparseSpdMatrix;
use crate::mesh::{Mesh, Point};
use crate::viscosity::ViscosityModel;

pub type Vector2 = [f64; 2];

const NO_DOF: usize = usize::MAX;

fn dot2(a: Vector2, b: Vector2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Symmetric quadrature rules on triangles in barycentric coordinates. The
/// weights sum to one and are scaled by the triangle area on use.
pub fn quadrature_rule(order: u8) -> Result<&'static [([f64; 3], f64)]> {
    const THIRD: f64 = 1.0 / 3.0;
    const SIXTH: f64 = 1.0 / 6.0;
    const A: f64 = 0.659_027_622_374_092;
    const B: f64 = 0.231_933_368_553_031;
    const C: f64 = 0.109_039_009_072_877;
    static ORDER1: [([f64; 3], f64); 1] = [([THIRD, THIRD, THIRD], 1.0)];
    static ORDER2: [([f64; 3], f64); 3] = [
        ([2.0 * THIRD, SIXTH, SIXTH], THIRD),
        ([SIXTH, 2.0 * THIRD, SIXTH], THIRD),
        ([SIXTH, SIXTH, 2.0 * THIRD], THIRD),
    ];
    static ORDER3: [([f64; 3], f64); 6] = [
        ([A, B, C], SIXTH),
        ([A, C, B], SIXTH),
        ([B, A, C], SIXTH),
        ([B, C, A], SIXTH),
        ([C, A, B], SIXTH),
        ([C, B, A], SIXTH),
    ];
    match order {
        1 => Ok(&ORDER1),
        2 => Ok(&ORDER2),
        3 => Ok(&ORDER3),
        _ => Err(Error::InvalidParameter(format!("quadrature order must be 1, 2 or 3, got {order}"))),
    }
}

fn map_point(points: &[Point; 3], bary: &[f64; 3]) -> Point {
    [
        bary[0] * points[0][0] + bary[1] * points[1][0] + bary[2] * points[2][0],
        bary[0] * points[0][1] + bary[1] * points[1][1] + bary[2] * points[2][1],
    ]
}

/// Gradients of the three barycentric coordinates of a counterclockwise
/// triangle, together with its area.
pub fn barycentric_gradients(points: &[Point; 3]) -> ([Vector2; 3], f64) {
    let [[x0, y0], [x1, y1], [x2, y2]] = *points;
    let twice_area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0);
    let s = 1.0 / twice_area;
    let grads = [[(y1 - y2) * s, (x2 - x1) * s], [(y2 - y0) * s, (x0 - x2) * s], [(y0 - y1) * s, (x1 - x0) * s]];
    (grads, 0.5 * twice_area)
}

/// Element matrix `weight * area * grad(lambda_a) . grad(lambda_b)`.
pub fn local_stiffness(points: &[Point; 3], weight: f64) -> [[f64; 3]; 3] {
    let (g, area) = barycentric_gradients(points);
    let mut k = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            k[a][b] = weight * area * dot2(g[a], g[b]);
        }
    }
    k
}

/// P1 space on a mesh with cached geometry and a fixed stiffness pattern.
#[derive(Debug, Clone)]
pub struct P1Space {
    mesh: Mesh,
    dof_of_vertex: Vec<usize>,
    vertex_of_dof: Vec<usize>,
    areas: Vec<f64>,
    grads: Vec<[Vector2; 3]>,
    /// Unweighted element matrices.
    local: Vec<[[f64; 3]; 3]>,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    /// Position of each local entry in the value array, `NO_DOF` when a
    /// vertex is on the boundary.
    scatter: Vec<[[usize; 3]; 3]>,
}

impl P1Space {
    pub fn new(mesh: Mesh) -> Result<Self> {
        mesh.validate()?;
        let mut dof_of_vertex = vec![NO_DOF; mesh.num_vertices()];
        let mut vertex_of_dof = Vec::new();
        for (v, &on_boundary) in mesh.boundary_flags().iter().enumerate() {
            if !on_boundary {
                dof_of_vertex[v] = vertex_of_dof.len();
                vertex_of_dof.push(v);
            }
        }
        let n = vertex_of_dof.len();
        let mut areas = Vec::with_capacity(mesh.num_triangles());
        let mut grads = Vec::with_capacity(mesh.num_triangles());
        let mut local = Vec::with_capacity(mesh.num_triangles());
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for t in 0..mesh.num_triangles() {
            let points = mesh.triangle_points(t);
            let (g, area) = barycentric_gradients(&points);
            areas.push(area);
            grads.push(g);
            local.push(local_stiffness(&points, 1.0));
            let dofs = mesh.triangles()[t].map(|v| dof_of_vertex[v]);
            for &i in dofs.iter().filter(|&&i| i != NO_DOF) {
                rows[i].extend(dofs.iter().filter(|&&j| j != NO_DOF));
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in &mut rows {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        let scatter = mesh
            .triangles()
            .iter()
            .map(|tri| {
                let dofs = tri.map(|v| dof_of_vertex[v]);
                let mut pos = [[NO_DOF; 3]; 3];
                for a in 0..3 {
                    for b in 0..3 {
                        let (i, j) = (dofs[a], dofs[b]);
                        if i != NO_DOF && j != NO_DOF {
                            let start = row_ptr[i];
                            let k = col_idx[start..row_ptr[i + 1]].binary_search(&j).expect("pattern entry");
                            pos[a][b] = start + k;
                        }
                    }
                }
                pos
            })
            .collect();
        Ok(P1Space { mesh, dof_of_vertex, vertex_of_dof, areas, grads, local, row_ptr, col_idx, scatter })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn num_dofs(&self) -> usize {
        self.vertex_of_dof.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.mesh.num_vertices()
    }

    pub fn num_triangles(&self) -> usize {
        self.mesh.num_triangles()
    }

    pub fn dof_of_vertex(&self, v: usize) -> Option<usize> {
        Some(self.dof_of_vertex[v]).filter(|&d| d != NO_DOF)
    }

    pub fn vertex_of_dof(&self, dof: usize) -> usize {
        self.vertex_of_dof[dof]
    }

    pub fn area(&self, t: usize) -> f64 {
        self.areas[t]
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn basis_gradients(&self, t: usize) -> &[Vector2; 3] {
        &self.grads[t]
    }

    /// Gradient of the function with the given vertex values on triangle `t`.
    fn gradient_on(&self, t: usize, values: &[f64]) -> Vector2 {
        let tri = self.mesh.triangles()[t];
        let g = &self.grads[t];
        let mut out = [0.0; 2];
        for k in 0..3 {
            out[0] += values[tri[k]] * g[k][0];
            out[1] += values[tri[k]] * g[k][1];
        }
        out
    }

    fn check_function(&self, u: &DiscreteFunction) -> Result<()> {
        if u.values.len() == self.num_vertices() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.num_vertices(), got: u.values.len() })
        }
    }

    fn check_per_triangle(&self, len: usize) -> Result<()> {
        if len == self.num_triangles() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.num_triangles(), got: len })
        }
    }
}

/// Nodal values of a P1 function at all mesh vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteFunction {
    values: Vec<f64>,
}

impl DiscreteFunction {
    pub fn zero(space: &P1Space) -> Self {
        DiscreteFunction { values: vec![0.0; space.num_vertices()] }
    }

    /// Member of the homogeneous space with the given interior values.
    pub fn from_dofs(space: &P1Space, dofs: &[f64]) -> Result<Self> {
        if dofs.len() != space.num_dofs() {
            return Err(Error::DimensionMismatch { expected: space.num_dofs(), got: dofs.len() });
        }
        let mut values = vec![0.0; space.num_vertices()];
        for (d, &v) in dofs.iter().enumerate() {
            values[space.vertex_of_dof[d]] = v;
        }
        Ok(DiscreteFunction { values })
    }

    /// Nodal interpolant, boundary vertices included.
    pub fn interpolate(space: &P1Space, mut f: impl FnMut(Point) -> f64) -> Self {
        DiscreteFunction { values: space.mesh.vertices().iter().map(|&p| f(p)).collect() }
    }

    /// Nodal interpolant with boundary values set to zero.
    pub fn interpolate_homogeneous(space: &P1Space, f: impl Fn(Point) -> f64) -> Self {
        let values = space
            .mesh
            .vertices()
            .iter()
            .zip(space.mesh.boundary_flags())
            .map(|(&p, &on_boundary)| if on_boundary { 0.0 } else { f(p) })
            .collect();
        DiscreteFunction { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Interior values in dof order.
    pub fn dofs(&self, space: &P1Space) -> Vec<f64> {
        space.vertex_of_dof.iter().map(|&v| self.values[v]).collect()
    }

    pub fn is_homogeneous(&self, space: &P1Space) -> bool {
        self.values.iter().zip(space.mesh.boundary_flags()).all(|(&v, &b)| !b || v == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadSource {
    Pointwise,
    Manufactured,
}

/// Right-hand side `b_i = l(phi_i)` over the interior dofs.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadFunctional {
    values: Vec<f64>,
    source: LoadSource,
}

impl LoadFunctional {
    pub fn new(values: Vec<f64>, source: LoadSource) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("load vector has non-finite entries".into()));
        }
        Ok(LoadFunctional { values, source })
    }

    pub fn zero(space: &P1Space) -> Self {
        LoadFunctional { values: vec![0.0; space.num_dofs()], source: LoadSource::Pointwise }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn source(&self) -> LoadSource {
        self.source
    }

    /// `l(u)` for a member of the homogeneous space.
    pub fn apply(&self, space: &P1Space, u: &DiscreteFunction) -> f64 {
        space.vertex_of_dof.iter().zip(&self.values).map(|(&v, &b)| b * u.values[v]).sum()
    }
}

/// Piecewise constant gradient of `u`.
pub fn gradients(space: &P1Space, u: &DiscreteFunction) -> Result<Vec<Vector2>> {
    space.check_function(u)?;
    Ok((0..space.num_triangles()).map(|t| space.gradient_on(t, &u.values)).collect())
}

/// Stiffness matrix weighted by a positive per-triangle coefficient.
pub fn assemble_weighted_stiffness(space: &P1Space, weights: &[f64]) -> Result<SparseSpdMatrix> {
    space.check_per_triangle(weights.len())?;
    if let Some(t) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::Domain(format!("weight on triangle {t} must be positive, got {}", weights[t])));
    }
    let mut values = vec![0.0; space.col_idx.len()];
    for (t, &w) in weights.iter().enumerate() {
        let (pos, k) = (&space.scatter[t], &space.local[t]);
        for a in 0..3 {
            for b in 0..3 {
                if pos[a][b] != NO_DOF {
                    values[pos[a][b]] += w * k[a][b];
                }
            }
        }
    }
    Ok(SparseSpdMatrix::from_csr_unchecked(space.num_dofs(), space.row_ptr.clone(), space.col_idx.clone(), values))
}

/// Adds `flux . grad(lambda_k)` of triangle `t` to the entry of vertex `k`.
fn scatter_flux(space: &P1Space, t: usize, flux: Vector2, b: &mut [f64]) {
    for (&v, &g) in space.mesh.triangles()[t].iter().zip(&space.grads[t]) {
        let d = space.dof_of_vertex[v];
        if d != NO_DOF {
            b[d] += dot2(flux, g);
        }
    }
}

/// `b_i = int f phi_i` by the symmetric rule of the given order.
pub fn assemble_load_pointwise(space: &P1Space, f: impl Fn(Point) -> f64, quad_order: u8) -> Result<LoadFunctional> {
    let rule = quadrature_rule(quad_order)?;
    let mut b = vec![0.0; space.num_dofs()];
    for t in 0..space.num_triangles() {
        let points = space.mesh.triangle_points(t);
        let tri = space.mesh.triangles()[t];
        let area = space.areas[t];
        for (bary, w) in rule {
            let value = f(map_point(&points, bary));
            if !value.is_finite() {
                return Err(Error::Evaluation { what: "source term", triangle: t });
            }
            for k in 0..3 {
                let d = space.dof_of_vertex[tri[k]];
                if d != NO_DOF {
                    b[d] += area * w * value * bary[k];
                }
            }
        }
    }
    LoadFunctional::new(b, LoadSource::Pointwise)
}

/// `b_i = int mu(|G|^2) G . grad(phi_i)` for a prescribed exact gradient `G`,
/// which makes the corresponding `u*` the exact weak solution.
pub fn assemble_load_manufactured(
    space: &P1Space,
    grad_ustar: impl Fn(Point) -> Vector2,
    model: &ViscosityModel,
    quad_order: u8,
) -> Result<LoadFunctional> {
    let rule = quadrature_rule(quad_order)?;
    let mut b = vec![0.0; space.num_dofs()];
    for t in 0..space.num_triangles() {
        let points = space.mesh.triangle_points(t);
        let mut flux = [0.0; 2];
        for (bary, w) in rule {
            let g = grad_ustar(map_point(&points, bary));
            if !(g[0].is_finite() && g[1].is_finite()) {
                return Err(Error::Evaluation { what: "exact gradient", triangle: t });
            }
            let mu = model.mu_unchecked(dot2(g, g));
            flux[0] += w * mu * g[0];
            flux[1] += w * mu * g[1];
        }
        let area = space.areas[t];
        scatter_flux(space, t, [area * flux[0], area * flux[1]], &mut b);
    }
    LoadFunctional::new(b, LoadSource::Manufactured)
}

/// Per-triangle frozen coefficients `mu(|grad u|^2)`.
pub fn viscosity_weights(model: &ViscosityModel, grads: &[Vector2]) -> Vec<f64> {
    grads.iter().map(|&g| model.mu_unchecked(dot2(g, g))).collect()
}

/// `E(u) = sum_T area_T phi(|grad u|_T^2) - l(u)`.
pub fn energy(space: &P1Space, model: &ViscosityModel, u: &DiscreteFunction, load: &LoadFunctional) -> Result<f64> {
    let grads = gradients(space, u)?;
    if load.values.len() != space.num_dofs() {
        return Err(Error::DimensionMismatch { expected: space.num_dofs(), got: load.values.len() });
    }
    Ok(energy_from_gradients(space, model, &grads, u, load))
}

pub(crate) fn energy_from_gradients(
    space: &P1Space,
    model: &ViscosityModel,
    grads: &[Vector2],
    u: &DiscreteFunction,
    load: &LoadFunctional,
) -> f64 {
    let internal: f64 = grads.iter().zip(&space.areas).map(|(&g, &a)| a * model.phi_unchecked(dot2(g, g))).sum();
    internal - load.apply(space, u)
}

/// `E(u) - E(v)` evaluated triangle by triangle from `u - v`, so that the
/// result is accurate relative to the difference rather than to `E`.
pub fn energy_difference(
    space: &P1Space,
    model: &ViscosityModel,
    u: &DiscreteFunction,
    v: &DiscreteFunction,
    load: &LoadFunctional,
) -> Result<f64> {
    if load.values.len() != space.num_dofs() {
        return Err(Error::DimensionMismatch { expected: space.num_dofs(), got: load.values.len() });
    }
    let grads_v = gradients(space, v)?;
    energy_difference_from_gradients(space, model, u, v, &grads_v, load)
}

pub(crate) fn energy_difference_from_gradients(
    space: &P1Space,
    model: &ViscosityModel,
    u: &DiscreteFunction,
    v: &DiscreteFunction,
    grads_v: &[Vector2],
    load: &LoadFunctional,
) -> Result<f64> {
    if u.values.len() != v.values.len() {
        return Err(Error::DimensionMismatch { expected: v.values.len(), got: u.values.len() });
    }
    let diff = DiscreteFunction { values: u.values.iter().zip(&v.values).map(|(a, b)| a - b).collect() };
    let grads_diff = gradients(space, &diff)?;
    let internal: f64 = grads_v
        .iter()
        .zip(&grads_diff)
        .zip(&space.areas)
        .map(|((&g, &e), &area)| {
            // |g + e|^2 - |g|^2 = e . (2g + e)
            let ds = e[0] * (2.0 * g[0] + e[0]) + e[1] * (2.0 * g[1] + e[1]);
            area * model.phi_increment_unchecked(dot2(g, g), ds)
        })
        .sum();
    Ok(internal - load.apply(space, &diff))
}

/// Dual vector of the nonlinear operator, `(A[u] u)_i = int mu(|grad u|^2) grad u . grad(phi_i)`.
pub fn apply_nonlinear_operator(space: &P1Space, model: &ViscosityModel, u: &DiscreteFunction) -> Result<Vec<f64>> {
    let grads = gradients(space, u)?;
    let mut out = vec![0.0; space.num_dofs()];
    for (t, &g) in grads.iter().enumerate() {
        let scale = space.areas[t] * model.mu_unchecked(dot2(g, g));
        scatter_flux(space, t, [scale * g[0], scale * g[1]], &mut out);
    }
    Ok(out)
}

/// `|||u|||^2 = int |grad u|^2`.
pub fn dirichlet_norm_squared(space: &P1Space, u: &DiscreteFunction) -> Result<f64> {
    let grads = gradients(space, u)?;
    Ok(grads.iter().zip(&space.areas).map(|(&g, &a)| a * dot2(g, g)).sum())
}

/// `(int |grad u - G|^2)^(1/2)` with `G` sampled at quadrature points.
pub fn h1_seminorm_error(
    space: &P1Space,
    u: &DiscreteFunction,
    grad_ref: impl Fn(Point) -> Vector2,
    quad_order: u8,
) -> Result<f64> {
    let rule = quadrature_rule(quad_order)?;
    let grads = gradients(space, u)?;
    let mut total = 0.0;
    for (t, &g) in grads.iter().enumerate() {
        let points = space.mesh.triangle_points(t);
        let local: f64 = rule
            .iter()
            .map(|(bary, w)| {
                let r = grad_ref(map_point(&points, bary));
                w * ((g[0] - r[0]).powi(2) + (g[1] - r[1]).powi(2))
            })
            .sum();
        total += space.areas[t] * local;
    }
    Ok(total.sqrt())
}

/// Exact gradient error between two piecewise constant gradient fields.
pub fn h1_error_piecewise(space: &P1Space, grads: &[Vector2], grads_ref: &[Vector2]) -> Result<f64> {
    space.check_per_triangle(grads.len())?;
    space.check_per_triangle(grads_ref.len())?;
    let total: f64 = grads
        .iter()
        .zip(grads_ref)
        .zip(&space.areas)
        .map(|((g, r), a)| a * ((g[0] - r[0]).powi(2) + (g[1] - r[1]).powi(2)))
        .sum();
    Ok(total.sqrt())
}

/// Exact solutions vanishing on the boundary of the L-shaped domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExactSolution {
    /// `sin(pi x) sin(pi y)`.
    Smooth,
    /// `R^(2/3) sin(2 phi / 3) cos(phi) (1 - x^2) (1 - y^2)` in polar
    /// coordinates with `phi` in `[0, 2 pi)`; its gradient is unbounded at
    /// the reentrant corner.
    Singular,
}

impl ExactSolution {
    pub fn value(self, p: Point) -> f64 {
        let [x, y] = p;
        match self {
            ExactSolution::Smooth => (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin(),
            ExactSolution::Singular => {
                let r = x.hypot(y);
                if r == 0.0 {
                    return 0.0;
                }
                let phi = polar_angle(x, y);
                r.powf(2.0 / 3.0) * (2.0 * phi / 3.0).sin() * (x / r) * (1.0 - x * x) * (1.0 - y * y)
            }
        }
    }

    /// Gradient; non-finite at the origin in the singular case.
    pub fn gradient(self, p: Point) -> Vector2 {
        use std::f64::consts::PI;
        let [x, y] = p;
        match self {
            ExactSolution::Smooth => {
                let (sx, cx) = (PI * x).sin_cos();
                let (sy, cy) = (PI * y).sin_cos();
                [PI * cx * sy, PI * sx * cy]
            }
            ExactSolution::Singular => {
                let r = x.hypot(y);
                let phi = polar_angle(x, y);
                let (c, s) = (x / r, y / r);
                let (sin_a, cos_a) = (2.0 * phi / 3.0).sin_cos();
                let radial = r.powf(2.0 / 3.0) * sin_a;
                let scale = 2.0 / 3.0 * r.powf(-1.0 / 3.0);
                let grad_radial = [scale * (sin_a * c - cos_a * s), scale * (sin_a * s + cos_a * c)];
                // grad(x / r) = (s^2, -c s) / r
                let grad_c = [s * s / r, -c * s / r];
                let bubble = (1.0 - x * x) * (1.0 - y * y);
                let grad_bubble = [-2.0 * x * (1.0 - y * y), -2.0 * y * (1.0 - x * x)];
                let f = radial * c;
                let grad_f = [grad_radial[0] * c + radial * grad_c[0], grad_radial[1] * c + radial * grad_c[1]];
                [grad_f[0] * bubble + f * grad_bubble[0], grad_f[1] * bubble + f * grad_bubble[1]]
            }
        }
    }
}

fn polar_angle(x: f64, y: f64) -> f64 {
    let phi = y.atan2(x);
    if phi < 0.0 {
        phi + 2.0 * std::f64::consts::PI
    } else {
        phi
    }
}
