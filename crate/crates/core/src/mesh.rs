//! Conforming triangulations of the L-shaped domain
//! `(-1,1)^2 \ [0,1] x [-1,0]`.
//!
//! Triangles are stored counterclockwise as `[a, b, c]` where `(a, b)` is the
//! refinement edge and `c` the newest vertex. Coarse and uniformly refined
//! meshes consist of right isosceles triangles whose refinement edge is the
//! hypotenuse; newest-vertex bisection preserves this shape.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// One refinement applied on the way from the coarse mesh.
#[derive(Debug, Clone, PartialEq)]
pub enum Refinement {
    Uniform,
    /// Newest-vertex bisection of all triangles within `radius` of `center`.
    Graded {
        center: Point,
        radius: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    history: Vec<Refinement>,
}

fn signed_area(p: Point, q: Point, r: Point) -> f64 {
    0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn dist2(p: Point, q: Point) -> f64 {
    (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)
}

/// Distance from `p` to the closed segment `[a, b]`.
fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let s = if len2 > 0.0 { (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
    dist2(p, [a[0] + s * ab[0], a[1] + s * ab[1]]).sqrt()
}

/// Distance from `p` to the boundary of the L-shaped domain.
pub fn lshape_boundary_distance(p: Point) -> f64 {
    const CORNERS: [Point; 6] = [[-1.0, -1.0], [0.0, -1.0], [0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [-1.0, 1.0]];
    (0..6).map(|i| segment_distance(p, CORNERS[i], CORNERS[(i + 1) % 6])).fold(f64::INFINITY, f64::min)
}

/// Whether `p` lies in the open L-shaped domain.
pub fn lshape_contains(p: Point) -> bool {
    let inside_square = p[0] > -1.0 && p[0] < 1.0 && p[1] > -1.0 && p[1] < 1.0;
    let in_notch = p[0] >= 0.0 && p[1] <= 0.0;
    inside_square && !in_notch
}

impl Mesh {
    /// Builds a mesh from raw parts and checks the structural invariants.
    pub fn from_parts(vertices: Vec<Point>, triangles: Vec<[usize; 3]>, boundary: Vec<bool>) -> Result<Self> {
        let mesh = Mesh { vertices, triangles, boundary, history: Vec::new() };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Coarse L-shape: eight grid vertices and six right triangles, each unit
    /// square split along the diagonal through the reentrant corner.
    pub fn lshape_coarse() -> Mesh {
        let vertices =
            vec![[-1.0, -1.0], [0.0, -1.0], [-1.0, 0.0], [0.0, 0.0], [1.0, 0.0], [-1.0, 1.0], [0.0, 1.0], [1.0, 1.0]];
        let triangles = vec![[3, 0, 1], [0, 3, 2], [3, 5, 2], [5, 3, 6], [7, 3, 4], [3, 7, 6]];
        Mesh { vertices, triangles, boundary: vec![true; 8], history: Vec::new() }
    }

    /// Coarse mesh followed by `levels` uniform refinements.
    pub fn lshape_uniform(levels: usize) -> Mesh {
        (0..levels).fold(Mesh::lshape_coarse(), |mesh, _| mesh.refine_uniform())
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    /// Refinements applied since the coarse mesh.
    pub fn history(&self) -> &[Refinement] {
        &self.history
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn area(&self, t: usize) -> f64 {
        let [p, q, r] = self.triangle_points(t);
        signed_area(p, q, r)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.area(t)).sum()
    }

    /// Longest edge length of triangle `t`.
    pub fn diameter(&self, t: usize) -> f64 {
        let [p, q, r] = self.triangle_points(t);
        dist2(p, q).max(dist2(q, r)).max(dist2(r, p)).sqrt()
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [p, q, r] = self.triangle_points(t);
        [(p[0] + q[0] + r[0]) / 3.0, (p[1] + q[1] + r[1]) / 3.0]
    }

    /// Number of triangles using each edge.
    pub fn edge_census(&self) -> HashMap<(usize, usize), usize> {
        let mut census = HashMap::with_capacity(2 * self.triangles.len());
        for tri in &self.triangles {
            for k in 0..3 {
                *census.entry(edge_key(tri[k], tri[(k + 1) % 3])).or_insert(0) += 1;
            }
        }
        census
    }

    pub fn num_edges(&self) -> usize {
        self.edge_census().len()
    }

    /// Partition of the vertex indices into (boundary, interior).
    pub fn boundary_interior_split(&self) -> (Vec<usize>, Vec<usize>) {
        (0..self.num_vertices()).partition(|&v| self.boundary[v])
    }

    /// Checks orientation, conformity, boundary flags and the Euler relation.
    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidParameter(msg));
        if self.boundary.len() != self.vertices.len() {
            return invalid("boundary flag count differs from vertex count".into());
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= self.vertices.len()) {
                return invalid(format!("triangle {t} references a missing vertex"));
            }
            if !(self.area(t) > 0.0) {
                return invalid(format!("triangle {t} has nonpositive signed area"));
            }
        }
        let census = self.edge_census();
        let mut on_boundary_edge = vec![false; self.vertices.len()];
        for (&(a, b), &count) in &census {
            match count {
                1 => {
                    on_boundary_edge[a] = true;
                    on_boundary_edge[b] = true;
                }
                2 => {}
                n => return invalid(format!("edge ({a},{b}) is shared by {n} triangles")),
            }
        }
        if let Some(v) = (0..self.vertices.len()).find(|&v| on_boundary_edge[v] != self.boundary[v]) {
            return invalid(format!("boundary flag of vertex {v} disagrees with the edge topology"));
        }
        // V - E + F = 2 with the outer face counted
        let euler = self.vertices.len() as i64 - census.len() as i64 + self.triangles.len() as i64 + 1;
        if euler != 2 {
            return invalid(format!("Euler characteristic is {euler}, expected 2"));
        }
        Ok(())
    }

    /// Red refinement: every triangle is split into four congruent children
    /// through its edge midpoints.
    pub fn refine_uniform(&self) -> Mesh {
        let census = self.edge_census();
        let mut vertices = self.vertices.clone();
        let mut boundary = self.boundary.clone();
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::with_capacity(census.len());
        let mut midpoint = |a: usize, b: usize| -> usize {
            *midpoints.entry(edge_key(a, b)).or_insert_with(|| {
                let (p, q) = (vertices[a], vertices[b]);
                vertices.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
                boundary.push(census[&edge_key(a, b)] == 1);
                vertices.len() - 1
            })
        };
        let mut children = Vec::with_capacity(4 * self.triangles.len());
        for &[a, b, c] in &self.triangles {
            let (ab, bc, ca) = (midpoint(a, b), midpoint(b, c), midpoint(c, a));
            children.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [bc, ca, ab]]);
        }
        let mut history = self.history.clone();
        history.push(Refinement::Uniform);
        let mut mesh = Mesh { vertices, triangles: children, boundary, history };
        mesh.label_longest_edges();
        mesh
    }

    /// Rotates every triangle so that its longest edge comes first.
    fn label_longest_edges(&mut self) {
        let vertices = &self.vertices;
        for tri in &mut self.triangles {
            let len = |k: usize| dist2(vertices[tri[k]], vertices[tri[(k + 1) % 3]]);
            let (l0, l1, l2) = (len(0), len(1), len(2));
            if l1 > l0 && l1 >= l2 {
                tri.rotate_left(1);
            } else if l2 > l0 && l2 > l1 {
                tri.rotate_left(2);
            }
        }
    }

    /// Graded refinement towards `center`. Pass `k` (starting at 1) bisects
    /// every triangle within distance `R * radius_fraction^k` of `center`,
    /// where `R` is the largest distance from `center` to a mesh vertex, and
    /// closes the result by newest-vertex bisection.
    pub fn refine_graded(&self, center: Point, radius_fraction: f64, levels: usize) -> Result<Mesh> {
        if !(radius_fraction > 0.0 && radius_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!("radius_fraction must lie in (0,1], got {radius_fraction}")));
        }
        if levels == 0 {
            return Err(Error::InvalidParameter("graded refinement needs at least one level".into()));
        }
        if !(center[0].is_finite() && center[1].is_finite()) {
            return Err(Error::InvalidParameter("grading center must be finite".into()));
        }
        let reach = self.vertices.iter().map(|&p| dist2(p, center)).fold(0.0, f64::max).sqrt();
        let mut mesh = self.clone();
        for pass in 1..=levels {
            let radius = reach * radius_fraction.powi(pass as i32);
            let marked: Vec<bool> =
                (0..mesh.num_triangles()).map(|t| mesh.distance_to_triangle(t, center) <= radius).collect();
            mesh = mesh.bisect(&marked);
            mesh.history.push(Refinement::Graded { center, radius });
        }
        Ok(mesh)
    }

    fn distance_to_triangle(&self, t: usize, p: Point) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        let inside = signed_area(a, b, p) >= 0.0 && signed_area(b, c, p) >= 0.0 && signed_area(c, a, p) >= 0.0;
        if inside {
            return 0.0;
        }
        segment_distance(p, a, b).min(segment_distance(p, b, c)).min(segment_distance(p, c, a))
    }

    /// Newest-vertex bisection of the marked triangles plus closure.
    pub fn bisect(&self, marked: &[bool]) -> Mesh {
        assert_eq!(marked.len(), self.triangles.len(), "one mark per triangle");
        let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
        for (tri, _) in self.triangles.iter().zip(marked).filter(|(_, &m)| m) {
            edges.insert(edge_key(tri[0], tri[1]), usize::MAX);
        }
        // closure: a triangle with any marked edge must bisect its refinement edge
        loop {
            let mut changed = false;
            for tri in &self.triangles {
                let refinement = edge_key(tri[0], tri[1]);
                if edges.contains_key(&refinement) {
                    continue;
                }
                if edges.contains_key(&edge_key(tri[1], tri[2])) || edges.contains_key(&edge_key(tri[2], tri[0])) {
                    edges.insert(refinement, usize::MAX);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }

        let census = self.edge_census();
        let mut vertices = self.vertices.clone();
        let mut boundary = self.boundary.clone();
        let mut triangles = Vec::with_capacity(self.triangles.len() + 3 * edges.len());
        for &tri in &self.triangles {
            let mut stack = vec![tri];
            while let Some([a, b, c]) = stack.pop() {
                let key = edge_key(a, b);
                match edges.get_mut(&key) {
                    Some(mid) => {
                        if *mid == usize::MAX {
                            let (p, q) = (vertices[a], vertices[b]);
                            vertices.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
                            boundary.push(census[&key] == 1);
                            *mid = vertices.len() - 1;
                        }
                        let m = *mid;
                        // second child is processed first so the output order is
                        // [c, a, m]-subtree then [b, c, m]-subtree
                        stack.push([b, c, m]);
                        stack.push([c, a, m]);
                    }
                    None => triangles.push([a, b, c]),
                }
            }
        }
        Mesh { vertices, triangles, boundary, history: self.history.clone() }
    }

    /// Plain-text serialization: a `qnmesh v1 <nv> <nt>` header, one
    /// `x y flag` line per vertex and one `i j k` line per triangle.
    pub fn to_qnmesh(&self) -> String {
        let mut out = String::with_capacity(48 * (self.vertices.len() + self.triangles.len()));
        let _ = writeln!(out, "qnmesh v1 {} {}", self.vertices.len(), self.triangles.len());
        for (p, &flag) in self.vertices.iter().zip(&self.boundary) {
            let _ = writeln!(out, "{:?} {:?} {}", p[0], p[1], u8::from(flag));
        }
        for t in &self.triangles {
            let _ = writeln!(out, "{} {} {}", t[0], t[1], t[2]);
        }
        out
    }

    /// Parses the format written by [`Mesh::to_qnmesh`].
    pub fn from_qnmesh(text: &str) -> Result<Mesh> {
        let fail = |line: usize, message: &str| Error::MeshFormat { line, message: message.to_string() };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines.next().ok_or_else(|| fail(1, "empty input"))?;
        let head: Vec<&str> = header.split_whitespace().collect();
        if head.len() != 4 || head[0] != "qnmesh" || head[1] != "v1" {
            return Err(fail(1, "expected header `qnmesh v1 <nv> <nt>`"));
        }
        let nv: usize = head[2].parse().map_err(|_| fail(1, "invalid vertex count"))?;
        let nt: usize = head[3].parse().map_err(|_| fail(1, "invalid triangle count"))?;
        let mut vertices = Vec::with_capacity(nv);
        let mut boundary = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (no, line) = lines.next().ok_or_else(|| fail(0, "unexpected end of vertex block"))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(fail(no, "expected `x y flag`"));
            }
            let x: f64 = fields[0].parse().map_err(|_| fail(no, "invalid x coordinate"))?;
            let y: f64 = fields[1].parse().map_err(|_| fail(no, "invalid y coordinate"))?;
            let flag = match fields[2] {
                "0" => false,
                "1" => true,
                _ => return Err(fail(no, "boundary flag must be 0 or 1")),
            };
            vertices.push([x, y]);
            boundary.push(flag);
        }
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let (no, line) = lines.next().ok_or_else(|| fail(0, "unexpected end of triangle block"))?;
            let idx: Vec<usize> = line
                .split_whitespace()
                .map(|f| f.parse().map_err(|_| fail(no, "invalid vertex index")))
                .collect::<Result<_>>()?;
            if idx.len() != 3 {
                return Err(fail(no, "expected `i j k`"));
            }
            triangles.push([idx[0], idx[1], idx[2]]);
        }
        if let Some((no, line)) = lines.next() {
            if !line.trim().is_empty() {
                return Err(fail(no, "trailing content"));
            }
        }
        Mesh::from_parts(vertices, triangles, boundary)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_geometry(mesh: &Mesh) {
        mesh.validate().unwrap();
        for (v, &p) in mesh.vertices().iter().enumerate() {
            let d = lshape_boundary_distance(p);
            if mesh.boundary_flags()[v] {
                assert!(d <= 1e-12, "boundary vertex {v} at distance {d}");
            } else {
                assert!(d > 1e-12 && lshape_contains(p), "interior vertex {v} not inside");
            }
        }
        assert!((mesh.total_area() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn coarse_mesh() {
        let mesh = Mesh::lshape_coarse();
        check_geometry(&mesh);
        assert_eq!(mesh.num_triangles(), 6);
        assert_eq!(mesh.num_vertices(), 8);
        assert_eq!(mesh.num_edges(), 13);
        for t in 0..6 {
            assert_eq!(mesh.area(t), 0.5);
        }
        let (b, i) = mesh.boundary_interior_split();
        assert_eq!((b.len(), i.len()), (8, 0));
    }

    #[test]
    fn coarse_refinement_edges_are_hypotenuses() {
        let mesh = Mesh::lshape_coarse();
        for t in 0..6 {
            let [a, b, _] = mesh.triangles()[t];
            assert_eq!(dist2(mesh.vertices()[a], mesh.vertices()[b]), 2.0);
            // every diagonal passes through the reentrant corner
            assert!(a == 3 || b == 3);
        }
    }

    #[test]
    fn uniform_refinement_counts() {
        let mut mesh = Mesh::lshape_coarse();
        for k in 1..=4 {
            mesh = mesh.refine_uniform();
            assert_eq!(mesh.num_triangles(), 6 * 4usize.pow(k));
            check_geometry(&mesh);
        }
    }

    #[test]
    fn one_refinement_split() {
        let mesh = Mesh::lshape_uniform(1);
        assert_eq!(mesh.num_vertices(), 21);
        let (b, i) = mesh.boundary_interior_split();
        // oracle: geometric point-on-boundary test
        let geometric: Vec<usize> = (0..21).filter(|&v| lshape_boundary_distance(mesh.vertices()[v]) < 1e-12).collect();
        assert_eq!(b, geometric);
        assert_eq!((b.len(), i.len()), (16, 5));
        let mut all: Vec<usize> = b.iter().chain(&i).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..21).collect::<Vec<_>>());
    }

    #[test]
    fn graded_full_radius_is_global_bisection() {
        let mesh = Mesh::lshape_uniform(1);
        let graded = mesh.refine_graded([0.0, 0.0], 1.0, 1).unwrap();
        check_geometry(&graded);
        let global = mesh.bisect(&vec![true; mesh.num_triangles()]);
        assert_eq!(graded.num_triangles(), 2 * mesh.num_triangles());
        assert_eq!(graded.vertices(), global.vertices());
        assert_eq!(graded.triangles(), global.triangles());
    }

    #[test]
    fn graded_mesh_is_finer_near_corner() {
        let mesh = Mesh::lshape_coarse().refine_graded([0.0, 0.0], 0.5, 3).unwrap();
        check_geometry(&mesh);
        let (mut near, mut far) = (f64::INFINITY, f64::INFINITY);
        for t in 0..mesh.num_triangles() {
            let c = mesh.centroid(t);
            let d = (c[0] * c[0] + c[1] * c[1]).sqrt();
            if d < 0.3 {
                near = near.min(mesh.diameter(t));
            } else if d > 0.9 {
                far = far.min(mesh.diameter(t));
            }
        }
        assert!(near < far, "near {near} far {far}");
    }

    #[test]
    fn deep_graded_refinement_stays_conforming() {
        let mesh = Mesh::lshape_uniform(2).refine_graded([0.0, 0.0], 0.6, 10).unwrap();
        check_geometry(&mesh);
        let census = mesh.edge_census();
        assert!(census.values().all(|&c| c == 1 || c == 2));
    }

    #[test]
    fn graded_rejects_bad_parameters() {
        let mesh = Mesh::lshape_coarse();
        assert!(mesh.refine_graded([0.0, 0.0], 0.0, 2).is_err());
        assert!(mesh.refine_graded([0.0, 0.0], 1.5, 2).is_err());
        assert!(mesh.refine_graded([0.0, 0.0], 0.5, 0).is_err());
    }

    #[test]
    fn refinement_is_deterministic() {
        let a = Mesh::lshape_uniform(2).refine_graded([0.0, 0.0], 0.5, 4).unwrap();
        let b = Mesh::lshape_uniform(2).refine_graded([0.0, 0.0], 0.5, 4).unwrap();
        assert_eq!(a.to_qnmesh(), b.to_qnmesh());
    }

    #[test]
    fn qnmesh_round_trip_is_exact() {
        let mesh = Mesh::lshape_uniform(1).refine_graded([0.0, 0.0], 0.7, 3).unwrap();
        let text = mesh.to_qnmesh();
        assert!(text.starts_with(&format!("qnmesh v1 {} {}\n", mesh.num_vertices(), mesh.num_triangles())));
        let back = Mesh::from_qnmesh(&text).unwrap();
        assert_eq!(back.vertices(), mesh.vertices());
        assert_eq!(back.triangles(), mesh.triangles());
        assert_eq!(back.boundary_flags(), mesh.boundary_flags());
        assert_eq!(back.to_qnmesh(), text);
    }

    #[test]
    fn qnmesh_errors_report_lines() {
        assert!(matches!(Mesh::from_qnmesh("mesh 1 2"), Err(Error::MeshFormat { line: 1, .. })));
        let bad = "qnmesh v1 1 0\n0.0 zero 1\n";
        assert!(matches!(Mesh::from_qnmesh(bad), Err(Error::MeshFormat { line: 2, .. })));
    }

    #[test]
    fn from_parts_rejects_clockwise_triangles() {
        let verts = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(Mesh::from_parts(verts.clone(), vec![[0, 2, 1]], vec![true; 3]).is_err());
        assert!(Mesh::from_parts(verts, vec![[0, 1, 2]], vec![true; 3]).is_ok());
    }
}
