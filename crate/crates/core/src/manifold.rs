//! Sampled closed manifolds: closed polylines (m = 1) and triangle
//! meshes (m = 2), with the queries anchor selection needs — height
//! extrema, graph neighborhoods around a minimizer, and hyperplane slices.

use std::collections::{HashMap, HashSet, VecDeque};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{points_from_csv, Point};

/// Relative tolerance for degeneracy decisions on sampled data.
pub const DEFAULT_GEOM_TOL: f64 = 1e-9;
/// Default height cap fraction for graph-neighborhood growth.
pub const DEFAULT_CAP_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ManifoldKind {
    ClosedPolyline,
    TriangleMesh,
}

/// A sampled closed manifold embedded (or immersed) in R^l.
///
/// Polyline vertices are stored in loop order with implicit closure;
/// meshes carry an explicit triangle list and must be closed (every edge
/// in exactly two triangles).
#[derive(Debug, Clone)]
pub struct SampledManifold {
    kind: ManifoldKind,
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    adjacency: Vec<Vec<usize>>,
}

impl SampledManifold {
    pub fn closed_polyline(vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidInput(
                "closed polyline needs at least 3 vertices".into(),
            ));
        }
        let dim = vertices[0].dim();
        if dim < 2 {
            return Err(Error::InvalidInput(
                "polyline ambient dimension must be at least 2".into(),
            ));
        }
        for v in &vertices {
            if v.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: v.dim(),
                });
            }
        }
        let n = vertices.len();
        for i in 0..n {
            let j = (i + 1) % n;
            if vertices[i] == vertices[j] {
                return Err(Error::InvalidInput(format!(
                    "consecutive duplicate vertices {i} and {j}"
                )));
            }
        }
        let adjacency = (0..n).map(|i| vec![(i + n - 1) % n, (i + 1) % n]).collect();
        Ok(SampledManifold {
            kind: ManifoldKind::ClosedPolyline,
            vertices,
            triangles: Vec::new(),
            adjacency,
        })
    }

    pub fn triangle_mesh(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.len() < 4 || triangles.len() < 4 {
            return Err(Error::InvalidInput("mesh too small to be closed".into()));
        }
        let dim = vertices[0].dim();
        if dim < 3 {
            return Err(Error::InvalidInput(
                "mesh ambient dimension must be at least 3".into(),
            ));
        }
        for v in &vertices {
            if v.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: v.dim(),
                });
            }
        }
        let nv = vertices.len();
        let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
        for (ti, t) in triangles.iter().enumerate() {
            for &v in t {
                if v >= nv {
                    return Err(Error::InvalidInput(format!(
                        "triangle {ti} references missing vertex {v}"
                    )));
                }
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::InvalidInput(format!("degenerate triangle {ti}")));
            }
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                let key = (a.min(b), a.max(b));
                *edge_count.entry(key).or_insert(0) += 1;
            }
        }
        for (&(a, b), &count) in &edge_count {
            if count != 2 {
                return Err(Error::InvalidInput(format!(
                    "edge ({a},{b}) is incident to {count} triangles; mesh must be closed"
                )));
            }
        }
        let mut adjacency: Vec<HashSet<usize>> = vec![HashSet::new(); nv];
        for &(a, b) in edge_count.keys() {
            adjacency[a].insert(b);
            adjacency[b].insert(a);
        }
        let adjacency = adjacency
            .into_iter()
            .map(|s| {
                let mut v: Vec<usize> = s.into_iter().collect();
                v.sort_unstable();
                v
            })
            .collect();
        Ok(SampledManifold {
            kind: ManifoldKind::TriangleMesh,
            vertices,
            triangles,
            adjacency,
        })
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    /// Intrinsic dimension m (1 for polylines, 2 for meshes).
    pub fn intrinsic_dim(&self) -> usize {
        match self.kind {
            ManifoldKind::ClosedPolyline => 1,
            ManifoldKind::TriangleMesh => 2,
        }
    }

    /// Ambient dimension l.
    pub fn ambient_dim(&self) -> usize {
        self.vertices[0].dim()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    /// Undirected edge list. For polylines this is the loop in order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        match self.kind {
            ManifoldKind::ClosedPolyline => {
                let n = self.vertices.len();
                (0..n).map(|i| (i, (i + 1) % n)).collect()
            }
            ManifoldKind::TriangleMesh => {
                let mut seen = HashSet::new();
                let mut out = Vec::new();
                for t in &self.triangles {
                    for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                        let key = (a.min(b), a.max(b));
                        if seen.insert(key) {
                            out.push(key);
                        }
                    }
                }
                out.sort_unstable();
                out
            }
        }
    }

    /// Diagonal of the bounding box.
    pub fn extent(&self) -> f64 {
        let dim = self.ambient_dim();
        let mut total = 0.0;
        for i in 0..dim {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for v in &self.vertices {
                lo = lo.min(v[i]);
                hi = hi.max(v[i]);
            }
            total += (hi - lo) * (hi - lo);
        }
        total.sqrt()
    }

    pub fn max_edge_length(&self) -> f64 {
        self.edges()
            .iter()
            .map(|&(a, b)| {
                crate::geometry::euclidean_distance(&self.vertices[a], &self.vertices[b]).unwrap()
            })
            .fold(0.0, f64::max)
    }

    /// Apply a linear map to every vertex (used for frame rotations).
    pub fn map_vertices(&self, m: &DMatrix<f64>) -> Result<SampledManifold> {
        let vertices = self
            .vertices
            .iter()
            .map(|v| Point::from_vector(&(m * v.as_vector())))
            .collect::<Vec<_>>();
        Ok(SampledManifold {
            kind: self.kind,
            vertices,
            triangles: self.triangles.clone(),
            adjacency: self.adjacency.clone(),
        })
    }

    /// Minimum of the given coordinate over vertices, with all vertices
    /// attaining it within `tol` (absolute).
    pub fn height_extrema(&self, axis: usize, tol: f64) -> (f64, Vec<usize>) {
        let k0 = self
            .vertices
            .iter()
            .map(|v| v[axis])
            .fold(f64::INFINITY, f64::min);
        let minimizers = (0..self.vertices.len())
            .filter(|&i| self.vertices[i][axis] <= k0 + tol)
            .collect();
        (k0, minimizers)
    }

    pub fn max_height(&self, axis: usize) -> f64 {
        self.vertices
            .iter()
            .map(|v| v[axis])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Vertex indices that are local height extrema relative to their
    /// graph neighbors.
    pub fn local_height_extrema(&self, axis: usize) -> Vec<usize> {
        (0..self.vertices.len())
            .filter(|&i| {
                let h = self.vertices[i][axis];
                let lower = self.adjacency[i].iter().any(|&j| self.vertices[j][axis] < h);
                let higher = self.adjacency[i].iter().any(|&j| self.vertices[j][axis] > h);
                !(lower && higher)
            })
            .collect()
    }

    /// Grow a graph neighborhood around the height minimizer `q`.
    ///
    /// Vertices are added breadth-first while (a) their height stays below
    /// k0 + cap_fraction * (max height - k0) and (b) the projection onto
    /// the chosen parameter axes stays pairwise injective at tolerance
    /// `tol * extent`. Candidates violating either rule are skipped, which
    /// stops each growth front at the first turning point.
    pub fn graph_neighborhood(
        &self,
        q: usize,
        axis: usize,
        cap_fraction: f64,
        tol: f64,
    ) -> Result<GraphNeighborhood> {
        let m = self.intrinsic_dim();
        let scale = self.extent();
        let proximity = tol * scale;

        // A second copy of q's location means the minimizer sits on a
        // double point and no graph chart exists there.
        for (i, v) in self.vertices.iter().enumerate() {
            if i != q
                && crate::geometry::euclidean_distance(v, &self.vertices[q])? < proximity
            {
                return Err(Error::Degenerate(format!(
                    "vertex {i} duplicates the minimizer {q}; no graph chart at a double point"
                )));
            }
        }

        let param_axes = self.select_parameter_axes(q, axis, tol)?;
        let k0 = self.vertices[q][axis];
        let cap = k0 + cap_fraction * (self.max_height(axis) - k0);

        let project = |v: usize| -> Vec<f64> {
            param_axes.iter().map(|&ax| self.vertices[v][ax]).collect()
        };
        let mut members = vec![q];
        let mut in_set: HashSet<usize> = HashSet::from([q]);
        let mut queue = VecDeque::from([q]);
        while let Some(v) = queue.pop_front() {
            for &w in &self.adjacency[v] {
                if in_set.contains(&w) {
                    continue;
                }
                if self.vertices[w][axis] >= cap {
                    continue;
                }
                let pw = project(w);
                let collides = members.iter().any(|&u| {
                    let pu = project(u);
                    pw.iter()
                        .zip(&pu)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                        < proximity
                });
                if collides {
                    continue;
                }
                in_set.insert(w);
                members.push(w);
                queue.push_back(w);
            }
        }
        if members.len() < m + 2 {
            return Err(Error::Degenerate(format!(
                "graph neighborhood around {q} has only {} vertices",
                members.len()
            )));
        }
        Ok(GraphNeighborhood {
            base: q,
            parameter_axes: param_axes,
            members,
        })
    }

    /// Choose m coordinate axes (excluding `axis`) whose projection of the
    /// edge star at q is as far from degenerate as possible.
    fn select_parameter_axes(&self, q: usize, axis: usize, tol: f64) -> Result<Vec<usize>> {
        let m = self.intrinsic_dim();
        let dim = self.ambient_dim();
        let candidates: Vec<usize> = (0..dim).filter(|&i| i != axis).collect();
        let star: Vec<Vec<f64>> = self.adjacency[q]
            .iter()
            .map(|&w| {
                (0..dim)
                    .map(|i| self.vertices[w][i] - self.vertices[q][i])
                    .collect()
            })
            .collect();

        let mut best: Option<(f64, Vec<usize>)> = None;
        for combo in combinations(&candidates, m) {
            let mat = DMatrix::from_fn(star.len(), m, |r, c| star[r][combo[c]]);
            // Smallest singular value of the projected star, normalized.
            let norm = mat.norm();
            if norm == 0.0 {
                continue;
            }
            let score = crate::geometry::min_singular_value(&mat) / norm.max(1e-300);
            if best.as_ref().map_or(true, |(s, _)| score > *s) {
                best = Some((score, combo));
            }
        }
        match best {
            Some((score, combo)) if score > tol => Ok(combo),
            _ => Err(Error::Degenerate(format!(
                "projection degenerate at vertex {q}: no valid parameter axes"
            ))),
        }
    }

    /// Intersect the manifold with the hyperplane {x_axis = level}.
    ///
    /// Vertices lying within `tol` of the level are treated as shifted by
    /// +tol (recorded in the result). Polyline edges straddling the level
    /// contribute one interpolated point each; mesh triangles contribute
    /// segments which are chained into closed cross-section loops.
    pub fn slice_with_hyperplane(&self, axis: usize, level: f64, tol: f64) -> Result<Slice> {
        let perturbed: Vec<usize> = (0..self.vertices.len())
            .filter(|&i| (self.vertices[i][axis] - level).abs() <= tol)
            .collect();
        let height = |i: usize| -> f64 {
            let h = self.vertices[i][axis];
            if (h - level).abs() <= tol {
                h + 2.0 * tol
            } else {
                h
            }
        };
        let interpolate = |i: usize, j: usize| -> Point {
            let hi = height(i);
            let hj = height(j);
            let t = (level - hi) / (hj - hi);
            let mut coords: Vec<f64> = (0..self.ambient_dim())
                .map(|c| self.vertices[i][c] + t * (self.vertices[j][c] - self.vertices[i][c]))
                .collect();
            coords[axis] = level;
            Point::new(coords).expect("interpolated point is finite")
        };

        let mut points = Vec::new();
        let mut gen_edges = Vec::new();
        let mut loops = Vec::new();
        match self.kind {
            ManifoldKind::ClosedPolyline => {
                for (i, j) in self.edges() {
                    if (height(i) - level) * (height(j) - level) < 0.0 {
                        points.push(interpolate(i, j));
                        gen_edges.push((i, j));
                    }
                }
            }
            ManifoldKind::TriangleMesh => {
                let mut edge_point: HashMap<(usize, usize), usize> = HashMap::new();
                let mut point_links: Vec<Vec<usize>> = Vec::new();
                let mut point_of = |i: usize,
                                    j: usize,
                                    points: &mut Vec<Point>,
                                    gen_edges: &mut Vec<(usize, usize)>,
                                    point_links: &mut Vec<Vec<usize>>|
                 -> usize {
                    let key = (i.min(j), i.max(j));
                    *edge_point.entry(key).or_insert_with(|| {
                        points.push(interpolate(key.0, key.1));
                        gen_edges.push(key);
                        point_links.push(Vec::new());
                        points.len() - 1
                    })
                };
                for t in &self.triangles {
                    let mut crossing = Vec::new();
                    for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                        if (height(a) - level) * (height(b) - level) < 0.0 {
                            crossing.push((a, b));
                        }
                    }
                    if crossing.is_empty() {
                        continue;
                    }
                    if crossing.len() != 2 {
                        return Err(Error::Degenerate(format!(
                            "triangle crosses the level in {} edges",
                            crossing.len()
                        )));
                    }
                    let pa = point_of(
                        crossing[0].0,
                        crossing[0].1,
                        &mut points,
                        &mut gen_edges,
                        &mut point_links,
                    );
                    let pb = point_of(
                        crossing[1].0,
                        crossing[1].1,
                        &mut points,
                        &mut gen_edges,
                        &mut point_links,
                    );
                    point_links[pa].push(pb);
                    point_links[pb].push(pa);
                }
                // Every cross-section point sits on a closed-mesh edge shared by
                // two crossing triangles, so the links form disjoint cycles.
                let mut visited = vec![false; points.len()];
                for start in 0..points.len() {
                    if visited[start] {
                        continue;
                    }
                    if point_links[start].len() != 2 {
                        return Err(Error::Degenerate(format!(
                            "cross-section point {start} has {} neighbors",
                            point_links[start].len()
                        )));
                    }
                    let mut cycle = vec![start];
                    visited[start] = true;
                    let mut prev = start;
                    let mut cur = point_links[start][0];
                    while cur != start {
                        visited[cur] = true;
                        cycle.push(cur);
                        let next = if point_links[cur][0] == prev {
                            point_links[cur][1]
                        } else {
                            point_links[cur][0]
                        };
                        prev = cur;
                        cur = next;
                    }
                    loops.push(cycle);
                }
            }
        }
        Ok(Slice {
            points,
            edges: gen_edges,
            loops,
            perturbed_vertices: perturbed,
        })
    }
}

fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for (i, &first) in items.iter().enumerate() {
        for mut rest in combinations(&items[i + 1..], k - 1) {
            let mut combo = vec![first];
            combo.append(&mut rest);
            out.push(combo);
        }
    }
    out
}

/// Portion of the manifold expressible as a graph over m parameter axes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphNeighborhood {
    pub base: usize,
    pub parameter_axes: Vec<usize>,
    pub members: Vec<usize>,
}

impl GraphNeighborhood {
    pub fn contains(&self, v: usize) -> bool {
        self.members.contains(&v)
    }
}

/// Hyperplane cross-section.
#[derive(Debug, Clone)]
pub struct Slice {
    pub points: Vec<Point>,
    /// Generating manifold edge for each slice point.
    pub edges: Vec<(usize, usize)>,
    /// Chained closed cross-section loops (meshes only).
    pub loops: Vec<Vec<usize>>,
    /// Vertices that sat on the level and were perturbed before slicing.
    pub perturbed_vertices: Vec<usize>,
}

/// Load a manifold from a file: CSV polyline or OFFLIKE mesh.
pub fn load_manifold(path: &Path, kind: ManifoldKind) -> Result<SampledManifold> {
    let text = std::fs::read_to_string(path)?;
    match kind {
        ManifoldKind::ClosedPolyline => polyline_from_csv(&text),
        ManifoldKind::TriangleMesh => mesh_from_offlike(&text),
    }
}

/// Guess the format from the file contents.
pub fn load_manifold_auto(path: &Path) -> Result<SampledManifold> {
    let text = std::fs::read_to_string(path)?;
    if text.trim_start().starts_with("OFFLIKE") {
        mesh_from_offlike(&text)
    } else {
        polyline_from_csv(&text)
    }
}

pub fn polyline_from_csv(text: &str) -> Result<SampledManifold> {
    SampledManifold::closed_polyline(points_from_csv(text)?)
}

/// Parse the OFFLIKE mesh format: `OFFLIKE l nv nt`, nv vertex lines of l
/// reals, nt lines of three 0-based vertex indices.
pub fn mesh_from_offlike(text: &str) -> Result<SampledManifold> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header = lines
        .next()
        .ok_or(Error::EmptyInput("empty mesh file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != "OFFLIKE" {
        return Err(Error::Parse("expected header 'OFFLIKE l nv nt'".into()));
    }
    let dim: usize = fields[1].parse().map_err(|e| Error::Parse(format!("{e}")))?;
    let nv: usize = fields[2].parse().map_err(|e| Error::Parse(format!("{e}")))?;
    let nt: usize = fields[3].parse().map_err(|e| Error::Parse(format!("{e}")))?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let line = lines.next().ok_or(Error::Parse("missing vertex line".into()))?;
        let coords = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|f| !f.is_empty())
            .map(|f| f.parse::<f64>().map_err(|e| Error::Parse(format!("{e}"))))
            .collect::<Result<Vec<f64>>>()?;
        if coords.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: coords.len(),
            });
        }
        vertices.push(Point::new(coords)?);
    }
    let mut triangles = Vec::with_capacity(nt);
    for _ in 0..nt {
        let line = lines.next().ok_or(Error::Parse("missing triangle line".into()))?;
        let idx = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|f| !f.is_empty())
            .map(|f| f.parse::<usize>().map_err(|e| Error::Parse(format!("{e}"))))
            .collect::<Result<Vec<usize>>>()?;
        if idx.len() != 3 {
            return Err(Error::Parse("triangle line needs three indices".into()));
        }
        triangles.push([idx[0], idx[1], idx[2]]);
    }
    SampledManifold::triangle_mesh(vertices, triangles)
}

/// Serialize a mesh in the OFFLIKE format.
pub fn mesh_to_offlike(m: &SampledManifold) -> String {
    let mut out = format!(
        "OFFLIKE {} {} {}\n",
        m.ambient_dim(),
        m.vertices().len(),
        m.triangles().len()
    );
    for v in m.vertices() {
        let fields: Vec<String> = v.coords().iter().map(|c| format!("{c:.17e}")).collect();
        out.push_str(&fields.join(" "));
        out.push('\n');
    }
    for t in m.triangles() {
        out.push_str(&format!("{} {} {}\n", t[0], t[1], t[2]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pt(c: &[f64]) -> Point {
        Point::new(c.to_vec()).unwrap()
    }

    fn square() -> SampledManifold {
        SampledManifold::closed_polyline(vec![
            pt(&[0.0, 0.0]),
            pt(&[1.0, 0.0]),
            pt(&[1.0, 1.0]),
            pt(&[0.0, 1.0]),
        ])
        .unwrap()
    }

    fn octahedron() -> SampledManifold {
        let vertices = vec![
            pt(&[1.0, 0.0, 0.0]),
            pt(&[-1.0, 0.0, 0.0]),
            pt(&[0.0, 1.0, 0.0]),
            pt(&[0.0, -1.0, 0.0]),
            pt(&[0.0, 0.0, 1.0]),
            pt(&[0.0, 0.0, -1.0]),
        ];
        let triangles = vec![
            [0, 2, 4],
            [2, 1, 4],
            [1, 3, 4],
            [3, 0, 4],
            [2, 0, 5],
            [1, 2, 5],
            [3, 1, 5],
            [0, 3, 5],
        ];
        SampledManifold::triangle_mesh(vertices, triangles).unwrap()
    }

    fn circle(n: usize) -> SampledManifold {
        let vertices = (0..n)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                pt(&[t.cos(), t.sin()])
            })
            .collect();
        SampledManifold::closed_polyline(vertices).unwrap()
    }

    #[test]
    fn polyline_and_mesh_load() {
        let m = polyline_from_csv("0,0\n1,0\n1,1\n0,1\n").unwrap();
        assert_eq!(m.kind(), ManifoldKind::ClosedPolyline);
        assert_eq!(m.intrinsic_dim(), 1);
        assert_eq!(m.ambient_dim(), 2);
        assert_eq!(m.vertices().len(), 4);

        let text = mesh_to_offlike(&octahedron());
        let m = mesh_from_offlike(&text).unwrap();
        assert_eq!(m.kind(), ManifoldKind::TriangleMesh);
        assert_eq!(m.intrinsic_dim(), 2);
        assert_eq!(m.triangles().len(), 8);
    }

    #[test]
    fn open_mesh_rejected() {
        let vertices = vec![
            pt(&[0.0, 0.0, 0.0]),
            pt(&[1.0, 0.0, 0.0]),
            pt(&[0.0, 1.0, 0.0]),
            pt(&[0.0, 0.0, 1.0]),
        ];
        // One triangle missing from a tetrahedron: boundary edges remain.
        let triangles = vec![[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];
        assert!(SampledManifold::triangle_mesh(vertices.clone(), triangles).is_ok());
        let open = vec![[0, 1, 2], [0, 1, 3], [0, 2, 3]];
        assert!(SampledManifold::triangle_mesh(vertices, open).is_err());
    }

    #[test]
    fn duplicate_consecutive_vertices_rejected() {
        assert!(SampledManifold::closed_polyline(vec![
            pt(&[0.0, 0.0]),
            pt(&[0.0, 0.0]),
            pt(&[1.0, 1.0]),
        ])
        .is_err());
    }

    #[test]
    fn height_extrema_examples() {
        let c = circle(360);
        let (k0, mins) = c.height_extrema(1, 1e-9);
        assert_relative_eq!(k0, -1.0, epsilon = 1e-3);
        assert_eq!(mins.len(), 1);

        let (k0, mins) = square().height_extrema(1, 1e-9);
        assert_eq!(k0, 0.0);
        assert_eq!(mins.len(), 2); // flat bottom edge

        let (k0, mins) = octahedron().height_extrema(2, 1e-9);
        assert_eq!(k0, -1.0);
        assert_eq!(mins, vec![5]);
    }

    #[test]
    fn circle_graph_neighborhood_is_lower_arc() {
        let c = circle(360);
        let (_, mins) = c.height_extrema(1, 1e-12);
        let q = mins[0];
        let nb = c
            .graph_neighborhood(q, 1, DEFAULT_CAP_FRACTION, DEFAULT_GEOM_TOL)
            .unwrap();
        assert_eq!(nb.parameter_axes, vec![0]);
        assert!(nb.contains(q));
        // Members project injectively to x1 and all sit strictly below the cap.
        let mut xs: Vec<f64> = nb.members.iter().map(|&v| c.vertices()[v][0]).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for w in xs.windows(2) {
            assert!(w[1] - w[0] > 1e-12);
        }
        // Connected in the ring.
        for &v in &nb.members {
            if v != q {
                assert!(c.neighbors(v).iter().any(|w| nb.contains(*w)));
            }
        }
    }

    #[test]
    fn octahedron_graph_neighborhood() {
        let m = octahedron();
        // The octahedron is so coarse that its only non-apex vertices sit at
        // mid-height; grow with a generous cap.
        let nb = m.graph_neighborhood(5, 2, 0.9, DEFAULT_GEOM_TOL).unwrap();
        assert_eq!(nb.parameter_axes, vec![0, 1]);
        assert!(nb.contains(5));
    }

    #[test]
    fn double_point_at_minimizer_rejected() {
        // Pinched loop visiting the same location twice; minimizer is doubled.
        let m = SampledManifold::closed_polyline(vec![
            pt(&[0.0, -1.0]),
            pt(&[1.0, 0.0]),
            pt(&[0.0, -1.0 + 1e-15]),
            pt(&[-1.0, 0.0]),
        ])
        .unwrap();
        assert!(m.graph_neighborhood(0, 1, 0.9, DEFAULT_GEOM_TOL).is_err());
    }

    #[test]
    fn square_slice() {
        let s = square().slice_with_hyperplane(1, 0.5, 1e-12).unwrap();
        assert_eq!(s.points.len(), 2);
        let mut xs: Vec<f64> = s.points.iter().map(|p| p[0]).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(xs, vec![0.0, 1.0]);
        for p in &s.points {
            assert_eq!(p[1], 0.5);
        }
    }

    #[test]
    fn circle_slice_converges() {
        let c = circle(3600);
        let s = c.slice_with_hyperplane(1, 1.0 / 3.0, 1e-12).unwrap();
        assert_eq!(s.points.len(), 2);
        let expect = (8f64).sqrt() / 3.0;
        for p in &s.points {
            assert_relative_eq!(p[0].abs(), expect, epsilon = 1e-4);
            assert!((p[1] - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn slice_above_max_is_empty() {
        let s = square().slice_with_hyperplane(1, 5.0, 1e-12).unwrap();
        assert!(s.points.is_empty());
    }

    #[test]
    fn polyline_slice_parity() {
        let c = circle(101);
        for level in [-0.9, -0.3, 0.1, 0.77] {
            let s = c.slice_with_hyperplane(1, level, 1e-12).unwrap();
            assert_eq!(s.points.len() % 2, 0, "level {level}");
            assert!(!s.points.is_empty());
        }
    }

    #[test]
    fn mesh_slice_closed_loops() {
        let m = octahedron();
        let s = m.slice_with_hyperplane(2, 0.25, 1e-12).unwrap();
        assert_eq!(s.loops.len(), 1);
        assert_eq!(s.loops[0].len(), s.points.len());
        for p in &s.points {
            assert!((p[2] - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn vertex_on_level_is_perturbed() {
        let s = square().slice_with_hyperplane(1, 0.0, 1e-9).unwrap();
        assert_eq!(s.perturbed_vertices.len(), 2);
    }
}
