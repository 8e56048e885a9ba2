//! Sample-curve and sample-surface generators used by tests, benchmarks
//! and the quickstart examples.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::Rng;

use crate::error::Result;
use crate::geometry::Point;
use crate::manifold::SampledManifold;

fn pt(coords: Vec<f64>) -> Point {
    Point::new(coords).expect("generator coordinates are finite")
}

/// Unit circle in R^2 with n samples.
pub fn circle(n: usize) -> Result<SampledManifold> {
    let vertices = (0..n)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / n as f64;
            pt(vec![t.cos(), t.sin()])
        })
        .collect();
    SampledManifold::closed_polyline(vertices)
}

/// Axis-aligned ellipse with semi-axes a and b.
pub fn ellipse(a: f64, b: f64, n: usize) -> Result<SampledManifold> {
    let vertices = (0..n)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / n as f64;
            pt(vec![a * t.cos(), b * t.sin()])
        })
        .collect();
    SampledManifold::closed_polyline(vertices)
}

/// Unit square boundary with k extra samples per edge.
pub fn square(subdivisions: usize) -> Result<SampledManifold> {
    let corners = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    let mut vertices = Vec::new();
    for e in 0..4 {
        let a = corners[e];
        let b = corners[(e + 1) % 4];
        for s in 0..=subdivisions {
            let t = s as f64 / (subdivisions + 1) as f64;
            vertices.push(pt(vec![a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]));
        }
    }
    SampledManifold::closed_polyline(vertices)
}

/// Five-pointed star polygon with k extra samples per edge.
pub fn star(outer: f64, inner: f64, subdivisions: usize) -> Result<SampledManifold> {
    let mut corners = Vec::new();
    for i in 0..10 {
        let r = if i % 2 == 0 { outer } else { inner };
        let t = PI / 2.0 + PI * i as f64 / 5.0;
        corners.push([r * t.cos(), r * t.sin()]);
    }
    let mut vertices = Vec::new();
    for e in 0..10 {
        let a = corners[e];
        let b = corners[(e + 1) % 10];
        for s in 0..=subdivisions {
            let t = s as f64 / (subdivisions + 1) as f64;
            vertices.push(pt(vec![a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]));
        }
    }
    SampledManifold::closed_polyline(vertices)
}

/// Figure-eight (lemniscate of Gerono) with one transverse double point
/// at the origin. Uses an even n so both passes through the crossing are
/// sampled at the same parameter offsets.
pub fn figure_eight(n: usize) -> Result<SampledManifold> {
    let n = if n % 2 == 0 { n } else { n + 1 };
    let vertices = (0..n)
        .map(|i| {
            let t = PI / 2.0 + 2.0 * PI * i as f64 / n as f64;
            pt(vec![t.cos(), t.sin() * t.cos()])
        })
        .collect();
    SampledManifold::closed_polyline(vertices)
}

/// Trefoil knot polyline in R^3.
pub fn trefoil(n: usize) -> Result<SampledManifold> {
    let vertices = (0..n)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / n as f64;
            pt(vec![
                (2.0 + (3.0 * t).cos()) * (2.0 * t).cos(),
                (2.0 + (3.0 * t).cos()) * (2.0 * t).sin(),
                (3.0 * t).sin(),
            ])
        })
        .collect();
    SampledManifold::closed_polyline(vertices)
}

/// Unit-sphere mesh: icosahedron subdivided `subdivisions` times and
/// projected to the sphere; 20 * 4^k triangles.
pub fn sphere(subdivisions: usize) -> Result<SampledManifold> {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<[f64; 3]> = vec![
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    let mut triangles: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let normalize = |v: [f64; 3]| {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        [v[0] / n, v[1] / n, v[2] / n]
    };
    for v in &mut vertices {
        *v = normalize(*v);
    }
    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for t in &triangles {
            let mut mid = [0usize; 3];
            for (k, (a, b)) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])].into_iter().enumerate() {
                let key = (a.min(b), a.max(b));
                mid[k] = *midpoint.entry(key).or_insert_with(|| {
                    let va = vertices[key.0];
                    let vb = vertices[key.1];
                    vertices.push(normalize([
                        (va[0] + vb[0]) / 2.0,
                        (va[1] + vb[1]) / 2.0,
                        (va[2] + vb[2]) / 2.0,
                    ]));
                    vertices.len() - 1
                });
            }
            next.push([t[0], mid[0], mid[2]]);
            next.push([t[1], mid[1], mid[0]]);
            next.push([t[2], mid[2], mid[1]]);
            next.push([mid[0], mid[1], mid[2]]);
        }
        triangles = next;
    }
    let vertices = vertices.into_iter().map(|v| pt(v.to_vec())).collect();
    SampledManifold::triangle_mesh(vertices, triangles)
}

/// Random convex polygon with exactly n vertices (Valtr's construction).
pub fn random_convex_polygon<R: Rng>(n: usize, rng: &mut R) -> Result<SampledManifold> {
    assert!(n >= 3);
    let mut xs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    let mut ys: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let (min_x, max_x) = (xs[0], xs[n - 1]);
    let (min_y, max_y) = (ys[0], ys[n - 1]);

    // Split interior values into two chains and take signed differences.
    let chain = |vals: &[f64], lo: f64, hi: f64, rng: &mut R| -> Vec<f64> {
        let mut a = lo;
        let mut b = lo;
        let mut out = Vec::with_capacity(vals.len() + 1);
        for &v in &vals[1..vals.len() - 1] {
            if rng.gen_bool(0.5) {
                out.push(v - a);
                a = v;
            } else {
                out.push(b - v);
                b = v;
            }
        }
        out.push(hi - a);
        out.push(b - hi);
        out
    };
    let dx = chain(&xs, min_x, max_x, rng);
    let mut dy = chain(&ys, min_y, max_y, rng);
    // Random pairing of the y-differences.
    for i in (1..dy.len()).rev() {
        dy.swap(i, rng.gen_range(0..=i));
    }
    let mut vectors: Vec<(f64, f64)> = dx.into_iter().zip(dy).collect();
    vectors.sort_by(|a, b| a.1.atan2(a.0).partial_cmp(&b.1.atan2(b.0)).unwrap());
    let mut x = 0.0;
    let mut y = 0.0;
    let mut vertices = Vec::with_capacity(n);
    for (vx, vy) in vectors {
        vertices.push(pt(vec![x, y]));
        x += vx;
        y += vy;
    }
    SampledManifold::closed_polyline(vertices)
}
