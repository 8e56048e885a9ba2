//! Numerical certificates for the pipeline output: injectivity on the
//! samples, fold-side containment, immersion rank, and preservation of
//! normal crossings at double points.

use std::collections::BinaryHeap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anchors::AnchorSelectionState;
use crate::error::{Error, Result};
use crate::geometry::{distance_squared_jacobian, distance_squared_map, AnchorSet, Point};
use crate::manifold::{ManifoldKind, SampledManifold};
use crate::normal_form::build_level_fold;
use crate::report::{CheckResult, VerificationReport};

/// Tolerances and scale factors for the certificates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyConfig {
    /// Pairs closer than this multiple of the longest edge in the graph
    /// metric are exempt from the injectivity requirement.
    #[serde(rename = "separationFactor")]
    pub separation_factor: f64,
    /// Relative min-singular-value threshold for rank decisions.
    #[serde(rename = "rankTol")]
    pub rank_tol: f64,
    /// Relative margin below which an image pair counts as a collision.
    #[serde(rename = "collisionTol")]
    pub collision_tol: f64,
    /// Relative spatial tolerance for double-point detection.
    #[serde(rename = "doublePointTol")]
    pub double_point_tol: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            separation_factor: 3.0,
            rank_tol: 1e-7,
            collision_tol: 1e-9,
            double_point_tol: 1e-6,
        }
    }
}

/// A tangent basis attached to one sample point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TangentSample {
    #[serde(rename = "basePoint")]
    pub base_point: Point,
    /// m direction vectors spanning the sampled tangent space.
    pub basis: Vec<Vec<f64>>,
}

/// Graph metric on the samples: arc length for polylines, shortest edge
/// paths for meshes (Dijkstra truncated at `cutoff`). Entries beyond the
/// cutoff are reported as infinity.
fn near_sets(m: &SampledManifold, cutoff: f64) -> Vec<Vec<(usize, f64)>> {
    let n = m.vertices().len();
    match m.kind() {
        ManifoldKind::ClosedPolyline => {
            let mut prefix = vec![0.0; n + 1];
            for i in 0..n {
                let d = crate::geometry::euclidean_distance(
                    &m.vertices()[i],
                    &m.vertices()[(i + 1) % n],
                )
                .expect("validated manifold");
                prefix[i + 1] = prefix[i] + d;
            }
            let total = prefix[n];
            (0..n)
                .map(|i| {
                    let mut near = Vec::new();
                    for j in 0..n {
                        let along = (prefix[i] - prefix[j]).abs();
                        let d = along.min(total - along);
                        if j != i && d <= cutoff {
                            near.push((j, d));
                        }
                    }
                    near
                })
                .collect()
        }
        ManifoldKind::TriangleMesh => (0..n)
            .into_par_iter()
            .map(|start| {
                // Truncated Dijkstra with edge-length weights.
                let mut dist: std::collections::HashMap<usize, f64> = Default::default();
                let mut heap = BinaryHeap::new();
                dist.insert(start, 0.0);
                heap.push((std::cmp::Reverse(ordered_float(0.0)), start));
                let mut near = Vec::new();
                while let Some((std::cmp::Reverse(d), v)) = heap.pop() {
                    let d = d.0;
                    if d > *dist.get(&v).unwrap_or(&f64::INFINITY) {
                        continue;
                    }
                    if v != start {
                        near.push((v, d));
                    }
                    for &w in m.neighbors(v) {
                        let step = crate::geometry::euclidean_distance(
                            &m.vertices()[v],
                            &m.vertices()[w],
                        )
                        .expect("validated manifold");
                        let nd = d + step;
                        if nd <= cutoff && nd < *dist.get(&w).unwrap_or(&f64::INFINITY) {
                            dist.insert(w, nd);
                            heap.push((std::cmp::Reverse(ordered_float(nd)), w));
                        }
                    }
                }
                near
            })
            .collect(),
    }
}

#[derive(PartialEq, PartialOrd)]
struct OrderedF64(f64);
impl Eq for OrderedF64 {}
impl Ord for OrderedF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.partial_cmp(other).unwrap()
    }
}
fn ordered_float(v: f64) -> OrderedF64 {
    OrderedF64(v)
}

fn images_of(m: &SampledManifold, anchors: &AnchorSet) -> Result<Vec<DVector<f64>>> {
    m.vertices()
        .iter()
        .map(|v| Ok(distance_squared_map(anchors, v)?.as_vector()))
        .collect()
}

/// Squared-distance images of vertex pairs that are far apart in the
/// graph metric must stay separated.
pub fn injectivity_check(
    m: &SampledManifold,
    anchors: &AnchorSet,
    config: &VerifyConfig,
) -> Result<CheckResult> {
    let n = m.vertices().len();
    let cutoff = config.separation_factor * m.max_edge_length();
    let near = near_sets(m, cutoff);
    let images = images_of(m, anchors)?;
    let image_scale = images
        .iter()
        .map(|y| y.amax())
        .fold(1.0f64, f64::max);

    // Worst (smallest) image separation over qualifying pairs.
    let worst = (0..n)
        .into_par_iter()
        .map(|i| {
            let exempt: std::collections::HashSet<usize> =
                near[i].iter().map(|&(j, _)| j).collect();
            let yi = &images[i];
            let mut local = (f64::INFINITY, i, i);
            for j in i + 1..n {
                if exempt.contains(&j) {
                    continue;
                }
                let yj = &images[j];
                let mut sep2 = 0.0;
                for c in 0..yi.len() {
                    let d = yi[c] - yj[c];
                    sep2 += d * d;
                }
                let sep = sep2.sqrt();
                if sep < local.0 {
                    local = (sep, i, j);
                }
            }
            local
        })
        .reduce(
            || (f64::INFINITY, usize::MAX, usize::MAX),
            // Lexicographic tie-break keeps the witness deterministic
            // regardless of the parallel reduction shape.
            |a, b| if a <= b { a } else { b },
        );

    let (margin, i, j) = worst;
    let name = "injectivity";
    if margin == f64::INFINITY {
        return Ok(CheckResult::pass(name, margin)
            .with_note("no vertex pairs beyond the separation cutoff"));
    }
    let threshold = config.collision_tol * image_scale;
    let result = if margin > threshold {
        CheckResult::pass(name, margin)
    } else {
        CheckResult::fail(name, margin)
            .with_witness(vec![m.vertices()[i].clone(), m.vertices()[j].clone()])
            .with_indices(vec![i, j])
            .with_note(format!(
                "image collision: separation {margin:.3e} <= {threshold:.3e}"
            ))
    };
    Ok(result)
}

/// In the rotated frame: folding the below-level part of the manifold
/// must keep it strictly below the complement threshold k2, and the
/// thresholds must satisfy the inequality chain
/// (k0-a)^2 + a < 2(a-k0) + a < k2 that makes the construction work.
pub fn fold_side_check(
    rotated: &SampledManifold,
    anchors_rotated: &AnchorSet,
    k0: f64,
    k2: f64,
) -> Result<CheckResult> {
    let name = "fold_side";
    let a = anchors_rotated.shared_last_coord().ok_or_else(|| {
        Error::InvalidInput("fold-side check needs anchors sharing their last coordinate".into())
    })?;
    if k2 <= a {
        return Err(Error::InvalidInput(format!(
            "threshold order violated: k2 = {k2} <= level = {a}"
        )));
    }
    let chain = build_level_fold(anchors_rotated)?;
    let axis = rotated.ambient_dim() - 1;

    if 0.0 < a - k0 && a - k0 < 1.0 {
        let lhs = (k0 - a).powi(2) + a;
        let mid = 2.0 * (a - k0) + a;
        if !(lhs < mid && mid < k2) {
            return Ok(CheckResult::fail(name, k2 - lhs).with_note(format!(
                "inequality chain broken: {lhs} < {mid} < {k2} fails"
            )));
        }
    } else {
        return Ok(CheckResult::fail(name, a - k0)
            .with_note(format!("level offset a - k0 = {} outside (0, 1)", a - k0)));
    }

    let below: Vec<usize> = (0..rotated.vertices().len())
        .filter(|&v| rotated.vertices()[v][axis] < a)
        .collect();
    if below.is_empty() {
        return Ok(CheckResult::pass(name, k2 - a).with_note("no vertices below the level"));
    }
    // Margin: how far the folded image stays below k2.
    let mut worst = (f64::INFINITY, below[0]);
    for &v in &below {
        let folded = crate::normal_form::evaluate_chain(&chain, &rotated.vertices()[v])?;
        let folded_height = folded[axis];
        let want = {
            let h = rotated.vertices()[v][axis];
            (h - a).powi(2) + a
        };
        if (folded_height - want).abs() > 1e-9 * (1.0 + want.abs()) {
            return Ok(CheckResult::fail(name, (folded_height - want).abs())
                .with_indices(vec![v])
                .with_note("level-fold target map disagrees with (h-a)^2 + a"));
        }
        let margin = k2 - folded_height;
        if margin < worst.0 {
            worst = (margin, v);
        }
    }
    let (margin, v) = worst;
    if margin > 0.0 {
        Ok(CheckResult::pass(name, margin))
    } else {
        Ok(CheckResult::fail(name, margin)
            .with_witness(vec![rotated.vertices()[v].clone()])
            .with_indices(vec![v])
            .with_note("folded image reaches the complement threshold"))
    }
}

/// Sampled tangent basis at a vertex: central difference for polylines,
/// the two most independent star edges for meshes.
pub fn tangent_sample(m: &SampledManifold, v: usize) -> Result<TangentSample> {
    let verts = m.vertices();
    let basis: Vec<DVector<f64>> = match m.kind() {
        ManifoldKind::ClosedPolyline => {
            let n = verts.len();
            let prev = verts[(v + n - 1) % n].as_vector();
            let next = verts[(v + 1) % n].as_vector();
            let dir = next - prev;
            let norm = dir.norm();
            if norm == 0.0 {
                return Err(Error::Degenerate(format!(
                    "degenerate tangent at vertex {v}"
                )));
            }
            vec![dir / norm]
        }
        ManifoldKind::TriangleMesh => {
            let dirs: Vec<DVector<f64>> = m
                .neighbors(v)
                .iter()
                .map(|&w| {
                    let d = verts[w].as_vector() - verts[v].as_vector();
                    let n = d.norm();
                    d / n
                })
                .collect();
            // Greedy: the pair with the best conditioning.
            let mut best: Option<(usize, usize, f64)> = None;
            for i in 0..dirs.len() {
                for j in i + 1..dirs.len() {
                    let mat = DMatrix::from_columns(&[dirs[i].clone(), dirs[j].clone()]);
                    let s = crate::geometry::min_singular_value(&mat);
                    if best.map_or(true, |(_, _, b)| s > b) {
                        best = Some((i, j, s));
                    }
                }
            }
            let (i, j, s) = best.ok_or_else(|| {
                Error::Degenerate(format!("vertex {v} has fewer than two star edges"))
            })?;
            if s < 1e-9 {
                return Err(Error::Degenerate(format!(
                    "vertex {v} star edges are collinear"
                )));
            }
            vec![dirs[i].clone(), dirs[j].clone()]
        }
    };
    Ok(TangentSample {
        base_point: verts[v].clone(),
        basis: basis.iter().map(|b| b.iter().copied().collect()).collect(),
    })
}

/// Tangent basis pushed through the squared-distance Jacobian, plus the
/// Jacobian's largest singular value as the scale for rank decisions.
fn pushed_basis(
    m: &SampledManifold,
    anchors: &AnchorSet,
    v: usize,
) -> Result<(DMatrix<f64>, f64)> {
    let sample = tangent_sample(m, v)?;
    let jac = distance_squared_jacobian(anchors, &m.vertices()[v])?;
    let scale = jac
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0f64, f64::max)
        .max(1e-300);
    let basis = DMatrix::from_fn(m.ambient_dim(), sample.basis.len(), |r, c| {
        sample.basis[c][r]
    });
    Ok((jac * basis, scale))
}

/// The squared-distance map must have full rank on every sampled tangent
/// space.
pub fn immersion_check(
    m: &SampledManifold,
    anchors: &AnchorSet,
    config: &VerifyConfig,
) -> Result<CheckResult> {
    let name = "immersion";
    let n = m.vertices().len();
    let mut worst = (f64::INFINITY, 0usize);
    for v in 0..n {
        let (pushed, scale) = pushed_basis(m, anchors, v)?;
        let smin = pushed
            .svd(false, false)
            .singular_values
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let ratio = smin / scale;
        if ratio < worst.0 {
            worst = (ratio, v);
        }
    }
    let (ratio, v) = worst;
    if ratio > config.rank_tol {
        Ok(CheckResult::pass(name, ratio))
    } else {
        Ok(CheckResult::fail(name, ratio)
            .with_witness(vec![m.vertices()[v].clone()])
            .with_indices(vec![v])
            .with_note(format!(
                "pushed tangent basis drops rank at vertex {v} (singular ratio {ratio:.3e})"
            )))
    }
}

/// Pairs of far-apart (in the graph metric) vertices that coincide in
/// space: the sampled double points of an immersed polyline.
pub fn detect_double_points(
    m: &SampledManifold,
    config: &VerifyConfig,
) -> Vec<(usize, usize)> {
    let n = m.vertices().len();
    let cutoff = config.separation_factor * m.max_edge_length();
    let near = near_sets(m, cutoff);
    let spatial_tol2 = (config.double_point_tol * m.extent()).powi(2);
    let mut pairs = Vec::new();
    for i in 0..n {
        let exempt: std::collections::HashSet<usize> =
            near[i].iter().map(|&(j, _)| j).collect();
        let vi = &m.vertices()[i];
        for j in i + 1..n {
            if exempt.contains(&j) {
                continue;
            }
            let vj = &m.vertices()[j];
            let mut d2 = 0.0;
            for c in 0..vi.dim() {
                let d = vi[c] - vj[c];
                d2 += d * d;
            }
            if d2 <= spatial_tol2 {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// Orthonormal basis of the orthogonal complement of the column span of
/// a full-column-rank matrix (Gram-Schmidt against the columns, then
/// greedy completion with the best-aligned standard basis vectors).
fn orthonormal_complement(mat: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let l = mat.nrows();
    let mut base: Vec<DVector<f64>> = Vec::new();
    for c in 0..mat.ncols() {
        let mut v = mat.column(c).into_owned();
        for b in &base {
            let proj = b.dot(&v);
            v -= b * proj;
        }
        let n = v.norm();
        if n > 1e-12 {
            base.push(v / n);
        }
    }
    let span = base.len();
    let mut complement = Vec::new();
    while base.len() < l {
        // Standard basis vector with the largest residual.
        let mut best: Option<(DVector<f64>, f64)> = None;
        for i in 0..l {
            let mut e = DVector::zeros(l);
            e[i] = 1.0;
            for b in &base {
                let proj = b.dot(&e);
                e -= b * proj;
            }
            let n = e.norm();
            if best.as_ref().map_or(true, |(_, bn)| n > *bn) {
                best = Some((e / n.max(1e-300), n));
            }
        }
        let (v, _) = best.expect("l > 0");
        base.push(v.clone());
        complement.push(v);
    }
    debug_assert_eq!(span + complement.len(), l);
    complement
}

/// At every detected double point, the pushed tangent spaces must still
/// meet like coordinate subspaces: the codimension of the intersection
/// equals the sum of the codimensions.
pub fn normal_crossings_check(
    m: &SampledManifold,
    anchors: &AnchorSet,
    double_points: &[(usize, usize)],
    config: &VerifyConfig,
) -> Result<CheckResult> {
    let name = "normal_crossings";
    if double_points.is_empty() {
        return Ok(CheckResult::pass(name, f64::INFINITY).with_note("no double points"));
    }
    let l = anchors.len();
    let intrinsic = m.intrinsic_dim();
    let mut worst = (f64::INFINITY, (0usize, 0usize));
    for &(i, j) in double_points {
        let total_codim = 2 * (l - intrinsic);
        if total_codim > l {
            return Err(Error::Degenerate(format!(
                "double point ({i},{j}) has total codimension {total_codim} > {l}; \
                 input is not generic"
            )));
        }
        // Stack orthonormal complement bases of both pushed tangents;
        // the crossing is normal iff the stack has full row rank.
        let mut rows: Vec<DVector<f64>> = Vec::new();
        for &v in &[i, j] {
            let (pushed, scale) = pushed_basis(m, anchors, v)?;
            let smin = pushed
                .clone()
                .svd(false, false)
                .singular_values
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            if smin <= config.rank_tol * scale {
                return Ok(CheckResult::fail(name, smin / scale)
                    .with_indices(vec![v])
                    .with_note(format!("tangent at vertex {v} already drops rank")));
            }
            rows.extend(orthonormal_complement(&pushed));
        }
        let stacked = DMatrix::from_fn(rows.len(), l, |r, c| rows[r][c]);
        let svd = stacked.svd(false, false);
        let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
        let smin = svd
            .singular_values
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let ratio = if smax == 0.0 { 0.0 } else { smin / smax };
        if ratio < worst.0 {
            worst = (ratio, (i, j));
        }
    }
    let (ratio, (i, j)) = worst;
    if ratio > config.rank_tol {
        Ok(CheckResult::pass(name, ratio))
    } else {
        Ok(CheckResult::fail(name, ratio)
            .with_witness(vec![m.vertices()[i].clone(), m.vertices()[j].clone()])
            .with_indices(vec![i, j])
            .with_note("pushed tangent spaces are tangent to each other at a double point"))
    }
}

/// All certificates for a completed anchor-selection run.
pub fn run_full_verification(
    m: &SampledManifold,
    state: &AnchorSelectionState,
    config: &VerifyConfig,
) -> Result<VerificationReport> {
    let mut report = VerificationReport::new();

    let rotation = state.rotation_matrix();
    let rotated = m.map_vertices(&rotation)?;

    let double_points = if m.kind() == ManifoldKind::ClosedPolyline {
        detect_double_points(m, config)
    } else {
        Vec::new()
    };

    let mut inj = injectivity_check(m, &state.anchors_original, config)?;
    if !inj.pass && !double_points.is_empty() {
        let witness: std::collections::HashSet<usize> =
            inj.witness_indices.iter().copied().collect();
        if double_points
            .iter()
            .any(|&(i, j)| witness.contains(&i) && witness.contains(&j))
        {
            inj.note = format!("{} (expected for immersed input)", inj.note);
        }
    }
    report.push(inj);
    report.push(fold_side_check(
        &rotated,
        &state.anchors_rotated,
        state.k0,
        state.k2,
    )?);
    report.push(immersion_check(m, &state.anchors_original, config)?);
    if !double_points.is_empty() {
        report.push(normal_crossings_check(
            m,
            &state.anchors_original,
            &double_points,
            config,
        )?);
    }
    Ok(report)
}
