//! Constructive anchor selection for sampled closed manifolds.
//!
//! Pipeline: pick a height direction whose height function behaves like a
//! Morse function on the samples, compute the thresholds k0..k3 from a
//! graph neighborhood of the unique minimizer, draw a regular level a in
//! (k0, k3), harvest m+1 anchors from the slice at that level, and
//! complete to l anchors inside the hyperplane, all in a rotated frame
//! whose last axis is the chosen direction.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    extend_to_general_position, is_general_position, min_singular_value, Point,
};
use crate::geometry::AnchorSet;
use crate::manifold::{GraphNeighborhood, SampledManifold, Slice};

/// Tunable knobs of the selection pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Rank tolerance for general-position certificates.
    pub rank_tol: f64,
    /// Relative tolerance for degeneracy rejection (directions, levels).
    pub degeneracy_tol: f64,
    pub max_direction_tries: usize,
    pub max_level_tries: usize,
    /// Initial graph-neighborhood height cap fraction.
    pub cap_fraction: f64,
    /// How many times the cap is halved when the slice escapes the
    /// neighborhood.
    pub max_cap_retries: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            rank_tol: 1e-9,
            degeneracy_tol: 1e-6,
            max_direction_tries: 200,
            max_level_tries: 200,
            cap_fraction: 0.5,
            max_cap_retries: 4,
        }
    }
}

/// Completed pipeline state: thresholds, level, anchors in both frames.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnchorSelectionState {
    /// Unit height direction in the original frame.
    pub direction: Vec<f64>,
    /// Orthogonal matrix (rows) sending the direction to the last axis.
    pub rotation: Vec<Vec<f64>>,
    pub k0: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub minimizer: usize,
    pub neighborhood: GraphNeighborhood,
    pub level: f64,
    #[serde(rename = "capFraction")]
    pub cap_fraction: f64,
    /// m+1 anchors harvested from the slice, rotated frame.
    #[serde(rename = "sliceAnchors")]
    pub slice_anchors: Vec<Point>,
    /// All l anchors in the rotated frame (shared last coordinate = level).
    #[serde(rename = "anchorsRotated")]
    pub anchors_rotated: AnchorSet,
    /// The same anchors expressed in the original frame.
    #[serde(rename = "anchorsOriginal")]
    pub anchors_original: AnchorSet,
    pub diagnostics: Vec<String>,
}

impl AnchorSelectionState {
    pub fn rotation_matrix(&self) -> DMatrix<f64> {
        let n = self.rotation.len();
        DMatrix::from_fn(n, n, |i, j| self.rotation[i][j])
    }
}

/// A direction accepted by the Morse-surrogate predicate, with the
/// manifold rotated so the direction is the last axis.
#[derive(Debug, Clone)]
pub struct DirectionChoice {
    pub direction: Vec<f64>,
    pub rotation: DMatrix<f64>,
    pub rotated: SampledManifold,
    pub minimizer: usize,
    pub rejections: Vec<String>,
}

fn random_unit_vector<R: Rng>(dim: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-6 {
            return v / n;
        }
    }
}

/// Orthogonal matrix whose last row is u^T (Gram-Schmidt completion).
fn rotation_to_last_axis(u: &DVector<f64>) -> DMatrix<f64> {
    let n = u.len();
    let mut rows: Vec<DVector<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        let mut v = e - u * u.dot(&DVector::from_fn(n, |j, _| if j == i { 1.0 } else { 0.0 }));
        for r in &rows {
            let proj = r.dot(&v);
            v -= r * proj;
        }
        let norm = v.norm();
        if norm > 1e-8 {
            rows.push(v / norm);
        }
        if rows.len() == n - 1 {
            break;
        }
    }
    assert_eq!(rows.len(), n - 1, "Gram-Schmidt completion failed");
    rows.push(u.clone());
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

/// Why a candidate direction was rejected, if it was.
fn direction_defect(m: &SampledManifold, axis: usize, tol: f64) -> Option<String> {
    let extent = m.extent();
    let heights: Vec<f64> = m.vertices().iter().map(|v| v[axis]).collect();

    // Unique global minimizer with a clear gap.
    let mut sorted = heights.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if sorted[1] - sorted[0] <= tol * extent {
        return Some(format!(
            "minimum not unique: gap {:.3e}",
            sorted[1] - sorted[0]
        ));
    }

    // No edge (or triangle) orthogonal to the direction.
    for (i, j) in m.edges() {
        let dh = (heights[i] - heights[j]).abs();
        let len = crate::geometry::euclidean_distance(&m.vertices()[i], &m.vertices()[j])
            .expect("validated manifold");
        if dh <= tol * len {
            return Some(format!("flat edge ({i},{j}): slope {:.3e}", dh / len));
        }
    }

    // Local extrema at pairwise distinct heights.
    let extrema = m.local_height_extrema(axis);
    let mut ext_heights: Vec<f64> = extrema.iter().map(|&v| heights[v]).collect();
    ext_heights.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for w in ext_heights.windows(2) {
        if w[1] - w[0] <= tol * extent {
            return Some(format!("extrema heights collide: gap {:.3e}", w[1] - w[0]));
        }
    }
    None
}

/// Rejection-sample a unit direction until the height function passes the
/// Morse-surrogate predicate; returns the rotated manifold.
pub fn choose_direction<R: Rng>(
    m: &SampledManifold,
    rng: &mut R,
    max_tries: usize,
    tol: f64,
) -> Result<DirectionChoice> {
    let dim = m.ambient_dim();
    let axis = dim - 1;
    let mut rejections = Vec::new();
    let mut best: Option<(String, DVector<f64>)> = None;
    for attempt in 0..max_tries {
        let u = random_unit_vector(dim, rng);
        let rot = rotation_to_last_axis(&u);
        let rotated = m.map_vertices(&rot)?;
        match direction_defect(&rotated, axis, tol) {
            None => {
                let (_, mins) = rotated.height_extrema(axis, 0.0);
                let minimizer = mins[0];
                return Ok(DirectionChoice {
                    direction: u.iter().copied().collect(),
                    rotation: rot,
                    rotated,
                    minimizer,
                    rejections,
                });
            }
            Some(defect) => {
                rejections.push(format!("direction attempt {attempt}: {defect}"));
                best = Some((defect, u));
            }
        }
    }
    Err(Error::MaxTriesExceeded {
        stage: "choose_direction",
        tries: max_tries,
        detail: best
            .map(|(d, u)| format!("last candidate {u:?} rejected: {d}"))
            .unwrap_or_default(),
    })
}

/// The k0..k3 thresholds of the selection construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Thresholds {
    pub k0: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub neighborhood: GraphNeighborhood,
}

/// k3 = min{k0 + 1, k0 + (k2 - k0)/3, k1}.
pub fn threshold_k3(k0: f64, k1: f64, k2: f64) -> f64 {
    (k0 + 1.0).min(k0 + (k2 - k0) / 3.0).min(k1)
}

/// Compute thresholds for a rotated manifold with unique minimizer q.
pub fn compute_thresholds(
    rotated: &SampledManifold,
    q: usize,
    cap_fraction: f64,
    tol: f64,
) -> Result<Thresholds> {
    let axis = rotated.ambient_dim() - 1;
    let k0 = rotated.vertices()[q][axis];
    let neighborhood = rotated.graph_neighborhood(q, axis, cap_fraction, tol)?;
    let member_set: std::collections::HashSet<usize> =
        neighborhood.members.iter().copied().collect();
    let k1 = neighborhood
        .members
        .iter()
        .map(|&v| rotated.vertices()[v][axis])
        .fold(f64::NEG_INFINITY, f64::max);
    let complement: Vec<usize> = (0..rotated.vertices().len())
        .filter(|v| !member_set.contains(v))
        .collect();
    if complement.is_empty() {
        return Err(Error::Degenerate(
            "graph neighborhood swallowed the whole manifold".into(),
        ));
    }
    let k2 = complement
        .iter()
        .map(|&v| rotated.vertices()[v][axis])
        .fold(f64::INFINITY, f64::min);
    if k2 <= k0 {
        return Err(Error::Degenerate(format!(
            "complement touches the minimum: k2 = {k2} <= k0 = {k0}"
        )));
    }
    let k3 = threshold_k3(k0, k1, k2);
    if k3 <= k0 {
        return Err(Error::Degenerate(format!(
            "empty level interval: k3 = {k3} <= k0 = {k0}"
        )));
    }
    Ok(Thresholds {
        k0,
        k1,
        k2,
        k3,
        neighborhood,
    })
}

/// Draw a regular level a in (k0, k3): no vertex within tol of a, the
/// slice nonempty, and no crossing edge nearly parallel to the level set.
pub fn choose_level<R: Rng>(
    rotated: &SampledManifold,
    thresholds: &Thresholds,
    rng: &mut R,
    max_tries: usize,
    tol: f64,
) -> Result<(f64, Slice, Vec<String>)> {
    let axis = rotated.ambient_dim() - 1;
    let extent = rotated.extent();
    let mut rejections = Vec::new();
    for attempt in 0..max_tries {
        let a = rng.gen_range(thresholds.k0..thresholds.k3);
        if a <= thresholds.k0 || a >= thresholds.k3 {
            continue;
        }
        if rotated
            .vertices()
            .iter()
            .any(|v| (v[axis] - a).abs() <= tol * extent)
        {
            rejections.push(format!("level attempt {attempt}: vertex too close to {a}"));
            continue;
        }
        let slice = rotated.slice_with_hyperplane(axis, a, tol * extent)?;
        if slice.points.is_empty() {
            rejections.push(format!("level attempt {attempt}: empty slice at {a}"));
            continue;
        }
        let mut parallel = false;
        for &(i, j) in &slice.edges {
            let dh = (rotated.vertices()[i][axis] - rotated.vertices()[j][axis]).abs();
            let len = crate::geometry::euclidean_distance(
                &rotated.vertices()[i],
                &rotated.vertices()[j],
            )?;
            if dh <= tol * len {
                parallel = true;
                break;
            }
        }
        if parallel {
            rejections.push(format!("level attempt {attempt}: near-parallel edge at {a}"));
            continue;
        }
        return Ok((a, slice, rejections));
    }
    Err(Error::MaxTriesExceeded {
        stage: "choose_level",
        tries: max_tries,
        detail: rejections.last().cloned().unwrap_or_default(),
    })
}

/// Greedily select m+1 slice points in general position, maximizing the
/// smallest singular value of the difference matrix at each step.
pub fn select_slice_anchors(slice: &Slice, m: usize, rank_tol: f64) -> Result<Vec<Point>> {
    let pts = &slice.points;
    if pts.len() < m + 1 {
        return Err(Error::Degenerate(format!(
            "slice has {} points, need {}",
            pts.len(),
            m + 1
        )));
    }
    // Farthest pair seeds the selection.
    let mut best = (0usize, 1usize, -1.0f64);
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let d = crate::geometry::euclidean_distance(&pts[i], &pts[j])?;
            if d > best.2 {
                best = (i, j, d);
            }
        }
    }
    if best.2 <= 0.0 {
        return Err(Error::Degenerate("all slice points coincide".into()));
    }
    let mut chosen = vec![best.0, best.1];
    while chosen.len() < m + 1 {
        let mut candidate: Option<(usize, f64)> = None;
        for i in 0..pts.len() {
            if chosen.contains(&i) {
                continue;
            }
            let trial: Vec<&Point> = chosen.iter().map(|&k| &pts[k]).chain([&pts[i]]).collect();
            let base = trial[0];
            let diff = DMatrix::from_fn(trial.len() - 1, base.dim(), |r, c| {
                trial[r + 1][c] - base[c]
            });
            let score = min_singular_value(&diff);
            if candidate.map_or(true, |(_, s)| score > s) {
                candidate = Some((i, score));
            }
        }
        let (idx, _) = candidate.ok_or_else(|| {
            Error::Degenerate("ran out of slice points during greedy selection".into())
        })?;
        chosen.push(idx);
    }
    let selected: Vec<Point> = chosen.iter().map(|&k| pts[k].clone()).collect();
    let (gp, rank) = is_general_position(&selected, rank_tol)?;
    if !gp {
        return Err(Error::Degenerate(format!(
            "slice spans affine dimension {rank} < {m}; sampling too degenerate"
        )));
    }
    Ok(selected)
}

/// Run the whole pipeline on a closed manifold embedded in R^l with
/// l = ambient dimension, retrying with tighter neighborhood caps when the
/// slice escapes the neighborhood.
pub fn build_anchor_set<R: Rng>(
    m: &SampledManifold,
    rng: &mut R,
    config: &SelectionConfig,
) -> Result<AnchorSelectionState> {
    let l = m.ambient_dim();
    let intrinsic = m.intrinsic_dim();
    if intrinsic + 1 > l {
        return Err(Error::InvalidInput(format!(
            "need m+1 <= l, got m = {intrinsic}, l = {l}"
        )));
    }
    let axis = l - 1;
    let mut diagnostics = Vec::new();

    let choice = choose_direction(m, rng, config.max_direction_tries, config.degeneracy_tol)
        .map_err(|e| e.at_stage("choose_direction"))?;
    diagnostics.extend(choice.rejections.iter().cloned());
    let rotated = &choice.rotated;

    let mut cap = config.cap_fraction;
    let mut last_err: Option<Error> = None;
    for _ in 0..=config.max_cap_retries {
        let attempt = (|| -> Result<AnchorSelectionState> {
            let thresholds =
                compute_thresholds(rotated, choice.minimizer, cap, config.degeneracy_tol)
                    .map_err(|e| e.at_stage("compute_thresholds"))?;
            let (level, slice, level_rejections) = choose_level(
                rotated,
                &thresholds,
                rng,
                config.max_level_tries,
                config.degeneracy_tol,
            )
            .map_err(|e| e.at_stage("choose_level"))?;
            diagnostics.extend(level_rejections);

            // The slice must sit inside the graph neighborhood: every
            // generating edge is spanned by member vertices.
            let member_set: std::collections::HashSet<usize> =
                thresholds.neighborhood.members.iter().copied().collect();
            for &(i, j) in &slice.edges {
                if !member_set.contains(&i) || !member_set.contains(&j) {
                    return Err(Error::Degenerate(format!(
                        "slice edge ({i},{j}) leaves the graph neighborhood"
                    ))
                    .at_stage("slice_containment"));
                }
            }

            let slice_anchors = select_slice_anchors(&slice, intrinsic, config.rank_tol)
                .map_err(|e| e.at_stage("select_slice_anchors"))?;

            // Pin the shared coordinate bit-exactly before completion.
            let pinned: Vec<Point> = slice_anchors
                .iter()
                .map(|p| {
                    let mut c = p.coords().to_vec();
                    c[axis] = level;
                    Point::new(c)
                })
                .collect::<Result<_>>()?;
            let anchors_rotated =
                extend_to_general_position(&pinned, l, level, config.rank_tol, rng)
                    .map_err(|e| e.at_stage("extend_to_general_position"))?;

            let back = choice.rotation.transpose();
            let original_points: Vec<Point> = anchors_rotated
                .points()
                .iter()
                .map(|p| Point::from_vector(&(&back * p.as_vector())))
                .collect();
            let anchors_original =
                AnchorSet::new_general_position(original_points, config.rank_tol)
                    .map_err(|e| e.at_stage("rotate_back"))?;

            Ok(AnchorSelectionState {
                direction: choice.direction.clone(),
                rotation: (0..l)
                    .map(|i| (0..l).map(|j| choice.rotation[(i, j)]).collect())
                    .collect(),
                k0: thresholds.k0,
                k1: thresholds.k1,
                k2: thresholds.k2,
                k3: thresholds.k3,
                minimizer: choice.minimizer,
                neighborhood: thresholds.neighborhood.clone(),
                level,
                cap_fraction: cap,
                slice_anchors: pinned,
                anchors_rotated,
                anchors_original,
                diagnostics: diagnostics.clone(),
            })
        })();
        match attempt {
            Ok(state) => return Ok(state),
            Err(e) => {
                diagnostics.push(format!("cap {cap}: {e}"));
                last_err = Some(e);
                cap *= 0.5;
            }
        }
    }
    Err(last_err.expect("at least one attempt ran"))
}
