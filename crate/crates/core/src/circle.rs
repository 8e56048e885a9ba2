//! Anchor-pair selection for topological circles in the plane.
//!
//! Closed curves split into two cases by their support function: either
//! every direction has a unique support maximizer (the curve is the
//! boundary of its convex hull) or some direction touches the curve in at
//! least two points. Each case yields a concrete pair of anchors making
//! the two-point distance map injective on the curve; injectivity itself
//! is certified downstream by the verification module.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::manifold::SampledManifold;
use crate::normal_form::AffineMap;

pub const DEFAULT_THETA_GRID: usize = 720;
pub const DEFAULT_CIRCLE_TOL: f64 = 1e-9;

/// Support function probe of a closed polyline at one angle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupportProbe {
    pub theta: f64,
    /// Maximum of (cos theta) x1 + (sin theta) x2 over the vertices.
    #[serde(rename = "kTheta")]
    pub k_theta: f64,
    pub maximizers: Vec<Point>,
    #[serde(rename = "maximizerIndices")]
    pub maximizer_indices: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurveCase {
    I,
    II,
}

/// Evidence backing the case verdict.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "case")]
pub enum CaseEvidence {
    I {
        /// Hausdorff distance from curve vertices to the hull boundary.
        #[serde(rename = "convexityResidual")]
        convexity_residual: f64,
        /// Farthest vertex pair and its distance.
        diameter: (Point, Point),
        #[serde(rename = "diameterLength")]
        diameter_length: f64,
        /// Probe at theta0 = pi/2 in the normalized frame.
        #[serde(rename = "probeTheta0")]
        probe_theta0: SupportProbe,
    },
    II {
        theta1: f64,
        probe: SupportProbe,
    },
}

/// Selected anchor pair with the frame and evidence used to find it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CircleAnchorResult {
    pub case: CurveCase,
    /// Normalizing similarity (case I) or rotation (case II).
    pub frame: AffineMap,
    /// Anchors in the original frame.
    pub p1: Point,
    pub p2: Point,
    pub evidence: CaseEvidence,
}

fn check_plane_curve(curve: &SampledManifold) -> Result<()> {
    if curve.ambient_dim() != 2 || curve.intrinsic_dim() != 1 {
        return Err(Error::InvalidInput(format!(
            "need a closed polyline in the plane, got intrinsic {} ambient {}",
            curve.intrinsic_dim(),
            curve.ambient_dim()
        )));
    }
    Ok(())
}

/// Maximum of the direction-theta linear functional over the vertices,
/// with all maximizers collected at tolerance tol * extent.
pub fn support_value(curve: &SampledManifold, theta: f64, tol: f64) -> Result<SupportProbe> {
    check_plane_curve(curve)?;
    let (c, s) = (theta.cos(), theta.sin());
    let heights: Vec<f64> = curve
        .vertices()
        .iter()
        .map(|v| c * v[0] + s * v[1])
        .collect();
    let k_theta = heights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let cutoff = tol * curve.extent();
    let maximizer_indices: Vec<usize> = (0..heights.len())
        .filter(|&i| k_theta - heights[i] <= cutoff)
        .collect();
    let maximizers = maximizer_indices
        .iter()
        .map(|&i| curve.vertices()[i].clone())
        .collect();
    Ok(SupportProbe {
        theta,
        k_theta,
        maximizers,
        maximizer_indices,
    })
}

/// Convex hull of a planar point set, counterclockwise, no duplicates
/// (Andrew's monotone chain; collinear boundary points dropped).
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<(f64, f64)> = points.iter().map(|p| (p[0], p[1])).collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() < 3 {
        return pts
            .into_iter()
            .map(|(x, y)| Point::new(vec![x, y]).unwrap())
            .collect();
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower.into_iter()
        .map(|(x, y)| Point::new(vec![x, y]).unwrap())
        .collect()
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (ux, uy) = (b.0 - a.0, b.1 - a.1);
    let len2 = ux * ux + uy * uy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * ux + (p.1 - a.1) * uy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a.0 + t * ux, a.1 + t * uy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

/// Largest distance from any of the points to the hull boundary.
pub fn hull_boundary_residual(points: &[Point], hull: &[Point]) -> f64 {
    if hull.len() < 2 {
        return 0.0;
    }
    points
        .iter()
        .map(|p| {
            (0..hull.len())
                .map(|i| {
                    let a = &hull[i];
                    let b = &hull[(i + 1) % hull.len()];
                    point_segment_distance((p[0], p[1]), (a[0], a[1]), (b[0], b[1]))
                })
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Case verdict from a theta-grid scan backed by a convexity certificate.
pub fn detect_case(
    curve: &SampledManifold,
    theta_grid: usize,
    tol: f64,
) -> Result<(CurveCase, Option<SupportProbe>, f64)> {
    check_plane_curve(curve)?;
    if theta_grid < 8 {
        return Err(Error::InvalidInput(format!(
            "theta grid {theta_grid} too small, need >= 8"
        )));
    }
    let extent = curve.extent();
    // A genuine flat support edge spans more than one sample step; a tie
    // between neighboring samples straddling a smooth maximum does not.
    let spread_cutoff = (tol * extent).max(1.5 * curve.max_edge_length());
    // Scan starts at pi/2, the preferred support direction of the
    // construction, so flat-topped curves report their top edge first.
    for g in 0..theta_grid {
        let theta = std::f64::consts::FRAC_PI_2
            + 2.0 * std::f64::consts::PI * g as f64 / theta_grid as f64;
        let probe = support_value(curve, theta, tol)?;
        let spread = probe
            .maximizers
            .iter()
            .flat_map(|a| {
                probe
                    .maximizers
                    .iter()
                    .map(move |b| crate::geometry::euclidean_distance(a, b).unwrap())
            })
            .fold(0.0f64, f64::max);
        if probe.maximizers.len() >= 2 && spread > spread_cutoff {
            return Ok((CurveCase::II, Some(probe), f64::NAN));
        }
    }
    // Unique maximizers everywhere on the grid: the curve must actually
    // be the boundary of its convex hull, or the grid was too coarse.
    let hull = convex_hull(curve.vertices());
    let residual = hull_boundary_residual(curve.vertices(), &hull);
    if residual >= tol.max(1e-7) * extent {
        return Err(Error::GridTooCoarse(format!(
            "unique maximizers on a {theta_grid}-point grid but the curve is \
             {residual:.3e} away from its hull boundary; increase the grid"
        )));
    }
    Ok((CurveCase::I, None, residual))
}

/// Farthest pair of vertices (brute force) and their distance.
pub fn diameter_pair(curve: &SampledManifold) -> Result<(Point, Point, f64)> {
    let v = curve.vertices();
    if v.len() < 2 {
        return Err(Error::EmptyInput("diameter of fewer than two points"));
    }
    use rayon::prelude::*;
    let best = (0..v.len())
        .into_par_iter()
        .map(|i| {
            let (xi, yi) = (v[i][0], v[i][1]);
            let mut local = (0usize, 0usize, -1.0f64);
            for j in i + 1..v.len() {
                let (dx, dy) = (v[j][0] - xi, v[j][1] - yi);
                let d = (dx * dx + dy * dy).sqrt();
                if d > local.2 {
                    local = (i, j, d);
                }
            }
            local
        })
        .reduce(
            || (0, 0, -1.0),
            // Ties broken by index so the result does not depend on the
            // parallel reduction shape.
            |a, b| {
                if a.2 > b.2 || (a.2 == b.2 && (a.0, a.1) <= (b.0, b.1)) {
                    a
                } else {
                    b
                }
            },
        );
    if best.2 <= 0.0 {
        return Err(Error::Degenerate("all vertices coincide".into()));
    }
    Ok((v[best.0].clone(), v[best.1].clone(), best.2))
}

/// Similarity taking a -> (0,0) and a' -> (1,0), then flipping the x2
/// axis if the curve hangs further below the segment than above it.
pub fn normalize_frame_case1(
    curve: &SampledManifold,
    a: &Point,
    a_prime: &Point,
) -> Result<(SampledManifold, AffineMap)> {
    check_plane_curve(curve)?;
    let k = crate::geometry::euclidean_distance(a, a_prime)?;
    if k == 0.0 {
        return Err(Error::Degenerate("diameter endpoints coincide".into()));
    }
    let (c, s) = ((a_prime[0] - a[0]) / k, (a_prime[1] - a[1]) / k);
    // Rows rotate (c, s) onto the positive x1 axis; scale by 1/k.
    let mut m = DMatrix::from_row_slice(2, 2, &[c / k, s / k, -s / k, c / k]);
    let mut b = DVector::from_column_slice(&[
        -(c * a[0] + s * a[1]) / k,
        (s * a[0] - c * a[1]) / k,
    ]);
    let mut frame = AffineMap::new(m.clone(), b.clone())?;
    let mapped = |frame: &AffineMap| -> Result<SampledManifold> {
        let pts: Vec<Point> = curve
            .vertices()
            .iter()
            .map(|p| Point::from_vector(&frame.apply(&p.as_vector())))
            .collect();
        SampledManifold::closed_polyline(pts)
    };
    let image = mapped(&frame)?;
    let lo = image.vertices().iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
    let hi = image
        .vertices()
        .iter()
        .map(|p| p[1])
        .fold(f64::NEG_INFINITY, f64::max);
    if lo.abs() > hi.abs() {
        for j in 0..2 {
            m[(1, j)] = -m[(1, j)];
        }
        b[1] = -b[1];
        frame = AffineMap::new(m, b)?;
        return Ok((mapped(&frame)?, frame));
    }
    Ok((image, frame))
}

/// In the normalized frame: slice at two thirds of the support maximum in
/// the vertical direction and keep the horizontally extreme pair.
pub fn select_pair_case1(
    normalized: &SampledManifold,
    tol: f64,
) -> Result<(Point, Point, SupportProbe)> {
    let probe = support_value(normalized, std::f64::consts::FRAC_PI_2, tol)?;
    let k = probe.k_theta;
    if k <= 0.0 {
        return Err(Error::Degenerate(format!(
            "normalized curve does not rise above the diameter axis (k = {k})"
        )));
    }
    let level = 2.0 * k / 3.0;
    let slice = normalized.slice_with_hyperplane(1, level, tol * normalized.extent())?;
    if slice.points.len() < 2 {
        return Err(Error::Degenerate(format!(
            "slice at level {level} has {} points, need 2",
            slice.points.len()
        )));
    }
    let mut pts = slice.points.clone();
    pts.sort_by(|p, q| p[0].partial_cmp(&q[0]).unwrap());
    let p1 = pts.first().unwrap().clone();
    let p2 = pts.last().unwrap().clone();
    Ok((p1, p2, probe))
}

/// In case II: the two extreme maximizers along the support line, plus
/// the rotation sending the support direction to the positive x2 axis.
pub fn select_pair_case2(
    curve: &SampledManifold,
    theta1: f64,
    tol: f64,
) -> Result<(Point, Point, AffineMap)> {
    let probe = support_value(curve, theta1, tol)?;
    if probe.maximizers.len() < 2 {
        return Err(Error::WrongCase(format!(
            "support direction {theta1} has a unique maximizer"
        )));
    }
    // Tangential coordinate along the support line.
    let (c, s) = (theta1.cos(), theta1.sin());
    let key = |p: &Point| s * p[0] - c * p[1];
    let mut maxers = probe.maximizers.clone();
    maxers.sort_by(|p, q| key(p).partial_cmp(&key(q)).unwrap());
    let p1 = maxers.first().unwrap().clone();
    let p2 = maxers.last().unwrap().clone();
    // Rotation with second row (c, s): the support functional becomes the
    // x2 coordinate, so the whole curve sits at x2 <= k_theta1.
    let m = DMatrix::from_row_slice(2, 2, &[s, -c, c, s]);
    let frame = AffineMap::new(m, DVector::zeros(2))?;
    Ok((p1, p2, frame))
}

/// Full selection: detect the case, run the matching construction, and
/// report anchors in the original frame with all evidence.
pub fn select_circle_anchors(
    curve: &SampledManifold,
    theta_grid: usize,
    tol: f64,
) -> Result<CircleAnchorResult> {
    let (case, probe, residual) = detect_case(curve, theta_grid, tol)?;
    match case {
        CurveCase::I => {
            let (a, a_prime, k) = diameter_pair(curve)?;
            let (normalized, frame) = normalize_frame_case1(curve, &a, &a_prime)?;
            let (q1, q2, probe0) = select_pair_case1(&normalized, tol)?;
            let p1 = Point::from_vector(&frame.apply_inverse(&q1.as_vector()));
            let p2 = Point::from_vector(&frame.apply_inverse(&q2.as_vector()));
            Ok(CircleAnchorResult {
                case,
                frame,
                p1,
                p2,
                evidence: CaseEvidence::I {
                    convexity_residual: residual,
                    diameter: (a, a_prime),
                    diameter_length: k,
                    probe_theta0: probe0,
                },
            })
        }
        CurveCase::II => {
            let probe = probe.expect("case II carries its probe");
            let (p1, p2, frame) = select_pair_case2(curve, probe.theta, tol)?;
            Ok(CircleAnchorResult {
                case,
                frame,
                p1,
                p2,
                evidence: CaseEvidence::II {
                    theta1: probe.theta,
                    probe,
                },
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;
    use std::f64::consts::{FRAC_PI_2, PI};

    const TOL: f64 = 1e-9;

    #[test]
    fn support_of_circle_up() {
        let c = shapes::circle(360).unwrap();
        let probe = support_value(&c, FRAC_PI_2, TOL).unwrap();
        assert!((probe.k_theta - 1.0).abs() < 1e-12);
        assert_eq!(probe.maximizers.len(), 1);
        assert!((probe.maximizers[0][0]).abs() < 1e-12);
        assert!((probe.maximizers[0][1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn support_of_square_top_edge() {
        let sq = shapes::square(0).unwrap();
        let probe = support_value(&sq, FRAC_PI_2, TOL).unwrap();
        assert!((probe.k_theta - 1.0).abs() < 1e-12);
        assert_eq!(probe.maximizers.len(), 2);
    }

    #[test]
    fn support_is_periodic() {
        let c = shapes::ellipse(2.0, 1.0, 100).unwrap();
        let p1 = support_value(&c, 1.234, TOL).unwrap();
        let p2 = support_value(&c, 1.234 + 2.0 * PI, TOL).unwrap();
        assert!((p1.k_theta - p2.k_theta).abs() < 1e-12);
        assert_eq!(p1.maximizer_indices, p2.maximizer_indices);
    }

    #[test]
    fn support_matches_hull_oracle() {
        let c = shapes::ellipse(1.5, 0.7, 240).unwrap();
        let hull = convex_hull(c.vertices());
        for g in 0..97 {
            let theta = 2.0 * PI * g as f64 / 97.0;
            let probe = support_value(&c, theta, TOL).unwrap();
            let hull_max = hull
                .iter()
                .map(|p| theta.cos() * p[0] + theta.sin() * p[1])
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((probe.k_theta - hull_max).abs() < 1e-9);
        }
    }

    #[test]
    fn circle_is_case_one() {
        let c = shapes::circle(360).unwrap();
        let (case, _, residual) = detect_case(&c, 360, TOL).unwrap();
        assert_eq!(case, CurveCase::I);
        assert!(residual < 1e-9 * c.extent());
    }

    #[test]
    fn misaligned_grid_still_sees_circle_as_case_one() {
        // Some 720-grid directions exactly bisect adjacent samples of a
        // 1000-gon; the resulting support tie must not read as a flat
        // edge.
        let c = shapes::circle(1000).unwrap();
        let (case, _, _) = detect_case(&c, 720, TOL).unwrap();
        assert_eq!(case, CurveCase::I);
    }

    #[test]
    fn square_is_case_two_at_top() {
        let sq = shapes::square(4).unwrap();
        let (case, probe, _) = detect_case(&sq, 360, TOL).unwrap();
        assert_eq!(case, CurveCase::II);
        assert!(probe.is_some());
    }

    #[test]
    fn star_is_case_two() {
        let star = shapes::star(1.0, 0.4, 4).unwrap();
        let (case, _, _) = detect_case(&star, 720, TOL).unwrap();
        assert_eq!(case, CurveCase::II);
    }

    #[test]
    fn circle_diameter_is_two() {
        let c = shapes::circle(1000).unwrap();
        let (_, _, k) = diameter_pair(&c).unwrap();
        assert!((k - 2.0).abs() < 1e-4);
    }

    #[test]
    fn flat_ellipse_diameter() {
        let e = shapes::ellipse(2.0, 1.0, 1000).unwrap();
        let (a, b, k) = diameter_pair(&e).unwrap();
        assert!((k - 4.0).abs() < 1e-4);
        assert!(a[0].abs() > 1.99 && b[0].abs() > 1.99);
    }

    #[test]
    fn normalization_moves_diameter_to_unit_segment() {
        let c = shapes::circle(500).unwrap();
        let (a, ap, _) = diameter_pair(&c).unwrap();
        let (norm, frame) = normalize_frame_case1(&c, &a, &ap).unwrap();
        let ia = frame.apply(&a.as_vector());
        let iap = frame.apply(&ap.as_vector());
        assert!(ia.norm() < 1e-12);
        assert!((iap[0] - 1.0).abs() < 1e-12 && iap[1].abs() < 1e-12);
        // The normalized circle has radius 1/2 about (1/2, 0).
        for v in norm.vertices() {
            let r = ((v[0] - 0.5).powi(2) + v[1].powi(2)).sqrt();
            assert!((r - 0.5).abs() < 1e-3);
        }
        // Frame round-trips.
        for v in c.vertices().iter().take(10) {
            let back = frame.apply_inverse(&frame.apply(&v.as_vector()));
            assert!((back - v.as_vector()).norm() < 1e-12);
        }
    }

    #[test]
    fn rotated_pair_normalization() {
        let a = Point::new(vec![0.0, 0.0]).unwrap();
        let b = Point::new(vec![0.0, 2.0]).unwrap();
        let square = shapes::square(0).unwrap();
        let (_, frame) = normalize_frame_case1(&square, &a, &b).unwrap();
        let ib = frame.apply(&b.as_vector());
        assert!((ib[0] - 1.0).abs() < 1e-12 && ib[1].abs() < 1e-12);
    }

    #[test]
    fn case1_anchor_values_on_circle() {
        // Normalized circle: radius 1/2 about (1/2, 0); slicing at 1/3
        // gives x = 1/2 -+ sqrt(5)/6.
        let c = shapes::circle(10000).unwrap();
        let result = select_circle_anchors(&c, 720, TOL).unwrap();
        assert_eq!(result.case, CurveCase::I);
        let n1 = result.frame.apply(&result.p1.as_vector());
        let n2 = result.frame.apply(&result.p2.as_vector());
        let want_x = 5f64.sqrt() / 6.0;
        assert!((n1[0] - (0.5 - want_x)).abs() < 1e-3, "got {}", n1[0]);
        assert!((n2[0] - (0.5 + want_x)).abs() < 1e-3, "got {}", n2[0]);
        assert!((n1[1] - 1.0 / 3.0).abs() < 1e-3);
        assert!((n2[1] - 1.0 / 3.0).abs() < 1e-3);
        // Shared normalized level, exactly.
        assert!((n1[1] - n2[1]).abs() < 1e-10);
    }

    #[test]
    fn case2_anchors_on_square() {
        let sq = shapes::square(4).unwrap();
        let result = select_circle_anchors(&sq, 360, TOL).unwrap();
        assert_eq!(result.case, CurveCase::II);
        let mut xs = [result.p1[0], result.p2[0]];
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((xs[0] - 0.0).abs() < 1e-12 && (xs[1] - 1.0).abs() < 1e-12);
        assert!((result.p1[1] - 1.0).abs() < 1e-12);
        assert!((result.p2[1] - 1.0).abs() < 1e-12);
        // Rotated frame puts the whole curve at x2 <= support level.
        let level = result.frame.apply(&result.p1.as_vector())[1];
        for v in sq.vertices() {
            assert!(result.frame.apply(&v.as_vector())[1] <= level + 1e-12);
        }
    }

    #[test]
    fn unique_maximizer_rejected_in_case2() {
        let c = shapes::circle(360).unwrap();
        assert!(select_pair_case2(&c, FRAC_PI_2, TOL).is_err());
    }

    #[test]
    fn hull_of_square_has_four_corners() {
        let sq = shapes::square(7).unwrap();
        let hull = convex_hull(sq.vertices());
        assert_eq!(hull.len(), 4);
        let residual = hull_boundary_residual(sq.vertices(), &hull);
        assert!(residual < 1e-12);
    }
}
