//! Distance, distance-squared and general-position primitives.
//!
//! Everything downstream (normal forms, anchor selection, verification)
//! is phrased in terms of the types and predicates defined here.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative threshold for numerical rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// A point in R^k, k >= 1, all coordinates finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point {
    coords: Vec<f64>,
}

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::EmptyInput("point needs at least one coordinate"));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Point { coords })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn as_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.coords)
    }

    pub fn from_vector(v: &DVector<f64>) -> Self {
        Point {
            coords: v.iter().copied().collect(),
        }
    }
}

impl std::ops::Index<usize> for Point {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.coords[i]
    }
}

fn check_same_dim(a: &Point, b: &Point) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(())
}

/// Euclidean distance between two points of equal dimension.
pub fn euclidean_distance(x: &Point, y: &Point) -> Result<f64> {
    check_same_dim(x, y)?;
    Ok(x.coords
        .iter()
        .zip(&y.coords)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Ordered anchor points p_1,...,p_l together with the numerical rank of
/// the difference vectors p_1p_2,...,p_1p_l.
///
/// The set is in general position iff l = 1 or that rank equals l-1.
/// `shared_last_coord` records, when present, that every anchor's last
/// coordinate equals that level exactly (the level-fold hypothesis).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnchorSet {
    points: Vec<Point>,
    rank: usize,
    #[serde(rename = "sharedLastCoord")]
    shared_last_coord: Option<f64>,
    tolerance: f64,
}

impl AnchorSet {
    /// Build an anchor set, computing the rank certificate at `tol`.
    pub fn new(points: Vec<Point>, tol: f64) -> Result<Self> {
        let (_, rank) = is_general_position(&points, tol)?;
        let shared_last_coord = detect_shared_last(&points);
        Ok(AnchorSet {
            points,
            rank,
            shared_last_coord,
            tolerance: tol,
        })
    }

    /// Like `new` but fails unless the points are in general position.
    pub fn new_general_position(points: Vec<Point>, tol: f64) -> Result<Self> {
        let set = Self::new(points, tol)?;
        if !set.general_position() {
            return Err(Error::NotGeneralPosition {
                rank: set.rank,
                needed: set.len() - 1,
            });
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn general_position(&self) -> bool {
        self.len() == 1 || self.rank == self.len() - 1
    }

    pub fn shared_last_coord(&self) -> Option<f64> {
        self.shared_last_coord
    }

    /// Difference matrix A: n x (l-1), column j-1 = p_j - p_1 (j = 2..l).
    pub fn difference_matrix(&self) -> DMatrix<f64> {
        let n = self.dim();
        let l = self.len();
        DMatrix::from_fn(n, l.saturating_sub(1), |i, j| {
            self.points[j + 1][i] - self.points[0][i]
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: AnchorSet = serde_json::from_str(text)?;
        // Recompute the certificate rather than trusting the file.
        let mut set = AnchorSet::new(raw.points, raw.tolerance)?;
        set.shared_last_coord = raw.shared_last_coord;
        if let Some(a) = set.shared_last_coord {
            for (i, p) in set.points.iter().enumerate() {
                let last = p[p.dim() - 1];
                if last != a {
                    return Err(Error::OffHyperplane {
                        index: i,
                        value: last,
                        level: a,
                    });
                }
            }
        }
        Ok(set)
    }
}

fn detect_shared_last(points: &[Point]) -> Option<f64> {
    let first = points.first()?;
    let a = first[first.dim() - 1];
    if points.iter().all(|p| p[p.dim() - 1] == a) {
        Some(a)
    } else {
        None
    }
}

/// Evaluate the distance mapping d_{(p_1,...,p_l)} at x.
pub fn distance_map(anchors: &AnchorSet, x: &Point) -> Result<Point> {
    if x.dim() != anchors.dim() {
        return Err(Error::DimensionMismatch {
            expected: anchors.dim(),
            got: x.dim(),
        });
    }
    let coords = anchors
        .points
        .iter()
        .map(|p| euclidean_distance(p, x))
        .collect::<Result<Vec<_>>>()?;
    Point::new(coords)
}

/// Evaluate the distance-squared mapping D_{(p_1,...,p_l)} at x.
pub fn distance_squared_map(anchors: &AnchorSet, x: &Point) -> Result<Point> {
    if x.dim() != anchors.dim() {
        return Err(Error::DimensionMismatch {
            expected: anchors.dim(),
            got: x.dim(),
        });
    }
    let coords = anchors
        .points
        .iter()
        .map(|p| {
            p.coords
                .iter()
                .zip(x.coords())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .collect();
    Point::new(coords)
}

/// Exact Jacobian of the distance-squared mapping: row j is 2(x - p_j)^T.
pub fn distance_squared_jacobian(anchors: &AnchorSet, x: &Point) -> Result<DMatrix<f64>> {
    if x.dim() != anchors.dim() {
        return Err(Error::DimensionMismatch {
            expected: anchors.dim(),
            got: x.dim(),
        });
    }
    let l = anchors.len();
    let n = x.dim();
    Ok(DMatrix::from_fn(l, n, |j, i| {
        2.0 * (x[i] - anchors.points[j][i])
    }))
}

/// Component-wise square root on the non-negative orthant.
pub fn sqrt_map(v: &Point) -> Result<Point> {
    for (i, &c) in v.coords().iter().enumerate() {
        if c < 0.0 {
            return Err(Error::NegativeComponent { index: i, value: c });
        }
    }
    Point::new(v.coords().iter().map(|c| c.sqrt()).collect())
}

/// Numerical general-position test.
///
/// Returns (true, rank) iff l = 1 or the difference vectors p_1p_j have
/// rank l-1, where rank counts singular values above `tol` times the
/// largest singular value.
pub fn is_general_position(points: &[Point], tol: f64) -> Result<(bool, usize)> {
    if points.is_empty() {
        return Err(Error::EmptyInput("general-position test needs points"));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    let dim = points[0].dim();
    for p in points {
        if p.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: p.dim(),
            });
        }
    }
    let l = points.len();
    if l == 1 {
        return Ok((true, 0));
    }
    let diffs = DMatrix::from_fn(l - 1, dim, |r, c| points[r + 1][c] - points[0][c]);
    let rank = numerical_rank(&diffs, tol);
    Ok((rank == l - 1, rank))
}

/// Rank by singular values with a relative threshold.
pub fn numerical_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let svs = m.clone().singular_values();
    let largest = svs.max();
    if largest <= 0.0 {
        return 0;
    }
    svs.iter().filter(|&&s| s > tol * largest).count()
}

/// Smallest singular value of a matrix (0 for empty matrices).
pub fn min_singular_value(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().singular_values().min()
}

/// Extend m+1 seed points on the hyperplane R^{l-1} x {a} to l points in
/// general position, drawing the extra points uniformly from a box around
/// the seeds within the hyperplane.
pub fn extend_to_general_position<R: Rng>(
    points: &[Point],
    l: usize,
    hyperplane_level: f64,
    tol: f64,
    rng: &mut R,
) -> Result<AnchorSet> {
    if points.is_empty() {
        return Err(Error::EmptyInput("need at least one seed point"));
    }
    let dim = points[0].dim();
    if points.len() > l {
        return Err(Error::InvalidInput(format!(
            "{} seed points exceed requested l = {l}",
            points.len()
        )));
    }
    for (i, p) in points.iter().enumerate() {
        let last = p[p.dim() - 1];
        if last != hyperplane_level {
            return Err(Error::OffHyperplane {
                index: i,
                value: last,
                level: hyperplane_level,
            });
        }
    }
    let (gp, rank) = is_general_position(points, tol)?;
    if !gp {
        return Err(Error::NotGeneralPosition {
            rank,
            needed: points.len() - 1,
        });
    }
    if points.len() == l {
        return AnchorSet::new_general_position(points.to_vec(), tol);
    }

    // Candidate box: side 2 * max(diameter, 1) centered at p1, within the hyperplane.
    let mut diameter: f64 = 0.0;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            diameter = diameter.max(euclidean_distance(&points[i], &points[j])?);
        }
    }
    let half = diameter.max(1.0);
    let base = &points[0];

    let mut current = points.to_vec();
    const MAX_ATTEMPTS: usize = 100;
    while current.len() < l {
        let mut accepted = false;
        for _ in 0..MAX_ATTEMPTS {
            let mut coords: Vec<f64> = (0..dim - 1)
                .map(|i| base[i] + rng.gen_range(-half..half))
                .collect();
            coords.push(hyperplane_level);
            let candidate = Point::new(coords)?;
            let mut trial = current.clone();
            trial.push(candidate);
            if is_general_position(&trial, tol)?.0 {
                current = trial;
                accepted = true;
                break;
            }
        }
        if !accepted {
            return Err(Error::MaxTriesExceeded {
                stage: "extend_to_general_position",
                tries: MAX_ATTEMPTS,
                detail: format!("stuck at {} of {l} points", current.len()),
            });
        }
    }
    AnchorSet::new_general_position(current, tol)
}

/// Read a point list from CSV text: one point per line, comma-separated reals.
pub fn points_from_csv(text: &str) -> Result<Vec<Point>> {
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let coords = line
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        points.push(Point::new(coords)?);
    }
    if points.is_empty() {
        return Err(Error::EmptyInput("CSV contained no points"));
    }
    let dim = points[0].dim();
    for p in &points {
        if p.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: p.dim(),
            });
        }
    }
    Ok(points)
}

/// Write a point list as CSV text.
pub fn points_to_csv(points: &[Point]) -> String {
    let mut out = String::new();
    for p in points {
        let fields: Vec<String> = p.coords().iter().map(|c| format!("{c:.17e}")).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pt(c: &[f64]) -> Point {
        Point::new(c.to_vec()).unwrap()
    }

    #[test]
    fn distance_basics() {
        assert_eq!(euclidean_distance(&pt(&[0.0, 0.0]), &pt(&[0.0, 0.0])).unwrap(), 0.0);
        assert_eq!(euclidean_distance(&pt(&[0.0, 0.0]), &pt(&[3.0, 4.0])).unwrap(), 5.0);
        assert_relative_eq!(
            euclidean_distance(&pt(&[1.0, 1.0, 1.0]), &pt(&[2.0, 2.0, 2.0])).unwrap(),
            3f64.sqrt(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn distance_dim_mismatch() {
        assert!(euclidean_distance(&pt(&[0.0]), &pt(&[0.0, 1.0])).is_err());
    }

    #[test]
    fn distance_map_examples() {
        let a = AnchorSet::new(vec![pt(&[0.0, 0.0]), pt(&[1.0, 0.0])], DEFAULT_RANK_TOL).unwrap();
        assert_eq!(distance_map(&a, &pt(&[0.0, 0.0])).unwrap().coords(), &[0.0, 1.0]);
        let im = distance_map(&a, &pt(&[1.0, 1.0])).unwrap();
        assert_relative_eq!(im[0], 2f64.sqrt(), max_relative = 1e-15);
        assert_eq!(im[1], 1.0);

        let single = AnchorSet::new(vec![pt(&[0.0, 0.0])], DEFAULT_RANK_TOL).unwrap();
        assert_eq!(distance_map(&single, &pt(&[3.0, 4.0])).unwrap().coords(), &[5.0]);
    }

    #[test]
    fn distance_squared_map_examples() {
        let a = AnchorSet::new(vec![pt(&[0.0, 0.0]), pt(&[1.0, 0.0])], DEFAULT_RANK_TOL).unwrap();
        assert_eq!(distance_squared_map(&a, &pt(&[1.0, 1.0])).unwrap().coords(), &[2.0, 1.0]);
        assert_eq!(distance_squared_map(&a, &pt(&[0.0, 0.0])).unwrap().coords(), &[0.0, 1.0]);

        let b = AnchorSet::new(
            vec![pt(&[0.0, 0.0]), pt(&[0.0, 1.0]), pt(&[1.0, 0.0])],
            DEFAULT_RANK_TOL,
        )
        .unwrap();
        assert_eq!(
            distance_squared_map(&b, &pt(&[1.0, 1.0])).unwrap().coords(),
            &[2.0, 1.0, 1.0]
        );
    }

    #[test]
    fn sqrt_map_examples() {
        assert_eq!(sqrt_map(&pt(&[0.0, 0.0])).unwrap().coords(), &[0.0, 0.0]);
        assert_eq!(sqrt_map(&pt(&[4.0, 9.0])).unwrap().coords(), &[2.0, 3.0]);
        assert!(sqrt_map(&pt(&[-1.0])).is_err());
        let v = sqrt_map(&pt(&[2.0, 1.0])).unwrap();
        assert_relative_eq!(v[0], 2f64.sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn sqrt_of_square_is_distance() {
        let a = AnchorSet::new(vec![pt(&[0.5, -1.0]), pt(&[2.0, 3.0])], DEFAULT_RANK_TOL).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let x = pt(&[rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)]);
            let via_sq = sqrt_map(&distance_squared_map(&a, &x).unwrap()).unwrap();
            let direct = distance_map(&a, &x).unwrap();
            for j in 0..2 {
                assert_relative_eq!(via_sq[j], direct[j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn general_position_examples() {
        assert_eq!(is_general_position(&[pt(&[0.0, 0.0])], 1e-9).unwrap(), (true, 0));
        assert_eq!(
            is_general_position(&[pt(&[0.0, 0.0]), pt(&[1.0, 0.0]), pt(&[2.0, 0.0])], 1e-9).unwrap(),
            (false, 1)
        );
        assert_eq!(
            is_general_position(&[pt(&[0.0, 0.0]), pt(&[1.0, 0.0]), pt(&[0.0, 1.0])], 1e-9).unwrap(),
            (true, 2)
        );
        assert!(is_general_position(&[], 1e-9).is_err());
    }

    #[test]
    fn general_position_rigid_motion_invariant() {
        let pts = [pt(&[0.0, 0.0]), pt(&[1.0, 0.0]), pt(&[0.3, 0.7])];
        let (gp0, rank0) = is_general_position(&pts, 1e-9).unwrap();
        let (s, c) = 0.73f64.sin_cos();
        let moved: Vec<Point> = pts
            .iter()
            .map(|p| pt(&[c * p[0] - s * p[1] + 5.0, s * p[0] + c * p[1] - 2.0]))
            .collect();
        let (gp1, rank1) = is_general_position(&moved, 1e-9).unwrap();
        assert_eq!((gp0, rank0), (gp1, rank1));
    }

    #[test]
    fn extend_keeps_hyperplane_and_rank() {
        let a = 0.25;
        let seeds = vec![pt(&[0.0, 0.0, a]), pt(&[1.0, 0.0, a])];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let set = extend_to_general_position(&seeds, 3, a, 1e-9, &mut rng).unwrap();
        assert_eq!(set.len(), 3);
        assert!(set.general_position());
        assert_eq!(set.points()[0], seeds[0]);
        assert_eq!(set.points()[1], seeds[1]);
        for p in set.points() {
            assert_eq!(p[2], a);
        }
        assert_eq!(set.shared_last_coord(), Some(a));
    }

    #[test]
    fn extend_already_complete() {
        let a = 3.0;
        let seeds = vec![pt(&[0.0, a]), pt(&[1.0, a])];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let set = extend_to_general_position(&seeds, 2, a, 1e-9, &mut rng).unwrap();
        assert_eq!(set.points(), &seeds[..]);
    }

    #[test]
    fn extend_rejects_bad_seeds() {
        let a = 1.0;
        let collinear = vec![pt(&[0.0, 0.0, a]), pt(&[1.0, 0.0, a]), pt(&[2.0, 0.0, a])];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!(matches!(
            extend_to_general_position(&collinear, 3, a, 1e-9, &mut rng),
            Err(Error::NotGeneralPosition { .. })
        ));
        let off = vec![pt(&[0.0, 0.0, a]), pt(&[1.0, 0.0, 0.5])];
        assert!(matches!(
            extend_to_general_position(&off, 3, a, 1e-9, &mut rng),
            Err(Error::OffHyperplane { .. })
        ));
    }

    #[test]
    fn extend_deterministic_for_seed() {
        let a = 0.25;
        let seeds = vec![pt(&[0.0, 0.0, a]), pt(&[1.0, 0.0, a])];
        let s1 = extend_to_general_position(&seeds, 3, a, 1e-9, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let s2 = extend_to_general_position(&seeds, 3, a, 1e-9, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(s1.points(), s2.points());
    }

    #[test]
    fn anchor_set_json_round_trip() {
        let set = AnchorSet::new(
            vec![pt(&[0.0, 0.0, 1.0]), pt(&[1.0, 0.5, 1.0])],
            DEFAULT_RANK_TOL,
        )
        .unwrap();
        let text = set.to_json().unwrap();
        let back = AnchorSet::from_json(&text).unwrap();
        assert_eq!(back.points(), set.points());
        assert_eq!(back.shared_last_coord(), Some(1.0));
        assert_eq!(back.rank(), set.rank());
    }

    #[test]
    fn csv_round_trip() {
        let pts = vec![pt(&[0.0, 1.5]), pt(&[-2.25, 3.0])];
        let text = points_to_csv(&pts);
        let back = points_from_csv(&text).unwrap();
        assert_eq!(back, pts);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let a = AnchorSet::new(
            vec![pt(&[0.3, -1.2, 4.0]), pt(&[2.0, 0.1, -0.5])],
            DEFAULT_RANK_TOL,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = 1e-6;
        for _ in 0..50 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let x = pt(&x);
            let jac = distance_squared_jacobian(&a, &x).unwrap();
            for i in 0..3 {
                let mut xp = x.coords().to_vec();
                let mut xm = x.coords().to_vec();
                xp[i] += h;
                xm[i] -= h;
                let fp = distance_squared_map(&a, &pt(&xp)).unwrap();
                let fm = distance_squared_map(&a, &pt(&xm)).unwrap();
                for j in 0..2 {
                    let fd = (fp[j] - fm[j]) / (2.0 * h);
                    let scale = jac[(j, i)].abs().max(1.0);
                    assert!((jac[(j, i)] - fd).abs() / scale < 1e-6);
                }
            }
        }
    }
}
