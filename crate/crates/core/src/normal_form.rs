//! Explicit diffeomorphism chains reducing distance-squared mappings to
//! fold and inclusion normal forms.
//!
//! For anchors p_1,...,p_l in general position the distance-squared
//! mapping is conjugate, by affine maps and quadratic shears recorded in
//! a [`DiffeoChain`], to
//!
//! * the definite fold (x_1,...,x_{l-1}, x_l^2+...+x_n^2) when 2 <= l <= n,
//! * the inclusion (x_1,...,x_n, 0,...,0) when n < l,
//! * the level fold (x_1,...,x_{l-1}, (x_l-a)^2+a) when l = n and all
//!   anchors share last coordinate a (target-side maps only).
//!
//! Chains store exact inverses at construction time and are certified
//! numerically by [`verify_fold_form`].

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{distance_squared_jacobian, distance_squared_map, AnchorSet, Point};
use crate::report::{CheckResult, VerificationReport};

/// Residual threshold for certified chains.
pub const FOLD_FORM_TOL: f64 = 1e-8;
/// Default half-width of the verification sampling box.
pub const DEFAULT_VERIFY_BOX: f64 = 10.0;
/// Default sample count for chain verification.
pub const DEFAULT_VERIFY_SAMPLES: usize = 1000;

/// Which side of the conjugation a map acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Source,
    Target,
}

/// Invertible affine map y = M x + b with the inverse of M stored.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AffineMap {
    matrix: Vec<Vec<f64>>,
    offset: Vec<f64>,
    #[serde(skip)]
    cached: Option<AffineCache>,
}

#[derive(Debug, Clone)]
struct AffineCache {
    m: DMatrix<f64>,
    m_inv: DMatrix<f64>,
    b: DVector<f64>,
}

impl AffineMap {
    pub fn new(m: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() != b.len() {
            return Err(Error::InvalidInput(
                "affine map needs a square matrix matching the offset length".into(),
            ));
        }
        let m_inv = m
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Degenerate("affine map matrix is singular".into()))?;
        Ok(AffineMap {
            matrix: matrix_rows(&m),
            offset: b.iter().copied().collect(),
            cached: Some(AffineCache { m, m_inv, b }),
        })
    }

    pub fn identity(dim: usize) -> Self {
        AffineMap::new(DMatrix::identity(dim, dim), DVector::zeros(dim)).unwrap()
    }

    pub fn translation(b: DVector<f64>) -> Self {
        let dim = b.len();
        AffineMap::new(DMatrix::identity(dim, dim), b).unwrap()
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    fn cache(&self) -> &AffineCache {
        self.cached.as_ref().expect("affine cache populated")
    }

    /// Rebuild the cached inverse, e.g. after deserialization.
    fn rehydrate(&mut self) -> Result<()> {
        if self.cached.is_some() {
            return Ok(());
        }
        let n = self.offset.len();
        if self.matrix.len() != n || self.matrix.iter().any(|r| r.len() != n) {
            return Err(Error::Parse("affine matrix shape mismatch".into()));
        }
        let m = DMatrix::from_fn(n, n, |i, j| self.matrix[i][j]);
        let b = DVector::from_column_slice(&self.offset);
        *self = AffineMap::new(m, b)?;
        Ok(())
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.cache().m
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let c = self.cache();
        &c.m * x + &c.b
    }

    pub fn apply_inverse(&self, y: &DVector<f64>) -> DVector<f64> {
        let c = self.cache();
        &c.m_inv * (y - &c.b)
    }
}

/// Map that adds a quadratic form of the other coordinates to one
/// coordinate: y_t = x_t + x^T Q x, y_i = x_i otherwise.
///
/// Q is symmetric with zero row and column at index t, so the map is
/// triangular and inverts exactly: x_t = y_t - y^T Q y.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadraticShear {
    target_index: usize,
    coeffs: Vec<Vec<f64>>,
    #[serde(skip)]
    cached: Option<DMatrix<f64>>,
}

impl QuadraticShear {
    pub fn new(target_index: usize, q: DMatrix<f64>) -> Result<Self> {
        let n = q.nrows();
        if q.ncols() != n || target_index >= n {
            return Err(Error::InvalidInput("quadratic shear shape mismatch".into()));
        }
        for i in 0..n {
            if q[(i, target_index)] != 0.0 || q[(target_index, i)] != 0.0 {
                return Err(Error::InvalidInput(
                    "quadratic shear must not involve the target coordinate".into(),
                ));
            }
            for j in 0..n {
                if (q[(i, j)] - q[(j, i)]).abs() > 0.0 {
                    return Err(Error::InvalidInput("quadratic form must be symmetric".into()));
                }
            }
        }
        Ok(QuadraticShear {
            target_index,
            coeffs: matrix_rows(&q),
            cached: Some(q),
        })
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    fn q(&self) -> &DMatrix<f64> {
        self.cached.as_ref().expect("shear cache populated")
    }

    fn rehydrate(&mut self) -> Result<()> {
        if self.cached.is_some() {
            return Ok(());
        }
        let n = self.coeffs.len();
        if self.coeffs.iter().any(|r| r.len() != n) {
            return Err(Error::Parse("quadratic shear shape mismatch".into()));
        }
        let q = DMatrix::from_fn(n, n, |i, j| self.coeffs[i][j]);
        *self = QuadraticShear::new(self.target_index, q)?;
        Ok(())
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = x.clone();
        y[self.target_index] += (x.transpose() * self.q() * x)[(0, 0)];
        y
    }

    pub fn apply_inverse(&self, y: &DVector<f64>) -> DVector<f64> {
        // Off-target coordinates are unchanged, so the form evaluates identically.
        let mut x = y.clone();
        x[self.target_index] -= (y.transpose() * self.q() * y)[(0, 0)];
        x
    }
}

/// One invertible stage of a chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Stage {
    Affine(AffineMap),
    QuadShear(QuadraticShear),
}

impl Stage {
    pub fn dim(&self) -> usize {
        match self {
            Stage::Affine(a) => a.dim(),
            Stage::QuadShear(s) => s.dim(),
        }
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Stage::Affine(a) => a.apply(x),
            Stage::QuadShear(s) => s.apply(x),
        }
    }

    pub fn apply_inverse(&self, y: &DVector<f64>) -> DVector<f64> {
        match self {
            Stage::Affine(a) => a.apply_inverse(y),
            Stage::QuadShear(s) => s.apply_inverse(y),
        }
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        match self {
            Stage::Affine(a) => a.matrix().clone(),
            Stage::QuadShear(s) => {
                let n = s.dim();
                let mut j = DMatrix::identity(n, n);
                let grad = s.q() * x * 2.0;
                for i in 0..n {
                    j[(s.target_index, i)] += grad[i];
                }
                j
            }
        }
    }

    fn rehydrate(&mut self) -> Result<()> {
        match self {
            Stage::Affine(a) => a.rehydrate(),
            Stage::QuadShear(s) => s.rehydrate(),
        }
    }
}

/// The normal form a chain reduces to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum ChainKind {
    /// (x_1,...,x_{l-1}, x_l^2 + ... + x_n^2), 2 <= l <= n.
    Fold,
    /// (x_1,...,x_n, 0,...,0), n < l.
    Inclusion,
    /// (x_1,...,x_{l-1}, (x_l - a)^2 + a), l = n, target maps only.
    LevelFold { level: f64 },
}

/// Ordered invertible source/target coordinate changes conjugating a
/// distance-squared mapping to its normal form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiffeoChain {
    source_maps: Vec<Stage>,
    target_maps: Vec<Stage>,
    anchors: AnchorSet,
    kind: ChainKind,
    /// Condition number sigma_max/sigma_min of the anchor difference matrix.
    condition: f64,
}

impl DiffeoChain {
    pub fn kind(&self) -> ChainKind {
        self.kind
    }

    pub fn anchors(&self) -> &AnchorSet {
        &self.anchors
    }

    pub fn source_maps(&self) -> &[Stage] {
        &self.source_maps
    }

    pub fn target_maps(&self) -> &[Stage] {
        &self.target_maps
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// Source dimension n.
    pub fn source_dim(&self) -> usize {
        self.anchors.dim()
    }

    /// Target dimension l.
    pub fn target_dim(&self) -> usize {
        self.anchors.len()
    }

    /// Apply only the composed target maps (the diffeomorphism H).
    pub fn apply_target(&self, y: &Point) -> Result<Point> {
        if y.dim() != self.target_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.target_dim(),
                got: y.dim(),
            });
        }
        let mut v = y.as_vector();
        for stage in &self.target_maps {
            v = stage.apply(&v);
        }
        Ok(Point::from_vector(&v))
    }

    /// The declared normal form evaluated at a source point.
    pub fn normal_form_value(&self, x: &DVector<f64>) -> DVector<f64> {
        let l = self.target_dim();
        let n = self.source_dim();
        match self.kind {
            ChainKind::Fold => {
                let mut y = DVector::zeros(l);
                for i in 0..l - 1 {
                    y[i] = x[i];
                }
                y[l - 1] = (l - 1..n).map(|j| x[j] * x[j]).sum();
                y
            }
            ChainKind::Inclusion => {
                let mut y = DVector::zeros(l);
                for i in 0..n {
                    y[i] = x[i];
                }
                y
            }
            ChainKind::LevelFold { level } => {
                let mut y = DVector::zeros(l);
                for i in 0..l - 1 {
                    y[i] = x[i];
                }
                let d = x[l - 1] - level;
                y[l - 1] = d * d + level;
                y
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ChainFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ChainFile = serde_json::from_str(text)?;
        file.into_chain()
    }
}

/// On-disk layout: a flat stage list tagged with the side each map acts on.
#[derive(Serialize, Deserialize)]
struct ChainFile {
    #[serde(flatten)]
    kind: ChainKind,
    anchors: AnchorSet,
    condition: f64,
    stages: Vec<SidedStage>,
}

#[derive(Serialize, Deserialize)]
struct SidedStage {
    side: Side,
    #[serde(flatten)]
    stage: Stage,
}

impl From<&DiffeoChain> for ChainFile {
    fn from(chain: &DiffeoChain) -> Self {
        let mut stages = Vec::new();
        for s in &chain.source_maps {
            stages.push(SidedStage {
                side: Side::Source,
                stage: s.clone(),
            });
        }
        for s in &chain.target_maps {
            stages.push(SidedStage {
                side: Side::Target,
                stage: s.clone(),
            });
        }
        ChainFile {
            kind: chain.kind,
            anchors: chain.anchors.clone(),
            condition: chain.condition,
            stages,
        }
    }
}

impl ChainFile {
    fn into_chain(self) -> Result<DiffeoChain> {
        let mut source_maps = Vec::new();
        let mut target_maps = Vec::new();
        for mut sided in self.stages {
            sided.stage.rehydrate()?;
            match sided.side {
                Side::Source => source_maps.push(sided.stage),
                Side::Target => target_maps.push(sided.stage),
            }
        }
        Ok(DiffeoChain {
            source_maps,
            target_maps,
            anchors: self.anchors,
            kind: self.kind,
            condition: self.condition,
        })
    }
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// H1 of the reduction: target affine map cancelling the quadratic terms
/// in all but one component,
/// X -> (1/2 (X_1 - X_2 + |p_1-p_2|^2), ..., 1/2 (X_1 - X_l + |p_1-p_l|^2), X_1).
fn stage_h1(anchors: &AnchorSet) -> Result<Stage> {
    let l = anchors.len();
    let mut m = DMatrix::zeros(l, l);
    let mut b = DVector::zeros(l);
    let p1 = &anchors.points()[0];
    for i in 0..l - 1 {
        m[(i, 0)] = 0.5;
        m[(i, i + 1)] = -0.5;
        let d2: f64 = (0..anchors.dim())
            .map(|j| {
                let d = p1[j] - anchors.points()[i + 1][j];
                d * d
            })
            .sum();
        b[i] = 0.5 * d2;
    }
    m[(l - 1, 0)] = 1.0;
    Ok(Stage::Affine(AffineMap::new(m, b)?))
}

/// H2: source translation by p_1.
fn stage_h2(anchors: &AnchorSet) -> Stage {
    Stage::Affine(AffineMap::translation(anchors.points()[0].as_vector()))
}

/// Target linear map acting as `head_map` on the first l-1 coordinates and
/// fixing the last one (block matrix [B 0; 0 1]).
fn stage_h3(head_map: DMatrix<f64>) -> Result<Stage> {
    let k = head_map.nrows();
    let l = k + 1;
    let mut m = DMatrix::identity(l, l);
    m.view_mut((0, 0), (k, k)).copy_from(&head_map);
    Ok(Stage::Affine(AffineMap::new(m, DVector::zeros(l))?))
}

/// Pick a row permutation of the n x (l-1) difference matrix making the
/// leading (l-1) x (l-1) block invertible, via column-pivoted QR of A^T.
fn row_selection(a: &DMatrix<f64>) -> Vec<usize> {
    let n = a.nrows();
    let k = a.ncols();
    // Greedy pivoting on A^T columns (rows of A) by residual norm.
    let mut cols: Vec<DVector<f64>> = (0..n).map(|i| a.row(i).transpose()).collect();
    let mut selected = Vec::with_capacity(k);
    let mut remaining: Vec<usize> = (0..n).collect();
    for _ in 0..k {
        let (pos, &best) = remaining
            .iter()
            .enumerate()
            .max_by(|x, y| {
                cols[*x.1]
                    .norm()
                    .partial_cmp(&cols[*y.1].norm())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .expect("at least one remaining row");
        remaining.remove(pos);
        let pivot = cols[best].clone();
        let norm2 = pivot.norm_squared();
        if norm2 > 0.0 {
            for &r in &remaining {
                let proj = pivot.dot(&cols[r]) / norm2;
                let reduced = &cols[r] - &pivot * proj;
                cols[r] = reduced;
            }
        }
        selected.push(best);
    }
    let mut order = selected;
    for i in 0..n {
        if !order.contains(&i) {
            order.push(i);
        }
    }
    order
}

/// Permutation matrix P with (P x)_{order[j]} = x_j, i.e. coordinate j of
/// the new frame lands on original coordinate order[j].
fn permutation_stage(order: &[usize]) -> Result<Stage> {
    let n = order.len();
    let mut m = DMatrix::zeros(n, n);
    for (j, &i) in order.iter().enumerate() {
        m[(i, j)] = 1.0;
    }
    Ok(Stage::Affine(AffineMap::new(m, DVector::zeros(n))?))
}

fn condition_number(a: &DMatrix<f64>) -> f64 {
    let svs = a.clone().singular_values();
    let max = svs.max();
    let min = svs.min();
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Reduce D_{anchors} (2 <= l <= n, general position) to the definite fold
/// normal form.
pub fn build_fold_reduction(anchors: &AnchorSet) -> Result<DiffeoChain> {
    let l = anchors.len();
    let n = anchors.dim();
    if l < 2 {
        return Err(Error::WrongCase(format!("fold case needs l >= 2, got l = {l}")));
    }
    if l > n {
        return Err(Error::WrongCase(format!(
            "fold case needs l <= n, got l = {l}, n = {n}"
        )));
    }
    if !anchors.general_position() {
        return Err(Error::NotGeneralPosition {
            rank: anchors.rank(),
            needed: l - 1,
        });
    }

    let a = anchors.difference_matrix(); // n x (l-1)
    let condition = condition_number(&a);

    let h1 = stage_h1(anchors)?;
    let h2 = stage_h2(anchors);

    // Row permutation so the leading (l-1) x (l-1) block is invertible.
    let order = row_selection(&a);
    let h_perm = permutation_stage(&order)?;
    let a_perm = DMatrix::from_fn(n, l - 1, |i, j| a[(order[i], j)]);

    let top = a_perm.view((0, 0), (l - 1, l - 1)).into_owned();
    let bottom = a_perm.view((l - 1, 0), (n - l + 1, l - 1)).into_owned();
    let top_inv = top
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("leading block of difference matrix is singular".into()))?;
    // alpha: (n-l+1) x (l-1) coupling block of A B = [I; alpha].
    let alpha = &bottom * &top_inv;

    // H3 = [B 0; 0 1] acting on the target; head map is B^T = top_inv^T.
    let h3 = stage_h3(top_inv.transpose())?;

    // H4: source shear x_head -> x_head - alpha^T x_tail (matrix C^{-1}).
    let g = alpha.transpose(); // (l-1) x (n-l+1)
    let mut k_mat = DMatrix::identity(n, n);
    k_mat
        .view_mut((0, l - 1), (l - 1, n - l + 1))
        .copy_from(&(-&g));
    let h4 = Stage::Affine(AffineMap::new(k_mat, DVector::zeros(n))?);

    // Completing the square of |h - G t|^2 + |t|^2 over the tail variables t:
    //   = (t - S^{-1} G^T h)^T S (t - S^{-1} G^T h) + h^T (I - G S^{-1} G^T) h,
    // with S = G^T G + I symmetric positive definite.
    let s = &g.transpose() * &g + DMatrix::identity(n - l + 1, n - l + 1);
    let chol = s
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Degenerate("square-completion form not positive definite".into()))?;
    let s_inv = chol.inverse();
    let l_factor = chol.l();
    let l_inv_t = l_factor
        .transpose()
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("Cholesky factor not invertible".into()))?;

    // H5: subtract the residual head form from the last target coordinate.
    let w = DMatrix::identity(l - 1, l - 1) - &g * &s_inv * &g.transpose();
    let mut q5 = DMatrix::zeros(l, l);
    q5.view_mut((0, 0), (l - 1, l - 1)).copy_from(&(-&w));
    // Symmetrize exactly against rounding in the products above.
    let q5 = (&q5 + &q5.transpose()) * 0.5;
    let h5 = Stage::QuadShear(QuadraticShear::new(l - 1, q5)?);

    // H6: source affine sending new tail u to t = L^{-T} u + S^{-1} G^T h.
    let mut m6 = DMatrix::identity(n, n);
    m6.view_mut((l - 1, 0), (n - l + 1, l - 1))
        .copy_from(&(&s_inv * &g.transpose()));
    m6.view_mut((l - 1, l - 1), (n - l + 1, n - l + 1))
        .copy_from(&l_inv_t);
    let h6 = Stage::Affine(AffineMap::new(m6, DVector::zeros(n))?);

    Ok(DiffeoChain {
        source_maps: vec![h6, h4, h_perm, h2],
        target_maps: vec![h1, h3, h5],
        anchors: anchors.clone(),
        kind: ChainKind::Fold,
        condition,
    })
}

/// Reduce D_{anchors} (n < l, first n+1 anchors in general position) to the
/// inclusion (x_1,...,x_n, 0,...,0).
pub fn build_inclusion_reduction(anchors: &AnchorSet) -> Result<DiffeoChain> {
    let l = anchors.len();
    let n = anchors.dim();
    if l <= n {
        return Err(Error::WrongCase(format!(
            "inclusion case needs n < l, got l = {l}, n = {n}"
        )));
    }
    let leading = anchors.points()[..n + 1].to_vec();
    let (gp, rank) = crate::geometry::is_general_position(&leading, anchors.tolerance())?;
    if !gp {
        return Err(Error::NotGeneralPosition { rank, needed: n });
    }

    let a = anchors.difference_matrix(); // n x (l-1), first n columns invertible
    let condition = condition_number(&a.view((0, 0), (n, n)).into_owned());

    let h1 = stage_h1(anchors)?;
    let h2 = stage_h2(anchors);

    // A^T = [R1; R2] with R1 = first n rows (invertible). The head map
    // [R1^{-1} 0; -R2 R1^{-1} I] sends A^T x to (x, 0,...,0).
    let at = a.transpose(); // (l-1) x n
    let r1 = at.view((0, 0), (n, n)).into_owned();
    let r2 = at.view((n, 0), (l - 1 - n, n)).into_owned();
    let r1_inv = r1
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("leading difference block is singular".into()))?;
    let mut head = DMatrix::identity(l - 1, l - 1);
    head.view_mut((0, 0), (n, n)).copy_from(&r1_inv);
    head.view_mut((n, 0), (l - 1 - n, n))
        .copy_from(&(-&r2 * &r1_inv));
    let h3 = stage_h3(head)?;

    // H~4: kill the surviving |x|^2 in the last target coordinate.
    let mut q = DMatrix::zeros(l, l);
    for j in 0..n {
        q[(j, j)] = -1.0;
    }
    let h4t = Stage::QuadShear(QuadraticShear::new(l - 1, q)?);

    Ok(DiffeoChain {
        source_maps: vec![h2],
        target_maps: vec![h1, h3, h4t],
        anchors: anchors.clone(),
        kind: ChainKind::Inclusion,
        condition,
    })
}

/// Target diffeomorphism H with H o D_{anchors} = (x_1,...,x_{l-1},(x_l-a)^2+a)
/// for l = n anchors sharing last coordinate a. Source side is untouched,
/// so the fold's singular set stays on the hyperplane x_l = a.
pub fn build_level_fold(anchors: &AnchorSet) -> Result<DiffeoChain> {
    let l = anchors.len();
    let n = anchors.dim();
    if l != n || l < 2 {
        return Err(Error::WrongCase(format!(
            "level fold needs l = n >= 2, got l = {l}, n = {n}"
        )));
    }
    let a_level = anchors.shared_last_coord().ok_or_else(|| {
        Error::InvalidInput("level fold needs anchors with a shared last coordinate".into())
    })?;
    if !anchors.general_position() {
        return Err(Error::NotGeneralPosition {
            rank: anchors.rank(),
            needed: l - 1,
        });
    }

    let a = anchors.difference_matrix(); // n x (l-1), last row is zero
    let condition = condition_number(&a);

    let h1 = stage_h1(anchors)?;

    let top = a.view((0, 0), (l - 1, l - 1)).into_owned();
    let top_inv = top
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("difference matrix head block is singular".into()))?;
    let h3 = stage_h3(top_inv.transpose())?;

    // H4' split into a quadratic shear and a translation:
    // X_l -= sum_{j<l} X_j^2, then add (p_11,...,p_{1,l-1}, a).
    let mut q = DMatrix::zeros(l, l);
    for j in 0..l - 1 {
        q[(j, j)] = -1.0;
    }
    let shear = Stage::QuadShear(QuadraticShear::new(l - 1, q)?);
    let p1 = &anchors.points()[0];
    let mut b = DVector::zeros(l);
    for j in 0..l - 1 {
        b[j] = p1[j];
    }
    b[l - 1] = a_level;
    let translate = Stage::Affine(AffineMap::translation(b));

    Ok(DiffeoChain {
        source_maps: Vec::new(),
        target_maps: vec![h1, h3, shear, translate],
        anchors: anchors.clone(),
        kind: ChainKind::LevelFold { level: a_level },
        condition,
    })
}

/// Evaluate the conjugated map: source maps, then D_{anchors}, then target maps.
pub fn evaluate_chain(chain: &DiffeoChain, x: &Point) -> Result<Point> {
    if x.dim() != chain.source_dim() {
        return Err(Error::DimensionMismatch {
            expected: chain.source_dim(),
            got: x.dim(),
        });
    }
    let mut v = x.as_vector();
    for stage in &chain.source_maps {
        v = stage.apply(&v);
    }
    let mut y = distance_squared_map(chain.anchors(), &Point::from_vector(&v))?.as_vector();
    for stage in &chain.target_maps {
        y = stage.apply(&y);
    }
    Ok(Point::from_vector(&y))
}

/// Exact Jacobian of the conjugated map by the chain rule.
pub fn chain_jacobian(chain: &DiffeoChain, x: &Point) -> Result<DMatrix<f64>> {
    if x.dim() != chain.source_dim() {
        return Err(Error::DimensionMismatch {
            expected: chain.source_dim(),
            got: x.dim(),
        });
    }
    let mut v = x.as_vector();
    let mut jac = DMatrix::identity(chain.source_dim(), chain.source_dim());
    for stage in &chain.source_maps {
        jac = stage.jacobian(&v) * jac;
        v = stage.apply(&v);
    }
    let p = Point::from_vector(&v);
    jac = distance_squared_jacobian(chain.anchors(), &p)? * jac;
    let mut y = distance_squared_map(chain.anchors(), &p)?.as_vector();
    for stage in &chain.target_maps {
        jac = stage.jacobian(&y) * jac;
        y = stage.apply(&y);
    }
    Ok(jac)
}

/// Sample the conjugated map against its declared normal form and report
/// the worst relative residual.
pub fn verify_fold_form<R: Rng>(
    chain: &DiffeoChain,
    sample_count: usize,
    half_box: f64,
    rng: &mut R,
) -> Result<VerificationReport> {
    let n = chain.source_dim();
    let mut worst = 0.0f64;
    let mut worst_point: Option<Point> = None;
    for _ in 0..sample_count {
        let coords: Vec<f64> = (0..n).map(|_| rng.gen_range(-half_box..half_box)).collect();
        let x = Point::new(coords)?;
        let got = evaluate_chain(chain, &x)?.as_vector();
        let want = chain.normal_form_value(&x.as_vector());
        let scale = want.norm().max(1.0);
        let residual = (got - want).norm() / scale;
        if residual > worst {
            worst = residual;
            worst_point = Some(x);
        }
    }
    let name = match chain.kind() {
        ChainKind::Fold => "fold_normal_form",
        ChainKind::Inclusion => "inclusion_normal_form",
        ChainKind::LevelFold { .. } => "level_fold_normal_form",
    };
    let mut report = VerificationReport::new();
    let note = format!(
        "samples = {sample_count}, box = {half_box}, condition = {:.3e}",
        chain.condition()
    );
    let check = if worst < FOLD_FORM_TOL {
        CheckResult::pass(name, worst).with_note(note)
    } else {
        CheckResult::fail(name, worst)
            .with_witness(worst_point.into_iter().collect())
            .with_note(note)
    };
    report.push(check);
    Ok(report)
}
