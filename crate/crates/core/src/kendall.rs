//! Preshape sphere and Kendall shape space of `k` landmarks in `m` dimensions.
//!
//! All matrices are `k×m`, stored row-major (one landmark per row). The
//! inner product is the Frobenius product `tr(Aᵀ B)`, which on the flat
//! storage is the ordinary dot product.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sphere;

/// Default threshold on the centered Frobenius norm below which a
/// configuration has no defined shape.
pub const DEGENERACY_THRESHOLD: f64 = 1e-12;

const INVARIANT_TOL: f64 = 1e-10;

/// Raw landmark coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    k: usize,
    m: usize,
    data: Vec<f64>,
}

impl Configuration {
    pub fn new(k: usize, m: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(k, m)?;
        if data.len() != k * m {
            return Err(Error::mismatch(k * m, data.len()));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite landmark coordinate".into()));
        }
        Ok(Configuration { k, m, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidInput("ragged landmark rows".into()));
        }
        Self::new(k, m, rows.concat())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, landmark: usize, coord: usize) -> f64 {
        self.data[landmark * self.m + coord]
    }

    /// Similarity transform `s·X·R + 1·tᵀ`.
    pub fn transformed(&self, scale: f64, rotation: &Rotation, translation: &[f64]) -> Self {
        let mut data = rotate_rows(&self.data, self.k, self.m, rotation);
        for row in data.chunks_mut(self.m) {
            for (x, t) in row.iter_mut().zip(translation) {
                *x = scale * *x + t;
            }
        }
        Configuration {
            k: self.k,
            m: self.m,
            data,
        }
    }
}

fn check_dims(k: usize, m: usize) -> Result<()> {
    if !(m == 2 || m == 3) {
        return Err(Error::InvalidInput(format!(
            "ambient dimension must be 2 or 3, got {m}"
        )));
    }
    if k < 3 || k <= m {
        return Err(Error::InvalidInput(format!(
            "need at least 3 landmarks and more landmarks than dimensions (k={k}, m={m})"
        )));
    }
    Ok(())
}

/// A centered, unit-Frobenius-norm configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreShape {
    k: usize,
    m: usize,
    data: Vec<f64>,
}

impl PreShape {
    /// Wraps data that is already centered and normalized, checking both.
    pub fn from_normalized(k: usize, m: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(k, m)?;
        if data.len() != k * m {
            return Err(Error::mismatch(k * m, data.len()));
        }
        let sums = column_sums(&data, m);
        if sums.iter().any(|s| s.abs() > INVARIANT_TOL) {
            return Err(Error::InvalidInput("preshape is not centered".into()));
        }
        if (sphere::norm(&data) - 1.0).abs() > INVARIANT_TOL {
            return Err(Error::InvalidInput("preshape does not have unit norm".into()));
        }
        Ok(PreShape { k, m, data })
    }

    /// Re-centers and renormalizes possibly drifted data without the
    /// singularity check. Used on results of exact sphere operations.
    pub(crate) fn renormalized(k: usize, m: usize, mut data: Vec<f64>) -> Self {
        center_in_place(&mut data, m);
        let n = sphere::norm(&data);
        data.iter_mut().for_each(|x| *x /= n);
        PreShape { k, m, data }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_configuration(&self) -> Configuration {
        Configuration {
            k: self.k,
            m: self.m,
            data: self.data.clone(),
        }
    }

    /// The same preshape acted on by `R` from the right.
    pub fn rotated(&self, rotation: &Rotation) -> PreShape {
        PreShape {
            k: self.k,
            m: self.m,
            data: rotate_rows(&self.data, self.k, self.m, rotation),
        }
    }

    pub fn inner(&self, other: &PreShape) -> f64 {
        sphere::dot(&self.data, &other.data)
    }

    pub(crate) fn same_dims(&self, other: &PreShape) -> Result<()> {
        if self.k != other.k || self.m != other.m {
            return Err(Error::mismatch(
                format!("{}x{}", self.k, self.m),
                format!("{}x{}", other.k, other.m),
            ));
        }
        Ok(())
    }
}

/// A tangent vector to the preshape sphere. The base point is not stored;
/// use [`TangentVector::is_tangent_at`] to check membership.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangentVector {
    k: usize,
    m: usize,
    data: Vec<f64>,
}

impl TangentVector {
    pub fn zeros(k: usize, m: usize) -> Self {
        TangentVector {
            k,
            m,
            data: vec![0.0; k * m],
        }
    }

    /// Wraps raw data without projecting it.
    pub fn from_raw(k: usize, m: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != k * m {
            return Err(Error::mismatch(k * m, data.len()));
        }
        Ok(TangentVector { k, m, data })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn norm(&self) -> f64 {
        sphere::norm(&self.data)
    }

    pub fn inner(&self, other: &TangentVector) -> f64 {
        sphere::dot(&self.data, &other.data)
    }

    pub fn scaled(&self, s: f64) -> TangentVector {
        TangentVector {
            k: self.k,
            m: self.m,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn rotated(&self, rotation: &Rotation) -> TangentVector {
        TangentVector {
            k: self.k,
            m: self.m,
            data: rotate_rows(&self.data, self.k, self.m, rotation),
        }
    }

    /// Centered and orthogonal to `base` within `tol`.
    pub fn is_tangent_at(&self, base: &PreShape, tol: f64) -> bool {
        column_sums(&self.data, self.m).iter().all(|s| s.abs() < tol)
            && sphere::dot(&self.data, &base.data).abs() < tol
    }
}

/// An element of `SO(m)`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rotation {
    m: usize,
    data: Vec<f64>,
}

impl Rotation {
    pub fn identity(m: usize) -> Self {
        let mut data = vec![0.0; m * m];
        for i in 0..m {
            data[i * m + i] = 1.0;
        }
        Rotation { m, data }
    }

    /// Checks orthogonality and unit determinant.
    pub fn new(m: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != m * m {
            return Err(Error::mismatch(m * m, data.len()));
        }
        let r = DMatrix::from_row_slice(m, m, &data);
        let gram = r.transpose() * &r;
        let orth_err = (gram - DMatrix::identity(m, m)).abs().max();
        if orth_err > INVARIANT_TOL || (r.determinant() - 1.0).abs() > INVARIANT_TOL {
            return Err(Error::InvalidInput("matrix is not in SO(m)".into()));
        }
        Ok(Rotation { m, data })
    }

    /// Planar rotation by `angle` radians.
    pub fn planar(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Rotation {
            m: 2,
            data: vec![c, -s, s, c],
        }
    }

    /// Rotation `Rz(a)·Ry(b)·Rz(c)` in three dimensions.
    pub fn from_euler_zyz(a: f64, b: f64, c: f64) -> Self {
        let rz = |t: f64| {
            let (s, co) = t.sin_cos();
            DMatrix::from_row_slice(3, 3, &[co, -s, 0.0, s, co, 0.0, 0.0, 0.0, 1.0])
        };
        let (s, co) = b.sin_cos();
        let ry = DMatrix::from_row_slice(3, 3, &[co, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, co]);
        let r = rz(a) * ry * rz(c);
        Rotation {
            m: 3,
            data: r.transpose().as_slice().to_vec(),
        }
    }

    /// Uniformly distributed (Haar) rotation.
    pub fn random(rng: &mut impl Rng, m: usize) -> Self {
        if m == 2 {
            return Rotation::planar(rng.random::<f64>() * std::f64::consts::TAU);
        }
        // Unit quaternion from four normals.
        let mut q = [0.0f64; 4];
        loop {
            for v in q.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-8 {
                q.iter_mut().for_each(|x| *x /= n);
                break;
            }
        }
        let [w, x, y, z] = q;
        Rotation {
            m: 3,
            data: vec![
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.m + j]
    }

    pub fn transpose(&self) -> Rotation {
        let m = self.m;
        let mut data = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                data[j * m + i] = self.data[i * m + j];
            }
        }
        Rotation { m, data }
    }

    pub fn compose(&self, other: &Rotation) -> Rotation {
        let m = self.m;
        let mut data = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                data[i * m + j] = (0..m).map(|l| self.get(i, l) * other.get(l, j)).sum();
            }
        }
        Rotation { m, data }
    }
}

/// Result of orthogonal Procrustes alignment.
#[derive(Clone, Debug)]
pub struct RotationFit {
    pub rotation: Rotation,
    /// False when `xᵀy` is rank deficient enough that the optimum is a set.
    pub unique: bool,
}

pub(crate) fn column_sums(data: &[f64], m: usize) -> Vec<f64> {
    let mut sums = vec![0.0; m];
    for row in data.chunks(m) {
        for (s, x) in sums.iter_mut().zip(row) {
            *s += x;
        }
    }
    sums
}

fn center_in_place(data: &mut [f64], m: usize) {
    let k = (data.len() / m) as f64;
    let means: Vec<f64> = column_sums(data, m).into_iter().map(|s| s / k).collect();
    for row in data.chunks_mut(m) {
        for (x, mu) in row.iter_mut().zip(&means) {
            *x -= mu;
        }
    }
}

pub(crate) fn rotate_rows(data: &[f64], k: usize, m: usize, r: &Rotation) -> Vec<f64> {
    let mut out = vec![0.0; k * m];
    for (row_in, row_out) in data.chunks(m).zip(out.chunks_mut(m)) {
        for j in 0..m {
            row_out[j] = (0..m).map(|l| row_in[l] * r.get(l, j)).sum();
        }
    }
    out
}

/// Subtracts the column means.
pub fn center(cfg: &Configuration) -> Configuration {
    let mut data = cfg.data.clone();
    center_in_place(&mut data, cfg.m);
    Configuration {
        k: cfg.k,
        m: cfg.m,
        data,
    }
}

/// Centers and scales to unit Frobenius norm.
pub fn to_preshape(cfg: &Configuration) -> Result<PreShape> {
    to_preshape_with_threshold(cfg, DEGENERACY_THRESHOLD)
}

pub fn to_preshape_with_threshold(cfg: &Configuration, threshold: f64) -> Result<PreShape> {
    let centered = center(cfg);
    let n = sphere::norm(&centered.data);
    if !(n > threshold) {
        return Err(Error::DegenerateConfiguration { norm: n, threshold });
    }
    if cfg.m == 3 && is_collinear(&centered.data, cfg.k) {
        return Err(Error::SingularShape);
    }
    let data = centered.data.into_iter().map(|x| x / n).collect();
    Ok(PreShape {
        k: cfg.k,
        m: cfg.m,
        data,
    })
}

fn is_collinear(centered: &[f64], k: usize) -> bool {
    let x = DMatrix::from_row_slice(k, 3, centered);
    let eig = SymmetricEigen::new(x.transpose() * &x);
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev[1] <= 1e-20 * ev[0]
}

/// Geodesic distance on the preshape sphere, in `[0, π]`.
pub fn preshape_distance(x: &PreShape, y: &PreShape) -> f64 {
    sphere::distance(&x.data, &y.data)
}

/// `argmin_{R ∈ SO(m)} d(x, y·R)` via the SVD of `yᵀx`.
pub fn optimal_rotation(x: &PreShape, y: &PreShape) -> RotationFit {
    optimal_rotation_raw(&x.data, &y.data, x.k, x.m)
}

pub(crate) fn optimal_rotation_raw(x: &[f64], y: &[f64], k: usize, m: usize) -> RotationFit {
    let xm = DMatrix::from_row_slice(k, m, x);
    let ym = DMatrix::from_row_slice(k, m, y);
    let a = ym.transpose() * xm;
    let svd = a.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let sv = svd.singular_values;

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
    let smallest = order[m - 1];
    let det = (&u * &v_t).determinant();
    let sign = if det < 0.0 { -1.0 } else { 1.0 };

    let mut d = DMatrix::identity(m, m);
    d[(smallest, smallest)] = sign;
    let r = &u * d * &v_t;

    let scale = sv[order[0]].max(f64::MIN_POSITIVE);
    let margin = sv[order[m - 2]] + sign * sv[smallest];
    let unique = margin > 1e-10 * scale;

    let mut data = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            data.push(r[(i, j)]);
        }
    }
    RotationFit {
        rotation: Rotation { m, data },
        unique,
    }
}

/// Shape-space distance: preshape distance after optimal rotation of `y`.
pub fn shape_distance(x: &PreShape, y: &PreShape) -> f64 {
    if x.data == y.data {
        return 0.0;
    }
    let r = optimal_rotation(x, y).rotation;
    preshape_distance(x, &y.rotated(&r))
}

/// `y` rotated into optimal position relative to `x`.
pub fn align_to(x: &PreShape, y: &PreShape) -> PreShape {
    y.rotated(&optimal_rotation(x, y).rotation)
}

pub fn exp_map(base: &PreShape, w: &TangentVector) -> Result<PreShape> {
    let data = sphere::exp(&base.data, &w.data)?;
    Ok(PreShape {
        k: base.k,
        m: base.m,
        data,
    })
}

pub fn log_map(base: &PreShape, x: &PreShape) -> Result<TangentVector> {
    let data = sphere::log(&base.data, &x.data)?;
    Ok(TangentVector {
        k: base.k,
        m: base.m,
        data,
    })
}

/// Spherical parallel transport of `w` along the geodesic `from → to`.
pub fn parallel_transport(from: &PreShape, to: &PreShape, w: &TangentVector) -> Result<TangentVector> {
    let data = sphere::transport(&from.data, &to.data, &w.data)?;
    Ok(TangentVector {
        k: from.k,
        m: from.m,
        data,
    })
}

/// Transport between shapes: the source representative (and `w` with it) is
/// first rotated into optimal position against `to`.
pub fn transport_between_shapes(
    from: &PreShape,
    to: &PreShape,
    w: &TangentVector,
) -> Result<TangentVector> {
    let r = optimal_rotation(to, from).rotation;
    parallel_transport(&from.rotated(&r), to, &w.rotated(&r))
}

/// Centers `a` and removes its component along `base`.
pub fn project_to_tangent(base: &PreShape, a: &[f64]) -> TangentVector {
    TangentVector {
        k: base.k,
        m: base.m,
        data: project_tangent_raw(&base.data, a, base.m),
    }
}

pub(crate) fn project_tangent_raw(base: &[f64], a: &[f64], m: usize) -> Vec<f64> {
    let mut out = a.to_vec();
    center_in_place(&mut out, m);
    sphere::project_tangent(base, &out)
}
