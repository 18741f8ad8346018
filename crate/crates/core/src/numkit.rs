//! Dense linear-algebra kernels shared by every other module.
//!
//! Every rank decision goes through one rule: a singular value counts when it
//! exceeds `rtol * sigma_max * max(rows, cols)`. Kernels and ranges come from
//! the same SVD, so a dimension reported by [`rank_of`] always matches the
//! number of columns returned by [`null_space`] and [`range_basis`].

use nalgebra::linalg::Schur;
use nalgebra::{ComplexField, DMatrix, DVector};
pub use num_complex::Complex;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type RMatrix = DMatrix<f64>;
pub type CMatrix = DMatrix<C64>;
pub type RVector = DVector<f64>;
pub type CVector = DVector<C64>;

/// Working relative tolerance for rank decisions.
pub const DEFAULT_RTOL: f64 = 1e-10;

/// Relative distance under which two eigenvalues are treated as one.
pub const CLUSTER_TOL: f64 = 1e-6;

/// Eigenvector matrices with a larger condition number are called defective.
pub const MAX_EIGVEC_COND: f64 = 1e8;

const SCHUR_MAX_ITER: usize = 100_000;
const JACOBI_SWEEPS: usize = 80;

/// The two scalar fields the kernels run over.
pub trait Scalar: ComplexField<RealField = f64> + Copy {
    fn to_c64(self) -> C64;
    fn of_f64(x: f64) -> Self;
}

impl Scalar for f64 {
    fn to_c64(self) -> C64 {
        C64::new(self, 0.0)
    }
    fn of_f64(x: f64) -> Self {
        x
    }
}

impl Scalar for C64 {
    fn to_c64(self) -> C64 {
        self
    }
    fn of_f64(x: f64) -> Self {
        C64::new(x, 0.0)
    }
}

pub fn to_complex<T: Scalar>(m: &DMatrix<T>) -> CMatrix {
    m.map(|x| x.to_c64())
}

pub fn real_part(m: &CMatrix) -> RMatrix {
    m.map(|x| x.re)
}

pub fn imag_part(m: &CMatrix) -> RMatrix {
    m.map(|x| x.im)
}

/// Largest imaginary magnitude relative to the largest entry.
pub fn imag_ratio(m: &CMatrix) -> f64 {
    let scale = m.iter().map(|x| x.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    m.iter().map(|x| x.im.abs()).fold(0.0, f64::max) / scale
}

pub fn ensure_finite<T: Scalar>(m: &DMatrix<T>) -> Result<()> {
    if m.iter().all(|x| {
        let z = x.to_c64();
        z.re.is_finite() && z.im.is_finite()
    }) {
        Ok(())
    } else {
        Err(Error::InvalidMatrix("non-finite entry".into()))
    }
}

/// Horizontal concatenation of blocks with a common row count.
pub fn hstack<T: Scalar>(rows: usize, blocks: &[&DMatrix<T>]) -> DMatrix<T> {
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        debug_assert_eq!(b.nrows(), rows);
        out.columns_mut(at, b.ncols()).copy_from(*b);
        at += b.ncols();
    }
    out
}

/// Vertical concatenation of blocks with a common column count.
pub fn vstack<T: Scalar>(cols: usize, blocks: &[&DMatrix<T>]) -> DMatrix<T> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        debug_assert_eq!(b.ncols(), cols);
        out.rows_mut(at, b.nrows()).copy_from(*b);
        at += b.nrows();
    }
    out
}

/// Singular value decomposition with a complete right basis.
///
/// `u` holds `min(rows, cols)` left vectors, `sigma` is sorted descending and
/// `v` is `cols x cols` unitary, so trailing columns of `v` span the kernel.
#[derive(Clone, Debug)]
pub struct Svd<T: Scalar> {
    pub u: DMatrix<T>,
    pub sigma: Vec<f64>,
    pub v: DMatrix<T>,
}

impl<T: Scalar> Svd<T> {
    pub fn threshold(&self, rows: usize, cols: usize, rtol: f64) -> f64 {
        let smax = self.sigma.first().copied().unwrap_or(0.0);
        rtol * smax * rows.max(cols) as f64
    }

    pub fn rank(&self, rows: usize, cols: usize, rtol: f64) -> usize {
        let thr = self.threshold(rows, cols, rtol);
        self.sigma.iter().filter(|&&s| s > thr).count()
    }
}

/// One-sided Jacobi SVD.
///
/// Columns are rotated pairwise until mutually orthogonal; the column norms
/// are then the singular values and the accumulated rotations form `V`. Left
/// vectors belonging to zero singular values are returned as zero columns.
pub fn svd<T: Scalar>(m: &DMatrix<T>) -> Result<Svd<T>> {
    ensure_finite(m)?;
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return Ok(Svd {
            u: DMatrix::zeros(r, 0),
            sigma: Vec::new(),
            v: DMatrix::identity(c, c),
        });
    }
    let mut w = m.clone();
    let mut v = DMatrix::<T>::identity(c, c);
    let tol = f64::EPSILON * r.max(c) as f64;
    // Columns this small are round-off; rotating them against each other
    // never settles.
    let negligible = (tol * m.norm()).powi(2);
    let mut converged = false;
    for _ in 0..JACOBI_SWEEPS {
        let mut rotated = false;
        for p in 0..c {
            for q in p + 1..c {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                if alpha <= negligible || beta <= negligible {
                    continue;
                }
                let gamma = w.column(p).dotc(&w.column(q));
                let g = gamma.modulus();
                if g <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                // Phase that makes the off-diagonal entry real and positive.
                let phase = gamma.conjugate() * T::of_f64(1.0 / g);
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                rotate(&mut w, p, q, cs, sn, phase);
                rotate(&mut v, p, q, cs, sn, phase);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical("Jacobi SVD did not converge".into()));
    }
    let norms: Vec<f64> = (0..c).map(|j| w.column(j).norm()).collect();
    let mut idx: Vec<usize> = (0..c).collect();
    idx.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    let k = r.min(c);
    let mut u = DMatrix::<T>::zeros(r, k);
    let mut vs = DMatrix::<T>::zeros(c, c);
    let mut sigma = Vec::with_capacity(k);
    for (slot, &j) in idx.iter().enumerate() {
        vs.set_column(slot, &v.column(j));
        if slot < k {
            sigma.push(norms[j]);
            if norms[j] > 0.0 {
                u.set_column(slot, &(w.column(j) * T::of_f64(1.0 / norms[j])));
            }
        }
    }
    Ok(Svd { u, sigma, v: vs })
}

/// Applies `[x_p, x_q] <- [c x_p - s e x_q, s x_p + c e x_q]` to two columns.
fn rotate<T: Scalar>(x: &mut DMatrix<T>, p: usize, q: usize, c: f64, s: f64, e: T) {
    for i in 0..x.nrows() {
        let a = x[(i, p)];
        let b = x[(i, q)] * e;
        x[(i, p)] = a * T::of_f64(c) - b * T::of_f64(s);
        x[(i, q)] = a * T::of_f64(s) + b * T::of_f64(c);
    }
}

pub fn rank_of<T: Scalar>(m: &DMatrix<T>, rtol: f64) -> Result<usize> {
    let s = svd(m)?;
    Ok(s.rank(m.nrows(), m.ncols(), rtol))
}

/// Orthonormal basis of `ker m`.
pub fn null_space<T: Scalar>(m: &DMatrix<T>, rtol: f64) -> Result<DMatrix<T>> {
    let s = svd(m)?;
    let r = s.rank(m.nrows(), m.ncols(), rtol);
    let c = m.ncols();
    Ok(s.v.columns(r, c - r).into_owned())
}

/// Orthonormal basis of `im m`.
pub fn range_basis<T: Scalar>(m: &DMatrix<T>, rtol: f64) -> Result<DMatrix<T>> {
    let s = svd(m)?;
    let r = s.rank(m.nrows(), m.ncols(), rtol);
    Ok(s.u.columns(0, r).into_owned())
}

pub fn pseudo_inverse<T: Scalar>(m: &DMatrix<T>, rtol: f64) -> Result<DMatrix<T>> {
    let s = svd(m)?;
    let r = s.rank(m.nrows(), m.ncols(), rtol);
    let mut out = DMatrix::zeros(m.ncols(), m.nrows());
    for k in 0..r {
        let vk = s.v.column(k);
        let uk = s.u.column(k);
        out += (vk * uk.adjoint()) * T::of_f64(1.0 / s.sigma[k]);
    }
    Ok(out)
}

/// 2-norm condition number; infinite for rank-deficient or empty input.
pub fn cond<T: Scalar>(m: &DMatrix<T>) -> Result<f64> {
    let s = svd(m)?;
    match (s.sigma.first(), s.sigma.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 && m.nrows() == m.ncols() => Ok(hi / lo),
        _ => Ok(f64::INFINITY),
    }
}

pub fn spectral_norm<T: Scalar>(m: &DMatrix<T>) -> Result<f64> {
    Ok(svd(m)?.sigma.first().copied().unwrap_or(0.0))
}

/// Right inverse of a real matrix with full row rank.
pub fn right_inverse(m: &RMatrix, rtol: f64) -> Result<RMatrix> {
    let r = rank_of(m, rtol)?;
    if r < m.nrows() {
        return Err(Error::NotRightInvertible { normal_rank: r, outputs: m.nrows() });
    }
    pseudo_inverse(m, rtol)
}

/// Solution set `{ particular + directions * k }` of a consistent system.
#[derive(Clone, Debug)]
pub struct AffineSet<T: Scalar> {
    pub particular: DVector<T>,
    pub directions: DMatrix<T>,
}

#[derive(Clone, Debug)]
pub enum AffineSolution<T: Scalar> {
    Feasible(AffineSet<T>),
    Infeasible { residual: f64 },
}

impl<T: Scalar> AffineSolution<T> {
    pub fn feasible(self) -> Option<AffineSet<T>> {
        match self {
            AffineSolution::Feasible(s) => Some(s),
            AffineSolution::Infeasible { .. } => None,
        }
    }
}

/// Least-norm particular solution and kernel of `m x = b`.
///
/// Consistency is judged on the relative residual of the least-norm solution,
/// with tolerance `max(sqrt(rtol), 1e-8)`.
pub fn affine_solution_set<T: Scalar>(
    m: &DMatrix<T>,
    b: &DVector<T>,
    rtol: f64,
) -> Result<AffineSolution<T>> {
    if b.len() != m.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "right-hand side has {} entries, matrix has {} rows",
            b.len(),
            m.nrows()
        )));
    }
    let s = svd(m)?;
    let (rows, cols) = m.shape();
    let r = s.rank(rows, cols, rtol);
    let mut x = DVector::zeros(cols);
    for k in 0..r {
        let coef = s.u.column(k).dotc(b) * T::of_f64(1.0 / s.sigma[k]);
        x += s.v.column(k) * coef;
    }
    let residual = (m * &x - b).norm();
    let smax = s.sigma.first().copied().unwrap_or(0.0);
    let scale = b.norm().max(smax * x.norm()).max(f64::MIN_POSITIVE);
    let tol = rtol.sqrt().max(1e-8);
    if residual > tol * scale {
        return Ok(AffineSolution::Infeasible {
            residual: residual / scale,
        });
    }
    Ok(AffineSolution::Feasible(AffineSet {
        particular: x,
        directions: s.v.columns(r, cols - r).into_owned(),
    }))
}

/// A subspace of `C^n` held as an orthonormal column basis.
#[derive(Clone, Debug)]
pub struct SubspaceBasis {
    basis: CMatrix,
}

impl SubspaceBasis {
    pub fn zero(ambient: usize) -> Self {
        SubspaceBasis {
            basis: CMatrix::zeros(ambient, 0),
        }
    }

    pub fn full(ambient: usize) -> Self {
        SubspaceBasis {
            basis: CMatrix::identity(ambient, ambient),
        }
    }

    /// Column span of `m`.
    pub fn span<T: Scalar>(m: &DMatrix<T>, rtol: f64) -> Result<Self> {
        let q = range_basis(m, rtol)?;
        Ok(SubspaceBasis {
            basis: to_complex(&q),
        })
    }

    /// Wraps columns the caller guarantees to be orthonormal.
    pub fn from_orthonormal(basis: CMatrix) -> Self {
        SubspaceBasis { basis }
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &CMatrix {
        &self.basis
    }

    pub fn conj(&self) -> Self {
        SubspaceBasis {
            basis: self.basis.map(|z| z.conj()),
        }
    }

    /// Complex span of the real and imaginary parts of the basis.
    ///
    /// For a subspace `S` this is `S + conj(S)`, the smallest self-conjugate
    /// subspace containing it.
    pub fn realify(&self, rtol: f64) -> Result<Self> {
        let re = real_part(&self.basis);
        let im = imag_part(&self.basis);
        let stacked = hstack(self.ambient_dim(), &[&re, &im]);
        SubspaceBasis::span(&stacked, rtol)
    }

    /// Real orthonormal basis, when the subspace is self-conjugate.
    pub fn real_basis(&self, rtol: f64) -> Result<Option<RMatrix>> {
        let r = self.realify(rtol)?;
        if r.dim() != self.dim() {
            return Ok(None);
        }
        Ok(Some(real_part(&r.basis)))
    }

    pub fn is_self_conjugate(&self, rtol: f64) -> Result<bool> {
        Ok(self.realify(rtol)?.dim() == self.dim())
    }

    pub fn sum(&self, other: &SubspaceBasis, rtol: f64) -> Result<Self> {
        sum_of(self.ambient_dim(), [self, other], rtol)
    }

    pub fn contains(&self, other: &SubspaceBasis, rtol: f64) -> Result<bool> {
        if other.dim() == 0 {
            return Ok(true);
        }
        Ok(sum_dim(self.ambient_dim(), [self, other], rtol)? == self.dim())
    }

    pub fn contains_vector(&self, v: &CVector, rtol: f64) -> Result<bool> {
        let m = CMatrix::from_column_slice(v.len(), 1, v.as_slice());
        let s = SubspaceBasis::span(&m, rtol)?;
        self.contains(&s, rtol)
    }

    pub fn same_as(&self, other: &SubspaceBasis, rtol: f64) -> Result<bool> {
        Ok(self.dim() == other.dim() && self.contains(other, rtol)?)
    }

    /// Largest principal angle in radians; `pi/2` when dimensions differ.
    pub fn max_principal_angle(&self, other: &SubspaceBasis) -> Result<f64> {
        if self.dim() != other.dim() {
            return Ok(std::f64::consts::FRAC_PI_2);
        }
        if self.dim() == 0 {
            return Ok(0.0);
        }
        let q = &self.basis;
        let resid = &other.basis - q * (q.adjoint() * &other.basis);
        Ok(spectral_norm(&resid)?.min(1.0).asin())
    }

    /// Orthogonal projection of `v` onto the subspace.
    pub fn project(&self, v: &CVector) -> CVector {
        &self.basis * (self.basis.adjoint() * v)
    }
}

/// Dimension of the sum of the given subspaces of `C^ambient`.
pub fn sum_dim<'a, I>(ambient: usize, parts: I, rtol: f64) -> Result<usize>
where
    I: IntoIterator<Item = &'a SubspaceBasis>,
{
    let blocks: Vec<&CMatrix> = parts.into_iter().map(|s| &s.basis).collect();
    let stacked = hstack(ambient, &blocks);
    if stacked.ncols() == 0 {
        return Ok(0);
    }
    rank_of(&stacked, rtol)
}

pub fn sum_of<'a, I>(ambient: usize, parts: I, rtol: f64) -> Result<SubspaceBasis>
where
    I: IntoIterator<Item = &'a SubspaceBasis>,
{
    let blocks: Vec<&CMatrix> = parts.into_iter().map(|s| &s.basis).collect();
    let stacked = hstack(ambient, &blocks);
    if stacked.ncols() == 0 {
        return Ok(SubspaceBasis::zero(ambient));
    }
    SubspaceBasis::span(&stacked, rtol)
}

/// One eigenvalue cluster with an orthonormal basis of its eigenspace.
#[derive(Clone, Debug)]
pub struct EigenCluster {
    pub value: C64,
    pub multiplicity: usize,
    pub vectors: CMatrix,
}

fn is_real_value(z: C64) -> bool {
    z.im.abs() <= CLUSTER_TOL * (1.0 + z.norm())
}

fn same_value(a: C64, b: C64) -> bool {
    (a - b).norm() <= CLUSTER_TOL * (1.0 + a.norm().max(b.norm()))
}

fn order(a: &C64, b: &C64) -> std::cmp::Ordering {
    a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im))
}

/// Eigenvalues of a real square matrix, sorted by real then imaginary part.
///
/// The QR iteration is not trusted blindly: the spectrum must reproduce the
/// trace and each value must make the shifted matrix near singular. When it
/// does not, the iteration is rerun on random orthogonal similarities of
/// the matrix, which share its spectrum but take a different path.
pub fn eigenvalues(m: &RMatrix) -> Result<Vec<C64>> {
    ensure_finite(m)?;
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch("eigenvalues of a non-square matrix".into()));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut rng = crate::rng::stream(crate::rng::INTERNAL_SEED, crate::rng::EIGEN);
    let mut last = Error::Numerical("no eigenvalue attempt".into());
    for attempt in 0..EIGEN_RETRIES {
        let work = if attempt == 0 {
            m.clone()
        } else {
            let q = crate::rng::orthonormal(&mut rng, n, n);
            q.transpose() * m * q
        };
        match schur_eigenvalues(m, &work) {
            Ok(v) => return Ok(v),
            Err(e) => last = e,
        }
    }
    Err(last)
}

const EIGEN_RETRIES: usize = 4;

fn schur_eigenvalues(m: &RMatrix, work: &RMatrix) -> Result<Vec<C64>> {
    let n = m.nrows();
    let schur = Schur::try_new(work.clone(), f64::EPSILON, SCHUR_MAX_ITER)
        .ok_or_else(|| Error::Numerical("Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    let mut vals = quasi_triangular_eigenvalues(&t);
    vals.sort_by(order);
    let scale = spectral_norm(m)?.max(f64::MIN_POSITIVE);
    let trace_err = (vals.iter().sum::<C64>() - C64::new(m.trace(), 0.0)).norm();
    if trace_err > 1e-8 * scale * n as f64 {
        return Err(Error::Numerical(format!("eigenvalue trace mismatch {trace_err:.3e}")));
    }
    let mc = to_complex(m);
    for &z in &vals {
        let shifted = &mc - CMatrix::identity(n, n) * z;
        let smin = svd(&shifted)?.sigma.last().copied().unwrap_or(0.0);
        if smin > 1e-6 * scale.max(z.norm()) {
            return Err(Error::Numerical(format!("eigenvalue {z} fails the residual check")));
        }
    }
    Ok(vals)
}

/// Reads the spectrum off a real Schur form. The library routine takes a
/// square root of the raw discriminant and returns NaN when it rounds to a
/// tiny negative number, so the 2x2 blocks are solved here instead.
fn quasi_triangular_eigenvalues(t: &RMatrix) -> Vec<C64> {
    let n = t.nrows();
    let mut out = Vec::with_capacity(n);
    let mut k = 0;
    while k < n {
        if k + 1 == n || t[(k + 1, k)] == 0.0 {
            out.push(C64::new(t[(k, k)], 0.0));
            k += 1;
            continue;
        }
        let (a, b, c, d) = (t[(k, k)], t[(k, k + 1)], t[(k + 1, k)], t[(k + 1, k + 1)]);
        let mean = (a + d) / 2.0;
        let half = (a - d) / 2.0;
        let disc = half * half + b * c;
        if disc >= 0.0 {
            let r = disc.sqrt();
            // Larger root first, smaller via the product to avoid cancellation.
            let big = if mean >= 0.0 { mean + r } else { mean - r };
            let det = a * d - b * c;
            let small = if big != 0.0 { det / big } else { 0.0 };
            out.push(C64::new(big, 0.0));
            out.push(C64::new(small, 0.0));
        } else {
            let r = (-disc).sqrt();
            out.push(C64::new(mean, r));
            out.push(C64::new(mean, -r));
        }
        k += 2;
    }
    out
}

/// Groups values closer than [`CLUSTER_TOL`]; returns (mean, count) pairs.
pub fn cluster_values(vals: &[C64]) -> Vec<(C64, usize)> {
    let mut groups: Vec<Vec<C64>> = Vec::new();
    for &v in vals {
        match groups.iter_mut().find(|g| same_value(g[0], v)) {
            Some(g) => g.push(v),
            None => groups.push(vec![v]),
        }
    }
    let mut out: Vec<(C64, usize)> = groups
        .into_iter()
        .map(|g| {
            let n = g.len();
            let mean = g.iter().sum::<C64>() / n as f64;
            (mean, n)
        })
        .collect();
    out.sort_by(|a, b| order(&a.0, &b.0));
    out
}

/// Eigenvalue clusters and eigenspace bases of a real square matrix.
///
/// Conjugate clusters carry exactly conjugate bases, real clusters carry real
/// bases. Fails when a cluster's eigenspace is smaller than its algebraic
/// multiplicity or the combined eigenvector matrix is ill conditioned.
pub fn eig_decomp(m: &RMatrix) -> Result<Vec<EigenCluster>> {
    let n = m.nrows();
    let vals = eigenvalues(m)?;
    let scale = spectral_norm(m)?.max(1.0);
    let mut clusters = cluster_values(&vals);
    for c in clusters.iter_mut() {
        if is_real_value(c.0) {
            c.0.im = 0.0;
        }
    }
    let mut out: Vec<EigenCluster> = Vec::with_capacity(clusters.len());
    for &(value, k) in &clusters {
        if value.im > 0.0 {
            // Filled from the conjugate partner below.
            continue;
        }
        let vectors = if value.im == 0.0 {
            let shifted = m - RMatrix::identity(n, n) * value.re;
            let s = svd(&shifted)?;
            check_eigenspace(&s.sigma, k, scale, value)?;
            to_complex(&s.v.columns(n - k, k).into_owned())
        } else {
            let shifted = to_complex(m) - CMatrix::identity(n, n) * value;
            let s = svd(&shifted)?;
            check_eigenspace(&s.sigma, k, scale, value)?;
            s.v.columns(n - k, k).into_owned()
        };
        out.push(EigenCluster {
            value,
            multiplicity: k,
            vectors,
        });
    }
    let conjugates: Vec<EigenCluster> = out
        .iter()
        .filter(|c| c.value.im < 0.0)
        .map(|c| EigenCluster {
            value: c.value.conj(),
            multiplicity: c.multiplicity,
            vectors: c.vectors.map(|z| z.conj()),
        })
        .collect();
    out.extend(conjugates);
    out.sort_by(|a, b| order(&a.value, &b.value));
    let total: usize = out.iter().map(|c| c.multiplicity).sum();
    if total != n {
        return Err(Error::Numerical(format!(
            "eigenvalue clusters cover {total} of {n} modes"
        )));
    }
    let blocks: Vec<&CMatrix> = out.iter().map(|c| &c.vectors).collect();
    let all = hstack(n, &blocks);
    let kappa = cond(&all)?;
    if kappa > MAX_EIGVEC_COND {
        return Err(Error::DefectiveClosedLoop(format!(
            "eigenvector matrix condition number {kappa:.3e}"
        )));
    }
    Ok(out)
}

fn check_eigenspace(sigma: &[f64], k: usize, scale: f64, value: C64) -> Result<()> {
    let n = sigma.len();
    let worst = sigma[n - k];
    if worst > CLUSTER_TOL * scale {
        return Err(Error::DefectiveClosedLoop(format!(
            "eigenvalue {value} has algebraic multiplicity {k} but a smaller eigenspace"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rank_examples() {
        let i3 = RMatrix::identity(3, 3);
        assert_eq!(rank_of(&i3, 1e-12).unwrap(), 3);
        let m = RMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert_eq!(rank_of(&m, 1e-12).unwrap(), 1);
        assert_eq!(rank_of(&RMatrix::zeros(3, 2), 1e-12).unwrap(), 0);
        assert_eq!(rank_of(&RMatrix::zeros(0, 2), 1e-12).unwrap(), 0);
    }

    #[test]
    fn rejects_nan() {
        let m = RMatrix::from_row_slice(1, 2, &[1.0, f64::NAN]);
        assert!(matches!(rank_of(&m, 1e-12), Err(Error::InvalidMatrix(_))));
    }

    #[test]
    fn kernel_of_wide_row() {
        let m = RMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let k = null_space(&m, 1e-12).unwrap();
        assert_eq!(k.ncols(), 1);
        assert_relative_eq!((k[(0, 0)] + k[(1, 0)]).abs(), 0.0, epsilon = 1e-14);
        assert_relative_eq!(k.column(0).norm(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn affine_set_feasible_and_not() {
        let m = RMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let b = RVector::from_vec(vec![2.0, 0.0]);
        let s = affine_solution_set(&m, &b, DEFAULT_RTOL).unwrap().feasible().unwrap();
        assert_relative_eq!(s.particular[0], 2.0, epsilon = 1e-14);
        assert_relative_eq!(s.particular[1], 0.0, epsilon = 1e-14);
        assert_eq!(s.directions.ncols(), 1);
        let b = RVector::from_vec(vec![0.0, 1.0]);
        assert!(affine_solution_set(&m, &b, DEFAULT_RTOL).unwrap().feasible().is_none());
    }

    #[test]
    fn eigen_pairs_are_conjugate() {
        let m = RMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, -4.0, 0.0, 0.0, 0.0, 0.0, -1.0]);
        let e = eig_decomp(&m).unwrap();
        assert_eq!(e.len(), 3);
        assert_relative_eq!(e[0].value.re, -1.0, epsilon = 1e-12);
        assert_eq!(e[0].value.im, 0.0);
        assert_relative_eq!(e[1].value.im, -2.0, epsilon = 1e-12);
        assert_eq!(e[2].value, e[1].value.conj());
        assert_eq!(e[2].vectors, e[1].vectors.map(|z| z.conj()));
        for c in &e {
            let resid = to_complex(&m) * &c.vectors - &c.vectors * c.value;
            assert!(resid.norm() < 1e-12);
        }
    }

    #[test]
    fn semisimple_repeated_eigenvalue_is_accepted() {
        let m = RMatrix::from_diagonal(&RVector::from_vec(vec![2.0, 2.0, 3.0]));
        let e = eig_decomp(&m).unwrap();
        assert_eq!(e[0].multiplicity, 2);
        assert_eq!(e[0].vectors.ncols(), 2);
    }

    #[test]
    fn jordan_block_is_defective() {
        let m = RMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(matches!(eig_decomp(&m), Err(Error::DefectiveClosedLoop(_))));
    }

    #[test]
    fn right_inverse_of_wide_matrix() {
        let m = RMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]);
        let r = right_inverse(&m, DEFAULT_RTOL).unwrap();
        assert_relative_eq!(m * r, RMatrix::identity(2, 2), epsilon = 1e-12);
        let deficient = RMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(right_inverse(&deficient, DEFAULT_RTOL).is_err());
    }

    #[test]
    fn realify_of_complex_line() {
        let v = CMatrix::from_column_slice(2, 1, &[C64::new(1.0, 0.0), C64::new(0.0, 1.0)]);
        let s = SubspaceBasis::span(&v, DEFAULT_RTOL).unwrap();
        assert!(!s.is_self_conjugate(DEFAULT_RTOL).unwrap());
        assert_eq!(s.realify(DEFAULT_RTOL).unwrap().dim(), 2);
    }
}
