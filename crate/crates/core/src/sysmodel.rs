//! State-space systems, stability regions and the standing assumptions.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{self, RMatrix, C64};
use crate::pencil;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TimeDomain {
    #[default]
    Continuous,
    Discrete,
}

/// `x' = A x + B u`, `y = C x + D u` (or the discrete-time recursion).
#[derive(Clone, Debug)]
pub struct LtiSystem {
    pub a: RMatrix,
    pub b: RMatrix,
    pub c: RMatrix,
    pub d: RMatrix,
    pub domain: TimeDomain,
}

impl LtiSystem {
    pub fn new(a: RMatrix, b: RMatrix, c: RMatrix, d: RMatrix, domain: TimeDomain) -> Result<Self> {
        for (name, m) in [("A", &a), ("B", &b), ("C", &c), ("D", &d)] {
            numkit::ensure_finite(m).map_err(|_| Error::InvalidMatrix(format!("{name} has a non-finite entry")))?;
        }
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::DimensionMismatch(format!("A is {}x{}, expected square with n >= 1", a.nrows(), a.ncols())));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!("B is {}x{}, expected {n}xm with m >= 1", b.nrows(), b.ncols())));
        }
        if c.ncols() != n {
            return Err(Error::DimensionMismatch(format!("C is {}x{}, expected px{n}", c.nrows(), c.ncols())));
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "D is {}x{}, expected {}x{}",
                d.nrows(),
                d.ncols(),
                c.nrows(),
                b.ncols()
            )));
        }
        Ok(LtiSystem { a, b, c, d, domain })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    /// The system with output row `i` (0-based) removed.
    pub fn row_deleted(&self, i: usize) -> Result<LtiSystem> {
        let p = self.p();
        if i >= p {
            return Err(Error::BadIndex { index: i, outputs: p });
        }
        Ok(LtiSystem {
            a: self.a.clone(),
            b: self.b.clone(),
            c: self.c.clone().remove_row(i),
            d: self.d.clone().remove_row(i),
            domain: self.domain,
        })
    }

    /// `(T^-1 A T, T^-1 B, C T, D)`.
    pub fn similarity(&self, t: &RMatrix) -> Result<LtiSystem> {
        let ti = t
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidMatrix("singular similarity transform".into()))?;
        Ok(LtiSystem {
            a: &ti * &self.a * t,
            b: &ti * &self.b,
            c: &self.c * t,
            d: self.d.clone(),
            domain: self.domain,
        })
    }

    pub fn closed_loop(&self, f: &RMatrix) -> (RMatrix, RMatrix) {
        (&self.a + &self.b * f, &self.c + &self.d * f)
    }

    /// `s0 = 0` in continuous time, `s0 = 1` in discrete time.
    pub fn forbidden_point(&self) -> f64 {
        match self.domain {
            TimeDomain::Continuous => 0.0,
            TimeDomain::Discrete => 1.0,
        }
    }
}

/// The set of admissible closed-loop eigenvalues.
#[derive(Clone)]
pub enum StabilityRegion {
    /// Open left half-plane or open unit disc, by time domain.
    Standard(TimeDomain),
    /// `Re z < alpha` with `alpha <= 0`.
    HalfPlane { alpha: f64 },
    /// `|z| < radius` with `0 < radius <= 1`.
    Disc { radius: f64 },
    /// Caller-supplied predicate with an open real interval to sample from.
    Custom {
        name: String,
        contains: Arc<dyn Fn(C64) -> bool + Send + Sync>,
        interval: (f64, f64),
    },
}

impl fmt::Debug for StabilityRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "StabilityRegion({})", self.name())
    }
}

const BOUNDARY_MARGIN: f64 = 1e-9;

impl StabilityRegion {
    pub fn standard(domain: TimeDomain) -> Self {
        StabilityRegion::Standard(domain)
    }

    /// Parses `lhp`, `disc`, `lhp:<alpha>` or `disc:<radius>`.
    pub fn parse(text: &str) -> Result<Self> {
        let (kind, arg) = match text.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (text, None),
        };
        let value = |a: &str| {
            a.parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad region parameter '{a}'")))
        };
        match (kind, arg) {
            ("lhp", None) => Ok(StabilityRegion::Standard(TimeDomain::Continuous)),
            ("disc", None) => Ok(StabilityRegion::Standard(TimeDomain::Discrete)),
            ("lhp", Some(a)) => {
                let alpha = value(a)?;
                if !(alpha <= 0.0) {
                    return Err(Error::Parse("half-plane abscissa must be <= 0".into()));
                }
                Ok(StabilityRegion::HalfPlane { alpha })
            }
            ("disc", Some(a)) => {
                let radius = value(a)?;
                if !(radius > 0.0 && radius <= 1.0) {
                    return Err(Error::Parse("disc radius must lie in (0, 1]".into()));
                }
                Ok(StabilityRegion::Disc { radius })
            }
            _ => Err(Error::Parse(format!("unknown region '{text}'"))),
        }
    }

    pub fn name(&self) -> String {
        match self {
            StabilityRegion::Standard(TimeDomain::Continuous) => "lhp".into(),
            StabilityRegion::Standard(TimeDomain::Discrete) => "disc".into(),
            StabilityRegion::HalfPlane { alpha } => format!("lhp:{alpha}"),
            StabilityRegion::Disc { radius } => format!("disc:{radius}"),
            StabilityRegion::Custom { name, .. } => name.clone(),
        }
    }

    pub fn contains(&self, z: C64) -> bool {
        let margin = BOUNDARY_MARGIN * (1.0 + z.norm());
        match self {
            StabilityRegion::Standard(TimeDomain::Continuous) => z.re < -margin,
            StabilityRegion::Standard(TimeDomain::Discrete) => z.norm() < 1.0 - margin,
            StabilityRegion::HalfPlane { alpha } => z.re < alpha - margin,
            StabilityRegion::Disc { radius } => z.norm() < radius - margin,
            StabilityRegion::Custom { contains, .. } => contains(z),
        }
    }

    /// Real interval from which auxiliary eigenvalues are drawn.
    pub fn real_interval(&self) -> (f64, f64) {
        match self {
            StabilityRegion::Standard(TimeDomain::Continuous) => (-10.0, -1.0),
            StabilityRegion::Standard(TimeDomain::Discrete) => (0.1, 0.9),
            StabilityRegion::HalfPlane { alpha } => (alpha - 10.0, alpha - 1.0),
            StabilityRegion::Disc { radius } => (0.1 * radius, 0.9 * radius),
            StabilityRegion::Custom { interval, .. } => *interval,
        }
    }

    /// The `k`-th point of the default grid of real assignable eigenvalues:
    /// `-1, -2, ...` for half-planes, a dyadic sequence inside discs.
    pub fn grid(&self, k: usize) -> f64 {
        let dyadic = |k: usize| {
            let j = k / 2 + 1;
            let v = van_der_corput(j) * 0.95;
            if k % 2 == 0 {
                v
            } else {
                -v
            }
        };
        match self {
            StabilityRegion::Standard(TimeDomain::Continuous) => -(k as f64 + 1.0),
            StabilityRegion::Standard(TimeDomain::Discrete) => dyadic(k),
            StabilityRegion::HalfPlane { alpha } => alpha - (k as f64 + 1.0),
            StabilityRegion::Disc { radius } => radius * dyadic(k),
            StabilityRegion::Custom { interval, .. } => {
                let (lo, hi) = *interval;
                lo + (hi - lo) * van_der_corput(k + 1)
            }
        }
    }
}

fn van_der_corput(mut j: usize) -> f64 {
    let mut out = 0.0;
    let mut base = 0.5;
    while j > 0 {
        if j & 1 == 1 {
            out += base;
        }
        base *= 0.5;
        j >>= 1;
    }
    out
}

/// Rank of the Rosenbrock pencil at a generic point.
///
/// Maximum over eight seeded random real samples and `1 + max|eig A|`.
pub fn normal_rank_pencil(sys: &LtiSystem, rtol: f64) -> Result<usize> {
    let radius = 1.0
        + numkit::eigenvalues(&sys.a)?
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
    let mut rng = rng::stream(rng::INTERNAL_SEED, rng::NORMAL_RANK);
    let mut best = numkit::rank_of(&pencil::rosenbrock_real(sys, radius), rtol)?;
    for _ in 0..8 {
        let lambda = rng::uniform(&mut rng, -radius, radius);
        best = best.max(numkit::rank_of(&pencil::rosenbrock_real(sys, lambda), rtol)?);
    }
    Ok(best)
}

/// Outcome of checking right invertibility, stabilizability and the
/// forbidden point.
#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub normal_rank: usize,
    pub right_invertible: bool,
    pub stabilizable: bool,
    pub uncontrollable_unstable: Vec<[f64; 2]>,
    pub forbidden_point_is_zero: bool,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.right_invertible && self.stabilizable && !self.forbidden_point_is_zero
    }
}

pub fn validate_assumption1(sys: &LtiSystem, region: &StabilityRegion, rtol: f64) -> Result<ValidationReport> {
    let n = sys.n();
    let normal_rank = normal_rank_pencil(sys, rtol)?;
    let right_invertible = normal_rank == n + sys.p();
    let mut uncontrollable = Vec::new();
    for z in numkit::eigenvalues(&sys.a)? {
        if region.contains(z) {
            continue;
        }
        let ab = pencil::state_input_block(sys, z);
        if numkit::rank_of(&ab, rtol.max(pencil::ZERO_RTOL))? < n {
            uncontrollable.push([z.re, z.im]);
        }
    }
    let s0 = sys.forbidden_point();
    let at_s0 = numkit::rank_of(&pencil::rosenbrock_real(sys, s0), rtol.max(pencil::ZERO_RTOL))?;
    Ok(ValidationReport {
        normal_rank,
        right_invertible,
        stabilizable: uncontrollable.is_empty(),
        uncontrollable_unstable: uncontrollable,
        forbidden_point_is_zero: at_s0 < normal_rank,
    })
}

/// Fails with the first violated part of the standing assumptions.
pub fn require_assumption1(sys: &LtiSystem, region: &StabilityRegion, rtol: f64) -> Result<ValidationReport> {
    let r = validate_assumption1(sys, region, rtol)?;
    if !r.right_invertible {
        return Err(Error::NotRightInvertible {
            normal_rank: r.normal_rank,
            outputs: sys.p(),
        });
    }
    if let Some(z) = r.uncontrollable_unstable.first() {
        return Err(Error::NotStabilizable(format!("{}{:+}i", z[0], z[1])));
    }
    if r.forbidden_point_is_zero {
        return Err(Error::ForbiddenZero(sys.forbidden_point()));
    }
    Ok(r)
}

/// On-disk form: row-major nested arrays, `D` optional.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SystemFile {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub domain: TimeDomain,
}

pub fn matrix_from_rows(name: &str, rows: &[Vec<f64>], cols_if_empty: usize) -> Result<RMatrix> {
    if rows.is_empty() {
        return Ok(RMatrix::zeros(0, cols_if_empty));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::DimensionMismatch(format!("{name} has ragged rows")));
    }
    Ok(RMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &RMatrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl SystemFile {
    pub fn into_system(self) -> Result<LtiSystem> {
        for (name, rows) in [("A", &self.a), ("B", &self.b), ("C", &self.c)] {
            if rows.is_empty() || rows[0].is_empty() {
                return Err(Error::Parse(format!("{name} must be a nonempty matrix")));
            }
        }
        let a = matrix_from_rows("A", &self.a, 0)?;
        let b = matrix_from_rows("B", &self.b, 0)?;
        let c = matrix_from_rows("C", &self.c, a.ncols())?;
        let d = match &self.d {
            Some(rows) => matrix_from_rows("D", rows, b.ncols())?,
            None => RMatrix::zeros(c.nrows(), b.ncols()),
        };
        LtiSystem::new(a, b, c, d, self.domain)
    }

    pub fn from_system(sys: &LtiSystem) -> Self {
        SystemFile {
            a: matrix_to_rows(&sys.a),
            b: matrix_to_rows(&sys.b),
            c: matrix_to_rows(&sys.c),
            d: Some(matrix_to_rows(&sys.d)),
            domain: sys.domain,
        }
    }
}

pub fn load_system(json: &str) -> Result<LtiSystem> {
    let file: SystemFile = serde_json::from_str(json).map_err(|e| Error::Parse(e.to_string()))?;
    file.into_system()
}
