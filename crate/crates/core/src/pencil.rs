//! The Rosenbrock system matrix pencil and invariant zeros.
//!
//! Finite zeros are found by squaring the pencil down to its normal rank with
//! random orthogonal compressions, then taking shift-and-invert eigenvalues of
//! the square pencil. Two independent compressions are computed and only
//! values that appear in both (and make the original pencil lose rank) are
//! kept, which discards the spurious roots a single compression introduces.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::json::CValue;
use crate::numkit::{self, CMatrix, RMatrix, C64};
use crate::rng::{self, StageRng};
use crate::sysmodel::{normal_rank_pencil, LtiSystem, StabilityRegion};

/// Rank tolerance used when testing for a rank drop at a computed zero.
pub const ZERO_RTOL: f64 = 1e-8;

/// Relative distance under which a point is identified with a zero.
pub const ZERO_MATCH_TOL: f64 = 1e-6;

/// `[A B; C D]`.
pub fn system_matrix(sys: &LtiSystem) -> RMatrix {
    let (n, m, p) = (sys.n(), sys.m(), sys.p());
    let mut out = RMatrix::zeros(n + p, n + m);
    out.view_mut((0, 0), (n, n)).copy_from(&sys.a);
    out.view_mut((0, n), (n, m)).copy_from(&sys.b);
    out.view_mut((n, 0), (p, n)).copy_from(&sys.c);
    out.view_mut((n, n), (p, m)).copy_from(&sys.d);
    out
}

/// `diag(I_n, 0)`, so that `P(lambda) = M - lambda E`.
pub fn descriptor(sys: &LtiSystem) -> RMatrix {
    let (n, m, p) = (sys.n(), sys.m(), sys.p());
    let mut out = RMatrix::zeros(n + p, n + m);
    out.view_mut((0, 0), (n, n)).fill_with_identity();
    out
}

pub fn rosenbrock_real(sys: &LtiSystem, lambda: f64) -> RMatrix {
    system_matrix(sys) - descriptor(sys) * lambda
}

pub fn rosenbrock(sys: &LtiSystem, lambda: C64) -> CMatrix {
    numkit::to_complex(&system_matrix(sys)) - numkit::to_complex(&descriptor(sys)) * lambda
}

/// `[A - z I, B]`, the controllability test block.
pub fn state_input_block(sys: &LtiSystem, z: C64) -> CMatrix {
    let n = sys.n();
    let a = numkit::to_complex(&sys.a) - CMatrix::identity(n, n) * z;
    numkit::hstack(n, &[&a, &numkit::to_complex(&sys.b)])
}

#[derive(Clone, Debug, Serialize)]
pub struct InvariantZero {
    pub value: CValue,
    pub algebraic: usize,
    pub geometric: usize,
}

impl InvariantZero {
    pub fn z(&self) -> C64 {
        self.value.0
    }

    pub fn is_real(&self) -> bool {
        self.value.0.im == 0.0
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ZeroStructure {
    pub normal_rank: usize,
    pub zeros: Vec<InvariantZero>,
}

pub fn near(a: C64, b: C64) -> bool {
    (a - b).norm() <= ZERO_MATCH_TOL * (1.0 + a.norm().max(b.norm()))
}

impl ZeroStructure {
    /// Zeros repeated by algebraic multiplicity.
    pub fn multiset(&self) -> Vec<C64> {
        self.zeros
            .iter()
            .flat_map(|z| std::iter::repeat_n(z.z(), z.algebraic))
            .collect()
    }

    pub fn is_zero(&self, lambda: C64) -> bool {
        self.zeros.iter().any(|z| near(z.z(), lambda))
    }

    pub fn find(&self, lambda: C64) -> Option<&InvariantZero> {
        self.zeros.iter().find(|z| near(z.z(), lambda))
    }

    pub fn minimum_phase(&self, region: &StabilityRegion) -> Vec<InvariantZero> {
        self.zeros.iter().filter(|z| region.contains(z.z())).cloned().collect()
    }
}

/// Minimum-phase zeros in pairing order: real zeros ascending, then each
/// complex pair with the negative imaginary part first.
pub fn minimum_phase_zeros(zs: &ZeroStructure, region: &StabilityRegion) -> Vec<InvariantZero> {
    zs.minimum_phase(region)
}

pub fn invariant_zeros(sys: &LtiSystem, rtol: f64) -> Result<ZeroStructure> {
    let n = sys.n();
    let normal_rank = normal_rank_pencil(sys, rtol)?;
    if normal_rank < n {
        return Err(Error::UnsupportedPencil(format!(
            "normal rank {normal_rank} below state dimension {n}"
        )));
    }
    let m = system_matrix(sys);
    let e = descriptor(sys);
    let mut rng = rng::stream(rng::INTERNAL_SEED, rng::ZEROS);
    let first = compressed_candidates(&m, &e, normal_rank, &mut rng)?;
    let second = compressed_candidates(&m, &e, normal_rank, &mut rng)?;

    let mut used = vec![false; second.len()];
    let mut matched = Vec::new();
    for &c in &first {
        let best = second
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, &d)| (j, (c - d).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((j, dist)) = best {
            if dist <= ZERO_MATCH_TOL * (1.0 + c.norm()) {
                used[j] = true;
                matched.push((c + second[j]) / 2.0);
            }
        }
    }

    let confirm_tol = rtol.max(ZERO_RTOL);
    // Perturbed infinite eigenvalues of a nilpotent block land near
    // eps^(1/k) and invert to huge spurious roots; nothing that far out is
    // resolvable relative to the data, so it is treated as infinite.
    let horizon = 1e6 * numkit::spectral_norm(&m)?.max(1.0);
    let mut zeros = Vec::new();
    for (mut v, count) in numkit::cluster_values(&matched) {
        if v.im.abs() <= ZERO_MATCH_TOL * (1.0 + v.norm()) {
            v.im = 0.0;
        } else if v.im > 0.0 {
            continue;
        }
        if v.norm() > horizon {
            continue;
        }
        let rank = numkit::rank_of(&rosenbrock(sys, v), confirm_tol)?;
        if rank >= normal_rank {
            continue;
        }
        let geometric = normal_rank - rank;
        let zero = InvariantZero {
            value: CValue(v),
            algebraic: count.max(geometric),
            geometric,
        };
        if v.im != 0.0 {
            zeros.push(InvariantZero {
                value: CValue(v.conj()),
                ..zero.clone()
            });
        }
        zeros.push(zero);
    }
    zeros.sort_by(|a, b| {
        let (x, y) = (a.z(), b.z());
        (x.im != 0.0)
            .cmp(&(y.im != 0.0))
            .then(x.re.total_cmp(&y.re))
            .then(x.im.abs().total_cmp(&y.im.abs()))
            .then(x.im.total_cmp(&y.im))
    });
    Ok(ZeroStructure { normal_rank, zeros })
}

/// Finite eigenvalues of one random square compression of `M - lambda E`.
fn compressed_candidates(m: &RMatrix, e: &RMatrix, r: usize, rng: &mut StageRng) -> Result<Vec<C64>> {
    let u = rng::orthonormal(rng, m.nrows(), r);
    let q = rng::orthonormal(rng, m.ncols(), r);
    let mc = u.transpose() * m * &q;
    let ec = u.transpose() * e * &q;
    let scale = numkit::spectral_norm(&mc)?.max(1.0);
    for _ in 0..32 {
        let s = rng::uniform(rng, -1.0, 1.0) * scale;
        let shifted = &mc - &ec * s;
        if numkit::cond(&shifted)? > 1e10 {
            continue;
        }
        let Some(inv) = shifted.try_inverse() else {
            continue;
        };
        let k = inv * &ec;
        let knorm = numkit::spectral_norm(&k)?;
        let finite = numkit::eigenvalues(&k)?
            .into_iter()
            .filter(|mu| mu.norm() > 1e-12 * knorm)
            .map(|mu| C64::new(s, 0.0) + mu.inv())
            .collect();
        return Ok(finite);
    }
    Err(Error::Numerical("no regular shift found for the compressed pencil".into()))
}
