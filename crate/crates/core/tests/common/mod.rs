//! Random systems and solvable problems shared by the integration tests.
#![allow(dead_code)]

use decoupling::numkit::{RMatrix, C64};
use decoupling::pencil;
use decoupling::problem::{ProblemKind, ProblemSpec, Variant};
use decoupling::rado::check_problem;
use decoupling::sysmodel::{self, LtiSystem, StabilityRegion, TimeDomain};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(rng: &mut TestRng, rows: usize, cols: usize) -> RMatrix {
    RMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn fixture(name: &str) -> LtiSystem {
    let path = format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    sysmodel::load_system(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// A random continuous system with `m = p` that satisfies the standing
/// assumptions (right invertible, stabilizable, no zero at the origin).
pub fn random_system(rng: &mut TestRng, n: usize, p: usize) -> LtiSystem {
    loop {
        let shift = rng.random_range(-1.5..0.5);
        let a = gauss(rng, n, n) / (n as f64).sqrt() + RMatrix::identity(n, n) * shift;
        let b = gauss(rng, n, p);
        let c = gauss(rng, p, n);
        let d = if rng.random_bool(0.4) { gauss(rng, p, p) } else { RMatrix::zeros(p, p) };
        let sys = LtiSystem::new(a, b, c, d, TimeDomain::Continuous).unwrap();
        let region = StabilityRegion::standard(TimeDomain::Continuous);
        if sysmodel::require_assumption1(&sys, &region, 1e-10).is_ok() {
            return sys;
        }
    }
}

/// Minimum spacing between random prescribed values, and from zeros, so
/// that closed-loop eigenvectors are not nearly parallel.
pub const SEPARATION: f64 = 0.1;

fn real_eig(rng: &mut TestRng, avoid: &[C64]) -> C64 {
    loop {
        let z = C64::new(-rng.random_range(0.5..8.0f64), 0.0);
        if avoid.iter().all(|&a| (a - z).norm() > SEPARATION) {
            return z;
        }
    }
}

fn random_counts(rng: &mut TestRng, n: usize, p: usize, exact_total: Option<usize>) -> Vec<usize> {
    loop {
        let nu: Vec<usize> = (0..p).map(|_| rng.random_range(0..=n.min(3))).collect();
        let s: usize = nu.iter().sum();
        match exact_total {
            Some(t) if s != t => continue,
            _ if s <= n => return nu,
            _ => continue,
        }
    }
}

/// One random problem for `sys`, not necessarily solvable.
pub fn random_spec(sys: &LtiSystem, rng: &mut TestRng, kind: ProblemKind) -> ProblemSpec {
    let (n, p) = (sys.n(), sys.p());
    let zeros = pencil::invariant_zeros(sys, 1e-10).unwrap();
    let region = StabilityRegion::standard(sys.domain);
    let min_phase: Vec<C64> = zeros.minimum_phase(&region).iter().map(|z| z.z()).collect();
    let nu = random_counts(rng, n, p, None);
    let mut used: Vec<C64> = zeros.multiset();
    let mut modes = Vec::new();
    let mut unobservable = Vec::new();
    if kind.variant != Variant::C {
        for &k in &nu {
            let mut l = Vec::new();
            for _ in 0..k {
                let z = real_eig(rng, &used);
                used.push(z);
                l.push(z);
            }
            modes.push(l);
        }
    }
    if kind.variant == Variant::A {
        let want = n - nu.iter().sum::<usize>();
        let mut pool: Vec<C64> = min_phase.iter().filter(|z| z.im <= 0.0).copied().collect();
        pool.shuffle(rng);
        for z in pool {
            let size = if z.im == 0.0 { 1 } else { 2 };
            if unobservable.len() + size <= want {
                unobservable.push(z);
                if z.im != 0.0 {
                    unobservable.push(z.conj());
                }
            }
        }
        while unobservable.len() < want {
            let z = real_eig(rng, &used);
            used.push(z);
            unobservable.push(z);
        }
    }
    ProblemSpec { kind, nu, modes, unobservable, region: None }
}

/// A random problem that `check_problem` declares solvable, if one turns
/// up within `tries` draws.
pub fn random_solvable_spec(sys: &LtiSystem, rng: &mut TestRng, tries: usize) -> Option<ProblemSpec> {
    for _ in 0..tries {
        let kind = *ProblemKind::ALL.choose(rng).unwrap();
        let spec = random_spec(sys, rng, kind);
        if let Ok(r) = check_problem(sys, &spec, 1e-10, 0) {
            if r.verdict {
                return Some(spec);
            }
        }
    }
    None
}
