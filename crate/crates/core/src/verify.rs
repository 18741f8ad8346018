//! Independent checks of a closed loop `A + BF`, `C + DF`: which outputs see
//! which modes, whether the counts and assigned values match a problem, the
//! equivalent set of single-output systems, and the tracking error.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::json::CValue;
use crate::numkit::{self, CMatrix, CVector, RMatrix, RVector, C64};
use crate::problem::{ProblemClass, ProblemSpec, Variant};
use crate::sysmodel::{LtiSystem, StabilityRegion, TimeDomain};

/// Default threshold for a mode to count as observable from an output,
/// relative to `||v|| * max(1, ||C + DF||)`.
pub const OBSERVABILITY_TOL: f64 = 1e-7;

/// Tolerance for matching eigenvalues, relative to `max(1, |lambda|)`.
pub const ASSIGNMENT_TOL: f64 = 1e-6;

/// One closed-loop mode and the outputs (1-based) it is observable from.
#[derive(Clone, Debug, Serialize)]
pub struct Mode {
    pub lambda: CValue,
    pub outputs: Vec<usize>,
    /// Relative output residue per output.
    pub residues: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ModalMap {
    pub tol: f64,
    pub modes: Vec<Mode>,
    /// Eigenvalues whose eigenspace admits no basis of single-output modes.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub coupled: Vec<CValue>,
    /// Mode eigenvectors, one column per entry of `modes`.
    #[serde(skip)]
    pub vectors: CMatrix,
    /// Index of the conjugate of each mode with positive imaginary part.
    #[serde(skip)]
    pub partner: Vec<Option<usize>>,
    #[serde(skip)]
    outputs: usize,
}

impl ModalMap {
    /// Modes observable from output `i` (0-based).
    pub fn observable_from(&self, i: usize) -> Vec<C64> {
        self.modes.iter().filter(|m| m.outputs.contains(&(i + 1))).map(|m| m.lambda.0).collect()
    }

    pub fn hidden(&self) -> Vec<C64> {
        self.modes.iter().filter(|m| m.outputs.is_empty()).map(|m| m.lambda.0).collect()
    }

    pub fn per_output_counts(&self) -> Vec<usize> {
        (0..self.outputs).map(|i| self.observable_from(i).len()).collect()
    }

    /// Every mode is seen by at most one output.
    pub fn is_decoupled(&self) -> bool {
        self.coupled.is_empty() && self.modes.iter().all(|m| m.outputs.len() <= 1)
    }
}

fn residues(cf: &CMatrix, v: &CVector, scale: f64, tol: f64) -> (Vec<usize>, Vec<f64>) {
    let y = cf * v;
    let norm = v.norm().max(f64::MIN_POSITIVE);
    let res: Vec<f64> = y.iter().map(|z| z.norm() / (norm * scale)).collect();
    let outs = res.iter().enumerate().filter(|(_, &r)| r > tol).map(|(i, _)| i + 1).collect();
    (outs, res)
}

/// Splits an eigenspace basis `x` into single-output modes when the nonzero
/// rows of `y = (C + DF) x` are independent. Returns the vectors and whether
/// the split succeeded.
fn split_cluster(x: &CMatrix, y: &CMatrix, scale: f64, tol: f64) -> Result<(Vec<CVector>, bool)> {
    let k = x.ncols();
    let rows: Vec<usize> = (0..y.nrows()).filter(|&i| y.row(i).norm() > tol * scale).collect();
    if rows.is_empty() {
        return Ok(((0..k).map(|j| x.column(j).into_owned()).collect(), true));
    }
    let mut yr = CMatrix::zeros(rows.len(), k);
    for (r, &i) in rows.iter().enumerate() {
        yr.set_row(r, &y.row(i));
    }
    let s = numkit::svd(&yr)?;
    let q = rows.len();
    if q > k || s.sigma[q - 1] <= tol * scale {
        return Ok(((0..k).map(|j| x.column(j).into_owned()).collect(), false));
    }
    let pinv = numkit::pseudo_inverse(&yr, 0.0)?;
    let mut out = Vec::with_capacity(k);
    for r in 0..q {
        let v = x * pinv.column(r);
        out.push(v.unscale(v.norm()));
    }
    let hidden = s.v.columns(q, k - q).into_owned();
    for j in 0..hidden.ncols() {
        out.push(x * hidden.column(j));
    }
    Ok((out, true))
}

/// Which outputs see each closed-loop mode.
///
/// Each eigenspace is split into modes observable from one output where
/// possible; an eigenspace where that is impossible is listed in `coupled`.
pub fn mode_output_map(sys: &LtiSystem, f: &RMatrix, tol: f64) -> Result<ModalMap> {
    let (af, cf) = sys.closed_loop(f);
    let clusters = numkit::eig_decomp(&af)?;
    let cf = numkit::to_complex(&cf);
    let scale = numkit::spectral_norm(&cf)?.max(1.0);
    let n = sys.n();
    let mut modes = Vec::with_capacity(n);
    let mut vectors: Vec<CVector> = Vec::with_capacity(n);
    let mut partner = Vec::with_capacity(n);
    let mut coupled = Vec::new();
    // Start index of the modes of each cluster already processed.
    let mut done: Vec<(C64, usize, usize)> = Vec::new();
    for c in &clusters {
        let mirror = if c.value.im > 0.0 {
            done.iter().find(|(z, _, _)| *z == c.value.conj()).copied()
        } else {
            None
        };
        let start = modes.len();
        let (vs, ok, pair) = match mirror {
            Some((_, from, len)) => {
                let vs: Vec<CVector> = (from..from + len).map(|j| vectors[j].map(|z| z.conj())).collect();
                let ok = !coupled.iter().any(|z: &CValue| z.0 == c.value.conj());
                (vs, ok, Some(from))
            }
            None => {
                let y = &cf * &c.vectors;
                let (vs, ok) = split_cluster(&c.vectors, &y, scale, tol)?;
                (vs, ok, None)
            }
        };
        if !ok {
            coupled.push(CValue(c.value));
        }
        for (j, v) in vs.into_iter().enumerate() {
            let (outputs, res) = residues(&cf, &v, scale, tol);
            modes.push(Mode {
                lambda: CValue(c.value),
                outputs,
                residues: res,
            });
            partner.push(pair.map(|from| from + j));
            vectors.push(v);
        }
        done.push((c.value, start, modes.len() - start));
    }
    let refs: Vec<CMatrix> = vectors.iter().map(|v| CMatrix::from_column_slice(n, 1, v.as_slice())).collect();
    let blocks: Vec<&CMatrix> = refs.iter().collect();
    Ok(ModalMap {
        tol,
        modes,
        coupled,
        vectors: numkit::hstack(n, &blocks),
        partner,
        outputs: sys.p(),
    })
}

fn close(a: C64, b: C64, tol: f64) -> bool {
    (a - b).norm() <= tol * a.norm().max(b.norm()).max(1.0)
}

/// Matches every value of `part` to a distinct value of `whole`, nearest
/// first. With equal lengths this is multiset equality.
pub fn sub_multiset(part: &[C64], whole: &[C64], tol: f64) -> bool {
    let mut used = vec![false; whole.len()];
    for &a in part {
        let best = (0..whole.len())
            .filter(|&j| !used[j] && close(a, whole[j], tol))
            .min_by(|&i, &j| (whole[i] - a).norm().total_cmp(&(whole[j] - a).norm()));
        match best {
            Some(j) => used[j] = true,
            None => return false,
        }
    }
    true
}

pub fn same_multiset(a: &[C64], b: &[C64], tol: f64) -> bool {
    a.len() == b.len() && sub_multiset(a, b, tol)
}

#[derive(Clone, Debug, Serialize)]
pub struct Clause {
    pub pass: bool,
    pub detail: String,
}

impl Clause {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Clause { pass, detail: detail.into() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DecouplingCheck {
    pub verdict: bool,
    /// (a) every mode is observable from at most one output.
    pub single_output: Clause,
    /// (b) per-output counts as posed.
    pub counts: Clause,
    /// (c) prescribed eigenvalues are the ones assigned.
    pub assigned: Clause,
    /// (d) the closed loop is stable in the problem's region.
    pub stable: Clause,
    pub per_output_counts: Vec<usize>,
    pub hidden_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode_map: Option<ModalMap>,
}

impl DecouplingCheck {
    fn failed(detail: &str) -> Self {
        DecouplingCheck {
            verdict: false,
            single_output: Clause::new(false, detail),
            counts: Clause::new(false, detail),
            assigned: Clause::new(false, detail),
            stable: Clause::new(false, detail),
            per_output_counts: Vec::new(),
            hidden_count: 0,
            mode_map: None,
        }
    }

    /// One line per failed clause.
    pub fn diagnostics(&self) -> String {
        let clauses = [
            ("single output", &self.single_output),
            ("counts", &self.counts),
            ("assigned values", &self.assigned),
            ("stability", &self.stable),
        ];
        let failed: Vec<String> = clauses
            .iter()
            .filter(|(_, c)| !c.pass)
            .map(|(name, c)| format!("{name}: {}", c.detail))
            .collect();
        failed.join("; ")
    }
}

/// Whether `F` solves `spec` for `sys`, clause by clause.
pub fn check_decoupling(sys: &LtiSystem, f: &RMatrix, spec: &ProblemSpec) -> DecouplingCheck {
    check_decoupling_with(sys, f, spec, OBSERVABILITY_TOL)
}

pub fn check_decoupling_with(sys: &LtiSystem, f: &RMatrix, spec: &ProblemSpec, tol: f64) -> DecouplingCheck {
    let (n, p) = (sys.n(), sys.p());
    if f.nrows() != sys.m() || f.ncols() != n {
        return DecouplingCheck::failed(&format!("F is {}x{}, expected {}x{n}", f.nrows(), f.ncols(), sys.m()));
    }
    if spec.nu.len() != p || spec.total_observable() > n {
        return DecouplingCheck::failed("counts do not fit the system");
    }
    let map = match mode_output_map(sys, f, tol) {
        Ok(m) => m,
        Err(e) => return DecouplingCheck::failed(&e.to_string()),
    };
    let counts = map.per_output_counts();
    let hidden = map.hidden();

    let multi: Vec<String> = map
        .modes
        .iter()
        .filter(|m| m.outputs.len() > 1)
        .map(|m| format!("{} -> {:?}", m.lambda.0, m.outputs))
        .collect();
    let single_output = if map.is_decoupled() {
        Clause::new(true, "every mode reaches at most one output")
    } else {
        Clause::new(false, format!("modes seen by several outputs: [{}]", multi.join(", ")))
    };

    let exact = spec.kind.class != ProblemClass::Three;
    let count_ok = counts.iter().zip(&spec.nu).all(|(&c, &nu)| if exact { c == nu } else { c <= nu });
    let counts_clause = Clause::new(
        count_ok,
        format!("observable counts {counts:?}, {} {:?}", if exact { "required" } else { "bounds" }, spec.nu),
    );

    let assigned = match spec.kind.variant {
        Variant::C => Clause::new(true, "no prescribed values"),
        variant => {
            let mut bad = Vec::new();
            for i in 0..p {
                let seen = map.observable_from(i);
                let list = spec.modes.get(i).map_or(&[][..], Vec::as_slice);
                let ok = if exact {
                    same_multiset(&seen, list, ASSIGNMENT_TOL)
                } else {
                    sub_multiset(&seen, list, ASSIGNMENT_TOL)
                };
                if !ok {
                    bad.push(format!("output {} sees {:?}", i + 1, seen));
                }
            }
            if variant == Variant::A {
                let all: Vec<C64> = map.modes.iter().map(|m| m.lambda.0).collect();
                let prescribed: Vec<C64> = spec.modes.iter().flatten().chain(&spec.unobservable).copied().collect();
                if !same_multiset(&all, &prescribed, ASSIGNMENT_TOL) {
                    bad.push("spectrum differs from the prescribed values".into());
                }
                if exact && !same_multiset(&hidden, &spec.unobservable, ASSIGNMENT_TOL) {
                    bad.push(format!("hidden modes {hidden:?}"));
                }
            }
            if bad.is_empty() {
                Clause::new(true, "prescribed values assigned")
            } else {
                Clause::new(false, bad.join("; "))
            }
        }
    };

    let region = spec.region_or(sys);
    let outside: Vec<String> = map
        .modes
        .iter()
        .filter(|m| !region.contains(m.lambda.0))
        .map(|m| m.lambda.0.to_string())
        .collect();
    let stable = Clause::new(
        outside.is_empty(),
        if outside.is_empty() {
            format!("spectrum inside {}", region.name())
        } else {
            format!("outside {}: [{}]", region.name(), outside.join(", "))
        },
    );

    DecouplingCheck {
        verdict: single_output.pass && counts_clause.pass && assigned.pass && stable.pass,
        single_output,
        counts: counts_clause,
        assigned,
        stable,
        per_output_counts: counts,
        hidden_count: hidden.len(),
        mode_map: Some(map),
    }
}

fn require_stable(sys: &LtiSystem, af: &RMatrix) -> Result<Vec<C64>> {
    let region = StabilityRegion::standard(sys.domain);
    let eig = numkit::eigenvalues(af)?;
    if let Some(z) = eig.iter().find(|&&z| !region.contains(z)) {
        return Err(Error::NotStabilized(format!("closed-loop eigenvalue {z}")));
    }
    Ok(eig)
}

/// Map from a constant input `u = G r` to the steady-state output.
pub fn dc_gain(sys: &LtiSystem, f: &RMatrix) -> Result<RMatrix> {
    let (af, cf) = sys.closed_loop(f);
    require_stable(sys, &af)?;
    let n = sys.n();
    let singular = || Error::Numerical("closed-loop static map is singular".into());
    Ok(match sys.domain {
        TimeDomain::Continuous => {
            let x = af.lu().solve(&sys.b).ok_or_else(singular)?;
            &sys.d - cf * x
        }
        TimeDomain::Discrete => {
            let x = (RMatrix::identity(n, n) - af).lu().solve(&sys.b).ok_or_else(singular)?;
            cf * x + &sys.d
        }
    })
}

/// Largest entry of `dc_gain * G - I`.
pub fn tracking_residual(sys: &LtiSystem, f: &RMatrix, g: &RMatrix) -> Result<f64> {
    let p = sys.p();
    let e = dc_gain(sys, f)? * g - RMatrix::identity(p, p);
    Ok(e.amax())
}

/// One single-output system of a decoupled realization.
#[derive(Clone, Debug)]
pub struct OutputSubsystem {
    /// Indices into the modal map.
    pub modes: Vec<usize>,
    /// Diagonal state matrix.
    pub a: CMatrix,
    /// Output row.
    pub c: CMatrix,
}

/// The closed loop written as `p` independent single-output systems over
/// the eigen-coordinates.
#[derive(Clone, Debug)]
pub struct DecoupledRealization {
    pub parts: Vec<OutputSubsystem>,
    /// Modes seen by no output.
    pub hidden: Vec<usize>,
    pub domain: TimeDomain,
    pub map: ModalMap,
    /// Largest `|y_i(0)|` per unit `||x0||` carried by the residues the parts
    /// leave out, relative to `max(1, ||C + DF||)`. Near roundoff when the
    /// decoupling is numerically clean.
    pub leakage: f64,
    inverse: CMatrix,
}

pub fn decoupled_realization(sys: &LtiSystem, f: &RMatrix) -> Result<DecoupledRealization> {
    let map = mode_output_map(sys, f, OBSERVABILITY_TOL)?;
    let (_, cf) = sys.closed_loop(f);
    let cf = numkit::to_complex(&cf);
    let inverse = map
        .vectors
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::DefectiveClosedLoop("mode vectors are dependent".into()))?;
    let residue = &cf * &map.vectors;
    let parts = (0..sys.p())
        .map(|i| {
            let modes: Vec<usize> = (0..map.modes.len()).filter(|&j| map.modes[j].outputs.contains(&(i + 1))).collect();
            let k = modes.len();
            let a = CMatrix::from_diagonal(&CVector::from_iterator(k, modes.iter().map(|&j| map.modes[j].lambda.0)));
            let c = CMatrix::from_iterator(1, k, modes.iter().map(|&j| residue[(i, j)]));
            OutputSubsystem { modes, a, c }
        })
        .collect();
    let hidden = (0..map.modes.len()).filter(|&j| map.modes[j].outputs.is_empty()).collect();
    let scale = numkit::spectral_norm(&cf)?.max(1.0);
    let leakage = (0..sys.p())
        .map(|i| {
            (0..map.modes.len())
                .filter(|&j| !map.modes[j].outputs.contains(&(i + 1)))
                .map(|j| residue[(i, j)].norm() * inverse.row(j).norm())
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
        / scale;
    Ok(DecoupledRealization {
        parts,
        hidden,
        domain: sys.domain,
        map,
        leakage,
        inverse,
    })
}

impl DecoupledRealization {
    fn coordinates(&self, x0: &RVector) -> CVector {
        &self.inverse * x0.map(|x| C64::new(x, 0.0))
    }

    /// Initial state of every part for the closed-loop state `x0`.
    pub fn initial_states(&self, x0: &RVector) -> Vec<CVector> {
        let xi = self.coordinates(x0);
        self.parts
            .iter()
            .map(|p| CVector::from_iterator(p.modes.len(), p.modes.iter().map(|&j| xi[j])))
            .collect()
    }

    /// Outputs of the parts at time `t` (a step count in discrete time).
    pub fn response(&self, states: &[CVector], t: f64) -> RVector {
        RVector::from_iterator(
            self.parts.len(),
            self.parts.iter().zip(states).map(|(p, s)| {
                let mut y = C64::new(0.0, 0.0);
                for k in 0..p.modes.len() {
                    let lambda = p.a[(k, k)];
                    let growth = match self.domain {
                        TimeDomain::Continuous => (lambda * t).exp(),
                        TimeDomain::Discrete => lambda.powf(t),
                    };
                    y += p.c[(0, k)] * growth * s[k];
                }
                y.re
            }),
        )
    }

    /// Makes part states consistent with a real closed-loop state: entries of
    /// real modes become real and conjugate modes take conjugate values.
    pub fn mirror(&self, states: &mut [CVector]) {
        let mut xi = vec![None; self.map.modes.len()];
        for (p, s) in self.parts.iter().zip(states.iter_mut()) {
            for (k, &j) in p.modes.iter().enumerate() {
                if self.map.modes[j].lambda.0.im == 0.0 {
                    s[k].im = 0.0;
                }
                if self.map.partner[j].is_none() {
                    xi[j] = Some(s[k]);
                }
            }
        }
        for (p, s) in self.parts.iter().zip(states.iter_mut()) {
            for (k, &j) in p.modes.iter().enumerate() {
                if let Some(src) = self.map.partner[j] {
                    if let Some(z) = xi[src] {
                        s[k] = z.conj();
                    }
                }
            }
        }
    }

    /// A real closed-loop state whose part states are `states` (hidden
    /// coordinates set to zero), with the relative residual of the round trip.
    pub fn state_for(&self, states: &[CVector]) -> Result<(RVector, f64)> {
        let n = self.map.vectors.nrows();
        let mut xi = CVector::zeros(n);
        for (p, s) in self.parts.iter().zip(states) {
            if s.len() != p.modes.len() {
                return Err(Error::DimensionMismatch("part state has the wrong length".into()));
            }
            for (k, &j) in p.modes.iter().enumerate() {
                xi[j] = s[k];
            }
        }
        let x = &self.map.vectors * xi;
        let real = RVector::from_iterator(n, x.iter().map(|z| z.re));
        let back = self.initial_states(&real);
        let scale = states.iter().map(|s| s.norm()).fold(1.0, f64::max);
        let mut residual = x.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        for (a, b) in back.iter().zip(states) {
            residual = residual.max((a - b).camax());
        }
        Ok((real, residual / scale))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ModalTerm {
    pub lambda: CValue,
    pub beta: CValue,
}

/// Sampled tracking error `y(t) - r` of the loop `u = F x + G r`.
#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `error[k]` holds the `p` error components at `times[k]`.
    pub error: Vec<Vec<f64>>,
    pub output: Vec<Vec<f64>>,
    /// Per output, the coefficient of each mode in the error; absent when
    /// the closed loop is defective.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modal: Option<Vec<Vec<ModalTerm>>>,
    pub horizon: f64,
    /// `||y(T) - r||` at the horizon.
    pub final_error: f64,
}

/// Horizon over which the slowest closed-loop mode has decayed:
/// `8 / |Re lambda|` in continuous time, and in discrete time the step count
/// after which `|lambda|^k <= 1e-6`.
pub fn default_horizon(domain: TimeDomain, eig: &[C64]) -> f64 {
    match domain {
        TimeDomain::Continuous => {
            let slow = eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
            if slow.is_finite() && slow < 0.0 {
                8.0 / slow.abs()
            } else {
                1.0
            }
        }
        TimeDomain::Discrete => {
            let slow = eig.iter().map(|z| z.norm()).fold(0.0, f64::max);
            if slow <= 0.0 {
                1.0
            } else {
                (1e-6f64.ln() / slow.ln()).ceil().max(1.0)
            }
        }
    }
}

/// Simulates the error from `x0` under the reference `r_bar`.
///
/// Continuous time evaluates the matrix exponential at `steps` evenly spaced
/// times; discrete time iterates and samples integer steps.
pub fn simulate_error(
    sys: &LtiSystem,
    f: &RMatrix,
    g: &RMatrix,
    x0: &RVector,
    r_bar: &RVector,
    horizon: Option<f64>,
    steps: usize,
) -> Result<Trajectory> {
    let (n, p) = (sys.n(), sys.p());
    if x0.len() != n || r_bar.len() != p || g.nrows() != sys.m() || g.ncols() != p {
        return Err(Error::DimensionMismatch("x0, r or G does not fit the system".into()));
    }
    let (af, cf) = sys.closed_loop(f);
    let eig = require_stable(sys, &af)?;
    let u = g * r_bar;
    let singular = || Error::Numerical("closed-loop static map is singular".into());
    let x_bar = match sys.domain {
        TimeDomain::Continuous => -af.clone().lu().solve(&(&sys.b * &u)).ok_or_else(singular)?,
        TimeDomain::Discrete => (RMatrix::identity(n, n) - &af).lu().solve(&(&sys.b * &u)).ok_or_else(singular)?,
    };
    let xi0 = x0 - &x_bar;
    let y_bar = &cf * &x_bar + &sys.d * &u;
    let offset = &y_bar - r_bar;
    let horizon = horizon.unwrap_or_else(|| default_horizon(sys.domain, &eig));
    let steps = steps.max(2);
    let times: Vec<f64> = match sys.domain {
        TimeDomain::Continuous => (0..steps).map(|k| horizon * k as f64 / (steps - 1) as f64).collect(),
        TimeDomain::Discrete => {
            let last = horizon.round().max(1.0);
            let mut t: Vec<f64> = (0..steps).map(|k| (last * k as f64 / (steps - 1) as f64).round()).collect();
            t.dedup();
            t
        }
    };
    let mut error = Vec::with_capacity(times.len());
    match sys.domain {
        TimeDomain::Continuous => {
            for &t in &times {
                let e = &cf * ((&af * t).exp() * &xi0) + &offset;
                error.push(e.iter().copied().collect::<Vec<f64>>());
            }
        }
        TimeDomain::Discrete => {
            let mut state = xi0.clone();
            let mut k = 0.0;
            for &t in &times {
                while k < t {
                    state = &af * state;
                    k += 1.0;
                }
                let e = &cf * &state + &offset;
                error.push(e.iter().copied().collect::<Vec<f64>>());
            }
        }
    }
    let output = error.iter().map(|e| e.iter().zip(r_bar.iter()).map(|(a, b)| a + b).collect()).collect();
    let final_error = error.last().map_or(0.0, |e| e.iter().map(|x| x * x).sum::<f64>().sqrt());
    let modal = decoupled_realization(sys, f).ok().map(|real| {
        let states = real.initial_states(&xi0);
        real.parts
            .iter()
            .zip(&states)
            .map(|(part, s)| {
                part.modes
                    .iter()
                    .enumerate()
                    .map(|(k, &j)| ModalTerm {
                        lambda: real.map.modes[j].lambda,
                        beta: CValue(part.c[(0, k)] * s[k]),
                    })
                    .collect()
            })
            .collect()
    });
    Ok(Trajectory {
        times,
        error,
        output,
        modal,
        horizon,
        final_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_system(c: &[f64]) -> LtiSystem {
        let a = RMatrix::from_diagonal(&RVector::from_vec(vec![-1.0, -2.0, -3.0]));
        let b = RMatrix::identity(3, 3);
        let c = RMatrix::from_row_slice(2, 3, c);
        LtiSystem::new(a, b, c, RMatrix::zeros(2, 3), TimeDomain::Continuous).unwrap()
    }

    #[test]
    fn diagonal_modes_map_to_outputs() {
        let sys = diag_system(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let map = mode_output_map(&sys, &RMatrix::zeros(3, 3), OBSERVABILITY_TOL).unwrap();
        let outs: Vec<Vec<usize>> = map.modes.iter().map(|m| m.outputs.clone()).collect();
        assert_eq!(outs, vec![vec![], vec![2], vec![1]]);
        assert!(map.is_decoupled());
        assert_eq!(map.per_output_counts(), vec![1, 1]);
    }

    #[test]
    fn zero_output_matrix_hides_everything() {
        let sys = diag_system(&[0.0; 6]);
        let map = mode_output_map(&sys, &RMatrix::zeros(3, 3), OBSERVABILITY_TOL).unwrap();
        assert!(map.modes.iter().all(|m| m.outputs.is_empty()));
    }

    #[test]
    fn shared_mode_is_flagged() {
        let sys = diag_system(&[1.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
        let map = mode_output_map(&sys, &RMatrix::zeros(3, 3), OBSERVABILITY_TOL).unwrap();
        assert!(!map.is_decoupled());
    }

    #[test]
    fn repeated_eigenvalue_splits_into_single_output_modes() {
        let a = RMatrix::from_diagonal(&RVector::from_vec(vec![-1.0, -1.0]));
        let c = RMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]);
        let sys = LtiSystem::new(a, RMatrix::identity(2, 2), c, RMatrix::zeros(2, 2), TimeDomain::Continuous).unwrap();
        let map = mode_output_map(&sys, &RMatrix::zeros(2, 2), OBSERVABILITY_TOL).unwrap();
        assert!(map.is_decoupled());
        assert_eq!(map.per_output_counts(), vec![1, 1]);
    }

    #[test]
    fn multisets() {
        let z = |x: f64| C64::new(x, 0.0);
        assert!(same_multiset(&[z(1.0), z(2.0)], &[z(2.0), z(1.0 + 1e-9)], 1e-6));
        assert!(!same_multiset(&[z(1.0), z(1.0)], &[z(1.0), z(2.0)], 1e-6));
        assert!(sub_multiset(&[z(2.0)], &[z(1.0), z(2.0)], 1e-6));
    }

    #[test]
    fn scalar_feedforward() {
        let sys = LtiSystem::new(
            RMatrix::from_element(1, 1, -1.0),
            RMatrix::from_element(1, 1, 2.0),
            RMatrix::from_element(1, 1, 1.0),
            RMatrix::zeros(1, 1),
            TimeDomain::Continuous,
        )
        .unwrap();
        let dc = dc_gain(&sys, &RMatrix::zeros(1, 1)).unwrap();
        assert!((dc[(0, 0)] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn zero_start_zero_reference_stays_at_rest() {
        let sys = diag_system(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let t = simulate_error(
            &sys,
            &RMatrix::zeros(3, 3),
            &RMatrix::zeros(3, 2),
            &RVector::zeros(3),
            &RVector::zeros(2),
            None,
            11,
        )
        .unwrap();
        assert!(t.error.iter().flatten().all(|&e| e == 0.0));
        assert!((t.horizon - 8.0).abs() < 1e-12);
    }
}
