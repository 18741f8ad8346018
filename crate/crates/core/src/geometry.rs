//! Output-nulling and stabilizability subspaces built from pencil kernels.
//!
//! Everything here is computed from null spaces of the Rosenbrock pencil at
//! chosen points: `R(lambda)` and `R_i(lambda)` directly, `R*` by summing
//! kernels at distinct real non-zero points until the dimension settles, and
//! the stabilizability subspaces by adding the kernels at minimum-phase zeros.

use std::sync::OnceLock;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::numkit::{self, CMatrix, CVector, Scalar, SubspaceBasis, C64};
use crate::pencil::{self, InvariantZero, ZeroStructure};
use crate::rng;
use crate::sysmodel::{LtiSystem, StabilityRegion};

/// `ker P(lambda)` split into a state basis and a column-matched input part:
/// `P(lambda) [state; input] = 0` holds column by column.
#[derive(Clone, Debug)]
pub struct KernelSlice {
    pub lambda: C64,
    pub state: CMatrix,
    pub input: CMatrix,
}

impl KernelSlice {
    pub fn dim(&self) -> usize {
        self.state.ncols()
    }

    pub fn span(&self) -> SubspaceBasis {
        SubspaceBasis::from_orthonormal(self.state.clone())
    }
}

fn split_kernel<T: Scalar>(p: &nalgebra::DMatrix<T>, n: usize, rtol: f64) -> Result<(CMatrix, CMatrix)> {
    let k = numkit::null_space(p, rtol)?;
    let m = p.ncols() - n;
    let x = k.rows(0, n).into_owned();
    let y = k.rows(n, m).into_owned();
    let s = numkit::svd(&x)?;
    let r = s.rank(x.nrows(), x.ncols(), rtol);
    let state = s.u.columns(0, r).into_owned();
    let mut input = nalgebra::DMatrix::<T>::zeros(m, r);
    for j in 0..r {
        let col = &y * s.v.column(j) * T::of_f64(1.0 / s.sigma[j]);
        input.set_column(j, &col);
    }
    Ok((numkit::to_complex(&state), numkit::to_complex(&input)))
}

/// Kernel slice of the pencil of `sys` at `lambda`; real arithmetic when
/// `lambda` is real so that real slices have exactly real bases.
pub fn kernel_slice(sys: &LtiSystem, lambda: C64, rtol: f64) -> Result<KernelSlice> {
    let n = sys.n();
    let (state, input) = if lambda.im == 0.0 {
        split_kernel(&pencil::rosenbrock_real(sys, lambda.re), n, rtol)?
    } else {
        split_kernel(&pencil::rosenbrock(sys, lambda), n, rtol)?
    };
    Ok(KernelSlice { lambda, state, input })
}

/// `R(lambda)`.
pub fn r_lambda(sys: &LtiSystem, lambda: C64, rtol: f64) -> Result<KernelSlice> {
    kernel_slice(sys, lambda, rtol)
}

/// `R_i(lambda)`, the kernel with output row `i` (0-based) removed.
pub fn r_i_lambda(sys: &LtiSystem, i: usize, lambda: C64, rtol: f64) -> Result<KernelSlice> {
    kernel_slice(&sys.row_deleted(i)?, lambda, rtol)
}

/// Solutions of `P(lambda) [v; w] = [0; delta e_i]`, stored for `delta = 1`.
///
/// Off the zero set the state span is `R_i(lambda)`. At an invariant zero it
/// is the span of the least-norm particular solution alone, and the
/// homogeneous part is left empty.
#[derive(Clone, Debug)]
pub struct DirectedSlice {
    pub lambda: C64,
    pub output: usize,
    pub at_zero: bool,
    pub feasible: bool,
    pub particular_state: CVector,
    pub particular_input: CVector,
    pub homogeneous: Option<KernelSlice>,
    pub state_span: SubspaceBasis,
}

pub fn r_hat_i(sys: &LtiSystem, i: usize, lambda: C64, zeros: &ZeroStructure, rtol: f64) -> Result<DirectedSlice> {
    let (n, m, p) = (sys.n(), sys.m(), sys.p());
    if i >= p {
        return Err(Error::BadIndex { index: i, outputs: p });
    }
    let at_zero = zeros.is_zero(lambda);
    let pm = pencil::rosenbrock(sys, lambda);
    let mut rhs = CVector::zeros(n + p);
    rhs[n + i] = C64::new(1.0, 0.0);
    let solved = numkit::affine_solution_set(&pm, &rhs, rtol)?.feasible();
    let Some(set) = solved else {
        return Ok(DirectedSlice {
            lambda,
            output: i,
            at_zero,
            feasible: false,
            particular_state: CVector::zeros(n),
            particular_input: CVector::zeros(m),
            homogeneous: None,
            state_span: SubspaceBasis::zero(n),
        });
    };
    let mut ps = set.particular.rows(0, n).into_owned();
    let mut pi = set.particular.rows(n, m).into_owned();
    if lambda.im == 0.0 {
        // The right-hand side is real, so the least-norm solution is too.
        ps.iter_mut().for_each(|z| z.im = 0.0);
        pi.iter_mut().for_each(|z| z.im = 0.0);
    }
    let homogeneous = if at_zero { None } else { Some(kernel_slice(sys, lambda, rtol)?) };
    let mut cols = vec![CMatrix::from_column_slice(n, 1, ps.as_slice())];
    if let Some(h) = &homogeneous {
        cols.push(h.state.clone());
    }
    let refs: Vec<&CMatrix> = cols.iter().collect();
    let state_span = SubspaceBasis::span(&numkit::hstack(n, &refs), rtol)?;
    Ok(DirectedSlice {
        lambda,
        output: i,
        at_zero,
        feasible: state_span.dim() > 0,
        particular_state: ps,
        particular_input: pi,
        homogeneous,
        state_span,
    })
}

/// Span of a slice together with its conjugate, as a self-conjugate subspace.
fn realified(span: &SubspaceBasis, rtol: f64) -> Result<SubspaceBasis> {
    span.realify(rtol)
}

/// Which family a complex-zero decomposition is taken of.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FamilyKind {
    /// `E_g`: kernels of the full pencil.
    Eg,
    /// `L_i`: directed slices for output `i`.
    L(usize),
    /// `T_i`: kernels with output row `i` removed.
    T(usize),
}

/// A family split into its real part and one member pair per complex
/// minimum-phase zero (the zero with negative imaginary part first).
#[derive(Clone, Debug)]
pub struct ComplexDecomposition {
    pub kind: FamilyKind,
    pub real_part: SubspaceBasis,
    pub pairs: Vec<(C64, SubspaceBasis, SubspaceBasis)>,
}

/// Subspace computations for one system, with its zeros computed once.
#[derive(Debug)]
pub struct Geometry {
    sys: LtiSystem,
    region: StabilityRegion,
    rtol: f64,
    seed: u64,
    salt: u64,
    zeros: ZeroStructure,
    r_star: OnceLock<SubspaceBasis>,
    v_star_g: OnceLock<SubspaceBasis>,
    subsystems: Vec<OnceLock<Box<Geometry>>>,
}

impl Geometry {
    pub fn new(sys: &LtiSystem, region: &StabilityRegion, rtol: f64, seed: u64) -> Result<Self> {
        Self::with_salt(sys, region, rtol, seed, 0)
    }

    fn with_salt(sys: &LtiSystem, region: &StabilityRegion, rtol: f64, seed: u64, salt: u64) -> Result<Self> {
        let zeros = pencil::invariant_zeros(sys, rtol)?;
        Ok(Geometry {
            sys: sys.clone(),
            region: region.clone(),
            rtol,
            seed,
            salt,
            zeros,
            r_star: OnceLock::new(),
            v_star_g: OnceLock::new(),
            subsystems: (0..sys.p()).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn system(&self) -> &LtiSystem {
        &self.sys
    }

    pub fn region(&self) -> &StabilityRegion {
        &self.region
    }

    pub fn rtol(&self) -> f64 {
        self.rtol
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn zeros(&self) -> &ZeroStructure {
        &self.zeros
    }

    pub fn n(&self) -> usize {
        self.sys.n()
    }

    pub fn right_invertible(&self) -> bool {
        self.zeros.normal_rank == self.sys.n() + self.sys.p()
    }

    pub fn min_phase_zeros(&self) -> Vec<InvariantZero> {
        pencil::minimum_phase_zeros(&self.zeros, &self.region)
    }

    /// Fails when a minimum-phase zero has a nontrivial Jordan structure.
    pub fn require_semisimple_zeros(&self) -> Result<()> {
        for z in self.min_phase_zeros() {
            if z.algebraic != z.geometric {
                return Err(Error::NontrivialJordanZero(format!(
                    "{} (algebraic {}, geometric {})",
                    z.z(),
                    z.algebraic,
                    z.geometric
                )));
            }
        }
        Ok(())
    }

    pub fn r_lambda(&self, lambda: C64) -> Result<KernelSlice> {
        r_lambda(&self.sys, lambda, self.rtol)
    }

    pub fn r_i_lambda(&self, i: usize, lambda: C64) -> Result<KernelSlice> {
        self.check_output(i)?;
        r_i_lambda(&self.sys, i, lambda, self.rtol)
    }

    pub fn r_hat_i(&self, i: usize, lambda: C64) -> Result<DirectedSlice> {
        r_hat_i(&self.sys, i, lambda, &self.zeros, self.rtol)
    }

    fn check_output(&self, i: usize) -> Result<()> {
        if i >= self.sys.p() {
            return Err(Error::BadIndex {
                index: i,
                outputs: self.sys.p(),
            });
        }
        Ok(())
    }

    /// Accumulation points: one random point in each of `n + 2` equal cells
    /// of `[-s, s]`, visited in random order, with `s` tied to the size of
    /// `A`. Spread-out points keep the kernels well separated; points within
    /// a tenth of a cell of an invariant zero are redrawn.
    fn accumulation_points(&self) -> Result<Vec<f64>> {
        let cells = self.n() + 2;
        let s = 1.5 * numkit::spectral_norm(&self.sys.a)?.max(1.0);
        let w = 2.0 * s / cells as f64;
        let mut rng = rng::stream(self.seed, rng::ACCUMULATE + 16 * self.salt);
        let mut order: Vec<usize> = (0..cells).collect();
        order.shuffle(&mut rng);
        order
            .into_iter()
            .map(|k| {
                (0..1000)
                    .map(|_| -s + w * (k as f64 + rng::uniform(&mut rng, 0.15, 0.85)))
                    .find(|&l| self.zeros.zeros.iter().all(|z| (z.z() - C64::new(l, 0.0)).norm() > 0.1 * w))
                    .ok_or_else(|| Error::Numerical("could not draw a fresh accumulation point".into()))
            })
            .collect()
    }

    /// `R*` as the sum of `R(lambda)` over distinct real points away from the
    /// zeros, stopping after two additions that do not grow it.
    pub fn r_star(&self) -> Result<SubspaceBasis> {
        if let Some(r) = self.r_star.get() {
            return Ok(r.clone());
        }
        let n = self.n();
        let mut acc = SubspaceBasis::zero(n);
        let mut slices: Vec<CMatrix> = Vec::new();
        let mut stalled = 0;
        for lambda in self.accumulation_points()? {
            // Span of every slice so far, not an update of the previous
            // basis, so weakly growing directions are not amplified.
            slices.push(self.r_lambda(C64::new(lambda, 0.0))?.span().basis().clone());
            let next = SubspaceBasis::span(&numkit::hstack(n, &slices.iter().collect::<Vec<_>>()), self.rtol)?;
            if next.dim() > acc.dim() {
                acc = next;
                stalled = 0;
            } else {
                stalled += 1;
                if stalled >= 2 {
                    break;
                }
            }
            if acc.dim() == n {
                break;
            }
        }
        let _ = self.r_star.set(acc.clone());
        Ok(acc)
    }

    fn plus_zero_kernels(&self, zeros: &[InvariantZero]) -> Result<SubspaceBasis> {
        let mut acc = self.r_star()?;
        for z in zeros {
            let slice = self.r_lambda(z.z())?;
            acc = acc.sum(&realified(&slice.span(), self.rtol)?, self.rtol)?;
        }
        Ok(acc)
    }

    /// `V* = R* + sum of R(z)` over all invariant zeros.
    pub fn v_star(&self) -> Result<SubspaceBasis> {
        self.plus_zero_kernels(&self.zeros.zeros)
    }

    /// `V*_g = R* + sum of R(z)` over the minimum-phase zeros.
    pub fn v_star_g(&self) -> Result<SubspaceBasis> {
        if let Some(v) = self.v_star_g.get() {
            return Ok(v.clone());
        }
        let v = self.plus_zero_kernels(&self.min_phase_zeros())?;
        let _ = self.v_star_g.set(v.clone());
        Ok(v)
    }

    /// Geometry of the system with output row `i` removed.
    pub fn subsystem(&self, i: usize) -> Result<&Geometry> {
        self.check_output(i)?;
        if let Some(g) = self.subsystems[i].get() {
            return Ok(g);
        }
        let sub = self.sys.row_deleted(i)?;
        let g = Geometry::with_salt(&sub, &self.region, self.rtol, self.seed, self.salt * 8 + i as u64 + 1)?;
        let _ = self.subsystems[i].set(Box::new(g));
        Ok(self.subsystems[i].get().expect("just set"))
    }

    pub fn r_star_i(&self, i: usize) -> Result<SubspaceBasis> {
        self.subsystem(i)?.r_star()
    }

    /// `V*_{g,i}`, cross-checked against `V*_g + R*_i` for right-invertible
    /// systems.
    pub fn v_star_g_i(&self, i: usize) -> Result<SubspaceBasis> {
        let direct = self.subsystem(i)?.v_star_g()?;
        if self.right_invertible() {
            let via = self.v_star_g()?.sum(&self.r_star_i(i)?, self.rtol)?;
            if !direct.same_as(&via, self.rtol)? {
                return Err(Error::InternalInconsistency(format!(
                    "V*_g,{} has dimension {} but V*_g + R*_{} has dimension {}",
                    i + 1,
                    direct.dim(),
                    i + 1,
                    via.dim()
                )));
            }
        }
        Ok(direct)
    }

    /// `L_i = R*_i + sum of span R^_i(z)` over the minimum-phase zeros.
    pub fn l_i(&self, i: usize) -> Result<SubspaceBasis> {
        let mut acc = self.r_star_i(i)?;
        for z in self.min_phase_zeros() {
            let d = self.r_hat_i(i, z.z())?;
            acc = acc.sum(&realified(&d.state_span, self.rtol)?, self.rtol)?;
        }
        Ok(acc)
    }

    pub fn complex_zero_decomposition(&self, kind: FamilyKind) -> Result<ComplexDecomposition> {
        let mut real_part = match kind {
            FamilyKind::Eg => self.r_star()?,
            FamilyKind::L(i) | FamilyKind::T(i) => self.r_star_i(i)?,
        };
        let mut pairs = Vec::new();
        for z in self.min_phase_zeros() {
            let v = z.z();
            if v.im > 0.0 {
                continue;
            }
            let span = match kind {
                FamilyKind::Eg => self.r_lambda(v)?.span(),
                FamilyKind::L(i) => self.r_hat_i(i, v)?.state_span,
                FamilyKind::T(i) => self.r_i_lambda(i, v)?.span(),
            };
            if v.im == 0.0 {
                real_part = real_part.sum(&span, self.rtol)?;
            } else {
                let conj = span.conj();
                pairs.push((v, span, conj));
            }
        }
        Ok(ComplexDecomposition { kind, real_part, pairs })
    }
}

/// `R*` of `sys` for the standard region of its time domain.
pub fn r_star(sys: &LtiSystem, seed: u64) -> Result<SubspaceBasis> {
    Geometry::new(sys, &StabilityRegion::standard(sys.domain), numkit::DEFAULT_RTOL, seed)?.r_star()
}

pub fn v_star_g(sys: &LtiSystem, region: &StabilityRegion, seed: u64) -> Result<SubspaceBasis> {
    Geometry::new(sys, region, numkit::DEFAULT_RTOL, seed)?.v_star_g()
}
