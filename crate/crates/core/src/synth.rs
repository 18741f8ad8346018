//! Feedback synthesis: one closed-loop eigenvector per mode slot, drawn from
//! the pencil kernel that makes it hidden or observable from a single
//! output, then `F = W V^-1`. Also the friend of `R*` and the feedforward
//! gain.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::geometry::{self, DirectedSlice, Geometry, KernelSlice};
use crate::numkit::{self, CMatrix, CVector, RMatrix, C64, DEFAULT_RTOL};
use crate::pencil;
use crate::problem::{self, ProblemClass, ProblemSpec, Variant};
use crate::rado::{self, SolvabilityReport, TransversalSet};
use crate::rng::{self, StageRng};
use crate::sysmodel::LtiSystem;
use crate::verify;

/// Draws of the whole eigenvector set before giving up.
pub const MAX_ATTEMPTS: usize = 50;
/// Largest accepted condition number of the eigenvector matrix.
pub const MAX_COND: f64 = 1e10;
/// Smallest accepted `|delta|` for a slot that must be observable.
pub const MIN_DELTA: f64 = 1e-9;
/// Largest accepted imaginary part of `W V^-1`, relative to its largest entry.
pub const REALIFY_TOL: f64 = 1e-8;
/// A new eigenvector must keep this fraction of its norm after projecting
/// out the ones already chosen.
const INDEPENDENCE_TOL: f64 = 1e-8;
/// Grid candidates offered beyond the count of a flexible group.
const GRID_SPARE: usize = 3;
/// A verified draw whose eigenvector matrix is this well conditioned is
/// returned at once.
const GOOD_COND: f64 = 1e4;
/// Further draws tried after a verified but poorly conditioned one, keeping
/// the best conditioned. A large `cond(V)` inflates `||F||` and makes the
/// closed-loop modes sensitive to roundoff.
const EXTRA_DRAWS: usize = 10;

/// Where a slot's eigenvector comes from.
#[derive(Clone, Debug)]
pub enum Slice {
    Kernel(KernelSlice),
    Directed(DirectedSlice),
}

impl Slice {
    pub fn dim(&self) -> usize {
        match self {
            Slice::Kernel(k) => k.dim(),
            Slice::Directed(d) => d.state_span.dim(),
        }
    }

    /// The slice as a set of stacked `[v; w]` vectors.
    fn set(&self) -> TransversalSet {
        match self {
            Slice::Kernel(k) => TransversalSet::Linear(numkit::vstack(k.dim(), &[&k.state, &k.input])),
            Slice::Directed(d) => {
                let particular = CVector::from_iterator(
                    d.particular_state.len() + d.particular_input.len(),
                    d.particular_state.iter().chain(d.particular_input.iter()).copied(),
                );
                let rows = particular.len();
                let directions = match &d.homogeneous {
                    Some(h) => numkit::vstack(h.dim(), &[&h.state, &h.input]),
                    None => CMatrix::zeros(rows, 0),
                };
                TransversalSet::Affine { particular, directions }
            }
        }
    }
}

/// One closed-loop eigenvalue with the slice its eigenvector is drawn from.
#[derive(Clone, Debug)]
pub struct ModeSlot {
    pub lambda: C64,
    /// 0 for a hidden mode, otherwise the 1-based output that sees it.
    pub tag: usize,
    pub slice: Slice,
    /// The draw must show `|delta| > MIN_DELTA` at its output.
    pub needs_delta: bool,
    set: TransversalSet,
}

impl ModeSlot {
    fn new(lambda: C64, tag: usize, slice: Slice, needs_delta: bool) -> Self {
        let set = slice.set();
        ModeSlot { lambda, tag, slice, needs_delta, set }
    }
}

/// A single slot, or a slot at a complex eigenvalue together with its
/// conjugate, which takes the conjugate eigenvector.
#[derive(Clone, Debug)]
pub enum SlotUnit {
    Single(ModeSlot),
    Pair(ModeSlot),
}

impl SlotUnit {
    pub fn slot(&self) -> &ModeSlot {
        match self {
            SlotUnit::Single(s) | SlotUnit::Pair(s) => s,
        }
    }

    pub fn size(&self) -> usize {
        match self {
            SlotUnit::Single(_) => 1,
            SlotUnit::Pair(_) => 2,
        }
    }
}

/// `count` slots to be filled from `pool`, whose units are tried in order
/// and kept when they add independent eigenvectors.
#[derive(Clone, Debug)]
pub struct SlotGroup {
    pub name: String,
    pub count: usize,
    pub pool: Vec<SlotUnit>,
    /// Output (1-based, 0 for hidden) whose slices the grid points of the
    /// pool come from, when the pool draws on the grid.
    grid: Option<usize>,
}

/// Every slot of a synthesis: the fixed ones are always used.
#[derive(Clone, Debug)]
pub struct SlotPlan {
    pub fixed: Vec<SlotUnit>,
    pub groups: Vec<SlotGroup>,
    /// Groups must be filled in the given order (Problem 3B fills the
    /// stabilizability subspace first).
    pub ordered: bool,
}

impl SlotPlan {
    pub fn total(&self) -> usize {
        self.fixed.iter().map(SlotUnit::size).sum::<usize>() + self.groups.iter().map(|g| g.count).sum::<usize>()
    }
}

/// One assigned eigenvector with its input direction.
#[derive(Clone, Debug)]
pub struct CandidateColumn {
    pub lambda: C64,
    pub tag: usize,
    pub v: CVector,
    pub w: CVector,
    /// `|(C v + D w)_i|` for the tagged output `i`, 0 for hidden columns.
    pub delta: f64,
}

#[derive(Clone, Debug)]
pub struct FeedbackSolution {
    pub f: RMatrix,
    pub g: RMatrix,
    pub assignment: Vec<CandidateColumn>,
    /// Coefficients of each column in its slice basis.
    pub k_params: Vec<CVector>,
    /// Draws used, counting the successful one.
    pub attempts: usize,
}

struct Planner<'a> {
    g: &'a Geometry,
    class: ProblemClass,
    used: Vec<C64>,
    cursor: usize,
}

impl<'a> Planner<'a> {
    fn fresh_lambda(&mut self) -> Option<C64> {
        let region = self.g.region();
        for _ in 0..10_000 {
            let z = C64::new(region.grid(self.cursor), 0.0);
            self.cursor += 1;
            if !region.contains(z) || self.g.zeros().is_zero(z) || self.used.iter().any(|&u| pencil::near(u, z)) {
                continue;
            }
            self.used.push(z);
            return Some(z);
        }
        None
    }

    /// The slot at the grid point `z` for output `tag` (0 for hidden), if
    /// its slice is nonzero.
    fn grid_slot(&self, tag: usize, z: C64) -> Result<Option<ModeSlot>> {
        let g = self.g;
        let slice = match (tag, self.class) {
            (0, _) => Slice::Kernel(g.r_lambda(z)?),
            (i, ProblemClass::Two) => Slice::Directed(g.r_hat_i(i - 1, z)?),
            (i, _) => Slice::Kernel(g.r_i_lambda(i - 1, z)?),
        };
        let needs_delta = tag > 0 && self.class != ProblemClass::Three;
        Ok((slice.dim() > 0).then(|| ModeSlot::new(z, tag, slice, needs_delta)))
    }

    /// Up to `want` grid units, skipping points with an empty slice.
    fn grid_units(&mut self, tag: usize, want: usize) -> Result<Vec<SlotUnit>> {
        let mut out = Vec::new();
        let mut tries = 0;
        while out.len() < want && tries < 4 * want + 20 {
            tries += 1;
            let Some(z) = self.fresh_lambda() else { break };
            if let Some(s) = self.grid_slot(tag, z)? {
                out.push(SlotUnit::Single(s));
            }
        }
        Ok(out)
    }

    fn real_zeros(&self) -> Vec<C64> {
        self.g.min_phase_zeros().iter().map(|z| z.z()).filter(|z| z.im == 0.0).collect()
    }

    fn hidden_slot(&self, z: C64) -> Result<ModeSlot> {
        Ok(ModeSlot::new(z, 0, Slice::Kernel(self.g.r_lambda(z)?), false))
    }

    fn observable_slot(&self, i: usize, z: C64, directed: bool) -> Result<ModeSlot> {
        let slice = if directed {
            Slice::Directed(self.g.r_hat_i(i, z)?)
        } else {
            Slice::Kernel(self.g.r_i_lambda(i, z)?)
        };
        Ok(ModeSlot::new(z, i + 1, slice, self.class != ProblemClass::Three))
    }

    /// Hidden modes taken freely: real minimum-phase zeros first, then grid
    /// points where `R(lambda)` is nonzero.
    fn hidden_group(&mut self, count: usize) -> Result<SlotGroup> {
        let mut pool = Vec::new();
        for z in self.real_zeros() {
            let s = self.hidden_slot(z)?;
            for _ in 0..s.slice.dim() {
                pool.push(SlotUnit::Single(s.clone()));
            }
        }
        let grid = (count > 0 && self.g.r_star()?.dim() > 0).then_some(0);
        if grid.is_some() {
            pool.extend(self.grid_units(0, count)?);
        }
        Ok(SlotGroup {
            name: "hidden".into(),
            count,
            pool,
            grid,
        })
    }

    /// Free modes of output `i` for variant C.
    fn output_group(&mut self, i: usize, count: usize) -> Result<SlotGroup> {
        let class = self.class;
        let mut pool = Vec::new();
        match class {
            ProblemClass::One => {}
            ProblemClass::Two => {
                for z in self.real_zeros() {
                    let s = self.observable_slot(i, z, true)?;
                    if s.slice.dim() > 0 {
                        pool.push(SlotUnit::Single(s));
                    }
                }
            }
            ProblemClass::Three => {
                for z in self.real_zeros() {
                    let s = self.observable_slot(i, z, false)?;
                    for _ in 0..s.slice.dim() {
                        pool.push(SlotUnit::Single(s.clone()));
                    }
                }
            }
        }
        let grid = (count > 0 && self.g.r_star_i(i)?.dim() > 0).then_some(i + 1);
        if grid.is_some() {
            pool.extend(self.grid_units(i + 1, count)?);
        }
        Ok(SlotGroup {
            name: format!("output {}", i + 1),
            count,
            pool,
            grid,
        })
    }

    /// Units of a prescribed list, `keep` selecting which entries are used.
    fn listed_units(&self, list: &[C64], tag: usize, keep: impl Fn(usize) -> bool) -> Result<Vec<SlotUnit>> {
        let pairs = problem::conjugate_pairs(list).ok_or_else(|| Error::BadSpec("unpaired complex mode".into()))?;
        let partners: Vec<usize> = pairs.iter().map(|&(_, l)| l).collect();
        let mut out = Vec::new();
        for (k, &z) in list.iter().enumerate() {
            if partners.contains(&k) || !keep(k) {
                continue;
            }
            let slot = if tag == 0 {
                self.hidden_slot(z)?
            } else {
                self.observable_slot(tag - 1, z, self.class == ProblemClass::Two)?
            };
            if slot.slice.dim() == 0 {
                return Err(Error::InternalInconsistency(format!(
                    "empty slice for the prescribed mode {z} of {}",
                    if tag == 0 { "the hidden list".to_string() } else { format!("output {tag}") }
                )));
            }
            out.push(if z.im == 0.0 { SlotUnit::Single(slot) } else { SlotUnit::Pair(slot) });
        }
        Ok(out)
    }

    /// `copies` conjugate pairs at the complex zero `z`.
    fn zero_pairs(&self, z: C64, tag: usize, copies: usize) -> Result<Vec<SlotUnit>> {
        if copies == 0 {
            return Ok(Vec::new());
        }
        let slot = if tag == 0 {
            self.hidden_slot(z)?
        } else {
            let mut s = self.observable_slot(tag - 1, z, self.class == ProblemClass::Two)?;
            s.needs_delta = false;
            s
        };
        if slot.slice.dim() == 0 {
            return Err(Error::InternalInconsistency(format!("empty slice at the zero {z}")));
        }
        Ok(vec![SlotUnit::Pair(slot); copies])
    }
}

/// The mode slots of a synthesis for a solvable `spec`, with candidate
/// pools for the slots whose eigenvalue is free.
pub fn assemble_candidates(g: &Geometry, spec: &ProblemSpec, report: &SolvabilityReport) -> Result<SlotPlan> {
    if !report.verdict {
        return Err(Error::Unsolvable);
    }
    let n = g.n();
    let p = g.system().p();
    let kind = spec.kind;
    let mut planner = Planner {
        g,
        class: kind.class,
        used: spec.modes.iter().flatten().chain(&spec.unobservable).copied().collect(),
        cursor: 0,
    };
    let split = report.split.as_ref();
    let zeros_c: Vec<C64> = split.map(|s| s.zeros.iter().map(|z| z.0).collect()).unwrap_or_default();
    let mut fixed = Vec::new();
    let mut groups = Vec::new();
    let mut ordered = false;

    // Observable slots.
    match kind.variant {
        Variant::B if kind.class == ProblemClass::Three => match split {
            Some(s) => {
                for i in 0..p {
                    let list = &spec.modes[i];
                    fixed.extend(planner.listed_units(list, i + 1, |k| s.selected_modes.contains(&(i, k)))?);
                }
            }
            None => {
                let mut pool = Vec::new();
                for i in 0..p {
                    pool.extend(planner.listed_units(&spec.modes[i], i + 1, |_| true)?);
                }
                let ground = g.v_star_g()?.dim().min(n);
                groups.push(planner.hidden_group(ground)?);
                groups.push(SlotGroup {
                    name: "prescribed".into(),
                    count: n - ground,
                    pool,
                    grid: None,
                });
                ordered = true;
            }
        },
        Variant::A | Variant::B => {
            for i in 0..p {
                fixed.extend(planner.listed_units(&spec.modes[i], i + 1, |_| true)?);
            }
        }
        Variant::C => {
            for i in 0..p {
                let count = match (kind.class, split) {
                    (ProblemClass::Two | ProblemClass::Three, Some(s)) => {
                        let per = &s.outputs[i];
                        for (j, &z) in zeros_c.iter().enumerate() {
                            fixed.extend(planner.zero_pairs(z, i + 1, per[j + 1])?);
                        }
                        per[0]
                    }
                    _ => spec.nu[i],
                };
                groups.push(planner.output_group(i, count)?);
            }
        }
    }

    // Hidden slots.
    if kind.variant == Variant::A {
        fixed.extend(planner.listed_units(&spec.unobservable, 0, |_| true)?);
    } else if !ordered {
        let count = match split {
            Some(s) => {
                for (j, &z) in zeros_c.iter().enumerate() {
                    fixed.extend(planner.zero_pairs(z, 0, s.hidden[j + 1])?);
                }
                s.hidden[0]
            }
            None => report.hidden_count,
        };
        groups.push(planner.hidden_group(count)?);
    }

    // Spare grid points go out only after every group has its share, so
    // the assigned eigenvalues stay near the start of the grid.
    for grp in groups.iter_mut() {
        if let Some(tag) = grp.grid {
            grp.pool.extend(planner.grid_units(tag, GRID_SPARE)?);
        }
    }

    let plan = SlotPlan { fixed, groups, ordered };
    if plan.total() != n {
        return Err(Error::InternalInconsistency(format!("{} mode slots for {n} states", plan.total())));
    }
    Ok(plan)
}

struct Fill<'a> {
    sys: &'a LtiSystem,
    cols: Vec<CandidateColumn>,
    k_params: Vec<CVector>,
    basis: Vec<CVector>,
}

impl<'a> Fill<'a> {
    fn independent(&mut self, v: &CVector) -> bool {
        let norm = v.norm();
        if norm == 0.0 {
            return false;
        }
        let mut r = v.clone();
        for _ in 0..2 {
            for q in &self.basis {
                let c = q.dotc(&r);
                r -= q * c;
            }
        }
        let left = r.norm();
        if left <= INDEPENDENCE_TOL * norm {
            return false;
        }
        self.basis.push(r.unscale(left));
        true
    }

    fn push(&mut self, slot: &ModeSlot, lambda: C64, x: CVector, k: CVector) -> bool {
        let (n, m) = (self.sys.n(), self.sys.m());
        let v = x.rows(0, n).into_owned();
        let w = x.rows(n, m).into_owned();
        let delta = if slot.tag == 0 {
            0.0
        } else {
            let y = numkit::to_complex(&self.sys.c) * &v + numkit::to_complex(&self.sys.d) * &w;
            y[slot.tag - 1].norm()
        };
        if slot.needs_delta && delta <= MIN_DELTA {
            return false;
        }
        if !self.independent(&v) {
            return false;
        }
        self.cols.push(CandidateColumn { lambda, tag: slot.tag, v, w, delta });
        self.k_params.push(k);
        true
    }

    /// Draws the unit and keeps it when all its eigenvectors are new.
    fn try_unit(&mut self, unit: &SlotUnit, rng: &mut StageRng) -> bool {
        let slot = unit.slot();
        let (x, k) = slot.set.draw_with(slot.lambda.im == 0.0, rng);
        let mark = (self.cols.len(), self.basis.len());
        let ok = match unit {
            SlotUnit::Single(_) => self.push(slot, slot.lambda, x, k),
            SlotUnit::Pair(_) => {
                let (xc, kc) = (x.map(|z| z.conj()), k.map(|z| z.conj()));
                self.push(slot, slot.lambda, x, k) && self.push(slot, slot.lambda.conj(), xc, kc)
            }
        };
        if !ok {
            self.cols.truncate(mark.0);
            self.k_params.truncate(mark.0);
            self.basis.truncate(mark.1);
        }
        ok
    }
}

/// Synthesizes `F` and `G` for `spec`, or reports why it cannot.
pub fn synthesize_feedback(sys: &LtiSystem, spec: &ProblemSpec, seed: u64) -> Result<FeedbackSolution> {
    let region = spec.region_or(sys);
    let g = Geometry::new(sys, &region, DEFAULT_RTOL, seed)?;
    let report = rado::check_problem_in(&g, spec, Execution::default())?;
    synthesize_in(&g, spec, &report, seed)
}

/// [`synthesize_feedback`] with the geometry and solvability report at hand.
pub fn synthesize_in(g: &Geometry, spec: &ProblemSpec, report: &SolvabilityReport, seed: u64) -> Result<FeedbackSolution> {
    let sys = g.system();
    let n = sys.n();
    let plan = assemble_candidates(g, spec, report)?;
    let mut rng = rng::stream(seed, rng::SYNTHESIS);
    let mut reason = String::from("no attempt made");
    let mut mismatch: Option<String> = None;
    let mut best: Option<(f64, FeedbackSolution)> = None;
    let mut deadline = MAX_ATTEMPTS;
    for attempt in 0..MAX_ATTEMPTS {
        if attempt >= deadline {
            break;
        }
        let mut groups = plan.groups.clone();
        if attempt > 0 {
            if !plan.ordered {
                groups.shuffle(&mut rng);
            }
            for grp in groups.iter_mut() {
                grp.pool.shuffle(&mut rng);
            }
        }
        let mut fill = Fill {
            sys,
            cols: Vec::with_capacity(n),
            k_params: Vec::with_capacity(n),
            basis: Vec::with_capacity(n),
        };
        if let Some(u) = plan.fixed.iter().find(|u| !fill.try_unit(u, &mut rng)) {
            reason = format!("prescribed slot at {} gave a dependent eigenvector", u.slot().lambda);
            continue;
        }
        let mut short = None;
        for grp in &groups {
            let mut need = grp.count;
            for unit in &grp.pool {
                if need == 0 {
                    break;
                }
                if unit.size() <= need && fill.try_unit(unit, &mut rng) {
                    need -= unit.size();
                }
            }
            if need > 0 {
                short = Some(format!("{} left {need} of {} slots unfilled", grp.name, grp.count));
                break;
            }
        }
        if let Some(s) = short {
            reason = s;
            continue;
        }
        match finish(sys, spec, fill, attempt + 1)? {
            Outcome::Done(kappa, sol) => {
                if kappa <= GOOD_COND {
                    return Ok(sol);
                }
                if best.is_none() {
                    deadline = (attempt + 1 + EXTRA_DRAWS).min(MAX_ATTEMPTS);
                }
                if best.as_ref().is_none_or(|(k, _)| kappa < *k) {
                    best = Some((kappa, sol));
                }
            }
            Outcome::Retry(r) => reason = r,
            Outcome::Mismatch(r) => mismatch = Some(r),
        }
    }
    if let Some((_, sol)) = best {
        return Ok(sol);
    }
    match mismatch {
        Some(d) => Err(Error::VerificationFailed(d)),
        None => Err(Error::SynthesisFailed(format!("{MAX_ATTEMPTS} draws failed, last: {reason}"))),
    }
}

enum Outcome {
    Done(f64, FeedbackSolution),
    Retry(String),
    Mismatch(String),
}

fn finish(sys: &LtiSystem, spec: &ProblemSpec, fill: Fill, attempts: usize) -> Result<Outcome> {
    let (n, m) = (sys.n(), sys.m());
    let mut v = CMatrix::zeros(n, n);
    let mut w = CMatrix::zeros(m, n);
    for (j, c) in fill.cols.iter().enumerate() {
        v.set_column(j, &c.v);
        w.set_column(j, &c.w);
    }
    let kappa = numkit::cond(&v)?;
    if kappa > MAX_COND {
        return Ok(Outcome::Retry(format!("eigenvector matrix condition number {kappa:.3e}")));
    }
    // Solve F V = W by LU rather than forming V^-1: the residual F V - W,
    // which is what moves the closed-loop spectrum, then stays at roundoff.
    let Some(fct) = v.transpose().lu().solve(&w.transpose()) else {
        return Ok(Outcome::Retry("singular eigenvector matrix".into()));
    };
    let fc = fct.transpose();
    let ratio = numkit::imag_ratio(&fc);
    if ratio > REALIFY_TOL {
        return Ok(Outcome::Retry(format!("imaginary residue {ratio:.3e} in W V^-1")));
    }
    let f = numkit::real_part(&fc);

    let (af, _) = sys.closed_loop(&f);
    let eig = numkit::eigenvalues(&af)?;
    let slots: Vec<C64> = fill.cols.iter().map(|c| c.lambda).collect();
    if !verify::same_multiset(&eig, &slots, verify::ASSIGNMENT_TOL) {
        return Ok(Outcome::Mismatch("closed-loop spectrum differs from the slots".into()));
    }
    let check = verify::check_decoupling(sys, &f, spec);
    if !check.verdict {
        return Ok(Outcome::Mismatch(check.diagnostics()));
    }
    let g = feedforward_gain(sys, &f)?;
    Ok(Outcome::Done(kappa, FeedbackSolution {
        f,
        g,
        assignment: fill.cols,
        k_params: fill.k_params,
        attempts,
    }))
}

/// A real `F` making `R*` invariant and output-nulling with the restricted
/// spectrum `mus`.
pub fn friend_of_rstar(sys: &LtiSystem, mus: &[C64], seed: u64) -> Result<RMatrix> {
    let (n, m) = (sys.n(), sys.m());
    let r_star = geometry::r_star(sys, seed)?;
    let r = r_star.dim();
    if mus.len() != r {
        return Err(Error::BadSpec(format!("{} eigenvalues given for dim R* = {r}", mus.len())));
    }
    if r == 0 {
        return Ok(RMatrix::zeros(m, n));
    }
    for (k, &a) in mus.iter().enumerate() {
        if !a.re.is_finite() || !a.im.is_finite() {
            return Err(Error::BadSpec("non-finite eigenvalue".into()));
        }
        if mus[..k].iter().any(|&b| pencil::near(a, b)) {
            return Err(Error::BadSpec(format!("eigenvalue {a} repeated")));
        }
    }
    let pairs = problem::conjugate_pairs(mus).ok_or_else(|| Error::BadSpec("eigenvalues are not closed under conjugation".into()))?;
    let zeros = pencil::invariant_zeros(sys, DEFAULT_RTOL)?;
    if let Some(z) = mus.iter().find(|&&z| zeros.is_zero(z)) {
        return Err(Error::BadSpec(format!("{z} is an invariant zero")));
    }
    let partner_of: Vec<Option<usize>> = (0..r).map(|k| pairs.iter().find(|&&(_, l)| l == k).map(|&(s, _)| s)).collect();
    let sets: Vec<Option<TransversalSet>> = mus
        .iter()
        .zip(&partner_of)
        .map(|(&z, p)| match p {
            Some(_) => Ok(None),
            None => Ok(Some(Slice::Kernel(geometry::r_lambda(sys, z, DEFAULT_RTOL)?).set())),
        })
        .collect::<Result<_>>()?;
    let mut rng = rng::stream(seed, rng::FRIEND);
    for _ in 0..MAX_ATTEMPTS {
        let mut x = CMatrix::zeros(n + m, r);
        for k in 0..r {
            if let Some(set) = &sets[k] {
                x.set_column(k, &set.draw(mus[k].im == 0.0, &mut rng));
            }
        }
        for k in 0..r {
            if let Some(src) = partner_of[k] {
                let c = x.column(src).map(|z| z.conj());
                x.set_column(k, &c);
            }
        }
        let v = x.rows(0, n).into_owned();
        let w = x.rows(n, m).into_owned();
        let s = numkit::svd(&v)?;
        if s.sigma[r - 1] <= s.sigma[0] / MAX_COND {
            continue;
        }
        let fc = w * numkit::pseudo_inverse(&v, DEFAULT_RTOL)?;
        if numkit::imag_ratio(&fc) > REALIFY_TOL {
            continue;
        }
        return Ok(numkit::real_part(&fc));
    }
    Err(Error::SynthesisFailed(format!(
        "no independent eigenvectors for the given eigenvalues in {MAX_ATTEMPTS} draws"
    )))
}

/// Right inverse of the closed-loop static gain, so that `u = F x + G r`
/// drives `y` to a constant reference `r`.
pub fn feedforward_gain(sys: &LtiSystem, f: &RMatrix) -> Result<RMatrix> {
    let gain = verify::dc_gain(sys, f)?;
    let p = sys.p();
    let rank = numkit::rank_of(&gain, DEFAULT_RTOL)?;
    if rank < p {
        return Err(Error::NotRightInvertible { normal_rank: rank, outputs: p });
    }
    numkit::right_inverse(&gain, DEFAULT_RTOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysmodel::TimeDomain;

    #[test]
    fn scalar_gain_is_inverted() {
        let sys = LtiSystem::new(
            RMatrix::from_element(1, 1, -1.0),
            RMatrix::from_element(1, 1, 2.0),
            RMatrix::from_element(1, 1, 1.0),
            RMatrix::zeros(1, 1),
            TimeDomain::Continuous,
        )
        .unwrap();
        let g = feedforward_gain(&sys, &RMatrix::zeros(1, 1)).unwrap();
        assert!((g[(0, 0)] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn unstable_loop_has_no_feedforward() {
        let sys = LtiSystem::new(
            RMatrix::from_element(1, 1, 1.0),
            RMatrix::from_element(1, 1, 1.0),
            RMatrix::from_element(1, 1, 1.0),
            RMatrix::zeros(1, 1),
            TimeDomain::Continuous,
        )
        .unwrap();
        assert!(matches!(feedforward_gain(&sys, &RMatrix::zeros(1, 1)), Err(Error::NotStabilized(_))));
    }
}
