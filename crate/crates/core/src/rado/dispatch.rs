use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::geometry::{ComplexDecomposition, FamilyKind, Geometry};
use crate::json::CValue;
use crate::numkit::{self, SubspaceBasis, C64};
use crate::problem::{self, ProblemClass, ProblemKind, ProblemSpec, Variant};
use crate::sysmodel::{self, LtiSystem};

use super::ledger::{self, ConditionLedger, CountedFamily, LedgerEntry};
use super::transversal;

/// Cap on the number of count splits (and, for Problem 3B, unit
/// selections) tried in the complex case.
pub const MAX_CONFIGURATIONS: usize = 1 << 16;

/// Short decimal form of an eigenvalue for labels.
pub fn fmt_lambda(z: C64) -> String {
    fn num(x: f64) -> String {
        let s = format!("{x:.6}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        if s == "-0" {
            "0".to_string()
        } else {
            s.to_string()
        }
    }
    if z.im == 0.0 {
        num(z.re)
    } else {
        let sign = if z.im < 0.0 { '-' } else { '+' };
        format!("{}{}{}i", num(z.re), sign, num(z.im.abs()))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Stage {
    pub name: String,
    pub ledger: ConditionLedger,
}

/// Outcome of one count split in the complex case.
#[derive(Clone, Debug, Serialize)]
pub struct SplitOutcome {
    pub split: String,
    pub verdict: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_failure: Option<LedgerEntry>,
}

/// How the counts are distributed over the real part and the complex
/// minimum-phase zero pairs.
#[derive(Clone, Debug, Serialize)]
pub struct ComplexSplit {
    /// Complex minimum-phase zeros with negative imaginary part, in the
    /// order the split refers to.
    pub zeros: Vec<CValue>,
    /// `(real part, pair 1, pair 2, ...)` of the hidden count.
    pub hidden: Vec<usize>,
    /// The same for each output count (Problems 2C and 3C).
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub outputs: Vec<Vec<usize>>,
    /// Problem 3B: the prescribed modes that are actually assigned.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selected: Option<Vec<String>>,
    /// `(output, position)` of every selected mode, conjugates included.
    #[serde(skip)]
    pub selected_modes: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolvabilityReport {
    pub problem: ProblemKind,
    pub verdict: bool,
    pub complex_case: bool,
    /// `n - sum nu`.
    pub hidden_count: usize,
    pub stages: Vec<Stage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<ComplexSplit>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub splits_tried: Vec<SplitOutcome>,
}

/// Decides solvability of `spec` for `sys`.
pub fn check_problem(sys: &LtiSystem, spec: &ProblemSpec, rtol: f64, seed: u64) -> Result<SolvabilityReport> {
    let region = spec.region_or(sys);
    let g = Geometry::new(sys, &region, rtol, seed)?;
    check_problem_in(&g, spec, Execution::default())
}

/// [`check_problem`] on a prepared geometry (its region is the one used).
pub fn check_problem_in(g: &Geometry, spec: &ProblemSpec, mode: Execution) -> Result<SolvabilityReport> {
    sysmodel::require_assumption1(g.system(), g.region(), g.rtol())?;
    spec.validate(g.system(), g.zeros(), g.region())?;
    g.require_semisimple_zeros()?;
    Checker::new(g, spec, mode)?.run()
}

/// Labelled spans of one prescribed mode list. Each conjugate entry is
/// tied to the entry with negative imaginary part it pairs with.
struct ModeList {
    spans: Vec<(String, SubspaceBasis)>,
    /// Entries that are nobody's conjugate, in list order.
    primaries: Vec<usize>,
    partner_of: Vec<Option<usize>>,
}

struct Checker<'a> {
    g: &'a Geometry,
    spec: &'a ProblemSpec,
    mode: Execution,
    rtol: f64,
    n: usize,
    p: usize,
    hidden: usize,
    observable: Vec<ModeList>,
    unobservable: ModeList,
}

fn mode_list(list: &[C64], make: impl Fn(C64) -> Result<(String, SubspaceBasis)>) -> Result<ModeList> {
    let pairs = problem::conjugate_pairs(list).ok_or_else(|| Error::BadSpec("unpaired complex mode".into()))?;
    let mut partner_of = vec![None; list.len()];
    for &(k, l) in &pairs {
        partner_of[l] = Some(k);
    }
    let mut spans = Vec::with_capacity(list.len());
    for (k, &z) in list.iter().enumerate() {
        match partner_of[k] {
            Some(_) => spans.push((String::new(), SubspaceBasis::zero(0))),
            None => spans.push(make(z)?),
        }
    }
    for k in 0..list.len() {
        if let Some(src) = partner_of[k] {
            spans[k] = (make_conj_label(&spans[src].0, list[k]), spans[src].1.conj());
        }
    }
    let primaries = (0..list.len()).filter(|&k| partner_of[k].is_none()).collect();
    Ok(ModeList {
        spans,
        primaries,
        partner_of,
    })
}

fn make_conj_label(src: &str, z: C64) -> String {
    match src.find('(') {
        Some(at) => format!("{}({})", &src[..at], fmt_lambda(z)),
        None => format!("conj {src}"),
    }
}

impl ModeList {
    /// Adds every entry, or only those with `keep(k)`, with count 1.
    fn push_into(&self, family: &mut CountedFamily, keep: impl Fn(usize) -> bool) {
        let mut index = vec![usize::MAX; self.spans.len()];
        for &k in &self.primaries {
            if keep(k) {
                index[k] = family.push(self.spans[k].0.clone(), self.spans[k].1.clone(), 1);
            }
        }
        for (k, src) in self.partner_of.iter().enumerate() {
            if let Some(src) = *src {
                if keep(src) {
                    index[k] = family.push_conjugate(self.spans[k].0.clone(), index[src]);
                }
            }
        }
    }
}

/// Every `(s0, s1, ..., sc)` with `s0 + 2 (s1 + ... + sc) = total`, in
/// lexicographic order.
pub fn count_splits(total: usize, pairs: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, remaining: usize, pairs_left: usize, out: &mut Vec<Vec<usize>>) {
        if pairs_left == 0 {
            if remaining == 0 {
                out.push(prefix.clone());
            }
            return;
        }
        for s in 0..=remaining / 2 {
            prefix.push(s);
            rec(prefix, remaining - 2 * s, pairs_left - 1, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for s0 in 0..=total {
        if (total - s0) % 2 == 1 {
            continue;
        }
        let mut prefix = vec![s0];
        rec(&mut prefix, total - s0, pairs, &mut out);
    }
    out
}

/// All picks of one option per slot, the first slot varying slowest.
fn cartesian<T: Clone>(options: &[Vec<T>]) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = vec![Vec::new()];
    for opts in options {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                opts.iter().map(move |o| {
                    let mut v = prefix.clone();
                    v.push(o.clone());
                    v
                })
            })
            .collect();
    }
    out
}

fn split_label(v: &[usize]) -> String {
    let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    format!("({})", parts.join(","))
}

/// The decomposition members of one family for one split.
fn push_decomposition(family: &mut CountedFamily, d: &ComplexDecomposition, name: &str, split: &[usize]) {
    family.push(format!("{name},0"), d.real_part.clone(), split[0]);
    for (j, (z, span, _)) in d.pairs.iter().enumerate() {
        let k = family.push(format!("{name}({})", fmt_lambda(*z)), span.clone(), split[j + 1]);
        family.push_conjugate(format!("{name}({})", fmt_lambda(z.conj())), k);
    }
}

enum RealForm {
    Counted(CountedFamily),
    Bounded(CountedFamily, SubspaceBasis),
}

impl<'a> Checker<'a> {
    fn new(g: &'a Geometry, spec: &'a ProblemSpec, mode: Execution) -> Result<Self> {
        let n = g.n();
        let p = g.system().p();
        let class = spec.kind.class;
        let observable = (0..p)
            .map(|i| {
                mode_list(spec.modes.get(i).map_or(&[][..], Vec::as_slice), |z| match class {
                    ProblemClass::Two => Ok((format!("Rhat_{}({})", i + 1, fmt_lambda(z)), g.r_hat_i(i, z)?.state_span)),
                    _ => Ok((format!("R_{}({})", i + 1, fmt_lambda(z)), g.r_i_lambda(i, z)?.span())),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let unobservable = mode_list(&spec.unobservable, |z| Ok((format!("R({})", fmt_lambda(z)), g.r_lambda(z)?.span())))?;
        Ok(Checker {
            g,
            spec,
            mode,
            rtol: g.rtol(),
            n,
            p,
            hidden: spec.nu0(n),
            observable,
            unobservable,
        })
    }

    fn kind(&self) -> ProblemKind {
        self.spec.kind
    }

    fn real_form(&self) -> Result<RealForm> {
        let g = self.g;
        let nu = &self.spec.nu;
        let mut fam = match self.kind().variant {
            Variant::A => CountedFamily::new(),
            _ => CountedFamily::with_ground("V*_g", g.v_star_g()?, self.hidden),
        };
        let kind = self.kind();
        match (kind.class, kind.variant) {
            (_, Variant::A) => {
                self.unobservable.push_into(&mut fam, |_| true);
                for l in &self.observable {
                    l.push_into(&mut fam, |_| true);
                }
            }
            (ProblemClass::Three, Variant::B) => {
                let ground = g.v_star_g()?;
                if let Some(gr) = fam.ground.as_mut() {
                    gr.count = 0;
                }
                for l in &self.observable {
                    l.push_into(&mut fam, |_| true);
                }
                return Ok(RealForm::Bounded(fam, ground));
            }
            (_, Variant::B) => {
                for l in &self.observable {
                    l.push_into(&mut fam, |_| true);
                }
            }
            (class, Variant::C) => {
                for i in 0..self.p {
                    let (label, span) = match class {
                        ProblemClass::One => (format!("R*_{}", i + 1), g.r_star_i(i)?),
                        ProblemClass::Two => (format!("L_{}", i + 1), g.l_i(i)?),
                        ProblemClass::Three => (format!("V*_g,{}", i + 1), g.v_star_g_i(i)?),
                    };
                    fam.push(label, span, nu[i]);
                }
            }
        }
        Ok(RealForm::Counted(fam))
    }

    fn evaluate(&self, form: &RealForm) -> Result<ConditionLedger> {
        match form {
            RealForm::Counted(f) => ledger::check_counted_with(f, self.rtol, self.mode),
            RealForm::Bounded(f, ground) => ledger::check_bounded_with(f, ground, self.n, self.rtol, self.mode),
        }
    }

    fn with_witness(&self, mut l: ConditionLedger, form: &RealForm) -> ConditionLedger {
        if let (true, RealForm::Counted(f)) = (l.verdict, form) {
            l.witness = transversal::counted_witness(f, self.g.seed(), self.rtol).ok();
        }
        l
    }

    /// The corollary form of the Problem 3C test: `dim sum_P V*_g,i >=
    /// sum_P nu_i + nu_0` over nonempty `P`, and `dim V*_g >= nu_0`.
    fn corollary_3c(&self) -> Result<ConditionLedger> {
        let g = self.g;
        let vg = g.v_star_g()?;
        let parts: Vec<SubspaceBasis> = (0..self.p).map(|i| g.v_star_g_i(i)).collect::<Result<_>>()?;
        let mut entries = vec![LedgerEntry {
            subset: vec!["V*_g".into()],
            achieved: vg.dim(),
            required: self.hidden,
            pass: vg.dim() >= self.hidden,
        }];
        for mask in 1usize..1 << self.p {
            let chosen: Vec<usize> = (0..self.p).filter(|&b| mask >> b & 1 == 1).collect();
            let achieved = numkit::sum_dim(self.n, chosen.iter().map(|&i| &parts[i]), self.rtol)?;
            let required = chosen.iter().map(|&i| self.spec.nu[i]).sum::<usize>() + self.hidden;
            entries.push(LedgerEntry {
                subset: chosen.iter().map(|i| format!("V*_g,{}", i + 1)).collect(),
                achieved,
                required,
                pass: achieved >= required,
            });
        }
        Ok(ConditionLedger::from_entries(entries))
    }

    fn run(&self) -> Result<SolvabilityReport> {
        let eg = self.g.complex_zero_decomposition(FamilyKind::Eg)?;
        let complex_case = self.kind().variant != Variant::A && !eg.pairs.is_empty();
        let form = self.real_form()?;
        let real = self.evaluate(&form)?;
        let mut report = SolvabilityReport {
            problem: self.kind(),
            verdict: real.verdict,
            complex_case,
            hidden_count: self.hidden,
            stages: Vec::new(),
            split: None,
            splits_tried: Vec::new(),
        };
        if self.kind() == (ProblemKind { class: ProblemClass::Three, variant: Variant::C }) {
            let cor = self.corollary_3c()?;
            if cor.verdict != real.verdict {
                return Err(Error::InternalInconsistency(format!(
                    "Problem 3C verdict {} disagrees with its corollary form {}",
                    real.verdict, cor.verdict
                )));
            }
            report.stages.push(Stage { name: "conditions".into(), ledger: self.with_witness(real, &form) });
            report.stages.push(Stage { name: "corollary".into(), ledger: cor });
            if !complex_case {
                return Ok(report);
            }
            report.stages[0].name = "necessary real-case conditions".into();
        } else if !complex_case {
            report.stages.push(Stage { name: "conditions".into(), ledger: self.with_witness(real, &form) });
            return Ok(report);
        } else {
            report.stages.push(Stage { name: "necessary real-case conditions".into(), ledger: real });
        }
        if !report.verdict {
            return Ok(report);
        }
        self.split_search(&eg, &mut report)?;
        Ok(report)
    }

    /// The complex-case conditions: search the count splits (and for
    /// Problem 3B the assigned subsets) in lexicographic order and keep the
    /// first that passes.
    fn split_search(&self, eg: &ComplexDecomposition, report: &mut SolvabilityReport) -> Result<()> {
        let c = eg.pairs.len();
        let kind = self.kind();
        let decomps: Vec<ComplexDecomposition> = match (kind.class, kind.variant) {
            (ProblemClass::Two, Variant::C) => {
                (0..self.p).map(|i| self.g.complex_zero_decomposition(FamilyKind::L(i))).collect::<Result<_>>()?
            }
            (ProblemClass::Three, Variant::C) => {
                (0..self.p).map(|i| self.g.complex_zero_decomposition(FamilyKind::T(i))).collect::<Result<_>>()?
            }
            _ => Vec::new(),
        };
        let r_star_i: Vec<SubspaceBasis> = if kind == (ProblemKind { class: ProblemClass::One, variant: Variant::C }) {
            (0..self.p).map(|i| self.g.r_star_i(i)).collect::<Result<_>>()?
        } else {
            Vec::new()
        };

        // Problem 3B: units are single real modes or conjugate pairs.
        let units: Vec<(usize, usize, usize)> = if kind.class == ProblemClass::Three && kind.variant == Variant::B {
            self.observable
                .iter()
                .enumerate()
                .flat_map(|(i, l)| {
                    l.primaries.iter().map(move |&k| {
                        let size = 1 + l.partner_of.iter().filter(|s| **s == Some(k)).count();
                        (i, k, size)
                    })
                })
                .collect()
        } else {
            Vec::new()
        };
        if units.len() >= 16 {
            return Err(Error::ProblemTooLarge(format!("{} assignable units in Problem 3B", units.len())));
        }
        let unit_masks: Vec<usize> = if units.is_empty() { vec![0] } else { (0..1usize << units.len()).collect() };

        let mut configs: Vec<(usize, Vec<Vec<usize>>)> = Vec::new();
        for &mask in &unit_masks {
            let hidden = if units.is_empty() {
                self.hidden
            } else {
                let used: usize = units.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, u)| u.2).sum();
                self.n - used
            };
            let mut options = vec![count_splits(hidden, c)];
            for d in &decomps {
                let i = options.len() - 1;
                options.push(count_splits(self.spec.nu[i], d.pairs.len()));
            }
            let total: usize = options.iter().map(Vec::len).product();
            if configs.len() + total > MAX_CONFIGURATIONS {
                return Err(Error::ProblemTooLarge(format!("more than {MAX_CONFIGURATIONS} count splits")));
            }
            configs.extend(cartesian(&options).into_iter().map(|c| (mask, c)));
        }

        let mut first: Option<(String, ConditionLedger)> = None;
        for (mask, split) in configs {
            let mut fam = CountedFamily::new();
            push_decomposition(&mut fam, eg, "E_g", &split[0]);
            let mut selected = Vec::new();
            match (kind.class, kind.variant) {
                (ProblemClass::Three, Variant::B) => {
                    for (b, &(i, k, _)) in units.iter().enumerate() {
                        if mask >> b & 1 == 1 {
                            selected.push((i, k));
                        }
                    }
                    for (i, l) in self.observable.iter().enumerate() {
                        l.push_into(&mut fam, |k| selected.contains(&(i, k)));
                    }
                }
                (_, Variant::B) => {
                    for l in &self.observable {
                        l.push_into(&mut fam, |_| true);
                    }
                }
                (ProblemClass::One, Variant::C) => {
                    for (i, r) in r_star_i.iter().enumerate() {
                        fam.push(format!("R*_{}", i + 1), r.clone(), self.spec.nu[i]);
                    }
                }
                (class, _) => {
                    let name = if class == ProblemClass::Two { "L" } else { "T" };
                    for (i, d) in decomps.iter().enumerate() {
                        push_decomposition(&mut fam, d, &format!("{name}_{}", i + 1), &split[i + 1]);
                    }
                }
            }
            let mut label = format!("hidden={}", split_label(&split[0]));
            for (i, s) in split.iter().enumerate().skip(1) {
                label.push_str(&format!(" out{}={}", i, split_label(s)));
            }
            let selected_labels: Vec<String> =
                selected.iter().map(|&(i, k)| self.observable[i].spans[k].0.clone()).collect();
            if !units.is_empty() {
                label.push_str(&format!(" assigned={{{}}}", selected_labels.join(",")));
            }
            let l = ledger::check_counted_with(&fam, self.rtol, self.mode)?;
            report.splits_tried.push(SplitOutcome {
                split: label.clone(),
                verdict: l.verdict,
                first_failure: l.first_failure().cloned(),
            });
            if l.verdict {
                let mut l = l;
                l.witness = transversal::counted_witness(&fam, self.g.seed(), self.rtol).ok();
                let mut selected_modes = Vec::new();
                for &(i, k) in &selected {
                    selected_modes.push((i, k));
                    for (q, src) in self.observable[i].partner_of.iter().enumerate() {
                        if *src == Some(k) {
                            selected_modes.push((i, q));
                        }
                    }
                }
                report.split = Some(ComplexSplit {
                    zeros: eg.pairs.iter().map(|(z, _, _)| CValue(*z)).collect(),
                    hidden: split[0].clone(),
                    outputs: split[1..].to_vec(),
                    selected: (!units.is_empty()).then_some(selected_labels),
                    selected_modes,
                });
                report.stages.push(Stage { name: format!("split {label}"), ledger: l });
                report.verdict = true;
                return Ok(());
            }
            if first.is_none() {
                first = Some((label, l));
            }
        }
        report.verdict = false;
        if let Some((label, l)) = first {
            report.stages.push(Stage { name: format!("split {label}"), ledger: l });
        }
        Ok(())
    }
}
