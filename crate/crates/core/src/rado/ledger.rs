use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::json::CValue;
use crate::numkit::{self, SubspaceBasis};

/// Largest number of ledger entries evaluated for one family.
pub const MAX_ENTRIES: usize = 1 << 20;

/// A subspace from which `count` independent vectors are wanted.
#[derive(Clone, Debug)]
pub struct Member {
    pub label: String,
    pub span: SubspaceBasis,
    pub count: usize,
    /// Index of an earlier member whose conjugate this member is. Only the
    /// witness extraction uses it; the dimension conditions do not.
    pub partner: Option<usize>,
}

impl Member {
    pub fn new(label: impl Into<String>, span: SubspaceBasis, count: usize) -> Self {
        Member {
            label: label.into(),
            span,
            count,
            partner: None,
        }
    }
}

/// Members plus an optional ground subspace (`V*_g` or `E_g`) with its own
/// count.
#[derive(Clone, Debug, Default)]
pub struct CountedFamily {
    pub members: Vec<Member>,
    pub ground: Option<Member>,
}

impl CountedFamily {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_ground(label: impl Into<String>, span: SubspaceBasis, count: usize) -> Self {
        CountedFamily {
            members: Vec::new(),
            ground: Some(Member::new(label, span, count)),
        }
    }

    pub fn push(&mut self, label: impl Into<String>, span: SubspaceBasis, count: usize) -> usize {
        self.members.push(Member::new(label, span, count));
        self.members.len() - 1
    }

    /// Adds the conjugate of member `of` with the same count.
    pub fn push_conjugate(&mut self, label: impl Into<String>, of: usize) -> usize {
        let src = &self.members[of];
        let m = Member {
            label: label.into(),
            span: src.span.conj(),
            count: src.count,
            partner: Some(of),
        };
        self.members.push(m);
        self.members.len() - 1
    }

    pub fn total_count(&self) -> usize {
        self.members.iter().chain(&self.ground).map(|m| m.count).sum()
    }

    fn all(&self) -> impl Iterator<Item = &Member> {
        self.ground.iter().chain(&self.members)
    }

    /// Common ambient dimension, or `None` for an empty family.
    pub fn ambient(&self) -> Result<Option<usize>> {
        let mut dims = self.all().map(|m| m.span.ambient_dim());
        let Some(first) = dims.next() else {
            return Ok(None);
        };
        if let Some(bad) = dims.find(|&d| d != first) {
            return Err(Error::DimensionMismatch(format!(
                "family mixes ambient dimensions {first} and {bad}"
            )));
        }
        Ok(Some(first))
    }
}

/// One instance of a dimension inequality.
#[derive(Clone, Debug, Serialize)]
pub struct LedgerEntry {
    pub subset: Vec<String>,
    pub achieved: usize,
    pub required: usize,
    pub pass: bool,
}

/// A witness vector together with the member it was drawn from.
#[derive(Clone, Debug, Serialize)]
pub struct WitnessVector {
    pub member: String,
    pub vector: Vec<CValue>,
}

/// Every inequality that was evaluated, in canonical subset order.
#[derive(Clone, Debug, Serialize)]
pub struct ConditionLedger {
    pub verdict: bool,
    pub entries: Vec<LedgerEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<WitnessVector>>,
}

impl ConditionLedger {
    pub(crate) fn from_entries(entries: Vec<LedgerEntry>) -> Self {
        ConditionLedger {
            verdict: entries.iter().all(|e| e.pass),
            entries,
            witness: None,
        }
    }

    pub fn first_failure(&self) -> Option<&LedgerEntry> {
        self.entries.iter().find(|e| !e.pass)
    }
}

/// Members with equal spans merged (counts summed), zero counts dropped.
fn merged(members: &[&Member], rtol: f64) -> Result<Vec<Member>> {
    let mut out: Vec<Member> = Vec::new();
    for m in members.iter().filter(|m| m.count > 0) {
        let mut hit = None;
        for (k, o) in out.iter().enumerate() {
            if o.span.same_as(&m.span, rtol)? {
                hit = Some(k);
                break;
            }
        }
        match hit {
            Some(k) => {
                let o = &mut out[k];
                o.count += m.count;
                if !o.label.split(" | ").any(|l| l == m.label) {
                    o.label = format!("{} | {}", o.label, m.label);
                }
            }
            None => out.push(Member::new(m.label.clone(), m.span.clone(), m.count)),
        }
    }
    Ok(out)
}

fn subset_entry(units: &[Member], ambient: usize, mask: usize, required: usize, rtol: f64) -> Result<LedgerEntry> {
    let chosen: Vec<&Member> = (0..units.len()).filter(|&b| mask >> b & 1 == 1).map(|b| &units[b]).collect();
    let achieved = numkit::sum_dim(ambient, chosen.iter().map(|m| &m.span), rtol)?;
    Ok(LedgerEntry {
        subset: chosen.iter().map(|m| m.label.clone()).collect(),
        achieved,
        required,
        pass: achieved >= required,
    })
}

fn too_large(units: usize) -> Result<()> {
    if units >= usize::BITS as usize - 1 || (1usize << units) > MAX_ENTRIES {
        return Err(Error::ProblemTooLarge(format!(
            "{units} distinct members give more than {MAX_ENTRIES} subsets"
        )));
    }
    Ok(())
}

/// Radó-type test: for every nonempty subset `S` of the (merged) members,
/// ground included as an ordinary member, `dim sum_{S} span >= sum_{S} count`.
pub fn check_counted(family: &CountedFamily, rtol: f64) -> Result<ConditionLedger> {
    check_counted_with(family, rtol, Execution::default())
}

pub fn check_counted_with(family: &CountedFamily, rtol: f64, mode: Execution) -> Result<ConditionLedger> {
    let Some(ambient) = family.ambient()? else {
        return Ok(ConditionLedger::from_entries(Vec::new()));
    };
    let all: Vec<&Member> = family.all().collect();
    let units = merged(&all, rtol)?;
    too_large(units.len())?;
    let entries = exec::try_map_indexed(mode, (1usize << units.len()) - 1, |k| {
        let mask = k + 1;
        let required = (0..units.len()).filter(|&b| mask >> b & 1 == 1).map(|b| units[b].count).sum();
        subset_entry(&units, ambient, mask, required, rtol)
    })?;
    Ok(ConditionLedger::from_entries(entries))
}

/// Bounded selection with a ground subspace: `n - q` vectors from `ground`
/// (`q` = total member count) and the rest from distinct member copies.
///
/// Holds iff `dim(ground + sum_S span) >= n - q + card S` for every `S`
/// with `card S > h - (n - q)`, `h = dim ground`. The ground-only entry
/// `h >= n - q` is recorded first.
pub fn check_bounded(family: &CountedFamily, ground: &SubspaceBasis, n: usize, rtol: f64) -> Result<ConditionLedger> {
    check_bounded_with(family, ground, n, rtol, Execution::default())
}

pub fn check_bounded_with(
    family: &CountedFamily,
    ground: &SubspaceBasis,
    n: usize,
    rtol: f64,
    mode: Execution,
) -> Result<ConditionLedger> {
    if ground.ambient_dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "ground lives in dimension {}, expected {n}",
            ground.ambient_dim()
        )));
    }
    if let Some(a) = family.ambient()? {
        if a != n {
            return Err(Error::DimensionMismatch(format!("members live in dimension {a}, expected {n}")));
        }
    }
    let members: Vec<&Member> = family.members.iter().collect();
    let units = merged(&members, rtol)?;
    too_large(units.len())?;
    let q: usize = units.iter().map(|m| m.count).sum();
    let h = ground.dim();
    // `n - q` is negative when the bounds exceed the state dimension.
    let base = n as i64 - q as i64;
    if (h as i64) < base {
        return Err(Error::InfeasibleCounts(format!(
            "ground has dimension {h} but n - q = {base}"
        )));
    }
    let threshold = h as i64 - base;
    let masks: Vec<usize> = (1usize..1 << units.len())
        .filter(|&mask| {
            let card: usize = (0..units.len()).filter(|&b| mask >> b & 1 == 1).map(|b| units[b].count).sum();
            card as i64 > threshold
        })
        .collect();
    let label = family.ground.as_ref().map_or_else(|| "ground".to_string(), |g| g.label.clone());
    let with_ground: Vec<Member> = std::iter::once(Member::new(label.clone(), ground.clone(), 0))
        .chain(units.iter().cloned())
        .collect();
    let mut entries = vec![LedgerEntry {
        subset: vec![label],
        achieved: h,
        required: base.max(0) as usize,
        pass: true,
    }];
    entries.extend(exec::try_map_indexed(mode, masks.len(), |k| {
        let mask = masks[k];
        let card: usize = (0..units.len()).filter(|&b| mask >> b & 1 == 1).map(|b| units[b].count).sum();
        subset_entry(&with_ground, n, (mask << 1) | 1, (base + card as i64).max(0) as usize, rtol)
    })?);
    Ok(ConditionLedger::from_entries(entries))
}
