//! Problem specifications: which decoupling problem is posed, with which
//! counts and which prescribed eigenvalues.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json::CValue;
use crate::numkit::C64;
use crate::pencil::{self, ZeroStructure};
use crate::sysmodel::{LtiSystem, StabilityRegion};

/// Exact counts (1), exact counts with free eigenvector directions at
/// zeros (2), or upper bounds on the counts (3).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProblemClass {
    One,
    Two,
    Three,
}

/// A: every eigenvalue prescribed. B: observable eigenvalues prescribed,
/// hidden ones free. C: nothing prescribed beyond counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    A,
    B,
    C,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProblemKind {
    pub class: ProblemClass,
    pub variant: Variant,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 9] = {
        use ProblemClass::*;
        use Variant::*;
        [
            ProblemKind { class: One, variant: A },
            ProblemKind { class: One, variant: B },
            ProblemKind { class: One, variant: C },
            ProblemKind { class: Two, variant: A },
            ProblemKind { class: Two, variant: B },
            ProblemKind { class: Two, variant: C },
            ProblemKind { class: Three, variant: A },
            ProblemKind { class: Three, variant: B },
            ProblemKind { class: Three, variant: C },
        ]
    };

    /// Problems 1 and 2 fix the observable counts exactly.
    pub fn exact_counts(self) -> bool {
        self.class != ProblemClass::Three
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self.class {
            ProblemClass::One => '1',
            ProblemClass::Two => '2',
            ProblemClass::Three => '3',
        };
        let v = match self.variant {
            Variant::A => 'A',
            Variant::B => 'B',
            Variant::C => 'C',
        };
        write!(f, "{c}{v}")
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProblemKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| Error::Parse(format!("unknown problem '{s}', expected one of 1A..3C")))
    }
}

impl Serialize for ProblemKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ProblemKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A posed problem. Outputs are 0-based here and 1-based in files.
///
/// `nu[i]` is the exact count for Problems 1 and 2 and the upper bound for
/// Problem 3. `modes[i]` lists the eigenvalues observable from output `i`
/// (variants A and B), `unobservable` the hidden ones (variant A).
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub nu: Vec<usize>,
    pub modes: Vec<Vec<C64>>,
    pub unobservable: Vec<C64>,
    pub region: Option<StabilityRegion>,
}

/// JSON form of a [`ProblemSpec`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub problem: ProblemKind,
    pub nu: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<Vec<Vec<CValue>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unobservable_modes: Option<Vec<CValue>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<String>,
}

impl ProblemFile {
    pub fn into_spec(self) -> Result<ProblemSpec> {
        let region = self.region.as_deref().map(StabilityRegion::parse).transpose()?;
        Ok(ProblemSpec {
            kind: self.problem,
            nu: self.nu,
            modes: self
                .modes
                .unwrap_or_default()
                .into_iter()
                .map(|l| l.into_iter().map(|z| z.0).collect())
                .collect(),
            unobservable: self.unobservable_modes.unwrap_or_default().into_iter().map(|z| z.0).collect(),
            region,
        })
    }

    pub fn from_spec(spec: &ProblemSpec) -> Self {
        let list = |l: &[C64]| l.iter().map(|&z| CValue(z)).collect::<Vec<_>>();
        ProblemFile {
            problem: spec.kind,
            nu: spec.nu.clone(),
            modes: (!spec.modes.is_empty()).then(|| spec.modes.iter().map(|l| list(l)).collect()),
            unobservable_modes: (spec.kind.variant == Variant::A).then(|| list(&spec.unobservable)),
            region: spec.region.as_ref().map(|r| r.name()),
        }
    }
}

pub fn load_problem(json: &str) -> Result<ProblemSpec> {
    let file: ProblemFile = serde_json::from_str(json).map_err(|e| Error::Parse(e.to_string()))?;
    file.into_spec()
}

/// Pairs each complex entry of `list` having negative imaginary part with a
/// distinct conjugate entry. Returns `(index, partner index)` pairs, or
/// `None` when the list is not closed under conjugation.
pub fn conjugate_pairs(list: &[C64]) -> Option<Vec<(usize, usize)>> {
    let mut used = vec![false; list.len()];
    let mut pairs = Vec::new();
    for (k, &z) in list.iter().enumerate() {
        if z.im >= 0.0 {
            continue;
        }
        let partner = (0..list.len()).find(|&l| !used[l] && list[l].im > 0.0 && pencil::near(list[l], z.conj()))?;
        used[partner] = true;
        used[k] = true;
        pairs.push((k, partner));
    }
    let closed = list.iter().zip(&used).all(|(z, &u)| u || z.im == 0.0);
    closed.then_some(pairs)
}

impl ProblemSpec {
    pub fn total_observable(&self) -> usize {
        self.nu.iter().sum()
    }

    /// `n - sum nu`: the hidden count for Problems 1 and 2 and its lower
    /// bound for Problem 3.
    pub fn nu0(&self, n: usize) -> usize {
        n.saturating_sub(self.total_observable())
    }

    pub fn region_or(&self, sys: &LtiSystem) -> StabilityRegion {
        self.region.clone().unwrap_or_else(|| StabilityRegion::standard(sys.domain))
    }

    /// Checks the spec against the system dimensions, its zeros and the
    /// stability region.
    pub fn validate(&self, sys: &LtiSystem, zeros: &ZeroStructure, region: &StabilityRegion) -> Result<()> {
        let bad = |msg: String| Err(Error::BadSpec(msg));
        let (n, p) = (sys.n(), sys.p());
        if self.nu.len() != p {
            return bad(format!("nu has {} entries, the system has {p} outputs", self.nu.len()));
        }
        let total = self.total_observable();
        if total > n {
            return bad(format!("counts sum to {total}, more than n = {n}"));
        }
        match self.kind.variant {
            Variant::A | Variant::B => {
                if self.modes.len() != p {
                    return bad(format!("modes has {} lists, expected {p}", self.modes.len()));
                }
                for (i, (l, &k)) in self.modes.iter().zip(&self.nu).enumerate() {
                    if l.len() != k {
                        return bad(format!("output {} lists {} modes but nu = {k}", i + 1, l.len()));
                    }
                }
            }
            Variant::C => {
                if self.modes.iter().any(|l| !l.is_empty()) {
                    return bad("variant C takes no modes".into());
                }
            }
        }
        match self.kind.variant {
            Variant::A => {
                if self.unobservable.len() != n - total {
                    return bad(format!(
                        "variant A needs exactly {} unobservable modes, got {}",
                        n - total,
                        self.unobservable.len()
                    ));
                }
            }
            Variant::B | Variant::C => {
                if !self.unobservable.is_empty() {
                    return bad(format!("variant {:?} takes no unobservable modes", self.kind.variant));
                }
            }
        }
        let lists = self.modes.iter().map(Vec::as_slice).chain(std::iter::once(self.unobservable.as_slice()));
        for l in lists {
            if conjugate_pairs(l).is_none() {
                return bad("complex modes must come in conjugate pairs within the same list".into());
            }
            for &z in l {
                if !z.re.is_finite() || !z.im.is_finite() {
                    return bad("non-finite mode".into());
                }
                if !region.contains(z) {
                    return bad(format!("mode {z} lies outside the stability region {}", region.name()));
                }
            }
        }
        if self.kind.class == ProblemClass::One {
            for (i, l) in self.modes.iter().enumerate() {
                if let Some(&z) = l.iter().find(|&&z| zeros.is_zero(z)) {
                    return bad(format!("mode {z} of output {} is an invariant zero", i + 1));
                }
            }
        }
        Ok(())
    }
}
