use crate::error::{Error, Result};
use crate::json::CValue;
use crate::numkit::{self, CMatrix, CVector, C64};
use crate::rng::{self, StageRng};

use super::ledger::{CountedFamily, WitnessVector};

/// Draws per extraction before giving up.
pub const MAX_RETRIES: usize = 50;

/// A set to draw from: a linear span, or the affine set
/// `particular + span(directions)`.
#[derive(Clone, Debug)]
pub enum TransversalSet {
    Linear(CMatrix),
    Affine { particular: CVector, directions: CMatrix },
}

impl TransversalSet {
    pub fn len(&self) -> usize {
        match self {
            TransversalSet::Linear(m) => m.nrows(),
            TransversalSet::Affine { particular, .. } => particular.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            TransversalSet::Linear(m) => m.ncols() == 0,
            TransversalSet::Affine { .. } => false,
        }
    }

    /// One generic element. Real sets get real coefficients and the real
    /// part of the result, which stays in the set when it is closed under
    /// conjugation.
    pub fn draw(&self, real: bool, rng: &mut StageRng) -> CVector {
        self.draw_with(real, rng).0
    }

    /// [`draw`](Self::draw), also returning the coefficient vector.
    pub fn draw_with(&self, real: bool, rng: &mut StageRng) -> (CVector, CVector) {
        let coef = |rng: &mut StageRng, k: usize| {
            if real {
                CVector::from_fn(k, |_, _| C64::new(rng::gaussian(rng), 0.0))
            } else {
                CVector::from_fn(k, |_, _| C64::new(rng::gaussian(rng), rng::gaussian(rng)))
            }
        };
        let (v, k) = match self {
            TransversalSet::Linear(m) => {
                let k = coef(rng, m.ncols());
                (m * &k, k)
            }
            TransversalSet::Affine { particular, directions } => {
                let k = coef(rng, directions.ncols());
                (particular + directions * &k, k)
            }
        };
        if real {
            (v.map(|z| C64::new(z.re, 0.0)), k)
        } else {
            (v, k)
        }
    }
}

#[derive(Clone, Debug)]
pub struct TransversalMember {
    pub label: String,
    pub set: TransversalSet,
    pub count: usize,
    /// Earlier member whose draws this member takes the conjugates of.
    pub partner: Option<usize>,
    pub real: bool,
}

/// Sets over `C^len`, of which the first `state_dim` coordinates are the
/// ones that must be independent (the rest carry the input part of a
/// pencil kernel).
#[derive(Clone, Debug)]
pub struct TransversalFamily {
    pub state_dim: usize,
    pub members: Vec<TransversalMember>,
}

/// One vector per unit of count, tagged with its member index.
#[derive(Clone, Debug)]
pub struct Transversal {
    pub vectors: Vec<(usize, CVector)>,
}

impl Transversal {
    pub fn state_matrix(&self, state_dim: usize) -> CMatrix {
        let mut m = CMatrix::zeros(state_dim, self.vectors.len());
        for (k, (_, v)) in self.vectors.iter().enumerate() {
            m.set_column(k, &v.rows(0, state_dim));
        }
        m
    }
}

fn validate(family: &TransversalFamily) -> Result<()> {
    for (k, m) in family.members.iter().enumerate() {
        if m.set.len() < family.state_dim {
            return Err(Error::DimensionMismatch(format!(
                "member '{}' has {} coordinates, fewer than {}",
                m.label,
                m.set.len(),
                family.state_dim
            )));
        }
        if let Some(p) = m.partner {
            let ok = p < k && family.members[p].count == m.count && family.members[p].set.len() == m.set.len();
            if !ok {
                return Err(Error::InternalInconsistency(format!(
                    "member '{}' has an invalid conjugate partner",
                    m.label
                )));
            }
        }
    }
    Ok(())
}

fn draw_all(family: &TransversalFamily, rng: &mut StageRng) -> Vec<(usize, CVector)> {
    let mut out: Vec<(usize, CVector)> = Vec::new();
    let mut first = vec![0usize; family.members.len()];
    for (k, m) in family.members.iter().enumerate() {
        first[k] = out.len();
        for c in 0..m.count {
            let v = match m.partner {
                Some(p) => out[first[p] + c].1.map(|z| z.conj()),
                None => m.set.draw(m.real, rng),
            };
            out.push((k, v));
        }
    }
    out
}

/// Draws one element per unit of count until the state parts are linearly
/// independent at `rtol`.
pub fn extract_transversal(family: &TransversalFamily, seed: u64, rtol: f64) -> Result<Transversal> {
    validate(family)?;
    let total: usize = family.members.iter().map(|m| m.count).sum();
    if total == 0 {
        return Ok(Transversal { vectors: Vec::new() });
    }
    if total > family.state_dim {
        return Err(Error::NoWitness(0));
    }
    let mut rng = rng::stream(seed, rng::TRANSVERSAL);
    for _ in 0..MAX_RETRIES {
        let vectors = draw_all(family, &mut rng);
        let t = Transversal { vectors };
        let v = t.state_matrix(family.state_dim);
        if numkit::rank_of(&v, rtol)? == total {
            return Ok(t);
        }
    }
    Err(Error::NoWitness(MAX_RETRIES))
}

/// Witness for a counted family: one vector per unit of count from each
/// member span (the ground first), conjugate partners respected and
/// self-conjugate spans sampled with real vectors.
pub fn counted_witness(family: &CountedFamily, seed: u64, rtol: f64) -> Result<Vec<WitnessVector>> {
    let Some(n) = family.ambient()? else {
        return Ok(Vec::new());
    };
    let offset = usize::from(family.ground.is_some());
    let mut members = Vec::new();
    for (k, m) in family.ground.iter().chain(&family.members).enumerate() {
        let partner = if k < offset { None } else { m.partner.map(|p| p + offset) };
        let real_basis = if partner.is_none() { m.span.real_basis(rtol)? } else { None };
        let (set, real) = match real_basis {
            Some(r) => (TransversalSet::Linear(numkit::to_complex(&r)), true),
            None => (TransversalSet::Linear(m.span.basis().clone()), false),
        };
        members.push(TransversalMember {
            label: m.label.clone(),
            set,
            count: m.count,
            partner,
            real,
        });
    }
    let family_t = TransversalFamily { state_dim: n, members };
    let t = extract_transversal(&family_t, seed, rtol)?;
    Ok(t.vectors
        .into_iter()
        .map(|(k, v)| WitnessVector {
            member: family_t.members[k].label.clone(),
            vector: v.iter().map(|&z| CValue(z)).collect(),
        })
        .collect())
}
