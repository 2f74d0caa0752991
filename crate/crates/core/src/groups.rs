//! Overlapping group structures and group-support bookkeeping.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default limit on the number of groups for exhaustive enumeration.
pub const DEFAULT_ENUM_GUARD: usize = 20;

/// A collection of possibly overlapping index sets over `0..p`.
///
/// Groups are stored as sorted, de-duplicated coordinate lists. A group's id
/// is its position in the list. Layouts are immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLayout", into = "RawLayout")]
pub struct GroupLayout {
    p: usize,
    groups: Vec<Vec<usize>>,
    covers_ambient: bool,
    disjoint: bool,
}

#[derive(Serialize, Deserialize)]
struct RawLayout {
    p: usize,
    groups: Vec<Vec<usize>>,
}

impl TryFrom<RawLayout> for GroupLayout {
    type Error = Error;

    fn try_from(raw: RawLayout) -> Result<Self> {
        GroupLayout::new(raw.p, raw.groups)
    }
}

impl From<GroupLayout> for RawLayout {
    fn from(layout: GroupLayout) -> Self {
        RawLayout {
            p: layout.p,
            groups: layout.groups,
        }
    }
}

impl GroupLayout {
    /// Validates and normalizes a layout.
    ///
    /// Rejects `p == 0`, an empty group list, empty groups and indices `>= p`.
    pub fn new(p: usize, groups: Vec<Vec<usize>>) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidLayout(
                "ambient dimension p must be positive".into(),
            ));
        }
        if groups.is_empty() {
            return Err(Error::InvalidLayout(
                "at least one group is required".into(),
            ));
        }
        let mut covered = vec![false; p];
        let mut total = 0usize;
        let mut normalized = Vec::with_capacity(groups.len());
        for (id, mut group) in groups.into_iter().enumerate() {
            if group.is_empty() {
                return Err(Error::InvalidLayout(format!("group {id} is empty")));
            }
            group.sort_unstable();
            group.dedup();
            if let Some(&last) = group.last() {
                if last >= p {
                    return Err(Error::IndexOutOfRange {
                        index: last,
                        dim: p,
                    });
                }
            }
            for &j in &group {
                covered[j] = true;
            }
            total += group.len();
            normalized.push(group);
        }
        let union = covered.iter().filter(|&&c| c).count();
        Ok(GroupLayout {
            p,
            groups: normalized,
            covers_ambient: union == p,
            disjoint: union == total,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Number of groups `M`.
    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn group(&self, id: usize) -> &[usize] {
        &self.groups[id]
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    /// True iff the groups jointly cover every coordinate `0..p`.
    pub fn covers_ambient(&self) -> bool {
        self.covers_ambient
    }

    /// True iff no coordinate belongs to more than one group.
    pub fn is_disjoint(&self) -> bool {
        self.disjoint
    }

    pub fn max_group_size(&self) -> usize {
        self.groups.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn contains(&self, id: usize, coord: usize) -> bool {
        self.groups[id].binary_search(&coord).is_ok()
    }

    /// Sorted union of the coordinates of the listed groups.
    pub fn union_coords(&self, ids: &[usize]) -> Vec<usize> {
        let mut mask = vec![false; self.p];
        for &id in ids {
            for &j in &self.groups[id] {
                mask[j] = true;
            }
        }
        mask_to_indices(&mask)
    }

    pub(crate) fn check_group_id(&self, id: usize) -> Result<()> {
        if id >= self.groups.len() {
            return Err(Error::IndexOutOfRange {
                index: id,
                dim: self.groups.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_budget(&self, what: &'static str, k: usize) -> Result<()> {
        if k == 0 || k > self.groups.len() {
            return Err(Error::BudgetOutOfRange {
                what,
                value: k,
                lo: 1,
                hi: self.groups.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_vector(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                got: v.len(),
            });
        }
        Ok(())
    }
}

pub(crate) fn mask_to_indices(mask: &[bool]) -> Vec<usize> {
    mask.iter()
        .enumerate()
        .filter_map(|(j, &m)| m.then_some(j))
        .collect()
}

/// Indices of the nonzero entries of `w`.
pub fn support(w: &[f64]) -> Vec<usize> {
    w.iter()
        .enumerate()
        .filter_map(|(j, &x)| (x != 0.0).then_some(j))
        .collect()
}

/// An explicit group-support: a set of group ids and the union of their
/// coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSupport {
    /// Sorted ascending.
    pub group_ids: Vec<usize>,
    /// Sorted ascending union of the referenced groups.
    pub coords: Vec<usize>,
}

impl GroupSupport {
    pub fn empty() -> Self {
        GroupSupport {
            group_ids: Vec::new(),
            coords: Vec::new(),
        }
    }

    pub fn from_groups(layout: &GroupLayout, ids: &[usize]) -> Result<Self> {
        for &id in ids {
            layout.check_group_id(id)?;
        }
        let mut group_ids = ids.to_vec();
        group_ids.sort_unstable();
        group_ids.dedup();
        let coords = layout.union_coords(&group_ids);
        Ok(GroupSupport { group_ids, coords })
    }

    /// Number of groups in this representation.
    pub fn size(&self) -> usize {
        self.group_ids.len()
    }

    pub fn contains_coord(&self, j: usize) -> bool {
        self.coords.binary_search(&j).is_ok()
    }
}

/// Bounds on `s`, the largest support of a `k`-group-sparse vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaxSupportEstimate {
    /// Sum of the `k` largest group sizes.
    pub upper_bound: usize,
    /// Size of the union picked by greedy max-coverage.
    pub greedy_estimate: usize,
}

/// Bounds the largest support a `k`-group-sparse vector can have.
///
/// Exact max-coverage is intractable, so this reports the sum of the `k`
/// largest group sizes together with a greedy coverage estimate.
pub fn max_support_size(layout: &GroupLayout, k: usize) -> Result<MaxSupportEstimate> {
    layout.check_budget("k", k)?;
    let mut sizes: Vec<usize> = layout.groups().iter().map(Vec::len).collect();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    let upper_bound = sizes[..k].iter().sum();

    let mut covered = vec![false; layout.p()];
    let mut chosen = vec![false; layout.num_groups()];
    let mut greedy_estimate = 0;
    for _ in 0..k {
        let mut best: Option<(usize, usize)> = None;
        for (id, group) in layout.groups().iter().enumerate() {
            if chosen[id] {
                continue;
            }
            let gain = group.iter().filter(|&&j| !covered[j]).count();
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((id, gain));
            }
        }
        let (id, gain) = best.expect("k <= M leaves an unchosen group");
        chosen[id] = true;
        for &j in layout.group(id) {
            covered[j] = true;
        }
        greedy_estimate += gain;
    }
    Ok(MaxSupportEstimate {
        upper_bound,
        greedy_estimate,
    })
}

/// `z(S)`: squared norm of `g` over the union of the groups in `selected`.
pub fn coverage_energy(selected: &[usize], g: &[f64], layout: &GroupLayout) -> Result<f64> {
    layout.check_vector(g)?;
    for &id in selected {
        layout.check_group_id(id)?;
    }
    Ok(layout
        .union_coords(selected)
        .into_iter()
        .map(|j| g[j] * g[j])
        .sum())
}

/// Smallest number of groups whose union contains `supp(w)`.
///
/// Enumerates subsets by increasing size, so it is only usable on small
/// layouts; `max_groups` guards the enumeration.
pub fn group_l0_bruteforce(w: &[f64], layout: &GroupLayout, max_groups: usize) -> Result<usize> {
    layout.check_vector(w)?;
    let m = layout.num_groups();
    if m > max_groups {
        return Err(Error::GuardExceeded {
            groups: m,
            guard: max_groups,
        });
    }
    let supp = support(w);
    if supp.is_empty() {
        return Ok(0);
    }

    // Bitset over the positions of `supp`, one per group.
    let words = supp.len().div_ceil(64);
    let position = |j: usize| supp.binary_search(&j).ok();
    let masks: Vec<Vec<u64>> = layout
        .groups()
        .iter()
        .map(|group| {
            let mut bits = vec![0u64; words];
            for &j in group {
                if let Some(pos) = position(j) {
                    bits[pos / 64] |= 1 << (pos % 64);
                }
            }
            bits
        })
        .collect();
    let mut full = vec![u64::MAX; words];
    if !supp.len().is_multiple_of(64) {
        full[words - 1] = (1u64 << (supp.len() % 64)) - 1;
    }

    let mut acc = vec![0u64; words];
    for size in 1..=m {
        for combo in (0..m).combinations(size) {
            acc.iter_mut().for_each(|a| *a = 0);
            for &id in &combo {
                for (a, b) in acc.iter_mut().zip(&masks[id]) {
                    *a |= b;
                }
            }
            if acc == full {
                return Ok(size);
            }
        }
    }
    Err(Error::Uncoverable)
}
