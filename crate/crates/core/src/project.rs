//! Projections onto group-sparse and sparse-overlapping-group sets.
//!
//! All projectors share one output shape, [`ProjectionOutcome`]: the
//! projected vector equals the input on the kept coordinates and is zero
//! everywhere else. Argmax ties are broken by the lowest index.

use std::cmp::Ordering;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groups::{GroupLayout, GroupSupport, DEFAULT_ENUM_GUARD};

/// Budget for sparse overlapping groups: at most `k1` groups, at most `k2`
/// kept coordinates inside each selected group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SogBudget {
    pub k1: usize,
    pub k2: usize,
}

impl SogBudget {
    pub fn validate(&self, layout: &GroupLayout) -> Result<()> {
        layout.check_budget("k1", self.k1)?;
        if self.k2 == 0 {
            return Err(Error::BudgetOutOfRange {
                what: "k2",
                value: 0,
                lo: 1,
                hi: usize::MAX,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionOutcome {
    /// Projected point.
    pub u: Vec<f64>,
    pub selected: GroupSupport,
    /// Group ids in the order they were picked.
    pub selection_order: Vec<usize>,
    /// Energy `‖·‖²` added by each pick, aligned with `selection_order`.
    pub gains: Vec<f64>,
    /// SoG only: kept coordinates of each selected group, aligned with
    /// `selection_order`.
    pub within_group_support: Option<Vec<Vec<usize>>>,
}

impl ProjectionOutcome {
    /// Coordinates on which `u` copies the input: the union of the selected
    /// groups, or of the kept coordinate sets for SoG.
    pub fn kept_coords(&self) -> Vec<usize> {
        match &self.within_group_support {
            None => self.selected.coords.clone(),
            Some(sets) => {
                let mut all: Vec<usize> = sets.iter().flatten().copied().collect();
                all.sort_unstable();
                all.dedup();
                all
            }
        }
    }
}

/// A projection operator together with its budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Projector {
    Greedy { k: usize },
    ExactDisjoint { k: usize },
    Bruteforce { k: usize, guard: usize },
    Sog(SogBudget),
}

impl Projector {
    pub fn bruteforce(k: usize) -> Self {
        Projector::Bruteforce {
            k,
            guard: DEFAULT_ENUM_GUARD,
        }
    }

    /// Maximum number of groups the projector may select.
    pub fn group_budget(&self) -> usize {
        match *self {
            Projector::Greedy { k }
            | Projector::ExactDisjoint { k }
            | Projector::Bruteforce { k, .. } => k,
            Projector::Sog(b) => b.k1,
        }
    }

    pub fn validate(&self, layout: &GroupLayout) -> Result<()> {
        match *self {
            Projector::Greedy { k } => layout.check_budget("k", k),
            Projector::ExactDisjoint { k } => {
                layout.check_budget("k", k)?;
                if !layout.is_disjoint() {
                    return Err(Error::OverlappingGroups);
                }
                Ok(())
            }
            Projector::Bruteforce { k, guard } => {
                layout.check_budget("k", k)?;
                if layout.num_groups() > guard {
                    return Err(Error::GuardExceeded {
                        groups: layout.num_groups(),
                        guard,
                    });
                }
                Ok(())
            }
            Projector::Sog(b) => b.validate(layout),
        }
    }

    pub fn project(&self, g: &[f64], layout: &GroupLayout) -> Result<ProjectionOutcome> {
        match *self {
            Projector::Greedy { k } => greedy_project(g, k, layout),
            Projector::ExactDisjoint { k } => exact_project_disjoint(g, k, layout),
            Projector::Bruteforce { k, guard } => exact_project_bruteforce(g, k, layout, guard),
            Projector::Sog(b) => sog_greedy_project(g, b, layout),
        }
    }
}

fn group_energy(v: &[f64], group: &[usize]) -> f64 {
    group.iter().map(|&j| v[j] * v[j]).sum()
}

/// Index of the unselected group with the largest residual energy.
fn best_group(v: &[f64], layout: &GroupLayout, taken: &[bool]) -> (usize, f64) {
    let mut best: Option<(usize, f64)> = None;
    for (id, group) in layout.groups().iter().enumerate() {
        if taken[id] {
            continue;
        }
        let e = group_energy(v, group);
        if best.is_none_or(|(_, b)| e > b) {
            best = Some((id, e));
        }
    }
    best.expect("budget never exceeds the number of groups")
}

/// Greedy projection onto `k_tilde`-group-sparse vectors.
///
/// Each round picks the unselected group with the largest residual norm,
/// copies the residual on that group into `u` and zeroes it in the residual.
/// Exactly `k_tilde` groups are picked; once the residual is exhausted the
/// remaining picks record zero gain.
pub fn greedy_project(
    g: &[f64],
    k_tilde: usize,
    layout: &GroupLayout,
) -> Result<ProjectionOutcome> {
    layout.check_vector(g)?;
    layout.check_budget("k_tilde", k_tilde)?;

    let mut v = g.to_vec();
    let mut u = vec![0.0; g.len()];
    let mut taken = vec![false; layout.num_groups()];
    let mut order = Vec::with_capacity(k_tilde);
    let mut gains = Vec::with_capacity(k_tilde);

    for _ in 0..k_tilde {
        let (id, gain) = best_group(&v, layout, &taken);
        taken[id] = true;
        for &j in layout.group(id) {
            u[j] += v[j];
            v[j] = 0.0;
        }
        order.push(id);
        gains.push(gain);
    }

    Ok(ProjectionOutcome {
        u,
        selected: GroupSupport::from_groups(layout, &order)?,
        selection_order: order,
        gains,
        within_group_support: None,
    })
}

/// Exact projection for non-overlapping groups: keep the `k` groups with the
/// largest norm.
pub fn exact_project_disjoint(
    g: &[f64],
    k: usize,
    layout: &GroupLayout,
) -> Result<ProjectionOutcome> {
    layout.check_vector(g)?;
    Projector::ExactDisjoint { k }.validate(layout)?;

    let energies: Vec<f64> = layout
        .groups()
        .iter()
        .map(|grp| group_energy(g, grp))
        .collect();
    let mut ids: Vec<usize> = (0..layout.num_groups()).collect();
    // Stable sort keeps the lower id first among equal norms.
    ids.sort_by(|&a, &b| {
        energies[b]
            .partial_cmp(&energies[a])
            .unwrap_or(Ordering::Equal)
    });
    ids.truncate(k);

    let mut u = vec![0.0; g.len()];
    for &id in &ids {
        for &j in layout.group(id) {
            u[j] = g[j];
        }
    }
    Ok(ProjectionOutcome {
        u,
        selected: GroupSupport::from_groups(layout, &ids)?,
        gains: ids.iter().map(|&id| energies[id]).collect(),
        selection_order: ids,
        within_group_support: None,
    })
}

/// Exact projection by enumerating every `k`-subset of groups.
///
/// The winner maximizes the energy of `g` on the union of its groups; ties go
/// to the lexicographically smallest id set.
pub fn exact_project_bruteforce(
    g: &[f64],
    k: usize,
    layout: &GroupLayout,
    max_groups: usize,
) -> Result<ProjectionOutcome> {
    layout.check_vector(g)?;
    Projector::Bruteforce {
        k,
        guard: max_groups,
    }
    .validate(layout)?;

    let p = layout.p();
    let mut mask = vec![false; p];
    let mut best: Option<(Vec<usize>, f64)> = None;
    for combo in (0..layout.num_groups()).combinations(k) {
        mask.iter_mut().for_each(|m| *m = false);
        for &id in &combo {
            for &j in layout.group(id) {
                mask[j] = true;
            }
        }
        let energy: f64 = (0..p).filter(|&j| mask[j]).map(|j| g[j] * g[j]).sum();
        if best.as_ref().is_none_or(|(_, e)| energy > *e) {
            best = Some((combo, energy));
        }
    }
    let (ids, _) = best.expect("k >= 1 yields at least one subset");

    let selected = GroupSupport::from_groups(layout, &ids)?;
    let mut u = vec![0.0; p];
    for &j in &selected.coords {
        u[j] = g[j];
    }
    // Marginal energies when adding the winners in id order.
    let mut covered = vec![false; p];
    let gains = ids
        .iter()
        .map(|&id| {
            layout
                .group(id)
                .iter()
                .filter(|&&j| !std::mem::replace(&mut covered[j], true))
                .map(|&j| g[j] * g[j])
                .sum()
        })
        .collect();

    Ok(ProjectionOutcome {
        u,
        selected,
        selection_order: ids,
        gains,
        within_group_support: None,
    })
}

/// Greedy projection for sparse overlapping groups.
///
/// Each of the `k1` rounds picks the unselected group with the largest
/// residual norm, then keeps only the `k2` largest-magnitude residual entries
/// of that group (ties to the lower coordinate).
pub fn sog_greedy_project(
    g: &[f64],
    budget: SogBudget,
    layout: &GroupLayout,
) -> Result<ProjectionOutcome> {
    layout.check_vector(g)?;
    budget.validate(layout)?;

    let mut v = g.to_vec();
    let mut u = vec![0.0; g.len()];
    let mut taken = vec![false; layout.num_groups()];
    let mut order = Vec::with_capacity(budget.k1);
    let mut gains = Vec::with_capacity(budget.k1);
    let mut kept_sets = Vec::with_capacity(budget.k1);

    for _ in 0..budget.k1 {
        let (id, _) = best_group(&v, layout, &taken);
        taken[id] = true;

        let mut kept = layout.group(id).to_vec();
        if kept.len() > budget.k2 {
            kept.sort_by(|&a, &b| {
                v[b].abs()
                    .partial_cmp(&v[a].abs())
                    .unwrap_or(Ordering::Equal)
                    .then(a.cmp(&b))
            });
            kept.truncate(budget.k2);
            kept.sort_unstable();
        }

        let mut gain = 0.0;
        for &j in &kept {
            gain += v[j] * v[j];
            u[j] += v[j];
            v[j] = 0.0;
        }
        order.push(id);
        gains.push(gain);
        kept_sets.push(kept);
    }

    Ok(ProjectionOutcome {
        u,
        selected: GroupSupport::from_groups(layout, &order)?,
        selection_order: order,
        gains,
        within_group_support: Some(kept_sets),
    })
}
